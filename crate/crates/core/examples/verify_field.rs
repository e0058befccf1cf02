//! Solve the desk problem and run the field checks on the result.
//!
//! ```bash
//! cargo run --release -p renewal-dividend --example verify_field
//! ```

use renewal_dividend::model::{ClaimSize, Interclaim, ModelParams, RenewalSpec};
use renewal_dividend::solver::{build_grid, solve, GridConfig};
use renewal_dividend::verify::{
    check_bounds_and_x_monotonicity, check_class_l, check_time_regularity, check_viscosity_inequalities,
    check_w_inequalities, grid_slack, sample_interior_nodes,
};

fn main() -> renewal_dividend::Result<()> {
    let params = ModelParams {
        premium: 2.0,
        interest: 0.05,
        volatility: 0.3,
        discount: 0.1,
        max_dividend: 3.0,
        horizon: 1.0,
    };
    let spec = RenewalSpec {
        interclaim: Interclaim::Erlang { shape: 2, rate: 2.0 },
        claim: ClaimSize::Exponential { mean: 1.0 },
    };
    let grid = build_grid(&GridConfig::new(200, 400, 20.0), &params, &spec)?;
    let sol = solve(&params, &spec, &grid)?;
    let field = &sol.value;
    println!("solved in {:.2}s", sol.diagnostics.wall_time_secs);

    let slack = grid_slack(field, &params, None);
    let nodes = sample_interior_nodes(field, 500, 7);
    let (visc, stats) = check_viscosity_inequalities(field, &params, &spec, &nodes, slack);
    let reports = [
        check_bounds_and_x_monotonicity(field, &params),
        check_time_regularity(field, &params),
        check_w_inequalities(field, &params, &spec, slack),
        check_class_l(field, &params, 1e-12),
        visc,
    ];
    for r in &reports {
        println!("{}", r.summary());
        if !r.detail.is_empty() {
            println!("     {}", r.detail);
        }
    }
    println!("fitted residual constant C = {:.3}", stats.fitted_constant);
    Ok(())
}
