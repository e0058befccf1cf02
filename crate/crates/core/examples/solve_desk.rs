//! Solve the HJB equation on the desk configuration and print a few values.
//!
//! ```bash
//! cargo run --release -p renewal-dividend --example solve_desk
//! ```

use renewal_dividend::model::{ClaimSize, Interclaim, ModelParams, RenewalSpec};
use renewal_dividend::solver::{build_grid, solve, GridConfig};

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
    println!(
        "grid: n_t={} n_x={} x_max={} substeps={} (sub-step {:.3e})",
        grid.n_t,
        grid.n_x,
        grid.x_max,
        grid.substeps,
        grid.sub_dt()
    );
    let sol = solve(&params, &spec, &grid)?;
    let d = &sol.diagnostics;
    println!(
        "solved in {:.2}s, clipped nodes {}, edge gap {:.3e}",
        d.wall_time_secs, d.total_clipped, d.truncation_gap
    );
    println!("{:>6} {:>6} {:>6} {:>12} {:>6} {:>6}", "s", "x", "w", "V", "gamma", "a");
    for &(k, x, j) in &[(0, 0.0, 0), (0, 1.0, 0), (0, 5.0, 0), (0, 10.0, 0), (100, 2.0, 0), (100, 2.0, 50), (100, 2.0, 100)] {
        let i = (x / grid.dx()).round() as usize;
        let c = sol.policy.control(k, i, j);
        println!(
            "{:>6.3} {:>6.2} {:>6.3} {:>12.6} {:>6} {:>6}",
            grid.s(k),
            grid.x(i),
            grid.w(j),
            sol.value.get(k, i, j),
            c.gamma,
            c.dividend
        );
    }
    Ok(())
}
