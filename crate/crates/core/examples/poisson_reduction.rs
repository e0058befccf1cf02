//! With exponential interclaim times the age drops out: the field is flat
//! in `w` and matches an independent solver of the two-variable problem.
//!
//! ```bash
//! cargo run --release -p renewal-dividend --example poisson_reduction
//! ```

use renewal_dividend::model::{ClaimSize, Interclaim, ModelParams, RenewalSpec};
use renewal_dividend::solver::{build_grid, solve, GridConfig};
use renewal_dividend::verify::solve_classical;

fn main() -> renewal_dividend::Result<()> {
    let params = ModelParams {
        premium: 2.0,
        interest: 0.05,
        volatility: 0.3,
        discount: 0.1,
        max_dividend: 3.0,
        horizon: 1.0,
    };
    let rate = 1.0;
    let spec = RenewalSpec {
        interclaim: Interclaim::Exponential { rate },
        claim: ClaimSize::Exponential { mean: 1.0 },
    };
    let grid = build_grid(&GridConfig::new(100, 200, 20.0), &params, &spec)?;
    let sol = solve(&params, &spec, &grid)?;
    let classical = solve_classical(&params, rate, &spec.claim, grid.x_max, grid.n_x, grid.n_t)?;

    println!("{:>5} {:>6} {:>10} {:>10} {:>10}", "s", "x", "spread_w", "V", "classical");
    for k in [0, 25, 50, 75] {
        for x in [0.5, 2.0, 5.0] {
            let i = (x / grid.dx()).round() as usize;
            let ages: Vec<f64> = (0..=k).map(|j| sol.value.get(k, i, j)).collect();
            let hi = ages.iter().cloned().fold(f64::MIN, f64::max);
            let lo = ages.iter().cloned().fold(f64::MAX, f64::min);
            println!(
                "{:>5.2} {:>6.2} {:>10.2e} {:>10.5} {:>10.5}",
                grid.s(k),
                grid.x(i),
                hi - lo,
                ages[0],
                classical.value(grid.s(k), grid.x(i))
            );
        }
    }
    Ok(())
}
