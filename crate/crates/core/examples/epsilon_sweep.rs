//! Penalized values of the solved policy for a decreasing list of ε, all
//! computed on the same paths.
//!
//! ```bash
//! cargo run --release -p renewal-dividend --example epsilon_sweep
//! ```

use renewal_dividend::model::{ClaimSize, Interclaim, ModelParams, RenewalSpec, State};
use renewal_dividend::penalty::epsilon_sweep;
use renewal_dividend::sim::SimConfig;
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
    let grid = build_grid(&GridConfig::new(100, 200, 20.0), &params, &spec)?;
    let sol = solve(&params, &spec, &grid)?;
    let start = State::new(0.0, 2.0, 0.0);
    let v = sol.value.interpolate(0, start.x, start.w);

    let eps = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01];
    let table = epsilon_sweep(&params, &spec, &sol.policy, start, &eps, 20_000, 42, SimConfig::new(1e-3))?;
    println!("{:>8} {:>10} {:>10} {:>10}", "eps", "J^eps", "stderr", "|J^eps-V|");
    for r in &table.rows {
        println!(
            "{:>8} {:>10.5} {:>10.5} {:>10.5}",
            r.epsilon,
            r.estimate.mean,
            r.estimate.stderr,
            (r.estimate.mean - v).abs()
        );
    }
    println!("unpenalized J = {:.5}, grid V = {v:.5}, monotone: {}", table.unpenalized.mean, table.is_monotone());
    Ok(())
}
