//! Monte Carlo value of the solved policy against constant presets.
//!
//! ```bash
//! cargo run --release -p renewal-dividend --example simulate_policy
//! ```

use renewal_dividend::model::{ClaimSize, Interclaim, ModelParams, RenewalSpec, State};
use renewal_dividend::sim::{estimate_cost, Preset, SimConfig};
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
    let (n_paths, seed, sim) = (20_000, 42, SimConfig::new(1e-3));
    println!("grid value V{start:?} = {:.5}", sol.value.interpolate(0, start.x, start.w));

    let est = estimate_cost(&params, &spec, &sol.policy, start, n_paths, seed, sim)?;
    println!("grid policy:      J = {:.5} ± {:.5}, ruin {:.3}", est.mean, est.stderr, est.ruin_fraction);
    for preset in [
        Preset::MaxDividendNoInvestment,
        Preset::MaxDividendFullInvestment,
        Preset::NoDividendNoInvestment,
    ] {
        let est = estimate_cost(&params, &spec, &preset.control(&params), start, n_paths, seed, sim)?;
        println!("{preset:?}: J = {:.5} ± {:.5}, ruin {:.3}", est.mean, est.stderr, est.ruin_fraction);
    }
    Ok(())
}
