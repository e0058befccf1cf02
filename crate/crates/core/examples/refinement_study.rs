//! Residual of the HJB equation on a grid and on its refinement, evaluated at
//! the same physical nodes, plus the modulus of continuity on both grids.
//!
//! ```bash
//! cargo run --release -p renewal-dividend --example refinement_study -- 100 200
//! ```

use renewal_dividend::model::{ClaimSize, Interclaim, ModelParams, RenewalSpec};
use renewal_dividend::solver::{build_grid, solve, ClaimKernel, GridConfig};
use renewal_dividend::verify::{
    check_continuity_refinement, grid_slack, residual_stats, sample_interior_nodes, viscosity_residual,
};

fn main() -> renewal_dividend::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (n_t, n_x) = match args[..] {
        [a, b] => (a, b),
        _ => (100, 200),
    };
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
    let coarse = solve(&params, &spec, &build_grid(&GridConfig::new(n_t, n_x, 20.0), &params, &spec)?)?;
    let fine = solve(&params, &spec, &build_grid(&GridConfig::new(2 * n_t, 2 * n_x, 20.0), &params, &spec)?)?;
    println!(
        "coarse {n_t}x{n_x}: {:.1}s, fine {}x{}: {:.1}s",
        coarse.diagnostics.wall_time_secs,
        2 * n_t,
        2 * n_x,
        fine.diagnostics.wall_time_secs
    );

    let nodes = sample_interior_nodes(&coarse.value, 500, 7);
    let doubled: Vec<[usize; 3]> = nodes.iter().map(|&[k, i, j]| [2 * k, 2 * i, 2 * j]).collect();
    let kc = ClaimKernel::new(&spec, &coarse.value.grid);
    let kf = ClaimKernel::new(&spec, &fine.value.grid);
    let rc: Vec<f64> = nodes.iter().map(|&n| viscosity_residual(&coarse.value, &params, &spec, &kc, n)).collect();
    let rf: Vec<f64> = doubled.iter().map(|&n| viscosity_residual(&fine.value, &params, &spec, &kf, n)).collect();
    let mesh = |g: &renewal_dividend::solver::Grid| g.dx() + g.dt();
    let sc = residual_stats(&rc, f64::INFINITY, mesh(&coarse.value.grid));
    let sf = residual_stats(&rf, f64::INFINITY, mesh(&fine.value.grid));
    println!("coarse median {:.4e} p95 {:.4e} max {:.4e}", sc.median_abs, sc.p95_abs, sc.max_abs);
    println!("fine   median {:.4e} p95 {:.4e} max {:.4e}", sf.median_abs, sf.p95_abs, sf.max_abs);
    println!("median ratio {:.3}", sc.median_abs / sf.median_abs);

    let slack = grid_slack(&coarse.value, &params, None);
    let modulus = check_continuity_refinement(&coarse.value, &fine.value, &[0.05, 0.1, 0.25, 0.5], slack);
    println!("{}\n     {}", modulus.summary(), modulus.detail);
    Ok(())
}
