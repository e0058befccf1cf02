//! Solve a small problem, save the full field and write a time cut and an
//! age cut as CSV under `out/example/`.
//!
//! ```bash
//! cargo run --release -p renewal-dividend --example export_slice
//! ```

use std::path::Path;

use renewal_dividend::io::{export_slice, load_field, save_field, save_json, save_text, RunMetadata, SliceSelector};
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
        interclaim: Interclaim::Weibull { shape: 1.5, scale: 1.0 },
        claim: ClaimSize::Gamma { shape: 2.0, scale: 0.5 },
    };
    let grid = build_grid(&GridConfig::new(50, 100, 10.0), &params, &spec)?;
    let sol = solve(&params, &spec, &grid)?;

    let dir = Path::new("out/example");
    let field = dir.join("value.csv");
    save_field(&field, &sol.value, &sol.policy)?;
    let meta = RunMetadata {
        params,
        spec,
        grid,
        diagnostics: sol.diagnostics.clone(),
        residuals: None,
    };
    save_json(&dir.join("metadata.json"), &meta)?;

    // read it back the way the CLI does
    let (_, value, policy) = load_field(&field)?;
    for (selector, name) in [(SliceSelector::Time(0.5), "slice_s.csv"), (SliceSelector::Age(0.33), "slice_w.csv")] {
        let (csv, notice) = export_slice(&value, &policy, selector);
        if let Some(n) = notice {
            println!("{n}");
        }
        save_text(&dir.join(name), &csv)?;
        println!("wrote {} ({} rows)", dir.join(name).display(), csv.lines().count() - 1);
    }
    Ok(())
}
