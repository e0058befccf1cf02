//! Inverse-transform sampling of waiting times from a given age, checked
//! against the closed-form conditional survival.
//!
//! ```bash
//! cargo run --release -p renewal-dividend --example hazard_sampling
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use renewal_dividend::model::{ClaimSize, Interclaim, RenewalSpec};

fn main() -> renewal_dividend::Result<()> {
    let families = [
        Interclaim::Exponential { rate: 1.0 },
        Interclaim::Erlang { shape: 2, rate: 2.0 },
        Interclaim::Weibull { shape: 1.5, scale: 1.0 },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 200_000;
    for interclaim in families {
        let spec = RenewalSpec {
            interclaim,
            claim: ClaimSize::Exponential { mean: 1.0 },
        };
        println!("{} (mean {:.3})", interclaim.family(), interclaim.mean());
        for w in [0.0, 0.5, 2.0] {
            let draws: Vec<f64> = (0..n)
                .map(|_| spec.sample_first_wait(w, 1.0 - rng.gen::<f64>()))
                .collect::<renewal_dividend::Result<_>>()?;
            print!("  w = {w:<4} λ(w) = {:.4} |", spec.intensity_at(w)?);
            for t in [0.25, 0.5, 1.0] {
                let empirical = draws.iter().filter(|&&d| d > t).count() as f64 / n as f64;
                print!(" P(T>{t}) {empirical:.4} vs {:.4} |", spec.first_wait_survival(w, t)?);
            }
            println!();
        }
    }
    Ok(())
}
