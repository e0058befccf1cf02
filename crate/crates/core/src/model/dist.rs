//! Interclaim and claim-size distributions.
//!
//! Every family here has a closed-form survival function, so the hazard
//! identities `F̄(t) = exp(-Λ(t))`, `Λ(t) = ∫₀ᵗ λ` can be evaluated without
//! quadrature on the hot paths. Quadrature is only used by tests as an
//! independent cross-check.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

const ROOT_MAX_ITER: usize = 200;

/// Distribution of the waiting time between two claims.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Interclaim {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    Weibull { shape: f64, scale: f64 },
}

/// Distribution of a single claim size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClaimSize {
    Exponential { mean: f64 },
    Gamma { shape: f64, scale: f64 },
    Uniform { upper: f64 },
}

/// Interclaim law plus claim-size law of the renewal risk process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewalSpec {
    pub interclaim: Interclaim,
    pub claim: ClaimSize,
}

impl Interclaim {
    pub fn family(&self) -> &'static str {
        match self {
            Interclaim::Exponential { .. } => "exponential",
            Interclaim::Erlang { .. } => "erlang",
            Interclaim::Weibull { .. } => "weibull",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Interclaim::Exponential { rate } => positive("interclaim.rate", rate),
            Interclaim::Erlang { shape, rate } => {
                if shape == 0 {
                    return Err(Error::invalid("interclaim.shape", "must be >= 1"));
                }
                positive("interclaim.rate", rate)
            }
            Interclaim::Weibull { shape, scale } => {
                positive("interclaim.scale", scale)?;
                // shape < 1 has an infinite hazard at t = 0
                if !(shape.is_finite() && shape >= 1.0) {
                    return Err(Error::invalid(
                        "interclaim.shape",
                        format!("weibull shape must be >= 1 for a finite intensity, got {shape}"),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Interclaim::Exponential { rate } => 1.0 / rate,
            Interclaim::Erlang { shape, rate } => shape as f64 / rate,
            Interclaim::Weibull { shape, scale } => scale * ln_gamma(1.0 + 1.0 / shape).exp(),
        }
    }

    /// Cumulative hazard `Λ(t) = -ln F̄(t)`.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match *self {
            Interclaim::Exponential { rate } => rate * t,
            Interclaim::Erlang { shape, rate } => {
                let y = rate * t;
                y - erlang_partial_sum(shape, y).0.ln()
            }
            Interclaim::Weibull { shape, scale } => (t / scale).powf(shape),
        }
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.cumulative_hazard(t)).exp()
    }

    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        self.hazard(t) * self.survival(t)
    }

    /// Hazard rate `f(t) / F̄(t)` in a form that does not divide two tiny
    /// numbers.
    pub fn hazard(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match *self {
            Interclaim::Exponential { rate } => rate,
            Interclaim::Erlang { shape, rate } => {
                let (sum, last) = erlang_partial_sum(shape, rate * t);
                rate * last / sum
            }
            Interclaim::Weibull { shape, scale } => {
                if shape == 1.0 {
                    1.0 / scale
                } else {
                    (shape / scale) * (t / scale).powf(shape - 1.0)
                }
            }
        }
    }

    /// Supremum of the hazard on `[0, horizon]`.
    ///
    /// All supported families have a nondecreasing hazard, so this is the
    /// value at the horizon.
    pub fn max_hazard(&self, horizon: f64) -> f64 {
        self.hazard(horizon)
    }
}

/// `(Σ_{n<k} yⁿ/n!, y^{k-1}/(k-1)!)` for the Erlang survival and hazard.
fn erlang_partial_sum(shape: u32, y: f64) -> (f64, f64) {
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..shape {
        term *= y / n as f64;
        sum += term;
    }
    (sum, term)
}

impl ClaimSize {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ClaimSize::Exponential { mean } => positive("claim.mean", mean),
            ClaimSize::Gamma { shape, scale } => {
                positive("claim.shape", shape)?;
                positive("claim.scale", scale)
            }
            ClaimSize::Uniform { upper } => positive("claim.upper", upper),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ClaimSize::Exponential { mean } => mean,
            ClaimSize::Gamma { shape, scale } => shape * scale,
            ClaimSize::Uniform { upper } => 0.5 * upper,
        }
    }

    /// Distribution function `G`; continuous with `G(0) = 0`.
    pub fn cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match *self {
            ClaimSize::Exponential { mean } => -(-u / mean).exp_m1(),
            ClaimSize::Gamma { shape, scale } => gamma_lr(shape, u / scale),
            ClaimSize::Uniform { upper } => (u / upper).min(1.0),
        }
    }

    pub fn density(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        match *self {
            ClaimSize::Exponential { mean } => (-u / mean).exp() / mean,
            ClaimSize::Gamma { shape, scale } => {
                if u == 0.0 {
                    return match shape {
                        s if s < 1.0 => f64::INFINITY,
                        s if s == 1.0 => 1.0 / scale,
                        _ => 0.0,
                    };
                }
                let y = u / scale;
                ((shape - 1.0) * y.ln() - y - ln_gamma(shape)).exp() / scale
            }
            ClaimSize::Uniform { upper } => {
                if u <= upper {
                    1.0 / upper
                } else {
                    0.0
                }
            }
        }
    }

    /// Inverse distribution function at `q ∈ (0, 1)`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid("u", format!("uniform draw must lie in (0, 1), got {q}")));
        }
        match *self {
            ClaimSize::Exponential { mean } => Ok(-mean * (-q).ln_1p()),
            ClaimSize::Uniform { upper } => Ok(q * upper),
            ClaimSize::Gamma { shape, scale } => {
                // bracket then safeguarded Newton on the regularized incomplete gamma
                let mut lo = 0.0;
                let mut hi = shape.max(1.0);
                while gamma_lr(shape, hi) < q {
                    lo = hi;
                    hi *= 2.0;
                }
                let mut y = 0.5 * (lo + hi);
                for _ in 0..ROOT_MAX_ITER {
                    let g = gamma_lr(shape, y) - q;
                    if g > 0.0 {
                        hi = y;
                    } else {
                        lo = y;
                    }
                    let dens = ((shape - 1.0) * y.ln() - y - ln_gamma(shape)).exp();
                    let mut next = y - g / dens;
                    if !(next > lo && next < hi) || !next.is_finite() {
                        next = 0.5 * (lo + hi);
                    }
                    if (next - y).abs() <= 1e-15 * y.max(1e-300) || hi - lo <= 1e-15 * hi {
                        return Ok(next * scale);
                    }
                    y = next;
                }
                Err(Error::RootFind {
                    lo: lo * scale,
                    hi: hi * scale,
                    iterations: ROOT_MAX_ITER,
                })
            }
        }
    }
}

impl RenewalSpec {
    pub fn validate(&self) -> Result<()> {
        self.interclaim.validate()?;
        self.claim.validate()
    }

    /// Claim intensity `λ(t) = f(t)/F̄(t)` at elapsed time `t` since the last claim.
    pub fn intensity_at(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::invalid("t", format!("elapsed time must be >= 0, got {t}")));
        }
        if self.interclaim.survival(t) == 0.0 {
            return Err(Error::SurvivalUnderflow {
                family: self.interclaim.family(),
                t,
            });
        }
        Ok(self.interclaim.hazard(t))
    }

    /// Survival of the first waiting time of the renewal process started at
    /// age `w`: `P(T₁ > t) = F̄(w + t) / F̄(w) = exp(-∫_w^{w+t} λ)`.
    pub fn first_wait_survival(&self, w: f64, t: f64) -> Result<f64> {
        if !(w >= 0.0 && t >= 0.0) {
            return Err(Error::invalid("w/t", format!("need w >= 0 and t >= 0, got w={w}, t={t}")));
        }
        if self.interclaim.survival(w) == 0.0 {
            return Err(Error::SurvivalUnderflow {
                family: self.interclaim.family(),
                t: w,
            });
        }
        Ok((-self.integrated_intensity(w, t)).exp())
    }

    /// `∫_w^{w+t} λ(u) du`.
    pub fn integrated_intensity(&self, w: f64, t: f64) -> f64 {
        match self.interclaim {
            Interclaim::Exponential { rate } => rate * t,
            ic => ic.cumulative_hazard(w + t) - ic.cumulative_hazard(w),
        }
    }

    /// Inverse-transform draw of the first waiting time from age `w`:
    /// returns `t` with `first_wait_survival(w, t) = u`.
    pub fn sample_first_wait(&self, w: f64, u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::invalid("u", format!("uniform draw must lie in (0, 1], got {u}")));
        }
        let target = -u.ln();
        match self.interclaim {
            Interclaim::Exponential { rate } => Ok(target / rate),
            Interclaim::Weibull { shape, scale } => {
                let base = (w / scale).powf(shape);
                Ok((scale * (base + target).powf(1.0 / shape) - w).max(0.0))
            }
            ic @ Interclaim::Erlang { .. } => {
                if target == 0.0 {
                    return Ok(0.0);
                }
                let base = ic.cumulative_hazard(w);
                let excess = |t: f64| ic.cumulative_hazard(w + t) - base - target;
                let mut lo = 0.0;
                let mut hi = target / ic.hazard(w).max(ic.hazard(w + 1.0)).max(1e-12);
                let mut guard = 0;
                while excess(hi) < 0.0 {
                    lo = hi;
                    hi *= 2.0;
                    guard += 1;
                    if guard > 1100 {
                        return Err(Error::RootFind {
                            lo,
                            hi,
                            iterations: guard,
                        });
                    }
                }
                let mut t = 0.5 * (lo + hi);
                for _ in 0..ROOT_MAX_ITER {
                    let g = excess(t);
                    if g > 0.0 {
                        hi = t;
                    } else {
                        lo = t;
                    }
                    let slope = ic.hazard(w + t);
                    let mut next = if slope > 0.0 { t - g / slope } else { f64::NAN };
                    if !(next > lo && next < hi) {
                        next = 0.5 * (lo + hi);
                    }
                    if (next - t).abs() <= 1e-15 * (1.0 + t) || hi - lo <= 1e-15 * (1.0 + hi) {
                        return Ok(next);
                    }
                    t = next;
                }
                Err(Error::RootFind {
                    lo,
                    hi,
                    iterations: ROOT_MAX_ITER,
                })
            }
        }
    }

    /// Claim size by inverse CDF.
    pub fn sample_claim(&self, u: f64) -> Result<f64> {
        self.claim.quantile(u)
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
    }
}
