//! Model constants, state space and the pointwise Hamiltonian.
//!
//! The market is fixed to the risk-neutral case: the risky asset drifts at
//! the interest rate, so investment only adds volatility `σ γ x` to the
//! surplus.

mod dist;

use serde::{Deserialize, Serialize};

pub use dist::{ClaimSize, Interclaim, RenewalSpec};

use crate::error::{Error, Result};

/// Economic constants of the surplus process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Premium rate `p`.
    pub premium: f64,
    /// Interest rate `r`.
    pub interest: f64,
    /// Volatility `σ` of the risky asset.
    pub volatility: f64,
    /// Discount rate `c` of the dividend stream.
    pub discount: f64,
    /// Cap `M` on the dividend rate; must dominate the premium.
    pub max_dividend: f64,
    /// Horizon `T`.
    pub horizon: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("premium", self.premium),
            ("interest", self.interest),
            ("volatility", self.volatility),
            ("discount", self.discount),
            ("horizon", self.horizon),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        // M = 0 is accepted as the degenerate no-dividend problem (V ≡ 0)
        let m = self.max_dividend;
        if !(m.is_finite() && (m >= self.premium || m == 0.0)) {
            return Err(Error::invalid(
                "max_dividend",
                format!("must be >= premium ({}) or exactly 0, got {m}", self.premium),
            ));
        }
        Ok(())
    }

    /// Value of paying the maximal rate until the horizon, `(M/c)(1 - e^{-c(T-s)})`.
    ///
    /// Upper bound of the value function and its limit as the surplus grows.
    pub fn dividend_bound(&self, s: f64) -> f64 {
        let tau = (self.horizon - s).max(0.0);
        -self.max_dividend / self.discount * (-self.discount * tau).exp_m1()
    }

    /// Dividend cap on the `x = 0` boundary: paying more than the premium
    /// there would ruin the company between claims.
    pub fn boundary_dividend_cap(&self) -> f64 {
        self.premium.min(self.max_dividend)
    }
}

/// Point `(s, x, w)` of the augmented state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub s: f64,
    pub x: f64,
    pub w: f64,
}

impl State {
    pub fn new(s: f64, x: f64, w: f64) -> Self {
        Self { s, x, w }
    }

    pub fn in_domain(&self, horizon: f64) -> bool {
        (0.0..=horizon).contains(&self.s) && self.x >= 0.0 && self.w >= 0.0 && self.w <= self.s
    }
}

/// Investment fraction and dividend rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub gamma: f64,
    pub dividend: f64,
}

impl Control {
    pub const ZERO: Control = Control {
        gamma: 0.0,
        dividend: 0.0,
    };

    pub fn new(gamma: f64, dividend: f64) -> Self {
        Self { gamma, dividend }
    }

    pub fn is_admissible(&self, max_dividend: f64) -> bool {
        (0.0..=1.0).contains(&self.gamma) && (0.0..=max_dividend).contains(&self.dividend)
    }

    /// Projection onto `[0, 1] × [0, max_dividend]`.
    pub fn clamped(self, max_dividend: f64) -> Self {
        Self {
            gamma: self.gamma.clamp(0.0, 1.0),
            dividend: self.dividend.clamp(0.0, max_dividend),
        }
    }
}

/// Boundary piece of the constrained domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    ZeroSurplus,
    ZeroAge,
    AgeEqualsTime,
}

/// Classification of a point relative to the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Strict interior.
    Interior,
    /// Spatial or age boundary with `s < T`; still part of the constrained domain.
    Boundary(Boundary),
    /// `s = T`, excluded from the constrained domain.
    Terminal,
    Outside,
}

impl Region {
    /// Member of the constrained domain (interior plus all boundaries except `s = T`).
    pub fn is_constrained(&self) -> bool {
        matches!(self, Region::Interior | Region::Boundary(_))
    }
}

/// Tags `(s, x, w)`; where boundaries intersect, `x = 0` takes precedence
/// over `w = 0`, which takes precedence over `w = s`.
pub fn classify_point(s: f64, x: f64, w: f64, horizon: f64) -> Region {
    if !State::new(s, x, w).in_domain(horizon) {
        return Region::Outside;
    }
    if s == horizon {
        Region::Terminal
    } else if x == 0.0 {
        Region::Boundary(Boundary::ZeroSurplus)
    } else if w == 0.0 {
        Region::Boundary(Boundary::ZeroAge)
    } else if w == s {
        Region::Boundary(Boundary::AgeEqualsTime)
    } else {
        Region::Interior
    }
}

/// Surplus at time `t` without claims or investment, starting from `x` at
/// `s` and paying the constant rate `dividend`: solves `dX = (p + rX - a) dt`.
pub fn noclaim_flow(params: &ModelParams, s: f64, x: f64, t: f64, dividend: f64) -> f64 {
    let growth_m1 = (params.interest * (t - s)).exp_m1();
    x + x * growth_m1 + (params.premium - dividend) / params.interest * growth_m1
}

/// Arguments of the Hamiltonian at one point: value, derivatives and the
/// claim integral term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HamiltonianArgs {
    /// Surplus `x`.
    pub x: f64,
    /// Claim intensity at the current age, `λ(w)`.
    pub intensity: f64,
    /// Function value `u`.
    pub value: f64,
    /// `∂/∂x`.
    pub dx: f64,
    /// `∂/∂w`.
    pub dw: f64,
    /// `∂²/∂x²`.
    pub dxx: f64,
    /// Integral term `z = I[φ]`.
    pub jump: f64,
}

/// `H = (σ²/2)γ²x²A + (p + rx - a)ξ¹ + ξ² + λ(w)z + (a - cu)`.
pub fn hamiltonian(params: &ModelParams, args: &HamiltonianArgs, control: Control) -> f64 {
    let HamiltonianArgs {
        x,
        intensity,
        value,
        dx,
        dw,
        dxx,
        jump,
    } = *args;
    let diffusion = 0.5 * params.volatility.powi(2) * control.gamma.powi(2) * x * x * dxx;
    let drift = (params.premium + params.interest * x - control.dividend) * dx;
    diffusion + drift + dw + intensity * jump + (control.dividend - params.discount * value)
}

/// Supremum of [`hamiltonian`] over `γ ∈ [0,1]`, `a ∈ [0, cap]` with the
/// maximizing control; `cap` defaults to `M`.
///
/// `H` is affine in `γ²` and in `a`, so the supremum sits at a corner:
/// invest fully iff `A > 0`, pay the cap iff `ξ¹ <= 1`.
pub fn hamiltonian_sup(params: &ModelParams, args: &HamiltonianArgs, cap: Option<f64>) -> (f64, Control) {
    let a_max = cap.unwrap_or(params.max_dividend);
    let gamma = if args.dxx > 0.0 { 1.0 } else { 0.0 };
    let dividend = if args.dx <= 1.0 { a_max } else { 0.0 };
    let value = 0.5 * params.volatility.powi(2) * args.x * args.x * args.dxx.max(0.0)
        + (params.premium + params.interest * args.x) * args.dx
        + args.dw
        + args.intensity * args.jump
        - params.discount * args.value
        + a_max * (1.0 - args.dx).max(0.0);
    (value, Control::new(gamma, dividend))
}
