//! Reference solver for the compound Poisson model, where the age variable
//! drops out and the value lives on `(s, x)` alone.
//!
//! Deliberately built differently from the main scheme: one explicit Euler
//! step per time step (the step itself obeys the CFL bound), a claim term
//! `λ(∫_0^x V(x - u) g(u) du - V)` evaluated with the trapezoid rule on the
//! claim density, and no clipping.

use crate::error::{Error, Result};
use crate::model::{ClaimSize, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSolution {
    pub horizon: f64,
    pub x_max: f64,
    pub n_x: usize,
    /// Saved time levels `s = T·m / n_save`, each a row over `x`.
    pub levels: Vec<Vec<f64>>,
}

impl ClassicalSolution {
    /// Linear interpolation in `s` and `x`.
    pub fn value(&self, s: f64, x: f64) -> f64 {
        let n_save = self.levels.len() - 1;
        let ps = (s / self.horizon * n_save as f64).clamp(0.0, n_save as f64);
        let m = (ps.floor() as usize).min(n_save - 1);
        let fs = ps - m as f64;
        let at = |row: &[f64]| {
            let px = (x / self.x_max * self.n_x as f64).clamp(0.0, self.n_x as f64);
            let i = (px.floor() as usize).min(self.n_x - 1);
            let fx = px - i as f64;
            row[i] * (1.0 - fx) + row[i + 1] * fx
        };
        at(&self.levels[m]) * (1.0 - fs) + at(&self.levels[m + 1]) * fs
    }
}

/// Solves the classical problem with intensity `rate` on `[0, x_max]` with
/// `n_x` cells, saving `n_save + 1` time levels.
pub fn solve_classical(
    params: &ModelParams,
    rate: f64,
    claim: &ClaimSize,
    x_max: f64,
    n_x: usize,
    n_save: usize,
) -> Result<ClassicalSolution> {
    params.validate()?;
    claim.validate()?;
    if n_x < 2 || n_save < 1 {
        return Err(Error::invalid("classical grid", "need n_x >= 2 and n_save >= 1"));
    }
    let dx = x_max / n_x as f64;
    let p = params;
    let sig2 = p.volatility * p.volatility;
    let stiff = sig2 * x_max * x_max / (dx * dx) + (p.premium + p.interest * x_max + p.max_dividend) / dx + rate + p.discount;
    // steps per saved level, so saved levels fall on step boundaries
    let per_level = (p.horizon / n_save as f64 * stiff).ceil() as usize;
    let n_steps = per_level * n_save;
    let dt = p.horizon / n_steps as f64;

    let xs: Vec<f64> = (0..=n_x).map(|i| i as f64 * dx).collect();
    let dens: Vec<f64> = xs.iter().map(|&u| claim.density(u)).collect();
    let mut v = vec![0.0; n_x + 1];
    let mut next = vec![0.0; n_x + 1];
    let mut levels = vec![Vec::new(); n_save + 1];
    levels[n_save] = v.clone();

    for step in (0..n_steps).rev() {
        let s = step as f64 * dt;
        for i in 0..n_x {
            let x = xs[i];
            let up = (v[i + 1] - v[i]) / dx;
            let (down, second) = if i == 0 {
                (up, 0.0)
            } else {
                ((v[i] - v[i - 1]) / dx, (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dx * dx))
            };
            let a_cap = if i == 0 { p.premium.min(p.max_dividend) } else { p.max_dividend };
            let best = [0.0, a_cap]
                .iter()
                .map(|&a| {
                    let drift = p.premium + p.interest * x - a;
                    let d1 = if drift >= 0.0 { up } else { down };
                    drift * d1 + a
                })
                .fold(f64::NEG_INFINITY, f64::max)
                + 0.5 * sig2 * x * x * second.max(0.0);
            let mut conv = 0.0;
            if i > 0 {
                conv = 0.5 * (v[i] * dens[0] + v[0] * dens[i]);
                for m in 1..i {
                    conv += v[i - m] * dens[m];
                }
                conv *= dx;
            }
            next[i] = v[i] + dt * (best - p.discount * v[i] + rate * (conv - v[i]));
        }
        next[n_x] = p.dividend_bound(s);
        std::mem::swap(&mut v, &mut next);
        if step % per_level == 0 {
            levels[step / per_level] = v.clone();
        }
    }
    Ok(ClassicalSolution {
        horizon: p.horizon,
        x_max,
        n_x,
        levels,
    })
}
