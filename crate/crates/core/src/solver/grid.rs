//! Triangular `(s, x, w)` lattice.
//!
//! Time and age share one step, so the characteristic `(s, w) -> (s + Δ, w + Δ)`
//! of the deterministic clock maps nodes onto nodes. Slice `k` holds the ages
//! `w_j = jΔ` for `j = 0..=k`, each age carrying a full surplus row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, RenewalSpec};

/// User-facing grid settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_t: usize,
    pub n_x: usize,
    /// Truncation of the surplus axis; `None` applies the default sizing rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    /// Lower bound applied to the default `x_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_floor: Option<f64>,
    /// Pick the number of surplus sub-steps per time slice from the CFL bound.
    #[serde(default = "default_true")]
    pub auto_cfl: bool,
    /// Explicit sub-step count, required when `auto_cfl` is off.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    #[serde(default = "default_max_substeps")]
    pub max_substeps: usize,
}

fn default_true() -> bool {
    true
}

fn default_max_substeps() -> usize {
    10_000
}

impl GridConfig {
    pub fn new(n_t: usize, n_x: usize, x_max: f64) -> Self {
        Self {
            n_t,
            n_x,
            x_max: Some(x_max),
            x_floor: None,
            auto_cfl: true,
            substeps: None,
            max_substeps: default_max_substeps(),
        }
    }
}

/// Discretization of the domain plus the sub-step count of the surplus operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub horizon: f64,
    pub n_t: usize,
    pub n_x: usize,
    pub x_max: f64,
    /// Explicit surplus sub-steps per time slice.
    pub substeps: usize,
}

/// Largest stable explicit step `1 / (σ²x_max²/Δx² + (p + r x_max + M)/Δx + λ_max + c)`.
pub fn cfl_bound(params: &ModelParams, spec: &RenewalSpec, x_max: f64, dx: f64) -> f64 {
    let diffusion = params.volatility.powi(2) * x_max * x_max / (dx * dx);
    let drift = (params.premium + params.interest * x_max + params.max_dividend) / dx;
    let lambda_max = spec.interclaim.max_hazard(params.horizon);
    1.0 / (diffusion + drift + lambda_max + params.discount)
}

/// Default truncation `max(floor, 10·E[U] + M·T + p·T)`.
pub fn default_x_max(params: &ModelParams, spec: &RenewalSpec, floor: f64) -> f64 {
    let rule = 10.0 * spec.claim.mean() + (params.max_dividend + params.premium) * params.horizon;
    rule.max(floor)
}

pub fn build_grid(config: &GridConfig, params: &ModelParams, spec: &RenewalSpec) -> Result<Grid> {
    if config.n_t < 2 || config.n_x < 2 {
        return Err(Error::invalid(
            "grid",
            format!("n_t and n_x must be >= 2, got {} and {}", config.n_t, config.n_x),
        ));
    }
    let x_max = match config.x_max {
        Some(x) => x.max(config.x_floor.unwrap_or(0.0)),
        None => default_x_max(params, spec, config.x_floor.unwrap_or(0.0)),
    };
    if !(x_max.is_finite() && x_max > 0.0) {
        return Err(Error::invalid("grid.x_max", format!("must be > 0, got {x_max}")));
    }
    let dx = x_max / config.n_x as f64;
    let bound = cfl_bound(params, spec, x_max, dx);
    let n_t = config.n_t;
    let dt = params.horizon / n_t as f64;

    let substeps = if config.auto_cfl {
        (dt / bound).ceil().max(1.0) as usize
    } else {
        let m = config
            .substeps
            .ok_or_else(|| Error::Config("grid.substeps is required when auto_cfl = false".into()))?;
        if m == 0 || dt / m as f64 > bound {
            return Err(Error::Cfl(format!(
                "sub-step {} exceeds the stability bound {bound:.6e}; need substeps >= {}",
                dt / m.max(1) as f64,
                (dt / bound).ceil()
            )));
        }
        m
    };
    if substeps > config.max_substeps {
        return Err(Error::Cfl(format!(
            "CFL needs {substeps} sub-steps per slice, above the ceiling {}",
            config.max_substeps
        )));
    }
    Ok(Grid {
        horizon: params.horizon,
        n_t,
        n_x: config.n_x,
        x_max,
        substeps,
    })
}

impl Grid {
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    pub fn dx(&self) -> f64 {
        self.x_max / self.n_x as f64
    }

    pub fn sub_dt(&self) -> f64 {
        self.dt() / self.substeps as f64
    }

    pub fn s(&self, k: usize) -> f64 {
        if k == self.n_t {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n_x {
            self.x_max
        } else {
            i as f64 * self.dx()
        }
    }

    pub fn w(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    pub fn row_len(&self) -> usize {
        self.n_x + 1
    }

    /// Index of the `(k, j)` surplus row in slice-major order.
    pub fn row(&self, k: usize, j: usize) -> usize {
        debug_assert!(j <= k && k <= self.n_t);
        k * (k + 1) / 2 + j
    }

    pub fn n_rows(&self) -> usize {
        (self.n_t + 1) * (self.n_t + 2) / 2
    }

    pub fn n_nodes(&self) -> usize {
        self.n_rows() * self.row_len()
    }

    pub fn index(&self, k: usize, i: usize, j: usize) -> usize {
        self.row(k, j) * self.row_len() + i
    }

    /// Flat range of slice `k`.
    pub fn slice_range(&self, k: usize) -> std::ops::Range<usize> {
        let start = self.row(k, 0) * self.row_len();
        start..start + (k + 1) * self.row_len()
    }

    /// Nearest slice to time `s`, clamped to the lattice.
    pub fn nearest_slice(&self, s: f64) -> usize {
        ((s / self.dt()).round().max(0.0) as usize).min(self.n_t)
    }
}
