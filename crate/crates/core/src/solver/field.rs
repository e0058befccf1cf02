use std::sync::atomic::{AtomicUsize, Ordering};

use super::grid::Grid;
use crate::model::Control;

/// Grid function `V(s_k, x_i, w_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ValueField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            values: vec![0.0; grid.n_nodes()],
            grid,
        }
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(k, i, j)]
    }

    pub fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let idx = self.grid.index(k, i, j);
        self.values[idx] = v;
    }

    pub fn row(&self, k: usize, j: usize) -> &[f64] {
        let start = self.grid.row(k, j) * self.grid.row_len();
        &self.values[start..start + self.grid.row_len()]
    }

    pub fn row_mut(&mut self, k: usize, j: usize) -> &mut [f64] {
        let start = self.grid.row(k, j) * self.grid.row_len();
        let len = self.grid.row_len();
        &mut self.values[start..start + len]
    }

    /// Piecewise-linear value in `x` on row `(k, j)`; clamps `x` to `[0, x_max]`.
    pub fn interpolate_x(&self, k: usize, j: usize, x: f64) -> f64 {
        let row = self.row(k, j);
        let pos = (x / self.grid.dx()).clamp(0.0, self.grid.n_x as f64);
        let i = (pos.floor() as usize).min(self.grid.n_x - 1);
        let frac = pos - i as f64;
        row[i] * (1.0 - frac) + row[i + 1] * frac
    }

    /// Bilinear value in `(x, w)` on slice `k`; `w` is clamped to `[0, s_k]`.
    pub fn interpolate(&self, k: usize, x: f64, w: f64) -> f64 {
        if k == 0 {
            return self.interpolate_x(0, 0, x);
        }
        let pos = (w / self.grid.dt()).clamp(0.0, k as f64);
        let j = (pos.floor() as usize).min(k - 1);
        let frac = pos - j as f64;
        self.interpolate_x(k, j, x) * (1.0 - frac) + self.interpolate_x(k, j + 1, x) * frac
    }
}

const INVEST: u8 = 1;
const PAY: u8 = 2;

/// Bang-bang feedback control stored per node.
///
/// Each node keeps two bits: full investment or none, and maximal dividend
/// (capped at the premium on the `x = 0` row) or none.
#[derive(Debug)]
pub struct PolicyField {
    pub grid: Grid,
    pub max_dividend: f64,
    pub boundary_cap: f64,
    codes: Vec<u8>,
    clamped_queries: AtomicUsize,
}

impl Clone for PolicyField {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid,
            max_dividend: self.max_dividend,
            boundary_cap: self.boundary_cap,
            codes: self.codes.clone(),
            clamped_queries: AtomicUsize::new(self.clamped_queries.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for PolicyField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.max_dividend == other.max_dividend
            && self.boundary_cap == other.boundary_cap
            && self.codes == other.codes
    }
}

impl PolicyField {
    pub fn new(grid: Grid, max_dividend: f64, boundary_cap: f64) -> Self {
        Self {
            codes: vec![0; grid.n_nodes()],
            grid,
            max_dividend,
            boundary_cap,
            clamped_queries: AtomicUsize::new(0),
        }
    }

    pub fn dividend_cap(&self, i: usize) -> f64 {
        if i == 0 {
            self.boundary_cap
        } else {
            self.max_dividend
        }
    }

    pub(crate) fn encode(invest: bool, pay: bool) -> u8 {
        (if invest { INVEST } else { 0 }) | (if pay { PAY } else { 0 })
    }

    pub(crate) fn slice_codes_mut(&mut self, k: usize) -> &mut [u8] {
        let range = self.grid.slice_range(k);
        &mut self.codes[range]
    }

    pub fn control(&self, k: usize, i: usize, j: usize) -> Control {
        let code = self.codes[self.grid.index(k, i, j)];
        Control::new(
            if code & INVEST != 0 { 1.0 } else { 0.0 },
            if code & PAY != 0 { self.dividend_cap(i) } else { 0.0 },
        )
    }

    /// Stores `control`, snapping it to the bang-bang set.
    pub fn set_control(&mut self, k: usize, i: usize, j: usize, control: Control) {
        let idx = self.grid.index(k, i, j);
        self.codes[idx] = Self::encode(control.gamma >= 0.5, control.dividend >= 0.5 * self.dividend_cap(i));
    }

    /// Feedback control at an arbitrary state.
    ///
    /// Time and age snap to the nearest lattice node (they move together),
    /// the surplus to the nearest node of its cell. Queries outside the grid
    /// are clamped and counted.
    pub fn lookup(&self, t: f64, x: f64, w: f64) -> Control {
        let g = &self.grid;
        let mut clamped = false;
        let k_raw = (t / g.dt()).round();
        if !(0.0..=g.n_t as f64).contains(&k_raw) {
            clamped = true;
        }
        let k = (k_raw.max(0.0) as usize).min(g.n_t);
        let j_raw = (w / g.dt()).round();
        if j_raw < 0.0 || j_raw > k as f64 {
            clamped = true;
        }
        let j = (j_raw.max(0.0) as usize).min(k);
        let pos = x / g.dx();
        if !(0.0..=g.n_x as f64).contains(&pos) {
            clamped = true;
        }
        let i = (pos.round().max(0.0) as usize).min(g.n_x);
        if clamped {
            self.clamped_queries.fetch_add(1, Ordering::Relaxed);
        }
        self.control(k, i, j)
    }

    pub fn clamped_queries(&self) -> usize {
        self.clamped_queries.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid {
            horizon: 1.0,
            n_t: 4,
            n_x: 10,
            x_max: 5.0,
            substeps: 1,
        }
    }

    #[test]
    fn interpolation_is_exact_on_affine_data() {
        let g = grid();
        let mut f = ValueField::zeros(g);
        for k in 0..=g.n_t {
            for j in 0..=k {
                for i in 0..=g.n_x {
                    f.set(k, i, j, 2.0 * g.x(i) - 3.0 * g.w(j) + 1.0);
                }
            }
        }
        let v = f.interpolate(3, 1.37, 0.41);
        assert!((v - (2.0 * 1.37 - 3.0 * 0.41 + 1.0)).abs() < 1e-12);
        // clamped in x
        assert!((f.interpolate_x(2, 1, 9.0) - f.get(2, 10, 1)).abs() < 1e-15);
    }

    #[test]
    fn policy_lookup_at_nodes_and_clamping() {
        let g = grid();
        let mut pf = PolicyField::new(g, 3.0, 2.0);
        pf.set_control(2, 4, 1, Control::new(1.0, 3.0));
        pf.set_control(2, 0, 1, Control::new(0.0, 2.0));
        pf.set_control(2, 10, 1, Control::new(1.0, 0.0));
        assert_eq!(pf.lookup(0.5, 2.0, 0.25), Control::new(1.0, 3.0));
        assert_eq!(pf.lookup(0.5, 0.0, 0.25), Control::new(0.0, 2.0));
        assert_eq!(pf.clamped_queries(), 0);
        assert_eq!(pf.lookup(0.5, 40.0, 0.25), Control::new(1.0, 0.0));
        assert_eq!(pf.clamped_queries(), 1);
        // negative surplus uses the boundary row
        assert_eq!(pf.lookup(0.5, -1.0, 0.25), Control::new(0.0, 2.0));
        assert_eq!(pf.clamped_queries(), 2);
        // age beyond the time is snapped to w = s
        let _ = pf.lookup(0.25, 1.0, 0.9);
        assert_eq!(pf.clamped_queries(), 3);
    }
}
