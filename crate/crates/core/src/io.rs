//! CSV and JSON artifacts.
//!
//! Floats are written with `{:.16e}` (17 significant digits), which
//! round-trips every `f64` exactly, so files can be compared byte for byte.
//!
//! Schemas:
//!
//! - value/policy field: `s,x,w,V,gamma,a`, one line per node in storage
//!   order (slice `k` ascending, then age `j`, then surplus `i`);
//! - slice export: the same columns, restricted to one slice or one age;
//! - path dump: `t,X,W,gamma,a` plus `beta` for penalized runs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, RenewalSpec};
use crate::penalty::penalty_weight;
use crate::sim::SimPath;
use crate::solver::{Grid, PolicyField, SolveDiagnostics, ValueField};
use crate::verify::ResidualStats;

pub const FIELD_HEADER: &str = "s,x,w,V,gamma,a";
pub const FIELD_FILE: &str = "value.csv";
pub const METADATA_FILE: &str = "metadata.json";

/// Everything needed to read a field back, plus solve diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub params: ModelParams,
    pub spec: RenewalSpec,
    pub grid: Grid,
    pub diagnostics: SolveDiagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<ResidualStats>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn node_line(out: &mut impl Write, s: f64, x: f64, w: f64, v: f64, gamma: f64, a: f64) -> std::io::Result<()> {
    writeln!(out, "{s:.16e},{x:.16e},{w:.16e},{v:.16e},{gamma:.16e},{a:.16e}")
}

/// Writes every node of the field with its control.
pub fn write_field(out: &mut impl Write, value: &ValueField, policy: &PolicyField) -> std::io::Result<()> {
    let g = value.grid;
    writeln!(out, "{FIELD_HEADER}")?;
    for k in 0..=g.n_t {
        for j in 0..=k {
            let row = value.row(k, j);
            for (i, &v) in row.iter().enumerate() {
                let c = policy.control(k, i, j);
                node_line(out, g.s(k), g.x(i), g.w(j), v, c.gamma, c.dividend)?;
            }
        }
    }
    Ok(())
}

pub fn save_field(path: &Path, value: &ValueField, policy: &PolicyField) -> Result<()> {
    let mut out = create(path)?;
    write_field(&mut out, value, policy)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn save_json<T: Serialize>(path: &Path, data: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, data)
        .map_err(std::io::Error::from)
        .and_then(|_| writeln!(out))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}

pub fn save_text(path: &Path, text: &str) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// `metadata.json` next to a field file.
pub fn metadata_path(field_path: &Path) -> PathBuf {
    field_path.with_file_name(METADATA_FILE)
}

/// Reads a field written by [`save_field`] on `grid`, checking every
/// coordinate against the lattice.
pub fn read_field(
    input: impl BufRead,
    origin: &Path,
    grid: Grid,
    params: &ModelParams,
) -> Result<(ValueField, PolicyField)> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        reason,
    };
    let mut value = ValueField::zeros(grid);
    let mut policy = PolicyField::new(grid, params.max_dividend, params.boundary_dividend_cap());
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(origin, e))?
        .unwrap_or_default();
    if header.trim() != FIELD_HEADER {
        return Err(parse_err(1, format!("expected header `{FIELD_HEADER}`, got `{header}`")));
    }
    let mut line_no = 1;
    let tol = 1e-9 * (1.0 + grid.x_max + grid.horizon);
    for k in 0..=grid.n_t {
        for j in 0..=k {
            for i in 0..=grid.n_x {
                line_no += 1;
                let line = lines
                    .next()
                    .transpose()
                    .map_err(|e| Error::io(origin, e))?
                    .ok_or_else(|| parse_err(line_no, format!("file ends early; expected {} nodes", grid.n_nodes())))?;
                let mut cols = [0.0; 6];
                let mut n = 0;
                for (slot, field) in cols.iter_mut().zip(line.split(',')) {
                    *slot = field
                        .trim()
                        .parse()
                        .map_err(|e| parse_err(line_no, format!("column {}: {e}", n + 1)))?;
                    n += 1;
                }
                if n != 6 || line.split(',').count() != 6 {
                    return Err(parse_err(line_no, format!("expected 6 columns, got {}", line.split(',').count())));
                }
                let [s, x, w, v, gamma, a] = cols;
                if (s - grid.s(k)).abs() > tol || (x - grid.x(i)).abs() > tol || (w - grid.w(j)).abs() > tol {
                    return Err(parse_err(
                        line_no,
                        format!("node ({s}, {x}, {w}) does not match the grid at k={k}, i={i}, j={j}"),
                    ));
                }
                value.set(k, i, j, v);
                policy.set_control(k, i, j, crate::model::Control::new(gamma, a));
            }
        }
    }
    if let Some(extra) = lines.next().transpose().map_err(|e| Error::io(origin, e))? {
        if !extra.trim().is_empty() {
            return Err(parse_err(line_no + 1, "trailing data after the last node".into()));
        }
    }
    Ok((value, policy))
}

/// Loads `path` and the `metadata.json` beside it.
pub fn load_field(path: &Path) -> Result<(RunMetadata, ValueField, PolicyField)> {
    let meta: RunMetadata = load_json(&metadata_path(path))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (value, policy) = read_field(BufReader::new(file), path, meta.grid, &meta.params)?;
    Ok((meta, value, policy))
}

/// Which cut of the field to export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SliceSelector {
    /// All `(x, w)` at the slice nearest to `s`.
    Time(f64),
    /// All `(s, x)` at the age nearest to `w` (slices with `s >= w`).
    Age(f64),
}

/// CSV of one cut, and a notice when the request was snapped to the lattice.
pub fn export_slice(value: &ValueField, policy: &PolicyField, selector: SliceSelector) -> (String, Option<String>) {
    let g = value.grid;
    let mut out = Vec::new();
    writeln!(out, "{FIELD_HEADER}").unwrap();
    let mut emit = |k: usize, j: usize| {
        for (i, &v) in value.row(k, j).iter().enumerate() {
            let c = policy.control(k, i, j);
            node_line(&mut out, g.s(k), g.x(i), g.w(j), v, c.gamma, c.dividend).unwrap();
        }
    };
    let notice = match selector {
        SliceSelector::Time(s) => {
            let k = g.nearest_slice(s);
            for j in 0..=k {
                emit(k, j);
            }
            (g.s(k) != s).then(|| format!("requested s = {s} is off the lattice; snapped to slice k = {k} (s = {})", g.s(k)))
        }
        SliceSelector::Age(w) => {
            let j = g.nearest_slice(w);
            for k in j..=g.n_t {
                emit(k, j);
            }
            (g.w(j) != w).then(|| format!("requested w = {w} is off the lattice; snapped to age j = {j} (w = {})", g.w(j)))
        }
    };
    (String::from_utf8(out).expect("ascii output"), notice)
}

/// One recorded path as `t,X,W,gamma,a[,beta]`.
pub fn path_csv(path: &SimPath, epsilon: Option<f64>) -> String {
    let mut out = String::from("t,X,W,gamma,a");
    if epsilon.is_some() {
        out.push_str(",beta");
    }
    out.push('\n');
    for s in &path.samples {
        out.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", s.t, s.x, s.w, s.gamma, s.dividend));
        if let Some(e) = epsilon {
            out.push_str(&format!(",{:.16e}", penalty_weight(path, e, s.t)));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClaimSize, Interclaim};
    use crate::sim::PathSample;
    use crate::solver::{build_grid, solve, GridConfig};

    fn small() -> (ModelParams, RenewalSpec, crate::solver::Solution) {
        let p = ModelParams {
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
        let grid = build_grid(&GridConfig::new(8, 16, 10.0), &p, &spec).unwrap();
        let sol = solve(&p, &spec, &grid).unwrap();
        (p, spec, sol)
    }

    #[test]
    fn field_round_trips_exactly() {
        let (p, _, sol) = small();
        let mut buf = Vec::new();
        write_field(&mut buf, &sol.value, &sol.policy).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1 + sol.value.grid.n_nodes());
        let (v, pol) = read_field(&buf[..], Path::new("mem"), sol.value.grid, &p).unwrap();
        assert_eq!(v, sol.value);
        assert_eq!(pol, sol.policy);
        let mut again = Vec::new();
        write_field(&mut again, &v, &pol).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn malformed_fields_report_lines() {
        let (p, spec, sol) = small();
        let mut buf = Vec::new();
        write_field(&mut buf, &sol.value, &sol.policy).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let g = sol.value.grid;

        let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        let err = read_field(truncated.as_bytes(), Path::new("f.csv"), g, &p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 11, .. }), "{err}");

        let garbled = text.replacen("0.0000000000000000e0,", "zero,", 1);
        assert!(matches!(read_field(garbled.as_bytes(), Path::new("f.csv"), g, &p), Err(Error::Parse { line: 2, .. })));

        let wrong = text.replacen(FIELD_HEADER, "s,x,w,V", 1);
        assert!(matches!(read_field(wrong.as_bytes(), Path::new("f.csv"), g, &p), Err(Error::Parse { line: 1, .. })));

        let other = build_grid(&GridConfig::new(8, 16, 12.0), &p, &spec).unwrap();
        assert!(read_field(text.as_bytes(), Path::new("f.csv"), other, &p).is_err());
    }

    #[test]
    fn terminal_slice_is_zero() {
        let (_, _, sol) = small();
        let (csv, notice) = export_slice(&sol.value, &sol.policy, SliceSelector::Time(1.0));
        assert!(notice.is_none());
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 9 * 17);
        for r in rows {
            let v: f64 = r.split(',').nth(3).unwrap().parse().unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn off_lattice_requests_snap() {
        let (_, _, sol) = small();
        let (csv, notice) = export_slice(&sol.value, &sol.policy, SliceSelector::Time(0.3));
        let notice = notice.unwrap();
        assert!(notice.contains("k = 2") && notice.contains("s = 0.25"), "{notice}");
        assert!(csv.starts_with("s,x,w,V,gamma,a\n"));
        assert_eq!(csv.lines().count(), 1 + 3 * 17);

        let (csv, notice) = export_slice(&sol.value, &sol.policy, SliceSelector::Age(0.5));
        assert!(notice.is_none());
        // ages w = 0.5 exist on slices k = 4..=8
        assert_eq!(csv.lines().count(), 1 + 5 * 17);
    }

    #[test]
    fn path_dump_columns() {
        let path = SimPath {
            samples: vec![
                PathSample {
                    t: 0.0,
                    x: 1.0,
                    w: 0.0,
                    gamma: 1.0,
                    dividend: 3.0,
                },
                PathSample {
                    t: 0.5,
                    x: -1.0,
                    w: 0.5,
                    gamma: 0.0,
                    dividend: 0.0,
                },
            ],
            ..Default::default()
        };
        let plain = path_csv(&path, None);
        assert_eq!(plain.lines().next(), Some("t,X,W,gamma,a"));
        let with_beta = path_csv(&path, Some(1.0));
        let lines: Vec<&str> = with_beta.lines().collect();
        assert_eq!(lines[0], "t,X,W,gamma,a,beta");
        let beta: f64 = lines[2].rsplit(',').next().unwrap().parse().unwrap();
        // trapezoid of max(-X, 0) from 0 to 0.5 is 0.25
        assert!((beta - (-0.25f64).exp()).abs() < 1e-15);
    }
}
