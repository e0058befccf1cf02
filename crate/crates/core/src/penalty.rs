//! Soft-killed dividend costs.
//!
//! Instead of stopping at ruin, paths run on to the horizon and the reward
//! rate is damped by `β(t, ε) = exp(-(1/ε)∫_s^t max(-X_r, 0) dr)`. Before the
//! surplus first goes negative `β = 1`, so the penalized cost extends the
//! ordinary one with nonnegative mass and decreases to it as `ε → 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, RenewalSpec, State};
use crate::sim::{run_paths, CostEstimate, FeedbackPolicy, SimConfig, SimPath, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub epsilon: f64,
    /// Keep integrating after the surplus turns negative.
    #[serde(default = "default_continuation")]
    pub continuation: bool,
}

fn default_continuation() -> bool {
    true
}

impl PenaltyConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            continuation: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_epsilon(self.epsilon)?;
        if !self.continuation {
            return Err(Error::Config("penalized costs need continuation = true".into()));
        }
        Ok(())
    }
}

fn validate_epsilon(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("epsilon must be > 0, got {eps}")))
    }
}

/// `∫_s^t max(-X, 0)` over the recorded samples, trapezoid per segment.
pub fn negative_part_integral(path: &SimPath, t: f64) -> f64 {
    let mut acc = 0.0;
    for seg in path.samples.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        if a.t >= t {
            break;
        }
        let (fa, fb) = ((-a.x).max(0.0), (-b.x).max(0.0));
        if b.t <= t {
            acc += 0.5 * (b.t - a.t) * (fa + fb);
        } else {
            let theta = (t - a.t) / (b.t - a.t);
            let ft = fa + theta * (fb - fa);
            acc += 0.5 * (t - a.t) * (fa + ft);
        }
    }
    acc
}

/// `β(t, ε)` along a recorded path.
pub fn penalty_weight(path: &SimPath, epsilon: f64, t: f64) -> f64 {
    (-negative_part_integral(path, t) / epsilon).exp()
}

fn penalized_runs<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    spec: &RenewalSpec,
    policy: &P,
    start: State,
    epsilons: &[f64],
    n_paths: usize,
    seed: u64,
    config: SimConfig,
) -> Result<Vec<(f64, bool, Vec<f64>)>> {
    if n_paths < 2 {
        return Err(Error::Config(format!("n_paths must be >= 2, got {n_paths}")));
    }
    for &e in epsilons {
        validate_epsilon(e)?;
    }
    let sim = Simulator::new(params, spec, policy, config)?;
    run_paths(&sim, start, params.horizon, n_paths, seed, Some(epsilons), |p| {
        (p.discounted_dividends, p.ruin_time.is_some(), p.penalized_dividends)
    })
}

/// Monte Carlo estimate of `J^ε = E ∫_s^T β(t, ε) e^{-c(t-s)} a_t dt`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_penalized_cost<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    spec: &RenewalSpec,
    policy: &P,
    start: State,
    penalty: PenaltyConfig,
    n_paths: usize,
    seed: u64,
    config: SimConfig,
) -> Result<CostEstimate> {
    penalty.validate()?;
    let runs = penalized_runs(params, spec, policy, start, &[penalty.epsilon], n_paths, seed, config)?;
    let values: Vec<f64> = runs.iter().map(|r| r.2[0]).collect();
    let ruined = runs.iter().filter(|r| r.1).count();
    Ok(CostEstimate::from_samples(&values, ruined))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub estimate: CostEstimate,
}

/// Penalized estimates for a decreasing list of `ε`, all on the same paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Ordinary cost on the same paths, stopped at ruin.
    pub unpenalized: CostEstimate,
    /// Per-path `J^ε - J`, smallest over paths, for each row.
    pub min_pathwise_excess: Vec<f64>,
}

impl SweepTable {
    /// Whether the means are nonincreasing down the table.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|r| r[1].estimate.mean <= r[0].estimate.mean)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,mean,stderr,n\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{}\n",
                r.epsilon, r.estimate.mean, r.estimate.stderr, r.estimate.n_paths
            ));
        }
        out
    }
}

#[allow(clippy::too_many_arguments)]
pub fn epsilon_sweep<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    spec: &RenewalSpec,
    policy: &P,
    start: State,
    eps_list: &[f64],
    n_paths: usize,
    seed: u64,
    config: SimConfig,
) -> Result<SweepTable> {
    if eps_list.is_empty() {
        return Err(Error::Config("eps_list is empty".into()));
    }
    if !eps_list.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::Config(format!("eps_list must be strictly decreasing, got {eps_list:?}")));
    }
    let runs = penalized_runs(params, spec, policy, start, eps_list, n_paths, seed, config)?;
    let ruined = runs.iter().filter(|r| r.1).count();
    let base: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let mut rows = Vec::with_capacity(eps_list.len());
    let mut min_pathwise_excess = Vec::with_capacity(eps_list.len());
    for (m, &epsilon) in eps_list.iter().enumerate() {
        let values: Vec<f64> = runs.iter().map(|r| r.2[m]).collect();
        let excess = values.iter().zip(&base).map(|(v, b)| v - b).fold(f64::INFINITY, f64::min);
        rows.push(SweepRow {
            epsilon,
            estimate: CostEstimate::from_samples(&values, ruined),
        });
        min_pathwise_excess.push(excess);
    }
    Ok(SweepTable {
        rows,
        unpenalized: CostEstimate::from_samples(&base, ruined),
        min_pathwise_excess,
    })
}
