//! Monte Carlo simulation of the controlled surplus under the delayed renewal
//! claim process.
//!
//! Between claims the surplus follows `dX = (p + rX - a)dt + σγX dB`, stepped
//! with Euler–Maruyama on a fixed grid of width `h_sim`; claim instants are
//! inserted as extra step boundaries so they are exact. Ruin is only declared
//! at a claim: the dividend rate is clamped near `x = 0` so that the surplus
//! cannot be driven negative by overpaying between claims.
//!
//! Randomness is split per path into two ChaCha streams derived from the
//! master seed: stream `2·i` feeds the Brownian increments of path `i`,
//! stream `2·i + 1` its claim times and sizes. Claim arrivals are therefore
//! identical across step sizes, modes and policies for a given path index.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Control, ModelParams, RenewalSpec, State};
use crate::solver::PolicyField;

/// Markov feedback rule `(t, x, w) -> (γ, a)`.
pub trait FeedbackPolicy: Sync {
    fn control(&self, t: f64, x: f64, w: f64) -> Control;
}

impl FeedbackPolicy for Control {
    fn control(&self, _t: f64, _x: f64, _w: f64) -> Control {
        *self
    }
}

impl FeedbackPolicy for PolicyField {
    fn control(&self, t: f64, x: f64, w: f64) -> Control {
        self.lookup(t, x, w)
    }
}

impl<P: FeedbackPolicy + Send> FeedbackPolicy for std::sync::Arc<P> {
    fn control(&self, t: f64, x: f64, w: f64) -> Control {
        (**self).control(t, x, w)
    }
}

/// Named constant policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `(0, M)`: pay the cap, never invest.
    MaxDividendNoInvestment,
    /// `(0, 0)`.
    NoDividendNoInvestment,
    /// `(1, M)`.
    MaxDividendFullInvestment,
}

impl Preset {
    pub fn control(self, params: &ModelParams) -> Control {
        match self {
            Preset::MaxDividendNoInvestment => Control::new(0.0, params.max_dividend),
            Preset::NoDividendNoInvestment => Control::ZERO,
            Preset::MaxDividendFullInvestment => Control::new(1.0, params.max_dividend),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "max-dividend-no-investment" => Some(Preset::MaxDividendNoInvestment),
            "no-dividend-no-investment" => Some(Preset::NoDividendNoInvestment),
            "max-dividend-full-investment" => Some(Preset::MaxDividendFullInvestment),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Euler step between claims.
    pub h_sim: f64,
    /// Keep the sampled trajectory in [`SimPath::samples`].
    #[serde(default)]
    pub record: bool,
}

impl SimConfig {
    pub fn new(h_sim: f64) -> Self {
        Self { h_sim, record: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_sim.is_finite() && self.h_sim > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("h_sim must be > 0, got {}", self.h_sim)))
        }
    }
}

/// One sampled point of a trajectory with the control applied from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub x: f64,
    pub w: f64,
    pub gamma: f64,
    pub dividend: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimPath {
    pub jump_times: Vec<f64>,
    pub claim_sizes: Vec<f64>,
    /// Trajectory at every step boundary, including both sides of each jump.
    pub samples: Vec<PathSample>,
    pub ruin_time: Option<f64>,
    /// `∫_s^{τ∧stop} e^{-c(t-s)} a_t dt`.
    pub discounted_dividends: f64,
    /// Surplus, age and time where the run stopped (ruin, `stop`, or the
    /// horizon in continuation mode).
    pub end: Option<State>,
    /// `∫_s^{stop} max(-X_r, 0) dr`, accumulated by the trapezoid rule.
    pub negative_part_integral: f64,
    /// `∫_s^{stop} β(t, ε) e^{-c(t-s)} a_t dt`, one entry per requested `ε`.
    pub penalized_dividends: Vec<f64>,
}

/// Path simulator bound to one problem and policy.
pub struct Simulator<'a, P: FeedbackPolicy + ?Sized> {
    pub params: &'a ModelParams,
    pub spec: &'a RenewalSpec,
    pub policy: &'a P,
    pub config: SimConfig,
}

/// Open-interval uniform `(0, 1)` from the top 53 bits.
fn open_uniform(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// `(brownian, claims)` streams of path `index`.
pub fn path_streams(seed: u64, index: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut brownian = ChaCha8Rng::seed_from_u64(seed);
    brownian.set_stream(2 * index);
    let mut claims = ChaCha8Rng::seed_from_u64(seed);
    claims.set_stream(2 * index + 1);
    (brownian, claims)
}

impl<'a, P: FeedbackPolicy + ?Sized> Simulator<'a, P> {
    pub fn new(params: &'a ModelParams, spec: &'a RenewalSpec, policy: &'a P, config: SimConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            params,
            spec,
            policy,
            config,
        })
    }

    /// Policy output projected onto the control box; before ruin the
    /// dividend is cut to `p + rX` whenever a step at the requested rate
    /// would push the surplus below zero.
    fn admissible_control(&self, t: f64, x: f64, w: f64, dtau: f64, ruined: bool) -> Control {
        let p = self.params;
        let mut ctrl = self.policy.control(t, x, w).clamped(p.max_dividend);
        let drift_rate = p.premium + p.interest * x;
        if !ruined && x + (drift_rate - ctrl.dividend) * dtau < 0.0 {
            ctrl.dividend = ctrl.dividend.min(drift_rate.max(0.0));
        }
        ctrl
    }

    /// Simulates path `index` from `start` until `stop` (at most the horizon).
    ///
    /// Without `epsilons` the run ends at ruin. With `epsilons` the
    /// dynamics continue unclamped after ruin up to `stop` and the
    /// penalized dividend integrals are accumulated alongside.
    pub fn run(&self, start: State, stop: f64, seed: u64, index: u64, epsilons: Option<&[f64]>) -> Result<SimPath> {
        let p = self.params;
        let stop = stop.min(p.horizon);
        let h = self.config.h_sim;
        let (mut bm, mut claims) = path_streams(seed, index);

        let continuation = epsilons.is_some();
        let eps = epsilons.unwrap_or(&[]);
        let mut path = SimPath {
            penalized_dividends: vec![0.0; eps.len()],
            ..Default::default()
        };

        let mut t = start.s;
        let mut x = start.x;
        // age is t - anchor, with the anchor at the last claim
        let mut anchor = start.s - start.w;
        let mut next_jump = t + self.spec.sample_first_wait(start.w, open_uniform(&mut claims))?;
        let mut n_step: u64 = 0;
        let mut ruined = false;
        let mut neg_int = 0.0;

        while t < stop {
            let grid_next = start.s + (n_step + 1) as f64 * h;
            let te = grid_next.min(next_jump).min(stop);
            let dtau = te - t;
            let w = t - anchor;
            let ctrl = self.admissible_control(t, x, w, dtau, ruined);
            let drift_rate = p.premium + p.interest * x;
            if self.config.record {
                path.samples.push(PathSample {
                    t,
                    x,
                    w,
                    gamma: ctrl.gamma,
                    dividend: ctrl.dividend,
                });
            }
            let z: f64 = bm.sample(StandardNormal);
            let mut x_new =
                x + (drift_rate - ctrl.dividend) * dtau + p.volatility * ctrl.gamma * x * dtau.sqrt() * z;
            if !ruined && x_new < 0.0 {
                // Euler overshoot; the continuous flow cannot cross zero here
                x_new = 0.0;
            }
            // ∫_t^{te} e^{-c(u-s)} du, exact for a rate held over the step
            let disc = (-p.discount * (t - start.s)).exp() * -(-p.discount * dtau).exp_m1() / p.discount;
            let paid = ctrl.dividend * disc;
            if !ruined {
                path.discounted_dividends += paid;
            }
            if continuation {
                let neg_new = neg_int + 0.5 * dtau * ((-x).max(0.0) + (-x_new).max(0.0));
                for (acc, &e) in path.penalized_dividends.iter_mut().zip(eps) {
                    let beta = 0.5 * ((-neg_int / e).exp() + (-neg_new / e).exp());
                    *acc += beta * paid;
                }
                neg_int = neg_new;
            }
            x = x_new;
            t = te;
            if te == grid_next {
                n_step += 1;
            }
            if te == next_jump && te < stop {
                if self.config.record {
                    path.samples.push(PathSample {
                        t,
                        x,
                        w: t - anchor,
                        gamma: ctrl.gamma,
                        dividend: ctrl.dividend,
                    });
                }
                let u = self.spec.sample_claim(open_uniform(&mut claims))?;
                path.jump_times.push(te);
                path.claim_sizes.push(u);
                x -= u;
                anchor = te;
                if !ruined && x < 0.0 {
                    ruined = true;
                    path.ruin_time = Some(te);
                    if !continuation {
                        break;
                    }
                }
                next_jump = te + self.spec.sample_first_wait(0.0, open_uniform(&mut claims))?;
            }
        }
        if self.config.record {
            let w = t - anchor;
            let ctrl = self.admissible_control(t, x, w, h, ruined);
            path.samples.push(PathSample {
                t,
                x,
                w,
                gamma: ctrl.gamma,
                dividend: ctrl.dividend,
            });
        }
        path.negative_part_integral = neg_int;
        path.end = Some(State::new(t, x, t - anchor));
        Ok(path)
    }
}

pub fn simulate_path<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    spec: &RenewalSpec,
    policy: &P,
    start: State,
    seed: u64,
    config: SimConfig,
) -> Result<SimPath> {
    Simulator::new(params, spec, policy, config)?.run(start, params.horizon, seed, 0, None)
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub ruin_fraction: f64,
}

impl CostEstimate {
    /// Mean and `sd/√n` of `samples`, summed in index order.
    pub fn from_samples(samples: &[f64], ruined: usize) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n_paths: n,
            ruin_fraction: ruined as f64 / n as f64,
        }
    }
}

/// Runs `n_paths` independent paths in parallel; results come back in path order.
pub fn run_paths<P: FeedbackPolicy + ?Sized, T: Send>(
    sim: &Simulator<'_, P>,
    start: State,
    stop: f64,
    n_paths: usize,
    seed: u64,
    epsilons: Option<&[f64]>,
    summarize: impl Fn(SimPath) -> T + Sync,
) -> Result<Vec<T>> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| sim.run(start, stop, seed, i, epsilons).map(&summarize))
        .collect()
}

/// Monte Carlo estimate of the discounted dividends paid until ruin or the horizon.
pub fn estimate_cost<P: FeedbackPolicy + ?Sized>(
    params: &ModelParams,
    spec: &RenewalSpec,
    policy: &P,
    start: State,
    n_paths: usize,
    seed: u64,
    config: SimConfig,
) -> Result<CostEstimate> {
    if n_paths < 2 {
        return Err(Error::Config(format!("n_paths must be >= 2, got {n_paths}")));
    }
    let sim = Simulator::new(params, spec, policy, config)?;
    let runs = run_paths(&sim, start, params.horizon, n_paths, seed, None, |p| {
        (p.discounted_dividends, p.ruin_time.is_some())
    })?;
    let values: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let ruined = runs.iter().filter(|r| r.1).count();
    Ok(CostEstimate::from_samples(&values, ruined))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{noclaim_flow, ClaimSize, Interclaim};

    fn params() -> ModelParams {
        ModelParams {
            premium: 2.0,
            interest: 0.05,
            volatility: 0.3,
            discount: 0.1,
            max_dividend: 3.0,
            horizon: 1.0,
        }
    }

    fn spec() -> RenewalSpec {
        RenewalSpec {
            interclaim: Interclaim::Erlang { shape: 2, rate: 2.0 },
            claim: ClaimSize::Exponential { mean: 1.0 },
        }
    }

    fn recorded(h: f64) -> SimConfig {
        SimConfig { h_sim: h, record: true }
    }

    #[test]
    fn rejects_bad_step() {
        let p = params();
        let err = simulate_path(&p, &spec(), &Control::ZERO, State::new(0.0, 1.0, 0.0), 1, SimConfig::new(0.0));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn no_claims_follows_the_flow() {
        let p = params();
        let quiet = RenewalSpec {
            interclaim: Interclaim::Exponential { rate: 1e-9 },
            ..spec()
        };
        let pol = Control::new(0.0, p.max_dividend);
        let path = simulate_path(&p, &quiet, &pol, State::new(0.0, 10.0, 0.0), 7, recorded(1e-3)).unwrap();
        assert!(path.ruin_time.is_none());
        assert!(path.jump_times.is_empty());
        for s in &path.samples {
            let exact = noclaim_flow(&p, 0.0, 10.0, s.t, p.max_dividend);
            assert!((s.x - exact).abs() < 1e-3, "t={} {} vs {}", s.t, s.x, exact);
            assert!((s.w - s.t).abs() < 1e-12);
        }
        let bound = p.dividend_bound(0.0);
        assert!((path.discounted_dividends - bound).abs() < 1e-12);
    }

    #[test]
    fn zero_dividends_pay_nothing() {
        let p = params();
        for seed in 0..20 {
            let path = simulate_path(&p, &spec(), &Control::ZERO, State::new(0.2, 1.5, 0.1), seed, SimConfig::new(1e-2))
                .unwrap();
            assert_eq!(path.discounted_dividends, 0.0);
        }
        let est = estimate_cost(&p, &spec(), &Control::ZERO, State::new(0.0, 1.0, 0.0), 100, 3, SimConfig::new(1e-2))
            .unwrap();
        assert_eq!((est.mean, est.stderr), (0.0, 0.0));
    }

    #[test]
    fn path_invariants() {
        let p = params();
        let pol = Control::new(1.0, p.max_dividend);
        for seed in 0..50 {
            let path = simulate_path(&p, &spec(), &pol, State::new(0.0, 0.8, 0.0), seed, recorded(1e-2)).unwrap();
            // age resets at each claim and grows at unit slope in between
            for pair in path.samples.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if path.jump_times.contains(&b.t) && a.t == b.t {
                    continue;
                }
                if b.w == 0.0 {
                    assert!(path.jump_times.contains(&b.t));
                } else {
                    assert!(((b.w - a.w) - (b.t - a.t)).abs() < 1e-12);
                }
            }
            // every claim shows up as a drop of exactly U at the jump time
            for (tj, u) in path.jump_times.iter().zip(&path.claim_sizes) {
                let at: Vec<_> = path.samples.iter().filter(|s| s.t == *tj).collect();
                assert!(at.len() >= 2);
                assert!(((at[0].x - at[1].x) - u).abs() < 1e-12);
                assert_eq!(at[1].w, 0.0);
            }
            if let Some(tau) = path.ruin_time {
                assert_eq!(Some(&tau), path.jump_times.last());
                assert!(path.end.unwrap().x < 0.0);
            }
            for s in &path.samples[..path.samples.len() - 1] {
                assert!(s.x >= 0.0);
            }
            assert!(path.discounted_dividends <= p.dividend_bound(0.0) + 1e-12);
        }
    }

    #[test]
    fn reproducible_per_seed() {
        let p = params();
        let pol = Control::new(1.0, 2.5);
        let a = simulate_path(&p, &spec(), &pol, State::new(0.1, 2.0, 0.05), 42, recorded(5e-3)).unwrap();
        let b = simulate_path(&p, &spec(), &pol, State::new(0.1, 2.0, 0.05), 42, recorded(5e-3)).unwrap();
        let c = simulate_path(&p, &spec(), &pol, State::new(0.1, 2.0, 0.05), 43, recorded(5e-3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn claims_do_not_depend_on_step() {
        let p = params();
        let pol = Control::ZERO;
        let a = simulate_path(&p, &spec(), &pol, State::new(0.0, 50.0, 0.0), 9, SimConfig::new(1e-2)).unwrap();
        let b = simulate_path(&p, &spec(), &pol, State::new(0.0, 50.0, 0.0), 9, SimConfig::new(1e-3)).unwrap();
        assert_eq!(a.jump_times, b.jump_times);
        assert_eq!(a.claim_sizes, b.claim_sizes);
    }

    #[test]
    fn dividend_clamp_at_zero_surplus() {
        let p = params();
        let quiet = RenewalSpec {
            interclaim: Interclaim::Exponential { rate: 1e-9 },
            ..spec()
        };
        let pol = Control::new(0.0, p.max_dividend);
        let path = simulate_path(&p, &quiet, &pol, State::new(0.0, 0.0, 0.0), 1, recorded(1e-2)).unwrap();
        assert!(path.ruin_time.is_none());
        assert!(path.samples.iter().all(|s| s.x >= 0.0 && s.dividend <= p.premium + p.interest * s.x + 1e-12));
        // paying the premium from x = 0 keeps the surplus at zero
        assert!(path.samples.iter().all(|s| s.x < 1e-12));
    }

    #[test]
    fn large_surplus_reaches_the_bound() {
        let p = params();
        let pol = Preset::MaxDividendNoInvestment.control(&p);
        let x = 1e3 * spec().claim.mean() + p.max_dividend * p.horizon;
        let est = estimate_cost(&p, &spec(), &pol, State::new(0.0, x, 0.0), 10_000, 11, SimConfig::new(1e-2)).unwrap();
        assert_eq!(est.ruin_fraction, 0.0);
        let limit = p.dividend_bound(0.0);
        assert!((est.mean - limit).abs() <= 3.0 * est.stderr + 1e-12, "{} vs {limit}", est.mean);
    }

    #[test]
    fn estimate_never_exceeds_the_bound() {
        let p = params();
        for pol in [Control::new(1.0, 3.0), Control::new(0.5, 2.0)] {
            let est = estimate_cost(&p, &spec(), &pol, State::new(0.3, 1.0, 0.2), 2_000, 5, SimConfig::new(1e-2)).unwrap();
            assert!(est.mean >= 0.0);
            assert!(est.mean <= p.dividend_bound(0.3) + 3.0 * est.stderr);
        }
    }

    #[test]
    fn constant_intensity_forgets_the_age() {
        let p = params();
        let poisson = RenewalSpec {
            interclaim: Interclaim::Exponential { rate: 1.0 },
            ..spec()
        };
        let pol = Control::new(1.0, 3.0);
        let a = estimate_cost(&p, &poisson, &pol, State::new(0.5, 1.0, 0.0), 4_000, 8, SimConfig::new(1e-2)).unwrap();
        let b = estimate_cost(&p, &poisson, &pol, State::new(0.5, 1.0, 0.4), 4_000, 8, SimConfig::new(1e-2)).unwrap();
        let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() <= 3.0 * se + 1e-12);
    }

    #[test]
    fn weak_order_under_step_halving() {
        let p = params();
        let pol = Control::new(1.0, 3.0);
        let start = State::new(0.0, 2.0, 0.0);
        let m = |h: f64| estimate_cost(&p, &spec(), &pol, start, 4_000, 21, SimConfig::new(h)).unwrap();
        let (a, b, c) = (m(4e-2), m(2e-2), m(1e-2));
        let d1 = (a.mean - b.mean).abs();
        let d2 = (b.mean - c.mean).abs();
        // differences are O(h) plus sampling noise of the matched-claim paths
        assert!(d1 <= 0.05 + 3.0 * a.stderr && d2 <= 0.025 + 3.0 * b.stderr, "{d1} {d2}");
    }

    #[test]
    fn presets_parse() {
        let p = params();
        assert_eq!(Preset::parse("max-dividend-no-investment").unwrap().control(&p), Control::new(0.0, 3.0));
        assert_eq!(Preset::parse("no-dividend-no-investment").unwrap().control(&p), Control::ZERO);
        assert!(Preset::parse("bogus").is_none());
    }
}
