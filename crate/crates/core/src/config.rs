//! Run configuration, read from a sectioned TOML file.
//!
//! ```toml
//! [model]
//! premium = 2.0
//! interest = 0.05
//! volatility = 0.3
//! discount = 0.1
//! max_dividend = 3.0
//! horizon = 1.0
//!
//! [renewal.interclaim]
//! family = "erlang"
//! shape = 2
//! rate = 2.0
//!
//! [renewal.claim]
//! family = "exponential"
//! mean = 1.0
//!
//! [grid]
//! n_t = 200
//! n_x = 400
//! x_max = 20.0
//! ```
//!
//! Only `model` and `renewal` are required; every other section has
//! defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, RenewalSpec, State};
use crate::sim::{Preset, SimConfig};
use crate::solver::GridConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_h_sim")]
    pub h_sim: f64,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    /// Master seed of every random stream.
    #[serde(default)]
    pub seed: u64,
    /// Starting state of `simulate` and `sweep-epsilon`.
    #[serde(default = "default_start")]
    pub start: State,
    /// Preset name, or `"grid"` for the policy of a solved field.
    #[serde(default = "default_policy")]
    pub policy: String,
    /// Value/policy CSV to read the grid policy from instead of solving.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_csv: Option<PathBuf>,
}

fn default_h_sim() -> f64 {
    1e-3
}

fn default_n_paths() -> usize {
    100_000
}

fn default_start() -> State {
    State::new(0.0, 2.0, 0.0)
}

fn default_policy() -> String {
    "grid".into()
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            h_sim: default_h_sim(),
            n_paths: default_n_paths(),
            seed: 0,
            start: default_start(),
            policy: default_policy(),
            policy_csv: None,
        }
    }
}

impl SimulationSection {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig::new(self.h_sim)
    }

    /// `None` selects the grid policy.
    pub fn preset(&self) -> Result<Option<Preset>> {
        if self.policy == "grid" {
            return Ok(None);
        }
        Preset::parse(&self.policy).map(Some).ok_or_else(|| {
            Error::Config(format!(
                "simulation.policy: unknown policy `{}` (expected grid, max-dividend-no-investment, \
                 no-dividend-no-investment or max-dividend-full-investment)",
                self.policy
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySection {
    #[serde(default = "default_eps_list")]
    pub eps_list: Vec<f64>,
}

fn default_eps_list() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.02]
}

impl Default for PenaltySection {
    fn default() -> Self {
        Self {
            eps_list: default_eps_list(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// `K` of the slack `K(Δx + Δs)`; defaults to `5M`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_factor: Option<f64>,
    /// `C` of the residual tolerance `C(Δx + Δs)`.
    #[serde(default = "default_residual_constant")]
    pub residual_constant: f64,
    #[serde(default = "default_residual_samples")]
    pub residual_samples: usize,
    /// Look-ahead of the dynamic programming check.
    #[serde(default = "default_dpp_h")]
    pub dpp_h: f64,
    #[serde(default = "default_dpp_paths")]
    pub dpp_paths: usize,
    /// `C` of the allowance `3·stderr + C(Δx + Δs)`.
    #[serde(default = "default_dpp_constant")]
    pub dpp_constant: f64,
    #[serde(default = "default_probes")]
    pub probes: Vec<State>,
}

fn default_residual_constant() -> f64 {
    1.0
}

fn default_residual_samples() -> usize {
    500
}

fn default_dpp_h() -> f64 {
    0.1
}

fn default_dpp_paths() -> usize {
    20_000
}

fn default_dpp_constant() -> f64 {
    5.0
}

fn default_probes() -> Vec<State> {
    vec![
        State::new(0.0, 0.5, 0.0),
        State::new(0.0, 2.0, 0.0),
        State::new(0.0, 5.0, 0.0),
        State::new(0.25, 1.0, 0.1),
        State::new(0.25, 3.0, 0.25),
        State::new(0.5, 0.5, 0.5),
        State::new(0.5, 2.0, 0.2),
        State::new(0.5, 8.0, 0.0),
        State::new(0.75, 1.0, 0.4),
        State::new(0.75, 4.0, 0.75),
    ]
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            k_factor: None,
            residual_constant: default_residual_constant(),
            residual_samples: default_residual_samples(),
            dpp_h: default_dpp_h(),
            dpp_paths: default_dpp_paths(),
            dpp_constant: default_dpp_constant(),
            probes: default_probes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out_dir() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub renewal: RenewalSpec,
    #[serde(default = "default_grid")]
    pub grid: GridConfig,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_grid() -> GridConfig {
    GridConfig::new(200, 400, 20.0)
}

impl RunConfig {
    /// Parses and validates `text`; `origin` only labels diagnostics.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                reason: e.message().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are all representable in TOML")
    }

    /// Checks every block before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.renewal.validate()?;
        self.simulation.sim_config().validate()?;
        self.simulation.preset()?;
        if self.simulation.n_paths < 2 {
            return Err(Error::Config(format!("simulation.n_paths must be >= 2, got {}", self.simulation.n_paths)));
        }
        if !self.simulation.start.in_domain(self.model.horizon) {
            return Err(Error::Config(format!(
                "simulation.start {:?} lies outside 0 <= w <= s <= T, x >= 0",
                self.simulation.start
            )));
        }
        let eps = &self.penalty.eps_list;
        if eps.is_empty() {
            return Err(Error::Config("penalty.eps_list is empty".into()));
        }
        if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) || !eps.windows(2).all(|w| w[1] < w[0]) {
            return Err(Error::Config(format!(
                "penalty.eps_list must be positive and strictly decreasing, got {eps:?}"
            )));
        }
        let v = &self.verify;
        if v.probes.iter().any(|p| !p.in_domain(self.model.horizon)) {
            return Err(Error::Config("verify.probes: every probe must satisfy 0 <= w <= s <= T, x >= 0".into()));
        }
        if !(v.dpp_h >= 0.0 && v.residual_constant > 0.0 && v.dpp_constant >= 0.0) || v.dpp_paths < 2 {
            return Err(Error::Config(
                "verify: need dpp_h >= 0, residual_constant > 0, dpp_constant >= 0, dpp_paths >= 2".into(),
            ));
        }
        Ok(())
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
premium = 2.0
interest = 0.05
volatility = 0.3
discount = 0.1
max_dividend = 3.0
horizon = 1.0

[renewal.interclaim]
family = "erlang"
shape = 2
rate = 2.0

[renewal.claim]
family = "exponential"
mean = 1.0
"#;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.grid, GridConfig::new(200, 400, 20.0));
        assert_eq!(c.simulation.n_paths, 100_000);
        assert_eq!(c.penalty.eps_list, vec![0.2, 0.1, 0.05, 0.02]);
        assert_eq!(c.verify.probes.len(), 10);
        assert_eq!(c.simulation.preset().unwrap(), None);
    }

    #[test]
    fn round_trip_is_identity() {
        let c = parse(MINIMAL).unwrap();
        let again = parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.to_toml(), c.to_toml());

        let mut custom = c.clone();
        custom.simulation.policy = "max-dividend-no-investment".into();
        custom.simulation.policy_csv = Some(PathBuf::from("a/b.csv"));
        custom.verify.k_factor = Some(7.5);
        custom.grid.auto_cfl = false;
        custom.grid.substeps = Some(90);
        custom.renewal.interclaim = crate::model::Interclaim::Weibull { shape: 1.5, scale: 0.7 };
        assert_eq!(parse(&custom.to_toml()).unwrap(), custom);
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = MINIMAL.replace("mean = 1.0", "mean = 1.0\nmaen = 2.0");
        match parse(&text) {
            Err(Error::Parse { line, reason, .. }) => {
                // tagged tables are buffered before decoding, so the span is the table header
                assert_eq!(line, text.lines().position(|l| l == "[renewal.claim]").unwrap() + 1);
                assert!(reason.contains("maen"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("[model]", "[model]\nprmium = 1.0");
        assert!(matches!(parse(&text), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn invalid_blocks_are_rejected() {
        let bad_m = MINIMAL.replace("max_dividend = 3.0", "max_dividend = 1.0");
        assert!(matches!(parse(&bad_m), Err(Error::InvalidParameter { name: "max_dividend", .. })));
        let empty = format!("{MINIMAL}\n[penalty]\neps_list = []\n");
        assert!(matches!(parse(&empty), Err(Error::Config(_))));
        let rising = format!("{MINIMAL}\n[penalty]\neps_list = [0.1, 0.2]\n");
        assert!(matches!(parse(&rising), Err(Error::Config(_))));
        let policy = format!("{MINIMAL}\n[simulation]\npolicy = \"always-pay\"\n");
        assert!(matches!(parse(&policy), Err(Error::Config(_))));
        let family = MINIMAL.replace("\"erlang\"", "\"lognormal\"");
        assert!(matches!(parse(&family), Err(Error::Parse { .. })));
    }

    #[test]
    fn zero_cap_is_valid() {
        let c = parse(&MINIMAL.replace("max_dividend = 3.0", "max_dividend = 0.0")).unwrap();
        assert_eq!(c.model.max_dividend, 0.0);
    }
}
