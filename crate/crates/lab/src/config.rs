//! Experiment configuration files.
//!
//! ```json
//! {
//!   "environment": {"kind": "random", "num_states": 6, "num_actions": 2, "seed": 1, "connectivity": 0.5},
//!   "agent": {"kind": "regal_c", "H": {"span_plus": 1.0}, "delta": 0.05, "horizon": 262144},
//!   "seeds": [0, 1, 2],
//!   "output_dir": "out"
//! }
//! ```
//!
//! `H` is a number or `{"span_plus": x}` (true bias span plus `x`); `c` is a
//! number or `"default"`. Relative paths resolve against the config file's
//! directory.

use std::path::{Path, PathBuf};

use regal_core::agents::{default_c, AgentConfig, AgentKind};
use regal_core::envs::{make_two_state, make_lower_bound, make_random_wc, LowerBoundParams};
use regal_core::Mdp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{parse_mdp, FormatError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("environment file {path}: {source}")]
    EnvFile { path: PathBuf, source: FormatError },
    #[error("environment: {0}")]
    Env(#[from] regal_core::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    TwoState {
        alpha: f64,
        eps: f64,
    },
    LowerBound {
        num_states: usize,
        num_actions: usize,
        d_ow: f64,
        /// Defaults to the agent horizon.
        #[serde(default)]
        horizon: Option<u64>,
        seed: u64,
    },
    Random {
        num_states: usize,
        num_actions: usize,
        seed: u64,
        connectivity: f64,
    },
    File {
        path: PathBuf,
    },
}

impl EnvSpec {
    pub fn build(&self, base_dir: &Path, agent_horizon: u64) -> Result<Mdp, ConfigError> {
        Ok(match self {
            EnvSpec::TwoState { alpha, eps } => make_two_state(*alpha, *eps)?,
            EnvSpec::LowerBound { num_states, num_actions, d_ow, horizon, seed } => {
                let p = LowerBoundParams::new(*num_states, *num_actions, *d_ow, horizon.unwrap_or(agent_horizon), *seed)?;
                make_lower_bound(&p)?
            }
            EnvSpec::Random { num_states, num_actions, seed, connectivity } => {
                make_random_wc(*num_states, *num_actions, *seed, *connectivity)?
            }
            EnvSpec::File { path } => {
                let path = base_dir.join(path);
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                parse_mdp(&text).map_err(|source| ConfigError::EnvFile { path, source })?
            }
        })
    }

    pub fn label(&self) -> String {
        match self {
            EnvSpec::TwoState { alpha, eps } => format!("two_state(alpha={alpha}, eps={eps})"),
            EnvSpec::LowerBound { num_states, num_actions, d_ow, seed, .. } => {
                format!("lower_bound(S={num_states}, A={num_actions}, d_ow={d_ow}, seed={seed})")
            }
            EnvSpec::Random { num_states, num_actions, seed, connectivity } => {
                format!("random(S={num_states}, A={num_actions}, seed={seed}, connectivity={connectivity})")
            }
            EnvSpec::File { path } => format!("file({})", path.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpanBound {
    Value(f64),
    SpanPlus { span_plus: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedScale {
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scale {
    Value(f64),
    Named(NamedScale),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub kind: AgentKind,
    #[serde(default, rename = "H", skip_serializing_if = "Option::is_none")]
    pub h: Option<SpanBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Scale>,
    pub delta: f64,
    pub horizon: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_tol: Option<f64>,
    #[serde(default)]
    pub start_state: usize,
}

impl AgentSpec {
    /// Agent parameters for `env`, whose optimal bias has span `truth_span`.
    /// The seed is left at 0.
    pub fn resolve(&self, env: &Mdp, truth_span: f64) -> Result<AgentConfig, ConfigError> {
        let mut cfg = match self.kind {
            AgentKind::RegalC => {
                let h = match self.h {
                    Some(SpanBound::Value(h)) => h,
                    Some(SpanBound::SpanPlus { span_plus }) => truth_span + span_plus,
                    None => return Err(ConfigError::Invalid("regal_c needs H".into())),
                };
                AgentConfig::regal_c(h, self.delta, self.horizon, 0)
            }
            AgentKind::RegalD => {
                let c = match self.c {
                    Some(Scale::Value(c)) => c,
                    Some(Scale::Named(NamedScale::Default)) => {
                        default_c(env.num_states(), env.num_actions(), self.horizon, self.delta)
                    }
                    None => return Err(ConfigError::Invalid("regal_d needs c".into())),
                };
                AgentConfig::regal_d(c, self.delta, self.horizon, 0)
            }
            AgentKind::Ucrl2Baseline => AgentConfig::ucrl2_baseline(self.delta, self.horizon, 0),
        };
        if self.kind != AgentKind::RegalC && self.h.is_some() {
            return Err(ConfigError::Invalid(format!("H is not a parameter of {}", self.kind.name())));
        }
        if self.kind != AgentKind::RegalD && self.c.is_some() {
            return Err(ConfigError::Invalid(format!("c is not a parameter of {}", self.kind.name())));
        }
        if let Some(tol) = self.plan_tol {
            cfg.plan_tol = tol;
        }
        cfg.start_state = self.start_state;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Default tolerance for the per-episode optimism check.
pub const DEFAULT_OPTIMISM_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvSpec,
    pub agent: AgentSpec,
    pub seeds: Vec<u64>,
    /// Defaults to powers of two up to the horizon, plus the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<u64>>,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimism_tol: Option<f64>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

pub fn default_checkpoints(horizon: u64) -> Vec<u64> {
    let mut out: Vec<u64> = std::iter::successors(Some(1u64), |&t| t.checked_mul(2)).take_while(|&t| t <= horizon).collect();
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seeds must be nonempty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(ConfigError::Invalid("seeds must be distinct".into()));
        }
        if let Some(cps) = &self.checkpoints {
            if cps.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ConfigError::Invalid("checkpoints must be strictly increasing".into()));
            }
            if cps.last().is_some_and(|&t| t > self.agent.horizon) {
                return Err(ConfigError::Invalid("checkpoints must not exceed the horizon".into()));
            }
        }
        if let Some(tol) = self.optimism_tol {
            if !(tol >= 0.0) {
                return Err(ConfigError::Invalid("optimism_tol must be nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn checkpoints(&self) -> Vec<u64> {
        self.checkpoints.clone().unwrap_or_else(|| default_checkpoints(self.agent.horizon))
    }

    pub fn output_path(&self) -> PathBuf {
        self.base_dir.join(&self.output_dir)
    }

    pub fn build_env(&self) -> Result<Mdp, ConfigError> {
        self.environment.build(&self.base_dir, self.agent.horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn checkpoints_default() {
        assert_eq!(default_checkpoints(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(default_checkpoints(8), vec![1, 2, 4, 8]);
        assert_eq!(default_checkpoints(1), vec![1]);
    }

    #[test]
    fn parses_parameter_forms() {
        let cfg = parse(
            r#"{"environment": {"kind": "two_state", "alpha": 0.5, "eps": 0.1},
                "agent": {"kind": "regal_c", "H": {"span_plus": 1.0}, "delta": 0.05, "horizon": 100},
                "seeds": [3, 1], "output_dir": "out"}"#,
        )
        .unwrap();
        let env = cfg.build_env().unwrap();
        let agent = cfg.agent.resolve(&env, 5.0).unwrap();
        assert_eq!(agent.h, Some(6.0));
        let d: AgentSpec = serde_json::from_str(r#"{"kind": "regal_d", "c": "default", "delta": 0.05, "horizon": 10000}"#).unwrap();
        let env = make_two_state(0.5, 0.1).unwrap();
        let c = d.resolve(&env, 5.0).unwrap().c.unwrap();
        assert!((c - default_c(2, 2, 10_000, 0.05)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = |seeds: &str, cps: &str, agent: &str| {
            format!(
                r#"{{"environment": {{"kind": "two_state", "alpha": 0.5, "eps": 0.1}}, "agent": {agent},
                    "seeds": {seeds}, {cps} "output_dir": "o"}}"#
            )
        };
        let agent = r#"{"kind": "ucrl2_baseline", "delta": 0.05, "horizon": 100}"#;
        assert!(parse(&base("[]", "", agent)).is_err());
        assert!(parse(&base("[1, 1]", "", agent)).is_err());
        assert!(parse(&base("[1]", r#""checkpoints": [4, 2],"#, agent)).is_err());
        assert!(parse(&base("[1]", r#""checkpoints": [200],"#, agent)).is_err());
        assert!(parse(&base("[1]", r#""bogus": 1,"#, agent)).is_err());
        let cfg = parse(&base("[1]", "", r#"{"kind": "ucrl2_baseline", "H": 2.0, "delta": 0.05, "horizon": 100}"#)).unwrap();
        assert!(cfg.agent.resolve(&make_two_state(0.5, 0.1).unwrap(), 5.0).is_err());
    }
}
