//! Reconstruction config files (JSON) and their mapping onto solver
//! schedules. Unknown keys are rejected so parameter typos surface
//! immediately.

use serde::{Deserialize, Serialize};

use darcs_core::solvers::{ReconSchedule, Stage, DEFAULT_CG_MAXITER, DEFAULT_CG_TOL};
use darcs_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Zf,
    Sense,
    CsHaar,
    CsFd,
    Pnp,
    Dagan,
    Aics,
    Darcs,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidArgument(format!("unknown method '{s}'")))
    }

    pub fn needs_net(self) -> bool {
        matches!(self, Method::Pnp | Method::Dagan | Method::Aics | Method::Darcs)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Zf => "zf",
            Method::Sense => "sense",
            Method::CsHaar => "cs-haar",
            Method::CsFd => "cs-fd",
            Method::Pnp => "pnp",
            Method::Dagan => "dagan",
            Method::Aics => "aics",
            Method::Darcs => "darcs",
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub start_iter: usize,
    pub alpha: f64,
    pub mu: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub beta: f64,
    #[serde(default)]
    pub net_index: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReconConfigFile {
    /// Optional; must agree with the command-line method when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<StageConfig>>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t_total: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_maxiter: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub net_paths: Vec<String>,
}

impl ReconConfigFile {
    pub fn load(path: &str) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::Format(format!("config {path}: {e}")))
    }

    /// Resolve the effective schedule: explicit stages when given, otherwise
    /// the stock two-stage schedule (its second stage uses the second
    /// network when one is available).
    pub fn schedule(&self, n_nets: usize) -> ReconSchedule {
        let mut sched = match &self.schedule {
            Some(stages) => ReconSchedule {
                stages: stages
                    .iter()
                    .map(|s| Stage {
                        start_iter: s.start_iter,
                        alpha: s.alpha,
                        mu: s.mu,
                        k_steps: s.k,
                        beta: s.beta,
                        transform_index: s.net_index,
                    })
                    .collect(),
                t_total: self.t_total.unwrap_or(20),
                cg_tol: DEFAULT_CG_TOL,
                cg_maxiter: DEFAULT_CG_MAXITER,
            },
            None => ReconSchedule::two_stage_default(if n_nets >= 2 { 1 } else { 0 }),
        };
        if let Some(t) = self.t_total {
            sched.t_total = t;
        }
        if let Some(tol) = self.cg_tol {
            sched.cg_tol = tol;
        }
        if let Some(mi) = self.cg_maxiter {
            sched.cg_maxiter = mi;
        }
        sched
    }
}

impl Default for ReconConfigFile {
    fn default() -> Self {
        Self {
            method: None,
            schedule: None,
            t_total: None,
            cg_tol: None,
            cg_maxiter: None,
            net_paths: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = r#"{
            "method": "darcs",
            "schedule": [
                {"start_iter": 1, "alpha": 0.1, "mu": 0.005, "K": 2, "beta": 0.01, "net_index": 0},
                {"start_iter": 11, "alpha": 0.1, "mu": 0.01, "K": 2, "beta": 0.01, "net_index": 1}
            ],
            "T": 20,
            "cg_tol": 1e-6,
            "cg_maxiter": 50,
            "net_paths": ["a.dwn", "b.dwn"]
        }"#;
        let cfg: ReconConfigFile = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.method, Some(Method::Darcs));
        let sched = cfg.schedule(2);
        assert_eq!(sched.stages.len(), 2);
        assert_eq!(sched.stages[1].mu, 0.01);
        assert_eq!(sched.stages[1].transform_index, 1);
        assert!(sched.validate(2).is_ok());
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = r#"{"T": 20, "alhpa": 0.1}"#;
        assert!(serde_json::from_str::<ReconConfigFile>(text).is_err());
        let stage = r#"{"start_iter": 1, "alpha": 0.1, "mu": 0.005, "K": 2, "beta": 0.01, "extra": 3}"#;
        assert!(serde_json::from_str::<StageConfig>(stage).is_err());
    }

    #[test]
    fn defaults_give_the_stock_schedule() {
        let cfg = ReconConfigFile::default();
        let sched = cfg.schedule(1);
        assert_eq!(sched.t_total, 20);
        assert_eq!(sched.stages.len(), 2);
        assert_eq!(sched.stages[0].mu, 0.005);
        assert_eq!(sched.stages[1].mu, 0.01);
        assert_eq!(sched.stages[1].start_iter, 11);
        assert_eq!(sched.stages[1].transform_index, 0);
        let sched2 = cfg.schedule(2);
        assert_eq!(sched2.stages[1].transform_index, 1);
    }

    #[test]
    fn method_names_match_cli_surface() {
        for (name, m) in [
            ("zf", Method::Zf),
            ("sense", Method::Sense),
            ("cs-haar", Method::CsHaar),
            ("cs-fd", Method::CsFd),
            ("pnp", Method::Pnp),
            ("dagan", Method::Dagan),
            ("aics", Method::Aics),
            ("darcs", Method::Darcs),
        ] {
            assert_eq!(Method::parse(name).unwrap(), m);
            assert_eq!(m.as_str(), name);
        }
        assert!(Method::parse("modl").is_err());
    }
}
