//! Experiment configuration. Every key has a default matching the estimation
//! setup, so an empty file is a valid configuration.

use serde::{Deserialize, Serialize};

use odwda_core::graph::GraphFamily;
use odwda_core::scenario::{NoiseFamily, ScenarioParams};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub graph: GraphSection,
    pub schedule: ScheduleSection,
    pub scenario: ScenarioSection,
    pub output: OutputSection,
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub n: usize,
    pub horizon: usize,
    pub seed: u64,
    pub beta: f64,
    pub k: f64,
    /// Off means uniform weights over each active set.
    pub adaptive: bool,
    /// Worker threads; 0 picks the machine default.
    pub threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_normalizer: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { n: 100, horizon: 5000, seed: 1, beta: 0.9, k: 0.25, adaptive: true, threads: 0, loss_normalizer: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    /// path, erdos_renyi, random_tree, random_regular, directed_cycle,
    /// complete or explicit.
    pub family: String,
    pub p: f64,
    pub directed: bool,
    pub degree: usize,
    /// 1-indexed `[from, to]` pairs for the explicit family.
    pub edges: Vec<[usize; 2]>,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self { family: "erdos_renyi".into(), p: 0.08, directed: false, degree: 4, edges: Vec::new() }
    }
}

impl GraphSection {
    pub fn family(&self) -> Result<GraphFamily, CliError> {
        Ok(match self.family.as_str() {
            "path" => GraphFamily::Path,
            "erdos_renyi" => GraphFamily::ErdosRenyi { p: self.p, directed: self.directed },
            "random_tree" => GraphFamily::RandomTree,
            "random_regular" => GraphFamily::RandomRegular { k: self.degree },
            "directed_cycle" => GraphFamily::DirectedCycle,
            "complete" => GraphFamily::Complete,
            "explicit" => {
                let mut pairs = Vec::with_capacity(self.edges.len());
                for &[i, j] in &self.edges {
                    if i == 0 || j == 0 {
                        return Err(CliError::Config("explicit edges are 1-indexed".into()));
                    }
                    pairs.push((i - 1, j - 1));
                }
                GraphFamily::Explicit(pairs)
            }
            other => return Err(CliError::Config(format!("unknown graph family {other:?}"))),
        })
    }

    /// Applies a `family[:parameter]` label such as `random_regular:4` or
    /// `erdos_renyi:0.08`.
    pub fn apply_label(&mut self, label: &str) -> Result<(), CliError> {
        let (name, arg) = match label.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (label, None),
        };
        self.family = name.to_string();
        if let Some(a) = arg {
            match name {
                "erdos_renyi" => self.p = a.parse().map_err(|_| CliError::Config(format!("bad edge probability {a:?}")))?,
                "random_regular" => self.degree = a.parse().map_err(|_| CliError::Config(format!("bad degree {a:?}")))?,
                _ => return Err(CliError::Config(format!("family {name} takes no parameter"))),
            }
        }
        self.family().map(|_| ())
    }

    pub fn label(&self) -> String {
        match self.family.as_str() {
            "erdos_renyi" => format!("erdos_renyi:{}", self.p),
            "random_regular" => format!("random_regular:{}", self.degree),
            other => other.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    /// fixed, partition, random_drop or jam_isolation.
    pub mode: String,
    pub delta: usize,
    pub p_drop: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { mode: "fixed".into(), delta: 1, p_drop: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub theta_max: f64,
    pub h_max: f64,
    pub a_max: f64,
    pub b_max: f64,
    pub theta_true: Vec<f64>,
    /// interval, gaussian, uniform or laplace.
    pub noise: String,
    pub truncate: bool,
    /// Number of sensors jammed, chosen from the seed.
    pub jam_count: usize,
    /// Explicit 1-indexed jammed sensors; overrides `jam_count` when set.
    pub jammed: Vec<usize>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let p = ScenarioParams::default();
        Self {
            theta_max: p.theta_max,
            h_max: p.h_max,
            a_max: p.a_max,
            b_max: p.b_max,
            theta_true: p.theta_true,
            noise: p.noise.name().into(),
            truncate: p.truncate,
            jam_count: 0,
            jammed: Vec::new(),
        }
    }
}

impl ScenarioSection {
    pub fn params(&self) -> Result<ScenarioParams, CliError> {
        let noise: NoiseFamily = self.noise.parse().map_err(CliError::config)?;
        let p = ScenarioParams {
            theta_max: self.theta_max,
            h_max: self.h_max,
            a_max: self.a_max,
            b_max: self.b_max,
            theta_true: self.theta_true.clone(),
            noise,
            truncate: self.truncate,
        };
        p.validate().map_err(CliError::config)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub dump_matrices: bool,
    pub dump_weights: bool,
    /// Append each agent's decision and running average to the trace.
    pub decisions: bool,
    /// Write every observation to `observations.csv`.
    pub dump_observations: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), dump_matrices: false, dump_weights: false, decisions: false, dump_observations: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Overrides the empirical contraction factor in the bounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Overrides the connectivity integer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<usize>,
    /// Rounds simulated to estimate gamma outside a full run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    /// Row agreement required of the backward product before its row is
    /// taken as the weighting vector.
    pub pi_tol: f64,
    /// Keep every communication matrix for the deviation bound. Defaults to
    /// on for n ≤ 32.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<bool>,
    /// Suffix products within this of the weighting vector are retired from
    /// the deviation bound and charged their worst case.
    pub retire_tol: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self { gamma: None, nu: None, burn_in: None, pi_tol: 1e-10, audit: None, retire_tol: 1e-13 }
    }
}

pub const AUDIT_MAX_N: usize = 32;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Overlays the keys present in `text` onto `self`.
    pub fn overlay_toml(&self, text: &str) -> Result<Self, CliError> {
        let patch: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let mut base = toml::Table::try_from(self).map_err(CliError::config)?;
        merge(&mut base, patch);
        toml::Value::Table(base).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn audit(&self) -> bool {
        self.analysis.audit.unwrap_or(self.run.n <= AUDIT_MAX_N)
    }

    /// Checks everything that can be checked without generating data.
    pub fn validate(&self) -> Result<(), CliError> {
        let r = &self.run;
        if r.n == 0 {
            return Err(CliError::Config("n must be at least 1".into()));
        }
        if r.horizon == 0 {
            return Err(CliError::Config("horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&r.beta) {
            return Err(CliError::Config(format!("beta {} outside [0,1]", r.beta)));
        }
        if !(r.k.is_finite() && r.k > 0.0) {
            return Err(CliError::Config(format!("k must be positive, got {}", r.k)));
        }
        if let Some(m) = r.loss_normalizer {
            if !(m.is_finite() && m > 0.0) {
                return Err(CliError::Config(format!("loss_normalizer must be positive, got {m}")));
            }
        }
        odwda_core::GraphFamilySpec::new(self.graph.family()?, r.n, 0).validate().map_err(CliError::config)?;
        let s = &self.schedule;
        if !matches!(s.mode.as_str(), "fixed" | "partition" | "random_drop" | "jam_isolation") {
            return Err(CliError::Config(format!("unknown schedule mode {:?}", s.mode)));
        }
        if s.delta == 0 {
            return Err(CliError::Config("delta must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&s.p_drop) {
            return Err(CliError::Config(format!("p_drop {} outside [0,1]", s.p_drop)));
        }
        self.scenario.params()?;
        if self.scenario.jammed.is_empty() && self.scenario.jam_count > r.n {
            return Err(CliError::Config(format!("cannot jam {} of {} sensors", self.scenario.jam_count, r.n)));
        }
        if self.scenario.jammed.iter().any(|&j| j == 0 || j > r.n) {
            return Err(CliError::Config("jammed sensors are 1-indexed and at most n".into()));
        }
        let a = &self.analysis;
        if let Some(g) = a.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(CliError::Config(format!("gamma override {g} must lie in [0,1)")));
            }
        }
        if a.nu == Some(0) {
            return Err(CliError::Config("nu override must be at least 1".into()));
        }
        if !(a.pi_tol > 0.0 && a.retire_tol >= 0.0) {
            return Err(CliError::Config("pi_tol must be positive and retire_tol nonnegative".into()));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, patch: toml::Table) {
    for (k, v) in patch {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => merge(b, p),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.run.beta, 0.9);
        assert_eq!(cfg.run.k, 0.25);
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.analysis.gamma = Some(0.5);
        cfg.graph.edges = vec![[1, 2], [2, 1]];
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overlay_keeps_unmentioned_keys() {
        let mut base = ExperimentConfig::default();
        base.run.n = 7;
        base.scenario.jam_count = 2;
        let cfg = base.overlay_toml("[run]\nhorizon = 10\n[scenario]\nnoise = \"laplace\"\n").unwrap();
        assert_eq!(cfg.run.n, 7);
        assert_eq!(cfg.run.horizon, 10);
        assert_eq!(cfg.scenario.jam_count, 2);
        assert_eq!(cfg.scenario.noise, "laplace");
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml("[run]\nbogus = 1\n").is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.run.beta = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.graph.family = "random_regular".into();
        cfg.graph.degree = 3;
        cfg.run.n = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.scenario.theta_true = vec![0.9];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn family_labels() {
        let mut g = GraphSection::default();
        g.apply_label("random_regular:6").unwrap();
        assert_eq!(g.family().unwrap(), GraphFamily::RandomRegular { k: 6 });
        assert_eq!(g.label(), "random_regular:6");
        g.apply_label("path").unwrap();
        assert_eq!(g.family().unwrap(), GraphFamily::Path);
        assert!(g.apply_label("path:3").is_err());
        assert!(g.apply_label("torus").is_err());
    }
}
