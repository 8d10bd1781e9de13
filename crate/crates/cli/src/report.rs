//! `graph-stats` and `bounds`.

use std::fmt::Write as _;

use odwda_core::linalg::symmetric_eigenvalues;
use odwda_core::metrics::{corollary_bound, gamma_closed_form_bound, regret_bound_with};
use odwda_core::scenario::{lipschitz_constant, prox_radius};
use odwda_core::{BoundInputs, Normalization};

use crate::config::ExperimentConfig;
use crate::driver::{build_graph, build_schedule, connectivity, resolve_jammed, simulate};
use crate::error::CliError;

/// Burn-in used to estimate `γ` when none is configured: at least four
/// complete blocks of `δν` rounds.
pub fn default_burn_in(delta: usize, nu: usize) -> usize {
    (4 * delta * nu).max(200)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphStats {
    pub family: String,
    pub n: usize,
    pub edges: usize,
    pub strongly_connected: bool,
    pub symmetric: bool,
    pub max_in_neighbors: usize,
    pub nu: Option<usize>,
    pub delta: usize,
    pub burn_in: usize,
    pub gamma: Option<f64>,
    pub gamma_closed_form: Option<f64>,
    pub algebraic_connectivity: Option<f64>,
}

pub const GRAPH_STATS_COLUMNS: &str = "family,n,edges,strongly_connected,symmetric,max_in_neighbors,nu,delta,\
burn_in,gamma,gamma_closed_form,algebraic_connectivity,note";

impl GraphStats {
    pub fn note(&self) -> &'static str {
        match (self.strongly_connected, self.gamma_closed_form) {
            (false, _) => "not strongly connected",
            (true, Some(g)) if g < 0.0 => "closed form vacuous",
            _ if !self.symmetric => "directed: no Laplacian spectrum",
            _ => "",
        }
    }

    pub fn csv_row(&self) -> String {
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.family,
            self.n,
            self.edges,
            self.strongly_connected,
            self.symmetric,
            self.max_in_neighbors,
            self.nu.map(|v| v.to_string()).unwrap_or_default(),
            self.delta,
            self.burn_in,
            o(self.gamma),
            o(self.gamma_closed_form),
            o(self.algebraic_connectivity),
            self.note()
        )
    }
}

/// Connectivity diagnostics for the configured graph, with `γ` estimated
/// from a short run of the full algorithm.
pub fn graph_stats(cfg: &ExperimentConfig, burn_in: Option<usize>) -> Result<GraphStats, CliError> {
    cfg.validate()?;
    let label = cfg.graph.label();
    let n = cfg.run.n;
    let graph = match build_graph(cfg) {
        Ok(g) => g,
        Err(_) => {
            return Ok(GraphStats {
                family: label,
                n,
                edges: 0,
                strongly_connected: false,
                symmetric: false,
                max_in_neighbors: 0,
                nu: None,
                delta: cfg.schedule.delta,
                burn_in: 0,
                gamma: None,
                gamma_closed_form: None,
                algebraic_connectivity: None,
            })
        }
    };
    let jammed = resolve_jammed(cfg)?;
    let sched = build_schedule(cfg, graph.clone(), &jammed)?;
    let (nu, delta) = connectivity(cfg, &sched)?;
    let burn_in = burn_in.or(cfg.analysis.burn_in).unwrap_or_else(|| default_burn_in(delta, nu));

    let gamma = if burn_in == 0 {
        None
    } else {
        let mut run = cfg.clone();
        run.run.horizon = burn_in;
        run.analysis.gamma = None;
        run.analysis.audit = Some(false);
        simulate(&run)?.gamma
    };

    let algebraic_connectivity = if graph.is_symmetric() && n > 1 {
        let ev = symmetric_eigenvalues(&graph.laplacian()).map_err(CliError::Analysis)?;
        Some(ev[1].max(0.0))
    } else {
        None
    };

    Ok(GraphStats {
        family: label,
        n,
        edges: graph.edge_count(),
        strongly_connected: true,
        symmetric: graph.is_symmetric(),
        max_in_neighbors: graph.max_in_neighbors(),
        nu: Some(nu),
        delta,
        burn_in,
        gamma,
        gamma_closed_form: Some(gamma_closed_form_bound(n, graph.max_in_neighbors(), delta, nu)),
        algebraic_connectivity,
    })
}

pub fn graph_stats_csv(rows: &[GraphStats]) -> String {
    let mut s = String::from(GRAPH_STATS_COLUMNS);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub inputs: BoundInputs,
    pub horizon: usize,
    pub gamma_source: &'static str,
    pub coefficient: f64,
    pub thm4: f64,
    pub time_averaged: f64,
    pub corollary: f64,
    pub gamma_closed_form: Option<f64>,
}

impl BoundsReport {
    pub fn render(&self) -> String {
        let b = &self.inputs;
        let mut s = String::new();
        let _ = writeln!(s, "R = {}", b.r);
        let _ = writeln!(s, "L = {}", b.l);
        let _ = writeln!(s, "k = {}", b.k);
        let _ = writeln!(s, "n = {}", b.n);
        let _ = writeln!(s, "gamma = {} ({})", b.gamma, self.gamma_source);
        let _ = writeln!(s, "nu = {}", b.nu);
        let _ = writeln!(s, "delta = {}", b.delta);
        let _ = writeln!(s, "T = {}", self.horizon);
        let _ = writeln!(s, "coefficient = {}", self.coefficient);
        let _ = writeln!(s, "regret_bound = {}", self.thm4);
        let _ = writeln!(s, "time_averaged_bound = {}", self.time_averaged);
        let _ = writeln!(s, "corollary_bound = {}", self.corollary);
        match self.gamma_closed_form {
            Some(g) if g < 0.0 => {
                let _ = writeln!(s, "gamma_closed_form = {g} (vacuous)");
            }
            Some(g) => {
                let _ = writeln!(s, "gamma_closed_form = {g}");
            }
            None => {}
        }
        s
    }
}

/// Bound values at `horizon` without a full run. `γ` and `ν` come from the
/// configuration when set; otherwise they are computed from the graph, with
/// `γ` estimated over a burn-in run.
pub fn bounds(cfg: &ExperimentConfig, horizon: usize) -> Result<BoundsReport, CliError> {
    cfg.validate()?;
    let params = cfg.scenario.params()?;
    let a = &cfg.analysis;
    let window = match cfg.schedule.mode.as_str() {
        "partition" | "random_drop" => cfg.schedule.delta,
        _ => 1,
    };

    let (nu, delta, max_nbrs) = match (a.nu, a.gamma) {
        (Some(nu), Some(_)) => (nu, window, None),
        _ => {
            let graph = build_graph(cfg)?;
            let jammed = resolve_jammed(cfg)?;
            let m = graph.max_in_neighbors();
            let sched = build_schedule(cfg, graph, &jammed)?;
            let (nu, delta) = connectivity(cfg, &sched)?;
            (nu, delta, Some(m))
        }
    };

    let (gamma, gamma_source) = match a.gamma {
        Some(g) => (g, "configured"),
        None => {
            let burn_in = a.burn_in.unwrap_or_else(|| default_burn_in(delta, nu));
            if burn_in == 0 {
                return Err(CliError::Config(
                    "gamma is not configured and burn-in is disabled; run `odwda graph-stats` and pass --gamma".into(),
                ));
            }
            let mut run = cfg.clone();
            run.run.horizon = burn_in;
            run.analysis.audit = Some(false);
            let g = simulate(&run)?.gamma.ok_or_else(|| {
                CliError::Config(format!("burn-in of {burn_in} rounds has no complete block of {} rounds", delta * nu))
            })?;
            (g, "estimated")
        }
    };

    let inputs = BoundInputs {
        r: prox_radius(&params),
        l: lipschitz_constant(&params),
        k: cfg.run.k,
        n: cfg.run.n,
        gamma,
        nu,
        delta,
    };
    let coefficient = inputs.coefficient().map_err(CliError::config)?;
    Ok(BoundsReport {
        inputs,
        horizon,
        gamma_source,
        coefficient,
        thm4: regret_bound_with(&inputs, horizon, Normalization::Cumulative).map_err(CliError::config)?,
        time_averaged: regret_bound_with(&inputs, horizon, Normalization::TimeAveraged).map_err(CliError::config)?,
        corollary: corollary_bound(&inputs, horizon).map_err(CliError::config)?,
        gamma_closed_form: max_nbrs.map(|m| gamma_closed_form_bound(cfg.run.n, m, delta, nu)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn configured(gamma: f64, nu: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.analysis.gamma = Some(gamma);
        cfg.analysis.nu = Some(nu);
        cfg
    }

    #[test]
    fn configured_bounds_need_no_graph() {
        let r = bounds(&configured(0.2034, 5), 1).unwrap();
        assert!((r.coefficient - 39.2244).abs() < 1e-3);
        assert_eq!(r.thm4, r.coefficient);
        assert_eq!(r.corollary, 2.0 * r.coefficient);
        let r4 = bounds(&configured(0.2034, 5), 4).unwrap();
        assert!((r4.thm4 - 2.0 * r.thm4).abs() < 1e-12);
        assert!((r4.time_averaged - r.coefficient / 2.0).abs() < 1e-12);
    }

    #[test]
    fn disabled_burn_in_is_a_config_error() {
        let mut cfg = ExperimentConfig::default();
        cfg.run.n = 10;
        cfg.graph.p = 0.5;
        cfg.analysis.burn_in = Some(0);
        let err = bounds(&cfg, 100).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("graph-stats"));
    }

    #[test]
    fn estimated_gamma_is_a_contraction() {
        let mut cfg = ExperimentConfig::default();
        cfg.run.n = 10;
        cfg.graph.p = 0.5;
        let r = bounds(&cfg, 100).unwrap();
        assert_eq!(r.gamma_source, "estimated");
        assert!((0.0..1.0).contains(&r.inputs.gamma));
    }

    #[test]
    fn complete_graph_stats() {
        let mut cfg = ExperimentConfig::default();
        cfg.run.n = 6;
        cfg.graph.family = "complete".into();
        cfg.run.adaptive = false;
        let s = graph_stats(&cfg, Some(20)).unwrap();
        assert_eq!(s.nu, Some(1));
        assert!(s.gamma.unwrap() < 1e-12);
        assert!((s.algebraic_connectivity.unwrap() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn two_node_path_has_unit_nu() {
        let mut cfg = ExperimentConfig::default();
        cfg.run.n = 2;
        cfg.graph.family = "path".into();
        let s = graph_stats(&cfg, Some(10)).unwrap();
        assert_eq!(s.nu, Some(1));
        assert_eq!(s.gamma_closed_form, Some(0.0));
    }

    #[test]
    fn disconnected_family_is_reported_not_raised() {
        let mut cfg = ExperimentConfig::default();
        cfg.run.n = 10;
        cfg.graph.p = 0.0;
        let s = graph_stats(&cfg, None).unwrap();
        assert!(!s.strongly_connected);
        assert_eq!(s.note(), "not strongly connected");
    }
}
