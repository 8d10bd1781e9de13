//! Named experiment setups.

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const NAMES: [&str; 4] = ["fig2", "fig3", "fig4", "fig5"];

/// Graph families compared by `graph-stats --preset fig5`, in increasing
/// order of expected performance.
pub const FIG5_FAMILIES: [&str; 4] = ["path", "random_tree", "random_regular:4", "erdos_renyi:0.08"];

pub fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::default();
    match name {
        "fig2" => {}
        "fig3" => {
            cfg.graph.family = "random_regular".into();
            cfg.graph.degree = 4;
            cfg.scenario.jam_count = 25;
            cfg.schedule.mode = "jam_isolation".into();
        }
        "fig4" => {
            cfg.graph.family = "random_regular".into();
            cfg.graph.degree = 4;
            cfg.scenario.noise = "gaussian".into();
            cfg.scenario.truncate = false;
        }
        "fig5" => {}
        other => {
            return Err(CliError::Config(format!("unknown preset {other:?}; expected one of {}", NAMES.join(", "))))
        }
    }
    Ok(cfg)
}

/// Axis and values swept when `sweep` is given a preset but no axis.
pub fn default_sweep(name: &str) -> Option<(&'static str, Vec<String>)> {
    let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
    match name {
        "fig3" => Some(("beta", owned(&["0.9", "1"]))),
        "fig4" => Some(("noise_family", owned(&["gaussian", "uniform", "laplace"]))),
        "fig5" => Some(("graph_family", owned(&FIG5_FAMILIES))),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in NAMES {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(preset("fig9").is_err());
    }

    #[test]
    fn fig3_jams_a_quarter_of_a_regular_graph() {
        let cfg = preset("fig3").unwrap();
        assert_eq!(cfg.run.n, 100);
        assert_eq!(cfg.scenario.jam_count, 25);
        assert_eq!(cfg.graph.family().unwrap(), odwda_core::GraphFamily::RandomRegular { k: 4 });
    }
}
