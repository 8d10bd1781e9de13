//! One run per value along a single configuration axis.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::{output, run_experiment};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    NoiseFamily,
    GraphFamily,
    Beta,
    JamCount,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::NoiseFamily, Axis::GraphFamily, Axis::Beta, Axis::JamCount];

    pub fn name(&self) -> &'static str {
        match self {
            Axis::NoiseFamily => "noise_family",
            Axis::GraphFamily => "graph_family",
            Axis::Beta => "beta",
            Axis::JamCount => "jam_count",
        }
    }

    /// `cfg` with this axis set to `value`.
    pub fn apply(&self, cfg: &ExperimentConfig, value: &str) -> Result<ExperimentConfig, CliError> {
        let mut c = cfg.clone();
        let bad = |what: &str| CliError::Config(format!("invalid {what} {value:?}"));
        match self {
            Axis::NoiseFamily => {
                value.parse::<odwda_core::NoiseFamily>().map_err(|_| bad("noise family"))?;
                c.scenario.noise = value.to_string();
            }
            Axis::GraphFamily => c.graph.apply_label(value)?,
            Axis::Beta => {
                c.run.beta = value.parse().map_err(|_| bad("beta"))?;
                c.run.adaptive = true;
            }
            Axis::JamCount => {
                c.scenario.jam_count = value.parse().map_err(|_| bad("jam count"))?;
                c.scenario.jammed.clear();
            }
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Axis::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            let names: Vec<_> = Axis::ALL.iter().map(|a| a.name()).collect();
            CliError::Config(format!("unknown sweep axis {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

pub const SWEEP_COLUMNS: &str = "axis,value,t,regret_ind_mean,regret_ind_max,regret_avg_mean,regret_avg_max,bound_thm4";

/// Subdirectory name for one cell.
pub fn cell_dir(axis: Axis, value: &str) -> String {
    let clean: String = value.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect();
    format!("{}_{clean}", axis.name())
}

/// Runs every cell into `out/<axis>_<value>/` and writes the per-round
/// agent mean and max of both regrets to `out/sweep.csv`. Cells share the
/// master seed, so observations coincide wherever the axis leaves them
/// unchanged.
pub fn sweep(cfg: &ExperimentConfig, axis: Axis, values: &[String], out: &Path) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let cells: Vec<ExperimentConfig> = values.iter().map(|v| axis.apply(cfg, v)).collect::<Result<_, _>>()?;
    output::ensure_dir(out)?;
    let path = out.join("sweep.csv");
    let mut csv = String::from(SWEEP_COLUMNS);
    csv.push('\n');
    let mut failure = None;
    for (value, cell) in values.iter().zip(&cells) {
        let r = match run_experiment(cell, &out.join(cell_dir(axis, value)), &format!("sweep {axis}={value}")) {
            Ok(r) => r,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        for t in 1..=r.rounds {
            let ind = &r.regret_ind[(t - 1) * r.n..t * r.n];
            let avg = &r.regret_avg[(t - 1) * r.n..t * r.n];
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            let max = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let bound = r.bound_thm4(t).map(|b| b.to_string()).unwrap_or_default();
            csv.push_str(&format!(
                "{axis},{value},{t},{},{},{},{},{bound}\n",
                mean(ind),
                max(ind),
                mean(avg),
                max(avg)
            ));
        }
    }
    let mut f = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    f.write_all(csv.as_bytes()).map_err(|e| CliError::io(&path, e))?;
    failure.map_or(Ok(()), Err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_parse_and_apply() {
        let cfg = ExperimentConfig::default();
        assert_eq!("beta".parse::<Axis>().unwrap(), Axis::Beta);
        assert!("seed".parse::<Axis>().is_err());
        assert_eq!(Axis::NoiseFamily.apply(&cfg, "laplace").unwrap().scenario.noise, "laplace");
        assert!(Axis::NoiseFamily.apply(&cfg, "cauchy").is_err());
        assert_eq!(Axis::Beta.apply(&cfg, "1").unwrap().run.beta, 1.0);
        assert!(Axis::Beta.apply(&cfg, "2").is_err());
        assert_eq!(Axis::JamCount.apply(&cfg, "25").unwrap().scenario.jam_count, 25);
        let g = Axis::GraphFamily.apply(&cfg, "random_regular:4").unwrap();
        assert_eq!(g.graph.family, "random_regular");
    }

    #[test]
    fn cell_names_are_path_safe() {
        assert_eq!(cell_dir(Axis::GraphFamily, "erdos_renyi:0.08"), "graph_family_erdos_renyi_0.08");
        assert_eq!(cell_dir(Axis::Beta, "0.9"), "beta_0.9");
    }
}
