//! Command-line surface of the `odwda` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::presets::{self, FIG5_FAMILIES};
use crate::report::{bounds, graph_stats, graph_stats_csv};
use crate::sweep::{sweep, Axis};
use crate::{output, run_experiment};

#[derive(Debug, Parser)]
#[command(name = "odwda", version, about = "Distributed online optimization simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write trace.csv, summary.csv and meta.toml.
    Run(RunArgs),
    /// Connectivity diagnostics for one or more graph families.
    GraphStats(GraphStatsArgs),
    /// Evaluate the regret bounds without a full run.
    Bounds(BoundsArgs),
    /// Run one experiment per value of a configuration axis.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML experiment file, applied on top of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// fig2, fig3, fig4 or fig5.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write every communication matrix to matrices/P_<t>.csv.
    #[arg(long)]
    pub dump_matrices: bool,
    /// Write every agent's neighbor weights to weights.csv.
    #[arg(long)]
    pub dump_weights: bool,
    /// Number of rounds T.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Number of agents.
    #[arg(long)]
    pub agents: Option<usize>,
    /// Graph family label such as `random_regular:4` or `erdos_renyi:0.3`.
    #[arg(long)]
    pub graph: Option<String>,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Uniform weights over each active set instead of adaptive weights.
    #[arg(long)]
    pub no_adaptive: bool,
    /// Add decision columns to trace.csv.
    #[arg(long)]
    pub decisions: bool,
    /// Keep every matrix in memory and report the deviation bound.
    #[arg(long)]
    pub audit: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct GraphStatsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated family labels such as `path,random_regular:4`.
    #[arg(long, value_delimiter = ',')]
    pub families: Vec<String>,
    /// Rounds simulated to estimate gamma (0 skips the estimate).
    #[arg(long)]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub nu: Option<usize>,
    /// Rounds simulated to estimate gamma when it is not given.
    #[arg(long)]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// noise_family, graph_family, beta or jam_count.
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated values along the axis.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
}

/// Preset, then config file, then flags.
pub fn resolve(c: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &c.preset {
        Some(p) => presets::preset(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &c.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg = cfg.overlay_toml(&text)?;
    }
    if let Some(v) = c.seed {
        cfg.run.seed = v;
    }
    if let Some(v) = &c.out {
        cfg.output.dir = v.display().to_string();
    }
    if let Some(v) = c.horizon {
        cfg.run.horizon = v;
    }
    if let Some(v) = c.agents {
        cfg.run.n = v;
    }
    if let Some(v) = &c.graph {
        cfg.graph.apply_label(v)?;
    }
    if let Some(v) = c.threads {
        cfg.run.threads = v;
    }
    if let Some(v) = c.beta {
        cfg.run.beta = v;
    }
    cfg.run.adaptive &= !c.no_adaptive;
    cfg.output.dump_matrices |= c.dump_matrices;
    cfg.output.dump_weights |= c.dump_weights;
    cfg.output.decisions |= c.decisions;
    if c.audit {
        cfg.analysis.audit = Some(true);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => {
            let cfg = resolve(&a.common)?;
            let dir = PathBuf::from(&cfg.output.dir);
            let r = run_experiment(&cfg, &dir, "run")?;
            println!("wrote {} rounds for {} agents to {}", r.rounds, r.n, dir.display());
            Ok(())
        }
        Command::GraphStats(a) => {
            let cfg = resolve(&a.common)?;
            let families: Vec<String> = if !a.families.is_empty() {
                a.families.clone()
            } else if a.common.preset.as_deref() == Some("fig5") {
                FIG5_FAMILIES.iter().map(|s| s.to_string()).collect()
            } else {
                vec![cfg.graph.label()]
            };
            let mut rows = Vec::with_capacity(families.len());
            for f in &families {
                let mut c = cfg.clone();
                c.graph.apply_label(f)?;
                rows.push(graph_stats(&c, a.burn_in)?);
            }
            let csv = graph_stats_csv(&rows);
            let dir = PathBuf::from(&cfg.output.dir);
            output::ensure_dir(&dir)?;
            output::write_csv_file(&dir.join("graph_stats.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
        Command::Bounds(a) => {
            let mut cfg = resolve(&a.common)?;
            if a.gamma.is_some() {
                cfg.analysis.gamma = a.gamma;
            }
            if a.nu.is_some() {
                cfg.analysis.nu = a.nu;
            }
            if a.burn_in.is_some() {
                cfg.analysis.burn_in = a.burn_in;
            }
            cfg.validate()?;
            print!("{}", bounds(&cfg, cfg.run.horizon)?.render());
            Ok(())
        }
        Command::Sweep(a) => {
            let cfg = resolve(&a.common)?;
            let fallback = a.common.preset.as_deref().and_then(presets::default_sweep);
            let (axis, values) = match (&a.axis, fallback) {
                (Some(axis), _) => (axis.parse::<Axis>()?, a.values.clone()),
                (None, Some((axis, defaults))) => {
                    let values = if a.values.is_empty() { defaults } else { a.values.clone() };
                    (axis.parse::<Axis>()?, values)
                }
                (None, None) => return Err(CliError::Config("sweep needs --axis".into())),
            };
            let dir = PathBuf::from(&cfg.output.dir);
            sweep(&cfg, axis, &values, &dir)?;
            println!("swept {axis} over {} values into {}", values.len(), dir.display());
            Ok(())
        }
    }
}
