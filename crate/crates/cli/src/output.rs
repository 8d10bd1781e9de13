//! CSV and metadata writers. Agents are 1-indexed in every file.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use odwda_core::CommMatrix;

use crate::driver::RunResult;
use crate::error::CliError;

pub const TRACE_COLUMNS: [&str; 10] = [
    "t",
    "agent",
    "regret_ind",
    "regret_avg",
    "bound_thm4",
    "bound_corollary",
    "deviation",
    "deviation_bound",
    "bound_thm4_closed_form",
    "loss",
];

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Streams `P(t)` to `matrices/P_<t>.csv` and its nonzero entries to
/// `weights.csv` as the run progresses.
pub struct MatrixSink {
    matrices: Option<PathBuf>,
    weights: Option<(PathBuf, BufWriter<File>)>,
}

impl MatrixSink {
    pub fn new(dir: &Path, dump_matrices: bool, dump_weights: bool) -> Result<Self, CliError> {
        let matrices = if dump_matrices {
            let m = dir.join("matrices");
            ensure_dir(&m)?;
            Some(m)
        } else {
            None
        };
        let weights = if dump_weights {
            let path = dir.join("weights.csv");
            let mut w = create(&path)?;
            writeln!(w, "t,agent,neighbor,q").map_err(|e| CliError::io(&path, e))?;
            Some((path, w))
        } else {
            None
        };
        Ok(Self { matrices, weights })
    }

    pub fn observe(&mut self, t: usize, p: &CommMatrix) -> Result<(), CliError> {
        if let Some(dir) = &self.matrices {
            let path = dir.join(format!("P_{t}.csv"));
            fs::write(&path, p.to_csv()).map_err(|e| CliError::io(&path, e))?;
        }
        if let Some((path, w)) = &mut self.weights {
            for i in 0..p.n() {
                for (j, &q) in p.row(i).iter().enumerate() {
                    if q != 0.0 {
                        writeln!(w, "{t},{},{},{q}", i + 1, j + 1).map_err(|e| CliError::io(path, e))?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<(), CliError> {
        if let Some((path, mut w)) = self.weights {
            w.flush().map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }
}

pub fn write_trace(r: &RunResult, out: &mut impl Write) -> std::io::Result<()> {
    let mut header = TRACE_COLUMNS.join(",");
    if r.config.output.decisions {
        for k in 1..=r.dim {
            header.push_str(&format!(",x_{k}"));
        }
        for k in 1..=r.dim {
            header.push_str(&format!(",x_tilde_{k}"));
        }
    }
    writeln!(out, "{header}")?;
    for t in 1..=r.rounds {
        let b4 = opt(r.bound_thm4(t));
        let bc = opt(r.bound_corollary(t));
        let bcf = opt(r.bound_closed_form(t));
        for i in 0..r.n {
            let dev = opt(r.deviation.as_ref().map(|d| r.at(d, t, i)));
            let devb = opt(r.deviation_bound.as_ref().map(|d| r.at(d, t, i)));
            write!(
                out,
                "{t},{},{},{},{b4},{bc},{dev},{devb},{bcf},{}",
                i + 1,
                r.at(&r.regret_ind, t, i),
                r.at(&r.regret_avg, t, i),
                r.at(&r.loss, t, i)
            )?;
            if r.config.output.decisions {
                for v in r.decision(t, i).iter().chain(r.running_average(t, i)) {
                    write!(out, ",{v}")?;
                }
            }
            writeln!(out)?;
        }
    }
    if let Some((round, _)) = &r.aborted {
        writeln!(out, "aborted,{round}")?;
    }
    Ok(())
}

pub fn write_summary(r: &RunResult, out: &mut impl Write) -> std::io::Result<()> {
    write!(
        out,
        "agent,rounds,regret_ind,regret_avg,regret_ind_per_sqrt_t,bound_thm4,bound_corollary,\
         bound_thm4_closed_form,max_deviation,max_deviation_bound,jammed"
    )?;
    for k in 1..=r.dim {
        write!(out, ",x_{k}")?;
    }
    writeln!(out)?;
    let t = r.rounds;
    let max_over = |series: &[f64], i: usize| (1..=t).map(|s| r.at(series, s, i)).fold(f64::NEG_INFINITY, f64::max);
    for i in 0..r.n {
        let (ind, avg, x) = if t == 0 {
            (String::new(), String::new(), vec![String::new(); r.dim])
        } else {
            (
                r.at(&r.regret_ind, t, i).to_string(),
                r.at(&r.regret_avg, t, i).to_string(),
                r.decision(t, i).iter().map(|v| v.to_string()).collect(),
            )
        };
        let per_sqrt = if t == 0 { String::new() } else { (r.at(&r.regret_ind, t, i) / (t as f64).sqrt()).to_string() };
        let dev = opt(r.deviation.as_ref().filter(|_| t > 0).map(|d| max_over(d, i)));
        let devb = opt(r.deviation_bound.as_ref().filter(|_| t > 0).map(|d| max_over(d, i)));
        write!(
            out,
            "{},{t},{ind},{avg},{per_sqrt},{},{},{},{dev},{devb},{}",
            i + 1,
            opt(r.bound_thm4(t)),
            opt(r.bound_corollary(t)),
            opt(r.bound_closed_form(t)),
            r.jammed.binary_search(&i).is_ok()
        )?;
        for v in x {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_observations(r: &RunResult, out: &mut impl Write) -> std::io::Result<()> {
    write!(out, "t,agent")?;
    for k in 1..=r.dim {
        write!(out, ",z_{k}")?;
    }
    writeln!(out)?;
    for t in 1..=r.oracle.horizon() {
        for i in 0..r.n {
            write!(out, "{t},{}", i + 1)?;
            for v in r.oracle.observation(t, i) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Resolved configuration plus run results.
pub fn meta_toml(r: &RunResult, command: &str) -> String {
    use toml::Value;
    let f = Value::Float;
    let mut meta = toml::Table::new();
    meta.insert("version".into(), Value::String(VERSION.into()));
    meta.insert("command".into(), Value::String(command.into()));

    let mut res = toml::Table::new();
    res.insert("rounds".into(), Value::Integer(r.rounds as i64));
    res.insert("completed".into(), Value::Boolean(r.aborted.is_none()));
    if let Some((round, e)) = &r.aborted {
        res.insert("aborted_round".into(), Value::Integer(*round as i64));
        res.insert("abort_reason".into(), Value::String(e.to_string()));
    }
    res.insert("theta_star".into(), Value::Array(r.theta_star.iter().map(|&v| f(v)).collect()));
    res.insert("lipschitz".into(), f(r.lipschitz));
    res.insert("radius".into(), f(r.radius));
    res.insert("loss_normalizer".into(), f(r.normalizer));
    res.insert("nu".into(), Value::Integer(r.nu as i64));
    res.insert("delta".into(), Value::Integer(r.delta as i64));
    let source = match (r.config.analysis.gamma, r.gamma) {
        (Some(_), _) => "configured",
        (None, Some(_)) => "empirical",
        (None, None) => "unavailable",
    };
    if let Some(g) = r.gamma {
        res.insert("gamma".into(), f(g));
        if let Ok(c) = r.bound_inputs(g).coefficient() {
            res.insert("coefficient".into(), f(c));
        }
    }
    res.insert("gamma_source".into(), Value::String(source.into()));
    res.insert("gamma_blocks".into(), Value::Integer(r.gamma_taus.len() as i64));
    res.insert("gamma_closed_form".into(), f(r.gamma_closed_form));
    if r.gamma_closed_form < 0.0 {
        res.insert("gamma_closed_form_note".into(), Value::String("vacuous".into()));
    }
    if let Some(pi) = &r.pi {
        res.insert("pi_min".into(), f(pi.as_slice().iter().copied().fold(f64::INFINITY, f64::min)));
        res.insert("pi_max".into(), f(pi.as_slice().iter().copied().fold(0.0, f64::max)));
    }
    res.insert("graph_edges".into(), Value::Integer(r.graph.edge_count() as i64));
    res.insert("max_in_neighbors".into(), Value::Integer(r.graph.max_in_neighbors() as i64));
    res.insert("jammed".into(), Value::Array(r.jammed.iter().map(|&j| Value::Integer(j as i64 + 1)).collect()));
    res.insert("schedule_valid".into(), Value::Boolean(r.schedule_report.is_valid()));
    if let Some(w) = r.schedule_report.first_violation {
        res.insert("schedule_first_violation".into(), Value::Integer(w as i64));
    }
    res.insert("gradient_bound_violations".into(), Value::Integer(r.gradient_violations as i64));

    let mut doc = toml::Table::new();
    doc.insert("meta".into(), Value::Table(meta));
    doc.insert("results".into(), Value::Table(res));
    doc.insert("config".into(), Value::Table(toml::Table::try_from(&r.config).expect("config serializes")));
    toml::to_string(&doc).expect("meta serializes")
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Writes `trace.csv`, `summary.csv`, `meta.toml` and, when enabled,
/// `observations.csv` into `dir`.
pub fn write_run(r: &RunResult, dir: &Path, command: &str) -> Result<(), CliError> {
    ensure_dir(dir)?;
    write_file(&dir.join("trace.csv"), |w| write_trace(r, w))?;
    write_file(&dir.join("summary.csv"), |w| write_summary(r, w))?;
    if r.config.output.dump_observations {
        write_file(&dir.join("observations.csv"), |w| write_observations(r, w))?;
    }
    let path = dir.join("meta.toml");
    fs::write(&path, meta_toml(r, command)).map_err(|e| CliError::io(&path, e))
}

pub fn write_csv_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
