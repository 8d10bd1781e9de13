//! Seeded orchestration of one experiment.
//!
//! Each round: observe, evaluate local costs and subgradients, record regret,
//! update every allocator with its active set's losses, assemble `P(t)` and
//! take the dual averaging step.

use rayon::prelude::*;

use odwda_core::doa::active_set;
use odwda_core::metrics::{corollary_bound, gamma_closed_form_bound, regret_bound_with, NetworkErrorTracker};
use odwda_core::rng::{derive_seed, tag};
use odwda_core::scenario::{choose_jammed, default_loss_normalizer, draw_sensors, prox_radius};
use odwda_core::stochastic::{nu_fixed, nu_switching, stationary_vector, EmpiricalPi, GammaAccumulator};
use odwda_core::switching::{validate_schedule, ScheduleReport};
use odwda_core::{
    assemble_comm_matrix, dwda_step, evaluate, generate, AgentState, AllocatorState, BoundInputs, CommMatrix,
    EstimationOracle, FeasibleSet, GraphFamilySpec, LossOracle, Normalization, RegretSeries, ScheduleMode,
    StepSchedule, TopologySchedule, WeightedDigraph, WeightingVector,
};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Attempts at drawing a strongly connected instance of a random family.
pub const GRAPH_ATTEMPTS: u64 = 100;

/// Slack allowed on `‖g‖ ≤ L` before a subgradient is counted as exceeding
/// the Lipschitz constant.
const GRADIENT_TOL: f64 = 1e-12;

/// Called with every assembled `P(t)` before it is used.
pub type MatrixObserver<'a> = dyn FnMut(usize, &CommMatrix) -> Result<(), CliError> + 'a;

/// Draws the base graph, redrawing random families until strongly connected.
pub fn build_graph(cfg: &ExperimentConfig) -> Result<WeightedDigraph, CliError> {
    let family = cfg.graph.family()?;
    let attempts = if family.is_random() { GRAPH_ATTEMPTS } else { 1 };
    for attempt in 0..attempts {
        let spec = GraphFamilySpec::new(family.clone(), cfg.run.n, derive_seed(cfg.run.seed, tag::GRAPH, attempt, 0));
        let g = generate(&spec).map_err(CliError::config)?;
        if g.is_strongly_connected() {
            return Ok(g);
        }
    }
    Err(CliError::Config(format!(
        "{} graph on {} nodes is not strongly connected (after {attempts} draws)",
        cfg.graph.label(),
        cfg.run.n
    )))
}

/// Jammed sensors, 0-indexed and sorted.
pub fn resolve_jammed(cfg: &ExperimentConfig) -> Result<Vec<usize>, CliError> {
    let s = &cfg.scenario;
    if !s.jammed.is_empty() {
        let mut j: Vec<usize> = s.jammed.iter().map(|&v| v - 1).collect();
        j.sort_unstable();
        j.dedup();
        return Ok(j);
    }
    choose_jammed(cfg.run.n, s.jam_count, cfg.run.seed).map_err(CliError::config)
}

pub fn build_schedule(cfg: &ExperimentConfig, base: WeightedDigraph, jammed: &[usize]) -> Result<TopologySchedule, CliError> {
    let s = &cfg.schedule;
    let mode = match s.mode.as_str() {
        "fixed" => ScheduleMode::Fixed,
        "partition" => ScheduleMode::Partition { delta: s.delta },
        "random_drop" => ScheduleMode::RandomDrop { p_drop: s.p_drop, delta: s.delta },
        "jam_isolation" => ScheduleMode::JamIsolation { jammed: jammed.to_vec() },
        other => return Err(CliError::Config(format!("unknown schedule mode {other:?}"))),
    };
    TopologySchedule::new(base, mode, cfg.run.seed).map_err(CliError::config)
}

/// `(ν, δ)` for a schedule: the base graph's value when static, the
/// worst case otherwise. A configured `ν` wins.
pub fn connectivity(cfg: &ExperimentConfig, sched: &TopologySchedule) -> Result<(usize, usize), CliError> {
    let delta = sched.delta();
    let nu = match cfg.analysis.nu {
        Some(nu) => nu,
        None if sched.is_static() => nu_fixed(sched.base()).map_err(CliError::config)?,
        None => nu_switching(sched.base().n()),
    };
    Ok((nu, delta))
}

/// Everything recorded by one run. Per-(round, agent) arrays are flat with
/// index `(t − 1)·n + i`; decision histories add a trailing `d` axis.
#[derive(Debug)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub graph: WeightedDigraph,
    pub jammed: Vec<usize>,
    pub oracle: EstimationOracle,
    pub n: usize,
    pub dim: usize,
    pub rounds: usize,
    pub theta_star: Vec<f64>,
    pub lipschitz: f64,
    pub radius: f64,
    pub normalizer: f64,
    pub nu: usize,
    pub delta: usize,
    pub gamma: Option<f64>,
    pub gamma_taus: Vec<f64>,
    pub gamma_closed_form: f64,
    pub pi: Option<WeightingVector>,
    pub regret_ind: Vec<f64>,
    pub regret_avg: Vec<f64>,
    pub loss: Vec<f64>,
    pub deviation: Option<Vec<f64>>,
    pub deviation_bound: Option<Vec<f64>>,
    pub xs: Vec<f64>,
    pub x_tilde: Vec<f64>,
    pub ys: Vec<f64>,
    pub matrices: Option<Vec<CommMatrix>>,
    pub schedule_report: ScheduleReport,
    pub gradient_violations: usize,
    pub aborted: Option<(usize, odwda_core::Error)>,
}

impl RunResult {
    pub fn at(&self, series: &[f64], t: usize, i: usize) -> f64 {
        series[(t - 1) * self.n + i]
    }

    pub fn decision(&self, t: usize, i: usize) -> &[f64] {
        let k = (t - 1) * self.n + i;
        &self.xs[k * self.dim..(k + 1) * self.dim]
    }

    pub fn running_average(&self, t: usize, i: usize) -> &[f64] {
        let k = (t - 1) * self.n + i;
        &self.x_tilde[k * self.dim..(k + 1) * self.dim]
    }

    pub fn dual(&self, t: usize, i: usize) -> &[f64] {
        let k = (t - 1) * self.n + i;
        &self.ys[k * self.dim..(k + 1) * self.dim]
    }

    pub fn bound_inputs(&self, gamma: f64) -> BoundInputs {
        BoundInputs {
            r: self.radius,
            l: self.lipschitz,
            k: self.config.run.k,
            n: self.n,
            gamma,
            nu: self.nu,
            delta: self.delta,
        }
    }

    /// Cumulative regret bound at `t` from the empirical (or configured) `γ`.
    pub fn bound_thm4(&self, t: usize) -> Option<f64> {
        let b = self.bound_inputs(self.gamma?);
        regret_bound_with(&b, t, Normalization::Cumulative).ok()
    }

    pub fn bound_corollary(&self, t: usize) -> Option<f64> {
        corollary_bound(&self.bound_inputs(self.gamma?), t).ok()
    }

    /// Cumulative regret bound at `t` from the closed-form `γ`, when that
    /// value is informative.
    pub fn bound_closed_form(&self, t: usize) -> Option<f64> {
        if !(0.0..1.0).contains(&self.gamma_closed_form) {
            return None;
        }
        regret_bound_with(&self.bound_inputs(self.gamma_closed_form), t, Normalization::Cumulative).ok()
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    simulate_observed(cfg, &mut |_, _| Ok(()))
}

pub fn simulate_observed(cfg: &ExperimentConfig, observer: &mut MatrixObserver<'_>) -> Result<RunResult, CliError> {
    cfg.validate()?;
    let params = cfg.scenario.params()?;
    let n = cfg.run.n;
    let horizon = cfg.run.horizon;
    let parallel = cfg.run.threads != 1;
    let seed = cfg.run.seed;

    let graph = build_graph(cfg)?;
    let jammed = resolve_jammed(cfg)?;
    let sched = build_schedule(cfg, graph.clone(), &jammed)?;
    let (nu, delta) = connectivity(cfg, &sched)?;
    let schedule_report = validate_schedule(&sched, horizon);

    let sensors = draw_sensors(&params, n, &jammed, seed).map_err(CliError::config)?;
    let oracle = EstimationOracle::generate(&params, sensors, horizon, seed).map_err(CliError::config)?;
    let chi: FeasibleSet = params.feasible_set().map_err(CliError::config)?;
    let theta_star = oracle.best_fixed(&chi).map_err(CliError::Analysis)?;
    let lipschitz = oracle.lipschitz();
    let radius = prox_radius(&params);
    let normalizer = cfg.run.loss_normalizer.unwrap_or_else(|| default_loss_normalizer(&params));
    let beta = if cfg.run.adaptive { cfg.run.beta } else { 1.0 };
    let step = StepSchedule::new(cfg.run.k).map_err(CliError::config)?;
    let d = params.dim();

    let mut states: Vec<AgentState> = (0..n)
        .map(|i| AllocatorState::new(i, n, beta, normalizer).map(|a| AgentState::new(d, a)))
        .collect::<odwda_core::Result<_>>()
        .map_err(CliError::config)?;

    let audit = cfg.audit();
    let mut regret = RegretSeries::new(n, theta_star.clone());
    let mut gamma_acc = GammaAccumulator::new(n, delta, nu).map_err(CliError::config)?;
    let mut pi_est = EmpiricalPi::new(n, cfg.analysis.pi_tol);
    let mut matrices = audit.then(Vec::new);
    let mut last_p: Option<CommMatrix> = None;

    let cap = horizon * n;
    let mut regret_ind = Vec::with_capacity(cap);
    let mut regret_avg = Vec::with_capacity(cap);
    let mut loss = Vec::with_capacity(cap);
    let mut xs = Vec::with_capacity(cap * d);
    let mut x_tilde = Vec::with_capacity(cap * d);
    let mut ys = Vec::with_capacity(cap * d);
    let mut gradient_violations = 0;
    let mut aborted = None;
    let mut rounds = 0;

    for t in 1..=horizon {
        let topology = if sched.is_static() { None } else { Some(sched.edges_at(t)) };
        let topology = topology.as_ref().unwrap_or(sched.base());
        let round = (|| -> odwda_core::Result<CommMatrix> {
            let rec = evaluate(&states, &oracle, t, parallel)?;
            gradient_violations += rec
                .subgradients
                .iter()
                .filter(|g| odwda_core::linalg::norm2(g) > lipschitz + GRADIENT_TOL)
                .count();

            let xr: Vec<&[f64]> = states.iter().map(|s| s.x.as_slice()).collect();
            let xtr: Vec<&[f64]> = states.iter().map(|s| s.x_tilde.as_slice()).collect();
            regret.record(&oracle, t, &xr, &xtr);
            regret_ind.extend_from_slice(regret.individual());
            regret_avg.extend_from_slice(regret.running_average());
            loss.extend_from_slice(&rec.losses);
            for s in &states {
                xs.extend_from_slice(&s.x);
                x_tilde.extend_from_slice(&s.x_tilde);
                ys.extend_from_slice(&s.y);
            }

            let update = |(i, s): (usize, &mut AgentState)| {
                let observed: Vec<(usize, f64)> =
                    active_set(topology, i).into_iter().map(|j| (j, rec.losses[j])).collect();
                s.allocator.update(&observed)
            };
            if parallel {
                states.par_iter_mut().enumerate().try_for_each(update)?;
            } else {
                states.iter_mut().enumerate().try_for_each(update)?;
            }
            let allocators: Vec<AllocatorState> = states.iter().map(|s| s.allocator.clone()).collect();
            let p = assemble_comm_matrix(&allocators, topology)?;
            dwda_step(&mut states, &p, &rec.subgradients, t, &step, &chi, parallel)?;
            Ok(p)
        })();
        match round {
            Ok(p) => {
                observer(t, &p)?;
                gamma_acc.push(&p).map_err(CliError::Analysis)?;
                pi_est.push(&p).map_err(CliError::Analysis)?;
                if let Some(m) = matrices.as_mut() {
                    m.push(p.clone());
                }
                last_p = Some(p);
                rounds = t;
            }
            Err(e) => {
                // Drop the partial row block of the failed round.
                regret_ind.truncate((t - 1) * n);
                regret_avg.truncate((t - 1) * n);
                loss.truncate((t - 1) * n);
                xs.truncate((t - 1) * n * d);
                x_tilde.truncate((t - 1) * n * d);
                ys.truncate((t - 1) * n * d);
                aborted = Some((t, e));
                break;
            }
        }
    }

    let gamma = cfg.analysis.gamma.or_else(|| gamma_acc.gamma().ok());
    let gamma_closed_form = gamma_closed_form_bound(n, graph.max_in_neighbors(), delta, nu);
    let pi = match pi_est.result() {
        Some(pi) => Some(pi.clone()),
        None => last_p.as_ref().and_then(|p| stationary_vector(p, cfg.analysis.pi_tol).ok()),
    };

    let deviation = pi.as_ref().map(|pi| {
        let mut dev = Vec::with_capacity(rounds * n);
        for t in 0..rounds {
            let block = &ys[t * n * d..(t + 1) * n * d];
            let mut y_bar = vec![0.0; d];
            for (w, yj) in pi.as_slice().iter().zip(block.chunks(d)) {
                for (acc, v) in y_bar.iter_mut().zip(yj) {
                    *acc += w * v;
                }
            }
            dev.extend(block.chunks(d).map(|yi| odwda_core::linalg::dist2(&y_bar, yi)));
        }
        dev
    });

    let deviation_bound = match (&matrices, &pi) {
        (Some(ms), Some(pi)) => {
            let mut tracker = NetworkErrorTracker::new(lipschitz, pi.clone(), cfg.analysis.retire_tol);
            let mut out = Vec::with_capacity(rounds * n);
            for p in ms.iter().take(rounds) {
                out.extend(tracker.bounds());
                tracker.push(p).map_err(CliError::Analysis)?;
            }
            Some(out)
        }
        _ => None,
    };

    Ok(RunResult {
        config: cfg.clone(),
        graph,
        jammed,
        oracle,
        n,
        dim: d,
        rounds,
        theta_star,
        lipschitz,
        radius,
        normalizer,
        nu,
        delta,
        gamma,
        gamma_taus: gamma_acc.taus().to_vec(),
        gamma_closed_form,
        pi,
        regret_ind,
        regret_avg,
        loss,
        deviation,
        deviation_bound,
        xs,
        x_tilde,
        ys,
        matrices,
        schedule_report,
        gradient_violations,
        aborted,
    })
}

/// Runs `f` on a pool of `threads` workers; 0 uses the global pool.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(CliError::config)?;
    Ok(pool.install(f))
}
