//! Distributed weighted dual averaging: dual mixing, proximal projection and
//! running averages, plus the network-level reference sequences.

use rayon::prelude::*;

use crate::doa::AllocatorState;
use crate::error::{param, Error, Result};
use crate::graph::WeightedDigraph;
use crate::linalg::{norm2, Matrix};
use crate::stochastic::{CommMatrix, WeightingVector, POSITIVITY_THRESHOLD, ROW_SUM_TOL};

/// Closed convex feasible set containing the origin.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    Ball { radius: f64, dim: usize },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl FeasibleSet {
    pub fn ball(radius: f64, dim: usize) -> Result<Self> {
        let s = FeasibleSet::Ball { radius, dim };
        s.validate()?;
        Ok(s)
    }

    pub fn cube(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let s = FeasibleSet::Box { lo, hi };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FeasibleSet::Ball { radius, dim } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(param(format!("ball radius must be positive, got {radius}")));
                }
                if *dim == 0 {
                    return Err(param("dimension must be at least 1"));
                }
            }
            FeasibleSet::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::Dimension { expected: lo.len(), got: hi.len() });
                }
                if lo.is_empty() {
                    return Err(param("dimension must be at least 1"));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l < h && *l <= 0.0 && *h >= 0.0)) {
                    return Err(param("box needs lo < hi and must contain the origin"));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Ball { dim, .. } => *dim,
            FeasibleSet::Box { lo, .. } => lo.len(),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            FeasibleSet::Ball { radius, .. } => norm2(x) <= radius + tol,
            FeasibleSet::Box { lo, hi } => {
                x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
            }
        }
    }

    /// Euclidean projection of a point.
    pub fn nearest(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FeasibleSet::Ball { radius, .. } => {
                let r = norm2(x);
                if r <= *radius {
                    x.to_vec()
                } else {
                    x.iter().map(|v| v * radius / r).collect()
                }
            }
            FeasibleSet::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect(),
        }
    }
}

/// `α(t) = k/√t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    k: f64,
}

impl StepSchedule {
    pub fn new(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(param(format!("step constant must be positive, got {k}")));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Step size for round `t`; `t = 0` is treated as `t = 1`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.k / (t.max(1) as f64).sqrt()
    }
}

/// Source of local costs `f_{t,i}` and their subgradients.
pub trait LossOracle: Sync {
    fn n_agents(&self) -> usize;

    fn dim(&self) -> usize;

    /// `f_{t,i}(x)`.
    fn loss(&self, t: usize, i: usize, x: &[f64]) -> f64;

    /// An element of `∂f_{t,i}(x)`.
    fn subgradient(&self, t: usize, i: usize, x: &[f64]) -> Vec<f64>;

    /// Bound on subgradient norms inside the feasible set.
    fn lipschitz(&self) -> f64;

    /// `f_t(x) = (1/n) Σ_i f_{t,i}(x)`.
    fn global_cost(&self, t: usize, x: &[f64]) -> f64 {
        let n = self.n_agents();
        (0..n).map(|i| self.loss(t, i, x)).sum::<f64>() / n as f64
    }
}

/// `argmin_{x∈χ} ⟨y, x⟩ + ½‖x‖²/α`.
pub fn project(y: &[f64], alpha: f64, chi: &FeasibleSet) -> Result<Vec<f64>> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(param(format!("alpha must be positive, got {alpha}")));
    }
    if y.len() != chi.dim() {
        return Err(Error::Dimension { expected: chi.dim(), got: y.len() });
    }
    Ok(match chi {
        FeasibleSet::Ball { radius, .. } => {
            let ny = norm2(y);
            if alpha * ny <= *radius {
                y.iter().map(|v| -alpha * v).collect()
            } else {
                y.iter().map(|v| -radius * v / ny).collect()
            }
        }
        FeasibleSet::Box { lo, hi } => {
            y.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| (-alpha * v).clamp(*l, *h)).collect()
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub x_tilde: Vec<f64>,
    pub allocator: AllocatorState,
}

impl AgentState {
    /// `y = x = x̃ = 0`.
    pub fn new(dim: usize, allocator: AllocatorState) -> Self {
        Self { y: vec![0.0; dim], x: vec![0.0; dim], x_tilde: vec![0.0; dim], allocator }
    }
}

/// Local losses and subgradients at the current decisions of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub losses: Vec<f64>,
    pub subgradients: Vec<Vec<f64>>,
}

/// Queries every agent's oracle at its current decision `x_i(t)`.
pub fn evaluate<O: LossOracle + ?Sized>(states: &[AgentState], oracle: &O, t: usize, parallel: bool) -> Result<RoundRecord> {
    let eval = |(i, s): (usize, &AgentState)| -> Result<(f64, Vec<f64>)> {
        let f = oracle.loss(t, i, &s.x);
        let g = oracle.subgradient(t, i, &s.x);
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { round: t, agent: i });
        }
        if g.len() != s.x.len() {
            return Err(Error::Dimension { expected: s.x.len(), got: g.len() });
        }
        Ok((f, g))
    };
    let pairs: Vec<(f64, Vec<f64>)> = if parallel {
        states.par_iter().enumerate().map(eval).collect::<Result<_>>()?
    } else {
        states.iter().enumerate().map(eval).collect::<Result<_>>()?
    };
    let (losses, subgradients) = pairs.into_iter().unzip();
    Ok(RoundRecord { losses, subgradients })
}

/// Mixing, projection and averaging for round `t` from a common snapshot:
/// `y_i ← Σ_j P_ij y_j + g_i`, `x_i ← project(y_i, α(t))`,
/// `x̃_i ← (t·x̃_i + x_i)/(t+1)`.
pub fn dwda_step(
    states: &mut [AgentState],
    p: &CommMatrix,
    subgradients: &[Vec<f64>],
    t: usize,
    sched: &StepSchedule,
    chi: &FeasibleSet,
    parallel: bool,
) -> Result<()> {
    let n = states.len();
    if p.n() != n {
        return Err(Error::Dimension { expected: n, got: p.n() });
    }
    if subgradients.len() != n {
        return Err(Error::Dimension { expected: n, got: subgradients.len() });
    }
    if t == 0 {
        return Err(param("rounds are numbered from 1"));
    }
    let alpha = sched.alpha(t);
    let ys: Vec<&[f64]> = states.iter().map(|s| s.y.as_slice()).collect();
    let update = |i: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut y = subgradients[i].clone();
        for (j, &w) in p.row(i).iter().enumerate() {
            if w != 0.0 {
                for (acc, v) in y.iter_mut().zip(ys[j]) {
                    *acc += w * v;
                }
            }
        }
        let x = project(&y, alpha, chi)?;
        Ok((y, x))
    };
    let next: Vec<(Vec<f64>, Vec<f64>)> = if parallel {
        (0..n).into_par_iter().map(update).collect::<Result<_>>()?
    } else {
        (0..n).map(update).collect::<Result<_>>()?
    };
    let tf = t as f64;
    for (s, (y, x)) in states.iter_mut().zip(next) {
        for (xt, v) in s.x_tilde.iter_mut().zip(&x) {
            *xt = (tf * *xt + v) / (tf + 1.0);
        }
        s.y = y;
        s.x = x;
    }
    Ok(())
}

/// One full round with a given communication matrix.
pub fn dwda_round<O: LossOracle + ?Sized>(
    states: &mut [AgentState],
    p: &CommMatrix,
    oracle: &O,
    t: usize,
    sched: &StepSchedule,
    chi: &FeasibleSet,
) -> Result<RoundRecord> {
    let record = evaluate(states, oracle, t, false)?;
    dwda_step(states, p, &record.subgradients, t, sched, chi, false)?;
    Ok(record)
}

/// Checks that a matrix can be consumed row-wise: nonnegative rows summing
/// to one with a positive diagonal, supported on `pattern` when given.
pub fn mixing_row_convention_check(p: &Matrix, pattern: Option<&WeightedDigraph>) -> bool {
    let n = p.rows();
    if p.cols() != n {
        return false;
    }
    let rows_ok = (0..n).all(|i| {
        let row = p.row(i);
        row.iter().all(|v| *v >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= ROW_SUM_TOL && row[i] > POSITIVITY_THRESHOLD
    });
    rows_ok
        && pattern.is_none_or(|g| g.n() == n && CommMatrix::new(p.clone()).is_ok_and(|c| c.respects_pattern(g)))
}

/// Network-level averages at one round.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralPoint {
    pub y_bar: Vec<f64>,
    pub g_bar: Vec<f64>,
    pub phi: Vec<f64>,
    /// `‖ȳ(t) − ȳ(t−1) − ḡ(t−1)‖∞`; zero at the first round.
    pub residual: f64,
}

/// `Σ_i π_i v_i`.
pub fn weighted_average(vs: &[Vec<f64>], pi: &WeightingVector) -> Vec<f64> {
    let d = vs.first().map_or(0, Vec::len);
    let mut out = vec![0.0; d];
    for (v, &w) in vs.iter().zip(pi.as_slice()) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    out
}

/// `ȳ(t)`, `ḡ(t)` and `φ(t)` from recorded duals and subgradients, where
/// `ys[s]` and `gs[s]` hold round `s + 1`. `φ(t) = project(ȳ(t), α(t−1))`.
pub fn central_reference(
    ys: &[Vec<Vec<f64>>],
    gs: &[Vec<Vec<f64>>],
    pi: &WeightingVector,
    sched: &StepSchedule,
    chi: &FeasibleSet,
) -> Result<Vec<CentralPoint>> {
    if ys.len() != gs.len() {
        return Err(Error::Dimension { expected: ys.len(), got: gs.len() });
    }
    let mut out: Vec<CentralPoint> = Vec::with_capacity(ys.len());
    for (s, (y, g)) in ys.iter().zip(gs).enumerate() {
        let y_bar = weighted_average(y, pi);
        let g_bar = weighted_average(g, pi);
        let residual = match out.last() {
            Some(prev) => y_bar
                .iter()
                .zip(prev.y_bar.iter().zip(&prev.g_bar))
                .map(|(a, (b, c))| (a - b - c).abs())
                .fold(0.0, f64::max),
            None => 0.0,
        };
        let phi = project(&y_bar, sched.alpha(s), chi)?;
        out.push(CentralPoint { y_bar, g_bar, phi, residual });
    }
    Ok(out)
}

/// `‖ȳ − y_i‖₂` per agent.
pub fn deviation(ys: &[Vec<f64>], pi: &WeightingVector) -> Vec<f64> {
    let y_bar = weighted_average(ys, pi);
    ys.iter().map(|y| crate::linalg::dist2(&y_bar, y)).collect()
}
