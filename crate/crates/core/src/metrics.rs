//! Regret series, theoretical bounds and the network-error diagnostic.

use crate::dwda::LossOracle;
use crate::error::{param, Error, Result};
use crate::linalg::Matrix;
use crate::stochastic::{CommMatrix, WeightingVector};

/// Cumulative regret `Σ_{s≤t} f_s(x(s)) − f_s(x*)` of a decision sequence,
/// where `xs[s]` is the decision at round `s + 1`.
pub fn cumulative_regret<O: LossOracle + ?Sized>(oracle: &O, xs: &[Vec<f64>], x_star: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    xs.iter()
        .enumerate()
        .map(|(s, x)| {
            acc += oracle.global_cost(s + 1, x) - oracle.global_cost(s + 1, x_star);
            acc
        })
        .collect()
}

/// `R_t(x*, x_i)` from the recorded decisions `x_i(t)`.
pub fn regret_individual<O: LossOracle + ?Sized>(oracle: &O, decisions: &[Vec<f64>], x_star: &[f64]) -> Vec<f64> {
    cumulative_regret(oracle, decisions, x_star)
}

/// `R_t(x*, x̃_i)` from the recorded running averages `x̃_i(t)`.
pub fn regret_running_average<O: LossOracle + ?Sized>(oracle: &O, averages: &[Vec<f64>], x_star: &[f64]) -> Vec<f64> {
    cumulative_regret(oracle, averages, x_star)
}

/// Per-agent cumulative regrets maintained one round at a time.
#[derive(Debug, Clone)]
pub struct RegretSeries {
    x_star: Vec<f64>,
    individual: Vec<f64>,
    running_average: Vec<f64>,
    rounds: usize,
}

impl RegretSeries {
    pub fn new(n: usize, x_star: Vec<f64>) -> Self {
        Self { x_star, individual: vec![0.0; n], running_average: vec![0.0; n], rounds: 0 }
    }

    /// Adds round `t` given each agent's `x_i(t)` and `x̃_i(t)`.
    pub fn record<O: LossOracle + ?Sized>(&mut self, oracle: &O, t: usize, xs: &[&[f64]], x_tildes: &[&[f64]]) {
        let f_star = oracle.global_cost(t, &self.x_star);
        for (acc, x) in self.individual.iter_mut().zip(xs) {
            *acc += oracle.global_cost(t, x) - f_star;
        }
        for (acc, x) in self.running_average.iter_mut().zip(x_tildes) {
            *acc += oracle.global_cost(t, x) - f_star;
        }
        self.rounds = t;
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    pub fn individual(&self) -> &[f64] {
        &self.individual
    }

    pub fn running_average(&self) -> &[f64] {
        &self.running_average
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }
}

/// `f_t(x̃(t)) − (1/t) Σ_{s≤t} f_t(x(s))`; nonpositive by convexity.
/// `history[s]` is the decision at round `s + 1`.
pub fn jensen_gap<O: LossOracle + ?Sized>(oracle: &O, t: usize, history: &[Vec<f64>], x_tilde: &[f64]) -> f64 {
    let past = &history[..t];
    let mean = past.iter().map(|x| oracle.global_cost(t, x)).sum::<f64>() / t as f64;
    oracle.global_cost(t, x_tilde) - mean
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub r: f64,
    pub l: f64,
    pub k: f64,
    pub n: usize,
    pub gamma: f64,
    pub nu: usize,
    pub delta: usize,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(param(format!("gamma {} gives no contraction certificate", self.gamma)));
        }
        if self.nu == 0 || self.delta == 0 || self.n == 0 {
            return Err(param("n, nu and delta must be at least 1"));
        }
        if !(self.k > 0.0 && self.r >= 0.0 && self.l >= 0.0) {
            return Err(param("k must be positive and R, L nonnegative"));
        }
        Ok(())
    }

    /// `R²/k + kL²(6n/(1−γ) + 6nδν + 1)`.
    pub fn coefficient(&self) -> Result<f64> {
        self.validate()?;
        let n = self.n as f64;
        let network = 6.0 * n / (1.0 - self.gamma) + 6.0 * n * (self.delta * self.nu) as f64 + 1.0;
        Ok(self.r * self.r / self.k + self.k * self.l * self.l * network)
    }
}

/// Whether a bound applies to cumulative regret or to its time average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `coefficient · √T`.
    Cumulative,
    /// `coefficient / √T`.
    TimeAveraged,
}

/// `(R²/k + kL²(6n/(1−γ) + 6nδν + 1))·√T`.
pub fn regret_bound(b: &BoundInputs, t: usize) -> Result<f64> {
    regret_bound_with(b, t, Normalization::Cumulative)
}

pub fn regret_bound_with(b: &BoundInputs, t: usize, norm: Normalization) -> Result<f64> {
    let c = b.coefficient()?;
    let s = (t as f64).sqrt();
    Ok(match norm {
        Normalization::Cumulative => c * s,
        Normalization::TimeAveraged => c / s,
    })
}

/// Bound for regret measured at running averages: twice [`regret_bound`].
pub fn corollary_bound(b: &BoundInputs, t: usize) -> Result<f64> {
    Ok(2.0 * regret_bound(b, t)?)
}

/// `1 − n/(max_nbrs + 1)^{δν}`. Negative values carry no information.
pub fn gamma_closed_form_bound(n: usize, max_nbrs: usize, delta: usize, nu: usize) -> f64 {
    let exponent = (delta * nu) as f64;
    1.0 - n as f64 / ((max_nbrs + 1) as f64).powf(exponent)
}

/// `L Σ_{s=1}^{t−2} Σ_j |[P(t−1)⋯P(s+1)]_ij − π_j| + 2L`, evaluated from
/// stored matrices with `p_seq[s]` holding `P(s + 1)`.
pub fn network_error_bound(l: f64, p_seq: &[CommMatrix], pi: &WeightingVector, t: usize, i: usize) -> Result<f64> {
    if t < 3 {
        return Ok(2.0 * l);
    }
    if p_seq.len() < t - 1 {
        return Err(Error::Dimension { expected: t - 1, got: p_seq.len() });
    }
    let n = pi.len();
    let mut row = vec![0.0; n];
    row[i] = 1.0;
    let mut sum = 0.0;
    // Row i of P(t−1)⋯P(s+1), extended one factor to the right per step.
    for s in (1..=t - 2).rev() {
        row = p_seq[s].matrix().vec_mul(&row)?;
        sum += row.iter().zip(pi.as_slice()).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(l * sum + 2.0 * l)
}

/// Streaming form of [`network_error_bound`] for every agent.
///
/// Keeps the suffix products `P(m)⋯P(s+1)` for each `s`. With a positive
/// `retire_tol`, a product whose entries are all within `retire_tol` of `π`
/// is dropped and charged `n·retire_tol` per row from then on, which keeps
/// the result an upper bound on the exact value. A zero tolerance gives the
/// exact value.
#[derive(Debug, Clone)]
pub struct NetworkErrorTracker {
    l: f64,
    pi: WeightingVector,
    retire_tol: f64,
    products: Vec<Matrix>,
    retired: usize,
    pushed: usize,
}

impl NetworkErrorTracker {
    pub fn new(l: f64, pi: WeightingVector, retire_tol: f64) -> Self {
        Self { l, pi, retire_tol, products: Vec::new(), retired: 0, pushed: 0 }
    }

    /// Consumes `P(m)` for the next `m`.
    pub fn push(&mut self, p: &CommMatrix) -> Result<()> {
        self.pushed += 1;
        for q in &mut self.products {
            *q = p.matrix().mul(q)?;
        }
        if self.pushed >= 2 {
            self.products.push(p.matrix().clone());
        }
        if self.retire_tol > 0.0 {
            let pi = self.pi.as_slice();
            let tol = self.retire_tol;
            let before = self.products.len();
            self.products.retain(|q| {
                !(0..q.rows()).all(|r| q.row(r).iter().zip(pi).all(|(a, b)| (a - b).abs() <= tol))
            });
            self.retired += before - self.products.len();
        }
        Ok(())
    }

    /// Round whose deviation the current bounds apply to.
    pub fn round(&self) -> usize {
        self.pushed + 1
    }

    /// Live suffix products (memory diagnostic).
    pub fn live_products(&self) -> usize {
        self.products.len()
    }

    /// Bound for every agent at [`round`](Self::round).
    pub fn bounds(&self) -> Vec<f64> {
        let n = self.pi.len();
        let pi = self.pi.as_slice();
        let slack = self.retired as f64 * n as f64 * self.retire_tol;
        (0..n)
            .map(|i| {
                let live: f64 = self
                    .products
                    .iter()
                    .map(|q| q.row(i).iter().zip(pi).map(|(a, b)| (a - b).abs()).sum::<f64>())
                    .sum();
                self.l * (live + slack) + 2.0 * self.l
            })
            .collect()
    }
}
