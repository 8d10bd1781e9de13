//! Per-agent exponential re-weighting of incoming links (online allocation)
//! and assembly of the round's communication matrix.
//!
//! Weights are kept as logarithms. Only ratios over the active set matter,
//! so this avoids underflow without renormalizing, and an expert that was
//! never active keeps its initial weight exactly.

use crate::error::{param, Error, Result};
use crate::graph::WeightedDigraph;
use crate::linalg::Matrix;
use crate::stochastic::CommMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct AllocatorState {
    owner: usize,
    beta: f64,
    normalizer: f64,
    log_w: Vec<f64>,
    edge_rounds: Vec<u64>,
}

impl AllocatorState {
    /// All-ones weights over `n` experts for agent `owner`.
    pub fn new(owner: usize, n: usize, beta: f64, normalizer: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(param(format!("beta {beta} outside [0,1]")));
        }
        if !(normalizer.is_finite() && normalizer > 0.0) {
            return Err(param(format!("loss normalizer must be positive, got {normalizer}")));
        }
        if owner >= n {
            return Err(param(format!("owner {owner} out of range for n={n}")));
        }
        Ok(Self { owner, beta, normalizer, log_w: vec![0.0; n], edge_rounds: vec![0; n] })
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn n(&self) -> usize {
        self.log_w.len()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_w
    }

    /// `w_j`. Entries may underflow to zero after long runs; use
    /// [`distribution`](Self::distribution) for normalized values.
    pub fn weights(&self) -> Vec<f64> {
        self.log_w.iter().map(|l| l.exp()).collect()
    }

    /// Number of rounds in which the edge `(j, owner)` was active.
    pub fn edge_rounds(&self, j: usize) -> u64 {
        self.edge_rounds[j]
    }

    /// `w_j ← w_j β^{min(f_j/M, 1)}` for every observed `(j, f_j)`.
    pub fn update(&mut self, losses: &[(usize, f64)]) -> Result<()> {
        for &(j, f) in losses {
            if j >= self.n() {
                return Err(param(format!("expert {j} out of range for n={}", self.n())));
            }
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::Validation(format!("loss {f} for expert {j} is negative or non-finite")));
            }
        }
        let log_beta = self.beta.ln();
        for &(j, f) in losses {
            let exponent = (f / self.normalizer).min(1.0);
            if exponent > 0.0 {
                self.log_w[j] += exponent * log_beta;
            }
            if j != self.owner {
                self.edge_rounds[j] += 1;
            }
        }
        Ok(())
    }

    /// Weights restricted to `active` and renormalized over it.
    pub fn distribution(&self, active: &[usize]) -> Result<NeighborhoodDistribution> {
        let degenerate = |reason: &str| Error::Degenerate { agent: self.owner, reason: reason.into() };
        if active.is_empty() {
            return Err(degenerate("empty active set"));
        }
        if let Some(&j) = active.iter().find(|&&j| j >= self.n()) {
            return Err(param(format!("active expert {j} out of range for n={}", self.n())));
        }
        let top = active.iter().map(|&j| self.log_w[j]).fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Err(degenerate("all active weights are zero"));
        }
        let mut q = vec![0.0; self.n()];
        for &j in active {
            q[j] = (self.log_w[j] - top).exp();
        }
        let s: f64 = active.iter().map(|&j| q[j]).sum();
        for &j in active {
            q[j] /= s;
        }
        Ok(NeighborhoodDistribution { q })
    }
}

/// Functional form of [`AllocatorState::update`].
pub fn doa_update(state: &AllocatorState, losses: &[(usize, f64)]) -> Result<AllocatorState> {
    let mut next = state.clone();
    next.update(losses)?;
    Ok(next)
}

/// A probability vector supported on `{N_i^t, i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodDistribution {
    q: Vec<f64>,
}

impl NeighborhoodDistribution {
    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.q
    }
}

/// `{N_i, i}` in ascending order.
pub fn active_set(topology: &WeightedDigraph, i: usize) -> Vec<usize> {
    let nbrs = topology.in_neighbors(i);
    let mut active = Vec::with_capacity(nbrs.len() + 1);
    let pos = nbrs.partition_point(|&j| j < i);
    active.extend_from_slice(&nbrs[..pos]);
    active.push(i);
    active.extend_from_slice(&nbrs[pos..]);
    active
}

/// Row `i` of `P(t)` is agent `i`'s distribution over its active set.
pub fn assemble_comm_matrix(states: &[AllocatorState], topology: &WeightedDigraph) -> Result<CommMatrix> {
    let n = topology.n();
    if states.len() != n {
        return Err(Error::Dimension { expected: n, got: states.len() });
    }
    let mut m = Matrix::zeros(n, n);
    for (i, s) in states.iter().enumerate() {
        if s.n() != n || s.owner() != i {
            return Err(param(format!("allocator {i} does not match the topology")));
        }
        let q = s.distribution(&active_set(topology, i))?;
        if q.as_slice()[i] <= 0.0 {
            return Err(Error::Degenerate { agent: i, reason: "self weight is zero".into() });
        }
        m.row_mut(i).copy_from_slice(q.as_slice());
    }
    CommMatrix::new(m)
}

/// `M(√(2T ln m) + ln m)` with `m = |N_i| + 1`.
pub fn oa_regret_bound(m_loss: f64, m: usize, t: usize) -> f64 {
    let ln_m = (m.max(1) as f64).ln();
    m_loss * ((2.0 * t as f64 * ln_m).sqrt() + ln_m)
}

/// `β = 1/(1 + √(2 ln m / T))`: the choice under which the exponential-weights
/// guarantee takes the form of [`oa_regret_bound`] for losses in `[0, 1]`.
pub fn tuned_beta(m: usize, t: usize) -> f64 {
    if m <= 1 || t == 0 {
        return 1.0;
    }
    1.0 / (1.0 + (2.0 * (m as f64).ln() / t as f64).sqrt())
}

/// `Σ_t ⟨q(t), h(t)⟩ − min_j Σ_t h_j(t)`.
pub fn wm_regret(q: &[Vec<f64>], losses: &[Vec<f64>]) -> Result<f64> {
    if q.is_empty() {
        return Err(param("empty trace"));
    }
    if q.len() != losses.len() {
        return Err(Error::Dimension { expected: q.len(), got: losses.len() });
    }
    let m = losses[0].len();
    let mut incurred = 0.0;
    let mut per_expert = vec![0.0; m];
    for (qt, ht) in q.iter().zip(losses) {
        if qt.len() != m || ht.len() != m {
            return Err(Error::Dimension { expected: m, got: qt.len().min(ht.len()) });
        }
        incurred += crate::linalg::dot(qt, ht);
        for (acc, h) in per_expert.iter_mut().zip(ht) {
            *acc += h;
        }
    }
    Ok(incurred - per_expert.into_iter().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GraphFamily, GraphFamilySpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn update_examples() {
        let mut s = AllocatorState::new(0, 2, 1.0, 1.0).unwrap();
        s.update(&[(0, 3.0), (1, 0.2)]).unwrap();
        assert_eq!(s.weights(), vec![1.0, 1.0]);

        let mut s = AllocatorState::new(0, 2, 0.5, 1.0).unwrap();
        s.update(&[(0, 1.0), (1, 0.0)]).unwrap();
        assert_eq!(s.weights(), vec![0.5, 1.0]);
        let q = s.distribution(&[0, 1]).unwrap();
        assert!((q.as_slice()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((q.as_slice()[1] - 2.0 / 3.0).abs() < 1e-15);

        let mut s = AllocatorState::new(1, 3, 0.9, 1.0).unwrap();
        s.update(&[(0, 0.0), (1, 0.0)]).unwrap();
        assert_eq!(s.weights(), vec![1.0; 3]);
        assert_eq!(s.edge_rounds(0), 1);
        assert_eq!(s.edge_rounds(1), 0);
    }

    #[test]
    fn update_rejects_bad_input() {
        assert!(matches!(AllocatorState::new(0, 2, 1.5, 1.0), Err(Error::Parameter(_))));
        let mut s = AllocatorState::new(0, 2, 0.5, 1.0).unwrap();
        assert!(matches!(s.update(&[(1, -1.0)]), Err(Error::Validation(_))));
        assert!(matches!(s.update(&[(1, f64::NAN)]), Err(Error::Validation(_))));
    }

    #[test]
    fn losses_are_clamped_at_the_normalizer() {
        let mut s = AllocatorState::new(0, 2, 0.5, 2.0).unwrap();
        s.update(&[(0, 1.0), (1, 100.0)]).unwrap();
        let w = s.weights();
        assert!((w[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(w[1], 0.5);
    }

    #[test]
    fn distribution_restricts_and_renormalizes() {
        let mut s = AllocatorState::new(0, 3, 0.5, 1.0).unwrap();
        s.log_w = vec![0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()];
        let q = s.distribution(&[0, 1]).unwrap();
        assert!((q.as_slice()[0] - 0.4).abs() < 1e-15);
        assert!((q.as_slice()[1] - 0.6).abs() < 1e-15);
        assert_eq!(q.as_slice()[2], 0.0);
        assert!(matches!(s.distribution(&[]), Err(Error::Degenerate { agent: 0, .. })));
    }

    #[test]
    fn beta_zero_can_zero_out_every_weight() {
        let mut s = AllocatorState::new(0, 2, 0.0, 1.0).unwrap();
        s.update(&[(0, 1.0), (1, 1.0)]).unwrap();
        assert!(matches!(s.distribution(&[0, 1]), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn long_runs_do_not_underflow() {
        let mut s = AllocatorState::new(0, 2, 0.5, 1.0).unwrap();
        for _ in 0..5000 {
            s.update(&[(0, 1.0), (1, 0.9)]).unwrap();
        }
        let q = s.distribution(&[0, 1]).unwrap();
        assert!(q.as_slice().iter().all(|v| v.is_finite()));
        assert!(q.as_slice()[1] > 0.99);
    }

    #[test]
    fn assembled_matrix_on_path() {
        let g = generate(&GraphFamilySpec::new(GraphFamily::Path, 3, 0)).unwrap();
        let states: Vec<_> = (0..3).map(|i| AllocatorState::new(i, 3, 0.9, 1.0).unwrap()).collect();
        let p = assemble_comm_matrix(&states, &g).unwrap();
        let expected = [[0.5, 0.5, 0.0], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [0.0, 0.5, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((p.get(i, j) - expected[i][j]).abs() < 1e-15);
            }
        }
        assert!(p.respects_pattern(&g));
        assert!(p.has_positive_diagonal());
    }

    #[test]
    fn scaling_weights_leaves_distribution_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = AllocatorState::new(2, 4, 0.7, 1.0).unwrap();
        for _ in 0..10 {
            let losses: Vec<_> = (0..4).map(|j| (j, rng.random::<f64>())).collect();
            s.update(&losses).unwrap();
        }
        let mut scaled = s.clone();
        scaled.log_w.iter_mut().for_each(|l| *l += 3.7f64.ln());
        let a = s.distribution(&[0, 2, 3]).unwrap();
        let b = scaled.distribution(&[0, 2, 3]).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn oa_bound_examples() {
        let b = oa_regret_bound(1.0, 2, 100);
        assert!((b - ((200.0 * 2f64.ln()).sqrt() + 2f64.ln())).abs() < 1e-12);
        assert!((b - 12.467).abs() < 1e-3);
        assert_eq!(oa_regret_bound(1.0, 1, 100), 0.0);
        assert_eq!(oa_regret_bound(2.0, 3, 50), 2.0 * oa_regret_bound(1.0, 3, 50));
    }

    #[test]
    fn wm_regret_examples() {
        let losses = vec![vec![1.0, 0.0]; 10];
        assert_eq!(wm_regret(&vec![vec![0.0, 1.0]; 10], &losses).unwrap(), 0.0);
        assert_eq!(wm_regret(&vec![vec![0.5, 0.5]; 10], &losses).unwrap(), 5.0);
    }

    proptest::proptest! {
        #[test]
        fn hedge_with_normalized_losses_meets_the_oa_bound(seed in 0u64..1000, m in 2usize..6, t in 10usize..400) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = AllocatorState::new(0, m, tuned_beta(m, t), 1.0).unwrap();
            let active: Vec<usize> = (0..m).collect();
            let (mut qs, mut hs) = (Vec::new(), Vec::new());
            for _ in 0..t {
                let h: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                qs.push(s.distribution(&active).unwrap().into_vec());
                s.update(&h.iter().copied().enumerate().collect::<Vec<_>>()).unwrap();
                hs.push(h);
            }
            proptest::prop_assert!(wm_regret(&qs, &hs).unwrap() <= oa_regret_bound(1.0, m, t));
        }
    }
}
