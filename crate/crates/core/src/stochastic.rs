//! Row-stochastic communication matrices and the quantities that certify
//! consensus: ergodic coefficients, backward products, weighting vectors,
//! and the connectivity parameters `ν` and `γ`.

use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::graph::WeightedDigraph;
use crate::linalg::Matrix;

/// Row sums of a communication matrix must be within this of 1.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Entries above this count as positive in support tests.
pub const POSITIVITY_THRESHOLD: f64 = 1e-14;
/// Power iteration runs at most this many sweeps per node.
pub const POWER_ITERATIONS_PER_NODE: usize = 100;

/// A square nonnegative matrix whose rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CommMatrix {
    m: Matrix,
}

impl CommMatrix {
    /// Validates squareness, nonnegativity and unit row sums.
    pub fn new(m: Matrix) -> Result<Self> {
        Self::validate(&m, ROW_SUM_TOL)?;
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Skips validation. Used for products, which drift from exact row sums
    /// by accumulated rounding.
    pub(crate) fn from_trusted(m: Matrix) -> Self {
        Self { m }
    }

    fn validate(m: &Matrix, tol: f64) -> Result<()> {
        if m.rows() != m.cols() {
            return Err(Error::Dimension { expected: m.rows(), got: m.cols() });
        }
        for i in 0..m.rows() {
            let row = m.row(i);
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Validation(format!("row {i} has invalid entry {v}")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::Validation(format!("row {i} sums to {s}, not 1")));
            }
        }
        Ok(())
    }

    pub fn identity(n: usize) -> Self {
        Self { m: Matrix::identity(n) }
    }

    /// Every entry `1/n`.
    pub fn uniform(n: usize) -> Self {
        Self { m: Matrix::from_vec(n, n, vec![1.0 / n as f64; n * n]).expect("square") }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.m.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.m.row(i)
    }

    pub fn into_matrix(self) -> Matrix {
        self.m
    }

    pub fn has_positive_diagonal(&self) -> bool {
        (0..self.n()).all(|i| self.m[(i, i)] > POSITIVITY_THRESHOLD)
    }

    /// Max deviation of a row sum from 1.
    pub fn row_sum_error(&self) -> f64 {
        self.m.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    /// True if `P_ij > 0` only for `j ∈ N_i ∪ {i}` of `g`.
    pub fn respects_pattern(&self, g: &WeightedDigraph) -> bool {
        g.n() == self.n()
            && (0..self.n()).all(|i| {
                self.row(i)
                    .iter()
                    .enumerate()
                    .all(|(j, &v)| v <= POSITIVITY_THRESHOLD || j == i || g.has_edge(j, i))
            })
    }

    /// Graph with an edge `(j, i)` for every off-diagonal `P_ij > 0`.
    pub fn support_graph(&self) -> WeightedDigraph {
        let n = self.n();
        let edges = (0..n).flat_map(|i| {
            (0..n)
                .filter(move |&j| j != i && self.get(i, j) > POSITIVITY_THRESHOLD)
                .map(move |j| (j, i, 1.0))
        });
        WeightedDigraph::from_edges(n, edges).expect("support edges are distinct and in range")
    }

    /// Weighted Laplacian `I − P`.
    pub fn laplacian(&self) -> Matrix {
        let mut l = self.m.clone();
        for i in 0..self.n() {
            for v in l.row_mut(i) {
                *v = -*v;
            }
            l[(i, i)] += 1.0;
        }
        l
    }

    /// Strongly connected support with positive diagonal: the structural
    /// condition under which this matrix is SIA.
    pub fn is_sia_pattern(&self) -> bool {
        self.has_positive_diagonal() && self.support_graph().is_strongly_connected()
    }

    /// CSV dump: `n=<n>` then one comma-separated row per line.
    pub fn to_csv(&self) -> String {
        let mut s = format!("n={}\n", self.n());
        for i in 0..self.n() {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty matrix file".into()))?;
        let n: usize = header
            .trim()
            .strip_prefix("n=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad matrix header {header:?}")))?;
        let mut rows = Vec::with_capacity(n);
        for line in lines {
            let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse()).collect();
            rows.push(row.map_err(|e| Error::Format(format!("bad matrix entry: {e}")))?);
        }
        if rows.len() != n {
            return Err(Error::Format(format!("expected {n} rows, found {}", rows.len())));
        }
        let m = Matrix::from_rows(&rows)?;
        // Dumps may be backward products, so allow their accumulated drift.
        Self::validate(&m, 1e-9)?;
        Ok(Self { m })
    }
}

/// Running backward product `P^t ⋯ P^1 P^0`: each pushed factor multiplies
/// from the left.
#[derive(Debug, Clone)]
pub struct BackwardProduct {
    count: usize,
    product: Matrix,
}

impl BackwardProduct {
    pub fn new(n: usize) -> Self {
        Self { count: 0, product: Matrix::identity(n) }
    }

    pub fn push(&mut self, p: &CommMatrix) -> Result<()> {
        self.product = p.matrix().mul(&self.product)?;
        self.count += 1;
        Ok(())
    }

    /// Number of factors consumed.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn matrix(&self) -> &Matrix {
        &self.product
    }

    pub fn to_comm(&self) -> CommMatrix {
        CommMatrix::from_trusted(self.product.clone())
    }

    /// `max_{i,l} ‖row_i − row_l‖∞`.
    pub fn row_spread(&self) -> f64 {
        row_spread(&self.product)
    }
}

pub(crate) fn row_spread(m: &Matrix) -> f64 {
    let (rows, cols) = (m.rows(), m.cols());
    let mut lo = vec![f64::INFINITY; cols];
    let mut hi = vec![f64::NEG_INFINITY; cols];
    for i in 0..rows {
        for (j, &v) in m.row(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max)
}

/// Probability vector `π`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightingVector(Vec<f64>);

impl WeightingVector {
    /// Validates nonnegativity and unit sum.
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Validation("weighting vector has a negative or non-finite entry".into()));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Validation(format!("weighting vector sums to {s}")));
        }
        Ok(Self(v))
    }

    fn normalized(mut v: Vec<f64>) -> Self {
        for x in &mut v {
            *x = x.max(0.0);
        }
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        Self(v)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `‖πᵀP − πᵀ‖∞`.
    pub fn stationarity_residual(&self, p: &CommMatrix) -> f64 {
        let pp = p.matrix().vec_mul(&self.0).expect("conformant");
        pp.iter().zip(&self.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `τ(Q) = 1 − min_{i,j} Σ_k min(Q_ik, Q_jk)`, clamped to `[0, 1]`.
pub fn ergodic_coefficient(q: &CommMatrix) -> f64 {
    ergodic_coefficient_of(q.matrix())
}

pub(crate) fn ergodic_coefficient_of(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut min_overlap = f64::INFINITY;
    for i in 0..n {
        let ri = m.row(i);
        for j in i + 1..n {
            let overlap: f64 = ri.iter().zip(m.row(j)).map(|(a, b)| a.min(*b)).sum();
            min_overlap = min_overlap.min(overlap);
        }
    }
    if n < 2 {
        return 0.0;
    }
    (1.0 - min_overlap).clamp(0.0, 1.0)
}

/// `P^{last} ⋯ P^{first}` for a time-ordered sequence.
pub fn backward_product(seq: &[CommMatrix]) -> Result<CommMatrix> {
    let first = seq.first().ok_or_else(|| param("backward product of an empty sequence"))?;
    let mut acc = BackwardProduct::new(first.n());
    for p in seq {
        if p.n() != first.n() {
            return Err(Error::Dimension { expected: first.n(), got: p.n() });
        }
        acc.push(p)?;
    }
    Ok(acc.to_comm())
}

/// Every pair of rows shares a column where both entries are positive.
pub fn is_scrambling(q: &CommMatrix) -> bool {
    let n = q.n();
    let support: Vec<Vec<bool>> =
        (0..n).map(|i| q.row(i).iter().map(|&v| v > POSITIVITY_THRESHOLD).collect()).collect();
    (0..n).all(|i| (i + 1..n).all(|j| support[i].iter().zip(&support[j]).any(|(a, b)| *a && *b)))
}

/// Left fixed vector of an SIA matrix by power iteration on `Pᵀ`, started
/// from uniform.
pub fn stationary_vector(p: &CommMatrix, tol: f64) -> Result<WeightingVector> {
    if !p.is_sia_pattern() {
        return Err(Error::Structure(
            "stationary vector needs a strongly connected support with positive diagonal".into(),
        ));
    }
    let n = p.n();
    let mut pi = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for _ in 0..POWER_ITERATIONS_PER_NODE * n.max(1) {
        let mut next = p.matrix().vec_mul(&pi)?;
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if residual <= tol {
            let w = WeightingVector::normalized(pi);
            if w.stationarity_residual(p) <= tol {
                return Ok(w);
            }
            pi = w.0;
        }
    }
    Err(Error::Convergence { message: "power iteration hit its iteration cap".into(), gap: residual })
}

/// Incremental form of [`empirical_pi`]: push factors until the backward
/// product's rows agree within `tol`.
#[derive(Debug, Clone)]
pub struct EmpiricalPi {
    tol: f64,
    product: BackwardProduct,
    converged: Option<WeightingVector>,
}

impl EmpiricalPi {
    pub fn new(n: usize, tol: f64) -> Self {
        Self { tol, product: BackwardProduct::new(n), converged: None }
    }

    /// Consumes a factor. Once converged, further factors are ignored:
    /// left-multiplying a rank-one stochastic product leaves it unchanged.
    pub fn push(&mut self, p: &CommMatrix) -> Result<()> {
        if self.converged.is_some() {
            return Ok(());
        }
        self.product.push(p)?;
        if self.product.row_spread() <= self.tol {
            self.converged = Some(WeightingVector::normalized(self.product.matrix().row(0).to_vec()));
        }
        Ok(())
    }

    pub fn gap(&self) -> f64 {
        self.product.row_spread()
    }

    /// Factors consumed before convergence (or so far).
    pub fn factors(&self) -> usize {
        self.product.count()
    }

    pub fn result(&self) -> Option<&WeightingVector> {
        self.converged.as_ref()
    }

    pub fn finish(self) -> Result<WeightingVector> {
        let gap = self.gap();
        self.converged.ok_or(Error::Convergence {
            message: "backward product rows did not agree".into(),
            gap,
        })
    }
}

/// Row of the backward product once its rows agree within `tol`.
pub fn empirical_pi(seq: &[CommMatrix], tol: f64) -> Result<WeightingVector> {
    let first = seq.first().ok_or_else(|| param("empty matrix sequence"))?;
    let mut est = EmpiricalPi::new(first.n(), tol);
    for p in seq {
        est.push(p)?;
        if est.result().is_some() {
            break;
        }
    }
    est.finish()
}

/// `min_i max_j dist(j, i)`, at least 1. Requires strong connectivity.
pub fn nu_fixed(g: &WeightedDigraph) -> Result<usize> {
    if !g.is_strongly_connected() {
        return Err(Error::Structure("nu is undefined for a graph that is not strongly connected".into()));
    }
    let d = g.distances();
    let nu = (0..g.n()).filter_map(|i| d.in_eccentricity(i)).min().unwrap_or(1);
    Ok(nu.max(1))
}

/// Worst-case connectivity integer `n − 1` for arbitrary switching.
pub fn nu_switching(n: usize) -> usize {
    n.saturating_sub(1).max(1)
}

/// Ergodic coefficient of each consecutive block of `δ·ν` factors.
pub fn block_taus(seq: &[CommMatrix], delta: usize, nu: usize) -> Result<Vec<f64>> {
    let len = delta * nu;
    if len == 0 {
        return Err(param("delta and nu must be positive"));
    }
    if seq.len() < len {
        return Err(param(format!("sequence of {} matrices is shorter than one block of {len}", seq.len())));
    }
    seq.par_chunks_exact(len)
        .map(|block| backward_product(block).map(|p| ergodic_coefficient(&p)))
        .collect()
}

/// Empirical `γ`: the largest block ergodic coefficient over the realized
/// sequence.
pub fn gamma_estimate(seq: &[CommMatrix], delta: usize, nu: usize) -> Result<f64> {
    Ok(block_taus(seq, delta, nu)?.into_iter().fold(0.0, f64::max))
}

/// Streaming form of [`gamma_estimate`] that never stores the sequence.
#[derive(Debug, Clone)]
pub struct GammaAccumulator {
    block_len: usize,
    current: BackwardProduct,
    taus: Vec<f64>,
}

impl GammaAccumulator {
    pub fn new(n: usize, delta: usize, nu: usize) -> Result<Self> {
        if delta == 0 || nu == 0 {
            return Err(param("delta and nu must be positive"));
        }
        Ok(Self { block_len: delta * nu, current: BackwardProduct::new(n), taus: Vec::new() })
    }

    pub fn push(&mut self, p: &CommMatrix) -> Result<()> {
        self.current.push(p)?;
        if self.current.count() == self.block_len {
            self.taus.push(ergodic_coefficient_of(self.current.matrix()));
            self.current = BackwardProduct::new(p.n());
        }
        Ok(())
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    /// Ergodic coefficient of every completed block.
    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn gamma(&self) -> Result<f64> {
        if self.taus.is_empty() {
            return Err(param(format!("no complete block of {} factors", self.block_len)));
        }
        Ok(self.taus.iter().copied().fold(0.0, f64::max))
    }
}

/// `max_{i,j} |prod_ij − π_j|`.
pub fn consensus_gap(prod: &CommMatrix, pi: &WeightingVector) -> f64 {
    let m = prod.matrix();
    (0..m.rows())
        .flat_map(|i| m.row(i).iter().zip(pi.as_slice()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}
