//! Online distributed estimation with linear sensors: observation models,
//! noise families, jamming, least-squares local costs and the best fixed
//! estimate in hindsight.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dwda::{FeasibleSet, LossOracle};
use crate::error::{param, Error, Result};
use crate::linalg::{cholesky_solve, dot, norm2, Matrix};
use crate::rng::{stream, tag};

/// Attempts per draw before a truncated sampler falls back to clamping.
const TRUNCATION_ATTEMPTS: usize = 10_000;

/// Distribution of the additive disturbance `b_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseFamily {
    /// `U(−b_max, b_max)`.
    Interval,
    /// Normal with mean `−b_max` and standard deviation `b_max`.
    Gaussian,
    /// Uniform with mean `−b_max` and standard deviation `b_max`.
    Uniform,
    /// Laplace with mean `−b_max` and standard deviation `b_max`.
    Laplace,
}

impl NoiseFamily {
    pub const SHIFTED: [NoiseFamily; 3] = [NoiseFamily::Gaussian, NoiseFamily::Uniform, NoiseFamily::Laplace];

    pub fn name(&self) -> &'static str {
        match self {
            NoiseFamily::Interval => "interval",
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Uniform => "uniform",
            NoiseFamily::Laplace => "laplace",
        }
    }

    /// Untruncated mean and standard deviation for a given `b_max`.
    pub fn moments(&self, b_max: f64) -> (f64, f64) {
        match self {
            NoiseFamily::Interval => (0.0, b_max / 3f64.sqrt()),
            _ => (-b_max, b_max),
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interval" => Ok(NoiseFamily::Interval),
            "gaussian" | "normal" => Ok(NoiseFamily::Gaussian),
            "uniform" => Ok(NoiseFamily::Uniform),
            "laplace" => Ok(NoiseFamily::Laplace),
            _ => Err(param(format!("unknown noise family {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub theta_max: f64,
    pub h_max: f64,
    pub a_max: f64,
    pub b_max: f64,
    pub theta_true: Vec<f64>,
    pub noise: NoiseFamily,
    /// Reject shifted-family draws outside `(−b_max, b_max)`.
    pub truncate: bool,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            theta_max: 0.5,
            h_max: 0.25,
            a_max: 1.0,
            b_max: 0.25,
            theta_true: vec![-0.25],
            noise: NoiseFamily::Interval,
            truncate: true,
        }
    }
}

impl ScenarioParams {
    pub fn dim(&self) -> usize {
        self.theta_true.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("theta_max", self.theta_max), ("h_max", self.h_max), ("a_max", self.a_max), ("b_max", self.b_max)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(param(format!("{name} must be positive, got {v}")));
            }
        }
        if self.theta_true.is_empty() {
            return Err(param("theta_true needs at least one component"));
        }
        if norm2(&self.theta_true) > self.theta_max {
            return Err(param(format!("theta_true has norm {} > theta_max {}", norm2(&self.theta_true), self.theta_max)));
        }
        Ok(())
    }

    /// `Θ = {‖θ‖₂ ≤ θ_max}`.
    pub fn feasible_set(&self) -> Result<FeasibleSet> {
        FeasibleSet::ball(self.theta_max, self.dim())
    }

    /// One draw of a scalar disturbance component.
    pub fn sample_noise(&self, rng: &mut impl Rng) -> f64 {
        let b = self.b_max;
        let draw = |rng: &mut dyn rand::RngCore| -> f64 {
            match self.noise {
                NoiseFamily::Interval => rng.random_range(-b..b),
                NoiseFamily::Gaussian => Normal::new(-b, b).expect("positive std").sample(rng),
                NoiseFamily::Uniform => {
                    let half = b * 3f64.sqrt();
                    rng.random_range(-b - half..-b + half)
                }
                NoiseFamily::Laplace => {
                    let scale = b / std::f64::consts::SQRT_2;
                    let u: f64 = rng.random::<f64>() - 0.5;
                    -b - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
                }
            }
        };
        if !self.truncate || self.noise == NoiseFamily::Interval {
            return draw(rng);
        }
        let mut v = 0.0;
        for _ in 0..TRUNCATION_ATTEMPTS {
            v = draw(rng);
            if v > -b && v < b {
                return v;
            }
        }
        v.clamp(-b, b)
    }
}

/// Linear sensor `h_i(θ) = H_i θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub h: Matrix,
    pub jammed: bool,
}

impl SensorModel {
    pub fn new(h: Matrix, jammed: bool) -> Result<Self> {
        if h.rows() == 0 || h.cols() == 0 {
            return Err(param("observation matrix must be non-empty"));
        }
        Ok(Self { h, jammed })
    }

    /// `H_i = diag(h)`.
    pub fn diagonal(h: &[f64], jammed: bool) -> Result<Self> {
        let mut m = Matrix::zeros(h.len(), h.len());
        for (k, &v) in h.iter().enumerate() {
            m[(k, k)] = v;
        }
        Self::new(m, jammed)
    }

    /// Induced 1-norm `‖H‖₁` (max column absolute sum).
    pub fn norm1(&self) -> f64 {
        (0..self.h.cols())
            .map(|c| (0..self.h.rows()).map(|r| self.h[(r, c)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn residual(&self, z: &[f64], theta_hat: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.h.rows() {
            return Err(Error::Dimension { expected: self.h.rows(), got: z.len() });
        }
        let ht = self.h.mul_vec(theta_hat)?;
        Ok(z.iter().zip(&ht).map(|(a, b)| a - b).collect())
    }
}

/// Draws `H_i = diag(U(0, h_max))` per sensor from the sensor stream.
pub fn draw_sensors(params: &ScenarioParams, n: usize, jammed: &[usize], seed: u64) -> Result<Vec<SensorModel>> {
    let d = params.dim();
    let mut is_jammed = vec![false; n];
    for &j in jammed {
        if j >= n {
            return Err(param(format!("jammed sensor {j} out of range for n={n}")));
        }
        is_jammed[j] = true;
    }
    (0..n)
        .map(|i| {
            let mut rng = stream(seed, tag::SENSORS, i as u64, 0);
            let h: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..params.h_max)).collect();
            SensorModel::diagonal(&h, is_jammed[i])
        })
        .collect()
}

/// `count` distinct sensors chosen uniformly from the jamming stream, sorted.
pub fn choose_jammed(n: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    if count > n {
        return Err(param(format!("cannot jam {count} of {n} sensors")));
    }
    let mut rng = stream(seed, tag::JAM, 0, 0);
    let mut picked = rand::seq::index::sample(&mut rng, n, count).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Unjammed: `z = a_t θ + b_t` with `a_t ~ U(0, a_max)` and `b_t` drawn per
/// component. Jammed: `z = H_i θ + b_max`.
pub fn observe(params: &ScenarioParams, sensor: &SensorModel, rng: &mut impl Rng) -> Vec<f64> {
    let theta = &params.theta_true;
    if sensor.jammed {
        let mut z = sensor.h.mul_vec(theta).expect("sensor conforms to theta");
        z.iter_mut().for_each(|v| *v += params.b_max);
        return z;
    }
    let a = rng.random_range(0.0..params.a_max);
    theta.iter().map(|th| a * th + params.sample_noise(rng)).collect()
}

/// `½‖z − Hθ̂‖²`.
pub fn local_cost(sensor: &SensorModel, z: &[f64], theta_hat: &[f64]) -> Result<f64> {
    let r = sensor.residual(z, theta_hat)?;
    Ok(0.5 * dot(&r, &r))
}

/// `−Hᵀ(z − Hθ̂)`.
pub fn local_subgradient(sensor: &SensorModel, z: &[f64], theta_hat: &[f64]) -> Result<Vec<f64>> {
    let r = sensor.residual(z, theta_hat)?;
    let mut g = sensor.h.vec_mul(&r)?;
    g.iter_mut().for_each(|v| *v = -*v);
    Ok(g)
}

/// `L = (½θ_max h_max + a_max θ_max + b_max) h_max`.
pub fn lipschitz_constant(params: &ScenarioParams) -> f64 {
    (0.5 * params.theta_max * params.h_max + params.a_max * params.theta_max + params.b_max) * params.h_max
}

/// `R = θ_max/√2`.
pub fn prox_radius(params: &ScenarioParams) -> f64 {
    params.theta_max / std::f64::consts::SQRT_2
}

/// Loss ceiling `½(a_max θ_max + b_max + h_max θ_max)²` used to normalize
/// allocator losses.
pub fn default_loss_normalizer(params: &ScenarioParams) -> f64 {
    let s = params.a_max * params.theta_max + params.b_max + params.h_max * params.theta_max;
    0.5 * s * s
}

/// Minimizes `½xᵀAx − bᵀx` over `chi` for symmetric positive definite `A`.
pub fn minimize_quadratic(a: &Matrix, b: &[f64], chi: &FeasibleSet) -> Result<Vec<f64>> {
    let x = cholesky_solve(a, b)?;
    if chi.contains(&x, 0.0) {
        return Ok(x);
    }
    match chi {
        FeasibleSet::Ball { radius, .. } => {
            // ‖(A + λI)⁻¹ b‖ decreases in λ; bisect for the boundary value.
            let shifted = |lambda: f64| -> Result<Vec<f64>> {
                let mut m = a.clone();
                for k in 0..m.rows() {
                    m[(k, k)] += lambda;
                }
                cholesky_solve(&m, b)
            };
            let (mut lo, mut hi) = (0.0, norm2(b) / radius);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if norm2(&shifted(mid)?) > *radius {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= f64::EPSILON * hi {
                    break;
                }
            }
            // The minimizer lies on the sphere; snap the bisection result to it.
            let x = shifted(hi)?;
            let nx = norm2(&x);
            Ok(x.iter().map(|v| v * radius / nx).collect())
        }
        FeasibleSet::Box { .. } => {
            let step = 1.0
                / (0..a.rows())
                    .map(|r| a.row(r).iter().map(|v| v.abs()).sum::<f64>())
                    .fold(f64::MIN_POSITIVE, f64::max);
            let mut x = chi.nearest(&x);
            for _ in 0..1_000_000 {
                let ax = a.mul_vec(&x)?;
                let trial: Vec<f64> = x.iter().zip(ax.iter().zip(b)).map(|(xi, (g, bi))| xi - step * (g - bi)).collect();
                let next = chi.nearest(&trial);
                let moved = crate::linalg::dist2(&next, &x);
                x = next;
                if moved <= 1e-16 {
                    break;
                }
            }
            Ok(x)
        }
    }
}

/// The least-squares estimate over all recorded observations (unit noise
/// covariance), constrained to `chi`. `z[s][i]` holds round `s + 1`.
pub fn best_fixed_from(sensors: &[SensorModel], z: &[Vec<Vec<f64>>], chi: &FeasibleSet) -> Result<Vec<f64>> {
    let d = chi.dim();
    let mut a = Matrix::zeros(d, d);
    let mut b = vec![0.0; d];
    for s in sensors {
        let hth = s.h.transpose().mul(&s.h)?;
        for r in 0..d {
            for c in 0..d {
                a[(r, c)] += z.len() as f64 * hth[(r, c)];
            }
        }
    }
    for round in z {
        for (s, zi) in sensors.iter().zip(round) {
            for (acc, v) in b.iter_mut().zip(s.h.vec_mul(zi)?) {
                *acc += v;
            }
        }
    }
    minimize_quadratic(&a, &b, chi)
}

/// Replayable oracle over a fixed record of observations.
///
/// Per round it also keeps `c_t = ½Σ_i‖z_i‖²` and `b_t = Σ_i H_iᵀz_i`, so the
/// global cost is a quadratic `(c_t − b_tᵀx + ½xᵀAx)/n` with
/// `A = Σ_i H_iᵀH_i`.
#[derive(Debug, Clone)]
pub struct EstimationOracle {
    params: ScenarioParams,
    sensors: Vec<SensorModel>,
    horizon: usize,
    z: Vec<f64>,
    gram: Matrix,
    c: Vec<f64>,
    b: Vec<f64>,
    lipschitz: f64,
}

impl EstimationOracle {
    /// Draws observations for rounds `1..=horizon`, one stream per
    /// (agent, round).
    pub fn generate(params: &ScenarioParams, sensors: Vec<SensorModel>, horizon: usize, seed: u64) -> Result<Self> {
        params.validate()?;
        let d = params.dim();
        if let Some(s) = sensors.iter().find(|s| s.h.rows() != d || s.h.cols() != d) {
            return Err(Error::Dimension { expected: d, got: s.h.rows() });
        }
        let n = sensors.len();
        let mut z = vec![0.0; horizon * n * d];
        if n > 0 && d > 0 {
            z.par_chunks_mut(n * d).enumerate().for_each(|(s, round)| {
                for (i, zi) in round.chunks_mut(d).enumerate() {
                    let mut rng = stream(seed, tag::OBSERVATIONS, i as u64, s as u64 + 1);
                    zi.copy_from_slice(&observe(params, &sensors[i], &mut rng));
                }
            });
        }
        Self::from_flat(params.clone(), sensors, horizon, z)
    }

    /// Oracle over explicit observations, `z[s][i]` for round `s + 1`.
    pub fn from_observations(params: &ScenarioParams, sensors: Vec<SensorModel>, z: &[Vec<Vec<f64>>]) -> Result<Self> {
        let flat: Vec<f64> = z.iter().flatten().flatten().copied().collect();
        let n = sensors.len();
        let d = params.dim();
        if flat.len() != z.len() * n * d {
            return Err(Error::Dimension { expected: z.len() * n * d, got: flat.len() });
        }
        Self::from_flat(params.clone(), sensors, z.len(), flat)
    }

    fn from_flat(params: ScenarioParams, sensors: Vec<SensorModel>, horizon: usize, z: Vec<f64>) -> Result<Self> {
        let d = params.dim();
        let n = sensors.len();
        let mut gram = Matrix::zeros(d, d);
        for s in &sensors {
            let hth = s.h.transpose().mul(&s.h)?;
            for r in 0..d {
                for c in 0..d {
                    gram[(r, c)] += hth[(r, c)];
                }
            }
        }
        let mut c = vec![0.0; horizon];
        let mut b = vec![0.0; horizon * d];
        for t in 0..horizon {
            for (i, s) in sensors.iter().enumerate() {
                let zi = &z[(t * n + i) * d..(t * n + i + 1) * d];
                c[t] += 0.5 * dot(zi, zi);
                for (acc, v) in b[t * d..(t + 1) * d].iter_mut().zip(s.h.vec_mul(zi)?) {
                    *acc += v;
                }
            }
        }
        let lipschitz = lipschitz_constant(&params);
        Ok(Self { params, sensors, horizon, z, gram, c, b, lipschitz })
    }

    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn sensors(&self) -> &[SensorModel] {
        &self.sensors
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `z_{t,i}` for `t ≥ 1`.
    pub fn observation(&self, t: usize, i: usize) -> &[f64] {
        let (n, d) = (self.sensors.len(), self.params.dim());
        let k = (t - 1) * n + i;
        &self.z[k * d..(k + 1) * d]
    }

    /// All observations, `[s][i]` for round `s + 1`.
    pub fn observations(&self) -> Vec<Vec<Vec<f64>>> {
        (1..=self.horizon)
            .map(|t| (0..self.sensors.len()).map(|i| self.observation(t, i).to_vec()).collect())
            .collect()
    }

    /// `Σ_i H_iᵀH_i`.
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    /// `θ*` over rounds `1..=horizon`.
    pub fn best_fixed(&self, chi: &FeasibleSet) -> Result<Vec<f64>> {
        let d = self.params.dim();
        let mut a = self.gram.clone();
        for r in 0..d {
            for c in 0..d {
                a[(r, c)] *= self.horizon as f64;
            }
        }
        let mut b = vec![0.0; d];
        for t in 0..self.horizon {
            for (acc, v) in b.iter_mut().zip(&self.b[t * d..(t + 1) * d]) {
                *acc += v;
            }
        }
        minimize_quadratic(&a, &b, chi)
    }
}

impl LossOracle for EstimationOracle {
    fn n_agents(&self) -> usize {
        self.sensors.len()
    }

    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn loss(&self, t: usize, i: usize, x: &[f64]) -> f64 {
        local_cost(&self.sensors[i], self.observation(t, i), x).unwrap_or(f64::NAN)
    }

    fn subgradient(&self, t: usize, i: usize, x: &[f64]) -> Vec<f64> {
        local_subgradient(&self.sensors[i], self.observation(t, i), x).unwrap_or_else(|_| vec![f64::NAN; x.len()])
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn global_cost(&self, t: usize, x: &[f64]) -> f64 {
        let d = self.params.dim();
        let ax = self.gram.mul_vec(x).expect("conformant");
        let bt = &self.b[(t - 1) * d..t * d];
        (self.c[t - 1] - dot(bt, x) + 0.5 * dot(x, &ax)) / self.sensors.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(h: f64, jammed: bool) -> SensorModel {
        SensorModel::diagonal(&[h], jammed).unwrap()
    }

    #[test]
    fn constants() {
        let p = ScenarioParams::default();
        assert_eq!(lipschitz_constant(&p), 13.0 / 64.0);
        assert_eq!(prox_radius(&p), 0.5 / std::f64::consts::SQRT_2);
        assert!((prox_radius(&p) - 0.35355).abs() < 1e-5);
        let flat = ScenarioParams { h_max: 0.0, ..p.clone() };
        assert_eq!(lipschitz_constant(&flat), 0.0);
        let wide = ScenarioParams { b_max: 0.5, ..p.clone() };
        assert!((lipschitz_constant(&wide) - lipschitz_constant(&p) - 0.25 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn observation_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = ScenarioParams { theta_true: vec![0.3], ..Default::default() };
        let z = observe(&params, &scalar(0.2, true), &mut rng);
        assert!((z[0] - 0.31).abs() < 1e-15);
        let bound = params.a_max * params.theta_max + params.b_max;
        for _ in 0..1000 {
            assert!(norm2(&observe(&params, &scalar(0.2, false), &mut rng)) <= bound);
        }
    }

    #[test]
    fn cost_and_gradient_examples() {
        let s = scalar(1.0, false);
        assert_eq!(local_cost(&s, &[1.0], &[0.0]).unwrap(), 0.5);
        let s = scalar(2.0, false);
        assert_eq!(local_cost(&s, &[3.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(local_subgradient(&s, &[3.0], &[1.0]).unwrap(), vec![-2.0]);
        assert_eq!(local_cost(&s, &[2.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(local_subgradient(&s, &[2.0], &[1.0]).unwrap(), vec![0.0]);
        assert!(matches!(local_cost(&s, &[1.0, 2.0], &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn best_fixed_examples() {
        let sensors = vec![scalar(1.0, false), scalar(1.0, false)];
        let chi = FeasibleSet::ball(0.5, 1).unwrap();
        let th = best_fixed_from(&sensors, &[vec![vec![0.1], vec![0.3]]], &chi).unwrap();
        assert!((th[0] - 0.2).abs() < 1e-15);
        let th = best_fixed_from(&sensors, &vec![vec![vec![2.0], vec![2.0]]; 3], &chi).unwrap();
        assert!((th[0] - 0.5).abs() < 1e-15);
        let th = best_fixed_from(&sensors, &vec![vec![vec![0.125], vec![0.125]]; 4], &chi).unwrap();
        assert!((th[0] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn constrained_quadratic_on_ball() {
        let a = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let b = [3.0, -2.0];
        let chi = FeasibleSet::ball(0.5, 2).unwrap();
        let x = minimize_quadratic(&a, &b, &chi).unwrap();
        assert!((norm2(&x) - 0.5).abs() < 1e-12);
        let q = |x: &[f64]| 0.5 * dot(x, &a.mul_vec(x).unwrap()) - dot(&b, x);
        for k in 0..3600 {
            let ang = k as f64 * std::f64::consts::TAU / 3600.0;
            let y = [0.5 * ang.cos(), 0.5 * ang.sin()];
            assert!(q(&x) <= q(&y) + 1e-12);
        }
    }

    #[test]
    fn oracle_global_cost_matches_direct_sum() {
        let params = ScenarioParams { theta_true: vec![0.1, -0.2], ..Default::default() };
        let sensors = draw_sensors(&params, 6, &[1, 4], 3).unwrap();
        let oracle = EstimationOracle::generate(&params, sensors, 20, 3).unwrap();
        let x = [0.05, 0.3];
        for t in 1..=20 {
            let direct = (0..6).map(|i| oracle.loss(t, i, &x)).sum::<f64>() / 6.0;
            assert!((oracle.global_cost(t, &x) - direct).abs() < 1e-14);
        }
        let chi = params.feasible_set().unwrap();
        let a = best_fixed_from(oracle.sensors(), &oracle.observations(), &chi).unwrap();
        let b = oracle.best_fixed(&chi).unwrap();
        assert!(crate::linalg::dist2(&a, &b) < 1e-12);
    }

    #[test]
    fn generation_is_reproducible() {
        let params = ScenarioParams::default();
        let jam = choose_jammed(10, 3, 8).unwrap();
        assert_eq!(jam, choose_jammed(10, 3, 8).unwrap());
        assert_eq!(jam.len(), 3);
        let s1 = draw_sensors(&params, 10, &jam, 8).unwrap();
        let s2 = draw_sensors(&params, 10, &jam, 8).unwrap();
        assert_eq!(s1, s2);
        assert!(s1.iter().all(|s| s.norm1() <= params.h_max));
        assert_eq!(s1.iter().filter(|s| s.jammed).count(), 3);
        let a = EstimationOracle::generate(&params, s1, 5, 8).unwrap();
        let b = EstimationOracle::generate(&params, s2, 5, 8).unwrap();
        assert_eq!(a.observations(), b.observations());
        assert!(choose_jammed(3, 4, 0).is_err());
    }

    #[test]
    fn shifted_noise_moments() {
        let b = 0.25;
        for family in NoiseFamily::SHIFTED {
            let params = ScenarioParams { noise: family, truncate: false, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let n = 1_000_000;
            let draws: Vec<f64> = (0..n).map(|_| params.sample_noise(&mut rng)).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se_mean = b / (n as f64).sqrt();
            assert!((mean + b).abs() < 3.0 * se_mean, "{family}: mean {mean}");
            // Standard error of the sample std is about σ·√((κ − 1)/4n), κ ≤ 6.
            let se_std = b * (5.0 / (4.0 * n as f64)).sqrt();
            assert!((var.sqrt() - b).abs() < 3.0 * se_std, "{family}: std {}", var.sqrt());
        }
    }

    #[test]
    fn truncated_noise_stays_inside_the_interval() {
        for family in [NoiseFamily::Interval, NoiseFamily::Gaussian, NoiseFamily::Uniform, NoiseFamily::Laplace] {
            let params = ScenarioParams { noise: family, truncate: true, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            for _ in 0..10_000 {
                let v = params.sample_noise(&mut rng);
                assert!(v > -0.25 - 1e-15 && v < 0.25);
            }
        }
    }

    #[test]
    fn gradient_norm_guard() {
        let params = ScenarioParams::default();
        let sensors = draw_sensors(&params, 20, &[0, 1, 2], 4).unwrap();
        let oracle = EstimationOracle::generate(&params, sensors, 200, 4).unwrap();
        let l = oracle.lipschitz();
        for t in 1..=200 {
            for i in 0..20 {
                for x in [-0.5, -0.2, 0.0, 0.3, 0.5] {
                    assert!(norm2(&oracle.subgradient(t, i, &[x])) <= l * (1.0 + 1e-9));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn subgradient_matches_finite_differences(
            h in 0.0..0.25f64, z in -1.0..1.0f64, x in -0.5..0.5f64,
        ) {
            let s = scalar(h, false);
            let eps = 1e-5;
            let fd = (local_cost(&s, &[z], &[x + eps]).unwrap() - local_cost(&s, &[z], &[x - eps]).unwrap()) / (2.0 * eps);
            prop_assert!((fd - local_subgradient(&s, &[z], &[x]).unwrap()[0]).abs() <= 1e-6);
        }

        #[test]
        fn cost_is_midpoint_convex(
            h in prop::collection::vec(0.0..0.25f64, 2),
            z in prop::collection::vec(-1.0..1.0f64, 2),
            u in prop::collection::vec(-0.5..0.5f64, 2),
            v in prop::collection::vec(-0.5..0.5f64, 2),
        ) {
            let s = SensorModel::diagonal(&h, false).unwrap();
            let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = local_cost(&s, &z, &mid).unwrap();
            let rhs = 0.5 * (local_cost(&s, &z, &u).unwrap() + local_cost(&s, &z, &v).unwrap());
            prop_assert!(lhs <= rhs + 1e-15);
        }
    }
}
