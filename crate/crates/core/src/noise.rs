//! Gradient-noise models.
//!
//! A model pairs a sampler with the conditional log-moment generating function
//! `Λ(λ; x) = log E[exp(λᵀZ) | X = x]` and the regularity constants used by the
//! rate computations: the sub-Gaussian proxy `C1` (`Λ(λ;x) ≤ C1‖λ‖²/2`), the
//! Orlicz constant `C2` (`E[exp(‖Z‖²/C2) | x] ≤ e`) and the Lipschitz-in-x
//! constant `L_Λ` (`|Λ(λ;x) - Λ(λ;y)| ≤ L_Λ‖λ‖²‖x-y‖`).
//!
//! `Λ` returns `+∞` outside its effective domain rather than failing.

use crate::error::{check_dim, invalid_arg, Error, Result};
use crate::linalg::{self, jacobi_eigen, matrix_from_rows};
use crate::rng::Stream;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub trait NoiseModel: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;
    /// Draw one noise vector at iterate `x`.
    fn sample_into(&self, x: &[f64], rng: &mut Stream, out: &mut [f64]);
    fn lmgf(&self, lambda: &[f64], x: &[f64]) -> f64;
    /// Largest `r` such that `Λ(λ; x)` is finite for every `‖λ‖ < r`.
    fn lmgf_domain_radius(&self, _x: &[f64]) -> f64 {
        f64::INFINITY
    }
    fn c1(&self) -> Option<f64>;
    fn c2(&self) -> Option<f64>;
    /// Declared `L_Λ`; zero for iterate-independent models.
    fn lipschitz_lambda(&self) -> f64 {
        0.0
    }
    fn is_iterate_independent(&self) -> bool {
        true
    }
    /// Constant Gaussian covariance, when the model is one.
    fn gaussian_covariance(&self) -> Option<&DMatrix<f64>> {
        None
    }
    /// Per-coordinate variance at `x`.
    fn entry_variances(&self, x: &[f64]) -> Vec<f64>;

    fn sample(&self, x: &[f64], rng: &mut Stream) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(x, rng, &mut out);
        out
    }
}

/// Square-root factor `F` with `F Fᵀ = Σ`, or `None` when `Σ` is diagonal.
fn covariance_factor(sigma: &DMatrix<f64>) -> Result<(Option<DMatrix<f64>>, Vec<f64>, f64)> {
    let d = sigma.nrows();
    let e = jacobi_eigen(sigma)?;
    let scale = e.values.amax().max(1.0);
    if e.values.iter().any(|&v| v < -1e-12 * scale) {
        return Err(invalid_arg("covariance is not positive semidefinite"));
    }
    let sigma_max = e.values.max().max(0.0);
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || sigma[(i, j)] == 0.0));
    let sd: Vec<f64> = (0..d).map(|i| sigma[(i, i)].max(0.0).sqrt()).collect();
    if diagonal {
        return Ok((None, sd, sigma_max));
    }
    let mut f = e.vectors.clone();
    for j in 0..d {
        let s = e.values[j].max(0.0).sqrt();
        for i in 0..d {
            f[(i, j)] *= s;
        }
    }
    Ok((Some(f), sd, sigma_max))
}

fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let d = v.len();
    let mut s = 0.0;
    for i in 0..d {
        let mut r = 0.0;
        for j in 0..d {
            r += m[(i, j)] * v[j];
        }
        s += v[i] * r;
    }
    s
}

/// Zero-mean Gaussian with constant covariance `Σ`.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    sigma: DMatrix<f64>,
    factor: Option<DMatrix<f64>>,
    sd: Vec<f64>,
    sigma_max: f64,
    normals: usize,
}

impl GaussianNoise {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(invalid_arg("covariance must be square"));
        }
        let (factor, sd, sigma_max) = covariance_factor(&sigma)?;
        let normals = sigma.nrows();
        Ok(Self {
            sigma,
            factor,
            sd,
            sigma_max,
            normals,
        })
    }

    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * variance)
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_max_sq(&self) -> f64 {
        self.sigma_max
    }
}

fn correlated_normals(factor: &Option<DMatrix<f64>>, sd: &[f64], rng: &mut Stream, n: usize, out: &mut [f64], scale: f64) {
    match factor {
        None => {
            for (o, s) in out.iter_mut().zip(sd) {
                *o = scale * s * rng.normal();
            }
        }
        Some(f) => {
            let mut buf = [0.0f64; 64];
            let mut heap;
            let w: &mut [f64] = if n <= 64 {
                &mut buf[..n]
            } else {
                heap = vec![0.0; n];
                &mut heap
            };
            rng.fill_normal(w);
            for (i, o) in out.iter_mut().enumerate() {
                let mut s = 0.0;
                for (j, wj) in w.iter().enumerate() {
                    s += f[(i, j)] * wj;
                }
                *o = scale * s;
            }
        }
    }
}

impl NoiseModel for GaussianNoise {
    fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    fn sample_into(&self, _x: &[f64], rng: &mut Stream, out: &mut [f64]) {
        correlated_normals(&self.factor, &self.sd, rng, self.normals, out, 1.0);
    }

    fn lmgf(&self, lambda: &[f64], _x: &[f64]) -> f64 {
        0.5 * quad_form(&self.sigma, lambda)
    }

    fn c1(&self) -> Option<f64> {
        Some(self.sigma_max)
    }

    fn c2(&self) -> Option<f64> {
        Some(2.0 * self.sigma_max)
    }

    fn gaussian_covariance(&self) -> Option<&DMatrix<f64>> {
        Some(&self.sigma)
    }

    fn entry_variances(&self, _x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| self.sigma[(i, i)]).collect()
    }
}

/// Gaussian whose covariance scales with the iterate:
/// `Σ(x) = (1 + min(‖x‖, 1)) · base`.
///
/// The map is Lipschitz, so `|Λ(λ;x) - Λ(λ;y)| ≤ ½ σ²_max(base) ‖λ‖²‖x-y‖`;
/// the declared `lip` must be at least that.
#[derive(Debug, Clone)]
pub struct StateDependentGaussian {
    base: DMatrix<f64>,
    factor: Option<DMatrix<f64>>,
    sd: Vec<f64>,
    base_max: f64,
    lip: f64,
}

impl StateDependentGaussian {
    pub fn new(base: DMatrix<f64>, lip: f64) -> Result<Self> {
        if !base.is_square() {
            return Err(invalid_arg("covariance must be square"));
        }
        let (factor, sd, base_max) = covariance_factor(&base)?;
        if !(lip >= 0.5 * base_max * (1.0 - 1e-12)) {
            return Err(invalid_arg(format!(
                "declared L_Lambda {lip} is below the analytic constant {}",
                0.5 * base_max
            )));
        }
        Ok(Self {
            base,
            factor,
            sd,
            base_max,
            lip,
        })
    }

    pub fn scale_at(&self, x: &[f64]) -> f64 {
        1.0 + linalg::norm(x).min(1.0)
    }
}

impl NoiseModel for StateDependentGaussian {
    fn dim(&self) -> usize {
        self.base.nrows()
    }

    fn sample_into(&self, x: &[f64], rng: &mut Stream, out: &mut [f64]) {
        let s = self.scale_at(x).sqrt();
        correlated_normals(&self.factor, &self.sd, rng, self.dim(), out, s);
    }

    fn lmgf(&self, lambda: &[f64], x: &[f64]) -> f64 {
        0.5 * self.scale_at(x) * quad_form(&self.base, lambda)
    }

    fn c1(&self) -> Option<f64> {
        Some(2.0 * self.base_max)
    }

    fn c2(&self) -> Option<f64> {
        Some(4.0 * self.base_max)
    }

    fn lipschitz_lambda(&self) -> f64 {
        self.lip
    }

    fn is_iterate_independent(&self) -> bool {
        false
    }

    fn entry_variances(&self, x: &[f64]) -> Vec<f64> {
        let s = self.scale_at(x);
        (0..self.dim()).map(|i| s * self.base[(i, i)]).collect()
    }
}

/// I.i.d. zero-mean Laplace entries with scale `b` (variance `2b²`).
#[derive(Debug, Clone)]
pub struct LaplaceNoise {
    dim: usize,
    scale: f64,
}

impl LaplaceNoise {
    pub fn new(dim: usize, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(invalid_arg("Laplace scale must be positive"));
        }
        Ok(Self { dim, scale })
    }

    /// Laplace entries with the given per-entry variance.
    pub fn with_variance(dim: usize, variance: f64) -> Result<Self> {
        Self::new(dim, (variance / 2.0).sqrt())
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

impl NoiseModel for LaplaceNoise {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_into(&self, _x: &[f64], rng: &mut Stream, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = rng.laplace(self.scale);
        }
    }

    fn lmgf(&self, lambda: &[f64], _x: &[f64]) -> f64 {
        let mut s = 0.0;
        for &l in lambda {
            let t = self.scale * l;
            let tt = t * t;
            if !(tt < 1.0) {
                return f64::INFINITY;
            }
            s -= (-tt).ln_1p();
        }
        s
    }

    fn lmgf_domain_radius(&self, _x: &[f64]) -> f64 {
        1.0 / self.scale
    }

    fn c1(&self) -> Option<f64> {
        None
    }

    fn c2(&self) -> Option<f64> {
        None
    }

    fn entry_variances(&self, _x: &[f64]) -> Vec<f64> {
        vec![2.0 * self.scale * self.scale; self.dim]
    }
}

/// I.i.d. symmetric two-point entries `±m`.
#[derive(Debug, Clone)]
pub struct RademacherNoise {
    dim: usize,
    m: f64,
    c2: f64,
}

impl RademacherNoise {
    /// `C2` defaults to `d·m²`, the smallest value with `E[exp(‖Z‖²/C2)] ≤ e`.
    pub fn new(dim: usize, m: f64) -> Result<Self> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(invalid_arg("two-point magnitude must be nonnegative"));
        }
        Ok(Self {
            dim,
            m,
            c2: (dim as f64 * m * m).max(f64::MIN_POSITIVE),
        })
    }

    pub fn with_c2(mut self, c2: f64) -> Result<Self> {
        if c2 < self.dim as f64 * self.m * self.m {
            return Err(invalid_arg("C2 below d·m² violates the Orlicz condition"));
        }
        self.c2 = c2;
        Ok(self)
    }
}

impl NoiseModel for RademacherNoise {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_into(&self, _x: &[f64], rng: &mut Stream, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = self.m * rng.sign();
        }
    }

    fn lmgf(&self, lambda: &[f64], _x: &[f64]) -> f64 {
        lambda.iter().map(|&l| log_cosh(self.m * l)).sum()
    }

    fn c1(&self) -> Option<f64> {
        Some(self.m * self.m)
    }

    fn c2(&self) -> Option<f64> {
        Some(self.c2)
    }

    fn entry_variances(&self, _x: &[f64]) -> Vec<f64> {
        vec![self.m * self.m; self.dim]
    }
}

/// Noise identically zero; useful for deterministic runs.
#[derive(Debug, Clone)]
pub struct ZeroNoise {
    dim: usize,
}

impl ZeroNoise {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl NoiseModel for ZeroNoise {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_into(&self, _x: &[f64], _rng: &mut Stream, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }

    fn lmgf(&self, _lambda: &[f64], _x: &[f64]) -> f64 {
        0.0
    }

    fn c1(&self) -> Option<f64> {
        Some(0.0)
    }

    fn c2(&self) -> Option<f64> {
        Some(f64::MIN_POSITIVE)
    }

    fn entry_variances(&self, _x: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}

/// `log cosh(t)` without overflow for large `|t|`.
pub fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    if a < 1.0 {
        // cosh a = 1 + 2 sinh²(a/2), no cancellation near 0
        let s = (0.5 * a).sinh();
        return (2.0 * s * s).ln_1p();
    }
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `Λ(λ; x)` with dimension checks.
pub fn lmgf_eval(model: &dyn NoiseModel, lambda: &[f64], x: &[f64]) -> Result<f64> {
    check_dim(model.dim(), lambda.len(), "lmgf lambda")?;
    check_dim(model.dim(), x.len(), "lmgf point")?;
    Ok(model.lmgf(lambda, x))
}

/// The bound `exp(ν C2)` on `M(ν; x) = E[exp(ν‖Z‖²) | x]`, valid for `0 ≤ ν ≤ 1/C2`.
pub fn mgf_norm_bound(model: &dyn NoiseModel, nu: f64) -> Result<f64> {
    let c2 = model
        .c2()
        .ok_or_else(|| Error::InvalidState("noise model has no Orlicz constant C2".into()))?;
    if !(0.0..=1.0 / c2).contains(&nu) {
        return Err(invalid_arg(format!("nu = {nu} outside [0, 1/C2 = {}]", 1.0 / c2)));
    }
    Ok((nu * c2).exp())
}

/// Sample mean and standard error of a scalar statistic of the noise.
#[derive(Debug, Clone, Copy)]
pub struct Empirical {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte Carlo estimate of `E[exp(ν‖Z‖²) | x]`.
pub fn empirical_mgf_norm(model: &dyn NoiseModel, x: &[f64], nu: f64, draws: usize, rng: &mut Stream) -> Empirical {
    let mut buf = vec![0.0; model.dim()];
    mean_and_se(draws, || {
        model.sample_into(x, rng, &mut buf);
        (nu * linalg::dot(&buf, &buf)).exp()
    })
}

/// Monte Carlo estimate of `E[exp(λᵀZ) | x]`.
pub fn empirical_mgf(model: &dyn NoiseModel, lambda: &[f64], x: &[f64], draws: usize, rng: &mut Stream) -> Empirical {
    let mut buf = vec![0.0; model.dim()];
    mean_and_se(draws, || {
        model.sample_into(x, rng, &mut buf);
        linalg::dot(lambda, &buf).exp()
    })
}

fn mean_and_se(n: usize, mut f: impl FnMut() -> f64) -> Empirical {
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n {
        let v = f();
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    Empirical {
        mean,
        std_error: (var / n as f64).sqrt(),
    }
}

/// Empirical maximum of `|Λ(λ;x) - Λ(λ;y)| / (‖λ‖²‖x-y‖)` over random
/// triples. Iterate-independent models return 0.
pub fn estimate_lipschitz_lambda(model: &dyn NoiseModel, sample_budget: usize, seed: u64) -> f64 {
    if model.is_iterate_independent() {
        return 0.0;
    }
    let d = model.dim();
    let mut rng = Stream::new(seed, 0);
    let mut best = 0.0f64;
    for i in 0..sample_budget {
        let radius = model.lmgf_domain_radius(&vec![0.0; d]).min(2.0);
        let lambda: Vec<f64> = rng.unit_vector(d).iter().map(|u| u * radius * 0.9 * rng.uniform()).collect();
        // alternate between small and large iterates so every regime is probed
        let spread = if i % 2 == 0 { 0.5 } else { 2.0 };
        let x: Vec<f64> = (0..d).map(|_| spread * rng.normal()).collect();
        let y: Vec<f64> = x.iter().map(|xi| xi + 0.1 * spread * rng.normal()).collect();
        let lx = model.lmgf(&lambda, &x);
        let ly = model.lmgf(&lambda, &y);
        let denom = linalg::dot(&lambda, &lambda) * linalg::distance(&x, &y);
        if lx.is_finite() && ly.is_finite() && denom > 0.0 {
            best = best.max((lx - ly).abs() / denom);
        }
    }
    best
}

/// JSON form of a noise model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseConfig {
    Gaussian { sigma: Vec<Vec<f64>> },
    GaussianStatedep { base: Vec<Vec<f64>>, lip: f64 },
    /// `dim` defaults to the objective dimension.
    Laplace {
        scale: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    Rademacher {
        m: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    Zero {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
}

impl NoiseConfig {
    pub fn build(&self, objective_dim: usize) -> Result<Arc<dyn NoiseModel>> {
        let model: Arc<dyn NoiseModel> = match self {
            NoiseConfig::Gaussian { sigma } => Arc::new(GaussianNoise::new(matrix_from_rows(sigma)?)?),
            NoiseConfig::GaussianStatedep { base, lip } => {
                Arc::new(StateDependentGaussian::new(matrix_from_rows(base)?, *lip)?)
            }
            NoiseConfig::Laplace { scale, dim } => Arc::new(LaplaceNoise::new(dim.unwrap_or(objective_dim), *scale)?),
            NoiseConfig::Rademacher { m, dim } => Arc::new(RademacherNoise::new(dim.unwrap_or(objective_dim), *m)?),
            NoiseConfig::Zero { dim } => Arc::new(ZeroNoise::new(dim.unwrap_or(objective_dim))),
        };
        check_dim(objective_dim, model.dim(), "noise model")?;
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn lmgf_at_zero_vanishes() {
        let models: Vec<Box<dyn NoiseModel>> = vec![
            Box::new(GaussianNoise::new(diag(&[1.0, 4.0])).unwrap()),
            Box::new(LaplaceNoise::new(2, 0.7).unwrap()),
            Box::new(RademacherNoise::new(2, 1.3).unwrap()),
            Box::new(StateDependentGaussian::new(diag(&[1.0, 2.0]), 1.0).unwrap()),
        ];
        for m in &models {
            assert_eq!(lmgf_eval(m.as_ref(), &[0.0, 0.0], &[0.3, -0.2]).unwrap(), 0.0);
        }
    }

    #[test]
    fn lmgf_plug_in_values() {
        let g = GaussianNoise::new(diag(&[1.0, 4.0])).unwrap();
        assert_eq!(g.lmgf(&[1.0, 1.0], &[0.0, 0.0]), 2.5);
        let l = LaplaceNoise::new(1, 1.0 / 2f64.sqrt()).unwrap();
        let v = l.lmgf(&[0.5], &[0.0]);
        assert!((v + 0.875f64.ln()).abs() < 1e-15);
        assert!((v - 0.133_531_392_624_522_6).abs() < 1e-12);
        assert_eq!(l.lmgf(&[2.0], &[0.0]), f64::INFINITY);
        assert!((l.lmgf_domain_radius(&[0.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn lmgf_dimension_mismatch() {
        let g = GaussianNoise::isotropic(2, 1.0).unwrap();
        assert!(lmgf_eval(&g, &[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn log_cosh_is_stable() {
        assert!((log_cosh(0.3) - 0.3f64.cosh().ln()).abs() < 1e-15);
        assert!((log_cosh(800.0) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-12);
        // ln cosh t = t²/2 - t⁴/12 + ...
        let t = 1e-6;
        assert!((log_cosh(t) / (0.5 * t * t) - 1.0).abs() < 1e-12);
        assert!((log_cosh(0.999) - 0.999f64.cosh().ln()).abs() < 1e-15);
        assert!((log_cosh(1.001) - 1.001f64.cosh().ln()).abs() < 1e-15);
    }

    #[test]
    fn laplace_lmgf_small_argument() {
        // -ln(1 - t²) = t² + t⁴/2 + ...
        let lap = LaplaceNoise::new(1, 1.0).unwrap();
        let t = 1e-7;
        assert!((lap.lmgf(&[t], &[0.0]) / (t * t) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mgf_norm_bound_values_and_domain() {
        let g = GaussianNoise::isotropic(1, 1.0).unwrap();
        assert_eq!(mgf_norm_bound(&g, 0.0).unwrap(), 1.0);
        assert!((mgf_norm_bound(&g, 0.5).unwrap() - 1f64.exp()).abs() < 1e-15);
        assert!(mgf_norm_bound(&g, 0.6).is_err());
        assert!(mgf_norm_bound(&g, -0.1).is_err());
        assert!(mgf_norm_bound(&LaplaceNoise::new(1, 1.0).unwrap(), 0.1).is_err());
    }

    #[test]
    fn bounded_noise_mgf_norm_below_bound() {
        let r = RademacherNoise::new(1, 1.0).unwrap().with_c2(2.0).unwrap();
        let bound = mgf_norm_bound(&r, 0.25).unwrap();
        assert!((bound - 0.5f64.exp()).abs() < 1e-15);
        let mut rng = Stream::new(1, 0);
        let e = empirical_mgf_norm(&r, &[0.0], 0.25, 10_000, &mut rng);
        // Z² = 1 always, so the expectation is exactly e^{1/4}
        assert!((e.mean - 0.25f64.exp()).abs() < 1e-12);
        assert!(e.mean <= bound * (1.0 + 5.0 * e.std_error));
    }

    #[test]
    fn lipschitz_estimates() {
        assert_eq!(estimate_lipschitz_lambda(&LaplaceNoise::new(1, 1.0).unwrap(), 100, 0), 0.0);
        assert_eq!(estimate_lipschitz_lambda(&GaussianNoise::isotropic(1, 1.0).unwrap(), 100, 0), 0.0);
        let sd = StateDependentGaussian::new(diag(&[1.0]), 0.5).unwrap();
        let est = estimate_lipschitz_lambda(&sd, 20_000, 4);
        assert!(est <= 0.5 + 1e-8, "{est}");
        assert!(est > 0.45, "{est}");
    }

    #[test]
    fn state_dependent_rejects_small_declared_constant() {
        assert!(StateDependentGaussian::new(diag(&[2.0]), 0.5).is_err());
    }

    #[test]
    fn json_noise_specs() {
        let n = NoiseConfig::from_json(r#"{"type":"gaussian","sigma":[[1,0],[0,4]]}"#).unwrap();
        assert_eq!(n.build(2).unwrap().lmgf(&[1.0, 1.0], &[0.0, 0.0]), 2.5);
        let n = NoiseConfig::from_json(r#"{"type":"laplace","scale":0.5}"#).unwrap();
        assert_eq!(n.build(3).unwrap().dim(), 3);
        let n = NoiseConfig::from_json(r#"{"type":"rademacher","m":1}"#).unwrap();
        assert_eq!(n.build(1).unwrap().c1(), Some(1.0));
        let n = NoiseConfig::from_json(r#"{"type":"gaussian_statedep","base":[[1]],"lip":0.5}"#).unwrap();
        assert!(!n.build(1).unwrap().is_iterate_independent());
        let n = NoiseConfig::from_json(r#"{"type":"gaussian","sigma":[[1]]}"#).unwrap();
        assert!(n.build(2).is_err());
    }
}
