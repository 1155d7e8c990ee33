//! Objectives, their curvature at the minimizer, and the first-order Taylor
//! residual of the gradient.
//!
//! For an objective with gradient `g`, minimizer `x*` and Hessian `H*` at the
//! minimizer, the residual is `h(x) = g(x) - H* (x - x*)` and
//! `h̄(δ) = sup_{‖x - x*‖ ≤ δ} ‖h(x)‖`. Quadratics have `h ≡ 0`.

use crate::error::{check_dim, invalid_arg, Error, Result};
use crate::linalg::{self, jacobi_eigen};
use crate::rng::Stream;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Orthonormal eigenbasis `Q` and eigenvalues `rho` of the Hessian at the
/// minimizer, `H* = Q diag(rho) Qᵀ`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    q: DMatrix<f64>,
    rho: DVector<f64>,
}

impl SpectralDecomposition {
    pub fn from_symmetric(h: &DMatrix<f64>) -> Result<Self> {
        let e = jacobi_eigen(h)?;
        Ok(Self {
            q: e.vectors,
            rho: e.values,
        })
    }

    /// Build from an explicit basis; `q` must be orthonormal.
    pub fn from_parts(q: DMatrix<f64>, rho: DVector<f64>) -> Result<Self> {
        let d = rho.len();
        if q.nrows() != d || q.ncols() != d {
            return Err(invalid_arg("eigenbasis and eigenvalue count differ"));
        }
        let defect = (q.transpose() * &q - DMatrix::identity(d, d)).norm();
        if defect > 1e-10 {
            return Err(invalid_arg(format!(
                "eigenbasis is not orthonormal (‖QᵀQ - I‖ = {defect:e})"
            )));
        }
        Ok(Self { q, rho })
    }

    pub fn diagonal(rho: &[f64]) -> Self {
        let d = rho.len();
        Self {
            q: DMatrix::identity(d, d),
            rho: DVector::from_column_slice(rho),
        }
    }

    pub fn dim(&self) -> usize {
        self.rho.len()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.q * DMatrix::from_diagonal(&self.rho) * self.q.transpose()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.rho.min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.rho.max()
    }

    /// Checks `mu ≤ rho_i ≤ L` up to a relative slack of 1e-9.
    pub fn check_range(&self, mu: f64, lip: f64) -> Result<()> {
        let slack = 1e-9 * lip.abs().max(1.0);
        for &r in self.rho.iter() {
            if r < mu - slack || r > lip + slack {
                return Err(invalid_arg(format!(
                    "Hessian eigenvalue {r} outside [{mu}, {lip}]"
                )));
            }
        }
        Ok(())
    }
}

/// A smooth, strongly convex objective with known minimizer.
pub trait Objective: Send + Sync + std::fmt::Debug {
    fn dim(&self) -> usize;
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);
    fn minimizer(&self) -> &[f64];
    /// Strong convexity modulus.
    fn mu(&self) -> f64;
    /// Smoothness (gradient Lipschitz) constant.
    fn lip(&self) -> f64;
    fn hessian_at_min(&self) -> &SpectralDecomposition;
    fn hessian_lipschitz(&self) -> Option<f64> {
        None
    }
    /// True when the residual vanishes identically.
    fn is_quadratic(&self) -> bool {
        false
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.gradient_into(x, &mut out);
        out
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    a: DMatrix<f64>,
    b: DVector<f64>,
    x_star: Vec<f64>,
    spectral: SpectralDecomposition,
}

impl QuadraticObjective {
    /// `f(x) = ½ xᵀAx + bᵀx`, minimizer `x* = -A⁻¹b`.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_dim(a.nrows(), b.len(), "quadratic objective")?;
        let spectral = SpectralDecomposition::from_symmetric(&a)?;
        if spectral.min_eigenvalue() <= 0.0 {
            return Err(invalid_arg("quadratic matrix is not positive definite"));
        }
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| invalid_arg("quadratic matrix is not positive definite"))?;
        let x_star = -chol.solve(&b);
        Ok(Self {
            a,
            b,
            x_star: x_star.iter().copied().collect(),
            spectral,
        })
    }

    /// Quadratic with prescribed minimizer.
    pub fn with_minimizer(a: DMatrix<f64>, x_star: &[f64]) -> Result<Self> {
        let xs = DVector::from_column_slice(x_star);
        let b = -(&a * xs);
        let mut obj = Self::new(a, b)?;
        obj.x_star = x_star.to_vec();
        Ok(obj)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn linear_term(&self) -> &DVector<f64> {
        &self.b
    }
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut s = self.b[i];
            for j in 0..d {
                s += self.a[(i, j)] * x[j];
            }
            out[i] = s;
        }
    }

    fn minimizer(&self) -> &[f64] {
        &self.x_star
    }

    fn mu(&self) -> f64 {
        self.spectral.min_eigenvalue()
    }

    fn lip(&self) -> f64 {
        self.spectral.max_eigenvalue()
    }

    fn hessian_at_min(&self) -> &SpectralDecomposition {
        &self.spectral
    }

    fn hessian_lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }

    fn is_quadratic(&self) -> bool {
        true
    }
}

/// `f(x) = ½ xᵀAx + eps Σ ln cosh(x_i)`, minimized at the origin.
///
/// Gradient `Ax + eps·tanh(x)`, Hessian at the minimizer `A + eps·I`. The
/// Hessian is Lipschitz with constant `eps · 4/(3√3)` (the maximum of
/// `|d/dx sech²x|`).
#[derive(Debug, Clone)]
pub struct LogCoshObjective {
    a: DMatrix<f64>,
    eps: f64,
    x_star: Vec<f64>,
    spectral: SpectralDecomposition,
    mu: f64,
    lip: f64,
}

pub const SECH2_SLOPE_MAX: f64 = 0.769_800_358_919_501_2; // 4 / (3√3)

impl LogCoshObjective {
    pub fn new(a: DMatrix<f64>, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(invalid_arg("eps must be a finite nonnegative number"));
        }
        let d = a.nrows();
        let ea = jacobi_eigen(&a)?;
        let mu = ea.values[0];
        if mu <= 0.0 {
            return Err(invalid_arg("quadratic part is not positive definite"));
        }
        let lip = ea.values[d - 1] + eps;
        let h = &a + DMatrix::identity(d, d) * eps;
        let spectral = SpectralDecomposition::from_symmetric(&h)?;
        Ok(Self {
            a,
            eps,
            x_star: vec![0.0; d],
            spectral,
            mu,
            lip,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

impl Objective for LogCoshObjective {
    fn dim(&self) -> usize {
        self.x_star.len()
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut s = self.eps * x[i].tanh();
            for j in 0..d {
                s += self.a[(i, j)] * x[j];
            }
            out[i] = s;
        }
    }

    fn minimizer(&self) -> &[f64] {
        &self.x_star
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn lip(&self) -> f64 {
        self.lip
    }

    fn hessian_at_min(&self) -> &SpectralDecomposition {
        &self.spectral
    }

    fn hessian_lipschitz(&self) -> Option<f64> {
        Some(self.eps * SECH2_SLOPE_MAX)
    }
}

/// `h(x) = g(x) - H*(x - x*)`.
pub fn residual(obj: &dyn Objective, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(obj.dim(), x.len(), "residual")?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid_arg("residual needs a finite point"));
    }
    let d = obj.dim();
    if obj.is_quadratic() {
        return Ok(vec![0.0; d]);
    }
    Ok(residual_unchecked(obj, x))
}

fn residual_unchecked(obj: &dyn Objective, x: &[f64]) -> Vec<f64> {
    let d = obj.dim();
    let xs = obj.minimizer();
    let spec = obj.hessian_at_min();
    let q = spec.q();
    let rho = spec.rho();
    let mut g = obj.gradient(x);
    // H*(x - x*) through the eigenbasis
    let diff: Vec<f64> = x.iter().zip(xs).map(|(a, b)| a - b).collect();
    let mut w = vec![0.0; d];
    for k in 0..d {
        let mut s = 0.0;
        for i in 0..d {
            s += q[(i, k)] * diff[i];
        }
        w[k] = rho[k] * s;
    }
    for (i, gi) in g.iter_mut().enumerate() {
        let mut s = 0.0;
        for k in 0..d {
            s += q[(i, k)] * w[k];
        }
        *gi -= s;
    }
    g
}

const SUP_STARTS: usize = 16;
const SUP_INTERIOR_SAMPLES: usize = 10_000;
const SUP_ASCENT_ITERS: usize = 60;
const SUP_SEED: u64 = 0x5eed_0f_4e51d;

/// Estimate of `h̄(δ)`: multi-start projected ascent of `‖h‖` on the sphere
/// of radius `δ` plus uniform samples of the ball, capped at `L_H δ²` when
/// the Hessian Lipschitz constant is known. Deterministic.
pub fn residual_sup(obj: &dyn Objective, delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(invalid_arg("residual_sup needs delta ≥ 0"));
    }
    if delta == 0.0 || obj.is_quadratic() {
        return Ok(0.0);
    }
    let d = obj.dim();
    let xs = obj.minimizer().to_vec();
    let at = |u: &[f64], r: f64| -> Vec<f64> { xs.iter().zip(u).map(|(c, ui)| c + r * ui).collect() };
    let h_norm = |x: &[f64]| linalg::norm(&residual_unchecked(obj, x));

    let mut rng = Stream::new(SUP_SEED, d as u64);
    let mut best = 0.0f64;

    for _ in 0..SUP_INTERIOR_SAMPLES {
        let u = rng.unit_vector(d);
        let r = delta * rng.uniform().powf(1.0 / d as f64);
        best = best.max(h_norm(&at(&u, r)));
    }

    for start in 0..SUP_STARTS {
        let mut u = if start == 0 {
            let mut e = vec![0.0; d];
            e[0] = 1.0;
            e
        } else {
            rng.unit_vector(d)
        };
        let mut val = h_norm(&at(&u, delta));
        let mut step = 0.5;
        for _ in 0..SUP_ASCENT_ITERS {
            // numeric gradient of ‖h(x* + δu)‖ with respect to u, projected
            let fd = 1e-6;
            let mut grad = vec![0.0; d];
            for i in 0..d {
                let mut up = u.clone();
                up[i] += fd;
                let mut um = u.clone();
                um[i] -= fd;
                grad[i] = (h_norm(&at(&up, delta)) - h_norm(&at(&um, delta))) / (2.0 * fd);
            }
            let radial = linalg::dot(&grad, &u);
            grad.iter_mut().zip(&u).for_each(|(g, ui)| *g -= radial * ui);
            let gn = linalg::norm(&grad);
            if gn < 1e-14 {
                break;
            }
            let mut improved = false;
            while step > 1e-10 {
                let mut cand: Vec<f64> = u.iter().zip(&grad).map(|(ui, gi)| ui + step * gi / gn).collect();
                let cn = linalg::norm(&cand);
                cand.iter_mut().for_each(|c| *c /= cn);
                let cv = h_norm(&at(&cand, delta));
                if cv > val {
                    u = cand;
                    val = cv;
                    improved = true;
                    step *= 1.5;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        best = best.max(val);
    }

    if let Some(lh) = obj.hessian_lipschitz() {
        best = best.min(lh * delta * delta);
    }
    Ok(best)
}

/// `γ = (1 - 2αμ + α²L²)^{1/2}`, the contraction of the noiseless step.
pub fn contraction_factor(obj: &dyn Objective, alpha: f64) -> Result<f64> {
    contraction_factor_from(obj.mu(), obj.lip(), alpha)
}

pub fn contraction_factor_from(mu: f64, lip: f64, alpha: f64) -> Result<f64> {
    let radicand = 1.0 - 2.0 * alpha * mu + alpha * alpha * lip * lip;
    if radicand < 0.0 {
        return Err(invalid_arg(format!(
            "negative radicand {radicand} in contraction factor (mu > L?)"
        )));
    }
    Ok(radicand.sqrt())
}

/// JSON form of an objective.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectiveConfig {
    Quadratic {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    QuadLogcosh {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        eps: f64,
    },
}

impl ObjectiveConfig {
    pub fn build(&self) -> Result<Arc<dyn Objective>> {
        match self {
            ObjectiveConfig::Quadratic { a, b } => {
                let a = linalg::matrix_from_rows(a)?;
                Ok(Arc::new(QuadraticObjective::new(a, DVector::from_column_slice(b))?))
            }
            ObjectiveConfig::QuadLogcosh { a, eps } => {
                let a = linalg::matrix_from_rows(a)?;
                Ok(Arc::new(LogCoshObjective::new(a, *eps)?))
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))
    }
}
