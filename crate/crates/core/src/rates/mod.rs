//! Limiting scaled LMGFs, their conjugates, ball inaccuracy rates and the
//! high-probability exponent.
//!
//! For `α_k = a/(k+b)` with `aρ_i > 1` the iterates satisfy an LDP upper
//! bound with rate function `Ī = (Ψ* + r)^*`, where
//!
//! ```text
//! Ψ*(λ) = ∫₀¹ Λ(a Q D(θ) Qᵀ λ; x*) dθ,   D(θ) = diag(θ^{aρ_i - 1})
//! r(λ)  = (4a²γ̄²L_Λ/B²)‖λ‖⁴ + a‖λ‖ h̄(2γ̄‖λ‖/B)
//! ```
//!
//! and `r ≡ 0` for quadratics with iterate-independent noise, where `I*` is
//! the exact rate.

pub mod fenchel;
pub mod gaussian;

use crate::error::{check_dim, invalid_arg, Error, Result};
use crate::linalg;
use crate::model::{residual_sup, Objective, SpectralDecomposition};
use crate::noise::NoiseModel;
use crate::quadrature::{integrate, QuadOptions};
use crate::sgd::{gamma_bar_for, hpb_offset, StepSchedule};
use fenchel::{ball_rate_search, fenchel_from, Diagnostics, FenchelOptions, RateQueryResult, SphereOptions};
use nalgebra::DMatrix;
use serde::Serialize;
use std::sync::Arc;

/// Lower end of the `θ` integration range; the kernel vanishes at 0.
const THETA_MIN: f64 = 1e-12;
/// Grid used to detect an LMGF that is infinite on part of `[0, 1]`.
const DOMAIN_GRID: usize = 512;

/// Constants of the high-probability bound `P(‖X_k - x*‖ ≥ δ) ≤ e·exp(-(k+k0)Bδ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HpbParams {
    pub b: f64,
    pub k0: f64,
}

impl HpbParams {
    pub fn tail_bound(&self, k: f64, delta: f64) -> f64 {
        std::f64::consts::E * (-(k + self.k0) * self.b * delta * delta).exp()
    }

    /// `Bδ²`.
    pub fn rate(&self, delta: f64) -> f64 {
        self.b * delta * delta
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HpbInputs {
    pub a: f64,
    pub mu: f64,
    pub lip: f64,
    pub c1: f64,
    pub c2: f64,
    /// `‖X1 - x*‖`; `None` or zero drops that branch of the minimum.
    pub initial_distance: Option<f64>,
}

pub fn hpb_exponent_from(p: HpbInputs) -> Result<HpbParams> {
    if !(p.c1 > 0.0 && p.c2 > 0.0) {
        return Err(invalid_arg("C1 and C2 must be positive"));
    }
    // only 2aμ > 1 is needed for the formula itself
    let k0 = hpb_offset(p.a, p.mu, p.lip)?;
    let noise_branch = (2.0 * p.a * p.mu - 1.0) / (4.0 * p.c1.max(2.0 * p.c2) * p.a * p.a);
    let b = match p.initial_distance {
        Some(d) if d > 0.0 => noise_branch.min(1.0 / (k0 * d)),
        _ => noise_branch,
    };
    Ok(HpbParams { b, k0 })
}

/// `B` and `k0` for a concrete problem. With `include_initial_branch = false`
/// the `1/(k0‖X1 - x*‖)` term is left out.
pub fn hpb_exponent(
    obj: &dyn Objective,
    noise: &dyn NoiseModel,
    schedule: &StepSchedule,
    x1: &[f64],
    include_initial_branch: bool,
) -> Result<HpbParams> {
    check_dim(obj.dim(), x1.len(), "x1")?;
    schedule.validate_for(obj)?;
    let c1 = noise
        .c1()
        .ok_or_else(|| Error::InvalidState("noise model has no sub-Gaussian constant C1".into()))?;
    let c2 = noise
        .c2()
        .ok_or_else(|| Error::InvalidState("noise model has no Orlicz constant C2".into()))?;
    let dist = linalg::distance(x1, obj.minimizer());
    hpb_exponent_from(HpbInputs {
        a: schedule.a(),
        mu: obj.mu(),
        lip: obj.lip(),
        c1,
        c2,
        initial_distance: include_initial_branch.then_some(dist),
    })
}

/// `r(λ)` from its ingredients. `h_bar` is only called with a positive radius.
pub fn remainder_from<H: FnOnce(f64) -> Result<f64>>(
    a: f64,
    gamma_bar: f64,
    l_lambda: f64,
    b: f64,
    lambda_norm: f64,
    h_bar: H,
) -> Result<f64> {
    if lambda_norm == 0.0 {
        return Ok(0.0);
    }
    let quartic = 4.0 * a * a * gamma_bar * gamma_bar * l_lambda / (b * b) * lambda_norm.powi(4);
    let radius = 2.0 * gamma_bar * lambda_norm / b;
    let hb = h_bar(radius)?;
    Ok(quartic + a * lambda_norm * hb)
}

/// Which rate function a ball query uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    /// `δ²/(2a²λ_max(S*))`; constant Gaussian noise only.
    GaussianClosed,
    /// Numerical conjugate of `Ψ*`.
    PsiStar,
    /// Numerical conjugate of `Ψ̄ = Ψ* + r`.
    PsiBar,
}

#[derive(Debug, Clone)]
pub struct RateEngine {
    obj: Arc<dyn Objective>,
    noise: Arc<dyn NoiseModel>,
    schedule: StepSchedule,
    gamma_bar: f64,
    hpb: Option<HpbParams>,
}

impl RateEngine {
    pub fn new(obj: Arc<dyn Objective>, noise: Arc<dyn NoiseModel>, schedule: StepSchedule) -> Result<Self> {
        check_dim(obj.dim(), noise.dim(), "noise")?;
        let a = schedule.a();
        for (i, &r) in obj.hessian_at_min().rho().iter().enumerate() {
            if !(a * r > 1.0) {
                return Err(invalid_arg(format!(
                    "a·rho_{i} = {} must exceed 1 for the limiting LMGF to exist",
                    a * r
                )));
            }
        }
        let gamma_bar = gamma_bar_for(obj.as_ref(), &schedule);
        Ok(Self {
            obj,
            noise,
            schedule,
            gamma_bar,
            hpb: None,
        })
    }

    pub fn with_hpb(mut self, hpb: HpbParams) -> Self {
        self.hpb = Some(hpb);
        self
    }

    /// Attach the HPB exponent computed from `x1`, when the noise has `C1` and `C2`.
    pub fn with_initial_point(self, x1: &[f64], include_initial_branch: bool) -> Result<Self> {
        let hpb = hpb_exponent(self.obj.as_ref(), self.noise.as_ref(), &self.schedule, x1, include_initial_branch)?;
        Ok(self.with_hpb(hpb))
    }

    pub fn objective(&self) -> &Arc<dyn Objective> {
        &self.obj
    }

    pub fn noise(&self) -> &Arc<dyn NoiseModel> {
        &self.noise
    }

    pub fn schedule(&self) -> StepSchedule {
        self.schedule
    }

    pub fn dim(&self) -> usize {
        self.obj.dim()
    }

    pub fn a(&self) -> f64 {
        self.schedule.a()
    }

    pub fn spectral(&self) -> &SpectralDecomposition {
        self.obj.hessian_at_min()
    }

    pub fn gamma_bar(&self) -> f64 {
        self.gamma_bar
    }

    pub fn l_lambda(&self) -> f64 {
        self.noise.lipschitz_lambda()
    }

    pub fn c1(&self) -> Option<f64> {
        self.noise.c1()
    }

    pub fn hpb(&self) -> Option<HpbParams> {
        self.hpb
    }

    /// True when `r ≡ 0` and `Ψ*` generates the exact rate.
    pub fn is_exact(&self) -> bool {
        self.obj.is_quadratic() && self.noise.is_iterate_independent()
    }

    /// Diagonal of `D(θ) = diag(θ^{aρ_i - 1})`.
    pub fn kernel_d_theta(&self, theta: f64) -> Result<Vec<f64>> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(invalid_arg(format!("theta = {theta} outside (0, 1]")));
        }
        let a = self.a();
        Ok(self.spectral().rho().iter().map(|r| theta.powf(a * r - 1.0)).collect())
    }

    fn kernel_apply(&self, w: &[f64], theta: f64, out: &mut [f64]) {
        // out = a Q D(θ) w with w = Qᵀλ
        let a = self.a();
        let q = self.spectral().q();
        let rho = self.spectral().rho();
        let d = w.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..d {
            let c = a * theta.powf(a * rho[k] - 1.0) * w[k];
            if c == 0.0 {
                continue;
            }
            for i in 0..d {
                out[i] += q[(i, k)] * c;
            }
        }
    }

    /// `Ψ*(λ)` by adaptive quadrature; `+inf` outside its domain.
    pub fn psi_star(&self, lambda: &[f64]) -> Result<f64> {
        check_dim(self.dim(), lambda.len(), "lambda")?;
        Ok(self.psi_star_unchecked(lambda))
    }

    fn psi_star_unchecked(&self, lambda: &[f64]) -> f64 {
        if lambda.iter().all(|&v| v == 0.0) {
            return 0.0;
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let xs = self.obj.minimizer();
        let w: Vec<f64> = (self.spectral().q().transpose() * nalgebra::DVector::from_column_slice(lambda))
            .iter()
            .copied()
            .collect();
        let mut buf = vec![0.0; w.len()];
        let mut integrand = |theta: f64| {
            self.kernel_apply(&w, theta, &mut buf);
            self.noise.lmgf(&buf, xs)
        };
        if self.noise.lmgf_domain_radius(xs).is_finite() {
            // infinite anywhere means infinite on an open set of θ
            for i in 1..=DOMAIN_GRID {
                if integrand(i as f64 / DOMAIN_GRID as f64) == f64::INFINITY {
                    return f64::INFINITY;
                }
            }
        }
        let q = integrate(integrand, THETA_MIN, 1.0, QuadOptions::default());
        if q.value.is_nan() {
            f64::INFINITY
        } else {
            q.value
        }
    }

    /// Estimate of `h̄(δ)` for the engine's objective.
    pub fn residual_sup(&self, delta: f64) -> Result<f64> {
        residual_sup(self.obj.as_ref(), delta)
    }

    /// `r(λ)`; needs the HPB exponent unless `r` vanishes identically.
    pub fn remainder(&self, lambda: &[f64]) -> Result<f64> {
        check_dim(self.dim(), lambda.len(), "lambda")?;
        let l_lambda = self.l_lambda();
        if self.obj.is_quadratic() && l_lambda == 0.0 {
            return Ok(0.0);
        }
        let hpb = self
            .hpb
            .ok_or_else(|| Error::InvalidState("remainder needs the HPB exponent B".into()))?;
        remainder_from(self.a(), self.gamma_bar, l_lambda, hpb.b, linalg::norm(lambda), |r| {
            self.residual_sup(r)
        })
    }

    pub fn psi_bar(&self, lambda: &[f64]) -> Result<f64> {
        let p = self.psi_star(lambda)?;
        if p == f64::INFINITY {
            return Ok(p);
        }
        Ok(p + self.remainder(lambda)?)
    }

    /// `C1 a²‖λ‖² / (2(2aμ - 1))`, an upper bound on `Ψ*` that ignores the curvature spread.
    pub fn coarse_psi_bound(&self, lambda: &[f64]) -> Result<f64> {
        check_dim(self.dim(), lambda.len(), "lambda")?;
        let c1 = self
            .c1()
            .ok_or_else(|| Error::InvalidState("noise model has no sub-Gaussian constant C1".into()))?;
        let a = self.a();
        let n = linalg::norm(lambda);
        Ok(c1 * a * a * n * n / (2.0 * (2.0 * a * self.obj.mu() - 1.0)))
    }

    fn gaussian_sigma(&self) -> Result<&DMatrix<f64>> {
        if !self.noise.is_iterate_independent() {
            return Err(Error::InvalidState("closed forms need iterate-independent noise".into()));
        }
        self.noise
            .gaussian_covariance()
            .ok_or_else(|| Error::InvalidState("closed forms need Gaussian noise".into()))
    }

    pub fn gaussian_s_star(&self, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        gaussian::s_star(self.a(), self.spectral(), sigma)
    }

    /// `S*` for the engine's own Gaussian noise.
    pub fn s_star(&self) -> Result<DMatrix<f64>> {
        self.gaussian_s_star(self.gaussian_sigma()?)
    }

    pub fn gaussian_psi_star_closed(&self, sigma: &DMatrix<f64>, lambda: &[f64]) -> Result<f64> {
        let s = self.gaussian_s_star(sigma)?;
        gaussian::psi_star_closed(self.a(), self.spectral(), &s, lambda)
    }

    pub fn gaussian_rate_closed(&self, sigma: &DMatrix<f64>, z: &[f64]) -> Result<f64> {
        let s = self.gaussian_s_star(sigma)?;
        gaussian::rate_closed(self.a(), self.spectral(), &s, z)
    }

    /// Conjugate of `Ψ*` (or `Ψ̄`) at `z`.
    pub fn rate(&self, source: RateSource, z: &[f64]) -> Result<RateQueryResult> {
        self.rate_from(source, z, None)
    }

    fn rate_from(&self, source: RateSource, z: &[f64], start: Option<&[f64]>) -> Result<RateQueryResult> {
        check_dim(self.dim(), z.len(), "z")?;
        let opts = FenchelOptions::default();
        match source {
            RateSource::GaussianClosed => {
                let s = self.s_star()?;
                let value = gaussian::rate_closed(self.a(), self.spectral(), &s, z)?;
                let witness = gaussian::rate_closed_gradient(self.a(), self.spectral(), &s, z)?;
                Ok(exact_result(value, witness))
            }
            RateSource::PsiStar => Ok(fenchel_from(|l: &[f64]| self.psi_star_unchecked(l), z, start, opts)),
            RateSource::PsiBar => {
                if self.is_exact() {
                    return self.rate_from(RateSource::PsiStar, z, start);
                }
                if self.hpb.is_none() {
                    return Err(Error::InvalidState("remainder needs the HPB exponent B".into()));
                }
                Ok(fenchel_from(|l: &[f64]| self.psi_bar(l).unwrap_or(f64::INFINITY), z, start, opts))
            }
        }
    }

    /// `inf_{‖z‖ ≥ δ} I(z)`; the witness is a minimizing `z` on the sphere.
    pub fn ball_rate(&self, source: RateSource, delta: f64) -> Result<RateQueryResult> {
        self.ball_rate_with(source, delta, SphereOptions::default())
    }

    pub fn ball_rate_with(&self, source: RateSource, delta: f64, opts: SphereOptions) -> Result<RateQueryResult> {
        if !(delta >= 0.0) {
            return Err(invalid_arg("delta must be nonnegative"));
        }
        match source {
            RateSource::GaussianClosed => {
                let s = self.s_star()?;
                let (value, witness) = gaussian::ball_rate_closed(self.a(), self.spectral(), &s, delta)?;
                Ok(exact_result(value, witness))
            }
            _ => {
                // surface solver errors before the search swallows them
                self.rate(source, &vec![0.0; self.dim()])?;
                // neighbouring sphere points have nearby maximizers
                let mut last: Option<Vec<f64>> = None;
                Ok(ball_rate_search(
                    |z| {
                        let r = self.rate_from(source, z, last.as_deref()).expect("checked above");
                        last = Some(r.witness.clone());
                        r
                    },
                    self.dim(),
                    delta,
                    opts,
                ))
            }
        }
    }

    /// Ball rate when the noise covariance is diagonal in the Hessian eigenbasis.
    pub fn aligned_ball_rate(&self, sigma_sq: &[f64], delta: f64) -> Result<f64> {
        gaussian::aligned_ball_rate(self.a(), self.spectral().rho().as_slice(), sigma_sq, delta)
    }

    /// `log E exp(λᵀ(X_{k+1} - x*))` for a quadratic with iterate-independent
    /// noise, from `X_{k+1} - x* = A_{k,1}(X1 - x*) + Σ_l α_l A_{k,l+1} Z_l`
    /// with `A_{k,l} = Π_{j=l}^{k} (I - α_j H)`.
    pub fn quadratic_exact_lmgf(&self, x1: &[f64], k: usize, lambda: &[f64]) -> Result<f64> {
        if !self.is_exact() {
            return Err(Error::InvalidState(
                "the exact LMGF needs a quadratic objective and iterate-independent noise".into(),
            ));
        }
        check_dim(self.dim(), x1.len(), "x1")?;
        check_dim(self.dim(), lambda.len(), "lambda")?;
        if k == 0 {
            return Err(invalid_arg("k must be at least 1"));
        }
        let xs = self.obj.minimizer();
        let q = self.spectral().q();
        let rho = self.spectral().rho();
        let d = self.dim();
        let w = q.transpose() * nalgebra::DVector::from_column_slice(lambda);
        let mut prod = vec![1.0; d];
        let mut v = vec![0.0; d];
        let mut total = 0.0;
        for l in (1..=k).rev() {
            let alpha = self.schedule.alpha(l);
            // α_l A_{k,l+1} λ in the original basis
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = (0..d).map(|m| q[(i, m)] * prod[m] * w[m]).sum::<f64>() * alpha;
            }
            let t = self.noise.lmgf(&v, xs);
            if t == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
            total += t;
            for m in 0..d {
                prod[m] *= 1.0 - alpha * rho[m];
            }
        }
        // deterministic part λᵀ A_{k,1}(X1 - x*)
        let diff = nalgebra::DVector::from_iterator(d, x1.iter().zip(xs).map(|(a, b)| a - b));
        let e = q.transpose() * diff;
        let det: f64 = (0..d).map(|m| w[m] * prod[m] * e[m]).sum();
        Ok(total + det)
    }

    /// `((1/k) Σ_{l=1}^{k} Λ(α_l B_{k,l} kλ; x*), Ψ*(λ), gap)` with
    /// `B_{k,l} = Π_{j=l}^{k} (I - α_j H*)`.
    pub fn riemann_limit_check(&self, lambda: &[f64], k: usize) -> Result<(f64, f64, f64)> {
        check_dim(self.dim(), lambda.len(), "lambda")?;
        if k == 0 {
            return Err(invalid_arg("k must be at least 1"));
        }
        let xs = self.obj.minimizer();
        let q = self.spectral().q();
        let rho = self.spectral().rho();
        let d = self.dim();
        let w = q.transpose() * nalgebra::DVector::from_column_slice(lambda) * k as f64;
        let mut prod = vec![1.0; d];
        let mut v = vec![0.0; d];
        let mut sum = 0.0;
        for l in (1..=k).rev() {
            let alpha = self.schedule.alpha(l);
            for m in 0..d {
                prod[m] *= 1.0 - alpha * rho[m];
            }
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = (0..d).map(|m| q[(i, m)] * prod[m] * w[m]).sum::<f64>() * alpha;
            }
            sum += self.noise.lmgf(&v, xs);
        }
        let finite_sum = sum / k as f64;
        let integral = self.psi_star_unchecked(lambda);
        Ok((finite_sum, integral, (finite_sum - integral).abs()))
    }
}

fn exact_result(value: f64, witness: Vec<f64>) -> RateQueryResult {
    RateQueryResult {
        value,
        witness,
        diagnostics: Diagnostics {
            iterations: 0,
            gradient_norm: 0.0,
            converged: true,
            unbounded: false,
        },
    }
}
