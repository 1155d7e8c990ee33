//! Closed forms for iterate-independent Gaussian noise.
//!
//! With `S = QᵀΣQ` in the Hessian eigenbasis and
//! `S*_ij = S_ij / (a(ρ_i + ρ_j) - 1)`:
//!
//! ```text
//! Ψ*(λ) = (a²/2)   λᵀ Q S*  Qᵀ λ
//! I*(z) = 1/(2a²)  zᵀ Q S*⁻¹ Qᵀ z
//! inf_{‖z‖≥δ} I*(z) = δ² / (2a² λ_max(S*))
//! ```

use crate::error::{check_dim, invalid_arg, Error, Result};
use crate::linalg::jacobi_eigen;
use crate::model::SpectralDecomposition;
use crate::sgd::hpb_offset;
use nalgebra::{DMatrix, DVector};

/// Curvature-weighted covariance `S*` in the eigenbasis.
pub fn s_star(a: f64, spectral: &SpectralDecomposition, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = spectral.dim();
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(invalid_arg("covariance dimension does not match the Hessian"));
    }
    let q = spectral.q();
    let rho = spectral.rho();
    let s = q.transpose() * sigma * q;
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let denom = a * (rho[i] + rho[j]) - 1.0;
            if !(denom > 0.0) {
                return Err(invalid_arg(format!(
                    "a(ρ_i + ρ_j) - 1 = {denom} is not positive for (i, j) = ({i}, {j})"
                )));
            }
            out[(i, j)] = s[(i, j)] / denom;
        }
    }
    // exact symmetry
    Ok((&out + out.transpose()) * 0.5)
}

pub fn psi_star_closed(a: f64, spectral: &SpectralDecomposition, s_star: &DMatrix<f64>, lambda: &[f64]) -> Result<f64> {
    check_dim(spectral.dim(), lambda.len(), "lambda")?;
    let w = spectral.q().transpose() * DVector::from_column_slice(lambda);
    Ok(0.5 * a * a * w.dot(&(s_star * &w)))
}

pub fn rate_closed(a: f64, spectral: &SpectralDecomposition, s_star: &DMatrix<f64>, z: &[f64]) -> Result<f64> {
    check_dim(spectral.dim(), z.len(), "z")?;
    let w = spectral.q().transpose() * DVector::from_column_slice(z);
    let sol = solve_spd(s_star, &w)?;
    Ok(w.dot(&sol) / (2.0 * a * a))
}

/// Gradient of [`rate_closed`]: `(1/a²) Q S*⁻¹ Qᵀ z`.
pub fn rate_closed_gradient(a: f64, spectral: &SpectralDecomposition, s_star: &DMatrix<f64>, z: &[f64]) -> Result<Vec<f64>> {
    let w = spectral.q().transpose() * DVector::from_column_slice(z);
    let sol = solve_spd(s_star, &w)?;
    Ok((spectral.q() * sol / (a * a)).iter().copied().collect())
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let e = jacobi_eigen(m)?;
    let top = e.values.amax();
    if !(e.values.min() > 1e-14 * top.max(f64::MIN_POSITIVE)) {
        return Err(Error::InvalidState("S* is singular; the rate function is not finite".into()));
    }
    let q = &e.vectors;
    let w = q.transpose() * rhs;
    let scaled = DVector::from_iterator(w.len(), w.iter().zip(e.values.iter()).map(|(x, v)| x / v));
    Ok(q * scaled)
}

/// `δ²/(2a² λ_max(S*))` with the minimizing point `δ·Q·v_max` on the sphere.
pub fn ball_rate_closed(a: f64, spectral: &SpectralDecomposition, s_star: &DMatrix<f64>, delta: f64) -> Result<(f64, Vec<f64>)> {
    if !(delta >= 0.0) {
        return Err(invalid_arg("delta must be nonnegative"));
    }
    let e = jacobi_eigen(s_star)?;
    let d = e.values.len();
    let top = e.values[d - 1];
    if !(top > 0.0) {
        return Err(Error::InvalidState("S* has no positive eigenvalue".into()));
    }
    let witness = spectral.q() * e.vectors.column(d - 1) * delta;
    Ok((delta * delta / (2.0 * a * a * top), witness.iter().copied().collect()))
}

/// Ball rate when `Σ` is diagonal in the Hessian eigenbasis:
/// `(δ²/(2a²)) min_i (2aρ_i - 1)/σ²_i`.
pub fn aligned_ball_rate(a: f64, rho: &[f64], sigma_sq: &[f64], delta: f64) -> Result<f64> {
    check_dim(rho.len(), sigma_sq.len(), "per-direction variances")?;
    if rho.is_empty() {
        return Err(invalid_arg("empty spectrum"));
    }
    let mut best = f64::INFINITY;
    for (&r, &s) in rho.iter().zip(sigma_sq) {
        if !(s >= 0.0) {
            return Err(invalid_arg("variances must be nonnegative"));
        }
        best = best.min((2.0 * a * r - 1.0) / s);
    }
    Ok(delta * delta / (2.0 * a * a) * best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateComparison {
    /// `Bδ²` with `C1 = σ²_max`, `C2 = 2σ²_max` and the initial-distance
    /// branch of `B` dropped.
    pub hpb_rate: f64,
    /// `(δ²/(4a²))(2aμ - 1)/σ²_max`, the upper bound on `Bδ²`.
    pub hpb_bound: f64,
    /// Exact ball rate in the axes-aligned Gaussian case.
    pub ldp_rate: f64,
    /// `(δ²/(2a²))(2aμ - 1)/σ²_max`: the ball rate with curvature and noise
    /// decoupled.
    pub decoupled_lower: f64,
}

impl RateComparison {
    /// `ldp_rate ≥ decoupled_lower = 2·hpb_bound ≥ 2·hpb_rate`.
    pub fn ordering_holds(&self) -> bool {
        self.ldp_rate >= self.decoupled_lower && self.decoupled_lower >= 2.0 * self.hpb_bound && self.hpb_bound >= self.hpb_rate
    }
}

pub fn rate_comparison(a: f64, rho: &[f64], sigma_sq: &[f64], delta: f64) -> Result<RateComparison> {
    let ldp_rate = aligned_ball_rate(a, rho, sigma_sq, delta)?;
    let mu = rho.iter().copied().fold(f64::INFINITY, f64::min);
    let lip = rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sigma_max = sigma_sq.iter().copied().fold(0.0, f64::max);
    let spread = 2.0 * a * mu - 1.0;
    let decoupled_lower = delta * delta / (2.0 * a * a) * (spread / sigma_max);
    let hpb_bound = delta * delta / (4.0 * a * a) * (spread / sigma_max);
    let hpb = super::hpb_exponent_from(super::HpbInputs {
        a,
        mu,
        lip,
        c1: sigma_max,
        c2: 2.0 * sigma_max,
        initial_distance: None,
    })?;
    Ok(RateComparison {
        hpb_rate: hpb.b * delta * delta,
        hpb_bound,
        ldp_rate,
        decoupled_lower,
    })
}

/// `k0 = 4a²L²/(2aμ - 1)`.
pub fn k0(a: f64, mu: f64, lip: f64) -> Result<f64> {
    hpb_offset(a, mu, lip)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_spec(rho: &[f64]) -> SpectralDecomposition {
        SpectralDecomposition::diagonal(rho)
    }

    #[test]
    fn s_star_examples() {
        let sp = diag_spec(&[2.0, 3.0]);
        let s = s_star(1.0, &sp, &DMatrix::identity(2, 2)).unwrap();
        assert!((s[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((s[(1, 1)] - 0.2).abs() < 1e-15);
        assert_eq!(s[(0, 1)], 0.0);
        let z = s_star(1.0, &sp, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(z, DMatrix::zeros(2, 2));
        let s1 = s_star(2.0, &diag_spec(&[1.0]), &DMatrix::identity(1, 1)).unwrap();
        assert!((s1[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_examples() {
        let sp1 = diag_spec(&[1.0]);
        let s1 = s_star(2.0, &sp1, &DMatrix::identity(1, 1)).unwrap();
        assert_eq!(psi_star_closed(2.0, &sp1, &s1, &[0.0]).unwrap(), 0.0);
        assert!((psi_star_closed(2.0, &sp1, &s1, &[1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((rate_closed(2.0, &sp1, &s1, &[1.0]).unwrap() - 0.375).abs() < 1e-15);
        assert_eq!(rate_closed(2.0, &sp1, &s1, &[0.0]).unwrap(), 0.0);

        let sp = diag_spec(&[2.0, 3.0]);
        let s = s_star(1.0, &sp, &DMatrix::identity(2, 2)).unwrap();
        assert!((psi_star_closed(1.0, &sp, &s, &[1.0, 1.0]).unwrap() - 4.0 / 15.0).abs() < 1e-15);
        assert!((rate_closed(1.0, &sp, &s, &[1.0, 0.0]).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn singular_s_star_is_invalid_state() {
        let sp = diag_spec(&[2.0, 3.0]);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let s = s_star(1.0, &sp, &sigma).unwrap();
        assert!(matches!(rate_closed(1.0, &sp, &s, &[1.0, 1.0]), Err(Error::InvalidState(_))));
    }

    #[test]
    fn ball_rate_examples() {
        let sp = diag_spec(&[2.0, 3.0]);
        let s = s_star(1.0, &sp, &DMatrix::identity(2, 2)).unwrap();
        let (r, w) = ball_rate_closed(1.0, &sp, &s, 1.0).unwrap();
        assert!((r - 1.5).abs() < 1e-14);
        assert!((crate::linalg::norm(&w) - 1.0).abs() < 1e-14);
        assert!((rate_closed(1.0, &sp, &s, &w).unwrap() - r).abs() < 1e-14);

        let sp1 = diag_spec(&[1.0]);
        let s1 = s_star(2.0, &sp1, &DMatrix::identity(1, 1)).unwrap();
        let (r, _) = ball_rate_closed(2.0, &sp1, &s1, 0.5).unwrap();
        assert!((r - 0.09375).abs() < 1e-15);
        assert_eq!(ball_rate_closed(2.0, &sp1, &s1, 0.0).unwrap().0, 0.0);
    }

    #[test]
    fn aligned_examples() {
        assert!((aligned_ball_rate(1.0, &[3.0, 1.0], &[1.0, 4.0], 1.0).unwrap() - 0.125).abs() < 1e-15);
        assert_eq!(aligned_ball_rate(1.0, &[3.0, 1.0], &[1.0, 4.0], 0.0).unwrap(), 0.0);
        // isotropic reduces to (δ²/(2a²))(2aμ - 1)/σ²
        let (a, mu, s2, d) = (1.7, 1.2, 0.3, 0.4);
        let got = aligned_ball_rate(a, &[mu, mu, mu], &[s2, s2, s2], d).unwrap();
        assert!((got - d * d / (2.0 * a * a) * (2.0 * a * mu - 1.0) / s2).abs() < 1e-15);
    }

    #[test]
    fn comparison_examples() {
        let c = rate_comparison(1.0, &[3.0, 1.0], &[1.0, 4.0], 1.0).unwrap();
        assert!((c.ldp_rate - 0.125).abs() < 1e-15);
        assert!((c.decoupled_lower - 0.125).abs() < 1e-15);
        assert!(c.ordering_holds());
        let c = rate_comparison(1.0, &[3.0, 1.0], &[4.0, 1.0], 1.0).unwrap();
        assert!((c.ldp_rate - 0.5).abs() < 1e-15);
        assert!((c.decoupled_lower - 0.125).abs() < 1e-15);
        assert!(c.ordering_holds());
        // isotropic with a flat spectrum: exact equality
        let c = rate_comparison(2.0, &[1.5, 1.5], &[0.2, 0.2], 0.3).unwrap();
        assert_eq!(c.ldp_rate, c.decoupled_lower);
    }
}
