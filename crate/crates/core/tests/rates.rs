use ldp_sgd::linalg::random_orthogonal;
use ldp_sgd::model::{LogCoshObjective, QuadraticObjective};
use ldp_sgd::noise::{GaussianNoise, LaplaceNoise, NoiseModel, RademacherNoise};
use ldp_sgd::rates::{RateEngine, RateSource};
use ldp_sgd::rng::Stream;
use ldp_sgd::sgd::StepSchedule;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use std::sync::Arc;

fn quadratic(rho: &[f64], seed: u64) -> Arc<QuadraticObjective> {
    let d = rho.len();
    let mut rng = Stream::new(seed, 0);
    let q = random_orthogonal(d, &mut rng);
    let h = &q * DMatrix::from_diagonal(&DVector::from_column_slice(rho)) * q.transpose();
    let h = (&h + h.transpose()) * 0.5;
    Arc::new(QuadraticObjective::new(h, DVector::zeros(d)).unwrap())
}

fn engine(noise: Arc<dyn NoiseModel>, rho: &[f64], a: f64) -> RateEngine {
    RateEngine::new(quadratic(rho, 5), noise, StepSchedule::new(a, 1.0).unwrap()).unwrap()
}

#[test]
fn numerical_ball_rate_matches_eigenvalue_formula() {
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let e = engine(Arc::new(GaussianNoise::new(sigma).unwrap()), &[1.0, 1.7], 2.0);
    let closed = e.ball_rate(RateSource::GaussianClosed, 0.4).unwrap();
    let search = e.ball_rate(RateSource::PsiStar, 0.4).unwrap();
    assert!((search.value - closed.value).abs() <= 1e-6 * closed.value, "{search:?} vs {closed:?}");
    assert!((ldp_sgd::linalg::norm(&search.witness) - 0.4).abs() < 1e-12);
}

#[test]
fn gaussian_ball_rate_scales_with_delta_squared() {
    let e = engine(Arc::new(GaussianNoise::isotropic(3, 0.3).unwrap()), &[1.0, 1.2, 2.0], 1.5);
    let r1 = e.ball_rate(RateSource::GaussianClosed, 0.1).unwrap().value;
    let r2 = e.ball_rate(RateSource::GaussianClosed, 0.3).unwrap().value;
    assert!((r2 / r1 - 9.0).abs() < 1e-12);
}

#[test]
fn laplace_rate_below_gaussian_far_out_and_close_near_zero() {
    // matched variance: the Laplace LMGF dominates the Gaussian one, so its
    // rate is smaller, and the two agree to second order at the origin
    let var = 0.04;
    let g = engine(Arc::new(GaussianNoise::isotropic(2, var).unwrap()), &[1.0, 1.5], 2.0);
    let l = engine(Arc::new(LaplaceNoise::with_variance(2, var).unwrap()), &[1.0, 1.5], 2.0);
    let far = [0.3, -0.2];
    let (ig, il) = (g.rate(RateSource::PsiStar, &far).unwrap().value, l.rate(RateSource::PsiStar, &far).unwrap().value);
    assert!(il < ig, "{il} vs {ig}");
    let near = [0.003, -0.002];
    let (ig, il) = (g.rate(RateSource::PsiStar, &near).unwrap().value, l.rate(RateSource::PsiStar, &near).unwrap().value);
    assert!((il / ig - 1.0).abs() < 0.01, "{il} vs {ig}");
}

#[test]
fn rademacher_psi_star_below_gaussian_proxy() {
    // |Z_i| ≤ m is sub-Gaussian with proxy variance m²
    let rho = [1.0, 2.0];
    let r = engine(Arc::new(RademacherNoise::new(2, 0.5).unwrap()), &rho, 2.0);
    let g = engine(Arc::new(GaussianNoise::isotropic(2, 0.25).unwrap()), &rho, 2.0);
    for l in [[0.5, 0.1], [2.0, -3.0], [10.0, 4.0]] {
        assert!(r.psi_star(&l).unwrap() <= g.psi_star(&l).unwrap() * (1.0 + 1e-10));
    }
}

#[test]
fn remainder_needs_hpb_then_vanishes_at_zero() {
    let obj = LogCoshObjective::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.5])), 0.3).unwrap();
    let e = RateEngine::new(
        Arc::new(obj),
        Arc::new(GaussianNoise::isotropic(2, 1.0).unwrap()),
        StepSchedule::new(2.0, 1.0).unwrap(),
    )
    .unwrap();
    assert!(e.remainder(&[0.1, 0.1]).is_err());
    let e = e.with_initial_point(&[1.0, 0.0], true).unwrap();
    assert_eq!(e.remainder(&[0.0, 0.0]).unwrap(), 0.0);
    assert!(e.remainder(&[0.1, 0.1]).unwrap() > 0.0);
    // I_bar ≤ I_star since Ψ̄ ≥ Ψ*
    let z = [0.2, -0.1];
    let ib = e.rate(RateSource::PsiBar, &z).unwrap().value;
    let is = e.rate(RateSource::PsiStar, &z).unwrap().value;
    assert!(ib <= is + 1e-12, "{ib} vs {is}");
}

#[test]
fn exact_lmgf_tends_to_limit() {
    let e = engine(Arc::new(GaussianNoise::isotropic(2, 1.0).unwrap()), &[1.0, 1.4], 2.0);
    let lambda = [0.7, -0.4];
    let psi = e.psi_star(&lambda).unwrap();
    let gap = |k: usize| {
        let kf = k as f64;
        let scaled: Vec<f64> = lambda.iter().map(|v| v * kf).collect();
        (e.quadratic_exact_lmgf(&[1.0, 1.0], k, &scaled).unwrap() / kf - psi).abs()
    };
    let (g1, g2) = (gap(200), gap(2000));
    assert!(g2 < g1 && g2 < 0.01 * psi, "{g1} {g2} {psi}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rate_is_nonnegative_and_convex(
        z1 in prop::collection::vec(-1.0f64..1.0, 2),
        z2 in prop::collection::vec(-1.0f64..1.0, 2),
        t in 0.0f64..1.0,
    ) {
        let e = engine(Arc::new(LaplaceNoise::new(2, 0.3).unwrap()), &[1.0, 1.6], 2.0);
        let i = |z: &[f64]| e.rate(RateSource::PsiStar, z).unwrap().value;
        let mid: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let (a, b, m) = (i(&z1), i(&z2), i(&mid));
        prop_assert!(a >= 0.0 && b >= 0.0);
        prop_assert!(m <= t * a + (1.0 - t) * b + 1e-8 * (1.0 + a + b));
    }

    #[test]
    fn psi_star_closed_form_for_gaussian(l in prop::collection::vec(-5.0f64..5.0, 3)) {
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 0.8, 0.1, 0.0, 0.1, 0.6]);
        let e = engine(Arc::new(GaussianNoise::new(sigma.clone()).unwrap()), &[1.0, 1.3, 2.5], 1.5);
        let quad = e.psi_star(&l).unwrap();
        let closed = e.gaussian_psi_star_closed(&sigma, &l).unwrap();
        prop_assert!((quad - closed).abs() <= 1e-8 * closed.abs().max(1e-300));
    }
}
