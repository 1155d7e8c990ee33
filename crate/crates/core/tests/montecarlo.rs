use ldp_sgd::model::QuadraticObjective;
use ldp_sgd::montecarlo::{
    clopper_pearson, estimate_tail_curve, fit_empirical_rate, FitWindow, TailEstimate, TailPoint, TailQuery, TailSet,
    DEFAULT_LEVEL,
};
use ldp_sgd::noise::{LaplaceNoise, RademacherNoise};
use ldp_sgd::sgd::StepSchedule;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn problem() -> QuadraticObjective {
    let a = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 1.0]);
    QuadraticObjective::new(a, DVector::from_vec(vec![0.3, -0.1])).unwrap()
}

fn tail(delta: f64, seed: u64, workers: usize) -> TailEstimate {
    let obj = problem();
    let noise = LaplaceNoise::new(2, 0.3).unwrap();
    let q = TailQuery {
        set: TailSet::Ball { delta },
        ks: vec![1, 5, 20, 60],
        replications: 6000,
        seed,
    };
    estimate_tail_curve(&obj, &noise, StepSchedule::new(2.0, 1.0).unwrap(), &[1.0, -1.0], &q, workers).unwrap()
}

#[test]
fn larger_radius_never_has_more_hits() {
    // same seed, same trajectories: the sets are nested
    let small = tail(0.1, 3, 2);
    let large = tail(0.3, 3, 2);
    for (s, l) in small.points.iter().zip(&large.points) {
        assert!(l.hits <= s.hits, "{l:?} vs {s:?}");
    }
}

#[test]
fn intervals_bracket_estimates() {
    for p in tail(0.2, 9, 3).points {
        assert!(p.ci_lo <= p.p_hat && p.p_hat <= p.ci_hi, "{p:?}");
        assert!(p.ci_lo >= 0.0 && p.ci_hi <= 1.0);
    }
}

#[test]
fn worker_count_does_not_change_counts() {
    let a = tail(0.2, 11, 1);
    let b = tail(0.2, 11, 5);
    assert_eq!(a, b);
}

#[test]
fn bounded_noise_starting_at_minimizer_stays_in_a_small_ball() {
    // |X_k - x*| ≤ Σ α_l m stays below 2m for the first step with a = 1, b = 1
    let obj = QuadraticObjective::new(DMatrix::from_element(1, 1, 2.0), DVector::zeros(1)).unwrap();
    let noise = RademacherNoise::new(1, 0.1).unwrap();
    let q = TailQuery {
        set: TailSet::Ball { delta: 0.051 },
        ks: vec![2],
        replications: 2000,
        seed: 1,
    };
    let est = estimate_tail_curve(&obj, &noise, StepSchedule::new(1.0, 1.0).unwrap(), &[0.0], &q, 2).unwrap();
    assert_eq!(est.points[0].hits, 0);
}

#[test]
fn fit_recovers_geometric_decay() {
    let rate = 0.05;
    let n = 1_000_000u64;
    let points: Vec<TailPoint> = (1..=20)
        .map(|i| {
            let k = 10 * i;
            let p = 0.2 * (-rate * k as f64).exp();
            let hits = (p * n as f64).round() as u64;
            let (ci_lo, ci_hi) = clopper_pearson(hits, n, DEFAULT_LEVEL);
            TailPoint {
                k,
                n,
                hits,
                p_hat: hits as f64 / n as f64,
                ci_lo,
                ci_hi,
            }
        })
        .collect();
    let est = TailEstimate {
        points,
        level: DEFAULT_LEVEL,
        diverged: 0,
        joint_hits: Vec::new(),
    };
    let fit = fit_empirical_rate(&est, &FitWindow::default()).unwrap();
    assert!((fit.rate - rate).abs() < 1e-3, "{fit:?}");
}

proptest! {
    #[test]
    fn clopper_pearson_is_ordered_and_shrinks_with_n(hits in 0u64..50, extra in 0u64..500) {
        let n = hits + extra + 1;
        let (lo, hi) = clopper_pearson(hits, n, DEFAULT_LEVEL);
        let p = hits as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        let (lo4, hi4) = clopper_pearson(4 * hits, 4 * n, DEFAULT_LEVEL);
        prop_assert!(hi4 - lo4 < hi - lo);
    }
}
