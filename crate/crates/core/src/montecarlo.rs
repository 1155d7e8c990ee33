//! Monte Carlo tail probabilities `P(X_k ∈ F)` with exact binomial
//! confidence intervals, log-linear rate fits and comparison with the
//! analytic rates.
//!
//! Replication `r` draws from `Stream::new(seed, r)`. Replications are
//! grouped in fixed-size chunks and reduced with integer sums, so the output
//! does not depend on the number of worker threads.

use crate::error::{check_dim, invalid_arg, Error, Result};
use crate::linalg;
use crate::model::Objective;
use crate::noise::NoiseModel;
use crate::rates::fenchel::SphereOptions;
use crate::rates::{HpbParams, RateEngine, RateSource};
use crate::rng::Stream;
use crate::sgd::{diverged, fmt_float, StepSchedule, Stepper};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use std::io::Write;

const CHUNK: usize = 4096;
pub const DEFAULT_LEVEL: f64 = 0.99;

/// Rare-event set `F`, described relative to `x*`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TailSet {
    /// `‖x - x*‖₂ ≥ δ`
    Ball { delta: f64 },
    /// `‖x - x*‖_p ≥ δ`; `p = inf` is the max norm.
    Lp { p: f64, delta: f64 },
    /// `vᵀ(x - x*) ≥ c`
    HalfSpace { v: Vec<f64>, c: f64 },
}

impl TailSet {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            TailSet::Ball { delta } if !(*delta > 0.0) => Err(invalid_arg("delta must be positive")),
            TailSet::Lp { p, delta } => {
                if !(*delta > 0.0) {
                    Err(invalid_arg("delta must be positive"))
                } else if !(*p >= 1.0) {
                    Err(invalid_arg("p must be at least 1"))
                } else {
                    Ok(())
                }
            }
            TailSet::HalfSpace { v, c } => {
                check_dim(dim, v.len(), "half-space normal")?;
                if !(*c > 0.0) {
                    return Err(invalid_arg("half-space offset must be positive so that x* is outside the set"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Whether `x* + diff` lies in the set.
    #[inline]
    pub fn contains(&self, diff: &[f64]) -> bool {
        match self {
            TailSet::Ball { delta } => linalg::dot(diff, diff) >= delta * delta,
            TailSet::Lp { p, delta } => {
                if p.is_infinite() {
                    diff.iter().any(|v| v.abs() >= *delta)
                } else {
                    diff.iter().map(|v| v.abs().powf(*p)).sum::<f64>() >= delta.powf(*p)
                }
            }
            TailSet::HalfSpace { v, c } => linalg::dot(v, diff) >= *c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailQuery {
    pub set: TailSet,
    /// Strictly increasing iteration indices, starting at 1 or later.
    pub ks: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailPoint {
    pub k: usize,
    pub n: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate {
    pub points: Vec<TailPoint>,
    pub level: f64,
    /// Replications that left the finite range; they count as hits from the
    /// step where they diverged onwards.
    pub diverged: u64,
    /// `joint[i * m + j]`: replications in `F` at both `ks[i]` and `ks[j]`.
    /// Empty when the estimate was not produced by simulation.
    pub joint_hits: Vec<u64>,
}

impl TailEstimate {
    /// Rows `k,p_hat,ci_lo,ci_hi,n,hits`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,p_hat,ci_lo,ci_hi,n,hits")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.k,
                fmt_float(p.p_hat),
                fmt_float(p.ci_lo),
                fmt_float(p.ci_hi),
                p.n,
                p.hits
            )?;
        }
        Ok(())
    }

    pub fn point(&self, k: usize) -> Option<&TailPoint> {
        self.points.iter().find(|p| p.k == k)
    }
}

/// Exact (Clopper–Pearson) two-sided interval for a binomial proportion.
pub fn clopper_pearson(hits: u64, n: u64, level: f64) -> (f64, f64) {
    assert!(n > 0 && hits <= n);
    let tail = 0.5 * (1.0 - level);
    let (x, n_f) = (hits as f64, n as f64);
    let lo = if hits == 0 {
        0.0
    } else if hits == n {
        tail.powf(1.0 / n_f)
    } else {
        invert_increasing(|p| beta_reg(x, n_f - x + 1.0, p), tail)
    };
    let hi = if hits == n {
        1.0
    } else if hits == 0 {
        1.0 - tail.powf(1.0 / n_f)
    } else {
        invert_increasing(|p| beta_reg(x + 1.0, n_f - x, p), 1.0 - tail)
    };
    (lo, hi)
}

/// Solve `f(p) = target` for increasing `f` on (0, 1), bisecting in `ln p`.
fn invert_increasing<F: Fn(f64) -> f64>(f: F, target: f64) -> f64 {
    let (mut lo, mut hi) = (-745.0f64, 0.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

struct Counts {
    hits: Vec<u64>,
    joint: Vec<u64>,
    diverged: u64,
}

impl Counts {
    fn new(m: usize) -> Self {
        Self {
            hits: vec![0; m],
            joint: vec![0; m * m],
            diverged: 0,
        }
    }

    fn add(&mut self, other: &Counts) {
        self.hits.iter_mut().zip(&other.hits).for_each(|(a, b)| *a += b);
        self.joint.iter_mut().zip(&other.joint).for_each(|(a, b)| *a += b);
        self.diverged += other.diverged;
    }
}

fn check_problem(obj: &dyn Objective, noise: &dyn NoiseModel, x1: &[f64]) -> Result<()> {
    check_dim(obj.dim(), noise.dim(), "noise model")?;
    check_dim(obj.dim(), x1.len(), "x1")?;
    if x1.iter().any(|v| !v.is_finite()) {
        return Err(invalid_arg("x1 must be finite"));
    }
    Ok(())
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidState(format!("cannot start worker pool: {e}")))
}

/// Default worker count: the machine's available parallelism.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn estimate_tail_curve(
    obj: &dyn Objective,
    noise: &dyn NoiseModel,
    schedule: StepSchedule,
    x1: &[f64],
    query: &TailQuery,
    workers: usize,
) -> Result<TailEstimate> {
    check_problem(obj, noise, x1)?;
    query.set.validate(obj.dim())?;
    if query.replications == 0 {
        return Err(invalid_arg("at least one replication is needed"));
    }
    if query.ks.is_empty() || query.ks[0] == 0 || query.ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid_arg("iteration indices must be strictly increasing and start at 1 or later"));
    }
    let m = query.ks.len();
    let n = query.replications;
    let chunks = n.div_ceil(CHUNK);
    let pool = build_pool(workers)?;
    let partial: Vec<Counts> = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut counts = Counts::new(m);
                let mut stepper = Stepper::new(obj, noise, schedule).expect("dimensions checked");
                let mut x = x1.to_vec();
                let mut diff = vec![0.0; x1.len()];
                let mut hit_idx = Vec::with_capacity(m);
                for r in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    replicate(obj, &mut stepper, &query.set, &query.ks, x1, &mut x, &mut diff, r as u64, query.seed, &mut hit_idx, &mut counts);
                }
                counts
            })
            .collect()
    });
    let mut total = Counts::new(m);
    for p in &partial {
        total.add(p);
    }
    let n64 = n as u64;
    let points = query
        .ks
        .iter()
        .zip(&total.hits)
        .map(|(&k, &hits)| {
            let (ci_lo, ci_hi) = clopper_pearson(hits, n64, DEFAULT_LEVEL);
            TailPoint {
                k,
                n: n64,
                hits,
                p_hat: hits as f64 / n as f64,
                ci_lo,
                ci_hi,
            }
        })
        .collect();
    Ok(TailEstimate {
        points,
        level: DEFAULT_LEVEL,
        diverged: total.diverged,
        joint_hits: total.joint,
    })
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn replicate(
    obj: &dyn Objective,
    stepper: &mut Stepper,
    set: &TailSet,
    ks: &[usize],
    x1: &[f64],
    x: &mut [f64],
    diff: &mut [f64],
    rep: u64,
    seed: u64,
    hit_idx: &mut Vec<usize>,
    counts: &mut Counts,
) {
    let m = ks.len();
    let xs = obj.minimizer();
    let mut rng = Stream::new(seed, rep);
    x.copy_from_slice(x1);
    hit_idx.clear();
    let mut next = 0;
    let last = ks[m - 1];
    let mut k = 1;
    loop {
        if k == ks[next] {
            diff.iter_mut().zip(x.iter().zip(xs)).for_each(|(d, (a, b))| *d = a - b);
            if set.contains(diff) {
                hit_idx.push(next);
            }
            next += 1;
            if next == m {
                break;
            }
        }
        stepper.step(k, x, &mut rng);
        k += 1;
        if diverged(x) {
            counts.diverged += 1;
            hit_idx.extend(next..m);
            break;
        }
        debug_assert!(k <= last);
    }
    for (a, &i) in hit_idx.iter().enumerate() {
        counts.hits[i] += 1;
        for &j in &hit_idx[a..] {
            counts.joint[i * m + j] += 1;
        }
    }
}

/// `‖X_k - x*‖` for replications `0..n`, in replication order.
#[allow(clippy::too_many_arguments)]
pub fn iterate_distances(
    obj: &dyn Objective,
    noise: &dyn NoiseModel,
    schedule: StepSchedule,
    x1: &[f64],
    k: usize,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<f64>> {
    check_problem(obj, noise, x1)?;
    if k == 0 {
        return Err(invalid_arg("k must be at least 1"));
    }
    let pool = build_pool(workers)?;
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut stepper = Stepper::new(obj, noise, schedule).expect("dimensions checked");
                let mut out = Vec::with_capacity(CHUNK);
                let mut x = x1.to_vec();
                for r in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let mut rng = Stream::new(seed, r as u64);
                    x.copy_from_slice(x1);
                    let mut dist = f64::INFINITY;
                    let mut ok = true;
                    for j in 1..k {
                        stepper.step(j, &mut x, &mut rng);
                        if diverged(&x) {
                            ok = false;
                            break;
                        }
                    }
                    if ok {
                        dist = linalg::distance(&x, obj.minimizer());
                    }
                    out.push(dist);
                }
                out
            })
            .collect()
    });
    Ok(parts.concat())
}

/// Which points enter a rate fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub p_min: f64,
    pub p_max: f64,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self {
            p_min: 1e-4,
            p_max: 1e-1,
            k_min: None,
            k_max: None,
        }
    }
}

impl FitWindow {
    fn admits(&self, p: &TailPoint) -> bool {
        p.hits > 0
            && p.p_hat < 1.0
            && p.p_hat >= self.p_min
            && p.p_hat <= self.p_max
            && self.k_min.is_none_or(|lo| p.k >= lo)
            && self.k_max.is_none_or(|hi| p.k <= hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// `-d(log p̂)/dk`.
    pub rate: f64,
    pub intercept: f64,
    pub k_lo: usize,
    pub k_hi: usize,
    pub residual_rms: f64,
    /// Standard error of `rate`, accounting for the correlation between
    /// points that share trajectories.
    pub rate_se: f64,
    pub points: usize,
}

/// Weighted least squares `y ≈ intercept + slope·x`. Returns
/// `(slope, intercept, unweighted residual RMS, slope coefficients c_i)`
/// where `slope = Σ c_i y_i`.
pub fn fit_log_linear(x: &[f64], y: &[f64], w: &[f64]) -> Result<(f64, f64, f64, Vec<f64>)> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(invalid_arg("fit inputs differ in length"));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points, need at least 3", x.len())));
    }
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * (x - xm) * (x - xm)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("fit points share one abscissa".into()));
    }
    let c: Vec<f64> = x.iter().zip(w).map(|(x, w)| w * (x - xm) / sxx).collect();
    let slope: f64 = c.iter().zip(y).map(|(c, y)| c * (y - ym)).sum();
    let intercept = ym - slope * xm;
    let rss: f64 = x.iter().zip(y).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok((slope, intercept, (rss / x.len() as f64).sqrt(), c))
}

/// Log-linear fit of `p̂_k` inside the window, weighted by the inverse
/// delta-method variance `N p̂/(1 - p̂)` of `log p̂_k`.
pub fn fit_empirical_rate(est: &TailEstimate, window: &FitWindow) -> Result<RateFit> {
    let m = est.points.len();
    let used: Vec<usize> = (0..m).filter(|&i| window.admits(&est.points[i])).collect();
    if used.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} points inside the fit window [{:e}, {:e}], need at least 3",
            used.len(),
            window.p_min,
            window.p_max
        )));
    }
    let pts: Vec<&TailPoint> = used.iter().map(|&i| &est.points[i]).collect();
    let x: Vec<f64> = pts.iter().map(|p| p.k as f64).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.p_hat.ln()).collect();
    let w: Vec<f64> = pts.iter().map(|p| p.n as f64 * p.p_hat / (1.0 - p.p_hat)).collect();
    let (slope, intercept, rms, c) = fit_log_linear(&x, &y, &w)?;

    // Var(slope) = Σ c_i c_j Cov(log p̂_i, log p̂_j)
    let have_joint = est.joint_hits.len() == m * m;
    let mut var = 0.0;
    for (a, &i) in used.iter().enumerate() {
        for (b, &j) in used.iter().enumerate() {
            let (pi, pj) = (&est.points[i], &est.points[j]);
            let n = pi.n as f64;
            let cov = if i == j {
                pi.p_hat * (1.0 - pi.p_hat) / n
            } else if have_joint {
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                let pij = est.joint_hits[lo * m + hi] as f64 / n;
                (pij - pi.p_hat * pj.p_hat) / n
            } else {
                0.0
            };
            var += c[a] * c[b] * cov / (pi.p_hat * pj.p_hat);
        }
    }
    Ok(RateFit {
        rate: -slope,
        intercept,
        k_lo: pts[0].k,
        k_hi: pts[pts.len() - 1].k,
        residual_rms: rms,
        rate_se: var.max(0.0).sqrt(),
        points: used.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub k_lo: usize,
    pub k_hi: usize,
    pub empirical_rate: f64,
    pub rate_se: f64,
    /// Ball rate `inf_{‖z‖≥δ} I(z)`: exact for quadratics with
    /// iterate-independent noise, an upper-bound rate otherwise.
    pub theory_rate: f64,
    pub theory_exact: bool,
    /// `Bδ²`, when the noise has the constants it needs.
    pub hpb_rate: Option<f64>,
}

impl ComparisonReport {
    /// `(empirical - theory)/theory`.
    pub fn relative_gap(&self) -> f64 {
        (self.empirical_rate - self.theory_rate) / self.theory_rate
    }

    /// Both the analytic and the empirical rate dominate `Bδ²`.
    pub fn ordering_holds(&self) -> bool {
        self.hpb_rate
            .is_none_or(|h| self.theory_rate >= h && self.empirical_rate >= h)
    }

    /// Row `k-window,empirical_rate,rate_se,theory_rate,hpb_rate`.
    pub fn csv_row(&self) -> String {
        format!(
            "{}-{},{},{},{},{}",
            self.k_lo,
            self.k_hi,
            fmt_float(self.empirical_rate),
            fmt_float(self.rate_se),
            fmt_float(self.theory_rate),
            self.hpb_rate.map_or(String::new(), fmt_float)
        )
    }
}

pub const COMPARISON_HEADER: &str = "k-window,empirical_rate,rate_se,theory_rate,hpb_rate";

/// Pair a fitted rate with the analytic ball rate and `Bδ²`. `hpb` defaults
/// to the engine's own exponent.
pub fn compare_with_theory(fit: &RateFit, engine: &RateEngine, set: &TailSet, hpb: Option<HpbParams>) -> Result<ComparisonReport> {
    compare_with_theory_with(fit, engine, set, hpb, SphereOptions::default())
}

/// As [`compare_with_theory`], with the sphere search of numerical ball
/// rates tuned by `sphere`.
pub fn compare_with_theory_with(
    fit: &RateFit,
    engine: &RateEngine,
    set: &TailSet,
    hpb: Option<HpbParams>,
    sphere: SphereOptions,
) -> Result<ComparisonReport> {
    let TailSet::Ball { delta } = *set else {
        return Err(invalid_arg("theory comparison is defined for Euclidean ball complements"));
    };
    set.validate(engine.dim())?;
    let exact = engine.is_exact();
    let source = if exact {
        if engine.noise().gaussian_covariance().is_some() {
            RateSource::GaussianClosed
        } else {
            RateSource::PsiStar
        }
    } else {
        RateSource::PsiBar
    };
    let theory = engine.ball_rate_with(source, delta, sphere)?;
    let hpb = hpb.or(engine.hpb());
    Ok(ComparisonReport {
        k_lo: fit.k_lo,
        k_hi: fit.k_hi,
        empirical_rate: fit.rate,
        rate_se: fit.rate_se,
        theory_rate: theory.value,
        theory_exact: exact,
        hpb_rate: hpb.map(|h| h.rate(delta)),
    })
}

/// Mean and variance of `X_k - x*` for the scalar quadratic `f = μx²/2` with
/// Gaussian noise of variance `σ²`, started at offset `x1 - x*`.
pub fn scalar_gaussian_law(mu: f64, sigma_sq: f64, schedule: StepSchedule, offset: f64, k: usize) -> (f64, f64) {
    let (mut mean, mut var) = (offset, 0.0);
    for j in 1..k {
        let alpha = schedule.alpha(j);
        let c = 1.0 - alpha * mu;
        mean *= c;
        var = c * c * var + alpha * alpha * sigma_sq;
    }
    (mean, var)
}

/// `P(|Y| ≥ δ)` for `Y ~ N(mean, var)`.
pub fn gaussian_ball_tail(mean: f64, var: f64, delta: f64) -> f64 {
    if var == 0.0 {
        return if mean.abs() >= delta { 1.0 } else { 0.0 };
    }
    let s = (2.0 * var).sqrt();
    0.5 * (erfc((delta - mean) / s) + erfc((delta + mean) / s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QuadraticObjective;
    use crate::noise::{GaussianNoise, RademacherNoise, ZeroNoise};
    use nalgebra::{DMatrix, DVector};

    fn scalar_obj() -> QuadraticObjective {
        QuadraticObjective::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1)).unwrap()
    }

    #[test]
    fn clopper_pearson_edges() {
        let (lo, hi) = clopper_pearson(0, 10, 0.99);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.005f64.powf(0.1))).abs() < 1e-15);
        let (lo, hi) = clopper_pearson(10, 10, 0.99);
        assert_eq!(hi, 1.0);
        assert!((lo - 0.005f64.powf(0.1)).abs() < 1e-15);
        let (lo, hi) = clopper_pearson(5, 10, 0.99);
        assert!(lo < 0.5 && hi > 0.5);
        // symmetry
        let (lo2, hi2) = clopper_pearson(5, 10, 0.99);
        assert!((lo2 - (1.0 - hi)).abs() < 1e-12 && (hi2 - (1.0 - lo)).abs() < 1e-12);
        // reference value: x=1, n=1e6 upper limit ≈ 7.43e-6
        let (_, hi) = clopper_pearson(1, 1_000_000, 0.99);
        assert!((hi - 7.4301e-6).abs() < 1e-9, "{hi}");
    }

    #[test]
    fn clopper_pearson_coverage() {
        let mut rng = Stream::new(99, 0);
        let (n, p) = (200u64, 0.07);
        let covered = (0..1000)
            .filter(|_| {
                let hits = (0..n).filter(|_| rng.uniform() < p).count() as u64;
                let (lo, hi) = clopper_pearson(hits, n, 0.99);
                lo <= p && p <= hi
            })
            .count();
        assert!(covered >= 980, "{covered}");
    }

    #[test]
    fn zero_noise_from_minimizer_never_hits() {
        let obj = scalar_obj();
        let q = TailQuery {
            set: TailSet::Ball { delta: 1e-9 },
            ks: vec![1, 5, 50],
            replications: 100,
            seed: 1,
        };
        let est = estimate_tail_curve(&obj, &ZeroNoise::new(1), StepSchedule::new(2.0, 1.0).unwrap(), &[0.0], &q, 2).unwrap();
        assert!(est.points.iter().all(|p| p.hits == 0 && p.p_hat == 0.0));
    }

    #[test]
    fn bounded_noise_cannot_reach_far() {
        let obj = scalar_obj();
        let q = TailQuery {
            set: TailSet::Ball { delta: 1.0 },
            ks: vec![100, 200],
            replications: 1000,
            seed: 1,
        };
        let noise = RademacherNoise::new(1, 1e-3).unwrap();
        let est = estimate_tail_curve(&obj, &noise, StepSchedule::new(2.0, 1.0).unwrap(), &[0.0], &q, 1).unwrap();
        assert!(est.points.iter().all(|p| p.hits == 0));
    }

    #[test]
    fn deterministic_across_workers() {
        let obj = scalar_obj();
        let noise = GaussianNoise::isotropic(1, 1.0).unwrap();
        let q = TailQuery {
            set: TailSet::Ball { delta: 0.3 },
            ks: vec![5, 10, 20],
            replications: 3 * CHUNK + 17,
            seed: 42,
        };
        let s = StepSchedule::new(2.0, 1.0).unwrap();
        let a = estimate_tail_curve(&obj, &noise, s, &[1.0], &q, 1).unwrap();
        let b = estimate_tail_curve(&obj, &noise, s, &[1.0], &q, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.points.iter().all(|p| p.ci_lo <= p.p_hat && p.p_hat <= p.ci_hi));
    }

    #[test]
    fn matches_gaussian_law() {
        let obj = scalar_obj();
        let noise = GaussianNoise::isotropic(1, 1.0).unwrap();
        let s = StepSchedule::new(2.0, 1.0).unwrap();
        let q = TailQuery {
            set: TailSet::Ball { delta: 0.5 },
            ks: vec![2, 5, 10, 20, 40],
            replications: 100_000,
            seed: 7,
        };
        let est = estimate_tail_curve(&obj, &noise, s, &[1.0], &q, 1).unwrap();
        for p in &est.points {
            let (m, v) = scalar_gaussian_law(1.0, 1.0, s, 1.0, p.k);
            let exact = gaussian_ball_tail(m, v, 0.5);
            assert!(p.ci_lo <= exact && exact <= p.ci_hi, "k={} exact={exact} {p:?}", p.k);
        }
    }

    #[test]
    fn gaussian_law_recursion() {
        // α_1 = 1 wipes the start; then Var X_3 = (1-α_2)²·1 + α_2² = 1/9 + 4/9
        let s = StepSchedule::new(2.0, 1.0).unwrap();
        assert_eq!(scalar_gaussian_law(1.0, 1.0, s, 3.0, 1), (3.0, 0.0));
        let (m, v) = scalar_gaussian_law(1.0, 1.0, s, 3.0, 3);
        assert_eq!(m, 0.0);
        assert!((v - 5.0 / 9.0).abs() < 1e-15);
        let t = gaussian_ball_tail(0.0, 1.0, 1.959963984540054);
        assert!((t - 0.05).abs() < 1e-10, "{t}");
    }

    #[test]
    fn exact_log_linear_inputs() {
        let pts = |scale: f64| TailEstimate {
            points: (1..=20)
                .map(|i| {
                    let k = 50 * i;
                    let p = scale * (-0.02 * k as f64).exp();
                    TailPoint {
                        k,
                        n: 1_000_000,
                        hits: (p * 1e6) as u64 + 1,
                        p_hat: p,
                        ci_lo: p,
                        ci_hi: p,
                    }
                })
                .collect(),
            level: 0.99,
            diverged: 0,
            joint_hits: vec![],
        };
        let all = FitWindow {
            p_min: 0.0,
            p_max: 1.0,
            ..FitWindow::default()
        };
        let f = fit_empirical_rate(&pts(1.0), &all).unwrap();
        assert!((f.rate - 0.02).abs() < 1e-12);
        assert!(f.residual_rms < 1e-12);
        let f = fit_empirical_rate(&pts(5.0), &all).unwrap();
        assert!((f.rate - 0.02).abs() < 1e-12);
        assert!((f.intercept - 5f64.ln()).abs() < 1e-10);
        // default window keeps 1e-4 ≤ p ≤ 0.1 only
        let f = fit_empirical_rate(&pts(1.0), &FitWindow::default()).unwrap();
        assert_eq!((f.k_lo, f.k_hi), (150, 450));
        let narrow = FitWindow {
            p_min: 0.5,
            p_max: 0.6,
            ..FitWindow::default()
        };
        assert!(matches!(fit_empirical_rate(&pts(1.0), &narrow), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn divergence_counts_as_hit() {
        // a huge step constant blows up the first steps
        let obj = QuadraticObjective::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1)).unwrap();
        let noise = GaussianNoise::isotropic(1, 1.0).unwrap();
        let q = TailQuery {
            set: TailSet::Ball { delta: 1.0 },
            ks: vec![1, 400, 800],
            replications: 10,
            seed: 3,
        };
        let s = StepSchedule::new(1e6, 1.0).unwrap();
        let est = estimate_tail_curve(&obj, &noise, s, &[1.0], &q, 1).unwrap();
        assert_eq!(est.diverged, 10);
        assert_eq!(est.points[2].hits, 10);
    }

    #[test]
    fn set_membership() {
        let l1 = TailSet::Lp { p: 1.0, delta: 1.0 };
        assert!(l1.contains(&[0.5, 0.5]));
        assert!(!l1.contains(&[0.4, 0.5]));
        let linf = TailSet::Lp {
            p: f64::INFINITY,
            delta: 1.0,
        };
        assert!(!linf.contains(&[0.9, -0.9]));
        assert!(linf.contains(&[0.0, -1.0]));
        let h = TailSet::HalfSpace { v: vec![1.0, 0.0], c: 0.5 };
        assert!(h.contains(&[0.5, 9.0]) && !h.contains(&[0.4, 9.0]));
        assert!(TailSet::HalfSpace { v: vec![1.0], c: 0.0 }.validate(1).is_err());
        assert!(TailSet::Ball { delta: 0.0 }.validate(1).is_err());
    }
}
