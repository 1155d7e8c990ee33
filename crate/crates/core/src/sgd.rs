//! The SGD recursion `X_{k+1} = X_k - α_k (g(X_k) - Z_k)` with
//! `α_k = a / (k + b)`, plus the step-product utilities used to bound it.

use crate::error::{check_dim, invalid_arg, Error, Result};
use crate::linalg;
use crate::model::Objective;
use crate::noise::NoiseModel;
use crate::rng::Stream;
use std::io::Write;

/// Coordinates beyond this magnitude abort a run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e150;

/// `α_k = a / (k + b)` for `k ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    a: f64,
    b: f64,
}

impl StepSchedule {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(invalid_arg(format!("step constant a must be positive, got {a}")));
        }
        if !(b >= 1.0) || !b.is_finite() {
            return Err(invalid_arg(format!("step offset b must be at least 1, got {b}")));
        }
        Ok(Self { a, b })
    }

    /// Schedule with offset `b = k0 = 4a²L²/(2aμ - 1)`, the configuration the
    /// high-probability bound and the rate upper bound are stated for.
    pub fn with_k0(a: f64, obj: &dyn Objective) -> Result<Self> {
        let k0 = hpb_offset(a, obj.mu(), obj.lip())?;
        Self::new(a, k0.max(1.0))
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    #[inline]
    pub fn alpha(&self, k: usize) -> f64 {
        self.a / (k as f64 + self.b)
    }

    /// Requires `a·μ > 1`.
    pub fn validate_for(&self, obj: &dyn Objective) -> Result<()> {
        let amu = self.a * obj.mu();
        if !(amu > 1.0) {
            return Err(invalid_arg(format!(
                "step-size condition violated: a·mu must exceed 1 (a = {}, mu = {}, a·mu = {amu})",
                self.a,
                obj.mu()
            )));
        }
        Ok(())
    }
}

pub(crate) fn hpb_offset(a: f64, mu: f64, lip: f64) -> Result<f64> {
    let denom = 2.0 * a * mu - 1.0;
    if !(denom > 0.0) {
        return Err(invalid_arg(format!("2aμ - 1 must be positive (a = {a}, mu = {mu})")));
    }
    Ok(4.0 * a * a * lip * lip / denom)
}

/// Reusable buffers for stepping one trajectory.
pub struct Stepper<'a> {
    obj: &'a dyn Objective,
    noise: &'a dyn NoiseModel,
    schedule: StepSchedule,
    grad: Vec<f64>,
    z: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(obj: &'a dyn Objective, noise: &'a dyn NoiseModel, schedule: StepSchedule) -> Result<Self> {
        check_dim(obj.dim(), noise.dim(), "noise model")?;
        let d = obj.dim();
        Ok(Self {
            obj,
            noise,
            schedule,
            grad: vec![0.0; d],
            z: vec![0.0; d],
        })
    }

    /// In-place step from `X_k` to `X_{k+1}`; consumes exactly one noise draw.
    #[inline]
    pub fn step(&mut self, k: usize, x: &mut [f64], rng: &mut Stream) {
        let alpha = self.schedule.alpha(k);
        self.obj.gradient_into(x, &mut self.grad);
        self.noise.sample_into(x, rng, &mut self.z);
        for ((xi, gi), zi) in x.iter_mut().zip(&self.grad).zip(&self.z) {
            *xi -= alpha * (gi - zi);
        }
    }

    /// Noise drawn by the most recent step.
    pub fn last_noise(&self) -> &[f64] {
        &self.z
    }
}

pub fn sgd_step(
    obj: &dyn Objective,
    noise: &dyn NoiseModel,
    schedule: StepSchedule,
    k: usize,
    x: &[f64],
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    if k < 1 {
        return Err(invalid_arg("iteration index starts at 1"));
    }
    check_dim(obj.dim(), x.len(), "sgd_step")?;
    let mut stepper = Stepper::new(obj, noise, schedule)?;
    let mut next = x.to_vec();
    stepper.step(k, &mut next, rng);
    Ok(next)
}

#[inline]
pub(crate) fn diverged(x: &[f64]) -> bool {
    x.iter().any(|v| !(v.abs() <= DIVERGENCE_THRESHOLD))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub seed: u64,
    /// `(k, X_k)` at the requested indices, increasing in `k`.
    pub checkpoints: Vec<(usize, Vec<f64>)>,
    /// `(k, ‖X_k - x*‖)` for every `k` in `1..=K`.
    pub distances: Vec<(usize, f64)>,
}

impl TrajectoryRecord {
    /// CSV with columns `k, dist` and, when checkpoints were requested,
    /// `x0..x{d-1}` (empty on rows without a checkpoint).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.checkpoints.first().map_or(0, |c| c.1.len());
        write!(w, "k,dist")?;
        for i in 0..d {
            write!(w, ",x{i}")?;
        }
        writeln!(w)?;
        let mut cp = self.checkpoints.iter().peekable();
        for &(k, dist) in &self.distances {
            write!(w, "{k},{}", fmt_float(dist))?;
            if d > 0 {
                match cp.peek() {
                    Some((ck, x)) if *ck == k => {
                        for v in x {
                            write!(w, ",{}", fmt_float(*v))?;
                        }
                        cp.next();
                    }
                    _ => {
                        for _ in 0..d {
                            write!(w, ",")?;
                        }
                    }
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Shortest round-trip representation, at most 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Run `K - 1` SGD steps from the deterministic start `x1`.
pub fn run(
    obj: &dyn Objective,
    noise: &dyn NoiseModel,
    schedule: StepSchedule,
    x1: &[f64],
    horizon: usize,
    record_at: &[usize],
    seed: u64,
) -> Result<TrajectoryRecord> {
    if horizon < 1 {
        return Err(invalid_arg("horizon must be at least 1"));
    }
    check_dim(obj.dim(), x1.len(), "initial point")?;
    if x1.iter().any(|v| !v.is_finite()) {
        return Err(invalid_arg("initial point must be finite"));
    }
    let mut wanted: Vec<usize> = record_at.iter().copied().filter(|&k| k >= 1 && k <= horizon).collect();
    wanted.sort_unstable();
    wanted.dedup();

    let xs = obj.minimizer();
    let mut rng = Stream::new(seed, 0);
    let mut stepper = Stepper::new(obj, noise, schedule)?;
    let mut x = x1.to_vec();
    let mut distances = Vec::with_capacity(horizon);
    let mut checkpoints = Vec::with_capacity(wanted.len());
    let mut next_cp = wanted.iter().peekable();
    for k in 1..=horizon {
        if k > 1 {
            stepper.step(k - 1, &mut x, &mut rng);
            if diverged(&x) {
                return Err(Error::Diverged { k });
            }
        }
        distances.push((k, linalg::distance(&x, xs)));
        if next_cp.peek() == Some(&&k) {
            checkpoints.push((k, x.clone()));
            next_cp.next();
        }
    }
    Ok(TrajectoryRecord {
        seed,
        checkpoints,
        distances,
    })
}

/// Number of factors above which the product is accumulated in log space.
const LOG_SPACE_CUTOFF: usize = 1000;

/// `Π_{j=l}^{k} (1 - α_j u + α_j² v)` with `α_j = a/(j+b)`.
pub fn beta_product(u: f64, v: f64, l: usize, k: usize, a: f64, b: f64) -> Result<f64> {
    if l < 1 || l > k {
        return Err(invalid_arg(format!("need 1 ≤ l ≤ k, got l = {l}, k = {k}")));
    }
    if !(u >= 0.0 && v >= 0.0) {
        return Err(invalid_arg("u and v must be nonnegative"));
    }
    let factor = |j: usize| {
        let alpha = a / (j as f64 + b);
        1.0 - alpha * u + alpha * alpha * v
    };
    if k - l <= LOG_SPACE_CUTOFF {
        return Ok((l..=k).map(factor).product());
    }
    // Kahan-compensated sum of logs; the sign is tracked separately.
    let mut negative = false;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for j in l..=k {
        let f = factor(j);
        if f == 0.0 {
            return Ok(0.0);
        }
        if f < 0.0 {
            negative = !negative;
        }
        let y = f.abs().ln() - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    let mag = sum.exp();
    Ok(if negative { -mag } else { mag })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaBounds {
    pub upper: f64,
    /// Present only when `l + b ≥ 5au/2`.
    pub lower: Option<f64>,
}

/// Polynomial sandwich for [`beta_product`].
pub fn beta_bounds(u: f64, v: f64, l: usize, k: usize, a: f64, b: f64) -> BetaBounds {
    let (lf, kf) = (l as f64, k as f64);
    let au = a * u;
    let upper = ((lf + b) / (kf + b + 1.0)).powf(au) * (a * a * v / (lf + b - 1.0)).exp();
    let lower = (lf + b >= 2.5 * au).then(|| ((lf + b - 1.0) / (kf + b)).powf(au) * (-a * a * u * u / (lf + b - 1.0)).exp());
    BetaBounds { upper, lower }
}

/// `γ̄ = max{1, √((1 - aμ)² + a²(L² - μ²))}`.
pub fn gamma_bar(mu: f64, lip: f64, a: f64) -> f64 {
    let inner = (1.0 - a * mu).powi(2) + a * a * (lip * lip - mu * mu);
    inner.max(0.0).sqrt().max(1.0)
}

pub fn gamma_bar_for(obj: &dyn Objective, schedule: &StepSchedule) -> f64 {
    gamma_bar(obj.mu(), obj.lip(), schedule.a())
}
