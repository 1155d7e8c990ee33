//! Convex conjugates `I(z) = sup_λ { zᵀλ - Ψ(λ) }` and sphere minimization
//! of a rate function.

use crate::linalg::{self, jacobi_eigen};
use crate::rng::Stream;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// The objective kept growing past the norm cap; the value is `+inf`.
    pub unbounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateQueryResult {
    pub value: f64,
    pub witness: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy)]
pub struct FenchelOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// `‖λ‖` beyond which the supremum is declared unbounded.
    pub norm_cap: f64,
    pub ray_directions: usize,
    pub gradient_step: f64,
    pub hessian_step: f64,
}

impl Default for FenchelOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-9,
            norm_cap: 1e10,
            ray_directions: 64,
            gradient_step: 1e-5,
            hessian_step: 1e-3,
        }
    }
}

const RAY_SEED: u64 = 0x5eed_f3c4;

pub fn fenchel<F: Fn(&[f64]) -> f64>(psi: F, z: &[f64]) -> RateQueryResult {
    fenchel_with(psi, z, FenchelOptions::default())
}

pub fn fenchel_with<F: Fn(&[f64]) -> f64>(psi: F, z: &[f64], opts: FenchelOptions) -> RateQueryResult {
    fenchel_from(psi, z, None, opts)
}

/// As [`fenchel_with`], with Newton started from `start` (when `Ψ` is finite
/// there) instead of the origin.
pub fn fenchel_from<F: Fn(&[f64]) -> f64>(psi: F, z: &[f64], start: Option<&[f64]>, opts: FenchelOptions) -> RateQueryResult {
    let d = z.len();
    let zn = linalg::norm(z);
    if zn == 0.0 {
        return RateQueryResult {
            value: 0.0,
            witness: vec![0.0; d],
            diagnostics: Diagnostics {
                iterations: 0,
                gradient_norm: 0.0,
                converged: true,
                unbounded: false,
            },
        };
    }
    let phi = |lam: &[f64]| {
        let p = psi(lam);
        if p.is_finite() {
            linalg::dot(z, lam) - p
        } else {
            f64::NEG_INFINITY
        }
    };

    let newton = newton_ascent(&psi, &phi, z, start, &opts);
    if newton.diagnostics.converged || newton.diagnostics.unbounded {
        return finish(newton);
    }
    let rays = ray_search(&phi, z, &opts);
    let mut best = if rays.value > newton.value { rays } else { newton };
    best.diagnostics.iterations += opts.ray_directions;
    finish(best)
}

fn finish(mut r: RateQueryResult) -> RateQueryResult {
    if r.diagnostics.unbounded {
        r.value = f64::INFINITY;
    } else {
        r.value = r.value.max(0.0);
    }
    r
}

fn numeric_gradient<F: Fn(&[f64]) -> f64>(psi: &F, lam: &[f64], step: f64) -> Option<Vec<f64>> {
    let scale = linalg::norm(lam) + 1.0;
    let mut h = step * scale;
    let mut x = lam.to_vec();
    let mut g = vec![0.0; lam.len()];
    'retry: for _ in 0..6 {
        for i in 0..lam.len() {
            x[i] = lam[i] + h;
            let up = psi(&x);
            x[i] = lam[i] - h;
            let dn = psi(&x);
            x[i] = lam[i];
            if !(up.is_finite() && dn.is_finite()) {
                h *= 0.1;
                continue 'retry;
            }
            g[i] = (up - dn) / (2.0 * h);
        }
        return Some(g);
    }
    None
}

fn numeric_hessian<F: Fn(&[f64]) -> f64>(psi: &F, lam: &[f64], step: f64) -> Option<DMatrix<f64>> {
    let d = lam.len();
    let scale = linalg::norm(lam) + 1.0;
    let mut h = step * scale;
    let center = psi(lam);
    let mut x = lam.to_vec();
    'retry: for _ in 0..6 {
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            x[i] = lam[i] + h;
            let up = psi(&x);
            x[i] = lam[i] - h;
            let dn = psi(&x);
            x[i] = lam[i];
            if !(up.is_finite() && dn.is_finite()) {
                h *= 0.1;
                continue 'retry;
            }
            m[(i, i)] = (up - 2.0 * center + dn) / (h * h);
            for j in 0..i {
                let mut corner = |si: f64, sj: f64| {
                    x[i] = lam[i] + si * h;
                    x[j] = lam[j] + sj * h;
                    let v = psi(&x);
                    x[i] = lam[i];
                    x[j] = lam[j];
                    v
                };
                let v = corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0);
                if !v.is_finite() {
                    h *= 0.1;
                    continue 'retry;
                }
                m[(i, j)] = v / (4.0 * h * h);
                m[(j, i)] = m[(i, j)];
            }
        }
        return Some(m);
    }
    None
}

fn newton_ascent<F, P>(psi: &F, phi: &P, z: &[f64], start: Option<&[f64]>, opts: &FenchelOptions) -> RateQueryResult
where
    F: Fn(&[f64]) -> f64,
    P: Fn(&[f64]) -> f64,
{
    let d = z.len();
    let tol = opts.grad_tol * (1.0 + linalg::norm(z));
    let mut lam = vec![0.0; d];
    let mut value = phi(&lam);
    if let Some(s) = start.filter(|s| s.len() == d) {
        let v = phi(s);
        if v.is_finite() && v > value {
            lam = s.to_vec();
            value = v;
        }
    }
    let mut diag = Diagnostics {
        iterations: 0,
        gradient_norm: f64::INFINITY,
        converged: false,
        unbounded: false,
    };
    if !value.is_finite() {
        // Ψ(0) should be 0; nothing sensible to do
        value = 0.0;
        return RateQueryResult {
            value,
            witness: lam,
            diagnostics: diag,
        };
    }
    let mut stalls = 0;
    for it in 0..opts.max_iter {
        diag.iterations = it + 1;
        let Some(gpsi) = numeric_gradient(psi, &lam, opts.gradient_step) else {
            break;
        };
        let grad: Vec<f64> = z.iter().zip(&gpsi).map(|(a, b)| a - b).collect();
        diag.gradient_norm = linalg::norm(&grad);
        if diag.gradient_norm < tol {
            diag.converged = true;
            break;
        }
        let Some(hess) = numeric_hessian(psi, &lam, opts.hessian_step) else {
            break;
        };
        let Ok(eig) = jacobi_eigen(&((&hess + hess.transpose()) * 0.5)) else {
            break;
        };
        let top = eig.values.max();
        let floor = if top > 0.0 { 1e-12 * top } else { 1e-12 };
        let v = &eig.vectors;
        let w = v.transpose() * DVector::from_column_slice(&grad);
        let scaled = DVector::from_iterator(d, w.iter().zip(eig.values.iter()).map(|(x, e)| x / e.max(floor)));
        let dir = v * scaled;
        let slope: f64 = grad.iter().zip(dir.iter()).map(|(a, b)| a * b).sum();

        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let cand: Vec<f64> = lam.iter().zip(dir.iter()).map(|(l, s)| l + t * s).collect();
            let val = phi(&cand);
            if val.is_finite() && val >= value + 1e-4 * t * slope {
                accepted = Some((cand, val));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, val)) = accepted else {
            // no ascent possible; at the optimum up to finite-difference noise
            if diag.gradient_norm < 1e-5 * (1.0 + linalg::norm(z)) {
                diag.converged = true;
            }
            break;
        };
        let moved = linalg::distance(&cand, &lam);
        lam = cand;
        value = val;
        if linalg::norm(&lam) > opts.norm_cap {
            diag.unbounded = true;
            break;
        }
        if moved <= 1e-13 * (1.0 + linalg::norm(&lam)) {
            stalls += 1;
            if stalls >= 3 {
                diag.converged = diag.gradient_norm < 1e-5 * (1.0 + linalg::norm(z));
                break;
            }
        }
    }
    RateQueryResult {
        value,
        witness: lam,
        diagnostics: diag,
    }
}

/// Best value of `t ↦ φ(t u)` over 64 directions `u`, with `z/‖z‖` first.
fn ray_search<P: Fn(&[f64]) -> f64>(phi: &P, z: &[f64], opts: &FenchelOptions) -> RateQueryResult {
    let d = z.len();
    let zn = linalg::norm(z);
    let mut rng = Stream::new(RAY_SEED, 0);
    let mut best = RateQueryResult {
        value: 0.0,
        witness: vec![0.0; d],
        diagnostics: Diagnostics {
            iterations: 0,
            gradient_norm: f64::NAN,
            converged: false,
            unbounded: false,
        },
    };
    for r in 0..opts.ray_directions.max(1) {
        let u: Vec<f64> = if r == 0 { z.iter().map(|v| v / zn).collect() } else { rng.unit_vector(d) };
        let f = |t: f64| phi(&u.iter().map(|v| t * v).collect::<Vec<_>>());
        // bracket by doubling
        let mut t = 1e-6;
        let mut ft = f(t);
        if !(ft > 0.0) {
            continue;
        }
        let mut unbounded = false;
        loop {
            let f2 = f(2.0 * t);
            if !(f2 > ft) {
                break;
            }
            t *= 2.0;
            ft = f2;
            if t > opts.norm_cap {
                unbounded = true;
                break;
            }
        }
        if unbounded {
            best.value = f64::INFINITY;
            best.witness = u.iter().map(|v| t * v).collect();
            best.diagnostics.unbounded = true;
            return best;
        }
        let (tmax, fmax) = golden_max(&f, 0.5 * t, 2.0 * t, 1e-12);
        let (tmax, fmax) = if fmax >= ft { (tmax, fmax) } else { (t, ft) };
        if fmax > best.value {
            best.value = fmax;
            best.witness = u.iter().map(|v| tmax * v).collect();
        }
    }
    best
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, rel_tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= rel_tol * hi.abs().max(1e-300) {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SphereOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SphereOptions {
    fn default() -> Self {
        Self {
            restarts: 32,
            max_iter: 100,
            seed: 0x0ba11,
        }
    }
}

/// `inf_{‖z‖ = δ} I(z)` by projected gradient descent on the sphere. `rate`
/// must return the conjugate at `z` with its maximizing `λ` as the witness,
/// which is the gradient of `I` at `z`. The result's witness is the
/// minimizing point `z`.
pub fn ball_rate_search<R: FnMut(&[f64]) -> RateQueryResult>(
    mut rate: R,
    dim: usize,
    delta: f64,
    opts: SphereOptions,
) -> RateQueryResult {
    let mut best = RateQueryResult {
        value: f64::INFINITY,
        witness: vec![0.0; dim],
        diagnostics: Diagnostics {
            iterations: 0,
            gradient_norm: f64::NAN,
            converged: false,
            unbounded: false,
        },
    };
    if delta == 0.0 {
        best.value = 0.0;
        best.diagnostics.converged = true;
        return best;
    }
    let mut total_iters = 0;
    for r in 0..opts.restarts.max(1) {
        let mut rng = Stream::new(opts.seed, r as u64);
        let mut z: Vec<f64> = rng.unit_vector(dim).iter().map(|v| v * delta).collect();
        let mut cur = rate(&z);
        if !cur.value.is_finite() {
            continue;
        }
        let mut step = f64::NAN;
        let mut tangent_norm = f64::INFINITY;
        let mut converged = false;
        for _ in 0..opts.max_iter {
            total_iters += 1;
            let g = &cur.witness;
            let radial = linalg::dot(g, &z) / (delta * delta);
            let tangent: Vec<f64> = g.iter().zip(&z).map(|(g, z)| g - radial * z).collect();
            tangent_norm = linalg::norm(&tangent);
            if tangent_norm <= 1e-9 * (1.0 + linalg::norm(g)) {
                converged = true;
                break;
            }
            if !step.is_finite() {
                step = 0.25 * delta / tangent_norm;
            }
            let mut moved = false;
            while step * tangent_norm > 1e-14 * delta {
                let raw: Vec<f64> = z.iter().zip(&tangent).map(|(z, t)| z - step * t).collect();
                let n = linalg::norm(&raw);
                let cand: Vec<f64> = raw.iter().map(|v| v * delta / n).collect();
                let res = rate(&cand);
                if res.value < cur.value {
                    z = cand;
                    cur = res;
                    moved = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                converged = true;
                break;
            }
        }
        if cur.value < best.value {
            best.value = cur.value;
            best.witness = z;
            best.diagnostics.gradient_norm = tangent_norm;
            best.diagnostics.converged = converged;
        }
    }
    best.diagnostics.iterations = total_iters;
    best.diagnostics.unbounded = best.value == f64::INFINITY;
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_point_is_zero() {
        let r = fenchel(|l: &[f64]| l[0] * l[0], &[0.0]);
        assert_eq!(r.value, 0.0);
        assert_eq!(r.witness, vec![0.0]);
    }

    #[test]
    fn scalar_quadratic_conjugate() {
        let r = fenchel(|l: &[f64]| 2.0 * l[0] * l[0] / 3.0, &[1.0]);
        assert!(r.diagnostics.converged);
        assert!((r.value - 0.375).abs() < 1e-10, "{r:?}");
        assert!((r.witness[0] - 0.75).abs() < 1e-6);
    }

    #[test]
    fn matrix_quadratic_conjugate() {
        let mut rng = Stream::new(3, 0);
        for _ in 0..10 {
            let b = DMatrix::from_fn(3, 3, |_, _| rng.normal());
            let m = &b * b.transpose() + DMatrix::identity(3, 3) * 0.5;
            let z: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let zv = DVector::from_column_slice(&z);
            let exact = 0.5 * zv.dot(&(m.clone().cholesky().unwrap().solve(&zv)));
            let mm = m.clone();
            let r = fenchel(
                move |l: &[f64]| {
                    let lv = DVector::from_column_slice(l);
                    0.5 * lv.dot(&(&mm * &lv))
                },
                &z,
            );
            assert!((r.value - exact).abs() <= 1e-8 * exact, "{} vs {exact}", r.value);
        }
    }

    #[test]
    fn flat_direction_is_unbounded() {
        // Ψ ≡ 0 along the second axis
        let r = fenchel(|l: &[f64]| l[0] * l[0], &[0.0, 1.0]);
        assert!(r.diagnostics.unbounded);
        assert_eq!(r.value, f64::INFINITY);
        let r = fenchel(|_: &[f64]| 0.0, &[1.0]);
        assert_eq!(r.value, f64::INFINITY);
    }

    #[test]
    fn restricted_domain() {
        // Laplace-type Ψ(λ) = -ln(1 - λ²/4): conjugate at z is finite for all z
        let psi = |l: &[f64]| {
            let t = 1.0 - l[0] * l[0] / 4.0;
            if t > 0.0 {
                -t.ln()
            } else {
                f64::INFINITY
            }
        };
        for z in [0.1, 1.0, 10.0, 100.0] {
            let r = fenchel(psi, &[z]);
            // stationarity: z = (λ/2)/(1 - λ²/4)
            let l = r.witness[0];
            assert!(l.abs() < 2.0);
            let check = z * l - psi(&[l]);
            assert!((check - r.value).abs() < 1e-12);
            let brute = (1..200_000)
                .map(|i| -2.0 + 4.0 * i as f64 / 200_000.0)
                .map(|l| z * l - psi(&[l]))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(r.value >= brute - 1e-6 * brute.abs().max(1.0), "z={z}: {} < {brute}", r.value);
        }
    }

    #[test]
    fn sphere_search_finds_smallest_curvature() {
        // I(z) = ½ zᵀ M z with M = diag(4, 1, 9): min on ‖z‖ = 2 is ½·1·4 = 2
        let m = [4.0, 1.0, 9.0];
        let rate = |z: &[f64]| RateQueryResult {
            value: 0.5 * z.iter().zip(&m).map(|(z, m)| m * z * z).sum::<f64>(),
            witness: z.iter().zip(&m).map(|(z, m)| m * z).collect(),
            diagnostics: Diagnostics {
                iterations: 0,
                gradient_norm: 0.0,
                converged: true,
                unbounded: false,
            },
        };
        let r = ball_rate_search(rate, 3, 2.0, SphereOptions::default());
        assert!((r.value - 2.0).abs() < 1e-8, "{r:?}");
        assert!((r.witness[1].abs() - 2.0).abs() < 1e-4);
    }
}
