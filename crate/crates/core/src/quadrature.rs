//! Globally adaptive Gauss–Legendre quadrature.
//!
//! Each panel is integrated with a fixed-order Gauss–Legendre rule on the
//! whole panel and on its two halves; the difference is the panel's error
//! estimate and the two-half sum is its value. The panel with the largest
//! error is split until the summed error falls below the tolerance.

use std::sync::OnceLock;

const ORDER: usize = 10;

/// Nodes and weights on [-1, 1] by Newton iteration on the Legendre recurrence.
fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_rule(ORDER))
}

fn panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> f64 {
    let (x, w) = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        s += wi * f(mid + half * xi);
    }
    s * half
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_panels: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
    pub converged: bool,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn make_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let whole = panel(f, a, b);
    let m = 0.5 * (a + b);
    let halves = panel(f, a, m) + panel(f, m, b);
    Panel {
        a,
        b,
        value: halves,
        error: (whole - halves).abs(),
    }
}

/// Integrate `f` over `[a, b]`. A non-finite integrand value anywhere makes
/// the result non-finite (positive infinity when the values are `+inf`).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Quadrature {
    if a == b {
        return Quadrature {
            value: 0.0,
            error: 0.0,
            panels: 0,
            converged: true,
        };
    }
    let mut panels = vec![make_panel(&mut f, a, b)];
    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.error).sum();
        if !total.is_finite() {
            return Quadrature {
                value: total,
                error: f64::INFINITY,
                panels: panels.len(),
                converged: false,
            };
        }
        let target = (opts.rel_tol * total.abs()).max(opts.abs_tol);
        if err <= target || panels.len() >= opts.max_panels {
            return Quadrature {
                value: total,
                error: err,
                panels: panels.len(),
                converged: err <= target,
            };
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty panel list");
        let p = panels.swap_remove(worst);
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // panel cannot be split further at double precision
            panels.push(Panel { error: 0.0, ..p });
            continue;
        }
        panels.push(make_panel(&mut f, p.a, m));
        panels.push(make_panel(&mut f, m, p.b));
    }
}
