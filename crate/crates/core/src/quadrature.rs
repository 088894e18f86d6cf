//! Gauss–Jacobi rules and adaptive Gauss–Kronrod integration.
//!
//! Jacobi rules start from Golub–Welsch eigenvalues and are polished by
//! Newton iteration on the three-term recurrence; weights come from the
//! Christoffel formula and are normalized to the exact total mass.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::special::{ln_beta, stable_sum};

/// Nodes and weights of an interpolatory rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Largest rule size accepted by the constructors.
pub const MAX_NODES: usize = 256;

/// `P_n^{(a,b)}` and its derivative in the shifted variable `u = (1+x)/2`.
///
/// Writing the recurrence in `u` keeps relative accuracy for nodes close
/// to `u = 0`; nodes near `u = 1` are handled by reflection.
fn shifted_jacobi(n: usize, a: f64, b: f64, u: f64) -> (f64, f64) {
    let value = |n: usize, a: f64, b: f64| -> f64 {
        if n == 0 {
            return 1.0;
        }
        let ab = a + b;
        let mut p1 = -(b + 1.0) + (ab + 2.0) * u;
        let mut p2 = 1.0;
        for j in 2..=n {
            let p3 = p2;
            p2 = p1;
            let jf = j as f64;
            let t = 2.0 * jf + ab;
            let c1 = 2.0 * jf * (jf + ab) * (t - 2.0);
            let c2 = (t - 1.0) * ((a * a - b * b - t * (t - 2.0)) + 2.0 * t * (t - 2.0) * u);
            let c3 = 2.0 * (jf - 1.0 + a) * (jf - 1.0 + b) * t;
            p1 = (c2 * p2 - c3 * p3) / c1;
        }
        p1
    };
    let p = value(n, a, b);
    let dp = (n as f64 + a + b + 1.0) * value(n - 1, a + 1.0, b + 1.0);
    (p, dp)
}

fn newton_root(n: usize, a: f64, b: f64, mut u: f64) -> (f64, f64) {
    for _ in 0..12 {
        let (p, dp) = shifted_jacobi(n, a, b, u);
        let next = (u - p / dp).clamp(f64::MIN_POSITIVE, 1.0);
        let done = (next - u).abs() <= 2.0 * f64::EPSILON * u.abs();
        u = next;
        if done {
            break;
        }
    }
    let (_, dp) = shifted_jacobi(n, a, b, u);
    (u, dp)
}

/// Gauss rule for the Beta(p, q) probability law, nodes ascending.
fn beta_rule(n: usize, p: f64, q: f64) -> Result<GaussRule> {
    if n == 0 || n > MAX_NODES {
        return Err(Error::QuadratureDegree { degree: 2 * n, budget: 2 * MAX_NODES - 1 });
    }
    if !(p > 0.0 && q > 0.0 && p.is_finite() && q.is_finite()) {
        return Err(Error::InvalidParameter(format!("Beta parameters must be positive, got ({p}, {q})")));
    }
    // weight (1-x)^a (1+x)^b with u = (1+x)/2
    let (a, b) = (q - 1.0, p - 1.0);
    let ab = a + b;
    let mut jm = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        jm[(k, k)] =
            if k == 0 { (b - a) / (ab + 2.0) } else { (b * b - a * a) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0)) };
        if k + 1 < n {
            let m = kf + 1.0;
            let t = 2.0 * m + ab;
            let off2 = if k == 0 {
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                4.0 * m * (m + a) * (m + b) * (m + ab) / (t * t * (t + 1.0) * (t - 1.0))
            };
            jm[(k, k + 1)] = off2.sqrt();
            jm[(k + 1, k)] = off2.sqrt();
        }
    }
    let mut guesses: Vec<f64> = SymmetricEigen::new(jm).eigenvalues.iter().copied().collect();
    guesses.sort_by(|x, y| x.total_cmp(y));

    let mut nodes = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    for &x in &guesses {
        let (u, v, dp) = if x <= 0.0 {
            let (u, dp) = newton_root(n, a, b, 0.5 * (1.0 + x));
            (u, 1.0 - u, dp)
        } else {
            let (v, dp) = newton_root(n, b, a, 0.5 * (1.0 - x));
            (1.0 - v, v, dp)
        };
        nodes.push(u);
        raw.push(1.0 / (u * v * dp * dp));
    }
    let total = stable_sum(raw.iter().copied());
    Ok(GaussRule { nodes, weights: raw.iter().map(|w| w / total).collect() })
}

impl GaussRule {
    /// `n`-point Gauss–Jacobi rule on `[-1, 1]` for the weight
    /// `(1-x)^a (1+x)^b`, `a, b > -1`. Weights sum to the weight's mass.
    pub fn jacobi(n: usize, a: f64, b: f64) -> Result<GaussRule> {
        if !(a > -1.0 && b > -1.0) {
            return Err(Error::InvalidParameter(format!("Jacobi exponents must exceed -1, got ({a}, {b})")));
        }
        let rule = beta_rule(n, b + 1.0, a + 1.0)?;
        let mass = ((a + b + 1.0) * std::f64::consts::LN_2 + ln_beta(a + 1.0, b + 1.0)).exp();
        Ok(GaussRule {
            nodes: rule.nodes.iter().map(|u| 2.0 * u - 1.0).collect(),
            weights: rule.weights.iter().map(|w| w * mass).collect(),
        })
    }

    /// `n`-point rule for the Beta(p, q) probability law on `[0, 1]`;
    /// weights sum to 1.
    pub fn beta(n: usize, p: f64, q: f64) -> Result<GaussRule> {
        beta_rule(n, p, q)
    }

    /// `n`-point rule on `[0, 1]` for the weight `u^{p-1} (1-u)^{q-1}`
    /// (weights sum to `B(p, q)`).
    pub fn beta_weight(n: usize, p: f64, q: f64) -> Result<GaussRule> {
        let rule = beta_rule(n, p, q)?;
        let mass = ln_beta(p, q).exp();
        Ok(GaussRule { nodes: rule.nodes, weights: rule.weights.iter().map(|w| w * mass).collect() })
    }

    /// `n`-point Gauss–Legendre rule on `[lo, hi]`.
    pub fn legendre(n: usize, lo: f64, hi: f64) -> Result<GaussRule> {
        let rule = GaussRule::jacobi(n, 0.0, 0.0)?;
        let half = 0.5 * (hi - lo);
        Ok(GaussRule {
            nodes: rule.nodes.iter().map(|x| lo + half * (1.0 + x)).collect(),
            weights: rule.weights.iter().map(|w| w * half).collect(),
        })
    }

    /// Rule size that integrates polynomials of degree `deg` exactly.
    pub fn nodes_for_degree(deg: usize) -> usize {
        deg / 2 + 1
    }

    /// `Σ w_i f(x_i)` with compensated summation.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        stable_sum(self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)))
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Integral {
    let mut pieces = vec![(a, b, gk15(&mut f, a, b))];
    for _ in 0..20_000 {
        let value: f64 = stable_sum(pieces.iter().map(|p| p.2 .0));
        let error: f64 = pieces.iter().map(|p| p.2 .1).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Integral { value, error, converged: true };
        }
        let worst =
            pieces.iter().enumerate().max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1)).map(|(i, _)| i).unwrap_or(0);
        let (lo, hi, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        pieces.push((lo, mid, gk15(&mut f, lo, mid)));
        pieces.push((mid, hi, gk15(&mut f, mid, hi)));
    }
    let value = stable_sum(pieces.iter().map(|p| p.2 .0));
    let error = pieces.iter().map(|p| p.2 .1).sum();
    Integral { value, error, converged: false }
}

/// Adaptive integration over `[a, ∞)` via `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, abs_tol: f64, rel_tol: f64) -> Integral {
    integrate_adaptive(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            f(a + t / s) / (s * s)
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}
