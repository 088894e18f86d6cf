use crate::error::{check_epsilon, check_shape, Error, Result};
use crate::rng::RngStream;
use crate::special::{digamma, exp_integral_e1, EULER_GAMMA};

/// A jump measure for mass fractions, truncated below at `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpMeasure {
    /// `u^{-1} (1-u)^{2s-1} du` on `[ε, 1]`.
    HarmonicBulk { two_s: f64, epsilon: f64, rate: f64 },
    /// `u^{-1} e^{-u} du` on `[ε, ∞)`.
    ReservoirInput { epsilon: f64, rate: f64 },
    /// Finite measure given by atoms `(u, mass)` with `u ∈ (0, 1]`.
    GenericFinite { atoms: Vec<(f64, f64)>, rate: f64 },
}

/// `∫_ε^1 u^{-1} (1-u)^{2s-1} du`.
///
/// Uses `∫_0^1 ((1-u)^b - 1)/u du = -γ - ψ(2s)` with a series for the
/// missing piece near 0, or a series in `1-u` when ε is close to 1.
pub fn harmonic_bulk_rate(two_s: f64, epsilon: f64) -> Result<f64> {
    check_shape(two_s)?;
    check_epsilon(epsilon)?;
    let b = two_s - 1.0;
    if b == 0.0 {
        return Ok(-epsilon.ln());
    }
    if epsilon <= 0.5 {
        // ∫_0^ε ((1-u)^b - 1)/u du = Σ_{m≥1} C(b,m) (-ε)^m / m
        let mut coef = 1.0;
        let mut pow = 1.0;
        let mut tail = 0.0;
        for m in 1..400 {
            let mf = m as f64;
            coef *= (b - mf + 1.0) / mf;
            pow *= -epsilon;
            let term = coef * pow / mf;
            tail += term;
            if term.abs() < 1e-18 * tail.abs().max(1e-300) {
                break;
            }
        }
        Ok(-epsilon.ln() - EULER_GAMMA - digamma(two_s) - tail)
    } else {
        // v = 1-u: ∫_0^{1-ε} v^b / (1-v) dv = Σ_{m≥0} (1-ε)^{b+m+1} / (b+m+1)
        let top = 1.0 - epsilon;
        let mut sum = 0.0;
        let mut pow = top.powf(b + 1.0);
        for m in 0..2000 {
            let term = pow / (b + m as f64 + 1.0);
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
            pow *= top;
        }
        Ok(sum)
    }
}

impl JumpMeasure {
    pub fn harmonic_bulk(two_s: f64, epsilon: f64) -> Result<Self> {
        let rate = harmonic_bulk_rate(two_s, epsilon)?;
        Ok(JumpMeasure::HarmonicBulk { two_s, epsilon, rate })
    }

    /// Accepts any finite `ε > 0`; the measure has unbounded support.
    pub fn reservoir_input(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::BadEpsilon(epsilon));
        }
        Ok(JumpMeasure::ReservoirInput { epsilon, rate: exp_integral_e1(epsilon) })
    }

    pub fn generic_finite(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.iter().any(|&(u, m)| !(u > 0.0 && u <= 1.0 && m >= 0.0 && m.is_finite())) {
            return Err(Error::InvalidParameter("atoms need u in (0, 1] and finite nonnegative mass".into()));
        }
        let rate = atoms.iter().map(|a| a.1).sum();
        Ok(JumpMeasure::GenericFinite { atoms, rate })
    }

    /// Total mass of the truncated measure.
    pub fn rate(&self) -> f64 {
        match self {
            JumpMeasure::HarmonicBulk { rate, .. }
            | JumpMeasure::ReservoirInput { rate, .. }
            | JumpMeasure::GenericFinite { rate, .. } => *rate,
        }
    }

    /// Truncation level; 0 for finite measures.
    pub fn epsilon(&self) -> f64 {
        match self {
            JumpMeasure::HarmonicBulk { epsilon, .. } | JumpMeasure::ReservoirInput { epsilon, .. } => *epsilon,
            JumpMeasure::GenericFinite { .. } => 0.0,
        }
    }

    /// Draw a fraction from the normalized truncated measure.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            JumpMeasure::HarmonicBulk { two_s, epsilon, .. } => sample_bulk(*two_s, *epsilon, rng),
            JumpMeasure::ReservoirInput { epsilon, .. } => sample_input(*epsilon, rng),
            JumpMeasure::GenericFinite { atoms, rate } => {
                let mut r = rng.uniform() * rate;
                for &(u, m) in atoms {
                    if r < m {
                        return u;
                    }
                    r -= m;
                }
                atoms.last().map_or(1.0, |a| a.0)
            }
        }
    }
}

fn sample_bulk(two_s: f64, eps: f64, rng: &mut RngStream) -> f64 {
    let b = two_s - 1.0;
    let ln_eps = eps.ln();
    if b >= 0.0 {
        // envelope u^{-1} on [ε, 1], inverse CDF u = ε^W
        loop {
            let u = (rng.uniform() * ln_eps).exp().max(eps);
            if b == 0.0 || rng.uniform() < (1.0 - u).powf(b) {
                return u;
            }
        }
    }
    // envelope 2^{1-2s}/u on [ε, 1/2] and 2(1-u)^{2s-1} on [max(ε,1/2), 1]
    let split = eps.max(0.5);
    let left_mass = if eps < 0.5 { 2f64.powf(-b) * (0.5 / eps).ln() } else { 0.0 };
    let right_mass = 2.0 * (1.0 - split).powf(two_s) / two_s;
    loop {
        if rng.uniform() * (left_mass + right_mass) < left_mass {
            let u = (ln_eps + rng.uniform() * (0.5 / eps).ln()).exp().clamp(eps, 0.5);
            if rng.uniform() < (2.0 * (1.0 - u)).powf(b) {
                return u;
            }
        } else {
            let u = 1.0 - (1.0 - split) * rng.uniform_open().powf(1.0 / two_s);
            if rng.uniform() * 2.0 * u < 1.0 {
                return u.max(eps);
            }
        }
    }
}

fn sample_input(eps: f64, rng: &mut RngStream) -> f64 {
    // envelope u^{-1} on [ε, 1] and e^{-u}/start on [start, ∞)
    let start = eps.max(1.0);
    let left_mass = (-eps.ln()).max(0.0);
    let right_mass = (-start).exp() / start;
    loop {
        if rng.uniform() * (left_mass + right_mass) < left_mass {
            let u = (rng.uniform() * eps.ln()).exp().max(eps);
            if rng.uniform() < (-u).exp() {
                return u;
            }
        } else {
            let u = start + rng.exp(1.0);
            if rng.uniform() * u < start {
                return u;
            }
        }
    }
}

/// Truncated total rate `λ_ε` of a measure.
pub fn truncated_jump_rate(measure: &JumpMeasure) -> f64 {
    measure.rate()
}

/// Fraction drawn from the normalized truncated measure.
pub fn truncated_jump_sample(measure: &JumpMeasure, rng: &mut RngStream) -> f64 {
    measure.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_adaptive, integrate_to_infinity, GaussRule};
    use approx::assert_relative_eq;

    fn bulk_density(two_s: f64, u: f64) -> f64 {
        (1.0 - u).powf(two_s - 1.0) / u
    }

    #[test]
    fn bulk_rate_reference() {
        assert_relative_eq!(harmonic_bulk_rate(1.0, 1e-3).unwrap(), 1000f64.ln(), epsilon = 1e-12);
        assert!(harmonic_bulk_rate(2.0, 1.0 - 1e-9).unwrap() < 1e-15);
        assert_eq!(harmonic_bulk_rate(1.0, 0.0), Err(Error::BadEpsilon(0.0)));
        assert_eq!(harmonic_bulk_rate(1.0, 1.0), Err(Error::BadEpsilon(1.0)));
    }

    /// Oracle: adaptive Gauss–Kronrod on `[ε, 1/2]` plus a Gauss–Jacobi rule
    /// carrying the `(1-u)^{2s-1}` endpoint weight on `[1/2, 1]`.
    fn bulk_rate_oracle(s: f64, eps: f64) -> f64 {
        let b = s - 1.0;
        if eps >= 0.5 {
            let rule = GaussRule::jacobi(40, b, 0.0).unwrap();
            let h = 0.5 * (1.0 - eps);
            return h.powf(b + 1.0) * rule.integrate(|x| 1.0 / (eps + h * (1.0 + x)));
        }
        let left = integrate_adaptive(|u| bulk_density(s, u), eps, 0.5, 1e-14, 1e-14).value;
        let rule = GaussRule::jacobi(40, b, 0.0).unwrap();
        let right = 0.25f64.powf(b + 1.0) * rule.integrate(|x| 1.0 / (0.5 + 0.25 * (1.0 + x)));
        left + right
    }

    #[test]
    fn bulk_rate_matches_quadrature_oracle() {
        for &s in &[0.25, 0.5, 2.0, 3.5] {
            for &eps in &[1e-4, 1e-2, 0.3, 0.5, 0.7, 0.95] {
                assert_relative_eq!(
                    harmonic_bulk_rate(s, eps).unwrap(),
                    bulk_rate_oracle(s, eps),
                    max_relative = 1e-12
                );
            }
        }
        // frozen reference values
        assert_relative_eq!(harmonic_bulk_rate(0.25, 1e-4).unwrap(), 12.860_503_237_169_465, max_relative = 1e-14);
        assert_relative_eq!(harmonic_bulk_rate(2.0, 0.5).unwrap(), 0.193_147_180_559_945_3, max_relative = 1e-13);
    }

    #[test]
    fn input_rate_is_e1() {
        let m = JumpMeasure::reservoir_input(1e-3).unwrap();
        let r = integrate_to_infinity(|u| (-u).exp() / u, 1e-3, 1e-13, 1e-13);
        assert_relative_eq!(m.rate(), r.value, max_relative = 1e-9);
    }

    #[test]
    fn rate_decreases_in_epsilon() {
        for &s in &[0.25, 1.0, 3.0] {
            let mut prev = f64::INFINITY;
            for i in 1..100 {
                let r = harmonic_bulk_rate(s, i as f64 / 100.0).unwrap();
                assert!(r < prev);
                prev = r;
            }
        }
    }

    /// Sample mean of u against ∫ u ρ(u) du / λ_ε.
    #[test]
    fn samplers_hit_truncated_means() {
        let mut rng = RngStream::new(99, 1);
        for &s in &[0.25, 1.0, 2.0] {
            let m = JumpMeasure::harmonic_bulk(s, 1e-2).unwrap();
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
            assert!(xs.iter().all(|&u| (1e-2..=1.0).contains(&u)));
            let mean = xs.iter().sum::<f64>() / n as f64;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            let want = integrate_adaptive(|u| u * bulk_density(s, u), 1e-2, 1.0, 1e-12, 1e-12).value / m.rate();
            assert!((mean - want).abs() < 4.0 * sd / (n as f64).sqrt(), "two_s={s}: {mean} vs {want}");
        }
        let m = JumpMeasure::reservoir_input(1e-2).unwrap();
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&u| u >= 1e-2));
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let want = (-1e-2f64).exp() / m.rate();
        assert!((mean - want).abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn generic_finite_atoms() {
        let m = JumpMeasure::generic_finite(vec![(0.5, 2.0), (1.0, 1.0)]).unwrap();
        assert_eq!(m.rate(), 3.0);
        let mut rng = RngStream::new(5, 5);
        let halves = (0..30_000).filter(|_| m.sample(&mut rng) == 0.5).count() as f64 / 30_000.0;
        assert!((halves - 2.0 / 3.0).abs() < 0.015);
    }
}
