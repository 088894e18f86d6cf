use rand_distr::{Binomial, Distribution, Gamma, Poisson};

use crate::error::{check_shape, Error, Result};
use crate::rng::RngStream;
use crate::special::{beta_reg, gamma_lr, ln_beta, ln_factorial, ln_gamma};

/// Density of Beta(2s, 2s) at `u`; zero outside `[0, 1]`.
pub fn beta_pdf(two_s: f64, u: f64) -> Result<f64> {
    check_shape(two_s)?;
    if !(0.0..=1.0).contains(&u) {
        return Ok(0.0);
    }
    if two_s == 1.0 {
        return Ok(1.0);
    }
    let ln_b = ln_beta(two_s, two_s);
    if u == 0.0 || u == 1.0 {
        return Ok(if two_s == 1.0 {
            1.0
        } else if two_s > 1.0 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    Ok(((two_s - 1.0) * (u.ln() + (-u).ln_1p()) - ln_b).exp())
}

/// Regularized incomplete Beta: CDF of Beta(p, q) at `x`.
pub fn beta_cdf(p: f64, q: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta_reg(p, q, x)
    }
}

/// Beta(2s, 2s) via the ratio of two Gamma(2s) variates.
#[derive(Debug, Clone, Copy)]
pub struct BetaSampler {
    gamma: Gamma<f64>,
}

impl BetaSampler {
    pub fn new(two_s: f64) -> Result<Self> {
        check_shape(two_s)?;
        Ok(BetaSampler { gamma: Gamma::new(two_s, 1.0).map_err(|_| Error::BadShape(two_s))? })
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        loop {
            let x = self.gamma.sample(rng);
            let y = self.gamma.sample(rng);
            let s = x + y;
            if s > 0.0 {
                return x / s;
            }
        }
    }
}

pub fn beta_sample(two_s: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(BetaSampler::new(two_s)?.sample(rng))
}

/// Beta-binomial pmf with parameters `(n, 2s, 2s)`.
///
/// For `n ≤ 150` the value is an interleaved product of ratios of order
/// one, which is accurate to a few ulps; larger `n` use log-Gamma.
pub fn beta_binomial_pmf(n: u64, k: u64, two_s: f64) -> Result<f64> {
    check_shape(two_s)?;
    if k > n {
        return Err(Error::OutOfRange { k, n });
    }
    if n <= 150 {
        let four_s = 2.0 * two_s;
        let mut p = 1.0;
        for j in 0..n {
            let top = if j < k { two_s + j as f64 } else { two_s + (j - k) as f64 };
            p *= top / (four_s + j as f64);
        }
        let kk = k.min(n - k);
        for j in 0..kk {
            p *= (n - j) as f64 / (j + 1) as f64;
        }
        return Ok(p);
    }
    let (nf, kf) = (n as f64, k as f64);
    let ln_p = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k) + ln_beta(kf + two_s, nf - kf + two_s)
        - ln_beta(two_s, two_s);
    Ok(ln_p.exp())
}

/// Exact Beta-then-Binomial draw.
pub fn beta_binomial_sample(n: u64, two_s: f64, rng: &mut RngStream) -> Result<u64> {
    let p = beta_sample(two_s, rng)?;
    Ok(binomial_draw(n, p, rng))
}

pub(crate) fn binomial_draw(n: u64, p: f64, rng: &mut RngStream) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).map(|b| b.sample(rng)).unwrap_or(0)
}

/// Gamma law with shape `2s` and scale `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaLaw {
    pub shape: f64,
    pub scale: f64,
}

impl GammaLaw {
    pub fn new(two_s: f64, theta: f64) -> Result<Self> {
        check_shape(two_s)?;
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::BadScale(theta));
        }
        Ok(GammaLaw { shape: two_s, scale: theta })
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x == 0.0 {
            return if self.shape == 1.0 {
                1.0 / self.scale
            } else if self.shape > 1.0 {
                0.0
            } else {
                f64::INFINITY
            };
        }
        ((self.shape - 1.0) * x.ln() - x / self.scale - ln_gamma(self.shape) - self.shape * self.scale.ln()).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            gamma_lr(self.shape, x / self.scale)
        }
    }

    /// `E[X^k] = θ^k Γ(2s+k)/Γ(2s)`.
    pub fn moment(&self, k: u32) -> f64 {
        (k as f64 * self.scale.ln() + ln_gamma(self.shape + k as f64) - ln_gamma(self.shape)).exp()
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        gamma_sample(self.shape, self.scale, rng)
    }
}

/// Gamma(shape, scale) draw; scale 0 gives 0.
pub fn gamma_sample(shape: f64, scale: f64, rng: &mut RngStream) -> f64 {
    if scale <= 0.0 {
        return 0.0;
    }
    Gamma::new(shape, scale).map(|g| g.sample(rng)).unwrap_or(0.0)
}

/// Normalized discrete Gamma pmf
/// `ν_θ(n) = (1/n!) (θ/(1+θ))^n Γ(2s+n)/Γ(2s) (1+θ)^{-2s}`.
pub fn discrete_gamma_pmf(n: u64, theta: f64, two_s: f64) -> Result<f64> {
    check_shape(two_s)?;
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::BadScale(theta));
    }
    if theta == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let nf = n as f64;
    let ln_p = ln_gamma(two_s + nf) - ln_gamma(two_s) - ln_factorial(n) + nf * (theta / (1.0 + theta)).ln()
        - two_s * theta.ln_1p();
    Ok(ln_p.exp())
}

/// Poisson–Gamma mixture draw from the discrete Gamma law.
pub fn discrete_gamma_sample(theta: f64, two_s: f64, rng: &mut RngStream) -> Result<u64> {
    check_shape(two_s)?;
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::BadScale(theta));
    }
    let lambda = gamma_sample(two_s, theta, rng);
    poisson_sample(lambda, rng)
}

pub fn poisson_pmf(n: u64, z: f64) -> Result<f64> {
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::InvalidParameter(format!("Poisson mean must be nonnegative, got {z}")));
    }
    if z == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    if n <= 100 && z <= 100.0 {
        return Ok((1..=n).fold((-z).exp(), |p, j| p * z / j as f64));
    }
    Ok((n as f64 * z.ln() - z - ln_factorial(n)).exp())
}

pub fn poisson_sample(z: f64, rng: &mut RngStream) -> Result<u64> {
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::InvalidParameter(format!("Poisson mean must be nonnegative, got {z}")));
    }
    if z == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(z).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(d.sample(rng) as u64)
}

/// Transfer weights `ℳ(k, n)`, `k = 1..=n`, of the discrete harmonic model.
pub fn discrete_harmonic_weights(n: u64, two_s: f64) -> Result<Vec<f64>> {
    check_shape(two_s)?;
    let nf = n as f64;
    let head = ln_gamma(nf + 1.0) - ln_gamma(nf + two_s);
    Ok((1..=n)
        .map(|k| {
            let kf = k as f64;
            (head + ln_gamma(nf - kf + two_s) - ln_gamma(nf - kf + 1.0)).exp() / kf
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_adaptive, integrate_to_infinity};
    use crate::special::binomial;
    use approx::assert_relative_eq;

    #[test]
    fn beta_pdf_values() {
        assert_eq!(beta_pdf(1.0, 0.3).unwrap(), 1.0);
        assert_relative_eq!(beta_pdf(2.0, 0.5).unwrap(), 1.5, epsilon = 1e-14);
        for &s in &[0.25, 0.7, 3.0] {
            assert_relative_eq!(beta_pdf(s, 0.2).unwrap(), beta_pdf(s, 0.8).unwrap(), max_relative = 1e-14);
        }
        assert_eq!(beta_pdf(0.0, 0.5), Err(Error::BadShape(0.0)));
    }

    #[test]
    fn densities_integrate_to_one() {
        for &s in &[0.5, 1.0, 2.0, 3.5] {
            let r = integrate_adaptive(|u| beta_pdf(s, u).unwrap(), 0.0, 1.0, 1e-11, 1e-11);
            assert_relative_eq!(r.value, 1.0, epsilon = 1e-8);
            let g = GammaLaw::new(s, 1.7).unwrap();
            let r = integrate_to_infinity(|x| g.pdf(x), 0.0, 1e-11, 1e-11);
            assert_relative_eq!(r.value, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn beta_binomial_values() {
        for k in 0..=2 {
            assert_relative_eq!(beta_binomial_pmf(2, k, 1.0).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(beta_binomial_pmf(0, 0, 0.3).unwrap(), 1.0);
        assert!(matches!(beta_binomial_pmf(2, 3, 1.0), Err(Error::OutOfRange { .. })));
        for &s in &[0.25, 2.0] {
            for k in 0..=9 {
                assert_relative_eq!(
                    beta_binomial_pmf(9, k, s).unwrap(),
                    beta_binomial_pmf(9, 9 - k, s).unwrap(),
                    max_relative = 1e-14
                );
            }
        }
    }

    #[test]
    fn beta_binomial_product_matches_log_gamma() {
        for &s in &[0.25, 1.0, 3.5] {
            for &n in &[10u64, 60, 150] {
                for k in [0, 1, n / 3, n / 2, n] {
                    let direct = beta_binomial_pmf(n, k, s).unwrap();
                    let (nf, kf) = (n as f64, k as f64);
                    let via_log = (binomial(n, k).ln() + ln_beta(kf + s, nf - kf + s) - ln_beta(s, s)).exp();
                    assert_relative_eq!(direct, via_log, max_relative = 1e-11);
                }
            }
        }
    }

    #[test]
    fn gamma_values() {
        let g = GammaLaw::new(1.0, 2.0).unwrap();
        assert_relative_eq!(g.pdf(0.7), (-0.35f64).exp() / 2.0, epsilon = 1e-15);
        assert_eq!(g.pdf(0.0), 0.5);
        assert_eq!(GammaLaw::new(2.0, 2.0).unwrap().pdf(0.0), 0.0);
        assert_eq!(GammaLaw::new(1.0, 0.0), Err(Error::BadScale(0.0)));
        assert_relative_eq!(g.cdf(2.0), 1.0 - (-1.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn discrete_gamma_values() {
        assert_relative_eq!(discrete_gamma_pmf(0, 1.0, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        for n in 0..20 {
            let geom = 0.4f64.powi(n as i32) * 0.6;
            assert_relative_eq!(discrete_gamma_pmf(n, 2.0 / 3.0, 1.0).unwrap(), geom, max_relative = 1e-12);
        }
        for &s in &[0.25, 1.0, 4.0] {
            for &theta in &[0.1, 1.0, 3.0] {
                let mass: f64 = (0..=400).map(|n| discrete_gamma_pmf(n, theta, s).unwrap()).sum();
                let mean: f64 = (0..=200).map(|n| n as f64 * discrete_gamma_pmf(n, theta, s).unwrap()).sum();
                assert_relative_eq!(mass, 1.0, epsilon = 1e-10);
                assert_relative_eq!(mean, s * theta, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn poisson_values() {
        assert_relative_eq!(poisson_pmf(0, 1.0).unwrap(), (-1.0f64).exp(), epsilon = 1e-16);
        assert_eq!(poisson_pmf(0, 0.0).unwrap(), 1.0);
        let mut rng = RngStream::new(1, 0);
        assert_eq!(poisson_sample(0.0, &mut rng).unwrap(), 0);
        let mass: f64 = (0..=60).map(|n| poisson_pmf(n, 5.0).unwrap()).sum();
        assert_relative_eq!(mass, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn harmonic_weights() {
        let w = discrete_harmonic_weights(5, 1.0).unwrap();
        for (k, x) in w.iter().enumerate() {
            assert_relative_eq!(*x, 1.0 / (k + 1) as f64, max_relative = 1e-13);
        }
        assert_relative_eq!(discrete_harmonic_weights(3, 2.0).unwrap()[1], 0.25, max_relative = 1e-13);
        assert!(discrete_harmonic_weights(0, 1.0).unwrap().is_empty());
    }

    #[test]
    fn harmonic_weights_are_thinned_bulk_moments() {
        // ℳ(k, n) = C(n, k) ∫ u^k (1-u)^{n-k} u^{-1} (1-u)^{2s-1} du
        for &s in &[0.5, 1.0, 2.5] {
            for n in 1..12u64 {
                let w = discrete_harmonic_weights(n, s).unwrap();
                for k in 1..=n {
                    let (nf, kf) = (n as f64, k as f64);
                    let oracle = binomial(n, k) * ln_beta(kf, nf - kf + s).exp();
                    assert_relative_eq!(w[k as usize - 1], oracle, max_relative = 1e-12);
                }
            }
        }
    }
}
