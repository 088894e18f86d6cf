use std::collections::BTreeMap;

use rand_distr::{Distribution, Gamma};

use crate::error::{check_shape, Error, Result};
use crate::rng::RngStream;
use crate::special::{ln_gamma, pochhammer, stable_sum};

/// Default cap on the number of monomials in an exact moment expansion.
pub const DEFAULT_TERM_BUDGET: usize = 2_000_000;

/// Ordered Dirichlet law of `θ_L ≤ θ_1 ≤ … ≤ θ_N ≤ θ_R` with increment
/// exponents `2s - 1`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MixingLaw {
    pub n_sites: usize,
    pub two_s: f64,
    pub theta_left: f64,
    pub theta_right: f64,
}

impl MixingLaw {
    pub fn new(n_sites: usize, two_s: f64, theta_left: f64, theta_right: f64) -> Result<Self> {
        check_shape(two_s)?;
        if n_sites == 0 {
            return Err(Error::InvalidParameter("mixing law needs at least one site".into()));
        }
        if !(theta_left.is_finite() && theta_right.is_finite() && theta_left <= theta_right) {
            return Err(Error::InvalidParameter(format!(
                "need finite theta_left <= theta_right, got [{theta_left}, {theta_right}]"
            )));
        }
        Ok(MixingLaw { n_sites, two_s, theta_left, theta_right })
    }

    pub fn width(&self) -> f64 {
        self.theta_right - self.theta_left
    }

    pub fn is_degenerate(&self) -> bool {
        self.width() == 0.0
    }

    /// `ln C(N, 2s, θ_L, θ_R)`.
    pub fn log_normalizer(&self) -> f64 {
        let n1 = (self.n_sites + 1) as f64;
        ln_gamma(self.two_s * n1) - n1 * ln_gamma(self.two_s) - (self.two_s * n1 - 1.0) * self.width().ln()
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        if self.is_degenerate() {
            return vec![self.theta_left; self.n_sites];
        }
        let g = Gamma::new(self.two_s, 1.0).expect("validated shape");
        let incs: Vec<f64> = loop {
            let v: Vec<f64> = (0..=self.n_sites).map(|_| g.sample(rng)).collect();
            if v.iter().any(|&x| x > 0.0) {
                break v;
            }
        };
        let total: f64 = incs.iter().sum();
        let mut acc = 0.0;
        incs[..self.n_sites]
            .iter()
            .map(|x| {
                acc += x;
                (self.theta_left + self.width() * (acc / total)).clamp(self.theta_left, self.theta_right)
            })
            .collect()
    }

    /// Log-density on the ordered simplex, `-∞` outside.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        self.try_log_density(theta).unwrap_or(f64::NEG_INFINITY)
    }

    /// Log-density, flagging points outside the ordered simplex.
    pub fn try_log_density(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.n_sites {
            return Err(Error::InvalidParameter(format!("expected {} coordinates", self.n_sites)));
        }
        let mut prev = self.theta_left;
        let mut acc = self.log_normalizer();
        for &t in theta.iter().chain(std::iter::once(&self.theta_right)) {
            if t.is_nan() || t < prev {
                return Err(Error::NotOrdered);
            }
            acc += (self.two_s - 1.0) * (t - prev).ln();
            prev = t;
        }
        Ok(acc)
    }

    /// Exact `E[∏ θ_i^{ξ_i}]` by expanding into Dirichlet increment monomials.
    pub fn moment(&self, xi: &[u32], term_budget: usize) -> Result<f64> {
        if xi.len() != self.n_sites {
            return Err(Error::InvalidParameter(format!("expected {} exponents", self.n_sites)));
        }
        if self.is_degenerate() {
            return Ok(self.theta_left.powi(xi.iter().sum::<u32>() as i32));
        }
        let n = self.n_sites;
        let (lo, width) = (self.theta_left, self.width());
        // polynomial in the first N increments, keyed by exponent vectors
        let mut poly: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        poly.insert(vec![0u8; n], 1.0);
        for (site, &power) in xi.iter().enumerate() {
            for _ in 0..power {
                let mut next: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
                for (mono, c) in &poly {
                    if lo != 0.0 {
                        *next.entry(mono.clone()).or_insert(0.0) += c * lo;
                    }
                    for j in 0..=site {
                        let mut m = mono.clone();
                        m[j] += 1;
                        *next.entry(m).or_insert(0.0) += c * width;
                    }
                }
                if next.len() > term_budget {
                    return Err(Error::TermBudget(term_budget));
                }
                poly = next;
            }
        }
        let alpha0 = self.two_s * (n + 1) as f64;
        let terms = poly.iter().map(|(mono, c)| {
            let total: u32 = mono.iter().map(|&a| a as u32).sum();
            let num: f64 = mono.iter().map(|&a| pochhammer(self.two_s, a as u32)).product();
            c * num / pochhammer(alpha0, total)
        });
        Ok(stable_sum(terms))
    }
}

pub fn ordered_dirichlet_sample(law: &MixingLaw, rng: &mut RngStream) -> Vec<f64> {
    law.sample(rng)
}

pub fn ordered_dirichlet_logdensity(law: &MixingLaw, theta: &[f64]) -> f64 {
    law.log_density(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normalizer_and_density() {
        let law = MixingLaw::new(1, 1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(law.log_normalizer(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(law.log_density(&[0.3]), 0.0, epsilon = 1e-15);
        assert_eq!(law.try_log_density(&[1.3]), Err(Error::NotOrdered));
        let law2 = MixingLaw::new(2, 1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(law2.log_density(&[0.2, 0.6]), 2f64.ln(), epsilon = 1e-14);
        assert_eq!(law2.log_density(&[0.6, 0.2]), f64::NEG_INFINITY);
    }

    #[test]
    fn order_statistic_moments() {
        let law = MixingLaw::new(2, 1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(law.moment(&[1, 0], 1000).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(law.moment(&[0, 1], 1000).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(law.moment(&[1, 1], 1000).unwrap(), 0.25, epsilon = 1e-15);
        let one = MixingLaw::new(1, 1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(one.moment(&[2], 1000).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        for n in 1..6 {
            let law = MixingLaw::new(n, 1.0, 0.0, 1.0).unwrap();
            for i in 0..n {
                let mut xi = vec![0; n];
                xi[i] = 1;
                assert_relative_eq!(law.moment(&xi, 1000).unwrap(), (i + 1) as f64 / (n + 1) as f64, epsilon = 1e-14);
            }
            assert_eq!(law.moment(&vec![0; n], 10).unwrap(), 1.0);
        }
    }

    #[test]
    fn shifted_interval_moments() {
        // N = 1 is Beta(2s, 2s) on [θ_L, θ_R]: mean midpoint, variance L²/(4(4s+1))
        let law = MixingLaw::new(1, 2.0, 1.0, 3.0).unwrap();
        assert_relative_eq!(law.moment(&[1], 100).unwrap(), 2.0, epsilon = 1e-14);
        let var = law.moment(&[2], 100).unwrap() - 4.0;
        assert_relative_eq!(var, 4.0 / (4.0 * 5.0), epsilon = 1e-13);
    }

    #[test]
    fn term_budget_enforced() {
        let law = MixingLaw::new(6, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(law.moment(&[2, 2, 2, 2, 0, 0], 10), Err(Error::TermBudget(10)));
    }

    #[test]
    fn degenerate_interval() {
        let law = MixingLaw::new(3, 1.0, 2.0, 2.0).unwrap();
        let mut rng = RngStream::new(1, 1);
        assert_eq!(law.sample(&mut rng), vec![2.0; 3]);
        assert_eq!(law.moment(&[1, 1, 0], 10).unwrap(), 4.0);
    }

    #[test]
    fn samples_sorted_inside() {
        let law = MixingLaw::new(5, 0.25, -1.0, 2.0).unwrap();
        let mut rng = RngStream::new(3, 9);
        for _ in 0..2000 {
            let t = law.sample(&mut rng);
            assert!(t.windows(2).all(|w| w[0] <= w[1]));
            assert!(t.iter().all(|&x| (-1.0..=2.0).contains(&x)));
        }
    }
}
