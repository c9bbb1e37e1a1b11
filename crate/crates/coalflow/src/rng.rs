//! Deterministic, stream-splittable randomness and the exact samplers
//! every simulator consumes.
//!
//! A [`RngStream`] is addressed by `(seed, stream_id)`: replicate `k` of an
//! experiment runs on `RngStream::new(seed, k)`, so replicates can be
//! generated in parallel, in any order, and still reproduce byte-for-byte.
//! The generator is counter-based (ChaCha), so constructing stream `k`
//! costs nothing beyond keying the cipher.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// Splitmix64 finalizer, used to derive substream seeds.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// One independent pseudo-random sequence, addressed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    /// Stream `stream_id` of the family keyed by `seed`. The same pair
    /// always yields the same draw sequence; distinct ids yield
    /// statistically independent sequences.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derive an independent child stream. Children of the same parent
    /// with distinct labels are independent of each other and of the
    /// parent's own draws; the derivation does not consume parent state.
    pub fn substream(&self, label: u64) -> RngStream {
        let child_seed = mix64(self.seed ^ mix64(self.stream_id ^ 0xA0761D6478BD642F));
        RngStream::new(child_seed, mix64(label))
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Centered Gaussian with the given standard deviation (not variance);
    /// hot-path helper for pre-validated simulation loops.
    pub fn centered_gaussian(&mut self, sd: f64) -> f64 {
        sd * self.standard_normal()
    }

    /// Draw from `N(mean, variance)`. Zero variance returns `mean` exactly.
    pub fn draw_gaussian(&mut self, mean: f64, variance: f64) -> Result<f64> {
        if !variance.is_finite() || variance < 0.0 {
            return Err(Error::parameter(format!(
                "gaussian variance must be finite and >= 0, got {variance}"
            )));
        }
        if variance == 0.0 {
            return Ok(mean);
        }
        let normal = Normal::new(mean, variance.sqrt())
            .map_err(|e| Error::parameter(format!("gaussian: {e}")))?;
        Ok(normal.sample(&mut self.rng))
    }

    /// Draw from `Poisson(rate)`. Zero rate returns 0.
    pub fn draw_poisson(&mut self, rate: f64) -> Result<u64> {
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::parameter(format!(
                "poisson rate must be finite and >= 0, got {rate}"
            )));
        }
        if rate == 0.0 {
            return Ok(0);
        }
        let poisson = Poisson::new(rate).map_err(|e| Error::parameter(format!("poisson: {e}")))?;
        Ok(poisson.sample(&mut self.rng) as u64)
    }

    /// Draw from `Gamma(shape, scale)`.
    pub fn draw_gamma(&mut self, shape: f64, scale: f64) -> Result<f64> {
        if !(shape > 0.0) || !(scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
            return Err(Error::parameter(format!(
                "gamma parameters must be positive and finite, got shape={shape} scale={scale}"
            )));
        }
        let gamma =
            Gamma::new(shape, scale).map_err(|e| Error::parameter(format!("gamma: {e}")))?;
        Ok(gamma.sample(&mut self.rng))
    }

    /// Exponential draw with the given mean.
    pub fn draw_exponential(&mut self, mean: f64) -> Result<f64> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::parameter(format!(
                "exponential mean must be positive and finite, got {mean}"
            )));
        }
        let exp = Exp::new(1.0 / mean).map_err(|e| Error::parameter(format!("exp: {e}")))?;
        Ok(exp.sample(&mut self.rng))
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.rng.random_range(0..n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_streams_replay() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..1000 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
        let mut c = a.substream(3);
        let mut d = b.substream(3);
        for _ in 0..100 {
            assert_eq!(c.standard_normal().to_bits(), d.standard_normal().to_bits());
        }
    }

    #[test]
    fn degenerate_gaussian_returns_mean() {
        let mut s = RngStream::new(1, 0);
        assert_eq!(s.draw_gaussian(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(s.draw_gaussian(3.25, 0.0).unwrap(), 3.25);
    }

    #[test]
    fn negative_variance_rejected() {
        let mut s = RngStream::new(1, 0);
        assert!(s.draw_gaussian(0.0, -1.0).is_err());
        assert!(s.draw_poisson(-0.5).is_err());
        assert!(s.draw_gamma(0.0, 1.0).is_err());
        assert!(s.draw_gamma(1.0, -2.0).is_err());
    }

    #[test]
    fn gaussian_moments_match_clt_bounds() {
        let n = 1_000_000usize;
        let mut s = RngStream::new(2024, 0);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += s.draw_gaussian(0.0, 1.0).unwrap();
        }
        // CLT bound 4/sqrt(N)
        assert!((sum / n as f64).abs() < 4.0 / (n as f64).sqrt());

        let mut sum2 = 0.0;
        let mut sum_v = 0.0;
        for _ in 0..n {
            let x = s.draw_gaussian(0.0, 2.0).unwrap();
            sum_v += x;
            sum2 += x * x;
        }
        let mean = sum_v / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((var - 2.0).abs() < 0.02 * 2.0, "var = {var}");
    }

    #[test]
    fn poisson_zero_rate_and_moments() {
        let mut s = RngStream::new(5, 1);
        assert_eq!(s.draw_poisson(0.0).unwrap(), 0);

        let n = 100_000usize;
        let mut sum = 0u64;
        let mut sum2 = 0u64;
        for _ in 0..n {
            let k = s.draw_poisson(4.0).unwrap();
            sum += k;
            sum2 += k * k;
        }
        let mean = sum as f64 / n as f64;
        let var = sum2 as f64 / n as f64 - mean * mean;
        assert!(
            (mean - 4.0).abs() < 3.0 * (4.0f64 / n as f64).sqrt(),
            "mean = {mean}"
        );
        assert!(
            (var / mean - 1.0).abs() < 0.05,
            "dispersion = {}",
            var / mean
        );
    }

    #[test]
    fn gamma_means() {
        let n = 100_000usize;
        let mut s = RngStream::new(11, 2);

        // shape 1, scale theta is Exponential(mean theta)
        let theta = 1.7;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += s.draw_gamma(1.0, theta).unwrap();
        }
        let mean = sum / n as f64;
        let se = theta / (n as f64).sqrt(); // sd of Exp(mean theta) is theta
        assert!((mean - theta).abs() < 3.0 * se, "mean = {mean}");

        // shape 3, scale 2: mean 6, variance shape*scale^2 = 12
        let mut sum = 0.0;
        for _ in 0..n {
            sum += s.draw_gamma(3.0, 2.0).unwrap();
        }
        let mean = sum / n as f64;
        let se = 12.0f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 6.0).abs() < 3.0 * se, "mean = {mean}");
    }

    #[test]
    fn gamma_shape_two_tail_matches_closed_form() {
        // Gamma(2, 1) has P(X > x) = (1 + x) e^{-x}
        let n = 100_000;
        let mut s = RngStream::new(13, 0);
        let draws: Vec<f64> = (0..n).map(|_| s.draw_gamma(2.0, 1.0).unwrap()).collect();
        let ks = crate::stats::ks_one_sample(&draws, |x| {
            if x <= 0.0 {
                0.0
            } else {
                1.0 - (1.0 + x) * (-x).exp()
            }
        })
        .unwrap();
        assert!(ks.statistic < 0.01, "KS = {}", ks.statistic);
    }

    #[test]
    fn exponential_mean() {
        let n = 100_000usize;
        let mut s = RngStream::new(12, 0);
        let mut sum = 0.0;
        for _ in 0..n {
            sum += s.draw_exponential(0.25).unwrap();
        }
        let mean = sum / n as f64;
        assert!((mean - 0.25).abs() < 3.0 * 0.25 / (n as f64).sqrt());
    }

    #[test]
    fn cross_stream_correlation_is_noise() {
        let n = 100_000usize;
        let mut a = RngStream::new(99, 0);
        let mut b = RngStream::new(99, 1);
        let mut sum_ab = 0.0;
        for _ in 0..n {
            let x = a.standard_normal();
            let y = b.standard_normal();
            sum_ab += x * y;
        }
        let corr = sum_ab / n as f64;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }
}
