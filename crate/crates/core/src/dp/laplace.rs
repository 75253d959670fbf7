//! Laplace mechanism.
//!
//! Draws use the inverse CDF: for `u ~ U(-1/2, 1/2)`,
//!
//! ```text
//! x = -b * sign(u) * ln(1 - 2|u|)  ~  Laplace(0, b)
//! ```
//!
//! so a seeded source yields the same noise for the same draw index.

use rand::Rng;

use crate::error::{Error, Result};

/// A centered Laplace distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceNoise {
    scale: f64,
}

impl LaplaceNoise {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Calibration(format!(
                "Laplace scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self { scale })
    }

    /// Scale `sensitivity / epsilon`, the calibration that makes `f + noise` epsilon-DP.
    pub fn calibrated(sensitivity: f64, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if !(sensitivity.is_finite() && sensitivity > 0.0) {
            return Err(Error::Calibration(format!(
                "sensitivity must be positive and finite, got {sensitivity}"
            )));
        }
        Self::new(sensitivity / epsilon)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn std_dev(&self) -> f64 {
        self.scale * std::f64::consts::SQRT_2
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.5 * (x / self.scale).exp()
        } else {
            1.0 - 0.5 * (-x / self.scale).exp()
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // u in the open interval (-1/2, 1/2); 0.0 from gen() would map to -1/2.
        let u = loop {
            let v: f64 = rng.gen();
            if v > 0.0 {
                break v - 0.5;
            }
        };
        -self.scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::Calibration(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )))
    }
}

/// One draw from `Laplace(0, scale)`.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    Ok(LaplaceNoise::new(scale)?.sample(rng))
}

/// Adds independent `Laplace(0, sensitivity / epsilon)` noise to every entry of `values`.
pub fn laplace_mechanism<R: Rng + ?Sized>(
    values: &[f64],
    sensitivity: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let noise = LaplaceNoise::calibrated(sensitivity, epsilon)?;
    Ok(values.iter().map(|v| v + noise.sample(rng)).collect())
}

/// l1-sensitivity of a `channels x length` encoder output whose entries lie in `[0, 1]`.
pub fn sigmoid_encoder_sensitivity(channels: usize, length: usize) -> Result<f64> {
    if channels == 0 || length == 0 {
        return Err(Error::Calibration(format!(
            "latent dimensions must be positive, got {channels}x{length}"
        )));
    }
    Ok((channels * length) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::NoiseRng;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn same_seed_same_draw() {
        let a = sample_laplace(1.0, &mut NoiseRng::at_draw(11, 0, 42)).unwrap();
        let b = sample_laplace(1.0, &mut NoiseRng::at_draw(11, 0, 42)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn rejects_degenerate_scale() {
        let mut rng = NoiseRng::seeded(0);
        assert!(matches!(sample_laplace(0.0, &mut rng), Err(Error::Calibration(_))));
        assert!(sample_laplace(-1.0, &mut rng).is_err());
        assert!(sample_laplace(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn unit_scale_moments() {
        let mut rng = NoiseRng::seeded(2024);
        let noise = LaplaceNoise::new(1.0).unwrap();
        let xs = noise.sample_n(1_000_000, &mut rng);
        let (mean, var) = mean_var(&xs);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 2.0).abs() < 0.04, "var {var}");
    }

    #[test]
    fn mechanism_calibration() {
        assert_eq!(LaplaceNoise::calibrated(2.0, 1.0).unwrap().scale(), 2.0);
        assert_eq!(LaplaceNoise::calibrated(800.0, 100.0).unwrap().scale(), 8.0);

        let mut rng = NoiseRng::seeded(5);
        let out = laplace_mechanism(&[1.0, 2.0, 3.0, 4.0, 5.0], 2.0, 1.0, &mut rng).unwrap();
        assert_eq!(out.len(), 5);

        let zeros = vec![0.0; 100_000];
        let noisy = laplace_mechanism(&zeros, 800.0, 100.0, &mut rng).unwrap();
        let (_, var) = mean_var(&noisy);
        let expected = 8.0 * 2f64.sqrt();
        assert!((var.sqrt() / expected - 1.0).abs() < 0.03);
    }

    #[test]
    fn mechanism_domain_errors() {
        let mut rng = NoiseRng::seeded(0);
        assert!(laplace_mechanism(&[1.0], 0.0, 1.0, &mut rng).is_err());
        assert!(laplace_mechanism(&[1.0], 1.0, 0.0, &mut rng).is_err());
        assert!(laplace_mechanism(&[1.0], 1.0, -2.0, &mut rng).is_err());
    }

    #[test]
    fn mechanism_is_pure_under_seed() {
        let v = [0.5, -1.0, 3.25];
        let a = laplace_mechanism(&v, 3.0, 0.7, &mut NoiseRng::seeded(17)).unwrap();
        let b = laplace_mechanism(&v, 3.0, 0.7, &mut NoiseRng::seeded(17)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn encoder_sensitivity() {
        assert_eq!(sigmoid_encoder_sensitivity(8, 100).unwrap(), 800.0);
        assert_eq!(sigmoid_encoder_sensitivity(1, 1).unwrap(), 1.0);
        assert_eq!(sigmoid_encoder_sensitivity(4, 743).unwrap(), 2972.0);
        assert!(sigmoid_encoder_sensitivity(0, 5).is_err());
        assert!(sigmoid_encoder_sensitivity(5, 0).is_err());
    }
}
