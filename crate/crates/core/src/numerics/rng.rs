use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::linalg::CVector;
use crate::error::{Error, Result};

/// Seeded ChaCha stream that can be split into labelled substreams.
///
/// A substream depends only on the parent's seed and the key, never on how
/// many values the parent has produced, so parallel work keyed by realization
/// index reproduces bit-for-bit regardless of scheduling.
#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn substream(&self, label: &str, index: u64) -> SimRng {
        let h = splitmix64(self.seed ^ fnv1a(label.as_bytes()));
        SimRng::new(splitmix64(h ^ splitmix64(index)))
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// One `CN(0, variance)` draw.
#[inline]
pub fn circular_gaussian(rng: &mut SimRng, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re = rng.standard_normal();
    let im = rng.standard_normal();
    Complex64::new(s * re, s * im)
}

/// I.i.d. `CN(0, variance)` entries: real and imaginary parts each carry half the variance.
pub fn sample_circular_gaussian(rng: &mut SimRng, len: usize, variance: f64) -> Result<CVector> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::Parameter(format!("variance must be finite and non-negative, got {variance}")));
    }
    Ok((0..len).map(|_| circular_gaussian(rng, variance)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_gives_zeros() {
        let mut rng = SimRng::new(1);
        let v = sample_circular_gaussian(&mut rng, 16, 0.0).unwrap();
        assert!(v.iter().all(|z| z.re == 0.0 && z.im == 0.0));
    }

    #[test]
    fn negative_variance_is_rejected() {
        let mut rng = SimRng::new(1);
        assert!(matches!(sample_circular_gaussian(&mut rng, 4, -1.0), Err(Error::Parameter(_))));
        assert!(sample_circular_gaussian(&mut rng, 4, f64::NAN).is_err());
    }

    #[test]
    fn unit_variance_law_of_large_numbers() {
        let mut rng = SimRng::new(2024);
        let v = sample_circular_gaussian(&mut rng, 100_000, 1.0).unwrap();
        let n = v.len() as f64;
        let power = v.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        let re_power = v.iter().map(|z| z.re * z.re).sum::<f64>() / n;
        assert!((power - 1.0).abs() < 0.02, "mean |x|^2 = {power}");
        assert!((re_power - 0.5).abs() < 0.01, "mean re^2 = {re_power}");
    }

    #[test]
    fn same_seed_same_stream() {
        let a = sample_circular_gaussian(&mut SimRng::new(77), 32, 2.0).unwrap();
        let b = sample_circular_gaussian(&mut SimRng::new(77), 32, 2.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn substreams_ignore_parent_position() {
        let mut parent = SimRng::new(9);
        let before = parent.substream("mc", 3).next_u64();
        parent.next_u64();
        let after = parent.substream("mc", 3).next_u64();
        assert_eq!(before, after);
        assert_ne!(before, parent.substream("mc", 4).next_u64());
        assert_ne!(before, parent.substream("nsga2", 3).next_u64());
    }

    #[test]
    fn differently_keyed_substreams_are_uncorrelated() {
        let root = SimRng::new(123);
        let n = 100_000;
        let mut a = root.substream("alpha", 0);
        let mut b = root.substream("alpha", 1);
        let mut c = root.substream("beta", 0);
        let xs: Vec<f64> = (0..n).map(|_| a.standard_normal()).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.standard_normal()).collect();
        let zs: Vec<f64> = (0..n).map(|_| c.standard_normal()).collect();
        assert!(correlation(&xs, &ys).abs() < 0.02);
        assert!(correlation(&xs, &zs).abs() < 0.02);
        assert!(correlation(&ys, &zs).abs() < 0.02);
    }

    fn correlation(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        sxy / (sxx * syy).sqrt()
    }
}
