//! Binary symmetric channel and the noise bookkeeping of the active model.

use rand::distributions::{Bernoulli, Distribution};
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::gf2::BitVector;

/// Name and version of the generator behind every seeded stream, echoed in
/// result files.
pub const RNG_ALGORITHM: &str = "ChaCha20Rng (rand_chacha 0.3, stream-per-substream)";

/// Crossover probability `p`, restricted to `[0, 0.5)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ChannelParams {
    p: f64,
}

impl ChannelParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "crossover probability must lie in [0, 0.5), got {p}"
            )));
        }
        Ok(ChannelParams { p })
    }

    pub fn noiseless() -> Self {
        ChannelParams { p: 0.0 }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `log2 P(V = v)` for a pattern of length `n` and weight `w`.
    pub fn log_prob_weight(&self, n: usize, w: usize) -> f64 {
        assert!(w <= n);
        if self.p == 0.0 {
            return if w == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        w as f64 * self.p.log2() + (n - w) as f64 * (1.0 - self.p).log2()
    }

    /// `P(V = v)` by weight, for all weights `0..=n`.
    pub fn prob_by_weight(&self, n: usize) -> Vec<f64> {
        (0..=n)
            .map(|w| self.p.powi(w as i32) * (1.0 - self.p).powi((n - w) as i32))
            .collect()
    }
}

/// The three noise vectors seen by the receiver: channel noise `v`, the
/// adversary's injection `v_star`, and their sum `v_prime`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoiseRecord {
    v: BitVector,
    v_star: BitVector,
    v_prime: BitVector,
}

impl NoiseRecord {
    pub fn new(v: BitVector, v_star: BitVector) -> Result<Self> {
        let v_prime = v.try_xor(&v_star)?;
        Ok(NoiseRecord { v, v_star, v_prime })
    }

    pub fn v(&self) -> &BitVector {
        &self.v
    }

    pub fn v_star(&self) -> &BitVector {
        &self.v_star
    }

    pub fn v_prime(&self) -> &BitVector {
        &self.v_prime
    }
}

/// i.i.d. Bernoulli(p) bits.
pub fn sample_noise<R: Rng + ?Sized>(params: &ChannelParams, n: usize, rng: &mut R) -> BitVector {
    let mut v = BitVector::zeros(n);
    if params.p == 0.0 {
        return v;
    }
    let bern = Bernoulli::new(params.p).expect("p validated on construction");
    for i in 0..n {
        if bern.sample(rng) {
            v.set(i, true);
        }
    }
    v
}

/// `log2 P(V = v)`; negative infinity when `p = 0` and `v` is nonzero.
pub fn noise_log_prob(params: &ChannelParams, v: &BitVector) -> f64 {
    params.log_prob_weight(v.len(), v.weight())
}

/// `h(q) = -q log2 q - (1 - q) log2 (1 - q)`, with `h(0) = h(1) = 0`.
pub fn binary_entropy(q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "binary entropy needs q in [0, 1], got {q}"
        )));
    }
    Ok(plogp(q) + plogp(1.0 - q))
}

/// `-x log2 x` with the `0 log 0 = 0` convention.
pub(crate) fn plogp(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.log2()
    }
}

/// Checks that `v_star` fits a block of length `n`.
pub fn check_injection(n: usize, v_star: &BitVector) -> Result<()> {
    check_len("injected noise length", n, v_star.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn rejects_out_of_range_p() {
        assert!(ChannelParams::new(0.5).is_err());
        assert!(ChannelParams::new(0.6).is_err());
        assert!(ChannelParams::new(-0.1).is_err());
        assert!(ChannelParams::new(f64::NAN).is_err());
        assert!(ChannelParams::new(0.0).is_ok());
    }

    #[test]
    fn noiseless_channel_is_silent() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert!(sample_noise(&ChannelParams::noiseless(), 64, &mut rng).is_zero());
        }
    }

    #[test]
    fn empirical_crossover_rate() {
        let params = ChannelParams::new(0.1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let v = sample_noise(&params, 100_000, &mut rng);
        let frac = v.weight() as f64 / 100_000.0;
        assert!((frac - 0.1).abs() < 0.01, "fraction {frac}");
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let params = ChannelParams::new(0.25).unwrap();
        let a = sample_noise(&params, 500, &mut ChaCha20Rng::seed_from_u64(7));
        let b = sample_noise(&params, 500, &mut ChaCha20Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }

    #[test]
    fn log_prob_examples() {
        let p = ChannelParams::new(0.25).unwrap();
        let v: BitVector = "0100".parse().unwrap();
        assert!((noise_log_prob(&p, &v) - (-3.245112497836531)).abs() < 1e-12);
        let q = ChannelParams::new(0.1).unwrap();
        assert!((noise_log_prob(&q, &BitVector::zeros(5)) - 5.0 * 0.9f64.log2()).abs() < 1e-12);
        assert_eq!(noise_log_prob(&ChannelParams::noiseless(), &v), f64::NEG_INFINITY);
        assert_eq!(noise_log_prob(&ChannelParams::noiseless(), &BitVector::zeros(4)), 0.0);
    }

    #[test]
    fn likelihood_normalizes() {
        for p in [0.0, 0.05, 0.1, 0.3, 0.49] {
            let params = ChannelParams::new(p).unwrap();
            for n in [1usize, 5, 12] {
                let total: f64 = (0..1u64 << n)
                    .map(|x| noise_log_prob(&params, &BitVector::from_u64(x, n)).exp2())
                    .sum();
                assert!((total - 1.0).abs() < 1e-9, "p={p} n={n} total={total}");
            }
        }
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.1).unwrap() - 0.46900).abs() < 5e-6);
        assert!(binary_entropy(1.5).is_err());
        for i in 0..=100 {
            let q = i as f64 / 100.0;
            let d = binary_entropy(q).unwrap() - binary_entropy(1.0 - q).unwrap();
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn noise_record_sum() {
        let v: BitVector = "1100".parse().unwrap();
        let s: BitVector = "1010".parse().unwrap();
        let r = NoiseRecord::new(v, s).unwrap();
        assert_eq!(r.v_prime(), &"0110".parse::<BitVector>().unwrap());
        assert!(NoiseRecord::new(BitVector::zeros(3), BitVector::zeros(4)).is_err());
    }
}
