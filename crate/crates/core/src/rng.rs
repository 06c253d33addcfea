//! Deterministic counter-based random-number streams.
//!
//! Every random draw in the crate comes from an [`RngStream`] addressed by a
//! `(master seed, substream key)` pair. The generator is counter-based (a
//! SplitMix64-style bit mixer applied to `base + counter·φ`), so the value of
//! the n-th draw of a stream depends only on the seed, the key, and n — never
//! on evaluation order or thread schedule. Distinct keys yield statistically
//! independent substreams.

/// 2^64 / golden ratio; the SplitMix64 increment.
const PHI: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn absorb(h: u64, word: u64) -> u64 {
    mix64(h ^ word.wrapping_mul(PHI))
}

/// Which image of a stereo pair a stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn code(self) -> u64 {
        match self {
            Side::Left => 1,
            Side::Right => 2,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }
}

/// Which random quantity a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatKind {
    /// Perturbation of the channel mean.
    Mean,
    /// Perturbation of the channel standard deviation.
    Std,
    /// Bernoulli apply/skip gate.
    Gate,
    /// Anything else (texture synthesis, weight init, test fixtures).
    Aux,
}

impl StatKind {
    fn code(self) -> u64 {
        match self {
            StatKind::Mean => 1,
            StatKind::Std => 2,
            StatKind::Gate => 3,
            StatKind::Aux => 4,
        }
    }
}

/// Substream address: pair index, pair side, channel, statistic kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub pair: u32,
    pub side: Side,
    pub channel: u8,
    pub stat: StatKind,
}

/// A deterministic random stream; see the module docs.
#[derive(Debug, Clone)]
pub struct RngStream {
    base: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, key: StreamKey) -> Self {
        let mut h = mix64(seed ^ PHI);
        h = absorb(h, key.pair as u64);
        h = absorb(h, key.side.code());
        h = absorb(h, key.channel as u64);
        h = absorb(h, key.stat.code());
        RngStream {
            base: h,
            counter: 0,
        }
    }

    /// Next raw 64-bit word.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.base.wrapping_add(self.counter.wrapping_mul(PHI)))
    }

    /// Uniform draw in the half-open interval `(0, 1]`. The lower bound is
    /// excluded so the value is always a safe logarithm argument.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) / (1u64 << 53) as f64
    }

    /// Standard-normal draw via the Box-Muller transform. Each call consumes
    /// exactly two uniform words; nothing is cached, so the n-th gaussian of
    /// a stream is a pure function of (seed, key, n).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(pair: u32, channel: u8, stat: StatKind) -> StreamKey {
        StreamKey {
            pair,
            side: Side::Left,
            channel,
            stat,
        }
    }

    #[test]
    fn same_seed_and_key_reproduce_the_sequence() {
        let k = key(3, 1, StatKind::Mean);
        let a: Vec<u64> = {
            let mut s = RngStream::new(7, k);
            (0..16).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = RngStream::new(7, k);
            (0..16).map(|_| s.next_u64()).collect()
        };
        assert_eq!(a, b);
        let g1 = RngStream::new(7, k).next_gaussian();
        let g2 = RngStream::new(7, k).next_gaussian();
        assert_eq!(g1.to_bits(), g2.to_bits());
    }

    #[test]
    fn distinct_keys_differ() {
        let mut a = RngStream::new(7, key(0, 0, StatKind::Mean));
        let mut b = RngStream::new(7, key(0, 0, StatKind::Std));
        let mut c = RngStream::new(7, key(0, 1, StatKind::Mean));
        let mut d = RngStream::new(8, key(0, 0, StatKind::Mean));
        let va = a.next_u64();
        assert_ne!(va, b.next_u64());
        assert_ne!(va, c.next_u64());
        assert_ne!(va, d.next_u64());
    }

    #[test]
    fn uniform_stays_in_half_open_unit_interval() {
        let mut s = RngStream::new(123, key(0, 0, StatKind::Aux));
        for _ in 0..10_000 {
            let u = s.next_uniform();
            assert!(u > 0.0 && u <= 1.0);
        }
    }

    #[test]
    fn gaussian_moments_match_standard_normal() {
        let mut s = RngStream::new(2024, key(9, 2, StatKind::Aux));
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let g = s.next_gaussian();
            sum += g;
            sum_sq += g * g;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "sample mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "sample variance {var}");
    }

    #[test]
    fn substreams_are_uncorrelated() {
        let n = 100_000usize;
        let mut a = RngStream::new(55, key(1, 0, StatKind::Mean));
        let mut b = RngStream::new(55, key(2, 0, StatKind::Mean));
        let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.next_gaussian();
            let y = b.next_gaussian();
            sa += x;
            sb += y;
            saa += x * x;
            sbb += y * y;
            sab += x * y;
        }
        let nf = n as f64;
        let cov = sab / nf - (sa / nf) * (sb / nf);
        let va = saa / nf - (sa / nf) * (sa / nf);
        let vb = sbb / nf - (sb / nf) * (sb / nf);
        let r = cov / (va * vb).sqrt();
        assert!(r.abs() < 0.01, "cross-correlation {r}");
    }
}
