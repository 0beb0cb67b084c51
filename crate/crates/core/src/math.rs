//! Small numeric kernels shared by the detectors and the runner.

/// `1 / (1 + e^{-t})`, evaluated on the branch that cannot overflow.
#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

/// `ln(e^a + e^b)` without overflow or catastrophic underflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + libm::log1p(libm::exp(lo - hi))
}

/// SplitMix64 finalizer. Bijective on `u64`, used to derive independent seeds.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Half-up rounding of a nonnegative real to an integer count.
#[inline]
pub(crate) fn round_half_up(x: f64) -> usize {
    libm::floor(x + 0.5) as usize
}

// Bit positions 0..=2098 hold any finite f64 magnitude (unit = 2^-1074); the
// remaining headroom absorbs carries from up to 2^64 additions.
const LIMBS: usize = 36;
const MANTISSA_BITS: u32 = 52;

/// Exact accumulator for a sum of nonpositive `f64` values.
///
/// Magnitudes are added into a fixed-point integer scaled by 2^-1074, so the
/// running total carries no rounding error at all. [`ExactNegSum::mean`] and
/// [`ExactNegSum::sum`] round the exact result once, to nearest-even.
///
/// Because the mean is the correctly rounded value of the exact rational
/// `S / T`, concatenating k copies of a sequence yields `kS / kT`, the same
/// rational, and therefore the bit-identical mean.
#[derive(Clone)]
pub struct ExactNegSum {
    limbs: [u64; LIMBS],
    count: u64,
}

impl Default for ExactNegSum {
    fn default() -> Self {
        Self::new()
    }
}

impl ExactNegSum {
    pub fn new() -> Self {
        Self {
            limbs: [0; LIMBS],
            count: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Adds a finite value `v <= 0` (including `-0.0`).
    pub fn add(&mut self, v: f64) {
        debug_assert!(v.is_finite() && v <= 0.0);
        self.count += 1;
        let bits = (-v).to_bits();
        let exp_field = (bits >> MANTISSA_BITS) & 0x7ff;
        let frac = bits & ((1u64 << MANTISSA_BITS) - 1);
        let (mantissa, offset) = if exp_field == 0 {
            (frac, 0)
        } else {
            (frac | (1u64 << MANTISSA_BITS), (exp_field - 1) as usize)
        };
        if mantissa == 0 {
            return;
        }
        let limb = offset / 64;
        let shifted = (mantissa as u128) << (offset % 64);
        let mut carry = shifted;
        let mut i = limb;
        while carry != 0 {
            let acc = self.limbs[i] as u128 + (carry & u64::MAX as u128);
            self.limbs[i] = acc as u64;
            carry = (carry >> 64) + (acc >> 64);
            i += 1;
        }
    }

    /// Correctly rounded exact sum (a nonpositive value, or `-inf` on overflow).
    pub fn sum(&self) -> f64 {
        -self.divide_round(1)
    }

    /// Correctly rounded exact mean; `None` when nothing was added.
    pub fn mean(&self) -> Option<f64> {
        if self.count == 0 {
            return None;
        }
        Some(-self.divide_round(self.count))
    }

    fn divide_round(&self, divisor: u64) -> f64 {
        let mut quotient = [0u64; LIMBS];
        let mut rem: u128 = 0;
        for i in (0..LIMBS).rev() {
            let cur = (rem << 64) | self.limbs[i] as u128;
            quotient[i] = (cur / divisor as u128) as u64;
            rem = cur % divisor as u128;
        }
        let twice = 2 * rem;
        let fraction = Fraction {
            at_least_half: twice >= divisor as u128,
            above_half: twice > divisor as u128,
            nonzero: rem != 0,
        };
        round_to_f64(&quotient, fraction)
    }
}

/// The part of an exact quotient discarded below its integer unit.
#[derive(Clone, Copy)]
struct Fraction {
    at_least_half: bool,
    above_half: bool,
    nonzero: bool,
}

/// Converts `(q + fraction) * 2^-1074` to the nearest f64, ties to even.
fn round_to_f64(q: &[u64; LIMBS], fraction: Fraction) -> f64 {
    let top = match (0..LIMBS).rev().find(|&i| q[i] != 0) {
        Some(i) => i * 64 + (63 - q[i].leading_zeros() as usize),
        None => {
            return f64::from_bits(fraction.above_half as u64);
        }
    };
    let bit = |pos: usize| (q[pos / 64] >> (pos % 64)) & 1 == 1;
    let below_nonzero = |pos: usize| {
        // any bit strictly below `pos`
        let limb = pos / 64;
        if q[..limb].iter().any(|&w| w != 0) {
            return true;
        }
        let mask = (1u64 << (pos % 64)) - 1;
        q[limb] & mask != 0
    };

    if top <= MANTISSA_BITS as usize {
        // Integer part is exactly representable with unit spacing 2^-1074,
        // and f64::from_bits(k) == k * 2^-1074 for k <= 2^53.
        let k = q[0];
        let round_up = fraction.above_half || (fraction.at_least_half && k & 1 == 1);
        return f64::from_bits(k + round_up as u64);
    }

    let shift = top - MANTISSA_BITS as usize;
    let mut mantissa: u64 = 0;
    for j in 0..=MANTISSA_BITS as usize {
        if bit(shift + j) {
            mantissa |= 1 << j;
        }
    }
    let half = bit(shift - 1);
    let sticky = below_nonzero(shift - 1) || fraction.nonzero;
    let round_up = half && (sticky || mantissa & 1 == 1);
    let biased_exp = (shift + 1) as u64;
    if biased_exp >= 0x7ff {
        return f64::INFINITY;
    }
    let bits = (biased_exp << MANTISSA_BITS) + (mantissa - (1u64 << MANTISSA_BITS));
    f64::from_bits(bits + round_up as u64)
}
