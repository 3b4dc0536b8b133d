//! Software IEEE 754 binary16 / binary32 fused multiply-add.
//!
//! Every operation computes the exact result first and rounds once, so the
//! output depends only on the input bit patterns and the rounding mode.

use super::RoundingMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Format {
    exp_bits: u32,
    man_bits: u32,
}

pub(crate) const HALF: Format = Format { exp_bits: 5, man_bits: 10 };
pub(crate) const SINGLE: Format = Format { exp_bits: 8, man_bits: 23 };

impl Format {
    const fn bias(self) -> i32 {
        (1 << (self.exp_bits - 1)) - 1
    }

    const fn exp_max(self) -> u32 {
        (1 << self.exp_bits) - 1
    }

    const fn man_mask(self) -> u32 {
        (1 << self.man_bits) - 1
    }

    const fn sign_shift(self) -> u32 {
        self.exp_bits + self.man_bits
    }

    const fn quiet_bit(self) -> u32 {
        1 << (self.man_bits - 1)
    }

    pub(crate) const fn default_nan(self) -> u32 {
        (self.exp_max() << self.man_bits) | self.quiet_bit()
    }

    const fn inf(self, sign: bool) -> u32 {
        ((sign as u32) << self.sign_shift()) | (self.exp_max() << self.man_bits)
    }

    const fn zero(self, sign: bool) -> u32 {
        (sign as u32) << self.sign_shift()
    }

    const fn max_finite(self, sign: bool) -> u32 {
        ((sign as u32) << self.sign_shift()) | ((self.exp_max() - 1) << self.man_bits) | self.man_mask()
    }

    pub(crate) fn decode(self, bits: u32) -> Value {
        let sign = (bits >> self.sign_shift()) & 1 == 1;
        let exp = (bits >> self.man_bits) & self.exp_max();
        let man = bits & self.man_mask();
        if exp == self.exp_max() {
            if man == 0 {
                Value::Inf(sign)
            } else {
                Value::Nan
            }
        } else if exp == 0 {
            if man == 0 {
                Value::Zero(sign)
            } else {
                Value::Finite {
                    sign,
                    sig: man as u128,
                    exp: 1 - self.bias() - self.man_bits as i32,
                }
            }
        } else {
            Value::Finite {
                sign,
                sig: (man | (1 << self.man_bits)) as u128,
                exp: exp as i32 - self.bias() - self.man_bits as i32,
            }
        }
    }

    fn quiet(self, bits: u32) -> u32 {
        bits | self.quiet_bit()
    }

    /// Rounds `(-1)^sign * sig * 2^exp` (sig > 0) into this format.
    pub(crate) fn round_pack(self, sign: bool, sig: u128, exp: i32, rm: RoundingMode) -> u32 {
        debug_assert!(sig != 0);
        let man_bits = self.man_bits as i32;
        let nbits = 128 - sig.leading_zeros() as i32;
        let lead_exp = exp + nbits - 1;
        let emin = 1 - self.bias();
        let mut quantum = (lead_exp - man_bits).max(emin - man_bits);
        let shift = quantum - exp;

        let (mut kept, round_bit, sticky) = if shift <= 0 {
            (sig << (-shift) as u32, false, false)
        } else if shift > 128 {
            (0, false, true)
        } else if shift == 128 {
            (0, sig >> 127 == 1, sig & (u128::MAX >> 1) != 0)
        } else {
            let rem = sig & ((1u128 << shift) - 1);
            let half = 1u128 << (shift - 1);
            (sig >> shift, rem & half != 0, rem & (half - 1) != 0)
        };

        let round_up = match rm {
            RoundingMode::NearestEven => round_bit && (sticky || kept & 1 == 1),
            RoundingMode::TowardZero => false,
        };
        if round_up {
            kept += 1;
            if kept == 1u128 << (man_bits + 1) {
                kept >>= 1;
                quantum += 1;
            }
        }

        if kept == 0 {
            return self.zero(sign);
        }
        let biased = if kept < (1u128 << man_bits) { 0 } else { quantum + man_bits + self.bias() };
        if biased >= self.exp_max() as i32 {
            return match rm {
                RoundingMode::NearestEven => self.inf(sign),
                RoundingMode::TowardZero => self.max_finite(sign),
            };
        }
        ((sign as u32) << self.sign_shift())
            | ((biased as u32) << self.man_bits)
            | (kept as u32 & self.man_mask())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Value {
    Nan,
    Inf(bool),
    Zero(bool),
    /// `(-1)^sign * sig * 2^exp`, sig nonzero.
    Finite { sign: bool, sig: u128, exp: i32 },
}

/// Leading bit position used when aligning addends.
const ALIGN_TOP: u32 = 120;

fn normalize(sig: u128, exp: i32) -> (u128, i32) {
    let lead = 127 - sig.leading_zeros();
    let up = ALIGN_TOP - lead;
    (sig << up, exp - up as i32)
}

fn shift_right_jam(sig: u128, dist: u32) -> u128 {
    if dist == 0 {
        sig
    } else if dist >= 128 {
        (sig != 0) as u128
    } else {
        (sig >> dist) | ((sig & ((1u128 << dist) - 1) != 0) as u128)
    }
}

/// Exact-enough sum of two nonzero finite values: the result carries a sticky
/// bit far below any rounding position, or `None` on exact cancellation.
fn add_finite(
    (sx, mx, ex): (bool, u128, i32),
    (sy, my, ey): (bool, u128, i32),
) -> Option<(bool, u128, i32)> {
    let (mx, ex) = normalize(mx, ex);
    let (my, ey) = normalize(my, ey);
    let ((sb, mb, eb), (ss, ms, es)) = if ex > ey || (ex == ey && mx >= my) {
        ((sx, mx, ex), (sy, my, ey))
    } else {
        ((sy, my, ey), (sx, mx, ex))
    };
    let small = shift_right_jam(ms, (eb - es) as u32);
    if sb == ss {
        Some((sb, mb + small, eb))
    } else {
        let diff = mb - small;
        (diff != 0).then_some((sb, diff, eb))
    }
}

fn first_nan(fmt: Format, ops: &[u32]) -> Option<u32> {
    ops.iter()
        .copied()
        .find(|&w| matches!(fmt.decode(w), Value::Nan))
        .map(|w| fmt.quiet(w))
}

/// `round(a * b + c)` with a single rounding.
pub(crate) fn fma(fmt: Format, a: u32, b: u32, c: u32, rm: RoundingMode) -> u32 {
    if let Some(nan) = first_nan(fmt, &[a, b, c]) {
        return nan;
    }
    let (va, vb, vc) = (fmt.decode(a), fmt.decode(b), fmt.decode(c));
    let sign_of = |v: Value| match v {
        Value::Inf(s) | Value::Zero(s) => s,
        Value::Finite { sign, .. } => sign,
        Value::Nan => false,
    };
    let prod_sign = sign_of(va) ^ sign_of(vb);

    let a_inf = matches!(va, Value::Inf(_));
    let b_inf = matches!(vb, Value::Inf(_));
    if a_inf || b_inf {
        if matches!(va, Value::Zero(_)) || matches!(vb, Value::Zero(_)) {
            return fmt.default_nan();
        }
        if let Value::Inf(sc) = vc {
            if sc != prod_sign {
                return fmt.default_nan();
            }
        }
        return fmt.inf(prod_sign);
    }
    if let Value::Inf(_) = vc {
        return c;
    }

    let product = match (va, vb) {
        (Value::Finite { sig: ma, exp: ea, .. }, Value::Finite { sig: mb, exp: eb, .. }) => {
            Some((prod_sign, ma * mb, ea + eb))
        }
        _ => None,
    };
    match (product, vc) {
        (None, Value::Zero(sc)) => fmt.zero(prod_sign && sc),
        (None, _) => c,
        (Some((s, m, e)), Value::Zero(_)) => fmt.round_pack(s, m, e, rm),
        (Some(p), Value::Finite { sign, sig, exp }) => match add_finite(p, (sign, sig, exp)) {
            Some((s, m, e)) => fmt.round_pack(s, m, e, rm),
            None => fmt.zero(false),
        },
        (Some(_), Value::Inf(_) | Value::Nan) => unreachable!("handled above"),
    }
}

/// Re-encodes a value of `from` in `to`, rounding when `to` is narrower.
pub(crate) fn convert(from: Format, to: Format, bits: u32, rm: RoundingMode) -> u32 {
    match from.decode(bits) {
        Value::Nan => {
            let sign = (bits >> from.sign_shift()) & 1;
            let payload = bits & from.man_mask();
            let payload = if to.man_bits >= from.man_bits {
                payload << (to.man_bits - from.man_bits)
            } else {
                payload >> (from.man_bits - to.man_bits)
            };
            (sign << to.sign_shift()) | (to.exp_max() << to.man_bits) | payload | to.quiet_bit()
        }
        Value::Inf(s) => to.inf(s),
        Value::Zero(s) => to.zero(s),
        Value::Finite { sign, sig, exp } => to.round_pack(sign, sig, exp, rm),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE32: u32 = 0x3F80_0000;
    const NE: RoundingMode = RoundingMode::NearestEven;
    const TZ: RoundingMode = RoundingMode::TowardZero;

    #[test]
    fn simple_sums() {
        assert_eq!(fma(SINGLE, ONE32, ONE32, ONE32, NE), 0x4000_0000);
        assert_eq!(fma(HALF, 0x3C00, 0x3C00, 0x3C00, NE), 0x4000);
        // 1 + 2^-24 ties to even in binary32
        assert_eq!(fma(SINGLE, ONE32, ONE32, 0x3380_0000, NE), ONE32);
        assert_eq!(fma(SINGLE, ONE32, ONE32, 0x3380_0001, NE), ONE32 + 1);
        assert_eq!(fma(SINGLE, ONE32, ONE32, 0x3380_0001, TZ), ONE32);
    }

    #[test]
    fn exact_cancellation_is_positive_zero() {
        assert_eq!(fma(SINGLE, ONE32, ONE32, 0xBF80_0000, NE), 0);
        assert_eq!(fma(SINGLE, ONE32, ONE32, 0xBF80_0000, TZ), 0);
        // (-0) * 1 + (-0) keeps the sign
        assert_eq!(fma(SINGLE, 0x8000_0000, ONE32, 0x8000_0000, NE), 0x8000_0000);
    }

    #[test]
    fn specials() {
        let inf = 0x7F80_0000;
        assert_eq!(fma(SINGLE, inf, 0, ONE32, NE), SINGLE.default_nan());
        assert_eq!(fma(SINGLE, inf, ONE32, 0xFF80_0000, NE), SINGLE.default_nan());
        assert_eq!(fma(SINGLE, inf, ONE32, ONE32, NE), inf);
        // signalling NaN payload is quieted and propagated
        assert_eq!(fma(SINGLE, ONE32, 0x7F80_0001, ONE32, NE), 0x7FC0_0001);
        // overflow
        assert_eq!(fma(HALF, 0x7BFF, 0x4000, 0, NE), 0x7C00);
        assert_eq!(fma(HALF, 0x7BFF, 0x4000, 0, TZ), 0x7BFF);
    }

    #[test]
    fn subnormal_results() {
        // 2^-14 * 2^-1 = 2^-15, a binary16 subnormal
        assert_eq!(fma(HALF, 0x0400, 0x3800, 0, NE), 0x0200);
        // smallest subnormal halved: tie to even rounds to zero, TZ truncates
        assert_eq!(fma(HALF, 0x0001, 0x3800, 0, NE), 0x0000);
        assert_eq!(fma(HALF, 0x0003, 0x3800, 0, NE), 0x0002);
    }

    #[test]
    fn conversions() {
        assert_eq!(convert(HALF, SINGLE, 0x3C00, NE), ONE32);
        assert_eq!(convert(HALF, SINGLE, 0x0001, NE), 0x3380_0000);
        assert_eq!(convert(SINGLE, HALF, 0x3F80_1000, NE), 0x3C00);
        assert_eq!(convert(SINGLE, HALF, 0x3F80_3000, NE), 0x3C02);
        assert_eq!(convert(SINGLE, HALF, 0x3F80_3000, TZ), 0x3C01);
        assert_eq!(convert(SINGLE, HALF, 0x4780_0000, NE), 0x7C00);
        assert_eq!(convert(SINGLE, HALF, 0x4780_0000, TZ), 0x7BFF);
        assert_eq!(convert(SINGLE, HALF, 0x7FC0_0000, NE), 0x7E00);
    }
}
