//! Soft-float results checked against exact rational arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warpfi_core::numerics::{
    f16_to_f32, f32_to_f16, flip_bits, fma, mma_4x4, pack_fp16_pair, unpack_fp16_pair, Precision,
    RoundingMode, Tile4x4, Word32,
};

#[derive(Clone, Copy)]
struct Fmt {
    exp_bits: u32,
    man_bits: u32,
}

const H: Fmt = Fmt { exp_bits: 5, man_bits: 10 };
const S: Fmt = Fmt { exp_bits: 8, man_bits: 23 };

fn pow2(e: i64) -> BigRational {
    if e >= 0 {
        BigRational::from_integer(BigInt::one() << e as usize)
    } else {
        BigRational::new(BigInt::one(), BigInt::one() << (-e) as usize)
    }
}

impl Fmt {
    fn bias(self) -> i64 {
        (1 << (self.exp_bits - 1)) - 1
    }

    fn is_finite(self, bits: u32) -> bool {
        (bits >> self.man_bits) & ((1 << self.exp_bits) - 1) != (1 << self.exp_bits) - 1
    }

    fn sign(self, bits: u32) -> bool {
        (bits >> (self.exp_bits + self.man_bits)) & 1 == 1
    }

    fn to_rational(self, bits: u32) -> BigRational {
        let man = (bits & ((1 << self.man_bits) - 1)) as i64;
        let exp = ((bits >> self.man_bits) & ((1 << self.exp_bits) - 1)) as i64;
        let (sig, e) = if exp == 0 {
            (man, 1 - self.bias() - self.man_bits as i64)
        } else {
            (man + (1 << self.man_bits), exp - self.bias() - self.man_bits as i64)
        };
        let v = BigRational::from_integer(BigInt::from(sig)) * pow2(e);
        if self.sign(bits) {
            -v
        } else {
            v
        }
    }

    /// Rounds a nonzero rational once into this format.
    fn round(self, x: &BigRational, rm: RoundingMode) -> u32 {
        assert!(!x.is_zero());
        let sign = x.is_negative();
        let mag = x.abs();
        let emin = 1 - self.bias();
        let emax = self.bias();
        let mut e = 0i64;
        while mag >= pow2(e + 1) {
            e += 1;
        }
        while mag < pow2(e) {
            e -= 1;
        }
        let e = e.max(emin);
        let ulp = pow2(e - self.man_bits as i64);
        let q = &mag / &ulp;
        let mut n = q.floor().to_integer();
        let frac = q - BigRational::from_integer(n.clone());
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        if rm == RoundingMode::NearestEven
            && (frac > half || (frac == half && (&n % BigInt::from(2)) == BigInt::one()))
        {
            n += 1;
        }
        let sign_bit = (sign as u32) << (self.exp_bits + self.man_bits);
        let value = BigRational::from_integer(n.clone()) * &ulp;
        if value >= pow2(emax + 1) {
            return match rm {
                RoundingMode::NearestEven => sign_bit | (((1 << self.exp_bits) - 1) << self.man_bits),
                RoundingMode::TowardZero => {
                    sign_bit | (((1 << self.exp_bits) - 2) << self.man_bits) | ((1 << self.man_bits) - 1)
                }
            };
        }
        let n: u64 = n.try_into().unwrap();
        if n == 0 {
            return sign_bit;
        }
        if n < (1 << self.man_bits) {
            return sign_bit | n as u32;
        }
        let (n, e) = if n == 1 << (self.man_bits + 1) { (n >> 1, e + 1) } else { (n, e) };
        sign_bit | (((e + self.bias()) as u32) << self.man_bits) | (n as u32 - (1 << self.man_bits))
    }
}

fn oracle_fma(f: Fmt, a: u32, b: u32, c: u32, rm: RoundingMode) -> Option<u32> {
    let exact = f.to_rational(a) * f.to_rational(b) + f.to_rational(c);
    (!exact.is_zero()).then(|| f.round(&exact, rm))
}

fn finite_word(rng: &mut ChaCha8Rng, f: Fmt) -> u32 {
    loop {
        let w = rng.gen::<u32>() & ((1u64 << (f.exp_bits + f.man_bits + 1)) - 1) as u32;
        if f.is_finite(w) {
            return w;
        }
    }
}

/// Draws operands with exponents near each other so sums actually round.
fn clustered_word(rng: &mut ChaCha8Rng, f: Fmt) -> u32 {
    let exp = f.bias() as u32 + rng.gen_range(0..6) - 3;
    let man = rng.gen::<u32>() & ((1 << f.man_bits) - 1);
    ((rng.gen::<bool>() as u32) << (f.exp_bits + f.man_bits)) | (exp << f.man_bits) | man
}

#[test]
fn fp16_fma_matches_rational_oracle_and_tz_shrinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF16);
    let mut differ = 0;
    for i in 0..10_000 {
        let pick = |rng: &mut ChaCha8Rng| if i % 2 == 0 { finite_word(rng, H) } else { clustered_word(rng, H) };
        let (a, b, c) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
        let ne = fma(a, b, c, Precision::Fp16, RoundingMode::NearestEven);
        let tz = fma(a, b, c, Precision::Fp16, RoundingMode::TowardZero);
        if let Some(expect) = oracle_fma(H, a, b, c, RoundingMode::NearestEven) {
            assert_eq!(ne, expect, "NE a={a:#06x} b={b:#06x} c={c:#06x}");
            assert_eq!(tz, oracle_fma(H, a, b, c, RoundingMode::TowardZero).unwrap(), "TZ a={a:#06x} b={b:#06x} c={c:#06x}");
        }
        if ne != tz {
            differ += 1;
        }
        if H.sign(ne) == H.sign(tz) && H.is_finite(ne) {
            assert!(H.to_rational(tz).abs() <= H.to_rational(ne).abs());
        }
    }
    assert!(differ > 0);
}

#[test]
fn fp32_fma_nearest_matches_host_fma() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for i in 0..200_000 {
        let pick = |rng: &mut ChaCha8Rng| if i % 2 == 0 { rng.gen::<u32>() } else { clustered_word(rng, S) };
        let (a, b, c) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
        let ours = fma(a, b, c, Precision::Fp32, RoundingMode::NearestEven);
        let host = f32::from_bits(a).mul_add(f32::from_bits(b), f32::from_bits(c));
        if host.is_nan() {
            assert!(f32::from_bits(ours).is_nan());
        } else {
            assert_eq!(ours, host.to_bits(), "a={a:#010x} b={b:#010x} c={c:#010x}");
        }
    }
}

#[test]
fn fp32_fma_toward_zero_matches_rational_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7A);
    for i in 0..5_000 {
        let pick = |rng: &mut ChaCha8Rng| if i % 2 == 0 { finite_word(rng, S) } else { clustered_word(rng, S) };
        let (a, b, c) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
        if let Some(expect) = oracle_fma(S, a, b, c, RoundingMode::TowardZero) {
            assert_eq!(fma(a, b, c, Precision::Fp32, RoundingMode::TowardZero), expect);
        }
    }
}

#[test]
fn narrowing_matches_oracle_and_widening_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
    for _ in 0..10_000 {
        let x = finite_word(&mut rng, S);
        let r = S.to_rational(x);
        for rm in [RoundingMode::NearestEven, RoundingMode::TowardZero] {
            let ours = f32_to_f16(x, rm) as u32;
            if r.is_zero() {
                assert_eq!(ours & 0x7FFF, 0);
            } else {
                assert_eq!(ours, H.round(&r, rm), "x={x:#010x}");
            }
        }
    }
    for h in 0..=u16::MAX {
        let w = f16_to_f32(h);
        if H.is_finite(h as u32) {
            assert_eq!(S.to_rational(w), H.to_rational(h as u32));
            assert_eq!(w >> 31, (h >> 15) as u32);
        } else {
            assert_eq!(f32::from_bits(w).is_nan(), h & 0x3FF != 0);
        }
    }
}

fn oracle_mma(a: &Tile4x4, b: &Tile4x4, c: &Tile4x4, out: Precision) -> Vec<u32> {
    let mut d = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = match out {
                Precision::Fp32 => S.to_rational(c.get(i, j)),
                Precision::Fp16 => H.to_rational(c.get(i, j)),
            };
            let mut acc_bits = None;
            for k in 0..4 {
                acc += H.to_rational(a.get(i, k)) * H.to_rational(b.get(k, j));
                if acc.is_zero() {
                    acc_bits = Some(0);
                } else {
                    let bits = S.round(&acc, RoundingMode::TowardZero);
                    acc = S.to_rational(bits);
                    acc_bits = Some(bits);
                }
            }
            let bits = acc_bits.unwrap();
            d.push(match out {
                Precision::Fp32 => bits,
                Precision::Fp16 if acc.is_zero() => 0,
                Precision::Fp16 => H.round(&acc, RoundingMode::TowardZero),
            });
        }
    }
    d
}

#[test]
fn mma_matches_stepwise_toward_zero_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x44);
    let mut checked = 0;
    for t in 0..100 {
        let out = if t % 2 == 0 { Precision::Fp32 } else { Precision::Fp16 };
        let mut a = Tile4x4::zero(Precision::Fp16);
        let mut b = Tile4x4::zero(Precision::Fp16);
        let mut c = Tile4x4::zero(out);
        for w in a.words.iter_mut().chain(b.words.iter_mut()) {
            *w = clustered_word(&mut rng, H);
        }
        for w in c.words.iter_mut() {
            *w = match out {
                Precision::Fp16 => clustered_word(&mut rng, H),
                Precision::Fp32 => clustered_word(&mut rng, S),
            };
        }
        let d = mma_4x4(&a, &b, &c, out);
        let expect = oracle_mma(&a, &b, &c, out);
        for (idx, (&got, &want)) in d.words.iter().zip(&expect).enumerate() {
            // exact zero sums: sign is covered by the unit tests
            if want == 0 {
                assert_eq!(got & 0x7FFF_FFFF & out_mask(out), 0);
            } else {
                assert_eq!(got, want, "tile {t} element {idx}");
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 1600);
}

fn out_mask(p: Precision) -> u32 {
    match p {
        Precision::Fp16 => 0x7FFF,
        Precision::Fp32 => 0x7FFF_FFFF,
    }
}

#[test]
fn pack_round_trip_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let (lo, hi) = (rng.gen::<u16>(), rng.gen::<u16>());
        assert_eq!(unpack_fp16_pair(pack_fp16_pair(lo, hi)), (lo, hi));
    }
}

proptest! {
    #[test]
    fn packing_is_a_bijection(w in any::<u32>()) {
        let (lo, hi) = unpack_fp16_pair(Word32(w));
        prop_assert_eq!(pack_fp16_pair(lo, hi), Word32(w));
    }

    #[test]
    fn flip_is_an_involution(w in any::<u32>(), i in 0u8..32, j in 0u8..32, double in any::<bool>()) {
        let idx: Vec<u8> = if double && i != j { vec![i, j] } else { vec![i] };
        let once = flip_bits(Word32(w), &idx).unwrap();
        prop_assert_eq!((once.0 ^ w).count_ones() as usize, idx.len());
        prop_assert_eq!(flip_bits(once, &idx).unwrap(), Word32(w));
    }

    #[test]
    fn fma_is_deterministic(a in any::<u32>(), b in any::<u32>(), c in any::<u32>()) {
        for p in [Precision::Fp16, Precision::Fp32] {
            for rm in [RoundingMode::NearestEven, RoundingMode::TowardZero] {
                prop_assert_eq!(fma(a, b, c, p, rm), fma(a, b, c, p, rm));
            }
        }
    }
}
