//! Q4.12 fixed-point values and a clock-counting model of the serial
//! shift-add multiplier.
//!
//! The binary point sits between bit 11 and bit 12. Signed values use
//! two's complement for add/sub and sign-magnitude for multiplication.

use std::fmt;
use std::marker::PhantomData;
use std::str::FromStr;

use thiserror::Error;

/// Number of fraction bits.
pub const FRAC_BITS: u32 = 12;
/// One unit in the last place.
pub const LSB: f64 = 1.0 / 4096.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FxError {
    #[error("value {value} is outside the {kind} Q4.12 range")]
    OutOfRange { value: f64, kind: &'static str },
    #[error("invalid hex word {0:?}: expected 4 hex digits")]
    BadHex(String),
}

/// Type-level signedness marker.
pub trait Signedness: Copy + Clone + fmt::Debug + Default + PartialEq + Eq + 'static {
    const SIGNED: bool;
    const NAME: &'static str;
    /// Magnitude bits walked by the serial multiplier.
    const MUL_BITS: u32;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Signed;
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Unsigned;

impl Signedness for Signed {
    const SIGNED: bool = true;
    const NAME: &'static str = "signed";
    const MUL_BITS: u32 = 15;
}

impl Signedness for Unsigned {
    const SIGNED: bool = false;
    const NAME: &'static str = "unsigned";
    const MUL_BITS: u32 = 16;
}

/// A 16-bit Q4.12 word. The signedness lives in the type.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fx16<S: Signedness> {
    raw: u16,
    _s: PhantomData<S>,
}

pub type SFx16 = Fx16<Signed>;
pub type UFx16 = Fx16<Unsigned>;

impl<S: Signedness> Fx16<S> {
    pub const ZERO: Self = Self::from_raw(0);

    pub const fn from_raw(raw: u16) -> Self {
        Self {
            raw,
            _s: PhantomData,
        }
    }

    pub const fn raw(self) -> u16 {
        self.raw
    }

    pub fn min_value() -> f64 {
        if S::SIGNED {
            -8.0
        } else {
            0.0
        }
    }

    pub fn max_value() -> f64 {
        if S::SIGNED {
            8.0 - LSB
        } else {
            16.0 - LSB
        }
    }

    /// Encode by truncation toward zero.
    pub fn encode(v: f64) -> Result<Self, FxError> {
        if !v.is_finite() || v < Self::min_value() || v >= Self::max_value() + LSB {
            return Err(FxError::OutOfRange {
                value: v,
                kind: S::NAME,
            });
        }
        let scaled = (v * 4096.0).trunc() as i32;
        Ok(Self::from_raw(scaled as u16))
    }

    /// Raw word as a signed integer count of LSBs.
    pub fn to_int(self) -> i32 {
        if S::SIGNED {
            self.raw as i16 as i32
        } else {
            self.raw as i32
        }
    }

    pub fn decode(self) -> f64 {
        self.to_int() as f64 * LSB
    }

    fn from_int(v: i32) -> (Self, bool) {
        let overflow = if S::SIGNED {
            !(i16::MIN as i32..=i16::MAX as i32).contains(&v)
        } else {
            !(0..=u16::MAX as i32).contains(&v)
        };
        (Self::from_raw(v as u16), overflow)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, rhs: Self) -> (Self, bool) {
        Self::from_int(self.to_int() + rhs.to_int())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, rhs: Self) -> (Self, bool) {
        Self::from_int(self.to_int() - rhs.to_int())
    }

    /// Sign flag and magnitude as seen by the multiplier.
    fn sign_mag(self) -> (bool, u32) {
        let v = self.to_int();
        (v < 0, v.unsigned_abs())
    }

    fn pack_product(neg: bool, full: u64) -> (Self, bool) {
        // Signed keeps 3 integer bits, unsigned keeps 4.
        let keep = if S::SIGNED { 15 } else { 16 };
        let shifted = full >> FRAC_BITS;
        let overflow = shifted >> keep != 0;
        let mag = (shifted & ((1 << keep) - 1)) as i32;
        let raw = if neg { -mag } else { mag };
        (Self::from_raw(raw as u16), overflow)
    }

    /// Full product of magnitudes, low 12 bits dropped, sign by XOR.
    pub fn mul_trunc(self, rhs: Self) -> (Self, bool) {
        let (na, ma) = self.sign_mag();
        let (nb, mb) = rhs.sign_mag();
        Self::pack_product(na ^ nb, ma as u64 * mb as u64)
    }

    /// Shift-add multiply with `rhs` as the multiplier, LSB first.
    ///
    /// One clock loads both registers, then one clock per multiplier bit
    /// up to its highest set bit. The walk is capped at 15 bits for
    /// signed and 16 for unsigned operands.
    pub fn serial_mul(self, rhs: Self) -> MulTrace<S> {
        let (na, multiplicand) = self.sign_mag();
        let (nb, multiplier) = rhs.sign_mag();
        let used = (32 - multiplier.leading_zeros()).min(S::MUL_BITS);
        let mut acc: u64 = 0;
        let mut shifted = multiplicand as u64;
        let mut sl = multiplier;
        let mut clocks = 1;
        let mut add_edges = 0;
        for step in 0..used {
            clocks += 1;
            // The last walked edge also absorbs bit 15 of a signed -8.0
            // magnitude, the only value wider than the walk.
            let weight = if step + 1 == used { sl } else { sl & 1 };
            if weight != 0 {
                acc += shifted * weight as u64;
                add_edges += 1;
            }
            sl >>= 1;
            shifted <<= 1;
        }
        let (product, overflow) = Self::pack_product(na ^ nb, acc);
        MulTrace {
            product,
            overflow,
            clocks,
            add_edges,
        }
    }

    pub fn to_hex(self) -> String {
        format!("{:04X}", self.raw)
    }

    pub fn from_hex(s: &str) -> Result<Self, FxError> {
        let t = s.trim();
        let t = t
            .strip_prefix("0x")
            .or_else(|| t.strip_prefix("0X"))
            .unwrap_or(t);
        if t.len() != 4 {
            return Err(FxError::BadHex(s.to_string()));
        }
        u16::from_str_radix(t, 16)
            .map(Self::from_raw)
            .map_err(|_| FxError::BadHex(s.to_string()))
    }
}

impl<S: Signedness> fmt::Debug for Fx16<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Fx16<{}>(0x{:04X} = {})",
            S::NAME,
            self.raw,
            self.decode()
        )
    }
}

impl<S: Signedness> fmt::Display for Fx16<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04X}", self.raw)
    }
}

impl<S: Signedness> FromStr for Fx16<S> {
    type Err = FxError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

/// Result of a serial multiplication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MulTrace<S: Signedness> {
    pub product: Fx16<S>,
    pub overflow: bool,
    pub clocks: u32,
    pub add_edges: u32,
}

/// Worst-case serial multiplier latency in clocks.
pub const fn serial_worst_clocks(signed: bool) -> u32 {
    if signed {
        16
    } else {
        17
    }
}

/// Gate count of the parallel (Wallace) multiplier.
pub const PARALLEL_MUL_GATES: u32 = 2144;
/// Gate count of the serial multiplier.
pub const SERIAL_MUL_GATES: u32 = 66;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn oracle_unsigned(a: u16, b: u16) -> (u16, bool) {
        let p = a as u128 * b as u128;
        let s = p >> 12;
        ((s & 0xFFFF) as u16, s >> 16 != 0)
    }

    fn oracle_signed(a: u16, b: u16) -> (u16, bool) {
        let (x, y) = (a as i16 as i128, b as i16 as i128);
        let p = x.abs() * y.abs();
        let s = p >> 12;
        let over = s >> 15 != 0;
        let m = s & 0x7FFF;
        let v = if (x < 0) ^ (y < 0) { -m } else { m };
        (v as i16 as u16, over)
    }

    #[test]
    fn table_rows() {
        let a = UFx16::encode(3.25).unwrap();
        let b = UFx16::encode(1.76).unwrap();
        assert_eq!((a.raw(), b.raw()), (0x3400, 0x1C28));
        assert_eq!(a.add(b).0.raw(), 0x5028);
        let c = UFx16::encode(1.09).unwrap();
        let d = UFx16::encode(0.28).unwrap();
        assert_eq!((c.raw(), d.raw()), (0x1170, 0x047A));
        assert_eq!(c.sub(d).0.raw(), 0x0CF6);
        let e = UFx16::encode(2.63).unwrap();
        let f = UFx16::encode(1.59).unwrap();
        assert_eq!(e.mul_trunc(f), (UFx16::from_raw(0x42E5), false));
        assert_eq!(UFx16::encode(0.012).unwrap().raw(), 0x0031);
        assert_eq!(SFx16::encode(0.0).unwrap().raw(), 0);
    }

    #[test]
    fn overflow_flags() {
        let (_, o) = SFx16::from_raw(0x7FFF).add(SFx16::from_raw(1));
        assert!(o);
        let (_, o) = UFx16::ZERO.sub(UFx16::from_raw(1));
        assert!(o);
        let (_, o) = UFx16::from_raw(0xFFFF).add(UFx16::ZERO);
        assert!(!o);
        assert!(SFx16::encode(8.0).is_err());
        assert!(UFx16::encode(-0.1).is_err());
        assert_eq!(SFx16::encode(-1.5).unwrap().raw(), 0xE800);
    }

    #[test]
    fn signed_multiply() {
        let a = SFx16::encode(-1.5).unwrap();
        let b = SFx16::encode(2.0).unwrap();
        assert_eq!(a.mul_trunc(b).0.decode(), -3.0);
        let (_, o) = SFx16::encode(4.0).unwrap().mul_trunc(b);
        assert!(o);
        let m8 = SFx16::encode(-8.0).unwrap();
        let half = SFx16::encode(0.5).unwrap();
        assert_eq!(half.serial_mul(m8).product.decode(), -4.0);
        assert_eq!(half.serial_mul(m8).clocks, 16);
    }

    #[test]
    fn clock_model() {
        let all = UFx16::from_raw(0xFFFF);
        let t = UFx16::from_raw(0x1000).serial_mul(all);
        assert_eq!((t.clocks, t.add_edges), (17, 16));
        assert!(
            SFx16::from_raw(0x1000)
                .serial_mul(SFx16::from_raw(0x7FFF))
                .clocks
                <= 16
        );
        // highest multiplier bit at position 10 with sparse ones
        let t = UFx16::from_raw(0x2A14).serial_mul(UFx16::from_raw(0x0411));
        assert_eq!((t.clocks, t.add_edges), (12, 3));
        assert_eq!(UFx16::from_raw(0x1234).serial_mul(UFx16::ZERO).clocks, 1);
    }

    #[test]
    fn hex_text() {
        assert_eq!(UFx16::from_hex("3da7").unwrap().to_hex(), "3DA7");
        assert_eq!("0x0031".parse::<UFx16>().unwrap().raw(), 0x31);
        assert!(UFx16::from_hex("123").is_err());
    }

    #[test]
    fn exhaustive_8bit_grid() {
        for a in 0..=255u16 {
            for b in 0..=255u16 {
                for (x, y) in [(a << 8, b << 8), (a, b), (a << 4, b << 8 | b)] {
                    let u = UFx16::from_raw(x).serial_mul(UFx16::from_raw(y));
                    assert_eq!((u.product.raw(), u.overflow), oracle_unsigned(x, y));
                    let s = SFx16::from_raw(x).serial_mul(SFx16::from_raw(y));
                    assert_eq!((s.product.raw(), s.overflow), oracle_signed(x, y));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn mul_matches_wide_oracle(a: u16, b: u16) {
            let u = UFx16::from_raw(a).mul_trunc(UFx16::from_raw(b));
            prop_assert_eq!((u.0.raw(), u.1), oracle_unsigned(a, b));
            let s = SFx16::from_raw(a).mul_trunc(SFx16::from_raw(b));
            prop_assert_eq!((s.0.raw(), s.1), oracle_signed(a, b));
            let t = UFx16::from_raw(a).serial_mul(UFx16::from_raw(b));
            prop_assert_eq!((t.product, t.overflow), u);
            prop_assert!(t.clocks <= 17);
            let t = SFx16::from_raw(a).serial_mul(SFx16::from_raw(b));
            prop_assert_eq!((t.product, t.overflow), s);
            prop_assert!(t.clocks <= 16);
        }

        #[test]
        fn encode_truncates(v in 0.0f64..15.999) {
            let d = UFx16::encode(v).unwrap().decode();
            prop_assert!(d <= v && v - d < LSB);
            let s = SFx16::encode(-v / 2.0).unwrap().decode();
            prop_assert!(s >= -v / 2.0 && s + v / 2.0 < LSB);
        }

        #[test]
        fn truncation_bias(x in 0.0f64..3.9, y in 0.0f64..3.9) {
            let a = UFx16::encode(x).unwrap();
            let b = UFx16::encode(y).unwrap();
            let p = a.mul_trunc(b).0.decode();
            prop_assert!(p <= x * y);
            let gap = (x - a.decode()) * (y - b.decode());
            prop_assert!(a.decode() * b.decode() - p < LSB + gap + 1e-12);
        }
    }
}
