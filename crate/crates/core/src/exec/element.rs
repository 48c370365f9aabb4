use std::fmt::Debug;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ast::{ElemKind, PrimOp};

/// Scalar element of a buffer. Integer arithmetic wraps, and integer division
/// by zero yields zero, so every reordering of `+` and `*` is exact.
pub trait Element: Copy + PartialEq + Debug + Default + Send + Sync + 'static {
    const KIND: ElemKind;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    /// Bit pattern used for checksums; `-0.0` maps to the bits of `0.0`.
    fn canonical_bits(self) -> u64;
    fn apply(op: PrimOp, a: Self, b: Self) -> Self;
    /// Equality up to `rel` relative error; exact for integers.
    fn close(a: Self, b: Self, rel: f64) -> bool;
}

impl Element for i64 {
    const KIND: ElemKind = ElemKind::Int;

    fn from_f64(v: f64) -> Self {
        v as i64
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn canonical_bits(self) -> u64 {
        self as u64
    }

    #[inline(always)]
    fn apply(op: PrimOp, a: Self, b: Self) -> Self {
        match op {
            PrimOp::Add => a.wrapping_add(b),
            PrimOp::Mul => a.wrapping_mul(b),
            PrimOp::Sub => a.wrapping_sub(b),
            PrimOp::Div => {
                if b == 0 {
                    0
                } else {
                    a.wrapping_div(b)
                }
            }
            PrimOp::Min => a.min(b),
            PrimOp::Max => a.max(b),
        }
    }

    fn close(a: Self, b: Self, _rel: f64) -> bool {
        a == b
    }
}

impl Element for f64 {
    const KIND: ElemKind = ElemKind::Float;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn canonical_bits(self) -> u64 {
        if self == 0.0 {
            0
        } else {
            self.to_bits()
        }
    }

    #[inline(always)]
    fn apply(op: PrimOp, a: Self, b: Self) -> Self {
        match op {
            PrimOp::Add => a + b,
            PrimOp::Mul => a * b,
            PrimOp::Sub => a - b,
            PrimOp::Div => a / b,
            PrimOp::Min => a.min(b),
            PrimOp::Max => a.max(b),
        }
    }

    fn close(a: Self, b: Self, rel: f64) -> bool {
        if a == b || (a.is_nan() && b.is_nan()) {
            return true;
        }
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }
}

/// Seed for benchmark and check inputs unless overridden.
pub const DEFAULT_SEED: u64 = 0x5eed_2018;

/// `len` small integers drawn uniformly from `lo..=hi`.
pub fn fill<T: Element>(len: usize, seed: u64, lo: i64, hi: i64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| T::from_f64(rng.gen_range(lo..=hi) as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_division_by_zero_is_zero() {
        assert_eq!(i64::apply(PrimOp::Div, 7, 0), 0);
        assert_eq!(i64::apply(PrimOp::Div, 7, 2), 3);
    }

    #[test]
    fn wrapping_is_order_independent() {
        let xs = [i64::MAX, 3, i64::MIN + 5, -7];
        let fwd = xs.iter().fold(0i64, |a, &b| i64::apply(PrimOp::Add, a, b));
        let bwd = xs.iter().rev().fold(0i64, |a, &b| i64::apply(PrimOp::Add, a, b));
        assert_eq!(fwd, bwd);
    }

    #[test]
    fn negative_zero_checksums_as_zero() {
        assert_eq!((-0.0f64).canonical_bits(), 0.0f64.canonical_bits());
        assert!(f64::close(1.0, 1.0 + 1e-12, 1e-9));
        assert!(!f64::close(1.0, 1.001, 1e-9));
    }

    #[test]
    fn fill_is_seeded() {
        let a: Vec<i64> = fill(16, 3, -4, 4);
        assert_eq!(a, fill::<i64>(16, 3, -4, 4));
        assert_ne!(a, fill::<i64>(16, 4, -4, 4));
        assert!(a.iter().all(|v| (-4..=4).contains(v)));
    }
}
