//! Exact rational oracle for F32 add/sub/mul measurements.

#![allow(dead_code)]

use amp_core::fpkernel::{exec_fp, FpOp, FpOutcome};
use amp_core::nir::Precision;
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every quantity below is an integer multiple of 2^-SHIFT.
const SHIFT: i64 = 400;

fn scaled(x: f64) -> BigInt {
    if x == 0.0 {
        return BigInt::from(0);
    }
    let bits = x.to_bits();
    let e = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (m, e) = if e == 0 { (frac, -1074) } else { (frac | (1 << 52), e - 1075) };
    assert!(e + SHIFT >= 0, "{x:e} below the fixed-point grid");
    let v = BigInt::from(m) << (e + SHIFT) as usize;
    if x < 0.0 {
        -v
    } else {
        v
    }
}

fn exact(op: FpOp, a: f64, b: f64) -> BigInt {
    match op {
        FpOp::Add => scaled(a) + scaled(b),
        FpOp::Sub => scaled(a) - scaled(b),
        FpOp::Mul => (scaled(a) * scaled(b)) >> SHIFT as usize,
        _ => unreachable!(),
    }
}

/// Unbiased exponent straight from the binary32 exponent field.
fn field_exponent(x: f32) -> i32 {
    let e = ((x.to_bits() >> 23) & 0xff) as i32;
    if e == 0 {
        -126
    } else {
        e - 127
    }
}

fn native(op: FpOp, a: f32, b: f32) -> f32 {
    match op {
        FpOp::Add => a + b,
        FpOp::Sub => a - b,
        FpOp::Mul => a * b,
        _ => unreachable!(),
    }
}

pub fn check(op: FpOp, a: f32, b: f32) {
    let o: FpOutcome = exec_fp(op, a as f64, Some(b as f64), Precision::F32);
    let c = native(op, a, b);
    assert_eq!(o.result.to_bits(), (c as f64).to_bits(), "{op:?} {a:e} {b:e}");
    if !c.is_finite() {
        assert!(o.range_fault);
        return;
    }
    let err = exact(op, a as f64, b as f64) - scaled(c as f64);
    assert_eq!(scaled(o.eps), err, "eps of {op:?} {a:e} {b:e}");
    assert_eq!(o.is_exact(), err == BigInt::from(0));

    let (ea, eb, ec) = (field_exponent(a), field_exponent(b), field_exponent(c));
    if matches!(op, FpOp::Add | FpOp::Sub) {
        let want = if a == 0.0 || b == 0.0 { 0 } else { ea.abs_diff(eb) };
        assert_eq!(o.addend_expdiff, Some(want), "expdiff {op:?} {a:e} {b:e}");
        let opposite = (a.to_bits() >> 31) != (b.to_bits() >> 31);
        let eff_sub = (op == FpOp::Add) == opposite;
        let want =
            (eff_sub && a != 0.0 && b != 0.0).then(|| if c == 0.0 { 0 } else { (ea.max(eb) - ec).max(0) as u32 });
        assert_eq!(o.cancelled_bits, want, "cancel {op:?} {a:e} {b:e}");
    } else {
        assert_eq!(o.addend_expdiff, None);
        assert_eq!(o.cancelled_bits, None);
    }
}

fn random_f32(rng: &mut ChaCha8Rng) -> f32 {
    loop {
        let x = f32::from_bits(rng.gen());
        if x.is_finite() {
            return x;
        }
    }
}

/// `count` seeded pairs mixing unrelated and nearby magnitudes.
pub fn random_pairs(seed: u64, count: u32) -> impl Iterator<Item = (FpOp, f32, f32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(move |i| {
        let a = random_f32(&mut rng);
        let b = match i % 4 {
            0 => random_f32(&mut rng),
            // Nearby magnitudes exercise cancellation and partial absorption.
            1 => f32::from_bits(a.to_bits() ^ (rng.gen::<u32>() & 0x00ff_ffff)),
            2 => -f32::from_bits(a.to_bits().wrapping_add(rng.gen_range(0..64))),
            _ => a * rng.gen_range(0.25f32..4.0),
        };
        let b = if b.is_finite() { b } else { 1.0 };
        ([FpOp::Add, FpOp::Sub, FpOp::Mul][i as usize % 3], a, b)
    })
}

pub fn crafted() -> Vec<(f32, f32)> {
    let tiny = f32::from_bits(1);
    let sub_max = f32::from_bits(0x007f_ffff);
    let min_norm = f32::MIN_POSITIVE;
    let big = f32::MAX;
    let below_big = f32::from_bits(big.to_bits() - 1);
    let mut v = vec![
        (tiny, tiny),
        (tiny, -tiny),
        (sub_max, tiny),
        (sub_max, min_norm),
        (min_norm, -sub_max),
        (min_norm, tiny),
        (1.0, tiny),
        (1e-20, 1e-20),
        (3e-39, 7e-39),
        (big, below_big),
        (big, -below_big),
        (big, big),
        (big, 2.0),
        (below_big, 0.5),
        (big, f32::EPSILON),
        (0.0, 0.0),
        (-0.0, 0.0),
        (0.0, 3.5),
        (-2.5, 0.0),
        (1.0, 1.0),
        (1.0, 0.999_999_94),
        (16_777_216.0, 1.0),
        (16_777_217.0, -1.0),
    ];
    v.extend(sterbenz());
    v
}

/// Pairs with y/2 <= x <= 2y, whose difference is exact.
pub fn sterbenz() -> Vec<(f32, f32)> {
    let mut v = Vec::new();
    for k in [-140, -100, -10, 0, 10, 100, 126] {
        let y = 2f32.powi(k) * 1.337;
        for s in [0.5f32, 0.75, 0.999, 1.0, 1.5, 2.0] {
            v.push((y * s, y));
        }
    }
    v
}
