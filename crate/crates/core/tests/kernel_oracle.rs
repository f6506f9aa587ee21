//! F32 add/sub/mul measurements against exact rational arithmetic.

mod common;

use amp_core::fpkernel::{exec_fp, FpOp};
use amp_core::nir::Precision;
use common::{check, crafted, random_pairs, sterbenz};

#[test]
fn million_random_pairs_match_exact_arithmetic() {
    for (op, a, b) in random_pairs(0x5eed, 1_000_000) {
        check(op, a, b);
    }
}

#[test]
fn crafted_edge_cases_match_exact_arithmetic() {
    for (a, b) in crafted() {
        for op in [FpOp::Add, FpOp::Sub, FpOp::Mul] {
            check(op, a, b);
            check(op, b, a);
            check(op, -a, b);
        }
    }
}

#[test]
fn sterbenz_differences_are_exact() {
    for (a, b) in sterbenz() {
        let o = exec_fp(FpOp::Sub, a as f64, Some(b as f64), Precision::F32);
        assert!(o.is_exact(), "{a:e} - {b:e}");
    }
}

#[test]
fn overflow_is_flagged_without_error_measure() {
    let o = exec_fp(FpOp::Add, f32::MAX as f64, Some(f32::MAX as f64), Precision::F32);
    assert!(o.range_fault);
    assert!(o.eps.is_nan());
    assert_eq!(o.cancelled_bits, None);
    assert_eq!(o.addend_expdiff, Some(0));
}
