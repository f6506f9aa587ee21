//! Instrumented execution of a single floating-point operation.
//!
//! Every operation returns its correctly rounded result together with the
//! measured rounding error `ε = exact − c` and the exponent-only statistics
//! the classifier works with.

pub mod dd;

use crate::nir::{FBinOp, Intrinsic, Precision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FpOp {
    Add,
    Sub,
    Mul,
    Div,
    Sin,
    Exp,
    Sqrt,
    Fabs,
}

impl From<FBinOp> for FpOp {
    fn from(op: FBinOp) -> Self {
        match op {
            FBinOp::Add => FpOp::Add,
            FBinOp::Sub => FpOp::Sub,
            FBinOp::Mul => FpOp::Mul,
            FBinOp::Div => FpOp::Div,
        }
    }
}

impl From<Intrinsic> for FpOp {
    fn from(f: Intrinsic) -> Self {
        match f {
            Intrinsic::Sin => FpOp::Sin,
            Intrinsic::Exp => FpOp::Exp,
            Intrinsic::Sqrt => FpOp::Sqrt,
            Intrinsic::Fabs => FpOp::Fabs,
        }
    }
}

impl FpOp {
    pub fn is_binary(self) -> bool {
        matches!(self, FpOp::Add | FpOp::Sub | FpOp::Mul | FpOp::Div)
    }
}

/// Bounds of the error-ratio histogram.
pub const RATIO_MIN: i32 = -64;
pub const RATIO_MAX: i32 = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    /// Mantissa length used in the error-ratio formula for F32.
    pub p_f32: i32,
    pub p_f64: i32,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { p_f32: 23, p_f64: 52 }
    }
}

impl KernelConfig {
    pub fn mantissa_len(&self, prec: Precision) -> i32 {
        match prec {
            Precision::F32 => self.p_f32,
            Precision::F64 => self.p_f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpOutcome {
    /// Rounded result, exactly representable at the operation's precision.
    pub result: f64,
    /// Measured error `exact − result`; exact for F32 add/sub/mul.
    pub eps: f64,
    /// `None` when the result is exact. Range faults report `i32::MAX`.
    pub eps_exponent: Option<i32>,
    /// `None` when exact, else clamped to `[RATIO_MIN, RATIO_MAX]`.
    pub errratio_log: Option<i32>,
    /// Add/sub only.
    pub addend_expdiff: Option<u32>,
    /// Effective subtractions only.
    pub cancelled_bits: Option<u32>,
    pub abs_result: f64,
    /// An input or the result is NaN or infinite.
    pub range_fault: bool,
}

impl FpOutcome {
    pub fn is_exact(&self) -> bool {
        self.eps_exponent.is_none()
    }
}

/// Unbiased binary exponent `floor(log2 |x|)` as read from the exponent
/// field at `prec`; subnormals report the minimum normal exponent.
/// Zero reports the minimum normal exponent as well.
pub fn exponent(x: f64, prec: Precision) -> i32 {
    let e = ((x.to_bits() >> 52) & 0x7ff) as i32;
    let e = if e == 0 { -1022 } else { e - 1023 };
    match prec {
        Precision::F32 => e.max(-126),
        Precision::F64 => e,
    }
}

/// `eps_exp + p − c_exp`, clamped; `None` stays exact.
pub fn errratio_log(eps_exp: Option<i32>, c_exp: i32, p: i32) -> Option<i32> {
    eps_exp.map(|e| (e as i64 + p as i64 - c_exp as i64).clamp(RATIO_MIN as i64, RATIO_MAX as i64) as i32)
}

/// Rounded result of `op` at `prec` without any measurement. Inputs must be
/// representable at `prec`.
#[inline]
pub fn compute(op: FpOp, a: f64, b: f64, prec: Precision) -> f64 {
    match prec {
        Precision::F32 => {
            let (x, y) = (a as f32, b as f32);
            (match op {
                FpOp::Add => x + y,
                FpOp::Sub => x - y,
                FpOp::Mul => x * y,
                FpOp::Div => x / y,
                FpOp::Sqrt => x.sqrt(),
                FpOp::Fabs => x.abs(),
                FpOp::Sin => a.sin() as f32,
                FpOp::Exp => a.exp() as f32,
            }) as f64
        }
        Precision::F64 => match op {
            FpOp::Add => a + b,
            FpOp::Sub => a - b,
            FpOp::Mul => a * b,
            FpOp::Div => a / b,
            FpOp::Sqrt => a.sqrt(),
            FpOp::Fabs => a.abs(),
            FpOp::Sin => a.sin(),
            FpOp::Exp => a.exp(),
        },
    }
}

fn two_sum_f32(a: f32, b: f32) -> f32 {
    let s = a + b;
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

fn measure_eps(op: FpOp, a: f64, b: f64, c: f64, prec: Precision) -> f64 {
    match prec {
        Precision::F32 => match op {
            FpOp::Add => two_sum_f32(a as f32, b as f32) as f64,
            FpOp::Sub => two_sum_f32(a as f32, -(b as f32)) as f64,
            FpOp::Mul => a * b - c,
            FpOp::Div => a / b - c,
            FpOp::Sqrt => a.sqrt() - c,
            FpOp::Fabs => 0.0,
            FpOp::Sin => a.sin() - c,
            FpOp::Exp => a.exp() - c,
        },
        Precision::F64 => match op {
            FpOp::Add => dd::two_sum(a, b).1,
            FpOp::Sub => dd::two_sum(a, -b).1,
            FpOp::Mul => a.mul_add(b, -c),
            FpOp::Div => (-c).mul_add(b, a) / b,
            FpOp::Sqrt => (-c).mul_add(c, a) / (2.0 * c),
            FpOp::Fabs => 0.0,
            FpOp::Sin => (dd::sin(a) - dd::Dd::from_f64(c)).hi,
            FpOp::Exp => (dd::exp(a) - dd::Dd::from_f64(c)).hi,
        },
    }
}

/// Executes `op` at `prec` with the default [`KernelConfig`].
pub fn exec_fp(op: FpOp, a: f64, b: Option<f64>, prec: Precision) -> FpOutcome {
    exec_fp_with(&KernelConfig::default(), op, a, b, prec)
}

pub fn exec_fp_with(cfg: &KernelConfig, op: FpOp, a: f64, b: Option<f64>, prec: Precision) -> FpOutcome {
    let bv = b.unwrap_or(0.0);
    let c = compute(op, a, bv, prec);
    outcome(cfg, op, a, bv, c, prec)
}

/// Measurement for an already computed result `c = compute(op, a, b, prec)`.
pub(crate) fn outcome(cfg: &KernelConfig, op: FpOp, a: f64, b: f64, c: f64, prec: Precision) -> FpOutcome {
    let additive = matches!(op, FpOp::Add | FpOp::Sub);
    let range_fault = !c.is_finite() || !a.is_finite() || (op.is_binary() && !b.is_finite());
    let (ea, eb, ec) = (exponent(a, prec), exponent(b, prec), exponent(c, prec));

    let addend_expdiff = additive.then(|| if a == 0.0 || b == 0.0 || range_fault { 0 } else { ea.abs_diff(eb) });
    let effective_sub = match op {
        FpOp::Add => a.is_sign_negative() != b.is_sign_negative(),
        FpOp::Sub => a.is_sign_negative() == b.is_sign_negative(),
        _ => false,
    };
    let cancelled_bits = (effective_sub && a != 0.0 && b != 0.0 && !range_fault).then(|| {
        if c == 0.0 {
            0
        } else {
            (ea.max(eb) - ec).max(0) as u32
        }
    });

    let abs_result = c.abs();
    if range_fault {
        return FpOutcome {
            result: c,
            eps: f64::NAN,
            eps_exponent: Some(i32::MAX),
            errratio_log: Some(RATIO_MAX),
            addend_expdiff,
            cancelled_bits,
            abs_result,
            range_fault,
        };
    }

    let eps = measure_eps(op, a, b, c, prec);
    let (eps_exponent, errratio) = if eps == 0.0 {
        (None, None)
    } else {
        let ee = exponent(eps, Precision::F64);
        let r = if c == 0.0 { Some(RATIO_MAX) } else { errratio_log(Some(ee), ec, cfg.mantissa_len(prec)) };
        (Some(ee), r)
    };
    FpOutcome {
        result: c,
        eps,
        eps_exponent,
        errratio_log: errratio,
        addend_expdiff,
        cancelled_bits,
        abs_result,
        range_fault,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Precision::{F32, F64};

    #[test]
    fn exact_sum() {
        let o = exec_fp(FpOp::Add, 1.0, Some(1.0), F32);
        assert_eq!(o.result, 2.0);
        assert!(o.is_exact());
        assert_eq!(o.errratio_log, None);
    }

    #[test]
    fn small_addend_is_absorbed() {
        let t = 2f64.powi(-30);
        let o = exec_fp(FpOp::Add, 1.0, Some(t), F32);
        assert_eq!(o.result, 1.0);
        assert_eq!(o.eps, t);
        assert_eq!(o.eps_exponent, Some(-30));
        assert_eq!(o.addend_expdiff, Some(30));
        assert_eq!(o.errratio_log, Some(-7));
    }

    #[test]
    fn cancellation_of_near_one() {
        let b = 0.9999999f32 as f64;
        let o = exec_fp(FpOp::Sub, 1.0, Some(b), F32);
        assert_eq!(o.cancelled_bits, Some(23));
        assert!(o.is_exact());
    }

    #[test]
    fn sterbenz_subtraction() {
        let o = exec_fp(FpOp::Sub, 2.0, Some(1.0), F32);
        assert_eq!(o.result, 1.0);
        assert!(o.is_exact());
        assert_eq!(o.cancelled_bits, Some(1));
    }

    #[test]
    fn ratio_formula() {
        assert_eq!(errratio_log(None, 5, 23), None);
        assert_eq!(errratio_log(Some(7 - 23), 7, 23), Some(0));
        assert_eq!(errratio_log(Some(-30), 0, 23), Some(-7));
        assert_eq!(errratio_log(Some(-1000), 0, 23), Some(RATIO_MIN));
    }

    #[test]
    fn exponents_clamp_subnormals() {
        assert_eq!(exponent(1.0, F32), 0);
        assert_eq!(exponent(0.75, F32), -1);
        assert_eq!(exponent(f32::from_bits(1) as f64, F32), -126);
        assert_eq!(exponent(f64::from_bits(1), F64), -1022);
    }

    #[test]
    fn overflow_is_a_range_fault() {
        let o = exec_fp(FpOp::Mul, f32::MAX as f64, Some(2.0), F32);
        assert!(o.range_fault);
        assert!(o.result.is_infinite());
        assert_eq!(o.errratio_log, Some(RATIO_MAX));
        let o = exec_fp(FpOp::Sqrt, -1.0, None, F64);
        assert!(o.range_fault);
    }

    #[test]
    fn underflow_to_zero_takes_the_top_bucket() {
        let o = exec_fp(FpOp::Div, 1e-30, Some(1e30), F32);
        assert_eq!(o.result, 0.0);
        assert_eq!(o.errratio_log, Some(RATIO_MAX));
    }

    #[test]
    fn f64_product_error_is_fma_residual() {
        let a = 1.0 + f64::EPSILON;
        let o = exec_fp(FpOp::Mul, a, Some(a), F64);
        assert_eq!(o.eps, f64::EPSILON * f64::EPSILON);
    }

    #[test]
    fn f64_intrinsics_measure_nonzero_error() {
        let o = exec_fp(FpOp::Sin, 1.0, None, F64);
        assert!(o.eps.abs() < 1.2e-16 && o.eps != 0.0);
        assert!(o.errratio_log.unwrap() <= 0);
        let o = exec_fp(FpOp::Exp, 1.0, None, F64);
        assert!((o.eps - 1.4456468917292502e-16).abs() < 1e-30);
    }

    #[test]
    fn mantissa_length_is_configurable() {
        let cfg = KernelConfig { p_f32: 24, ..Default::default() };
        let o = exec_fp_with(&cfg, FpOp::Add, 1.0, Some(2f64.powi(-30)), F32);
        assert_eq!(o.errratio_log, Some(-6));
    }
}
