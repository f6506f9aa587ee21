//! Double-double arithmetic: just enough to evaluate exp and sin to roughly
//! 100 significant bits, the reference for F64 intrinsic errors.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const LN2: [f64; 3] = [std::f64::consts::LN_2, 2.3190468138462996e-17, 5.707708438416212e-34];
const PIO2: [f64; 3] = [std::f64::consts::FRAC_PI_2, 6.123233995736766e-17, -1.4973849048591698e-33];

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::norm(s, e + f)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + -o
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::norm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn norm(hi: f64, lo: f64) -> Dd {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    pub fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        Dd::norm(p, e + self.lo * b)
    }

    pub fn div_f64(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let r = self.sub(Dd::from_f64(q1).mul_f64(b));
        let q2 = r.hi / b;
        let r = r.sub(Dd::from_f64(q2).mul_f64(b));
        let q3 = r.hi / b;
        let (q1, q2) = quick_two_sum(q1, q2);
        Dd { hi: q1, lo: q2 }.add(Dd::from_f64(q3))
    }

    /// `self - k * c` with `c` given as three non-overlapping parts.
    fn reduce(self, k: f64, c: &[f64; 3]) -> Dd {
        c.iter().fold(self, |r, &ci| {
            let (p, e) = two_prod(k, ci);
            r.sub(Dd { hi: p, lo: e })
        })
    }

    fn scale(self, k: i32) -> Dd {
        let f = |x: f64| ldexp(x, k);
        Dd { hi: f(self.hi), lo: f(self.lo) }
    }
}

fn ldexp(x: f64, k: i32) -> f64 {
    let step = |x: f64, e: i32| x * f64::from_bits(((e + 1023) as u64) << 52);
    let mut x = x;
    let mut k = k;
    while k > 1000 {
        x = step(x, 1000);
        k -= 1000;
    }
    while k < -1000 {
        x = step(x, -1000);
        k += 1000;
    }
    step(x, k)
}

const TINY: f64 = 1e-36;

/// e^x in double-double.
pub fn exp(x: f64) -> Dd {
    if x.is_nan() {
        return Dd::from_f64(f64::NAN);
    }
    if x > 709.8 {
        return Dd::from_f64(f64::INFINITY);
    }
    if x < -745.2 {
        return Dd::ZERO;
    }
    let k = (x / LN2[0]).round();
    let r = Dd::from_f64(x).reduce(k, &LN2).scale(-10);
    // expm1 of the reduced argument by Taylor series.
    let mut term = r;
    let mut s = r;
    let mut n = 1.0;
    while term.hi.abs() > TINY {
        n += 1.0;
        term = term.mul(r).div_f64(n);
        s = s.add(term);
    }
    for _ in 0..10 {
        s = s.mul(s.add(Dd::from_f64(2.0)));
    }
    s.add(Dd::ONE).scale(k as i32)
}

fn sin_taylor(r: Dd) -> Dd {
    let r2 = r.mul(r);
    let mut term = r;
    let mut s = r;
    let mut n = 1.0;
    while term.hi.abs() > TINY {
        term = term.mul(r2).div_f64(-(n + 1.0) * (n + 2.0));
        n += 2.0;
        s = s.add(term);
    }
    s
}

fn cos_taylor(r: Dd) -> Dd {
    let r2 = r.mul(r);
    let mut term = Dd::ONE;
    let mut s = Dd::ONE;
    let mut n = 0.0;
    while term.hi.abs() > TINY {
        term = term.mul(r2).div_f64(-(n + 1.0) * (n + 2.0));
        n += 2.0;
        s = s.add(term);
    }
    s
}

/// sin(x) in double-double. Argument reduction uses a 161-bit pi/2, so the
/// result keeps its full accuracy for |x| below about 2^20.
pub fn sin(x: f64) -> Dd {
    if !x.is_finite() {
        return Dd::from_f64(f64::NAN);
    }
    let k = (x / PIO2[0]).round();
    let r = Dd::from_f64(x).reduce(k, &PIO2);
    match (k as i64).rem_euclid(4) {
        0 => sin_taylor(r),
        1 => cos_taylor(r),
        2 => sin_taylor(r).neg(),
        _ => cos_taylor(r).neg(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // (x, hi, lo) computed with 300-bit arithmetic.
    #[allow(clippy::approx_constant)]
    const EXP_REF: &[(f64, f64, f64)] = &[
        (0.0, 1.0, 0.0),
        (1.0, 2.718281828459045, 1.4456468917292502e-16),
        (-1.0, 0.36787944117144233, -1.2428753672788363e-17),
        (0.5, 1.6487212707001282, -4.731568479435833e-17),
        (10.0, 22026.465794806718, -1.3780134700517372e-12),
        (-10.0, 4.5399929762484854e-05, -2.637554055327531e-21),
        (3.25, 25.790339917193062, -2.0220949927714329e-16),
        (-7.125, 0.0008047330101246132, 2.4410959048953827e-20),
        (100.0, 2.6881171418161356e+43, -1.6101271449201627e+27),
        (-600.25, 2.0641309109295095e-261, -2.1403995749322006e-280),
        (709.0, 8.218407461554972e+307, -1.955965507696277e+291),
        (1e-05, 1.00001000005, 9.70188425858504e-17),
        (0.6931471805599453, 2.0, -4.638093627692599e-17),
        (-0.3, 0.7408182206817179, -1.805530505953e-18),
    ];
    #[allow(clippy::approx_constant)]
    const SIN_REF: &[(f64, f64, f64)] = &[
        (0.0, 0.0, 0.0),
        (1.0, 0.8414709848078965, 1.776845092935536e-18),
        (-1.0, -0.8414709848078965, -1.776845092935536e-18),
        (0.5, 0.479425538604203, -5.103969860556013e-18),
        (3.0, 0.1411200080598672, 8.577269787017502e-18),
        (10.0, -0.5440211108893698, -3.8949898668223557e-17),
        (-10.0, 0.5440211108893698, 3.8949898668223557e-17),
        (1.5707963267948966, 1.0, -1.874699728327322e-33),
        (3.141592653589793, 1.2246467991473532e-16, -2.99476980971834e-33),
        (6.283185307179586, -2.4492935982947064e-16, 5.9895396194366814e-33),
        (100.0, -0.5063656411097588, -3.050947053792115e-18),
        (12345.678, -0.7040813137533816, -1.9646969196301474e-17),
        (-9.99, 0.5356033346142913, 2.6443037190308712e-18),
        (1e-08, 1e-08, -1.6666666666666668e-25),
        (1048575.5, -0.1624508310778367, 2.71266961205879e-18),
    ];

    fn close(got: Dd, hi: f64, lo: f64) -> bool {
        let d = got - Dd { hi, lo };
        d.hi.abs() <= hi.abs() * 2f64.powi(-100)
    }

    #[test]
    fn exp_matches_reference() {
        for &(x, hi, lo) in EXP_REF {
            assert!(close(exp(x), hi, lo), "exp({x}) = {:?}", exp(x));
        }
    }

    #[test]
    fn sin_matches_reference() {
        for &(x, hi, lo) in SIN_REF {
            assert!(close(sin(x), hi, lo), "sin({x}) = {:?}", sin(x));
        }
    }

    #[test]
    fn two_prod_is_exact() {
        let (p, e) = two_prod(1.0 + f64::EPSILON, 1.0 - f64::EPSILON);
        assert_eq!(p, 1.0);
        assert_eq!(e, -f64::EPSILON * f64::EPSILON);
    }
}
