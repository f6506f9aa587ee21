use std::collections::BTreeMap;

/// Analytic throughput model over dynamic opcode counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostModel {
    /// Every float operation and cast costs one unit.
    Scalar,
    /// SIMD registers of `width` bits: an F32 operation costs `32/width`,
    /// an F64 operation `64/width`, and a cast `64/width` plus `shuffle`.
    Vector { width: u32, shuffle: f64 },
}

impl CostModel {
    pub fn vector(width: u32) -> CostModel {
        CostModel::Vector { width, shuffle: 64.0 / width as f64 }
    }
}

fn is_cast(key: &str) -> bool {
    key == "fpext" || key == "fptrunc"
}

fn is_float_op(key: &str) -> bool {
    ["fadd.", "fsub.", "fmul.", "fdiv.", "fcall."].iter().any(|p| key.starts_with(p))
}

/// Dynamic cast count.
pub fn cast_count(counts: &BTreeMap<String, u64>) -> u64 {
    counts.iter().filter(|(k, _)| is_cast(k)).map(|(_, c)| c).sum()
}

/// Dynamic float arithmetic count.
pub fn float_op_count(counts: &BTreeMap<String, u64>) -> u64 {
    counts.iter().filter(|(k, _)| is_float_op(k)).map(|(_, c)| c).sum()
}

/// Loads, stores, constants and integer work are free in both models.
pub fn cost_estimate(counts: &BTreeMap<String, u64>, model: CostModel) -> f64 {
    let mut total = 0.0;
    for (k, &c) in counts {
        let unit = match model {
            CostModel::Scalar if is_cast(k) || is_float_op(k) => 1.0,
            CostModel::Scalar => 0.0,
            CostModel::Vector { width, shuffle } => {
                let w = width as f64;
                if is_cast(k) {
                    64.0 / w + shuffle
                } else if is_float_op(k) && k.ends_with(".f64") {
                    64.0 / w
                } else if is_float_op(k) {
                    32.0 / w
                } else {
                    0.0
                }
            }
        };
        total += unit * c as f64;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(v: &[(&str, u64)]) -> BTreeMap<String, u64> {
        v.iter().map(|(k, c)| (k.to_string(), *c)).collect()
    }

    #[test]
    fn uniform_endpoints_differ_by_two() {
        let s = counts(&[("fmul.f32", 10), ("fcall.sin.f32", 3), ("load", 50)]);
        let d = counts(&[("fmul.f64", 10), ("fcall.sin.f64", 3), ("load", 50)]);
        let m = CostModel::vector(256);
        assert_eq!(cost_estimate(&d, m), 2.0 * cost_estimate(&s, m));
        assert_eq!(cost_estimate(&s, CostModel::Scalar), 13.0);
    }

    #[test]
    fn casts_cost_extra() {
        let mixed = counts(&[("fmul.f32", 9), ("fmul.f64", 1), ("fpext", 2), ("fptrunc", 1)]);
        assert_eq!(cost_estimate(&mixed, CostModel::Scalar), 13.0);
        assert_eq!(cost_estimate(&mixed, CostModel::vector(64)), 9.0 * 0.5 + 1.0 + 3.0 * 2.0);
        assert_eq!(cast_count(&mixed), 3);
        assert_eq!(float_op_count(&mixed), 10);
    }
}
