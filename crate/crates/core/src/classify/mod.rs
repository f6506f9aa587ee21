//! Threshold vectors and the four-bin classification.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fpkernel::{RATIO_MAX, RATIO_MIN};
use crate::nir::InstrId;
use crate::profiler::{Entry, NumericalProfile, EXPDIFF_BUCKETS};

/// The seven classification thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    /// Percent of instances for the round-off trigger.
    pub t1: f64,
    /// Error-ratio cutoff in percent.
    pub t2: f64,
    /// Percent of instances for the exponent-difference trigger.
    pub t3: f64,
    /// Exponent-difference cutoff.
    pub t4: u32,
    /// Cancelled-bits cutoff.
    pub t5: u32,
    /// Near-overflow magnitude.
    pub t6: f64,
    /// Near-underflow magnitude.
    pub t7: f64,
}

impl Default for ThresholdVector {
    fn default() -> Self {
        ThresholdVector { t1: 10.0, t2: 25.0, t3: 10.0, t4: 16, t5: 12, t6: 2f64.powi(120), t7: 2f64.powi(-120) }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ThresholdError {
    #[error("bad threshold syntax: {0}")]
    Syntax(String),
    #[error("threshold out of range: {0}")]
    Range(String),
}

/// Parses a decimal number or a power of two written `2^k`.
pub fn parse_value(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.strip_prefix("2^") {
        Some(k) => k.parse::<i32>().ok().map(|k| 2f64.powi(k)),
        None => s.parse().ok(),
    }
}

/// Inverse of [`parse_value`]: powers of two print as `2^k`.
pub fn format_value(v: f64) -> String {
    let bits = v.to_bits();
    let is_pow2 = v > 0.0 && v.is_normal() && bits & ((1u64 << 52) - 1) == 0;
    let k = ((bits >> 52) & 0x7ff) as i32 - 1023;
    if is_pow2 && k.abs() >= 8 {
        format!("2^{k}")
    } else {
        format!("{v}")
    }
}

impl ThresholdVector {
    pub fn components(&self) -> [f64; 7] {
        [self.t1, self.t2, self.t3, self.t4 as f64, self.t5 as f64, self.t6, self.t7]
    }

    pub fn from_components(c: [f64; 7]) -> ThresholdVector {
        ThresholdVector { t1: c[0], t2: c[1], t3: c[2], t4: c[3] as u32, t5: c[4] as u32, t6: c[5], t7: c[6] }
    }

    pub fn check(&self) -> Result<(), ThresholdError> {
        let bad = |m: &str| Err(ThresholdError::Range(m.to_string()));
        if !(0.0..=100.0).contains(&self.t1) || !(0.0..=100.0).contains(&self.t3) {
            return bad("t1 and t3 must lie in [0, 100]");
        }
        if !(self.t2 > 0.0 && self.t2 <= 100.0) {
            return bad("t2 must lie in (0, 100]");
        }
        if self.t4 > 255 {
            return bad("t4 must lie in [0, 255]");
        }
        if self.t5 > 24 {
            return bad("t5 must lie in [0, 24]");
        }
        if !(self.t7 > 0.0 && self.t7 < self.t6 && self.t6 <= f32::MAX as f64) {
            return bad("need 0 < t7 < t6 <= f32::MAX");
        }
        Ok(())
    }

    /// Log-ratio cutoff `ceil(log2(t2 / 100))` of the round-off trigger.
    pub fn ratio_cutoff(&self) -> i32 {
        let r = self.t2 / 100.0;
        let mut k = r.log2().ceil() as i32;
        while 2f64.powi(k - 1) >= r {
            k -= 1;
        }
        while 2f64.powi(k) < r {
            k += 1;
        }
        k
    }

    /// `self ⪯ other`: every component is at least as promoting as in
    /// `other` according to [`monotone_direction`].
    pub fn at_least_as_promoting(&self, other: &ThresholdVector) -> bool {
        let (a, b) = (self.components(), other.components());
        monotone_direction().iter().zip(a.iter().zip(&b)).all(|(d, (x, y))| match d {
            Direction::Decrease => x <= y,
            Direction::Increase => x >= y,
        })
    }
}

impl fmt::Display for ThresholdVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t1={},t2={},t3={},t4={},t5={},t6={},t7={}",
            format_value(self.t1),
            format_value(self.t2),
            format_value(self.t3),
            self.t4,
            self.t5,
            format_value(self.t6),
            format_value(self.t7)
        )
    }
}

impl FromStr for ThresholdVector {
    type Err = ThresholdError;

    /// `t1=..,t2=..,…`; omitted components keep their default.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut c = ThresholdVector::default().components();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| ThresholdError::Syntax(part.to_string()))?;
            let i = match k.trim() {
                "t1" => 0,
                "t2" => 1,
                "t3" => 2,
                "t4" => 3,
                "t5" => 4,
                "t6" => 5,
                "t7" => 6,
                _ => return Err(ThresholdError::Syntax(format!("unknown component {k}"))),
            };
            let x = parse_value(v).ok_or_else(|| ThresholdError::Syntax(part.to_string()))?;
            if (i == 3 || i == 4) && (x.fract() != 0.0 || x < 0.0) {
                return Err(ThresholdError::Syntax(format!("{k} must be a non-negative integer")));
            }
            c[i] = x;
        }
        let t = ThresholdVector::from_components(c);
        t.check()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Decrease,
    Increase,
}

/// Direction in which moving each threshold can only enlarge trigger sets.
pub fn monotone_direction() -> [Direction; 7] {
    use Direction::*;
    [Decrease, Decrease, Decrease, Decrease, Decrease, Decrease, Increase]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bin {
    Cancellation,
    Promotion,
    Benign,
    Other,
}

/// Raw trigger predicates of one instruction, before priority is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Triggers {
    pub cancellation: bool,
    pub roundoff: bool,
    pub expdiff: bool,
    pub range: bool,
}

impl Triggers {
    pub fn promotion(&self) -> bool {
        self.roundoff || self.expdiff || self.range
    }
}

fn exceeds(count: u64, pct: f64, total: u64) -> bool {
    count as f64 * 100.0 > pct * total as f64
}

pub fn triggers(e: &Entry, t: &ThresholdVector) -> Triggers {
    Triggers {
        cancellation: e.max_cancel > t.t5,
        roundoff: exceeds(e.ratio_at_least(t.ratio_cutoff()), t.t1, e.total),
        expdiff: !e.expdiff_hist.is_empty() && exceeds(e.expdiff_above(t.t4), t.t3, e.total),
        range: e.max_abs > t.t6 || e.min_abs_nonzero.is_some_and(|m| m < t.t7) || e.range_faults > 0,
    }
}

pub fn bin_for(tr: Triggers, benign: bool) -> Bin {
    if tr.cancellation {
        Bin::Cancellation
    } else if tr.promotion() {
        Bin::Promotion
    } else if benign {
        Bin::Benign
    } else {
        Bin::Other
    }
}

pub fn bin_of(e: &Entry, t: &ThresholdVector) -> Bin {
    bin_for(triggers(e, t), e.exact == e.total)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Classification {
    pub cancellation_bin: BTreeSet<InstrId>,
    pub promotion_bin: BTreeSet<InstrId>,
    pub benign_bin: BTreeSet<InstrId>,
    pub other_bin: BTreeSet<InstrId>,
}

impl Classification {
    pub fn from_bins(ids: &[InstrId], bins: &[Bin]) -> Classification {
        let mut c = Classification::default();
        for (id, b) in ids.iter().zip(bins) {
            c.bin_mut(*b).insert(id.clone());
        }
        c
    }

    pub fn bin(&self, b: Bin) -> &BTreeSet<InstrId> {
        match b {
            Bin::Cancellation => &self.cancellation_bin,
            Bin::Promotion => &self.promotion_bin,
            Bin::Benign => &self.benign_bin,
            Bin::Other => &self.other_bin,
        }
    }

    fn bin_mut(&mut self, b: Bin) -> &mut BTreeSet<InstrId> {
        match b {
            Bin::Cancellation => &mut self.cancellation_bin,
            Bin::Promotion => &mut self.promotion_bin,
            Bin::Benign => &mut self.benign_bin,
            Bin::Other => &mut self.other_bin,
        }
    }

    pub fn bin_containing(&self, id: &InstrId) -> Option<Bin> {
        [Bin::Cancellation, Bin::Promotion, Bin::Benign, Bin::Other].into_iter().find(|&b| self.bin(b).contains(id))
    }

    pub fn len(&self) -> usize {
        self.cancellation_bin.len() + self.promotion_bin.len() + self.benign_bin.len() + self.other_bin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn classify(np: &NumericalProfile, t: &ThresholdVector) -> Classification {
    let bins: Vec<Bin> = np.entries.iter().map(|e| bin_of(e, t)).collect();
    Classification::from_bins(&np.ids(), &bins)
}

/// Suffix sums over a profile's histograms so that the count queries behind
/// the triggers are constant time; used when classifying whole grids.
#[derive(Debug, Clone)]
pub struct ProfileIndex {
    ids: Vec<InstrId>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
struct Row {
    total: u64,
    benign: bool,
    max_cancel: u32,
    max_abs: f64,
    min_abs: Option<f64>,
    faults: u64,
    ratio_suffix: Vec<u64>,
    expdiff_suffix: Vec<u64>,
}

fn suffix(h: &[u64]) -> Vec<u64> {
    let mut s = vec![0; h.len() + 1];
    for i in (0..h.len()).rev() {
        s[i] = s[i + 1] + h[i];
    }
    s
}

impl ProfileIndex {
    pub fn new(np: &NumericalProfile) -> ProfileIndex {
        let rows = np
            .entries
            .iter()
            .map(|e| Row {
                total: e.total,
                benign: e.exact == e.total,
                max_cancel: e.max_cancel,
                max_abs: e.max_abs,
                min_abs: e.min_abs_nonzero,
                faults: e.range_faults,
                ratio_suffix: suffix(&e.errratio_hist),
                expdiff_suffix: suffix(&e.expdiff_hist),
            })
            .collect();
        ProfileIndex { ids: np.ids(), rows }
    }

    pub fn ids(&self) -> &[InstrId] {
        &self.ids
    }

    pub fn triggers(&self, i: usize, t: &ThresholdVector, cutoff: i32) -> Triggers {
        let r = &self.rows[i];
        let k = (cutoff.clamp(RATIO_MIN, RATIO_MAX + 1) - RATIO_MIN) as usize;
        let ed = if r.expdiff_suffix.len() > 1 {
            exceeds(r.expdiff_suffix[(t.t4 as usize + 1).min(EXPDIFF_BUCKETS)], t.t3, r.total)
        } else {
            false
        };
        Triggers {
            cancellation: r.max_cancel > t.t5,
            roundoff: exceeds(r.ratio_suffix[k], t.t1, r.total),
            expdiff: ed,
            range: r.max_abs > t.t6 || r.min_abs.is_some_and(|m| m < t.t7) || r.faults > 0,
        }
    }

    /// Bin of every entry, in profile order.
    pub fn bins(&self, t: &ThresholdVector) -> Vec<Bin> {
        let cutoff = t.ratio_cutoff();
        (0..self.rows.len()).map(|i| bin_for(self.triggers(i, t, cutoff), self.rows[i].benign)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_cutoffs_of_default_grid() {
        let cut = |t2: f64| ThresholdVector { t2, ..Default::default() }.ratio_cutoff();
        let got: Vec<i32> = [3.0, 6.0, 12.0, 25.0, 50.0, 100.0].map(cut).to_vec();
        assert_eq!(got, vec![-5, -4, -3, -2, -1, 0]);
    }

    #[test]
    fn text_round_trip() {
        let t: ThresholdVector = "t1=5,t2=3,t3=50,t4=8,t5=23,t6=2^125,t7=2^-96".parse().unwrap();
        assert_eq!(t.t6, 2f64.powi(125));
        assert_eq!(t.to_string(), "t1=5,t2=3,t3=50,t4=8,t5=23,t6=2^125,t7=2^-96");
        assert_eq!(t.to_string().parse::<ThresholdVector>().unwrap(), t);
        assert!("t5=30".parse::<ThresholdVector>().is_err());
        assert!("t4=1.5".parse::<ThresholdVector>().is_err());
        assert!("t9=1".parse::<ThresholdVector>().is_err());
    }

    #[test]
    fn dominance_follows_direction() {
        let a = ThresholdVector::default();
        let b = ThresholdVector { t5: 4, t7: 2f64.powi(-100), ..a };
        assert!(b.at_least_as_promoting(&a));
        assert!(!a.at_least_as_promoting(&b));
        assert!(a.at_least_as_promoting(&a));
    }
}
