//! Aggregation of per-instance outcomes into per-instruction statistics.
//!
//! A profile has one [`Entry`] per static float arithmetic instruction and
//! keeps only histograms and extrema, so its size depends on the program and
//! not on how long it ran. Every classification predicate can be evaluated
//! from these aggregates after the fact.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fpkernel::{FpOutcome, KernelConfig, RATIO_MAX, RATIO_MIN};
use crate::interp::{ExecError, ExecInput, ExecOutput, Plan, Sink};
use crate::nir::{def_use_graph, print_program, DefUseGraph, InstrId, Op, PrecisionAssignment, Program};

pub const RATIO_BUCKETS: usize = (RATIO_MAX - RATIO_MIN + 1) as usize;
pub const EXPDIFF_BUCKETS: usize = 256;

/// Statistics of one static instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub function: String,
    pub dest: String,
    pub opcode: String,
    pub total: u64,
    pub exact: u64,
    /// Bucket `k` counts instances with `errratio_log == RATIO_MIN + k`.
    pub errratio_hist: Vec<u64>,
    /// Empty unless the instruction is an add or sub.
    pub expdiff_hist: Vec<u64>,
    pub max_cancel: u32,
    /// Over finite results only.
    pub max_abs: f64,
    pub min_abs_nonzero: Option<f64>,
    pub range_faults: u64,
}

impl Entry {
    pub fn new(id: &InstrId, op: &Op) -> Entry {
        let additive = matches!(op, Op::FBin { op: crate::nir::FBinOp::Add | crate::nir::FBinOp::Sub, .. });
        Entry {
            function: id.function.clone(),
            dest: id.dest.clone(),
            opcode: op.label(),
            total: 0,
            exact: 0,
            errratio_hist: vec![0; RATIO_BUCKETS],
            expdiff_hist: if additive { vec![0; EXPDIFF_BUCKETS] } else { Vec::new() },
            max_cancel: 0,
            max_abs: 0.0,
            min_abs_nonzero: None,
            range_faults: 0,
        }
    }

    pub fn id(&self) -> InstrId {
        InstrId::new(&self.function, &self.dest)
    }

    pub fn record(&mut self, o: &FpOutcome) {
        self.total += 1;
        match o.errratio_log {
            None => self.exact += 1,
            Some(r) => self.errratio_hist[(r.clamp(RATIO_MIN, RATIO_MAX) - RATIO_MIN) as usize] += 1,
        }
        if let (Some(d), false) = (o.addend_expdiff, self.expdiff_hist.is_empty()) {
            self.expdiff_hist[(d as usize).min(EXPDIFF_BUCKETS - 1)] += 1;
        }
        if let Some(c) = o.cancelled_bits {
            self.max_cancel = self.max_cancel.max(c);
        }
        if o.range_fault {
            self.range_faults += 1;
        } else {
            self.max_abs = self.max_abs.max(o.abs_result);
            if o.abs_result > 0.0 {
                self.min_abs_nonzero = Some(self.min_abs_nonzero.map_or(o.abs_result, |m| m.min(o.abs_result)));
            }
        }
    }

    pub fn merge(&mut self, o: &Entry) {
        self.total += o.total;
        self.exact += o.exact;
        for (a, b) in self.errratio_hist.iter_mut().zip(&o.errratio_hist) {
            *a += b;
        }
        for (a, b) in self.expdiff_hist.iter_mut().zip(&o.expdiff_hist) {
            *a += b;
        }
        self.max_cancel = self.max_cancel.max(o.max_cancel);
        self.max_abs = self.max_abs.max(o.max_abs);
        self.min_abs_nonzero = match (self.min_abs_nonzero, o.min_abs_nonzero) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.range_faults += o.range_faults;
    }

    /// Instances whose log error ratio is at least `k`.
    pub fn ratio_at_least(&self, k: i32) -> u64 {
        let from = (k.clamp(RATIO_MIN, RATIO_MAX + 1) - RATIO_MIN) as usize;
        self.errratio_hist[from..].iter().sum()
    }

    /// Instances whose addend exponent difference exceeds `t`.
    pub fn expdiff_above(&self, t: u32) -> u64 {
        let from = (t as usize + 1).min(self.expdiff_hist.len());
        self.expdiff_hist[from..].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericalProfile {
    pub program_hash: String,
    pub entries: Vec<Entry>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("profile document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("profiles belong to different programs")]
    Mismatch,
}

/// SHA-256 of the canonical text of `p`, hex encoded.
pub fn program_hash(p: &Program) -> String {
    hex::encode(Sha256::digest(print_program(p).as_bytes()))
}

impl NumericalProfile {
    /// A profile with zero counts for every float arithmetic instruction.
    pub fn empty(p: &Program) -> NumericalProfile {
        let entries =
            p.float_arith_ids().iter().map(|id| Entry::new(id, &p.instr(id).expect("listed id").op)).collect();
        NumericalProfile { program_hash: program_hash(p), entries }
    }

    pub fn entry(&self, id: &InstrId) -> Option<&Entry> {
        self.entries.iter().find(|e| e.function == id.function && e.dest == id.dest)
    }

    pub fn ids(&self) -> Vec<InstrId> {
        self.entries.iter().map(Entry::id).collect()
    }

    pub fn merge(&mut self, other: &NumericalProfile) -> Result<(), ProfileError> {
        if self.program_hash != other.program_hash || self.entries.len() != other.entries.len() {
            return Err(ProfileError::Mismatch);
        }
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.merge(b);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("profile serialises");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<NumericalProfile, ProfileError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Sink writing straight into a profile, reusable across several runs.
pub struct ProfileSink<'a> {
    profile: &'a mut NumericalProfile,
    /// Profile entry index of each plan site.
    map: Vec<usize>,
    config: KernelConfig,
}

impl<'a> ProfileSink<'a> {
    pub fn new(profile: &'a mut NumericalProfile, plan: &Plan, config: KernelConfig) -> Self {
        let index: HashMap<InstrId, usize> = profile.entries.iter().enumerate().map(|(i, e)| (e.id(), i)).collect();
        let map = plan.sites().iter().map(|id| index[id]).collect();
        ProfileSink { profile, map, config }
    }
}

impl Sink for ProfileSink<'_> {
    #[inline]
    fn record(&mut self, site: usize, _: &InstrId, outcome: &FpOutcome) {
        self.profile.entries[self.map[site]].record(outcome);
    }

    fn config(&self) -> KernelConfig {
        self.config
    }
}

/// The def-use graph with each arithmetic node's profile entry attached.
#[derive(Debug, Clone)]
pub struct AnnotatedDdfg {
    pub graph: DefUseGraph,
    /// Indexed like `graph.nodes`.
    pub entries: Vec<Option<Entry>>,
}

impl AnnotatedDdfg {
    pub fn new(p: &Program, np: &NumericalProfile) -> AnnotatedDdfg {
        let graph = def_use_graph(p);
        let entries = graph.nodes.iter().map(|n| np.entry(&n.id).cloned()).collect();
        AnnotatedDdfg { graph, entries }
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph ddfg {\n  node [shape=box, fontname=monospace];\n");
        for (i, (n, e)) in self.graph.nodes.iter().zip(&self.entries).enumerate() {
            let mut label = format!("{}:{}\\n{}", n.id.function, n.id.dest, n.label);
            if let Some(e) = e {
                let _ = write!(label, "\\ncancel={},exact={}/{}", e.max_cancel, e.exact, e.total);
            }
            let _ = writeln!(s, "  n{i} [label=\"{label}\"];");
        }
        for (a, succ) in self.graph.succs.iter().enumerate() {
            for b in succ {
                let _ = writeln!(s, "  n{a} -> n{b};");
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Runs `p` at its declared precision with profiling attached.
pub fn profile(p: &Program, input: &ExecInput) -> Result<(NumericalProfile, AnnotatedDdfg, ExecOutput), ExecError> {
    profile_with(p, input, KernelConfig::default())
}

pub fn profile_with(
    p: &Program,
    input: &ExecInput,
    config: KernelConfig,
) -> Result<(NumericalProfile, AnnotatedDdfg, ExecOutput), ExecError> {
    let plan = Plan::compile(p, &PrecisionAssignment::declared())?;
    let mut np = NumericalProfile::empty(p);
    let out = {
        let mut sink = ProfileSink::new(&mut np, &plan, config);
        plan.execute(input, Some(&mut sink))?
    };
    let g = AnnotatedDdfg::new(p, &np);
    Ok((np, g, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nir::parse_text;

    const MUL_SUB: &str = "func @f(%A: arr<f32, 2>) -> f32 { entry:
        %r1 = load f32 %A, 0
        %r2 = load f32 %A, 1
        %r3 = fmul f32 %r1, %r2
        %r4 = fsub f32 %r1, %r3
        ret %r4 }";

    #[test]
    fn mul_sub_cancellation_is_recorded() {
        let p = parse_text(MUL_SUB).unwrap();
        let b = 1.0 - 2f64.powi(-20);
        let input = ExecInput::default().with_array("A", vec![1.0, b]);
        let (np, g, out) = profile(&p, &input).unwrap();
        assert_eq!(out.ret, Some(2f64.powi(-20)));
        let sub = np.entry(&InstrId::new("f", "r4")).unwrap();
        assert_eq!(sub.max_cancel, 20);
        assert_eq!((sub.total, sub.exact), (1, 1));
        assert_eq!(sub.expdiff_hist[1], 1);
        assert!(np.entry(&InstrId::new("f", "r3")).unwrap().expdiff_hist.is_empty());
        let dot = g.to_dot();
        assert!(dot.contains("f:r4\\nfsub.f32\\ncancel=20,exact=1/1"), "{dot}");
        assert_eq!(dot.matches("->").count(), 4);
    }

    #[test]
    fn empty_program_has_empty_document() {
        let p = parse_text("func @f() -> void { entry: ret }").unwrap();
        let (np, g, _) = profile(&p, &ExecInput::default()).unwrap();
        assert!(np.entries.is_empty());
        assert!(g.graph.nodes.is_empty());
        assert_eq!(NumericalProfile::from_json(&np.to_json()).unwrap(), np);
    }

    #[test]
    fn cumulative_queries() {
        let p = parse_text(MUL_SUB).unwrap();
        let mut e = NumericalProfile::empty(&p).entries[1].clone();
        e.errratio_hist[(-3 - RATIO_MIN) as usize] = 2;
        e.errratio_hist[(0 - RATIO_MIN) as usize] = 5;
        e.expdiff_hist[10] = 4;
        assert_eq!(e.ratio_at_least(-3), 7);
        assert_eq!(e.ratio_at_least(-2), 5);
        assert_eq!(e.ratio_at_least(1), 0);
        assert_eq!(e.ratio_at_least(-100), 7);
        assert_eq!(e.expdiff_above(9), 4);
        assert_eq!(e.expdiff_above(10), 0);
        assert_eq!(e.expdiff_above(255), 0);
    }
}
