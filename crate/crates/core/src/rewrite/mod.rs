//! Instruction change sets and the promoting rewrite.
//!
//! [`compute_ics`] merges the promotion bin with the backward slices of the
//! cancellation bin; [`rewrite`] retypes those instructions to F64 and
//! inserts the `fpext` / `fptrunc` casts that keep the program well typed.
//! Array storage never changes width.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classify::Classification;
use crate::nir::{DefUseGraph, Function, Instr, InstrId, NodeKind, Op, Operand, Precision, Program, Type};

/// The set of instructions promoted to F64, ordered by function and then
/// register name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstructionChangeSet {
    pub promoted: BTreeSet<InstrId>,
}

impl InstructionChangeSet {
    pub fn new(ids: impl IntoIterator<Item = InstrId>) -> Self {
        InstructionChangeSet { promoted: ids.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.promoted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.promoted.is_empty()
    }

    pub fn contains(&self, id: &InstrId) -> bool {
        self.promoted.contains(id)
    }

    /// SHA-256 over the canonical member list, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for id in &self.promoted {
            h.update(id.function.as_bytes());
            h.update(b":");
            h.update(id.dest.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ics serialises");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Instructions reached backwards from `seed` over def-use edges. Benign
/// members are neither included nor traversed; loads, constants, casts and
/// intrinsic calls are boundaries; phis are traversed but never included.
/// The seed itself is always part of the slice.
pub fn backward_slice(seed: &InstrId, g: &DefUseGraph, benign: &BTreeSet<InstrId>) -> BTreeSet<InstrId> {
    let mut out = BTreeSet::new();
    let Some(s) = g.node_index(seed) else { return out };
    out.insert(seed.clone());
    let mut seen = vec![false; g.nodes.len()];
    seen[s] = true;
    let mut stack = vec![s];
    while let Some(n) = stack.pop() {
        for &p in &g.preds[n] {
            if seen[p] {
                continue;
            }
            seen[p] = true;
            let node = &g.nodes[p];
            match node.kind {
                NodeKind::Arith if !benign.contains(&node.id) => {
                    out.insert(node.id.clone());
                    stack.push(p);
                }
                NodeKind::Phi => stack.push(p),
                _ => {}
            }
        }
    }
    out
}

pub fn compute_ics(cl: &Classification, g: &DefUseGraph) -> InstructionChangeSet {
    let mut ics: BTreeSet<InstrId> = cl.promotion_bin.clone();
    for s in &cl.cancellation_bin {
        ics.extend(backward_slice(s, g, &cl.benign_bin));
    }
    InstructionChangeSet { promoted: ics }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("{0} is not a float arithmetic instruction of the program")]
    Unknown(InstrId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RewriteOptions {
    /// Widen a float phi to F64 when any of its incoming values is F64
    /// after promotion, instead of truncating loop-carried values.
    pub widen_phis: bool,
}

impl Default for RewriteOptions {
    fn default() -> Self {
        RewriteOptions { widen_phis: true }
    }
}

pub fn rewrite(p: &Program, ics: &InstructionChangeSet) -> Result<Program, RewriteError> {
    rewrite_with(p, ics, RewriteOptions::default())
}

pub fn rewrite_with(p: &Program, ics: &InstructionChangeSet, opts: RewriteOptions) -> Result<Program, RewriteError> {
    for id in &ics.promoted {
        match p.instr(id) {
            Some(ins) if ins.op.is_float_arith() => {}
            _ => return Err(RewriteError::Unknown(id.clone())),
        }
    }
    let functions = p
        .functions
        .iter()
        .map(|f| {
            let promoted: HashSet<&str> =
                ics.promoted.iter().filter(|id| id.function == f.name).map(|id| id.dest.as_str()).collect();
            if promoted.is_empty() {
                f.clone()
            } else {
                rewrite_function(f, &promoted, opts)
            }
        })
        .collect();
    Ok(Program { functions, entry: p.entry.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Cast {
    Ext,
    Trunc,
}

fn result_type(op: &Op) -> Option<Type> {
    Some(match op {
        Op::FConst { ty, .. } | Op::FBin { ty, .. } | Op::FCall { ty, .. } | Op::Load { ty, .. } => Type::Float(*ty),
        Op::FpExt { .. } => Type::F64,
        Op::FpTrunc { .. } => Type::F32,
        Op::Phi { ty, .. } => *ty,
        Op::IConst { .. } | Op::IBin { .. } | Op::Idx { .. } => Type::I64,
        Op::ICmp { .. } => Type::Bool,
        _ => return None,
    })
}

fn rewrite_function(f: &Function, promoted: &HashSet<&str>, opts: RewriteOptions) -> Function {
    let mut ty: HashMap<&str, Type> = f.params.iter().map(|p| (p.name.as_str(), p.ty)).collect();
    for (_, _, ins) in f.instrs() {
        if let (Some(d), Some(t)) = (&ins.dest, result_type(&ins.op)) {
            ty.insert(d, t);
        }
    }
    for d in promoted {
        ty.insert(d, Type::F64);
    }
    let mut widened: HashSet<&str> = HashSet::new();
    if opts.widen_phis {
        loop {
            let mut changed = false;
            for (_, _, ins) in f.instrs() {
                let (Some(d), Op::Phi { ty: Type::F32, incoming }) = (&ins.dest, &ins.op) else { continue };
                if widened.contains(d.as_str()) {
                    continue;
                }
                if incoming.iter().any(|(v, _)| v.as_reg().is_some_and(|r| ty.get(r) == Some(&Type::F64))) {
                    widened.insert(d);
                    ty.insert(d, Type::F64);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    let expected_of = |ins: &Instr| -> Vec<Option<Precision>> {
        let promo = ins.dest.as_deref().is_some_and(|d| promoted.contains(d));
        let w = |p: Precision| Some(if promo { Precision::F64 } else { p });
        match &ins.op {
            Op::FBin { ty, .. } => vec![w(*ty), w(*ty)],
            Op::FCall { ty, .. } => vec![w(*ty)],
            Op::FpExt { .. } => vec![Some(Precision::F32)],
            Op::FpTrunc { .. } => vec![Some(Precision::F64)],
            Op::Store { ty, .. } => vec![None, Some(*ty)],
            Op::Ret { value: Some(_) } => vec![match f.ret {
                Some(Type::Float(p)) => Some(p),
                _ => None,
            }],
            Op::Phi { ty: Type::Float(p), incoming } => {
                let p = if widened.contains(ins.dest.as_deref().unwrap_or("")) { Precision::F64 } else { *p };
                vec![Some(p); incoming.len()]
            }
            other => vec![None; other.operands().len()],
        }
    };
    let actual = |o: &Operand| match o.as_reg().and_then(|r| ty.get(r)) {
        Some(Type::Float(p)) => Some(*p),
        _ => None,
    };
    let need = |want: Precision, have: Precision| match (want, have) {
        (Precision::F64, Precision::F32) => Some(Cast::Ext),
        (Precision::F32, Precision::F64) => Some(Cast::Trunc),
        _ => None,
    };

    // (block, value, cast) -> earliest position in that block that needs it.
    let block_ix: HashMap<&str, usize> = f.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i)).collect();
    let mut wanted: BTreeMap<(usize, String, Cast), usize> = BTreeMap::new();
    for (bi, b) in f.blocks.iter().enumerate() {
        for (ii, ins) in b.instrs.iter().enumerate() {
            let exp = expected_of(ins);
            for (k, o) in ins.op.operands().into_iter().enumerate() {
                let (Some(want), Some(have)) = (exp[k], actual(o)) else { continue };
                let Some(c) = need(want, have) else { continue };
                let r = o.as_reg().expect("float operands are registers").to_string();
                let (target, pos) = match &ins.op {
                    Op::Phi { incoming, .. } => {
                        let pb = block_ix[incoming[k].1.as_str()];
                        (pb, f.blocks[pb].instrs.len() - 1)
                    }
                    _ => (bi, ii),
                };
                let e = wanted.entry((target, r, c)).or_insert(pos);
                *e = (*e).min(pos);
            }
        }
    }

    let mut names: HashSet<String> = f.params.iter().map(|p| p.name.clone()).collect();
    names.extend(f.instrs().filter_map(|(_, _, i)| i.dest.clone()));
    let mut cast_name: HashMap<(usize, String, Cast), String> = HashMap::new();
    let mut inserts: BTreeMap<(usize, usize), Vec<Instr>> = BTreeMap::new();
    for ((bi, v, c), pos) in &wanted {
        let suffix = match c {
            Cast::Ext => "x",
            Cast::Trunc => "t",
        };
        let mut name = format!("{v}.{suffix}");
        let mut n = 1;
        while names.contains(&name) {
            name = format!("{v}.{suffix}{n}");
            n += 1;
        }
        names.insert(name.clone());
        let src = Operand::reg(v.clone());
        let op = match c {
            Cast::Ext => Op::FpExt { src },
            Cast::Trunc => Op::FpTrunc { src },
        };
        inserts.entry((*bi, *pos)).or_default().push(Instr::new(name.clone(), op));
        cast_name.insert((*bi, v.clone(), *c), name);
    }

    let mut blocks = f.blocks.clone();
    for (bi, b) in f.blocks.iter().enumerate() {
        let mut out = Vec::with_capacity(b.instrs.len());
        for (ii, ins) in b.instrs.iter().enumerate() {
            if let Some(casts) = inserts.get(&(bi, ii)) {
                out.extend(casts.iter().cloned());
            }
            let exp = expected_of(ins);
            let mut new = ins.clone();
            let incoming_blocks: Vec<usize> = match &ins.op {
                Op::Phi { incoming, .. } => incoming.iter().map(|(_, l)| block_ix[l.as_str()]).collect(),
                _ => Vec::new(),
            };
            for (k, o) in new.op.operands_mut().into_iter().enumerate() {
                let (Some(want), Some(have)) = (exp[k], actual(o)) else { continue };
                let Some(c) = need(want, have) else { continue };
                let target = incoming_blocks.get(k).copied().unwrap_or(bi);
                let r = o.as_reg().expect("register").to_string();
                *o = Operand::Reg(cast_name[&(target, r, c)].clone());
            }
            match &mut new.op {
                Op::FBin { ty, .. } | Op::FCall { ty, .. }
                    if ins.dest.as_deref().is_some_and(|d| promoted.contains(d)) =>
                {
                    *ty = Precision::F64;
                }
                Op::Phi { ty, .. } if widened.contains(ins.dest.as_deref().unwrap_or("")) => *ty = Type::F64,
                _ => {}
            }
            out.push(new);
        }
        blocks[bi].instrs = out;
    }
    Function { blocks, ..f.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nir::{def_use_graph, parse_text, print_program, validate};

    const MUL_SUB: &str = "func @f(%A: arr<f32, 2>) -> f32 { entry:
        %r1 = load f32 %A, 0
        %r2 = load f32 %A, 1
        %r3 = fmul f32 %r1, %r2
        %r4 = fsub f32 %r1, %r3
        ret %r4 }";

    fn id(d: &str) -> InstrId {
        InstrId::new("f", d)
    }

    #[test]
    fn mul_sub_slice_and_rewrite() {
        let p = parse_text(MUL_SUB).unwrap();
        let g = def_use_graph(&p);
        let s = backward_slice(&id("r4"), &g, &BTreeSet::new());
        assert_eq!(s, [id("r3"), id("r4")].into());
        let q = rewrite(&p, &InstructionChangeSet { promoted: s }).unwrap();
        validate(&q).unwrap();
        assert_eq!(
            print_program(&q),
            "func @f(%A: arr<f32, 2>) -> f32 {\nentry:\n  %r1 = load f32 %A, 0\n  %r2 = load f32 %A, 1\n  \
             %r1.x = fpext %r1\n  %r2.x = fpext %r2\n  %r3 = fmul f64 %r1.x, %r2.x\n  %r4 = fsub f64 %r1.x, %r3\n  \
             %r4.t = fptrunc %r4\n  ret %r4.t\n}\n"
        );
    }

    #[test]
    fn empty_ics_is_identity() {
        let p = parse_text(MUL_SUB).unwrap();
        assert_eq!(rewrite(&p, &InstructionChangeSet::default()).unwrap(), p);
        assert!(compute_ics(&Classification::default(), &def_use_graph(&p)).is_empty());
    }

    #[test]
    fn unknown_member_is_an_error() {
        let p = parse_text(MUL_SUB).unwrap();
        let err = rewrite(&p, &InstructionChangeSet::new([id("r1")])).unwrap_err();
        assert_eq!(err, RewriteError::Unknown(id("r1")));
    }

    #[test]
    fn diamond_with_benign_middle() {
        let p = parse_text(
            "func @f(%A: arr<f32, 2>) -> f32 { entry:
               %x = load f32 %A, 0
               %a = fmul f32 %x, %x
               %b = fadd f32 %a, %x
               %c = fmul f32 %a, %x
               %d = fsub f32 %b, %c
               ret %d }",
        )
        .unwrap();
        let g = def_use_graph(&p);
        let s = backward_slice(&id("d"), &g, &[id("b")].into());
        assert_eq!(s, [id("a"), id("c"), id("d")].into());
    }

    #[test]
    fn loop_phi_is_widened_and_narrow_input_extended() {
        let p = parse_text(
            "func @s(%A: arr<f32, 4>) -> f32 {
             entry:
               %z = fconst f32 0.0
               br loop
             loop:
               %i = phi i64 [0, entry], [%i.next, loop]
               %s = phi f32 [%z, entry], [%s.next, loop]
               %v = load f32 %A, %i
               %s.next = fadd f32 %s, %v
               %i.next = iadd %i, 1
               %c = icmp lt %i.next, 4
               brcond %c, loop, exit
             exit:
               store f32 %A, 0, %s.next
               ret %s.next
             }",
        )
        .unwrap();
        let ics = InstructionChangeSet::new([InstrId::new("s", "s.next")]);
        let q = rewrite(&p, &ics).unwrap();
        validate(&q).unwrap();
        let text = print_program(&q);
        assert!(text.contains("%z.x = fpext %z\n  br loop"), "{text}");
        assert!(text.contains("%s = phi f64 [%z.x, entry], [%s.next, loop]"), "{text}");
        assert!(text.contains("%s.next = fadd f64 %s, %v.x"), "{text}");
        assert_eq!(text.matches("fptrunc %s.next").count(), 1, "{text}");

        let narrow = rewrite_with(&p, &ics, RewriteOptions { widen_phis: false }).unwrap();
        validate(&narrow).unwrap();
        let text = print_program(&narrow);
        assert!(text.contains("%s = phi f32"), "{text}");
        assert!(text.contains("%s.next.t = fptrunc %s.next\n  brcond"), "{text}");
    }
}
