//! Deterministic interpreter for the IR.
//!
//! A program is first compiled into a [`Plan`] for one precision
//! assignment: registers become slots, block labels become indices and the
//! width of every float instruction is fixed. Executing the plan threads
//! each float arithmetic instance through [`fpkernel`](crate::fpkernel) when
//! a [`Sink`] is attached.

pub mod manifest;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::fpkernel::{self, FpOp, FpOutcome, KernelConfig};
use crate::nir::{
    validate, CmpPred, IBinOp, InstrId, Op, Operand, Precision, PrecisionAssignment, Program, Type, Violation,
};

pub const DEFAULT_STEP_LIMIT: u64 = 1_000_000_000;

/// Parameter bindings for one run. Array and scalar values are rounded to
/// their storage width when the run starts.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecInput {
    pub arrays: BTreeMap<String, Vec<f64>>,
    pub scalars: BTreeMap<String, f64>,
    pub step_limit: u64,
}

impl Default for ExecInput {
    fn default() -> Self {
        ExecInput { arrays: BTreeMap::new(), scalars: BTreeMap::new(), step_limit: DEFAULT_STEP_LIMIT }
    }
}

impl ExecInput {
    pub fn with_array(mut self, name: impl Into<String>, data: Vec<f64>) -> Self {
        self.arrays.insert(name.into(), data);
        self
    }

    pub fn with_scalar(mut self, name: impl Into<String>, v: f64) -> Self {
        self.scalars.insert(name.into(), v);
        self
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExecOutput {
    /// Final contents of every array parameter.
    pub arrays: BTreeMap<String, Vec<f64>>,
    pub ret: Option<f64>,
    pub steps: u64,
    /// Dynamic counts keyed by executed opcode, e.g. `fmul.f64` or `fpext`.
    pub op_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("program is invalid under this precision assignment: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("program has no entry function")]
    NoEntry,
    #[error("{0} is not a float arithmetic instruction of the program")]
    UnknownInstr(InstrId),
    #[error("parameter %{0} is not bound")]
    Unbound(String),
    #[error("array %{name} has {got} elements, expected {expected}")]
    Length { name: String, expected: usize, got: usize },
    #[error("scalar %{name} = {value} is not an integer")]
    NotInteger { name: String, value: f64 },
    #[error("{at}: index {index} out of bounds for length {len}")]
    OutOfBounds { at: String, index: i64, len: usize },
    #[error("step limit {limit} exceeded")]
    StepLimit { limit: u64, op_counts: BTreeMap<String, u64> },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Receives one outcome per dynamic float arithmetic instance.
pub trait Sink {
    /// `site` indexes [`Plan::sites`].
    fn record(&mut self, site: usize, id: &InstrId, outcome: &FpOutcome);

    fn config(&self) -> KernelConfig {
        KernelConfig::default()
    }
}

#[derive(Debug, Clone, Copy)]
enum Arg {
    Slot(u32),
    Imm(u64),
}

#[derive(Debug, Clone)]
enum Step {
    FConst { dst: u32, bits: u64 },
    Arith { dst: u32, op: FpOp, prec: Precision, a: Arg, b: Arg, site: u32 },
    Trunc { dst: u32, src: Arg },
    Copy { dst: u32, src: Arg },
    IConst { dst: u32, v: i64 },
    IBin { dst: u32, op: IBinOp, a: Arg, b: Arg },
    ICmp { dst: u32, pred: CmpPred, a: Arg, b: Arg },
    Idx { dst: u32, row: Arg, col: Arg, stride: Arg },
    Load { dst: u32, arr: u32, index: Arg },
    Store { arr: u32, index: Arg, value: Arg },
    Br { edge: u32 },
    BrCond { cond: Arg, then_edge: u32, else_edge: u32 },
    Ret { value: Option<Arg> },
}

/// Control transfer into `target`, with the parallel copies of its phis.
#[derive(Debug, Clone)]
struct Edge {
    target: u32,
    moves: Vec<(u32, Arg)>,
    /// Static instruction indices of the phis, for counting.
    phis: Vec<u32>,
}

#[derive(Debug, Clone)]
enum Binding {
    Array { arr: u32, prec: Precision, len: usize },
    Float { slot: u32, prec: Precision },
    Int { slot: u32 },
}

/// A program compiled for one precision assignment.
#[derive(Debug, Clone)]
pub struct Plan {
    steps: Vec<Step>,
    /// Static instruction index of each step; steps and instructions are 1:1
    /// except phis, which have no step.
    step_instr: Vec<u32>,
    block_start: Vec<u32>,
    edges: Vec<Edge>,
    params: Vec<(String, Binding)>,
    array_names: Vec<String>,
    slot_count: usize,
    sites: Vec<InstrId>,
    /// Count key of each static instruction.
    keys: Vec<String>,
    /// Location used in error messages, per static instruction.
    locs: Vec<String>,
}

impl Plan {
    pub fn compile(p: &Program, pa: &PrecisionAssignment) -> Result<Plan, ExecError> {
        let uniform = match pa {
            PrecisionAssignment::UniformF32 => Some(Precision::F32),
            PrecisionAssignment::UniformF64 => Some(Precision::F64),
            PrecisionAssignment::Mixed(set) => {
                if !set.is_empty() {
                    let mut q = p.clone();
                    for id in set {
                        let g = q.functions.iter_mut().find(|g| g.name == id.function);
                        let ins = g.and_then(|g| {
                            g.blocks
                                .iter_mut()
                                .flat_map(|b| b.instrs.iter_mut())
                                .find(|i| i.dest.as_deref() == Some(&id.dest))
                        });
                        match ins.map(|i| &mut i.op) {
                            Some(Op::FBin { ty, .. } | Op::FCall { ty, .. }) => *ty = Precision::F64,
                            _ => return Err(ExecError::UnknownInstr(id.clone())),
                        }
                    }
                    validate(&q).map_err(ExecError::Invalid)?;
                    return Plan::build(&q, None);
                }
                None
            }
        };
        validate(p).map_err(ExecError::Invalid)?;
        Plan::build(p, uniform)
    }

    fn build(p: &Program, uniform: Option<Precision>) -> Result<Plan, ExecError> {
        let f = p.entry_function().ok_or(ExecError::NoEntry)?;
        let width = |declared: Precision| uniform.unwrap_or(declared);
        let mut slots: HashMap<&str, u32> = HashMap::new();
        let mut params = Vec::new();
        let mut array_names = Vec::new();
        let mut arrays: HashMap<&str, u32> = HashMap::new();
        for prm in &f.params {
            let b = match prm.ty {
                Type::Array { elem, len } => {
                    let ix = array_names.len() as u32;
                    array_names.push(prm.name.clone());
                    arrays.insert(&prm.name, ix);
                    Binding::Array { arr: ix, prec: width(elem), len }
                }
                _ => {
                    let slot = slots.len() as u32;
                    slots.insert(&prm.name, slot);
                    match prm.ty {
                        Type::Float(pr) => Binding::Float { slot, prec: width(pr) },
                        _ => Binding::Int { slot },
                    }
                }
            };
            params.push((prm.name.clone(), b));
        }
        for (_, _, ins) in f.instrs() {
            if let Some(d) = &ins.dest {
                let n = slots.len() as u32;
                slots.insert(d, n);
            }
        }
        let arg = |o: &Operand| match o {
            Operand::Reg(r) => Arg::Slot(slots[r.as_str()]),
            Operand::Int(v) => Arg::Imm(*v as u64),
        };
        let block_ix: HashMap<&str, u32> =
            f.blocks.iter().enumerate().map(|(i, b)| (b.label.as_str(), i as u32)).collect();

        let mut plan = Plan {
            steps: Vec::new(),
            step_instr: Vec::new(),
            block_start: Vec::new(),
            edges: Vec::new(),
            params,
            array_names,
            slot_count: slots.len(),
            sites: Vec::new(),
            keys: Vec::new(),
            locs: Vec::new(),
        };
        let mut first_instr = Vec::new();
        for b in &f.blocks {
            first_instr.push(plan.keys.len() as u32);
            for (ii, ins) in b.instrs.iter().enumerate() {
                let key = match &ins.op {
                    Op::FBin { op, ty, .. } => format!("{}.{}", op.mnemonic(), width(*ty)),
                    Op::FCall { func, ty, .. } => format!("fcall.{}.{}", func.name(), width(*ty)),
                    other => other.mnemonic().to_string(),
                };
                plan.keys.push(key);
                plan.locs.push(match &ins.dest {
                    Some(d) => InstrId::new(&f.name, d).to_string(),
                    None => format!("@{}:{}#{}", f.name, b.label, ii),
                });
            }
        }
        let edge = |plan: &mut Plan, from: &str, to: &str| -> u32 {
            let t = block_ix[to];
            let tb = &f.blocks[t as usize];
            let mut moves = Vec::new();
            let mut phis = Vec::new();
            for (k, ins) in tb.instrs.iter().enumerate() {
                let Op::Phi { incoming, .. } = &ins.op else { break };
                let (v, _) = incoming.iter().find(|(_, l)| l == from).expect("validated phi");
                moves.push((slots[ins.dest.as_deref().expect("phi dest")], arg(v)));
                phis.push(first_instr[t as usize] + k as u32);
            }
            plan.edges.push(Edge { target: t, moves, phis });
            (plan.edges.len() - 1) as u32
        };

        let mut site_of: HashMap<&str, u32> = HashMap::new();
        for (bi, b) in f.blocks.iter().enumerate() {
            plan.block_start.push(plan.steps.len() as u32);
            for (ii, ins) in b.instrs.iter().enumerate() {
                let dst = ins.dest.as_deref().map(|d| slots[d]).unwrap_or(u32::MAX);
                let step = match &ins.op {
                    Op::Phi { .. } => continue,
                    Op::FConst { ty, value } => Step::FConst { dst, bits: width(*ty).round(*value).to_bits() },
                    Op::FBin { op, ty, lhs, rhs } => {
                        let d = ins.dest.as_deref().expect("arith dest");
                        let site = *site_of.entry(d).or_insert_with(|| {
                            plan.sites.push(InstrId::new(&f.name, d));
                            (plan.sites.len() - 1) as u32
                        });
                        Step::Arith { dst, op: (*op).into(), prec: width(*ty), a: arg(lhs), b: arg(rhs), site }
                    }
                    Op::FCall { func, ty, arg: a } => {
                        let d = ins.dest.as_deref().expect("call dest");
                        let site = *site_of.entry(d).or_insert_with(|| {
                            plan.sites.push(InstrId::new(&f.name, d));
                            (plan.sites.len() - 1) as u32
                        });
                        Step::Arith { dst, op: (*func).into(), prec: width(*ty), a: arg(a), b: Arg::Imm(0), site }
                    }
                    Op::FpExt { src } => Step::Copy { dst, src: arg(src) },
                    Op::FpTrunc { src } if uniform.is_none() => Step::Trunc { dst, src: arg(src) },
                    Op::FpTrunc { src } => Step::Copy { dst, src: arg(src) },
                    Op::IConst { value } => Step::IConst { dst, v: *value },
                    Op::IBin { op, lhs, rhs } => Step::IBin { dst, op: *op, a: arg(lhs), b: arg(rhs) },
                    Op::ICmp { pred, lhs, rhs } => Step::ICmp { dst, pred: *pred, a: arg(lhs), b: arg(rhs) },
                    Op::Idx { row, col, stride } => {
                        Step::Idx { dst, row: arg(row), col: arg(col), stride: arg(stride) }
                    }
                    Op::Load { array, index, .. } => Step::Load { dst, arr: arrays[array.as_str()], index: arg(index) },
                    Op::Store { array, index, value, .. } => {
                        Step::Store { arr: arrays[array.as_str()], index: arg(index), value: arg(value) }
                    }
                    Op::Br { target } => Step::Br { edge: edge(&mut plan, &b.label, target) },
                    Op::BrCond { cond, then_to, else_to } => Step::BrCond {
                        cond: arg(cond),
                        then_edge: edge(&mut plan, &b.label, then_to),
                        else_edge: edge(&mut plan, &b.label, else_to),
                    },
                    Op::Ret { value } => Step::Ret { value: value.as_ref().map(arg) },
                };
                plan.steps.push(step);
                plan.step_instr.push(first_instr[bi] + ii as u32);
            }
        }
        Ok(plan)
    }

    /// Float arithmetic instructions of the entry function in program order;
    /// the `site` argument of [`Sink::record`] indexes this list.
    pub fn sites(&self) -> &[InstrId] {
        &self.sites
    }

    pub fn execute(&self, input: &ExecInput, mut sink: Option<&mut dyn Sink>) -> Result<ExecOutput, ExecError> {
        let cfg = sink.as_ref().map(|s| s.config()).unwrap_or_default();
        let mut regs = vec![0u64; self.slot_count];
        let mut mem: Vec<Vec<f64>> = vec![Vec::new(); self.array_names.len()];
        for (name, b) in &self.params {
            match *b {
                Binding::Array { arr, prec, len } => {
                    let data = input.arrays.get(name).ok_or_else(|| ExecError::Unbound(name.clone()))?;
                    if data.len() != len {
                        return Err(ExecError::Length { name: name.clone(), expected: len, got: data.len() });
                    }
                    mem[arr as usize] = data.iter().map(|&x| prec.round(x)).collect();
                }
                Binding::Float { slot, prec } => {
                    let v = *input.scalars.get(name).ok_or_else(|| ExecError::Unbound(name.clone()))?;
                    regs[slot as usize] = prec.round(v).to_bits();
                }
                Binding::Int { slot } => {
                    let v = *input.scalars.get(name).ok_or_else(|| ExecError::Unbound(name.clone()))?;
                    if v.fract() != 0.0 || !v.is_finite() {
                        return Err(ExecError::NotInteger { name: name.clone(), value: v });
                    }
                    regs[slot as usize] = (v as i64) as u64;
                }
            }
        }

        let mut counts = vec![0u64; self.keys.len()];
        let mut steps: u64 = 0;
        let limit = input.step_limit;
        let mut pc = 0usize;
        let mut pending: Vec<u64> = Vec::new();
        let ret;

        macro_rules! get {
            ($a:expr) => {
                match $a {
                    Arg::Slot(s) => regs[s as usize],
                    Arg::Imm(v) => v,
                }
            };
        }
        macro_rules! geti {
            ($a:expr) => {
                get!($a) as i64
            };
        }
        macro_rules! getf {
            ($a:expr) => {
                f64::from_bits(get!($a))
            };
        }

        loop {
            if steps >= limit {
                return Err(ExecError::StepLimit { limit, op_counts: self.tally(&counts) });
            }
            steps += 1;
            counts[self.step_instr[pc] as usize] += 1;
            let mut take = |e: u32, regs: &mut Vec<u64>, counts: &mut Vec<u64>, steps: &mut u64| -> usize {
                let edge = &self.edges[e as usize];
                pending.clear();
                pending.extend(edge.moves.iter().map(|&(_, a)| match a {
                    Arg::Slot(s) => regs[s as usize],
                    Arg::Imm(v) => v,
                }));
                for (&(d, _), &v) in edge.moves.iter().zip(&pending) {
                    regs[d as usize] = v;
                }
                for &ph in &edge.phis {
                    counts[ph as usize] += 1;
                }
                *steps += edge.phis.len() as u64;
                self.block_start[edge.target as usize] as usize
            };
            match self.steps[pc] {
                Step::FConst { dst, bits } => regs[dst as usize] = bits,
                Step::Arith { dst, op, prec, a, b, site } => {
                    let (x, y) = (getf!(a), getf!(b));
                    let c = fpkernel::compute(op, x, y, prec);
                    if let Some(s) = sink.as_deref_mut() {
                        let o = fpkernel::outcome(&cfg, op, x, y, c, prec);
                        s.record(site as usize, &self.sites[site as usize], &o);
                    }
                    regs[dst as usize] = c.to_bits();
                }
                Step::Trunc { dst, src } => regs[dst as usize] = Precision::F32.round(getf!(src)).to_bits(),
                Step::Copy { dst, src } => regs[dst as usize] = get!(src),
                Step::IConst { dst, v } => regs[dst as usize] = v as u64,
                Step::IBin { dst, op, a, b } => {
                    let (x, y) = (geti!(a), geti!(b));
                    let v = match op {
                        IBinOp::Add => x.wrapping_add(y),
                        IBinOp::Sub => x.wrapping_sub(y),
                        IBinOp::Mul => x.wrapping_mul(y),
                    };
                    regs[dst as usize] = v as u64;
                }
                Step::ICmp { dst, pred, a, b } => {
                    let (x, y) = (geti!(a), geti!(b));
                    let v = match pred {
                        CmpPred::Lt => x < y,
                        CmpPred::Le => x <= y,
                        CmpPred::Eq => x == y,
                    };
                    regs[dst as usize] = v as u64;
                }
                Step::Idx { dst, row, col, stride } => {
                    regs[dst as usize] = geti!(row).wrapping_mul(geti!(stride)).wrapping_add(geti!(col)) as u64;
                }
                Step::Load { dst, arr, index } => {
                    let i = geti!(index);
                    let a = &mem[arr as usize];
                    match usize::try_from(i).ok().and_then(|i| a.get(i)) {
                        Some(v) => regs[dst as usize] = v.to_bits(),
                        None => return Err(self.oob(pc, i, a.len())),
                    }
                }
                Step::Store { arr, index, value } => {
                    let i = geti!(index);
                    let v = getf!(value);
                    let a = &mut mem[arr as usize];
                    let len = a.len();
                    match usize::try_from(i).ok().and_then(|i| a.get_mut(i)) {
                        Some(slot) => *slot = v,
                        None => return Err(self.oob(pc, i, len)),
                    }
                }
                Step::Br { edge } => {
                    pc = take(edge, &mut regs, &mut counts, &mut steps);
                    continue;
                }
                Step::BrCond { cond, then_edge, else_edge } => {
                    let e = if get!(cond) != 0 { then_edge } else { else_edge };
                    pc = take(e, &mut regs, &mut counts, &mut steps);
                    continue;
                }
                Step::Ret { value } => {
                    ret = value.map(|a| getf!(a));
                    break;
                }
            }
            pc += 1;
        }

        Ok(ExecOutput {
            arrays: self.array_names.iter().cloned().zip(mem).collect(),
            ret,
            steps,
            op_counts: self.tally(&counts),
        })
    }

    fn oob(&self, pc: usize, index: i64, len: usize) -> ExecError {
        ExecError::OutOfBounds { at: self.locs[self.step_instr[pc] as usize].clone(), index, len }
    }

    fn tally(&self, counts: &[u64]) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for (k, &c) in self.keys.iter().zip(counts) {
            if c > 0 {
                *out.entry(k.clone()).or_insert(0) += c;
            }
        }
        out
    }
}

/// Compiles and executes `p` in one go.
pub fn run(
    p: &Program,
    input: &ExecInput,
    pa: &PrecisionAssignment,
    sink: Option<&mut dyn Sink>,
) -> Result<ExecOutput, ExecError> {
    Plan::compile(p, pa)?.execute(input, sink)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nir::parse_text;

    const MUL_SUB: &str = "func @f(%A: arr<f32, 2>) -> f32 {
        entry:
          %r1 = load f32 %A, 0
          %r2 = load f32 %A, 1
          %r3 = fmul f32 %r1, %r2
          %r4 = fsub f32 %r1, %r3
          ret %r4
        }";

    const SUM: &str = "func @sum(%A: arr<f32, 4>, %n: i64) -> f32 {
        entry:
          %z = fconst f32 0.0
          br loop
        loop:
          %i = phi i64 [0, entry], [%i.next, loop]
          %s = phi f32 [%z, entry], [%s.next, loop]
          %v = load f32 %A, %i
          %s.next = fadd f32 %s, %v
          %i.next = iadd %i, 1
          %c = icmp lt %i.next, %n
          brcond %c, loop, exit
        exit:
          ret %s.next
        }";

    #[test]
    fn mul_sub_exact_at_single() {
        let p = parse_text(MUL_SUB).unwrap();
        let input = ExecInput::default().with_array("A", vec![1.5, 1.0]);
        let out = run(&p, &input, &PrecisionAssignment::UniformF32, None).unwrap();
        assert_eq!(out.ret, Some(0.0));
        assert_eq!(out.steps, 5);
        assert_eq!(out.op_counts["load"], 2);
        assert_eq!(out.op_counts.values().sum::<u64>(), out.steps);
    }

    #[test]
    fn loop_with_phis() {
        let p = parse_text(SUM).unwrap();
        let input = ExecInput::default().with_array("A", vec![1.0, 2.0, 3.0, 0.1]).with_scalar("n", 4.0);
        let out = run(&p, &input, &PrecisionAssignment::declared(), None).unwrap();
        assert_eq!(out.ret, Some((6.0f32 + 0.1f32) as f64));
        assert_eq!(out.op_counts["phi"], 8);
        assert_eq!(out.op_counts["fadd.f32"], 4);
        assert_eq!(out.op_counts.values().sum::<u64>(), out.steps);
        let wide = run(&p, &input, &PrecisionAssignment::UniformF64, None).unwrap();
        assert_eq!(wide.ret, Some(6.1));
        assert_eq!(wide.op_counts["fadd.f64"], 4);
    }

    #[test]
    fn mixed_without_casts_is_rejected() {
        let p = parse_text(MUL_SUB).unwrap();
        let pa = PrecisionAssignment::Mixed([InstrId::new("f", "r3")].into());
        assert!(matches!(Plan::compile(&p, &pa), Err(ExecError::Invalid(_))));
        let pa = PrecisionAssignment::Mixed([InstrId::new("f", "r1")].into());
        assert!(matches!(Plan::compile(&p, &pa), Err(ExecError::UnknownInstr(_))));
    }

    #[test]
    fn errors_are_reported() {
        let p = parse_text(SUM).unwrap();
        let input = ExecInput::default().with_array("A", vec![0.0; 4]).with_scalar("n", 5.0);
        let err = run(&p, &input, &PrecisionAssignment::declared(), None).unwrap_err();
        assert!(matches!(&err, ExecError::OutOfBounds { at, index: 4, len: 4 } if at == "@sum:%v"), "{err}");
        let input = ExecInput::default().with_array("A", vec![0.0; 4]);
        assert!(
            matches!(run(&p, &input, &PrecisionAssignment::declared(), None), Err(ExecError::Unbound(n)) if n == "n")
        );
        let input =
            ExecInput { step_limit: 10, ..ExecInput::default().with_array("A", vec![0.0; 4]).with_scalar("n", 4.0) };
        let err = run(&p, &input, &PrecisionAssignment::declared(), None).unwrap_err();
        assert!(matches!(err, ExecError::StepLimit { limit: 10, .. }));
    }

    #[test]
    fn sink_sees_every_instance() {
        struct Count(Vec<usize>);
        impl Sink for Count {
            fn record(&mut self, site: usize, _: &InstrId, _: &FpOutcome) {
                self.0[site] += 1;
            }
        }
        let p = parse_text(SUM).unwrap();
        let input = ExecInput::default().with_array("A", vec![1.0; 4]).with_scalar("n", 3.0);
        let plan = Plan::compile(&p, &PrecisionAssignment::declared()).unwrap();
        let mut c = Count(vec![0; plan.sites().len()]);
        let a = plan.execute(&input, Some(&mut c)).unwrap();
        let b = plan.execute(&input, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(c.0, vec![3]);
    }
}
