//! The numerical IR: a small SSA language with two float widths, integer
//! index arithmetic and fixed-size arrays passed as function parameters.
//!
//! Every value-producing instruction has a destination register, and the
//! pair (function, destination) is the stable identity that profiles,
//! classifications and instruction change sets refer to.

mod graph;
mod parse;
mod print;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use graph::{def_use_graph, DefUseGraph, NodeKind};
pub use parse::{parse_text, ParseError};
pub use print::print_program;
pub use validate::{validate, Violation};

/// Floating-point width of an operation or a storage array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }

    /// Rounds `x` to this width. The result is always exactly representable
    /// as `f64`.
    #[inline]
    pub fn round(self, x: f64) -> f64 {
        match self {
            Precision::F32 => x as f32 as f64,
            Precision::F64 => x,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Type {
    Float(Precision),
    I64,
    /// Result of `icmp`; not allowed as a parameter type.
    Bool,
    Array {
        elem: Precision,
        len: usize,
    },
}

impl Type {
    pub const F32: Type = Type::Float(Precision::F32);
    pub const F64: Type = Type::Float(Precision::F64);
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Float(p) => write!(f, "{p}"),
            Type::I64 => f.write_str("i64"),
            Type::Bool => f.write_str("bool"),
            Type::Array { elem, len } => write!(f, "arr<{elem}, {len}>"),
        }
    }
}

/// An instruction operand: a register reference or an integer immediate.
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Reg(String),
    Int(i64),
}

impl Operand {
    pub fn reg(name: impl Into<String>) -> Self {
        Operand::Reg(name.into())
    }

    pub fn as_reg(&self) -> Option<&str> {
        match self {
            Operand::Reg(r) => Some(r),
            Operand::Int(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FBinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl FBinOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            FBinOp::Add => "fadd",
            FBinOp::Sub => "fsub",
            FBinOp::Mul => "fmul",
            FBinOp::Div => "fdiv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intrinsic {
    Sin,
    Exp,
    Sqrt,
    Fabs,
}

impl Intrinsic {
    pub fn name(self) -> &'static str {
        match self {
            Intrinsic::Sin => "sin",
            Intrinsic::Exp => "exp",
            Intrinsic::Sqrt => "sqrt",
            Intrinsic::Fabs => "fabs",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Intrinsic::Sin,
            "exp" => Intrinsic::Exp,
            "sqrt" => Intrinsic::Sqrt,
            "fabs" => Intrinsic::Fabs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IBinOp {
    Add,
    Sub,
    Mul,
}

impl IBinOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            IBinOp::Add => "iadd",
            IBinOp::Sub => "isub",
            IBinOp::Mul => "imul",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpPred {
    Lt,
    Le,
    Eq,
}

impl CmpPred {
    pub fn name(self) -> &'static str {
        match self {
            CmpPred::Lt => "lt",
            CmpPred::Le => "le",
            CmpPred::Eq => "eq",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    FConst {
        ty: Precision,
        value: f64,
    },
    FBin {
        op: FBinOp,
        ty: Precision,
        lhs: Operand,
        rhs: Operand,
    },
    FpExt {
        src: Operand,
    },
    FpTrunc {
        src: Operand,
    },
    FCall {
        func: Intrinsic,
        ty: Precision,
        arg: Operand,
    },
    IConst {
        value: i64,
    },
    IBin {
        op: IBinOp,
        lhs: Operand,
        rhs: Operand,
    },
    ICmp {
        pred: CmpPred,
        lhs: Operand,
        rhs: Operand,
    },
    Load {
        ty: Precision,
        array: String,
        index: Operand,
    },
    Store {
        ty: Precision,
        array: String,
        index: Operand,
        value: Operand,
    },
    /// `row * stride + col`
    Idx {
        row: Operand,
        col: Operand,
        stride: Operand,
    },
    Br {
        target: String,
    },
    BrCond {
        cond: Operand,
        then_to: String,
        else_to: String,
    },
    Phi {
        ty: Type,
        incoming: Vec<(Operand, String)>,
    },
    Ret {
        value: Option<Operand>,
    },
}

impl Op {
    pub fn mnemonic(&self) -> &'static str {
        match self {
            Op::FConst { .. } => "fconst",
            Op::FBin { op, .. } => op.mnemonic(),
            Op::FpExt { .. } => "fpext",
            Op::FpTrunc { .. } => "fptrunc",
            Op::FCall { .. } => "fcall",
            Op::IConst { .. } => "iconst",
            Op::IBin { op, .. } => op.mnemonic(),
            Op::ICmp { .. } => "icmp",
            Op::Load { .. } => "load",
            Op::Store { .. } => "store",
            Op::Idx { .. } => "idx",
            Op::Br { .. } => "br",
            Op::BrCond { .. } => "brcond",
            Op::Phi { .. } => "phi",
            Op::Ret { .. } => "ret",
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(self, Op::Br { .. } | Op::BrCond { .. } | Op::Ret { .. })
    }

    /// Floating arithmetic and intrinsic calls: the profiled, promotable unit.
    pub fn is_float_arith(&self) -> bool {
        matches!(self, Op::FBin { .. } | Op::FCall { .. })
    }

    /// Declared width of a float arithmetic instruction.
    pub fn arith_precision(&self) -> Option<Precision> {
        match self {
            Op::FBin { ty, .. } | Op::FCall { ty, .. } => Some(*ty),
            _ => None,
        }
    }

    /// Short name used in profiles and graph labels, e.g. `fmul.f32` or
    /// `fcall.sin.f32`.
    pub fn label(&self) -> String {
        match self {
            Op::FBin { op, ty, .. } => format!("{}.{ty}", op.mnemonic()),
            Op::FCall { func, ty, .. } => format!("fcall.{}.{ty}", func.name()),
            Op::FConst { ty, .. } => format!("fconst.{ty}"),
            Op::Load { ty, .. } => format!("load.{ty}"),
            Op::Store { ty, .. } => format!("store.{ty}"),
            Op::Phi { ty, .. } => format!("phi.{ty}"),
            other => other.mnemonic().to_string(),
        }
    }

    /// All operands read by this instruction, in textual order.
    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            Op::FConst { .. } | Op::IConst { .. } | Op::Br { .. } => vec![],
            Op::FBin { lhs, rhs, .. } | Op::IBin { lhs, rhs, .. } | Op::ICmp { lhs, rhs, .. } => {
                vec![lhs, rhs]
            }
            Op::FpExt { src } | Op::FpTrunc { src } => vec![src],
            Op::FCall { arg, .. } => vec![arg],
            Op::Load { index, .. } => vec![index],
            Op::Store { index, value, .. } => vec![index, value],
            Op::Idx { row, col, stride } => vec![row, col, stride],
            Op::BrCond { cond, .. } => vec![cond],
            Op::Phi { incoming, .. } => incoming.iter().map(|(v, _)| v).collect(),
            Op::Ret { value } => value.iter().collect(),
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            Op::FConst { .. } | Op::IConst { .. } | Op::Br { .. } => vec![],
            Op::FBin { lhs, rhs, .. } | Op::IBin { lhs, rhs, .. } | Op::ICmp { lhs, rhs, .. } => {
                vec![lhs, rhs]
            }
            Op::FpExt { src } | Op::FpTrunc { src } => vec![src],
            Op::FCall { arg, .. } => vec![arg],
            Op::Load { index, .. } => vec![index],
            Op::Store { index, value, .. } => vec![index, value],
            Op::Idx { row, col, stride } => vec![row, col, stride],
            Op::BrCond { cond, .. } => vec![cond],
            Op::Phi { incoming, .. } => incoming.iter_mut().map(|(v, _)| v).collect(),
            Op::Ret { value } => value.iter_mut().collect(),
        }
    }

    /// Successor block labels of a terminator.
    pub fn successors(&self) -> Vec<&str> {
        match self {
            Op::Br { target } => vec![target],
            Op::BrCond { then_to, else_to, .. } => vec![then_to, else_to],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instr {
    pub dest: Option<String>,
    pub op: Op,
}

impl Instr {
    pub fn new(dest: impl Into<String>, op: Op) -> Self {
        Instr { dest: Some(dest.into()), op }
    }

    pub fn effect(op: Op) -> Self {
        Instr { dest: None, op }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub label: String,
    pub instrs: Vec<Instr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    /// `None` for `void`.
    pub ret: Option<Type>,
    pub blocks: Vec<Block>,
}

impl Function {
    pub fn block(&self, label: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.label == label)
    }

    /// Iterates over every instruction together with its block index and
    /// position inside the block.
    pub fn instrs(&self) -> impl Iterator<Item = (usize, usize, &Instr)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(bi, b)| b.instrs.iter().enumerate().map(move |(ii, ins)| (bi, ii, ins)))
    }

    /// Array parameters, i.e. the declared storage of this function.
    pub fn arrays(&self) -> impl Iterator<Item = ArraySpec> + '_ {
        self.params.iter().filter_map(|p| match p.ty {
            Type::Array { elem, len } => Some(ArraySpec { name: p.name.clone(), elem, length: len }),
            _ => None,
        })
    }
}

/// Declared storage of one array parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArraySpec {
    pub name: String,
    pub elem: Precision,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub functions: Vec<Function>,
    /// Name of the entry function; the first function of the source text.
    pub entry: String,
}

impl Program {
    pub fn new(functions: Vec<Function>) -> Self {
        let entry = functions.first().map(|f| f.name.clone()).unwrap_or_default();
        Program { functions, entry }
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn entry_function(&self) -> Option<&Function> {
        self.function(&self.entry)
    }

    /// Looks up the instruction that defines `id`.
    pub fn instr(&self, id: &InstrId) -> Option<&Instr> {
        self.function(&id.function)?
            .instrs()
            .map(|(_, _, ins)| ins)
            .find(|ins| ins.dest.as_deref() == Some(id.dest.as_str()))
    }

    /// Identities of every float arithmetic or intrinsic instruction, in
    /// program order.
    pub fn float_arith_ids(&self) -> Vec<InstrId> {
        let mut out = Vec::new();
        for f in &self.functions {
            for (_, _, ins) in f.instrs() {
                if let (true, Some(d)) = (ins.op.is_float_arith(), &ins.dest) {
                    out.push(InstrId::new(&f.name, d));
                }
            }
        }
        out
    }
}

/// Static instruction identity: parent function and destination register
/// (both stored without their `@` / `%` sigils).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstrId {
    pub function: String,
    pub dest: String,
}

impl InstrId {
    pub fn new(function: impl Into<String>, dest: impl Into<String>) -> Self {
        InstrId { function: function.into(), dest: dest.into() }
    }
}

impl fmt::Display for InstrId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}:%{}", self.function, self.dest)
    }
}

/// How an execution assigns widths to operations and storage.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PrecisionAssignment {
    /// Declared widths, except that every listed instruction runs at F64.
    /// Storage keeps its declared width.
    Mixed(std::collections::BTreeSet<InstrId>),
    /// Every operation, constant and array at F32.
    #[default]
    UniformF32,
    /// Every operation, constant and array at F64.
    UniformF64,
}

impl PrecisionAssignment {
    /// Mixed mode with nothing promoted: the program as declared.
    pub fn declared() -> Self {
        PrecisionAssignment::Mixed(Default::default())
    }
}
