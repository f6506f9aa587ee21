//! Structural, type and SSA checks.

use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{Function, InstrId, Op, Operand, Precision, Program, Type};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Structure,
    Duplicate,
    Undefined,
    Type,
    Dominance,
    Phi,
}

/// One broken invariant, located by function, block and position; `dest`
/// names the offending register when the instruction has one.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub function: String,
    pub block: String,
    pub index: usize,
    pub dest: Option<String>,
    pub detail: String,
}

impl Violation {
    pub fn id(&self) -> Option<InstrId> {
        self.dest.as_ref().map(|d| InstrId::new(&self.function, d))
    }

    pub fn is_dominance(&self) -> bool {
        self.kind == ViolationKind::Dominance
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.dest {
            Some(d) => write!(f, "@{}:%{}", self.function, d)?,
            None => write!(f, "@{}:{}#{}", self.function, self.block, self.index)?,
        }
        write!(f, ": {:?}: {}", self.kind, self.detail)
    }
}

/// Checks every type and SSA invariant. Returns all violations found.
pub fn validate(p: &Program) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut names = HashSet::new();
    for f in &p.functions {
        if !names.insert(f.name.as_str()) {
            out.push(Violation {
                kind: ViolationKind::Duplicate,
                function: f.name.clone(),
                block: String::new(),
                index: 0,
                dest: None,
                detail: "duplicate function name".into(),
            });
        }
        validate_function(f, &mut out);
    }
    if p.function(&p.entry).is_none() {
        out.push(Violation {
            kind: ViolationKind::Structure,
            function: p.entry.clone(),
            block: String::new(),
            index: 0,
            dest: None,
            detail: "entry function does not exist".into(),
        });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Where a register is defined: a parameter, or (block, position).
#[derive(Clone, Copy)]
enum Def {
    Param,
    At(usize, usize),
}

struct Ctx<'a> {
    f: &'a Function,
    out: &'a mut Vec<Violation>,
}

impl Ctx<'_> {
    fn report(&mut self, kind: ViolationKind, bi: usize, ii: usize, detail: impl Into<String>) {
        let b = &self.f.blocks[bi];
        self.out.push(Violation {
            kind,
            function: self.f.name.clone(),
            block: b.label.clone(),
            index: ii,
            dest: b.instrs.get(ii).and_then(|i| i.dest.clone()),
            detail: detail.into(),
        });
    }
}

fn result_type(op: &Op) -> Option<Type> {
    Some(match op {
        Op::FConst { ty, .. } | Op::FBin { ty, .. } | Op::FCall { ty, .. } | Op::Load { ty, .. } => Type::Float(*ty),
        Op::FpExt { .. } => Type::F64,
        Op::FpTrunc { .. } => Type::F32,
        Op::IConst { .. } | Op::IBin { .. } | Op::Idx { .. } => Type::I64,
        Op::ICmp { .. } => Type::Bool,
        Op::Phi { ty, .. } => *ty,
        Op::Store { .. } | Op::Br { .. } | Op::BrCond { .. } | Op::Ret { .. } => return None,
    })
}

fn validate_function(f: &Function, out: &mut Vec<Violation>) {
    let mut cx = Ctx { f, out };
    if f.blocks.is_empty() {
        cx.out.push(Violation {
            kind: ViolationKind::Structure,
            function: f.name.clone(),
            block: String::new(),
            index: 0,
            dest: None,
            detail: "function has no blocks".into(),
        });
        return;
    }

    let mut label_ix: HashMap<&str, usize> = HashMap::new();
    for (bi, b) in f.blocks.iter().enumerate() {
        if label_ix.insert(b.label.as_str(), bi).is_some() {
            cx.report(ViolationKind::Duplicate, bi, 0, format!("duplicate block label `{}`", b.label));
        }
    }

    // Definitions and their types.
    let mut defs: HashMap<&str, (Def, Type)> = HashMap::new();
    for p in &f.params {
        if matches!(p.ty, Type::Bool) {
            cx.out.push(Violation {
                kind: ViolationKind::Type,
                function: f.name.clone(),
                block: f.blocks[0].label.clone(),
                index: 0,
                dest: None,
                detail: format!("parameter %{} cannot be bool", p.name),
            });
        }
        if defs.insert(p.name.as_str(), (Def::Param, p.ty)).is_some() {
            cx.report(ViolationKind::Duplicate, 0, 0, format!("duplicate parameter %{}", p.name));
        }
    }
    for (bi, ii, ins) in f.instrs() {
        if let Some(d) = &ins.dest {
            match result_type(&ins.op) {
                Some(t) => {
                    if defs.insert(d.as_str(), (Def::At(bi, ii), t)).is_some() {
                        cx.report(ViolationKind::Duplicate, bi, ii, format!("%{d} defined more than once"));
                    }
                }
                None => cx.report(
                    ViolationKind::Structure,
                    bi,
                    ii,
                    format!("`{}` cannot have a destination", ins.op.mnemonic()),
                ),
            }
        } else if result_type(&ins.op).is_some() {
            cx.report(ViolationKind::Structure, bi, ii, format!("`{}` needs a destination", ins.op.mnemonic()));
        }
    }

    // Block shape and control-flow edges.
    let n = f.blocks.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (bi, b) in f.blocks.iter().enumerate() {
        if b.instrs.is_empty() {
            cx.report(ViolationKind::Structure, bi, 0, "empty block");
            continue;
        }
        let last = b.instrs.len() - 1;
        let mut seen_non_phi = false;
        for (ii, ins) in b.instrs.iter().enumerate() {
            if ins.op.is_terminator() && ii != last {
                cx.report(ViolationKind::Structure, bi, ii, "terminator before the end of the block");
            }
            if matches!(ins.op, Op::Phi { .. }) {
                if seen_non_phi {
                    cx.report(ViolationKind::Phi, bi, ii, "phi after a non-phi instruction");
                }
            } else {
                seen_non_phi = true;
            }
        }
        if !b.instrs[last].op.is_terminator() {
            cx.report(ViolationKind::Structure, bi, last, "block does not end with a terminator");
        }
        for s in b.instrs[last].op.successors() {
            match label_ix.get(s) {
                Some(&si) => {
                    if !succs[bi].contains(&si) {
                        succs[bi].push(si);
                        preds[si].push(bi);
                    }
                }
                None => cx.report(ViolationKind::Undefined, bi, last, format!("unknown block `{s}`")),
            }
        }
    }

    let reachable = reachable_blocks(&succs);
    let dom = dominators(&preds, &reachable);

    // Operand typing and dominance.
    for (bi, ii, ins) in f.instrs() {
        let expect = |cx: &mut Ctx, o: &Operand, want: Type, what: &str| {
            check_operand(cx, &defs, bi, ii, o, want, what);
        };
        match &ins.op {
            Op::FConst { .. } | Op::IConst { .. } | Op::Br { .. } => {}
            Op::FBin { ty, lhs, rhs, .. } => {
                expect(&mut cx, lhs, Type::Float(*ty), "lhs");
                expect(&mut cx, rhs, Type::Float(*ty), "rhs");
            }
            Op::FpExt { src } => expect(&mut cx, src, Type::F32, "fpext source"),
            Op::FpTrunc { src } => expect(&mut cx, src, Type::F64, "fptrunc source"),
            Op::FCall { ty, arg, .. } => expect(&mut cx, arg, Type::Float(*ty), "argument"),
            Op::IBin { lhs, rhs, .. } | Op::ICmp { lhs, rhs, .. } => {
                expect(&mut cx, lhs, Type::I64, "lhs");
                expect(&mut cx, rhs, Type::I64, "rhs");
            }
            Op::Idx { row, col, stride } => {
                expect(&mut cx, row, Type::I64, "row");
                expect(&mut cx, col, Type::I64, "col");
                expect(&mut cx, stride, Type::I64, "stride");
            }
            Op::Load { ty, array, index } => {
                check_array(&mut cx, &defs, bi, ii, array, *ty);
                expect(&mut cx, index, Type::I64, "index");
            }
            Op::Store { ty, array, index, value } => {
                check_array(&mut cx, &defs, bi, ii, array, *ty);
                expect(&mut cx, index, Type::I64, "index");
                expect(&mut cx, value, Type::Float(*ty), "stored value");
            }
            Op::BrCond { cond, .. } => expect(&mut cx, cond, Type::Bool, "condition"),
            Op::Phi { ty, incoming } => {
                for (v, _) in incoming {
                    expect(&mut cx, v, *ty, "incoming value");
                }
                let mut labels: Vec<usize> = Vec::new();
                for (_, l) in incoming {
                    match label_ix.get(l.as_str()) {
                        Some(&li) => {
                            if labels.contains(&li) {
                                cx.report(ViolationKind::Phi, bi, ii, format!("two incoming values for `{l}`"));
                            }
                            labels.push(li);
                            if !preds[bi].contains(&li) {
                                cx.report(ViolationKind::Phi, bi, ii, format!("`{l}` is not a predecessor"));
                            }
                        }
                        None => cx.report(ViolationKind::Undefined, bi, ii, format!("unknown block `{l}`")),
                    }
                }
                for &p in &preds[bi] {
                    if !labels.contains(&p) {
                        let l = f.blocks[p].label.clone();
                        cx.report(ViolationKind::Phi, bi, ii, format!("missing incoming value for predecessor `{l}`"));
                    }
                }
            }
            Op::Ret { value } => match (value, f.ret) {
                (None, None) => {}
                (Some(v), Some(t)) => expect(&mut cx, v, t, "return value"),
                (Some(_), None) => cx.report(ViolationKind::Type, bi, ii, "value returned from a void function"),
                (None, Some(t)) => cx.report(ViolationKind::Type, bi, ii, format!("missing return value of type {t}")),
            },
        }

        if !reachable[bi] {
            continue;
        }
        if let Op::Phi { incoming, .. } = &ins.op {
            for (v, l) in incoming {
                let (Some(r), Some(&pi)) = (v.as_reg(), label_ix.get(l.as_str())) else { continue };
                if let Some((Def::At(db, _), _)) = defs.get(r) {
                    if reachable[pi] && !dom[pi].contains(db) {
                        cx.report(
                            ViolationKind::Dominance,
                            bi,
                            ii,
                            format!("%{r} does not dominate the edge from `{l}`"),
                        );
                    }
                }
            }
        } else {
            for o in ins.op.operands() {
                let Some(r) = o.as_reg() else { continue };
                if let Some((Def::At(db, di), _)) = defs.get(r) {
                    let ok = if *db == bi { *di < ii } else { dom[bi].contains(db) };
                    if !ok {
                        cx.report(
                            ViolationKind::Dominance,
                            bi,
                            ii,
                            format!("use of %{r} is not dominated by its definition"),
                        );
                    }
                }
            }
        }
    }
}

fn check_operand(
    cx: &mut Ctx,
    defs: &HashMap<&str, (Def, Type)>,
    bi: usize,
    ii: usize,
    o: &Operand,
    want: Type,
    what: &str,
) {
    match o {
        Operand::Int(_) => {
            if want != Type::I64 {
                cx.report(ViolationKind::Type, bi, ii, format!("{what}: integer immediate where {want} is expected"));
            }
        }
        Operand::Reg(r) => match defs.get(r.as_str()) {
            None => cx.report(ViolationKind::Undefined, bi, ii, format!("{what}: %{r} is not defined")),
            Some((_, t)) if *t != want => {
                cx.report(ViolationKind::Type, bi, ii, format!("{what}: %{r} has type {t}, expected {want}"))
            }
            Some(_) => {}
        },
    }
}

fn check_array(cx: &mut Ctx, defs: &HashMap<&str, (Def, Type)>, bi: usize, ii: usize, array: &str, ty: Precision) {
    match defs.get(array) {
        Some((Def::Param, Type::Array { elem, .. })) => {
            if *elem != ty {
                cx.report(ViolationKind::Type, bi, ii, format!("%{array} stores {elem}, accessed as {ty}"));
            }
        }
        Some(_) => cx.report(ViolationKind::Type, bi, ii, format!("%{array} is not an array parameter")),
        None => cx.report(ViolationKind::Undefined, bi, ii, format!("array %{array} is not defined")),
    }
}

fn reachable_blocks(succs: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; succs.len()];
    let mut stack = vec![0];
    while let Some(b) = stack.pop() {
        if std::mem::replace(&mut seen[b], true) {
            continue;
        }
        stack.extend(succs[b].iter().copied().filter(|&s| !seen[s]));
    }
    seen
}

/// Dominator sets (each block's set includes itself) by the classic
/// iterative data-flow formulation; unreachable blocks get empty sets.
pub(crate) fn dominators(preds: &[Vec<usize>], reachable: &[bool]) -> Vec<HashSet<usize>> {
    let n = preds.len();
    let all: HashSet<usize> = (0..n).filter(|&b| reachable[b]).collect();
    let mut dom: Vec<HashSet<usize>> = (0..n)
        .map(|b| {
            if b == 0 {
                HashSet::from([0])
            } else if reachable[b] {
                all.clone()
            } else {
                HashSet::new()
            }
        })
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for b in 1..n {
            if !reachable[b] {
                continue;
            }
            let mut it = preds[b].iter().filter(|&&p| reachable[p]);
            let mut new = match it.next() {
                Some(&p) => dom[p].clone(),
                None => HashSet::new(),
            };
            for &p in it {
                new.retain(|x| dom[p].contains(x));
            }
            new.insert(b);
            if new != dom[b] {
                dom[b] = new;
                changed = true;
            }
        }
    }
    dom
}

#[cfg(test)]
mod tests {
    use super::super::parse::parse_unchecked;
    use super::*;

    fn violations(src: &str) -> Vec<Violation> {
        validate(&parse_unchecked(src).unwrap()).err().unwrap_or_default()
    }

    #[test]
    fn mixed_width_fadd_is_a_type_violation_at_its_id() {
        let v = violations("func @f(%a: f32, %b: f64) -> f32 { entry: %s = fadd f32 %a, %b ret %s }");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::Type);
        assert_eq!(v[0].id(), Some(InstrId::new("f", "s")));
    }

    #[test]
    fn load_must_match_storage() {
        let v = violations("func @f(%A: arr<f32, 4>) -> f64 { entry: %x = load f64 %A, 0 ret %x }");
        assert!(v.iter().any(|v| v.kind == ViolationKind::Type && v.detail.contains("stores f32")));
    }

    #[test]
    fn phi_needs_one_value_per_predecessor() {
        let v = violations(
            "func @f(%n: i64) -> void {
               entry: br body
               body: %i = phi i64 [0, entry]
                     %j = iadd %i, 1
                     %c = icmp lt %j, %n
                     brcond %c, body, exit
               exit: ret }",
        );
        assert!(v.iter().any(|v| v.kind == ViolationKind::Phi && v.detail.contains("body")), "{v:?}");
    }

    #[test]
    fn use_in_non_dominated_block() {
        let v = violations(
            "func @f(%c: i64) -> f32 {
               entry: %k = icmp eq %c, 0
                      brcond %k, a, b
               a: %x = fconst f32 1.0
                  br b
               b: ret %x }",
        );
        assert!(v.iter().any(Violation::is_dominance), "{v:?}");
    }

    #[test]
    fn loop_carried_phi_is_fine() {
        let v = violations(
            "func @f() -> f32 {
               entry: %z = fconst f32 0.0
                      %one = fconst f32 1.0
                      br body
               body: %i = phi i64 [0, entry], [%i2, body]
                     %s = phi f32 [%z, entry], [%s2, body]
                     %s2 = fadd f32 %s, %one
                     %i2 = iadd %i, 1
                     %c = icmp lt %i2, 10
                     brcond %c, body, exit
               exit: ret %s2 }",
        );
        assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn missing_terminator_and_float_immediate() {
        let v = violations("func @f(%a: f32) -> f32 { entry: %s = fadd f32 %a, 1 }");
        assert!(v.iter().any(|v| v.kind == ViolationKind::Structure));
        assert!(v.iter().any(|v| v.kind == ViolationKind::Type && v.detail.contains("immediate")));
    }
}
