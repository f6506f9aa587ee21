use std::fmt::Write;

use super::{Function, Instr, Op, Operand, Program};

/// Renders a program in the canonical text form accepted by
/// [`parse_text`](super::parse_text).
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for (i, f) in p.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_function(&mut out, f);
    }
    out
}

fn print_function(out: &mut String, f: &Function) {
    let params: Vec<String> = f.params.iter().map(|p| format!("%{}: {}", p.name, p.ty)).collect();
    let ret = f.ret.map_or_else(|| "void".to_string(), |t| t.to_string());
    let _ = writeln!(out, "func @{}({}) -> {} {{", f.name, params.join(", "), ret);
    for b in &f.blocks {
        let _ = writeln!(out, "{}:", b.label);
        for ins in &b.instrs {
            let _ = writeln!(out, "  {}", instr_text(ins));
        }
    }
    out.push_str("}\n");
}

fn opnd(o: &Operand) -> String {
    match o {
        Operand::Reg(r) => format!("%{r}"),
        Operand::Int(v) => v.to_string(),
    }
}

/// Float literals print in Rust's shortest round-trip form, so parsing the
/// printed text recovers the identical `f64`.
fn float_lit(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn instr_text(ins: &Instr) -> String {
    let body = match &ins.op {
        Op::FConst { ty, value } => format!("fconst {ty} {}", float_lit(*value)),
        Op::FBin { op, ty, lhs, rhs } => format!("{} {ty} {}, {}", op.mnemonic(), opnd(lhs), opnd(rhs)),
        Op::FpExt { src } => format!("fpext {}", opnd(src)),
        Op::FpTrunc { src } => format!("fptrunc {}", opnd(src)),
        Op::FCall { func, ty, arg } => format!("fcall {} {ty} {}", func.name(), opnd(arg)),
        Op::IConst { value } => format!("iconst {value}"),
        Op::IBin { op, lhs, rhs } => format!("{} {}, {}", op.mnemonic(), opnd(lhs), opnd(rhs)),
        Op::ICmp { pred, lhs, rhs } => format!("icmp {} {}, {}", pred.name(), opnd(lhs), opnd(rhs)),
        Op::Load { ty, array, index } => format!("load {ty} %{array}, {}", opnd(index)),
        Op::Store { ty, array, index, value } => {
            format!("store {ty} %{array}, {}, {}", opnd(index), opnd(value))
        }
        Op::Idx { row, col, stride } => format!("idx {}, {}, {}", opnd(row), opnd(col), opnd(stride)),
        Op::Br { target } => format!("br {target}"),
        Op::BrCond { cond, then_to, else_to } => format!("brcond {}, {then_to}, {else_to}", opnd(cond)),
        Op::Phi { ty, incoming } => {
            let arms: Vec<String> = incoming.iter().map(|(v, l)| format!("[{}, {l}]", opnd(v))).collect();
            format!("phi {ty} {}", arms.join(", "))
        }
        Op::Ret { value: Some(v) } => format!("ret {}", opnd(v)),
        Op::Ret { value: None } => "ret".to_string(),
    };
    match &ins.dest {
        Some(d) => format!("%{d} = {body}"),
        None => body,
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_text;
    use super::*;

    #[test]
    fn prints_canonical_form() {
        let p = parse_text("func @f(%A: arr<f32,2>) -> f32 { entry: %r1 = load f32 %A, 0 %c = fconst f32 0.1 %r2 = fadd f32 %r1, %c ret %r2 }")
            .unwrap();
        let text = print_program(&p);
        assert_eq!(
            text,
            "func @f(%A: arr<f32, 2>) -> f32 {\nentry:\n  %r1 = load f32 %A, 0\n  %c = fconst f32 0.1\n  %r2 = fadd f32 %r1, %c\n  ret %r2\n}\n"
        );
        assert_eq!(parse_text(&text).unwrap(), p);
    }
}
