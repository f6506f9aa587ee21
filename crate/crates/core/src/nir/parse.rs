//! Text front end. The grammar is token based, so a whole function may sit
//! on one line; `//` starts a comment that runs to the end of the line.

use std::collections::HashSet;

use thiserror::Error;

use super::{
    validate, Block, CmpPred, FBinOp, Function, IBinOp, Instr, Intrinsic, Op, Operand, Param, Precision, Program, Type,
    Violation,
};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: duplicate definition of {what}")]
    Duplicate { line: usize, col: usize, what: String },
    #[error("{line}:{col}: unknown opcode `{name}`")]
    UnknownOpcode { line: usize, col: usize, name: String },
    #[error("program is not valid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

impl ParseError {
    /// True if the error is an SSA dominance violation reported by validation.
    pub fn is_dominance(&self) -> bool {
        matches!(self, ParseError::Invalid(vs) if vs.iter().any(|v| v.is_dominance()))
    }
}

/// Parses and validates IR text.
pub fn parse_text(source: &str) -> Result<Program, ParseError> {
    let program = parse_unchecked(source)?;
    validate(&program).map_err(ParseError::Invalid)?;
    Ok(program)
}

/// Parses IR text, checking syntax and duplicate definitions only.
pub fn parse_unchecked(source: &str) -> Result<Program, ParseError> {
    let tokens = lex(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut functions = Vec::new();
    let mut names = HashSet::new();
    while !p.at_end() {
        let (line, col) = p.loc();
        let f = p.function()?;
        if !names.insert(f.name.clone()) {
            return Err(ParseError::Duplicate { line, col, what: format!("function @{}", f.name) });
        }
        functions.push(f);
    }
    if functions.is_empty() {
        return Err(ParseError::Syntax { line: 1, col: 1, msg: "expected at least one function".into() });
    }
    Ok(Program::new(functions))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Reg(String),
    Global(String),
    Num(String),
    Punct(char),
    Arrow,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (li, line) in src.lines().enumerate() {
        let line = match line.find("//") {
            Some(i) => &line[..i],
            None => line,
        };
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            let at = |tok| Token { tok, line: li + 1, col };
            if c.is_whitespace() {
                i += 1;
            } else if c == '-' && chars.get(i + 1) == Some(&'>') {
                out.push(at(Tok::Arrow));
                i += 2;
            } else if c == '%' || c == '@' {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && is_name_char(chars[j]) {
                    j += 1;
                }
                if j == start {
                    return Err(ParseError::Syntax { line: li + 1, col, msg: format!("empty name after `{c}`") });
                }
                let name: String = chars[start..j].iter().collect();
                out.push(at(if c == '%' { Tok::Reg(name) } else { Tok::Global(name) }));
                i = j;
            } else if c.is_ascii_digit()
                || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.'))
            {
                let start = i;
                let mut j = i + 1;
                while j < chars.len() {
                    let d = chars[j];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[j - 1], 'e' | 'E');
                    if d.is_ascii_alphanumeric() || d == '.' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                out.push(at(Tok::Num(chars[start..j].iter().collect())));
                i = j;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                let mut j = i;
                while j < chars.len() && is_name_char(chars[j]) {
                    j += 1;
                }
                out.push(at(Tok::Ident(chars[start..j].iter().collect())));
                i = j;
            } else if "(){}[],:=<>".contains(c) {
                out.push(at(Tok::Punct(c)));
                i += 1;
            } else {
                return Err(ParseError::Syntax { line: li + 1, col, msg: format!("unexpected character `{c}`") });
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + k).map(|t| &t.tok)
    }

    fn loc(&self) -> (usize, usize) {
        match self.tokens.get(self.pos).or(self.tokens.last()) {
            Some(t) => (t.line, t.col),
            None => (1, 1),
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.loc();
        Err(ParseError::Syntax { line, col, msg: msg.into() })
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn punct(&mut self, c: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Punct(p)) if *p == c => {
                self.pos += 1;
                Ok(())
            }
            other => {
                let found = describe(other);
                self.err(format!("expected `{c}`, found {found}"))
            }
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(p)) if *p == c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            other => {
                let found = describe(other);
                self.err(format!("expected `{kw}`, found {found}"))
            }
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            other => {
                let found = describe(other);
                self.err(format!("expected a name, found {found}"))
            }
        }
    }

    fn reg(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Reg(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            other => {
                let found = describe(other);
                self.err(format!("expected a register, found {found}"))
            }
        }
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        match self.peek() {
            Some(Tok::Num(s)) => match s.parse::<i64>() {
                Ok(v) => {
                    self.pos += 1;
                    Ok(v)
                }
                Err(_) => self.err(format!("expected an integer, found `{s}`")),
            },
            other => {
                let found = describe(other);
                self.err(format!("expected an integer, found {found}"))
            }
        }
    }

    fn float_lit(&mut self) -> Result<f64, ParseError> {
        match self.peek() {
            Some(Tok::Num(s)) => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    self.pos += 1;
                    Ok(v)
                }
                _ => self.err(format!("expected a finite float literal, found `{s}`")),
            },
            other => {
                let found = describe(other);
                self.err(format!("expected a float literal, found {found}"))
            }
        }
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        match self.peek() {
            Some(Tok::Reg(_)) => Ok(Operand::Reg(self.reg()?)),
            Some(Tok::Num(_)) => Ok(Operand::Int(self.int()?)),
            other => {
                let found = describe(other);
                self.err(format!("expected an operand, found {found}"))
            }
        }
    }

    fn precision(&mut self) -> Result<Precision, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == "f32" => {
                self.pos += 1;
                Ok(Precision::F32)
            }
            Some(Tok::Ident(s)) if s == "f64" => {
                self.pos += 1;
                Ok(Precision::F64)
            }
            other => {
                let found = describe(other);
                self.err(format!("expected `f32` or `f64`, found {found}"))
            }
        }
    }

    fn ty(&mut self) -> Result<Type, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == "i64" => {
                self.pos += 1;
                Ok(Type::I64)
            }
            Some(Tok::Ident(s)) if s == "arr" => {
                self.pos += 1;
                self.punct('<')?;
                let elem = self.precision()?;
                self.punct(',')?;
                let len = self.int()?;
                if len < 0 {
                    return self.err("array length must be non-negative");
                }
                self.punct('>')?;
                Ok(Type::Array { elem, len: len as usize })
            }
            _ => Ok(Type::Float(self.precision()?)),
        }
    }

    fn function(&mut self) -> Result<Function, ParseError> {
        self.keyword("func")?;
        let name = match self.next() {
            Some(Tok::Global(n)) => n,
            other => {
                self.pos -= 1;
                let found = describe(other.as_ref());
                return self.err(format!("expected `@name`, found {found}"));
            }
        };
        self.punct('(')?;
        let mut params = Vec::new();
        let mut seen = HashSet::new();
        if !self.eat_punct(')') {
            loop {
                let (line, col) = self.loc();
                let pname = self.reg()?;
                self.punct(':')?;
                let ty = self.ty()?;
                if !seen.insert(pname.clone()) {
                    return Err(ParseError::Duplicate { line, col, what: format!("parameter %{pname}") });
                }
                params.push(Param { name: pname, ty });
                if self.eat_punct(')') {
                    break;
                }
                self.punct(',')?;
            }
        }
        match self.next() {
            Some(Tok::Arrow) => {}
            other => {
                self.pos -= 1;
                let found = describe(other.as_ref());
                return self.err(format!("expected `->`, found {found}"));
            }
        }
        let ret = match self.peek() {
            Some(Tok::Ident(s)) if s == "void" => {
                self.pos += 1;
                None
            }
            _ => Some(Type::Float(self.precision()?)),
        };
        self.punct('{')?;
        let mut blocks: Vec<Block> = Vec::new();
        let mut labels = HashSet::new();
        let mut defs: HashSet<String> = params.iter().map(|p| p.name.clone()).collect();
        while !self.eat_punct('}') {
            if self.at_end() {
                return self.err("unexpected end of input inside function body");
            }
            let (line, col) = self.loc();
            let label = self.ident()?;
            self.punct(':')?;
            if !labels.insert(label.clone()) {
                return Err(ParseError::Duplicate { line, col, what: format!("block `{label}`") });
            }
            let mut instrs = Vec::new();
            while !self.block_ends() {
                let (line, col) = self.loc();
                let ins = self.instr()?;
                if let Some(d) = &ins.dest {
                    if !defs.insert(d.clone()) {
                        return Err(ParseError::Duplicate { line, col, what: format!("register %{d}") });
                    }
                }
                instrs.push(ins);
            }
            if instrs.is_empty() {
                return self.err(format!("block `{label}` has no instructions"));
            }
            blocks.push(Block { label, instrs });
        }
        if blocks.is_empty() {
            return self.err(format!("function @{name} has no blocks"));
        }
        Ok(Function { name, params, ret, blocks })
    }

    /// A block ends at `}` or at the next `label:`.
    fn block_ends(&self) -> bool {
        matches!(
            (self.peek(), self.peek_at(1)),
            (None, _) | (Some(Tok::Punct('}')), _) | (Some(Tok::Ident(_)), Some(Tok::Punct(':')))
        )
    }

    fn instr(&mut self) -> Result<Instr, ParseError> {
        if let Some(Tok::Reg(_)) = self.peek() {
            let dest = self.reg()?;
            self.punct('=')?;
            let op = self.value_op()?;
            return Ok(Instr { dest: Some(dest), op });
        }
        let (line, col) = self.loc();
        let name = self.ident()?;
        let op = match name.as_str() {
            "store" => {
                let ty = self.precision()?;
                let array = self.reg()?;
                self.punct(',')?;
                let index = self.operand()?;
                self.punct(',')?;
                let value = self.operand()?;
                Op::Store { ty, array, index, value }
            }
            "br" => Op::Br { target: self.ident()? },
            "brcond" => {
                let cond = self.operand()?;
                self.punct(',')?;
                let then_to = self.ident()?;
                self.punct(',')?;
                let else_to = self.ident()?;
                Op::BrCond { cond, then_to, else_to }
            }
            "ret" => {
                let has_value = match (self.peek(), self.peek_at(1)) {
                    (Some(Tok::Reg(_)), Some(Tok::Punct('='))) => false,
                    (Some(Tok::Reg(_)), _) | (Some(Tok::Num(_)), _) => true,
                    _ => false,
                };
                Op::Ret { value: if has_value { Some(self.operand()?) } else { None } }
            }
            _ if is_value_opcode(&name) => {
                return Err(ParseError::Syntax { line, col, msg: format!("`{name}` needs a destination register") })
            }
            _ => return Err(ParseError::UnknownOpcode { line, col, name }),
        };
        Ok(Instr { dest: None, op })
    }

    fn value_op(&mut self) -> Result<Op, ParseError> {
        let (line, col) = self.loc();
        let name = self.ident()?;
        Ok(match name.as_str() {
            "fconst" => {
                let ty = self.precision()?;
                let value = self.float_lit()?;
                Op::FConst { ty, value }
            }
            "fadd" | "fsub" | "fmul" | "fdiv" => {
                let op = match name.as_str() {
                    "fadd" => FBinOp::Add,
                    "fsub" => FBinOp::Sub,
                    "fmul" => FBinOp::Mul,
                    _ => FBinOp::Div,
                };
                let ty = self.precision()?;
                let lhs = self.operand()?;
                self.punct(',')?;
                let rhs = self.operand()?;
                Op::FBin { op, ty, lhs, rhs }
            }
            "fpext" => Op::FpExt { src: self.operand()? },
            "fptrunc" => Op::FpTrunc { src: self.operand()? },
            "fcall" => {
                let (fl, fc) = self.loc();
                let fname = self.ident()?;
                let func = Intrinsic::from_name(&fname).ok_or(ParseError::Syntax {
                    line: fl,
                    col: fc,
                    msg: format!("unknown intrinsic `{fname}`"),
                })?;
                let ty = self.precision()?;
                let arg = self.operand()?;
                Op::FCall { func, ty, arg }
            }
            "iconst" => Op::IConst { value: self.int()? },
            "iadd" | "isub" | "imul" => {
                let op = match name.as_str() {
                    "iadd" => IBinOp::Add,
                    "isub" => IBinOp::Sub,
                    _ => IBinOp::Mul,
                };
                let lhs = self.operand()?;
                self.punct(',')?;
                let rhs = self.operand()?;
                Op::IBin { op, lhs, rhs }
            }
            "icmp" => {
                let (pl, pc) = self.loc();
                let pred = match self.ident()?.as_str() {
                    "lt" => CmpPred::Lt,
                    "le" => CmpPred::Le,
                    "eq" => CmpPred::Eq,
                    other => {
                        return Err(ParseError::Syntax {
                            line: pl,
                            col: pc,
                            msg: format!("unknown predicate `{other}`"),
                        })
                    }
                };
                let lhs = self.operand()?;
                self.punct(',')?;
                let rhs = self.operand()?;
                Op::ICmp { pred, lhs, rhs }
            }
            "load" => {
                let ty = self.precision()?;
                let array = self.reg()?;
                self.punct(',')?;
                let index = self.operand()?;
                Op::Load { ty, array, index }
            }
            "idx" => {
                let row = self.operand()?;
                self.punct(',')?;
                let col = self.operand()?;
                self.punct(',')?;
                let stride = self.operand()?;
                Op::Idx { row, col, stride }
            }
            "phi" => {
                let ty = match self.ty()? {
                    t @ (Type::Float(_) | Type::I64) => t,
                    t => return self.err(format!("phi cannot have type {t}")),
                };
                let mut incoming = Vec::new();
                loop {
                    self.punct('[')?;
                    let v = self.operand()?;
                    self.punct(',')?;
                    let label = self.ident()?;
                    self.punct(']')?;
                    incoming.push((v, label));
                    if !self.eat_punct(',') {
                        break;
                    }
                }
                Op::Phi { ty, incoming }
            }
            "store" | "br" | "brcond" | "ret" => {
                return Err(ParseError::Syntax { line, col, msg: format!("`{name}` does not produce a value") })
            }
            _ => return Err(ParseError::UnknownOpcode { line, col, name }),
        })
    }
}

fn is_value_opcode(name: &str) -> bool {
    matches!(
        name,
        "fconst"
            | "fadd"
            | "fsub"
            | "fmul"
            | "fdiv"
            | "fpext"
            | "fptrunc"
            | "fcall"
            | "iconst"
            | "iadd"
            | "isub"
            | "imul"
            | "icmp"
            | "load"
            | "idx"
            | "phi"
    )
}

fn describe(t: Option<&Tok>) -> String {
    match t {
        None => "end of input".into(),
        Some(Tok::Ident(s)) => format!("`{s}`"),
        Some(Tok::Reg(s)) => format!("`%{s}`"),
        Some(Tok::Global(s)) => format!("`@{s}`"),
        Some(Tok::Num(s)) => format!("`{s}`"),
        Some(Tok::Punct(c)) => format!("`{c}`"),
        Some(Tok::Arrow) => "`->`".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MUL_SUB: &str = "
        // a - a * b
        func @f(%A: arr<f32, 2>) -> f32 {
        entry:
          %r1 = load f32 %A, 0     // r1 = a
          %r2 = load f32 %A, 1     // r2 = b
          %r3 = fmul f32 %r1, %r2  // r3 = a * b
          %r4 = fsub f32 %r1, %r3  // a - (a * b)
          ret %r4
        }";

    #[test]
    fn minimal_one_line_program() {
        let p = parse_text("func @f() -> f32 { entry: %c = fconst f32 1.0  ret %c }").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.functions[0].blocks[0].instrs.len(), 2);
        assert_eq!(p.entry, "f");
    }

    #[test]
    fn mul_sub_snippet_ids() {
        let p = parse_text(MUL_SUB).unwrap();
        let ids: Vec<String> = p.functions[0].instrs().filter_map(|(_, _, i)| i.dest.clone()).collect();
        assert_eq!(ids, ["r1", "r2", "r3", "r4"]);
        assert_eq!(p.float_arith_ids().len(), 2);
    }

    #[test]
    fn use_before_definition_is_a_dominance_error() {
        let err =
            parse_text("func @f() -> f32 { entry: %b = fadd f32 %a, %a  %a = fconst f32 1.0  ret %b }").unwrap_err();
        assert!(err.is_dominance(), "{err}");
    }

    #[test]
    fn unknown_opcode_reports_location() {
        let err = parse_unchecked("func @f() -> f32 {\nentry:\n  %c = fmadd f32 %a, %b\n ret %c }").unwrap_err();
        assert_eq!(err, ParseError::UnknownOpcode { line: 3, col: 8, name: "fmadd".into() });
    }

    #[test]
    fn duplicate_register_rejected() {
        let err =
            parse_unchecked("func @f() -> f32 { entry: %c = fconst f32 1.0 %c = fconst f32 2.0 ret %c }").unwrap_err();
        assert!(matches!(err, ParseError::Duplicate { .. }), "{err}");
    }

    #[test]
    fn duplicate_function_rejected() {
        let src = "func @f() -> void { entry: ret } func @f() -> void { entry: ret }";
        assert!(matches!(parse_unchecked(src), Err(ParseError::Duplicate { .. })));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_unchecked("func @f( -> f32 { }").unwrap_err();
        match err {
            ParseError::Syntax { line, col, .. } => assert_eq!((line, col), (1, 10)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn phi_with_immediate_and_void_ret() {
        let src = "func @loop(%n: i64) -> void {
            entry: br body
            body:
              %i = phi i64 [0, entry], [%i2, body]
              %i2 = iadd %i, 1
              %c = icmp lt %i2, %n
              brcond %c, body, exit
            exit: ret
        }";
        let p = parse_text(src).unwrap();
        let f = &p.functions[0];
        assert_eq!(f.blocks.len(), 3);
        assert!(matches!(f.blocks[2].instrs[0].op, Op::Ret { value: None }));
    }
}
