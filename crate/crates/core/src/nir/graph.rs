use std::collections::HashMap;

use super::{InstrId, Op, Program, Type};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// fadd / fsub / fmul / fdiv
    Arith,
    /// Intrinsic call.
    Call,
    Load,
    Const,
    Phi,
    /// fpext / fptrunc
    Cast,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: InstrId,
    pub kind: NodeKind,
    pub label: String,
}

/// Static data-flow graph over float-valued instructions. Memory is not
/// modelled: loads are sources and stores are not nodes at all.
#[derive(Debug, Clone, Default)]
pub struct DefUseGraph {
    pub nodes: Vec<Node>,
    /// `succs[a]` holds every node that reads the value defined by `a`.
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    index: HashMap<InstrId, usize>,
}

impl DefUseGraph {
    pub fn node_index(&self, id: &InstrId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn node(&self, id: &InstrId) -> Option<&Node> {
        self.node_index(id).map(|i| &self.nodes[i])
    }

    pub fn edge_count(&self) -> usize {
        self.succs.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&InstrId, &InstrId)> {
        self.succs
            .iter()
            .enumerate()
            .flat_map(move |(a, bs)| bs.iter().map(move |&b| (&self.nodes[a].id, &self.nodes[b].id)))
    }

    pub fn has_edge(&self, from: &InstrId, to: &InstrId) -> bool {
        match (self.node_index(from), self.node_index(to)) {
            (Some(a), Some(b)) => self.succs[a].contains(&b),
            _ => false,
        }
    }
}

fn node_kind(op: &Op) -> Option<NodeKind> {
    Some(match op {
        Op::FBin { .. } => NodeKind::Arith,
        Op::FCall { .. } => NodeKind::Call,
        Op::Load { .. } => NodeKind::Load,
        Op::FConst { .. } => NodeKind::Const,
        Op::Phi { ty: Type::Float(_), .. } => NodeKind::Phi,
        Op::FpExt { .. } | Op::FpTrunc { .. } => NodeKind::Cast,
        _ => return None,
    })
}

/// Builds the def-use graph of every function in `p`.
pub fn def_use_graph(p: &Program) -> DefUseGraph {
    let mut g = DefUseGraph::default();
    for f in &p.functions {
        let mut local: HashMap<&str, usize> = HashMap::new();
        for (_, _, ins) in f.instrs() {
            if let (Some(d), Some(kind)) = (&ins.dest, node_kind(&ins.op)) {
                let id = InstrId::new(&f.name, d);
                let ix = g.nodes.len();
                g.index.insert(id.clone(), ix);
                local.insert(d, ix);
                g.nodes.push(Node { id, kind, label: ins.op.label() });
            }
        }
        g.succs.resize(g.nodes.len(), Vec::new());
        g.preds.resize(g.nodes.len(), Vec::new());
        for (_, _, ins) in f.instrs() {
            let Some(&b) = ins.dest.as_deref().and_then(|d| local.get(d)) else { continue };
            for o in ins.op.operands() {
                if let Some(&a) = o.as_reg().and_then(|r| local.get(r)) {
                    if !g.succs[a].contains(&b) {
                        g.succs[a].push(b);
                        g.preds[b].push(a);
                    }
                }
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::super::parse_text;
    use super::*;

    #[test]
    fn mul_sub_edges() {
        let p = parse_text(
            "func @f(%A: arr<f32, 2>) -> f32 { entry:
               %r1 = load f32 %A, 0
               %r2 = load f32 %A, 1
               %r3 = fmul f32 %r1, %r2
               %r4 = fsub f32 %r1, %r3
               ret %r4 }",
        )
        .unwrap();
        let g = def_use_graph(&p);
        let id = |d: &str| InstrId::new("f", d);
        assert_eq!(g.nodes.len(), 4);
        assert_eq!(g.edge_count(), 4);
        assert!(g.has_edge(&id("r1"), &id("r3")));
        assert!(g.has_edge(&id("r2"), &id("r3")));
        assert!(g.has_edge(&id("r1"), &id("r4")));
        assert!(g.has_edge(&id("r3"), &id("r4")));
        assert_eq!(g.node(&id("r1")).unwrap().kind, NodeKind::Load);
    }

    #[test]
    fn single_instruction_function() {
        let p = parse_text("func @f() -> f32 { entry: %c = fconst f32 1.0 ret %c }").unwrap();
        let g = def_use_graph(&p);
        assert_eq!((g.nodes.len(), g.edge_count()), (1, 0));
    }
}
