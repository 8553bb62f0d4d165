//! JSON schema for families: `{dimension, a_max, graph, target?}` with
//! `graph` as nested `{"op": ..., "args": [...]}` objects.

use serde::{Deserialize, Serialize};

use super::{Expr, ExprBuilder, ExprError, NodeId, Op, Rational, ScalarMap, SmoothingFamily};
use crate::kernels::{MaxFunction, SmoothScalarKernel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum NodeSpec {
    Const { value: f64 },
    Var { index: usize },
    Param,
    Add { args: Vec<NodeSpec> },
    Sub { args: Vec<NodeSpec> },
    Mul { args: Vec<NodeSpec> },
    Div { args: Vec<NodeSpec> },
    Neg { args: Vec<NodeSpec> },
    Dot { weights: Vec<f64>, args: Vec<NodeSpec> },
    Sin { args: Vec<NodeSpec> },
    Cos { args: Vec<NodeSpec> },
    Exp { args: Vec<NodeSpec> },
    Log { args: Vec<NodeSpec> },
    Sqrt { args: Vec<NodeSpec> },
    PowRational { q: Rational, args: Vec<NodeSpec> },
    AbsPow { q: Rational, args: Vec<NodeSpec> },
    Kernel { kernel: SmoothScalarKernel, args: Vec<NodeSpec> },
    MaxExact { pieces: MaxFunction, args: Vec<NodeSpec> },
    Apply { map: ScalarMap, args: Vec<NodeSpec> },
    Branch { args: Vec<NodeSpec> },
}

impl NodeSpec {
    fn split(&self) -> (Op, &[NodeSpec]) {
        use NodeSpec::*;
        match self {
            Const { value } => (Op::Const(*value), &[]),
            Var { index } => (Op::Var(*index), &[]),
            Param => (Op::Param, &[]),
            Add { args } => (Op::Add, args),
            Sub { args } => (Op::Sub, args),
            Mul { args } => (Op::Mul, args),
            Div { args } => (Op::Div, args),
            Neg { args } => (Op::Neg, args),
            Dot { weights, args } => (Op::Dot(weights.clone()), args),
            Sin { args } => (Op::Sin, args),
            Cos { args } => (Op::Cos, args),
            Exp { args } => (Op::Exp, args),
            Log { args } => (Op::Log, args),
            Sqrt { args } => (Op::Sqrt, args),
            PowRational { q, args } => (Op::PowRational(*q), args),
            AbsPow { q, args } => (Op::AbsPow(*q), args),
            Kernel { kernel, args } => (Op::Kernel(kernel.clone()), args),
            MaxExact { pieces, args } => (Op::MaxExact(pieces.clone()), args),
            Apply { map, args } => (Op::Apply(*map), args),
            Branch { args } => (Op::Branch, args),
        }
    }

    fn join(op: &Op, args: Vec<NodeSpec>) -> NodeSpec {
        use NodeSpec::*;
        match op {
            Op::Const(v) => Const { value: *v },
            Op::Var(i) => Var { index: *i },
            Op::Param => Param,
            Op::Add => Add { args },
            Op::Sub => Sub { args },
            Op::Mul => Mul { args },
            Op::Div => Div { args },
            Op::Neg => Neg { args },
            Op::Dot(w) => Dot {
                weights: w.clone(),
                args,
            },
            Op::Sin => Sin { args },
            Op::Cos => Cos { args },
            Op::Exp => Exp { args },
            Op::Log => Log { args },
            Op::Sqrt => Sqrt { args },
            Op::PowRational(q) => PowRational { q: *q, args },
            Op::AbsPow(q) => AbsPow { q: *q, args },
            Op::Kernel(k) => Kernel {
                kernel: k.clone(),
                args,
            },
            Op::MaxExact(p) => MaxExact {
                pieces: p.clone(),
                args,
            },
            Op::Apply(m) => Apply { map: *m, args },
            Op::Branch => Branch { args },
        }
    }

    fn push_into(&self, b: &mut ExprBuilder) -> NodeId {
        let (op, args) = self.split();
        let ids = args.iter().map(|c| c.push_into(b)).collect();
        b.push(op, ids)
    }

    pub fn to_expr(&self, dimension: usize) -> Result<Expr, ExprError> {
        let mut b = ExprBuilder::new(dimension);
        let root = self.push_into(&mut b);
        b.build(root)
    }

    pub fn from_expr(e: &Expr) -> NodeSpec {
        fn rec(e: &Expr, id: NodeId) -> NodeSpec {
            let node = &e.nodes()[id];
            let args = node.args.iter().map(|&c| rec(e, c)).collect();
            NodeSpec::join(&node.op, args)
        }
        rec(e, e.root())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dimension: usize,
    pub a_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform_lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub oscillatory: bool,
    pub graph: NodeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<NodeSpec>,
}

impl FamilySpec {
    pub fn into_family(self) -> Result<SmoothingFamily, ExprError> {
        let graph = self.graph.to_expr(self.dimension)?;
        let mut fam = SmoothingFamily::new(graph, self.a_max)?.with_oscillatory(self.oscillatory);
        if let Some(name) = self.name {
            fam = fam.with_name(name);
        }
        if let Some(l) = self.uniform_lipschitz {
            fam = fam.with_uniform_lipschitz(l);
        }
        if let Some(t) = self.target {
            fam = fam.with_target(t.to_expr(self.dimension)?)?;
        }
        Ok(fam)
    }

    pub fn from_family(fam: &SmoothingFamily) -> Self {
        Self {
            name: fam.name().map(str::to_owned),
            dimension: fam.dimension(),
            a_max: fam.a_max(),
            uniform_lipschitz: fam.uniform_lipschitz(),
            oscillatory: fam.is_oscillatory(),
            graph: NodeSpec::from_expr(fam.graph()),
            target: fam.target().map(NodeSpec::from_expr),
        }
    }
}
