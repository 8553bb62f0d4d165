//! Expression graphs for smoothing families `f(x, a)` with reverse-mode
//! gradients in `x`.
//!
//! Graphs live in an arena where every node only references nodes with a
//! smaller id, so the arena order is a topological order. Evaluation is lazy
//! through [`Op::Branch`] so the untaken side is never evaluated (it may be
//! outside its domain).

mod builtin;
mod spec;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{KernelError, MaxFunction, SmoothScalarKernel};

pub use builtin::{builtin_family, BuiltinFamily};
pub use spec::{FamilySpec, NodeSpec};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("evaluation error at node {node} ({op}): {detail}")]
    Domain {
        node: NodeId,
        op: &'static str,
        detail: String,
    },
    #[error("kink evaluation at node {node} ({op})")]
    Kink { node: NodeId, op: &'static str },
    #[error("parameter a = {a} outside (0, {a_max}]")]
    InvalidParameter { a: f64, a_max: f64 },
    #[error("point has dimension {got}, family expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid expression: {0}")]
    Invalid(String),
    #[error("family parse error: {0}")]
    Parse(String),
    #[error("unknown builtin family `{0}`")]
    UnknownBuiltin(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Rational exponent `num / den` with `den > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[i64; 2]", into = "[i64; 2]")]
pub struct Rational {
    num: i64,
    den: i64,
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Result<Self, ExprError> {
        if den <= 0 {
            return Err(ExprError::Invalid(format!("rational {num}/{den} needs a positive denominator")));
        }
        Ok(Self { num, den })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_integer(&self) -> bool {
        self.num % self.den == 0
    }
}

impl TryFrom<[i64; 2]> for Rational {
    type Error = ExprError;
    fn try_from(v: [i64; 2]) -> Result<Self, Self::Error> {
        Rational::new(v[0], v[1])
    }
}

impl From<Rational> for [i64; 2] {
    fn from(q: Rational) -> Self {
        [q.num, q.den]
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Smooth outer maps available through [`Op::Apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarMap {
    Square,
    Cube,
    Tanh,
    Atan,
}

impl ScalarMap {
    fn eval(self, t: f64) -> (f64, f64) {
        match self {
            ScalarMap::Square => (t * t, 2.0 * t),
            ScalarMap::Cube => (t * t * t, 3.0 * t * t),
            ScalarMap::Tanh => {
                let v = t.tanh();
                (v, 1.0 - v * v)
            }
            ScalarMap::Atan => (t.atan(), 1.0 / (1.0 + t * t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Const(f64),
    Var(usize),
    Param,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    /// `Σ weights[i] * args[i]`.
    Dot(Vec<f64>),
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    /// `t^q`; non-integer `q` needs `t >= 0`.
    PowRational(Rational),
    /// `|t|^q`, nonsmooth at 0 unless `q > 1`.
    AbsPow(Rational),
    Kernel(SmoothScalarKernel),
    /// Unsmoothed max-function; differentiating on a breakpoint is an error.
    MaxExact(MaxFunction),
    Apply(ScalarMap),
    /// `args[1]` if `args[0] > 0`, else `args[2]`.
    Branch,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Const(_) => "const",
            Op::Var(_) => "var",
            Op::Param => "param",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Dot(_) => "dot",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sqrt => "sqrt",
            Op::PowRational(_) => "pow_rational",
            Op::AbsPow(_) => "abs_pow",
            Op::Kernel(_) => "kernel",
            Op::MaxExact(_) => "max_exact",
            Op::Apply(_) => "apply",
            Op::Branch => "branch",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Op::Const(_) | Op::Var(_) | Op::Param => Some(0),
            Op::Add | Op::Sub | Op::Mul | Op::Div => Some(2),
            Op::Branch => Some(3),
            Op::Dot(w) => Some(w.len()),
            _ => Some(1),
        }
    }

    fn is_nonsmooth(&self) -> bool {
        matches!(self, Op::MaxExact(_) | Op::AbsPow(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub op: Op,
    pub args: Vec<NodeId>,
}

/// Derivative of a unary node at a point.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LocalDeriv {
    Smooth(f64),
    /// Several one-sided derivatives meet here.
    Kink(Vec<f64>),
    /// Unbounded derivative (non-Lipschitz point).
    Singular,
}

/// An expression graph over `x ∈ ℝ^dimension` and the smoothing parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    nodes: Vec<Node>,
    root: NodeId,
    dimension: usize,
}

pub struct ExprBuilder {
    nodes: Vec<Node>,
    dimension: usize,
}

impl ExprBuilder {
    pub fn new(dimension: usize) -> Self {
        Self {
            nodes: Vec::new(),
            dimension,
        }
    }

    pub fn push(&mut self, op: Op, args: Vec<NodeId>) -> NodeId {
        self.nodes.push(Node { op, args });
        self.nodes.len() - 1
    }

    pub fn constant(&mut self, v: f64) -> NodeId {
        self.push(Op::Const(v), vec![])
    }
    pub fn var(&mut self, i: usize) -> NodeId {
        self.push(Op::Var(i), vec![])
    }
    pub fn param(&mut self) -> NodeId {
        self.push(Op::Param, vec![])
    }
    pub fn add(&mut self, l: NodeId, r: NodeId) -> NodeId {
        self.push(Op::Add, vec![l, r])
    }
    pub fn sub(&mut self, l: NodeId, r: NodeId) -> NodeId {
        self.push(Op::Sub, vec![l, r])
    }
    pub fn mul(&mut self, l: NodeId, r: NodeId) -> NodeId {
        self.push(Op::Mul, vec![l, r])
    }
    pub fn div(&mut self, l: NodeId, r: NodeId) -> NodeId {
        self.push(Op::Div, vec![l, r])
    }
    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Neg, vec![x])
    }
    pub fn dot(&mut self, weights: Vec<f64>, args: Vec<NodeId>) -> NodeId {
        self.push(Op::Dot(weights), args)
    }
    pub fn sin(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sin, vec![x])
    }
    pub fn cos(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Cos, vec![x])
    }
    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Exp, vec![x])
    }
    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Log, vec![x])
    }
    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sqrt, vec![x])
    }
    pub fn pow(&mut self, q: Rational, x: NodeId) -> NodeId {
        self.push(Op::PowRational(q), vec![x])
    }
    pub fn abs_pow(&mut self, q: Rational, x: NodeId) -> NodeId {
        self.push(Op::AbsPow(q), vec![x])
    }
    pub fn kernel(&mut self, k: SmoothScalarKernel, x: NodeId) -> NodeId {
        self.push(Op::Kernel(k), vec![x])
    }
    pub fn max_exact(&mut self, p: MaxFunction, x: NodeId) -> NodeId {
        self.push(Op::MaxExact(p), vec![x])
    }
    pub fn apply(&mut self, map: ScalarMap, x: NodeId) -> NodeId {
        self.push(Op::Apply(map), vec![x])
    }
    pub fn branch(&mut self, cond: NodeId, then: NodeId, otherwise: NodeId) -> NodeId {
        self.push(Op::Branch, vec![cond, then, otherwise])
    }

    pub fn build(self, root: NodeId) -> Result<Expr, ExprError> {
        Expr::from_parts(self.nodes, root, self.dimension)
    }
}

impl Expr {
    pub fn from_parts(nodes: Vec<Node>, root: NodeId, dimension: usize) -> Result<Self, ExprError> {
        if dimension == 0 {
            return Err(ExprError::Invalid("dimension must be positive".into()));
        }
        if root >= nodes.len() {
            return Err(ExprError::Invalid(format!("root {root} out of range")));
        }
        for (id, node) in nodes.iter().enumerate() {
            if node.op.arity() != Some(node.args.len()) {
                return Err(ExprError::Invalid(format!(
                    "node {id} ({}) has {} arguments",
                    node.op.name(),
                    node.args.len()
                )));
            }
            if let Some(&c) = node.args.iter().find(|&&c| c >= id) {
                return Err(ExprError::Invalid(format!("node {id} references node {c} (not acyclic)")));
            }
            match &node.op {
                Op::Var(i) if *i >= dimension => {
                    return Err(ExprError::Invalid(format!(
                        "node {id}: variable index {i} >= dimension {dimension}"
                    )))
                }
                Op::Const(v) if !v.is_finite() => {
                    return Err(ExprError::Invalid(format!("node {id}: non-finite constant")))
                }
                Op::Dot(w) if w.iter().any(|v| !v.is_finite()) => {
                    return Err(ExprError::Invalid(format!("node {id}: non-finite weight")))
                }
                _ => {}
            }
        }
        Ok(Self {
            nodes,
            root,
            dimension,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// True when any node reads the smoothing parameter (directly or through a
    /// kernel).
    pub fn uses_param(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n.op, Op::Param | Op::Kernel(_)))
    }

    pub fn has_nonsmooth_nodes(&self) -> bool {
        self.nodes.iter().any(|n| n.op.is_nonsmooth())
    }

    fn check_point(&self, x: &[f64]) -> Result<(), ExprError> {
        if x.len() != self.dimension {
            return Err(ExprError::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass. Entries are `None` for nodes that were not needed.
    pub(crate) fn forward(&self, x: &[f64], a: f64) -> Result<Vec<Option<f64>>, ExprError> {
        self.check_point(x)?;
        let mut vals = vec![None; self.nodes.len()];
        self.eval_node(self.root, x, a, &mut vals)?;
        Ok(vals)
    }

    fn eval_node(
        &self,
        id: NodeId,
        x: &[f64],
        a: f64,
        vals: &mut Vec<Option<f64>>,
    ) -> Result<f64, ExprError> {
        if let Some(v) = vals[id] {
            return Ok(v);
        }
        let node = &self.nodes[id];
        let v = match &node.op {
            Op::Branch => {
                let c = self.eval_node(node.args[0], x, a, vals)?;
                let taken = if c > 0.0 { node.args[1] } else { node.args[2] };
                self.eval_node(taken, x, a, vals)?
            }
            _ => {
                let mut args = [0.0f64; 2];
                let mut many = Vec::new();
                for (k, &c) in node.args.iter().enumerate() {
                    let cv = self.eval_node(c, x, a, vals)?;
                    if k < 2 {
                        args[k] = cv;
                    }
                    if matches!(node.op, Op::Dot(_)) {
                        many.push(cv);
                    }
                }
                self.apply_op(id, &node.op, args, &many, x, a)?
            }
        };
        if !v.is_finite() {
            return Err(domain(id, &node.op, format!("non-finite value {v}")));
        }
        vals[id] = Some(v);
        Ok(v)
    }

    pub(crate) fn apply_op(
        &self,
        id: NodeId,
        op: &Op,
        args: [f64; 2],
        many: &[f64],
        x: &[f64],
        a: f64,
    ) -> Result<f64, ExprError> {
        let [l, r] = args;
        let t = l;
        Ok(match op {
            Op::Const(c) => *c,
            Op::Var(i) => x[*i],
            Op::Param => a,
            Op::Add => l + r,
            Op::Sub => l - r,
            Op::Mul => l * r,
            Op::Div => {
                if r == 0.0 {
                    return Err(domain(id, op, "division by zero".into()));
                }
                l / r
            }
            Op::Neg => -t,
            Op::Dot(w) => w.iter().zip(many).map(|(w, v)| w * v).sum(),
            Op::Sin => t.sin(),
            Op::Cos => t.cos(),
            Op::Exp => t.exp(),
            Op::Log => {
                if t <= 0.0 {
                    return Err(domain(id, op, format!("log of {t}")));
                }
                t.ln()
            }
            Op::Sqrt => {
                if t < 0.0 {
                    return Err(domain(id, op, format!("sqrt of {t}")));
                }
                t.sqrt()
            }
            Op::PowRational(q) => pow_value(id, op, *q, t)?,
            Op::AbsPow(q) => t.abs().powf(q.value()),
            Op::Kernel(k) => k.eval(t, a).map_err(|e| domain(id, op, e.to_string()))?.0,
            Op::MaxExact(p) => p.eval(t),
            Op::Apply(m) => m.eval(t).0,
            Op::Branch => unreachable!("handled lazily"),
        })
    }

    /// Derivative of the unary node `id` at input `t`. With `tol == 0` a kink
    /// is only reported exactly on the nonsmooth set.
    pub(crate) fn unary_deriv(&self, id: NodeId, t: f64, a: f64, tol: f64) -> Result<LocalDeriv, ExprError> {
        let op = &self.nodes[id].op;
        use LocalDeriv::*;
        Ok(match op {
            Op::Neg => Smooth(-1.0),
            Op::Sin => Smooth(t.cos()),
            Op::Cos => Smooth(-t.sin()),
            Op::Exp => Smooth(t.exp()),
            Op::Log => Smooth(1.0 / t),
            Op::Sqrt => {
                if t <= tol {
                    Singular
                } else {
                    Smooth(0.5 / t.sqrt())
                }
            }
            Op::PowRational(q) => {
                let e = q.value();
                if q.is_integer() {
                    Smooth(e * t.powi(q.num as i32 / q.den as i32 - 1))
                } else if t.abs() <= tol || t == 0.0 {
                    if e > 1.0 {
                        Smooth(0.0)
                    } else if e == 1.0 {
                        Smooth(1.0)
                    } else {
                        Singular
                    }
                } else {
                    Smooth(e * t.powf(e - 1.0))
                }
            }
            Op::AbsPow(q) => {
                let e = q.value();
                if t.abs() <= tol || t == 0.0 {
                    if e > 1.0 {
                        Smooth(0.0)
                    } else if e == 1.0 {
                        Kink(vec![-1.0, 1.0])
                    } else {
                        Singular
                    }
                } else {
                    Smooth(e * t.abs().powf(e - 1.0) * t.signum())
                }
            }
            Op::Kernel(k) => Smooth(k.eval(t, a).map_err(|e| domain(id, op, e.to_string()))?.1),
            Op::MaxExact(p) => {
                if tol == 0.0 {
                    match p.slope_at(t) {
                        Some(s) => Smooth(s),
                        None => Kink(p.active_slopes(t, 1e-12)),
                    }
                } else {
                    let s = p.active_slopes(t, tol);
                    if s.len() == 1 {
                        Smooth(s[0])
                    } else {
                        Kink(s)
                    }
                }
            }
            Op::Apply(m) => Smooth(m.eval(t).1),
            other => unreachable!("{} is not unary", other.name()),
        })
    }

    /// Value at `(x, a)`.
    pub fn eval(&self, x: &[f64], a: f64) -> Result<f64, ExprError> {
        let vals = self.forward(x, a)?;
        Ok(vals[self.root].expect("root evaluated"))
    }

    /// Value and gradient in `x` at `(x, a)` by a single backward sweep.
    pub fn value_and_grad(&self, x: &[f64], a: f64) -> Result<(f64, Vec<f64>), ExprError> {
        let vals = self.forward(x, a)?;
        let val = |id: NodeId| vals[id].expect("child evaluated");
        let mut adj = vec![0.0f64; self.nodes.len()];
        let mut grad = vec![0.0f64; self.dimension];
        adj[self.root] = 1.0;
        for id in (0..=self.root).rev() {
            let g = adj[id];
            if g == 0.0 || vals[id].is_none() {
                continue;
            }
            let node = &self.nodes[id];
            let args = &node.args;
            match &node.op {
                Op::Const(_) | Op::Param => {}
                Op::Var(i) => grad[*i] += g,
                Op::Add => {
                    adj[args[0]] += g;
                    adj[args[1]] += g;
                }
                Op::Sub => {
                    adj[args[0]] += g;
                    adj[args[1]] -= g;
                }
                Op::Mul => {
                    adj[args[0]] += g * val(args[1]);
                    adj[args[1]] += g * val(args[0]);
                }
                Op::Div => {
                    let (l, r) = (val(args[0]), val(args[1]));
                    adj[args[0]] += g / r;
                    adj[args[1]] -= g * l / (r * r);
                }
                Op::Dot(w) => {
                    for (wi, &c) in w.iter().zip(args) {
                        adj[c] += g * wi;
                    }
                }
                Op::Branch => {
                    let taken = if val(args[0]) > 0.0 { args[1] } else { args[2] };
                    adj[taken] += g;
                }
                _ => match self.unary_deriv(id, val(args[0]), a, 0.0)? {
                    LocalDeriv::Smooth(d) => adj[args[0]] += g * d,
                    LocalDeriv::Kink(_) | LocalDeriv::Singular => {
                        return Err(ExprError::Kink {
                            node: id,
                            op: node.op.name(),
                        })
                    }
                },
            }
        }
        Ok((val(self.root), grad))
    }

    pub fn grad(&self, x: &[f64], a: f64) -> Result<Vec<f64>, ExprError> {
        self.value_and_grad(x, a).map(|(_, g)| g)
    }
}

fn domain(node: NodeId, op: &Op, detail: String) -> ExprError {
    ExprError::Domain {
        node,
        op: op.name(),
        detail,
    }
}

fn pow_value(id: NodeId, op: &Op, q: Rational, t: f64) -> Result<f64, ExprError> {
    if q.is_integer() {
        let n = q.num / q.den;
        if n < 0 && t == 0.0 {
            return Err(domain(id, op, "negative power of zero".into()));
        }
        return Ok(t.powi(n as i32));
    }
    if t < 0.0 || (t == 0.0 && q.value() < 0.0) {
        return Err(domain(id, op, format!("{t}^({q})")));
    }
    Ok(t.powf(q.value()))
}

/// A smoothing family `(x, a) ↦ f_a(x)` on `ℝ^d × (0, a_max]`, optionally with
/// the nonsmooth target `F` it approximates.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingFamily {
    name: Option<String>,
    graph: Expr,
    a_max: f64,
    uniform_lipschitz: Option<f64>,
    target: Option<Expr>,
    oscillatory: bool,
}

impl SmoothingFamily {
    pub fn new(graph: Expr, a_max: f64) -> Result<Self, ExprError> {
        if !(a_max > 0.0 && a_max.is_finite()) {
            return Err(ExprError::Invalid(format!("a_max must be positive, got {a_max}")));
        }
        Ok(Self {
            name: None,
            graph,
            a_max,
            uniform_lipschitz: None,
            target: None,
            oscillatory: false,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Attaches the target `F`. It must not read the smoothing parameter.
    pub fn with_target(mut self, target: Expr) -> Result<Self, ExprError> {
        if target.dimension() != self.graph.dimension() {
            return Err(ExprError::Invalid("target dimension differs from family".into()));
        }
        if target.uses_param() {
            return Err(ExprError::Invalid("target must not depend on the smoothing parameter".into()));
        }
        self.target = Some(target);
        Ok(self)
    }

    pub fn with_uniform_lipschitz(mut self, bound: f64) -> Self {
        self.uniform_lipschitz = Some(bound);
        self
    }

    /// Marks a family whose gradients oscillate without limit as `a → 0`.
    pub fn with_oscillatory(mut self, yes: bool) -> Self {
        self.oscillatory = yes;
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }
    pub fn graph(&self) -> &Expr {
        &self.graph
    }
    pub fn dimension(&self) -> usize {
        self.graph.dimension()
    }
    pub fn a_max(&self) -> f64 {
        self.a_max
    }
    pub fn uniform_lipschitz(&self) -> Option<f64> {
        self.uniform_lipschitz
    }
    pub fn target(&self) -> Option<&Expr> {
        self.target.as_ref()
    }
    pub fn is_oscillatory(&self) -> bool {
        self.oscillatory
    }

    fn check_param(&self, a: f64) -> Result<(), ExprError> {
        if a > 0.0 && a <= self.a_max {
            Ok(())
        } else {
            Err(ExprError::InvalidParameter { a, a_max: self.a_max })
        }
    }

    pub fn eval(&self, x: &[f64], a: f64) -> Result<f64, ExprError> {
        self.check_param(a)?;
        self.graph.eval(x, a)
    }

    pub fn grad(&self, x: &[f64], a: f64) -> Result<Vec<f64>, ExprError> {
        self.check_param(a)?;
        self.graph.grad(x, a)
    }

    pub fn value_and_grad(&self, x: &[f64], a: f64) -> Result<(f64, Vec<f64>), ExprError> {
        self.check_param(a)?;
        self.graph.value_and_grad(x, a)
    }

    /// `F(x)`, when a target is attached.
    pub fn target_value(&self, x: &[f64]) -> Option<Result<f64, ExprError>> {
        // The target never reads `a`; any positive value will do.
        self.target.as_ref().map(|t| t.eval(x, 1.0))
    }

    pub fn from_json(s: &str) -> Result<Self, ExprError> {
        let spec: FamilySpec = serde_json::from_str(s).map_err(|e| ExprError::Parse(e.to_string()))?;
        spec.into_family()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FamilySpec::from_family(self)).expect("family spec serializes")
    }
}

/// Free-function form of [`SmoothingFamily::eval`].
pub fn eval(fam: &SmoothingFamily, x: &[f64], a: f64) -> Result<f64, ExprError> {
    fam.eval(x, a)
}

/// Free-function form of [`SmoothingFamily::grad`].
pub fn grad(fam: &SmoothingFamily, x: &[f64], a: f64) -> Result<Vec<f64>, ExprError> {
    fam.grad(x, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn huber_abs_plus_square() -> SmoothingFamily {
        let mut b = ExprBuilder::new(2);
        let x1 = b.var(0);
        let x2 = b.var(1);
        let h = b.kernel(SmoothScalarKernel::HuberAbs, x1);
        let sq = b.apply(ScalarMap::Square, x2);
        let root = b.add(h, sq);
        SmoothingFamily::new(b.build(root).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn oscillating_sin_values() {
        let fam = builtin_family(BuiltinFamily::OscillatingSin);
        assert_eq!(fam.eval(&[0.0], 0.1).unwrap(), 0.0);
        let a = 0.1;
        let g = fam.grad(&[PI * a / 2.0], a).unwrap();
        assert!(g[0].abs() < 1e-15);
    }

    #[test]
    fn huber_abs_value() {
        let fam = builtin_family(BuiltinFamily::AbsHuber);
        assert!((fam.eval(&[0.0], 0.4).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn chen_value_and_gradient() {
        let fam = builtin_family(BuiltinFamily::Chen);
        // sqrt(t² + 4a²) - sqrt(t² + a²) at t = 0, a = 1.
        assert!((fam.eval(&[0.0], 1.0).unwrap() - 1.0).abs() < 1e-15);
        let want = 5f64.powf(-0.5) - 2f64.powf(-0.5);
        for a in [1.0, 0.3, 1e-4, 1e-9] {
            let g = fam.grad(&[a], a).unwrap()[0];
            assert!((g - want).abs() < 1e-14, "a={a}: {g}");
        }
    }

    #[test]
    fn mixed_family_gradient() {
        let fam = huber_abs_plus_square();
        let g = fam.grad(&[0.05, 1.0], 0.4).unwrap();
        assert!((g[0] - 0.125).abs() < 1e-15);
        assert!((g[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn domain_errors_name_the_node() {
        let mut b = ExprBuilder::new(1);
        let x = b.var(0);
        let l = b.log(x);
        let fam = SmoothingFamily::new(b.build(l).unwrap(), 1.0).unwrap();
        let err = fam.eval(&[-1.0], 0.5).unwrap_err();
        assert!(matches!(err, ExprError::Domain { node: 1, op: "log", .. }), "{err}");
    }

    #[test]
    fn parameter_range_enforced() {
        let fam = builtin_family(BuiltinFamily::AbsHuber);
        assert!(matches!(fam.eval(&[0.0], 0.0), Err(ExprError::InvalidParameter { .. })));
        assert!(matches!(fam.eval(&[0.0], 2.0), Err(ExprError::InvalidParameter { .. })));
        assert!(matches!(fam.eval(&[0.0, 1.0], 0.5), Err(ExprError::DimensionMismatch { .. })));
    }

    #[test]
    fn max_exact_kink_is_an_error() {
        let fam = builtin_family(BuiltinFamily::Hat);
        let a = 0.25;
        for x in [a, -a, 0.0] {
            let err = fam.grad(&[x], a).unwrap_err();
            assert!(err.to_string().starts_with("kink evaluation"), "{x}: {err}");
        }
        assert_eq!(fam.grad(&[a / 2.0], a).unwrap(), vec![-1.0]);
        assert_eq!(fam.grad(&[-a / 2.0], a).unwrap(), vec![1.0]);
        assert_eq!(fam.grad(&[2.0 * a], a).unwrap(), vec![0.0]);
    }

    #[test]
    fn branch_skips_untaken_side() {
        let fam = builtin_family(BuiltinFamily::SignSqrt);
        // For x > a the else-side sqrt(a - x) is out of domain.
        let v = fam.eval(&[0.9], 0.1).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let g = fam.grad(&[-0.5], 0.1).unwrap()[0];
        assert!((g - 0.5 / 0.6f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn invalid_graphs_rejected() {
        let mut b = ExprBuilder::new(1);
        let v = b.var(3);
        assert!(b.build(v).is_err());
        let nodes = vec![Node { op: Op::Add, args: vec![0, 0] }];
        assert!(Expr::from_parts(nodes, 0, 1).is_err());
        assert!(Rational::new(1, 0).is_err());
    }

    #[test]
    fn target_must_not_use_param() {
        let mut b = ExprBuilder::new(1);
        let p = b.param();
        let bad = b.build(p).unwrap();
        let fam = builtin_family(BuiltinFamily::AbsHuber);
        assert!(fam.with_target(bad).is_err());
    }
}
