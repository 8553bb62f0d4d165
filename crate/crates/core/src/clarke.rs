//! Clarke subgradient oracle for targets built from smooth primitives and
//! finite max / absolute-value nodes.
//!
//! The generic rule propagates every selection of active pieces through the
//! chain rule and returns the resulting gradients as generators. Their hull
//! contains `∂F(x)`, but mixed selections in difference-of-max expressions can
//! make it strictly larger, so targets may register an exact set instead.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{BuiltinFamily, Expr, ExprError, LocalDeriv, NodeId, Op, SmoothingFamily};
use crate::hull::{min_norm_point, PointSet, DEFAULT_TOL};

/// Relative band within which pieces of a max node count as active.
pub const ACTIVE_TOL: f64 = 1e-9;
const MAX_GENERATORS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClarkeError {
    #[error("Clarke subgradient undefined: non-Lipschitz point (node {node}, {op})")]
    NonLipschitz { node: NodeId, op: &'static str },
    #[error("too many selection gradients (> {MAX_GENERATORS})")]
    TooManySelections,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

pub type ExactClarke = Arc<dyn Fn(&[f64]) -> Option<Vec<Vec<f64>>> + Send + Sync>;

/// A locally Lipschitz target with an optional registered exact Clarke set.
#[derive(Clone)]
pub struct PiecewiseTarget {
    expr: Expr,
    exact: Option<ExactClarke>,
}

impl fmt::Debug for PiecewiseTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PiecewiseTarget")
            .field("expr", &self.expr)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl PiecewiseTarget {
    pub fn new(expr: Expr) -> Self {
        Self { expr, exact: None }
    }

    /// Registers an exact Clarke set; returning `None` falls back to the
    /// selection rule at that point.
    pub fn with_exact(mut self, exact: ExactClarke) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn from_family(fam: &SmoothingFamily) -> Option<Self> {
        fam.target().cloned().map(Self::new)
    }

    /// Target of a builtin family with the exact sets the generic rule cannot
    /// produce.
    pub fn for_builtin(which: BuiltinFamily) -> Option<Self> {
        let fam = crate::expr::builtin_family(which);
        let t = Self::from_family(&fam)?;
        Some(match which {
            // 2 max(0, t) - max(0, 2t) vanishes identically.
            BuiltinFamily::Chen => t.with_exact(Arc::new(|_| Some(vec![vec![0.0]]))),
            _ => t,
        })
    }
}

/// Generators of a set containing `∂F(x)`.
pub fn clarke_set(target: &PiecewiseTarget, x: &[f64]) -> Result<PointSet, ClarkeError> {
    if let Some(exact) = &target.exact {
        if let Some(g) = exact(x) {
            return Ok(PointSet::new(g).expect("registered Clarke set is well-formed"));
        }
    }
    let expr = &target.expr;
    if x.len() != expr.dimension() {
        return Err(ExprError::DimensionMismatch {
            expected: expr.dimension(),
            got: x.len(),
        }
        .into());
    }
    let mut memo = HashMap::new();
    let (_, gens) = selections(expr, expr.root(), x, &mut memo)?;
    Ok(PointSet::new(gens).expect("selection gradients are finite"))
}

/// Euclidean distance from `v` to the hull of `gens`.
pub fn distance_to_hull(v: &[f64], gens: &PointSet) -> f64 {
    let shifted: Vec<Vec<f64>> = gens
        .points()
        .iter()
        .map(|g| g.iter().zip(v).map(|(gi, vi)| gi - vi).collect())
        .collect();
    min_norm_point(&PointSet::new(shifted).expect("same dimension"), DEFAULT_TOL).distance
}

type Gens = Vec<Vec<f64>>;

fn dedup(mut gens: Gens) -> Result<Gens, ClarkeError> {
    let mut out: Gens = Vec::with_capacity(gens.len());
    for g in gens.drain(..) {
        let dup = out
            .iter()
            .any(|h| h.iter().zip(&g).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs())));
        if !dup {
            out.push(g);
        }
    }
    if out.len() > MAX_GENERATORS {
        return Err(ClarkeError::TooManySelections);
    }
    Ok(out)
}

fn combine2(l: &Gens, r: &Gens, f: impl Fn(&[f64], &[f64]) -> Vec<f64>) -> Result<Gens, ClarkeError> {
    let mut out = Vec::with_capacity(l.len() * r.len());
    for gl in l {
        for gr in r {
            out.push(f(gl, gr));
        }
    }
    dedup(out)
}

fn lin(al: f64, gl: &[f64], ar: f64, gr: &[f64]) -> Vec<f64> {
    gl.iter().zip(gr).map(|(l, r)| al * l + ar * r).collect()
}

fn selections(
    expr: &Expr,
    id: NodeId,
    x: &[f64],
    memo: &mut HashMap<NodeId, (f64, Gens)>,
) -> Result<(f64, Gens), ClarkeError> {
    if let Some(hit) = memo.get(&id) {
        return Ok(hit.clone());
    }
    let d = expr.dimension();
    let node = &expr.nodes()[id];
    let zero = || vec![vec![0.0; d]];
    let out = match &node.op {
        Op::Const(v) => (*v, zero()),
        Op::Param => {
            return Err(ExprError::Invalid("Clarke oracle needs a parameter-free target".into()).into())
        }
        Op::Var(i) => {
            let mut e = vec![0.0; d];
            e[*i] = 1.0;
            (x[*i], vec![e])
        }
        Op::Branch => {
            let (c, _) = selections(expr, node.args[0], x, memo)?;
            if c.abs() <= ACTIVE_TOL {
                // Both sides meet at the switching surface.
                let mut vals = Vec::new();
                let mut gens = Vec::new();
                let mut last_err = None;
                for &side in &node.args[1..] {
                    match selections(expr, side, x, memo) {
                        Ok((v, g)) => {
                            vals.push(v);
                            gens.extend(g);
                        }
                        Err(e) => last_err = Some(e),
                    }
                }
                match (vals.first(), last_err) {
                    (Some(&v), _) => (v, dedup(gens)?),
                    (None, Some(e)) => return Err(e),
                    (None, None) => unreachable!("branch has two sides"),
                }
            } else {
                let side = if c > 0.0 { node.args[1] } else { node.args[2] };
                selections(expr, side, x, memo)?
            }
        }
        Op::Add | Op::Sub | Op::Mul | Op::Div => {
            let (l, gl) = selections(expr, node.args[0], x, memo)?;
            let (r, gr) = selections(expr, node.args[1], x, memo)?;
            let v = expr.apply_op(id, &node.op, [l, r], &[], x, 1.0)?;
            let gens = match node.op {
                Op::Add => combine2(&gl, &gr, |a, b| lin(1.0, a, 1.0, b))?,
                Op::Sub => combine2(&gl, &gr, |a, b| lin(1.0, a, -1.0, b))?,
                Op::Mul => combine2(&gl, &gr, |a, b| lin(r, a, l, b))?,
                _ => combine2(&gl, &gr, |a, b| lin(1.0 / r, a, -l / (r * r), b))?,
            };
            (v, gens)
        }
        Op::Dot(w) => {
            let mut v = 0.0;
            let mut acc: Gens = zero();
            for (wi, &c) in w.iter().zip(&node.args) {
                let (cv, cg) = selections(expr, c, x, memo)?;
                v += wi * cv;
                acc = combine2(&acc, &cg, |a, b| lin(1.0, a, *wi, b))?;
            }
            (v, acc)
        }
        _ => {
            let (t, g) = selections(expr, node.args[0], x, memo)?;
            let v = expr.apply_op(id, &node.op, [t, 0.0], &[], x, 1.0)?;
            let slopes = match expr.unary_deriv(id, t, 1.0, ACTIVE_TOL)? {
                LocalDeriv::Smooth(s) => vec![s],
                LocalDeriv::Kink(s) => s,
                LocalDeriv::Singular => {
                    return Err(ClarkeError::NonLipschitz {
                        node: id,
                        op: node.op.name(),
                    })
                }
            };
            let mut gens = Vec::with_capacity(slopes.len() * g.len());
            for s in &slopes {
                for gi in &g {
                    gens.push(gi.iter().map(|v| s * v).collect());
                }
            }
            (v, dedup(gens)?)
        }
    };
    memo.insert(id, out.clone());
    Ok(out)
}
