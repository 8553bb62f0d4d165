//! Smoothing method: solve `min f_{a_k}` to `‖∇f_{a_k}‖ ≤ ε_k` while driving
//! `(a_k, ε_k)` to zero, warm-starting each phase at the previous iterate.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprError, SmoothingFamily};
use crate::field::{
    criticality_certificate, estimate_limit_field, norm, CriticalityReport, EstimatorConfig, FieldError,
    LimitFieldEstimate,
};

pub const ARMIJO_C: f64 = 1e-4;
pub const BACKTRACK: f64 = 0.5;
pub const STEP_MIN: f64 = 1e-14;
/// Consecutive failed inner iterations before a phase counts as stalled.
pub const STALL_LIMIT: usize = 50;
pub const DEFAULT_CERT_TOL: f64 = 1e-6;
const DT_MAX: f64 = 10.0;

pub const OSCILLATORY_WARNING: &str = "oscillatory family: certificate vacuous";
pub const EMPTY_WARNING: &str = "empty estimate: no certificate";

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("start point has dimension {got}, family expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("start point is not finite")]
    NonFiniteStart,
    #[error("objective undefined at the start point: {0}")]
    StartEval(ExprError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("empty trace")]
    EmptyTrace,
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub a0: f64,
    pub eps0: f64,
    pub gamma_a: f64,
    pub gamma_eps: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Converged once `a_k ≤ a_min` and `‖∇f_{a_k}(x_k)‖ ≤ eps_min`.
    pub a_min: f64,
    pub eps_min: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            a0: 1.0,
            eps0: 1.0,
            gamma_a: 0.5,
            gamma_eps: 0.5,
            max_outer: 40,
            max_inner: 10_000,
            a_min: 1e-6,
            eps_min: 1e-6,
        }
    }
}

impl Schedule {
    pub fn validate(&self, fam: &SmoothingFamily) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidSchedule(m));
        if !(self.a0 > 0.0 && self.a0 <= fam.a_max()) {
            return bad(format!("a0 = {} outside (0, {}]", self.a0, fam.a_max()));
        }
        for (name, g) in [("gamma_a", self.gamma_a), ("gamma_eps", self.gamma_eps)] {
            if !(g > 0.0 && g < 1.0) {
                return bad(format!("{name} = {g} outside (0, 1)"));
            }
        }
        for (name, v) in [("eps0", self.eps0), ("a_min", self.a_min), ("eps_min", self.eps_min)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite"));
            }
        }
        if self.max_inner == 0 {
            return bad("max_inner must be positive".into());
        }
        Ok(())
    }

    pub fn a(&self, k: usize) -> f64 {
        self.a0 * self.gamma_a.powi(k as i32)
    }

    pub fn eps(&self, k: usize) -> f64 {
        self.eps0 * self.gamma_eps.powi(k as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    #[default]
    DescentArmijo,
    GradientFlowRk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Converged,
    MaxOuterReached,
    InnerStalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub k: usize,
    pub a: f64,
    pub eps: f64,
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub inner_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<OuterRecord>,
    pub status: SolverStatus,
    pub inner: InnerSolver,
    /// Last iterate, including a stalled phase's.
    pub final_x: Vec<f64>,
}

struct PhaseResult {
    x: Vec<f64>,
    value: f64,
    grad_norm: f64,
    iters: usize,
    reached: bool,
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + t * di).collect()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn armijo_phase(fam: &SmoothingFamily, x0: Vec<f64>, a: f64, eps: f64, max_inner: usize) -> Result<PhaseResult, SolverError> {
    let (mut f, mut g) = fam.value_and_grad(&x0, a)?;
    let mut x = x0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut fails = 0;
    let mut iters = 0;
    while iters < max_inner {
        let gn = norm(&g);
        if gn <= eps {
            return Ok(PhaseResult { x, value: f, grad_norm: gn, iters, reached: true });
        }
        iters += 1;
        let mut step = match &prev {
            Some((s, y)) => {
                let sy = dot(s, y);
                let bb = dot(s, s) / sy;
                if sy > 0.0 && bb.is_finite() {
                    bb
                } else {
                    1.0 / gn.max(1.0)
                }
            }
            None => 1.0 / gn.max(1.0),
        };
        let mut accepted = None;
        while step >= STEP_MIN {
            let trial = axpy(&x, -step, &g);
            if let Ok((ft, gt)) = fam.value_and_grad(&trial, a) {
                if ft < f && ft <= f - ARMIJO_C * step * gn * gn {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= BACKTRACK;
        }
        match accepted {
            Some((xn, fnew, gnew)) => {
                fails = 0;
                let s: Vec<f64> = xn.iter().zip(&x).map(|(p, q)| p - q).collect();
                let y: Vec<f64> = gnew.iter().zip(&g).map(|(p, q)| p - q).collect();
                prev = Some((s, y));
                x = xn;
                f = fnew;
                g = gnew;
            }
            None => {
                fails += 1;
                prev = None;
                if fails >= STALL_LIMIT {
                    break;
                }
            }
        }
    }
    let gn = norm(&g);
    Ok(PhaseResult { x, value: f, grad_norm: gn, iters, reached: gn <= eps })
}

/// One classical Runge–Kutta step of `ẋ = −∇f_a(x)`.
pub fn gradient_flow_step(fam: &SmoothingFamily, x: &[f64], a: f64, dt: f64) -> Result<Vec<f64>, ExprError> {
    let k1 = fam.grad(x, a)?;
    let k2 = fam.grad(&axpy(x, -0.5 * dt, &k1), a)?;
    let k3 = fam.grad(&axpy(x, -0.5 * dt, &k2), a)?;
    let k4 = fam.grad(&axpy(x, -dt, &k3), a)?;
    Ok(x
        .iter()
        .enumerate()
        .map(|(i, xi)| xi - dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn flow_phase(fam: &SmoothingFamily, x0: Vec<f64>, a: f64, eps: f64, max_inner: usize) -> Result<PhaseResult, SolverError> {
    let (mut f, mut g) = fam.value_and_grad(&x0, a)?;
    let mut x = x0;
    let mut dt = (1.0 / norm(&g).max(1.0)).min(a);
    let mut fails = 0;
    let mut iters = 0;
    while iters < max_inner {
        let gn = norm(&g);
        if gn <= eps {
            return Ok(PhaseResult { x, value: f, grad_norm: gn, iters, reached: true });
        }
        iters += 1;
        let next = gradient_flow_step(fam, &x, a, dt)
            .ok()
            .and_then(|xn| fam.value_and_grad(&xn, a).ok().map(|(fv, gv)| (xn, fv, gv)));
        match next {
            Some((xn, fv, gv)) if fv <= f => {
                x = xn;
                f = fv;
                g = gv;
                fails = 0;
                dt = (2.0 * dt).min(DT_MAX);
            }
            _ => {
                dt *= 0.5;
                if dt < STEP_MIN {
                    fails += 1;
                    dt = STEP_MIN;
                    if fails >= STALL_LIMIT {
                        break;
                    }
                }
            }
        }
    }
    let gn = norm(&g);
    Ok(PhaseResult { x, value: f, grad_norm: gn, iters, reached: gn <= eps })
}

pub fn smoothing_solve(
    fam: &SmoothingFamily,
    x0: &[f64],
    sch: &Schedule,
    inner: InnerSolver,
) -> Result<SolverTrace, SolverError> {
    if x0.len() != fam.dimension() {
        return Err(SolverError::DimensionMismatch {
            expected: fam.dimension(),
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFiniteStart);
    }
    sch.validate(fam)?;
    fam.value_and_grad(x0, sch.a0).map_err(SolverError::StartEval)?;

    let param_free = !fam.graph().uses_param();
    let mut x = x0.to_vec();
    let mut records = Vec::new();
    let mut status = SolverStatus::MaxOuterReached;
    for k in 0..sch.max_outer {
        // Without a smoothing parameter every phase is the same problem.
        let (a, eps) = (sch.a(k), if param_free { sch.eps_min } else { sch.eps(k) });
        let run = match inner {
            InnerSolver::DescentArmijo => armijo_phase(fam, x.clone(), a, eps, sch.max_inner),
            InnerSolver::GradientFlowRk4 => flow_phase(fam, x.clone(), a, eps, sch.max_inner),
        };
        // A warm start sitting on a kink of the next f_a cannot move.
        let Ok(phase) = run else {
            status = SolverStatus::InnerStalled;
            break;
        };
        x = phase.x;
        if !phase.reached {
            status = SolverStatus::InnerStalled;
            break;
        }
        records.push(OuterRecord {
            k,
            a,
            eps,
            x: x.clone(),
            value: phase.value,
            grad_norm: phase.grad_norm,
            inner_iters: phase.iters,
        });
        if phase.grad_norm <= sch.eps_min && (a <= sch.a_min || param_free) {
            status = SolverStatus::Converged;
            break;
        }
    }
    Ok(SolverTrace {
        records,
        status,
        inner,
        final_x: x,
    })
}

/// Independent solves from several starts, run concurrently.
pub fn multi_start(
    fam: &SmoothingFamily,
    starts: &[Vec<f64>],
    sch: &Schedule,
    inner: InnerSolver,
) -> Vec<Result<SolverTrace, SolverError>> {
    starts.par_iter().map(|x0| smoothing_solve(fam, x0, sch, inner)).collect()
}

/// One row per outer iteration: `k,a,eps,x0..,value,grad_norm,inner_iters`.
pub fn write_trace_csv<W: Write>(trace: &SolverTrace, out: W) -> Result<(), SolverError> {
    let d = trace.final_x.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["k", "a", "eps"].map(String::from).to_vec();
    header.extend((0..d).map(|i| format!("x{i}")));
    header.extend(["value", "grad_norm", "inner_iters"].map(String::from));
    w.write_record(&header)?;
    for r in &trace.records {
        let mut row = vec![r.k.to_string(), r.a.to_string(), r.eps.to_string()];
        row.extend(r.x.iter().map(f64::to_string));
        row.extend([r.value.to_string(), r.grad_norm.to_string(), r.inner_iters.to_string()]);
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub x: Vec<f64>,
    pub critical: bool,
    pub estimate: LimitFieldEstimate,
    pub certificate: Option<CriticalityReport>,
    pub warnings: Vec<String>,
}

/// Estimates the limit field at `x` and checks `dist(0, conv D̂_F(x)) ≤ tol`.
pub fn certify_point(
    fam: &SmoothingFamily,
    x: &[f64],
    cfg: &EstimatorConfig,
    tol: f64,
) -> Result<CertificateReport, SolverError> {
    let estimate = estimate_limit_field(fam, x, cfg)?;
    let mut warnings = Vec::new();
    let certificate = match criticality_certificate(&estimate, tol) {
        Ok(c) => Some(c),
        Err(FieldError::EmptyEstimate) => {
            warnings.push(EMPTY_WARNING.to_owned());
            None
        }
        Err(e) => return Err(e.into()),
    };
    let critical = certificate.as_ref().is_some_and(|c| c.critical);
    if fam.is_oscillatory() {
        warnings.push(OSCILLATORY_WARNING.to_owned());
    }
    Ok(CertificateReport {
        x: x.to_vec(),
        critical,
        estimate,
        certificate,
        warnings,
    })
}

pub fn certify_final(
    trace: &SolverTrace,
    fam: &SmoothingFamily,
    cfg: &EstimatorConfig,
    tol: f64,
) -> Result<CertificateReport, SolverError> {
    if trace.final_x.is_empty() {
        return Err(SolverError::EmptyTrace);
    }
    certify_point(fam, &trace.final_x, cfg, tol)
}
