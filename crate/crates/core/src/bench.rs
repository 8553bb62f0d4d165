//! Reproduction suite: each case runs the estimator, solver, kernels or hull
//! routine and compares against witnesses with their derivations.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clarke::{clarke_set, distance_to_hull, PiecewiseTarget};
use crate::expr::{builtin_family, BuiltinFamily};
use crate::field::{criticality_certificate, estimate_limit_field, EstimatorConfig, LimitFieldEstimate, ProbeCurve};
use crate::hull::{min_norm_point, PointSet, DEFAULT_TOL};
use crate::kernels::{closed_form_kernel, conv_smooth, Kernel, MaxFunction, SmoothScalarKernel};
use crate::solver::{certify_final, smoothing_solve, InnerSolver, Schedule, SolverStatus, DEFAULT_CERT_TOL};

/// Probe curves that put the known witnesses of a builtin on the sample path.
pub fn probes_for(which: BuiltinFamily) -> Vec<ProbeCurve> {
    match which {
        BuiltinFamily::Hat => vec![ProbeCurve::linear(vec![0.5]), ProbeCurve::linear(vec![-0.5])],
        BuiltinFamily::Chen => vec![ProbeCurve::linear(vec![1.0])],
        BuiltinFamily::SignSqrt => vec![ProbeCurve::linear(vec![0.0])],
        _ => Vec::new(),
    }
}

/// `f'_a(a)` for `f_a(t) = √(t² + 4a²) − √(t² + a²)`.
pub fn chen_witness() -> f64 {
    5f64.powf(-0.5) - 2f64.powf(-0.5)
}

/// The two-parameter field on `ℝ × (0,∞)²` that is `(1, ·, ·)` on the surface
/// `2x = a₁a₂/(a₁² + a₂²)` and zero elsewhere.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SyntheticField {
    /// Relative tolerance of the membership test.
    pub rel_tol: f64,
}

impl SyntheticField {
    pub fn new() -> Self {
        Self { rel_tol: 1e-12 }
    }

    pub fn on_manifold(&self, x: f64, a1: f64, a2: f64) -> bool {
        let lhs = 2.0 * x;
        let rhs = a1 * a2 / (a1 * a1 + a2 * a2);
        (lhs - rhs).abs() <= self.rel_tol * lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE)
    }

    pub fn eval(&self, x: f64, a1: f64, a2: f64) -> [f64; 3] {
        if !self.on_manifold(x, a1, a2) {
            return [0.0; 3];
        }
        let s = a1 * a1 + a2 * a2;
        [1.0, a2 * (a1 * a1 - a2 * a2) / (s * s), a1 * (a2 * a2 - a1 * a1) / (s * s)]
    }
}

/// The ray `(a₁, a₂) = t (s₁, s₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamCurve {
    pub a1_scale: f64,
    pub a2_scale: f64,
}

impl ParamCurve {
    pub fn at(&self, t: f64) -> (f64, f64) {
        (self.a1_scale * t, self.a2_scale * t)
    }
}

/// One curve on the surface through `x` and one off it; `x ∈ (0, 1/4]`.
pub fn default_param_curves(x: f64) -> Vec<ParamCurve> {
    let kappa = (1.0 - (1.0 - 16.0 * x * x).max(0.0).sqrt()) / (4.0 * x);
    let field = SyntheticField::new();
    let off = [2.0, 3.0]
        .into_iter()
        .map(|m| m * kappa)
        .find(|&k| !field.on_manifold(x, 1.0, k))
        .expect("one of two ratios is off the surface");
    vec![
        ParamCurve { a1_scale: 1.0, a2_scale: kappa },
        ParamCurve { a1_scale: 1.0, a2_scale: off },
    ]
}

/// Limits of the first field component along each curve as `t → 0`, as a
/// sorted set.
pub fn two_param_demo(x: f64, curves: &[ParamCurve]) -> Vec<f64> {
    let field = SyntheticField::new();
    let mut out: Vec<f64> = Vec::new();
    for c in curves {
        let tail: Vec<f64> = (20..=40)
            .map(|k| {
                let (a1, a2) = c.at(0.5f64.powi(k));
                field.eval(x, a1, a2)[0]
            })
            .collect();
        let last = *tail.last().expect("nonempty");
        if tail.iter().all(|v| (v - last).abs() <= 1e-12) && !out.contains(&last) {
            out.push(last);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessSource {
    /// Nearest cluster center of the estimate.
    Cluster,
    /// Nearest horizontal direction.
    Horizontal,
    /// Coordinate `i` of the solver's final point.
    FinalCoordinate(usize),
    MinNormPoint,
    /// Largest kernel deviation; expected value 0.
    KernelDeviation,
    /// Nearest member of the two-parameter limit set.
    LimitValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub label: String,
    pub source: WitnessSource,
    pub value: Vec<f64>,
    pub tol: f64,
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    BlowUp,
    Empty,
    /// Some cluster lies outside the registered Clarke set.
    Inconsistent,
    Critical,
    Converged,
    /// The limit set has exactly the expected members and no others.
    ExactSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedFlag {
    pub flag: Flag,
    pub value: bool,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaseKind {
    LimitField { family: BuiltinFamily, at: Vec<f64> },
    Solve { family: BuiltinFamily, x0: Vec<f64> },
    KernelIdentity { a_values: Vec<f64>, grid: usize },
    Hull { points: Vec<Vec<f64>> },
    TwoParam { x: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub name: String,
    pub kind: CaseKind,
    pub witnesses: Vec<Witness>,
    pub flags: Vec<ExpectedFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub estimator: EstimatorConfig,
    pub schedule: Schedule,
    /// Multiplies every witness tolerance.
    pub tolerance_scale: f64,
    pub consistency_tol: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorConfig::default(),
            schedule: Schedule::default(),
            tolerance_scale: 1.0,
            consistency_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub expected: serde_json::Value,
    pub found: serde_json::Value,
    pub tol: Option<f64>,
    pub ok: bool,
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case: String,
    pub status: CaseStatus,
    pub witnesses_expected: Vec<Vec<f64>>,
    pub witnesses_found: Vec<Option<Vec<f64>>>,
    pub tolerances: Vec<f64>,
    pub checks: Vec<Check>,
    /// Wall time; kept out of the deterministic payload.
    #[serde(skip)]
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub cases: Vec<CaseReport>,
    pub passed: usize,
    pub failed: usize,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

fn witness(label: &str, source: WitnessSource, value: Vec<f64>, tol: f64, provenance: &str) -> Witness {
    Witness {
        label: label.into(),
        source,
        value,
        tol,
        provenance: provenance.into(),
    }
}

fn flag(flag: Flag, value: bool, provenance: &str) -> ExpectedFlag {
    ExpectedFlag {
        flag,
        value,
        provenance: provenance.into(),
    }
}

/// The shipped cases, sorted by name.
pub fn default_suite() -> Vec<BenchCase> {
    use WitnessSource::*;
    let mut cases = vec![
        BenchCase {
            name: "chen".into(),
            kind: CaseKind::LimitField { family: BuiltinFamily::Chen, at: vec![0.0] },
            witnesses: vec![witness(
                "f'_a(a)",
                Cluster,
                vec![chen_witness()],
                1e-6,
                "derivative t/√(t²+4a²) − t/√(t²+a²) at t = a",
            )],
            flags: vec![flag(
                Flag::Inconsistent,
                true,
                "2 max(0,t) − max(0,2t) vanishes identically, so its Clarke set at 0 is {0}",
            )],
        },
        BenchCase {
            name: "hat".into(),
            kind: CaseKind::LimitField { family: BuiltinFamily::Hat, at: vec![0.0] },
            witnesses: vec![
                witness("f'_a(a/2)", Cluster, vec![-1.0], 1e-3, "slope of a − |x| for 0 < x < a"),
                witness("f'_a(-a/2)", Cluster, vec![1.0], 1e-3, "slope of a − |x| for −a < x < 0"),
                witness("f'_a(x), |x| > a", Cluster, vec![0.0], 1e-3, "max(0, a − |x|) vanishes for |x| ≥ a"),
            ],
            flags: vec![flag(Flag::Critical, true, "midpoint of −1 and +1 is 0")],
        },
        BenchCase {
            name: "hull_unit_vectors".into(),
            kind: CaseKind::Hull {
                points: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            },
            witnesses: vec![witness(
                "min-norm point",
                MinNormPoint,
                vec![0.5, 0.5],
                1e-9,
                "projection of 0 onto the segment between e1 and e2",
            )],
            flags: vec![],
        },
        BenchCase {
            name: "kernel_huber_plus".into(),
            kind: CaseKind::KernelIdentity { a_values: vec![1.0, 0.1], grid: 1000 },
            witnesses: vec![witness(
                "max |uniform convolution − closed form|",
                KernelDeviation,
                vec![0.0],
                1e-12,
                "convolution of max(0,t) with the uniform density on [−a/2, a/2]",
            )],
            flags: vec![],
        },
        BenchCase {
            name: "maxfinite".into(),
            kind: CaseKind::LimitField { family: BuiltinFamily::MaxFiniteDemo, at: vec![0.0] },
            witnesses: vec![
                witness("left slope", Cluster, vec![0.0], 1e-3, "smoothed derivative (x + a/2)/a is 0 at x = −a/2"),
                witness("right slope", Cluster, vec![1.0], 1e-3, "smoothed derivative (x + a/2)/a is 1 at x = a/2"),
            ],
            flags: vec![flag(Flag::Critical, true, "0 is a slope of the active pieces at 0")],
        },
        BenchCase {
            name: "signsqrt".into(),
            kind: CaseKind::LimitField { family: BuiltinFamily::SignSqrt, at: vec![0.0] },
            witnesses: vec![witness(
                "blow-up direction",
                Horizontal,
                vec![1.0],
                1e-9,
                "f'_a > 0 on both branches and unbounded as (x, a) → (0, 0)",
            )],
            flags: vec![
                flag(Flag::Empty, true, "every gradient along value-tracking sequences diverges"),
                flag(Flag::BlowUp, true, "f'_a(0) = 1/(2√a)"),
            ],
        },
        BenchCase {
            name: "sin".into(),
            kind: CaseKind::LimitField { family: BuiltinFamily::OscillatingSin, at: vec![0.5] },
            witnesses: vec![
                witness("cos(x/a) = −1", Cluster, vec![-1.0], 0.05, "cos(x_n/a_n) takes every value in [−1, 1]"),
                witness("cos(x/a) = +1", Cluster, vec![1.0], 0.05, "cos(x_n/a_n) takes every value in [−1, 1]"),
            ],
            flags: vec![],
        },
        BenchCase {
            name: "solver_abs".into(),
            kind: CaseKind::Solve { family: BuiltinFamily::AbsHuber, x0: vec![3.0] },
            witnesses: vec![witness("x*", FinalCoordinate(0), vec![0.0], 1e-3, "unique minimizer of every Huber smoothing of |x|")],
            flags: vec![
                flag(Flag::Converged, true, "strongly convex near 0 at every a"),
                flag(Flag::Critical, true, "limits ±1 of x/a near 0 average to 0"),
            ],
        },
        BenchCase {
            name: "solver_nonlipq".into(),
            kind: CaseKind::Solve { family: BuiltinFamily::NonLipschitzQ, x0: vec![1.0, 1.0] },
            witnesses: vec![
                witness("x1*", FinalCoordinate(0), vec![0.0], 1e-3, "grid minimizer of t² + |t|^{1/2}"),
                witness("x2*", FinalCoordinate(1), vec![0.0], 1e-4, "minimizer of t²"),
            ],
            flags: vec![],
        },
        BenchCase {
            name: "two_param".into(),
            kind: CaseKind::TwoParam { x: 0.25 },
            witnesses: vec![
                witness("off-surface limit", LimitValue, vec![0.0], 0.0, "membership test fails along a2 = 2 a1"),
                witness("on-surface limit", LimitValue, vec![1.0], 0.0, "a1 = a2 stays on 2x = a1a2/(a1²+a2²) at x = 1/4"),
            ],
            flags: vec![flag(Flag::ExactSet, true, "the limit set is {0, 1}")],
        },
    ];
    cases.sort_by(|p, q| p.name.cmp(&q.name));
    cases
}

fn dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn nearest<'a>(pool: impl Iterator<Item = &'a Vec<f64>>, v: &[f64]) -> Option<Vec<f64>> {
    pool.min_by(|p, q| dist(p, v).total_cmp(&dist(q, v))).cloned()
}

#[derive(Default)]
struct Outcome {
    estimate: Option<LimitFieldEstimate>,
    final_x: Option<Vec<f64>>,
    min_norm: Option<Vec<f64>>,
    kernel_dev: Option<f64>,
    limits: Option<Vec<f64>>,
    flags: Vec<(Flag, bool)>,
    error: Option<String>,
}

fn kernel_deviation(a_values: &[f64], grid: usize) -> Result<f64, String> {
    let k = Kernel::uniform();
    let plus = MaxFunction::plus();
    let mut worst: f64 = 0.0;
    for &a in a_values {
        for i in 0..grid {
            let t = -2.0 * a + 4.0 * a * i as f64 / (grid - 1) as f64;
            let (v, _) = conv_smooth(&plus, &k, t, a).map_err(|e| e.to_string())?;
            let (w, _) = closed_form_kernel(&SmoothScalarKernel::HuberPlus, t, a).map_err(|e| e.to_string())?;
            worst = worst.max((v - w).abs());
        }
    }
    Ok(worst)
}

fn execute(kind: &CaseKind, cfg: &BenchConfig) -> Outcome {
    let mut out = Outcome::default();
    match kind {
        CaseKind::LimitField { family, at } => {
            let fam = builtin_family(*family);
            let ecfg = cfg.estimator.clone().with_probes(probes_for(*family));
            match estimate_limit_field(&fam, at, &ecfg) {
                Ok(est) => {
                    out.flags.push((Flag::BlowUp, est.blow_up));
                    out.flags.push((Flag::Empty, est.clusters.is_empty()));
                    if let Ok(c) = criticality_certificate(&est, DEFAULT_CERT_TOL) {
                        out.flags.push((Flag::Critical, c.critical));
                    }
                    if let Some(t) = PiecewiseTarget::for_builtin(*family) {
                        if let Ok(set) = clarke_set(&t, at) {
                            let bad = est
                                .clusters
                                .iter()
                                .any(|c| distance_to_hull(&c.center, &set) > cfg.consistency_tol);
                            out.flags.push((Flag::Inconsistent, bad));
                        }
                    }
                    out.estimate = Some(est);
                }
                Err(e) => out.error = Some(e.to_string()),
            }
        }
        CaseKind::Solve { family, x0 } => {
            let fam = builtin_family(*family);
            let run = smoothing_solve(&fam, x0, &cfg.schedule, InnerSolver::DescentArmijo).and_then(|t| {
                let cert = certify_final(&t, &fam, &cfg.estimator.clone().with_probes(probes_for(*family)), DEFAULT_CERT_TOL)?;
                Ok((t, cert))
            });
            match run {
                Ok((t, cert)) => {
                    out.flags.push((Flag::Converged, t.status == SolverStatus::Converged));
                    out.flags.push((Flag::Critical, cert.critical));
                    out.final_x = Some(t.final_x);
                }
                Err(e) => out.error = Some(e.to_string()),
            }
        }
        CaseKind::KernelIdentity { a_values, grid } => match kernel_deviation(a_values, *grid) {
            Ok(d) => out.kernel_dev = Some(d),
            Err(e) => out.error = Some(e),
        },
        CaseKind::Hull { points } => match PointSet::new(points.clone()) {
            Ok(set) => out.min_norm = Some(min_norm_point(&set, DEFAULT_TOL).point),
            Err(e) => out.error = Some(e.to_string()),
        },
        CaseKind::TwoParam { x } => {
            out.limits = Some(two_param_demo(*x, &default_param_curves(*x)));
        }
    }
    out
}

pub fn run_case(case: &BenchCase, cfg: &BenchConfig) -> CaseReport {
    let start = Instant::now();
    let out = execute(&case.kind, cfg);
    let mut checks = Vec::new();
    let mut found_all = Vec::new();
    let mut tolerances = Vec::new();
    if let Some(e) = &out.error {
        checks.push(Check {
            label: "run".into(),
            expected: "ok".into(),
            found: e.clone().into(),
            tol: None,
            ok: false,
            provenance: String::new(),
        });
    }
    for w in &case.witnesses {
        let tol = w.tol * cfg.tolerance_scale;
        let found: Option<Vec<f64>> = match w.source {
            WitnessSource::Cluster => out
                .estimate
                .as_ref()
                .and_then(|e| nearest(e.clusters.iter().map(|c| &c.center), &w.value)),
            WitnessSource::Horizontal => out.estimate.as_ref().and_then(|e| nearest(e.horizontal.iter(), &w.value)),
            WitnessSource::FinalCoordinate(i) => out.final_x.as_ref().and_then(|x| x.get(i).map(|v| vec![*v])),
            WitnessSource::MinNormPoint => out.min_norm.clone(),
            WitnessSource::KernelDeviation => out.kernel_dev.map(|d| vec![d]),
            WitnessSource::LimitValue => out
                .limits
                .as_ref()
                .and_then(|l| l.iter().copied().min_by(|p, q| (p - w.value[0]).abs().total_cmp(&(q - w.value[0]).abs())))
                .map(|v| vec![v]),
        };
        let ok = found.as_ref().is_some_and(|f| dist(f, &w.value) <= tol);
        checks.push(Check {
            label: w.label.clone(),
            expected: serde_json::json!(w.value),
            found: serde_json::json!(found),
            tol: Some(tol),
            ok,
            provenance: w.provenance.clone(),
        });
        found_all.push(found);
        tolerances.push(tol);
    }
    for f in &case.flags {
        let found = if f.flag == Flag::ExactSet {
            out.limits.as_ref().map(|l| {
                l.len() == case.witnesses.len()
                    && case.witnesses.iter().all(|w| l.iter().any(|v| (v - w.value[0]).abs() <= w.tol * cfg.tolerance_scale))
            })
        } else {
            out.flags.iter().find(|(g, _)| *g == f.flag).map(|(_, v)| *v)
        };
        checks.push(Check {
            label: serde_json::to_value(f.flag)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            expected: f.value.into(),
            found: serde_json::json!(found),
            tol: None,
            ok: found == Some(f.value),
            provenance: f.provenance.clone(),
        });
    }
    let status = if checks.iter().all(|c| c.ok) {
        CaseStatus::Pass
    } else {
        CaseStatus::Fail
    };
    CaseReport {
        case: case.name.clone(),
        status,
        witnesses_expected: case.witnesses.iter().map(|w| w.value.clone()).collect(),
        witnesses_found: found_all,
        tolerances,
        checks,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// Runs every case whose name contains `filter`, in parallel; the report is
/// ordered by case name.
pub fn run_suite(filter: Option<&str>, cfg: &BenchConfig) -> SuiteReport {
    let cases: Vec<BenchCase> = default_suite()
        .into_iter()
        .filter(|c| filter.is_none_or(|f| c.name.contains(f)))
        .collect();
    let mut reports: Vec<CaseReport> = cases.par_iter().map(|c| run_case(c, cfg)).collect();
    reports.sort_by(|p, q| p.case.cmp(&q.case));
    let passed = reports.iter().filter(|r| r.status == CaseStatus::Pass).count();
    SuiteReport {
        failed: reports.len() - passed,
        passed,
        cases: reports,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_param_at_quarter() {
        let field = SyntheticField::new();
        // Oracle: a1 a2 / (a1² + a2²) with a1 = a2 is exactly 1/2.
        assert!(field.on_manifold(0.25, 0.3, 0.3));
        assert_eq!(field.eval(0.25, 0.3, 0.3)[0], 1.0);
        // t · 2t / (t² + 4t²) = 2/5 ≠ 1/2.
        assert!(!field.on_manifold(0.25, 0.3, 0.6));
        assert_eq!(field.eval(0.25, 0.3, 0.6), [0.0; 3]);
        let on = ParamCurve { a1_scale: 1.0, a2_scale: 1.0 };
        let off = ParamCurve { a1_scale: 1.0, a2_scale: 2.0 };
        assert_eq!(two_param_demo(0.25, &[on]), vec![1.0]);
        assert_eq!(two_param_demo(0.25, &[off]), vec![0.0]);
        assert_eq!(two_param_demo(0.25, &default_param_curves(0.25)), vec![0.0, 1.0]);
    }

    #[test]
    fn two_param_other_points() {
        for x in [0.05, 0.1, 0.2, 0.249] {
            assert_eq!(two_param_demo(x, &default_param_curves(x)), vec![0.0, 1.0], "x = {x}");
        }
    }

    #[test]
    fn synthetic_field_components() {
        // Hand evaluation at a1 = 1, a2 = 2 + √3 where 2x = a1a2/(a1²+a2²).
        let a2 = 2.0 + 3f64.sqrt();
        let x = 0.5 * a2 / (1.0 + a2 * a2);
        let v = SyntheticField::new().eval(x, 1.0, a2);
        let s = 1.0 + a2 * a2;
        assert_eq!(v[0], 1.0);
        assert!((v[1] - a2 * (1.0 - a2 * a2) / (s * s)).abs() < 1e-15);
        assert!((v[2] - (a2 * a2 - 1.0) / (s * s)).abs() < 1e-15);
    }

    #[test]
    fn suite_is_sorted_and_documented() {
        let s = default_suite();
        let names: Vec<&str> = s.iter().map(|c| c.name.as_str()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        for c in &s {
            assert!(c.witnesses.iter().all(|w| !w.provenance.is_empty()));
            assert!(c.flags.iter().all(|f| !f.provenance.is_empty()));
        }
    }

    #[test]
    fn every_case_passes() {
        let r = run_suite(None, &BenchConfig::default());
        for c in &r.cases {
            assert_eq!(c.status, CaseStatus::Pass, "{}", serde_json::to_string_pretty(c).unwrap());
        }
        assert_eq!(r.cases.len(), 10);
    }

    #[test]
    fn filter_and_injected_failure() {
        let r = run_suite(Some("chen"), &BenchConfig::default());
        assert_eq!(r.cases.len(), 1);
        let cfg = BenchConfig { tolerance_scale: 0.0, ..Default::default() };
        let r = run_suite(Some("sin"), &cfg);
        assert!(!r.all_passed());
    }

    #[test]
    fn chen_witness_value() {
        // Central difference of √(t²+4a²) − √(t²+a²) at t = a = 0.3.
        let f = |t: f64| (t * t + 0.36).sqrt() - (t * t + 0.09).sqrt();
        let h = 1e-6;
        let fd = (f(0.3 + h) - f(0.3 - h)) / (2.0 * h);
        assert!((fd - chen_witness()).abs() < 1e-9);
        assert!((chen_witness() + 0.25989).abs() < 1e-5);
    }
}
