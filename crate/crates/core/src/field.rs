//! Sampling estimator of the gradient-limit field of a smoothing family.
//!
//! Gradients are sampled at `(x_n, a_n)` with `a_n = a₀ σⁿ` and `x_n` within
//! `c a_nᵝ` of the query point, filtered by value tracking, then clustered.
//! Only clusters populated at the three smallest levels are reported; the
//! normalized directions of blown-up gradients make up the horizontal part.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::clarke::{clarke_set, distance_to_hull, ClarkeError, PiecewiseTarget};
use crate::expr::{ExprError, SmoothingFamily};
use crate::hull::{min_norm_point, PointSet, DEFAULT_TOL};

/// Levels a cluster must be populated at to count as a limit point.
pub const PERSISTENCE_LEVELS: usize = 3;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),
    #[error("point has dimension {got}, family expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point has a non-finite coordinate")]
    NonFinitePoint,
    #[error("empty estimate: no certificate")]
    EmptyEstimate,
    #[error("path needs at least two nodes")]
    ShortPath,
    #[error("gradient evaluation failed along path at t = {t}: {source}")]
    PathEval { t: f64, source: ExprError },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Clarke(#[from] ClarkeError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Curve `x_n = x + a_nᵉ · offset` sampled once per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCurve {
    pub offset: Vec<f64>,
    #[serde(default = "one")]
    pub exponent: f64,
}

fn one() -> f64 {
    1.0
}

impl ProbeCurve {
    pub fn linear(offset: Vec<f64>) -> Self {
        Self { offset, exponent: 1.0 }
    }

    fn point(&self, x: &[f64], a: f64) -> Vec<f64> {
        let r = a.powf(self.exponent);
        x.iter().zip(&self.offset).map(|(xi, o)| xi + r * o).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Largest smoothing parameter; `None` uses the family's `a_max`.
    pub a0: Option<f64>,
    pub sigma: f64,
    pub levels: usize,
    /// Random samples per level and pass.
    pub replicas: usize,
    pub radius_scale: f64,
    /// One sampling pass per radius exponent.
    pub radius_exponents: Vec<f64>,
    pub merge_radius: f64,
    pub blow_up_threshold: f64,
    pub value_tol: f64,
    pub seed: u64,
    pub probes: Vec<ProbeCurve>,
}

pub const DEFAULT_SEED: u64 = 0x5eed_1f1e_1d00_0001;

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            a0: None,
            sigma: 0.5,
            levels: 30,
            replicas: 64,
            radius_scale: 1.0,
            radius_exponents: vec![1.0, 0.5],
            merge_radius: 1e-2,
            blow_up_threshold: 1e3,
            value_tol: 1e-3,
            seed: DEFAULT_SEED,
            probes: Vec::new(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self, fam: &SmoothingFamily) -> Result<(), FieldError> {
        let bad = |m: String| Err(FieldError::InvalidConfig(m));
        if let Some(a0) = self.a0 {
            if !(a0 > 0.0 && a0 <= fam.a_max()) {
                return bad(format!("a0 = {a0} outside (0, {}]", fam.a_max()));
            }
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad(format!("sigma = {} outside (0, 1)", self.sigma));
        }
        if self.levels < PERSISTENCE_LEVELS {
            return bad(format!("need at least {PERSISTENCE_LEVELS} levels"));
        }
        if self.radius_exponents.is_empty() || self.radius_exponents.iter().any(|b| b.is_nan() || *b <= 0.0) {
            return bad("radius exponents must be nonempty and positive".into());
        }
        for (name, v) in [
            ("radius_scale", self.radius_scale),
            ("merge_radius", self.merge_radius),
            ("blow_up_threshold", self.blow_up_threshold),
            ("value_tol", self.value_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite"));
            }
        }
        for p in &self.probes {
            if p.offset.len() != fam.dimension() || p.offset.iter().any(|v| !v.is_finite()) {
                return bad("probe offset must be finite with the family's dimension".into());
            }
        }
        Ok(())
    }

    pub fn with_probes(mut self, probes: Vec<ProbeCurve>) -> Self {
        self.probes = probes;
        self
    }

    fn a0(&self, fam: &SmoothingFamily) -> f64 {
        self.a0.unwrap_or(fam.a_max())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    pub x: Vec<f64>,
    pub a: f64,
    pub value: f64,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Probe,
    Ray,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Retained,
    ValueRejected,
    EvalFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub pass: usize,
    pub level: usize,
    pub kind: SampleKind,
    pub replica: usize,
    pub a: f64,
    pub x: Vec<f64>,
    /// `None` when evaluation failed.
    pub sample: Option<GradientSample>,
    pub status: SampleStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: Vec<f64>,
    pub weight: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitFieldEstimate {
    pub x: Vec<f64>,
    pub target_value: Option<f64>,
    pub clusters: Vec<Cluster>,
    pub horizontal: Vec<Vec<f64>>,
    pub blow_up: bool,
    /// `+∞` (`null` in JSON) when there are no clusters.
    #[serde(serialize_with = "ser_inf_null", deserialize_with = "de_null_inf")]
    pub hull_distance: f64,
    pub samples_used: usize,
    pub value_filter_rejections: usize,
    pub eval_failures: usize,
    pub transient_clusters: usize,
    pub config: EstimatorConfig,
    pub seed: u64,
}

fn ser_inf_null<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

fn de_null_inf<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |h, &p| splitmix(h ^ p))
}

/// `±eᵢ`, plus `±(eᵢ ± eᵢ₊₁)/√2` when `d ≥ 2`.
pub fn deterministic_rays(d: usize) -> Vec<Vec<f64>> {
    let mut rays = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = s;
            rays.push(e);
        }
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d.saturating_sub(1) {
        for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let mut e = vec![0.0; d];
            e[i] = si * h;
            e[i + 1] = sj * h;
            rays.push(e);
        }
    }
    rays
}

fn ball_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&g);
        if n > 0.0 {
            let r = rng.random::<f64>().powf(1.0 / d as f64);
            return g.iter().map(|v| r * v / n).collect();
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|t| t * t).sum::<f64>().sqrt()
}

fn dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

struct Job {
    pass: usize,
    level: usize,
    kind: SampleKind,
    replica: usize,
    a: f64,
    x: Vec<f64>,
}

fn build_jobs(fam: &SmoothingFamily, x: &[f64], cfg: &EstimatorConfig) -> Vec<Job> {
    let d = x.len();
    let a0 = cfg.a0(fam);
    let rays = deterministic_rays(d);
    let mut jobs = Vec::new();
    for (pass, &beta) in cfg.radius_exponents.iter().enumerate() {
        for level in 0..cfg.levels {
            let a = a0 * cfg.sigma.powi(level as i32);
            let r = cfg.radius_scale * a.powf(beta);
            if pass == 0 {
                for (k, p) in cfg.probes.iter().enumerate() {
                    jobs.push(Job {
                        pass,
                        level,
                        kind: SampleKind::Probe,
                        replica: k,
                        a,
                        x: p.point(x, a),
                    });
                }
            }
            for (k, u) in rays.iter().enumerate() {
                jobs.push(Job {
                    pass,
                    level,
                    kind: SampleKind::Ray,
                    replica: k,
                    a,
                    x: x.iter().zip(u).map(|(xi, ui)| xi + r * ui).collect(),
                });
            }
            for k in 0..cfg.replicas {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[pass as u64, level as u64, k as u64]));
                let u = ball_point(&mut rng, d);
                jobs.push(Job {
                    pass,
                    level,
                    kind: SampleKind::Random,
                    replica: k,
                    a,
                    x: x.iter().zip(&u).map(|(xi, ui)| xi + r * ui).collect(),
                });
            }
        }
    }
    jobs
}

fn run_job(fam: &SmoothingFamily, job: Job, target: Option<f64>, value_tol: f64) -> SampleRecord {
    let evaluated = fam
        .value_and_grad(&job.x, job.a)
        .ok()
        .filter(|(v, g)| v.is_finite() && g.iter().all(|t| t.is_finite()));
    let (sample, status) = match evaluated {
        None => (None, SampleStatus::EvalFailed),
        Some((value, grad)) => {
            let keep = target.is_none_or(|f| (value - f).abs() <= value_tol * (1.0 + f.abs()));
            let grad_norm = norm(&grad);
            let s = GradientSample {
                x: job.x.clone(),
                a: job.a,
                value,
                grad,
                grad_norm,
            };
            let status = if keep {
                SampleStatus::Retained
            } else {
                SampleStatus::ValueRejected
            };
            (Some(s), status)
        }
    };
    SampleRecord {
        pass: job.pass,
        level: job.level,
        kind: job.kind,
        replica: job.replica,
        a: job.a,
        x: job.x,
        sample,
        status,
    }
}

/// Estimate with the family's own target (if any) as the value reference.
pub fn estimate_limit_field(
    fam: &SmoothingFamily,
    x: &[f64],
    cfg: &EstimatorConfig,
) -> Result<LimitFieldEstimate, FieldError> {
    if x.len() != fam.dimension() {
        return Err(FieldError::DimensionMismatch {
            expected: fam.dimension(),
            got: x.len(),
        });
    }
    let target = match fam.target_value(x) {
        Some(r) => Some(r?),
        None => None,
    };
    estimate_with_target(fam, target, x, cfg).map(|(e, _)| e)
}

/// Estimate against an explicit `F(x)`; `None` disables the value filter.
/// Also returns every sample in clustering order.
pub fn estimate_with_target(
    fam: &SmoothingFamily,
    target: Option<f64>,
    x: &[f64],
    cfg: &EstimatorConfig,
) -> Result<(LimitFieldEstimate, Vec<SampleRecord>), FieldError> {
    if x.len() != fam.dimension() {
        return Err(FieldError::DimensionMismatch {
            expected: fam.dimension(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FieldError::NonFinitePoint);
    }
    cfg.validate(fam)?;

    let jobs = build_jobs(fam, x, cfg);
    let mut records: Vec<SampleRecord> = jobs
        .into_par_iter()
        .map(|job| run_job(fam, job, target, cfg.value_tol))
        .collect();
    // Smallest a first, so leaders come from the finest level.
    records.sort_by_key(|r| (std::cmp::Reverse(r.level), r.kind, r.pass, r.replica));

    let mut leaders: Vec<(Vec<f64>, usize, Vec<bool>)> = Vec::new();
    let mut horizontal: Vec<Vec<f64>> = Vec::new();
    let mut blow_up = false;
    let mut used = 0;
    let first_tracked = cfg.levels - PERSISTENCE_LEVELS;
    for rec in &records {
        let Some(s) = rec.sample.as_ref().filter(|_| rec.status == SampleStatus::Retained) else {
            continue;
        };
        used += 1;
        if s.grad_norm > cfg.blow_up_threshold {
            blow_up = true;
            let dir: Vec<f64> = s.grad.iter().map(|g| g / s.grad_norm).collect();
            if horizontal.iter().all(|h| dist(h, &dir) > cfg.merge_radius) {
                horizontal.push(dir);
            }
            continue;
        }
        let nearest = leaders
            .iter()
            .enumerate()
            .map(|(i, (c, _, _))| (i, dist(c, &s.grad)))
            .filter(|(_, dd)| *dd <= cfg.merge_radius)
            .min_by(|p, q| p.1.total_cmp(&q.1));
        let idx = match nearest {
            Some((i, _)) => i,
            None => {
                leaders.push((s.grad.clone(), 0, vec![false; PERSISTENCE_LEVELS]));
                leaders.len() - 1
            }
        };
        let (_, weight, seen) = &mut leaders[idx];
        *weight += 1;
        if rec.level >= first_tracked {
            seen[rec.level - first_tracked] = true;
        }
    }
    let total = leaders.len();
    let clusters: Vec<Cluster> = leaders
        .into_iter()
        .filter(|(_, _, seen)| seen.iter().all(|s| *s))
        .map(|(center, weight, _)| Cluster { center, weight })
        .collect();
    let hull_distance = if clusters.is_empty() {
        f64::INFINITY
    } else {
        let set = PointSet::new(clusters.iter().map(|c| c.center.clone()).collect()).expect("finite centers");
        min_norm_point(&set, DEFAULT_TOL).distance
    };
    let count = |st: SampleStatus| records.iter().filter(|r| r.status == st).count();
    let est = LimitFieldEstimate {
        x: x.to_vec(),
        target_value: target,
        transient_clusters: total - clusters.len(),
        clusters,
        horizontal,
        blow_up,
        hull_distance,
        samples_used: used,
        value_filter_rejections: count(SampleStatus::ValueRejected),
        eval_failures: count(SampleStatus::EvalFailed),
        config: cfg.clone(),
        seed: cfg.seed,
    };
    Ok((est, records))
}

/// Writes samples as CSV: `pass,level,kind,replica,a,x0..,value,g0..,retained`.
pub fn write_samples_csv<W: Write>(records: &[SampleRecord], d: usize, out: W) -> Result<(), FieldError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["pass", "level", "kind", "replica", "a"].map(String::from).to_vec();
    header.extend((0..d).map(|i| format!("x{i}")));
    header.push("value".into());
    header.extend((0..d).map(|i| format!("g{i}")));
    header.push("retained".into());
    w.write_record(&header)?;
    for r in records {
        let kind = match r.kind {
            SampleKind::Probe => "probe",
            SampleKind::Ray => "ray",
            SampleKind::Random => "random",
        };
        let mut row = vec![r.pass.to_string(), r.level.to_string(), kind.into(), r.replica.to_string(), r.a.to_string()];
        row.extend(r.x.iter().map(f64::to_string));
        match &r.sample {
            Some(s) => {
                row.push(s.value.to_string());
                row.extend(s.grad.iter().map(f64::to_string));
            }
            None => row.extend(std::iter::repeat_n(String::new(), d + 1)),
        }
        row.push((r.status == SampleStatus::Retained).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    pub critical: bool,
    pub hull_distance: f64,
    pub tol: f64,
    /// Convex weights over the cluster centers.
    pub witness: Vec<f64>,
    pub point: Vec<f64>,
}

pub fn criticality_certificate(est: &LimitFieldEstimate, tol: f64) -> Result<CriticalityReport, FieldError> {
    if est.clusters.is_empty() {
        return Err(FieldError::EmptyEstimate);
    }
    let set = PointSet::new(est.clusters.iter().map(|c| c.center.clone()).collect()).expect("finite centers");
    let mnp = min_norm_point(&set, DEFAULT_TOL);
    Ok(CriticalityReport {
        critical: mnp.distance <= tol,
        hull_distance: mnp.distance,
        tol,
        witness: mnp.weights,
        point: mnp.point,
    })
}

/// `|f_a(x(1)) − f_a(x(0)) − ∫⟨∇f_a(x(t)), ẋ(t)⟩ dt|` along the polyline
/// through `nodes`, with the trapezoid rule on each segment.
pub fn verify_path_integral(
    fam: &SmoothingFamily,
    a: f64,
    nodes: &[Vec<f64>],
    steps: usize,
) -> Result<f64, FieldError> {
    if nodes.len() < 2 {
        return Err(FieldError::ShortPath);
    }
    for p in nodes {
        if p.len() != fam.dimension() {
            return Err(FieldError::DimensionMismatch {
                expected: fam.dimension(),
                got: p.len(),
            });
        }
    }
    let segs = nodes.len() - 1;
    let per = steps.div_ceil(segs).max(1);
    let total = (segs * per) as f64;
    let grad_at = |seg: usize, k: usize| -> Result<f64, FieldError> {
        let (p, q) = (&nodes[seg], &nodes[seg + 1]);
        let s = k as f64 / per as f64;
        let x: Vec<f64> = p.iter().zip(q).map(|(u, v)| u + s * (v - u)).collect();
        let g = fam.grad(&x, a).map_err(|source| FieldError::PathEval {
            t: (seg * per + k) as f64 / total,
            source,
        })?;
        Ok(g.iter().zip(p.iter().zip(q)).map(|(gi, (u, v))| gi * (v - u)).sum())
    };
    let mut integral = 0.0;
    for seg in 0..segs {
        let mut prev = grad_at(seg, 0)?;
        let mut acc = 0.0;
        for k in 1..=per {
            let cur = grad_at(seg, k)?;
            acc += 0.5 * (prev + cur);
            prev = cur;
        }
        integral += acc / per as f64;
    }
    let f0 = fam.eval(&nodes[0], a)?;
    let f1 = fam.eval(&nodes[segs], a)?;
    Ok((f1 - f0 - integral).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyPoint {
    pub x: Vec<f64>,
    pub forced: bool,
    pub consistent: bool,
    /// Largest distance from a cluster center to the Clarke hull.
    pub worst_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub fraction_consistent: f64,
    pub points: Vec<ConsistencyPoint>,
}

/// Checks `D̂_F(x) ⊂ ∂F(x)` at `trials` uniform points of `bounds` plus the
/// `forced` points. Points where the Clarke set is undefined count as
/// inconsistent.
pub fn gradient_consistency_scan(
    fam: &SmoothingFamily,
    target: &PiecewiseTarget,
    bounds: &[(f64, f64)],
    trials: usize,
    forced: &[Vec<f64>],
    cfg: &EstimatorConfig,
    cons_tol: f64,
) -> Result<ConsistencyReport, FieldError> {
    if bounds.len() != fam.dimension() {
        return Err(FieldError::DimensionMismatch {
            expected: fam.dimension(),
            got: bounds.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[0xc045]));
    let mut pts: Vec<(Vec<f64>, bool)> = forced.iter().map(|p| (p.clone(), true)).collect();
    for _ in 0..trials {
        pts.push((bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect(), false));
    }
    let mut points = Vec::with_capacity(pts.len());
    for (i, (x, is_forced)) in pts.into_iter().enumerate() {
        let mut local = cfg.clone();
        local.seed = mix_seed(cfg.seed, &[i as u64]);
        let est = estimate_limit_field(fam, &x, &local)?;
        let (consistent, worst) = match clarke_set(target, &x) {
            Ok(set) => {
                let worst = est
                    .clusters
                    .iter()
                    .map(|c| distance_to_hull(&c.center, &set))
                    .fold(0.0, f64::max);
                (worst <= cons_tol, worst)
            }
            Err(ClarkeError::NonLipschitz { .. }) => (false, f64::INFINITY),
            Err(e) => return Err(e.into()),
        };
        points.push(ConsistencyPoint {
            x,
            forced: is_forced,
            consistent,
            worst_distance: worst,
        });
    }
    let ok = points.iter().filter(|p| p.consistent).count();
    Ok(ConsistencyReport {
        fraction_consistent: if points.is_empty() { 1.0 } else { ok as f64 / points.len() as f64 },
        points,
    })
}
