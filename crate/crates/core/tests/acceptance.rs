//! Acceptance gate. Each criterion is its own test and prints one
//! `AC-nn PASS|FAIL` line; run with `--nocapture` to see them.

use std::process::Command;

use limitfield::bench::{chen_witness, default_param_curves, probes_for, two_param_demo};
use limitfield::clarke::PiecewiseTarget;
use limitfield::expr::{builtin_family, BuiltinFamily};
use limitfield::field::{
    criticality_certificate, estimate_limit_field, gradient_consistency_scan, verify_path_integral, EstimatorConfig,
};
use limitfield::hull::{min_norm_point, PointSet, DEFAULT_TOL};
use limitfield::kernels::{
    build_envelope, closed_form_kernel, conv_smooth, AffinePiece, Kernel, MaxFunction, SmoothScalarKernel,
};
use limitfield::quad::adaptive_simpson;
use limitfield::solver::{smoothing_solve, InnerSolver, Schedule, SolverStatus};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn report(id: u32, name: &str, ok: bool, detail: String) {
    println!("AC-{id:02} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "AC-{id:02} {name}: {detail}");
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xacce_5500 + tag)
}

/// `max_i (slope_i t + intercept_i)` evaluated straight from the pieces.
fn naive_max(pieces: &[(f64, f64)], t: f64) -> f64 {
    pieces.iter().map(|&(s, b)| s * t + b).fold(f64::NEG_INFINITY, f64::max)
}

fn naive_slope(pieces: &[(f64, f64)], t: f64) -> f64 {
    let v = naive_max(pieces, t);
    pieces
        .iter()
        .filter(|&&(s, b)| s * t + b == v)
        .map(|&(s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Twenty random max-functions with 1..=6 pieces, fixed seed.
fn random_max_functions() -> Vec<(Vec<(f64, f64)>, MaxFunction)> {
    let mut r = rng(2);
    (0..20)
        .map(|_| {
            let k = r.random_range(1..=6);
            let raw: Vec<(f64, f64)> = (0..k)
                .map(|_| (r.random_range(-3.0..3.0), r.random_range(-1.0..1.0)))
                .collect();
            let pieces: Vec<AffinePiece> = raw.iter().map(|&(s, b)| AffinePiece::new(s, b)).collect();
            (raw, build_envelope(&pieces).unwrap())
        })
        .collect()
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

#[test]
fn ac01_kernel_closed_forms() {
    let huber_plus = |t: f64, a: f64| {
        if t >= a / 2.0 {
            t
        } else if t <= -a / 2.0 {
            0.0
        } else {
            (t + a / 2.0).powi(2) / (2.0 * a)
        }
    };
    let k = Kernel::uniform();
    let mut worst: f64 = 0.0;
    for a in [1.0, 0.1] {
        for t in grid(-2.0, 2.0, 1000) {
            let (conv, _) = conv_smooth(&MaxFunction::plus(), &k, t, a).unwrap();
            let (closed, _) = closed_form_kernel(&SmoothScalarKernel::HuberPlus, t, a).unwrap();
            let exact = huber_plus(t, a);
            worst = worst.max((conv - exact).abs()).max((closed - exact).abs());
        }
    }
    report(1, "kernel closed forms", worst <= 1e-12, format!("max error {worst:.2e} (tol 1e-12)"));
}

#[test]
fn ac02_convolution_matches_quadrature() {
    let mut worst: f64 = 0.0;
    for (raw, p) in random_max_functions() {
        for k in [Kernel::uniform(), Kernel::triangular()] {
            let h = k.half_width();
            for a in [1.0, 0.1] {
                for t in grid(-2.0, 2.0, 41) {
                    // Split the support where the integrand has kinks so each
                    // cell holds a polynomial.
                    let mut cuts = vec![-h, 0.0, h];
                    cuts.extend(p.breakpoints().iter().map(|b| (t - b) / a).filter(|u| u.abs() < h));
                    cuts.sort_by(f64::total_cmp);
                    let (mut v, mut d) = (0.0, 0.0);
                    for w in cuts.windows(2) {
                        v += adaptive_simpson(&|u: f64| naive_max(&raw, t - a * u) * k.density(u), w[0], w[1], 1e-12);
                        d += adaptive_simpson(&|u: f64| naive_slope(&raw, t - a * u) * k.density(u), w[0], w[1], 1e-12);
                    }
                    let (cv, cd) = conv_smooth(&p, &k, t, a).unwrap();
                    worst = worst.max((cv - v).abs()).max((cd - d).abs());
                }
            }
        }
    }
    report(2, "convolution vs quadrature", worst <= 1e-8, format!("max error {worst:.2e} (tol 1e-8)"));
}

#[test]
fn ac03_lipschitz_preserved() {
    let mut worst_excess = f64::NEG_INFINITY;
    for (raw, p) in random_max_functions() {
        let lip = raw.iter().map(|&(s, _)| s.abs()).fold(0.0, f64::max);
        for k in [Kernel::uniform(), Kernel::triangular()] {
            for a in [1.0, 0.1, 0.01] {
                for t in grid(-3.0, 3.0, 2001) {
                    let (_, d) = conv_smooth(&p, &k, t, a).unwrap();
                    worst_excess = worst_excess.max(d.abs() - lip);
                }
            }
        }
    }
    report(
        3,
        "Lipschitz preservation",
        worst_excess <= 1e-9,
        format!("max |s'| - L = {worst_excess:.2e} (tol 1e-9)"),
    );
}

#[test]
fn ac04_uniform_convergence_rate() {
    let mut worst_ratio: f64 = 0.0;
    let mut ok = true;
    for (raw, p) in random_max_functions() {
        let lip = raw.iter().map(|&(s, _)| s.abs()).fold(0.0, f64::max);
        for k in [Kernel::uniform(), Kernel::triangular()] {
            for a in [1.0, 0.1, 0.01] {
                let bound = a * lip * k.abs_moment();
                let sup = grid(-3.0, 3.0, 2001)
                    .map(|t| (conv_smooth(&p, &k, t, a).unwrap().0 - naive_max(&raw, t)).abs())
                    .fold(0.0, f64::max);
                ok &= sup <= bound + 1e-12;
                if bound > 0.0 {
                    worst_ratio = worst_ratio.max(sup / bound);
                }
            }
        }
    }
    report(4, "uniform convergence rate", ok, format!("max sup|s - p| / (a L m) = {worst_ratio:.4}"));
}

fn near_kink(which: BuiltinFamily, x: &[f64], a: f64) -> bool {
    match which {
        BuiltinFamily::Hat => x[0].abs() < 1e-3 || (x[0].abs() - a).abs() < 1e-3,
        BuiltinFamily::SignSqrt => x[0].abs() < 1e-3,
        _ => false,
    }
}

#[test]
fn ac05_gradients_match_finite_differences() {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for which in BuiltinFamily::ALL {
        let fam = builtin_family(which);
        let d = fam.dimension();
        let mut fam_worst: f64 = 0.0;
        let mut done = 0;
        while done < 100 {
            let x: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
            let a = r.random_range(0.05..1.0);
            if near_kink(which, &x, a) {
                continue;
            }
            let g = fam.grad(&x, a).unwrap();
            for i in 0..d {
                let h = 1e-7 * x[i].abs().max(1.0);
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[i] += h;
                xm[i] -= h;
                let fd = (fam.eval(&xp, a).unwrap() - fam.eval(&xm, a).unwrap()) / (xp[i] - xm[i]);
                fam_worst = fam_worst.max((g[i] - fd).abs() / g[i].abs().max(1.0));
            }
            done += 1;
        }
        detail.push(format!("{which} {fam_worst:.1e}"));
        worst = worst.max(fam_worst);
    }
    report(
        5,
        "gradient vs finite differences",
        worst <= 1e-5,
        format!("max rel error {worst:.2e} (tol 1e-5) [{}]", detail.join(", ")),
    );
}

const PATH_A: f64 = 0.1;

fn path_residuals(which: BuiltinFamily, steps: &[usize]) -> Vec<f64> {
    let fam = builtin_family(which);
    // Not symmetric about 0: a symmetric path makes the quadrature error cancel.
    let nodes = vec![vec![-0.83], vec![0.61], vec![1.37]];
    steps
        .iter()
        .map(|&n| verify_path_integral(&fam, PATH_A, &nodes, n).unwrap())
        .collect()
}

#[test]
fn ac06a_path_integral_residual() {
    let mut ok = true;
    let mut detail = Vec::new();
    for which in [BuiltinFamily::AbsHuber, BuiltinFamily::Chen] {
        let res = path_residuals(which, &[10_000])[0];
        ok &= res <= 1e-6;
        detail.push(format!("{which} {res:.2e}"));
    }
    report(6, "path-integral residual at 1e4 steps", ok, format!("{} (tol 1e-6)", detail.join(", ")));
}

#[test]
fn ac06b_path_integral_convergence_slope() {
    let steps = [100usize, 300, 1000, 3000, 10_000];
    let xs: Vec<f64> = steps.iter().map(|&n| (n as f64).ln()).collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for which in [BuiltinFamily::AbsHuber, BuiltinFamily::Chen] {
        let ys: Vec<f64> = path_residuals(which, &steps).iter().map(|r| r.max(1e-300).ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = cov / var;
        ok &= (-1.5..=-0.5).contains(&slope);
        detail.push(format!("{which} {slope:.3} (residual at 1e4 {:.1e})", ys[ys.len() - 1].exp()));
    }
    report(6, "path-integral log-log slope", ok, format!("{} (want [-1.5, -0.5])", detail.join(", ")));
}

fn estimate_builtin(which: BuiltinFamily, x: &[f64]) -> limitfield::field::LimitFieldEstimate {
    let fam = builtin_family(which);
    let cfg = EstimatorConfig::default().with_probes(probes_for(which));
    estimate_limit_field(&fam, x, &cfg).unwrap()
}

#[test]
fn ac07_sin_counterexample() {
    let est = estimate_builtin(BuiltinFamily::OscillatingSin, &[0.5]);
    let lo = est.clusters.iter().map(|c| c.center[0]).fold(f64::INFINITY, f64::min);
    let hi = est.clusters.iter().map(|c| c.center[0]).fold(f64::NEG_INFINITY, f64::max);
    report(7, "sin limit field spans [-1, 1]", lo <= -0.95 && hi >= 0.95, format!("min {lo:.4}, max {hi:.4}"));
}

#[test]
fn ac08_hat_counterexample() {
    let est = estimate_builtin(BuiltinFamily::Hat, &[0.0]);
    let near = est
        .clusters
        .iter()
        .map(|c| (c.center[0] + 1.0).abs())
        .fold(f64::INFINITY, f64::min);
    let cert = criticality_certificate(&est, 1e-6).unwrap();
    report(
        8,
        "hat: -1 in limit field, critical at 0",
        near <= 1e-3 && cert.critical && cert.hull_distance <= 1e-6,
        format!("dist(-1, clusters) {near:.2e}, hull distance {:.2e}", cert.hull_distance),
    );
}

#[test]
fn ac09_chen_counterexample() {
    // Independent recomputation of f'_a(a) for f_a(t) = sqrt(t²+4a²) - sqrt(t²+a²):
    // with t = a this is a/sqrt(5a²) - a/sqrt(2a²).
    let a = 1e-3_f64;
    let witness = a / (5.0 * a * a).sqrt() - a / (2.0 * a * a).sqrt();
    assert!((witness - chen_witness()).abs() < 1e-15);
    assert!((witness + 0.25989).abs() < 1e-5);

    let est = estimate_builtin(BuiltinFamily::Chen, &[0.0]);
    let near = est
        .clusters
        .iter()
        .map(|c| (c.center[0] - witness).abs())
        .fold(f64::INFINITY, f64::min);

    let fam = builtin_family(BuiltinFamily::Chen);
    let target = PiecewiseTarget::for_builtin(BuiltinFamily::Chen).unwrap();
    let cfg = EstimatorConfig::default().with_probes(probes_for(BuiltinFamily::Chen));
    let at_zero = gradient_consistency_scan(&fam, &target, &[(0.0, 0.0)], 0, &[vec![0.0]], &cfg, 1e-3).unwrap();
    let flagged = !at_zero.points[0].consistent;

    let cfg = EstimatorConfig::default();
    let away = gradient_consistency_scan(&fam, &target, &[(-2.0, 2.0)], 20, &[], &cfg, 1e-3).unwrap();
    let nonzero = away.points.iter().all(|p| p.x[0] != 0.0);
    report(
        9,
        "chen witness and consistency",
        near <= 1e-6 && flagged && nonzero && away.fraction_consistent == 1.0,
        format!(
            "dist(witness {witness:.6}, clusters) {near:.2e}, flagged at 0: {flagged}, fraction at 20 x != 0: {}",
            away.fraction_consistent
        ),
    );
}

#[test]
fn ac10_signsqrt_blow_up() {
    let est = estimate_builtin(BuiltinFamily::SignSqrt, &[0.0]);
    let horizontal_ok = est.horizontal.len() == 1 && (est.horizontal[0][0] - 1.0).abs() <= 1e-9;
    report(
        10,
        "signsqrt: empty field, blow-up, horizontal {+1}",
        est.clusters.is_empty() && est.blow_up && horizontal_ok,
        format!(
            "clusters {}, blow_up {}, horizontal {:?}",
            est.clusters.len(),
            est.blow_up,
            est.horizontal
        ),
    );
}

#[test]
fn ac11_two_parameter_failure() {
    let limits = two_param_demo(0.25, &default_param_curves(0.25));
    report(11, "two-parameter limits", limits == vec![0.0, 1.0], format!("{limits:?}"));
}

/// Exact min-norm distance by enumerating every affinely independent subset
/// of at most `d + 1` points and solving the equality-constrained problem on
/// its affine hull.
fn face_enumeration_oracle(pts: &[Vec<f64>]) -> f64 {
    let n = pts.len();
    let d = pts[0].len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let m = idx.len();
        if m > d + 1 {
            continue;
        }
        // [G 1; 1ᵀ 0] [λ; μ] = [0; 1]
        let mut kkt = DMatrix::<f64>::zeros(m + 1, m + 1);
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                kkt[(r, c)] = pts[i].iter().zip(&pts[j]).map(|(u, v)| u * v).sum();
            }
            kkt[(r, m)] = 1.0;
            kkt[(m, r)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(m + 1);
        rhs[m] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if (0..m).any(|r| sol[r] < -1e-12 || !sol[r].is_finite()) {
            continue;
        }
        let point: Vec<f64> = (0..d).map(|k| idx.iter().enumerate().map(|(r, &i)| sol[r] * pts[i][k]).sum()).collect();
        best = best.min(point.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    best
}

/// Smallest norm over convex combinations with weights on the grid `1/res`.
/// Every grid point lies in the hull, so this bounds the true value from
/// above.
fn simplex_grid_oracle(pts: &[Vec<f64>], res: usize) -> f64 {
    fn walk(pts: &[Vec<f64>], i: usize, left: usize, res: usize, acc: &mut Vec<f64>, best: &mut f64) {
        if i + 1 == pts.len() {
            let w = left as f64 / res as f64;
            let n: f64 = acc.iter().zip(&pts[i]).map(|(a, p)| (a + w * p).powi(2)).sum();
            *best = best.min(n.sqrt());
            return;
        }
        for k in 0..=left {
            let w = k as f64 / res as f64;
            for (a, p) in acc.iter_mut().zip(&pts[i]) {
                *a += w * p;
            }
            walk(pts, i + 1, left - k, res, acc, best);
            for (a, p) in acc.iter_mut().zip(&pts[i]) {
                *a -= w * p;
            }
        }
    }
    let mut best = f64::INFINITY;
    walk(pts, 0, res, res, &mut vec![0.0; pts[0].len()], &mut best);
    best
}

#[test]
fn ac12_min_norm_point() {
    let mut r = rng(12);
    let mut worst_face: f64 = 0.0;
    let mut worst_grid: f64 = 0.0;
    let mut certified = true;
    for _ in 0..50 {
        let d = r.random_range(1..=3);
        let n = r.random_range(1..=6);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let mnp = min_norm_point(&PointSet::new(pts.clone()).unwrap(), DEFAULT_TOL);

        worst_face = worst_face.max((mnp.distance - face_enumeration_oracle(&pts)).abs());
        let res = [0, 400, 200, 60, 30, 18, 12][n];
        let g = simplex_grid_oracle(&pts, res);
        certified &= g >= mnp.distance - 1e-12;
        worst_grid = worst_grid.max(g - mnp.distance);

        // Optimality: weights form a convex combination reproducing the point,
        // and <x*, p> >= |x*|² for every generator.
        let wsum: f64 = mnp.weights.iter().sum();
        certified &= mnp.weights.iter().all(|&w| w >= -1e-12) && (wsum - 1.0).abs() <= 1e-9;
        for k in 0..d {
            let rebuilt: f64 = mnp.weights.iter().zip(&pts).map(|(w, p)| w * p[k]).sum();
            certified &= (rebuilt - mnp.point[k]).abs() <= 1e-9;
        }
        let sq: f64 = mnp.point.iter().map(|v| v * v).sum();
        for p in &pts {
            let ip: f64 = p.iter().zip(&mnp.point).map(|(u, v)| u * v).sum();
            certified &= ip >= sq - 1e-9;
        }
    }
    report(
        12,
        "min-norm point vs brute force",
        worst_face <= 1e-3 && certified,
        format!("max |d - faces| {worst_face:.2e}, max grid gap {worst_grid:.2e}, certificates ok: {certified}"),
    );
}

fn nonlipq_grid_minimizer() -> Vec<f64> {
    let fam = builtin_family(BuiltinFamily::NonLipschitzQ);
    let f = |x: &[f64]| fam.target_value(x).unwrap().unwrap();
    let (mut center, mut half) = (vec![0.3, -0.2], 2.0);
    // Zoom a 41 x 41 grid around the incumbent until the cell is below 1e-4.
    while half > 1e-4 {
        let mut best = (f64::INFINITY, center.clone());
        for x0 in grid(center[0] - half, center[0] + half, 41) {
            for x1 in grid(center[1] - half, center[1] + half, 41) {
                let v = f(&[x0, x1]);
                if v < best.0 {
                    best = (v, vec![x0, x1]);
                }
            }
        }
        center = best.1;
        half /= 10.0;
    }
    center
}

#[test]
fn ac13_solver_end_to_end() {
    let abs = builtin_family(BuiltinFamily::AbsHuber);
    let trace = smoothing_solve(&abs, &[3.0], &Schedule::default(), InnerSolver::DescentArmijo).unwrap();
    let abs_ok =
        trace.status == SolverStatus::Converged && trace.final_x[0].abs() <= 1e-3 && trace.records.len() <= 40;

    let q = builtin_family(BuiltinFamily::NonLipschitzQ);
    let oracle = nonlipq_grid_minimizer();
    let qtrace = smoothing_solve(&q, &[1.0, -0.7], &Schedule::default(), InnerSolver::DescentArmijo).unwrap();
    let gap = qtrace
        .final_x
        .iter()
        .zip(&oracle)
        .map(|(u, v)| (u - v).powi(2))
        .sum::<f64>()
        .sqrt();
    report(
        13,
        "solver end to end",
        abs_ok && gap <= 1e-3,
        format!(
            "|x| from 3: x* {:.2e}, {:?} in {} outer; nonlipq gap to grid minimizer {oracle:?}: {gap:.2e}",
            trace.final_x[0],
            trace.status,
            trace.records.len()
        ),
    );
}

#[test]
fn ac14_gradient_consistency_almost_everywhere() {
    let mut ok = true;
    let mut detail = Vec::new();
    // At the kink of |x| every limit lies in [-1, 1]; for the Chen family the
    // witness lies outside the registered set {0}.
    for (which, expect_flag) in [(BuiltinFamily::AbsHuber, false), (BuiltinFamily::Chen, true)] {
        let fam = builtin_family(which);
        let target = PiecewiseTarget::for_builtin(which).unwrap();
        let cfg = EstimatorConfig::default().with_probes(probes_for(which));
        let scan = gradient_consistency_scan(&fam, &target, &[(-2.0, 2.0)], 200, &[vec![0.0]], &cfg, 1e-3).unwrap();
        let random: Vec<_> = scan.points.iter().filter(|p| !p.forced).collect();
        let fraction = random.iter().filter(|p| p.consistent).count() as f64 / random.len() as f64;
        let forced_flagged = scan.points.iter().filter(|p| p.forced).all(|p| !p.consistent);
        ok &= random.len() == 200 && fraction == 1.0 && forced_flagged == expect_flag;
        detail.push(format!("{which}: fraction {fraction}, kink flagged {forced_flagged}"));
    }
    report(14, "gradient consistency a.e.", ok, detail.join("; "));
}

fn run_cli(args: &[&str]) -> Value {
    let out = Command::new(env!("CARGO_BIN_EXE_limitfield"))
        .args(["--seed", "7", "--format", "json"])
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.code().is_some_and(|c| c == 0 || c == 3),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut v: Value = serde_json::from_slice(&out.stdout).unwrap();
    v.as_object_mut().unwrap().remove("metadata");
    v
}

#[test]
fn ac15_cli_reproducible() {
    let commands: [&[&str]; 4] = [
        &["smooth", "absl1", "--points", "11"],
        &["estimate", "chen", "--at", "0"],
        &["solve", "nonlipq", "--x0", "1,-0.7"],
        &["bench", "hat"],
    ];
    let mut ok = true;
    for args in commands {
        let a = serde_json::to_string(&run_cli(args)).unwrap();
        let b = serde_json::to_string(&run_cli(args)).unwrap();
        ok &= a == b;
    }
    report(15, "CLI reproducibility", ok, format!("{} commands run twice", commands.len()));
}
