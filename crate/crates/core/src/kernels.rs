//! Smoothing kernels for finite max-functions and the absolute value.
//!
//! A finite max-function `p(t) = max_i (slope_i * t + intercept_i)` is stored
//! as its upper envelope. Convolving it with a compactly supported density
//! `ϱ` gives the smoothing `s_{p,a}(t) = ∫ p(t - a u) ϱ(u) du`, which for the
//! piecewise-linear densities here is piecewise polynomial in `t` and is
//! evaluated exactly by splitting the integration range at the mapped
//! breakpoints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::adaptive_simpson;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("empty max-function")]
    EmptyMaxFunction,
    #[error("parameter must be positive (got {0})")]
    NonPositiveParameter(f64),
    #[error("non-finite affine piece ({slope}, {intercept})")]
    NonFinitePiece { slope: f64, intercept: f64 },
    #[error("kernel density failed its quadrature check: {0}")]
    BadDensity(String),
}

/// One affine piece `t ↦ slope * t + intercept`.
///
/// Serialized as a `[slope, intercept]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct AffinePiece {
    pub slope: f64,
    pub intercept: f64,
}

impl AffinePiece {
    pub fn new(slope: f64, intercept: f64) -> Self {
        Self { slope, intercept }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.slope * t + self.intercept
    }
}

impl From<[f64; 2]> for AffinePiece {
    fn from(p: [f64; 2]) -> Self {
        Self::new(p[0], p[1])
    }
}

impl From<AffinePiece> for [f64; 2] {
    fn from(p: AffinePiece) -> Self {
        [p.slope, p.intercept]
    }
}

/// Upper envelope of a finite family of affine pieces.
///
/// `pieces` are the active pieces sorted by strictly increasing slope and
/// `breakpoints[i]` is where `pieces[i]` hands over to `pieces[i + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AffinePiece>", into = "Vec<AffinePiece>")]
pub struct MaxFunction {
    pieces: Vec<AffinePiece>,
    breakpoints: Vec<f64>,
}

impl TryFrom<Vec<AffinePiece>> for MaxFunction {
    type Error = KernelError;

    fn try_from(pieces: Vec<AffinePiece>) -> Result<Self, Self::Error> {
        build_envelope(&pieces)
    }
}

impl From<MaxFunction> for Vec<AffinePiece> {
    fn from(p: MaxFunction) -> Self {
        p.pieces
    }
}

/// Builds the upper envelope by sorting on slope and sweeping with a stack.
pub fn build_envelope(pieces: &[AffinePiece]) -> Result<MaxFunction, KernelError> {
    if pieces.is_empty() {
        return Err(KernelError::EmptyMaxFunction);
    }
    if let Some(p) = pieces
        .iter()
        .find(|p| !p.slope.is_finite() || !p.intercept.is_finite())
    {
        return Err(KernelError::NonFinitePiece {
            slope: p.slope,
            intercept: p.intercept,
        });
    }

    let mut sorted = pieces.to_vec();
    // Equal slopes: larger intercept first so the dedup below keeps it.
    sorted.sort_by(|l, r| {
        l.slope
            .total_cmp(&r.slope)
            .then(r.intercept.total_cmp(&l.intercept))
    });
    sorted.dedup_by(|later, earlier| later.slope == earlier.slope);

    let mut stack: Vec<AffinePiece> = Vec::with_capacity(sorted.len());
    for line in sorted {
        while stack.len() >= 2 {
            let l1 = stack[stack.len() - 2];
            let l2 = stack[stack.len() - 1];
            // l2 is useless when l3 overtakes l1 no later than l2 does:
            // x(l1,l3) <= x(l1,l2), cross-multiplied (denominators positive).
            let lhs = (l1.intercept - line.intercept) * (l2.slope - l1.slope);
            let rhs = (l1.intercept - l2.intercept) * (line.slope - l1.slope);
            if lhs <= rhs {
                stack.pop();
            } else {
                break;
            }
        }
        stack.push(line);
    }

    let breakpoints = stack
        .windows(2)
        .map(|w| (w[0].intercept - w[1].intercept) / (w[1].slope - w[0].slope))
        .collect();
    Ok(MaxFunction {
        pieces: stack,
        breakpoints,
    })
}

impl MaxFunction {
    /// `max(0, t)`.
    pub fn plus() -> Self {
        build_envelope(&[AffinePiece::new(0.0, 0.0), AffinePiece::new(1.0, 0.0)])
            .expect("two finite pieces")
    }

    /// `|t|`.
    pub fn abs() -> Self {
        build_envelope(&[AffinePiece::new(-1.0, 0.0), AffinePiece::new(1.0, 0.0)])
            .expect("two finite pieces")
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Index of the envelope piece that is active at `t` (the right one at a
    /// breakpoint).
    #[inline]
    pub fn piece_index(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= t)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.pieces[self.piece_index(t)].eval(t)
    }

    /// Slope at `t`, or `None` when `t` sits exactly on a breakpoint.
    pub fn slope_at(&self, t: f64) -> Option<f64> {
        if self.breakpoints.binary_search_by(|b| b.total_cmp(&t)).is_ok() {
            None
        } else {
            Some(self.pieces[self.piece_index(t)].slope)
        }
    }

    /// Slopes of every envelope piece whose value at `t` is within `tol`
    /// (relative to `1 + |p(t)|`) of the maximum.
    pub fn active_slopes(&self, t: f64, tol: f64) -> Vec<f64> {
        let top = self.eval(t);
        let band = tol * (1.0 + top.abs());
        self.pieces
            .iter()
            .filter(|p| top - p.eval(t) <= band)
            .map(|p| p.slope)
            .collect()
    }
}

/// Pointwise evaluation of a max-function.
pub fn eval_max(p: &MaxFunction, t: f64) -> f64 {
    p.eval(t)
}

/// Largest absolute slope on the envelope, i.e. the Lipschitz constant of `p`
/// and of every `s_{p,a}`.
pub fn lipschitz_bound(p: &MaxFunction) -> f64 {
    p.pieces.iter().map(|q| q.slope.abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `ϱ = 1` on `[-1/2, 1/2]`.
    Uniform,
    /// `ϱ(u) = 1 - |u|` on `[-1, 1]`.
    Triangular,
}

/// A symmetric, compactly supported probability density with its first
/// absolute moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    kind: KernelKind,
    half_width: f64,
    abs_moment: f64,
}

impl Kernel {
    /// Builds the kernel and checks symmetry, unit mass and the first absolute
    /// moment by quadrature.
    pub fn new(kind: KernelKind) -> Result<Self, KernelError> {
        let half_width = match kind {
            KernelKind::Uniform => 0.5,
            KernelKind::Triangular => 1.0,
        };
        let k = Kernel {
            kind,
            half_width,
            abs_moment: 0.0,
        };
        let density = |u: f64| k.density(u);
        // Integrate each half separately so the kink at 0 is a node.
        let mass = adaptive_simpson(&density, -half_width, 0.0, 1e-13)
            + adaptive_simpson(&density, 0.0, half_width, 1e-13);
        if (mass - 1.0).abs() > 1e-9 {
            return Err(KernelError::BadDensity(format!("mass {mass}")));
        }
        for i in 0..=16 {
            let u = half_width * i as f64 / 16.0;
            if k.density(u) != k.density(-u) {
                return Err(KernelError::BadDensity(format!("asymmetric at {u}")));
            }
        }
        let abs_moment = 2.0 * adaptive_simpson(&|u: f64| u * density(u), 0.0, half_width, 1e-13);
        Ok(Kernel { abs_moment, ..k })
    }

    pub fn uniform() -> Self {
        Self::new(KernelKind::Uniform).expect("uniform density is valid")
    }

    pub fn triangular() -> Self {
        Self::new(KernelKind::Triangular).expect("triangular density is valid")
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// `∫ |u| ϱ(u) du`.
    pub fn abs_moment(&self) -> f64 {
        self.abs_moment
    }

    pub fn density(&self, u: f64) -> f64 {
        if u.abs() > self.half_width {
            return 0.0;
        }
        match self.kind {
            KernelKind::Uniform => 1.0,
            KernelKind::Triangular => 1.0 - u.abs(),
        }
    }

    /// Interior knots of the density including the support ends.
    fn knots(&self) -> &'static [f64] {
        match self.kind {
            KernelKind::Uniform => &[-0.5, 0.5],
            KernelKind::Triangular => &[-1.0, 0.0, 1.0],
        }
    }

    /// Density on the smooth cell containing `u`, as `(c0, c1)` with
    /// `ϱ = c0 + c1 u`.
    fn linear_coeffs(&self, u: f64) -> (f64, f64) {
        match self.kind {
            KernelKind::Uniform => (1.0, 0.0),
            KernelKind::Triangular if u < 0.0 => (1.0, 1.0),
            KernelKind::Triangular => (1.0, -1.0),
        }
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Self::uniform()
    }
}

fn check_param(a: f64) -> Result<(), KernelError> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(KernelError::NonPositiveParameter(a))
    }
}

/// Exact value and derivative of `s_{p,a}(t) = ∫ p(t - a u) ϱ(u) du`.
pub fn conv_smooth(p: &MaxFunction, k: &Kernel, t: f64, a: f64) -> Result<(f64, f64), KernelError> {
    check_param(a)?;
    let h = k.half_width();

    // Cell boundaries in u: kernel knots and the images u = (t - b) / a of
    // the breakpoints that fall inside the support.
    let mut cuts: Vec<f64> = k.knots().to_vec();
    cuts.extend(
        p.breakpoints()
            .iter()
            .map(|&b| (t - b) / a)
            .filter(|u| u.abs() < h),
    );
    cuts.sort_by(f64::total_cmp);

    let mut value = 0.0;
    let mut deriv = 0.0;
    for w in cuts.windows(2) {
        let (u0, u1) = (w[0], w[1]);
        if u1 <= u0 {
            continue;
        }
        let um = 0.5 * (u0 + u1);
        let piece = p.pieces()[p.piece_index(t - a * um)];
        // p(t - a u) = alpha + beta u on this cell.
        let alpha = piece.eval(t);
        let beta = -a * piece.slope;
        let (c0, c1) = k.linear_coeffs(um);
        let d1 = u1 - u0;
        let d2 = 0.5 * (u1 * u1 - u0 * u0);
        let d3 = (u1 * u1 * u1 - u0 * u0 * u0) / 3.0;
        value += alpha * c0 * d1 + (alpha * c1 + beta * c0) * d2 + beta * c1 * d3;
        deriv += piece.slope * (c0 * d1 + c1 * d2);
    }
    Ok((value, deriv))
}

/// Smooth scalar kernels usable as expression nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothScalarKernel {
    /// Uniform-density smoothing of `max(0, t)`.
    HuberPlus,
    /// `(t + sqrt(t² + 4a²)) / 2`.
    SqrtPlus,
    /// `a ln(1 + e^{t/a})`.
    SoftPlus,
    /// `|t|` outside `[-a, a]`, `t²/(2a) + a/2` inside.
    HuberAbs,
    /// `sqrt(t² + 4a²)`, i.e. `2 SqrtPlus(t) - t`.
    SqrtAbs,
    /// Convolution smoothing of an arbitrary max-function.
    ConvMax {
        pieces: MaxFunction,
        density: KernelKind,
    },
}

impl SmoothScalarKernel {
    /// Value and derivative in `t` at parameter `a`.
    pub fn eval(&self, t: f64, a: f64) -> Result<(f64, f64), KernelError> {
        closed_form_kernel(self, t, a)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::HuberPlus => "huber_plus",
            Self::SqrtPlus => "sqrt_plus",
            Self::SoftPlus => "soft_plus",
            Self::HuberAbs => "huber_abs",
            Self::SqrtAbs => "sqrt_abs",
            Self::ConvMax { .. } => "conv_max",
        }
    }

    /// The nonsmooth function this kernel smooths.
    pub fn limit(&self) -> MaxFunction {
        match self {
            Self::HuberPlus | Self::SqrtPlus | Self::SoftPlus => MaxFunction::plus(),
            Self::HuberAbs | Self::SqrtAbs => MaxFunction::abs(),
            Self::ConvMax { pieces, .. } => pieces.clone(),
        }
    }
}

/// Value and exact derivative of a named smoothing kernel.
pub fn closed_form_kernel(
    kind: &SmoothScalarKernel,
    t: f64,
    a: f64,
) -> Result<(f64, f64), KernelError> {
    check_param(a)?;
    let out = match kind {
        SmoothScalarKernel::HuberPlus => {
            if t.abs() >= 0.5 * a {
                if t > 0.0 {
                    (t, 1.0)
                } else {
                    (0.0, 0.0)
                }
            } else {
                (t * t / (2.0 * a) + 0.5 * t + a / 8.0, t / a + 0.5)
            }
        }
        SmoothScalarKernel::SqrtPlus => {
            let r = t.hypot(2.0 * a);
            (0.5 * (t + r), 0.5 * (1.0 + t / r))
        }
        SmoothScalarKernel::SoftPlus => {
            let z = t / a;
            if z > 30.0 {
                let e = (-z).exp();
                (t + a * e, 1.0 - e)
            } else {
                (a * z.exp().ln_1p(), 1.0 / (1.0 + (-z).exp()))
            }
        }
        SmoothScalarKernel::HuberAbs => {
            if t.abs() > a {
                (t.abs(), t.signum())
            } else {
                (t * t / (2.0 * a) + 0.5 * a, t / a)
            }
        }
        SmoothScalarKernel::SqrtAbs => {
            let r = t.hypot(2.0 * a);
            (r, t / r)
        }
        SmoothScalarKernel::ConvMax { pieces, density } => {
            conv_smooth(pieces, &Kernel::new(*density)?, t, a)?
        }
    };
    Ok(out)
}
