//! The curated families used throughout the test and bench suites.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ExprBuilder, ExprError, Rational, ScalarMap, SmoothingFamily};
use crate::kernels::{build_envelope, AffinePiece, KernelKind, MaxFunction, SmoothScalarKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BuiltinFamily {
    /// `a sin(x / a)`, target `F ≡ 0`.
    OscillatingSin,
    /// `max(0, a - |x|)`, target `F ≡ 0`.
    Hat,
    /// `2 s_a(t) - s_a(2t)` with `s_a` the square-root smoothing of
    /// `max(0, t)`; target `2 max(0, t) - max(0, 2t) ≡ 0`.
    Chen,
    /// `sqrt(x + a)` for `x > 0`, `2 sqrt(a) - sqrt(a - x)` otherwise; target
    /// `sign(x) sqrt(|x|)`.
    SignSqrt,
    /// Huber smoothing of `|x|`.
    AbsHuber,
    /// Uniform-kernel smoothing of `max(0, t, 2t - 1)`.
    MaxFiniteDemo,
    /// `‖x‖² + s_a(x₁)^{1/2}` on `ℝ²` with `s_a` the Huber smoothing of `|·|`.
    NonLipschitzQ,
}

impl BuiltinFamily {
    pub const ALL: [BuiltinFamily; 7] = [
        BuiltinFamily::OscillatingSin,
        BuiltinFamily::Hat,
        BuiltinFamily::Chen,
        BuiltinFamily::SignSqrt,
        BuiltinFamily::AbsHuber,
        BuiltinFamily::MaxFiniteDemo,
        BuiltinFamily::NonLipschitzQ,
    ];

    /// Short CLI name.
    pub fn name(self) -> &'static str {
        match self {
            BuiltinFamily::OscillatingSin => "sin",
            BuiltinFamily::Hat => "hat",
            BuiltinFamily::Chen => "chen",
            BuiltinFamily::SignSqrt => "signsqrt",
            BuiltinFamily::AbsHuber => "absl1",
            BuiltinFamily::MaxFiniteDemo => "maxfinite",
            BuiltinFamily::NonLipschitzQ => "nonlipq",
        }
    }
}

impl fmt::Display for BuiltinFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinFamily {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        Ok(match key.as_str() {
            "sin" | "oscillatingsin" => BuiltinFamily::OscillatingSin,
            "hat" => BuiltinFamily::Hat,
            "chen" => BuiltinFamily::Chen,
            "signsqrt" => BuiltinFamily::SignSqrt,
            "absl1" | "abs" | "abshuber" | "huberabs" => BuiltinFamily::AbsHuber,
            "maxfinite" | "maxfinitedemo" => BuiltinFamily::MaxFiniteDemo,
            "nonlipq" | "nonlipschitzq" => BuiltinFamily::NonLipschitzQ,
            _ => return Err(ExprError::UnknownBuiltin(s.to_owned())),
        })
    }
}

/// `max(0, t, 2t - 1)`.
pub(crate) fn three_piece_max() -> MaxFunction {
    build_envelope(&[
        AffinePiece::new(0.0, 0.0),
        AffinePiece::new(1.0, 0.0),
        AffinePiece::new(2.0, -1.0),
    ])
    .expect("finite pieces")
}

fn one() -> Rational {
    Rational::new(1, 1).expect("valid")
}

fn half() -> Rational {
    Rational::new(1, 2).expect("valid")
}

pub fn builtin_family(which: BuiltinFamily) -> SmoothingFamily {
    build(which).expect("builtin families are well-formed")
}

fn build(which: BuiltinFamily) -> Result<SmoothingFamily, ExprError> {
    let zero_target = || {
        let mut t = ExprBuilder::new(1);
        let z = t.constant(0.0);
        t.build(z)
    };
    let fam = match which {
        BuiltinFamily::OscillatingSin => {
            let mut b = ExprBuilder::new(1);
            let x = b.var(0);
            let a = b.param();
            let q = b.div(x, a);
            let s = b.sin(q);
            let root = b.mul(a, s);
            SmoothingFamily::new(b.build(root)?, 1.0)?
                .with_uniform_lipschitz(1.0)
                .with_oscillatory(true)
                .with_target(zero_target()?)?
        }
        BuiltinFamily::Hat => {
            let mut b = ExprBuilder::new(1);
            let x = b.var(0);
            let a = b.param();
            let ax = b.abs_pow(one(), x);
            let d = b.sub(a, ax);
            let root = b.max_exact(MaxFunction::plus(), d);
            SmoothingFamily::new(b.build(root)?, 1.0)?
                .with_uniform_lipschitz(1.0)
                .with_target(zero_target()?)?
        }
        BuiltinFamily::Chen => {
            let mut b = ExprBuilder::new(1);
            let x = b.var(0);
            let s1 = b.kernel(SmoothScalarKernel::SqrtPlus, x);
            let x2 = b.dot(vec![2.0], vec![x]);
            let s2 = b.kernel(SmoothScalarKernel::SqrtPlus, x2);
            let root = b.dot(vec![2.0, -1.0], vec![s1, s2]);

            let mut t = ExprBuilder::new(1);
            let x = t.var(0);
            let p1 = t.max_exact(MaxFunction::plus(), x);
            let x2 = t.dot(vec![2.0], vec![x]);
            let p2 = t.max_exact(MaxFunction::plus(), x2);
            let troot = t.dot(vec![2.0, -1.0], vec![p1, p2]);
            SmoothingFamily::new(b.build(root)?, 1.0)?
                .with_uniform_lipschitz(2.0)
                .with_target(t.build(troot)?)?
        }
        BuiltinFamily::SignSqrt => {
            let mut b = ExprBuilder::new(1);
            let x = b.var(0);
            let a = b.param();
            let xa = b.add(x, a);
            let right = b.sqrt(xa);
            let sa = b.sqrt(a);
            let ax = b.sub(a, x);
            let sax = b.sqrt(ax);
            let left = b.dot(vec![2.0, -1.0], vec![sa, sax]);
            let root = b.branch(x, right, left);

            let mut t = ExprBuilder::new(1);
            let x = t.var(0);
            let sx = t.sqrt(x);
            let nx = t.neg(x);
            let snx = t.sqrt(nx);
            let neg = t.neg(snx);
            let troot = t.branch(x, sx, neg);
            SmoothingFamily::new(b.build(root)?, 1.0)?.with_target(t.build(troot)?)?
        }
        BuiltinFamily::AbsHuber => {
            let mut b = ExprBuilder::new(1);
            let x = b.var(0);
            let root = b.kernel(SmoothScalarKernel::HuberAbs, x);
            let mut t = ExprBuilder::new(1);
            let x = t.var(0);
            let troot = t.abs_pow(one(), x);
            SmoothingFamily::new(b.build(root)?, 1.0)?
                .with_uniform_lipschitz(1.0)
                .with_target(t.build(troot)?)?
        }
        BuiltinFamily::MaxFiniteDemo => {
            let mut b = ExprBuilder::new(1);
            let x = b.var(0);
            let root = b.kernel(
                SmoothScalarKernel::ConvMax {
                    pieces: three_piece_max(),
                    density: KernelKind::Uniform,
                },
                x,
            );
            let mut t = ExprBuilder::new(1);
            let x = t.var(0);
            let troot = t.max_exact(three_piece_max(), x);
            SmoothingFamily::new(b.build(root)?, 1.0)?
                .with_uniform_lipschitz(2.0)
                .with_target(t.build(troot)?)?
        }
        BuiltinFamily::NonLipschitzQ => {
            let mut b = ExprBuilder::new(2);
            let x1 = b.var(0);
            let x2 = b.var(1);
            let s1 = b.apply(ScalarMap::Square, x1);
            let s2 = b.apply(ScalarMap::Square, x2);
            let h = b.kernel(SmoothScalarKernel::HuberAbs, x1);
            let r = b.pow(half(), h);
            let root = b.dot(vec![1.0, 1.0, 1.0], vec![s1, s2, r]);

            let mut t = ExprBuilder::new(2);
            let x1 = t.var(0);
            let x2 = t.var(1);
            let s1 = t.apply(ScalarMap::Square, x1);
            let s2 = t.apply(ScalarMap::Square, x2);
            let r = t.abs_pow(half(), x1);
            let troot = t.dot(vec![1.0, 1.0, 1.0], vec![s1, s2, r]);
            SmoothingFamily::new(b.build(root)?, 1.0)?.with_target(t.build(troot)?)?
        }
    };
    Ok(fam.with_name(which.name()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse_back() {
        for b in BuiltinFamily::ALL {
            assert_eq!(b.name().parse::<BuiltinFamily>().unwrap(), b);
            assert_eq!(format!("{b:?}").parse::<BuiltinFamily>().unwrap(), b);
        }
        assert!(matches!("nope".parse::<BuiltinFamily>(), Err(ExprError::UnknownBuiltin(_))));
    }

    #[test]
    fn sign_sqrt_target() {
        let fam = builtin_family(BuiltinFamily::SignSqrt);
        let f = |x: f64| fam.target_value(&[x]).unwrap().unwrap();
        assert_eq!(f(4.0), 2.0);
        assert_eq!(f(-9.0), -3.0);
        assert_eq!(f(0.0), 0.0);
    }

    #[test]
    fn sign_sqrt_is_continuous_at_zero() {
        let fam = builtin_family(BuiltinFamily::SignSqrt);
        let a = 0.3;
        let l = fam.eval(&[-1e-12], a).unwrap();
        let r = fam.eval(&[1e-12], a).unwrap();
        assert!((l - r).abs() < 1e-11);
        let gl = fam.grad(&[-1e-12], a).unwrap()[0];
        let gr = fam.grad(&[1e-12], a).unwrap()[0];
        assert!((gl - gr).abs() < 1e-10);
    }
}
