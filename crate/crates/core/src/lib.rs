//! Smoothing methods for nonsmooth objectives and numerical estimation of the
//! gradient-limit field `D_F` of a smoothing family.

pub mod bench;
pub mod clarke;
pub mod cli;
pub mod expr;
pub mod field;
pub mod hull;
pub mod kernels;
pub mod quad;
pub mod solver;
