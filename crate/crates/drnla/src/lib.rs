//! Rewrites nonlinear integer branch conditions into equivalent Boolean
//! combinations of linear constraints, validated against the program itself.
//!
//! The pipeline: parse and normalize a program ([`lang`]), sample executions
//! to learn candidate linear invariants on both sides of each nonlinear
//! branch ([`interp`], [`learn`]), then refine the candidate pair against a
//! checked instrumentation of the program until no disagreement remains
//! ([`validate`], [`refine`]). Exact polyhedral reasoning lives in
//! [`polylib`]; the candidate formula language in [`constraints`].

pub mod constraints;
pub mod interp;
pub mod lang;
pub mod learn;
pub mod polylib;
pub mod refine;
pub mod validate;
