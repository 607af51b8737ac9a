//! NetQIR: an intermediate representation for distributed quantum programs.
//!
//! Programs are SPMD modules in an LLVM-like text form. Every rank runs the
//! same entry function and distribution is expressed with `__netqir__*`
//! intrinsics over communicators. The crate covers the IR itself
//! ([`ir`], [`parser`], [`builder`]), protocol lowering ([`lowering`]), the
//! communication cost model ([`topology`]) and a state-vector simulator
//! ([`sim`]) used to check lowered programs against monolithic execution.

pub mod ir;
pub mod parser;
pub mod builder;
pub mod topology;
pub mod lowering;
pub mod sim;
