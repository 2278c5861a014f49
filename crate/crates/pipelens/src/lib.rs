//! pipelens models ML pipelines as logical query plans, executes them with
//! per-row provenance instrumentation, screens intermediate relations for
//! data distribution bugs, and answers data-centric what-if questions through
//! a multi-query optimizer that shares common subplans across variants.
//!
//! The `examples/` directory walks through each capability; the `pipelens`
//! binary exposes the same functionality as `plan`, `run`, and `whatif`
//! subcommands.

pub mod exec;
pub mod inspect;
pub mod ir;
pub mod model;
pub mod mqo;
pub mod parse;
pub mod whatif;

pub mod cli;
