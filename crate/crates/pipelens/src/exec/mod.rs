//! Plan execution: CSV loading, operator kernels, featurization, synthetic
//! corruption, and the instrumented interpreter.

pub mod corrupt;
pub mod csv;
pub mod encoders;
pub mod engine;
pub mod ops;
pub mod split;

pub use engine::{ExecError, ExecutionTrace, Executor, NodeOutput};
