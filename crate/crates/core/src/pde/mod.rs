//! Spectral solver and continuation for the mean-field system on the flat torus.

pub mod continuation;
pub mod grid;
pub mod measure;
pub mod solver;

pub use continuation::{continue_ray, ContinuationControls, ContinuationRecord, ContinuationRun, StopReason};
pub use grid::TorusGrid;
pub use measure::{measure, MeasureSettings, Measurement};
pub use solver::{newton_solve, residual, FieldState, MeanFieldProblem, NewtonControls, Ray};
