//! Lindblad generator, propagation and stationary states.

mod evolve;
mod grid;
mod liouvillian;
mod steady;

pub use evolve::{
    ancilla_bloch, evolve, evolve_coefficients, from_coefficients, probe_bloch, real_expm,
    real_generator, reduce_ancilla, reduce_probe, to_coefficients, Coeffs, EvolutionDiagnostics,
    Propagator, Real16, TraceMonitor, TrajectoryGrid, RENORMALIZE_THRESHOLD, TRAJECTORY_TOL,
};
pub use grid::{Spacing, TimeGrid, DEFAULT_LOG_START, DEFAULT_POINTS, LOG_GRID_THRESHOLD};
pub use liouvillian::{
    ancilla_jump_operators, build_liouvillian, commutator_superop, dissipator_superop,
    liouvillian_derivative, trace_row_residual, Liouvillian,
};
pub use steady::{steady_state, steady_state_derivative, DEGENERACY_TOL};
