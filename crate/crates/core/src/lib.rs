//! Probe-ancilla open-system simulator with a thermal Markovian bath on the
//! ancilla: Lindblad dynamics, Fisher information, information backflow and
//! closed-form steady-state sensitivities.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod nonmarkov;
pub mod state;

pub use error::{Error, Result};
pub use model::{InteractionKind, SystemParams};
pub use state::{BlochVector, DensityMatrix};
