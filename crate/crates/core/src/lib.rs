//! Simulation and auto-tuning of a five-phase induction motor drive under
//! indirect field-oriented control with finite-state predictive current
//! control.
//!
//! The crate is organised bottom-up: [`transforms`] (inverter and reference
//! frames), [`plant`] (machine model and prediction matrices), [`control`]
//! (speed PI, field orientation, FSMPC), [`sim`] and [`trace`] (closed-loop
//! step tests), [`metrics`] (performance indicators), [`tuner`] (penalised
//! gradient-descent tuning and dataset generation) and [`ann`] (the
//! multilayer-perceptron tuner).

pub mod ann;
pub mod control;
pub mod error;
pub mod metrics;
pub mod plant;
pub mod sim;
pub mod trace;
pub mod transforms;
pub mod tuner;

pub use error::{Error, Result};
