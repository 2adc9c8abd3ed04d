//! Simulation, time-frequency analysis and multiclass classification of
//! high-frequency oscillations (HFOs) in intracranial EEG.

#[cfg(feature = "cli")]
pub mod cli;
pub mod convnet;
pub mod ecoc;
pub mod error;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod simgen;
pub mod svm;
pub mod tfr;

pub use error::{Error, Result};
