//! Output-only modal identification for flight-flutter accelerometer data.
//!
//! The chain runs from raw channel records to a table of scaled frequencies
//! and damping ratios: maneuver stacking, robust PCA filtering, optimal
//! rank truncation, time-delay embedded exact DMD, sparsity-promoting mode
//! selection, and an optional compressed-sensing front end for limited
//! sensor sets. [`synth`] generates datasets with a known modal table.

pub mod config;
pub mod cs;
pub mod dmd;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod pipeline;
pub mod report;
pub mod rpca;
pub mod sparsity;
pub mod synth;

pub use error::{ModalError, Result};
