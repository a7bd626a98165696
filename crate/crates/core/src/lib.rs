//! Predicting whether a volunteer annotator stays engaged for more than
//! `gamma` further annotations in the current session.
//!
//! The pipeline: [`ingest`] event logs, split them into sessions with the
//! [`sessionizer`], build sliding-window datasets with the [`featurizer`],
//! train one of the [`models`] (built on the [`nn`] core, plus a random
//! forest), and score them with forward-chaining AUC in [`evaluation`].
//! [`synth`] generates seeded logs for running everything without real data.

pub mod error;
pub mod evaluation;
pub mod featurizer;
pub mod ingest;
pub mod models;
pub mod nn;
pub mod seed;
pub mod sessionizer;
pub mod synth;

pub use error::{Error, Result};
