//! Grade prediction from a student's prior courses.
//!
//! The crate covers the whole pipeline: ingesting transcripts, row-centering
//! grades, chronological splits, the NAK attention model with its MF, CSR and
//! KRM baselines, AdaGrad training with grid search, RMSE and tick-accuracy
//! evaluation, and a synthetic transcript generator with planted
//! prerequisites.
//!
//! ```
//! use nak::activations::sparsemax;
//!
//! let p = sparsemax(&[1.0, 0.5, -2.0]);
//! assert_eq!(p.values(), &[0.75, 0.25, 0.0]);
//! ```

pub mod activations;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod grades;
pub mod ids;
pub mod models;
pub mod synth;
pub mod training;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grades.md")]
    mod grades {}
    #[doc = include_str!("../../../book/src/attention.md")]
    mod attention {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use grades::GradeScale;
pub use models::{GradeModel, Model, ModelKind};
pub use training::TrainConfig;
