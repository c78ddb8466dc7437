//! Search-term nowcasting of regional fertility rates.
//!
//! Regional intensities are correlated against a corpus of term series,
//! a handful of terms are selected, regression models are scored by
//! leave-one-out cross-validation, and the chosen spatial model is applied
//! to national yearly term volumes to predict the fertility trend.

pub mod correlate;
pub mod error;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod regress;
pub mod series;
pub mod synth;
pub mod transfer;

pub use error::{Error, Result};
