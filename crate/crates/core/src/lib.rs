//! Risk-stratified cohort rebalancing for Cox survival models.

pub mod cohort;
pub mod cox;
pub mod error;
pub mod km;
pub mod matching;
pub mod pipeline;
pub mod predictor;
pub mod smote;
pub mod stratify;
pub mod synth;
pub mod validation;

pub use error::{Error, Result};
