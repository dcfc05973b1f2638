pub mod aggregate;
pub mod analyze;
pub mod bench;
pub mod corpus;
pub mod error;
pub mod model_qe;
pub mod model_uom;
pub mod pipeline;
pub mod rules;
pub mod synthgen;
pub mod tagger;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
