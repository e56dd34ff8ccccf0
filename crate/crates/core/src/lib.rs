pub mod blob;
pub mod caption_decoder;
pub mod encoders;
pub mod error;
pub mod harness;
pub mod nn;
pub mod numeric_embedding;
pub mod objectives;
pub mod optim;
pub mod param_corpus;
pub mod text_branch;
pub mod video_branch;

pub use error::{Error, Result};
