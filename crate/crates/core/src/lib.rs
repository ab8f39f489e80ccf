//! Lexical and syntactic surprisal from a joint next-word / supertag model,
//! and the regression machinery that turns surprisal into reading-time
//! predictions for garden-path sentences.

pub mod corpus;
pub mod error;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod stats;
pub mod regression;
pub mod surprisal;
pub mod synthetic;
pub mod toy;

pub use error::{Error, Result};
