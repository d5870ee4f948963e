pub mod annotate;
pub mod benchmark;
pub mod biaseval;
pub mod corpus;
pub mod debias;
pub mod embed;
pub mod endpoint;
pub mod error;
pub mod represent;
pub mod trainlin;

pub use error::{EndpointError, Error, Result, SchemaProblem};
