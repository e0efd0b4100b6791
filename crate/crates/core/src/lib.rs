pub mod akr;
pub mod c60;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod nel;
pub mod parser;
pub mod registry;
pub mod training;
pub mod verbalizer;

pub use error::{Error, ErrorClass};
