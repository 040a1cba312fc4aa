//! Merging of two star-schema data warehouses.

pub mod dimension_merge;
pub mod error;
pub mod generator;
pub mod hierarchy_merge;
pub mod io;
pub mod matching;
pub mod model;
pub mod report;
pub mod star_merge;

pub use error::MergeError;
