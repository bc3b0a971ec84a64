pub mod annotation;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod run;
pub mod seed;
pub mod task;
pub mod training;

pub use error::{Error, Result};
pub use task::{Label, Task};
