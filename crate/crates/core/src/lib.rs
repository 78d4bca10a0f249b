pub mod error;
pub mod geometry;
pub mod math;
pub mod reflectance;

pub use error::{Error, Result};
pub mod lighting;
pub mod texture;
pub mod uv_atlas;
pub mod grad;
pub mod io;
pub mod optim;
pub mod renderer;
pub mod shapes;
pub mod harness;
