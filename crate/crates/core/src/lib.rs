pub mod backbones;
pub mod data;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod heap;
mod io;
pub mod losses;
pub mod rng;
pub mod sampler;
pub mod tensor;
pub mod trainer;

pub use backbones::{BackboneKind, ExtractorConfig, ModelState};
pub use error::{Error, Result};
pub use sampler::{SamplerConfig, Scenario};
pub use tensor::{Tape, Tensor, Var};
