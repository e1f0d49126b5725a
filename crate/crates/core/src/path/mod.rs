pub mod ensemble;
pub mod estimators;
pub mod sampler;

pub use ensemble::{McConfig, Moments};
pub use estimators::EstimatorResult;
pub use sampler::{PathSample, Scheme, SchemeOptions};
