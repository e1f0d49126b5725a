pub mod geometry;
pub mod harmonic;
pub mod kernels;
pub mod operator;

pub use geometry::{DomainGeometry, Point};
pub use operator::{Diffusion, JumpKernel, OperatorModel};
