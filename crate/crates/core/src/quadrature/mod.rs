pub mod chebyshev;
pub mod engine;
pub mod terms;
