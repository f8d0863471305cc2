pub mod baselines;
pub mod cli;
pub mod convstack;
pub mod data;
pub mod error;
pub mod forward;
pub mod imageio;
pub mod linalg;
pub mod metrics;
pub mod regularizer;
pub mod solvers;
pub mod spline;
pub mod training;
