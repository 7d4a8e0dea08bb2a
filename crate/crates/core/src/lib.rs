//! Critically-damped Langevin diffusion generative models with an optional
//! position-noise regularizer.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! * [`kinetics`]: closed-form 2×2 block algebra of the forward process.
//! * [`forward_oracle`]: exact forward sampling and analytic Gaussian-mixture scores.
//! * [`score_net`]: a small MLP score model with hand-written backprop and Adam.
//! * [`training`]: hybrid score matching.
//! * [`sampling`]: Euler–Maruyama and exponential-splitting backward samplers.
//! * [`theory`]: computable constants of the Wasserstein error bounds.
//! * [`datasets`], [`metrics`], [`config`]: benchmarks, sliced W2, run configs.

pub mod config;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod forward_oracle;
pub mod kinetics;
pub mod metrics;
pub mod rng;
pub mod sampling;
pub mod score_net;
pub mod theory;
pub mod training;

pub use error::{Error, Result};
pub use forward_oracle::PhaseEnsemble;
pub use kinetics::{Block2, KineticParams, Schedule};
