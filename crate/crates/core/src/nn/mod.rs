//! Reverse-mode differentiation over dense SiLU networks, Adam, and a
//! finite-difference gradient oracle.

pub mod activation;
mod adam;
pub mod gradcheck;
mod mlp;
mod params;
mod tape;

pub use activation::{sigmoid, silu, silu_prime, silu_second, softplus};
pub use adam::AdamState;
pub use gradcheck::{check as gradcheck, GradCheckReport};
pub use mlp::{grad_of_input_grad, mlp_forward, Mlp, MlpPass, MlpTrace};
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Slot, Tape, Var};
