//! Steady states of controlled discrete maps `x_{k+1} = f(x_k, α)`:
//! continuation of stable paths, domain-of-attraction estimates via the
//! Lyapunov series `V(x) = Σₖ ‖fᵏ(x) − φ(α)‖²`, and planning of finite
//! sequences of control maneuvers between two stable steady states.

pub mod basin;
pub mod cli;
pub mod continuation;
pub mod error;
pub mod map;
pub mod planner;
pub mod systems;

pub use error::{Error, Result};
