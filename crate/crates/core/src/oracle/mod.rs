//! Reference prices computed independently of the PDE solver.

pub mod cf;
pub mod mc;
pub mod quadrature;

pub use cf::{characteristic_function, heston_cf_call};
pub use mc::{mc_price, McConfig, McEstimate};
