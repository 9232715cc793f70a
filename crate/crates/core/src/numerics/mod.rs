//! Special functions, quadrature, and random sampling shared by the rest of
//! the crate.

pub mod quadrature;
pub mod random;
pub mod special;

pub use quadrature::{integrate, integrate_with_breaks, Estimate, Tolerance};
pub use random::{gamma_sample, GammaSampler, RandomStream};
pub use special::{ln_gamma, normal_pdf, q_func, q_inv, unit_gamma_pdf, upper_gamma_reg};
