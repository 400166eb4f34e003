//! Blom key pre-distribution with directed channel keys.
//!
//! * [`modmath`]: residues of `Z_p` / `Z_{p-1}`, primes, polynomials.
//! * [`classic`]: the symmetric Blom baseline.
//! * [`simplex`]: per-direction keys `K(i -> j) = r_j^{h(r_i)}`.
//! * [`kdc`]: provisioning service, channel policy and sealed message streams.
//! * [`attacks`]: brute-force and collusion verifiers for toy parameters.

pub mod attacks;
pub mod classic;
pub mod encoding;
pub mod error;
pub mod kdc;
pub mod modmath;
pub mod simplex;

pub use error::{Error, Result};
