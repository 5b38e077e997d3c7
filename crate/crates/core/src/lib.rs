//! Simulator for the encoding-encryption pipeline with a coset (wire-tap)
//! pre-encoder: data and fresh randomness are coset-encoded, protected by an
//! error-correcting code, XORed with a keystream and sent over a binary
//! symmetric channel. The crate models passive and noise-injecting
//! adversaries and measures how much uncertainty about the keystream and the
//! key they are left with, exactly by enumeration or by Monte-Carlo with
//! exact per-sample key posteriors.

pub mod channel;
pub mod cli;
pub mod coding;
pub mod equivocation;
pub mod error;
pub mod gf2;
pub mod keystream;
pub mod system;

pub use error::{Error, Result};
