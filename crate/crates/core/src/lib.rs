//! Differentially private speaker anonymization.
//!
//! Pitch contours pass through a convolutional autoencoder with a Laplace
//! noise layer on its sigmoid-bounded latent code; phonetic bottleneck (BN)
//! features pass through a per-frame l1-normalize / Laplace / re-normalize
//! layer. The privacy cost of each anonymized utterance is tracked in a
//! [`dp::PrivacyLedger`].

pub mod anonymizer;
pub mod autoencoder;
pub mod bn;
pub mod dp;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod pitch;
pub mod study;

pub use error::{Error, Result};
