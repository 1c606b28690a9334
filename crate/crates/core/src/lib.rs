//! Entanglement-based (BBM92) key distribution without active polarization
//! tracking.
//!
//! The crate simulates the full chain: a noisy polarization-entangled source
//! sent through birefringent channels, two-qubit tomography of what arrives,
//! Bob's measurement bases computed from the nearest pure state, time-tagged
//! detector clicks for both parties, coincidence counting, window
//! optimization under QBER bounds, and key sifting.

pub mod basis;
pub mod coincidence;
pub mod config;
pub mod linalg;
pub mod messages;
pub mod par;
pub mod photon;
pub mod pipeline;
pub mod quantum;
pub mod report;
pub mod seed;
pub mod tomography;
pub mod ttag;

pub use linalg::{Mat2, Mat4, C64};
pub use par::Execution;
