//! Confidence-aware enriched semantic event chains for manipulation scenes.
//!
//! Pipeline: detection stream → pairwise relations ([`geometry`]) → event matrix
//! ([`event_chain`]) → roles and affordances ([`semantics`]) → primitive decisions
//! ([`primitives`]) → saliency traces ([`explanation`]). [`simulator`], [`noise`] and
//! [`eval`] provide synthetic episodes, perturbations and batch evaluation.

pub mod config;
pub mod error;
pub mod eval;
pub mod event_chain;
pub mod explanation;
pub mod geometry;
pub mod model;
pub mod noise;
pub mod pipeline;
pub mod primitives;
pub mod semantics;
pub mod simulator;
pub mod stream;
pub mod suite;
pub mod validation;

pub use config::{Aggregation, EngineConfig};
pub use error::{EsecError, Result};
