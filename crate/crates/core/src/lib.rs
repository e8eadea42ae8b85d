//! Round-based 2-D flocking simulator with pluggable agent decision-makers.
//!
//! Backends range from the classical alpha-lattice controller ([`olfati`])
//! through deterministic [`scripted`] agents to chat-completion language
//! models ([`llm`]). [`metrics`] scores formations and labels outcomes;
//! [`harness`] runs experiment batches, persists transcripts and reports.

pub mod geometry;
pub mod harness;
pub mod llm;
pub mod metrics;
pub mod olfati;
pub mod scripted;
pub mod sim;

pub use geometry::Vec2;
