//! Decision-support engine.
//!
//! Decision makers describe a domain as three tiers of services: indices
//! (raw inputs keyed by period), models (formulas over indices and other
//! models) and indicators (formulas with interpretation rules and a
//! visualization mode). An agent runtime validates registrations, computes
//! indicators on demand and keeps a log of every anomaly.
//!
//! - [`expr`]: the formula language.
//! - [`registry`]: the service catalog and index values.
//! - [`compute`]: dependency planning and indicator evaluation.
//! - [`viz`]: interpretation rules and visualization descriptors.
//! - [`agents`]: the Editor, Arguer and Supervisor runtime.
//! - [`domains`]: pack files and the built-in earned value and Turc packs.

pub mod agents;
pub mod compute;
pub mod domains;
pub mod expr;
pub mod registry;
pub mod viz;
