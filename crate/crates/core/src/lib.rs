//! Desk-scale pipeline that learns to act in a simulated household from
//! visual observations alone, with natural language as the bridge.
//!
//! Two sequence models share the work: a captioner ([`models::SumModel`])
//! that turns symbolic raster observations into scene descriptions, and an
//! action decoder ([`models::ApmModel`]) that turns those descriptions into
//! executable steps of a bracketed action-program DSL. Both are trained from
//! scratch: the captioner with cross-entropy, the action decoder first by
//! imitation on expert plans and then with REINFORCE against an
//! executability reward.

pub mod actiondsl;
pub mod evalmetrics;
pub mod langtext;
pub mod models;
pub mod neuralcore;
pub mod pipeline;
pub mod training;
pub mod worldsim;
