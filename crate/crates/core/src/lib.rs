//! Preference/response disentangled rewards for quality-assessment scoring
//! policies, a group-relative policy optimization engine, and a toy
//! simulation harness that trains a stochastic score policy end to end on
//! synthetic mean-opinion-score data.

pub mod cli;
pub mod format;
pub mod grpo;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod rewards;
pub mod sim;
pub mod types;
