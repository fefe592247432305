//! Personalized QoS ranking prediction for cloud services.
//!
//! Given a sparse user × service matrix of observed QoS values, the crate
//! predicts a full ranking of candidate services for an active user from the
//! observations of users whose rankings agree with theirs:
//!
//! 1. [`similarity`]: Kendall rank correlation between users, Top-K
//!    positive neighbors.
//! 2. [`preference`]: pairwise preferences (explicit from the user's own
//!    values, implicit from neighbors) with confidence values.
//! 3. [`ranker`]: greedy ordering by preference sums, plain (CloudRank1) or
//!    confidence-weighted (CloudRank2), followed by a pass that restores the
//!    user's own observed order.
//!
//! [`allocsim`] is a small VM placement simulator that synthesizes QoS
//! matrices, and [`experiment`] ties everything into reproducible
//! evaluation runs.

pub mod allocsim;
pub mod error;
pub mod experiment;
pub mod matrix;
pub mod metrics;
pub mod preference;
pub mod ranker;
pub mod rng;
pub mod similarity;

pub use error::{Error, Result};
pub use matrix::{MetricOrientation, QoSMatrix, ServiceId, UserId};
pub use ranker::{RankerKind, Ranking};
