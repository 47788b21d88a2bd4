//! Entropy-based two-stage DDoS anomaly detection over flow traces.
//!
//! Traffic is bucketed into fixed-duration windows; stage 1 flags a window
//! as suspected when the normalized entropy of a configured header feature
//! drops below th1, and stage 2 confirms the attack when the entropy rate of
//! the dominant flow's source-address sequence falls to or below th2.

pub mod alerting;
pub mod calibration;
pub mod entropy;
pub mod error;
pub mod flow_model;
pub mod pipeline;
pub mod traffic_gen;

pub use error::{Error, Result};
