//! Robust values, strategies and equilibria for two-player interval
//! concurrent stochastic games.

pub mod bench;
pub mod error;
pub mod graph;
pub mod model;
pub mod nfg;
pub mod nonzerosum;
pub mod oracle;
mod par;
pub mod property;
pub mod report;
pub mod uncertainty;
pub mod zerosum;

pub use error::{IcsgError, Result};
pub use model::{Action, Icsg, IntervalDistribution, JointAction};
