use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum IcsgError {
    #[error("model file: {0}")]
    Format(String),

    #[error("model is invalid: {}", summarize(.0))]
    Invalid(Vec<Violation>),

    #[error("model is not a point-interval game: state {state}, action {action}, successor {successor} has [{lo}, {hi}]")]
    NotNominal {
        state: String,
        action: String,
        successor: String,
        lo: f64,
        hi: f64,
    },

    #[error("perturbation infeasible at state {state}, action {action}: lower bounds sum to {sum_lo}, upper bounds to {sum_hi}")]
    InfeasiblePerturbation {
        state: String,
        action: String,
        sum_lo: f64,
        sum_hi: f64,
    },

    #[error("interval row is infeasible: lower bounds sum to {sum_lo}, upper bounds to {sum_hi}")]
    InfeasibleRow { sum_lo: f64, sum_hi: f64 },

    #[error("row has {count} successors, more than the vertex enumeration cap of {cap}")]
    VertexCap { count: usize, cap: usize },

    #[error("stage game of size {rows}x{cols} exceeds the enumeration cap {cap}x{cap}")]
    DimensionCap {
        rows: usize,
        cols: usize,
        cap: usize,
    },

    #[error("simplex exceeded {0} pivots")]
    PivotLimit(usize),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("property syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("mixed-horizon nonzero-sum properties are not supported: both objectives must be bounded or both unbounded")]
    MixedHorizon,

    #[error("reward structure `{reward}` violates the convergence assumption: negative reward at state {state} without almost-sure escape to the target or a zero-reward trap")]
    NegativeRewardAssumption { reward: String, state: String },

    #[error("nature strategy has no resolution for state {state}, action index {cell}{}", step_suffix(.step))]
    MissingResolution {
        state: String,
        cell: usize,
        step: Option<usize>,
    },

    #[error("oracle bounds exceeded: {0}")]
    OracleBounds(String),

    #[error("{0}")]
    Unsupported(String),
}

fn summarize(v: &[Violation]) -> String {
    match v.first() {
        None => "no violations".into(),
        Some(first) if v.len() == 1 => first.to_string(),
        Some(first) => format!("{first} (and {} more)", v.len() - 1),
    }
}

fn step_suffix(step: &Option<usize>) -> String {
    step.map(|s| format!(" at step {s}")).unwrap_or_default()
}

pub type Result<T> = std::result::Result<T, IcsgError>;
