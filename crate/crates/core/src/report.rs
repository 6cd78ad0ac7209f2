//! Query orchestration and machine-readable results.
//!
//! Numbers are written with 12 significant digits; infinities as the strings
//! `"Infinity"` and `"-Infinity"`.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{IcsgError, Result};
use crate::model::Icsg;
use crate::nonzerosum::{self, CandidateProfile, NzOutcome, NzSolution, Status};
use crate::property::{parse_property, Query, Semantics};
use crate::zerosum::{self, SolveOptions, ZsSolution};

/// A float serialized with 12 significant digits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Num(pub f64);

impl Num {
    pub fn round(v: f64) -> f64 {
        if !v.is_finite() || v == 0.0 {
            return v;
        }
        format!("{v:.11e}").parse().unwrap_or(v)
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_nan() {
            s.serialize_str("NaN")
        } else if v.is_infinite() {
            s.serialize_str(if v > 0.0 { "Infinity" } else { "-Infinity" })
        } else {
            s.serialize_f64(Num::round(v))
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(v) => Ok(Num(v)),
            Raw::S(s) => match s.as_str() {
                "Infinity" => Ok(Num(f64::INFINITY)),
                "-Infinity" => Ok(Num(f64::NEG_INFINITY)),
                "NaN" => Ok(Num(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.0;
        if v.is_infinite() {
            f.write_str(if v > 0.0 { "Infinity" } else { "-Infinity" })
        } else {
            write!(f, "{}", Num::round(v))
        }
    }
}

fn nums(v: &[f64]) -> Vec<Num> {
    v.iter().copied().map(Num).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ZeroSum,
    NonzeroSum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub property: String,
    pub mode: Mode,
    pub semantics: Semantics,
    /// Zero-sum value at the initial state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Num>,
    /// Nonzero-sum values of both players at the initial state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<[Num; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_ne: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<StateValue>>,
    pub diagnostics: ResultDiagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_rne: Option<NoRneDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateValue {
    pub state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<[Status; 2]>,
    pub values: Vec<Num>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultDiagnostics {
    /// Sweeps per phase.
    pub iterations: Vec<usize>,
    pub converged: bool,
    pub max_rel_change: Num,
    /// Excluded from golden comparisons.
    pub wall_time_ms: Num,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Default for Num {
    fn default() -> Self {
        Num(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoRneDoc {
    pub state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
    pub status: [Status; 2],
    pub candidates: Vec<CandidateDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateDoc {
    pub strategies: [BTreeMap<String, Num>; 2],
    pub payoffs: [Num; 2],
    /// Largest robust deviation gain per player.
    pub gains: [Num; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessDoc {
    pub player: String,
    pub action: String,
    pub gain: Num,
    /// Nature's resolution per joint action that the gain depends on.
    pub nature: BTreeMap<String, BTreeMap<String, Num>>,
}

/// Strategies of a solved query: each player's action distribution per state
/// (and step, for bounded objectives), and nature's resolution of every joint
/// action there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyBundle {
    pub players: [String; 2],
    pub time_varying: bool,
    pub entries: Vec<StrategyEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    /// Progress of the two players (nonzero-sum only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<[Status; 2]>,
    pub strategies: [BTreeMap<String, Num>; 2],
    /// Joint action name to successor distribution.
    pub nature: BTreeMap<String, BTreeMap<String, Num>>,
}

/// Flags of a `check` run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckOptions {
    pub solve: SolveOptions,
    /// Include the per-state value dump.
    pub values: bool,
    /// Build the strategy bundle.
    pub strategy: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub result: QueryResult,
    pub bundle: Option<StrategyBundle>,
}

impl CheckOutcome {
    /// 0 on success, 2 when no robust equilibrium exists.
    pub fn exit_code(&self) -> i32 {
        if self.result.no_rne.is_some() {
            2
        } else {
            0
        }
    }
}

/// Parses `property`, dispatches to the matching solver and packages the
/// result.
pub fn run_check(model: &Icsg, property: &str, opts: &CheckOptions) -> Result<CheckOutcome> {
    let query = parse_property(property)?;
    let started = Instant::now();
    let elapsed = || Num(started.elapsed().as_secs_f64() * 1e3);
    match &query {
        Query::ZeroSum {
            coalition,
            direction,
            objective,
        } => {
            let c = model
                .player_index(coalition)
                .ok_or_else(|| IcsgError::Unknown {
                    kind: "player",
                    name: coalition.clone(),
                })?;
            let sol = zerosum::solve(model, c, (*direction).into(), objective, &opts.solve)?;
            let mut result = QueryResult {
                property: property.trim().to_string(),
                mode: Mode::ZeroSum,
                semantics: opts.solve.semantics,
                value: Some(Num(sol.values[model.initial()])),
                values: None,
                epsilon_ne: None,
                states: opts.values.then(|| {
                    (0..model.num_states())
                        .map(|s| StateValue {
                            state: model.state_name(s).to_string(),
                            step: None,
                            status: None,
                            values: vec![Num(sol.values[s])],
                        })
                        .collect()
                }),
                diagnostics: ResultDiagnostics {
                    iterations: sol.diagnostics.iterations.clone(),
                    converged: sol.diagnostics.converged,
                    max_rel_change: Num(sol.diagnostics.max_rel_change),
                    wall_time_ms: Num(0.0),
                    warnings: Vec::new(),
                },
                no_rne: None,
            };
            let bundle = opts.strategy.then(|| zs_bundle(model, &sol));
            result.diagnostics.wall_time_ms = elapsed();
            Ok(CheckOutcome { result, bundle })
        }
        Query::NonzeroSum {
            players,
            objectives,
        } => {
            let out = nonzerosum::solve(model, players, objectives, &opts.solve)?;
            let eps = match &out {
                NzOutcome::Solved(s) => Some(Num(s.epsilon)),
                NzOutcome::NoRne(_) => None,
            };
            let mut result = QueryResult {
                property: property.trim().to_string(),
                mode: Mode::NonzeroSum,
                semantics: opts.solve.semantics,
                value: None,
                values: None,
                epsilon_ne: eps,
                states: None,
                diagnostics: ResultDiagnostics::default(),
                no_rne: None,
            };
            let mut bundle = None;
            match out {
                NzOutcome::Solved(sol) => {
                    result.values = Some(sol.values.map(Num));
                    result.diagnostics = ResultDiagnostics {
                        iterations: vec![sol.diagnostics.iterations],
                        converged: sol.diagnostics.converged,
                        max_rel_change: Num(sol.diagnostics.max_rel_change),
                        wall_time_ms: Num(0.0),
                        warnings: sol.diagnostics.warnings.clone(),
                    };
                    if opts.values {
                        result.states = Some(
                            sol.entries
                                .iter()
                                .map(|e| StateValue {
                                    state: model.state_name(e.state).to_string(),
                                    step: e.step,
                                    status: Some(e.status),
                                    values: nums(&e.values),
                                })
                                .collect(),
                        );
                    }
                    if opts.strategy {
                        bundle = Some(nz_bundle(model, &sol));
                    }
                }
                NzOutcome::NoRne(r) => {
                    result.no_rne = Some(NoRneDoc {
                        state: model.state_name(r.state).to_string(),
                        step: r.step,
                        iteration: r.iteration,
                        status: r.status,
                        candidates: r
                            .candidates
                            .iter()
                            .map(|c| candidate_doc(model, r.state, c))
                            .collect(),
                    });
                }
            }
            result.diagnostics.wall_time_ms = elapsed();
            Ok(CheckOutcome { result, bundle })
        }
    }
}

fn distribution(model: &Icsg, state: usize, player: usize, p: &[f64]) -> BTreeMap<String, Num> {
    model
        .choices(state, player)
        .iter()
        .zip(p)
        .filter(|(_, &q)| q != 0.0)
        .map(|(&a, &q)| (model.action_name(player, a).to_string(), Num(q)))
        .collect()
}

fn nature_doc(
    model: &Icsg,
    state: usize,
    rows: &[Vec<f64>],
) -> BTreeMap<String, BTreeMap<String, Num>> {
    rows.iter()
        .enumerate()
        .filter(|(_, d)| !d.is_empty())
        .map(|(c, d)| {
            let row = model.row(state, c).expect("enabled joint action");
            let dist = row
                .entries()
                .iter()
                .zip(d)
                .map(|(b, &p)| (model.state_name(b.successor).to_string(), Num(p)))
                .collect();
            (model.joint_name(model.cell_action(state, c)), dist)
        })
        .collect()
}

fn candidate_doc(model: &Icsg, state: usize, c: &CandidateProfile) -> CandidateDoc {
    CandidateDoc {
        strategies: [
            distribution(model, state, 0, &c.profile.x),
            distribution(model, state, 1, &c.profile.y),
        ],
        payoffs: [Num(c.profile.u1), Num(c.profile.u2)],
        gains: c.gains.map(Num),
        witness: c.witness.as_ref().map(|w| WitnessDoc {
            player: model.players()[w.player].clone(),
            action: model
                .action_name(w.player, model.choices(state, w.player)[w.action])
                .to_string(),
            gain: Num(w.gain),
            nature: nature_doc(model, state, &w.nature),
        }),
    }
}

fn zs_bundle(model: &Icsg, sol: &ZsSolution) -> StrategyBundle {
    let time_varying = sol.strategies[0].is_time_varying();
    let steps = match &sol.strategies[0] {
        zerosum::Timed::Memoryless(_) => 1,
        zerosum::Timed::TimeVarying(v) => v.len(),
    };
    let mut entries = Vec::new();
    for step in 0..steps {
        let (Some(a), Some(b), Some(nat)) = (
            sol.strategies[0].at(step),
            sol.strategies[1].at(step),
            sol.nature.at(step),
        ) else {
            continue;
        };
        for s in 0..model.num_states() {
            let (Some(x), Some(y)) = (&a[s], &b[s]) else {
                continue;
            };
            entries.push(StrategyEntry {
                state: model.state_name(s).to_string(),
                step: time_varying.then_some(step),
                status: None,
                strategies: [distribution(model, s, 0, x), distribution(model, s, 1, y)],
                nature: nat[s]
                    .as_ref()
                    .map(|rows| nature_doc(model, s, rows))
                    .unwrap_or_default(),
            });
        }
    }
    StrategyBundle {
        players: model.players().clone(),
        time_varying,
        entries,
    }
}

fn nz_bundle(model: &Icsg, sol: &NzSolution) -> StrategyBundle {
    StrategyBundle {
        players: model.players().clone(),
        time_varying: sol.horizon.is_some(),
        entries: sol
            .entries
            .iter()
            .map(|e| StrategyEntry {
                state: model.state_name(e.state).to_string(),
                step: e.step,
                status: Some(e.status),
                strategies: [
                    distribution(model, e.state, 0, &e.x),
                    distribution(model, e.state, 1, &e.y),
                ],
                nature: nature_doc(model, e.state, &e.nature),
            })
            .collect(),
    }
}

impl fmt::Display for QueryResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Property: {}", self.property)?;
        if let Some(v) = self.value {
            writeln!(f, "Value: {v}")?;
        }
        if let Some([a, b]) = self.values {
            writeln!(f, "Values: ({a}, {b})")?;
        }
        if let Some(e) = self.epsilon_ne {
            writeln!(f, "Equilibrium tolerance: {e}")?;
        }
        if let Some(r) = &self.no_rne {
            write!(f, "No robust equilibrium at state {}", r.state)?;
            if let Some(step) = r.step {
                write!(f, ", step {step}")?;
            }
            if let Some(it) = r.iteration {
                write!(f, ", iteration {it}")?;
            }
            writeln!(f, " ({} stage equilibria rejected)", r.candidates.len())?;
        }
        if let Some(states) = &self.states {
            for s in states {
                write!(f, "  {}", s.state)?;
                if let Some(step) = s.step {
                    write!(f, " @{step}")?;
                }
                let vals: Vec<String> = s.values.iter().map(|v| v.to_string()).collect();
                writeln!(f, ": {}", vals.join(", "))?;
            }
        }
        let d = &self.diagnostics;
        let iters: Vec<String> = d.iterations.iter().map(|i| i.to_string()).collect();
        if !iters.is_empty() {
            writeln!(
                f,
                "Iterations: {} (converged: {}, last relative change {})",
                iters.join(" + "),
                d.converged,
                d.max_rel_change
            )?;
        }
        for w in &d.warnings {
            writeln!(f, "Warning: {w}")?;
        }
        write!(f, "Time: {} ms", d.wall_time_ms)
    }
}
