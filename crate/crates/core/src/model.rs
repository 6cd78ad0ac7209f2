//! The interval concurrent stochastic game model.
//!
//! Identifiers are strings at the boundary (model files, reports) and dense
//! indices everywhere else. Transition rows are stored per state in a dense
//! table indexed by the enabled joint action ("cell" = `row * cols + col`).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{IcsgError, Result};

/// Reserved identifier of the idle action.
pub const IDLE: &str = "⊥";

/// Lower bounds produced by [`perturb`] never drop below this value.
pub const PERTURB_FLOOR: f64 = 1e-12;

/// Slack used when checking that interval rows can sum to one.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// A single player's action: either the idle action or an index into the
/// player's action list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Idle,
    Move(usize),
}

/// Ordered pair (player-1 action, player-2 action).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointAction(pub Action, pub Action);

impl JointAction {
    pub fn get(self, player: usize) -> Action {
        if player == 0 {
            self.0
        } else {
            self.1
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound {
    pub successor: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Interval uncertainty set of one (state, joint action) pair. Only successors
/// with a positive upper bound are stored; absent successors have probability 0.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct IntervalDistribution {
    entries: Vec<Bound>,
}

impl IntervalDistribution {
    /// Builds a row from `(successor, lo, hi)` triples. Entries with `hi == 0`
    /// are dropped, later duplicates override earlier ones.
    pub fn new(entries: impl IntoIterator<Item = (usize, f64, f64)>) -> Self {
        let map: BTreeMap<usize, (f64, f64)> = entries
            .into_iter()
            .filter(|&(_, lo, hi)| !(lo == 0.0 && hi == 0.0))
            .map(|(s, lo, hi)| (s, (lo, hi)))
            .collect();
        IntervalDistribution {
            entries: map
                .into_iter()
                .map(|(successor, (lo, hi))| Bound { successor, lo, hi })
                .collect(),
        }
    }

    /// A point distribution (every interval degenerate).
    pub fn point(probs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        Self::new(probs.into_iter().map(|(s, p)| (s, p, p)))
    }

    pub fn entries(&self) -> &[Bound] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sum_lo(&self) -> f64 {
        self.entries.iter().map(|b| b.lo).sum()
    }

    pub fn sum_hi(&self) -> f64 {
        self.entries.iter().map(|b| b.hi).sum()
    }

    pub fn is_point(&self) -> bool {
        self.entries.iter().all(|b| b.lo == b.hi)
    }

    pub fn is_feasible(&self) -> bool {
        self.sum_lo() <= 1.0 + FEASIBILITY_TOL && self.sum_hi() >= 1.0 - FEASIBILITY_TOL
    }

    pub fn successors(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|b| b.successor)
    }

    pub fn bound(&self, successor: usize) -> Option<&Bound> {
        self.entries
            .binary_search_by_key(&successor, |b| b.successor)
            .ok()
            .map(|i| &self.entries[i])
    }
}

/// State and action rewards. The total reward of a state-action pair is the
/// sum of both parts.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RewardStructure {
    pub state: Vec<f64>,
    pub action: BTreeMap<(usize, JointAction), f64>,
}

impl RewardStructure {
    pub fn total(&self, state: usize, action: JointAction) -> f64 {
        self.state.get(state).copied().unwrap_or(0.0)
            + self.action.get(&(state, action)).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct StateTable {
    pub(crate) choices: [Vec<Action>; 2],
    pub(crate) rows: Vec<Option<IntervalDistribution>>,
}

/// A two-player interval concurrent stochastic game. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Icsg {
    players: [String; 2],
    states: Vec<String>,
    initial: usize,
    actions: [Vec<String>; 2],
    enabled: Vec<[Vec<usize>; 2]>,
    tables: Vec<StateTable>,
    /// Rows whose joint action is not enabled; kept only so `validate` can
    /// report them.
    stray: Vec<(usize, JointAction, IntervalDistribution)>,
    rewards: BTreeMap<String, RewardStructure>,
    labels: BTreeMap<String, BTreeSet<usize>>,
    nominal: bool,
}

impl Icsg {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|n| n == name)
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn players(&self) -> &[String; 2] {
        &self.players
    }

    pub fn player_index(&self, name: &str) -> Option<usize> {
        self.players.iter().position(|n| n == name)
    }

    pub fn actions(&self, player: usize) -> &[String] {
        &self.actions[player]
    }

    pub fn action_name(&self, player: usize, action: Action) -> &str {
        match action {
            Action::Idle => IDLE,
            Action::Move(a) => &self.actions[player][a],
        }
    }

    pub fn joint_name(&self, a: JointAction) -> String {
        format!(
            "({},{})",
            self.action_name(0, a.0),
            self.action_name(1, a.1)
        )
    }

    /// The actions player `player` chooses from at `state`: its enabled
    /// actions, or the idle action alone when none are enabled.
    pub fn choices(&self, state: usize, player: usize) -> &[Action] {
        &self.tables[state].choices[player]
    }

    /// (rows, cols) of the stage game at `state`.
    pub fn dims(&self, state: usize) -> (usize, usize) {
        let t = &self.tables[state];
        (t.choices[0].len(), t.choices[1].len())
    }

    pub fn num_cells(&self, state: usize) -> usize {
        let (r, c) = self.dims(state);
        r * c
    }

    pub fn cell_action(&self, state: usize, cell: usize) -> JointAction {
        let t = &self.tables[state];
        let cols = t.choices[1].len();
        JointAction(t.choices[0][cell / cols], t.choices[1][cell % cols])
    }

    pub fn cell_of(&self, state: usize, action: JointAction) -> Option<usize> {
        let t = &self.tables[state];
        let i = t.choices[0].iter().position(|&a| a == action.0)?;
        let j = t.choices[1].iter().position(|&a| a == action.1)?;
        Some(i * t.choices[1].len() + j)
    }

    /// Transition row of an enabled joint action; `None` only in invalid models.
    pub fn row(&self, state: usize, cell: usize) -> Option<&IntervalDistribution> {
        self.tables[state].rows[cell].as_ref()
    }

    /// Row of a validated model.
    pub(crate) fn row_unchecked(&self, state: usize, cell: usize) -> &IntervalDistribution {
        self.tables[state].rows[cell]
            .as_ref()
            .expect("validated model has a row for every enabled joint action")
    }

    /// All stored rows, including rows of non-enabled joint actions.
    pub fn transitions(
        &self,
    ) -> impl Iterator<Item = (usize, JointAction, &IntervalDistribution)> + '_ {
        let enabled = self.tables.iter().enumerate().flat_map(move |(s, _)| {
            (0..self.num_cells(s))
                .filter_map(move |c| self.row(s, c).map(|r| (s, self.cell_action(s, c), r)))
        });
        enabled.chain(self.stray.iter().map(|(s, a, r)| (*s, *a, r)))
    }

    pub fn rewards(&self) -> &BTreeMap<String, RewardStructure> {
        &self.rewards
    }

    pub fn reward(&self, name: &str) -> Result<&RewardStructure> {
        self.rewards.get(name).ok_or_else(|| IcsgError::Unknown {
            kind: "reward structure",
            name: name.to_string(),
        })
    }

    pub fn labels(&self) -> &BTreeMap<String, BTreeSet<usize>> {
        &self.labels
    }

    /// Membership vector of a labelled state set.
    pub fn target(&self, label: &str) -> Result<Vec<bool>> {
        let set = self.labels.get(label).ok_or_else(|| IcsgError::Unknown {
            kind: "label",
            name: label.to_string(),
        })?;
        let mut v = vec![false; self.num_states()];
        for &s in set {
            v[s] = true;
        }
        Ok(v)
    }

    /// True when the model was tagged by [`embed_csg`].
    pub fn is_nominal(&self) -> bool {
        self.nominal
    }

    /// True when every stored interval is degenerate.
    pub fn is_point_interval(&self) -> bool {
        self.transitions().all(|(_, _, r)| r.is_point())
    }

    /// Returns a copy with every enabled row replaced by `f(state, cell, row)`.
    pub fn map_rows(
        &self,
        mut f: impl FnMut(usize, usize, &IntervalDistribution) -> Result<IntervalDistribution>,
    ) -> Result<Icsg> {
        let mut out = self.clone();
        out.nominal = false;
        for (s, table) in out.tables.iter_mut().enumerate() {
            for (c, row) in table.rows.iter_mut().enumerate() {
                if let Some(r) = row.as_mut() {
                    *r = f(s, c, r)?;
                }
            }
        }
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Icsg> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| IcsgError::Format(e.to_string()))?;
        Icsg::from_doc(&doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("model documents always serialize")
    }

    pub fn from_doc(doc: &ModelDoc) -> Result<Icsg> {
        if doc.players.len() != 2 {
            return Err(IcsgError::Format(format!(
                "expected exactly two players, found {}",
                doc.players.len()
            )));
        }
        let players = [doc.players[0].clone(), doc.players[1].clone()];
        let state_ix = first_index(&doc.states);
        let lookup_state = |name: &str| -> Result<usize> {
            state_ix
                .get(name)
                .copied()
                .ok_or_else(|| IcsgError::Unknown {
                    kind: "state",
                    name: name.to_string(),
                })
        };
        let initial = lookup_state(&doc.initial)?;

        let actions: [Vec<String>; 2] =
            [0, 1].map(|p| doc.actions.get(&players[p]).cloned().unwrap_or_default());
        for name in doc.actions.keys() {
            if !players.contains(name) {
                return Err(IcsgError::Unknown {
                    kind: "player",
                    name: name.clone(),
                });
            }
        }
        let action_ix = [first_index(&actions[0]), first_index(&actions[1])];
        let lookup_action = |p: usize, name: &str| -> Result<Action> {
            if name == IDLE {
                return Ok(Action::Idle);
            }
            action_ix[p]
                .get(name)
                .map(|&a| Action::Move(a))
                .ok_or_else(|| IcsgError::Unknown {
                    kind: "action",
                    name: format!("{}:{}", players[p], name),
                })
        };

        let mut enabled = vec![[Vec::new(), Vec::new()]; doc.states.len()];
        for (state, per_player) in &doc.enabled {
            let s = lookup_state(state)?;
            for (player, names) in per_player {
                let p =
                    players
                        .iter()
                        .position(|n| n == player)
                        .ok_or_else(|| IcsgError::Unknown {
                            kind: "player",
                            name: player.clone(),
                        })?;
                let mut list = Vec::new();
                for n in names {
                    match lookup_action(p, n)? {
                        Action::Move(a) => list.push(a),
                        Action::Idle => {
                            return Err(IcsgError::Format(format!(
                                "`{IDLE}` cannot be listed as an enabled action (state {state})"
                            )))
                        }
                    }
                }
                enabled[s][p] = list;
            }
        }

        let mut rows = BTreeMap::new();
        for t in &doc.transitions {
            let s = lookup_state(&t.from)?;
            if t.action.len() != 2 {
                return Err(IcsgError::Format(format!(
                    "transition from {} must name one action per player",
                    t.from
                )));
            }
            let a = JointAction(
                lookup_action(0, &t.action[0])?,
                lookup_action(1, &t.action[1])?,
            );
            let mut entries = Vec::with_capacity(t.row.len());
            for (succ, prob) in &t.row {
                let (lo, hi) = prob.bounds();
                entries.push((lookup_state(succ)?, lo, hi));
            }
            rows.insert((s, a), IntervalDistribution::new(entries));
        }

        let mut rewards = BTreeMap::new();
        for (name, r) in &doc.rewards {
            let mut state = vec![0.0; doc.states.len()];
            for (sname, v) in &r.state {
                state[lookup_state(sname)?] = *v;
            }
            let mut action = BTreeMap::new();
            for ar in &r.action {
                let s = lookup_state(&ar.from)?;
                if ar.action.len() != 2 {
                    return Err(IcsgError::Format(format!(
                        "action reward at {} must name one action per player",
                        ar.from
                    )));
                }
                let a = JointAction(
                    lookup_action(0, &ar.action[0])?,
                    lookup_action(1, &ar.action[1])?,
                );
                *action.entry((s, a)).or_insert(0.0) += ar.value;
            }
            rewards.insert(name.clone(), RewardStructure { state, action });
        }

        let mut labels = BTreeMap::new();
        for (name, members) in &doc.labels {
            let set = members
                .iter()
                .map(|m| lookup_state(m))
                .collect::<Result<BTreeSet<_>>>()?;
            labels.insert(name.clone(), set);
        }

        Ok(Icsg::assemble(
            players,
            doc.states.clone(),
            initial,
            actions,
            enabled,
            rows,
            rewards,
            labels,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        players: [String; 2],
        states: Vec<String>,
        initial: usize,
        actions: [Vec<String>; 2],
        enabled: Vec<[Vec<usize>; 2]>,
        mut rows: BTreeMap<(usize, JointAction), IntervalDistribution>,
        rewards: BTreeMap<String, RewardStructure>,
        labels: BTreeMap<String, BTreeSet<usize>>,
    ) -> Icsg {
        let mut tables = Vec::with_capacity(states.len());
        for (s, en) in enabled.iter().enumerate() {
            let choices = [0, 1].map(|p| {
                if en[p].is_empty() {
                    vec![Action::Idle]
                } else {
                    en[p].iter().map(|&a| Action::Move(a)).collect()
                }
            });
            let mut cells = Vec::with_capacity(choices[0].len() * choices[1].len());
            for &a in &choices[0] {
                for &b in &choices[1] {
                    cells.push(rows.remove(&(s, JointAction(a, b))));
                }
            }
            tables.push(StateTable {
                choices,
                rows: cells,
            });
        }
        let stray = rows.into_iter().map(|((s, a), r)| (s, a, r)).collect();
        Icsg {
            players,
            states,
            initial,
            actions,
            enabled,
            tables,
            stray,
            rewards,
            labels,
            nominal: false,
        }
    }

    pub fn to_doc(&self) -> ModelDoc {
        let names = |a: JointAction| {
            vec![
                self.action_name(0, a.0).to_string(),
                self.action_name(1, a.1).to_string(),
            ]
        };
        let mut enabled = BTreeMap::new();
        for (s, en) in self.enabled.iter().enumerate() {
            let mut per = BTreeMap::new();
            for p in 0..2 {
                if !en[p].is_empty() {
                    per.insert(
                        self.players[p].clone(),
                        en[p].iter().map(|&a| self.actions[p][a].clone()).collect(),
                    );
                }
            }
            if !per.is_empty() {
                enabled.insert(self.states[s].clone(), per);
            }
        }
        let transitions = self
            .transitions()
            .map(|(s, a, r)| TransitionDoc {
                from: self.states[s].clone(),
                action: names(a),
                row: r
                    .entries()
                    .iter()
                    .map(|b| {
                        let p = if b.lo == b.hi {
                            ProbDoc::Point(b.lo)
                        } else {
                            ProbDoc::Interval([b.lo, b.hi])
                        };
                        (self.states[b.successor].clone(), p)
                    })
                    .collect(),
            })
            .collect();
        let rewards = self
            .rewards
            .iter()
            .map(|(name, r)| {
                let state = r
                    .state
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(s, v)| (self.states[s].clone(), *v))
                    .collect();
                let action = r
                    .action
                    .iter()
                    .map(|(&(s, a), &value)| ActionRewardDoc {
                        from: self.states[s].clone(),
                        action: names(a),
                        value,
                    })
                    .collect();
                (name.clone(), RewardDoc { state, action })
            })
            .collect();
        let labels = self
            .labels
            .iter()
            .map(|(name, set)| {
                (
                    name.clone(),
                    set.iter().map(|&s| self.states[s].clone()).collect(),
                )
            })
            .collect();
        ModelDoc {
            players: self.players.to_vec(),
            states: self.states.clone(),
            initial: self.states[self.initial].clone(),
            actions: (0..2)
                .map(|p| (self.players[p].clone(), self.actions[p].clone()))
                .collect(),
            enabled,
            transitions,
            rewards,
            labels,
        }
    }
}

fn first_index(names: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        m.entry(n.as_str()).or_insert(i);
    }
    m
}

// ---------------------------------------------------------------------------
// Model file format

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub players: Vec<String>,
    pub states: Vec<String>,
    pub initial: String,
    pub actions: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub enabled: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    pub transitions: Vec<TransitionDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rewards: BTreeMap<String, RewardDoc>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionDoc {
    pub from: String,
    pub action: Vec<String>,
    pub row: BTreeMap<String, ProbDoc>,
}

/// A row entry: a single probability `p` (shorthand for `[p, p]`) or `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbDoc {
    Point(f64),
    Interval([f64; 2]),
}

impl ProbDoc {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            ProbDoc::Point(p) => (p, p),
            ProbDoc::Interval([lo, hi]) => (lo, hi),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardDoc {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub state: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub action: Vec<ActionRewardDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRewardDoc {
    pub from: String,
    pub action: Vec<String>,
    pub value: f64,
}

impl ModelDoc {
    /// Empty document with two players; convenient for generators and tests.
    pub fn new(p1: &str, p2: &str) -> Self {
        ModelDoc {
            players: vec![p1.into(), p2.into()],
            states: Vec::new(),
            initial: String::new(),
            actions: BTreeMap::new(),
            enabled: BTreeMap::new(),
            transitions: Vec::new(),
            rewards: BTreeMap::new(),
            labels: BTreeMap::new(),
        }
    }

    pub fn enable(&mut self, state: &str, player: &str, actions: &[&str]) {
        self.enabled.entry(state.into()).or_default().insert(
            player.into(),
            actions.iter().map(|a| a.to_string()).collect(),
        );
    }

    pub fn transition(&mut self, from: &str, action: [&str; 2], row: &[(&str, ProbDoc)]) {
        self.transitions.push(TransitionDoc {
            from: from.into(),
            action: action.iter().map(|a| a.to_string()).collect(),
            row: row.iter().map(|(s, p)| (s.to_string(), *p)).collect(),
        });
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DuplicateIdentifier {
        namespace: String,
        id: String,
    },
    ReservedIdentifier {
        player: String,
    },
    MissingTransition {
        state: String,
        action: String,
    },
    UnexpectedTransition {
        state: String,
        action: String,
    },
    GraphPreservation {
        state: String,
        action: String,
        successor: String,
        lo: f64,
        hi: f64,
    },
    InvalidBounds {
        state: String,
        action: String,
        successor: String,
        lo: f64,
        hi: f64,
    },
    Infeasible {
        state: String,
        action: String,
        sum_lo: f64,
        sum_hi: f64,
    },
    NonFiniteReward {
        reward: String,
        state: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateIdentifier { namespace, id } => write!(f, "duplicate {namespace} identifier `{id}`"),
            ReservedIdentifier { player } => write!(f, "player {player} declares the reserved action `{IDLE}`"),
            MissingTransition { state, action } => write!(f, "state {state}: no transition for enabled joint action {action}"),
            UnexpectedTransition { state, action } => write!(f, "state {state}: transition given for non-enabled joint action {action}"),
            GraphPreservation { state, action, successor, lo, hi } => write!(
                f,
                "state {state}, action {action}, successor {successor}: interval [{lo}, {hi}] breaks graph preservation (lo = 0 iff hi = 0)"
            ),
            InvalidBounds { state, action, successor, lo, hi } => write!(
                f,
                "state {state}, action {action}, successor {successor}: invalid interval [{lo}, {hi}]"
            ),
            Infeasible { state, action, sum_lo, sum_hi } => write!(
                f,
                "state {state}, action {action}: infeasible row (sum of lower bounds {sum_lo}, sum of upper bounds {sum_hi})"
            ),
            NonFiniteReward { reward, state } => write!(f, "reward {reward}: non-finite value at state {state}"),
        }
    }
}

/// Checks every model invariant. An empty report means the model is valid.
pub fn validate(model: &Icsg) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut dup = |namespace: &str, names: &[String]| {
        let mut seen = BTreeSet::new();
        for n in names {
            if !seen.insert(n) {
                out.push(Violation::DuplicateIdentifier {
                    namespace: namespace.into(),
                    id: n.clone(),
                });
            }
        }
    };
    dup("state", &model.states);
    dup("player", &model.players.to_vec());
    for p in 0..2 {
        dup(&format!("{} action", model.players[p]), &model.actions[p]);
    }
    for p in 0..2 {
        if model.actions[p].iter().any(|a| a == IDLE) {
            out.push(Violation::ReservedIdentifier {
                player: model.players[p].clone(),
            });
        }
    }

    let check_row =
        |out: &mut Vec<Violation>, s: usize, a: JointAction, row: &IntervalDistribution| {
            let state = model.states[s].clone();
            let action = model.joint_name(a);
            for b in row.entries() {
                let successor = model.states[b.successor].clone();
                let in_range = (0.0..=1.0).contains(&b.lo) && (0.0..=1.0).contains(&b.hi);
                if !in_range || b.lo > b.hi || b.lo.is_nan() || b.hi.is_nan() {
                    out.push(Violation::InvalidBounds {
                        state: state.clone(),
                        action: action.clone(),
                        successor,
                        lo: b.lo,
                        hi: b.hi,
                    });
                } else if (b.lo == 0.0) != (b.hi == 0.0) {
                    out.push(Violation::GraphPreservation {
                        state: state.clone(),
                        action: action.clone(),
                        successor,
                        lo: b.lo,
                        hi: b.hi,
                    });
                }
            }
            if !row.is_feasible() {
                out.push(Violation::Infeasible {
                    state,
                    action,
                    sum_lo: row.sum_lo(),
                    sum_hi: row.sum_hi(),
                });
            }
        };

    for s in 0..model.num_states() {
        for c in 0..model.num_cells(s) {
            let a = model.cell_action(s, c);
            match model.row(s, c) {
                Some(row) => check_row(&mut out, s, a, row),
                None => out.push(Violation::MissingTransition {
                    state: model.states[s].clone(),
                    action: model.joint_name(a),
                }),
            }
        }
    }
    for (s, a, _) in &model.stray {
        out.push(Violation::UnexpectedTransition {
            state: model.states[*s].clone(),
            action: model.joint_name(*a),
        });
    }
    for (name, r) in &model.rewards {
        let mut bad = BTreeSet::new();
        for (s, v) in r.state.iter().enumerate() {
            if !v.is_finite() {
                bad.insert(s);
            }
        }
        for (&(s, _), v) in &r.action {
            if !v.is_finite() {
                bad.insert(s);
            }
        }
        for s in bad {
            out.push(Violation::NonFiniteReward {
                reward: name.clone(),
                state: model.states[s].clone(),
            });
        }
    }
    out
}

/// Validates and returns an error carrying the full report on failure.
pub fn ensure_valid(model: &Icsg) -> Result<()> {
    let report = validate(model);
    if report.is_empty() {
        Ok(())
    } else {
        Err(IcsgError::Invalid(report))
    }
}

/// Accepts a point-interval model (a plain CSG) and tags it as nominal.
pub fn embed_csg(model: &Icsg) -> Result<Icsg> {
    ensure_valid(model)?;
    for (s, a, row) in model.transitions() {
        if let Some(b) = row.entries().iter().find(|b| b.lo != b.hi) {
            return Err(IcsgError::NotNominal {
                state: model.state_name(s).to_string(),
                action: model.joint_name(a),
                successor: model.state_name(b.successor).to_string(),
                lo: b.lo,
                hi: b.hi,
            });
        }
    }
    let mut out = model.clone();
    out.nominal = true;
    Ok(out)
}

/// Widens every probability strictly between 0 and 1 to
/// `[max(p - eps, floor), min(p + eps, 1)]`. Probabilities 0 and 1 are kept.
pub fn perturb(model: &Icsg, eps: f64) -> Result<Icsg> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(IcsgError::Unsupported(format!(
            "perturbation radius must be a finite non-negative number, got {eps}"
        )));
    }
    let nominal = embed_csg(model)?;
    let out = nominal.map_rows(|s, c, row| {
        let widened = IntervalDistribution::new(row.entries().iter().map(|b| {
            let p = b.lo;
            if p > 0.0 && p < 1.0 {
                (
                    b.successor,
                    (p - eps).max(PERTURB_FLOOR),
                    (p + eps).min(1.0),
                )
            } else {
                (b.successor, p, p)
            }
        }));
        if !widened.is_feasible() {
            return Err(IcsgError::InfeasiblePerturbation {
                state: model.state_name(s).to_string(),
                action: model.joint_name(model.cell_action(s, c)),
                sum_lo: widened.sum_lo(),
                sum_hi: widened.sum_hi(),
            });
        }
        Ok(widened)
    })?;
    ensure_valid(&out)?;
    Ok(out)
}

/// Support graph: per state, the successors of every enabled joint action.
/// Identical for every resolution of the intervals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportGraph {
    pub edges: Vec<Vec<(JointAction, Vec<usize>)>>,
}

impl SupportGraph {
    /// Union of successors of `state` over all joint actions.
    pub fn successors(&self, state: usize) -> BTreeSet<usize> {
        self.edges[state]
            .iter()
            .flat_map(|(_, succ)| succ.iter().copied())
            .collect()
    }

    pub fn num_edges(&self) -> usize {
        self.edges
            .iter()
            .flat_map(|e| e.iter().map(|(_, s)| s.len()))
            .sum()
    }
}

pub fn support_graph(model: &Icsg) -> SupportGraph {
    let edges = (0..model.num_states())
        .map(|s| {
            (0..model.num_cells(s))
                .filter_map(|c| {
                    model.row(s, c).map(|row| {
                        (
                            model.cell_action(s, c),
                            row.entries()
                                .iter()
                                .filter(|b| b.hi > 0.0)
                                .map(|b| b.successor)
                                .collect(),
                        )
                    })
                })
                .collect()
        })
        .collect();
    SupportGraph { edges }
}
