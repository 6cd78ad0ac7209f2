//! Nonzero-sum queries: robust social-welfare optimal Nash equilibria.
//!
//! Each state update builds a bimatrix stage game (nature resolving every
//! joint action against the welfare of the players still in play), enumerates
//! its ε-equilibria, drops those that some resolution of the intervals turns
//! into a profitable deviation, and keeps the welfare-optimal survivor.
//!
//! The players' progress is tracked per state as a status pair: a player is
//! `Active` until its target is reached (`Done`) or becomes unreachable
//! (`Hopeless`). Bounded objectives additionally stop counting once the
//! player's own horizon has passed.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{IcsgError, Result};
use crate::graph;
use crate::model::{ensure_valid, Icsg};
use crate::nfg::{enumerate_ne, select_swne, Matrix, MixedProfile, NE_SLACK};
use crate::par::sweep;
use crate::property::{Objective, Semantics};
use crate::uncertainty::{greedy, Direction};
use crate::zerosum::{max_relative_change, SolveOptions};

/// Default equilibrium tolerance for unbounded objectives.
pub const DEFAULT_EPSILON_UNBOUNDED: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Done,
    Hopeless,
}

pub type Combo = [Status; 2];

const START: Combo = [Status::Active, Status::Active];

fn code(c: Combo) -> usize {
    c[0] as usize * 3 + c[1] as usize
}

/// A pure deviation and the interval resolution that makes it pay the most.
#[derive(Clone, Debug, PartialEq)]
pub struct Deviation {
    pub player: usize,
    /// Index into `Icsg::choices(state, player)`.
    pub action: usize,
    pub gain: f64,
    /// Per cell, the resolution attaining the gain; empty for cells the gain
    /// does not depend on.
    pub nature: Vec<Vec<f64>>,
}

/// An equilibrium of the stage game under the nominal resolution, with its
/// robust deviation check.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateProfile {
    pub profile: MixedProfile,
    /// Largest robust gain of a pure deviation, per player.
    pub gains: [f64; 2],
    pub accepted: bool,
    /// The deviation with the largest gain.
    pub witness: Option<Deviation>,
}

/// A stage game of the nonzero-sum solver.
///
/// Continuations are given per cell and row entry as an interval `[lo, hi]`
/// that contains the player's future value under every resolution; for
/// unbounded objectives both ends are the current value estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct NzStage {
    pub state: usize,
    /// Payoffs of player 1 and player 2 under `nature`.
    pub z: [Matrix; 2],
    /// Welfare-adversarial (or, under controlled semantics, welfare-friendly)
    /// resolution per cell.
    pub nature: Vec<Vec<f64>>,
    /// Players whose payoff still depends on play.
    pub live: [bool; 2],
    reward: [Vec<f64>; 2],
    lo: [Vec<Vec<f64>>; 2],
    hi: [Vec<Vec<f64>>; 2],
}

impl NzStage {
    fn build(
        model: &Icsg,
        s: usize,
        live: [bool; 2],
        fixed: [f64; 2],
        reward: [Option<&[f64]>; 2],
        cont: impl Fn(usize, usize) -> [f64; 3],
        nature_dir: Direction,
    ) -> NzStage {
        let (rows, cols) = model.dims(s);
        let cells = rows * cols;
        let mut z = [Matrix::zeros(rows, cols), Matrix::zeros(rows, cols)];
        let mut nature = Vec::with_capacity(cells);
        let mut lo: [Vec<Vec<f64>>; 2] = [Vec::with_capacity(cells), Vec::with_capacity(cells)];
        let mut hi: [Vec<Vec<f64>>; 2] = [Vec::with_capacity(cells), Vec::with_capacity(cells)];
        let mut mid: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut rew = [vec![0.0; cells], vec![0.0; cells]];
        for c in 0..cells {
            let row = model.row_unchecked(s, c);
            let entries = row.entries();
            for l in 0..2 {
                lo[l].push(Vec::with_capacity(entries.len()));
                hi[l].push(Vec::with_capacity(entries.len()));
                mid[l].clear();
                if let Some(r) = reward[l] {
                    rew[l][c] = r[c];
                }
            }
            for b in entries {
                for l in 0..2 {
                    let [a, v, h] = if live[l] {
                        cont(l, b.successor)
                    } else {
                        [fixed[l]; 3]
                    };
                    lo[l][c].push(a);
                    mid[l].push(v);
                    hi[l][c].push(h);
                }
            }
            let welfare = |k: usize| (0..2).filter(|&l| live[l]).map(|l| mid[l][k]).sum::<f64>();
            let mut dist = vec![0.0; entries.len()];
            greedy(row, welfare, nature_dir, |k, p| dist[k] = p);
            for l in 0..2 {
                let u = if live[l] {
                    rew[l][c] + dot(&dist, &mid[l])
                } else {
                    fixed[l]
                };
                z[l].set(c / cols, c % cols, u);
            }
            nature.push(dist);
        }
        NzStage {
            state: s,
            z,
            nature,
            live,
            reward: rew,
            lo,
            hi,
        }
    }

    /// A stage with both players live and exact continuations `values[l][t]`.
    /// `rewards[l]`, when given, holds one reward per cell.
    pub fn from_values(
        model: &Icsg,
        state: usize,
        values: [&[f64]; 2],
        rewards: [Option<&[f64]>; 2],
        semantics: Semantics,
    ) -> Result<NzStage> {
        ensure_valid(model)?;
        if state >= model.num_states() {
            return Err(IcsgError::Unknown {
                kind: "state",
                name: state.to_string(),
            });
        }
        let n = model.num_states();
        let cells = model.num_cells(state);
        if values.iter().any(|v| v.len() != n) || rewards.iter().flatten().any(|r| r.len() != cells)
        {
            return Err(IcsgError::Unsupported(
                "stage continuation or reward vectors have the wrong length".into(),
            ));
        }
        Ok(NzStage::build(
            model,
            state,
            [true, true],
            [0.0, 0.0],
            rewards,
            |l, t| [values[l][t]; 3],
            welfare_nature(semantics),
        ))
    }

    /// All ε-equilibria of the stage game under `nature`.
    pub fn equilibria(&self, eps: f64) -> Result<Vec<MixedProfile>> {
        enumerate_ne(&self.z[0], &self.z[1], eps)
    }

    /// Largest gain, over all resolutions of the intervals, of `player`
    /// switching to its `action`-th choice while the other keeps `(x, y)`.
    pub fn deviation_gain(
        &self,
        model: &Icsg,
        x: &[f64],
        y: &[f64],
        player: usize,
        action: usize,
    ) -> Deviation {
        let (rows, cols) = model.dims(self.state);
        let mut nature = vec![Vec::new(); rows * cols];
        let mut gain = 0.0;
        if self.live[player] {
            for (c, slot) in nature.iter_mut().enumerate() {
                let (i, j) = (c / cols, c % cols);
                let coef = if player == 0 {
                    if i == action {
                        y[j] * (1.0 - x[action])
                    } else {
                        -y[j] * x[i]
                    }
                } else if j == action {
                    x[i] * (1.0 - y[action])
                } else {
                    -x[i] * y[j]
                };
                if coef == 0.0 {
                    continue;
                }
                let row = model.row_unchecked(self.state, c);
                let (vals, dir) = if coef > 0.0 {
                    (&self.hi[player][c], Direction::Maximize)
                } else {
                    (&self.lo[player][c], Direction::Minimize)
                };
                let mut dist = vec![0.0; row.len()];
                let cont = greedy(row, |k| vals[k], dir, |k, p| dist[k] = p);
                gain += coef * (self.reward[player][c] + cont);
                *slot = dist;
            }
        }
        Deviation {
            player,
            action,
            gain,
            nature,
        }
    }

    /// Annotates every candidate with its robust deviation check; a candidate
    /// is accepted when no pure deviation gains more than `eps`.
    pub fn filter_rne(
        &self,
        model: &Icsg,
        candidates: Vec<MixedProfile>,
        eps: f64,
    ) -> Vec<CandidateProfile> {
        let (rows, cols) = model.dims(self.state);
        candidates
            .into_iter()
            .map(|profile| {
                let mut gains = [f64::NEG_INFINITY; 2];
                let mut witness: Option<Deviation> = None;
                for (player, n) in [(0, rows), (1, cols)] {
                    for a in 0..n {
                        let d = self.deviation_gain(model, &profile.x, &profile.y, player, a);
                        gains[player] = gains[player].max(d.gain);
                        if witness.as_ref().is_none_or(|w| d.gain > w.gain) {
                            witness = Some(d);
                        }
                    }
                }
                let accepted = gains.iter().all(|&g| g <= eps + NE_SLACK);
                CandidateProfile {
                    profile,
                    gains,
                    accepted,
                    witness,
                }
            })
            .collect()
    }

    /// Player values of `(x, y)` when nature minimises (`Minimize`) or
    /// maximises each player's own continuation bound.
    fn bounds(&self, model: &Icsg, x: &[f64], y: &[f64], player: usize, dir: Direction) -> f64 {
        let (_, cols) = model.dims(self.state);
        let vals = match dir {
            Direction::Minimize => &self.lo[player],
            Direction::Maximize => &self.hi[player],
        };
        let mut total = 0.0;
        for (c, v) in vals.iter().enumerate() {
            let w = x[c / cols] * y[c % cols];
            if w == 0.0 {
                continue;
            }
            let row = model.row_unchecked(self.state, c);
            let cont = greedy(row, |k| v[k], dir, |_, _| {});
            total += w * (self.reward[player][c] + cont);
        }
        total
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(p, _)| **p != 0.0)
        .map(|(p, v)| p * v)
        .sum()
}

/// Nature's direction on social welfare.
pub fn welfare_nature(semantics: Semantics) -> Direction {
    match semantics {
        Semantics::Adversarial => Direction::Minimize,
        Semantics::Controlled => Direction::Maximize,
    }
}

/// The solved stage at one (step, state, status) triple.
#[derive(Clone, Debug, PartialEq)]
pub struct NzEntry {
    /// `None` for unbounded objectives.
    pub step: Option<usize>,
    pub state: usize,
    pub status: Combo,
    pub values: [f64; 2],
    /// Bounds on each player's value over all resolutions (equal to
    /// `values` for unbounded objectives).
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub nature: Vec<Vec<f64>>,
    /// Every stage equilibrium considered, accepted or not.
    pub candidates: Vec<CandidateProfile>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NzDiagnostics {
    pub iterations: usize,
    pub max_rel_change: f64,
    pub converged: bool,
    /// Chosen profiles whose robust deviation bound is below zero by more
    /// than 1e-9 for some player.
    pub negative_gains: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct NzSolution {
    /// Values of the two players at the initial state.
    pub values: [f64; 2],
    pub epsilon: f64,
    pub horizon: Option<usize>,
    /// Solved stages, ordered by step, state and status.
    pub entries: Vec<NzEntry>,
    pub diagnostics: NzDiagnostics,
    goals: Goals,
    index: HashMap<(usize, usize, usize), usize>,
}

impl NzSolution {
    /// The stage solved for `state` at `step` (ignored for unbounded
    /// objectives), given which players have already met their target.
    /// `None` when no decision there affects either player.
    pub fn entry_at(&self, step: usize, state: usize, reached: [bool; 2]) -> Option<&NzEntry> {
        let n = if self.horizon.is_some() { step } else { 0 };
        let incoming = reached.map(|r| if r { Status::Done } else { Status::Active });
        let c = self.goals.normalize(state, n, incoming);
        self.index
            .get(&(n, state, code(c)))
            .map(|&i| &self.entries[i])
    }

    /// Mixed strategies of both players, see [`NzSolution::entry_at`].
    pub fn profile_at(
        &self,
        step: usize,
        state: usize,
        reached: [bool; 2],
    ) -> Option<(&[f64], &[f64])> {
        self.entry_at(step, state, reached)
            .map(|e| (e.x.as_slice(), e.y.as_slice()))
    }
}

/// Why a query has no robust equilibrium.
#[derive(Clone, Debug, PartialEq)]
pub struct NoRne {
    pub state: usize,
    pub step: Option<usize>,
    /// Sweep of value iteration in which it happened (unbounded objectives).
    pub iteration: Option<usize>,
    pub status: Combo,
    /// The rejected stage equilibria.
    pub candidates: Vec<CandidateProfile>,
}

#[derive(Clone, Debug)]
pub enum NzOutcome {
    Solved(NzSolution),
    NoRne(NoRne),
}

#[derive(Clone, Debug)]
struct Goal {
    target: Option<Vec<bool>>,
    hopeless: Option<Vec<bool>>,
    /// Per state, per cell.
    reward: Option<Vec<Vec<f64>>>,
    horizon: Option<usize>,
    probabilistic: bool,
}

#[derive(Clone, Debug)]
struct Goals([Goal; 2]);

impl Goals {
    fn normalize(&self, s: usize, n: usize, mut c: Combo) -> Combo {
        for (l, g) in self.0.iter().enumerate() {
            if c[l] != Status::Active {
                continue;
            }
            if let Some(t) = &g.target {
                if t[s] && g.horizon.is_none_or(|k| n <= k) {
                    c[l] = Status::Done;
                } else if g.hopeless.as_ref().is_some_and(|h| h[s]) {
                    c[l] = Status::Hopeless;
                }
            }
        }
        c
    }

    /// The value of player `l` when it no longer depends on play.
    fn fixed(&self, l: usize, n: usize, c: Combo) -> Option<f64> {
        let g = &self.0[l];
        match c[l] {
            Status::Done => Some(if g.probabilistic { 1.0 } else { 0.0 }),
            Status::Hopeless => Some(0.0),
            Status::Active if g.horizon.is_some_and(|k| n >= k) => Some(0.0),
            Status::Active => None,
        }
    }

    fn live(&self, n: usize, c: Combo) -> [bool; 2] {
        [self.fixed(0, n, c).is_none(), self.fixed(1, n, c).is_none()]
    }
}

struct Solver<'a> {
    model: &'a Icsg,
    goals: Goals,
    eps: f64,
    nature_dir: Direction,
    boxed: bool,
}

type Settled = std::result::Result<NzEntry, Vec<CandidateProfile>>;

impl Solver<'_> {
    fn stage(
        &self,
        s: usize,
        n: usize,
        c: Combo,
        cont: impl Fn(usize, usize) -> [f64; 3],
    ) -> NzStage {
        let live = self.goals.live(n, c);
        let fixed = [0, 1].map(|l| self.goals.fixed(l, n, c).unwrap_or(0.0));
        let reward = [0, 1].map(|l| self.goals.0[l].reward.as_ref().map(|r| r[s].as_slice()));
        NzStage::build(self.model, s, live, fixed, reward, cont, self.nature_dir)
    }

    fn settle(&self, stage: NzStage, step: Option<usize>, c: Combo) -> Result<Settled> {
        let candidates = stage.equilibria(self.eps)?;
        let annotated = stage.filter_rne(self.model, candidates, self.eps);
        let accepted: Vec<&CandidateProfile> = annotated.iter().filter(|a| a.accepted).collect();
        let profiles: Vec<MixedProfile> = accepted.iter().map(|a| a.profile.clone()).collect();
        let Some(best) = select_swne(&profiles) else {
            return Ok(Err(annotated));
        };
        let chosen = &profiles[best];
        let values = [chosen.u1, chosen.u2];
        let (lower, upper) = if self.boxed {
            let b = |d| {
                [0, 1].map(|l| {
                    if stage.live[l] {
                        stage.bounds(self.model, &chosen.x, &chosen.y, l, d)
                    } else {
                        values[l]
                    }
                })
            };
            (b(Direction::Minimize), b(Direction::Maximize))
        } else {
            (values, values)
        };
        Ok(Ok(NzEntry {
            step,
            state: stage.state,
            status: c,
            values,
            lower,
            upper,
            x: chosen.x.clone(),
            y: chosen.y.clone(),
            nature: stage.nature,
            candidates: annotated,
        }))
    }

    /// Live (state, status) pairs reachable at each step from the initial
    /// state, following the support graph.
    fn expand(&self, from: &BTreeSet<(usize, Combo)>, n: usize) -> BTreeSet<(usize, Combo)> {
        let m = self.model;
        let mut out = BTreeSet::new();
        for &(s, c) in from {
            if self.goals.live(n, c) == [false, false] {
                continue;
            }
            for cell in 0..m.num_cells(s) {
                for t in m.row_unchecked(s, cell).successors() {
                    out.insert((t, self.goals.normalize(t, n + 1, c)));
                }
            }
        }
        out
    }

    fn bounded(&self, k: usize) -> Result<NzOutcome> {
        let m = self.model;
        let s0 = m.initial();
        let mut layers = vec![BTreeSet::from([(s0, self.goals.normalize(s0, 0, START))])];
        for n in 0..k {
            let next = self.expand(&layers[n], n);
            layers.push(next);
        }
        let mut index: HashMap<(usize, usize, usize), usize> = HashMap::new();
        let mut entries: Vec<NzEntry> = Vec::new();
        for n in (0..k).rev() {
            let items: Vec<(usize, Combo)> = layers[n]
                .iter()
                .copied()
                .filter(|&(_, c)| self.goals.live(n, c) != [false, false])
                .collect();
            let (idx, ents) = (&index, &entries);
            let settled = sweep(items.len(), |i| {
                let (s, c) = items[i];
                let stage = self.stage(s, n, c, |l, t| {
                    let c2 = self.goals.normalize(t, n + 1, c);
                    if let Some(f) = self.goals.fixed(l, n + 1, c2) {
                        return [f; 3];
                    }
                    let e = &ents[idx[&(n + 1, t, code(c2))]];
                    [e.lower[l], e.values[l], e.upper[l]]
                });
                self.settle(stage, Some(n), c)
            })?;
            for ((s, c), r) in items.into_iter().zip(settled) {
                match r {
                    Ok(e) => {
                        index.insert((n, s, code(c)), entries.len());
                        entries.push(e);
                    }
                    Err(candidates) => {
                        return Ok(NzOutcome::NoRne(NoRne {
                            state: s,
                            step: Some(n),
                            iteration: None,
                            status: c,
                            candidates,
                        }))
                    }
                }
            }
        }
        let c0 = self.goals.normalize(s0, 0, START);
        let values = match index.get(&(0, s0, code(c0))) {
            Some(&i) => entries[i].values,
            None => [0, 1].map(|l| self.goals.fixed(l, 0, c0).unwrap_or(0.0)),
        };
        Ok(self.finish(
            values,
            Some(k),
            entries,
            NzDiagnostics {
                iterations: k,
                max_rel_change: 0.0,
                converged: true,
                ..Default::default()
            },
        ))
    }

    fn unbounded(&self, opts: &SolveOptions) -> Result<NzOutcome> {
        let m = self.model;
        let s0 = m.initial();
        let c0 = self.goals.normalize(s0, 0, START);
        let mut seen = BTreeSet::from([(s0, c0)]);
        let mut frontier = seen.clone();
        while !frontier.is_empty() {
            let next: BTreeSet<_> = self
                .expand(&frontier, 0)
                .difference(&seen)
                .copied()
                .collect();
            seen.extend(next.iter().copied());
            frontier = next;
        }
        let items: Vec<(usize, Combo)> = seen
            .into_iter()
            .filter(|&(_, c)| self.goals.live(0, c) != [false, false])
            .collect();
        let pos: HashMap<(usize, usize), usize> = items
            .iter()
            .enumerate()
            .map(|(i, &(s, c))| ((s, code(c)), i))
            .collect();
        let mut values = vec![[0.0f64; 2]; items.len()];
        let mut entries = Vec::new();
        let mut diag = NzDiagnostics::default();
        for iteration in 1..=opts.max_iters.max(1) {
            let prev = &values;
            let settled = sweep(items.len(), |i| {
                let (s, c) = items[i];
                let stage = self.stage(s, 0, c, |l, t| {
                    let c2 = self.goals.normalize(t, 0, c);
                    let v = match self.goals.fixed(l, 0, c2) {
                        Some(f) => f,
                        None => prev[pos[&(t, code(c2))]][l],
                    };
                    [v; 3]
                });
                self.settle(stage, None, c)
            })?;
            let mut fresh = Vec::with_capacity(items.len());
            for (&(s, c), r) in items.iter().zip(settled) {
                match r {
                    Ok(e) => fresh.push(e),
                    Err(candidates) => {
                        return Ok(NzOutcome::NoRne(NoRne {
                            state: s,
                            step: None,
                            iteration: Some(iteration),
                            status: c,
                            candidates,
                        }))
                    }
                }
            }
            let next: Vec<[f64; 2]> = fresh.iter().map(|e| e.values).collect();
            let flat = |v: &[[f64; 2]]| v.iter().flatten().copied().collect::<Vec<f64>>();
            diag.max_rel_change = max_relative_change(&flat(&values), &flat(&next));
            diag.iterations = iteration;
            values = next;
            entries = fresh;
            if diag.max_rel_change < opts.tol {
                diag.converged = true;
                break;
            }
        }
        let start = match pos.get(&(s0, code(c0))) {
            Some(&i) => values[i],
            None => [0, 1].map(|l| self.goals.fixed(l, 0, c0).unwrap_or(0.0)),
        };
        Ok(self.finish(start, None, entries, diag))
    }

    fn finish(
        &self,
        values: [f64; 2],
        horizon: Option<usize>,
        mut entries: Vec<NzEntry>,
        mut diagnostics: NzDiagnostics,
    ) -> NzOutcome {
        entries.sort_by_key(|e| (e.step, e.state, e.status));
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.step.unwrap_or(0), e.state, code(e.status)), i))
            .collect();
        diagnostics.negative_gains = entries
            .iter()
            .filter(|e| {
                e.candidates
                    .iter()
                    .find(|c| c.accepted && c.profile.x == e.x && c.profile.y == e.y)
                    .is_some_and(|c| c.gains.iter().any(|&g| g < -1e-9))
            })
            .count();
        NzOutcome::Solved(NzSolution {
            values,
            epsilon: self.eps,
            horizon,
            entries,
            diagnostics,
            goals: self.goals.clone(),
            index,
        })
    }
}

fn goal(model: &Icsg, objective: &Objective) -> Result<Goal> {
    let target = objective.target().map(|t| model.target(t)).transpose()?;
    let hopeless = target.as_ref().map(|t| graph::cannot_reach(model, t));
    let reward = match objective.reward() {
        Some(name) => {
            let r = model.reward(name)?;
            Some(
                (0..model.num_states())
                    .map(|s| {
                        (0..model.num_cells(s))
                            .map(|c| r.total(s, model.cell_action(s, c)))
                            .collect()
                    })
                    .collect(),
            )
        }
        None => None,
    };
    Ok(Goal {
        target,
        hopeless,
        reward,
        horizon: objective.horizon(),
        probabilistic: objective.is_probabilistic(),
    })
}

/// Robust social-welfare optimal equilibrium of a nonzero-sum query.
/// `players[i]` names the player optimising `objectives[i]`.
pub fn solve(
    model: &Icsg,
    players: &[String; 2],
    objectives: &[Objective; 2],
    opts: &SolveOptions,
) -> Result<NzOutcome> {
    ensure_valid(model)?;
    let idx = players.each_ref().map(|p| {
        model.player_index(p).ok_or_else(|| IcsgError::Unknown {
            kind: "player",
            name: p.clone(),
        })
    });
    let [i0, i1] = idx;
    let (i0, i1) = (i0?, i1?);
    if i0 == i1 {
        return Err(IcsgError::Unsupported(format!(
            "nonzero-sum query names player `{}` twice",
            players[0]
        )));
    }
    let mut ordered = [objectives[0].clone(), objectives[1].clone()];
    if i0 == 1 {
        ordered.swap(0, 1);
    }
    solve_indexed(model, &ordered, opts)
}

/// As [`solve`], with `objectives[l]` belonging to player `l`.
pub fn solve_indexed(
    model: &Icsg,
    objectives: &[Objective; 2],
    opts: &SolveOptions,
) -> Result<NzOutcome> {
    ensure_valid(model)?;
    let horizon = match (objectives[0].horizon(), objectives[1].horizon()) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (None, None) => None,
        _ => return Err(IcsgError::MixedHorizon),
    };
    let goals = Goals([goal(model, &objectives[0])?, goal(model, &objectives[1])?]);
    let eps = opts.epsilon_ne.unwrap_or(match horizon {
        Some(_) => 0.0,
        None => DEFAULT_EPSILON_UNBOUNDED,
    });
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(IcsgError::Unsupported(format!(
            "equilibrium tolerance must be a non-negative number, got {eps}"
        )));
    }
    let solver = Solver {
        model,
        goals,
        eps,
        nature_dir: welfare_nature(opts.semantics),
        boxed: horizon.is_some(),
    };
    match horizon {
        Some(k) => solver.bounded(k),
        None => {
            let mut out = solver.unbounded(opts)?;
            if let NzOutcome::Solved(sol) = &mut out {
                sol.diagnostics.warnings = stopping_warnings(model, &solver.goals);
            }
            Ok(out)
        }
    }
}

/// Warns about players whose target or dead end is not reached almost
/// surely from the initial state under every profile.
fn stopping_warnings(model: &Icsg, goals: &Goals) -> Vec<String> {
    let mut out = Vec::new();
    for (l, g) in goals.0.iter().enumerate() {
        let (Some(t), Some(h)) = (&g.target, &g.hopeless) else {
            continue;
        };
        let settled: Vec<bool> = t.iter().zip(h).map(|(a, b)| *a || *b).collect();
        if graph::not_almost_sure(model, &settled)[model.initial()] {
            out.push(format!(
                "player {} may avoid both its target and its dead ends forever; value iteration is not guaranteed to converge",
                model.players()[l]
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench;

    fn solved(out: NzOutcome) -> NzSolution {
        match out {
            NzOutcome::Solved(s) => s,
            NzOutcome::NoRne(r) => panic!("unexpected NoRne: {r:?}"),
        }
    }

    fn cumulative(r: &str, k: usize) -> Objective {
        Objective::BoundedCumulative {
            reward: r.into(),
            k,
        }
    }

    fn bounded_reach(t: &str, k: usize) -> Objective {
        Objective::BoundedReach {
            target: t.into(),
            k,
        }
    }

    #[test]
    fn coordination_game_rejects_fragile_equilibrium() {
        let m = bench::appendix_d3();
        let opts = SolveOptions {
            epsilon_ne: Some(0.05),
            ..Default::default()
        };
        let sol =
            solved(solve_indexed(&m, &[cumulative("r1", 2), cumulative("r2", 2)], &opts).unwrap());
        let e = sol.entry_at(0, 0, [false, false]).unwrap();
        assert_eq!(e.x, vec![1.0, 0.0]);
        assert_eq!(e.y, vec![1.0, 0.0]);
        assert!((sol.values[0] - 1.0).abs() < 1e-12 && (sol.values[1] - 1.0).abs() < 1e-12);

        let bb = e
            .candidates
            .iter()
            .find(|c| c.profile.x == [0.0, 1.0] && c.profile.y == [0.0, 1.0])
            .expect("(B,B) is a stage equilibrium under the nominal resolution");
        assert!(!bb.accepted);
        assert!((bb.profile.u1 - 0.4).abs() < 1e-12 && (bb.profile.u2 - 0.8).abs() < 1e-12);
        assert!((bb.gains[1] - 0.1).abs() < 1e-12);
        let w = bb.witness.as_ref().unwrap();
        assert_eq!((w.player, w.action), (1, 0));
        // the (B,B) cell is pushed towards x: P(x) = 0.4
        let cell = m.num_cells(0) - 1;
        assert!((w.nature[cell][0] - 0.4).abs() < 1e-12);

        let aa = e
            .candidates
            .iter()
            .find(|c| c.profile.x == [1.0, 0.0] && c.profile.y == [1.0, 0.0])
            .unwrap();
        assert!(aa.accepted);
        assert!(aa.gains.iter().all(|&g| g <= -0.3 + 1e-12 || g == 0.0));
    }

    #[test]
    fn no_robust_equilibrium_is_reported() {
        let m = bench::fig_a2();
        let out = solve_indexed(
            &m,
            &[bounded_reach("g1", 2), bounded_reach("g2", 2)],
            &SolveOptions::default(),
        )
        .unwrap();
        let NzOutcome::NoRne(r) = out else {
            panic!("expected NoRne")
        };
        assert_eq!(r.state, 0);
        assert_eq!(r.step, Some(0));
        assert!(r.candidates.iter().all(|c| !c.accepted && c.gains[1] > 0.3));
    }

    #[test]
    fn fig_a1_pure_equilibrium() {
        let m = bench::fig_a1();
        let sol = solved(
            solve_indexed(
                &m,
                &[cumulative("r1", 1), bounded_reach("goal", 1)],
                &SolveOptions::default(),
            )
            .unwrap(),
        );
        let (x, y) = sol.profile_at(0, 0, [false, false]).unwrap();
        assert_eq!((x, y), (&[1.0, 0.0][..], &[1.0, 0.0][..]));
        assert!((sol.values[0] - 1.0).abs() < 1e-12);
        assert!((sol.values[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn player_order_follows_names() {
        let m = bench::fig_a1();
        let players = ["p2".to_string(), "p1".to_string()];
        let sol = solved(
            solve(
                &m,
                &players,
                &[bounded_reach("goal", 1), cumulative("r1", 1)],
                &SolveOptions::default(),
            )
            .unwrap(),
        );
        assert!((sol.values[0] - 1.0).abs() < 1e-12 && (sol.values[1] - 0.7).abs() < 1e-12);
        assert!(matches!(
            solve(
                &m,
                &["p1".into(), "p1".into()],
                &[bounded_reach("goal", 1), cumulative("r1", 1)],
                &SolveOptions::default()
            ),
            Err(IcsgError::Unsupported(_))
        ));
    }

    #[test]
    fn mixed_horizon_rejected() {
        let m = bench::fig_a1();
        let r = solve_indexed(
            &m,
            &[
                cumulative("r1", 1),
                Objective::Reach {
                    target: "goal".into(),
                },
            ],
            &SolveOptions::default(),
        );
        assert!(matches!(r, Err(IcsgError::MixedHorizon)));
    }

    #[test]
    fn unbounded_reach_shared_target() {
        let m = bench::fig_a1();
        let reach = Objective::Reach {
            target: "goal".into(),
        };
        let sol =
            solved(solve_indexed(&m, &[reach.clone(), reach], &SolveOptions::default()).unwrap());
        // both want s2: (a2,b1) reaches it surely
        assert!((sol.values[0] - 1.0).abs() < 1e-9 && (sol.values[1] - 1.0).abs() < 1e-9);
        assert!(sol.diagnostics.converged);
        assert_eq!(sol.epsilon, DEFAULT_EPSILON_UNBOUNDED);
    }

    #[test]
    fn deviation_gain_matches_hand_computation() {
        let m = bench::appendix_d3();
        let values = [
            [0.0, 1.0, 0.2, 0.2, 2.0, 0.0],
            [0.0, 1.0, 0.2, 0.7, 0.0, 1.0],
        ];
        let stage = NzStage::from_values(
            &m,
            0,
            [&values[0], &values[1]],
            [None, None],
            Semantics::Adversarial,
        )
        .unwrap();
        assert!((stage.z[0].get(1, 1) - 0.4).abs() < 1e-12);
        assert!((stage.z[1].get(1, 1) - 0.8).abs() < 1e-12);
        // (B,B), player 1 switches to A: 0.2 against a worst case of 2 * 0.2
        let d = stage.deviation_gain(&m, &[0.0, 1.0], &[0.0, 1.0], 0, 0);
        assert!((d.gain - (0.2 - 0.4)).abs() < 1e-12);
        // a deviation to the action already played gains nothing
        let d = stage.deviation_gain(&m, &[0.0, 1.0], &[0.0, 1.0], 1, 1);
        assert_eq!(d.gain, 0.0);
    }
}
