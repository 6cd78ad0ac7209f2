//! Zero-sum queries: robust value iteration (unbounded objectives) and robust
//! backward induction (bounded objectives).
//!
//! Every state update builds the stage matrix game of the coalition player
//! against the opponent, with each joint action's continuation resolved by
//! nature through the greedy inner problem, and solves it by LP.

use serde::{Deserialize, Serialize};

use crate::error::{IcsgError, Result};
use crate::graph;
use crate::model::{ensure_valid, Icsg};
use crate::nfg::{solve_matrix, Matrix};
use crate::par::sweep;
use crate::property::{Objective, Semantics};
use crate::uncertainty::{greedy, Direction};

/// Knobs shared by the solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub semantics: Semantics,
    /// Relative-change threshold for value iteration.
    pub tol: f64,
    pub max_iters: usize,
    /// Replacement for zero rewards in the first phase of reachability-reward
    /// iteration.
    pub gamma: f64,
    /// Equilibrium tolerance for nonzero-sum queries; `None` picks the
    /// horizon-dependent default.
    pub epsilon_ne: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            semantics: Semantics::Adversarial,
            tol: 1e-6,
            max_iters: 100_000,
            gamma: 1e-4,
            epsilon_ne: None,
        }
    }
}

/// A per-state schedule, either stationary or indexed by step (step 0 is the
/// first decision, with the whole horizon remaining).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Timed<T> {
    Memoryless(Vec<T>),
    TimeVarying(Vec<Vec<T>>),
}

impl<T> Timed<T> {
    /// The per-state table used at `step`.
    pub fn at(&self, step: usize) -> Option<&[T]> {
        match self {
            Timed::Memoryless(v) => Some(v),
            Timed::TimeVarying(v) => v.get(step).map(|x| x.as_slice()),
        }
    }

    pub fn is_time_varying(&self) -> bool {
        matches!(self, Timed::TimeVarying(_))
    }
}

/// A player's mixed strategy: per state, a distribution over
/// `Icsg::choices(state, player)`; `None` where the value is fixed and no
/// decision is needed.
pub type PlayerStrategy = Timed<Option<Vec<f64>>>;

/// Nature's deterministic strategy: per state, per cell, a distribution
/// aligned with the row entries. `None` where no resolution is needed.
pub type NatureStrategy = Timed<Option<Vec<Vec<f64>>>>;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Sweeps per phase (one phase, or two for reachability rewards).
    pub iterations: Vec<usize>,
    /// Largest relative change in the last sweep (0 for bounded objectives).
    pub max_rel_change: f64,
    /// Unbounded objectives: the stopping rule is the relative-change heuristic,
    /// which does not bound the distance to the true value. Bounded
    /// objectives are exact and always report `true`.
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZsSolution {
    pub values: Vec<f64>,
    pub strategies: [PlayerStrategy; 2],
    pub nature: NatureStrategy,
    pub diagnostics: Diagnostics,
}

/// Result of one state update.
#[derive(Clone, Debug, PartialEq)]
pub struct StateUpdate {
    pub value: f64,
    /// Mixed strategies of player 1 and player 2.
    pub strategies: [Vec<f64>; 2],
    /// Nature's resolution per cell.
    pub nature: Vec<Vec<f64>>,
}

/// Where nature's resolutions come from.
#[derive(Clone, Copy, Debug)]
pub enum Nature<'a> {
    /// Solve the inner problem in this direction.
    Robust(Direction),
    /// Use fixed resolutions.
    Fixed(&'a NatureStrategy),
}

struct Stage<'a> {
    model: &'a Icsg,
    coalition: usize,
    dir: Direction,
    /// Per state, per cell reward.
    reward: Option<Vec<Vec<f64>>>,
}

impl Stage<'_> {
    fn update(
        &self,
        s: usize,
        prev: &[f64],
        nature: Nature<'_>,
        step: usize,
        record: bool,
    ) -> Result<StateUpdate> {
        let m = self.model;
        let (rows, cols) = m.dims(s);
        let mut resolutions = Vec::with_capacity(if record { rows * cols } else { 0 });
        let mut z = Matrix::zeros(rows, cols);
        for c in 0..rows * cols {
            let row = m.row_unchecked(s, c);
            let entries = row.entries();
            let cont = match nature {
                Nature::Robust(d) => {
                    if record {
                        let mut dist = vec![0.0; row.len()];
                        let v = greedy(row, |k| prev[entries[k].successor], d, |k, p| dist[k] = p);
                        resolutions.push(dist);
                        v
                    } else {
                        greedy(row, |k| prev[entries[k].successor], d, |_, _| {})
                    }
                }
                Nature::Fixed(strategy) => {
                    let dist = fixed_row(m, strategy, step, s, c)?;
                    if record {
                        resolutions.push(dist.to_vec());
                    }
                    expectation(entries.iter().map(|b| b.successor), dist, prev)
                }
            };
            let r = self.reward.as_ref().map_or(0.0, |r| r[s][c]);
            z.set(c / cols, c % cols, r + cont);
        }
        let (value, strategies) = solve_for(&z, self.coalition, self.dir)?;
        Ok(StateUpdate {
            value,
            strategies,
            nature: resolutions,
        })
    }
}

fn expectation(succ: impl Iterator<Item = usize>, dist: &[f64], prev: &[f64]) -> f64 {
    succ.zip(dist)
        .filter(|(_, &p)| p != 0.0)
        .map(|(t, &p)| p * prev[t])
        .sum()
}

pub(crate) fn fixed_row<'n>(
    model: &Icsg,
    strategy: &'n NatureStrategy,
    step: usize,
    s: usize,
    c: usize,
) -> Result<&'n [f64]> {
    let missing = || IcsgError::MissingResolution {
        state: model.state_name(s).to_string(),
        cell: c,
        step: strategy.is_time_varying().then_some(step),
    };
    let rows = strategy
        .at(step)
        .and_then(|t| t.get(s))
        .and_then(|r| r.as_ref())
        .ok_or_else(missing)?;
    let dist = rows.get(c).ok_or_else(missing)?;
    if dist.len() != model.row_unchecked(s, c).len() {
        return Err(missing());
    }
    Ok(dist)
}

/// Solves the stage matrix `z` (rows: player 1, columns: player 2) for the
/// coalition player optimising in `dir`. Returns the value and both players'
/// strategies.
pub fn solve_for(z: &Matrix, coalition: usize, dir: Direction) -> Result<(f64, [Vec<f64>; 2])> {
    let oriented = if coalition == 0 {
        z.clone()
    } else {
        z.transpose()
    };
    let game = match dir {
        Direction::Maximize => oriented,
        Direction::Minimize => oriented.map(|v| -v),
    };
    let sol = solve_matrix(&game)?;
    let value = match dir {
        Direction::Maximize => sol.value,
        Direction::Minimize => -sol.value,
    };
    let strategies = if coalition == 0 {
        [sol.x, sol.y]
    } else {
        [sol.y, sol.x]
    };
    Ok((value, strategies))
}

/// Nature's direction for a coalition optimising in `dir`.
pub fn nature_direction(dir: Direction, semantics: Semantics) -> Direction {
    match semantics {
        Semantics::Adversarial => dir.flip(),
        Semantics::Controlled => dir,
    }
}

/// One state update with the robust inner problem, for inspection and tests.
pub fn state_update(
    model: &Icsg,
    state: usize,
    prev: &[f64],
    coalition: usize,
    dir: Direction,
    objective: &Objective,
    semantics: Semantics,
) -> Result<StateUpdate> {
    ensure_valid(model)?;
    let stage = Stage {
        model,
        coalition,
        dir,
        reward: rewards(model, objective, None)?,
    };
    stage.update(
        state,
        prev,
        Nature::Robust(nature_direction(dir, semantics)),
        0,
        true,
    )
}

/// Per-cell rewards of the objective, with zeros replaced by `gamma` if given.
fn rewards(
    model: &Icsg,
    objective: &Objective,
    gamma: Option<f64>,
) -> Result<Option<Vec<Vec<f64>>>> {
    let Some(name) = objective.reward() else {
        return Ok(None);
    };
    let r = model.reward(name)?;
    Ok(Some(
        (0..model.num_states())
            .map(|s| {
                (0..model.num_cells(s))
                    .map(|c| {
                        let v = r.total(s, model.cell_action(s, c));
                        match gamma {
                            Some(g) if v == 0.0 => g,
                            _ => v,
                        }
                    })
                    .collect()
            })
            .collect(),
    ))
}

/// Robust value and strategies of a zero-sum query. `coalition` is the
/// player index (0 or 1) optimising `objective` in direction `dir`.
pub fn solve(
    model: &Icsg,
    coalition: usize,
    dir: Direction,
    objective: &Objective,
    opts: &SolveOptions,
) -> Result<ZsSolution> {
    run(
        model,
        coalition,
        dir,
        objective,
        opts,
        Nature::Robust(nature_direction(dir, opts.semantics)),
    )
}

/// Values of the query when nature is fixed to `nature` (a plain concurrent
/// game). Finite-horizon strategies are indexed by step.
pub fn evaluate_under_nature(
    model: &Icsg,
    nature: &NatureStrategy,
    coalition: usize,
    dir: Direction,
    objective: &Objective,
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    Ok(run(
        model,
        coalition,
        dir,
        objective,
        opts,
        Nature::Fixed(nature),
    )?
    .values)
}

fn run(
    model: &Icsg,
    coalition: usize,
    dir: Direction,
    objective: &Objective,
    opts: &SolveOptions,
    nature: Nature<'_>,
) -> Result<ZsSolution> {
    ensure_valid(model)?;
    if coalition > 1 {
        return Err(IcsgError::Unknown {
            kind: "player",
            name: coalition.to_string(),
        });
    }
    let n = model.num_states();
    match objective {
        Objective::BoundedReach { target, k } => {
            let t = model.target(target)?;
            let pins: Vec<Option<f64>> = t.iter().map(|&x| x.then_some(1.0)).collect();
            let init: Vec<f64> = pins.iter().map(|p| p.unwrap_or(0.0)).collect();
            let stage = Stage {
                model,
                coalition,
                dir,
                reward: None,
            };
            backward(&stage, &pins, init, *k, nature)
        }
        Objective::BoundedCumulative { reward, k } => {
            model.reward(reward)?;
            let stage = Stage {
                model,
                coalition,
                dir,
                reward: rewards(model, objective, None)?,
            };
            backward(&stage, &vec![None; n], vec![0.0; n], *k, nature)
        }
        Objective::Reach { target } => {
            let t = model.target(target)?;
            let u = graph::cannot_reach(model, &t);
            let pins: Vec<Option<f64>> = (0..n)
                .map(|s| {
                    if t[s] {
                        Some(1.0)
                    } else if u[s] {
                        Some(0.0)
                    } else {
                        None
                    }
                })
                .collect();
            let init = pins.iter().map(|p| p.unwrap_or(0.0)).collect();
            let stage = Stage {
                model,
                coalition,
                dir,
                reward: None,
            };
            let (values, strategies, nat, diag) = iterate(&stage, &pins, init, nature, opts)?;
            Ok(ZsSolution {
                values,
                strategies,
                nature: nat,
                diagnostics: Diagnostics {
                    iterations: vec![diag.0],
                    max_rel_change: diag.1,
                    converged: diag.2,
                },
            })
        }
        Objective::ReachReward { reward, target } => {
            let t = model.target(target)?;
            check_negative_rewards(model, reward, &t)?;
            let u_inf = graph::not_almost_sure(model, &t);
            let pins: Vec<Option<f64>> = (0..n)
                .map(|s| {
                    if t[s] {
                        Some(0.0)
                    } else if u_inf[s] {
                        Some(f64::INFINITY)
                    } else {
                        None
                    }
                })
                .collect();
            let init: Vec<f64> = pins.iter().map(|p| p.unwrap_or(0.0)).collect();
            let phase1 = Stage {
                model,
                coalition,
                dir,
                reward: rewards(model, objective, Some(opts.gamma))?,
            };
            let (v1, _, _, d1) = iterate(&phase1, &pins, init, nature, opts)?;
            let phase2 = Stage {
                model,
                coalition,
                dir,
                reward: rewards(model, objective, None)?,
            };
            let (values, strategies, nat, d2) = iterate(&phase2, &pins, v1, nature, opts)?;
            Ok(ZsSolution {
                values,
                strategies,
                nature: nat,
                diagnostics: Diagnostics {
                    iterations: vec![d1.0, d2.0],
                    max_rel_change: d2.1,
                    converged: d1.2 && d2.2,
                },
            })
        }
    }
}

/// Negative rewards are only accepted at states from which, under every
/// profile, the target or a zero-reward trap is reached almost surely.
fn check_negative_rewards(model: &Icsg, reward: &str, target: &[bool]) -> Result<()> {
    let r = model.reward(reward)?;
    let negative: Vec<usize> = (0..model.num_states())
        .filter(|&s| {
            !target[s] && (0..model.num_cells(s)).any(|c| r.total(s, model.cell_action(s, c)) < 0.0)
        })
        .collect();
    if negative.is_empty() {
        return Ok(());
    }
    let trap = graph::zero_reward_trap(model, r);
    let safe: Vec<bool> = (0..model.num_states())
        .map(|s| target[s] || trap[s])
        .collect();
    let escape = graph::not_almost_sure(model, &safe);
    match negative.into_iter().find(|&s| escape[s]) {
        Some(s) => Err(IcsgError::NegativeRewardAssumption {
            reward: reward.to_string(),
            state: model.state_name(s).to_string(),
        }),
        None => Ok(()),
    }
}

type Recorded = ([PlayerStrategy; 2], NatureStrategy);

fn backward(
    stage: &Stage<'_>,
    pins: &[Option<f64>],
    init: Vec<f64>,
    k: usize,
    nature: Nature<'_>,
) -> Result<ZsSolution> {
    let n = pins.len();
    let mut values = init;
    let mut strat: [Vec<Vec<Option<Vec<f64>>>>; 2] = [vec![Vec::new(); k], vec![Vec::new(); k]];
    let mut nat: Vec<Vec<Option<Vec<Vec<f64>>>>> = vec![Vec::new(); k];
    // remaining = 1..=k; the decision with `remaining` steps left is step k - remaining
    for remaining in 1..=k {
        let step = k - remaining;
        let prev = &values;
        let updates = sweep(n, |s| match pins[s] {
            Some(_) => Ok(None),
            None => stage.update(s, prev, nature, step, true).map(Some),
        })?;
        let mut next = values.clone();
        let mut s1 = Vec::with_capacity(n);
        let mut s2 = Vec::with_capacity(n);
        let mut ns = Vec::with_capacity(n);
        for (s, u) in updates.into_iter().enumerate() {
            match u {
                Some(u) => {
                    next[s] = u.value;
                    let [a, b] = u.strategies;
                    s1.push(Some(a));
                    s2.push(Some(b));
                    ns.push(Some(u.nature));
                }
                None => {
                    s1.push(None);
                    s2.push(None);
                    ns.push(None);
                }
            }
        }
        strat[0][step] = s1;
        strat[1][step] = s2;
        nat[step] = ns;
        values = next;
    }
    let [a, b] = strat;
    Ok(ZsSolution {
        values,
        strategies: [Timed::TimeVarying(a), Timed::TimeVarying(b)],
        nature: Timed::TimeVarying(nat),
        diagnostics: Diagnostics {
            iterations: vec![k],
            max_rel_change: 0.0,
            converged: true,
        },
    })
}

/// Largest relative change between two value vectors; infinite entries that
/// agree count as unchanged.
pub fn max_relative_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(&o, &v)| {
            if o == v {
                0.0
            } else if v != 0.0 && v.is_finite() {
                ((v - o) / v).abs()
            } else {
                (v - o).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Value iteration to the relative-change threshold, then one more pass
/// from the second-to-last vector to extract the strategies that produced
/// the final values.
#[allow(clippy::type_complexity)]
fn iterate(
    stage: &Stage<'_>,
    pins: &[Option<f64>],
    init: Vec<f64>,
    nature: Nature<'_>,
    opts: &SolveOptions,
) -> Result<(
    Vec<f64>,
    [PlayerStrategy; 2],
    NatureStrategy,
    (usize, f64, bool),
)> {
    let n = pins.len();
    let mut values = init;
    let mut prev = values.clone();
    let mut iters = 0;
    let mut change = 0.0;
    let mut converged = false;
    let free = pins.iter().any(|p| p.is_none());
    while free && iters < opts.max_iters {
        let cur = &values;
        let next = sweep(n, |s| match pins[s] {
            Some(v) => Ok(v),
            None => stage.update(s, cur, nature, 0, false).map(|u| u.value),
        })?;
        iters += 1;
        change = max_relative_change(&values, &next);
        prev = std::mem::replace(&mut values, next);
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !free {
        converged = true;
    }
    let (strategies, nat) = extract(stage, pins, &prev, nature)?;
    Ok((values, strategies, nat, (iters, change, converged)))
}

fn extract(
    stage: &Stage<'_>,
    pins: &[Option<f64>],
    prev: &[f64],
    nature: Nature<'_>,
) -> Result<Recorded> {
    let n = pins.len();
    let updates = sweep(n, |s| match pins[s] {
        Some(_) => Ok(None),
        None => stage.update(s, prev, nature, 0, true).map(Some),
    })?;
    let mut s1 = Vec::with_capacity(n);
    let mut s2 = Vec::with_capacity(n);
    let mut ns = Vec::with_capacity(n);
    for u in updates {
        match u {
            Some(u) => {
                let [a, b] = u.strategies;
                s1.push(Some(a));
                s2.push(Some(b));
                ns.push(Some(u.nature));
            }
            None => {
                s1.push(None);
                s2.push(None);
                ns.push(None);
            }
        }
    }
    Ok((
        [Timed::Memoryless(s1), Timed::Memoryless(s2)],
        Timed::Memoryless(ns),
    ))
}
