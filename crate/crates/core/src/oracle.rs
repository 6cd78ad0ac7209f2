//! Brute-force reference implementations: exhaustive enumeration of interval
//! resolutions, deviations and equilibria. Slow by design and meant for tiny
//! games only; tests compare the solvers against these.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{IcsgError, Result};
use crate::model::{Icsg, IntervalDistribution, ModelDoc, ProbDoc, RewardDoc, IDLE};
use crate::nfg::{Matrix, MixedProfile};
use crate::property::{Objective, Semantics};
use crate::uncertainty::{vertices, Direction};
use crate::zerosum::{nature_direction, solve_for};

/// Largest number of resolution combinations an oracle call will enumerate.
pub const MAX_COMBINATIONS: usize = 1_000_000;

/// Iteration cap for unbounded objectives under a fixed resolution.
const MAX_SWEEPS: usize = 200_000;

/// Shape of the games produced by [`random_tiny_icsg`].
#[derive(Clone, Debug, PartialEq)]
pub struct TinyGameSpec {
    pub seed: u64,
    pub max_states: usize,
    pub max_actions: usize,
    pub max_successors: usize,
    /// Range of the half-width added around each sampled probability.
    pub width: (f64, f64),
    /// Cap on the number of vertex resolutions of one step (the product of
    /// per-row vertex counts); rows beyond it are left as point rows.
    pub max_resolutions: usize,
}

impl Default for TinyGameSpec {
    fn default() -> Self {
        TinyGameSpec {
            seed: 0,
            max_states: 3,
            max_actions: 2,
            max_successors: 3,
            width: (0.0, 0.2),
            max_resolutions: 16,
        }
    }
}

impl TinyGameSpec {
    pub fn with_seed(seed: u64) -> Self {
        TinyGameSpec {
            seed,
            ..Default::default()
        }
    }
}

/// A small random game. Players `p1`, `p2` with actions `a0..`, `b0..`;
/// states `s0..` with `s0` initial; labels `goal` and `goal2` (never empty,
/// never containing `s0`); state rewards `r` and `r2` in {0, 0.5, ..., 2}.
///
/// Each row samples integer weights for a random set of successors, then
/// widens every probability `p` to `[max(p - w, p / 4), min(p + w, 1)]` for a
/// sampled `w`.
pub fn random_tiny_icsg(spec: &TinyGameSpec) -> Icsg {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = rng.gen_range(2..=spec.max_states.max(2));
    let states: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let acts = |prefix: char| -> Vec<String> {
        (0..spec.max_actions.max(1))
            .map(|i| format!("{prefix}{i}"))
            .collect()
    };
    let mut doc = ModelDoc::new("p1", "p2");
    doc.states = states.clone();
    doc.initial = states[0].clone();
    doc.actions.insert("p1".into(), acts('a'));
    doc.actions.insert("p2".into(), acts('b'));

    let mut budget = 1usize;
    let max_succ = spec.max_successors.clamp(1, n);
    for s in &states {
        let mut enabled: [Vec<String>; 2] = [Vec::new(), Vec::new()];
        for (l, player) in ["p1", "p2"].iter().enumerate() {
            let k = rng.gen_range(0..=spec.max_actions);
            enabled[l] = doc.actions[*player][..k].to_vec();
            if k > 0 {
                let names: Vec<&str> = enabled[l].iter().map(|a| a.as_str()).collect();
                doc.enable(s, player, &names);
            }
        }
        let choices = |v: &[String]| -> Vec<String> {
            if v.is_empty() {
                vec![IDLE.to_string()]
            } else {
                v.to_vec()
            }
        };
        for a in choices(&enabled[0]) {
            for b in choices(&enabled[1]) {
                let m = rng.gen_range(1..=max_succ);
                let mut succ: Vec<usize> = (0..n).collect();
                succ.shuffle(&mut rng);
                succ.truncate(m);
                succ.sort_unstable();
                let weights: Vec<u32> = succ.iter().map(|_| rng.gen_range(1..=9)).collect();
                let total: u32 = weights.iter().sum();
                let w = if spec.width.1 > 0.0 {
                    rng.gen_range(spec.width.0..=spec.width.1)
                } else {
                    0.0
                };
                let mut bounds: Vec<(usize, f64, f64)> = succ
                    .iter()
                    .zip(&weights)
                    .map(|(&t, &x)| {
                        let p = x as f64 / total as f64;
                        if m == 1 {
                            (t, 1.0, 1.0)
                        } else {
                            (t, (p - w).max(p / 4.0), (p + w).min(1.0))
                        }
                    })
                    .collect();
                let count = vertex_count(&bounds);
                if budget * count > spec.max_resolutions.max(1) {
                    for (k, b) in bounds.iter_mut().enumerate() {
                        let p = weights[k] as f64 / total as f64;
                        *b = (b.0, p, p);
                    }
                } else {
                    budget *= count;
                }
                let row: Vec<(&str, ProbDoc)> = bounds
                    .iter()
                    .map(|&(t, lo, hi)| {
                        let prob = if lo == hi {
                            ProbDoc::Point(lo)
                        } else {
                            ProbDoc::Interval([lo, hi])
                        };
                        (states[t].as_str(), prob)
                    })
                    .collect();
                doc.transition(s, [a.as_str(), b.as_str()], &row);
            }
        }
    }
    for (label, reward) in [("goal", "r"), ("goal2", "r2")] {
        let mut members: Vec<String> = states[1..]
            .iter()
            .filter(|_| rng.gen_bool(0.5))
            .cloned()
            .collect();
        if members.is_empty() {
            members.push(states[rng.gen_range(1..n)].clone());
        }
        doc.labels.insert(label.into(), members);
        let values = states
            .iter()
            .map(|s| (s.clone(), rng.gen_range(0..=4) as f64 / 2.0))
            .filter(|(_, v)| *v != 0.0)
            .collect();
        doc.rewards.insert(
            reward.into(),
            RewardDoc {
                state: values,
                action: Vec::new(),
            },
        );
    }
    Icsg::from_doc(&doc).expect("generated games are valid")
}

fn vertex_count(bounds: &[(usize, f64, f64)]) -> usize {
    let row = IntervalDistribution::new(bounds.iter().copied());
    vertices(&row).map_or(1, |v| v.len().max(1))
}

/// The rows of a model that are not point rows, with their vertices.
struct Uncertain {
    rows: Vec<(usize, usize)>,
    vertices: Vec<Vec<Vec<f64>>>,
    /// Per state, per cell: index into `rows`.
    lookup: Vec<Vec<Option<usize>>>,
}

impl Uncertain {
    fn of(model: &Icsg) -> Result<Uncertain> {
        let mut rows = Vec::new();
        let mut verts = Vec::new();
        let mut lookup = Vec::with_capacity(model.num_states());
        for s in 0..model.num_states() {
            let mut per = Vec::with_capacity(model.num_cells(s));
            for c in 0..model.num_cells(s) {
                let row = model.row_unchecked(s, c);
                if row.is_point() {
                    per.push(None);
                } else {
                    per.push(Some(rows.len()));
                    rows.push((s, c));
                    verts.push(vertices(row)?);
                }
            }
            lookup.push(per);
        }
        Ok(Uncertain {
            rows,
            vertices: verts,
            lookup,
        })
    }

    /// Radices of a combination covering `layers` independent copies.
    fn radices(&self, layers: usize) -> Result<Vec<usize>> {
        let one: Vec<usize> = self.vertices.iter().map(|v| v.len()).collect();
        let mut total = 1usize;
        for &r in one.iter().cycle().take(one.len() * layers) {
            total = total.saturating_mul(r);
        }
        if total > MAX_COMBINATIONS {
            return Err(IcsgError::OracleBounds(format!(
                "{total} resolution combinations, more than {MAX_COMBINATIONS}"
            )));
        }
        Ok(one
            .iter()
            .copied()
            .cycle()
            .take(one.len() * layers)
            .collect())
    }

    /// Distribution of `(s, c)` at `layer` under the combination `digits`.
    fn dist(&self, digits: &[usize], layer: usize, s: usize, c: usize) -> Dist<'_> {
        match self.lookup[s][c] {
            Some(r) => Dist::Vertex(&self.vertices[r][digits[layer * self.rows.len() + r]]),
            None => Dist::Point,
        }
    }

    fn describe(&self, digits: &[usize], layers: usize) -> Vec<ChosenRow> {
        let mut out = Vec::new();
        for layer in 0..layers {
            for (r, &(state, cell)) in self.rows.iter().enumerate() {
                out.push(ChosenRow {
                    layer,
                    state,
                    cell,
                    dist: self.vertices[r][digits[layer * self.rows.len() + r]].clone(),
                });
            }
        }
        out
    }
}

enum Dist<'a> {
    Vertex(&'a [f64]),
    Point,
}

impl Dist<'_> {
    fn expect(&self, model_row: &IntervalDistribution, value: impl Fn(usize) -> f64) -> f64 {
        let mut total = 0.0;
        for (k, b) in model_row.entries().iter().enumerate() {
            let p = match self {
                Dist::Vertex(v) => v[k],
                Dist::Point => b.lo,
            };
            if p != 0.0 {
                total += p * value(b.successor);
            }
        }
        total
    }
}

/// Steps through every combination of a mixed-radix counter.
fn advance(digits: &mut [usize], radices: &[usize]) -> bool {
    for (d, &r) in digits.iter_mut().zip(radices) {
        *d += 1;
        if *d < r {
            return true;
        }
        *d = 0;
    }
    false
}

/// One vertex resolution of a row in a resolution combination.
#[derive(Clone, Debug, PartialEq)]
pub struct ChosenRow {
    /// Step for bounded objectives; the last layer is the stationary one.
    pub layer: usize,
    pub state: usize,
    pub cell: usize,
    pub dist: Vec<f64>,
}

/// Robust value of a zero-sum query at every state, computed nature-first:
/// every combination of vertex resolutions (one per row and step for bounded
/// objectives, one per row for unbounded ones) is fixed, the resulting
/// concurrent game is solved by backward induction or value iteration, and
/// the worst (or, under controlled semantics, best) result is kept.
pub fn oracle_zs_value(
    model: &Icsg,
    coalition: usize,
    dir: Direction,
    objective: &Objective,
    semantics: Semantics,
) -> Result<Vec<f64>> {
    crate::model::ensure_valid(model)?;
    let n = model.num_states();
    let unc = Uncertain::of(model)?;
    let layers = objective.horizon().unwrap_or(1);
    let radices = unc.radices(layers)?;
    let nature = nature_direction(dir, semantics);
    let target = objective.target().map(|t| model.target(t)).transpose()?;
    let reward = match objective.reward() {
        Some(r) => {
            let r = model.reward(r)?;
            (0..n)
                .map(|s| {
                    (0..model.num_cells(s))
                        .map(|c| r.total(s, model.cell_action(s, c)))
                        .collect()
                })
                .collect()
        }
        None => vec![vec![0.0; 0]; n],
    };
    let rew = |s: usize, c: usize| reward[s].get(c).copied().unwrap_or(0.0);
    let infinite = match objective {
        Objective::ReachReward { .. } => avoidable(model, target.as_deref().unwrap_or(&[])),
        _ => vec![false; n],
    };

    let stage = |s: usize, layer: usize, digits: &[usize], v: &[f64]| -> Result<f64> {
        let (rows, cols) = model.dims(s);
        let z = Matrix::from_fn(rows, cols, |i, j| {
            let c = i * cols + j;
            let row = model.row_unchecked(s, c);
            rew(s, c) + unc.dist(digits, layer, s, c).expect(row, |t| v[t])
        });
        Ok(solve_for(&z, coalition, dir)?.0)
    };

    let mut best: Option<Vec<f64>> = None;
    let mut digits = vec![0usize; radices.len()];
    loop {
        let values = match objective {
            Objective::BoundedReach { k, .. } | Objective::BoundedCumulative { k, .. } => {
                let t = target.as_deref();
                let pinned = |s: usize| t.is_some_and(|t| t[s]);
                let mut v: Vec<f64> = (0..n).map(|s| if pinned(s) { 1.0 } else { 0.0 }).collect();
                for step in (0..*k).rev() {
                    let mut next = v.clone();
                    for (s, slot) in next.iter_mut().enumerate() {
                        if !pinned(s) {
                            *slot = stage(s, step, &digits, &v)?;
                        }
                    }
                    v = next;
                }
                v
            }
            Objective::Reach { .. } | Objective::ReachReward { .. } => {
                let t = target.as_deref().unwrap_or(&[]);
                let probabilistic = objective.is_probabilistic();
                let mut v: Vec<f64> = (0..n)
                    .map(|s| match (t[s], infinite[s]) {
                        (true, _) if probabilistic => 1.0,
                        (true, _) => 0.0,
                        (false, true) => f64::INFINITY,
                        _ => 0.0,
                    })
                    .collect();
                for _ in 0..MAX_SWEEPS {
                    let mut next = v.clone();
                    let mut change = 0.0f64;
                    for s in 0..n {
                        if t[s] || infinite[s] {
                            continue;
                        }
                        next[s] = stage(s, 0, &digits, &v)?;
                        change = change.max((next[s] - v[s]).abs() / next[s].abs().max(1.0));
                    }
                    v = next;
                    if change < 1e-13 {
                        break;
                    }
                }
                v
            }
        };
        best = Some(match best {
            None => values,
            Some(b) => b
                .iter()
                .zip(&values)
                .map(|(&x, &y)| nature.pick(x, y))
                .collect(),
        });
        if !advance(&mut digits, &radices) {
            break;
        }
    }
    Ok(best.unwrap_or_default())
}

/// States from which some memoryless choice of joint actions leaves `target`
/// unreached with positive probability. Enumerates every pure selection and
/// checks almost-sure reachability in the induced chain.
fn avoidable(model: &Icsg, target: &[bool]) -> Vec<bool> {
    let n = model.num_states();
    let radices: Vec<usize> = (0..n).map(|s| model.num_cells(s)).collect();
    let mut pick = vec![0usize; n];
    let mut out = vec![false; n];
    loop {
        // states that can reach the target in the induced chain
        let mut can = target.to_vec();
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..n {
                if !can[s] && model.row_unchecked(s, pick[s]).successors().any(|t| can[t]) {
                    can[s] = true;
                    changed = true;
                }
            }
        }
        // almost sure: no reachable state avoiding the target that cannot reach it
        for (s, slot) in out.iter_mut().enumerate() {
            if target[s] || *slot {
                continue;
            }
            let mut seen = vec![false; n];
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                if !can[u] {
                    *slot = true;
                    break;
                }
                if target[u] {
                    continue;
                }
                for t in model.row_unchecked(u, pick[u]).successors() {
                    if !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
        }
        if !advance(&mut pick, &radices) {
            break;
        }
    }
    out
}

/// All Nash equilibria of a nondegenerate bimatrix game, by enumerating
/// supports of equal size and solving the indifference equations.
pub fn support_enumeration(a: &Matrix, b: &Matrix) -> Vec<MixedProfile> {
    let (m, n) = (a.rows(), a.cols());
    let mut out: Vec<MixedProfile> = Vec::new();
    for k in 1..=m.min(n) {
        for rows in subsets(m, k) {
            for cols in subsets(n, k) {
                // y on `cols` makes player 1 indifferent over `rows`
                let Some(y) = indifference(k, &cols, n, |r, c| a.get(rows[r], c)) else {
                    continue;
                };
                let Some(x) = indifference(k, &rows, m, |r, c| b.get(c, cols[r])) else {
                    continue;
                };
                let u1 = a.bilinear(&x, &y);
                let u2 = b.bilinear(&x, &y);
                let best1 = a.apply(&y).into_iter().fold(f64::NEG_INFINITY, f64::max);
                let best2 = b
                    .apply_left(&x)
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max);
                if best1 > u1 + 1e-9 || best2 > u2 + 1e-9 {
                    continue;
                }
                let dup = out.iter().any(|p| {
                    p.x.iter()
                        .zip(&x)
                        .chain(p.y.iter().zip(&y))
                        .all(|(s, t)| (s - t).abs() <= 1e-8)
                });
                if !dup {
                    out.push(MixedProfile { x, y, u1, u2 });
                }
            }
        }
    }
    out
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

/// Solves `Σ_j pay(r, support[j]) p_j = v` for every `r < k` with `Σ p = 1`,
/// returning the full-length distribution when it is non-negative.
fn indifference(
    k: usize,
    support: &[usize],
    len: usize,
    pay: impl Fn(usize, usize) -> f64,
) -> Option<Vec<f64>> {
    // unknowns p_0..p_{k-1}, v
    let w = k + 2;
    let mut a = vec![0.0; (k + 1) * w];
    for r in 0..k {
        for j in 0..k {
            a[r * w + j] = pay(r, support[j]);
        }
        a[r * w + k] = -1.0;
    }
    for j in 0..k {
        a[k * w + j] = 1.0;
    }
    a[k * w + k + 1] = 1.0;
    let sol = solve_linear(&mut a, k + 1)?;
    if sol[..k].iter().any(|&p| p < -1e-12) {
        return None;
    }
    let mut out = vec![0.0; len];
    for (j, &c) in support.iter().enumerate() {
        out[c] = sol[j].max(0.0);
    }
    Some(out)
}

/// Gaussian elimination with partial pivoting on an `n x (n+1)` augmented
/// matrix.
fn solve_linear(a: &mut [f64], n: usize) -> Option<Vec<f64>> {
    let w = n + 1;
    for col in 0..n {
        let piv =
            (col..n).max_by(|&i, &j| a[i * w + col].abs().total_cmp(&a[j * w + col].abs()))?;
        if a[piv * w + col].abs() < 1e-12 {
            return None;
        }
        for j in 0..w {
            a.swap(col * w + j, piv * w + j);
        }
        for i in 0..n {
            if i != col {
                let f = a[i * w + col] / a[col * w + col];
                for j in col..w {
                    a[i * w + j] -= f * a[col * w + j];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i * w + n] / a[i * w + i]).collect())
}

/// Result of the exhaustive one-shot deviation check.
#[derive(Clone, Debug, PartialEq)]
pub struct StageCheck {
    /// Largest gain of a pure deviation over all vertex resolutions, per player.
    pub gains: [f64; 2],
    pub accepted: bool,
}

/// Checks one stage profile against every vertex resolution of the state's
/// rows and every pure deviation. Payoffs are `rewards[l][cell]` (zero when
/// absent) plus the expected continuation `values[l]`.
pub fn oracle_stage_check(
    model: &Icsg,
    state: usize,
    values: [&[f64]; 2],
    rewards: [Option<&[f64]>; 2],
    profile: &MixedProfile,
    eps: f64,
) -> Result<StageCheck> {
    let (rows, cols) = model.dims(state);
    let cells = rows * cols;
    let verts: Vec<Vec<Vec<f64>>> = (0..cells)
        .map(|c| vertices(model.row_unchecked(state, c)))
        .collect::<Result<_>>()?;
    let radices: Vec<usize> = verts.iter().map(|v| v.len()).collect();
    if radices
        .iter()
        .try_fold(1usize, |a, &r| a.checked_mul(r))
        .is_none_or(|t| t > MAX_COMBINATIONS)
    {
        return Err(IcsgError::OracleBounds(format!(
            "stage at state {state} has too many resolutions"
        )));
    }
    let mut digits = vec![0usize; cells];
    let mut gains = [f64::NEG_INFINITY; 2];
    loop {
        for l in 0..2 {
            let u: Vec<f64> = (0..cells)
                .map(|c| {
                    let row = model.row_unchecked(state, c);
                    let cont: f64 = row
                        .entries()
                        .iter()
                        .zip(&verts[c][digits[c]])
                        .map(|(b, p)| p * values[l][b.successor])
                        .sum();
                    rewards[l].map_or(0.0, |r| r[c]) + cont
                })
                .collect();
            let pay = |i: usize, j: usize| u[i * cols + j];
            let current: f64 = (0..rows)
                .flat_map(|i| (0..cols).map(move |j| (i, j)))
                .map(|(i, j)| profile.x[i] * profile.y[j] * pay(i, j))
                .sum();
            let n = if l == 0 { rows } else { cols };
            for a in 0..n {
                let dev: f64 = if l == 0 {
                    (0..cols).map(|j| profile.y[j] * pay(a, j)).sum()
                } else {
                    (0..rows).map(|i| profile.x[i] * pay(i, a)).sum()
                };
                gains[l] = gains[l].max(dev - current);
            }
        }
        if !advance(&mut digits, &radices) {
            break;
        }
    }
    Ok(StageCheck {
        gains,
        accepted: gains.iter().all(|&g| g <= eps + 1e-9),
    })
}

/// The most profitable deviation found by [`oracle_rne_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct RneWitness {
    pub player: usize,
    pub step: usize,
    pub state: usize,
    pub reached: [bool; 2],
    /// The deviator's best choice at that state (index into its choices).
    pub action: usize,
    pub gain: f64,
    pub resolution: Vec<ChosenRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RneVerdict {
    pub holds: bool,
    /// Largest gain found, whether or not it exceeds the tolerance.
    pub worst: Option<RneWitness>,
}

enum OGoal {
    Reach { target: Vec<bool>, k: Option<usize> },
    Cumulative { reward: Vec<Vec<f64>>, k: usize },
}

impl OGoal {
    fn horizon(&self) -> Option<usize> {
        match self {
            OGoal::Reach { k, .. } => *k,
            OGoal::Cumulative { k, .. } => Some(*k),
        }
    }
}

/// Checks the robust subgame-perfect ε-equilibrium condition by brute force.
///
/// `objectives[l]` belongs to player `l`; bounded and unbounded
/// reachability and bounded cumulative rewards are supported, in any
/// combination. The game is unrolled over `(step, state, reached flags)`
/// with steps capped at the largest bound (the last layer is stationary).
/// For every vertex resolution (chosen per row and step) and every player,
/// the profile's value is compared with the best response value at every
/// reachable unrolled state.
///
/// `profile(step, state, reached)` gives both players' mixed strategies;
/// `None` stands for uniform play.
pub fn oracle_rne_check(
    model: &Icsg,
    objectives: &[Objective; 2],
    profile: impl Fn(usize, usize, [bool; 2]) -> Option<(Vec<f64>, Vec<f64>)>,
    eps: f64,
) -> Result<RneVerdict> {
    crate::model::ensure_valid(model)?;
    let n = model.num_states();
    let goals: Vec<OGoal> = objectives
        .iter()
        .map(|o| match o {
            Objective::BoundedReach { target, k } => Ok(OGoal::Reach {
                target: model.target(target)?,
                k: Some(*k),
            }),
            Objective::Reach { target } => Ok(OGoal::Reach {
                target: model.target(target)?,
                k: None,
            }),
            Objective::BoundedCumulative { reward, k } => {
                let r = model.reward(reward)?;
                Ok(OGoal::Cumulative {
                    reward: (0..n)
                        .map(|s| {
                            (0..model.num_cells(s))
                                .map(|c| r.total(s, model.cell_action(s, c)))
                                .collect()
                        })
                        .collect(),
                    k: *k,
                })
            }
            Objective::ReachReward { .. } => Err(IcsgError::Unsupported(
                "the equilibrium oracle does not handle reachability rewards".into(),
            )),
        })
        .collect::<Result<_>>()?;
    let big_k = goals.iter().filter_map(|g| g.horizon()).max().unwrap_or(0);
    let stationary = goals.iter().any(|g| g.horizon().is_none());
    let layers = big_k + usize::from(stationary);
    let unc = Uncertain::of(model)?;
    let radices = unc.radices(layers)?;

    let idx = |step: usize, s: usize, f: usize| (step * n + s) * 4 + f;
    let total = (big_k + 1) * n * 4;
    // flags after arriving at `t` at time `time` (None: past every bound)
    let arrive = |f: usize, t: usize, time: Option<usize>| -> usize {
        let mut f = f;
        for (l, g) in goals.iter().enumerate() {
            if let OGoal::Reach { target, k } = g {
                let in_time = match (k, time) {
                    (None, _) => true,
                    (Some(k), Some(time)) => time <= *k,
                    (Some(_), None) => false,
                };
                if target[t] && in_time {
                    f |= 1 << l;
                }
            }
        }
        f
    };
    let next_time = |step: usize| if step < big_k { Some(step + 1) } else { None };
    let next_step = |step: usize| (step + 1).min(big_k);

    // strategies at every unrolled state
    let mut strategies: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; total];
    for step in 0..=big_k {
        for s in 0..n {
            let (rows, cols) = model.dims(s);
            for f in 0..4 {
                let reached = [f & 1 == 1, f & 2 == 2];
                let (x, y) = profile(step, s, reached).unwrap_or_else(|| {
                    (vec![1.0 / rows as f64; rows], vec![1.0 / cols as f64; cols])
                });
                if x.len() != rows || y.len() != cols {
                    return Err(IcsgError::Unsupported(format!(
                        "profile at step {step}, state {} has the wrong dimensions",
                        model.state_name(s)
                    )));
                }
                strategies[idx(step, s, f)] = Some((x, y));
            }
        }
    }

    // unrolled states reachable from the start
    let s0 = model.initial();
    let start = idx(0, s0, arrive(0, s0, Some(0)));
    let mut reachable = vec![false; total];
    reachable[start] = true;
    let mut stack = vec![(0usize, s0, arrive(0, s0, Some(0)))];
    while let Some((step, s, f)) = stack.pop() {
        for c in 0..model.num_cells(s) {
            for t in model.row_unchecked(s, c).successors() {
                let g = arrive(f, t, next_time(step));
                let i = idx(next_step(step), t, g);
                if !reachable[i] {
                    reachable[i] = true;
                    stack.push((next_step(step), t, g));
                }
            }
        }
    }

    // value of player `l` when fixed by the flags or the bound
    let fixed = |l: usize, step: usize, f: usize| -> Option<f64> {
        match &goals[l] {
            OGoal::Reach { .. } if f >> l & 1 == 1 => Some(1.0),
            g => match g.horizon() {
                Some(k) if step >= k => Some(0.0),
                _ => None,
            },
        }
    };

    // values of player `l`, playing the profile or (if `best`) best-responding
    let evaluate = |l: usize, best: bool, digits: &[usize]| -> Vec<f64> {
        let mut v = vec![0.0; total];
        let stage = |step: usize, s: usize, f: usize, v: &[f64]| -> f64 {
            if let Some(x) = fixed(l, step, f) {
                return x;
            }
            let (rows, cols) = model.dims(s);
            let (x, y) = strategies[idx(step, s, f)].as_ref().expect("filled above");
            let layer = step.min(layers.saturating_sub(1));
            let q = |i: usize, j: usize| -> f64 {
                let c = i * cols + j;
                let row = model.row_unchecked(s, c);
                let r = match &goals[l] {
                    OGoal::Cumulative { reward, k } if step < *k => reward[s][c],
                    _ => 0.0,
                };
                r + unc.dist(digits, layer, s, c).expect(row, |t| {
                    v[idx(next_step(step), t, arrive(f, t, next_time(step)))]
                })
            };
            match (best, l) {
                (false, _) => (0..rows)
                    .flat_map(|i| (0..cols).map(move |j| (i, j)))
                    .map(|(i, j)| x[i] * y[j] * q(i, j))
                    .sum(),
                (true, 0) => (0..rows)
                    .map(|i| (0..cols).map(|j| y[j] * q(i, j)).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max),
                (true, _) => (0..cols)
                    .map(|j| (0..rows).map(|i| x[i] * q(i, j)).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max),
            }
        };
        // stationary layer
        for _ in 0..MAX_SWEEPS {
            let mut change = 0.0f64;
            for s in 0..n {
                for f in 0..4 {
                    let i = idx(big_k, s, f);
                    let nv = stage(big_k, s, f, &v);
                    change = change.max((nv - v[i]).abs());
                    v[i] = nv;
                }
            }
            if change < 1e-13 {
                break;
            }
        }
        for step in (0..big_k).rev() {
            for s in 0..n {
                for f in 0..4 {
                    v[idx(step, s, f)] = stage(step, s, f, &v);
                }
            }
        }
        v
    };

    let mut worst: Option<RneWitness> = None;
    let mut digits = vec![0usize; radices.len()];
    loop {
        for l in 0..2 {
            let base = evaluate(l, false, &digits);
            let br = evaluate(l, true, &digits);
            for step in 0..=big_k {
                for s in 0..n {
                    for f in 0..4 {
                        let i = idx(step, s, f);
                        if !reachable[i] {
                            continue;
                        }
                        let gain = br[i] - base[i];
                        if worst.as_ref().is_none_or(|w| gain > w.gain) {
                            worst = Some(RneWitness {
                                player: l,
                                step,
                                state: s,
                                reached: [f & 1 == 1, f & 2 == 2],
                                action: best_choice(
                                    model,
                                    &strategies,
                                    &br,
                                    l,
                                    step,
                                    s,
                                    f,
                                    &unc,
                                    &digits,
                                    layers,
                                    &goals,
                                    big_k,
                                ),
                                gain,
                                resolution: unc.describe(&digits, layers),
                            });
                        }
                    }
                }
            }
        }
        if !advance(&mut digits, &radices) {
            break;
        }
    }
    let holds = worst.as_ref().is_none_or(|w| w.gain <= eps + 1e-9);
    Ok(RneVerdict { holds, worst })
}

/// The deviator's best pure choice at one unrolled state, given the best
/// response values.
#[allow(clippy::too_many_arguments)]
fn best_choice(
    model: &Icsg,
    strategies: &[Option<(Vec<f64>, Vec<f64>)>],
    br: &[f64],
    l: usize,
    step: usize,
    s: usize,
    f: usize,
    unc: &Uncertain,
    digits: &[usize],
    layers: usize,
    goals: &[OGoal],
    big_k: usize,
) -> usize {
    let n = model.num_states();
    let idx = |step: usize, s: usize, f: usize| (step * n + s) * 4 + f;
    let (rows, cols) = model.dims(s);
    let (x, y) = strategies[idx(step, s, f)].as_ref().expect("filled");
    let layer = step.min(layers.saturating_sub(1));
    let next_step = (step + 1).min(big_k);
    let time = if step < big_k { Some(step + 1) } else { None };
    let arrive = |t: usize| -> usize {
        let mut g = f;
        for (m, goal) in goals.iter().enumerate() {
            if let OGoal::Reach { target, k } = goal {
                let ok = match (k, time) {
                    (None, _) => true,
                    (Some(k), Some(time)) => time <= *k,
                    (Some(_), None) => false,
                };
                if target[t] && ok {
                    g |= 1 << m;
                }
            }
        }
        g
    };
    let q = |i: usize, j: usize| -> f64 {
        let c = i * cols + j;
        let row = model.row_unchecked(s, c);
        let r = match &goals[l] {
            OGoal::Cumulative { reward, k } if step < *k => reward[s][c],
            _ => 0.0,
        };
        r + unc
            .dist(digits, layer, s, c)
            .expect(row, |t| br[idx(next_step, t, arrive(t))])
    };
    let scores: Vec<f64> = if l == 0 {
        (0..rows)
            .map(|i| (0..cols).map(|j| y[j] * q(i, j)).sum())
            .collect()
    } else {
        (0..cols)
            .map(|j| (0..rows).map(|i| x[i] * q(i, j)).sum())
            .collect()
    };
    let mut best = 0;
    for (a, &v) in scores.iter().enumerate() {
        if v > scores[best] + 1e-12 {
            best = a;
        }
    }
    best
}
