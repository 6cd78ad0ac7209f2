//! Qualitative precomputations on the support graph. They do not depend on how
//! the intervals are resolved because every resolution shares one support.

use std::collections::VecDeque;

use crate::model::Icsg;

/// Predecessor lists: `pred[t]` holds every `s` with an edge `s -> t`.
fn predecessors(model: &Icsg) -> Vec<Vec<usize>> {
    let mut pred = vec![Vec::new(); model.num_states()];
    for s in 0..model.num_states() {
        for c in 0..model.num_cells(s) {
            if let Some(row) = model.row(s, c) {
                for t in row.successors() {
                    if pred[t].last() != Some(&s) {
                        pred[t].push(s);
                    }
                }
            }
        }
    }
    pred
}

/// Backward reachability: states with a path into `from` that only passes
/// through states where `through` holds (the end points are always included).
fn backward(model: &Icsg, from: &[bool], through: impl Fn(usize) -> bool) -> Vec<bool> {
    let pred = predecessors(model);
    let mut seen = from.to_vec();
    let mut queue: VecDeque<usize> = (0..from.len()).filter(|&s| from[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &s in &pred[t] {
            if !seen[s] && through(s) {
                seen[s] = true;
                queue.push_back(s);
            }
        }
    }
    seen
}

/// States that reach `target` under no choice of joint actions.
pub fn cannot_reach(model: &Icsg, target: &[bool]) -> Vec<bool> {
    backward(model, target, |_| true)
        .into_iter()
        .map(|r| !r)
        .collect()
}

/// States from which some strategy profile avoids `target` with positive
/// probability, i.e. the complement of "reached almost surely under every
/// profile".
///
/// First the largest set `Z` of non-target states in which the players can
/// jointly stay forever is found (every member has a joint action whose
/// successors all lie in `Z`); the result is everything that can reach `Z`
/// without passing through the target.
pub fn not_almost_sure(model: &Icsg, target: &[bool]) -> Vec<bool> {
    let n = model.num_states();
    let mut z: Vec<bool> = target.iter().map(|t| !t).collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if !z[s] {
                continue;
            }
            let stays = (0..model.num_cells(s)).any(|c| {
                model
                    .row(s, c)
                    .is_some_and(|row| row.successors().all(|t| z[t]))
            });
            if !stays {
                z[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    backward(model, &z, |s| !target[s])
}

/// Largest set of states that is closed under every joint action and where
/// every state-action reward of `reward` is zero.
pub fn zero_reward_trap(model: &Icsg, reward: &crate::model::RewardStructure) -> Vec<bool> {
    let n = model.num_states();
    let mut w: Vec<bool> = (0..n)
        .map(|s| (0..model.num_cells(s)).all(|c| reward.total(s, model.cell_action(s, c)) == 0.0))
        .collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if w[s]
                && !(0..model.num_cells(s)).all(|c| {
                    model
                        .row(s, c)
                        .is_some_and(|row| row.successors().all(|t| w[t]))
                })
            {
                w[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    w
}
