//! Built-in example games and the robot coordination benchmark.

use std::collections::BTreeMap;

use crate::error::{IcsgError, Result};
use crate::model::{ActionRewardDoc, Icsg, ModelDoc, ProbDoc, RewardDoc, IDLE};

/// Names accepted by [`generate`].
pub const NAMES: &[&str] = &["robot", "fig_a1", "fig_a2", "fig_b1", "appendix_d3"];

/// Builds a named benchmark. `robot` takes the grid size `l` (default 4).
pub fn generate(name: &str, params: &BTreeMap<String, String>) -> Result<Icsg> {
    let allowed: &[&str] = if name == "robot" { &["l"] } else { &[] };
    if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(IcsgError::Unknown {
            kind: "generator parameter",
            name: format!("{name}:{k}"),
        });
    }
    match name {
        "robot" => {
            let l = match params.get("l") {
                None => 4,
                Some(v) => v.parse().map_err(|_| {
                    IcsgError::Format(format!("robot: grid size `{v}` is not a positive integer"))
                })?,
            };
            robot(l)
        }
        "fig_a1" => Ok(fig_a1()),
        "fig_a2" => Ok(fig_a2()),
        "fig_b1" => Ok(fig_b1()),
        "appendix_d3" => Ok(appendix_d3()),
        _ => Err(IcsgError::Unknown {
            kind: "benchmark",
            name: name.to_string(),
        }),
    }
}

fn p(v: f64) -> ProbDoc {
    ProbDoc::Point(v)
}

fn iv(lo: f64, hi: f64) -> ProbDoc {
    ProbDoc::Interval([lo, hi])
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn build(doc: ModelDoc) -> Icsg {
    Icsg::from_doc(&doc).expect("built-in models are well formed")
}

/// Three states; from `s0` action `a` of player 1 moves to `s0`, `s1`, `s2`
/// with probabilities in [0.2,0.5], [0.1,0.3], [0.5,0.7], action `b` moves to
/// the sink `s1`. Player 2's choice has no effect. Label `goal` = {s2}.
pub fn fig_b1() -> Icsg {
    let mut doc = ModelDoc::new("p1", "p2");
    doc.states = strings(&["s0", "s1", "s2"]);
    doc.initial = "s0".into();
    doc.actions.insert("p1".into(), strings(&["a", "b"]));
    doc.actions.insert("p2".into(), strings(&["a", "b"]));
    doc.enable("s0", "p1", &["a", "b"]);
    doc.enable("s0", "p2", &["a", "b"]);
    for b in ["a", "b"] {
        doc.transition(
            "s0",
            ["a", b],
            &[
                ("s0", iv(0.2, 0.5)),
                ("s1", iv(0.1, 0.3)),
                ("s2", iv(0.5, 0.7)),
            ],
        );
        doc.transition("s0", ["b", b], &[("s1", p(1.0))]);
    }
    doc.transition("s1", [IDLE, IDLE], &[("s1", p(1.0))]);
    doc.transition("s2", [IDLE, IDLE], &[("s2", p(1.0))]);
    doc.labels.insert("goal".into(), strings(&["s2"]));
    build(doc)
}

/// Game with a unique robust equilibrium. Player 1 earns reward `r1` = 1 for
/// playing `a1` at `s0`; player 2 wants to reach `s2` (label `goal`).
pub fn fig_a1() -> Icsg {
    let mut doc = ModelDoc::new("p1", "p2");
    doc.states = strings(&["s0", "s1", "s2"]);
    doc.initial = "s0".into();
    doc.actions.insert("p1".into(), strings(&["a1", "a2"]));
    doc.actions.insert("p2".into(), strings(&["b1", "b2"]));
    doc.enable("s0", "p1", &["a1", "a2"]);
    doc.enable("s0", "p2", &["b1", "b2"]);
    doc.transition(
        "s0",
        ["a1", "b1"],
        &[("s1", iv(0.1, 0.3)), ("s2", iv(0.7, 0.9))],
    );
    doc.transition("s0", ["a2", "b1"], &[("s2", p(1.0))]);
    doc.transition("s0", ["a1", "b2"], &[("s1", p(1.0))]);
    doc.transition("s0", ["a2", "b2"], &[("s1", p(1.0))]);
    doc.transition("s1", [IDLE, IDLE], &[("s1", p(1.0))]);
    doc.transition("s2", [IDLE, IDLE], &[("s2", p(1.0))]);
    doc.rewards.insert(
        "r1".into(),
        RewardDoc {
            state: BTreeMap::new(),
            action: ["b1", "b2"]
                .iter()
                .map(|b| ActionRewardDoc {
                    from: "s0".into(),
                    action: strings(&["a1", b]),
                    value: 1.0,
                })
                .collect(),
        },
    );
    doc.labels.insert("goal".into(), strings(&["s2"]));
    build(doc)
}

/// Game without a robust equilibrium: only player 2's action matters at `s0`
/// and both of its rows are [0.1,0.9] splits between `s1` (label `g1`) and
/// `s2` (label `g2`).
pub fn fig_a2() -> Icsg {
    let mut doc = ModelDoc::new("p1", "p2");
    doc.states = strings(&["s0", "s1", "s2"]);
    doc.initial = "s0".into();
    doc.actions.insert("p1".into(), strings(&["a1", "a2"]));
    doc.actions.insert("p2".into(), strings(&["b1", "b2"]));
    doc.enable("s0", "p1", &["a1", "a2"]);
    doc.enable("s0", "p2", &["b1", "b2"]);
    for a in ["a1", "a2"] {
        for b in ["b1", "b2"] {
            doc.transition("s0", [a, b], &[("s1", iv(0.1, 0.9)), ("s2", iv(0.1, 0.9))]);
        }
    }
    doc.transition("s1", [IDLE, IDLE], &[("s1", p(1.0))]);
    doc.transition("s2", [IDLE, IDLE], &[("s1", p(1.0))]);
    doc.labels.insert("g1".into(), strings(&["s1"]));
    doc.labels.insert("g2".into(), strings(&["s2"]));
    build(doc)
}

/// One-shot coordination game with interval payoffs, unrolled over two steps:
/// the joint action at `s0` leads to a terminal state whose state rewards are
/// the payoffs. `(B,B)` splits between `x` (payoff (2,0)) and `y` (payoff
/// (0,1)) with P(x) in [0.2,0.4]. Query with cumulative rewards `r1`, `r2`
/// over horizon 2.
pub fn appendix_d3() -> Icsg {
    let mut doc = ModelDoc::new("p1", "p2");
    doc.states = strings(&["s0", "tAA", "tAB", "tBA", "x", "y"]);
    doc.initial = "s0".into();
    doc.actions.insert("p1".into(), strings(&["A", "B"]));
    doc.actions.insert("p2".into(), strings(&["A", "B"]));
    doc.enable("s0", "p1", &["A", "B"]);
    doc.enable("s0", "p2", &["A", "B"]);
    doc.transition("s0", ["A", "A"], &[("tAA", p(1.0))]);
    doc.transition("s0", ["A", "B"], &[("tAB", p(1.0))]);
    doc.transition("s0", ["B", "A"], &[("tBA", p(1.0))]);
    doc.transition(
        "s0",
        ["B", "B"],
        &[("x", iv(0.2, 0.4)), ("y", iv(0.6, 0.8))],
    );
    for t in ["tAA", "tAB", "tBA", "x", "y"] {
        doc.transition(t, [IDLE, IDLE], &[(t, p(1.0))]);
    }
    let reward = |pairs: &[(&str, f64)]| RewardDoc {
        state: pairs.iter().map(|(s, v)| (s.to_string(), *v)).collect(),
        action: Vec::new(),
    };
    doc.rewards.insert(
        "r1".into(),
        reward(&[("tAA", 1.0), ("tAB", 0.2), ("tBA", 0.2), ("x", 2.0)]),
    );
    doc.rewards.insert(
        "r2".into(),
        reward(&[("tAA", 1.0), ("tAB", 0.2), ("tBA", 0.7), ("y", 1.0)]),
    );
    build(doc)
}

/// Probability that an agent ends up where it intended to go.
pub const ROBOT_SUCCESS: f64 = 0.8;

/// Two agents on an `l x l` grid. Agent 1 starts at (0,0) and heads for
/// (l-1,l-1), agent 2 the other way round. Each move succeeds with
/// probability 0.8 and slips to either side with 0.1 each (a slip off the
/// grid leaves the agent in place). Agents at their goal stay idle; moving
/// onto the same cell ends in the absorbing `crash` state.
///
/// Labels: `g1`, `g2` (agent at its goal), `crash`. Rewards `r1`, `r2` pay 1
/// per step while the agent has not reached its goal. There are
/// `l^4 - l^2 + 1` states.
pub fn robot(l: usize) -> Result<Icsg> {
    if l < 2 {
        return Err(IcsgError::Format(format!(
            "robot: grid size must be at least 2, got {l}"
        )));
    }
    const MOVES: [(&str, i64, i64); 4] = [("N", -1, 0), ("S", 1, 0), ("E", 0, 1), ("W", 0, -1)];
    let l = l as i64;
    let name = |a: (i64, i64), b: (i64, i64)| format!("s_{}_{}_{}_{}", a.0, a.1, b.0, b.1);
    let inside = |c: (i64, i64)| c.0 >= 0 && c.0 < l && c.1 >= 0 && c.1 < l;
    let goals = [(l - 1, l - 1), (0, 0)];
    let cells: Vec<(i64, i64)> = (0..l).flat_map(|r| (0..l).map(move |c| (r, c))).collect();

    // outcome distribution of one agent's move
    let outcomes = |pos: (i64, i64), dir: Option<usize>| -> Vec<((i64, i64), f64)> {
        let Some(d) = dir else {
            return vec![(pos, 1.0)];
        };
        let (_, dr, dc) = MOVES[d];
        let mut out: Vec<((i64, i64), f64)> = Vec::new();
        let mut add = |c: (i64, i64), pr: f64| {
            let c = if inside(c) { c } else { pos };
            match out.iter_mut().find(|(x, _)| *x == c) {
                Some(e) => e.1 += pr,
                None => out.push((c, pr)),
            }
        };
        add((pos.0 + dr, pos.1 + dc), ROBOT_SUCCESS);
        let slip = (1.0 - ROBOT_SUCCESS) / 2.0;
        add((pos.0 + dc, pos.1 + dr), slip);
        add((pos.0 - dc, pos.1 - dr), slip);
        out
    };

    let mut doc = ModelDoc::new("p1", "p2");
    doc.actions
        .insert("p1".into(), strings(&["N", "S", "E", "W"]));
    doc.actions
        .insert("p2".into(), strings(&["N", "S", "E", "W"]));
    doc.initial = name((0, 0), (l - 1, l - 1));
    let mut g1 = Vec::new();
    let mut g2 = Vec::new();
    let mut r1 = BTreeMap::new();
    let mut r2 = BTreeMap::new();
    for &a in &cells {
        for &b in &cells {
            if a == b {
                continue;
            }
            let s = name(a, b);
            doc.states.push(s.clone());
            if a == goals[0] {
                g1.push(s.clone());
            } else {
                r1.insert(s.clone(), 1.0);
            }
            if b == goals[1] {
                g2.push(s.clone());
            } else {
                r2.insert(s.clone(), 1.0);
            }
            let options = |pos: (i64, i64), goal: (i64, i64)| -> Vec<Option<usize>> {
                if pos == goal {
                    vec![None]
                } else {
                    (0..4)
                        .filter(|&d| inside((pos.0 + MOVES[d].1, pos.1 + MOVES[d].2)))
                        .map(Some)
                        .collect()
                }
            };
            let opts = [options(a, goals[0]), options(b, goals[1])];
            for (p, player) in ["p1", "p2"].iter().enumerate() {
                let names: Vec<&str> = opts[p].iter().flatten().map(|&d| MOVES[d].0).collect();
                if !names.is_empty() {
                    doc.enable(&s, player, &names);
                }
            }
            for &da in &opts[0] {
                for &db in &opts[1] {
                    let mut row: Vec<(String, f64)> = Vec::new();
                    for (na, pa) in outcomes(a, da) {
                        for (nb, pb) in outcomes(b, db) {
                            let t = if na == nb {
                                "crash".to_string()
                            } else {
                                name(na, nb)
                            };
                            match row.iter_mut().find(|(x, _)| *x == t) {
                                Some(e) => e.1 += pa * pb,
                                None => row.push((t, pa * pb)),
                            }
                        }
                    }
                    let act = |d: Option<usize>| d.map_or(IDLE, |d| MOVES[d].0);
                    let row: Vec<(&str, ProbDoc)> =
                        row.iter().map(|(t, pr)| (t.as_str(), p(*pr))).collect();
                    doc.transition(&s, [act(da), act(db)], &row);
                }
            }
        }
    }
    doc.states.push("crash".into());
    doc.transition("crash", [IDLE, IDLE], &[("crash", p(1.0))]);
    doc.labels.insert("g1".into(), g1);
    doc.labels.insert("g2".into(), g2);
    doc.labels.insert("crash".into(), strings(&["crash"]));
    let reward = |state| RewardDoc {
        state,
        action: Vec::new(),
    };
    doc.rewards.insert("r1".into(), reward(r1));
    doc.rewards.insert("r2".into(), reward(r2));
    Ok(build(doc))
}
