//! Optimisation over a single interval row: the greedy inner problem and
//! vertex enumeration of the row polytope.
//!
//! Distributions are dense vectors aligned with `row.entries()`.

use crate::error::{IcsgError, Result};
use crate::model::{IntervalDistribution, FEASIBILITY_TOL};

/// Largest number of successors accepted by [`vertices`].
pub const VERTEX_CAP: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::Minimize => Direction::Maximize,
            Direction::Maximize => Direction::Minimize,
        }
    }

    /// The better of two values for this direction.
    pub fn pick(self, a: f64, b: f64) -> f64 {
        match self {
            Direction::Minimize => a.min(b),
            Direction::Maximize => a.max(b),
        }
    }

    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Direction::Minimize => candidate < incumbent,
            Direction::Maximize => candidate > incumbent,
        }
    }
}

/// Optimal value and resolving distribution of `min/max Σ P(s') v(s')` over the
/// row polytope.
///
/// Successors are ordered by value (ascending when minimising, descending when
/// maximising, ties by successor index); each starts at its lower bound and the
/// remaining mass is handed out in that order up to the upper bounds.
pub fn solve_inner(
    row: &IntervalDistribution,
    values: &[f64],
    dir: Direction,
) -> Result<(f64, Vec<f64>)> {
    if !row.is_feasible() {
        return Err(IcsgError::InfeasibleRow {
            sum_lo: row.sum_lo(),
            sum_hi: row.sum_hi(),
        });
    }
    let mut dist = vec![0.0; row.len()];
    let entries = row.entries();
    let v = greedy(
        row,
        |k| values[entries[k].successor],
        dir,
        |k, p| dist[k] = p,
    );
    Ok((v, dist))
}

/// Greedy resolution of a feasible row. `value_of(k)` is the value of the
/// `k`-th entry's successor; `visit(k, p)` receives the probability of entry
/// `k`. Returns the attained objective.
pub fn greedy(
    row: &IntervalDistribution,
    value_of: impl Fn(usize) -> f64,
    dir: Direction,
    mut visit: impl FnMut(usize, f64),
) -> f64 {
    let entries = row.entries();
    let n = entries.len();
    let mut small = [(0usize, 0.0f64); 16];
    let mut large = Vec::new();
    let order: &mut [(usize, f64)] = if n <= small.len() {
        &mut small[..n]
    } else {
        large.resize(n, (0, 0.0));
        &mut large[..]
    };
    for (k, slot) in order.iter_mut().enumerate() {
        *slot = (k, value_of(k));
    }
    // entries are sorted by successor index, so a stable sort breaks ties by index
    match dir {
        Direction::Minimize => order.sort_by(|a, b| a.1.total_cmp(&b.1)),
        Direction::Maximize => order.sort_by(|a, b| b.1.total_cmp(&a.1)),
    }
    let mut budget = 1.0 - row.sum_lo();
    let mut total = 0.0;
    for &(k, v) in order.iter() {
        let b = &entries[k];
        let width = b.hi - b.lo;
        let p = if budget >= width - 1e-15 {
            budget -= width;
            b.hi
        } else if budget > 0.0 {
            let p = b.lo + budget;
            budget = 0.0;
            p
        } else {
            b.lo
        };
        visit(k, p);
        if p != 0.0 {
            total += p * v;
        }
    }
    total
}

/// True when `dist` (aligned with the row entries) lies in the row polytope.
pub fn in_polytope(row: &IntervalDistribution, dist: &[f64], tol: f64) -> bool {
    dist.len() == row.len()
        && row
            .entries()
            .iter()
            .zip(dist)
            .all(|(b, &p)| p >= b.lo - tol && p <= b.hi + tol)
        && (dist.iter().sum::<f64>() - 1.0).abs() <= tol
}

/// All vertices of the row polytope. At a vertex at most one coordinate lies
/// strictly between its bounds.
pub fn vertices(row: &IntervalDistribution) -> Result<Vec<Vec<f64>>> {
    let n = row.len();
    if n > VERTEX_CAP {
        return Err(IcsgError::VertexCap {
            count: n,
            cap: VERTEX_CAP,
        });
    }
    if !row.is_feasible() {
        return Err(IcsgError::InfeasibleRow {
            sum_lo: row.sum_lo(),
            sum_hi: row.sum_hi(),
        });
    }
    let entries = row.entries();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut push = |v: Vec<f64>| {
        let dup = out
            .iter()
            .any(|w| w.iter().zip(&v).all(|(a, b)| (a - b).abs() <= 1e-10));
        if !dup {
            out.push(v);
        }
    };
    for mask in 0u32..(1 << n) {
        let at = |k: usize| {
            if mask >> k & 1 == 1 {
                entries[k].hi
            } else {
                entries[k].lo
            }
        };
        // every coordinate at a bound
        let v: Vec<f64> = (0..n).map(at).collect();
        if (v.iter().sum::<f64>() - 1.0).abs() <= FEASIBILITY_TOL {
            push(v);
        }
        // one free coordinate; only the masks with its bit cleared are used
        for free in 0..n {
            if mask >> free & 1 == 1 {
                continue;
            }
            let rest: f64 = (0..n).filter(|&k| k != free).map(at).sum();
            let p = 1.0 - rest;
            let b = &entries[free];
            if p > b.lo + FEASIBILITY_TOL && p < b.hi - FEASIBILITY_TOL {
                let mut v: Vec<f64> = (0..n).map(at).collect();
                v[free] = p;
                push(v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(entries: &[(usize, f64, f64)]) -> IntervalDistribution {
        IntervalDistribution::new(entries.iter().copied())
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn minimize_puts_mass_on_low_values() {
        let r = row(&[(0, 0.2, 0.5), (1, 0.1, 0.3), (2, 0.5, 0.7)]);
        let values = [0.0, 0.0, 1.0];
        let (v, d) = solve_inner(&r, &values, Direction::Minimize).unwrap();
        // s0 and s1 tie at 0; s0 wins on index, takes 0.2 + 0.2
        assert!(close(&d, &[0.4, 0.1, 0.5]));
        assert!((v - 0.5).abs() < 1e-12);
        let (v, d) = solve_inner(&r, &values, Direction::Maximize).unwrap();
        assert!((v - 0.7).abs() < 1e-12);
        assert!(close(&d, &[0.2, 0.1, 0.7]));
    }

    #[test]
    fn infinite_values_sort_last_when_minimising() {
        let r = row(&[(0, 0.1, 0.9), (1, 0.1, 0.9)]);
        let values = [f64::INFINITY, 2.0];
        let (v, d) = solve_inner(&r, &values, Direction::Minimize).unwrap();
        assert_eq!(d, vec![0.1, 0.9]);
        assert_eq!(v, f64::INFINITY);
    }

    #[test]
    fn infeasible_row_rejected() {
        let r = row(&[(0, 0.6, 0.7), (1, 0.6, 0.7)]);
        assert!(matches!(
            solve_inner(&r, &[0.0, 0.0], Direction::Minimize),
            Err(IcsgError::InfeasibleRow { .. })
        ));
        assert!(vertices(&r).is_err());
    }

    #[test]
    fn vertices_of_three_successor_row() {
        let r = row(&[(0, 0.2, 0.5), (1, 0.1, 0.3), (2, 0.5, 0.7)]);
        let vs = vertices(&r).unwrap();
        for v in &vs {
            assert!(in_polytope(&r, v, 1e-12));
        }
        // hand-enumerated: fix two coordinates at bounds, the third absorbs the rest
        let expected = [[0.4, 0.1, 0.5], [0.2, 0.3, 0.5], [0.2, 0.1, 0.7]];
        assert_eq!(vs.len(), expected.len());
        for e in expected {
            assert!(vs
                .iter()
                .any(|v| v.iter().zip(e).all(|(a, b)| (a - b).abs() < 1e-12)));
        }
    }

    #[test]
    fn point_row_has_one_vertex() {
        let r = IntervalDistribution::point([(0, 0.25), (3, 0.75)]);
        assert_eq!(vertices(&r).unwrap(), vec![vec![0.25, 0.75]]);
    }

    #[test]
    fn vertex_cap_enforced() {
        let r = IntervalDistribution::new((0..13).map(|s| (s, 0.01, 0.2)));
        assert!(matches!(
            vertices(&r),
            Err(IcsgError::VertexCap { count: 13, .. })
        ));
    }

    prop_compose! {
        fn feasible_row()(n in 1usize..6)(
            centre in proptest::collection::vec(0.05f64..1.0, n),
            widths in proptest::collection::vec(0.0f64..0.3, n),
        ) -> IntervalDistribution {
            let total: f64 = centre.iter().sum();
            IntervalDistribution::new(centre.iter().zip(&widths).enumerate().map(|(k, (c, w))| {
                let p = c / total;
                (k, (p - w).max(1e-6).min(p), (p + w).min(1.0))
            }))
        }
    }

    proptest! {
        #[test]
        fn greedy_is_feasible_and_optimal(
            r in feasible_row(),
            vals in proptest::collection::vec(-5.0f64..5.0, 6),
            maximize in any::<bool>(),
        ) {
            let dir = if maximize { Direction::Maximize } else { Direction::Minimize };
            let (v, d) = solve_inner(&r, &vals, dir).unwrap();
            prop_assert!(in_polytope(&r, &d, 1e-9));
            let vs = vertices(&r).unwrap();
            prop_assert!(!vs.is_empty());
            let objective = |x: &Vec<f64>| r.entries().iter().zip(x).map(|(b, p)| p * vals[b.successor]).sum::<f64>();
            let best = vs.iter().map(objective).fold(
                if maximize { f64::NEG_INFINITY } else { f64::INFINITY },
                |acc, x| dir.pick(acc, x),
            );
            prop_assert!((v - best).abs() < 1e-9, "greedy {} vs vertices {}", v, best);
            for x in &vs {
                let o = objective(x);
                if maximize { prop_assert!(o <= v + 1e-9) } else { prop_assert!(o >= v - 1e-9) }
            }
        }

        #[test]
        fn vertices_lie_in_polytope(r in feasible_row()) {
            for v in vertices(&r).unwrap() {
                prop_assert!(in_polytope(&r, &v, 1e-9));
                let interior = r.entries().iter().zip(&v)
                    .filter(|(b, p)| **p > b.lo + 1e-9 && **p < b.hi - 1e-9)
                    .count();
                prop_assert!(interior <= 1);
            }
        }
    }
}
