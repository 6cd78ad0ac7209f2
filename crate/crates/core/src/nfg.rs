//! Stage games: zero-sum matrix games by linear programming and bimatrix
//! games by extreme-equilibrium enumeration.

use std::cmp::Ordering;

use crate::error::{IcsgError, Result};

/// Largest bimatrix game (per dimension) accepted by [`enumerate_ne`].
pub const NE_DIM_CAP: usize = 10;

/// Simplex pivot budget before giving up.
pub const PIVOT_LIMIT: usize = 10_000;

/// Slack added to every ε comparison.
pub const NE_SLACK: f64 = 1e-9;

const PIVOT_EPS: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Matrix {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Panics when the rows have different lengths.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Matrix {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        assert!(
            rows.iter().all(|r| r.as_ref().len() == cols),
            "ragged matrix"
        );
        Matrix::from_fn(rows.len(), cols, |i, j| rows[i].as_ref()[j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `x^T M y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, &yj) in y.iter().enumerate() {
                total += xi * yj * self.get(i, j);
            }
        }
        total
    }

    /// `M y`.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * y[j]).sum())
            .collect()
    }

    /// `x^T M`.
    pub fn apply_left(&self, x: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| x[i] * self.get(i, j)).sum())
            .collect()
    }
}

/// Value and optimal mixed strategies of a zero-sum matrix game in which the
/// row player maximises.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Solves `max_x min_y x^T Z y`.
///
/// Pure saddle points are detected directly. Otherwise the entries are shifted
/// to be at least 1 and `max 1^T u s.t. Z u <= 1, u >= 0` is solved with a
/// dense tableau simplex; the column strategy is `u` normalised and the row
/// strategy is read off the duals.
pub fn solve_matrix(z: &Matrix) -> Result<MatrixSolution> {
    if z.rows == 0 || z.cols == 0 {
        return Err(IcsgError::Unsupported("empty matrix game".into()));
    }
    if !z.is_finite() {
        return Err(IcsgError::Unsupported(
            "matrix game has non-finite entries".into(),
        ));
    }
    if let Some(sol) = pure_saddle(z) {
        return Ok(sol);
    }
    let shift = 1.0 - z.min();
    let (m, n) = (z.rows, z.cols);
    let width = n + m + 1;
    let rhs = width - 1;
    let mut t = vec![0.0; m * width];
    for i in 0..m {
        for j in 0..n {
            t[i * width + j] = z.get(i, j) + shift;
        }
        t[i * width + n + i] = 1.0;
        t[i * width + rhs] = 1.0;
    }
    let mut obj = vec![0.0; width];
    obj[..n].fill(-1.0);
    let mut basis: Vec<usize> = (n..n + m).collect();

    let mut bland = false;
    let mut degenerate_run = 0;
    let mut pivots = 0;
    loop {
        let entering = if bland {
            (0..width - 1).find(|&j| obj[j] < -PIVOT_EPS)
        } else {
            let mut best = None;
            let mut best_v = -PIVOT_EPS;
            for (j, &v) in obj[..width - 1].iter().enumerate() {
                if v < best_v {
                    best_v = v;
                    best = Some(j);
                }
            }
            best
        };
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i * width + e];
            if a > PIVOT_EPS {
                let ratio = t[i * width + rhs] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, r)) => {
                        if ratio < r - 1e-15 || (ratio <= r + 1e-15 && basis[i] < basis[k]) {
                            Some((i, ratio))
                        } else {
                            Some((k, r))
                        }
                    }
                };
            }
        }
        let Some((l, ratio)) = leave else {
            return Err(IcsgError::Unsupported("matrix LP unbounded".into()));
        };
        pivots += 1;
        if pivots > PIVOT_LIMIT {
            return Err(IcsgError::PivotLimit(PIVOT_LIMIT));
        }
        if ratio <= 1e-15 {
            degenerate_run += 1;
            if degenerate_run > 2 * (m + n) {
                bland = true;
            }
        } else {
            degenerate_run = 0;
        }
        let p = t[l * width + e];
        for k in 0..width {
            t[l * width + k] /= p;
        }
        for i in 0..m {
            if i != l {
                let f = t[i * width + e];
                if f != 0.0 {
                    for k in 0..width {
                        t[i * width + k] -= f * t[l * width + k];
                    }
                }
            }
        }
        let f = obj[e];
        for k in 0..width {
            obj[k] -= f * t[l * width + k];
        }
        basis[l] = e;
    }

    let total = obj[rhs];
    let mut y = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            y[b] = t[i * width + rhs];
        }
    }
    let mut x: Vec<f64> = (0..m).map(|i| obj[n + i]).collect();
    normalize(&mut x);
    normalize(&mut y);
    Ok(MatrixSolution {
        value: 1.0 / total - shift,
        x,
        y,
    })
}

fn pure_saddle(z: &Matrix) -> Option<MatrixSolution> {
    let (mut bi, mut maxmin) = (0, f64::NEG_INFINITY);
    for i in 0..z.rows {
        let m = (0..z.cols)
            .map(|j| z.get(i, j))
            .fold(f64::INFINITY, f64::min);
        if m > maxmin {
            maxmin = m;
            bi = i;
        }
    }
    let (mut bj, mut minmax) = (0, f64::INFINITY);
    for j in 0..z.cols {
        let m = (0..z.rows)
            .map(|i| z.get(i, j))
            .fold(f64::NEG_INFINITY, f64::max);
        if m < minmax {
            minmax = m;
            bj = j;
        }
    }
    (maxmin == minmax).then(|| MatrixSolution {
        value: maxmin,
        x: unit(z.rows, bi),
        y: unit(z.cols, bj),
    })
}

fn unit(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

fn normalize(v: &mut [f64]) {
    for p in v.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for p in v.iter_mut() {
            *p /= s;
        }
    }
}

/// A mixed strategy pair of a bimatrix game and its expected payoffs.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedProfile {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u1: f64,
    pub u2: f64,
}

impl MixedProfile {
    pub fn welfare(&self) -> f64 {
        self.u1 + self.u2
    }

    /// Largest gain of a pure deviation for each player.
    pub fn regrets(&self, a: &Matrix, b: &Matrix) -> (f64, f64) {
        let best1 = a
            .apply(&self.y)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let best2 = b
            .apply_left(&self.x)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        (best1 - self.u1, best2 - self.u2)
    }

    fn same(&self, other: &MixedProfile, tol: f64) -> bool {
        close(&self.x, &other.x, tol) && close(&self.y, &other.y, tol)
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() <= tol)
}

/// All extreme ε-Nash equilibria of the bimatrix game `(a, b)`.
///
/// Works on the best-response polytopes `P = {x >= 0, B^T x <= 1}` and
/// `Q = {y >= 0, A y <= 1}` (payoffs shifted positive). Every vertex of each
/// polytope is found by solving for each choice of tight constraints; each
/// pair of non-zero vertices, normalised, is kept when both players' payoffs
/// are within ε of their best pure response. Duplicates are merged at 1e-8.
/// Degenerate games are handled because vertices, not supports, are
/// enumerated.
pub fn enumerate_ne(a: &Matrix, b: &Matrix, eps: f64) -> Result<Vec<MixedProfile>> {
    let (m, n) = (a.rows, a.cols);
    if b.rows != m || b.cols != n || m == 0 || n == 0 {
        return Err(IcsgError::Unsupported(format!(
            "bimatrix payoffs must share non-empty dimensions, got {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    if m > NE_DIM_CAP || n > NE_DIM_CAP {
        return Err(IcsgError::DimensionCap {
            rows: m,
            cols: n,
            cap: NE_DIM_CAP,
        });
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(IcsgError::Unsupported(
            "bimatrix game has non-finite entries".into(),
        ));
    }
    let bt = b.transpose();
    let px = polytope_vertices(&bt.map(|v| v + 1.0 - b.min()));
    let qy = polytope_vertices(&a.map(|v| v + 1.0 - a.min()));

    let mut out: Vec<MixedProfile> = Vec::new();
    for x in &px {
        let bx = b.apply_left(x);
        let best2 = bx.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for y in &qy {
            let u2: f64 = bx.iter().zip(y).map(|(p, q)| p * q).sum();
            if best2 - u2 > eps + NE_SLACK {
                continue;
            }
            let ay = a.apply(y);
            let best1 = ay.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let u1: f64 = ay.iter().zip(x).map(|(p, q)| p * q).sum();
            if best1 - u1 > eps + NE_SLACK {
                continue;
            }
            let cand = MixedProfile {
                x: x.clone(),
                y: y.clone(),
                u1,
                u2,
            };
            if !out.iter().any(|c| c.same(&cand, 1e-8)) {
                out.push(cand);
            }
        }
    }
    Ok(out)
}

/// Non-zero vertices of `{z >= 0, M z <= 1}` (M positive), normalised to sum 1.
fn polytope_vertices(mat: &Matrix) -> Vec<Vec<f64>> {
    let dim = mat.cols;
    let cons = mat.rows;
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut tight_rows = Vec::with_capacity(dim);
    // choose which coordinates are free (non-zero); as many tight rows as free coordinates
    for free_mask in 1u32..(1 << dim) {
        let free: Vec<usize> = (0..dim).filter(|&k| free_mask >> k & 1 == 1).collect();
        let f = free.len();
        if f > cons {
            continue;
        }
        tight_rows.clear();
        for_each_subset(cons, f, &mut tight_rows, &mut |rows| {
            let Some(sol) = solve_square(mat, rows, &free) else {
                return;
            };
            if sol.iter().any(|&v| v < -1e-12) {
                return;
            }
            let mut z = vec![0.0; dim];
            for (k, &c) in free.iter().enumerate() {
                z[c] = sol[k].max(0.0);
            }
            let feasible = (0..cons)
                .all(|r| (0..dim).map(|c| mat.get(r, c) * z[c]).sum::<f64>() <= 1.0 + 1e-9);
            if !feasible {
                return;
            }
            let s: f64 = z.iter().sum();
            if s <= 1e-15 {
                return;
            }
            for v in z.iter_mut() {
                *v /= s;
            }
            if !out.iter().any(|w| close(w, &z, 1e-10)) {
                out.push(z);
            }
        });
    }
    out
}

fn for_each_subset(n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if cur.len() == k {
        f(cur);
        return;
    }
    let start = cur.last().map_or(0, |&l| l + 1);
    let need = k - cur.len();
    for i in start..=n.saturating_sub(need) {
        if i >= n {
            break;
        }
        cur.push(i);
        for_each_subset(n, k, cur, f);
        cur.pop();
    }
}

/// Solves `M[rows, free] z = 1` by Gaussian elimination with partial pivoting.
fn solve_square(mat: &Matrix, rows: &[usize], free: &[usize]) -> Option<Vec<f64>> {
    let f = free.len();
    let mut a = vec![0.0; f * (f + 1)];
    for (r, &row) in rows.iter().enumerate() {
        for (c, &col) in free.iter().enumerate() {
            a[r * (f + 1) + c] = mat.get(row, col);
        }
        a[r * (f + 1) + f] = 1.0;
    }
    gauss(&mut a, f)
}

/// In-place elimination on an `f x (f+1)` augmented matrix.
pub(crate) fn gauss(a: &mut [f64], f: usize) -> Option<Vec<f64>> {
    let w = f + 1;
    for col in 0..f {
        let piv = (col..f).max_by(|&i, &j| {
            a[i * w + col]
                .abs()
                .partial_cmp(&a[j * w + col].abs())
                .unwrap_or(Ordering::Equal)
        })?;
        if a[piv * w + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for k in 0..w {
                a.swap(piv * w + k, col * w + k);
            }
        }
        let p = a[col * w + col];
        for r in 0..f {
            if r != col {
                let factor = a[r * w + col] / p;
                if factor != 0.0 {
                    for k in col..w {
                        a[r * w + k] -= factor * a[col * w + k];
                    }
                }
            }
        }
    }
    Some((0..f).map(|i| a[i * w + f] / a[i * w + i]).collect())
}

/// Index of the social-welfare optimal candidate: highest `u1 + u2`, then
/// higher `u1`, then the lexicographically larger `x`, then `y`.
pub fn select_swne(candidates: &[MixedProfile]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, c) in candidates.iter().enumerate() {
        best = match best {
            None => Some(k),
            Some(b) if better(c, &candidates[b]) => Some(k),
            keep => keep,
        };
    }
    best
}

fn better(c: &MixedProfile, incumbent: &MixedProfile) -> bool {
    const TOL: f64 = 1e-9;
    let (w, wi) = (c.welfare(), incumbent.welfare());
    if (w - wi).abs() > TOL {
        return w > wi;
    }
    if (c.u1 - incumbent.u1).abs() > TOL {
        return c.u1 > incumbent.u1;
    }
    for (p, q) in
        c.x.iter()
            .chain(&c.y)
            .zip(incumbent.x.iter().chain(&incumbent.y))
    {
        if (p - q).abs() > 1e-12 {
            return p > q;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows)
    }

    fn gap(z: &Matrix, s: &MatrixSolution) -> f64 {
        let best_row = z.apply(&s.y).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let worst_col = z.apply_left(&s.x).into_iter().fold(f64::INFINITY, f64::min);
        best_row - worst_col
    }

    #[test]
    fn one_by_one() {
        let s = solve_matrix(&m(&[&[3.5]])).unwrap();
        assert_eq!(s.value, 3.5);
        assert_eq!((s.x.clone(), s.y.clone()), (vec![1.0], vec![1.0]));
    }

    #[test]
    fn matching_pennies() {
        let z = m(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let s = solve_matrix(&z).unwrap();
        assert!(s.value.abs() < 1e-12);
        assert!(close(&s.x, &[0.5, 0.5], 1e-12) && close(&s.y, &[0.5, 0.5], 1e-12));
        assert!(gap(&z, &s).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_closed_form() {
        let z = m(&[&[3.0, 0.0], &[1.0, 2.0]]);
        let s = solve_matrix(&z).unwrap();
        // (z11 z22 - z12 z21) / (z11 + z22 - z12 - z21)
        assert!((s.value - 6.0 / 4.0).abs() < 1e-12);
        assert!(close(&s.x, &[0.25, 0.75], 1e-12));
        assert!(close(&s.y, &[0.5, 0.5], 1e-12));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(solve_matrix(&m(&[&[1.0, f64::INFINITY], &[0.0, 2.0]])).is_err());
    }

    #[test]
    fn fixture_stage_equilibria() {
        let a = m(&[&[1.0, 0.2], &[0.2, 0.4]]);
        let b = m(&[&[1.0, 0.2], &[0.7, 0.8]]);
        let ne = enumerate_ne(&a, &b, 0.0).unwrap();
        assert_eq!(ne.len(), 3);
        let has = |x: &[f64], y: &[f64], u: (f64, f64)| {
            ne.iter().any(|p| {
                close(&p.x, x, 1e-9)
                    && close(&p.y, y, 1e-9)
                    && (p.u1 - u.0).abs() < 1e-9
                    && (p.u2 - u.1).abs() < 1e-9
            })
        };
        assert!(has(&[1.0, 0.0], &[1.0, 0.0], (1.0, 1.0)));
        assert!(has(&[0.0, 1.0], &[0.0, 1.0], (0.4, 0.8)));
        // indifference: y1 = 0.2 makes rows tie at 0.36, x1 = 1/9 makes columns tie at 6.6/9
        assert!(has(&[1.0 / 9.0, 8.0 / 9.0], &[0.2, 0.8], (0.36, 6.6 / 9.0)));
        let best = select_swne(&ne).unwrap();
        assert!(close(&ne[best].x, &[1.0, 0.0], 1e-12));
    }

    #[test]
    fn strictly_dominant_strategies() {
        let a = m(&[&[2.0, 2.0], &[0.0, 0.0]]);
        let b = m(&[&[2.0, 0.0], &[1.0, 0.0]]);
        let ne = enumerate_ne(&a, &b, 0.0).unwrap();
        assert_eq!(ne.len(), 1);
        assert_eq!(
            (ne[0].x.clone(), ne[0].y.clone()),
            (vec![1.0, 0.0], vec![1.0, 0.0])
        );
    }

    #[test]
    fn zero_sum_bimatrix_matches_lp() {
        let a = m(&[&[3.0, 0.0], &[1.0, 2.0]]);
        let ne = enumerate_ne(&a, &a.map(|v| -v), 0.0).unwrap();
        assert!(!ne.is_empty());
        for p in ne {
            assert!((p.u1 - 1.5).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_game_keeps_extreme_points() {
        // every profile is an equilibrium; the extreme points are the pure ones
        let a = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let ne = enumerate_ne(&a, &a, 0.0).unwrap();
        assert_eq!(ne.len(), 4);
    }

    #[test]
    fn dimension_cap() {
        let a = Matrix::zeros(11, 2);
        assert!(matches!(
            enumerate_ne(&a, &a, 0.0),
            Err(IcsgError::DimensionCap { .. })
        ));
    }

    #[test]
    fn swne_tie_rules() {
        let p = |u1: f64, u2: f64, x: f64| MixedProfile {
            x: vec![x, 1.0 - x],
            y: vec![1.0, 0.0],
            u1,
            u2,
        };
        assert_eq!(select_swne(&[p(0.4, 0.6, 1.0), p(0.6, 0.4, 0.0)]), Some(1));
        assert_eq!(select_swne(&[p(0.5, 0.5, 0.0), p(0.5, 0.5, 1.0)]), Some(1));
        assert_eq!(select_swne(&[p(0.1, 0.1, 0.0)]), Some(0));
        assert_eq!(select_swne(&[]), None);
    }

    fn matrix_strategy(max: usize) -> impl Strategy<Value = Matrix> {
        (1..=max, 1..=max).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-3.0f64..3.0, r * c)
                .prop_map(move |d| Matrix::from_fn(r, c, |i, j| d[i * c + j]))
        })
    }

    proptest! {
        #[test]
        fn duality_gap_is_tiny(z in matrix_strategy(5)) {
            let s = solve_matrix(&z).unwrap();
            prop_assert!(gap(&z, &s).abs() <= 1e-9);
            prop_assert!((z.bilinear(&s.x, &s.y) - s.value).abs() <= 1e-9);
        }

        #[test]
        fn equilibria_have_no_profitable_deviation(
            (a, b) in (1usize..=4, 1usize..=4).prop_flat_map(|(r, c)| (
                proptest::collection::vec(-2.0f64..2.0, r * c).prop_map(move |d| Matrix::from_fn(r, c, |i, j| d[i * c + j])),
                proptest::collection::vec(-2.0f64..2.0, r * c).prop_map(move |d| Matrix::from_fn(r, c, |i, j| d[i * c + j])),
            )),
            eps in prop_oneof![Just(0.0), 0.0f64..0.2],
        ) {
            let ne = enumerate_ne(&a, &b, eps).unwrap();
            prop_assert!(!ne.is_empty());
            for p in &ne {
                let (r1, r2) = p.regrets(&a, &b);
                prop_assert!(r1 <= eps + NE_SLACK && r2 <= eps + NE_SLACK);
                prop_assert!((p.x.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                prop_assert!((p.y.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                prop_assert!((a.bilinear(&p.x, &p.y) - p.u1).abs() < 1e-9);
            }
            let best = select_swne(&ne).unwrap();
            for p in &ne {
                prop_assert!(ne[best].welfare() >= p.welfare() - 1e-9);
            }
        }

        #[test]
        fn zero_sum_equilibria_attain_the_value(z in matrix_strategy(4)) {
            let v = solve_matrix(&z).unwrap().value;
            for p in enumerate_ne(&z, &z.map(|x| -x), 0.0).unwrap() {
                prop_assert!((p.u1 - v).abs() < 1e-6);
            }
        }
    }
}
