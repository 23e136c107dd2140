//! Maximum-weight assignment (Hungarian method) and the per-slot serve matrix.

use crate::error::{Error, Result};
use crate::model::StationConfig;
use crate::queue::QueueState;

const TIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub n: usize,
    pub w: Vec<Vec<f64>>,
    pub forbidden: Vec<Vec<bool>>,
}

impl WeightMatrix {
    pub fn dense(w: Vec<Vec<f64>>) -> Self {
        let n = w.len();
        WeightMatrix { n, w, forbidden: vec![vec![false; n]; n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `perm[row] = column`.
    pub perm: Vec<usize>,
    pub total: f64,
}

/// Optimal assignment of a square matrix avoiding forbidden entries. Among optimal
/// assignments the lexicographically smallest permutation is returned.
pub fn max_weight_assignment(m: &WeightMatrix) -> Result<Assignment> {
    let n = m.n;
    if m.w.len() != n || m.w.iter().any(|r| r.len() != n) || m.forbidden.len() != n || m.forbidden.iter().any(|r| r.len() != n) {
        return Err(Error::Contract(format!("weight matrix is not {n}x{n}")));
    }
    if m.w.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Contract("weights must be finite".into()));
    }
    if !has_perfect_matching(&m.forbidden) {
        return Err(Error::Infeasible("no assignment avoids the forbidden entries".into()));
    }
    let scale = m.w.iter().flatten().fold(1.0f64, |a, x| a.max(x.abs()));
    let penalty = 4.0 * scale * (n as f64 + 1.0);
    let w: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if m.forbidden[i][j] { -penalty } else { m.w[i][j] }).collect()).collect();
    let perm = assign_rect(&w);
    let total = perm.iter().enumerate().map(|(i, j)| m.w[i][*j]).sum();
    Ok(Assignment { perm, total })
}

/// Maximum-weight assignment of every row of a `rows x cols` matrix, `rows <= cols`, to
/// distinct columns. Lexicographically smallest among optimal assignments.
pub fn assign_rect(w: &[Vec<f64>]) -> Vec<usize> {
    let rows = w.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = w[0].len();
    assert!(rows <= cols, "more rows than columns");
    // Square cost matrix; padding rows cost nothing anywhere.
    let cost: Vec<Vec<f64>> = (0..cols).map(|i| if i < rows { w[i].iter().map(|x| -x).collect() } else { vec![0.0; cols] }).collect();
    let (mut row_to_col, u, v) = hungarian(&cost);
    let scale = cost.iter().flatten().fold(1.0f64, |a, x| a.max(x.abs()));
    let tol = TIGHT_TOL * scale;
    let tight = |i: usize, j: usize| (cost[i][j] - u[i] - v[j]).abs() <= tol;
    lexicographic_refine(&mut row_to_col, rows, cols, &tight);
    row_to_col.truncate(rows);
    row_to_col
}

/// O(n^3) shortest augmenting path method on a square cost matrix (minimisation).
/// Returns the assignment and dual potentials with `u_i + v_j <= c_ij`, tight on it.
fn hungarian(cost: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Moves to the lexicographically smallest perfect matching of the tight-edge graph by
/// rotating alternating cycles, fixing rows in order.
fn lexicographic_refine(row_to_col: &mut [usize], rows: usize, n: usize, tight: &dyn Fn(usize, usize) -> bool) {
    let mut col_to_row = vec![0; n];
    for (i, j) in row_to_col.iter().enumerate() {
        col_to_row[*j] = i;
    }
    let mut fixed_col = vec![false; n];
    for i in 0..rows {
        for j in 0..n {
            if fixed_col[j] || !tight(i, j) {
                continue;
            }
            if row_to_col[i] == j {
                break;
            }
            // row r gives j up to i and needs another column, ending at the one i frees
            let r = col_to_row[j];
            let freed = row_to_col[i];
            let mut seen = fixed_col.clone();
            seen[j] = true;
            let mut path = Vec::new();
            if alternating_path(r, freed, tight, &col_to_row, &mut seen, &mut path) {
                // path holds (row, new column) pairs
                for (row, col) in path {
                    row_to_col[row] = col;
                    col_to_row[col] = row;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
        fixed_col[row_to_col[i]] = true;
    }
}

fn alternating_path(
    row: usize,
    target: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    col_to_row: &[usize],
    seen: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    for c in 0..seen.len() {
        if seen[c] || !tight(row, c) {
            continue;
        }
        seen[c] = true;
        if c == target || alternating_path(col_to_row[c], target, tight, col_to_row, seen, path) {
            path.push((row, c));
            return true;
        }
    }
    false
}

fn has_perfect_matching(forbidden: &[Vec<bool>]) -> bool {
    fn augment(i: usize, forbidden: &[Vec<bool>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for j in 0..forbidden.len() {
            if forbidden[i][j] || seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|o| augment(o, forbidden, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let n = forbidden.len();
    let mut owner = vec![None; n];
    (0..n).all(|i| augment(i, forbidden, &mut vec![false; n], &mut owner))
}

/// Serve matrix of one slot: `server[n] = Some(m)` when station `m` computes the
/// head-of-line task of `n`.
///
/// Weights are `min(H_n, Z_n) - W_m (e1_m - e0_m)`; rows with an empty queue and
/// non-peer pairs are excluded, negative weights count as zero, and only matches with a
/// strictly positive weight are kept.
pub fn build_schedule(states: &[QueueState], cfgs: &[StationConfig], mask: &[Vec<bool>]) -> Vec<Option<usize>> {
    let n = states.len();
    let price: Vec<f64> = states.iter().zip(cfgs).map(|(q, c)| q.w * (c.e_active - c.e_static)).collect();
    let weight = |r: usize, m: usize| (states[r].h as f64).min(states[r].z) - price[m];
    positive_assignment(n, |r, m| if states[r].is_empty() || !mask[r][m] { None } else { Some(weight(r, m)) })
}

/// Maximum-weight matching over the entries given by `weight` (`None` = unusable),
/// keeping only strictly positive matches. Rows and columns without a positive entry are
/// removed before solving.
pub fn positive_assignment(n: usize, weight: impl Fn(usize, usize) -> Option<f64>) -> Vec<Option<usize>> {
    let positive = |r: usize, m: usize| weight(r, m).filter(|w| *w > 0.0);
    let rows: Vec<usize> = (0..n).filter(|r| (0..n).any(|m| positive(*r, m).is_some())).collect();
    let cols: Vec<usize> = (0..n).filter(|m| rows.iter().any(|r| positive(*r, *m).is_some())).collect();
    let mut out = vec![None; n];
    if rows.is_empty() {
        return out;
    }
    let width = cols.len().max(rows.len());
    let w: Vec<Vec<f64>> = rows.iter().map(|r| (0..width).map(|k| cols.get(k).and_then(|m| positive(*r, *m)).unwrap_or(0.0)).collect()).collect();
    for (k, c) in assign_rect(&w).into_iter().enumerate() {
        if w[k][c] > 0.0 {
            out[rows[k]] = Some(cols[c]);
        }
    }
    out
}
