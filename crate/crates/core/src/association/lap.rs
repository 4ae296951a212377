//! Minimum-cost one-to-one assignment over a [`CostMatrix`].
//!
//! The matrix is padded to square with [`FORBIDDEN`] entries and solved with the
//! shortest-augmenting-path form of the Hungarian method (O(n^3)). Pairs that
//! land on a forbidden entry are reported as unmatched, so the objective is the
//! sum of assigned costs plus one sentinel unit for every unassigned slot of the
//! padded square.

use super::cost::{CostMatrix, FORBIDDEN};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    /// (row, col) pairs, ordered by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    /// Objective value: assigned costs plus `FORBIDDEN` per unassigned slot of
    /// the padded square problem.
    pub fn total_cost(&self, m: &CostMatrix) -> f64 {
        let n = m.rows().max(m.cols());
        let assigned: f64 = self.pairs.iter().map(|&(i, j)| m.get(i, j)).sum();
        assigned + FORBIDDEN * (n - self.pairs.len()) as f64
    }

    /// Sum over assigned pairs only.
    pub fn matched_cost(&self, m: &CostMatrix) -> f64 {
        self.pairs.iter().map(|&(i, j)| m.get(i, j)).sum()
    }
}

/// Solves the assignment problem. Deterministic: scans proceed in ascending
/// index order and only strictly smaller values replace an incumbent, so ties
/// resolve toward lower rows and columns.
pub fn solve_assignment(m: &CostMatrix) -> Assignment {
    let (rows, cols) = (m.rows(), m.cols());
    let n = rows.max(cols);
    if n == 0 {
        return Assignment::default();
    }
    let cost = |i: usize, j: usize| {
        if i < rows && j < cols {
            m.get(i, j)
        } else {
            FORBIDDEN
        }
    };

    // 1-based potentials; column 0 is the virtual root of each search.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![None; rows];
    for j in 1..=n {
        let (i, c) = (owner[j] - 1, j - 1);
        if i < rows && c < cols && !m.is_forbidden(i, c) {
            row_to_col[i] = Some(c);
        }
    }
    let mut col_used = vec![false; cols];
    let mut out = Assignment::default();
    for (i, c) in row_to_col.iter().enumerate() {
        match c {
            Some(c) => {
                out.pairs.push((i, *c));
                col_used[*c] = true;
            }
            None => out.unmatched_rows.push(i),
        }
    }
    out.unmatched_cols = (0..cols).filter(|&j| !col_used[j]).collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn diagonal_optimum() {
        let m = mat(&[&[0.1, 0.9], &[0.9, 0.1]]);
        let a = solve_assignment(&m);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert!((a.matched_cost(&m) - 0.2).abs() < 1e-15);
        assert!(a.unmatched_rows.is_empty() && a.unmatched_cols.is_empty());
    }

    #[test]
    fn all_forbidden_matches_nothing() {
        let m = CostMatrix::forbidden(3, 4);
        let a = solve_assignment(&m);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_rows, vec![0, 1, 2]);
        assert_eq!(a.unmatched_cols, vec![0, 1, 2, 3]);
    }

    #[test]
    fn rectangular_and_partially_forbidden() {
        let m = mat(&[&[1.0, 0.3, 1.0], &[1.0, 0.2, 1.0]]);
        let a = solve_assignment(&m);
        assert_eq!(a.pairs, vec![(1, 1)]);
        assert_eq!(a.unmatched_rows, vec![0]);
        assert_eq!(a.unmatched_cols, vec![0, 2]);
    }

    #[test]
    fn prefers_two_matches_over_one_cheaper() {
        // Two pairs at 0.4 each beat one pair at 0.0 plus an open slot.
        let m = mat(&[&[0.0, 0.4], &[0.4, 1.0]]);
        let a = solve_assignment(&m);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn empty_shapes() {
        assert_eq!(solve_assignment(&CostMatrix::forbidden(0, 0)), Assignment::default());
        let a = solve_assignment(&CostMatrix::forbidden(0, 2));
        assert_eq!(a.unmatched_cols, vec![0, 1]);
        let a = solve_assignment(&CostMatrix::forbidden(2, 0));
        assert_eq!(a.unmatched_rows, vec![0, 1]);
    }

    #[test]
    fn ties_resolve_deterministically() {
        let m = CostMatrix::filled(3, 3, 0.5);
        let a = solve_assignment(&m);
        assert_eq!(a, solve_assignment(&m));
        assert_eq!(a.pairs.len(), 3);
    }
}
