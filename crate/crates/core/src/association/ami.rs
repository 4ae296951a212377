//! Ambiguous-match pruning of a fused cost matrix.

use super::cost::{CostMatrix, FORBIDDEN};

/// Prunes ambiguous entries from a cost matrix.
///
/// 1. Every entry above `d_theta` is set to [`FORBIDDEN`].
/// 2. On the result of step 1, for each row and each column with minimum
///    allowed entry `m`, every allowed entry `e` with `e > m` and
///    `e >= rho * m` is marked. Marks are collected over all rows and columns
///    first and applied together, so the result does not depend on scan order.
///
/// An entry that is the minimum of its row or of its column is never pruned,
/// and equal minima are all kept.
pub fn ami_filter(m: &CostMatrix, d_theta: f64, rho: f64) -> CostMatrix {
    let (rows, cols) = (m.rows(), m.cols());
    let mut step1 = m.clone();
    for i in 0..rows {
        for j in 0..cols {
            if step1.get(i, j) > d_theta {
                step1.forbid(i, j);
            }
        }
    }

    let allowed = |v: f64| v < FORBIDDEN;
    let row_min: Vec<Option<f64>> = (0..rows)
        .map(|i| {
            (0..cols)
                .map(|j| step1.get(i, j))
                .filter(|&v| allowed(v))
                .min_by(f64::total_cmp)
        })
        .collect();
    let col_min: Vec<Option<f64>> = (0..cols)
        .map(|j| {
            (0..rows)
                .map(|i| step1.get(i, j))
                .filter(|&v| allowed(v))
                .min_by(f64::total_cmp)
        })
        .collect();
    let dominated = |e: f64, min: Option<f64>| match min {
        Some(min) => e > min && e >= rho * min,
        None => false,
    };
    let is_min = |e: f64, min: Option<f64>| min == Some(e);

    let mut out = step1.clone();
    for i in 0..rows {
        for j in 0..cols {
            let e = step1.get(i, j);
            if allowed(e)
                && (dominated(e, row_min[i]) || dominated(e, col_min[j]))
                && !is_min(e, row_min[i])
                && !is_min(e, col_min[j])
            {
                out.forbid(i, j);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn column_with_dominated_entry() {
        // Track2-Det1 = 0.03, Track3-Det1 = 0.18 in the same column.
        let m = mat(&[&[0.9, 0.05, 0.6], &[0.03, 0.7, 0.5], &[0.18, 0.6, 0.12]]);
        let out = ami_filter(&m, 0.2, 2.0);
        assert_eq!(out.get(2, 0), FORBIDDEN);
        assert_eq!(out.get(1, 0), 0.03);
        assert_eq!(out.get(0, 1), 0.05);
        assert_eq!(out.get(2, 2), 0.12);
    }

    #[test]
    fn own_row_minimum_is_protected() {
        // 0.18 is dominated in its column but is the only option of its row.
        let m = mat(&[&[0.03], &[0.18]]);
        let out = ami_filter(&m, 0.2, 2.0);
        assert_eq!(out.get(1, 0), 0.18);
    }

    #[test]
    fn above_threshold_forbidden() {
        let m = mat(&[&[0.25]]);
        assert_eq!(ami_filter(&m, 0.2, 2.0).get(0, 0), FORBIDDEN);
        let m = mat(&[&[0.2]]);
        assert_eq!(ami_filter(&m, 0.2, 2.0).get(0, 0), 0.2);
    }

    #[test]
    fn unambiguous_matrix_unchanged() {
        let m = mat(&[&[0.1, 1.0, 1.0], &[1.0, 0.05, 1.0], &[1.0, 1.0, 0.15]]);
        assert_eq!(ami_filter(&m, 0.2, 2.0), m);
    }

    #[test]
    fn near_ties_survive() {
        let m = mat(&[&[0.10, 0.15], &[0.12, 0.11]]);
        assert_eq!(ami_filter(&m, 0.2, 2.0), m);
    }

    #[test]
    fn zero_minimum_prunes_every_positive_peer() {
        let m = mat(&[&[0.0, 0.01, 0.0], &[0.1, 0.0, 0.1]]);
        let out = ami_filter(&m, 0.2, 2.0);
        assert_eq!(out.get(0, 0), 0.0);
        assert_eq!(out.get(0, 1), FORBIDDEN);
        assert_eq!(out.get(0, 2), 0.0);
        assert_eq!(out.get(1, 0), FORBIDDEN);
        assert_eq!(out.get(1, 1), 0.0);
    }

    #[test]
    fn empty_matrix() {
        let m = CostMatrix::forbidden(0, 3);
        assert_eq!(ami_filter(&m, 0.2, 2.0), m);
    }
}
