use crate::error::{Error, Result};
use crate::motion::MotionState;
use crate::types::{BoundingBox, Detection, Embedding};

/// Sentinel cost for pairs that may never be assigned.
pub const FORBIDDEN: f64 = 1.0;

/// Dense tracks x detections cost table, row-major, entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        CostMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn forbidden(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, FORBIDDEN)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::ShapeMismatch {
                    left_rows: r,
                    left_cols: c,
                    right_rows: i,
                    right_cols: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::CostOutOfRange { row: i, col: j, value: v });
                }
                data.push(v);
            }
        }
        Ok(CostMatrix { rows: r, cols: c, data })
    }

    /// Builds a matrix from a per-entry function; values are clamped into [0, 1].
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j).clamp(0.0, FORBIDDEN));
            }
        }
        CostMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!((0.0..=1.0).contains(&value));
        self.data[row * self.cols + col] = value;
    }

    pub fn forbid(&mut self, row: usize, col: usize) {
        self.set(row, col, FORBIDDEN);
    }

    pub fn is_forbidden(&self, row: usize, col: usize) -> bool {
        self.get(row, col) >= FORBIDDEN
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).take(self.rows).map(<[f64]>::to_vec).collect()
    }

    fn same_shape(&self, other: &CostMatrix) -> Result<()> {
        if self.rows == other.rows && self.cols == other.cols {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            })
        }
    }
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.right().min(b.right()) - a.left.max(b.left)).max(0.0);
    let h = (a.bottom().min(b.bottom()) - a.top.max(b.top)).max(0.0);
    let inter = w * h;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// `1 - cos(f, g)`; lies in [0, 2].
pub fn cosine_distance(f: &Embedding, g: &Embedding) -> Result<f64> {
    let nf = f.norm();
    let ng = g.norm();
    if nf == 0.0 || ng == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(1.0 - f.dot(g) / (nf * ng))
}

/// Motion-space error between a predicted state and a detection: Euclidean
/// distance of the (cx, cy, w, h) vectors divided by the image diagonal.
pub fn cost_error(predicted: &MotionState, det: &Detection, image_diag: f64) -> f64 {
    let p = predicted.cxcywh();
    let d = det.bbox.cxcywh();
    let sq: f64 = p.iter().zip(&d).map(|(a, b)| (a - b) * (a - b)).sum();
    sq.sqrt() / image_diag
}

/// Per-track candidate sets: detection `j` is a candidate for track `i` iff
/// its cost error is strictly below `epsilon_gate`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSets {
    sets: Vec<Vec<usize>>,
}

impl CandidateSets {
    pub fn contains(&self, track: usize, det: usize) -> bool {
        self.sets[track].binary_search(&det).is_ok()
    }

    pub fn of(&self, track: usize) -> &[usize] {
        &self.sets[track]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

pub fn candidate_sets(
    predicted: &[&MotionState],
    detections: &[Detection],
    epsilon_gate: f64,
    image_diag: f64,
) -> CandidateSets {
    let sets = predicted
        .iter()
        .map(|m| {
            detections
                .iter()
                .enumerate()
                .filter(|(_, d)| cost_error(m, d, image_diag) < epsilon_gate)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    CandidateSets { sets }
}

/// Elementwise `alpha * d_iou + (1 - alpha) * d_reid`; a forbidden entry in
/// either input stays forbidden.
pub fn fuse_costs(d_iou: &CostMatrix, d_reid: &CostMatrix, alpha: f64) -> Result<CostMatrix> {
    d_iou.same_shape(d_reid)?;
    let data = d_iou
        .data
        .iter()
        .zip(&d_reid.data)
        .map(|(&a, &b)| {
            if a >= FORBIDDEN || b >= FORBIDDEN {
                FORBIDDEN
            } else {
                (alpha * a + (1.0 - alpha) * b).clamp(0.0, FORBIDDEN)
            }
        })
        .collect();
    Ok(CostMatrix {
        rows: d_iou.rows,
        cols: d_iou.cols,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::kf_init;

    fn bx(l: f64, t: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(l, t, w, h).unwrap()
    }

    fn unit(v: &[f64]) -> Embedding {
        Embedding::unit(v.to_vec()).unwrap()
    }

    #[test]
    fn iou_cases() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20.0, 0.0, 10.0, 10.0)), 0.0);
        assert_eq!(iou(&a, &bx(10.0, 0.0, 10.0, 10.0)), 0.0);
        let third = iou(&a, &bx(5.0, 0.0, 10.0, 10.0));
        assert!((third - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_cases() {
        let e1 = unit(&[1.0, 0.0, 0.0]);
        let e2 = unit(&[0.0, 1.0, 0.0]);
        assert_eq!(cosine_distance(&e1, &e1).unwrap(), 0.0);
        assert_eq!(cosine_distance(&e1, &e2).unwrap(), 1.0);
        assert_eq!(cosine_distance(&e1, &e1.scaled(-1.0)).unwrap(), 2.0);
        let zero = Embedding::new(vec![0.0; 3]).unwrap();
        assert!(cosine_distance(&e1, &zero).is_err());
    }

    #[test]
    fn cost_error_three_four_five() {
        let m = kf_init(&bx(-5.0, -5.0, 10.0, 10.0));
        let same = Detection::new(1, bx(-5.0, -5.0, 10.0, 10.0), 0.9, None);
        assert_eq!(cost_error(&m, &same, 100.0), 0.0);
        let det = Detection::new(1, bx(-2.0, -1.0, 10.0, 10.0), 0.9, None);
        assert!((cost_error(&m, &det, 100.0) - 0.05).abs() < 1e-15);
        // Joint scaling of geometry and diagonal leaves the error unchanged.
        let m3 = kf_init(&bx(-15.0, -15.0, 30.0, 30.0));
        let d3 = Detection::new(1, bx(-6.0, -3.0, 30.0, 30.0), 0.9, None);
        assert!((cost_error(&m3, &d3, 300.0) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn gating_extremes() {
        let tracks = [kf_init(&bx(0.0, 0.0, 10.0, 20.0)), kf_init(&bx(500.0, 0.0, 10.0, 20.0))];
        let refs: Vec<&MotionState> = tracks.iter().collect();
        let dets = vec![
            Detection::new(1, bx(1.0, 0.0, 10.0, 20.0), 0.9, None),
            Detection::new(1, bx(300.0, 300.0, 10.0, 20.0), 0.9, None),
        ];
        let all = candidate_sets(&refs, &dets, 1e12, 1000.0);
        assert_eq!(all.of(0), &[0, 1]);
        assert_eq!(all.of(1), &[0, 1]);
        let none = candidate_sets(&refs, &dets, 0.0, 1000.0);
        assert!(none.of(0).is_empty() && none.of(1).is_empty());
        let some = candidate_sets(&refs, &dets, 0.3, 1000.0);
        assert!(some.contains(0, 0));
        assert!(!some.contains(0, 1));
    }

    #[test]
    fn fusion_arithmetic() {
        let a = CostMatrix::from_rows(&[vec![0.4, 1.0], vec![0.0, 0.6]]).unwrap();
        let b = CostMatrix::from_rows(&[vec![0.2, 0.1], vec![1.0, 0.6]]).unwrap();
        let f = fuse_costs(&a, &b, 0.5).unwrap();
        assert!((f.get(0, 0) - 0.3).abs() < 1e-15);
        assert_eq!(f.get(0, 1), FORBIDDEN);
        assert_eq!(f.get(1, 0), FORBIDDEN);
        assert!((f.get(1, 1) - 0.6).abs() < 1e-15);

        let near_one = fuse_costs(&a, &b, 1.0 - 1e-9).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                if !b.is_forbidden(i, j) {
                    assert!((near_one.get(i, j) - a.get(i, j)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn fusion_shape_mismatch() {
        let a = CostMatrix::forbidden(2, 3);
        let b = CostMatrix::forbidden(3, 2);
        assert!(matches!(fuse_costs(&a, &b, 0.5), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn from_rows_rejects_out_of_range() {
        assert!(CostMatrix::from_rows(&[vec![0.5, 1.2]]).is_err());
        assert!(CostMatrix::from_rows(&[vec![0.5], vec![0.1, 0.2]]).is_err());
    }
}
