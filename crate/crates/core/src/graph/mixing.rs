use nalgebra::DMatrix;

use super::{DirectedGraphSnapshot, GraphSequence};

/// Column-stochastic mixing matrix `a_ij = 1/d_j^out` for `j ∈ N_i^in`.
///
/// Keeps the dense entries alongside a row-compressed copy; the compressed rows
/// list nonzero columns in ascending order so sparse and dense products sum in
/// the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    dense: DMatrix<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    out_degrees: Vec<usize>,
}

impl MixingMatrix {
    pub fn from_snapshot(g: &DirectedGraphSnapshot) -> Self {
        let m = g.node_count();
        let deg = g.out_degrees();
        let mut dense = DMatrix::zeros(m, m);
        for j in 0..m {
            dense[(j, j)] = 1.0 / deg[j] as f64;
        }
        for (j, i) in g.edges() {
            dense[(i, j)] = 1.0 / deg[j] as f64;
        }
        let rows = (0..m)
            .map(|i| {
                (0..m)
                    .filter(|&j| dense[(i, j)] != 0.0)
                    .map(|j| (j, dense[(i, j)]))
                    .collect()
            })
            .collect();
        Self {
            dense,
            rows,
            out_degrees: deg,
        }
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dense[(i, j)]
    }

    /// `d_j^out` of the snapshot the matrix was built from, self included.
    pub fn out_degree(&self, j: usize) -> usize {
        self.out_degrees[j]
    }

    pub fn dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    /// Nonzero `(j, a_ij)` of row `i`, ascending in `j`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// `d_i = Σ_j a_ij`.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, a)| a).sum()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.dense.row_sum().iter().copied().collect()
    }

    /// Largest `|Σ_i a_ij − 1|` over columns.
    pub fn stochasticity_defect(&self) -> f64 {
        self.column_sums()
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `out = A v` for a vector.
    pub fn apply_vec(&self, v: &[f64], out: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(j, a) in row {
                acc += a * v[j];
            }
            out[i] = acc;
        }
    }

    /// `out = A X` where `X` is `m × d` row-major.
    pub fn apply_rows(&self, x: &[f64], d: usize, out: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            let dst = &mut out[i * d..(i + 1) * d];
            dst.fill(0.0);
            for &(j, a) in row {
                let src = &x[j * d..(j + 1) * d];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += a * s;
                }
            }
        }
    }
}

/// `A(t:s) = A(t) A(t−1) ⋯ A(s)` for `t ≥ s`.
pub fn matrix_product(seq: &GraphSequence, t: usize, s: usize) -> DMatrix<f64> {
    assert!(t >= s, "matrix_product needs t >= s (got t={t}, s={s})");
    let mut acc = seq.mixing(t).dense().clone();
    for k in (s..t).rev() {
        acc = &acc * seq.mixing(k).dense();
    }
    acc
}
