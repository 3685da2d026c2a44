//! Thresholded copy of the `B` block.

use std::ops::Range;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{MsError, Result};
use crate::linalg::{DenseMatrix, OpCounter};
use crate::scalar::{Cplx, Real};

/// Coordinate-list matrix, entries sorted row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T: Real> {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, Cplx<T>)>,
}

impl<T: Real> SparseMatrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, Cplx<T>)] {
        &self.entries
    }

    pub fn from_dense_where(m: &DenseMatrix<T>, keep: impl Fn(usize, usize, Cplx<T>) -> bool) -> Self {
        let mut entries = Vec::new();
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if keep(r, c, v) {
                    entries.push((r, c, v));
                }
            }
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            entries,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = v;
        }
        m
    }

    /// Dense copy of the columns in `cols`.
    pub fn column_block(&self, cols: Range<usize>) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.rows, cols.len());
        for &(r, c, v) in &self.entries {
            if cols.contains(&c) {
                m[(r, c - cols.start)] = v;
            }
        }
        m
    }

    /// `self * rhs` by scatter-accumulate: `nnz * rhs.cols()` multiplications.
    pub fn mul_dense(&self, rhs: &DenseMatrix<T>, ops: &mut OpCounter) -> Result<DenseMatrix<T>> {
        if self.cols != rhs.rows() {
            return Err(MsError::Dimension(format!(
                "sparse {}x{} * dense {}x{}",
                self.rows,
                self.cols,
                rhs.rows(),
                rhs.cols()
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols());
        for &(r, k, v) in &self.entries {
            let src = rhs.row(k).to_vec();
            for (o, s) in out.row_mut(r).iter_mut().zip(src) {
                *o = *o + v * s;
            }
        }
        ops.add(self.entries.len() * rhs.cols());
        Ok(out)
    }

    /// `lhs * self[:, cols]`: `lhs.rows()` multiplications per stored entry
    /// in those columns.
    pub fn left_mul_columns(
        &self,
        lhs: &DenseMatrix<T>,
        cols: Range<usize>,
        ops: &mut OpCounter,
    ) -> Result<DenseMatrix<T>> {
        if lhs.cols() != self.rows {
            return Err(MsError::Dimension(format!(
                "dense {}x{} * sparse {}x{}",
                lhs.rows(),
                lhs.cols(),
                self.rows,
                self.cols
            )));
        }
        let mut out = DenseMatrix::zeros(lhs.rows(), cols.len());
        let mut count = 0;
        for &(k, c, v) in &self.entries {
            if !cols.contains(&c) {
                continue;
            }
            let cc = c - cols.start;
            for r in 0..lhs.rows() {
                out[(r, cc)] = out[(r, cc)] + lhs[(r, k)] * v;
            }
            count += lhs.rows();
        }
        ops.add(count);
        Ok(out)
    }
}

/// Whether the top-`p` selection runs over all of `B` or separately over
/// each site-pair block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SparsityScope {
    #[default]
    Global,
    PerBlock,
}

/// What one sparsification kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseStats {
    pub target_p: f64,
    pub threshold: f64,
    pub kept: usize,
    pub total: usize,
    pub kept_fraction: f64,
    /// Reused threshold kept a fraction outside `[p/2, 2p]`.
    pub flagged: bool,
}

fn validate_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(MsError::Domain(format!("kept fraction p = {p} must lie in (0, 1]")));
    }
    Ok(())
}

/// Indices of the `k` largest `|·|` among `vals`, ties broken by position
/// (which is `(row, col)` order for row-major input).
fn top_k<T: Real>(vals: &[(usize, T)], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    let cmp = |x: &usize, y: &usize| {
        vals[*y]
            .1
            .partial_cmp(&vals[*x].1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(vals[*x].0.cmp(&vals[*y].0))
    };
    if k < order.len() && k > 0 {
        order.select_nth_unstable_by(k - 1, cmp);
    }
    order.truncate(k);
    order.sort_by(cmp);
    order
}

/// Keeps the `⌈p·a·b⌉` largest elements of `b_mat` (ties by `(row, col)`),
/// or, with `threshold_in`, every element with `|·| >= threshold_in`.
/// Returns the sparse matrix and the threshold implied or used.
pub fn sparsify_b<T: Real>(
    b_mat: &DenseMatrix<T>,
    p: f64,
    threshold_in: Option<f64>,
) -> Result<(SparseMatrix<T>, f64)> {
    validate_p(p)?;
    let total = b_mat.rows() * b_mat.cols();
    if let Some(th) = threshold_in {
        let thr = T::lit(th);
        let sp = SparseMatrix::from_dense_where(b_mat, |_, _, v| !v.is_zero() && v.norm() >= thr);
        return Ok((sp, th));
    }
    if p >= 1.0 {
        return Ok((SparseMatrix::from_dense_where(b_mat, |_, _, _| true), 0.0));
    }
    let k = ((p * total as f64).ceil() as usize).min(total);
    let flat: Vec<(usize, T)> = b_mat.as_slice().iter().map(|v| v.norm()).enumerate().collect();
    let chosen = top_k(&flat, k);
    let threshold = chosen.last().map(|&i| flat[i].1.to_f64_lossy()).unwrap_or(0.0);
    let mut keep = vec![false; total];
    for &i in &chosen {
        keep[i] = true;
    }
    let cols = b_mat.cols();
    let sp = SparseMatrix::from_dense_where(b_mat, |r, c, _| keep[r * cols + c]);
    Ok((sp, threshold))
}

/// Top-`p` selection applied separately to each rectangle
/// `rows[i] × cols[j]`; the returned threshold is the smallest block
/// threshold.
pub fn sparsify_b_per_block<T: Real>(
    b_mat: &DenseMatrix<T>,
    p: f64,
    row_blocks: &[Range<usize>],
    col_blocks: &[Range<usize>],
) -> Result<(SparseMatrix<T>, f64)> {
    validate_p(p)?;
    let mut keep = vec![false; b_mat.rows() * b_mat.cols()];
    let mut min_thr = f64::INFINITY;
    for rb in row_blocks {
        for cb in col_blocks {
            if rb.is_empty() || cb.is_empty() {
                continue;
            }
            let flat: Vec<(usize, T)> = rb
                .clone()
                .flat_map(|r| cb.clone().map(move |c| (r, c)))
                .map(|(r, c)| (r * b_mat.cols() + c, b_mat[(r, c)].norm()))
                .collect();
            let k = ((p * flat.len() as f64).ceil() as usize).min(flat.len());
            let chosen = top_k(&flat, k);
            if let Some(&last) = chosen.last() {
                min_thr = min_thr.min(flat[last].1.to_f64_lossy());
            }
            for i in chosen {
                keep[flat[i].0] = true;
            }
        }
    }
    let cols = b_mat.cols();
    let sp = SparseMatrix::from_dense_where(b_mat, |r, c, _| keep[r * cols + c]);
    let thr = if p >= 1.0 || !min_thr.is_finite() { 0.0 } else { min_thr };
    Ok((sp, thr))
}

/// Bookkeeping for one sparsification.
pub fn sparse_stats<T: Real>(sp: &SparseMatrix<T>, p: f64, threshold: f64, reused: bool) -> SparseStats {
    let total = sp.rows() * sp.cols();
    let kept_fraction = if total == 0 {
        1.0
    } else {
        sp.nnz() as f64 / total as f64
    };
    SparseStats {
        target_p: p,
        threshold,
        kept: sp.nnz(),
        total,
        kept_fraction,
        flagged: reused && total > 0 && !(kept_fraction >= p / 2.0 && kept_fraction <= 2.0 * p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C = Complex<f64>;

    fn random(r: usize, c: usize, seed: u64) -> DenseMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(r, c, |_, _| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn p_one_keeps_everything() {
        let b = random(7, 11, 1);
        let (sp, th) = sparsify_b(&b, 1.0, None).unwrap();
        assert_eq!(sp.to_dense(), b);
        assert_eq!(th, 0.0);
        assert_eq!(sp.nnz(), 77);
    }

    #[test]
    fn dominant_element_survives() {
        let mut b = DenseMatrix::<f64>::from_fn(10, 10, |_, _| C::new(1e-3, 0.0));
        b[(3, 7)] = C::new(0.0, 5.0);
        let (sp, th) = sparsify_b(&b, 0.01, None).unwrap();
        assert_eq!(sp.entries(), &[(3, 7, C::new(0.0, 5.0))]);
        assert_eq!(th, 5.0);
    }

    #[test]
    fn ties_broken_by_position() {
        let b = DenseMatrix::<f64>::from_fn(4, 5, |_, _| C::new(1.0, 0.0));
        let (sp, _) = sparsify_b(&b, 0.1, None).unwrap();
        let pos: Vec<_> = sp.entries().iter().map(|e| (e.0, e.1)).collect();
        assert_eq!(pos, vec![(0, 0), (0, 1)]);
    }

    #[test]
    fn reuse_mode_uses_threshold() {
        let b = random(20, 30, 2);
        let (_, th) = sparsify_b(&b, 0.1, None).unwrap();
        let (sp, th2) = sparsify_b(&b, 0.1, Some(th)).unwrap();
        assert_eq!(th, th2);
        assert_eq!(sp.nnz(), 60);
        let st = sparse_stats(&sp, 0.1, th, true);
        assert!(!st.flagged);
        let (sp, _) = sparsify_b(&b, 0.1, Some(0.0)).unwrap();
        assert!(sparse_stats(&sp, 0.1, 0.0, true).flagged);
    }

    #[test]
    fn products_count_by_nnz() {
        let b = random(12, 20, 3);
        let c = random(20, 12, 4);
        let (sp, _) = sparsify_b(&b, 0.25, None).unwrap();
        let mut ops = OpCounter::new();
        let prod = sp.mul_dense(&c, &mut ops).unwrap();
        assert_eq!(ops.mults, (sp.nnz() * 12) as u64);
        let dense = sp.to_dense().matmul(&c, &mut OpCounter::new()).unwrap();
        assert!(prod.sub(&dense).unwrap().max_abs() < 1e-14);
        let lhs = random(12, 12, 5);
        let mut ops = OpCounter::new();
        let w = sp.left_mul_columns(&lhs, 4..9, &mut ops).unwrap();
        let expected = lhs.matmul(&sp.column_block(4..9), &mut OpCounter::new()).unwrap();
        assert!(w.sub(&expected).unwrap().max_abs() < 1e-14);
        let in_cols = sp.entries().iter().filter(|e| (4..9).contains(&e.1)).count();
        assert_eq!(ops.mults, (in_cols * 12) as u64);
    }

    #[test]
    fn per_block_keeps_fraction_in_each_block() {
        let b = random(6, 8, 6);
        let (sp, _) = sparsify_b_per_block(&b, 0.25, &[0..3, 3..6], &[0..4, 4..8]).unwrap();
        assert_eq!(sp.nnz(), 4 * 3);
        for rb in [0..3usize, 3..6] {
            for cb in [0..4usize, 4..8] {
                let n = sp.entries().iter().filter(|e| rb.contains(&e.0) && cb.contains(&e.1)).count();
                assert_eq!(n, 3);
            }
        }
    }

    #[test]
    fn invalid_p_rejected() {
        let b = random(2, 2, 7);
        assert!(sparsify_b(&b, 0.0, None).is_err());
        assert!(sparsify_b(&b, 1.5, None).is_err());
    }

    proptest! {
        #[test]
        fn nnz_non_decreasing_in_p(p1 in 0.01f64..1.0, p2 in 0.01f64..1.0, seed in 0u64..50) {
            let b = random(9, 13, seed);
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let (a, _) = sparsify_b(&b, lo, None).unwrap();
            let (c, _) = sparsify_b(&b, hi, None).unwrap();
            prop_assert!(a.nnz() <= c.nnz());
            prop_assert_eq!(a.nnz(), ((lo * 117.0).ceil() as usize).min(117));
        }
    }
}
