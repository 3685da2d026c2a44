//! Dense complex matrices, LU with partial pivoting, and multiplication
//! counters.
//!
//! Every kernel that performs complex multiplications on the solver hot path
//! takes an [`OpCounter`] and adds the exact number of complex
//! multiplications (divisions count as one multiplication each).

use std::ops::{Index, IndexMut};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{MsError, Result};
use crate::scalar::{Cplx, Real};

/// Per-solve accumulator of complex multiplications.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub mults: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, n: usize) {
        self.mults += n as u64;
    }

    pub fn merge(&mut self, other: &OpCounter) {
        self.mults += other.mults;
    }
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T: Real> {
    rows: usize,
    cols: usize,
    data: Vec<Cplx<T>>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Cplx<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diagonal(diag: &[Cplx<T>]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Cplx<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MsError::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Cplx<T>] {
        &self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[Cplx<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [Cplx<T>] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Cplx<T>> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// Copy of the sub-matrix selected by row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |r, c| self[(rows[r], cols[c])])
    }

    /// Contiguous block copy.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        Self::from_fn(nr, nc, |r, c| self[(r0 + r, c0 + c)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &DenseMatrix<T>) {
        for r in 0..block.rows {
            for c in 0..block.cols {
                self[(r0 + r, c0 + c)] = block[(r, c)];
            }
        }
    }

    pub fn map(&self, f: impl Fn(Cplx<T>) -> Cplx<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, s: Cplx<T>) -> Self {
        self.map(|z| z * s)
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(MsError::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// `self * rhs`, counting `rows * inner * cols` multiplications. Zero
    /// entries of `self` are skipped but still counted, so the count is the
    /// dense one.
    pub fn matmul(&self, rhs: &Self, ops: &mut OpCounter) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(MsError::Dimension(format!(
                "matmul {}x{} * {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a.is_zero() {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o = *o + a * b;
                }
            }
        }
        ops.add(self.rows * self.cols * rhs.cols);
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, z| acc + z.norm_sqr())
            .sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc.max(z.norm()))
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        (0..self.cols)
            .map(|c| (0..self.rows).fold(T::zero(), |acc, r| acc + self[(r, c)].norm()))
            .fold(T::zero(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// ‖self − other‖_F / ‖other‖_F (absolute when `other` is zero).
    pub fn relative_frobenius_error(&self, reference: &Self) -> Result<T> {
        let diff = self.sub(reference)?.frobenius_norm();
        let norm = reference.frobenius_norm();
        Ok(if norm > T::zero() { diff / norm } else { diff })
    }
}

impl<T: Real> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = Cplx<T>;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Cplx<T> {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Cplx<T> {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// LU factors `P A = L U` with unit-diagonal `L`, stored packed.
#[derive(Debug, Clone)]
pub struct LuFactors<T: Real> {
    lu: DenseMatrix<T>,
    /// `perm[k]` is the original row placed at position `k`.
    perm: Vec<usize>,
    anorm_one: T,
}

impl<T: Real> LuFactors<T> {
    /// Gaussian elimination with partial pivoting. Counts `n(n-1)/2`
    /// multiplier divisions plus the `Σ (n-k-1)²` update multiplications,
    /// i.e. `n³/3 + O(n²)`.
    pub fn factor(a: &DenseMatrix<T>, context: &str, ops: &mut OpCounter) -> Result<Self> {
        if !a.is_square() {
            return Err(MsError::Dimension(format!(
                "LU of non-square {}x{} matrix",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let anorm_one = a.norm_one();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            let mut best = lu[(k, k)].norm();
            for r in k + 1..n {
                let v = lu[(r, k)].norm();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(MsError::Singular {
                    context: context.to_string(),
                    rcond: 0.0,
                });
            }
            if piv != k {
                for c in 0..n {
                    lu.data.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
            }
            let inv_pivot = lu[(k, k)].inv();
            let (upper, lower) = lu.data.split_at_mut((k + 1) * n);
            let pivot_row = &upper[k * n + k + 1..k * n + n];
            for r in 0..n - k - 1 {
                let row = &mut lower[r * n..(r + 1) * n];
                let m = row[k] * inv_pivot;
                row[k] = m;
                if m.is_zero() {
                    continue;
                }
                for (x, &p) in row[k + 1..].iter_mut().zip(pivot_row) {
                    *x = *x - m * p;
                }
            }
            ops.add((n - k - 1) * (n - k));
        }
        Ok(Self { lu, perm, anorm_one })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Solves `A x = b` in place. Leading zeros of the permuted right-hand
    /// side are skipped in the forward sweep, which makes unit-vector solves
    /// cheaper; the counter records the multiplications actually issued.
    pub fn solve_vec(&self, b: &mut [Cplx<T>], ops: &mut OpCounter) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut y: Vec<Cplx<T>> = self.perm.iter().map(|&p| b[p]).collect();
        let first = y.iter().position(|z| !z.is_zero()).unwrap_or(n);
        let mut count = 0usize;
        for i in first + 1..n {
            let row = self.lu.row(i);
            let mut s = y[i];
            for j in first..i {
                s = s - row[j] * y[j];
            }
            count += i - first;
            y[i] = s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut s = y[i];
            for j in i + 1..n {
                s = s - row[j] * y[j];
            }
            y[i] = s / row[i];
            count += n - i;
        }
        ops.add(count);
        b.copy_from_slice(&y);
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &DenseMatrix<T>, ops: &mut OpCounter) -> Result<DenseMatrix<T>> {
        if b.rows != self.dim() {
            return Err(MsError::Dimension(format!(
                "rhs has {} rows, system has {}",
                b.rows,
                self.dim()
            )));
        }
        let mut out = DenseMatrix::zeros(b.rows, b.cols);
        let mut col = vec![Complex::zero(); b.rows];
        for c in 0..b.cols {
            for r in 0..b.rows {
                col[r] = b[(r, c)];
            }
            self.solve_vec(&mut col, ops);
            for r in 0..b.rows {
                out[(r, c)] = col[r];
            }
        }
        Ok(out)
    }

    /// Solves for the given columns of the identity, returning an
    /// `n x cols.len()` matrix of the corresponding columns of `A⁻¹`.
    pub fn solve_unit_columns(&self, cols: &[usize], ops: &mut OpCounter) -> DenseMatrix<T> {
        let n = self.dim();
        let mut out = DenseMatrix::zeros(n, cols.len());
        let mut col = vec![Complex::zero(); n];
        for (k, &c) in cols.iter().enumerate() {
            col.iter_mut().for_each(|z| *z = Complex::zero());
            col[c] = Complex::one();
            self.solve_vec(&mut col, ops);
            for r in 0..n {
                out[(r, k)] = col[r];
            }
        }
        out
    }

    /// Full inverse by unit-vector solves; together with the factorization
    /// this is `n³ + O(n²)` multiplications.
    pub fn inverse(&self, ops: &mut OpCounter) -> DenseMatrix<T> {
        let cols: Vec<usize> = (0..self.dim()).collect();
        self.solve_unit_columns(&cols, ops)
    }

    /// Solves `Aᴴ x = b` (not counted; used only by the condition estimate).
    fn solve_adjoint_vec(&self, b: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let n = self.dim();
        // Aᴴ = Uᴴ Lᴴ P, so solve Uᴴ w = b, Lᴴ v = w, x = Pᵀ v.
        let mut w = b.to_vec();
        for i in 0..n {
            let mut s = w[i];
            for j in 0..i {
                s = s - self.lu[(j, i)].conj() * w[j];
            }
            w[i] = s / self.lu[(i, i)].conj();
        }
        for i in (0..n).rev() {
            let mut s = w[i];
            for j in i + 1..n {
                s = s - self.lu[(j, i)].conj() * w[j];
            }
            w[i] = s;
        }
        let mut x = vec![Complex::zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = w[k];
        }
        x
    }

    /// Reciprocal 1-norm condition estimate (Hager's method).
    pub fn rcond(&self) -> T {
        let n = self.dim();
        if n == 0 {
            return T::one();
        }
        let mut scratch = OpCounter::new();
        let mut x = vec![Complex::new(T::one() / T::from_usize_lossy(n), T::zero()); n];
        let mut est = T::zero();
        for _ in 0..5 {
            let mut y = x.clone();
            self.solve_vec(&mut y, &mut scratch);
            let y_norm = y.iter().fold(T::zero(), |a, z| a + z.norm());
            est = est.max(y_norm);
            let xi: Vec<Cplx<T>> = y
                .iter()
                .map(|z| {
                    let m = z.norm();
                    if m > T::zero() {
                        z / m
                    } else {
                        Complex::one()
                    }
                })
                .collect();
            let z = self.solve_adjoint_vec(&xi);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.norm()))
                .fold((0, T::zero()), |acc, v| if v.1 > acc.1 { v } else { acc });
            let ztx = z
                .iter()
                .zip(&x)
                .fold(T::zero(), |a, (zi, xi)| a + (zi.conj() * xi).re);
            if zmax <= ztx {
                break;
            }
            x.iter_mut().for_each(|v| *v = Complex::zero());
            x[jmax] = Complex::one();
        }
        if est > T::zero() && self.anorm_one > T::zero() {
            T::one() / (est * self.anorm_one)
        } else {
            T::zero()
        }
    }
}

/// `A⁻¹` via LU, counted.
pub fn invert<T: Real>(a: &DenseMatrix<T>, context: &str, ops: &mut OpCounter) -> Result<DenseMatrix<T>> {
    let lu = LuFactors::factor(a, context, ops)?;
    Ok(lu.inverse(ops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, seed: u64) -> DenseMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, n, |r, c| {
            let d = if r == c { n as f64 } else { 0.0 };
            Complex::new(rng.gen_range(-1.0..1.0) + d, rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn lu_inverse_reproduces_identity() {
        let a = random_matrix(30, 7);
        let mut ops = OpCounter::new();
        let inv = invert(&a, "test", &mut ops).unwrap();
        let prod = a.matmul(&inv, &mut ops).unwrap();
        let err = prod.sub(&DenseMatrix::identity(30)).unwrap().max_abs();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = DenseMatrix::<f64>::identity(3);
        a[(1, 1)] = Complex::zero();
        let err = LuFactors::factor(&a, "probe", &mut OpCounter::new()).unwrap_err();
        assert!(matches!(err, MsError::Singular { .. }));
    }

    #[test]
    fn lu_count_is_cubic_over_three() {
        for n in [200usize, 260] {
            let a = random_matrix(n, 3);
            let mut ops = OpCounter::new();
            LuFactors::factor(&a, "count", &mut ops).unwrap();
            let ideal = (n as f64).powi(3) / 3.0;
            let rel = (ops.mults as f64 - ideal).abs() / ideal;
            assert!(rel < 0.15, "n={n} rel={rel}");
        }
    }

    #[test]
    fn inverse_count_is_cubic() {
        let n = 150;
        let a = random_matrix(n, 4);
        let mut ops = OpCounter::new();
        invert(&a, "count", &mut ops).unwrap();
        let ideal = (n as f64).powi(3);
        let rel = (ops.mults as f64 - ideal).abs() / ideal;
        assert!(rel < 0.05, "rel={rel}");
    }

    #[test]
    fn rcond_of_identity_is_one_and_small_for_near_singular() {
        let lu = LuFactors::factor(&DenseMatrix::<f64>::identity(5), "id", &mut OpCounter::new()).unwrap();
        assert!((lu.rcond() - 1.0).abs() < 1e-12);
        let mut a = DenseMatrix::<f64>::identity(4);
        a[(3, 3)] = Complex::new(1e-12, 0.0);
        let lu = LuFactors::factor(&a, "near", &mut OpCounter::new()).unwrap();
        assert!(lu.rcond() < 1e-10);
    }

    #[test]
    fn adjoint_solve_matches_explicit_adjoint() {
        let a = random_matrix(8, 11);
        let lu = LuFactors::factor(&a, "adj", &mut OpCounter::new()).unwrap();
        let b: Vec<Complex<f64>> = (0..8).map(|k| Complex::new(k as f64, 1.0)).collect();
        let x = lu.solve_adjoint_vec(&b);
        let ah = a.transpose().map(|z| z.conj());
        for r in 0..8 {
            let s: Complex<f64> = (0..8).map(|c| ah[(r, c)] * x[c]).sum();
            assert!((s - b[r]).norm() < 1e-12);
        }
    }
}
