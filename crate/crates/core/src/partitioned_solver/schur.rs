//! Block inverses of the partitioned `M`.

use num_complex::Complex;
use num_traits::One;

use crate::error::{MsError, Result};
use crate::linalg::{DenseMatrix, LuFactors, OpCounter};
use crate::partitioned_solver::partition::{PartitionScheme, PartitionedM};
use crate::partitioned_solver::sparse::SparseMatrix;
use crate::scalar::Real;

/// Blocks of `M⁻¹` in partitioned order, written 𝒜, 𝒝, 𝒞, 𝒟 in the docs.
#[derive(Debug, Clone)]
pub struct InverseBlocks<T: Real> {
    pub a: DenseMatrix<T>,
    pub b: DenseMatrix<T>,
    pub c: DenseMatrix<T>,
    pub d: DenseMatrix<T>,
    /// Smallest reciprocal condition estimate of the factorizations used.
    pub rcond: f64,
}

impl<T: Real> InverseBlocks<T> {
    /// `M⁻¹` in composite order.
    pub fn assemble(&self, scheme: &PartitionScheme) -> Result<DenseMatrix<T>> {
        let (a, n) = (scheme.a(), scheme.dim());
        let mut part = DenseMatrix::zeros(n, n);
        part.set_block(0, 0, &self.a);
        part.set_block(0, a, &self.b);
        part.set_block(a, 0, &self.c);
        part.set_block(a, a, &self.d);
        scheme.unpermute(&part)
    }
}

pub(crate) fn factor_checked<T: Real>(
    m: &DenseMatrix<T>,
    context: &str,
    ops: &mut OpCounter,
) -> Result<(LuFactors<T>, f64)> {
    let lu = LuFactors::factor(m, context, ops)?;
    let rcond = lu.rcond().to_f64_lossy();
    if m.rows() > 0 && !(rcond > T::epsilon().to_f64_lossy()) {
        return Err(MsError::Singular {
            context: context.to_string(),
            rcond,
        });
    }
    Ok((lu, rcond))
}

/// `𝒜 = (A − B D⁻¹ C)⁻¹`, `𝒝 = −𝒜 B D⁻¹`, `𝒞 = −D⁻¹ C 𝒜`,
/// `𝒟 = D⁻¹ + D⁻¹ C 𝒜 B D⁻¹`.
pub fn exact_schur_inverse<T: Real>(p: &PartitionedM<T>, ops: &mut OpCounter) -> Result<InverseBlocks<T>> {
    let d = p
        .d
        .as_ref()
        .ok_or_else(|| MsError::Invalid("exact Schur inverse needs the D block".into()))?;
    let (lu_d, rc_d) = factor_checked(d, "D block", ops)?;
    let d_inv = lu_d.inverse(ops);
    let dinv_c = d_inv.matmul(&p.c, ops)?;
    let schur = p.a.sub(&p.b.matmul(&dinv_c, ops)?)?;
    let (lu_s, rc_s) = factor_checked(&schur, "Schur complement A - B D^-1 C", ops)?;
    let a_blk = lu_s.inverse(ops);
    let b_dinv = p.b.matmul(&d_inv, ops)?;
    let minus = -Complex::<T>::one();
    let b_blk = a_blk.matmul(&b_dinv, ops)?.scale(minus);
    let c_blk = dinv_c.matmul(&a_blk, ops)?.scale(minus);
    let d_blk = d_inv.sub(&dinv_c.matmul(&b_blk, ops)?)?;
    Ok(InverseBlocks {
        a: a_blk,
        b: b_blk,
        c: c_blk,
        d: d_blk,
        rcond: rc_d.min(rc_s),
    })
}

/// `B C`, with `B` dense or thresholded.
pub(crate) fn b_times<T: Real>(
    b_dense: &DenseMatrix<T>,
    b_sparse: Option<&SparseMatrix<T>>,
    rhs: &DenseMatrix<T>,
    ops: &mut OpCounter,
) -> Result<DenseMatrix<T>> {
    match b_sparse {
        Some(sp) => sp.mul_dense(rhs, ops),
        None => b_dense.matmul(rhs, ops),
    }
}

/// The relations with `D ≈ I`: `𝒜 = (A − BC)⁻¹`, `𝒝 = −𝒜B`, `𝒞 = −C𝒜`,
/// `𝒟 = I + C𝒜B`. A thresholded `B` replaces the dense one in all four.
pub fn approx_inverse_blocks<T: Real>(
    p: &PartitionedM<T>,
    b_sparse: Option<&SparseMatrix<T>>,
    ops: &mut OpCounter,
) -> Result<InverseBlocks<T>> {
    let bc = b_times(&p.b, b_sparse, &p.c, ops)?;
    let (lu, rcond) = factor_checked(&p.a.sub(&bc)?, "A - B C", ops)?;
    let a_blk = lu.inverse(ops);
    let minus = -Complex::<T>::one();
    let ab = match b_sparse {
        Some(sp) => sp.left_mul_columns(&a_blk, 0..sp.cols(), ops)?,
        None => a_blk.matmul(&p.b, ops)?,
    };
    let b_blk = ab.scale(minus);
    let c_blk = p.c.matmul(&a_blk, ops)?.scale(minus);
    let d_blk = DenseMatrix::identity(p.c.rows()).add(&p.c.matmul(&ab, ops)?)?;
    Ok(InverseBlocks {
        a: a_blk,
        b: b_blk,
        c: c_blk,
        d: d_blk,
        rcond,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitioned_solver::partition::partition;
    use crate::partitioned_solver::sparse::sparsify_b;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C = Complex<f64>;

    fn well_conditioned(n: usize, seed: u64) -> DenseMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 0.5 / (n as f64).sqrt();
        let mut m = DenseMatrix::from_fn(n, n, |_, _| C::new(rng.gen_range(-s..s), rng.gen_range(-s..s)));
        for k in 0..n {
            m[(k, k)] += C::new(1.0, 0.0);
        }
        m
    }

    fn rel(x: &DenseMatrix<f64>, y: &DenseMatrix<f64>) -> f64 {
        x.relative_frobenius_error(y).unwrap()
    }

    #[test]
    fn exact_schur_matches_dense_inverse() {
        // 40x40 with a = 16: ten l_max = 1 sites, two of them with l_pt = 1
        let scheme = PartitionScheme::new(1, vec![1, 1, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!((scheme.a(), scheme.dim()), (16, 40));
        let m = well_conditioned(scheme.dim(), 1);
        let p = partition(&m, &scheme).unwrap();
        let inv = exact_schur_inverse(&p, &mut OpCounter::new()).unwrap();
        let dense = crate::linalg::invert(&m, "M", &mut OpCounter::new()).unwrap();
        assert!(rel(&inv.assemble(&scheme).unwrap(), &dense) < 1e-10);
    }

    #[test]
    fn block_diagonal_input() {
        let scheme = PartitionScheme::uniform(3, 2, 1).unwrap();
        let m0 = well_conditioned(scheme.dim(), 2);
        let mut p = partition(&m0, &scheme).unwrap();
        p.b = DenseMatrix::zeros(p.b.rows(), p.b.cols());
        p.c = DenseMatrix::zeros(p.c.rows(), p.c.cols());
        let inv = exact_schur_inverse(&p, &mut OpCounter::new()).unwrap();
        let a_inv = crate::linalg::invert(&p.a, "A", &mut OpCounter::new()).unwrap();
        let d_inv = crate::linalg::invert(p.d.as_ref().unwrap(), "D", &mut OpCounter::new()).unwrap();
        assert!(rel(&inv.a, &a_inv) < 1e-13);
        assert!(rel(&inv.d, &d_inv) < 1e-13);
        assert_eq!(inv.b.max_abs(), 0.0);
    }

    #[test]
    fn empty_large_block() {
        let scheme = PartitionScheme::uniform(3, 2, 2).unwrap();
        let m = well_conditioned(scheme.dim(), 3);
        let p = partition(&m, &scheme).unwrap();
        let inv = exact_schur_inverse(&p, &mut OpCounter::new()).unwrap();
        let dense = crate::linalg::invert(&m, "M", &mut OpCounter::new()).unwrap();
        assert!(rel(&inv.a, &dense) < 1e-13);
        let approx = approx_inverse_blocks(&p, None, &mut OpCounter::new()).unwrap();
        assert!(rel(&approx.a, &dense) < 1e-13);
    }

    #[test]
    fn approximation_exact_when_d_is_identity() {
        let scheme = PartitionScheme::uniform(4, 2, 1).unwrap();
        let m0 = well_conditioned(scheme.dim(), 4);
        let mut p = partition(&m0, &scheme).unwrap();
        let nb = scheme.b();
        p.d = Some(DenseMatrix::identity(nb));
        let exact = exact_schur_inverse(&p, &mut OpCounter::new()).unwrap();
        let approx = approx_inverse_blocks(&p, None, &mut OpCounter::new()).unwrap();
        for (x, y) in [(&exact.a, &approx.a), (&exact.b, &approx.b), (&exact.c, &approx.c), (&exact.d, &approx.d)] {
            assert!(rel(y, x) < 1e-13);
        }
    }

    #[test]
    fn sparse_with_p_one_equals_dense() {
        let scheme = PartitionScheme::uniform(4, 2, 1).unwrap();
        let m = well_conditioned(scheme.dim(), 5);
        let p = partition(&m, &scheme).unwrap();
        let (sp, _) = sparsify_b(&p.b, 1.0, None).unwrap();
        let dense = approx_inverse_blocks(&p, None, &mut OpCounter::new()).unwrap();
        let sparse = approx_inverse_blocks(&p, Some(&sp), &mut OpCounter::new()).unwrap();
        for (x, y) in [(&dense.a, &sparse.a), (&dense.b, &sparse.b), (&dense.c, &sparse.c), (&dense.d, &sparse.d)] {
            assert!(rel(y, x) <= 1e-14);
        }
    }

    #[test]
    fn singular_schur_reported() {
        let scheme = PartitionScheme::uniform(2, 1, 0).unwrap();
        let m = DenseMatrix::<f64>::identity(scheme.dim());
        let mut p = partition(&m, &scheme).unwrap();
        p.a = DenseMatrix::zeros(2, 2);
        assert!(matches!(
            exact_schur_inverse(&p, &mut OpCounter::new()),
            Err(MsError::Singular { .. })
        ));
        assert!(matches!(
            approx_inverse_blocks(&p, None, &mut OpCounter::new()),
            Err(MsError::Singular { .. })
        ));
    }
}
