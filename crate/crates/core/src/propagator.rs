//! Free-electron structure constants between sites.
//!
//! The block for the site pair `(i, j)`, `R = pos_i − pos_j`, is defined by
//!
//! `H_L(κ, r − R) = Σ_{L'} g_{LL'}(R) J_{L'}(κ, r)` for `|r| < |R|`,
//!
//! with `J_L = j_l(κr) Y_L(r̂)` and `H_L = −iκ h⁺_l(κr) Y_L(r̂)` over the
//! real harmonics. The closed form evaluated here is
//!
//! `g_{LL'}(R) = 4π Σ_{L''} i^{l'−l−l''} C(L L' | L'') H_{L''}(κ, R)`,
//!
//! whose phase was fixed against the identity itself (see the tests and
//! [`verify_reexpansion`]). It gives the reciprocity `g^{ij}_{LL'} =
//! g^{ji}_{L'L}` and the parity relation `g^{ij}_{LL'} = (−1)^{l+l'}
//! g^{ji}_{LL'}`.

use std::f64::consts::PI;

use num_complex::Complex;
use num_traits::Zero;

use crate::angmom::{
    block_size, gaunt, real_sph_harm_upto, sph_bessel_j_upto, sph_hankel_plus_upto, AngularIndex,
    ComplexWaveNumber, GauntTable,
};
use crate::cluster::{Cluster, MIN_SEPARATION};
use crate::error::{MsError, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::{i_pow, imag_unit, Cplx, Real};

/// Dense `g` over composite `(site, L)` indices; diagonal site blocks are zero.
#[derive(Debug, Clone)]
pub struct StructureConstants<T: Real> {
    l_max: usize,
    n_sites: usize,
    kappa: Cplx<T>,
    matrix: DenseMatrix<T>,
}

impl<T: Real> StructureConstants<T> {
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn kappa(&self) -> Cplx<T> {
        self.kappa
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix<T> {
        self.matrix
    }

    /// The `(l_max+1)² × (l_max+1)²` block `g^{ij}`.
    pub fn block(&self, i: usize, j: usize) -> DenseMatrix<T> {
        let nl = block_size(self.l_max);
        self.matrix.block(i * nl, j * nl, nl, nl)
    }
}

fn separation(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// `H_L(κ, v)` for all `L` with `l <= l_max`.
fn outgoing_waves<T: Real>(l_max: usize, kappa: Cplx<T>, v: [f64; 3]) -> Result<Vec<Cplx<T>>> {
    let r = T::lit(norm3(v));
    let h = sph_hankel_plus_upto(l_max, kappa * r)?;
    let y = real_sph_harm_upto(l_max, v.map(T::lit))?;
    let pre = -imag_unit::<T>() * kappa;
    Ok((0..block_size(l_max))
        .map(|o| pre * h[AngularIndex::from_offset(o).l] * y[o])
        .collect())
}

/// `J_L(κ, v)` for all `L` with `l <= l_max`; `v = 0` gives `δ_{L,00} Y_00`.
fn regular_waves<T: Real>(l_max: usize, kappa: Cplx<T>, v: [f64; 3]) -> Result<Vec<Cplx<T>>> {
    let n = block_size(l_max);
    let r = norm3(v);
    if r == 0.0 {
        let mut out = vec![Complex::zero(); n];
        out[0] = Complex::new(T::lit(0.5 / PI.sqrt()), T::zero());
        return Ok(out);
    }
    let j = sph_bessel_j_upto(l_max, kappa * T::lit(r))?;
    let y = real_sph_harm_upto(l_max, v.map(T::lit))?;
    Ok((0..n)
        .map(|o| j[AngularIndex::from_offset(o).l] * y[o])
        .collect())
}

/// One block `g_{LL'}(R)` for `l, l' <= l_max`.
fn pair_block<T: Real>(
    table: &GauntTable<T>,
    kappa: Cplx<T>,
    rvec: [f64; 3],
) -> Result<DenseMatrix<T>> {
    let l_max = table.l_max();
    let n = block_size(l_max);
    let hy = outgoing_waves(2 * l_max, kappa, rvec)?;
    let four_pi = T::lit(4.0 * PI);
    Ok(DenseMatrix::from_fn(n, n, |a, b| {
        let la = AngularIndex::from_offset(a).l as i64;
        let lb = AngularIndex::from_offset(b).l as i64;
        let mut sum = Complex::zero();
        for &(c, coef) in table.nonzero(a, b) {
            let lc = AngularIndex::from_offset(c).l as i64;
            sum = sum + i_pow::<T>(lb - la - lc) * hy[c] * coef;
        }
        sum * four_pi
    }))
}

/// Assembles `g` for every site pair of `cluster`, all with the same `l_max`.
pub fn structure_constants<T: Real>(
    cluster: &Cluster,
    kappa: ComplexWaveNumber<T>,
    l_max: usize,
) -> Result<StructureConstants<T>> {
    let table = GauntTable::<T>::new(l_max)?;
    structure_constants_with_table(cluster, kappa, &table)
}

/// As [`structure_constants`], reusing a precomputed Gaunt table (energy
/// sweeps build it once).
pub fn structure_constants_with_table<T: Real>(
    cluster: &Cluster,
    kappa: ComplexWaveNumber<T>,
    table: &GauntTable<T>,
) -> Result<StructureConstants<T>> {
    let l_max = table.l_max();
    let nl = block_size(l_max);
    let ns = cluster.n_sites();
    let k = kappa.value();
    if k.is_zero() {
        return Err(MsError::Domain("wave number must be nonzero".into()));
    }
    let mut matrix = DenseMatrix::zeros(ns * nl, ns * nl);
    for i in 0..ns {
        for j in 0..ns {
            if i == j {
                continue;
            }
            let rvec = separation(cluster.position(i), cluster.position(j));
            if norm3(rvec) < MIN_SEPARATION {
                return Err(MsError::Domain(format!("sites {i} and {j} coincide")));
            }
            let blk = pair_block(table, k, rvec)?;
            matrix.set_block(i * nl, j * nl, &blk);
        }
    }
    Ok(StructureConstants {
        l_max,
        n_sites: ns,
        kappa: k,
        matrix,
    })
}

/// Highest `l'` kept when summing the re-expansion beyond the stored block.
fn tail_cutoff(l_max: usize) -> usize {
    crate::angmom::gaunt::GAUNT_L_CAP - l_max
}

/// Largest relative residual `|LHS − RHS| / |LHS|` of the re-expansion
/// identity for the pair `(i, j)` over `test_points` (offsets from site `i`)
/// and all `L <= l_max`.
///
/// The stored block supplies every `l' <= l_max` term; the remaining terms
/// up to a fixed cutoff come from the closed form, so an error in the
/// stored block shows up directly in the residual. Evaluation is in `f64`.
/// The truncated tail converges like `(|r|/|R|)^{l'}` times a factor growing
/// with `l`, so points within about `|R|/4` are needed for 1e-10 level
/// residuals at `l_max = 6`.
pub fn verify_reexpansion<T: Real>(
    g: &StructureConstants<T>,
    cluster: &Cluster,
    pair: (usize, usize),
    test_points: &[[f64; 3]],
) -> Result<f64> {
    let (i, j) = pair;
    if i == j || i >= g.n_sites() || j >= g.n_sites() || cluster.n_sites() != g.n_sites() {
        return Err(MsError::Invalid(format!("bad site pair ({i}, {j})")));
    }
    let rvec = separation(cluster.position(i), cluster.position(j));
    let rlen = norm3(rvec);
    for p in test_points {
        if !(norm3(*p) < rlen) {
            return Err(MsError::Domain(format!(
                "test point at |r| = {} lies outside the convergence sphere |r| < {rlen}",
                norm3(*p)
            )));
        }
    }
    let l_max = g.l_max();
    let l_cut = tail_cutoff(l_max);
    let kappa = Complex::new(g.kappa().re.to_f64_lossy(), g.kappa().im.to_f64_lossy());
    let stored = g.block(i, j);
    let n = block_size(l_max);
    let n_cut = block_size(l_cut);
    let hy = outgoing_waves::<f64>(l_max + l_cut, kappa, rvec)?;
    // tail coefficients g_{LL'} for l <= l_max < l' <= l_cut
    let mut tail = vec![vec![Complex::zero(); n_cut]; n];
    for (a, row) in tail.iter_mut().enumerate() {
        let ia = AngularIndex::from_offset(a);
        for (b, val) in row.iter_mut().enumerate().skip(n) {
            let ib = AngularIndex::from_offset(b);
            let mut sum = Complex::zero();
            for lc in ia.l.abs_diff(ib.l)..=(ia.l + ib.l) {
                if (ia.l + ib.l + lc) % 2 == 1 {
                    continue;
                }
                // real-harmonic Gaunt coefficients vanish unless |m''| = |m ± m'|
                let (p, q) = ((ia.m + ib.m).abs(), (ia.m - ib.m).abs());
                let mut ms = vec![p, -p, q, -q];
                ms.sort_unstable();
                ms.dedup();
                for mc in ms.into_iter().filter(|m| m.unsigned_abs() as usize <= lc) {
                    let ic = AngularIndex { l: lc, m: mc };
                    let coef: f64 = gaunt(ia, ib, ic)?;
                    if coef != 0.0 {
                        sum += i_pow::<f64>(ib.l as i64 - ia.l as i64 - lc as i64)
                            * hy[ic.offset()]
                            * coef;
                    }
                }
            }
            *val = sum * 4.0 * PI;
        }
    }
    let mut worst = 0.0f64;
    for p in test_points {
        let lhs = outgoing_waves::<f64>(l_max, kappa, separation(*p, rvec))?;
        let jr = regular_waves::<f64>(l_cut, kappa, *p)?;
        for a in 0..n {
            let mut rhs = Complex::zero();
            for b in 0..n {
                let s = stored[(a, b)];
                rhs += Complex::new(s.re.to_f64_lossy(), s.im.to_f64_lossy()) * jr[b];
            }
            for b in n..n_cut {
                rhs += tail[a][b] * jr[b];
            }
            let scale = lhs[a].norm();
            if scale > 0.0 {
                worst = worst.max((lhs[a] - rhs).norm() / scale);
            } else {
                worst = worst.max((lhs[a] - rhs).norm());
            }
        }
    }
    if !worst.is_finite() {
        return Err(MsError::NonFinite("re-expansion residual".into()));
    }
    Ok(worst)
}
