//! Real spherical harmonics.
//!
//! Convention (no Condon–Shortley phase):
//!
//! * `Y_{l0} = P̄_l^0(cos θ)`
//! * `Y_{lm} = √2 P̄_l^m(cos θ) cos(mφ)` for `m > 0`
//! * `Y_{l,-m} = √2 P̄_l^m(cos θ) sin(mφ)` for `m > 0`
//!
//! where `P̄_l^m` is the associated Legendre function normalized so that the
//! harmonics are orthonormal on the unit sphere. With this choice
//! `Y_{10} ∝ z`, `Y_{11} ∝ x`, `Y_{1,-1} ∝ y`, all with positive prefactor.

use crate::angmom::index::{block_size, AngularIndex};
use crate::error::{MsError, Result};
use crate::scalar::Real;

/// Normalized `P̄_l^m(x)` for `0 <= m <= l <= l_max`, stored at `[l][m]`.
fn normalized_legendre<T: Real>(l_max: usize, x: T) -> Vec<Vec<T>> {
    let s = (T::one() - x * x).max(T::zero()).sqrt();
    let mut p = vec![Vec::new(); l_max + 1];
    for (l, row) in p.iter_mut().enumerate() {
        row.resize(l + 1, T::zero());
    }
    p[0][0] = T::one() / (T::lit(4.0) * T::PI()).sqrt();
    for m in 1..=l_max {
        let f = T::from_usize_lossy(2 * m + 1) / T::from_usize_lossy(2 * m);
        p[m][m] = f.sqrt() * s * p[m - 1][m - 1];
    }
    for m in 0..l_max {
        p[m + 1][m] = T::from_usize_lossy(2 * m + 3).sqrt() * x * p[m][m];
    }
    for m in 0..=l_max {
        for l in m + 2..=l_max {
            let lf = T::from_usize_lossy(l);
            let mf = T::from_usize_lossy(m);
            let a = ((T::lit(4.0) * lf * lf - T::one()) / (lf * lf - mf * mf)).sqrt();
            let lm1 = lf - T::one();
            let b = ((lm1 * lm1 - mf * mf) / (T::lit(4.0) * lm1 * lm1 - T::one())).sqrt();
            p[l][m] = a * (x * p[l - 1][m] - b * p[l - 2][m]);
        }
    }
    p
}

/// All real harmonics with `l <= l_max` at direction `v` (need not be
/// normalized, must be nonzero), in block-offset order `l² + l + m`.
pub fn real_sph_harm_upto<T: Real>(l_max: usize, v: [T; 3]) -> Result<Vec<T>> {
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(r > T::zero()) || !r.is_finite() {
        return Err(MsError::Domain("direction vector must be nonzero and finite".into()));
    }
    let x = (v[2] / r).max(-T::one()).min(T::one());
    let phi = v[1].atan2(v[0]);
    let p = normalized_legendre(l_max, x);
    let sqrt2 = T::lit(2.0).sqrt();
    let mut out = vec![T::zero(); block_size(l_max)];
    for l in 0..=l_max {
        let base = l * l + l;
        out[base] = p[l][0];
        for m in 1..=l {
            let mphi = T::from_usize_lossy(m) * phi;
            out[base + m] = sqrt2 * p[l][m] * mphi.cos();
            out[base - m] = sqrt2 * p[l][m] * mphi.sin();
        }
    }
    Ok(out)
}

/// `Y_L(u)` for a unit vector `u`.
pub fn real_sph_harm<T: Real>(lm: AngularIndex, u: [T; 3]) -> Result<T> {
    let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(100.0));
    if !((norm - T::one()).abs() <= tol) {
        return Err(MsError::Domain(format!("|u| = {norm} is not a unit vector")));
    }
    Ok(real_sph_harm_upto(lm.l, u)?[lm.offset()])
}
