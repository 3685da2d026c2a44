//! Spherical Bessel `j_l` and outgoing Hankel `h⁺_l = j_l + i y_l` of complex
//! argument.
//!
//! `j_l` uses the ascending series when `|z| < max(l/2, 1/2)` and Miller's
//! downward recurrence otherwise (normalized against the closed form of
//! `j_0` or `j_1`, whichever is larger). `h⁺_l` uses upward recurrence from
//! the closed forms, which is stable for the outgoing solution.

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{MsError, Result};
use crate::scalar::{cplx_is_finite, imag_unit, Cplx, Real};

const SERIES_MAX_TERMS: usize = 200;

fn check_range<T: Real>(z: Cplx<T>) -> Result<()> {
    if !cplx_is_finite(z) {
        return Err(MsError::Domain(format!("non-finite argument {z:?}")));
    }
    // sin, cos and exp(iz) grow like exp(|Im z|)
    let limit = T::max_value().ln() - T::lit(2.0);
    if z.im.abs() > limit {
        return Err(MsError::Range(format!(
            "|Im z| = {} overflows trigonometric factors",
            z.im
        )));
    }
    Ok(())
}

/// `(2l+1)!!` as a real.
fn double_factorial_odd<T: Real>(l: usize) -> T {
    (0..=l).fold(T::one(), |acc, k| acc * T::from_usize_lossy(2 * k + 1))
}

fn series_j<T: Real>(l: usize, z: Cplx<T>) -> Cplx<T> {
    let half_z2 = z * z * T::lit(-0.5);
    let mut term: Cplx<T> = Complex::one();
    let mut sum = term;
    let eps = T::epsilon() * T::lit(0.25);
    for k in 1..SERIES_MAX_TERMS {
        let denom = T::from_usize_lossy(k * (2 * l + 2 * k + 1));
        term = term * half_z2 / denom;
        sum = sum + term;
        if term.norm() <= eps * sum.norm() {
            break;
        }
    }
    z.powu(l as u32) / double_factorial_odd::<T>(l) * sum
}

fn use_series<T: Real>(l: usize, z: Cplx<T>) -> bool {
    let r = z.norm();
    r < T::lit(0.5) || r < T::from_usize_lossy(l) * T::lit(0.5)
}

/// `j_0 .. j_{l_max}` at `z`.
pub fn sph_bessel_j_upto<T: Real>(l_max: usize, z: Cplx<T>) -> Result<Vec<Cplx<T>>> {
    check_range(z)?;
    if z.norm() < T::lit(0.5) {
        return Ok((0..=l_max).map(|l| series_j(l, z)).collect());
    }
    let mut out = miller_j(l_max, z);
    for (l, v) in out.iter_mut().enumerate() {
        if use_series(l, z) {
            *v = series_j(l, z);
        }
    }
    if out.iter().any(|v| !cplx_is_finite(*v)) {
        return Err(MsError::Range(format!("j_l({z:?}) not representable")));
    }
    Ok(out)
}

fn miller_j<T: Real>(l_max: usize, z: Cplx<T>) -> Vec<Cplx<T>> {
    let extra = 25 + z.norm().ceil().to_usize().unwrap_or(0);
    let start = l_max.max(1) + extra;
    let rescale_at = T::max_value().sqrt();
    let tiny = T::min_positive_value().sqrt();
    let mut vals = vec![Complex::zero(); start + 2];
    vals[start] = Complex::new(tiny, T::zero());
    for l in (1..=start).rev() {
        let next = vals[l] * T::from_usize_lossy(2 * l + 1) / z - vals[l + 1];
        vals[l - 1] = next;
        if next.norm() > rescale_at {
            let s = T::one() / next.norm();
            for v in vals[l - 1..=start].iter_mut() {
                *v = *v * s;
            }
        }
    }
    let j0 = z.sin() / z;
    let j1 = z.sin() / (z * z) - z.cos() / z;
    let scale = if j0.norm() >= j1.norm() {
        j0 / vals[0]
    } else {
        j1 / vals[1]
    };
    vals.truncate(l_max + 1);
    vals.iter().map(|v| v * scale).collect()
}

/// `j_l(z)`.
pub fn sph_bessel_j<T: Real>(l: usize, z: Cplx<T>) -> Result<Cplx<T>> {
    check_range(z)?;
    if use_series(l, z) {
        return Ok(series_j(l, z));
    }
    Ok(sph_bessel_j_upto(l, z)?[l])
}

/// `h⁺_0 .. h⁺_{l_max}` at `z != 0`.
pub fn sph_hankel_plus_upto<T: Real>(l_max: usize, z: Cplx<T>) -> Result<Vec<Cplx<T>>> {
    check_range(z)?;
    if z.is_zero() {
        return Err(MsError::Domain("h⁺_l is singular at z = 0".into()));
    }
    let i = imag_unit::<T>();
    let e = (i * z).exp();
    let mut out = Vec::with_capacity(l_max + 1);
    out.push(-i * e / z);
    if l_max >= 1 {
        out.push(-(e / z) * (Cplx::<T>::one() + i / z));
    }
    for l in 1..l_max {
        let next = out[l] * T::from_usize_lossy(2 * l + 1) / z - out[l - 1];
        out.push(next);
    }
    if out.iter().any(|v| !cplx_is_finite(*v)) {
        return Err(MsError::Range(format!("h⁺_l({z:?}) not representable")));
    }
    Ok(out)
}

pub fn sph_hankel_plus<T: Real>(l: usize, z: Cplx<T>) -> Result<Cplx<T>> {
    Ok(sph_hankel_plus_upto(l, z)?[l])
}

/// `y_0 .. y_{l_max}`, via `y_l = (h⁺_l − j_l) / i`.
pub fn sph_bessel_y_upto<T: Real>(l_max: usize, z: Cplx<T>) -> Result<Vec<Cplx<T>>> {
    let j = sph_bessel_j_upto(l_max, z)?;
    let h = sph_hankel_plus_upto(l_max, z)?;
    let i = imag_unit::<T>();
    Ok(j.iter().zip(&h).map(|(j, h)| (h - j) / i).collect())
}

/// Values and `d/dz` derivatives of a spherical Bessel family for
/// `l = 0..=l_max`, given the values for `l = 0..=l_max+1`.
///
/// Uses `f'_l = (l f_{l-1} − (l+1) f_{l+1}) / (2l+1)`, which has no `1/z`.
pub fn derivatives_from_upto<T: Real>(vals: &[Cplx<T>]) -> Vec<Cplx<T>> {
    let l_max = vals.len() - 2;
    (0..=l_max)
        .map(|l| {
            if l == 0 {
                -vals[1]
            } else {
                (vals[l - 1] * T::from_usize_lossy(l) - vals[l + 1] * T::from_usize_lossy(l + 1))
                    / T::from_usize_lossy(2 * l + 1)
            }
        })
        .collect()
}

/// `(j_l, j'_l)` for `l = 0..=l_max`.
pub fn sph_bessel_j_with_deriv<T: Real>(
    l_max: usize,
    z: Cplx<T>,
) -> Result<(Vec<Cplx<T>>, Vec<Cplx<T>>)> {
    let mut vals = sph_bessel_j_upto(l_max + 1, z)?;
    let d = derivatives_from_upto(&vals);
    vals.truncate(l_max + 1);
    Ok((vals, d))
}

/// `(h⁺_l, h⁺'_l)` for `l = 0..=l_max`.
pub fn sph_hankel_plus_with_deriv<T: Real>(
    l_max: usize,
    z: Cplx<T>,
) -> Result<(Vec<Cplx<T>>, Vec<Cplx<T>>)> {
    let mut vals = sph_hankel_plus_upto(l_max + 1, z)?;
    let d = derivatives_from_upto(&vals);
    vals.truncate(l_max + 1);
    Ok((vals, d))
}
