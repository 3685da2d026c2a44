//! Gaunt coefficients `∫ Y_{L1} Y_{L2} Y_{L3} dΩ` for the real harmonics of
//! [`super::harmonics`], built from Wigner 3j symbols and the unitary map
//! between real and complex (Condon–Shortley) harmonics.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::angmom::index::{block_size, AngularIndex};
use crate::error::{MsError, Result};
use crate::scalar::Real;

/// Largest `l` accepted by [`gaunt`]; factorials stay exact enough in `f64`.
pub const GAUNT_L_CAP: usize = 40;

fn factorial(n: i64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        let mut v = vec![1.0; 171];
        for k in 1..171 {
            v[k] = v[k - 1] * k as f64;
        }
        v
    });
    t[n as usize]
}

/// Wigner 3j symbol by the Racah formula.
pub fn wigner_3j(l1: i64, l2: i64, l3: i64, m1: i64, m2: i64, m3: i64) -> f64 {
    if m1 + m2 + m3 != 0
        || m1.abs() > l1
        || m2.abs() > l2
        || m3.abs() > l3
        || l3 < (l1 - l2).abs()
        || l3 > l1 + l2
    {
        return 0.0;
    }
    let tri = factorial(l1 + l2 - l3) * factorial(l1 - l2 + l3) * factorial(-l1 + l2 + l3)
        / factorial(l1 + l2 + l3 + 1);
    let pref = (tri
        * factorial(l1 + m1)
        * factorial(l1 - m1)
        * factorial(l2 + m2)
        * factorial(l2 - m2)
        * factorial(l3 + m3)
        * factorial(l3 - m3))
    .sqrt();
    let kmin = 0.max(l2 - l3 - m1).max(l1 - l3 + m2);
    let kmax = (l1 + l2 - l3).min(l1 - m1).min(l2 + m2);
    let mut sum = 0.0;
    for k in kmin..=kmax {
        let d = factorial(k)
            * factorial(l1 + l2 - l3 - k)
            * factorial(l1 - m1 - k)
            * factorial(l2 + m2 - k)
            * factorial(l3 - l2 + m1 + k)
            * factorial(l3 - l1 - m2 + k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / d;
    }
    let phase = if (l1 - l2 - m3).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * pref * sum
}

/// Coefficients `(μ, U)` expressing the real harmonic `Y_{lm}` as
/// `Σ_μ U Y_l^μ` over complex harmonics.
fn real_to_complex(m: i64) -> [(i64, Complex64); 2] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    if m == 0 {
        [(0, Complex64::new(1.0, 0.0)), (0, Complex64::new(0.0, 0.0))]
    } else if m > 0 {
        [(m, Complex64::new(sign * r, 0.0)), (-m, Complex64::new(r, 0.0))]
    } else {
        let a = -m;
        let sa = if a % 2 == 0 { 1.0 } else { -1.0 };
        [(a, Complex64::new(0.0, -sa * r)), (-a, Complex64::new(0.0, r))]
    }
}

fn complex_gaunt(l: [i64; 3], mu: [i64; 3]) -> f64 {
    if mu[0] + mu[1] + mu[2] != 0 {
        return 0.0;
    }
    let pref = (((2 * l[0] + 1) * (2 * l[1] + 1) * (2 * l[2] + 1)) as f64
        / (4.0 * std::f64::consts::PI))
        .sqrt();
    pref * wigner_3j(l[0], l[1], l[2], 0, 0, 0) * wigner_3j(l[0], l[1], l[2], mu[0], mu[1], mu[2])
}

fn selection_allows(l1: usize, l2: usize, l3: usize) -> bool {
    (l1 + l2 + l3) % 2 == 0 && l3 >= l1.abs_diff(l2) && l3 <= l1 + l2
}

fn gaunt_f64(a: AngularIndex, b: AngularIndex, c: AngularIndex) -> f64 {
    if !selection_allows(a.l, b.l, c.l) {
        return 0.0;
    }
    let l = [a.l as i64, b.l as i64, c.l as i64];
    let mut sum = Complex64::new(0.0, 0.0);
    for &(mu1, u1) in &real_to_complex(a.m as i64) {
        if u1.norm() == 0.0 {
            continue;
        }
        for &(mu2, u2) in &real_to_complex(b.m as i64) {
            if u2.norm() == 0.0 {
                continue;
            }
            for &(mu3, u3) in &real_to_complex(c.m as i64) {
                if u3.norm() == 0.0 {
                    continue;
                }
                sum += u1 * u2 * u3 * complex_gaunt(l, [mu1, mu2, mu3]);
            }
        }
    }
    debug_assert!(sum.im.abs() < 1e-12);
    sum.re
}

/// `∫ Y_{L1} Y_{L2} Y_{L3} dΩ` over real harmonics.
pub fn gaunt<T: Real>(l1: AngularIndex, l2: AngularIndex, l3: AngularIndex) -> Result<T> {
    let lmax = l1.l.max(l2.l).max(l3.l);
    if lmax > GAUNT_L_CAP {
        return Err(MsError::Domain(format!("l = {lmax} exceeds Gaunt cap {GAUNT_L_CAP}")));
    }
    Ok(T::lit(gaunt_f64(l1, l2, l3)))
}

/// Nonzero `C(L1 L2 | L3)` for `l1, l2 <= l_max` and `l3 <= 2 l_max`,
/// precomputed once and shared read-only afterwards.
#[derive(Debug, Clone)]
pub struct GauntTable<T: Real> {
    l_max: usize,
    // entries[L1 * n + L2] = list of (L3 offset, value)
    entries: Vec<Vec<(usize, T)>>,
}

impl<T: Real> GauntTable<T> {
    pub fn new(l_max: usize) -> Result<Self> {
        if 2 * l_max > GAUNT_L_CAP {
            return Err(MsError::Domain(format!("l_max = {l_max} exceeds Gaunt cap")));
        }
        let n = block_size(l_max);
        let n3 = block_size(2 * l_max);
        let mut entries = Vec::with_capacity(n * n);
        for o1 in 0..n {
            let a = AngularIndex::from_offset(o1);
            for o2 in 0..n {
                let b = AngularIndex::from_offset(o2);
                let mut list = Vec::new();
                for o3 in 0..n3 {
                    let c = AngularIndex::from_offset(o3);
                    if !selection_allows(a.l, b.l, c.l) {
                        continue;
                    }
                    let v = gaunt_f64(a, b, c);
                    if v.abs() > 1e-15 {
                        list.push((o3, T::lit(v)));
                    }
                }
                entries.push(list);
            }
        }
        Ok(Self { l_max, entries })
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Nonzero `(L3, C(L1 L2 | L3))` pairs.
    #[inline]
    pub fn nonzero(&self, l1: usize, l2: usize) -> &[(usize, T)] {
        &self.entries[l1 * block_size(self.l_max) + l2]
    }
}
