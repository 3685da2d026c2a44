//! Local density of states inside the inscribed sphere of a cell.
//!
//! In Hartree units the Green's function restricted to cell `i` is
//! `G = 2 R S⁻¹ (τ − t) S⁻ᵀ R + G_s` with the single-site part
//! `G_s(r, r) = −2 Σ_L R_l(r) Ψ_l(r) / E_l`, where `R` is the regular
//! solution and `Ψ` the irregular solution matching `−iκ h⁺_l` at `R_b`.
//! Writing `G_s` through the Bessel-matched irregular solution `Φ` instead
//! gives the equivalent `G = 2 R S⁻¹ τ S⁻ᵀ R − 2 S⁻¹ R Φ`, which divides by
//! `S` and fails where `S` is singular (for instance `V ≡ 0`). Both forms
//! are provided; `n(E) = −(1/π) Im ∫ G` in states per Hartree, no spin.
//! The single-site term assumes spherical site potentials.

use std::io::Write;

use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::angmom::{block_size, AngularIndex, GauntTable};
use crate::error::{MsError, Result};
use crate::linalg::{DenseMatrix, LuFactors, OpCounter};
use crate::partitioned_solver::{SolveOptions, SolverMode};
use crate::scalar::{Cplx, Real};
use crate::single_site::{solve_radial_irregular, solve_radial_irregular_hankel, RadialSolution};
use crate::systems::{SiteScatterer, TestSystem};

pub const HARTREE_EV: f64 = 27.211_386_245_988;

/// `∫₀^{R_in} f(r) g(r) r² dr` for two radial solutions on the same mesh.
pub fn radial_overlap<T: Real>(f: &RadialSolution<T>, g: &RadialSolution<T>, r_in: T) -> Result<Cplx<T>> {
    if f.u.len() != g.u.len() || f.step != g.step {
        return Err(MsError::Dimension("radial solutions on different meshes".into()));
    }
    let vals: Vec<Cplx<T>> = std::iter::once(Complex::zero())
        .chain(f.u.iter().zip(&g.u).map(|(a, b)| a * b))
        .collect();
    integrate_uniform(&vals, f.step, r_in)
}

/// Integral over `[0, upper]` of samples at `x_k = k h`, `k = 0..`: Simpson
/// on whole intervals (3/8 rule for an odd tail), quadratic interpolation
/// for the fractional last piece.
fn integrate_uniform<T: Real>(f: &[Cplx<T>], h: T, upper: T) -> Result<Cplx<T>> {
    let n = f.len() - 1;
    let rb = h * T::from_usize_lossy(n);
    if !(upper >= T::zero()) || upper > rb * (T::one() + T::lit(1e-12)) {
        return Err(MsError::Domain(format!("integration radius {upper} outside mesh [0, {rb}]")));
    }
    let x = (upper / h).min(T::from_usize_lossy(n));
    let k = x.floor().to_f64_lossy() as usize;
    let mut frac = x - T::from_usize_lossy(k);
    if frac < T::lit(1e-10) {
        frac = T::zero();
    }
    if k == n {
        frac = T::zero();
    }
    if n < 2 {
        return Err(MsError::Domain("integration mesh needs at least two intervals".into()));
    }
    let third = T::one() / T::lit(3.0);
    let half = T::lit(0.5);
    // ∫ from x_c to x_c + s·h of the parabola through x_{c−1}, x_c, x_{c+1}
    let parabola = |c: usize, s: T| {
        let (s2, s3) = (s * s, s * s * s);
        let wm = (s3 * third - s2 * half) * half;
        let w0 = s - s3 * third;
        let wp = (s3 * third + s2 * half) * half;
        (f[c - 1] * wm + f[c] * w0 + f[c + 1] * wp) * h
    };
    let mut sum = Complex::zero();
    if k == 0 {
        return Ok(parabola(1, frac - T::one()) - parabola(1, -T::one()));
    }
    let simpson_to = if k % 2 == 0 { k } else { k.saturating_sub(3) };
    let mut j = 0;
    while j + 2 <= simpson_to {
        sum = sum + (f[j] + f[j + 1] * T::lit(4.0) + f[j + 2]) * (h * third);
        j += 2;
    }
    if k == 1 {
        sum = sum - parabola(1, -T::one());
    } else if k % 2 == 1 {
        let s = k - 3;
        sum = sum + (f[s] + f[s + 1] * T::lit(3.0) + f[s + 2] * T::lit(3.0) + f[s + 3]) * (h * T::lit(0.375));
    }
    if frac > T::zero() {
        sum = sum + parabola(k, frac);
    }
    Ok(sum)
}

/// Diagonal radial integrals of one site: `ρ_L = ∫ R_l² r²`,
/// `ρ̄_L = ∫ Φ_l R_l r²` (Bessel-matched `Φ`) and `ρ̃_L = ∫ Ψ_l R_l r²`
/// (Hankel-matched `Ψ`), all over `[0, R_in]`.
#[derive(Debug, Clone)]
pub struct RhoIntegrals<T: Real> {
    pub rho: DenseMatrix<T>,
    pub rho_bar: DenseMatrix<T>,
    pub rho_tilde: DenseMatrix<T>,
}

pub fn rho_integrals<T: Real>(
    regular: &[RadialSolution<T>],
    bessel_irregular: &[RadialSolution<T>],
    hankel_irregular: &[RadialSolution<T>],
    r_in: T,
) -> Result<RhoIntegrals<T>> {
    if regular.is_empty() || regular.len() != bessel_irregular.len() || regular.len() != hankel_irregular.len() {
        return Err(MsError::Dimension("need one regular and two irregular solutions per l".into()));
    }
    let n = block_size(regular.len() - 1);
    let mut out = RhoIntegrals {
        rho: DenseMatrix::zeros(n, n),
        rho_bar: DenseMatrix::zeros(n, n),
        rho_tilde: DenseMatrix::zeros(n, n),
    };
    for (l, r) in regular.iter().enumerate() {
        let a = radial_overlap(r, r, r_in)?;
        let b = radial_overlap(&bessel_irregular[l], r, r_in)?;
        let c = radial_overlap(&hankel_irregular[l], r, r_in)?;
        for m in -(l as i32)..=(l as i32) {
            let o = AngularIndex { l, m }.offset();
            out.rho[(o, o)] = a;
            out.rho_bar[(o, o)] = b;
            out.rho_tilde[(o, o)] = c;
        }
    }
    Ok(out)
}

/// Everything the DOS formulas need for one site at one energy.
#[derive(Debug, Clone)]
pub struct SiteDosData<T: Real> {
    pub e_mat: DenseMatrix<T>,
    pub s_mat: DenseMatrix<T>,
    pub t_mat: DenseMatrix<T>,
    pub rho: RhoIntegrals<T>,
}

impl<T: Real> SiteDosData<T> {
    pub fn from_scatterer(site: &SiteScatterer<T>) -> Result<Self> {
        let energy = site.matrices.energy;
        let l_max = site.matrices.l_max;
        let bessel = (0..=l_max)
            .map(|l| solve_radial_irregular(&site.potential, l, energy))
            .collect::<Result<Vec<_>>>()?;
        let hankel = (0..=l_max)
            .map(|l| solve_radial_irregular_hankel(&site.potential, l, energy))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            e_mat: site.matrices.e_mat.clone(),
            s_mat: site.matrices.s_mat.clone(),
            t_mat: site.matrices.t_mat.clone(),
            rho: rho_integrals(&site.regular, &bessel, &hankel, site.r_in)?,
        })
    }
}

/// One DOS value in states per Hartree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosValue {
    pub n: f64,
    pub valid: bool,
}

impl DosValue {
    fn invalid() -> Self {
        Self { n: f64::NAN, valid: false }
    }
}

/// Inverse of `m`, or `None` when `m` is ill-conditioned or negligible
/// next to `scale` (a vanishing `S` means a vanishing `t`).
fn inverse_checked<T: Real>(m: &DenseMatrix<T>, scale: &DenseMatrix<T>) -> Option<DenseMatrix<T>> {
    if !(m.norm_one() > T::epsilon().sqrt() * scale.norm_one()) {
        return None;
    }
    let mut ops = OpCounter::new();
    let lu = LuFactors::factor(m, "S matrix", &mut ops).ok()?;
    if !(lu.rcond() > T::epsilon() * T::lit(100.0)) {
        return None;
    }
    Some(lu.inverse(&mut ops))
}

/// `tr(S⁻¹ X S⁻ᵀ ρ)`.
fn back_scattering<T: Real>(x: &DenseMatrix<T>, s_inv: &DenseMatrix<T>, rho: &DenseMatrix<T>) -> Result<Cplx<T>> {
    let mut ops = OpCounter::new();
    let y = s_inv.matmul(x, &mut ops)?.matmul(&s_inv.transpose(), &mut ops)?;
    Ok(trace_product(&y, rho))
}

/// `tr(A Bᵀ) = Σ A_ij B_ij`.
fn trace_product<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Cplx<T> {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(Complex::zero(), |s, (x, y)| s + x * y)
}

fn to_dos<T: Real>(bracket: Cplx<T>) -> DosValue {
    let n = -2.0 / std::f64::consts::PI * bracket.im.to_f64_lossy();
    if n.is_finite() {
        DosValue { n, valid: true }
    } else {
        DosValue::invalid()
    }
}

/// `−(2/π) Im[tr(S⁻¹ τ S⁻ᵀ ρ) − tr(S⁻¹ ρ̄)]`; invalid where `S` is singular.
pub fn local_dos_literal<T: Real>(tau_ii: &DenseMatrix<T>, site: &SiteDosData<T>) -> Result<DosValue> {
    let Some(s_inv) = inverse_checked(&site.s_mat, &site.e_mat) else {
        return Ok(DosValue::invalid());
    };
    let back = back_scattering(tau_ii, &s_inv, &site.rho.rho)?;
    let single = trace_product(&s_inv, &site.rho.rho_bar.transpose());
    Ok(to_dos(back - single))
}

/// `−(2/π) Im[tr(S⁻¹ (τ − t) S⁻ᵀ ρ) − tr(E⁻¹ ρ̃)]`. The first term is
/// skipped when `τ = t` exactly; otherwise a singular `S` makes the value
/// invalid.
pub fn local_dos<T: Real>(tau_ii: &DenseMatrix<T>, site: &SiteDosData<T>) -> Result<DosValue> {
    let x = tau_ii.sub(&site.t_mat)?;
    let back = if x.max_abs() == T::zero() {
        Complex::zero()
    } else {
        match inverse_checked(&site.s_mat, &site.e_mat) {
            Some(s_inv) => back_scattering(&x, &s_inv, &site.rho.rho)?,
            None => return Ok(DosValue::invalid()),
        }
    };
    let Some(e_inv) = inverse_checked(&site.e_mat, &site.e_mat) else {
        return Ok(DosValue::invalid());
    };
    let single = trace_product(&e_inv, &site.rho.rho_tilde.transpose());
    Ok(to_dos(back - single))
}

/// Free-electron DOS of a sphere of radius `r` at real energy, summed over
/// `l <= l_max`: `(2κ/π) Σ (2l+1) (r³/2) [j_l² − j_{l−1} j_{l+1}]`.
pub fn free_sphere_dos(energy: f64, r: f64, l_max: usize) -> Result<f64> {
    if !(energy > 0.0) {
        return Err(MsError::Domain(format!("free-sphere DOS needs E > 0 (got {energy})")));
    }
    let k = (2.0 * energy).sqrt();
    let x = k * r;
    let j = crate::angmom::sph_bessel_j_upto::<f64>(l_max + 1, Complex::new(x, 0.0))?;
    let mut sum = 0.0;
    for l in 0..=l_max {
        let jm = if l == 0 { x.cos() / x } else { j[l - 1].re };
        sum += (2 * l + 1) as f64 * 0.5 * r.powi(3) * (j[l].re * j[l].re - jm * j[l + 1].re);
    }
    Ok(2.0 * k / std::f64::consts::PI * sum)
}

/// The `l → ∞` limit of [`free_sphere_dos`]: `2κr³/(3π)`.
pub fn free_sphere_dos_complete(energy: f64, r: f64) -> f64 {
    2.0 * (2.0 * energy).sqrt() * r.powi(3) / (3.0 * std::f64::consts::PI)
}

/// Which DOS expression a sweep evaluates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DosForm {
    #[default]
    Stable,
    Literal,
}

/// DOS of every site for one solver mode over the grid; `n[k][i]` is site
/// `i` at energy `k`, in states per Hartree (NaN where invalid).
#[derive(Debug, Clone)]
pub struct DosCurve {
    pub mode: SolverMode,
    pub n: Vec<Vec<f64>>,
    pub valid: Vec<Vec<bool>>,
    /// Broadening applied, Hartree.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub energy: [f64; 2],
    pub mode: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct DosSweep {
    pub energies: Vec<Complex<f64>>,
    pub curves: Vec<DosCurve>,
    pub failures: Vec<PointFailure>,
}

/// Runs `tau_site_diagonal` for each mode at each grid energy and assembles
/// the site DOS. Failures at single points are recorded and the sweep
/// continues.
pub fn dos_sweep(
    system: &TestSystem,
    modes: &[SolverMode],
    grid: &[Complex<f64>],
    form: DosForm,
    opts: &SolveOptions,
) -> Result<DosSweep> {
    check_grid(grid)?;
    let table = GauntTable::<f64>::new(system.l_max)?;
    let ns = system.cluster.n_sites();
    let mut curves: Vec<DosCurve> = modes
        .iter()
        .map(|&mode| DosCurve {
            mode,
            n: vec![vec![f64::NAN; ns]; grid.len()],
            valid: vec![vec![false; ns]; grid.len()],
            sigma: 0.0,
        })
        .collect();
    let mut failures = Vec::new();
    for (k, &e) in grid.iter().enumerate() {
        let fail = |mode: &str, err: &MsError| PointFailure {
            energy: [e.re, e.im],
            mode: mode.to_string(),
            message: err.to_string(),
        };
        let prepared = system.at_energy(e, &table).and_then(|(sys, sites)| {
            let data = sites
                .iter()
                .map(SiteDosData::from_scatterer)
                .collect::<Result<Vec<_>>>()?;
            Ok((sys, data))
        });
        let (sys, data) = match prepared {
            Ok(v) => v,
            Err(err) => {
                failures.push(fail("all", &err));
                continue;
            }
        };
        for curve in curves.iter_mut() {
            let res = sys.tau_site_diagonal(curve.mode, opts).and_then(|r| {
                (0..ns)
                    .map(|i| {
                        let tau = r.site_block(i);
                        match form {
                            DosForm::Stable => local_dos(&tau, &data[i]),
                            DosForm::Literal => local_dos_literal(&tau, &data[i]),
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            });
            match res {
                Ok(vals) => {
                    for (i, v) in vals.into_iter().enumerate() {
                        curve.n[k][i] = v.n;
                        curve.valid[k][i] = v.valid;
                    }
                }
                Err(err) => failures.push(fail(&curve.mode.label(), &err)),
            }
        }
    }
    Ok(DosSweep {
        energies: grid.to_vec(),
        curves,
        failures,
    })
}

fn check_grid(grid: &[Complex<f64>]) -> Result<()> {
    if grid.is_empty() {
        return Err(MsError::Domain("empty energy grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1].re > w[0].re)) {
        return Err(MsError::Domain("energy grid must be strictly increasing in Re E".into()));
    }
    Ok(())
}

/// Gaussian convolution of samples on a uniform grid of spacing `de`, with
/// the curve mirrored at both ends. `sigma = 0` returns the input.
pub fn gaussian_broaden(values: &[f64], de: f64, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(MsError::Domain(format!("broadening width {sigma} must be finite and >= 0")));
    }
    let n = values.len();
    if sigma == 0.0 || n <= 1 {
        return Ok(values.to_vec());
    }
    if !(de > 0.0) {
        return Err(MsError::Domain(format!("grid spacing {de} must be positive")));
    }
    // mirrored extension has period 2n; a whole number of periods on each
    // side (trapezoid weights at the ends) keeps the wide-kernel limit exact
    let period = 2 * n;
    let reach = (6.0 * sigma / de).ceil() as usize;
    let periods = reach.div_ceil(period).clamp(1, 64);
    let half = periods * period;
    let reflect = |j: i64| -> usize {
        let m = j.rem_euclid(period as i64) as usize;
        if m < n {
            m
        } else {
            period - 1 - m
        }
    };
    let weights: Vec<f64> = (0..=half)
        .map(|d| {
            let x = d as f64 * de / sigma;
            let w = (-0.5 * x * x).exp();
            if d == half {
                0.5 * w
            } else {
                w
            }
        })
        .collect();
    let norm: f64 = weights[0] + 2.0 * weights[1..].iter().sum::<f64>();
    Ok((0..n as i64)
        .map(|i| {
            let mut s = weights[0] * values[i as usize];
            for (d, w) in weights.iter().enumerate().skip(1) {
                let d = d as i64;
                s += w * (values[reflect(i - d)] + values[reflect(i + d)]);
            }
            s / norm
        })
        .collect())
}

impl DosSweep {
    fn spacing(&self) -> Result<f64> {
        if self.energies.len() < 2 {
            return Ok(1.0);
        }
        let de = self.energies[1].re - self.energies[0].re;
        let uniform = self
            .energies
            .windows(2)
            .all(|w| ((w[1].re - w[0].re) - de).abs() <= 1e-9 * de.abs());
        if !uniform {
            return Err(MsError::Domain("broadening needs a uniform energy grid".into()));
        }
        Ok(de)
    }

    /// Broadens every site curve by a Gaussian of width `sigma` (Hartree).
    pub fn broaden(&mut self, sigma: f64) -> Result<()> {
        let de = self.spacing()?;
        for c in &mut self.curves {
            let ns = c.n.first().map_or(0, |r| r.len());
            for i in 0..ns {
                let col: Vec<f64> = c.n.iter().map(|r| r[i]).collect();
                let b = gaussian_broaden(&col, de, sigma)?;
                for (row, v) in c.n.iter_mut().zip(b) {
                    row[i] = v;
                }
            }
            c.sigma = sigma;
        }
        Ok(())
    }

    /// Rows `energy_eV, site_id, mode, n_states_per_eV, valid`.
    pub fn write_csv(&self, w: &mut impl Write, header_comment: &str) -> Result<()> {
        writeln!(w, "{header_comment}")?;
        writeln!(w, "energy_eV,site_id,mode,n_states_per_eV,valid")?;
        for c in &self.curves {
            for (k, e) in self.energies.iter().enumerate() {
                for (i, &n) in c.n[k].iter().enumerate() {
                    writeln!(
                        w,
                        "{:.10e},{},{},{:.10e},{}",
                        e.re * HARTREE_EV,
                        i,
                        c.mode.label(),
                        n / HARTREE_EV,
                        u8::from(c.valid[k][i])
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Deviation of each mode from the first standard-dense curve, as rows
    /// `energy_eV, site_id, mode, deviation_states_per_eV, valid`. Nothing
    /// is written without a standard curve.
    pub fn write_deviations_csv(&self, w: &mut impl Write, header_comment: &str) -> Result<()> {
        writeln!(w, "{header_comment}")?;
        writeln!(w, "energy_eV,site_id,mode,deviation_states_per_eV,valid")?;
        let Some(reference) = self.curves.iter().find(|c| c.mode == SolverMode::StandardDense) else {
            return Ok(());
        };
        for c in self.curves.iter().filter(|c| c.mode != SolverMode::StandardDense) {
            for (k, e) in self.energies.iter().enumerate() {
                for i in 0..c.n[k].len() {
                    let ok = c.valid[k][i] && reference.valid[k][i];
                    writeln!(
                        w,
                        "{:.10e},{},{}-vs-standard,{:.10e},{}",
                        e.re * HARTREE_EV,
                        i,
                        c.mode.label(),
                        (c.n[k][i] - reference.n[k][i]) / HARTREE_EV,
                        u8::from(ok)
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// `|n_mode − n_reference|` per grid point for one site.
pub fn deviation_curve(curve: &DosCurve, reference: &DosCurve, site: usize) -> Vec<f64> {
    curve
        .n
        .iter()
        .zip(&reference.n)
        .map(|(a, b)| (a[site] - b[site]).abs())
        .collect()
}

#[cfg(test)]
mod tests;
