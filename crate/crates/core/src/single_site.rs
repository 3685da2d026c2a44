//! Single-site scattering for spherical potentials.
//!
//! Hartree atomic units throughout: the radial equation is
//! `R'' + (2/r) R' + (2(E − V) − l(l+1)/r²) R = 0`, integrated with Numerov's
//! method for `u = rR` on a uniform mesh `r_k = k h`, `k = 1..=n`, with
//! `r_n = R_b`. The potential outside `R_b` is the constant zero
//! interstitial, so `κ = √(2E)`.
//!
//! From the regular solution `R_l` the boundary Wronskians give
//! `E_l = R_b² W[−iκ h⁺_l, R_l]` and `S_l = R_b² W[j_l, R_l]`, and
//! `t = −S E⁻¹`. Outside the sphere `R_l = −E_l (j_l − iκ t_l h⁺_l)`, so
//! `t_l = −e^{iδ_l} sin δ_l / κ` and the single-channel S-matrix is
//! `1 − 2iκ t_l = e^{2iδ_l}`.

use std::path::Path;

use num_complex::Complex;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angmom::{
    block_size, sph_bessel_j_with_deriv, sph_hankel_plus_with_deriv, AngularIndex,
    ComplexWaveNumber,
};
use crate::error::{MsError, Result};
use crate::linalg::{DenseMatrix, LuFactors, OpCounter};
use crate::scalar::{cplx_is_finite, imag_unit, Cplx, Real};

/// Spherical potential sampled on a uniform mesh ending at `R_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialPotential<T: Real> {
    step: T,
    values: Vec<T>,
}

/// Potentials as they appear in run configurations: named presets, or
/// `(r, V)` samples on their own uniform mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialPreset {
    SquareWell { v0: f64, rb: f64 },
    Zero { rb: f64 },
    Tabulated { samples: Vec<[f64; 2]> },
}

impl PotentialPreset {
    pub fn rb(&self) -> f64 {
        match self {
            PotentialPreset::SquareWell { rb, .. } | PotentialPreset::Zero { rb } => *rb,
            PotentialPreset::Tabulated { samples } => samples.last().map_or(f64::NAN, |s| s[0]),
        }
    }

    /// `npts` is ignored for tabulated potentials.
    pub fn build<T: Real>(&self, npts: usize) -> Result<RadialPotential<T>> {
        match self {
            PotentialPreset::SquareWell { v0, rb } => {
                RadialPotential::square_well(T::lit(*v0), T::lit(*rb), npts)
            }
            PotentialPreset::Zero { rb } => RadialPotential::zero(T::lit(*rb), npts),
            PotentialPreset::Tabulated { samples } => {
                let s: Vec<(T, T)> = samples.iter().map(|p| (T::lit(p[0]), T::lit(p[1]))).collect();
                RadialPotential::from_samples(&s)
            }
        }
    }

    /// Samples of a loaded potential, for embedding in a configuration.
    pub fn tabulate(v: &RadialPotential<f64>) -> Self {
        let samples = (1..=v.npts()).map(|k| [v.radius(k), v.values()[k - 1]]).collect();
        PotentialPreset::Tabulated { samples }
    }
}

pub const DEFAULT_MESH_POINTS: usize = 2000;

impl<T: Real> RadialPotential<T> {
    fn check_mesh(rb: T, npts: usize) -> Result<()> {
        if !(rb > T::zero()) {
            return Err(MsError::Domain(format!("bounding radius {rb} must be positive")));
        }
        if npts < 8 {
            return Err(MsError::Domain(format!("mesh needs at least 8 points, got {npts}")));
        }
        Ok(())
    }

    /// Constant `v0` inside `R_b` (attractive for `v0 < 0`).
    pub fn square_well(v0: T, rb: T, npts: usize) -> Result<Self> {
        Self::check_mesh(rb, npts)?;
        Ok(Self {
            step: rb / T::from_usize_lossy(npts),
            values: vec![v0; npts],
        })
    }

    pub fn zero(rb: T, npts: usize) -> Result<Self> {
        Self::square_well(T::zero(), rb, npts)
    }

    pub fn from_fn(rb: T, npts: usize, f: impl Fn(T) -> T) -> Result<Self> {
        Self::check_mesh(rb, npts)?;
        let step = rb / T::from_usize_lossy(npts);
        let values = (1..=npts).map(|k| f(step * T::from_usize_lossy(k))).collect();
        Ok(Self { step, values })
    }

    /// Builds from `(r, V)` samples, which must lie on `r_k = k h`.
    pub fn from_samples(samples: &[(T, T)]) -> Result<Self> {
        let n = samples.len();
        if n < 8 {
            return Err(MsError::Domain(format!("mesh needs at least 8 points, got {n}")));
        }
        let rb = samples[n - 1].0;
        let step = rb / T::from_usize_lossy(n);
        let tol = step * T::lit(1e-6);
        for (k, &(r, v)) in samples.iter().enumerate() {
            if (r - step * T::from_usize_lossy(k + 1)).abs() > tol {
                return Err(MsError::Invalid(format!(
                    "mesh point {} at r = {r} is not on the uniform mesh r_k = k*{step}",
                    k + 1
                )));
            }
            if !v.is_finite() {
                return Err(MsError::NonFinite(format!("potential at r = {r}")));
            }
        }
        Ok(Self {
            step,
            values: samples.iter().map(|s| s.1).collect(),
        })
    }

    #[inline]
    pub fn step(&self) -> T {
        self.step
    }

    #[inline]
    pub fn npts(&self) -> usize {
        self.values.len()
    }

    pub fn rb(&self) -> T {
        self.step * T::from_usize_lossy(self.values.len())
    }

    /// Radius of mesh point `k` (1-based, `r_k = k h`).
    #[inline]
    pub fn radius(&self, k: usize) -> T {
        self.step * T::from_usize_lossy(k)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `V` at mesh point `k` (1-based). The one ghost point beyond `R_b`,
    /// needed by the boundary derivative, uses quadratic extrapolation of the
    /// inside potential.
    #[inline]
    fn v_at(&self, k: usize) -> T {
        let n = self.values.len();
        if k > n {
            let v = &self.values;
            return T::lit(3.0) * (v[n - 1] - v[n - 2]) + v[n - 3];
        }
        self.values[k.max(1) - 1]
    }

    pub fn is_identically_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }
}

/// Parses `npts <n> rb <R_b> unit hartree-bohr` followed by `r V` pairs.
pub fn parse_potential<T: Real>(text: &str) -> Result<RadialPotential<T>> {
    let mut header: Option<(usize, f64)> = None;
    let mut samples = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks[0] == "npts" {
            if toks.len() != 6 || toks[2] != "rb" || toks[4] != "unit" || toks[5] != "hartree-bohr" {
                return Err(MsError::Parse {
                    line,
                    msg: "expected 'npts <n> rb <R_b> unit hartree-bohr'".into(),
                });
            }
            let n = toks[1].parse().map_err(|_| MsError::Parse {
                line,
                msg: format!("bad point count '{}'", toks[1]),
            })?;
            let rb = toks[3].parse().map_err(|_| MsError::Parse {
                line,
                msg: format!("bad radius '{}'", toks[3]),
            })?;
            header = Some((n, rb));
            continue;
        }
        if header.is_none() {
            return Err(MsError::Parse {
                line,
                msg: "data before 'npts' header".into(),
            });
        }
        if toks.len() != 2 {
            return Err(MsError::Parse {
                line,
                msg: format!("expected 'r V', got {} fields", toks.len()),
            });
        }
        let r: f64 = toks[0].parse().map_err(|_| MsError::Parse {
            line,
            msg: format!("bad radius '{}'", toks[0]),
        })?;
        let v: f64 = toks[1].parse().map_err(|_| MsError::Parse {
            line,
            msg: format!("bad potential '{}'", toks[1]),
        })?;
        samples.push((T::lit(r), T::lit(v)));
    }
    let (n, rb) = header.ok_or(MsError::Parse {
        line: 0,
        msg: "missing 'npts' header".into(),
    })?;
    if samples.len() != n {
        return Err(MsError::Parse {
            line: 0,
            msg: format!("header declares {n} points, found {}", samples.len()),
        });
    }
    let pot = RadialPotential::from_samples(&samples)?;
    if (pot.rb() - T::lit(rb)).abs() > pot.step() * T::lit(1e-6) {
        return Err(MsError::Invalid(format!(
            "last mesh point {} differs from rb {rb}",
            pot.rb()
        )));
    }
    Ok(pot)
}

pub fn load_potential<T: Real>(path: impl AsRef<Path>) -> Result<RadialPotential<T>> {
    parse_potential(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionKind {
    /// `R ~ r^l` at the origin.
    Regular,
    /// Equals `j_l(κr)` in value and slope at `R_b`.
    IrregularBessel,
    /// Equals `−iκ h⁺_l(κr)` in value and slope at `R_b`.
    IrregularHankel,
}

/// Radial function `R_l` and `R_l'` on mesh points `k = 1..=n`.
#[derive(Debug, Clone)]
pub struct RadialSolution<T: Real> {
    pub l: usize,
    pub energy: Cplx<T>,
    pub kind: SolutionKind,
    pub step: T,
    /// `u = rR` at mesh points `k = 1..=n` (index `k − 1`).
    pub u: Vec<Cplx<T>>,
    /// `du/dr` at the same points.
    pub du: Vec<Cplx<T>>,
}

impl<T: Real> RadialSolution<T> {
    fn r(&self, idx: usize) -> T {
        self.step * T::from_usize_lossy(idx + 1)
    }

    pub fn value(&self, idx: usize) -> Cplx<T> {
        self.u[idx] / self.r(idx)
    }

    pub fn derivative(&self, idx: usize) -> Cplx<T> {
        let r = self.r(idx);
        self.du[idx] / r - self.u[idx] / (r * r)
    }

    pub fn values(&self) -> Vec<Cplx<T>> {
        (0..self.u.len()).map(|k| self.value(k)).collect()
    }

    /// `(R(R_b), R'(R_b))`.
    pub fn boundary(&self) -> (Cplx<T>, Cplx<T>) {
        let n = self.u.len() - 1;
        (self.value(n), self.derivative(n))
    }

    /// Multiplies the solution by a constant.
    pub fn scaled(&self, s: Cplx<T>) -> Self {
        Self {
            u: self.u.iter().map(|v| v * s).collect(),
            du: self.du.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }
}

struct NumerovCoeffs<T: Real> {
    h2: T,
    // f_k = l(l+1)/r² + 2(V − E) at k = 0..=n+1 (index k)
    f: Vec<Cplx<T>>,
}

impl<T: Real> NumerovCoeffs<T> {
    fn new(v: &RadialPotential<T>, l: usize, energy: Cplx<T>) -> Self {
        let n = v.npts();
        let ll = T::from_usize_lossy(l * (l + 1));
        let two = T::lit(2.0);
        let mut f = vec![Complex::zero(); n + 2];
        for (k, fk) in f.iter_mut().enumerate().skip(1) {
            let r = v.radius(k);
            *fk = Complex::new(ll / (r * r) + two * v.v_at(k), T::zero()) - energy * two;
        }
        Self {
            h2: v.step() * v.step(),
            f,
        }
    }

    #[inline]
    fn w(&self, k: usize) -> Cplx<T> {
        Cplx::<T>::one() - self.f[k] * (self.h2 / T::lit(12.0))
    }

    /// Fourth-order `u'_k = (a_{k+1} u_{k+1} − a_{k−1} u_{k−1}) / 2h` with
    /// `a = 1 − h²f/6`, written in terms of `Δy = y_{k+1} − y_{k−1}` for
    /// `y = w u` so that no nearly equal mesh values are subtracted.
    fn derivative(&self, k: usize, dy: Cplx<T>, y_km1: Cplx<T>, h: T) -> Cplx<T> {
        let (wp, wm) = (self.w(k + 1), self.w(k - 1));
        let df = (self.f[k + 1] - self.f[k - 1]) * (self.h2 / T::lit(12.0));
        let du = dy / wp + y_km1 * df / (wp * wm);
        (dy * T::lit(2.0) - du) / (h * T::lit(2.0))
    }
}

fn check_solution<T: Real>(u: &[Cplx<T>], what: &str) -> Result<()> {
    if u.iter().all(|v| cplx_is_finite(*v)) {
        Ok(())
    } else {
        Err(MsError::NonFinite(format!("radial integration ({what})")))
    }
}

/// Outward Numerov integration of the regular solution, normalized so that
/// `R ≈ r^l` at small `r`.
pub fn solve_radial_regular<T: Real>(
    v: &RadialPotential<T>,
    l: usize,
    energy: Cplx<T>,
) -> Result<RadialSolution<T>> {
    let n = v.npts();
    let h = v.step();
    let co = NumerovCoeffs::new(v, l, energy);
    // u[k] for k = 0..=n+1; u[0] unused
    let mut u = vec![Complex::zero(); n + 2];
    // Frobenius series u = Σ d_j r^{j+l+1} for 2(V − E) ≈ b0 + b1 r + b2 r²,
    // the quadratic through the first three mesh points.
    let (r1, r2, r3) = (v.radius(1), v.radius(2), v.radius(3));
    let (v1, v2, v3) = (v.v_at(1), v.v_at(2), v.v_at(3));
    let two = T::lit(2.0);
    let a2 = ((v3 - v2) / (r3 - r2) - (v2 - v1) / (r2 - r1)) / (r3 - r1);
    let a1 = (v2 - v1) / (r2 - r1) - a2 * (r1 + r2);
    let a0 = v1 - a1 * r1 - a2 * r1 * r1;
    let b: [Cplx<T>; 3] = [
        (Complex::new(a0, T::zero()) - energy) * two,
        Complex::new(a1 * two, T::zero()),
        Complex::new(a2 * two, T::zero()),
    ];
    let mut d: Vec<Cplx<T>> = vec![Complex::one()];
    for j in 1..40usize {
        let mut acc: Cplx<T> = Complex::zero();
        for (i, bi) in b.iter().enumerate() {
            if i + 2 <= j {
                acc = acc + *bi * d[j - 2 - i];
            }
        }
        d.push(acc / T::from_usize_lossy(j * (j + 2 * l + 1)));
    }
    let seed = |r: T| {
        let mut sum: Cplx<T> = Complex::zero();
        let mut p = T::one();
        for dj in &d {
            sum = sum + *dj * p;
            p = p * r;
        }
        sum * r.powi(l as i32 + 1)
    };
    u[1] = seed(v.radius(1));
    u[2] = seed(v.radius(2));
    // y = w u with y_{k+1} − 2y_k + y_{k−1} = h² f_k u_k, advanced through
    // the first difference dy[k] = y_{k+1} − y_k to keep single precision usable
    let mut y = vec![Complex::zero(); n + 2];
    let mut dy = vec![Complex::zero(); n + 1];
    y[1] = co.w(1) * u[1];
    y[2] = co.w(2) * u[2];
    dy[1] = y[2] - y[1];
    for k in 2..=n {
        dy[k] = dy[k - 1] + co.f[k] * u[k] * co.h2;
        y[k + 1] = y[k] + dy[k];
        u[k + 1] = y[k + 1] / co.w(k + 1);
    }
    check_solution(&u, "regular")?;
    let mut du = vec![Complex::zero(); n];
    for k in 1..=n {
        du[k - 1] = if k == 1 {
            // one-sided: use the seed's analytic slope
            let r = v.radius(1);
            let eps = r * T::lit(1e-4);
            (seed(r + eps) - seed(r - eps)) / (eps * T::lit(2.0))
        } else {
            co.derivative(k, dy[k] + dy[k - 1], y[k - 1], h)
        };
    }
    u.truncate(n + 1);
    u.remove(0);
    Ok(RadialSolution {
        l,
        energy,
        kind: SolutionKind::Regular,
        step: h,
        u,
        du,
    })
}

/// Inward integration from `R_b` with prescribed `u(R_b)` and `u'(R_b)`.
fn integrate_inward<T: Real>(
    v: &RadialPotential<T>,
    l: usize,
    energy: Cplx<T>,
    u_b: Cplx<T>,
    du_b: Cplx<T>,
    kind: SolutionKind,
) -> Result<RadialSolution<T>> {
    let n = v.npts();
    let h = v.step();
    let co = NumerovCoeffs::new(v, l, energy);
    let c5 = T::lit(5.0) / T::lit(12.0);
    // Ghost values u_{n±1} from the Numerov step and the derivative formula.
    let a_p = Cplx::<T>::one() - co.f[n + 1] * (co.h2 / T::lit(6.0));
    let a_m = Cplx::<T>::one() - co.f[n - 1] * (co.h2 / T::lit(6.0));
    let b_p = co.w(n + 1);
    let b_m = co.w(n - 1);
    let rhs1 = du_b * h * T::lit(2.0);
    let rhs2 = (Cplx::<T>::one() + co.f[n] * (co.h2 * c5)) * u_b * T::lit(2.0);
    // a_p x − a_m y = rhs1 ; b_p x + b_m y = rhs2
    let det = a_p * b_m + a_m * b_p;
    let x = (rhs1 * b_m + a_m * rhs2) / det;
    let y = (a_p * rhs2 - b_p * rhs1) / det;
    let mut u = vec![Complex::zero(); n + 2];
    u[n + 1] = x;
    u[n] = u_b;
    u[n - 1] = y;
    let mut yv = vec![Complex::zero(); n + 2];
    let mut dy = vec![Complex::zero(); n + 1];
    for k in n - 1..=n + 1 {
        yv[k] = co.w(k) * u[k];
    }
    dy[n] = yv[n + 1] - yv[n];
    dy[n - 1] = yv[n] - yv[n - 1];
    // The centrifugal term makes Numerov unusable where h²f/12 approaches 1;
    // below k_stop continue with the leading r^{-l} behaviour.
    let k_stop = ((T::from_usize_lossy(l * (l + 1)) / T::lit(6.0)).sqrt().ceil())
        .to_usize()
        .unwrap_or(1)
        .max(1)
        + 1;
    for k in (k_stop + 1..n).rev() {
        dy[k - 1] = dy[k] - co.f[k] * u[k] * co.h2;
        yv[k - 1] = yv[k] - dy[k - 1];
        u[k - 1] = yv[k - 1] / co.w(k - 1);
    }
    for k in (1..k_stop).rev() {
        let ratio = T::from_usize_lossy(k) / T::from_usize_lossy(k_stop);
        u[k] = u[k_stop] * ratio.powi(-(l as i32));
    }
    check_solution(&u, "irregular")?;
    let mut du = vec![Complex::zero(); n];
    for k in 1..=n {
        du[k - 1] = if k == n {
            du_b
        } else if k > k_stop {
            co.derivative(k, dy[k] + dy[k - 1], yv[k - 1], h)
        } else {
            let r = v.radius(k);
            u[k] * (-T::from_usize_lossy(l)) / r
        };
    }
    u.truncate(n + 1);
    u.remove(0);
    Ok(RadialSolution {
        l,
        energy,
        kind,
        step: h,
        u,
        du,
    })
}

/// Solution matching `j_l(κr)` in value and slope at `R_b`.
pub fn solve_radial_irregular<T: Real>(
    v: &RadialPotential<T>,
    l: usize,
    energy: Cplx<T>,
) -> Result<RadialSolution<T>> {
    let kappa = ComplexWaveNumber::from_energy(energy)?.value();
    let rb = v.rb();
    let (j, jd) = sph_bessel_j_with_deriv(l, kappa * rb)?;
    // u = r f, u' = f + r κ f'
    let u_b = j[l] * rb;
    let du_b = j[l] + jd[l] * kappa * rb;
    integrate_inward(v, l, energy, u_b, du_b, SolutionKind::IrregularBessel)
}

/// Solution matching `−iκ h⁺_l(κr)` at `R_b`; together with the regular
/// solution it gives the single-site Green's function without dividing by
/// `S`.
pub fn solve_radial_irregular_hankel<T: Real>(
    v: &RadialPotential<T>,
    l: usize,
    energy: Cplx<T>,
) -> Result<RadialSolution<T>> {
    let kappa = ComplexWaveNumber::from_energy(energy)?.value();
    let rb = v.rb();
    let (h, hd) = sph_hankel_plus_with_deriv(l, kappa * rb)?;
    let f = -imag_unit::<T>() * kappa;
    let u_b = f * h[l] * rb;
    let du_b = f * (h[l] + hd[l] * kappa * rb);
    integrate_inward(v, l, energy, u_b, du_b, SolutionKind::IrregularHankel)
}

/// `r² W[f, g] = r² (f g' − f' g)` at `r`.
pub fn scaled_wronskian<T: Real>(
    r: T,
    f: Cplx<T>,
    df: Cplx<T>,
    g: Cplx<T>,
    dg: Cplx<T>,
) -> Cplx<T> {
    (f * dg - df * g) * (r * r)
}

/// E, S and t matrices of one site over `(l_max+1)²` channels.
#[derive(Debug, Clone)]
pub struct SiteMatrices<T: Real> {
    pub l_max: usize,
    pub energy: Cplx<T>,
    pub e_mat: DenseMatrix<T>,
    pub s_mat: DenseMatrix<T>,
    pub t_mat: DenseMatrix<T>,
}

/// Diagonal `(E_l, S_l)` from regular solutions at `R_b` for `l = 0..=l_max`.
pub fn wronskian_matrices<T: Real>(
    solutions: &[RadialSolution<T>],
    rb: T,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    if solutions.is_empty() {
        return Err(MsError::Invalid("no radial solutions".into()));
    }
    let l_max = solutions.len() - 1;
    let energy = solutions[0].energy;
    let kappa = ComplexWaveNumber::from_energy(energy)?.value();
    let (j, jd) = sph_bessel_j_with_deriv(l_max, kappa * rb)?;
    let (h, hd) = sph_hankel_plus_with_deriv(l_max, kappa * rb)?;
    let mik = -imag_unit::<T>() * kappa;
    let n = block_size(l_max);
    let mut e = DenseMatrix::zeros(n, n);
    let mut s = DenseMatrix::zeros(n, n);
    for (l, sol) in solutions.iter().enumerate() {
        if sol.l != l || sol.kind != SolutionKind::Regular {
            return Err(MsError::Invalid(format!("solution {l} is not the regular l = {l} solution")));
        }
        let (r_b, dr_b) = sol.boundary();
        let e_l = scaled_wronskian(rb, mik * h[l], mik * kappa * hd[l], r_b, dr_b);
        let s_l = scaled_wronskian(rb, j[l], kappa * jd[l], r_b, dr_b);
        for m in -(l as i32)..=(l as i32) {
            let o = AngularIndex { l, m }.offset();
            e[(o, o)] = e_l;
            s[(o, o)] = s_l;
        }
    }
    Ok((e, s))
}

/// `t = −S E⁻¹`.
pub fn t_matrix<T: Real>(e_mat: &DenseMatrix<T>, s_mat: &DenseMatrix<T>, energy: Cplx<T>) -> Result<DenseMatrix<T>> {
    let mut ops = OpCounter::new();
    let lu = LuFactors::factor(e_mat, &format!("E matrix at E = {energy}"), &mut ops)?;
    let rcond = lu.rcond();
    if !(rcond > T::epsilon()) {
        return Err(MsError::Singular {
            context: format!("E matrix at E = {energy}"),
            rcond: rcond.to_f64_lossy(),
        });
    }
    // t = −S E⁻¹  ⇔  tᵀ = −E⁻ᵀ Sᵀ; E is diagonal or general, solve Eᵀ X = Sᵀ
    let lu_t = LuFactors::factor(&e_mat.transpose(), "E transpose", &mut ops)?;
    let x = lu_t.solve(&s_mat.transpose(), &mut ops)?;
    Ok(x.transpose().scale(-Cplx::<T>::one()))
}

impl<T: Real> SiteMatrices<T> {
    /// Regular solutions for `l = 0..=l_max` and the resulting matrices.
    pub fn from_potential(v: &RadialPotential<T>, l_max: usize, energy: Cplx<T>) -> Result<Self> {
        let sols = (0..=l_max)
            .map(|l| solve_radial_regular(v, l, energy))
            .collect::<Result<Vec<_>>>()?;
        let (e_mat, s_mat) = wronskian_matrices(&sols, v.rb())?;
        let t_mat = if v.is_identically_zero() {
            // free scatterer: S vanishes identically
            DenseMatrix::zeros(e_mat.rows(), e_mat.cols())
        } else {
            t_matrix(&e_mat, &s_mat, energy)?
        };
        Ok(Self {
            l_max,
            energy,
            e_mat,
            s_mat,
            t_mat,
        })
    }

    /// Replaces `t` and keeps `E`, setting `S = −t E` so the triple stays
    /// consistent.
    pub fn with_t(&self, t_mat: DenseMatrix<T>) -> Result<Self> {
        let s_mat = t_mat
            .matmul(&self.e_mat, &mut OpCounter::new())?
            .scale(-Cplx::<T>::one());
        Ok(Self {
            t_mat,
            s_mat,
            ..self.clone()
        })
    }

    /// Diagonal entry `t_l` (taken at `m = 0`).
    pub fn t_l(&self, l: usize) -> Cplx<T> {
        let o = AngularIndex { l, m: 0 }.offset();
        self.t_mat[(o, o)]
    }
}

/// Adds a symmetric pseudo-random coupling between channels to a diagonal
/// t-matrix:
/// `|Δ_{LL'}| = strength · e^{−decay |l−l'|} · √|t_l t_l'| · u`, with
/// `u ~ U[0.5, 1.5]` and a uniform random phase, for `L ≠ L'`.
pub fn synthetic_anisotropic_t<T: Real>(
    base: &DenseMatrix<T>,
    strength: T,
    decay: T,
    seed: u64,
) -> Result<DenseMatrix<T>> {
    if !(strength >= T::zero()) {
        return Err(MsError::Domain(format!("strength {strength} must be non-negative")));
    }
    if !base.is_square() {
        return Err(MsError::Dimension("t-matrix must be square".into()));
    }
    let n = base.rows();
    let mut out = base.clone();
    if strength.is_zero() {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for a in 0..n {
        for b in a + 1..n {
            let la = AngularIndex::from_offset(a).l;
            let lb = AngularIndex::from_offset(b).l;
            let env = strength
                * (-decay * T::from_usize_lossy(la.abs_diff(lb))).exp()
                * (base[(a, a)].norm() * base[(b, b)].norm()).sqrt();
            let mag = env * T::lit(rng.gen_range(0.5..1.5));
            let phase = T::lit(rng.gen_range(0.0..std::f64::consts::TAU));
            let d = Complex::from_polar(mag, phase);
            out[(a, b)] = out[(a, b)] + d;
            out[(b, a)] = out[(b, a)] + d;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angmom::sph_hankel_plus_upto;

    type C = Complex<f64>;

    fn rel(a: C, b: C) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    /// `t_l` of a square well from Bessel-function matching alone.
    fn square_well_t_oracle(v0: f64, rb: f64, l: usize, e: C) -> C {
        let k = (e * 2.0).sqrt();
        let kp = ((e - v0) * 2.0).sqrt();
        let (j, jd) = sph_bessel_j_with_deriv::<f64>(l, k * rb).unwrap();
        let (h, hd) = sph_hankel_plus_with_deriv::<f64>(l, k * rb).unwrap();
        let (ji, jid) = sph_bessel_j_with_deriv::<f64>(l, kp * rb).unwrap();
        let i = C::new(0.0, 1.0);
        let w_s = j[l] * kp * jid[l] - k * jd[l] * ji[l];
        let w_e = -i * k * (h[l] * kp * jid[l] - k * hd[l] * ji[l]);
        -w_s / w_e
    }

    #[test]
    fn free_potential_recovers_bessel() {
        let v = RadialPotential::<f64>::zero(2.0, 2000).unwrap();
        let e = C::new(0.3, 0.0);
        let k = (e * 2.0).sqrt();
        for l in 0..=4 {
            let sol = solve_radial_regular(&v, l, e).unwrap();
            let ratio = |idx: usize| {
                let j = crate::angmom::sph_bessel_j(l, k * v.radius(idx + 1)).unwrap();
                sol.value(idx) / j
            };
            let at_rb = ratio(1999);
            for idx in [400usize, 1000, 1500] {
                assert!(rel(ratio(idx), at_rb) < 1e-8, "l={l} idx={idx}");
            }
            // small-r leading coefficient is 1: R = (2l+1)!!/κ^l j_l(κr)
            let df: f64 = (0..=l).map(|q| (2 * q + 1) as f64).product();
            assert!(rel(at_rb, C::new(df, 0.0) / k.powu(l as u32)) < 1e-5, "l={l}");
        }
    }

    #[test]
    fn irregular_free_is_bessel_everywhere() {
        let v = RadialPotential::<f64>::zero(2.0, 1000).unwrap();
        let e = C::new(0.6, 0.01);
        let k = (e * 2.0).sqrt();
        for l in 0..=3 {
            let sol = solve_radial_irregular(&v, l, e).unwrap();
            for idx in [200usize, 500, 999] {
                let r = v.radius(idx + 1);
                let j = crate::angmom::sph_bessel_j(l, k * r).unwrap();
                assert!(rel(sol.value(idx), j) < 1e-7, "l={l} idx={idx}");
            }
        }
    }

    #[test]
    fn square_well_interior_is_bessel_of_inner_wavenumber() {
        let v = RadialPotential::<f64>::square_well(-0.5, 2.0, 2000).unwrap();
        let e = C::new(0.3, 0.0);
        let kp = ((e + 0.5) * 2.0).sqrt();
        let sol = solve_radial_regular(&v, 0, e).unwrap();
        let ratio0 = sol.value(499) / crate::angmom::sph_bessel_j(0, kp * v.radius(500)).unwrap();
        let ratio1 = sol.value(1999) / crate::angmom::sph_bessel_j(0, kp * 2.0).unwrap();
        assert!(rel(ratio0, ratio1) < 1e-9);
    }

    #[test]
    fn square_well_irregular_matches_two_by_two_oracle() {
        // interior: a j_l(κ'r) + b y_l(κ'r) matched to j_l(κr) at R_b
        let (v0, rb) = (-0.5, 2.0);
        let v = RadialPotential::<f64>::square_well(v0, rb, 2000).unwrap();
        let e = C::new(0.3, 0.0);
        let k = (e * 2.0).sqrt();
        let kp = ((e - v0) * 2.0).sqrt();
        for l in 0..=2 {
            let sol = solve_radial_irregular(&v, l, e).unwrap();
            let (j, jd) = sph_bessel_j_with_deriv::<f64>(l, k * rb).unwrap();
            let (ji, jid) = sph_bessel_j_with_deriv::<f64>(l, kp * rb).unwrap();
            let yi = crate::angmom::sph_bessel_y_upto::<f64>(l + 1, kp * rb).unwrap();
            let yid = crate::angmom::bessel::derivatives_from_upto(&yi);
            // [ji yi; kp jid kp yid] [a b]ᵀ = [j; k jd]
            let (m11, m12, m21, m22) = (ji[l], yi[l], kp * jid[l], kp * yid[l]);
            let det = m11 * m22 - m12 * m21;
            let a = (j[l] * m22 - m12 * k * jd[l]) / det;
            let b = (m11 * k * jd[l] - m21 * j[l]) / det;
            let r = 1.0;
            let idx = 999;
            let jr = crate::angmom::sph_bessel_j_upto::<f64>(l, kp * r).unwrap()[l];
            let yr = crate::angmom::sph_bessel_y_upto::<f64>(l, kp * r).unwrap()[l];
            assert!(rel(sol.value(idx), a * jr + b * yr) < 1e-8, "l={l}");
        }
    }

    #[test]
    fn regular_irregular_wronskian_is_r_independent() {
        let v = RadialPotential::<f64>::from_fn(2.5, 2000, |r| -1.2 * (-r * r).exp()).unwrap();
        let e = C::new(0.4, 0.02);
        let reg = solve_radial_regular(&v, 1, e).unwrap();
        let irr = solve_radial_irregular(&v, 1, e).unwrap();
        let w = |idx: usize| {
            let r = v.radius(idx + 1);
            scaled_wronskian(r, reg.value(idx), reg.derivative(idx), irr.value(idx), irr.derivative(idx))
        };
        let w0 = w(1999);
        for idx in [300usize, 800, 1500] {
            assert!(rel(w(idx), w0) < 1e-7, "idx={idx}");
        }
    }

    #[test]
    fn free_scatterer_has_zero_s() {
        let v = RadialPotential::<f64>::zero(2.0, 1500).unwrap();
        for e in [C::new(0.2, 0.0), C::new(1.1, 0.001)] {
            let sm = SiteMatrices::from_potential(&v, 4, e).unwrap();
            assert!(sm.s_mat.max_abs() < 1e-10 * sm.e_mat.max_abs());
            assert_eq!(sm.t_mat.max_abs(), 0.0);
        }
    }

    #[test]
    fn square_well_t_matches_bessel_wronskian_oracle() {
        let (v0, rb) = (-0.5, 2.0);
        let v = RadialPotential::<f64>::square_well(v0, rb, DEFAULT_MESH_POINTS).unwrap();
        let e = C::new(0.3, 0.0);
        let sm = SiteMatrices::from_potential(&v, 4, e).unwrap();
        for l in 0..=4 {
            let oracle = square_well_t_oracle(v0, rb, l, e);
            assert!(rel(sm.t_l(l), oracle) < 1e-8, "l={l}: {} vs {oracle}", sm.t_l(l));
        }
    }

    #[test]
    fn square_well_t_matches_phase_shift_form() {
        let (v0, rb) = (-0.5, 2.0);
        let v = RadialPotential::<f64>::square_well(v0, rb, DEFAULT_MESH_POINTS).unwrap();
        let e = C::new(0.3, 0.0);
        let k = (2.0f64 * 0.3).sqrt();
        let kp = (2.0f64 * 0.8).sqrt();
        let sm = SiteMatrices::from_potential(&v, 3, e).unwrap();
        for l in 0..=3 {
            let (j, jd) = sph_bessel_j_with_deriv::<f64>(l, C::new(k * rb, 0.0)).unwrap();
            let y = crate::angmom::sph_bessel_y_upto::<f64>(l + 1, C::new(k * rb, 0.0)).unwrap();
            let yd = crate::angmom::bessel::derivatives_from_upto(&y);
            let (ji, jid) = sph_bessel_j_with_deriv::<f64>(l, C::new(kp * rb, 0.0)).unwrap();
            let num = k * jd[l].re * ji[l].re - kp * j[l].re * jid[l].re;
            let den = k * yd[l].re * ji[l].re - kp * y[l].re * jid[l].re;
            let delta = (num / den).atan();
            let expected = -C::from_polar(1.0, delta) * delta.sin() / k;
            assert!(rel(sm.t_l(l), expected) < 1e-8, "l={l}");
        }
    }

    #[test]
    fn unitarity_on_real_axis() {
        let v = RadialPotential::<f64>::from_fn(2.2, 2000, |r| -2.0 * (-0.8 * r * r).exp()).unwrap();
        for e in [0.05, 0.4, 1.3] {
            let sm = SiteMatrices::from_potential(&v, 5, C::new(e, 0.0)).unwrap();
            let k = (2.0 * e).sqrt();
            for l in 0..=5 {
                let s = C::new(1.0, 0.0) - C::new(0.0, 2.0 * k) * sm.t_l(l);
                assert!((s.norm() - 1.0).abs() < 1e-8, "e={e} l={l} |S|={}", s.norm());
            }
        }
    }

    #[test]
    fn t_is_invariant_under_solution_rescaling() {
        let v = RadialPotential::<f64>::square_well(-0.7, 2.3, 1200).unwrap();
        let e = C::new(0.45, 0.01);
        let sols: Vec<_> = (0..=3).map(|l| solve_radial_regular(&v, l, e).unwrap()).collect();
        let (e1, s1) = wronskian_matrices(&sols, v.rb()).unwrap();
        let t1 = t_matrix(&e1, &s1, e).unwrap();
        let scaled: Vec<_> = sols.iter().map(|s| s.scaled(C::new(-3.0, 7.5))).collect();
        let (e2, s2) = wronskian_matrices(&scaled, v.rb()).unwrap();
        let t2 = t_matrix(&e2, &s2, e).unwrap();
        assert!(t2.sub(&t1).unwrap().max_abs() < 1e-14 * t1.max_abs());
    }

    #[test]
    fn numerov_is_fourth_order() {
        // soft Coulomb-like potential, step halving twice
        let pot = |r: f64| -2.0 / (r * r + 0.25).sqrt();
        let e = C::new(0.35, 0.0);
        let t_at = |n: usize| {
            let v = RadialPotential::<f64>::from_fn(2.0, n, pot).unwrap();
            SiteMatrices::from_potential(&v, 2, e).unwrap()
        };
        let (a, b, c) = (t_at(100), t_at(200), t_at(400));
        for l in 0..=2 {
            let ratio = (a.t_l(l) - b.t_l(l)).norm() / (b.t_l(l) - c.t_l(l)).norm();
            assert!((ratio - 16.0).abs() < 0.2 * 16.0, "l={l} ratio={ratio}");
        }
    }

    #[test]
    fn singular_e_reported() {
        let e = DenseMatrix::<f64>::zeros(4, 4);
        let s = DenseMatrix::<f64>::identity(4);
        assert!(matches!(t_matrix(&e, &s, C::new(0.1, 0.0)), Err(MsError::Singular { .. })));
    }

    #[test]
    fn diagonal_t_from_diagonal_e_s() {
        let e = DenseMatrix::from_diagonal(&[C::new(2.0, 1.0), C::new(-1.0, 0.5)]);
        let s = DenseMatrix::from_diagonal(&[C::new(0.5, 0.0), C::new(0.0, 3.0)]);
        let t = t_matrix(&e, &s, C::new(0.2, 0.0)).unwrap();
        assert!(rel(t[(0, 0)], -s[(0, 0)] / e[(0, 0)]) < 1e-15);
        assert!(rel(t[(1, 1)], -s[(1, 1)] / e[(1, 1)]) < 1e-15);
        assert_eq!(t[(0, 1)], C::new(0.0, 0.0));
    }

    #[test]
    fn anisotropy_is_symmetric_deterministic_and_enveloped() {
        let v = RadialPotential::<f64>::square_well(-1.0, 2.5, 800).unwrap();
        let sm = SiteMatrices::from_potential(&v, 3, C::new(0.5, 0.0)).unwrap();
        let base = &sm.t_mat;
        assert_eq!(synthetic_anisotropic_t(base, 0.0, 0.5, 1).unwrap(), *base);
        let a = synthetic_anisotropic_t(base, 0.3, 0.5, 42).unwrap();
        assert_eq!(a, synthetic_anisotropic_t(base, 0.3, 0.5, 42).unwrap());
        assert_eq!(a, a.transpose());
        // mean ratio |Δ| / envelope ≈ 1 over many seeds
        let (p, q) = (1usize, 9usize); // l = 1 and l = 3
        let env = 0.3 * (-0.5f64 * 2.0).exp() * (base[(p, p)].norm() * base[(q, q)].norm()).sqrt();
        let n = 4000;
        let mean: f64 = (0..n)
            .map(|s| synthetic_anisotropic_t(base, 0.3, 0.5, s as u64).unwrap()[(p, q)].norm() / env)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.03, "mean={mean}");
    }

    #[test]
    fn potential_file_parsing() {
        let mut text = String::from("npts 10 rb 2.0 unit hartree-bohr\n");
        for k in 1..=10 {
            text.push_str(&format!("{} {}\n", 0.2 * k as f64, -0.5));
        }
        let p = parse_potential::<f64>(&text).unwrap();
        assert_eq!(p, RadialPotential::square_well(-0.5, 2.0, 10).unwrap());
        let bad = text.replace("0.6000000000000001 -0.5", "0.65 -0.5");
        assert!(parse_potential::<f64>(&bad).is_err());
        assert!(parse_potential::<f64>("npts 2 rb 1 unit rydberg\n").is_err());
    }

    #[test]
    fn hankel_matched_solution_free_case() {
        let v = RadialPotential::<f64>::zero(2.0, 1000).unwrap();
        let e = C::new(0.6, 0.01);
        let k = (e * 2.0).sqrt();
        let sol = solve_radial_irregular_hankel(&v, 2, e).unwrap();
        let r = v.radius(600);
        let h = sph_hankel_plus_upto::<f64>(2, k * r).unwrap()[2];
        assert!(rel(sol.value(599), -C::new(0.0, 1.0) * k * h) < 1e-7);
    }

    #[test]
    fn tabulated_preset_reproduces_square_well() {
        let well = PotentialPreset::SquareWell { v0: -0.6, rb: 2.2 };
        let v = well.build::<f64>(800).unwrap();
        let tab = PotentialPreset::tabulate(&v);
        assert!((tab.rb() - 2.2).abs() < 1e-12);
        let w = tab.build::<f64>(17).unwrap();
        assert_eq!(w.npts(), 800);
        let e = C::new(0.4, 0.0);
        let a = SiteMatrices::from_potential(&v, 3, e).unwrap();
        let b = SiteMatrices::from_potential(&w, 3, e).unwrap();
        assert!(a.t_mat.sub(&b.t_mat).unwrap().max_abs() < 1e-13);
        assert!(PotentialPreset::Tabulated { samples: vec![[0.1, 0.0]; 3] }.build::<f64>(0).is_err());
    }
}
