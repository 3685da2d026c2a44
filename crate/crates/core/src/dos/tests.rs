use super::*;
use crate::angmom::{sph_bessel_j_with_deriv, sph_bessel_y_upto, sph_hankel_plus_with_deriv};
use crate::cluster::{build_shells, Species};
use crate::single_site::{solve_radial_regular, PotentialPreset, RadialPotential, DEFAULT_MESH_POINTS};
use crate::systems::{fcc_square_well, free_site, SpeciesModel};

type C = Complex<f64>;

fn simpson_fn(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn quadrature_exact_for_low_polynomials() {
    let h = 0.01;
    let f: Vec<C> = (0..=101).map(|k| C::new((k as f64 * h).powi(2), 0.0)).collect();
    for upper in [1.01, 1.0, 0.555, 0.013, 0.004] {
        let got = integrate_uniform(&f, h, upper).unwrap().re;
        assert!((got - upper.powi(3) / 3.0).abs() < 1e-14, "{upper}: {got}");
    }
    assert!(integrate_uniform(&f, h, 1.02).is_err());
}

#[test]
fn quadrature_step_halving_order() {
    let g = |x: f64| (3.0 * x).sin() * x.exp();
    let exact = {
        // ∫ e^x sin 3x = e^x (sin 3x − 3 cos 3x)/10
        let p = |x: f64| x.exp() * ((3.0 * x).sin() - 3.0 * (3.0 * x).cos()) / 10.0;
        p(2.0) - p(0.0)
    };
    let err = |n: usize| {
        let h = 2.0 / n as f64;
        let f: Vec<C> = (0..=n).map(|k| C::new(g(k as f64 * h), 0.0)).collect();
        (integrate_uniform(&f, h, 2.0).unwrap().re - exact).abs()
    };
    let ratio = err(100) / err(200);
    assert!(ratio > 14.0 && ratio < 18.0, "{ratio}");
}

#[test]
fn free_rho_matches_bessel_integral() {
    let rb = 2.3;
    let v = RadialPotential::<f64>::zero(rb, DEFAULT_MESH_POINTS).unwrap();
    let e = C::new(0.7, 0.0);
    let k = (1.4f64).sqrt();
    for l in 0..4 {
        let sol = solve_radial_regular(&v, l, e).unwrap();
        let (j, _) = sph_bessel_j_with_deriv(l + 1, C::new(k * rb, 0.0)).unwrap();
        let c = sol.boundary().0 / j[l];
        let r_in = 1.9;
        let x = k * r_in;
        let (jj, _) = sph_bessel_j_with_deriv(l + 1, C::new(x, 0.0)).unwrap();
        let jm = if l == 0 { C::new(x.cos() / x, 0.0) } else { jj[l - 1] };
        let oracle = c * c * (jj[l] * jj[l] - jm * jj[l + 1]) * (r_in.powi(3) / 2.0);
        let got = radial_overlap(&sol, &sol, r_in).unwrap();
        assert!((got - oracle).norm() / oracle.norm() < 1e-7, "l={l}: {got} vs {oracle}");
        assert!(radial_overlap(&sol, &sol, 0.0).unwrap().norm() == 0.0);
    }
}

#[test]
fn free_site_dos_matches_analytic_sphere() {
    let rb = 2.4;
    let sys = free_site(rb, 6).unwrap();
    for e in [0.05, 0.3, 0.9] {
        let sites = sys.scatterers(C::new(e, 0.0)).unwrap();
        let data = SiteDosData::from_scatterer(&sites[0]).unwrap();
        let tau = DenseMatrix::zeros(49, 49);
        let n = local_dos(&tau, &data).unwrap();
        assert!(n.valid);
        let truncated = free_sphere_dos(e, rb, 6).unwrap();
        assert!((n.n - truncated).abs() / truncated < 1e-6, "{e}: {} vs {truncated}", n.n);
        let complete = free_sphere_dos_complete(e, rb);
        assert!((n.n - complete).abs() / complete < 1e-3);
        // literal form divides by S = 0
        assert!(!local_dos_literal(&tau, &data).unwrap().valid);
    }
}

/// Inscribed-sphere DOS of an isolated square well from closed-form
/// Bessel solutions.
fn square_well_oracle(e: f64, v0: f64, rb: f64, r_in: f64, l_max: usize) -> f64 {
    let kappa = C::new((2.0 * e).sqrt(), 0.0);
    let q = (2.0 * (e - v0)).sqrt();
    let mik = C::new(0.0, -1.0) * kappa;
    let mut bracket = C::new(0.0, 0.0);
    for l in 0..=l_max {
        let (h, hd) = sph_hankel_plus_with_deriv(l, kappa * rb).unwrap();
        let f = mik * h[l];
        let fd = mik * kappa * hd[l];
        let (j, jd) = sph_bessel_j_with_deriv(l, C::new(q * rb, 0.0)).unwrap();
        let y = sph_bessel_y_upto(l + 1, C::new(q * rb, 0.0)).unwrap();
        let x = q * rb;
        let yd = y[l] * (l as f64 / x) - y[l + 1];
        let (jb, jdb, yb, ydb) = (j[l], jd[l] * q, y[l], yd * q);
        let det = jb * ydb - jdb * yb;
        let a = (f * ydb - yb * fd) / det;
        let b = (jb * fd - jdb * f) / det;
        let e_l = (f * jdb - fd * jb) * (rb * rb);
        let re_int = |part: fn(C) -> f64| {
            simpson_fn(
                |r| {
                    if r == 0.0 {
                        return 0.0;
                    }
                    let z = C::new(q * r, 0.0);
                    let jv = crate::angmom::sph_bessel_j::<f64>(l, z).unwrap();
                    let yv = sph_bessel_y_upto::<f64>(l, z).unwrap()[l];
                    part(jv * (a * jv + b * yv) * (r * r))
                },
                0.0,
                r_in,
                20000,
            )
        };
        let integral = C::new(re_int(|z| z.re), re_int(|z| z.im));
        bracket -= integral / e_l * (2 * l + 1) as f64;
    }
    -2.0 / std::f64::consts::PI * bracket.im
}

#[test]
fn isolated_square_well_matches_closed_form() {
    let (v0, rb) = (-0.6, 2.0);
    let cluster = build_shells(&[[0.0; 3]], Species { id: 0, l_pt: 1, rb }).unwrap();
    let model = SpeciesModel {
        id: 0,
        potential: PotentialPreset::SquareWell { v0, rb },
        anisotropy: None,
        r_in: Some(1.7),
    };
    let sys = TestSystem::new("well", cluster, 3, vec![model], DEFAULT_MESH_POINTS).unwrap();
    for e in [0.1, 0.45, 1.2] {
        let sites = sys.scatterers(C::new(e, 0.0)).unwrap();
        let data = SiteDosData::from_scatterer(&sites[0]).unwrap();
        let tau = sites[0].matrices.t_mat.clone();
        let stable = local_dos(&tau, &data).unwrap();
        let literal = local_dos_literal(&tau, &data).unwrap();
        let oracle = square_well_oracle(e, v0, rb, 1.7, 3);
        assert!((stable.n - oracle).abs() / oracle < 1e-6, "{e}: {} vs {oracle}", stable.n);
        assert!((literal.n - oracle).abs() / oracle < 1e-6, "{e}: {} vs {oracle}", literal.n);
    }
}

#[test]
fn literal_and_stable_agree_in_a_cluster() {
    let sys = fcc_square_well();
    let sweep_s = dos_sweep(&sys, &[SolverMode::StandardDense], &[C::new(0.4, 0.01)], DosForm::Stable, &SolveOptions::default()).unwrap();
    let sweep_l = dos_sweep(&sys, &[SolverMode::StandardDense], &[C::new(0.4, 0.01)], DosForm::Literal, &SolveOptions::default()).unwrap();
    for i in 0..sys.cluster.n_sites() {
        let (a, b) = (sweep_s.curves[0].n[0][i], sweep_l.curves[0].n[0][i]);
        assert!((a - b).abs() / a.abs() < 1e-8, "site {i}: {a} vs {b}");
    }
}

#[test]
fn standard_dos_is_non_negative() {
    let sys = fcc_square_well();
    let grid = crate::systems::energy_grid(0.05, 1.2, 8, 0.01).unwrap();
    let sw = dos_sweep(&sys, &[SolverMode::StandardDense, SolverMode::OursDenseB], &grid, DosForm::Stable, &SolveOptions::default()).unwrap();
    assert!(sw.failures.is_empty());
    for row in &sw.curves[0].n {
        for &n in row {
            assert!(n >= -1e-6, "{n}");
        }
    }
    // central and surface sites differ
    assert!((sw.curves[0].n[3][0] - sw.curves[0].n[3][5]).abs() > 1e-6);
}

#[test]
fn lorentzian_broadening_conserves_weight() {
    let (v0, rb) = (-0.5, 2.0);
    let cluster = build_shells(&[[0.0; 3], [4.3, 0.0, 0.0]], Species { id: 0, l_pt: 1, rb }).unwrap();
    let model = SpeciesModel {
        id: 0,
        potential: PotentialPreset::SquareWell { v0, rb },
        anisotropy: None,
        r_in: None,
    };
    let sys = TestSystem::new("dimer", cluster, 3, vec![model], 1000).unwrap();
    let weight = |eta: f64| {
        let grid = crate::systems::energy_grid(0.2, 2.2, 201, eta).unwrap();
        let sw = dos_sweep(&sys, &[SolverMode::StandardDense], &grid, DosForm::Stable, &SolveOptions::default()).unwrap();
        let n: Vec<f64> = sw.curves[0].n.iter().map(|r| r[0]).collect();
        let de = grid[1].re - grid[0].re;
        (n.iter().sum::<f64>() - 0.5 * (n[0] + n[200])) * de
    };
    let (w1, w2) = (weight(0.01), weight(0.04));
    assert!((w1 - w2).abs() / w1 < 0.02, "{w1} vs {w2}");
}

#[test]
fn gaussian_limits() {
    let v: Vec<f64> = (0..40).map(|k| ((k as f64) * 0.3).sin() + 2.0).collect();
    assert_eq!(gaussian_broaden(&v, 0.1, 0.0).unwrap(), v);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in gaussian_broaden(&v, 0.1, 1e4).unwrap() {
        assert!((x - mean).abs() < 1e-6 * mean, "{x} vs {mean}");
    }
    let flat = gaussian_broaden(&[3.0; 25], 0.1, 0.35).unwrap();
    assert!(flat.iter().all(|x| (x - 3.0).abs() < 1e-12));
    let b = gaussian_broaden(&v, 0.1, 0.2).unwrap();
    let s0: f64 = v.iter().sum();
    let s1: f64 = b.iter().sum();
    assert!((s0 - s1).abs() / s0 < 1e-10);
    assert!(gaussian_broaden(&v, 0.1, -1.0).is_err());
}

#[test]
fn sweep_records_failures_and_writes_csv() {
    let sys = free_site(2.0, 2).unwrap();
    let grid = vec![C::new(0.0, 0.0), C::new(0.5, 0.0)];
    let sw = dos_sweep(&sys, &[SolverMode::StandardDense, SolverMode::Zhang], &grid, DosForm::Stable, &SolveOptions::default()).unwrap();
    assert_eq!(sw.failures.len(), 1);
    assert!(!sw.curves[0].valid[0][0] && sw.curves[0].valid[1][0]);
    let mut buf = Vec::new();
    sw.write_csv(&mut buf, "# test").unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "energy_eV,site_id,mode,n_states_per_eV,valid");
    assert_eq!(lines.len(), 2 + 2 * 2);
    assert!(lines[3].ends_with(",1") && lines[2].ends_with(",0"));
    let mut dev = Vec::new();
    sw.write_deviations_csv(&mut dev, "# test").unwrap();
    let text = String::from_utf8(dev).unwrap();
    assert!(text.contains("zhang-vs-standard"));
    assert!(dos_sweep(&sys, &[SolverMode::StandardDense], &[C::new(0.5, 0.0), C::new(0.4, 0.0)], DosForm::Stable, &SolveOptions::default()).is_err());
}
