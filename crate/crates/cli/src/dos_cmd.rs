//! `dos`: site-resolved local DOS for every configured mode.

use mskit::dos::{dos_sweep, DosSweep};
use mskit::partitioned_solver::{SolveOptions, SolverMode};
use serde::Serialize;

use crate::config::Run;
use crate::output::OutDir;
use crate::{par_map, CliError, Status};

#[derive(Serialize)]
struct Summary<'a> {
    system: &'a str,
    modes: Vec<String>,
    sigma_ha: f64,
    min_standard_dos_per_ha: Option<f64>,
    failures: &'a [mskit::dos::PointFailure],
}

/// Points are solved independently and merged in grid order.
fn sweep(run: &Run, threads: usize) -> Result<DosSweep, CliError> {
    let opts = SolveOptions::default();
    let parts = par_map(threads, &run.grid, |&e| {
        dos_sweep(&run.system, &run.modes, &[e], run.config.dos_form, &opts)
    })?;
    let mut merged: Option<DosSweep> = None;
    for part in parts {
        let part = part.map_err(|e| CliError::Numerical(e.to_string()))?;
        match &mut merged {
            None => merged = Some(part),
            Some(m) => {
                m.energies.extend(part.energies);
                m.failures.extend(part.failures);
                for (c, pc) in m.curves.iter_mut().zip(part.curves) {
                    c.n.extend(pc.n);
                    c.valid.extend(pc.valid);
                }
            }
        }
    }
    merged.ok_or_else(|| CliError::Config("empty energy grid".into()))
}

pub fn run(run: &Run, out: &OutDir, threads: usize) -> Result<Status, CliError> {
    let mut result = sweep(run, threads)?;
    for f in &result.failures {
        eprintln!("E = {:+.6}{:+.6}i, {}: {}", f.energy[0], f.energy[1], f.mode, f.message);
    }
    let min_standard = result
        .curves
        .iter()
        .find(|c| c.mode == SolverMode::StandardDense)
        .map(|c| {
            c.n.iter()
                .zip(&c.valid)
                .flat_map(|(n, v)| n.iter().zip(v).filter(|(_, ok)| **ok).map(|(x, _)| *x))
                .fold(f64::INFINITY, f64::min)
        });
    if run.config.sigma > 0.0 {
        if result.energies.len() < 2 {
            return Err(CliError::Config("config field `sigma`: broadening needs at least two grid points".into()));
        }
        result.broaden(run.config.sigma).map_err(|e| CliError::Config(format!("config field `sigma`: {e}")))?;
    }
    let err = |e: mskit::MsError| std::io::Error::other(e.to_string());
    out.write_text("dos.csv", |w, c| result.write_csv(w, c).map_err(err))?;
    out.write_text("dos_deviations.csv", |w, c| result.write_deviations_csv(w, c).map_err(err))?;
    out.write_json(
        "dos_summary.json",
        &Summary {
            system: &run.system.name,
            modes: run.modes.iter().map(|m| m.label()).collect(),
            sigma_ha: run.config.sigma,
            min_standard_dos_per_ha: min_standard.filter(|v| v.is_finite()),
            failures: &result.failures,
        },
    )?;
    println!(
        "{} modes x {} energies x {} sites; outputs in {}",
        run.modes.len(),
        result.energies.len(),
        run.system.cluster.n_sites(),
        out.path.display()
    );
    Ok(if result.failures.is_empty() {
        Status::Complete
    } else {
        Status::Partial
    })
}
