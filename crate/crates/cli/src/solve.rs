//! `solve`: τ over the grid for every configured mode, checked against the
//! standard dense solve at each point.

use std::io::Write;

use mskit::angmom::GauntTable;
use mskit::dos::PointFailure;
use mskit::linalg::DenseMatrix;
use mskit::opcount::{measure_nop, predict_counted, CostModel, Task};
use mskit::partitioned_solver::{error_metrics, ScatteringSystem, SolveOptions, SolveReport, SolverMode, TauResult};
use num_complex::Complex;
use serde::Serialize;

use crate::config::{Run, TaskConfig};
use crate::output::OutDir;
use crate::{par_map, CliError, Status};

/// Site blocks written to the CSV files, tagged with their site index.
type Blocks = Vec<(usize, DenseMatrix<f64>)>;

struct ModeOutcome {
    report: SolveReport,
    blocks: Blocks,
}

struct PointOutcome {
    modes: Vec<Option<ModeOutcome>>,
    t_blocks: Blocks,
    failures: Vec<PointFailure>,
}

fn failure(e: Complex<f64>, mode: &str, msg: impl ToString) -> PointFailure {
    PointFailure {
        energy: [e.re, e.im],
        mode: mode.to_string(),
        message: msg.to_string(),
    }
}

pub fn task_of(run: &Run) -> Task {
    match run.config.task {
        TaskConfig::Column => Task::TauCol { site0: run.config.site0 },
        TaskConfig::Diagonal => Task::TauDiag,
    }
}

pub fn solve_task(
    sys: &ScatteringSystem<f64>,
    task: Task,
    mode: SolverMode,
) -> mskit::Result<TauResult<f64>> {
    let opts = SolveOptions::default();
    match task {
        Task::TauCol { site0 } => sys.tau_col(site0, mode, &opts),
        Task::TauDiag => sys.tau_site_diagonal(mode, &opts),
    }
}

fn reported_sites(run: &Run) -> Vec<usize> {
    match run.config.task {
        TaskConfig::Column => vec![run.config.site0],
        TaskConfig::Diagonal => (0..run.system.cluster.n_sites()).collect(),
    }
}

fn solve_point(run: &Run, table: &GauntTable<f64>, e: Complex<f64>) -> PointOutcome {
    let none = || run.modes.iter().map(|_| None).collect();
    let (sys, _) = match run.system.at_energy(e, table) {
        Ok(v) => v,
        Err(err) => {
            return PointOutcome {
                modes: none(),
                t_blocks: Vec::new(),
                failures: vec![failure(e, "all", err)],
            }
        }
    };
    let task = task_of(run);
    let sites = reported_sites(run);
    let t_blocks = sites.iter().map(|&i| (i, sys.t_sites()[i].clone())).collect();
    let mut failures = Vec::new();
    let reference = match solve_task(&sys, task, SolverMode::StandardDense) {
        Ok(r) => Some(r),
        Err(err) => {
            failures.push(failure(e, "standard (reference)", err));
            None
        }
    };
    let modes = run
        .modes
        .iter()
        .map(|&mode| {
            let res = match (mode, &reference) {
                (SolverMode::StandardDense, Some(r)) => Ok(r.clone()),
                _ => solve_task(&sys, task, mode),
            };
            let res = match res {
                Ok(r) => r,
                Err(err) => {
                    failures.push(failure(e, &mode.label(), err));
                    return None;
                }
            };
            let metrics = reference.as_ref().and_then(|r| error_metrics(&res, r).ok());
            let nop_predicted = CostModel::from_scheme(sys.scheme(), mode, 1.0)
                .and_then(|m| predict_counted(&m, task, mode.into()))
                .unwrap_or(f64::NAN);
            let report = SolveReport {
                mode: mode.label(),
                l_max: run.system.l_max,
                l_pt_map: sys.scheme().l_pt_map().to_vec(),
                p: mode.p(),
                energy: [e.re, e.im],
                max_abs: metrics.map_or(f64::NAN, |m| m.max_abs),
                frobenius_rel: metrics.map_or(f64::NAN, |m| m.frobenius_rel),
                nop_predicted,
                nop_measured: measure_nop(&res),
                wall_ms: res.wall_ms,
                rcond: res.rcond,
            };
            let blocks = sites.iter().map(|&i| (i, res.site_block(i))).collect();
            Some(ModeOutcome { report, blocks })
        })
        .collect();
    PointOutcome {
        modes,
        t_blocks,
        failures,
    }
}

#[derive(Serialize)]
struct ModeReport<'a> {
    system: &'a str,
    n_sites: usize,
    task: TaskConfig,
    site0: usize,
    points: Vec<&'a SolveReport>,
    failures: Vec<&'a PointFailure>,
}

fn write_blocks(w: &mut impl Write, rows: &[(Complex<f64>, &Blocks)]) -> std::io::Result<()> {
    writeln!(w, "energy_re_ha,energy_im_ha,site,row,col,re,im")?;
    for (e, blocks) in rows {
        for (site, m) in blocks.iter() {
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    let z = m[(r, c)];
                    writeln!(w, "{:e},{:e},{site},{r},{c},{:e},{:e}", e.re, e.im, z.re, z.im)?;
                }
            }
        }
    }
    Ok(())
}

pub fn run(run: &Run, out: &OutDir, threads: usize) -> Result<Status, CliError> {
    let table = GauntTable::<f64>::new(run.system.l_max).map_err(|e| CliError::Config(e.to_string()))?;
    let points = par_map(threads, &run.grid, |&e| solve_point(run, &table, e))?;
    let failures: Vec<&PointFailure> = points.iter().flat_map(|p| &p.failures).collect();
    for f in &failures {
        eprintln!("E = {:+.6}{:+.6}i, {}: {}", f.energy[0], f.energy[1], f.mode, f.message);
    }

    let t_rows: Vec<(Complex<f64>, &Blocks)> = run
        .grid
        .iter()
        .zip(&points)
        .filter(|(_, p)| !p.t_blocks.is_empty())
        .map(|(e, p)| (*e, &p.t_blocks))
        .collect();
    out.write_text("t_sites.csv", |w, c| {
        writeln!(w, "{c}")?;
        write_blocks(w, &t_rows)
    })?;

    println!("{:<22} {:>7} {:>14} {:>14} {:>14}", "mode", "points", "median_frob", "nop_measured", "nop_predicted");
    for (k, mode) in run.modes.iter().enumerate() {
        let label = mode.label();
        let done: Vec<(Complex<f64>, &ModeOutcome)> = run
            .grid
            .iter()
            .zip(&points)
            .filter_map(|(e, p)| p.modes[k].as_ref().map(|m| (*e, m)))
            .collect();
        let report = ModeReport {
            system: &run.system.name,
            n_sites: run.system.cluster.n_sites(),
            task: run.config.task,
            site0: run.config.site0,
            points: done.iter().map(|(_, m)| &m.report).collect(),
            failures: failures.iter().copied().filter(|f| f.mode == label || f.mode == "all").collect(),
        };
        out.write_json(&format!("report_{label}.json"), &report)?;
        let rows: Vec<(Complex<f64>, &Blocks)> = done.iter().map(|(e, m)| (*e, &m.blocks)).collect();
        out.write_text(&format!("tau_{label}.csv"), |w, c| {
            writeln!(w, "{c}")?;
            write_blocks(w, &rows)
        })?;
        let mut frob: Vec<f64> = done.iter().map(|(_, m)| m.report.frobenius_rel).collect();
        frob.sort_by(f64::total_cmp);
        let median = frob.get(frob.len() / 2).copied().unwrap_or(f64::NAN);
        let (nm, np) = done.first().map_or((0, f64::NAN), |(_, m)| (m.report.nop_measured, m.report.nop_predicted));
        println!("{label:<22} {:>7} {median:>14.3e} {nm:>14} {np:>14.0}", done.len());
    }

    out.write_text("deviations.csv", |w, c| {
        writeln!(w, "{c}")?;
        writeln!(w, "energy_re_ha,energy_im_ha,comparison,max_abs,frobenius_rel")?;
        for (e, p) in run.grid.iter().zip(&points) {
            for (mode, m) in run.modes.iter().zip(&p.modes) {
                if *mode == SolverMode::StandardDense {
                    continue;
                }
                if let Some(m) = m {
                    writeln!(
                        w,
                        "{:e},{:e},{}-vs-standard,{:e},{:e}",
                        e.re,
                        e.im,
                        mode.label(),
                        m.report.max_abs,
                        m.report.frobenius_rel
                    )?;
                }
            }
        }
        Ok(())
    })?;
    println!("outputs in {}", out.path.display());
    Ok(if failures.is_empty() {
        Status::Complete
    } else {
        Status::Partial
    })
}
