//! `bench`: timing and multiplication counts per mode at the first grid
//! energy, against the cost model.

use std::io::Write;

use mskit::angmom::GauntTable;
use mskit::opcount::{measure_nop, measured_c_s, predict_counted, predict_nop, CostMode, CostModel, Task};
use mskit::partitioned_solver::SolverMode;

use crate::config::Run;
use crate::output::OutDir;
use crate::solve::solve_task;
use crate::{CliError, Status};

struct Row {
    task: &'static str,
    mode: SolverMode,
    wall_ms: f64,
    nop_measured: u64,
    nop_predicted: f64,
    c_s_measured: Option<f64>,
    ratio_measured: f64,
    ratio_predicted: f64,
}

/// Standard first, then the configured modes, then the `p` sweep.
fn entries(run: &Run) -> Vec<SolverMode> {
    let mut out = vec![SolverMode::StandardDense];
    let sweep = run.config.p_sweep.iter().map(|&p| SolverMode::OursSparseB { p });
    for m in run.modes.iter().copied().chain(sweep) {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

fn predicted_ratio(model: &CostModel, task: Task, mode: SolverMode) -> Result<f64, mskit::MsError> {
    let m = CostModel {
        p: mode.p(),
        ..model.clone()
    };
    Ok(predict_nop(&m, task, mode.into())? / predict_nop(&m, task, CostMode::Standard)?)
}

pub fn run(run: &Run, out: &OutDir) -> Result<Status, CliError> {
    let e = run.grid[0];
    let table = GauntTable::<f64>::new(run.system.l_max).map_err(|err| CliError::Config(err.to_string()))?;
    let (sys, _) = run
        .system
        .at_energy(e, &table)
        .map_err(|err| CliError::Numerical(format!("setup at E = {e}: {err}")))?;
    let base = CostModel::from_scheme(sys.scheme(), SolverMode::StandardDense, run.config.c_s)
        .map_err(|err| CliError::Config(err.to_string()))?;
    let mut rows = Vec::new();
    let mut failed = 0;
    for (task_name, task) in [("tau_col", Task::TauCol { site0: run.config.site0 }), ("tau_diag", Task::TauDiag)] {
        let mut standard_nop = None;
        for mode in entries(run) {
            let mut best: Option<(f64, u64, Option<f64>)> = None;
            for _ in 0..run.config.repeats {
                match solve_task(&sys, task, mode) {
                    Ok(r) => {
                        let wall = best.map_or(r.wall_ms, |b| b.0.min(r.wall_ms));
                        best = Some((wall, measure_nop(&r), measured_c_s(&r)));
                    }
                    Err(err) => {
                        eprintln!("{task_name} {}: {err}", mode.label());
                        failed += 1;
                        break;
                    }
                }
            }
            let Some((wall_ms, nop, c_s)) = best else { continue };
            if mode == SolverMode::StandardDense {
                standard_nop = Some(nop);
            }
            let counted = CostModel::from_scheme(sys.scheme(), mode, 1.0)
                .and_then(|m| predict_counted(&m, task, mode.into()))
                .unwrap_or(f64::NAN);
            rows.push(Row {
                task: task_name,
                mode,
                wall_ms,
                nop_measured: nop,
                nop_predicted: counted,
                c_s_measured: c_s,
                ratio_measured: standard_nop.map_or(f64::NAN, |s| nop as f64 / s as f64),
                ratio_predicted: predicted_ratio(&base, task, mode).unwrap_or(f64::NAN),
            });
        }
    }

    out.write_text("bench.csv", |w, c| {
        writeln!(w, "{c}")?;
        writeln!(
            w,
            "task,mode,p,wall_ms,nop_measured,nop_predicted,nop_rel_deviation,c_s_measured,ratio_measured,ratio_predicted"
        )?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{:.3},{},{:.0},{:.4},{},{:.6},{:.6}",
                r.task,
                r.mode.label(),
                r.mode.p(),
                r.wall_ms,
                r.nop_measured,
                r.nop_predicted,
                (r.nop_measured as f64 - r.nop_predicted) / r.nop_predicted,
                r.c_s_measured.map_or(String::new(), |v| format!("{v:.3}")),
                r.ratio_measured,
                r.ratio_predicted
            )?;
        }
        Ok(())
    })?;

    println!(
        "E = {:.4}{:+.4}i Ha, {} sites, l_max {}, c_s {} for predicted ratios",
        e.re,
        e.im,
        sys.scheme().n_sites(),
        run.system.l_max,
        run.config.c_s
    );
    println!(
        "{:<9} {:<22} {:>10} {:>14} {:>14} {:>8} {:>9} {:>9}",
        "task", "mode", "wall_ms", "nop_measured", "nop_predicted", "c_s", "ratio", "ratio_pred"
    );
    for r in &rows {
        println!(
            "{:<9} {:<22} {:>10.3} {:>14} {:>14.0} {:>8} {:>8.2}% {:>8.2}%",
            r.task,
            r.mode.label(),
            r.wall_ms,
            r.nop_measured,
            r.nop_predicted,
            r.c_s_measured.map_or("-".into(), |v| format!("{v:.2}")),
            100.0 * r.ratio_measured,
            100.0 * r.ratio_predicted
        );
    }
    println!("outputs in {}", out.path.display());
    Ok(if failed == 0 { Status::Complete } else { Status::Partial })
}
