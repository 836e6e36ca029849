//! CSV artifacts of a run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use mfg_newton::diagnostics::HISTORY_HEADER;
use mfg_newton::hamiltonian::write_hessian_sweep_csv;

use crate::config::RunConfig;
use crate::experiments::{Job, RunOutcome};
use crate::CliError;

pub const SUMMARY_HEADER: &str =
    "run,experiment,method,epsilon,nx,nt,iterations,q,c,fit_points,final_residual,metric,metric_value,status,error_class";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sci(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn summary_row(cfg: &RunConfig, job: &Job, out: &RunOutcome) -> String {
    let (metric, value) = match out.metric {
        Some((name, v)) => (name.to_string(), format!("{v:e}")),
        None => (String::new(), String::new()),
    };
    [
        job.id(),
        cfg.experiment.name().to_string(),
        job.method().to_string(),
        opt(job.epsilon()),
        out.nx.to_string(),
        out.nt.to_string(),
        opt(out.iterations),
        opt(out.fit.map(|f| f.q)),
        sci(out.fit.map(|f| f.c())),
        opt(out.fit.map(|f| f.points)),
        sci(out.final_residual),
        metric,
        value,
        if out.error.is_some() { "error" } else { "ok" }.to_string(),
        out.error.as_ref().map(|e| e.class().to_string()).unwrap_or_default(),
    ]
    .join(",")
}

pub fn write_all(cfg: &RunConfig, jobs: &[Job], outcomes: &[RunOutcome]) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    let core = |e: mfg_newton::Error| CliError::Io(e.to_string());

    let mut summary = create(dir, "summary.csv")?;
    writeln!(summary, "{SUMMARY_HEADER}").map_err(io)?;
    for (job, out) in jobs.iter().zip(outcomes) {
        writeln!(summary, "{}", summary_row(cfg, job, out)).map_err(io)?;
    }
    summary.flush().map_err(io)?;

    let mut history = create(dir, "history.csv")?;
    writeln!(history, "{HISTORY_HEADER}").map_err(io)?;
    for (job, out) in jobs.iter().zip(outcomes) {
        if out.history.is_empty() {
            continue;
        }
        writeln!(history, "# run={}", job.id()).map_err(io)?;
        for rec in &out.history {
            writeln!(history, "{}", rec.csv_row()).map_err(io)?;
        }
        if let Some(fit) = &out.fit {
            writeln!(history, "{}", fit.csv_comment()).map_err(io)?;
        }
    }
    history.flush().map_err(io)?;

    for (job, out) in jobs.iter().zip(outcomes) {
        if let Some(state) = &out.final_state {
            let mut w = create(dir, &format!("fields_u_{}.csv", job.id()))?;
            state.u.write_csv(&mut w).map_err(core)?;
            w.flush().map_err(io)?;
            let mut w = create(dir, &format!("fields_m_{}.csv", job.id()))?;
            state.m.write_csv(&mut w).map_err(core)?;
            w.flush().map_err(io)?;
        }
    }

    let rows: Vec<_> = outcomes.iter().flat_map(|o| o.sweep.iter().copied()).collect();
    if !rows.is_empty() {
        let mut w = create(dir, "hessian_sweep.csv")?;
        write_hessian_sweep_csv(&rows, &mut w).map_err(core)?;
        w.flush().map_err(io)?;
    }
    Ok(())
}
