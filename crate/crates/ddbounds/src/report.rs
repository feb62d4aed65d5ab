//! CSV and JSON output of run reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::driver::{BoundsRow, GoalRow, HSweepRow, RunReport};
use crate::formats::{read_json, write_json};
use crate::Error;

pub const ITERATION_HEADER: &str = "iter,theta,theta_discr,rho,rho_discr,rho_alg,rho_bis,alpha";
pub const GOAL_HEADER: &str = "mesh,IH,kappa,bpinf,bminf,bpsup4,bmsup4,Iexm,Iexp,width,precision";
pub const HSWEEP_HEADER: &str = "n,h,dofs,iterations,true_error,theta,theta_discr,rho,rho_bis,theta_seq,rho_seq";
pub const ETA_HEADER: &str = "cycle,subdomain,eta,eta_adjoint";

pub fn iteration_csv(rows: &[BoundsRow]) -> String {
    let with_true = rows.iter().any(|r| r.true_error.is_some());
    let mut out = String::from(ITERATION_HEADER);
    if with_true {
        out.push_str(",true_error");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.iter, r.theta, r.theta_discr, r.rho, r.rho_discr, r.rho_alg, r.rho_bis, r.alpha
        );
        if with_true {
            let _ = write!(out, ",{:e}", r.true_error.unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}

pub fn goal_csv(rows: &[GoalRow]) -> String {
    let mut out = format!("{GOAL_HEADER}\n");
    for g in rows {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            g.mesh, g.i_h, g.kappa, g.bpinf, g.bminf, g.bpsup4, g.bmsup4, g.iexm, g.iexp, g.width, g.precision
        );
    }
    out
}

pub fn hsweep_csv(rows: &[HSweepRow]) -> String {
    let mut out = format!("{HSWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:e},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.n, r.h, r.dofs, r.iterations, r.true_error, r.theta, r.theta_discr, r.rho, r.rho_bis, r.theta_seq, r.rho_seq
        );
    }
    out
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, Error> {
    fs::write(&path, text).map_err(|source| Error::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Writes every CSV table and `summary.json` into `dir`; returns the paths.
pub fn emit_reports(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, Error> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    let all: Vec<BoundsRow> = report.cycles.iter().flat_map(|c| c.forward.iter().copied()).collect();
    written.push(write(dir.join("iterations.csv"), &iteration_csv(&all))?);
    for c in &report.cycles {
        written.push(write(dir.join(format!("iterations_c{}.csv", c.cycle)), &iteration_csv(&c.forward))?);
        if !c.adjoint.is_empty() {
            written.push(write(dir.join(format!("iterations_adjoint_c{}.csv", c.cycle)), &iteration_csv(&c.adjoint))?);
        }
    }
    let goals: Vec<GoalRow> = report.cycles.iter().filter_map(|c| c.goal).collect();
    written.push(write(dir.join("goal.csv"), &goal_csv(&goals))?);
    written.push(write(dir.join("hsweep.csv"), &hsweep_csv(&report.h_sweep))?);
    let mut eta = format!("{ETA_HEADER}\n");
    for c in &report.cycles {
        for (s, e) in c.eta.iter().enumerate() {
            let _ = writeln!(eta, "{},{},{:e},{:e}", c.cycle, s, e, c.eta_adjoint.get(s).copied().unwrap_or(f64::NAN));
        }
    }
    written.push(write(dir.join("eta.csv"), &eta)?);
    let summary = dir.join("summary.json");
    write_json(&summary, report)?;
    written.push(summary);
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<RunReport, Error> {
    read_json(path)
}
