use ddbounds::benchmarks::square_problem;
use ddbounds::driver::{run_estimate, Outcome, RunOptions, RunReport, StopPolicy};
use ddbounds::report::{emit_reports, load_report, GOAL_HEADER, HSWEEP_HEADER, ITERATION_HEADER};

fn empty_report() -> RunReport {
    RunReport {
        problem: "none".into(),
        config_hash: "0".into(),
        options: RunOptions::default(),
        outcome: Outcome::Completed,
        cycles: Vec::new(),
        h_sweep: Vec::new(),
    }
}

#[test]
fn empty_report_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let written = emit_reports(&empty_report(), dir.path()).unwrap();
    assert!(written.iter().all(|p| p.exists()));
    let read = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap();
    assert_eq!(read("iterations.csv"), format!("{ITERATION_HEADER}\n"));
    assert_eq!(read("goal.csv"), format!("{GOAL_HEADER}\n"));
    assert_eq!(read("hsweep.csv"), format!("{HSWEEP_HEADER}\n"));
    assert_eq!(load_report(&dir.path().join("summary.json")).unwrap(), empty_report());
}

#[test]
fn iteration_table_has_one_row_per_estimate() {
    let problem = square_problem(6, (2, 2), 1.0).unwrap();
    let options = RunOptions { stop: StopPolicy::Tolerance(1e-8), estimate_every: true, patch_refine: 2, ..RunOptions::default() };
    let report = run_estimate(&problem, &options).unwrap();
    let cycle = &report.cycles[0];
    assert_eq!(cycle.forward.len(), cycle.iterations + 1);

    let dir = tempfile::tempdir().unwrap();
    emit_reports(&report, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("iterations_c0.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), format!("{ITERATION_HEADER},true_error"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), cycle.forward.len());
    for (row, b) in rows.iter().zip(&cycle.forward) {
        assert_eq!(row[0] as usize, b.iter);
        assert_eq!(row[1], b.theta);
        assert_eq!(row[7], b.alpha);
        assert_eq!(row[8], b.true_error.unwrap());
    }
    let eta = std::fs::read_to_string(dir.path().join("eta.csv")).unwrap();
    assert_eq!(eta.lines().count(), 1 + 4);
    assert_eq!(load_report(&dir.path().join("summary.json")).unwrap(), report);
}
