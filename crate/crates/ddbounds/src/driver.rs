//! Solve/estimate orchestration: stopping policies, the h-sweep on the
//! square benchmark and the adaptive refine-and-recycle loop.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use ddbounds_core::bounds::{bounds_record, goal_bounds, ihh2_bound, BoundsRecord, GoalRecord, MeanStressExtractor};
use ddbounds_core::ddsolver::{
    project_directions, solve_augmented, Control, IterationFields, SolveTrace, SolverConfig, Termination,
};
use ddbounds_core::fem::{
    assemble_load, assemble_stiffness, dirichlet_conditions, solve_dirichlet_direct, true_error_sq,
    DEFAULT_QUADRATURE_DEGREE, ERROR_QUADRATURE_DEGREE,
};
use ddbounds_core::mesh::{partition_regular, refine_by_splitting, Partition};
use ddbounds_core::recovery::{recover, AdmissibleRecovery, RecoverySetup};
use ddbounds_core::substructure::{LoadCase, Substructured};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::benchmarks::{square_problem, Problem};
use crate::formats::ApproachFile;
use crate::Error;

/// When the iterative solver is stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum StopPolicy {
    /// Relative `α` tolerance of the solver.
    Tolerance(f64),
    /// `α < ρ_discr` for every right-hand side.
    Envelope,
    /// `α < ρ_discr / 10` for every right-hand side.
    Tenth,
}

impl StopPolicy {
    fn threshold(&self, rho_discr: f64) -> Option<f64> {
        match self {
            StopPolicy::Tolerance(_) => None,
            StopPolicy::Envelope => Some(rho_discr),
            StopPolicy::Tenth => Some(rho_discr / 10.0),
        }
    }
}

/// Settings shared by every solve-and-estimate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub approach: ApproachFile,
    pub stop: StopPolicy,
    pub patch_refine: usize,
    pub max_iterations: usize,
    /// Estimate at every iteration instead of iteration 1 and the stop.
    pub estimate_every: bool,
    /// Random interface start instead of the zero start.
    #[serde(default)]
    pub initial_guess: Option<InitialGuess>,
}

/// Uniform random interface unknowns in `[−amplitude, amplitude]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    pub seed: u64,
    pub amplitude: f64,
}

/// Start vectors for `n` right-hand sides according to `options`.
pub fn initial_guesses(sub: &Substructured, options: &RunOptions, n: usize) -> Vec<Option<Vec<f64>>> {
    let Some(g) = options.initial_guess else {
        return vec![None; n];
    };
    let dim = match options.approach {
        ApproachFile::Bdd => sub.algebra.n_interface(),
        ApproachFile::Feti => sub.algebra.n_connections(),
    };
    let mut rng = StdRng::seed_from_u64(g.seed);
    (0..n).map(|_| Some((0..dim).map(|_| rng.random_range(-1.0..=1.0) * g.amplitude).collect())).collect()
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            approach: ApproachFile::Bdd,
            stop: StopPolicy::Envelope,
            patch_refine: 4,
            max_iterations: 500,
            estimate_every: false,
            initial_guess: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub iter: usize,
    pub theta: f64,
    pub theta_discr: f64,
    pub rho: f64,
    pub rho_discr: f64,
    pub rho_alg: f64,
    pub rho_bis: f64,
    pub alpha: f64,
    pub true_error: Option<f64>,
    pub sa_residual: f64,
}

impl BoundsRow {
    fn new(b: &BoundsRecord, sa_residual: f64) -> Self {
        Self {
            iter: b.iteration,
            theta: b.theta,
            theta_discr: b.theta_discr,
            rho: b.rho,
            rho_discr: b.rho_discr,
            rho_alg: b.rho_alg,
            rho_bis: b.rho_bis,
            alpha: b.alpha,
            true_error: b.true_error,
            sa_residual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRow {
    pub mesh: usize,
    pub i_h: f64,
    pub kappa: f64,
    pub bpinf: f64,
    pub bminf: f64,
    pub bpsup4: f64,
    pub bmsup4: f64,
    pub iexm: f64,
    pub iexp: f64,
    pub width: f64,
    pub precision: f64,
    /// Interval endpoints with both `β_inf` dropped.
    pub coarse_lower: f64,
    pub coarse_upper: f64,
    pub correction: f64,
}

impl GoalRow {
    fn new(mesh: usize, g: &GoalRecord) -> Self {
        let (coarse_lower, coarse_upper) = g.coarse_interval();
        Self {
            mesh,
            i_h: g.i_h,
            kappa: g.kappa,
            bpinf: g.beta_plus_inf,
            bminf: g.beta_minus_inf,
            bpsup4: g.beta_plus_sup / 4.0,
            bmsup4: g.beta_minus_sup / 4.0,
            iexm: g.i_ex_lower,
            iexp: g.i_ex_upper,
            width: g.width,
            precision: g.precision,
            coarse_lower,
            coarse_upper,
            correction: g.correction,
        }
    }
}

/// Everything measured on one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: usize,
    pub n_nodes: usize,
    pub n_elements: usize,
    pub n_dofs: usize,
    pub n_subdomains: usize,
    pub iterations: usize,
    pub termination: String,
    pub forward: Vec<BoundsRow>,
    pub adjoint: Vec<BoundsRow>,
    pub goal: Option<GoalRow>,
    /// `(I_HH2, radius)`.
    pub ihh2: Option<[f64; 2]>,
    /// Reference value of the quantity of interest, when known.
    pub i_ex: Option<f64>,
    /// Per-subdomain `E_cr(u_D, σ̂)` of the forward and adjoint problems.
    pub eta: Vec<f64>,
    pub eta_adjoint: Vec<f64>,
    pub alpha_history: Vec<f64>,
    pub augmentation_used: usize,
    pub augmentation_dropped: usize,
    /// First estimated iteration with `ρ_bis > 0`.
    pub zero_crossing: Option<usize>,
    pub wall_seconds: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HSweepRow {
    pub n: usize,
    pub h: f64,
    pub dofs: usize,
    pub iterations: usize,
    pub true_error: f64,
    pub theta: f64,
    pub theta_discr: f64,
    pub rho: f64,
    pub rho_bis: f64,
    pub theta_seq: f64,
    pub rho_seq: f64,
    pub sa_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    TargetMet,
    BudgetExhausted,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub problem: String,
    pub config_hash: String,
    pub options: RunOptions,
    pub outcome: Outcome,
    pub cycles: Vec<CycleReport>,
    pub h_sweep: Vec<HSweepRow>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match self.outcome {
            Outcome::TargetMet | Outcome::Completed => 0,
            Outcome::BudgetExhausted => 2,
        }
    }
}

fn config_hash(value: &impl Serialize) -> String {
    let mut h = DefaultHasher::new();
    serde_json::to_string(value).unwrap_or_default().hash(&mut h);
    format!("{:016x}", h.finish())
}

/// Result of one solve with its estimation passes.
#[derive(Debug, Clone)]
pub struct SolveEstimate {
    pub trace: SolveTrace,
    /// Per right-hand side, every estimation pass.
    pub history: Vec<Vec<BoundsRow>>,
    /// Per right-hand side, the last estimation pass.
    pub last: Vec<(BoundsRecord, AdmissibleRecovery)>,
    pub final_fields: Vec<IterationFields>,
}

/// Discrete true error `|||u_ex − u_D|||` on the square benchmark.
pub fn square_true_error(problem: &Problem, sub: &Substructured, fields: &IterationFields) -> Option<f64> {
    let bench = problem.exact?;
    let u = sub.gather_mean(&fields.u_d);
    Some(
        true_error_sq(&problem.mesh, &problem.material, &u, |p| bench.evaluate(p).strain, ERROR_QUADRATURE_DEGREE)
            .sqrt(),
    )
}

fn estimate(
    setup: &RecoverySetup,
    sub: &Substructured,
    fields: &IterationFields,
    exact: Option<f64>,
) -> Result<(BoundsRecord, AdmissibleRecovery), ddbounds_core::Error> {
    let rec = recover(setup, sub, fields, false)?;
    let mut b = bounds_record(fields, &rec)?;
    b.true_error = exact;
    Ok((b, rec))
}

/// Solves all `cases` together and runs estimation passes per `options`:
/// at iteration 1, at every iteration when `estimate_every`, and at the
/// final iterate.
pub fn solve_and_estimate(
    sub: &Substructured,
    cases: &[&LoadCase],
    setups: &[RecoverySetup],
    options: &RunOptions,
    augmentation: Vec<Vec<f64>>,
    guesses: &[Option<Vec<f64>>],
    exact: &dyn Fn(usize, &IterationFields) -> Option<f64>,
) -> Result<SolveEstimate, Error> {
    let tol = match options.stop {
        StopPolicy::Tolerance(t) => t,
        _ => 1e-12,
    };
    let mut config = SolverConfig::new(options.approach.into(), tol, options.max_iterations)?;
    config.augmentation = augmentation;
    let n = cases.len();
    let mut history: Vec<Vec<BoundsRow>> = vec![Vec::new(); n];
    let mut last: Option<Vec<(BoundsRecord, AdmissibleRecovery)>> = None;
    let trace = solve_augmented(sub, cases, &config, guesses, |fields| {
        let due = options.estimate_every || (fields[0].iteration >= 1 && last.is_none());
        if due {
            let mut now = Vec::with_capacity(n);
            for (j, f) in fields.iter().enumerate() {
                let (b, rec) = estimate(&setups[j], sub, f, exact(j, f))?;
                history[j].push(BoundsRow::new(&b, rec.sa_residual));
                now.push((b, rec));
            }
            last = Some(now);
        }
        if let Some(est) = &last {
            let hit = fields.iter().zip(est).all(|(f, (b, _))| options.stop.threshold(b.rho_discr).is_some_and(|t| f.alpha < t));
            if hit {
                return Ok(Control::Stop);
            }
        }
        Ok(Control::Continue)
    })?;
    let final_fields = trace.final_fields.clone();
    let stale = last.as_ref().is_none_or(|est| est[0].0.iteration != final_fields[0].iteration);
    let last = if stale {
        let mut now = Vec::with_capacity(n);
        for (j, f) in final_fields.iter().enumerate() {
            let (b, rec) = estimate(&setups[j], sub, f, exact(j, f))?;
            history[j].push(BoundsRow::new(&b, rec.sa_residual));
            now.push((b, rec));
        }
        now
    } else {
        last.unwrap_or_default()
    };
    Ok(SolveEstimate { trace, history, last, final_fields })
}

/// Sequential reference: direct solve on one subdomain and its estimate.
pub fn sequential_reference(problem: &Problem, patch_refine: usize) -> Result<(BoundsRecord, Vec<f64>), Error> {
    let mesh = &problem.mesh;
    let k = assemble_stiffness(mesh, &problem.material)?;
    let f = assemble_load(mesh, &problem.loads, DEFAULT_QUADRATURE_DEGREE)?;
    let u = solve_dirichlet_direct(&k, &f, &dirichlet_conditions(mesh, &problem.loads))?.u;
    let part = partition_regular(mesh, 1, 1)?;
    let sub = Substructured::new(mesh, &part, &problem.material)?;
    let case = sub.load_case(&problem.loads, DEFAULT_QUADRATURE_DEGREE)?;
    let fields = IterationFields::from_global(&sub, &case, &u, 0);
    let setup = RecoverySetup::new(&sub, &case, patch_refine)?;
    let exact = square_true_error(problem, &sub, &fields);
    Ok((estimate(&setup, &sub, &fields, exact)?.0, u))
}

/// Converged DD estimate on `problem` with its own partition.
pub fn converged_estimate(problem: &Problem, options: &RunOptions) -> Result<(BoundsRecord, usize, f64), Error> {
    let sub = Substructured::new(&problem.mesh, &problem.partition, &problem.material)?;
    let case = sub.load_case(&problem.loads, DEFAULT_QUADRATURE_DEGREE)?;
    let setup = RecoverySetup::new(&sub, &case, options.patch_refine)?;
    let tol = match options.stop {
        StopPolicy::Tolerance(t) => t,
        _ => 1e-10,
    };
    let config = SolverConfig::new(options.approach.into(), tol, options.max_iterations)?;
    let trace = solve_augmented(&sub, &[&case], &config, &initial_guesses(&sub, options, 1), |_| Ok(Control::Continue))?;
    let f = &trace.final_fields[0];
    let (b, rec) = estimate(&setup, &sub, f, square_true_error(problem, &sub, f))?;
    Ok((b, trace.iterations, rec.sa_residual))
}

/// One solve with estimation passes on `problem`, reported as a single cycle.
pub fn run_estimate(problem: &Problem, options: &RunOptions) -> Result<RunReport, Error> {
    let start = Instant::now();
    let sub = Substructured::new(&problem.mesh, &problem.partition, &problem.material)?;
    let case = sub.load_case(&problem.loads, DEFAULT_QUADRATURE_DEGREE)?;
    let setups = [RecoverySetup::new(&sub, &case, options.patch_refine)?];
    let exact = |_: usize, f: &IterationFields| square_true_error(problem, &sub, f);
    let guesses = initial_guesses(&sub, options, 1);
    let est = solve_and_estimate(&sub, &[&case], &setups, options, Vec::new(), &guesses, &exact)?;
    let trace = &est.trace;
    let (_, rec) = &est.last[0];
    let outcome = match trace.termination {
        Termination::MaxIterations | Termination::Stagnated => Outcome::BudgetExhausted,
        _ => Outcome::Completed,
    };
    let cycle = CycleReport {
        cycle: 0,
        n_nodes: problem.mesh.n_nodes(),
        n_elements: problem.mesh.n_elements(),
        n_dofs: problem.mesh.n_dofs(),
        n_subdomains: sub.n_subdomains(),
        iterations: trace.iterations,
        termination: termination_label(trace.termination).into(),
        forward: est.history[0].clone(),
        adjoint: Vec::new(),
        goal: None,
        ihh2: None,
        i_ex: None,
        eta: rec.subdomains.iter().map(|s| s.ecr_d_sq.sqrt()).collect(),
        eta_adjoint: Vec::new(),
        alpha_history: trace.alphas(0),
        augmentation_used: 0,
        augmentation_dropped: 0,
        zero_crossing: est.history[0].iter().find(|r| r.rho_bis > 0.0).map(|r| r.iter),
        wall_seconds: start.elapsed().as_secs_f64(),
        warnings: Vec::new(),
    };
    Ok(RunReport {
        problem: problem.name.clone(),
        config_hash: config_hash(&(&problem.name, problem.mesh.n_dofs(), options)),
        options: options.clone(),
        outcome,
        cycles: vec![cycle],
        h_sweep: Vec::new(),
    })
}

/// h-sweep on the square benchmark: per size, sequential reference and a
/// converged DD run on an `nx × ny` grid.
pub fn run_global_benchmark(sizes: &[usize], grid: (usize, usize), options: &RunOptions) -> Result<RunReport, Error> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let problem = square_problem(n, grid, 1.0)?;
        let (seq, _) = sequential_reference(&problem, options.patch_refine)?;
        let (dd, iterations, sa) = converged_estimate(&problem, options)?;
        rows.push(HSweepRow {
            n,
            h: 6.0 / n as f64,
            dofs: problem.mesh.n_dofs(),
            iterations,
            true_error: dd.true_error.unwrap_or(f64::NAN),
            theta: dd.theta,
            theta_discr: dd.theta_discr,
            rho: dd.rho,
            rho_bis: dd.rho_bis,
            theta_seq: seq.theta,
            rho_seq: seq.rho,
            sa_residual: sa,
        });
    }
    Ok(RunReport {
        problem: "square".into(),
        config_hash: config_hash(&(sizes, grid, options)),
        options: options.clone(),
        outcome: Outcome::Completed,
        cycles: Vec::new(),
        h_sweep: rows,
    })
}

/// Settings of the adaptive loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptivePlan {
    /// Target `|width / I_H|`.
    pub target_precision: f64,
    pub max_cycles: usize,
    pub recycle: bool,
}

impl AdaptivePlan {
    pub fn new(target_precision: f64, max_cycles: usize, recycle: bool) -> Result<Self, Error> {
        if !(target_precision > 0.0) {
            return Err(Error::Config(format!("target precision must be positive, got {target_precision}")));
        }
        if max_cycles == 0 {
            return Err(Error::Config("at least one cycle is required".into()));
        }
        Ok(Self { target_precision, max_cycles, recycle })
    }
}

/// Reference `I_ex` of the mean-σxx quantity on the square benchmark, by
/// degree-10 quadrature of the analytic stress over the region.
pub fn square_exact_qoi(problem: &Problem, region: &str) -> Option<f64> {
    let bench = problem.exact?;
    let els = problem.mesh.regions.get(region)?;
    let rule = ddbounds_core::quadrature::TriangleRule::new(ERROR_QUADRATURE_DEGREE);
    let mut total = 0.0;
    let mut area = 0.0;
    for &e in els {
        let [v] = rule.integrate::<1>(&problem.mesh.vertices(e), |x, _| [bench.evaluate(x).stress[0]]);
        total += v;
        area += problem.mesh.area(e);
    }
    Some(total / area)
}

/// Block forward/adjoint solve on successively split meshes until the
/// quantity of interest is bracketed to `plan.target_precision`.
pub fn run_adaptive(problem: &Problem, plan: &AdaptivePlan, options: &RunOptions) -> Result<RunReport, Error> {
    let region = problem.qoi_region.clone().ok_or_else(|| Error::Config("problem has no QoI region".into()))?;
    let mut current = problem.clone();
    let mut augmentation: Vec<Vec<f64>> = Vec::new();
    let mut cycles = Vec::new();
    let mut outcome = Outcome::BudgetExhausted;
    for cycle in 0..plan.max_cycles {
        let start = Instant::now();
        let mut warnings = Vec::new();
        let sub = Substructured::new(&current.mesh, &current.partition, &current.material)?;
        let extractor = MeanStressExtractor::new(&current.mesh, &current.material, &region)?;
        let fwd = sub.load_case(&current.loads, DEFAULT_QUADRATURE_DEGREE)?;
        let adj = sub.load_case(&extractor.adjoint_loads(), DEFAULT_QUADRATURE_DEGREE)?;
        let setups =
            [RecoverySetup::new(&sub, &fwd, options.patch_refine)?, RecoverySetup::new(&sub, &adj, options.patch_refine)?];
        let exact = |j: usize, f: &IterationFields| if j == 0 { square_true_error(&current, &sub, f) } else { None };
        let guesses = if cycle == 0 { initial_guesses(&sub, options, 2) } else { vec![None; 2] };
        let est = solve_and_estimate(
            &sub,
            &[&fwd, &adj],
            &setups,
            options,
            std::mem::take(&mut augmentation),
            &guesses,
            &exact,
        )?;
        let (_, fr) = &est.last[0];
        let (_, ar) = &est.last[1];
        let ff = &est.final_fields[0];
        let af = &est.final_fields[1];
        let goal = goal_bounds(&sub, &fwd, (ff, fr), &adj, (af, ar))?;
        let ihh2 = ihh2_bound(&sub, &fwd, (ff, fr), (af, ar))?;
        let zero_crossing = est.history[0].iter().find(|r| r.rho_bis > 0.0).map(|r| r.iter);
        let trace = &est.trace;
        if trace.augmentation_dropped > 0 {
            warnings.push(format!("{} recycled directions dropped as dependent", trace.augmentation_dropped));
        }
        cycles.push(CycleReport {
            cycle,
            n_nodes: current.mesh.n_nodes(),
            n_elements: current.mesh.n_elements(),
            n_dofs: current.mesh.n_dofs(),
            n_subdomains: sub.n_subdomains(),
            iterations: trace.iterations,
            termination: termination_label(trace.termination).into(),
            forward: est.history[0].clone(),
            adjoint: est.history[1].clone(),
            goal: Some(GoalRow::new(cycle, &goal)),
            ihh2: Some([ihh2.0, ihh2.1]),
            i_ex: square_exact_qoi(&current, &region),
            eta: fr.subdomains.iter().map(|s| s.ecr_d_sq.sqrt()).collect(),
            eta_adjoint: ar.subdomains.iter().map(|s| s.ecr_d_sq.sqrt()).collect(),
            alpha_history: trace.alphas(0),
            augmentation_used: trace.augmentation_used,
            augmentation_dropped: trace.augmentation_dropped,
            zero_crossing,
            wall_seconds: 0.0,
            warnings,
        });
        if goal.precision.abs() <= plan.target_precision {
            outcome = Outcome::TargetMet;
            cycles.last_mut().expect("cycle just pushed").wall_seconds = start.elapsed().as_secs_f64();
            break;
        }
        if cycle + 1 == plan.max_cycles {
            cycles.last_mut().expect("cycle just pushed").wall_seconds = start.elapsed().as_secs_f64();
            break;
        }
        let refinement = refine_by_splitting(&current.mesh)?;
        let partition: Partition = current.partition.refine(&refinement)?;
        let next = Problem { mesh: refinement.mesh.clone(), partition, ..current.clone() };
        if plan.recycle {
            let fine = Substructured::new(&next.mesh, &next.partition, &next.material)?;
            match project_directions(&trace.directions, &sub, &fine, &refinement.prolongation, options.approach.into()) {
                Ok((dirs, _)) => augmentation = dirs,
                Err(e) => cycles.last_mut().expect("cycle just pushed").warnings.push(format!("recycling disabled: {e}")),
            }
        }
        cycles.last_mut().expect("cycle just pushed").wall_seconds = start.elapsed().as_secs_f64();
        current = next;
    }
    Ok(RunReport {
        problem: problem.name.clone(),
        config_hash: config_hash(&(&problem.name, plan, options)),
        options: options.clone(),
        outcome,
        cycles,
        h_sweep: Vec::new(),
    })
}

pub fn termination_label(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::Stopped => "stopped",
        Termination::MaxIterations => "max_iterations",
        Termination::Stagnated => "stagnated",
    }
}
