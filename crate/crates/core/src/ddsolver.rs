//! Projected preconditioned conjugate gradient on the interface problem.
//!
//! Two formulations share one Krylov driver:
//!
//! - primal (BDD): unknowns are interface displacements, the operator is the
//!   assembled Schur complement, the preconditioner is Neumann-Neumann with
//!   multiplicity scaling and a rigid-mode coarse space;
//! - dual (FETI): unknowns are connection multipliers, the operator is the
//!   projected dual Schur complement, the preconditioner is the Dirichlet one
//!   with multiplicity scaling.
//!
//! Every iteration yields the admissible bundle `(u_D, u_N, λ_N, α)` with
//! `α² = rᵀz = |||u_N − u_D|||²`.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{orthonormalize, DenseCholesky, DenseMatrix};
use crate::math::{axpy, dot, norm, sqrt};
use crate::mesh::Prolongation;
use crate::substructure::{LoadCase, Substructured};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    PrimalBdd,
    DualFeti,
}

/// Deflation threshold: a right-hand side stops contributing directions once
/// its `α` drops below this fraction of its initial value.
pub const DEFLATION_RATIO: f64 = 1e-14;
/// A new direction is discarded when re-orthogonalization leaves less than
/// this fraction of its energy norm.
pub const DIRECTION_DROP_RATIO: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub approach: Approach,
    pub rel_tolerance: f64,
    pub max_iterations: usize,
    /// Interface vectors (in the unknown space of `approach`) spanning a
    /// constraint space the residual is kept orthogonal to.
    pub augmentation: Vec<Vec<f64>>,
}

impl SolverConfig {
    pub fn new(approach: Approach, rel_tolerance: f64, max_iterations: usize) -> Result<Self> {
        if !(rel_tolerance > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!("tolerance must be positive, got {rel_tolerance}")));
        }
        Ok(Self { approach, rel_tolerance, max_iterations, augmentation: Vec::new() })
    }
}

/// Admissible field bundle of one iteration for one right-hand side.
#[derive(Debug, Clone)]
pub struct IterationFields {
    pub iteration: usize,
    /// Globally continuous displacement, per subdomain (full local vectors).
    pub u_d: Vec<Vec<f64>>,
    /// Locally equilibrated broken displacement.
    pub u_n: Vec<Vec<f64>>,
    /// Balanced interface reactions on each subdomain's boundary dofs.
    pub lambda_n: Vec<Vec<f64>>,
    pub alpha: f64,
    pub residual_norm: f64,
}

impl IterationFields {
    /// Bundle of an exact (e.g. direct) global solution: `u_D = u_N = u`.
    pub fn from_global(sub: &Substructured, case: &LoadCase, u: &[f64], iteration: usize) -> Self {
        let local = sub.scatter(u);
        let lambda_n =
            sub.problems.iter().zip(&case.subdomains).zip(&local).map(|((p, l), u)| p.reaction(l, u)).collect();
        Self { iteration, u_d: local.clone(), u_n: local, lambda_n, alpha: 0.0, residual_norm: 0.0 }
    }

    /// `|||u_N − u_D|||²` summed over subdomains.
    pub fn gap_energy_sq(&self, sub: &Substructured) -> f64 {
        sub.problems
            .iter()
            .zip(self.u_n.iter().zip(&self.u_d))
            .map(|(p, (n, d))| {
                let diff: Vec<f64> = n.iter().zip(d).map(|(a, b)| a - b).collect();
                p.energy(&diff, &diff)
            })
            .sum()
    }
}

/// What a per-iteration observer asks the solver to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationSummary {
    pub iteration: usize,
    pub alpha: Vec<f64>,
    pub residual_norm: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    Stopped,
    MaxIterations,
    Stagnated,
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub termination: Termination,
    pub iterations: usize,
    pub history: Vec<IterationSummary>,
    /// Final bundle per right-hand side.
    pub final_fields: Vec<IterationFields>,
    /// Final iterate per right-hand side.
    pub solution: Vec<Vec<f64>>,
    /// Operator-orthonormal search directions (augmentation first).
    pub directions: Vec<Vec<f64>>,
    pub augmentation_used: usize,
    pub augmentation_dropped: usize,
    /// Iteration at which each right-hand side was deflated.
    pub deflated_at: Vec<Option<usize>>,
}

impl SolveTrace {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn alphas(&self, rhs: usize) -> Vec<f64> {
        self.history.iter().map(|h| h.alpha[rhs]).collect()
    }
}

struct Evaluation {
    r: Vec<f64>,
    z: Vec<f64>,
    fields: IterationFields,
}

trait Formulation {
    fn dim(&self) -> usize;
    fn start(&self, case: usize, guess: Option<&[f64]>) -> Result<Vec<f64>>;
    fn evaluate(&self, case: usize, x: &[f64], iteration: usize) -> Result<Evaluation>;
    fn apply(&self, p: &[f64]) -> Result<Vec<f64>>;
    fn project(&self, v: &[f64]) -> Result<Vec<f64>>;
}

fn orthonormal_columns(cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    orthonormalize(&cols, 1e-10).0
}

fn remove_span(q: &[Vec<f64>], v: &mut [f64]) {
    for _ in 0..2 {
        for c in q {
            let a = dot(c, v);
            axpy(-a, c, v);
        }
    }
}

struct Bdd<'a> {
    sub: &'a Substructured,
    cases: &'a [&'a LoadCase],
    /// Orthonormal coarse basis.
    g: Vec<Vec<f64>>,
    sg: Vec<Vec<f64>>,
    coarse: Option<DenseCholesky>,
    scaling: Vec<Vec<f64>>,
}

impl<'a> Bdd<'a> {
    fn new(sub: &'a Substructured, cases: &'a [&'a LoadCase]) -> Result<Self> {
        let alg = &sub.algebra;
        let scaling: Vec<Vec<f64>> =
            alg.primal.iter().map(|m| m.iter().map(|&g| 1.0 / alg.multiplicity[g] as f64).collect()).collect();
        let mut cols = Vec::new();
        for (s, p) in sub.problems.iter().enumerate() {
            for rb in p.rigid_boundary() {
                let scaled: Vec<f64> = rb.iter().zip(&scaling[s]).map(|(a, d)| a * d).collect();
                let mut local = vec![Vec::new(); sub.n_subdomains()];
                for (t, l) in local.iter_mut().enumerate() {
                    *l = if t == s { scaled.clone() } else { vec![0.0; sub.problems[t].n_boundary()] };
                }
                cols.push(alg.assemble(&local));
            }
        }
        let g = orthonormal_columns(cols);
        let mut this = Self { sub, cases, g, sg: Vec::new(), coarse: None, scaling };
        let sg: Vec<Vec<f64>> = this.g.iter().map(|c| this.apply(c)).collect::<Result<_>>()?;
        let m = this.g.len();
        if m > 0 {
            let mut gsg = DenseMatrix::zeros(m, m);
            for i in 0..m {
                for j in 0..m {
                    gsg[(i, j)] = dot(&this.g[i], &sg[j]);
                }
            }
            this.coarse = Some(
                DenseCholesky::factor(gsg)
                    .map_err(|_| Error::SingularSystem("primal coarse problem is singular".into()))?,
            );
        }
        this.sg = sg;
        Ok(this)
    }

    /// `G (GᵀSG)⁻¹ c`.
    fn coarse_lift(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        if let Some(f) = &self.coarse {
            let y = f.solve(c);
            for (gi, yi) in self.g.iter().zip(y) {
                axpy(yi, gi, &mut out);
            }
        }
        out
    }

    fn raw_residual(&self, case: usize, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let mut u_d = Vec::with_capacity(self.sub.n_subdomains());
        let mut lam = Vec::with_capacity(self.sub.n_subdomains());
        for (s, p) in self.sub.problems.iter().enumerate() {
            let load = &self.cases[case].subdomains[s];
            let u = p.dirichlet_solve(load, &self.sub.algebra.restrict(s, x));
            lam.push(p.reaction(load, &u));
            u_d.push(u);
        }
        let mut r = self.sub.algebra.assemble(&lam);
        for v in &mut r {
            *v = -*v;
        }
        (u_d, lam, r)
    }
}

impl Formulation for Bdd<'_> {
    fn dim(&self) -> usize {
        self.sub.algebra.n_interface()
    }

    fn start(&self, case: usize, guess: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut x = guess.map_or_else(|| vec![0.0; self.dim()], <[f64]>::to_vec);
        let (_, _, r) = self.raw_residual(case, &x);
        let c: Vec<f64> = self.g.iter().map(|gi| dot(gi, &r)).collect();
        let corr = self.coarse_lift(&c);
        for (xi, ci) in x.iter_mut().zip(corr) {
            *xi += ci;
        }
        Ok(x)
    }

    fn evaluate(&self, case: usize, x: &[f64], iteration: usize) -> Result<Evaluation> {
        let (u_d, lam_d, mut r) = self.raw_residual(case, x);
        remove_span(&self.g, &mut r);
        let alg = &self.sub.algebra;
        let mut u_n = Vec::with_capacity(u_d.len());
        let mut lambda_n = Vec::with_capacity(u_d.len());
        let mut traces = Vec::with_capacity(u_d.len());
        for (s, p) in self.sub.problems.iter().enumerate() {
            let v: Vec<f64> = alg.restrict(s, &r).iter().zip(&self.scaling[s]).map(|(a, d)| a * d).collect();
            let y = p.neumann_homogeneous(&v)?;
            traces.push(p.trace(&y).iter().zip(&self.scaling[s]).map(|(a, d)| a * d).collect::<Vec<f64>>());
            u_n.push(u_d[s].iter().zip(&y).map(|(a, b)| a + b).collect());
            lambda_n.push(lam_d[s].iter().zip(&v).map(|(a, b)| a + b).collect());
        }
        let z = self.project(&alg.assemble(&traces))?;
        let alpha = sqrt(dot(&r, &z).max(0.0));
        let residual_norm = norm(&r);
        Ok(Evaluation { r, z, fields: IterationFields { iteration, u_d, u_n, lambda_n, alpha, residual_norm } })
    }

    fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        let local: Vec<Vec<f64>> = self
            .sub
            .problems
            .iter()
            .enumerate()
            .map(|(s, sp)| sp.schur_apply(&self.sub.algebra.restrict(s, p)))
            .collect();
        Ok(self.sub.algebra.assemble(&local))
    }

    fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let c: Vec<f64> = self.sg.iter().map(|s| dot(s, v)).collect();
        let corr = self.coarse_lift(&c);
        Ok(v.iter().zip(corr).map(|(a, b)| a - b).collect())
    }
}

struct Feti<'a> {
    sub: &'a Substructured,
    cases: &'a [&'a LoadCase],
    /// Raw coarse columns `B^(s) t R^(s)` with owning subdomain and mode.
    g: Vec<Vec<f64>>,
    owner: Vec<(usize, usize)>,
    q: Vec<Vec<f64>>,
    gtg: Option<DenseCholesky>,
}

impl<'a> Feti<'a> {
    fn new(sub: &'a Substructured, cases: &'a [&'a LoadCase]) -> Result<Self> {
        let alg = &sub.algebra;
        let mut g = Vec::new();
        let mut owner = Vec::new();
        for (s, p) in sub.problems.iter().enumerate() {
            for (k, rb) in p.rigid_boundary().into_iter().enumerate() {
                let mut col = vec![0.0; alg.n_connections()];
                for &(row, b, sign) in &alg.dual[s] {
                    col[row] += sign * rb[b];
                }
                g.push(col);
                owner.push((s, k));
            }
        }
        let m = g.len();
        let gtg = if m > 0 {
            let mut a = DenseMatrix::zeros(m, m);
            for i in 0..m {
                for j in 0..m {
                    a[(i, j)] = dot(&g[i], &g[j]);
                }
            }
            Some(DenseCholesky::factor(a).map_err(|_| {
                Error::SingularSystem("dual coarse problem is singular (floating subdomain without connections)".into())
            })?)
        } else {
            None
        };
        let q = orthonormal_columns(g.clone());
        Ok(Self { sub, cases, g, owner, q, gtg })
    }

    fn lift(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        if let Some(f) = &self.gtg {
            let y = f.solve(c);
            for (gi, yi) in self.g.iter().zip(y) {
                axpy(yi, gi, &mut out);
            }
        }
        out
    }
}

impl Formulation for Feti<'_> {
    fn dim(&self) -> usize {
        self.sub.algebra.n_connections()
    }

    fn start(&self, case: usize, guess: Option<&[f64]>) -> Result<Vec<f64>> {
        let e: Vec<f64> = self
            .owner
            .iter()
            .map(|&(s, k)| dot(&self.sub.problems[s].rigid_modes[k], &self.cases[case].subdomains[s].rhs))
            .collect();
        let mut mu = self.lift(&e);
        if let Some(gs) = guess {
            let pg = self.project(gs)?;
            for (m, v) in mu.iter_mut().zip(pg) {
                *m += v;
            }
        }
        Ok(mu)
    }

    fn evaluate(&self, case: usize, mu: &[f64], iteration: usize) -> Result<Evaluation> {
        let alg = &self.sub.algebra;
        let n = self.sub.n_subdomains();
        let mut u0 = Vec::with_capacity(n);
        let mut lambda_n = Vec::with_capacity(n);
        for (s, p) in self.sub.problems.iter().enumerate() {
            let lam: Vec<f64> = alg.dual_transpose(s, p.n_boundary(), mu, false).iter().map(|v| -v).collect();
            u0.push(p.neumann_full(&self.cases[case].subdomains[s], &lam)?);
            lambda_n.push(lam);
        }
        let traces: Vec<Vec<f64>> = self.sub.problems.iter().zip(&u0).map(|(p, u)| p.trace(u)).collect();
        let j = alg.jump(&traces);
        let gj: Vec<f64> = self.g.iter().map(|gi| dot(gi, &j)).collect();
        let beta: Vec<f64> = match &self.gtg {
            Some(f) => f.solve(&gj).iter().map(|v| -v).collect(),
            None => Vec::new(),
        };
        let mut u_n = u0;
        for (&(s, k), b) in self.owner.iter().zip(&beta) {
            let modes = self.sub.problems[s].rigid_full();
            axpy(*b, &modes[k], &mut u_n[s]);
        }
        let mut w = j;
        remove_span(&self.q, &mut w);
        let mut acc = vec![0.0; self.dim()];
        let mut u_d = Vec::with_capacity(n);
        for (s, p) in self.sub.problems.iter().enumerate() {
            let v = alg.dual_transpose(s, p.n_boundary(), &w, true);
            let sv = p.schur_apply(&v);
            alg.dual_scaled_accumulate(s, &sv, &mut acc);
            let trace: Vec<f64> = p.trace(&u_n[s]).iter().zip(&v).map(|(a, b)| a - b).collect();
            u_d.push(p.dirichlet_solve(&self.cases[case].subdomains[s], &trace));
        }
        let z = self.project(&acc)?;
        let alpha = sqrt(dot(&w, &z).max(0.0));
        let residual_norm = norm(&w);
        Ok(Evaluation { r: w, z, fields: IterationFields { iteration, u_d, u_n, lambda_n, alpha, residual_norm } })
    }

    fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        let alg = &self.sub.algebra;
        let mut traces = Vec::with_capacity(self.sub.n_subdomains());
        for (s, sp) in self.sub.problems.iter().enumerate() {
            let rhs = alg.dual_transpose(s, sp.n_boundary(), p, false);
            let u = sp.neumann_homogeneous(&rhs)?;
            traces.push(sp.trace(&u));
        }
        let mut out = alg.jump(&traces);
        remove_span(&self.q, &mut out);
        Ok(out)
    }

    fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = v.to_vec();
        remove_span(&self.q, &mut out);
        Ok(out)
    }
}

struct Direction {
    d: Vec<f64>,
    q: Vec<f64>,
}

/// Operator-orthonormalizes `d` against `basis` in place; returns `None` if
/// it becomes negligible. Errors on negative curvature.
fn a_orthonormalize<F: Formulation>(
    form: &F,
    basis: &[Direction],
    extra: &[Direction],
    d: Vec<f64>,
    iteration: usize,
) -> Result<Option<Direction>> {
    let mut d = d;
    let mut q = form.apply(&d)?;
    let n0 = dot(&d, &q);
    if n0 < 0.0 {
        return Err(Error::Breakdown { iteration, curvature: n0 });
    }
    if n0 == 0.0 || !n0.is_finite() {
        return Ok(None);
    }
    for _ in 0..2 {
        for b in basis.iter().chain(extra) {
            let c = dot(&b.q, &d);
            axpy(-c, &b.d, &mut d);
            axpy(-c, &b.q, &mut q);
        }
    }
    let n1 = dot(&d, &q);
    if !(n1 > DIRECTION_DROP_RATIO * DIRECTION_DROP_RATIO * n0) {
        return Ok(None);
    }
    let s = 1.0 / sqrt(n1);
    d.iter_mut().for_each(|v| *v *= s);
    q.iter_mut().for_each(|v| *v *= s);
    Ok(Some(Direction { d, q }))
}

fn run<F: Formulation>(
    form: &F,
    n_rhs: usize,
    config: &SolverConfig,
    guesses: &[Option<Vec<f64>>],
    callback: &mut dyn FnMut(&[IterationFields]) -> Result<Control>,
) -> Result<SolveTrace> {
    let mut x: Vec<Vec<f64>> =
        (0..n_rhs).map(|j| form.start(j, guesses.get(j).and_then(|g| g.as_deref()))).collect::<Result<_>>()?;
    let mut dirs: Vec<Direction> = Vec::new();
    let mut augmentation_dropped = 0;
    for v in &config.augmentation {
        if v.len() != form.dim() {
            return Err(Error::DimensionMismatch { expected: form.dim(), got: v.len() });
        }
        let pv = form.project(v)?;
        match a_orthonormalize(form, &dirs, &[], pv, 0)? {
            Some(d) => dirs.push(d),
            None => augmentation_dropped += 1,
        }
    }
    let augmentation_used = dirs.len();
    let has_start_change = augmentation_used > 0 || guesses.iter().any(Option::is_some);
    let mut reference = vec![0.0; n_rhs];
    if has_start_change {
        for (j, xj) in x.iter_mut().enumerate() {
            let plain = form.start(j, None)?;
            reference[j] = form.evaluate(j, &plain, 0)?.fields.alpha;
            if augmentation_used > 0 {
                let r = form.evaluate(j, xj, 0)?.r;
                for d in &dirs {
                    axpy(dot(&d.d, &r), &d.d, xj);
                }
            }
        }
    }
    let mut history = Vec::new();
    let mut initial_alpha = vec![0.0; n_rhs];
    let mut deflated_at = vec![None; n_rhs];
    let mut iteration = 0;
    let (termination, final_fields) = loop {
        let evals: Vec<Evaluation> = (0..n_rhs).map(|j| form.evaluate(j, &x[j], iteration)).collect::<Result<_>>()?;
        let alphas: Vec<f64> = evals.iter().map(|e| e.fields.alpha).collect();
        history.push(IterationSummary {
            iteration,
            alpha: alphas.clone(),
            residual_norm: evals.iter().map(|e| e.fields.residual_norm).collect(),
        });
        if iteration == 0 {
            initial_alpha.clone_from(&alphas);
            if !has_start_change {
                reference.clone_from(&alphas);
            }
        }
        let fields: Vec<IterationFields> = evals.iter().map(|e| e.fields.clone()).collect();
        let control = callback(&fields)?;
        let converged = (0..n_rhs).all(|j| alphas[j] <= config.rel_tolerance * reference[j]);
        if converged {
            break (Termination::Converged, fields);
        }
        if control == Control::Stop {
            break (Termination::Stopped, fields);
        }
        if iteration >= config.max_iterations {
            break (Termination::MaxIterations, fields);
        }
        let mut fresh: Vec<Direction> = Vec::new();
        for (j, e) in evals.iter().enumerate() {
            if deflated_at[j].is_some() {
                continue;
            }
            if alphas[j] <= DEFLATION_RATIO * initial_alpha[j] {
                deflated_at[j] = Some(iteration);
                continue;
            }
            if let Some(d) = a_orthonormalize(form, &dirs, &fresh, e.z.clone(), iteration)? {
                fresh.push(d);
            }
        }
        if fresh.is_empty() {
            break (Termination::Stagnated, fields);
        }
        for (j, e) in evals.iter().enumerate() {
            for d in &fresh {
                axpy(dot(&d.d, &e.r), &d.d, &mut x[j]);
            }
        }
        dirs.extend(fresh);
        iteration += 1;
    };
    Ok(SolveTrace {
        termination,
        iterations: iteration,
        history,
        final_fields,
        solution: x,
        directions: dirs.into_iter().map(|d| d.d).collect(),
        augmentation_used,
        augmentation_dropped,
        deflated_at,
    })
}

fn dispatch(
    sub: &Substructured,
    cases: &[&LoadCase],
    config: &SolverConfig,
    guesses: &[Option<Vec<f64>>],
    callback: &mut dyn FnMut(&[IterationFields]) -> Result<Control>,
) -> Result<SolveTrace> {
    match config.approach {
        Approach::PrimalBdd => run(&Bdd::new(sub, cases)?, cases.len(), config, guesses, callback),
        Approach::DualFeti => run(&Feti::new(sub, cases)?, cases.len(), config, guesses, callback),
    }
}

/// Single right-hand side solve. `callback` sees every iteration's bundle.
pub fn solve_interface(
    sub: &Substructured,
    case: &LoadCase,
    config: &SolverConfig,
    initial_guess: Option<Vec<f64>>,
    mut callback: impl FnMut(&IterationFields) -> Result<Control>,
) -> Result<SolveTrace> {
    dispatch(sub, &[case], config, &[initial_guess], &mut |f| callback(&f[0]))
}

/// Forward and adjoint solved together by block conjugate gradient.
pub fn solve_block(
    sub: &Substructured,
    forward: &LoadCase,
    adjoint: &LoadCase,
    config: &SolverConfig,
    mut callback: impl FnMut(&IterationFields, &IterationFields) -> Result<Control>,
) -> Result<SolveTrace> {
    dispatch(sub, &[forward, adjoint], config, &[None, None], &mut |f| callback(&f[0], &f[1]))
}

/// General entry point: any number of right-hand sides, optional initial
/// guesses, augmentation taken from `config`.
pub fn solve_augmented(
    sub: &Substructured,
    cases: &[&LoadCase],
    config: &SolverConfig,
    guesses: &[Option<Vec<f64>>],
    mut callback: impl FnMut(&[IterationFields]) -> Result<Control>,
) -> Result<SolveTrace> {
    if cases.is_empty() {
        return Err(Error::InvalidConfig("at least one right-hand side is required".into()));
    }
    dispatch(sub, cases, config, guesses, &mut callback)
}

/// Transfers interface vectors of `coarse` to the interface of `fine` (a
/// refinement of the same substructuring) by linear interpolation along the
/// interface, then orthonormalizes. Returns the vectors and how many were
/// dropped as linearly dependent.
pub fn project_directions(
    directions: &[Vec<f64>],
    coarse: &Substructured,
    fine: &Substructured,
    prolongation: &Prolongation,
    approach: Approach,
) -> Result<(Vec<Vec<f64>>, usize)> {
    if prolongation.rows.len() != fine.mesh.n_nodes() || prolongation.n_coarse != coarse.mesh.n_nodes() {
        return Err(Error::NonNestedMeshes("prolongation does not match the meshes".into()));
    }
    use alloc::collections::BTreeMap;
    let transfer: Vec<Vec<(usize, f64)>> = match approach {
        Approach::PrimalBdd => {
            let index: BTreeMap<(usize, usize), usize> =
                coarse.algebra.dof_keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
            fine.algebra
                .dof_keys
                .iter()
                .map(|&(n, c)| {
                    prolongation.rows[n]
                        .iter()
                        .filter_map(|&(cn, w)| match index.get(&(cn, c)) {
                            Some(&i) => Some(Ok((i, w))),
                            None if coarse.dirichlet_nodes.contains(&cn) => None,
                            None => Some(Err(Error::NonNestedMeshes(alloc::format!(
                                "fine interface node {n} interpolates from non-interface coarse node {cn}"
                            )))),
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?
        }
        Approach::DualFeti => {
            let index: BTreeMap<_, usize> = coarse
                .algebra
                .connections
                .iter()
                .enumerate()
                .map(|(i, c)| ((c.node, c.comp, c.lo, c.hi), i))
                .collect();
            fine.algebra
                .connections
                .iter()
                .map(|f| {
                    prolongation.rows[f.node]
                        .iter()
                        .filter_map(|&(cn, w)| match index.get(&(cn, f.comp, f.lo, f.hi)) {
                            Some(&i) => Some(Ok((i, w))),
                            None if coarse.dirichlet_nodes.contains(&cn) => None,
                            None => Some(Err(Error::NonNestedMeshes(alloc::format!(
                                "fine connection at node {} has no coarse counterpart at node {cn}",
                                f.node
                            )))),
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?
        }
    };
    let coarse_dim = match approach {
        Approach::PrimalBdd => coarse.algebra.n_interface(),
        Approach::DualFeti => coarse.algebra.n_connections(),
    };
    let mut out = Vec::with_capacity(directions.len());
    for d in directions {
        if d.len() != coarse_dim {
            return Err(Error::DimensionMismatch { expected: coarse_dim, got: d.len() });
        }
        out.push(transfer.iter().map(|row| row.iter().map(|&(i, w)| w * d[i]).sum()).collect::<Vec<f64>>());
    }
    Ok(orthonormalize(&out, 1e-10))
}
