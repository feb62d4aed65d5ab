//! Global and goal-oriented error bounds from admissible recoveries.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::ddsolver::IterationFields;
use crate::fem::{dot3, mat_vec, quad_form, Geometry, LoadSet, Material, Voigt};
use crate::math::{dot, sqrt};
use crate::mesh::Mesh;
use crate::recovery::AdmissibleRecovery;
use crate::substructure::{LoadCase, Substructured};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsRecord {
    pub iteration: usize,
    pub theta: f64,
    pub theta_discr: f64,
    pub rho: f64,
    pub rho_discr: f64,
    pub rho_alg: f64,
    pub rho_bis: f64,
    pub alpha: f64,
    /// Sign-carrying `R_D(w)/|||w|||`.
    pub rho_signed: f64,
    /// `w` vanished identically; all lower bounds are then zero.
    pub degenerate: bool,
    pub true_error: Option<f64>,
}

impl BoundsRecord {
    /// Best guaranteed upper bound: `min(θ, α + θ_discr)`.
    pub fn upper(&self) -> f64 {
        self.theta.min(self.alpha + self.theta_discr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalRecord {
    pub i_h: f64,
    pub kappa: f64,
    pub beta_plus_inf: f64,
    pub beta_minus_inf: f64,
    pub beta_plus_sup: f64,
    pub beta_minus_sup: f64,
    /// `R_D(ũ_D)`, zero for a Galerkin forward solution.
    pub correction: f64,
    pub i_ex_lower: f64,
    pub i_ex_upper: f64,
    pub width: f64,
    pub precision: f64,
}

impl GoalRecord {
    /// Interval obtained with both `β_inf` terms dropped.
    pub fn coarse_interval(&self) -> (f64, f64) {
        let base = self.i_h + self.correction;
        (base - self.beta_minus_sup / 4.0, base + self.beta_plus_sup / 4.0)
    }
}

fn check_stamp(fields: &IterationFields, rec: &AdmissibleRecovery) -> Result<()> {
    if fields.iteration != rec.iteration {
        return Err(Error::IterationMismatch { fields: fields.iteration, recovery: rec.iteration });
    }
    Ok(())
}

/// `(θ, θ_discr)`.
pub fn upper_bounds(fields: &IterationFields, rec: &AdmissibleRecovery) -> Result<(f64, f64)> {
    check_stamp(fields, rec)?;
    let d: f64 = rec.subdomains.iter().map(|s| s.ecr_d_sq).sum();
    let n: f64 = rec.subdomains.iter().map(|s| s.ecr_n_sq).sum();
    Ok((sqrt(d), sqrt(n)))
}

/// Lower bounds `(ρ, ρ_discr, ρ_alg, ρ_bis)` plus the signed `ρ` and a
/// degeneracy flag.
pub fn lower_bounds(fields: &IterationFields, rec: &AdmissibleRecovery) -> Result<([f64; 4], f64, bool)> {
    check_stamp(fields, rec)?;
    let ww: f64 = rec.subdomains.iter().map(|s| s.w_energy_sq).sum();
    if rec.w_degenerate || ww <= 0.0 {
        return Ok(([0.0, 0.0, 0.0, -fields.alpha], 0.0, true));
    }
    let norm = sqrt(ww);
    let rd: f64 = rec.subdomains.iter().map(|s| s.r_d_w()).sum();
    let rn: f64 = rec.subdomains.iter().map(|s| s.r_n_w()).sum();
    let alg = rn - rd;
    let rho_discr = rn.abs() / norm;
    Ok(([rd.abs() / norm, rho_discr, alg.abs() / norm, rho_discr - fields.alpha], rd / norm, false))
}

pub fn bounds_record(fields: &IterationFields, rec: &AdmissibleRecovery) -> Result<BoundsRecord> {
    let (theta, theta_discr) = upper_bounds(fields, rec)?;
    let ([rho, rho_discr, rho_alg, rho_bis], rho_signed, degenerate) = lower_bounds(fields, rec)?;
    Ok(BoundsRecord {
        iteration: fields.iteration,
        theta,
        theta_discr,
        rho,
        rho_discr,
        rho_alg,
        rho_bis,
        alpha: fields.alpha,
        rho_signed,
        degenerate,
        true_error: None,
    })
}

/// `κ = √(θ̃ / θ)`, the minimiser of `κ²θ² + θ̃²/κ²`.
pub fn kappa(theta: f64, theta_adj: f64) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::ZeroForwardError);
    }
    if !(theta_adj > 0.0) || !theta_adj.is_finite() {
        return Err(Error::InvalidConfig(String::from("adjoint error estimate must be positive")));
    }
    Ok(sqrt(theta_adj / theta))
}

/// `Σ ∫ Δ̃ : 𝓗⁻¹ : Δ` over the refined children, with `Δ = σ̂ − 𝓗ε(u_D)`.
pub fn cross_ecr(material: &Material, fwd: &AdmissibleRecovery, adj: &AdmissibleRecovery) -> Result<f64> {
    if fwd.subdomains.len() != adj.subdomains.len() {
        return Err(Error::DimensionMismatch { expected: fwd.subdomains.len(), got: adj.subdomains.len() });
    }
    let c = material.compliance();
    let mut acc = 0.0;
    for (f, a) in fwd.subdomains.iter().zip(&adj.subdomains) {
        if f.delta_d.len() != a.delta_d.len() {
            return Err(Error::DimensionMismatch { expected: f.delta_d.len(), got: a.delta_d.len() });
        }
        for ((df, da), area) in f.delta_d.iter().zip(&a.delta_d).zip(&f.child_area) {
            acc += area * quad_form(&c, da, df);
        }
    }
    Ok(acc)
}

/// `L(v) − a(u, v)` summed over subdomains for coarse local fields.
pub fn galerkin_residual(sub: &Substructured, case: &LoadCase, u: &[Vec<f64>], v: &[Vec<f64>]) -> f64 {
    sub.problems
        .iter()
        .zip(&case.subdomains)
        .zip(u.iter().zip(v))
        .map(|((p, l), (u, v))| dot(&l.f, v) - p.energy(u, v))
        .sum()
}

/// `L̃(u)` summed over subdomains.
pub fn load_value(case: &LoadCase, u: &[Vec<f64>]) -> f64 {
    case.subdomains.iter().zip(u).map(|(l, u)| dot(&l.f, u)).sum()
}

/// Goal-oriented interval for `Ĩ(u_ex) = L̃(u_ex)`.
#[allow(clippy::too_many_arguments)]
pub fn goal_bounds(
    sub: &Substructured,
    fwd_case: &LoadCase,
    fwd: (&IterationFields, &AdmissibleRecovery),
    adj_case: &LoadCase,
    adj: (&IterationFields, &AdmissibleRecovery),
) -> Result<GoalRecord> {
    let (ff, fr) = fwd;
    let (af, ar) = adj;
    let (theta, _) = upper_bounds(ff, fr)?;
    let (theta_adj, _) = upper_bounds(af, ar)?;
    let k = kappa(theta, theta_adj)?;
    let cross = cross_ecr(&sub.material, fr, ar)?;
    let base = k * k * theta * theta + theta_adj * theta_adj / (k * k);
    let beta_plus_sup = base + 2.0 * cross;
    let beta_minus_sup = (base - 2.0 * cross).max(0.0);

    // β_inf from z± = κ w ± w̃/κ
    let rd_w: f64 = fr.subdomains.iter().map(|s| s.r_d_w()).sum();
    let rd_wt: f64 = fr.subdomains.iter().zip(&ar.subdomains).map(|(f, a)| dot(&f.res_d, &a.w)).sum();
    let rtd_w: f64 = ar.subdomains.iter().zip(&fr.subdomains).map(|(a, f)| dot(&a.res_d, &f.w)).sum();
    let rtd_wt: f64 = ar.subdomains.iter().map(|s| s.r_d_w()).sum();
    let ww: f64 = fr.subdomains.iter().map(|s| s.w_energy_sq).sum();
    let wtwt: f64 = ar.subdomains.iter().map(|s| s.w_energy_sq).sum();
    let wwt: f64 = fr.subdomains.iter().zip(&ar.subdomains).map(|(f, a)| dot(&f.k_w, &a.w)).sum();
    let beta_inf = |sign: f64| -> f64 {
        let zz = k * k * ww + wtwt / (k * k) + 2.0 * sign * wwt;
        if !(zz > 0.0) {
            return 0.0;
        }
        let r_z = k * rd_w + sign * rd_wt / k;
        let rt_z = k * rtd_w + sign * rtd_wt / k;
        let num = k * r_z + sign * rt_z / k;
        num * num / zz
    };
    let beta_plus_inf = beta_inf(1.0);
    let beta_minus_inf = beta_inf(-1.0);

    let i_h = load_value(adj_case, &ff.u_d);
    let correction = galerkin_residual(sub, fwd_case, &ff.u_d, &af.u_d);
    let i_ex_lower = i_h + correction + beta_plus_inf / 4.0 - beta_minus_sup / 4.0;
    let i_ex_upper = i_h + correction + beta_plus_sup / 4.0 - beta_minus_inf / 4.0;
    let width = i_ex_upper - i_ex_lower;
    Ok(GoalRecord {
        i_h,
        kappa: k,
        beta_plus_inf,
        beta_minus_inf,
        beta_plus_sup,
        beta_minus_sup,
        correction,
        i_ex_lower,
        i_ex_upper,
        width,
        precision: precision(width, i_h),
    })
}

/// `width / I_H`.
pub fn precision(width: f64, i_h: f64) -> f64 {
    width / i_h
}

/// `(I_HH2, radius)` such that `|I_ex − I_H − I_HH2| ≤ radius`.
pub fn ihh2_bound(
    sub: &Substructured,
    fwd_case: &LoadCase,
    fwd: (&IterationFields, &AdmissibleRecovery),
    adj: (&IterationFields, &AdmissibleRecovery),
) -> Result<(f64, f64)> {
    let (theta, _) = upper_bounds(fwd.0, fwd.1)?;
    let (theta_adj, _) = upper_bounds(adj.0, adj.1)?;
    let cross = cross_ecr(&sub.material, fwd.1, adj.1)?;
    let correction = galerkin_residual(sub, fwd_case, &fwd.0.u_d, &adj.0.u_d);
    Ok((0.5 * cross + correction, 0.5 * theta * theta_adj))
}

/// Mean of `σxx` over a region, expressed as the adjoint load
/// `L̃(v) = ∫_ω σ_Σ : ε(v)` with `σ_Σ = 𝓗 e_xx / |ω|`.
#[derive(Debug, Clone)]
pub struct MeanStressExtractor {
    pub region: String,
    pub sigma: Voigt,
    pub measure: f64,
}

impl MeanStressExtractor {
    pub fn new(mesh: &Mesh, material: &Material, region: &str) -> Result<Self> {
        let elems = mesh.regions.get(region).ok_or_else(|| Error::UnknownRegion(String::from(region)))?;
        if elems.is_empty() {
            return Err(Error::UnknownRegion(String::from(region)));
        }
        let measure: f64 = elems.iter().map(|&e| mesh.area(e)).sum();
        let h = material.hooke();
        let sigma = [h[0][0] / measure, h[1][0] / measure, h[2][0] / measure];
        Ok(Self { region: String::from(region), sigma, measure })
    }

    pub fn adjoint_loads(&self) -> LoadSet {
        let mut region_stress = BTreeMap::new();
        region_stress.insert(self.region.clone(), self.sigma);
        LoadSet { region_stress, ..LoadSet::default() }
    }

    /// `L̃(u)` for a global nodal field.
    pub fn evaluate(&self, mesh: &Mesh, u: &[f64]) -> Result<f64> {
        if u.len() != mesh.n_dofs() {
            return Err(Error::DimensionMismatch { expected: mesh.n_dofs(), got: u.len() });
        }
        let elems = mesh.regions.get(&self.region).ok_or_else(|| Error::UnknownRegion(self.region.clone()))?;
        Ok(elems
            .iter()
            .map(|&e| {
                let g = Geometry::new(&mesh.vertices(e));
                g.area * dot3(&self.sigma, &g.strain(&crate::fem::gather(&mesh.elements[e], u)))
            })
            .sum())
    }

    /// Mean `σxx` of a displacement field over the region.
    pub fn mean_sigma_xx(&self, mesh: &Mesh, material: &Material, u: &[f64]) -> Result<f64> {
        let elems = mesh.regions.get(&self.region).ok_or_else(|| Error::UnknownRegion(self.region.clone()))?;
        let h = material.hooke();
        Ok(elems
            .iter()
            .map(|&e| {
                let g = Geometry::new(&mesh.vertices(e));
                g.area * mat_vec(&h, &g.strain(&crate::fem::gather(&mesh.elements[e], u)))[0]
            })
            .sum::<f64>()
            / self.measure)
    }
}
