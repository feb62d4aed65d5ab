//! Subdomain operators and interface assembly algebra.
//!
//! Local dofs of subdomain `s` are split into Dirichlet dofs, interface
//! (boundary) dofs `b` and interior dofs `i`; the free ordering is `[b, i]`.
//! Interface dofs are those of nodes shared by two or more subdomains and not
//! on the Dirichlet boundary.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::fem::{assemble_load_unchecked, assemble_stiffness, LoadSet, Material};
use crate::linalg::{orthonormalize, symmetric_eigen, CsrMatrix, DenseMatrix, SkylineCholesky};
use crate::math::{dot, norm};
use crate::mesh::{Mesh, Partition};
use crate::{Error, Result};

/// Relative tolerance of the rigid-mode compatibility check in Neumann solves.
pub const COMPATIBILITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
struct NeumannFactor {
    /// Free-ordering indices kept in the reduced system.
    kept: Vec<usize>,
    factor: SkylineCholesky,
}

#[derive(Debug, Clone)]
pub struct SubdomainProblem {
    pub id: usize,
    /// Global ids of the elements owned by this subdomain (ascending).
    pub elements: Vec<usize>,
    pub mesh: Mesh,
    /// Local node → global node.
    pub global_nodes: Vec<usize>,
    pub k: CsrMatrix,
    pub is_dirichlet: Vec<bool>,
    pub boundary_dofs: Vec<usize>,
    pub interior_dofs: Vec<usize>,
    /// Orthonormal basis of the local kernel in free ordering `[b, i]`.
    pub rigid_modes: Vec<Vec<f64>>,
    kff: CsrMatrix,
    kib: CsrMatrix,
    kbi: CsrMatrix,
    kbb: CsrMatrix,
    kii: SkylineCholesky,
    neumann: NeumannFactor,
}

/// Per-subdomain data of one right-hand side.
#[derive(Debug, Clone)]
pub struct SubdomainLoad {
    /// Consistent nodal load over all local dofs.
    pub f: Vec<f64>,
    /// Dirichlet values (zero elsewhere).
    pub prescribed: Vec<f64>,
    /// `f_free − K_fd u_d` in free ordering.
    pub rhs: Vec<f64>,
}

impl SubdomainProblem {
    pub fn n_boundary(&self) -> usize {
        self.boundary_dofs.len()
    }

    pub fn n_free(&self) -> usize {
        self.boundary_dofs.len() + self.interior_dofs.len()
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        self.boundary_dofs.iter().chain(&self.interior_dofs).copied().collect()
    }

    pub fn is_floating(&self) -> bool {
        !self.is_dirichlet.iter().any(|d| *d)
    }

    /// Boundary rows of the rigid modes.
    pub fn rigid_boundary(&self) -> Vec<Vec<f64>> {
        self.rigid_modes.iter().map(|r| r[..self.n_boundary()].to_vec()).collect()
    }

    /// Rigid modes as full local nodal vectors.
    pub fn rigid_full(&self) -> Vec<Vec<f64>> {
        let free = self.free_dofs();
        self.rigid_modes
            .iter()
            .map(|r| {
                let mut v = vec![0.0; self.k.nrows];
                for (&d, x) in free.iter().zip(r) {
                    v[d] = *x;
                }
                v
            })
            .collect()
    }

    pub fn load(&self, f: Vec<f64>, prescribed: Vec<f64>) -> SubdomainLoad {
        let ku = self.k.mul_vec(&prescribed);
        let rhs = self.free_dofs().iter().map(|&d| f[d] - ku[d]).collect();
        SubdomainLoad { f, prescribed, rhs }
    }

    fn assemble_full(&self, load: &SubdomainLoad, free_values: &[f64]) -> Vec<f64> {
        let mut u = load.prescribed.clone();
        for (&d, v) in self.boundary_dofs.iter().chain(&self.interior_dofs).zip(free_values) {
            u[d] = *v;
        }
        u
    }

    /// Interior solve with prescribed interface trace; returns the full local
    /// field whose trace equals `trace` exactly.
    pub fn dirichlet_solve(&self, load: &SubdomainLoad, trace: &[f64]) -> Vec<f64> {
        let nb = self.n_boundary();
        let kib_t = self.kib.mul_vec(trace);
        let rhs: Vec<f64> = (0..self.interior_dofs.len()).map(|k| load.rhs[nb + k] - kib_t[k]).collect();
        let ui = self.kii.solve(&rhs);
        let mut free = trace.to_vec();
        free.extend(ui);
        self.assemble_full(load, &free)
    }

    /// Interface reaction `(K u − f)_b` of a full local field.
    pub fn reaction(&self, load: &SubdomainLoad, u: &[f64]) -> Vec<f64> {
        let ku = self.k.mul_vec(u);
        self.boundary_dofs.iter().map(|&d| ku[d] - load.f[d]).collect()
    }

    /// Schur complement product `S v = (K_bb − K_bi K_ii⁻¹ K_ib) v`.
    pub fn schur_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.kbb.mul_vec(v);
        if !self.interior_dofs.is_empty() {
            let w = self.kii.solve(&self.kib.mul_vec(v));
            let corr = self.kbi.mul_vec(&w);
            for (o, c) in out.iter_mut().zip(corr) {
                *o -= c;
            }
        }
        out
    }

    /// Particular solution of `K_ff u = rhs` orthogonal to the rigid modes.
    /// The right-hand side must be orthogonal to the rigid modes.
    pub fn neumann_solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let scale = norm(rhs).max(f64::MIN_POSITIVE);
        let defect = self.rigid_modes.iter().map(|r| dot(r, rhs).abs()).fold(0.0, f64::max);
        if defect > COMPATIBILITY_TOLERANCE * scale {
            return Err(Error::IncompatibleRhs { subdomain: self.id, defect });
        }
        let reduced: Vec<f64> = self.neumann.kept.iter().map(|&k| rhs[k]).collect();
        let sol = self.neumann.factor.solve(&reduced);
        let mut u = vec![0.0; self.n_free()];
        for (&k, v) in self.neumann.kept.iter().zip(sol) {
            u[k] = v;
        }
        for r in &self.rigid_modes {
            let c = dot(r, &u);
            crate::math::axpy(-c, r, &mut u);
        }
        Ok(u)
    }

    /// Full local field solving `K u = f + tᵀλ` (rigid component removed).
    pub fn neumann_full(&self, load: &SubdomainLoad, lambda: &[f64]) -> Result<Vec<f64>> {
        let mut rhs = load.rhs.clone();
        for (r, l) in rhs.iter_mut().zip(lambda) {
            *r += l;
        }
        let u = self.neumann_solve(&rhs)?;
        Ok(self.assemble_full(load, &u))
    }

    /// Harmonic extension with zero load: full local field (zero Dirichlet
    /// values) solving `K u = tᵀλ`.
    pub fn neumann_homogeneous(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let mut rhs = vec![0.0; self.n_free()];
        rhs[..lambda.len()].copy_from_slice(lambda);
        let u = self.neumann_solve(&rhs)?;
        let mut full = vec![0.0; self.k.nrows];
        for (&d, v) in self.boundary_dofs.iter().chain(&self.interior_dofs).zip(u) {
            full[d] = v;
        }
        Ok(full)
    }

    /// Trace (boundary values) of a full local field.
    pub fn trace(&self, u: &[f64]) -> Vec<f64> {
        self.boundary_dofs.iter().map(|&d| u[d]).collect()
    }

    /// `uᵀ K v` of two full local fields.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        self.k.bilinear(u, v)
    }

    /// `K_ff` in free ordering.
    pub fn free_stiffness(&self) -> &CsrMatrix {
        &self.kff
    }
}

/// Orthonormal basis of the rigid motions of the points `coords` restricted
/// to vanish on the `fixed` points. Vectors are laid out two entries per
/// point in `coords`.
pub fn rigid_kernel(coords: &[[f64; 2]], fixed: &[[f64; 2]]) -> Vec<Vec<f64>> {
    let all = coords.iter().chain(fixed);
    let count = (coords.len() + fixed.len()).max(1) as f64;
    let mut c = [0.0; 2];
    for p in all.clone() {
        c[0] += p[0] / count;
        c[1] += p[1] / count;
    }
    let diam = all.fold(0.0_f64, |m, p| m.max((p[0] - c[0]).abs()).max((p[1] - c[1]).abs())).max(f64::MIN_POSITIVE);
    let mode = |k: usize, p: &[f64; 2]| -> [f64; 2] {
        match k {
            0 => [1.0, 0.0],
            1 => [0.0, 1.0],
            _ => [-(p[1] - c[1]) / diam, (p[0] - c[0]) / diam],
        }
    };
    let mut m = DenseMatrix::zeros(3, 3);
    for p in fixed {
        let v = [mode(0, p), mode(1, p), mode(2, p)];
        for a in 0..3 {
            for b in 0..3 {
                m[(a, b)] += v[a][0] * v[b][0] + v[a][1] * v[b][1];
            }
        }
    }
    let (vals, vecs) = symmetric_eigen(&m);
    let tol = 1e-10 * (1.0 + fixed.len() as f64);
    let mut raw = Vec::new();
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() > tol {
            continue;
        }
        let coef = [vecs[(0, k)], vecs[(1, k)], vecs[(2, k)]];
        let mut v = Vec::with_capacity(2 * coords.len());
        for p in coords {
            let mut x = [0.0; 2];
            for (a, w) in coef.iter().enumerate() {
                let r = mode(a, p);
                x[0] += w * r[0];
                x[1] += w * r[1];
            }
            v.extend(x);
        }
        raw.push(v);
    }
    orthonormalize(&raw, 1e-8).0
}

/// Picks `modes.len()` rows making the restriction of `modes` nonsingular,
/// by complete-pivoting elimination.
pub(crate) fn kernel_pivots(modes: &[Vec<f64>]) -> Vec<usize> {
    let k = modes.len();
    if k == 0 {
        return Vec::new();
    }
    let n = modes[0].len();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| modes.iter().map(|r| r[i]).collect()).collect();
    let mut rows_left: Vec<bool> = vec![true; n];
    let mut cols_left: Vec<bool> = vec![true; k];
    let mut pivots = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = (0, 0, -1.0);
        for i in (0..n).filter(|&i| rows_left[i]) {
            for j in (0..k).filter(|&j| cols_left[j]) {
                if m[i][j].abs() > best.2 {
                    best = (i, j, m[i][j].abs());
                }
            }
        }
        let (pi, pj, _) = best;
        rows_left[pi] = false;
        cols_left[pj] = false;
        pivots.push(pi);
        let prow = m[pi].clone();
        for i in (0..n).filter(|&i| rows_left[i]) {
            let f = m[i][pj] / prow[pj];
            for j in 0..k {
                m[i][j] -= f * prow[j];
            }
        }
    }
    pivots.sort_unstable();
    pivots
}

/// One connection row of the dual assembly: the `comp` component of
/// `node` seen from subdomains `lo < hi` (sign `+` on `lo`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Connection {
    pub node: usize,
    pub comp: usize,
    pub lo: usize,
    pub hi: usize,
}

#[derive(Debug, Clone)]
pub struct InterfaceAlgebra {
    /// `(global node, component)` of each global interface dof.
    pub dof_keys: Vec<(usize, usize)>,
    pub multiplicity: Vec<usize>,
    /// Per subdomain: local boundary index → global interface dof (`A^(s)`).
    pub primal: Vec<Vec<usize>>,
    pub connections: Vec<Connection>,
    /// Per subdomain: `(connection row, local boundary index, sign)` (`B^(s)`).
    pub dual: Vec<Vec<(usize, usize, f64)>>,
    /// Per connection: the multiplicity of its dof.
    pub connection_multiplicity: Vec<usize>,
}

impl InterfaceAlgebra {
    pub fn n_interface(&self) -> usize {
        self.dof_keys.len()
    }

    pub fn n_connections(&self) -> usize {
        self.connections.len()
    }

    /// `Σ_s A^(s) v_s`.
    pub fn assemble(&self, local: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_interface()];
        for (map, v) in self.primal.iter().zip(local) {
            for (&g, x) in map.iter().zip(v) {
                out[g] += x;
            }
        }
        out
    }

    /// `A^(s)ᵀ x`.
    pub fn restrict(&self, s: usize, x: &[f64]) -> Vec<f64> {
        self.primal[s].iter().map(|&g| x[g]).collect()
    }

    /// `Σ_s B^(s) v_s`.
    pub fn jump(&self, local: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_connections()];
        for (entries, v) in self.dual.iter().zip(local) {
            for &(row, b, sign) in entries {
                out[row] += sign * v[b];
            }
        }
        out
    }

    /// `B^(s)ᵀ μ`, optionally scaled by the inverse connection multiplicity.
    pub fn dual_transpose(&self, s: usize, nb: usize, mu: &[f64], scaled: bool) -> Vec<f64> {
        let mut out = vec![0.0; nb];
        for &(row, b, sign) in &self.dual[s] {
            let w = if scaled { 1.0 / self.connection_multiplicity[row] as f64 } else { 1.0 };
            out[b] += sign * w * mu[row];
        }
        out
    }

    /// `B̃^(s) v` accumulated into `out` (inverse multiplicity scaling).
    pub fn dual_scaled_accumulate(&self, s: usize, v: &[f64], out: &mut [f64]) {
        for &(row, b, sign) in &self.dual[s] {
            out[row] += sign * v[b] / self.connection_multiplicity[row] as f64;
        }
    }
}

/// A substructured problem: global data plus per-subdomain operators.
#[derive(Debug, Clone)]
pub struct Substructured {
    pub mesh: Mesh,
    pub partition: Partition,
    pub material: Material,
    pub problems: Vec<SubdomainProblem>,
    pub algebra: InterfaceAlgebra,
    pub dirichlet_nodes: BTreeSet<usize>,
}

/// One right-hand side on a substructured problem.
#[derive(Debug, Clone)]
pub struct LoadCase {
    pub loads: LoadSet,
    pub degree: usize,
    pub subdomains: Vec<SubdomainLoad>,
}

impl Substructured {
    pub fn new(mesh: &Mesh, partition: &Partition, material: &Material) -> Result<Self> {
        if partition.subdomain_of.len() != mesh.n_elements() {
            return Err(Error::InvalidPartition("partition does not match the mesh".into()));
        }
        let dirichlet_nodes = mesh.dirichlet_nodes();
        let node_subs = partition.node_subdomains(mesh);
        let iface: Vec<usize> =
            partition.interface_nodes.iter().copied().filter(|n| !dirichlet_nodes.contains(n)).collect();
        let mut dof_keys = Vec::with_capacity(2 * iface.len());
        let mut multiplicity = Vec::with_capacity(2 * iface.len());
        let mut dof_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &n in &iface {
            for c in 0..2 {
                dof_of.insert((n, c), dof_keys.len());
                dof_keys.push((n, c));
                multiplicity.push(node_subs[n].len());
            }
        }
        let mut connections = Vec::new();
        let mut connection_multiplicity = Vec::new();
        for &n in &iface {
            let subs: Vec<usize> = node_subs[n].iter().copied().collect();
            for c in 0..2 {
                for (a, &lo) in subs.iter().enumerate() {
                    for &hi in &subs[a + 1..] {
                        connections.push(Connection { node: n, comp: c, lo, hi });
                        connection_multiplicity.push(subs.len());
                    }
                }
            }
        }
        let mut conn_rows: BTreeMap<(usize, usize), Vec<(usize, usize, f64)>> = BTreeMap::new();
        for (row, cn) in connections.iter().enumerate() {
            conn_rows.entry((cn.node, cn.comp)).or_default().push((row, cn.lo, 1.0));
            conn_rows.entry((cn.node, cn.comp)).or_default().push((row, cn.hi, -1.0));
        }

        let mut problems = Vec::with_capacity(partition.n_subdomains);
        let mut primal = Vec::with_capacity(partition.n_subdomains);
        let mut dual = Vec::with_capacity(partition.n_subdomains);
        for s in 0..partition.n_subdomains {
            let elements = partition.elements_of(s);
            let (local, global_nodes) = mesh.submesh(&elements)?;
            let all: Vec<usize> = (0..local.n_elements()).collect();
            if !local.is_edge_connected(&all) {
                return Err(Error::DisconnectedSubdomain { subdomain: s });
            }
            let k = assemble_stiffness(&local, material)?;
            let nd = local.n_dofs();
            let mut is_dirichlet = vec![false; nd];
            let mut boundary_dofs = Vec::new();
            let mut interior_dofs = Vec::new();
            let mut a_map = Vec::new();
            let mut b_entries = Vec::new();
            for (ln, &gn) in global_nodes.iter().enumerate() {
                for c in 0..2 {
                    let d = 2 * ln + c;
                    if dirichlet_nodes.contains(&gn) {
                        is_dirichlet[d] = true;
                    } else if let Some(&g) = dof_of.get(&(gn, c)) {
                        let b = boundary_dofs.len();
                        boundary_dofs.push(d);
                        a_map.push(g);
                        for &(row, sub, sign) in &conn_rows[&(gn, c)] {
                            if sub == s {
                                b_entries.push((row, b, sign));
                            }
                        }
                    } else {
                        interior_dofs.push(d);
                    }
                }
            }
            let free: Vec<usize> = boundary_dofs.iter().chain(&interior_dofs).copied().collect();
            let kff = k.submatrix(&free, &free);
            let kii = SkylineCholesky::factor(&k.submatrix(&interior_dofs, &interior_dofs))?;
            let kib = k.submatrix(&interior_dofs, &boundary_dofs);
            let kbi = k.submatrix(&boundary_dofs, &interior_dofs);
            let kbb = k.submatrix(&boundary_dofs, &boundary_dofs);

            let free_coords: Vec<[f64; 2]> = free
                .iter()
                .step_by(1)
                .filter(|&&d| d % 2 == 0)
                .map(|&d| local.nodes[d / 2])
                .collect();
            let fixed: Vec<[f64; 2]> = global_nodes
                .iter()
                .enumerate()
                .filter(|(_, g)| dirichlet_nodes.contains(g))
                .map(|(ln, _)| local.nodes[ln])
                .collect();
            // node-ordered modes → free ordering
            let node_modes = rigid_kernel(&free_coords, &fixed);
            let node_index: BTreeMap<usize, usize> = free
                .iter()
                .filter(|&&d| d % 2 == 0)
                .enumerate()
                .map(|(i, &d)| (d / 2, i))
                .collect();
            let rigid_modes: Vec<Vec<f64>> = node_modes
                .iter()
                .map(|m| free.iter().map(|&d| m[2 * node_index[&(d / 2)] + d % 2]).collect())
                .collect();
            let pivots = kernel_pivots(&rigid_modes);
            let kept: Vec<usize> = (0..free.len()).filter(|i| pivots.binary_search(i).is_err()).collect();
            let factor = SkylineCholesky::factor(&kff.submatrix(&kept, &kept)).map_err(|_| {
                Error::SingularSystem(alloc::format!("subdomain {s}: regularized local stiffness is singular"))
            })?;
            problems.push(SubdomainProblem {
                id: s,
                elements,
                mesh: local,
                global_nodes,
                k,
                is_dirichlet,
                boundary_dofs,
                interior_dofs,
                rigid_modes,
                kff,
                kib,
                kbi,
                kbb,
                kii,
                neumann: NeumannFactor { kept, factor },
            });
            primal.push(a_map);
            dual.push(b_entries);
        }
        let algebra = InterfaceAlgebra { dof_keys, multiplicity, primal, connections, dual, connection_multiplicity };
        Ok(Self { mesh: mesh.clone(), partition: partition.clone(), material: *material, problems, algebra, dirichlet_nodes })
    }

    pub fn n_subdomains(&self) -> usize {
        self.problems.len()
    }

    /// Builds the per-subdomain loads of one right-hand side.
    pub fn load_case(&self, loads: &LoadSet, degree: usize) -> Result<LoadCase> {
        loads.validate(&self.mesh)?;
        let mut subdomains = Vec::with_capacity(self.problems.len());
        for p in &self.problems {
            let f = assemble_load_unchecked(&p.mesh, loads, degree)?;
            let mut prescribed = vec![0.0; p.k.nrows];
            if let Some(g) = &loads.dirichlet {
                for (ln, &gn) in p.global_nodes.iter().enumerate() {
                    if self.dirichlet_nodes.contains(&gn) {
                        let v = g.eval(p.mesh.nodes[ln]);
                        prescribed[2 * ln] = v[0];
                        prescribed[2 * ln + 1] = v[1];
                    }
                }
            }
            subdomains.push(p.load(f, prescribed));
        }
        Ok(LoadCase { loads: loads.clone(), degree, subdomains })
    }

    /// Restricts a global nodal field to every subdomain.
    pub fn scatter(&self, u: &[f64]) -> Vec<Vec<f64>> {
        self.problems
            .iter()
            .map(|p| p.global_nodes.iter().flat_map(|&g| [u[2 * g], u[2 * g + 1]]).collect())
            .collect()
    }

    /// Global nodal field from per-subdomain fields, averaging shared nodes.
    pub fn gather_mean(&self, local: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh.n_dofs()];
        let mut count = vec![0usize; self.mesh.n_nodes()];
        for (p, u) in self.problems.iter().zip(local) {
            for (ln, &g) in p.global_nodes.iter().enumerate() {
                out[2 * g] += u[2 * ln];
                out[2 * g + 1] += u[2 * ln + 1];
                count[g] += 1;
            }
        }
        for (g, c) in count.iter().enumerate() {
            if *c > 0 {
                out[2 * g] /= *c as f64;
                out[2 * g + 1] /= *c as f64;
            }
        }
        out
    }
}

/// Splits a global problem into subdomain operators and one load case.
pub fn split_problem(
    mesh: &Mesh,
    partition: &Partition,
    material: &Material,
    loads: &LoadSet,
    degree: usize,
) -> Result<(Substructured, LoadCase)> {
    let sub = Substructured::new(mesh, partition, material)?;
    let case = sub.load_case(loads, degree)?;
    Ok((sub, case))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Hypothesis;
    use crate::mesh::{build_structured_square, partition_regular};

    #[test]
    fn kernel_dimensions() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert_eq!(rigid_kernel(&pts, &[]).len(), 3);
        assert_eq!(rigid_kernel(&pts[1..], &pts[..1]).len(), 1);
        assert_eq!(rigid_kernel(&pts[2..], &pts[..2]).len(), 0);
    }

    #[test]
    fn floating_subdomain_has_three_modes() {
        let mesh = build_structured_square(6, 1.0).unwrap();
        let part = partition_regular(&mesh, 3, 3).unwrap();
        let mat = Material::new(1.0, 0.3, Hypothesis::PlaneStrain).unwrap();
        let sub = Substructured::new(&mesh, &part, &mat).unwrap();
        assert_eq!(sub.problems[4].rigid_modes.len(), 3);
        assert_eq!(sub.problems[0].rigid_modes.len(), 0);
        for p in &sub.problems {
            for r in &p.rigid_modes {
                let kr = p.free_stiffness().mul_vec(r);
                assert!(crate::math::max_abs(&kr) < 1e-10);
            }
        }
    }
}
