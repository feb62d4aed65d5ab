//! Flux-free star-patch recovery per subdomain.
//!
//! For each coarse vertex `i` of a subdomain, the local problem
//! `a(eⁱ, v) = R(φᵢ (v − Π_H v))` is solved on the refined patch with no
//! constraint on the patch boundary (only true Dirichlet nodes are fixed).
//! `R` is the subdomain residual of `u_N` with the interface reactions `λ_N`
//! densified into edge tractions. Then
//!
//! - `σ̂ = σ(u_N) + Σᵢ 𝓗ε(eⁱ)` is statically admissible against the whole
//!   refined test space of the subdomain,
//! - `w = Σ_{i ∉ interface} φᵢ eⁱ` (nodal interpolation) is continuous and
//!   vanishes on the interface and the Dirichlet boundary.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::ddsolver::IterationFields;
use crate::fem::{mat_vec, outward_normal, quad_form, Geometry, Mat3, Traction, Voigt};
use crate::linalg::{symmetric_eigen, DenseCholesky, DenseMatrix};
use crate::math::max_abs;
use crate::mesh::{refine_uniform, BoundaryTag, Refinement};
use crate::quadrature::{segment_length, LineRule, TriangleRule};
use crate::substructure::{rigid_kernel, LoadCase, Substructured};
use crate::{Error, Result};

/// Relative tolerance of the statically-admissible residual certificate.
pub const SA_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
struct Segment {
    nodes: [usize; 2],
    /// Coarse local end nodes of the parent edge, in boundary orientation.
    coarse: [usize; 2],
    /// Parameter along the coarse edge of each segment node.
    t: [f64; 2],
    /// `∫ g λ_m ψ_k` for `m` in `coarse`, `k` in `nodes` (Neumann only).
    moments: [[[f64; 2]; 2]; 2],
}

#[derive(Debug, Clone)]
struct Patch {
    center: usize,
    children: Vec<usize>,
    nodes: Vec<usize>,
    segments: Vec<usize>,
}

#[derive(Debug, Clone)]
struct SubdomainSetup {
    refinement: Refinement,
    child_geom: Vec<Geometry>,
    parent_geom: Vec<Geometry>,
    /// Parent barycentrics at child vertices: `lam[c][m][j]`.
    lam: Vec<[[f64; 3]; 3]>,
    /// `∫_c f λ_m ψ_j`.
    body: Vec<[[[f64; 2]; 3]; 3]>,
    neumann: Vec<Segment>,
    interface: Vec<Segment>,
    region_stress: Vec<Voigt>,
    patches: Vec<Patch>,
    fine_dirichlet: Vec<bool>,
    fine_interface: Vec<bool>,
    coarse_interface: Vec<bool>,
    /// `L(ψ_k)` without interface tractions.
    load: Vec<f64>,
}

#[derive(Debug, Clone)]
struct InterfaceEdge {
    len: f64,
    /// `(subdomain, local coarse element, local a, local b)` with `a` the
    /// lower global node; first side is the lower subdomain id.
    sides: [(usize, usize, usize, usize); 2],
    /// Outward normal of the first side.
    normal: [f64; 2],
    /// Indices of the end nodes in `RecoverySetup::nodes`.
    ends: [usize; 2],
}

#[derive(Debug, Clone)]
struct InterfaceNode {
    free: bool,
    /// `(subdomain, boundary index of the x component)`.
    members: Vec<(usize, Option<usize>)>,
    /// `(edge, is endpoint a)`.
    edges: Vec<(usize, bool)>,
    /// `(subdomain, local coarse element, area)` around the node.
    elements: Vec<(usize, usize, f64)>,
}

/// Load- and geometry-dependent precomputation for one right-hand side.
#[derive(Debug, Clone)]
pub struct RecoverySetup {
    pub factor: usize,
    pub degree: usize,
    subdomains: Vec<SubdomainSetup>,
    edges: Vec<InterfaceEdge>,
    nodes: Vec<InterfaceNode>,
}

/// Solution of one star-patch problem.
#[derive(Debug, Clone)]
pub struct PatchSolution {
    pub vertex: usize,
    /// Refined local nodes of the patch.
    pub nodes: Vec<usize>,
    /// Two values per patch node.
    pub values: Vec<f64>,
    /// Weighted residual right-hand side before the `Π_H` correction.
    pub weighted_residual: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SubdomainRecovery {
    /// Statically admissible stress per refined child element.
    pub sigma_hat: Vec<Voigt>,
    /// `σ̂ − 𝓗ε(u_D)` per child.
    pub delta_d: Vec<Voigt>,
    pub child_area: Vec<f64>,
    /// Continuous estimate on the refined mesh (two values per node).
    pub w: Vec<f64>,
    /// Refined stiffness times `w`.
    pub k_w: Vec<f64>,
    /// `L(ψ) − a(u_D, ψ)` for every refined dof (no interface term).
    pub res_d: Vec<f64>,
    /// `L(ψ) − a(u_N, ψ)` for every refined dof (no interface term).
    pub res_n: Vec<f64>,
    pub ecr_n_sq: f64,
    pub ecr_d_sq: f64,
    pub w_energy_sq: f64,
    /// Largest relative SA residual over the refined test basis.
    pub sa_residual: f64,
    pub patches: Vec<PatchSolution>,
}

impl SubdomainRecovery {
    pub fn r_d_w(&self) -> f64 {
        crate::math::dot(&self.res_d, &self.w)
    }

    pub fn r_n_w(&self) -> f64 {
        crate::math::dot(&self.res_n, &self.w)
    }
}

#[derive(Debug, Clone)]
pub struct AdmissibleRecovery {
    pub iteration: usize,
    pub subdomains: Vec<SubdomainRecovery>,
    pub sa_residual: f64,
    /// True when `w` vanishes identically.
    pub w_degenerate: bool,
}

impl RecoverySetup {
    pub fn new(sub: &Substructured, case: &LoadCase, factor: usize) -> Result<Self> {
        let loads = &case.loads;
        let degree = case.degree;
        let owners = sub.mesh.edge_owners();
        let part = &sub.partition;
        let mut local_elem: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); sub.n_subdomains()];
        let mut local_node: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); sub.n_subdomains()];
        for (s, p) in sub.problems.iter().enumerate() {
            for (l, &e) in p.elements.iter().enumerate() {
                local_elem[s].insert(e, l);
            }
            for (l, &g) in p.global_nodes.iter().enumerate() {
                local_node[s].insert(g, l);
            }
        }
        let mut edges = Vec::new();
        let mut edge_keys = Vec::new();
        let mut iface_edge_set: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); sub.n_subdomains()];
        for (&(a, b), own) in &owners {
            if own.len() != 2 {
                continue;
            }
            let (s0, s1) = (part.subdomain_of[own[0].0], part.subdomain_of[own[1].0]);
            if s0 == s1 {
                continue;
            }
            let (lo, hi) = if s0 < s1 { (own[0], own[1]) } else { (own[1], own[0]) };
            let side = |(e, _): (usize, usize)| {
                let s = part.subdomain_of[e];
                (s, local_elem[s][&e], local_node[s][&a], local_node[s][&b])
            };
            let sides = [side(lo), side(hi)];
            let el = sub.mesh.elements[lo.0];
            let k = lo.1;
            let (p, q) = (sub.mesh.nodes[el[k]], sub.mesh.nodes[el[(k + 1) % 3]]);
            iface_edge_set[sides[0].0].insert((sides[0].2.min(sides[0].3), sides[0].2.max(sides[0].3)));
            iface_edge_set[sides[1].0].insert((sides[1].2.min(sides[1].3), sides[1].2.max(sides[1].3)));
            edge_keys.push((a, b));
            edges.push(InterfaceEdge { len: segment_length(p, q), sides, normal: outward_normal(p, q), ends: [0, 0] });
        }
        let node_subs = part.node_subdomains(&sub.mesh);
        let mut nodes = Vec::new();
        let mut node_index: BTreeMap<usize, usize> = BTreeMap::new();
        for &n in &part.interface_nodes {
            node_index.insert(n, nodes.len());
            let members = node_subs[n]
                .iter()
                .map(|&s| {
                    let p = &sub.problems[s];
                    let ln = local_node[s][&n];
                    (s, p.boundary_dofs.iter().position(|&d| d == 2 * ln))
                })
                .collect();
            nodes.push(InterfaceNode {
                free: !sub.dirichlet_nodes.contains(&n),
                members,
                edges: Vec::new(),
                elements: Vec::new(),
            });
        }
        for (e, el) in sub.mesh.elements.iter().enumerate() {
            for v in el {
                if let Some(&i) = node_index.get(v) {
                    let s = part.subdomain_of[e];
                    nodes[i].elements.push((s, local_elem[s][&e], sub.mesh.area(e)));
                }
            }
        }
        for (i, &(a, b)) in edge_keys.iter().enumerate() {
            edges[i].ends = [node_index[&a], node_index[&b]];
            nodes[node_index[&a]].edges.push((i, true));
            nodes[node_index[&b]].edges.push((i, false));
        }

        let rule = TriangleRule::new(degree);
        let line = LineRule::new(degree);
        let mut subdomains = Vec::with_capacity(sub.n_subdomains());
        for (s, p) in sub.problems.iter().enumerate() {
            let refinement = refine_uniform(&p.mesh, factor)?;
            let fine = &refinement.mesh;
            let prol = &refinement.prolongation;
            let r2 = factor * factor;
            let parent_geom: Vec<Geometry> = (0..p.mesh.n_elements()).map(|e| Geometry::new(&p.mesh.vertices(e))).collect();
            let child_geom: Vec<Geometry> = (0..fine.n_elements()).map(|c| Geometry::new(&fine.vertices(c))).collect();
            let weight = |k: usize, n: usize| prol.rows[k].iter().find(|(c, _)| *c == n).map_or(0.0, |(_, w)| *w);
            let mut lam = Vec::with_capacity(fine.n_elements());
            let mut body = Vec::with_capacity(fine.n_elements());
            for c in 0..fine.n_elements() {
                let parent = p.mesh.elements[c / r2];
                let kc = fine.elements[c];
                let mut l = [[0.0; 3]; 3];
                for m in 0..3 {
                    for j in 0..3 {
                        l[m][j] = weight(kc[j], parent[m]);
                    }
                }
                lam.push(l);
                let mut mom = [[[0.0; 2]; 3]; 3];
                if let Some(f) = &loads.body_force {
                    let v = rule.integrate::<18>(&fine.vertices(c), |x, b| {
                        let fx = f.eval(x);
                        let mut out = [0.0; 18];
                        for m in 0..3 {
                            let lm = l[m][0] * b[0] + l[m][1] * b[1] + l[m][2] * b[2];
                            for j in 0..3 {
                                out[6 * m + 2 * j] = fx[0] * lm * b[j];
                                out[6 * m + 2 * j + 1] = fx[1] * lm * b[j];
                            }
                        }
                        out
                    });
                    for m in 0..3 {
                        for j in 0..3 {
                            mom[m][j] = [v[6 * m + 2 * j], v[6 * m + 2 * j + 1]];
                        }
                    }
                }
                body.push(mom);
            }

            let mut neumann = Vec::new();
            let mut interface = Vec::new();
            for be in &fine.boundary {
                let [k0, k1] = be.nodes;
                let mut coarse: Vec<usize> =
                    prol.rows[k0].iter().chain(&prol.rows[k1]).map(|(c, _)| *c).collect::<BTreeSet<_>>().into_iter().collect();
                if coarse.len() != 2 {
                    return Err(Error::InvalidMesh("refined boundary segment does not lie on one coarse edge".into()));
                }
                // orient the coarse edge along the segment
                let t0 = weight(k0, coarse[1]);
                let t1 = weight(k1, coarse[1]);
                if t1 < t0 {
                    coarse.swap(0, 1);
                }
                let coarse = [coarse[0], coarse[1]];
                let t = [weight(k0, coarse[1]), weight(k1, coarse[1])];
                let key = (coarse[0].min(coarse[1]), coarse[0].max(coarse[1]));
                let mut seg = Segment { nodes: [k0, k1], coarse, t, moments: [[[0.0; 2]; 2]; 2] };
                if iface_edge_set[s].contains(&key) {
                    interface.push(seg);
                    continue;
                }
                if let BoundaryTag::Neumann(name) = &be.tag {
                    if let Some(tr) = loads.tractions.get(name) {
                        seg.moments = segment_moments(fine.nodes[k0], fine.nodes[k1], t, tr, &line);
                        neumann.push(seg);
                    }
                }
            }

            let region_stress = loads.element_region_stress(&p.mesh);
            let coarse_interface: Vec<bool> =
                p.global_nodes.iter().map(|g| part.interface_nodes.contains(g)).collect();
            let mut fine_dirichlet = vec![false; fine.n_nodes()];
            for be in &fine.boundary {
                if be.tag == BoundaryTag::Dirichlet {
                    fine_dirichlet[be.nodes[0]] = true;
                    fine_dirichlet[be.nodes[1]] = true;
                }
            }
            for (k, g) in p.global_nodes.iter().enumerate() {
                fine_dirichlet[k] |= sub.dirichlet_nodes.contains(g);
            }
            let mut fine_interface = vec![false; fine.n_nodes()];
            for sg in &interface {
                fine_interface[sg.nodes[0]] = true;
                fine_interface[sg.nodes[1]] = true;
            }

            let node_elems = p.mesh.node_elements();
            let mut seg_of_node: Vec<Vec<usize>> = vec![Vec::new(); p.mesh.n_nodes()];
            for (i, sg) in neumann.iter().enumerate() {
                seg_of_node[sg.coarse[0]].push(i);
                seg_of_node[sg.coarse[1]].push(i);
            }
            let patches = node_elems
                .iter()
                .enumerate()
                .map(|(i, els)| {
                    let children: Vec<usize> = els.iter().flat_map(|&e| e * r2..(e + 1) * r2).collect();
                    let nodes: Vec<usize> =
                        children.iter().flat_map(|&c| fine.elements[c]).collect::<BTreeSet<_>>().into_iter().collect();
                    Patch { center: i, children, nodes, segments: seg_of_node[i].clone() }
                })
                .collect();

            let mut load = vec![0.0; fine.n_dofs()];
            for c in 0..fine.n_elements() {
                let kc = fine.elements[c];
                for j in 0..3 {
                    for m in 0..3 {
                        load[2 * kc[j]] += body[c][m][j][0];
                        load[2 * kc[j] + 1] += body[c][m][j][1];
                    }
                }
                let pre = region_stress[c / r2];
                if pre != [0.0; 3] {
                    let w = child_geom[c].stress_work(&pre);
                    for j in 0..3 {
                        load[2 * kc[j]] += w[2 * j];
                        load[2 * kc[j] + 1] += w[2 * j + 1];
                    }
                }
            }
            for sg in &neumann {
                for (kk, &k) in sg.nodes.iter().enumerate() {
                    for m in 0..2 {
                        load[2 * k] += sg.moments[m][kk][0];
                        load[2 * k + 1] += sg.moments[m][kk][1];
                    }
                }
            }

            subdomains.push(SubdomainSetup {
                refinement,
                child_geom,
                parent_geom,
                lam,
                body,
                neumann,
                interface,
                region_stress,
                patches,
                fine_dirichlet,
                fine_interface,
                coarse_interface,
                load,
            });
        }
        Ok(Self { factor, degree, subdomains, edges, nodes })
    }

    /// Refined mesh of subdomain `s`.
    pub fn refinement(&self, s: usize) -> &Refinement {
        &self.subdomains[s].refinement
    }

    /// Whether refined node `k` of subdomain `s` is a Dirichlet node.
    pub fn is_fine_dirichlet(&self, s: usize, k: usize) -> bool {
        self.subdomains[s].fine_dirichlet[k]
    }

    /// Refined load vector `L(ψ)` of subdomain `s` (no interface term).
    pub fn load_vector(&self, s: usize) -> &[f64] {
        &self.subdomains[s].load
    }
}

fn segment_moments(a: [f64; 2], b: [f64; 2], t: [f64; 2], tr: &Traction, line: &LineRule) -> [[[f64; 2]; 2]; 2] {
    let len = segment_length(a, b);
    let n = outward_normal(a, b);
    let mut out = [[[0.0; 2]; 2]; 2];
    for (s, w) in line.points.iter().zip(&line.weights) {
        let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
        let g = tr.eval(x, n);
        let tc = t[0] + s * (t[1] - t[0]);
        let lm = [1.0 - tc, tc];
        let psi = [1.0 - s, *s];
        for m in 0..2 {
            for k in 0..2 {
                for d in 0..2 {
                    out[m][k][d] += w * len * g[d] * lm[m] * psi[k];
                }
            }
        }
    }
    out
}

/// Linear traction per interface edge: `(q at local a, q at local b)` keyed
/// by the local coarse node pair, per subdomain.
type EdgeTractions = Vec<BTreeMap<(usize, usize), ([f64; 2], [f64; 2])>>;

fn interface_tractions(setup: &RecoverySetup, sub: &Substructured, fields: &IterationFields) -> Result<EdgeTractions> {
    let h = sub.material.hooke();
    let eff = |s: usize, e: usize| -> Voigt {
        let p = &sub.problems[s];
        let g = &setup.subdomains[s].parent_geom[e];
        let st = mat_vec(&h, &g.strain(&crate::fem::gather(&p.mesh.elements[e], &fields.u_n[s])));
        let pre = setup.subdomains[s].region_stress[e];
        [st[0] - pre[0], st[1] - pre[1], st[2] - pre[2]]
    };
    // area-weighted nodal stress over both sides of the interface
    let smooth: Vec<Voigt> = setup
        .nodes
        .iter()
        .map(|n| {
            let mut acc = [0.0; 3];
            let mut area = 0.0;
            for &(s, e, a) in &n.elements {
                let st = eff(s, e);
                for t in 0..3 {
                    acc[t] += a * st[t];
                }
                area += a;
            }
            [acc[0] / area, acc[1] / area, acc[2] / area]
        })
        .collect();
    // nodal forces on the first (lower) side: force[edge][end] per component
    let mut force: Vec<[[f64; 2]; 2]> = setup
        .edges
        .iter()
        .map(|ed| {
            let q = ed.ends.map(|i| sigma_dot(&smooth[i], ed.normal));
            let c = ed.len / 6.0;
            [
                [c * (2.0 * q[0][0] + q[1][0]), c * (2.0 * q[0][1] + q[1][1])],
                [c * (q[0][0] + 2.0 * q[1][0]), c * (q[0][1] + 2.0 * q[1][1])],
            ]
        })
        .collect();
    for node in &setup.nodes {
        if !node.free || node.edges.is_empty() {
            continue;
        }
        let subs: Vec<usize> = node.members.iter().map(|m| m.0).collect();
        let m = subs.len();
        let ne = node.edges.len();
        let mut d = DenseMatrix::zeros(m, ne);
        for (j, &(e, _)) in node.edges.iter().enumerate() {
            let ed = &setup.edges[e];
            for (i, &s) in subs.iter().enumerate() {
                if s == ed.sides[0].0 {
                    d[(i, j)] = 1.0;
                } else if s == ed.sides[1].0 {
                    d[(i, j)] = -1.0;
                }
            }
        }
        let l = d.matmul(&d.transpose());
        let (vals, vecs) = symmetric_eigen(&l);
        let top = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for comp in 0..2 {
            let mut defect = vec![0.0; m];
            for (i, &(s, b)) in node.members.iter().enumerate() {
                let lam = b.map_or(0.0, |b| fields.lambda_n[s][b + comp]);
                let mut acc = 0.0;
                for (j, &(e, is_a)) in node.edges.iter().enumerate() {
                    acc += d[(i, j)] * force[e][if is_a { 0 } else { 1 }][comp];
                }
                defect[i] = lam - acc;
            }
            // y = L⁺ defect
            let mut y = vec![0.0; m];
            for (k, &v) in vals.iter().enumerate() {
                if v.abs() <= 1e-12 * top {
                    continue;
                }
                let c: f64 = (0..m).map(|i| vecs[(i, k)] * defect[i]).sum::<f64>() / v;
                for i in 0..m {
                    y[i] += c * vecs[(i, k)];
                }
            }
            for (j, &(e, is_a)) in node.edges.iter().enumerate() {
                let delta: f64 = (0..m).map(|i| d[(i, j)] * y[i]).sum();
                force[e][if is_a { 0 } else { 1 }][comp] += delta;
            }
        }
    }
    let mut out: EdgeTractions = vec![BTreeMap::new(); sub.n_subdomains()];
    for (ed, f) in setup.edges.iter().zip(&force) {
        for (side, sign) in [(0usize, 1.0), (1, -1.0)] {
            let (s, _, la, lb) = ed.sides[side];
            let fa = [sign * f[0][0], sign * f[0][1]];
            let fb = [sign * f[1][0], sign * f[1][1]];
            let c = 2.0 / ed.len;
            let qa = [c * (2.0 * fa[0] - fb[0]), c * (2.0 * fa[1] - fb[1])];
            let qb = [c * (2.0 * fb[0] - fa[0]), c * (2.0 * fb[1] - fa[1])];
            out[s].insert((la, lb), (qa, qb));
        }
    }
    Ok(out)
}

fn interface_moments(seg: &Segment, fine_nodes: &[[f64; 2]], q: ([f64; 2], [f64; 2]), swapped: bool) -> [[[f64; 2]; 2]; 2] {
    // traction linear along the coarse edge, q.0 at coarse[0] unless swapped
    let (qa, qb) = if swapped { (q.1, q.0) } else { q };
    let a = fine_nodes[seg.nodes[0]];
    let b = fine_nodes[seg.nodes[1]];
    let len = segment_length(a, b);
    let (xs, ws) = crate::quadrature::gauss_legendre(3);
    let mut out = [[[0.0; 2]; 2]; 2];
    for (x, w) in xs.iter().zip(&ws) {
        let s = 0.5 * (x + 1.0);
        let w = 0.5 * w;
        let tc = seg.t[0] + s * (seg.t[1] - seg.t[0]);
        let g = [qa[0] * (1.0 - tc) + qb[0] * tc, qa[1] * (1.0 - tc) + qb[1] * tc];
        let lm = [1.0 - tc, tc];
        let psi = [1.0 - s, s];
        for m in 0..2 {
            for k in 0..2 {
                for d in 0..2 {
                    out[m][k][d] += w * len * g[d] * lm[m] * psi[k];
                }
            }
        }
    }
    out
}

/// Builds the admissible stress and the continuous estimate for every
/// subdomain from one iteration bundle.
pub fn recover(
    setup: &RecoverySetup,
    sub: &Substructured,
    fields: &IterationFields,
    keep_patches: bool,
) -> Result<AdmissibleRecovery> {
    let tractions = interface_tractions(setup, sub, fields)?;
    let mut subdomains = Vec::with_capacity(sub.n_subdomains());
    let mut worst = 0.0_f64;
    for s in 0..sub.n_subdomains() {
        let rec = recover_subdomain(setup, sub, fields, s, &tractions[s], keep_patches)?;
        worst = worst.max(rec.sa_residual);
        subdomains.push(rec);
    }
    let w_degenerate = subdomains.iter().all(|r| r.w.iter().all(|v| *v == 0.0));
    Ok(AdmissibleRecovery { iteration: fields.iteration, subdomains, sa_residual: worst, w_degenerate })
}

fn sigma_dot(s: &Voigt, g: [f64; 2]) -> [f64; 2] {
    [s[0] * g[0] + s[2] * g[1], s[2] * g[0] + s[1] * g[1]]
}

fn recover_subdomain(
    setup: &RecoverySetup,
    sub: &Substructured,
    fields: &IterationFields,
    s: usize,
    tractions: &BTreeMap<(usize, usize), ([f64; 2], [f64; 2])>,
    keep_patches: bool,
) -> Result<SubdomainRecovery> {
    let st = &setup.subdomains[s];
    let p = &sub.problems[s];
    let fine = &st.refinement.mesh;
    let prol = &st.refinement.prolongation;
    let r2 = setup.factor * setup.factor;
    let h: Mat3 = sub.material.hooke();
    let comp = sub.material.compliance();
    let nf = fine.n_nodes();
    let nc = p.mesh.n_nodes();

    let coarse_strain = |u: &[f64]| -> Vec<Voigt> {
        (0..p.mesh.n_elements()).map(|e| st.parent_geom[e].strain(&crate::fem::gather(&p.mesh.elements[e], u))).collect()
    };
    let eps_n = coarse_strain(&fields.u_n[s]);
    let eps_d = coarse_strain(&fields.u_d[s]);
    let sig_n: Vec<Voigt> = eps_n.iter().map(|e| mat_vec(&h, e)).collect();
    let sig_d: Vec<Voigt> = eps_d.iter().map(|e| mat_vec(&h, e)).collect();
    let sig_eff: Vec<Voigt> = sig_n
        .iter()
        .zip(&st.region_stress)
        .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
        .collect();

    // interface segment moments for the current tractions
    let iface_moments: Vec<[[[f64; 2]; 2]; 2]> = st
        .interface
        .iter()
        .map(|sg| {
            let (a, b) = (sg.coarse[0], sg.coarse[1]);
            match (tractions.get(&(a, b)), tractions.get(&(b, a))) {
                (Some(q), _) => interface_moments(sg, &fine.nodes, *q, false),
                (None, Some(q)) => interface_moments(sg, &fine.nodes, *q, true),
                (None, None) => [[[0.0; 2]; 2]; 2],
            }
        })
        .collect();
    let mut iface_of_node: Vec<Vec<usize>> = vec![Vec::new(); nc];
    for (i, sg) in st.interface.iter().enumerate() {
        iface_of_node[sg.coarse[0]].push(i);
        iface_of_node[sg.coarse[1]].push(i);
    }

    let mut sigma_corr = vec![[0.0; 3]; fine.n_elements()];
    let mut w = vec![0.0; 2 * nf];
    let mut slot = vec![usize::MAX; nf];
    let mut kept = Vec::new();
    for patch in &st.patches {
        let i = patch.center;
        for (a, &k) in patch.nodes.iter().enumerate() {
            slot[k] = a;
        }
        let np = patch.nodes.len();
        let mut f = vec![0.0; 2 * np];
        for &c in &patch.children {
            let e = c / r2;
            let parent = p.mesh.elements[e];
            let m = parent.iter().position(|&v| v == i).expect("patch child without center vertex");
            let kc = fine.elements[c];
            let cg = &st.child_geom[c];
            let gl = st.parent_geom[e].grad[m];
            let lam = st.lam[c][m];
            let mean = (lam[0] + lam[1] + lam[2]) / 3.0;
            for j in 0..3 {
                let g = [
                    gl[0] * cg.area / 3.0 + cg.grad[j][0] * cg.area * mean,
                    gl[1] * cg.area / 3.0 + cg.grad[j][1] * cg.area * mean,
                ];
                let sg = sigma_dot(&sig_eff[e], g);
                let a = slot[kc[j]];
                f[2 * a] += st.body[c][m][j][0] - sg[0];
                f[2 * a + 1] += st.body[c][m][j][1] - sg[1];
            }
        }
        for &si in &patch.segments {
            let sg = &st.neumann[si];
            let m = if sg.coarse[0] == i { 0 } else { 1 };
            for kk in 0..2 {
                let a = slot[sg.nodes[kk]];
                f[2 * a] += sg.moments[m][kk][0];
                f[2 * a + 1] += sg.moments[m][kk][1];
            }
        }
        for &si in &iface_of_node[i] {
            let sg = &st.interface[si];
            let m = if sg.coarse[0] == i { 0 } else { 1 };
            for kk in 0..2 {
                let a = slot[sg.nodes[kk]];
                f[2 * a] += iface_moments[si][m][kk][0];
                f[2 * a + 1] += iface_moments[si][m][kk][1];
            }
        }
        // subtract R(φ_i φ_n) for every free coarse vertex n in the patch
        let mut rhs = f.clone();
        for &n in patch.nodes.iter().take_while(|&&k| k < nc) {
            if st.fine_dirichlet[n] {
                continue;
            }
            let mut corr = [0.0; 2];
            for (a, &k) in patch.nodes.iter().enumerate() {
                let wgt = prol.rows[k].iter().find(|(c, _)| *c == n).map_or(0.0, |(_, w)| *w);
                if wgt != 0.0 {
                    corr[0] += wgt * f[2 * a];
                    corr[1] += wgt * f[2 * a + 1];
                }
            }
            let a = slot[n];
            rhs[2 * a] -= corr[0];
            rhs[2 * a + 1] -= corr[1];
        }
        // free dofs of the patch
        let free_nodes: Vec<usize> = (0..np).filter(|&a| !st.fine_dirichlet[patch.nodes[a]]).collect();
        let mut pos = vec![usize::MAX; np];
        for (q, &a) in free_nodes.iter().enumerate() {
            pos[a] = q;
        }
        let nd = 2 * free_nodes.len();
        let mut kmat = DenseMatrix::zeros(nd, nd);
        for &c in &patch.children {
            let ke = st.child_geom[c].stiffness(&h);
            let kc = fine.elements[c];
            let dofs: [Option<usize>; 6] = core::array::from_fn(|t| {
                let q = pos[slot[kc[t / 2]]];
                (q != usize::MAX).then(|| 2 * q + t % 2)
            });
            for x in 0..6 {
                let Some(dx) = dofs[x] else { continue };
                for y in 0..6 {
                    if let Some(dy) = dofs[y] {
                        kmat[(dx, dy)] += ke[x][y];
                    }
                }
            }
        }
        let coords: Vec<[f64; 2]> = free_nodes.iter().map(|&a| fine.nodes[patch.nodes[a]]).collect();
        let fixed: Vec<[f64; 2]> = (0..np).filter(|&a| pos[a] == usize::MAX).map(|a| fine.nodes[patch.nodes[a]]).collect();
        let kernel = rigid_kernel(&coords, &fixed);
        let b: Vec<f64> = free_nodes.iter().flat_map(|&a| [rhs[2 * a], rhs[2 * a + 1]]).collect();
        if !kernel.is_empty() {
            let mean_diag = (0..nd).map(|d| kmat[(d, d)]).sum::<f64>() / nd.max(1) as f64;
            for r in &kernel {
                for x in 0..nd {
                    for y in 0..nd {
                        kmat[(x, y)] += mean_diag * r[x] * r[y];
                    }
                }
            }
        }
        let sol = DenseCholesky::factor(kmat).map_err(|_| Error::SingularPatch { vertex: p.global_nodes[i] })?.solve(&b);
        let mut e = vec![0.0; 2 * np];
        for (q, &a) in free_nodes.iter().enumerate() {
            e[2 * a] = sol[2 * q];
            e[2 * a + 1] = sol[2 * q + 1];
        }
        for &c in &patch.children {
            let kc = fine.elements[c];
            let ue: [f64; 6] = core::array::from_fn(|t| e[2 * slot[kc[t / 2]] + t % 2]);
            let sc = mat_vec(&h, &st.child_geom[c].strain(&ue));
            for t in 0..3 {
                sigma_corr[c][t] += sc[t];
            }
        }
        if !st.coarse_interface[i] {
            for (a, &k) in patch.nodes.iter().enumerate() {
                let phi = prol.rows[k].iter().find(|(c, _)| *c == i).map_or(0.0, |(_, w)| *w);
                w[2 * k] += phi * e[2 * a];
                w[2 * k + 1] += phi * e[2 * a + 1];
            }
        }
        if keep_patches {
            kept.push(PatchSolution {
                vertex: p.global_nodes[i],
                nodes: patch.nodes.clone(),
                values: e,
                weighted_residual: f,
            });
        }
        for &k in &patch.nodes {
            slot[k] = usize::MAX;
        }
    }
    // exact zeros on the interface and the Dirichlet boundary
    for k in 0..nf {
        if st.fine_dirichlet[k] || st.fine_interface[k] {
            w[2 * k] = 0.0;
            w[2 * k + 1] = 0.0;
        }
    }

    let n_child = fine.n_elements();
    let mut sigma_hat = Vec::with_capacity(n_child);
    let mut delta_d = Vec::with_capacity(n_child);
    let mut child_area = Vec::with_capacity(n_child);
    let (mut ecr_n_sq, mut ecr_d_sq) = (0.0, 0.0);
    let mut work_hat = vec![0.0; 2 * nf];
    let mut res_d = st.load.clone();
    let mut res_n = st.load.clone();
    let mut k_w = vec![0.0; 2 * nf];
    for c in 0..n_child {
        let e = c / r2;
        let cg = &st.child_geom[c];
        let sh = [sig_n[e][0] + sigma_corr[c][0], sig_n[e][1] + sigma_corr[c][1], sig_n[e][2] + sigma_corr[c][2]];
        let dn = [sh[0] - sig_n[e][0], sh[1] - sig_n[e][1], sh[2] - sig_n[e][2]];
        let dd = [sh[0] - sig_d[e][0], sh[1] - sig_d[e][1], sh[2] - sig_d[e][2]];
        ecr_n_sq += cg.area * quad_form(&comp, &dn, &dn);
        ecr_d_sq += cg.area * quad_form(&comp, &dd, &dd);
        let kc = fine.elements[c];
        let wh = cg.stress_work(&sh);
        let wd = cg.stress_work(&sig_d[e]);
        let wn = cg.stress_work(&sig_n[e]);
        let we = crate::fem::gather(&kc, &w);
        let sw = mat_vec(&h, &cg.strain(&we));
        let ww = cg.stress_work(&sw);
        for (t, d) in crate::fem::element_dofs(&kc).iter().enumerate() {
            work_hat[*d] += wh[t];
            res_d[*d] -= wd[t];
            res_n[*d] -= wn[t];
            k_w[*d] += ww[t];
        }
        sigma_hat.push(sh);
        delta_d.push(dd);
        child_area.push(cg.area);
    }
    // SA certificate against every free refined dof, interface tractions included
    let mut rhs_full = st.load.clone();
    for (sg, mom) in st.interface.iter().zip(&iface_moments) {
        for kk in 0..2 {
            for m in 0..2 {
                rhs_full[2 * sg.nodes[kk]] += mom[m][kk][0];
                rhs_full[2 * sg.nodes[kk] + 1] += mom[m][kk][1];
            }
        }
    }
    let scale = max_abs(&rhs_full).max(max_abs(&work_hat)).max(f64::MIN_POSITIVE);
    let mut sa = 0.0_f64;
    let mut worst_dof = 0;
    for k in 0..nf {
        if st.fine_dirichlet[k] {
            continue;
        }
        for d in 0..2 {
            let r = (work_hat[2 * k + d] - rhs_full[2 * k + d]).abs() / scale;
            if r > sa {
                sa = r;
                worst_dof = 2 * k + d;
            }
        }
    }
    if sa > SA_TOLERANCE {
        return Err(Error::NotStaticallyAdmissible { subdomain: s, dof: worst_dof, residual: sa, tolerance: SA_TOLERANCE });
    }
    for k in 0..nf {
        if st.fine_dirichlet[k] {
            res_d[2 * k] = 0.0;
            res_d[2 * k + 1] = 0.0;
            res_n[2 * k] = 0.0;
            res_n[2 * k + 1] = 0.0;
        }
    }
    let w_energy_sq = crate::math::dot(&w, &k_w);
    Ok(SubdomainRecovery {
        sigma_hat,
        delta_d,
        child_area,
        w,
        k_w,
        res_d,
        res_n,
        ecr_n_sq,
        ecr_d_sq,
        w_energy_sq,
        sa_residual: sa,
        patches: kept,
    })
}

/// `L(v)` on the refined mesh of subdomain `s`, interface tractions excluded.
pub fn load_work(setup: &RecoverySetup, s: usize, v: &[f64]) -> f64 {
    crate::math::dot(&setup.subdomains[s].load, v)
}
