//! Conforming linear triangulations with tagged boundaries.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann(String),
    Free,
}

impl BoundaryTag {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dirichlet" => Some(Self::Dirichlet),
            "free" => Some(Self::Free),
            _ => s.strip_prefix("neumann:").map(|n| Self::Neumann(n.into())),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Dirichlet => "dirichlet".into(),
            Self::Neumann(n) => format!("neumann:{n}"),
            Self::Free => "free".into(),
        }
    }
}

/// A boundary edge. After [`Mesh::new`] the node order follows the
/// counter-clockwise orientation of the owning element, so the outward
/// normal is the edge direction rotated by −90°.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    pub elements: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryEdge>,
    pub regions: BTreeMap<String, Vec<usize>>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn signed_area(p: &[Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

impl Mesh {
    /// Validates and normalizes a mesh: positive orientation, conformity,
    /// every topological boundary edge tagged exactly once.
    pub fn new(
        nodes: Vec<Point>,
        elements: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
        regions: BTreeMap<String, Vec<usize>>,
    ) -> Result<Self> {
        let n = nodes.len();
        for (e, el) in elements.iter().enumerate() {
            if el.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!("element {e} references a missing node")));
            }
            let area = signed_area(&[nodes[el[0]], nodes[el[1]], nodes[el[2]]]);
            let scale = bbox_diag2(&nodes, el);
            if !(area > 1e-14 * scale) {
                return Err(Error::DegenerateElement { element: e, area });
            }
        }
        let mut mesh = Self { nodes, elements, boundary: Vec::new(), regions };
        let owners = mesh.edge_owners();
        let mut tags: BTreeMap<(usize, usize), BoundaryTag> = BTreeMap::new();
        for be in boundary {
            let key = edge_key(be.nodes[0], be.nodes[1]);
            if tags.insert(key, be.tag).is_some() {
                return Err(Error::InvalidMesh(format!("boundary edge {key:?} tagged twice")));
            }
        }
        for (key, own) in &owners {
            match own.len() {
                1 => {
                    let tag = tags.remove(key).ok_or_else(|| {
                        Error::InvalidMesh(format!("boundary edge {key:?} has no tag"))
                    })?;
                    let (e, local) = own[0];
                    let el = mesh.elements[e];
                    mesh.boundary.push(BoundaryEdge { nodes: [el[local], el[(local + 1) % 3]], tag });
                }
                2 => {}
                k => return Err(Error::InvalidMesh(format!("edge {key:?} shared by {k} elements"))),
            }
        }
        if let Some((key, _)) = tags.into_iter().next() {
            return Err(Error::InvalidMesh(format!("tagged edge {key:?} is not on the boundary")));
        }
        for (label, els) in &mesh.regions {
            if els.iter().any(|&e| e >= mesh.elements.len()) {
                return Err(Error::InvalidMesh(format!("region `{label}` references a missing element")));
            }
        }
        let used: BTreeSet<usize> = mesh.elements.iter().flatten().copied().collect();
        if used.len() != n {
            return Err(Error::InvalidMesh("node ids are not dense (unused nodes)".into()));
        }
        Ok(mesh)
    }

    /// Edge → list of (element, local edge index). Local edge k joins local
    /// vertices k and k+1.
    pub fn edge_owners(&self) -> BTreeMap<(usize, usize), Vec<(usize, usize)>> {
        let mut map: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (e, el) in self.elements.iter().enumerate() {
            for k in 0..3 {
                map.entry(edge_key(el[k], el[(k + 1) % 3])).or_default().push((e, k));
            }
        }
        map
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn vertices(&self, e: usize) -> [Point; 3] {
        let el = self.elements[e];
        [self.nodes[el[0]], self.nodes[el[1]], self.nodes[el[2]]]
    }

    pub fn area(&self, e: usize) -> f64 {
        signed_area(&self.vertices(e))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.elements.len()).map(|e| self.area(e)).sum()
    }

    pub fn centroid(&self, e: usize) -> Point {
        let p = self.vertices(e);
        [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
    }

    /// Nodes lying on a Dirichlet-tagged edge.
    pub fn dirichlet_nodes(&self) -> BTreeSet<usize> {
        self.boundary
            .iter()
            .filter(|b| b.tag == BoundaryTag::Dirichlet)
            .flat_map(|b| b.nodes)
            .collect()
    }

    pub fn node_elements(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (e, el) in self.elements.iter().enumerate() {
            for &v in el {
                adj[v].push(e);
            }
        }
        adj
    }

    pub fn neumann_tags(&self) -> BTreeSet<String> {
        self.boundary
            .iter()
            .filter_map(|b| match &b.tag {
                BoundaryTag::Neumann(n) => Some(n.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Element ids for each region label, mapped to a per-element label set.
    pub fn region_of_elements(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.elements.len()];
        for (label, els) in &self.regions {
            for &e in els {
                out[e].push(label.as_str());
            }
        }
        out
    }

    /// Extracts the sub-mesh made of `elements` (ascending order preserved).
    /// Boundary edges inherited from `self` keep their tag; edges newly
    /// exposed by the cut are tagged `Free`. Returns the sub-mesh and the
    /// local→global node map (ascending global ids).
    pub fn submesh(&self, elements: &[usize]) -> Result<(Mesh, Vec<usize>)> {
        let nodes: BTreeSet<usize> = elements.iter().flat_map(|&e| self.elements[e]).collect();
        let local_nodes: Vec<usize> = nodes.into_iter().collect();
        let mut g2l = BTreeMap::new();
        for (l, &g) in local_nodes.iter().enumerate() {
            g2l.insert(g, l);
        }
        let mut elem_g2l = BTreeMap::new();
        for (l, &e) in elements.iter().enumerate() {
            elem_g2l.insert(e, l);
        }
        let new_elements: Vec<[usize; 3]> =
            elements.iter().map(|&e| self.elements[e].map(|v| g2l[&v])).collect();
        let parent_tags: BTreeMap<(usize, usize), BoundaryTag> =
            self.boundary.iter().map(|b| (edge_key(b.nodes[0], b.nodes[1]), b.tag.clone())).collect();
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &e in elements {
            let el = self.elements[e];
            for k in 0..3 {
                *counts.entry(edge_key(el[k], el[(k + 1) % 3])).or_default() += 1;
            }
        }
        let boundary = counts
            .iter()
            .filter(|(_, &c)| c == 1)
            .map(|(&(a, b), _)| BoundaryEdge {
                nodes: [g2l[&a], g2l[&b]],
                tag: parent_tags.get(&(a, b)).cloned().unwrap_or(BoundaryTag::Free),
            })
            .collect();
        let mut regions = BTreeMap::new();
        for (label, els) in &self.regions {
            let sub: Vec<usize> = els.iter().filter_map(|e| elem_g2l.get(e).copied()).collect();
            if !sub.is_empty() {
                regions.insert(label.clone(), sub);
            }
        }
        let mesh = Mesh::new(local_nodes.iter().map(|&g| self.nodes[g]).collect(), new_elements, boundary, regions)?;
        Ok((mesh, local_nodes))
    }

    /// True when the element set is connected through shared edges.
    pub fn is_edge_connected(&self, elements: &[usize]) -> bool {
        if elements.is_empty() {
            return true;
        }
        let set: BTreeSet<usize> = elements.iter().copied().collect();
        let owners = self.edge_owners();
        let mut nbrs: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for own in owners.values() {
            if own.len() == 2 && set.contains(&own[0].0) && set.contains(&own[1].0) {
                nbrs.entry(own[0].0).or_default().push(own[1].0);
                nbrs.entry(own[1].0).or_default().push(own[0].0);
            }
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![elements[0]];
        while let Some(e) = stack.pop() {
            if seen.insert(e) {
                if let Some(ns) = nbrs.get(&e) {
                    stack.extend(ns.iter().copied());
                }
            }
        }
        seen.len() == set.len()
    }
}

fn bbox_diag2(nodes: &[Point], el: &[usize; 3]) -> f64 {
    let mut s: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = [nodes[el[i]][0] - nodes[el[j]][0], nodes[el[i]][1] - nodes[el[j]][1]];
            s = s.max(d[0] * d[0] + d[1] * d[1]);
        }
    }
    s
}

/// Uniform single-diagonal triangulation of `[−3l, 3l]²` with `n` cells per
/// side (`2n²` triangles). The whole boundary is Dirichlet.
pub fn build_structured_square(n: usize, l: f64) -> Result<Mesh> {
    build_structured_rectangle(n, n, [-3.0 * l, -3.0 * l], [3.0 * l, 3.0 * l], |_, _| BoundaryTag::Dirichlet)
}

/// Single-diagonal triangulation of an axis-aligned rectangle. `tag` receives
/// the two end points of each boundary edge.
pub fn build_structured_rectangle(
    nx: usize,
    ny: usize,
    lo: Point,
    hi: Point,
    mut tag: impl FnMut(Point, Point) -> BoundaryTag,
) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidMesh("at least one subdivision per side is required".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([
                lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64,
            ]);
        }
    }
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }
    let mut boundary = Vec::new();
    let mut push = |a: usize, b: usize, nodes: &[Point]| {
        boundary.push(BoundaryEdge { nodes: [a, b], tag: tag(nodes[a], nodes[b]) });
    };
    for i in 0..nx {
        push(id(i, 0), id(i + 1, 0), &nodes);
        push(id(i + 1, ny), id(i, ny), &nodes);
    }
    for j in 0..ny {
        push(id(nx, j), id(nx, j + 1), &nodes);
        push(id(0, j + 1), id(0, j), &nodes);
    }
    Mesh::new(nodes, elements, boundary, BTreeMap::new())
}

/// Fine-node interpolation weights: for each fine node, the coarse nodes and
/// barycentric weights of its position in a parent element.
#[derive(Debug, Clone, PartialEq)]
pub struct Prolongation {
    pub n_coarse: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl Prolongation {
    /// Interpolates a nodal field with `components` values per node.
    pub fn apply(&self, coarse: &[f64], components: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len() * components];
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, w) in row {
                for k in 0..components {
                    out[components * i + k] += w * coarse[components * c + k];
                }
            }
        }
        out
    }

    pub fn identity(n: usize) -> Self {
        Self { n_coarse: n, rows: (0..n).map(|i| vec![(i, 1.0)]).collect() }
    }
}

/// Result of a uniform refinement.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub mesh: Mesh,
    /// Fine element → coarse parent element.
    pub parent: Vec<usize>,
    pub prolongation: Prolongation,
    pub factor: usize,
}

/// Splits every element into `r²` congruent children on the lattice of
/// barycentric points with denominator `r`. Coarse nodes keep their ids;
/// children of element `e` occupy ids `e·r² .. (e+1)·r²`.
pub fn refine_uniform(mesh: &Mesh, r: usize) -> Result<Refinement> {
    if r == 0 {
        return Err(Error::InvalidMesh("refinement factor must be at least 1".into()));
    }
    let nc = mesh.n_nodes();
    let owners = mesh.edge_owners();
    let edge_ids: BTreeMap<(usize, usize), usize> = owners.keys().enumerate().map(|(i, &k)| (k, i)).collect();
    let per_edge = r - 1;
    let per_elem = if r >= 2 { (r - 1) * (r - 2) / 2 } else { 0 };
    let edge_base = nc;
    let interior_base = nc + edge_ids.len() * per_edge;
    let total = interior_base + mesh.n_elements() * per_elem;
    let mut nodes = vec![[0.0; 2]; total];
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); total];
    for i in 0..nc {
        nodes[i] = mesh.nodes[i];
        rows[i] = vec![(i, 1.0)];
    }
    let rf = r as f64;
    let lattice_node = |e: usize, i: [usize; 3], nodes: &mut Vec<Point>, rows: &mut Vec<Vec<(usize, f64)>>| -> usize {
        let el = mesh.elements[e];
        let nz: Vec<usize> = (0..3).filter(|&k| i[k] > 0).collect();
        let id = match nz.len() {
            1 => el[nz[0]],
            2 => {
                let (a, b) = (el[nz[0]], el[nz[1]]);
                let (lo, hi, khi) = if a < b { (a, b, i[nz[1]]) } else { (b, a, i[nz[0]]) };
                edge_base + edge_ids[&(lo, hi)] * per_edge + (khi - 1)
            }
            _ => {
                // interior lattice points with p, q ≥ 1 and p + q ≤ r − 1
                let (p, q) = (i[1], i[2]);
                let mut idx = 0;
                for pp in 1..p {
                    idx += r - 1 - pp;
                }
                idx += q - 1;
                interior_base + e * per_elem + idx
            }
        };
        if rows[id].is_empty() {
            let mut pos = [0.0; 2];
            for k in 0..3 {
                let w = i[k] as f64 / rf;
                pos[0] += w * mesh.nodes[el[k]][0];
                pos[1] += w * mesh.nodes[el[k]][1];
                if i[k] > 0 {
                    rows[id].push((el[k], w));
                }
            }
            nodes[id] = pos;
        }
        id
    };
    let mut elements = Vec::with_capacity(mesh.n_elements() * r * r);
    let mut parent = Vec::with_capacity(mesh.n_elements() * r * r);
    for e in 0..mesh.n_elements() {
        let lat = |p: usize, q: usize| [r - p - q, p, q];
        for p in 0..r {
            for q in 0..r - p {
                let a = lattice_node(e, lat(p, q), &mut nodes, &mut rows);
                let b = lattice_node(e, lat(p + 1, q), &mut nodes, &mut rows);
                let c = lattice_node(e, lat(p, q + 1), &mut nodes, &mut rows);
                elements.push([a, b, c]);
                parent.push(e);
                if p + q + 2 <= r {
                    let d = lattice_node(e, lat(p + 1, q + 1), &mut nodes, &mut rows);
                    elements.push([b, d, c]);
                    parent.push(e);
                }
            }
        }
    }
    let mut boundary = Vec::new();
    for be in &mesh.boundary {
        let (a, b) = (be.nodes[0], be.nodes[1]);
        let (lo, hi) = edge_key(a, b);
        let inner = |k: usize| edge_base + edge_ids[&(lo, hi)] * per_edge + (k - 1);
        // walk from a to b
        let mut chain = vec![a];
        for s in 1..r {
            let k_from_lo = if a == lo { s } else { r - s };
            chain.push(inner(k_from_lo));
        }
        chain.push(b);
        for w in chain.windows(2) {
            boundary.push(BoundaryEdge { nodes: [w[0], w[1]], tag: be.tag.clone() });
        }
    }
    let r2 = r * r;
    let regions = mesh
        .regions
        .iter()
        .map(|(k, els)| (k.clone(), els.iter().flat_map(|&e| e * r2..(e + 1) * r2).collect()))
        .collect();
    let fine = Mesh::new(nodes, elements, boundary, regions)?;
    Ok(Refinement { mesh: fine, parent, prolongation: Prolongation { n_coarse: nc, rows }, factor: r })
}

/// Quadrisection by edge midpoints.
pub fn refine_by_splitting(mesh: &Mesh) -> Result<Refinement> {
    refine_uniform(mesh, 2)
}

/// Element → subdomain map with the derived interface node set.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub subdomain_of: Vec<usize>,
    pub n_subdomains: usize,
    pub interface_nodes: BTreeSet<usize>,
}

impl Partition {
    pub fn new(mesh: &Mesh, subdomain_of: Vec<usize>) -> Result<Self> {
        if subdomain_of.len() != mesh.n_elements() {
            return Err(Error::InvalidPartition(format!(
                "{} entries for {} elements",
                subdomain_of.len(),
                mesh.n_elements()
            )));
        }
        let n_subdomains = subdomain_of.iter().max().map_or(0, |m| m + 1);
        let mut used = vec![false; n_subdomains];
        for &s in &subdomain_of {
            used[s] = true;
        }
        if let Some(s) = used.iter().position(|u| !u) {
            return Err(Error::InvalidPartition(format!("subdomain {s} is empty")));
        }
        let mut first = vec![usize::MAX; mesh.n_nodes()];
        let mut interface_nodes = BTreeSet::new();
        for (e, el) in mesh.elements.iter().enumerate() {
            for &v in el {
                if first[v] == usize::MAX {
                    first[v] = subdomain_of[e];
                } else if first[v] != subdomain_of[e] {
                    interface_nodes.insert(v);
                }
            }
        }
        Ok(Self { subdomain_of, n_subdomains, interface_nodes })
    }

    pub fn elements_of(&self, s: usize) -> Vec<usize> {
        (0..self.subdomain_of.len()).filter(|&e| self.subdomain_of[e] == s).collect()
    }

    /// Subdomains incident to each node.
    pub fn node_subdomains(&self, mesh: &Mesh) -> Vec<BTreeSet<usize>> {
        let mut out = vec![BTreeSet::new(); mesh.n_nodes()];
        for (e, el) in mesh.elements.iter().enumerate() {
            for &v in el {
                out[v].insert(self.subdomain_of[e]);
            }
        }
        out
    }

    /// Partition of a refined mesh where children inherit their parent's
    /// subdomain.
    pub fn refine(&self, refinement: &Refinement) -> Result<Self> {
        let map = refinement.parent.iter().map(|&p| self.subdomain_of[p]).collect();
        Self::new(&refinement.mesh, map)
    }
}

/// Assigns elements by centroid to an `nx × ny` grid of boxes covering the
/// mesh bounding box. A centroid on a box boundary goes to the lower box.
/// Box ids are row-major (x fastest); empty boxes are skipped.
pub fn partition_regular(mesh: &Mesh, nx: usize, ny: usize) -> Result<Partition> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidPartition("grid must have at least one box".into()));
    }
    let (lo, hi) = mesh.bounding_box();
    let slot = |c: f64, lo: f64, hi: f64, n: usize| -> usize {
        let t = (c - lo) / (hi - lo) * n as f64;
        let k = libm::round(t);
        let idx = if (t - k).abs() < 1e-10 { k as i64 - 1 } else { libm::floor(t) as i64 };
        idx.clamp(0, n as i64 - 1) as usize
    };
    let raw: Vec<usize> = (0..mesh.n_elements())
        .map(|e| {
            let c = mesh.centroid(e);
            slot(c[1], lo[1], hi[1], ny) * nx + slot(c[0], lo[0], hi[0], nx)
        })
        .collect();
    let used: BTreeSet<usize> = raw.iter().copied().collect();
    let dense: BTreeMap<usize, usize> = used.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    Partition::new(mesh, raw.iter().map(|b| dense[b]).collect())
}

/// Partition by an arbitrary centroid classifier; ids are densified in order
/// of first appearance of the classifier value.
pub fn partition_by_centroid(mesh: &Mesh, mut classify: impl FnMut(Point) -> usize) -> Result<Partition> {
    let raw: Vec<usize> = (0..mesh.n_elements()).map(|e| classify(mesh.centroid(e))).collect();
    let used: BTreeSet<usize> = raw.iter().copied().collect();
    let dense: BTreeMap<usize, usize> = used.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    Partition::new(mesh, raw.iter().map(|b| dense[b]).collect())
}

/// Support of the hat function of one vertex, with its refined submesh.
#[derive(Debug, Clone)]
pub struct StarPatch {
    pub center: usize,
    pub elements: Vec<usize>,
    /// Refined patch mesh; its node `k < patch node count` is the coarse
    /// node `coarse_nodes[k]`.
    pub refined: Mesh,
    pub coarse_nodes: Vec<usize>,
}

pub fn star_patches(mesh: &Mesh, r: usize) -> Result<Vec<StarPatch>> {
    let adj = mesh.node_elements();
    adj.into_iter()
        .enumerate()
        .map(|(center, elements)| {
            let (sub, coarse_nodes) = mesh.submesh(&elements)?;
            let refined = refine_uniform(&sub, r)?.mesh;
            Ok(StarPatch { center, elements, refined, coarse_nodes })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_counts_and_area() {
        let m = build_structured_square(4, 1.0).unwrap();
        assert_eq!(m.n_elements(), 32);
        assert!((m.total_area() - 36.0).abs() < 1e-12);
        assert_eq!(m.boundary.len(), 16);
        assert!(m.boundary.iter().all(|b| b.tag == BoundaryTag::Dirichlet));
    }

    #[test]
    fn smallest_square() {
        let m = build_structured_square(1, 1.0).unwrap();
        assert_eq!(m.n_elements(), 2);
        assert_eq!(m.n_nodes(), 4);
    }

    #[test]
    fn boundary_edges_follow_element_orientation() {
        let m = build_structured_square(3, 1.0).unwrap();
        for b in &m.boundary {
            let [a, c] = b.nodes;
            let mid = [(m.nodes[a][0] + m.nodes[c][0]) / 2.0, (m.nodes[a][1] + m.nodes[c][1]) / 2.0];
            let t = [m.nodes[c][0] - m.nodes[a][0], m.nodes[c][1] - m.nodes[a][1]];
            let normal = [t[1], -t[0]];
            // outward normal points away from the origin for this square
            assert!(normal[0] * mid[0] + normal[1] * mid[1] > 0.0);
        }
    }

    #[test]
    fn rejects_untagged_boundary() {
        let m = build_structured_square(1, 1.0).unwrap();
        let mut b = m.boundary.clone();
        b.pop();
        assert!(Mesh::new(m.nodes.clone(), m.elements.clone(), b, BTreeMap::new()).is_err());
    }

    #[test]
    fn rejects_clockwise_element() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let r = Mesh::new(nodes, vec![[0, 2, 1]], Vec::new(), BTreeMap::new());
        assert!(matches!(r, Err(Error::DegenerateElement { .. })));
    }

    #[test]
    fn lattice_refinement_counts() {
        let m = build_structured_square(2, 1.0).unwrap();
        for r in 1..6 {
            let f = refine_uniform(&m, r).unwrap();
            assert_eq!(f.mesh.n_elements(), m.n_elements() * r * r);
            assert_eq!(f.mesh.n_nodes(), (2 * r + 1) * (2 * r + 1));
            for e in 0..m.n_elements() {
                let s: f64 = (e * r * r..(e + 1) * r * r).map(|c| f.mesh.area(c)).sum();
                assert!((s - m.area(e)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interface_of_grid_partition() {
        let m = build_structured_square(6, 1.0).unwrap();
        let p = partition_regular(&m, 3, 3).unwrap();
        assert_eq!(p.n_subdomains, 9);
        let single = partition_regular(&m, 1, 1).unwrap();
        assert!(single.interface_nodes.is_empty());
        // two vertical + two horizontal lines of 7 nodes, 4 shared crossings
        assert_eq!(p.interface_nodes.len(), 4 * 7 - 4);
    }

    #[test]
    fn star_patch_sizes() {
        let m = build_structured_square(2, 1.0).unwrap();
        let patches = star_patches(&m, 2).unwrap();
        let adj = m.node_elements();
        for p in &patches {
            assert_eq!(p.elements.len(), adj[p.center].len());
            assert_eq!(p.refined.n_elements(), 4 * p.elements.len());
        }
        // centre vertex of the 2×2 single-diagonal grid has degree 6
        assert_eq!(patches[4].elements.len(), 6);
    }
}
