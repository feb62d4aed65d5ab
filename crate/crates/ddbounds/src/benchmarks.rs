//! Built-in test problems.

use std::collections::BTreeMap;

use ddbounds_core::fem::{Hypothesis, LoadSet, Material, SquareBenchmark, Traction};
use ddbounds_core::mesh::{build_structured_square, partition_regular, BoundaryEdge, BoundaryTag, Mesh, Partition, Point};

use crate::Error;

/// Label of the quantity-of-interest region in built-in meshes.
pub const QOI_REGION: &str = "qoi";

/// A complete problem definition.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub mesh: Mesh,
    pub partition: Partition,
    pub material: Material,
    pub loads: LoadSet,
    pub qoi_region: Option<String>,
    /// Analytic solution, when known.
    pub exact: Option<SquareBenchmark>,
}

/// Marks the `count` elements whose centroids are closest to `target`.
pub fn tag_nearest(mesh: &mut Mesh, label: &str, target: Point, count: usize) {
    let mut order: Vec<(f64, usize)> = (0..mesh.n_elements())
        .map(|e| {
            let c = mesh.centroid(e);
            ((c[0] - target[0]).powi(2) + (c[1] - target[1]).powi(2), e)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut els: Vec<usize> = order.iter().take(count).map(|p| p.1).collect();
    els.sort_unstable();
    mesh.regions.insert(label.to_string(), els);
}

/// Square `[−3l, 3l]²` with the polynomial exact solution, `n` cells per
/// side, an `nx × ny` grid partition and a 4-element region near the centre.
pub fn square_problem(n: usize, grid: (usize, usize), l: f64) -> Result<Problem, Error> {
    let bench = SquareBenchmark::standard(l);
    let mut mesh = build_structured_square(n, l)?;
    tag_nearest(&mut mesh, QOI_REGION, [0.25 * l, 0.25 * l], 4);
    let partition = partition_regular(&mesh, grid.0, grid.1)?;
    Ok(Problem {
        name: format!("square-n{n}"),
        mesh,
        partition,
        material: bench.material,
        loads: bench.loads(),
        qoi_region: Some(QOI_REGION.to_string()),
        exact: Some(bench),
    })
}

/// Parameters of the cracked-plate lookalike.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrackedGeometry {
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    pub holes: [([f64; 2], f64); 2],
    /// Vertical slit from the bottom edge at `slit_x` up to `slit_tip`.
    pub slit_x: f64,
    pub slit_tip: f64,
    pub right_pressure: f64,
    pub top_pressure: f64,
}

impl Default for CrackedGeometry {
    fn default() -> Self {
        Self {
            width: 8.0,
            height: 4.0,
            nx: 32,
            ny: 16,
            holes: [([3.0, 2.5], 0.3), ([5.0, 2.5], 0.3)],
            slit_x: 3.0,
            slit_tip: 0.75,
            right_pressure: -1.0,
            top_pressure: 0.1,
        }
    }
}

/// Rectangular plate with two staircase holes and an edge slit made of
/// duplicated nodes. Clamped on the left edge, tension on the right edge,
/// light pressure on top, plane stress. Not the geometry of any published
/// structure.
pub fn cracked_problem(geo: &CrackedGeometry, grid: (usize, usize)) -> Result<Problem, Error> {
    let (nx, ny) = (geo.nx, geo.ny);
    let dx = geo.width / nx as f64;
    let dy = geo.height / ny as f64;
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes: Vec<Point> = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([i as f64 * dx, j as f64 * dy]);
        }
    }
    let in_hole = |p: Point| geo.holes.iter().any(|(c, r)| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) < r * r);
    let tol = 1e-9 * geo.width;
    // nodes on the slit below its tip get a twin used by elements right of it
    let mut twin: BTreeMap<usize, usize> = BTreeMap::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let p = nodes[id(i, j)];
            if (p[0] - geo.slit_x).abs() < tol && p[1] < geo.slit_tip - tol {
                twin.insert(id(i, j), 0);
            }
        }
    }
    for (k, v) in twin.iter_mut() {
        *v = nodes.len();
        nodes.push(nodes[*k]);
    }
    let mut elements = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            for tri in [[a, b, c], [a, c, d]] {
                let cen = [
                    (nodes[tri[0]][0] + nodes[tri[1]][0] + nodes[tri[2]][0]) / 3.0,
                    (nodes[tri[0]][1] + nodes[tri[1]][1] + nodes[tri[2]][1]) / 3.0,
                ];
                if in_hole(cen) {
                    continue;
                }
                let right = cen[0] > geo.slit_x;
                elements.push(tri.map(|n| if right { twin.get(&n).copied().unwrap_or(n) } else { n }));
            }
        }
    }
    let mut mesh = mesh_from_elements(nodes, elements, |a, b| {
        let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        if m[0] < tol {
            BoundaryTag::Dirichlet
        } else if (m[0] - geo.width).abs() < tol {
            BoundaryTag::Neumann("right".into())
        } else if (m[1] - geo.height).abs() < tol {
            BoundaryTag::Neumann("top".into())
        } else {
            BoundaryTag::Free
        }
    })?;
    tag_nearest(&mut mesh, QOI_REGION, [geo.slit_x + 0.5 * dx, geo.slit_tip + 0.5 * dy], 4);
    let partition = partition_regular(&mesh, grid.0, grid.1)?;
    let material = Material::new(1.0, 0.3, Hypothesis::PlaneStress)?;
    let mut loads = LoadSet::default();
    loads.tractions.insert("right".into(), Traction::Pressure(geo.right_pressure));
    loads.tractions.insert("top".into(), Traction::Pressure(geo.top_pressure));
    Ok(Problem {
        name: "cracked-lookalike".into(),
        mesh,
        partition,
        material,
        loads,
        qoi_region: Some(QOI_REGION.to_string()),
        exact: None,
    })
}

/// Builds a mesh from a triangle soup: drops unused nodes, finds the
/// boundary edges and tags them with `tag(a, b)`.
pub fn mesh_from_elements(
    nodes: Vec<Point>,
    elements: Vec<[usize; 3]>,
    mut tag: impl FnMut(Point, Point) -> BoundaryTag,
) -> Result<Mesh, Error> {
    let mut new_id = vec![usize::MAX; nodes.len()];
    let mut kept = Vec::new();
    for el in &elements {
        for &n in el {
            if new_id[n] == usize::MAX {
                new_id[n] = kept.len();
                kept.push(nodes[n]);
            }
        }
    }
    let elements: Vec<[usize; 3]> = elements.iter().map(|el| el.map(|n| new_id[n])).collect();
    let mut count: BTreeMap<(usize, usize), ([usize; 2], usize)> = BTreeMap::new();
    for el in &elements {
        for k in 0..3 {
            let (a, b) = (el[k], el[(k + 1) % 3]);
            count.entry((a.min(b), a.max(b))).or_insert(([a, b], 0)).1 += 1;
        }
    }
    let boundary = count
        .values()
        .filter(|(_, c)| *c == 1)
        .map(|(e, _)| BoundaryEdge { nodes: *e, tag: tag(kept[e[0]], kept[e[1]]) })
        .collect();
    Ok(Mesh::new(kept, elements, boundary, BTreeMap::new())?)
}
