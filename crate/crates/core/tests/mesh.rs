use std::collections::{BTreeMap, BTreeSet};

use ddbounds_core::mesh::{
    build_structured_rectangle, build_structured_square, partition_by_centroid, partition_regular,
    refine_by_splitting, refine_uniform, star_patches, BoundaryEdge, BoundaryTag, Mesh,
};
use proptest::prelude::*;

fn two_triangles() -> Mesh {
    let nodes = vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]];
    let elements = vec![[0, 1, 2], [0, 2, 3]];
    let boundary = [[0, 1], [1, 2], [2, 3], [3, 0]]
        .into_iter()
        .map(|nodes| BoundaryEdge { nodes, tag: BoundaryTag::Dirichlet })
        .collect();
    Mesh::new(nodes, elements, boundary, BTreeMap::new()).unwrap()
}

fn assert_conforming(mesh: &Mesh) {
    let owners = mesh.edge_owners();
    let boundary: BTreeSet<(usize, usize)> =
        mesh.boundary.iter().map(|b| (b.nodes[0].min(b.nodes[1]), b.nodes[0].max(b.nodes[1]))).collect();
    for (key, own) in owners {
        match own.len() {
            1 => assert!(boundary.contains(&key), "untagged boundary edge {key:?}"),
            2 => assert!(!boundary.contains(&key)),
            k => panic!("edge {key:?} shared by {k} elements"),
        }
    }
}

#[test]
fn smallest_square_is_all_dirichlet() {
    let m = build_structured_square(1, 1.0).unwrap();
    assert_eq!(m.n_elements(), 2);
    assert!((m.total_area() - 36.0).abs() < 1e-12);
    assert_eq!(m.dirichlet_nodes().len(), 4);
}

#[test]
fn square_element_count_and_area() {
    for n in [2, 5, 9] {
        let m = build_structured_square(n, 1.0).unwrap();
        assert_eq!(m.n_elements(), 2 * n * n);
    }
    let m = build_structured_square(4, 1.0).unwrap();
    let signed: f64 = (0..m.n_elements()).map(|e| m.area(e)).sum();
    assert!((signed - 36.0).abs() < 1e-12);
}

#[test]
fn splitting_two_triangles() {
    let m = two_triangles();
    let r = refine_by_splitting(&m).unwrap();
    assert_eq!(r.mesh.n_elements(), 8);
    for e in 0..2 {
        let s: f64 = r.parent.iter().enumerate().filter(|(_, &p)| p == e).map(|(c, _)| r.mesh.area(c)).sum();
        assert!((s - m.area(e)).abs() < 1e-14);
    }
    assert_conforming(&r.mesh);
}

#[test]
fn prolongation_rows_sum_to_one() {
    let m = build_structured_square(3, 1.0).unwrap();
    let r = refine_uniform(&m, 3).unwrap();
    for row in &r.prolongation.rows {
        let s: f64 = row.iter().map(|(_, w)| w).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }
}

#[test]
fn single_box_partition_has_no_interface() {
    let m = build_structured_square(4, 1.0).unwrap();
    let p = partition_regular(&m, 1, 1).unwrap();
    assert_eq!(p.n_subdomains, 1);
    assert!(p.subdomain_of.iter().all(|&s| s == 0));
    assert!(p.interface_nodes.is_empty());
}

#[test]
fn three_by_three_grid() {
    let m = build_structured_square(6, 1.0).unwrap();
    let p = partition_regular(&m, 3, 3).unwrap();
    assert_eq!(p.n_subdomains, 9);
    for s in 0..9 {
        assert_eq!(p.elements_of(s).len(), 8);
    }
}

#[test]
fn corner_patch_matches_incidence() {
    let m = build_structured_square(1, 1.0).unwrap();
    let patches = star_patches(&m, 2).unwrap();
    let adj = m.node_elements();
    for p in &patches {
        assert!(p.elements.len() == 1 || p.elements.len() == 2);
        assert_eq!(p.elements, adj[p.center]);
    }
}

#[test]
fn interior_patch_size_is_vertex_degree() {
    let m = build_structured_square(4, 1.0).unwrap();
    let patches = star_patches(&m, 2).unwrap();
    let owners = m.edge_owners();
    for p in patches.iter().filter(|p| !m.dirichlet_nodes().contains(&p.center)) {
        let degree = owners.keys().filter(|(a, b)| *a == p.center || *b == p.center).count();
        assert_eq!(p.elements.len(), degree);
        let area: f64 = (0..p.refined.n_elements()).map(|e| p.refined.area(e)).sum();
        let coarse: f64 = p.elements.iter().map(|&e| m.area(e)).sum();
        assert!((area - coarse).abs() < 1e-12);
    }
}

fn arb_rectangle() -> impl Strategy<Value = Mesh> {
    (1usize..6, 1usize..6, 0.5f64..3.0, 0.5f64..3.0).prop_map(|(nx, ny, w, h)| {
        build_structured_rectangle(nx, ny, [0.0, 0.0], [w, h], |a, b| {
            if a[0] == 0.0 && b[0] == 0.0 {
                BoundaryTag::Dirichlet
            } else {
                BoundaryTag::Neumann("load".into())
            }
        })
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn refinement_conserves_area_and_conformity(m in arb_rectangle(), r in 1usize..5) {
        let f = refine_uniform(&m, r).unwrap();
        prop_assert!((f.mesh.total_area() - m.total_area()).abs() <= 1e-12 * m.total_area());
        assert_conforming(&f.mesh);
        let tags: BTreeSet<_> = f.mesh.boundary.iter().map(|b| b.tag.clone()).collect();
        let coarse: BTreeSet<_> = m.boundary.iter().map(|b| b.tag.clone()).collect();
        prop_assert_eq!(tags, coarse);
    }

    #[test]
    fn prolongation_reproduces_linear_fields(m in arb_rectangle(), r in 1usize..5, a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
        let f = refine_uniform(&m, r).unwrap();
        let lin = |p: [f64; 2]| [a + b * p[0] - c * p[1], c + a * p[0] + b * p[1]];
        let coarse: Vec<f64> = m.nodes.iter().flat_map(|&p| lin(p)).collect();
        let fine = f.prolongation.apply(&coarse, 2);
        for (k, p) in f.mesh.nodes.iter().enumerate() {
            let v = lin(*p);
            prop_assert!((fine[2 * k] - v[0]).abs() <= 1e-13 * (1.0 + v[0].abs()));
            prop_assert!((fine[2 * k + 1] - v[1]).abs() <= 1e-13 * (1.0 + v[1].abs()));
        }
    }

    #[test]
    fn partition_is_a_disjoint_cover(m in arb_rectangle(), nx in 1usize..4, ny in 1usize..4) {
        let p = partition_regular(&m, nx, ny).unwrap();
        let mut seen = vec![0usize; m.n_elements()];
        for s in 0..p.n_subdomains {
            for e in p.elements_of(s) {
                seen[e] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let incident = p.node_subdomains(&m);
        for (v, subs) in incident.iter().enumerate() {
            prop_assert_eq!(subs.len() >= 2, p.interface_nodes.contains(&v));
        }
    }

    #[test]
    fn refined_partition_keeps_parent_subdomains(m in arb_rectangle(), split in 0.2f64..0.8) {
        let (lo, hi) = m.bounding_box();
        let cut = lo[0] + split * (hi[0] - lo[0]);
        let Ok(p) = partition_by_centroid(&m, |c| usize::from(c[0] > cut)) else { return Ok(()); };
        let r = refine_by_splitting(&m).unwrap();
        let q = p.refine(&r).unwrap();
        for (c, &parent) in r.parent.iter().enumerate() {
            prop_assert_eq!(q.subdomain_of[c], p.subdomain_of[parent]);
        }
        for &v in &p.interface_nodes {
            prop_assert!(q.interface_nodes.contains(&v));
        }
    }
}
