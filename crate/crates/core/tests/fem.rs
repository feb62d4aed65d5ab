use ddbounds_core::fem::{
    assemble_load, assemble_stiffness, dirichlet_conditions, element_stresses, energy_norm_sq, residual_functional,
    solve_dirichlet_direct, true_error_sq, Geometry, Hypothesis, LoadSet, Material, SquareBenchmark, Traction,
    DEFAULT_QUADRATURE_DEGREE, ERROR_QUADRATURE_DEGREE,
};
use ddbounds_core::mesh::{build_structured_rectangle, build_structured_square, BoundaryTag, Mesh};
use proptest::prelude::*;

fn plane_strain() -> Material {
    Material::new(1.0, 0.3, Hypothesis::PlaneStrain).unwrap()
}

/// Lamé-form stress of a strain, independent of the Voigt Hooke matrix.
fn lame_energy(material: &Material, grad: [[f64; 2]; 2]) -> f64 {
    let (e, nu) = (material.young, material.poisson);
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = match material.hypothesis {
        Hypothesis::PlaneStrain => e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
        Hypothesis::PlaneStress => e * nu / (1.0 - nu * nu),
    };
    let eps = [[grad[0][0], 0.5 * (grad[0][1] + grad[1][0])], [0.5 * (grad[0][1] + grad[1][0]), grad[1][1]]];
    let tr = eps[0][0] + eps[1][1];
    let mut w = lambda * tr * tr;
    for i in 0..2 {
        for j in 0..2 {
            w += 2.0 * mu * eps[i][j] * eps[i][j];
        }
    }
    w
}

/// Displacement gradient of a P1 field on one triangle from edge differences.
fn p1_gradient(p: [[f64; 2]; 3], u: [[f64; 2]; 3]) -> [[f64; 2]; 2] {
    let (a, b, c, d) = (p[1][0] - p[0][0], p[1][1] - p[0][1], p[2][0] - p[0][0], p[2][1] - p[0][1]);
    let det = a * d - b * c;
    let mut g = [[0.0; 2]; 2];
    for k in 0..2 {
        let (r1, r2) = (u[1][k] - u[0][k], u[2][k] - u[0][k]);
        g[k][0] = (d * r1 - b * r2) / det;
        g[k][1] = (a * r2 - c * r1) / det;
    }
    g
}

fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

fn clamped_strip(nx: usize, ny: usize) -> Mesh {
    build_structured_rectangle(nx, ny, [0.0, 0.0], [4.0, 1.0], |a, b| {
        if a[0] == 0.0 && b[0] == 0.0 {
            BoundaryTag::Dirichlet
        } else if a[0] == 4.0 && b[0] == 4.0 {
            BoundaryTag::Neumann("end".into())
        } else {
            BoundaryTag::Free
        }
    })
    .unwrap()
}

#[test]
fn stiffness_is_symmetric() {
    let m = build_structured_square(5, 1.0).unwrap();
    let k = assemble_stiffness(&m, &plane_strain()).unwrap();
    assert!(k.asymmetry() <= 1e-14 * k.max_abs());
}

#[test]
fn quadratic_form_matches_quadrature_oracle() {
    for hyp in [Hypothesis::PlaneStrain, Hypothesis::PlaneStress] {
        let material = Material::new(2.0, 0.25, hyp).unwrap();
        let m = build_structured_square(4, 0.5).unwrap();
        let k = assemble_stiffness(&m, &material).unwrap();
        let u = pseudo_random(m.n_dofs(), 7);
        let mut oracle = 0.0;
        for (e, el) in m.elements.iter().enumerate() {
            let p = m.vertices(e);
            let ue = [0, 1, 2].map(|i| [u[2 * el[i]], u[2 * el[i] + 1]]);
            oracle += m.area(e) * lame_energy(&material, p1_gradient(p, ue));
        }
        let quad = k.bilinear(&u, &u);
        assert!((quad - oracle).abs() <= 1e-12 * oracle);
        assert!((energy_norm_sq(&m, &material, &u, None) - quad).abs() <= 1e-12 * quad);
    }
}

#[test]
fn zero_loads_give_zero_vector() {
    let m = build_structured_square(3, 1.0).unwrap();
    let f = assemble_load(&m, &LoadSet::default(), DEFAULT_QUADRATURE_DEGREE).unwrap();
    assert!(f.iter().all(|v| *v == 0.0));
}

#[test]
fn constant_body_force_partition_of_unity() {
    let m = build_structured_rectangle(3, 4, [0.0, 0.0], [1.0, 1.0], |_, _| BoundaryTag::Dirichlet).unwrap();
    let f = assemble_load(&m, &LoadSet::with_body_force(|_: [f64; 2]| [1.0, 0.0]), 4).unwrap();
    let fx: f64 = f.iter().step_by(2).sum();
    let fy: f64 = f.iter().skip(1).step_by(2).sum();
    assert!((fx - 1.0).abs() < 1e-12);
    assert!(fy.abs() < 1e-12);
}

#[test]
fn benchmark_load_quadrature_is_converged() {
    let b = SquareBenchmark::standard(1.0);
    let m = build_structured_square(6, 1.0).unwrap();
    let f8 = assemble_load(&m, &b.loads(), 8).unwrap();
    let f12 = assemble_load(&m, &b.loads(), 12).unwrap();
    let scale = f12.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for (a, c) in f8.iter().zip(&f12) {
        assert!((a - c).abs() <= 1e-10 * scale);
    }
}

#[test]
fn unknown_traction_tag_is_rejected() {
    let m = clamped_strip(4, 1);
    let mut loads = LoadSet::default();
    loads.tractions.insert("missing".into(), Traction::Pressure(1.0));
    assert!(assemble_load(&m, &loads, 4).is_err());
}

#[test]
fn direct_solve_residual_and_equilibrium() {
    let m = clamped_strip(8, 2);
    let material = plane_strain();
    let mut loads = LoadSet::with_body_force(|p: [f64; 2]| [0.1 * p[1], -0.3]);
    loads.tractions.insert("end".into(), Traction::Field(std::sync::Arc::new(|p: [f64; 2]| [1.0, p[1]])));
    let k = assemble_stiffness(&m, &material).unwrap();
    let f = assemble_load(&m, &loads, DEFAULT_QUADRATURE_DEGREE).unwrap();
    let dir = dirichlet_conditions(&m, &loads);
    let sol = solve_dirichlet_direct(&k, &f, &dir).unwrap();
    let ku = k.mul_vec(&sol.u);
    let fnorm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let fixed: std::collections::BTreeSet<usize> = dir.iter().map(|d| d.0).collect();
    let res: f64 = (0..m.n_dofs()).filter(|i| !fixed.contains(i)).map(|i| (ku[i] - f[i]).powi(2)).sum::<f64>().sqrt();
    assert!(res <= 1e-10 * fnorm);
    for c in 0..2 {
        let total: f64 = (c..m.n_dofs()).step_by(2).map(|i| f[i] + sol.reactions[i]).sum();
        assert!(total.abs() <= 1e-10 * fnorm, "component {c}: {total}");
    }
}

#[test]
fn rigid_fields_carry_no_energy() {
    let m = build_structured_square(4, 1.0).unwrap();
    let u: Vec<f64> = m.nodes.iter().flat_map(|p| [0.3 - 0.7 * p[1], -1.1 + 0.7 * p[0]]).collect();
    let e = energy_norm_sq(&m, &plane_strain(), &u, None);
    assert!(e.abs() < 1e-24);
}

#[test]
fn energy_is_additive_over_element_sets() {
    let m = build_structured_square(4, 1.0).unwrap();
    let u = pseudo_random(m.n_dofs(), 3);
    let mat = plane_strain();
    let (left, right): (Vec<usize>, Vec<usize>) = (0..m.n_elements()).partition(|&e| m.centroid(e)[0] < 0.7);
    let total = energy_norm_sq(&m, &mat, &u, None);
    let split = energy_norm_sq(&m, &mat, &u, Some(&left)) + energy_norm_sq(&m, &mat, &u, Some(&right));
    assert!((total - split).abs() <= 1e-12 * total);
}

#[test]
fn residual_functional_identities() {
    let b = SquareBenchmark::standard(1.0);
    let m = build_structured_square(6, 1.0).unwrap();
    let loads = b.loads();
    let k = assemble_stiffness(&m, &b.material).unwrap();
    let f = assemble_load(&m, &loads, DEFAULT_QUADRATURE_DEGREE).unwrap();
    let u = solve_dirichlet_direct(&k, &f, &dirichlet_conditions(&m, &loads)).unwrap().u;
    let dir = m.dirichlet_nodes();
    let mut w = pseudo_random(m.n_dofs(), 11);
    for &n in &dir {
        w[2 * n] = 0.0;
        w[2 * n + 1] = 0.0;
    }
    let lw: f64 = f.iter().zip(&w).map(|(a, c)| a * c).sum();

    let sigma = element_stresses(&m, &b.material, &u);
    let galerkin = residual_functional(&m, &loads, &sigma, &w, DEFAULT_QUADRATURE_DEGREE).unwrap();
    assert!(galerkin.abs() <= 1e-10 * lw.abs().max(1.0));

    let zero = vec![[0.0; 3]; m.n_elements()];
    let plain = residual_functional(&m, &loads, &zero, &w, DEFAULT_QUADRATURE_DEGREE).unwrap();
    assert!((plain - lw).abs() <= 1e-12 * lw.abs());

    let v = pseudo_random(m.n_dofs(), 5);
    let sigma_v = element_stresses(&m, &b.material, &v);
    let r = residual_functional(&m, &loads, &sigma_v, &w, DEFAULT_QUADRATURE_DEGREE).unwrap();
    let kv = k.mul_vec(&v);
    let oracle: f64 = w.iter().zip(f.iter().zip(&kv)).map(|(wi, (fi, ki))| wi * (fi - ki)).sum();
    assert!((r - oracle).abs() <= 1e-12 * oracle.abs().max(lw.abs()));

    w[2 * *dir.iter().next().unwrap()] = 1.0;
    assert!(residual_functional(&m, &loads, &zero, &w, 4).is_err());
}

#[test]
fn benchmark_body_force_balances_stress_divergence() {
    let b = SquareBenchmark::standard(1.0);
    let pts = pseudo_random(200, 19);
    let h = 1e-4;
    for q in pts.chunks(2) {
        let p = [3.0 * q[0], 3.0 * q[1]];
        let s = |dx: f64, dy: f64| b.evaluate([p[0] + dx, p[1] + dy]).stress;
        let (xp, xm, yp, ym) = (s(h, 0.0), s(-h, 0.0), s(0.0, h), s(0.0, -h));
        let div = [
            (xp[0] - xm[0]) / (2.0 * h) + (yp[2] - ym[2]) / (2.0 * h),
            (xp[2] - xm[2]) / (2.0 * h) + (yp[1] - ym[1]) / (2.0 * h),
        ];
        let f = b.evaluate(p).body_force;
        let scale = f[0].abs().max(f[1].abs()).max(1.0);
        assert!((f[0] + div[0]).abs() <= 1e-6 * scale, "x at {p:?}");
        assert!((f[1] + div[1]).abs() <= 1e-6 * scale, "y at {p:?}");
    }
}

#[test]
fn benchmark_material_and_boundary_data() {
    let b = SquareBenchmark::standard(1.0);
    assert_eq!(b.material.hypothesis, Hypothesis::PlaneStrain);
    assert_eq!((b.material.young, b.material.poisson), (1.0, 0.3));
    let state = b.evaluate([0.4, -1.2]);
    let h = b.material.hooke();
    let e = state.strain;
    // Lamé: σxx = (λ + 2μ)εxx + λεyy
    let (lambda, mu) = (0.3 / (1.3 * 0.4), 1.0 / 2.6);
    assert!((state.stress[0] - ((lambda + 2.0 * mu) * e[0] + lambda * e[1])).abs() < 1e-9 * state.stress[0].abs());
    assert!((h[2][2] - mu).abs() < 1e-15);
}

#[test]
fn true_error_decreases_under_refinement() {
    let b = SquareBenchmark::standard(1.0);
    let mut last = f64::INFINITY;
    for n in [4, 8, 16] {
        let m = build_structured_square(n, 1.0).unwrap();
        let loads = b.loads();
        let k = assemble_stiffness(&m, &b.material).unwrap();
        let f = assemble_load(&m, &loads, DEFAULT_QUADRATURE_DEGREE).unwrap();
        let u = solve_dirichlet_direct(&k, &f, &dirichlet_conditions(&m, &loads)).unwrap().u;
        let err = true_error_sq(&m, &b.material, &u, |p| b.evaluate(p).strain, ERROR_QUADRATURE_DEGREE).sqrt();
        assert!(err < last);
        last = err;
    }
}

proptest! {
    #[test]
    fn element_stiffness_kernel_and_symmetry(
        x in prop::array::uniform3(-2.0f64..2.0),
        y in prop::array::uniform3(-2.0f64..2.0),
        nu in 0.0f64..0.45,
    ) {
        let mut p = [[x[0], y[0]], [x[1], y[1]], [x[2], y[2]]];
        let a = ddbounds_core::mesh::signed_area(&p);
        prop_assume!(a.abs() > 0.05);
        if a < 0.0 {
            p.swap(1, 2);
        }
        let material = Material::new(1.0, nu, Hypothesis::PlaneStress).unwrap();
        let k = Geometry::new(&p).stiffness(&material.hooke());
        let scale = k.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..6 {
            for j in 0..6 {
                prop_assert!((k[i][j] - k[j][i]).abs() <= 1e-14 * scale);
            }
        }
        let modes = [
            [1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            [-p[0][1], p[0][0], -p[1][1], p[1][0], -p[2][1], p[2][0]],
        ];
        for r in modes {
            for row in &k {
                let s: f64 = row.iter().zip(&r).map(|(a, b)| a * b).sum();
                prop_assert!(s.abs() <= 1e-10 * scale.max(1.0));
            }
        }
    }
}
