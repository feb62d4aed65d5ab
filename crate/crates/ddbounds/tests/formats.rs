use ddbounds::benchmarks::square_problem;
use ddbounds::core::fem::{Hypothesis, Traction};
use ddbounds::core::mesh::{BoundaryTag, Mesh};
use ddbounds::expr::Expr;
use ddbounds::formats::{read_json, write_json, MeshFile, PartitionFile, ProblemConfig};
use ddbounds::Error;
use proptest::prelude::*;

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-1e3f64..1e3).prop_map(Expr::Num),
        (1u32..6).prop_map(|k| Expr::Num(f64::from(k))),
        Just(Expr::X),
        Just(Expr::Y),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
            (inner, 0u32..4).prop_map(|(a, k)| Expr::Pow(Box::new(a), Box::new(Expr::Num(f64::from(k))))),
        ]
    })
}

proptest! {
    #[test]
    fn printed_expressions_parse_back(e in arb_expr(), x in -5.0f64..5.0, y in -5.0f64..5.0) {
        let back: Expr = e.to_string().parse().unwrap();
        prop_assert!(same(back.eval(x, y), e.eval(x, y)), "{e}");
    }

    #[test]
    fn mesh_file_round_trip(n in 1usize..6) {
        let p = square_problem(n, (1, 1), 1.0).unwrap();
        let text = serde_json::to_string(&MeshFile::from_mesh(&p.mesh)).unwrap();
        let back = serde_json::from_str::<MeshFile>(&text).unwrap().to_mesh().unwrap();
        prop_assert_eq!(back, p.mesh);
    }
}

#[test]
fn expression_values() {
    let e: Expr = "3*x^2 - y/2 + (x - 1)^3".parse().unwrap();
    assert_eq!(e.eval(2.0, 4.0), 12.0 - 2.0 + 1.0);
    let e: Expr = "2^0.5".parse().unwrap();
    assert!((e.eval(0.0, 0.0) - 2f64.sqrt()).abs() < 1e-15);
    assert!(matches!("sin(x)".parse::<Expr>(), Err(Error::Parse(_))));
}

fn mesh_json() -> &'static str {
    r#"{
        "nodes": [[0,0],[1,0],[1,1],[0,1]],
        "elements": [[0,1,2],[0,2,3]],
        "boundary": [
            {"nodes":[0,1],"tag":"neumann:bottom"},
            {"nodes":[1,2],"tag":"neumann:right"},
            {"nodes":[2,3],"tag":"free"},
            {"nodes":[3,0],"tag":"dirichlet"}
        ],
        "regions": {"q": [1]}
    }"#
}

#[test]
fn mesh_file_tags() {
    let m: Mesh = serde_json::from_str::<MeshFile>(mesh_json()).unwrap().to_mesh().unwrap();
    let tag = |a: usize, b: usize| {
        m.boundary.iter().find(|e| e.nodes == [a, b] || e.nodes == [b, a]).map(|e| e.tag.clone()).unwrap()
    };
    assert_eq!(tag(0, 1), BoundaryTag::Neumann("bottom".into()));
    assert_eq!(tag(1, 2), BoundaryTag::Neumann("right".into()));
    assert_eq!(tag(2, 3), BoundaryTag::Free);
    assert_eq!(tag(3, 0), BoundaryTag::Dirichlet);
    assert_eq!(m.regions["q"], vec![1]);
    let bad = mesh_json().replace("free", "sticky");
    assert!(serde_json::from_str::<MeshFile>(&bad).unwrap().to_mesh().is_err());
}

#[test]
fn partition_file_validates_length() {
    let m = serde_json::from_str::<MeshFile>(mesh_json()).unwrap().to_mesh().unwrap();
    let p = PartitionFile { subdomain_of: vec![0, 1] }.to_partition(&m).unwrap();
    assert_eq!(p.n_subdomains, 2);
    assert!(PartitionFile { subdomain_of: vec![0] }.to_partition(&m).is_err());
}

#[test]
fn problem_config_builds_loads() {
    let text = r#"{
        "material": {"young": 210.0, "poisson": 0.3, "hypothesis": "plane_stress"},
        "body_force": ["x*y", "-2"],
        "tractions": {"right": {"pressure": 1.5}, "bottom": {"x": "x", "y": "0"}},
        "qoi": {"region": "q"},
        "solver": {"approach": "feti", "tolerance": 1e-6}
    }"#;
    let c: ProblemConfig = serde_json::from_str(text).unwrap();
    assert_eq!(c.patch_refine, 4);
    assert_eq!(c.solver.max_iterations, 500);
    let m = c.material.to_material().unwrap();
    assert_eq!(m.hypothesis, Hypothesis::PlaneStress);
    let loads = c.loads().unwrap();
    assert_eq!(loads.body([2.0, 3.0]), [6.0, -2.0]);
    assert_eq!(loads.tractions["right"].eval([0.0, 0.0], [1.0, 0.0]), [-1.5, 0.0]);
    assert!(matches!(&loads.tractions["bottom"], Traction::Field(_)));
    assert_eq!(loads.tractions["bottom"].eval([0.25, 0.0], [0.0, -1.0]), [0.25, 0.0]);

    let bad: ProblemConfig = serde_json::from_str(&text.replace("x*y", "x*")).unwrap();
    assert!(bad.loads().is_err());
}

#[test]
fn json_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    let p = PartitionFile { subdomain_of: vec![3, 1, 4, 1, 5] };
    write_json(&path, &p).unwrap();
    assert_eq!(read_json::<PartitionFile>(&path).unwrap(), p);
    assert!(matches!(read_json::<PartitionFile>(&dir.path().join("missing.json")), Err(Error::Io { .. })));
    std::fs::write(&path, "{").unwrap();
    assert!(matches!(read_json::<PartitionFile>(&path), Err(Error::Json { .. })));
}
