//! P1 plane linear elasticity.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{CsrMatrix, SkylineCholesky};
use crate::mesh::{BoundaryTag, Mesh, Point};
use crate::quadrature::{segment_length, LineRule, TriangleRule};
use crate::{Error, Result};

/// Quadrature degree used for loads and estimator moments.
pub const DEFAULT_QUADRATURE_DEGREE: usize = 8;
/// Quadrature degree for true-error integrals against the analytic solution.
pub const ERROR_QUADRATURE_DEGREE: usize = 10;

pub type Voigt = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    PlaneStrain,
    PlaneStress,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub young: f64,
    pub poisson: f64,
    pub hypothesis: Hypothesis,
}

impl Material {
    pub fn new(young: f64, poisson: f64, hypothesis: Hypothesis) -> Result<Self> {
        if !(young > 0.0) || !young.is_finite() {
            return Err(Error::InvalidMaterial(format!("Young modulus must be positive, got {young}")));
        }
        if !(poisson > -1.0 && poisson < 0.5) {
            return Err(Error::InvalidMaterial(format!("Poisson ratio must lie in (-1, 0.5), got {poisson}")));
        }
        Ok(Self { young, poisson, hypothesis })
    }

    pub fn hooke(&self) -> Mat3 {
        let (e, nu) = (self.young, self.poisson);
        match self.hypothesis {
            Hypothesis::PlaneStrain => {
                let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
                [[c * (1.0 - nu), c * nu, 0.0], [c * nu, c * (1.0 - nu), 0.0], [0.0, 0.0, c * (1.0 - 2.0 * nu) / 2.0]]
            }
            Hypothesis::PlaneStress => {
                let c = e / (1.0 - nu * nu);
                [[c, c * nu, 0.0], [c * nu, c, 0.0], [0.0, 0.0, c * (1.0 - nu) / 2.0]]
            }
        }
    }

    /// Inverse of the Hooke matrix.
    pub fn compliance(&self) -> Mat3 {
        invert3(&self.hooke())
    }
}

pub(crate) fn invert3(m: &Mat3) -> Mat3 {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, d) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    inv
}

pub fn mat_vec(m: &Mat3, v: &Voigt) -> Voigt {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn dot3(a: &Voigt, b: &Voigt) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `aᵀ M b`.
pub fn quad_form(m: &Mat3, a: &Voigt, b: &Voigt) -> f64 {
    dot3(a, &mat_vec(m, b))
}

/// Area and constant barycentric gradients of a triangle.
#[derive(Debug, Clone, Copy)]
pub struct Geometry {
    pub area: f64,
    pub grad: [[f64; 2]; 3],
}

impl Geometry {
    pub fn new(p: &[Point; 3]) -> Self {
        let area = crate::mesh::signed_area(p);
        let mut grad = [[0.0; 2]; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            grad[i] = [(p[j][1] - p[k][1]) / (2.0 * area), (p[k][0] - p[j][0]) / (2.0 * area)];
        }
        Self { area, grad }
    }

    /// Strain of a P1 field with element values `u = [ux0, uy0, ux1, ...]`.
    pub fn strain(&self, u: &[f64; 6]) -> Voigt {
        let mut e = [0.0; 3];
        for i in 0..3 {
            let (gx, gy) = (self.grad[i][0], self.grad[i][1]);
            e[0] += gx * u[2 * i];
            e[1] += gy * u[2 * i + 1];
            e[2] += gy * u[2 * i] + gx * u[2 * i + 1];
        }
        e
    }

    /// `∫ σ : ε(φ_i e_d)` for a constant stress, as a 6-vector over local dofs.
    pub fn stress_work(&self, s: &Voigt) -> [f64; 6] {
        let mut out = [0.0; 6];
        for i in 0..3 {
            let (gx, gy) = (self.grad[i][0], self.grad[i][1]);
            out[2 * i] = self.area * (s[0] * gx + s[2] * gy);
            out[2 * i + 1] = self.area * (s[2] * gx + s[1] * gy);
        }
        out
    }

    pub fn stiffness(&self, h: &Mat3) -> [[f64; 6]; 6] {
        let mut b = [[0.0; 6]; 3];
        for i in 0..3 {
            let (gx, gy) = (self.grad[i][0], self.grad[i][1]);
            b[0][2 * i] = gx;
            b[1][2 * i + 1] = gy;
            b[2][2 * i] = gy;
            b[2][2 * i + 1] = gx;
        }
        let mut k = [[0.0; 6]; 6];
        for a in 0..6 {
            let col_a = [b[0][a], b[1][a], b[2][a]];
            let hb = mat_vec(h, &col_a);
            for c in 0..6 {
                k[c][a] = self.area * (b[0][c] * hb[0] + b[1][c] * hb[1] + b[2][c] * hb[2]);
            }
        }
        k
    }
}

pub fn element_dofs(el: &[usize; 3]) -> [usize; 6] {
    [2 * el[0], 2 * el[0] + 1, 2 * el[1], 2 * el[1] + 1, 2 * el[2], 2 * el[2] + 1]
}

pub fn gather(el: &[usize; 3], u: &[f64]) -> [f64; 6] {
    element_dofs(el).map(|d| u[d])
}

/// A vector field over the plane.
pub trait VectorField: Send + Sync {
    fn eval(&self, p: Point) -> [f64; 2];
}

impl<F: Fn(Point) -> [f64; 2] + Send + Sync> VectorField for F {
    fn eval(&self, p: Point) -> [f64; 2] {
        self(p)
    }
}

#[derive(Clone)]
pub enum Traction {
    /// Surface force density.
    Field(Arc<dyn VectorField>),
    /// Normal pressure `p`, i.e. traction `−p·n`.
    Pressure(f64),
}

impl core::fmt::Debug for Traction {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::Field(_) => f.write_str("Traction::Field(..)"),
            Self::Pressure(p) => write!(f, "Traction::Pressure({p})"),
        }
    }
}

impl Traction {
    pub fn eval(&self, p: Point, normal: [f64; 2]) -> [f64; 2] {
        match self {
            Self::Field(g) => g.eval(p),
            Self::Pressure(q) => [-q * normal[0], -q * normal[1]],
        }
    }
}

/// Loading of a problem. `region_stress` maps a region label to a constant
/// Voigt stress `σ_Σ` contributing `∫_ω σ_Σ : ε(v)` to the load functional.
#[derive(Clone, Default)]
pub struct LoadSet {
    pub body_force: Option<Arc<dyn VectorField>>,
    pub tractions: BTreeMap<String, Traction>,
    pub dirichlet: Option<Arc<dyn VectorField>>,
    pub region_stress: BTreeMap<String, Voigt>,
}

impl core::fmt::Debug for LoadSet {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("LoadSet")
            .field("body_force", &self.body_force.is_some())
            .field("tractions", &self.tractions)
            .field("dirichlet", &self.dirichlet.is_some())
            .field("region_stress", &self.region_stress)
            .finish()
    }
}

impl LoadSet {
    pub fn with_body_force(f: impl VectorField + 'static) -> Self {
        Self { body_force: Some(Arc::new(f)), ..Self::default() }
    }

    pub fn body(&self, p: Point) -> [f64; 2] {
        self.body_force.as_ref().map_or([0.0; 2], |f| f.eval(p))
    }

    /// Checks every traction and region label against the mesh.
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let tags = mesh.neumann_tags();
        if let Some(t) = self.tractions.keys().find(|t| !tags.contains(*t)) {
            return Err(Error::UnknownTractionTag(t.clone()));
        }
        if let Some(r) = self.region_stress.keys().find(|r| !mesh.regions.contains_key(*r)) {
            return Err(Error::UnknownRegion(r.clone()));
        }
        Ok(())
    }

    /// Per-element constant extractor stress.
    pub fn element_region_stress(&self, mesh: &Mesh) -> Vec<Voigt> {
        let mut out = vec![[0.0; 3]; mesh.n_elements()];
        for (label, s) in &self.region_stress {
            if let Some(els) = mesh.regions.get(label) {
                for &e in els {
                    for k in 0..3 {
                        out[e][k] += s[k];
                    }
                }
            }
        }
        out
    }
}

/// Outward unit normal of a boundary edge whose node order follows the
/// owning element's counter-clockwise orientation.
pub fn outward_normal(a: Point, b: Point) -> [f64; 2] {
    let len = segment_length(a, b);
    [(b[1] - a[1]) / len, -(b[0] - a[0]) / len]
}

pub fn assemble_stiffness(mesh: &Mesh, material: &Material) -> Result<CsrMatrix> {
    let h = material.hooke();
    let mut trip = Vec::with_capacity(36 * mesh.n_elements());
    for (e, el) in mesh.elements.iter().enumerate() {
        let g = Geometry::new(&mesh.vertices(e));
        if !(g.area > 0.0) {
            return Err(Error::DegenerateElement { element: e, area: g.area });
        }
        let k = g.stiffness(&h);
        let dofs = element_dofs(el);
        for a in 0..6 {
            for b in 0..6 {
                trip.push((dofs[a], dofs[b], k[a][b]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(mesh.n_dofs(), mesh.n_dofs(), &trip))
}

/// `f_i = ∫ f·φ_i + ∫ g·φ_i + ∫_ω σ_Σ : ε(φ_i)`.
pub fn assemble_load(mesh: &Mesh, loads: &LoadSet, degree: usize) -> Result<Vec<f64>> {
    loads.validate(mesh)?;
    assemble_load_unchecked(mesh, loads, degree)
}

/// As [`assemble_load`] but tolerates labels absent from `mesh` (sub-meshes).
pub(crate) fn assemble_load_unchecked(mesh: &Mesh, loads: &LoadSet, degree: usize) -> Result<Vec<f64>> {
    if degree == 0 {
        return Err(Error::InvalidConfig("quadrature degree must be at least 1".into()));
    }
    let mut f = vec![0.0; mesh.n_dofs()];
    if let Some(body) = &loads.body_force {
        let rule = TriangleRule::new(degree);
        for (e, el) in mesh.elements.iter().enumerate() {
            let v = rule.integrate::<6>(&mesh.vertices(e), |x, b| {
                let fx = body.eval(x);
                [fx[0] * b[0], fx[1] * b[0], fx[0] * b[1], fx[1] * b[1], fx[0] * b[2], fx[1] * b[2]]
            });
            for (k, d) in element_dofs(el).iter().enumerate() {
                f[*d] += v[k];
            }
        }
    }
    let line = LineRule::new(degree);
    for be in &mesh.boundary {
        let BoundaryTag::Neumann(name) = &be.tag else { continue };
        let Some(t) = loads.tractions.get(name) else { continue };
        let (a, b) = (mesh.nodes[be.nodes[0]], mesh.nodes[be.nodes[1]]);
        let len = segment_length(a, b);
        let n = outward_normal(a, b);
        for (s, w) in line.points.iter().zip(&line.weights) {
            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let g = t.eval(x, n);
            for (k, phi) in [(0, 1.0 - s), (1, *s)] {
                f[2 * be.nodes[k]] += w * len * g[0] * phi;
                f[2 * be.nodes[k] + 1] += w * len * g[1] * phi;
            }
        }
    }
    let pre = loads.element_region_stress(mesh);
    for (e, el) in mesh.elements.iter().enumerate() {
        if pre[e] == [0.0; 3] {
            continue;
        }
        let g = Geometry::new(&mesh.vertices(e));
        let w = g.stress_work(&pre[e]);
        for (k, d) in element_dofs(el).iter().enumerate() {
            f[*d] += w[k];
        }
    }
    Ok(f)
}

/// Dirichlet dofs (both components of every Dirichlet node) with values.
pub fn dirichlet_conditions(mesh: &Mesh, loads: &LoadSet) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for n in mesh.dirichlet_nodes() {
        let v = loads.dirichlet.as_ref().map_or([0.0; 2], |g| g.eval(mesh.nodes[n]));
        out.push((2 * n, v[0]));
        out.push((2 * n + 1, v[1]));
    }
    out
}

#[derive(Debug, Clone)]
pub struct DirectSolution {
    pub u: Vec<f64>,
    /// Nodal reactions, nonzero only on Dirichlet dofs: `K u = f + λ_d`.
    pub reactions: Vec<f64>,
}

/// Direct solve with symmetric Dirichlet elimination.
pub fn solve_dirichlet_direct(k: &CsrMatrix, f: &[f64], dirichlet: &[(usize, f64)]) -> Result<DirectSolution> {
    let n = k.nrows;
    let mut fixed = vec![false; n];
    let mut u = vec![0.0; n];
    for &(d, v) in dirichlet {
        fixed[d] = true;
        u[d] = v;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    let kff = k.submatrix(&free, &free);
    let ku = k.mul_vec(&u);
    let rhs: Vec<f64> = free.iter().map(|&i| f[i] - ku[i]).collect();
    let fac = SkylineCholesky::factor(&kff).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, .. } => {
            Error::SingularSystem(format!("constrained stiffness is singular near free dof {}", free[pivot]))
        }
        other => other,
    })?;
    let uf = fac.solve(&rhs);
    for (&i, v) in free.iter().zip(uf) {
        u[i] = v;
    }
    let ku = k.mul_vec(&u);
    let reactions = (0..n).map(|i| if fixed[i] { ku[i] - f[i] } else { 0.0 }).collect();
    Ok(DirectSolution { u, reactions })
}

pub fn element_strains(mesh: &Mesh, u: &[f64]) -> Vec<Voigt> {
    (0..mesh.n_elements())
        .map(|e| Geometry::new(&mesh.vertices(e)).strain(&gather(&mesh.elements[e], u)))
        .collect()
}

pub fn element_stresses(mesh: &Mesh, material: &Material, u: &[f64]) -> Vec<Voigt> {
    let h = material.hooke();
    element_strains(mesh, u).iter().map(|e| mat_vec(&h, e)).collect()
}

/// `|||u|||²` over the listed elements (all when `None`).
pub fn energy_norm_sq(mesh: &Mesh, material: &Material, u: &[f64], elements: Option<&[usize]>) -> f64 {
    let h = material.hooke();
    let one = |e: usize| {
        let g = Geometry::new(&mesh.vertices(e));
        let eps = g.strain(&gather(&mesh.elements[e], u));
        g.area * quad_form(&h, &eps, &eps)
    };
    match elements {
        Some(els) => els.iter().map(|&e| one(e)).sum(),
        None => (0..mesh.n_elements()).map(one).sum(),
    }
}

/// `‖σ‖²` in the complementary energy for piecewise-constant stresses.
pub fn stress_energy_sq(mesh: &Mesh, material: &Material, stress: &[Voigt]) -> f64 {
    let c = material.compliance();
    stress.iter().enumerate().map(|(e, s)| mesh.area(e) * quad_form(&c, s, s)).sum()
}

/// `L(w) − ∫ σ_source : ε(w)` for a P1 test field `w` on `mesh`, with
/// `source_stress` constant per element of `mesh`.
pub fn residual_functional(
    mesh: &Mesh,
    loads: &LoadSet,
    source_stress: &[Voigt],
    w: &[f64],
    degree: usize,
) -> Result<f64> {
    if w.len() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch { expected: mesh.n_dofs(), got: w.len() });
    }
    let scale = crate::math::max_abs(w);
    let on_dirichlet = mesh
        .dirichlet_nodes()
        .iter()
        .fold(0.0_f64, |m, &n| m.max(w[2 * n].abs()).max(w[2 * n + 1].abs()));
    if on_dirichlet > 1e-12 * scale {
        return Err(Error::NotKinematicallyAdmissible(on_dirichlet));
    }
    let f = assemble_load(mesh, loads, degree)?;
    let mut r = crate::math::dot(&f, w);
    for (e, el) in mesh.elements.iter().enumerate() {
        let g = Geometry::new(&mesh.vertices(e));
        r -= g.area * dot3(&source_stress[e], &g.strain(&gather(el, w)));
    }
    Ok(r)
}

/// `|||u_ex − u_H|||²` by quadrature of the analytic strain.
pub fn true_error_sq(
    mesh: &Mesh,
    material: &Material,
    u: &[f64],
    exact_strain: impl Fn(Point) -> Voigt,
    degree: usize,
) -> f64 {
    let h = material.hooke();
    let rule = TriangleRule::new(degree);
    let mut total = 0.0;
    for (e, el) in mesh.elements.iter().enumerate() {
        let g = Geometry::new(&mesh.vertices(e));
        let eh = g.strain(&gather(el, u));
        let [v] = rule.integrate::<1>(&mesh.vertices(e), |x, _| {
            let ex = exact_strain(x);
            let d = [ex[0] - eh[0], ex[1] - eh[1], ex[2] - eh[2]];
            [quad_form(&h, &d, &d)]
        });
        total += v;
    }
    total
}

/// Analytic benchmark on `[−3l, 3l]²` with homogeneous Dirichlet data:
/// `u = (x²−9l²)(y²−9l²)·((y−3l)², y+3l)`.
#[derive(Debug, Clone, Copy)]
pub struct SquareBenchmark {
    pub l: f64,
    pub material: Material,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactState {
    pub u: [f64; 2],
    pub strain: Voigt,
    pub stress: Voigt,
    pub body_force: [f64; 2],
}

impl SquareBenchmark {
    /// Plane strain, `E = 1`, `ν = 0.3`.
    pub fn standard(l: f64) -> Self {
        Self { l, material: Material { young: 1.0, poisson: 0.3, hypothesis: Hypothesis::PlaneStrain } }
    }

    pub fn evaluate(&self, p: Point) -> ExactState {
        let (x, y, l) = (p[0], p[1], self.l);
        let a = x * x - 9.0 * l * l;
        let b = y * y - 9.0 * l * l;
        let (ym, yp) = (y - 3.0 * l, y + 3.0 * l);
        let u = [a * b * ym * ym, a * b * yp];
        let ux_x = 2.0 * x * b * ym * ym;
        let ux_y = a * (2.0 * y * ym * ym + 2.0 * b * ym);
        let uy_x = 2.0 * x * b * yp;
        let uy_y = a * (2.0 * y * yp + b);
        let ux_xx = 2.0 * b * ym * ym;
        let ux_xy = 2.0 * x * (2.0 * y * ym * ym + 2.0 * b * ym);
        let ux_yy = a * (2.0 * ym * ym + 8.0 * y * ym + 2.0 * b);
        let uy_xx = 2.0 * b * yp;
        let uy_xy = 2.0 * x * (2.0 * y * yp + b);
        let uy_yy = a * (2.0 * yp + 4.0 * y);
        let h = self.material.hooke();
        let strain = [ux_x, uy_y, ux_y + uy_x];
        let stress = mat_vec(&h, &strain);
        let dsx = mat_vec(&h, &[ux_xx, uy_xy, ux_xy + uy_xx]);
        let dsy = mat_vec(&h, &[ux_xy, uy_yy, ux_yy + uy_xy]);
        let body_force = [-(dsx[0] + dsy[2]), -(dsx[2] + dsy[1])];
        ExactState { u, strain, stress, body_force }
    }

    pub fn loads(&self) -> LoadSet {
        let me = *self;
        LoadSet::with_body_force(move |p: Point| me.evaluate(p).body_force)
    }
}
