//! JSON file formats for meshes, partitions and problem configurations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ddbounds_core::ddsolver::Approach;
use ddbounds_core::fem::{Hypothesis, LoadSet, Material, Traction};
use ddbounds_core::mesh::{BoundaryEdge, BoundaryTag, Mesh, Partition};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::expr::ExprField;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFile {
    pub nodes: [usize; 2],
    /// `dirichlet`, `free` or `neumann:<name>`.
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshFile {
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 3]>,
    pub boundary: Vec<EdgeFile>,
    #[serde(default)]
    pub regions: BTreeMap<String, Vec<usize>>,
}

impl MeshFile {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        Self {
            nodes: mesh.nodes.clone(),
            elements: mesh.elements.clone(),
            boundary: mesh.boundary.iter().map(|b| EdgeFile { nodes: b.nodes, tag: b.tag.label() }).collect(),
            regions: mesh.regions.clone(),
        }
    }

    pub fn to_mesh(&self) -> Result<Mesh, Error> {
        let boundary = self
            .boundary
            .iter()
            .map(|e| {
                BoundaryTag::parse(&e.tag)
                    .map(|tag| BoundaryEdge { nodes: e.nodes, tag })
                    .ok_or_else(|| Error::Config(format!("unknown boundary tag '{}'", e.tag)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Mesh::new(self.nodes.clone(), self.elements.clone(), boundary, self.regions.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub subdomain_of: Vec<usize>,
}

impl PartitionFile {
    pub fn to_partition(&self, mesh: &Mesh) -> Result<Partition, Error> {
        Ok(Partition::new(mesh, self.subdomain_of.clone())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisFile {
    PlaneStrain,
    PlaneStress,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialFile {
    pub young: f64,
    pub poisson: f64,
    pub hypothesis: HypothesisFile,
}

impl MaterialFile {
    pub fn to_material(&self) -> Result<Material, Error> {
        let h = match self.hypothesis {
            HypothesisFile::PlaneStrain => Hypothesis::PlaneStrain,
            HypothesisFile::PlaneStress => Hypothesis::PlaneStress,
        };
        Ok(Material::new(self.young, self.poisson, h)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TractionFile {
    Pressure { pressure: f64 },
    Field { x: String, y: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApproachFile {
    #[default]
    Bdd,
    Feti,
}

impl From<ApproachFile> for Approach {
    fn from(a: ApproachFile) -> Self {
        match a {
            ApproachFile::Bdd => Approach::PrimalBdd,
            ApproachFile::Feti => Approach::DualFeti,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverFile {
    #[serde(default)]
    pub approach: ApproachFile,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_max_iterations() -> usize {
    500
}

fn default_patch_refine() -> usize {
    4
}

impl Default for SolverFile {
    fn default() -> Self {
        Self { approach: ApproachFile::Bdd, tolerance: default_tolerance(), max_iterations: default_max_iterations() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoiFile {
    /// Region label; the quantity is the mean of `σxx` over it.
    pub region: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub material: MaterialFile,
    /// Body force components as expressions in `x` and `y`.
    #[serde(default)]
    pub body_force: Option<[String; 2]>,
    #[serde(default)]
    pub tractions: BTreeMap<String, TractionFile>,
    #[serde(default)]
    pub qoi: Option<QoiFile>,
    #[serde(default)]
    pub solver: SolverFile,
    #[serde(default = "default_patch_refine")]
    pub patch_refine: usize,
}

impl ProblemConfig {
    pub fn loads(&self) -> Result<LoadSet, Error> {
        let mut loads = LoadSet::default();
        if let Some([fx, fy]) = &self.body_force {
            loads.body_force = Some(Arc::new(ExprField::parse(fx, fy)?));
        }
        for (name, t) in &self.tractions {
            let tr = match t {
                TractionFile::Pressure { pressure } => Traction::Pressure(*pressure),
                TractionFile::Field { x, y } => Traction::Field(Arc::new(ExprField::parse(x, y)?)),
            };
            loads.tractions.insert(name.clone(), tr);
        }
        Ok(loads)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
