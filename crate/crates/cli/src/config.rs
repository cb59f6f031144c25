//! Run configuration: TOML text with nested tables and complex numbers as
//! `[re, im]` arrays.
//!
//! Parsing is two-stage.  Serde checks the shape (unknown keys are rejected
//! with their key path); [`RunConfig::problem`] and friends then check the
//! content against the mesh and physics and collect every issue found.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;
use wavemin::fields::{physical_conditions, Layout, Mesh, SideCondition};
use wavemin::greens::{Comparison3d, SphereOrder};
use wavemin::hs::{ComparisonMedium, CondensedMethod};
use wavemin::linalg::CMatrix;
use wavemin::moduli::{ComplexModuli, Physics, TimeConvention};
use wavemin::solver::{PhysicalProblem, Preconditioner, SolveOptions};

use crate::error::CliError;

/// A complex number, a real number, or a square matrix of either.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum TensorSpec {
    Real(f64),
    Complex([f64; 2]),
    Matrix(Vec<Vec<Entry>>),
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn value(self) -> Complex64 {
        match self {
            Entry::Real(x) => Complex64::new(x, 0.0),
            Entry::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

impl TensorSpec {
    /// Square matrix of size `n`; scalars become multiples of the identity.
    fn matrix(&self, n: usize, key: &str) -> Result<CMatrix, String> {
        let diag = |z: Complex64| CMatrix::from_diagonal_element(n, n, z);
        match self {
            TensorSpec::Real(x) => Ok(diag(Complex64::new(*x, 0.0))),
            TensorSpec::Complex([re, im]) => Ok(diag(Complex64::new(*re, *im))),
            TensorSpec::Matrix(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(format!("{key}: expected a {n}x{n} matrix"));
                }
                Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j].value()))
            }
        }
    }
}

/// One complex value or a list of them (one per component).
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ComplexList {
    One([f64; 2]),
    Many(Vec<[f64; 2]>),
}

impl ComplexList {
    fn values(&self) -> Vec<Complex64> {
        match self {
            ComplexList::One([re, im]) => vec![Complex64::new(*re, *im)],
            ComplexList::Many(v) => v.iter().map(|[re, im]| Complex64::new(*re, *im)).collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Geometry {
    Interval {
        start: f64,
        end: f64,
        cells: usize,
        #[serde(default)]
        regions: Vec<RegionBox>,
    },
    Rectangle {
        lx: f64,
        ly: f64,
        nx: usize,
        ny: usize,
        #[serde(default)]
        regions: Vec<RegionBox>,
    },
}

/// Cells whose centroid lies in the box belong to `name`; the first match
/// wins and unmatched cells belong to "bulk".
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegionBox {
    pub name: String,
    #[serde(default = "neg_inf")]
    pub x_min: f64,
    #[serde(default = "pos_inf")]
    pub x_max: f64,
    #[serde(default = "neg_inf")]
    pub y_min: f64,
    #[serde(default = "pos_inf")]
    pub y_max: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

impl RegionBox {
    fn contains(&self, p: [f64; 2]) -> bool {
        (self.x_min..=self.x_max).contains(&p[0]) && (self.y_min..=self.y_max).contains(&p[1])
    }
}

/// Material parameters of one region.  Which keys apply depends on the
/// physics: elastic uses `stiffness` (or `lambda` and `mu` in two
/// dimensions) and `density`; acoustic uses `compressibility` and
/// `inverse_density`; electromagnetic uses `permittivity`, `permeability`
/// and optionally `convention`.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegionModuli {
    pub stiffness: Option<TensorSpec>,
    pub lambda: Option<Entry>,
    pub mu: Option<Entry>,
    pub density: Option<TensorSpec>,
    pub compressibility: Option<TensorSpec>,
    pub inverse_density: Option<TensorSpec>,
    pub permittivity: Option<TensorSpec>,
    pub permeability: Option<TensorSpec>,
    pub convention: Option<TimeConvention>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SideKind {
    Potential,
    Flux,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SideSpec {
    pub kind: SideKind,
    pub value: ComplexList,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    /// Uniform body source, one complex value per source component.
    pub body: Option<ComplexList>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// Reduced when every dual tensor is real, full otherwise.
    #[default]
    Auto,
    Full,
    Reduced,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum PreconditionerSpec {
    #[default]
    BlockJacobi,
    None,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub preconditioner: PreconditionerSpec,
    pub seed: Option<u64>,
    /// Allow an e^{iθ} rotation when the moduli are not strictly passive.
    #[serde(default)]
    pub rotate: bool,
    #[serde(default)]
    pub formulation: Formulation,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TomographySpec {
    /// Complex field table of the measured state (as written by `solve`).
    pub measured: PathBuf,
    /// Primal field table of the trial field; defaults to the forward
    /// solution of the configured medium under the measured potentials.
    pub trial: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum MethodSpec {
    #[default]
    Dense,
    Cg,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HsSpec {
    /// ℒ₀ = s·ℒ entity by entity.
    pub comparison_scale: Option<f64>,
    /// Homogeneous comparison medium with the keys of a region.
    pub comparison: Option<RegionModuli>,
    #[serde(default)]
    pub method: MethodSpec,
}

/// Comparison medium of the infinite-medium Green's function, either the
/// decoupled scalar surrogate (`d`, `q`) or the six D/Q matrices.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GreensMediumSpec {
    pub d: Option<f64>,
    pub q: Option<f64>,
    pub d1: Option<Vec<Vec<f64>>>,
    pub d2: Option<Vec<Vec<f64>>>,
    pub d3: Option<Vec<Vec<f64>>>,
    pub q1: Option<Vec<Vec<f64>>>,
    pub q2: Option<Vec<Vec<f64>>>,
    pub q3: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GreensSpec {
    pub medium: GreensMediumSpec,
    #[serde(default)]
    pub points: Vec<[f64; 3]>,
    #[serde(default)]
    pub radii: Vec<f64>,
    pub direction: Option<[f64; 3]>,
    pub quadrature_order: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: Option<String>,
    #[serde(default = "default_units")]
    pub units: String,
    pub physics: Option<Physics>,
    pub omega: f64,
    pub geometry: Option<Geometry>,
    #[serde(default)]
    pub regions: BTreeMap<String, RegionModuli>,
    #[serde(default)]
    pub boundary: BTreeMap<String, SideSpec>,
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    pub tomography: Option<TomographySpec>,
    pub hs: Option<HsSpec>,
    pub greens: Option<GreensSpec>,
}

fn default_units() -> String {
    "dimensionless".into()
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tolerance: Option<f64>,
    pub max_iters: Option<usize>,
    pub quadrature_order: Option<usize>,
    pub seed: Option<u64>,
}

/// A parsed configuration together with the directory its relative paths
/// are resolved against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub run_id: String,
    pub base_dir: PathBuf,
}

fn issues(list: Vec<String>) -> Result<(), CliError> {
    if list.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(list))
    }
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Read {
        path: path.to_path_buf(),
        source: e,
    })?;
    let config: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(vec![e.to_string()]))?;
    let run_id = config
        .run_id
        .clone()
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "run".into());
    let mut list = Vec::new();
    if !(config.omega > 0.0 && config.omega.is_finite()) {
        list.push(format!("omega: must be positive and finite, got {}", config.omega));
    }
    if run_id.is_empty() || run_id.contains(['/', '\\']) {
        list.push(format!("run_id: '{run_id}' cannot be used in a file name"));
    }
    issues(list)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, run_id, base_dir })
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn physics(&self) -> Result<Physics, CliError> {
        self.config
            .physics
            .ok_or_else(|| CliError::Config(vec!["physics: required for this subcommand".into()]))
    }

    pub fn mesh(&self) -> Result<Mesh, CliError> {
        let geometry = self
            .config
            .geometry
            .as_ref()
            .ok_or_else(|| CliError::Config(vec!["geometry: required for this subcommand".into()]))?;
        let (mesh, boxes) = match geometry {
            Geometry::Interval {
                start,
                end,
                cells,
                regions,
            } => {
                if !(end > start) || *cells == 0 {
                    return Err(CliError::Config(vec![
                        "geometry: interval needs end > start and cells >= 1".into()
                    ]));
                }
                (Mesh::interval(*start, *end, *cells)?, regions)
            }
            Geometry::Rectangle {
                lx,
                ly,
                nx,
                ny,
                regions,
            } => {
                if !(*lx > 0.0 && *ly > 0.0) {
                    return Err(CliError::Config(vec!["geometry: rectangle needs lx, ly > 0".into()]));
                }
                (Mesh::rectangle(*lx, *ly, *nx, *ny)?, regions)
            }
        };
        if boxes.is_empty() {
            return Ok(mesh);
        }
        Ok(mesh.with_regions(|p| {
            boxes
                .iter()
                .find(|b| b.contains(p))
                .map(|b| b.name.clone())
                .unwrap_or_else(|| "bulk".into())
        })?)
    }

    /// Moduli of every mesh region, in mesh region order.
    pub fn region_moduli(&self, physics: Physics, mesh: &Mesh) -> Result<Vec<ComplexModuli>, CliError> {
        let mut list = Vec::new();
        for name in self.config.regions.keys() {
            if !mesh.regions().contains(name) {
                list.push(format!("regions.{name}: no cell of the mesh belongs to this region"));
            }
        }
        let mut out = Vec::new();
        for name in mesh.regions() {
            match self.config.regions.get(name) {
                None => list.push(format!("regions.{name}: moduli missing for a region of the mesh")),
                Some(r) => match moduli(physics, mesh.dim(), self.config.omega, r, &format!("regions.{name}")) {
                    Ok(m) => out.push(m),
                    Err(mut e) => list.append(&mut e),
                },
            }
        }
        issues(list)?;
        Ok(out)
    }

    pub fn problem(&self) -> Result<PhysicalProblem, CliError> {
        let physics = self.physics()?;
        let mesh = self.mesh()?;
        let regions = self.region_moduli(physics, &mesh)?;
        let layout = Layout::new(physics, &mesh)?;
        let mut list = Vec::new();

        let mut tags: Vec<String> = (0..mesh.n_boundary()).map(|b| mesh.boundary_tag(b).to_string()).collect();
        tags.sort();
        tags.dedup();
        let mut sides = HashMap::new();
        for tag in &tags {
            match self.config.boundary.get(tag) {
                None => list.push(format!("boundary.{tag}: condition missing")),
                Some(s) => {
                    let v = s.value.values();
                    if v.len() != layout.n_pot {
                        list.push(format!("boundary.{tag}.value: needs {} components, got {}", layout.n_pot, v.len()));
                    }
                    let cond = match s.kind {
                        SideKind::Potential => SideCondition::Potential(v),
                        SideKind::Flux => SideCondition::Flux(v),
                    };
                    sides.insert(tag.clone(), cond);
                }
            }
        }
        for tag in self.config.boundary.keys() {
            if !tags.contains(tag) {
                list.push(format!("boundary.{tag}: the mesh has no side with this tag"));
            }
        }

        let per_entity = layout.source_components();
        let body = match &self.config.source.body {
            None => vec![Complex64::new(0.0, 0.0); layout.source_len()],
            Some(b) => {
                let v = b.values();
                if v.len() != per_entity {
                    list.push(format!("source.body: needs {per_entity} components, got {}", v.len()));
                    Vec::new()
                } else {
                    v.iter().copied().cycle().take(layout.source_len()).collect()
                }
            }
        };
        issues(list)?;
        let conditions = physical_conditions(&mesh, &layout, &sides)?;
        Ok(PhysicalProblem::new(mesh, physics, self.config.omega, regions, body, conditions)?)
    }

    pub fn solve_options(&self, o: &Overrides) -> Result<SolveOptions, CliError> {
        let s = &self.config.solver;
        let defaults = SolveOptions::default();
        let opts = SolveOptions {
            max_iterations: o.max_iters.or(s.max_iterations).unwrap_or(defaults.max_iterations),
            relative_residual_tolerance: o.tolerance.or(s.tolerance).unwrap_or(defaults.relative_residual_tolerance),
            preconditioner: match s.preconditioner {
                PreconditionerSpec::BlockJacobi => Preconditioner::BlockJacobi,
                PreconditionerSpec::None => Preconditioner::None,
            },
            seed: o.seed.or(s.seed),
        };
        opts.validate().map_err(|e| CliError::Config(vec![format!("solver: {e}")]))?;
        Ok(opts)
    }

    pub fn hs_spec(&self) -> Result<&HsSpec, CliError> {
        let hs = self
            .config
            .hs
            .as_ref()
            .ok_or_else(|| CliError::Config(vec!["hs: required for hs-bound".into()]))?;
        match (&hs.comparison_scale, &hs.comparison) {
            (Some(s), None) if *s > 0.0 && s.is_finite() => Ok(hs),
            (Some(s), None) => Err(CliError::Config(vec![format!("hs.comparison_scale: must be positive, got {s}")])),
            (None, Some(_)) => Ok(hs),
            _ => Err(CliError::Config(vec![
                "hs: give exactly one of comparison_scale and comparison".into()
            ])),
        }
    }

    /// Homogeneous comparison medium of `hs.comparison`.
    pub fn hs_comparison(&self, physics: Physics, dim: usize, spec: &RegionModuli) -> Result<ComparisonMedium, CliError> {
        let m = moduli(physics, dim, self.config.omega, spec, "hs.comparison").map_err(CliError::Config)?;
        Ok(ComparisonMedium::from_moduli(&m)?)
    }

    pub fn method(&self) -> CondensedMethod {
        match self.config.hs.as_ref().map(|h| h.method).unwrap_or_default() {
            MethodSpec::Dense => CondensedMethod::Dense,
            MethodSpec::Cg => CondensedMethod::ConjugateGradient,
        }
    }

    pub fn tomography(&self) -> Result<&TomographySpec, CliError> {
        self.config
            .tomography
            .as_ref()
            .ok_or_else(|| CliError::Config(vec!["tomography: required for tomography".into()]))
    }

    pub fn greens(&self) -> Result<&GreensSpec, CliError> {
        self.config
            .greens
            .as_ref()
            .ok_or_else(|| CliError::Config(vec!["greens: required for greens-table".into()]))
    }

    pub fn sphere_order(&self, o: &Overrides) -> Result<SphereOrder, CliError> {
        let n = o
            .quadrature_order
            .or(self.config.greens.as_ref().and_then(|g| g.quadrature_order));
        let order = match n {
            None => SphereOrder::default(),
            Some(n) => SphereOrder {
                theta: n,
                phi: 2 * n,
                circle: 8 * n,
            },
        };
        order
            .validate()
            .map_err(|e| CliError::Config(vec![format!("quadrature_order: {e}")]))?;
        Ok(order)
    }

    pub fn greens_points(&self) -> Result<Vec<[f64; 3]>, CliError> {
        let g = self.greens()?;
        let mut list = Vec::new();
        let mut points = g.points.clone();
        if !g.radii.is_empty() {
            let d = g.direction.unwrap_or([1.0, 0.0, 0.0]);
            let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if !(len > 0.0) {
                list.push("greens.direction: must be nonzero".to_string());
            } else {
                points.extend(g.radii.iter().map(|r| d.map(|v| v / len * r)));
            }
        }
        if points.is_empty() {
            list.push("greens: give points or radii".into());
        }
        issues(list)?;
        Ok(points)
    }

    pub fn greens_medium(&self) -> Result<Comparison3d, CliError> {
        let m = &self.greens()?.medium;
        let mats = [&m.d1, &m.d2, &m.d3, &m.q1, &m.q2, &m.q3];
        let eye = |n: usize, v: f64| DMatrix::identity(n, n) * v;
        let cm = match (m.d, m.q, mats.iter().all(|x| x.is_none())) {
            (Some(d), Some(q), true) => {
                ComparisonMedium::from_dq(eye(3, 0.0), eye(3, d), eye(3, d), eye(1, 0.0), eye(1, -q), eye(1, -q))?
            }
            (None, None, false) => {
                let names = ["d1", "d2", "d3", "q1", "q2", "q3"];
                let mut list = Vec::new();
                let mut out = Vec::new();
                for (name, rows) in names.iter().zip(mats) {
                    match rows {
                        None => list.push(format!("greens.medium.{name}: missing")),
                        Some(rows) => match real_matrix(rows) {
                            Some(a) => out.push(a),
                            None => list.push(format!("greens.medium.{name}: rows must have equal length")),
                        },
                    }
                }
                issues(list)?;
                ComparisonMedium::from_dq(
                    out[0].clone(),
                    out[1].clone(),
                    out[2].clone(),
                    out[3].clone(),
                    out[4].clone(),
                    out[5].clone(),
                )?
            }
            _ => {
                return Err(CliError::Config(vec![
                    "greens.medium: give either d and q or all of d1, d2, d3, q1, q2, q3".into(),
                ]))
            }
        };
        Ok(Comparison3d::new(cm)?)
    }
}

fn real_matrix(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return None;
    }
    Some(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn require<'a, T>(v: &'a Option<T>, key: &str, list: &mut Vec<String>) -> Option<&'a T> {
    if v.is_none() {
        list.push(format!("{key}: missing"));
    }
    v.as_ref()
}

/// Complex moduli of one region; errors carry the key path under `prefix`.
pub fn moduli(physics: Physics, dim: usize, omega: f64, r: &RegionModuli, prefix: &str) -> Result<ComplexModuli, Vec<String>> {
    let mut list = Vec::new();
    let allowed: &[&str] = match physics {
        Physics::Elastic => &["stiffness", "lambda", "mu", "density"],
        Physics::Acoustic => &["compressibility", "inverse_density"],
        Physics::Electromagnetic => &["permittivity", "permeability", "convention"],
    };
    let present = [
        ("stiffness", r.stiffness.is_some()),
        ("lambda", r.lambda.is_some()),
        ("mu", r.mu.is_some()),
        ("density", r.density.is_some()),
        ("compressibility", r.compressibility.is_some()),
        ("inverse_density", r.inverse_density.is_some()),
        ("permittivity", r.permittivity.is_some()),
        ("permeability", r.permeability.is_some()),
        ("convention", r.convention.is_some()),
    ];
    for (key, set) in present {
        if set && !allowed.contains(&key) {
            list.push(format!("{prefix}.{key}: not used by {} problems", physics.name()));
        }
    }
    let (np, nd) = (physics.primal_size(dim), physics.dual_size(dim));
    let matrix = |spec: Option<&TensorSpec>, key: &str, n: usize, list: &mut Vec<String>| -> Option<CMatrix> {
        spec.and_then(|s| s.matrix(n, &format!("{prefix}.{key}")).map_err(|e| list.push(e)).ok())
    };
    let built = match physics {
        Physics::Elastic => {
            let rho = matrix(require(&r.density, &format!("{prefix}.density"), &mut list), "density", nd, &mut list);
            match (&r.stiffness, r.lambda, r.mu) {
                (Some(c), None, None) => {
                    let c = matrix(Some(c), "stiffness", np, &mut list);
                    c.zip(rho).map(|(c, rho)| ComplexModuli::new(physics, c, rho, omega))
                }
                (None, Some(lambda), Some(mu)) if dim == 2 => match &r.density {
                    Some(TensorSpec::Matrix(_)) => {
                        list.push(format!("{prefix}.density: must be a scalar with lambda and mu"));
                        None
                    }
                    Some(TensorSpec::Real(x)) => {
                        Some(ComplexModuli::elastic_isotropic_2d(lambda.value(), mu.value(), Complex64::new(*x, 0.0), omega))
                    }
                    Some(TensorSpec::Complex([re, im])) => Some(ComplexModuli::elastic_isotropic_2d(
                        lambda.value(),
                        mu.value(),
                        Complex64::new(*re, *im),
                        omega,
                    )),
                    None => None,
                },
                _ => {
                    list.push(format!(
                        "{prefix}: give stiffness, or lambda and mu on a two-dimensional mesh"
                    ));
                    None
                }
            }
        }
        Physics::Acoustic => {
            let k = matrix(require(&r.compressibility, &format!("{prefix}.compressibility"), &mut list), "compressibility", np, &mut list);
            let rr = matrix(require(&r.inverse_density, &format!("{prefix}.inverse_density"), &mut list), "inverse_density", nd, &mut list);
            k.zip(rr).map(|(k, rr)| ComplexModuli::new(physics, k, rr, omega))
        }
        Physics::Electromagnetic => {
            let eps = matrix(require(&r.permittivity, &format!("{prefix}.permittivity"), &mut list), "permittivity", np, &mut list);
            let mu = matrix(require(&r.permeability, &format!("{prefix}.permeability"), &mut list), "permeability", nd, &mut list);
            let conv = r.convention.unwrap_or(TimeConvention::MinusIOmegaT);
            eps.zip(mu).map(|(eps, mu)| ComplexModuli::electromagnetic(eps, mu, omega, conv))
        }
    };
    if !list.is_empty() {
        return Err(list);
    }
    match built {
        Some(Ok(m)) => Ok(m),
        Some(Err(e)) => Err(vec![format!("{prefix}: {e}")]),
        None => Err(vec![format!("{prefix}: incomplete moduli")]),
    }
}
