//! Drivers for the numerical studies: reference-element conditioning,
//! p- and h-sweeps with preconditioner comparisons, preconditioner memory,
//! and coefficient-norm equivalences. Every study returns typed rows, a CSV
//! rendering and the list of invariant violations it detected.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    assemble_h1, assemble_hypersingular_with, assemble_mass, rhs_vector, QuadratureOrders,
    StabilizationConfig,
};
use crate::error::{Error, Result};
use crate::mesh::{
    fichera_reentrant_edges, generate_fichera, generate_screen, screen_corners, Feature,
    MarkingStrategy, MeshHierarchy, SurfaceMesh,
};
use crate::precond::{
    build_b2, build_b3, build_coarse_plus_patch, build_diagonal, storage_estimate,
    AdditiveSchwarzPreconditioner, ReferenceBlockCache,
};
use crate::ref_element::{conditioning_study, extreme_eigenvalues, mass_matrix, ConditioningRow};
use crate::solvers::{pcg, spectral_bounds, SpectralOptions, SpectralReport};
use crate::space::{build_dof_map, DofMap};

/// Largest system handled by the dense sweeps.
pub const MAX_DOFS: usize = 6000;
pub const MAX_BEM_DEGREE: usize = 6;
pub const MAX_REFEL_DEGREE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// Unit square screen with `n x n` cells.
    Screen(usize),
    Fichera,
}

impl Geometry {
    pub fn mesh(&self) -> SurfaceMesh {
        match self {
            Geometry::Screen(n) => generate_screen(*n),
            Geometry::Fichera => generate_fichera(),
        }
    }

    /// Where corner-weighted refinement concentrates.
    pub fn features(&self) -> Vec<Feature> {
        match self {
            Geometry::Screen(_) => screen_corners(),
            Geometry::Fichera => fichera_reentrant_edges(),
        }
    }

    pub fn default_alpha(&self) -> f64 {
        match self {
            Geometry::Screen(_) => 0.0,
            Geometry::Fichera => StabilizationConfig::CLOSED_DEFAULT.alpha,
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::Screen(n) => write!(f, "screen:{n}"),
            Geometry::Fichera => write!(f, "fichera"),
        }
    }
}

impl FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "fichera" => Ok(Geometry::Fichera),
            Some(("screen", n)) => match n.parse() {
                Ok(n) if n >= 1 => Ok(Geometry::Screen(n)),
                _ => Err(Error::Config(format!("bad screen size '{n}'"))),
            },
            _ => Err(Error::Config(format!("unknown geometry '{s}' (screen:N or fichera)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefinementMode {
    Uniform,
    /// Corner-weighted marking of the fraction `theta` of elements.
    CornerWeighted(f64),
    /// One line of element indices per refinement step.
    File(PathBuf),
}

impl fmt::Display for RefinementMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefinementMode::Uniform => write!(f, "uniform"),
            RefinementMode::CornerWeighted(t) => write!(f, "corner:{t}"),
            RefinementMode::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for RefinementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "uniform" => Ok(RefinementMode::Uniform),
            Some(("corner", t)) => match t.parse::<f64>() {
                Ok(t) if t > 0.0 && t <= 1.0 => Ok(RefinementMode::CornerWeighted(t)),
                _ => Err(Error::Config(format!("corner fraction must lie in (0, 1], got '{t}'"))),
            },
            Some(("file", p)) => Ok(RefinementMode::File(PathBuf::from(p))),
            _ => Err(Error::Config(format!(
                "unknown refinement mode '{s}' (uniform, corner:THETA, file:PATH)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PrecondKind {
    None,
    Diag,
    B,
    B2,
    B3,
}

impl PrecondKind {
    pub const ALL: [PrecondKind; 5] = [
        PrecondKind::None,
        PrecondKind::Diag,
        PrecondKind::B,
        PrecondKind::B2,
        PrecondKind::B3,
    ];
}

impl fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PrecondKind::None => "none",
            PrecondKind::Diag => "diag",
            PrecondKind::B => "B",
            PrecondKind::B2 => "B2",
            PrecondKind::B3 => "B3",
        };
        f.write_str(s)
    }
}

impl FromStr for PrecondKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PrecondKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown preconditioner '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub geometry: Geometry,
    pub p_values: Vec<usize>,
    pub mode: RefinementMode,
    pub levels: usize,
    pub alpha: f64,
    pub preconditioners: Vec<PrecondKind>,
    pub quadrature: QuadratureOrders,
    pub spectral: SpectralOptions,
    pub pcg_tol: f64,
    pub pcg_max_iter: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(geometry: Geometry) -> Self {
        Self {
            geometry,
            p_values: (1..=5).collect(),
            mode: RefinementMode::Uniform,
            levels: 0,
            alpha: geometry.default_alpha(),
            preconditioners: PrecondKind::ALL.to_vec(),
            quadrature: QuadratureOrders::default(),
            spectral: SpectralOptions::default(),
            pcg_tol: 1e-8,
            pcg_max_iter: 2000,
            seed: 20_240_917,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if self.alpha == 0.0 && self.geometry == Geometry::Fichera {
            return Err(Error::Config("the closed Fichera surface needs alpha > 0".into()));
        }
        if self.p_values.is_empty() {
            return Err(Error::Config("empty degree range".into()));
        }
        if let Some(&p) = self.p_values.iter().find(|&&p| p == 0 || p > MAX_BEM_DEGREE) {
            return Err(Error::Config(format!("degree {p} outside 1..={MAX_BEM_DEGREE}")));
        }
        if !(self.pcg_tol > 0.0) {
            return Err(Error::Config("PCG tolerance must be positive".into()));
        }
        Ok(())
    }

    /// The comment line heading every CSV.
    pub fn header(&self) -> String {
        format!(
            "# seed={} geometry={} mode={} levels={} alpha={} quadrature_extra={} dense_threshold={} lanczos_iterations={}",
            self.seed,
            self.geometry,
            self.mode,
            self.levels,
            self.alpha,
            self.quadrature.extra,
            self.spectral.dense_threshold,
            self.spectral.lanczos_iterations
        )
    }

    fn strategy(&self, step: usize) -> Result<MarkingStrategy> {
        Ok(match &self.mode {
            RefinementMode::Uniform => MarkingStrategy::Uniform,
            RefinementMode::CornerWeighted(theta) => MarkingStrategy::CornerWeighted {
                theta: *theta,
                features: self.geometry.features(),
            },
            RefinementMode::File(path) => {
                let text = std::fs::read_to_string(path)?;
                let line = text
                    .lines()
                    .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
                    .nth(step)
                    .ok_or_else(|| Error::Config(format!("{} has no step {step}", path.display())))?;
                let ts = line
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| Error::Parse { line: step + 1, msg: format!("bad index '{s}'") }))
                    .collect::<Result<_>>()?;
                MarkingStrategy::Explicit(ts)
            }
        })
    }

    /// The configured hierarchy with `levels` refinement steps.
    pub fn hierarchy(&self) -> Result<MeshHierarchy> {
        let mut h = MeshHierarchy::new(self.geometry.mesh());
        for step in 0..self.levels {
            h.refine_with(&self.strategy(step)?)?;
        }
        Ok(h)
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn check_report(r: &SpectralReport, what: &str, violations: &mut Vec<String>) {
    if !(r.lambda_min > 0.0 && r.lambda_max.is_finite() && r.lambda_min <= r.lambda_max) {
        violations.push(format!("{what}: eigenvalues {:e}, {:e}", r.lambda_min, r.lambda_max));
    }
    if (r.kappa - r.lambda_max / r.lambda_min).abs() > 1e-12 * r.kappa {
        violations.push(format!("{what}: kappa differs from lambda_max / lambda_min"));
    }
}

// ---------------------------------------------------------------- refel

#[derive(Debug, Clone)]
pub struct RefelReport {
    pub rows: Vec<ConditioningRow>,
    /// `(block, slope)` fitted over `p >= 4`.
    pub slopes: Vec<(String, f64)>,
    pub interior_identity_error: f64,
    pub violations: Vec<String>,
}

impl RefelReport {
    pub fn csv(&self) -> String {
        let mut out = format!("{}\n", crate::ref_element::CONDITIONING_HEADER);
        for r in &self.rows {
            out += &r.csv();
            out.push('\n');
        }
        for (block, s) in &self.slopes {
            out += &format!("# slope {block} {s:.6}\n");
        }
        out
    }

    pub fn slope(&self, block: &str) -> Option<f64> {
        self.slopes.iter().find(|(b, _)| b == block).map(|x| x.1)
    }
}

/// Conditioning of the reference mass and mass + stiffness matrices and
/// their blocks, plus the diagonally scaled full mass matrix (`Mdiag_full`).
pub fn run_refel_study(p_values: &[usize]) -> Result<RefelReport> {
    if let Some(&p) = p_values.iter().find(|&&p| p == 0 || p > MAX_REFEL_DEGREE) {
        return Err(Error::Config(format!("degree {p} outside 1..={MAX_REFEL_DEGREE}")));
    }
    let mut rows = conditioning_study(p_values)?;
    let mut interior_identity_error: f64 = 0.0;
    for &p in p_values {
        let m = mass_matrix(p)?.matrix;
        let off = crate::ref_element::cell_offset(p);
        let nc = crate::ref_element::num_cell(p);
        if nc > 0 {
            let block = m.view((off, off), (nc, nc)).into_owned();
            interior_identity_error =
                interior_identity_error.max((block - DMatrix::identity(nc, nc)).amax());
        }
        let d = m.diagonal().map(|x| 1.0 / x.sqrt());
        let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)] * d[j]);
        let (lo, hi) = extreme_eigenvalues(&scaled);
        rows.push(ConditioningRow {
            p,
            block: "Mdiag_full".into(),
            lambda_min: lo,
            lambda_max: hi,
            kappa: hi / lo,
        });
    }
    let mut blocks: Vec<String> = rows.iter().map(|r| r.block.clone()).collect();
    blocks.sort();
    blocks.dedup();
    let mut slopes = Vec::new();
    for block in blocks {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.block == block && r.p >= 4)
            .map(|r| (r.p as f64, r.kappa))
            .collect();
        if pts.len() >= 2 {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            slopes.push((block, loglog_slope(&x, &y)));
        }
    }
    let mut violations = Vec::new();
    if interior_identity_error > 1e-11 {
        violations.push(format!("interior mass block differs from the identity by {interior_identity_error:e}"));
    }
    for r in &rows {
        if !(r.lambda_min > 0.0) || (r.kappa - r.lambda_max / r.lambda_min).abs() > 1e-12 * r.kappa {
            violations.push(format!("p={} {}: inconsistent eigenvalues", r.p, r.block));
        }
    }
    Ok(RefelReport {
        rows,
        slopes,
        interior_identity_error,
        violations,
    })
}

// ------------------------------------------------------------ sweeps

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub geometry: String,
    pub level: usize,
    pub elements: usize,
    pub p: usize,
    pub ndof: usize,
    pub preconditioner: PrecondKind,
    pub report: SpectralReport,
    pub pcg_iterations: usize,
    pub pcg_converged: bool,
}

pub const SWEEP_HEADER: &str =
    "geometry,level,elements,p,ndof,preconditioner,lambda_min,lambda_max,kappa,pcg_iterations";

impl SweepRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.12e},{:.12e},{:.12e},{}",
            self.geometry,
            self.level,
            self.elements,
            self.p,
            self.ndof,
            self.preconditioner,
            self.report.lambda_min,
            self.report.lambda_max,
            self.report.kappa,
            self.pcg_iterations
        )
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub header: String,
    pub rows: Vec<SweepRow>,
    pub violations: Vec<String>,
}

impl SweepReport {
    pub fn csv(&self) -> String {
        let mut out = format!("{}\n{SWEEP_HEADER}\n", self.header);
        for r in &self.rows {
            out += &r.csv();
            out.push('\n');
        }
        out
    }

    /// `(p, kappa)` of one preconditioner at one level.
    pub fn kappas(&self, pre: PrecondKind, level: usize) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.preconditioner == pre && r.level == level)
            .map(|r| (r.p, r.report.kappa))
            .collect()
    }

    /// `(level, kappa)` of one preconditioner at degree `p`.
    pub fn kappas_by_level(&self, pre: PrecondKind, p: usize) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.preconditioner == pre && r.p == p)
            .map(|r| (r.level, r.report.kappa))
            .collect()
    }
}

/// First `level + 1` meshes of `h`.
fn truncated(h: &MeshHierarchy, level: usize) -> MeshHierarchy {
    MeshHierarchy {
        levels: h.levels[..=level].to_vec(),
        parents: h.parents[..level].to_vec(),
        new_vertex_parents: h.new_vertex_parents[..level].to_vec(),
        tilde: h.tilde[..=level].to_vec(),
    }
}

fn build(
    kind: PrecondKind,
    op: &crate::operator::SymmetricOperator,
    h: &MeshHierarchy,
    dofs: &DofMap,
    cache: &mut ReferenceBlockCache,
) -> Result<Option<AdditiveSchwarzPreconditioner>> {
    Ok(match kind {
        PrecondKind::None => None,
        PrecondKind::Diag => Some(build_diagonal(&op.matrix)?),
        PrecondKind::B => Some(build_coarse_plus_patch(op, h.finest(), dofs)?),
        PrecondKind::B2 => Some(build_b2(op, h, dofs)?),
        PrecondKind::B3 => Some(build_b3(op, h, dofs, cache)?),
    })
}

fn measure_level(
    config: &ExperimentConfig,
    h: &MeshHierarchy,
    level: usize,
    cache: &mut ReferenceBlockCache,
    rows: &mut Vec<SweepRow>,
    violations: &mut Vec<String>,
) -> Result<()> {
    let mesh = h.finest();
    for &p in &config.p_values {
        let dofs = build_dof_map(mesh, p)?;
        if dofs.len() > MAX_DOFS {
            return Err(Error::Config(format!(
                "level {level}, p = {p}: {} dofs exceed the dense limit {MAX_DOFS}",
                dofs.len()
            )));
        }
        if dofs.len() != DofMap::dimension_formula(mesh, p) {
            violations.push(format!("level {level}, p = {p}: dof count differs from the dimension formula"));
        }
        let op = assemble_hypersingular_with(
            mesh,
            &dofs,
            StabilizationConfig { alpha: config.alpha },
            config.quadrature,
        )?;
        if op.asymmetry() > 1e-10 * op.max_abs() {
            violations.push(format!("level {level}, p = {p}: matrix not symmetric"));
        }
        let rhs = rhs_vector(mesh, &dofs, |x| x[0])?;
        for &kind in &config.preconditioners {
            let b = build(kind, &op, h, &dofs, cache)?;
            let report = spectral_bounds(&op.matrix, b.as_ref(), &config.spectral)?;
            let what = format!("level {level}, p = {p}, {kind}");
            check_report(&report, &what, violations);
            let sol = pcg(&op.matrix, b.as_ref(), &rhs, config.pcg_tol, config.pcg_max_iter)?;
            if !sol.converged {
                violations.push(format!("{what}: PCG did not converge"));
            }
            rows.push(SweepRow {
                geometry: config.geometry.to_string(),
                level,
                elements: mesh.num_triangles(),
                p,
                ndof: dofs.len(),
                preconditioner: kind,
                report,
                pcg_iterations: sol.iterations,
                pcg_converged: sol.converged,
            });
        }
    }
    Ok(())
}

/// All configured degrees on the finest mesh of the configured hierarchy.
pub fn run_p_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let h = config.hierarchy()?;
    let mut cache = ReferenceBlockCache::new(config.quadrature);
    let (mut rows, mut violations) = (Vec::new(), Vec::new());
    measure_level(config, &h, config.levels, &mut cache, &mut rows, &mut violations)?;
    Ok(SweepReport {
        header: config.header(),
        rows,
        violations,
    })
}

/// All configured degrees on every level `0..=levels`.
pub fn run_h_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let h = config.hierarchy()?;
    let mut cache = ReferenceBlockCache::new(config.quadrature);
    let (mut rows, mut violations) = (Vec::new(), Vec::new());
    for level in 0..h.num_levels() {
        measure_level(config, &truncated(&h, level), level, &mut cache, &mut rows, &mut violations)?;
    }
    for w in h.levels.windows(2) {
        if w[1].num_triangles() <= w[0].num_triangles() {
            violations.push("element count did not grow under refinement".into());
        }
    }
    Ok(SweepReport {
        header: config.header(),
        rows,
        violations,
    })
}

// ------------------------------------------------------------ memory

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryRow {
    pub level: usize,
    pub elements: usize,
    pub p: usize,
    pub ndof: usize,
    pub exact_blocks: usize,
    pub exact_bytes_per_dof: f64,
    pub reference_blocks: usize,
    pub reference_bytes_per_dof: f64,
}

pub const MEMORY_HEADER: &str =
    "level,elements,p,ndof,exact_blocks,exact_bytes_per_dof,reference_blocks,reference_bytes_per_dof,ratio";

#[derive(Debug, Clone)]
pub struct MemoryReport {
    pub header: String,
    pub rows: Vec<MemoryRow>,
    pub violations: Vec<String>,
}

impl MemoryReport {
    pub fn csv(&self) -> String {
        let mut out = format!("{}\n{MEMORY_HEADER}\n", self.header);
        for r in &self.rows {
            out += &format!(
                "{},{},{},{},{},{:.3},{},{:.3},{:.6}\n",
                r.level,
                r.elements,
                r.p,
                r.ndof,
                r.exact_blocks,
                r.exact_bytes_per_dof,
                r.reference_blocks,
                r.reference_bytes_per_dof,
                r.reference_bytes_per_dof / r.exact_bytes_per_dof
            );
        }
        out
    }
}

/// Factor storage of exact patch blocks (`B2`) against shared reference
/// blocks (`B3`) on every level, from the mesh structure alone.
pub fn run_memory_table(config: &ExperimentConfig) -> Result<MemoryReport> {
    config.validate()?;
    let h = config.hierarchy()?;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for level in 0..h.num_levels() {
        let sub = truncated(&h, level);
        let mesh = sub.finest();
        for &p in &config.p_values {
            let dofs = build_dof_map(mesh, p)?;
            if dofs.len() != DofMap::dimension_formula(mesh, p) {
                violations.push(format!("level {level}, p = {p}: dof count differs from the dimension formula"));
            }
            let (exact, reference) = storage_estimate(&sub, &dofs)?;
            rows.push(MemoryRow {
                level,
                elements: mesh.num_triangles(),
                p,
                ndof: dofs.len(),
                exact_blocks: exact.dense_factors,
                exact_bytes_per_dof: exact.bytes_per_dof,
                reference_blocks: reference.dense_factors,
                reference_bytes_per_dof: reference.bytes_per_dof,
            });
        }
    }
    Ok(MemoryReport {
        header: config.header(),
        rows,
        violations,
    })
}

// ------------------------------------------------------------- norms

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1,
    Energy,
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::L2 => "L2",
            NormKind::H1 => "H1",
            NormKind::Energy => "H1/2",
        })
    }
}

impl NormKind {
    /// Admissible exponents of `|coeffs|^2 / |u|^2` in `h` and in `p`: the
    /// exponents of the lower and upper two-sided bounds (for sums, the term
    /// dominating as `h -> 0` resp. `p -> oo`). Both the smallest and the
    /// largest ratio must scale with an exponent inside the bracket.
    pub fn bracket(self) -> [[f64; 2]; 2] {
        match self {
            NormKind::L2 => [[-2.0, -2.0], [0.0, 6.0]],
            NormKind::H1 => [[-2.0, 0.0], [-4.0, 2.0]],
            NormKind::Energy => [[-2.0, -1.0], [-2.0, 4.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormRow {
    pub level: usize,
    pub h: f64,
    pub p: usize,
    pub ndof: usize,
    pub norm: NormKind,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Extremes of the Rayleigh quotient over the random sample.
    pub sample_min: f64,
    pub sample_max: f64,
}

pub const NORM_HEADER: &str = "level,h,p,ndof,norm,lambda_min,lambda_max,sample_min,sample_max";

/// Fitted exponent of the smallest (`min`, `1/lambda_max`) or largest
/// (`max`, `1/lambda_min`) coefficient-to-function norm ratio in `variable`
/// (`h` over the two finest levels at fixed `p`, `p >= 3` at fixed level).
#[derive(Debug, Clone, PartialEq)]
pub struct NormFit {
    pub norm: NormKind,
    pub side: &'static str,
    pub variable: &'static str,
    pub fixed: String,
    pub slope: f64,
    pub bracket: [f64; 2],
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct NormReport {
    pub header: String,
    pub rows: Vec<NormRow>,
    pub fits: Vec<NormFit>,
    pub violations: Vec<String>,
}

impl NormReport {
    pub fn csv(&self) -> String {
        let mut out = format!("{}\n{NORM_HEADER}\n", self.header);
        for r in &self.rows {
            out += &format!(
                "{},{:.6e},{},{},{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.level, r.h, r.p, r.ndof, r.norm, r.lambda_min, r.lambda_max, r.sample_min, r.sample_max
            );
        }
        for f in &self.fits {
            out += &format!(
                "# fit {} {} ratio in {} at {}: slope {:.4} bracket [{:.1}, {:.1}] {}\n",
                f.norm,
                f.side,
                f.variable,
                f.fixed,
                f.slope,
                f.bracket[0],
                f.bracket[1],
                if f.ok { "ok" } else { "VIOLATED" }
            );
        }
        out
    }
}

const SAMPLES: usize = 32;
/// Cases above this size are skipped by the norm study (three dense eigensolves each).
pub const NORM_MAX_DOFS: usize = 2500;

/// Rayleigh quotients `u^T A u / |u|^2` of the mass, `H^1` and stabilized
/// hypersingular matrices on the configured (quasi-uniform) hierarchy.
pub fn run_norm_equivalence_study(config: &ExperimentConfig) -> Result<NormReport> {
    config.validate()?;
    let h = config.hierarchy()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (level, mesh) in h.levels.iter().enumerate() {
        for &p in &config.p_values {
            let dofs = build_dof_map(mesh, p)?;
            if dofs.is_empty() || dofs.len() > NORM_MAX_DOFS {
                continue;
            }
            let d = assemble_hypersingular_with(
                mesh,
                &dofs,
                StabilizationConfig { alpha: config.alpha },
                config.quadrature,
            )?;
            let m = assemble_mass(mesh, &dofs)?;
            let s = assemble_h1(mesh, &dofs)?;
            let h1 = &m.matrix + &s.matrix;
            for (norm, a) in [(NormKind::L2, &m.matrix), (NormKind::H1, &h1), (NormKind::Energy, &d.matrix)] {
                let (lo, hi) = extreme_eigenvalues(a);
                let (mut smin, mut smax) = (f64::INFINITY, f64::NEG_INFINITY);
                for _ in 0..SAMPLES {
                    let u = DVector::from_fn(dofs.len(), |_, _| rng.gen_range(-1.0..1.0));
                    let q = u.dot(&(a * &u)) / u.dot(&u);
                    smin = smin.min(q);
                    smax = smax.max(q);
                }
                if !(lo > 0.0) || smin < lo * (1.0 - 1e-10) || smax > hi * (1.0 + 1e-10) {
                    violations.push(format!("level {level}, p = {p}, {norm}: Rayleigh quotients outside the spectrum"));
                }
                rows.push(NormRow {
                    level,
                    h: mesh.max_diameter(),
                    p,
                    ndof: dofs.len(),
                    norm,
                    lambda_min: lo,
                    lambda_max: hi,
                    sample_min: smin,
                    sample_max: smax,
                });
            }
        }
    }
    let fits = fit_norms(&rows);
    violations.extend(
        fits.iter()
            .filter(|f| !f.ok)
            .map(|f| {
                format!(
                    "{} {} ratio exponent in {} at {}: {:.3} outside [{:.1}, {:.1}]",
                    f.norm, f.side, f.variable, f.fixed, f.slope, f.bracket[0], f.bracket[1]
                )
            }),
    );
    Ok(NormReport {
        header: config.header(),
        rows,
        fits,
        violations,
    })
}

/// Exponents must lie in the bracket up to a slack of 10% of its largest
/// magnitude (at least 0.2).
fn fit_norms(rows: &[NormRow]) -> Vec<NormFit> {
    let mut fits = Vec::new();
    let mut levels: Vec<usize> = rows.iter().map(|r| r.level).collect();
    levels.dedup();
    let mut ps: Vec<usize> = rows.iter().map(|r| r.p).collect();
    ps.sort_unstable();
    ps.dedup();
    for norm in [NormKind::L2, NormKind::H1, NormKind::Energy] {
        let brackets = norm.bracket();
        let mut push = |variable: &'static str, fixed: String, pts: Vec<&NormRow>| {
            if pts.len() < 2 {
                return;
            }
            let xi = usize::from(variable == "p");
            let x: Vec<f64> = pts.iter().map(|r| if xi == 0 { r.h } else { r.p as f64 }).collect();
            let bracket = brackets[xi];
            let slack = (0.1 * bracket[0].abs().max(bracket[1].abs())).max(0.2);
            for (side, y) in [
                ("min", pts.iter().map(|r| 1.0 / r.lambda_max).collect::<Vec<_>>()),
                ("max", pts.iter().map(|r| 1.0 / r.lambda_min).collect::<Vec<_>>()),
            ] {
                let slope = loglog_slope(&x, &y);
                let ok = slope >= bracket[0] - slack && slope <= bracket[1] + slack;
                fits.push(NormFit { norm, side, variable, fixed: fixed.clone(), slope, bracket, ok });
            }
        };
        for &p in &ps {
            // the two finest levels on which this degree was computed
            let mut at: Vec<usize> = rows.iter().filter(|r| r.p == p).map(|r| r.level).collect();
            at.dedup();
            let fine: Vec<usize> = at.into_iter().rev().take(2).collect();
            let pts = rows.iter().filter(|r| r.norm == norm && r.p == p && fine.contains(&r.level)).collect();
            push("h", format!("p={p}"), pts);
        }
        for &l in &levels {
            let pts = rows.iter().filter(|r| r.norm == norm && r.level == l && r.p >= 3).collect();
            push("p", format!("level={l}"), pts);
        }
    }
    fits
}

// -------------------------------------------------------------- charts

/// Log-log line chart of `(x, y)` series as a standalone SVG document.
pub fn svg_chart(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, hgt, m) = (640.0, 420.0, 50.0);
    let pts = series.iter().flat_map(|s| s.1.iter()).filter(|(x, y)| *x > 0.0 && *y > 0.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x.ln());
        x1 = x1.max(x.ln());
        y0 = y0.min(y.ln());
        y1 = y1.max(y.ln());
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (dx, dy) = ((x1 - x0).max(1e-12), (y1 - y0).max(1e-12));
    let sx = |x: f64| m + (x.ln() - x0) / dx * (w - 2.0 * m);
    let sy = |y: f64| hgt - m - (y.ln() - y0) / dy * (hgt - 2.0 * m);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{hgt}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{m}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title} (log-log)</text>\n\
         <rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - 2.0 * m,
        hgt - 2.0 * m
    );
    for (k, (name, data)) in series.iter().enumerate() {
        let c = colors[k % colors.len()];
        let path: Vec<String> = data
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        out += &format!("<polyline fill=\"none\" stroke=\"{c}\" stroke-width=\"2\" points=\"{}\"/>\n", path.join(" "));
        out += &format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{c}\">{name}</text>\n",
            w - m - 60.0,
            m + 16.0 * (k as f64 + 1.0)
        );
    }
    out += "</svg>\n";
    out
}

/// `kappa` against `p` (or level) per preconditioner.
pub fn sweep_chart(report: &SweepReport, by_level: bool) -> String {
    let mut kinds: Vec<PrecondKind> = report.rows.iter().map(|r| r.preconditioner).collect();
    kinds.sort();
    kinds.dedup();
    let series: Vec<(String, Vec<(f64, f64)>)> = kinds
        .into_iter()
        .map(|k| {
            let pts = report
                .rows
                .iter()
                .filter(|r| r.preconditioner == k)
                .map(|r| ((if by_level { r.ndof } else { r.p }) as f64, r.report.kappa))
                .collect();
            (k.to_string(), pts)
        })
        .collect();
    svg_chart(if by_level { "kappa vs. dofs" } else { "kappa vs. p" }, &series)
}
