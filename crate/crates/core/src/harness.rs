//! Corpus runs: eigenvalues, frames and every inequality, each checked
//! against its own tolerance, plus CSV and JSON reports.

use crate::density::{verify_density_bounds_with, Density, DensityOptions};
use crate::domain::{equivalent_radii, Domain, DomainSpec, Shape};
use crate::eigen::{EigenOptions, SpectralResult};
use crate::error::{Error, Result};
use crate::extrapolate::{richardson, solve_levels};
use crate::fields::{rayleigh_bound, TestFieldFrame};
use crate::mesh::triangulate;
use crate::ortho::{Frame, OrthoProblem, SolverConfig};
use crate::radial::{RadialProfile, ReferenceConstants};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

/// Analytic values for an entry, with where they come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    #[serde(default)]
    pub mu1: Option<f64>,
    #[serde(default)]
    pub mu2: Option<f64>,
    /// Relative.
    pub tolerance: f64,
    pub source: String,
}

/// Exactly one of `domain` and `density` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    /// Grid file, relative to the corpus file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<PathBuf>,
    pub h0: f64,
    pub levels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
    /// Checks reported but left out of the exit status.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<String>,
}

impl CorpusEntry {
    pub fn label(&self) -> String {
        match (&self.domain, &self.density) {
            (Some(d), _) => d.label.clone(),
            (None, Some(p)) => p
                .file_stem()
                .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into()),
            (None, None) => "unnamed".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.domain.is_some() == self.density.is_some() {
            return Err(Error::Schema(format!(
                "entry '{}' needs exactly one of domain and density",
                self.label()
            )));
        }
        if !(self.h0 > 0.0) {
            return Err(Error::Schema(format!(
                "entry '{}': h0 must be positive",
                self.label()
            )));
        }
        let min = if self.domain.is_some() { 3 } else { 1 };
        if self.levels < min {
            return Err(Error::Schema(format!(
                "entry '{}' needs at least {min} levels",
                self.label()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
    /// Base for relative density paths; not part of the file.
    #[serde(skip)]
    pub base: PathBuf,
}

impl Corpus {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c: Corpus = serde_json::from_str(text)?;
        for e in &c.entries {
            e.validate()?;
        }
        c.base = base.to_path_buf();
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&std::fs::read_to_string(path)?, &base)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("corpus serializes")
    }
}

fn rect(label: &str, w: f64, h: f64) -> DomainSpec {
    DomainSpec {
        label: label.into(),
        shapes: vec![Shape::Rectangle {
            min: [0.0, 0.0],
            max: [w, h],
        }],
    }
}

fn polygon(label: &str, outer: Vec<[f64; 2]>) -> DomainSpec {
    DomainSpec {
        label: label.into(),
        shapes: vec![Shape::Polygon {
            outer,
            holes: vec![],
        }],
    }
}

/// Square, 2×0.5 rectangle, disc, annulus, L-shape, two discs and a
/// dumbbell with a 0.05 neck.
pub fn default_corpus() -> Corpus {
    let pi2 = PI * PI;
    let j11 = 3.389_957_5;
    let r2 = (0.5 / PI).sqrt();
    let entry = |domain: DomainSpec, h0: f64, expected: Option<Expected>| CorpusEntry {
        domain: Some(domain),
        density: None,
        h0,
        levels: 3,
        expected,
        flagged: vec![],
    };
    let exact = |mu1: f64, mu2: f64, tolerance: f64, source: &str| {
        Some(Expected {
            mu1: Some(mu1),
            mu2: Some(mu2),
            tolerance,
            source: source.into(),
        })
    };
    let (n, w) = (0.025, 0.5);
    let dumbbell = polygon(
        "dumbbell",
        vec![
            [-1.25, -0.5],
            [-0.25, -0.5],
            [-0.25, -n],
            [0.25, -n],
            [0.25, -0.5],
            [1.25, -0.5],
            [1.25, w],
            [0.25, w],
            [0.25, n],
            [-0.25, n],
            [-0.25, w],
            [-1.25, w],
        ],
    );
    Corpus {
        entries: vec![
            entry(
                rect("square", 1.0, 1.0),
                0.05,
                exact(pi2, pi2, 1e-3, "separable cosines"),
            ),
            entry(
                rect("rectangle", 2.0, 0.5),
                0.05,
                exact(pi2 / 4.0, pi2, 1e-3, "separable cosines"),
            ),
            entry(
                DomainSpec {
                    label: "disc".into(),
                    shapes: vec![Shape::Disc {
                        center: [0.0, 0.0],
                        radius: 1.0,
                        segments: 512,
                    }],
                },
                0.1,
                exact(j11, j11, 5e-3, "first zero of J1'"),
            ),
            entry(
                DomainSpec {
                    label: "annulus".into(),
                    shapes: vec![Shape::Annulus {
                        center: [0.0, 0.0],
                        radii: [1.0, 0.5],
                        segments: 256,
                    }],
                },
                0.08,
                None,
            ),
            entry(
                polygon(
                    "l-shape",
                    vec![
                        [0.0, 0.0],
                        [2.0, 0.0],
                        [2.0, 1.0],
                        [1.0, 1.0],
                        [1.0, 2.0],
                        [0.0, 2.0],
                    ],
                ),
                0.1,
                None,
            ),
            entry(
                DomainSpec {
                    label: "two-discs".into(),
                    shapes: vec![
                        Shape::Disc {
                            center: [-0.6, 0.0],
                            radius: r2,
                            segments: 512,
                        },
                        Shape::Disc {
                            center: [0.6, 0.0],
                            radius: r2,
                            segments: 512,
                        },
                    ],
                },
                0.05,
                Some(Expected {
                    mu1: Some(0.0),
                    mu2: Some(2.0 * PI * j11),
                    tolerance: 1e-2,
                    source: "first zero of J1'".into(),
                }),
            ),
            entry(dumbbell, 0.05, None),
        ],
        base: PathBuf::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Largest admissible geometry + FEM budget for the μ2 inequality.
    pub max_budget: f64,
    /// Relative slack on `quotient ≤ μ1(B_{r_half})`.
    pub ball: f64,
    /// Required fraction of `16π − 8π` left below the Kröger bound.
    pub kroger_fraction: f64,
    /// Distinct frames required, swaps included.
    pub min_frames: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            max_budget: 1e-2,
            ball: 1e-6,
            kroger_fraction: 0.9,
            min_frames: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    /// Overrides the seeds of every stage.
    pub seed: u64,
    pub tolerances: Tolerances,
    pub solver: SolverConfig,
    pub eigen: EigenOptions,
    pub density: DensityOptions,
    /// The frame search runs on the finest level with at most this many
    /// triangles.
    pub frame_max_triangles: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            tolerances: Tolerances::default(),
            solver: SolverConfig::default(),
            eigen: EigenOptions::default(),
            density: DensityOptions::default(),
            frame_max_triangles: 1500,
        }
    }
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// The config with `seed` pushed into every stage.
    pub fn seeded(&self) -> Self {
        let mut c = self.clone();
        c.solver.seed = c.seed;
        c.eigen.seed = c.seed;
        c.density.eigen.seed = c.seed;
        c
    }
}

/// One inequality with its own budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// Relative slack granted to the bound.
    pub budget: f64,
    /// Distance to failure; negative fails.
    pub margin: f64,
    pub pass: bool,
    pub flagged: bool,
}

impl Check {
    /// `value ≤ bound (1 + budget)`.
    pub fn upper(name: &str, value: f64, bound: f64, budget: f64) -> Self {
        let margin = bound * (1.0 + budget) - value;
        Self {
            name: name.into(),
            value,
            bound,
            budget,
            margin,
            pass: margin >= 0.0,
            flagged: false,
        }
    }

    /// `value ≥ bound`.
    pub fn lower(name: &str, value: f64, bound: f64) -> Self {
        let margin = value - bound;
        Self {
            name: name.into(),
            value,
            bound,
            budget: 0.0,
            margin,
            pass: margin >= 0.0,
            flagged: false,
        }
    }

    /// `|value − target| ≤ tolerance · |target|`, reported as the relative
    /// deviation against the tolerance.
    pub fn near(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        let dev = if target == 0.0 {
            value.abs()
        } else {
            ((value - target) / target).abs()
        };
        Self::upper(name, dev, tolerance, 0.0)
    }
}

/// Column order of the checks in the CSV report.
pub const CHECK_NAMES: [&str; 14] = [
    "szego_weinberger",
    "mu2_bound",
    "budget",
    "oracle_mu1",
    "oracle_mu2",
    "polya2",
    "kroger",
    "frame_residual",
    "distinct_frames",
    "link_mu2_quotient",
    "link_quotient_ball",
    "link_ball_star",
    "density_mu1",
    "density_mu2",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub f_norm: f64,
    pub f_relative: f64,
    pub source: String,
}

impl From<&Frame> for FrameRow {
    fn from(f: &Frame) -> Self {
        let source = serde_json::to_value(f.source)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        Self {
            a: f.a,
            b: f.b,
            f_norm: f.residual.max_abs(),
            f_relative: f.relative_residual,
            source,
        }
    }
}

/// Relative budget terms behind the μ inequalities.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// Area lost to polygonization over `|Ω|`.
    pub geometry: f64,
    /// `|extrapolated − finest| / extrapolated` for μ2.
    pub fem: f64,
    /// Accurate-quadrature error estimate of the frame residual, relative.
    pub quadrature: f64,
    /// Quotient change from projecting the residual defects away.
    pub root: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntryRow {
    pub label: String,
    pub kind: String,
    /// `|Ω|` or the density mass.
    pub area: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub mu1_sequence: Vec<f64>,
    pub mu2_sequence: Vec<f64>,
    pub budget: Budget,
    pub checks: Vec<Check>,
    pub frames: Vec<FrameRow>,
    pub path_failures: usize,
    /// Index into `frames` of the frame used for the chain.
    pub chain_frame: Option<usize>,
    pub quotient: Option<f64>,
    pub ball_mu1: Option<f64>,
    /// True only if every `link_*` check passed.
    pub chain_pass: Option<bool>,
    pub error: Option<String>,
}

impl EntryRow {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// No error and every unflagged check passed.
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.pass || c.flagged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub entries: usize,
    pub passed: usize,
    pub failed: Vec<String>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub config: HarnessConfig,
    pub constants: ReferenceConstants,
    pub budget_derivation: Vec<String>,
    pub rows: Vec<EntryRow>,
    pub summary: Summary,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(EntryRow::passed)
    }

    pub fn row(&self, label: &str) -> Option<&EntryRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

fn budget_derivation() -> Vec<String> {
    [
        "mu2_bound, szego_weinberger: budget = geometry + fem",
        "geometry = (area of the true curved domain - |polygon|) / |polygon|",
        "fem = |richardson estimate - finest level| / estimate, or the last level difference when the sequence is not monotone",
        "polya2: budget = geometry + fem against 8*pi",
        "kroger: margin = 16*pi - |O| mu2 - kroger_fraction * 8*pi",
        "link_mu2_quotient: budget = fem + quadrature + root",
        "quadrature = accurate-rule error estimate of F / (g(r_half) |O|)",
        "root = sum of squared F components / (|O| * denominator), the quotient change after projecting the defects away",
        "link_quotient_ball: budget = tolerances.ball",
        "link_ball_star: |O| mu1(B_r_half) against mu2*, budget 1e-12",
        "density_mu: budget = 2 cell / sqrt(mass) + mass * (fem + eps sweep spread) / mu_k*",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Limit and FEM budget of one eigenvalue sequence.
fn limit(seq: &[f64]) -> (f64, f64) {
    let n = seq.len();
    let last = seq[n - 1];
    match richardson(seq) {
        Ok(e) => (e.estimate, ((e.estimate - last) / e.estimate).abs()),
        Err(err) => {
            warn!("no extrapolation ({err}); using the finest level");
            (last, ((seq[n - 2] - last) / last).abs())
        }
    }
}

fn run_domain(
    entry: &CorpusEntry,
    spec: &DomainSpec,
    cfg: &HarnessConfig,
    consts: &ReferenceConstants,
) -> Result<EntryRow> {
    let domain = Domain::from_spec(spec)?;
    let mut row = EntryRow {
        label: spec.label.clone(),
        kind: "domain".into(),
        ..Default::default()
    };
    let results: Vec<SpectralResult> = solve_levels(
        Arc::new(triangulate(&domain, entry.h0)?),
        entry.levels,
        6,
        &cfg.eigen,
    )?;
    let finest = results.last().expect("levels >= 3");
    let area = finest.mesh.area();
    row.area = Some(area);
    row.mu1_sequence = results.iter().map(|r| r.eigenvalues[1]).collect();
    row.mu2_sequence = results.iter().map(|r| r.eigenvalues[2]).collect();
    // kernel eigenvalues are exactly zero, not extrapolated
    let (mu1, fem1) = if finest.zero_modes > 1 {
        (0.0, 0.0)
    } else {
        limit(&row.mu1_sequence)
    };
    let (mu2, fem2) = if finest.zero_modes > 2 {
        (0.0, 0.0)
    } else {
        limit(&row.mu2_sequence)
    };
    row.mu1 = Some(mu1);
    row.mu2 = Some(mu2);
    row.budget.geometry = domain.sagitta_area() / area;
    row.budget.fem = fem2;
    let (g, tol) = (row.budget.geometry, &cfg.tolerances);

    row.checks.push(Check::upper(
        "szego_weinberger",
        area * mu1,
        consts.mu1_star,
        g + fem1,
    ));
    row.checks.push(Check::upper(
        "mu2_bound",
        area * mu2,
        consts.mu2_star,
        g + fem2,
    ));
    row.checks
        .push(Check::upper("budget", g + fem2, tol.max_budget, 0.0));
    if let Some(e) = &entry.expected {
        if let Some(v) = e.mu1 {
            row.checks
                .push(Check::near("oracle_mu1", mu1, v, e.tolerance));
        }
        if let Some(v) = e.mu2 {
            row.checks
                .push(Check::near("oracle_mu2", mu2, v, e.tolerance));
        }
    }
    row.checks
        .push(Check::upper("polya2", area * mu2, 8.0 * PI, g + fem2));
    row.checks.push(Check::upper(
        "kroger",
        area * mu2,
        16.0 * PI - tol.kroger_fraction * 8.0 * PI,
        0.0,
    ));

    let level = results
        .iter()
        .rposition(|r| r.mesh.num_triangles() <= cfg.frame_max_triangles)
        .unwrap_or(0);
    let sr = &results[level];
    let mesh = &sr.mesh;
    info!(
        "{}: frame search on level {level} ({} triangles)",
        row.label,
        mesh.num_triangles()
    );
    let problem = OrthoProblem::new(mesh, None, Some(&sr.eigenvectors[1]), &cfg.solver)?;
    let search = problem.find_frames()?;
    row.path_failures = search.path_failures;
    row.frames = search.frames.iter().map(FrameRow::from).collect();
    row.checks.push(Check::lower(
        "distinct_frames",
        search.frames.len() as f64,
        tol.min_frames as f64,
    ));
    let best = search
        .frames
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.relative_residual.total_cmp(&y.1.relative_residual))
        .map(|(i, f)| (i, f.clone()));
    let Some((index, frame)) = best else {
        row.checks.push(Check::upper(
            "frame_residual",
            f64::INFINITY,
            cfg.solver.tol_orth,
            0.0,
        ));
        return Ok(row);
    };
    row.chain_frame = Some(index);
    row.checks.push(Check::upper(
        "frame_residual",
        frame.relative_residual,
        cfg.solver.tol_orth,
        0.0,
    ));

    let mesh_area = mesh.area();
    let profile = RadialProfile::new(2, equivalent_radii(mesh_area, 2).r_half)?;
    let field = TestFieldFrame::new(frame.a, frame.b, profile, 0.0)?;
    let rb = rayleigh_bound(&field, mesh, None)?;
    let squares: f64 = frame.residual.as_vector().iter().map(|v| v * v).sum();
    row.budget.root = squares / (mesh_area * rb.denominator);
    row.budget.quadrature = frame.residual.quad_error / (profile.g_at_radius() * mesh_area);
    let ball = profile.mu1();
    row.quotient = Some(rb.quotient);
    row.ball_mu1 = Some(ball);
    let links = [
        Check::upper(
            "link_mu2_quotient",
            mu2,
            rb.quotient,
            fem2 + row.budget.quadrature + row.budget.root,
        ),
        Check::upper("link_quotient_ball", rb.quotient, ball, tol.ball),
        Check::near("link_ball_star", mesh_area * ball, consts.mu2_star, 1e-12),
    ];
    row.chain_pass = Some(links.iter().all(|c| c.pass));
    row.checks.extend(links);
    Ok(row)
}

fn run_density(entry: &CorpusEntry, path: &Path, cfg: &HarnessConfig) -> Result<EntryRow> {
    let rho = Density::load(path)?;
    let rep = verify_density_bounds_with(&rho, entry.h0, entry.levels, &cfg.density)?;
    let mut row = EntryRow {
        label: entry.label(),
        kind: "density".into(),
        ..Default::default()
    };
    row.area = Some(rep.mass);
    row.mu1_sequence = rep.levels.iter().map(|l| l[1]).collect();
    row.mu2_sequence = rep.levels.iter().map(|l| l[2]).collect();
    for c in &rep.checks {
        let name = format!("density_mu{}", c.k);
        row.checks
            .push(Check::upper(&name, c.product, c.mu_star, c.budget));
        if c.k == 1 {
            row.mu1 = Some(c.mu_tilde);
        } else {
            row.mu2 = Some(c.mu_tilde);
        }
    }
    if let Some(e) = &entry.expected {
        if let Some(v) = e.mu1 {
            row.checks.push(Check::near(
                "oracle_mu1",
                rep.mass * row.mu1.unwrap_or(f64::NAN),
                v,
                e.tolerance,
            ));
        }
        if let Some(v) = e.mu2 {
            row.checks.push(Check::near(
                "oracle_mu2",
                rep.mass * row.mu2.unwrap_or(f64::NAN),
                v,
                e.tolerance,
            ));
        }
    }
    Ok(row)
}

fn run_entry(
    corpus: &Corpus,
    entry: &CorpusEntry,
    cfg: &HarnessConfig,
    consts: &ReferenceConstants,
) -> EntryRow {
    let outcome = match (&entry.domain, &entry.density) {
        (Some(spec), _) => run_domain(entry, spec, cfg, consts),
        (None, Some(p)) => run_density(entry, &corpus.base.join(p), cfg),
        (None, None) => Err(Error::Schema("entry has neither domain nor density".into())),
    };
    let mut row = outcome.unwrap_or_else(|e| {
        warn!("entry '{}' failed: {e}", entry.label());
        EntryRow {
            label: entry.label(),
            kind: if entry.domain.is_some() {
                "domain"
            } else {
                "density"
            }
            .into(),
            error: Some(e.to_string()),
            ..Default::default()
        }
    });
    for c in &mut row.checks {
        c.flagged = entry.flagged.iter().any(|f| f == &c.name);
    }
    row
}

/// A report plus wall-clock seconds per entry, kept apart so the report
/// stays reproducible.
#[derive(Debug, Clone)]
pub struct CorpusRun {
    pub report: VerificationReport,
    pub timings: Vec<(String, f64)>,
}

/// Run every entry on a pool of `workers` threads. Entry failures are
/// recorded in their rows; only a broken pool or bad constants are errors.
pub fn run_corpus(corpus: &Corpus, config: &HarnessConfig, workers: usize) -> Result<CorpusRun> {
    let cfg = config.seeded();
    let consts = ReferenceConstants::new(2)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::OutOfRange(format!("thread pool: {e}")))?;
    let timed: Vec<(EntryRow, f64)> = pool.install(|| {
        corpus
            .entries
            .par_iter()
            .map(|e| {
                let start = Instant::now();
                let row = run_entry(corpus, e, &cfg, &consts);
                (row, start.elapsed().as_secs_f64())
            })
            .collect()
    });
    let timings = timed.iter().map(|(r, t)| (r.label.clone(), *t)).collect();
    let rows: Vec<EntryRow> = timed.into_iter().map(|(r, _)| r).collect();
    let summary = Summary {
        entries: rows.len(),
        passed: rows.iter().filter(|r| r.passed()).count(),
        failed: rows
            .iter()
            .filter(|r| r.error.is_none() && !r.passed())
            .map(|r| r.label.clone())
            .collect(),
        errors: rows
            .iter()
            .filter(|r| r.error.is_some())
            .map(|r| r.label.clone())
            .collect(),
    };
    Ok(CorpusRun {
        report: VerificationReport {
            config: cfg,
            constants: consts,
            budget_derivation: budget_derivation(),
            rows,
            summary,
        },
        timings,
    })
}

fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "label",
        "kind",
        "area",
        "mu1",
        "mu2",
        "budget_geometry",
        "budget_fem",
        "budget_quadrature",
        "budget_root",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for name in CHECK_NAMES {
        for field in ["value", "bound", "budget", "margin", "pass"] {
            h.push(format!("{name}_{field}"));
        }
    }
    for s in [
        "frames",
        "path_failures",
        "frame_ax",
        "frame_ay",
        "frame_bx",
        "frame_by",
        "f_norm",
        "f_relative",
        "quotient",
        "ball_mu1",
        "chain_pass",
        "error",
    ] {
        h.push(s.into());
    }
    h
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

fn csv_record(row: &EntryRow) -> Vec<String> {
    let b = &row.budget;
    let mut out = vec![
        row.label.clone(),
        row.kind.clone(),
        num(row.area),
        num(row.mu1),
        num(row.mu2),
        format!("{:e}", b.geometry),
        format!("{:e}", b.fem),
        format!("{:e}", b.quadrature),
        format!("{:e}", b.root),
    ];
    for name in CHECK_NAMES {
        match row.check(name) {
            Some(c) => {
                out.extend([c.value, c.bound, c.budget, c.margin].map(|v| format!("{v:e}")));
                out.push(if c.flagged {
                    format!("{} (flagged)", c.pass)
                } else {
                    c.pass.to_string()
                });
            }
            None => out.extend((0..5).map(|_| String::new())),
        }
    }
    let f = row.chain_frame.map(|i| &row.frames[i]);
    out.push(row.frames.len().to_string());
    out.push(row.path_failures.to_string());
    for v in [
        f.map(|f| f.a[0]),
        f.map(|f| f.a[1]),
        f.map(|f| f.b[0]),
        f.map(|f| f.b[1]),
        f.map(|f| f.f_norm),
        f.map(|f| f.f_relative),
        row.quotient,
        row.ball_mu1,
    ] {
        out.push(num(v));
    }
    out.push(row.chain_pass.map_or_else(String::new, |p| p.to_string()));
    out.push(row.error.clone().unwrap_or_default());
    out
}

/// One header line and one line per entry, columns in a fixed order.
pub fn report_csv(report: &VerificationReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(csv_header()).map_err(io)?;
    for row in &report.rows {
        w.write_record(csv_record(row)).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn report_json(report: &VerificationReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Structured,
}

/// Write `report.csv` or `report.json` into `dir`; returns the path.
pub fn emit_report(
    report: &VerificationReport,
    format: ReportFormat,
    dir: &Path,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let (name, body) = match format {
        ReportFormat::Csv => ("report.csv", report_csv(report)?),
        ReportFormat::Structured => ("report.json", report_json(report)),
    };
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_report() -> VerificationReport {
        VerificationReport {
            config: HarnessConfig::default(),
            constants: ReferenceConstants::new(2).unwrap(),
            budget_derivation: budget_derivation(),
            rows: vec![],
            summary: Summary {
                entries: 0,
                passed: 0,
                failed: vec![],
                errors: vec![],
            },
        }
    }

    #[test]
    fn empty_corpus_gives_header_only() {
        let csv = report_csv(&empty_report()).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert_eq!(
            csv.lines().next().unwrap().split(',').count(),
            csv_header().len()
        );
    }

    #[test]
    fn one_row_per_entry() {
        let mut r = empty_report();
        let mut row = EntryRow {
            label: "x,y".into(),
            kind: "domain".into(),
            area: Some(1.0),
            ..Default::default()
        };
        row.checks.push(Check::upper("mu2_bound", 20.0, 21.3, 0.0));
        r.rows.push(row);
        let csv = report_csv(&r).unwrap();
        let mut reader = csv::Reader::from_reader(csv.as_bytes());
        let records: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(records.len(), 1);
        assert_eq!(&records[0][0], "x,y");
        assert_eq!(records[0].len(), csv_header().len());
    }

    #[test]
    fn checks_and_flags() {
        let c = Check::upper("a", 1.0, 1.0, 0.0);
        assert!(c.pass && c.margin == 0.0);
        assert!(!Check::upper("a", 1.01, 1.0, 0.005).pass);
        assert!(Check::upper("a", 1.01, 1.0, 0.02).pass);
        assert!(Check::lower("n", 2.0, 2.0).pass && !Check::lower("n", 1.0, 2.0).pass);
        assert!(Check::near("o", 0.0, 0.0, 1e-9).pass);
        assert!(
            Check::near("o", 10.1, 10.0, 0.02).pass && !Check::near("o", 10.3, 10.0, 0.02).pass
        );

        let mut row = EntryRow {
            checks: vec![Check::upper("kroger", 2.0, 1.0, 0.0)],
            ..Default::default()
        };
        assert!(!row.passed());
        row.checks[0].flagged = true;
        assert!(row.passed());
        row.error = Some("boom".into());
        assert!(!row.passed());
    }

    #[test]
    fn corpus_round_trip_and_validation() {
        let c = default_corpus();
        assert_eq!(c.entries.len(), 7);
        let back = Corpus::parse(&c.to_json(), Path::new("")).unwrap();
        assert_eq!(back.entries, c.entries);
        for e in &c.entries {
            Domain::from_spec(e.domain.as_ref().unwrap()).unwrap();
        }
        let bad = r#"{"entries":[{"h0":0.1,"levels":3}]}"#;
        assert!(matches!(
            Corpus::parse(bad, Path::new("")),
            Err(Error::Schema(_))
        ));
        let few = r#"{"entries":[{"domain":{"label":"s","shapes":[{"type":"rectangle","min":[0,0],"max":[1,1]}]},"h0":0.1,"levels":2}]}"#;
        assert!(matches!(
            Corpus::parse(few, Path::new("")),
            Err(Error::Schema(_))
        ));
        assert!(Corpus::parse(r#"{"entries":[],"extra":1}"#, Path::new("")).is_err());
    }

    #[test]
    fn config_defaults_and_seeding() {
        let c: HarnessConfig =
            serde_json::from_str(r#"{"seed":7,"solver":{"delta_sep":0.02}}"#).unwrap();
        assert_eq!(c.solver.delta_sep, 0.02);
        assert_eq!(c.solver.box_m, 20.0);
        let s = c.seeded();
        assert_eq!(
            (s.solver.seed, s.eigen.seed, s.density.eigen.seed),
            (7, 7, 7)
        );
        assert!(serde_json::from_str::<HarnessConfig>(r#"{"sede":7}"#).is_err());
    }

    #[test]
    fn failing_entry_is_recorded() {
        let corpus = Corpus::parse(
            r#"{"entries":[{"density":"missing.txt","h0":0.1,"levels":1}]}"#,
            Path::new("/nonexistent"),
        )
        .unwrap();
        let run = run_corpus(&corpus, &HarnessConfig::default(), 1).unwrap();
        assert_eq!(run.report.summary.errors, vec!["missing".to_string()]);
        assert!(!run.report.all_passed());
    }
}
