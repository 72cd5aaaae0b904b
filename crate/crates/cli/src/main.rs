use clap::{Parser, Subcommand};
use neumann_core::density::{relaxed_eigs_on, verify_density_bounds_with, Density, DensityOptions};
use neumann_core::domain::{Domain, Point};
use neumann_core::eigen::EigenOptions;
use neumann_core::extrapolate::{richardson, solve_levels};
use neumann_core::fields::TestFieldFrame;
use neumann_core::harness::{
    emit_report, run_corpus, Corpus, CorpusEntry, HarnessConfig, ReportFormat,
};
use neumann_core::mesh::{triangulate, Mesh};
use neumann_core::radial::{mu1_ball, RadialProfile, ReferenceConstants};
use neumann_core::{Error, Result};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

/// Neumann eigenvalue bounds laboratory.
#[derive(Parser)]
#[command(name = "neumann", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reference constants for the ball; all scale-free values are for unit volume.
    Ball {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Write `r,G,G',B` samples on [0, 2R] here.
        #[arg(long)]
        profile_out: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Neumann eigenvalues on nested meshes, extrapolated when possible.
    Eig {
        #[arg(long, conflicts_with = "mesh", required_unless_present = "mesh")]
        domain: Option<PathBuf>,
        /// Mesh text file used as the coarsest level.
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        h: f64,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 4)]
        count: usize,
        /// Write the finest mesh in text format here.
        #[arg(long)]
        mesh_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
    },
    /// Full bound chain for one domain, as a one-row report.
    Bound {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the glued field g^AB on an n×n grid.
    Field {
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        a: Point,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        b: Point,
        #[arg(long)]
        radius: f64,
        /// `xmin,ymin,xmax,ymax`
        #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
        bounds: [f64; 4],
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relaxed eigenvalues of a density and both scale-invariant bounds.
    Density {
        #[arg(long)]
        rho: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value_t = 2)]
        levels: usize,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a corpus and write report.csv, report.json and timings.csv.
    Verify {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "verify-out")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_floats<const N: usize>(s: &str) -> std::result::Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    parse_floats::<2>(s)
}

fn parse_box(s: &str) -> std::result::Result<[f64; 4], String> {
    parse_floats::<4>(s)
}

/// Stdout, or a file when `out` is given.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn csv_writer(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    Ok(csv::Writer::from_writer(sink(out)?))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn row<I: IntoIterator<Item = String>>(
    w: &mut csv::Writer<Box<dyn Write>>,
    fields: I,
) -> Result<()> {
    w.write_record(fields.into_iter().collect::<Vec<_>>())
        .map_err(csv_err)
}

fn ball(dim: usize, radius: f64, profile_out: Option<&Path>, samples: usize) -> Result<bool> {
    let c = ReferenceConstants::new(dim)?;
    let mut w = csv_writer(None)?;
    let mut header = vec![
        "dim",
        "radius",
        "k",
        "mu1_unit_ball",
        "mu1_ball",
        "mu1_star",
        "mu2_star",
        "polya2",
    ];
    let mut values = vec![
        c.k,
        c.mu1_unit_ball,
        mu1_ball(dim, radius)?,
        c.mu1_star,
        c.mu2_star,
        c.polya2(1.0),
    ];
    if let Some(k) = c.kroger2d(1.0) {
        header.push("kroger2d");
        values.push(k);
    }
    row(&mut w, header.into_iter().map(String::from))?;
    let mut fields = vec![dim.to_string(), format!("{radius:e}")];
    fields.extend(values.iter().map(|v| format!("{v:e}")));
    row(&mut w, fields)?;
    w.flush()?;
    if let Some(path) = profile_out {
        let p = RadialProfile::new(dim, radius)?;
        let mut w = csv_writer(Some(path))?;
        row(&mut w, ["r", "G", "dG", "B"].map(String::from))?;
        for i in 0..=samples {
            let r = 2.0 * radius * i as f64 / samples.max(1) as f64;
            let (g, gp) = p.eval(r)?;
            row(
                &mut w,
                [r, g, gp, p.energy_density(r)].map(|v| format!("{v:e}")),
            )?;
        }
        w.flush()?;
    }
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn eig(
    domain: Option<&Path>,
    mesh: Option<&Path>,
    h: f64,
    levels: usize,
    count: usize,
    mesh_out: Option<&Path>,
    seed: u64,
) -> Result<bool> {
    let base = match (domain, mesh) {
        (Some(d), _) => triangulate(&Domain::load(d)?, h)?,
        (None, Some(m)) => Mesh::load(m)?,
        (None, None) => return Err(Error::Schema("pass --domain or --mesh".into())),
    };
    if levels == 0 {
        return Err(Error::OutOfRange("need at least one level".into()));
    }
    let opts = EigenOptions {
        seed,
        ..Default::default()
    };
    let results = solve_levels(Arc::new(base), levels, count.max(3), &opts)?;
    let mut w = csv_writer(None)?;
    let mut header = vec!["k".to_string()];
    header.extend((0..levels).map(|l| format!("level{l}")));
    header.extend(["extrapolated", "order"].map(String::from));
    row(&mut w, header)?;
    for k in 0..count {
        let seq: Vec<f64> = results.iter().map(|r| r.eigenvalues[k]).collect();
        let mut fields = vec![k.to_string()];
        fields.extend(seq.iter().map(|v| format!("{v:e}")));
        match (k >= results[0].zero_modes && levels >= 3).then(|| richardson(&seq)) {
            Some(Ok(e)) => fields.extend([format!("{:e}", e.estimate), format!("{:.3}", e.order)]),
            _ => fields.extend([String::new(), String::new()]),
        }
        row(&mut w, fields)?;
    }
    w.flush()?;
    if let Some(p) = mesh_out {
        std::fs::write(p, results.last().expect("levels >= 1").mesh.to_text())?;
    }
    Ok(true)
}

fn load_config(path: Option<&Path>) -> Result<HarnessConfig> {
    path.map_or_else(|| Ok(HarnessConfig::default()), HarnessConfig::load)
}

fn bound(
    domain: &Path,
    h: f64,
    levels: usize,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<bool> {
    let spec = Domain::load(domain)?.to_spec();
    let corpus = Corpus::parse(
        &serde_json::to_string(&serde_json::json!({ "entries": [CorpusEntry {
            domain: Some(spec),
            density: None,
            h0: h,
            levels,
            expected: None,
            flagged: vec![],
        }] }))?,
        Path::new(""),
    )?;
    let run = run_corpus(&corpus, &load_config(config)?, 1)?;
    let csv = neumann_core::harness::report_csv(&run.report)?;
    sink(out)?.write_all(csv.as_bytes())?;
    Ok(run.report.all_passed())
}

fn field(
    a: Point,
    b: Point,
    radius: f64,
    bounds: [f64; 4],
    n: usize,
    out: Option<&Path>,
) -> Result<bool> {
    if n < 2 {
        return Err(Error::OutOfRange("grid needs n >= 2".into()));
    }
    let frame = TestFieldFrame::new(a, b, RadialProfile::new(2, radius)?, 0.0)?;
    let mut w = csv_writer(out)?;
    row(&mut w, ["i", "j", "x", "y", "g1", "g2"].map(String::from))?;
    for j in 0..n {
        for i in 0..n {
            let x = bounds[0] + (bounds[2] - bounds[0]) * i as f64 / (n - 1) as f64;
            let y = bounds[1] + (bounds[3] - bounds[1]) * j as f64 / (n - 1) as f64;
            let g = frame.eval([x, y]);
            let mut fields = vec![i.to_string(), j.to_string()];
            fields.extend([x, y, g[0], g[1]].map(|v| format!("{v:e}")));
            row(&mut w, fields)?;
        }
    }
    w.flush()?;
    Ok(true)
}

fn density(
    rho: &Path,
    h: f64,
    count: usize,
    levels: usize,
    eps: f64,
    out: Option<&Path>,
) -> Result<bool> {
    let rho = Density::load(rho)?;
    let opts = DensityOptions {
        eps_floor: eps,
        ..Default::default()
    };
    let mesh = triangulate(&rho.box_domain()?, h)?;
    let relaxed = relaxed_eigs_on(&rho, &mesh, count.max(3), &opts)?;
    let report = verify_density_bounds_with(&rho, h, levels, &opts)?;
    let mut w = csv_writer(out)?;
    row(
        &mut w,
        [
            "quantity", "k", "eps", "value", "bound", "budget", "margin", "pass",
        ]
        .map(String::from),
    )?;
    let blank = || String::new();
    row(
        &mut w,
        [
            "mass".into(),
            blank(),
            blank(),
            format!("{:e}", report.mass),
            blank(),
            blank(),
            blank(),
            blank(),
        ],
    )?;
    for (k, v) in relaxed.mu_tilde.iter().enumerate() {
        row(
            &mut w,
            [
                "mu_tilde".into(),
                k.to_string(),
                format!("{eps:e}"),
                format!("{v:e}"),
                blank(),
                blank(),
                blank(),
                blank(),
            ],
        )?;
    }
    for s in &relaxed.eps_sweep {
        for (k, v) in s.mu_tilde.iter().enumerate() {
            row(
                &mut w,
                [
                    "sweep".into(),
                    k.to_string(),
                    format!("{:e}", s.eps),
                    format!("{v:e}"),
                    blank(),
                    blank(),
                    blank(),
                    blank(),
                ],
            )?;
        }
    }
    for c in &report.checks {
        row(
            &mut w,
            [
                "bound".into(),
                c.k.to_string(),
                format!("{eps:e}"),
                format!("{:e}", c.product),
                format!("{:e}", c.mu_star),
                format!("{:e}", c.budget),
                format!("{:e}", c.margin),
                c.pass.to_string(),
            ],
        )?;
    }
    w.flush()?;
    Ok(report.checks.iter().all(|c| c.pass))
}

fn verify(
    corpus: &Path,
    workers: usize,
    seed: Option<u64>,
    out: &Path,
    config: Option<&Path>,
) -> Result<bool> {
    let corpus = Corpus::load(corpus)?;
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let run = run_corpus(&corpus, &cfg, workers)?;
    emit_report(&run.report, ReportFormat::Csv, out)?;
    emit_report(&run.report, ReportFormat::Structured, out)?;
    let mut w = csv_writer(Some(&out.join("timings.csv")))?;
    row(&mut w, ["label", "seconds"].map(String::from))?;
    for (label, secs) in &run.timings {
        row(&mut w, [label.clone(), format!("{secs:.3}")])?;
    }
    w.flush()?;
    let s = &run.report.summary;
    eprintln!("{} of {} entries passed", s.passed, s.entries);
    for label in &s.failed {
        eprintln!("failed checks: {label}");
    }
    for label in &s.errors {
        eprintln!("error: {label}");
    }
    Ok(run.report.all_passed())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ball {
            dim,
            radius,
            profile_out,
            samples,
        } => ball(dim, radius, profile_out.as_deref(), samples),
        Command::Eig {
            domain,
            mesh,
            h,
            levels,
            count,
            mesh_out,
            seed,
        } => eig(
            domain.as_deref(),
            mesh.as_deref(),
            h,
            levels,
            count,
            mesh_out.as_deref(),
            seed,
        ),
        Command::Bound {
            domain,
            h,
            levels,
            config,
            out,
        } => bound(&domain, h, levels, config.as_deref(), out.as_deref()),
        Command::Field {
            a,
            b,
            radius,
            bounds,
            n,
            out,
        } => field(a, b, radius, bounds, n, out.as_deref()),
        Command::Density {
            rho,
            h,
            count,
            levels,
            eps,
            out,
        } => density(&rho, h, count, levels, eps, out.as_deref()),
        Command::Verify {
            corpus,
            workers,
            seed,
            out,
            config,
        } => verify(&corpus, workers, seed, &out, config.as_deref()),
    }
}

/// 0: all checks passed; 1: a check failed; 2: bad input or a solver error.
fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
