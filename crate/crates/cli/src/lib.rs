//! Argument parsing and command dispatch for the `julia-gasket` binary.
//!
//! [`parse`] turns argv into a validated [`Invocation`]; [`execute`] runs it
//! and returns the exit code together with the one-line JSON summary.

// index loops mirror the formulas; `!(x > 0.0)` also rejects NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use julia_gasket::cell_complex::build_level;
use julia_gasket::dirichlet_form::{
    dynamical_invariance, energy, energy_limit_estimate, harmonic_extension,
};
use julia_gasket::geometry::{self, embed_vertices, infer_gluing, RenderConfig};
use julia_gasket::renormalization::{general_scan, solve_symmetric, SCAN_POINTS};
use julia_gasket::spectrum::{
    assemble_level, measure_invariance_check, solve_spectrum, spectral_map_report,
    MeasureInvariance, SpectralReport, SpectrumKind,
};
use julia_gasket::{io, Complex64, ConductanceModel, Error, Execution, GluingTable, MapSpec};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// Highest level any subcommand accepts.
pub const LEVEL_CAP: usize = 7;
/// Highest fine level used when pulling eigenfunctions back by `R`.
pub const MAP_LEVEL_CAP: usize = 6;
/// Highest fine level for exact rational checks.
pub const EXACT_LEVEL_CAP: usize = 5;

#[derive(Debug, Clone, Parser)]
#[command(
    name = "julia-gasket",
    version,
    about = "Laplacians on gasket-like Julia sets of z^n + lambda/z^m"
)]
pub struct Invocation {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Critical orbits, post-critical set and Misiurewicz test.
    Classify,
    /// Escape-time image of the Julia set (julia.ppm).
    Render,
    /// Combinatorial level graph (vertices.csv, edges.csv, cells.csv).
    Graph,
    /// Planar coordinates of a level (coords.csv).
    Vertices,
    /// Harmonic extensions keep the renormalized energy constant.
    EnergyCheck,
    /// Repeated harmonic extension of boundary data.
    Harmonic,
    /// Three-tile renormalization problem.
    Renorm,
    /// Dirichlet and Neumann spectra (eigenvalues.csv).
    Spectrum,
    /// Pullback identities for energy and measure.
    Invariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Dirichlet,
    Neumann,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    #[arg(long, global = true, default_value_t = 2)]
    pub n: u32,
    #[arg(long, global = true, default_value_t = 1)]
    pub m: u32,
    /// Complex parameter as `re` or `re,im`.
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = parse_complex, default_value = "-0.5925925925925926")]
    pub lambda: Complex64,
    #[arg(long, global = true, default_value_t = 3)]
    pub level: usize,
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long = "max-iter", global = true, default_value_t = 200)]
    pub max_iter: usize,
    /// Symmetric tile weight for renorm and the conductance model.
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// Raw conductances `a,b,c` for the general renormalization scan.
    #[arg(long, global = true, value_parser = parse_triple)]
    pub c: Option<[f64; 3]>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 100)]
    pub trials: usize,
    /// Directory for report.json and data files; nothing is written without it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Image side length in pixels.
    #[arg(long, global = true, default_value_t = 512)]
    pub size: usize,
    /// Grid points for the renormalization scan.
    #[arg(long, global = true, default_value_t = SCAN_POINTS)]
    pub grid: usize,
    /// Number of eigenpairs pulled back by `R`.
    #[arg(long, global = true, default_value_t = 3)]
    pub k: usize,
    #[arg(long, global = true, value_enum, default_value_t = KindArg::Both)]
    pub kind: KindArg,
    /// Boundary values for `harmonic`, one per point of `V_0`.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub boundary: Option<Vec<f64>>,
    /// Refine lambda so that critical point 0 is preperiodic with
    /// `preperiod,period` before anything else runs.
    #[arg(long, global = true, value_parser = parse_pair)]
    pub refine: Option<(usize, usize)>,
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("not a number: {p:?}"))
        })
        .collect()
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    match parse_floats(s)?.as_slice() {
        [re] => Ok(Complex64::new(*re, 0.0)),
        [re, im] => Ok(Complex64::new(*re, *im)),
        _ => Err("expected `re` or `re,im`".into()),
    }
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    parse_floats(s)?
        .try_into()
        .map_err(|_| "expected three comma-separated values".to_string())
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| format!("not an integer: {p:?}"))
        })
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [a, p] if *p > 0 => Ok((*a, *p)),
        _ => Err("expected `preperiod,period` with period >= 1".into()),
    }
}

/// Parses and validates `argv` (including the program name).
pub fn parse<I, T>(argv: I) -> Result<Invocation, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let inv = Invocation::try_parse_from(argv)?;
    let usage = |msg: String| {
        use clap::CommandFactory;
        Invocation::command().error(clap::error::ErrorKind::ValueValidation, msg)
    };
    let o = &inv.opts;
    if o.level > LEVEL_CAP {
        return Err(usage(format!(
            "--level {} exceeds the cap of {LEVEL_CAP}",
            o.level
        )));
    }
    if !(o.tol > 0.0) {
        return Err(usage("--tol must be positive".into()));
    }
    if o.max_iter == 0 || o.size == 0 || o.trials == 0 {
        return Err(usage(
            "--max-iter, --size and --trials must be positive".into(),
        ));
    }
    if o.max_iter > u32::MAX as usize {
        return Err(usage("--max-iter is too large".into()));
    }
    if let Some(r) = o.r {
        if !(r > 0.0 && r.is_finite()) {
            return Err(usage("--r must be positive".into()));
        }
    }
    MapSpec::new(o.n, o.m, o.lambda).map_err(|e| usage(e.to_string()))?;
    if inv.command == Command::Renorm && o.r.is_some() == o.c.is_some() {
        return Err(usage("renorm takes exactly one of --r or --c".into()));
    }
    Ok(inv)
}

/// Exit code and the JSON summary printed on stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub summary: Value,
}

/// Artifacts produced by a command before they are written.
struct Report {
    summary: Value,
    full: Value,
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Report {
    fn new(summary: Value, full: Value) -> Self {
        Report {
            summary,
            full,
            files: Vec::new(),
        }
    }
}

pub fn execute(inv: &Invocation) -> Outcome {
    let name = command_name(inv.command);
    match run(inv).and_then(|rep| write_artifacts(inv, rep)) {
        Ok(mut summary) => {
            let obj = summary.as_object_mut().expect("summaries are objects");
            obj.insert("command".into(), json!(name));
            obj.insert("status".into(), json!("ok"));
            Outcome { code: 0, summary }
        }
        Err(e) => Outcome {
            code: 1,
            summary: diagnostic(name, &e),
        },
    }
}

fn diagnostic(name: &str, e: &Error) -> Value {
    let kind = match e {
        Error::Domain(_) => "domain",
        Error::PoleCollision { .. } => "pole_collision",
        Error::Inconclusive { .. } => "inconclusive",
        Error::Solver { .. } => "solver",
        Error::Structural(_) => "structural",
        Error::Embedding(_) => "embedding",
        Error::Consistency(_) => "consistency",
        Error::Inference(_) => "inference",
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => "io",
    };
    let mut v =
        json!({ "command": name, "status": "error", "error": kind, "message": e.to_string() });
    if let Error::Inconclusive { partial, .. } = e {
        v["partial"] = serde_json::to_value(partial).unwrap_or(Value::Null);
    }
    v
}

pub fn command_name(c: Command) -> &'static str {
    match c {
        Command::Classify => "classify",
        Command::Render => "render",
        Command::Graph => "graph",
        Command::Vertices => "vertices",
        Command::EnergyCheck => "energy-check",
        Command::Harmonic => "harmonic",
        Command::Renorm => "renorm",
        Command::Spectrum => "spectrum",
        Command::Invariance => "invariance",
    }
}

fn write_artifacts(inv: &Invocation, rep: Report) -> Result<Value, Error> {
    let Some(dir) = &inv.opts.out else {
        return Ok(rep.summary);
    };
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut full = serde_json::to_vec_pretty(&rep.full)?;
    full.push(b'\n');
    for (name, bytes) in std::iter::once(("report.json", full)).chain(rep.files) {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        written.push(path.display().to_string());
    }
    let mut summary = rep.summary;
    summary["files"] = json!(written);
    Ok(summary)
}

fn spec_of(o: &Options) -> Result<MapSpec, Error> {
    let spec = MapSpec::new(o.n, o.m, o.lambda)?;
    match o.refine {
        Some((a, p)) => Ok(spec.refine_lambda(0, a, p)?.0),
        None => Ok(spec),
    }
}

fn is_sierpinski(spec: &MapSpec) -> bool {
    let sg = MapSpec::sierpinski();
    spec.n() == sg.n() && spec.m() == sg.m() && (spec.lambda() - sg.lambda()).norm() < 1e-12
}

/// The SG map uses its known table; any other map has it inferred.
fn table_of(spec: &MapSpec) -> Result<GluingTable, Error> {
    if is_sierpinski(spec) {
        Ok(GluingTable::sg_dynamical_gluing())
    } else {
        infer_gluing(spec, geometry::DEFAULT_TOL)
    }
}

/// `--r` selects the symmetric renormalization solution; otherwise the
/// standard weights on three tiles, and unit weights elsewhere.
fn model_of(o: &Options, table: &GluingTable) -> Result<ConductanceModel, Error> {
    match (o.r, table.n_tiles) {
        (Some(r), 3) => Ok(solve_symmetric(r)?.conductance_model()),
        (Some(_), n) => Err(Error::Domain(format!(
            "--r needs a three-tile table, got {n} tiles"
        ))),
        (None, 3) => Ok(ConductanceModel::standard(table)),
        (None, _) => ConductanceModel::uniform(table, 1.0, 1.0),
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), Error>) -> Result<Vec<u8>, Error> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn run(inv: &Invocation) -> Result<Report, Error> {
    let o = &inv.opts;
    let spec = spec_of(o)?;
    let map = json!({ "n": spec.n(), "m": spec.m(), "lambda": spec.lambda() });
    let mut rep = match inv.command {
        Command::Classify => classify(o, &spec)?,
        Command::Render => render(o, &spec)?,
        Command::Graph => graph(o, &spec)?,
        Command::Vertices => vertices(o, &spec)?,
        Command::EnergyCheck => energy_check(o, &spec)?,
        Command::Harmonic => harmonic(o, &spec)?,
        Command::Renorm => renorm(o)?,
        Command::Spectrum => spectrum(o, &spec)?,
        Command::Invariance => invariance(o, &spec)?,
    };
    if inv.command != Command::Renorm {
        rep.summary["map"] = map.clone();
        rep.full["map"] = map;
    }
    Ok(rep)
}

fn classify(o: &Options, spec: &MapSpec) -> Result<Report, Error> {
    let c = spec.classify(o.max_iter, o.tol)?;
    let summary = json!({
        "is_misiurewicz": c.is_misiurewicz,
        "is_ms_candidate": c.is_ms_candidate,
        "indeterminate": c.indeterminate,
        "critical_points": c.critical_points,
        "post_critical_set": c.post_critical_set,
        "cycle_periods": c.cycle_periods,
        "mu_min": c.mu_min,
    });
    Ok(Report::new(summary, serde_json::to_value(&c)?))
}

fn render(o: &Options, spec: &MapSpec) -> Result<Report, Error> {
    let cfg = RenderConfig::square(spec, o.size, o.max_iter as u32);
    let img = geometry::render(spec, &cfg)?;
    let bounded = img.counts.iter().filter(|&&c| c == cfg.max_iter).count();
    let summary = json!({ "width": img.width, "height": img.height, "max_iter": cfg.max_iter, "bounded_pixels": bounded });
    let mut rep = Report::new(summary, json!({ "config": cfg, "bounded_pixels": bounded }));
    rep.files.push(("julia.ppm", img.to_pgm()));
    Ok(rep)
}

fn graph(o: &Options, spec: &MapSpec) -> Result<Report, Error> {
    let table = table_of(spec)?;
    let g = build_level(&table, o.level)?;
    let summary = json!({
        "level": o.level,
        "vertices": g.vertex_count(),
        "edges": g.edges.len(),
        "cells": g.cells.len(),
        "boundary": g.boundary,
    });
    let full = json!({ "table": table, "level": o.level, "vertices": g.vertex_count(), "edges": g.edges.len(), "cells": g.cells.len() });
    let mut rep = Report::new(summary, full);
    rep.files
        .push(("vertices.csv", csv_bytes(|b| io::write_vertices(&g, b))?));
    rep.files
        .push(("edges.csv", csv_bytes(|b| io::write_edges(&g, b))?));
    rep.files
        .push(("cells.csv", csv_bytes(|b| io::write_cells(&g, b))?));
    Ok(rep)
}

fn vertices(o: &Options, spec: &MapSpec) -> Result<Report, Error> {
    let table = table_of(spec)?;
    let lvl = embed_vertices(spec, &table, o.level, geometry::DEFAULT_TOL)?;
    let radius = lvl.coords.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let summary = json!({ "level": o.level, "vertices": lvl.coords.len(), "max_modulus": radius });
    let mut rep = Report::new(
        summary.clone(),
        json!({ "summary": summary, "table": table }),
    );
    rep.files
        .push(("coords.csv", csv_bytes(|b| io::write_coords(&lvl, b))?));
    Ok(rep)
}

fn random_values(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn energy_check(o: &Options, spec: &MapSpec) -> Result<Report, Error> {
    let table = table_of(spec)?;
    let model = model_of(o, &table)?;
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let levels: Vec<_> = (0..=o.level)
        .map(|m| build_level(&table, m))
        .collect::<Result<_, _>>()?;
    let mut worst = 0.0f64;
    for m in 0..o.level {
        for _ in 0..o.trials {
            let u = random_values(&mut rng, levels[m].vertex_count());
            let v = harmonic_extension(&levels[m], &levels[m + 1], &model, &u)?;
            let e0 = energy(&levels[m], &model, &u, None)?.renormalized;
            let e1 = energy(&levels[m + 1], &model, &v, None)?.renormalized;
            worst = worst.max((e1 - e0).abs() / e0.abs().max(f64::MIN_POSITIVE));
        }
    }
    let summary = json!({
        "level": o.level,
        "trials": o.trials,
        "seed": o.seed,
        "renormalized_factor": model.renormalized_factor(),
        "max_relative_energy_change": worst,
    });
    Ok(Report::new(
        summary.clone(),
        json!({ "summary": summary, "model": model_json(&model) }),
    ))
}

fn model_json(model: &ConductanceModel) -> Value {
    json!({ "base": model.base, "weights": model.weights })
}

fn harmonic(o: &Options, spec: &MapSpec) -> Result<Report, Error> {
    let table = table_of(spec)?;
    let model = model_of(o, &table)?;
    let mut data = vec![0.0; table.boundary_size];
    data[0] = 1.0;
    let data = o.boundary.clone().unwrap_or(data);
    if data.len() != table.boundary_size {
        return Err(Error::Domain(format!(
            "--boundary needs {} values, got {}",
            table.boundary_size,
            data.len()
        )));
    }
    let level = o.level.max(1);
    let energies = energy_limit_estimate(&table, &model, &data, level)?;
    let mut graph = build_level(&table, 0)?;
    let mut values = data.clone();
    for m in 1..=level {
        let fine = build_level(&table, m)?;
        values = harmonic_extension(&graph, &fine, &model, &values)?;
        graph = fine;
    }
    let renormalized: Vec<f64> = energies.iter().map(|e| e.renormalized).collect();
    let summary = json!({
        "level": level,
        "boundary": data,
        "energies": renormalized,
        "min": values.iter().cloned().fold(f64::INFINITY, f64::min),
        "max": values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    });
    let mut rep = Report::new(
        summary.clone(),
        json!({ "summary": summary, "energies": energies }),
    );
    rep.files.push((
        "harmonic.csv",
        csv_bytes(|b| io::write_function(&values, b))?,
    ));
    Ok(rep)
}

fn renorm(o: &Options) -> Result<Report, Error> {
    if let Some(r) = o.r {
        let sol = solve_symmetric(r)?;
        let summary = json!({
            "mode": "symmetric",
            "lambda": sol.lambda,
            "r_tilde": sol.r_tilde,
            "s": sol.s,
            "residuals": sol.residuals,
        });
        return Ok(Report::new(summary, serde_json::to_value(&sol)?));
    }
    let c = o.c.expect("parse requires --r or --c");
    let sols = general_scan(c, o.grid, Execution::default())?;
    let summary = json!({
        "mode": "scan",
        "c": c,
        "solutions": sols.len(),
        "lambdas": sols.iter().map(|s| s.lambda).collect::<Vec<_>>(),
        "max_residual": sols.iter().map(|s| s.max_residual()).fold(0.0, f64::max),
    });
    Ok(Report::new(
        summary,
        json!({ "c": c, "grid": o.grid, "solutions": sols }),
    ))
}

fn spectrum(o: &Options, spec: &MapSpec) -> Result<Report, Error> {
    let table = table_of(spec)?;
    let model = model_of(o, &table)?;
    let (_, pair) = assemble_level(&table, &model, o.level)?;
    let kinds: &[SpectrumKind] = match o.kind {
        KindArg::Dirichlet => &[SpectrumKind::Dirichlet],
        KindArg::Neumann => &[SpectrumKind::Neumann],
        KindArg::Both if o.level == 0 => &[SpectrumKind::Neumann],
        KindArg::Both => &[SpectrumKind::Dirichlet, SpectrumKind::Neumann],
    };
    let mut reports: Vec<SpectralReport> = kinds
        .iter()
        .map(|&k| solve_spectrum(&pair, k))
        .collect::<Result<_, _>>()?;
    let mapped = if o.level >= 1 && o.level < MAP_LEVEL_CAP && o.kind != KindArg::Neumann {
        let k = o.k.min(reports[0].eigenvalues.len());
        let map_rep = spectral_map_report(&table, &model, o.level, k)?;
        reports[0].map_residuals = map_rep.map_residuals.clone();
        reports[0].spectrum_distances = map_rep.spectrum_distances.clone();
        reports[0].energy_defects = map_rep.energy_defects.clone();
        true
    } else {
        false
    };
    let lowest: Vec<Value> = reports
        .iter()
        .map(|r| json!({ "kind": r.kind, "count": r.eigenvalues.len(), "lowest": &r.eigenvalues[..r.eigenvalues.len().min(5)] }))
        .collect();
    let mut summary = json!({ "level": o.level, "spectra": lowest });
    if mapped {
        summary["map_residuals"] = json!(reports[0].map_residuals);
        summary["spectrum_distances"] = json!(reports[0].spectrum_distances);
    }
    let mut rep = Report::new(summary, json!({ "level": o.level, "reports": reports }));
    rep.files.push((
        "eigenvalues.csv",
        csv_bytes(|b| io::write_eigenvalues(&reports, b))?,
    ));
    Ok(rep)
}

fn random_rational(rng: &mut ChaCha8Rng) -> BigRational {
    BigRational::new(
        BigInt::from(rng.gen_range(-100i64..=100)),
        BigInt::from(rng.gen_range(1i64..=50)),
    )
}

fn invariance(o: &Options, spec: &MapSpec) -> Result<Report, Error> {
    if o.level < 1 {
        return Err(Error::Domain(
            "invariance compares levels m-1 and m, needs --level >= 1".into(),
        ));
    }
    let table = table_of(spec)?;
    let model = model_of(o, &table)?;
    let coarse = build_level(&table, o.level - 1)?;
    let fine = build_level(&table, o.level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    let (mut raw, mut renormalized) = (0.0f64, 0.0f64);
    for _ in 0..o.trials {
        let u = random_values(&mut rng, coarse.vertex_count());
        let r = dynamical_invariance(&coarse, &fine, &model, &u)?;
        raw = raw.max(r.raw / r.fine.raw.abs().max(f64::MIN_POSITIVE));
        renormalized =
            renormalized.max(r.renormalized / r.fine.renormalized.abs().max(f64::MIN_POSITIVE));
    }
    let mut summary = json!({
        "level": o.level,
        "trials": o.trials,
        "seed": o.seed,
        "max_raw_residual": raw,
        "max_renormalized_residual": renormalized,
        "max_energy_residual": raw.max(renormalized),
    });
    if o.level <= EXACT_LEVEL_CAP {
        let exact_model = if o.r.is_none() && table.n_tiles == 3 {
            ConductanceModel::standard_exact(&table)
        } else {
            ConductanceModel::uniform(
                &table,
                BigRational::from_integer(1.into()),
                BigRational::from_integer(1.into()),
            )?
        };
        let mut exact = true;
        for _ in 0..o.trials {
            let u: Vec<BigRational> = (0..coarse.vertex_count())
                .map(|_| random_rational(&mut rng))
                .collect();
            let r = dynamical_invariance(&coarse, &fine, &exact_model, &u)?;
            exact &= r.raw == BigRational::from_integer(0.into())
                && r.renormalized == BigRational::from_integer(0.into());
        }
        let m: MeasureInvariance<BigRational> = measure_invariance_check(&table, o.level - 1)?;
        summary["exact_energy_identities"] = json!(exact);
        summary["measure_vertex_defect"] = json!(m.vertex_defect.to_string());
        summary["measure_cell_defect"] = json!(m.cell_defect.to_string());
        summary["measure_cells_ok"] = json!(m.cells_ok);
    }
    Ok(Report::new(
        summary.clone(),
        json!({ "summary": summary, "model": model_json(&model) }),
    ))
}

/// Writes `summary` as a single line.
pub fn summary_line(summary: &Value) -> String {
    serde_json::to_string(summary).expect("values serialize")
}
