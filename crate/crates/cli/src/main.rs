//! `mbinv`: structured inversion of Markov-process covariance matrices.
//!
//! Exit codes: 0 success, 1 I/O or invalid input, 2 structure violation,
//! 3 numerical singularity, 4 rank-deficient design.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use mbinv::banded::{self, BandedGeneratorForm};
use mbinv::block::{self, BlockGeneratorForm};
use mbinv::blue::{blue_estimate, LinearMeanModel, StructuredPrecision};
use mbinv::dense::{invert_dense, DEFAULT_PIVOT_TOL};
use mbinv::document::Document;
use mbinv::kernels::{self, Covariance, Example2dKernel, Kernel, SamplingGrid};
use mbinv::scalar::{self, DEFAULT_ALPHA_TOL};
use mbinv::{DenseMatrix, Error, StructureReport};

#[derive(Parser)]
#[command(name = "mbinv", version, about = "Structured inversion of Markov-process covariance matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Invert a generator, band or block document, or a dense matrix after compression.
    Invert(InvertArgs),
    /// Memory ratio of dense versus generator storage.
    Table1(Table1Args),
    /// Predicted (and optionally measured) operation counts of block inversion.
    Opcount(OpcountArgs),
    /// Coupled two-component example on a uniform grid.
    Demo2d(Demo2dArgs),
    /// Best linear unbiased estimate of a linear mean model.
    Estimate(EstimateArgs),
    /// Class-membership test of a matrix.
    Check(CheckArgs),
}

#[derive(Args)]
struct StructureHint {
    /// Half-bandwidth of the inverse (1 for the tridiagonal class).
    #[arg(long, conflicts_with = "block_size")]
    m: Option<usize>,
    /// Block size of a vector Markov covariance.
    #[arg(long)]
    block_size: Option<usize>,
}

#[derive(Args)]
struct InvertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hint: StructureHint,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct Table1Args {
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 50, 100, 500, 1000])]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5])]
    m: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OpcountArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    /// Run a random SPD instance through the instrumented inversion.
    #[arg(long)]
    measure: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Demo2dArgs {
    #[arg(long)]
    sigma1: f64,
    #[arg(long)]
    sigma2: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    /// `const` or `poly:K` (degree K).
    #[arg(long)]
    basis: String,
    /// Kernel JSON file.
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    hint: StructureHint,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

enum CliError {
    Input(String),
    Structure(String),
    Lib(Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Structure(_) => 2,
            CliError::Lib(e) => match e {
                Error::NotGeneratorForm { .. } | Error::NotSymmetric { .. } => 2,
                Error::SingularMatrix { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::SingularLeadingMinor { .. }
                | Error::ZeroDiagonal { .. }
                | Error::SingularLocalBlock { .. }
                | Error::SingularDiagonalBlock { .. }
                | Error::SingularSchurBlock { .. }
                | Error::ZeroVariance { .. } => 3,
                Error::RankDeficientDesign { .. } => 4,
                Error::NotSquare { .. } | Error::DimensionMismatch(_) | Error::InvalidInput(_) | Error::InvalidGrid(_) => 1,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(s) | CliError::Structure(s) => f.write_str(s),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display()))),
        None => emit(&format!("{text}\n")),
    }
}

/// Writes to stdout; a closed pipe on the reading side is not an error.
fn emit(text: &str) -> CliResult<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::Input(format!("cannot write output: {e}"))),
        _ => Ok(()),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("values serialize")
}

fn read_document(path: &Path) -> CliResult<Document> {
    Ok(Document::from_json(&read_text(path)?)?)
}

fn report_line(key: &str, value: impl fmt::Display) {
    eprintln!("{key}: {value}");
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}

fn invert_scalar(gen: &scalar::ScalarGeneratorForm) -> CliResult<Document> {
    let inv = scalar::invert(gen, DEFAULT_ALPHA_TOL)?;
    report_line("class", "tridiagonal");
    report_line("alphas", fmt_list(inv.alphas()));
    report_line("determinant", scalar::determinant(gen).determinant);
    Ok(Document::Tridiagonal(inv))
}

fn invert_band(gen: &BandedGeneratorForm) -> CliResult<Document> {
    let inv = banded::invert(gen, DEFAULT_PIVOT_TOL)?;
    report_line("class", format!("band (m = {})", gen.m()));
    report_line("alphas", fmt_list(inv.alphas()));
    report_line("determinant", banded::determinant(gen, DEFAULT_PIVOT_TOL)?.determinant);
    Ok(Document::BandInverse(inv))
}

fn invert_block(gen: &BlockGeneratorForm) -> CliResult<Document> {
    let r = block::invert(gen, DEFAULT_PIVOT_TOL)?;
    let dets: Vec<f64> = r.inverse.a_blocks().iter().map(|a| mbinv::dense::determinant_dense(a).unwrap_or(0.0)).collect();
    report_line("class", format!("block tridiagonal (m = {})", gen.m()));
    report_line("det_A", fmt_list(&dets));
    report_line("determinant", dets.iter().product::<f64>());
    report_line("multiplications", r.ops.multiplications);
    report_line("additions", r.ops.additions);
    report_line("predicted_multiplications", block::op_count_model(gen.n(), gen.m()).multiplications);
    Ok(Document::BlockTridiagonal(r.inverse))
}

fn structure_error(report: &StructureReport) -> CliError {
    CliError::Structure(format!(
        "structure violated: worst residual {:e} at ({}, {}) exceeds {:e}",
        report.worst_residual, report.worst_row, report.worst_col, report.threshold
    ))
}

fn cmd_invert(args: &InvertArgs) -> CliResult<()> {
    let out = match read_document(&args.input)? {
        Document::ScalarGenerator(g) => invert_scalar(&g)?,
        Document::Band(g) => invert_band(&g)?,
        Document::Block(g) => invert_block(&g)?,
        Document::Dense(mat) => match (args.hint.m, args.hint.block_size) {
            (Some(1), None) => invert_scalar(&scalar::compress(&mat, args.tol)?)?,
            (Some(m), None) => {
                let report = banded::connectivity_test(&mat, m, args.tol)?;
                if !report.holds {
                    return Err(structure_error(&report));
                }
                invert_band(&BandedGeneratorForm::from_dense(&mat, m)?)?
            }
            (None, Some(b)) => invert_block(&block::compress(&mat, b, args.tol)?)?,
            _ => return Err(CliError::Input("dense input needs --m or --block-size".into())),
        },
        other => return Err(CliError::Input(format!("cannot invert a {} document", other.kind()))),
    };
    write_text(Some(&args.out), &out.to_json())
}

fn table1_csv(ns: &[usize], ms: &[usize]) -> CliResult<String> {
    if ns.iter().chain(ms).any(|&v| v == 0) {
        return Err(CliError::Input("n and m must be positive".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Input(e.to_string());
    w.write_record(["m", "n", "ratio"]).map_err(io)?;
    for &m in ms {
        for &n in ns {
            w.write_record([m.to_string(), n.to_string(), format!("{:.2}", block::memory_ratio(n, m))]).map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ascii"))
}

fn cmd_table1(args: &Table1Args) -> CliResult<()> {
    let csv = table1_csv(&args.n, &args.m)?;
    match &args.out {
        Some(p) => fs::write(p, csv).map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display()))),
        None => emit(&csv),
    }
}

#[derive(Serialize)]
struct OpcountReport {
    predicted_mult: u64,
    predicted_add: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    measured_mult: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    measured_add: Option<u64>,
}

fn cmd_opcount(args: &OpcountArgs) -> CliResult<()> {
    if args.n < 2 || args.m < 1 {
        return Err(CliError::Input("need n >= 2 and m >= 1".into()));
    }
    let model = block::op_count_model(args.n, args.m);
    let measured = if args.measure {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let gen = block::random_spd_generator(args.n, args.m, &mut rng);
        Some(block::invert(&gen, DEFAULT_PIVOT_TOL)?.ops)
    } else {
        None
    };
    let report = OpcountReport {
        predicted_mult: model.multiplications,
        predicted_add: model.additions,
        measured_mult: measured.map(|o| o.multiplications),
        measured_add: measured.map(|o| o.additions),
    };
    emit(&format!("{}\n", to_json(&report)))?;
    Ok(())
}

fn cmd_demo2d(args: &Demo2dArgs) -> CliResult<()> {
    if args.n < 2 {
        return Err(CliError::Input("need n >= 2".into()));
    }
    let kernel = Example2dKernel::new(args.sigma1, args.sigma2, args.alpha)?;
    let grid = SamplingGrid::uniform(args.tau, args.n)?;
    let closed = kernels::example_2d_blocks(&kernel, &grid)?;
    let gen = BlockGeneratorForm::new(closed.k_diag.clone(), closed.gamma.clone())?;
    let r = block::invert(&gen, DEFAULT_PIVOT_TOL)?;
    let oracle = invert_dense(&kernel.covariance(&grid)?, DEFAULT_PIVOT_TOL)?;
    let deviation = r.inverse.to_dense().max_abs_diff(&oracle);
    let bundle = json!({
        "grid": grid.points(),
        "closed_form": closed,
        "determinant": closed.det_a.iter().product::<f64>(),
        "inverse": Document::BlockTridiagonal(r.inverse),
        "max_deviation": deviation,
    });
    write_text(args.out.as_deref(), &bundle.to_string())
}

fn read_measurements(path: &Path) -> CliResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| CliError::Input(e.to_string()))?.clone();
    if headers.len() < 2 || &headers[0] != "t" {
        return Err(CliError::Input("measurement CSV needs a header t,z or t,z1..zm".into()));
    }
    let mut t = Vec::new();
    let mut z = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(e.to_string()))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CliError::Input(format!("row {}: {e}", line + 1)))?;
        t.push(vals[0]);
        z.push(vals[1..].to_vec());
    }
    Ok((t, z))
}

fn parse_basis(spec: &str, points: &[f64]) -> CliResult<LinearMeanModel> {
    let model = match spec {
        "const" => LinearMeanModel::constant(points.len()),
        s => match s.strip_prefix("poly:").and_then(|k| k.parse::<usize>().ok()) {
            Some(k) => LinearMeanModel::polynomial(points, k),
            None => return Err(CliError::Input(format!("unknown basis `{s}`, expected const or poly:K"))),
        },
    };
    Ok(model?)
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let kernel: Kernel = serde_json::from_str(&read_text(&args.kernel)?)
        .map_err(|e| CliError::Input(format!("bad kernel: {e}")))?;
    let (t, rows) = read_measurements(&args.data)?;
    let m = kernel.dim();
    if rows.iter().any(|r| r.len() != m) {
        return Err(CliError::Input(format!("kernel has {m} components per point; data columns disagree")));
    }
    let grid = SamplingGrid::new(t)?;
    let z: Vec<f64> = rows.concat();
    let scalar_model = parse_basis(&args.basis, grid.points())?;
    let model = if m == 1 { scalar_model } else { LinearMeanModel::per_component(&scalar_model, m)? };
    let precision: Box<dyn StructuredPrecision> = match kernels::covariance_matrix(&kernel, &grid)? {
        Covariance::Scalar(k) => Box::new(scalar::invert(&scalar::compress(&k, args.tol)?, DEFAULT_ALPHA_TOL)?),
        Covariance::Blocks { diag, super_diag } => {
            let trans = block::transition_blocks(&diag, &super_diag, DEFAULT_PIVOT_TOL)?;
            Box::new(block::invert(&BlockGeneratorForm::new(diag, trans)?, DEFAULT_PIVOT_TOL)?.inverse)
        }
    };
    let est = blue_estimate(&model, &z, precision.as_ref())?;
    write_text(args.out.as_deref(), &to_json(&est))
}

fn dense_of(doc: Document) -> CliResult<DenseMatrix> {
    Ok(match doc {
        Document::Dense(m) => m,
        Document::ScalarGenerator(g) => scalar::expand(&g),
        Document::Band(g) => banded::expand(&g, DEFAULT_PIVOT_TOL)?,
        Document::Block(g) => block::expand(&g),
        other => return Err(CliError::Input(format!("cannot check a {} document", other.kind()))),
    })
}

fn cmd_check(args: &CheckArgs) -> CliResult<()> {
    let mat = dense_of(read_document(&args.input)?)?;
    let report = match (args.hint.m, args.hint.block_size) {
        (Some(m), None) => banded::connectivity_test(&mat, m, args.tol)?,
        (None, Some(b)) => block::markov_block_test(&mat, b, args.tol)?,
        _ => return Err(CliError::Input("check needs --m or --block-size".into())),
    };
    emit(&format!("{}\n", to_json(&report)))?;
    if report.holds {
        Ok(())
    } else {
        Err(structure_error(&report))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Invert(a) => cmd_invert(a),
        Command::Table1(a) => cmd_table1(a),
        Command::Opcount(a) => cmd_opcount(a),
        Command::Demo2d(a) => cmd_demo2d(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
