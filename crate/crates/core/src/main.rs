use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use effop::effective;
use effop::error::{Error, Result};
use effop::harness::generate::{self, Generated, ProblemKind, ProblemParams, ProblemSpec, RNG_ALGORITHM};
use effop::harness::io;
use effop::harness::report::{sha256_hex, Check, Report};
use effop::harness::verify::{self, VerifyConfig};
use effop::linalg::{self, CMatrix};
use effop::observables;
use effop::solver::{self, SolverConfig};
use effop::spaces::{self, ModelSpace, ObservableMatrix, DEFAULT_COND_CAP};
use effop::transform;

/// Effective operators on a model space via decoupling transformations.
#[derive(Parser, Debug)]
#[command(name = "effop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded test matrix (or family of matrices).
    Gen(GenArgs),
    /// Build s from selected eigenvectors and report the effective spectrum.
    SolveDirect(SolveDirectArgs),
    /// Solve the decoupling equation by fixed-point iteration.
    SolveIter(SolveIterArgs),
    /// Write the first- or second-type effective operator for a given s.
    Effective(EffectiveArgs),
    /// List legitimate model spaces for an eigenvector selection.
    Enumerate(EnumerateArgs),
    /// Split a commuting set over a partition of its shared eigenbasis.
    Decompose(DecomposeArgs),
    /// Run the invariant suite on a matrix.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// random_hermitian, planted_spectrum, tridiagonal_chain, commuting_family
    /// or gap_separated.
    #[arg(long)]
    kind: ProblemKind,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    seed: u64,
    /// Output file. Families write one file per member, numbered before the
    /// extension.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    coupling: Option<f64>,
    #[arg(long)]
    family_size: Option<usize>,
    /// Planted eigenvalues, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    spectrum: Option<Vec<f64>>,
    /// Number of low-lying basis states for gap_separated.
    #[arg(long)]
    model_dim: Option<usize>,
}

#[derive(Args, Debug)]
struct SolveDirectArgs {
    /// Matrix file, or an inline real matrix such as "0,1;1,0".
    #[arg(long)]
    matrix: String,
    /// 1-based eigenpair positions in the ascending spectrum.
    #[arg(long = "J")]
    j: String,
    /// 1-based model-space basis indices.
    #[arg(long = "K")]
    k: String,
    #[arg(long)]
    out_s: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_COND_CAP)]
    cond_cap: f64,
}

#[derive(Args, Debug)]
struct SolveIterArgs {
    #[arg(long)]
    matrix: String,
    #[arg(long = "K")]
    k: String,
    #[arg(long, default_value_t = 1e-11)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// s-matrix file to start from; zero otherwise.
    #[arg(long)]
    initial_s: Option<PathBuf>,
    #[arg(long)]
    out_s: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EffectiveArgs {
    #[arg(long)]
    matrix: String,
    /// s-matrix file.
    #[arg(long)]
    s: PathBuf,
    #[arg(long = "K")]
    k: String,
    /// Selection recorded in the output header.
    #[arg(long = "J")]
    j: Option<String>,
    #[arg(long)]
    second_type: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EnumerateArgs {
    #[arg(long)]
    matrix: String,
    #[arg(long = "J")]
    j: String,
    #[arg(long, default_value_t = DEFAULT_COND_CAP)]
    cond_cap: f64,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    /// Comma-separated matrix files forming a commuting set.
    #[arg(long, value_delimiter = ',')]
    set: Vec<String>,
    /// Lines of the form `block: J=1,2,3 K=1,2,3`.
    #[arg(long)]
    plan: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    matrix: String,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// A matrix argument with the bytes it was read from, for provenance.
struct Input {
    observable: ObservableMatrix,
    source: String,
    sha256: String,
}

/// Inline matrices use `;` between rows and `,` between real entries.
fn parse_inline(text: &str) -> Option<CMatrix> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|r| r.split(',').map(|x| x.trim().parse::<f64>().ok()).collect::<Option<Vec<_>>>())
        .collect::<Option<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return None;
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Some(linalg::real_matrix(n, n, &flat))
}

fn load_matrix(arg: &str) -> Result<Input> {
    let path = Path::new(arg);
    if path.is_file() {
        let bytes = fs::read(path)?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Error::Parse { line: 0, message: "file is not UTF-8".into() })?;
        let file = io::parse_matrix(&text, true)?;
        return Ok(Input {
            observable: ObservableMatrix::new(file.matrix)?,
            source: arg.to_string(),
            sha256: sha256_hex(&bytes),
        });
    }
    match parse_inline(arg) {
        Some(m) => Ok(Input {
            observable: ObservableMatrix::new(m)?,
            source: format!("inline:{arg}"),
            sha256: sha256_hex(arg.as_bytes()),
        }),
        None => Err(Error::InvalidConfig(format!(
            "{arg:?} is neither a readable file nor an inline real matrix"
        ))),
    }
}

fn provenance(report: &mut Report, command: &str, inputs: &[&Input]) {
    report.note("command", command);
    for input in inputs {
        report.note("input", &input.source);
        report.note("input_sha256", &input.sha256);
    }
}

fn fmt_complex(z: Complex64) -> String {
    format!("re={:?} im={:?}", z.re, z.im)
}

fn family_path(out: &Path, index: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("member");
    let name = match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}.{index}.{ext}"),
        None => format!("{stem}.{index}"),
    };
    out.with_file_name(name)
}

fn cmd_gen(a: GenArgs) -> Result<Report> {
    let spec = ProblemSpec::new(a.kind, a.dim, a.seed).with_params(ProblemParams {
        gap: a.gap,
        coupling: a.coupling,
        family_size: a.family_size,
        spectrum: a.spectrum,
        model_dim: a.model_dim,
    });
    let header = format!("generated kind={} dim={} seed={} rng={RNG_ALGORITHM}", a.kind, a.dim, a.seed);
    let mut report = Report::new();
    report.note("command", "gen");
    report.note("seed", a.seed);
    match generate::generate(&spec)? {
        Generated::Single { matrix, planted } => {
            let mut comments = vec![header];
            if let Some(p) = planted {
                comments.push(format!("planted={}", join_floats(&p)));
            }
            io::write_matrix(&a.out, matrix.matrix(), &comments)?;
            report.note("wrote", a.out.display());
        }
        Generated::Family { members, planted } => {
            for (i, (m, p)) in members.iter().zip(&planted).enumerate() {
                let path = family_path(&a.out, i + 1);
                let comments = vec![
                    format!("{header} member={}", i + 1),
                    format!("planted={}", join_floats(p)),
                ];
                io::write_matrix(&path, m.matrix(), &comments)?;
                report.note("wrote", path.display());
            }
        }
    }
    Ok(report)
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn model_space(n: usize, k: &str) -> Result<ModelSpace> {
    let labels = io::parse_labels(k)?;
    spaces::parse_index_set(&labels, n)?;
    ModelSpace::new(n, &labels)
}

fn cmd_solve_direct(a: SolveDirectArgs) -> Result<Report> {
    let input = load_matrix(&a.matrix)?;
    let o = &input.observable;
    let ms = model_space(o.dim(), &a.k)?;
    let labels = io::parse_labels(&a.j)?;
    let es = spaces::eigendecompose(o)?;
    let sel = spaces::select_eigenvectors(&es, &labels)?;
    if sel.dim() != ms.dim() {
        return Err(Error::DimensionMismatch(format!("|J| = {} but |K| = {}", sel.dim(), ms.dim())));
    }
    let dm = transform::construct_s_direct_with_cap(&sel, &ms, a.cond_cap)?;

    let mut report = Report::new();
    provenance(&mut report, "solve-direct", &[&input]);
    report.note("K", io::format_labels(&ms.labels()));
    report.note("J", io::format_labels(&labels));
    report.note("condition", format!("{:e}", spaces::projection_condition(&sel.vectors, &ms)));
    let eo = effective::first_type(o, &dm)?;
    let eigs = eo.eigenvalues()?;
    for (i, z) in eigs.iter().enumerate() {
        report.note(format!("eigenvalue.{}", i + 1), fmt_complex(*z));
    }
    report.push(Check::at_most(
        "decoupling_residual",
        eo.residual,
        transform::decoupling_tolerance(o),
    ));
    report.push(Check::at_most(
        "selected_eigenvalues",
        linalg::spectrum_mismatch(&eigs, &linalg::to_complex(&sel.values)),
        effective::SPECTRUM_MATCH_TOL,
    ));
    if let Some(path) = &a.out_s {
        io::write_decoupling_map(path, &dm)?;
        report.note("wrote", path.display());
    }
    Ok(report)
}

fn cmd_solve_iter(a: SolveIterArgs) -> Result<Report> {
    let input = load_matrix(&a.matrix)?;
    let o = &input.observable;
    let ms = model_space(o.dim(), &a.k)?;
    let initial_s = match &a.initial_s {
        Some(p) => Some(io::read_decoupling_map(p, Some(&ms))?.s().clone()),
        None => None,
    };
    let cfg = SolverConfig {
        tol: a.tol,
        max_iter: a.max_iter,
        initial_s,
        ..SolverConfig::default()
    };
    let mut report = Report::new();
    provenance(&mut report, "solve-iter", &[&input]);
    report.note("K", io::format_labels(&ms.labels()));
    report.note("tol", format!("{:e}", a.tol));
    report.note("max_iter", a.max_iter);

    let (dm, trace) = solver::solve_decoupling_fixed_point(o, &ms, &cfg)?;
    for r in &trace.records {
        report.note(
            format!("iteration.{}", r.iteration),
            format!("residual={:e} step={:e}", r.residual, r.step),
        );
    }
    let history = solver::residual_history(&trace);
    report.note("monotone_decreasing", history.monotone_decreasing);
    for i in 0..dm.s().nrows() {
        for j in 0..dm.s().ncols() {
            report.note(format!("s.{}.{}", i + 1, j + 1), fmt_complex(dm.s()[(i, j)]));
        }
    }
    let eo = effective::first_type(o, &dm)?;
    for (i, z) in eo.eigenvalues()?.iter().enumerate() {
        report.note(format!("eigenvalue.{}", i + 1), fmt_complex(*z));
    }
    report.push(Check::at_most(
        "decoupling_residual",
        eo.residual,
        transform::decoupling_tolerance(o),
    ));
    if let Some(path) = &a.out_s {
        io::write_decoupling_map(path, &dm)?;
        report.note("wrote", path.display());
    }
    Ok(report)
}

fn cmd_effective(a: EffectiveArgs) -> Result<Report> {
    let input = load_matrix(&a.matrix)?;
    let o = &input.observable;
    let ms = model_space(o.dim(), &a.k)?;
    let dm = io::read_decoupling_map(&a.s, Some(&ms))?;
    let j = a.j.as_deref().map(io::parse_labels).transpose()?;
    let residual = transform::decoupling_residual(o, &dm)?;

    let mut report = Report::new();
    provenance(&mut report, "effective", &[&input]);
    report.note("s", a.s.display());
    report.note("s_sha256", sha256_hex(&fs::read(&a.s)?));
    report.note("K", io::format_labels(&ms.labels()));
    let (kind, matrix) = if a.second_type {
        let ot = effective::second_type(o, &dm)?;
        report.push(Check::at_most(
            "hermiticity",
            ot.hermiticity_defect(),
            1e-12 * linalg::frobenius(&ot.matrix),
        ));
        ("second-type", ot.matrix)
    } else {
        let eo = effective::first_type(o, &dm)?;
        for (i, z) in eo.eigenvalues()?.iter().enumerate() {
            report.note(format!("eigenvalue.{}", i + 1), fmt_complex(*z));
        }
        report.push(Check::at_most(
            "decoupling_residual",
            eo.residual,
            transform::decoupling_tolerance(o),
        ));
        ("first-type", eo.matrix)
    };
    let header = io::effective_header(kind, &ms.labels(), j.as_deref(), residual);
    io::write_matrix(&a.out, &matrix, &header)?;
    report.note("wrote", a.out.display());
    Ok(report)
}

fn cmd_enumerate(a: EnumerateArgs) -> Result<Report> {
    let input = load_matrix(&a.matrix)?;
    let o = &input.observable;
    let labels = io::parse_labels(&a.j)?;
    let sel = spaces::select_eigenvectors(&spaces::eigendecompose(o)?, &labels)?;
    let found = spaces::enumerate_model_spaces(&sel, a.cond_cap)?;

    let mut report = Report::new();
    provenance(&mut report, "enumerate", &[&input]);
    report.note("J", io::format_labels(&labels));
    report.note("cond_cap", format!("{:e}", a.cond_cap));
    report.note("count", found.len());
    report.note("total", verify::binomial(o.dim(), sel.dim()));
    for (ms, cond) in &found {
        let sigma = spaces::projection_sigma_min(&sel.vectors, ms);
        report.note(
            "K",
            format!("{} cond={cond:e} sigma_min={sigma:e}", io::format_labels(&ms.labels())),
        );
    }
    Ok(report)
}

fn cmd_decompose(a: DecomposeArgs) -> Result<Report> {
    let inputs = a.set.iter().map(|p| load_matrix(p)).collect::<Result<Vec<_>>>()?;
    let plan = io::parse_plan(&fs::read_to_string(&a.plan)?)?;
    let cs = observables::verify_commuting(inputs.iter().map(|i| i.observable.clone()).collect())?;
    let n = cs.dim();
    let partition: Vec<Vec<usize>> = plan.iter().map(|b| b.j.clone()).collect();
    let spaces_r = plan
        .iter()
        .map(|b| model_space(n, &io::format_labels(&b.k)))
        .collect::<Result<Vec<_>>>()?;
    let dec = observables::decompose_space(&cs, &partition, &spaces_r)?;

    let mut report = Report::new();
    let refs: Vec<&Input> = inputs.iter().collect();
    provenance(&mut report, "decompose", &refs);
    report.note("plan", a.plan.display());
    report.note("plan_sha256", sha256_hex(&fs::read(&a.plan)?));
    report.note("complete", dec.basis.complete);
    for (r, block) in dec.blocks.iter().enumerate() {
        report.note(
            format!("block.{}", r + 1),
            format!(
                "J={} K={}",
                io::format_labels(&block.selection),
                io::format_labels(&block.map.model_space().labels())
            ),
        );
        for (sigma, m) in cs.members().iter().enumerate() {
            report.push(Check::at_most(
                format!("block{}.member{}.decoupling_residual", r + 1, sigma + 1),
                transform::decoupling_residual(m, &block.map)?,
                transform::decoupling_tolerance(m),
            ));
        }
    }
    for (sigma, mismatch) in dec.spectrum_mismatch.iter().enumerate() {
        report.push(Check::at_most(format!("member{}.spectrum_union", sigma + 1), *mismatch, 1e-9));
    }
    Ok(report)
}

fn cmd_verify(a: VerifyArgs) -> Result<Report> {
    let input = load_matrix(&a.matrix)?;
    let cfg = VerifyConfig {
        model_dim: a.d,
        trials: a.trials,
        seed: a.seed,
    };
    let mut report = verify::verify(&input.observable, &cfg)?;
    let mut head = Report::new();
    provenance(&mut head, "verify", &[&input]);
    head.provenance.append(&mut report.provenance);
    report.provenance = head.provenance;
    Ok(report)
}

/// Failing checks are numerical for the solving commands and validation
/// failures for `verify`.
fn failing_code(command: &Command) -> u8 {
    match command {
        Command::Verify(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let code = failing_code(&cli.command);
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::SolveDirect(a) => cmd_solve_direct(a),
        Command::SolveIter(a) => cmd_solve_iter(a),
        Command::Effective(a) => cmd_effective(a),
        Command::Enumerate(a) => cmd_enumerate(a),
        Command::Decompose(a) => cmd_decompose(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(report) => {
            let mut out = std::io::stdout().lock();
            let _ = write!(out, "{report}");
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                for c in report.failures() {
                    eprintln!("failed: {c}");
                }
                ExitCode::from(code)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
