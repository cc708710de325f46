use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use dmf_core::verify::RNG_NAME;
use dmf_core::*;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "dmf", version, about = "Critical points of regularized deep matrix factorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Serialize)]
struct ProblemArgs {
    /// Problem JSON: {"dims": [...], "lambdas": [...], "Y": {"dense": [[...]]} | {"singular_values": [...]}}
    #[arg(long)]
    problem: PathBuf,
    /// Relative tolerance for grouping equal singular values.
    #[arg(long, default_value_t = 1e-9)]
    group_tol: f64,
    /// Relative band around y* treated as the double-root case.
    #[arg(long, default_value_t = 1e-9)]
    eq_tol: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
enum DressingKind {
    Canonical,
    Random,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Positive roots of the scalar equation for one y, or a CSV sweep over y.
    AnalyzeRoots {
        #[arg(long)]
        y: Option<f64>,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 1e-9)]
        eq_tol: f64,
        /// Sweep `start:end:count` (CSV output).
        #[arg(long)]
        sweep: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Builds the weights of a critical point from a spec.
    Construct {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        spec: PathBuf,
        /// Entry of a spec family file.
        #[arg(long)]
        index: Option<usize>,
        #[arg(long, value_enum, default_value_t = DressingKind::Canonical)]
        dressing: DressingKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "F")]
        coord: Objective,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Lists the critical-point specs of a problem.
    Enumerate {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 200_000)]
        max_specs: usize,
        #[arg(long)]
        max_support: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Classifies a spec and reports its descent certificate.
    Classify {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        index: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "F")]
        coord: Objective,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compares lambda with the critical weight of every singular value.
    CheckLambda {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Enumerates, constructs, classifies and probes every spec (CSV).
    Atlas {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        probe_n: usize,
        #[arg(long, default_value_t = 200_000)]
        max_specs: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Classifies a numerical point (F coordinates).
    Verify {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        stack: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        grad_tol: f64,
        #[arg(long, default_value_t = 1e-4)]
        sigma_tol: f64,
        #[arg(long, default_value_t = 200)]
        probe_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Gradient descent on F from a seeded random start or a given stack.
    Train {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 200_000)]
        iters: usize,
        /// Stop at `||grad F|| <= grad_tol (1 + ||Y||_F)`.
        #[arg(long, default_value_t = 1e-6)]
        grad_tol: f64,
        #[arg(long, default_value_t = 0.2)]
        init_scale: f64,
        #[arg(long, default_value_t = 1000)]
        record_every: usize,
        #[arg(long)]
        no_halving: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Extremes of the Hessian quadratic form over random unit directions.
    Probe {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        stack: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the coordinates recorded in the stack file.
        #[arg(long)]
        objective: Option<Objective>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Loss on a 2-D slice through a reference point (CSV).
    Landscape {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Half-width of the square slice.
        #[arg(long, default_value_t = 1.0)]
        range: f64,
        #[arg(long, default_value_t = 201)]
        res: usize,
        #[arg(long)]
        objective: Option<Objective>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Exit code 1: validation and domain errors. Exit code 2: I/O and malformed input.
#[derive(Debug)]
enum CliError {
    Domain(String),
    Io(String),
}

impl From<DmfError> for CliError {
    fn from(e: DmfError) -> Self {
        CliError::Domain(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn config(cli: &Cli, seed: Option<u64>) -> Value {
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    json!({
        "args": serde_json::to_value(&cli.command).unwrap_or(Value::Null),
        "seed": seed,
        "rng": RNG_NAME,
        "timestamp_unix": ts,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: malformed JSON: {e}", path.display())))
}

fn from_value<T: serde::de::DeserializeOwned>(v: Value, path: &Path, what: &str) -> CliResult<T> {
    serde_json::from_value(v).map_err(|e| CliError::Domain(format!("{}: invalid {what}: {e}", path.display())))
}

fn load_landscape(args: &ProblemArgs) -> CliResult<Landscape> {
    let mut v = read_json(&args.problem)?;
    if let Some(inner) = v.get_mut("problem") {
        v = inner.take();
    }
    let file: ProblemFile = from_value(v, &args.problem, "problem")?;
    let problem = file.into_problem()?;
    let tol = Tolerances {
        group_tol: args.group_tol,
        eq_tol: args.eq_tol,
        ..Tolerances::default()
    };
    Ok(Landscape::new(problem, tol)?)
}

/// Accepts a bare spec, `{"spec": ...}`, or a family (`{"specs": [...]}` or
/// `{"family": {"specs": [...]}}`) together with `index`.
fn load_spec(path: &Path, index: Option<usize>) -> CliResult<CriticalSpec> {
    let mut v = read_json(path)?;
    if let Some(inner) = v.get_mut("family") {
        v = inner.take();
    }
    if let Some(inner) = v.get_mut("spec") {
        return from_value(inner.take(), path, "spec");
    }
    if let Some(specs) = v.get_mut("specs") {
        let mut list: Vec<CriticalSpec> = from_value(specs.take(), path, "spec list")?;
        let i = index.ok_or_else(|| CliError::Domain(format!("{}: spec family needs --index", path.display())))?;
        if i >= list.len() {
            return Err(CliError::Domain(format!("--index {i} out of range ({} specs)", list.len())));
        }
        return Ok(list.swap_remove(i));
    }
    from_value(v, path, "spec")
}

fn matrices_json(w: &FactorStack) -> Value {
    let mats: Vec<Vec<Vec<f64>>> = w
        .layers
        .iter()
        .map(|m| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
        .collect();
    json!(mats)
}

/// Accepts `{"matrices": [...], "coord": ...}` or a bare list of row-major matrices.
fn load_stack(path: &Path, problem: &ProblemSpec) -> CliResult<(FactorStack, Option<Objective>)> {
    let mut v = read_json(path)?;
    let mut coord = None;
    if v.is_object() {
        if let Some(c) = v.get_mut("coord") {
            coord = Some(from_value::<Objective>(c.take(), path, "coord")?);
        }
        v = v
            .get_mut("matrices")
            .map(Value::take)
            .ok_or_else(|| CliError::Domain(format!("{}: missing \"matrices\"", path.display())))?;
    }
    let mats: Vec<Vec<Vec<f64>>> = from_value(v, path, "matrix list")?;
    let mut layers = Vec::with_capacity(mats.len());
    for (l, rows) in mats.into_iter().enumerate() {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(CliError::Domain(format!("{}: matrix {l} has ragged rows", path.display())));
        }
        layers.push(DMatrix::from_fn(r, c, |i, j| rows[i][j]));
    }
    let w = FactorStack::new(layers);
    w.check_shapes(problem)?;
    Ok((w, coord))
}

fn write_out(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))
        }
        Some(p) => {
            let dir = match p.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
            tmp.write_all(text.as_bytes()).map_err(io)?;
            tmp.persist(p).map_err(|e| io(e.error))?;
            Ok(())
        }
    }
}

fn write_json(path: Option<&Path>, v: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_out(path, &text)
}

fn csv_header(cfg: &Value) -> String {
    format!("# dmf {}\n# config: {}\n", env!("CARGO_PKG_VERSION"), cfg)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

fn parse_sweep(s: &str) -> CliResult<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Domain(format!("--sweep expects start:end:count, got {s:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].parse().map_err(|_| bad())?;
    let b: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n < 1 || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    Ok((a, b, n))
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::AnalyzeRoots { y, lambda, depth, eq_tol, sweep, output } => {
            if !(*lambda > 0.0 && lambda.is_finite()) {
                return Err(CliError::Domain(format!("lambda must be positive, got {lambda}")));
            }
            let cfg = config(cli, None);
            if let Some(s) = sweep {
                let (a, b, n) = parse_sweep(s)?;
                let mut text = csv_header(&cfg);
                text.push_str("y,kind,x_bar,x_underbar,x_hat\n");
                for k in 0..n {
                    let yk = if n == 1 { a } else { a + (b - a) * k as f64 / (n - 1) as f64 };
                    let p = root_profile(yk, *lambda, *depth, *eq_tol, 0.0)?;
                    let (kind, xb, xu, xh) = match p.root {
                        RootKind::NoPositive => ("none", None, None, None),
                        RootKind::UniquePositive { x_hat } => ("unique", None, None, Some(x_hat)),
                        RootKind::TwoPositive { x_bar, x_underbar } => ("two", Some(x_bar), Some(x_underbar), None),
                    };
                    let _ = writeln!(text, "{yk:.16e},{kind},{},{},{}", fmt_opt(xb), fmt_opt(xu), fmt_opt(xh));
                }
                return write_out(output.as_deref(), &text);
            }
            let y = y.ok_or_else(|| CliError::Domain("either --y or --sweep is required".into()))?;
            let mut out = json!({ "config": cfg, "y": y, "lambda": lambda, "depth": depth });
            if *depth >= 3 {
                let p = root_profile(y, *lambda, *depth, *eq_tol, 0.0)?;
                out["thresholds"] = json!(p.thresholds);
                out["root"] = json!(p.root);
                out["labelled_roots"] = json!(p.labelled_roots());
            } else {
                out["roots"] = json!(positive_roots(y, *lambda, *depth, *eq_tol)?);
            }
            out["argmin_g"] = json!(scalar_argmin_g(y, *lambda, *depth, *eq_tol, 1e-9)?);
            write_json(output.as_deref(), &out)
        }
        Command::Construct { problem, spec, index, dressing, seed, coord, output } => {
            let land = load_landscape(problem)?;
            let spec = load_spec(spec, *index)?;
            validate_spec(&land, &spec).map_err(|e| CliError::Domain(e.to_string()))?;
            let d = match dressing {
                DressingKind::Canonical => canonical_dressing(&land),
                DressingKind::Random => random_dressing(&land, *seed),
            };
            let w = construct(&land, &spec, &d, *coord)?;
            let grad = gradient(&land.problem, &w, *coord)?.norm();
            let out = json!({
                "config": config(cli, Some(*seed)),
                "coord": coord,
                "spec": spec,
                "loss": loss(&land.problem, &w, *coord)?,
                "grad_norm": grad,
                "matrices": matrices_json(&w),
            });
            write_json(output.as_deref(), &out)
        }
        Command::Enumerate { problem, max_specs, max_support, output } => {
            let land = load_landscape(problem)?;
            let fam = enumerate_specs(&land, Caps { max_specs: *max_specs, max_support: *max_support })?;
            if !fam.complete {
                eprintln!("warning: enumeration truncated at {} specs", fam.specs.len());
            }
            let out = json!({ "config": config(cli, None), "count": fam.specs.len(), "family": fam });
            write_json(output.as_deref(), &out)
        }
        Command::Classify { problem, spec, index, seed, coord, output } => {
            let land = load_landscape(problem)?;
            let spec = load_spec(spec, *index)?;
            let c = classify(&land, &spec)?;
            let d = random_dressing(&land, *seed);
            let mut certs = Vec::new();
            if let Some(cert) = certificate_for(&land, &spec, &d, *coord)? {
                let w = construct(&land, &spec, &d, *coord)?;
                certs.push(json!({
                    "kind": cert.kind,
                    "expected_quadform": cert.expected_quadform,
                    "exact_quadform": hessian_quadform(&land.problem, &w, &cert.direction, *coord)?,
                    "expected_cubic": cert.expected_cubic,
                    "slots": cert.slots,
                }));
            }
            let expected = certs.first().map(|c| c["expected_quadform"].clone()).unwrap_or(Value::Null);
            let out = json!({
                "config": config(cli, Some(*seed)),
                "spec": spec,
                "class": c.class,
                "clause": c.clause,
                "index": c.index,
                "detail": c.detail,
                "certificates": certs,
                "expected_quadform": expected,
            });
            write_json(output.as_deref(), &out)
        }
        Command::CheckLambda { problem, output } => {
            let land = load_landscape(problem)?;
            let rep = check_partially_benign(&land, problem.eq_tol)?;
            write_json(output.as_deref(), &json!({ "config": config(cli, None), "report": rep }))
        }
        Command::Atlas { problem, seed, probe_n, max_specs, output } => {
            let land = load_landscape(problem)?;
            let fam = enumerate_specs(&land, Caps { max_specs: *max_specs, max_support: None })?;
            let d = random_dressing(&land, *seed);
            let mut text = csv_header(&config(cli, Some(*seed)));
            if !fam.complete {
                text.push_str("# truncated enumeration\n");
            }
            text.push_str("spec_id,r_sigma,class,clause,loss_F,min_probe\n");
            for (k, spec) in fam.specs.iter().enumerate() {
                let c = classify(&land, spec)?;
                let w = construct(&land, spec, &d, Objective::F)?;
                let cert = certificate_for(&land, spec, &d, Objective::F)?;
                let probe = probe_min_quadform(&land.problem, &w, Objective::F, *probe_n, seed.wrapping_add(k as u64), cert.as_ref())?;
                let _ = writeln!(
                    text,
                    "{k},{},{},{:?},{:.16e},{:.16e}",
                    spec.support(),
                    c.class.name(),
                    c.clause,
                    loss_f(&land.problem, &w)?,
                    probe.min_quadform
                );
            }
            write_out(output.as_deref(), &text)
        }
        Command::Verify { problem, stack, grad_tol, sigma_tol, probe_n, seed, output } => {
            let land = load_landscape(problem)?;
            let (w, coord) = load_stack(stack, &land.problem)?;
            let w = match coord {
                Some(Objective::G) => rescale_g_to_f(&w, land.problem.lambdas())?,
                _ => w,
            };
            let tols = NumericTols {
                grad_tol: *grad_tol,
                sigma_tol: *sigma_tol,
                probe_n: *probe_n,
                probe_seed: *seed,
                ..NumericTols::default()
            };
            let c = classify_numerically(&land, &w, &tols)?;
            write_json(output.as_deref(), &json!({ "config": config(cli, Some(*seed)), "classification": c }))
        }
        Command::Train { problem, seed, init, step, iters, grad_tol, init_scale, record_every, no_halving, output } => {
            let land = load_landscape(problem)?;
            let start = match init {
                Some(p) => {
                    let (w, coord) = load_stack(p, &land.problem)?;
                    Init::Stack(match coord {
                        Some(Objective::G) => rescale_g_to_f(&w, land.problem.lambdas())?,
                        _ => w,
                    })
                }
                None => Init::Seed(*seed),
            };
            let cfg = GdConfig {
                step: *step,
                max_iter: *iters,
                grad_tol: *grad_tol,
                halving: !no_halving,
                record_every: *record_every,
                init_scale: *init_scale,
            };
            let r = gradient_descent(&land, start, &cfg, &NumericTols::default())?;
            if !r.converged {
                eprintln!("warning: not converged after {} iterations (grad {:e})", r.iterations, r.grad_norm);
            }
            let matrices = r.point.as_ref().map(matrices_json).unwrap_or(Value::Null);
            let out = json!({
                "config": config(cli, Some(*seed)),
                "coord": Objective::F,
                "result": r,
                "matrices": matrices,
            });
            write_json(output.as_deref(), &out)
        }
        Command::Probe { problem, stack, n, seed, objective, output } => {
            let land = load_landscape(problem)?;
            let (w, coord) = load_stack(stack, &land.problem)?;
            let obj = objective.or(coord).unwrap_or(Objective::F);
            let w = convert(&land, w, coord.unwrap_or(obj), obj)?;
            let r = probe_min_quadform(&land.problem, &w, obj, *n, *seed, None)?;
            write_json(output.as_deref(), &json!({ "config": config(cli, Some(*seed)), "probe": r }))
        }
        Command::Landscape { problem, reference, seed, range, res, objective, output } => {
            let land = load_landscape(problem)?;
            let (w, coord) = load_stack(reference, &land.problem)?;
            let obj = objective.or(coord).unwrap_or(Objective::F);
            let w = convert(&land, w, coord.unwrap_or(obj), obj)?;
            let cfg = SliceConfig { seed: *seed, half_range: *range, resolution: *res, objective: obj };
            let g = landscape_slice(&land.problem, &w, &cfg)?;
            let mut text = csv_header(&config(cli, Some(*seed)));
            let _ = writeln!(text, "# reference loss: {:.16e}", g.reference);
            text.push_str("alpha,beta,value\n");
            for (i, a) in g.alphas.iter().enumerate() {
                for (j, b) in g.betas.iter().enumerate() {
                    let _ = writeln!(text, "{a:.16e},{b:.16e},{:.16e}", g.values[i][j]);
                }
            }
            write_out(output.as_deref(), &text)
        }
    }
}

fn convert(land: &Landscape, w: FactorStack, from: Objective, to: Objective) -> CliResult<FactorStack> {
    Ok(match (from, to) {
        (Objective::F, Objective::G) => rescale_f_to_g(&w, land.problem.lambdas())?,
        (Objective::G, Objective::F) => rescale_g_to_f(&w, land.problem.lambdas())?,
        _ => w,
    })
}
