use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use opmoment::io::{self, InputError};
use opmoment::linalg::{DEFAULT_PSD_EPS, DEFAULT_RANK_TOL};
use opmoment::moment::{self, OperatorSequence, SampleScheme};
use opmoment::ovm::{self, moments};
use opmoment::pair;
use opmoment::recursive::{self, SolveOptions};
use opmoment::shift;
use opmoment::{gallery, Error, Verdict};

const EXIT_PASS: u8 = 0;
const EXIT_FAIL: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NO_RECURRENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "opmoment", version, about = "Operator moment problem checks and solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Output {
    /// Write the report here instead of stdout (atomically).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit the runtime section so the whole report is reproducible.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args, Clone)]
struct Sampling {
    /// Sampling scheme for the localized tests.
    #[arg(long, value_enum, default_value_t = Scheme::Canonical)]
    scheme: Scheme,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random samples (added to the canonical vectors, or alone for `random`).
    #[arg(long, default_value_t = 0)]
    samples: usize,
    /// Relative PSD tolerance.
    #[arg(long, default_value_t = DEFAULT_PSD_EPS)]
    eps: f64,
}

impl Sampling {
    fn scheme(&self) -> SampleScheme {
        match self.scheme {
            Scheme::Canonical => SampleScheme::CanonicalPolarized {
                extra_random: self.samples,
                seed: self.seed,
            },
            Scheme::Random => SampleScheme::SeededRandom {
                count: self.samples.max(1),
                seed: self.seed,
            },
        }
    }

    fn describe(&self) -> Value {
        json!({
            "scheme": match self.scheme { Scheme::Canonical => "canonical", Scheme::Random => "random" },
            "seed": self.seed,
            "samples": self.samples,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Canonical,
    Random,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Support {
    /// Hamburger: the real line.
    Real,
    /// Stieltjes: `[0, inf)`.
    Stieltjes,
    /// Hausdorff: `[-1, 1]`.
    Hausdorff,
}

#[derive(Subcommand)]
enum Command {
    /// Block and localized Hankel positivity of an operator sequence.
    Check {
        file: PathBuf,
        #[arg(long, default_value_t = 1)]
        order: usize,
        /// Support whose block test decides the exit code.
        #[arg(long, value_enum, default_value_t = Support::Real)]
        support: Support,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        output: Output,
    },
    /// Detect a linear recurrence and recover its atomic representing charge.
    Solve {
        file: PathBuf,
        /// Largest recurrence order tried (default N/2).
        #[arg(long)]
        rmax: Option<usize>,
        /// Relative residual accepted for the recurrence fit.
        #[arg(long, default_value_t = recursive::DEFAULT_RESIDUAL_TOL)]
        tol: f64,
        #[arg(long, default_value_t = recursive::DEFAULT_CHARGE_RESIDUAL_TOL)]
        charge_tol: f64,
        /// Also write the recovered measure as an AtomicOVM file.
        #[arg(long)]
        measure_out: Option<PathBuf>,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        output: Output,
    },
    /// Two-atomic measure for a pair (T_0, T_1).
    Pair {
        file: PathBuf,
        #[arg(long)]
        measure_out: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Subnormality and flatness checks for an operator weighted shift.
    Shift {
        file: PathBuf,
        #[arg(long, default_value_t = 2)]
        order: usize,
        /// Index k with A_k = A_{k+1}: runs the propagation checks.
        #[arg(long)]
        flat_at: Option<usize>,
        #[arg(long, default_value_t = shift::DEFAULT_FLAT_TOL)]
        flat_tol: f64,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        output: Output,
    },
    /// Moments, dilation and spectrality of an atomic measure.
    Ovm {
        file: PathBuf,
        /// Compute T_0 .. T_N.
        #[arg(long)]
        moments: Option<usize>,
        #[arg(long)]
        dilate: bool,
        #[arg(long)]
        spectral: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Write a built-in fixture as an input file.
    Fixture {
        #[arg(value_enum)]
        name: FixtureName,
        /// Section dimension (kimsey) or identity size (block-shift).
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Number of weights for shift fixtures.
        #[arg(long, default_value_t = 12)]
        count: usize,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        b: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        c: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureName {
    Bisgaard,
    Kimsey,
    BlockShift,
    Bergman,
    Flat,
    Decreasing,
}

/// Failure of a command before a verdict exists.
enum Failure {
    Input(String),
    Model(Error),
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        match e {
            InputError::Model(m) => Failure::Model(m),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

fn exit_code_for(e: &Error) -> u8 {
    use Error::*;
    match e {
        NoRecurrenceFound { .. } => EXIT_NO_RECURRENCE,
        NotMeasure { .. }
        | NotSemiSpectral { .. }
        | NonRealRoots { .. }
        | NonSimpleRoots { .. }
        | ReconstructionMismatch { .. }
        | CriteriaDisagreement(_)
        | ConditionDisagreement(_)
        | NotFlatAtK { .. }
        | NotFlatAtP { .. }
        | NotRepresenting { .. } => EXIT_FAIL,
        _ => EXIT_INPUT,
    }
}

struct Run {
    command: &'static str,
    input: Option<Vec<u8>>,
    parameters: Value,
    tolerances: Value,
}

#[derive(Serialize)]
struct Report<'a> {
    schema_version: &'static str,
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_sha256: Option<String>,
    parameters: &'a Value,
    tolerances: &'a Value,
    exit_code: u8,
    verdict: &'a Verdict,
    #[serde(skip_serializing_if = "Value::is_null")]
    outputs: &'a Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    runtime: Option<Value>,
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)
}

fn read_input(path: &Path) -> Result<(Vec<u8>, String), Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Failure::Input(format!("{} is not UTF-8", path.display())))?;
    Ok((bytes, text))
}

fn emit(run: &Run, output: &Output, verdict: &Verdict, outputs: &Value, exit_code: u8, started: Instant) -> u8 {
    let digest = run.input.as_ref().map(|b| hex::encode(Sha256::digest(b)));
    let report = Report {
        schema_version: io::SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: run.command,
        input_sha256: digest,
        parameters: &run.parameters,
        tolerances: &run.tolerances,
        exit_code,
        verdict,
        outputs,
        runtime: (!output.deterministic)
            .then(|| json!({ "elapsed_ms": started.elapsed().as_secs_f64() * 1e3 })),
    };
    let text = io::to_json(&report);
    match &output.out {
        Some(p) => {
            if let Err(e) = write_atomic(p, &text) {
                eprintln!("error: cannot write {}: {e}", p.display());
                return EXIT_INPUT;
            }
        }
        None => print!("{text}"),
    }
    exit_code
}

fn finish(
    run: Run,
    output: &Output,
    started: Instant,
    result: Result<(Verdict, Value), Failure>,
) -> u8 {
    match result {
        Ok((verdict, outputs)) => {
            let code = if verdict.passed { EXIT_PASS } else { EXIT_FAIL };
            emit(&run, output, &verdict, &outputs, code, started)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            let v = Verdict::new(run.command, false).note(msg);
            emit(&run, output, &v, &Value::Null, EXIT_INPUT, started)
        }
        Err(Failure::Model(e)) => {
            let code = exit_code_for(&e);
            if code == EXIT_INPUT {
                eprintln!("error: {e}");
            }
            let v = Verdict::new(run.command, false).note(e.to_string());
            emit(&run, output, &v, &Value::Null, code, started)
        }
    }
}

fn psd_verdict(name: &str, r: &opmoment::PsdReport) -> Verdict {
    Verdict::new(name, r.is_psd)
        .with_margin(r.min_eigenvalue)
        .with_tolerance(r.tolerance_used)
}

fn cmd_check(seq: &OperatorSequence, order: usize, support: Support, s: &Sampling) -> Result<(Verdict, Value), Failure> {
    let (seq, truncated) = seq.overflow_guard()?;
    let mut notes = Vec::new();
    if let Some(k) = truncated {
        notes.push(format!("sequence truncated before T_{k} by the overflow guard"));
    }
    let block = psd_verdict("hamburger", &moment::hamburger_check(&seq, order, s.eps)?);
    let local = moment::local_moment_check(&seq, &s.scheme(), order, s.eps)?;

    let mut support_checks = Vec::new();
    let feasible = seq.last_index() >= 2 * order + 1;
    if feasible {
        let st = moment::stieltjes_check(&seq, order, s.eps)?;
        support_checks.push(
            Verdict::new("stieltjes", st.is_psd())
                .with_margin(st.min_eigenvalue())
                .child_of(psd_verdict("hankel", &st.hankel))
                .child_of(psd_verdict("localizing", &st.localizing)),
        );
    }
    if seq.last_index() >= 2 * order + 2 {
        let hd = moment::hausdorff_check(&seq, order, s.eps)?;
        support_checks.push(
            Verdict::new("hausdorff", hd.is_psd())
                .with_margin(hd.min_eigenvalue())
                .child_of(psd_verdict("hankel", &hd.hankel))
                .child_of(psd_verdict("localizing", &hd.localizing)),
        );
    }
    let decisive = match support {
        Support::Real => None,
        Support::Stieltjes => Some("stieltjes"),
        Support::Hausdorff => Some("hausdorff"),
    };
    let mut children = vec![block, local];
    let mut info = Vec::new();
    for v in support_checks {
        if Some(v.check.as_str()) == decisive {
            children.push(v);
        } else {
            info.push(v);
        }
    }
    if let Some(name) = decisive {
        if !children.iter().any(|c| c.check == name) {
            return Err(Failure::Model(Error::InsufficientMoments {
                needed: 2 * order + if name == "hausdorff" { 2 } else { 1 },
                available: seq.last_index(),
            }));
        }
    }
    let mut verdict = Verdict::all_of("check", children).metric("order", order as f64);
    for n in notes {
        verdict = verdict.note(n);
    }
    if !info.is_empty() {
        let mut extra = Verdict::new("support_info", info.iter().all(|v| v.passed))
            .note("informational: does not affect the exit code");
        extra.children = info;
        // informational children are reported alongside, outside the decision
        return Ok((verdict, json!({ "support_info": extra })));
    }
    Ok((verdict, Value::Null))
}

trait ChildOf {
    fn child_of(self, c: Verdict) -> Self;
}

impl ChildOf for Verdict {
    fn child_of(mut self, c: Verdict) -> Self {
        self.children.push(c);
        self
    }
}

fn cmd_solve(
    seq: &OperatorSequence,
    rmax: Option<usize>,
    opts: &SolveOptions,
    s: &Sampling,
    measure_out: Option<&Path>,
) -> Result<(Verdict, Value), Failure> {
    let r_max = rmax.unwrap_or_else(|| recursive::default_r_max(seq));
    let sol = recursive::solve_recursive_with(seq, r_max, &s.scheme(), opts)?;
    let file = io::ovm_file(&sol.charge);
    if let Some(p) = measure_out {
        write_atomic(p, &io::to_json(&file)).map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display())))?;
    }
    let outputs = json!({
        "order": sol.fit.order,
        "polynomial": sol.fit.polynomial.coefficients,
        "fit_residual": sol.fit.residual,
        "atoms": sol.roots,
        "charge_residual": sol.charge_residual,
        "measure": file,
    });
    Ok((sol.is_moment_sequence, outputs))
}

fn cmd_pair(seq: &OperatorSequence, measure_out: Option<&Path>) -> Result<(Verdict, Value), Failure> {
    if seq.len() != 2 {
        return Err(Failure::Input(format!(
            "pair needs exactly two matrices (T_0, T_1), found {}",
            seq.len()
        )));
    }
    let sol = pair::solve_pair(seq.term(0), seq.term(1))?;
    let file = io::ovm_file(&sol.measure);
    if let Some(p) = measure_out {
        write_atomic(p, &io::to_json(&file)).map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display())))?;
    }
    let outputs = json!({
        "alpha": sol.bounds.alpha,
        "beta": sol.bounds.beta,
        "moment_residuals": sol.moment_residuals,
        "measure": file,
    });
    Ok((sol.verdict, outputs))
}

fn cmd_shift(
    w: &shift::WeightFamily,
    order: usize,
    flat_at: Option<usize>,
    flat_tol: f64,
    s: &Sampling,
) -> Result<(Verdict, Value), Failure> {
    let mut children = vec![shift::subnormality_check_with(w, order, &s.scheme(), s.eps)?];
    if let Some(k) = flat_at {
        children.push(shift::propagation_check(w, k, flat_tol)?);
        let sm = shift::shift_moments(w)?;
        let n_max = sm.last_index() - k;
        children.push(shift::flatness_identity_check(&sm, k, n_max)?);
    }
    Ok((
        Verdict::all_of("shift", children),
        json!({ "norm_bound": w.norm_bound(), "weights": w.len() }),
    ))
}

fn cmd_ovm(e: &ovm::AtomicOVM, count: Option<usize>, dilate: bool, spectral: bool) -> Result<(Verdict, Value), Failure> {
    let mut children = vec![ovm::is_measure(e)?];
    let mut outputs = serde_json::Map::new();
    if let Some(n) = count {
        let seq = moments(e, n)?;
        outputs.insert("moments".into(), serde_json::to_value(io::sequence_file(&seq)).unwrap());
    }
    if dilate {
        let d = ovm::naimark_dilate(e)?;
        let worst = d.max_residual();
        children.push(
            Verdict::new("dilation", worst <= ovm::DILATION_TOL)
                .with_margin(worst)
                .with_tolerance(ovm::DILATION_TOL),
        );
        outputs.insert("dilation_residuals".into(), json!(d.residuals));
        outputs.insert("dilated_dim".into(), json!(d.embedding.nrows()));
    }
    if spectral {
        children.push(ovm::is_spectral(e)?.verdict);
    }
    let outputs = if outputs.is_empty() { Value::Null } else { Value::Object(outputs) };
    Ok((Verdict::all_of("ovm", children), outputs))
}

fn cmd_fixture(name: FixtureName, dim: usize, count: usize, a: f64, b: f64, c: f64) -> Result<String, Failure> {
    Ok(match name {
        FixtureName::Bisgaard => io::to_json(&io::sequence_file(&gallery::bisgaard_sequence())),
        FixtureName::Kimsey => {
            let (t0, t1) = pair::kimsey_pair(dim.max(1));
            io::to_json(&io::matrices_file(&[t0, t1]))
        }
        FixtureName::BlockShift => io::to_json(&io::sequence_file(&gallery::block_shift_sequence(
            a,
            b,
            c,
            dim,
            gallery::BLOCK_SHIFT_TERMS,
        )?)),
        FixtureName::Bergman => io::to_json(&io::weights_file(&gallery::bergman_shift(count))),
        FixtureName::Flat => io::to_json(&io::weights_file(&gallery::flat_shift(count))),
        FixtureName::Decreasing => io::to_json(&io::weights_file(&gallery::decreasing_shift(count))),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let code = match cli.command {
        Command::Check { file, order, support, sampling, output } => {
            let loaded = read_input(&file);
            let mut run = Run {
                command: "check",
                input: None,
                parameters: json!({
                    "order": order,
                    "support": match support { Support::Real => "real", Support::Stieltjes => "stieltjes", Support::Hausdorff => "hausdorff" },
                    "sampling": sampling.describe(),
                }),
                tolerances: json!({ "eps": sampling.eps }),
            };
            let result = loaded.and_then(|(bytes, text)| {
                run.input = Some(bytes);
                let seq = io::parse_sequence(&text)?;
                cmd_check(&seq, order, support, &sampling)
            });
            finish(run, &output, started, result)
        }
        Command::Solve { file, rmax, tol, charge_tol, measure_out, sampling, output } => {
            let opts = SolveOptions { residual_tol: tol, charge_residual_tol: charge_tol, eps: sampling.eps };
            let mut run = Run {
                command: "solve",
                input: None,
                parameters: json!({ "rmax": rmax, "sampling": sampling.describe() }),
                tolerances: json!({
                    "residual_tol": tol,
                    "charge_residual_tol": charge_tol,
                    "eps": sampling.eps,
                    "root_real_tol": recursive::ROOT_REAL_TOL,
                }),
            };
            let result = read_input(&file).and_then(|(bytes, text)| {
                run.input = Some(bytes);
                let seq = io::parse_sequence(&text)?;
                cmd_solve(&seq, rmax, &opts, &sampling, measure_out.as_deref())
            });
            finish(run, &output, started, result)
        }
        Command::Pair { file, measure_out, output } => {
            let mut run = Run {
                command: "pair",
                input: None,
                parameters: Value::Object(Default::default()),
                tolerances: json!({
                    "rank_tol": DEFAULT_RANK_TOL,
                    "eps": DEFAULT_PSD_EPS,
                    "moment_tol": pair::PAIR_MOMENT_TOL,
                }),
            };
            let result = read_input(&file).and_then(|(bytes, text)| {
                run.input = Some(bytes);
                let seq = io::parse_sequence(&text)?;
                cmd_pair(&seq, measure_out.as_deref())
            });
            finish(run, &output, started, result)
        }
        Command::Shift { file, order, flat_at, flat_tol, sampling, output } => {
            let mut run = Run {
                command: "shift",
                input: None,
                parameters: json!({ "order": order, "flat_at": flat_at, "sampling": sampling.describe() }),
                tolerances: json!({
                    "eps": sampling.eps,
                    "flat_tol": flat_tol,
                    "report_tol": shift::REPORT_TOL,
                }),
            };
            let result = read_input(&file).and_then(|(bytes, text)| {
                run.input = Some(bytes);
                let w = io::parse_weights(&text)?;
                cmd_shift(&w, order, flat_at, flat_tol, &sampling)
            });
            finish(run, &output, started, result)
        }
        Command::Ovm { file, moments, dilate, spectral, output } => {
            let mut run = Run {
                command: "ovm",
                input: None,
                parameters: json!({ "moments": moments, "dilate": dilate, "spectral": spectral }),
                tolerances: json!({
                    "eps": DEFAULT_PSD_EPS,
                    "dilation_tol": ovm::DILATION_TOL,
                    "spectral_tol": ovm::SPECTRAL_TOL,
                    "semispectral_tol": ovm::SEMISPECTRAL_TOL,
                }),
            };
            let result = read_input(&file).and_then(|(bytes, text)| {
                run.input = Some(bytes);
                let e = io::parse_ovm(&text)?;
                cmd_ovm(&e, moments, dilate, spectral)
            });
            finish(run, &output, started, result)
        }
        Command::Fixture { name, dim, count, a, b, c, out } => match cmd_fixture(name, dim, count, a, b, c) {
            Ok(text) => match out {
                Some(p) => match write_atomic(&p, &text) {
                    Ok(()) => EXIT_PASS,
                    Err(e) => {
                        eprintln!("error: cannot write {}: {e}", p.display());
                        EXIT_INPUT
                    }
                },
                None => {
                    print!("{text}");
                    EXIT_PASS
                }
            },
            Err(Failure::Input(m)) => {
                eprintln!("error: {m}");
                EXIT_INPUT
            }
            Err(Failure::Model(e)) => {
                eprintln!("error: {e}");
                EXIT_INPUT
            }
        },
    };
    ExitCode::from(code)
}
