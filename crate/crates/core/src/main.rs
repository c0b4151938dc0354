use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use lll_sampler::construct::{build_candidate, candidate_cases, CaseHint, ConstructionConfig};
use lll_sampler::counting::{approx_count, CountConfig};
use lll_sampler::dynamics::{Sampler, SamplerConfig};
use lll_sampler::formats::{build_coloring_csp, parse_hypergraph, read_dimacs};
use lll_sampler::instances::bundled;
use lll_sampler::lll::find_satisfying;
use lll_sampler::projection::{check_admissibility, AdmissibilityReport};
use lll_sampler::rng::entropy_seed;
use lll_sampler::verify::{verify_instance, VerifyConfig};
use lll_sampler::{chain_rng, AtomicCsp, CountError, ProjectionError, ProjectionScheme};

/// Stream reserved for the randomized scheme construction; sampling chains
/// use streams 0, 1, 2, ...
const CONSTRUCTION_STREAM: u64 = u64::MAX >> 1;

#[derive(Parser)]
#[command(name = "lll-sampler", version, about = "Sample and count solutions of atomic CSPs by projected Glauber dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find one satisfying assignment by resampling.
    Find(FindArgs),
    /// Draw near-uniform satisfying assignments.
    Sample(SampleArgs),
    /// Estimate the number of satisfying assignments.
    Count(CountArgs),
    /// Report whether a projection scheme is admissible.
    CheckProjection(CheckArgs),
    /// Compare the sampler with exact enumeration on small instances.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum Format {
    Cnf,
    Hypergraph,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum SchemeSource {
    /// Admissible construction if one exists, otherwise the first buildable
    /// candidate, otherwise the identity.
    Auto,
    /// Admissible construction or fail.
    Strict,
    Identity,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Instance file, or `-` for stdin.
    #[arg(long)]
    input: PathBuf,
    /// Defaults to `hypergraph` for .hyp/.hg files and `cnf` otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Number of colors for hypergraph input.
    #[arg(long)]
    q: Option<u32>,
}

#[derive(Args, Clone)]
struct SchemeArgs {
    #[arg(long, value_enum, default_value_t = SchemeSource::Auto)]
    scheme: SchemeSource,
    /// Load the scheme from JSON instead of constructing it.
    #[arg(long)]
    scheme_file: Option<PathBuf>,
    /// Restrict the construction to one case (1-5).
    #[arg(long)]
    case: Option<CaseHint>,
    #[arg(long, default_value_t = 0.25)]
    eta: f64,
    /// Failure probability of the randomized construction.
    #[arg(long, default_value_t = 0.01)]
    construct_delta: f64,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Seed for every random choice; generated and reported when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Indented JSON plus a human-readable summary on stderr.
    #[arg(long)]
    pretty: bool,
    /// Chain-length constant C_T.
    #[arg(long, env = "LLL_C_T", default_value_t = 1.0)]
    c_t: f64,
}

#[derive(Args)]
struct FindArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Independent chains; outputs are ordered by chain index.
    #[arg(long)]
    count: Option<u64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CountArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    /// Constant in the per-stage accuracy.
    #[arg(long, env = "LLL_COUNT_THETA", default_value_t = 0.125)]
    count_theta: f64,
    /// Per-stage sample constant c_N.
    #[arg(long, env = "LLL_COUNT_CN", default_value_t = 64.0)]
    count_cn: f64,
    /// Always sample, even when a pinned instance is small enough to enumerate.
    #[arg(long)]
    no_exact_fallback: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Instance to verify; the bundled instances when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    q: Option<u32>,
    /// Only this bundled instance.
    #[arg(long, conflicts_with = "input")]
    instance: Option<String>,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Full sampler draws for the uniformity check.
    #[arg(long, default_value_t = 20_000)]
    samples: u64,
    /// Draws per site for the conditional and lifting checks.
    #[arg(long, default_value_t = 100_000)]
    draws: u64,
    #[arg(long, default_value_t = 0.01)]
    tolerance: f64,
    /// approx_count runs per instance; zero skips the counting check.
    #[arg(long, default_value_t = 0)]
    count_trials: u64,
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Serialize)]
struct SchemeSpec {
    source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    case: Option<CaseHint>,
    construct_delta: f64,
}

#[derive(Serialize)]
struct Overrides {
    c_t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    count_theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    count_cn: Option<f64>,
}

/// Everything that determines a run besides the input file's contents.
#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<Format>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    scheme: Option<SchemeSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    count: Option<u64>,
    overrides: Overrides,
    version: &'static str,
}

impl RunManifest {
    fn new(command: &'static str, common: &CommonArgs, seed: u64) -> Self {
        Self {
            command,
            input: None,
            format: None,
            q: None,
            eps: None,
            delta: None,
            eta: None,
            seed,
            scheme: None,
            count: None,
            overrides: Overrides {
                c_t: common.c_t,
                count_theta: None,
                count_cn: None,
            },
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    fn with_input(mut self, input: &Path, format: Format, q: Option<u32>) -> Self {
        self.input = Some(input.display().to_string());
        self.format = Some(format);
        self.q = q.filter(|_| format == Format::Hypergraph);
        self
    }

    fn with_scheme(mut self, args: &SchemeArgs) -> Self {
        self.eta = Some(args.eta);
        self.scheme = Some(SchemeSpec {
            source: match (&args.scheme_file, args.scheme) {
                (Some(_), _) => "file".into(),
                (None, s) => format!("{s:?}").to_lowercase(),
            },
            file: args.scheme_file.as_ref().map(|p| p.display().to_string()),
            case: args.case,
            construct_delta: args.construct_delta,
        });
        self
    }
}

/// How a run ended when it did not succeed.
enum Failure {
    /// Bad flags, unreadable input, or an instance outside the supported regime.
    Usage(String),
    /// The algorithm itself reported an error; the JSON goes to stdout.
    Result(Value),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(Value, Vec<String>), Failure>;

fn resolve_format(input: &Path, format: Option<Format>) -> Format {
    format.unwrap_or_else(|| match input.extension().and_then(|e| e.to_str()) {
        Some("hyp" | "hg") => Format::Hypergraph,
        _ => Format::Cnf,
    })
}

fn read_text(path: &Path) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        std::io::read_to_string(std::io::stdin()).map_err(|e| Failure::Usage(format!("stdin: {e}")))
    } else {
        fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }
}

fn load_instance(path: &Path, format: Format, q: Option<u32>) -> Result<AtomicCsp, Failure> {
    let text = read_text(path)?;
    match format {
        Format::Cnf => {
            let inst = read_dimacs(text.as_bytes())?;
            for w in &inst.warnings {
                eprintln!("warning: {w}");
            }
            Ok(inst.csp)
        }
        Format::Hypergraph => {
            let q = q.ok_or_else(|| Failure::Usage("--q is required for hypergraph input".into()))?;
            Ok(build_coloring_csp(&parse_hypergraph(&text, None)?, q)?)
        }
    }
}

struct Resolved {
    scheme: ProjectionScheme,
    origin: &'static str,
    admissible: bool,
    report: Option<AdmissibilityReport>,
    note: Option<String>,
}

impl Resolved {
    fn describe(&self) -> Value {
        json!({
            "origin": self.origin,
            "case": self.scheme.case(),
            "kappa": self.scheme.kappa(),
            "eta": self.scheme.eta(),
            "admissible": self.admissible,
        })
    }
}

fn evaluate(csp: &AtomicCsp, scheme: ProjectionScheme, origin: &'static str, eta: f64) -> Resolved {
    match check_admissibility(csp, &scheme, eta) {
        Ok(report) => Resolved {
            admissible: report.admissible(),
            report: Some(report),
            scheme,
            origin,
            note: None,
        },
        Err(e) => Resolved {
            scheme,
            origin,
            admissible: false,
            report: None,
            note: Some(e.to_string()),
        },
    }
}

fn resolve_scheme(csp: &AtomicCsp, args: &SchemeArgs, seed: u64) -> Result<Resolved, Failure> {
    if !(args.eta > 0.0 && args.eta < 0.5) {
        return Err(Failure::Usage(format!("--eta must lie in (0, 1/2), got {}", args.eta)));
    }
    if let Some(path) = &args.scheme_file {
        let scheme: ProjectionScheme = serde_json::from_str(&read_text(path)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        scheme.check_matches(csp)?;
        return Ok(evaluate(csp, scheme, "file", args.eta));
    }
    if args.scheme == SchemeSource::Identity {
        return Ok(evaluate(csp, ProjectionScheme::identity(csp, args.eta), "identity", args.eta));
    }

    let cases = args.case.map_or_else(|| candidate_cases(csp), |c| vec![c]);
    let config = ConstructionConfig::default();
    let mut rng = chain_rng(seed, CONSTRUCTION_STREAM);
    let mut fallback: Option<Resolved> = None;
    let mut first_err: Option<ProjectionError> = None;
    for case in cases {
        match build_candidate(csp, case, args.eta, args.construct_delta, &config, &mut rng) {
            Ok(scheme) => {
                let resolved = evaluate(csp, scheme, "constructed", args.eta);
                if resolved.admissible {
                    return Ok(resolved);
                }
                if first_err.is_none() {
                    first_err = Some(match &resolved.report {
                        Some(report) => ProjectionError::NotAdmissible {
                            case: resolved.scheme.case().label().to_string(),
                            report: Box::new(report.clone()),
                        },
                        None => ProjectionError::Regime(resolved.note.clone().unwrap_or_default()),
                    });
                }
                fallback.get_or_insert(resolved);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let reason = first_err.map_or_else(|| "no construction applies".to_string(), |e| e.to_string());
    if args.scheme == SchemeSource::Strict {
        return Err(Failure::Usage(reason));
    }
    let mut resolved = fallback.unwrap_or_else(|| evaluate(csp, ProjectionScheme::identity(csp, args.eta), "identity", args.eta));
    resolved.origin = if resolved.origin == "constructed" { "candidate" } else { "identity-fallback" };
    eprintln!("warning: no admissible scheme ({reason}); using the {} scheme", resolved.origin);
    resolved.note.get_or_insert(reason);
    Ok(resolved)
}

fn check_unit_interval(name: &str, x: f64) -> Result<(), Failure> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--{name} must lie in (0, 1), got {x}")))
    }
}

fn run_find(args: &FindArgs, seed: u64) -> CmdResult {
    check_unit_interval("delta", args.delta)?;
    let format = resolve_format(&args.input.input, args.input.format);
    let csp = load_instance(&args.input.input, format, args.input.q)?;
    let mut manifest = RunManifest::new("find", &args.common, seed).with_input(&args.input.input, format, args.input.q);
    manifest.delta = Some(args.delta);
    match find_satisfying(&csp, args.delta, &mut chain_rng(seed, 0)) {
        Ok(out) => {
            let summary = vec![format!(
                "found a satisfying assignment after {} resamples in {} attempt(s)",
                out.resamples, out.attempts_used
            )];
            Ok((
                json!({
                    "assignment": out.values,
                    "resamples": out.resamples,
                    "attempts": out.attempts_used,
                    "manifest": manifest,
                }),
                summary,
            ))
        }
        Err(e) => Err(Failure::Result(json!({ "error": e.to_string(), "manifest": manifest }))),
    }
}

fn run_sample(args: &SampleArgs, seed: u64) -> CmdResult {
    check_unit_interval("eps", args.eps)?;
    let format = resolve_format(&args.input.input, args.input.format);
    let csp = load_instance(&args.input.input, format, args.input.q)?;
    let resolved = resolve_scheme(&csp, &args.scheme, seed)?;
    let mut manifest = RunManifest::new("sample", &args.common, seed)
        .with_input(&args.input.input, format, args.input.q)
        .with_scheme(&args.scheme);
    manifest.eps = Some(args.eps);
    manifest.count = args.count;

    let cfg = SamplerConfig::new(&csp, &resolved.scheme, args.eps, args.common.c_t);
    Sampler::new(&csp, &resolved.scheme, cfg)?;
    let chains = args.count.unwrap_or(1);
    let runs: Vec<_> = (0..chains)
        .into_par_iter()
        .map_init(
            || Sampler::new(&csp, &resolved.scheme, cfg).expect("validated above"),
            |sampler, j| sampler.sample(&mut chain_rng(seed, j)),
        )
        .collect();
    let errors = runs.iter().filter(|r| r.result.is_err()).count();
    let summary = vec![
        format!("{chains} chain(s) of {} steps, {errors} lift error(s)", cfg.steps),
        format!("scheme: {} ({}), admissible: {}", resolved.scheme.case().label(), resolved.origin, resolved.admissible),
    ];

    let entry = |run: &lll_sampler::dynamics::SampleRun| match &run.result {
        Ok(x) => json!({ "assignment": x, "diagnostics": run.diagnostics }),
        Err(e) => json!({ "error": e.to_string(), "diagnostics": run.diagnostics }),
    };
    let mut out = if args.count.is_none() {
        entry(&runs[0])
    } else {
        let samples: Vec<Value> = runs
            .iter()
            .enumerate()
            .map(|(j, run)| {
                let mut e = entry(run);
                e["chain"] = json!(j);
                e
            })
            .collect();
        json!({ "samples": samples, "errors": errors })
    };
    out["scheme"] = resolved.describe();
    out["manifest"] = serde_json::to_value(&manifest).expect("manifest serializes");
    if errors > 0 {
        Err(Failure::Result(out))
    } else {
        Ok((out, summary))
    }
}

fn run_count(args: &CountArgs, seed: u64) -> CmdResult {
    let format = resolve_format(&args.input.input, args.input.format);
    let csp = load_instance(&args.input.input, format, args.input.q)?;
    let resolved = resolve_scheme(&csp, &args.scheme, seed)?;
    let mut manifest = RunManifest::new("count", &args.common, seed)
        .with_input(&args.input.input, format, args.input.q)
        .with_scheme(&args.scheme);
    manifest.delta = Some(args.delta);
    manifest.overrides.count_theta = Some(args.count_theta);
    manifest.overrides.count_cn = Some(args.count_cn);

    let mut cfg = CountConfig::new(args.delta);
    cfg.c_t = args.common.c_t;
    cfg.theta = args.count_theta;
    cfg.c_n = args.count_cn;
    if args.no_exact_fallback {
        cfg.exact_fallback = None;
    }
    match approx_count(&csp, &resolved.scheme, &cfg, seed) {
        Ok(est) => {
            let summary = vec![format!(
                "estimate {:.6e} (ln {:.6}) over {} stages, {} samples per sampled stage",
                est.estimate,
                est.log_estimate,
                est.stages.len(),
                est.samples_per_stage
            )];
            let mut out = serde_json::to_value(&est).expect("estimate serializes");
            out["config"] = serde_json::to_value(cfg).expect("config serializes");
            out["scheme"] = resolved.describe();
            out["manifest"] = serde_json::to_value(&manifest).expect("manifest serializes");
            Ok((out, summary))
        }
        Err(CountError::Config(msg)) => Err(Failure::Usage(msg)),
        Err(CountError::Projection(e)) => Err(Failure::Usage(e.to_string())),
        Err(e) => Err(Failure::Result(json!({ "error": e.to_string(), "manifest": manifest }))),
    }
}

fn run_check(args: &CheckArgs, seed: u64) -> CmdResult {
    let format = resolve_format(&args.input.input, args.input.format);
    let csp = load_instance(&args.input.input, format, args.input.q)?;
    let resolved = resolve_scheme(&csp, &args.scheme, seed)?;
    let manifest = RunManifest::new("check-projection", &args.common, seed)
        .with_input(&args.input.input, format, args.input.q)
        .with_scheme(&args.scheme);
    let summary = vec![match &resolved.report {
        Some(r) => format!("{} ({}): {}", r.case.label(), resolved.origin, r.summary()),
        None => format!("not admissible: {}", resolved.note.clone().unwrap_or_default()),
    }];
    Ok((
        json!({
            "admissible": resolved.admissible,
            "origin": resolved.origin,
            "report": resolved.report,
            "note": resolved.note,
            "projection": resolved.scheme,
            "manifest": manifest,
        }),
        summary,
    ))
}

fn run_verify(args: &VerifyArgs, seed: u64) -> CmdResult {
    check_unit_interval("eps", args.eps)?;
    check_unit_interval("delta", args.delta)?;
    let cfg = VerifyConfig {
        eps: args.eps,
        c_t: args.common.c_t,
        samples: args.samples,
        step_draws: args.draws,
        lift_draws: args.draws,
        tolerance: args.tolerance,
        count_trials: args.count_trials,
        count_delta: args.delta,
        seed,
        ..VerifyConfig::default()
    };
    let mut manifest = RunManifest::new("verify", &args.common, seed);
    manifest.eps = Some(args.eps);
    manifest.delta = Some(args.delta);

    let targets: Vec<(String, AtomicCsp, ProjectionScheme)> = match &args.input {
        Some(path) => {
            let format = resolve_format(path, args.format);
            let csp = load_instance(path, format, args.q)?;
            let resolved = resolve_scheme(&csp, &args.scheme, seed)?;
            manifest = manifest.with_input(path, format, args.q).with_scheme(&args.scheme);
            vec![(path.display().to_string(), csp, resolved.scheme)]
        }
        None => {
            let all = bundled();
            let picked: Vec<_> = all
                .into_iter()
                .filter(|i| args.instance.as_deref().is_none_or(|n| n == i.name))
                .map(|i| (i.name.to_string(), i.csp, i.scheme))
                .collect();
            if picked.is_empty() {
                let names: Vec<_> = bundled().iter().map(|i| i.name).collect();
                return Err(Failure::Usage(format!("unknown instance; bundled: {}", names.join(", "))));
            }
            picked
        }
    };

    let mut reports = Vec::with_capacity(targets.len());
    let mut summary = Vec::new();
    for (name, csp, scheme) in &targets {
        let report = verify_instance(name, csp, scheme, &cfg)?;
        summary.push(format!(
            "{}: {} (uniformity tv {:.4}, conditional tv {:.4}, lift tv {:.4})",
            name,
            if report.pass { "pass" } else { "FAIL" },
            report.uniformity.tv,
            report.conditionals.max_tv,
            report.lifts.max_tv
        ));
        reports.push(report);
    }
    let pass = reports.iter().all(|r| r.pass);
    let out = json!({ "pass": pass, "instances": reports, "config": cfg, "manifest": manifest });
    if pass {
        Ok((out, summary))
    } else {
        Err(Failure::Result(out))
    }
}

fn print_json(value: &Value, pretty: bool) {
    let text = if pretty {
        serde_json::to_string_pretty(value)
    } else {
        serde_json::to_string(value)
    };
    let mut out = std::io::stdout().lock();
    // a closed pipe downstream is not our failure
    let _ = writeln!(out, "{}", text.expect("JSON values serialize"));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Find(a) => &a.common,
        Command::Sample(a) => &a.common,
        Command::Count(a) => &a.common,
        Command::CheckProjection(a) => &a.common,
        Command::Verify(a) => &a.common,
    };
    let pretty = common.pretty;
    let seed = common.seed.unwrap_or_else(entropy_seed);
    let outcome = match &cli.command {
        Command::Find(a) => run_find(a, seed),
        Command::Sample(a) => run_sample(a, seed),
        Command::Count(a) => run_count(a, seed),
        Command::CheckProjection(a) => run_check(a, seed),
        Command::Verify(a) => run_verify(a, seed),
    };
    match outcome {
        Ok((value, summary)) => {
            print_json(&value, pretty);
            if pretty {
                for line in summary {
                    eprintln!("{line}");
                }
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Result(value)) => {
            print_json(&value, pretty);
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
