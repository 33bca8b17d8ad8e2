use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use minnorm::certificates::{appendix_lower_bound, certify, AppendixParams, CertifyOptions};
use minnorm::complexity::{bound_report, ReportOptions};
use minnorm::covariance::CovarianceSpec;
use minnorm::experiments::{
    generate_instance, lower_bound_experiment, run_sweep, verify_bound, LowerBoundStructure, NoiseSpec, NormSpec,
    SignalSpec, SignalTemplate, SweepPlan,
};
use minnorm::rng::stream;
use minnorm::solvers::{solve_min_norm, solve_rerm, ProblemInstance, SolverConfig};
use minnorm::{Error, Matrix, NormFamily};

#[derive(Parser, Debug)]
#[command(name = "minnorm", version, about = "Minimum-norm interpolation and RERM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Plan file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "minnorm-out")]
    out: PathBuf,
    /// Overrides the seed in the plan file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Fit one estimator.
    Solve,
    /// Run a Monte Carlo sweep.
    Sweep,
    /// Primal/dual certificate for the interpolated noise.
    Certify,
    /// Complexity parameters and appendix bounds for one configuration.
    Bounds,
    /// Two-point lower-bound experiment.
    LowerBound,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateSpec {
    n: usize,
    p: usize,
    #[serde(default)]
    covariance: CovarianceSpec,
    signal: SignalSpec,
    noise: NoiseSpec,
    #[serde(default)]
    seed: u64,
}

/// Explicit data or a generated instance.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceConfig {
    design: Option<Vec<Vec<f64>>>,
    responses: Option<Vec<f64>>,
    noise: Option<Vec<f64>>,
    generate: Option<GenerateSpec>,
}

impl InstanceConfig {
    fn build(&self, seed: Option<u64>) -> minnorm::Result<ProblemInstance<f64>> {
        match (&self.design, &self.generate) {
            (Some(rows), None) => {
                let n = rows.len();
                let p = rows.first().map_or(0, Vec::len);
                if n == 0 || p == 0 || rows.iter().any(|r| r.len() != p) {
                    return Err(Error::InvalidArgument("design must be a nonempty list of equal-length rows".into()));
                }
                let x = Matrix::from_vec(n, p, rows.concat())?;
                match (&self.responses, &self.noise) {
                    (Some(y), noise) => {
                        let inst = ProblemInstance::new(x, y.clone())?;
                        match noise {
                            Some(xi) => inst.with_noise(xi.clone()),
                            None => Ok(inst),
                        }
                    }
                    (None, Some(xi)) => ProblemInstance::noise_only(x, xi.clone()),
                    (None, None) => Err(Error::InvalidArgument("instance needs responses or noise".into())),
                }
            }
            (None, Some(g)) => {
                if self.responses.is_some() || self.noise.is_some() {
                    return Err(Error::InvalidArgument("generated instances take no responses or noise".into()));
                }
                generate_instance(g.n, g.p, &g.covariance, &g.signal, &g.noise, seed.unwrap_or(g.seed))
            }
            _ => Err(Error::InvalidArgument("instance needs exactly one of design or generate".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum EstimatorChoice {
    MinNorm,
    Rerm { lambda: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveConfig {
    norm: NormFamily,
    #[serde(default = "min_norm")]
    estimator: EstimatorChoice,
    instance: InstanceConfig,
    #[serde(default)]
    solver: SolverConfig<f64>,
}

fn min_norm() -> EstimatorChoice {
    EstimatorChoice::MinNorm
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertifyConfig {
    norm: NormFamily,
    instance: InstanceConfig,
    #[serde(default)]
    certify: CertifyOptions,
    #[serde(default)]
    solver: SolverConfig<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsConfig {
    n: usize,
    p: usize,
    norm: NormSpec,
    #[serde(default)]
    s: usize,
    #[serde(default)]
    covariance: CovarianceSpec,
    #[serde(default)]
    signal: SignalTemplate,
    #[serde(default)]
    report: ReportOptions,
    #[serde(default)]
    appendix: AppendixParams,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LowerBoundConfig {
    epsilon: f64,
    n: usize,
    trials: usize,
    #[serde(default)]
    seed: u64,
    structure: LowerBoundStructure,
}

/// Failure with its exit code and a machine-readable record.
#[derive(Debug, Serialize)]
struct Failure {
    #[serde(skip)]
    code: u8,
    kind: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    column: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<serde_json::Value>,
}

impl Failure {
    fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Self { code, kind, message: message.into(), file: None, line: None, column: None, field: None, diagnostics: None }
    }

    fn config(e: impl std::fmt::Display) -> Self {
        Self::new(2, "config", e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Self::new(1, "runtime", e.to_string())
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.chars().count(), |i| before[i + 1..].chars().count()) + 1;
    (line, col)
}

fn backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

fn load<T: DeserializeOwned>(path: Option<&Path>) -> Result<T, Failure> {
    let path = path.ok_or_else(|| Failure::config("--config is required"))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure { file: Some(path.display().to_string()), ..Failure::config(format!("cannot read config: {e}")) })?;
    toml::from_str(&text).map_err(|e| {
        let (line, column) = match e.span() {
            Some(span) => {
                let (l, c) = line_col(&text, span.start);
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        Failure {
            file: Some(path.display().to_string()),
            line,
            column,
            field: backticked(e.message()),
            ..Failure::config(e.message().trim())
        }
    })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir).map_err(Failure::runtime)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::runtime)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(Failure::runtime)?;
    Ok(path)
}

/// Compact display: rounds away solver noise below 1e-9.
fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v
        .iter()
        .map(|x| {
            let r: f64 = format!("{x:.9}").parse().unwrap_or(*x);
            format!("{}", r + 0.0)
        })
        .collect();
    format!("({})", parts.join(", "))
}

struct Ctx {
    cli: Cli,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.cli.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn config(&self) -> Option<&Path> {
        self.cli.config.as_deref()
    }
}

fn solve(ctx: &Ctx) -> Result<(), Failure> {
    let cfg: SolveConfig = load(ctx.config())?;
    let inst = cfg.instance.build(ctx.cli.seed).map_err(Failure::config)?;
    cfg.solver.validate().map_err(Failure::config)?;
    cfg.norm.check_dim(inst.p()).map_err(Failure::config)?;
    let result = match cfg.estimator {
        EstimatorChoice::MinNorm => solve_min_norm(&inst, &cfg.norm, &cfg.solver),
        EstimatorChoice::Rerm { lambda } => solve_rerm(&inst, &cfg.norm, lambda, &cfg.solver),
    }
    .map_err(Failure::runtime)?;
    let path = write_json(&ctx.cli.out, "solution.json", &result)?;
    if !result.converged {
        let mut f = Failure::new(3, "non_convergence", "solver did not reach the requested tolerance");
        f.diagnostics = Some(serde_json::json!({
            "iterations": result.iterations,
            "constraint_residual": result.constraint_residual,
            "objective": result.objective,
            "solution": path,
        }));
        return Err(f);
    }
    ctx.say(format!("ĥ = {}", fmt_vec(&result.estimate)));
    ctx.say(format!(
        "{} = {:.6e}, residual = {:.3e}, iterations = {}",
        cfg.norm.name(),
        result.objective,
        result.constraint_residual,
        result.iterations
    ));
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

fn sweep(ctx: &Ctx) -> Result<(), Failure> {
    let mut plan: SweepPlan = load(ctx.config())?;
    if let Some(seed) = ctx.cli.seed {
        plan.master_seed = seed;
    }
    plan.outputs = Some(ctx.cli.out.clone());
    plan.validate().map_err(Failure::config)?;
    let records = run_sweep(&plan, ctx.cli.jobs).map_err(Failure::runtime)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    ctx.say(format!("{} trials, {} failed; records in {}", records.len(), failed, ctx.cli.out.join("records.csv").display()));
    if let Some(which) = plan.theorem.which {
        match verify_bound(&records, which, None) {
            Ok(s) => {
                write_json(&ctx.cli.out, "bound_summary.json", &s)?;
                ctx.say(format!(
                    "{}: max ratio {:.4}, median {:.4}, ceiling {} -> {}",
                    which,
                    s.max_ratio,
                    s.median,
                    s.ceiling,
                    if s.pass { "pass" } else { "FAIL" }
                ));
            }
            Err(e) => ctx.say(format!("{which}: no bound summary ({e})")),
        }
    }
    Ok(())
}

fn certify_cmd(ctx: &Ctx) -> Result<(), Failure> {
    let mut cfg: CertifyConfig = load(ctx.config())?;
    if let Some(seed) = ctx.cli.seed {
        cfg.certify.seed = seed;
    }
    let inst = cfg.instance.build(ctx.cli.seed).map_err(Failure::config)?;
    if inst.noise.is_none() {
        return Err(Failure::config("certify needs a noise vector"));
    }
    cfg.solver.validate().map_err(Failure::config)?;
    cfg.norm.check_dim(inst.p()).map_err(Failure::config)?;
    let cert = certify(&inst, &cfg.norm, &cfg.solver, &cfg.certify).map_err(Failure::runtime)?;
    let path = write_json(&ctx.cli.out, "certificate.json", &cert)?;
    ctx.say(format!("primal ‖ν̂‖ = {:.9e}", cert.primal_value));
    ctx.say(format!("dual value  = {:.9e}", cert.dual_value));
    ctx.say(format!("bracket     = [{:.6e}, {:.6e}]", cert.lower_bracket, cert.upper_bracket));
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

#[derive(Serialize)]
struct BoundsOutput {
    report: minnorm::complexity::BoundReport,
    appendix: Option<minnorm::certificates::AppendixBound>,
}

fn bounds(ctx: &Ctx) -> Result<(), Failure> {
    let mut cfg: BoundsConfig = load(ctx.config())?;
    if let Some(seed) = ctx.cli.seed {
        cfg.report.seed = seed;
    }
    let norm = cfg.norm.build(cfg.p).map_err(Failure::config)?;
    let cov = cfg.covariance.build(cfg.p).map_err(Failure::config)?;
    let signal = cfg.signal.resolve(&norm, cfg.s).map_err(Failure::config)?;
    let truth = signal.draw(cfg.p, &mut stream(cfg.report.seed, 0)).map_err(Failure::config)?;
    let report = bound_report(&norm, &cov, cfg.n, &truth, &cfg.report).map_err(Failure::runtime)?;
    let appendix = match appendix_lower_bound(cfg.n, cfg.p, &norm, &cov, &cfg.appendix) {
        Ok(b) => Some(b),
        Err(Error::Unsupported { .. }) => None,
        Err(e) => return Err(Failure::runtime(e)),
    };
    ctx.say(format!("r* = {:.6e} (γ = {:.6e})", report.r_star_estimate, report.gamma));
    ctx.say(format!("small-ball fraction = {:.4} (δ = {:.4})", report.small_ball_fraction, report.delta));
    ctx.say(format!("ζ candidate = {:.6}, ζ̄ candidate = {:.6}", report.delta_lower, report.delta_bar_upper));
    if let Some(a) = &appendix {
        ctx.say(format!("sphere infimum lower bound = {:.6} (conditions hold: {})", a.value, a.valid));
    }
    let path = write_json(&ctx.cli.out, "bounds.json", &BoundsOutput { report, appendix })?;
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

fn lower_bound(ctx: &Ctx) -> Result<(), Failure> {
    let cfg: LowerBoundConfig = load(ctx.config())?;
    let seed = ctx.cli.seed.unwrap_or(cfg.seed);
    let summary = lower_bound_experiment(cfg.epsilon, cfg.n, cfg.trials, &cfg.structure, seed).map_err(Failure::config)?;
    let path = write_json(&ctx.cli.out, "lower_bound.json", &summary)?;
    ctx.say(format!("identical datasets: {}", summary.identical_datasets));
    ctx.say(format!("fraction ‖ξ‖² ≤ nε²: {:.4}", summary.noise_within_budget));
    ctx.say(format!("fraction max error ≥ ε²/16: {:.4}", summary.max_error_above_sixteenth));
    ctx.say(format!("fraction max error ≥ ε²/32: {:.4}", summary.max_error_above_thirty_second));
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // the sweep builds its own pool; this one serves the other commands
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    let command = cli.command;
    let ctx = Ctx { cli };
    let outcome = match command {
        Command::Solve => solve(&ctx),
        Command::Sweep => sweep(&ctx),
        Command::Certify => certify_cmd(&ctx),
        Command::Bounds => bounds(&ctx),
        Command::LowerBound => lower_bound(&ctx),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", serde_json::to_string(&f).unwrap_or_else(|_| f.message.clone()));
            ExitCode::from(f.code)
        }
    }
}
