use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use dopt_core::bnb::{solve_exact_with, SolveOptions, StopReason, DEFAULT_EPS_GAP, DEFAULT_NODE_CAP};
use dopt_core::localsearch::{local_search, LocalSearchOptions, DEFAULT_EPS_IMP};
use dopt_core::relax::{natural_bound_rowgen, BoundOptions, RelaxOptions, DEFAULT_EPS_KW, DEFAULT_TOP_K};
use dopt_core::{ModelKind, ModelSpec};

use crate::json::{
    self, BoundJson, CertificateJson, DesignJson, LocalSearchReport, ModelJson, ProofJson, SolveJson, TraceJson,
    VerifyJson,
};
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_BAD_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_UNPROVEN: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "dopt", version, about = "D-optimal designs for implicit linear and quadratic response-surface models")]
pub struct Cli {
    /// Worker threads for pricing sweeps [default: all cores]
    #[arg(long, global = true, env = "DOPT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exchange local search from the standard start design
    LocalSearch(LocalSearchArgs),
    /// Row-generation upper bound with a dual certificate
    Bound(BoundArgs),
    /// Branch-and-bound to proven optimality
    Solve(SolveArgs),
    /// Cross-check against dense references, or validate a certificate file
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InstanceArgs {
    /// Model kind: linear or quadratic
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Number of factors F
    #[arg(long)]
    pub factors: Option<usize>,
    /// Levels per factor L [default: 2 for linear, 3 for quadratic]
    #[arg(long)]
    pub levels: Option<u32>,
    /// Whole instance as "kind=quadratic factors=3 levels=3"
    #[arg(long, conflicts_with_all = ["model", "factors", "levels"])]
    pub instance: Option<String>,
}

impl InstanceArgs {
    fn resolve(&self) -> Result<Option<ModelSpec>, Failure> {
        if let Some(text) = &self.instance {
            return Ok(Some(ModelSpec::parse(text)?));
        }
        match (self.model, self.factors) {
            (None, None) if self.levels.is_none() => Ok(None),
            (Some(kind), Some(f)) => {
                let levels = self.levels.unwrap_or(match kind {
                    ModelKind::Linear => 2,
                    ModelKind::Quadratic => 3,
                });
                Ok(Some(ModelSpec::new(kind, f, levels)?))
            }
            _ => Err(Failure::Usage(
                "an instance needs --model and --factors (or --instance)".to_string(),
            )),
        }
    }

    fn require(&self) -> Result<ModelSpec, Failure> {
        self.resolve()?
            .ok_or_else(|| Failure::Usage("missing instance: pass --model and --factors".to_string()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Relative improvement an exchange must exceed
    #[arg(long, default_value_t = DEFAULT_EPS_IMP)]
    pub eps_imp: f64,
    /// Seed for restart perturbations
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Extra descents from perturbed starts
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
}

impl SearchArgs {
    fn options(&self) -> LocalSearchOptions {
        LocalSearchOptions {
            eps_imp: self.eps_imp,
            seed: self.seed,
            restarts: self.restarts,
            ..LocalSearchOptions::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RowgenArgs {
    /// Row-adding rounds allowed; 0 bounds from the initial pool
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Rows added per pricing round
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub topk: usize,
    /// Kiefer-Wolfowitz gap at which a restricted solve stops
    #[arg(long, default_value_t = DEFAULT_EPS_KW)]
    pub eps_kw: f64,
}

impl RowgenArgs {
    fn options(&self) -> BoundOptions {
        let defaults = BoundOptions::default();
        BoundOptions {
            relax: RelaxOptions {
                eps_kw: self.eps_kw,
                ..RelaxOptions::default()
            },
            top_k: self.topk,
            max_rounds: self.rounds.or(defaults.max_rounds),
            ..defaults
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LocalSearchArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Number of runs s
    #[arg(long)]
    pub budget: u64,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Number of runs s
    #[arg(long)]
    pub budget: u64,
    #[command(flatten)]
    pub rowgen: RowgenArgs,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Number of runs s
    #[arg(long)]
    pub budget: u64,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub rowgen: RowgenArgs,
    /// Nodes to explore before giving up on a proof
    #[arg(long, default_value_t = DEFAULT_NODE_CAP)]
    pub node_cap: usize,
    /// Wall-clock limit in seconds
    #[arg(long)]
    pub time_cap: Option<f64>,
    /// Prune nodes whose bound is within this of the incumbent
    #[arg(long, default_value_t = DEFAULT_EPS_GAP)]
    pub eps_gap: f64,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Budget for --instance [default: m + 1]
    #[arg(long)]
    pub budget: Option<u64>,
    /// Validate this certificate (or bound report) instead
    #[arg(long, conflicts_with_all = ["instance", "model", "factors", "levels", "budget"])]
    pub certificate: Option<PathBuf>,
    /// Seed for the random pricing matrices
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Core(#[from] dopt_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        use dopt_core::Error as E;
        match self {
            Failure::Core(E::Infeasible { .. } | E::RankDeficient) => EXIT_INFEASIBLE,
            _ => EXIT_BAD_INPUT,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Reports go to `stdout` unless `--out` names a file.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_BAD_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start worker threads: {e}");
            return EXIT_BAD_INPUT;
        }
    };
    match pool.install(|| dispatch(&cli.command)) {
        Ok(o) => match emit(&o.text, o.out.as_ref(), stdout).and_then(|()| stderr.write_all(o.log.as_bytes())) {
            Ok(()) => o.code,
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                EXIT_BAD_INPUT
            }
        },
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(text: &str, out: Option<&PathBuf>, stdout: &mut dyn Write) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => stdout.write_all(text.as_bytes()),
    }
}

struct Outcome {
    text: String,
    out: Option<PathBuf>,
    code: i32,
    /// Human-readable lines for stderr.
    log: String,
}

impl Outcome {
    fn new(text: String, out: &Option<PathBuf>, code: i32) -> Self {
        Self {
            text,
            out: out.clone(),
            code,
            log: String::new(),
        }
    }
}

fn dispatch(command: &Command) -> Result<Outcome, Failure> {
    match command {
        Command::LocalSearch(a) => cmd_local_search(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn cmd_local_search(a: &LocalSearchArgs) -> Result<Outcome, Failure> {
    let spec = a.instance.require()?;
    let (design, trace) = local_search(&spec, a.budget, &a.search.options())?;
    let report = LocalSearchReport {
        design: DesignJson::new(&spec, &design, trace.final_ldet()),
        trace: TraceJson {
            initial_ldet: trace.initial_ldet,
            iterations: trace.iterations.len(),
            skipped_singular: trace.skipped_singular,
            iteration_cap_hit: trace.iteration_cap_hit,
            restarts: trace.restarts,
        },
        notes: spec.notes(),
    };
    Ok(Outcome::new(json::to_string(&report)?, &a.out, EXIT_OK))
}

fn cmd_bound(a: &BoundArgs) -> Result<Outcome, Failure> {
    let spec = a.instance.require()?;
    let r = natural_bound_rowgen(&spec, a.budget, &a.rowgen.options())?;
    let mut notes = spec.notes();
    if r.round_cap_hit {
        notes.push("round cap reached; the bound is valid but not tight".to_string());
    }
    let report = BoundJson {
        model: ModelJson::from_spec(&spec),
        budget: a.budget,
        bound: r.bound,
        relax_value: r.relax_value,
        rounds: r.rounds,
        pool_size_final: r.pool_size_final,
        converged: r.converged,
        round_cap_hit: r.round_cap_hit,
        relax_converged: r.relax_converged,
        kw_gap: r.kw_gap,
        certificate: CertificateJson::new(&spec, a.budget, &r.certificate),
        notes,
    };
    Ok(Outcome::new(json::to_string(&report)?, &a.out, EXIT_OK))
}

fn cmd_solve(a: &SolveArgs) -> Result<Outcome, Failure> {
    let spec = a.instance.require()?;
    let opts = SolveOptions {
        node_cap: a.node_cap,
        eps_gap: a.eps_gap,
        bound: a.rowgen.options(),
        local: a.search.options(),
        ..SolveOptions::default()
    };
    let start = Instant::now();
    let cap = a.time_cap.map(Duration::from_secs_f64);
    let r = solve_exact_with(&spec, a.budget, &opts, || cap.is_some_and(|c| start.elapsed() >= c))?;
    let status = match r.proof.stop {
        StopReason::Proven => "optimal",
        StopReason::NodeCap => "node-cap",
        StopReason::Interrupted => "time-cap",
    };
    let report = SolveJson {
        design: DesignJson::new(&spec, &r.design, r.proof.optimal_ldet),
        proof: ProofJson {
            status: status.to_string(),
            optimal_ldet: r.proof.optimal_ldet,
            nodes_explored: r.proof.nodes_explored,
            final_gap: r.proof.final_gap,
            upper_bound: r.proof.upper_bound,
            root_bound: r.proof.root_bound,
        },
        notes: spec.notes(),
    };
    let code = if r.proof.is_optimal() { EXIT_OK } else { EXIT_UNPROVEN };
    Ok(Outcome::new(json::to_string(&report)?, &a.out, code))
}

fn cmd_verify(a: &VerifyArgs) -> Result<Outcome, Failure> {
    let checks = if let Some(path) = &a.certificate {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let value = match value.get("certificate") {
            Some(inner) => inner.clone(),
            None => value,
        };
        let cert: CertificateJson = serde_json::from_value(value)?;
        let spec = cert.model.to_spec()?;
        let problems = verify::certificate_problems(&cert)?;
        vec![crate::json::CheckJson {
            name: "certificate".to_string(),
            instance: format!("{spec} s={}", cert.s),
            passed: problems.is_empty(),
            detail: if problems.is_empty() {
                format!("valid upper bound {:.16e}", cert.bound)
            } else {
                problems.join("; ")
            },
        }]
    } else {
        let suite = match a.instance.resolve()? {
            Some(spec) => {
                verify::ensure_reference_capacity(&spec)?;
                let s = a.budget.unwrap_or(spec.row_dim() as u64 + 1);
                vec![(spec, s)]
            }
            None => verify::default_suite(),
        };
        let mut checks = Vec::new();
        for (spec, s) in suite {
            checks.extend(verify::check_instance(&spec, s, a.seed)?);
        }
        checks
    };
    let mut log = String::new();
    for c in &checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        log.push_str(&format!("{mark} {:<26} {:<40} {}\n", c.name, c.instance, c.detail));
    }
    let passed = checks.iter().all(|c| c.passed);
    let report = VerifyJson { passed, checks };
    let code = if passed { EXIT_OK } else { EXIT_VERIFY_FAILED };
    let mut o = Outcome::new(json::to_string(&report)?, &a.out, code);
    o.log = log;
    Ok(o)
}
