use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use upcause::bounds::t_star;
use upcause::cover::{solve, CauseSolution, SolutionDoc, SolveConfig};
use upcause::expr::decimal_to_rational;
use upcause::fixtures;
use upcause::gridworld::{builtin_env, Env, GridSpec, GRID_DIST};
use upcause::reach::EXACT_STATE_CAP;
use upcause::spr::{check_m, tau_cfg, tau_exact, SprConfig};
use upcause::validation::{baseline_na1, baseline_na2, interventional_diff, mc_f, subset_r_gap, to_f64, Estimate};
use upcause::{parse_dist, parse_model, DistSpec, ParametricModel, StateSet};

const EXIT_USAGE: u8 = 1;
const EXIT_EMPTY: u8 = 2;

#[derive(Parser)]
#[command(name = "upcause", version, about = "Probably-approximately-correct cause identification in uncertain parametric MDPs")]
struct Cli {
    /// Worker threads for per-sample analysis (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print progress information to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identify a collection of causes with PAC guarantees.
    Identify(IdentifyArgs),
    /// Check whether a state set is a cause at one parameter point.
    Check(CheckArgs),
    /// Monte Carlo estimates for a stored solution.
    Validate(ValidateArgs),
    /// Print the lower bound after discarding k of N samples.
    Bounds(BoundsArgs),
    /// Grid-world model generation.
    Gridworld {
        #[command(subcommand)]
        command: GridCommand,
    },
    /// Naive baselines: canonical cause at the mean (na1) or at the box vertices (na2).
    Baseline(BaselineArgs),
    /// Plot data: repeated identification runs for several sample sizes.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model JSON file, or builtin:<example1|two-route|grid-a|grid-b>.
    #[arg(long)]
    model: String,
    /// Distribution JSON file, or builtin:<example1|two-route|two-route-alt|grid>.
    #[arg(long)]
    dist: Option<String>,
}

#[derive(Args, Clone)]
struct Tolerances {
    /// Value-iteration residual.
    #[arg(long, default_value_t = 1e-10)]
    residual: f64,
    /// Value-iteration sweep limit.
    #[arg(long, default_value_t = 1_000_000)]
    max_sweeps: usize,
    /// Band in which w_c and q_s0 count as equal.
    #[arg(long, default_value_t = 1e-7)]
    kappa: f64,
    /// Tolerance for an action to count as optimal.
    #[arg(long, default_value_t = 1e-7)]
    kappa_act: f64,
    /// Re-decide corner cases in exact arithmetic on small models.
    #[arg(long)]
    exact: bool,
}

impl Tolerances {
    fn spr(&self) -> SprConfig {
        let mut cfg = SprConfig::default();
        cfg.kappa = self.kappa;
        cfg.reach.residual = self.residual;
        cfg.reach.max_sweeps = self.max_sweeps;
        cfg.reach.kappa_act = self.kappa_act;
        cfg.exact_corners = self.exact;
        cfg
    }
}

#[derive(Args)]
struct IdentifyArgs {
    #[command(flatten)]
    input: ModelArgs,
    /// Number of sampled parameters.
    #[arg(short = 'N', long = "samples", default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 0.99)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep candidates whose bound equals delta.
    #[arg(long)]
    geq_filter: bool,
    /// Include every sample's canonical cause in the JSON.
    #[arg(long)]
    canonical: bool,
    /// Output file for the solution JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tol: Tolerances,
}

#[derive(Args)]
struct CheckArgs {
    /// Model JSON file or builtin name.
    #[arg(long)]
    model: String,
    /// Parameter values in declaration order, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    point: Vec<String>,
    /// State names, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    cause: Vec<String>,
    /// Also enumerate memoryless policies for the conditional-probability difference.
    #[arg(long)]
    interventional: bool,
    #[command(flatten)]
    tol: Tolerances,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: ModelArgs,
    /// Solution JSON written by identify.
    #[arg(long)]
    solution: PathBuf,
    /// Fresh samples per estimate.
    #[arg(short = 'M', long = "mc-samples", default_value_t = 1000)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Discarded samples.
    #[arg(short, long)]
    k: usize,
    #[arg(short = 'N', long = "samples")]
    n: usize,
    #[arg(long, default_value_t = 0.99)]
    beta: f64,
}

#[derive(Subcommand)]
enum GridCommand {
    /// Emit the parametric model JSON of a grid.
    Gen(GridGenArgs),
    /// Emit a builtin grid specification for editing.
    Spec {
        #[arg(long, value_enum)]
        env: EnvArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    A,
    B,
}

impl From<EnvArg> for Env {
    fn from(e: EnvArg) -> Self {
        match e {
            EnvArg::A => Env::A,
            EnvArg::B => Env::B,
        }
    }
}

#[derive(Args)]
struct GridGenArgs {
    /// Builtin environment.
    #[arg(long, value_enum, conflicts_with = "spec")]
    env: Option<EnvArg>,
    /// Grid specification JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Na1,
    Na2,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(value_enum)]
    kind: BaselineKind,
    #[command(flatten)]
    input: ModelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: ModelArgs,
    /// Sample sizes, comma separated.
    #[arg(long = "sizes", value_delimiter = ',', default_value = "10,20,50,100")]
    sizes: Vec<usize>,
    /// Identification runs per sample size.
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 0.99)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fresh samples per Monte Carlo estimate.
    #[arg(short = 'M', long = "mc-samples", default_value_t = 1000)]
    m: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tol: Tolerances,
}

/// An error whose message goes to stderr with the given exit code.
struct Failure(u8, anyhow::Error);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        pool = pool.num_threads(w);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn usage<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(|e| Failure(EXIT_USAGE, e))
}

fn run(cli: &Cli) -> std::result::Result<u8, Failure> {
    match &cli.command {
        Command::Identify(a) => usage(identify(a, cli.verbose)),
        Command::Check(a) => usage(check(a)).map(|_| 0),
        Command::Validate(a) => usage(validate(a)).map(|_| 0),
        Command::Bounds(a) => usage(bounds(a)).map(|_| 0),
        Command::Gridworld { command } => usage(gridworld(command)).map(|_| 0),
        Command::Baseline(a) => usage(baseline(a)),
        Command::Sweep(a) => usage(sweep(a, cli.verbose)).map(|_| 0),
    }
}

fn load_model(spec: &str) -> Result<ParametricModel> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return Ok(match name {
            "example1" => fixtures::example1_model(),
            "two-route" => fixtures::two_route_model(),
            "grid-a" => builtin_env(Env::A).generate()?,
            "grid-b" => builtin_env(Env::B).generate()?,
            _ => bail!("unknown builtin model {name:?}"),
        });
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading model {spec}"))?;
    parse_model(&text).with_context(|| format!("parsing model {spec}"))
}

fn load_dist(spec: Option<&str>, model: &ParametricModel) -> Result<DistSpec> {
    let spec = spec.context("--dist is required")?;
    let text = match spec.strip_prefix("builtin:") {
        Some("example1") => fixtures::EXAMPLE1_DIST.to_string(),
        Some("two-route") => fixtures::TWO_ROUTE_DIST.to_string(),
        Some("two-route-alt") => fixtures::TWO_ROUTE_ALT_DIST.to_string(),
        Some("grid") => GRID_DIST.to_string(),
        Some(name) => bail!("unknown builtin distribution {name:?}"),
        None => fs::read_to_string(spec).with_context(|| format!("reading distribution {spec}"))?,
    };
    parse_dist(&text, model.params()).with_context(|| format!("parsing distribution {spec}"))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn braces(names: &[String]) -> String {
    format!("{{{}}}", names.join(", "))
}

fn summary(sol: &CauseSolution, model: &ParametricModel) -> String {
    let skel = model.skeleton();
    let mut s = String::new();
    s.push_str(&format!(
        "N = {}  delta = {}  beta = {}  seed = {}  |I| = {}  |S_N| = {}\n",
        sol.big_n,
        sol.delta,
        sol.beta,
        sol.seed,
        sol.indices.len(),
        sol.s_n.len()
    ));
    if sol.no_cause() {
        s.push_str("no cause found\n");
    } else {
        s.push_str(&format!("{:<12} {:>6}  member\n", "eta", "n"));
        for ((c, eta), n) in sol.members.iter().zip(&sol.eta).zip(&sol.n) {
            s.push_str(&format!("{:<12.6} {:>6}  {}\n", eta, n, braces(&skel.names_of(c))));
        }
    }
    for e in &sol.excluded {
        s.push_str(&format!(
            "excluded {} (eta = {:.6}, filter {})\n",
            braces(&skel.names_of(&e.set)),
            e.eta,
            e.filter
        ));
    }
    s.push_str(&format!("zeta = {:.6}  (m = {} of {})\n", sol.zeta, sol.m, sol.big_n));
    s
}

fn identify(a: &IdentifyArgs, verbose: u8) -> Result<u8> {
    let model = load_model(&a.input.model)?;
    let dist = load_dist(a.input.dist.as_deref(), &model)?;
    let mut cfg = SolveConfig::new(a.n, a.delta, a.beta, a.seed);
    cfg.geq_filter = a.geq_filter;
    cfg.spr = a.tol.spr();
    if verbose > 0 {
        eprintln!("analyzing {} samples on {} states", a.n, model.skeleton().num_states());
    }
    let sol = solve(&model, &dist, &cfg)?;
    let mut json = sol.to_json(model.skeleton(), a.canonical);
    json.push('\n');
    let table = summary(&sol, &model);
    match &a.out {
        Some(p) => {
            emit(Some(p), &json)?;
            print!("{table}");
        }
        None => {
            emit(None, &json)?;
            eprint!("{table}");
        }
    }
    Ok(if sol.no_cause() { EXIT_EMPTY } else { 0 })
}

fn parse_point(model: &ParametricModel, values: &[String]) -> Result<Vec<f64>> {
    let dim = model.params().dim();
    if values.len() != dim {
        bail!(
            "expected {dim} parameter values ({}), got {}",
            model.params().names().join(", "),
            values.len()
        );
    }
    values
        .iter()
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad parameter value {v:?}")))
        .collect()
}

fn check(a: &CheckArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let u = parse_point(&model, &a.point)?;
    let skel = model.skeleton();
    let set = skel.state_set(&a.cause)?;
    if set.is_empty() {
        bail!("the cause set is empty");
    }
    if let Some(&e) = set.iter().find(|s| skel.effect.contains(s)) {
        bail!("state {} belongs to the effect set", skel.states[e]);
    }
    let cm = model.instantiate(&u)?;
    let cfg = a.tol.spr();
    let exact = if a.tol.exact && cm.num_states() <= EXACT_STATE_CAP {
        u.iter()
            .map(|&x| decimal_to_rational(x))
            .collect::<Option<Vec<_>>>()
            .and_then(|r| model.instantiate_rational(&r).ok())
    } else {
        None
    };
    let mut all = true;
    println!("{:<10} {:>4}  {:<20} {:>14} {:>14}", "state", "tau", "branch", "w_c", "q_s0");
    for &c in &set {
        let v = tau_cfg(&cm, c, &cfg)?;
        let (tau, branch) = match &exact {
            Some(rm) if v.is_corner() => {
                let ev = tau_exact(rm, c)?;
                (ev.tau, format!("{} (exact)", ev.branch.as_str()))
            }
            _ => (v.tau, v.branch.as_str().to_string()),
        };
        all &= tau == 1;
        println!(
            "{:<10} {:>+4}  {:<20} {:>14.10} {:>14.10}",
            skel.states[c], tau, branch, v.w_c, v.q_s0
        );
    }
    let minimal = check_m(&cm.support_graph(), skel.initial, &set);
    println!("minimality: {minimal}");
    println!("is_spr_cause: {}", all && minimal);
    if a.interventional {
        let ru = u
            .iter()
            .map(|&x| decimal_to_rational(x))
            .collect::<Option<Vec<_>>>()
            .context("parameter values must be finite decimals")?;
        let rm = model.instantiate_rational(&ru)?;
        let d = interventional_diff(&rm, &set)?;
        println!(
            "interventional difference over memoryless policies (diagnostic): max = {} ({:.10}), min = {} ({:.10})",
            d.max,
            to_f64(&d.max),
            d.min,
            to_f64(&d.min)
        );
    }
    Ok(())
}

fn csv_row(quantity: &str, e: &Estimate) -> String {
    format!("{},{},{},{},{}\n", quantity, e.estimate, e.m, e.half_width, e.seed)
}

fn validate(a: &ValidateArgs) -> Result<()> {
    let model = load_model(&a.input.model)?;
    let dist = load_dist(a.input.dist.as_deref(), &model)?;
    if a.m == 0 {
        bail!("-M must be positive");
    }
    let text = fs::read_to_string(&a.solution).with_context(|| format!("reading {}", a.solution.display()))?;
    let doc = SolutionDoc::parse(&text)?;
    let (members, s_n) = doc.resolve(model.skeleton())?;
    let mut csv = String::from("quantity,estimate,M,half_width,seed\n");
    for (c, names) in members.iter().zip(&doc.members) {
        let e = mc_f(&model, &dist, c, a.m, a.seed)?;
        csv.push_str(&csv_row(&format!("\"F {}\"", braces(names)), &e));
    }
    let gap = subset_r_gap(&model, &dist, &members, &s_n, a.m, a.seed)?;
    csv.push_str(&csv_row("R", &gap.r));
    let best = gap
        .subsets
        .iter()
        .map(|(_, e)| *e)
        .max_by(|x, y| x.estimate.total_cmp(&y.estimate))
        .unwrap_or(Estimate::from_hits(0, a.m, a.seed));
    csv.push_str(&csv_row("R_sub", &best));
    csv.push_str(&format!(
        "gap,{},{},{},{}\n",
        gap.gap,
        a.m,
        gap.r.half_width + best.half_width,
        a.seed
    ));
    emit(a.out.as_deref(), &csv)
}

fn bounds(a: &BoundsArgs) -> Result<()> {
    let t = t_star(a.k, a.n, a.beta)?;
    println!("{t}");
    Ok(())
}

fn gridworld(cmd: &GridCommand) -> Result<()> {
    match cmd {
        GridCommand::Gen(g) => {
            let spec = match (&g.env, &g.spec) {
                (Some(e), None) => builtin_env((*e).into()),
                (None, Some(p)) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    GridSpec::parse(&text)?
                }
                _ => bail!("exactly one of --env and --spec is required"),
            };
            let mut json = spec.generate()?.to_json();
            json.push('\n');
            emit(g.out.as_deref(), &json)
        }
        GridCommand::Spec { env, out } => {
            let mut json = builtin_env((*env).into()).to_json();
            json.push('\n');
            emit(out.as_deref(), &json)
        }
    }
}

fn baseline(a: &BaselineArgs) -> Result<u8> {
    let model = load_model(&a.input.model)?;
    let dist = load_dist(a.input.dist.as_deref(), &model)?;
    let skel = model.skeleton();
    let sets: Vec<StateSet> = match a.kind {
        BaselineKind::Na1 => {
            let c = baseline_na1(&model, &dist)?;
            if c.is_empty() {
                vec![]
            } else {
                vec![c]
            }
        }
        BaselineKind::Na2 => baseline_na2(&model, &dist)?.into_iter().filter(|c| !c.is_empty()).collect(),
    };
    let names: Vec<Vec<String>> = sets.iter().map(|c| skel.names_of(c)).collect();
    let mut json = serde_json::to_string_pretty(&names)?;
    json.push('\n');
    emit(a.out.as_deref(), &json)?;
    Ok(if sets.is_empty() { EXIT_EMPTY } else { 0 })
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn sweep(a: &SweepArgs, verbose: u8) -> Result<()> {
    let model = load_model(&a.input.model)?;
    let dist = load_dist(a.input.dist.as_deref(), &model)?;
    if a.runs == 0 || a.m == 0 {
        bail!("--runs and -M must be positive");
    }
    let mut csv = String::from("N,quantity,mean,sd\n");
    for &n in &a.sizes {
        let mut rows: [(&str, Vec<f64>); 6] = [
            ("members", vec![]),
            ("eta", vec![]),
            ("F", vec![]),
            ("zeta", vec![]),
            ("R", vec![]),
            ("R_sub", vec![]),
        ];
        for r in 0..a.runs as u64 {
            let seed = a.seed.wrapping_add(r);
            let mut cfg = SolveConfig::new(n, a.delta, a.beta, seed);
            cfg.spr = a.tol.spr();
            let sol = solve(&model, &dist, &cfg)?;
            let vseed = seed.wrapping_add(1 << 32);
            let gap = subset_r_gap(&model, &dist, &sol.members, &sol.s_n, a.m, vseed)?;
            let f: Vec<f64> = sol
                .members
                .iter()
                .map(|c| mc_f(&model, &dist, c, a.m, vseed).map(|e| e.estimate))
                .collect::<upcause::Result<_>>()?;
            rows[0].1.push(sol.members.len() as f64);
            if !sol.eta.is_empty() {
                rows[1].1.push(sol.eta.iter().sum::<f64>() / sol.eta.len() as f64);
                rows[2].1.push(f.iter().sum::<f64>() / f.len() as f64);
            }
            rows[3].1.push(sol.zeta);
            rows[4].1.push(gap.r.estimate);
            rows[5].1.push(gap.max_sub);
            if verbose > 0 {
                eprintln!("N = {n} run {r}: {} members, zeta = {:.6}", sol.members.len(), sol.zeta);
            }
        }
        for (q, xs) in &rows {
            if xs.is_empty() {
                continue;
            }
            let (mean, sd) = mean_sd(xs);
            csv.push_str(&format!("{n},{q},{mean},{sd}\n"));
        }
    }
    emit(a.out.as_deref(), &csv)
}
