use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use ptlab::degree::{semilinear_degree_with, DegreeOptions, DegreeReport};
use ptlab::experiments::{self as ex, Envelope, Overrides};
use ptlab::integrator::integrate_strided;
use ptlab::poincare::{find_periodic, PeriodicOrbit};
use ptlab::problem::ProblemConfig;
use ptlab::scenarios;
use ptlab::spectral::{Order, State};
use ptlab::LabError;

#[derive(Parser, Debug)]
#[command(name = "ptlab", version, about = "Periodic-orbit experiments on Galerkin truncations")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config for the subcommand; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for reports and CSV files.
    #[arg(long, global = true, default_value = "ptlab-out")]
    out: PathBuf,
    #[arg(long, global = true)]
    modes: Option<usize>,
    /// Steps per period.
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Integrate a problem and write its trajectory as CSV.
    Simulate,
    /// Solve for a periodic orbit and its fixed-point index.
    Periodic,
    /// Averaging-error sweep over dyadic λ.
    Average,
    /// Orbits branching from averaged equilibria, plus the beam index audit.
    Branch,
    /// Resonance index and Landesman–Lazer continuation.
    Resonance,
    /// Compare deg(−F) with ind(Φ_t) for small t.
    Krasnoselskii,
    /// Degree of the semilinear map on a ball.
    Degree,
    /// Isolating-block checks.
    Conley,
    /// Nonnegative periodic solution by monitored Picard iteration.
    Cone,
    /// Every experiment, one line per criterion.
    All,
}

enum Failure {
    Config(String),
    Compute(String),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        match e {
            LabError::InvalidInput(_) => Failure::Config(e.to_string()),
            _ => Failure::Compute(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> std::result::Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

struct Ctx {
    common: Common,
    ov: Overrides,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> std::result::Result<PathBuf, Failure> {
        fs::create_dir_all(&self.common.out)
            .map_err(|e| Failure::Compute(format!("{}: {e}", self.common.out.display())))?;
        let path = self.common.out.join(name);
        fs::write(&path, contents).map_err(|e| Failure::Compute(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    fn report<T: Serialize>(&self, experiment: &str, seed: u64, passed: bool, report: T) -> Outcome {
        let env = Envelope::new(experiment, self.ov.seed_or(seed), passed, report);
        let json = serde_json::to_string_pretty(&env).map_err(|e| Failure::Compute(e.to_string()))?;
        let path = self.write(&format!("{experiment}.json"), &json)?;
        self.say(&format!("{experiment}: {} ({})", verdict(passed), path.display()));
        Ok(passed)
    }

    fn say(&self, line: &str) {
        if !self.common.quiet {
            println!("{line}");
        }
    }

    fn config<T: DeserializeOwned + Default>(&self) -> std::result::Result<T, Failure> {
        load(self.common.config.as_deref())
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "pass"
    } else {
        "FAIL"
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    problem: ProblemConfig,
    /// Initial `u` coefficients (zero-padded); `v` starts at rest.
    initial: Vec<f64>,
    periods: f64,
    /// Keep every `stride`-th step in the CSV.
    stride: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { problem: scenarios::telegraph(), initial: vec![1.0], periods: 4.0, stride: 4 }
    }
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    samples: usize,
    final_time: f64,
    final_state: State,
    final_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
}

fn initial_state(order: Order, modes: usize, u: &[f64]) -> State {
    let mut s = State::zeros(order, modes);
    for (dst, src) in s.u.iter_mut().zip(u) {
        *dst = *src;
    }
    s
}

fn simulate(ctx: &Ctx) -> Outcome {
    let cfg: SimulateConfig = ctx.config()?;
    let p = ctx.ov.apply(cfg.problem).build()?;
    if !(cfg.periods > 0.0) || cfg.stride == 0 {
        return Err(Failure::Config("periods must be positive and stride nonzero".into()));
    }
    let s0 = initial_state(p.order(), p.modes(), &cfg.initial);
    let steps = (cfg.periods * p.steps_per_period() as f64).round().max(1.0) as usize;
    let (traj, failure) = match integrate_strided(&p, &s0, 0.0, cfg.periods * p.period(), steps, cfg.stride) {
        Ok(t) => (t, None),
        Err(e) => (e.partial, Some(e.error.to_string())),
    };
    let csv = ctx.write("trajectory.csv", &traj.to_csv(&p))?;
    ctx.say(&format!("trajectory: {}", csv.display()));
    let last = traj.states.last().cloned().unwrap_or(s0);
    let report = SimulateReport {
        samples: traj.len(),
        final_time: traj.times.last().copied().unwrap_or(0.0),
        final_norm: last.natural_norm(p.basis()),
        final_state: last,
        failure,
    };
    let passed = report.failure.is_none();
    ctx.report("simulate", 0, passed, report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PeriodicConfig {
    problem: ProblemConfig,
    initial: Vec<f64>,
    tol: f64,
}

impl Default for PeriodicConfig {
    fn default() -> Self {
        Self { problem: scenarios::telegraph(), initial: vec![], tol: 1e-9 }
    }
}

#[derive(Debug, Serialize)]
struct PeriodicReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    orbit: Option<PeriodicOrbit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
}

fn periodic(ctx: &Ctx) -> Outcome {
    let cfg: PeriodicConfig = ctx.config()?;
    let p = ctx.ov.apply(cfg.problem).build()?;
    let guess = initial_state(p.order(), p.modes(), &cfg.initial);
    let result = find_periodic(&p, &guess, cfg.tol).and_then(|o| o.with_stability(&p));
    let report = match result {
        Ok(o) => PeriodicReport { orbit: Some(o), failure: None },
        Err(LabError::InvalidInput(m)) => return Err(Failure::Config(m)),
        Err(e) => PeriodicReport { orbit: None, failure: Some(e.to_string()) },
    };
    let passed = report.orbit.as_ref().map_or(false, |o| o.residual <= 1e-6);
    ctx.report("periodic", 0, passed, report)
}

fn average(ctx: &Ctx) -> Outcome {
    let cfg: ex::AveragingConfig = ctx.config()?;
    let r = ex::averaging(&cfg, &ctx.ov)?;
    let mut csv = String::from("scenario,lambda,error\n");
    for s in &r.sweeps {
        for e in &s.samples {
            csv.push_str(&format!("{},{:.17e},{:.17e}\n", s.name, e.lambda, e.error));
        }
    }
    ctx.write("average.csv", &csv)?;
    ctx.report("average", 0, r.passed, r.clone())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BranchCommand {
    branching: ex::BranchConfig,
    audit: ex::IndexAuditConfig,
}

#[derive(Debug, Serialize)]
struct BranchCommandReport {
    branching: ex::BranchReport,
    audit: ex::IndexAuditReport,
}

fn branch(ctx: &Ctx) -> Outcome {
    let cfg: BranchCommand = ctx.config()?;
    let branching = ex::branching(&cfg.branching, &ctx.ov)?;
    let audit = ex::index_audit(&cfg.audit, &ctx.ov)?;
    let mut csv = String::from("equilibrium_u1,lambda,distance\n");
    for b in &branching.branches {
        for o in &b.orbits {
            csv.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", b.equilibrium.u[0], o.lambda, o.distance));
        }
    }
    ctx.write("branch.csv", &csv)?;
    if audit.discrepancy {
        ctx.say(&format!(
            "index audit: unbuckled orbit index {:?}, literal k0 reading predicts {}",
            audit.unbuckled_index_numerical, audit.unbuckled_index_k0_formula
        ));
    }
    let passed = branching.passed && audit.passed;
    ctx.report("branch", cfg.branching.seed, passed, BranchCommandReport { branching, audit })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ResonanceCommand {
    index: ex::ResonanceConfig,
    landesman_lazer: ex::LandesmanLazerConfig,
}

#[derive(Debug, Serialize)]
struct ResonanceCommandReport {
    index: ex::ResonanceSuite,
    landesman_lazer: ex::LandesmanLazerSuite,
}

fn resonance(ctx: &Ctx) -> Outcome {
    let cfg: ResonanceCommand = ctx.config()?;
    let index = ex::resonance(&cfg.index, &ctx.ov)?;
    let landesman_lazer = ex::landesman_lazer_suite(&cfg.landesman_lazer, &ctx.ov)?;
    let passed = index.passed && landesman_lazer.passed;
    ctx.report("resonance", cfg.index.seed, passed, ResonanceCommandReport { index, landesman_lazer })
}

fn krasnoselskii(ctx: &Ctx) -> Outcome {
    let cfg: ex::KrasnoselskiiConfig = ctx.config()?;
    let r = ex::krasnoselskii(&cfg, &ctx.ov)?;
    ctx.report("krasnoselskii", cfg.seed, r.passed, r.clone())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DegreeQuery {
    problem: ProblemConfig,
    /// Ball center as `u` coefficients; the origin when empty.
    center: Vec<f64>,
    radius: f64,
    lambda: f64,
    /// Also recompute at twice the truncation and flag a change.
    doubling: bool,
    /// Expected degree; when set, a mismatch fails the run.
    expected: Option<i32>,
    seed: u64,
}

impl Default for DegreeQuery {
    fn default() -> Self {
        Self {
            problem: scenarios::beam(2, 1.0, 0.0),
            center: vec![],
            radius: 4.0,
            lambda: 1.0,
            doubling: true,
            expected: Some(1),
            seed: 7,
        }
    }
}

#[derive(Debug, Serialize)]
struct DegreeQueryReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    degree: Option<DegreeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
}

fn degree(ctx: &Ctx) -> Outcome {
    let cfg: DegreeQuery = ctx.config()?;
    let p = ctx.ov.apply(cfg.problem).build()?;
    let center = (!cfg.center.is_empty()).then(|| initial_state(p.order(), p.modes(), &cfg.center));
    let opts = DegreeOptions { seed: ctx.ov.seed_or(cfg.seed), ..Default::default() };
    let report = match semilinear_degree_with(&p, center.as_ref(), cfg.radius, cfg.lambda, cfg.doubling, &opts) {
        Ok(d) => DegreeQueryReport { degree: Some(d), failure: None },
        Err(LabError::InvalidInput(m)) => return Err(Failure::Config(m)),
        Err(e) => DegreeQueryReport { degree: None, failure: Some(e.to_string()) },
    };
    let passed = report
        .degree
        .as_ref()
        .map_or(false, |d| d.trusted && cfg.expected.map_or(true, |e| e == d.degree));
    ctx.report("degree", cfg.seed, passed, report)
}

fn conley(ctx: &Ctx) -> Outcome {
    let cfg: ex::ConleyConfig = ctx.config()?;
    let r = ex::conley(&cfg, &ctx.ov)?;
    ctx.report("conley", 0, r.passed, r.clone())
}

fn cone(ctx: &Ctx) -> Outcome {
    let cfg: ex::ConeConfig = ctx.config()?;
    let r = ex::cone(&cfg, &ctx.ov)?;
    ctx.report("cone", 0, r.passed, r.clone())
}

fn all(ctx: &Ctx) -> Outcome {
    if ctx.common.config.is_some() {
        return Err(Failure::Config("`all` runs the built-in configs and takes no --config".into()));
    }
    let suite = ex::run_suite(&ctx.ov)?;
    for (n, name, passed) in suite.criteria() {
        ctx.say(&format!("{n:>2} {name:<18} {}", verdict(passed)));
    }
    let passed = suite.passed();
    ctx.report("all", 7, passed, suite)
}

fn run(cli: Cli) -> Outcome {
    let ov = Overrides { modes: cli.common.modes, steps: cli.common.steps, seed: cli.common.seed };
    let ctx = Ctx { common: cli.common, ov };
    match cli.command {
        Command::Simulate => simulate(&ctx),
        Command::Periodic => periodic(&ctx),
        Command::Average => average(&ctx),
        Command::Branch => branch(&ctx),
        Command::Resonance => resonance(&ctx),
        Command::Krasnoselskii => krasnoselskii(&ctx),
        Command::Degree => degree(&ctx),
        Command::Conley => conley(&ctx),
        Command::Cone => cone(&ctx),
        Command::All => all(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("invalid config: {m}");
            ExitCode::from(2)
        }
    }
}
