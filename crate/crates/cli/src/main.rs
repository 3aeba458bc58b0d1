//! `icl`: run teaching scenarios, the joint-training baseline, the HTTP
//! teaching service, and decay-curve tables.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use icl_core::decay::{effective_weight, DecayConfig};
use icl_core::harness::{jt_delta, run_joint_baseline, run_scenario, RunReport};
use icl_core::home::ErrorProbs;
use icl_core::report::{emit_report, Format};
use icl_core::scenario::{default_scenario, ScenarioError, ScenarioScript};
use icl_service::SessionInit;

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "icl", version, about = "Interactive continual learning in a simulated home")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario incrementally and report per-increment metrics.
    Run(RunArgs),
    /// Run the joint-training baseline and its delta to the incremental run.
    Jt(RunArgs),
    /// Serve the interactive teaching API.
    Serve(ServeArgs),
    /// Print effective weight against days since a single activation.
    DecayCurve(DecayArgs),
    /// Print the built-in default scenario as JSON.
    DefaultScenario,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file; the built-in default scenario when omitted.
    scenario: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "table")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// On a wrong location, try the next-ranked one.
    #[arg(long)]
    fallback: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Default)]
struct Overrides {
    /// Recruitment threshold of the object network.
    #[arg(long, env = "ICL_TAU_OBJECT")]
    tau_object: Option<f64>,
    /// Recruitment threshold of the context network.
    #[arg(long, env = "ICL_TAU_CONTEXT")]
    tau_context: Option<f64>,
    /// Long-term memory decay rate; 0 disables fading.
    #[arg(long, env = "ICL_ALPHA")]
    alpha: Option<f64>,
    /// Recency exponent of the model-time weighting.
    #[arg(long, env = "ICL_U")]
    u: Option<f64>,
    /// Consolidation threshold of short-term memory.
    #[arg(long, env = "ICL_GAMMA")]
    gamma: Option<f64>,
    /// View noise of synthetic objects.
    #[arg(long, env = "ICL_SIGMA")]
    sigma: Option<f64>,
    #[arg(long, env = "ICL_P_DETECT")]
    p_detect: Option<f64>,
    #[arg(long, env = "ICL_P_MANIP")]
    p_manip: Option<f64>,
    #[arg(long, env = "ICL_P_NAV")]
    p_nav: Option<f64>,
    #[arg(long, env = "ICL_P_PLACE")]
    p_place: Option<f64>,
    /// Use the standard error probabilities instead of the scenario's.
    #[arg(long)]
    default_errors: bool,
}

impl Overrides {
    fn apply(&self, s: &mut ScenarioScript) {
        let m = &mut s.config.memory;
        if let Some(v) = self.tau_object {
            m.object_net.tau = v;
        }
        if let Some(v) = self.tau_context {
            m.context_net.tau = v;
        }
        if let Some(v) = self.alpha {
            m.ltm_decay.alpha = v;
        }
        if let Some(v) = self.u {
            m.ltm_decay.u = v;
            m.stm_decay.u = v;
        }
        if let Some(v) = self.gamma {
            m.gamma = v;
        }
        if let Some(v) = self.sigma {
            s.config.views.sigma = v;
        }
        let p = &mut s.world.error_probs;
        if self.default_errors {
            *p = ErrorProbs::default();
        }
        if let Some(v) = self.p_detect {
            p.p_detect_fail = v;
        }
        if let Some(v) = self.p_manip {
            p.p_manip_fail = v;
        }
        if let Some(v) = self.p_nav {
            p.p_nav_fail = v;
        }
        if let Some(v) = self.p_place {
            p.p_place_fail = v;
        }
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "ICL_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Scenario whose world and configuration the session uses.
    #[arg(long, env = "ICL_SCENARIO")]
    scenario: Option<PathBuf>,
    #[arg(long, env = "ICL_SEED")]
    seed: Option<u64>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct DecayArgs {
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 0.6)]
    u: f64,
    #[arg(long, default_value_t = 1.0)]
    raw: f64,
    /// Last day of the curve.
    #[arg(long, default_value_t = 60.0)]
    days: f64,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        // An unreadable scenario file is bad input, like a malformed one.
        Failure::Validation(e.to_string())
    }
}

impl From<icl_core::Error> for Failure {
    fn from(e: icl_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, false),
        Command::Jt(a) => cmd_run(a, true),
        Command::Serve(a) => cmd_serve(a),
        Command::DecayCurve(a) => cmd_decay(a),
        Command::DefaultScenario => {
            println!("{}", default_scenario().to_json());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("invalid input: {m}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn load(path: Option<&Path>) -> Result<ScenarioScript, Failure> {
    Ok(match path {
        Some(p) => ScenarioScript::load(p)?,
        None => default_scenario(),
    })
}

fn cmd_run(a: RunArgs, joint: bool) -> Result<(), Failure> {
    let mut script = load(a.scenario.as_deref())?;
    if let Some(r) = a.runs {
        script.runs = r;
    }
    if let Some(s) = a.seed {
        script.seed = s;
    }
    script.config.fetch.fallback |= a.fallback;
    a.overrides.apply(&mut script);
    script.validate()?;

    let incremental = run_scenario(&script)?;
    let mut text = if joint {
        let jt = run_joint_baseline(&script)?;
        let mut text = emit_report(&jt, a.format);
        if let Some(d) = jt_delta(&incremental, &jt) {
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:+.1}"));
            let line = format!(
                "JT minus increment {}: tasks {} pp, exec time {} s",
                d.increment,
                fmt(d.task_acc),
                fmt(d.exec_time)
            );
            match a.format {
                Format::Table => {
                    text.push_str(&line);
                    text.push('\n');
                }
                Format::Csv => eprintln!("{line}"),
            }
        }
        text
    } else {
        emit_report(&incremental, a.format)
    };
    report_timing(&incremental);
    match a.out {
        Some(path) => std::fs::write(&path, text.as_bytes()).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?,
        None => {
            print!("{text}");
            text.clear();
        }
    }
    Ok(())
}

fn report_timing(r: &RunReport) {
    let t = r.timing;
    eprintln!(
        "slowest teaching increment: {:.3} ms for {} views; slowest classify: {:.3} ms",
        t.max_increment_teach_secs * 1e3,
        t.max_increment_views,
        t.max_classify_secs * 1e3
    );
}

fn cmd_serve(a: ServeArgs) -> Result<(), Failure> {
    let mut script = load(a.scenario.as_deref())?;
    a.overrides.apply(&mut script);
    script.validate()?;
    let init = SessionInit {
        config: script.config,
        world: script.world,
        seed: a.seed.unwrap_or(script.seed),
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
    eprintln!("listening on http://{}", a.bind);
    rt.block_on(icl_service::serve(a.bind, init))
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn cmd_decay(a: DecayArgs) -> Result<(), Failure> {
    if !(a.step > 0.0 && a.days > 0.0) {
        return Err(Failure::Validation("--days and --step must be > 0".into()));
    }
    let cfg = DecayConfig {
        alpha: a.alpha,
        u: a.u,
        ..DecayConfig::default()
    };
    cfg.validate().map_err(|e| Failure::Validation(e.to_string()))?;
    println!("days,effective_weight");
    let steps = (a.days / a.step).round() as usize;
    for i in 0..=steps {
        let t = i as f64 * a.step;
        let w = effective_weight(a.raw, &[0.0], t, &cfg).map_err(|e| Failure::Validation(e.to_string()))?;
        println!("{t},{w}");
    }
    Ok(())
}
