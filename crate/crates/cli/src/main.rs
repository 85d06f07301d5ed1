use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use climbsim::control::ControllerMode;
use climbsim::metrics::SimulationLog;
use climbsim::output::{comparison_text, emit_outputs, summarize, OutputError, Summary};
use climbsim::scenario::{load_scenario, preset, Scenario, PRESETS};
use climbsim::sim::{run_simulation, SimError};
use climbsim::spatial::RobotModel;

const EXIT_VALIDATION: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "climbsim", about = "Run quadruped climbing scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (a file path or a preset name).
    Run {
        scenario: String,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Run a scenario under baseline and base admittance control.
    Compare {
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// List the shipped scenarios.
    Presets,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Baseline,
    Admittance,
    EndEffector,
}

impl From<Mode> for ControllerMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Baseline => ControllerMode::Baseline,
            Mode::Admittance => ControllerMode::BaseAdmittance,
            Mode::EndEffector => ControllerMode::EndEffectorAdmittance,
        }
    }
}

enum Failure {
    Validation(String),
    Divergence(String),
    Io(String),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (code, message) = match self {
            Failure::Validation(m) => (EXIT_VALIDATION, m),
            Failure::Divergence(m) => (EXIT_DIVERGENCE, m),
            Failure::Io(m) => (EXIT_IO, m),
        };
        eprintln!("error: {message}");
        ExitCode::from(code)
    }
}

impl From<OutputError> for Failure {
    fn from(e: OutputError) -> Self {
        Failure::Io(e.to_string())
    }
}

fn read_scenario(arg: &str, dt: Option<f64>) -> Result<Scenario, Failure> {
    let text = match preset(arg) {
        Some(text) => text.to_string(),
        None => fs::read_to_string(arg).map_err(|e| Failure::Validation(format!("{arg}: {e}")))?,
    };
    let mut scenario = load_scenario(&text).map_err(|e| Failure::Validation(e.to_string()))?;
    if let Some(dt) = dt {
        scenario.dt = dt;
        scenario.validate().map_err(|e| Failure::Validation(e.to_string()))?;
    }
    Ok(scenario)
}

struct Rollout {
    scenario: Scenario,
    model: RobotModel,
    log: SimulationLog,
    divergence: Option<String>,
}

fn rollout(scenario: Scenario) -> Result<Rollout, Failure> {
    let model = scenario.robot_model().map_err(|e| Failure::Validation(e.to_string()))?;
    match run_simulation(&model, &scenario) {
        Ok(log) => Ok(Rollout {
            scenario,
            model,
            log,
            divergence: None,
        }),
        Err(SimError::NumericalDivergence { t, cause, log }) => Ok(Rollout {
            scenario,
            model,
            log: *log,
            divergence: Some(format!("numerical divergence at t = {t:.4} s ({cause})")),
        }),
        Err(e) => Err(Failure::Validation(e.to_string())),
    }
}

/// Partial logs of a diverged rollout are still written.
fn emit(r: &Rollout, dir: &Path) -> Result<Option<Summary>, Failure> {
    if r.log.is_empty() {
        return Ok(None);
    }
    for path in emit_outputs(&r.log, &r.scenario, &r.model, dir)? {
        println!("wrote {}", path.display());
    }
    Ok(Some(summarize(&r.log, &r.scenario, &r.model)?))
}

fn run(arg: &str, mode: Option<Mode>, out: Option<PathBuf>, dt: Option<f64>) -> Result<(), Failure> {
    let mut scenario = read_scenario(arg, dt)?;
    if let Some(mode) = mode {
        scenario = scenario.with_mode(mode.into());
    }
    let dir = out.unwrap_or_else(|| PathBuf::from(&scenario.output.dir));
    let r = rollout(scenario)?;
    if let Some(summary) = emit(&r, &dir)? {
        print!("{}", summary.to_text());
    }
    match r.divergence {
        Some(m) => Err(Failure::Divergence(m)),
        None => Ok(()),
    }
}

fn compare(arg: &str, out: &Path, dt: Option<f64>) -> Result<(), Failure> {
    let scenario = read_scenario(arg, dt)?;
    let baseline = scenario.clone().with_mode(ControllerMode::Baseline);
    let proposed = scenario.with_mode(ControllerMode::BaseAdmittance);
    // the two rollouts share nothing mutable; files are written afterwards
    let (a, b) = std::thread::scope(|s| {
        let a = s.spawn(|| rollout(baseline));
        let b = s.spawn(|| rollout(proposed));
        (a.join(), b.join())
    });
    let a = a.expect("baseline rollout panicked")?;
    let b = b.expect("admittance rollout panicked")?;
    let sa = emit(&a, &out.join("baseline"))?;
    let sb = emit(&b, &out.join("admittance"))?;
    if let (Some(sa), Some(sb)) = (sa, sb) {
        let report = comparison_text(&sa, &sb);
        let path = out.join("comparison.txt");
        fs::write(&path, &report).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        print!("{report}");
    }
    match a.divergence.or(b.divergence) {
        Some(m) => Err(Failure::Divergence(m)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, mode, out, dt } => run(&scenario, mode, out, dt),
        Command::Compare { scenario, out, dt } => compare(&scenario, &out, dt),
        Command::Presets => {
            for (name, text) in PRESETS {
                let about = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
                println!("{name}\t{about}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
