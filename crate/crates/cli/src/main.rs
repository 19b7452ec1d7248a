use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use weaktrace::network::{compile, parse_network, Network};
use weaktrace::scenarios::{self, Scenario, ScenarioReport, Status};
use weaktrace::tsvf::{Postselection, Preselection};
use weaktrace::weakmeas::{check_grid, DEFAULT_GRID};
use weaktrace::Error;

const OK: u8 = 0;
const ANNOTATION_FAILED: u8 = 1;
const USAGE: u8 = 2;
const ENGINE: u8 = 3;

/// Path-presence and weak-trace analysis of interferometer networks.
#[derive(Parser)]
#[command(name = "weaktrace", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario or a user network and emit a report.
    Run {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Strength grid for probe order fits.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sweep probe strength and emit per-arm traces as CSV.
    Sweep {
        #[command(flatten)]
        target: Target,
        /// Parameter swept over the grid.
        #[arg(long, value_enum, default_value_t = Param::Eps)]
        param: Param,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the stage by arm table: forward, backward, weak value, presence.
    Table {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Parse and check a network description.
    Validate {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Args)]
struct Target {
    #[arg(long, value_enum, conflicts_with = "spec", required_unless_present = "spec")]
    scenario: Option<ScenarioName>,
    /// Network description file.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Source element of a user network (default: the only source).
    #[arg(long, requires = "spec")]
    source: Option<String>,
    /// Detector post-selected on in a user network.
    #[arg(long, requires = "spec")]
    post: Option<String>,
    /// Outer transmission amplitude (fig1).
    #[arg(long)]
    t: Option<f64>,
    /// Probe strength (sec3 probe on C, sec4 probe 1).
    #[arg(long)]
    eps: Option<f64>,
    /// Strength of the second probe (sec4).
    #[arg(long)]
    eps2: Option<f64>,
    /// Add a probe of this strength on F (sec3).
    #[arg(long)]
    probe_f: Option<f64>,
    /// Phase or transverse shift (sec5).
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Transverse beam width (sec5-shift).
    #[arg(long)]
    sigma: Option<f64>,
    /// Compensate the shift in C by an equal one in E (sec5).
    #[arg(long)]
    restore: bool,
    /// Put a single phase shifter or shift on this arm instead (sec5).
    #[arg(long)]
    arm: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioName {
    Fig1,
    Sec3,
    Sec4,
    #[value(name = "sec5-phase")]
    Sec5Phase,
    #[value(name = "sec5-shift")]
    Sec5Shift,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    #[value(name = "text-table")]
    TextTable,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Param {
    Eps,
    Delta,
}

enum Failure {
    Usage(String),
    Engine(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Engine(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(USAGE)
        }
        Err(Failure::Engine(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(ENGINE)
        }
    }
}

fn dispatch(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Run { target, format, grid, output } => {
            let mut s = build(&target)?;
            if let Some(g) = grid {
                check_grid(&g)?;
                s.grid = g;
            }
            let report = scenarios::run(&s)?;
            let text = match format {
                Format::Json => report.to_json(),
                Format::Csv => report.to_csv(),
                Format::TextTable => report.to_text(),
            };
            emit(output.as_deref(), &text)?;
            Ok(verdict(&report))
        }
        Command::Sweep { target, param, grid, output } => {
            let grid = grid.unwrap_or_else(|| DEFAULT_GRID.to_vec());
            check_grid(&grid)?;
            let s = sweep_scenario(&target, param, grid[0])?;
            let rows = scenarios::sweep(&s, &grid)?;
            emit(output.as_deref(), &scenarios::sweep_csv(&rows))?;
            Ok(OK)
        }
        Command::Table { target, output } => {
            let report = scenarios::run(&build(&target)?)?;
            emit(output.as_deref(), &report.stage_table())?;
            Ok(verdict(&report))
        }
        Command::Validate { spec } => {
            let n = load(&spec)?;
            compile(&n)?;
            println!(
                "{}: {} elements, {} stages",
                spec.display(),
                n.elements().len(),
                n.cuts().len()
            );
            Ok(OK)
        }
    }
}

fn verdict(report: &ScenarioReport) -> u8 {
    if report.status == Status::NullPostselection {
        eprintln!("error: post-selection probability is zero");
        ENGINE
    } else if !report.all_passed() {
        for a in report.annotations.iter().filter(|a| !a.pass) {
            eprintln!("annotation failed: {} (measured {}, expected {})", a.name, a.measured, a.expected);
        }
        ANNOTATION_FAILED
    } else {
        OK
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Engine(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<Network, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse_network(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Flags that only make sense for some scenarios.
fn reject_foreign(t: &Target, name: &str, allowed: &[&str]) -> Result<(), Failure> {
    let given = [
        ("t", t.t.is_some()),
        ("eps", t.eps.is_some()),
        ("eps2", t.eps2.is_some()),
        ("probe-f", t.probe_f.is_some()),
        ("delta", t.delta.is_some()),
        ("sigma", t.sigma.is_some()),
        ("restore", t.restore),
        ("arm", t.arm.is_some()),
    ];
    for (flag, set) in given {
        if set && !allowed.contains(&flag) {
            return Err(Failure::Usage(format!("--{flag} does not apply to {name}")));
        }
    }
    Ok(())
}

fn build(t: &Target) -> Result<Scenario, Failure> {
    let Some(name) = t.scenario else {
        return build_custom(t);
    };
    let s = match name {
        ScenarioName::Fig1 => {
            reject_foreign(t, "fig1", &["t"])?;
            scenarios::fig1_nested(t.t.unwrap_or(scenarios::CANONICAL_T))?
        }
        ScenarioName::Sec3 => {
            reject_foreign(t, "sec3", &["eps", "probe-f"])?;
            scenarios::sec3_probe(t.eps.unwrap_or(1e-2), t.probe_f)?
        }
        ScenarioName::Sec4 => {
            reject_foreign(t, "sec4", &["eps", "eps2"])?;
            let e1 = t.eps.unwrap_or(1e-2);
            scenarios::sec4_double(e1, t.eps2.unwrap_or(e1))?
        }
        ScenarioName::Sec5Phase => {
            reject_foreign(t, "sec5-phase", &["delta", "restore", "arm"])?;
            let delta = t.delta.unwrap_or(0.01);
            match &t.arm {
                Some(_) if t.restore => return Err(Failure::Usage("--arm and --restore are exclusive".into())),
                Some(arm) => scenarios::sec5_phase_on(arm, delta)?,
                None => scenarios::sec5_phase(delta, t.restore)?,
            }
        }
        ScenarioName::Sec5Shift => {
            reject_foreign(t, "sec5-shift", &["delta", "sigma", "restore", "arm"])?;
            let delta = t.delta.unwrap_or(0.01);
            let sigma = t.sigma.unwrap_or(1.0);
            match &t.arm {
                Some(_) if t.restore => return Err(Failure::Usage("--arm and --restore are exclusive".into())),
                Some(arm) => scenarios::sec5_transversal_on(arm, delta, sigma)?,
                None => scenarios::sec5_transversal(delta, sigma, t.restore)?,
            }
        }
    };
    Ok(s)
}

fn build_custom(t: &Target) -> Result<Scenario, Failure> {
    reject_foreign(t, "a user network", &[])?;
    let path = t.spec.as_deref().expect("clap requires --scenario or --spec");
    let n = load(path)?;
    let source = match &t.source {
        Some(s) => s.clone(),
        None => {
            let all: Vec<_> = n.sources().map(|e| e.name.clone()).collect();
            match all.as_slice() {
                [one] => one.clone(),
                _ => return Err(Failure::Usage("the network has several sources; choose one with --source".into())),
            }
        }
    };
    let post = t
        .post
        .as_deref()
        .ok_or_else(|| Failure::Usage("a user network needs --post DETECTOR".into()))?;
    let pre = Preselection::source(&n, &source)?;
    let post = Postselection::detector(&n, post)?;
    Ok(scenarios::custom(n, pre, post)?)
}

/// The scenario whose probes are swept; `start` is the first grid value.
fn sweep_scenario(t: &Target, param: Param, start: f64) -> Result<Scenario, Failure> {
    let Some(name) = t.scenario else {
        return Err(Failure::Usage("sweep needs --scenario".into()));
    };
    let need = |p: Param, flag: &str| {
        if param == p {
            Ok(())
        } else {
            Err(Failure::Usage(format!("--param {flag} is the swept parameter for this scenario")))
        }
    };
    match name {
        ScenarioName::Sec3 => {
            need(Param::Eps, "eps")?;
            reject_foreign(t, "a sec3 sweep", &[])?;
            Ok(scenarios::sec3_probe(start, Some(start))?)
        }
        ScenarioName::Sec4 => {
            need(Param::Eps, "eps")?;
            reject_foreign(t, "a sec4 sweep", &[])?;
            Ok(scenarios::sec4_double(start, start)?)
        }
        ScenarioName::Sec5Shift => {
            need(Param::Delta, "delta")?;
            reject_foreign(t, "a sec5-shift sweep", &["sigma", "restore", "arm"])?;
            let sigma = t.sigma.unwrap_or(1.0);
            Ok(match &t.arm {
                Some(arm) => scenarios::sec5_transversal_on(arm, start, sigma)?,
                None => scenarios::sec5_transversal(start, sigma, t.restore)?,
            })
        }
        ScenarioName::Fig1 | ScenarioName::Sec5Phase => {
            Err(Failure::Usage("this scenario has no probes to sweep".into()))
        }
    }
}
