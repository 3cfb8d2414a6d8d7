use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pear_core::simnet::check::{check_all, Violation};
use pear_core::simnet::{ConfigError, TracebackEnd, TracebackError};
use pear_core::{Mode, Scenario, Tick, World};

use crate::output;
use crate::scenario_file::{self, parse_address, LoadError};

pub const SNAPSHOT_FILE: &str = "snapshot.txt";
pub const TRACE_FILE: &str = "trace.txt";
pub const VERDICTS_FILE: &str = "verdicts.txt";
pub const METRICS_FILE: &str = "metrics.txt";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Snapshot(String),
    #[error("unknown router `{0}`")]
    UnknownRouter(String),
    #[error("bad origin `{0}`")]
    BadOrigin(String),
    #[error("`{router}` has no DRT entry for origin {origin}")]
    UnknownOrigin { router: String, origin: String },
    #[error(transparent)]
    Traceback(#[from] TracebackError),
    #[error("{} invariant violation(s):\n{}", .0.len(), render_violations(.0))]
    Violations(Vec<Violation>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Violations(_) => 2,
            _ => 1,
        }
    }
}

fn render_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| match v.trace {
            Some(t) => format!("{} (trace {t}): {}", v.invariant, v.detail),
            None => format!("{}: {}", v.invariant, v.detail),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn invalid(errors: Vec<ConfigError>) -> CliError {
    CliError::Load(LoadError::Invalid(errors))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub until: Option<Tick>,
    pub dotted: bool,
}

impl RunOptions {
    pub fn apply(&self, sc: &mut Scenario) {
        if let Some(m) = self.mode {
            sc.mode = m;
        }
        if let Some(s) = self.seed {
            sc.seed = s;
        }
        if let Some(u) = self.until {
            sc.limits.until = u;
        }
    }
}

/// Builds and runs a world to the scenario's `until`.
pub fn simulate(sc: &Scenario) -> Result<World, Vec<ConfigError>> {
    let mut w = World::new(sc)?;
    w.run_to_limit();
    Ok(w)
}

#[derive(Debug)]
pub struct RunReport {
    pub world: World,
    pub warnings: Vec<String>,
}

/// Runs a scenario and writes trace, verdict, metrics and snapshot files
/// into `out`. Invariant violations are reported after the files are written.
pub fn run(scenario: &Path, out: &Path, opts: &RunOptions) -> Result<RunReport, CliError> {
    let mut sc = scenario_file::load(scenario)?;
    opts.apply(&mut sc);
    let world = simulate(&sc).map_err(invalid)?;
    fs::create_dir_all(out).map_err(io(out))?;
    let write = |name: &str, text: String| {
        let p = out.join(name);
        fs::write(&p, text).map_err(|source| CliError::Io { path: p, source })
    };
    write(TRACE_FILE, output::trace_txt(&world, opts.dotted))?;
    write(VERDICTS_FILE, output::verdicts_txt(&world))?;
    write(METRICS_FILE, output::metrics_txt(&world))?;
    let abs = fs::canonicalize(scenario).map_err(io(scenario))?;
    let snap = Snapshot { scenario: abs, seed: sc.seed, mode: sc.mode, until: sc.limits.until, dotted: opts.dotted };
    write(SNAPSHOT_FILE, snap.render())?;
    let violations = check_all(&world);
    if !violations.is_empty() {
        return Err(CliError::Violations(violations));
    }
    let warnings = world.warnings().to_vec();
    Ok(RunReport { world, warnings })
}

/// Static checks only: parsing, references, interval plan, perturbations.
pub fn validate(scenario: &Path) -> Result<Vec<String>, CliError> {
    let sc = scenario_file::load(scenario)?;
    let w = World::new(&sc).map_err(invalid)?;
    Ok(w.warnings().to_vec())
}

/// What `run` records so later commands can rebuild the same world. The
/// scenario is referenced by path rather than copied, which keeps secret
/// offsets out of the output directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub scenario: PathBuf,
    pub seed: u64,
    pub mode: Mode,
    pub until: Tick,
    pub dotted: bool,
}

impl Snapshot {
    pub fn render(&self) -> String {
        format!(
            "scenario={}\nseed={}\nmode={}\nuntil={}\ndotted={}\n",
            self.scenario.display(),
            self.seed,
            self.mode,
            self.until,
            self.dotted
        )
    }

    pub fn parse(text: &str) -> Result<Snapshot, String> {
        let mut scenario = None;
        let (mut seed, mut mode, mut until, mut dotted) = (None, None, None, None);
        for line in text.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| format!("bad snapshot line `{line}`"))?;
            match k {
                "scenario" => scenario = Some(PathBuf::from(v)),
                "seed" => seed = v.parse().ok(),
                "mode" => {
                    mode = match v {
                        "tfr" => Some(Mode::Tfr),
                        "baseline" => Some(Mode::Baseline),
                        _ => None,
                    }
                }
                "until" => until = v.parse().ok(),
                "dotted" => dotted = v.parse().ok(),
                _ => return Err(format!("unknown snapshot key `{k}`")),
            }
        }
        match (scenario, seed, mode, until, dotted) {
            (Some(scenario), Some(seed), Some(mode), Some(until), Some(dotted)) => {
                Ok(Snapshot { scenario, seed, mode, until, dotted })
            }
            _ => Err("incomplete snapshot".to_string()),
        }
    }
}

/// Rebuilds the world a previous `run` produced and checks it against the
/// recorded trace file.
pub fn restore(out: &Path) -> Result<(World, Snapshot), CliError> {
    let snap_path = out.join(SNAPSHOT_FILE);
    let text = fs::read_to_string(&snap_path).map_err(io(&snap_path))?;
    let snap = Snapshot::parse(&text).map_err(|m| CliError::Snapshot(format!("{}: {m}", snap_path.display())))?;
    let mut sc = scenario_file::load(&snap.scenario)?;
    RunOptions { mode: Some(snap.mode), seed: Some(snap.seed), until: Some(snap.until), dotted: snap.dotted }
        .apply(&mut sc);
    let world = simulate(&sc).map_err(invalid)?;
    let trace_path = out.join(TRACE_FILE);
    let recorded = fs::read_to_string(&trace_path).map_err(io(&trace_path))?;
    if recorded != output::trace_txt(&world, snap.dotted) {
        return Err(CliError::Snapshot(format!(
            "{} no longer reproduces {}; rerun the scenario",
            snap.scenario.display(),
            trace_path.display()
        )));
    }
    Ok((world, snap))
}

fn router_id(world: &World, name: &str) -> Result<pear_core::NodeId, CliError> {
    world.node_id(name).filter(|id| world.is_router(*id)).ok_or_else(|| CliError::UnknownRouter(name.to_string()))
}

/// Traceback from `egress` for the origin ID it delivered. Prints the router
/// path from the egress back, then `host=<name>` or the untrusted neighbor
/// followed by `untrusted`.
pub fn traceback(out: &Path, egress: &str, origin: &str) -> Result<String, CliError> {
    let (world, _) = restore(out)?;
    let id = router_id(&world, egress)?;
    let origin = parse_address(origin).ok_or_else(|| CliError::BadOrigin(origin.to_string()))?;
    let path = world.traceback(id, origin).map_err(|e| match e {
        TracebackError::NoDrtState(r, a) if r == id => {
            CliError::UnknownOrigin { router: egress.to_string(), origin: a.to_string() }
        }
        e => e.into(),
    })?;
    Ok(format_traceback(&world, &path))
}

pub fn format_traceback(world: &World, path: &pear_core::simnet::TracebackPath) -> String {
    let mut line = path.routers.iter().map(|r| world.name(*r)).collect::<Vec<_>>().join(" ");
    let _ = match path.end {
        TracebackEnd::Host(h) => write!(line, " host={}", world.name(h)),
        TracebackEnd::Untrusted(n) => write!(line, " {} untrusted", world.name(n)),
    };
    line
}

pub fn dump_tables(out: &Path, router: &str) -> Result<String, CliError> {
    let (world, snap) = restore(out)?;
    let id = router_id(&world, router)?;
    let r = world.router(id).expect("router id checked");
    Ok(output::dump_tables(&world, r, snap.dotted))
}
