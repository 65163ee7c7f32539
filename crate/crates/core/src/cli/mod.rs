//! Command-line front end. Every subcommand reads an optional scenario file,
//! applies flag overrides on top of it, runs the library operations and
//! writes its artifact to `--out`, the scenario's `[outputs]` entry, or
//! standard output.
//!
//! Exit status: 0 on success, 1 on a domain failure (unstable target, lost
//! path, failed plan, I/O), 2 on a usage or configuration error.

pub mod output;
pub mod plan_doc;
pub mod scenario;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use crate::basin::{
    estimate_interval_1d, estimate_star, Attractor, IntervalOptions, LyapunovOptions, MembershipOptions, StarOptions,
};
use crate::continuation::{stability_boundary, trace_path, ContinuationOptions, ControlPolyline, Crossing, SteadyPath};
use crate::error::Error;
use crate::map::{solve_steady_state, ControlledMap, Stability, State, SteadyState};
use crate::planner::{plan_along_path, verify_plan, ManeuverOptions, PlanStatus, PlannerOptions};
use crate::systems;

use output::{num, write_atomic};
use plan_doc::{parse_mode, PlanDocument, PlanTolerances};
use scenario::Scenario;

const NEWTON_MAX_ITERS: usize = 60;

#[derive(Debug, Parser)]
#[command(name = "maneuver", version, about = "Steady states, basins and maneuver plans for controlled discrete maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for a steady state at one control value and classify it.
    Steady(Common),
    /// Continue a steady state along the control polyline; write the path as CSV.
    Trace(Common),
    /// Estimate the domain of attraction of a stable steady state.
    Basin {
        #[command(flatten)]
        common: Common,
        /// Number of rays for state dimension two or more.
        #[arg(long, default_value_t = 16)]
        rays: usize,
        /// Largest probe distance from the steady state.
        #[arg(long, default_value_t = 1e3)]
        radius: f64,
    },
    /// Sample the Lyapunov series on a segment (or a grid for planar states).
    Lyapunov {
        #[command(flatten)]
        common: Common,
        /// Samples per axis.
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Trace the polyline, then plan and verify a maneuver sequence along it.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Longest admissible leg in arclength.
        #[arg(long)]
        max_leg: Option<f64>,
        #[arg(long, default_value = "nominal")]
        mode: String,
    },
    /// Re-simulate a stored plan document.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Plan document written by `plan`.
        #[arg(long)]
        plan: PathBuf,
        /// Defaults to the mode recorded in the document.
        #[arg(long)]
        mode: Option<String>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML scenario file; flags override its entries.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    system: Option<String>,
    /// Control value, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    alpha: Option<Vec<f64>>,
    /// Initial guess for the steady state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    guess: Option<Vec<f64>>,
    /// Start of the segment: a control value for trace and plan, a state for lyapunov.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    from: Option<Vec<f64>>,
    /// End of the segment, see `--from`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    to: Option<Vec<f64>>,
    #[arg(long)]
    min_step: Option<f64>,
    #[arg(long)]
    conv_tol: Option<f64>,
    #[arg(long)]
    newton_tol: Option<f64>,
    #[arg(long)]
    tail_tol: Option<f64>,
    #[arg(long)]
    bisect_tol: Option<f64>,
    /// Iteration budget for orbits and series.
    #[arg(long, default_value_t = 100_000)]
    k_max: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Domain(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(_) => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidPolyline(_)
            | Error::InvalidArgument(_)
            | Error::InvalidSeed(_)
            | Error::DimensionMismatch { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Domain(e.to_string()),
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

/// Scenario file merged with the command-line overrides.
struct Config {
    scenario: Scenario,
    map: ControlledMap,
    k_max: usize,
}

impl Config {
    fn resolve(common: &Common) -> Outcome<Self> {
        let mut scenario = match &common.scenario {
            Some(path) => Scenario::load(path).map_err(Failure::Usage)?,
            None => Scenario::default(),
        };
        if let Some(system) = &common.system {
            scenario.system = Some(system.clone());
        }
        if let Some(alpha) = &common.alpha {
            scenario.seed.alpha = Some(alpha.clone());
        }
        if let Some(guess) = &common.guess {
            scenario.seed.guess = Some(guess.clone());
        }
        let t = &mut scenario.tolerances;
        for (slot, flag) in [
            (&mut t.newton_tol, common.newton_tol),
            (&mut t.conv_tol, common.conv_tol),
            (&mut t.tail_tol, common.tail_tol),
            (&mut t.bisect_tol, common.bisect_tol),
        ] {
            if let Some(v) = flag {
                *slot = v;
            }
        }
        if common.min_step.is_some() {
            t.min_step = common.min_step;
        }
        if common.k_max == 0 {
            return Err(Failure::Usage("--k-max must be positive".into()));
        }
        scenario.validate().map_err(Failure::Usage)?;
        let name = scenario.system.as_deref().expect("validated");
        let map = systems::by_name(name).expect("validated");
        Ok(Self { scenario, map, k_max: common.k_max })
    }

    fn control(&self) -> Outcome<DVector<f64>> {
        match &self.scenario.seed.alpha {
            Some(alpha) => Ok(DVector::from_column_slice(alpha)),
            None => Err(Failure::Usage("no control value given (set seed.alpha or pass --alpha)".into())),
        }
    }

    fn guess(&self) -> State {
        match &self.scenario.seed.guess {
            Some(g) => DVector::from_column_slice(g),
            None => DVector::zeros(self.map.state_dim()),
        }
    }

    fn steady(&self, alpha: &DVector<f64>) -> Outcome<SteadyState> {
        Ok(solve_steady_state(&self.map, alpha, &self.guess(), self.scenario.tolerances.newton_tol, NEWTON_MAX_ITERS)?)
    }

    fn polyline(&self, common: &Common) -> Outcome<ControlPolyline> {
        let vertices = match (&common.from, &common.to) {
            (Some(from), Some(to)) => vec![from.clone(), to.clone()],
            (None, None) => self.scenario.polyline.clone(),
            _ => return Err(Failure::Usage("--from and --to must be given together".into())),
        };
        let m = self.map.control_dim();
        if let Some(v) = vertices.iter().find(|v| v.len() != m) {
            return Err(Failure::Usage(format!("polyline vertex has {} components, expected {m}", v.len())));
        }
        Ok(ControlPolyline::new(vertices.into_iter().map(DVector::from_vec).collect())?)
    }

    fn trace(&self, polyline: &ControlPolyline) -> Outcome<SteadyPath> {
        let start = &polyline.vertices()[0];
        if let Some(alpha) = &self.scenario.seed.alpha {
            if alpha.as_slice() != start.as_slice() {
                return Err(Failure::Usage("seed.alpha must equal the first polyline vertex".into()));
            }
        }
        let seed = self.steady(start)?;
        let opts = ContinuationOptions { newton_tol: self.scenario.tolerances.newton_tol, ..Default::default() };
        Ok(trace_path(&self.map, &seed, polyline, &opts)?)
    }

    fn membership(&self) -> MembershipOptions {
        MembershipOptions { k_max: self.k_max, conv_tol: self.scenario.tolerances.conv_tol, escape_radius: None }
    }

    fn maneuver(&self) -> ManeuverOptions {
        ManeuverOptions { conv_tol: self.scenario.tolerances.conv_tol, k_max: self.k_max }
    }

    /// `--out` wins over the scenario entry; neither means standard output.
    fn emit(&self, flag: &Option<PathBuf>, entry: Option<&PathBuf>, bytes: &[u8], out: &mut dyn Write) -> Outcome {
        match flag.as_ref().or(entry) {
            Some(path) => write_file(path, bytes),
            None => out.write_all(bytes).map_err(|e| Failure::Domain(format!("stdout: {e}"))),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Outcome {
    write_atomic(path, bytes).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

fn vector(v: &DVector<f64>) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(",")
}

fn stability_name(s: Stability) -> &'static str {
    match s {
        Stability::AsymptoticallyStable => "asymptotically-stable",
        Stability::Unstable => "unstable",
        Stability::Marginal => "marginal",
    }
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(|e| Failure::Domain(format!("stdout: {e}")))?
    };
}

fn steady(common: &Common, out: &mut dyn Write) -> Outcome {
    let cfg = Config::resolve(common)?;
    let ss = cfg.steady(&cfg.control()?)?;
    say!(out, "x = {}", vector(&ss.x));
    say!(out, "alpha = {}", vector(&ss.alpha));
    say!(out, "residual = {}", num(ss.residual));
    say!(out, "spectral_radius = {}", num(ss.spectral_radius));
    say!(out, "operator_norm = {}", num(ss.operator_norm));
    say!(out, "stability = {}", stability_name(ss.stability));
    Ok(())
}

fn trace(common: &Common, out: &mut dyn Write, log: &mut dyn Write) -> Outcome {
    let cfg = Config::resolve(common)?;
    let path = cfg.trace(&cfg.polyline(common)?)?;
    let crossings = stability_boundary(&cfg.map, &path, cfg.scenario.tolerances.bisect_tol)?;
    cfg.emit(&common.out, cfg.scenario.outputs.trace.as_ref(), &output::trace_csv(&path), out)?;
    for c in crossings {
        let what = match c.direction {
            Crossing::LosesStability => "loses stability",
            Crossing::GainsStability => "gains stability",
        };
        say!(log, "{what} at t = {}, alpha = {}", num(c.t), vector(&c.alpha));
    }
    Ok(())
}

fn basin(common: &Common, rays: usize, radius: f64, out: &mut dyn Write) -> Outcome {
    let cfg = Config::resolve(common)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Failure::Usage("--radius must be positive".into()));
    }
    let target = cfg.steady(&cfg.control()?)?;
    let bisect_tol = cfg.scenario.tolerances.bisect_tol;
    let slice = if cfg.map.state_dim() == 1 {
        let opts = IntervalOptions { r_probe_max: radius, bisect_tol, membership: cfg.membership() };
        estimate_interval_1d(&cfg.map, &target, &opts)?
    } else {
        let opts = StarOptions { num_rays: rays, r_max: radius, bisect_tol, membership: cfg.membership() };
        estimate_star(&cfg.map, &target, &opts)?
    };
    cfg.emit(&common.out, cfg.scenario.outputs.basin.as_ref(), &output::basin_csv(&slice), out)
}

fn lyapunov(common: &Common, points: usize, out: &mut dyn Write) -> Outcome {
    let cfg = Config::resolve(common)?;
    if points < 2 {
        return Err(Failure::Usage("--points must be at least 2".into()));
    }
    let target = cfg.steady(&cfg.control()?)?;
    let n = cfg.map.state_dim();
    let corner = |v: &Option<Vec<f64>>, offset: f64| -> Outcome<State> {
        match v {
            Some(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
            Some(v) => Err(Failure::Usage(format!("segment end has {} components, expected {n}", v.len()))),
            None => Ok(target.x.add_scalar(offset)),
        }
    };
    let from = corner(&common.from, -1.5)?;
    let to = corner(&common.to, 1.5)?;
    let attractor = Attractor::new(&cfg.map, &target)?;
    let opts = LyapunovOptions { k_max: cfg.k_max, tail_tol: cfg.scenario.tolerances.tail_tol, ..Default::default() };
    let frac = |i: usize| i as f64 / (points - 1) as f64;
    let samples: Vec<State> = if n == 2 {
        (0..points)
            .flat_map(|j| (0..points).map(move |i| (i, j)))
            .map(|(i, j)| {
                DVector::from_vec(vec![
                    from[0] + frac(i) * (to[0] - from[0]),
                    from[1] + frac(j) * (to[1] - from[1]),
                ])
            })
            .collect()
    } else {
        (0..points).map(|i| &from + (&to - &from) * frac(i)).collect()
    };
    let values = samples
        .into_iter()
        .map(|x| attractor.lyapunov(&x, &opts).map(|v| (x, v)))
        .collect::<crate::Result<Vec<_>>>()?;
    cfg.emit(&common.out, cfg.scenario.outputs.lyapunov.as_ref(), &output::lyapunov_csv(&values), out)
}

fn plan(common: &Common, max_leg: Option<f64>, mode: &str, out: &mut dyn Write, log: &mut dyn Write) -> Outcome {
    let cfg = Config::resolve(common)?;
    let mode = parse_mode(mode).map_err(Failure::Usage)?;
    let polyline = cfg.polyline(common)?;
    let path = cfg.trace(&polyline)?;
    let opts = PlannerOptions {
        min_step: cfg.scenario.tolerances.min_step,
        max_leg,
        maneuver: cfg.maneuver(),
        ..Default::default()
    };
    let plan = plan_along_path(&cfg.map, &path, 0.0, polyline.length(), &opts)?;
    let report = verify_plan(&cfg.map, &plan, mode, &cfg.maneuver())?;
    let tolerances = PlanTolerances {
        newton_tol: cfg.scenario.tolerances.newton_tol,
        conv_tol: cfg.scenario.tolerances.conv_tol,
        k_max: cfg.k_max,
    };
    let doc = PlanDocument::new(cfg.map.name(), &plan, &report, tolerances);
    cfg.emit(&common.out, cfg.scenario.outputs.plan.as_ref(), doc.to_toml().as_bytes(), out)?;
    say!(log, "{} legs, {} intermediates", plan.legs.len(), plan.intermediates().len());
    finish(report.status)
}

fn verify(common: &Common, plan_path: &Path, mode: Option<&str>, out: &mut dyn Write) -> Outcome {
    let text = std::fs::read_to_string(plan_path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", plan_path.display())))?;
    let doc = PlanDocument::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", plan_path.display())))?;
    if common.system.as_ref().is_some_and(|s| *s != doc.system) {
        return Err(Failure::Usage(format!("plan document is for system `{}`", doc.system)));
    }
    let map = systems::by_name(&doc.system).ok_or_else(|| Failure::Usage(format!("unknown system `{}`", doc.system)))?;
    let mode = parse_mode(mode.unwrap_or(&doc.mode)).map_err(Failure::Usage)?;
    let tolerances = PlanTolerances {
        newton_tol: common.newton_tol.unwrap_or(doc.tolerances.newton_tol),
        conv_tol: common.conv_tol.unwrap_or(doc.tolerances.conv_tol),
        k_max: doc.tolerances.k_max,
    };
    let plan = PlanDocument { tolerances: tolerances.clone(), ..doc.clone() }.to_plan(&map).map_err(Failure::Usage)?;
    let report = verify_plan(&map, &plan, mode, &ManeuverOptions { conv_tol: tolerances.conv_tol, k_max: tolerances.k_max })?;
    let result = PlanDocument::new(&doc.system, &plan, &report, tolerances);
    match &common.out {
        Some(path) => write_file(path, result.to_toml().as_bytes())?,
        None => {
            for (leg, record) in result.legs.iter().zip(&doc.legs) {
                let agrees = if leg.steps == record.steps && leg.success == record.success { "" } else { " (differs from stored)" };
                say!(
                    out,
                    "leg {}: {} -> {}  steps = {}  final_distance = {}  {}{agrees}",
                    leg.leg_index,
                    vector(&DVector::from_column_slice(&leg.alpha_from)),
                    vector(&DVector::from_column_slice(&leg.alpha_to)),
                    leg.steps,
                    num(leg.final_distance),
                    if leg.success { "ok" } else { "FAILED" },
                );
            }
            say!(out, "status = {}", result.status);
        }
    }
    finish(report.status)
}

fn finish(status: PlanStatus) -> Outcome {
    match status {
        PlanStatus::Verified => Ok(()),
        PlanStatus::Failed { leg } => Err(Failure::Domain(format!("plan fails at leg {leg}"))),
    }
}

/// Runs the command line `args` (program name first) against the given
/// streams and returns the exit status.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let sink: &mut dyn Write = if code == 0 { out } else { err };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let result = match &cli.command {
        Command::Steady(common) => steady(common, out),
        Command::Trace(common) => trace(common, out, err),
        Command::Basin { common, rays, radius } => basin(common, *rays, *radius, out),
        Command::Lyapunov { common, points } => lyapunov(common, *points, out),
        Command::Plan { common, max_leg, mode } => plan(common, *max_leg, mode, out, err),
        Command::Verify { common, plan, mode } => verify(common, plan, mode.as_deref(), out),
    };
    match result {
        Ok(()) => 0,
        Err(failure) => {
            let (Failure::Usage(msg) | Failure::Domain(msg)) = &failure;
            let _ = writeln!(err, "error: {msg}");
            failure.code()
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(std::iter::once("maneuver").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn steady_reports_classification() {
        let (code, out, _) = call(&["steady", "--system", "logistic", "--alpha", "2", "--guess", "0.4"]);
        assert_eq!(code, 0);
        assert!(out.contains("x = 0.5\n"), "{out}");
        assert!(out.contains("stability = asymptotically-stable"));
    }

    #[test]
    fn negative_controls_parse() {
        let (code, out, _) = call(&["steady", "--system", "radial-cubic-2d", "--alpha", "-1", "--guess", "-1,-1"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("x = -1.0,-1.0"), "{out}");
    }

    #[test]
    fn basin_on_logistic() {
        let (code, out, err) = call(&["basin", "--system", "logistic", "--alpha", "2", "--guess", "0.4"]);
        assert_eq!(code, 0, "{err}");
        let row: Vec<f64> = out.lines().nth(1).unwrap().split(',').take(3).map(|s| s.parse().unwrap()).collect();
        assert_eq!(row[0], 2.0);
        assert!(row[1].abs() < 1e-3 && (row[2] - 1.0).abs() < 1e-3, "{row:?}");
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(call(&["plan", "--system", "cubic-shift", "--from", "1", "--to", "1"]).0, 2);
        assert_eq!(call(&["plan", "--system", "cubic-shift", "--from", "1"]).0, 2);
        assert_eq!(call(&["steady", "--system", "henon", "--alpha", "1"]).0, 2);
        assert_eq!(call(&["steady", "--system", "logistic"]).0, 2);
        assert_eq!(call(&["frobnicate"]).0, 2);
        assert_eq!(call(&["--help"]).0, 0);
    }

    #[test]
    fn unstable_target_is_a_domain_failure() {
        let (code, _, err) = call(&["basin", "--system", "logistic", "--alpha", "2", "--guess", "0"]);
        assert_eq!(code, 1);
        assert!(err.contains("error:"), "{err}");
    }

    #[test]
    fn trace_reports_crossings() {
        let (code, out, err) = call(&["trace", "--system", "logistic", "--from", "2", "--to", "3.5", "--guess", "0.5"]);
        assert_eq!(code, 0, "{err}");
        assert!(out.starts_with("t,alpha_1,x_1,spectral_radius,operator_norm,stable\n"));
        assert!(err.contains("loses stability at t = "), "{err}");
    }

    #[test]
    fn lyapunov_segment() {
        let (code, out, err) =
            call(&["lyapunov", "--system", "cubic-shift", "--alpha", "0", "--from", "-0.5", "--to", "0.5", "--points", "3"]);
        assert_eq!(code, 0, "{err}");
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "x_1,V,status");
        assert_eq!(lines[2], "0.0,0.0,C");
    }
}
