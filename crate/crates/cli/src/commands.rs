//! Subcommands of the `lasalle` binary.

use std::ffi::OsString;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use lasalle_core::cellset::{invariant_part, omega_of_set, OmegaMode};
use lasalle_core::dynsys::find_fixed_points;
use lasalle_core::lasalle::{lasalle_analyze, lasalle_extension_analyze, Verdict};
use lasalle_core::limitset::{classify, estimate_from_trajectory, omega_invariance_check, verify_approach, Classification};
use lasalle_core::{Bounds, CellSet, GridSpec, Point};

use crate::config::{RunConfig, Settings};
use crate::output::{emit, write_atomic};
use crate::report::{
    cells_csv, to_json, trajectory_csv, ApproachDto, CellIterationReport, CellSetDto, FixedPointsReport, LasalleDto,
    LimitPointReport,
};
use crate::system_file::{BoxDef, LoadedSystem, SystemFile};
use crate::{CliError, CliResult, Status};

#[derive(Debug, Parser)]
#[command(name = "lasalle", version, about = "Limit sets, invariant sets and LaSalle certificates for maps x(n+1) = T(x(n))")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Iterate the map and write the motion as CSV.
    Simulate(PointArgs),
    /// Rewrite a scalar recurrence as a first-order system file.
    Lift(LiftArgs),
    /// Locate fixed points in a box.
    FixedPoints(BoxArgs),
    /// Limit set of a point (--x0) or of a box of cells.
    LimitSet(PointArgs),
    /// Largest invariant set inside a box of cells.
    InvariantPart(BoxArgs),
    /// Check a LaSalle certificate for each initial point.
    Lasalle(LasalleArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// System definition file (JSON).
    pub system: PathBuf,
    /// JSON file with defaults for any of the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
}

#[derive(Debug, Args)]
pub struct Region {
    /// Lower box corner, comma separated (defaults to the file's domain).
    #[arg(long, allow_hyphen_values = true)]
    pub lower: Option<String>,
    /// Upper box corner, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub upper: Option<String>,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    #[command(flatten)]
    pub common: Common,
    /// Initial point, comma separated (defaults to the file's initial state).
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[command(flatten)]
    pub region: Region,
}

#[derive(Debug, Args)]
pub struct BoxArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub region: Region,
}

#[derive(Debug, Args)]
pub struct LiftArgs {
    /// System file with a `higher_order` section.
    pub system: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LasalleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Initial point; repeat for several.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Vec<String>,
    #[command(flatten)]
    pub region: Region,
    /// Use the extended certificate: motions must stay in G_c from step N on.
    #[arg(long, value_name = "N", requires_all = ["gc_lower", "gc_upper"])]
    pub extension: Option<usize>,
    #[arg(long, allow_hyphen_values = true, requires = "extension")]
    pub gc_lower: Option<String>,
    #[arg(long, allow_hyphen_values = true, requires = "extension")]
    pub gc_upper: Option<String>,
}

/// Runs the binary on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Status::InputError.code() } else { Status::Ok.code() };
        }
    };
    match dispatch(cli.command) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.status.code()
        }
    }
}

pub fn dispatch(command: Command) -> CliResult<Status> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Lift(a) => lift(a),
        Command::FixedPoints(a) => fixed_points(a),
        Command::LimitSet(a) => limit_set(a),
        Command::InvariantPart(a) => invariant(a),
        Command::Lasalle(a) => lasalle(a),
    }
}

fn setup(common: &Common) -> CliResult<(LoadedSystem, Settings)> {
    let file = SystemFile::read(&common.system)?;
    let loaded = file.load()?;
    let fallback = match &common.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    let settings = common.run.clone().or(fallback).resolve()?;
    Ok((loaded, settings))
}

fn parse_list(flag: &str, text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(format!("--{flag}: `{s}` is not a number")))
        })
        .collect()
}

fn parse_point(text: &str, dim: usize) -> CliResult<Point> {
    let v = parse_list("x0", text)?;
    if v.len() != dim {
        return Err(CliError::input(format!(
            "--x0 `{text}` has {} coordinates but the system has dimension {dim}",
            v.len()
        )));
    }
    Ok(Point::new(v))
}

fn initial_point(x0: Option<&str>, sys: &LoadedSystem) -> CliResult<Point> {
    match (x0, &sys.initial_state) {
        (Some(t), _) => parse_point(t, sys.system.dim()),
        (None, Some(p)) => Ok(p.clone()),
        (None, None) => Err(CliError::input("give --x0 or an `initial_state` in the system file")),
    }
}

fn parse_box(lower: &Option<String>, upper: &Option<String>, names: (&str, &str)) -> CliResult<Option<Bounds>> {
    match (lower, upper) {
        (Some(l), Some(u)) => Ok(Some(Bounds::new(parse_list(names.0, l)?, parse_list(names.1, u)?)?)),
        (None, None) => Ok(None),
        _ => Err(CliError::input(format!("--{} and --{} go together", names.0, names.1))),
    }
}

fn region(r: &Region, sys: &LoadedSystem) -> CliResult<Bounds> {
    let b = match parse_box(&r.lower, &r.upper, ("lower", "upper"))? {
        Some(b) => b,
        None => sys
            .system
            .domain()
            .cloned()
            .ok_or_else(|| CliError::input("give --lower/--upper or a `domain` in the system file"))?,
    };
    if b.dim() != sys.system.dim() {
        return Err(CliError::input(format!(
            "box has dimension {} but the system has dimension {}",
            b.dim(),
            sys.system.dim()
        )));
    }
    Ok(b)
}

fn full_grid(b: &Bounds, s: &Settings) -> CliResult<CellSet> {
    Ok(CellSet::full(Arc::new(GridSpec::uniform(b.clone(), s.grid)?)))
}

fn simulate(a: PointArgs) -> CliResult<Status> {
    let (sys, s) = setup(&a.common)?;
    let x0 = initial_point(a.x0.as_deref(), &sys)?;
    let traj = sys.system.trajectory(&x0, s.steps, s.rmax)?;
    emit(s.out.as_deref(), trajectory_csv(&traj, sys.system.dim()).as_bytes())?;
    Ok(match traj.diverged_at {
        Some(step) => {
            eprintln!("motion unbounded at step {step} (|x| > {} or non-finite)", s.rmax);
            Status::Divergence
        }
        None => Status::Ok,
    })
}

fn lift(a: LiftArgs) -> CliResult<Status> {
    let lifted = SystemFile::read(&a.system)?.lifted()?;
    emit(a.out.as_deref(), &to_json(&lifted))?;
    Ok(Status::Ok)
}

fn fixed_points(a: BoxArgs) -> CliResult<Status> {
    let (sys, s) = setup(&a.common)?;
    let b = region(&a.region, &sys)?;
    let fp = find_fixed_points(&sys.system, &b, s.grid, s.tol_fixed)?;
    let residuals = fp
        .points
        .iter()
        .map(|p| Ok(sys.system.step(p)?.distance(p)))
        .collect::<CliResult<Vec<f64>>>()?;
    let report = FixedPointsReport {
        system: sys.name.clone(),
        search: BoxDef::from_bounds(&b),
        grid: s.grid,
        tol: s.tol_fixed,
        continuum: fp.continuum,
        points: fp.points.iter().map(|p| p.coords().to_vec()).collect(),
        residuals,
    };
    emit(s.out.as_deref(), &to_json(&report))?;
    Ok(Status::Ok)
}

fn limit_set(a: PointArgs) -> CliResult<Status> {
    let (sys, s) = setup(&a.common)?;
    let box_mode = a.x0.is_none() && (a.region.lower.is_some() || sys.initial_state.is_none());
    if box_mode {
        let h = full_grid(&region(&a.region, &sys)?, &s)?;
        let omega = omega_of_set(&sys.system, &h, &s.image(), s.j_max, s.n_max)?;
        let report = CellIterationReport {
            system: sys.name.clone(),
            mode: match omega.mode {
                OmegaMode::Nested => "nested",
                OmegaMode::Truncated => "truncated",
            },
            iterations: omega.iterations,
            converged: omega.converged,
            result: CellSetDto::from(&omega.cells),
        };
        return finish_cells(&s, &report, &omega.cells);
    }

    let x0 = initial_point(a.x0.as_deref(), &sys)?;
    let opts = s.limit_set();
    let traj = sys.system.trajectory(&x0, opts.n_total, opts.r_max)?;
    if let Some(step) = traj.diverged_at {
        return Err(CliError {
            status: Status::Divergence,
            message: format!("motion from {:?} is unbounded at step {step}", x0.coords()),
        });
    }
    let est = estimate_from_trajectory(&traj, &opts)?;
    let (classification, detail) = match classify(&est, &sys.system, s.tol_approach)? {
        Classification::FixedPoint => ("fixed_point", None),
        Classification::PeriodicOrbit(_) => ("periodic_orbit", None),
        Classification::Unresolved(why) => ("unresolved", Some(why)),
    };
    let invariant = omega_invariance_check(&est, &sys.system, s.tol_approach)?;
    let approach = verify_approach(&traj, &est.representatives, s.tol_approach, 1.0 - s.burn_in)?;
    let report = LimitPointReport {
        system: sys.name.clone(),
        mode: "point",
        x0: x0.coords().to_vec(),
        steps: opts.n_total,
        burn_in: opts.burn_in,
        representatives: est.representatives.iter().map(|p| p.coords().to_vec()).collect(),
        period: est.period,
        classification,
        detail,
        tail_radius: est.tail_radius,
        invariant,
        approach: ApproachDto {
            sup_distance: approach.sup_distance,
            approaches: approach.approaches,
            visits: approach.visits,
            is_minimal: approach.is_minimal,
        },
    };
    emit(s.out.as_deref(), &to_json(&report))?;
    Ok(Status::Ok)
}

fn invariant(a: BoxArgs) -> CliResult<Status> {
    let (sys, s) = setup(&a.common)?;
    let e = full_grid(&region(&a.region, &sys)?, &s)?;
    let m = invariant_part(&sys.system, &e, &s.image(), s.max_iters)?;
    let report = CellIterationReport {
        system: sys.name.clone(),
        mode: "invariant_part",
        iterations: m.iterations,
        converged: m.converged,
        result: CellSetDto::from(&m.cells),
    };
    finish_cells(&s, &report, &m.cells)
}

fn finish_cells(s: &Settings, report: &CellIterationReport, cells: &CellSet) -> CliResult<Status> {
    let json = to_json(report);
    if let Some(p) = &s.plot {
        write_atomic(p, cells_csv(cells).as_bytes())?;
    }
    emit(s.out.as_deref(), &json)?;
    if report.converged {
        Ok(Status::Ok)
    } else {
        eprintln!("cell iteration did not reach a fixed point in {} rounds", report.iterations);
        Ok(Status::NotConverged)
    }
}

/// 5 for any descent failure, else 6 for any broken hypothesis, else 7 for
/// anything inconclusive.
pub fn lasalle_status(audit_holds: bool, verdicts: &[Verdict]) -> Status {
    let any = |f: fn(&Verdict) -> bool| verdicts.iter().any(f);
    if !audit_holds || any(|v| matches!(v, Verdict::ViolatedDescent)) {
        Status::DescentViolation
    } else if any(|v| matches!(v, Verdict::LeftG { .. } | Verdict::LeftGc { .. } | Verdict::Diverged { .. })) {
        Status::HypothesisFailure
    } else if any(|v| matches!(v, Verdict::Inconclusive)) {
        Status::Inconclusive
    } else {
        Status::Ok
    }
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Ok => "converged",
        Status::DescentViolation => "violated_descent",
        Status::HypothesisFailure => "hypothesis_failure",
        Status::Inconclusive => "inconclusive",
        _ => "error",
    }
}

fn lasalle(a: LasalleArgs) -> CliResult<Status> {
    let (sys, s) = setup(&a.common)?;
    let g = region(&a.region, &sys)?;
    let x0s = if a.x0.is_empty() {
        vec![initial_point(None, &sys)?]
    } else {
        a.x0.iter()
            .map(|t| parse_point(t, sys.system.dim()))
            .collect::<CliResult<Vec<_>>>()?
    };
    let opts = s.lasalle();
    let gc = parse_box(&a.gc_lower, &a.gc_upper, ("gc-lower", "gc-upper"))?;
    let (report, extension) = match (a.extension, gc) {
        (Some(n), Some(gc)) => (
            lasalle_extension_analyze(&sys.system, &g, &gc, n, &x0s, &opts)?,
            Some((BoxDef::from_bounds(&gc), n)),
        ),
        _ => (lasalle_analyze(&sys.system, &g, &x0s, &opts)?, None),
    };
    let status = lasalle_status(report.audit.holds(), &report.verdicts());
    let dto = LasalleDto::new(&sys.name, &report, BoxDef::from_bounds(&g), extension, status_name(status));
    emit(s.out.as_deref(), &to_json(&dto))?;
    if s.out.is_some() {
        print!("{}", dto.summary());
    } else {
        eprint!("{}", dto.summary());
    }
    Ok(status)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lasalle_exit_precedence() {
        let conv = Verdict::Converged { entry: 0 };
        assert_eq!(lasalle_status(true, &[conv]), Status::Ok);
        assert_eq!(lasalle_status(true, &[conv, Verdict::Inconclusive]), Status::Inconclusive);
        assert_eq!(
            lasalle_status(true, &[Verdict::Inconclusive, Verdict::LeftG { step: 3 }]),
            Status::HypothesisFailure
        );
        assert_eq!(
            lasalle_status(true, &[Verdict::Diverged { step: 9 }, Verdict::ViolatedDescent]),
            Status::DescentViolation
        );
        assert_eq!(lasalle_status(false, &[]), Status::DescentViolation);
    }

    #[test]
    fn lists_accept_negative_values() {
        assert_eq!(parse_list("x0", "-1, 0.5").unwrap(), vec![-1.0, 0.5]);
        assert!(parse_list("x0", "1,,2").is_err());
    }
}
