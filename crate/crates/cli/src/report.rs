//! Report bodies. Field order is declaration order and floats are printed in
//! shortest round-trip form, so equal inputs give byte-identical files.

use std::fmt::Write;

use lasalle_core::lasalle::{LasalleReport, Mode, Verdict};
use lasalle_core::{CellSet, Trajectory};
use serde::Serialize;

use crate::system_file::BoxDef;

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report types always serialise");
    out.push(b'\n');
    out
}

fn num(out: &mut String, v: f64) {
    let mut buf = ryu::Buffer::new();
    out.push_str(buf.format(v));
}

/// `n,x1,…,xm`, one row per point.
pub fn trajectory_csv(traj: &Trajectory, dim: usize) -> String {
    let mut out = String::from("n");
    for i in 1..=dim {
        write!(out, ",x{i}").unwrap();
    }
    out.push('\n');
    for (n, p) in traj.points.iter().enumerate() {
        write!(out, "{n}").unwrap();
        for v in p.coords() {
            out.push(',');
            num(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

/// `cell,c1,…,cm,h1,…,hm`: linear index, centre and half-widths per cell.
pub fn cells_csv(set: &CellSet) -> String {
    let m = set.grid().dim();
    let mut out = String::from("cell");
    for i in 1..=m {
        write!(out, ",c{i}").unwrap();
    }
    for i in 1..=m {
        write!(out, ",h{i}").unwrap();
    }
    out.push('\n');
    for (idx, b) in set.iter().zip(set.cell_bounds()) {
        write!(out, "{idx}").unwrap();
        for v in b.center().coords() {
            out.push(',');
            num(&mut out, *v);
        }
        for i in 0..m {
            out.push(',');
            num(&mut out, b.width(i) / 2.0);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
pub struct GridDto {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct CellSetDto {
    pub grid: GridDto,
    pub count: usize,
    /// Row-major linear indices, axis 0 slowest.
    pub cells: Vec<usize>,
}

impl From<&CellSet> for CellSetDto {
    fn from(set: &CellSet) -> Self {
        let g = set.grid();
        CellSetDto {
            grid: GridDto {
                lower: g.bounds().lower().to_vec(),
                upper: g.bounds().upper().to_vec(),
                counts: g.counts().to_vec(),
            },
            count: set.len(),
            cells: set.iter().collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FixedPointsReport {
    pub system: String,
    pub search: BoxDef,
    pub grid: usize,
    pub tol: f64,
    pub continuum: bool,
    pub points: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ApproachDto {
    pub sup_distance: f64,
    pub approaches: bool,
    pub visits: Vec<usize>,
    pub is_minimal: bool,
}

#[derive(Debug, Serialize)]
pub struct LimitPointReport {
    pub system: String,
    pub mode: &'static str,
    pub x0: Vec<f64>,
    pub steps: usize,
    pub burn_in: f64,
    pub representatives: Vec<Vec<f64>>,
    pub period: Option<usize>,
    pub classification: &'static str,
    pub detail: Option<String>,
    pub tail_radius: f64,
    pub invariant: bool,
    pub approach: ApproachDto,
}

#[derive(Debug, Serialize)]
pub struct CellIterationReport {
    pub system: String,
    pub mode: &'static str,
    pub iterations: usize,
    pub converged: bool,
    pub result: CellSetDto,
}

#[derive(Debug, Serialize)]
pub struct AuditDto {
    pub holds: bool,
    pub samples: usize,
    pub violations: usize,
    pub max_delta: f64,
    pub worst_point: Option<Vec<f64>>,
    pub worst_delta: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TrajectoryDto {
    pub x0: Vec<f64>,
    pub verdict: &'static str,
    /// Entry index for `converged`, failure step for `left_G`, `left_G_c`
    /// and `diverged`.
    pub step: Option<usize>,
    pub c: Option<f64>,
    pub tail_min: Option<f64>,
    pub tail_variance: Option<f64>,
    pub target_cells: Option<Vec<usize>>,
}

#[derive(Debug, Serialize)]
pub struct LasalleDto {
    pub system: String,
    pub mode: &'static str,
    pub g: BoxDef,
    pub g_c: Option<BoxDef>,
    pub settle_step: Option<usize>,
    pub assumption: &'static str,
    pub audit: AuditDto,
    pub zero_tol: f64,
    pub grid: GridDto,
    pub e_cells: Option<Vec<usize>>,
    pub m_cells: Option<Vec<usize>>,
    pub m_converged: bool,
    pub trajectories: Vec<TrajectoryDto>,
    pub status: &'static str,
}

pub const CONTINUITY_ASSUMPTION: &str =
    "T and V are assumed continuous on G; only non-finite evaluations are detected";

pub fn verdict_name(v: &Verdict) -> (&'static str, Option<usize>) {
    match *v {
        Verdict::Converged { entry } => ("converged", Some(entry)),
        Verdict::ViolatedDescent => ("violated_descent", None),
        Verdict::LeftG { step } => ("left_G", Some(step)),
        Verdict::LeftGc { step } => ("left_G_c", Some(step)),
        Verdict::Diverged { step } => ("diverged", Some(step)),
        Verdict::Inconclusive => ("inconclusive", None),
    }
}

impl LasalleDto {
    pub fn new(
        system: &str,
        report: &LasalleReport,
        g: BoxDef,
        extension: Option<(BoxDef, usize)>,
        status: &'static str,
    ) -> Self {
        let grid = CellSetDto::from(&report.domain_cells).grid;
        let (g_c, settle_step) = match extension {
            Some((b, n)) => (Some(b), Some(n)),
            None => (None, None),
        };
        let worst = report.audit.worst();
        LasalleDto {
            system: system.to_string(),
            mode: match report.mode {
                Mode::Classic => "classic",
                Mode::Extension => "extension",
            },
            g,
            g_c,
            settle_step,
            assumption: CONTINUITY_ASSUMPTION,
            audit: AuditDto {
                holds: report.audit.holds(),
                samples: report.audit.samples,
                violations: report.audit.violations.len(),
                max_delta: report.audit.max_delta,
                worst_point: worst.map(|w| w.point.coords().to_vec()),
                worst_delta: worst.map(|w| w.delta),
            },
            zero_tol: report.zero_tol,
            grid,
            e_cells: report.e_cells.as_ref().map(|s| s.iter().collect()),
            m_cells: report.m_cells.as_ref().map(|s| s.iter().collect()),
            m_converged: report.m_converged,
            trajectories: report
                .trajectories
                .iter()
                .map(|t| {
                    let (verdict, step) = verdict_name(&t.verdict);
                    TrajectoryDto {
                        x0: t.x0.coords().to_vec(),
                        verdict,
                        step,
                        c: t.c,
                        tail_min: t.tail_min,
                        tail_variance: t.tail_variance,
                        target_cells: t.target_cells.as_ref().map(|s| s.iter().collect()),
                    }
                })
                .collect(),
            status,
        }
    }

    /// Plain-text summary, one line per initial point.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} ({} certificate): {}", self.system, self.mode, self.status).unwrap();
        if self.audit.holds {
            writeln!(out, "descent: holds on {} samples, max dV {}", self.audit.samples, self.audit.max_delta).unwrap();
        } else {
            writeln!(
                out,
                "descent: {} of {} samples violate, worst dV {:?} at {:?}",
                self.audit.violations,
                self.audit.samples,
                self.audit.worst_delta.unwrap_or(f64::NAN),
                self.audit.worst_point.as_deref().unwrap_or(&[]),
            )
            .unwrap();
        }
        if let (Some(e), Some(m)) = (&self.e_cells, &self.m_cells) {
            writeln!(out, "E: {} cells, M: {} cells", e.len(), m.len()).unwrap();
        }
        for t in &self.trajectories {
            write!(out, "x0 {:?}: {}", t.x0, t.verdict).unwrap();
            if let Some(s) = t.step {
                write!(out, " at step {s}").unwrap();
            }
            if let Some(c) = t.c {
                write!(out, ", c = {c}").unwrap();
            }
            if let Some(cells) = &t.target_cells {
                write!(out, ", {} target cells", cells.len()).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lasalle_core::{Point, SystemSpec};

    #[test]
    fn trajectory_csv_has_one_row_per_point() {
        let sys = SystemSpec::parse(&["0.5*x1", "x2"], &[]).unwrap();
        let t = sys.trajectory(&Point::new(vec![1.0, 0.1]), 2, 1e12).unwrap();
        assert_eq!(trajectory_csv(&t, 2), "n,x1,x2\n0,1.0,0.1\n1,0.5,0.1\n2,0.25,0.1\n");
    }

    #[test]
    fn json_keeps_field_order() {
        let dto = GridDto {
            lower: vec![0.0],
            upper: vec![1.0],
            counts: vec![4],
        };
        let text = String::from_utf8(to_json(&dto)).unwrap();
        let (l, u, c) = (text.find("lower"), text.find("upper"), text.find("counts"));
        assert!(l < u && u < c);
        assert!(text.ends_with("}\n"));
    }
}
