//! LaSalle certificates for discrete-time systems.
//!
//! Given `V` with `V(T(x)) - V(x) ≤ 0` on `G`, every motion that stays in `G`
//! and is bounded converges to `M ∩ V⁻¹(c)`, where `M` is the largest
//! invariant set in `E = {x ∈ Ḡ : V(T(x)) - V(x) = 0}` and `c` is the limit
//! of `V` along the motion. The extended form only asks the motion to stay in
//! a compact `G_c ⊂ G` from some step `N` on, with `E` taken inside `G_c`.
//!
//! Everything here is sampled: the descent audit and `E` come from a
//! lattice in every grid cell, `M` from [`invariant_part`], and `c` from the
//! tail of the simulated motion. `E` and `M` are outer covers, so a
//! `Converged` verdict errs on the safe side. Continuity of `T` and `V` is
//! assumed, not checked.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::cellset::{for_each_sample, invariant_part, CellSet, GridSpec, ImageConfig, DEFAULT_CELLS_PER_AXIS};
use crate::dynsys::{converges_to, Bounds, Point, SystemSpec, DEFAULT_R_MAX};
use crate::error::{Error, Result};

/// `V(T(x)) - V(x)`.
pub fn delta_v(sys: &SystemSpec, x: &Point) -> Result<f64> {
    if !sys.has_lyapunov() {
        return Err(Error::MissingLyapunov);
    }
    let y = sys.step(x)?;
    let d = sys.lyapunov_at(y.coords())? - sys.lyapunov_at(x.coords())?;
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::NonFinite)
    }
}

fn delta_raw(sys: &SystemSpec, x: &[f64], y: &mut [f64]) -> Result<f64> {
    sys.apply(x, y);
    Ok(sys.lyapunov_at(y)? - sys.lyapunov_at(x)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub point: Point,
    /// `ΔV` at the point; NaN or infinite values count as violations.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentAudit {
    pub samples: usize,
    /// Every sample with `ΔV > descent_tol` or a non-finite `ΔV`.
    pub violations: Vec<Violation>,
    /// Largest finite `ΔV` seen.
    pub max_delta: f64,
}

impl DescentAudit {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    /// The sample with the largest `ΔV`; non-finite values rank first.
    pub fn worst(&self) -> Option<&Violation> {
        self.violations.iter().max_by(|a, b| {
            let key = |v: &Violation| if v.delta.is_finite() { v.delta } else { f64::INFINITY };
            key(a).total_cmp(&key(b))
        })
    }
}

/// Evaluates `ΔV` on the sample lattice of every cell of `g`.
pub fn check_descent(sys: &SystemSpec, g: &CellSet, samples_per_cell: usize, descent_tol: f64) -> Result<DescentAudit> {
    if !sys.has_lyapunov() {
        return Err(Error::MissingLyapunov);
    }
    sys.check_dim(g.grid().dim())?;
    let mut audit = DescentAudit {
        samples: 0,
        violations: Vec::new(),
        max_delta: f64::NEG_INFINITY,
    };
    let mut y = vec![0.0; sys.dim()];
    for cell in g.cell_bounds() {
        let mut err = None;
        for_each_sample(&cell, samples_per_cell, |x| match delta_raw(sys, x, &mut y) {
            Ok(d) => {
                audit.samples += 1;
                if d.is_finite() {
                    audit.max_delta = audit.max_delta.max(d);
                }
                if !d.is_finite() || d > descent_tol {
                    audit.violations.push(Violation {
                        point: Point::new(x.to_vec()),
                        delta: d,
                    });
                }
            }
            Err(e) => err = Some(e),
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(audit)
}

/// Cells of `g` holding a sample with `|ΔV| ≤ zero_tol`.
pub fn e_set(sys: &SystemSpec, g: &CellSet, zero_tol: f64, samples_per_cell: usize) -> Result<CellSet> {
    select_cells(sys, g, samples_per_cell, |x, y| {
        let d = delta_raw(sys, x, y)?;
        Ok(libm::fabs(d) <= zero_tol)
    })
}

/// Cells of `g` meeting the level set `V = c`: a sample lies within
/// `level_tol` of `c`, or the samples straddle `c`.
pub fn level_set_cells(sys: &SystemSpec, c: f64, level_tol: f64, g: &CellSet, samples_per_cell: usize) -> Result<CellSet> {
    if !sys.has_lyapunov() {
        return Err(Error::MissingLyapunov);
    }
    sys.check_dim(g.grid().dim())?;
    let mut keep = Vec::new();
    for (idx, cell) in g.iter().zip(g.cell_bounds()) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut near = false;
        for_each_sample(&cell, samples_per_cell, |x| {
            if let Ok(v) = sys.lyapunov_at(x) {
                if v.is_finite() {
                    near |= libm::fabs(v - c) <= level_tol;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        });
        if near || (lo <= c && c <= hi) {
            keep.push(idx);
        }
    }
    CellSet::from_linear(g.grid().clone(), keep)
}

fn select_cells(
    sys: &SystemSpec,
    g: &CellSet,
    samples_per_cell: usize,
    mut pred: impl FnMut(&[f64], &mut [f64]) -> Result<bool>,
) -> Result<CellSet> {
    if !sys.has_lyapunov() {
        return Err(Error::MissingLyapunov);
    }
    sys.check_dim(g.grid().dim())?;
    let mut y = vec![0.0; sys.dim()];
    let mut keep = Vec::new();
    for (idx, cell) in g.iter().zip(g.cell_bounds()) {
        let mut hit = false;
        let mut err = None;
        for_each_sample(&cell, samples_per_cell, |x| {
            if hit || err.is_some() {
                return;
            }
            match pred(x, &mut y) {
                Ok(h) => hit = h,
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if hit {
            keep.push(idx);
        }
    }
    CellSet::from_linear(g.grid().clone(), keep)
}

/// `1e-9 · (1 + max |V|)` over the sample lattice of `g`.
pub fn default_zero_tol(sys: &SystemSpec, g: &CellSet, samples_per_cell: usize) -> Result<f64> {
    let mut scale: f64 = 0.0;
    for cell in g.cell_bounds() {
        for_each_sample(&cell, samples_per_cell, |x| {
            if let Ok(v) = sys.lyapunov_at(x) {
                if v.is_finite() {
                    scale = scale.max(libm::fabs(v));
                }
            }
        });
    }
    Ok(1e-9 * (1.0 + scale))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LasalleOptions {
    pub cells_per_axis: usize,
    pub samples_per_cell: usize,
    pub n_total: usize,
    pub burn_in: f64,
    pub descent_tol: f64,
    /// `None` selects [`default_zero_tol`].
    pub zero_tol: Option<f64>,
    pub level_tol: f64,
    pub approach_tol: f64,
    pub r_max: f64,
    pub image: ImageConfig,
    /// `None` selects ten times the grid cell count.
    pub max_iters: Option<usize>,
}

impl Default for LasalleOptions {
    fn default() -> Self {
        LasalleOptions {
            cells_per_axis: DEFAULT_CELLS_PER_AXIS,
            samples_per_cell: 4,
            n_total: 10_000,
            burn_in: 0.8,
            descent_tol: 1e-12,
            zero_tol: None,
            level_tol: 1e-6,
            approach_tol: 1e-6,
            r_max: DEFAULT_R_MAX,
            image: ImageConfig::default(),
            max_iters: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Classic,
    Extension,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Within `approach_tol` of the target cells from `entry` on, covering the
    /// whole tail.
    Converged { entry: usize },
    ViolatedDescent,
    LeftG { step: usize },
    LeftGc { step: usize },
    Diverged { step: usize },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryReport {
    pub x0: Point,
    pub verdict: Verdict,
    /// Tail mean of `V`.
    pub c: Option<f64>,
    pub tail_min: Option<f64>,
    pub tail_variance: Option<f64>,
    /// `M ∩ V⁻¹(c)` cells.
    pub target_cells: Option<CellSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LasalleReport {
    pub mode: Mode,
    pub audit: DescentAudit,
    pub zero_tol: f64,
    /// Cells of `G` (or `G_c`) the analysis ran on.
    pub domain_cells: CellSet,
    /// Absent when the descent audit failed.
    pub e_cells: Option<CellSet>,
    pub m_cells: Option<CellSet>,
    pub m_converged: bool,
    pub trajectories: Vec<TrajectoryReport>,
}

impl LasalleReport {
    pub fn c_estimates(&self) -> Vec<Option<f64>> {
        self.trajectories.iter().map(|t| t.c).collect()
    }

    pub fn verdicts(&self) -> Vec<Verdict> {
        self.trajectories.iter().map(|t| t.verdict).collect()
    }
}

/// Checks the classic certificate on the box `g` for each initial point.
pub fn lasalle_analyze(sys: &SystemSpec, g: &Bounds, x0s: &[Point], opts: &LasalleOptions) -> Result<LasalleReport> {
    analyze(sys, g, None, x0s, opts)
}

/// Checks the extended certificate: motions must lie in `g_c` from step `n`
/// on, and `E` is taken inside `g_c`.
pub fn lasalle_extension_analyze(
    sys: &SystemSpec,
    g: &Bounds,
    g_c: &Bounds,
    n: usize,
    x0s: &[Point],
    opts: &LasalleOptions,
) -> Result<LasalleReport> {
    if !g_c.is_subset_of(g) {
        return Err(Error::NotContained("G_c must lie inside G"));
    }
    analyze(sys, g, Some((g_c, n)), x0s, opts)
}

fn analyze(
    sys: &SystemSpec,
    g: &Bounds,
    extension: Option<(&Bounds, usize)>,
    x0s: &[Point],
    opts: &LasalleOptions,
) -> Result<LasalleReport> {
    if !sys.has_lyapunov() {
        return Err(Error::MissingLyapunov);
    }
    sys.check_dim(g.dim())?;
    if !(0.0..1.0).contains(&opts.burn_in) {
        return Err(Error::InvalidArgument("burn-in fraction must lie in [0, 1)"));
    }
    let region = extension.map_or(g, |(gc, _)| gc);
    let grid = Arc::new(GridSpec::uniform(region.clone(), opts.cells_per_axis)?);
    let cells = CellSet::full(grid);
    let audit = check_descent(sys, &cells, opts.samples_per_cell, opts.descent_tol)?;
    let zero_tol = match opts.zero_tol {
        Some(z) => z,
        None => default_zero_tol(sys, &cells, opts.samples_per_cell)?,
    };
    let mode = if extension.is_some() { Mode::Extension } else { Mode::Classic };

    if !audit.holds() {
        let trajectories = x0s
            .iter()
            .map(|x0| TrajectoryReport {
                x0: x0.clone(),
                verdict: Verdict::ViolatedDescent,
                c: None,
                tail_min: None,
                tail_variance: None,
                target_cells: None,
            })
            .collect();
        return Ok(LasalleReport {
            mode,
            audit,
            zero_tol,
            domain_cells: cells,
            e_cells: None,
            m_cells: None,
            m_converged: false,
            trajectories,
        });
    }

    let e_cells = e_set(sys, &cells, zero_tol, opts.samples_per_cell)?;
    let (m_cells, m_converged) = if e_cells.is_empty() {
        (e_cells.clone(), true)
    } else {
        let m = invariant_part(sys, &e_cells, &opts.image, opts.max_iters)?;
        (m.cells, m.converged)
    };

    let mut trajectories = Vec::with_capacity(x0s.len());
    for x0 in x0s {
        trajectories.push(judge(sys, g, extension, x0, opts, &cells, &m_cells)?);
    }
    Ok(LasalleReport {
        mode,
        audit,
        zero_tol,
        domain_cells: cells,
        e_cells: Some(e_cells),
        m_cells: Some(m_cells),
        m_converged,
        trajectories,
    })
}

fn judge(
    sys: &SystemSpec,
    g: &Bounds,
    extension: Option<(&Bounds, usize)>,
    x0: &Point,
    opts: &LasalleOptions,
    cells: &CellSet,
    m_cells: &CellSet,
) -> Result<TrajectoryReport> {
    let mut report = TrajectoryReport {
        x0: x0.clone(),
        verdict: Verdict::Inconclusive,
        c: None,
        tail_min: None,
        tail_variance: None,
        target_cells: None,
    };
    let traj = sys.trajectory(x0, opts.n_total, opts.r_max)?;
    // the earliest broken hypothesis decides the verdict
    let left_g = traj.points.iter().position(|p| !g.contains(p.coords()));
    let left_gc = extension.and_then(|(gc, n)| {
        traj.points
            .iter()
            .skip(n)
            .position(|p| !gc.contains(p.coords()))
            .map(|k| n + k)
    });
    let failures = [
        left_gc.map(|step| Verdict::LeftGc { step }),
        left_g.map(|step| Verdict::LeftG { step }),
        traj.diverged_at.map(|step| Verdict::Diverged { step }),
    ];
    let first = failures.into_iter().flatten().min_by_key(|v| match v {
        Verdict::LeftGc { step } | Verdict::LeftG { step } | Verdict::Diverged { step } => *step,
        _ => usize::MAX,
    });
    if let Some(v) = first {
        report.verdict = v;
        return Ok(report);
    }
    let settle = extension.map_or(0, |(_, n)| n);
    if settle >= traj.len() {
        return Ok(report);
    }

    let values = traj
        .points
        .iter()
        .map(|p| sys.lyapunov_at(p.coords()))
        .collect::<Result<Vec<f64>>>()?;
    if values[settle.min(values.len() - 1)..]
        .windows(2)
        .any(|w| !(w[1] <= w[0] + opts.descent_tol))
    {
        report.verdict = Verdict::ViolatedDescent;
        return Ok(report);
    }

    let tail_start = traj.tail_start(1.0 - opts.burn_in).max(settle).min(values.len() - 1);
    let tail = &values[tail_start..];
    let count = tail.len() as f64;
    let c = tail.iter().sum::<f64>() / count;
    let tail_min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let tail_variance = tail.iter().map(|v| (v - c) * (v - c)).sum::<f64>() / count;
    report.c = Some(c);
    report.tail_min = Some(tail_min);
    report.tail_variance = Some(tail_variance);

    let level = level_set_cells(sys, c, opts.level_tol, cells, opts.samples_per_cell)?;
    let target = m_cells.intersection(&level);
    if !target.is_empty() {
        let conv = converges_to(&traj, &target, opts.approach_tol);
        if let Some(entry) = conv.entry_index.filter(|e| conv.converged && *e <= tail_start) {
            report.verdict = Verdict::Converged { entry };
        }
    }
    report.target_cells = Some(target);
    Ok(report)
}
