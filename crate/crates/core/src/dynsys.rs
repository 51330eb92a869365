//! Systems `x(n+1) = T(x(n))`, their motions and pointwise diagnostics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

use crate::error::{Error, Result};
use crate::expr::{CompiledExpr, Environment, Expr, Func};

/// Default divergence guard: a motion with `‖x‖∞` above this is unbounded.
pub const DEFAULT_R_MAX: f64 = 1e12;

/// Name of the `i`-th state variable (zero based), i.e. `x1`, `x2`, ...
pub fn state_var(i: usize) -> String {
    format!("x{}", i + 1)
}

fn state_names(m: usize) -> Vec<String> {
    (0..m).map(state_var).collect()
}

pub fn linf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| {
        let a = libm::fabs(*v);
        if a.is_nan() || a > acc {
            a
        } else {
            acc
        }
    })
}

pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| {
        let d = libm::fabs(x - y);
        if d.is_nan() || d > acc {
            d
        } else {
            acc
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        linf_norm(&self.0)
    }

    pub fn distance(&self, other: &Point) -> f64 {
        linf_distance(&self.0, &other.0)
    }

    /// Bitwise equality, so that `-0.0 != 0.0` and `NaN == NaN`.
    pub fn bitwise_eq(&self, other: &Point) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl From<f64> for Point {
    fn from(v: f64) -> Self {
        Point(vec![v])
    }
}

impl Index<usize> for Point {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Closed axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidBounds);
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidBounds);
        }
        Ok(Bounds { lower, upper })
    }

    /// The interval `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Bounds::new(vec![lo], vec![hi])
    }

    /// The cube `[lo, hi]^m`.
    pub fn cube(m: usize, lo: f64, hi: f64) -> Result<Self> {
        Bounds::new(vec![lo; m], vec![hi; m])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).fold(0.0, f64::max)
    }

    pub fn center(&self) -> Point {
        Point(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| l + (u - l) * 0.5)
                .collect(),
        )
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn is_subset_of(&self, other: &Bounds) -> bool {
        self.dim() == other.dim()
            && (0..self.dim())
                .all(|i| other.lower[i] <= self.lower[i] && self.upper[i] <= other.upper[i])
    }

    /// ℓ∞ distance from `x` to the box; zero exactly on the closed box.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let mut d: f64 = 0.0;
        for (i, v) in x.iter().enumerate() {
            let gap = if *v < self.lower[i] {
                self.lower[i] - v
            } else if *v > self.upper[i] {
                v - self.upper[i]
            } else {
                0.0
            };
            d = d.max(gap);
        }
        d
    }
}

/// A first-order system `x(n+1) = T(x(n))` on `ℝ^m`, with an optional
/// Lyapunov candidate `V` and an optional domain box `G`.
///
/// Components see the state as `x1..xm` plus the declared parameters.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    components: Vec<Expr>,
    params: Environment,
    lyapunov: Option<Expr>,
    domain: Option<Bounds>,
    param_names: Vec<String>,
    param_values: Vec<f64>,
    compiled: Vec<CompiledExpr>,
    compiled_lyapunov: Option<CompiledExpr>,
}

impl SystemSpec {
    pub fn new(components: Vec<Expr>, params: Environment) -> Result<Self> {
        let m = components.len();
        if m == 0 {
            return Err(Error::InvalidArgument("a system needs at least one component"));
        }
        let state = state_names(m);
        for (name, _) in params.iter() {
            if state.iter().any(|s| s == name) || Func::from_name(name).is_some() || !is_identifier(name)
            {
                return Err(Error::InvalidName(name.into()));
            }
        }
        let param_names: Vec<String> = params.iter().map(|(k, _)| k.into()).collect();
        let param_values: Vec<f64> = params.iter().map(|(_, v)| v).collect();
        let compiled = components
            .iter()
            .map(|c| c.compile(&state, &param_names))
            .collect::<Result<Vec<_>>>()?;
        Ok(SystemSpec {
            components,
            params,
            lyapunov: None,
            domain: None,
            param_names,
            param_values,
            compiled,
            compiled_lyapunov: None,
        })
    }

    /// Parses each component; parameters are given as `(name, value)` pairs.
    pub fn parse(components: &[&str], params: &[(&str, f64)]) -> Result<Self> {
        let exprs = components
            .iter()
            .map(|c| crate::expr::parse(c).map_err(Error::from))
            .collect::<Result<Vec<_>>>()?;
        let env = Environment::from_pairs(params.iter().map(|(k, v)| (*k, *v)))?;
        SystemSpec::new(exprs, env)
    }

    pub fn with_lyapunov(mut self, v: Expr) -> Result<Self> {
        self.compiled_lyapunov = Some(v.compile(&state_names(self.dim()), &self.param_names)?);
        self.lyapunov = Some(v);
        Ok(self)
    }

    pub fn with_lyapunov_str(self, v: &str) -> Result<Self> {
        let e = crate::expr::parse(v)?;
        self.with_lyapunov(e)
    }

    pub fn with_domain(mut self, domain: Bounds) -> Result<Self> {
        self.check_dim(domain.dim())?;
        self.domain = Some(domain);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn params(&self) -> &Environment {
        &self.params
    }

    pub fn lyapunov(&self) -> Option<&Expr> {
        self.lyapunov.as_ref()
    }

    pub fn domain(&self) -> Option<&Bounds> {
        self.domain.as_ref()
    }

    pub fn has_lyapunov(&self) -> bool {
        self.lyapunov.is_some()
    }

    pub(crate) fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }

    /// Writes `T(x)` into `out`. Every component reads the same input state.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.compiled) {
            *o = c.eval(x, &self.param_values);
        }
    }

    /// One step of the map. A non-finite result is returned as is; callers
    /// treat it as divergence.
    pub fn step(&self, x: &Point) -> Result<Point> {
        self.check_dim(x.dim())?;
        let mut out = vec![0.0; self.dim()];
        self.apply(x.coords(), &mut out);
        Ok(Point(out))
    }

    /// `V(x)`; the caller guarantees the dimension.
    pub fn lyapunov_at(&self, x: &[f64]) -> Result<f64> {
        let v = self.compiled_lyapunov.as_ref().ok_or(Error::MissingLyapunov)?;
        Ok(v.eval(x, &self.param_values))
    }

    /// Motion from `x0` for `steps` steps. Stops before the first point that
    /// is non-finite or has `‖x‖∞ > r_max`, recording its index.
    pub fn trajectory(&self, x0: &Point, steps: usize, r_max: f64) -> Result<Trajectory> {
        self.check_dim(x0.dim())?;
        let escaped = |p: &[f64]| {
            let n = linf_norm(p);
            !n.is_finite() || n > r_max || p.iter().any(|v| !v.is_finite())
        };
        if escaped(x0.coords()) {
            return Ok(Trajectory {
                points: Vec::new(),
                diverged_at: Some(0),
            });
        }
        let mut points = Vec::with_capacity(steps + 1);
        points.push(x0.clone());
        let mut next = vec![0.0; self.dim()];
        for n in 1..=steps {
            self.apply(points[n - 1].coords(), &mut next);
            if escaped(&next) {
                return Ok(Trajectory {
                    points,
                    diverged_at: Some(n),
                });
            }
            points.push(Point(next.clone()));
        }
        Ok(Trajectory {
            points,
            diverged_at: None,
        })
    }
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A finite motion `x(0), …, x(N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<Point>,
    /// Index of the first step whose point was unbounded or non-finite.
    pub diverged_at: Option<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<&Point> {
        self.points.last()
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    /// Index where a tail covering the last `fraction` of the points starts.
    pub fn tail_start(&self, fraction: f64) -> usize {
        let len = self.points.len();
        let keep = libm::ceil(fraction.clamp(0.0, 1.0) * len as f64) as usize;
        len - keep.clamp(1.min(len), len)
    }
}

/// A scalar recurrence `u(n+1) = g(u(n), …, u(n-k+1))`.
///
/// In `g`, `u1` is the newest value `u(n)` and `uk` the oldest `u(n-k+1)`.
#[derive(Debug, Clone)]
pub struct HigherOrderSpec {
    pub order: usize,
    pub g: Expr,
    pub params: Environment,
    /// `u(0), …, u(k-1)`, oldest first.
    pub initial: Vec<f64>,
}

/// Rewrites a k-th order scalar recurrence as a k-dimensional first-order
/// system with `x1(n) = u(n)`, …, `xk(n) = u(n-k+1)`:
///
/// ```text
/// x1(n+1) = g(x1(n), …, xk(n))
/// xi(n+1) = x(i-1)(n)          for i = 2..k
/// ```
///
/// Returns the system and its initial state `(u(k-1), …, u(0))`.
pub fn lift(h: &HigherOrderSpec) -> Result<(SystemSpec, Point)> {
    let k = h.order;
    if k == 0 {
        return Err(Error::InvalidArgument("recurrence order must be positive"));
    }
    if h.initial.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: h.initial.len(),
        });
    }
    let u_index = |name: &str| -> Option<usize> {
        let digits = name.strip_prefix('u')?;
        if digits.starts_with('0') {
            return None;
        }
        digits.parse::<usize>().ok()
    };
    for name in h.g.free_variables() {
        if h.params.contains(&name) {
            continue;
        }
        match u_index(&name) {
            Some(j) if (1..=k).contains(&j) => {}
            Some(j) => {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: j,
                })
            }
            None => return Err(Error::Unbound(name)),
        }
    }
    let first = h.g.rename_vars(&|name| {
        if h.params.contains(name) {
            return None;
        }
        u_index(name).map(|j| state_var(j - 1))
    });
    let mut components = Vec::with_capacity(k);
    components.push(first);
    for i in 1..k {
        components.push(Expr::var(state_var(i - 1)));
    }
    let sys = SystemSpec::new(components, h.params.clone())?;
    let x0 = Point(h.initial.iter().rev().copied().collect());
    Ok((sys, x0))
}

/// Result of a fixed-point scan.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoints {
    /// Points with `‖T(x) - x‖∞ ≤ tol`, in lexicographic order.
    pub points: Vec<Point>,
    /// Set when fixed points fill a region rather than being isolated (more
    /// than half the scan cells qualify, or refinement cannot isolate them).
    pub continuum: bool,
}

const REFINE_FRONTIER_CAP: usize = 64;
const REFINE_MAX_DEPTH: usize = 200;

/// Scans `search` with `grid_n` cells per axis for fixed points of `T`.
///
/// A cell is a candidate when every residual component `T_i(x) - x_i`
/// changes sign (or vanishes) over its corners, or when a corner or the centre
/// already has residual within `tol`. Candidates are refined by bisecting
/// every axis and keeping the qualifying halves; results closer than
/// `10·tol` are merged.
pub fn find_fixed_points(
    sys: &SystemSpec,
    search: &Bounds,
    grid_n: usize,
    tol: f64,
) -> Result<FixedPoints> {
    sys.check_dim(search.dim())?;
    if grid_n == 0 {
        return Err(Error::InvalidArgument("grid_n must be positive"));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive"));
    }
    if let Some(domain) = sys.domain() {
        if !search.is_subset_of(domain) {
            return Err(Error::NotContained("search box must lie inside the system domain"));
        }
    }
    let m = sys.dim();
    let total = grid_n.pow(m as u32);
    let mut candidates = Vec::new();
    let mut idx = vec![0usize; m];
    for _ in 0..total {
        let cell = Bounds {
            lower: (0..m).map(|i| grid_edge(search, i, grid_n, idx[i])).collect(),
            upper: (0..m).map(|i| grid_edge(search, i, grid_n, idx[i] + 1)).collect(),
        };
        if qualifies(sys, &cell, tol) {
            candidates.push(cell);
        }
        increment(&mut idx, grid_n);
    }

    let mut continuum = candidates.len() > total / 2 && candidates.len() > (1usize << m);
    let mut found: Vec<(f64, Point)> = Vec::new();
    if continuum {
        for cell in &candidates {
            let c = cell.center();
            let r = residual(sys, c.coords());
            if r <= tol {
                found.push((r, c));
            }
        }
    } else {
        for cell in candidates {
            let (pts, crowded) = refine_cell(sys, cell, tol);
            continuum |= crowded;
            found.extend(pts);
        }
    }

    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut kept: Vec<Point> = Vec::new();
    for (_, p) in found {
        if kept.iter().all(|q| q.distance(&p) > 10.0 * tol) {
            kept.push(p);
        }
    }
    kept.sort_by(|a, b| {
        a.coords()
            .iter()
            .zip(b.coords())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    Ok(FixedPoints {
        points: kept,
        continuum,
    })
}

fn grid_edge(b: &Bounds, axis: usize, n: usize, i: usize) -> f64 {
    if i == 0 {
        b.lower[axis]
    } else if i == n {
        b.upper[axis]
    } else {
        b.lower[axis] + b.width(axis) * (i as f64 / n as f64)
    }
}

fn increment(idx: &mut [usize], n: usize) {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < n {
            return;
        }
        idx[d] = 0;
    }
}

fn residual_vec(sys: &SystemSpec, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    sys.apply(x, &mut out);
    for (o, v) in out.iter_mut().zip(x) {
        *o -= v;
    }
    out
}

fn residual(sys: &SystemSpec, x: &[f64]) -> f64 {
    let r = residual_vec(sys, x);
    if r.iter().any(|v| v.is_nan()) {
        return f64::INFINITY;
    }
    linf_norm(&r)
}

fn corners(cell: &Bounds) -> impl Iterator<Item = Vec<f64>> + '_ {
    let m = cell.dim();
    (0..1usize << m).map(move |mask| {
        (0..m)
            .map(|i| if mask >> i & 1 == 1 { cell.upper[i] } else { cell.lower[i] })
            .collect()
    })
}

fn qualifies(sys: &SystemSpec, cell: &Bounds, tol: f64) -> bool {
    let m = cell.dim();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    let mut small = false;
    for c in corners(cell).chain(core::iter::once(cell.center().into_coords())) {
        let r = residual_vec(sys, &c);
        if r.iter().any(|v| !v.is_finite()) {
            continue;
        }
        small |= linf_norm(&r) <= tol;
        for i in 0..m {
            lo[i] = lo[i].min(r[i]);
            hi[i] = hi[i].max(r[i]);
        }
    }
    small || (0..m).all(|i| lo[i] <= 0.0 && 0.0 <= hi[i])
}

fn best_sample(sys: &SystemSpec, b: &Bounds) -> (f64, Vec<f64>) {
    corners(b)
        .chain(core::iter::once(b.center().into_coords()))
        .map(|c| (residual(sys, &c), c))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("a box has at least one corner")
}

fn refine_cell(sys: &SystemSpec, cell: Bounds, tol: f64) -> (Vec<(f64, Point)>, bool) {
    let m = cell.dim();
    let cap = REFINE_FRONTIER_CAP << m;
    let mut frontier = vec![cell];
    let mut done = Vec::new();
    let mut crowded = false;
    for _ in 0..REFINE_MAX_DEPTH {
        if frontier.is_empty() {
            break;
        }
        let mut next = Vec::new();
        for b in core::mem::take(&mut frontier) {
            let mid: Vec<f64> = (0..m).map(|i| b.lower[i] + b.width(i) * 0.5).collect();
            let exhausted = (0..m).all(|i| mid[i] <= b.lower[i] || mid[i] >= b.upper[i]);
            if exhausted || (b.diameter() <= tol && best_sample(sys, &b).0 <= tol) {
                done.push(b);
                continue;
            }
            for mask in 0..1usize << m {
                let mut lower = Vec::with_capacity(m);
                let mut upper = Vec::with_capacity(m);
                for i in 0..m {
                    if mask >> i & 1 == 1 {
                        lower.push(mid[i]);
                        upper.push(b.upper[i]);
                    } else {
                        lower.push(b.lower[i]);
                        upper.push(mid[i]);
                    }
                }
                let child = Bounds { lower, upper };
                if qualifies(sys, &child, tol) {
                    next.push(child);
                }
            }
        }
        if next.len() > cap {
            crowded = true;
            done.extend(next);
            break;
        }
        frontier = next;
    }
    done.extend(frontier);

    let mut out = Vec::new();
    for b in done {
        let (r, c) = best_sample(sys, &b);
        if r <= tol {
            out.push((r, Point(c)));
        }
    }
    (out, crowded)
}

/// A periodic cycle found in a motion tail.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicCycle {
    pub period: usize,
    /// The last `period` points of the motion, in time order.
    pub cycle: Vec<Point>,
}

/// Least `p ≤ max_period` with `‖x(n+p) - x(n)‖∞ ≤ tol` across the tail
/// holding the last `tail_fraction` of the points.
pub fn detect_period(
    traj: &Trajectory,
    tail_fraction: f64,
    tol: f64,
    max_period: usize,
) -> Option<PeriodicCycle> {
    if traj.diverged() || traj.is_empty() {
        return None;
    }
    let start = traj.tail_start(tail_fraction);
    let tail = &traj.points[start..];
    (1..=max_period)
        .take_while(|p| *p < tail.len())
        .find(|p| (0..tail.len() - p).all(|n| tail[n + p].distance(&tail[n]) <= tol))
        .map(|p| PeriodicCycle {
            period: p,
            cycle: traj.points[traj.len() - p..].to_vec(),
        })
}

/// Sets with an ℓ∞ distance `ρ(x, S) = inf_{y∈S} ‖x - y‖∞`.
pub trait SetDistance {
    /// `None` when the set is empty.
    fn distance_from(&self, x: &[f64]) -> Option<f64>;
}

impl SetDistance for [Point] {
    fn distance_from(&self, x: &[f64]) -> Option<f64> {
        self.iter()
            .map(|p| linf_distance(x, p.coords()))
            .reduce(f64::min)
    }
}

impl SetDistance for Vec<Point> {
    fn distance_from(&self, x: &[f64]) -> Option<f64> {
        self.as_slice().distance_from(x)
    }
}

pub fn distance_to_set<S: SetDistance + ?Sized>(x: &Point, set: &S) -> Result<f64> {
    set.distance_from(x.coords()).ok_or(Error::EmptySet)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Convergence {
    pub converged: bool,
    /// First index from which every point lies within `tol` of the set.
    pub entry_index: Option<usize>,
}

/// Whether the motion ends inside the `tol`-neighbourhood of `set` and stays
/// there from some index on. Diverged or empty motions never converge.
pub fn converges_to<S: SetDistance + ?Sized>(traj: &Trajectory, set: &S, tol: f64) -> Convergence {
    let not = Convergence {
        converged: false,
        entry_index: None,
    };
    if traj.diverged() || traj.is_empty() {
        return not;
    }
    let mut entry = None;
    for (n, p) in traj.points.iter().enumerate().rev() {
        match set.distance_from(p.coords()) {
            Some(d) if d <= tol => entry = Some(n),
            _ => break,
        }
    }
    match entry {
        Some(_) => Convergence {
            converged: true,
            entry_index: entry,
        },
        None => not,
    }
}
