//! Cell covers of compact regions and the set map `H ↦ T(H)`.
//!
//! A [`GridSpec`] tiles a box with closed cells. A [`CellSet`] is a set of
//! those cells, stored by linear index (row-major, axis 0 slowest, so the
//! order of linear indices is the lexicographic order of multi-indices).
//!
//! Images are outer approximations. For each cell, `T` is sampled on a
//! regular lattice that includes the corners and the centre; the cells whose
//! interior meets the bounding box of the sampled images are hit, and the hit
//! box is dilated by the configured [`Padding`]. A bounding box that is flat
//! along an axis hits the cells it touches on that axis instead.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::dynsys::{linf_distance, Bounds, Point, SetDistance, SystemSpec};
use crate::error::{Error, Result};

/// Default number of cells per axis.
pub const DEFAULT_CELLS_PER_AXIS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    bounds: Bounds,
    counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(bounds: Bounds, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != bounds.dim() {
            return Err(Error::DimensionMismatch {
                expected: bounds.dim(),
                found: counts.len(),
            });
        }
        if counts.contains(&0) {
            return Err(Error::InvalidGrid("cell counts must be positive"));
        }
        if (0..bounds.dim()).any(|i| !(bounds.width(i) > 0.0)) {
            return Err(Error::InvalidGrid("grid box must have positive width on every axis"));
        }
        let total = counts.iter().try_fold(1usize, |acc, c| acc.checked_mul(*c));
        if total.is_none() {
            return Err(Error::InvalidGrid("too many cells"));
        }
        Ok(GridSpec { bounds, counts })
    }

    pub fn uniform(bounds: Bounds, cells_per_axis: usize) -> Result<Self> {
        let m = bounds.dim();
        GridSpec::new(bounds, vec![cells_per_axis; m])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn cell_count(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn cell_width(&self, axis: usize) -> f64 {
        self.bounds.width(axis) / self.counts[axis] as f64
    }

    /// Coordinate of the `i`-th grid plane along `axis`; planes 0 and `n` are
    /// exactly the box faces.
    pub fn edge(&self, axis: usize, i: usize) -> f64 {
        let n = self.counts[axis];
        let lo = self.bounds.lower()[axis];
        if i == 0 {
            lo
        } else if i >= n {
            self.bounds.upper()[axis]
        } else {
            lo + self.bounds.width(axis) * (i as f64 / n as f64)
        }
    }

    pub fn linear(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.counts)
            .fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn multi(&self, mut linear: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            out[d] = linear % self.counts[d];
            linear /= self.counts[d];
        }
        out
    }

    pub fn cell_bounds(&self, linear: usize) -> Bounds {
        let idx = self.multi(linear);
        let lower = (0..self.dim()).map(|d| self.edge(d, idx[d])).collect();
        let upper = (0..self.dim()).map(|d| self.edge(d, idx[d] + 1)).collect();
        Bounds::new(lower, upper).expect("grid cells are well formed")
    }

    /// Inclusive range of cells along `axis` meeting `[a, b]`: cells whose
    /// interior meets `(a, b)` when `a < b`, cells touching `a` when `a == b`.
    fn axis_range(&self, axis: usize, a: f64, b: f64) -> Option<(usize, usize)> {
        let n = self.counts[axis];
        let (lo, hi) = if a < b {
            (
                partition_point(n, |i| self.edge(axis, i + 1) <= a),
                partition_point(n, |i| self.edge(axis, i) < b),
            )
        } else if a == b {
            (
                partition_point(n, |i| self.edge(axis, i + 1) < a),
                partition_point(n, |i| self.edge(axis, i) <= a),
            )
        } else {
            return None;
        };
        (hi > lo).then(|| (lo, hi - 1))
    }

    /// Index box of the cells meeting `b` (see [`GridSpec::axis_range`]).
    fn index_box(&self, lower: &[f64], upper: &[f64]) -> Option<IndexBox> {
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            let (a, b) = self.axis_range(d, lower[d], upper[d])?;
            lo.push(a);
            hi.push(b);
        }
        Some(IndexBox { lo, hi })
    }
}

/// First `i` in `0..n` for which `pred` is false (`pred` is monotone).
fn partition_point(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Product of inclusive index ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
struct IndexBox {
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl IndexBox {
    fn dilate(&self, radius: &[usize], counts: &[usize]) -> IndexBox {
        IndexBox {
            lo: self.lo.iter().zip(radius).map(|(l, r)| l.saturating_sub(*r)).collect(),
            hi: self
                .hi
                .iter()
                .zip(radius)
                .zip(counts)
                .map(|((h, r), n)| (h + r).min(n - 1))
                .collect(),
        }
    }

    fn for_each(&self, grid: &GridSpec, mut f: impl FnMut(usize)) {
        let mut idx = self.lo.clone();
        loop {
            f(grid.linear(&idx));
            let mut d = idx.len();
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                if idx[d] < self.hi[d] {
                    idx[d] += 1;
                    break;
                }
                idx[d] = self.lo[d];
            }
        }
    }
}

/// A finite union of closed grid cells.
#[derive(Debug, Clone)]
pub struct CellSet {
    grid: Arc<GridSpec>,
    cells: BTreeSet<usize>,
}

impl PartialEq for CellSet {
    fn eq(&self, other: &Self) -> bool {
        self.cells == other.cells && self.same_grid(other)
    }
}

impl CellSet {
    pub fn empty(grid: Arc<GridSpec>) -> Self {
        CellSet {
            grid,
            cells: BTreeSet::new(),
        }
    }

    pub fn full(grid: Arc<GridSpec>) -> Self {
        let cells = (0..grid.cell_count()).collect();
        CellSet { grid, cells }
    }

    /// Builds a set from linear indices; out-of-range indices are an error.
    pub fn from_linear(grid: Arc<GridSpec>, cells: impl IntoIterator<Item = usize>) -> Result<Self> {
        let total = grid.cell_count();
        let cells: BTreeSet<usize> = cells.into_iter().collect();
        if cells.iter().any(|c| *c >= total) {
            return Err(Error::InvalidArgument("cell index outside the grid"));
        }
        Ok(CellSet { grid, cells })
    }

    pub fn from_multi<'a>(grid: Arc<GridSpec>, cells: impl IntoIterator<Item = &'a [usize]>) -> Result<Self> {
        let mut out = BTreeSet::new();
        for m in cells {
            if m.len() != grid.dim() || m.iter().zip(grid.counts()).any(|(i, n)| i >= n) {
                return Err(Error::InvalidArgument("cell index outside the grid"));
            }
            out.insert(grid.linear(m));
        }
        Ok(CellSet { grid, cells: out })
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn same_grid(&self, other: &CellSet) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, linear: usize) -> bool {
        self.cells.contains(&linear)
    }

    /// Linear indices in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().copied()
    }

    pub fn multi_indices(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        self.cells.iter().map(|c| self.grid.multi(*c))
    }

    pub fn cell_bounds(&self) -> impl Iterator<Item = Bounds> + '_ {
        self.cells.iter().map(|c| self.grid.cell_bounds(*c))
    }

    /// Whether the closed region covered by the set contains `x`.
    pub fn covers(&self, x: &[f64]) -> bool {
        self.distance_from(x) == Some(0.0)
    }

    fn with_cells(&self, cells: BTreeSet<usize>) -> CellSet {
        CellSet {
            grid: self.grid.clone(),
            cells,
        }
    }

    fn check_grid(&self, other: &CellSet) {
        assert!(self.same_grid(other), "cell sets live on different grids");
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        self.check_grid(other);
        self.with_cells(self.cells.union(&other.cells).copied().collect())
    }

    pub fn intersection(&self, other: &CellSet) -> CellSet {
        self.check_grid(other);
        self.with_cells(self.cells.intersection(&other.cells).copied().collect())
    }

    pub fn difference(&self, other: &CellSet) -> CellSet {
        self.check_grid(other);
        self.with_cells(self.cells.difference(&other.cells).copied().collect())
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.check_grid(other);
        self.cells.is_subset(&other.cells)
    }

    /// Cells are closed, so a cell set is its own closure.
    pub fn closure(&self) -> CellSet {
        self.clone()
    }

    /// Cells whose 2m face neighbours all belong to the set. Cells on the rim
    /// of the grid have a neighbour outside the grid and are never interior.
    pub fn interior(&self) -> CellSet {
        let counts = self.grid.counts();
        let cells = self
            .cells
            .iter()
            .copied()
            .filter(|c| {
                let mut idx = self.grid.multi(*c);
                (0..idx.len()).all(|d| {
                    let i = idx[d];
                    if i == 0 || i + 1 >= counts[d] {
                        return false;
                    }
                    idx[d] = i - 1;
                    let below = self.cells.contains(&self.grid.linear(&idx));
                    idx[d] = i + 1;
                    let above = self.cells.contains(&self.grid.linear(&idx));
                    idx[d] = i;
                    below && above
                })
            })
            .collect();
        self.with_cells(cells)
    }

    pub fn boundary(&self) -> CellSet {
        self.difference(&self.interior())
    }
}

impl SetDistance for CellSet {
    fn distance_from(&self, x: &[f64]) -> Option<f64> {
        self.cells
            .iter()
            .map(|c| self.grid.cell_bounds(*c).distance(x))
            .reduce(f64::min)
    }
}

/// All cells meeting `b`: with positive overlap along every axis where `b`
/// has positive width, touching along axes where `b` is flat.
pub fn cells_of_box(grid: &Arc<GridSpec>, b: &Bounds) -> Result<CellSet> {
    if b.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            found: b.dim(),
        });
    }
    let ib = grid.index_box(b.lower(), b.upper()).ok_or(Error::DisjointBox)?;
    let mut cells = BTreeSet::new();
    ib.for_each(grid, |c| {
        cells.insert(c);
    });
    Ok(CellSet {
        grid: grid.clone(),
        cells,
    })
}

/// How far a sampled cell image is dilated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Padding {
    None,
    /// Fixed dilation by this many cells on every axis.
    Cells(usize),
    /// Rigorous radius `⌈L·diam∞(cell) / (2·width_axis)⌉` cells per axis for
    /// an ℓ∞ Lipschitz constant `L`.
    Lipschitz(f64),
}

impl Default for Padding {
    fn default() -> Self {
        Padding::Cells(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageConfig {
    /// Lattice subdivisions per axis inside each cell: nodes sit at `j/k` of
    /// the width for `j = 0..=k`, and the centre is always added. Values
    /// below one are treated as one (corners and centre only).
    pub samples_per_axis: usize,
    pub padding: Padding,
}

impl Default for ImageConfig {
    fn default() -> Self {
        ImageConfig {
            samples_per_axis: 4,
            padding: Padding::default(),
        }
    }
}

impl ImageConfig {
    pub fn unpadded(samples_per_axis: usize) -> Self {
        ImageConfig {
            samples_per_axis,
            padding: Padding::None,
        }
    }
}

/// Calls `f` on each lattice sample of `cell`: `(k+1)^m` nodes including the
/// corners, plus the centre when `k` is odd.
pub(crate) fn for_each_sample(cell: &Bounds, k: usize, mut f: impl FnMut(&[f64])) {
    let k = k.max(1);
    let m = cell.dim();
    let coord = |d: usize, j: usize| {
        let (lo, hi) = (cell.lower()[d], cell.upper()[d]);
        if j == 0 {
            lo
        } else if j == k {
            hi
        } else {
            lo + (hi - lo) * (j as f64 / k as f64)
        }
    };
    let mut idx = vec![0usize; m];
    let mut x: Vec<f64> = (0..m).map(|d| coord(d, 0)).collect();
    'outer: loop {
        f(&x);
        let mut d = m;
        loop {
            if d == 0 {
                break 'outer;
            }
            d -= 1;
            if idx[d] < k {
                idx[d] += 1;
                x[d] = coord(d, idx[d]);
                break;
            }
            idx[d] = 0;
            x[d] = coord(d, 0);
        }
    }
    if k % 2 == 1 {
        let c: Vec<f64> = (0..m)
            .map(|d| {
                let (lo, hi) = (cell.lower()[d], cell.upper()[d]);
                lo + (hi - lo) * 0.5
            })
            .collect();
        f(&c);
    }
}

/// Sampled image of one cell as index boxes.
#[derive(Debug, Clone, PartialEq)]
struct CellImage {
    raw: Option<IndexBox>,
    padded: Option<IndexBox>,
    escaped: bool,
}

/// Per-cell images of a fixed system and configuration, computed on demand.
struct ImageMap<'a> {
    sys: &'a SystemSpec,
    grid: Arc<GridSpec>,
    config: ImageConfig,
    cache: BTreeMap<usize, CellImage>,
}

impl<'a> ImageMap<'a> {
    fn new(sys: &'a SystemSpec, grid: Arc<GridSpec>, config: ImageConfig) -> Result<Self> {
        sys.check_dim(grid.dim())?;
        if let Padding::Lipschitz(l) = config.padding {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::InvalidArgument("Lipschitz bound must be finite and non-negative"));
            }
        }
        Ok(ImageMap {
            sys,
            grid,
            config,
            cache: BTreeMap::new(),
        })
    }

    fn image(&mut self, cell: usize) -> &CellImage {
        if !self.cache.contains_key(&cell) {
            let img = self.compute(cell);
            self.cache.insert(cell, img);
        }
        &self.cache[&cell]
    }

    fn compute(&self, cell: usize) -> CellImage {
        let grid = &*self.grid;
        let m = grid.dim();
        let bounds = grid.cell_bounds(cell);
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        let mut escaped = false;
        let mut any = false;
        let mut y = vec![0.0; m];
        for_each_sample(&bounds, self.config.samples_per_axis, |x| {
            self.sys.apply(x, &mut y);
            if y.iter().any(|v| !v.is_finite()) {
                escaped = true;
                return;
            }
            if !grid.bounds().contains(&y) {
                escaped = true;
            }
            any = true;
            for d in 0..m {
                lo[d] = lo[d].min(y[d]);
                hi[d] = hi[d].max(y[d]);
            }
        });
        if !any {
            return CellImage {
                raw: None,
                padded: None,
                escaped,
            };
        }
        let gb = grid.bounds();
        let mut clipped = true;
        for d in 0..m {
            let (gl, gu) = (gb.lower()[d], gb.upper()[d]);
            if hi[d] < gl || lo[d] > gu {
                clipped = false;
            }
            lo[d] = lo[d].max(gl);
            hi[d] = hi[d].min(gu);
        }
        let raw = if clipped { grid.index_box(&lo, &hi) } else { None };
        let radius: Vec<usize> = match self.config.padding {
            Padding::None => vec![0; m],
            Padding::Cells(r) => vec![r; m],
            Padding::Lipschitz(l) => {
                let diam = bounds.diameter();
                (0..m)
                    .map(|d| libm::ceil(l * diam / (2.0 * grid.cell_width(d))) as usize)
                    .collect()
            }
        };
        let padded = raw.as_ref().map(|b| b.dilate(&radius, grid.counts()));
        CellImage {
            raw,
            padded,
            escaped,
        }
    }

    fn image_of_set(&mut self, cells: &BTreeSet<usize>) -> (BTreeSet<usize>, BTreeSet<usize>, bool) {
        let grid = self.grid.clone();
        let mut padded = BTreeSet::new();
        let mut raw = BTreeSet::new();
        let mut escaped = false;
        for c in cells {
            let img = self.image(*c);
            escaped |= img.escaped;
            if let Some(b) = &img.raw {
                b.for_each(&grid, |i| {
                    raw.insert(i);
                });
            }
            if let Some(b) = &img.padded {
                b.for_each(&grid, |i| {
                    padded.insert(i);
                });
            }
        }
        (padded, raw, escaped)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterImage {
    /// Padded image cells.
    pub cells: CellSet,
    /// Cells hit by the sampled images before padding.
    pub raw: CellSet,
    /// Some sample left the grid box or was non-finite.
    pub escaped: bool,
}

pub fn outer_image(sys: &SystemSpec, set: &CellSet, config: &ImageConfig) -> Result<OuterImage> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut map = ImageMap::new(sys, set.grid.clone(), *config)?;
    let (padded, raw, escaped) = map.image_of_set(&set.cells);
    Ok(OuterImage {
        cells: set.with_cells(padded),
        raw: set.with_cells(raw),
        escaped,
    })
}

/// `T(S) ⊆ S` for the outer image, with no sample escaping the grid.
pub fn is_positively_invariant(sys: &SystemSpec, set: &CellSet, config: &ImageConfig) -> Result<bool> {
    let img = outer_image(sys, set, config)?;
    Ok(!img.escaped && img.cells.is_subset(set))
}

/// `T(S) = S` for the outer image: positively invariant and every cell of `S`
/// is hit by the image.
pub fn is_invariant(sys: &SystemSpec, set: &CellSet, config: &ImageConfig) -> Result<bool> {
    let img = outer_image(sys, set, config)?;
    Ok(!img.escaped && img.cells.is_subset(set) && set.is_subset(&img.cells))
}

/// Outcome of a set iteration run to a fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct SetIteration {
    pub cells: CellSet,
    pub iterations: usize,
    /// False when the iteration cap was reached while the set still changed.
    pub converged: bool,
}

fn default_cap(grid: &GridSpec) -> usize {
    grid.cell_count().saturating_mul(10)
}

/// Outer approximation of the largest invariant set inside `e`.
///
/// Starting from `M₀ = E`, keeps the cells of `M_k` whose image meets `M_k`
/// and that are hit by the image of `M_k`, until nothing changes. The
/// survivors are the cells with both a successor and a predecessor in the
/// set, the cell analogue of lying on a two-sided motion inside `E`.
/// `max_iters` defaults to ten times the number of grid cells.
pub fn invariant_part(
    sys: &SystemSpec,
    e: &CellSet,
    config: &ImageConfig,
    max_iters: Option<usize>,
) -> Result<SetIteration> {
    if e.is_empty() {
        return Err(Error::EmptySet);
    }
    let grid = e.grid.clone();
    let cap = max_iters.unwrap_or_else(|| default_cap(&grid));
    let mut map = ImageMap::new(sys, grid.clone(), *config)?;

    // cell graph restricted to E
    let members: Vec<usize> = e.iter().collect();
    let pos = |c: usize| members.binary_search(&c).ok();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); members.len()];
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); members.len()];
    for (a, c) in members.iter().enumerate() {
        if let Some(b) = map.image(*c).padded.clone() {
            b.for_each(&grid, |d| {
                if let Some(t) = pos(d) {
                    succ[a].push(t);
                    pred[t].push(a);
                }
            });
        }
    }

    let mut alive = vec![true; members.len()];
    let mut out_deg: Vec<usize> = succ.iter().map(Vec::len).collect();
    let mut in_deg: Vec<usize> = pred.iter().map(Vec::len).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cap {
        let doomed: Vec<usize> = (0..members.len())
            .filter(|i| alive[*i] && (out_deg[*i] == 0 || in_deg[*i] == 0))
            .collect();
        if doomed.is_empty() {
            converged = true;
            break;
        }
        iterations += 1;
        for &i in &doomed {
            alive[i] = false;
        }
        for &i in &doomed {
            for &t in &succ[i] {
                in_deg[t] -= 1;
            }
            for &s in &pred[i] {
                out_deg[s] -= 1;
            }
        }
    }
    if !converged {
        converged = (0..members.len()).all(|i| !alive[i] || (out_deg[i] > 0 && in_deg[i] > 0));
    }
    let cells = members
        .iter()
        .zip(&alive)
        .filter(|(_, a)| **a)
        .map(|(c, _)| *c)
        .collect();
    Ok(SetIteration {
        cells: e.with_cells(cells),
        iterations,
        converged,
    })
}

/// The nested sequence `S₀ = H`, `S_{k+1} = T(S_k) ∩ S₀` of outer images.
///
/// When `H` is positively invariant the sequence is decreasing and its limit
/// approximates `∩ₙ Tⁿ(H)`. Yields `S₁, S₂, …`; the caller decides when to
/// stop.
pub struct NestedImages<'a> {
    map: ImageMap<'a>,
    base: CellSet,
    current: BTreeSet<usize>,
}

impl<'a> NestedImages<'a> {
    pub fn new(sys: &'a SystemSpec, h: &CellSet, config: &ImageConfig) -> Result<Self> {
        Ok(NestedImages {
            map: ImageMap::new(sys, h.grid.clone(), *config)?,
            base: h.clone(),
            current: h.cells.clone(),
        })
    }
}

impl Iterator for NestedImages<'_> {
    type Item = CellSet;

    fn next(&mut self) -> Option<CellSet> {
        let (img, _, _) = self.map.image_of_set(&self.current);
        self.current = img.intersection(&self.base.cells).copied().collect();
        Some(self.base.with_cells(self.current.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmegaMode {
    /// `H` was positively invariant: nested iteration `T(S_k) ∩ H`.
    Nested,
    /// Truncated tails `∩_{j≤J} ∪_{j≤n≤N} Tⁿ(H)`.
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaSet {
    pub cells: CellSet,
    pub mode: OmegaMode,
    pub iterations: usize,
    pub converged: bool,
}

/// Outer approximation of the limit set `Ω(H)`.
///
/// Positively invariant `H` takes the nested fast path, capped at ten times
/// the grid cell count. Otherwise the images `I_n = Tⁿ(H)` are iterated up to
/// `n_max` and `∩_{j=0}^{j_max} ∪_{n=j}^{n_max} I_n` is returned; the tails
/// decrease in `j`, so this is `∪_{n=j_max}^{n_max} I_n`. Any escape from the
/// grid aborts with [`Error::Unbounded`].
pub fn omega_of_set(
    sys: &SystemSpec,
    h: &CellSet,
    config: &ImageConfig,
    j_max: usize,
    n_max: usize,
) -> Result<OmegaSet> {
    if h.is_empty() {
        return Err(Error::EmptySet);
    }
    if j_max > n_max {
        return Err(Error::InvalidArgument("j_max must not exceed n_max"));
    }
    let mut map = ImageMap::new(sys, h.grid.clone(), *config)?;
    let (first, _, escaped) = map.image_of_set(&h.cells);
    if !escaped && first.is_subset(&h.cells) {
        let cap = default_cap(&h.grid);
        let mut iter = NestedImages {
            map,
            base: h.clone(),
            current: h.cells.clone(),
        };
        let mut prev = h.cells.clone();
        let mut iterations = 0;
        while iterations < cap {
            let next = iter.next().expect("nested iteration is endless");
            iterations += 1;
            debug_assert!(next.cells.is_subset(&prev));
            if next.cells == prev {
                return Ok(OmegaSet {
                    cells: next,
                    mode: OmegaMode::Nested,
                    iterations,
                    converged: true,
                });
            }
            prev = next.cells;
        }
        return Ok(OmegaSet {
            cells: h.with_cells(prev),
            mode: OmegaMode::Nested,
            iterations,
            converged: false,
        });
    }

    let mut current = h.cells.clone();
    let mut tail = if j_max == 0 { current.clone() } else { BTreeSet::new() };
    for n in 1..=n_max {
        let (next, _, escaped) = map.image_of_set(&current);
        if escaped {
            return Err(Error::Unbounded { step: n });
        }
        current = next;
        if n >= j_max {
            tail.extend(current.iter().copied());
        }
    }
    Ok(OmegaSet {
        cells: h.with_cells(tail),
        mode: OmegaMode::Truncated,
        iterations: n_max,
        converged: true,
    })
}

/// Whether the finite set `points` is invariantly connected, i.e. one
/// periodic motion.
///
/// Each point is matched to the nearest point of the set to its image.
/// Returns `Ok(false)` when the matching is not a permutation or splits into
/// several cycles, and [`Error::NotInvariant`] when some image is farther
/// than `tol` from every point.
pub fn is_invariantly_connected_finite(sys: &SystemSpec, points: &[Point], tol: f64) -> Result<bool> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    let targets = image_matching(sys, points, tol)?.ok_or(Error::NotInvariant)?;
    let n = points.len();
    let mut hit = vec![false; n];
    for t in &targets {
        if hit[*t] {
            return Ok(false);
        }
        hit[*t] = true;
    }
    let mut len = 1;
    let mut i = targets[0];
    while i != 0 {
        i = targets[i];
        len += 1;
        if len > n {
            return Ok(false);
        }
    }
    Ok(len == n)
}

/// For each point, the index of the point nearest to its image; `None` if some
/// image has no point within `tol`.
pub(crate) fn image_matching(sys: &SystemSpec, points: &[Point], tol: f64) -> Result<Option<Vec<usize>>> {
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let y = sys.step(p)?;
        let best = points
            .iter()
            .enumerate()
            .map(|(j, q)| (linf_distance(y.coords(), q.coords()), j))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match best {
            Some((d, j)) if d <= tol => out.push(j),
            _ => return Ok(None),
        }
    }
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(lo: f64, hi: f64, n: usize) -> Arc<GridSpec> {
        Arc::new(GridSpec::uniform(Bounds::interval(lo, hi).unwrap(), n).unwrap())
    }

    fn sys(c: &[&str]) -> SystemSpec {
        SystemSpec::parse(c, &[]).unwrap()
    }

    fn cells(s: &CellSet) -> Vec<usize> {
        s.iter().collect()
    }

    #[test]
    fn grid_validation() {
        let b = Bounds::interval(0.0, 1.0).unwrap();
        assert!(GridSpec::new(b.clone(), vec![0]).is_err());
        assert!(GridSpec::new(b, vec![2, 2]).is_err());
        assert!(GridSpec::uniform(Bounds::interval(1.0, 1.0).unwrap(), 4).is_err());
    }

    #[test]
    fn cells_tile_the_box() {
        let g = GridSpec::new(Bounds::new(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap(), vec![3, 7]).unwrap();
        assert_eq!(g.edge(0, 3), 1.0);
        assert_eq!(g.edge(1, 7), 3.0);
        for c in 0..g.cell_count() {
            assert_eq!(g.linear(&g.multi(c)), c);
            let b = g.cell_bounds(c);
            assert!(b.width(0) > 0.0 && b.width(1) > 0.0);
        }
    }

    #[test]
    fn cells_of_box_examples() {
        let g = grid1(0.0, 1.0, 4);
        let all = cells_of_box(&g, g.bounds()).unwrap();
        assert_eq!(all.len(), 4);
        let half = cells_of_box(&g, &Bounds::interval(0.0, 0.5).unwrap()).unwrap();
        assert_eq!(cells(&half), vec![0, 1]);
        let vertex = cells_of_box(&g, &Bounds::interval(0.5, 0.5).unwrap()).unwrap();
        assert_eq!(cells(&vertex), vec![1, 2]);
        assert_eq!(
            cells_of_box(&g, &Bounds::interval(2.0, 3.0).unwrap()),
            Err(Error::DisjointBox)
        );

        let g2 = Arc::new(GridSpec::uniform(Bounds::cube(2, 0.0, 1.0).unwrap(), 4).unwrap());
        let corner = cells_of_box(&g2, &Bounds::new(vec![0.5, 0.25], vec![0.5, 0.25]).unwrap()).unwrap();
        let idx: Vec<Vec<usize>> = corner.multi_indices().collect();
        assert_eq!(idx, vec![vec![1, 0], vec![1, 1], vec![2, 0], vec![2, 1]]);
        let edge = cells_of_box(&g2, &Bounds::new(vec![1.0, 0.0], vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(edge.len(), 4);
    }

    #[test]
    fn sample_lattice_contains_corners_and_centre() {
        let b = Bounds::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let mut pts = Vec::new();
        for_each_sample(&b, 1, |x| pts.push(x.to_vec()));
        assert_eq!(pts.len(), 5);
        assert!(pts.contains(&vec![1.0, 2.0]));
        assert!(pts.contains(&vec![0.5, 1.0]));
        let mut pts = Vec::new();
        for_each_sample(&b, 4, |x| pts.push(x.to_vec()));
        assert_eq!(pts.len(), 25);
        assert!(pts.contains(&vec![0.5, 1.0]));
    }

    #[test]
    fn identity_image_is_one_ring_dilation() {
        let g = grid1(0.0, 1.0, 16);
        let s = CellSet::from_linear(g.clone(), [5, 6, 10]).unwrap();
        let img = outer_image(&sys(&["x1"]), &s, &ImageConfig::default()).unwrap();
        assert_eq!(cells(&img.raw), vec![5, 6, 10]);
        assert_eq!(cells(&img.cells), vec![4, 5, 6, 7, 9, 10, 11]);
        assert!(!img.escaped);
    }

    #[test]
    fn contraction_image_is_halved() {
        let g = grid1(-1.0, 1.0, 16);
        let img = outer_image(&sys(&["0.5*x1"]), &CellSet::full(g.clone()), &ImageConfig::default()).unwrap();
        // [-0.5, 0.5] is cells 4..=11, one ring of padding adds 3 and 12
        assert_eq!(cells(&img.raw), (4..12).collect::<Vec<_>>());
        assert_eq!(cells(&img.cells), (3..13).collect::<Vec<_>>());
    }

    #[test]
    fn lipschitz_padding_radius() {
        let g = grid1(-1.0, 1.0, 16);
        let s = CellSet::from_linear(g, [8]).unwrap();
        let cfg = ImageConfig {
            samples_per_axis: 2,
            padding: Padding::Lipschitz(3.0),
        };
        // ceil(3 * w / (2 w)) = 2 cells
        let img = outer_image(&sys(&["x1"]), &s, &cfg).unwrap();
        assert_eq!(cells(&img.cells), vec![6, 7, 8, 9, 10]);
    }

    #[test]
    fn escape_is_flagged() {
        let g = grid1(0.0, 1.0, 8);
        let img = outer_image(&sys(&["x1 + 0.5"]), &CellSet::full(g.clone()), &ImageConfig::unpadded(2)).unwrap();
        assert!(img.escaped);
        assert_eq!(cells(&img.raw), vec![4, 5, 6, 7]);
        let img = outer_image(&sys(&["log(x1 - 2)"]), &CellSet::full(g), &ImageConfig::unpadded(2)).unwrap();
        assert!(img.escaped);
        assert!(img.raw.is_empty());
    }

    #[test]
    fn invariance_examples() {
        let g = grid1(-1.0, 1.0, 32);
        let all = CellSet::full(g.clone());
        let some = CellSet::from_linear(g.clone(), [3, 4, 20]).unwrap();
        let id = sys(&["x1"]);
        let zero = ImageConfig::unpadded(3);
        assert!(is_positively_invariant(&id, &some, &zero).unwrap());
        assert!(is_invariant(&id, &some, &zero).unwrap());

        let half = sys(&["0.5*x1"]);
        assert!(is_positively_invariant(&half, &all, &ImageConfig::default()).unwrap());
        assert!(!is_invariant(&half, &all, &ImageConfig::default()).unwrap());
        assert!(!is_positively_invariant(&sys(&["2*x1"]), &all, &ImageConfig::default()).unwrap());

        let quadratic = SystemSpec::parse(&["eps*x1^2 + (1-eps)*x1"], &[("eps", 0.5)]).unwrap();
        let unit = CellSet::full(grid1(0.0, 1.0, 256));
        assert!(is_invariant(&quadratic, &unit, &ImageConfig::default()).unwrap());
    }

    #[test]
    fn morphology_examples() {
        let g = Arc::new(GridSpec::uniform(Bounds::cube(2, 0.0, 1.0).unwrap(), 5).unwrap());
        let one = CellSet::from_multi(g.clone(), [&[2usize, 2][..]]).unwrap();
        assert!(one.interior().is_empty());
        assert_eq!(one.boundary(), one);

        let full = CellSet::full(g.clone());
        assert_eq!(full.interior().len(), 9);

        let block: Vec<[usize; 2]> = (1..4).flat_map(|i| (1..4).map(move |j| [i, j])).collect();
        let block = CellSet::from_multi(g.clone(), block.iter().map(|c| &c[..])).unwrap();
        let inner: Vec<Vec<usize>> = block.interior().multi_indices().collect();
        assert_eq!(inner, vec![vec![2, 2]]);
        assert_eq!(block.boundary().len(), 8);
        assert_eq!(block.closure(), block);
    }

    #[test]
    fn invariant_part_examples() {
        let g = grid1(-1.0, 1.0, 64);
        let half = sys(&["0.5*x1"]);
        let m = invariant_part(&half, &CellSet::full(g.clone()), &ImageConfig::unpadded(4), None).unwrap();
        assert!(m.converged);
        assert_eq!(cells(&m.cells), vec![31, 32]);

        let id = sys(&["x1"]);
        let e = CellSet::from_linear(g.clone(), [1, 2, 40]).unwrap();
        let m = invariant_part(&id, &e, &ImageConfig::unpadded(4), None).unwrap();
        assert_eq!(m.cells, e);

        let quadratic = SystemSpec::parse(&["eps*x1^2 + (1-eps)*x1"], &[("eps", 0.5)]).unwrap();
        let unit = CellSet::full(grid1(0.0, 1.0, 256));
        let m = invariant_part(&quadratic, &unit, &ImageConfig::default(), None).unwrap();
        assert_eq!(m.cells, unit);

        let shift = sys(&["x1 + 2"]);
        let m = invariant_part(&shift, &CellSet::full(grid1(0.0, 1.0, 16)), &ImageConfig::default(), None).unwrap();
        assert!(m.cells.is_empty());
    }

    #[test]
    fn invariant_part_reports_non_convergence() {
        let g = grid1(-1.0, 1.0, 64);
        let half = sys(&["0.5*x1"]);
        let m = invariant_part(&half, &CellSet::full(g), &ImageConfig::unpadded(4), Some(2)).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 2);
    }

    #[test]
    fn omega_of_set_examples() {
        let g = grid1(-1.0, 1.0, 64);
        let half = sys(&["0.5*x1"]);
        let om = omega_of_set(&half, &CellSet::full(g.clone()), &ImageConfig::unpadded(4), 10, 50).unwrap();
        assert_eq!(om.mode, OmegaMode::Nested);
        assert_eq!(cells(&om.cells), vec![31, 32]);

        let id = sys(&["x1"]);
        let h = CellSet::from_linear(g.clone(), [7, 8, 9]).unwrap();
        let om = omega_of_set(&id, &h, &ImageConfig::unpadded(4), 10, 50).unwrap();
        assert_eq!(om.cells, h);

        let quadratic = SystemSpec::parse(&["eps*x1^2 + (1-eps)*x1"], &[("eps", 0.5)]).unwrap();
        let unit = CellSet::full(grid1(0.0, 1.0, 256));
        let om = omega_of_set(&quadratic, &unit, &ImageConfig::default(), 10, 50).unwrap();
        assert_eq!(om.cells, unit);
    }

    #[test]
    fn omega_of_set_truncated_mode() {
        // H = [0.5, 1] is not positively invariant under 0.5x, but its images stay on the grid
        let g = grid1(-1.0, 1.0, 64);
        let h = cells_of_box(&g, &Bounds::interval(0.5, 1.0).unwrap()).unwrap();
        let om = omega_of_set(&sys(&["0.5*x1"]), &h, &ImageConfig::unpadded(4), 20, 40).unwrap();
        assert_eq!(om.mode, OmegaMode::Truncated);
        assert_eq!(cells(&om.cells), vec![32]);

        let err = omega_of_set(&sys(&["2*x1"]), &h, &ImageConfig::unpadded(4), 20, 40).unwrap_err();
        assert_eq!(err, Error::Unbounded { step: 1 });
    }

    #[test]
    fn nested_images_decrease() {
        let g = grid1(-1.0, 1.0, 256);
        let full = CellSet::full(g);
        let mut prev = full.clone();
        for s in NestedImages::new(&sys(&["0.5*x1"]), &full, &ImageConfig::default())
            .unwrap()
            .take(20)
        {
            assert!(s.is_subset(&prev));
            prev = s;
        }
    }

    #[test]
    fn invariantly_connected_examples() {
        let quarter = sys(&["-x2", "x1"]);
        let orbit: Vec<Point> = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
            .iter()
            .map(|c| Point::new(c.to_vec()))
            .collect();
        assert!(is_invariantly_connected_finite(&quarter, &orbit, 1e-12).unwrap());

        let quadratic = SystemSpec::parse(&["eps*x1^2 + (1-eps)*x1"], &[("eps", 0.5)]).unwrap();
        let pair = [Point::from(0.0), Point::from(1.0)];
        assert!(!is_invariantly_connected_finite(&quadratic, &pair, 1e-12).unwrap());

        assert!(is_invariantly_connected_finite(&sys(&["0.5*x1"]), &[Point::from(0.0)], 1e-12).unwrap());
        assert_eq!(
            is_invariantly_connected_finite(&sys(&["0.5*x1"]), &[Point::from(0.5)], 1e-12),
            Err(Error::NotInvariant)
        );
        // both points map onto 0: not a permutation
        let collapse = sys(&["0*x1"]);
        assert!(!is_invariantly_connected_finite(&collapse, &[Point::from(0.0), Point::from(1e-14)], 1e-12).unwrap());
    }

    #[test]
    fn cell_distance() {
        let g = Arc::new(GridSpec::uniform(Bounds::cube(2, 0.0, 2.0).unwrap(), 2).unwrap());
        let s = CellSet::from_multi(g, [&[1usize, 0][..]]).unwrap();
        assert_eq!(s.distance_from(&[0.0, 0.0]), Some(1.0));
        assert!(s.covers(&[1.0, 0.5]));
        assert!(!s.covers(&[0.5, 0.5]));
    }
}
