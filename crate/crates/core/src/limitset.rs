//! Limit sets `Ω(x)` of single points, estimated from the tail of a motion.

use alloc::string::String;
use alloc::vec::Vec;

use crate::cellset::{image_matching, is_invariantly_connected_finite, CellSet};
use crate::dynsys::{detect_period, linf_distance, Point, SetDistance, SystemSpec, Trajectory, DEFAULT_R_MAX};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitSetOptions {
    pub n_total: usize,
    /// Fraction of the motion discarded as transient.
    pub burn_in: f64,
    pub cluster_tol: f64,
    pub max_period: usize,
    pub r_max: f64,
}

impl Default for LimitSetOptions {
    fn default() -> Self {
        LimitSetOptions {
            n_total: 10_000,
            burn_in: 0.8,
            cluster_tol: 1e-6,
            max_period: 64,
            r_max: DEFAULT_R_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitSetEstimate {
    /// Cluster centres of the tail, in order of first appearance.
    pub representatives: Vec<Point>,
    /// Set only when the tail is periodic with one representative per phase.
    pub period: Option<usize>,
    pub covering_cells: Option<CellSet>,
    /// Largest distance from a tail point to its nearest representative.
    pub tail_radius: f64,
}

/// Estimates `Ω(x0)` from the last `1 - burn_in` of an `n_total`-step motion.
///
/// Tail points are clustered greedily in time order: a point joins the first
/// cluster whose centre is within `cluster_tol`, otherwise it opens a new one.
/// Clusters whose centres end up within `2·cluster_tol` are then merged.
pub fn omega_of_point(sys: &SystemSpec, x0: &Point, opts: &LimitSetOptions) -> Result<LimitSetEstimate> {
    if !(opts.cluster_tol > 0.0) {
        return Err(Error::InvalidArgument("cluster tolerance must be positive"));
    }
    if !(0.0..1.0).contains(&opts.burn_in) {
        return Err(Error::InvalidArgument("burn-in fraction must lie in [0, 1)"));
    }
    let traj = sys.trajectory(x0, opts.n_total, opts.r_max)?;
    if let Some(step) = traj.diverged_at {
        return Err(Error::Unbounded { step });
    }
    estimate_from_trajectory(&traj, opts)
}

pub fn estimate_from_trajectory(traj: &Trajectory, opts: &LimitSetOptions) -> Result<LimitSetEstimate> {
    if let Some(step) = traj.diverged_at {
        return Err(Error::Unbounded { step });
    }
    if traj.is_empty() {
        return Err(Error::EmptySet);
    }
    let tail_fraction = 1.0 - opts.burn_in;
    let start = traj.tail_start(tail_fraction);
    let tail = &traj.points[start..];

    let mut clusters = cluster(tail, opts.cluster_tol);
    loop {
        let merged = merge_close(&mut clusters, 2.0 * opts.cluster_tol);
        if !merged {
            break;
        }
    }
    let representatives: Vec<Point> = clusters.iter().map(Cluster::center).collect();
    let tail_radius = tail
        .iter()
        .map(|p| representatives.distance_from(p.coords()).unwrap_or(0.0))
        .fold(0.0, f64::max);

    let period = detect_period(traj, tail_fraction, opts.cluster_tol, opts.max_period)
        .map(|c| c.period)
        .filter(|p| *p == representatives.len());

    Ok(LimitSetEstimate {
        representatives,
        period,
        covering_cells: None,
        tail_radius,
    })
}

struct Cluster {
    sum: Vec<f64>,
    count: usize,
}

impl Cluster {
    fn new(p: &Point) -> Self {
        Cluster {
            sum: p.coords().to_vec(),
            count: 1,
        }
    }

    fn center(&self) -> Point {
        Point::new(self.sum.iter().map(|s| s / self.count as f64).collect())
    }

    fn absorb(&mut self, other: Cluster) {
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        self.count += other.count;
    }
}

fn cluster(tail: &[Point], tol: f64) -> Vec<Cluster> {
    let mut clusters: Vec<(Point, Cluster)> = Vec::new();
    for p in tail {
        match clusters.iter_mut().find(|(leader, _)| leader.distance(p) <= tol) {
            Some((_, c)) => {
                for (a, b) in c.sum.iter_mut().zip(p.coords()) {
                    *a += b;
                }
                c.count += 1;
            }
            None => clusters.push((p.clone(), Cluster::new(p))),
        }
    }
    clusters.into_iter().map(|(_, c)| c).collect()
}

fn merge_close(clusters: &mut Vec<Cluster>, sep: f64) -> bool {
    for i in 0..clusters.len() {
        for j in i + 1..clusters.len() {
            let (a, b) = (clusters[i].center(), clusters[j].center());
            if a.distance(&b) <= sep {
                let c = clusters.remove(j);
                clusters[i].absorb(c);
                return true;
            }
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    FixedPoint,
    PeriodicOrbit(usize),
    Unresolved(String),
}

/// Fixed point for a single representative with `‖T(r) - r‖∞ ≤ tol`;
/// periodic orbit when the representatives form one `T`-cycle; unresolved
/// otherwise.
pub fn classify(est: &LimitSetEstimate, sys: &SystemSpec, tol: f64) -> Result<Classification> {
    let reps = &est.representatives;
    if reps.is_empty() {
        return Ok(Classification::Unresolved("empty estimate".into()));
    }
    if reps.len() == 1 {
        let r = &reps[0];
        return Ok(if sys.step(r)?.distance(r) <= tol {
            Classification::FixedPoint
        } else {
            Classification::Unresolved("single representative is not a fixed point".into())
        });
    }
    Ok(match is_invariantly_connected_finite(sys, reps, tol) {
        Ok(true) => Classification::PeriodicOrbit(reps.len()),
        Ok(false) => Classification::Unresolved("not invariantly connected".into()),
        Err(Error::NotInvariant) => Classification::Unresolved("representatives are not invariant".into()),
        Err(e) => return Err(e),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproachReport {
    /// `sup ρ(x(n), A)` over the tail.
    pub sup_distance: f64,
    pub approaches: bool,
    /// Tail visits to the `tol`-ball of each candidate point.
    pub visits: Vec<usize>,
    /// Candidate points visited at least [`MIN_VISITS`] times.
    pub minimal: Vec<Point>,
    /// Every candidate point is visited often enough.
    pub is_minimal: bool,
}

pub const MIN_VISITS: usize = 3;

/// Checks that the tail approaches `candidate` within `tol`, and which
/// candidate points are actually needed (visited at least [`MIN_VISITS`]
/// times in the tail).
pub fn verify_approach(traj: &Trajectory, candidate: &[Point], tol: f64, tail_fraction: f64) -> Result<ApproachReport> {
    if candidate.is_empty() {
        return Err(Error::EmptySet);
    }
    if traj.is_empty() {
        return Err(Error::EmptySet);
    }
    let tail = &traj.points[traj.tail_start(tail_fraction)..];
    let sup_distance = tail
        .iter()
        .map(|p| candidate.distance_from(p.coords()).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let visits: Vec<usize> = candidate
        .iter()
        .map(|r| tail.iter().filter(|p| linf_distance(p.coords(), r.coords()) <= tol).count())
        .collect();
    let minimal: Vec<Point> = candidate
        .iter()
        .zip(&visits)
        .filter(|(_, v)| **v >= MIN_VISITS)
        .map(|(r, _)| r.clone())
        .collect();
    Ok(ApproachReport {
        sup_distance,
        approaches: !traj.diverged() && sup_distance <= tol,
        is_minimal: minimal.len() == candidate.len(),
        visits,
        minimal,
    })
}

/// `T` maps the representatives into themselves and each one has a
/// representative preimage, all within `tol`.
pub fn omega_invariance_check(est: &LimitSetEstimate, sys: &SystemSpec, tol: f64) -> Result<bool> {
    let reps = &est.representatives;
    if reps.is_empty() {
        return Ok(false);
    }
    let Some(targets) = image_matching(sys, reps, tol)? else {
        return Ok(false);
    };
    let mut hit = alloc::vec![false; reps.len()];
    for t in targets {
        hit[t] = true;
    }
    Ok(hit.into_iter().all(|h| h))
}
