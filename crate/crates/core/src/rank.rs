//! Proximity ranks and rank-weighted leader selection.
//!
//! The rank `R(i,j)` of particle `j` with respect to `i` is `j`'s position in
//! the distance-ordered list around `i` (1-based), and `r(i,j) = R/(N-1)`.
//! Ties in distance are broken toward the smaller particle index, which makes
//! every operation deterministic; under continuous position laws ties have
//! probability zero.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernel::DiscreteKernelTable;

/// A point in at most two dimensions; 1D users leave the second coordinate 0.
pub type Point = [f64; 2];

/// Distance structure for particle positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    Euclidean { dim: usize },
    PeriodicLine { length: f64 },
}

impl Metric {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Metric::Euclidean { dim } => {
                if dim == 1 || dim == 2 {
                    Ok(())
                } else {
                    Err(Error::Domain(format!("euclidean dim must be 1 or 2, got {dim}")))
                }
            }
            Metric::PeriodicLine { length } => {
                if length > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Domain(format!("periodic length must be positive, got {length}")))
                }
            }
        }
    }

    /// A value monotone in the true distance, cheap to compare: squared
    /// distance for Euclidean, min-image absolute difference for the torus.
    pub fn cmp_dist(&self, a: &Point, b: &Point) -> f64 {
        match *self {
            Metric::Euclidean { dim: 1 } => {
                let d = a[0] - b[0];
                d * d
            }
            Metric::Euclidean { .. } => {
                let dx = a[0] - b[0];
                let dy = a[1] - b[1];
                dx * dx + dy * dy
            }
            Metric::PeriodicLine { length } => {
                let d = (a[0] - b[0]).rem_euclid(length);
                d.min(length - d)
            }
        }
    }

    /// True distance.
    pub fn dist(&self, a: &Point, b: &Point) -> f64 {
        match *self {
            Metric::Euclidean { .. } => self.cmp_dist(a, b).sqrt(),
            Metric::PeriodicLine { .. } => self.cmp_dist(a, b),
        }
    }
}

/// Distance-ordered view of the other particles around a focal one.
#[derive(Debug, Clone)]
pub struct RankView {
    pub focal: usize,
    /// Indices of the other particles, nearest first.
    pub order: Vec<usize>,
    /// True distances matching `order`, nondecreasing.
    pub distances: Vec<f64>,
}

/// Build the full distance-ordered view around particle `i`.
pub fn rank_view(positions: &[Point], metric: &Metric, i: usize) -> Result<RankView> {
    check_index(positions.len(), i)?;
    let mut pairs: Vec<(f64, usize)> = positions
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, p)| (metric.cmp_dist(&positions[i], p), j))
        .collect();
    pairs.sort_unstable_by(cmp_pair);
    let order: Vec<usize> = pairs.iter().map(|&(_, j)| j).collect();
    let distances = order
        .iter()
        .map(|&j| metric.dist(&positions[i], &positions[j]))
        .collect();
    Ok(RankView { focal: i, order, distances })
}

/// Rank of `j` with respect to `i`: returns `(R, r)` with `r = R/(N-1)`.
/// `rank_of(i, i)` is `(0, 0.0)` by convention and never arises in sampling.
pub fn rank_of(
    positions: &[Point],
    metric: &Metric,
    i: usize,
    j: usize,
) -> Result<(usize, f64)> {
    let n = positions.len();
    check_index(n, i)?;
    check_index(n, j)?;
    if n < 2 {
        return Err(Error::Domain("need at least 2 particles".into()));
    }
    if i == j {
        return Ok((0, 0.0));
    }
    let dj = metric.cmp_dist(&positions[i], &positions[j]);
    let mut closer = 0usize;
    for (k, p) in positions.iter().enumerate() {
        if k == i || k == j {
            continue;
        }
        let dk = metric.cmp_dist(&positions[i], p);
        if dk < dj || (dk == dj && k < j) {
            closer += 1;
        }
    }
    let r_int = closer + 1;
    Ok((r_int, r_int as f64 / (n - 1) as f64))
}

/// Interaction probabilities of `i` with every other particle:
/// `π_ij = weights[R(i,j)]`. Entry `i` is 0.
pub fn interaction_probabilities(
    positions: &[Point],
    metric: &Metric,
    table: &DiscreteKernelTable,
    i: usize,
) -> Result<Vec<f64>> {
    let n = positions.len();
    if table.n != n {
        return Err(Error::GridMismatch(format!(
            "table built for N = {}, positions have N = {n}",
            table.n
        )));
    }
    let mut probs = vec![0.0; n];
    for (j, prob) in probs.iter_mut().enumerate() {
        if j == i {
            continue;
        }
        let (r_int, _) = rank_of(positions, metric, i, j)?;
        *prob = table.weights[r_int - 1];
    }
    Ok(probs)
}

/// Pick a leader for follower `i`: draw a rank from the table with the
/// uniform variate `u`, then return the particle at that proximity rank.
/// Expected O(N) via quickselect.
pub fn select_leader(
    positions: &[Point],
    metric: &Metric,
    table: &DiscreteKernelTable,
    i: usize,
    u: f64,
) -> Result<usize> {
    let k = table.sample_rank(u);
    kth_nearest(positions, metric, i, k)
}

/// Full-sort reference path; must agree with `select_leader` on every input.
pub fn select_leader_by_sort(
    positions: &[Point],
    metric: &Metric,
    table: &DiscreteKernelTable,
    i: usize,
    u: f64,
) -> Result<usize> {
    let k = table.sample_rank(u);
    let view = rank_view(positions, metric, i)?;
    Ok(view.order[k - 1])
}

/// Index of the particle at proximity rank `k` from `i` (k is 1-based).
fn kth_nearest(positions: &[Point], metric: &Metric, i: usize, k: usize) -> Result<usize> {
    let n = positions.len();
    check_index(n, i)?;
    if k == 0 || k > n - 1 {
        return Err(Error::Domain(format!("rank {k} out of 1..{}", n - 1)));
    }
    let mut pairs: Vec<(f64, usize)> = positions
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, p)| (metric.cmp_dist(&positions[i], p), j))
        .collect();
    let (_, kth, _) = pairs.select_nth_unstable_by(k - 1, cmp_pair);
    Ok(kth.1)
}

fn cmp_pair(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Exact law of the rank of one fixed point with respect to another when the
/// remaining `N-2` positions are i.i.d. with partial mass `p` inside the
/// ball: `P_R = C(N-2, R-1) p^(R-1) (1-p)^(N-1-R)`.
pub fn rank_distribution_oracle(p: f64, n: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} outside [0,1]")));
    }
    if n < 2 {
        return Err(Error::Domain(format!("need N >= 2, got {n}")));
    }
    let m = n - 2; // trials
    let mut out = vec![0.0; n - 1];
    if p == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    if p == 1.0 {
        out[n - 2] = 1.0;
        return Ok(out);
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let lg_m = ln_gamma(m as f64 + 1.0);
    for r in 1..=n - 1 {
        let k = (r - 1) as f64;
        let log_pr = lg_m - ln_gamma(k + 1.0) - ln_gamma(m as f64 - k + 1.0)
            + k * lp
            + (m as f64 - k) * lq;
        out[r - 1] = log_pr.exp();
    }
    // Log-gamma rounding leaves the sum within a few ulps of 1; pin it.
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

fn check_index(len: usize, i: usize) -> Result<()> {
    if i < len {
        Ok(())
    } else {
        Err(Error::Index { index: i, len })
    }
}
