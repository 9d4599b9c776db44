//! Event-driven simulation of the leader-following jump process.
//!
//! Between events every particle drifts in a straight line; at Poisson times
//! with rate N a uniformly chosen follower copies the velocity of a leader
//! drawn by rank-weighted probability. A single global Exp(N) clock with a
//! uniform follower pick is equivalent to N per-particle unit-rate clocks.
//!
//! Velocities are only ever copied, never combined, so the distinct-velocity
//! diagnostic uses exact bit equality.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{DiscreteKernelTable, RankKernel};
use crate::rank::{select_leader, Metric, Point};

/// Positions, velocities and the simulation clock of the N-particle system.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub t: f64,
    pub x: Vec<Point>,
    pub v: Vec<Point>,
    rng: ChaCha8Rng,
}

impl ParticleEnsemble {
    pub fn new(x: Vec<Point>, v: Vec<Point>, seed: u64) -> Result<Self> {
        if x.len() != v.len() || x.len() < 2 {
            return Err(Error::Config(format!(
                "need matching x/v with N >= 2, got {} and {}",
                x.len(),
                v.len()
            )));
        }
        Ok(Self { t: 0.0, x, v, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Straight-line motion over `dt`; exact, no integrator error.
    pub fn free_flight(&mut self, dt: f64, metric: &Metric) {
        for (x, v) in self.x.iter_mut().zip(&self.v) {
            x[0] += dt * v[0];
            x[1] += dt * v[1];
            if let Metric::PeriodicLine { length } = *metric {
                x[0] = x[0].rem_euclid(length);
            }
        }
        self.t += dt;
    }

    /// Advance to the next collision event and perform it: draw the
    /// exponential waiting time, drift everyone, pick a follower uniformly
    /// and copy the chosen leader's velocity onto it.
    pub fn step_to_next_event(
        &mut self,
        table: &DiscreteKernelTable,
        metric: &Metric,
    ) -> Result<()> {
        let n = self.len();
        let rate = n as f64;
        let tau = -(1.0 - self.rng.gen::<f64>()).ln() / rate;
        self.free_flight(tau, metric);
        let follower = self.rng.gen_range(0..n);
        let u = self.rng.gen::<f64>();
        let leader = select_leader(&self.x, metric, table, follower, u)?;
        self.v[follower] = self.v[leader];
        Ok(())
    }

    /// Advance to exactly time `t`: full events while they fit, then the
    /// remaining free flight. Stopping mid-flight discards the pending
    /// event draw, which is harmless by memorylessness of the clock.
    pub fn advance_to(
        &mut self,
        t: f64,
        table: &DiscreteKernelTable,
        metric: &Metric,
    ) -> Result<()> {
        while self.t < t {
            let mut probe = self.clone();
            probe.step_to_next_event(table, metric)?;
            if probe.t > t {
                let rest = t - self.t;
                self.free_flight(rest, metric);
                break;
            }
            *self = probe;
        }
        Ok(())
    }

    /// Trace of the empirical velocity covariance.
    pub fn velocity_variance(&self) -> f64 {
        let n = self.len() as f64;
        let mut mean = [0.0f64; 2];
        for v in &self.v {
            mean[0] += v[0];
            mean[1] += v[1];
        }
        mean[0] /= n;
        mean[1] /= n;
        let mut tr = 0.0;
        for v in &self.v {
            let d0 = v[0] - mean[0];
            let d1 = v[1] - mean[1];
            tr += d0 * d0 + d1 * d1;
        }
        tr / n
    }

    /// Number of distinct velocity values, by exact bit pattern.
    pub fn distinct_velocities(&self) -> usize {
        let set: HashSet<(u64, u64)> =
            self.v.iter().map(|v| (v[0].to_bits(), v[1].to_bits())).collect();
        set.len()
    }
}

/// Time series of the observables behind the trajectory figures.
#[derive(Debug, Clone, Default)]
pub struct DiagnosticsSeries {
    pub times: Vec<f64>,
    pub velocity_variance: Vec<f64>,
    pub distinct_velocities: Vec<usize>,
    /// First time all velocities coincide, if reached before `t_end`.
    pub consensus_time: Option<f64>,
}

/// How positions and velocities are drawn at t = 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Positions i.i.d. uniform in `[x_min, x_max]` per active dimension,
    /// velocities i.i.d. uniform in `[v_min, v_max]`.
    UniformBox { x_min: f64, x_max: f64, v_min: f64, v_max: f64 },
    /// Discrete (x,v) law on a periodic grid with a finite velocity set:
    /// pick a (cell, class) pair by `probs`, then place the particle
    /// uniformly inside the cell. Used to match a kinetic initial state.
    DiscreteXv {
        length: f64,
        nx: usize,
        velocities: Vec<f64>,
        /// Row-major `nx * nv` probabilities summing to 1.
        probs: Vec<f64>,
    },
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialCondition::UniformBox { x_min, x_max, v_min, v_max } => {
                if x_min < x_max && v_min < v_max {
                    Ok(())
                } else {
                    Err(Error::Config("uniform box bounds must be ordered".into()))
                }
            }
            InitialCondition::DiscreteXv { length, nx, velocities, probs } => {
                if *length <= 0.0 || *nx == 0 || velocities.is_empty() {
                    return Err(Error::Config("discrete init needs a positive grid".into()));
                }
                if probs.len() != nx * velocities.len() {
                    return Err(Error::Config(format!(
                        "discrete init needs {} probabilities, got {}",
                        nx * velocities.len(),
                        probs.len()
                    )));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 || probs.iter().any(|&p| p < 0.0) {
                    return Err(Error::Config("discrete init probabilities must sum to 1".into()));
                }
                Ok(())
            }
        }
    }

    pub fn sample(&self, n: usize, dim: usize, rng: &mut impl Rng) -> (Vec<Point>, Vec<Point>) {
        let mut xs = Vec::with_capacity(n);
        let mut vs = Vec::with_capacity(n);
        match self {
            InitialCondition::UniformBox { x_min, x_max, v_min, v_max } => {
                for _ in 0..n {
                    let mut x = [0.0; 2];
                    let mut v = [0.0; 2];
                    for d in 0..dim {
                        x[d] = rng.gen_range(*x_min..*x_max);
                        v[d] = rng.gen_range(*v_min..*v_max);
                    }
                    xs.push(x);
                    vs.push(v);
                }
            }
            InitialCondition::DiscreteXv { length, nx, velocities, probs } => {
                let dx = length / *nx as f64;
                let mut cdf = Vec::with_capacity(probs.len());
                let mut acc = 0.0;
                for &p in probs {
                    acc += p;
                    cdf.push(acc);
                }
                *cdf.last_mut().unwrap() = 1.0;
                for _ in 0..n {
                    let u = rng.gen::<f64>();
                    let idx = cdf.partition_point(|&c| c <= u).min(probs.len() - 1);
                    let (cell, class) = (idx / velocities.len(), idx % velocities.len());
                    let x0 = (cell as f64 + rng.gen::<f64>()) * dx;
                    xs.push([x0, 0.0]);
                    vs.push([velocities[class], 0.0]);
                }
            }
        }
        (xs, vs)
    }
}

/// Full description of one reproducible run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub kernel: RankKernel,
    pub metric: Metric,
    pub t_end: f64,
    pub init: InitialCondition,
    pub seed: u64,
    pub sample_interval: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("need N >= 2, got {}", self.n)));
        }
        if self.t_end < 0.0 {
            return Err(Error::Config(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if self.sample_interval <= 0.0 {
            return Err(Error::Config("sample_interval must be positive".into()));
        }
        self.kernel.validate()?;
        self.metric.validate()?;
        self.init.validate()
    }

    fn dim(&self) -> usize {
        match self.metric {
            Metric::Euclidean { dim } => dim,
            Metric::PeriodicLine { .. } => 1,
        }
    }

    /// Build the t = 0 ensemble from the configured initial law.
    pub fn initial_ensemble(&self, seed: u64) -> Result<ParticleEnsemble> {
        let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xD1A6));
        let (mut xs, vs) = self.init.sample(self.n, self.dim(), &mut init_rng);
        if let Metric::PeriodicLine { length } = self.metric {
            for x in &mut xs {
                x[0] = x[0].rem_euclid(length);
            }
        }
        ParticleEnsemble::new(xs, vs, seed)
    }
}

/// A decimated state record.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub x: Vec<Point>,
    pub v: Vec<Point>,
}

/// Run one trajectory, sampling snapshots and diagnostics on the configured
/// interval. Reproducible: identical seeds give bit-identical outputs.
pub fn run(config: &SimConfig) -> Result<(Vec<Snapshot>, DiagnosticsSeries)> {
    config.validate()?;
    run_seeded(config, config.seed)
}

/// Like `run` but with an explicit seed, for ensemble runs that derive
/// per-run streams from (master seed, run index).
pub fn run_seeded(config: &SimConfig, seed: u64) -> Result<(Vec<Snapshot>, DiagnosticsSeries)> {
    let table = config.kernel.discrete_table(config.n)?;
    let mut ens = config.initial_ensemble(seed)?;
    let mut snapshots = Vec::new();
    let mut diag = DiagnosticsSeries::default();

    let record = |ens: &ParticleEnsemble,
                  snapshots: &mut Vec<Snapshot>,
                  diag: &mut DiagnosticsSeries| {
        snapshots.push(Snapshot { t: ens.t, x: ens.x.clone(), v: ens.v.clone() });
        diag.times.push(ens.t);
        diag.velocity_variance.push(ens.velocity_variance());
        diag.distinct_velocities.push(ens.distinct_velocities());
    };

    record(&ens, &mut snapshots, &mut diag);
    if ens.distinct_velocities() == 1 {
        diag.consensus_time = Some(0.0);
    }
    let mut next_sample = config.sample_interval;
    while ens.t < config.t_end {
        let mut probe = ens.clone();
        probe.step_to_next_event(&table, &config.metric)?;
        if probe.t > config.t_end {
            // Event lands past the horizon: finish with free flight only.
            let rest = config.t_end - ens.t;
            ens.free_flight(rest, &config.metric);
            break;
        }
        // Emit snapshots for sample points crossed by this flight+event.
        while next_sample < probe.t && next_sample <= config.t_end {
            let mut at = ens.clone();
            at.free_flight(next_sample - ens.t, &config.metric);
            record(&at, &mut snapshots, &mut diag);
            next_sample += config.sample_interval;
        }
        ens = probe;
        if diag.consensus_time.is_none() && ens.distinct_velocities() == 1 {
            diag.consensus_time = Some(ens.t);
        }
    }
    while next_sample <= config.t_end {
        let mut at = ens.clone();
        at.free_flight(next_sample - at.t, &config.metric);
        record(&at, &mut snapshots, &mut diag);
        next_sample += config.sample_interval;
    }
    if config.t_end > 0.0 && diag.times.last() != Some(&config.t_end) {
        let mut at = ens.clone();
        at.free_flight(config.t_end - at.t, &config.metric);
        record(&at, &mut snapshots, &mut diag);
    }
    Ok((snapshots, diag))
}

/// Run until all velocities coincide, ignoring snapshots. Returns the
/// consensus time.
pub fn run_to_consensus(config: &SimConfig, seed: u64) -> Result<f64> {
    let table = config.kernel.discrete_table(config.n)?;
    let mut ens = config.initial_ensemble(seed)?;
    while ens.distinct_velocities() > 1 {
        ens.step_to_next_event(&table, &config.metric)?;
    }
    Ok(ens.t)
}

/// Grid for the empirical one-particle marginal: periodic cells times a
/// finite velocity set.
#[derive(Debug, Clone)]
pub struct MarginalGrid {
    pub length: f64,
    pub nx: usize,
    pub velocities: Vec<f64>,
}

/// Empirical marginal with per-bin standard errors from across-run variance.
#[derive(Debug, Clone)]
pub struct EmpiricalMarginal {
    pub t: f64,
    /// Row-major `nx * nv`, total mass 1.
    pub mass: Vec<f64>,
    pub stderr: Vec<f64>,
    pub runs: usize,
}

impl EmpiricalMarginal {
    pub fn spatial_density(&self, grid: &MarginalGrid) -> Vec<f64> {
        let nv = grid.velocities.len();
        let dx = grid.length / grid.nx as f64;
        (0..grid.nx)
            .map(|m| self.mass[m * nv..(m + 1) * nv].iter().sum::<f64>() / dx)
            .collect()
    }

    pub fn velocity_marginal(&self, grid: &MarginalGrid) -> Vec<f64> {
        let nv = grid.velocities.len();
        (0..nv)
            .map(|a| (0..grid.nx).map(|m| self.mass[m * nv + a]).sum())
            .collect()
    }
}

/// Estimate the one-particle marginal at the requested times by Monte Carlo
/// over `m_runs` independent runs. Requires a periodic metric matching the
/// grid; velocities are assigned to the nearest class.
pub fn ensemble_marginal(
    config: &SimConfig,
    m_runs: usize,
    grid: &MarginalGrid,
    times: &[f64],
) -> Result<Vec<EmpiricalMarginal>> {
    config.validate()?;
    if m_runs == 0 {
        return Err(Error::Config("need at least one run".into()));
    }
    match config.metric {
        Metric::PeriodicLine { length } if (length - grid.length).abs() < 1e-12 => {}
        _ => {
            return Err(Error::GridMismatch(
                "marginal estimation needs a periodic metric matching the grid".into(),
            ))
        }
    }
    let nbins = grid.nx * grid.velocities.len();
    // Per-run histograms at each requested time.
    let per_run: Vec<Vec<Vec<f64>>> = (0..m_runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<Vec<f64>>> {
            let seed = mix_seed(config.seed, run as u64 + 1);
            let table = config.kernel.discrete_table(config.n)?;
            let mut ens = config.initial_ensemble(seed)?;
            let mut sorted: Vec<(usize, f64)> =
                times.iter().copied().enumerate().collect();
            sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
            let mut out = vec![vec![0.0; nbins]; times.len()];
            for (orig, t) in sorted {
                while ens.t < t {
                    let mut probe = ens.clone();
                    probe.step_to_next_event(&table, &config.metric)?;
                    if probe.t > t {
                        let rest = t - ens.t;
                        ens.free_flight(rest, &config.metric);
                        break;
                    }
                    ens = probe;
                }
                out[orig] = bin_ensemble(&ens, grid);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut result = Vec::with_capacity(times.len());
    for (ti, &t) in times.iter().enumerate() {
        let mut mean = vec![0.0; nbins];
        for run_h in &per_run {
            for (m, h) in mean.iter_mut().zip(&run_h[ti]) {
                *m += h;
            }
        }
        for m in &mut mean {
            *m /= m_runs as f64;
        }
        let mut stderr = vec![0.0; nbins];
        if m_runs > 1 {
            for run_h in &per_run {
                for (s, (h, m)) in stderr.iter_mut().zip(run_h[ti].iter().zip(&mean)) {
                    let d = h - m;
                    *s += d * d;
                }
            }
            for s in &mut stderr {
                *s = (*s / (m_runs as f64 - 1.0) / m_runs as f64).sqrt();
            }
        }
        result.push(EmpiricalMarginal { t, mass: mean, stderr, runs: m_runs });
    }
    Ok(result)
}

/// Histogram one ensemble onto the grid, normalised to total mass 1.
pub fn bin_ensemble(ens: &ParticleEnsemble, grid: &MarginalGrid) -> Vec<f64> {
    let nv = grid.velocities.len();
    let dx = grid.length / grid.nx as f64;
    let mut h = vec![0.0; grid.nx * nv];
    let w = 1.0 / ens.len() as f64;
    for (x, v) in ens.x.iter().zip(&ens.v) {
        let cell = ((x[0].rem_euclid(grid.length) / dx) as usize).min(grid.nx - 1);
        let class = nearest_class(&grid.velocities, v[0]);
        h[cell * nv + class] += w;
    }
    h
}

fn nearest_class(velocities: &[f64], v: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (a, &va) in velocities.iter().enumerate() {
        let d = (va - v).abs();
        if d < best_d {
            best_d = d;
            best = a;
        }
    }
    best
}

/// A test observable of the first particle, with its spatial gradient.
pub struct TestFunction {
    pub value: Box<dyn Fn(Point, Point) -> f64 + Sync>,
    pub grad_x: Box<dyn Fn(Point, Point) -> Point + Sync>,
}

/// Result of comparing the Monte Carlo short-time rate of change of a test
/// observable against the exactly enumerated generator.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorCheck {
    pub mc_rate: f64,
    pub mc_stderr: f64,
    pub exact_rate: f64,
    pub z_score: f64,
}

/// Evaluate the generator of the process on `phi` at the given configuration
/// by direct enumeration, and compare with the Monte Carlo finite-difference
/// rate `(E[phi(dt)] - phi(0)) / dt` over `samples` independent restarts.
#[allow(clippy::too_many_arguments)]
pub fn generator_check(
    positions: &[Point],
    velocities: &[Point],
    table: &DiscreteKernelTable,
    metric: &Metric,
    phi: &TestFunction,
    dt: f64,
    samples: usize,
    seed: u64,
) -> Result<GeneratorCheck> {
    let n = positions.len();
    if n != velocities.len() || n < 2 {
        return Err(Error::Config("need matching x/v with N >= 2".into()));
    }
    let phi0 = (phi.value)(positions[0], velocities[0]);

    // Transport part: phi depends on Z_1 only, so only v_1 contributes.
    let grad = (phi.grad_x)(positions[0], velocities[0]);
    let mut exact = velocities[0][0] * grad[0] + velocities[0][1] * grad[1];
    // Jump part: rate N, follower i with prob 1/N, leader j with prob pi_ij.
    // Only follower i = 0 changes Z_1.
    for i in 0..n {
        let probs = crate::rank::interaction_probabilities(positions, metric, table, i)?;
        for (j, &pij) in probs.iter().enumerate() {
            if j == i || pij == 0.0 {
                continue;
            }
            let v1_after = if i == 0 { velocities[j] } else { velocities[0] };
            exact += pij * ((phi.value)(positions[0], v1_after) - phi0);
        }
    }

    // Monte Carlo restarts, parallel with deterministic per-sample seeds.
    let chunk = 4096usize;
    let nchunks = samples.div_ceil(chunk);
    let partials: Vec<(f64, f64, usize)> = (0..nchunks)
        .into_par_iter()
        .map(|c| -> Result<(f64, f64, usize)> {
            let lo = c * chunk;
            let hi = ((c + 1) * chunk).min(samples);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for s in lo..hi {
                let mut ens = ParticleEnsemble::new(
                    positions.to_vec(),
                    velocities.to_vec(),
                    mix_seed(seed, s as u64 + 1),
                )?;
                while ens.t < dt {
                    let mut probe = ens.clone();
                    probe.step_to_next_event(table, metric)?;
                    if probe.t > dt {
                        let rest = dt - ens.t;
                        ens.free_flight(rest, metric);
                        break;
                    }
                    ens = probe;
                }
                let incr = ((phi.value)(ens.x[0], ens.v[0]) - phi0) / dt;
                sum += incr;
                sumsq += incr * incr;
            }
            Ok((sum, sumsq, hi - lo))
        })
        .collect::<Result<_>>()?;
    let (sum, sumsq, count) = partials
        .iter()
        .fold((0.0, 0.0, 0usize), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let mean = sum / count as f64;
    let var = (sumsq / count as f64 - mean * mean).max(0.0);
    let stderr = (var / count as f64).sqrt();
    let z = if stderr > 0.0 { (mean - exact) / stderr } else { 0.0 };
    Ok(GeneratorCheck { mc_rate: mean, mc_stderr: stderr, exact_rate: exact, z_score: z })
}

/// Derive an independent stream seed from a master seed and an index
/// (splitmix64 finalizer).
pub fn mix_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
