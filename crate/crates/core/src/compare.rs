//! Particle-to-kinetic convergence measurements.
//!
//! The kinetic equation is the formal N → ∞ limit of the particle process;
//! no rate is available, so everything here is a trend measurement: L1
//! distances between the empirical one-particle marginal and the kinetic
//! solution across an N ladder, plus a propagation-of-chaos diagnostic
//! comparing the two-particle marginal against the product of one-particle
//! marginals.
//!
//! Comparisons run on the periodic line with particle velocities drawn from
//! the kinetic solver's finite velocity set, so neither marginal has binning
//! error in v.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::RankKernel;
use crate::kinetic::{solve, KineticState};
use crate::rank::Metric;
use crate::sim::{mix_seed, EmpiricalMarginal, InitialCondition, MarginalGrid, SimConfig};

/// One N point of the convergence study. Distances are means over the
/// independent runs of the per-run L1 distance, with the standard error of
/// that mean; the chaos diagnostic pools pair statistics across runs.
#[derive(Debug, Clone, Copy)]
pub struct ConvergencePoint {
    pub n: usize,
    pub d_rho: f64,
    pub d_rho_stderr: f64,
    pub d_vel: f64,
    pub d_vel_stderr: f64,
    pub chaos_metric: f64,
}

/// Distances at a fixed time across an N ladder, with jackknife error bars
/// over the independent runs.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub t: f64,
    pub runs: usize,
    pub points: Vec<ConvergencePoint>,
}

/// L1 distances between an empirical marginal and a kinetic state on the
/// same grid: `(Σ_m |ρ̂ - ρ| Δx, Σ_a |ĝ - g|)`.
pub fn marginal_distance(
    empirical: &EmpiricalMarginal,
    grid: &MarginalGrid,
    state: &KineticState,
) -> Result<(f64, f64)> {
    check_grids(grid, state)?;
    let kinetic_mass: Vec<f64> = state.f.iter().map(|v| v * state.dx()).collect();
    Ok(mass_distances(&empirical.mass, &kinetic_mass, grid))
}

fn check_grids(grid: &MarginalGrid, state: &KineticState) -> Result<()> {
    if grid.nx != state.nx
        || (grid.length - state.length).abs() > 1e-12
        || grid.velocities != state.velocities
    {
        return Err(Error::GridMismatch(
            "empirical grid and kinetic state must share cells and velocity set".into(),
        ));
    }
    Ok(())
}

/// L1 distances between two mass arrays on the grid (spatial, velocity).
fn mass_distances(a: &[f64], b: &[f64], grid: &MarginalGrid) -> (f64, f64) {
    let nv = grid.velocities.len();
    let mut d_rho = 0.0;
    for m in 0..grid.nx {
        let ma: f64 = a[m * nv..(m + 1) * nv].iter().sum();
        let mb: f64 = b[m * nv..(m + 1) * nv].iter().sum();
        d_rho += (ma - mb).abs();
    }
    let mut d_vel = 0.0;
    for c in 0..nv {
        let ga: f64 = (0..grid.nx).map(|m| a[m * nv + c]).sum();
        let gb: f64 = (0..grid.nx).map(|m| b[m * nv + c]).sum();
        d_vel += (ga - gb).abs();
    }
    (d_rho, d_vel)
}

/// Propagation-of-chaos diagnostic for one run snapshot: L1 distance between
/// the all-pairs two-particle law on the coarse statistic grid and the
/// product of one-particle laws. Computed from the per-state counts, so the
/// cost is quadratic in grid states, not in particles.
pub fn chaos_metric_snapshot(counts: &[usize], n: usize) -> f64 {
    debug_assert!(n >= 2);
    let nf = n as f64;
    let pairs = nf * (nf - 1.0);
    let mut l1 = 0.0;
    for (s1, &c1) in counts.iter().enumerate() {
        if c1 == 0 {
            // Product and pair laws both vanish on this row.
            continue;
        }
        let c1 = c1 as f64;
        for (s2, &c2) in counts.iter().enumerate() {
            let c2 = c2 as f64;
            let p2 = if s1 == s2 { c1 * (c1 - 1.0) } else { c1 * c2 } / pairs;
            let p1p1 = (c1 / nf) * (c2 / nf);
            l1 += (p2 - p1p1).abs();
        }
    }
    l1
}

/// Chaos diagnostic over an ensemble of runs; `counts_per_run` holds the
/// statistic-grid occupation counts of each run.
///
/// Both laws are estimated from the pooled ensemble: the two-particle law
/// averages the all-pairs counts of every run, the one-particle law averages
/// the occupation frequencies. Pooling matters — within one run of a system
/// near consensus the pair law and the product of marginals look identical,
/// and only across runs does the correlation show up.
pub fn chaos_metric(counts_per_run: &[Vec<usize>], n: usize) -> Result<f64> {
    if counts_per_run.len() < 2 {
        return Err(Error::Config("chaos metric needs at least 2 runs".into()));
    }
    let states = counts_per_run[0].len();
    if counts_per_run.iter().any(|c| c.len() != states) {
        return Err(Error::Config("runs disagree on the statistic grid".into()));
    }
    let runs = counts_per_run.len() as f64;
    let nf = n as f64;
    let pairs = runs * nf * (nf - 1.0);

    let mut p1 = vec![0.0; states];
    let mut pair = vec![0.0; states * states];
    for counts in counts_per_run {
        for (s1, &c1) in counts.iter().enumerate() {
            if c1 == 0 {
                continue;
            }
            let c1 = c1 as f64;
            p1[s1] += c1;
            for (s2, &c2) in counts.iter().enumerate() {
                let c2 = c2 as f64;
                pair[s1 * states + s2] += if s1 == s2 { c1 * (c1 - 1.0) } else { c1 * c2 };
            }
        }
    }
    for v in &mut p1 {
        *v /= runs * nf;
    }
    let mut l1 = 0.0;
    for s1 in 0..states {
        for s2 in 0..states {
            l1 += (pair[s1 * states + s2] / pairs - p1[s1] * p1[s2]).abs();
        }
    }
    Ok(l1)
}

/// Settings of a convergence study.
#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub kernel: RankKernel,
    pub n_values: Vec<usize>,
    pub runs: usize,
    pub t: f64,
    pub dt: f64,
    pub seed: u64,
    /// Spatial bins of the coarse chaos statistic grid.
    pub chaos_nx: usize,
}

/// Run the full study: solve the kinetic equation once, then for each N
/// simulate `runs` independent particle systems initialised from the kinetic
/// initial law and measure marginal distances and the chaos metric at time t.
pub fn convergence_study(
    initial: &KineticState,
    config: &CompareConfig,
) -> Result<ConvergenceReport> {
    if config.n_values.len() < 3 {
        return Err(Error::Config("N ladder needs at least 3 points".into()));
    }
    if config.runs < 2 {
        return Err(Error::Config("need at least 2 runs for error bars".into()));
    }
    let grid = MarginalGrid {
        length: initial.length,
        nx: initial.nx,
        velocities: initial.velocities.clone(),
    };
    let kinetic_at_t = solve(initial, &config.kernel, config.dt, config.t, config.t.max(config.dt))?
        .final_state;
    let kinetic_mass: Vec<f64> = kinetic_at_t.f.iter().map(|v| v * kinetic_at_t.dx()).collect();

    let init_probs: Vec<f64> = initial.f.iter().map(|v| v * initial.dx()).collect();
    let init = InitialCondition::DiscreteXv {
        length: initial.length,
        nx: initial.nx,
        velocities: initial.velocities.clone(),
        probs: init_probs,
    };
    let metric = Metric::PeriodicLine { length: initial.length };

    let mut points = Vec::with_capacity(config.n_values.len());
    for &n in &config.n_values {
        let sim = SimConfig {
            n,
            kernel: config.kernel,
            metric,
            t_end: config.t,
            init: init.clone(),
            seed: mix_seed(config.seed, n as u64),
            sample_interval: config.t.max(config.dt),
        };
        sim.validate()?;
        let table = config.kernel.discrete_table(n)?;
        let chaos_states = config.chaos_nx * grid.velocities.len();

        // Per-run: fine histogram for marginals, coarse counts for chaos.
        let per_run: Vec<(Vec<f64>, Vec<usize>)> = (0..config.runs)
            .into_par_iter()
            .map(|run| -> Result<(Vec<f64>, Vec<usize>)> {
                let seed = mix_seed(sim.seed, run as u64 + 1);
                let mut ens = sim.initial_ensemble(seed)?;
                ens.advance_to(config.t, &table, &metric)?;
                let hist = crate::sim::bin_ensemble(&ens, &grid);
                let mut counts = vec![0usize; chaos_states];
                let dx_s = grid.length / config.chaos_nx as f64;
                for (x, v) in ens.x.iter().zip(&ens.v) {
                    let cell = ((x[0].rem_euclid(grid.length) / dx_s) as usize)
                        .min(config.chaos_nx - 1);
                    let class = grid
                        .velocities
                        .iter()
                        .enumerate()
                        .min_by(|a, b| (a.1 - v[0]).abs().total_cmp(&(b.1 - v[0]).abs()))
                        .map(|(i, _)| i)
                        .unwrap();
                    counts[cell * grid.velocities.len() + class] += 1;
                }
                Ok((hist, counts))
            })
            .collect::<Result<_>>()?;

        // Per-run L1 distances, then mean and standard error of the mean.
        // Averaging distances (rather than pooling the marginals first)
        // keeps the error bars proportional to 1/sqrt(bins * runs), small
        // against the 1/sqrt(N) decrease being measured.
        let dists: Vec<(f64, f64)> = per_run
            .iter()
            .map(|(h, _)| mass_distances(h, &kinetic_mass, &grid))
            .collect();
        let (d_rho, d_rho_stderr) = mean_stderr(dists.iter().map(|d| d.0));
        let (d_vel, d_vel_stderr) = mean_stderr(dists.iter().map(|d| d.1));

        let counts: Vec<Vec<usize>> = per_run.into_iter().map(|(_, c)| c).collect();
        let chaos = chaos_metric(&counts, n)?;
        points.push(ConvergencePoint {
            n,
            d_rho,
            d_rho_stderr,
            d_vel,
            d_vel_stderr,
            chaos_metric: chaos,
        });
    }
    Ok(ConvergenceReport { t: config.t, runs: config.runs, points })
}

fn mean_stderr(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// True when the values are strictly decreasing and consecutive gaps exceed
/// the combined error bars.
pub fn decreasing_beyond_errors(values: &[f64], errors: &[f64]) -> bool {
    values
        .windows(2)
        .zip(errors.windows(2))
        .all(|(v, e)| v[1] + e[1] < v[0] - e[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ensemble_marginal;
    use approx::assert_abs_diff_eq;

    fn two_class_bump(nx: usize) -> KineticState {
        let mut f = vec![0.0; nx * 2];
        for m in 0..nx {
            let x = (m as f64 + 0.5) / nx as f64;
            let rho = 1.0 + 0.6 * (2.0 * std::f64::consts::PI * x).sin();
            f[m * 2] = 0.4 * rho;
            f[m * 2 + 1] = 0.6 * rho;
        }
        let mut s = KineticState::new(1.0, nx, vec![-1.0, 1.0], f).unwrap();
        s.normalise().unwrap();
        s
    }

    #[test]
    fn self_distance_within_noise() {
        // Sampling the kinetic state itself: distances at the Monte Carlo
        // noise floor, and d_vel tiny since classes are sampled exactly.
        let state = two_class_bump(16);
        let grid = MarginalGrid { length: 1.0, nx: 16, velocities: vec![-1.0, 1.0] };
        let probs: Vec<f64> = state.f.iter().map(|v| v * state.dx()).collect();
        let sim = SimConfig {
            n: 4000,
            kernel: RankKernel::Constant,
            metric: Metric::PeriodicLine { length: 1.0 },
            t_end: 0.0,
            init: InitialCondition::DiscreteXv {
                length: 1.0,
                nx: 16,
                velocities: vec![-1.0, 1.0],
                probs,
            },
            seed: 42,
            sample_interval: 1.0,
        };
        let emp = ensemble_marginal(&sim, 50, &grid, &[0.0]).unwrap();
        let (d_rho, d_vel) = marginal_distance(&emp[0], &grid, &state).unwrap();
        // Noise floor for 200k samples over 32 bins.
        assert!(d_rho < 0.02, "d_rho = {d_rho}");
        assert!(d_vel < 0.01, "d_vel = {d_vel}");
    }

    #[test]
    fn grid_mismatch_rejected() {
        let state = two_class_bump(16);
        let grid = MarginalGrid { length: 1.0, nx: 8, velocities: vec![-1.0, 1.0] };
        let emp = EmpiricalMarginal {
            t: 0.0,
            mass: vec![1.0 / 16.0; 16],
            stderr: vec![0.0; 16],
            runs: 1,
        };
        assert!(matches!(
            marginal_distance(&emp, &grid, &state),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn chaos_bias_floor_hand_values() {
        // All particles in one state: pair and product laws coincide.
        let v = chaos_metric(&vec![vec![100usize, 0]; 2], 100).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        // Even split over two states: the diagonal exclusion leaves the
        // exact finite-sample floor 1/(N-1).
        let v = chaos_metric(&vec![vec![50usize, 50]; 2], 100).unwrap();
        assert_abs_diff_eq!(v, 1.0 / 99.0, epsilon = 1e-12);
    }

    #[test]
    fn chaos_large_for_perfect_correlation() {
        // N = 2 after consensus: each run puts both particles in the same
        // random state. Pooled pair mass sits on the diagonal while the
        // product of pooled marginals spreads: L1 = 4 * |1/2 - 1/4| = 1.
        let v = chaos_metric(&[vec![2usize, 0], vec![0usize, 2]], 2).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        // Within any single such run the two estimates coincide.
        assert_eq!(chaos_metric_snapshot(&[2, 0], 2), 0.0);
    }

    #[test]
    fn decreasing_checker() {
        assert!(decreasing_beyond_errors(&[3.0, 2.0, 1.0], &[0.1, 0.1, 0.1]));
        assert!(!decreasing_beyond_errors(&[3.0, 2.95, 1.0], &[0.1, 0.1, 0.1]));
        assert!(!decreasing_beyond_errors(&[1.0, 2.0], &[0.0, 0.0]));
    }

    #[test]
    fn small_convergence_study_runs() {
        let initial = two_class_bump(8);
        let config = CompareConfig {
            kernel: RankKernel::Constant,
            n_values: vec![20, 40, 80],
            runs: 8,
            t: 0.2,
            dt: 0.05,
            seed: 7,
            chaos_nx: 2,
        };
        let report = convergence_study(&initial, &config).unwrap();
        assert_eq!(report.points.len(), 3);
        for p in &report.points {
            assert!(p.d_rho >= 0.0 && p.d_vel >= 0.0 && p.chaos_metric >= 0.0);
            assert!(p.d_rho_stderr > 0.0);
        }
    }

    #[test]
    fn ladder_too_short_rejected() {
        let initial = two_class_bump(8);
        let config = CompareConfig {
            kernel: RankKernel::Constant,
            n_values: vec![20],
            runs: 4,
            t: 0.1,
            dt: 0.05,
            seed: 1,
            chaos_nx: 2,
        };
        assert!(matches!(
            convergence_study(&initial, &config),
            Err(Error::Config(_))
        ));
    }
}
