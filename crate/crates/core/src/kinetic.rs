//! Finite-velocity kinetic solver on a periodic 1D domain.
//!
//! The density `f[m][a]` is a density in `x` and a discrete measure over a
//! finite velocity set: `f[m][a] * dx` is the mass of class `a` in cell `m`.
//! The collision operator is nonlocal in space: cell `m` gains from cell
//! `m'` with weight `K(M_rho(x_m, |x_m - x_m'|))`.
//!
//! The kernel weight of a shell of equidistant cells is the exact increment
//! of the antiderivative 𝒦 between consecutive cumulative masses. With that
//! choice the change-of-variable identity, total mass conservation, and the
//! spatially homogeneous fixed point hold exactly at any resolution, not
//! just up to quadrature error.

use crate::error::{Error, Result};
use crate::kernel::{EvalOrder, RankKernel};

/// Gridded one-particle density on the torus with a finite velocity set.
#[derive(Debug, Clone)]
pub struct KineticState {
    pub length: f64,
    pub nx: usize,
    pub velocities: Vec<f64>,
    /// Row-major `nx * nv`.
    pub f: Vec<f64>,
    pub t: f64,
}

impl KineticState {
    pub fn new(length: f64, nx: usize, velocities: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if length <= 0.0 || nx == 0 || velocities.is_empty() {
            return Err(Error::Config("kinetic grid needs positive extent".into()));
        }
        if f.len() != nx * velocities.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                nx * velocities.len(),
                f.len()
            )));
        }
        if f.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Domain("f must be nonnegative and finite".into()));
        }
        Ok(Self { length, nx, velocities, f, t: 0.0 })
    }

    /// Spatially homogeneous state with the given velocity-class weights,
    /// normalised to total mass 1.
    pub fn homogeneous(
        length: f64,
        nx: usize,
        velocities: Vec<f64>,
        class_weights: &[f64],
    ) -> Result<Self> {
        if class_weights.len() != velocities.len() {
            return Err(Error::GridMismatch("one weight per velocity class".into()));
        }
        let total: f64 = class_weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptyDensity);
        }
        let nv = velocities.len();
        let mut f = vec![0.0; nx * nv];
        for m in 0..nx {
            for a in 0..nv {
                f[m * nv + a] = class_weights[a] / (total * length);
            }
        }
        Self::new(length, nx, velocities, f)
    }

    pub fn dx(&self) -> f64 {
        self.length / self.nx as f64
    }

    pub fn nv(&self) -> usize {
        self.velocities.len()
    }

    /// Spatial density per cell: `rho[m] = Σ_a f[m][a]`.
    pub fn rho(&self) -> Vec<f64> {
        let nv = self.nv();
        (0..self.nx)
            .map(|m| self.f[m * nv..(m + 1) * nv].iter().sum())
            .collect()
    }

    /// Velocity marginal: mass per class.
    pub fn velocity_marginal(&self) -> Vec<f64> {
        let nv = self.nv();
        let dx = self.dx();
        (0..nv)
            .map(|a| (0..self.nx).map(|m| self.f[m * nv + a]).sum::<f64>() * dx)
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.f.iter().sum::<f64>() * self.dx()
    }

    /// Normalise to total mass 1 (initial-condition setup only; stepping
    /// never renormalises).
    pub fn normalise(&mut self) -> Result<()> {
        let total = self.total_mass();
        if total <= 0.0 {
            return Err(Error::EmptyDensity);
        }
        for v in &mut self.f {
            *v /= total;
        }
        Ok(())
    }
}

/// Cells on the torus grouped by distance from a focal cell. Offsets `+k`
/// and `-k` are equidistant and merged into one shell; on an even grid the
/// antipodal cell forms a singleton shell.
#[derive(Debug, Clone)]
pub struct ShellGeometry {
    pub nx: usize,
    pub dx: f64,
    /// shells[k] = (distance, offsets); shell 0 is the cell itself.
    pub shells: Vec<(f64, Vec<isize>)>,
}

impl ShellGeometry {
    pub fn new(nx: usize, dx: f64) -> Self {
        let mut shells = vec![(0.0, vec![0isize])];
        let half = nx / 2;
        for k in 1..=half {
            let offsets = if 2 * k == nx { vec![k as isize] } else { vec![k as isize, -(k as isize)] };
            shells.push((k as f64 * dx, offsets));
        }
        Self { nx, dx, shells }
    }

    pub fn cell(&self, m: usize, offset: isize) -> usize {
        (m as isize + offset).rem_euclid(self.nx as isize) as usize
    }
}

/// Per-cell distance-ordered cumulative masses and kernel shell weights.
#[derive(Debug, Clone)]
pub struct PartialMassTable {
    pub geometry: ShellGeometry,
    /// `cum[m][k]` = mass within distance of shell k from cell m (M_k).
    pub cum: Vec<Vec<f64>>,
    /// `weights[m][k]` = 𝒦(M_k) - 𝒦(M_{k-1}).
    pub weights: Vec<Vec<f64>>,
    /// `shell_mass[m][k]` = mass carried by shell k around m.
    pub shell_mass: Vec<Vec<f64>>,
}

impl PartialMassTable {
    /// Build from the current spatial density. Total mass must be positive.
    pub fn build(state: &KineticState, kernel: &RankKernel) -> Result<Self> {
        let rho = state.rho();
        let dx = state.dx();
        let total: f64 = rho.iter().map(|r| r * dx).sum();
        if total <= 0.0 {
            return Err(Error::EmptyDensity);
        }
        let geometry = ShellGeometry::new(state.nx, dx);
        let ns = geometry.shells.len();
        let mut cum = Vec::with_capacity(state.nx);
        let mut weights = Vec::with_capacity(state.nx);
        let mut shell_mass = Vec::with_capacity(state.nx);
        for m in 0..state.nx {
            let mut cum_m = Vec::with_capacity(ns);
            let mut w_m = Vec::with_capacity(ns);
            let mut sm_m = Vec::with_capacity(ns);
            let mut acc = 0.0;
            let mut prev_anti = 0.0; // 𝒦(0) = 0
            for (_, offsets) in &geometry.shells {
                let mass: f64 = offsets.iter().map(|&o| rho[geometry.cell(m, o)] * dx).sum();
                acc += mass;
                // Clamp against rounding: 𝒦 is defined on [0,1].
                let anti = kernel.eval((acc / total).clamp(0.0, 1.0), EvalOrder::Antiderivative)?;
                cum_m.push(acc);
                w_m.push(anti - prev_anti);
                sm_m.push(mass);
                prev_anti = anti;
            }
            cum.push(cum_m);
            weights.push(w_m);
            shell_mass.push(sm_m);
        }
        Ok(Self { geometry, cum, weights, shell_mass })
    }
}

/// Mass of `rho` within periodic distance `s` of cell `m`'s centre.
pub fn partial_mass(table: &PartialMassTable, m: usize, s: f64) -> f64 {
    let mut mass = 0.0;
    for (k, (dist, _)) in table.geometry.shells.iter().enumerate() {
        if *dist <= s {
            mass = table.cum[m][k];
        } else {
            break;
        }
    }
    mass
}

/// Both sides of the discrete change-of-variable identity at cell `m` and
/// radius `r`: the shell sum of antiderivative increments of `H` against the
/// local mass layers, and the closed-form `∫_0^{M(m,r)} H`.
///
/// `h_antiderivative` is an exact antiderivative of `H` with value 0 at 0.
pub fn change_of_variable_check(
    state: &KineticState,
    table: &PartialMassTable,
    h_antiderivative: &dyn Fn(f64) -> f64,
    m: usize,
    r: f64,
) -> (f64, f64) {
    let total = state.total_mass();
    let mut lhs = 0.0;
    let mut prev = 0.0;
    let mut reach = 0.0;
    for (k, (dist, _)) in table.geometry.shells.iter().enumerate() {
        if *dist > r {
            break;
        }
        let mk = (table.cum[m][k] / total).clamp(0.0, 1.0);
        lhs += h_antiderivative(mk) - h_antiderivative(prev);
        prev = mk;
        reach = mk;
    }
    let rhs = h_antiderivative(reach) - h_antiderivative(0.0);
    (lhs, rhs)
}

/// Nonlocal gain term. Row identity (exact up to rounding): for every cell,
/// `Σ_{m'} rho_{m'} K̄_{m,m'} dx = 1`, which yields total-mass balance with
/// the unit loss rate and makes homogeneous states exact fixed points.
pub fn gain_operator(state: &KineticState, table: &PartialMassTable) -> Result<Vec<f64>> {
    let rho = state.rho();
    Ok(gain_with(&state.f, &rho, state.dx(), state.nv(), table))
}

/// Gain applied to an arbitrary phase-space array `f` with a frozen spatial
/// density prefactor and shell table. Collisions preserve the spatial
/// density, so the same `rho`/`table` stay valid for repeated applications.
fn gain_with(f: &[f64], rho: &[f64], dx: f64, nv: usize, table: &PartialMassTable) -> Vec<f64> {
    let nx = rho.len();
    let mut gain = vec![0.0; nx * nv];
    for m in 0..nx {
        let mut row = vec![0.0; nv];
        for (k, (_, offsets)) in table.geometry.shells.iter().enumerate() {
            let sm = table.shell_mass[m][k];
            if sm <= 0.0 {
                continue;
            }
            let w = table.weights[m][k] / sm;
            for &o in offsets {
                let mp = table.geometry.cell(m, o);
                for (a, r) in row.iter_mut().enumerate() {
                    *r += w * f[mp * nv + a] * dx;
                }
            }
        }
        for a in 0..nv {
            gain[m * nv + a] = rho[m] * row[a];
        }
    }
    gain
}

/// Exact semi-Lagrangian advection of every class by `v_a * dt` with
/// periodic linear interpolation. Interpolation weights sum to 1, so the
/// shift is mass-conservative and positivity-preserving.
pub fn transport(state: &mut KineticState, dt: f64) {
    let nv = state.nv();
    let nx = state.nx;
    let dx = state.dx();
    let mut new_f = vec![0.0; state.f.len()];
    for (a, &va) in state.velocities.iter().enumerate() {
        let s = va * dt / dx;
        let q = s.floor();
        let theta = s - q;
        let q = q as i64;
        for m in 0..nx {
            let src0 = (m as i64 - q).rem_euclid(nx as i64) as usize;
            let src1 = (m as i64 - q - 1).rem_euclid(nx as i64) as usize;
            new_f[m * nv + a] =
                (1.0 - theta) * state.f[src0 * nv + a] + theta * state.f[src1 * nv + a];
        }
    }
    state.f = new_f;
}

/// Operator-splitting scheme of `step_with`/`solve_with`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Splitting {
    /// Transport over dt, then one Euler collision substep. First order.
    #[default]
    Lie,
    /// Half transport, exact exponential collision substep, half transport.
    /// Second order in dt.
    Strang,
}

/// One operator-splitting step: transport, then collision
/// `f <- (1 - dt) f + dt * gain` with the shell table rebuilt from the
/// post-transport density. Positivity needs `dt <= 1`.
pub fn step(state: &mut KineticState, kernel: &RankKernel, dt: f64) -> Result<()> {
    step_with(state, kernel, dt, Splitting::Lie)
}

/// One step with the chosen splitting. The Lie variant needs `dt <= 1` for
/// positivity of the Euler collision substep; the exponential substep of the
/// Strang variant is positive for any dt, but the same cap is enforced so
/// the two schemes accept identical configurations.
pub fn step_with(
    state: &mut KineticState,
    kernel: &RankKernel,
    dt: f64,
    scheme: Splitting,
) -> Result<()> {
    if dt > 1.0 {
        return Err(Error::StepTooLarge { dt });
    }
    if dt <= 0.0 {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    match scheme {
        Splitting::Lie => {
            transport(state, dt);
            let table = PartialMassTable::build(state, kernel)?;
            let gain = gain_operator(state, &table)?;
            for (f, g) in state.f.iter_mut().zip(&gain) {
                *f = (1.0 - dt) * *f + dt * g;
            }
        }
        Splitting::Strang => {
            transport(state, 0.5 * dt);
            collision_exponential(state, kernel, dt)?;
            transport(state, 0.5 * dt);
        }
    }
    state.t += dt;
    Ok(())
}

/// Exact collision substep `f <- exp((A - I) dt) f`, where `A` is the gain
/// operator with the spatial density frozen. `A` preserves the spatial
/// density, so the operator is genuinely linear over the substep and the
/// truncated exponential series converges like dt^k / k!. Every series term
/// is nonnegative, so positivity holds for any dt.
fn collision_exponential(state: &mut KineticState, kernel: &RankKernel, dt: f64) -> Result<()> {
    let table = PartialMassTable::build(state, kernel)?;
    let rho = state.rho();
    let dx = state.dx();
    let nv = state.nv();
    let mut result = state.f.clone();
    let mut term = state.f.clone();
    for k in 1..=60u32 {
        let g = gain_with(&term, &rho, dx, nv, &table);
        let c = dt / f64::from(k);
        let mut max_term = 0.0f64;
        let mut max_res = 0.0f64;
        for ((t, gv), r) in term.iter_mut().zip(&g).zip(result.iter_mut()) {
            *t = gv * c;
            *r += *t;
            max_term = max_term.max(t.abs());
            max_res = max_res.max(r.abs());
        }
        if max_term <= 1e-18 * max_res {
            break;
        }
    }
    let scale = (-dt).exp();
    for (f, r) in state.f.iter_mut().zip(&result) {
        *f = scale * r;
    }
    Ok(())
}

/// Sampled observables along a kinetic solve.
#[derive(Debug, Clone)]
pub struct KineticTrajectory {
    pub times: Vec<f64>,
    /// Spatial density per sample time.
    pub rho: Vec<Vec<f64>>,
    /// Velocity marginal per sample time.
    pub velocity_marginal: Vec<Vec<f64>>,
    /// Total mass per sample time.
    pub mass: Vec<f64>,
    pub final_state: KineticState,
}

/// Repeated stepping to `t_end`, sampling observables every
/// `sample_interval` (and always at t = 0 and t_end). Lie splitting; use
/// [`solve_with`] to pick the scheme.
pub fn solve(
    initial: &KineticState,
    kernel: &RankKernel,
    dt: f64,
    t_end: f64,
    sample_interval: f64,
) -> Result<KineticTrajectory> {
    solve_with(initial, kernel, dt, t_end, sample_interval, Splitting::Lie)
}

/// `solve` with an explicit splitting scheme.
pub fn solve_with(
    initial: &KineticState,
    kernel: &RankKernel,
    dt: f64,
    t_end: f64,
    sample_interval: f64,
    scheme: Splitting,
) -> Result<KineticTrajectory> {
    if t_end < 0.0 || sample_interval <= 0.0 {
        return Err(Error::Config("t_end >= 0 and sample_interval > 0 required".into()));
    }
    kernel.validate()?;
    let mut state = initial.clone();
    state.t = 0.0;
    let mut traj = KineticTrajectory {
        times: vec![0.0],
        rho: vec![state.rho()],
        velocity_marginal: vec![state.velocity_marginal()],
        mass: vec![state.total_mass()],
        final_state: state.clone(),
    };
    let steps = (t_end / dt).ceil() as usize;
    let mut next_sample = sample_interval;
    for i in 0..steps {
        let this_dt = dt.min(t_end - state.t);
        if this_dt <= 0.0 {
            break;
        }
        step_with(&mut state, kernel, this_dt, scheme)?;
        let at_end = i + 1 == steps || (state.t - t_end).abs() < 1e-12;
        if state.t + 1e-12 >= next_sample || at_end {
            traj.times.push(state.t);
            traj.rho.push(state.rho());
            traj.velocity_marginal.push(state.velocity_marginal());
            traj.mass.push(state.total_mass());
            while next_sample <= state.t + 1e-12 {
                next_sample += sample_interval;
            }
        }
    }
    traj.final_state = state;
    Ok(traj)
}
