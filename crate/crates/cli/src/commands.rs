//! Implementations of the four subcommands.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topokinetic::bernstein::{
    lemma_expansion_check, lorentz_expansion_check, sn_expansion_check, BallCase, ExpansionReport,
};
use topokinetic::compare::{convergence_study, decreasing_beyond_errors, CompareConfig};
use topokinetic::kinetic::{
    change_of_variable_check, solve_with, KineticState, PartialMassTable, Splitting,
};
use topokinetic::rank::{rank_distribution_oracle, rank_of};
use topokinetic::sim::{self, SimConfig};
use topokinetic::stats::chi_square_gof;
use topokinetic::{EvalOrder, Metric};

use crate::config::{self, CompareFileConfig, KernelConfig, SimulateConfig, SolveConfig};
use crate::output::{config_snapshot, OutputDir};
use crate::{resolve_seed, CliError};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Master seed (overrides the config file and TOPOKINETIC_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the particle count from the config file.
    #[arg(long)]
    pub n: Option<usize>,
    /// Override the final time from the config file.
    #[arg(long)]
    pub t_end: Option<f64>,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let (mut cfg, _): (SimulateConfig, _) = config::load(&args.config)?;
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(t) = args.t_end {
        cfg.t_end = t;
    }
    let seed = resolve_seed(args.seed, cfg.seed)?;
    cfg.seed = Some(seed);

    let sim_config = SimConfig {
        n: cfg.n,
        kernel: cfg.kernel.to_core(),
        metric: cfg.metric.to_core(),
        t_end: cfg.t_end,
        init: cfg.init.to_core(),
        seed,
        sample_interval: cfg.sample_interval,
    };
    let (snapshots, diagnostics) = sim::run(&sim_config)?;

    let mut out = OutputDir::create(&args.out)?;
    let dim = cfg.metric.dim();
    let header = if dim == 1 { "t,particle_id,x,v" } else { "t,particle_id,x0,x1,v0,v1" };
    let mut rows = Vec::new();
    for snap in &snapshots {
        for (i, (x, v)) in snap.x.iter().zip(&snap.v).enumerate() {
            if dim == 1 {
                rows.push(format!("{},{},{},{}", snap.t, i, x[0], v[0]));
            } else {
                rows.push(format!("{},{},{},{},{},{}", snap.t, i, x[0], x[1], v[0], v[1]));
            }
        }
    }
    out.write_csv("trajectory.csv", header, &rows)?;

    let diag_rows: Vec<String> = diagnostics
        .times
        .iter()
        .zip(&diagnostics.velocity_variance)
        .zip(&diagnostics.distinct_velocities)
        .map(|((t, var), distinct)| format!("{t},{var},{distinct}"))
        .collect();
    out.write_csv("diagnostics.csv", "t,variance,distinct_velocities", &diag_rows)?;
    out.finish(seed, config_snapshot(&cfg)?)
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override the time step from the config file.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Override the final time from the config file.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Use second-order Strang splitting instead of first-order Lie.
    #[arg(long)]
    pub strang: bool,
}

pub fn cmd_solve(args: &SolveArgs) -> Result<(), CliError> {
    let (mut cfg, _): (SolveConfig, _) = config::load(&args.config)?;
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(t) = args.t_end {
        cfg.t_end = t;
    }
    if !(cfg.dt > 0.0 && cfg.dt <= 1.0) {
        return Err(CliError::Usage(format!(
            "dt = {} must lie in (0, 1] (unit loss rate stability bound)",
            cfg.dt
        )));
    }
    let initial = cfg.initial.build(cfg.length, cfg.nx, &cfg.velocities)?;
    let scheme = if args.strang { Splitting::Strang } else { Splitting::Lie };
    let sample = cfg.sample_interval.unwrap_or(cfg.dt);
    let traj = solve_with(&initial, &cfg.kernel.to_core(), cfg.dt, cfg.t_end, sample, scheme)?;

    let mut out = OutputDir::create(&args.out)?;
    let dx = initial.dx();
    let mut density_rows = Vec::new();
    let mut marginal_rows = Vec::new();
    let mut mass_rows = Vec::new();
    for (i, t) in traj.times.iter().enumerate() {
        for (m, rho) in traj.rho[i].iter().enumerate() {
            let x = (m as f64 + 0.5) * dx;
            density_rows.push(format!("{t},{x},{rho}"));
        }
        for (v, g) in cfg.velocities.iter().zip(&traj.velocity_marginal[i]) {
            marginal_rows.push(format!("{t},{v},{g}"));
        }
        mass_rows.push(format!("{t},{}", traj.mass[i]));
    }
    out.write_csv("density.csv", "t,x,rho", &density_rows)?;
    out.write_csv("velocity_marginal.csv", "t,v,g", &marginal_rows)?;
    out.write_csv("mass.csv", "t,mass", &mass_rows)?;
    out.finish(0, config_snapshot(&cfg)?)
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Master seed (overrides the config file and TOPOKINETIC_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of runs per ladder point.
    #[arg(long)]
    pub runs: Option<usize>,
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let (mut cfg, _): (CompareFileConfig, _) = config::load(&args.config)?;
    if let Some(runs) = args.runs {
        cfg.runs = runs;
    }
    let seed = resolve_seed(args.seed, cfg.seed)?;
    cfg.seed = Some(seed);

    if !(cfg.dt > 0.0 && cfg.dt <= 1.0) {
        return Err(CliError::Usage(format!(
            "dt = {} must lie in (0, 1] (unit loss rate stability bound)",
            cfg.dt
        )));
    }
    let initial = cfg.initial.build(cfg.length, cfg.nx, &cfg.velocities)?;
    let study = CompareConfig {
        kernel: cfg.kernel.to_core(),
        n_values: cfg.n_values.clone(),
        runs: cfg.runs,
        t: cfg.t,
        dt: cfg.dt,
        seed,
        chaos_nx: cfg.chaos_nx,
    };
    let report = convergence_study(&initial, &study)?;

    let mut out = OutputDir::create(&args.out)?;
    let rows: Vec<String> = report
        .points
        .iter()
        .map(|p| {
            format!(
                "{},{},{},{},{},{},{}",
                p.n, report.t, p.d_rho, p.d_rho_stderr, p.d_vel, p.d_vel_stderr, p.chaos_metric
            )
        })
        .collect();
    out.write_csv(
        "compare.csv",
        "N,t,d_rho,d_rho_stderr,d_vel,d_vel_stderr,chaos_metric",
        &rows,
    )?;
    out.finish(seed, config_snapshot(&cfg)?)?;

    let d_rho: Vec<f64> = report.points.iter().map(|p| p.d_rho).collect();
    let d_rho_err: Vec<f64> = report.points.iter().map(|p| p.d_rho_stderr).collect();
    let d_vel: Vec<f64> = report.points.iter().map(|p| p.d_vel).collect();
    let d_vel_err: Vec<f64> = report.points.iter().map(|p| p.d_vel_stderr).collect();
    let mut failures = Vec::new();
    if !decreasing_beyond_errors(&d_rho, &d_rho_err) {
        failures.push(format!("d_rho does not decrease beyond error bars: {d_rho:?}"));
    }
    if !decreasing_beyond_errors(&d_vel, &d_vel_err) {
        failures.push(format!("d_vel does not decrease beyond error bars: {d_vel:?}"));
    }
    if failures.is_empty() {
        println!("compare: distances decrease across the N ladder");
        Ok(())
    } else {
        Err(CliError::Check(failures.join("; ")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifySuite {
    Bernstein,
    Rank,
    Lemma,
    Sn,
    Changevar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelName {
    Constant,
    #[value(alias = "uniformcutoff")]
    UniformCutoff,
    #[value(alias = "smoothcutoff")]
    SmoothCutoff,
    #[value(alias = "powerlaw")]
    PowerLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestFn {
    /// f(t) = t^2: the 1/n correction is exact.
    Xsq,
    /// f(t) = t^3.
    Cube,
    /// f(t) = sin(pi t).
    Sinpi,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Which family of checks to run.
    #[arg(value_enum)]
    pub suite: VerifySuite,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Kernel family for the kernel-based suites.
    #[arg(long, value_enum, default_value = "smooth-cutoff")]
    pub kernel: KernelName,
    /// Cutoff location for the cutoff kernels.
    #[arg(long, default_value_t = 0.7)]
    pub theta: f64,
    /// Smoothing width of the smooth cutoff kernel.
    #[arg(long, default_value_t = 0.3)]
    pub eps: f64,
    /// Exponent of the power-law kernel.
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Evaluation point p in (0,1) for the rank suites.
    #[arg(long, default_value_t = 0.4)]
    pub p: f64,
    /// Evaluation point x in (0,1) for the Bernstein suite.
    #[arg(long, default_value_t = 0.37)]
    pub x: f64,
    /// Test function for the Bernstein suite.
    #[arg(long, value_enum, default_value = "xsq")]
    pub f: TestFn,
    /// Master seed for the Monte Carlo and randomised suites.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl VerifyArgs {
    fn kernel_config(&self) -> KernelConfig {
        match self.kernel {
            KernelName::Constant => KernelConfig::Constant,
            KernelName::UniformCutoff => KernelConfig::UniformCutoff { theta: self.theta },
            KernelName::SmoothCutoff => {
                KernelConfig::SmoothCutoff { theta: self.theta, eps: self.eps }
            }
            KernelName::PowerLaw => KernelConfig::PowerLaw { alpha: self.alpha, mirrored: false },
        }
    }
}

type ScalarFn = Box<dyn Fn(f64) -> f64>;

struct VerifyRow {
    check: &'static str,
    kernel: String,
    p_or_x: f64,
    size: usize,
    lhs: f64,
    leading: f64,
    corrected: f64,
    residual_leading: f64,
    residual_corrected: f64,
}

impl VerifyRow {
    fn from_report(check: &'static str, kernel: &str, p_or_x: f64, r: &ExpansionReport) -> Self {
        Self {
            check,
            kernel: kernel.to_string(),
            p_or_x,
            size: r.size,
            lhs: r.lhs,
            leading: r.leading,
            corrected: r.corrected,
            residual_leading: r.residual_leading,
            residual_corrected: r.residual_corrected,
        }
    }

    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.check,
            self.kernel,
            self.p_or_x,
            self.size,
            self.lhs,
            self.leading,
            self.corrected,
            self.residual_leading,
            self.residual_corrected
        )
    }
}

fn kernel_label(name: KernelName) -> &'static str {
    match name {
        KernelName::Constant => "constant",
        KernelName::UniformCutoff => "uniformcutoff",
        KernelName::SmoothCutoff => "smoothcutoff",
        KernelName::PowerLaw => "powerlaw",
    }
}

/// Expansion-ladder pass rule: either the corrected residual is at rounding
/// level everywhere (exact families), or `size * residual_corrected` decays
/// by at least a factor 2 from the smallest to the largest ladder size.
fn ladder_ok(rows: &[&VerifyRow]) -> bool {
    if rows.iter().all(|r| r.residual_corrected.abs() <= 1e-12) {
        return true;
    }
    let first = rows.first().unwrap();
    let last = rows.last().unwrap();
    let scaled_first = first.size as f64 * first.residual_corrected.abs();
    let scaled_last = last.size as f64 * last.residual_corrected.abs();
    scaled_last * 2.0 <= scaled_first
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed, None)?;
    let kernel_cfg = args.kernel_config();
    let kernel = kernel_cfg.to_core();
    kernel.validate()?;
    let label = kernel_label(args.kernel);

    let mut rows = Vec::new();
    let mut failures: Vec<String> = Vec::new();

    match args.suite {
        VerifySuite::Bernstein => {
            let (f, d2f): (ScalarFn, ScalarFn) = match args.f {
                TestFn::Xsq => (Box::new(|t: f64| t * t), Box::new(|_| 2.0)),
                TestFn::Cube => (Box::new(|t: f64| t * t * t), Box::new(|t: f64| 6.0 * t)),
                TestFn::Sinpi => {
                    let pi = std::f64::consts::PI;
                    (
                        Box::new(move |t: f64| (pi * t).sin()),
                        Box::new(move |t: f64| -pi * pi * (pi * t).sin()),
                    )
                }
            };
            for n in [100usize, 200, 400, 800, 1600] {
                let report = lorentz_expansion_check(&f, &d2f, args.x, n)?;
                rows.push(VerifyRow::from_report("bernstein", "-", args.x, &report));
            }
            let refs: Vec<&VerifyRow> = rows.iter().collect();
            if !ladder_ok(&refs) {
                failures.push("bernstein ladder does not decay at the corrected rate".into());
            }
        }
        VerifySuite::Rank => {
            let n = 50usize;
            let trials = 100_000usize;
            let metric = Metric::PeriodicLine { length: 1.0 };
            if !(0.0 < args.p && args.p < 1.0) {
                return Err(CliError::Usage(format!("p = {} must be in (0,1)", args.p)));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(sim::mix_seed(seed, 0x7A4E));
            let mut counts = vec![0u64; n - 1];
            let mut positions = vec![[0.0, 0.0]; n];
            positions[0] = [0.3, 0.0];
            positions[1] = [(0.3 + args.p / 2.0).rem_euclid(1.0), 0.0];
            for _ in 0..trials {
                for pos in positions.iter_mut().skip(2) {
                    *pos = [rng.gen::<f64>(), 0.0];
                }
                let (rank, _) = rank_of(&positions, &metric, 0, 1)?;
                counts[rank - 1] += 1;
            }
            let oracle = rank_distribution_oracle(args.p, n)?;
            let (stat, p_value) = chi_square_gof(&counts, &oracle, 5.0)?;
            let threshold = 1e-3;
            rows.push(VerifyRow {
                check: "rank",
                kernel: "-".into(),
                p_or_x: args.p,
                size: n,
                lhs: p_value,
                leading: threshold,
                corrected: stat,
                residual_leading: p_value - threshold,
                residual_corrected: p_value - threshold,
            });
            if p_value <= threshold {
                failures.push(format!(
                    "empirical rank law rejected: chi-square p-value {p_value} <= {threshold}"
                ));
            }
        }
        VerifySuite::Lemma => {
            if !kernel.is_smooth() {
                return Err(CliError::Usage(
                    "the lemma suite needs a twice-differentiable kernel".into(),
                ));
            }
            for case in [BallCase::InsideBall, BallCase::OutsideBall] {
                let check = match case {
                    BallCase::InsideBall => "lemma_inside",
                    BallCase::OutsideBall => "lemma_outside",
                };
                let start = rows.len();
                for n in [100usize, 200, 400, 800] {
                    let report = lemma_expansion_check(&kernel, args.p, n, case)?;
                    rows.push(VerifyRow::from_report(check, label, args.p, &report));
                }
                let refs: Vec<&VerifyRow> = rows[start..].iter().collect();
                if !ladder_ok(&refs) {
                    failures.push(format!("{check} ladder does not decay at the corrected rate"));
                }
            }
        }
        VerifySuite::Sn => {
            for n in [100usize, 200, 400, 800] {
                let report = sn_expansion_check(&kernel, n)?;
                rows.push(VerifyRow::from_report("sn", label, 0.0, &report));
            }
            let refs: Vec<&VerifyRow> = rows.iter().collect();
            if !ladder_ok(&refs) {
                failures.push("sn ladder does not decay at the corrected rate".into());
            }
        }
        VerifySuite::Changevar => {
            let nx = 64usize;
            let length = 1.0;
            let mut rng = ChaCha8Rng::seed_from_u64(sim::mix_seed(seed, 0xC0DE));
            let nv = 2usize;
            let mut f: Vec<f64> = (0..nx * nv).map(|_| rng.gen_range(0.1..2.0)).collect();
            let dx = length / nx as f64;
            let total: f64 = f.iter().map(|v| v * dx).sum();
            for v in &mut f {
                *v /= total;
            }
            let state = KineticState::new(length, nx, vec![-1.0, 1.0], f)?;
            let table = PartialMassTable::build(&state, &kernel)?;
            let k0 = kernel.eval(0.0, EvalOrder::Value)?;
            let kernel_for_h = kernel;
            let kernel_for_hp = kernel;
            let hs: Vec<(&str, ScalarFn)> = vec![
                ("changevar_one", Box::new(|t: f64| t)),
                (
                    "changevar_kernel",
                    Box::new(move |t: f64| kernel_for_h.eval(t, EvalOrder::Antiderivative).unwrap()),
                ),
                (
                    "changevar_kernel_prime",
                    Box::new(move |t: f64| {
                        kernel_for_hp.eval(t, EvalOrder::Value).unwrap() - k0
                    }),
                ),
            ];
            let tol = 1e-10;
            for (check, h) in &hs {
                for j in 1..=8usize {
                    let r = j as f64 * length / 16.0;
                    let mut worst = 0.0f64;
                    let mut worst_lhs = 0.0;
                    let mut worst_rhs = 0.0;
                    for m in 0..nx {
                        let (lhs, rhs) = change_of_variable_check(&state, &table, h, m, r);
                        let gap = (lhs - rhs).abs();
                        if gap >= worst {
                            worst = gap;
                            worst_lhs = lhs;
                            worst_rhs = rhs;
                        }
                    }
                    rows.push(VerifyRow {
                        check: match *check {
                            "changevar_one" => "changevar_one",
                            "changevar_kernel" => "changevar_kernel",
                            _ => "changevar_kernel_prime",
                        },
                        kernel: label.into(),
                        p_or_x: r,
                        size: nx,
                        lhs: worst_lhs,
                        leading: worst_rhs,
                        corrected: worst_rhs,
                        residual_leading: worst,
                        residual_corrected: worst,
                    });
                    if worst >= tol {
                        failures.push(format!(
                            "{check} identity gap {worst} at radius {r} exceeds {tol}"
                        ));
                    }
                }
            }
        }
    }

    let mut out = OutputDir::create(&args.out)?;
    let csv_rows: Vec<String> = rows.iter().map(VerifyRow::to_csv).collect();
    out.write_csv(
        "verify.csv",
        "check,kernel,p_or_x,size,lhs,leading,corrected,residual_leading,residual_corrected",
        &csv_rows,
    )?;
    let snapshot = serde_json::json!({
        "suite": format!("{:?}", args.suite).to_lowercase(),
        "kernel": kernel_cfg,
        "p": args.p,
        "x": args.x,
        "f": format!("{:?}", args.f).to_lowercase(),
    });
    out.finish(seed, snapshot)?;

    if failures.is_empty() {
        println!("verify: all checks passed");
        Ok(())
    } else {
        Err(CliError::Check(failures.join("; ")))
    }
}
