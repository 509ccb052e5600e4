//! Manufactured-solution convergence studies and the volume-fraction sweep.

mod energy;
mod mms;
mod report;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

pub use energy::{decay_initial_state, energy_decay, DecayConfig, DecayResult};
pub use mms::{Hessian, ManufacturedSolution, MmsExact, MmsField, MmsSources};
pub use report::{format_rate, ConvergenceReport, SweepEntry, SweepReport};

use crate::assembly::system::assemble_at;
use crate::assembly::{
    recover_filtration_velocity, recover_fluid_velocity, Discretization, Formulation, MixedState, Model, SourceSamples,
    TimeCoupling,
};
use crate::error::{Error, Result};
use crate::femspace::{error_norms, interpolate, DiscreteField};
use crate::mechanics::MaterialParams;
use crate::mesh::{build_uniform_square_mesh, TagRule};
use crate::timeloop::{EnergySample, TimeIntegrator, TimeIntegratorConfig};

/// `log2(e_coarse / e_fine)`, or `None` when either error is not positive.
pub fn compute_rate(e_coarse: f64, e_fine: f64) -> Option<f64> {
    (e_coarse > 0.0 && e_fine > 0.0 && e_coarse.is_finite() && e_fine.is_finite()).then(|| (e_coarse / e_fine).log2())
}

/// One measured error: a field and either its L2 norm or H1 seminorm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    UsL2,
    UsH1,
    VsL2,
    VsH1,
    VfL2,
    VfltL2,
    PL2,
    PH1,
}

impl Norm {
    pub const ALL: [Norm; 8] =
        [Norm::UsL2, Norm::UsH1, Norm::VsL2, Norm::VsH1, Norm::VfL2, Norm::VfltL2, Norm::PL2, Norm::PH1];

    pub fn field(self) -> MmsField {
        match self {
            Norm::UsL2 | Norm::UsH1 => MmsField::Displacement,
            Norm::VsL2 | Norm::VsH1 => MmsField::SolidVelocity,
            Norm::VfL2 => MmsField::FluidVelocity,
            Norm::VfltL2 => MmsField::FiltrationVelocity,
            Norm::PL2 | Norm::PH1 => MmsField::Pressure,
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            Norm::UsH1 | Norm::VsH1 | Norm::PH1 => "H1",
            _ => "L2",
        }
    }

    pub fn index(self) -> usize {
        Norm::ALL.iter().position(|&n| n == self).expect("listed")
    }
}

/// Whether a level is actually solved or replaced by the interpolant of the
/// manufactured fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Solve,
    ExactInjection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyParams {
    pub formulation: Formulation,
    pub params: MaterialParams,
    pub velocity_degree: usize,
    pub pressure_degree: usize,
    /// Cells per side for each level, coarse to fine.
    pub levels: Vec<usize>,
    pub integrator: TimeIntegratorConfig,
    pub report_times: Vec<f64>,
    pub solution: ManufacturedSolution,
    pub mode: SolveMode,
    /// Levels solved concurrently.
    pub jobs: usize,
}

impl Default for StudyParams {
    fn default() -> Self {
        StudyParams {
            formulation: Formulation::FluidVelocity,
            params: MaterialParams::default(),
            velocity_degree: 2,
            pressure_degree: 2,
            levels: vec![4, 8, 16, 32],
            integrator: TimeIntegratorConfig::default(),
            report_times: vec![0.7, 1.0],
            solution: ManufacturedSolution::default(),
            mode: SolveMode::Solve,
            jobs: 1,
        }
    }
}

impl StudyParams {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.integrator.validate()?;
        if self.levels.is_empty() || self.levels.contains(&0) {
            return Err(Error::InvalidArgument("levels must be a nonempty list of positive cell counts".into()));
        }
        if let Some(t) = self.report_times.iter().find(|&&t| !(0.0..=self.integrator.t_end).contains(&t)) {
            return Err(Error::InvalidArgument(format!("report time {t} outside [0, t_end]")));
        }
        Ok(())
    }

    pub fn h(&self, n: usize) -> f64 {
        self.solution.length / n as f64
    }
}

/// Errors of one level at one report time, indexed like [`Norm::ALL`].
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    pub errors: [f64; 8],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub n: usize,
    pub h: f64,
    pub samples: Vec<ErrorSample>,
    pub failure: Option<String>,
    pub newton_iterations: usize,
    /// Some recovery saw a fluid weight below the conditioning floor.
    pub ill_conditioned: bool,
    /// Per-step energy log of the solve; empty for injected levels.
    pub energy_log: Vec<EnergySample>,
}

impl LevelResult {
    pub fn error(&self, t: f64, norm: Norm) -> Option<f64> {
        if self.failure.is_some() {
            return None;
        }
        self.samples.iter().find(|s| same_time(s.t, t)).map(|s| s.errors[norm.index()])
    }
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + b.abs())
}

/// Builds the discretization and model of one study level.
pub fn level_problem(cfg: &StudyParams, n: usize) -> Result<(Discretization, Model)> {
    let mesh = Arc::new(build_uniform_square_mesh(cfg.solution.length, n, &TagRule::AllDirichlet)?);
    let disc = Discretization::new(mesh, cfg.velocity_degree, cfg.pressure_degree)?;
    let sources = MmsSources::new(cfg.solution, cfg.formulation, cfg.params);
    let model = Model::new(cfg.formulation, cfg.params).with_sources(Arc::new(sources));
    Ok((disc, model))
}

/// Interpolant of the manufactured fields at `t`. The multiplier is zero.
pub fn interpolated_state(disc: &Discretization, cfg: &StudyParams, t: f64) -> MixedState {
    let (ms, xi) = (&cfg.solution, cfg.params.xi_rs);
    let third = match cfg.formulation {
        Formulation::FluidVelocity => MmsField::FluidVelocity,
        Formulation::FiltrationVelocity => MmsField::FiltrationVelocity,
    };
    MixedState {
        u_s: interpolate(&disc.velocity, &ms.field(MmsField::Displacement, xi), t),
        v_s: interpolate(&disc.velocity, &ms.field(MmsField::SolidVelocity, xi), t),
        w: interpolate(&disc.velocity, &ms.field(third, xi), t),
        p: interpolate(&disc.pressure, &ms.field(MmsField::Pressure, xi), t),
        multiplier: 0.0,
        formulation: cfg.formulation,
    }
}

/// All eight error norms of `state` at `t`, recovering whichever of the fluid
/// and filtration velocities is not a primary unknown.
pub fn measure_errors(state: &MixedState, cfg: &StudyParams, t: f64) -> Result<([f64; 8], bool)> {
    let (ms, xi) = (&cfg.solution, cfg.params.xi_rs);
    let norms = |field: &DiscreteField, which: MmsField| error_norms(field, &ms.field(which, xi), t);
    let (us_l2, us_h1) = norms(&state.u_s, MmsField::Displacement)?;
    let (vs_l2, vs_h1) = norms(&state.v_s, MmsField::SolidVelocity)?;
    let (p_l2, p_h1) = norms(&state.p, MmsField::Pressure)?;
    let (vf, vflt, ill) = match state.formulation {
        Formulation::FluidVelocity => {
            let r = recover_filtration_velocity(state, &cfg.params)?;
            (
                norms(&state.w, MmsField::FluidVelocity)?.0,
                norms(&r.field, MmsField::FiltrationVelocity)?.0,
                r.ill_conditioned,
            )
        }
        Formulation::FiltrationVelocity => {
            let r = recover_fluid_velocity(state, &cfg.params)?;
            (
                norms(&r.field, MmsField::FluidVelocity)?.0,
                norms(&state.w, MmsField::FiltrationVelocity)?.0,
                r.ill_conditioned,
            )
        }
    };
    Ok(([us_l2, us_h1, vs_l2, vs_h1, vf, vflt, p_l2, p_h1], ill))
}

/// Solves (or injects) one level and measures the errors at the report times.
/// Solver failures are recorded in the result, not returned.
pub fn run_level(cfg: &StudyParams, n: usize) -> LevelResult {
    let mut result = LevelResult {
        n,
        h: cfg.h(n),
        samples: Vec::new(),
        failure: None,
        newton_iterations: 0,
        ill_conditioned: false,
        energy_log: Vec::new(),
    };
    if let Err(e) = solve_level(cfg, n, &mut result) {
        result.failure = Some(e.to_string());
    }
    result
}

fn solve_level(cfg: &StudyParams, n: usize, result: &mut LevelResult) -> Result<()> {
    let (disc, model) = level_problem(cfg, n)?;
    let record = |t: f64, state: &MixedState, out: &mut LevelResult| -> Result<()> {
        if cfg.report_times.iter().any(|&r| same_time(r, t)) {
            let (errors, ill) = measure_errors(state, cfg, t)?;
            out.ill_conditioned |= ill;
            out.samples.push(ErrorSample { t, errors });
        }
        Ok(())
    };
    match cfg.mode {
        SolveMode::ExactInjection => {
            for &t in &cfg.report_times {
                record(t, &interpolated_state(&disc, cfg, t), result)?;
            }
        }
        SolveMode::Solve => {
            let mut initial = interpolated_state(&disc, cfg, 0.0);
            initial.p.coefficients.iter_mut().for_each(|c| *c = 0.0);
            let mut integ = TimeIntegrator::new(&disc, &model, cfg.integrator, initial, 0.0)?;
            record(0.0, integ.state(), result)?;
            let mut pending = Ok(());
            integ.run(|t, s| {
                if pending.is_ok() {
                    pending = record(t, s, result);
                }
                pending.clone()
            })?;
            result.energy_log = integ.into_history().energy_log;
            result.newton_iterations = result.energy_log.iter().map(|e| e.newton_iters).sum();
        }
    }
    Ok(())
}

/// Runs `work` over `items` with at most `jobs` threads, keeping input order.
pub fn run_parallel<T: Sync, R: Send>(items: &[T], jobs: usize, work: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(work).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = work(&items[i]);
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("workers joined").into_iter().map(|r| r.expect("every item ran")).collect()
}

/// Uniform-refinement study over `cfg.levels`.
pub fn run_convergence_study(cfg: &StudyParams) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let levels = run_parallel(&cfg.levels, cfg.jobs, |&n| run_level(cfg, n));
    Ok(ConvergenceReport { config: cfg.clone(), levels })
}

/// Fixed-level errors for every combination of formulation and volume
/// fraction. Uses the finest level of `base`.
pub fn xi_sweep(base: &StudyParams, xis: &[f64], formulations: &[Formulation]) -> Result<SweepReport> {
    base.validate()?;
    let n = *base.levels.last().expect("validated nonempty");
    let mut cases = Vec::new();
    for &formulation in formulations {
        for &xi in xis {
            if !(xi > 0.0 && xi < 1.0) {
                return Err(Error::InvalidArgument(format!("xi_Rs {xi} outside (0, 1)")));
            }
            let mut cfg = base.clone();
            cfg.formulation = formulation;
            cfg.params.xi_rs = xi;
            cfg.levels = vec![n];
            cases.push(cfg);
        }
    }
    let entries = run_parallel(&cases, base.jobs, |cfg| SweepEntry {
        formulation: cfg.formulation,
        xi_rs: cfg.params.xi_rs,
        result: run_level(cfg, n),
    });
    Ok(SweepReport { config: base.clone(), n, entries })
}

/// Residual of the discrete system at the interpolated manufactured solution,
/// with the displacement rate set to the interpolated solid velocity.
///
/// The Euclidean norm of the residual vector is divided by `h`, which makes it
/// scale like a norm of the residual density.
pub fn consistency_residual(cfg: &StudyParams, n: usize, t: f64) -> Result<f64> {
    let (disc, model) = level_problem(cfg, n)?;
    let state = interpolated_state(&disc, cfg, t);
    let coupling = TimeCoupling::Rate { alpha: 0.0, offset: state.v_s.coefficients.clone() };
    let samples = SourceSamples::new(&disc, &*model.sources, t);
    let r = assemble_at(&disc, &model, &state.to_vector(), &coupling, &samples, false)?.residual;
    Ok(r.iter().map(|v| v * v).sum::<f64>().sqrt() / cfg.h(n))
}
