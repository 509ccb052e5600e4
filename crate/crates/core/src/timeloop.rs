//! Fixed-step BDF time integration with a Newton solver over the assembled
//! system.

use std::collections::VecDeque;
use std::io::Write;

use crate::assembly::system::assemble_at;
use crate::assembly::{energy_terms, Discretization, MixedState, Model, SourceSamples, TimeCoupling};
use crate::error::{Error, Result};
use crate::linsolve::{SparseLu, SparseMatrix, TripletList};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeIntegratorConfig {
    pub dt: f64,
    pub bdf_order: usize,
    pub t_end: f64,
    /// Tolerance on the max-norm of the residual.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub line_search: bool,
    /// Keep the factored Jacobian across iterations and steps while the
    /// residual keeps contracting.
    pub reuse_jacobian: bool,
}

impl Default for TimeIntegratorConfig {
    fn default() -> Self {
        TimeIntegratorConfig {
            dt: 0.002,
            bdf_order: 2,
            t_end: 1.0,
            newton_tol: 1e-11,
            newton_max_iter: 25,
            line_search: false,
            reuse_jacobian: true,
        }
    }
}

impl TimeIntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(1..=2).contains(&self.bdf_order) {
            return Err(Error::InvalidArgument(format!("bdf_order must be 1 or 2, got {}", self.bdf_order)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidArgument("newton tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }

    pub fn newton(&self) -> NewtonConfig {
        NewtonConfig {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
            line_search: self.line_search,
            reuse_jacobian: self.reuse_jacobian,
        }
    }
}

/// BDF weights: `dy/dt ~ (a0 y + a1 y_1 + a2 y_2) / dt` with `y_1` the most
/// recent history value.
pub fn bdf_weights(order: usize) -> Result<[f64; 3]> {
    match order {
        1 => Ok([1.0, -1.0, 0.0]),
        2 => Ok([1.5, -2.0, 0.5]),
        _ => Err(Error::InvalidArgument(format!("unsupported BDF order {order}"))),
    }
}

/// `(alpha, offset)` such that the discrete derivative is `alpha y + offset`.
pub fn bdf_rate(history: &[&[f64]], dt: f64, order: usize) -> Result<(f64, Vec<f64>)> {
    if history.len() < order {
        return Err(Error::Startup(format!("BDF{order} needs {order} history levels, have {}", history.len())));
    }
    let w = bdf_weights(order)?;
    let n = history[0].len();
    let mut offset = vec![0.0; n];
    for (k, h) in history.iter().take(order).enumerate() {
        for (o, v) in offset.iter_mut().zip(h.iter()) {
            *o += w[k + 1] * v / dt;
        }
    }
    Ok((w[0] / dt, offset))
}

/// Discrete time derivative of `candidate` given the most-recent-first history.
pub fn bdf_time_derivative(history: &[&[f64]], candidate: &[f64], dt: f64, order: usize) -> Result<Vec<f64>> {
    let (alpha, offset) = bdf_rate(history, dt, order)?;
    Ok(candidate.iter().zip(offset).map(|(y, o)| alpha * y + o).collect())
}

/// A square nonlinear system with a sparse Jacobian.
pub trait NonlinearSystem {
    fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>>;
    fn residual_and_jacobian(&mut self, x: &[f64]) -> Result<(Vec<f64>, SparseMatrix)>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub line_search: bool,
    pub reuse_jacobian: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { tol: 1e-11, max_iter: 25, line_search: false, reuse_jacobian: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    pub factorizations: usize,
    pub residual_norm: f64,
}

/// Factorization carried between Newton solves.
#[derive(Debug, Default)]
pub struct NewtonWorkspace {
    lu: Option<SparseLu>,
    stale: bool,
}

impl NewtonWorkspace {
    /// Forces a fresh Jacobian at the next iteration.
    pub fn invalidate(&mut self) {
        self.stale = true;
    }
}

fn max_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Contraction factor beyond which a reused factorization is refreshed.
const REFRESH_RATIO: f64 = 0.15;

/// Newton iteration `x <- x - J^{-1} r` until `max |r| <= tol`.
///
/// With `reuse_jacobian` the factorization in `ws` is kept while each step
/// reduces the residual by at least [`REFRESH_RATIO`]; any worse step triggers a refresh.
/// The line search halves the step up to eight times while the residual
/// grows (or the state becomes inadmissible).
pub fn newton_solve(
    sys: &mut dyn NonlinearSystem,
    guess: Vec<f64>,
    cfg: &NewtonConfig,
    ws: &mut NewtonWorkspace,
) -> Result<(Vec<f64>, NewtonReport)> {
    let mut x = guess;
    let mut r = sys.residual(&x)?;
    let mut norm = max_norm(&r);
    let mut report = NewtonReport { residual_norm: norm, ..Default::default() };
    if !norm.is_finite() {
        return Err(Error::MaxIterationsExceeded { iterations: 0, residual: norm });
    }
    if !cfg.reuse_jacobian {
        ws.stale = true;
    }
    while norm > cfg.tol {
        if report.iterations >= cfg.max_iter {
            return Err(Error::MaxIterationsExceeded { iterations: report.iterations, residual: norm });
        }
        let fresh = ws.lu.is_none() || ws.stale;
        if fresh {
            let (r_new, jac) = sys.residual_and_jacobian(&x)?;
            r = r_new;
            match ws.lu.as_mut() {
                Some(lu) => lu.refactor(&jac)?,
                None => ws.lu = Some(SparseLu::factor(&jac)?),
            }
            ws.stale = !cfg.reuse_jacobian;
            report.factorizations += 1;
        }
        let dx = ws.lu.as_ref().expect("factorization present").solve(&r)?;
        report.iterations += 1;

        let mut step = 1.0;
        let mut halvings = 0;
        let (x_new, r_new, norm_new) = loop {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - step * d).collect();
            let outcome = match sys.residual(&trial) {
                Ok(rt) => {
                    let n = max_norm(&rt);
                    Some((rt, n))
                }
                Err(e @ (Error::InvertedElement { .. } | Error::VolumeFractionViolation { .. })) => {
                    if !cfg.line_search {
                        return Err(e);
                    }
                    None
                }
                Err(e) => return Err(e),
            };
            let accept = match &outcome {
                Some((_, n)) => !cfg.line_search || *n < norm || halvings == 8,
                None => false,
            };
            if accept {
                let (rt, n) = outcome.expect("accepted outcome");
                break (trial, rt, n);
            }
            if halvings == 8 {
                return Err(Error::MaxIterationsExceeded { iterations: report.iterations, residual: norm });
            }
            step *= 0.5;
            halvings += 1;
        };

        if !fresh && cfg.reuse_jacobian && norm_new > cfg.tol && norm_new > REFRESH_RATIO * norm {
            ws.stale = true;
            if norm_new >= norm {
                // A stale Jacobian made things worse: retry from the same point.
                continue;
            }
        }
        if !norm_new.is_finite() {
            return Err(Error::MaxIterationsExceeded { iterations: report.iterations, residual: norm_new });
        }
        x = x_new;
        r = r_new;
        norm = norm_new;
        report.residual_norm = norm;
    }
    Ok((x, report))
}

/// One energy-log row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    pub t: f64,
    pub stored: f64,
    /// `dt` times the dissipation at the new level.
    pub dissipation_increment: f64,
    pub pressure_seminorm_sq: f64,
    pub newton_iters: usize,
}

/// Most recent states, newest first, and the per-step energy log.
#[derive(Debug, Clone, Default)]
pub struct TimeHistory {
    pub states: VecDeque<(f64, MixedState)>,
    pub energy_log: Vec<EnergySample>,
    capacity: usize,
}

impl TimeHistory {
    pub fn new(capacity: usize) -> Self {
        TimeHistory { states: VecDeque::with_capacity(capacity + 1), energy_log: Vec::new(), capacity: capacity.max(1) }
    }

    pub fn push(&mut self, t: f64, state: MixedState) -> Result<()> {
        if let Some((t_last, _)) = self.states.front() {
            if !(t > *t_last) {
                return Err(Error::InvalidArgument(format!("time {t} does not follow {t_last}")));
            }
        }
        self.states.push_front((t, state));
        self.states.truncate(self.capacity);
        Ok(())
    }

    pub fn latest(&self) -> Option<&(f64, MixedState)> {
        self.states.front()
    }

    /// Writes the energy log; see [`write_energy_log`].
    pub fn write_energy_csv<W: Write>(&self, out: W) -> Result<()> {
        write_energy_log(&self.energy_log, out)
    }
}

/// Energy log as CSV with columns `t,W,D_increment,p_seminorm_sq,newton_iters`.
pub fn write_energy_log<W: Write>(log: &[EnergySample], mut out: W) -> Result<()> {
    writeln!(out, "t,W,D_increment,p_seminorm_sq,newton_iters")?;
    for s in log {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{}",
            s.t, s.stored, s.dissipation_increment, s.pressure_seminorm_sq, s.newton_iters
        )?;
    }
    Ok(())
}

struct StepSystem<'a> {
    disc: &'a Discretization,
    model: &'a Model,
    coupling: TimeCoupling,
    samples: SourceSamples,
}

impl NonlinearSystem for StepSystem<'_> {
    fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(assemble_at(self.disc, self.model, x, &self.coupling, &self.samples, false)?.residual)
    }

    fn residual_and_jacobian(&mut self, x: &[f64]) -> Result<(Vec<f64>, SparseMatrix)> {
        let s = assemble_at(self.disc, self.model, x, &self.coupling, &self.samples, true)?;
        Ok((s.residual, s.jacobian.expect("jacobian requested")))
    }
}

/// A BDF step with the displacement eliminated.
///
/// The kinematic rows are linear, so away from Dirichlet nodes they fix
/// `u = (v_s - offset) / alpha`. The unknowns are every block from `v_s`
/// onwards; pinned displacement coefficients keep their boundary value.
struct ReducedStep<'a> {
    inner: StepSystem<'a>,
    alpha: f64,
    offset: Vec<f64>,
    /// Dirichlet value of each displacement coefficient, if pinned.
    pinned: Vec<Option<f64>>,
}

impl<'a> ReducedStep<'a> {
    fn new(inner: StepSystem<'a>, alpha: f64, offset: Vec<f64>) -> Self {
        let l = inner.disc.layout;
        debug_assert!(l.u == 0 && l.v_s == l.n_velocity);
        let mut pinned = vec![None; l.n_velocity];
        for &(dof, value) in inner.samples.dirichlet() {
            if dof < l.v_s {
                pinned[dof] = Some(value);
            }
        }
        ReducedStep { inner, alpha, offset, pinned }
    }

    fn expand(&self, z: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.pinned.len() + z.len());
        for (i, pin) in self.pinned.iter().enumerate() {
            x.push(pin.unwrap_or_else(|| (z[i] - self.offset[i]) / self.alpha));
        }
        x.extend_from_slice(z);
        x
    }

    fn reduce(&self, full: &[f64]) -> Vec<f64> {
        full[self.pinned.len()..].to_vec()
    }
}

impl NonlinearSystem for ReducedStep<'_> {
    fn residual(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        let r = self.inner.residual(&self.expand(z))?;
        Ok(self.reduce(&r))
    }

    fn residual_and_jacobian(&mut self, z: &[f64]) -> Result<(Vec<f64>, SparseMatrix)> {
        let (r, jac) = self.inner.residual_and_jacobian(&self.expand(z))?;
        let nu = self.pinned.len();
        let n = z.len();
        let a = jac.as_ref();
        let (col_ptr, row_idx, val) = (a.symbolic().col_ptr(), a.symbolic().row_idx(), a.val());
        let mut t = TripletList::with_capacity(n, n, val.len());
        for j in 0..a.ncols() {
            let (col, scale) = if j < nu {
                match self.pinned[j] {
                    Some(_) => continue,
                    None => (j, 1.0 / self.alpha),
                }
            } else {
                (j - nu, 1.0)
            };
            for k in col_ptr[j]..col_ptr[j + 1] {
                if row_idx[k] >= nu {
                    t.push(row_idx[k] - nu, col, scale * val[k]);
                }
            }
        }
        Ok((self.reduce(&r), t.build()?))
    }
}

/// States kept for the step predictor; at least the BDF order.
const PREDICTOR_LEVELS: usize = 3;

/// Drives one solve from an initial state to `t_end`.
pub struct TimeIntegrator<'a> {
    disc: &'a Discretization,
    model: &'a Model,
    cfg: TimeIntegratorConfig,
    history: TimeHistory,
    workspace: NewtonWorkspace,
    last_alpha: f64,
    steps: usize,
}

impl<'a> TimeIntegrator<'a> {
    /// Completes the initial state: displacement and solid velocity are kept,
    /// the third velocity, pressure and multiplier are solved for at `t0`.
    pub fn new(
        disc: &'a Discretization,
        model: &'a Model,
        cfg: TimeIntegratorConfig,
        initial: MixedState,
        t0: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        if initial.formulation != model.formulation {
            return Err(Error::InvalidArgument("initial state and model use different formulations".into()));
        }
        let mut sys = StepSystem {
            disc,
            model,
            coupling: TimeCoupling::Frozen {
                u_s: initial.u_s.coefficients.clone(),
                v_s: initial.v_s.coefficients.clone(),
            },
            samples: SourceSamples::new(disc, &*model.sources, t0),
        };
        let newton = NewtonConfig { reuse_jacobian: false, ..cfg.newton() };
        let mut ws = NewtonWorkspace::default();
        let (x, report) = newton_solve(&mut sys, initial.to_vector(), &newton, &mut ws)?;
        let state = MixedState::from_vector(disc, model.formulation, &x)?;
        let mut history = TimeHistory::new(PREDICTOR_LEVELS);
        let e = energy_terms(disc, model, &state)?;
        history.energy_log.push(EnergySample {
            t: t0,
            stored: e.stored,
            dissipation_increment: 0.0,
            pressure_seminorm_sq: e.pressure_seminorm_sq,
            newton_iters: report.iterations,
        });
        history.push(t0, state)?;
        Ok(TimeIntegrator {
            disc,
            model,
            cfg,
            history,
            workspace: NewtonWorkspace::default(),
            last_alpha: f64::NAN,
            steps: 0,
        })
    }

    pub fn history(&self) -> &TimeHistory {
        &self.history
    }

    pub fn into_history(self) -> TimeHistory {
        self.history
    }

    pub fn time(&self) -> f64 {
        self.history.latest().expect("history is never empty").0
    }

    pub fn state(&self) -> &MixedState {
        &self.history.latest().expect("history is never empty").1
    }

    /// Solves the implicit step to `t_next`; the first step of a BDF2 run
    /// uses BDF1.
    pub fn advance(&mut self, t_next: f64) -> Result<&MixedState> {
        let t = self.history.latest().expect("history is never empty").0;
        let dt = t_next - t;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("t_next {t_next} must exceed {t}")));
        }
        let order = self.cfg.bdf_order.min(self.history.states.len());
        let levels: Vec<&[f64]> = self.history.states.iter().map(|(_, s)| s.u_s.coefficients.as_slice()).collect();
        let (alpha, offset) = bdf_rate(&levels, dt, order)?;
        if !((alpha - self.last_alpha).abs() <= 1e-9 * alpha.abs()) {
            self.workspace.invalidate();
            self.last_alpha = alpha;
        }
        let guess = self.predict(t_next);
        let inner = StepSystem {
            disc: self.disc,
            model: self.model,
            coupling: TimeCoupling::Rate { alpha, offset: offset.clone() },
            samples: SourceSamples::new(self.disc, &*self.model.sources, t_next),
        };
        let (x, report) = if alpha > 0.0 {
            let mut sys = ReducedStep::new(inner, alpha, offset);
            let z = sys.reduce(&guess);
            let (z, report) = newton_solve(&mut sys, z, &self.cfg.newton(), &mut self.workspace)?;
            (sys.expand(&z), report)
        } else {
            let mut sys = inner;
            newton_solve(&mut sys, guess, &self.cfg.newton(), &mut self.workspace)?
        };
        let state = MixedState::from_vector(self.disc, self.model.formulation, &x)?;
        let e = energy_terms(self.disc, self.model, &state)?;
        self.history.energy_log.push(EnergySample {
            t: t_next,
            stored: e.stored,
            dissipation_increment: dt * e.dissipation,
            pressure_seminorm_sq: e.pressure_seminorm_sq,
            newton_iters: report.iterations,
        });
        self.history.push(t_next, state)?;
        self.steps += 1;
        Ok(self.state())
    }

    /// Polynomial extrapolation through the stored levels.
    fn predict(&self, t_next: f64) -> Vec<f64> {
        let levels: Vec<(f64, Vec<f64>)> = self.history.states.iter().map(|(t, s)| (*t, s.to_vector())).collect();
        let mut guess = vec![0.0; levels[0].1.len()];
        for (i, (ti, xi)) in levels.iter().enumerate() {
            let weight: f64 = levels
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, (tj, _))| (t_next - tj) / (ti - tj))
                .product();
            for (g, v) in guess.iter_mut().zip(xi) {
                *g += weight * v;
            }
        }
        guess
    }

    /// Steps with the configured `dt` until `t_end`, calling `observe` after
    /// every step. Step times are `t0 + k dt` to avoid drift.
    pub fn run(&mut self, mut observe: impl FnMut(f64, &MixedState) -> Result<()>) -> Result<()> {
        let t0 = self.time() - self.steps as f64 * self.cfg.dt;
        let n = ((self.cfg.t_end - t0) / self.cfg.dt - 1e-9).ceil() as usize;
        for k in self.steps + 1..=n {
            let t_next = (t0 + k as f64 * self.cfg.dt).min(self.cfg.t_end);
            self.advance(t_next)?;
            let (t, s) = self.history.latest().expect("just pushed");
            observe(*t, s)?;
        }
        Ok(())
    }
}
