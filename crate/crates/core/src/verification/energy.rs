use std::f64::consts::PI;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{Discretization, Formulation, MixedState, Model};
use crate::error::{Error, Result};
use crate::femspace::{interpolate, FnField};
use crate::mechanics::MaterialParams;
use crate::mesh::{build_uniform_square_mesh, TagRule};
use crate::timeloop::{EnergySample, TimeIntegrator, TimeIntegratorConfig};

/// Free decay from a displaced rest state: no sources, homogeneous Dirichlet
/// data on the whole boundary of the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayConfig {
    pub formulation: Formulation,
    pub params: MaterialParams,
    pub n: usize,
    pub velocity_degree: usize,
    pub pressure_degree: usize,
    pub integrator: TimeIntegratorConfig,
    /// Largest Frobenius norm of the initial displacement gradient.
    pub max_gradient: f64,
    /// Picks the shape of the initial displacement.
    pub seed: u64,
    /// Allowed growth of the stored energy per step, relative to `1 + W`.
    pub slack: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            formulation: Formulation::FluidVelocity,
            params: MaterialParams::default(),
            n: 8,
            velocity_degree: 2,
            pressure_degree: 2,
            integrator: TimeIntegratorConfig { dt: 0.01, bdf_order: 1, t_end: 2.0, ..Default::default() },
            max_gradient: 0.1,
            seed: 1,
            slack: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecayResult {
    pub log: Vec<EnergySample>,
    /// Largest `(W_{k+1} - W_k) / (1 + W_k)` over all steps.
    pub max_increase: f64,
    /// Largest `(W_{k+1} + dt |p|_d^2 + D_k / 2 - W_k) / (1 + W_k)`.
    pub max_balance_excess: f64,
    pub passed: bool,
}

/// `sin^2(pi s)` and its first two derivatives.
fn profile(s: f64) -> [f64; 3] {
    [(PI * s).sin().powi(2), PI * (2.0 * PI * s).sin(), 2.0 * PI * PI * (2.0 * PI * s).cos()]
}

/// Displacement `curl psi` for the stream function
/// `psi = sin^2(pi x) sin^2(pi y) (1 + beta x)`, which vanishes on the
/// boundary together with its gradient. Returns the value and gradient of
/// `u = (psi_y, -psi_x)`.
fn stream_displacement(x: [f64; 2], beta: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let ([sx, dsx, ddsx], [sy, dsy, ddsy]) = (profile(x[0]), profile(x[1]));
    let l = 1.0 + beta * x[0];
    let psi_x = dsx * sy * l + beta * sx * sy;
    let psi_y = sx * dsy * l;
    let psi_xx = ddsx * sy * l + 2.0 * beta * dsx * sy;
    let psi_xy = dsx * dsy * l + beta * sx * dsy;
    let psi_yy = sx * ddsy * l;
    ([psi_y, -psi_x], [[psi_xy, psi_yy], [-psi_xx, -psi_xy]])
}

fn max_gradient_norm(beta: f64) -> f64 {
    let m = 400;
    let mut best = 0.0f64;
    for i in 0..=m {
        for j in 0..=m {
            let g = stream_displacement([i as f64 / m as f64, j as f64 / m as f64], beta).1;
            best = best.max((g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2)).sqrt());
        }
    }
    best
}

/// Initial state at rest with a divergence-free displacement whose shape is
/// picked by the seed, scaled so that `max |grad u| = cfg.max_gradient` on a
/// fine sampling grid.
pub fn decay_initial_state(disc: &Discretization, cfg: &DecayConfig) -> MixedState {
    let beta = ChaCha8Rng::seed_from_u64(cfg.seed).random_range(-0.5..0.5);
    let a = cfg.max_gradient / max_gradient_norm(beta);
    let field = FnField {
        components: 2,
        value: move |x: [f64; 2], _t: f64| {
            let u = stream_displacement(x, beta).0;
            [a * u[0], a * u[1]]
        },
        gradient: move |x: [f64; 2], _t: f64| {
            let g = stream_displacement(x, beta).1;
            [[a * g[0][0], a * g[0][1]], [a * g[1][0], a * g[1][1]]]
        },
    };
    let mut state = MixedState::zeros(disc, cfg.formulation);
    state.u_s = interpolate(&disc.velocity, &field, 0.0);
    state
}

pub fn energy_decay(cfg: &DecayConfig) -> Result<DecayResult> {
    cfg.params.validate()?;
    if !(cfg.slack >= 0.0) || !(cfg.max_gradient > 0.0) {
        return Err(Error::InvalidArgument("slack must be nonnegative and max_gradient positive".into()));
    }
    let mesh = Arc::new(build_uniform_square_mesh(1.0, cfg.n, &TagRule::AllDirichlet)?);
    let disc = Discretization::new(mesh, cfg.velocity_degree, cfg.pressure_degree)?;
    let model = Model::new(cfg.formulation, cfg.params);
    let initial = decay_initial_state(&disc, cfg);
    let mut integ = TimeIntegrator::new(&disc, &model, cfg.integrator, initial, 0.0)?;
    integ.run(|_, _| Ok(()))?;
    let log = integ.into_history().energy_log;
    let mut max_increase = f64::NEG_INFINITY;
    let mut max_balance_excess = f64::NEG_INFINITY;
    for pair in log.windows(2) {
        let (old, new) = (&pair[0], &pair[1]);
        let scale = 1.0 + old.stored.abs();
        let dt = new.t - old.t;
        max_increase = max_increase.max((new.stored - old.stored) / scale);
        let balance = new.stored + dt * new.pressure_seminorm_sq + 0.5 * new.dissipation_increment - old.stored;
        max_balance_excess = max_balance_excess.max(balance / scale);
    }
    let passed = max_increase <= cfg.slack;
    Ok(DecayResult { log, max_increase, max_balance_excess, passed })
}
