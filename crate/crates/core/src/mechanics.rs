//! Pointwise kinematics and hyperelastic response of the solid skeleton.

use nalgebra::Matrix2;

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<f64>;

/// Fourth-order tangent `A[i][j][k][l] = dP_ij / dF_kl`.
pub type Tangent = [[[[f64; 2]; 2]; 2]; 2];

/// Material constants of the mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub rho_s_star: f64,
    pub rho_f_star: f64,
    pub mu_f: f64,
    pub k_s: f64,
    pub g: f64,
    /// Referential solid volume fraction, uniform over the body.
    pub xi_rs: f64,
    /// Reject states with `J <= xi_rs`. Turning this off lets the fluid
    /// fraction `1 - xi_rs / J` go nonpositive, which only makes sense for
    /// studying how the discretization degrades as it approaches zero.
    pub enforce_volume_fraction: bool,
}

impl MaterialParams {
    /// Unit constants with the given referential volume fraction.
    pub fn unit(xi_rs: f64) -> Self {
        MaterialParams {
            rho_s_star: 1.0,
            rho_f_star: 1.0,
            mu_f: 1.0,
            k_s: 1.0,
            g: 1.0,
            xi_rs,
            enforce_volume_fraction: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("rho_s_star", self.rho_s_star),
            ("rho_f_star", self.rho_f_star),
            ("mu_f", self.mu_f),
            ("k_s", self.k_s),
            ("G", self.g),
        ];
        for (name, v) in named {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.xi_rs > 0.0 && self.xi_rs < 1.0) {
            return Err(Error::InvalidArgument(format!("xi_Rs must lie in (0, 1), got {}", self.xi_rs)));
        }
        Ok(())
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams::unit(0.5)
    }
}

/// Deformation measures at one material point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicPoint {
    pub f: Mat2,
    pub j: f64,
    pub c: Mat2,
    pub f_inv: Mat2,
    pub c_inv: Mat2,
    pub xi_s: f64,
    pub xi_f: f64,
}

/// Kinematics of `F = I + grad_u`, rejecting inverted or over-compressed states.
pub fn kinematics_at(grad_u: &Mat2, params: &MaterialParams) -> Result<KinematicPoint> {
    let f = Mat2::identity() + grad_u;
    let j = f[(0, 0)] * f[(1, 1)] - f[(0, 1)] * f[(1, 0)];
    if !(j > 0.0) {
        return Err(Error::InvertedElement { cell: None, j });
    }
    if params.enforce_volume_fraction && j <= params.xi_rs {
        return Err(Error::VolumeFractionViolation { cell: None, j, xi: params.xi_rs });
    }
    let f_inv = Mat2::new(f[(1, 1)], -f[(0, 1)], -f[(1, 0)], f[(0, 0)]) / j;
    let c = f.transpose() * f;
    let c_inv = f_inv * f_inv.transpose();
    let xi_s = params.xi_rs / j;
    Ok(KinematicPoint { f, j, c, f_inv, c_inv, xi_s, xi_f: 1.0 - xi_s })
}

/// Apparent densities `(rho_s, rho_f)` in the current configuration.
pub fn densities(kin: &KinematicPoint, params: &MaterialParams) -> (f64, f64) {
    (kin.xi_s * params.rho_s_star, kin.xi_f * params.rho_f_star)
}

/// Strain energy per unit reference volume of the skeleton, as a function of
/// the right Cauchy-Green tensor.
pub trait StrainEnergy: Send + Sync {
    fn energy(&self, c: &Mat2, params: &MaterialParams) -> f64;
    /// Symmetric derivative `dW/dC`.
    fn energy_derivative(&self, c: &Mat2, params: &MaterialParams) -> Mat2;

    /// First Piola stress `2 xi_Rs F dW/dC`.
    fn piola(&self, kin: &KinematicPoint, params: &MaterialParams) -> Mat2 {
        2.0 * params.xi_rs * kin.f * self.energy_derivative(&kin.c, params)
    }

    /// Stress tangent; the default differentiates [`StrainEnergy::piola`] numerically.
    fn tangent(&self, kin: &KinematicPoint, params: &MaterialParams) -> Tangent {
        let mut out = [[[[0.0; 2]; 2]; 2]; 2];
        let step = 1e-6 * (1.0 + kin.f.amax());
        for k in 0..2 {
            for l in 0..2 {
                let mut fp = kin.f;
                let mut fm = kin.f;
                fp[(k, l)] += step;
                fm[(k, l)] -= step;
                let pp = self.piola(&with_f(fp), params);
                let pm = self.piola(&with_f(fm), params);
                for i in 0..2 {
                    for j in 0..2 {
                        out[i][j][k][l] = (pp[(i, j)] - pm[(i, j)]) / (2.0 * step);
                    }
                }
            }
        }
        out
    }
}

fn with_f(f: Mat2) -> KinematicPoint {
    let j = f.determinant();
    let f_inv = f.try_inverse().unwrap_or_else(Mat2::zeros);
    KinematicPoint { f, j, c: f.transpose() * f, f_inv, c_inv: f_inv * f_inv.transpose(), xi_s: 0.0, xi_f: 1.0 }
}

/// `W = (G/2)(tr C - 2)`, whose Piola stress is `xi_Rs G F`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeoHookean;

impl StrainEnergy for NeoHookean {
    fn energy(&self, c: &Mat2, params: &MaterialParams) -> f64 {
        0.5 * params.g * (c.trace() - 2.0)
    }

    fn energy_derivative(&self, _c: &Mat2, params: &MaterialParams) -> Mat2 {
        Mat2::identity() * (0.5 * params.g)
    }

    fn piola(&self, kin: &KinematicPoint, params: &MaterialParams) -> Mat2 {
        kin.f * (params.xi_rs * params.g)
    }

    fn tangent(&self, _kin: &KinematicPoint, params: &MaterialParams) -> Tangent {
        let s = params.xi_rs * params.g;
        let mut out = [[[[0.0; 2]; 2]; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j][i][j] = s;
            }
        }
        out
    }
}

/// Piola stress of the built-in neo-Hookean law.
pub fn piola_stress(kin: &KinematicPoint, params: &MaterialParams) -> Mat2 {
    NeoHookean.piola(kin, params)
}

/// Stress tangent of the built-in neo-Hookean law.
pub fn stress_tangent(kin: &KinematicPoint, params: &MaterialParams) -> Tangent {
    NeoHookean.tangent(kin, params)
}

/// Contracts a tangent with a direction: `(A : H)_ij = A_ijkl H_kl`.
pub fn contract(a: &Tangent, h: &Mat2) -> Mat2 {
    let mut out = Mat2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let mut s = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    s += a[i][j][k][l] * h[(k, l)];
                }
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Stored energy densities of the mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyDensity {
    /// Per unit current volume.
    pub current: f64,
    /// `xi_Rs W` per unit reference volume.
    pub reference: f64,
}

pub fn mixture_energy_density(kin: &KinematicPoint, params: &MaterialParams) -> EnergyDensity {
    energy_density_with(&NeoHookean, kin, params)
}

pub fn energy_density_with(law: &dyn StrainEnergy, kin: &KinematicPoint, params: &MaterialParams) -> EnergyDensity {
    let reference = params.xi_rs * law.energy(&kin.c, params);
    EnergyDensity { current: reference / kin.j, reference }
}
