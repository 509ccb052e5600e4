//! Coefficients of the three vector-valued row residuals at one quadrature
//! point.
//!
//! With `vs`, `w` the point values of the solid and third velocity and `gp`
//! the pressure gradient, the rows read
//!
//! ```text
//! r_s = dss vs + dsw w + bsp gp - f_s      (tested with the velocity test fn)
//! r_w = dws vs + dww w + bwp gp - f_w      (tested with the velocity test fn)
//! r_q = bps vs + bpw w + kpp gp - f_q      (tested with the pressure gradient)
//! ```
//!
//! The skeleton stress enters the solid row separately, tested with the
//! test-function gradient, and the volumetric mass source `g` is tested with
//! the pressure test function.

use nalgebra::Vector2;

use super::{Formulation, PointSources};
use crate::error::Result;
use crate::mechanics::{kinematics_at, KinematicPoint, Mat2, MaterialParams};

pub type Vec2 = Vector2<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowCoefficients {
    pub dss: f64,
    pub dsw: f64,
    pub bsp: Mat2,
    pub dws: f64,
    pub dww: f64,
    pub bwp: Mat2,
    pub bps: Mat2,
    pub bpw: Mat2,
    pub kpp: Mat2,
    pub f_s: Vec2,
    pub f_w: Vec2,
    pub f_q: Vec2,
    pub g: f64,
}

/// Drag coefficient `(J - xi)^2 mu / (J k)` of the fluid-velocity form.
pub fn drag_full(kin: &KinematicPoint, params: &MaterialParams) -> f64 {
    let jf = kin.j - params.xi_rs;
    jf * jf * params.mu_f / (kin.j * params.k_s)
}

/// Drag coefficient `J mu / k` of the filtration-velocity form.
pub fn drag_filtration(kin: &KinematicPoint, params: &MaterialParams) -> f64 {
    kin.j * params.mu_f / params.k_s
}

pub fn row_coefficients(
    formulation: Formulation,
    kin: &KinematicPoint,
    params: &MaterialParams,
    src: &PointSources,
) -> RowCoefficients {
    let xi = params.xi_rs;
    let j = kin.j;
    let jf = j - xi;
    let fit = kin.f_inv.transpose();
    let b_s = Vec2::new(src.b_s[0], src.b_s[1]);
    let b_f = Vec2::new(src.b_f[0], src.b_f[1]);
    let c_s = Vec2::new(src.c_s[0], src.c_s[1]);
    let phi_c = Vec2::new(src.phi_c[0], src.phi_c[1]);
    let solid_body = b_s * (xi * params.rho_s_star);
    let fluid_body = b_f * params.rho_f_star;
    let mobility = j * params.k_s / params.mu_f;
    let kpp = kin.c_inv * mobility;
    let f_q = kin.f_inv * fluid_body * mobility + phi_c;
    match formulation {
        Formulation::FluidVelocity => {
            let d = drag_full(kin, params);
            RowCoefficients {
                dss: 0.5 * d,
                dsw: -0.5 * d,
                bsp: fit * (0.5 * xi),
                dws: -0.5 * d,
                dww: 0.5 * d,
                bwp: fit * (0.5 * jf),
                bps: kin.f_inv * (-0.5 * xi),
                bpw: kin.f_inv * (-0.5 * jf),
                kpp,
                f_s: solid_body + fluid_body * (0.5 * jf) + c_s,
                f_w: fluid_body * (0.5 * jf),
                f_q,
                g: src.g,
            }
        }
        Formulation::FiltrationVelocity => {
            let d = drag_filtration(kin, params);
            RowCoefficients {
                dss: 0.0,
                dsw: 0.0,
                bsp: fit * j,
                dws: 0.0,
                dww: 0.5 * d,
                bwp: fit * (0.5 * j),
                bps: kin.f_inv * (-j),
                bpw: kin.f_inv * (-0.5 * j),
                kpp,
                f_s: solid_body + fluid_body * jf + c_s,
                f_w: fluid_body * (0.5 * j),
                f_q,
                g: src.g,
            }
        }
    }
}

/// The three row residuals at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowResiduals {
    pub r_s: Vec2,
    pub r_w: Vec2,
    pub r_q: Vec2,
}

impl RowResiduals {
    pub fn to_array(&self) -> [f64; 6] {
        [self.r_s[0], self.r_s[1], self.r_w[0], self.r_w[1], self.r_q[0], self.r_q[1]]
    }
}

pub fn row_residuals(c: &RowCoefficients, vs: &Vec2, w: &Vec2, gp: &Vec2) -> RowResiduals {
    RowResiduals {
        r_s: vs * c.dss + w * c.dsw + c.bsp * gp - c.f_s,
        r_w: vs * c.dws + w * c.dww + c.bwp * gp - c.f_w,
        r_q: c.bps * vs + c.bpw * w + c.kpp * gp - c.f_q,
    }
}

/// Row residuals as a function of the displacement gradient alone.
pub fn row_residuals_at(
    formulation: Formulation,
    params: &MaterialParams,
    grad_u: &Mat2,
    vs: &Vec2,
    w: &Vec2,
    gp: &Vec2,
    src: &PointSources,
) -> Result<RowResiduals> {
    let kin = kinematics_at(grad_u, params)?;
    Ok(row_residuals(&row_coefficients(formulation, &kin, params, src), vs, w, gp))
}

/// Central-difference derivative of the row residuals with respect to each
/// entry of the displacement gradient: `out[k][l][o] = d r_o / d H_kl`.
pub fn row_residual_sensitivity(
    formulation: Formulation,
    params: &MaterialParams,
    grad_u: &Mat2,
    vs: &Vec2,
    w: &Vec2,
    gp: &Vec2,
    src: &PointSources,
    step: f64,
) -> Result<[[[f64; 6]; 2]; 2]> {
    let mut out = [[[0.0; 6]; 2]; 2];
    for k in 0..2 {
        for l in 0..2 {
            let mut hp = *grad_u;
            let mut hm = *grad_u;
            hp[(k, l)] += step;
            hm[(k, l)] -= step;
            let rp = row_residuals_at(formulation, params, &hp, vs, w, gp, src)?.to_array();
            let rm = row_residuals_at(formulation, params, &hm, vs, w, gp, src)?.to_array();
            for o in 0..6 {
                out[k][l][o] = (rp[o] - rm[o]) / (2.0 * step);
            }
        }
    }
    Ok(out)
}

/// Boundary integrand values at a facet point.
///
/// `q_flux` multiplies the pressure test function; `traction` is dotted with
/// the velocity test function in the solid row.
pub fn facet_terms(
    kin: &KinematicPoint,
    normal: &Vec2,
    velocity: &Vec2,
    p: f64,
    flux: f64,
    traction: &Vec2,
    neumann: bool,
) -> (f64, Vec2) {
    let normal_flux = kin.j * (kin.f_inv * velocity).dot(normal);
    if neumann {
        let pull = kin.f_inv.transpose() * normal * kin.j;
        (normal_flux - flux, -pull * p - traction)
    } else {
        (normal_flux - flux, Vec2::zeros())
    }
}
