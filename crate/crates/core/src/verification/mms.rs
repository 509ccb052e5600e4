//! Closed-form manufactured fields and the sources that make them an exact
//! solution of either formulation.
//!
//! With `a = 2 pi / L`, `w = 2 pi / t0` and `b = 2 pi / L^2`:
//!
//! ```text
//! u_s = u0 sin(w t) (cos(a (x + y)), sin(a (x - y)))
//! v_s = du_s/dt
//! v_f = v0 cos(w t) (sin(b (x^2 + y^2)), cos(b (x^2 - y^2)))
//! p   = p0 sin(w t) sin(a (x + y))
//! v_flt = (1 - xi_Rs / J) (v_f - v_s),  J = det(I + grad u_s)
//! ```

use std::f64::consts::PI;

use crate::assembly::{Formulation, PointSources, SourceTerms};
use crate::femspace::ExactField;
use crate::mechanics::{Mat2, MaterialParams};

pub type Vec2 = nalgebra::Vector2<f64>;

/// Second derivatives `h[i][j][k] = d^2 u_i / dx_j dx_k`.
pub type Hessian = [[[f64; 2]; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedSolution {
    pub u0: f64,
    pub t0: f64,
    pub v0: f64,
    pub p0: f64,
    pub length: f64,
}

impl Default for ManufacturedSolution {
    fn default() -> Self {
        ManufacturedSolution { u0: 0.01, t0: 1.0, v0: 1.0, p0: 1.0, length: 1.0 }
    }
}

/// The fields whose errors are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MmsField {
    Displacement,
    SolidVelocity,
    FluidVelocity,
    FiltrationVelocity,
    Pressure,
}

impl MmsField {
    pub const ALL: [MmsField; 5] = [
        MmsField::Displacement,
        MmsField::SolidVelocity,
        MmsField::FluidVelocity,
        MmsField::FiltrationVelocity,
        MmsField::Pressure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MmsField::Displacement => "us",
            MmsField::SolidVelocity => "vs",
            MmsField::FluidVelocity => "vf",
            MmsField::FiltrationVelocity => "vflt",
            MmsField::Pressure => "p",
        }
    }

    pub fn components(self) -> usize {
        if self == MmsField::Pressure {
            1
        } else {
            2
        }
    }
}

fn mat(g: [[f64; 2]; 2]) -> Mat2 {
    Mat2::new(g[0][0], g[0][1], g[1][0], g[1][1])
}

impl ManufacturedSolution {
    fn a(&self) -> f64 {
        2.0 * PI / self.length
    }

    fn omega(&self) -> f64 {
        2.0 * PI / self.t0
    }

    fn b(&self) -> f64 {
        2.0 * PI / (self.length * self.length)
    }

    pub fn displacement(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let (a, s) = (self.a(), self.u0 * (self.omega() * t).sin());
        [s * (a * (x[0] + x[1])).cos(), s * (a * (x[0] - x[1])).sin()]
    }

    pub fn displacement_gradient(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let (a, s) = (self.a(), self.u0 * (self.omega() * t).sin());
        let sp = -s * a * (a * (x[0] + x[1])).sin();
        let cm = s * a * (a * (x[0] - x[1])).cos();
        [[sp, sp], [cm, -cm]]
    }

    pub fn displacement_hessian(&self, x: [f64; 2], t: f64) -> Hessian {
        let (a, s) = (self.a(), self.u0 * (self.omega() * t).sin());
        let c = -s * a * a * (a * (x[0] + x[1])).cos();
        let d = -s * a * a * (a * (x[0] - x[1])).sin();
        [[[c, c], [c, c]], [[d, -d], [-d, d]]]
    }

    pub fn solid_velocity(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let (a, w) = (self.a(), self.omega());
        let s = self.u0 * w * (w * t).cos();
        [s * (a * (x[0] + x[1])).cos(), s * (a * (x[0] - x[1])).sin()]
    }

    pub fn solid_velocity_gradient(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let (a, w) = (self.a(), self.omega());
        let s = self.u0 * w * (w * t).cos();
        let sp = -s * a * (a * (x[0] + x[1])).sin();
        let cm = s * a * (a * (x[0] - x[1])).cos();
        [[sp, sp], [cm, -cm]]
    }

    pub fn fluid_velocity(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let (b, c) = (self.b(), self.v0 * (self.omega() * t).cos());
        let rp = x[0] * x[0] + x[1] * x[1];
        let rm = x[0] * x[0] - x[1] * x[1];
        [c * (b * rp).sin(), c * (b * rm).cos()]
    }

    pub fn fluid_velocity_gradient(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let (b, c) = (self.b(), self.v0 * (self.omega() * t).cos());
        let rp = x[0] * x[0] + x[1] * x[1];
        let rm = x[0] * x[0] - x[1] * x[1];
        let cp = c * (b * rp).cos() * 2.0 * b;
        let sm = c * (b * rm).sin() * 2.0 * b;
        [[cp * x[0], cp * x[1]], [-sm * x[0], sm * x[1]]]
    }

    pub fn pressure(&self, x: [f64; 2], t: f64) -> f64 {
        self.p0 * (self.omega() * t).sin() * (self.a() * (x[0] + x[1])).sin()
    }

    pub fn pressure_gradient(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let a = self.a();
        let g = self.p0 * (self.omega() * t).sin() * a * (a * (x[0] + x[1])).cos();
        [g, g]
    }

    pub fn deformation_gradient(&self, x: [f64; 2], t: f64) -> Mat2 {
        Mat2::identity() + mat(self.displacement_gradient(x, t))
    }

    pub fn jacobian(&self, x: [f64; 2], t: f64) -> f64 {
        self.deformation_gradient(x, t).determinant()
    }

    /// `grad J = J tr(F^{-1} dF/dx_k)`.
    pub fn jacobian_gradient(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let f = self.deformation_gradient(x, t);
        let j = f.determinant();
        let f_inv = f.try_inverse().expect("manufactured deformation is invertible");
        let hs = self.displacement_hessian(x, t);
        std::array::from_fn(|k| j * (f_inv * dfdx(&hs, k)).trace())
    }

    pub fn filtration_velocity(&self, x: [f64; 2], t: f64, xi: f64) -> [f64; 2] {
        let s = 1.0 - xi / self.jacobian(x, t);
        let (vf, vs) = (self.fluid_velocity(x, t), self.solid_velocity(x, t));
        [s * (vf[0] - vs[0]), s * (vf[1] - vs[1])]
    }

    pub fn filtration_velocity_gradient(&self, x: [f64; 2], t: f64, xi: f64) -> [[f64; 2]; 2] {
        let j = self.jacobian(x, t);
        let gj = self.jacobian_gradient(x, t);
        let s = 1.0 - xi / j;
        let (vf, vs) = (self.fluid_velocity(x, t), self.solid_velocity(x, t));
        let (gf, gs) = (self.fluid_velocity_gradient(x, t), self.solid_velocity_gradient(x, t));
        std::array::from_fn(|c| {
            std::array::from_fn(|d| xi / (j * j) * gj[d] * (vf[c] - vs[c]) + s * (gf[c][d] - gs[c][d]))
        })
    }

    pub fn value(&self, field: MmsField, x: [f64; 2], t: f64, xi: f64) -> [f64; 2] {
        match field {
            MmsField::Displacement => self.displacement(x, t),
            MmsField::SolidVelocity => self.solid_velocity(x, t),
            MmsField::FluidVelocity => self.fluid_velocity(x, t),
            MmsField::FiltrationVelocity => self.filtration_velocity(x, t, xi),
            MmsField::Pressure => [self.pressure(x, t), 0.0],
        }
    }

    pub fn gradient(&self, field: MmsField, x: [f64; 2], t: f64, xi: f64) -> [[f64; 2]; 2] {
        match field {
            MmsField::Displacement => self.displacement_gradient(x, t),
            MmsField::SolidVelocity => self.solid_velocity_gradient(x, t),
            MmsField::FluidVelocity => self.fluid_velocity_gradient(x, t),
            MmsField::FiltrationVelocity => self.filtration_velocity_gradient(x, t, xi),
            MmsField::Pressure => [self.pressure_gradient(x, t), [0.0; 2]],
        }
    }

    /// One field as an [`ExactField`].
    pub fn field(&self, field: MmsField, xi: f64) -> MmsExact {
        MmsExact { ms: *self, field, xi }
    }

    /// Mixture volume flux `V = xi v_s + (J - xi) v_f` pulled back by `F^{-1}`.
    pub fn mixture_flux(&self, x: [f64; 2], t: f64, xi: f64) -> Vec2 {
        let f_inv = self.deformation_gradient(x, t).try_inverse().expect("invertible");
        f_inv * self.mixture_velocity(x, t, xi)
    }

    fn mixture_velocity(&self, x: [f64; 2], t: f64, xi: f64) -> Vec2 {
        let j = self.jacobian(x, t);
        let (vs, vf) = (self.solid_velocity(x, t), self.fluid_velocity(x, t));
        Vec2::new(xi * vs[0] + (j - xi) * vf[0], xi * vs[1] + (j - xi) * vf[1])
    }

    /// `Div(F^{-1} V)`, the mass source of the constraint row.
    pub fn mixture_flux_divergence(&self, x: [f64; 2], t: f64, xi: f64) -> f64 {
        let f = self.deformation_gradient(x, t);
        let f_inv = f.try_inverse().expect("invertible");
        let hs = self.displacement_hessian(x, t);
        let j = f.determinant();
        let gj = self.jacobian_gradient(x, t);
        let (gs, gf) = (self.solid_velocity_gradient(x, t), self.fluid_velocity_gradient(x, t));
        let vf = self.fluid_velocity(x, t);
        let v = self.mixture_velocity(x, t, xi);
        let mut div = 0.0;
        for k in 0..2 {
            let d_finv = -f_inv * dfdx(&hs, k) * f_inv;
            let dv = Vec2::new(
                xi * gs[0][k] + gj[k] * vf[0] + (j - xi) * gf[0][k],
                xi * gs[1][k] + gj[k] * vf[1] + (j - xi) * gf[1][k],
            );
            div += (d_finv * v)[k] + (f_inv * dv)[k];
        }
        div
    }

    /// `Div P` of the linear skeleton law `P = xi G F`.
    pub fn stress_divergence(&self, x: [f64; 2], t: f64, params: &MaterialParams) -> Vec2 {
        let hs = self.displacement_hessian(x, t);
        let lap = Vec2::new(hs[0][0][0] + hs[0][1][1], hs[1][0][0] + hs[1][1][1]);
        lap * (params.xi_rs * params.g)
    }
}

/// `dF/dx_k` from the displacement Hessian.
fn dfdx(hs: &Hessian, k: usize) -> Mat2 {
    Mat2::new(hs[0][0][k], hs[0][1][k], hs[1][0][k], hs[1][1][k])
}

/// A manufactured field bound to a volume fraction, usable for
/// interpolation and error norms.
#[derive(Debug, Clone, Copy)]
pub struct MmsExact {
    pub ms: ManufacturedSolution,
    pub field: MmsField,
    pub xi: f64,
}

impl ExactField for MmsExact {
    fn components(&self) -> usize {
        self.field.components()
    }
    fn value(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        self.ms.value(self.field, x, t, self.xi)
    }
    fn gradient(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        self.ms.gradient(self.field, x, t, self.xi)
    }
}

/// Source bundle that makes the manufactured fields solve the chosen
/// formulation, with Dirichlet data for `u_s` and `v_s` on the boundary.
///
/// Body forces follow from the filtration-form momentum balances; the
/// formulation decides only the correction terms.
#[derive(Debug, Clone, Copy)]
pub struct MmsSources {
    pub ms: ManufacturedSolution,
    pub formulation: Formulation,
    pub params: MaterialParams,
}

impl MmsSources {
    pub fn new(ms: ManufacturedSolution, formulation: Formulation, params: MaterialParams) -> Self {
        MmsSources { ms, formulation, params }
    }
}

impl SourceTerms for MmsSources {
    fn body(&self, x: [f64; 2], t: f64) -> PointSources {
        let (ms, p) = (&self.ms, &self.params);
        let xi = p.xi_rs;
        let f = ms.deformation_gradient(x, t);
        let j = f.determinant();
        let f_inv = f.try_inverse().expect("invertible");
        let fit = f_inv.transpose();
        let gp = Vec2::from(ms.pressure_gradient(x, t));
        let vflt = Vec2::from(ms.filtration_velocity(x, t, xi));
        let vs = Vec2::from(ms.solid_velocity(x, t));
        let vf = Vec2::from(ms.fluid_velocity(x, t));
        let fluid_force = fit * gp + vflt * (p.mu_f / p.k_s);
        let solid_force = -fluid_force * (j - xi) + fit * gp * j - ms.stress_divergence(x, t, p);
        let (c_s, phi_c) = match self.formulation {
            Formulation::FluidVelocity => {
                (-fit * gp * (0.5 * j), f_inv * (vs * (j - 0.5 * xi) - vf * (0.5 * (j - xi))))
            }
            Formulation::FiltrationVelocity => (Vec2::zeros(), -f_inv * vflt * (0.5 * j)),
        };
        let b_s = solid_force / (xi * p.rho_s_star);
        let b_f = fluid_force / p.rho_f_star;
        PointSources {
            b_s: [b_s[0], b_s[1]],
            b_f: [b_f[0], b_f[1]],
            g: ms.mixture_flux_divergence(x, t, xi),
            c_s: [c_s[0], c_s[1]],
            phi_c: [phi_c[0], phi_c[1]],
        }
    }

    fn boundary_flux(&self, x: [f64; 2], normal: [f64; 2], t: f64) -> f64 {
        let xi = self.params.xi_rs;
        let f = self.ms.deformation_gradient(x, t);
        let j = f.determinant();
        let f_inv = f.try_inverse().expect("invertible");
        let rel = Vec2::from(self.ms.fluid_velocity(x, t)) - Vec2::from(self.ms.solid_velocity(x, t));
        -(j - xi) * (f_inv * rel).dot(&Vec2::from(normal))
    }

    fn dirichlet_u(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        self.ms.displacement(x, t)
    }

    fn dirichlet_v(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        self.ms.solid_velocity(x, t)
    }
}
