//! Weighted L2 projections converting between the fluid velocity and the
//! filtration velocity of a solved state.

use super::operators::{assemble_mass, MassWeight};
use super::{Formulation, MixedState};
use crate::error::{Error, Result};
use crate::femspace::{quadrature_rule, CellMap, DiscreteField, Tabulation};
use crate::linsolve::{matvec, SparseLu};
use crate::mechanics::{kinematics_at, Mat2, MaterialParams};

/// Fluid fraction weights below this are reported as ill-conditioned.
pub const FLUID_WEIGHT_FLOOR: f64 = 1e-6;

/// A recovered velocity field with the conditioning diagnostic of the
/// projection.
#[derive(Debug, Clone)]
pub struct Recovered {
    pub field: DiscreteField,
    /// Smallest `J - xi_Rs` seen at the quadrature points.
    pub min_fluid_weight: f64,
    pub ill_conditioned: bool,
}

fn min_fluid_weight(u_s: &DiscreteField, params: &MaterialParams) -> Result<f64> {
    let space = u_s.space();
    let rule = quadrature_rule(2 * space.degree() + 2)?;
    let tab = Tabulation::new(space.degree(), &rule.points)?;
    let mesh = space.mesh();
    let mut m = f64::INFINITY;
    for cell in 0..mesh.n_cells() {
        let map = CellMap::new(mesh.cell_coords(cell));
        for q in 0..rule.len() {
            let (_, h) = u_s.eval_in_cell(cell, &map, &tab, q);
            let kin =
                kinematics_at(&Mat2::new(h[0][0], h[0][1], h[1][0], h[1][1]), params).map_err(|e| e.in_cell(cell))?;
            m = m.min(kin.j - params.xi_rs);
        }
    }
    Ok(m)
}

/// Solves `M(lhs) x = M(a) y + sign M(b) z` over the velocity space.
fn project(
    state: &MixedState,
    params: &MaterialParams,
    lhs: MassWeight,
    terms: [(MassWeight, f64, &DiscreteField); 2],
) -> Result<Recovered> {
    let space = state.v_s.space();
    let u = &state.u_s;
    let m = assemble_mass(space, space, u, params, |_, k| lhs.eval(k, params))?;
    let mut rhs = vec![0.0; space.n_dofs()];
    for (weight, sign, field) in terms {
        let a = assemble_mass(space, space, u, params, |_, k| weight.eval(k, params))?;
        for (r, v) in rhs.iter_mut().zip(matvec(&a, &field.coefficients)) {
            *r += sign * v;
        }
    }
    let lu = SparseLu::factor(&m).map_err(|e| Error::ProjectionFailure(e.to_string()))?;
    let x = lu.solve(&rhs).map_err(|e| Error::ProjectionFailure(e.to_string()))?;
    let min_w = min_fluid_weight(u, params)?;
    Ok(Recovered {
        field: DiscreteField::new(space.clone(), x)?,
        min_fluid_weight: min_w,
        ill_conditioned: min_w < FLUID_WEIGHT_FLOOR,
    })
}

/// `M(J) v_flt = M(J - xi) v_f - M(J - xi) v_s` from a fluid-velocity state.
pub fn recover_filtration_velocity(state: &MixedState, params: &MaterialParams) -> Result<Recovered> {
    if state.formulation != Formulation::FluidVelocity {
        return Err(Error::InvalidArgument("filtration recovery needs a fluid-velocity state".into()));
    }
    project(
        state,
        params,
        MassWeight::Mixture,
        [(MassWeight::Fluid, 1.0, &state.w), (MassWeight::Fluid, -1.0, &state.v_s)],
    )
}

/// `M(J - xi) v_f = M(J - xi) v_s + M(J) v_flt` from a filtration-velocity
/// state.
pub fn recover_fluid_velocity(state: &MixedState, params: &MaterialParams) -> Result<Recovered> {
    if state.formulation != Formulation::FiltrationVelocity {
        return Err(Error::InvalidArgument("fluid recovery needs a filtration-velocity state".into()));
    }
    project(
        state,
        params,
        MassWeight::Fluid,
        [(MassWeight::Fluid, 1.0, &state.v_s), (MassWeight::Mixture, 1.0, &state.w)],
    )
}
