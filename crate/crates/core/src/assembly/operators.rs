//! Individually assembled coefficient operators and load vectors.
//!
//! These are the building blocks of the coupled residual taken one at a time;
//! the fused kernel in [`super::system`] evaluates the same integrands in a
//! single pass. All routines take the displacement field that defines the
//! kinematic weights.

use nalgebra::Vector2;

use super::SourceTerms;
use crate::error::{Error, Result};
use crate::femspace::{interval_rule, quadrature_rule, CellMap, DiscreteField, FunctionSpace, Tabulation};
use crate::linsolve::{SparseMatrix, TripletList};
use crate::mechanics::{kinematics_at, KinematicPoint, Mat2, MaterialParams, StrainEnergy};
use crate::mesh::{BoundaryFacet, BoundaryTag};

type Vec2 = Vector2<f64>;

/// Scalar weights of the mass-type operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassWeight {
    Unit,
    /// `xi_Rs`.
    Solid,
    /// `J - xi_Rs`.
    Fluid,
    /// `J`.
    Mixture,
}

impl MassWeight {
    pub fn eval(self, kin: &KinematicPoint, params: &MaterialParams) -> f64 {
        match self {
            MassWeight::Unit => 1.0,
            MassWeight::Solid => params.xi_rs,
            MassWeight::Fluid => kin.j - params.xi_rs,
            MassWeight::Mixture => kin.j,
        }
    }
}

/// Weight in front of `grad q . F^{-1} v` in the pressure-velocity couplings.
pub type BWeight = MassWeight;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DragWeight {
    /// `(J - xi)^2 mu / (J k)`, acting on the fluid-solid velocity difference.
    Full,
    /// `J mu / k`, acting on the filtration velocity.
    Filtration,
}

impl DragWeight {
    pub fn eval(self, kin: &KinematicPoint, params: &MaterialParams) -> f64 {
        match self {
            DragWeight::Full => super::pointwise::drag_full(kin, params),
            DragWeight::Filtration => super::pointwise::drag_filtration(kin, params),
        }
    }
}

/// Per-point data handed to operator kernels.
struct Point<'a> {
    x: [f64; 2],
    weight: f64,
    kin: KinematicPoint,
    test_vals: &'a [f64],
    test_grads: &'a [[f64; 2]],
    trial_vals: &'a [f64],
    trial_grads: &'a [[f64; 2]],
}

fn check_same_mesh(a: &FunctionSpace, b: &FunctionSpace) -> Result<()> {
    if !std::sync::Arc::ptr_eq(a.mesh(), b.mesh()) && a.mesh().n_cells() != b.mesh().n_cells() {
        return Err(Error::InvalidArgument("spaces live on different meshes".into()));
    }
    Ok(())
}

/// Visits every volume quadrature point of every cell.
fn for_each_cell_point(
    test: &FunctionSpace,
    trial: &FunctionSpace,
    u_s: &DiscreteField,
    params: &MaterialParams,
    mut f: impl FnMut(usize, &Point) -> Result<()>,
) -> Result<()> {
    check_same_mesh(test, trial)?;
    check_same_mesh(test, u_s.space())?;
    let degree = 2 * test.degree().max(trial.degree()).max(u_s.space().degree()) + 2;
    let rule = quadrature_rule(degree)?;
    let tt = Tabulation::new(test.degree(), &rule.points)?;
    let tr = Tabulation::new(trial.degree(), &rule.points)?;
    let tu = Tabulation::new(u_s.space().degree(), &rule.points)?;
    let mesh = test.mesh();
    let mut tg = vec![[0.0; 2]; test.n_local()];
    let mut rg = vec![[0.0; 2]; trial.n_local()];
    for cell in 0..mesh.n_cells() {
        let map = CellMap::new(mesh.cell_coords(cell));
        for q in 0..rule.len() {
            let (_, h) = u_s.eval_in_cell(cell, &map, &tu, q);
            let kin =
                kinematics_at(&Mat2::new(h[0][0], h[0][1], h[1][0], h[1][1]), params).map_err(|e| e.in_cell(cell))?;
            for (o, g) in tg.iter_mut().zip(tt.ref_grads(q)) {
                *o = map.physical_grad(*g);
            }
            for (o, g) in rg.iter_mut().zip(tr.ref_grads(q)) {
                *o = map.physical_grad(*g);
            }
            let point = Point {
                x: map.map_point(rule.reference_point(q)),
                weight: rule.weights[q] * map.det,
                kin,
                test_vals: tt.values(q),
                test_grads: &tg,
                trial_vals: tr.values(q),
                trial_grads: &rg,
            };
            f(cell, &point)?;
        }
    }
    Ok(())
}

/// Visits every quadrature point of the boundary facets selected by `tag`
/// (all boundary facets when `None`).
fn for_each_facet_point(
    test: &FunctionSpace,
    trial: &FunctionSpace,
    u_s: &DiscreteField,
    params: &MaterialParams,
    tag: Option<BoundaryTag>,
    mut f: impl FnMut(&BoundaryFacet, &Point) -> Result<()>,
) -> Result<()> {
    check_same_mesh(test, trial)?;
    let degree = 2 * test.degree().max(trial.degree()).max(u_s.space().degree()) + 2;
    let line = interval_rule(degree);
    let mesh = test.mesh();
    let facets = match tag {
        Some(t) => mesh.boundary_facets(t),
        None => mesh.all_boundary_facets(),
    };
    let mut tabs = Vec::with_capacity(3);
    for e in 0..3 {
        let pts: Vec<[f64; 3]> = line
            .iter()
            .map(|&(s, _)| {
                let mut b = [0.0; 3];
                b[e] = 1.0 - s;
                b[(e + 1) % 3] = s;
                b
            })
            .collect();
        tabs.push((
            Tabulation::new(test.degree(), &pts)?,
            Tabulation::new(trial.degree(), &pts)?,
            Tabulation::new(u_s.space().degree(), &pts)?,
            pts,
        ));
    }
    let mut tg = vec![[0.0; 2]; test.n_local()];
    let mut rg = vec![[0.0; 2]; trial.n_local()];
    for facet in &facets {
        let map = CellMap::new(mesh.cell_coords(facet.cell));
        let (tt, tr, tu, pts) = &tabs[facet.edge];
        for (q, &(_, w)) in line.iter().enumerate() {
            let (_, h) = u_s.eval_in_cell(facet.cell, &map, tu, q);
            let kin = kinematics_at(&Mat2::new(h[0][0], h[0][1], h[1][0], h[1][1]), params)
                .map_err(|e| e.in_cell(facet.cell))?;
            for (o, g) in tg.iter_mut().zip(tt.ref_grads(q)) {
                *o = map.physical_grad(*g);
            }
            for (o, g) in rg.iter_mut().zip(tr.ref_grads(q)) {
                *o = map.physical_grad(*g);
            }
            let point = Point {
                x: map.map_point([pts[q][1], pts[q][2]]),
                weight: w * facet.length,
                kin,
                test_vals: tt.values(q),
                test_grads: &tg,
                trial_vals: tr.values(q),
                trial_grads: &rg,
            };
            f(facet, &point)?;
        }
    }
    Ok(())
}

fn grad(g: &[[f64; 2]], a: usize) -> Vec2 {
    Vec2::new(g[a][0], g[a][1])
}

/// `int weight phi_j . phi_i`; vector spaces couple equal components only.
pub fn assemble_mass(
    test: &FunctionSpace,
    trial: &FunctionSpace,
    u_s: &DiscreteField,
    params: &MaterialParams,
    weight: impl Fn([f64; 2], &KinematicPoint) -> f64,
) -> Result<SparseMatrix> {
    if test.components() != trial.components() {
        return Err(Error::InvalidArgument("mass operator needs equal component counts".into()));
    }
    let mut t = TripletList::new(test.n_dofs(), trial.n_dofs());
    for_each_cell_point(test, trial, u_s, params, |cell, pt| {
        let w = pt.weight * weight(pt.x, &pt.kin);
        let tn = test.cell_nodes(cell);
        let rn = trial.cell_nodes(cell);
        for c in 0..test.components() {
            for (i, &ni) in tn.iter().enumerate() {
                for (j, &nj) in rn.iter().enumerate() {
                    t.push(test.dof(c, ni), trial.dof(c, nj), w * pt.test_vals[i] * pt.trial_vals[j]);
                }
            }
        }
        Ok(())
    })?;
    t.build()
}

/// `-int weight grad q_i . F^{-1} v_j` with pressure test functions and
/// velocity trial functions.
pub fn assemble_b(
    test: &FunctionSpace,
    trial: &FunctionSpace,
    u_s: &DiscreteField,
    params: &MaterialParams,
    weight: BWeight,
) -> Result<SparseMatrix> {
    if test.components() != 1 || trial.components() != 2 {
        return Err(Error::InvalidArgument("B needs a scalar test and a vector trial space".into()));
    }
    let mut t = TripletList::new(test.n_dofs(), trial.n_dofs());
    for_each_cell_point(test, trial, u_s, params, |cell, pt| {
        let w = pt.weight * weight.eval(&pt.kin, params);
        for (i, &ni) in test.cell_nodes(cell).iter().enumerate() {
            let row = pt.kin.f_inv.transpose() * grad(pt.test_grads, i);
            for (j, &nj) in trial.cell_nodes(cell).iter().enumerate() {
                for n in 0..2 {
                    t.push(ni, trial.dof(n, nj), -w * row[n] * pt.trial_vals[j]);
                }
            }
        }
        Ok(())
    })?;
    t.build()
}

/// Adjoint of [`assemble_b`], assembled from its own integrand with velocity
/// test functions and pressure trial functions.
pub fn assemble_b_transpose(
    test: &FunctionSpace,
    trial: &FunctionSpace,
    u_s: &DiscreteField,
    params: &MaterialParams,
    weight: BWeight,
) -> Result<SparseMatrix> {
    if test.components() != 2 || trial.components() != 1 {
        return Err(Error::InvalidArgument("B^T needs a vector test and a scalar trial space".into()));
    }
    let mut t = TripletList::new(test.n_dofs(), trial.n_dofs());
    for_each_cell_point(test, trial, u_s, params, |cell, pt| {
        let w = pt.weight * weight.eval(&pt.kin, params);
        for (j, &nj) in trial.cell_nodes(cell).iter().enumerate() {
            let g = grad(pt.trial_grads, j);
            for (i, &ni) in test.cell_nodes(cell).iter().enumerate() {
                for m in 0..2 {
                    let fv = pt.kin.f_inv.column(m).dot(&g);
                    t.push(test.dof(m, ni), nj, -w * fv * pt.test_vals[i]);
                }
            }
        }
        Ok(())
    })?;
    t.build()
}

/// Drag operator: a vector mass matrix with the chosen drag weight.
pub fn assemble_d(
    test: &FunctionSpace,
    trial: &FunctionSpace,
    u_s: &DiscreteField,
    params: &MaterialParams,
    weight: DragWeight,
) -> Result<SparseMatrix> {
    assemble_mass(test, trial, u_s, params, |_, kin| weight.eval(kin, params))
}

/// `int (J k / mu) C^{-1} grad p_j . grad q_i`.
pub fn assemble_k(space: &FunctionSpace, u_s: &DiscreteField, params: &MaterialParams) -> Result<SparseMatrix> {
    if space.components() != 1 {
        return Err(Error::InvalidArgument("K needs a scalar space".into()));
    }
    let mut t = TripletList::new(space.n_dofs(), space.n_dofs());
    for_each_cell_point(space, space, u_s, params, |cell, pt| {
        let m = pt.kin.c_inv * (pt.weight * pt.kin.j * params.k_s / params.mu_f);
        let nodes = space.cell_nodes(cell);
        for (i, &ni) in nodes.iter().enumerate() {
            let gi = m * grad(pt.test_grads, i);
            for (j, &nj) in nodes.iter().enumerate() {
                t.push(ni, nj, gi.dot(&grad(pt.trial_grads, j)));
            }
        }
        Ok(())
    })?;
    t.build()
}

/// Elastic residual `int P(F) : grad phi_i` and its tangent with respect to
/// the displacement coefficients.
pub fn assemble_elastic(
    space: &FunctionSpace,
    u_s: &DiscreteField,
    params: &MaterialParams,
    law: &dyn StrainEnergy,
) -> Result<(Vec<f64>, SparseMatrix)> {
    if space.components() != 2 {
        return Err(Error::InvalidArgument("elastic operator needs a vector space".into()));
    }
    let mut r = vec![0.0; space.n_dofs()];
    let mut t = TripletList::new(space.n_dofs(), space.n_dofs());
    for_each_cell_point(space, space, u_s, params, |cell, pt| {
        let p = law.piola(&pt.kin, params);
        let a = law.tangent(&pt.kin, params);
        let nodes = space.cell_nodes(cell);
        for (i, &ni) in nodes.iter().enumerate() {
            let gi = pt.test_grads[i];
            for m in 0..2 {
                r[space.dof(m, ni)] += pt.weight * (p[(m, 0)] * gi[0] + p[(m, 1)] * gi[1]);
                for (j, &nj) in nodes.iter().enumerate() {
                    let gj = pt.trial_grads[j];
                    for n in 0..2 {
                        let mut s = 0.0;
                        for jj in 0..2 {
                            for l in 0..2 {
                                s += a[m][jj][n][l] * gj[l] * gi[jj];
                            }
                        }
                        t.push(space.dof(m, ni), space.dof(n, nj), pt.weight * s);
                    }
                }
            }
        }
        Ok(())
    })?;
    Ok((r, t.build()?))
}

/// `int_{Neumann} J F^{-1} v_j . n q_i` with pressure test functions.
pub fn assemble_s(
    test: &FunctionSpace,
    trial: &FunctionSpace,
    u_s: &DiscreteField,
    params: &MaterialParams,
) -> Result<SparseMatrix> {
    let mut t = TripletList::new(test.n_dofs(), trial.n_dofs());
    for_each_facet_point(test, trial, u_s, params, Some(BoundaryTag::NeumannSolid), |f, pt| {
        let n = Vec2::new(f.normal[0], f.normal[1]);
        let dir = pt.kin.f_inv.transpose() * n * pt.kin.j;
        for (i, &ni) in test.cell_nodes(f.cell).iter().enumerate() {
            for (j, &nj) in trial.cell_nodes(f.cell).iter().enumerate() {
                for c in 0..2 {
                    t.push(ni, trial.dof(c, nj), pt.weight * dir[c] * pt.trial_vals[j] * pt.test_vals[i]);
                }
            }
        }
        Ok(())
    })?;
    t.build()
}

/// Adjoint of [`assemble_s`] with velocity test functions.
pub fn assemble_s_transpose(
    test: &FunctionSpace,
    trial: &FunctionSpace,
    u_s: &DiscreteField,
    params: &MaterialParams,
) -> Result<SparseMatrix> {
    let mut t = TripletList::new(test.n_dofs(), trial.n_dofs());
    for_each_facet_point(test, trial, u_s, params, Some(BoundaryTag::NeumannSolid), |f, pt| {
        let n = Vec2::new(f.normal[0], f.normal[1]);
        for (i, &ni) in test.cell_nodes(f.cell).iter().enumerate() {
            for c in 0..2 {
                let fv = pt.kin.j * (pt.kin.f_inv.column(c)).dot(&n);
                for (j, &nj) in trial.cell_nodes(f.cell).iter().enumerate() {
                    t.push(test.dof(c, ni), nj, pt.weight * fv * pt.test_vals[i] * pt.trial_vals[j]);
                }
            }
        }
        Ok(())
    })?;
    t.build()
}

/// Load vectors of the momentum and constraint rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadBlocks {
    /// `int xi rho_s* b_s . v + int_{Neumann} t . v`.
    pub f2: Vec<f64>,
    /// `-int (J - xi) rho_f* b_f . v`.
    pub f2_tilde: Vec<f64>,
    /// `int (J - xi) rho_f* b_f . v`.
    pub f3: Vec<f64>,
    /// `int J rho_f* b_f . v`.
    pub f3_mixture: Vec<f64>,
    /// `-int_{Dirichlet} J F^{-1} vbar_s . n q`.
    pub f4: Vec<f64>,
    /// `f4 + int (J k rho_f* / mu) F^{-1} b_f . grad q`.
    pub f4_tilde: Vec<f64>,
}

pub fn assemble_loads(
    velocity: &FunctionSpace,
    pressure: &FunctionSpace,
    u_s: &DiscreteField,
    params: &MaterialParams,
    sources: &dyn SourceTerms,
    t: f64,
) -> Result<LoadBlocks> {
    let nv = velocity.n_dofs();
    let np = pressure.n_dofs();
    let mut out = LoadBlocks {
        f2: vec![0.0; nv],
        f2_tilde: vec![0.0; nv],
        f3: vec![0.0; nv],
        f3_mixture: vec![0.0; nv],
        f4: vec![0.0; np],
        f4_tilde: vec![0.0; np],
    };
    let xi = params.xi_rs;
    for_each_cell_point(velocity, pressure, u_s, params, |cell, pt| {
        let s = sources.body(pt.x, t);
        let j = pt.kin.j;
        for (a, &n) in velocity.cell_nodes(cell).iter().enumerate() {
            let phi = pt.weight * pt.test_vals[a];
            for c in 0..2 {
                let d = velocity.dof(c, n);
                out.f2[d] += phi * xi * params.rho_s_star * s.b_s[c];
                out.f2_tilde[d] -= phi * (j - xi) * params.rho_f_star * s.b_f[c];
                out.f3[d] += phi * (j - xi) * params.rho_f_star * s.b_f[c];
                out.f3_mixture[d] += phi * j * params.rho_f_star * s.b_f[c];
            }
        }
        let flux = pt.kin.f_inv * Vec2::new(s.b_f[0], s.b_f[1]) * (j * params.k_s * params.rho_f_star / params.mu_f);
        for (b, &n) in pressure.cell_nodes(cell).iter().enumerate() {
            out.f4_tilde[n] += pt.weight * flux.dot(&grad(pt.trial_grads, b));
        }
        Ok(())
    })?;
    for_each_facet_point(velocity, velocity, u_s, params, Some(BoundaryTag::NeumannSolid), |f, pt| {
        let tr = sources.traction(pt.x, f.normal, t);
        for (a, &n) in velocity.cell_nodes(f.cell).iter().enumerate() {
            for c in 0..2 {
                out.f2[velocity.dof(c, n)] += pt.weight * pt.test_vals[a] * tr[c];
            }
        }
        Ok(())
    })?;
    for_each_facet_point(pressure, pressure, u_s, params, Some(BoundaryTag::DirichletSolid), |f, pt| {
        let vb = sources.dirichlet_v(pt.x, t);
        let normal = Vec2::new(f.normal[0], f.normal[1]);
        let flux = pt.kin.j * (pt.kin.f_inv * Vec2::new(vb[0], vb[1])).dot(&normal);
        for (b, &n) in pressure.cell_nodes(f.cell).iter().enumerate() {
            out.f4[n] -= pt.weight * flux * pt.test_vals[b];
        }
        Ok(())
    })?;
    for (ft, f) in out.f4_tilde.iter_mut().zip(&out.f4) {
        *ft += f;
    }
    Ok(out)
}

/// Source contributions that do not correspond to a physical load.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionLoads {
    /// `int c_s . v`.
    pub c_s: Vec<f64>,
    /// `int phi_c . grad q`.
    pub phi_c: Vec<f64>,
    /// `int g q`.
    pub g: Vec<f64>,
    /// `int_{boundary} h q`.
    pub h: Vec<f64>,
}

pub fn assemble_correction_loads(
    velocity: &FunctionSpace,
    pressure: &FunctionSpace,
    u_s: &DiscreteField,
    params: &MaterialParams,
    sources: &dyn SourceTerms,
    t: f64,
) -> Result<CorrectionLoads> {
    let mut out = CorrectionLoads {
        c_s: vec![0.0; velocity.n_dofs()],
        phi_c: vec![0.0; pressure.n_dofs()],
        g: vec![0.0; pressure.n_dofs()],
        h: vec![0.0; pressure.n_dofs()],
    };
    for_each_cell_point(velocity, pressure, u_s, params, |cell, pt| {
        let s = sources.body(pt.x, t);
        for (a, &n) in velocity.cell_nodes(cell).iter().enumerate() {
            for c in 0..2 {
                out.c_s[velocity.dof(c, n)] += pt.weight * pt.test_vals[a] * s.c_s[c];
            }
        }
        for (b, &n) in pressure.cell_nodes(cell).iter().enumerate() {
            let g = pt.trial_grads[b];
            out.phi_c[n] += pt.weight * (s.phi_c[0] * g[0] + s.phi_c[1] * g[1]);
            out.g[n] += pt.weight * s.g * pt.trial_vals[b];
        }
        Ok(())
    })?;
    for_each_facet_point(pressure, pressure, u_s, params, None, |f, pt| {
        let h = sources.boundary_flux(pt.x, f.normal, t);
        for (b, &n) in pressure.cell_nodes(f.cell).iter().enumerate() {
            out.h[n] += pt.weight * h * pt.test_vals[b];
        }
        Ok(())
    })?;
    Ok(out)
}
