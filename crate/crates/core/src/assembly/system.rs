//! Fused residual and Jacobian of the full coupled system.

use std::sync::Arc;

use faer::sparse::{SparseColMat, SymbolicSparseColMat};

use super::pointwise::{
    drag_filtration, drag_full, facet_terms, row_coefficients, row_residual_sensitivity, row_residuals, Vec2,
};
use super::{Discretization, Formulation, Layout, MixedState, Model, PointSources, SourceTerms};
use crate::error::{Error, Result};
use crate::linsolve::{SparseMatrix, TripletList};
use crate::mechanics::{kinematics_at, Mat2};
use crate::mesh::{BoundaryFacet, BoundaryTag};

/// How the displacement rows are closed.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeCoupling {
    /// Kinematic rows `M (du/dt - v_s) = 0` with the discrete time derivative
    /// `du/dt = alpha u + offset` over the displacement coefficients.
    Rate { alpha: f64, offset: Vec<f64> },
    /// Displacement and solid velocity held at the given coefficients; only
    /// the third-velocity and pressure rows are solved.
    Frozen { u_s: Vec<f64>, v_s: Vec<f64> },
}

impl TimeCoupling {
    /// Quasi-static limit: `du/dt = 0`.
    pub fn stationary(n_velocity: usize) -> Self {
        TimeCoupling::Rate { alpha: 0.0, offset: vec![0.0; n_velocity] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FacetSample {
    x: [f64; 2],
    flux: f64,
    traction: [f64; 2],
    v_bar: [f64; 2],
}

/// Source data evaluated once per time level at every quadrature point,
/// boundary point and Dirichlet node.
#[derive(Debug, Clone)]
pub struct SourceSamples {
    t: f64,
    body: Vec<PointSources>,
    facets: Vec<BoundaryFacet>,
    facet_points: Vec<FacetSample>,
    n_facet_points: usize,
    /// `(global dof, value)` for every Dirichlet displacement and solid-velocity
    /// coefficient.
    dirichlet: Vec<(usize, f64)>,
}

impl SourceSamples {
    pub fn new(disc: &Discretization, sources: &dyn SourceTerms, t: f64) -> Self {
        let nq = disc.rule.len();
        let mesh = &disc.mesh;
        let mut body = Vec::with_capacity(mesh.n_cells() * nq);
        for map in &disc.maps {
            for q in 0..nq {
                body.push(sources.body(map.map_point(disc.rule.reference_point(q)), t));
            }
        }
        let facets = mesh.all_boundary_facets();
        let n_facet_points = disc.edges[0].weights.len();
        let mut facet_points = Vec::with_capacity(facets.len() * n_facet_points);
        for f in &facets {
            let map = &disc.maps[f.cell];
            for b in &disc.edges[f.edge].points {
                let x = map.map_point([b[1], b[2]]);
                facet_points.push(FacetSample {
                    x,
                    flux: sources.boundary_flux(x, f.normal, t),
                    traction: sources.traction(x, f.normal, t),
                    v_bar: sources.dirichlet_v(x, t),
                });
            }
        }
        let space = &disc.velocity;
        let l = disc.layout;
        let mut dirichlet = Vec::new();
        for node in space.boundary_nodes(BoundaryTag::DirichletSolid) {
            let x = space.node_coords()[node];
            let ub = sources.dirichlet_u(x, t);
            let vb = sources.dirichlet_v(x, t);
            for c in 0..2 {
                dirichlet.push((l.u + space.dof(c, node), ub[c]));
                dirichlet.push((l.v_s + space.dof(c, node), vb[c]));
            }
        }
        SourceSamples { t, body, facets, facet_points, n_facet_points, dirichlet }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Dirichlet values for the displacement and solid velocity blocks.
    pub fn dirichlet(&self) -> &[(usize, f64)] {
        &self.dirichlet
    }
}

/// Residual and optional Jacobian over the block layout.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub residual: Vec<f64>,
    pub jacobian: Option<SparseMatrix>,
    pub layout: Layout,
}

/// Sparsity pattern of the Jacobian and the value slot of every local entry.
#[derive(Debug)]
pub(crate) struct SystemPattern {
    symbolic: SymbolicSparseColMat<usize>,
    cell_slots: Vec<u32>,
    multiplier_row: Vec<u32>,
    multiplier_col: Vec<u32>,
    diagonal: Vec<u32>,
}

const NO_SLOT: u32 = u32::MAX;

/// Block-level coupling within a cell: rows of the displacement block only
/// touch displacement and solid-velocity columns.
fn coupled(row_block: usize, col_block: usize) -> bool {
    row_block != 0 || col_block <= 1
}

fn local_block(i: usize, nlv: usize) -> usize {
    if i < 6 * nlv {
        i / (2 * nlv)
    } else {
        3
    }
}

fn local_to_global(disc: &Discretization, cell: usize, out: &mut Vec<usize>) {
    let l = disc.layout;
    let vn = disc.velocity.cell_nodes(cell);
    let pn = disc.pressure.cell_nodes(cell);
    let nn = disc.velocity.n_nodes();
    out.clear();
    for base in [l.u, l.v_s, l.w] {
        for c in 0..2 {
            out.extend(vn.iter().map(|&n| base + c * nn + n));
        }
    }
    out.extend(pn.iter().map(|&n| l.p + n));
}

impl SystemPattern {
    fn build(disc: &Discretization) -> Result<Self> {
        let l = disc.layout;
        let nlv = disc.velocity.n_local();
        let nloc = 6 * nlv + disc.pressure.n_local();
        let mut trip = TripletList::new(l.total, l.total);
        let mut g = Vec::with_capacity(nloc);
        for cell in 0..disc.mesh.n_cells() {
            local_to_global(disc, cell, &mut g);
            for i in 0..nloc {
                for j in 0..nloc {
                    if coupled(local_block(i, nlv), local_block(j, nlv)) {
                        trip.push(g[i], g[j], 1.0);
                    }
                }
            }
        }
        for i in 0..l.n_pressure {
            trip.push(l.p + i, l.multiplier, 1.0);
            trip.push(l.multiplier, l.p + i, 1.0);
        }
        for i in 0..l.total {
            trip.push(i, i, 1.0);
        }
        let (symbolic, _) = trip.build()?.into_parts();
        let col_ptr = symbolic.col_ptr().to_vec();
        let row_idx = symbolic.row_idx().to_vec();
        let find = |r: usize, c: usize| -> u32 {
            let s = &row_idx[col_ptr[c]..col_ptr[c + 1]];
            let k = s.binary_search(&r).expect("entry missing from pattern");
            (col_ptr[c] + k) as u32
        };
        let mut cell_slots = Vec::with_capacity(disc.mesh.n_cells() * nloc * nloc);
        for cell in 0..disc.mesh.n_cells() {
            local_to_global(disc, cell, &mut g);
            for i in 0..nloc {
                for j in 0..nloc {
                    cell_slots.push(if coupled(local_block(i, nlv), local_block(j, nlv)) {
                        find(g[i], g[j])
                    } else {
                        NO_SLOT
                    });
                }
            }
        }
        let multiplier_row = (0..l.n_pressure).map(|i| find(l.multiplier, l.p + i)).collect();
        let multiplier_col = (0..l.n_pressure).map(|i| find(l.p + i, l.multiplier)).collect();
        let diagonal = (0..l.total).map(|i| find(i, i)).collect();
        Ok(SystemPattern { symbolic, cell_slots, multiplier_row, multiplier_col, diagonal })
    }
}

impl Discretization {
    pub(crate) fn system_pattern(&self) -> Result<Arc<SystemPattern>> {
        if let Some(p) = self.pattern.get() {
            return Ok(p.clone());
        }
        let p = Arc::new(SystemPattern::build(self)?);
        Ok(self.pattern.get_or_init(|| p).clone())
    }
}

/// Local coefficient vectors of one cell, indexed `[block][component][node]`.
struct CellValues {
    vel: [[Vec<f64>; 2]; 4],
    p: Vec<f64>,
}

impl CellValues {
    fn new(nlv: usize, nlp: usize) -> Self {
        let z = || [vec![0.0; nlv], vec![0.0; nlv]];
        CellValues { vel: [z(), z(), z(), z()], p: vec![0.0; nlp] }
    }

    /// Blocks: displacement, solid velocity, third velocity, displacement rate.
    fn gather(&mut self, disc: &Discretization, cell: usize, x: &[f64], rate: Option<(f64, &[f64])>) {
        let l = disc.layout;
        let nn = disc.velocity.n_nodes();
        let vn = disc.velocity.cell_nodes(cell);
        for c in 0..2 {
            for (a, &n) in vn.iter().enumerate() {
                let d = c * nn + n;
                self.vel[0][c][a] = x[l.u + d];
                self.vel[1][c][a] = x[l.v_s + d];
                self.vel[2][c][a] = x[l.w + d];
                self.vel[3][c][a] = match rate {
                    Some((alpha, offset)) => alpha * x[l.u + d] + offset[d],
                    None => 0.0,
                };
            }
        }
        for (a, &n) in disc.pressure.cell_nodes(cell).iter().enumerate() {
            self.p[a] = x[l.p + n];
        }
    }
}

/// Physical gradients of a tabulation at point `q`.
fn physical_grads(map: &crate::femspace::CellMap, ref_grads: &[[f64; 2]], out: &mut [[f64; 2]]) {
    for (o, g) in out.iter_mut().zip(ref_grads) {
        *o = map.physical_grad(*g);
    }
}

fn eval_vector(coef: &[Vec<f64>; 2], vals: &[f64]) -> Vec2 {
    Vec2::new(dot(&coef[0], vals), dot(&coef[1], vals))
}

fn eval_gradient(coef: &[Vec<f64>; 2], grads: &[[f64; 2]]) -> Mat2 {
    let mut h = Mat2::zeros();
    for c in 0..2 {
        for (a, g) in grads.iter().enumerate() {
            h[(c, 0)] += coef[c][a] * g[0];
            h[(c, 1)] += coef[c][a] * g[1];
        }
    }
    h
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scalar_grad(coef: &[f64], grads: &[[f64; 2]]) -> Vec2 {
    let mut g = Vec2::zeros();
    for (c, d) in coef.iter().zip(grads) {
        g[0] += c * d[0];
        g[1] += c * d[1];
    }
    g
}

fn fd_step(x: &[f64], layout: &Layout) -> f64 {
    1e-7 * (1.0 + x[layout.u..layout.v_s].iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Residual of the coupled system at `x`, and its Jacobian when requested.
///
/// Rows of pinned coefficients (Dirichlet data, or the frozen blocks of
/// [`TimeCoupling::Frozen`]) are replaced by `x_i - value`.
pub fn assemble_at(
    disc: &Discretization,
    model: &Model,
    x: &[f64],
    coupling: &TimeCoupling,
    samples: &SourceSamples,
    with_jacobian: bool,
) -> Result<SystemMatrices> {
    let l = disc.layout;
    if x.len() != l.total {
        return Err(Error::InvalidArgument(format!("state vector has length {}, expected {}", x.len(), l.total)));
    }
    let form = model.formulation;
    let params = &model.params;
    let law = &*model.law;
    let nq = disc.rule.len();
    let nlv = disc.velocity.n_local();
    let nlp = disc.pressure.n_local();
    let nloc = 6 * nlv + nlp;
    let (oc_s, oc_w, oc_p) = (2 * nlv, 4 * nlv, 6 * nlv);
    let step = fd_step(x, &l);

    let rate = match coupling {
        TimeCoupling::Rate { alpha, offset } => {
            if offset.len() != l.n_velocity {
                return Err(Error::InvalidArgument("rate offset length mismatch".into()));
            }
            Some((*alpha, offset.as_slice()))
        }
        TimeCoupling::Frozen { .. } => None,
    };
    let alpha = rate.map_or(0.0, |r| r.0);

    let pattern = if with_jacobian { Some(disc.system_pattern()?) } else { None };
    let mut jac_vals = pattern.as_ref().map(|p| vec![0.0; p.symbolic.row_idx().len()]);

    let mut residual = vec![0.0; l.total];
    let mut g = Vec::with_capacity(nloc);
    let mut cv = CellValues::new(nlv, nlp);
    let mut res = vec![0.0; nloc];
    let mut jac = vec![0.0; if with_jacobian { nloc * nloc } else { 0 }];
    let mut lam = vec![0.0; nlp];
    let mut vg = vec![[0.0; 2]; nlv];
    let mut pg = vec![[0.0; 2]; nlp];
    let mut p_integral = 0.0;

    // Cells adjacent to the boundary, with their facet indices.
    let mut facets_of_cell: Vec<Vec<usize>> = vec![Vec::new(); disc.mesh.n_cells()];
    for (k, f) in samples.facets.iter().enumerate() {
        facets_of_cell[f.cell].push(k);
    }

    for cell in 0..disc.mesh.n_cells() {
        let map = &disc.maps[cell];
        local_to_global(disc, cell, &mut g);
        cv.gather(disc, cell, x, rate);
        res.iter_mut().for_each(|v| *v = 0.0);
        if with_jacobian {
            jac.iter_mut().for_each(|v| *v = 0.0);
            lam.iter_mut().for_each(|v| *v = 0.0);
        }
        for q in 0..nq {
            let wq = disc.rule.weights[q] * map.det;
            let phi = disc.velocity_tab.values(q);
            let psi = disc.pressure_tab.values(q);
            physical_grads(map, disc.velocity_tab.ref_grads(q), &mut vg);
            physical_grads(map, disc.pressure_tab.ref_grads(q), &mut pg);
            let h = eval_gradient(&cv.vel[0], &vg);
            let vs = eval_vector(&cv.vel[1], phi);
            let w = eval_vector(&cv.vel[2], phi);
            let dudt = eval_vector(&cv.vel[3], phi);
            let p = dot(&cv.p, psi);
            let gp = scalar_grad(&cv.p, &pg);
            let src = &samples.body[cell * nq + q];
            let kin = kinematics_at(&h, params).map_err(|e| e.in_cell(cell))?;
            let co = row_coefficients(form, &kin, params, src);
            let r = row_residuals(&co, &vs, &w, &gp);
            let stress = law.piola(&kin, params);
            let lambda = x[l.multiplier];
            p_integral += wq * p;

            for m in 0..2 {
                for b in 0..nlv {
                    let i = m * nlv + b;
                    res[i] += wq * phi[b] * (dudt[m] - vs[m]);
                    res[oc_s + i] += wq * (r.r_s[m] * phi[b] + stress[(m, 0)] * vg[b][0] + stress[(m, 1)] * vg[b][1]);
                    res[oc_w + i] += wq * r.r_w[m] * phi[b];
                }
            }
            for b in 0..nlp {
                res[oc_p + b] += wq * (r.r_q.dot(&Vec2::new(pg[b][0], pg[b][1])) + (lambda - co.g) * psi[b]);
            }

            if !with_jacobian {
                continue;
            }
            let sens =
                row_residual_sensitivity(form, params, &h, &vs, &w, &gp, src, step).map_err(|e| e.in_cell(cell))?;
            let tangent = law.tangent(&kin, params);
            let at = |i: usize, j: usize| i * nloc + j;

            // Derivatives with respect to displacement coefficient (n, a).
            for a in 0..nlv {
                for n in 0..2 {
                    let col = n * nlv + a;
                    let mut dr = [0.0; 6];
                    for (o, d) in dr.iter_mut().enumerate() {
                        *d = sens[n][0][o] * vg[a][0] + sens[n][1][o] * vg[a][1];
                    }
                    let mut dp = [[0.0; 2]; 2];
                    for (mi, row) in dp.iter_mut().enumerate() {
                        for (j, v) in row.iter_mut().enumerate() {
                            *v = tangent[mi][j][n][0] * vg[a][0] + tangent[mi][j][n][1] * vg[a][1];
                        }
                    }
                    for m in 0..2 {
                        for b in 0..nlv {
                            let i = m * nlv + b;
                            jac[at(oc_s + i, col)] += wq * (phi[b] * dr[m] + dp[m][0] * vg[b][0] + dp[m][1] * vg[b][1]);
                            jac[at(oc_w + i, col)] += wq * phi[b] * dr[2 + m];
                        }
                    }
                    for b in 0..nlp {
                        jac[at(oc_p + b, col)] += wq * (pg[b][0] * dr[4] + pg[b][1] * dr[5]);
                    }
                }
            }

            for b in 0..nlv {
                for a in 0..nlv {
                    let mass = wq * phi[b] * phi[a];
                    for m in 0..2 {
                        let (i, j) = (m * nlv + b, m * nlv + a);
                        jac[at(i, j)] += alpha * mass;
                        jac[at(i, oc_s + j)] -= mass;
                        jac[at(oc_s + i, oc_s + j)] += co.dss * mass;
                        jac[at(oc_s + i, oc_w + j)] += co.dsw * mass;
                        jac[at(oc_w + i, oc_s + j)] += co.dws * mass;
                        jac[at(oc_w + i, oc_w + j)] += co.dww * mass;
                    }
                }
                for a in 0..nlp {
                    let gpa = Vec2::new(pg[a][0], pg[a][1]);
                    let bs = co.bsp * gpa;
                    let bw = co.bwp * gpa;
                    for m in 0..2 {
                        let i = m * nlv + b;
                        jac[at(oc_s + i, oc_p + a)] += wq * phi[b] * bs[m];
                        jac[at(oc_w + i, oc_p + a)] += wq * phi[b] * bw[m];
                    }
                }
            }
            for b in 0..nlp {
                let gpb = Vec2::new(pg[b][0], pg[b][1]);
                let ts = co.bps.transpose() * gpb;
                let tw = co.bpw.transpose() * gpb;
                let kb = co.kpp.transpose() * gpb;
                for a in 0..nlv {
                    for n in 0..2 {
                        let j = n * nlv + a;
                        jac[at(oc_p + b, oc_s + j)] += wq * phi[a] * ts[n];
                        jac[at(oc_p + b, oc_w + j)] += wq * phi[a] * tw[n];
                    }
                }
                for a in 0..nlp {
                    jac[at(oc_p + b, oc_p + a)] += wq * (kb[0] * pg[a][0] + kb[1] * pg[a][1]);
                }
                lam[b] += wq * psi[b];
            }
        }

        for &k in &facets_of_cell[cell] {
            facet_contribution(disc, model, samples, k, &cv, step, with_jacobian, nlv, nlp, &mut res, &mut jac)
                .map_err(|e| e.in_cell(cell))?;
        }

        if let Some(bad) = res.iter().position(|v| !v.is_finite()) {
            return Err(Error::AssemblyFailure { cell, reason: format!("non-finite residual entry {bad}") });
        }
        for (i, &gi) in g.iter().enumerate() {
            residual[gi] += res[i];
        }
        if let (Some(pat), Some(vals)) = (pattern.as_ref(), jac_vals.as_mut()) {
            if let Some(bad) = jac.iter().position(|v| !v.is_finite()) {
                return Err(Error::AssemblyFailure { cell, reason: format!("non-finite jacobian entry {bad}") });
            }
            let slots = &pat.cell_slots[cell * nloc * nloc..(cell + 1) * nloc * nloc];
            for (k, &s) in slots.iter().enumerate() {
                if s != NO_SLOT {
                    vals[s as usize] += jac[k];
                }
            }
            for (b, &n) in disc.pressure.cell_nodes(cell).iter().enumerate() {
                vals[pat.multiplier_col[n] as usize] += lam[b];
                vals[pat.multiplier_row[n] as usize] += lam[b];
            }
        }
    }
    residual[l.multiplier] = p_integral;

    let mut pinned = vec![false; l.total];
    let mut pin = |i: usize, value: f64, residual: &mut Vec<f64>| {
        pinned[i] = true;
        residual[i] = x[i] - value;
    };
    match coupling {
        TimeCoupling::Rate { .. } => {
            for &(i, v) in &samples.dirichlet {
                pin(i, v, &mut residual);
            }
        }
        TimeCoupling::Frozen { u_s, v_s } => {
            if u_s.len() != l.n_velocity || v_s.len() != l.n_velocity {
                return Err(Error::InvalidArgument("frozen block length mismatch".into()));
            }
            for i in 0..l.n_velocity {
                pin(l.u + i, u_s[i], &mut residual);
                pin(l.v_s + i, v_s[i], &mut residual);
            }
        }
    }

    let jacobian = match (pattern, jac_vals) {
        (Some(pat), Some(mut vals)) => {
            let col_ptr = pat.symbolic.col_ptr();
            let row_idx = pat.symbolic.row_idx();
            for c in 0..l.total {
                for k in col_ptr[c]..col_ptr[c + 1] {
                    if pinned[row_idx[k]] {
                        vals[k] = 0.0;
                    }
                }
            }
            for (i, &p) in pinned.iter().enumerate() {
                if p {
                    vals[pat.diagonal[i] as usize] = 1.0;
                }
            }
            Some(SparseColMat::new(pat.symbolic.clone(), vals))
        }
        _ => None,
    };
    Ok(SystemMatrices { residual, jacobian, layout: l })
}

#[allow(clippy::too_many_arguments)]
fn facet_contribution(
    disc: &Discretization,
    model: &Model,
    samples: &SourceSamples,
    k: usize,
    cv: &CellValues,
    step: f64,
    with_jacobian: bool,
    nlv: usize,
    nlp: usize,
    res: &mut [f64],
    jac: &mut [f64],
) -> Result<()> {
    let f = &samples.facets[k];
    let params = &model.params;
    let map = &disc.maps[f.cell];
    let tables = &disc.edges[f.edge];
    let neumann = f.tag == BoundaryTag::NeumannSolid;
    let normal = Vec2::new(f.normal[0], f.normal[1]);
    let nloc = 6 * nlv + nlp;
    let (oc_s, oc_p) = (2 * nlv, 6 * nlv);
    let mut vg = vec![[0.0; 2]; nlv];
    for q in 0..tables.weights.len() {
        let sample = &samples.facet_points[k * samples.n_facet_points + q];
        let wq = tables.weights[q] * f.length;
        let phi = tables.velocity.values(q);
        let psi = tables.pressure.values(q);
        physical_grads(map, tables.velocity.ref_grads(q), &mut vg);
        let h = eval_gradient(&cv.vel[0], &vg);
        let vs = eval_vector(&cv.vel[1], phi);
        let p = dot(&cv.p, psi);
        let velocity = if neumann { vs } else { Vec2::new(sample.v_bar[0], sample.v_bar[1]) };
        let traction = Vec2::new(sample.traction[0], sample.traction[1]);
        let eval = |h: &Mat2| -> Result<(f64, Vec2)> {
            let kin = kinematics_at(h, params)?;
            Ok(facet_terms(&kin, &normal, &velocity, p, sample.flux, &traction, neumann))
        };
        let (qf, sv) = eval(&h)?;
        for b in 0..nlp {
            res[oc_p + b] += wq * psi[b] * qf;
        }
        if neumann {
            for m in 0..2 {
                for b in 0..nlv {
                    res[oc_s + m * nlv + b] += wq * phi[b] * sv[m];
                }
            }
        }
        if !with_jacobian {
            continue;
        }
        let at = |i: usize, j: usize| i * nloc + j;
        let mut sens = [[[0.0; 3]; 2]; 2];
        for kk in 0..2 {
            for ll in 0..2 {
                let mut hp = h;
                let mut hm = h;
                hp[(kk, ll)] += step;
                hm[(kk, ll)] -= step;
                let (qp, vp) = eval(&hp)?;
                let (qm, vm) = eval(&hm)?;
                sens[kk][ll] =
                    [(qp - qm) / (2.0 * step), (vp[0] - vm[0]) / (2.0 * step), (vp[1] - vm[1]) / (2.0 * step)];
            }
        }
        for a in 0..nlv {
            for n in 0..2 {
                let col = n * nlv + a;
                let d: [f64; 3] = std::array::from_fn(|o| sens[n][0][o] * vg[a][0] + sens[n][1][o] * vg[a][1]);
                for b in 0..nlp {
                    jac[at(oc_p + b, col)] += wq * psi[b] * d[0];
                }
                if neumann {
                    for m in 0..2 {
                        for b in 0..nlv {
                            jac[at(oc_s + m * nlv + b, col)] += wq * phi[b] * d[1 + m];
                        }
                    }
                }
            }
        }
        if neumann {
            let kin = kinematics_at(&h, params)?;
            let flux_dir = kin.f_inv.transpose() * normal * kin.j;
            for b in 0..nlp {
                for a in 0..nlv {
                    for n in 0..2 {
                        jac[at(oc_p + b, oc_s + n * nlv + a)] += wq * psi[b] * phi[a] * flux_dir[n];
                    }
                }
            }
            for m in 0..2 {
                for b in 0..nlv {
                    for a in 0..nlp {
                        jac[at(oc_s + m * nlv + b, oc_p + a)] -= wq * phi[b] * psi[a] * flux_dir[m];
                    }
                }
            }
        }
    }
    Ok(())
}

/// Convenience wrapper sampling the sources at `t`.
pub fn assemble_system(
    disc: &Discretization,
    model: &Model,
    state: &MixedState,
    t: f64,
    coupling: &TimeCoupling,
    with_jacobian: bool,
) -> Result<SystemMatrices> {
    if state.formulation != model.formulation {
        return Err(Error::InvalidArgument("state and model use different formulations".into()));
    }
    let samples = SourceSamples::new(disc, &*model.sources, t);
    assemble_at(disc, model, &state.to_vector(), coupling, &samples, with_jacobian)
}

/// The energy-balance quantities of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    /// `int xi_Rs W` over the reference body.
    pub stored: f64,
    /// Drag dissipation.
    pub dissipation: f64,
    /// `int (J k / mu) C^{-1} grad p . grad p`.
    pub pressure_seminorm_sq: f64,
}

pub fn energy_terms(disc: &Discretization, model: &Model, state: &MixedState) -> Result<EnergyTerms> {
    let params = &model.params;
    let nlv = disc.velocity.n_local();
    let nlp = disc.pressure.n_local();
    let x = state.to_vector();
    let mut cv = CellValues::new(nlv, nlp);
    let mut vg = vec![[0.0; 2]; nlv];
    let mut pg = vec![[0.0; 2]; nlp];
    let mut out = EnergyTerms { stored: 0.0, dissipation: 0.0, pressure_seminorm_sq: 0.0 };
    for cell in 0..disc.mesh.n_cells() {
        let map = &disc.maps[cell];
        cv.gather(disc, cell, &x, None);
        for q in 0..disc.rule.len() {
            let wq = disc.rule.weights[q] * map.det;
            let phi = disc.velocity_tab.values(q);
            physical_grads(map, disc.velocity_tab.ref_grads(q), &mut vg);
            physical_grads(map, disc.pressure_tab.ref_grads(q), &mut pg);
            let kin = kinematics_at(&eval_gradient(&cv.vel[0], &vg), params).map_err(|e| e.in_cell(cell))?;
            let vs = eval_vector(&cv.vel[1], phi);
            let w = eval_vector(&cv.vel[2], phi);
            let gp = scalar_grad(&cv.p, &pg);
            out.stored += wq * params.xi_rs * model.law.energy(&kin.c, params);
            out.dissipation += wq
                * match model.formulation {
                    Formulation::FluidVelocity => drag_full(&kin, params) * (w - vs).norm_squared(),
                    Formulation::FiltrationVelocity => drag_filtration(&kin, params) * w.norm_squared(),
                };
            out.pressure_seminorm_sq += wq * kin.j * params.k_s / params.mu_f * gp.dot(&(kin.c_inv * gp));
        }
    }
    Ok(out)
}
