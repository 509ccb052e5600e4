//! Continuous Lagrange spaces on a [`Mesh`], scalar or two-component.

pub mod basis;
pub mod quadrature;

use std::collections::BTreeSet;
use std::sync::Arc;

pub use basis::{eval_reference, n_local, reference_nodes, Tabulation};
pub use quadrature::{interval_rule, quadrature_rule, QuadratureRule};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh};

/// Affine map from the reference triangle onto a mesh cell.
#[derive(Debug, Clone, Copy)]
pub struct CellMap {
    pub origin: [f64; 2],
    pub jacobian: [[f64; 2]; 2],
    /// Inverse transpose of the jacobian, maps reference to physical gradients.
    pub inv_t: [[f64; 2]; 2],
    pub det: f64,
}

impl CellMap {
    pub fn new(coords: [[f64; 2]; 3]) -> Self {
        let [a, b, c] = coords;
        let j = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv_t = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
        CellMap { origin: a, jacobian: j, inv_t, det }
    }

    pub fn map_point(&self, r: [f64; 2]) -> [f64; 2] {
        let j = &self.jacobian;
        [self.origin[0] + j[0][0] * r[0] + j[0][1] * r[1], self.origin[1] + j[1][0] * r[0] + j[1][1] * r[1]]
    }

    pub fn physical_grad(&self, g: [f64; 2]) -> [f64; 2] {
        let m = &self.inv_t;
        [m[0][0] * g[0] + m[0][1] * g[1], m[1][0] * g[0] + m[1][1] * g[1]]
    }
}

/// Lagrange space of degree 1 to 3 with one or two components.
///
/// Scalar nodes are numbered vertices first, then edge nodes in global edge
/// order (from the lower vertex index), then cell-interior nodes. A vector DOF
/// is `component * n_nodes + node`.
#[derive(Debug, Clone)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    degree: usize,
    components: usize,
    n_nodes: usize,
    cell_nodes: Vec<usize>,
    node_coords: Vec<[f64; 2]>,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize, components: usize) -> Result<Self> {
        basis::check_degree(degree)?;
        if !(1..=2).contains(&components) {
            return Err(Error::InvalidArgument(format!("components must be 1 or 2, got {components}")));
        }
        let k = degree;
        let nv = mesh.n_vertices();
        let ne = mesh.n_edges();
        let per_edge = k - 1;
        let per_cell = if k == 3 { 1 } else { 0 };
        let n_nodes = nv + per_edge * ne + per_cell * mesh.n_cells();
        let nl = n_local(k);
        let mut cell_nodes = Vec::with_capacity(nl * mesh.n_cells());
        let mut node_coords = vec![[0.0; 2]; n_nodes];
        node_coords[..nv].copy_from_slice(mesh.vertices());
        let ref_nodes = reference_nodes(k)?;
        for (c, cell) in mesh.cells().iter().enumerate() {
            let start = cell_nodes.len();
            cell_nodes.extend_from_slice(cell);
            for e in 0..3 {
                let id = mesh.cell_edges()[c][e];
                let forward = mesh.edges()[id][0] == cell[e];
                for m in 1..k {
                    let offset = if forward { m - 1 } else { k - 1 - m };
                    cell_nodes.push(nv + per_edge * id + offset);
                }
            }
            if per_cell == 1 {
                cell_nodes.push(nv + per_edge * ne + c);
            }
            let map = CellMap::new(mesh.cell_coords(c));
            for (local, b) in ref_nodes.iter().enumerate().skip(3) {
                node_coords[cell_nodes[start + local]] = map.map_point([b[1], b[2]]);
            }
        }
        Ok(FunctionSpace { mesh, degree, components, n_nodes, cell_nodes, node_coords })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Number of scalar nodes.
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_dofs(&self) -> usize {
        self.n_nodes * self.components
    }

    pub fn n_local(&self) -> usize {
        n_local(self.degree)
    }

    /// Scalar node indices of a cell in local order.
    pub fn cell_nodes(&self, cell: usize) -> &[usize] {
        let nl = self.n_local();
        &self.cell_nodes[cell * nl..(cell + 1) * nl]
    }

    /// Global DOF indices of a cell, component-major.
    pub fn cell_dofs(&self, cell: usize) -> Vec<usize> {
        let nodes = self.cell_nodes(cell);
        (0..self.components).flat_map(|c| nodes.iter().map(move |&n| c * self.n_nodes + n)).collect()
    }

    pub fn node_coords(&self) -> &[[f64; 2]] {
        &self.node_coords
    }

    pub fn dof(&self, component: usize, node: usize) -> usize {
        component * self.n_nodes + node
    }

    /// Scalar nodes lying on facets with `tag`, sorted.
    pub fn boundary_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut set = BTreeSet::new();
        for f in self.mesh.boundary_facets(tag) {
            let nodes = self.cell_nodes(f.cell);
            set.insert(nodes[f.edge]);
            set.insert(nodes[(f.edge + 1) % 3]);
            for m in 0..self.degree - 1 {
                set.insert(nodes[3 + f.edge * (self.degree - 1) + m]);
            }
        }
        set.into_iter().collect()
    }

    /// All DOFs (every component) on facets with `tag`, sorted.
    pub fn boundary_dofs(&self, tag: BoundaryTag) -> Vec<usize> {
        let nodes = self.boundary_nodes(tag);
        (0..self.components).flat_map(|c| nodes.iter().map(move |&n| c * self.n_nodes + n)).collect()
    }

    /// Local indices (within a cell) of the nodes on local edge `e`.
    pub fn edge_local_nodes(&self, e: usize) -> Vec<usize> {
        let mut v = vec![e, (e + 1) % 3];
        v.extend((0..self.degree - 1).map(|m| 3 + e * (self.degree - 1) + m));
        v
    }

    /// Reference basis at a barycentric point of `cell`; local order does not
    /// depend on the cell.
    pub fn eval_basis(&self, cell: usize, bary: [f64; 3]) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
        if cell >= self.mesh.n_cells() {
            return Err(Error::InvalidArgument(format!("cell {cell} out of range")));
        }
        let n = self.n_local();
        let mut v = vec![0.0; n];
        let mut g = vec![[0.0; 2]; n];
        eval_reference(self.degree, bary, &mut v, &mut g)?;
        Ok((v, g))
    }
}

/// Closed-form field with its spatial gradient, used for interpolation and
/// error measurement. Scalar fields use component 0 only.
pub trait ExactField {
    fn components(&self) -> usize;
    fn value(&self, x: [f64; 2], t: f64) -> [f64; 2];
    /// `grad[c][d]` is the derivative of component `c` along axis `d`.
    fn gradient(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2];
}

/// [`ExactField`] built from a pair of closures.
pub struct FnField<V, G> {
    pub components: usize,
    pub value: V,
    pub gradient: G,
}

impl<V, G> ExactField for FnField<V, G>
where
    V: Fn([f64; 2], f64) -> [f64; 2],
    G: Fn([f64; 2], f64) -> [[f64; 2]; 2],
{
    fn components(&self) -> usize {
        self.components
    }
    fn value(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        (self.value)(x, t)
    }
    fn gradient(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        (self.gradient)(x, t)
    }
}

/// Coefficient vector over a [`FunctionSpace`].
#[derive(Debug, Clone)]
pub struct DiscreteField {
    space: Arc<FunctionSpace>,
    pub coefficients: Vec<f64>,
}

impl DiscreteField {
    pub fn new(space: Arc<FunctionSpace>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != space.n_dofs() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                space.n_dofs(),
                coefficients.len()
            )));
        }
        Ok(DiscreteField { space, coefficients })
    }

    pub fn zeros(space: Arc<FunctionSpace>) -> Self {
        let n = space.n_dofs();
        DiscreteField { space, coefficients: vec![0.0; n] }
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    /// Value and physical gradient at tabulation point `q` of `cell`.
    pub fn eval_in_cell(&self, cell: usize, map: &CellMap, tab: &Tabulation, q: usize) -> ([f64; 2], [[f64; 2]; 2]) {
        let nodes = self.space.cell_nodes(cell);
        let vals = tab.values(q);
        let grads = tab.ref_grads(q);
        let mut v = [0.0; 2];
        let mut g = [[0.0; 2]; 2];
        for c in 0..self.space.components {
            let base = c * self.space.n_nodes;
            let mut gr = [0.0; 2];
            for (a, &n) in nodes.iter().enumerate() {
                let coef = self.coefficients[base + n];
                v[c] += coef * vals[a];
                gr[0] += coef * grads[a][0];
                gr[1] += coef * grads[a][1];
            }
            g[c] = map.physical_grad(gr);
        }
        (v, g)
    }
}

/// Nodal interpolant of `f` at time `t`.
pub fn interpolate(space: &Arc<FunctionSpace>, f: &dyn ExactField, t: f64) -> DiscreteField {
    let mut field = DiscreteField::zeros(space.clone());
    for (node, &x) in space.node_coords().iter().enumerate() {
        let v = f.value(x, t);
        for c in 0..space.components() {
            field.coefficients[c * space.n_nodes() + node] = v[c];
        }
    }
    field
}

/// Quadrature degree used when measuring errors in a space of the given degree.
pub fn error_quadrature_degree(degree: usize) -> usize {
    2 * degree + 2
}

/// L2 error and H1-seminorm error of `u_h` against `exact` at time `t`.
pub fn error_norms(u_h: &DiscreteField, exact: &dyn ExactField, t: f64) -> Result<(f64, f64)> {
    let space = u_h.space();
    if exact.components() != space.components() {
        return Err(Error::InvalidArgument("component mismatch between field and exact solution".into()));
    }
    let rule = quadrature_rule(error_quadrature_degree(space.degree()))?;
    let tab = Tabulation::new(space.degree(), &rule.points)?;
    let mesh = space.mesh();
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for cell in 0..mesh.n_cells() {
        let map = CellMap::new(mesh.cell_coords(cell));
        for q in 0..rule.len() {
            let x = map.map_point(rule.reference_point(q));
            let w = rule.weights[q] * map.det;
            let (v, g) = u_h.eval_in_cell(cell, &map, &tab, q);
            let ve = exact.value(x, t);
            let ge = exact.gradient(x, t);
            for c in 0..space.components() {
                l2 += w * (v[c] - ve[c]).powi(2);
                h1 += w * ((g[c][0] - ge[c][0]).powi(2) + (g[c][1] - ge[c][1]).powi(2));
            }
        }
    }
    Ok((l2.sqrt(), h1.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_uniform_square_mesh, TagRule};
    use std::collections::HashMap;

    fn mesh(n: usize) -> Arc<Mesh> {
        Arc::new(build_uniform_square_mesh(1.0, n, &TagRule::AllDirichlet).unwrap())
    }

    fn scalar(f: impl Fn([f64; 2]) -> f64, g: impl Fn([f64; 2]) -> [f64; 2]) -> impl ExactField {
        FnField { components: 1, value: move |x, _| [f(x), 0.0], gradient: move |x, _| [g(x), [0.0; 2]] }
    }

    #[test]
    fn dof_count_formula_and_brute_force() {
        for n in [1, 2, 4] {
            let m = mesh(n);
            for k in 1..=3 {
                let s = FunctionSpace::new(m.clone(), k, 1).unwrap();
                let formula = m.n_vertices() + (k - 1) * m.n_edges() + m.n_cells() * (k - 1) * k.saturating_sub(2) / 2;
                assert_eq!(s.n_nodes(), formula);
                let key = |p: [f64; 2]| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64);
                let mut dedup = HashMap::new();
                let refs = reference_nodes(k).unwrap();
                for c in 0..m.n_cells() {
                    let map = CellMap::new(m.cell_coords(c));
                    for (local, b) in refs.iter().enumerate() {
                        let x = map.map_point([b[1], b[2]]);
                        let global = s.cell_nodes(c)[local];
                        let prev = dedup.insert(key(x), global);
                        assert!(prev.is_none() || prev == Some(global), "nonconforming node");
                        assert_eq!(key(s.node_coords()[global]), key(x));
                    }
                }
                assert_eq!(dedup.len(), formula);
                let v = FunctionSpace::new(m.clone(), k, 2).unwrap();
                assert_eq!(v.n_dofs(), 2 * formula);
            }
        }
    }

    #[test]
    fn space_rejects_bad_arguments() {
        assert!(matches!(FunctionSpace::new(mesh(1), 4, 1), Err(Error::UnsupportedDegree(4))));
        assert!(FunctionSpace::new(mesh(1), 2, 3).is_err());
    }

    #[test]
    fn interpolation_of_constants_and_linears() {
        let m = mesh(3);
        let s = Arc::new(FunctionSpace::new(m, 2, 1).unwrap());
        let c = interpolate(&s, &scalar(|_| 2.5, |_| [0.0; 2]), 0.0);
        assert!(c.coefficients.iter().all(|&v| v == 2.5));
        let lin = scalar(|x| 1.0 + 2.0 * x[0] - 3.0 * x[1], |_| [2.0, -3.0]);
        let f = interpolate(&s, &lin, 0.0);
        let (l2, h1) = error_norms(&f, &lin, 0.0).unwrap();
        assert!(l2 < 1e-13 && h1 < 1e-12);
    }

    #[test]
    fn exact_polynomials_have_zero_error() {
        let m = mesh(2);
        for k in 1..=3 {
            let s = Arc::new(FunctionSpace::new(m.clone(), k, 2).unwrap());
            let p = k as i32;
            let field = FnField {
                components: 2,
                value: move |x: [f64; 2], _| [x[0].powi(p), x[0] * x[1].powi(p - 1)],
                gradient: move |x: [f64; 2], _| {
                    [
                        [p as f64 * x[0].powi(p - 1), 0.0],
                        [x[1].powi(p - 1), (p - 1) as f64 * x[0] * x[1].powi((p - 2).max(0))],
                    ]
                },
            };
            let f = interpolate(&s, &field, 0.0);
            let (l2, h1) = error_norms(&f, &field, 0.0).unwrap();
            assert!(l2 < 1e-12 && h1 < 1e-12, "degree {k}: {l2} {h1}");
        }
    }

    #[test]
    fn trivial_norms() {
        let s = Arc::new(FunctionSpace::new(mesh(2), 2, 1).unwrap());
        let zero = DiscreteField::zeros(s.clone());
        let (l2, _) = error_norms(&zero, &scalar(|_| 1.0, |_| [0.0; 2]), 0.0).unwrap();
        assert!((l2 - 1.0).abs() < 1e-14);
        let (_, h1) = error_norms(&zero, &scalar(|x| x[0], |_| [1.0, 0.0]), 0.0).unwrap();
        assert!((h1 - 1.0).abs() < 1e-14);
        let v = FnField { components: 2, value: |_, _| [0.0; 2], gradient: |_, _| [[0.0; 2]; 2] };
        assert!(error_norms(&zero, &v, 0.0).is_err());
    }

    #[test]
    fn interpolation_order_of_smooth_field() {
        let f = scalar(
            |x| (2.0 * std::f64::consts::PI * (x[0] + x[1])).sin(),
            |x| {
                let d = 2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * (x[0] + x[1])).cos();
                [d, d]
            },
        );
        let errs: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&n| {
                let s = Arc::new(FunctionSpace::new(mesh(n), 2, 1).unwrap());
                error_norms(&interpolate(&s, &f, 0.0), &f, 0.0).unwrap().0
            })
            .collect();
        let rate = (errs[1] / errs[2]).log2();
        assert!((rate - 3.0).abs() < 0.15, "rate {rate}");
    }

    #[test]
    fn linear_field_has_constant_exact_gradient() {
        let m = mesh(3);
        let s = Arc::new(FunctionSpace::new(m.clone(), 3, 1).unwrap());
        let f = interpolate(&s, &scalar(|x| 0.5 * x[0] + 4.0 * x[1], |_| [0.5, 4.0]), 0.0);
        let rule = quadrature_rule(3).unwrap();
        let tab = Tabulation::new(3, &rule.points).unwrap();
        for c in 0..m.n_cells() {
            let map = CellMap::new(m.cell_coords(c));
            for q in 0..rule.len() {
                let (_, g) = f.eval_in_cell(c, &map, &tab, q);
                assert!((g[0][0] - 0.5).abs() < 1e-13 && (g[0][1] - 4.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn boundary_dofs_cover_the_boundary() {
        let m = mesh(4);
        for k in 1..=3 {
            let s = FunctionSpace::new(m.clone(), k, 2).unwrap();
            let nodes = s.boundary_nodes(BoundaryTag::DirichletSolid);
            assert_eq!(nodes.len(), 4 * 4 * k);
            for &n in &nodes {
                let x = s.node_coords()[n];
                let on = x[0].abs() < 1e-14
                    || x[1].abs() < 1e-14
                    || (x[0] - 1.0).abs() < 1e-14
                    || (x[1] - 1.0).abs() < 1e-14;
                assert!(on);
            }
            assert_eq!(s.boundary_dofs(BoundaryTag::DirichletSolid).len(), 2 * nodes.len());
            assert!(s.boundary_nodes(BoundaryTag::NeumannSolid).is_empty());
        }
    }

    #[test]
    fn eval_basis_matches_reference() {
        let s = FunctionSpace::new(mesh(1), 2, 1).unwrap();
        let (v, _) = s.eval_basis(1, [1.0 / 3.0; 3]).unwrap();
        assert!((v[0] + 1.0 / 9.0).abs() < 1e-15);
        assert!(s.eval_basis(5, [1.0, 0.0, 0.0]).is_err());
    }
}
