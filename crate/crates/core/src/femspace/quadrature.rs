//! Quadrature on the reference triangle `{(xi, eta) : xi, eta >= 0, xi + eta <= 1}`
//! and on the unit interval.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

pub const MAX_DEGREE: usize = 10;

/// Points in barycentric coordinates `(1 - xi - eta, xi, eta)` with weights
/// summing to the reference area 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Reference coordinates `(xi, eta)` of point `q`.
    pub fn reference_point(&self, q: usize) -> [f64; 2] {
        [self.points[q][1], self.points[q][2]]
    }
}

fn legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n).expect("positive point count"));
    rule.as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// Rule exact for all bivariate polynomials of total degree `poly_degree`.
///
/// Built as a collapsed tensor product of Gauss-Legendre rules: the square
/// `(s, t)` maps onto the triangle through `xi = s`, `eta = t (1 - s)`.
pub fn quadrature_rule(poly_degree: usize) -> Result<QuadratureRule> {
    if poly_degree == 0 || poly_degree > MAX_DEGREE {
        return Err(Error::UnsupportedDegree(poly_degree));
    }
    let ns = (poly_degree + 3) / 2;
    let nt = (poly_degree + 2) / 2;
    let s_rule = legendre_unit(ns);
    let t_rule = legendre_unit(nt);
    let mut points = Vec::with_capacity(ns * nt);
    let mut weights = Vec::with_capacity(ns * nt);
    for &(s, ws) in &s_rule {
        for &(t, wt) in &t_rule {
            let xi = s;
            let eta = t * (1.0 - s);
            points.push([1.0 - xi - eta, xi, eta]);
            weights.push(ws * wt * (1.0 - s));
        }
    }
    Ok(QuadratureRule { degree: poly_degree, points, weights })
}

/// Gauss-Legendre rule on `[0, 1]` exact for polynomials of degree `poly_degree`.
pub fn interval_rule(poly_degree: usize) -> Vec<(f64, f64)> {
    legendre_unit(poly_degree / 2 + 1)
}
