//! Lagrange shape functions of degree 1 to 3 on the reference triangle.
//!
//! Local node order: the three vertices, then the interior nodes of local
//! edges 0, 1, 2 (edge `e` runs from vertex `e` to vertex `e + 1`, nodes listed
//! from its start), then cell-interior nodes.

use crate::error::{Error, Result};

const DLAMBDA: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

pub fn check_degree(degree: usize) -> Result<()> {
    if (1..=3).contains(&degree) {
        Ok(())
    } else {
        Err(Error::UnsupportedDegree(degree))
    }
}

/// Number of shape functions on one cell.
pub fn n_local(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Barycentric coordinates of the local nodes.
pub fn reference_nodes(degree: usize) -> Result<Vec<[f64; 3]>> {
    check_degree(degree)?;
    let k = degree as f64;
    let mut nodes = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for e in 0..3 {
        for m in 1..degree {
            let mut b = [0.0; 3];
            b[e] = 1.0 - m as f64 / k;
            b[(e + 1) % 3] = m as f64 / k;
            nodes.push(b);
        }
    }
    if degree == 3 {
        nodes.push([1.0 / 3.0; 3]);
    }
    Ok(nodes)
}

/// Evaluates all shape functions and their `(xi, eta)` gradients at a
/// barycentric point.
pub fn eval_reference(degree: usize, l: [f64; 3], values: &mut [f64], grads: &mut [[f64; 2]]) -> Result<()> {
    check_degree(degree)?;
    let n = n_local(degree);
    debug_assert!(values.len() >= n && grads.len() >= n);
    // Shape function value and its partial derivatives with respect to the
    // three barycentric coordinates.
    let mut put = |i: usize, v: f64, dl: [f64; 3]| {
        values[i] = v;
        grads[i] = [0, 1].map(|d| dl[0] * DLAMBDA[0][d] + dl[1] * DLAMBDA[1][d] + dl[2] * DLAMBDA[2][d]);
    };
    let unit = |i: usize, s: f64| {
        let mut d = [0.0; 3];
        d[i] = s;
        d
    };
    match degree {
        1 => {
            for i in 0..3 {
                put(i, l[i], unit(i, 1.0));
            }
        }
        2 => {
            for i in 0..3 {
                put(i, l[i] * (2.0 * l[i] - 1.0), unit(i, 4.0 * l[i] - 1.0));
            }
            for e in 0..3 {
                let (a, b) = (e, (e + 1) % 3);
                let mut d = [0.0; 3];
                d[a] = 4.0 * l[b];
                d[b] = 4.0 * l[a];
                put(3 + e, 4.0 * l[a] * l[b], d);
            }
        }
        _ => {
            for i in 0..3 {
                let x = l[i];
                put(i, 0.5 * x * (3.0 * x - 1.0) * (3.0 * x - 2.0), unit(i, 13.5 * x * x - 9.0 * x + 1.0));
            }
            for e in 0..3 {
                let (a, b) = (e, (e + 1) % 3);
                let (la, lb) = (l[a], l[b]);
                let mut d = [0.0; 3];
                d[a] = 4.5 * lb * (6.0 * la - 1.0);
                d[b] = 4.5 * la * (3.0 * la - 1.0);
                put(3 + 2 * e, 4.5 * la * lb * (3.0 * la - 1.0), d);
                let mut d = [0.0; 3];
                d[a] = 4.5 * lb * (3.0 * lb - 1.0);
                d[b] = 4.5 * la * (6.0 * lb - 1.0);
                put(4 + 2 * e, 4.5 * la * lb * (3.0 * lb - 1.0), d);
            }
            put(9, 27.0 * l[0] * l[1] * l[2], [27.0 * l[1] * l[2], 27.0 * l[0] * l[2], 27.0 * l[0] * l[1]]);
        }
    }
    Ok(())
}

/// Shape function values and reference gradients tabulated at a list of points.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub degree: usize,
    pub n_local: usize,
    pub n_points: usize,
    values: Vec<f64>,
    grads: Vec<[f64; 2]>,
}

impl Tabulation {
    pub fn new(degree: usize, points: &[[f64; 3]]) -> Result<Self> {
        check_degree(degree)?;
        let nl = n_local(degree);
        let mut values = vec![0.0; nl * points.len()];
        let mut grads = vec![[0.0; 2]; nl * points.len()];
        for (q, p) in points.iter().enumerate() {
            eval_reference(degree, *p, &mut values[q * nl..(q + 1) * nl], &mut grads[q * nl..(q + 1) * nl])?;
        }
        Ok(Tabulation { degree, n_local: nl, n_points: points.len(), values, grads })
    }

    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q * self.n_local..(q + 1) * self.n_local]
    }

    pub fn ref_grads(&self, q: usize) -> &[[f64; 2]] {
        &self.grads[q * self.n_local..(q + 1) * self.n_local]
    }
}
