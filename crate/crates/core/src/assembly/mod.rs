//! Residuals, Jacobians and coefficient operators of the stabilized
//! quasi-static mixture problems, in fluid-velocity and filtration-velocity
//! form, plus the projections that convert between the two velocity fields.

pub mod operators;
pub mod pointwise;
pub mod recovery;
pub mod system;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::femspace::{quadrature_rule, CellMap, DiscreteField, FunctionSpace, QuadratureRule, Tabulation};
use crate::mechanics::{MaterialParams, NeoHookean, StrainEnergy};
use crate::mesh::Mesh;

pub use operators::{
    assemble_b, assemble_b_transpose, assemble_correction_loads, assemble_d, assemble_elastic, assemble_k,
    assemble_loads, assemble_mass, assemble_s, assemble_s_transpose, BWeight, CorrectionLoads, DragWeight, LoadBlocks,
    MassWeight,
};
pub use recovery::{recover_filtration_velocity, recover_fluid_velocity, Recovered};
pub use system::{
    assemble_at, assemble_system, energy_terms, EnergyTerms, SourceSamples, SystemMatrices, TimeCoupling,
};

/// Which relative-velocity field is the third unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formulation {
    /// The fluid velocity `v_f`.
    FluidVelocity,
    /// The filtration velocity `v_flt = xi_f (v_f - v_s)`.
    FiltrationVelocity,
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formulation::FluidVelocity => "fluid",
            Formulation::FiltrationVelocity => "filtration",
        })
    }
}

impl FromStr for Formulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fluid" | "fluid-velocity" | "fluidvelocity" => Ok(Formulation::FluidVelocity),
            "filtration" | "filtration-velocity" | "filtrationvelocity" | "flt" => Ok(Formulation::FiltrationVelocity),
            other => Err(Error::InvalidArgument(format!("unknown formulation `{other}`"))),
        }
    }
}

/// Body and boundary data entering the load blocks.
///
/// `b_s` and `b_f` are body forces per unit mass. `g` and `h` are a volumetric
/// and a boundary mass source in the constraint row, `c_s` a solid-momentum
/// correction and `phi_c` a flux correction tested with the pressure gradient.
/// All of them vanish for physical (non-manufactured) problems.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PointSources {
    pub b_s: [f64; 2],
    pub b_f: [f64; 2],
    pub g: f64,
    pub c_s: [f64; 2],
    pub phi_c: [f64; 2],
}

pub trait SourceTerms: Send + Sync {
    fn body(&self, x: [f64; 2], t: f64) -> PointSources;

    /// Boundary mass flux `h`, subtracted in the constraint row on every facet.
    fn boundary_flux(&self, _x: [f64; 2], _normal: [f64; 2], _t: f64) -> f64 {
        0.0
    }

    /// Reference traction on Neumann facets.
    fn traction(&self, _x: [f64; 2], _normal: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0; 2]
    }

    fn dirichlet_u(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0; 2]
    }

    fn dirichlet_v(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0; 2]
    }
}

/// Homogeneous data everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoSources;

impl SourceTerms for NoSources {
    fn body(&self, _x: [f64; 2], _t: f64) -> PointSources {
        PointSources::default()
    }
}

/// Everything that defines the continuous problem apart from the mesh.
#[derive(Clone)]
pub struct Model {
    pub formulation: Formulation,
    pub params: MaterialParams,
    pub law: Arc<dyn StrainEnergy>,
    pub sources: Arc<dyn SourceTerms>,
}

impl Model {
    /// Neo-Hookean skeleton with homogeneous data.
    pub fn new(formulation: Formulation, params: MaterialParams) -> Self {
        Model { formulation, params, law: Arc::new(NeoHookean), sources: Arc::new(NoSources) }
    }

    pub fn with_sources(mut self, sources: Arc<dyn SourceTerms>) -> Self {
        self.sources = sources;
        self
    }

    pub fn with_law(mut self, law: Arc<dyn StrainEnergy>) -> Self {
        self.law = law;
        self
    }
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model").field("formulation", &self.formulation).field("params", &self.params).finish()
    }
}

/// Offsets of the unknown blocks `[u_s, v_s, w, p, multiplier]` in the
/// global vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_velocity: usize,
    pub n_pressure: usize,
    pub u: usize,
    pub v_s: usize,
    pub w: usize,
    pub p: usize,
    pub multiplier: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(n_velocity: usize, n_pressure: usize) -> Self {
        Layout {
            n_velocity,
            n_pressure,
            u: 0,
            v_s: n_velocity,
            w: 2 * n_velocity,
            p: 3 * n_velocity,
            multiplier: 3 * n_velocity + n_pressure,
            total: 3 * n_velocity + n_pressure + 1,
        }
    }
}

/// Tabulations on one boundary edge of the reference triangle.
#[derive(Debug, Clone)]
pub struct EdgeTables {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub velocity: Tabulation,
    pub pressure: Tabulation,
}

/// Mesh, spaces and quadrature shared by every assembly routine.
///
/// `u_s`, `v_s` and `w` live in the same vector space; `p` in a scalar space
/// whose degree may differ.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Arc<Mesh>,
    pub velocity: Arc<FunctionSpace>,
    pub pressure: Arc<FunctionSpace>,
    pub rule: QuadratureRule,
    pub velocity_tab: Tabulation,
    pub pressure_tab: Tabulation,
    pub edges: Vec<EdgeTables>,
    pub maps: Vec<CellMap>,
    pub layout: Layout,
    pub(crate) pattern: OnceLock<Arc<system::SystemPattern>>,
}

impl Discretization {
    pub fn new(mesh: Arc<Mesh>, velocity_degree: usize, pressure_degree: usize) -> Result<Self> {
        let velocity = Arc::new(FunctionSpace::new(mesh.clone(), velocity_degree, 2)?);
        let pressure = Arc::new(FunctionSpace::new(mesh.clone(), pressure_degree, 1)?);
        let degree = 2 * velocity_degree.max(pressure_degree) + 2;
        let rule = quadrature_rule(degree)?;
        let velocity_tab = Tabulation::new(velocity_degree, &rule.points)?;
        let pressure_tab = Tabulation::new(pressure_degree, &rule.points)?;
        let line = crate::femspace::interval_rule(degree);
        let mut edges = Vec::with_capacity(3);
        for e in 0..3 {
            let points: Vec<[f64; 3]> = line
                .iter()
                .map(|&(s, _)| {
                    let mut b = [0.0; 3];
                    b[e] = 1.0 - s;
                    b[(e + 1) % 3] = s;
                    b
                })
                .collect();
            edges.push(EdgeTables {
                weights: line.iter().map(|&(_, w)| w).collect(),
                velocity: Tabulation::new(velocity_degree, &points)?,
                pressure: Tabulation::new(pressure_degree, &points)?,
                points,
            });
        }
        let maps = (0..mesh.n_cells()).map(|c| CellMap::new(mesh.cell_coords(c))).collect();
        let layout = Layout::new(velocity.n_dofs(), pressure.n_dofs());
        Ok(Discretization {
            mesh,
            velocity,
            pressure,
            rule,
            velocity_tab,
            pressure_tab,
            edges,
            maps,
            layout,
            pattern: OnceLock::new(),
        })
    }

    pub fn velocity_degree(&self) -> usize {
        self.velocity.degree()
    }

    pub fn pressure_degree(&self) -> usize {
        self.pressure.degree()
    }

    pub fn n_dofs(&self) -> usize {
        self.layout.total
    }
}

/// The discrete unknowns at one time level.
#[derive(Debug, Clone)]
pub struct MixedState {
    pub u_s: DiscreteField,
    pub v_s: DiscreteField,
    /// `v_f` or `v_flt` depending on the formulation.
    pub w: DiscreteField,
    pub p: DiscreteField,
    pub multiplier: f64,
    pub formulation: Formulation,
}

impl MixedState {
    pub fn zeros(disc: &Discretization, formulation: Formulation) -> Self {
        MixedState {
            u_s: DiscreteField::zeros(disc.velocity.clone()),
            v_s: DiscreteField::zeros(disc.velocity.clone()),
            w: DiscreteField::zeros(disc.velocity.clone()),
            p: DiscreteField::zeros(disc.pressure.clone()),
            multiplier: 0.0,
            formulation,
        }
    }

    /// Splits a global vector into fields.
    pub fn from_vector(disc: &Discretization, formulation: Formulation, x: &[f64]) -> Result<Self> {
        let l = disc.layout;
        if x.len() != l.total {
            return Err(Error::InvalidArgument(format!("state vector has length {}, expected {}", x.len(), l.total)));
        }
        Ok(MixedState {
            u_s: DiscreteField::new(disc.velocity.clone(), x[l.u..l.v_s].to_vec())?,
            v_s: DiscreteField::new(disc.velocity.clone(), x[l.v_s..l.w].to_vec())?,
            w: DiscreteField::new(disc.velocity.clone(), x[l.w..l.p].to_vec())?,
            p: DiscreteField::new(disc.pressure.clone(), x[l.p..l.multiplier].to_vec())?,
            multiplier: x[l.multiplier],
            formulation,
        })
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(3 * self.u_s.coefficients.len() + self.p.coefficients.len() + 1);
        x.extend_from_slice(&self.u_s.coefficients);
        x.extend_from_slice(&self.v_s.coefficients);
        x.extend_from_slice(&self.w.coefficients);
        x.extend_from_slice(&self.p.coefficients);
        x.push(self.multiplier);
        x
    }
}
