//! Structured triangulations of the square `[0, L]^2` with tagged boundary facets.
//!
//! Cells are stored counterclockwise. Local edge `e` of a cell runs from its
//! vertex `e` to vertex `(e + 1) % 3`; global edges are stored with the lower
//! vertex index first.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Boundary condition class attached to a boundary facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    DirichletSolid,
    NeumannSolid,
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryTag::DirichletSolid => write!(f, "dirichlet"),
            BoundaryTag::NeumannSolid => write!(f, "neumann"),
        }
    }
}

impl FromStr for BoundaryTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dirichlet" | "dirichletsolid" => Ok(BoundaryTag::DirichletSolid),
            "neumann" | "neumannsolid" => Ok(BoundaryTag::NeumannSolid),
            other => Err(Error::InvalidArgument(format!("unknown boundary tag `{other}`"))),
        }
    }
}

/// One side of the square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

/// How boundary facets of a freshly generated mesh are tagged.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TagRule {
    #[default]
    AllDirichlet,
    /// The listed sides are Neumann, every other side is Dirichlet.
    NeumannSides(Vec<Side>),
}

impl TagRule {
    fn tag_for(&self, midpoint: [f64; 2], length: f64) -> BoundaryTag {
        match self {
            TagRule::AllDirichlet => BoundaryTag::DirichletSolid,
            TagRule::NeumannSides(sides) => {
                let tol = 1e-12 * length;
                let on = |side: &Side| match side {
                    Side::Bottom => midpoint[1].abs() < tol,
                    Side::Right => (midpoint[0] - length).abs() < tol,
                    Side::Top => (midpoint[1] - length).abs() < tol,
                    Side::Left => midpoint[0].abs() < tol,
                };
                if sides.iter().any(on) {
                    BoundaryTag::NeumannSolid
                } else {
                    BoundaryTag::DirichletSolid
                }
            }
        }
    }
}

/// A boundary facet given as a cell and one of its local edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Facet {
    pub cell: usize,
    pub edge: usize,
}

/// Geometric description of a boundary facet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFacet {
    pub cell: usize,
    pub edge: usize,
    /// Endpoints in the counterclockwise order of the owning cell.
    pub vertices: [usize; 2],
    pub normal: [f64; 2],
    pub length: f64,
    pub tag: BoundaryTag,
}

/// Conforming triangulation of the square reference domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    side_length: f64,
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    cell_edges: Vec<[usize; 3]>,
    facets: Vec<Facet>,
    facet_tags: Vec<BoundaryTag>,
    h: f64,
}

/// Builds the structured mesh of `2 n^2` triangles, every square cut along the
/// diagonal from its lower-left to its upper-right corner.
pub fn build_uniform_square_mesh(length: f64, n: usize, tag_rule: &TagRule) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::InvalidArgument(format!("side length must be positive, got {length}")));
    }
    let stride = n + 1;
    let mut vertices = Vec::with_capacity(stride * stride);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([length * i as f64 / n as f64, length * j as f64 / n as f64]);
        }
    }
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * stride + i;
            let v10 = v00 + 1;
            let v01 = v00 + stride;
            let v11 = v01 + 1;
            cells.push([v00, v10, v11]);
            cells.push([v00, v11, v01]);
        }
    }
    Mesh::from_parts(length, vertices, cells, |_, mid| tag_rule.tag_for(mid, length))
}

/// Splits every triangle into four through its edge midpoints.
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    mesh.refine_uniform()
}

fn sorted(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

impl Mesh {
    /// Assembles topology from raw vertices and counterclockwise cells.
    ///
    /// `tag_of` receives the sorted vertex pair and midpoint of each boundary edge.
    pub fn from_parts(
        side_length: f64,
        vertices: Vec<[f64; 2]>,
        cells: Vec<[usize; 3]>,
        tag_of: impl Fn([usize; 2], [f64; 2]) -> BoundaryTag,
    ) -> Result<Mesh> {
        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut incidence: Vec<u8> = Vec::new();
        let mut first_owner: Vec<Facet> = Vec::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        let mut h: f64 = 0.0;
        for (c, cell) in cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidArgument(format!("cell {c} references a missing vertex")));
            }
            let [a, b, d] = cell.map(|v| vertices[v]);
            let area2 = (b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]);
            if !(area2 > 0.0) {
                return Err(Error::InvalidArgument(format!("cell {c} is not counterclockwise")));
            }
            let mut local = [0usize; 3];
            for e in 0..3 {
                let (va, vb) = (cell[e], cell[(e + 1) % 3]);
                let pa = vertices[va];
                let pb = vertices[vb];
                h = h.max(((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt());
                let key = sorted(va, vb);
                let id = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    incidence.push(0);
                    first_owner.push(Facet { cell: c, edge: e });
                    edges.len() - 1
                });
                incidence[id] += 1;
                if incidence[id] > 2 {
                    return Err(Error::InvalidArgument(format!("edge {key:?} shared by more than two cells")));
                }
                local[e] = id;
            }
            cell_edges.push(local);
        }
        let mut facets = Vec::new();
        let mut facet_tags = Vec::new();
        for (id, &count) in incidence.iter().enumerate() {
            if count == 1 {
                let [a, b] = edges[id];
                let mid = [0.5 * (vertices[a][0] + vertices[b][0]), 0.5 * (vertices[a][1] + vertices[b][1])];
                facets.push(first_owner[id]);
                facet_tags.push(tag_of(edges[id], mid));
            }
        }
        Ok(Mesh { side_length, vertices, cells, edges, cell_edges, facets, facet_tags, h })
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    /// Global edges as sorted vertex pairs.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Global edge id of each local edge of each cell.
    pub fn cell_edges(&self) -> &[[usize; 3]] {
        &self.cell_edges
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn facet_tags(&self) -> &[BoundaryTag] {
        &self.facet_tags
    }

    /// Largest edge length over all cells.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn cell_coords(&self, cell: usize) -> [[f64; 2]; 3] {
        self.cells[cell].map(|v| self.vertices[v])
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cell_coords(cell);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_area(c)).sum()
    }

    /// Geometric data for every facet carrying `tag`.
    pub fn boundary_facets(&self, tag: BoundaryTag) -> Vec<BoundaryFacet> {
        self.all_boundary_facets().into_iter().filter(|f| f.tag == tag).collect()
    }

    /// Same as [`Mesh::boundary_facets`] with the tag given by name.
    pub fn boundary_facets_named(&self, tag: &str) -> Result<Vec<BoundaryFacet>> {
        Ok(self.boundary_facets(tag.parse()?))
    }

    pub fn all_boundary_facets(&self) -> Vec<BoundaryFacet> {
        self.facets
            .iter()
            .zip(&self.facet_tags)
            .map(|(f, &tag)| {
                let cell = self.cells[f.cell];
                let va = cell[f.edge];
                let vb = cell[(f.edge + 1) % 3];
                let (pa, pb) = (self.vertices[va], self.vertices[vb]);
                let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
                let length = (dx * dx + dy * dy).sqrt();
                BoundaryFacet {
                    cell: f.cell,
                    edge: f.edge,
                    vertices: [va, vb],
                    normal: [dy / length, -dx / length],
                    length,
                    tag,
                }
            })
            .collect()
    }

    pub fn refine_uniform(&self) -> Result<Mesh> {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        for &[a, b] in &self.edges {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        }
        let mut cells = Vec::with_capacity(4 * self.cells.len());
        for (cell, edges) in self.cells.iter().zip(&self.cell_edges) {
            let [a, b, c] = *cell;
            let [mab, mbc, mca] = edges.map(|e| nv + e);
            cells.push([a, mab, mca]);
            cells.push([mab, b, mbc]);
            cells.push([mca, mbc, c]);
            cells.push([mab, mbc, mca]);
        }
        let mut child_tags: HashMap<[usize; 2], BoundaryTag> = HashMap::new();
        for (f, &tag) in self.facets.iter().zip(&self.facet_tags) {
            let id = self.cell_edges[f.cell][f.edge];
            let [a, b] = self.edges[id];
            child_tags.insert(sorted(a, nv + id), tag);
            child_tags.insert(sorted(nv + id, b), tag);
        }
        Mesh::from_parts(self.side_length, vertices, cells, |key, _| {
            child_tags.get(&key).copied().unwrap_or(BoundaryTag::DirichletSolid)
        })
    }

    /// Writes the plain-text dump: a header, vertex lines, cell lines, then
    /// boundary facet lines `cell edge tag`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "vertices {} cells {}", self.vertices.len(), self.cells.len())?;
        for v in &self.vertices {
            writeln!(out, "{} {}", v[0], v[1])?;
        }
        for c in &self.cells {
            writeln!(out, "{} {} {}", c[0], c[1], c[2])?;
        }
        for (f, tag) in self.facets.iter().zip(&self.facet_tags) {
            writeln!(out, "{} {} {}", f.cell, f.edge, tag)?;
        }
        Ok(())
    }
}
