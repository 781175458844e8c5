//! Truncated computational domain: the road segment `(-R, R)` and the two
//! field half-disks (or rectangles) above it, on a uniform lattice.
//!
//! Lattice nodes are addressed by integer coordinates `(i, j)` with
//! `x = i * h`, `y = j * h`, `-n <= i <= n`, `0 <= j <= n` and `n = R / h`.
//! All interior tests are done in integer arithmetic so classification is
//! exact and refinement-nested.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const LATTICE_TOL: f64 = 1e-9;
const NO_NODE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    #[default]
    #[serde(alias = "half-disk", alias = "half_disk")]
    Halfdisk,
    Rectangle,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Halfdisk => f.write_str("halfdisk"),
            Shape::Rectangle => f.write_str("rectangle"),
        }
    }
}

/// One of the two field half-planes attached to the road.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    One,
    Two,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::One, Side::Two];

    pub fn index(self) -> usize {
        match self {
            Side::One => 0,
            Side::Two => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    Road,
    Field(Side),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    /// Interior field node or interior road node carrying an unknown.
    Unknown,
    /// Truncation boundary; the value is pinned to zero.
    Dirichlet,
    /// Field node on the road line `y = 0`, `|x| < R`.
    Trace,
    /// Outside the bounding box `[-R, R] x [0, R]`.
    Outside,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("radius and spacing must be positive and finite (R = {radius}, h = {spacing})")]
    NonPositive { radius: f64, spacing: f64 },
    #[error("R / h = {ratio} is not an integer")]
    NonIntegralRatio { ratio: f64 },
    #[error("R / h = {cells} leaves no interior nodes (need at least 2)")]
    TooCoarse { cells: i64 },
    #[error("point ({x}, {y}) is not on the lattice of spacing {spacing}")]
    OffLattice { x: f64, y: f64, spacing: f64 },
}

/// Uniform lattice discretization of `I_R` and `Omega_R`.
///
/// Unknown ordering: road nodes left to right, then field side 1 row-major
/// bottom-up, then field side 2 with the same node set.
#[derive(Debug, Clone)]
pub struct TruncatedGrid {
    radius: f64,
    spacing: f64,
    shape: Shape,
    cells: i32,
    field: Vec<(i32, i32)>,
    lookup: Vec<u32>,
    trace_columns: Vec<Option<usize>>,
}

impl TruncatedGrid {
    pub fn new(radius: f64, spacing: f64, shape: Shape) -> Result<Self, GridError> {
        if !(radius > 0.0 && spacing > 0.0 && radius.is_finite() && spacing.is_finite()) {
            return Err(GridError::NonPositive { radius, spacing });
        }
        let ratio = radius / spacing;
        let rounded = ratio.round();
        if (ratio - rounded).abs() > LATTICE_TOL * ratio.max(1.0) || rounded > i32::MAX as f64 / 4.0
        {
            return Err(GridError::NonIntegralRatio { ratio });
        }
        let cells = rounded as i64;
        if cells < 2 {
            return Err(GridError::TooCoarse { cells });
        }
        let n = cells as i32;
        let width = (2 * n + 1) as usize;
        let mut lookup = vec![NO_NODE; width * (n as usize + 1)];
        let mut field = Vec::new();
        for j in 1..=n {
            for i in -n..=n {
                if interior(shape, n, i, j) {
                    lookup[slot(n, i, j)] = field.len() as u32;
                    field.push((i, j));
                }
            }
        }
        let trace_columns = (-n + 1..n)
            .map(|i| {
                let id = lookup[slot(n, i, 1)];
                (id != NO_NODE).then_some(id as usize)
            })
            .collect();
        Ok(Self {
            radius: n as f64 * spacing,
            spacing,
            shape,
            cells: n,
            field,
            lookup,
            trace_columns,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Number of lattice cells per radius, `R / h`.
    pub fn cells(&self) -> i32 {
        self.cells
    }

    pub fn road_len(&self) -> usize {
        (2 * self.cells - 1) as usize
    }

    /// Number of interior field unknowns on one side.
    pub fn field_len(&self) -> usize {
        self.field.len()
    }

    /// Total number of unknowns `N = #road + 2 #field`.
    pub fn len(&self) -> usize {
        self.road_len() + 2 * self.field_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn road_range(&self) -> Range<usize> {
        0..self.road_len()
    }

    pub fn field_range(&self, side: Side) -> Range<usize> {
        let start = self.road_len() + side.index() * self.field_len();
        start..start + self.field_len()
    }

    /// Lattice column of road unknown `k`.
    pub fn road_lattice(&self, k: usize) -> i32 {
        k as i32 - self.cells + 1
    }

    pub fn road_x(&self, k: usize) -> f64 {
        self.road_lattice(k) as f64 * self.spacing
    }

    pub fn road_local_at(&self, i: i32) -> Option<usize> {
        (i.abs() < self.cells).then(|| (i + self.cells - 1) as usize)
    }

    pub fn field_lattice(&self, l: usize) -> (i32, i32) {
        self.field[l]
    }

    pub fn field_xy(&self, l: usize) -> (f64, f64) {
        let (i, j) = self.field[l];
        (i as f64 * self.spacing, j as f64 * self.spacing)
    }

    pub fn field_nodes(&self) -> &[(i32, i32)] {
        &self.field
    }

    /// Local field index of the interior node at lattice `(i, j)`, if any.
    pub fn field_local_at(&self, i: i32, j: i32) -> Option<usize> {
        if i.abs() > self.cells || j < 0 || j > self.cells {
            return None;
        }
        let id = self.lookup[slot(self.cells, i, j)];
        (id != NO_NODE).then_some(id as usize)
    }

    /// Field column directly above road node `k` (the node at height `h`).
    pub fn trace_column(&self, k: usize) -> Option<usize> {
        self.trace_columns[k]
    }

    pub fn global_index(&self, component: Component, local: usize) -> usize {
        match component {
            Component::Road => {
                debug_assert!(local < self.road_len());
                local
            }
            Component::Field(side) => {
                debug_assert!(local < self.field_len());
                self.field_range(side).start + local
            }
        }
    }

    pub fn locate(&self, global: usize) -> Option<(Component, usize)> {
        let nr = self.road_len();
        let nf = self.field_len();
        if global < nr {
            Some((Component::Road, global))
        } else if global < nr + nf {
            Some((Component::Field(Side::One), global - nr))
        } else if global < nr + 2 * nf {
            Some((Component::Field(Side::Two), global - nr - nf))
        } else {
            None
        }
    }

    /// Physical coordinates of a global unknown (`y = 0` for road nodes).
    pub fn coordinates(&self, global: usize) -> Option<(Component, f64, f64)> {
        self.locate(global).map(|(c, l)| match c {
            Component::Road => (c, self.road_x(l), 0.0),
            Component::Field(_) => {
                let (x, y) = self.field_xy(l);
                (c, x, y)
            }
        })
    }

    /// Classification of a lattice node given by integer coordinates.
    pub fn classify_lattice(&self, i: i32, j: i32) -> NodeClass {
        let n = self.cells;
        if i.abs() > n || j < 0 || j > n {
            NodeClass::Outside
        } else if j == 0 {
            if i.abs() < n {
                NodeClass::Trace
            } else {
                NodeClass::Dirichlet
            }
        } else if interior(self.shape, n, i, j) {
            NodeClass::Unknown
        } else {
            NodeClass::Dirichlet
        }
    }

    pub fn classify(&self, x: f64, y: f64) -> Result<NodeClass, GridError> {
        let (i, j) = self.to_lattice(x, y)?;
        Ok(self.classify_lattice(i, j))
    }

    pub fn to_lattice(&self, x: f64, y: f64) -> Result<(i32, i32), GridError> {
        let off = || GridError::OffLattice {
            x,
            y,
            spacing: self.spacing,
        };
        let snap = |v: f64| -> Option<i64> {
            let s = v / self.spacing;
            let r = s.round();
            ((s - r).abs() <= LATTICE_TOL * s.abs().max(1.0) && r.abs() < i32::MAX as f64)
                .then_some(r as i64)
        };
        let i = snap(x).ok_or_else(off)?;
        let j = snap(y).ok_or_else(off)?;
        Ok((i as i32, j as i32))
    }

    /// Every lattice node of the bounding box `[-R, R] x [0, R]`, as
    /// `(i, j, x, y)`.
    pub fn box_nodes(&self) -> impl Iterator<Item = (i32, i32, f64, f64)> + '_ {
        let n = self.cells;
        let h = self.spacing;
        (0..=n).flat_map(move |j| (-n..=n).map(move |i| (i, j, i as f64 * h, j as f64 * h)))
    }

    /// Length of the extended field vector used by the variational form:
    /// the `y = 0` trace row (one node per road node) followed by the
    /// interior field nodes.
    pub fn extended_field_len(&self) -> usize {
        self.road_len() + self.field_len()
    }

    /// Index into the extended field vector of lattice node `(i, j)`.
    pub fn extended_local_at(&self, i: i32, j: i32) -> Option<usize> {
        if j == 0 {
            self.road_local_at(i)
        } else {
            self.field_local_at(i, j).map(|l| self.road_len() + l)
        }
    }

    /// Lattice coordinates of an extended field index.
    pub fn extended_lattice(&self, e: usize) -> (i32, i32) {
        if e < self.road_len() {
            (self.road_lattice(e), 0)
        } else {
            self.field[e - self.road_len()]
        }
    }
}

fn slot(n: i32, i: i32, j: i32) -> usize {
    (j as usize) * (2 * n + 1) as usize + (i + n) as usize
}

fn interior(shape: Shape, n: i32, i: i32, j: i32) -> bool {
    if j < 1 {
        return false;
    }
    match shape {
        Shape::Halfdisk => {
            let (i, j, n) = (i as i64, j as i64, n as i64);
            i * i + j * j < n * n
        }
        Shape::Rectangle => i.abs() < n && j < n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_rectangle_enumeration() {
        let g = TruncatedGrid::new(1.0, 0.5, Shape::Rectangle).unwrap();
        let road: Vec<f64> = (0..g.road_len()).map(|k| g.road_x(k)).collect();
        assert_eq!(road, vec![-0.5, 0.0, 0.5]);
        let field: Vec<(f64, f64)> = (0..g.field_len()).map(|l| g.field_xy(l)).collect();
        assert_eq!(field, vec![(-0.5, 0.5), (0.0, 0.5), (0.5, 0.5)]);
        assert_eq!(g.len(), 9);
    }

    #[test]
    fn unit_halfdisk_has_same_unknowns() {
        let g = TruncatedGrid::new(1.0, 0.5, Shape::Halfdisk).unwrap();
        let field: Vec<(f64, f64)> = (0..g.field_len()).map(|l| g.field_xy(l)).collect();
        assert_eq!(field, vec![(-0.5, 0.5), (0.0, 0.5), (0.5, 0.5)]);
        assert_eq!(g.len(), 9);
    }

    #[test]
    fn coarse_rectangle_r2() {
        let g = TruncatedGrid::new(2.0, 1.0, Shape::Rectangle).unwrap();
        assert_eq!(g.road_len(), 3);
        let field: Vec<(f64, f64)> = (0..g.field_len()).map(|l| g.field_xy(l)).collect();
        assert_eq!(field, vec![(-1.0, 1.0), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(g.len(), 9);
    }

    #[test]
    fn classification_examples() {
        let g = TruncatedGrid::new(1.0, 0.25, Shape::Halfdisk).unwrap();
        assert_eq!(g.classify(0.0, 0.0).unwrap(), NodeClass::Trace);
        assert_eq!(g.classify(1.0, 0.0).unwrap(), NodeClass::Dirichlet);
        assert_eq!(g.classify(-1.0, 0.0).unwrap(), NodeClass::Dirichlet);
        assert_eq!(g.classify(0.75, 0.75).unwrap(), NodeClass::Dirichlet);
        assert_eq!(g.classify(0.5, 0.5).unwrap(), NodeClass::Unknown);
        assert_eq!(g.classify(1.25, 0.0).unwrap(), NodeClass::Outside);
        assert!(matches!(
            g.classify(0.1, 0.0),
            Err(GridError::OffLattice { .. })
        ));
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(matches!(
            TruncatedGrid::new(1.0, 0.3, Shape::Halfdisk),
            Err(GridError::NonIntegralRatio { .. })
        ));
        assert!(matches!(
            TruncatedGrid::new(1.0, 1.0, Shape::Halfdisk),
            Err(GridError::TooCoarse { .. })
        ));
        assert!(TruncatedGrid::new(-1.0, 0.5, Shape::Halfdisk).is_err());
    }

    #[test]
    fn global_index_round_trips() {
        let g = TruncatedGrid::new(3.0, 0.5, Shape::Halfdisk).unwrap();
        for global in 0..g.len() {
            let (c, l) = g.locate(global).unwrap();
            assert_eq!(g.global_index(c, l), global);
        }
        assert!(g.locate(g.len()).is_none());
    }

    #[test]
    fn refinement_is_nested() {
        for shape in [Shape::Halfdisk, Shape::Rectangle] {
            let coarse = TruncatedGrid::new(3.0, 0.5, shape).unwrap();
            let fine = TruncatedGrid::new(3.0, 0.25, shape).unwrap();
            for (i, j, _, _) in coarse.box_nodes() {
                assert_eq!(
                    coarse.classify_lattice(i, j),
                    fine.classify_lattice(2 * i, 2 * j)
                );
            }
        }
    }

    #[test]
    fn unknown_sets_grow_with_radius() {
        for shape in [Shape::Halfdisk, Shape::Rectangle] {
            let small = TruncatedGrid::new(2.0, 0.25, shape).unwrap();
            let large = TruncatedGrid::new(3.5, 0.25, shape).unwrap();
            for &(i, j) in small.field_nodes() {
                assert!(large.field_local_at(i, j).is_some());
            }
            assert!(large.road_len() > small.road_len());
        }
    }

    #[test]
    fn every_road_node_has_a_column_above() {
        let g = TruncatedGrid::new(4.0, 0.5, Shape::Halfdisk).unwrap();
        for k in 0..g.road_len() {
            let l = g.trace_column(k).unwrap();
            assert_eq!(g.field_lattice(l), (g.road_lattice(k), 1));
        }
    }
}
