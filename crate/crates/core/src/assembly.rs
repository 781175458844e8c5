//! Finite-difference assembly of the truncated road–field eigenproblem.
//!
//! The main product is the matrix `A` of `A x = lambda x` where the unknowns
//! are the road values and the interior field values on both sides. The
//! field values on `y = 0` are not unknowns: the exchange condition
//! `d_i dv/dy + mu_i u - nu_i v = 0`, discretized with a one-sided first
//! difference, expresses each of them as a positive combination of the road
//! value below and the field value above (see [`eliminate_trace`]).
//!
//! For drift-free problems [`assemble_symmetric`] builds the symmetric pencil
//! `(K, B)` of the variational quotient, with the trace values kept as free
//! unknowns.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeffexpr::{CoefficientField, FieldError, Var};
use crate::grid::{Component, Side, TruncatedGrid};
pub use crate::sparse::SparseMatrix;
use crate::sparse::SparseBuilder;

/// Road line coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadParams {
    /// `D`
    pub diffusion: f64,
    /// `c`
    pub drift: f64,
    /// `mu_i`, rate of transfer from the road into field `i`.
    pub to_field: [f64; 2],
    /// `nu_i`, rate of transfer from field `i` onto the road.
    pub to_road: [f64; 2],
    /// Zeroth-order road potential `f(x)`; zero unless a Harnack study sets it.
    pub potential: CoefficientField,
}

/// Coefficients of one field half-plane.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    /// `d_i`
    pub diffusion: f64,
    /// `c_i`
    pub drift: f64,
    /// `a_i(x, y)`
    pub growth: CoefficientField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemParams {
    pub road: RoadParams,
    pub fields: [FieldParams; 2],
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{key} must be positive, got {value}")]
    NotPositive { key: &'static str, value: f64 },
    #[error("{key} must be finite, got {value}")]
    NotFinite { key: &'static str, value: f64 },
    #[error("road.f_expr may only depend on x")]
    PotentialDependsOnY,
}

impl ProblemParams {
    /// All rates and diffusivities equal to one, no drift, `a_1 = a_2 = growth`.
    pub fn uniform(growth: f64) -> Self {
        Self::with_growth(CoefficientField::constant(growth))
    }

    pub fn with_growth(growth: CoefficientField) -> Self {
        let field = FieldParams {
            diffusion: 1.0,
            drift: 0.0,
            growth,
        };
        Self {
            road: RoadParams {
                diffusion: 1.0,
                drift: 0.0,
                to_field: [1.0, 1.0],
                to_road: [1.0, 1.0],
                potential: CoefficientField::zero(),
            },
            fields: [field.clone(), field],
        }
    }

    pub fn field(&self, side: Side) -> &FieldParams {
        &self.fields[side.index()]
    }

    pub fn field_mut(&mut self, side: Side) -> &mut FieldParams {
        &mut self.fields[side.index()]
    }

    pub fn is_drift_free(&self) -> bool {
        self.road.drift == 0.0 && self.fields.iter().all(|f| f.drift == 0.0)
    }

    /// Both sides share diffusivity, exchange rates and growth expression.
    pub fn is_side_symmetric(&self) -> bool {
        let [f1, f2] = &self.fields;
        f1.diffusion == f2.diffusion
            && f1.drift == f2.drift
            && f1.growth.expr() == f2.growth.expr()
            && self.road.to_field[0] == self.road.to_field[1]
            && self.road.to_road[0] == self.road.to_road[1]
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        const POSITIVE: [&str; 7] = [
            "road.D", "road.mu1", "road.mu2", "road.nu1", "road.nu2", "field1.d", "field2.d",
        ];
        let positive = [
            self.road.diffusion,
            self.road.to_field[0],
            self.road.to_field[1],
            self.road.to_road[0],
            self.road.to_road[1],
            self.fields[0].diffusion,
            self.fields[1].diffusion,
        ];
        for (key, value) in POSITIVE.into_iter().zip(positive) {
            if !value.is_finite() {
                return Err(ParamError::NotFinite { key, value });
            }
            if value <= 0.0 {
                return Err(ParamError::NotPositive { key, value });
            }
        }
        for (key, value) in [
            ("road.c", self.road.drift),
            ("field1.c", self.fields[0].drift),
            ("field2.c", self.fields[1].drift),
        ] {
            if !value.is_finite() {
                return Err(ParamError::NotFinite { key, value });
            }
        }
        if self.road.potential.expr().uses_var(Var::Y) {
            return Err(ParamError::PotentialDependsOnY);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftScheme {
    /// Central differences when the grid Péclet condition holds, upwind otherwise.
    #[default]
    Auto,
    Central,
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AssemblyOptions {
    pub scheme: DriftScheme,
    pub allow_peclet_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("coefficient evaluation failed: {0}")]
    Field(#[from] FieldError),
    #[error(
        "central drift violates the grid Péclet condition (road {road:.3}, fields {field1:.3}, {field2:.3}); use upwind or allow the violation"
    )]
    Peclet { road: f64, field1: f64, field2: f64 },
    #[error("the variational form requires c = c1 = c2 = 0")]
    DriftPresent,
}

/// Grid Péclet numbers `|c| h / (2 D)` and `|c_i| h / (2 d_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peclet {
    pub road: f64,
    pub fields: [f64; 2],
}

impl Peclet {
    pub fn new(params: &ProblemParams, spacing: f64) -> Self {
        let p = |c: f64, d: f64| c.abs() * spacing / (2.0 * d);
        Self {
            road: p(params.road.drift, params.road.diffusion),
            fields: [
                p(params.fields[0].drift, params.fields[0].diffusion),
                p(params.fields[1].drift, params.fields[1].diffusion),
            ],
        }
    }

    pub fn ok(&self) -> bool {
        self.road <= 1.0 && self.fields.iter().all(|&p| p <= 1.0)
    }
}

/// Assembled eliminated operator `A` and its block layout.
#[derive(Debug, Clone)]
pub struct SystemMatrix {
    pub matrix: SparseMatrix,
    pub road: Range<usize>,
    pub fields: [Range<usize>; 2],
    /// Drift scheme actually used (never `Auto`).
    pub scheme: DriftScheme,
    pub peclet_ok: bool,
    pub zmatrix_ok: bool,
}

impl SystemMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// Coefficients of the eliminated trace value
/// `T = road_weight * u_k + field_weight * v(x_k, h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceElimination {
    pub road_weight: f64,
    pub field_weight: f64,
}

impl TraceElimination {
    pub fn apply(&self, road_value: f64, first_field_value: f64) -> f64 {
        self.road_weight * road_value + self.field_weight * first_field_value
    }
}

/// Solves the discrete exchange condition
/// `d_i (v(x_k, h) - T) / h + mu_i u_k - nu_i T = 0` for the trace `T`.
/// Both weights are strictly positive.
pub fn eliminate_trace(params: &ProblemParams, side: Side, spacing: f64) -> TraceElimination {
    let mu = params.road.to_field[side.index()];
    let nu = params.road.to_road[side.index()];
    let dh = params.field(side).diffusion / spacing;
    let denom = nu + dh;
    TraceElimination {
        road_weight: mu / denom,
        field_weight: dh / denom,
    }
}

/// Additive stencil `(left, centre, right)` for `-c w'`.
fn drift_stencil(drift: f64, spacing: f64, scheme: DriftScheme) -> (f64, f64, f64) {
    match scheme {
        DriftScheme::Upwind => {
            if drift > 0.0 {
                (0.0, drift / spacing, -drift / spacing)
            } else if drift < 0.0 {
                (drift / spacing, -drift / spacing, 0.0)
            } else {
                (0.0, 0.0, 0.0)
            }
        }
        _ => {
            let half = drift / (2.0 * spacing);
            (half, 0.0, -half)
        }
    }
}

fn resolve_scheme(peclet: &Peclet, opts: &AssemblyOptions) -> Result<DriftScheme, AssemblyError> {
    match opts.scheme {
        DriftScheme::Auto if peclet.ok() => Ok(DriftScheme::Central),
        DriftScheme::Auto => Ok(DriftScheme::Upwind),
        DriftScheme::Central if !peclet.ok() && !opts.allow_peclet_violation => {
            Err(AssemblyError::Peclet {
                road: peclet.road,
                field1: peclet.fields[0],
                field2: peclet.fields[1],
            })
        }
        s => Ok(s),
    }
}

/// Assembles the eliminated operator `A`.
///
/// Road row `k`:
/// `-D (u_{k-1} - 2u_k + u_{k+1}) / h^2 - c u' + (mu_1 + mu_2 - f) u_k - sum_i nu_i T_i`.
/// Field row `(k, j)`:
/// `-d_i Lap_h v - c_i dv/dx - a_i v`, with the `j = 0` neighbour replaced
/// by `T_i` and Dirichlet neighbours contributing zero.
pub fn assemble(
    grid: &TruncatedGrid,
    params: &ProblemParams,
    opts: &AssemblyOptions,
) -> Result<SystemMatrix, AssemblyError> {
    params.validate()?;
    let h = grid.spacing();
    let h2 = h * h;
    let peclet = Peclet::new(params, h);
    let scheme = resolve_scheme(&peclet, opts)?;
    let nr = grid.road_len();
    let mut b = SparseBuilder::new(grid.len());
    let road = &params.road;
    let elim = Side::BOTH.map(|s| eliminate_trace(params, s, h));

    let (dl, dc, dr) = drift_stencil(road.drift, h, scheme);
    for k in 0..nr {
        let f = road.potential.eval(grid.road_x(k), 0.0)?;
        let mut diag = 2.0 * road.diffusion / h2 + road.to_field[0] + road.to_field[1] - f + dc;
        for s in Side::BOTH {
            diag -= road.to_road[s.index()] * elim[s.index()].road_weight;
            if let Some(l) = grid.trace_column(k) {
                b.add(
                    k,
                    grid.global_index(Component::Field(s), l),
                    -road.to_road[s.index()] * elim[s.index()].field_weight,
                );
            }
        }
        if k > 0 {
            b.add(k, k - 1, -road.diffusion / h2 + dl);
        }
        if k + 1 < nr {
            b.add(k, k + 1, -road.diffusion / h2 + dr);
        }
        b.add(k, k, diag);
    }

    for s in Side::BOTH {
        let fp = params.field(s);
        let e = elim[s.index()];
        let d = fp.diffusion / h2;
        let (dl, dc, dr) = drift_stencil(fp.drift, h, scheme);
        for (l, &(i, j)) in grid.field_nodes().iter().enumerate() {
            let (x, y) = grid.field_xy(l);
            let row = grid.global_index(Component::Field(s), l);
            let at = |li: usize| grid.global_index(Component::Field(s), li);
            let mut diag = 4.0 * d - fp.growth.eval(x, y)? + dc;
            if let Some(w) = grid.field_local_at(i - 1, j) {
                b.add(row, at(w), -d + dl);
            }
            if let Some(east) = grid.field_local_at(i + 1, j) {
                b.add(row, at(east), -d + dr);
            }
            if let Some(north) = grid.field_local_at(i, j + 1) {
                b.add(row, at(north), -d);
            }
            if j >= 2 {
                if let Some(south) = grid.field_local_at(i, j - 1) {
                    b.add(row, at(south), -d);
                }
            } else {
                diag -= d * e.field_weight;
                let k = grid
                    .road_local_at(i)
                    .expect("first field row lies above the open road");
                b.add(row, k, -d * e.road_weight);
            }
            b.add(row, row, diag);
        }
    }

    let matrix = b.build();
    let zmatrix_ok = matrix.is_z_matrix();
    Ok(SystemMatrix {
        road: grid.road_range(),
        fields: Side::BOTH.map(|s| grid.field_range(s)),
        matrix,
        scheme,
        peclet_ok: peclet.ok(),
        zmatrix_ok,
    })
}

/// Single-field operator `-d Lap - c d/dx - a` on the interior field nodes
/// with homogeneous Dirichlet data on the whole boundary, `y = 0` included.
pub fn assemble_field_dirichlet(
    grid: &TruncatedGrid,
    field: &FieldParams,
    opts: &AssemblyOptions,
) -> Result<SparseMatrix, AssemblyError> {
    if !(field.diffusion > 0.0 && field.diffusion.is_finite()) {
        return Err(ParamError::NotPositive {
            key: "field.d",
            value: field.diffusion,
        }
        .into());
    }
    let h = grid.spacing();
    let pe = field.drift.abs() * h / (2.0 * field.diffusion);
    let peclet = Peclet {
        road: 0.0,
        fields: [pe, pe],
    };
    let scheme = resolve_scheme(&peclet, opts)?;
    let d = field.diffusion / (h * h);
    let (dl, dc, dr) = drift_stencil(field.drift, h, scheme);
    let mut b = SparseBuilder::new(grid.field_len());
    for (l, &(i, j)) in grid.field_nodes().iter().enumerate() {
        let (x, y) = grid.field_xy(l);
        b.add(l, l, 4.0 * d - field.growth.eval(x, y)? + dc);
        if let Some(w) = grid.field_local_at(i - 1, j) {
            b.add(l, w, -d + dl);
        }
        if let Some(east) = grid.field_local_at(i + 1, j) {
            b.add(l, east, -d + dr);
        }
        for jj in [j - 1, j + 1] {
            if let Some(v) = grid.field_local_at(i, jj) {
                b.add(l, v, -d);
            }
        }
    }
    Ok(b.build())
}

/// Symmetric stiffness matrix and diagonal mass of the variational quotient.
///
/// Unknown layout: road nodes, then for each side the extended field vector
/// (trace row at `y = 0`, then interior nodes), see
/// [`TruncatedGrid::extended_local_at`].
#[derive(Debug, Clone)]
pub struct SymmetricPencil {
    pub stiffness: SparseMatrix,
    pub mass: Vec<f64>,
    pub road: Range<usize>,
    pub fields: [Range<usize>; 2],
}

impl SymmetricPencil {
    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    pub fn mass_matrix(&self) -> SparseMatrix {
        SparseMatrix::from_diagonal(&self.mass)
    }
}

/// Assembles `(K, B)` with `x.Kx / x.Bx` the discrete quotient
///
/// ```text
/// [ D int|u'|^2 - int f u^2
///   + sum_i (nu_i/mu_i) int (d_i |grad v_i|^2 - a_i v_i^2)
///   + sum_i (1/mu_i) int (mu_i u - nu_i v_i(., 0))^2 ]
/// / [ int u^2 + sum_i (nu_i/mu_i) int v_i^2 ]
/// ```
///
/// Quadrature: first differences on lattice edges (weight 1/2 on horizontal
/// edges of the trace row), node weights `h` on the road and `h^2` in the
/// field (halved on the trace row), exchange term summed over road nodes
/// with weight `h`.
pub fn assemble_symmetric(
    grid: &TruncatedGrid,
    params: &ProblemParams,
) -> Result<SymmetricPencil, AssemblyError> {
    params.validate()?;
    if !params.is_drift_free() {
        return Err(AssemblyError::DriftPresent);
    }
    let h = grid.spacing();
    let h2 = h * h;
    let n = grid.cells();
    let nr = grid.road_len();
    let ne = grid.extended_field_len();
    let dim = nr + 2 * ne;
    let mut diag = vec![0.0; dim];
    let mut off: Vec<(usize, usize, f64)> = Vec::new();
    let mut mass = vec![0.0; dim];
    let road = &params.road;

    let mut edge = |p: Option<usize>, q: Option<usize>, w: f64| match (p, q) {
        (Some(p), Some(q)) => {
            diag[p] += w;
            diag[q] += w;
            off.push((p, q, -w));
        }
        (Some(p), None) | (None, Some(p)) => diag[p] += w,
        (None, None) => {}
    };

    for i in -n..n {
        edge(grid.road_local_at(i), grid.road_local_at(i + 1), road.diffusion / h);
    }
    for s in Side::BOTH {
        let fp = params.field(s);
        let weight = road.to_road[s.index()] / road.to_field[s.index()];
        let base = nr + s.index() * ne;
        let ext = |i: i32, j: i32| grid.extended_local_at(i, j).map(|e| base + e);
        for j in 0..=n {
            let w = if j == 0 { 0.5 } else { 1.0 };
            for i in -n..n {
                edge(ext(i, j), ext(i + 1, j), weight * fp.diffusion * w);
            }
        }
        for j in 0..n {
            for i in -n..=n {
                edge(ext(i, j), ext(i, j + 1), weight * fp.diffusion);
            }
        }
    }

    for k in 0..nr {
        let f = road.potential.eval(grid.road_x(k), 0.0)?;
        diag[k] -= h * f;
        mass[k] = h;
    }
    for s in Side::BOTH {
        let fp = params.field(s);
        let mu = road.to_field[s.index()];
        let nu = road.to_road[s.index()];
        let weight = nu / mu;
        let base = nr + s.index() * ne;
        for e in 0..ne {
            let (i, j) = grid.extended_lattice(e);
            let (x, y) = (i as f64 * h, j as f64 * h);
            let area = if j == 0 { 0.5 * h2 } else { h2 };
            diag[base + e] -= weight * fp.growth.eval(x, y)? * area;
            mass[base + e] = weight * area;
        }
        // (h / mu) (mu u - nu w)^2
        for k in 0..nr {
            let w = base + k;
            diag[k] += h * mu;
            diag[w] += h * nu * nu / mu;
            off.push((k, w, -h * nu));
        }
    }

    let mut b = SparseBuilder::new(dim);
    for (k, &d) in diag.iter().enumerate() {
        b.add(k, k, d);
    }
    for (p, q, v) in off {
        b.add(p, q, v);
        b.add(q, p, v);
    }
    Ok(SymmetricPencil {
        stiffness: b.build(),
        mass,
        road: 0..nr,
        fields: [nr..nr + ne, nr + ne..nr + 2 * ne],
    })
}

/// Eliminated form with the trace values restored as explicit unknowns.
#[derive(Debug, Clone)]
pub struct TraceSystem {
    pub matrix: SparseMatrix,
    /// Diagonal mass: one on road and interior field rows, zero on the
    /// exchange-condition rows.
    pub mass: Vec<f64>,
}

/// Same discretization as [`assemble`] but keeping `v_i(x_k, 0)` as unknowns
/// (layout of [`SymmetricPencil`]). The trace rows carry the discrete
/// exchange condition and zero mass, so the generalized problem
/// `M x = lambda W x` has the same finite spectrum as the eliminated `A`.
pub fn assemble_with_traces(
    grid: &TruncatedGrid,
    params: &ProblemParams,
    opts: &AssemblyOptions,
) -> Result<TraceSystem, AssemblyError> {
    params.validate()?;
    let h = grid.spacing();
    let h2 = h * h;
    let peclet = Peclet::new(params, h);
    let scheme = resolve_scheme(&peclet, opts)?;
    let nr = grid.road_len();
    let ne = grid.extended_field_len();
    let dim = nr + 2 * ne;
    let mut b = SparseBuilder::new(dim);
    let mut mass = vec![1.0; dim];
    let road = &params.road;

    let (dl, dc, dr) = drift_stencil(road.drift, h, scheme);
    for k in 0..nr {
        let f = road.potential.eval(grid.road_x(k), 0.0)?;
        b.add(
            k,
            k,
            2.0 * road.diffusion / h2 + road.to_field[0] + road.to_field[1] - f + dc,
        );
        if k > 0 {
            b.add(k, k - 1, -road.diffusion / h2 + dl);
        }
        if k + 1 < nr {
            b.add(k, k + 1, -road.diffusion / h2 + dr);
        }
        for s in Side::BOTH {
            b.add(k, nr + s.index() * ne + k, -road.to_road[s.index()]);
        }
    }
    for s in Side::BOTH {
        let fp = params.field(s);
        let base = nr + s.index() * ne;
        let mu = road.to_field[s.index()];
        let nu = road.to_road[s.index()];
        let d = fp.diffusion / h2;
        let (fl, fc, fr) = drift_stencil(fp.drift, h, scheme);
        let ext = |i: i32, j: i32| grid.extended_local_at(i, j).map(|e| base + e);
        for k in 0..nr {
            // -d (v(x_k, h) - w) / h - mu u + nu w = 0
            let row = base + k;
            let i = grid.road_lattice(k);
            mass[row] = 0.0;
            b.add(row, row, fp.diffusion / h + nu);
            b.add(row, k, -mu);
            if let Some(up) = ext(i, 1) {
                b.add(row, up, -fp.diffusion / h);
            }
        }
        for (l, &(i, j)) in grid.field_nodes().iter().enumerate() {
            let (x, y) = grid.field_xy(l);
            let row = base + nr + l;
            b.add(row, row, 4.0 * d - fp.growth.eval(x, y)? + fc);
            for (nb, c) in [
                (ext(i - 1, j), -d + fl),
                (ext(i + 1, j), -d + fr),
                (ext(i, j + 1), -d),
                (ext(i, j - 1), -d),
            ] {
                if let Some(col) = nb {
                    b.add(row, col, c);
                }
            }
        }
    }
    Ok(TraceSystem {
        matrix: b.build(),
        mass,
    })
}
