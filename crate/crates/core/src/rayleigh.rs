//! Discrete variational quotient for drift-free systems.

use thiserror::Error;

use crate::assembly::{assemble_symmetric, AssemblyError, ProblemParams, SymmetricPencil};
use crate::grid::{Component, Side, TruncatedGrid};

/// Road values and extended field values (trace row included) of a
/// candidate triple. Dirichlet nodes are not stored, so admissibility holds
/// by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTriple {
    pub u: Vec<f64>,
    pub v: [Vec<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RayleighError {
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("the triple vanishes identically")]
    ZeroDenominator,
    #[error("triple has {got} values where the grid needs {expected}")]
    Shape { expected: usize, got: usize },
    #[error("the reduced quotient needs identical parameters on both sides")]
    Asymmetric,
}

impl DiscreteTriple {
    pub fn zeros(grid: &TruncatedGrid) -> Self {
        let ne = grid.extended_field_len();
        Self {
            u: vec![0.0; grid.road_len()],
            v: [vec![0.0; ne], vec![0.0; ne]],
        }
    }

    /// Samples `road(x)` on the road and `field(side, x, y)` on the trace
    /// row and interior nodes.
    pub fn from_fn(
        grid: &TruncatedGrid,
        road: impl Fn(f64) -> f64,
        field: impl Fn(Side, f64, f64) -> f64,
    ) -> Self {
        let h = grid.spacing();
        let u = (0..grid.road_len()).map(|k| road(grid.road_x(k))).collect();
        let v = Side::BOTH.map(|s| {
            (0..grid.extended_field_len())
                .map(|e| {
                    let (i, j) = grid.extended_lattice(e);
                    field(s, i as f64 * h, j as f64 * h)
                })
                .collect()
        });
        Self { u, v }
    }

    /// Layout of [`SymmetricPencil`]: road, then side 1, then side 2.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = self.u.clone();
        out.extend_from_slice(&self.v[0]);
        out.extend_from_slice(&self.v[1]);
        out
    }

    pub fn from_vector(grid: &TruncatedGrid, x: &[f64]) -> Result<Self, RayleighError> {
        let nr = grid.road_len();
        let ne = grid.extended_field_len();
        if x.len() != nr + 2 * ne {
            return Err(RayleighError::Shape {
                expected: nr + 2 * ne,
                got: x.len(),
            });
        }
        Ok(Self {
            u: x[..nr].to_vec(),
            v: [x[nr..nr + ne].to_vec(), x[nr + ne..].to_vec()],
        })
    }

    /// Builds a triple from an eliminated-system vector, filling the trace
    /// row with the given values per side.
    pub fn from_eliminated(grid: &TruncatedGrid, x: &[f64], traces: [&[f64]; 2]) -> Self {
        let nr = grid.road_len();
        let mut t = Self::zeros(grid);
        t.u.copy_from_slice(&x[..nr]);
        for s in Side::BOTH {
            let v = &mut t.v[s.index()];
            v[..nr].copy_from_slice(traces[s.index()]);
            for l in 0..grid.field_len() {
                v[nr + l] = x[grid.global_index(Component::Field(s), l)];
            }
        }
        t
    }
}

/// The quotient `x.Kx / x.Bx` sharing its quadrature with
/// [`assemble_symmetric`].
#[derive(Debug, Clone)]
pub struct RayleighForm {
    pencil: SymmetricPencil,
}

impl RayleighForm {
    pub fn new(grid: &TruncatedGrid, params: &ProblemParams) -> Result<Self, RayleighError> {
        Ok(Self {
            pencil: assemble_symmetric(grid, params)?,
        })
    }

    pub fn pencil(&self) -> &SymmetricPencil {
        &self.pencil
    }

    pub fn quotient_vec(&self, x: &[f64]) -> Result<f64, RayleighError> {
        if x.len() != self.pencil.dim() {
            return Err(RayleighError::Shape {
                expected: self.pencil.dim(),
                got: x.len(),
            });
        }
        let den: f64 = x.iter().zip(&self.pencil.mass).map(|(v, m)| v * v * m).sum();
        if den == 0.0 {
            return Err(RayleighError::ZeroDenominator);
        }
        Ok(self.pencil.stiffness.quadratic_form(x) / den)
    }

    pub fn quotient(&self, t: &DiscreteTriple) -> Result<f64, RayleighError> {
        self.quotient_vec(&t.to_vector())
    }
}

pub fn quotient(
    grid: &TruncatedGrid,
    t: &DiscreteTriple,
    params: &ProblemParams,
) -> Result<f64, RayleighError> {
    RayleighForm::new(grid, params)?.quotient(t)
}

/// Road values and one extended field vector for side-symmetric problems.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfTriple {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl HalfTriple {
    pub fn doubled(&self) -> DiscreteTriple {
        DiscreteTriple {
            u: self.u.clone(),
            v: [self.v.clone(), self.v.clone()],
        }
    }
}

/// Reduced two-component quotient for side-symmetric parameters:
///
/// ```text
/// [ (mu/2) (D int|u'|^2 - int f u^2) + nu int (d|grad v|^2 - a v^2)
///   + int (mu u - nu v(., 0))^2 ]  /  [ (mu/2) int u^2 + nu int v^2 ]
/// ```
///
/// which is the full quotient of the doubled triple `(u, v, v)` multiplied
/// through by `mu/2`. Evaluated by direct summation, not through `K`.
pub fn quotient_symmetric_case(
    grid: &TruncatedGrid,
    t: &HalfTriple,
    params: &ProblemParams,
) -> Result<f64, RayleighError> {
    params.validate().map_err(AssemblyError::from)?;
    if !params.is_drift_free() {
        return Err(AssemblyError::DriftPresent.into());
    }
    if !params.is_side_symmetric() {
        return Err(RayleighError::Asymmetric);
    }
    let nr = grid.road_len();
    let ne = grid.extended_field_len();
    if t.u.len() != nr || t.v.len() != ne {
        return Err(RayleighError::Shape {
            expected: nr + ne,
            got: t.u.len() + t.v.len(),
        });
    }
    let h = grid.spacing();
    let n = grid.cells();
    let road = &params.road;
    let field = params.field(Side::One);
    let (mu, nu) = (road.to_field[0], road.to_road[0]);

    let u_at = |i: i32| grid.road_local_at(i).map_or(0.0, |k| t.u[k]);
    let v_at = |i: i32, j: i32| grid.extended_local_at(i, j).map_or(0.0, |e| t.v[e]);

    let mut road_energy = 0.0;
    for i in -n..n {
        road_energy += road.diffusion * (u_at(i + 1) - u_at(i)).powi(2) / h;
    }
    let mut road_mass = 0.0;
    for k in 0..nr {
        road_energy -= h * road.potential.eval(grid.road_x(k), 0.0).map_err(AssemblyError::from)? * t.u[k] * t.u[k];
        road_mass += h * t.u[k] * t.u[k];
    }

    let mut field_energy = 0.0;
    for j in 0..=n {
        let w = if j == 0 { 0.5 } else { 1.0 };
        for i in -n..n {
            field_energy += field.diffusion * w * (v_at(i + 1, j) - v_at(i, j)).powi(2);
        }
    }
    for j in 0..n {
        for i in -n..=n {
            field_energy += field.diffusion * (v_at(i, j + 1) - v_at(i, j)).powi(2);
        }
    }
    let mut field_mass = 0.0;
    for e in 0..ne {
        let (i, j) = grid.extended_lattice(e);
        let area = if j == 0 { 0.5 * h * h } else { h * h };
        let a = field
            .growth
            .eval(i as f64 * h, j as f64 * h)
            .map_err(AssemblyError::from)?;
        field_energy -= area * a * t.v[e] * t.v[e];
        field_mass += area * t.v[e] * t.v[e];
    }

    let mut exchange = 0.0;
    for k in 0..nr {
        exchange += h * (mu * t.u[k] - nu * t.v[k]).powi(2);
    }

    let den = 0.5 * mu * road_mass + nu * field_mass;
    if den == 0.0 {
        return Err(RayleighError::ZeroDenominator);
    }
    Ok((0.5 * mu * road_energy + nu * field_energy + exchange) / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffexpr::CoefficientField;
    use crate::eigsolve::{symmetric_principal_eig, SolverConfig};
    use crate::grid::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (TruncatedGrid, ProblemParams) {
        let grid = TruncatedGrid::new(2.0, 0.25, Shape::Halfdisk).unwrap();
        (grid, ProblemParams::uniform(0.4))
    }

    #[test]
    fn minimizer_attains_pencil_eigenvalue() {
        let (grid, params) = setup();
        let form = RayleighForm::new(&grid, &params).unwrap();
        let p = form.pencil();
        let eig = symmetric_principal_eig(&p.stiffness, &p.mass, &SolverConfig::default()).unwrap();
        let t = DiscreteTriple::from_vector(&grid, &eig.vector).unwrap();
        let q = form.quotient(&t).unwrap();
        assert!((q - eig.lambda).abs() <= 1e-12 * (1.0 + eig.lambda.abs()));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(form.quotient_vec(&x).unwrap() >= eig.lambda - 1e-10);
        }
    }

    #[test]
    fn balanced_exchange_contributes_nothing() {
        let (grid, mut params) = setup();
        params.road.to_field = [2.0, 0.5];
        params.road.to_road = [1.0, 4.0];
        let form = RayleighForm::new(&grid, &params).unwrap();
        let r = grid.radius();
        let bump = |x: f64| (1.0 - (x / r).powi(2)).max(0.0);
        let t = DiscreteTriple::from_fn(&grid, bump, |s, x, y| {
            let ratio = params.road.to_field[s.index()] / params.road.to_road[s.index()];
            if y == 0.0 {
                ratio * bump(x)
            } else {
                0.0
            }
        });
        let x = t.to_vector();
        // the exchange term alone: difference of the full form with and
        // without the coupling entries
        let p = form.pencil();
        let nr = grid.road_len();
        let mut exchange = 0.0;
        for s in Side::BOTH {
            let (mu, nu) = (params.road.to_field[s.index()], params.road.to_road[s.index()]);
            let base = p.fields[s.index()].start;
            for k in 0..nr {
                exchange += grid.spacing() / mu * (mu * x[k] - nu * x[base + k]).powi(2);
            }
        }
        assert!(exchange.abs() < 1e-14);
    }

    #[test]
    fn tent_function_is_above_minimum() {
        let grid = TruncatedGrid::new(3.0, 0.5, Shape::Rectangle).unwrap();
        let params = ProblemParams::uniform(0.0);
        let r = grid.radius();
        let tent = |x: f64| 1.0 - x.abs() / r;
        let t = DiscreteTriple::from_fn(&grid, tent, |_, x, y| tent(x) * (1.0 - y / r));
        let form = RayleighForm::new(&grid, &params).unwrap();
        let q = form.quotient(&t).unwrap();
        let p = form.pencil();
        let eig = symmetric_principal_eig(&p.stiffness, &p.mass, &SolverConfig::default()).unwrap();
        assert!(q > 0.0 && q >= eig.lambda);
    }

    #[test]
    fn reduced_form_equals_doubling() {
        let (grid, mut params) = setup();
        params.road.to_field = [1.7, 1.7];
        params.road.to_road = [0.6, 0.6];
        let a = CoefficientField::parse("0.8 * exp(-(x^2 + y^2))", 1.0).unwrap();
        params.fields[0].growth = a.clone();
        params.fields[1].growth = a;
        params.road.potential = CoefficientField::parse("0.3 * cos(x)", 0.3).unwrap();
        let form = RayleighForm::new(&grid, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let half = HalfTriple {
                u: (0..grid.road_len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
                v: (0..grid.extended_field_len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            };
            let reduced = quotient_symmetric_case(&grid, &half, &params).unwrap();
            let full = form.quotient(&half.doubled()).unwrap();
            assert!((reduced - full).abs() <= 1e-12 * (1.0 + full.abs()), "{reduced} vs {full}");
        }
        params.road.to_road[1] = 0.7;
        let half = HalfTriple {
            u: vec![1.0; grid.road_len()],
            v: vec![1.0; grid.extended_field_len()],
        };
        assert_eq!(
            quotient_symmetric_case(&grid, &half, &params),
            Err(RayleighError::Asymmetric)
        );
    }

    #[test]
    fn single_bump_with_zero_road() {
        let grid = TruncatedGrid::new(2.0, 0.5, Shape::Rectangle).unwrap();
        let mut params = ProblemParams::uniform(0.0);
        params.road.to_field = [2.0, 2.0];
        params.road.to_road = [3.0, 3.0];
        let (nu, d) = (3.0, 1.0);
        let h = grid.spacing();
        let mut half = HalfTriple {
            u: vec![0.0; grid.road_len()],
            v: vec![0.0; grid.extended_field_len()],
        };
        let e = grid.extended_local_at(0, 1).unwrap();
        half.v[e] = 1.0;
        // four unit edges, no trace mass, zero road
        let expect = (nu * d * 4.0) / (nu * h * h);
        let q = quotient_symmetric_case(&grid, &half, &params).unwrap();
        assert!((q - expect).abs() < 1e-12);
        // a trace bump sees the exchange term
        half.v[e] = 0.0;
        let t0 = grid.extended_local_at(0, 0).unwrap();
        half.v[t0] = 1.0;
        let energy = nu * d * (0.5 + 0.5 + 1.0);
        let exchange = h * nu * nu;
        let expect = (energy + exchange) / (nu * 0.5 * h * h);
        let q = quotient_symmetric_case(&grid, &half, &params).unwrap();
        assert!((q - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn raising_growth_lowers_quotient_by_weighted_mass() {
        let (grid, params) = setup();
        let delta = 0.3;
        let mut raised = params.clone();
        raised.fields[0].growth = params.fields[0].growth.shifted(delta);
        let base = RayleighForm::new(&grid, &params).unwrap();
        let bumped = RayleighForm::new(&grid, &raised).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..base.pencil().dim()).map(|_| rng.random_range(0.1..1.0)).collect();
        let p = base.pencil();
        let den: f64 = x.iter().zip(&p.mass).map(|(v, m)| v * v * m).sum();
        let side_mass: f64 = p.fields[0].clone().map(|g| p.mass[g] * x[g] * x[g]).sum();
        let drop = base.quotient_vec(&x).unwrap() - bumped.quotient_vec(&x).unwrap();
        assert!((drop - delta * side_mass / den).abs() < 1e-12);
        let scaled: Vec<f64> = x.iter().map(|v| -3.5 * v).collect();
        let q = base.quotient_vec(&x).unwrap();
        assert!((base.quotient_vec(&scaled).unwrap() - q).abs() <= 1e-12 * q.abs());
        assert_eq!(
            base.quotient_vec(&vec![0.0; x.len()]),
            Err(RayleighError::ZeroDenominator)
        );
    }
}
