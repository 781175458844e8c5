//! Studies built on the solver: analytic bounds, Dirichlet comparison,
//! convergence in the truncation radius, parameter sweeps, Harnack ratios
//! and exponential decay envelopes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{
    assemble, assemble_field_dirichlet, AssemblyError, AssemblyOptions, FieldParams,
    ProblemParams,
};
use crate::coeffexpr::{CoefficientField, FieldError, Region};
use crate::eigsolve::{principal_eig, principal_eig_matrix, EigError, EigenResult, SolverConfig};
use crate::grid::{Component, GridError, Shape, Side, TruncatedGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Eig(#[from] EigError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid study input: {0}")]
    Input(String),
    #[error("condition strict unverified: refusing to build a decay envelope")]
    ConditionUnverified,
}

/// Discretization and solver settings shared by every solve of a study.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Numerics {
    pub assembly: AssemblyOptions,
    pub solver: SolverConfig,
}

/// Assembles and solves one system.
pub fn solve(
    grid: &TruncatedGrid,
    params: &ProblemParams,
    num: &Numerics,
) -> Result<EigenResult, AnalysisError> {
    let sys = assemble(grid, params, &num.assembly)?;
    Ok(principal_eig(&sys, &num.solver)?)
}

/// Principal eigenvalue of `-d Lap - c d/dx - a` on the field nodes with
/// Dirichlet data on the whole boundary, `y = 0` included.
pub fn dirichlet_eig(
    field: &FieldParams,
    grid: &TruncatedGrid,
    num: &Numerics,
) -> Result<EigenResult, AnalysisError> {
    let m = assemble_field_dirichlet(grid, field, &num.assembly)?;
    Ok(principal_eig_matrix(&m, &num.solver)?)
}

/// Largest grid sample of a coefficient over the bounding box.
fn grid_sup(field: &CoefficientField, grid: &TruncatedGrid) -> Result<f64, FieldError> {
    field.sup_on_region(grid, Region::Outer, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFlags {
    pub lower: bool,
    pub upper_road: bool,
    pub upper_dirichlet: [bool; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    /// `min{0, -sup a_1, -sup a_2}`
    pub lower: f64,
    /// `c^2 / (4D) + mu_1 + mu_2`
    pub upper_road: f64,
    /// Finite-R Dirichlet eigenvalue of each field operator.
    pub upper_dirichlet: [f64; 2],
    pub lambda: f64,
    pub satisfied: BoundFlags,
    /// `lambda - upper`; only the sign of the limit is meaningful.
    pub upper_road_margin: f64,
    pub upper_dirichlet_margin: [f64; 2],
}

/// Tolerance used when flagging the finite-R bounds.
pub const BOUND_TOLERANCE: f64 = 1e-6;

pub fn bounds_check(
    params: &ProblemParams,
    grid: &TruncatedGrid,
    num: &Numerics,
) -> Result<BoundsReport, AnalysisError> {
    let sups = [
        grid_sup(&params.fields[0].growth, grid)?,
        grid_sup(&params.fields[1].growth, grid)?,
    ];
    let lower = 0.0f64.min(-sups[0]).min(-sups[1]);
    let road = &params.road;
    let upper_road =
        road.drift * road.drift / (4.0 * road.diffusion) + road.to_field[0] + road.to_field[1];
    let lambda = solve(grid, params, num)?.lambda;
    let mut upper_dirichlet = [0.0; 2];
    for s in Side::BOTH {
        upper_dirichlet[s.index()] = dirichlet_eig(params.field(s), grid, num)?.lambda;
    }
    let tol = BOUND_TOLERANCE * (1.0 + lambda.abs());
    Ok(BoundsReport {
        lower,
        upper_road,
        upper_dirichlet,
        lambda,
        satisfied: BoundFlags {
            lower: lambda >= lower - tol,
            upper_road: lambda <= upper_road + tol,
            upper_dirichlet: upper_dirichlet.map(|u| lambda <= u + tol),
        },
        upper_road_margin: lambda - upper_road,
        upper_dirichlet_margin: upper_dirichlet.map(|u| lambda - u),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub radii: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    /// Largest increase `lambda(R_{k+1}) - lambda(R_k)`, or 0.
    pub monotone_violation: f64,
    /// `10 h^2 max(1, max |lambda|)`
    pub monotone_tolerance: f64,
    pub monotone_ok: bool,
    pub extrapolated_limit: Option<f64>,
    pub fit_exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("convergence study stopped at R = {radius}: {source}")]
pub struct ConvergenceFailure {
    pub partial: ConvergenceReport,
    pub radius: f64,
    #[source]
    pub source: AnalysisError,
}

pub fn converge_in_r(
    params: &ProblemParams,
    radii: &[f64],
    spacing: f64,
    shape: Shape,
    num: &Numerics,
) -> Result<ConvergenceReport, Box<ConvergenceFailure>> {
    let fail = |partial, radius, source| {
        Box::new(ConvergenceFailure {
            partial,
            radius,
            source,
        })
    };
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(fail(
            summarize(&[], spacing),
            radii.first().copied().unwrap_or(0.0),
            AnalysisError::Input("radii must be non-empty and strictly increasing".into()),
        ));
    }
    let results: Vec<Result<EigenResult, AnalysisError>> = radii
        .par_iter()
        .map(|&r| {
            let grid = TruncatedGrid::new(r, spacing, shape)?;
            solve(&grid, params, num)
        })
        .collect();
    let mut done = Vec::new();
    for (r, res) in radii.iter().zip(results) {
        match res {
            Ok(e) => done.push((*r, e)),
            Err(err) => return Err(fail(summarize(&done, spacing), *r, err)),
        }
    }
    Ok(summarize(&done, spacing))
}

fn summarize(done: &[(f64, EigenResult)], spacing: f64) -> ConvergenceReport {
    let radii: Vec<f64> = done.iter().map(|d| d.0).collect();
    let lambdas: Vec<f64> = done.iter().map(|d| d.1.lambda).collect();
    let monotone_violation = lambdas
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0f64, f64::max);
    let scale = lambdas.iter().fold(1.0f64, |m, l| m.max(l.abs()));
    let monotone_tolerance = 10.0 * spacing * spacing * scale;
    let fit = power_law_fit(&radii, &lambdas);
    ConvergenceReport {
        residuals: done.iter().map(|d| d.1.residual).collect(),
        iterations: done.iter().map(|d| d.1.iterations).collect(),
        monotone_ok: monotone_violation <= monotone_tolerance,
        monotone_violation,
        monotone_tolerance,
        extrapolated_limit: fit.map(|f| f.0),
        fit_exponent: fit.map(|f| f.1),
        radii,
        lambdas,
    }
}

/// Least-squares fit `lambda ~ L + C R^-p` on the trailing
/// `max(3, ceil(n/2))` points; `p` by golden-section search on `[0.1, 8]`.
/// Returns `(L, p)`.
pub fn power_law_fit(radii: &[f64], lambdas: &[f64]) -> Option<(f64, f64)> {
    let n = radii.len();
    if n < 3 {
        return None;
    }
    let take = 3.max(n.div_ceil(2));
    let rs = &radii[n - take..];
    let ls = &lambdas[n - take..];
    let linear = |p: f64| -> (f64, f64, f64) {
        let xs: Vec<f64> = rs.iter().map(|r| r.powf(-p)).collect();
        let m = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), ls.iter().sum::<f64>());
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(ls).map(|(x, y)| x * y).sum();
        let det = m * sxx - sx * sx;
        if det.abs() < 1e-300 {
            return (sy / m, 0.0, f64::INFINITY);
        }
        let c = (m * sxy - sx * sy) / det;
        let l = (sy - c * sx) / m;
        let sse = xs.iter().zip(ls).map(|(x, y)| (l + c * x - y).powi(2)).sum();
        (l, c, sse)
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.1f64, 8.0f64);
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if linear(c).2 < linear(d).2 {
            b = d;
        } else {
            a = c;
        }
    }
    let p = 0.5 * (a + b);
    let (l, _, sse) = linear(p);
    (l.is_finite() && sse.is_finite()).then_some((l, p))
}

/// Scalar parameter a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamPath {
    #[serde(rename = "D")]
    D,
    #[serde(rename = "c")]
    C,
    #[serde(rename = "d1")]
    D1,
    #[serde(rename = "d2")]
    D2,
    #[serde(rename = "c1")]
    C1,
    #[serde(rename = "c2")]
    C2,
    #[serde(rename = "mu1")]
    Mu1,
    #[serde(rename = "mu2")]
    Mu2,
    #[serde(rename = "nu1")]
    Nu1,
    #[serde(rename = "nu2")]
    Nu2,
    #[serde(rename = "a_shift1")]
    AShift1,
    #[serde(rename = "a_shift2")]
    AShift2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    NonDecreasing,
    NonIncreasing,
}

impl ParamPath {
    pub const ALL: [ParamPath; 12] = [
        ParamPath::D,
        ParamPath::C,
        ParamPath::D1,
        ParamPath::D2,
        ParamPath::C1,
        ParamPath::C2,
        ParamPath::Mu1,
        ParamPath::Mu2,
        ParamPath::Nu1,
        ParamPath::Nu2,
        ParamPath::AShift1,
        ParamPath::AShift2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamPath::D => "D",
            ParamPath::C => "c",
            ParamPath::D1 => "d1",
            ParamPath::D2 => "d2",
            ParamPath::C1 => "c1",
            ParamPath::C2 => "c2",
            ParamPath::Mu1 => "mu1",
            ParamPath::Mu2 => "mu2",
            ParamPath::Nu1 => "nu1",
            ParamPath::Nu2 => "nu2",
            ParamPath::AShift1 => "a_shift1",
            ParamPath::AShift2 => "a_shift2",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Current value of the parameter; shifts are measured from zero.
    pub fn get(self, params: &ProblemParams) -> f64 {
        match self {
            ParamPath::D => params.road.diffusion,
            ParamPath::C => params.road.drift,
            ParamPath::D1 => params.fields[0].diffusion,
            ParamPath::D2 => params.fields[1].diffusion,
            ParamPath::C1 => params.fields[0].drift,
            ParamPath::C2 => params.fields[1].drift,
            ParamPath::Mu1 => params.road.to_field[0],
            ParamPath::Mu2 => params.road.to_field[1],
            ParamPath::Nu1 => params.road.to_road[0],
            ParamPath::Nu2 => params.road.to_road[1],
            ParamPath::AShift1 | ParamPath::AShift2 => 0.0,
        }
    }

    pub fn apply(self, params: &ProblemParams, value: f64) -> ProblemParams {
        let mut p = params.clone();
        match self {
            ParamPath::D => p.road.diffusion = value,
            ParamPath::C => p.road.drift = value,
            ParamPath::D1 => p.fields[0].diffusion = value,
            ParamPath::D2 => p.fields[1].diffusion = value,
            ParamPath::C1 => p.fields[0].drift = value,
            ParamPath::C2 => p.fields[1].drift = value,
            ParamPath::Mu1 => p.road.to_field[0] = value,
            ParamPath::Mu2 => p.road.to_field[1] = value,
            ParamPath::Nu1 => p.road.to_road[0] = value,
            ParamPath::Nu2 => p.road.to_road[1] = value,
            ParamPath::AShift1 => p.fields[0].growth = params.fields[0].growth.shifted(value),
            ParamPath::AShift2 => p.fields[1].growth = params.fields[1].growth.shifted(value),
        }
        p
    }

    /// Direction in which the eigenvalue is known to move, for drift-free
    /// problems only.
    pub fn expected_direction(self, params: &ProblemParams) -> Option<Direction> {
        if !params.is_drift_free() {
            return None;
        }
        match self {
            ParamPath::D | ParamPath::D1 | ParamPath::D2 => Some(Direction::NonDecreasing),
            ParamPath::AShift1 | ParamPath::AShift2 => Some(Direction::NonIncreasing),
            _ => None,
        }
    }
}

/// Slack allowed in monotonicity assertions.
pub const MONOTONE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub path: ParamPath,
    pub values: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    /// `|Delta lambda / Delta p|` between consecutive values.
    pub difference_quotients: Vec<f64>,
    pub max_difference_quotient: f64,
    pub expected_direction: Option<Direction>,
    pub monotone_ok: Option<bool>,
}

pub fn sweep(
    params: &ProblemParams,
    path: ParamPath,
    values: &[f64],
    grid: &TruncatedGrid,
    num: &Numerics,
) -> Result<SweepReport, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Input("sweep needs at least one value".into()));
    }
    let results: Vec<EigenResult> = values
        .par_iter()
        .map(|&v| solve(grid, &path.apply(params, v), num))
        .collect::<Result<_, _>>()?;
    let lambdas: Vec<f64> = results.iter().map(|r| r.lambda).collect();
    let difference_quotients: Vec<f64> = values
        .windows(2)
        .zip(lambdas.windows(2))
        .map(|(p, l)| ((l[1] - l[0]) / (p[1] - p[0])).abs())
        .collect();
    let max_difference_quotient = difference_quotients.iter().fold(0.0f64, |m, q| m.max(*q));
    let expected_direction = path.expected_direction(params);
    let monotone_ok = expected_direction.map(|dir| {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        order.windows(2).all(|w| {
            let step = lambdas[w[1]] - lambdas[w[0]];
            match dir {
                Direction::NonDecreasing => step >= -MONOTONE_SLACK,
                Direction::NonIncreasing => step <= MONOTONE_SLACK,
            }
        })
    });
    Ok(SweepReport {
        path,
        values: values.to_vec(),
        lambdas,
        residuals: results.iter().map(|r| r.residual).collect(),
        iterations: results.iter().map(|r| r.iterations).collect(),
        difference_quotients,
        max_difference_quotient,
        expected_direction,
        monotone_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub path: ParamPath,
    pub coarse: Vec<f64>,
    pub refined: Vec<f64>,
    pub coarse_max: f64,
    pub refined_max: f64,
    /// `|refined_max - coarse_max| / max(coarse_max, 1e-6)`
    pub relative_change: f64,
    pub ok: bool,
}

/// Compares the largest difference quotient over the ladder
/// `p0 2^(k/4)`, `k = 0..4`, with the one over `p0 2^(k/8)`. Parameters
/// that are zero at the base point start the ladder at 0.1.
pub fn lipschitz_witness(
    params: &ProblemParams,
    path: ParamPath,
    grid: &TruncatedGrid,
    num: &Numerics,
) -> Result<LipschitzReport, AnalysisError> {
    let base = path.get(params);
    let p0 = if base.abs() < 1e-12 { 0.1 } else { base };
    let ladder = |denom: f64| -> Vec<f64> { (0..5).map(|k| p0 * 2f64.powf(k as f64 / denom)).collect() };
    let coarse = ladder(4.0);
    let refined = ladder(8.0);
    let c = sweep(params, path, &coarse, grid, num)?;
    let r = sweep(params, path, &refined, grid, num)?;
    let relative_change =
        (r.max_difference_quotient - c.max_difference_quotient).abs() / c.max_difference_quotient.max(1e-6);
    Ok(LipschitzReport {
        path,
        coarse,
        refined,
        coarse_max: c.max_difference_quotient,
        refined_max: r.max_difference_quotient,
        ok: relative_change < 0.5,
        relative_change,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub holds: bool,
    pub probe_radius: f64,
    pub outer_sup: [f64; 2],
    pub lambda_estimate: f64,
    pub margin: f64,
}

pub const DEFAULT_CONDITION_MARGIN: f64 = 1e-3;

/// Checks `sup_{outside r} a_i < -lambda - margin` for both sides together
/// with `lambda <= 0`, with suprema sampled on the grid.
pub fn check_condition_strict(
    params: &ProblemParams,
    grid: &TruncatedGrid,
    probe_radius: f64,
    lambda_estimate: f64,
    margin: f64,
) -> Result<ConditionReport, AnalysisError> {
    let outer_sup = [
        params.fields[0]
            .growth
            .sup_on_region(grid, Region::Outer, probe_radius)?,
        params.fields[1]
            .growth
            .sup_on_region(grid, Region::Outer, probe_radius)?,
    ];
    let holds = lambda_estimate <= 0.0 && outer_sup.iter().all(|&s| s < -lambda_estimate - margin);
    Ok(ConditionReport {
        holds,
        probe_radius,
        outer_sup,
        lambda_estimate,
        margin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrictProbe {
    pub lambda_base: f64,
    pub lambda_bumped: f64,
    /// `lambda_base - lambda_bumped`
    pub margin: f64,
    /// False when the condition was not verified: the margin is reported only.
    pub asserted: bool,
    pub strict_ok: Option<bool>,
}

pub const STRICT_MARGIN: f64 = 1e-8;

/// Adds `bump` to both growth coefficients and compares eigenvalues.
pub fn strict_monotonicity_probe(
    params: &ProblemParams,
    bump: &CoefficientField,
    grid: &TruncatedGrid,
    condition: &ConditionReport,
    num: &Numerics,
) -> Result<StrictProbe, AnalysisError> {
    let mut bumped = params.clone();
    for f in &mut bumped.fields {
        f.growth = f.growth.plus(bump);
    }
    let (base, after) = rayon::join(|| solve(grid, params, num), || solve(grid, &bumped, num));
    let (lambda_base, lambda_bumped) = (base?.lambda, after?.lambda);
    let margin = lambda_base - lambda_bumped;
    Ok(StrictProbe {
        lambda_base,
        lambda_bumped,
        margin,
        asserted: condition.holds,
        strict_ok: condition.holds.then_some(margin > STRICT_MARGIN),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackConfig {
    pub seed: u64,
    pub n_draws: usize,
    pub radius: f64,
    pub inner_radius: f64,
    pub spacing: f64,
    pub shape: Shape,
    /// Bound on `|f|` and `|g_i|`.
    pub bound: f64,
    /// Also solve each draw at twice the radius.
    pub doubling: bool,
    /// Also solve each draw at half the spacing.
    pub refinement: bool,
}

impl Default for HarnackConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_draws: 20,
            radius: 20.0,
            inner_radius: 2.0,
            spacing: 0.25,
            shape: Shape::Halfdisk,
            bound: 1.0,
            doubling: false,
            refinement: false,
        }
    }
}

/// Coefficients of one Harnack draw.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnackDraw {
    pub f: CoefficientField,
    pub g: [CoefficientField; 2],
}

/// A random coefficient `c0 + sum_m A_m exp(-|z - z_m|^2 / (2 s_m^2))` with
/// `|c0| + sum |A_m| <= bound`, bumps centred within distance 4 of the
/// origin.
fn random_coefficient(rng: &mut ChaCha8Rng, bound: f64, with_y: bool) -> CoefficientField {
    let bumps = rng.random_range(1..=3usize);
    let mut weights: Vec<f64> = (0..=bumps).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let budget = bound * rng.random_range(0.5..1.0);
    weights.iter_mut().for_each(|w| *w *= budget / total);
    let sign = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut terms = vec![format!("{:?}", sign(rng) * weights[0])];
    for w in &weights[1..] {
        let amp = sign(rng) * w;
        let xm: f64 = rng.random_range(-4.0..4.0);
        let width: f64 = rng.random_range(0.5..3.0);
        let dist = if with_y {
            let ym: f64 = rng.random_range(0.0..4.0);
            format!("(x - ({xm:?}))^2 + (y - ({ym:?}))^2")
        } else {
            format!("(x - ({xm:?}))^2")
        };
        terms.push(format!("({amp:?}) * exp(-({dist}) / {:?})", 2.0 * width * width));
    }
    CoefficientField::parse(&terms.join(" + "), bound).expect("generated expression parses")
}

pub fn harnack_draws(seed: u64, n: usize, bound: f64) -> Vec<HarnackDraw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| HarnackDraw {
            f: random_coefficient(&mut rng, bound, false),
            g: [
                random_coefficient(&mut rng, bound, true),
                random_coefficient(&mut rng, bound, true),
            ],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub h: f64,
    pub n_draws: usize,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub doubled_ratios: Option<Vec<f64>>,
    /// Largest relative change of a draw's ratio when R doubles.
    pub doubling_drift: Option<f64>,
    /// Max ratio on the halved grid, sampled at the nodes it shares with
    /// the base grid.
    pub refined_max_ratio: Option<f64>,
    /// Relative change of the max ratio when h halves, on shared nodes.
    pub refinement_drift: Option<f64>,
    /// Same comparison using every node of the halved grid.
    pub refinement_drift_all_nodes: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("Harnack draw {draw} failed: {source}")]
pub struct HarnackFailure {
    pub draw: usize,
    #[source]
    pub source: AnalysisError,
}

/// `max(sup u, sup v1, sup v2) / min(inf u, inf v1, inf v2)` over the
/// unknowns with `|x| < r` on the road and `x^2 + y^2 < r^2` in the fields.
pub fn harnack_ratio(grid: &TruncatedGrid, vector: &[f64], r: f64) -> Result<f64, AnalysisError> {
    harnack_ratio_sampled(grid, vector, r, None)
}

/// [`harnack_ratio`] restricted to nodes whose coordinates are multiples of
/// `sample_spacing`, so that grids of different spacing can be compared on
/// the same points.
pub fn harnack_ratio_sampled(
    grid: &TruncatedGrid,
    vector: &[f64],
    r: f64,
    sample_spacing: Option<f64>,
) -> Result<f64, AnalysisError> {
    let on_lattice = |t: f64| match sample_spacing {
        Some(s) => ((t / s).round() * s - t).abs() < 1e-9 * s,
        None => true,
    };
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for g in 0..grid.len() {
        let (_, x, y) = grid.coordinates(g).expect("index in range");
        if x * x + y * y < r * r && on_lattice(x) && on_lattice(y) {
            hi = hi.max(vector[g]);
            lo = lo.min(vector[g]);
        }
    }
    if !(lo > 0.0) {
        return Err(AnalysisError::Input(format!(
            "eigenvector is not positive on the inner region (min {lo:e})"
        )));
    }
    Ok(hi / lo)
}

pub fn harnack_study(
    base: &ProblemParams,
    cfg: &HarnackConfig,
    num: &Numerics,
) -> Result<HarnackReport, HarnackFailure> {
    let input = |msg: String| HarnackFailure {
        draw: 0,
        source: AnalysisError::Input(msg),
    };
    if !(cfg.inner_radius > 0.0 && cfg.inner_radius <= cfg.radius / 2.0) {
        return Err(input(format!(
            "inner radius {} must lie in (0, R/2]",
            cfg.inner_radius
        )));
    }
    if cfg.n_draws == 0 {
        return Err(input("n_draws must be positive".into()));
    }
    let draws = harnack_draws(cfg.seed, cfg.n_draws, cfg.bound);
    // (ratio on the base lattice, ratio on every node) per draw; the two
    // coincide unless the grid is finer than the base spacing
    let ratios_on = |radius: f64, spacing: f64| -> Result<Vec<(f64, f64)>, HarnackFailure> {
        let grid = TruncatedGrid::new(radius, spacing, cfg.shape).map_err(|e| HarnackFailure {
            draw: 0,
            source: e.into(),
        })?;
        draws
            .par_iter()
            .enumerate()
            .map(|(k, d)| {
                let mut p = base.clone();
                p.road.potential = d.f.clone();
                p.fields[0].growth = d.g[0].clone();
                p.fields[1].growth = d.g[1].clone();
                solve(&grid, &p, num)
                    .and_then(|e| {
                        Ok((
                            harnack_ratio_sampled(&grid, &e.vector, cfg.inner_radius, Some(cfg.spacing))?,
                            harnack_ratio(&grid, &e.vector, cfg.inner_radius)?,
                        ))
                    })
                    .map_err(|source| HarnackFailure { draw: k, source })
            })
            .collect()
    };
    let max = |v: &[f64]| v.iter().fold(f64::NEG_INFINITY, |m, r| m.max(*r));
    let ratios: Vec<f64> = ratios_on(cfg.radius, cfg.spacing)?.into_iter().map(|r| r.1).collect();
    let max_ratio = max(&ratios);
    let doubled: Option<Vec<f64>> = cfg
        .doubling
        .then(|| ratios_on(2.0 * cfg.radius, cfg.spacing))
        .transpose()?
        .map(|v| v.into_iter().map(|r| r.1).collect());
    let doubling_drift = doubled.as_ref().map(|d| {
        ratios
            .iter()
            .zip(d)
            .map(|(a, b)| (b - a).abs() / a)
            .fold(0.0f64, f64::max)
    });
    let refined = cfg
        .refinement
        .then(|| ratios_on(cfg.radius, cfg.spacing / 2.0))
        .transpose()?
        .map(|v| {
            let (shared, all): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            (max(&shared), max(&all))
        });
    let drift = |m: f64| (m - max_ratio).abs() / max_ratio;
    Ok(HarnackReport {
        r: cfg.inner_radius,
        big_r: cfg.radius,
        h: cfg.spacing,
        n_draws: cfg.n_draws,
        ratios,
        max_ratio,
        doubled_ratios: doubled,
        doubling_drift,
        refined_max_ratio: refined.map(|r| r.0),
        refinement_drift: refined.map(|r| drift(r.0)),
        refinement_drift_all_nodes: refined.map(|r| drift(r.1)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEnvelope {
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: [f64; 2],
    pub prefactor: f64,
    pub feasible: bool,
}

impl DecayEnvelope {
    /// `gamma_i = mu_i / (d_i beta + nu_i)`,
    /// `alpha = sqrt((d_1 gamma_1 + d_2 gamma_2) beta / (2D))`.
    pub fn exponents(params: &ProblemParams, beta: f64) -> (f64, [f64; 2]) {
        let gamma = Side::BOTH.map(|s| {
            params.road.to_field[s.index()]
                / (params.field(s).diffusion * beta + params.road.to_road[s.index()])
        });
        let weighted = params.fields[0].diffusion * gamma[0] + params.fields[1].diffusion * gamma[1];
        let alpha = (weighted * beta / (2.0 * params.road.diffusion)).sqrt();
        (alpha, gamma)
    }

    /// Envelope value at a node.
    pub fn value(&self, component: Component, x: f64, y: f64) -> f64 {
        let base = self.prefactor * (-self.alpha * x.abs()).exp();
        match component {
            Component::Road => base,
            Component::Field(s) => self.gamma[s.index()] * base * (-self.beta * y).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCandidate {
    pub rho: f64,
    pub beta: f64,
    pub lambda_rho: f64,
    pub outer_sup: [f64; 2],
    /// `beta (d1 g1 + d2 g2) / 2 >= lambda_rho`
    pub road_ok: bool,
    /// The same inequality without the factor beta.
    pub road_ok_without_beta: bool,
    pub field_ok: [bool; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub envelope: Option<DecayEnvelope>,
    pub lambda_rho: Option<f64>,
    pub candidates: Vec<DecayCandidate>,
    /// Largest `x_k - envelope_k` over all unknowns (0 when dominated).
    pub max_violation: f64,
    /// Smallest `envelope_k - x_k`.
    pub min_slack: f64,
    pub violations: usize,
    pub worst_node: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayLadders {
    pub rho: Vec<f64>,
    pub beta: Vec<f64>,
}

impl DecayLadders {
    /// `rho in {R/8, R/4, R/2}` and `beta = 2^-k`, `k = 0..=10`.
    pub fn for_radius(radius: f64) -> Self {
        Self {
            rho: vec![radius / 8.0, radius / 4.0, radius / 2.0],
            beta: (0..=10).map(|k| 0.5f64.powi(k)).collect(),
        }
    }
}

/// Searches the ladders for a feasible envelope and checks that it
/// dominates the sup-normalized eigenvector `eig` computed on `grid`.
pub fn decay_envelope(
    params: &ProblemParams,
    grid: &TruncatedGrid,
    eig: &EigenResult,
    condition: &ConditionReport,
    ladders: &DecayLadders,
    num: &Numerics,
) -> Result<DecayReport, AnalysisError> {
    if !condition.holds {
        return Err(AnalysisError::ConditionUnverified);
    }
    if !params.is_drift_free() {
        return Err(AssemblyError::DriftPresent.into());
    }
    let h = grid.spacing();
    let mut candidates = Vec::new();
    let mut chosen: Option<(f64, f64, f64)> = None;
    'search: for &rho in &ladders.rho {
        if !(rho < grid.radius()) {
            continue;
        }
        let inner = TruncatedGrid::new(rho, h, grid.shape())?;
        let lambda_rho = solve(&inner, params, num)?.lambda;
        let outer_sup = [
            params.fields[0].growth.sup_on_region(grid, Region::Outer, rho)?,
            params.fields[1].growth.sup_on_region(grid, Region::Outer, rho)?,
        ];
        for &beta in &ladders.beta {
            let (alpha, gamma) = DecayEnvelope::exponents(params, beta);
            let weighted =
                params.fields[0].diffusion * gamma[0] + params.fields[1].diffusion * gamma[1];
            let field_ok = Side::BOTH.map(|s| {
                params.field(s).diffusion * (alpha * alpha + beta * beta)
                    <= -outer_sup[s.index()] - lambda_rho
            });
            let c = DecayCandidate {
                rho,
                beta,
                lambda_rho,
                outer_sup,
                road_ok: beta * weighted / 2.0 >= lambda_rho,
                road_ok_without_beta: weighted / 2.0 >= lambda_rho,
                field_ok,
            };
            let ok = c.road_ok && c.field_ok.iter().all(|&f| f);
            candidates.push(c);
            if ok {
                chosen = Some((rho, beta, lambda_rho));
                break 'search;
            }
        }
    }
    let Some((rho, beta, lambda_rho)) = chosen else {
        return Ok(DecayReport {
            envelope: None,
            lambda_rho: None,
            candidates,
            max_violation: 0.0,
            min_slack: 0.0,
            violations: 0,
            worst_node: None,
        });
    };
    let (alpha, gamma) = DecayEnvelope::exponents(params, beta);
    let mut core_sup = 0.0f64;
    for g in 0..grid.len() {
        let (c, x, y) = grid.coordinates(g).expect("index in range");
        let inside = match c {
            Component::Road => x.abs() < rho,
            Component::Field(_) => x * x + y * y < rho * rho,
        };
        if inside {
            core_sup = core_sup.max(eig.vector[g]);
        }
    }
    let envelope = DecayEnvelope {
        rho,
        alpha,
        beta,
        gamma,
        prefactor: core_sup * (2.0 * (alpha + beta) * rho).exp(),
        feasible: true,
    };
    let mut max_violation = 0.0f64;
    let mut min_slack = f64::INFINITY;
    let mut violations = 0;
    let mut worst_node = None;
    for g in 0..grid.len() {
        let (c, x, y) = grid.coordinates(g).expect("index in range");
        let slack = envelope.value(c, x, y) - eig.vector[g];
        if slack < min_slack {
            min_slack = slack;
        }
        if slack < 0.0 {
            violations += 1;
            if -slack > max_violation {
                max_violation = -slack;
                worst_node = Some((x, y));
            }
        }
    }
    Ok(DecayReport {
        envelope: Some(envelope),
        lambda_rho: Some(lambda_rho),
        candidates,
        max_violation,
        min_slack,
        violations,
        worst_node,
    })
}

/// Growth profile `tanh(2 (5 - sqrt(x^2 + y^2)))`: favourable inside the
/// radius-5 half-disk, unfavourable outside.
pub fn niche_growth() -> CoefficientField {
    CoefficientField::parse("tanh(2 * (5 - sqrt(x^2 + y^2)))", 1.0).expect("static expression")
}
