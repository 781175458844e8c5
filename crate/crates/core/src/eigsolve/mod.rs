//! Principal eigenpairs by positivity-preserving shifted inverse iteration.
//!
//! For a Z-matrix `A` and positive diagonal weights `m`, every shift
//! `s > -floor` (the weighted Gershgorin floor) makes `A + s diag(m)` a
//! nonsingular M-matrix, so its inverse maps positive vectors to positive
//! vectors. Iterating the inverse from the all-ones vector converges to the
//! Perron vector. Once the iterate is positive, the Collatz–Wielandt ratios
//! `(Ax)_k / (m_k x_k)` bracket the principal eigenvalue and the shift is
//! moved just below the lower bracket to accelerate convergence without
//! leaving the M-matrix regime.

pub mod krylov;

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::Par;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::SystemMatrix;
use crate::sparse::{dot, SparseMatrix};
use krylov::{bicgstab, Ilu0};

/// Size above which `LinearSolver::Auto` switches to the Krylov solver.
pub const DIRECT_SOLVER_LIMIT: usize = 300_000;

/// Largest system handed to the dense oracles.
pub const DENSE_ORACLE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shift {
    #[default]
    #[serde(with = "auto_tag")]
    Auto,
    Explicit(f64),
}

mod auto_tag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(serde::de::Error::custom("expected \"auto\" or a number"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearSolver {
    /// Direct factorization up to [`DIRECT_SOLVER_LIMIT`] unknowns, Krylov above.
    #[default]
    Auto,
    Direct,
    Krylov,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub shift: Shift,
    pub linear_solver: LinearSolver,
    /// Relative residual target of each inner Krylov solve.
    pub krylov_tol: f64,
    pub krylov_max_iter: usize,
    /// Refuse matrices whose adjacency graph is not strongly connected.
    pub require_irreducible: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            shift: Shift::Auto,
            linear_solver: LinearSolver::Auto,
            krylov_tol: 1e-13,
            krylov_max_iter: 5_000,
            require_irreducible: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), EigError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(EigError::InvalidConfig(format!(
                "solver.tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(EigError::InvalidConfig("solver.max_iter must be at least 1".into()));
        }
        if let Shift::Explicit(s) = self.shift {
            if !s.is_finite() {
                return Err(EigError::InvalidConfig(format!("solver.shift must be finite, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenResult {
    pub lambda: f64,
    /// Sup-normalized eigenvector; its largest entry is exactly 1.
    pub vector: Vec<f64>,
    /// `max_k |(Ax)_k / m_k - lambda x_k|` with `|x|_inf = 1`.
    pub residual: f64,
    pub iterations: usize,
    /// Smallest entry of the sup-normalized vector.
    pub positivity_margin: f64,
    pub spectral_gap_hint: Option<f64>,
    /// Collatz–Wielandt bracket `[min, max]` of `(Ax)_k / (m_k x_k)`.
    pub perron_bracket: Option<(f64, f64)>,
    /// Shift in effect at the last iteration.
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("converged vector is not positive: entry {index} = {value:.3e}")]
    PositivityLoss { index: usize, value: f64 },
    #[error("matrix is reducible; the principal eigenvector need not be positive")]
    Reducible,
    #[error("explicit shift {shift} does not exceed the Gershgorin bound {bound}")]
    ShiftTooSmall { shift: f64, bound: f64 },
    #[error("system of size {size} exceeds the dense oracle limit {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("eigen-decomposition failed: {0}")]
    Decomposition(String),
    #[error("minimal eigenvalue {re} has imaginary part {im:.3e}")]
    ComplexPrincipal { re: f64, im: f64 },
    #[error("minimal eigenvalue {lambda} is not simple (nearest {nearest})")]
    NotSimple { lambda: f64, nearest: f64 },
    #[error("eigenvector of the minimal eigenvalue changes sign (entry {index} = {value:.3e})")]
    SignIndefinite { index: usize, value: f64 },
}

/// `1 + max(0, -min_k (A_kk - sum_{j != k} |A_kj|))`.
pub fn shift_floor(a: &SparseMatrix) -> f64 {
    1.0 + (-a.gershgorin_floor(None)).max(0.0)
}

fn weighted_shift_floor(a: &SparseMatrix, mass: &[f64]) -> f64 {
    1.0 + (-a.gershgorin_floor(Some(mass))).max(0.0)
}

/// Factored `M` with a positivity-agnostic `solve`.
pub struct Resolvent {
    kind: ResolventKind,
    dim: usize,
}

enum ResolventKind {
    Lu(Lu<usize, f64>),
    Llt(Llt<usize, f64>),
    Krylov {
        matrix: SparseMatrix,
        ilu: Ilu0,
        tol: f64,
        max_iter: usize,
    },
}

impl Resolvent {
    pub fn factor(m: &SparseMatrix, solver: LinearSolver, cfg: &SolverConfig) -> Result<Self, EigError> {
        faer::set_global_parallelism(Par::Seq);
        let use_krylov = match solver {
            LinearSolver::Direct => false,
            LinearSolver::Krylov => true,
            LinearSolver::Auto => m.dim() > DIRECT_SOLVER_LIMIT,
        };
        let kind = if use_krylov {
            let ilu = Ilu0::new(m).ok_or_else(|| EigError::LinearSolve("zero pivot in ILU(0)".into()))?;
            ResolventKind::Krylov {
                matrix: m.clone(),
                ilu,
                tol: cfg.krylov_tol,
                max_iter: cfg.krylov_max_iter,
            }
        } else {
            let lu = m
                .to_faer()
                .sp_lu()
                .map_err(|e| EigError::LinearSolve(format!("{e:?}")))?;
            ResolventKind::Lu(lu)
        };
        Ok(Self { kind, dim: m.dim() })
    }

    /// Sparse Cholesky of a symmetric positive definite matrix.
    pub fn cholesky(m: &SparseMatrix) -> Result<Self, EigError> {
        faer::set_global_parallelism(Par::Seq);
        let llt = m
            .to_faer()
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| EigError::LinearSolve(format!("{e:?}")))?;
        Ok(Self {
            kind: ResolventKind::Llt(llt),
            dim: m.dim(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, EigError> {
        assert_eq!(rhs.len(), self.dim);
        let direct = |apply: &dyn Fn(faer::MatMut<'_, f64>)| {
            let mut col = Col::<f64>::from_fn(self.dim, |k| rhs[k]);
            apply(col.as_mat_mut());
            let out: Vec<f64> = (0..self.dim).map(|k| col[k]).collect();
            if out.iter().all(|v| v.is_finite()) {
                Ok(out)
            } else {
                Err(EigError::LinearSolve("non-finite solution".into()))
            }
        };
        match &self.kind {
            ResolventKind::Lu(lu) => direct(&|m| lu.solve_in_place(m)),
            ResolventKind::Llt(llt) => direct(&|m| llt.solve_in_place(m)),
            ResolventKind::Krylov {
                matrix,
                ilu,
                tol,
                max_iter,
            } => bicgstab(matrix, ilu, rhs, *tol, *max_iter)
                .map(|(x, _)| x)
                .ok_or_else(|| EigError::LinearSolve("BiCGSTAB did not converge".into())),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Factorization {
    General(LinearSolver),
    Cholesky,
}

fn factor(m: &SparseMatrix, how: Factorization, cfg: &SolverConfig) -> Result<Resolvent, EigError> {
    match how {
        Factorization::General(solver) => Resolvent::factor(m, solver, cfg),
        Factorization::Cholesky => Resolvent::cholesky(m),
    }
}

/// Principal eigenpair of an assembled system.
pub fn principal_eig(sys: &SystemMatrix, cfg: &SolverConfig) -> Result<EigenResult, EigError> {
    principal_eig_matrix(&sys.matrix, cfg)
}

pub fn principal_eig_matrix(a: &SparseMatrix, cfg: &SolverConfig) -> Result<EigenResult, EigError> {
    principal_eig_from(a, cfg, &vec![1.0; a.dim()])
}

/// As [`principal_eig_matrix`] but starting from the given positive vector.
pub fn principal_eig_from(a: &SparseMatrix, cfg: &SolverConfig, start: &[f64]) -> Result<EigenResult, EigError> {
    let mass = vec![1.0; a.dim()];
    inverse_iteration(a, &mass, cfg, Factorization::General(cfg.linear_solver), start)
}

/// Smallest eigenvalue of the symmetric pencil `K x = lambda diag(mass) x`.
pub fn symmetric_principal_eig(k: &SparseMatrix, mass: &[f64], cfg: &SolverConfig) -> Result<EigenResult, EigError> {
    if mass.len() != k.dim() || mass.iter().any(|&m| !(m > 0.0)) {
        return Err(EigError::InvalidConfig("mass must be positive with one entry per row".into()));
    }
    inverse_iteration(k, mass, cfg, Factorization::Cholesky, &vec![1.0; k.dim()])
}

const MAX_RESHIFTS: usize = 12;

fn inverse_iteration(
    a: &SparseMatrix,
    mass: &[f64],
    cfg: &SolverConfig,
    how: Factorization,
    start: &[f64],
) -> Result<EigenResult, EigError> {
    cfg.validate()?;
    let n = a.dim();
    assert_eq!(start.len(), n);
    if cfg.require_irreducible && !a.is_irreducible() {
        return Err(EigError::Reducible);
    }
    let auto = matches!(cfg.shift, Shift::Auto);
    let mut shift = match cfg.shift {
        Shift::Auto => weighted_shift_floor(a, mass),
        Shift::Explicit(s) => {
            let bound = -a.gershgorin_floor(Some(mass));
            if s <= bound {
                return Err(EigError::ShiftTooSmall { shift: s, bound });
            }
            s
        }
    };
    let mut resolvent = factor(&a.shifted(shift, mass), how, cfg)?;
    let mut retried = false;

    let mut x = start.to_vec();
    normalize(&mut x);
    let mut history = Vec::new();
    let mut last_reshift = 0usize;
    let mut reshifts = 0usize;
    let mut ax = vec![0.0; n];
    for iter in 1..=cfg.max_iter {
        let rhs: Vec<f64> = x.iter().zip(mass).map(|(v, m)| v * m).collect();
        let mut y = resolvent.solve(&rhs)?;
        if !normalize(&mut y) {
            return Err(EigError::LinearSolve("resolvent returned the zero vector".into()));
        }
        x = y;
        a.mul_vec(&x, &mut ax);
        let lambda = dot(&x, &ax) / x.iter().zip(mass).map(|(v, m)| v * v * m).sum::<f64>();
        let residual = ax
            .iter()
            .zip(&x)
            .zip(mass)
            .fold(0.0f64, |r, ((p, q), m)| r.max((p / m - lambda * q).abs()));
        history.push(residual);
        let bracket = perron_bracket(&ax, &x, mass);
        if residual <= cfg.tol {
            let gap = gap_hint(&history, lambda, shift, iter - last_reshift);
            return finish(lambda, x, residual, iter, gap, bracket, shift);
        }
        if !residual.is_finite() {
            break;
        }
        if auto && reshifts < MAX_RESHIFTS && iter - last_reshift >= 2 {
            if let Some((low, _)) = bracket {
                let eps = (1e-7 * (1.0 + lambda.abs())).max(1e-3 * (lambda - low).abs());
                let candidate = -low + eps;
                if candidate < shift && (lambda + candidate) < 0.2 * (lambda + shift) {
                    match factor(&a.shifted(candidate, mass), how, cfg) {
                        Ok(r) => {
                            resolvent = r;
                            shift = candidate;
                            last_reshift = iter;
                            reshifts += 1;
                        }
                        // indefinite: keep the previous shift, once
                        Err(_) if how == Factorization::Cholesky && !retried => retried = true,
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }
    Err(EigError::NotConverged {
        iterations: cfg.max_iter,
        residual: history.last().copied().unwrap_or(f64::INFINITY),
        history,
    })
}

/// Scales by the entry of largest modulus, keeping its sign positive.
fn normalize(x: &mut [f64]) -> bool {
    let mut best = 0.0f64;
    for &v in x.iter() {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    if best == 0.0 || !best.is_finite() {
        return false;
    }
    for v in x.iter_mut() {
        *v /= best;
    }
    true
}

fn perron_bracket(ax: &[f64], x: &[f64], mass: &[f64]) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..x.len() {
        if !(x[k] > 0.0) {
            return None;
        }
        let r = ax[k] / (mass[k] * x[k]);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Some((lo, hi))
}

/// Residuals contract by `(lambda_1 + s) / (lambda_2 + s)` per step at a
/// fixed shift, which gives a rough estimate of the next eigenvalue.
fn gap_hint(history: &[f64], lambda: f64, shift: f64, steps_at_shift: usize) -> Option<f64> {
    if steps_at_shift < 3 || history.len() < 3 {
        return None;
    }
    let n = history.len();
    let q = history[n - 2] / history[n - 3];
    (q > 0.0 && q < 1.0 && q.is_finite()).then(|| (lambda + shift) * (1.0 / q - 1.0))
}

fn finish(
    lambda: f64,
    x: Vec<f64>,
    residual: f64,
    iterations: usize,
    spectral_gap_hint: Option<f64>,
    perron_bracket: Option<(f64, f64)>,
    shift: f64,
) -> Result<EigenResult, EigError> {
    let (index, margin) = x
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
    if !(margin > 0.0) {
        return Err(EigError::PositivityLoss { index, value: margin });
    }
    Ok(EigenResult {
        lambda,
        vector: x,
        residual,
        iterations,
        positivity_margin: margin,
        spectral_gap_hint,
        perron_bracket,
        shift,
    })
}

/// Full dense eigen-decomposition oracle. The returned `spectral_gap_hint` is
/// the exact gap `min Re(lambda_j) - lambda_1` over the other eigenvalues.
pub fn dense_principal_eig(a: &SparseMatrix) -> Result<EigenResult, EigError> {
    let n = a.dim();
    if n > DENSE_ORACLE_LIMIT {
        return Err(EigError::TooLarge {
            size: n,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    faer::set_global_parallelism(Par::Seq);
    let evd = a
        .to_faer_dense()
        .eigen()
        .map_err(|e| EigError::Decomposition(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let values: Vec<(f64, f64)> = (0..n).map(|k| (s[k].re, s[k].im)).collect();
    let scale = values.iter().fold(1.0f64, |m, &(re, im)| m.max(re.hypot(im)));
    let (best, &(re, im)) = values
        .iter()
        .enumerate()
        .min_by(|p, q| p.1 .0.total_cmp(&q.1 .0))
        .expect("non-empty matrix");
    if im.abs() > 1e-8 * scale {
        return Err(EigError::ComplexPrincipal { re, im });
    }
    let mut gap = f64::INFINITY;
    let mut nearest = f64::INFINITY;
    for (k, &(r, i)) in values.iter().enumerate() {
        if k != best {
            gap = gap.min(r - re);
            if (r - re).hypot(i) < (nearest - re).abs() {
                nearest = r;
            }
        }
    }
    if n > 1 && (nearest - re).abs() <= 1e-8 * scale {
        return Err(EigError::NotSimple { lambda: re, nearest });
    }
    let u = evd.U();
    let mut x: Vec<f64> = (0..n).map(|k| u[(k, best)].re).collect();
    normalize(&mut x);
    let ax = a.apply(&x);
    let residual = ax
        .iter()
        .zip(&x)
        .fold(0.0f64, |r, (p, q)| r.max((p - re * q).abs()));
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(EigError::SignIndefinite { index, value });
    }
    let bracket = perron_bracket(&ax, &x, &vec![1.0; n]);
    finish(re, x, residual, 0, (n > 1).then_some(gap), bracket, 0.0)
}

/// All eigenvalues of the pencil `K x = lambda diag(mass) x`, ascending,
/// computed densely through `M^{-1/2} K M^{-1/2}`.
pub fn dense_pencil_eigenvalues(k: &SparseMatrix, mass: &[f64]) -> Result<Vec<f64>, EigError> {
    let n = k.dim();
    if n > DENSE_ORACLE_LIMIT {
        return Err(EigError::TooLarge {
            size: n,
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    faer::set_global_parallelism(Par::Seq);
    let mut m = k.to_faer_dense();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] /= (mass[i] * mass[j]).sqrt();
        }
    }
    m.self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| EigError::Decomposition(format!("{e:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, assemble_symmetric, ProblemParams};
    use crate::grid::{Shape, TruncatedGrid};

    fn unit_fixture(growth: f64) -> SystemMatrix {
        let grid = TruncatedGrid::new(1.0, 0.5, Shape::Rectangle).unwrap();
        assemble(&grid, &ProblemParams::uniform(growth), &Default::default()).unwrap()
    }

    #[test]
    fn shift_floor_examples() {
        assert_eq!(shift_floor(&unit_fixture(0.0).matrix), 1.0);
        let hot = unit_fixture(10.0).matrix;
        let expect = 1.0 - hot.gershgorin_floor(None);
        assert_eq!(shift_floor(&hot), expect);
        assert!(expect > 1.0);
    }

    #[test]
    fn diagonal_fixture() {
        let a = SparseMatrix::from_diagonal(&[2.0, 3.0, 5.0]);
        let cfg = SolverConfig {
            require_irreducible: false,
            ..Default::default()
        };
        let r = principal_eig_matrix(&a, &cfg).unwrap();
        assert!((r.lambda - 2.0).abs() < 1e-10);
        assert_eq!(r.vector[0], 1.0);
        assert!(r.vector[1] < 1e-9 && r.vector[2] < 1e-9);
        assert_eq!(
            principal_eig_matrix(&a, &SolverConfig::default()),
            Err(EigError::Reducible)
        );
    }

    #[test]
    fn two_by_two_oracle() {
        let a = SparseMatrix::from_dense(&[vec![2.0, -1.0], vec![-1.0, 2.0]]);
        let d = dense_principal_eig(&a).unwrap();
        assert!((d.lambda - 1.0).abs() < 1e-14);
        assert!((d.vector[0] - 1.0).abs() < 1e-14 && (d.vector[1] - 1.0).abs() < 1e-14);
        assert!((d.spectral_gap_hint.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn iterative_matches_dense_on_unit_fixture() {
        for growth in [0.0, 0.5, 3.0] {
            let sys = unit_fixture(growth);
            let it = principal_eig(&sys, &SolverConfig::default()).unwrap();
            let dense = dense_principal_eig(&sys.matrix).unwrap();
            assert!((it.lambda - dense.lambda).abs() <= 1e-8 * (1.0 + it.lambda.abs()));
            assert!(dense.spectral_gap_hint.unwrap() > 0.0);
            assert!(it.lambda >= sys.matrix.gershgorin_floor(None));
            assert!(it.positivity_margin > 0.0);
            let (lo, hi) = it.perron_bracket.unwrap();
            assert!(lo <= dense.lambda + 1e-12 && dense.lambda <= hi + 1e-12);
        }
        let l0 = dense_principal_eig(&unit_fixture(0.0).matrix).unwrap().lambda;
        let l5 = dense_principal_eig(&unit_fixture(0.5).matrix).unwrap().lambda;
        assert!(l5 >= l0 - 0.5 - 1e-12);
    }

    #[test]
    fn identity_pencil() {
        let k = SparseMatrix::identity(4);
        let cfg = SolverConfig {
            require_irreducible: false,
            ..Default::default()
        };
        let r = symmetric_principal_eig(&k, &[1.0; 4], &cfg).unwrap();
        assert!((r.lambda - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pencil_iteration_matches_dense() {
        let grid = TruncatedGrid::new(2.0, 0.5, Shape::Halfdisk).unwrap();
        let p = assemble_symmetric(&grid, &ProblemParams::uniform(0.3)).unwrap();
        let it = symmetric_principal_eig(&p.stiffness, &p.mass, &SolverConfig::default()).unwrap();
        let dense = dense_pencil_eigenvalues(&p.stiffness, &p.mass).unwrap();
        assert!((it.lambda - dense[0]).abs() < 1e-9, "{} vs {}", it.lambda, dense[0]);
    }

    #[test]
    fn explicit_shift_and_krylov() {
        let grid = TruncatedGrid::new(3.0, 0.25, Shape::Halfdisk).unwrap();
        let sys = assemble(&grid, &ProblemParams::uniform(0.5), &Default::default()).unwrap();
        let base = principal_eig(&sys, &SolverConfig::default()).unwrap();
        let krylov = principal_eig(
            &sys,
            &SolverConfig {
                linear_solver: LinearSolver::Krylov,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((base.lambda - krylov.lambda).abs() < 1e-9);
        let fixed = SolverConfig {
            shift: Shift::Explicit(shift_floor(&sys.matrix)),
            ..Default::default()
        };
        let slow = principal_eig(&sys, &fixed).unwrap();
        assert!((base.lambda - slow.lambda).abs() < 1e-9);
        assert!(matches!(
            principal_eig(
                &sys,
                &SolverConfig {
                    shift: Shift::Explicit(-1e6),
                    ..Default::default()
                }
            ),
            Err(EigError::ShiftTooSmall { .. })
        ));
    }

    #[test]
    fn start_scaling_is_irrelevant() {
        let sys = unit_fixture(0.2);
        let cfg = SolverConfig::default();
        let one = principal_eig_from(&sys.matrix, &cfg, &vec![1.0; 9]).unwrap();
        let scaled = principal_eig_from(&sys.matrix, &cfg, &vec![37.5; 9]).unwrap();
        assert!((one.lambda - scaled.lambda).abs() < 1e-13);
        for (p, q) in one.vector.iter().zip(&scaled.vector) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn iteration_limit_reports_history() {
        let sys = unit_fixture(0.0);
        let cfg = SolverConfig {
            max_iter: 2,
            tol: 1e-300,
            ..Default::default()
        };
        match principal_eig(&sys, &cfg) {
            Err(EigError::NotConverged { history, .. }) => assert_eq!(history.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shift_config_parses() {
        #[derive(Deserialize)]
        struct W {
            s: Shift,
        }
        let w: W = toml::from_str("s = \"auto\"").unwrap();
        assert_eq!(w.s, Shift::Auto);
        let w: W = toml::from_str("s = 2.5").unwrap();
        assert_eq!(w.s, Shift::Explicit(2.5));
        assert!(toml::from_str::<W>("s = \"fast\"").is_err());
    }
}
