//! Implicit Euler for `dx/dt = -A x` and decay-rate extraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::SystemMatrix;
use crate::eigsolve::{EigError, LinearSolver, Resolvent, SolverConfig};
use crate::sparse::{sup_norm, SparseMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolveError {
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error(
        "dt = {dt} is too large for a guaranteed positive resolvent; use dt < {limit:.6e}"
    )]
    StepTooLarge { dt: f64, limit: f64 },
    #[error(transparent)]
    Solve(#[from] EigError),
    #[error("need at least {needed} snapshots after burn-in, have {have}")]
    TooFewSnapshots { needed: usize, have: usize },
    #[error("state vanished or became non-finite at step {0}")]
    Degenerate(usize),
    #[error("initial state has {got} entries, system has {expected}")]
    Shape { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialCondition {
    #[default]
    Ones,
    Eigenvector,
    /// Unit value at the road node closest to the origin, zero elsewhere.
    Bump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    /// Natural logarithms of `sup_norms`, kept separately so long runs do
    /// not underflow.
    pub log_sup_norms: Vec<f64>,
    /// Final state divided by its sup norm.
    pub state_final: Vec<f64>,
}

/// Factored `I + dt A` for repeated steps.
pub struct ImplicitEuler {
    resolvent: Resolvent,
    dt: f64,
}

impl ImplicitEuler {
    /// Rejects steps with `1 + dt * floor <= 0`, where `floor` is the
    /// Gershgorin floor of `A`: beyond that the matrix `I + dt A` is no
    /// longer guaranteed to be an M-matrix.
    pub fn new(a: &SparseMatrix, dt: f64) -> Result<Self, EvolveError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(EvolveError::BadStep(dt));
        }
        let floor = a.gershgorin_floor(None);
        if 1.0 + dt * floor <= 0.0 {
            return Err(EvolveError::StepTooLarge {
                dt,
                limit: -1.0 / floor,
            });
        }
        let m = a.scaled(dt).shifted(1.0, &vec![1.0; a.dim()]);
        let resolvent = Resolvent::factor(&m, LinearSolver::Auto, &SolverConfig::default())?;
        Ok(Self { resolvent, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, x: &[f64]) -> Result<Vec<f64>, EvolveError> {
        Ok(self.resolvent.solve(x)?)
    }
}

/// One implicit Euler step: solves `(I + dt A) x' = x`.
pub fn step_implicit(x: &[f64], dt: f64, sys: &SystemMatrix) -> Result<Vec<f64>, EvolveError> {
    ImplicitEuler::new(&sys.matrix, dt)?.step(x)
}

/// Runs `steps` implicit Euler steps and records a snapshot every
/// `snapshot_every` steps (time 0 included).
pub fn evolve(
    sys: &SystemMatrix,
    initial: &[f64],
    dt: f64,
    steps: usize,
    snapshot_every: usize,
) -> Result<Trajectory, EvolveError> {
    if initial.len() != sys.dim() {
        return Err(EvolveError::Shape {
            expected: sys.dim(),
            got: initial.len(),
        });
    }
    let every = snapshot_every.max(1);
    let stepper = ImplicitEuler::new(&sys.matrix, dt)?;
    let mut x = initial.to_vec();
    let mut log_scale = 0.0;
    let norm0 = sup_norm(&x);
    if !(norm0 > 0.0 && norm0.is_finite()) {
        return Err(EvolveError::Degenerate(0));
    }
    let mut traj = Trajectory {
        times: vec![0.0],
        sup_norms: vec![norm0],
        log_sup_norms: vec![norm0.ln()],
        state_final: Vec::new(),
    };
    for k in 1..=steps {
        x = stepper.step(&x)?;
        // keep the state O(1) and carry the scale in log form
        let n = sup_norm(&x);
        if !(n > 0.0 && n.is_finite()) {
            return Err(EvolveError::Degenerate(k));
        }
        x.iter_mut().for_each(|v| *v /= n);
        log_scale += n.ln();
        if k % every == 0 || k == steps {
            let log_norm = log_scale + norm0.ln();
            traj.times.push(k as f64 * dt);
            traj.sup_norms.push(log_norm.exp());
            traj.log_sup_norms.push(log_norm);
        }
    }
    traj.state_final = x;
    Ok(traj)
}

pub const MIN_SNAPSHOTS: usize = 10;

/// Negated least-squares slope of `log |x(t)|_inf` against `t` after
/// dropping the first `burn_in_fraction` of the snapshots.
pub fn decay_rate(traj: &Trajectory, burn_in_fraction: f64) -> Result<f64, EvolveError> {
    let n = traj.times.len();
    let skip = ((n as f64) * burn_in_fraction.clamp(0.0, 1.0)).floor() as usize;
    let t = &traj.times[skip.min(n)..];
    let y = &traj.log_sup_norms[skip.min(n)..];
    if t.len() < MIN_SNAPSHOTS {
        return Err(EvolveError::TooFewSnapshots {
            needed: MIN_SNAPSHOTS,
            have: t.len(),
        });
    }
    let m = t.len() as f64;
    let tm = t.iter().sum::<f64>() / m;
    let ym = y.iter().sum::<f64>() / m;
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    Ok(-sxy / sxx)
}
