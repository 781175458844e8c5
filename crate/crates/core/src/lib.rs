//! Principal eigenvalue computations for a road–field reaction–diffusion
//! system: a line `y = 0` with fast diffusion coupled to two half-planes.

pub mod analysis;
pub mod assembly;
pub mod cli;
pub mod coeffexpr;
pub mod eigsolve;
pub mod evolve;
pub mod grid;
pub mod rayleigh;
pub mod sparse;

pub use assembly::{
    assemble, assemble_symmetric, AssemblyOptions, DriftScheme, FieldParams, ProblemParams,
    RoadParams, SystemMatrix,
};
pub use coeffexpr::{CoefficientField, Expr};
pub use eigsolve::{principal_eig, EigenResult, SolverConfig};
pub use grid::{Component, Shape, Side, TruncatedGrid};
