//! Growth-potential driven shape evolution on a moving 2D domain.
//!
//! A scalar potential is transported, diffused and produced on a deforming
//! triangulated domain; it pulls the domain through a yank that is balanced
//! by a kernel-regularized elastic response. A varifold distance between
//! boundary curves supports inverse experiments on the initial potential.

pub mod config;
pub mod coupling;
pub mod elasticity;
pub mod error;
pub mod geometry;
pub mod io;
pub mod reaction_diffusion;
pub mod rkhs;
pub mod varifold;

pub use config::{parse_config, parse_config_str, write_config};
pub use coupling::{run_simulation, Aborted, Simulation, SimulationConfig, Snapshot, StepReport, Trajectory};
pub use elasticity::ElasticParams;
pub use error::{Error, Result};
pub use geometry::{make_ellipse_mesh, DeformationState, DensityField, Mesh};
pub use reaction_diffusion::{BumpProfile, BumpShape, DiffusionSpec};
pub use rkhs::{KernelSpec, VelocityField};
pub use varifold::{grid_search_center, varifold_distance, Curve, GridSearch, VarifoldSpec};
