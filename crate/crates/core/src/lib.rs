//! Transmission CT reconstruction by alternating minimization of the
//! I-divergence between measured counts and Beer's-law means.
//!
//! Two solvers share one forward model:
//!
//! * [`am::AlternatingMinimization`] updates every voxel each iteration;
//! * [`wam::WaveletAm`] updates orthonormal Haar coefficients of each slice,
//!   restricted to an active quadtree ([`tree::ActiveTree`]) that starts at
//!   the coarsest approximation band and grows where the image is bright.
//!
//! Supporting pieces: an exact ray/voxel intersection projector
//! ([`projector`]), piecewise-constant phantoms and Poisson simulation
//! ([`phantom`]), and the convergence log format ([`record`]).

pub mod am;
pub mod columns;
pub mod error;
pub mod geometry;
pub mod haar;
pub mod model;
pub mod phantom;
pub mod projector;
pub mod record;
pub mod tree;
pub mod wam;

pub use am::{AlternatingMinimization, AmOptions, AmState};
pub use columns::{SparseColumn, WaveletSystemColumns};
pub use error::{Error, Result};
pub use geometry::{Beam, ImageGrid, Ray, ScanGeometry};
pub use haar::{
    basis_footprint, dwt2, idwt2, CoeffIndex, CoefficientLayout, Subband, WaveletCoefficients,
};
pub use model::{i_divergence, predicted_means, AttenuationImage, ClampReport, TransmissionData};
pub use phantom::{
    rasterize_phantom, simulate_counts, IncidentCounts, PhantomSpec, Primitive, Shape,
    SimulationSpec,
};
pub use projector::{build_system_matrix, trace_ray, SystemMatrix};
pub use record::ConvergenceRecord;
pub use tree::{expand_tree, ActiveTree, Expansion};
pub use wam::{
    solve_coefficient_update, surrogate_gradient, CoefficientUpdate, ExpansionEvent,
    ExpansionSchedule, WamRun, WamState, WaveletAm,
};
