//! Sky-image physics: dynamics fields, flow potentials, the Sun streamline,
//! traversal-time model, intersection maps and feature assembly.
//!
//! Grids are indexed `[i, j]` with `i` the row (y) and `j` the column (x).

mod dynamics;
mod features;
mod fields;
pub mod grid_io;
mod helmholtz;
mod optical;
mod probability;
mod reproject;
mod streamline;
mod traversal;

pub use dynamics::{cloud_dynamics, cloud_height, diff_x, diff_y, moist_adiabatic_lapse_rate};
pub use features::{
    assemble_feature_vector, feature_dim, feature_names, FeatureKind, MomentBlocks, LAGS,
};
pub use fields::{ScalarField, Unit, VectorField};
pub use helmholtz::{helmholtz_decompose, reconstruct, FlowPotentials, HELMHOLTZ_TOL};
pub use optical::{optical_flow, OpticalFlow};
pub use probability::{
    inflated_covariance, sun_weight_map, wave_probability, weighted_moments, SunWeightMap,
};
pub use reproject::{reproject_pixels, Reprojection};
pub use streamline::{trace_streamline, Streamline};
pub use traversal::{
    gamma_pdf, gamma_shape, intersection_moments, position_moments, traversal_times,
    HorizonMoments, TraversalTimes, MAX_SHAPE, MIN_SAMPLES,
};
