//! Identification of a convex acceleration envelope from open-loop
//! simulations of the full vehicle model.

mod fit;
mod hull;
mod sample;

pub use fit::{
    fit_envelope, group_by_speed, EnvelopeFit, FitReport, SpeedGroup, BOUNDARY_RESOLUTION_DEG, HULL_DILATION,
    MIN_HULL_AREA,
};
pub use hull::{ConvexHull, Point};
pub use sample::{
    read_samples, sample_envelope, simulate_sample, write_samples, AccelSample, SampleSet, SAMPLE_DURATION, SPEED_GRID,
};
