//! Reference paths, local polynomial fits and obstacle constraints.

mod obstacle;
mod path;
mod window;

pub use obstacle::{
    build_parabola, min_margin, relevant_obstacles, Obstacle, ObstacleParabola, ObstacleSpec, PassSide, CLEARANCE,
};
pub use path::{
    reference_segments, wrap_angle, PathPoint, Projection, RefPath, Segment, MAX_PROJECTION_DISTANCE, PATH_SPACING,
};
pub use window::{poly_eval, PathWindow, CURVATURE_SAMPLES, MIN_WINDOW_LENGTH};
