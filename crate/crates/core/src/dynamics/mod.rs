//! Nine degree-of-freedom vehicle simulator.
//!
//! Planar CoM motion and yaw, roll and pitch of the body, and the spin of the
//! four wheels. Normal loads follow the suspension deflection produced by roll
//! and pitch; tire forces come from a reduced combined-slip Magic Formula.
//!
//! The fixed-step integrator is stable for the 1 ms plant step as long as the
//! vehicle moves faster than about 2 m/s; below that the regularized slip
//! stiffness makes the wheel modes too fast.

mod model;
mod params;
mod tire;

pub use model::{
    body_accelerations, normal_loads, simulate, slip_angles, state_derivative, step, tire_states, ControlInput,
    TireState, VehicleState, MAX_STEP, STATE_DIM,
};
pub use params::{AxleTire, MagicFormula, TireParams, VehicleParams};
pub use tire::{slip_ratio, tire_forces, SLIP_SPEED_EPS};
