//! Isolation policies and closed-loop simulation.

mod bounds;
mod closed_loop;
mod policy;

pub use bounds::{construct_state_bounds, Envelope, Measurement, PerfectSensor, Sensor, StateBounds};
pub use closed_loop::{
    simulate_closed_loop, ClosedLoopConfig, ClosedLoopError, ClosedLoopRun, FeasibilityReport, PolicyTrace,
    FEASIBILITY_TOL,
};
pub use policy::{feasibility_check, optimal_rate, robust_rate, PolicyKind, RateCondition, Stage, SwitchingTimes};
