//! Data pipelines: the synthetic GP+sine task and the trajectory task.

pub mod synthetic;
pub mod trajectory;
