pub mod action;
pub mod bundled;
pub mod engine;
pub mod eval;
pub mod model;
pub mod synth;
pub mod task_assessment;
pub mod telemetry;
