//! Nonlinear and quantized consensus protocols on weighted digraphs, with
//! Filippov solutions, exact set-valued right-hand sides and an event-driven
//! integrator that resolves sliding motion.

pub mod graph;
pub mod lp;
pub mod dynamics;
pub mod analysis;
pub mod integrator;
pub mod nonlinear;
pub mod scenario;
