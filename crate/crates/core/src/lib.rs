//! Graph neural networks that score how socially disturbing a robot pose is.
//!
//! A [`scenario::Scenario`] (robot, room walls, humans, objects and their
//! interactions) is turned into a typed graph by [`graph`], fed through a stack
//! of message-passing layers from [`gnn`], and read out at the robot node as a
//! score in `[0, 1]` where 1 means fully socially compliant.

pub mod evaluation;
pub mod gnn;
pub mod graph;
pub mod heatmap;
pub mod numeric;
pub mod scenario;
pub mod training;
