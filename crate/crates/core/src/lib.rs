pub mod attention;
pub mod behavior;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod numcheck;
pub mod planner;
pub mod scenario;
pub mod scene;
pub mod volume;
