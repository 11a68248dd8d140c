//! Experiment drivers, configuration handling and the verification
//! suite for the zext simulation toolkit.

pub mod config;
pub mod ensembles;
pub mod output;
pub mod registry;
