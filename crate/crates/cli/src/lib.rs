//! Operational surface of the equilibrium solver: JSON game configurations
//! in; solved-equilibrium artifacts, CSV reports and DOT graphs out.

pub mod artifact;
pub mod config;
pub mod report;
