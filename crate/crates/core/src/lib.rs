//! Passive admittance control: manipulator models, controllers, contact
//! environments, a two-rate simulator and trace analysis.

pub mod analysis;
pub mod control;
pub mod dynamics;
pub mod environment;
pub mod sim;
pub mod cli;
pub mod scenario;
pub mod trace_csv;
