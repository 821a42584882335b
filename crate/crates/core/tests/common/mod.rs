//! Helpers shared by the integration tests and the acceptance target.
#![allow(dead_code)]

pub mod checks;
pub mod fixtures;
pub mod fuzz;
pub mod gen;
pub mod oracle;
pub mod playthrough;
pub mod server;
