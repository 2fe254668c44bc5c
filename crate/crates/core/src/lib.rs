pub mod acs;
pub mod canon;
pub mod cli;
pub mod conesolver;
pub mod expr;
pub mod problem;
pub mod transform;
pub mod verify;
