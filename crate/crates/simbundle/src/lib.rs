//! Simplified bundle method for nonsmooth, nonconvex, equality- and
//! box-constrained optimization with upper-C² objectives.

pub mod bundle;
pub mod cli;
pub mod error;
pub mod io;
pub mod model;
pub mod qp;
pub mod reference;
pub mod registry;
pub mod restoration;
pub mod twostage;

pub use error::{Error, Result};
