//! Discrete-event simulation of multiclass queueing networks with LIFO and
//! related service disciplines.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod model;
pub mod observables;
pub mod output;
pub mod stochastics;

pub use error::{Error, Result};
