//! Multi-label multi-class intent detection with a pointer-network decoder.
//!
//! Pipeline: [`corpus`] synthesizes multi-intent examples from single-intent
//! pools grouped by a [`taxonomy`], [`model`] encodes tokens and decodes
//! spans plus coarse/fine labels per intent slot, [`train`] fits it with the
//! loss in [`objective`], and [`eval`] scores predictions.

pub mod autograd;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod objective;
pub mod taxonomy;
pub mod train;

pub use error::{Error, Result};
