//! Estimation core for household-finance panel studies.
//!
//! The crate is `no_std` (it needs `alloc`). It holds the panel container and
//! its sample-construction rules ([`panel`]), portfolio and inclusion measures
//! ([`indices`]), nuisance learners with cross-fitting ([`learners`]),
//! fixed-effects / IV baselines ([`linear`]), double machine learning for the
//! partially linear model ([`dml`]) and its dynamic, multi-period extension
//! ([`ddml`]). [`synthetic`] provides data generators with known effects.
//!
//! File formats, configuration and the command-line front end live in the
//! companion `panel-dml` crate.

#![no_std]

extern crate alloc;

pub mod ddml;
pub mod dml;
pub mod error;
pub mod indices;
pub mod learners;
pub mod linalg;
pub mod linear;
pub mod panel;
pub mod rng;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use panel::PanelDataset;
