//! Reduced-order spectral operator learning for spatio-temporal problems on
//! unstructured meshes.
//!
//! The pipeline: assemble discrete Laplacians on a triangle mesh ([`mesh`]),
//! compute spectral bases ([`spectral`]) or data-driven POD bases
//! ([`reduction`]), convert unequal-domain operator-learning problems into
//! same-domain ones with the unequal-domain encoder/decoder ([`reduction`]),
//! and train a spectral neural operator on the transformed mapping
//! ([`norm`], [`train`]). Desk-scale heat and wave datasets come from
//! [`datagen`]; [`baselines`] holds the PCA-based comparison method and the
//! singular-value decay analysis; [`metrics`] the evaluation metrics;
//! [`container`] and [`config`] the on-disk formats.

// index-based loops are the house style for the numeric kernels
#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod config;
pub mod container;
pub mod datagen;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod metrics;
pub mod norm;
pub mod reduction;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
