//! Technical-noise heating budgets for surface-electrode ion traps.
//!
//! Layers, bottom up: electrode [`geometry`], analytic [`fields`], the
//! pseudopotential [`trap`] model, [`noise`] spectra and transfer chains,
//! [`heating`] rate models, straight-line [`fit`]s, stochastic dynamics in
//! [`oracle`], and synthetic experiments in [`synth`].
//!
//! Formula layers are generic over the scalar type through [`num::Real`]. The
//! aliases below name the `f64` instantiations used by the rest of the crate.

pub mod constants;
pub mod error;
pub mod fields;
pub mod fit;
pub mod geometry;
pub mod heating;
pub mod noise;
pub mod num;
pub mod oracle;
pub mod reproduce;
pub mod synth;
pub mod trap;

pub use error::{Error, Result};

pub type Layout = geometry::ElectrodeLayout<f64>;
pub type Spectrum = noise::NoiseSpectrum<f64>;
pub type Chain = noise::TransferChain<f64>;
pub type Species = heating::IonSpecies<f64>;
pub type Dataset = fit::HeatingDataset<f64>;
pub type Fit = fit::FitResult<f64>;
