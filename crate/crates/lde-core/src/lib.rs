//! Latent disentangle-based low-light enhancement, built from scratch.
//!
//! The crate contains everything needed to train and run the network on a
//! CPU: a dense-tensor reverse-mode autodiff engine ([`tape`]), the
//! transposed-attention building blocks ([`blocks`]), the disentanglement /
//! reconstruction / enhancement models ([`model`]), training objectives and
//! image metrics ([`loss`]), the two-stage training loop ([`train`]),
//! synthetic paired data ([`data`]) and a bit-exact checkpoint codec
//! ([`checkpoint`]).
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature; all transcendental math goes through `libm` so outputs are
//! bit-identical across platforms and across the two build modes. File and
//! terminal I/O live in the companion `lde-cli` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod blocks;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod optim;
pub mod params;
pub mod real;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
pub use rng::Rng;
pub use tape::{Tape, Var};
pub use tensor::Tensor;
