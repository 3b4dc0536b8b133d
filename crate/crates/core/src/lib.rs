//! Deterministic SIMT fault-injection simulator.
//!
//! The crate models instruction-level transient faults in GPU warps and
//! measures how they propagate through tiled GEMM kernels and a small
//! GEMM-backed detection network:
//!
//! - [`numerics`]: bit-exact binary16/binary32 arithmetic and the 4×4 MMA unit.
//! - [`simt`]: warp interpreter for software-FMA and tensor-core GEMM kernels.
//! - [`fault`]: fault models, site sampling, payload mutation, ECC filter.
//! - [`analysis`]: output diffing, error geometry, outcome statistics, FIT.
//! - [`nn`]: im2col convolution network, detection decode, SDC criticality.
//! - [`experiment`]: one-injection pipeline shared by campaign drivers.
//!
//! Everything here is `no_std` + `alloc`; IO lives in the `warpfi` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod fault;
pub mod nn;
pub mod numerics;
pub mod rng;
pub mod simt;

pub use error::{Error, Result};
