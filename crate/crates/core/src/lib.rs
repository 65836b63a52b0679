//! Two-layer predictive charging for workplace EV stations.
//!
//! An adaptive kernel-density load predictor feeds a dynamic-programming
//! economic layer that caps grid power per charge cycle under time-of-use
//! prices; a priority scheduler then switches ports ON/OFF under that cap,
//! and EVs charge through a tapered BMS model.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is off.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod battery;
pub mod economic;
pub mod error;
pub mod predictor;
pub mod scheduler;
pub mod sessions;
pub mod simulator;

pub use error::{Error, Result};
