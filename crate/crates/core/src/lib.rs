//! Blockwise sparsely braided convolutional codes (SBCCs) with sliding
//! window decoding.
//!
//! The crate contains the rate-1/3 continuous encoder built from two
//! cross-coupled rate-2/3 RSC component codes, a BPSK/AWGN channel model, a
//! sliding window decoder with window extension, encoder/decoder
//! resynchronization and a soft-BER stopping rule, and a Monte Carlo
//! simulator that produces BER/BLER/FER reports.

pub mod channel;
pub mod encoder;
pub mod permutor;
pub mod rsc;
pub mod sim;
pub mod window;

mod error;

pub use error::Error;

/// A hard bit, always 0 or 1.
pub type Bit = u8;

/// Log-likelihood ratio `ln(P(0) / P(1))`.
pub type Llr = f64;

/// Magnitude bound applied to every stored LLR.
pub const L_MAX: Llr = 50.0;
