//! Link-level simulation of differential chaos shift keying (DCSK) and its
//! multi-carrier variant (MC-DCSK) over AWGN.
//!
//! * [`chaos`]: chaotic spreading sequences.
//! * [`modem`]: framing, spreading-factor budget and correlator decoding.
//! * [`waveform`]: SRRC chip shaping, subcarrier modulation, matched filtering
//!   and PSD estimation.
//! * [`channel`]: AWGN, Eb/N0 calibration and energy bookkeeping.
//! * [`montecarlo`]: BER experiments.
//! * [`cli`]: configuration files, CSV outputs and the command implementations.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaos;
pub mod channel;
pub mod cli;
pub mod error;
pub mod modem;
pub mod montecarlo;
pub mod waveform;

pub use error::{Error, Result};
