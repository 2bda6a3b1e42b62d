//! Flicker removal for event-camera streams.
//!
//! Fluorescent lighting driven by a 50 Hz supply floods an event camera with
//! polarity events at 100 Hz and its harmonics. This crate realizes a
//! feed-forward/feedback comb-filter cascade as a per-pixel discrete-event
//! system that notches out the whole harmonic family of a base frequency
//! while leaving broadband scene activity intact.
//!
//! The workspace is organized around five library modules:
//!
//! * [`event`] — event types, the on-disk text format, parsing and validation
//! * [`comb`] — the event-driven filter core (delay queues + threshold sampler)
//! * [`spectral`] — analytic transfer functions, Bode tables, ZOH
//!   reconstruction and periodogram PSD estimation
//! * [`synth`] — labeled synthetic scenes with a flickering region and a
//!   moving foreground object
//! * [`metrics`] — SNR accounting and per-pixel event-rate maps
//!
//! All numeric code is generic over the scalar type through the [`Real`]
//! trait; `f64` aliases are provided at the crate root.

// Validation guards are written as `!(x > 0)` on purpose: the negation is
// false for NaN, so NaN inputs are rejected along with out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub mod comb;
pub mod event;
pub mod metrics;
pub mod spectral;
pub mod synth;

/// Floating point scalar: f32 or f64.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + FromStr + Display + Debug + Copy + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

pub use comb::{filter_stream, FilterBank, FilterConfig, PixelFilterState};
pub use event::{Event, Label, LabeledEvent, PixelRect, SensorGeometry};

/// Concrete double-precision aliases for the common case.
pub type Event64 = Event<f64>;
pub type LabeledEvent64 = LabeledEvent<f64>;
pub type FilterConfig64 = FilterConfig<f64>;
pub type FilterBank64 = FilterBank<f64>;
