//! Outage analysis and simulation of relay selection with power-splitting
//! energy harvesting relays.
//!
//! A source reaches a destination through one of `N` amplify- or
//! decode-and-forward relays. Each relay splits received power between
//! harvesting and information processing; the schemes differ in how the
//! split is chosen and whether harvested energy can be stored.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod specfun;
pub mod oracle;
pub mod model;
pub mod schemes;
pub mod analytic;
pub mod mc;
pub mod cli;

pub use model::{AfGain, ChannelDraw, DerivedThresholds, ModelError, RngStream, SystemParams};
pub use schemes::{RelayBatteryState, SchemeKind, SelectionResult};
