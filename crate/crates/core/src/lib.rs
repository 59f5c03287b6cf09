//! Rolling-horizon MRP simulation under periodically updated demand
//! forecasts.
//!
//! A discrete-event job shop (eight final products, two components, six
//! machines) is planned every period by MRP (netting, lot sizing, backward
//! scheduling, BOM explosion) against forecasts that evolve additively
//! until their due date. Planning can use standard netting or the safety
//! stock exploitation variant, which nets against zero instead of the
//! safety stock for periods already covered by a released order.
//!
//! The planning arithmetic ([`mrp`]) and the statistics ([`stats`]) are
//! generic over the scalar type; the simulation runs on the concrete
//! aliases below.

pub mod driver;
pub mod error;
pub mod experiment;
pub mod forecast;
pub mod inventory;
pub mod kpi;
pub mod mrp;
pub mod scalar;
pub mod shopfloor;
pub mod stats;
pub mod system;

#[doc(hidden)]
pub mod cli;

pub use error::{Error, Result};
pub use scalar::Quantity;

/// Whole pieces of an item.
pub type Pieces = i64;
/// Simulation time and durations.
pub type Minutes = f64;
/// Cost units.
pub type Cost = f64;
/// Period (day) index; signed so that backward scheduling may go negative.
pub type Period = i64;

pub const MINUTES_PER_PERIOD: Minutes = 1440.0;

/// Net requirement computed on whole pieces.
pub type PieceLot = mrp::PlannedLot<Pieces>;
/// Welch test on `f64` samples.
pub type WelchTestF64 = stats::WelchTest<f64>;
