//! Model-independent price bounds from discrete martingale optimal transport.
//!
//! Marginal laws are implied from call quotes ([`market_data`]), the bounds
//! are linear programs over martingale couplings ([`mot`]) solved by the
//! in-crate simplex ([`lp`]), and [`hedging`] / [`analysis`] evaluate the
//! resulting semi-static sub-hedges and the effect of adding intermediate
//! marginals.

pub mod analysis;
pub mod error;
pub mod hedging;
pub mod lp;
pub mod market_data;
pub mod measures;
pub mod mot;

pub use error::{Error, Result};
pub use measures::DiscreteMeasure;
