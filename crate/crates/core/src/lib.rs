//! Capacity bidding and dispatch for hybrid energy systems (generator,
//! battery and controllable load behind one interconnection) that sell
//! frequency regulation.
//!
//! * [`model`]: asset parameters, SoC recursion, feasibility checks.
//! * [`signal`]: regulation-signal ingestion, statistics and synthesis.
//! * [`controller`]: the real-time dispatch rule.
//! * [`offline`]: the perfect-information dispatch benchmark.
//! * [`scoring`]: performance score and revenue.
//! * [`bidding`]: chance-constrained bid selection.

pub mod bidding;
pub mod controller;
pub mod fmt;
pub mod model;
pub mod offline;
pub mod scoring;
pub mod signal;

pub use controller::{rt_dispatch, DispatchTrace};
pub use model::{DispatchStep, HesConfig, SocState};
pub use signal::{RegSignal, SignalArchive};
