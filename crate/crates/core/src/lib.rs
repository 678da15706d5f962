//! Capacity-aware location recommendation from mobile-phone mobility logs.
//!
//! The pipeline runs in stages, one module each:
//!
//! * [`ingest`] parses call-detail records and tower metadata into per-user
//!   trajectories and visit profiles.
//! * [`network`] holds the road graph, free-flow routing and the BPR
//!   volume-delay curve.
//! * [`demand`] turns trajectories into hourly O-D matrices, loads them onto
//!   links and scales them to vehicle flows with traffic counts.
//! * [`preference`] fits a latent-factor model to visit frequencies.
//! * [`optimizer`] assigns each traveler a `(location, slot)` bundle that
//!   maximizes total preference under link capacity limits.
//! * [`nextloc`] predicts the next location from a visit history.
//! * [`scenario`] simulates partial compliance and sweeps the trade-off
//!   between satisfaction and congestion.
//! * [`synthetic`] generates a small city with known ground truth.

pub mod demand;
pub mod ingest;
pub mod network;
pub mod nextloc;
pub mod optimizer;
pub mod preference;
pub mod rng;
pub mod scenario;
pub mod synthetic;
