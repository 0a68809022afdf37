//! Decentralized, RTT-based location verification.
//!
//! The crate covers the full pipeline: beacon-seeded symmetric measurement
//! scheduling, a distance/latency propagation model, trilateration, zone
//! verification over a sampling grid, per-node confidence scores, an attack
//! engine for colluding adversaries, and a seeded experiment harness.
//!
//! ```
//! use geoverify::geo::{great_circle_distance, GeoPoint};
//! let paris = GeoPoint::new(48.8566, 2.3522).unwrap();
//! let berlin = GeoPoint::new(52.52, 13.405).unwrap();
//! assert!((great_circle_distance(paris, berlin) - 878.0).abs() < 1.0);
//! ```

pub mod adversary;
pub mod codec;
pub mod confidence;
pub mod error;
pub mod geo;
pub mod harness;
pub mod ingest;
pub mod localize;
pub mod netgen;
pub mod propagation;
pub mod schedule;
pub mod seed;
pub mod zoneverify;

pub use adversary::{AttackConfig, ManipulationClass};
pub use confidence::{ConfidenceResult, Decision};
pub use error::{Error, Result};
pub use geo::{great_circle_distance, BBox, GeoPoint, Zone, ZoneMap};
pub use harness::{DecisionOutcome, ExperimentConfig, ExperimentReport};
pub use localize::LocalizationEstimate;
pub use netgen::{Annotation, MeasurementSet, Network, NodeDescriptor};
pub use propagation::{PropagationModel, PropagationSample, C_KM_PER_MS, MAX_SPEED_KM_PER_MS};
pub use schedule::{Beacon, ReferenceSchedule};
pub use zoneverify::{TargetArea, ZoneScoreTable};
