//! Stability of classifier domains at finite precision.
//!
//! A classifier partitions a metric space into labeled sets. This crate
//! tests, point by point, whether small balls around a point stay inside
//! its set with its label, using sampling on continuous spaces and exact
//! enumeration on finite ones, and cross-checks the answers against
//! brute-force oracles.

pub mod classifier;
pub mod error;
pub mod external;
pub mod metric;
pub mod oracle;
pub mod precision;
pub mod report;
pub mod scenario;
pub mod series;
pub mod sets;
pub mod stability;

pub use classifier::{check_classifier_axioms, AxiomClause, AxiomReport, Classifier, Label, LabelOracle};
pub use error::{Error, Result};
pub use metric::{derive_rng_stream, distance, sample_ball, Bounds, Metric, Point, RngStream, Space};
pub use sets::{is_dense_at_resolution, AxisBox, DensityVerdict, DomainSet, IndexPredicate, Lattice};
pub use stability::{Clause, Mode, Outcome, OutcomeKind, ProbeConfig, Verdict};
