//! Cooperative multi-principal IAM enumeration.
//!
//! The crate is organized around one pipeline: credentials become
//! [`session::Session`]s against an [`backend::ApiBackend`], the
//! [`engine`] drives enumeration workers that merge findings into a shared
//! per-account store, [`deepenum`] contributes the version-fuzzing /
//! inverse-enumeration / sweep capabilities, [`intel`] annotates the
//! resulting [`report::VisionReport`]s, and [`bench`] replays the shipped
//! scenario fixtures against known ground truth and scores the coverage.

pub mod backend;
pub mod bench;
pub mod deepenum;
pub mod engine;
pub mod fixture;
pub mod intel;
pub mod report;
pub mod session;

pub use backend::{ApiBackend, ApiError, FixtureBackend};
pub use engine::{EnumerationMode, RunOptions};
pub use report::VisionReport;
