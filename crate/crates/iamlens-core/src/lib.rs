//! Domain model and policy evaluator for AWS-style IAM accounts.
//!
//! Everything in this crate is pure data and pure functions: ARN parsing,
//! wildcard pattern matching, the JSON policy grammar, the three-outcome
//! decision engine (explicit deny > allow > implicit deny), account
//! snapshots with group inheritance, and semantic diffing of policy
//! versions. No IO, no clocks, no global state; all types are immutable
//! values once constructed and safe to share across threads.
//!
//! The crate is `no_std` + `alloc` so the evaluator can be embedded in
//! constrained hosts; the `std` feature (default) only forwards to serde.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod account;
pub mod arn;
pub mod diff;
pub mod eval;
pub mod pattern;
pub mod policy;

pub use account::{AccountSnapshot, IamGroup, IamRole, IamUser, ManagedPolicy, UnknownPrincipal};
pub use arn::{Arn, MalformedArn};
pub use diff::{diff_versions, expand_document, PrivilegeTriple, VersionDiff};
pub use eval::{evaluate, Decision};
pub use pattern::pattern_match;
pub use policy::{Effect, PolicyDocument, PolicyStatement, PrincipalMatcher};
