//! Active learning under class imbalance and label noise by locating, for
//! every class, the threshold in its margin-sorted list that best separates it
//! from the rest, then annotating on both sides of that threshold.
//!
//! The crate is organised bottom-up:
//!
//! - [`pool`]: examples, the persistent noisy label channel and the label store.
//! - [`scorer`]: a linear softmax scorer and per-class sorted views.
//! - [`reduction`]: threshold hypotheses, cumulative-sum losses, threshold estimators.
//! - [`vreduce`]: version-space reduction for one class.
//! - [`direct`]: the two-phase round (locate, then annotate around the threshold).
//! - [`baselines`]: random, confidence, most-likely-positive and bisection strategies.
//! - [`engine`]: a resumable experiment that yields one annotation batch at a time.
//! - [`harness`]: configuration, metrics, logs, reports, verification and timing.
//!
//! Class ids are zero-based inside the crate. Files, CSV columns and the HTTP
//! API use one-based class ids.

pub mod baselines;
pub mod direct;
pub mod engine;
pub mod error;
pub mod harness;
pub mod pool;
pub mod reduction;
pub mod rng;
pub mod scorer;
pub mod vreduce;

pub use error::{Error, Result};
pub use pool::{ClassId, Example, LabelStore, Pool};
