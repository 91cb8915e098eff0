//! Multi-treatment uplift modeling toolkit.
//!
//! Estimates the conditional average treatment effect (CATE)
//! τ_t(x) = E[Y(t) − Y(0) | X = x] for each of K treatments with S-, T- and
//! X-meta-learners over linear base learners, optionally wraps the outcome
//! models in cross-fitted isotonic calibration, picks one offer per customer
//! by direct rank comparison or Z-score standardization, and evaluates the
//! resulting policies with uplift curves, AUUC, quantile lift and
//! ground-truth policy value on synthetic campaigns.
//!
//! Everything is deterministic: all randomness flows from explicit seeds
//! through ChaCha8 streams, so repeated runs produce bit-identical artifacts.
//!
//! Pipeline overview:
//!
//! ```text
//! datagen::default_campaign ──► dataset ──► metalearn::fit_multi_treatment
//!                                               │ (baselearn, calibrate)
//!                                               ▼
//!                              selection ◄── UpliftScores
//!                                  │
//!                                  ▼
//!                              evaluate (AUUC, lift, policy value)
//! ```

pub mod baselearn;
pub mod calibrate;
pub mod dataset;
pub mod datagen;
pub mod evaluate;
pub mod metalearn;
pub mod selection;

mod error;
mod io;

pub use error::{Error, Result};
