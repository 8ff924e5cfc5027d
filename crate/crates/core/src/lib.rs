//! Learning beam search policies by imitation.
//!
//! The crate trains a linear scoring function by running beam search at
//! train time, collecting per-beam surrogate losses along the visited beam
//! trajectory, and updating the parameters with a deterministic online
//! learner. Brute-force oracles and regret diagnostics live next to the
//! training code so every construction can be checked at small scale.
//!
//! Module map:
//!
//! - [`search_space`]: tree-structured search spaces, completion costs and
//!   conversions from arbitrary graphs.
//! - [`beam`]: beams, neighborhood expansion, beam policies and decoding.
//! - [`scoring`]: parameters, sparse features and the linear scorer.
//! - [`losses`]: the surrogate loss catalog with score subgradients.
//! - [`collection`]: beam trajectories under the data collection strategies.
//! - [`learner`]: the online training loop, optimizers and diagnostics.
//! - [`task`]: the synthetic sequence labeling task with Hamming cost.
//! - [`oracles`]: exhaustive reference computations used for verification.
//! - [`verify`]: the verification suite driven by `beamlearn check`.

pub mod beam;
pub mod collection;
pub mod error;
pub mod learner;
pub mod losses;
pub mod oracles;
pub mod scoring;
pub mod search_space;
pub mod task;
pub mod verify;

pub use error::{Error, Result};
