//! Numerical and Monte-Carlo laboratory for subcritical superprocesses on a
//! finite type space.
//!
//! A model is a rate matrix for the spatial motion together with a
//! per-type branching mechanism
//!
//! ```text
//! psi(x, z) = -beta(x) z + sigma(x)^2 z^2 + ∫ (e^{-zu} - 1 + zu) pi(x, du)
//! ```
//!
//! The crate computes the deterministic objects attached to such a model
//! (mean semigroup and its Perron triplet, the cumulant flow `V_t f`, the
//! extinction functional `v_t`, the L log L functional and the survival
//! constant `K`), simulates the measure-valued process as a multitype
//! jump-diffusion, and estimates the conditioned laws: conditioning on
//! survival, the Yaglom limit, the Q-process obtained by the
//! `X_t(phi) / (e^{lambda t} mu(phi))` change of measure, and its spine
//! decomposition.
//!
//! Module map:
//!
//! * [`model`]: model specification, validation, jump-measure families.
//! * [`spectral`]: eigen-triplet, remainder profile, spine generator, L log L functional.
//! * [`cumulant`]: cumulant flow, extinction curve, Laplace functionals, `K`.
//! * [`simulate`]: seeded path ensembles and moment/martingale checks.
//! * [`qprocess`]: conditioned laws and limit diagnostics.
//! * [`spine`]: spine decomposition sampler and `K` by immigration.
//! * [`lab`]: manifests, result store, CLI dispatch and the acceptance runner.

pub mod cumulant;
pub mod error;
pub mod lab;
pub mod model;
pub mod ode;
pub mod qprocess;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod spectral;
pub mod spine;
pub mod stats;

pub use error::{LabError, Result};
pub use model::{FunctionVector, JumpMeasureSpec, MeasureVector, ModelSpec};
pub use spectral::EigenTriplet;
