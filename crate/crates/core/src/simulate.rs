//! Seeded Monte-Carlo simulation of the mass vector `X_t` as a multitype
//! jump-diffusion.
//!
//! One step of length `h` for type `i`, started from masses `m`:
//!
//! * the linear part moves mass by `M' = exp(h (A + diag(beta - kappa)))`,
//!   where `kappa_i` compensates the large jumps: `m_i M'[i][i]` decays in
//!   place and `Σ_{j != i} m_j M'[j][i]` flows in;
//! * a Gaussian increment of variance `(2 sigma_i^2 + s_i) m_i h`, with `s_i`
//!   the second moment of `pi_i` below the cutoff when small jumps are
//!   approximated by a diffusion, `s_i = 0` when they are dropped;
//! * Poisson many jumps above the cutoff, with mean count chosen so that
//!   their expected mass is `(m (M - M'))_i`, `M = exp(h (A + diag(beta)))`.
//!
//! What type `j` passes on, inflow elsewhere and jumps, is gated on its own
//! part: zero when that part died within the step, so the system can die
//! out, and otherwise scaled by the inverse of its survival probability
//! where that is known. Under [`Scheme::SplitExact`] the step then preserves
//! the mean `m M` exactly for any `h`.
//!
//! A negative proposal is not clamped: the Gaussian increment is split by a
//! Brownian bridge and each half retried, down to a depth limit at which the
//! coordinate is absorbed at 0. A coordinate that starts a step with mass
//! below `10 sigma^2 h` takes the exact one-type step instead, because there
//! the Gaussian kick of order `sqrt(m h)` is not small against `m`. Without
//! this layer a type that died and is refilled by tiny masses from the
//! others gains survival and mean at a rate close to `sqrt(dt)`. For one
//! type the survival bias is about `-dt`.
//!
//! [`Scheme::SplitExact`] replaces the Euler step of the diffusive part by
//! the exact transition of the one-type branching diffusion, so extinction
//! within a step is sampled without discretization error and the mean
//! stays exact for any number of types.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::model::{pair, validate_model, FunctionVector, MeasureVector, ModelSpec, PiMoment};
use crate::rng;
use crate::spectral::{self, EigenTriplet};
use crate::stats::{self, Estimate};

/// Largest expected number of large jumps per type within one (sub)step.
pub const MAX_STEP_INTENSITY: f64 = 0.1;
/// Negative proposals above this are treated as an exact hit of 0.
const NEGATIVE_TOL: f64 = 1e-12;
/// Depth of the Brownian-bridge refinement of a negative proposal.
const MAX_BRIDGE_DEPTH: u32 = 40;
/// Proposals evaluated while refining one step. With immigration a
/// coordinate near 0 keeps proposing negative values on both halves, so
/// depth alone does not bound the work.
const MAX_BRIDGE_EVALS: u32 = 64;
/// Under Euler, a coordinate starting a step below this multiple of
/// `sigma^2 h` takes the exact one-type step instead: there the Gaussian
/// kick `sqrt(m h)` is not small against `m`.
const BOUNDARY_LAYER: f64 = 10.0;

const ENSEMBLE_MAGIC: &[u8; 8] = b"LABENS1\0";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SmallJumpMode {
    #[default]
    DiffusionApprox,
    Drop,
}

fn default_cutoff() -> f64 {
    1e-2
}

fn default_fluid_mass() -> f64 {
    1e9
}

fn default_budget() -> u64 {
    1 << 20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cutoff")]
    pub small_jump_cutoff: f64,
    #[serde(default)]
    pub small_jump_mode: SmallJumpMode,
    #[serde(default)]
    pub record_times: Vec<f64>,
    /// Above this mass a type's jumps are replaced by their mean.
    #[serde(default = "default_fluid_mass")]
    pub fluid_mass: f64,
    /// Sub-steps allowed within one `dt` step.
    #[serde(default = "default_budget")]
    pub substep_budget: u64,
    #[serde(default)]
    pub allow_null_start: bool,
    #[serde(default)]
    pub scheme: Scheme,
}

/// Time-stepping scheme for the continuous part of the branching.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    /// Euler step with Brownian-bridge refinement of negative proposals.
    #[default]
    Euler,
    /// Exact one-type branching-diffusion transition per type, with the
    /// inflow from other types and the jumps added by splitting.
    SplitExact,
}

impl SimConfig {
    pub fn new(dt: f64, n_paths: usize, seed: u64, record_times: Vec<f64>) -> Self {
        SimConfig {
            dt,
            n_paths,
            seed,
            small_jump_cutoff: default_cutoff(),
            small_jump_mode: SmallJumpMode::DiffusionApprox,
            record_times,
            fluid_mass: default_fluid_mass(),
            substep_budget: default_budget(),
            allow_null_start: false,
            scheme: Scheme::Euler,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(LabError::InvalidArgument(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.small_jump_cutoff > 0.0) {
            return Err(LabError::InvalidArgument(
                "small_jump_cutoff must be positive".into(),
            ));
        }
        if self.n_paths == 0 {
            return Err(LabError::InvalidArgument("n_paths must be positive".into()));
        }
        if self.record_times.is_empty()
            || self
                .record_times
                .iter()
                .any(|t| !(t.is_finite() && *t >= 0.0))
            || self.record_times.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(LabError::InvalidArgument(
                "record_times must be non-empty, finite, >= 0 and strictly increasing".into(),
            ));
        }
        if !(self.fluid_mass > 0.0) {
            return Err(LabError::InvalidArgument(
                "fluid_mass must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-model constants of the step, shared by all paths.
#[derive(Debug, Clone)]
pub struct Stepper {
    n: usize,
    motion: Vec<Vec<f64>>,
    beta: Vec<f64>,
    jump_rate: Vec<f64>,
    compensator: Vec<f64>,
    variance: Vec<f64>,
    pi: Vec<crate::model::JumpMeasureSpec>,
    cutoff: f64,
    dt: f64,
    fluid_mass: f64,
    budget: u64,
    scheme: Scheme,
    /// Transfers over `dt / 2^p`, `p < CACHED_LEVELS`.
    cache: Vec<Transfer>,
}

/// Sub-step lengths `dt / 2^p` with a precomputed transfer.
const CACHED_LEVELS: usize = 12;
/// Resolution of the dyadic sub-steps of one full step.
const TICKS_PER_STEP: u64 = 1 << 40;

/// Mean transfer over one step of length `h`, indexed `[from][to]`.
#[derive(Debug, Clone)]
struct Transfer {
    h: f64,
    /// `exp(h L')` with the jump compensator inside `L'`.
    cont: Vec<Vec<f64>>,
    /// `exp(h L) - exp(h L')`: the mean mass the jumps must add.
    jumps: Vec<Vec<f64>>,
}

impl Transfer {
    fn new(motion: &[Vec<f64>], beta: &[f64], compensator: &[f64], fluid: &[bool], h: f64) -> Self {
        let n = beta.len();
        let kappa = |i: usize| if fluid[i] { 0.0 } else { compensator[i] };
        let full = DMatrix::from_fn(n, n, |i, j| {
            motion[i][j] + if i == j { beta[i] } else { 0.0 }
        });
        let cont = DMatrix::from_fn(n, n, |i, j| {
            full[(i, j)] - if i == j { kappa(i) } else { 0.0 }
        });
        let (e_full, e_cont) = (spectral::semigroup(&full, h), spectral::semigroup(&cont, h));
        Transfer {
            h,
            cont: (0..n)
                .map(|j| (0..n).map(|i| e_cont[(j, i)]).collect())
                .collect(),
            jumps: (0..n)
                .map(|j| {
                    (0..n)
                        .map(|i| (e_full[(j, i)] - e_cont[(j, i)]).max(0.0))
                        .collect()
                })
                .collect(),
        }
    }
}

impl Stepper {
    pub fn new(spec: &ModelSpec, config: &SimConfig) -> Result<Self> {
        let n = spec.n;
        let a = config.small_jump_cutoff;
        let mut jump_rate = Vec::with_capacity(n);
        let mut compensator = Vec::with_capacity(n);
        let mut variance = Vec::with_capacity(n);
        for x in 0..n {
            let pi = &spec.pi[x];
            let rate = pi.moment(PiMoment::MassAbove(a));
            let comp = pi.moment(PiMoment::FirstMomentAbove(a));
            if !(rate.is_finite() && comp.is_finite()) {
                return Err(LabError::InvalidArgument(format!(
                    "pi[{x}] has infinite mass or first moment above the cutoff {a}"
                )));
            }
            let small = match config.small_jump_mode {
                SmallJumpMode::DiffusionApprox => pi.moment(PiMoment::SecondMomentBelow(a)),
                SmallJumpMode::Drop => 0.0,
            };
            jump_rate.push(rate);
            compensator.push(comp);
            variance.push(2.0 * spec.sigma[x] * spec.sigma[x] + small);
        }
        let cache = (0..CACHED_LEVELS)
            .map(|p| {
                Transfer::new(
                    &spec.motion,
                    &spec.beta,
                    &compensator,
                    &vec![false; n],
                    config.dt / (1u64 << p) as f64,
                )
            })
            .collect();
        Ok(Stepper {
            n,
            motion: spec.motion.clone(),
            beta: spec.beta.clone(),
            jump_rate,
            compensator,
            variance,
            pi: spec.pi.clone(),
            cutoff: a,
            dt: config.dt,
            fluid_mass: config.fluid_mass,
            budget: config.substep_budget,
            scheme: config.scheme,
            cache,
        })
    }

    /// Simulates one path from `m0` at time 0 and appends the state at each
    /// of `times` (non-decreasing, `>= 0`) to `out`.
    pub fn run<R: Rng + ?Sized>(
        &self,
        m0: &[f64],
        times: &[f64],
        rng: &mut R,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        let mut m = m0.to_vec();
        let mut next = vec![0.0; self.n];
        let mut t = 0.0;
        for &target in times {
            if target > t {
                self.advance_with(&mut m, &mut next, target - t, None, rng)
                    .map_err(|e| e.context(format!("path segment ending at t = {target}")))?;
                t = target;
            }
            out.extend_from_slice(&m);
        }
        Ok(())
    }

    /// Advances `m` over `span` in place. `immigration`, when given, adds
    /// mass to type `x` at constant rate `immigration[x]`.
    pub fn advance<R: Rng + ?Sized>(
        &self,
        m: &mut Vec<f64>,
        span: f64,
        immigration: Option<&[f64]>,
        rng: &mut R,
    ) -> Result<()> {
        let mut next = vec![0.0; self.n];
        self.advance_with(m, &mut next, span, immigration, rng)
    }

    fn advance_with<R: Rng + ?Sized>(
        &self,
        m: &mut Vec<f64>,
        next: &mut Vec<f64>,
        span: f64,
        immigration: Option<&[f64]>,
        rng: &mut R,
    ) -> Result<()> {
        let immigration = immigration.filter(|im| im.iter().any(|&r| r > 0.0));
        let mut t = 0.0;
        while t < span {
            if immigration.is_none() && m.iter().all(|&x| x == 0.0) {
                return Ok(());
            }
            let rest = span - t;
            // a remainder within rounding of dt is a full step
            let full = rest >= self.dt * (1.0 - 1e-9);
            let end = if full && rest > self.dt * (1.0 + 1e-9) {
                t + self.dt
            } else {
                span
            };
            if full {
                // pieces are dt / 2^k, counted in ticks so that they hit the
                // cached transfers exactly
                let mut left = TICKS_PER_STEP;
                let mut used = 0u64;
                while left > 0 {
                    let intensity = self.intensity(m);
                    let mut piece = 1u64 << (63 - left.leading_zeros());
                    while piece > 1
                        && intensity * self.dt * (piece as f64 / TICKS_PER_STEP as f64)
                            > MAX_STEP_INTENSITY
                    {
                        piece >>= 1;
                    }
                    self.count_substep(&mut used, end, intensity)?;
                    let h = self.dt * (piece as f64 / TICKS_PER_STEP as f64);
                    self.step(m, next, h, immigration, rng);
                    std::mem::swap(m, next);
                    left -= piece;
                }
            } else {
                let mut left = rest;
                let mut used = 0u64;
                while left > 0.0 {
                    let intensity = self.intensity(m);
                    let pieces = (intensity * left / MAX_STEP_INTENSITY).ceil().max(1.0);
                    let h = if pieces == 1.0 { left } else { left / pieces };
                    self.count_substep(&mut used, end, intensity)?;
                    self.step(m, next, h, immigration, rng);
                    std::mem::swap(m, next);
                    left = if h == left { 0.0 } else { left - h };
                }
            }
            t = end;
        }
        Ok(())
    }

    /// Largest expected number of large jumps per unit time over the types.
    fn intensity(&self, m: &[f64]) -> f64 {
        (0..self.n)
            .filter(|&i| m[i] <= self.fluid_mass)
            .map(|i| m[i] * self.jump_rate[i])
            .fold(0.0, f64::max)
    }

    fn count_substep(&self, used: &mut u64, t: f64, intensity: f64) -> Result<()> {
        *used += 1;
        if *used > self.budget {
            return Err(LabError::SubstepBudget {
                t,
                detail: format!(
                    "jump intensity {intensity:e} needs more than {} sub-steps",
                    self.budget
                ),
            });
        }
        Ok(())
    }

    fn step<R: Rng + ?Sized>(
        &self,
        m: &[f64],
        next: &mut [f64],
        h: f64,
        immigration: Option<&[f64]>,
        rng: &mut R,
    ) {
        let any_fluid = m.iter().any(|&x| x > self.fluid_mass);
        let fluid: Vec<bool> = if any_fluid {
            m.iter().map(|&x| x > self.fluid_mass).collect()
        } else {
            Vec::new()
        };
        let owned;
        let tr = match self.cache.iter().find(|t| t.h == h) {
            Some(t) if !any_fluid => t,
            _ => {
                let none = vec![false; self.n];
                owned = Transfer::new(
                    &self.motion,
                    &self.beta,
                    &self.compensator,
                    if any_fluid { &fluid } else { &none },
                    h,
                );
                &owned
            }
        };
        // Each type's own part first. `gate[j]` scales what type j passes on
        // through transfers and jumps: zero when its own part died within
        // the step, so that the system can go extinct, and otherwise the
        // inverse survival probability where that is known, which keeps the
        // mean exact.
        let mut own = vec![0.0; self.n];
        let mut gate = vec![1.0; self.n];
        for i in 0..self.n {
            let imm = immigration.map_or(0.0, |im| im[i]);
            if m[i] == 0.0 && imm == 0.0 {
                continue;
            }
            let rate = tr.cont[i][i].ln() / h;
            let v = self.variance[i];
            let exact = match self.scheme {
                Scheme::SplitExact => true,
                Scheme::Euler => m[i] < BOUNDARY_LAYER * 0.5 * v * h,
            };
            match exact {
                false => {
                    let dw = h.sqrt() * rng.sample::<f64, _>(StandardNormal);
                    let mut evals = MAX_BRIDGE_EVALS;
                    own[i] = Coordinate {
                        rate,
                        inflow: imm,
                        v,
                    }
                    .advance(m[i], h, dw, 0, &mut evals, rng);
                    if own[i] == 0.0 {
                        gate[i] = 0.0;
                    }
                }
                true => {
                    let (x, survive) = feller_step(m[i], -rate, 0.5 * v, imm, h, rng);
                    own[i] = x;
                    gate[i] = match survive {
                        Some(p) if p > 0.0 => 1.0 / p,
                        Some(_) => 0.0,
                        None => 1.0,
                    };
                }
            }
        }
        for i in 0..self.n {
            // what type j passes on besides its own continuous part
            let sent = |j: usize| m[j] * gate[j];
            let inflow: f64 = (0..self.n)
                .filter(|&j| j != i)
                .map(|j| sent(j) * tr.cont[j][i])
                .sum();
            let jump_mass: f64 = (0..self.n).map(|j| sent(j) * tr.jumps[j][i]).sum();
            let jumps = !(any_fluid && fluid[i]) && self.jump_rate[i] > 0.0;
            let mut x = own[i] + inflow;
            if !jumps {
                // jumps of other types that moved here within the step
                x += jump_mass;
            } else if jump_mass > 0.0 {
                let mean_size = self.compensator[i] / self.jump_rate[i];
                for _ in 0..poisson_small(jump_mass / mean_size, rng) {
                    x += self.pi[i].sample_tail(self.cutoff, rng);
                }
            }
            next[i] = x.min(crate::model::MAX_SAMPLED_MASS);
        }
    }
}

/// The continuous part of one coordinate over an interval: linear rate,
/// constant inflow, variance rate `v * mass`.
struct Coordinate {
    rate: f64,
    inflow: f64,
    v: f64,
}

impl Coordinate {
    fn advance<R: Rng + ?Sized>(
        &self,
        m: f64,
        tau: f64,
        dw: f64,
        depth: u32,
        evals: &mut u32,
        rng: &mut R,
    ) -> f64 {
        let x = m * (self.rate * tau).exp() + self.inflow * tau + (self.v * m).sqrt() * dw;
        if x >= 0.0 {
            return x;
        }
        if x >= -NEGATIVE_TOL || depth >= MAX_BRIDGE_DEPTH {
            return 0.0;
        }
        if *evals == 0 {
            // absorbed somewhere in the interval, refilled by the inflow after
            return 0.5 * self.inflow * tau;
        }
        *evals -= 1;
        let half = 0.5 * tau;
        let w_mid = 0.5 * dw + (0.25 * tau).sqrt() * rng.sample::<f64, _>(StandardNormal);
        let mid = self.advance(m, half, w_mid, depth + 1, evals, rng);
        if mid == 0.0 && self.inflow == 0.0 {
            return 0.0;
        }
        self.advance(mid, half, dw - w_mid, depth + 1, evals, rng)
    }
}

/// Exact transition over `h` of the one-type branching diffusion with
/// `psi(z) = b z + c z^2` and immigration at rate `a`: a Poisson(`x u_h`)
/// number of exponential clusters of mean `e^{-bh} / u_h`, where
/// `u_h = b e^{-bh} / (c (1 - e^{-bh}))`, plus a Gamma(`a / c`) immigrant
/// part on the same scale.
fn feller_step<R: Rng + ?Sized>(
    x: f64,
    b: f64,
    c: f64,
    a: f64,
    h: f64,
    rng: &mut R,
) -> (f64, Option<f64>) {
    let bh = b * h;
    // (1 - e^{-bh}) / b, continuous through b = 0
    let span = if bh.abs() < 1e-12 {
        h
    } else {
        -(-bh).exp_m1() / b
    };
    if c == 0.0 {
        return (x * (-bh).exp() + a * span, None);
    }
    if x == 0.0 && a == 0.0 {
        return (0.0, Some(0.0));
    }
    let growth = c * span;
    let clusters = x * (-bh).exp() / growth;
    let n = if x == 0.0 { 0 } else { poisson(clusters, rng) };
    // the initial mass leaves descendants iff some cluster was drawn
    let survive = if n == 0 {
        Some(0.0)
    } else {
        Some(-(-clusters).exp_m1())
    };
    let shape = n as f64 + a / c;
    if shape == 0.0 {
        return (0.0, survive);
    }
    let y = rand_distr::Gamma::new(shape, growth)
        .expect("valid gamma")
        .sample(rng);
    (y, survive)
}

pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean < 10.0 {
        poisson_small(mean, rng)
    } else {
        rand_distr::Poisson::new(mean)
            .expect("finite mean")
            .sample(rng) as u64
    }
}

/// Poisson sample by inversion; intended for small means.
fn poisson_small<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let mut u: f64 = rng.random();
    let mut p = (-mean).exp();
    let mut k = 0;
    while u > p {
        u -= p;
        k += 1;
        p *= mean / k as f64;
        if p == 0.0 {
            break;
        }
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub record_times: Vec<f64>,
    pub n_types: usize,
    /// Path-major, then time, then type.
    pub states: Vec<f64>,
    pub weights: Vec<f64>,
    pub seed: u64,
    pub fingerprint: [u8; 32],
    pub initial: MeasureVector,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.weights.len()
    }

    pub fn n_times(&self) -> usize {
        self.record_times.len()
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.record_times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or(LabError::MissingTime(t))
    }

    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let n = self.n_types;
        let off = (path * self.n_times() + k) * n;
        &self.states[off..off + n]
    }

    pub fn is_alive(&self, path: usize, k: usize) -> bool {
        self.state(path, k).iter().any(|&m| m > 0.0)
    }

    /// `X_t(f)` for every path at time index `k`.
    pub fn values_at(&self, k: usize, f: &[f64]) -> Vec<f64> {
        (0..self.n_paths())
            .map(|p| pair(self.state(p, k), f))
            .collect()
    }

    /// Weighted mean of `X_t(f)`.
    pub fn mean_at(&self, k: usize, f: &[f64]) -> Estimate {
        stats::weighted_mean(&self.values_at(k, f), &self.weights)
    }

    /// Weighted fraction of paths alive at index `k`.
    pub fn survival_at(&self, k: usize) -> Estimate {
        let alive: Vec<f64> = (0..self.n_paths())
            .map(|p| if self.is_alive(p, k) { 1.0 } else { 0.0 })
            .collect();
        stats::weighted_mean(&alive, &self.weights)
    }

    /// The binary format of [`write_binary`](Self::write_binary).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf =
            Vec::with_capacity(80 + 8 * (self.states.len() + self.weights.len() + self.n_times()));
        buf.extend_from_slice(ENSEMBLE_MAGIC);
        buf.extend_from_slice(&self.fingerprint);
        buf.extend_from_slice(&self.seed.to_le_bytes());
        for v in [self.n_types, self.n_paths(), self.n_times()] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for v in self
            .initial
            .masses()
            .iter()
            .chain(&self.record_times)
            .chain(&self.weights)
            .chain(&self.states)
        {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    /// SHA-256 of the binary encoding, hex.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    /// Binary format: magic `LABENS1\0`, 32-byte model fingerprint, seed,
    /// `n_types`, `n_paths`, `n_times` (u64 LE), then f64 LE: initial masses,
    /// record times, weights and the states (path, time, type).
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |what: &str| LabError::Malformed(format!("ensemble file: {what}"));
        if bytes.len() < 72 || &bytes[..8] != ENSEMBLE_MAGIC {
            return Err(bad("bad magic or truncated header"));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let mut fingerprint = [0u8; 32];
        fingerprint.copy_from_slice(&bytes[8..40]);
        let seed = u64_at(40);
        let (n_types, n_paths, n_times) = (
            u64_at(48) as usize,
            u64_at(56) as usize,
            u64_at(64) as usize,
        );
        let count = n_types + n_times + n_paths + n_paths * n_times * n_types;
        if bytes.len() != 72 + 8 * count {
            return Err(bad("length does not match header"));
        }
        let floats: Vec<f64> = bytes[72..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let (initial, rest) = floats.split_at(n_types);
        let (record_times, rest) = rest.split_at(n_times);
        let (weights, states) = rest.split_at(n_paths);
        Ok(PathEnsemble {
            record_times: record_times.to_vec(),
            n_types,
            states: states.to_vec(),
            weights: weights.to_vec(),
            seed,
            fingerprint,
            initial: MeasureVector::new(initial.to_vec())?,
        })
    }

    /// CSV mirror with columns `path,t,weight,m0,..`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,t,weight");
        for x in 0..self.n_types {
            out.push_str(&format!(",m{x}"));
        }
        out.push('\n');
        for p in 0..self.n_paths() {
            for (k, t) in self.record_times.iter().enumerate() {
                out.push_str(&format!("{p},{t},{}", self.weights[p]));
                for m in self.state(p, k) {
                    out.push_str(&format!(",{m:e}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Simulates `config.n_paths` independent paths from `mu0`. Path `p` uses
/// stream `p` of the configured seed, and paths are assembled by index, so
/// the ensemble does not depend on the thread count.
pub fn simulate_ensemble(
    spec: &ModelSpec,
    mu0: &MeasureVector,
    config: &SimConfig,
) -> Result<PathEnsemble> {
    if mu0.len() != spec.n {
        return Err(LabError::InvalidArgument(format!(
            "initial measure has {} types, model has {}",
            mu0.len(),
            spec.n
        )));
    }
    if mu0.is_null() && !config.allow_null_start {
        return Err(LabError::InvalidArgument(
            "initial measure is null (set allow_null_start to permit)".into(),
        ));
    }
    run_paths(spec, |_| mu0.masses(), mu0.clone(), config)
}

/// One path per entry of `starts`, path `p` started from `starts[p]`;
/// `config.n_paths` is ignored. The ensemble's `initial` is the mean start,
/// so first-moment checks apply to the mixture.
pub fn simulate_mixed(
    spec: &ModelSpec,
    starts: &[MeasureVector],
    config: &SimConfig,
) -> Result<PathEnsemble> {
    if starts.is_empty() {
        return Err(LabError::InvalidArgument("no starting measures".into()));
    }
    if starts.iter().any(|m| m.len() != spec.n) {
        return Err(LabError::InvalidArgument(
            "starting measure of the wrong dimension".into(),
        ));
    }
    let k = starts.len() as f64;
    let mean = (0..spec.n)
        .map(|x| starts.iter().map(|m| m.masses()[x]).sum::<f64>() / k)
        .collect();
    let mut cfg = config.clone();
    cfg.n_paths = starts.len();
    run_paths(
        spec,
        |p| starts[p].masses(),
        MeasureVector::from_raw(mean),
        &cfg,
    )
}

fn run_paths<'a, F>(
    spec: &ModelSpec,
    start: F,
    initial: MeasureVector,
    config: &SimConfig,
) -> Result<PathEnsemble>
where
    F: Fn(usize) -> &'a [f64] + Sync,
{
    validate_model(spec)?.into_result()?;
    config.check()?;
    let stepper = Stepper::new(spec, config)?;
    let per_path = config.record_times.len() * spec.n;
    let chunks: Vec<Result<Vec<f64>>> = (0..config.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng::stream(config.seed, p as u64);
            let mut out = Vec::with_capacity(per_path);
            stepper.run(start(p), &config.record_times, &mut rng, &mut out)?;
            Ok(out)
        })
        .collect();
    let mut states = Vec::with_capacity(per_path * config.n_paths);
    for c in chunks {
        states.extend(c?);
    }
    Ok(PathEnsemble {
        record_times: config.record_times.clone(),
        n_types: spec.n,
        states,
        weights: vec![1.0; config.n_paths],
        seed: config.seed,
        fingerprint: spec.fingerprint_bytes(),
        initial,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub t: f64,
    pub target: f64,
    pub estimate: Estimate,
    pub z: f64,
    pub passed: bool,
}

/// Ensemble mean of `X_t(f)` against `mu0(exp(tL) f)`.
pub fn moment_check(
    ensemble: &PathEnsemble,
    spec: &ModelSpec,
    f: &FunctionVector,
    t: f64,
) -> Result<MomentReport> {
    let k = ensemble.time_index(t)?;
    let tt = spectral::semigroup(&spectral::mean_generator(spec), t);
    let tf: Vec<f64> = (0..spec.n)
        .map(|x| (0..spec.n).map(|y| tt[(x, y)] * f.values()[y]).sum())
        .collect();
    let target = pair(ensemble.initial.masses(), &tf);
    let estimate = ensemble.mean_at(k, f.values());
    let z = estimate.z_score(target);
    Ok(MomentReport {
        t,
        target,
        estimate,
        z,
        passed: z <= 3.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleRow {
    pub t: f64,
    /// Mean of `e^{-lambda t} X_t(phi)`.
    pub mean: Estimate,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementRow {
    pub s: f64,
    pub t: f64,
    /// Mean increment of `e^{-lambda t} X_t(phi)`.
    pub increment: Estimate,
    /// Mean of the increment times the centred value at `s`.
    pub covariance: Estimate,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub target: f64,
    pub rows: Vec<MartingaleRow>,
    pub increments: Vec<IncrementRow>,
    pub passed: bool,
}

/// Checks that `e^{-lambda t} X_t(phi)` has constant mean `mu0(phi)` and
/// increments uncorrelated with the value at the earlier time.
pub fn martingale_check(
    ensemble: &PathEnsemble,
    triplet: &EigenTriplet,
) -> Result<MartingaleReport> {
    let target = pair(ensemble.initial.masses(), &triplet.phi);
    let scaled: Vec<Vec<f64>> = ensemble
        .record_times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let g = (-triplet.lambda * t).exp();
            ensemble
                .values_at(k, &triplet.phi)
                .into_iter()
                .map(|v| v * g)
                .collect()
        })
        .collect();
    let w = &ensemble.weights;
    let rows: Vec<MartingaleRow> = ensemble
        .record_times
        .iter()
        .zip(&scaled)
        .map(|(&t, ys)| {
            let mean = stats::weighted_mean(ys, w);
            MartingaleRow {
                t,
                mean,
                z: mean.z_score(target),
            }
        })
        .collect();
    let mut increments = Vec::new();
    for k in 1..scaled.len() {
        let d: Vec<f64> = scaled[k]
            .iter()
            .zip(&scaled[k - 1])
            .map(|(b, a)| b - a)
            .collect();
        let m_prev = stats::weighted_mean(&scaled[k - 1], w).value;
        let cross: Vec<f64> = d
            .iter()
            .zip(&scaled[k - 1])
            .map(|(di, a)| di * (a - m_prev))
            .collect();
        let increment = stats::weighted_mean(&d, w);
        let covariance = stats::weighted_mean(&cross, w);
        let passed = increment.z_score(0.0) <= 3.0 && covariance.z_score(0.0) <= 3.0;
        increments.push(IncrementRow {
            s: ensemble.record_times[k - 1],
            t: ensemble.record_times[k],
            increment,
            covariance,
            passed,
        });
    }
    let passed = rows.iter().all(|r| r.z <= 3.0) && increments.iter().all(|r| r.passed);
    Ok(MartingaleReport {
        target,
        rows,
        increments,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpMeasureSpec;

    #[test]
    fn null_start_stays_null() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let mut cfg = SimConfig::new(0.01, 10, 1, vec![0.5, 1.0]);
        cfg.allow_null_start = true;
        let e = simulate_ensemble(&spec, &MeasureVector::null(1), &cfg).unwrap();
        assert!(e.states.iter().all(|&m| m == 0.0));
        cfg.allow_null_start = false;
        assert!(simulate_ensemble(&spec, &MeasureVector::null(1), &cfg).is_err());
    }

    #[test]
    fn noiseless_model_follows_mean_flow() {
        let spec = ModelSpec::symmetric_two_type(1.0, -0.5, 0.0, JumpMeasureSpec::Zero);
        let cfg = SimConfig::new(1e-3, 2, 3, vec![1.0]);
        let e = simulate_ensemble(&spec, &MeasureVector::dirac(2, 0, 1.0), &cfg).unwrap();
        let target = ((-0.5f64).exp() + (-2.5f64).exp()) / 2.0;
        assert!(
            (e.state(0, 0)[0] - target).abs() < 1e-3,
            "{:?}",
            e.state(0, 0)
        );
        assert_eq!(e.state(0, 0), e.state(1, 0));
    }

    #[test]
    fn poisson_small_mean() {
        let mut rng = rng::stream(5, 0);
        let n = 200_000;
        let total: u64 = (0..n).map(|_| poisson_small(0.1, &mut rng)).sum();
        let m = total as f64 / n as f64;
        assert!((m - 0.1).abs() < 3.0 * (0.1f64 / n as f64).sqrt(), "{m}");
    }

    #[test]
    fn binary_round_trip() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let cfg = SimConfig::new(0.01, 5, 9, vec![0.0, 0.5]);
        let e = simulate_ensemble(&spec, &MeasureVector::dirac(1, 0, 1.0), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        e.write_binary(&path).unwrap();
        assert_eq!(PathEnsemble::read_binary(&path).unwrap(), e);
    }
}
