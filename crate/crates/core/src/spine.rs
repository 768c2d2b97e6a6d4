//! Spine decomposition of the h-transformed process: a stationary spine
//! chain, immigration along it, and the immigrated mass `Z_t^{(a,b]}`.
//!
//! Descendants of all immigrants landing in one window bucket are simulated
//! as a single process with immigration. By the branching property this has
//! the law of the sum of the individual descendant processes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulant;
use crate::error::{LabError, Result};
use crate::model::{pair, MeasureVector, ModelSpec, PiMoment};
use crate::qprocess::{self, LaplacePoint, QConfig};
use crate::rng;
use crate::simulate::{self, poisson, Scheme, SimConfig, SmallJumpMode, Stepper};
use crate::spectral::{self, EigenTriplet, SpineGenerator};
use crate::stats::{self, Estimate};

/// How the continuous (diffusive) immigration is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ContinuousMode {
    /// Immigrants of mass `eps` at rate `2 sigma^2 / eps`.
    EpsilonEvents,
    /// The `eps -> 0` limit: mass enters at rate `2 sigma^2` along the spine.
    Drift,
}

/// Missing fields in a config file take the values of
/// `SpineConfig::new(0.05, 10_000, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpineConfig {
    pub dt: f64,
    pub n_realizations: usize,
    pub seed: u64,
    pub eps: f64,
    pub delta_i: f64,
    pub continuous: ContinuousMode,
    pub scheme: Scheme,
    pub small_jump_cutoff: f64,
    pub small_jump_mode: SmallJumpMode,
    /// Nested truncation windows for the `K` estimate.
    pub windows: Vec<f64>,
}

impl SpineConfig {
    pub fn new(dt: f64, n_realizations: usize, seed: u64) -> Self {
        SpineConfig {
            dt,
            n_realizations,
            seed,
            eps: 1e-2,
            delta_i: 1e-2,
            continuous: ContinuousMode::EpsilonEvents,
            scheme: Scheme::SplitExact,
            small_jump_cutoff: 1e-2,
            small_jump_mode: SmallJumpMode::DiffusionApprox,
            windows: vec![3.0, 6.0, 12.0],
        }
    }
}

impl Default for SpineConfig {
    fn default() -> Self {
        SpineConfig::new(0.05, 10_000, 0)
    }
}

impl SpineConfig {
    fn sim(&self, n_paths: usize, times: Vec<f64>) -> SimConfig {
        let mut sim = SimConfig::new(self.dt, n_paths, self.seed, times);
        sim.scheme = self.scheme;
        sim.small_jump_cutoff = self.small_jump_cutoff;
        sim.small_jump_mode = self.small_jump_mode;
        sim
    }

    fn check(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.delta_i > 0.0) {
            return Err(LabError::InvalidArgument(
                "eps and delta_i must be positive".into(),
            ));
        }
        if self.n_realizations == 0 {
            return Err(LabError::InvalidArgument(
                "n_realizations must be positive".into(),
            ));
        }
        if self.windows.is_empty() || self.windows.iter().any(|w| !(*w > 0.0)) {
            return Err(LabError::InvalidArgument("windows must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Holding {
    pub from: f64,
    pub to: f64,
    pub x: usize,
}

/// The spine on a window, as consecutive holding intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinePath {
    pub start: f64,
    pub end: f64,
    pub holdings: Vec<Holding>,
}

impl SpinePath {
    pub fn type_at(&self, s: f64) -> usize {
        let k = self.holdings.partition_point(|h| h.to <= s);
        self.holdings[k.min(self.holdings.len() - 1)].x
    }

    /// Fraction of the window spent in each type.
    pub fn occupation(&self, n: usize) -> Vec<f64> {
        let mut occ = vec![0.0; n];
        for h in &self.holdings {
            occ[h.x] += h.to - h.from;
        }
        let len = self.end - self.start;
        occ.iter_mut().for_each(|o| *o /= len);
        occ
    }
}

fn pick<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in p.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Stationary spine on `[start, end]`: type at `start` from the stationary
/// law, then exponential holding times and the embedded jump chain.
pub fn sample_spine<R: Rng + ?Sized>(
    gen: &SpineGenerator,
    start: f64,
    end: f64,
    rng: &mut R,
) -> SpinePath {
    let mut x = pick(&gen.nu_tilde, rng);
    let mut s = start;
    let mut holdings = Vec::new();
    loop {
        let rate = -gen.g[x][x];
        let hold = if rate > 0.0 {
            rng.sample::<f64, _>(Exp1) / rate
        } else {
            f64::INFINITY
        };
        let to = (s + hold).min(end);
        holdings.push(Holding { from: s, to, x });
        if to >= end {
            break;
        }
        s = to;
        let row: Vec<f64> = (0..gen.g.len())
            .map(|j| if j == x { 0.0 } else { gen.g[x][j].max(0.0) })
            .collect();
        x = pick(&row, rng);
    }
    SpinePath {
        start,
        end,
        holdings,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Origin {
    Discrete,
    ContinuousEps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImmigrationEvent {
    pub s: f64,
    pub x: usize,
    pub y: f64,
    pub origin: Origin,
}

/// Immigration events along `path`, sorted by time. Discrete immigrants
/// arrive at rate `∫_{delta_i}^inf y pi(x, dy)` with size-biased masses;
/// with `eps` given, continuous immigration is approximated by immigrants
/// of mass `eps` at rate `2 sigma(x)^2 / eps`.
pub fn sample_immigration<R: Rng + ?Sized>(
    spec: &ModelSpec,
    path: &SpinePath,
    delta_i: f64,
    eps: Option<f64>,
    rng: &mut R,
) -> Result<Vec<ImmigrationEvent>> {
    if !(delta_i > 0.0) || eps.is_some_and(|e| !(e > 0.0)) {
        return Err(LabError::InvalidArgument(
            "delta_i and eps must be positive".into(),
        ));
    }
    let mut events = Vec::new();
    for h in &path.holdings {
        let len = h.to - h.from;
        let pi = &spec.pi[h.x];
        let rate = pi.moment(PiMoment::FirstMomentAbove(delta_i));
        if !rate.is_finite() {
            return Err(LabError::InvalidArgument(format!(
                "pi[{}] has infinite first moment above {delta_i}",
                h.x
            )));
        }
        for _ in 0..poisson(rate * len, rng) {
            let s = h.from + len * rng.random::<f64>();
            let y = pi.sample_size_biased(delta_i, rng);
            events.push(ImmigrationEvent {
                s,
                x: h.x,
                y,
                origin: Origin::Discrete,
            });
        }
        if let Some(eps) = eps {
            let sigma2 = spec.sigma[h.x] * spec.sigma[h.x];
            for _ in 0..poisson(2.0 * sigma2 / eps * len, rng) {
                let s = h.from + len * rng.random::<f64>();
                events.push(ImmigrationEvent {
                    s,
                    x: h.x,
                    y: eps,
                    origin: Origin::ContinuousEps,
                });
            }
        }
    }
    events.sort_by(|a, b| a.s.total_cmp(&b.s));
    Ok(events)
}

/// One spine with its immigration and the descendants of each window
/// bucket `(edges[k], edges[k+1]]` at each of `eval_times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineRealization {
    pub path: SpinePath,
    pub events: Vec<ImmigrationEvent>,
    pub edges: Vec<f64>,
    pub eval_times: Vec<f64>,
    /// Bucket, then evaluation time, then type.
    pub buckets: Vec<Vec<Vec<f64>>>,
    pub continuous: ContinuousMode,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Builds a realization on `[edges[0], max(eval_times)]`. `edges` must be
/// increasing and every evaluation time at least the last edge.
pub fn realize(
    spec: &ModelSpec,
    gen: &SpineGenerator,
    stepper: &Stepper,
    edges: &[f64],
    eval_times: &[f64],
    config: &SpineConfig,
    seed: u64,
) -> Result<SpineRealization> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::InvalidArgument(
            "bucket edges must be increasing".into(),
        ));
    }
    let last = *edges.last().expect("two edges");
    if eval_times.iter().any(|&t| t < last) || eval_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::InvalidArgument(
            "evaluation times must be increasing and after the last edge".into(),
        ));
    }
    let end = eval_times.last().copied().unwrap_or(last);
    let mut rng = rng::stream(seed, 0);
    let path = sample_spine(gen, edges[0], end, &mut rng);
    let eps = (config.continuous == ContinuousMode::EpsilonEvents).then_some(config.eps);
    let events = sample_immigration(spec, &path, config.delta_i, eps, &mut rng)?;
    let mut buckets = Vec::with_capacity(edges.len() - 1);
    for k in 0..edges.len() - 1 {
        let mut brng = rng::stream(seed, 1 + k as u64);
        buckets.push(simulate_bucket(
            spec,
            stepper,
            &path,
            &events,
            edges[k],
            edges[k + 1],
            eval_times,
            config,
            &mut brng,
        )?);
    }
    Ok(SpineRealization {
        path,
        events,
        edges: edges.to_vec(),
        eval_times: eval_times.to_vec(),
        buckets,
        continuous: config.continuous,
    })
}

/// Descendants of the immigration in `(a, b]`, started empty at `a`.
#[allow(clippy::too_many_arguments)]
fn simulate_bucket(
    spec: &ModelSpec,
    stepper: &Stepper,
    path: &SpinePath,
    events: &[ImmigrationEvent],
    a: f64,
    b: f64,
    eval_times: &[f64],
    config: &SpineConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let n = spec.n;
    let mut m = vec![0.0; n];
    let mut t = a;
    let mut rate = vec![0.0; n];
    let drift = config.continuous == ContinuousMode::Drift;
    let mut out = Vec::with_capacity(eval_times.len());
    let mut advance =
        |m: &mut Vec<f64>, t: &mut f64, to: f64, rng: &mut ChaCha8Rng| -> Result<()> {
            // the holdings are cut at `to`, so the immigration rate is constant on each piece
            while *t < to {
                let piece_end = if drift && *t < b {
                    let k = path.holdings.partition_point(|h| h.to <= *t);
                    let h = path.holdings[k.min(path.holdings.len() - 1)];
                    rate.iter_mut().for_each(|r| *r = 0.0);
                    rate[h.x] = 2.0 * spec.sigma[h.x] * spec.sigma[h.x];
                    h.to.min(to)
                } else {
                    to
                };
                let imm = (drift && *t < b).then_some(&rate[..]);
                stepper.advance(m, piece_end - *t, imm, rng)?;
                *t = piece_end;
            }
            Ok(())
        };
    for e in events.iter().filter(|e| e.s > a && e.s <= b) {
        advance(&mut m, &mut t, e.s, rng)?;
        m[e.x] += e.y;
    }
    advance(&mut m, &mut t, b, rng)?;
    for &te in eval_times {
        advance(&mut m, &mut t, te, rng)?;
        out.push(m.clone());
    }
    Ok(out)
}

/// `Z_t^{(a,b]}(f)`: the immigrated mass from `(a, b]` evaluated at `t`.
/// `a` and `b` must be bucket edges and `t` an evaluation time.
pub fn evaluate_z(
    realization: &SpineRealization,
    a: f64,
    b: f64,
    t: f64,
    f: &[f64],
) -> Result<f64> {
    let missing = || LabError::MissingDescendants { a, b, t };
    if !(a < b) || t < b {
        return Err(LabError::InvalidArgument(format!(
            "need a < b <= t, got ({a}, {b}], t = {t}"
        )));
    }
    let i = realization
        .edges
        .iter()
        .position(|&e| same(e, a))
        .ok_or_else(missing)?;
    let j = realization
        .edges
        .iter()
        .position(|&e| same(e, b))
        .ok_or_else(missing)?;
    let k = realization
        .eval_times
        .iter()
        .position(|&s| same(s, t))
        .ok_or_else(missing)?;
    Ok((i..j).map(|q| pair(&realization.buckets[q][k], f)).sum())
}

/// `∫ nu~(dx) phi(x) (2 sigma(x)^2 + ∫ y^2 pi(x, dy))`: the mean rate at
/// which immigration adds `phi`-mass along the stationary spine.
pub fn immigration_phi_rate(spec: &ModelSpec, triplet: &EigenTriplet) -> f64 {
    let nt = triplet.nu_tilde();
    (0..spec.n)
        .map(|x| {
            let y2 = spec.pi[x].moment(PiMoment::SecondMomentBelow(f64::INFINITY));
            nt[x] * triplet.phi[x] * (2.0 * spec.sigma[x] * spec.sigma[x] + y2)
        })
        .sum()
}

/// `E[Z_t^{(a,b]}(phi)] = rate ∫_a^b e^{lambda (t - s)} ds`.
pub fn expected_z_phi(spec: &ModelSpec, triplet: &EigenTriplet, a: f64, b: f64, t: f64) -> f64 {
    let l = triplet.lambda;
    immigration_phi_rate(spec, triplet) * ((l * (t - b)).exp() - (l * (t - a)).exp()) / -l
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaRow {
    pub window: f64,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSpineReport {
    pub rows: Vec<KappaRow>,
    /// Estimate at the largest window.
    pub kappa: Estimate,
    /// Non-increasing in the window, as the immigrated mass only grows.
    pub monotone: bool,
    /// Mean `phi`-mass immigrated before the largest window.
    pub truncation_mass: f64,
    /// Mean `phi`-mass in the largest window lost to the discrete
    /// truncation at `delta_i`.
    pub delta_i_mass: f64,
    pub continuous: ContinuousMode,
    /// Realizations with no immigrated mass at time 0 in the largest window.
    pub empty: usize,
}

/// `K` as the mean of `1 / Z_0^{(-T,0]}(phi)` for each truncation window `T`
/// in `config.windows`, from the same realizations.
pub fn kappa_spine(
    spec: &ModelSpec,
    triplet: &EigenTriplet,
    config: &SpineConfig,
) -> Result<KappaSpineReport> {
    config.check()?;
    triplet.require_subcritical()?;
    let gen = spectral::spine_generator(spec, triplet)?;
    let stepper = Stepper::new(spec, &config.sim(1, vec![0.0]))?;
    let mut windows = config.windows.clone();
    windows.sort_by(|a, b| b.total_cmp(a));
    windows.dedup();
    let mut edges: Vec<f64> = windows.iter().map(|w| -w).collect();
    edges.push(0.0);
    let per: Vec<Result<Vec<f64>>> = (0..config.n_realizations)
        .into_par_iter()
        .map(|i| {
            let r = realize(
                spec,
                &gen,
                &stepper,
                &edges,
                &[0.0],
                config,
                rng::derive(config.seed, i as u64),
            )?;
            windows
                .iter()
                .map(|&w| evaluate_z(&r, -w, 0.0, 0.0, &triplet.phi))
                .collect()
        })
        .collect();
    let mut inv = vec![Vec::with_capacity(config.n_realizations); windows.len()];
    let mut empty = 0;
    for z in per {
        let z = z?;
        if z[0] == 0.0 {
            empty += 1;
        }
        for (k, v) in z.iter().enumerate() {
            inv[k].push(1.0 / v);
        }
    }
    let mut rows: Vec<KappaRow> = windows
        .iter()
        .zip(&inv)
        .map(|(&window, xs)| KappaRow {
            window,
            estimate: stats::mean(xs),
        })
        .collect();
    rows.reverse();
    let monotone = rows
        .windows(2)
        .all(|w| w[1].estimate.value <= w[0].estimate.value);
    let t_max = windows[0];
    let shortfall: f64 = (0..spec.n)
        .map(|x| {
            triplet.nu_tilde()[x]
                * triplet.phi[x]
                * spec.pi[x].moment(PiMoment::SecondMomentBelow(config.delta_i))
        })
        .sum();
    let l = triplet.lambda;
    Ok(KappaSpineReport {
        kappa: rows.last().expect("one window").estimate,
        rows,
        monotone,
        truncation_mass: expected_z_phi(spec, triplet, f64::NEG_INFINITY, -t_max, 0.0),
        delta_i_mass: shortfall * -(l * t_max).exp_m1() / -l,
        continuous: config.continuous,
        empty,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineComparison {
    pub point: LaplacePoint,
    /// `E[exp(-(W_t + Z_t^{(0,t]})(f))]` from the spine sampler.
    pub spine: Estimate,
    pub htransform: Estimate,
    /// `P_nu[exp(-X_t(f))] Q[exp(-Z_t^{(0,t]}(f))]`, with the first factor
    /// from the cumulant flow.
    pub factorized: Estimate,
    pub eps_budget: f64,
    pub delta_i_budget: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineReport {
    pub t: f64,
    pub rows: Vec<SpineComparison>,
    /// Mean `h`-transform density before normalization.
    pub weight_mean: Estimate,
    pub passed: bool,
}

fn reseeded(mut sim: SimConfig, seed: u64) -> SimConfig {
    sim.seed = seed;
    sim
}

/// `∫_0^t sup_x (T_s |f|)(x)^p ds` by the trapezoid rule on 200 panels.
fn semigroup_norm_integral(spec: &ModelSpec, f: &[f64], t: f64, p: i32) -> f64 {
    let l = spectral::mean_generator(spec);
    let fa = nalgebra::DVector::from_iterator(f.len(), f.iter().map(|v| v.abs()));
    let k = 200;
    let h = t / k as f64;
    let step = spectral::semigroup(&l, h);
    let mut g = fa;
    let mut sum = 0.0;
    for i in 0..=k {
        let w = if i == 0 || i == k { 0.5 } else { 1.0 };
        sum += w * g.amax().powi(p);
        g = &step * g;
    }
    sum * h
}

/// Compares, on `panel`, the spine representation `W^{(0)}_t + Z_t^{(0,t]}`
/// under a stationary spine with the h-transform of the `nu`-started
/// process. Passes when every point agrees within 3 joint SE plus the
/// eps and delta_i bias budgets.
pub fn spine_vs_htransform(
    spec: &ModelSpec,
    triplet: &EigenTriplet,
    t: f64,
    panel: &[LaplacePoint],
    config: &SpineConfig,
    htransform_paths: usize,
) -> Result<SpineReport> {
    config.check()?;
    if !(t > 0.0) {
        return Err(LabError::InvalidArgument("t must be positive".into()));
    }
    let gen = spectral::spine_generator(spec, triplet)?;
    let nu = MeasureVector::new(triplet.nu.clone())?;
    let stepper = Stepper::new(spec, &config.sim(1, vec![t]))?;
    let n = config.n_realizations;

    // W^{(0)}: the unconditioned process from nu, independent of the spine
    let w0 = simulate::simulate_ensemble(
        spec,
        &nu,
        &reseeded(config.sim(n, vec![t]), rng::derive(config.seed, u64::MAX)),
    )?;
    let z: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let r = realize(
                spec,
                &gen,
                &stepper,
                &[0.0, t],
                &[t],
                config,
                rng::derive(config.seed, i as u64),
            )?;
            Ok(r.buckets[0][0].clone())
        })
        .collect();
    let z: Vec<Vec<f64>> = z.into_iter().collect::<Result<_>>()?;

    let mut hcfg = QConfig::new(reseeded(
        config.sim(htransform_paths, vec![t]),
        rng::derive(config.seed, u64::MAX - 1),
    ));
    hcfg.ess_floor = 0.0;
    let hlaw = qprocess::law_htransform(spec, triplet, &nu, t, &hcfg)?;

    let sigma2_max = spec.sigma.iter().map(|s| s * s).fold(0.0, f64::max);
    let small_y2 = (0..spec.n)
        .map(|x| spec.pi[x].moment(PiMoment::SecondMomentBelow(config.delta_i)))
        .fold(0.0, f64::max);
    let mut rows = Vec::new();
    for p in panel {
        let f = p.function(triplet)?;
        let fv = f.values();
        let total: Vec<f64> = (0..n)
            .map(|i| (-(pair(w0.state(i, 0), fv) + pair(&z[i], fv))).exp())
            .collect();
        let spine = stats::mean(&total);
        let htransform = hlaw.laplace(fv);
        let zl = stats::mean(&z.iter().map(|m| (-pair(m, fv)).exp()).collect::<Vec<_>>());
        let pn = cumulant::laplace_functional(spec, &nu, &f, t, cumulant::DEFAULT_TOL)?;
        let factorized = Estimate {
            value: pn * zl.value,
            stderr: pn * zl.stderr,
        };
        let eps_budget = match config.continuous {
            ContinuousMode::EpsilonEvents => {
                sigma2_max * config.eps * semigroup_norm_integral(spec, fv, t, 2)
            }
            ContinuousMode::Drift => 0.0,
        };
        let delta_i_budget = small_y2 * semigroup_norm_integral(spec, fv, t, 1);
        let slack = eps_budget + delta_i_budget;
        let agree = |a: &Estimate| {
            (a.value - htransform.value).abs() <= 3.0 * a.joint_stderr(&htransform) + slack
        };
        let passed = agree(&spine) && agree(&factorized);
        rows.push(SpineComparison {
            point: *p,
            spine,
            htransform,
            factorized,
            eps_budget,
            delta_i_budget,
            passed,
        });
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(SpineReport {
        t,
        rows,
        weight_mean: hlaw.normalizer,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpMeasureSpec;

    fn gen_for(spec: &ModelSpec) -> (EigenTriplet, SpineGenerator) {
        let t = spectral::triplet_for(spec).unwrap();
        let g = spectral::spine_generator(spec, &t).unwrap();
        (t, g)
    }

    #[test]
    fn one_type_spine_is_constant() {
        let (_, g) = gen_for(&ModelSpec::feller(1.0, 1.0));
        let p = sample_spine(&g, -5.0, 1.0, &mut rng::stream(1, 0));
        assert_eq!(p.holdings.len(), 1);
        assert_eq!(p.type_at(0.3), 0);
    }

    #[test]
    fn no_immigration_without_sigma_or_jumps() {
        let spec = ModelSpec::feller(1.0, 0.0);
        let (_, g) = gen_for(&spec);
        let p = sample_spine(&g, 0.0, 5.0, &mut rng::stream(1, 0));
        assert!(
            sample_immigration(&spec, &p, 1e-2, Some(1e-2), &mut rng::stream(1, 1))
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn eps_event_count_is_poisson() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let (_, g) = gen_for(&spec);
        let mut rng = rng::stream(4, 0);
        let counts: Vec<f64> = (0..400)
            .map(|_| {
                let p = sample_spine(&g, 0.0, 5.0, &mut rng);
                sample_immigration(&spec, &p, 1e-2, Some(0.01), &mut rng)
                    .unwrap()
                    .len() as f64
            })
            .collect();
        let m = stats::mean(&counts);
        assert!(m.within(1000.0, 3.0, 0.0), "{m}");
    }

    #[test]
    fn single_atom_rate() {
        let spec = ModelSpec::single_type(
            -1.0,
            0.0,
            JumpMeasureSpec::AtomList {
                atoms: vec![(1.0, 0.7)],
            },
        );
        let (_, g) = gen_for(&spec);
        let mut rng = rng::stream(8, 0);
        let p = sample_spine(&g, 0.0, 2000.0, &mut rng);
        let ev = sample_immigration(&spec, &p, 1e-2, None, &mut rng).unwrap();
        let rate = ev.len() as f64 / 2000.0;
        assert!(
            (rate - 0.7).abs() < 3.0 * (0.7f64 / 2000.0).sqrt(),
            "{rate}"
        );
        assert!(ev
            .iter()
            .all(|e| e.y == 1.0 && e.origin == Origin::Discrete));
    }

    #[test]
    fn missing_window_is_an_error() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let (_, g) = gen_for(&spec);
        let cfg = SpineConfig::new(0.05, 1, 1);
        let stepper = Stepper::new(&spec, &cfg.sim(1, vec![0.0])).unwrap();
        let r = realize(&spec, &g, &stepper, &[-2.0, -1.0, 0.0], &[0.0], &cfg, 3).unwrap();
        assert!(evaluate_z(&r, -2.0, 0.0, 0.0, &[1.0]).is_ok());
        assert!(matches!(
            evaluate_z(&r, -1.5, 0.0, 0.0, &[1.0]),
            Err(LabError::MissingDescendants { .. })
        ));
        assert!(matches!(
            evaluate_z(&r, -2.0, 0.0, 0.5, &[1.0]),
            Err(LabError::MissingDescendants { .. })
        ));
    }

    #[test]
    fn zero_function_gives_one() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let triplet = spectral::triplet_for(&spec).unwrap();
        let cfg = SpineConfig::new(0.05, 50, 2);
        let panel = [LaplacePoint {
            theta: 0.0,
            f: crate::qprocess::TestFunction::Phi,
        }];
        let r = spine_vs_htransform(&spec, &triplet, 1.0, &panel, &cfg, 50).unwrap();
        assert_eq!(r.rows[0].spine.value, 1.0);
        assert_eq!(r.rows[0].htransform.value, 1.0);
    }
}
