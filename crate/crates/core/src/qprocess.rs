//! Conditioned laws as weighted samples of states: conditioning on
//! survival, the h-transform, the Yaglom limit and its restarts, and the
//! `(t, r)` panel of conditional Laplace functionals.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::cumulant::{self, DEFAULT_TOL};
use crate::error::{LabError, Result};
use crate::model::{pair, FunctionVector, MeasureVector, ModelSpec};
use crate::rng;
use crate::simulate::{simulate_ensemble, simulate_mixed, PathEnsemble, SimConfig};
use crate::spectral::{self, EigenTriplet};
use crate::stats::{self, Estimate};

/// Stream offset for resampling, kept clear of the per-path streams.
const RESAMPLE_STREAM: u64 = 1 << 62;

/// Test functions of the Laplace panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    Phi,
    One,
    Indicator(usize),
}

impl TestFunction {
    pub fn values(&self, triplet: &EigenTriplet) -> Result<Vec<f64>> {
        let n = triplet.n();
        match *self {
            TestFunction::Phi => Ok(triplet.phi.clone()),
            TestFunction::One => Ok(vec![1.0; n]),
            TestFunction::Indicator(x) if x < n => {
                Ok(FunctionVector::indicator(n, x).into_values())
            }
            TestFunction::Indicator(x) => Err(LabError::InvalidArgument(format!(
                "indicator of type {x} with n = {n}"
            ))),
        }
    }
}

/// `E[exp(-theta X(f))]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacePoint {
    pub theta: f64,
    pub f: TestFunction,
}

impl LaplacePoint {
    pub fn function(&self, triplet: &EigenTriplet) -> Result<FunctionVector> {
        Ok(FunctionVector::new(self.f.values(triplet)?).scaled(self.theta))
    }
}

impl std::fmt::Display for LaplacePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.f {
            TestFunction::Phi => write!(f, "{}*phi", self.theta),
            TestFunction::One => write!(f, "{}*1", self.theta),
            TestFunction::Indicator(x) => write!(f, "{}*1_{x}", self.theta),
        }
    }
}

pub fn default_panel() -> Vec<LaplacePoint> {
    vec![
        LaplacePoint {
            theta: 0.5,
            f: TestFunction::Phi,
        },
        LaplacePoint {
            theta: 1.0,
            f: TestFunction::One,
        },
        LaplacePoint {
            theta: 2.0,
            f: TestFunction::Indicator(0),
        },
    ]
}

/// How an empirical law was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// `X_t` given `X_{t+r} != 0`, by discarding paths.
    Conditioned { t: f64, r: f64 },
    /// `X_t` given `X_{t+r} != 0`, by weights `1 - exp(-X_t(v_r))`.
    Reweighted { t: f64, r: f64 },
    /// `X_t` under the h-transform.
    HTransform { t: f64 },
    /// Yaglom atoms reweighted by their survival over `r`.
    QInftyR { r: f64 },
    /// Yaglom atoms reweighted by `eta(phi)`.
    QInfInf,
}

/// A weighted sample of states. Weights are normalized to sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalLaw {
    pub n_types: usize,
    /// Sample-major masses.
    pub samples: Vec<f64>,
    pub weights: Vec<f64>,
    pub provenance: Provenance,
    pub ess: f64,
    /// Mean of the raw weights: the survival fraction for conditioned laws,
    /// the mean density for the h-transform.
    pub normalizer: Estimate,
}

impl EmpiricalLaw {
    /// Drops zero-weight samples and normalizes. `raw` pairs each state
    /// with an unnormalized weight; `total` is the number of draws the
    /// weights average over.
    fn from_weighted<'a>(
        n_types: usize,
        raw: impl Iterator<Item = (&'a [f64], f64)>,
        total: usize,
        provenance: Provenance,
    ) -> Self {
        let mut samples = Vec::new();
        let mut weights = Vec::new();
        let mut all = Vec::with_capacity(total);
        for (m, w) in raw {
            all.push(w);
            if w > 0.0 {
                samples.extend_from_slice(m);
                weights.push(w);
            }
        }
        all.resize(total, 0.0);
        let normalizer = stats::mean(&all);
        let s: f64 = weights.iter().sum();
        if s > 0.0 {
            weights.iter_mut().for_each(|w| *w /= s);
        }
        let ess = stats::ess(&weights);
        EmpiricalLaw {
            n_types,
            samples,
            weights,
            provenance,
            ess,
            normalizer,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.n_types..(i + 1) * self.n_types]
    }

    /// `eta(f)` for every sample.
    pub fn values(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| pair(self.sample(i), f)).collect()
    }

    /// Weighted mean of `g(eta(f))`.
    pub fn expect(&self, f: &[f64], g: impl Fn(f64) -> f64) -> Estimate {
        let vals: Vec<f64> = self.values(f).into_iter().map(g).collect();
        stats::weighted_mean(&vals, &self.weights)
    }

    /// `∫ exp(-eta(f))`.
    pub fn laplace(&self, f: &[f64]) -> Estimate {
        self.expect(f, |x| (-x).exp())
    }

    /// `∫ eta(f)`.
    pub fn mean(&self, f: &[f64]) -> Estimate {
        self.expect(f, |x| x)
    }

    pub fn laplace_panel(
        &self,
        triplet: &EigenTriplet,
        panel: &[LaplacePoint],
    ) -> Result<Vec<Estimate>> {
        panel
            .iter()
            .map(|p| Ok(self.laplace(p.function(triplet)?.values())))
            .collect()
    }

    pub fn require_ess(&self, floor: f64) -> Result<()> {
        if self.ess < floor {
            Err(LabError::LowEss {
                ess: self.ess,
                floor,
            })
        } else {
            Ok(())
        }
    }

    /// `n` multinomial draws of states.
    pub fn resample(&self, n: usize, seed: u64) -> Result<Vec<MeasureVector>> {
        let index = WeightedIndex::new(&self.weights)
            .map_err(|e| LabError::InvalidArgument(format!("cannot resample: {e}")))?;
        let mut rng = rng::stream(seed, RESAMPLE_STREAM);
        (0..n)
            .map(|_| MeasureVector::new(self.sample(index.sample(&mut rng)).to_vec()))
            .collect()
    }

    /// Same law with each sample's weight multiplied by `g(eta)`.
    pub fn reweight(&self, g: impl Fn(&[f64]) -> f64, provenance: Provenance) -> Self {
        let raw = (0..self.len()).map(|i| {
            let s = self.sample(i);
            (s, self.weights[i] * g(s))
        });
        let mut law = EmpiricalLaw::from_weighted(self.n_types, raw, self.len(), provenance);
        // the raw weights carry the old normalization; rescale to a per-atom mean
        law.normalizer.value *= self.len() as f64;
        law.normalizer.stderr *= self.len() as f64;
        law
    }

    /// CSV with columns `weight,m0,..`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("weight");
        for x in 0..self.n_types {
            out.push_str(&format!(",m{x}"));
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{:e}", self.weights[i]));
            for m in self.sample(i) {
                out.push_str(&format!(",{m:e}"));
            }
            out.push('\n');
        }
        out
    }
}

fn default_ess_floor() -> f64 {
    200.0
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

/// Simulation settings plus the estimator controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QConfig {
    #[serde(flatten)]
    pub sim: SimConfig,
    #[serde(default = "default_ess_floor")]
    pub ess_floor: f64,
    /// Tolerance of the cumulant solves used for weights and exact targets.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl QConfig {
    pub fn new(sim: SimConfig) -> Self {
        QConfig {
            sim,
            ess_floor: default_ess_floor(),
            tol: default_tol(),
        }
    }

    fn with_times(&self, times: Vec<f64>) -> SimConfig {
        let mut sim = self.sim.clone();
        sim.record_times = times;
        sim
    }
}

fn sorted_times(mut ts: Vec<f64>) -> Vec<f64> {
    ts.sort_by(|a, b| a.total_cmp(b));
    ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    ts
}

/// `Q^mu_{t,r}`: the states at `t` of the paths alive at `t + r`.
pub fn law_conditioned(ensemble: &PathEnsemble, t: f64, r: f64) -> Result<EmpiricalLaw> {
    let k = ensemble.time_index(t)?;
    let j = ensemble.time_index(t + r)?;
    let raw = (0..ensemble.n_paths()).map(|p| {
        let w = if ensemble.is_alive(p, j) {
            ensemble.weights[p]
        } else {
            0.0
        };
        (ensemble.state(p, k), w)
    });
    let law = EmpiricalLaw::from_weighted(
        ensemble.n_types,
        raw,
        ensemble.n_paths(),
        Provenance::Conditioned { t, r },
    );
    if law.is_empty() {
        return Err(LabError::NoSurvivors {
            t: t + r,
            survival: 0.0,
        });
    }
    Ok(law)
}

/// `Q^mu_{t,r}` from the states at `t` alone, each weighted by its exact
/// survival probability `1 - exp(-X_t(v_r))` over the remaining time.
pub fn law_reweighted(
    spec: &ModelSpec,
    ensemble: &PathEnsemble,
    t: f64,
    r: f64,
    tol: f64,
) -> Result<EmpiricalLaw> {
    let vr = if r > 0.0 {
        Some(cumulant::v_at(spec, r, tol)?)
    } else {
        None
    };
    reweighted_with(ensemble, t, r, vr.as_deref())
}

fn reweighted_with(
    ensemble: &PathEnsemble,
    t: f64,
    r: f64,
    vr: Option<&[f64]>,
) -> Result<EmpiricalLaw> {
    let Some(vr) = vr else {
        return law_conditioned(ensemble, t, 0.0).map(|mut l| {
            l.provenance = Provenance::Reweighted { t, r };
            l
        });
    };
    let k = ensemble.time_index(t)?;
    let raw = (0..ensemble.n_paths()).map(|p| {
        let s = ensemble.state(p, k);
        (s, ensemble.weights[p] * -(-pair(s, vr)).exp_m1())
    });
    let law = EmpiricalLaw::from_weighted(
        ensemble.n_types,
        raw,
        ensemble.n_paths(),
        Provenance::Reweighted { t, r },
    );
    if law.is_empty() {
        return Err(LabError::NoSurvivors { t, survival: 0.0 });
    }
    Ok(law)
}

/// `Q^mu_{t,inf}` from an ensemble started at a fixed measure: each path is
/// weighted by `X_t(phi) / (e^{lambda t} mu(phi))`.
pub fn htransform_from_ensemble(
    ensemble: &PathEnsemble,
    triplet: &EigenTriplet,
    t: f64,
) -> Result<EmpiricalLaw> {
    let k = ensemble.time_index(t)?;
    let mu_phi = pair(ensemble.initial.masses(), &triplet.phi);
    if !(mu_phi > 0.0) {
        return Err(LabError::InvalidArgument(
            "h-transform of the null measure".into(),
        ));
    }
    let scale = 1.0 / ((triplet.lambda * t).exp() * mu_phi);
    let raw = (0..ensemble.n_paths()).map(|p| {
        let s = ensemble.state(p, k);
        (s, ensemble.weights[p] * pair(s, &triplet.phi) * scale)
    });
    Ok(EmpiricalLaw::from_weighted(
        ensemble.n_types,
        raw,
        ensemble.n_paths(),
        Provenance::HTransform { t },
    ))
}

/// `Q^mu_{t,inf}` by simulating `config.sim.n_paths` paths to `t`.
/// `normalizer` holds the mean density, which should be 1.
pub fn law_htransform(
    spec: &ModelSpec,
    triplet: &EigenTriplet,
    mu: &MeasureVector,
    t: f64,
    config: &QConfig,
) -> Result<EmpiricalLaw> {
    if mu.is_null() {
        return Err(LabError::InvalidArgument(
            "h-transform of the null measure".into(),
        ));
    }
    let ens = simulate_ensemble(spec, mu, &config.with_times(vec![t]))?;
    let law = htransform_from_ensemble(&ens, triplet, t)?;
    law.require_ess(config.ess_floor)?;
    Ok(law)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelComparison {
    pub point: LaplacePoint,
    pub first: Estimate,
    pub second: Estimate,
    /// Known deterministic offset between the two targets.
    pub bias: f64,
    pub passed: bool,
}

impl PanelComparison {
    fn new(point: LaplacePoint, first: Estimate, second: Estimate, bias: f64) -> Self {
        let passed = (first.value - second.value).abs() <= 3.0 * first.joint_stderr(&second) + bias;
        PanelComparison {
            point,
            first,
            second,
            bias,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YaglomEstimate {
    pub law: EmpiricalLaw,
    pub mu: MeasureVector,
    pub t: f64,
    /// `P_mu(X_t != 0)` from the ensemble and exactly.
    pub survival: Estimate,
    pub survival_exact: f64,
    /// Panel at `t` against the panel at `2t`.
    pub staleness: Vec<PanelComparison>,
    /// `sup |H_t|` of the mean-semigroup remainder at `t`.
    pub remainder: f64,
    pub warning: Option<String>,
}

/// `Q_{inf,0}` estimated by `Q^mu_{t,0}` at `t = t_large`, with the panel
/// at `2 t_large` as a staleness check. Staleness only warns.
pub fn yaglom_estimate(
    spec: &ModelSpec,
    triplet: &EigenTriplet,
    mu: &MeasureVector,
    t_large: f64,
    config: &QConfig,
) -> Result<YaglomEstimate> {
    triplet.require_subcritical()?;
    if !(t_large > 0.0) {
        return Err(LabError::InvalidArgument("t_large must be positive".into()));
    }
    let ens = simulate_ensemble(spec, mu, &config.with_times(vec![t_large, 2.0 * t_large]))?;
    let law = law_conditioned(&ens, t_large, 0.0)?;
    law.require_ess(config.ess_floor)?;
    let panel = default_panel();
    let mut staleness = Vec::new();
    let mut warning = None;
    match law_conditioned(&ens, 2.0 * t_large, 0.0) {
        Ok(late) => {
            for p in &panel {
                let f = p.function(triplet)?;
                staleness.push(PanelComparison::new(
                    *p,
                    law.laplace(f.values()),
                    late.laplace(f.values()),
                    0.0,
                ));
            }
            if staleness.iter().any(|c| !c.passed) {
                warning = Some(format!(
                    "panel at t = {t_large} differs from t = {}; t_large may be too small",
                    2.0 * t_large
                ));
            }
        }
        Err(_) => {
            warning = Some(format!(
                "no survivors at 2 t_large = {}; staleness not checked",
                2.0 * t_large
            ))
        }
    }
    let remainder = spectral::h2_remainder(spec, triplet, &[t_large])?.points[0].1;
    Ok(YaglomEstimate {
        survival: law.normalizer,
        survival_exact: cumulant::survival_probability(spec, mu, t_large, config.tol)?,
        law,
        mu: mu.clone(),
        t: t_large,
        staleness,
        remainder,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsdRow {
    pub r: f64,
    /// Restart survival; the error includes the Yaglom sampling error.
    pub survival: Estimate,
    /// `e^{lambda r}`.
    pub target: f64,
    /// Offset of the exact finite-`t` restart survival from the target.
    pub bias: f64,
    pub passed: bool,
    pub laplace: Vec<PanelComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsdReport {
    pub rows: Vec<QsdRow>,
    pub passed: bool,
}

/// Restarts `config.sim.n_paths` paths from atoms resampled from the Yaglom
/// estimate and checks survival `e^{lambda r}` and invariance of the
/// survivor law on the default panel. Biases are the exact finite-`t`
/// offsets of the Yaglom estimate from its limit.
pub fn qsd_check(
    spec: &ModelSpec,
    triplet: &EigenTriplet,
    yaglom: &YaglomEstimate,
    r_grid: &[f64],
    config: &QConfig,
) -> Result<QsdReport> {
    yaglom.law.require_ess(config.ess_floor)?;
    let starts = yaglom.law.resample(config.sim.n_paths, config.sim.seed)?;
    let times = sorted_times(std::iter::once(0.0).chain(r_grid.iter().copied()).collect());
    let ens = simulate_mixed(spec, &starts, &config.with_times(times))?;
    let panel = default_panel();
    let (mu, t, tol) = (&yaglom.mu, yaglom.t, config.tol);
    let p_t = cumulant::survival_probability(spec, mu, t, tol)?;
    let mut rows = Vec::new();
    for &r in r_grid {
        let k = ens.time_index(r)?;
        let restart = ens.survival_at(k);
        // the restart only sees the Yaglom sample, so its error counts too
        let from_atoms = if r > 0.0 {
            let vr = cumulant::v_at(spec, r, tol)?;
            yaglom.law.expect(&vr, |x| -(-x).exp_m1()).stderr
        } else {
            0.0
        };
        let survival = Estimate {
            value: restart.value,
            stderr: restart.stderr.hypot(from_atoms),
        };
        let target = (triplet.lambda * r).exp();
        let exact = cumulant::survival_probability(spec, mu, t + r, tol)? / p_t;
        let bias = (exact - target).abs();
        let passed = survival.within(target, 3.0, bias);
        let mut laplace = Vec::new();
        if let Ok(survivors) = law_conditioned(&ens, r, 0.0) {
            for p in &panel {
                let f = p.function(triplet)?;
                let a = cumulant::conditioned_laplace(spec, mu, &f, t + r, 0.0, tol)?;
                let b = cumulant::conditioned_laplace(spec, mu, &f, t, 0.0, tol)?;
                laplace.push(PanelComparison::new(
                    *p,
                    survivors.laplace(f.values()),
                    yaglom.law.laplace(f.values()),
                    (a - b).abs(),
                ));
            }
        }
        rows.push(QsdRow {
            r,
            survival,
            target,
            bias,
            passed,
            laplace,
        });
    }
    let passed = rows
        .iter()
        .all(|r| r.passed && r.laplace.iter().all(|c| c.passed));
    Ok(QsdReport { rows, passed })
}

/// `Q_{inf,r}`: Yaglom atoms weighted by `1 - exp(-eta(v_r))`.
pub fn law_qinfty_r(
    yaglom: &EmpiricalLaw,
    spec: &ModelSpec,
    r: f64,
    tol: f64,
) -> Result<EmpiricalLaw> {
    if r == 0.0 {
        return Ok(yaglom.reweight(
            |s| if s.iter().any(|&m| m > 0.0) { 1.0 } else { 0.0 },
            Provenance::QInftyR { r },
        ));
    }
    let vr = cumulant::v_at(spec, r, tol)?;
    Ok(yaglom.reweight(|s| -(-pair(s, &vr)).exp_m1(), Provenance::QInftyR { r }))
}

/// `Q_{inf,inf}` as the Yaglom law size-biased by `eta(phi)`.
pub fn q_inf_inf_from_yaglom(yaglom: &EmpiricalLaw, triplet: &EigenTriplet) -> EmpiricalLaw {
    yaglom.reweight(|s| pair(s, &triplet.phi), Provenance::QInfInf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelCell {
    pub t: f64,
    pub r: f64,
    pub estimate: Estimate,
    /// The same functional from the cumulant flow.
    pub exact: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub t: f64,
    /// `e^{-lambda t} P_mu(X_t != 0)`, simulated and exact.
    pub scaled_survival: Estimate,
    pub scaled_survival_exact: f64,
    /// `∫ eta(phi) dQ^mu_{t,0}`, simulated and exact.
    pub phi_mass: Estimate,
    pub phi_mass_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleLimitPanel {
    pub f: Vec<f64>,
    pub cells: Vec<PanelCell>,
    pub rows: Vec<PanelRow>,
    /// Laplace functional of `Q_{inf,inf}` at `f`; `None` when the L log L
    /// functional is infinite.
    pub target: Option<f64>,
    /// Largest pairwise spread over the cells with `t` and `r` in the top
    /// two grid values, and the largest joint standard error among them.
    pub corner_spread: f64,
    pub corner_stderr: f64,
    /// `corner_spread <= 3 corner_stderr` and every corner cell within
    /// 3 SE plus its exact finite-`(t, r)` offset of the target.
    pub stabilized: bool,
    /// Ratio of the first to the last exact scaled survival.
    pub survival_decay: f64,
    pub phi_mass_increasing: bool,
}

impl DoubleLimitPanel {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,r,estimate,stderr,exact,ess\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:.1}\n",
                c.t, c.r, c.estimate.value, c.estimate.stderr, c.exact, c.ess
            ));
        }
        out
    }
}

/// `E_mu[exp(-X_t(f)) | X_{t+r} != 0]` over `t_grid x r_grid` from one
/// ensemble, reweighting the states at `t` by their exact survival over
/// `r`. Every cell also carries the exact value; cells at a `t` with no
/// surviving path have a NaN estimate.
pub fn double_limit_panel(
    spec: &ModelSpec,
    triplet: &EigenTriplet,
    mu: &MeasureVector,
    f: &FunctionVector,
    t_grid: &[f64],
    r_grid: &[f64],
    config: &QConfig,
) -> Result<DoubleLimitPanel> {
    triplet.require_subcritical()?;
    if t_grid.is_empty() || r_grid.is_empty() {
        return Err(LabError::InvalidArgument("empty grid".into()));
    }
    let tol = config.tol;
    let t_sorted = sorted_times(t_grid.to_vec());
    let r_sorted = sorted_times(r_grid.to_vec());
    let ens = simulate_ensemble(spec, mu, &config.with_times(t_sorted.clone()))?;
    let mu_phi = pair(mu.masses(), &triplet.phi);

    // one extinction curve and one cumulant solve per r serve every cell
    let mut all: Vec<f64> = Vec::new();
    for &t in &t_sorted {
        for &r in &r_sorted {
            all.extend([t, r, t + r]);
        }
    }
    let all = sorted_times(all.into_iter().filter(|&s| s > 0.0).collect());
    let curve = cumulant::extinction_curve(spec, &all, tol)?;
    let v = |s: f64| -> &[f64] {
        let k = all
            .iter()
            .position(|&q| (q - s).abs() <= 1e-12 * s.max(1.0))
            .expect("time on the curve");
        curve.v[k].values()
    };
    let surv = |s: f64| {
        if s == 0.0 {
            1.0
        } else {
            -(-pair(mu.masses(), v(s))).exp_m1()
        }
    };
    let t_pos: Vec<f64> = t_sorted.iter().copied().filter(|&t| t > 0.0).collect();
    let vt_f = cumulant::solve_cumulant_on(spec, f, &t_pos, tol)?.values;

    let mut cells = Vec::new();
    for &r in &r_sorted {
        let shifted = if r > 0.0 {
            let g: Vec<f64> = f.values().iter().zip(v(r)).map(|(a, b)| a + b).collect();
            Some(cumulant::solve_cumulant_on(spec, &FunctionVector::new(g), &t_pos, tol)?.values)
        } else {
            None
        };
        let vr = (r > 0.0).then(|| v(r).to_vec());
        for &t in &t_sorted {
            if t == 0.0 {
                let e = (-mu.pair(f)).exp();
                cells.push(PanelCell {
                    t,
                    r,
                    estimate: Estimate::exact(e),
                    exact: e,
                    ess: f64::INFINITY,
                });
                continue;
            }
            let k = t_pos.iter().position(|&q| q == t).expect("positive t");
            let a = pair(mu.masses(), vt_f[k].values());
            let b = match &shifted {
                Some(sv) => pair(mu.masses(), sv[k].values()),
                None => pair(mu.masses(), v(t)),
            };
            let exact = (-a).exp() * -(-(b - a)).exp_m1() / surv(t + r);
            let (estimate, ess) = match reweighted_with(&ens, t, r, vr.as_deref()) {
                Ok(law) => (law.laplace(f.values()), law.ess),
                Err(LabError::NoSurvivors { .. }) => (
                    Estimate {
                        value: f64::NAN,
                        stderr: f64::NAN,
                    },
                    0.0,
                ),
                Err(e) => return Err(e),
            };
            cells.push(PanelCell {
                t,
                r,
                estimate,
                exact,
                ess,
            });
        }
    }
    cells.sort_by(|x, y| x.t.total_cmp(&y.t).then(x.r.total_cmp(&y.r)));

    let mut rows = Vec::new();
    for (k, &t) in t_sorted.iter().enumerate() {
        let g = (-triplet.lambda * t).exp();
        let s = ens.survival_at(k);
        let phi_mass = if t == 0.0 {
            Estimate::exact(mu_phi)
        } else {
            law_conditioned(&ens, t, 0.0)
                .map(|l| l.mean(&triplet.phi))
                .unwrap_or(Estimate {
                    value: f64::NAN,
                    stderr: f64::NAN,
                })
        };
        rows.push(PanelRow {
            t,
            scaled_survival: Estimate {
                value: g * s.value,
                stderr: g * s.stderr,
            },
            scaled_survival_exact: g * surv(t),
            phi_mass,
            phi_mass_exact: mu_phi / (g * surv(t)),
        });
    }

    let ell = spectral::l_log_l_functional(spec, triplet);
    let t_big = t_sorted.last().copied().unwrap_or(0.0) + r_sorted.last().copied().unwrap_or(0.0);
    let target = if ell.is_finite() {
        Some(cumulant::q_inf_inf_laplace(
            spec,
            triplet,
            f,
            t_big.max(20.0) * 2.0,
            tol,
        )?)
    } else {
        None
    };

    let top = |g: &[f64]| g[g.len().saturating_sub(2)..].to_vec();
    let (tt, rr) = (top(&t_sorted), top(&r_sorted));
    let corner: Vec<&PanelCell> = cells
        .iter()
        .filter(|c| tt.contains(&c.t) && rr.contains(&c.r))
        .collect();
    let mut corner_spread: f64 = 0.0;
    let mut corner_stderr: f64 = 0.0;
    for (i, a) in corner.iter().enumerate() {
        for b in &corner[i + 1..] {
            corner_spread = corner_spread.max((a.estimate.value - b.estimate.value).abs());
            corner_stderr = corner_stderr.max(a.estimate.joint_stderr(&b.estimate));
        }
    }
    let stabilized = corner_spread <= 3.0 * corner_stderr
        && target.is_some_and(|q| {
            corner
                .iter()
                .all(|c| c.estimate.within(q, 3.0, (c.exact - q).abs()))
        });
    let first = rows.first().map_or(f64::NAN, |r| r.scaled_survival_exact);
    let last = rows.last().map_or(f64::NAN, |r| r.scaled_survival_exact);
    let phi_mass_increasing = rows
        .windows(2)
        .all(|w| w[1].phi_mass_exact > w[0].phi_mass_exact);
    Ok(DoubleLimitPanel {
        f: f.values().to_vec(),
        cells,
        rows,
        target,
        corner_spread,
        corner_stderr,
        stabilized,
        survival_decay: first / last,
        phi_mass_increasing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: f64,
    /// `Q^mu_{t,r}` panel minus the h-transform panel, per test point.
    pub difference: Vec<Estimate>,
    /// The same differences from the cumulant flow.
    pub exact: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HTransformSweep {
    pub t: f64,
    pub panel: Vec<LaplacePoint>,
    /// Mean h-transform density before normalization; should be 1.
    pub weight_mean: Estimate,
    pub weight_mean_ok: bool,
    pub rows: Vec<SweepRow>,
    /// `|difference|` non-increasing in `r` up to 3 SE of each step.
    pub monotone: bool,
    /// At the largest `r`, every difference within 3 joint SE plus its exact value.
    pub converged: bool,
    /// Direct conditioning against survival reweighting at the smallest
    /// positive `r` in the grid.
    pub consistency: Vec<PanelComparison>,
    pub passed: bool,
}

/// Compares `Q^mu_{t,r}` for each `r` in `r_grid` with `Q^mu_{t,inf}` on
/// the default panel. The conditioned laws come from one ensemble by
/// survival reweighting, the h-transform from a second one.
pub fn htransform_sweep(
    spec: &ModelSpec,
    triplet: &EigenTriplet,
    mu: &MeasureVector,
    t: f64,
    r_grid: &[f64],
    config: &QConfig,
) -> Result<HTransformSweep> {
    triplet.require_subcritical()?;
    if !(t > 0.0) || r_grid.is_empty() {
        return Err(LabError::InvalidArgument(
            "sweep needs t > 0 and a non-empty r grid".into(),
        ));
    }
    let r_sorted = sorted_times(r_grid.to_vec());
    let tol = config.tol;
    let r_small = r_sorted.iter().copied().find(|&r| r > 0.0);
    let times = sorted_times(std::iter::once(t).chain(r_small.map(|r| t + r)).collect());
    let ens = simulate_ensemble(spec, mu, &config.with_times(times))?;

    let mut h_sim = config.with_times(vec![t]);
    h_sim.seed = crate::rng::derive(config.sim.seed, 1);
    let h_ens = simulate_ensemble(spec, mu, &h_sim)?;
    let h_law = htransform_from_ensemble(&h_ens, triplet, t)?;
    h_law.require_ess(config.ess_floor)?;
    let weight_mean = h_law.normalizer;
    let weight_mean_ok = weight_mean.within(1.0, 3.0, 0.0);

    let panel = default_panel();
    let fs: Vec<FunctionVector> = panel
        .iter()
        .map(|p| p.function(triplet))
        .collect::<Result<_>>()?;
    let h_est: Vec<Estimate> = fs.iter().map(|f| h_law.laplace(f.values())).collect();
    let h_exact: Vec<f64> = fs
        .iter()
        .map(|f| cumulant::htransform_laplace(spec, triplet, mu, f, t, tol))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &r in &r_sorted {
        let law = law_reweighted(spec, &ens, t, r, tol)?;
        law.require_ess(config.ess_floor)?;
        let mut difference = Vec::new();
        let mut exact = Vec::new();
        for (k, f) in fs.iter().enumerate() {
            let c = law.laplace(f.values());
            difference.push(Estimate {
                value: c.value - h_est[k].value,
                stderr: c.joint_stderr(&h_est[k]),
            });
            exact.push(cumulant::conditioned_laplace(spec, mu, f, t, r, tol)? - h_exact[k]);
        }
        rows.push(SweepRow {
            r,
            difference,
            exact,
        });
    }

    let monotone = rows.windows(2).all(|w| {
        w[0].difference
            .iter()
            .zip(&w[1].difference)
            .all(|(a, b)| b.value.abs() <= a.value.abs() + 3.0 * b.stderr)
    });
    let last = rows.last().expect("non-empty grid");
    let converged = last
        .difference
        .iter()
        .zip(&last.exact)
        .all(|(d, e)| d.within(0.0, 3.0, e.abs()));

    let mut consistency = Vec::new();
    if let Some(r) = r_small {
        let direct = law_conditioned(&ens, t, r)?;
        let reweighted = law_reweighted(spec, &ens, t, r, tol)?;
        for (p, f) in panel.iter().zip(&fs) {
            consistency.push(PanelComparison::new(
                *p,
                direct.laplace(f.values()),
                reweighted.laplace(f.values()),
                0.0,
            ));
        }
    }
    let passed = weight_mean_ok && monotone && converged && consistency.iter().all(|c| c.passed);
    Ok(HTransformSweep {
        t,
        panel,
        weight_mean,
        weight_mean_ok,
        rows,
        monotone,
        converged,
        consistency,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::Scheme;

    fn feller_config(n: usize, times: Vec<f64>) -> QConfig {
        let mut sim = SimConfig::new(0.05, n, 11, times);
        sim.scheme = Scheme::SplitExact;
        QConfig::new(sim)
    }

    #[test]
    fn r_zero_with_all_alive_is_unconditioned() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let cfg = feller_config(50, vec![0.0, 0.1]);
        let ens = simulate_ensemble(&spec, &MeasureVector::dirac(1, 0, 5.0), &cfg.sim).unwrap();
        let law = law_conditioned(&ens, 0.0, 0.0).unwrap();
        assert_eq!(law.len(), 50);
        assert!(law.weights.iter().all(|w| (w - 0.02).abs() < 1e-15));
        assert_eq!(law.normalizer.value, 1.0);
    }

    #[test]
    fn htransform_at_zero_is_the_start() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let triplet = spectral::triplet_for(&spec).unwrap();
        let mut cfg = feller_config(300, vec![0.0]);
        cfg.ess_floor = 10.0;
        let law =
            law_htransform(&spec, &triplet, &MeasureVector::dirac(1, 0, 2.0), 0.0, &cfg).unwrap();
        assert!(law.weights.iter().all(|w| (w - 1.0 / 300.0).abs() < 1e-15));
        assert!((law.mean(&[1.0]).value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_survivors_is_an_error() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let cfg = feller_config(5, vec![30.0]);
        let ens = simulate_ensemble(&spec, &MeasureVector::dirac(1, 0, 1e-3), &cfg.sim).unwrap();
        assert!(matches!(
            law_conditioned(&ens, 30.0, 0.0),
            Err(LabError::NoSurvivors { .. })
        ));
    }

    #[test]
    fn qinfty_zero_keeps_the_law() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let law = EmpiricalLaw::from_weighted(
            1,
            [(&[1.0][..], 1.0), (&[2.0][..], 3.0)].into_iter(),
            2,
            Provenance::Conditioned { t: 1.0, r: 0.0 },
        );
        let q = law_qinfty_r(&law, &spec, 0.0, 1e-10).unwrap();
        assert_eq!(q.weights, law.weights);
        let size_biased = q_inf_inf_from_yaglom(&law, &spectral::triplet_for(&spec).unwrap());
        assert!((size_biased.weights[0] - 0.25 / (0.25 + 1.5)).abs() < 1e-15);
    }

    #[test]
    fn resample_is_seeded() {
        let law = EmpiricalLaw::from_weighted(
            1,
            [(&[1.0][..], 1.0), (&[2.0][..], 1.0)].into_iter(),
            2,
            Provenance::QInfInf,
        );
        assert_eq!(law.resample(20, 3).unwrap(), law.resample(20, 3).unwrap());
    }

    #[test]
    fn panel_t_zero_column_is_exact() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let triplet = spectral::triplet_for(&spec).unwrap();
        let mu = MeasureVector::dirac(1, 0, 3.0);
        let cfg = feller_config(2000, vec![0.0]);
        let f = FunctionVector::new(vec![1.0]);
        let p =
            double_limit_panel(&spec, &triplet, &mu, &f, &[0.0, 1.0], &[0.0, 2.0], &cfg).unwrap();
        for c in p.cells.iter().filter(|c| c.t == 0.0) {
            assert_eq!(c.estimate.value, (-3.0f64).exp());
            assert!((c.exact - (-3.0f64).exp()).abs() < 1e-12);
        }
        assert!((p.target.unwrap() - 0.25).abs() < 1e-4);
    }
}
