//! The twelve acceptance criteria and the suite runner.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cumulant::{self, DEFAULT_TOL};
use crate::error::{LabError, Result};
use crate::model::{FunctionVector, JumpMeasureSpec, MeasureVector, ModelSpec};
use crate::qprocess::{self, QConfig, TestFunction};
use crate::simulate::{self, Scheme, SimConfig};
use crate::spectral::{self, EigenTriplet};
use crate::spine::{self, ContinuousMode, SpineConfig};
use crate::stats::lossless;
use crate::{quad, rng};

use super::shipped_models;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Suite {
    Deterministic,
    MonteCarlo,
    Full,
}

impl std::str::FromStr for Suite {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "DETERMINISTIC" => Ok(Suite::Deterministic),
            "MONTECARLO" | "MONTE_CARLO" => Ok(Suite::MonteCarlo),
            "FULL" => Ok(Suite::Full),
            _ => Err(LabError::InvalidArgument(format!(
                "unknown suite `{s}` (DETERMINISTIC, MONTECARLO, FULL)"
            ))),
        }
    }
}

impl Suite {
    pub fn criteria(self) -> Vec<u8> {
        match self {
            Suite::Deterministic => vec![1, 2, 3, 4, 5, 12],
            Suite::MonteCarlo => vec![6, 7, 8, 9, 10, 11],
            Suite::Full => (1..=12).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Kind {
    Deterministic,
    MonteCarlo,
}

/// Knobs of a suite run. `scale` multiplies every Monte-Carlo sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptOptions {
    pub scale: f64,
    pub seed: u64,
}

impl Default for AcceptOptions {
    fn default() -> Self {
        AcceptOptions {
            scale: 1.0,
            seed: 20240601,
        }
    }
}

impl AcceptOptions {
    fn paths(&self, n: usize) -> usize {
        ((n as f64 * self.scale).round() as usize).max(100)
    }
}

/// One line of the table. `tolerance` is the allowed `|estimate - target|`
/// unless the label says otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub label: String,
    #[serde(with = "lossless")]
    pub target: f64,
    #[serde(with = "lossless")]
    pub estimate: f64,
    #[serde(with = "lossless")]
    pub tolerance: f64,
    pub passed: bool,
    /// Reported but not scored.
    #[serde(default)]
    pub diagnostic: bool,
}

impl CheckRow {
    fn near(label: impl Into<String>, target: f64, estimate: f64, tolerance: f64) -> Self {
        CheckRow {
            label: label.into(),
            target,
            estimate,
            tolerance,
            passed: (estimate - target).abs() <= tolerance,
            diagnostic: false,
        }
    }

    fn flag(
        label: impl Into<String>,
        target: f64,
        estimate: f64,
        tolerance: f64,
        passed: bool,
    ) -> Self {
        CheckRow {
            label: label.into(),
            target,
            estimate,
            tolerance,
            passed,
            diagnostic: false,
        }
    }

    fn info(label: impl Into<String>, target: f64, estimate: f64, tolerance: f64) -> Self {
        CheckRow {
            diagnostic: true,
            ..CheckRow::near(label, target, estimate, tolerance)
        }
    }

    pub fn status(&self) -> &'static str {
        match (self.diagnostic, self.passed) {
            (true, _) => "info",
            (false, true) => "yes",
            (false, false) => "NO",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: String,
    pub kind: Kind,
    pub rows: Vec<CheckRow>,
    pub passed: bool,
    pub error: Option<String>,
    /// Wall time; not serialized so that records stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!(
            "criterion {:>2} {status}  {} ({:.1} s)",
            self.id, self.title, self.seconds
        );
        if let Some(e) = &self.error {
            let _ = write!(s, ": {e}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptSummary {
    pub suite: Suite,
    pub options: AcceptOptions,
    pub criteria: Vec<CriterionReport>,
    pub passed: bool,
}

impl AcceptSummary {
    /// Fixed-width table: criterion, check, target, estimate, tolerance, pass.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<4} {:<52} {:>14} {:>14} {:>11}  {}\n",
            "crit", "check", "target", "estimate", "tolerance", "pass"
        );
        for c in &self.criteria {
            for r in &c.rows {
                let _ = writeln!(
                    out,
                    "{:<4} {:<52} {:>14.7e} {:>14.7e} {:>11.3e}  {}",
                    c.id,
                    r.label,
                    r.target,
                    r.estimate,
                    r.tolerance,
                    r.status()
                );
            }
            if let Some(e) = &c.error {
                let _ = writeln!(out, "{:<4} error: {e}", c.id);
            }
        }
        for c in &self.criteria {
            out.push_str(&c.line());
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("criterion,check,target,estimate,tolerance,pass,diagnostic\n");
        for c in &self.criteria {
            for r in &c.rows {
                let _ = writeln!(
                    out,
                    "{},\"{}\",{:e},{:e},{:e},{},{}",
                    c.id, r.label, r.target, r.estimate, r.tolerance, r.passed, r.diagnostic
                );
            }
        }
        out
    }
}

pub const TITLES: [&str; 12] = [
    "cumulant oracle (Feller closed form)",
    "normalized survival limit K at t = 20",
    "rate ratio table at t = 10",
    "spectral residuals on random 3-type models",
    "L log L dichotomy",
    "simulator fidelity",
    "Yaglom limit, restart survival and phi-mass identity",
    "h-transform against conditioning on survival",
    "spine sampler against h-transform",
    "K by spine immigration",
    "double-limit panel in both regimes",
    "semigroup property of the cumulant flow",
];

pub fn kind_of(id: u8) -> Kind {
    if matches!(id, 6..=11) {
        Kind::MonteCarlo
    } else {
        Kind::Deterministic
    }
}

/// Runs one criterion. Errors are folded into a failing report.
pub fn criterion(id: u8, opts: &AcceptOptions) -> CriterionReport {
    let start = Instant::now();
    let rows = match id {
        1 => c1_cumulant_oracle(),
        2 => c2_kappa(),
        3 => c3_rate_ratio(),
        4 => c4_spectral(opts),
        5 => c5_l_log_l(),
        6 => c6_simulator(opts),
        7 => c7_yaglom(opts),
        8 => c8_htransform(opts),
        9 => c9_spine(opts),
        10 => c10_kappa_spine(opts),
        11 => c11_panel(opts),
        12 => c12_semigroup(opts),
        _ => Err(LabError::InvalidArgument(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let title = TITLES
        .get(usize::from(id).wrapping_sub(1))
        .copied()
        .unwrap_or("unknown")
        .to_string();
    let (rows, error) = match rows {
        Ok(rows) => (rows, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let mut passed =
        error.is_none() && !rows.is_empty() && rows.iter().all(|r| r.passed || r.diagnostic);
    // runtime budgets are part of these criteria
    match id {
        1 => passed &= seconds < 1.0,
        2 => passed &= seconds < 5.0,
        _ => {}
    }
    CriterionReport {
        id,
        title,
        kind: kind_of(id),
        rows,
        passed,
        error,
        seconds,
    }
}

pub fn accept(suite: Suite, opts: &AcceptOptions) -> AcceptSummary {
    let criteria: Vec<CriterionReport> = suite
        .criteria()
        .into_iter()
        .map(|id| criterion(id, opts))
        .collect();
    let passed = criteria.iter().all(|c| c.passed);
    AcceptSummary {
        suite,
        options: *opts,
        criteria,
        passed,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c1_cumulant_oracle() -> Result<Vec<CheckRow>> {
    let spec = ModelSpec::feller(1.0, 1.0);
    let v1 = cumulant::cumulant_at(&spec, &[1.0], 1.0, DEFAULT_TOL)?[0];
    let ext = cumulant::v_at(&spec, 1.0, DEFAULT_TOL)?[0];
    let e = (-1.0f64).exp();
    let v1_exact = e / (1.0 + (1.0 - e));
    let ext_exact = e / (1.0 - e);
    Ok(vec![
        CheckRow::flag(
            "V_1(1) relative error vs closed form",
            v1_exact,
            v1,
            1e-6,
            rel(v1, v1_exact) <= 1e-6,
        ),
        CheckRow::flag(
            "v_1 relative error vs closed form",
            ext_exact,
            ext,
            1e-6,
            rel(ext, ext_exact) <= 1e-6,
        ),
        // the printed targets carry six decimals
        CheckRow::near(
            "V_1(1) vs 0.225399 to the last printed digit",
            0.225399,
            v1,
            1e-6,
        ),
        CheckRow::near(
            "v_1 vs 0.581977 to the last printed digit",
            0.581977,
            ext,
            1e-6,
        ),
    ])
}

fn scaled_survival_at(spec: &ModelSpec, triplet: &EigenTriplet, t: f64) -> Result<f64> {
    let curve = cumulant::extinction_curve(spec, &[t], DEFAULT_TOL)?;
    Ok((-triplet.lambda * t).exp() * curve.survival_from_nu(0))
}

fn c2_kappa() -> Result<Vec<CheckRow>> {
    let cases = [
        ("Feller b=c=1", ModelSpec::feller(1.0, 1.0), 1.0),
        ("Feller b=1 c=2", ModelSpec::feller(1.0, 2.0), 0.5),
        (
            "symmetric 2-type, sigma=1",
            ModelSpec::symmetric_two_type(1.0, -1.0, 1.0, JumpMeasureSpec::Zero),
            1.0,
        ),
    ];
    let mut rows = Vec::new();
    for (name, spec, k) in cases {
        let triplet = spectral::triplet_for(&spec)?;
        let g = scaled_survival_at(&spec, &triplet, 20.0)?;
        rows.push(CheckRow::near(
            format!("{name}: e^(-lambda t) P_nu(X_t != 0)"),
            k,
            g,
            1e-4,
        ));
    }
    Ok(rows)
}

fn c3_rate_ratio() -> Result<Vec<CheckRow>> {
    let spec = ModelSpec::feller(1.0, 1.0);
    let triplet = spectral::triplet_for(&spec)?;
    let r_grid: Vec<f64> = (0..=40).map(|k| 0.5 * k as f64).collect();
    let table = cumulant::rate_ratio(&spec, &triplet, &[10.0], &r_grid, DEFAULT_TOL)?;
    let sup = table.sup[0].1;
    let inf = table
        .rows
        .iter()
        .map(|r| r.ratio)
        .fold(f64::INFINITY, f64::min);
    Ok(vec![
        CheckRow::flag(
            "sup_r ratio in [1, 1 + 1e-4]",
            1.0,
            sup,
            1e-4,
            (1.0 - 1e-12..=1.0 + 1e-4).contains(&sup),
        ),
        CheckRow::flag("inf_r ratio >= 1", 1.0, inf, 1e-12, inf >= 1.0 - 1e-12),
    ])
}

/// Random irreducible 3-type model: all off-diagonal rates positive.
pub fn random_three_type<R: Rng>(rng: &mut R) -> ModelSpec {
    let n = 3;
    let mut motion = vec![vec![0.0; n]; n];
    for (x, row) in motion.iter_mut().enumerate() {
        let mut sum = 0.0;
        for (y, a) in row.iter_mut().enumerate() {
            if x != y {
                *a = rng.random_range(0.1..2.0);
                sum += *a;
            }
        }
        row[x] = -sum;
    }
    let beta = (0..n).map(|_| rng.random_range(-2.0..0.5)).collect();
    let sigma = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    ModelSpec::new(motion, beta, sigma, vec![JumpMeasureSpec::Zero; n]).expect("well-formed")
}

fn c4_spectral(opts: &AcceptOptions) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng::derive(opts.seed, 4));
    let (mut eig, mut stat, mut decay) = (0.0f64, 0.0f64, f64::INFINITY);
    let models = 25;
    for _ in 0..models {
        let spec = random_three_type(&mut rng);
        let l = spectral::mean_generator(&spec);
        let t = spectral::eigen_triplet(&l, true)?;
        let phi = nalgebra::DVector::from_vec(t.phi.clone());
        let nu = nalgebra::RowDVector::from_vec(t.nu.clone());
        let scale = l.amax() + t.lambda.abs();
        let right = (&l * &phi - &phi * t.lambda).amax() / (scale * phi.amax());
        let left = (&nu * &l - &nu * t.lambda).amax() / (scale * nu.amax());
        eig = eig.max(right).max(left);
        stat = stat.max(spectral::spine_generator(&spec, &t)?.stationarity_residual);
        let profile = spectral::h2_remainder(&spec, &t, &[1.0 / t.gap, 10.0 / t.gap])?;
        decay = decay.min(profile.points[0].1 / profile.points[1].1);
    }
    Ok(vec![
        CheckRow::flag(
            format!("max eigen residual over {models} models"),
            0.0,
            eig,
            1e-10,
            eig <= 1e-10,
        ),
        CheckRow::flag(
            "max nu~ stationarity residual",
            0.0,
            stat,
            1e-12,
            stat <= 1e-12,
        ),
        CheckRow::flag(
            "min remainder decay 1/gap -> 10/gap (>= tol)",
            100.0,
            decay,
            100.0,
            decay >= 100.0,
        ),
    ])
}

fn log_tail(theta: f64) -> ModelSpec {
    ModelSpec::single_type(
        -1.0,
        1.0,
        JumpMeasureSpec::LogPerturbedTail {
            theta,
            u_min: std::f64::consts::E,
            c: 1.0,
        },
    )
}

/// `∫_e^inf u log(u) c u^{-2} (log u)^{-theta} du` by quadrature on
/// `[e, e^K]` in `u` plus the exact tail `(K)^{2-theta} / (theta - 2)`.
fn log_tail_reference(theta: f64) -> f64 {
    let big_k = 60;
    let mut body = 0.0;
    for k in 1..big_k {
        let (a, b) = ((k as f64).exp(), ((k + 1) as f64).exp());
        body += quad::integrate(|u| u.ln().powf(1.0 - theta) / u, a, b, 1e-15, 1e-13).value;
    }
    body + (big_k as f64).powf(2.0 - theta) / (theta - 2.0)
}

fn c5_l_log_l() -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for theta in [1.5, 2.0] {
        let spec = log_tail(theta);
        let e = spectral::l_log_l_functional(&spec, &spectral::triplet_for(&spec)?);
        rows.push(CheckRow::flag(
            format!("theta = {theta}: E infinite"),
            f64::INFINITY,
            e,
            0.0,
            e == f64::INFINITY,
        ));
    }
    let spec = log_tail(2.5);
    let e = spectral::l_log_l_functional(&spec, &spectral::triplet_for(&spec)?);
    let reference = log_tail_reference(2.5);
    rows.push(CheckRow::flag(
        "theta = 2.5: relative gap to quadrature + tail",
        reference,
        e,
        1e-6,
        rel(e, reference) <= 1e-6,
    ));
    rows.push(CheckRow::flag(
        "theta = 2.5: relative gap to c/(theta-2) = 2",
        2.0,
        e,
        1e-6,
        rel(e, 2.0) <= 1e-6,
    ));
    Ok(rows)
}

/// Documented O(dt) bias of the Euler survival estimate, per unit `dt`.
pub const EULER_SURVIVAL_BIAS_PER_DT: f64 = 2.5;

fn c6_simulator(opts: &AcceptOptions) -> Result<Vec<CheckRow>> {
    let spec = ModelSpec::feller(1.0, 1.0);
    let triplet = spectral::triplet_for(&spec)?;
    let dt = 1e-3;
    let config = SimConfig::new(
        dt,
        opts.paths(100_000),
        rng::derive(opts.seed, 6),
        vec![0.5, 1.0],
    );
    let ens = simulate::simulate_ensemble(&spec, &MeasureVector::dirac(1, 0, 1.0), &config)?;
    let p_exact =
        cumulant::survival_probability(&spec, &MeasureVector::dirac(1, 0, 1.0), 1.0, DEFAULT_TOL)?;
    let s = ens.survival_at(1);
    let m = ens.mean_at(1, &[1.0]);
    let mart = simulate::martingale_check(&ens, &triplet)?;
    let bias = EULER_SURVIVAL_BIAS_PER_DT * dt;
    let mut rows = vec![
        CheckRow::near(
            "P(X_1 != 0) vs 0.44120 (3 SE + O(dt) bias)",
            0.44120,
            s.value,
            3.0 * s.stderr + bias,
        ),
        CheckRow::near(
            "P(X_1 != 0) vs 1 - exp(-v_1)",
            p_exact,
            s.value,
            3.0 * s.stderr + bias,
        ),
        CheckRow::near(
            "E[X_1] vs e^-1 (3 SE)",
            (-1.0f64).exp(),
            m.value,
            3.0 * m.stderr,
        ),
    ];
    for row in &mart.rows {
        rows.push(CheckRow::near(
            format!("mean of e^(-lambda t) X_t(phi) at t = {}", row.t),
            mart.target,
            row.mean.value,
            3.0 * row.mean.stderr,
        ));
    }
    Ok(rows)
}

fn q_config(opts: &AcceptOptions, n: usize, dt: f64, salt: u64) -> QConfig {
    let mut sim = SimConfig::new(dt, opts.paths(n), rng::derive(opts.seed, salt), vec![]);
    sim.scheme = Scheme::SplitExact;
    QConfig::new(sim)
}

fn c7_yaglom(opts: &AcceptOptions) -> Result<Vec<CheckRow>> {
    let spec = ModelSpec::feller(1.0, 1.0);
    let triplet = spectral::triplet_for(&spec)?;
    let mu = MeasureVector::dirac(1, 0, 40.0);
    let t = 8.0;
    let config = q_config(opts, 100_000, 0.05, 7);
    let y = qprocess::yaglom_estimate(&spec, &triplet, &mu, t, &config)?;
    let one = FunctionVector::constant(1, 1.0);
    let lap = y.law.laplace(one.values());
    let lap_bias =
        (cumulant::conditioned_laplace(&spec, &mu, &one, t, 0.0, DEFAULT_TOL)? - 0.5).abs();
    let qsd = qprocess::qsd_check(&spec, &triplet, &y, &[1.0], &config)?;
    let row = &qsd.rows[0];
    let kappa = cumulant::kappa_deterministic(&spec, &triplet, 20.0, DEFAULT_TOL)?.kappa;
    let phi_mass = y.law.mean(&triplet.phi);
    let phi_exact = mu.masses()[0] * triplet.phi[0] * (triplet.lambda * t).exp() / y.survival_exact;
    let m_bias = (phi_exact * kappa - 1.0).abs();
    Ok(vec![
        CheckRow::near(
            "Laplace of Q_{t,0} at theta = 1 vs 0.5",
            0.5,
            lap.value,
            3.0 * lap.stderr + lap_bias,
        ),
        CheckRow::near(
            "restart survival at r = 1 vs e^-1",
            row.target,
            row.survival.value,
            3.0 * row.survival.stderr + row.bias,
        ),
        CheckRow::near(
            "phi-mass of Q_{t,0} times K vs 1",
            1.0,
            phi_mass.value * kappa,
            3.0 * phi_mass.stderr * kappa + m_bias,
        ),
    ])
}

fn c8_htransform(opts: &AcceptOptions) -> Result<Vec<CheckRow>> {
    let spec = ModelSpec::feller(1.0, 1.0);
    let triplet = spectral::triplet_for(&spec)?;
    let mu = MeasureVector::dirac(1, 0, 10.0);
    let config = q_config(opts, 100_000, 0.05, 8);
    let sweep = qprocess::htransform_sweep(
        &spec,
        &triplet,
        &mu,
        4.0,
        &[0.0, 1.0, 2.0, 4.0, 8.0],
        &config,
    )?;
    let w = sweep.weight_mean;
    let mut rows = vec![CheckRow::near(
        "h-transform weight mean vs 1",
        1.0,
        w.value,
        3.0 * w.stderr,
    )];
    for (k, p) in sweep.panel.iter().enumerate() {
        // largest step up of |difference| beyond 3 SE of the later value
        let excess = sweep
            .rows
            .windows(2)
            .map(|w| {
                w[1].difference[k].value.abs()
                    - w[0].difference[k].value.abs()
                    - 3.0 * w[1].difference[k].stderr
            })
            .fold(f64::NEG_INFINITY, f64::max);
        rows.push(CheckRow::flag(
            format!("[{p}] increase of |Q_(t,r) - Q_(t,inf)| in r, net of 3 SE"),
            0.0,
            excess,
            0.0,
            excess <= 0.0,
        ));
        let last = sweep.rows.last().expect("grid");
        let d = last.difference[k];
        rows.push(CheckRow::near(
            format!("[{p}] difference at r = 8"),
            0.0,
            d.value,
            3.0 * d.stderr + last.exact[k].abs(),
        ));
    }
    for c in &sweep.consistency {
        rows.push(CheckRow::near(
            format!("[{}] direct vs reweighted Q_(t,1)", c.point),
            c.second.value,
            c.first.value,
            3.0 * c.first.joint_stderr(&c.second),
        ));
    }
    Ok(rows)
}

fn c9_spine(opts: &AcceptOptions) -> Result<Vec<CheckRow>> {
    let cases = [
        ("Feller", ModelSpec::feller(1.0, 1.0)),
        (
            "atoms",
            ModelSpec::single_type(
                -1.0,
                0.0,
                JumpMeasureSpec::AtomList {
                    atoms: vec![(0.5, 1.0), (2.0, 0.3)],
                },
            ),
        ),
    ];
    let mut rows = Vec::new();
    for (k, (name, spec)) in cases.into_iter().enumerate() {
        let triplet = spectral::triplet_for(&spec)?;
        let config = SpineConfig::new(
            0.05,
            opts.paths(40_000),
            rng::derive(opts.seed, 90 + k as u64),
        );
        let report = spine::spine_vs_htransform(
            &spec,
            &triplet,
            3.0,
            &qprocess::default_panel(),
            &config,
            opts.paths(200_000),
        )?;
        rows.push(CheckRow::near(
            format!("{name}: h-transform weight mean"),
            1.0,
            report.weight_mean.value,
            3.0 * report.weight_mean.stderr,
        ));
        for c in &report.rows {
            rows.push(CheckRow::near(
                format!("{name}: [{}] spine vs h-transform", c.point),
                c.htransform.value,
                c.spine.value,
                3.0 * c.spine.joint_stderr(&c.htransform) + c.eps_budget + c.delta_i_budget,
            ));
        }
    }
    Ok(rows)
}

fn c10_kappa_spine(opts: &AcceptOptions) -> Result<Vec<CheckRow>> {
    let spec = ModelSpec::feller(1.0, 1.0);
    let triplet = spectral::triplet_for(&spec)?;
    let mut config = SpineConfig::new(0.05, opts.paths(100_000), rng::derive(opts.seed, 10));
    config.continuous = ContinuousMode::Drift;
    let report = spine::kappa_spine(&spec, &triplet, &config)?;
    let det = cumulant::kappa_deterministic(&spec, &triplet, 20.0, DEFAULT_TOL)?.kappa;
    let mut rows: Vec<CheckRow> = report
        .rows
        .iter()
        .map(|r| {
            CheckRow::info(
                format!("spine estimate, window T = {}", r.window),
                det,
                r.estimate.value,
                3.0 * r.estimate.stderr,
            )
        })
        .collect();
    rows.push(CheckRow::near(
        "kappa_spine at largest T within 5%",
        det,
        report.kappa.value,
        0.05 * det,
    ));
    rows.push(CheckRow::flag(
        "estimates non-increasing in T",
        1.0,
        f64::from(u8::from(report.monotone)),
        0.0,
        report.monotone,
    ));
    Ok(rows)
}

fn c11_panel(opts: &AcceptOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();

    let spec = ModelSpec::feller(1.0, 1.0);
    let triplet = spectral::triplet_for(&spec)?;
    let f = FunctionVector::new(TestFunction::Phi.values(&triplet)?);
    let config = q_config(opts, 100_000, 0.05, 11);
    let panel = qprocess::double_limit_panel(
        &spec,
        &triplet,
        &MeasureVector::dirac(1, 0, 20.0),
        &f,
        &[1.0, 2.0, 4.0, 6.0, 8.0],
        &[0.0, 1.0, 2.0, 4.0, 8.0],
        &config,
    )?;
    let target = panel.target.unwrap_or(f64::NAN);
    rows.push(CheckRow::near(
        "Feller: Q_(inf,inf) Laplace at phi vs 0.25",
        0.25,
        target,
        1e-6,
    ));
    rows.push(CheckRow::flag(
        "Feller: corner spread <= 3 joint SE",
        0.0,
        panel.corner_spread,
        3.0 * panel.corner_stderr,
        panel.corner_spread <= 3.0 * panel.corner_stderr,
    ));
    let corner_t = [6.0, 8.0];
    let corner_r = [4.0, 8.0];
    for c in panel
        .cells
        .iter()
        .filter(|c| corner_t.contains(&c.t) && corner_r.contains(&c.r))
    {
        rows.push(CheckRow::near(
            format!("Feller: cell (t, r) = ({}, {}) vs 0.25", c.t, c.r),
            0.25,
            c.estimate.value,
            3.0 * c.estimate.stderr + (c.exact - 0.25).abs(),
        ));
    }

    let spec = log_tail(1.5);
    let triplet = spectral::triplet_for(&spec)?;
    let f = FunctionVector::new(TestFunction::Phi.values(&triplet)?);
    let config = q_config(opts, 20_000, 0.05, 111);
    let panel = qprocess::double_limit_panel(
        &spec,
        &triplet,
        &MeasureVector::dirac(1, 0, 20.0),
        &f,
        &[1.0, 2.0, 4.0, 8.0],
        &[0.0, 1.0],
        &config,
    )?;
    rows.push(CheckRow::flag(
        "E = inf: scaled survival decay first/last t (>= tol)",
        10.0,
        panel.survival_decay,
        10.0,
        panel.survival_decay >= 10.0,
    ));
    let (first, last) = (
        panel.rows.first().expect("rows"),
        panel.rows.last().expect("rows"),
    );
    rows.push(CheckRow::flag(
        "E = inf: exact phi-mass of Q_(t,0) increasing in t",
        first.phi_mass_exact,
        last.phi_mass_exact,
        f64::NAN,
        panel.phi_mass_increasing,
    ));
    // jumps far beyond any sampled size carry a (log U)^{-1/2} share of the
    // mean here, so simulated phi-masses are shown but not scored
    for row in panel.rows.iter().filter(|r| r.phi_mass.value.is_finite()) {
        rows.push(CheckRow::info(
            format!("E = inf: simulated phi-mass of Q_(t,0) at t = {}", row.t),
            row.phi_mass_exact,
            row.phi_mass.value,
            3.0 * row.phi_mass.stderr,
        ));
    }
    rows.push(CheckRow::flag(
        "E = inf: no Q_(inf,inf) target",
        f64::NAN,
        f64::NAN,
        f64::NAN,
        panel.target.is_none(),
    ));
    Ok(rows)
}

fn c12_semigroup(opts: &AcceptOptions) -> Result<Vec<CheckRow>> {
    let tol = DEFAULT_TOL;
    let mut rng = ChaCha8Rng::seed_from_u64(rng::derive(opts.seed, 12));
    let mut rows = Vec::new();
    for (name, spec) in shipped_models()? {
        let mut worst: f64 = 0.0;
        for _ in 0..3 {
            let t = rng.random_range(0.1..3.0);
            let s = rng.random_range(0.1..3.0);
            let f: Vec<f64> = (0..spec.n).map(|_| rng.random_range(0.0..3.0)).collect();
            let whole = cumulant::cumulant_at(&spec, &f, t + s, tol)?;
            let vs = cumulant::cumulant_at(&spec, &f, s, tol)?;
            let composed = cumulant::cumulant_at(&spec, &vs, t, tol)?;
            let scale = whole.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let err = whole
                .iter()
                .zip(&composed)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                / scale;
            worst = worst.max(err);
        }
        rows.push(CheckRow::flag(
            format!("{name}: max |V_(t+s) f - V_t V_s f| / max(1, |V f|)"),
            0.0,
            worst,
            10.0 * tol,
            worst <= 10.0 * tol,
        ));
    }
    Ok(rows)
}
