//! Parameter sets of the manifest operations and their dispatch.

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::cumulant::{self, DEFAULT_TOL};
use crate::error::{LabError, Result};
use crate::model::{grey_condition, validate_model, FunctionVector, MeasureVector, ModelSpec};
use crate::qprocess::{self, default_panel, QConfig, TestFunction};
use crate::simulate::{self, SimConfig};
use crate::spectral::{self, EigenTriplet};
use crate::spine::{self, SpineConfig};

use super::accept::{self, AcceptOptions, Suite};
use super::manifest::{ExperimentManifest, ResultRecord};
use super::store::ResultStore;

pub const OPS: [&str; 10] = [
    "validate",
    "spectral",
    "cumulant",
    "extinction",
    "simulate",
    "yaglom",
    "qprocess",
    "panel",
    "spine",
    "accept",
];

fn default_tol() -> f64 {
    DEFAULT_TOL
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralParams {
    /// Remainder-profile grid; 20 log-spaced points on `[1/gap, 10/gap]`
    /// (or `[1, 10]` for one type) when absent.
    pub t_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantParams {
    pub f: Vec<f64>,
    pub horizon: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_points() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionParams {
    pub horizon: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateParams {
    pub mu0: Vec<f64>,
    #[serde(flatten)]
    pub sim: SimConfig,
    /// Attach the CSV mirror of the ensemble as a table.
    #[serde(default)]
    pub csv: bool,
}

fn default_r_yaglom() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YaglomParams {
    /// Initial measure; `nu` when absent.
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    pub t_large: f64,
    #[serde(default = "default_r_yaglom")]
    pub r_grid: Vec<f64>,
    #[serde(flatten)]
    pub q: QConfig,
}

fn default_r_sweep() -> Vec<f64> {
    vec![0.0, 1.0, 2.0, 4.0, 8.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QProcessParams {
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    pub t: f64,
    #[serde(default = "default_r_sweep")]
    pub r_grid: Vec<f64>,
    #[serde(flatten)]
    pub q: QConfig,
}

/// A named test function or explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionArg {
    Named(TestFunction),
    Values(Vec<f64>),
}

impl FunctionArg {
    fn resolve(&self, triplet: &EigenTriplet) -> Result<FunctionVector> {
        match self {
            FunctionArg::Named(t) => Ok(FunctionVector::new(t.values(triplet)?)),
            FunctionArg::Values(v) => Ok(FunctionVector::new(v.clone())),
        }
    }
}

fn default_f() -> FunctionArg {
    FunctionArg::Named(TestFunction::Phi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelParams {
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    #[serde(default = "default_f")]
    pub f: FunctionArg,
    pub t_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    #[serde(flatten)]
    pub q: QConfig,
}

fn default_spine_t() -> f64 {
    3.0
}

fn default_htransform_paths() -> usize {
    100_000
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineParams {
    /// Time of the panel comparison with the h-transform.
    #[serde(default = "default_spine_t")]
    pub t: f64,
    #[serde(default = "default_htransform_paths")]
    pub htransform_paths: usize,
    #[serde(default = "yes")]
    pub kappa: bool,
    #[serde(default = "yes")]
    pub compare: bool,
    #[serde(flatten)]
    pub config: SpineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptParams {
    pub suite: Suite,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

/// Output of a run before persistence: the record and binary attachments
/// that do not belong in JSON.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: ResultRecord,
    pub attachments: Vec<(String, Vec<u8>)>,
}

fn params<T: DeserializeOwned>(manifest: &ExperimentManifest) -> Result<T> {
    serde_json::from_value(manifest.params.clone())
        .map_err(|e| LabError::InvalidArgument(format!("parameters of `{}`: {e}", manifest.op)))
}

fn model(manifest: &ExperimentManifest) -> Result<ModelSpec> {
    manifest
        .model
        .as_ref()
        .ok_or_else(|| {
            LabError::InvalidArgument(format!("operation `{}` needs a model", manifest.op))
        })?
        .load()
}

fn measure(mu: &Option<Vec<f64>>, triplet: &EigenTriplet) -> Result<MeasureVector> {
    MeasureVector::new(mu.clone().unwrap_or_else(|| triplet.nu.clone()))
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| a * (b / a).powf(k as f64 / (n - 1) as f64))
        .collect()
}

fn linear_grid(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| horizon * k as f64 / n as f64).collect()
}

/// Runs the manifest's operation. Nothing is written to disk.
pub fn execute(manifest: &ExperimentManifest) -> Result<RunOutput> {
    let op = manifest.op.as_str();
    if !OPS.contains(&op) {
        return Err(LabError::UnknownOp(manifest.op.clone()));
    }
    let mut rec = ResultRecord::new(manifest);
    let mut attachments = Vec::new();
    if op == "accept" {
        let p: AcceptParams = params(manifest)?;
        let summary = accept::accept(
            p.suite,
            &AcceptOptions {
                scale: p.scale,
                seed: manifest.seed,
            },
        );
        for c in &summary.criteria {
            rec.check(&format!("criterion_{:02}", c.id), c.passed);
        }
        rec.table("acceptance", summary.to_csv());
        rec.summary(&summary)?;
        // the printed table carries wall times, which the record leaves out
        attachments.push(("acceptance.txt".to_string(), summary.table().into_bytes()));
        return Ok(RunOutput {
            record: rec,
            attachments,
        });
    }

    let spec = model(manifest)?;
    let validation = validate_model(&spec)?;
    if op == "validate" {
        let grey = grey_condition(&spec, None);
        rec.check("standing_conditions", validation.passed());
        rec.summary(&serde_json::json!({ "validation": validation, "grey": grey }))?;
        return Ok(RunOutput {
            record: rec,
            attachments,
        });
    }
    validation.into_result()?;
    let triplet = spectral::triplet_for(&spec).map_err(|e| e.context("spectral"))?;

    match op {
        "spectral" => {
            let p: SpectralParams = params(manifest)?;
            let grid = p.t_grid.unwrap_or_else(|| {
                let g = if triplet.gap.is_finite() {
                    triplet.gap
                } else {
                    1.0
                };
                log_grid(1.0 / g, 10.0 / g, 20)
            });
            let profile = spectral::h2_remainder(&spec, &triplet, &grid)
                .map_err(|e| e.context("spectral"))?;
            let ell = spectral::l_log_l_functional(&spec, &triplet);
            let spine_gen =
                spectral::spine_generator(&spec, &triplet).map_err(|e| e.context("spectral"))?;
            rec.exact("lambda", triplet.lambda)
                .exact("gap", triplet.gap)
                .exact("l_log_l", ell);
            for (x, (phi, nu)) in triplet.phi.iter().zip(&triplet.nu).enumerate() {
                rec.exact(&format!("phi_{x}"), *phi)
                    .exact(&format!("nu_{x}"), *nu);
            }
            rec.check("subcritical", triplet.is_subcritical());
            rec.table("remainder", profile.to_csv());
            rec.summary(&serde_json::json!({
                "triplet": triplet,
                "l_log_l": crate::stats::Estimate::exact(ell),
                "spine_generator": spine_gen,
                "remainder": profile,
            }))?;
        }
        "cumulant" => {
            let p: CumulantParams = params(manifest)?;
            let f = FunctionVector::new(p.f.clone());
            let sol =
                cumulant::solve_cumulant_on(&spec, &f, &linear_grid(p.horizon, p.points), p.tol)
                    .map_err(|e| e.context("cumulant"))?;
            if let Some(last) = sol.values.last() {
                for (x, v) in last.values().iter().enumerate() {
                    rec.exact(&format!("V_{x}"), *v);
                }
            }
            rec.table("cumulant", sol.to_csv());
            rec.summary(&sol.stats)?;
        }
        "extinction" => {
            let p: ExtinctionParams = params(manifest)?;
            let times: Vec<f64> = linear_grid(p.horizon, p.points)
                .into_iter()
                .skip(1)
                .collect();
            let curve = cumulant::extinction_curve(&spec, &times, p.tol)
                .map_err(|e| e.context("cumulant"))?;
            let k = times.len() - 1;
            for (x, v) in curve.v[k].values().iter().enumerate() {
                rec.exact(&format!("v_{x}"), *v);
            }
            rec.exact(
                "scaled_survival",
                (-triplet.lambda * times[k]).exp() * curve.survival_from_nu(k),
            );
            rec.table("extinction", curve.to_csv());
            rec.summary(&serde_json::json!({
                "delta": curve.delta,
                "theta": curve.theta,
                "theta_change": curve.theta_change,
            }))?;
        }
        "simulate" => {
            let mut p: SimulateParams = params(manifest)?;
            p.sim.seed = manifest.seed;
            let mu0 = MeasureVector::new(p.mu0.clone())?;
            let ens = simulate::simulate_ensemble(&spec, &mu0, &p.sim)
                .map_err(|e| e.context("simulate"))?;
            let one = vec![1.0; spec.n];
            let mut survival = Vec::new();
            for (k, t) in ens.record_times.iter().enumerate() {
                let s = ens.survival_at(k);
                rec.scalar(&format!("survival@{t}"), s)
                    .scalar(&format!("mass@{t}"), ens.mean_at(k, &one));
                survival.push((*t, s));
            }
            let martingale =
                simulate::martingale_check(&ens, &triplet).map_err(|e| e.context("simulate"))?;
            rec.check("martingale", martingale.passed);
            if p.csv {
                rec.table("ensemble", ens.to_csv());
            }
            let hash = ens.content_hash();
            rec.summary(&serde_json::json!({
                "ensemble_hash": hash,
                "n_paths": ens.n_paths(),
                "record_times": ens.record_times,
                "survival": survival,
                "martingale": martingale,
            }))?;
            attachments.push(("ensemble.bin".to_string(), ens.to_bytes()));
        }
        "yaglom" => {
            let mut p: YaglomParams = params(manifest)?;
            p.q.sim.seed = manifest.seed;
            let mu = measure(&p.mu, &triplet)?;
            let y = qprocess::yaglom_estimate(&spec, &triplet, &mu, p.t_large, &p.q)
                .map_err(|e| e.context("qprocess"))?;
            let qsd = qprocess::qsd_check(&spec, &triplet, &y, &p.r_grid, &p.q)
                .map_err(|e| e.context("qprocess"))?;
            let kappa = cumulant::kappa_deterministic(&spec, &triplet, 20.0, p.q.tol)
                .map_err(|e| e.context("cumulant"))?;
            let phi_mass = y.law.mean(&triplet.phi);
            rec.scalar("survival", y.survival)
                .exact("survival_exact", y.survival_exact);
            rec.scalar("phi_mass", phi_mass).exact("kappa", kappa.kappa);
            for (p, e) in default_panel()
                .iter()
                .zip(y.law.laplace_panel(&triplet, &default_panel())?)
            {
                rec.scalar(&format!("laplace[{p}]"), e);
            }
            rec.check("staleness", y.warning.is_none())
                .check("qsd", qsd.passed);
            rec.table("yaglom_law", y.law.to_csv());
            rec.summary(&serde_json::json!({
                "t_large": y.t,
                "survival": y.survival,
                "survival_exact": y.survival_exact,
                "ess": y.law.ess,
                "staleness": y.staleness,
                "remainder": y.remainder,
                "warning": y.warning,
                "phi_mass": phi_mass,
                "kappa": kappa.kappa,
                "qsd": qsd,
            }))?;
        }
        "qprocess" => {
            let mut p: QProcessParams = params(manifest)?;
            p.q.sim.seed = manifest.seed;
            let mu = measure(&p.mu, &triplet)?;
            let sweep = qprocess::htransform_sweep(&spec, &triplet, &mu, p.t, &p.r_grid, &p.q)
                .map_err(|e| e.context("qprocess"))?;
            rec.scalar("weight_mean", sweep.weight_mean);
            rec.check("weight_mean", sweep.weight_mean_ok)
                .check("monotone", sweep.monotone)
                .check("converged", sweep.converged)
                .check("consistency", sweep.consistency.iter().all(|c| c.passed));
            let mut csv = String::from("r,point,difference,stderr,exact\n");
            for row in &sweep.rows {
                for ((pt, d), e) in sweep.panel.iter().zip(&row.difference).zip(&row.exact) {
                    csv.push_str(&format!(
                        "{},{pt},{:e},{:e},{:e}\n",
                        row.r, d.value, d.stderr, e
                    ));
                }
            }
            rec.table("sweep", csv);
            rec.summary(&sweep)?;
        }
        "panel" => {
            let mut p: PanelParams = params(manifest)?;
            p.q.sim.seed = manifest.seed;
            let mu = measure(&p.mu, &triplet)?;
            let f = p.f.resolve(&triplet)?;
            let panel =
                qprocess::double_limit_panel(&spec, &triplet, &mu, &f, &p.t_grid, &p.r_grid, &p.q)
                    .map_err(|e| e.context("qprocess"))?;
            if let Some(q) = panel.target {
                rec.exact("target", q);
            }
            rec.exact("survival_decay", panel.survival_decay);
            rec.check("stabilized", panel.stabilized)
                .check("phi_mass_increasing", panel.phi_mass_increasing);
            rec.table("panel", panel.to_csv());
            rec.summary(&panel)?;
        }
        "spine" => {
            let mut p: SpineParams = params(manifest)?;
            p.config.seed = manifest.seed;
            let mut summary = serde_json::Map::new();
            if p.kappa {
                let k = spine::kappa_spine(&spec, &triplet, &p.config)
                    .map_err(|e| e.context("spine"))?;
                let det = cumulant::kappa_deterministic(&spec, &triplet, 20.0, DEFAULT_TOL)
                    .map_err(|e| e.context("cumulant"))?;
                rec.scalar("kappa_spine", k.kappa)
                    .exact("kappa_deterministic", det.kappa);
                rec.check("kappa_monotone", k.monotone);
                let mut csv = String::from("window,estimate,stderr\n");
                for row in &k.rows {
                    csv.push_str(&format!(
                        "{},{:e},{:e}\n",
                        row.window, row.estimate.value, row.estimate.stderr
                    ));
                }
                rec.table("kappa", csv);
                summary.insert("kappa".into(), serde_json::to_value(&k)?);
                summary.insert("kappa_deterministic".into(), serde_json::to_value(&det)?);
            }
            if p.compare {
                let r = spine::spine_vs_htransform(
                    &spec,
                    &triplet,
                    p.t,
                    &default_panel(),
                    &p.config,
                    p.htransform_paths,
                )
                .map_err(|e| e.context("spine"))?;
                rec.scalar("weight_mean", r.weight_mean);
                rec.check("panel", r.passed);
                summary.insert("comparison".into(), serde_json::to_value(&r)?);
            }
            rec.summary(&summary)?;
        }
        _ => unreachable!("checked against OPS"),
    }
    Ok(RunOutput {
        record: rec,
        attachments,
    })
}

/// Runs the manifest and returns its record.
pub fn run(manifest: &ExperimentManifest) -> Result<ResultRecord> {
    Ok(execute(manifest)?.record)
}

/// Runs the manifest and persists the record, its CSV sidecars and any
/// attachments in `store`.
pub fn run_and_store(
    manifest: &ExperimentManifest,
    store: &ResultStore,
) -> Result<(RunOutput, std::path::PathBuf)> {
    let out = execute(manifest)?;
    let dir = store.put(manifest, &out.record, &out.attachments)?;
    Ok((out, dir))
}
