//! Cumulant flow `V_t f`, extinction functional `v_t`, Laplace functionals
//! and the deterministic survival constant.
//!
//! `V_t f` solves `d/dt V = L V - psi_0(V)` with `V_0 = f`, where `L` is the
//! mean generator and `psi_0(x, z) = sigma(x)^2 z^2 + ∫ (e^{-zu} - 1 + zu) pi(x, du)`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::{grey_condition, pair, FunctionVector, GreyVerdict, MeasureVector, ModelSpec};
use crate::ode::{self, OdeOptions, OdeStats};
use crate::spectral::{self, EigenTriplet};

pub const DEFAULT_TOL: f64 = 1e-10;
/// Largest `theta` tried when building `v_delta`.
const THETA_MAX: f64 = 1e30;
/// Relative step of the directional derivative along `phi`.
const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantSolution {
    pub times: Vec<f64>,
    pub values: Vec<FunctionVector>,
    pub stats: OdeStats,
}

impl CumulantSolution {
    pub fn to_csv(&self) -> String {
        let n = self.values.first().map_or(0, |v| v.len());
        let mut out = String::from("t");
        for x in 0..n {
            out.push_str(&format!(",V{x}"));
        }
        out.push('\n');
        for (t, v) in self.times.iter().zip(&self.values) {
            out.push_str(&t.to_string());
            for x in v.values() {
                out.push_str(&format!(",{x:e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Right-hand side of the cumulant equation, precomputed per model.
struct Flow<'a> {
    spec: &'a ModelSpec,
    l: Vec<Vec<f64>>,
    s2: Vec<f64>,
}

impl<'a> Flow<'a> {
    fn new(spec: &'a ModelSpec) -> Self {
        let n = spec.n;
        let l = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| spec.motion[i][j] + if i == j { spec.beta[i] } else { 0.0 })
                    .collect()
            })
            .collect();
        let s2 = spec.sigma.iter().map(|s| s * s).collect();
        Flow { spec, l, s2 }
    }

    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        for (i, d) in dy.iter_mut().enumerate() {
            let lin = pair(&self.l[i], y);
            let z = y[i].max(0.0);
            *d = lin - self.s2[i] * z * z - self.spec.pi[i].jump_integral(z);
        }
    }

    fn solve(&self, y0: &[f64], times: &[f64], tol: f64) -> Result<(Vec<Vec<f64>>, OdeStats)> {
        ode::integrate(
            |y, dy| self.eval(y, dy),
            y0,
            times,
            &OdeOptions::relative(tol),
        )
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(LabError::InvalidArgument(format!(
            "tolerance must lie in (0, 1), got {tol}"
        )))
    }
}

fn check_f(spec: &ModelSpec, f: &[f64]) -> Result<()> {
    if f.len() != spec.n {
        return Err(LabError::InvalidArgument(format!(
            "f has length {}, expected {}",
            f.len(),
            spec.n
        )));
    }
    if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(LabError::InvalidArgument(format!(
            "f must be finite and non-negative, got {f:?}"
        )));
    }
    Ok(())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0])
    {
        return Err(LabError::InvalidArgument(
            "time grid must be finite, >= 0 and non-decreasing".into(),
        ));
    }
    Ok(())
}

/// `V_t f` on a uniform grid of 101 points over `[0, horizon]`.
pub fn solve_cumulant(
    spec: &ModelSpec,
    f: &FunctionVector,
    horizon: f64,
    tol: f64,
) -> Result<CumulantSolution> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(LabError::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let times: Vec<f64> = (0..=100).map(|k| horizon * k as f64 / 100.0).collect();
    solve_cumulant_on(spec, f, &times, tol)
}

/// `V_t f` at the given non-decreasing times.
pub fn solve_cumulant_on(
    spec: &ModelSpec,
    f: &FunctionVector,
    times: &[f64],
    tol: f64,
) -> Result<CumulantSolution> {
    check_tol(tol)?;
    check_f(spec, f.values())?;
    check_times(times)?;
    let (ys, stats) = Flow::new(spec).solve(f.values(), times, tol)?;
    Ok(CumulantSolution {
        times: times.to_vec(),
        values: ys.into_iter().map(FunctionVector::new).collect(),
        stats,
    })
}

/// `V_t f` at a single time.
pub fn cumulant_at(spec: &ModelSpec, f: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    check_tol(tol)?;
    check_f(spec, f)?;
    check_times(&[t])?;
    let (mut ys, _) = Flow::new(spec).solve(f, &[t], tol)?;
    Ok(ys.pop().expect("one output time"))
}

/// `exp(-mu(V_t f))`.
pub fn laplace_functional(
    spec: &ModelSpec,
    mu: &MeasureVector,
    f: &FunctionVector,
    t: f64,
    tol: f64,
) -> Result<f64> {
    if mu.is_null() {
        check_f(spec, f.values())?;
        return Ok(1.0);
    }
    let v = cumulant_at(spec, f.values(), t, tol)?;
    Ok((-pair(mu.masses(), &v)).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionCurve {
    pub times: Vec<f64>,
    pub v: Vec<FunctionVector>,
    pub nu_v: Vec<f64>,
    pub lambda: f64,
    /// Start of the flow; `v_delta` is the theta-limit of `V_delta(theta 1)`.
    pub delta: f64,
    pub theta: f64,
    /// Relative change of `V_delta(theta 1)` at the last doubling.
    pub theta_change: f64,
}

impl ExtinctionCurve {
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| s == t)
    }

    /// `1 - exp(-mu(v_t))` at grid index `k`.
    pub fn survival(&self, mu: &MeasureVector, k: usize) -> f64 {
        -(-mu.pair(&self.v[k])).exp_m1()
    }

    /// `1 - exp(-nu(v_t))` at grid index `k`.
    pub fn survival_from_nu(&self, k: usize) -> f64 {
        -(-self.nu_v[k]).exp_m1()
    }

    pub fn to_csv(&self) -> String {
        let n = self.v.first().map_or(0, |v| v.len());
        let mut out = String::from("t");
        for x in 0..n {
            out.push_str(&format!(",v{x}"));
        }
        out.push_str(",nu_vt,survival_from_nu,scaled_survival\n");
        for k in 0..self.times.len() {
            let t = self.times[k];
            out.push_str(&t.to_string());
            for x in self.v[k].values() {
                out.push_str(&format!(",{x:e}"));
            }
            let s = self.survival_from_nu(k);
            out.push_str(&format!(
                ",{:e},{:e},{:e}\n",
                self.nu_v[k],
                s,
                (-self.lambda * t).exp() * s
            ));
        }
        out
    }
}

/// `v_delta` as the monotone limit of `V_delta(theta 1)` under doubling.
fn v_delta(flow: &Flow, delta: f64, tol: f64) -> Result<(Vec<f64>, f64, f64)> {
    let n = flow.spec.n;
    let solve_tol = (tol * 1e-2).max(1e-14);
    let mut theta = 1.0;
    let mut prev: Option<Vec<f64>> = None;
    let mut change = f64::INFINITY;
    while theta <= THETA_MAX {
        let (mut ys, _) = flow.solve(&vec![theta; n], &[delta], solve_tol)?;
        let cur = ys.pop().expect("one output time");
        if let Some(p) = &prev {
            change = cur
                .iter()
                .zip(p)
                .map(|(c, q)| if *c > 0.0 { (c - q).abs() / c } else { 0.0 })
                .fold(0.0, f64::max);
            if change < tol {
                return Ok((cur, theta, change));
            }
        }
        prev = Some(cur);
        theta *= 2.0;
    }
    Err(LabError::ThetaLimit {
        delta,
        last_change: change,
    })
}

/// `v_t` at each of `times` (strictly positive, non-decreasing), built from
/// the theta-limit at a small `delta` and the flow `v_{t+s} = V_t v_s`.
pub fn extinction_curve(spec: &ModelSpec, times: &[f64], tol: f64) -> Result<ExtinctionCurve> {
    check_tol(tol)?;
    check_times(times)?;
    if times.is_empty() || times[0] <= 0.0 {
        return Err(LabError::InvalidArgument(
            "extinction times must be > 0".into(),
        ));
    }
    let grey = grey_condition(spec, None);
    if grey.verdict == GreyVerdict::Fails {
        return Err(LabError::Persistent(grey.diagnostic));
    }
    let triplet = spectral::triplet_for(spec)?;
    let delta = (times[0] / 2.0).min(1e-2);
    let flow = Flow::new(spec);
    let (v0, theta, theta_change) = v_delta(&flow, delta, tol)?;
    let shifted: Vec<f64> = times.iter().map(|t| t - delta).collect();
    let (ys, _) = flow.solve(&v0, &shifted, tol)?;
    let nu_v = ys.iter().map(|v| pair(&triplet.nu, v)).collect();
    Ok(ExtinctionCurve {
        times: times.to_vec(),
        v: ys.into_iter().map(FunctionVector::new).collect(),
        nu_v,
        lambda: triplet.lambda,
        delta,
        theta,
        theta_change,
    })
}

/// `v_t` for a single `t > 0`.
pub fn v_at(spec: &ModelSpec, t: f64, tol: f64) -> Result<Vec<f64>> {
    Ok(extinction_curve(spec, &[t], tol)?
        .v
        .pop()
        .expect("one time")
        .into_values())
}

/// `P_mu(X_t != 0) = 1 - exp(-mu(v_t))`.
pub fn survival_probability(spec: &ModelSpec, mu: &MeasureVector, t: f64, tol: f64) -> Result<f64> {
    if mu.is_null() {
        return Ok(0.0);
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let v = v_at(spec, t, tol)?;
    Ok(-(-pair(mu.masses(), &v)).exp_m1())
}

/// `E_mu[exp(-X_t(f)) | X_{t+r} != 0]`, exact up to solver error:
/// `(e^{-mu(V_t f)} - e^{-mu(V_t(f + v_r))}) / (1 - e^{-mu(v_{t+r})})`,
/// with `e^{-mu(v_t)}` in place of the second term when `r = 0`.
pub fn conditioned_laplace(
    spec: &ModelSpec,
    mu: &MeasureVector,
    f: &FunctionVector,
    t: f64,
    r: f64,
    tol: f64,
) -> Result<f64> {
    check_f(spec, f.values())?;
    if mu.is_null() {
        return Err(LabError::InvalidArgument(
            "conditioning the null measure on survival".into(),
        ));
    }
    if !(t >= 0.0 && r >= 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "need t, r >= 0, got ({t}, {r})"
        )));
    }
    if t + r == 0.0 {
        return Ok((-mu.pair(f)).exp());
    }
    let a = if t == 0.0 {
        mu.pair(f)
    } else {
        pair(mu.masses(), &cumulant_at(spec, f.values(), t, tol)?)
    };
    let b = if r == 0.0 {
        pair(mu.masses(), &v_at(spec, t, tol)?)
    } else {
        let vr = v_at(spec, r, tol)?;
        let g: Vec<f64> = f.values().iter().zip(&vr).map(|(x, y)| x + y).collect();
        if t == 0.0 {
            pair(mu.masses(), &g)
        } else {
            pair(mu.masses(), &cumulant_at(spec, &g, t, tol)?)
        }
    };
    let surv = -(-pair(mu.masses(), &v_at(spec, t + r, tol)?)).exp_m1();
    // e^{-a} - e^{-b} = e^{-a} (1 - e^{-(b - a)})
    Ok((-a).exp() * -(-(b - a)).exp_m1() / surv)
}

/// Directional derivative `d/ds V_t(f + s phi)` at `s = 0`, by a one-sided
/// Richardson difference so that the argument stays non-negative.
pub fn derivative_along(
    spec: &ModelSpec,
    f: &[f64],
    dir: &[f64],
    t: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let flow = Flow::new(spec);
    let tol = tol.min(1e-12);
    let s = FD_STEP * f.iter().chain(dir).fold(1.0_f64, |m, v| m.max(v.abs()))
        / dir.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let at = |k: f64| -> Result<Vec<f64>> {
        let g: Vec<f64> = f.iter().zip(dir).map(|(a, b)| a + k * s * b).collect();
        Ok(flow.solve(&g, &[t], tol)?.0.pop().expect("one time"))
    };
    let v0 = at(0.0)?;
    let v1 = at(1.0)?;
    let v2 = at(2.0)?;
    Ok((0..spec.n)
        .map(|i| (4.0 * (v1[i] - v0[i]) - (v2[i] - v0[i])) / (2.0 * s))
        .map(|d| d.max(0.0))
        .collect())
}

/// `Q^mu_{t,inf}[exp(-X_t(f))] = P_mu[X_t(phi) e^{-X_t(f)}] / (e^{lambda t} mu(phi))`.
pub fn htransform_laplace(
    spec: &ModelSpec,
    triplet: &EigenTriplet,
    mu: &MeasureVector,
    f: &FunctionVector,
    t: f64,
    tol: f64,
) -> Result<f64> {
    check_f(spec, f.values())?;
    if t == 0.0 {
        return Ok((-mu.pair(f)).exp());
    }
    let vt = cumulant_at(spec, f.values(), t, tol)?;
    let d = derivative_along(spec, f.values(), &triplet.phi, t, tol)?;
    let mu_phi = pair(mu.masses(), &triplet.phi);
    Ok((-pair(mu.masses(), &vt)).exp() * pair(mu.masses(), &d)
        / ((triplet.lambda * t).exp() * mu_phi))
}

/// Laplace functional of `Q_{inf,inf}` at `f`, the large-`t` value of the
/// `nu`-started h-transform. Meaningful only when the L log L functional is
/// finite.
pub fn q_inf_inf_laplace(
    spec: &ModelSpec,
    triplet: &EigenTriplet,
    f: &FunctionVector,
    t_large: f64,
    tol: f64,
) -> Result<f64> {
    let nu = MeasureVector::new(triplet.nu.clone())?;
    htransform_laplace(spec, triplet, &nu, f, t_large, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaRegime {
    /// Geometric convergence; the value is extrapolated.
    Converged,
    /// Monotone sub-geometric decay: reported as 0.
    Decaying,
    /// Neither pattern is clear at this horizon.
    Unsettled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    /// `(t, e^{-lambda t} (1 - e^{-nu(v_t)}))`.
    pub table: Vec<(f64, f64)>,
    pub kappa: f64,
    pub uncertainty: f64,
    pub regime: KappaRegime,
    pub warning: Option<String>,
}

impl KappaReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,scaled_survival\n");
        for (t, g) in &self.table {
            out.push_str(&format!("{t},{g:e}\n"));
        }
        out
    }
}

/// Relative last-step change below which the table counts as settled.
const KAPPA_SETTLED: f64 = 1e-7;
/// Successive-difference ratio above which decay is called sub-geometric.
const KAPPA_SLOW_RATIO: f64 = 0.8;

/// `K = lim e^{-lambda t} P_nu(X_t != 0)` from a 40-point grid on
/// `(0, horizon]`, with Aitken extrapolation of the last three points.
pub fn kappa_deterministic(
    spec: &ModelSpec,
    triplet: &EigenTriplet,
    horizon: f64,
    tol: f64,
) -> Result<KappaReport> {
    triplet.require_subcritical()?;
    if !(horizon > 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let times: Vec<f64> = (1..=40).map(|k| horizon * k as f64 / 40.0).collect();
    let curve = extinction_curve(spec, &times, tol)?;
    let table: Vec<(f64, f64)> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| (t, (-triplet.lambda * t).exp() * curve.survival_from_nu(k)))
        .collect();
    let g: Vec<f64> = table.iter().map(|p| p.1).collect();
    let m = g.len();
    let (g1, g2, g3) = (g[m - 3], g[m - 2], g[m - 1]);
    let (d1, d2) = (g2 - g1, g3 - g2);
    let q = if d1 != 0.0 { d2 / d1 } else { 0.0 };
    let aitken = if q > 0.0 && q < 1.0 {
        d2 * q / (1.0 - q)
    } else {
        0.0
    };
    let decreasing = g[m / 2..].windows(2).all(|w| w[1] < w[0]);

    let (kappa, uncertainty, regime, warning) = if d2.abs() <= KAPPA_SETTLED * g3 {
        (
            g3 + aitken,
            aitken.abs().max(tol * g3),
            KappaRegime::Converged,
            None,
        )
    } else if q > 0.0 && q < KAPPA_SLOW_RATIO {
        (g3 + aitken, aitken.abs(), KappaRegime::Converged, None)
    } else if decreasing && q >= KAPPA_SLOW_RATIO {
        (0.0, g3, KappaRegime::Decaying, None)
    } else {
        (
            g3 + aitken,
            d2.abs().max(aitken.abs()),
            KappaRegime::Unsettled,
            Some(format!(
                "table not settled at horizon {horizon}; try a longer horizon"
            )),
        )
    };
    Ok(KappaReport {
        table,
        kappa,
        uncertainty,
        regime,
        warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRatioRow {
    pub t: f64,
    pub r: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRatioTable {
    pub rows: Vec<RateRatioRow>,
    /// `(t, sup_r ratio)`.
    pub sup: Vec<(f64, f64)>,
}

impl RateRatioTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,r,ratio\n");
        for row in &self.rows {
            out.push_str(&format!("{},{},{:.15e}\n", row.t, row.r, row.ratio));
        }
        out
    }
}

/// `e^{lambda r} nu(v_t) / nu(v_{t+r})` over the grids.
pub fn rate_ratio(
    spec: &ModelSpec,
    triplet: &EigenTriplet,
    t_grid: &[f64],
    r_grid: &[f64],
    tol: f64,
) -> Result<RateRatioTable> {
    if t_grid.iter().any(|t| !(*t > 0.0)) || r_grid.iter().any(|r| !(*r >= 0.0)) {
        return Err(LabError::InvalidArgument(
            "rate ratio needs t > 0 and r >= 0".into(),
        ));
    }
    let mut all: Vec<f64> = t_grid
        .iter()
        .flat_map(|&t| std::iter::once(t).chain(r_grid.iter().map(move |&r| t + r)))
        .collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let curve = extinction_curve(spec, &all, tol)?;
    let nu_v = |t: f64| curve.nu_v[curve.index_of(t).expect("time on grid")];
    let mut rows = Vec::new();
    let mut sup = Vec::new();
    for &t in t_grid {
        let mut best = f64::NEG_INFINITY;
        for &r in r_grid {
            let ratio = if r == 0.0 {
                1.0
            } else {
                (triplet.lambda * r).exp() * nu_v(t) / nu_v(t + r)
            };
            best = best.max(ratio);
            rows.push(RateRatioRow { t, r, ratio });
        }
        sup.push((t, best));
    }
    Ok(RateRatioTable { rows, sup })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn riccati(b: f64, c: f64, theta: f64, t: f64) -> f64 {
        theta * (-b * t).exp() / (1.0 + c / b * theta * (1.0 - (-b * t).exp()))
    }

    #[test]
    fn zero_stays_zero() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let sol = solve_cumulant(&spec, &FunctionVector::new(vec![0.0]), 3.0, 1e-10).unwrap();
        assert!(sol.values.iter().all(|v| v.values()[0] == 0.0));
    }

    #[test]
    fn feller_cumulant_matches_riccati() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let v = cumulant_at(&spec, &[1.0], 1.0, DEFAULT_TOL).unwrap()[0];
        assert!((v / riccati(1.0, 1.0, 1.0, 1.0) - 1.0).abs() < 1e-9, "{v}");
        assert!((v - 0.225399).abs() < 1e-6);
    }

    #[test]
    fn feller_extinction_matches_closed_form() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let c = extinction_curve(&spec, &[1.0, 2.0], DEFAULT_TOL).unwrap();
        let exact = |t: f64| (-t).exp() / (1.0 - (-t).exp());
        assert!((c.v[0].values()[0] / exact(1.0) - 1.0).abs() < 1e-8);
        assert!((c.v[1].values()[0] / exact(2.0) - 1.0).abs() < 1e-8);
        let s = c.survival(&MeasureVector::dirac(1, 0, 1.0), 0);
        assert!((s - 0.44120).abs() < 1e-5);
    }

    #[test]
    fn negative_f_rejected() {
        let spec = ModelSpec::feller(1.0, 1.0);
        assert!(cumulant_at(&spec, &[-1.0], 1.0, 1e-8).is_err());
    }

    #[test]
    fn persistent_model_refused() {
        let spec = ModelSpec::feller(1.0, 0.0);
        assert!(matches!(
            extinction_curve(&spec, &[1.0], 1e-8),
            Err(LabError::Persistent(_))
        ));
    }

    #[test]
    fn null_measure_laplace_is_one() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let l = laplace_functional(
            &spec,
            &MeasureVector::null(1),
            &FunctionVector::new(vec![3.0]),
            1.0,
            1e-8,
        )
        .unwrap();
        assert_eq!(l, 1.0);
    }

    #[test]
    fn conditioned_laplace_yaglom_limit() {
        // Yaglom law of Feller(b = c = 1) is Exp(1): Laplace at 1 is 1/2
        let spec = ModelSpec::feller(1.0, 1.0);
        let mu = MeasureVector::dirac(1, 0, 1.0);
        let l = conditioned_laplace(
            &spec,
            &mu,
            &FunctionVector::new(vec![1.0]),
            20.0,
            0.0,
            1e-10,
        )
        .unwrap();
        assert!((l - 0.5).abs() < 1e-6, "{l}");
    }

    #[test]
    fn htransform_limit_is_size_biased_exponential() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let tr = spectral::triplet_for(&spec).unwrap();
        let l =
            q_inf_inf_laplace(&spec, &tr, &FunctionVector::new(vec![1.0]), 25.0, 1e-12).unwrap();
        assert!((l - 0.25).abs() < 1e-6, "{l}");
    }

    #[test]
    fn kappa_feller() {
        let spec = ModelSpec::feller(1.0, 2.0);
        let tr = spectral::triplet_for(&spec).unwrap();
        let k = kappa_deterministic(&spec, &tr, 20.0, 1e-10).unwrap();
        assert_eq!(k.regime, KappaRegime::Converged);
        assert!((k.kappa - 0.5).abs() < 1e-6, "{}", k.kappa);
    }

    #[test]
    fn rate_ratio_at_zero_is_one() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let tr = spectral::triplet_for(&spec).unwrap();
        let table = rate_ratio(&spec, &tr, &[2.0], &[0.0, 1.0], 1e-10).unwrap();
        assert_eq!(table.rows[0].ratio, 1.0);
    }
}
