//! Finite-type model: motion generator, branching mechanism and the
//! measure/function vectors the rest of the crate works with.

mod grey;
mod jump;

pub use grey::{grey_condition, GreyReport, GreyVerdict, Mechanism};
pub use jump::{compensated_exp, JumpMeasureSpec, PiMoment, MAX_SAMPLED_MASS};

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

/// Tolerance on generator row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// The `(xi, psi)` model on `E = {0, .., n-1}`.
///
/// `motion` is the generator of the spatial Markov chain acting on
/// functions (`(A f)(x) = Σ_y A[x][y] f(y)`), so the mean semigroup is
/// `T_t = exp(t (A + diag(beta)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n: usize,
    pub motion: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub pi: Vec<JumpMeasureSpec>,
}

impl ModelSpec {
    /// Builds a spec after checking dimensions only. Semantic checks live in
    /// [`validate_model`].
    pub fn new(
        motion: Vec<Vec<f64>>,
        beta: Vec<f64>,
        sigma: Vec<f64>,
        pi: Vec<JumpMeasureSpec>,
    ) -> Result<Self> {
        let spec = ModelSpec {
            n: beta.len(),
            motion,
            beta,
            sigma,
            pi,
        };
        spec.check_structure()?;
        Ok(spec)
    }

    /// One-type Feller diffusion with `psi(z) = b z + c z^2`.
    pub fn feller(b: f64, c: f64) -> Self {
        ModelSpec {
            n: 1,
            motion: vec![vec![0.0]],
            beta: vec![-b],
            sigma: vec![c.sqrt()],
            pi: vec![JumpMeasureSpec::Zero],
        }
    }

    /// One-type model with an arbitrary jump measure.
    pub fn single_type(beta: f64, sigma: f64, pi: JumpMeasureSpec) -> Self {
        ModelSpec {
            n: 1,
            motion: vec![vec![0.0]],
            beta: vec![beta],
            sigma: vec![sigma],
            pi: vec![pi],
        }
    }

    /// Two types swapping at `rate`, identical branching in both.
    pub fn symmetric_two_type(rate: f64, beta: f64, sigma: f64, pi: JumpMeasureSpec) -> Self {
        ModelSpec {
            n: 2,
            motion: vec![vec![-rate, rate], vec![rate, -rate]],
            beta: vec![beta, beta],
            sigma: vec![sigma, sigma],
            pi: vec![pi.clone(), pi],
        }
    }

    pub fn check_structure(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(LabError::Malformed("n must be positive".into()));
        }
        if self.motion.len() != n || self.motion.iter().any(|row| row.len() != n) {
            return Err(LabError::Malformed(format!("motion must be {n}x{n}")));
        }
        if self.beta.len() != n {
            return Err(LabError::Malformed(format!(
                "beta has length {}, expected {n}",
                self.beta.len()
            )));
        }
        if self.sigma.len() != n {
            return Err(LabError::Malformed(format!(
                "sigma has length {}, expected {n}",
                self.sigma.len()
            )));
        }
        if self.pi.len() != n {
            return Err(LabError::Malformed(format!(
                "pi has length {}, expected {n}",
                self.pi.len()
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            serde_json::from_str(text).map_err(|e| LabError::Malformed(e.to_string()))?;
        spec.check_structure()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Io(e).context(format!("reading {}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// SHA-256 of the compact JSON encoding, hex.
    pub fn fingerprint(&self) -> String {
        let compact = serde_json::to_string(self).expect("model serializes");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }

    pub fn fingerprint_bytes(&self) -> [u8; 32] {
        let compact = serde_json::to_string(self).expect("model serializes");
        Sha256::digest(compact.as_bytes()).into()
    }

    /// `psi(x, z)`.
    pub fn psi(&self, x: usize, z: f64) -> f64 {
        -self.beta[x] * z + self.psi0(x, z)
    }

    /// Nonlinear part `sigma(x)^2 z^2 + ∫ (e^{-zu} - 1 + zu) pi(x, du)`.
    pub fn psi0(&self, x: usize, z: f64) -> f64 {
        let s = self.sigma[x];
        s * s * z * z + self.pi[x].jump_integral(z)
    }

    /// True when beta, sigma and pi agree across all types.
    pub fn is_homogeneous(&self) -> bool {
        (1..self.n).all(|x| {
            self.beta[x] == self.beta[0]
                && self.sigma[x] == self.sigma[0]
                && self.pi[x] == self.pi[0]
        })
    }

    pub fn homogeneous_mechanism(&self) -> Option<Mechanism> {
        self.is_homogeneous().then(|| Mechanism {
            beta: self.beta[0],
            sigma: self.sigma[0],
            pi: self.pi[0].clone(),
        })
    }
}

/// A finite measure on `E`, stored as per-type masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeasureVector(Vec<f64>);

impl MeasureVector {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(LabError::InvalidArgument(format!(
                "measure masses must be finite and non-negative: {masses:?}"
            )));
        }
        Ok(MeasureVector(masses))
    }

    pub fn null(n: usize) -> Self {
        MeasureVector(vec![0.0; n])
    }

    pub fn dirac(n: usize, x: usize, mass: f64) -> Self {
        let mut m = vec![0.0; n];
        m[x] = mass;
        MeasureVector(m)
    }

    /// Internal constructor for states already known to be valid.
    pub(crate) fn from_raw(masses: Vec<f64>) -> Self {
        MeasureVector(masses)
    }

    pub fn masses(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_null(&self) -> bool {
        self.0.iter().all(|&m| m == 0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `mu(f)`.
    pub fn pair(&self, f: &FunctionVector) -> f64 {
        pair(&self.0, f.values())
    }
}

/// A real function on `E`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FunctionVector(Vec<f64>);

impl FunctionVector {
    pub fn new(values: Vec<f64>) -> Self {
        FunctionVector(values)
    }

    pub fn constant(n: usize, value: f64) -> Self {
        FunctionVector(vec![value; n])
    }

    pub fn indicator(n: usize, x: usize) -> Self {
        let mut v = vec![0.0; n];
        v[x] = 1.0;
        FunctionVector(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|&v| v >= 0.0)
    }

    pub fn scaled(&self, k: f64) -> Self {
        FunctionVector(self.0.iter().map(|v| v * k).collect())
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn pair(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            let msg = self
                .failures()
                .iter()
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect::<Vec<_>>()
                .join("; ");
            Err(LabError::Invalid(msg))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:<28} {}  {}",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Checks the standing conditions on a structurally sound spec. Each
/// invariant is reported as its own line so a single perturbed field
/// produces a single failure.
pub fn validate_model(spec: &ModelSpec) -> Result<ValidationReport> {
    spec.check_structure()?;
    let n = spec.n;
    let mut checks = Vec::new();

    let bad_rows: Vec<usize> = (0..n)
        .filter(|&x| {
            let s: f64 = spec.motion[x].iter().sum();
            !(s.abs() <= ROW_SUM_TOL) || spec.motion[x].iter().any(|v| !v.is_finite())
        })
        .collect();
    checks.push(ValidationCheck {
        name: "motion conservative".into(),
        passed: bad_rows.is_empty(),
        detail: if bad_rows.is_empty() {
            "row sums vanish".into()
        } else {
            format!("motion not conservative: rows {bad_rows:?} do not sum to 0")
        },
    });

    let negative_rates: Vec<(usize, usize)> = (0..n)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .filter(|&(x, y)| x != y && spec.motion[x][y] < 0.0)
        .collect();
    checks.push(ValidationCheck {
        name: "motion off-diagonal >= 0".into(),
        passed: negative_rates.is_empty(),
        detail: if negative_rates.is_empty() {
            "jump rates non-negative".into()
        } else {
            format!("negative jump rates at {negative_rates:?}")
        },
    });

    let beta_ok = spec.beta.iter().all(|b| b.is_finite());
    checks.push(ValidationCheck {
        name: "beta finite".into(),
        passed: beta_ok,
        detail: if beta_ok {
            "ok".into()
        } else {
            format!("beta = {:?}", spec.beta)
        },
    });

    let sigma_ok = spec.sigma.iter().all(|s| s.is_finite() && *s >= 0.0);
    checks.push(ValidationCheck {
        name: "sigma finite and >= 0".into(),
        passed: sigma_ok,
        detail: if sigma_ok {
            "ok".into()
        } else {
            format!("sigma = {:?}", spec.sigma)
        },
    });

    for (x, pi) in spec.pi.iter().enumerate() {
        let (passed, detail) = match pi.admissibility() {
            Ok(()) => (
                true,
                format!("∫(u∧u²)π = {:.6e}", pi.moment(PiMoment::UAndU2)),
            ),
            Err(msg) => (false, msg),
        };
        checks.push(ValidationCheck {
            name: format!("pi[{x}] admissible"),
            passed,
            detail,
        });
    }
    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feller_passes() {
        let spec = ModelSpec::new(
            vec![vec![0.0]],
            vec![-1.0],
            vec![1.0],
            vec![JumpMeasureSpec::Zero],
        )
        .unwrap();
        assert!(validate_model(&spec).unwrap().passed());
    }

    #[test]
    fn two_type_generator_passes() {
        let spec = ModelSpec::new(
            vec![vec![-1.0, 1.0], vec![0.5, -0.5]],
            vec![-0.3, 0.2],
            vec![0.4, 1.1],
            vec![JumpMeasureSpec::Zero, JumpMeasureSpec::Zero],
        )
        .unwrap();
        assert!(validate_model(&spec).unwrap().passed());
    }

    #[test]
    fn non_conservative_motion_fails() {
        let mut spec = ModelSpec::feller(1.0, 1.0);
        spec.motion = vec![vec![0.1]];
        let report = validate_model(&spec).unwrap();
        let failures = report.failures();
        assert_eq!(failures.len(), 1);
        assert!(failures[0].detail.contains("motion not conservative"));
    }

    #[test]
    fn wrong_dimensions_are_a_hard_error() {
        let err = ModelSpec::new(
            vec![vec![0.0, 0.0]],
            vec![-1.0],
            vec![1.0],
            vec![JumpMeasureSpec::Zero],
        );
        assert!(matches!(err, Err(LabError::Malformed(_))));
        let mut spec = ModelSpec::feller(1.0, 1.0);
        spec.sigma.push(1.0);
        assert!(matches!(validate_model(&spec), Err(LabError::Malformed(_))));
    }

    #[test]
    fn json_missing_key_is_malformed() {
        let err = ModelSpec::from_json(r#"{"n":1,"motion":[[0]],"beta":[-1]}"#);
        assert!(matches!(err, Err(LabError::Malformed(_))));
    }

    #[test]
    fn negative_measure_rejected() {
        assert!(MeasureVector::new(vec![1.0, -0.5]).is_err());
        assert!(MeasureVector::null(3).is_null());
    }
}
