//! Grey's condition `∫^inf dz / psi(z) < inf` for homogeneous mechanisms.

use serde::{Deserialize, Serialize};

use super::jump::JumpMeasureSpec;
use super::ModelSpec;
use crate::quad;

/// A spatially homogeneous branching mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub beta: f64,
    pub sigma: f64,
    pub pi: JumpMeasureSpec,
}

impl Mechanism {
    pub fn psi(&self, z: f64) -> f64 {
        -self.beta * z + self.sigma * self.sigma * z * z + self.pi.jump_integral(z)
    }

    /// Lower bound `psi(z) >= k z^p` valid for `z >= z_from`, when the
    /// mechanism grows superlinearly.
    fn superlinear_bound(&self) -> Option<(f64, f64, f64)> {
        let s2 = self.sigma * self.sigma;
        if s2 > 0.0 {
            // sigma^2 z^2 - |beta| z >= sigma^2 z^2 / 2 once z >= 2|beta|/sigma^2
            let z_from = (2.0 * self.beta.abs() / s2).max(1.0);
            return Some((0.5 * s2, 2.0, z_from));
        }
        if let JumpMeasureSpec::TruncatedPowerLaw {
            alpha,
            u_min,
            u_max,
            c,
        } = self.pi
        {
            if u_min == 0.0 && alpha > 1.0 && c > 0.0 {
                // J(z) >= c z^alpha / (3 (2 - alpha)) for z u_max >= 1
                let kappa = c / (3.0 * (2.0 - alpha));
                let z_cut = u_max.map_or(0.0, |h| 1.0 / h);
                let z_grow = (2.0 * self.beta.abs() / kappa).powf(1.0 / (alpha - 1.0));
                return Some((0.5 * kappa, alpha, z_cut.max(z_grow).max(1.0)));
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreyVerdict {
    Holds,
    Fails,
    Inapplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreyReport {
    pub verdict: GreyVerdict,
    /// Which mechanism was tested: the model's own, a supplied dominating
    /// one, or the diffusive lower envelope.
    pub source: String,
    pub z_prime: Option<f64>,
    /// `∫_{z'}^{Z} dz / psi(z)` by quadrature.
    pub partial_integral: Option<f64>,
    pub upper_limit: Option<f64>,
    /// Analytic bound on `∫_Z^inf dz / psi(z)`.
    pub tail_bound: Option<f64>,
    pub diagnostic: String,
}

impl GreyReport {
    pub fn holds(&self) -> bool {
        self.verdict == GreyVerdict::Holds
    }

    fn inapplicable(diagnostic: String) -> Self {
        GreyReport {
            verdict: GreyVerdict::Inapplicable,
            source: "none".into(),
            z_prime: None,
            partial_integral: None,
            upper_limit: None,
            tail_bound: None,
            diagnostic,
        }
    }
}

fn dominates(spec: &ModelSpec, lower: &Mechanism) -> bool {
    let mut z = 1e-3;
    while z < 1e7 {
        for x in 0..spec.n {
            let p = spec.psi(x, z);
            if p < lower.psi(z) - 1e-9 * p.abs().max(1.0) {
                return false;
            }
        }
        z *= 2.0;
    }
    true
}

/// Tests Grey's condition on the model's mechanism when it is homogeneous,
/// otherwise on `dominating` (checked to lie below every `psi(x, .)`), and
/// otherwise on the envelope `-max(beta) z + min(sigma)^2 z^2` when every
/// `sigma > 0`.
pub fn grey_condition(spec: &ModelSpec, dominating: Option<&Mechanism>) -> GreyReport {
    let (mechanism, source) = if let Some(m) = spec.homogeneous_mechanism() {
        (m, "homogeneous mechanism")
    } else if let Some(d) = dominating {
        if !dominates(spec, d) {
            return GreyReport::inapplicable(
                "supplied mechanism does not lie below psi(x, .)".into(),
            );
        }
        (d.clone(), "supplied dominating mechanism")
    } else {
        let sigma_min = spec.sigma.iter().cloned().fold(f64::INFINITY, f64::min);
        if sigma_min > 0.0 {
            let beta_max = spec.beta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (
                Mechanism {
                    beta: beta_max,
                    sigma: sigma_min,
                    pi: JumpMeasureSpec::Zero,
                },
                "diffusive lower envelope",
            )
        } else {
            return GreyReport::inapplicable(
                "inhomogeneous mechanism with some sigma = 0 and no dominating mechanism supplied"
                    .into(),
            );
        }
    };

    // psi is convex with psi(0) = 0, so psi(z') > 0 implies psi > 0 beyond z'
    let mut z_prime = 1.0;
    while mechanism.psi(z_prime) <= 0.0 {
        z_prime *= 2.0;
        if z_prime > 1e18 {
            return GreyReport {
                verdict: GreyVerdict::Fails,
                source: source.into(),
                z_prime: None,
                partial_integral: None,
                upper_limit: None,
                tail_bound: None,
                diagnostic: "psi is not eventually positive".into(),
            };
        }
    }
    let upper = z_prime * 1e8;
    let partial = quad::integrate(
        |s| {
            let z = s.exp();
            z / mechanism.psi(z)
        },
        z_prime.ln(),
        upper.ln(),
        1e-14,
        1e-10,
    )
    .value;

    match mechanism.superlinear_bound() {
        Some((k, p, z_from)) => {
            let upper = upper.max(z_from);
            let partial = if upper > z_prime * 1e8 {
                quad::integrate(
                    |s| {
                        let z = s.exp();
                        z / mechanism.psi(z)
                    },
                    z_prime.ln(),
                    upper.ln(),
                    1e-14,
                    1e-10,
                )
                .value
            } else {
                partial
            };
            let tail = upper.powf(1.0 - p) / (k * (p - 1.0));
            GreyReport {
                verdict: GreyVerdict::Holds,
                source: source.into(),
                z_prime: Some(z_prime),
                partial_integral: Some(partial),
                upper_limit: Some(upper),
                tail_bound: Some(tail),
                diagnostic: format!("psi(z) >= {k:.3e} z^{p} for z >= {z_from:.3e}; ∫ dz/psi < inf"),
            }
        }
        None => GreyReport {
            verdict: GreyVerdict::Fails,
            source: source.into(),
            z_prime: Some(z_prime),
            partial_integral: Some(partial),
            upper_limit: Some(upper),
            tail_bound: None,
            diagnostic: "psi grows at most linearly (sigma = 0, no stable-like jumps): ∫ dz/psi diverges, process is persistent".into(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feller_integral_is_log_two() {
        let r = grey_condition(&ModelSpec::feller(1.0, 1.0), None);
        assert!(r.holds());
        assert_eq!(r.z_prime, Some(1.0));
        let total = r.partial_integral.unwrap();
        let tail = r.tail_bound.unwrap();
        assert!(
            (total - std::f64::consts::LN_2).abs() <= tail + 1e-9,
            "{total} {tail}"
        );
    }

    #[test]
    fn pure_drift_fails() {
        let r = grey_condition(&ModelSpec::feller(1.0, 0.0), None);
        assert_eq!(r.verdict, GreyVerdict::Fails);
    }

    #[test]
    fn diffusion_with_atoms_holds() {
        let spec = ModelSpec::single_type(
            -1.0,
            1.0,
            JumpMeasureSpec::AtomList {
                atoms: vec![(2.0, 0.3)],
            },
        );
        assert!(grey_condition(&spec, None).holds());
    }

    #[test]
    fn stable_like_jumps_hold_without_diffusion() {
        let spec = ModelSpec::single_type(
            -1.0,
            0.0,
            JumpMeasureSpec::TruncatedPowerLaw {
                alpha: 1.5,
                u_min: 0.0,
                u_max: Some(10.0),
                c: 1.0,
            },
        );
        assert!(grey_condition(&spec, None).holds());
    }

    #[test]
    fn inhomogeneous_without_sigma_is_inapplicable() {
        let mut spec = ModelSpec::symmetric_two_type(1.0, -1.0, 0.0, JumpMeasureSpec::Zero);
        spec.beta[1] = -2.0;
        assert_eq!(
            grey_condition(&spec, None).verdict,
            GreyVerdict::Inapplicable
        );
        spec.sigma = vec![1.0, 0.5];
        let r = grey_condition(&spec, None);
        assert!(r.holds());
        assert_eq!(r.source, "diffusive lower envelope");
    }
}
