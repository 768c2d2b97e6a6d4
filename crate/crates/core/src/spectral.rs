//! Perron data of the mean semigroup, the remainder profile, the spine
//! generator and the L log L functional.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::ModelSpec;

/// Margin below zero required of `lambda` before conditioned-limit runs.
pub const SUBCRITICAL_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenTriplet {
    pub lambda: f64,
    /// Right eigenfunction, normalized so that `nu(phi) = 1`.
    pub phi: Vec<f64>,
    /// Left eigenmeasure, a probability vector.
    pub nu: Vec<f64>,
    /// `lambda - max Re(other eigenvalues)`; infinite for one type.
    pub gap: f64,
}

impl EigenTriplet {
    pub fn n(&self) -> usize {
        self.phi.len()
    }

    pub fn is_subcritical(&self) -> bool {
        self.lambda < -SUBCRITICAL_MARGIN
    }

    pub fn require_subcritical(&self) -> Result<()> {
        if self.is_subcritical() {
            Ok(())
        } else {
            Err(LabError::NotSubcritical(self.lambda))
        }
    }

    /// `nu~(x) = nu(x) phi(x)`, the stationary law of the spine.
    pub fn nu_tilde(&self) -> Vec<f64> {
        self.nu.iter().zip(&self.phi).map(|(a, b)| a * b).collect()
    }
}

/// `L = A + diag(beta)`, the generator of `T_t` acting on functions.
pub fn mean_generator(spec: &ModelSpec) -> DMatrix<f64> {
    let n = spec.n;
    DMatrix::from_fn(n, n, |i, j| {
        spec.motion[i][j] + if i == j { spec.beta[i] } else { 0.0 }
    })
}

/// `exp(t L)`.
pub fn semigroup(l: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    (l * t).exp()
}

fn reachable(adj: &dyn Fn(usize, usize) -> bool, n: usize) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && adj(i, j) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Strong connectivity of the off-diagonal support.
pub fn is_irreducible(l: &DMatrix<f64>) -> bool {
    let n = l.nrows();
    n == 1
        || (reachable(&|i, j| i != j && l[(i, j)] > 0.0, n)
            && reachable(&|i, j| i != j && l[(j, i)] > 0.0, n))
}

/// Perron vector of a Metzler matrix: shifted power iteration followed by
/// a few steps of shifted inverse iteration.
fn perron_vector(l: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    let n = l.nrows();
    let shift = (0..n).map(|i| -l[(i, i)]).fold(0.0, f64::max) + 1.0;
    let p = l + DMatrix::identity(n, n) * shift;
    let mut x = nalgebra::DVector::from_element(n, 1.0 / n as f64);
    let mut rho = 0.0;
    for _ in 0..200_000 {
        let y = &p * &x;
        let norm = y.sum();
        let y = y / norm;
        let delta = (&y - &x).amax();
        x = y;
        rho = norm;
        if delta < 1e-9 {
            break;
        }
    }
    let mut lambda = rho - shift;
    let scale = l.amax().max(1.0);
    for _ in 0..4 {
        let shifted = l - DMatrix::identity(n, n) * (lambda + 1e-9 * scale);
        let Some(y) = shifted.lu().solve(&x) else {
            break;
        };
        let y = &y / y.sum();
        let lx = l * &y;
        lambda = lx.dot(&y) / y.dot(&y);
        x = y;
    }
    if x.iter().any(|v| !(*v > 0.0)) {
        return Err(LabError::Reducible(
            "Perron vector is not strictly positive".into(),
        ));
    }
    Ok((lambda, x.iter().copied().collect()))
}

/// Computes `(lambda, phi, nu)` with `Σ nu = 1` and `nu(phi) = 1`.
///
/// A non-subcritical `lambda` is returned as is; conditioned-limit
/// operations refuse it through [`EigenTriplet::require_subcritical`].
pub fn eigen_triplet(l: &DMatrix<f64>, check_irreducible: bool) -> Result<EigenTriplet> {
    let n = l.nrows();
    if check_irreducible && !is_irreducible(l) {
        return Err(LabError::Reducible(
            "motion graph is not strongly connected".into(),
        ));
    }
    let (_, mut phi) = perron_vector(l)?;
    let (_, mut nu) = perron_vector(&l.transpose())?;
    let total: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|v| *v /= total);
    let nu_phi: f64 = nu.iter().zip(&phi).map(|(a, b)| a * b).sum();
    phi.iter_mut().for_each(|v| *v /= nu_phi);

    let phi_v = nalgebra::DVector::from_vec(phi.clone());
    let nu_v = nalgebra::DVector::from_vec(nu.clone());
    let lambda = nu_v.dot(&(l * &phi_v)) / nu_v.dot(&phi_v);

    let gap = if n == 1 {
        f64::INFINITY
    } else {
        let mut eig: Vec<_> = l.complex_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| {
            (a.re - lambda)
                .abs()
                .hypot(a.im)
                .total_cmp(&(b.re - lambda).abs().hypot(b.im))
        });
        let second = eig[1..]
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        lambda - second
    };
    Ok(EigenTriplet {
        lambda,
        phi,
        nu,
        gap,
    })
}

/// Triplet of a model's mean generator with the irreducibility check on.
pub fn triplet_for(spec: &ModelSpec) -> Result<EigenTriplet> {
    eigen_triplet(&mean_generator(spec), true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderProfile {
    /// `(t, sup_{x, j} |H_t 1_j (x)|)`.
    pub points: Vec<(f64, f64)>,
}

impl RemainderProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,sup_abs_H\n");
        for (t, h) in &self.points {
            out.push_str(&format!("{t},{h:e}\n"));
        }
        out
    }
}

/// `sup_{x, j} |T_t 1_j(x) / (e^{lambda t} phi(x) nu_j) - 1|` over the grid.
/// For finite `E` every `f` in the cone is a non-negative combination of
/// indicators, so the indicator sup controls the cone.
pub fn h2_remainder(
    spec: &ModelSpec,
    triplet: &EigenTriplet,
    t_grid: &[f64],
) -> Result<RemainderProfile> {
    let l = mean_generator(spec);
    let n = spec.n;
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !(t > 0.0) {
            return Err(LabError::InvalidArgument(format!(
                "remainder grid needs t > 0, got {t}"
            )));
        }
        let tt = semigroup(&l, t);
        let growth = (triplet.lambda * t).exp();
        let mut sup: f64 = 0.0;
        for j in 0..n {
            for x in 0..n {
                let h = tt[(x, j)] / (growth * triplet.phi[x] * triplet.nu[j]) - 1.0;
                sup = sup.max(h.abs());
            }
        }
        points.push((t, sup));
    }
    Ok(RemainderProfile { points })
}

/// `Σ_x nu(x) ∫ u phi(x) log^+(u phi(x)) pi(x, du)`; `+inf` when any inner
/// integral diverges.
pub fn l_log_l_functional(spec: &ModelSpec, triplet: &EigenTriplet) -> f64 {
    (0..spec.n)
        .map(|x| {
            let inner = spec.pi[x].u_log_u(triplet.phi[x]);
            if inner == 0.0 {
                0.0
            } else {
                triplet.nu[x] * inner
            }
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineGenerator {
    /// Row-major `n x n` generator of `S_t`.
    pub g: Vec<Vec<f64>>,
    pub nu_tilde: Vec<f64>,
    /// `||nu~^T G||_inf`.
    pub stationarity_residual: f64,
}

impl SpineGenerator {
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.g.len();
        DMatrix::from_fn(n, n, |i, j| self.g[i][j])
    }
}

/// `G = diag(phi)^{-1} (L - lambda I) diag(phi)` and `nu~ = nu * phi`.
pub fn spine_generator(spec: &ModelSpec, triplet: &EigenTriplet) -> Result<SpineGenerator> {
    let l = mean_generator(spec);
    let n = spec.n;
    let phi = &triplet.phi;
    let g: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        phi[j] / phi[i] * l[(i, j)]
                    }
                })
                .collect();
            // diagonal set from the off-diagonal sum so rows sum to exactly zero
            row[i] = -row.iter().sum::<f64>();
            row
        })
        .collect();
    let nu_tilde = triplet.nu_tilde();
    let residual = (0..n)
        .map(|j| (0..n).map(|i| nu_tilde[i] * g[i][j]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    let scale = g.iter().flatten().fold(1.0_f64, |m, v| m.max(v.abs()));
    if residual > 1e-8 * scale {
        return Err(LabError::InvalidArgument(format!(
            "nu~ is not stationary for the spine generator (residual {residual:e})"
        )));
    }
    Ok(SpineGenerator {
        g,
        nu_tilde,
        stationarity_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpMeasureSpec;

    #[test]
    fn one_by_one() {
        let t = eigen_triplet(&DMatrix::from_element(1, 1, -1.0), true).unwrap();
        assert_eq!(t.lambda, -1.0);
        assert_eq!(t.phi, vec![1.0]);
        assert_eq!(t.nu, vec![1.0]);
    }

    #[test]
    fn symmetric_two_type_triplet() {
        let spec = ModelSpec::symmetric_two_type(1.0, -0.5, 1.0, JumpMeasureSpec::Zero);
        let l = mean_generator(&spec);
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[-1.5, 1.0, 1.0, -1.5]));
        let t = eigen_triplet(&l, true).unwrap();
        assert!((t.lambda + 0.5).abs() < 1e-13);
        assert!(t.phi.iter().all(|p| (p - 1.0).abs() < 1e-12));
        assert!(t.nu.iter().all(|p| (p - 0.5).abs() < 1e-12));
        assert!((t.gap - 2.0).abs() < 1e-10);
        let g = spine_generator(&spec, &t).unwrap();
        assert!((g.g[0][1] - 1.0).abs() < 1e-12 && (g.g[0][0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn reducible_is_rejected() {
        let l = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -0.5]);
        assert!(matches!(
            eigen_triplet(&l, true),
            Err(LabError::Reducible(_))
        ));
    }

    #[test]
    fn supercritical_flagged() {
        let spec = ModelSpec::feller(-0.5, 1.0);
        let t = triplet_for(&spec).unwrap();
        assert!(!t.is_subcritical());
        assert!(matches!(
            t.require_subcritical(),
            Err(LabError::NotSubcritical(_))
        ));
    }

    #[test]
    fn one_type_remainder_vanishes() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let t = triplet_for(&spec).unwrap();
        let prof = h2_remainder(&spec, &t, &[0.5, 1.0, 5.0]).unwrap();
        assert!(prof.points.iter().all(|(_, h)| *h < 1e-14));
    }

    #[test]
    fn spine_of_one_type_is_trivial() {
        let spec = ModelSpec::feller(1.0, 1.0);
        let t = triplet_for(&spec).unwrap();
        let g = spine_generator(&spec, &t).unwrap();
        assert_eq!(g.g, vec![vec![0.0]]);
        assert_eq!(g.nu_tilde, vec![1.0]);
    }
}
