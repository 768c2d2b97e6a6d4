//! Properties of the cumulant flow and the Perron data on random models,
//! with a fixed-step RK4 integration of the Riccati system as an
//! independent reference.

use proptest::prelude::*;
use superlab::cumulant::cumulant_at;
use superlab::model::JumpMeasureSpec;
use superlab::spectral::{
    eigen_triplet, l_log_l_functional, mean_generator, semigroup, spine_generator, triplet_for,
};
use superlab::ModelSpec;

const TOL: f64 = 1e-10;

/// Irreducible models with diffusive branching and at most one atom per type.
fn model() -> impl Strategy<Value = ModelSpec> {
    (1usize..=3).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(0.1f64..2.0, n), n),
            prop::collection::vec(-2.0f64..0.5, n),
            prop::collection::vec(0.2f64..1.5, n),
            prop::collection::vec(prop::option::of((0.1f64..3.0, 0.0f64..0.5)), n),
        )
            .prop_map(move |(rates, beta, sigma, atoms)| {
                let mut motion = rates;
                for (i, row) in motion.iter_mut().enumerate() {
                    row[i] = 0.0;
                    row[i] = -row.iter().sum::<f64>();
                }
                let pi = atoms
                    .into_iter()
                    .map(|a| match a {
                        Some(atom) => JumpMeasureSpec::AtomList { atoms: vec![atom] },
                        None => JumpMeasureSpec::Zero,
                    })
                    .collect();
                ModelSpec::new(motion, beta, sigma, pi).unwrap()
            })
    })
}

fn model_and_f() -> impl Strategy<Value = (ModelSpec, Vec<f64>)> {
    model().prop_flat_map(|m| {
        let n = m.n;
        (Just(m), prop::collection::vec(0.0f64..3.0, n))
    })
}

fn atoms_of(pi: &JumpMeasureSpec) -> Vec<(f64, f64)> {
    match pi {
        JumpMeasureSpec::AtomList { atoms } => atoms.clone(),
        JumpMeasureSpec::Zero => vec![],
        other => panic!("oracle covers atoms only, got {other:?}"),
    }
}

/// `dv/dt = A v + beta v - sigma^2 v^2 - Σ w (e^{-u v} - 1 + u v)`.
fn rk4_oracle(spec: &ModelSpec, f: &[f64], t: f64, steps: usize) -> Vec<f64> {
    let n = spec.n;
    let atoms: Vec<_> = spec.pi.iter().map(atoms_of).collect();
    let rhs = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|x| {
                let drift: f64 = (0..n).map(|y| spec.motion[x][y] * v[y]).sum();
                let z = v[x];
                let jumps: f64 = atoms[x]
                    .iter()
                    .map(|&(u, w)| w * ((-z * u).exp() - 1.0 + z * u))
                    .sum();
                drift + spec.beta[x] * z - spec.sigma[x].powi(2) * z * z - jumps
            })
            .collect()
    };
    let h = t / steps as f64;
    let mut v = f.to_vec();
    let axpy = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        a.iter().zip(k).map(|(x, y)| x + s * y).collect()
    };
    for _ in 0..steps {
        let k1 = rhs(&v);
        let k2 = rhs(&axpy(&v, &k1, h / 2.0));
        let k3 = rhs(&axpy(&v, &k2, h / 2.0));
        let k4 = rhs(&axpy(&v, &k3, h));
        for i in 0..n {
            v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    v
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn mean_action(spec: &ModelSpec, f: &[f64], t: f64) -> Vec<f64> {
    let p = semigroup(&mean_generator(spec), t);
    (0..spec.n)
        .map(|i| (0..spec.n).map(|j| p[(i, j)] * f[j]).sum())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flow_matches_rk4_oracle((spec, f) in model_and_f(), t in 0.1f64..2.0) {
        let got = cumulant_at(&spec, &f, t, TOL).unwrap();
        let want = rk4_oracle(&spec, &f, t, 4000);
        let scale = sup(&want).max(1e-3);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-7 * scale, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn flow_is_a_semigroup((spec, f) in model_and_f(), t in 0.05f64..2.0, s in 0.05f64..2.0) {
        let whole = cumulant_at(&spec, &f, t + s, TOL).unwrap();
        let inner = cumulant_at(&spec, &f, s, TOL).unwrap();
        let composed = cumulant_at(&spec, &inner, t, TOL).unwrap();
        let scale = sup(&whole).max(1.0);
        for (a, b) in whole.iter().zip(&composed) {
            prop_assert!((a - b).abs() <= 10.0 * TOL * scale, "{whole:?} vs {composed:?}");
        }
    }

    #[test]
    fn flow_is_monotone(
        (spec, f) in model_and_f(),
        bump in prop::collection::vec(0.0f64..1.0, 3),
        t in 0.1f64..3.0,
    ) {
        let g: Vec<f64> = f.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let vf = cumulant_at(&spec, &f, t, TOL).unwrap();
        let vg = cumulant_at(&spec, &g, t, TOL).unwrap();
        for (a, b) in vf.iter().zip(&vg) {
            prop_assert!(*a >= 0.0);
            prop_assert!(*a <= b + 1e-9 * b.abs().max(1.0), "{vf:?} vs {vg:?}");
        }
    }

    #[test]
    fn flow_is_dominated_by_the_mean_semigroup((spec, f) in model_and_f(), t in 0.1f64..3.0) {
        let v = cumulant_at(&spec, &f, t, TOL).unwrap();
        let m = mean_action(&spec, &f, t);
        for (a, b) in v.iter().zip(&m) {
            prop_assert!(*a <= b * (1.0 + 1e-8) + 1e-12, "{v:?} vs {m:?}");
        }
    }

    #[test]
    fn flow_linearizes_to_the_mean_semigroup((spec, f) in model_and_f(), t in 0.1f64..3.0) {
        prop_assume!(sup(&f) > 1e-3);
        let eps = 1e-6;
        let small: Vec<f64> = f.iter().map(|x| eps * x).collect();
        let v = cumulant_at(&spec, &small, t, 1e-12).unwrap();
        let m = mean_action(&spec, &f, t);
        let scale = sup(&m);
        for (a, b) in v.iter().zip(&m) {
            prop_assert!((a / eps - b).abs() <= 1e-4 * scale.max(1.0), "{v:?} vs {m:?}");
        }
    }

    #[test]
    fn perron_triplet_is_consistent(spec in model()) {
        let l = mean_generator(&spec);
        let tr = eigen_triplet(&l, true).unwrap();
        let n = spec.n;
        prop_assert!(tr.phi.iter().all(|&p| p > 0.0));
        prop_assert!(tr.nu.iter().all(|&p| p > 0.0));
        prop_assert!((tr.nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let nu_phi: f64 = tr.nu.iter().zip(&tr.phi).map(|(a, b)| a * b).sum();
        prop_assert!((nu_phi - 1.0).abs() < 1e-12);
        let norm = l.abs().max() + tr.lambda.abs();
        for i in 0..n {
            let right: f64 = (0..n).map(|j| l[(i, j)] * tr.phi[j]).sum();
            let left: f64 = (0..n).map(|j| tr.nu[j] * l[(j, i)]).sum();
            prop_assert!((right - tr.lambda * tr.phi[i]).abs() <= 1e-10 * norm * sup(&tr.phi));
            prop_assert!((left - tr.lambda * tr.nu[i]).abs() <= 1e-10 * norm * sup(&tr.nu));
        }
        // T_t phi = e^{lambda t} phi
        let t = 1.3;
        let tphi = mean_action(&spec, &tr.phi, t);
        for (a, b) in tphi.iter().zip(&tr.phi) {
            prop_assert!((a - (tr.lambda * t).exp() * b).abs() <= 1e-10 * a.abs().max(1.0));
        }
        if n > 1 {
            prop_assert!(tr.gap > 0.0);
        }
    }

    #[test]
    fn spine_generator_is_conservative_and_stationary(spec in model()) {
        let tr = triplet_for(&spec).unwrap();
        let g = spine_generator(&spec, &tr).unwrap();
        let n = spec.n;
        prop_assert!((g.nu_tilde.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..n {
            prop_assert!(g.g[i].iter().sum::<f64>().abs() < 1e-12);
            for j in 0..n {
                if i != j {
                    prop_assert!(g.g[i][j] >= 0.0);
                }
            }
            let flux: f64 = (0..n).map(|j| g.nu_tilde[j] * g.g[j][i]).sum();
            let scale = g.g.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
            prop_assert!(flux.abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn l_log_l_is_finite_above_two(theta in 2.02f64..4.0) {
        let spec = ModelSpec::single_type(-1.0, 1.0, log_tail(theta));
        let tr = triplet_for(&spec).unwrap();
        prop_assert!(l_log_l_functional(&spec, &tr).is_finite());
    }

    #[test]
    fn l_log_l_is_infinite_up_to_two(theta in 1.02f64..=2.0) {
        let spec = ModelSpec::single_type(-1.0, 1.0, log_tail(theta));
        let tr = triplet_for(&spec).unwrap();
        prop_assert!(l_log_l_functional(&spec, &tr).is_infinite());
    }
}

fn log_tail(theta: f64) -> JumpMeasureSpec {
    JumpMeasureSpec::LogPerturbedTail {
        theta,
        u_min: std::f64::consts::E,
        c: 1.0,
    }
}

#[test]
fn l_log_l_flips_exactly_at_two() {
    for (theta, finite) in [(2.0, false), (2.0 + 1e-9, true), (2.5, true), (1.5, false)] {
        let spec = ModelSpec::single_type(-1.0, 1.0, log_tail(theta));
        let tr = triplet_for(&spec).unwrap();
        assert_eq!(
            l_log_l_functional(&spec, &tr).is_finite(),
            finite,
            "theta = {theta}"
        );
    }
}

#[test]
fn feller_flow_matches_closed_form() {
    // psi(z) = b z + c z^2: V_t f = b f e^{-bt} / (b + c f (1 - e^{-bt}))
    let (b, c) = (1.0, 1.0);
    let spec = ModelSpec::feller(b, c);
    for &(f, t) in &[(1.0, 1.0), (0.3, 4.0), (5.0, 0.2), (2.0, 10.0)] {
        let got = cumulant_at(&spec, &[f], t, 1e-12).unwrap()[0];
        let e = (-b * t).exp();
        let want = b * f * e / (b + c * f * (1.0 - e));
        assert!(
            (got - want).abs() <= 1e-9 * want,
            "f = {f}, t = {t}: {got} vs {want}"
        );
    }
}
