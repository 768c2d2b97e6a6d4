//! Monte-Carlo checks of the simulator, the conditioned laws and the spine
//! against values computed from the mean semigroup and the cumulant flow.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use superlab::cumulant::{conditioned_laplace, htransform_laplace, survival_probability};
use superlab::qprocess::{htransform_from_ensemble, law_conditioned, law_reweighted};
use superlab::simulate::{simulate_ensemble, Scheme, SimConfig};
use superlab::spectral::{mean_generator, semigroup, spine_generator, triplet_for};
use superlab::spine::{sample_immigration, sample_spine, Origin};
use superlab::{FunctionVector, MeasureVector, ModelSpec};

fn three_type() -> ModelSpec {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("models/three_type.json");
    ModelSpec::from_file(path).unwrap()
}

#[test]
fn split_exact_preserves_the_multitype_mean() {
    let spec = three_type();
    let mu = MeasureVector::new(vec![1.0, 1.0, 1.0]).unwrap();
    let times = vec![0.5, 1.0, 2.0];
    let mut config = SimConfig::new(0.02, 6000, 21, times.clone());
    config.scheme = Scheme::SplitExact;
    let ens = simulate_ensemble(&spec, &mu, &config).unwrap();
    let l = mean_generator(&spec);
    for (k, &t) in times.iter().enumerate() {
        let p = semigroup(&l, t);
        for x in 0..3 {
            let exact: f64 = (0..3).map(|y| p[(y, x)]).sum();
            let est = ens.mean_at(k, &FunctionVector::indicator(3, x).into_values());
            assert!(
                est.within(exact, 4.0, 0.0),
                "t = {t}, type {x}: {} ± {} vs {exact}",
                est.value,
                est.stderr
            );
        }
    }
}

#[test]
fn multitype_paths_die_out_at_the_exact_rate() {
    let spec = ModelSpec::symmetric_two_type(1.0, -1.0, 1.0, superlab::JumpMeasureSpec::Zero);
    let mu = MeasureVector::new(vec![2.0, 1.0]).unwrap();
    let times = vec![1.0, 3.0];
    for scheme in [Scheme::Euler, Scheme::SplitExact] {
        let mut config = SimConfig::new(0.01, 20_000, 13, times.clone());
        config.scheme = scheme;
        let ens = simulate_ensemble(&spec, &mu, &config).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let exact = survival_probability(&spec, &mu, t, 1e-10).unwrap();
            let est = ens.survival_at(k);
            // one-type Euler bias is about dt
            assert!(
                est.within(exact, 4.0, 0.01),
                "{scheme:?}, t = {t}: {est:?} vs {exact}"
            );
        }
    }
}

#[test]
fn euler_preserves_the_multitype_mean() {
    let spec = three_type();
    let mu = MeasureVector::new(vec![1.0, 1.0, 1.0]).unwrap();
    let t = 2.0;
    let ens = simulate_ensemble(&spec, &mu, &SimConfig::new(0.01, 8000, 17, vec![t])).unwrap();
    let p = semigroup(&mean_generator(&spec), t);
    for x in 0..3 {
        let exact: f64 = (0..3).map(|y| p[(y, x)]).sum();
        let est = ens.mean_at(0, &FunctionVector::indicator(3, x).into_values());
        assert!(est.within(exact, 4.0, 0.0), "type {x}: {est:?} vs {exact}");
    }
}

#[test]
fn euler_matches_the_one_type_mean_and_survival() {
    let spec = ModelSpec::feller(1.0, 1.0);
    let mu = MeasureVector::new(vec![1.0]).unwrap();
    let ens = simulate_ensemble(&spec, &mu, &SimConfig::new(1e-3, 6000, 4, vec![1.0])).unwrap();
    let mean = ens.mean_at(0, &[1.0]);
    assert!(mean.within((-1.0f64).exp(), 4.0, 0.0), "{mean:?}");
    // v_1 = e^{-1} / (1 - e^{-1}) for b = c = 1; Euler survival bias is about dt
    let v = (-1.0f64).exp() / (1.0 - (-1.0f64).exp());
    let surv = ens.survival_at(0);
    assert!(surv.within(1.0 - (-v).exp(), 4.0, 2.5e-3), "{surv:?}");
}

#[test]
fn conditioned_and_reweighted_laws_agree_with_the_flow() {
    let spec = ModelSpec::symmetric_two_type(1.0, -1.0, 1.0, superlab::JumpMeasureSpec::Zero);
    let triplet = triplet_for(&spec).unwrap();
    let mu = MeasureVector::new(vec![2.0, 1.0]).unwrap();
    let (t, r) = (1.0, 1.0);
    let mut config = SimConfig::new(0.02, 8000, 8, vec![t, t + r]);
    config.scheme = Scheme::SplitExact;
    let ens = simulate_ensemble(&spec, &mu, &config).unwrap();
    let f = vec![0.7, 0.3];

    let exact =
        conditioned_laplace(&spec, &mu, &FunctionVector::new(f.clone()), t, r, 1e-10).unwrap();
    let direct = law_conditioned(&ens, t, r).unwrap();
    let weighted = law_reweighted(&spec, &ens, t, r, 1e-10).unwrap();
    for law in [&direct, &weighted] {
        assert!((law.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(law.weights.iter().all(|&w| w > 0.0));
        let est = law.laplace(&f);
        assert!(est.within(exact, 4.0, 0.0), "{est:?} vs {exact}");
    }
    // reweighting keeps every path alive at t; direct conditioning drops some
    assert!(weighted.len() >= direct.len());

    let h = htransform_from_ensemble(&ens, &triplet, t).unwrap();
    assert!(h.normalizer.within(1.0, 4.0, 0.0), "{:?}", h.normalizer);
    let exact_h = htransform_laplace(
        &spec,
        &triplet,
        &mu,
        &FunctionVector::new(f.clone()),
        t,
        1e-10,
    )
    .unwrap();
    let est = h.laplace(&f);
    assert!(est.within(exact_h, 4.0, 0.0), "{est:?} vs {exact_h}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spine_paths_tile_their_window(seed in any::<u64>(), start in -20.0f64..0.0, len in 0.1f64..20.0) {
        let spec = three_type();
        let tr = triplet_for(&spec).unwrap();
        let gen = spine_generator(&spec, &tr).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let path = sample_spine(&gen, start, start + len, &mut rng);
        prop_assert_eq!(path.holdings[0].from, start);
        prop_assert_eq!(path.holdings.last().unwrap().to, start + len);
        for w in path.holdings.windows(2) {
            prop_assert_eq!(w[0].to, w[1].from);
            prop_assert!(w[0].x != w[1].x);
        }
        let occ = path.occupation(3);
        prop_assert!((occ.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let events = sample_immigration(&spec, &path, 1e-2, Some(0.05), &mut rng).unwrap();
        for w in events.windows(2) {
            prop_assert!(w[0].s <= w[1].s);
        }
        for e in &events {
            prop_assert!(e.s >= start && e.s <= start + len);
            prop_assert_eq!(path.type_at(e.s), e.x);
            match e.origin {
                Origin::ContinuousEps => prop_assert_eq!(e.y, 0.05),
                // type 0 has no jumps, so discrete immigrants come from types 1 and 2
                Origin::Discrete => prop_assert!(e.x != 0 && e.y >= 1e-2),
            }
        }
    }
}

#[test]
fn spine_occupation_approaches_the_stationary_law() {
    let spec = three_type();
    let tr = triplet_for(&spec).unwrap();
    let gen = spine_generator(&spec, &tr).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let path = sample_spine(&gen, 0.0, 20_000.0, &mut rng);
    let occ = path.occupation(3);
    for (o, want) in occ.iter().zip(&gen.nu_tilde) {
        assert!((o - want).abs() < 0.02, "{occ:?} vs {:?}", gen.nu_tilde);
    }
}
