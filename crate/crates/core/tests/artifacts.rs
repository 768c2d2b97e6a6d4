//! Serialization, the result store and reproducibility of runs.

use std::path::{Path, PathBuf};

use serde_json::json;
use superlab::lab::shipped_models;
use superlab::lab::{run, run_and_store, ExperimentManifest, ModelRef, ResultRecord, ResultStore};
use superlab::simulate::{simulate_ensemble, PathEnsemble, Scheme, SimConfig};
use superlab::{LabError, MeasureVector, ModelSpec};

fn models_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("models")
}

fn copy_model(dir: &Path, name: &str) -> PathBuf {
    let dest = dir.join(format!("{name}.json"));
    std::fs::copy(models_dir().join(format!("{name}.json")), &dest).unwrap();
    dest
}

#[test]
fn shipped_models_round_trip_through_json() {
    for (name, spec) in shipped_models().unwrap() {
        let back = ModelSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back, spec, "{name}");
        assert_eq!(back.fingerprint(), spec.fingerprint(), "{name}");
    }
}

#[test]
fn malformed_model_is_rejected() {
    let text = r#"{"n": 2, "motion": [[0.0]], "beta": [-1.0, -1.0],
                  "sigma": [1.0, 1.0], "pi": [{"kind": "zero"}, {"kind": "zero"}]}"#;
    assert!(matches!(
        ModelSpec::from_json(text),
        Err(LabError::Malformed(_))
    ));
}

#[test]
fn spectral_of_feller_is_trivial() {
    let dir = tempfile::tempdir().unwrap();
    let model = copy_model(dir.path(), "feller");
    let m = ExperimentManifest::new(
        "spectral",
        Some(ModelRef::new(&model).unwrap()),
        json!({}),
        0,
    );
    let rec = run(&m).unwrap();
    let get = |k: &str| rec.scalars[k].value;
    assert!((get("lambda") + 1.0).abs() < 1e-14);
    assert!((get("phi_0") - 1.0).abs() < 1e-14);
    assert!((get("nu_0") - 1.0).abs() < 1e-14);
    assert!(rec.checks["subcritical"]);
}

#[test]
fn record_round_trips_including_non_finite_scalars() {
    let dir = tempfile::tempdir().unwrap();
    let model = copy_model(dir.path(), "feller");
    let m = ExperimentManifest::new(
        "spectral",
        Some(ModelRef::new(&model).unwrap()),
        json!({}),
        3,
    );
    let rec = run(&m).unwrap();
    // one type: the gap is infinite
    assert!(rec.scalars["gap"].value.is_infinite());
    let back = ResultRecord::from_json(&rec.to_json()).unwrap();
    assert_eq!(back, rec);
    assert_eq!(back.hash(), rec.hash());
}

#[test]
fn manifest_hash_ignores_the_model_path() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = copy_model(a.path(), "three_type");
    let mb = copy_model(b.path(), "three_type");
    let params = json!({"horizon": 2.0, "points": 4});
    let x = ExperimentManifest::new(
        "extinction",
        Some(ModelRef::new(&ma).unwrap()),
        params.clone(),
        1,
    );
    let y = ExperimentManifest::new(
        "extinction",
        Some(ModelRef::new(&mb).unwrap()),
        params.clone(),
        1,
    );
    assert_eq!(x.hash(), y.hash());
    let z = ExperimentManifest::new("extinction", Some(ModelRef::new(&ma).unwrap()), params, 2);
    assert_ne!(x.hash(), z.hash());
}

#[test]
fn store_is_deterministic_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let model = copy_model(dir.path(), "symmetric2");
    let params = json!({"mu0": [1.0, 0.5], "dt": 0.01, "n_paths": 200, "record_times": [0.5, 1.0]});
    let m = ExperimentManifest::new("simulate", Some(ModelRef::new(&model).unwrap()), params, 11);

    let s1 = ResultStore::new(dir.path().join("store1"));
    let s2 = ResultStore::new(dir.path().join("store2"));
    let (o1, d1) = run_and_store(&m, &s1).unwrap();
    let (o2, d2) = run_and_store(&m, &s2).unwrap();
    assert_eq!(o1.record.hash(), o2.record.hash());
    assert_eq!(d1.file_name(), d2.file_name());
    assert_eq!(
        std::fs::read(d1.join("record.json")).unwrap(),
        std::fs::read(d2.join("record.json")).unwrap()
    );
    // the same manifest again is a no-op on the existing entry
    let (_, again) = run_and_store(&m, &s1).unwrap();
    assert_eq!(again, d1);
    assert_eq!(s1.get(&m).unwrap().unwrap(), o1.record);
}

#[test]
fn store_refuses_a_conflicting_record() {
    let dir = tempfile::tempdir().unwrap();
    let model = copy_model(dir.path(), "feller");
    let m = ExperimentManifest::new(
        "spectral",
        Some(ModelRef::new(&model).unwrap()),
        json!({}),
        0,
    );
    let store = ResultStore::new(dir.path().join("store"));
    let (out, _) = run_and_store(&m, &store).unwrap();
    let mut other = out.record.clone();
    other.check("tampered", true);
    assert!(matches!(
        store.put(&m, &other, &[]),
        Err(LabError::StaleManifest(_))
    ));
}

#[test]
fn edited_model_file_makes_the_manifest_stale() {
    let dir = tempfile::tempdir().unwrap();
    let model = copy_model(dir.path(), "feller");
    let m = ExperimentManifest::new(
        "spectral",
        Some(ModelRef::new(&model).unwrap()),
        json!({}),
        0,
    );
    let store = ResultStore::new(dir.path().join("store"));
    run_and_store(&m, &store).unwrap();

    let edited = ModelSpec::feller(2.0, 1.0);
    std::fs::write(&model, edited.to_json()).unwrap();
    assert!(matches!(run(&m), Err(LabError::StaleManifest(_))));
    assert!(matches!(store.get(&m), Err(LabError::StaleManifest(_))));
}

fn ensemble_with_threads(threads: usize, config: &SimConfig) -> PathEnsemble {
    let spec = ModelSpec::from_file(models_dir().join("three_type.json")).unwrap();
    let mu = MeasureVector::new(vec![1.0, 1.0, 1.0]).unwrap();
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| simulate_ensemble(&spec, &mu, config).unwrap())
}

#[test]
fn ensemble_does_not_depend_on_thread_count() {
    for scheme in [Scheme::Euler, Scheme::SplitExact] {
        let mut config = SimConfig::new(0.02, 300, 5, vec![0.5, 1.0]);
        config.scheme = scheme;
        let one = ensemble_with_threads(1, &config);
        let four = ensemble_with_threads(4, &config);
        assert_eq!(one.content_hash(), four.content_hash(), "{scheme:?}");
    }
}

#[test]
fn ensemble_binary_round_trips() {
    let config = SimConfig::new(0.05, 50, 9, vec![0.25, 1.0]);
    let ens = ensemble_with_threads(2, &config);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ens.bin");
    ens.write_binary(&path).unwrap();
    let back = PathEnsemble::read_binary(&path).unwrap();
    assert_eq!(back, ens);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xff;
    assert!(matches!(
        PathEnsemble::from_bytes(&bytes),
        Err(LabError::Malformed(_))
    ));
}
