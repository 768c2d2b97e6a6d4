//! Runs a manifest twice through a result store: the second run finds the
//! same entry, and editing the model file afterwards is refused.

use serde_json::json;
use superlab::lab::{run_and_store, ExperimentManifest, ModelRef, ResultStore};
use superlab::ModelSpec;

fn main() -> superlab::Result<()> {
    let dir = std::env::temp_dir().join(format!("superlab-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let model = dir.join("feller.json");
    std::fs::write(&model, ModelSpec::feller(1.0, 1.0).to_json())?;

    let store = ResultStore::new(dir.join("results"));
    let manifest = ExperimentManifest::new(
        "cumulant",
        Some(ModelRef::new(&model)?),
        json!({ "f": [1.0], "horizon": 1.0, "points": 4 }),
        0,
    );
    let (first, path) = run_and_store(&manifest, &store)?;
    let (second, _) = run_and_store(&manifest, &store)?;
    assert_eq!(first.record, second.record);
    println!("stored at {}", path.display());
    print!("{}", first.record.tables["cumulant"]);

    std::fs::write(&model, ModelSpec::feller(1.0, 2.0).to_json())?;
    match store.get(&manifest) {
        Err(e) => println!("after editing the model: {e}"),
        Ok(_) => println!("unexpected: edited model accepted"),
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
