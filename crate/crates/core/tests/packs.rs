use decisio_core::agents::{Category, Runtime};
use decisio_core::domains::{evm_pack, load_pack, save_pack, turc_pack, EntryError, Pack, PackError};
use decisio_core::registry::{Catalog, RegistryError, TierFilter};

#[test]
fn built_in_packs_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for pack in [evm_pack(), turc_pack()] {
        let path = dir.path().join(format!("{}.json", pack.name));
        save_pack(&pack, &path).unwrap();
        assert_eq!(load_pack(&path).unwrap(), pack);
    }
}

#[test]
fn missing_file_and_bad_json() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_pack(dir.path().join("nope.json")), Err(PackError::Io { .. })));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": \"x\",\n \"version\": \"1\",\n \"models\": [}").unwrap();
    match load_pack(&bad) {
        Err(PackError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn built_in_packs_load_without_anomalies() {
    let rt = Runtime::start(Catalog::new());
    let client = rt.client();
    for pack in [evm_pack(), turc_pack()] {
        let out = client.load_pack(pack).await.unwrap();
        assert!(out.iter().all(|o| o.result.is_ok()), "{out:?}");
    }
    assert!(rt.anomalies(None).is_empty());
    let indicators: Vec<String> = rt
        .snapshot()
        .list_services(TierFilter::Only(decisio_core::registry::Tier::Indicator))
        .into_iter()
        .map(|e| e.id)
        .collect();
    assert!(indicators.contains(&"ET_decadal".to_string()) && indicators.contains(&"CV".to_string()));
}

#[tokio::test]
async fn empty_pack_leaves_empty_catalog() {
    let rt = Runtime::start(Catalog::new());
    let out = rt.client().load_pack(Pack::empty("nothing")).await.unwrap();
    assert!(out.is_empty());
    assert!(rt.snapshot().is_empty());
    assert!(rt.anomalies(None).is_empty());
}

#[tokio::test]
async fn cyclic_pack_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cycle.json");
    std::fs::write(
        &path,
        r#"{
  "name": "cycle",
  "version": "1",
  "indices": [{"id": "X", "label": "x", "unit": "u", "description": ""}],
  "models": [
    {"id": "A", "label": "a", "expression": "B + X", "unit": "u"},
    {"id": "B", "label": "b", "expression": "A * 2", "unit": "u"},
    {"id": "C", "label": "c", "expression": "X * 3", "unit": "u"}
  ],
  "indicators": [
    {"id": "I", "label": "i", "expression": "C", "unit": "u", "default_mode": "text",
     "rules": [{"op": "gt", "threshold": 0, "label": "positive", "severity": "good"}]}
  ]
}"#,
    )
    .unwrap();
    let pack = load_pack(&path).unwrap();
    let rt = Runtime::start(Catalog::new());
    let out = rt.client().load_pack(pack).await.unwrap();
    let cycle = RegistryError::CycleDetected {
        path: ["A", "B", "A"].map(String::from).to_vec(),
    };
    for id in ["A", "B"] {
        let o = out.iter().find(|o| o.id == id).unwrap();
        assert_eq!(o.result, Err(EntryError::Registry(cycle.clone())));
    }
    let snap = rt.snapshot();
    assert!(snap.model("C").is_some() && snap.indicator("I").is_some());
    assert!(snap.model("A").is_none() && snap.model("B").is_none());
    let log = rt.anomalies(None);
    assert_eq!(log.len(), 2);
    assert!(log.iter().all(|r| r.category == Category::Validation));
}
