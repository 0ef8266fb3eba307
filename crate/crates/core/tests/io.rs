use subset_mle::io::{read_dataset, sidecar_path, write_dataset};
use subset_mle::lmm::toy::simulate_toy;
use subset_mle::lmm::{simulate_lmm, LmmParams};
use subset_mle::mglmm::{simulate_mglmm, MglmmDesign, MglmmParams};
use subset_mle::Dataset;

fn round_trip(d: Dataset) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&d, &path).unwrap();
    assert!(sidecar_path(&path).exists());
    assert_eq!(read_dataset(&path).unwrap(), d);
}

#[test]
fn lmm_round_trip() {
    let t = LmmParams::new(1.0, 0.5, 1.0, 0.5, 0.5, 0.8, 0.4).unwrap();
    round_trip(Dataset::Lmm(simulate_lmm(&t, 4, 4, 7).unwrap()));
}

#[test]
fn mglmm_round_trip() {
    let t = MglmmParams::new(vec![1.0, -0.5], vec![0.5, 0.25], 0.5).unwrap();
    let d = MglmmDesign::generate(4, 2, 0.1, 1).unwrap();
    round_trip(Dataset::Mglmm(simulate_mglmm(&t, &d, 3).unwrap()));
}

#[test]
fn toy_round_trip() {
    round_trip(Dataset::Toy(simulate_toy(0.0, 5, 1).unwrap()));
}

#[test]
fn lmm_csv_layout() {
    let t = LmmParams::new(1.0, 0.5, 1.0, 0.5, 0.5, 0.8, 0.4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&Dataset::Lmm(simulate_lmm(&t, 2, 4, 7).unwrap()), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("i,j,t,y"));
    assert!(lines.next().unwrap().starts_with("1,1,1,"));
    assert_eq!(text.lines().count(), 1 + 16);
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
    assert_eq!(side["N"], 2);
    assert_eq!(side["T"], 4);
    assert_eq!(side["schema_version"], 1);
}

#[test]
fn missing_sidecar_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "i,j,t,y\n").unwrap();
    assert!(read_dataset(&path).is_err());
}
