use std::fs;
use std::path::Path;

use gdlab::data::{load_idx_pair, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
use gdlab::harness::{execute, ActivationKind, DataKind, ExperimentConfig};
use gdlab::Error;

/// Writes a tiny IDX pair: `labels.len()` images of 4×4 pixels, where image
/// `k` lights pixel `k % 16` fully and every other pixel at `label`.
fn write_fixture(dir: &Path, labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
    let mut img = Vec::new();
    for v in [IDX_IMAGES_MAGIC, labels.len() as u32, 4, 4] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for (k, &l) in labels.iter().enumerate() {
        for p in 0..16 {
            img.push(if p == k % 16 { 255 } else { l * 3 });
        }
    }
    let mut lab = Vec::new();
    for v in [IDX_LABELS_MAGIC, labels.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(labels);
    let (ip, lp) = (dir.join("images.idx3-ubyte"), dir.join("labels.idx1-ubyte"));
    fs::write(&ip, img).unwrap();
    fs::write(&lp, lab).unwrap();
    (ip, lp)
}

#[test]
fn idx_fixture_loads_binary_subset() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = write_fixture(dir.path(), &[0, 7, 1, 1, 0, 7, 0, 1]);
    let ds = load_idx_pair(&ip, &lp, 0, 1, 100).unwrap();
    assert_eq!((ds.n(), ds.d()), (6, 16));
    assert_eq!(ds.y(), &[1.0, -1.0, -1.0, 1.0, 1.0, -1.0]);
    // Image 2 (label 1): pixel 2 is 255, the rest 3/255.
    assert_eq!(ds.x()[(1, 2)], 1.0);
    assert!((ds.x()[(1, 0)] - 3.0 / 255.0).abs() < 1e-15);

    let ds = load_idx_pair(&ip, &lp, 0, 1, 3).unwrap();
    assert_eq!(ds.n(), 3);
    assert!(matches!(load_idx_pair(&ip, &lp, 0, 9, 10), Err(Error::ClassNotFound { class: 9 })));
    assert!(matches!(load_idx_pair(&lp, &ip, 0, 1, 10), Err(Error::BadMagic { .. })));

    let bytes = fs::read(&ip).unwrap();
    fs::write(&ip, &bytes[..bytes.len() - 5]).unwrap();
    assert!(matches!(load_idx_pair(&ip, &lp, 0, 1, 10), Err(Error::TruncatedFile { .. })));
}

#[test]
fn sgd_run_on_idx_data() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<u8> = (0..12).map(|k| if k % 2 == 0 { 0 } else { 1 }).collect();
    let (ip, lp) = write_fixture(dir.path(), &labels);
    let cfg = ExperimentConfig {
        data: DataKind::IdxPair,
        n: 12,
        d: 16,
        idx_images: Some(ip),
        idx_labels: Some(lp),
        class_a: 0,
        class_b: 1,
        m: 10,
        sigma0: 1e-5,
        batch: Some(4),
        eta: 0.5,
        ..ExperimentConfig::synthetic(ActivationKind::Relu, 0.5, 300, 2)
    };
    let a = execute(&cfg).unwrap();
    let b = execute(&cfg).unwrap();
    assert!(a.completed());
    assert_eq!(format!("{:?}", a.trajectory), format!("{:?}", b.trajectory));
    let (first, last) = (&a.trajectory[0], a.trajectory.last().unwrap());
    assert!(last.loss < first.loss);
    assert!(a.manifest.oracle.max_reconstruction_residual < 1e-10);

    let wrong_d = ExperimentConfig { d: 784, ..cfg };
    assert!(matches!(execute(&wrong_d), Err(Error::DimensionMismatch { .. })));
}
