use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskwatch_core::container::Container;
use riskwatch_core::nn::{init_model, load_model, save_model, ModelConfig};
use riskwatch_core::{Bundle, Error};

fn windows(n: usize) -> Vec<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n).map(|_| Array2::from_shape_fn((30, 5), |_| rng.random_range(-3.0..3.0))).collect()
}

fn bundle() -> Bundle {
    let cfg = ModelConfig::default();
    Bundle::new(cfg.clone(), init_model(&cfg, 17))
}

#[test]
fn save_load_predict_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let b = bundle();
    save_model(&b, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, b);
    assert_eq!(loaded.fingerprint(), b.fingerprint());

    let w = windows(300);
    let views: Vec<_> = w.iter().map(|a| a.view()).collect();
    let before = b.predict(&views).unwrap();
    let after = loaded.predict(&views).unwrap();
    for (x, y) in before.iter().zip(&after) {
        assert_eq!(x.class, y.class);
        let xb: Vec<u64> = x.probabilities.iter().map(|p| p.to_bits()).collect();
        let yb: Vec<u64> = y.probabilities.iter().map(|p| p.to_bits()).collect();
        assert_eq!(xb, yb);
    }
}

#[test]
fn corruption_kinds_are_distinguished() {
    let bytes = bundle().to_bytes();
    assert!(Container::decode(&bytes).is_ok());

    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(Container::decode(&magic), Err(Error::BadMagic)));

    let cut = &bytes[..bytes.len() - 100];
    assert!(matches!(Container::decode(cut), Err(Error::Truncated(_))));

    let mut flipped = bytes.clone();
    let mid = bytes.len() - 1000;
    flipped[mid] ^= 0x40;
    assert!(matches!(Container::decode(&flipped), Err(Error::ChecksumMismatch { .. })));

    let mut version = bytes.clone();
    version[4] = 9;
    assert!(matches!(Container::decode(&version), Err(Error::UnsupportedVersion(9))));
}

#[test]
fn reading_a_dataset_as_model_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.bin");
    let mut c = Container::new(Default::default());
    c.meta.insert("kind".into(), "riskwatch.dataset".into());
    c.push("labels", &[1], vec![0.0]);
    c.write(&path).unwrap();
    assert!(matches!(load_model(&path), Err(Error::Manifest(_))));
    assert!(matches!(load_model(&dir.path().join("missing.bin")), Err(Error::Io { .. })));
}
