//! The on-disk interface shared with the Python extractor. Fixtures here are
//! written byte-by-byte with std only, as an external producer would.

use std::fs;
use std::path::Path;

use attngeo::dumpio::{read_dump, read_manifest, write_dump};
use attngeo::synth::{generate, write_synthetic, FrameKind, SynthSpec};
use attngeo::Error;
use serde_json::{json, Value};

const T: usize = 3;
const L: usize = 2;
const H: usize = 2;

fn blob(path: &Path, data: &[f32]) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, data.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>()).unwrap();
}

/// Causal `[L, H, T, T]` attention with row i spread uniformly over 0..=i.
fn causal_attention() -> Vec<f32> {
    let mut out = Vec::new();
    for _ in 0..L * H {
        for i in 0..T {
            for j in 0..T {
                out.push(if j <= i { 1.0 / (i + 1) as f32 } else { 0.0 });
            }
        }
    }
    out
}

fn manifest() -> Value {
    json!({
        "format_version": 1,
        "model_id": "tiny-causal",
        "num_layers": L,
        "num_heads": H,
        "hidden_dim": 4,
        "head_dim": 2,
        "causal": true,
        "dtype": "f32-le",
        "checkpoint_label": "step-100",
        "capture_point": "post-rotary",
        "head_expansion": "none",
        "samples": [{
            "sample_id": "s0",
            "seq_len": T,
            "token_file": "s0/tokens.json",
            "tensor_files": {"attention": "s0/attention.bin", "hidden": "s0/hidden.bin"}
        }]
    })
}

fn write_fixture(dir: &Path, manifest: &Value, attention: &[f32]) {
    fs::create_dir_all(dir.join("s0")).unwrap();
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(manifest).unwrap()).unwrap();
    fs::write(dir.join("s0/tokens.json"), r#"["<s>", "the", "cat"]"#).unwrap();
    blob(&dir.join("s0/attention.bin"), attention);
    blob(&dir.join("s0/hidden.bin"), &vec![0.5; (L + 1) * T * 4]);
}

fn read_err(manifest: &Value, attention: &[f32]) -> Error {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), manifest, attention);
    let err = read_dump(dir.path()).unwrap_err();
    assert!(err.is_validation(), "{err}");
    err
}

#[test]
fn external_fixture_reads() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &manifest(), &causal_attention());
    let dump = read_dump(dir.path()).unwrap();
    assert_eq!(dump.num_layers(), L);
    assert_eq!(dump.num_heads(), H);
    assert!(dump.causal());
    assert!(dump.has_hidden());
    assert!(!dump.has_qkv());
    assert_eq!(dump.samples[0].tokens, vec!["<s>", "the", "cat"]);
    assert_eq!(dump.manifest.capture_point.as_deref(), Some("post-rotary"));
    assert_eq!(read_manifest(dir.path()).unwrap(), dump.manifest);
}

#[test]
fn truncated_blob() {
    let mut a = causal_attention();
    a.pop();
    assert!(matches!(read_err(&manifest(), &a), Error::ByteLength { .. }));
}

#[test]
fn row_sum_violation() {
    let mut a = causal_attention();
    a[T + 1] += 0.01;
    assert!(matches!(read_err(&manifest(), &a), Error::Simplex { row: 1, .. }));
}

#[test]
fn row_sum_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = causal_attention();
    a[T + 1] += 5e-5;
    write_fixture(dir.path(), &manifest(), &a);
    assert!(read_dump(dir.path()).is_ok());
}

#[test]
fn causal_mask_violation() {
    let mut a = causal_attention();
    // Row 0 of layer 1 head 1 leaks 0.5 onto position 1.
    let off = 3 * T * T;
    a[off] = 0.5;
    a[off + 1] = 0.5;
    let err = read_err(&manifest(), &a);
    assert!(matches!(err, Error::CausalMask { layer: 1, head: 1, row: 0, col: 1, .. }), "{err}");
}

#[test]
fn non_finite_entry() {
    let mut a = causal_attention();
    a[4] = f32::NAN;
    assert!(matches!(read_err(&manifest(), &a), Error::NonFinite { index: 4, .. }));
}

#[test]
fn entry_above_one() {
    let mut a = causal_attention();
    a[T] = 1.5;
    a[T + 1] = -0.5;
    assert!(matches!(read_err(&manifest(), &a), Error::Simplex { .. }));
}

#[test]
fn manifest_violations() {
    let a = causal_attention();
    let mut m = manifest();
    m["format_version"] = json!(2);
    assert!(matches!(read_err(&m, &a), Error::Version { found: 2, expected: 1 }));

    let mut m = manifest();
    m["samples"][0]["tensor_files"]["q"] = json!("s0/q.bin");
    assert!(matches!(read_err(&m, &a), Error::Manifest(_)));

    let mut m = manifest();
    m["samples"][0]["tensor_files"]["attention"] = json!("../attention.bin");
    assert!(matches!(read_err(&m, &a), Error::Manifest(_)));

    let mut m = manifest();
    m["dtype"] = json!("f16");
    assert!(matches!(read_err(&m, &a), Error::Manifest(_)));

    let mut m = manifest();
    m["head_dim"] = json!(3);
    assert!(matches!(read_err(&m, &a), Error::Manifest(_)));
}

#[test]
fn missing_file_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), &manifest(), &causal_attention());
    fs::remove_file(dir.path().join("s0/hidden.bin")).unwrap();
    assert!(matches!(read_dump(dir.path()).unwrap_err(), Error::Io { .. }));
}

#[test]
fn synthetic_round_trip() {
    for frame in [FrameKind::Centralized, FrameKind::Distributed, FrameKind::Bidirectional] {
        let dump = generate(&SynthSpec { noise: 0.2, samples: 2, ..SynthSpec::new(frame) }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dump(&dump, dir.path()).unwrap();
        assert_eq!(read_dump(dir.path()).unwrap(), dump);
    }
}

#[test]
fn synthetic_writes_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec::new(FrameKind::Distributed);
    write_synthetic(&spec, dir.path()).unwrap();
    let truth: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ground_truth.json")).unwrap()).unwrap();
    assert_eq!(truth["frame_type"], "distributed");
    assert_eq!(truth["ref_positions"], json!([0, 5, 9]));
    read_dump(dir.path()).unwrap();
}
