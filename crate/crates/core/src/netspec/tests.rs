use super::*;
use crate::grid::Grid;

fn tiny(extra: &str) -> String {
    format!(
        r#"
name = "tiny"
input_shape = [6, 6]
class_count = 2
precision = 4

[[layers]]
name = "c"
kind = "conv"
out_maps = 2
{extra}
"#
    )
}

#[test]
fn design2_has_three_downsampling_pools() {
    let net = NetworkSpec::preset("mnist_design2").unwrap();
    let pools: Vec<_> = net
        .layers
        .iter()
        .filter(|l| matches!(l.op, LayerOp::Pool { downsample: Some(_), .. }))
        .collect();
    assert_eq!(pools.len(), 3);
    assert!(!net.has_fc());
    let last = net.layers.last().unwrap();
    assert_eq!(last.in_shape, Shape::new(3, 3));
    assert_eq!(last.out_maps, 10);
}

#[test]
fn design1_ends_with_fc() {
    let net = NetworkSpec::preset("mnist_design1").unwrap();
    let fc = net.layers.last().unwrap();
    assert_eq!(fc.kind(), LayerKind::Fc);
    assert_eq!(fc.out_maps, 10);
    assert_eq!(fc.fc_inputs(), 4 * 28 * 28);
}

#[test]
fn every_preset_chains() {
    for (name, _) in presets::NETWORKS {
        let net = NetworkSpec::preset(name).unwrap();
        let mut maps = net.input_maps;
        let mut shape = net.input_shape;
        for l in &net.layers {
            assert_eq!((l.in_maps, l.in_shape), (maps, shape), "{name}/{}", l.name);
            maps = l.out_maps;
            shape = l.out_shape;
        }
        assert_eq!(maps, net.class_count);
    }
    assert_eq!(NetworkSpec::preset("cifar_alexnet_c96").unwrap().input_maps, 3);
}

#[test]
fn five_by_five_kernel_rejected() {
    let err = NetworkSpec::parse(&tiny("kernel = [5, 5]"), "t").unwrap_err();
    assert!(err.to_string().contains("'c'"));
    assert!(err.to_string().contains("5x5"));
}

#[test]
fn shape_chain_error_names_layer() {
    let err = NetworkSpec::parse(&tiny("in_maps = 3"), "t").unwrap_err();
    assert!(matches!(err, Error::Layer { ref layer, .. } if layer == "c"));
    let err = NetworkSpec::parse(&tiny("map_shape = [5, 5]"), "t").unwrap_err();
    assert!(err.to_string().contains("5x5"));
}

#[test]
fn fc_must_be_last() {
    let text = r#"
name = "bad"
input_shape = [4, 4]
class_count = 2
precision = 8
[[layers]]
name = "f"
kind = "fc"
out_maps = 2
[[layers]]
name = "r"
kind = "relu"
"#;
    let err = NetworkSpec::parse(text, "t").unwrap_err();
    assert!(err.to_string().contains("'f'"));
}

#[test]
fn odd_half_downsample_rejected() {
    let text = tiny("[[layers]]\nname = \"p\"\nkind = \"pool\"\ndownsample = \"half\"").replace("[6, 6]", "[5, 5]");
    let err = NetworkSpec::parse(&text, "t").unwrap_err();
    assert!(matches!(err, Error::Layer { ref layer, .. } if layer == "p"));
}

#[test]
fn class_count_checked() {
    let err = NetworkSpec::parse(&tiny("").replace("class_count = 2", "class_count = 3"), "t").unwrap_err();
    assert!(err.to_string().contains("class_count"));
}

#[test]
fn parse_error_reports_origin() {
    let err = NetworkSpec::parse("name = ", "broken.toml").unwrap_err();
    assert!(err.to_string().starts_with("parse error in broken.toml"));
}

#[test]
fn precision_values() {
    assert_eq!(Precision::try_from(32).unwrap(), Precision::Float32);
    assert!(Precision::try_from(1).is_err());
    assert_eq!(Precision::Bits(8).quant().unwrap().bits(), 8);
}

#[test]
fn zero_weights_by_default_and_round_trip() {
    let mut net = NetworkSpec::preset("mnist_design1").unwrap();
    assert!(net.flat_weights().iter().all(|&v| v == 0.0));
    net.randomize(7);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.bin");
    save_weights(&p, &net).unwrap();
    let base = NetworkSpec::preset("mnist_design1").unwrap();
    let back = load_weights(&p, &base).unwrap();
    let a: Vec<u64> = net.flat_weights().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = back.flat_weights().iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

#[test]
fn mismatched_weights_name_layer() {
    let d1 = NetworkSpec::preset("mnist_design1").unwrap();
    // conv1 fits, conv2 gets only 5 values
    let short: Vec<f64> = vec![0.0; 4 * 9 + 4 + 5];
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.bin");
    std::fs::write(&p, write_weight_blob(&short)).unwrap();
    let err = load_weights(&p, &d1).unwrap_err();
    match err {
        Error::WeightShape { layer, expected, .. } => {
            assert_eq!(layer, "conv2");
            assert!(expected.contains("4x4x3x3"));
        }
        other => panic!("{other}"),
    }
}

#[test]
fn weight_blob_magic_checked() {
    assert!(read_weight_blob(b"NOTMAGIC\0\0\0\0\0\0\0\0", "x").is_err());
    let mut blob = write_weight_blob(&[1.0, 2.0]);
    blob.pop();
    assert!(read_weight_blob(&blob, "x").is_err());
}

#[test]
fn relative_weights_path_resolved() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("net.toml");
    let text = tiny("").replace("precision = 4", "precision = 4\nweights = \"w.bin\"");
    std::fs::write(&p, text).unwrap();
    let net = load_network(&p).unwrap();
    assert_eq!(net.weights_file.unwrap(), dir.path().join("w.bin"));
}

#[test]
fn byte_normalization() {
    assert_eq!(normalize_byte(0), -1.0);
    assert_eq!(normalize_byte(255), 1.0);
    assert!((normalize_byte(128) - 0.5 / 127.5).abs() < 1e-15);
    for p in 0..=255u8 {
        assert_eq!(denormalize_byte(normalize_byte(p)), p);
    }
}

#[test]
fn idx_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ds = Dataset::synthetic(3, 1, Shape::new(4, 5), 10, 1);
    let imgs: Vec<Grid> = ds.images.iter().map(|i| i[0].clone()).collect();
    let ip = dir.path().join("img.idx");
    let lp = dir.path().join("lbl.idx");
    write_idx_images(&ip, &imgs).unwrap();
    write_idx_labels(&lp, &ds.labels).unwrap();
    assert_eq!(load_idx_dataset(&ip, &lp).unwrap(), ds);
    // swapped files trip the magic check
    let err = load_idx_dataset(&lp, &ip).unwrap_err();
    assert!(err.to_string().contains("magic"));
    write_idx_labels(&lp, &ds.labels[..2]).unwrap();
    assert!(matches!(load_idx_dataset(&ip, &lp), Err(Error::Dataset(_))));
}

#[test]
fn dataset_checked_against_network() {
    let net = NetworkSpec::preset("mnist_design1").unwrap();
    let ds = Dataset::synthetic(2, 1, Shape::new(28, 28), 10, 3);
    ds.check_against(&net).unwrap();
    let bad = Dataset::synthetic(2, 3, Shape::new(28, 28), 10, 3);
    assert!(bad.check_against(&net).is_err());
}

#[test]
fn quantized_weights_on_grid() {
    let mut net = NetworkSpec::preset("mnist_design2").unwrap();
    net.randomize(11);
    let q = QuantSpec::new(4).unwrap();
    let qn = net.quantized(q);
    assert!(qn.flat_weights().iter().all(|&v| q.quantize(v) == v));
}
