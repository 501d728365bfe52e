mod common;

use common::{golden, tiny_checkpoint};
use mxr_unet::io::*;
use mxr_unet::{EncoderDepth, Error, HyperCube, Raster, RgbImage};

#[test]
fn cube_golden_parses_and_reencodes() {
    let bytes = golden("cube_2x1x3.hex");
    assert_eq!(bytes.len(), 17 + 6 * 4);
    let cube = decode_cube(&bytes).unwrap();
    assert_eq!(cube.shape(), [2, 1, 3]);
    assert_eq!(cube.data(), &[0.0, 0.5, 1.0, -2.0, 0.25, 1024.0]);
    assert_eq!(encode_cube(&cube).unwrap(), bytes);
}

#[test]
fn cube_errors_are_specific() {
    let bytes = golden("cube_2x1x3.hex");
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_cube(&bad), Err(Error::Format { offset: 0, .. })));
    assert!(matches!(
        decode_cube(&bytes[..bytes.len() - 3]),
        Err(Error::Truncated { expected: 41, actual: 38 })
    ));
    let mut dtype = bytes.clone();
    dtype[16] = 2;
    assert!(matches!(decode_cube(&dtype), Err(Error::Format { offset: 16, .. })));
    let mut long = bytes;
    long.push(0);
    assert!(matches!(decode_cube(&long), Err(Error::Format { offset: 41, .. })));
}

#[test]
fn cube_header_with_short_payload_names_byte_counts() {
    let mut bytes = b"HSC1".to_vec();
    for v in [31u32, 4, 4] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.push(1);
    bytes.extend_from_slice(&[0; 40]);
    let err = decode_cube(&bytes).unwrap_err();
    assert!(matches!(err, Error::Truncated { expected: 2001, actual: 57 }));
    assert!(err.to_string().contains("2001"));
}

#[test]
fn ppm_golden_parses_and_reencodes() {
    let bytes = golden("rgb_2x1.hex");
    let img = decode_ppm(&bytes).unwrap();
    assert_eq!(img.shape(), [3, 1, 2]);
    assert_eq!(img.channel(0), &[1.0, 0.0]);
    assert_eq!(img.channel(1), &[0.0, 102.0 / 255.0]);
    assert_eq!(img.channel(2), &[51.0 / 255.0, 1.0]);
    assert_eq!(encode_ppm(&img).unwrap(), bytes);
}

#[test]
fn ppm_header_comments_are_skipped() {
    let plain = golden("rgb_2x1.hex");
    let mut commented = b"P6\n# made by hand\n2 1 # size\n255\n".to_vec();
    commented.extend_from_slice(&plain[11..]);
    assert_eq!(decode_ppm(&commented).unwrap(), decode_ppm(&plain).unwrap());
}

#[test]
fn ppm_rejects_ascii_and_other_maxvals() {
    let err = decode_ppm(b"P3\n1 1\n255\n0 0 0\n").unwrap_err();
    assert!(err.to_string().contains("P6"), "{err}");
    assert!(matches!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(Error::Format { .. })));
    assert!(matches!(decode_ppm(b"P6\n2 2\n255\n\0\0\0"), Err(Error::Truncated { .. })));
}

#[test]
fn ppm_encoding_clamps_and_rounds() {
    let img = RgbImage::new(3, 1, 1, vec![-0.5, 0.5, 1.7]).unwrap();
    let bytes = encode_ppm(&img).unwrap();
    assert_eq!(&bytes[bytes.len() - 3..], &[0, 128, 255]);
}

#[test]
fn checkpoint_golden_parses_and_reencodes() {
    let bytes = golden("checkpoint_tiny.hex");
    let ckpt = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(ckpt, tiny_checkpoint());
    assert_eq!(tiny_checkpoint().to_bytes().unwrap(), bytes);
}

#[test]
fn checkpoint_rejects_corruption() {
    let bytes = golden("checkpoint_tiny.hex");
    let mut version = bytes.clone();
    version[4] = 9;
    assert!(matches!(Checkpoint::from_bytes(&version), Err(Error::Version { found: 9, supported: 1 })));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Truncated { .. })));
    let mut depth = bytes.clone();
    depth[9] = 19;
    assert!(matches!(Checkpoint::from_bytes(&depth), Err(Error::Format { offset: 9, .. })));
    let mut trailing = bytes;
    trailing.push(0);
    assert!(matches!(Checkpoint::from_bytes(&trailing), Err(Error::Format { .. })));
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cube = HyperCube::new(31, 2, 3, (0..186).map(|v| v as f32 * 0.01).collect()).unwrap();
    let path = dir.path().join("nested/a.hsc");
    write_cube(&cube, &path).unwrap();
    assert_eq!(read_cube(&path).unwrap(), cube);

    let missing = read_cube(dir.path().join("nope.hsc")).unwrap_err();
    assert!(missing.to_string().contains("nope.hsc"));
}

#[test]
fn dataset_pairs_by_stem() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let rgb = Raster::zeros(3, 4, 4);
    let cube = Raster::zeros(31, 4, 4);
    for stem in ["a", "b"] {
        write_rgb(&rgb, root.join(format!("rgb/{stem}.ppm"))).unwrap();
    }
    write_cube(&cube, root.join("cubes/a.hsc")).unwrap();
    write_cube(&cube, root.join("cubes/c.hsc")).unwrap();
    std::fs::write(root.join("cubes/b.hsc"), b"junk").unwrap();

    let list = pair_dataset(root).unwrap();
    let stems: Vec<_> = list.pairs.iter().map(|p| p.stem.as_str()).collect();
    assert_eq!(stems, ["a", "b"]);
    assert!(!list.unmatched.is_empty());

    assert!(load_pairs(&list.pairs, false).is_err());
    let (samples, skipped) = load_pairs(&list.pairs, true).unwrap();
    assert_eq!(samples.len(), 1);
    assert_eq!(skipped.len(), 1);
    assert_eq!(skipped[0].0, "b");

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(pair_dataset(empty.path()), Err(Error::Config(_))));
}

#[test]
fn run_config_round_trips_through_toml() {
    let text = r#"
        track = "real-world"
        [data]
        train = "train"
        [model]
        encoder_depth = 34
        width_multiplier = 0.5
        [train]
        epochs = 3
        batch_size = 2
    "#;
    let cfg = RunConfig::from_toml(text).unwrap();
    assert_eq!(cfg.track, Track::Real);
    assert_eq!(cfg.model.encoder_depth, EncoderDepth::D34);
    assert_eq!(cfg.train.epochs, 3);
    assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    assert!(RunConfig::from_toml("[model]\nencoder_depth = 20\n[data]\ntrain = \"x\"").is_err());
    assert!(RunConfig::from_toml("[data]\ntrain = \"x\"\nbogus = 1").is_err());
}
