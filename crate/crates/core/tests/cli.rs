use std::process::Command;

use mxr_unet::io::{read_cube, read_rgb, write_cube, write_rgb};
use mxr_unet::selftest::synthetic_pairs;

fn mxr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mxr"))
}

#[test]
fn infer_writes_a_cube_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("scene.ppm");
    write_rgb(&synthetic_pairs(1, 64, 0).unwrap()[0].rgb, &input).unwrap();
    let out = dir.path().join("out");
    let status = mxr()
        .args(["infer", "--depth", "18", "--width-mult", "0.125", "--preview", "--out"])
        .arg(&out)
        .arg(&input)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let cube = read_cube(out.join("scene.hsc")).unwrap();
    assert_eq!(cube.shape(), [31, 64, 64]);
    assert_eq!(read_rgb(out.join("scene.preview.ppm")).unwrap().shape(), [3, 64, 64]);
}

#[test]
fn odd_sizes_are_padded_and_cropped() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("odd.ppm");
    write_rgb(&mxr_unet::Raster::zeros(3, 40, 50), &input).unwrap();
    let ok = mxr()
        .args(["infer", "--depth", "18", "--width-mult", "0.125", "--out"])
        .arg(dir.path())
        .arg(&input)
        .status()
        .unwrap();
    assert!(ok.success());
    assert_eq!(read_cube(dir.path().join("odd.hsc")).unwrap().shape(), [31, 40, 50]);
}

#[test]
fn eval_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    for s in synthetic_pairs(2, 32, 1).unwrap() {
        write_rgb(&s.rgb, dir.path().join(format!("rgb/{}.ppm", s.name))).unwrap();
        write_cube(&s.cube, dir.path().join(format!("cubes/{}.hsc", s.name))).unwrap();
    }
    let out = mxr()
        .args(["eval", "--depth", "18", "--width-mult", "0.125", "--track", "real", "--data"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("MRAE") || text.contains("mrae"), "{text}");
}

#[test]
fn train_then_infer_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    for s in synthetic_pairs(2, 32, 4).unwrap() {
        write_rgb(&s.rgb, data.join(format!("rgb/{}.ppm", s.name))).unwrap();
        write_cube(&s.cube, data.join(format!("cubes/{}.hsc", s.name))).unwrap();
    }
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "seed = 3\noutput_dir = \"run\"\n[data]\ntrain = \"data\"\nval = \"data\"\n\
         [model]\nencoder_depth = 18\nwidth_multiplier = 0.125\n[train]\nepochs = 2\nbatch_size = 2\ncrop = 32\n",
    )
    .unwrap();
    let out = mxr().arg("train").arg("--config").arg(&config).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    let log = std::fs::read_to_string(run.join("train.log")).unwrap();
    assert_eq!(log.lines().filter(|l| l.starts_with("kind=epoch")).count(), 2);
    assert!(log.lines().filter(|l| l.starts_with("kind=epoch")).all(|l| !l.contains("val_mrae=none")));

    let ckpt = run.join("checkpoint.mxrw");
    let infer = mxr().arg("infer").arg("--checkpoint").arg(&ckpt).arg("--out").arg(&run).arg(data.join("rgb/synthetic0.ppm")).status().unwrap();
    assert!(infer.success());
    assert_eq!(read_cube(run.join("synthetic0.hsc")).unwrap().shape(), [31, 32, 32]);
}

#[test]
fn usage_errors_exit_2_and_runtime_errors_exit_1() {
    let bad_flag = mxr().args(["infer", "--bogus"]).output().unwrap();
    assert_eq!(bad_flag.status.code(), Some(2));
    let bad_depth = mxr().args(["bench", "--depth", "20"]).output().unwrap();
    assert_eq!(bad_depth.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let missing = mxr()
        .args(["infer", "--out"])
        .arg(dir.path())
        .arg(dir.path().join("missing.ppm"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.ppm"));
}

#[test]
fn selftest_runs_a_single_suite() {
    let out = mxr().args(["selftest", "--suite", "2"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("[PASS] suite 2 schedule"));
}
