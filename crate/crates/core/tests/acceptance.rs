//! Runs every acceptance criterion and prints one PASS/FAIL line each.
//! Criteria 1-9 come from the `mxr selftest` suites; criterion 10 checks the
//! golden files, a checkpoint round trip and the selftest exit status.

mod common;

use std::collections::BTreeMap;
use std::process::Command;

use common::{golden, tiny_checkpoint};
use mxr_unet::io::{decode_cube, decode_ppm, encode_cube, encode_ppm, Checkpoint};
use mxr_unet::loss::{LossNetwork, LossWeights};
use mxr_unet::selftest::synthetic_pairs;
use mxr_unet::train::{fit, AdamW, NormalizationStats, TrainConfig};
use mxr_unet::{build_unet, EncoderDepth, ModelConfig};

const CRITERIA: [&str; 10] = [
    "gradient suite",
    "schedule exactness",
    "layer invariants",
    "model contract",
    "parameter claims",
    "latency claim",
    "loss identities",
    "overfit smoke",
    "mrae metric",
    "io round trips",
];

/// Suite verdicts keyed by suite number, parsed from `[PASS] suite N ...` lines.
fn suite_verdicts(stdout: &str) -> BTreeMap<u8, bool> {
    stdout
        .lines()
        .filter_map(|l| {
            let (verdict, rest) = l.split_once(" suite ")?;
            let id = rest.split_whitespace().next()?.parse().ok()?;
            Some((id, verdict == "[PASS]"))
        })
        .collect()
}

fn io_checks() -> Result<(), String> {
    let cube = golden("cube_2x1x3.hex");
    if encode_cube(&decode_cube(&cube).map_err(|e| e.to_string())?).map_err(|e| e.to_string())? != cube {
        return Err("cube golden does not re-encode byte-exactly".into());
    }
    let ppm = golden("rgb_2x1.hex");
    if encode_ppm(&decode_ppm(&ppm).map_err(|e| e.to_string())?).map_err(|e| e.to_string())? != ppm {
        return Err("ppm golden does not re-encode byte-exactly".into());
    }
    let ckpt = golden("checkpoint_tiny.hex");
    if Checkpoint::from_bytes(&ckpt).map_err(|e| e.to_string())? != tiny_checkpoint() {
        return Err("checkpoint golden parsed to unexpected content".into());
    }

    let samples = synthetic_pairs(2, 32, 3).map_err(|e| e.to_string())?;
    let stats = NormalizationStats::compute(samples.iter().map(|s| (&s.rgb, &s.cube))).map_err(|e| e.to_string())?;
    let model = build_unet::<f32>(&ModelConfig::new(EncoderDepth::D18, 0.125), 0).map_err(|e| e.to_string())?;
    let net = LossNetwork::<f32>::seeded(31, 0).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { epochs: 1, batch_size: 2, crop: 0, loss: LossWeights::pixel_only(), ..TrainConfig::default() };
    let mut opt = AdamW::new(cfg.optimizer);
    fit(&model, &samples, &[], &stats, &net, &cfg, &mut opt, &mut ()).map_err(|e| e.to_string())?;
    let bytes = Checkpoint::from_unet(&model, Some(&stats), Some(&opt)).to_bytes().map_err(|e| e.to_string())?;
    let again = Checkpoint::from_bytes(&bytes).map_err(|e| e.to_string())?;
    let reloaded = build_unet::<f32>(&ModelConfig::new(EncoderDepth::D18, 0.125), 99).map_err(|e| e.to_string())?;
    again.apply_to_unet(&reloaded).map_err(|e| e.to_string())?;
    let rebuilt = Checkpoint::from_unet(&reloaded, again.normalization().map_err(|e| e.to_string())?.as_ref(), again.optimizer_state().as_ref());
    if rebuilt.to_bytes().map_err(|e| e.to_string())? != bytes {
        return Err("checkpoint round trip is not bitwise lossless".into());
    }
    Ok(())
}

fn main() {
    let out = Command::new(env!("CARGO_BIN_EXE_mxr")).args(["selftest", "--threads", "1"]).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    println!("{stdout}");
    let verdicts = suite_verdicts(&stdout);

    let mut results: Vec<(usize, bool, String)> = (1..=9u8)
        .map(|id| {
            let ok = verdicts.get(&id).copied().unwrap_or(false);
            (id as usize, ok, if verdicts.contains_key(&id) { String::new() } else { "suite did not report".into() })
        })
        .collect();
    let io = io_checks();
    let exit_ok = out.status.success();
    let detail = match (&io, exit_ok) {
        (Err(e), _) => e.clone(),
        (Ok(()), false) => format!("selftest exited with {:?}", out.status.code()),
        _ => String::new(),
    };
    results.push((10, io.is_ok() && exit_ok, detail));

    for (id, ok, detail) in &results {
        let verdict = if *ok { "PASS" } else { "FAIL" };
        let suffix = if detail.is_empty() { String::new() } else { format!(" ({detail})") };
        println!("criterion {id:>2} {}: {verdict}{suffix}", CRITERIA[id - 1]);
    }
    let failed: Vec<_> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!("acceptance: {}/10 criteria passed", 10 - failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
