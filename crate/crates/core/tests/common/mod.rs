#![allow(dead_code)]

use std::path::PathBuf;

use mxr_unet::io::{Architecture, Checkpoint, Entry, EntryKind, OptimizerBlock};
use mxr_unet::train::{AdamWConfig, Moments};
use mxr_unet::{EncoderDepth, ModelConfig};

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Bytes of an annotated hex dump; `#` starts a comment.
pub fn golden(name: &str) -> Vec<u8> {
    let text = std::fs::read_to_string(golden_path(name)).unwrap();
    text.lines()
        .map(|l| l.split('#').next().unwrap())
        .flat_map(|l| l.split_whitespace())
        .map(|b| u8::from_str_radix(b, 16).unwrap())
        .collect()
}

/// The checkpoint described by `checkpoint_tiny.hex`.
pub fn tiny_checkpoint() -> Checkpoint {
    Checkpoint {
        architecture: Architecture::Unet(ModelConfig::new(EncoderDepth::D18, 0.125)),
        entries: vec![
            Entry { name: "head_conv.bias".into(), kind: EntryKind::Param, shape: vec![2], data: vec![1.0, -0.5] },
            Entry { name: "norm.cube.std".into(), kind: EntryKind::NormalizationStat, shape: vec![1], data: vec![0.25] },
        ],
        optimizer: Some(OptimizerBlock {
            step: 3,
            config: AdamWConfig { beta2: 0.99, eps: 1e-8, weight_decay: 1e-3 },
            moments: vec![Moments { name: "head_conv.bias".into(), m: vec![0.5, 0.5], v: vec![0.25, 0.0] }],
        }),
    }
}
