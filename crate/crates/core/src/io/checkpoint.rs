//! Weight checkpoints.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MXRW"
//! 4       4     u32 format version (1)
//! 8       1     u8 architecture: 0 = U-Net, 1 = loss network
//!               U-Net:        u32 encoder depth, f64 width multiplier,
//!                             u32 in_channels, u32 out_channels,
//!                             u8 flags (bit 0 self-attention, bit 1 blur)
//!               loss network: u32 in_channels
//! ..      4     u32 entry count N
//!               N entries:    u32 name length, UTF-8 name,
//!                             u8 kind (0 parameter, 1 batch-norm running
//!                             statistic, 2 data normalization statistic),
//!                             u32 rank, rank x u32 extents,
//!                             f32 payload (product of extents values)
//! ..      1     u8 optimizer block present (0 / 1)
//!               u64 step, f64 beta2, f64 eps, f64 weight decay, u32 count,
//!               count x (u32 name length, name, u32 numel, numel f32 first
//!               moments, numel f32 second moments)
//! ```
//!
//! Batch-norm statistics are stored as `<layer>.running_mean` and
//! `<layer>.running_var`; normalization statistics as `norm.rgb.mean`,
//! `norm.rgb.std`, `norm.cube.mean`, `norm.cube.std`.

use std::collections::HashMap;
use std::path::Path;

use super::cube::with_path;
use super::{put_f32s, put_u32, read_file, to_u32, write_file, Reader};
use crate::error::{Error, Result};
use crate::loss::LossNetwork;
use crate::model::{build_unet, EncoderDepth, ModelConfig, MxrUnet};
use crate::nn::{Module, Slot};
use crate::train::{AdamW, AdamWConfig, ChannelStats, Moments, NormalizationStats};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MXRW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Architecture {
    Unet(ModelConfig),
    LossNetwork { in_channels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Param = 0,
    BatchNormStat = 1,
    NormalizationStat = 2,
}

impl EntryKind {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(EntryKind::Param),
            1 => Some(EntryKind::BatchNormStat),
            2 => Some(EntryKind::NormalizationStat),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub kind: EntryKind,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerBlock {
    pub step: u64,
    pub config: AdamWConfig,
    pub moments: Vec<Moments<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub entries: Vec<Entry>,
    pub optimizer: Option<OptimizerBlock>,
}

fn module_entries(module: &dyn Module<f32>) -> Vec<Entry> {
    let mut entries = Vec::new();
    module.visit("", &mut |name, slot| match slot {
        Slot::Param(p) => {
            let t = p.get();
            entries.push(Entry { name: name.to_string(), kind: EntryKind::Param, shape: t.shape().to_vec(), data: t.to_vec() });
        }
        Slot::Norm(state) => {
            let s = state.lock();
            for (suffix, v) in [("running_mean", &s.running_mean), ("running_var", &s.running_var)] {
                entries.push(Entry {
                    name: format!("{name}.{suffix}"),
                    kind: EntryKind::BatchNormStat,
                    shape: vec![v.len()],
                    data: v.clone(),
                });
            }
        }
    });
    entries
}

/// Writes stored values into `module`; every slot must be present with the
/// right shape, and every stored module entry must be consumed.
fn apply_entries(module: &dyn Module<f32>, entries: &[Entry]) -> Result<()> {
    let mut by_name: HashMap<&str, &Entry> = HashMap::new();
    for e in entries.iter().filter(|e| e.kind != EntryKind::NormalizationStat) {
        if by_name.insert(e.name.as_str(), e).is_some() {
            return Err(Error::Integrity(format!("duplicate entry {}", e.name)));
        }
    }
    let mut failure: Option<Error> = None;
    let mut take = |name: &str, kind: EntryKind, shape: &[usize]| -> Option<Vec<f32>> {
        if failure.is_some() {
            return None;
        }
        match by_name.remove(name) {
            None => failure = Some(Error::Integrity(format!("missing entry {name}"))),
            Some(e) if e.kind != kind || e.shape != shape => {
                failure = Some(Error::Integrity(format!(
                    "entry {name}: stored {:?} {:?}, model expects {kind:?} {shape:?}",
                    e.kind, e.shape
                )))
            }
            Some(e) => return Some(e.data.clone()),
        }
        None
    };
    let mut set_failure = None;
    module.visit("", &mut |name, slot| match slot {
        Slot::Param(p) => {
            if let Some(data) = take(name, EntryKind::Param, &p.shape()) {
                if let Err(e) = p.set_data(data) {
                    set_failure.get_or_insert(Error::from(e));
                }
            }
        }
        Slot::Norm(state) => {
            let mut s = state.lock();
            let shape = [s.running_mean.len()];
            if let Some(m) = take(&format!("{name}.running_mean"), EntryKind::BatchNormStat, &shape) {
                s.running_mean = m;
            }
            if let Some(v) = take(&format!("{name}.running_var"), EntryKind::BatchNormStat, &shape) {
                s.running_var = v;
            }
        }
    });
    if let Some(e) = failure.or(set_failure) {
        return Err(e);
    }
    if let Some(extra) = by_name.keys().min() {
        return Err(Error::Integrity(format!("entry {extra} does not belong to this model")));
    }
    Ok(())
}

const NORM_NAMES: [&str; 4] = ["norm.rgb.mean", "norm.rgb.std", "norm.cube.mean", "norm.cube.std"];

impl Checkpoint {
    pub fn from_unet(model: &MxrUnet<f32>, stats: Option<&NormalizationStats>, opt: Option<&AdamW<f32>>) -> Self {
        let mut entries = module_entries(model);
        if let Some(s) = stats {
            let vals = [&s.rgb.mean, &s.rgb.std, &s.cube.mean, &s.cube.std];
            for (name, v) in NORM_NAMES.iter().zip(vals) {
                entries.push(Entry {
                    name: name.to_string(),
                    kind: EntryKind::NormalizationStat,
                    shape: vec![v.len()],
                    data: v.clone(),
                });
            }
        }
        Self {
            architecture: Architecture::Unet(model.config.clone()),
            entries,
            optimizer: opt.map(|o| OptimizerBlock { step: o.step, config: o.config, moments: o.moments.clone() }),
        }
    }

    pub fn from_loss_network(net: &LossNetwork<f32>) -> Self {
        Self {
            architecture: Architecture::LossNetwork { in_channels: net.in_channels() },
            entries: module_entries(net),
            optimizer: None,
        }
    }

    /// Data normalization statistics, when stored.
    pub fn normalization(&self) -> Result<Option<NormalizationStats>> {
        let find = |n: &str| self.entries.iter().find(|e| e.kind == EntryKind::NormalizationStat && e.name == n);
        let found: Vec<_> = NORM_NAMES.iter().map(|n| find(n)).collect();
        match found.iter().filter(|f| f.is_some()).count() {
            0 => Ok(None),
            4 => {
                let v = |i: usize| found[i].expect("all present").data.clone();
                Ok(Some(NormalizationStats {
                    rgb: ChannelStats::new(v(0), v(1)).map_err(|e| Error::Integrity(e.to_string()))?,
                    cube: ChannelStats::new(v(2), v(3)).map_err(|e| Error::Integrity(e.to_string()))?,
                }))
            }
            _ => Err(Error::Integrity("incomplete normalization statistics".into())),
        }
    }

    /// Loads the stored values into an existing model, which must have been
    /// built from the same configuration.
    pub fn apply_to_unet(&self, model: &MxrUnet<f32>) -> Result<()> {
        match &self.architecture {
            Architecture::Unet(cfg) if *cfg == model.config => apply_entries(model, &self.entries),
            Architecture::Unet(cfg) => Err(Error::Integrity(format!(
                "checkpoint holds a {} U-Net (width {}, attention {}, blur {}), model is {} (width {}, attention {}, blur {})",
                cfg.encoder_depth,
                cfg.width_multiplier,
                cfg.self_attention,
                cfg.blur,
                model.config.encoder_depth,
                model.config.width_multiplier,
                model.config.self_attention,
                model.config.blur
            ))),
            Architecture::LossNetwork { .. } => {
                Err(Error::Integrity("checkpoint holds a loss network, not a U-Net".into()))
            }
        }
    }

    pub fn optimizer_state(&self) -> Option<AdamW<f32>> {
        self.optimizer.as_ref().map(|o| AdamW { config: o.config, step: o.step, moments: o.moments.clone() })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        match &self.architecture {
            Architecture::Unet(cfg) => {
                out.push(0);
                put_u32(&mut out, cfg.encoder_depth.layers());
                out.extend_from_slice(&cfg.width_multiplier.to_le_bytes());
                put_u32(&mut out, to_u32(cfg.in_channels, "in_channels")?);
                put_u32(&mut out, to_u32(cfg.out_channels, "out_channels")?);
                out.push(cfg.self_attention as u8 | (cfg.blur as u8) << 1);
            }
            Architecture::LossNetwork { in_channels } => {
                out.push(1);
                put_u32(&mut out, to_u32(*in_channels, "in_channels")?);
            }
        }
        put_u32(&mut out, to_u32(self.entries.len(), "entry count")?);
        for e in &self.entries {
            if e.shape.iter().product::<usize>() != e.data.len() {
                return Err(Error::Contract(format!("entry {} has inconsistent shape", e.name)));
            }
            put_u32(&mut out, to_u32(e.name.len(), "name length")?);
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.kind as u8);
            put_u32(&mut out, to_u32(e.shape.len(), "rank")?);
            for &d in &e.shape {
                put_u32(&mut out, to_u32(d, "extent")?);
            }
            put_f32s(&mut out, &e.data);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(o) => {
                out.push(1);
                out.extend_from_slice(&o.step.to_le_bytes());
                for v in [o.config.beta2, o.config.eps, o.config.weight_decay] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                put_u32(&mut out, to_u32(o.moments.len(), "moment count")?);
                for m in &o.moments {
                    put_u32(&mut out, to_u32(m.name.len(), "name length")?);
                    out.extend_from_slice(m.name.as_bytes());
                    put_u32(&mut out, to_u32(m.m.len(), "moment length")?);
                    put_f32s(&mut out, &m.m);
                    put_f32s(&mut out, &m.v);
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.bytes(4)? != CHECKPOINT_MAGIC {
            return Err(r.format_at(0, "bad magic, expected \"MXRW\""));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version { found: version, supported: CHECKPOINT_VERSION });
        }
        let at = r.pos();
        let architecture = match r.u8()? {
            0 => {
                let depth_at = r.pos();
                let depth = EncoderDepth::try_from(r.u32()?).map_err(|e| r.format_at(depth_at, e.to_string()))?;
                let width_multiplier = r.f64()?;
                let in_channels = r.u32()? as usize;
                let out_channels = r.u32()? as usize;
                let flags_at = r.pos();
                let flags = r.u8()?;
                if flags & !3 != 0 {
                    return Err(r.format_at(flags_at, format!("unknown model flags {flags:#04x}")));
                }
                let cfg = ModelConfig {
                    encoder_depth: depth,
                    in_channels,
                    out_channels,
                    width_multiplier,
                    self_attention: flags & 1 != 0,
                    blur: flags & 2 != 0,
                };
                cfg.validate().map_err(|e| r.format_at(depth_at, e.to_string()))?;
                Architecture::Unet(cfg)
            }
            1 => Architecture::LossNetwork { in_channels: r.u32()? as usize },
            tag => return Err(r.format_at(at, format!("unknown architecture tag {tag}"))),
        };
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = read_name(&mut r)?;
            let kind_at = r.pos();
            let kind = EntryKind::from_u8(r.u8()?)
                .ok_or_else(|| r.format_at(kind_at, format!("entry {name}: unknown kind")))?;
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(r.format_at(kind_at + 1, format!("entry {name}: rank {rank} too large")));
            }
            let shape = (0..rank).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| r.format("extents overflow"))?;
            let data = r.f32s(n)?;
            entries.push(Entry { name, kind, shape, data });
        }
        let flag_at = r.pos();
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let config = AdamWConfig { beta2: r.f64()?, eps: r.f64()?, weight_decay: r.f64()? };
                let n = r.u32()? as usize;
                let mut moments = Vec::with_capacity(n.min(1 << 16));
                for _ in 0..n {
                    let name = read_name(&mut r)?;
                    let len = r.u32()? as usize;
                    let m = r.f32s(len)?;
                    let v = r.f32s(len)?;
                    moments.push(Moments { name, m, v });
                }
                Some(OptimizerBlock { step, config, moments })
            }
            f => return Err(r.format_at(flag_at, format!("invalid optimizer flag {f}"))),
        };
        if r.remaining() != 0 {
            return Err(r.format(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { architecture, entries, optimizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&read_file(path)?).map_err(|e| with_path(e, path))
    }
}

fn read_name(r: &mut Reader<'_>) -> Result<String> {
    let at = r.pos();
    let len = r.u32()? as usize;
    let raw = r.bytes(len)?;
    String::from_utf8(raw.to_vec()).map_err(|_| r.format_at(at + 4, "name is not UTF-8"))
}

/// Model, normalization statistics and optimizer state restored from disk.
pub struct LoadedModel {
    pub model: MxrUnet<f32>,
    pub stats: Option<NormalizationStats>,
    pub optimizer: Option<AdamW<f32>>,
}

pub fn save_checkpoint(
    model: &MxrUnet<f32>,
    stats: Option<&NormalizationStats>,
    opt: Option<&AdamW<f32>>,
    path: impl AsRef<Path>,
) -> Result<()> {
    Checkpoint::from_unet(model, stats, opt).save(path)
}

/// Rebuilds the stored architecture and loads its weights. When `expected`
/// is given, the stored configuration must match it.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<LoadedModel> {
    let ckpt = Checkpoint::load(path)?;
    let Architecture::Unet(cfg) = &ckpt.architecture else {
        return Err(Error::Integrity("checkpoint holds a loss network, not a U-Net".into()));
    };
    let model = build_unet(expected.unwrap_or(cfg), 0)?;
    ckpt.apply_to_unet(&model)?;
    Ok(LoadedModel { model, stats: ckpt.normalization()?, optimizer: ckpt.optimizer_state() })
}

pub fn save_loss_network(net: &LossNetwork<f32>, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::from_loss_network(net).save(path)
}

pub fn load_loss_network(path: impl AsRef<Path>) -> Result<LossNetwork<f32>> {
    let ckpt = Checkpoint::load(path)?;
    let Architecture::LossNetwork { in_channels } = ckpt.architecture else {
        return Err(Error::Integrity("checkpoint holds a U-Net, not a loss network".into()));
    };
    let net = LossNetwork::zeroed(in_channels)?;
    apply_entries(&net, &ckpt.entries)?;
    Ok(net)
}
