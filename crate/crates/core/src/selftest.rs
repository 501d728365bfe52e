//! Built-in invariant suites, run by `mxr selftest`.

use std::time::Instant;

use mxr_tensor::gradcheck::check_grad;
use mxr_tensor::ops::{
    avg_pool2d, batch_norm2d, conv2d, matmul, max_pool2d, pixel_shuffle, pixel_unshuffle, softmax, BatchNormState,
    PadMode, Padding,
};
use mxr_tensor::{init, no_grad, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bench::benchmark_latency;
use crate::error::{Error, Result};
use crate::loss::{feature_loss, gram, pixel_loss, style_loss, total_loss, LossNetwork, LossWeights};
use crate::metrics::{evaluate_dataset, mrae_slice, rmse_slice, MRAE_EPS};
use crate::model::{build_unet, EncoderDepth, ModelConfig};
use crate::nn::{
    blur, BlockKind, Mode, Module, PixelShuffleUpsampler, SelfAttention, Slot, UnetDecoderBlock, XResBlock,
    XResnetBlockSpec,
};
use crate::raster::{Raster, Sample};
use crate::train::{fit, AdamW, NormalizationStats, OneCycleSchedule, TrainConfig};

/// Suite ids and names, in run order.
pub const SUITES: [(u8, &str); 9] = [
    (1, "gradients"),
    (2, "schedule"),
    (3, "layer-invariants"),
    (4, "model-contract"),
    (5, "parameter-counts"),
    (6, "latency"),
    (7, "loss-identities"),
    (8, "overfit-smoke"),
    (9, "mrae"),
];

#[derive(Debug, Clone)]
pub struct SelftestOptions {
    /// Worker threads for the latency suite.
    pub threads: usize,
    /// Input side length for the latency suite.
    pub latency_size: usize,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self { threads: 1, latency_size: 256 }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub failures: Vec<String>,
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl std::fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] suite {} {}: {} checks, {} failed, {:.1}s",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.checks,
            self.failures.len(),
            self.seconds
        )?;
        for n in &self.notes {
            write!(f, "\n    {n}")?;
        }
        for e in &self.failures {
            write!(f, "\n    failed: {e}")?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Checks {
    count: usize,
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.count += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

pub fn run_suite(id: u8, opts: &SelftestOptions) -> Result<SuiteResult> {
    let name = SUITES
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| *n)
        .ok_or_else(|| Error::Config(format!("unknown suite {id} (1-9)")))?;
    let start = Instant::now();
    let mut c = Checks::default();
    let outcome = match id {
        1 => gradients(&mut c),
        2 => schedule(&mut c),
        3 => layer_invariants(&mut c),
        4 => model_contract(&mut c),
        5 => parameter_counts(&mut c),
        6 => latency(&mut c, opts),
        7 => loss_identities(&mut c),
        8 => overfit_smoke(&mut c),
        _ => mrae_suite(&mut c),
    };
    if let Err(e) = outcome {
        c.failures.push(format!("error: {e}"));
    }
    Ok(SuiteResult {
        id,
        name,
        passed: c.failures.is_empty(),
        checks: c.count,
        failures: c.failures,
        notes: c.notes,
        seconds: start.elapsed().as_secs_f64(),
    })
}

type T64 = Tensor<f64>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randn(shape: &[usize], seed: u64) -> T64 {
    init::normal(shape, 1.0, &mut rng(seed)).expect("valid shape")
}

/// Sets every parameter of `m` to random values (scales near 1).
fn randomize(m: &dyn Module<f64>, seed: u64) {
    let mut r = rng(seed);
    m.visit("", &mut |name, slot| {
        if let Slot::Param(p) = slot {
            let base = if name.ends_with("gamma") { 1.0 } else { 0.0 };
            let scale = if p.shape().len() == 4 { (2.0 / p.shape()[1..].iter().product::<usize>() as f64).sqrt() } else { 0.5 };
            let v = (0..p.numel()).map(|_| base + scale * r.random_range(-1.7..1.7)).collect();
            p.set_data(v).expect("same shape");
        }
    });
}

const REL_TOL: f64 = 1e-4;
const ABS_TOL: f64 = 1e-6;

/// Gradient of `sum(f(x) * r)` for a fixed random `r`, against central differences.
fn grad_case(
    c: &mut Checks,
    label: &str,
    x: &T64,
    h: f64,
    sample: Option<usize>,
    f: impl Fn(&T64) -> mxr_tensor::Result<T64>,
) -> Result<()> {
    let probe = {
        let _g = no_grad();
        f(x)?
    };
    let r = randn(probe.shape(), 0xfeed ^ x.numel() as u64);
    let objective = |t: &T64| f(t)?.mul(&r)?.sum();
    let idx: Option<Vec<usize>> = sample.filter(|&k| k < x.numel()).map(|k| {
        let mut g = rng(x.numel() as u64);
        (0..k).map(|_| g.random_range(0..x.numel())).collect()
    });
    let cmp = check_grad(objective, x, h, idx.as_deref())?;
    c.check(cmp.passes(REL_TOL, ABS_TOL), || {
        format!("{label}: rel {:.2e}, abs {:.2e} over {} entries", cmp.max_rel_err, cmp.max_abs_err, cmp.checked)
    });
    Ok(())
}

fn gradients(c: &mut Checks) -> Result<()> {
    const H: f64 = 1e-5;
    let seeds = [11u64, 22, 33];
    for (k, &s) in seeds.iter().enumerate() {
        let x = randn(&[2, 3, 6, 6], s);
        let w = randn(&[4, 3, 3, 3], s + 1);
        let b = randn(&[4], s + 2);
        grad_case(c, &format!("conv2d/x #{k}"), &x, H, None, |x| conv2d(x, &w, Some(&b), 1, 1))?;
        grad_case(c, &format!("conv2d/w #{k}"), &w, H, None, |w| conv2d(&x, w, Some(&b), 1, 1))?;
        grad_case(c, &format!("conv2d/b #{k}"), &b, H, None, |b| conv2d(&x, &w, Some(b), 1, 1))?;
        grad_case(c, &format!("conv2d strided/x #{k}"), &x, H, None, |x| conv2d(x, &w, None, 2, 0))?;

        let xb = randn(&[3, 2, 3, 3], s + 3);
        let gamma = randn(&[2], s + 4);
        let beta = randn(&[2], s + 5);
        let bn = |x: &T64, g: &T64, bt: &T64, mode| batch_norm2d(x, g, bt, &mut BatchNormState::new(2), mode);
        grad_case(c, &format!("batch_norm train/x #{k}"), &xb, H, None, |x| bn(x, &gamma, &beta, Mode::Train))?;
        grad_case(c, &format!("batch_norm train/gamma #{k}"), &gamma, H, None, |g| bn(&xb, g, &beta, Mode::Train))?;
        grad_case(c, &format!("batch_norm train/beta #{k}"), &beta, H, None, |bt| bn(&xb, &gamma, bt, Mode::Train))?;
        grad_case(c, &format!("batch_norm eval/x #{k}"), &xb, H, None, |x| bn(x, &gamma, &beta, Mode::Eval))?;

        let xp = randn(&[2, 2, 6, 6], s + 6);
        grad_case(c, &format!("avg_pool/x #{k}"), &xp, H, None, |x| {
            avg_pool2d(x, 2, 2, PadMode::Zero, Padding::default())
        })?;
        grad_case(c, &format!("max_pool/x #{k}"), &xp, 1e-6, None, |x| max_pool2d(x, 3, 2, 1))?;

        let xs = randn(&[2, 3, 5], s + 7);
        grad_case(c, &format!("softmax axis 2 #{k}"), &xs, H, None, |x| softmax(x, 2))?;
        grad_case(c, &format!("softmax axis 1 #{k}"), &xs, H, None, |x| softmax(x, 1))?;

        let a = randn(&[2, 3, 4], s + 8);
        let bm = randn(&[2, 4, 5], s + 9);
        let b2 = randn(&[4, 5], s + 10);
        grad_case(c, &format!("matmul/a #{k}"), &a, H, None, |a| matmul(a, &bm))?;
        grad_case(c, &format!("matmul/b #{k}"), &bm, H, None, |b| matmul(&a, b))?;
        grad_case(c, &format!("matmul broadcast/b #{k}"), &b2, H, None, |b| matmul(&a, b))?;

        let xe = randn(&[2, 3, 4], s + 11).mul_scalar(2.0)?;
        grad_case(c, &format!("mish #{k}"), &xe, H, None, |x| x.mish())?;
        grad_case(c, &format!("tanh/exp/softplus/sigmoid #{k}"), &xe, H, None, |x| {
            x.tanh()?.add(&x.mul_scalar(0.3)?.exp()?)?.mul(&x.softplus()?)?.add(&x.sigmoid()?)
        })?;

        let xq = randn(&[1, 8, 3, 3], s + 12);
        grad_case(c, &format!("pixel_shuffle #{k}"), &xq, H, None, |x| pixel_shuffle(x, 2))?;
        grad_case(c, &format!("pixel_unshuffle #{k}"), &randn(&[1, 2, 4, 6], s + 13), H, None, |x| {
            pixel_unshuffle(x, 2)
        })?;
        grad_case(c, &format!("blur #{k}"), &randn(&[2, 2, 4, 5], s + 14), H, None, blur)?;

        let attn = SelfAttention::<f64>::new(8, &mut rng(s + 15))?;
        randomize(&attn, s + 16);
        attn.params.gamma.set_data(vec![0.7])?;
        let xa = randn(&[2, 8, 3, 3], s + 17);
        grad_case(c, &format!("self_attention/x #{k}"), &xa, H, None, |x| attn.forward(x))?;
        let wq = attn.params.query.get().detach();
        grad_case(c, &format!("self_attention/query #{k}"), &wq, H, None, |w| {
            attn.params.query.set(w.clone());
            attn.forward(&xa)
        })?;
        attn.params.query.set(wq.requires_grad_(true));
        grad_case(c, &format!("self_attention/gamma #{k}"), &Tensor::from_vec(vec![0.7], &[1])?, H, None, |g| {
            attn.params.gamma.set(g.clone());
            attn.forward(&xa)
        })?;

        let up = PixelShuffleUpsampler::<f64>::new(6, 3, 2, true, &mut rng(s + 18))?;
        randomize(&up, s + 19);
        grad_case(c, &format!("upsampler/x #{k}"), &randn(&[1, 6, 3, 3], s + 20), H, None, |x| up.forward(x))?;

        let dec = UnetDecoderBlock::<f64>::new(8, 4, true, &mut rng(s + 21))?;
        randomize(&dec, s + 22);
        let up_in = randn(&[2, 8, 2, 2], s + 23);
        let skip = randn(&[2, 4, 4, 4], s + 24);
        grad_case(c, &format!("decoder_block/up #{k}"), &up_in, H, None, |u| dec.forward(u, &skip, Mode::Train))?;
        grad_case(c, &format!("decoder_block/skip #{k}"), &skip, H, Some(24), |sk| {
            dec.forward(&up_in, sk, Mode::Train)
        })?;

        for kind in [BlockKind::Basic, BlockKind::Bottleneck] {
            let spec = XResnetBlockSpec { kind, in_channels: 4, out_channels: 8, stride: 2 };
            let block = XResBlock::<f64>::new(spec, &mut rng(s + 25))?;
            randomize(&block, s + 26);
            grad_case(c, &format!("xresnet {kind:?} block/x #{k}"), &randn(&[2, 4, 4, 4], s + 27), H, Some(32), |x| {
                block.forward(x, Mode::Train)
            })?;
        }

        let p = randn(&[2, 3, 4, 4], s + 28);
        let t = randn(&[2, 3, 4, 4], s + 29);
        grad_case(c, &format!("feature_loss #{k}"), &p, 1e-6, None, |p| feature_loss(p, &t).map_err(tensor_err))?;
        grad_case(c, &format!("gram #{k}"), &p, H, None, |p| gram(p).map_err(tensor_err))?;
        grad_case(c, &format!("style_loss #{k}"), &p, 1e-6, None, |p| style_loss(p, &t).map_err(tensor_err))?;
        grad_case(c, &format!("pixel_loss #{k}"), &p, H, None, |p| pixel_loss(p, &t).map_err(tensor_err))?;
    }

    let net = LossNetwork::<f64>::seeded(31, 7)?;
    for (k, &s) in seeds.iter().enumerate() {
        let pred = randn(&[1, 31, 8, 8], s + 100);
        let target = randn(&[1, 31, 8, 8], s + 101);
        let weights = LossWeights::default();
        grad_case(c, &format!("total_loss (31x8x8) #{k}"), &pred, 1e-6, Some(48), |p| {
            Ok(total_loss(p, &target, &net, &weights).map_err(tensor_err)?.total)
        })?;
    }
    Ok(())
}

fn tensor_err(e: Error) -> mxr_tensor::TensorError {
    match e {
        Error::Tensor(t) => t,
        other => mxr_tensor::TensorError::Contract(other.to_string()),
    }
}

fn schedule(c: &mut Checks) -> Result<()> {
    let s = OneCycleSchedule::default();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
    for (t, lr) in [(0.0, 1e-5), (60.0, 1e-3), (200.0, 1e-9), (30.0, 5.05e-4)] {
        let got = s.lr_at(t)?;
        c.check(close(got, lr), || format!("lr_at({t}) = {got:e}, expected {lr:e}"));
    }
    for (t, m) in [(0.0, 0.95), (60.0, 0.85), (200.0, 0.95), (30.0, 0.90)] {
        let got = s.mom_at(t)?;
        c.check(close(got, m), || format!("mom_at({t}) = {got}, expected {m}"));
    }
    let (lr_b, mom_b) = s.anneal_at_boundary();
    c.check(lr_b == s.lr_at(60.0)? && mom_b == s.mom_at(60.0)?, || {
        "warm-up and anneal formulas disagree at t = 60".into()
    });
    let grid: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.1).collect();
    let lrs: Vec<f64> = grid.iter().map(|&t| s.lr_at(t)).collect::<Result<_>>()?;
    let moms: Vec<f64> = grid.iter().map(|&t| s.mom_at(t)).collect::<Result<_>>()?;
    let argmax = lrs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| grid[i]);
    let argmin = moms.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| grid[i]);
    c.check(argmax == Some(60.0) && argmin == Some(60.0), || {
        format!("extrema at {argmax:?} / {argmin:?}, expected 60")
    });
    c.check(moms[..=600].windows(2).all(|w| w[1] < w[0]), || "momentum not strictly decreasing on [0, 60]".into());
    c.check(
        lrs.iter().all(|&l| (1e-9..=1e-3).contains(&l)) && moms.iter().all(|&m| (0.85..=0.95).contains(&m)),
        || "schedule leaves its range".into(),
    );
    c.check(s.lr_at(-1e-9).is_err() && s.mom_at(200.001).is_err(), || "out-of-range t accepted".into());
    Ok(())
}

fn layer_invariants(c: &mut Checks) -> Result<()> {
    for seed in [1u64, 2, 3] {
        let mut r = rng(seed);
        let up = PixelShuffleUpsampler::<f32>::new(8, 4, 2, true, &mut r)?;
        let x: Tensor<f32> = init::normal(&[2, 8, 5, 5], 1.0, &mut r)?;
        let y = up.forward_unblurred(&x)?;
        let d = y.data();
        let (hh, ww) = (10, 10);
        let constant = (0..2 * 4).all(|nc| {
            (0..5).all(|by| {
                (0..5).all(|bx| {
                    let at = |i: usize, j: usize| d[(nc * hh + 2 * by + i) * ww + 2 * bx + j].to_bits();
                    at(0, 0) == at(0, 1) && at(0, 0) == at(1, 0) && at(0, 0) == at(1, 1)
                })
            })
        });
        c.check(constant, || format!("ICNR output not 2x2 block-constant (seed {seed})"));

        let z: Tensor<f32> = init::normal(&[2, 12, 3, 4], 1.0, &mut r)?;
        let round = pixel_unshuffle(&pixel_shuffle(&z, 2)?, 2)?;
        let img: Tensor<f32> = init::normal(&[1, 3, 6, 8], 1.0, &mut r)?;
        let round2 = pixel_shuffle(&pixel_unshuffle(&img, 2)?, 2)?;
        c.check(bits(round.data()) == bits(z.data()) && bits(round2.data()) == bits(img.data()), || {
            format!("pixel shuffle round trip not bitwise (seed {seed})")
        });

        let attn = SelfAttention::<f32>::new(16, &mut r)?;
        let xa: Tensor<f32> = init::normal(&[2, 16, 4, 5], 1.0, &mut r)?;
        c.check(bits(attn.forward(&xa)?.data()) == bits(xa.data()), || {
            format!("attention with gamma 0 is not the identity (seed {seed})")
        });
        let map = attn.attention_map(&xa)?;
        let worst = map.data().chunks(20).map(|row| (row.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
        c.check(worst <= 1e-6, || format!("attention row sums off by {worst:e}"));

        let v = r.random_range(-3.0f32..3.0);
        let b = blur(&Tensor::<f32>::full(&[1, 3, 5, 7], v))?;
        c.check(b.data().iter().all(|&o| (o - v).abs() <= 1e-6 * v.abs().max(1.0)), || {
            format!("blur changes the constant {v}")
        });

        let phi: Tensor<f64> = init::normal(&[2, 16, 5, 7], 1.0, &mut r)?;
        let g = gram(&phi)?;
        let gd = g.data();
        let sym = (0..2).all(|n| (0..16).all(|i| (0..16).all(|j| gd[n * 256 + i * 16 + j] == gd[n * 256 + j * 16 + i])));
        c.check(sym, || format!("Gram matrix not exactly symmetric (seed {seed})"));
        let mut min_q = f64::INFINITY;
        for _ in 0..20 {
            let v: Vec<f64> = (0..16).map(|_| r.random_range(-1.0..1.0)).collect();
            for n in 0..2 {
                let q: f64 = (0..16).map(|i| (0..16).map(|j| v[i] * gd[n * 256 + i * 16 + j] * v[j]).sum::<f64>()).sum();
                min_q = min_q.min(q);
            }
        }
        c.check(min_q >= -1e-8, || format!("Gram quadratic form {min_q:e} < -1e-8"));
    }
    Ok(())
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn model_contract(c: &mut Checks) -> Result<()> {
    let _g = no_grad();
    let sizes = [32usize, 64, 96, 128];
    for depth in EncoderDepth::ALL {
        let model = build_unet::<f32>(&ModelConfig::new(depth, 0.125), depth.layers() as u64)?;
        let pairs: Vec<(usize, usize)> = if depth == EncoderDepth::D18 {
            sizes.iter().flat_map(|&h| sizes.iter().map(move |&w| (h, w))).collect()
        } else {
            sizes.iter().map(|&s| (s, s)).collect()
        };
        for (h, w) in pairs {
            let n = if h == 64 && w == 96 { 2 } else { 1 };
            let x: Tensor<f32> = init::uniform(&[n, 3, h, w], 0.0, 1.0, &mut rng((h * w) as u64))?;
            let (y, trace) = model.forward_traced(&x, Mode::Eval)?;
            c.check(y.shape() == [n, 31, h, w], || format!("{depth} {h}x{w}: output {:?}", y.shape()));
            let res: Vec<(usize, usize)> = trace.taps.iter().map(|s| (s[2], s[3])).collect();
            let want: Vec<(usize, usize)> = [2, 4, 8, 16].iter().map(|d| (h / d, w / d)).collect();
            c.check(res == want, || format!("{depth} {h}x{w}: taps at {res:?}, expected {want:?}"));
            c.check(trace.bottleneck[2..] == [h / 32, w / 32], || {
                format!("{depth} {h}x{w}: bottleneck {:?}", trace.bottleneck)
            });
        }
        let bad = model.forward(&Tensor::zeros(&[1, 3, 70, 70]), Mode::Eval);
        c.check(bad.is_err(), || format!("{depth}: 70x70 input accepted"));
    }
    c.note("depths 18/34/50 at width 1/8; sizes 32-128 (all 16 combinations at depth 18)");
    Ok(())
}

fn parameter_counts(c: &mut Checks) -> Result<()> {
    let mut counts = Vec::new();
    for depth in EncoderDepth::ALL {
        let model = build_unet::<f32>(&ModelConfig::new(depth, 1.0), 0)?;
        counts.push(model.count_params());
    }
    let [n18, n34, n50] = [counts[0], counts[1], counts[2]];
    let ratio = n50 as f64 / n18 as f64;
    c.note(format!(
        "params: depth18 {:.2}M, depth34 {:.2}M, depth50 {:.2}M, ratio 50/18 = {ratio:.2}",
        n18 as f64 / 1e6,
        n34 as f64 / 1e6,
        n50 as f64 / 1e6
    ));
    c.check(ratio >= 8.0, || format!("ratio {ratio:.2} < 8"));
    c.check(n18 < n34 && n34 < n50, || format!("counts not increasing: {counts:?}"));

    let with = build_unet::<f32>(&ModelConfig::new(EncoderDepth::D18, 0.25), 3)?;
    let without = build_unet::<f32>(&ModelConfig { self_attention: false, ..ModelConfig::new(EncoderDepth::D18, 0.25) }, 3)?;
    let attn = with.attention.as_ref().map(|a| a.count_params()).unwrap_or(0);
    c.check(with.count_params() - without.count_params() == attn && attn > 0, || {
        "attention flag changes the count by more than the attention parameters".into()
    });
    Ok(())
}

fn latency(c: &mut Checks, opts: &SelftestOptions) -> Result<()> {
    let mut medians = Vec::new();
    for depth in [EncoderDepth::D18, EncoderDepth::D50] {
        let model = build_unet::<f32>(&ModelConfig::new(depth, 1.0), 0)?;
        let rep = benchmark_latency(&model, opts.latency_size, 3, 10, opts.threads)?;
        c.check(rep.runs() >= 10 && rep.threads == opts.threads, || "report does not record the run settings".into());
        c.note(rep.summary());
        medians.push(rep.median);
    }
    let speedup = medians[1] / medians[0];
    c.note(format!("speedup depth18 vs depth50: {speedup:.2}x"));
    c.check(speedup >= 2.5, || format!("speedup {speedup:.2} < 2.5"));
    Ok(())
}

fn loss_identities(c: &mut Checks) -> Result<()> {
    let net = LossNetwork::<f64>::seeded(31, 7)?;
    let y = randn(&[2, 31, 16, 16], 5);
    let zero = total_loss(&y, &y, &net, &LossWeights::default())?.total.item()?;
    c.check(zero == 0.0, || format!("total_loss(y, y) = {zero:e}"));

    let pred = randn(&[2, 31, 16, 16], 6);
    let only = total_loss(&pred, &y, &net, &LossWeights::pixel_only())?.total.item()?;
    let pix = pixel_loss(&pred, &y)?.item()?;
    c.check(only.to_bits() == pix.to_bits(), || format!("gamma-only total {only} != pixel loss {pix}"));

    let full = total_loss(&pred, &y, &net, &LossWeights::default())?;
    c.check(full.total.item()? > 0.0 && full.feature.iter().chain(&full.style).all(|&v| v >= 0.0), || {
        "loss terms negative".into()
    });

    let z = T64::zeros(&[1, 2, 1, 1]);
    let offset = pixel_loss(&T64::ones(&[1, 31, 4, 4]), &T64::zeros(&[1, 31, 4, 4]))?.item()?;
    c.check((offset - 1.0).abs() <= 1e-6, || format!("pixel offset-1 case {offset}"));
    let d = pixel_loss(&T64::from_vec(vec![3.0, 4.0], &[1, 2, 1, 1])?, &z)?.item()?;
    c.check((d - 12.5).abs() <= 1e-6, || format!("pixel [3,4] case {d}"));
    let g = gram(&T64::from_vec(vec![1.0, 2.0], &[2, 1, 1])?)?;
    c.check(g.data() == [0.5, 1.0, 1.0, 2.0], || format!("gram hand case {:?}", g.data()));
    let f = feature_loss(&T64::from_vec(vec![1.0, -2.0], &[1, 2, 1, 1])?, &z)?.item()?;
    c.check(f == 1.5, || format!("feature hand case {f}"));
    let s = style_loss(&T64::from_vec(vec![1.0, 2.0], &[1, 2, 1, 1])?, &z)?.item()?;
    c.check(s == 1.125, || format!("style hand case {s}"));

    let w = net.parameters();
    let p = pred.requires_grad_(true);
    total_loss(&p, &y, &net, &LossWeights::default())?.total.backward()?;
    c.check(w.iter().all(|(_, t)| t.grad().is_none()) && p.grad().is_some(), || {
        "loss network weights received gradients".into()
    });
    Ok(())
}

/// Two strictly positive 32x32 pairs whose 31 bands are smooth functions of RGB.
pub fn synthetic_pairs(count: usize, size: usize, seed: u64) -> Result<Vec<Sample>> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let freq: Vec<(f32, f32, f32)> =
            (0..3).map(|_| (r.random_range(0.5..2.0), r.random_range(0.5..2.0), r.random_range(0.0..std::f32::consts::TAU))).collect();
        let n = size * size;
        let mut rgb = vec![0.0f32; 3 * n];
        for (ch, &(fy, fx, ph)) in freq.iter().enumerate() {
            for y in 0..size {
                for x in 0..size {
                    let (u, v) = (y as f32 / size as f32, x as f32 / size as f32);
                    rgb[ch * n + y * size + x] = 0.5 + 0.35 * (std::f32::consts::TAU * (fy * u + fx * v) + ph).sin();
                }
            }
        }
        let mut cube = vec![0.0f32; 31 * n];
        for band in 0..31 {
            let lambda = band as f32 / 30.0;
            let resp = [0.8, 0.5, 0.2].map(|centre: f32| (-((lambda - centre) / 0.18).powi(2)).exp());
            for p in 0..n {
                cube[band * n + p] = 0.05 + (0..3).map(|ch| resp[ch] * rgb[ch * n + p]).sum::<f32>() * 0.6;
            }
        }
        out.push(Sample::new(
            format!("synthetic{i}"),
            Raster::new(3, size, size, rgb)?,
            Raster::new(31, size, size, cube)?,
        )?);
    }
    Ok(out)
}

fn overfit_smoke(c: &mut Checks) -> Result<()> {
    let samples = synthetic_pairs(2, 32, 42)?;
    let stats = NormalizationStats::compute(samples.iter().map(|s| (&s.rgb, &s.cube)))?;
    let model = build_unet::<f32>(&ModelConfig::new(EncoderDepth::D18, 0.125), 42)?;
    let loss_net = LossNetwork::<f32>::seeded(31, 0)?;
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 2,
        crop: 0,
        shuffle: false,
        augment: false,
        loss: LossWeights::pixel_only(),
        seed: 42,
        ..TrainConfig::default()
    };
    let mut opt = AdamW::new(cfg.optimizer);
    let log = fit(&model, &samples, &[], &stats, &loss_net, &cfg, &mut opt, &mut ())?;
    let first = log.iterations.first().map(|r| r.pixel).unwrap_or(f64::NAN);
    let last = log.iterations.last().map(|r| r.pixel).unwrap_or(f64::NAN);
    let report = evaluate_dataset(&model, &samples, &stats, false)?;
    c.note(format!(
        "{} iterations: pixel loss {first:.4e} -> {last:.4e} ({:.2}%), training MRAE {:.4}",
        log.iterations.len(),
        100.0 * last / first,
        report.mrae
    ));
    c.check(log.iterations.len() == 200, || format!("{} iterations", log.iterations.len()));
    c.check(last < 0.1 * first, || format!("final pixel loss {last:e} not below 10% of {first:e}"));
    c.check(report.mrae < 0.1, || format!("training MRAE {} >= 0.1", report.mrae));
    Ok(())
}

fn mrae_suite(c: &mut Checks) -> Result<()> {
    let mut r = rng(9);
    let truth: Vec<f32> = (0..31 * 8 * 8).map(|_| r.random_range(0.5f32..1.0)).collect();
    let scaled: Vec<f32> = truth.iter().map(|&v| v * 1.1).collect();
    let m = mrae_slice(&scaled, &truth, MRAE_EPS)?;
    c.check((m - 0.1).abs() <= 1e-6, || format!("mrae(1.1 y, y) = {m}"));
    let hand = mrae_slice(&[1.0, 3.0], &[2.0, 2.0], 0.0)?;
    c.check(hand == 0.5, || format!("hand case {hand}"));
    c.check(mrae_slice(&truth, &truth, MRAE_EPS)? == 0.0, || "mrae(y, y) != 0".into());
    let (a, b) = (rmse_slice(&scaled, &truth)?, rmse_slice(&truth, &scaled)?);
    c.check(a == b, || "rmse not symmetric".into());
    let h = rmse_slice(&[3.0, 4.0], &[0.0, 0.0])?;
    c.check((h - 12.5f64.sqrt()).abs() < 1e-12, || format!("rmse hand case {h}"));
    Ok(())
}
