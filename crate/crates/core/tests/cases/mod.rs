//! Randomized check cases shared by the core test targets and the
//! acceptance suite. Each case panics with a description on failure.
#![allow(dead_code)]

use contact_sense::features::{build_mel_filterbank, mel_spectrogram, EmphasisConfig, MelSpectrogram, StftConfig, WindowFn};
use contact_sense::nn::{
    adaptive_avg_pool, adaptive_avg_pool_backward, relu, relu_backward, softmax_cross_entropy, BatchNorm2d, BnMode, Cnn, Conv2d, Linear,
    ModelSpec, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::{central_diff, max_rel_err, MelParams};

/// Max absolute per-cell deviation allowed between the library and the
/// naive log-mel reference.
pub const MEL_TOL: f64 = 1e-6;

const H: f64 = 1e-3;
const MAX_REL: f64 = 1e-4;

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The linear layer is exactly linear in every argument and the loss is
/// smooth at O(1) logits, so both are held to a much tighter bound.
const MAX_REL_TIGHT: f64 = 1e-6;

fn assert_within(what: &str, analytic: &[f64], numeric: &[f64], tol: f64) {
    let e = max_rel_err(analytic, numeric);
    assert!(e < tol, "{what}: max rel err {e:e}");
}

fn assert_close(what: &str, analytic: &[f64], numeric: &[f64]) {
    assert_within(what, analytic, numeric, MAX_REL);
}

pub fn conv_case(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel: usize = [1, 3][rng.gen_range(0..2)];
    let stride = rng.gen_range(1..=2);
    let padding = rng.gen_range(0..=1);
    let (n, c_in, c_out) = (rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=4));
    let min_hw = kernel.saturating_sub(2 * padding).max(1);
    let (h, w) = (rng.gen_range(min_hw..=7), rng.gen_range(min_hw..=7));
    let mut conv = Conv2d::<f64>::new(c_in, c_out, kernel, stride, padding, &mut rng);
    conv.bias = randn(&mut rng, c_out);
    let x = randn(&mut rng, n * c_in * h * w);
    let shape = [n, c_in, h, w];
    let (y, cache) = conv.forward(&Tensor::from_vec(&shape, x.clone()).unwrap()).unwrap();
    let r = randn(&mut rng, y.numel());
    let g = conv.backward(&Tensor::from_vec(y.shape(), r.clone()).unwrap(), &cache).unwrap();

    let num_x = central_diff(|xp| dot(conv.infer(&Tensor::from_vec(&shape, xp.to_vec()).unwrap()).unwrap().data(), &r), &x, H);
    assert_close(&format!("conv input (seed {seed})"), g.input.data(), &num_x);

    let xt = Tensor::from_vec(&shape, x).unwrap();
    let w0 = conv.weight.data().to_vec();
    let num_w = central_diff(
        |wp| {
            let mut c = conv.clone();
            c.weight.data_mut().copy_from_slice(wp);
            dot(c.infer(&xt).unwrap().data(), &r)
        },
        &w0,
        H,
    );
    assert_close(&format!("conv weight (seed {seed})"), g.weight.data(), &num_w);
    let num_b = central_diff(
        |bp| {
            let mut c = conv.clone();
            c.bias.copy_from_slice(bp);
            dot(c.infer(&xt).unwrap().data(), &r)
        },
        &conv.bias,
        H,
    );
    assert_close(&format!("conv bias (seed {seed})"), &g.bias, &num_b);
}

pub fn bn_case(seed: u64, mode: BnMode) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, c, h, w) = (rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(2..=4));
    let mut bn = BatchNorm2d::<f64>::new(c);
    bn.gamma = (0..c).map(|_| rng.gen_range(0.5..1.5)).collect();
    bn.beta = randn(&mut rng, c);
    bn.running_mean = randn(&mut rng, c);
    bn.running_var = (0..c).map(|_| rng.gen_range(0.5..2.0)).collect();
    let shape = [n, c, h, w];
    let x: Vec<f64> = (0..n * c * h * w).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let run = |bn: &BatchNorm2d<f64>, x: &[f64]| bn.clone().forward(&Tensor::from_vec(&shape, x.to_vec()).unwrap(), mode).unwrap().0;
    let y = run(&bn, &x);
    let r = randn(&mut rng, y.numel());
    let (_, cache) = bn.clone().forward(&Tensor::from_vec(&shape, x.clone()).unwrap(), mode).unwrap();
    let g = bn.backward(&Tensor::from_vec(&shape, r.clone()).unwrap(), &cache).unwrap();

    let num_x = central_diff(|xp| dot(run(&bn, xp).data(), &r), &x, H);
    assert_close(&format!("bn {mode:?} input (seed {seed})"), g.input.data(), &num_x);
    let num_gamma = central_diff(
        |gp| {
            let mut b = bn.clone();
            b.gamma.copy_from_slice(gp);
            dot(run(&b, &x).data(), &r)
        },
        &bn.gamma,
        H,
    );
    assert_close(&format!("bn {mode:?} gamma (seed {seed})"), &g.gamma, &num_gamma);
    let num_beta = central_diff(
        |bp| {
            let mut b = bn.clone();
            b.beta.copy_from_slice(bp);
            dot(run(&b, &x).data(), &r)
        },
        &bn.beta,
        H,
    );
    assert_close(&format!("bn {mode:?} beta (seed {seed})"), &g.beta, &num_beta);
}

pub fn linear_case(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, fin, fout) = (rng.gen_range(1..=4), rng.gen_range(1..=8), rng.gen_range(1..=6));
    let mut lin = Linear::<f64>::new(fin, fout, &mut rng);
    lin.bias = randn(&mut rng, fout);
    let x = randn(&mut rng, n * fin);
    let xt = Tensor::from_vec(&[n, fin], x.clone()).unwrap();
    let y = lin.forward(&xt).unwrap();
    let r = randn(&mut rng, y.numel());
    let g = lin.backward(&Tensor::from_vec(y.shape(), r.clone()).unwrap(), &xt).unwrap();
    let num_x = central_diff(|xp| dot(lin.forward(&Tensor::from_vec(&[n, fin], xp.to_vec()).unwrap()).unwrap().data(), &r), &x, H);
    assert_within(&format!("linear input (seed {seed})"), g.input.data(), &num_x, MAX_REL_TIGHT);
    let num_w = central_diff(
        |wp| {
            let mut l = lin.clone();
            l.weight.data_mut().copy_from_slice(wp);
            dot(l.forward(&xt).unwrap().data(), &r)
        },
        lin.weight.data(),
        H,
    );
    assert_within(&format!("linear weight (seed {seed})"), g.weight.data(), &num_w, MAX_REL_TIGHT);
    let num_b = central_diff(
        |bp| {
            let mut l = lin.clone();
            l.bias.copy_from_slice(bp);
            dot(l.forward(&xt).unwrap().data(), &r)
        },
        &lin.bias,
        H,
    );
    assert_within(&format!("linear bias (seed {seed})"), &g.bias, &num_b, MAX_REL_TIGHT);
}

pub fn relu_case(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=4)];
    let n: usize = shape.iter().product();
    // Keep clear of the kink so the finite difference is exact.
    let x: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { rng.gen_range(0.01..1.0) } else { rng.gen_range(-1.0..-0.01) }).collect();
    let xt = Tensor::from_vec(&shape, x.clone()).unwrap();
    let r = randn(&mut rng, n);
    let g = relu_backward(&Tensor::from_vec(&shape, r.clone()).unwrap(), &xt).unwrap();
    let num = central_diff(|xp| dot(relu(&Tensor::from_vec(&shape, xp.to_vec()).unwrap()).data(), &r), &x, H);
    assert_close(&format!("relu (seed {seed})"), g.data(), &num);
}

pub fn pool_case(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=5), rng.gen_range(1..=5)];
    let n: usize = shape.iter().product();
    let x = randn(&mut rng, n);
    let r = randn(&mut rng, shape[0] * shape[1]);
    let g = adaptive_avg_pool_backward(&Tensor::from_vec(&[shape[0], shape[1], 1, 1], r.clone()).unwrap(), &shape).unwrap();
    let num = central_diff(|xp| dot(adaptive_avg_pool(&Tensor::from_vec(&shape, xp.to_vec()).unwrap()).unwrap().data(), &r), &x, H);
    assert_close(&format!("pool (seed {seed})"), g.data(), &num);
}

pub fn loss_case(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, k) = (rng.gen_range(1..=5), rng.gen_range(2..=10));
    let logits: Vec<f64> = (0..n * k).map(|_| rng.gen_range(-4.0..4.0)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let (_, g) = softmax_cross_entropy(&Tensor::from_vec(&[n, k], logits.clone()).unwrap(), &labels).unwrap();
    let num = central_diff(|lp| softmax_cross_entropy(&Tensor::from_vec(&[n, k], lp.to_vec()).unwrap(), &labels).unwrap().0, &logits, H);
    assert_within(&format!("cross-entropy (seed {seed})"), g.data(), &num, MAX_REL_TIGHT);
}

/// Step for the whole-network check. Perturbing a first-layer weight moves
/// every activation downstream, so a step as large as `H` regularly pushes a
/// pre-activation across a ReLU kink; a smaller step makes that rare and
/// [`kink_free_slope`] catches the rest.
const H_MODEL: f64 = 1e-5;

/// Central difference of `f` at 0, or `None` when the forward and backward
/// one-sided slopes disagree by more than smooth curvature allows, which
/// means the step crossed a kink.
fn kink_free_slope(mut f: impl FnMut(f64) -> f64, h: f64) -> Option<f64> {
    let (up, mid, down) = (f(h), f(0.0), f(-h));
    let (fwd, bwd) = ((up - mid) / h, (mid - down) / h);
    let scale = fwd.abs().max(bwd.abs()).max(1e-3);
    ((fwd - bwd).abs() <= 1e-3 * scale).then_some((up - down) / (2.0 * h))
}

/// End-to-end through the whole network in training mode, on a random
/// subset of coordinates of the input and of every parameter group.
/// Returns how many probed coordinates were skipped as kink crossings.
pub fn model_case(seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ModelSpec { in_channels: 1, widths: vec![3, 4, 5], kernel: 3, stride: 2, padding: 1, n_classes: rng.gen_range(2..=4) };
    let mut model = Cnn::<f64>::new(spec.clone(), seed).unwrap();
    let (n, h, w) = (rng.gen_range(2..=3), rng.gen_range(6..=12), rng.gen_range(6..=12));
    let shape = [n, 1, h, w];
    let x: Vec<f64> = (0..n * h * w).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..spec.n_classes)).collect();
    let loss_of = |m: &Cnn<f64>, x: &[f64]| {
        let (logits, _) = m.clone().forward_train(&Tensor::from_vec(&shape, x.to_vec()).unwrap()).unwrap();
        softmax_cross_entropy(&logits, &labels).unwrap().0
    };
    let (logits, cache) = model.forward_train(&Tensor::from_vec(&shape, x.clone()).unwrap()).unwrap();
    let (_, grad_logits) = softmax_cross_entropy(&logits, &labels).unwrap();
    let grads = model.backward(&cache, &grad_logits).unwrap();

    let (mut probed, mut skipped) = (0, 0);
    let mut check = |what: String, analytic: &[f64], numeric: Vec<Option<f64>>| {
        let (mut a, mut nu) = (Vec::new(), Vec::new());
        for (&g, v) in analytic.iter().zip(numeric) {
            probed += 1;
            match v {
                Some(v) => {
                    a.push(g);
                    nu.push(v);
                }
                None => skipped += 1,
            }
        }
        if !a.is_empty() {
            assert_close(&what, &a, &nu);
        }
    };

    let xi: Vec<usize> = (0..24).map(|_| rng.gen_range(0..x.len())).collect();
    let num_x = xi
        .iter()
        .map(|&i| {
            kink_free_slope(
                |d| {
                    let mut xp = x.clone();
                    xp[i] += d;
                    loss_of(&model, &xp)
                },
                H_MODEL,
            )
        })
        .collect();
    let ana_x: Vec<f64> = xi.iter().map(|&i| grads.input.data()[i]).collect();
    check(format!("model input (seed {seed})"), &ana_x, num_x);

    let lens = model.trainable_lens();
    for (gi, &len) in lens.iter().enumerate() {
        let picks: Vec<usize> = (0..len.min(6)).map(|_| rng.gen_range(0..len)).collect();
        let numeric: Vec<Option<f64>> = picks
            .iter()
            .map(|&j| {
                kink_free_slope(
                    |d| {
                        let mut m = model.clone();
                        m.trainable_params_mut()[gi][j] += d;
                        loss_of(&m, &x)
                    },
                    H_MODEL,
                )
            })
            .collect();
        let analytic: Vec<f64> = picks.iter().map(|&j| grads.groups[gi][j]).collect();
        // A conv bias feeding batch norm has an exactly zero gradient; the
        // finite difference of it is pure round-off of size ~1e-16 / h.
        if gi % 4 == 1 && gi < 4 * spec.widths.len() {
            for (a, v) in analytic.iter().zip(&numeric) {
                assert!(a.abs() < 1e-12, "conv bias before batch norm has gradient {a:e}");
                if let Some(v) = v {
                    assert!(v.abs() < 1e-8, "conv bias finite difference {v:e}");
                }
            }
            continue;
        }
        check(format!("model group {gi} (seed {seed})"), &analytic, numeric);
    }
    (probed, skipped)
}

pub fn random_mel_case(rng: &mut ChaCha8Rng) -> (Vec<f32>, MelParams) {
    loop {
        let fs = [8000u32, 16_000, 22_050, 44_100, 48_000][rng.gen_range(0..5)];
        let n_fft = [64usize, 128, 256, 512][rng.gen_range(0..4)];
        let hop = rng.gen_range(n_fft / 4..=n_fft);
        let nyquist = f64::from(fs) / 2.0;
        let f_min = rng.gen_range(0.0..200.0);
        let f_max = rng.gen_range(nyquist / 2.0..=nyquist);
        let n_mels = rng.gen_range(1..=(n_fft / 8).max(2));
        let emphasis = rng.gen_bool(0.5).then(|| (rng.gen_range(0.1..0.6), rng.gen_range(1.0..3.0)));
        let stft = StftConfig { n_fft, hop_length: hop, window_fn: WindowFn::Hann };
        if build_mel_filterbank(fs, &stft, n_mels, f_min, f_max).is_err() {
            continue;
        }
        let len = rng.gen_range(n_fft..n_fft * 8);
        let kind = rng.gen_range(0..4);
        let samples: Vec<f32> = match kind {
            0 => vec![0.0; len],
            1 => {
                let f = rng.gen_range(20.0..nyquist);
                (0..len).map(|i| (0.7 * (2.0 * std::f64::consts::PI * f * i as f64 / f64::from(fs)).sin()) as f32).collect()
            }
            _ => (0..len).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
        };
        return (samples, MelParams { fs, n_fft, hop, n_mels, f_min, f_max, emphasis, eps: 1e-10 });
    }
}

pub fn library_log_mel(samples: &[f32], p: &MelParams) -> MelSpectrogram {
    let stft = StftConfig { n_fft: p.n_fft, hop_length: p.hop, window_fn: WindowFn::Hann };
    let bank = build_mel_filterbank(p.fs, &stft, p.n_mels, p.f_min, p.f_max).unwrap();
    let emphasis = match p.emphasis {
        Some((nyquist_fraction, gain)) => EmphasisConfig { nyquist_fraction, gain, enabled: true },
        None => EmphasisConfig::OFF,
    };
    mel_spectrogram(samples, p.fs, &stft, &bank, &emphasis, p.eps).unwrap()
}

/// One random clip through both log-mel paths; returns the max deviation.
pub fn mel_case(rng: &mut ChaCha8Rng) -> f64 {
    let (samples, p) = random_mel_case(rng);
    let got = library_log_mel(&samples, &p);
    let (n_frames, want) = crate::common::naive_log_mel(&samples, &p);
    assert_eq!((got.n_mels, got.n_frames), (p.n_mels, n_frames));
    got.data.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Every layer and loss case run by the gradient suite, with its seed range.
pub fn layer_suite() -> Vec<(&'static str, fn(u64), std::ops::Range<u64>)> {
    fn bn_train(s: u64) {
        bn_case(s, BnMode::Train)
    }
    fn bn_eval(s: u64) {
        bn_case(s, BnMode::Eval)
    }
    vec![
        ("conv", conv_case as fn(u64), 0..30),
        ("batchnorm/train", bn_train, 100..120),
        ("batchnorm/eval", bn_eval, 200..210),
        ("linear", linear_case, 300..315),
        ("relu", relu_case, 400..410),
        ("pool", pool_case, 500..505),
        ("cross-entropy", loss_case, 600..615),
    ]
}

