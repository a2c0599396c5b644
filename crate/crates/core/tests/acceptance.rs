//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use loopanim::alss::{AlssConfig, AlssSampler};
use loopanim::conditioning::{assemble_condition, toy_decode, training_conditions, MaskPair};
use loopanim::harness::{
    gen_dataset, generate_frames, load_manifest, Background, Color, DatasetSpec, GenerateOptions, SamplerSetup, Shape,
    SyntheticSpec, Trajectory,
};
use loopanim::metrics::{
    frame_consistency, loop_c, motion_score, mse_f0, ssim, BlockMeanEmbedder, Embedder, PixelEmbedder,
};
use loopanim::model::{
    Checkpoint, ContextSource, EmbeddingProviders, NetConfig, ParamGroup, RoutingConfig, UNetLite, TEMPORAL_SLOTS,
};
use loopanim::numerics::{grad_check, Tensor};
use loopanim::schedule::NoiseSchedule;
use loopanim::trainstage::{
    checkpoint_path, draw_sample, iteration_rng, run_stage, sample_loss, smoothed_endpoints, RunOutput, StageConfig,
    TrainState, TrainingVideo,
};
use loopanim::{Error, Stage};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Runs `check`, prints its verdict outside the harness capture, then fails on `FAIL`.
fn criterion(n: u32, name: &str, check: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let outcome = match catch_unwind(AssertUnwindSafe(check)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    };
    let secs = start.elapsed().as_secs_f64();
    let (verdict, detail) = match &outcome {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    let line = format!("acceptance {n:>2} {name}: {verdict} ({detail}; {secs:.1}s)\n");
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    if let Err(d) = outcome {
        panic!("criterion {n} failed: {d}");
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn synthetic(length: usize, size: usize, seed: u64, trajectory: Trajectory) -> SyntheticSpec {
    SyntheticSpec {
        width: size,
        height: size,
        length,
        shape: Shape::Disk,
        radius: size as f64 / 8.0,
        color: Color::Red,
        trajectory,
        speed: 1.5,
        background: Background::Gradient,
        seed,
    }
}

fn training_set(n: usize, length: usize, size: usize, ctx_dim: usize) -> Vec<TrainingVideo> {
    let p = EmbeddingProviders::toy(ctx_dim);
    (0..n)
        .map(|i| {
            let spec = synthetic(length, size, i as u64, [Trajectory::Circular, Trajectory::Linear][i % 2]);
            let r = spec.render().unwrap();
            TrainingVideo::from_frames(format!("v{i}"), &r.frame_tensors(), &r.mask_tensors(), &spec.caption(), &p)
                .unwrap()
        })
        .collect()
}

fn tiny_cfg(stage: Stage, channels: usize) -> StageConfig {
    let mut c = StageConfig::for_stage(stage);
    c.net = NetConfig {
        channels,
        ctx_dim: channels,
    };
    c.lr = 1e-3;
    c
}

#[test]
fn c01_alss_correctness() {
    criterion(1, "loop sampling correctness", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut violations = 0usize;
        for (f, len) in [(8usize, 15usize), (11, 21), (18, 35)] {
            let s = 6;
            let sampler = AlssSampler::new(AlssConfig::new(s, f).unwrap()).unwrap();
            for _ in 0..10_000 {
                let q = sampler.sample(&mut rng).indices;
                let fwd_ok = (0..f - 1).all(|i| q[i + 1] == q[i] + s);
                let rev: Vec<usize> = (f - 1..2 * f - 2).map(|i| q[i].wrapping_sub(q[i + 1])).collect();
                let rev_ok = rev.iter().all(|d| [2, 4, 6, 8].contains(d)) && rev.iter().sum::<usize>() == s * (f - 1);
                let ok = q.len() == len && q[0] == 0 && q[len - 1] == 0 && q[f - 1] == s * (f - 1) && fwd_ok && rev_ok;
                violations += (!ok) as usize;
            }
        }
        let secs = start.elapsed().as_secs_f64();
        ensure(violations == 0, || format!("{violations} violations"))?;
        ensure(secs < 5.0, || format!("took {secs:.2}s"))?;
        Ok("3×10⁴ sequences, 0 violations".into())
    });
}

#[test]
fn c02_alss_uniformity() {
    criterion(2, "loop sampling uniformity", || {
        let start = Instant::now();
        let (f, s) = (4usize, 6usize);
        // brute-force enumeration of ordered triples from {2,4,6,8} summing to 18
        let mut cells: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for a in [2, 4, 6, 8] {
            for b in [2, 4, 6, 8] {
                for c in [2, 4, 6, 8] {
                    if a + b + c == s * (f - 1) {
                        cells.insert(vec![a, b, c], 0);
                    }
                }
            }
        }
        let sampler = AlssSampler::new(AlssConfig::new(s, f).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000usize;
        for _ in 0..n {
            let strides = sampler.sample(&mut rng).reverse_strides();
            *cells.get_mut(&strides).ok_or_else(|| format!("unexpected strides {strides:?}"))? += 1;
        }
        let k = cells.len();
        let expected = n as f64 / k as f64;
        let chi2: f64 = cells.values().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new((k - 1) as f64).unwrap().cdf(chi2);
        let secs = start.elapsed().as_secs_f64();
        ensure(p > 0.01, || format!("chi²={chi2:.2}, p={p:.4}"))?;
        ensure(secs < 10.0, || format!("took {secs:.2}s"))?;
        Ok(format!("{k} compositions, chi²={chi2:.2}, p={p:.3}"))
    });
}

#[test]
fn c03_condition_shapes() {
    criterion(3, "condition shapes and loop closure", || {
        let data = training_set(2, 103, 32, 4);
        let sched = NoiseSchedule::default();
        let mut runner = TestRunner::new(PropConfig {
            cases: 64,
            ..PropConfig::default()
        });
        runner
            .run(&(0usize..3, any::<u64>(), 0u64..1000), |(si, seed, pos)| {
                let stage = Stage::ALL[si];
                let cfg = tiny_cfg(stage, 4);
                let sampler = AlssSampler::new(cfg.alss().unwrap()).unwrap();
                let mut rng = iteration_rng(seed, pos);
                let smp = draw_sample(&data, &cfg, &sampler, &sched, pos, &mut rng).unwrap();
                let b = &smp.bundle;
                let n = 2 * cfg.forward_frames - 1;
                prop_assert_eq!(b.z_c.shape()[1], 9);
                prop_assert_eq!(b.z_c.shape()[0], n);
                prop_assert_eq!(b.z_sd.outer(0), b.z_sd.outer(n - 1));
                prop_assert_eq!(b.z_m.outer(0), b.z_m.outer(n - 1));
                let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(&b.z_sd.outer(0)), bits(&b.z_sd.outer(n - 1)));
                Ok(())
            })
            .map_err(|e| e.to_string())?;
        let frames: Vec<_> = Stage::ALL.iter().map(|&s| 2 * s.default_forward_frames() - 1).collect();
        ensure(frames == vec![15, 21, 35], || format!("{frames:?}"))?;
        Ok("64 property cases over stages 1-3, extents 15/21/35".into())
    });
}

#[test]
fn c04_drop_statistics() {
    criterion(4, "turning-frame drop statistics", || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = 8;
        let first = Tensor::randn(&[4, 2, 2], 1.0, &mut rng);
        let turning = Tensor::randn(&[4, 2, 2], 1.0, &mut rng);
        let m = Tensor::new(vec![1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let masks = MaskPair::new(m.clone(), Some(m)).unwrap();
        let n = 100_000;
        let mut drops = 0usize;
        for _ in 0..n {
            let c = training_conditions(&first, &turning, &masks, f, Stage::Two, 0.5, &mut rng).unwrap();
            let slot = c.z_sd.outer(f - 1);
            if c.dropped {
                drops += 1;
                ensure(slot.data().iter().all(|v| v.to_bits() == 0), || "dropped latent not zero".into())?;
                ensure(c.z_m.outer(f - 1).data().iter().all(|&v| v == 1.0), || "dropped mask not ones".into())?;
            } else {
                ensure(slot == turning, || "kept latent altered".into())?;
            }
        }
        let freq = drops as f64 / n as f64;
        ensure((0.49..=0.51).contains(&freq), || format!("frequency {freq}"))?;
        Ok(format!("frequency {freq:.4}, dropped slots exactly zero"))
    });
}

#[test]
fn c05_routing_isolation() {
    criterion(5, "routing isolation", || {
        let cfg = NetConfig {
            channels: 4,
            ctx_dim: 4,
        };
        let net = UNetLite::new(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let z_t = Tensor::randn(&[3, 4, 4, 4], 1.0, &mut rng);
        let z_sd = Tensor::randn(&[3, 4, 4, 4], 1.0, &mut rng);
        let bundle = assemble_condition(&z_t, &z_sd, &Tensor::ones(&[3, 1, 4, 4])).unwrap();
        let eps = Tensor::randn(&[3, 4, 4, 4], 1.0, &mut rng);
        let p = EmbeddingProviders::toy(4);
        let image = Tensor::randn(&[3, 32, 32], 0.3, &mut rng);
        let ctx = p.context(&image, "a red disk moving in a circle").unwrap();
        let other = p.context(&image.map(|v| 1.0 - v), "a blue square moving in a straight line").unwrap();
        let all: BTreeSet<_> = ParamGroup::ALL.into_iter().collect();

        let loss_with = |routing: &RoutingConfig, c: &loopanim::model::Context| {
            let pass = net.forward_pass(&bundle.z_c, 300, c, routing, &BTreeSet::new(), false).unwrap();
            let mut g = pass.graph;
            let l = g.mse(pass.output, &eps).unwrap();
            g.value(l).data()[0]
        };
        let mut checked = 0;
        for preset in 0..RoutingConfig::PRESET_COUNT {
            let full = RoutingConfig::preset(preset).unwrap();
            // the preset itself, plus each stage of it routed alone
            let probes = [
                full,
                RoutingConfig { middle: ContextSource::None, up: ContextSource::None, ..full },
                RoutingConfig { down: ContextSource::None, up: ContextSource::None, ..full },
                RoutingConfig { down: ContextSource::None, middle: ContextSource::None, ..full },
            ];
            for routing in probes {
                for unused in [ContextSource::Image, ContextSource::Text] {
                    if routing.uses(unused) {
                        continue;
                    }
                    let mut swapped = ctx.clone();
                    match unused {
                        ContextSource::Image => swapped.image = other.image.clone(),
                        _ => swapped.text = other.text.clone(),
                    }
                    let a = net.forward(&bundle, 300, &ctx, &routing).unwrap();
                    let b = net.forward(&bundle, 300, &swapped, &routing).unwrap();
                    ensure(a == b, || format!("preset {preset} {routing:?}: output moved with {unused}"))?;

                    let pass = net.forward_pass(&bundle.z_c, 300, &ctx, &routing, &all, true).unwrap();
                    let mut g = pass.graph;
                    let l = g.mse(pass.output, &eps).unwrap();
                    let grads = g.backward(l).unwrap();
                    let (var, value) = match unused {
                        ContextSource::Image => (pass.image_ctx.unwrap(), ctx.image.clone().unwrap()),
                        _ => (pass.text_ctx.unwrap(), ctx.text.clone().unwrap()),
                    };
                    let analytic = grads.get_or_zeros(var, &value);
                    ensure(analytic.data().iter().all(|&v| v == 0.0), || {
                        format!("preset {preset}: nonzero analytic gradient for {unused}")
                    })?;
                    let report = grad_check(
                        |x| {
                            let mut c = ctx.clone();
                            match unused {
                                ContextSource::Image => c.image = Some(x.clone()),
                                _ => c.text = Some(x.clone()),
                            }
                            loss_with(&routing, &c)
                        },
                        &value,
                        &analytic,
                        1e-5,
                    );
                    ensure(report.max_rel_error <= 1e-8, || format!("preset {preset}: {report:?}"))?;
                    checked += 1;
                }
            }
        }
        Ok(format!("{checked} preset/stage/modality combinations isolated"))
    });
}

#[test]
fn c06_temporal_capacity() {
    criterion(6, "temporal capacity", || {
        let net = UNetLite::new(
            NetConfig {
                channels: 4,
                ctx_dim: 4,
            },
            &mut ChaCha8Rng::seed_from_u64(6),
        )
        .unwrap();
        let p = EmbeddingProviders::toy(4);
        let ctx = p.context(&Tensor::full(&[3, 32, 32], 0.5), "a disk").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let r = RoutingConfig::default();
        for t in 1..=TEMPORAL_SLOTS + 1 {
            let z = Tensor::randn(&[t, 4, 4, 4], 1.0, &mut rng);
            let b = assemble_condition(&z, &z, &Tensor::ones(&[t, 1, 4, 4])).unwrap();
            let out = net.forward(&b, 10, &ctx, &r);
            match (t <= 36, out) {
                (true, Ok(o)) => ensure(o.shape() == z.shape(), || format!("T={t}: shape {:?}", o.shape()))?,
                (false, Err(Error::Capacity { frames: 37, capacity: 36 })) => {}
                (_, other) => return Err(format!("T={t}: unexpected {other:?}")),
            }
        }
        let setup = SamplerSetup {
            stage: Stage::Three,
            forward_frames: StageConfig::for_stage(Stage::Three).forward_frames,
            routing: r,
        };
        let frames = generate_frames(
            &net,
            &setup,
            &Tensor::full(&[3, 32, 32], 0.4),
            "a red disk",
            None,
            &NoiseSchedule::default(),
            &GenerateOptions {
                steps: 2,
                ..Default::default()
            },
        )
        .map_err(|e| e.to_string())?;
        ensure(frames.len() == 35, || format!("{} frames", frames.len()))?;
        Ok("T=1..36 accepted, 37 rejected, stage-3 generation emits 35 frames".into())
    });
}

#[test]
fn c07_parameter_accounting() {
    criterion(7, "parameter accounting", || {
        let net = UNetLite::new(NetConfig::default(), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let r = net.param_report();
        let (q, k, v) = (r.count(ParamGroup::TemmQ), r.count(ParamGroup::TemmK), r.count(ParamGroup::TemmV));
        ensure(q == k && k == v, || format!("Q={q} K={k} V={v}"))?;
        let s3 = r.trainable_total(&StageConfig::for_stage(Stage::Three).trainable());
        let expect = r.count(ParamGroup::ConvIn) + q + v;
        ensure(s3 == expect, || format!("stage 3 trainable {s3} != {expect}"))?;
        // full-scale millions: conv_in 0.10 plus Q and V at 151.55 each
        ensure(10_u64 + 2 * 15_155 == 30_320, || "hundredths identity".into())?;
        ensure((0.10 + 2.0 * 151.55 - 303.2_f64).abs() < 1e-9, || "decimal identity".into())?;
        Ok(format!("Q=K=V={q}, stage-3 trainable {s3}"))
    });
}

#[test]
fn c08_gradient_validity() {
    criterion(8, "end-to-end gradient check", || {
        let start = Instant::now();
        let mut cfg = tiny_cfg(Stage::One, 8);
        cfg.forward_frames = 2;
        let data = training_set(1, 16, 64, 8);
        let sched = NoiseSchedule::default();
        let sampler = AlssSampler::new(cfg.alss().unwrap()).unwrap();
        let mut rng = iteration_rng(0, 0);
        let sample = draw_sample(&data, &cfg, &sampler, &sched, 0, &mut rng).unwrap();
        ensure(sample.bundle.latent_hw() == (8, 8) && sample.bundle.frames() == 3, || "instance shape".into())?;
        let net = TrainState::fresh(&cfg).unwrap().net;
        let trainable = cfg.trainable();
        let (_, grads) = sample_loss(&net, &sample, &cfg, &trainable).unwrap();
        let mut worst = (0.0f64, String::new());
        let mut scalars = 0;
        for (i, spec) in net.specs().iter().enumerate() {
            if !trainable.contains(&spec.group) {
                continue;
            }
            let analytic = grads[i].clone().unwrap_or_else(|| Tensor::zeros(&spec.shape));
            let report = grad_check(
                |x| {
                    let mut n = net.clone();
                    n.values_mut()[i] = x.clone();
                    sample_loss(&n, &sample, &cfg, &BTreeSet::new()).unwrap().0
                },
                &net.values()[i],
                &analytic,
                1e-5,
            );
            scalars += analytic.len();
            if report.max_rel_error > worst.0 {
                worst = (report.max_rel_error, format!("{}[{}]", spec.name, report.worst_index));
            }
        }
        let secs = start.elapsed().as_secs_f64();
        ensure(worst.0 <= 1e-4, || format!("worst {:.2e} at {}", worst.0, worst.1))?;
        ensure(secs < 120.0, || format!("took {secs:.1}s"))?;
        Ok(format!("{scalars} trainable scalars, worst rel error {:.2e} at {}", worst.0, worst.1))
    });
}

#[test]
fn c09_frozen_parameters() {
    criterion(9, "frozen parameters in stage 3", || {
        let data = training_set(2, 103, 32, 4);
        let sched = NoiseSchedule::default();
        let mut state = TrainState::fresh(&tiny_cfg(Stage::One, 4)).unwrap();
        for stage in [Stage::Two, Stage::Three] {
            let prev = tiny_cfg(stage.previous().unwrap(), 4);
            state.iteration = prev.iterations;
            state = TrainState::from_checkpoint(&tiny_cfg(stage, 4), state.to_checkpoint(&prev)).unwrap();
        }
        let mut cfg = tiny_cfg(Stage::Three, 4);
        cfg.iterations = 100;
        let snap = |s: &TrainState, g| -> Vec<Vec<u64>> {
            s.net.group_values(g).iter().map(|t| t.data().iter().map(|v| v.to_bits()).collect()).collect()
        };
        let frozen = [ParamGroup::TemmK, ParamGroup::CrossAttn];
        let before: Vec<_> = frozen.iter().map(|&g| snap(&state, g)).collect();
        let q_before = snap(&state, ParamGroup::TemmQ);
        run_stage(&cfg, &mut state, &data, &sched, &RunOutput::default()).unwrap();
        for (g, b) in frozen.iter().zip(before) {
            ensure(snap(&state, *g) == b, || format!("{g} changed"))?;
        }
        ensure(snap(&state, ParamGroup::TemmQ) != q_before, || "TEMM.Q did not train".into())?;
        Ok("TEMM.K and CAB bit-identical after 100 steps, TEMM.Q updated".into())
    });
}

#[test]
fn c10_desk_scale_trainability() {
    criterion(10, "desk-scale trainability", || {
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec::from_toml("count = 8\nlength = 43\nwidth = 64\nheight = 64\nseed = 10\n").unwrap();
        let manifest = gen_dataset(&spec, dir.path()).unwrap();
        let cfg = StageConfig::for_stage(Stage::One);
        let providers = EmbeddingProviders::toy(cfg.net.ctx_dim);
        let data: Vec<_> = load_manifest(&manifest)
            .unwrap()
            .iter()
            .map(|v| v.to_training(&providers).unwrap())
            .collect();
        let sched = NoiseSchedule::default();
        let run = || {
            let mut state = TrainState::fresh(&cfg).unwrap();
            run_stage(&cfg, &mut state, &data, &sched, &RunOutput::default()).unwrap()
        };
        let (a, b) = std::thread::scope(|s| {
            let h = s.spawn(run);
            let b = run();
            (h.join().unwrap(), b)
        });
        ensure(a.len() == 2000, || format!("{} iterations", a.len()))?;
        let bits = |log: &[loopanim::trainstage::LossRecord]| log.iter().map(|r| r.loss.to_bits()).collect::<Vec<_>>();
        ensure(bits(&a) == bits(&b), || "loss logs differ between runs".into())?;
        let (first, last) = smoothed_endpoints(&a, 100).unwrap();
        let ratio = last / first;
        let secs = start.elapsed().as_secs_f64();
        ensure(ratio <= 0.5, || format!("smoothed loss {first:.4} -> {last:.4} (ratio {ratio:.3})"))?;
        ensure(secs < 1800.0, || format!("took {secs:.0}s"))?;
        Ok(format!("smoothed loss {first:.4} -> {last:.4} (ratio {ratio:.3}), two runs bit-identical"))
    });
}

/// Direct 2-D Gaussian-window SSIM.
fn naive_ssim(a: &Tensor, b: &Tensor) -> f64 {
    let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let mut wts = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (i, row) in wts.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (-((i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2)) / 4.5).exp();
            total += *v;
        }
    }
    let (mut sum, mut count) = (0.0, 0.0);
    for ch in 0..c {
        for y in 0..=h - 11 {
            for x in 0..=w - 11 {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, row) in wts.iter().enumerate() {
                    for (j, wt) in row.iter().enumerate() {
                        let wt = wt / total;
                        let (va, vb) = (a.at(&[ch, y + i, x + j]), b.at(&[ch, y + i, x + j]));
                        ma += wt * va;
                        mb += wt * vb;
                        saa += wt * va * va;
                        sbb += wt * vb * vb;
                        sab += wt * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                sum += ((2.0 * ma * mb + 1e-4) * (2.0 * cov + 9e-4)) / ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
                count += 1.0;
            }
        }
    }
    sum / count
}

fn naive_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn c11_metric_sanity() {
    criterion(11, "metric sanity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let video: Vec<Tensor> = synthetic(9, 32, 3, Trajectory::Linear).render().unwrap().frame_tensors();
        let x = &video[0];
        ensure(ssim(x, x).unwrap() == 1.0, || "ssim(x,x) != 1".into())?;
        ensure(mse_f0(&video, x).unwrap() == 0.0, || "mse_f0 identity != 0".into())?;
        ensure(motion_score(&vec![x.clone(); 5]).unwrap() == 0.0, || "static motion != 0".into())?;

        // loop closure of decoded training clips
        let cfg = tiny_cfg(Stage::Two, 4);
        let data = training_set(2, 61, 32, 4);
        let sampler = AlssSampler::new(cfg.alss().unwrap()).unwrap();
        let sched = NoiseSchedule::default();
        for pos in 0..20 {
            let mut r = iteration_rng(11, pos);
            let smp = draw_sample(&data, &cfg, &sampler, &sched, pos, &mut r).unwrap();
            let frames: Vec<_> = (0..smp.z0.shape()[0]).map(|i| toy_decode(&smp.z0.outer(i)).unwrap()).collect();
            for e in [&BlockMeanEmbedder::default() as &dyn Embedder, &PixelEmbedder] {
                let lc = loop_c(&frames, e).unwrap();
                ensure(lc == 1.0, || format!("loop_c {lc} on sample {pos}"))?;
            }
        }

        // naive oracles
        let noisy: Vec<Tensor> = video
            .iter()
            .map(|f| {
                let noise = Tensor::randn(f.shape(), 0.02, &mut rng);
                f.zip_map(&noise, |v, n| (v + n).clamp(0.0, 1.0)).unwrap()
            })
            .collect();
        let mut worst = 0.0f64;
        for pair in noisy.windows(2) {
            worst = worst.max((ssim(&pair[0], &pair[1]).unwrap() - naive_ssim(&pair[0], &pair[1])).abs());
        }
        let motion_oracle =
            1.0 - noisy.windows(2).map(|p| naive_ssim(&p[0], &p[1])).sum::<f64>() / (noisy.len() - 1) as f64;
        worst = worst.max((motion_score(&noisy).unwrap() - motion_oracle).abs());
        let e = BlockMeanEmbedder::default();
        let embs: Vec<_> = noisy.iter().map(|f| e.embed(f).unwrap()).collect();
        let fc_oracle = embs.windows(2).map(|p| naive_cos(&p[0], &p[1])).sum::<f64>() / (embs.len() - 1) as f64;
        worst = worst.max((frame_consistency(&noisy, &e).unwrap() - fc_oracle).abs());
        worst = worst.max((loop_c(&noisy, &e).unwrap() - naive_cos(&embs[0], &embs[embs.len() - 1])).abs());
        let mse_oracle = noisy[0]
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| (255.0 * a - 255.0 * b).powi(2))
            .sum::<f64>()
            / x.len() as f64;
        worst = worst.max((mse_f0(&noisy, x).unwrap() - mse_oracle).abs());
        ensure(worst <= 1e-9, || format!("oracle gap {worst:.2e}"))?;
        Ok(format!("exact identities hold, oracle gap {worst:.1e}"))
    });
}

#[test]
fn c12_checkpoint_determinism() {
    criterion(12, "checkpoint resume determinism", || {
        let data = training_set(2, 43, 32, 4);
        let sched = NoiseSchedule::default();
        let mut cfg = tiny_cfg(Stage::One, 4);
        cfg.iterations = 20;
        let dir = tempfile::tempdir().unwrap();
        let mut full = TrainState::fresh(&cfg).unwrap();
        let reference = run_stage(&cfg, &mut full, &data, &sched, &RunOutput::default()).unwrap();

        let mut part = TrainState::fresh(&cfg).unwrap();
        let out = RunOutput {
            dir: Some(dir.path().to_path_buf()),
            stop_at: Some(9),
        };
        run_stage(&cfg, &mut part, &data, &sched, &out).unwrap();
        let ck = Checkpoint::load(&checkpoint_path(dir.path(), Stage::One)).unwrap();
        let mut resumed = TrainState::from_checkpoint(&cfg, ck).unwrap();
        let rest = run_stage(&cfg, &mut resumed, &data, &sched, &RunOutput::default()).unwrap();
        ensure(rest.len() == 11, || format!("{} resumed steps", rest.len()))?;
        for (a, b) in rest.iter().zip(&reference[9..]) {
            ensure(a.loss.to_bits() == b.loss.to_bits(), || format!("iteration {} differs", a.iteration))?;
        }
        let same = resumed.net.values().iter().zip(full.net.values()).all(|(a, b)| a == b);
        ensure(same, || "final weights differ".into())?;
        Ok("resumed losses and final weights bit-identical".into())
    });
}
