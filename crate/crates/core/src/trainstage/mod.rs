//! Staged fine-tuning: configuration, optimizer, training step and stage runner.

mod config;
mod optim;
mod train;

pub use config::{AlssMode, StageConfig};
pub use optim::{Adam, BETA1, BETA2, EPSILON};
pub use train::{
    checkpoint_path, clip_latents, draw_sample, iteration_rng, loss_log_path, run_stage, sample_loss,
    smoothed_endpoints, training_step, LossRecord, RunOutput, TrainState, TrainingSample, TrainingVideo,
    LOSS_LOG_HEADER,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alss::AlssSampler;
    use crate::error::Error;
    use crate::model::{Checkpoint, EmbeddingProviders, NetConfig, ParamGroup};
    use crate::numerics::Tensor;
    use crate::schedule::NoiseSchedule;
    use crate::stage::Stage;

    /// A bright 8×8 block sliding right one pixel per frame on a 32×32 canvas.
    fn video(id: &str, len: usize, shift: usize) -> TrainingVideo {
        let mut frames = Vec::new();
        let mut masks = Vec::new();
        for i in 0..len {
            let mut f = Tensor::full(&[3, 32, 32], 0.2);
            let mut m = Tensor::zeros(&[1, 32, 32]);
            let x0 = (i + shift) % 24;
            for y in 8..16 {
                for x in x0..x0 + 8 {
                    f.set(&[0, y, x], 0.9);
                    m.set(&[0, y, x], 1.0);
                }
            }
            frames.push(f);
            masks.push(m);
        }
        let p = EmbeddingProviders::toy(4);
        TrainingVideo::from_frames(id, &frames, &masks, "a red square moving right", &p).unwrap()
    }

    fn cfg(stage: Stage) -> StageConfig {
        let mut c = StageConfig::for_stage(stage);
        c.forward_frames = 3;
        c.stride = 2;
        c.net = NetConfig {
            channels: 4,
            ctx_dim: 4,
        };
        c.iterations = 4;
        c.lr = 1e-3;
        c
    }

    fn data() -> Vec<TrainingVideo> {
        vec![video("a", 7, 0), video("b", 9, 5)]
    }

    fn snapshot(state: &TrainState, group: ParamGroup) -> Vec<Vec<u64>> {
        state
            .net
            .group_values(group)
            .iter()
            .map(|t| t.data().iter().map(|v| v.to_bits()).collect())
            .collect()
    }

    #[test]
    fn frozen_groups_never_move() {
        let sched = NoiseSchedule::default();
        let d = data();
        let mut state = TrainState::fresh(&cfg(Stage::One)).unwrap();
        for stage in Stage::ALL {
            let c = cfg(stage);
            if stage != Stage::One {
                let ck = Checkpoint::from_bytes(&state.to_checkpoint(&cfg(stage.previous().unwrap())).to_bytes().unwrap())
                    .unwrap();
                state = TrainState::from_checkpoint(&c, ck).unwrap();
            }
            let before: Vec<_> = ParamGroup::ALL.iter().map(|&g| snapshot(&state, g)).collect();
            run_stage(&c, &mut state, &d, &sched, &RunOutput::default()).unwrap();
            for (g, b) in ParamGroup::ALL.iter().zip(before) {
                let moved = snapshot(&state, *g) != b;
                assert_eq!(moved, c.trainable().contains(g), "stage {stage} group {g}");
            }
        }
    }

    #[test]
    fn zero_output_network_has_unit_loss() {
        let sched = NoiseSchedule::default();
        let c = cfg(Stage::One);
        let mut state = TrainState::fresh(&c).unwrap();
        let names: Vec<_> = state.net.specs().iter().map(|s| s.name.clone()).collect();
        for (name, v) in names.iter().zip(state.net.values_mut()) {
            if name.starts_with("conv_out") {
                *v = Tensor::zeros(v.shape());
            }
        }
        let d = data();
        let sampler = AlssSampler::new(c.alss().unwrap()).unwrap();
        let mut rng = iteration_rng(3, 0);
        let mut total = 0.0;
        for i in 0..1000 {
            let s = draw_sample(&d, &c, &sampler, &sched, i, &mut rng).unwrap();
            let (loss, _) = sample_loss(&state.net, &s, &c, &c.trainable()).unwrap();
            total += loss;
        }
        let mean = total / 1000.0;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn fixed_seed_reproduces_losses() {
        let sched = NoiseSchedule::default();
        let c = cfg(Stage::One);
        let run = || {
            let mut s = TrainState::fresh(&c).unwrap();
            run_stage(&c, &mut s, &data(), &sched, &RunOutput::default())
                .unwrap()
                .iter()
                .map(|r| r.loss.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let sched = NoiseSchedule::default();
        let c = cfg(Stage::One);
        let d = data();
        let mut full = TrainState::fresh(&c).unwrap();
        let reference = run_stage(&c, &mut full, &d, &sched, &RunOutput::default()).unwrap();

        let mut part = TrainState::fresh(&c).unwrap();
        let stop = RunOutput {
            dir: None,
            stop_at: Some(2),
        };
        run_stage(&c, &mut part, &d, &sched, &stop).unwrap();
        let bytes = part.to_checkpoint(&c).to_bytes().unwrap();
        let mut resumed = TrainState::from_checkpoint(&c, Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(resumed.iteration, 2);
        let rest = run_stage(&c, &mut resumed, &d, &sched, &RunOutput::default()).unwrap();
        assert_eq!(rest.len(), 2);
        for (a, b) in rest.iter().zip(&reference[2..]) {
            assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        }
    }

    #[test]
    fn stage_transitions() {
        let c1 = cfg(Stage::One);
        let c2 = cfg(Stage::Two);
        let c3 = cfg(Stage::Three);
        assert!(matches!(TrainState::fresh(&c2), Err(Error::Config(_))));
        let mut s = TrainState::fresh(&c1).unwrap();
        let unfinished = s.to_checkpoint(&c1);
        assert!(TrainState::from_checkpoint(&c2, unfinished.clone()).is_err());
        assert!(TrainState::from_checkpoint(&c1, unfinished).is_ok());
        s.iteration = c1.iterations;
        let done = s.to_checkpoint(&c1);
        assert!(done.meta.completed);
        assert!(TrainState::from_checkpoint(&c3, done.clone()).is_err());
        let s2 = TrainState::from_checkpoint(&c2, done).unwrap();
        assert_eq!((s2.stage, s2.iteration, s2.adam.step_count()), (Stage::Two, 0, 0));
        let mut wide = c2.clone();
        wide.net.channels = 8;
        assert!(TrainState::from_checkpoint(&wide, s.to_checkpoint(&c1)).is_err());
    }

    #[test]
    fn short_video_is_a_data_error() {
        let c = cfg(Stage::One);
        let mut s = TrainState::fresh(&c).unwrap();
        let d = vec![video("short", 4, 0)];
        let err = training_step(&mut s, &d, &c, &NoiseSchedule::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn epoch_mode_cycles_videos() {
        let sched = NoiseSchedule::default();
        let mut c = cfg(Stage::Two);
        c.alss_mode = AlssMode::Epoch;
        let d = data();
        let sampler = AlssSampler::new(c.alss().unwrap()).unwrap();
        let mut rng = iteration_rng(0, 0);
        let picks: Vec<_> = (0..4)
            .map(|i| {
                let s = draw_sample(&d, &c, &sampler, &sched, i, &mut rng).unwrap();
                (s.video, s.offset, s.sequence)
            })
            .collect();
        assert_eq!(picks[0].0, 0);
        assert_eq!(picks[1].0, 1);
        let again = draw_sample(&d, &c, &sampler, &sched, 1, &mut rng).unwrap();
        assert_eq!((again.video, again.offset, again.sequence), picks[1].clone());
    }

    #[test]
    fn accumulation_and_log_files() {
        let sched = NoiseSchedule::default();
        let mut c = cfg(Stage::One);
        c.grad_accum = 2;
        c.checkpoint_every = 2;
        let dir = tempfile::tempdir().unwrap();
        let out = RunOutput {
            dir: Some(dir.path().to_path_buf()),
            stop_at: None,
        };
        let mut s = TrainState::fresh(&c).unwrap();
        let log = run_stage(&c, &mut s, &data(), &sched, &out).unwrap();
        assert_eq!(log.len(), 4);
        let text = std::fs::read_to_string(loss_log_path(dir.path(), Stage::One)).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], LOSS_LOG_HEADER);
        assert_eq!(lines.len(), 5);
        let logged: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(logged.to_bits(), log[0].loss.to_bits());
        let ck = Checkpoint::load(&checkpoint_path(dir.path(), Stage::One)).unwrap();
        assert!(ck.meta.completed);
        assert_eq!(ck.meta.iteration, 4);
    }

    #[test]
    fn training_bundles_close_the_loop() {
        let sched = NoiseSchedule::default();
        let d = data();
        for stage in Stage::ALL {
            let c = cfg(stage);
            let sampler = AlssSampler::new(c.alss().unwrap()).unwrap();
            let mut rng = iteration_rng(1, 0);
            for i in 0..50 {
                let s = draw_sample(&d, &c, &sampler, &sched, i, &mut rng).unwrap();
                let n = s.bundle.frames();
                assert_eq!(s.bundle.z_c.shape()[1], 9);
                assert_eq!(n, 5);
                assert_eq!(s.bundle.z_sd.outer(0), s.bundle.z_sd.outer(n - 1));
                assert_eq!(s.bundle.z_m.outer(0), s.bundle.z_m.outer(n - 1));
                assert_eq!(s.z0.outer(0), s.z0.outer(n - 1));
            }
        }
    }
}
