use flowcritic::envs::{EnvKind, VecEnv};
use flowcritic::rl::targets::gae_advantages;
use flowcritic::rl::{collect_rollouts, CriticKind, GaussianPolicy, TrainConfig, Trainer};
use flowcritic::rng::{stream, tags};

fn small(env: EnvKind, critic: CriticKind) -> TrainConfig {
    TrainConfig {
        env,
        critic,
        num_envs: 8,
        rollout_len: 16,
        actor_hidden: vec![16],
        critic_hidden: vec![16, 16],
        ensemble_size: 3,
        num_quantiles: 11,
        ..TrainConfig::desk()
    }
}

#[test]
fn flow_weights_keep_their_mass_every_iteration() {
    for env in [EnvKind::PointMass, EnvKind::Pendulum, EnvKind::ToySingleStep] {
        let mut trainer = Trainer::new(small(env, CriticKind::Flow)).unwrap();
        for _ in 0..4 {
            let m = trainer.train_iteration().unwrap();
            assert!(!m.aborted);
            let w = trainer.last_weights();
            assert_eq!(w.len(), 128);
            assert!((w.iter().sum::<f64>() - 128.0).abs() < 1e-9, "{env}");
            assert!(m.mean_cov.is_some_and(|k| k.is_finite() && k >= 0.0));
            assert!(m.min_weight <= m.mean_weight && m.mean_weight <= m.max_weight);
        }
    }
}

#[test]
fn baselines_use_uniform_weights() {
    for critic in [
        CriticKind::Point,
        CriticKind::AvgEnsemble,
        CriticKind::MinEnsemble,
        CriticKind::Quantile,
    ] {
        let mut trainer = Trainer::new(small(EnvKind::PointMass, critic)).unwrap();
        let m = trainer.train_iteration().unwrap();
        assert!(trainer.last_weights().iter().all(|&w| w == 1.0), "{critic}");
        assert_eq!(m.mean_cov, None);
    }
}

#[test]
fn every_critic_is_reproducible() {
    for critic in CriticKind::ALL {
        let run = || {
            let mut t = Trainer::new(small(EnvKind::Pendulum, critic)).unwrap();
            let metrics: Vec<_> = (0..3).map(|_| t.train_iteration().unwrap()).collect();
            let mut bytes = Vec::new();
            t.checkpoint().write_to(&mut bytes).unwrap();
            (metrics, bytes)
        };
        assert_eq!(run(), run(), "{critic}");
    }
}

#[test]
fn seeds_change_the_run() {
    let mut a = Trainer::new(small(EnvKind::PointMass, CriticKind::Flow)).unwrap();
    let mut b = Trainer::new(TrainConfig {
        seed: 1,
        ..small(EnvKind::PointMass, CriticKind::Flow)
    })
    .unwrap();
    assert_ne!(a.train_iteration().unwrap(), b.train_iteration().unwrap());
}

#[test]
fn rollouts_are_bit_identical() {
    let collect = || {
        let mut venv = VecEnv::new(EnvKind::PointMass, 6, 4);
        let policy = GaussianPolicy::seeded(
            venv.obs_dim(),
            venv.act_dim(),
            &[8],
            0.0,
            &mut stream(4, &[tags::POLICY_INIT]),
        )
        .unwrap();
        let mut rngs: Vec<_> = (0..6).map(|k| stream(4, &[tags::ACTION, k])).collect();
        (0..3)
            .map(|_| {
                let b = collect_rollouts(&mut venv, &policy, 40, &mut rngs).unwrap();
                (
                    b.obs,
                    b.actions,
                    b.rewards,
                    b.log_probs,
                    b.terminated,
                    b.truncated,
                    b.next_obs,
                )
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(collect(), collect());
}

#[test]
fn advantages_before_an_episode_end_ignore_later_rewards() {
    let mut venv = VecEnv::new(EnvKind::PointMass, 2, 9);
    let policy = GaussianPolicy::seeded(venv.obs_dim(), venv.act_dim(), &[8], 0.0, &mut stream(9, &[1])).unwrap();
    let mut rngs: Vec<_> = (0..2).map(|k| stream(9, &[k])).collect();
    let buffer = collect_rollouts(&mut venv, &policy, 30, &mut rngs).unwrap();
    let n = buffer.len();
    let values: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
    let next_values: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
    let cut = 11;
    let mut terminated = buffer.terminated.clone();
    terminated[cut] = true;
    let ends: Vec<bool> = (0..n).map(|i| terminated[i] || buffer.segment_end(i)).collect();
    let base = gae_advantages(&buffer.rewards, &values, &next_values, &terminated, &ends, 0.99, 0.95).unwrap();
    let mut rewards = buffer.rewards.clone();
    for r in &mut rewards[cut + 1..30] {
        *r += 1e3;
    }
    let shifted = gae_advantages(&rewards, &values, &next_values, &terminated, &ends, 0.99, 0.95).unwrap();
    assert_eq!(base[..=cut], shifted[..=cut]);
    assert_ne!(base[cut + 1], shifted[cut + 1]);
}
