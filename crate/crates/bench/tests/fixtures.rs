use dafs_bench::{attention, env, mlp, ppo_fixture, random_batch};
use dafs_core::agents::PpoConfig;

#[test]
fn fixtures_are_deterministic_and_well_formed() {
    assert_eq!(random_batch(4, 3), random_batch(4, 3));
    let x = random_batch(5, 8);
    assert_eq!(mlp(&[8, 16, 1]).forward(x.view()).unwrap().dim(), (5, 1));
    let p = attention(8, 4).weights(x.view()).unwrap();
    assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    assert_eq!(env("pendulum+aug").spec().state_dim, 6);
    let cfg = PpoConfig {
        critic_hidden: vec![8],
        ..PpoConfig::default()
    };
    let (_, batch, transitions) = ppo_fixture("cartpole+aug", &cfg, 32);
    assert_eq!(transitions.len(), 32);
    assert_eq!(batch.states.nrows(), 32);
}
