use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use dafs_bench::{attention, env, mlp, ppo_fixture, random_batch};
use dafs_core::agents::PpoConfig;
use dafs_core::envs::Action;
use std::hint::black_box;

fn dense(c: &mut Criterion) {
    let x = random_batch(64, 8);
    let mut net = mlp(&[8, 512, 512, 1]);
    c.bench_function("dense_forward_64x[8,512,512,1]", |b| b.iter(|| black_box(net.forward(x.view()).unwrap())));
    let grad = random_batch(64, 1);
    c.bench_function("dense_forward_backward_64x[8,512,512,1]", |b| {
        b.iter(|| {
            net.forward_train(x.view()).unwrap();
            black_box(net.backward(grad.view()).unwrap())
        })
    });
}

fn attention_weights(c: &mut Criterion) {
    let ae = attention(151, 20);
    let x = random_batch(64, 151);
    c.bench_function("attention_weights_64x151", |b| b.iter(|| black_box(ae.weights(x.view()).unwrap())));
}

fn env_step(c: &mut Criterion) {
    for name in ["cartpole+aug", "pendulum+aug", "synth:m=30,k=5"] {
        let mut e = env(name);
        let action = if e.spec().action_space.is_discrete() {
            Action::Discrete(0)
        } else {
            Action::Continuous(vec![0.0])
        };
        let mut episode = 0u64;
        c.bench_function(&format!("env_step_{name}"), |b| {
            b.iter(|| {
                let r = e.step(&action).unwrap();
                if r.done {
                    episode += 1;
                    e.reset(episode);
                }
                black_box(r)
            })
        });
    }
}

fn ppo_minibatch(c: &mut Criterion) {
    let cfg = PpoConfig {
        critic_hidden: vec![64, 64],
        ..PpoConfig::default()
    };
    let (agent, batch, _) = ppo_fixture("cartpole+aug", &cfg, 256);
    let idx: Vec<usize> = (0..64).collect();
    c.bench_function("ppo_minibatch_actor_critic_64", |b| {
        b.iter_batched(
            || agent.clone(),
            |mut a| {
                black_box(a.actor_gradients(&batch, &idx).unwrap());
                black_box(a.critic_gradients(&batch.states, &batch.returns, &idx).unwrap())
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, dense, attention_weights, env_step, ppo_minibatch);
criterion_main!(benches);
