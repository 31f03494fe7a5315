//! Property checks driven through proptest's runner so that both the
//! per-module suites and the acceptance suite can call them.

use adlight::features::{assemble_state, inverse_permutation, movement_shuffle, RewardNormalizer, StateMatrix};
use adlight::microsim::{DurationSet, SimWorld, JAM_SPACING_M};
use adlight::nn::{log_softmax, NetworkParams, STATE_LEN};
use adlight::ppo::{clipped_objective, ppo_loss, LossWeights, Minibatch};
use adlight::topology::{builtin_catalog, rotate_slot, MOVEMENT_COUNT};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn outcome<T: std::fmt::Debug>(r: Result<(), proptest::test_runner::TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

fn state_strategy() -> impl Strategy<Value = StateMatrix> {
    prop::array::uniform8(prop::array::uniform8(-2.0f32..2.0)).prop_map(|rows| StateMatrix { rows })
}

fn perm_strategy() -> impl Strategy<Value = [usize; MOVEMENT_COUNT]> {
    Just((0..MOVEMENT_COUNT).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|v| std::array::from_fn(|i| v[i]))
}

fn sorted_rows(s: &StateMatrix) -> Vec<[u32; 8]> {
    let mut rows: Vec<[u32; 8]> = s.rows.iter().map(|r| r.map(f32::to_bits)).collect();
    rows.sort();
    rows
}

/// Shuffling keeps the multiset of rows and the inverse permutation undoes it.
pub fn shuffle_properties(cases: u32) -> Result<(), String> {
    outcome(runner(cases).run(&(state_strategy(), perm_strategy()), |(s, p)| {
        let out = movement_shuffle(&s, &p).unwrap();
        prop_assert_eq!(sorted_rows(&out), sorted_rows(&s));
        for i in 0..MOVEMENT_COUNT {
            prop_assert_eq!(out.rows[i], s.rows[p[i]]);
        }
        let back = movement_shuffle(&out, &inverse_permutation(&p)).unwrap();
        prop_assert_eq!(back, s);
        Ok(())
    }))
}

/// Running statistics agree with a naive recomputation over the whole history.
pub fn normalizer_matches_naive(cases: u32) -> Result<(), String> {
    let raws = prop::collection::vec(-500.0f64..0.0, 1..300);
    outcome(runner(cases).run(&raws, |raws| {
        let mut norm = RewardNormalizer::new();
        for (t, &raw) in raws.iter().enumerate() {
            let history = &raws[..t];
            let (mu, sigma) = if history.is_empty() {
                (0.0, 0.0)
            } else {
                let n = history.len() as f64;
                let mu = history.iter().sum::<f64>() / n;
                (mu, (history.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt())
            };
            prop_assert!((norm.mean() - mu).abs() <= 1e-9 * mu.abs().max(1.0));
            prop_assert!((norm.std() - sigma).abs() <= 1e-9 * sigma.max(1.0));
            let want = ((raw - mu) / (sigma + 1e-8)).clamp(-10.0, 10.0);
            let got = norm.normalize(raw);
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{} vs {}", got, want);
        }
        Ok(())
    }))
}

/// Before any update the ratio is 1, and the clipped term never exceeds the
/// unclipped one.
pub fn ppo_ratio_properties(cases: u32) -> Result<(), String> {
    let pointwise = (0.0f64..3.0, -5.0f64..5.0, 0.01f64..0.5);
    outcome(runner(cases * 4).run(&pointwise, |(r, a, eps)| {
        prop_assert!(clipped_objective(r, a, eps) <= r * a);
        Ok(())
    }))?;
    outcome(runner(cases).run(&(any::<u64>(), 1usize..24, 2usize..14), |(seed, b, n)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = NetworkParams::init(n, &mut rng);
        let states: Vec<f32> = (0..b * STATE_LEN).map(|_| rng.random_range(0.0..1.4)).collect();
        let cache = params.forward(&states, b).unwrap();
        let actions: Vec<usize> = (0..b).map(|_| rng.random_range(0..n)).collect();
        let old_log_probs = (0..b)
            .map(|i| log_softmax(&cache.logits(i).iter().map(|&z| z as f64).collect::<Vec<_>>())[actions[i]])
            .collect();
        let mb = Minibatch {
            states,
            actions,
            old_log_probs,
            advantages: (0..b).map(|_| rng.random_range(-3.0..3.0)).collect(),
            targets: vec![0.0; b],
        };
        let w = LossWeights { clip_eps: 0.2, value_coef: 0.5, entropy_coef: 0.01 };
        let (stats, _) = ppo_loss(&params, &mb, w).unwrap();
        prop_assert!(stats.max_ratio_dev < 1e-5, "ratio deviates by {}", stats.max_ratio_dev);
        prop_assert_eq!(stats.clip_fraction, 0.0);
        Ok(())
    }))
}

/// Rotating an intersection by quarter turns permutes the rows of its state
/// exactly as the slot relabelling does, for identical traffic and commands.
pub fn rotation_is_permutation(cases: u32) -> Result<(), String> {
    let strategy = (
        0usize..11,
        1usize..4,
        prop::collection::vec((0usize..MOVEMENT_COUNT, 1usize..6), 0..10),
        prop::collection::vec(1u32..30, 1..6),
    );
    outcome(runner(cases).run(&strategy, |(idx, q, queues, greens)| {
        let base = builtin_catalog()[idx].scenario.scaled_demand(0.0).with_duration(400);
        let rotated = base.rotate(q);
        let mut a = SimWorld::new(base.clone(), DurationSet::Any).unwrap();
        let mut b = SimWorld::new(rotated, DurationSet::Any).unwrap();
        for &(m, n) in &queues {
            if !base.intersection.movements[m].present || a.vehicles(m).count() > 0 {
                continue;
            }
            for k in 0..n {
                a.inject_vehicle(m, 0, 40.0 + k as f64 * JAM_SPACING_M).unwrap();
                b.inject_vehicle(rotate_slot(m, q), 0, 40.0 + k as f64 * JAM_SPACING_M).unwrap();
            }
        }
        // row i of the rotated state is row j of the original where slot j maps to i
        let forward: [usize; MOVEMENT_COUNT] = std::array::from_fn(|j| rotate_slot(j, q));
        let perm = inverse_permutation(&forward);
        for (k, &g) in greens.iter().cycle().take(12).enumerate() {
            if k % 2 == 0 {
                a.begin_phase(g).unwrap();
                b.begin_phase(g).unwrap();
            } else {
                a.extend_phase(g).unwrap();
                b.extend_phase(g).unwrap();
            }
            a.run_command().unwrap();
            b.run_command().unwrap();
            if a.finished() {
                break;
            }
            let window = 5 + (k as u32 * 7) % 40;
            let sa = assemble_state(&a, window);
            let sb = assemble_state(&b, window);
            prop_assert_eq!(sb, movement_shuffle(&sa, &perm).unwrap());
        }
        Ok(())
    }))
}
