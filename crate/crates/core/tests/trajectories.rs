use beamlearn::beam::{beam_search, transition_cost};
use beamlearn::collection::{beam_trajectory, trajectory_rng, Strategy};
use beamlearn::learner::initial_parameters;
use beamlearn::losses::{upper_bound, LossKind};
use beamlearn::scoring::{LinearScorer, Scorer};
use beamlearn::search_space::{CompletionCosts, NodeId, Space};
use beamlearn::task::{generate_dataset, Example, FeatureHasher, HammingSpace, SequenceTask};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn subtree_min(space: &HammingSpace, v: NodeId) -> f64 {
    if space.is_terminal(v) {
        return space.completion_cost(v);
    }
    space
        .neighbors(v)
        .into_iter()
        .map(|w| subtree_min(space, w))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn prefix_mismatches_equal_best_reachable_terminal() {
    let hasher = FeatureHasher::new(64, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for num_labels in 2..=4 {
        for length in 1..=5 {
            let labels: Vec<usize> = (0..length).map(|_| rng.gen_range(0..num_labels)).collect();
            let ex = Example { tokens: labels.clone(), labels };
            let space = HammingSpace::new(&ex, num_labels, hasher).unwrap();
            let mut stack = vec![space.initial()];
            while let Some(v) = stack.pop() {
                assert_eq!(space.completion_cost(v), subtree_min(&space, v), "node {v:?}");
                stack.extend(space.neighbors(v));
            }
        }
    }
}

#[test]
fn upper_bound_covers_every_realized_transition() {
    let task = SequenceTask::random(6, 3, 5, 0.3, 2).unwrap();
    let hasher = FeatureHasher::new(256, 4).unwrap();
    for (i, ex) in generate_dataset(&task, 300, 3).unwrap().iter().enumerate() {
        let space = HammingSpace::new(ex, 3, hasher).unwrap();
        let theta = initial_parameters(256, 1.0, i as u64);
        let scorer = LinearScorer::new(&theta, &space).unwrap();
        let k = 1 + i % 4;
        let traj = beam_trajectory(&space, &space, |v| scorer.score(v), k, Strategy::Continue, &mut trajectory_rng(0, i as u64))
            .unwrap();
        for (j, step) in traj.steps.iter().enumerate() {
            let realized = transition_cost(&space, &traj.beams[j], &traj.beams[j + 1]);
            let bound = upper_bound(&step.scoring).value;
            assert!(bound >= realized, "example {i} step {j}: {bound} < {realized}");
        }
        assert_eq!(traj.steps.last().unwrap().scoring.k(), 1);
        let total: f64 = traj.steps.iter().map(|s| LossKind::UpperBound.evaluate(&s.scoring).value).sum();
        assert!(total >= space.completion_cost(traj.final_beam().members()[0]));
    }
}

#[test]
fn first_labels_follow_the_stationary_distribution() {
    let task = SequenceTask::random(5, 4, 3, 0.1, 9).unwrap();
    let m = 10_000;
    let data = generate_dataset(&task, m, 10).unwrap();
    let mut counts = [0usize; 4];
    for ex in &data {
        counts[ex.labels[0]] += 1;
    }
    let pi = task.stationary();
    let stat: f64 = counts
        .iter()
        .zip(&pi)
        .map(|(&o, &p)| {
            let e = p * m as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let p_value = 1.0 - ChiSquared::new(3.0).unwrap().cdf(stat);
    assert!(p_value > 0.01, "chi-square {stat}, p = {p_value}");
}

proptest! {
    #[test]
    fn beams_stay_ranked_and_bounded(seed in 0u64..10_000, k in 1usize..5, labels in 2usize..4, length in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold: Vec<usize> = (0..length).map(|_| rng.gen_range(0..labels)).collect();
        let ex = Example { tokens: gold.clone(), labels: gold };
        let space = HammingSpace::new(&ex, labels, FeatureHasher::new(32, seed).unwrap()).unwrap();
        let theta = initial_parameters(32, 1.0, seed);
        let scorer = LinearScorer::new(&theta, &space).unwrap();
        let traj = beam_trajectory(&space, &space, |v| scorer.score(v), k, Strategy::Continue, &mut trajectory_rng(seed, 0)).unwrap();
        prop_assert_eq!(traj.beams.len(), length + 1);
        for b in &traj.beams {
            prop_assert!(!b.is_empty() && b.len() <= k);
            // members come in rank order: score descending, then id ascending
            let ranked = b.members().windows(2).all(|w| {
                let (a, c) = (scorer.score(w[0]), scorer.score(w[1]));
                a > c || (a == c && w[0] < w[1])
            });
            prop_assert!(ranked);
        }
        let last = traj.final_beam();
        prop_assert_eq!(last.len(), 1);
        prop_assert_eq!(last.members()[0], beam_search(&space, k, |v| scorer.score(v)).unwrap());
    }
}
