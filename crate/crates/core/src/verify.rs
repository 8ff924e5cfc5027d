//! Property and oracle checks, runnable as one suite.
//!
//! Each check returns a [`CheckOutcome`] instead of panicking so the suite
//! can report every failure at once. Checks that exercise a loss take it as
//! a function pointer, which lets a deliberately broken loss be plugged in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::beam::{beam_cost, beam_search};
use crate::collection::{beam_trajectory, trajectory_rng, Strategy};
use crate::error::Result;
use crate::losses::{upper_bound, LossKind, LossResult, NeighborScoring};
use crate::oracles::{
    brute_force_best_terminal, brute_force_policy_cost, lemma1_check, nonconvexity_witnesses, random_distribution,
    random_scores, random_space, realized_transition_cost,
};
use crate::search_space::{optimal_completion_cost, Space};
use crate::task::{generate_dataset, FeatureHasher, HammingSpace, SequenceTask};

pub type LossFn = fn(&NeighborScoring) -> LossResult;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckOutcome {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Counts instances where the loss falls below the realized cost increase.
fn bound_violation(loss: LossFn, scores: &[f64], costs: &[f64], k: usize) -> Result<Option<String>> {
    let input = NeighborScoring::new(scores.to_vec(), costs.to_vec(), k)?;
    let value = loss(&input).value;
    let realized = realized_transition_cost(scores, costs, k);
    Ok((value < realized).then(|| format!("s={scores:?} c={costs:?} k={k}: loss {value} < cost {realized}")))
}

/// Random instances with `n <= 8`, `k <= 4`, scores on a half-integer grid.
pub fn upper_bound_random(loss: LossFn, instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut first = None;
    for _ in 0..instances {
        let n = rng.gen_range(1..=8);
        let k = rng.gen_range(1..=4);
        let scores = random_scores(&mut rng, n);
        let costs: Vec<f64> = (0..n).map(|_| rng.gen_range(0..4) as f64).collect();
        if let Some(v) = bound_violation(loss, &scores, &costs, k)? {
            violations += 1;
            first.get_or_insert(v);
        }
    }
    Ok(CheckOutcome::new(
        "upper bound (random)",
        violations == 0,
        format!("{instances} instances, {violations} violations{}", first.map_or(String::new(), |v| format!("; {v}"))),
    ))
}

fn for_each_tuple(n: usize, base: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut digits = vec![0usize; n];
    loop {
        f(&digits)?;
        let mut i = 0;
        loop {
            if i == n {
                return Ok(());
            }
            digits[i] += 1;
            if digits[i] < base {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// Every score ordering of `n <= n_max` candidates (ties included, as
/// score levels `0..n`), against cost vectors with entries in `{0, 1, 2}`.
pub fn upper_bound_exhaustive(loss: LossFn, n_max: usize, k_max: usize) -> Result<CheckOutcome> {
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut first = None;
    for n in 1..=n_max {
        let mut orderings: Vec<Vec<f64>> = Vec::new();
        for_each_tuple(n, n, |levels| {
            // keep one representative per weak ordering: levels used must be 0..r
            let mut used = vec![false; n];
            for &l in levels {
                used[l] = true;
            }
            let r = used.iter().filter(|&&u| u).count();
            if used[..r].iter().all(|&u| u) {
                orderings.push(levels.iter().map(|&l| l as f64).collect());
            }
            Ok(())
        })?;
        for_each_tuple(n, 3, |cost_digits| {
            let costs: Vec<f64> = cost_digits.iter().map(|&c| c as f64).collect();
            for scores in &orderings {
                for k in 1..=k_max {
                    checked += 1;
                    if let Some(v) = bound_violation(loss, scores, &costs, k)? {
                        violations += 1;
                        first.get_or_insert(v);
                    }
                }
            }
            Ok(())
        })?;
    }
    Ok(CheckOutcome::new(
        "upper bound (exhaustive)",
        violations == 0,
        format!("{checked} instances, {violations} violations{}", first.map_or(String::new(), |v| format!("; {v}"))),
    ))
}

pub fn witnesses() -> Result<CheckOutcome> {
    let r = nonconvexity_witnesses()?;
    Ok(CheckOutcome::new(
        "non-convexity witnesses",
        r.holds(),
        format!(
            "update-on-increase {:?}; permuted hinge {:?}; literal hinge at s = {}",
            r.update_on_increase, r.permuted_hinge, r.permuted_hinge_literal_at_s
        ),
    ))
}

pub fn lemma1_random(trials: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..trials {
        let n = rng.gen_range(1..=8);
        let d = random_distribution(&mut rng, n);
        let d2 = random_distribution(&mut rng, n);
        let a = rng.gen_range(-10.0..10.0);
        let r = rng.gen_range(0.0..5.0);
        let f: Vec<f64> = (0..n).map(|_| a + r * rng.gen::<f64>()).collect();
        if !lemma1_check(&d, &d2, &f, a, r)? {
            failures += 1;
        }
    }
    Ok(CheckOutcome::new(
        "distribution shift lemma",
        failures == 0,
        format!("{trials} triples, {failures} failures"),
    ))
}

/// Beam search against the brute-force simulation, and `c*` at the root
/// against the exhaustive terminal scan.
pub fn oracle_equivalence(spaces: usize, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = Vec::new();
    for i in 0..spaces {
        let depth = rng.gen_range(1..=4);
        let space = random_space(&mut rng, depth, 3, 6)?;
        let scores = random_scores(&mut rng, space.num_nodes());
        let table = optimal_completion_cost(&space)?;
        for k in 1..=5 {
            let fast = space.terminal_cost(beam_search(&space, k, |v| scores[v.index()])?).unwrap();
            let slow = brute_force_policy_cost(&space, k, |v| scores[v.index()])?;
            if fast != slow {
                mismatches.push(format!("space {i}, k={k}: beam search {fast}, brute force {slow}"));
            }
        }
        let (_, best) = brute_force_best_terminal(&space)?;
        if table.get(space.initial()) != best {
            mismatches.push(format!("space {i}: c*(root) {} vs {best}", table.get(space.initial())));
        }
    }
    Ok(CheckOutcome::new(
        "oracle equivalence",
        mismatches.is_empty(),
        format!("{spaces} spaces x 5 widths, {} mismatches{}", mismatches.len(), mismatches.first().map_or(String::new(), |m| format!("; {m}"))),
    ))
}

/// Random scores with no ties, kinks or argmax switches within `gap`.
fn smooth_point(rng: &mut ChaCha8Rng, n: usize, gap: f64) -> (Vec<f64>, Vec<f64>) {
    loop {
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let mut ok = true;
        let mut deltas = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let ds = s[j] - s[i];
                ok &= ds.abs() > gap && (ds + 1.0).abs() > gap;
                ok &= (c[j] - c[i]).abs() > gap;
                ok &= (c[j] + s[j] - c[i] - s[i]).abs() > gap;
                deltas.push((c[j] - c[i]) * (ds + 1.0));
            }
        }
        for a in 0..deltas.len() {
            ok &= deltas[a].abs() > gap;
            for b in a + 1..deltas.len() {
                ok &= (deltas[a] - deltas[b]).abs() > gap;
            }
        }
        if ok {
            return (s, c);
        }
    }
}

/// Central finite differences (step `eps`) against the analytic subgradient
/// at `points` random smooth points per loss.
pub fn gradient_checks(points: usize, eps: f64, tol: f64, seed: u64) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for loss in LossKind::ALL {
        for _ in 0..points {
            let n = rng.gen_range(2..=6);
            let k = rng.gen_range(1..=4);
            let (s, c) = smooth_point(&mut rng, n, 1e-3);
            let input = NeighborScoring::new(s.clone(), c.clone(), k)?;
            let analytic = loss.evaluate(&input).grad_scores;
            for i in 0..n {
                let mut plus = s.clone();
                let mut minus = s.clone();
                plus[i] += eps;
                minus[i] -= eps;
                let fp = loss.evaluate(&input.with_scores(plus)?).value;
                let fm = loss.evaluate(&input.with_scores(minus)?).value;
                let fd = (fp - fm) / (2.0 * eps);
                let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1.0);
                worst = worst.max(rel);
                if rel > tol {
                    failures.push(format!("{loss} s={s:?} c={c:?} k={k} i={i}: fd {fd} vs {}", analytic[i]));
                }
            }
        }
    }
    Ok(CheckOutcome::new(
        "gradient check",
        failures.is_empty(),
        format!(
            "{} losses x {points} points, worst relative error {worst:.2e}{}",
            LossKind::ALL.len(),
            failures.first().map_or(String::new(), |f| format!("; {f}"))
        ),
    ))
}

fn hamming_spaces(m: usize, seed: u64) -> Result<Vec<HammingSpace>> {
    let task = SequenceTask::random(6, 3, 5, 0.2, seed)?;
    let hasher = FeatureHasher::new(512, seed)?;
    generate_dataset(&task, m, seed)?
        .iter()
        .map(|ex| HammingSpace::new(ex, 3, hasher))
        .collect()
}

/// Telescoping of beam costs along continue trajectories with random scorers.
pub fn telescoping(trajectories: usize, seed: u64) -> Result<CheckOutcome> {
    let spaces = hamming_spaces(trajectories, seed)?;
    let mut worst = 0.0f64;
    for (i, space) in spaces.iter().enumerate() {
        let salt = (seed ^ (i as u64).wrapping_mul(0x9e37_79b9)).wrapping_add(1);
        let score = |v: crate::search_space::NodeId| ((v.0.wrapping_mul(salt) >> 7) % 97) as f64 / 10.0;
        let k = 1 + i % 4;
        let traj = beam_trajectory(space, space, score, k, Strategy::Continue, &mut trajectory_rng(seed, i as u64))?;
        let summed: f64 = traj
            .beams
            .windows(2)
            .map(|w| crate::beam::transition_cost(space, &w[0], &w[1]))
            .sum();
        let direct = beam_cost(space, traj.final_beam()) - beam_cost(space, &traj.beams[0]);
        worst = worst.max((summed - direct).abs());
    }
    Ok(CheckOutcome::new(
        "telescoping",
        worst <= 1e-9,
        format!("{trajectories} trajectories, worst gap {worst:e}"),
    ))
}

/// Oracle roll-in never increases cost, whatever the learned scores are.
pub fn oracle_rollin(trajectories: usize, seed: u64) -> Result<CheckOutcome> {
    let spaces = hamming_spaces(trajectories, seed.wrapping_add(1))?;
    let mut increases = 0;
    for (i, space) in spaces.iter().enumerate() {
        let score = |v: crate::search_space::NodeId| -(((v.0 ^ seed).wrapping_mul(2_654_435_761) % 13) as f64);
        let traj = beam_trajectory(space, space, score, 1 + i % 3, Strategy::Oracle, &mut trajectory_rng(seed, i as u64))?;
        increases += traj.cost_increase_count;
    }
    Ok(CheckOutcome::new(
        "oracle roll-in",
        increases == 0,
        format!("{trajectories} trajectories, {increases} cost increases"),
    ))
}

/// The full suite at default sizes, with `upper` as the upper-bound loss.
pub fn run_suite_with(upper: LossFn) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        upper_bound_random(upper, 10_000, 1)?,
        upper_bound_exhaustive(upper, 6, 3)?,
        witnesses()?,
        lemma1_random(100_000, 2)?,
        oracle_equivalence(100, 3)?,
        gradient_checks(100, 1e-4, 1e-5, 4)?,
        telescoping(1000, 5)?,
        oracle_rollin(1000, 6)?,
    ])
}

pub fn run_suite() -> Result<Vec<CheckOutcome>> {
    run_suite_with(upper_bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The upper bound loss without its unit margin.
    fn no_margin(input: &NeighborScoring) -> LossResult {
        let n = input.len();
        let shifted: Vec<f64> = input.scores().to_vec();
        let mut out = upper_bound(input);
        // subtract the weight of the margin from the attaining term
        let p = crate::losses::sort_perms(input);
        let best = p.sigma_star[0];
        let mut top = 0.0f64;
        for &j in p.sigma_star.iter().skip(input.k()) {
            let w = input.costs()[j] - input.costs()[best];
            top = top.max(w * (shifted[j] - shifted[best]));
        }
        out.value = top;
        out.grad_scores = vec![0.0; n];
        out
    }

    #[test]
    fn small_suite_passes() {
        assert!(upper_bound_random(upper_bound, 2000, 9).unwrap().passed);
        assert!(upper_bound_exhaustive(upper_bound, 4, 3).unwrap().passed);
        assert!(witnesses().unwrap().passed);
        assert!(oracle_equivalence(20, 1).unwrap().passed);
        assert!(gradient_checks(10, 1e-4, 1e-5, 2).unwrap().passed);
        assert!(telescoping(50, 3).unwrap().passed);
        assert!(oracle_rollin(50, 4).unwrap().passed);
    }

    #[test]
    fn dropping_the_margin_is_caught() {
        let out = upper_bound_exhaustive(no_margin, 3, 2).unwrap();
        assert!(!out.passed, "{}", out.detail);
        assert!(!upper_bound_random(no_margin, 2000, 9).unwrap().passed);
    }
}
