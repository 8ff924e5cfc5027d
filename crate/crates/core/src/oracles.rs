//! Brute-force reference computations used to certify the fast paths.
//!
//! Nothing here calls into `beam` or `search_space::optimal_completion_cost`;
//! each routine re-derives its answer from the raw tree.

use rand::Rng;

use crate::error::{Error, Result};
use crate::losses::{cost_sensitive_margin_last, NeighborScoring};
use crate::search_space::{NodeId, SearchSpace, Space};

/// Largest number of terminals the exhaustive scans accept.
pub const MAX_TERMINALS: usize = 100_000;

/// Largest tree the policy simulation accepts.
pub const MAX_SIM_NODES: usize = 1_000_000;

/// The cheapest terminal (lowest id on ties) and its cost.
pub fn brute_force_best_terminal(space: &SearchSpace) -> Result<(NodeId, f64)> {
    let terminals: Vec<(NodeId, f64)> = (0..space.num_nodes())
        .filter_map(|i| space.terminal_cost(NodeId::from(i)).map(|c| (NodeId::from(i), c)))
        .collect();
    if terminals.len() > MAX_TERMINALS {
        return Err(Error::SizeGuard {
            what: "terminals",
            actual: terminals.len(),
            limit: MAX_TERMINALS,
        });
    }
    let mut best: Option<(NodeId, f64)> = None;
    for (v, c) in terminals {
        match best {
            Some((_, bc)) if bc <= c => {}
            _ => best = Some((v, c)),
        }
    }
    best.ok_or_else(|| Error::structural("space has no terminal"))
}

/// Cost of the best terminal below `v`, by walking the whole subtree.
fn subtree_best(space: &SearchSpace, v: NodeId) -> f64 {
    let mut stack = vec![v];
    let mut best = f64::INFINITY;
    while let Some(u) = stack.pop() {
        if let Some(c) = space.terminal_cost(u) {
            best = best.min(c);
        }
        stack.extend_from_slice(space.children(u));
    }
    best
}

/// Simulates beam search step by step, re-sorting the full candidate list
/// at every step, and returns the cost of the terminal it ends in.
pub fn brute_force_policy_cost<F: Fn(NodeId) -> f64>(space: &SearchSpace, k: usize, score: F) -> Result<f64> {
    if space.num_nodes() > MAX_SIM_NODES {
        return Err(Error::SizeGuard {
            what: "nodes",
            actual: space.num_nodes(),
            limit: MAX_SIM_NODES,
        });
    }
    if k == 0 {
        return Err(Error::precondition("beam width must be at least 1"));
    }
    let mut beam = vec![space.initial()];
    loop {
        let mut candidates: Vec<NodeId> = Vec::new();
        for &m in &beam {
            for &c in space.children(m) {
                if !candidates.contains(&c) {
                    candidates.push(c);
                }
            }
        }
        if candidates.is_empty() {
            return Err(Error::structural("beam has no successors"));
        }
        let mut scored: Vec<(f64, NodeId)> = candidates.iter().map(|&v| (score(v), v)).collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores").then(a.1.cmp(&b.1)));
        let (_, top) = scored[0];
        if let Some(c) = space.terminal_cost(top) {
            return Ok(c);
        }
        beam = scored
            .iter()
            .map(|&(_, v)| v)
            .filter(|&v| space.terminal_cost(v).is_none())
            .take(k)
            .collect();
    }
}

/// `c*(v_(0))` by walking the whole tree.
pub fn brute_force_root_cost(space: &SearchSpace) -> f64 {
    subtree_best(space, space.initial())
}

/// Cost increase of the step that keeps the `min(k, n)` highest-scoring
/// candidates (lower index first on ties), with candidate costs `costs`
/// standing in for their completion costs.
pub fn realized_transition_cost(scores: &[f64], costs: &[f64], k: usize) -> f64 {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    // insertion sort, descending score, stable on index
    for i in 1..n {
        let mut j = i;
        while j > 0 && scores[order[j]] > scores[order[j - 1]] {
            order.swap(j, j - 1);
            j -= 1;
        }
    }
    let kept = order.iter().take(k.min(n)).map(|&i| costs[i]).fold(f64::INFINITY, f64::min);
    let floor = costs.iter().copied().fold(f64::INFINITY, f64::min);
    kept - floor
}

/// Checks `|E_d f - E_d2 f| <= (r / 2) ||d - d2||_1` for `f` valued in `[a, a + r]`.
pub fn lemma1_check(d: &[f64], d2: &[f64], f: &[f64], a: f64, r: f64) -> Result<bool> {
    let valid = |p: &[f64]| {
        p.iter().all(|x| x.is_finite() && *x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    };
    if d.len() != d2.len() || d.len() != f.len() || d.is_empty() {
        return Err(Error::precondition("distributions and f must share a nonempty support"));
    }
    if !valid(d) || !valid(d2) {
        return Err(Error::precondition("not a probability vector"));
    }
    if !(r >= 0.0) || f.iter().any(|&x| x < a - 1e-12 || x > a + r + 1e-12) {
        return Err(Error::precondition("f leaves [a, a + r]"));
    }
    let lhs: f64 = d.iter().zip(d2).zip(f).map(|((p, q), x)| (p - q) * x).sum::<f64>().abs();
    let l1: f64 = d.iter().zip(d2).map(|(p, q)| (p - q).abs()).sum();
    Ok(lhs <= r / 2.0 * l1 + 1e-12)
}

/// Random distribution over `n` outcomes.
pub fn random_distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Loss values at two score vectors and at their midpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct WitnessValues {
    pub at_s: f64,
    pub at_s_prime: f64,
    pub at_midpoint: f64,
}

impl WitnessValues {
    /// Zero at both ends and positive in the middle: convexity fails.
    pub fn shows_nonconvexity(&self) -> bool {
        self.at_s == 0.0 && self.at_s_prime == 0.0 && self.at_midpoint > 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonconvexityReport {
    /// Cost-sensitive margin (last) applied only on a cost increase,
    /// `c = (0, 1, 1)`, `k = 2`, `s = (1, 10, 0)`, `s' = (1, 0, 10)`.
    pub update_on_increase: WitnessValues,
    /// Hinge `max(0, s[sigma_hat(k)] - s[sigma*(k)] + 1)` with
    /// `c = (0, 1, 2)`, `k = 2`, `s = (2, 1, 0)`, `s' = (2, 4, 0)`, counted
    /// only when the two indexed elements differ.
    pub permuted_hinge: WitnessValues,
    /// The same hinge taken literally at `s`, where both indices pick the
    /// same element and the hinge is its margin, 1.
    pub permuted_hinge_literal_at_s: f64,
}

impl NonconvexityReport {
    pub fn holds(&self) -> bool {
        self.update_on_increase.shows_nonconvexity() && self.permuted_hinge.shows_nonconvexity()
    }
}

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * x + 0.5 * y).collect()
}

fn descending_order(s: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
    order
}

/// `(hinge counted only on distinct indices, literal hinge)`.
fn permuted_hinge(s: &[f64], costs: &[f64], k: usize) -> (f64, f64) {
    let hat = descending_order(s);
    let mut star: Vec<usize> = (0..costs.len()).collect();
    star.sort_by(|&a, &b| costs[a].partial_cmp(&costs[b]).unwrap().then(a.cmp(&b)));
    let (i, j) = (hat[k - 1], star[k - 1]);
    let literal = (s[i] - s[j] + 1.0).max(0.0);
    (if i == j { 0.0 } else { literal }, literal)
}

pub fn nonconvexity_witnesses() -> Result<NonconvexityReport> {
    let costs = [0.0, 1.0, 1.0];
    let k = 2;
    let conditional = |s: &[f64]| -> Result<f64> {
        let increase = realized_transition_cost(s, &costs, k) > 0.0;
        let loss = cost_sensitive_margin_last(&NeighborScoring::new(s.to_vec(), costs.to_vec(), k)?).value;
        Ok(if increase { loss } else { 0.0 })
    };
    let (s, s2) = ([1.0, 10.0, 0.0], [1.0, 0.0, 10.0]);
    let update_on_increase = WitnessValues {
        at_s: conditional(&s)?,
        at_s_prime: conditional(&s2)?,
        at_midpoint: conditional(&midpoint(&s, &s2))?,
    };

    let costs = [0.0, 1.0, 2.0];
    let (s, s2) = ([2.0, 1.0, 0.0], [2.0, 4.0, 0.0]);
    let permuted = WitnessValues {
        at_s: permuted_hinge(&s, &costs, k).0,
        at_s_prime: permuted_hinge(&s2, &costs, k).0,
        at_midpoint: permuted_hinge(&midpoint(&s, &s2), &costs, k).0,
    };
    Ok(NonconvexityReport {
        update_on_increase,
        permuted_hinge: permuted,
        permuted_hinge_literal_at_s: permuted_hinge(&s, &costs, k).1,
    })
}

/// Random tree with every terminal at depth `depth`, branching between 1
/// and `max_branch`, and integer terminal costs in `0..=max_cost`.
pub fn random_space(rng: &mut impl Rng, depth: usize, max_branch: usize, max_cost: u32) -> Result<SearchSpace> {
    let mut children: Vec<Vec<NodeId>> = vec![Vec::new()];
    let mut cost: Vec<Option<f64>> = vec![None];
    let mut frontier = vec![0usize];
    for level in 1..=depth {
        let mut next = Vec::new();
        for &p in &frontier {
            let count = rng.gen_range(1..=max_branch.max(1));
            for _ in 0..count {
                let id = children.len();
                children.push(Vec::new());
                cost.push((level == depth).then(|| rng.gen_range(0..=max_cost) as f64));
                children[p].push(NodeId::from(id));
                next.push(id);
            }
        }
        frontier = next;
    }
    SearchSpace::new(children, cost)
}

/// Scores on a coarse grid so that ties occur.
pub fn random_scores(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0..8) as f64 * 0.5).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_terminal() -> SearchSpace {
        SearchSpace::new(
            vec![vec![NodeId(1)], vec![NodeId(2)], vec![]],
            vec![None, None, Some(4.0)],
        )
        .unwrap()
    }

    #[test]
    fn single_terminal_space() {
        let s = single_terminal();
        assert_eq!(brute_force_best_terminal(&s).unwrap(), (NodeId(2), 4.0));
        assert_eq!(brute_force_policy_cost(&s, 3, |_| 0.0).unwrap(), 4.0);
        assert_eq!(brute_force_root_cost(&s), 4.0);
    }

    #[test]
    fn best_terminal_ties_to_lowest_id() {
        let s = SearchSpace::new(
            vec![vec![NodeId(1), NodeId(2), NodeId(3)], vec![], vec![], vec![]],
            vec![None, Some(2.0), Some(1.0), Some(1.0)],
        )
        .unwrap();
        assert_eq!(brute_force_best_terminal(&s).unwrap(), (NodeId(2), 1.0));
    }

    #[test]
    fn exhaustive_beam_ends_at_best_scored_terminal() {
        // the last step keeps a single terminal, so a full-width beam picks
        // the highest-scoring terminal rather than the cheapest one
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = random_space(&mut rng, 3, 3, 5).unwrap();
            let scores = random_scores(&mut rng, s.num_nodes());
            let got = brute_force_policy_cost(&s, s.num_nodes(), |v| scores[v.index()]).unwrap();
            let top = s
                .terminals()
                .max_by(|a, b| scores[a.index()].partial_cmp(&scores[b.index()]).unwrap().then(b.cmp(a)))
                .unwrap();
            assert_eq!(got, s.terminal_cost(top).unwrap());
            let oracle = brute_force_policy_cost(&s, s.num_nodes(), |v| -subtree_best(&s, v)).unwrap();
            assert_eq!(oracle, brute_force_root_cost(&s));
        }
    }

    #[test]
    fn realized_cost_follows_top_k() {
        assert_eq!(realized_transition_cost(&[1.0, 5.0, 5.0], &[0.0, 1.0, 1.0], 2), 1.0);
        assert_eq!(realized_transition_cost(&[1.0, 10.0, 0.0], &[0.0, 1.0, 1.0], 2), 0.0);
        assert_eq!(realized_transition_cost(&[3.0, 3.0], &[1.0, 0.0], 1), 1.0);
        assert_eq!(realized_transition_cost(&[0.0, 9.0], &[1.0, 0.0], 5), 0.0);
    }

    #[test]
    fn lemma1_cases() {
        let d = [0.2, 0.3, 0.5];
        assert!(lemma1_check(&d, &d, &[1.0, 2.0, 3.0], 1.0, 2.0).unwrap());
        assert!(lemma1_check(&d, &[0.6, 0.2, 0.2], &[4.0, 4.0, 4.0], 4.0, 0.0).unwrap());
        assert!(lemma1_check(&[0.5, 0.5], &[0.5], &[0.0, 0.0], 0.0, 1.0).is_err());
        assert!(lemma1_check(&[0.7, 0.7], &[0.5, 0.5], &[0.0, 0.0], 0.0, 1.0).is_err());
        assert!(lemma1_check(&d, &d, &[1.0, 2.0, 9.0], 1.0, 2.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..2000 {
            let n = rng.gen_range(1..=8);
            let (p, q) = (random_distribution(&mut rng, n), random_distribution(&mut rng, n));
            let (a, r) = (rng.gen_range(-5.0..5.0), rng.gen_range(0.0..4.0));
            let f: Vec<f64> = (0..n).map(|_| a + r * rng.gen::<f64>()).collect();
            assert!(lemma1_check(&p, &q, &f, a, r).unwrap());
        }
    }

    #[test]
    fn witnesses_reproduce() {
        let r = nonconvexity_witnesses().unwrap();
        assert_eq!(r.update_on_increase.at_s, 0.0);
        assert_eq!(r.update_on_increase.at_s_prime, 0.0);
        assert_eq!(r.update_on_increase.at_midpoint, 5.0);
        assert_eq!(r.permuted_hinge.at_s, 0.0);
        assert_eq!(r.permuted_hinge.at_s_prime, 0.0);
        assert_eq!(r.permuted_hinge.at_midpoint, 0.5);
        assert_eq!(r.permuted_hinge_literal_at_s, 1.0);
        assert!(r.holds());
    }

    #[test]
    fn random_spaces_are_uniform_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for depth in 1..5 {
            let s = random_space(&mut rng, depth, 3, 4).unwrap();
            for v in s.terminals() {
                assert_eq!(s.node_depth(v), depth);
            }
        }
    }
}
