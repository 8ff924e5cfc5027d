//! Surrogate losses over the neighbors of a beam.
//!
//! Each loss is a pure function of the candidate scores `s`, the candidate
//! completion costs `c` and the beam width `k`, and returns its value with a
//! subgradient with respect to `s`. Candidates are indexed in tie-break
//! order: on equal scores or equal costs the lower index ranks first.
//! Wherever a formula indexes the `k`-th ranked element, `k' = min(k, n)`
//! is used instead. At hinge kinks the zero subgradient is chosen.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{FeatureVector, Scorer};
use crate::search_space::NodeId;

/// Scores are clipped to this magnitude before any loss is evaluated.
pub const SCORE_CLIP: f64 = 1e6;

/// Scores and completion costs of the candidates in `A_b`, plus the beam width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborScoring {
    scores: Vec<f64>,
    costs: Vec<f64>,
    k: usize,
}

impl NeighborScoring {
    pub fn new(scores: Vec<f64>, costs: Vec<f64>, k: usize) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::precondition("a loss needs at least one candidate"));
        }
        if scores.len() != costs.len() {
            return Err(Error::precondition(format!(
                "{} scores but {} costs",
                scores.len(),
                costs.len()
            )));
        }
        if k == 0 {
            return Err(Error::precondition("beam width must be at least 1"));
        }
        if scores.iter().chain(&costs).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("loss input".into()));
        }
        let mut scores = scores;
        if scores.iter().any(|s| s.abs() > SCORE_CLIP) {
            log::warn!("clipping candidate scores to +/-{SCORE_CLIP:e}");
            for s in scores.iter_mut() {
                *s = s.clamp(-SCORE_CLIP, SCORE_CLIP);
            }
        }
        Ok(NeighborScoring { scores, costs, k })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `k' = min(k, n)`.
    pub fn effective_k(&self) -> usize {
        self.k.min(self.len())
    }

    /// Same costs and beam width with different scores.
    pub fn with_scores(&self, scores: Vec<f64>) -> Result<Self> {
        Self::new(scores, self.costs.clone(), self.k)
    }
}

/// `sigma_star` sorts by ascending cost, `sigma_hat` by descending score.
/// Both are zero-based and break ties by candidate index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutations {
    pub sigma_star: Vec<usize>,
    pub sigma_hat: Vec<usize>,
}

pub fn sort_perms(input: &NeighborScoring) -> Permutations {
    let n = input.len();
    let mut sigma_star: Vec<usize> = (0..n).collect();
    sigma_star.sort_by(|&a, &b| input.costs[a].total_cmp(&input.costs[b]).then(a.cmp(&b)));
    let mut sigma_hat: Vec<usize> = (0..n).collect();
    sigma_hat.sort_by(|&a, &b| input.scores[b].total_cmp(&input.scores[a]).then(a.cmp(&b)));
    Permutations { sigma_star, sigma_hat }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// A subgradient of `value` with respect to the scores.
    pub grad_scores: Vec<f64>,
}

impl LossResult {
    fn zero(n: usize) -> Self {
        LossResult {
            value: 0.0,
            grad_scores: vec![0.0; n],
        }
    }

    /// `weight * max(0, s[hi] - s[lo] + margin)` with its subgradient.
    fn hinge(n: usize, scores: &[f64], hi: usize, lo: usize, margin: f64, weight: f64) -> Self {
        let mut out = Self::zero(n);
        let h = scores[hi] - scores[lo] + margin;
        if h > 0.0 && weight != 0.0 && hi != lo {
            out.value = weight * h;
            out.grad_scores[hi] += weight;
            out.grad_scores[lo] -= weight;
        } else if h > 0.0 && weight != 0.0 {
            // same element on both sides: constant margin, no score dependence
            out.value = weight * h;
        }
        out
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `-s[best] + log sum_{i in I} exp(a_i)` where `a_i = s[idx] + offset[idx]`.
fn log_loss_over(input: &NeighborScoring, best: usize, members: &[usize], offsets: Option<&[f64]>) -> LossResult {
    let n = input.len();
    let augmented = |i: usize| input.scores[i] + offsets.map_or(0.0, |o| o[i]);
    let lse = log_sum_exp(members.iter().map(|&i| augmented(i)));
    let mut out = LossResult::zero(n);
    out.value = lse - input.scores[best];
    for &i in members {
        out.grad_scores[i] += (augmented(i) - lse).exp();
    }
    out.grad_scores[best] -= 1.0;
    out
}

/// `max(0, s[sigma_hat(1)] - s[sigma_star(1)])`.
pub fn perceptron_first(input: &NeighborScoring) -> LossResult {
    let p = sort_perms(input);
    LossResult::hinge(input.len(), &input.scores, p.sigma_hat[0], p.sigma_star[0], 0.0, 1.0)
}

/// `max(0, s[sigma_hat(k')] - s[sigma_star(1)])`.
pub fn perceptron_last(input: &NeighborScoring) -> LossResult {
    let p = sort_perms(input);
    let last = p.sigma_hat[input.effective_k() - 1];
    LossResult::hinge(input.len(), &input.scores, last, p.sigma_star[0], 0.0, 1.0)
}

/// `max(0, 1 + s[sigma_hat(k')] - s[sigma_star(1)])`.
pub fn margin_last(input: &NeighborScoring) -> LossResult {
    let p = sort_perms(input);
    let last = p.sigma_hat[input.effective_k() - 1];
    LossResult::hinge(input.len(), &input.scores, last, p.sigma_star[0], 1.0, 1.0)
}

/// Margin (last) weighted by `c[sigma_hat(k')] - c[sigma_star(1)]`, clamped at 0.
pub fn cost_sensitive_margin_last(input: &NeighborScoring) -> LossResult {
    let p = sort_perms(input);
    let last = p.sigma_hat[input.effective_k() - 1];
    let best = p.sigma_star[0];
    let weight = (input.costs[last] - input.costs[best]).max(0.0);
    LossResult::hinge(input.len(), &input.scores, last, best, 1.0, weight)
}

/// `max(0, delta_{k+1}, ..., delta_n)` with
/// `delta_j = (c[sigma*(j)] - c[sigma*(1)]) (s[sigma*(j)] - s[sigma*(1)] + 1)`.
/// Identically zero when `k >= n`.
pub fn upper_bound(input: &NeighborScoring) -> LossResult {
    let n = input.len();
    let p = sort_perms(input);
    let best = p.sigma_star[0];
    let mut attaining: Option<(usize, f64)> = None;
    for &j in p.sigma_star.iter().skip(input.k) {
        let weight = input.costs[j] - input.costs[best];
        let delta = weight * (input.scores[j] - input.scores[best] + 1.0);
        if delta > attaining.map_or(0.0, |(_, d)| d) {
            attaining = Some((j, delta));
        }
    }
    match attaining {
        Some((j, _)) => {
            let weight = input.costs[j] - input.costs[best];
            LossResult::hinge(n, &input.scores, j, best, 1.0, weight)
        }
        None => LossResult::zero(n),
    }
}

/// Log loss normalized over `{sigma*(1)} U {sigma_hat(1..k')}`.
pub fn log_loss_beam(input: &NeighborScoring) -> LossResult {
    let p = sort_perms(input);
    let best = p.sigma_star[0];
    let mut members: Vec<usize> = p.sigma_hat[..input.effective_k()].to_vec();
    if !members.contains(&best) {
        members.push(best);
    }
    log_loss_over(input, best, &members, None)
}

/// Log loss normalized over all of `A_b`.
pub fn log_loss_neighbors(input: &NeighborScoring) -> LossResult {
    let p = sort_perms(input);
    let members: Vec<usize> = (0..input.len()).collect();
    log_loss_over(input, p.sigma_star[0], &members, None)
}

/// `-s[sigma*(1)] + max_{i <= k'} (c[sigma_hat(i)] + s[sigma_hat(i)])`.
/// Not clamped at zero.
pub fn cost_sensitive_margin_beam(input: &NeighborScoring) -> LossResult {
    let n = input.len();
    let p = sort_perms(input);
    let best = p.sigma_star[0];
    let mut arg = p.sigma_hat[0];
    for &i in &p.sigma_hat[..input.effective_k()] {
        if input.costs[i] + input.scores[i] > input.costs[arg] + input.scores[arg] {
            arg = i;
        }
    }
    let mut out = LossResult::zero(n);
    out.value = input.costs[arg] + input.scores[arg] - input.scores[best];
    out.grad_scores[arg] += 1.0;
    out.grad_scores[best] -= 1.0;
    out
}

/// `-s[sigma*(1)] + log sum_{i <= k'} exp(c[sigma_hat(i)] + s[sigma_hat(i)])`.
pub fn softmax_margin_beam(input: &NeighborScoring) -> LossResult {
    let p = sort_perms(input);
    let members = &p.sigma_hat[..input.effective_k()];
    log_loss_over(input, p.sigma_star[0], members, Some(&input.costs))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairMode {
    /// Every pair `i < j`.
    All,
    /// Pairs with `i <= k' < j`.
    Bipartite,
    /// Pairs with `i <= k'` and `i < j`.
    Hybrid,
}

/// Sum over pairs (in cost order) of `(c_j - c_i) max(0, s_j - s_i + 1)`.
pub fn weighted_pairs(input: &NeighborScoring, mode: PairMode) -> LossResult {
    let n = input.len();
    let kp = input.effective_k();
    let p = sort_perms(input);
    let mut out = LossResult::zero(n);
    let first_range = match mode {
        PairMode::All => n,
        PairMode::Bipartite | PairMode::Hybrid => kp,
    };
    for i in 0..first_range {
        let j_start = match mode {
            PairMode::Bipartite => kp,
            PairMode::All | PairMode::Hybrid => i + 1,
        };
        for j in j_start..n {
            let (lo, hi) = (p.sigma_star[i], p.sigma_star[j]);
            let weight = input.costs[hi] - input.costs[lo];
            let h = input.scores[hi] - input.scores[lo] + 1.0;
            if weight != 0.0 && h > 0.0 {
                out.value += weight * h;
                out.grad_scores[hi] += weight;
                out.grad_scores[lo] -= weight;
            }
        }
    }
    out
}

/// The loss catalog, addressable by canonical name.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    PerceptronFirst,
    PerceptronLast,
    MarginLast,
    CostSensitiveMarginLast,
    UpperBound,
    LogBeam,
    LogNeighbors,
    CostSensitiveMarginBeam,
    SoftmaxMarginBeam,
    WeightedPairs(PairMode),
}

impl LossKind {
    pub const ALL: [LossKind; 12] = [
        LossKind::PerceptronFirst,
        LossKind::PerceptronLast,
        LossKind::MarginLast,
        LossKind::CostSensitiveMarginLast,
        LossKind::UpperBound,
        LossKind::LogBeam,
        LossKind::LogNeighbors,
        LossKind::CostSensitiveMarginBeam,
        LossKind::SoftmaxMarginBeam,
        LossKind::WeightedPairs(PairMode::All),
        LossKind::WeightedPairs(PairMode::Bipartite),
        LossKind::WeightedPairs(PairMode::Hybrid),
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::PerceptronFirst => "perceptron_first",
            LossKind::PerceptronLast => "perceptron_last",
            LossKind::MarginLast => "margin_last",
            LossKind::CostSensitiveMarginLast => "cs_margin_last",
            LossKind::UpperBound => "upper_bound",
            LossKind::LogBeam => "log_beam",
            LossKind::LogNeighbors => "log_neighbors",
            LossKind::CostSensitiveMarginBeam => "cs_margin_beam",
            LossKind::SoftmaxMarginBeam => "softmax_margin_beam",
            LossKind::WeightedPairs(PairMode::All) => "wp_all",
            LossKind::WeightedPairs(PairMode::Bipartite) => "wp_bipartite",
            LossKind::WeightedPairs(PairMode::Hybrid) => "wp_hybrid",
        }
    }

    /// Losses that are convex in the scores for every cost vector.
    pub fn is_convex(self) -> bool {
        matches!(
            self,
            LossKind::PerceptronFirst | LossKind::UpperBound | LossKind::LogNeighbors
        )
    }

    pub fn evaluate(self, input: &NeighborScoring) -> LossResult {
        match self {
            LossKind::PerceptronFirst => perceptron_first(input),
            LossKind::PerceptronLast => perceptron_last(input),
            LossKind::MarginLast => margin_last(input),
            LossKind::CostSensitiveMarginLast => cost_sensitive_margin_last(input),
            LossKind::UpperBound => upper_bound(input),
            LossKind::LogBeam => log_loss_beam(input),
            LossKind::LogNeighbors => log_loss_neighbors(input),
            LossKind::CostSensitiveMarginBeam => cost_sensitive_margin_beam(input),
            LossKind::SoftmaxMarginBeam => softmax_margin_beam(input),
            LossKind::WeightedPairs(mode) => weighted_pairs(input, mode),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::config(format!("unknown loss '{s}'")))
    }
}

/// Parses a weighted-pairs mode name (`all`, `bipartite`, `hybrid`).
impl FromStr for PairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(PairMode::All),
            "bipartite" => Ok(PairMode::Bipartite),
            "hybrid" => Ok(PairMode::Hybrid),
            other => Err(Error::config(format!("unknown weighted pairs mode '{other}'"))),
        }
    }
}

/// Adds `sum_i grad_scores[i] * phi(v_i)` into the dense buffer `out`.
pub fn accumulate_param_gradient(grad_scores: &[f64], features: &[FeatureVector], out: &mut [f64]) -> Result<()> {
    if grad_scores.len() != features.len() {
        return Err(Error::precondition(format!(
            "{} score gradients for {} candidates",
            grad_scores.len(),
            features.len()
        )));
    }
    for (&g, phi) in grad_scores.iter().zip(features) {
        if g == 0.0 {
            continue;
        }
        for &(i, x) in phi.entries() {
            let slot = out
                .get_mut(i as usize)
                .ok_or_else(|| Error::config(format!("feature index {i} out of range")))?;
            *slot += g * x;
        }
    }
    Ok(())
}

/// Chain rule through the scorer: `dl/dtheta = sum_i dl/ds_i * ds_i/dtheta`.
pub fn loss_gradient_wrt_params<S: Scorer>(
    result: &LossResult,
    candidates: &[NodeId],
    scorer: &S,
    dim: usize,
) -> Result<Vec<f64>> {
    if result.grad_scores.len() != candidates.len() {
        return Err(Error::precondition(format!(
            "{} score gradients for {} candidates",
            result.grad_scores.len(),
            candidates.len()
        )));
    }
    let features: Vec<FeatureVector> = candidates.iter().map(|&v| scorer.score_gradient(v)).collect();
    let mut out = vec![0.0; dim];
    accumulate_param_gradient(&result.grad_scores, &features, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn input(s: &[f64], c: &[f64], k: usize) -> NeighborScoring {
        NeighborScoring::new(s.to_vec(), c.to_vec(), k).unwrap()
    }

    #[test]
    fn permutations() {
        let p = sort_perms(&input(&[1.0, 4.0, 0.0], &[0.0, 1.0, 2.0], 1));
        assert_eq!(p.sigma_hat, vec![1, 0, 2]);
        assert_eq!(p.sigma_star, vec![0, 1, 2]);
        let flat = sort_perms(&input(&[3.0; 4], &[1.0, 0.0, 1.0, 0.0], 1));
        assert_eq!(flat.sigma_hat, vec![0, 1, 2, 3]);
        assert_eq!(flat.sigma_star, vec![1, 3, 0, 2]);
        let one = sort_perms(&input(&[5.0], &[2.0], 3));
        assert_eq!((one.sigma_hat, one.sigma_star), (vec![0], vec![0]));
    }

    #[test]
    fn perceptron_first_values() {
        let c = [0.0, 1.0, 2.0];
        assert_eq!(perceptron_first(&input(&[5.0, 3.0, 1.0], &c, 2)).value, 0.0);
        let r = perceptron_first(&input(&[1.0, 4.0, 0.0], &c, 2));
        assert_eq!(r.value, 3.0);
        assert_eq!(r.grad_scores, vec![-1.0, 1.0, 0.0]);
        let tie = perceptron_first(&input(&[2.0, 2.0, 0.0], &c, 2));
        assert_eq!(tie.value, 0.0);
        assert_eq!(tie.grad_scores, vec![0.0; 3]);
    }

    #[test]
    fn perceptron_last_values() {
        let c = [0.0, 1.0, 2.0];
        assert_eq!(perceptron_last(&input(&[5.0, 3.0, 1.0], &c, 2)).value, 0.0);
        let r = perceptron_last(&input(&[0.0, 5.0, 4.0], &c, 2));
        assert_eq!(r.value, 4.0);
        assert_eq!(r.grad_scores, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn margin_last_values() {
        let c = [0.0, 1.0, 2.0];
        assert_eq!(margin_last(&input(&[9.0, 5.0, 4.0], &c, 2)).value, 0.0);
        assert_eq!(margin_last(&input(&[0.0, 5.0, 4.0], &c, 2)).value, 5.0);
        assert_eq!(margin_last(&input(&[5.0, 5.0, 0.0], &c, 2)).value, 1.0);
    }

    #[test]
    fn cost_sensitive_margin_last_values() {
        let c = [0.0, 1.0, 2.0];
        assert_eq!(cost_sensitive_margin_last(&input(&[9.0, 5.0, 4.0], &c, 2)).value, 0.0);
        let r = cost_sensitive_margin_last(&input(&[0.0, 5.0, 4.0], &c, 2));
        assert_eq!(r.value, 10.0);
        assert_eq!(r.grad_scores, vec![-2.0, 0.0, 2.0]);
        assert_eq!(cost_sensitive_margin_last(&input(&[0.0, 5.0, 4.0], &[1.0; 3], 2)).value, 0.0);
        // sigma_hat(k') cheaper than sigma*(1) is impossible, but a tie in cost
        // with a later index gives a zero weight
        assert_eq!(cost_sensitive_margin_last(&input(&[0.0, 5.0], &[1.0, 1.0], 1)).value, 0.0);
    }

    #[test]
    fn upper_bound_values() {
        assert_eq!(upper_bound(&input(&[3.0, -2.0], &[0.0, 5.0], 2)).value, 0.0);
        let r = upper_bound(&input(&[1.0, 5.0, 5.0], &[0.0, 1.0, 1.0], 2));
        assert_eq!(r.value, 5.0);
        assert_eq!(r.grad_scores, vec![-1.0, 0.0, 1.0]);
        assert_eq!(upper_bound(&input(&[9.0, 5.0, 4.0], &[0.0, 1.0, 2.0], 2)).value, 0.0);
    }

    #[test]
    fn log_loss_beam_values() {
        assert_abs_diff_eq!(log_loss_beam(&input(&[10.0, 0.0], &[0.0, 1.0], 1)).value, 0.0);
        let r = log_loss_beam(&input(&[0.0, 1.0], &[0.0, 1.0], 1));
        assert_abs_diff_eq!(r.value, (1.0 + 1f64.exp()).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.value, 1.3133, epsilon = 1e-4);
        let r = log_loss_beam(&input(&[0.0, 5.0, 4.0], &[0.0, 1.0, 2.0], 2));
        assert_abs_diff_eq!(r.value, 5.318, epsilon = 1e-3);
        assert_abs_diff_eq!(r.grad_scores.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn log_loss_neighbors_values() {
        let r = log_loss_neighbors(&input(&[0.0, 0.0], &[0.0, 1.0], 1));
        assert_abs_diff_eq!(r.value, 2f64.ln(), epsilon = 1e-12);
        assert_eq!(r.grad_scores, vec![-0.5, 0.5]);
        let saturated = log_loss_neighbors(&input(&[20.0, 0.0, -1.0], &[0.0, 1.0, 1.0], 1));
        assert!(saturated.value < 1e-8);
    }

    #[test]
    fn cost_sensitive_margin_beam_values() {
        let c = [0.0, 1.0, 2.0];
        assert_eq!(cost_sensitive_margin_beam(&input(&[5.0, 3.0, 1.0], &c, 2)).value, 0.0);
        assert_eq!(cost_sensitive_margin_beam(&input(&[0.0, 5.0, 4.0], &c, 2)).value, 6.0);
        assert_eq!(cost_sensitive_margin_beam(&input(&[7.0, 1.0, 2.0], &[0.0; 3], 2)).value, 0.0);
    }

    #[test]
    fn softmax_margin_beam_values() {
        let r = softmax_margin_beam(&input(&[0.0, 5.0, 4.0], &[0.0, 1.0, 2.0], 2));
        assert_abs_diff_eq!(r.value, 6.0 + 2f64.ln(), epsilon = 1e-12);
        let s = [0.3, -1.2, 2.0, 0.7];
        let zero_cost = softmax_margin_beam(&input(&s, &[0.0; 4], 4));
        let neighbors = log_loss_neighbors(&input(&s, &[0.0; 4], 4));
        assert_abs_diff_eq!(zero_cost.value, neighbors.value, epsilon = 1e-12);
        assert_abs_diff_eq!(softmax_margin_beam(&input(&[3.5], &[2.0], 1)).value, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn weighted_pairs_values() {
        assert_eq!(weighted_pairs(&input(&[0.0, 0.0], &[0.0, 1.0], 1), PairMode::All).value, 1.0);
        for mode in [PairMode::All, PairMode::Bipartite, PairMode::Hybrid] {
            assert_eq!(weighted_pairs(&input(&[3.0, 0.0, 9.0], &[2.0; 3], 2), mode).value, 0.0);
        }
        let r = weighted_pairs(&input(&[0.0, 5.0, 4.0], &[0.0, 1.0, 2.0], 2), PairMode::Bipartite);
        assert_eq!(r.value, 10.0);
    }

    #[test]
    fn names_round_trip() {
        for kind in LossKind::ALL {
            assert_eq!(kind.name().parse::<LossKind>().unwrap(), kind);
        }
        assert!(matches!("hinge".parse::<LossKind>(), Err(Error::Config(_))));
        assert!(matches!("some".parse::<PairMode>(), Err(Error::Config(_))));
    }

    #[test]
    fn scores_are_clipped() {
        let r = NeighborScoring::new(vec![2e7, -3e6], vec![0.0, 1.0], 1).unwrap();
        assert_eq!(r.scores(), &[SCORE_CLIP, -SCORE_CLIP]);
        assert!(NeighborScoring::new(vec![f64::NAN], vec![0.0], 1).is_err());
        assert!(NeighborScoring::new(vec![], vec![], 1).is_err());
    }

    struct TwoFeatures;

    impl crate::scoring::FeatureMap for TwoFeatures {
        fn dim(&self) -> usize {
            3
        }
        fn features(&self, v: NodeId) -> FeatureVector {
            let e = match v.0 {
                0 => vec![(0, 1.0), (2, 0.5)],
                _ => vec![(1, 2.0), (2, 1.0)],
            };
            FeatureVector::new(e, 3).unwrap()
        }
    }

    #[test]
    fn parameter_gradient_chain_rule() {
        let theta = crate::scoring::Parameters::from_vec(vec![0.0, 1.0, 0.0]).unwrap();
        let scorer = crate::scoring::LinearScorer::new(&theta, &TwoFeatures).unwrap();
        let nodes = [NodeId(0), NodeId(1)];
        let scores: Vec<f64> = nodes.iter().map(|&v| scorer.score(v)).collect();
        // candidate 0 is best, candidate 1 outranks it: one active pair of weight 3
        let r = weighted_pairs(&NeighborScoring::new(scores, vec![0.0, 3.0], 1).unwrap(), PairMode::All);
        let g = loss_gradient_wrt_params(&r, &nodes, &scorer, 3).unwrap();
        // 3 * (phi(1) - phi(0))
        assert_eq!(g, vec![-3.0, 6.0, 1.5]);

        let zero = LossResult::zero(2);
        assert_eq!(loss_gradient_wrt_params(&zero, &nodes, &scorer, 3).unwrap(), vec![0.0; 3]);
        assert!(loss_gradient_wrt_params(&zero, &nodes[..1], &scorer, 3).is_err());
    }
}
