//! Beam trajectories under the oracle, stop, reset, continue and
//! interpolated roll-in strategies, with the loss inputs collected along them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beam::{best, expand, score_nodes, select_successor, transition_cost, Beam, ScoredCandidate};
use crate::error::{Error, Result};
use crate::losses::NeighborScoring;
use crate::search_space::{CompletionCosts, NodeId, Space};

/// How the beam trajectory reacts to the learned policy's mistakes.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Strategy {
    /// Every step follows the oracle policy.
    Oracle,
    /// Halt at the first cost-increasing transition.
    Stop,
    /// Replace a cost-increasing transition by the best single neighbor.
    Reset,
    /// Ignore cost increases.
    Continue,
    /// Per step, follow the oracle with probability `beta`, else the learned policy.
    Interpolated(f64),
}

impl Strategy {
    pub fn validate(self) -> Result<Self> {
        match self {
            Strategy::Interpolated(beta) if !(0.0..=1.0).contains(&beta) => {
                Err(Error::config(format!("interpolation beta {beta} outside [0, 1]")))
            }
            s => Ok(s),
        }
    }

    /// Whether the roll-in can diverge from the oracle, so that the
    /// pure roll-in rate is meaningful.
    pub fn uses_learned_rollin(self) -> bool {
        !matches!(self, Strategy::Oracle)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Oracle => f.write_str("oracle"),
            Strategy::Stop => f.write_str("stop"),
            Strategy::Reset => f.write_str("reset"),
            Strategy::Continue => f.write_str("continue"),
            Strategy::Interpolated(beta) => write!(f, "interp:{beta}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parsed = match s {
            "oracle" => Strategy::Oracle,
            "stop" => Strategy::Stop,
            "reset" => Strategy::Reset,
            "continue" => Strategy::Continue,
            _ => {
                let beta = s
                    .strip_prefix("interp:")
                    .ok_or_else(|| Error::config(format!("unknown strategy '{s}'")))?;
                let beta: f64 = beta
                    .parse()
                    .map_err(|_| Error::config(format!("bad interpolation beta in '{s}'")))?;
                Strategy::Interpolated(beta)
            }
        };
        parsed.validate()
    }
}

/// The loss input collected at one non-final beam.
#[derive(Clone, Debug, PartialEq)]
pub struct CollectedStep {
    /// `A_b` in ascending id order; `scoring` is indexed the same way.
    pub candidates: Vec<NodeId>,
    pub scoring: NeighborScoring,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub beams: Vec<Beam>,
    /// One entry per beam but the last.
    pub steps: Vec<CollectedStep>,
    pub stopped_early: bool,
    /// Learned transitions that raised the beam cost (including reset ones).
    pub cost_increase_count: usize,
    /// No roll-in deviation in the first `depth - 1` transitions: no cost
    /// increase under stop and reset, no oracle step under interpolation.
    /// Always true for continue and false for oracle.
    pub pure_rollin: bool,
    /// Which transitions were taken by the oracle policy.
    pub oracle_steps: Vec<bool>,
}

impl Trajectory {
    pub fn final_beam(&self) -> &Beam {
        self.beams.last().expect("trajectories hold the initial beam")
    }
}

/// `pi*(b) = Policy(b, k, -c*)`.
pub fn oracle_step(space: &impl Space, costs: &impl CompletionCosts, beam: &Beam, k: usize) -> Result<Beam> {
    crate::beam::policy_step(space, beam, k, |v| -costs.completion_cost(v))
}

/// True iff `c*(to) > c*(from)`.
pub fn detect_cost_increase(costs: &impl CompletionCosts, from: &Beam, to: &Beam) -> bool {
    transition_cost(costs, from, to) > 0.0
}

/// Generator for one trajectory: the run seed picks the key, the example
/// index the stream, so trajectories can be replayed independently.
pub fn trajectory_rng(run_seed: u64, example_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(example_index);
    rng
}

/// Rolls in from `{v_(0)}` with the learned scores `score` and the given
/// strategy, collecting the neighbor scoring at every non-final beam.
pub fn beam_trajectory<S, C, F>(
    space: &S,
    costs: &C,
    score: F,
    k: usize,
    strategy: Strategy,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory>
where
    S: Space,
    C: CompletionCosts,
    F: Fn(NodeId) -> f64,
{
    let strategy = strategy.validate()?;
    if k == 0 {
        return Err(Error::precondition("beam width must be at least 1"));
    }
    let depth = space.depth();
    let mut traj = Trajectory {
        beams: vec![Beam::initial(space)],
        steps: Vec::new(),
        stopped_early: false,
        cost_increase_count: 0,
        pure_rollin: strategy.uses_learned_rollin(),
        oracle_steps: Vec::new(),
    };

    for step in 0..=depth {
        let beam = traj.final_beam().clone();
        if beam.is_terminal(space) {
            return Ok(traj);
        }
        let candidates = expand(space, &beam)?;
        let scores: Vec<f64> = candidates.iter().map(|&v| score(v)).collect();
        let cand_costs: Vec<f64> = candidates.iter().map(|&v| costs.completion_cost(v)).collect();
        // a move onto terminals keeps only the top candidate
        let width = if candidates.iter().all(|&v| space.is_terminal(v)) { 1 } else { k };
        let scoring = NeighborScoring::new(scores.clone(), cand_costs.clone(), width)?;
        let counts = step + 1 < depth;

        let use_oracle = match strategy {
            Strategy::Oracle => true,
            Strategy::Interpolated(beta) => rng.gen::<f64>() < beta,
            _ => false,
        };
        let ranked = |values: &[f64]| -> Vec<ScoredCandidate> {
            let mut out: Vec<ScoredCandidate> = candidates
                .iter()
                .zip(values)
                .map(|(&node, &score)| ScoredCandidate { node, score })
                .collect();
            crate::beam::rank(&mut out);
            out
        };
        let oracle_scores: Vec<f64> = cand_costs.iter().map(|c| -c).collect();
        let mut next = if use_oracle {
            select_successor(space, &ranked(&oracle_scores), k)?
        } else {
            select_successor(space, &ranked(scoring.scores()), k)?
        };
        traj.steps.push(CollectedStep { candidates: candidates.clone(), scoring });
        traj.oracle_steps.push(use_oracle);
        if use_oracle && counts {
            traj.pure_rollin = false;
        }

        if !use_oracle && detect_cost_increase(costs, &beam, &next) {
            traj.cost_increase_count += 1;
            if counts && matches!(strategy, Strategy::Stop | Strategy::Reset) {
                traj.pure_rollin = false;
            }
            match strategy {
                Strategy::Stop => {
                    traj.beams.push(next);
                    traj.stopped_early = true;
                    return Ok(traj);
                }
                Strategy::Reset => {
                    let best_node = best(&score_nodes(&candidates, |v| -costs.completion_cost(v)), 1)?[0];
                    next = Beam::singleton(best_node);
                }
                _ => {}
            }
        }
        traj.beams.push(next);
    }
    if traj.final_beam().is_terminal(space) {
        Ok(traj)
    } else {
        Err(Error::structural(format!("trajectory did not terminate within {} steps", depth + 1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::beam_cost;
    use crate::task::{Example, FeatureHasher, HammingSpace};

    /// Binary labels, gold all zeros: `c*` counts the ones in a prefix.
    fn zeros(len: usize) -> HammingSpace {
        let ex = Example {
            tokens: vec![0; len],
            labels: vec![0; len],
        };
        HammingSpace::new(&ex, 2, FeatureHasher::new(16, 0).unwrap()).unwrap()
    }

    fn run(space: &HammingSpace, k: usize, strategy: Strategy, adversarial: bool) -> Trajectory {
        let mut rng = trajectory_rng(1, 0);
        let sign = if adversarial { 1.0 } else { -1.0 };
        beam_trajectory(space, space, |v| sign * space.completion_cost(v), k, strategy, &mut rng).unwrap()
    }

    #[test]
    fn parses_strategies() {
        assert_eq!("oracle".parse::<Strategy>().unwrap(), Strategy::Oracle);
        assert_eq!("interp:0.25".parse::<Strategy>().unwrap(), Strategy::Interpolated(0.25));
        assert!("interp:1.5".parse::<Strategy>().is_err());
        assert!("interp:x".parse::<Strategy>().is_err());
        assert!("greedy".parse::<Strategy>().is_err());
        assert_eq!(Strategy::Interpolated(0.5).to_string(), "interp:0.5");
    }

    #[test]
    fn oracle_never_increases_cost() {
        let space = zeros(3);
        let t = run(&space, 2, Strategy::Oracle, true);
        assert_eq!(t.cost_increase_count, 0);
        assert!(!t.pure_rollin);
        assert_eq!(beam_cost(&space, t.final_beam()), 0.0);
        for w in t.beams.windows(2) {
            assert!(!detect_cost_increase(&space, &w[0], &w[1]));
        }
    }

    #[test]
    fn oracle_ties_go_to_lower_id() {
        // two zero-cost children when gold and the runner-up both cost nothing
        let ex = Example {
            tokens: vec![0],
            labels: vec![1],
        };
        let space = HammingSpace::new(&ex, 3, FeatureHasher::new(4, 0).unwrap()).unwrap();
        let next = oracle_step(&space, &space, &Beam::initial(&space), 1).unwrap();
        assert_eq!(next.members(), &[space.node(&[1])]);
        let flat = |_v: NodeId| 0.0;
        let tie = crate::beam::policy_step(&space, &Beam::initial(&space), 1, flat).unwrap();
        assert_eq!(tie.members(), &[space.node(&[0])]);
    }

    #[test]
    fn continue_runs_to_the_end() {
        let space = zeros(3);
        let t = run(&space, 1, Strategy::Continue, true);
        assert_eq!(t.beams.len(), 4);
        assert_eq!(t.steps.len(), 3);
        assert!(!t.stopped_early);
        assert!(t.pure_rollin);
        assert_eq!(t.cost_increase_count, 3);
        assert_eq!(beam_cost(&space, t.final_beam()), 3.0);
    }

    #[test]
    fn stop_halts_on_first_increase() {
        let space = zeros(3);
        let t = run(&space, 1, Strategy::Stop, true);
        assert!(t.stopped_early);
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.beams.len(), 2);
        assert_eq!(t.cost_increase_count, 1);
        assert!(!t.pure_rollin);
    }

    #[test]
    fn reset_overrides_every_learned_step() {
        let space = zeros(3);
        let t = run(&space, 1, Strategy::Reset, true);
        assert_eq!(t.cost_increase_count, 3);
        assert_eq!(t.beams.len(), 4);
        for b in &t.beams[1..] {
            assert_eq!(b.len(), 1);
            assert_eq!(beam_cost(&space, b), 0.0);
        }
    }

    #[test]
    fn perfect_scorer_is_pure_under_reset() {
        let space = zeros(4);
        let t = run(&space, 2, Strategy::Reset, false);
        assert_eq!(t.cost_increase_count, 0);
        assert!(t.pure_rollin);
    }

    #[test]
    fn wider_beam_absorbs_first_mistake() {
        // k = 2 keeps the gold prefix at depth 1; depth 2 keeps 11 and 01
        let space = zeros(3);
        let t = run(&space, 2, Strategy::Continue, true);
        assert_eq!(t.beams[1].len(), 2);
        assert_eq!(beam_cost(&space, &t.beams[1]), 0.0);
        assert_eq!(t.beams[2].members(), &[space.node(&[1, 1]), space.node(&[0, 1])]);
    }

    #[test]
    fn degenerate_interpolations() {
        let space = zeros(4);
        let a = run(&space, 2, Strategy::Interpolated(0.0), true);
        let b = run(&space, 2, Strategy::Continue, true);
        assert_eq!(a.beams, b.beams);
        assert_eq!(a.pure_rollin, b.pure_rollin);
        let c = run(&space, 2, Strategy::Interpolated(1.0), true);
        let d = run(&space, 2, Strategy::Oracle, true);
        assert_eq!(c.beams, d.beams);
        assert_eq!(c.steps, d.steps);
    }

    #[test]
    fn interpolated_rollin_rate() {
        // depth 3: pure iff the first two coins both pick the learned policy
        let space = zeros(3);
        let n = 10_000;
        let pure = (0..n)
            .filter(|&i| {
                let mut rng = trajectory_rng(42, i);
                beam_trajectory(&space, &space, |v| space.completion_cost(v), 1, Strategy::Interpolated(0.5), &mut rng)
                    .unwrap()
                    .pure_rollin
            })
            .count();
        let rate = pure as f64 / n as f64;
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((rate - 0.25).abs() < 3.0 * se, "rate {rate}");
    }
}
