//! Online learning over beam trajectories, with regret and bound diagnostics.
//!
//! One round per training example: roll in with the current parameters,
//! sum the surrogate losses collected along the trajectory, take one
//! optimizer step. Everything is seeded, so identical inputs give
//! bitwise-identical parameter sequences and metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beam::{beam_cost, beam_search};
use crate::collection::{beam_trajectory, trajectory_rng, Strategy};
use crate::error::{Error, Result};
use crate::losses::{accumulate_param_gradient, LossKind, NeighborScoring, SCORE_CLIP};
use crate::scoring::{FeatureMap, FeatureVector, LinearScorer, Parameters, Scorer};
use crate::search_space::{CompletionCosts, Space};

/// A problem instance the learner can roll in on.
pub trait Instance: Space + CompletionCosts + FeatureMap {}

impl<T: Space + CompletionCosts + FeatureMap> Instance for T {}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerConfig {
    /// Step `step_scale / sqrt(t)` at round `t`.
    Ogd { step_scale: f64 },
    Adam { step: f64, beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerConfig {
    pub fn adam(step: f64) -> Self {
        OptimizerConfig::Adam {
            step,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    fn validate(self) -> Result<Self> {
        let ok = match self {
            OptimizerConfig::Ogd { step_scale } => step_scale.is_finite() && step_scale > 0.0,
            OptimizerConfig::Adam {
                step,
                beta1,
                beta2,
                epsilon,
            } => {
                step.is_finite()
                    && step > 0.0
                    && (0.0..1.0).contains(&beta1)
                    && (0.0..1.0).contains(&beta2)
                    && epsilon > 0.0
            }
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Online optimizer state. Updates are a deterministic function of the
/// state and the gradient; with a bound, iterates are clipped to the box
/// `[-bound, bound]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    config: OptimizerConfig,
    bound: Option<f64>,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, dim: usize, bound: Option<f64>) -> Result<Self> {
        let config = config.validate()?;
        if let Some(b) = bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::config(format!("parameter bound {b} must be positive")));
            }
        }
        let state = match config {
            OptimizerConfig::Ogd { .. } => Vec::new(),
            OptimizerConfig::Adam { .. } => vec![0.0; dim],
        };
        Ok(Optimizer {
            config,
            bound,
            t: 0,
            m: state.clone(),
            v: state,
        })
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }

    /// `theta' = Pi(theta - step_t * direction(g))`.
    pub fn step(&mut self, theta: &Parameters, grad: &[f64]) -> Result<Parameters> {
        if grad.len() != theta.dim() {
            return Err(Error::precondition(format!(
                "gradient has dimension {}, parameters {}",
                grad.len(),
                theta.dim()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.t += 1;
        let t = self.t as f64;
        let mut next = theta.as_slice().to_vec();
        match self.config {
            OptimizerConfig::Ogd { step_scale } => {
                let eta = step_scale / t.sqrt();
                for (x, g) in next.iter_mut().zip(grad) {
                    *x -= eta * g;
                }
            }
            OptimizerConfig::Adam {
                step,
                beta1,
                beta2,
                epsilon,
            } => {
                let c1 = 1.0 - beta1.powf(t);
                let c2 = 1.0 - beta2.powf(t);
                for i in 0..next.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    next[i] -= step * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        if let Some(b) = self.bound {
            for x in next.iter_mut() {
                *x = x.clamp(-b, b);
            }
        }
        Parameters::from_vec(next)
    }
}

/// One optimizer update of `theta` along `gradient`.
pub fn optimizer_update(optimizer: &mut Optimizer, theta: &Parameters, gradient: &[f64]) -> Result<Parameters> {
    optimizer.step(theta, gradient)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub loss: LossKind,
    pub strategy: Strategy,
    pub k: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Initial parameters are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Box constraint on the parameters; `None` leaves them free.
    pub param_bound: Option<f64>,
    /// Bound `u` on a trajectory's summed loss, used for the bound terms.
    pub loss_bound: f64,
    pub delta: f64,
    /// Validation cadence in rounds (the last round is always validated).
    pub validate_every: usize,
    /// Cadence of the regret estimate; 0 disables it.
    pub regret_every: usize,
    pub regret_iterations: usize,
    /// Keep every `theta_t` for mixture evaluation.
    pub keep_snapshots: bool,
    pub checkpoint_every: usize,
}

impl LearnConfig {
    pub fn new(loss: LossKind, strategy: Strategy, k: usize) -> Self {
        LearnConfig {
            loss,
            strategy,
            k,
            optimizer: OptimizerConfig::Ogd { step_scale: 0.5 },
            seed: 0,
            init_scale: 0.01,
            param_bound: Some(10.0),
            loss_bound: 1.0,
            delta: 0.05,
            validate_every: 50,
            regret_every: 0,
            regret_iterations: 300,
            keep_snapshots: false,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        self.optimizer.validate()?;
        if self.k == 0 {
            return Err(Error::config("beam width k must be at least 1"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::config("init_scale must be a nonnegative number"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::config(format!("delta {} outside (0, 1]", self.delta)));
        }
        if !(self.loss_bound >= 0.0 && self.loss_bound.is_finite()) {
            return Err(Error::config("loss bound must be a nonnegative number"));
        }
        Ok(())
    }
}

/// The inputs needed to re-evaluate one collected loss at other parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayStep {
    pub features: Vec<FeatureVector>,
    pub scoring: NeighborScoring,
}

/// Per-round diagnostics.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RegretTracker {
    /// `l_t(theta_t)`: summed surrogate loss of round `t`.
    pub losses: Vec<f64>,
    /// `c*` of the final beam of round `t`.
    pub costs: Vec<f64>,
    /// Pure roll-in event; `None` for oracle rounds.
    pub pure_rollin: Vec<Option<bool>>,
    pub loss_bound: f64,
    /// Stored loss inputs, one list per round.
    pub replay: Vec<Vec<ReplayStep>>,
}

impl RegretTracker {
    pub fn rounds(&self) -> usize {
        self.losses.len()
    }

    pub fn mean_loss(&self) -> f64 {
        mean(&self.losses)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub surrogate_loss: f64,
    pub terminal_cost: f64,
    pub cost_increases: usize,
    pub pure_rollin: Option<bool>,
    pub gamma_hat: Option<f64>,
    pub alpha_hat: Option<f64>,
    pub eta: f64,
    /// Set when the round's update was skipped for a non-finite gradient.
    pub skipped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerState {
    pub theta: Parameters,
    pub optimizer: Optimizer,
    pub round: usize,
    pub best_theta: Parameters,
    pub best_validation_cost: f64,
    pub best_round: usize,
}

#[derive(Clone, Debug)]
pub struct LearnOutcome {
    pub state: LearnerState,
    pub tracker: RegretTracker,
    pub history: Vec<RoundMetrics>,
    /// `theta_1 .. theta_m` (the parameters each round rolled in with).
    pub snapshots: Vec<Parameters>,
    /// `(round, parameters after that round)`.
    pub checkpoints: Vec<(usize, Parameters)>,
    /// `(round, mean validation cost)`.
    pub validation: Vec<(usize, f64)>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Uniform initialization in `[-scale, scale]`, seeded apart from the roll-in streams.
pub fn initial_parameters(dim: usize, scale: f64, seed: u64) -> Parameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let values = (0..dim)
        .map(|_| if scale > 0.0 { rng.gen_range(-scale..=scale) } else { 0.0 })
        .collect();
    Parameters::from_vec(values).expect("finite initialization")
}

/// Mean terminal cost of plain beam search decoding.
pub fn evaluate_cost<I: Instance>(theta: &Parameters, instances: &[I], k: usize) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::precondition("nothing to evaluate"));
    }
    let mut total = 0.0;
    for inst in instances {
        let scorer = LinearScorer::new(theta, inst)?;
        let terminal = beam_search(inst, k, |v| scorer.score(v))?;
        total += inst.completion_cost(terminal);
    }
    Ok(total / instances.len() as f64)
}

/// Evaluates the uniform mixture over `snapshots`: each instance is decoded
/// `draws` times with a uniformly drawn `theta_t`.
pub fn mixture_cost<I: Instance>(snapshots: &[Parameters], instances: &[I], k: usize, draws: usize, seed: u64) -> Result<f64> {
    if snapshots.is_empty() || instances.is_empty() || draws == 0 {
        return Err(Error::precondition("mixture evaluation needs snapshots, instances and draws"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for inst in instances {
        for _ in 0..draws {
            let theta = &snapshots[rng.gen_range(0..snapshots.len())];
            let scorer = LinearScorer::new(theta, inst)?;
            total += inst.completion_cost(beam_search(inst, k, |v| scorer.score(v))?);
        }
    }
    Ok(total / (instances.len() * draws) as f64)
}

/// Outcome of one learner round before the update.
pub struct RoundRecord {
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub final_cost: f64,
    pub cost_increases: usize,
    pub pure_rollin: Option<bool>,
    pub replay: Vec<ReplayStep>,
}

/// Rolls in on one instance with `theta` and sums loss and gradient over
/// the collected steps.
pub fn run_round<I: Instance>(
    inst: &I,
    theta: &Parameters,
    config: &LearnConfig,
    rng: &mut ChaCha8Rng,
    keep_replay: bool,
) -> Result<RoundRecord> {
    let scorer = LinearScorer::new(theta, inst)?;
    let traj = beam_trajectory(inst, inst, |v| scorer.score(v), config.k, config.strategy, rng)?;
    let mut loss = 0.0;
    let mut gradient = vec![0.0; theta.dim()];
    let mut replay = Vec::new();
    for step in traj.steps.iter() {
        let result = config.loss.evaluate(&step.scoring);
        loss += result.value;
        let features: Vec<FeatureVector> = step.candidates.iter().map(|&v| inst.features(v)).collect();
        accumulate_param_gradient(&result.grad_scores, &features, &mut gradient)?;
        if keep_replay {
            replay.push(ReplayStep {
                features,
                scoring: step.scoring.clone(),
            });
        }
    }
    Ok(RoundRecord {
        loss,
        gradient,
        final_cost: beam_cost(inst, traj.final_beam()),
        cost_increases: traj.cost_increase_count,
        pure_rollin: config.strategy.uses_learned_rollin().then_some(traj.pure_rollin),
        replay,
    })
}

/// Runs one online pass over `train`, validating on `validation` (or on
/// `train` when it is empty) and keeping the best parameters.
pub fn learn<I: Instance>(train: &[I], validation: &[I], config: &LearnConfig) -> Result<LearnOutcome> {
    config.validate()?;
    let first = train.first().ok_or_else(|| Error::precondition("training set is empty"))?;
    let dim = first.dim();
    if train.iter().chain(validation).any(|inst| inst.dim() != dim) {
        return Err(Error::config("instances disagree on the feature dimension"));
    }
    let validation = if validation.is_empty() { train } else { validation };
    let keep_replay = config.regret_every > 0;

    let theta = initial_parameters(dim, config.init_scale, config.seed);
    let theta = match config.param_bound {
        Some(b) => Parameters::from_vec(theta.as_slice().iter().map(|x| x.clamp(-b, b)).collect())?,
        None => theta,
    };
    let initial_cost = evaluate_cost(&theta, validation, config.k)?;
    let mut state = LearnerState {
        best_theta: theta.clone(),
        theta,
        optimizer: Optimizer::new(config.optimizer, dim, config.param_bound)?,
        round: 0,
        best_validation_cost: initial_cost,
        best_round: 0,
    };
    let mut tracker = RegretTracker {
        loss_bound: config.loss_bound,
        ..RegretTracker::default()
    };
    let mut history = Vec::with_capacity(train.len());
    let mut snapshots = Vec::new();
    let mut checkpoints = Vec::new();
    let mut validations = vec![(0, initial_cost)];

    for (index, inst) in train.iter().enumerate() {
        let t = index + 1;
        if config.keep_snapshots {
            snapshots.push(state.theta.clone());
        }
        let mut rng = trajectory_rng(config.seed, index as u64);
        let record = run_round(inst, &state.theta, config, &mut rng, keep_replay)?;
        let skipped = match state.optimizer.step(&state.theta, &record.gradient) {
            Ok(next) => {
                state.theta = next;
                false
            }
            Err(Error::NonFinite(what)) => {
                log::warn!("round {t}: non-finite {what}, update skipped");
                true
            }
            Err(e) => return Err(e),
        };
        state.round = t;
        tracker.losses.push(record.loss);
        tracker.costs.push(record.final_cost);
        tracker.pure_rollin.push(record.pure_rollin);
        if keep_replay {
            tracker.replay.push(record.replay);
        }

        let gamma_hat = if config.regret_every > 0 && (t % config.regret_every == 0 || t == train.len()) {
            let init = state.theta.clone();
            Some(empirical_regret(&tracker, config.loss, t, &init, config.param_bound, config.regret_iterations)?.gamma_hat)
        } else {
            None
        };
        history.push(RoundMetrics {
            round: t,
            surrogate_loss: record.loss,
            terminal_cost: record.final_cost,
            cost_increases: record.cost_increases,
            pure_rollin: record.pure_rollin,
            gamma_hat,
            alpha_hat: alpha_hat(&tracker),
            eta: azuma_eta(config.loss_bound, config.delta, t)?,
            skipped,
        });

        if config.checkpoint_every > 0 && t % config.checkpoint_every == 0 {
            checkpoints.push((t, state.theta.clone()));
        }
        if (config.validate_every > 0 && t % config.validate_every == 0) || t == train.len() {
            let cost = evaluate_cost(&state.theta, validation, config.k)?;
            validations.push((t, cost));
            if cost < state.best_validation_cost {
                state.best_validation_cost = cost;
                state.best_theta = state.theta.clone();
                state.best_round = t;
            }
        }
    }

    Ok(LearnOutcome {
        state,
        tracker,
        history,
        snapshots,
        checkpoints,
        validation: validations,
    })
}

/// Summed replayed loss of the first `m` rounds at `theta`, and its gradient.
fn replay_objective(replay: &[Vec<ReplayStep>], loss: LossKind, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut value = 0.0;
    let mut grad = vec![0.0; theta.len()];
    for round in replay {
        for step in round {
            let scores: Vec<f64> = step
                .features
                .iter()
                .map(|phi| phi.entries().iter().map(|&(i, x)| theta[i as usize] * x).sum())
                .collect();
            let input = step.scoring.with_scores(scores)?;
            let result = loss.evaluate(&input);
            value += result.value;
            accumulate_param_gradient(&result.grad_scores, &step.features, &mut grad)?;
        }
    }
    Ok((value, grad))
}

/// Best objective value found by projected, normalized subgradient descent from `start`.
fn minimize_replay(
    replay: &[Vec<ReplayStep>],
    loss: LossKind,
    start: Vec<f64>,
    bound: Option<f64>,
    iterations: usize,
) -> Result<f64> {
    let mut theta = start;
    let (mut best, mut grad) = replay_objective(replay, loss, &theta)?;
    let radius = bound.unwrap_or(10.0).max(1.0);
    for i in 1..=iterations {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 || best == 0.0 {
            break;
        }
        let eta = radius / (4.0 * (i as f64).sqrt());
        for (x, g) in theta.iter_mut().zip(&grad) {
            *x -= eta * g / norm;
            if let Some(b) = bound {
                *x = x.clamp(-b, b);
            }
        }
        let (value, g) = replay_objective(replay, loss, &theta)?;
        grad = g;
        if value < best {
            best = value;
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegretEstimate {
    /// `(1/m) sum_t l_t(theta_t) - epsilon_hat`.
    pub gamma_hat: f64,
    /// Comparator `min_theta (1/m) sum_t l_t(theta)` over the stored rounds.
    pub epsilon_hat: f64,
    /// False when the loss is non-convex and the minimum is heuristic.
    pub certified: bool,
}

/// Empirical regret over the first `m` recorded rounds. The comparator is
/// minimized over the frozen loss inputs, starting from `start` (and, for
/// non-convex losses, from two more restarts).
pub fn empirical_regret(
    tracker: &RegretTracker,
    loss: LossKind,
    m: usize,
    start: &Parameters,
    bound: Option<f64>,
    iterations: usize,
) -> Result<RegretEstimate> {
    if m == 0 || m > tracker.rounds() {
        return Err(Error::precondition(format!("cannot estimate regret over {m} of {} rounds", tracker.rounds())));
    }
    if tracker.replay.len() < m {
        return Err(Error::precondition("loss inputs were not stored for replay"));
    }
    let replay = &tracker.replay[..m];
    let mut starts = vec![start.as_slice().to_vec()];
    if !loss.is_convex() {
        starts.push(vec![0.0; start.dim()]);
        starts.push(initial_parameters(start.dim(), bound.unwrap_or(1.0).min(1.0), m as u64).as_slice().to_vec());
    }
    let mut comparator = f64::INFINITY;
    for s in starts {
        comparator = comparator.min(minimize_replay(replay, loss, s, bound, iterations)?);
    }
    let epsilon_hat = comparator / m as f64;
    let online = mean(&tracker.losses[..m]);
    Ok(RegretEstimate {
        gamma_hat: online - epsilon_hat,
        epsilon_hat,
        certified: loss.is_convex(),
    })
}

/// Fraction of non-oracle rounds with a pure roll-in; `None` if there are none.
pub fn alpha_hat(tracker: &RegretTracker) -> Option<f64> {
    let events: Vec<bool> = tracker.pure_rollin.iter().filter_map(|e| *e).collect();
    if events.is_empty() {
        None
    } else {
        Some(events.iter().filter(|&&e| e).count() as f64 / events.len() as f64)
    }
}

/// `u sqrt(2 ln(1/delta) / m)`.
pub fn azuma_eta(u: f64, delta: f64, m: usize) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::config(format!("delta {delta} outside (0, 1]")));
    }
    if m == 0 {
        return Err(Error::precondition("azuma_eta needs at least one round"));
    }
    if !(u >= 0.0) {
        return Err(Error::precondition("loss bound must be nonnegative"));
    }
    Ok(u * (2.0 * (1.0 / delta).ln() / m as f64).sqrt())
}

/// `mean l_t + u (1 - mean alpha) + 2 eta(delta, m)` for a stop or reset run.
pub fn stopreset_bound(tracker: &RegretTracker, delta: f64) -> Result<f64> {
    let m = tracker.rounds();
    let alpha = alpha_hat(tracker).ok_or_else(|| Error::precondition("no learned roll-in rounds recorded"))?;
    let u = tracker.loss_bound;
    Ok(tracker.mean_loss() + u * (1.0 - alpha) + 2.0 * azuma_eta(u, delta, m)?)
}

/// Bound on the loss summed over one trajectory of `depth` steps.
///
/// `score_clip` bounds `|s|`, so score differences are at most twice it;
/// `n_max` bounds the neighborhood size and `cost_range` the spread of
/// candidate costs.
pub fn loss_bound_u(loss: LossKind, depth: usize, n_max: usize, k: usize, score_clip: f64, cost_range: f64) -> f64 {
    let c2 = 2.0 * score_clip;
    let n = n_max.max(1) as f64;
    let per_step = match loss {
        LossKind::PerceptronFirst | LossKind::PerceptronLast => c2,
        LossKind::MarginLast => 1.0 + c2,
        LossKind::CostSensitiveMarginLast | LossKind::UpperBound => cost_range * (1.0 + c2),
        LossKind::LogBeam => c2 + ((k + 1) as f64).ln(),
        LossKind::LogNeighbors => c2 + n.ln(),
        LossKind::CostSensitiveMarginBeam => c2 + cost_range,
        LossKind::SoftmaxMarginBeam => c2 + cost_range + (k.max(1) as f64).ln(),
        LossKind::WeightedPairs(_) => n * n * cost_range * (c2 + 1.0),
    };
    per_step * depth as f64
}

/// Score clip implied by a parameter box and a feature `l1` bound.
pub fn score_clip(param_bound: Option<f64>, max_feature_l1: f64) -> f64 {
    match param_bound {
        Some(b) => (b * max_feature_l1).min(SCORE_CLIP),
        None => SCORE_CLIP,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{generate_dataset, FeatureHasher, HammingSpace, SequenceTask};
    use approx::assert_abs_diff_eq;

    #[test]
    fn ogd_one_step() {
        let mut opt = Optimizer::new(OptimizerConfig::Ogd { step_scale: 1.0 }, 2, None).unwrap();
        let next = optimizer_update(&mut opt, &Parameters::zeros(2), &[1.0, -2.0]).unwrap();
        assert_eq!(next.as_slice(), &[-1.0, 2.0]);
        let again = opt.step(&next, &[0.0, 0.0]).unwrap();
        assert_eq!(again, next);
        // t = 4: step 1/2
        opt.step(&again, &[0.0, 0.0]).unwrap();
        let p = opt.step(&again, &[2.0, 2.0]).unwrap();
        assert_eq!(p.as_slice(), &[-2.0, 1.0]);
    }

    #[test]
    fn adam_constant_gradient() {
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1), 2, None).unwrap();
        let g = [3.0, -0.5];
        let p1 = opt.step(&Parameters::zeros(2), &g).unwrap();
        let p2 = opt.step(&p1, &g).unwrap();
        // bias correction makes both steps -step * sign(g) up to epsilon
        assert_abs_diff_eq!(p1.as_slice()[0], -0.1, epsilon = 1e-8);
        assert_abs_diff_eq!(p1.as_slice()[1], 0.1, epsilon = 1e-7);
        assert_abs_diff_eq!(p2.as_slice()[0], -0.2, epsilon = 1e-8);
        assert_abs_diff_eq!(p2.as_slice()[1], 0.2, epsilon = 1e-7);
    }

    #[test]
    fn box_projection_and_bad_gradients() {
        let mut opt = Optimizer::new(OptimizerConfig::Ogd { step_scale: 5.0 }, 1, Some(2.0)).unwrap();
        assert_eq!(opt.step(&Parameters::zeros(1), &[1.0]).unwrap().as_slice(), &[-2.0]);
        assert!(matches!(opt.step(&Parameters::zeros(1), &[f64::NAN]), Err(Error::NonFinite(_))));
        assert!(opt.step(&Parameters::zeros(1), &[1.0, 2.0]).is_err());
        assert!(Optimizer::new(OptimizerConfig::Ogd { step_scale: 0.0 }, 1, None).is_err());
    }

    #[test]
    fn eta_values() {
        assert_eq!(azuma_eta(3.0, 1.0, 10).unwrap(), 0.0);
        assert_abs_diff_eq!(azuma_eta(1.0, 0.05, 100).unwrap(), 0.244_774, epsilon = 1e-5);
        assert_eq!(azuma_eta(2.0, 0.05, 100).unwrap(), 2.0 * azuma_eta(1.0, 0.05, 100).unwrap());
        assert!(azuma_eta(1.0, 0.0, 10).is_err());
        assert!(azuma_eta(1.0, 1.5, 10).is_err());
    }

    fn tracker(losses: &[f64], pure: &[Option<bool>], u: f64) -> RegretTracker {
        RegretTracker {
            losses: losses.to_vec(),
            costs: vec![0.0; losses.len()],
            pure_rollin: pure.to_vec(),
            loss_bound: u,
            replay: Vec::new(),
        }
    }

    #[test]
    fn bound_terms() {
        let t = tracker(&[0.0; 4], &[Some(false); 4], 2.0);
        let eta = azuma_eta(2.0, 0.1, 4).unwrap();
        assert_eq!(stopreset_bound(&t, 0.1).unwrap(), 2.0 + 2.0 * eta);

        let t = tracker(&[1.0, 3.0, 0.5, 0.5], &[Some(true), Some(false), Some(true), Some(true)], 4.0);
        let expected = 1.25 + 4.0 * (1.0 - 0.75) + 2.0 * 4.0 * (2.0 * (1.0f64 / 0.2).ln() / 4.0).sqrt();
        assert!((stopreset_bound(&t, 0.2).unwrap() - expected).abs() <= 1e-12);

        let t = tracker(&[1.0, 1.0], &[Some(true), Some(true)], 1.0);
        assert_eq!(stopreset_bound(&t, 0.5).unwrap(), 1.0 + 2.0 * azuma_eta(1.0, 0.5, 2).unwrap());
        assert_eq!(alpha_hat(&tracker(&[0.0], &[None], 1.0)), None);
    }

    #[test]
    fn closed_form_loss_bounds() {
        assert_eq!(loss_bound_u(LossKind::PerceptronFirst, 4, 6, 2, 3.0, 4.0), 2.0 * 3.0 * 4.0);
        for loss in [
            LossKind::CostSensitiveMarginLast,
            LossKind::UpperBound,
            LossKind::WeightedPairs(crate::losses::PairMode::All),
        ] {
            assert_eq!(loss_bound_u(loss, 5, 6, 2, 3.0, 0.0), 0.0);
        }
        assert_eq!(
            loss_bound_u(LossKind::WeightedPairs(crate::losses::PairMode::Hybrid), 3, 4, 2, 1.0, 3.0),
            3.0 * 16.0 * 3.0 * 3.0
        );
        assert_eq!(score_clip(Some(10.0), 3.0), 30.0);
        assert_eq!(score_clip(None, 3.0), SCORE_CLIP);
    }

    /// Wraps a Hamming space and reports no features at all.
    struct Blank(HammingSpace);

    impl Space for Blank {
        fn initial(&self) -> crate::search_space::NodeId {
            self.0.initial()
        }
        fn neighbors(&self, v: crate::search_space::NodeId) -> Vec<crate::search_space::NodeId> {
            self.0.neighbors(v)
        }
        fn is_terminal(&self, v: crate::search_space::NodeId) -> bool {
            self.0.is_terminal(v)
        }
        fn depth(&self) -> usize {
            self.0.depth()
        }
    }
    impl CompletionCosts for Blank {
        fn completion_cost(&self, v: crate::search_space::NodeId) -> f64 {
            self.0.completion_cost(v)
        }
    }
    impl FeatureMap for Blank {
        fn dim(&self) -> usize {
            8
        }
        fn features(&self, _: crate::search_space::NodeId) -> FeatureVector {
            FeatureVector::empty()
        }
    }

    fn spaces(task: &SequenceTask, m: usize, seed: u64) -> Vec<HammingSpace> {
        let hasher = FeatureHasher::new(256, 1).unwrap();
        generate_dataset(task, m, seed)
            .unwrap()
            .iter()
            .map(|ex| HammingSpace::new(ex, task.num_labels(), hasher).unwrap())
            .collect()
    }

    #[test]
    fn zero_features_never_move() {
        let task = SequenceTask::identity(3, 3, 0.1).unwrap();
        let data: Vec<Blank> = spaces(&task, 30, 2).into_iter().map(Blank).collect();
        let config = LearnConfig::new(LossKind::LogNeighbors, Strategy::Continue, 2);
        let out = learn(&data, &[], &config).unwrap();
        assert_eq!(out.state.theta, initial_parameters(8, 0.01, 0));
        let costs: Vec<f64> = out.validation.iter().map(|v| v.1).collect();
        assert!(costs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn oracle_rounds_have_no_cost_increase() {
        let task = SequenceTask::random(6, 3, 4, 0.3, 5).unwrap();
        let data = spaces(&task, 40, 3);
        let config = LearnConfig::new(LossKind::MarginLast, Strategy::Oracle, 2);
        let out = learn(&data, &[], &config).unwrap();
        assert!(out.history.iter().all(|r| r.cost_increases == 0 && r.pure_rollin.is_none()));
        assert_eq!(alpha_hat(&out.tracker), None);
    }

    #[test]
    fn separable_task_learns_to_zero_increases() {
        let task = SequenceTask::identity(2, 2, 0.0).unwrap();
        let data = spaces(&task, 500, 7);
        let config = LearnConfig::new(LossKind::PerceptronFirst, Strategy::Continue, 1);
        let out = learn(&data, &[], &config).unwrap();
        let tail = &out.history[400..];
        assert!(tail.iter().all(|r| r.cost_increases == 0));
        assert_eq!(out.state.best_validation_cost, 0.0);
    }

    #[test]
    fn learning_is_deterministic() {
        let task = SequenceTask::random(5, 3, 3, 0.2, 1).unwrap();
        let data = spaces(&task, 60, 9);
        let mut config = LearnConfig::new(LossKind::UpperBound, Strategy::Interpolated(0.3), 2);
        config.regret_every = 20;
        let a = learn(&data, &[], &config).unwrap();
        let b = learn(&data, &[], &config).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.state.theta, b.state.theta);
    }

    #[test]
    fn regret_of_zero_losses_is_zero() {
        let t = tracker(&[0.0; 3], &[None; 3], 1.0);
        let t = RegretTracker {
            replay: vec![Vec::new(); 3],
            ..t
        };
        let r = empirical_regret(&t, LossKind::UpperBound, 3, &Parameters::zeros(2), None, 10).unwrap();
        assert_eq!(r.gamma_hat, 0.0);
        assert_eq!(r.epsilon_hat, 0.0);
        assert!(r.certified);
    }

    #[test]
    fn separable_comparator_reaches_zero() {
        let task = SequenceTask::identity(3, 3, 0.0).unwrap();
        let data = spaces(&task, 80, 4);
        let mut config = LearnConfig::new(LossKind::UpperBound, Strategy::Continue, 2);
        config.regret_every = 80;
        let out = learn(&data, &[], &config).unwrap();
        let r = empirical_regret(&out.tracker, config.loss, 80, &out.state.theta, config.param_bound, 500).unwrap();
        assert!(r.epsilon_hat <= 1e-4, "epsilon_hat {}", r.epsilon_hat);
    }
}
