//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use beamlearn::collection::Strategy;
use beamlearn::learner::{loss_bound_u, score_clip, LearnConfig, OptimizerConfig};
use beamlearn::losses::LossKind;
use beamlearn::task::{
    garden_path_examples, generate_dataset, read_jsonl, Example, FeatureHasher, HammingSpace, SequenceTask,
};

#[derive(Clone, Debug, PartialEq)]
pub enum TaskKind {
    Identity,
    Random,
    GardenPath,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: TaskKind,
    pub vocab_size: usize,
    pub num_labels: usize,
    pub length: usize,
    pub noise: f64,
    pub task_seed: u64,
    pub data: Option<PathBuf>,
    pub m: usize,
    pub validation_fraction: f64,
    pub feature_dim: usize,
    pub hash_seed: u64,

    pub loss: LossKind,
    pub strategy: Strategy,
    pub k: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub init_scale: f64,
    pub param_bound: Option<f64>,
    pub delta: f64,
    pub validate_every: usize,
    pub regret_every: usize,
    pub regret_iterations: usize,
    pub checkpoint_every: usize,
    pub mixture_draws: usize,
    pub record_wallclock: bool,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskKind::Random,
            vocab_size: 8,
            num_labels: 3,
            length: 4,
            noise: 0.1,
            task_seed: 1,
            data: None,
            m: 200,
            validation_fraction: 0.2,
            feature_dim: 4096,
            hash_seed: 0,
            loss: LossKind::UpperBound,
            strategy: Strategy::Continue,
            k: 2,
            optimizer: OptimizerConfig::Ogd { step_scale: 0.5 },
            seed: 0,
            init_scale: 0.01,
            param_bound: Some(10.0),
            delta: 0.05,
            validate_every: 50,
            regret_every: 50,
            regret_iterations: 200,
            checkpoint_every: 100,
            mixture_draws: 3,
            record_wallclock: false,
            out: PathBuf::from("runs/default"),
        }
    }
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
        let key = key.trim().to_string();
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            bail!("line {}: duplicate key `{key}`", n + 1);
        }
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| anyhow!("bad value `{value}` for `{key}`"))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        let pairs = parse_pairs(text)?;
        let mut optimizer = "ogd".to_string();
        let (mut step_scale, mut adam_step, mut beta1, mut beta2, mut epsilon) = (0.5, 0.05, 0.9, 0.999, 1e-8);
        for (key, v) in &pairs {
            let v = v.as_str();
            match key.as_str() {
                "task" => {
                    c.task = match v {
                        "identity" => TaskKind::Identity,
                        "random" => TaskKind::Random,
                        "garden_path" => TaskKind::GardenPath,
                        _ => bail!("unknown task `{v}`"),
                    }
                }
                "vocab_size" => c.vocab_size = num(key, v)?,
                "num_labels" => c.num_labels = num(key, v)?,
                "length" => c.length = num(key, v)?,
                "noise" => c.noise = num(key, v)?,
                "task_seed" => c.task_seed = num(key, v)?,
                "data" => c.data = Some(PathBuf::from(v)),
                "m" => c.m = num(key, v)?,
                "validation_fraction" => c.validation_fraction = num(key, v)?,
                "feature_dim" => c.feature_dim = num(key, v)?,
                "hash_seed" => c.hash_seed = num(key, v)?,
                "loss" => c.loss = v.parse()?,
                "strategy" => c.strategy = v.parse()?,
                "k" => c.k = num(key, v)?,
                "optimizer" => optimizer = v.to_string(),
                "step_scale" => step_scale = num(key, v)?,
                "adam_step" => adam_step = num(key, v)?,
                "adam_beta1" => beta1 = num(key, v)?,
                "adam_beta2" => beta2 = num(key, v)?,
                "adam_epsilon" => epsilon = num(key, v)?,
                "seed" => c.seed = num(key, v)?,
                "init_scale" => c.init_scale = num(key, v)?,
                "param_bound" => {
                    c.param_bound = if v == "none" { None } else { Some(num(key, v)?) };
                }
                "delta" => c.delta = num(key, v)?,
                "validate_every" => c.validate_every = num(key, v)?,
                "regret_every" => c.regret_every = num(key, v)?,
                "regret_iterations" => c.regret_iterations = num(key, v)?,
                "checkpoint_every" => c.checkpoint_every = num(key, v)?,
                "mixture_draws" => c.mixture_draws = num(key, v)?,
                "record_wallclock" => c.record_wallclock = num(key, v)?,
                "out" => c.out = PathBuf::from(v),
                _ => bail!("unknown config key `{key}`"),
            }
        }
        c.optimizer = match optimizer.as_str() {
            "ogd" => OptimizerConfig::Ogd { step_scale },
            "adam" => OptimizerConfig::Adam {
                step: adam_step,
                beta1,
                beta2,
                epsilon,
            },
            other => bail!("unknown optimizer `{other}`"),
        };
        if c.task == TaskKind::GardenPath {
            c.vocab_size = 3;
            c.num_labels = 4;
            c.length = 2;
        }
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        if self.k == 0 {
            bail!("k must be at least 1");
        }
        if self.m == 0 {
            bail!("m must be at least 1");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            bail!("validation_fraction must be in [0, 1)");
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            bail!("delta must be in (0, 1]");
        }
        self.learn_config().validate()?;
        Ok(())
    }

    pub fn hasher(&self) -> Result<FeatureHasher> {
        Ok(FeatureHasher::new(self.feature_dim, self.hash_seed)?)
    }

    /// `(train, validation)` examples. The last `validation_fraction` of the
    /// data is held out; the garden-path task validates on its two sentences.
    pub fn examples(&self) -> Result<(Vec<Example>, Vec<Example>)> {
        if self.task == TaskKind::GardenPath && self.data.is_none() {
            let pair = garden_path_examples();
            let train = (0..self.m).map(|i| pair[i % 2].clone()).collect();
            return Ok((train, pair));
        }
        let all = match &self.data {
            Some(path) => {
                let data = read_jsonl(path).with_context(|| format!("cannot read dataset {}", path.display()))?;
                for ex in &data {
                    ex.validate(self.vocab_size, self.num_labels)?;
                }
                data
            }
            None => {
                let task = self.sequence_task()?;
                let total = ((self.m as f64) / (1.0 - self.validation_fraction)).round() as usize;
                generate_dataset(&task, total.max(self.m), self.task_seed)?
            }
        };
        let held = ((all.len() as f64) * self.validation_fraction).round() as usize;
        let split = all.len() - held.min(all.len() - 1);
        let (train, validation) = all.split_at(split);
        if train.is_empty() {
            bail!("dataset is empty");
        }
        Ok((train.to_vec(), validation.to_vec()))
    }

    pub fn sequence_task(&self) -> Result<SequenceTask> {
        Ok(match self.task {
            TaskKind::Identity => SequenceTask::identity(self.num_labels, self.length, self.noise)?,
            TaskKind::Random => {
                SequenceTask::random(self.vocab_size, self.num_labels, self.length, self.noise, self.task_seed)?
            }
            TaskKind::GardenPath => bail!("the garden-path task has a fixed dataset"),
        })
    }

    pub fn spaces(&self, examples: &[Example]) -> Result<Vec<HammingSpace>> {
        let hasher = self.hasher()?;
        examples
            .iter()
            .map(|ex| Ok(HammingSpace::new(ex, self.num_labels, hasher)?))
            .collect()
    }

    /// Trajectory loss bound for the configured loss on the Hamming task.
    pub fn loss_bound(&self, length: usize) -> f64 {
        // three indicator features per labeled position
        let clip = score_clip(self.param_bound, 3.0 * length as f64);
        loss_bound_u(self.loss, length, self.k * self.num_labels, self.k, clip, length as f64)
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            loss: self.loss,
            strategy: self.strategy,
            k: self.k,
            optimizer: self.optimizer,
            seed: self.seed,
            init_scale: self.init_scale,
            param_bound: self.param_bound,
            loss_bound: self.loss_bound(self.length),
            delta: self.delta,
            validate_every: self.validate_every,
            regret_every: self.regret_every,
            regret_iterations: self.regret_iterations,
            keep_snapshots: self.mixture_draws > 0,
            checkpoint_every: self.checkpoint_every,
        }
    }
}

/// A named loss/strategy/width combination.
#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub strategy: Strategy,
    /// `None` keeps the configured loss.
    pub loss: Option<LossKind>,
    pub width: Width,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Width {
    One,
    /// The configured width, raised to at least 2.
    Beam,
    Configured,
}

pub const PRESET_NAMES: [&str; 8] = [
    "early_update",
    "laso_perceptron",
    "laso_margin",
    "bso",
    "globally_normalized",
    "log_likelihood",
    "dagger",
    "ours",
];

pub fn preset(name: &str) -> Result<Preset> {
    use LossKind::*;
    let (strategy, loss, width) = match name {
        "early_update" => (Strategy::Stop, Some(PerceptronFirst), Width::Beam),
        "laso_perceptron" => (Strategy::Reset, Some(PerceptronFirst), Width::Beam),
        "laso_margin" => (Strategy::Reset, Some(MarginLast), Width::Beam),
        "bso" => (Strategy::Reset, Some(CostSensitiveMarginLast), Width::Beam),
        "globally_normalized" => (Strategy::Stop, Some(LogBeam), Width::Beam),
        "log_likelihood" => (Strategy::Oracle, Some(LogNeighbors), Width::One),
        "dagger" => (Strategy::Continue, Some(LogNeighbors), Width::One),
        "ours" => (Strategy::Continue, None, Width::Configured),
        _ => bail!("unknown preset `{name}` (known: {})", PRESET_NAMES.join(", ")),
    };
    let name = PRESET_NAMES.iter().find(|n| **n == name).unwrap();
    Ok(Preset {
        name,
        strategy,
        loss,
        width,
    })
}

impl Preset {
    pub fn apply(&self, config: &RunConfig) -> RunConfig {
        let mut c = config.clone();
        c.strategy = self.strategy;
        if let Some(loss) = self.loss {
            c.loss = loss;
        }
        c.k = match self.width {
            Width::One => 1,
            Width::Beam => config.k.max(2),
            Width::Configured => config.k,
        };
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let c = RunConfig::parse(
            "# smoke\nm = 50 # rounds\nlength=4\nk = 2\nloss = wp_hybrid\nstrategy = interp:0.3\noptimizer = adam\nadam_step = 0.1\nparam_bound = none\n",
        )
        .unwrap();
        assert_eq!(c.m, 50);
        assert_eq!(c.loss.name(), "wp_hybrid");
        assert_eq!(c.strategy, Strategy::Interpolated(0.3));
        assert!(matches!(c.optimizer, OptimizerConfig::Adam { step, .. } if step == 0.1));
        assert_eq!(c.param_bound, None);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::parse("k = 0").is_err());
        assert!(RunConfig::parse("loss = hinge").is_err());
        assert!(RunConfig::parse("colour = red").is_err());
        assert!(RunConfig::parse("m = 3\nm = 4").is_err());
        assert!(RunConfig::parse("strategy = interp:2").is_err());
        assert!(RunConfig::parse("just words").is_err());
    }

    #[test]
    fn table_presets() {
        let base = RunConfig::parse("k = 1\nloss = wp_all").unwrap();
        let laso = preset("laso_perceptron").unwrap().apply(&base);
        assert_eq!((laso.strategy, laso.loss, laso.k), (Strategy::Reset, LossKind::PerceptronFirst, 2));
        let dagger = preset("dagger").unwrap().apply(&base);
        assert_eq!((dagger.strategy, dagger.loss, dagger.k), (Strategy::Continue, LossKind::LogNeighbors, 1));
        let ours = preset("ours").unwrap().apply(&base);
        assert_eq!((ours.strategy, ours.loss), (Strategy::Continue, base.loss));
        assert!(preset("searn").is_err());
    }

    #[test]
    fn split_holds_out_the_tail() {
        let c = RunConfig::parse("m = 40\nvalidation_fraction = 0.2").unwrap();
        let (train, validation) = c.examples().unwrap();
        assert_eq!(train.len(), 40);
        assert_eq!(validation.len(), 10);
    }
}
