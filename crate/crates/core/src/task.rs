//! Synthetic sequence labeling with Hamming cost.
//!
//! Gold label chains come from a Markov chain, tokens from per-label
//! emission distributions, and with probability `noise` a token is emitted
//! by a different label instead. Each example induces a label-prefix tree
//! ([`HammingSpace`]) whose completion cost is the number of mismatches in
//! the prefix.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{FeatureMap, FeatureVector};
use crate::search_space::{CompletionCosts, NodeId, Space};

/// Generative model for labeled token sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceTask {
    vocab_size: usize,
    num_labels: usize,
    length: usize,
    /// `emission[label][token]`, rows normalized.
    emission: Vec<Vec<f64>>,
    /// `transition[from][to]`, rows normalized.
    transition: Vec<Vec<f64>>,
    noise: f64,
}

fn normalize_rows(name: &str, rows: Vec<Vec<f64>>, width: usize) -> Result<Vec<Vec<f64>>> {
    rows.into_iter()
        .enumerate()
        .map(|(r, row)| {
            if row.len() != width {
                return Err(Error::config(format!("{name} row {r} has {} entries, expected {width}", row.len())));
            }
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::config(format!("{name} row {r} has a negative or non-finite weight")));
            }
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                return Err(Error::config(format!("{name} row {r} sums to zero")));
            }
            Ok(row.into_iter().map(|w| w / total).collect())
        })
        .collect()
}

impl SequenceTask {
    pub fn new(
        vocab_size: usize,
        num_labels: usize,
        length: usize,
        emission: Vec<Vec<f64>>,
        transition: Vec<Vec<f64>>,
        noise: f64,
    ) -> Result<Self> {
        if num_labels < 2 {
            return Err(Error::config("a sequence task needs at least two labels"));
        }
        if length == 0 {
            return Err(Error::config("sequence length must be at least 1"));
        }
        if vocab_size == 0 {
            return Err(Error::config("vocabulary must be nonempty"));
        }
        if !(0.0..1.0).contains(&noise) {
            return Err(Error::config(format!("noise {noise} outside [0, 1)")));
        }
        if emission.len() != num_labels || transition.len() != num_labels {
            return Err(Error::config("emission and transition tables need one row per label"));
        }
        Ok(SequenceTask {
            vocab_size,
            num_labels,
            length,
            emission: normalize_rows("emission", emission, vocab_size)?,
            transition: normalize_rows("transition", transition, num_labels)?,
            noise,
        })
    }

    /// Token `y` is emitted by label `y`; label transitions are uniform.
    pub fn identity(num_labels: usize, length: usize, noise: f64) -> Result<Self> {
        let emission = (0..num_labels)
            .map(|y| (0..num_labels).map(|t| if t == y { 1.0 } else { 0.0 }).collect())
            .collect();
        let transition = vec![vec![1.0; num_labels]; num_labels];
        Self::new(num_labels, num_labels, length, emission, transition, noise)
    }

    /// Random tables: each label prefers the tokens congruent to it modulo
    /// `num_labels`, and transitions favor staying on the same label.
    pub fn random(vocab_size: usize, num_labels: usize, length: usize, noise: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emission = (0..num_labels)
            .map(|y| {
                (0..vocab_size)
                    .map(|t| if t % num_labels == y { 5.0 } else { 0.0 } + rng.gen::<f64>())
                    .collect()
            })
            .collect();
        let transition = (0..num_labels)
            .map(|y| {
                (0..num_labels)
                    .map(|z| if z == y { 2.0 } else { 0.0 } + 0.5 + rng.gen::<f64>())
                    .collect()
            })
            .collect();
        Self::new(vocab_size, num_labels, length, emission, transition, noise)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn emission(&self) -> &[Vec<f64>] {
        &self.emission
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    /// Stationary distribution of the label chain (power iteration).
    pub fn stationary(&self) -> Vec<f64> {
        let k = self.num_labels;
        let mut p = vec![1.0 / k as f64; k];
        for _ in 0..10_000 {
            let mut next = vec![0.0; k];
            for (from, row) in self.transition.iter().enumerate() {
                for (to, w) in row.iter().enumerate() {
                    next[to] += p[from] * w;
                }
            }
            let delta: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
            p = next;
            if delta < 1e-15 {
                break;
            }
        }
        p
    }
}

/// One labeled sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub tokens: Vec<usize>,
    pub labels: Vec<usize>,
}

impl Example {
    pub fn validate(&self, vocab_size: usize, num_labels: usize) -> Result<()> {
        if self.tokens.len() != self.labels.len() || self.tokens.is_empty() {
            return Err(Error::config("example tokens and labels must be nonempty and equally long"));
        }
        if self.tokens.iter().any(|&t| t >= vocab_size) {
            return Err(Error::config(format!("token out of range for vocabulary of {vocab_size}")));
        }
        if self.labels.iter().any(|&y| y >= num_labels) {
            return Err(Error::config(format!("label out of range for {num_labels} labels")));
        }
        Ok(())
    }
}

/// Samples `m` examples; identical seeds give identical datasets.
pub fn generate_dataset(task: &SequenceTask, m: usize, seed: u64) -> Result<Vec<Example>> {
    if m == 0 {
        return Err(Error::precondition("dataset size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = |w: &[f64]| WeightedIndex::new(w).map_err(|e| Error::config(e.to_string()));
    let start = dist(&task.stationary())?;
    let step: Vec<WeightedIndex<f64>> = task.transition.iter().map(|r| dist(r)).collect::<Result<_>>()?;
    let emit: Vec<WeightedIndex<f64>> = task.emission.iter().map(|r| dist(r)).collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let mut labels: Vec<usize> = Vec::with_capacity(task.length);
        let mut tokens = Vec::with_capacity(task.length);
        for i in 0..task.length {
            let y: usize = if i == 0 {
                start.sample(&mut rng)
            } else {
                step[labels[i - 1]].sample(&mut rng)
            };
            let mut source = y;
            if rng.gen::<f64>() < task.noise {
                // any label but the true one
                source = rng.gen_range(0..task.num_labels - 1);
                if source >= y {
                    source += 1;
                }
            }
            labels.push(y);
            tokens.push(emit[source].sample(&mut rng));
        }
        out.push(Example { tokens, labels });
    }
    Ok(out)
}

/// Two sentence types sharing an ambiguous first token: `A X` tagged `(0, 2)`
/// and `A Y` tagged `(1, 3)`. Tokens: `A = 0`, `X = 1`, `Y = 2`; 4 labels.
/// Only the second token tells the first label apart.
pub fn garden_path_examples() -> Vec<Example> {
    vec![
        Example {
            tokens: vec![0, 1],
            labels: vec![0, 2],
        },
        Example {
            tokens: vec![0, 2],
            labels: vec![1, 3],
        },
    ]
}

pub fn write_jsonl(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut out, ex)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes the sequence features into `dim` buckets.
///
/// Features of labeling position `j` with `y_j`: the label alone,
/// the label bigram `(y_{j-1}, y_j)` (with a start symbol at `j = 1`) and
/// the label/token pair `(y_j, x_j)`. All are indicators.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureHasher {
    pub dim: usize,
    pub seed: u64,
}

impl FeatureHasher {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("feature dimension must be at least 1"));
        }
        Ok(FeatureHasher { dim, seed })
    }

    fn bucket(&self, kind: u64, a: u64, b: u64) -> u32 {
        let h = mix64(mix64(mix64(self.seed ^ kind) ^ a) ^ b);
        (h % self.dim as u64) as u32
    }

    /// Feature vector of a labeling step.
    pub fn step_features(&self, label: usize, prev: Option<usize>, token: usize) -> FeatureVector {
        let prev = prev.map_or(u64::MAX, |p| p as u64);
        let entries = vec![
            (self.bucket(1, label as u64, 0), 1.0),
            (self.bucket(2, prev, label as u64), 1.0),
            (self.bucket(3, label as u64, token as u64), 1.0),
        ];
        FeatureVector::new(entries, self.dim).expect("buckets are reduced modulo dim")
    }
}

/// The label-prefix tree of one example.
///
/// A node at depth `j` holding labels `y_1..y_j` has id
/// `sum_{i<j} K^i + sum_i y_i K^(j-i)`, so within a depth ids follow the
/// lexicographic order of the label sequences.
#[derive(Clone, Debug)]
pub struct HammingSpace {
    tokens: Vec<usize>,
    gold: Vec<usize>,
    num_labels: usize,
    /// `offsets[j]` is the id of the first node at depth `j`.
    offsets: Vec<u64>,
    hasher: FeatureHasher,
}

impl HammingSpace {
    pub fn new(example: &Example, num_labels: usize, hasher: FeatureHasher) -> Result<Self> {
        if num_labels < 2 {
            return Err(Error::config("a sequence task needs at least two labels"));
        }
        if example.labels.iter().any(|&y| y >= num_labels) || example.tokens.len() != example.labels.len() {
            return Err(Error::config("example does not match the label set"));
        }
        if example.labels.is_empty() {
            return Err(Error::config("examples must be nonempty"));
        }
        let k = num_labels as u64;
        let mut offsets = vec![0u64];
        let mut layer = 1u64;
        for _ in 0..=example.labels.len() {
            let next = offsets
                .last()
                .unwrap()
                .checked_add(layer)
                .ok_or_else(|| Error::config("label-prefix tree too large for 64-bit node ids"))?;
            offsets.push(next);
            layer = layer
                .checked_mul(k)
                .ok_or_else(|| Error::config("label-prefix tree too large for 64-bit node ids"))?;
        }
        Ok(HammingSpace {
            tokens: example.tokens.clone(),
            gold: example.labels.clone(),
            num_labels,
            offsets,
            hasher,
        })
    }

    pub fn length(&self) -> usize {
        self.gold.len()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// `(depth, index within the depth)`.
    fn locate(&self, v: NodeId) -> (usize, u64) {
        let depth = self.offsets.partition_point(|&o| o <= v.0) - 1;
        (depth, v.0 - self.offsets[depth])
    }

    /// The label sequence a node stands for.
    pub fn labels(&self, v: NodeId) -> Vec<usize> {
        let (depth, mut local) = self.locate(v);
        let k = self.num_labels as u64;
        let mut out = vec![0; depth];
        for slot in out.iter_mut().rev() {
            *slot = (local % k) as usize;
            local /= k;
        }
        out
    }

    /// Node id of a label sequence.
    pub fn node(&self, labels: &[usize]) -> NodeId {
        let k = self.num_labels as u64;
        let local = labels.iter().fold(0u64, |acc, &y| acc * k + y as u64);
        NodeId(self.offsets[labels.len()] + local)
    }

    /// Largest l1 norm of a node's features.
    pub fn max_feature_l1(&self) -> f64 {
        3.0 * self.length() as f64
    }

    /// Hamming distance of a complete labeling to the gold labels.
    pub fn terminal_cost(&self, v: NodeId) -> Option<f64> {
        let (depth, _) = self.locate(v);
        (depth == self.length()).then(|| self.completion_cost(v))
    }
}

impl Space for HammingSpace {
    fn initial(&self) -> NodeId {
        NodeId(0)
    }

    fn neighbors(&self, v: NodeId) -> Vec<NodeId> {
        let (depth, local) = self.locate(v);
        if depth >= self.length() {
            return Vec::new();
        }
        let k = self.num_labels as u64;
        let first = self.offsets[depth + 1] + local * k;
        (0..k).map(|y| NodeId(first + y)).collect()
    }

    fn is_terminal(&self, v: NodeId) -> bool {
        self.locate(v).0 >= self.length()
    }

    fn depth(&self) -> usize {
        self.length()
    }
}

impl CompletionCosts for HammingSpace {
    /// Mismatches in the prefix; the gold continuation adds none.
    fn completion_cost(&self, v: NodeId) -> f64 {
        self.labels(v)
            .iter()
            .zip(&self.gold)
            .filter(|(y, g)| y != g)
            .count() as f64
    }
}

impl FeatureMap for HammingSpace {
    fn dim(&self) -> usize {
        self.hasher.dim
    }

    /// Step features summed over the prefix, so a node scores its whole
    /// labeling rather than its last decision.
    fn features(&self, v: NodeId) -> FeatureVector {
        let labels = self.labels(v);
        let mut entries = Vec::with_capacity(3 * labels.len());
        for (j, &y) in labels.iter().enumerate() {
            let prev = j.checked_sub(1).map(|i| labels[i]);
            entries.extend_from_slice(self.hasher.step_features(y, prev, self.tokens[j]).entries());
        }
        FeatureVector::new(entries, self.hasher.dim).expect("buckets are reduced modulo dim")
    }
}
