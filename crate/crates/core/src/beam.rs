//! The beam search space: beams, neighborhood expansion, beam policies,
//! decoding and beam costs.
//!
//! Every ordering here is "descending score, then ascending [`NodeId`]", so
//! policies are deterministic even when scores tie.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search_space::{CompletionCosts, NodeId, Space};

/// An ordered set of at most `k` distinct search nodes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Beam {
    members: Vec<NodeId>,
}

impl Beam {
    /// The initial beam `{v_(0)}`.
    pub fn initial(space: &impl Space) -> Self {
        Beam {
            members: vec![space.initial()],
        }
    }

    pub fn singleton(v: NodeId) -> Self {
        Beam { members: vec![v] }
    }

    /// Members must be nonempty and distinct.
    pub fn from_members(members: Vec<NodeId>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::precondition("a beam needs at least one member"));
        }
        let mut sorted = members.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::precondition("beam members must be distinct"));
        }
        Ok(Beam { members })
    }

    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// A terminal beam is a singleton holding a terminal node.
    pub fn is_terminal(&self, space: &impl Space) -> bool {
        self.members.len() == 1 && space.is_terminal(self.members[0])
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ScoredCandidate {
    pub node: NodeId,
    pub score: f64,
}

/// One edge of the beam search space with its cost `c(b, b')`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamTransitionRecord {
    pub from: Beam,
    pub to: Beam,
    pub cost_delta: f64,
    pub cost_increase: bool,
}

impl BeamTransitionRecord {
    pub fn new(costs: &impl CompletionCosts, from: Beam, to: Beam) -> Self {
        let cost_delta = transition_cost(costs, &from, &to);
        BeamTransitionRecord {
            from,
            to,
            cost_delta,
            cost_increase: cost_delta > 0.0,
        }
    }
}

fn by_score_then_id(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.node.cmp(&b.node))
}

/// Sorts candidates by descending score with ascending id breaking ties.
pub fn rank(candidates: &mut [ScoredCandidate]) {
    candidates.sort_by(by_score_then_id);
}

/// The `min(k, n)` best candidates by descending score, ties by ascending id.
pub fn best(candidates: &[ScoredCandidate], k: usize) -> Result<Vec<NodeId>> {
    if candidates.is_empty() {
        return Err(Error::precondition("best() needs at least one candidate"));
    }
    if k == 0 {
        return Err(Error::precondition("beam width must be at least 1"));
    }
    if let Some(c) = candidates.iter().find(|c| !c.score.is_finite()) {
        return Err(Error::NonFinite(format!("score of {}", c.node)));
    }
    let mut ranked = candidates.to_vec();
    rank(&mut ranked);
    ranked.truncate(k);
    Ok(ranked.into_iter().map(|c| c.node).collect())
}

/// `A_b`: the union of the members' neighbors in ascending id order.
pub fn expand(space: &impl Space, beam: &Beam) -> Result<Vec<NodeId>> {
    if beam.is_terminal(space) {
        return Err(Error::precondition("cannot expand a terminal beam"));
    }
    let mut out: Vec<NodeId> = beam
        .members()
        .iter()
        .flat_map(|&v| space.neighbors(v))
        .collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Scores `nodes` with `score` and ranks them.
pub fn score_nodes<F: Fn(NodeId) -> f64>(nodes: &[NodeId], score: F) -> Vec<ScoredCandidate> {
    let mut scored: Vec<ScoredCandidate> = nodes
        .iter()
        .map(|&node| ScoredCandidate { node, score: score(node) })
        .collect();
    rank(&mut scored);
    scored
}

/// Chooses the successor beam from an already expanded and scored `A_b`.
///
/// If the top-ranked candidate is terminal the successor is that terminal
/// alone; otherwise it is the `k` top-ranked non-terminals.
pub fn select_successor(
    space: &impl Space,
    ranked: &[ScoredCandidate],
    k: usize,
) -> Result<Beam> {
    if k == 0 {
        return Err(Error::precondition("beam width must be at least 1"));
    }
    let top = ranked
        .first()
        .ok_or_else(|| Error::structural("beam has no neighbors"))?;
    if !top.score.is_finite() {
        return Err(Error::NonFinite(format!("score of {}", top.node)));
    }
    if space.is_terminal(top.node) {
        return Ok(Beam::singleton(top.node));
    }
    let members: Vec<NodeId> = ranked
        .iter()
        .filter(|c| !space.is_terminal(c.node))
        .take(k)
        .map(|c| c.node)
        .collect();
    if members.is_empty() {
        return Err(Error::structural("no non-terminal successor available"));
    }
    Ok(Beam { members })
}

/// One step of the beam policy induced by `score`.
pub fn policy_step<F: Fn(NodeId) -> f64>(
    space: &impl Space,
    beam: &Beam,
    k: usize,
    score: F,
) -> Result<Beam> {
    let candidates = expand(space, beam)?;
    let ranked = score_nodes(&candidates, score);
    if let Some(c) = ranked.iter().find(|c| !c.score.is_finite()) {
        return Err(Error::NonFinite(format!("score of {}", c.node)));
    }
    select_successor(space, &ranked, k)
}

/// Highest-scoring member of a beam (scores recomputed, not read from order).
pub fn top_member<F: Fn(NodeId) -> f64>(beam: &Beam, score: F) -> NodeId {
    let scored = score_nodes(beam.members(), score);
    scored[0].node
}

/// Runs beam search from `{v_(0)}` until the best member is terminal and
/// returns that terminal.
pub fn beam_search<F: Fn(NodeId) -> f64>(space: &impl Space, k: usize, score: F) -> Result<NodeId> {
    Ok(beam_search_trace(space, k, score)?.1)
}

/// Like [`beam_search`] but also returns every visited beam.
pub fn beam_search_trace<F: Fn(NodeId) -> f64>(
    space: &impl Space,
    k: usize,
    score: F,
) -> Result<(Vec<Beam>, NodeId)> {
    if k == 0 {
        return Err(Error::precondition("beam width must be at least 1"));
    }
    let mut beams = vec![Beam::initial(space)];
    for _ in 0..=space.depth() {
        let beam = beams.last().unwrap();
        let top = top_member(beam, &score);
        if space.is_terminal(top) {
            return Ok((beams, top));
        }
        let next = policy_step(space, beam, k, &score)?;
        beams.push(next);
    }
    Err(Error::structural(format!(
        "no terminal reached after {} steps",
        space.depth() + 1
    )))
}

/// `c*(b)`: the lowest completion cost among the members.
pub fn beam_cost(costs: &impl CompletionCosts, beam: &Beam) -> f64 {
    beam.members()
        .iter()
        .map(|&v| costs.completion_cost(v))
        .min_by(f64::total_cmp)
        .expect("beams are nonempty")
}

/// `c(b, b') = c*(b') - c*(b)`.
pub fn transition_cost(costs: &impl CompletionCosts, from: &Beam, to: &Beam) -> f64 {
    beam_cost(costs, to) - beam_cost(costs, from)
}
