//! Search spaces, terminal costs and optimal completion costs.
//!
//! A search space is a rooted tree whose terminals all sit at the same depth.
//! Spaces are either materialized ([`SearchSpace`]) or generated on demand
//! by a task (see [`crate::task::HammingSpace`]); both implement [`Space`].
//! Node ids double as the tie-breaking total order: whenever two nodes score
//! or cost the same, the smaller id wins.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque handle of a search node. The derived `Ord` is the tie-break order.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u64);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u64)
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Read-only view of a tree-structured search space with uniform terminal depth.
pub trait Space {
    fn initial(&self) -> NodeId;

    /// Neighbors of `v` in ascending id order; empty for terminals.
    fn neighbors(&self, v: NodeId) -> Vec<NodeId>;

    fn is_terminal(&self, v: NodeId) -> bool {
        self.neighbors(v).is_empty()
    }

    /// Distance from the initial node to every terminal.
    fn depth(&self) -> usize;
}

/// Optimal completion cost `c*(v)`: the cost of the best terminal below `v`.
pub trait CompletionCosts {
    fn completion_cost(&self, v: NodeId) -> f64;
}

/// A materialized rooted tree. Terminals may sit at different depths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    initial: NodeId,
    children: Vec<Vec<NodeId>>,
    parent: Vec<Option<NodeId>>,
    terminal_cost: Vec<Option<f64>>,
    node_depth: Vec<usize>,
}

impl SearchTree {
    /// Builds a tree from per-node child lists and terminal costs.
    ///
    /// Nodes without children are terminals and must carry a finite cost;
    /// interior nodes must not. Child lists are sorted by id.
    pub fn new(children: Vec<Vec<NodeId>>, terminal_cost: Vec<Option<f64>>) -> Result<Self> {
        let n = children.len();
        if n == 0 {
            return Err(Error::structural("search tree has no nodes"));
        }
        if terminal_cost.len() != n {
            return Err(Error::structural(format!(
                "{} nodes but {} terminal cost slots",
                n,
                terminal_cost.len()
            )));
        }
        let mut children = children;
        let mut parent: Vec<Option<NodeId>> = vec![None; n];
        for (v, kids) in children.iter_mut().enumerate() {
            kids.sort_unstable();
            for w in kids.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::structural(format!("duplicate child {} of v{}", w[0], v)));
                }
            }
            for &c in kids.iter() {
                if c.index() >= n {
                    return Err(Error::structural(format!("child {c} of v{v} out of range")));
                }
                if parent[c.index()].is_some() {
                    return Err(Error::structural(format!("{c} has more than one parent")));
                }
                parent[c.index()] = Some(NodeId::from(v));
            }
        }
        let roots: Vec<usize> = (0..n).filter(|&v| parent[v].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::structural(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let initial = NodeId::from(roots[0]);

        let mut node_depth = vec![usize::MAX; n];
        let mut queue = VecDeque::from([initial]);
        node_depth[initial.index()] = 0;
        let mut seen = 1;
        while let Some(v) = queue.pop_front() {
            for &c in &children[v.index()] {
                node_depth[c.index()] = node_depth[v.index()] + 1;
                seen += 1;
                queue.push_back(c);
            }
        }
        if seen != n {
            return Err(Error::structural("not every node is reachable from the root"));
        }

        for v in 0..n {
            match (children[v].is_empty(), terminal_cost[v]) {
                (true, Some(c)) if c.is_finite() => {}
                (true, Some(_)) => return Err(Error::NonFinite(format!("terminal cost of v{v}"))),
                (true, None) => return Err(Error::structural(format!("terminal v{v} has no cost"))),
                (false, Some(_)) => {
                    return Err(Error::structural(format!("interior node v{v} carries a terminal cost")))
                }
                (false, None) => {}
            }
        }

        Ok(SearchTree {
            initial,
            children,
            parent,
            terminal_cost,
            node_depth,
        })
    }

    pub fn initial(&self) -> NodeId {
        self.initial
    }

    pub fn num_nodes(&self) -> usize {
        self.children.len()
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v.index()]
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v.index()]
    }

    pub fn terminal_cost(&self, v: NodeId) -> Option<f64> {
        self.terminal_cost[v.index()]
    }

    pub fn node_depth(&self, v: NodeId) -> usize {
        self.node_depth[v.index()]
    }

    pub fn is_terminal(&self, v: NodeId) -> bool {
        self.children[v.index()].is_empty()
    }

    pub fn terminals(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.num_nodes())
            .map(NodeId::from)
            .filter(move |&v| self.is_terminal(v))
    }

    pub fn max_terminal_depth(&self) -> usize {
        self.terminals().map(|t| self.node_depth(t)).max().unwrap_or(0)
    }

    /// Node ids in breadth-first order from the root.
    fn bfs_order(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.num_nodes());
        let mut queue = VecDeque::from([self.initial]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            queue.extend(self.children(v).iter().copied());
        }
        order
    }
}

/// A materialized tree whose terminals are all at depth `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    tree: SearchTree,
    depth: usize,
}

impl SearchSpace {
    pub fn new(children: Vec<Vec<NodeId>>, terminal_cost: Vec<Option<f64>>) -> Result<Self> {
        Self::from_tree(SearchTree::new(children, terminal_cost)?)
    }

    /// Accepts a tree only if all terminals share one depth of at least 1.
    pub fn from_tree(tree: SearchTree) -> Result<Self> {
        let depths: Vec<usize> = tree.terminals().map(|t| tree.node_depth(t)).collect();
        let depth = *depths.first().ok_or_else(|| Error::structural("tree has no terminals"))?;
        if depths.iter().any(|&d| d != depth) {
            return Err(Error::structural("terminals are at different depths"));
        }
        if depth == 0 {
            return Err(Error::structural("the initial node cannot be terminal"));
        }
        Ok(SearchSpace { tree, depth })
    }

    pub fn tree(&self) -> &SearchTree {
        &self.tree
    }

    pub fn into_tree(self) -> SearchTree {
        self.tree
    }

    pub fn num_nodes(&self) -> usize {
        self.tree.num_nodes()
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        self.tree.children(v)
    }

    pub fn terminal_cost(&self, v: NodeId) -> Option<f64> {
        self.tree.terminal_cost(v)
    }

    pub fn node_depth(&self, v: NodeId) -> usize {
        self.tree.node_depth(v)
    }

    pub fn terminals(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.tree.terminals()
    }
}

impl Space for SearchSpace {
    fn initial(&self) -> NodeId {
        self.tree.initial
    }

    fn neighbors(&self, v: NodeId) -> Vec<NodeId> {
        self.tree.children(v).to_vec()
    }

    fn is_terminal(&self, v: NodeId) -> bool {
        self.tree.is_terminal(v)
    }

    fn depth(&self) -> usize {
        self.depth
    }
}

/// `c*(v)` for every node of a materialized space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionCostTable {
    costs: Vec<f64>,
}

impl CompletionCostTable {
    pub fn get(&self, v: NodeId) -> f64 {
        self.costs[v.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.costs
    }
}

impl CompletionCosts for CompletionCostTable {
    fn completion_cost(&self, v: NodeId) -> f64 {
        self.get(v)
    }
}

/// Computes `c*` for every node with one bottom-up pass.
pub fn optimal_completion_cost(space: &SearchSpace) -> Result<CompletionCostTable> {
    let tree = space.tree();
    let mut costs = vec![f64::NAN; tree.num_nodes()];
    for &v in tree.bfs_order().iter().rev() {
        costs[v.index()] = match tree.terminal_cost(v) {
            Some(c) => c,
            None => tree
                .children(v)
                .iter()
                .map(|c| costs[c.index()])
                .min_by(f64::total_cmp)
                .ok_or_else(|| Error::structural(format!("{v} has no reachable terminal")))?,
        };
    }
    Ok(CompletionCostTable { costs })
}

/// An arbitrary finite directed graph with terminal costs. Cycles are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct RawGraph {
    num_nodes: usize,
    out_edges: Vec<Vec<usize>>,
    initial: usize,
    terminal_cost: BTreeMap<usize, f64>,
}

impl RawGraph {
    pub fn new(
        num_nodes: usize,
        edges: &[(usize, usize)],
        initial: usize,
        terminal_cost: BTreeMap<usize, f64>,
    ) -> Result<Self> {
        if initial >= num_nodes {
            return Err(Error::structural("initial node out of range"));
        }
        let mut out_edges = vec![Vec::new(); num_nodes];
        for &(a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::structural(format!("edge ({a}, {b}) out of range")));
            }
            out_edges[a].push(b);
        }
        for list in out_edges.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        if let Some((&t, _)) = terminal_cost.iter().find(|(&t, c)| t >= num_nodes || !c.is_finite()) {
            return Err(Error::structural(format!("invalid terminal entry for node {t}")));
        }
        Ok(RawGraph {
            num_nodes,
            out_edges,
            initial,
            terminal_cost,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    pub fn terminal_cost(&self, v: usize) -> Option<f64> {
        self.terminal_cost.get(&v).copied()
    }
}

/// Tree of bounded paths through a [`RawGraph`].
#[derive(Clone, Debug, PartialEq)]
pub struct PathTree {
    pub tree: SearchTree,
    /// The raw-graph node sequence of every path, indexed by node id.
    pub paths: Vec<Vec<usize>>,
}

const MAX_PATH_NODES: usize = 1 << 22;

/// Expands `graph` into the tree of its paths from the initial node, at most
/// `max_path_length` nodes long.
///
/// A path is a terminal when it cannot be extended (length bound reached or
/// no out-edges) and ends at a raw terminal. Paths that cannot be extended
/// and do not end at a raw terminal are pruned, together with any branch
/// left without a terminal. Nodes are numbered breadth-first with children
/// in ascending raw id, so within a depth the id order is lexicographic.
pub fn to_path_space(graph: &RawGraph, max_path_length: usize) -> Result<PathTree> {
    if max_path_length == 0 {
        return Err(Error::precondition("max_path_length must be at least 1"));
    }
    // Breadth-first enumeration of every bounded path.
    let mut paths: Vec<Vec<usize>> = vec![vec![graph.initial]];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut head = 0;
    while head < paths.len() {
        let path = paths[head].clone();
        if path.len() < max_path_length {
            let last = *path.last().expect("paths are nonempty");
            for &next in graph.out_edges(last) {
                let mut extended = path.clone();
                extended.push(next);
                children[head].push(paths.len());
                paths.push(extended);
                children.push(Vec::new());
                if paths.len() > MAX_PATH_NODES {
                    return Err(Error::SizeGuard {
                        what: "path tree",
                        actual: paths.len(),
                        limit: MAX_PATH_NODES,
                    });
                }
            }
        }
        head += 1;
    }

    // Children always have larger indices, so a reverse sweep settles liveness.
    let mut alive = vec![false; paths.len()];
    for i in (0..paths.len()).rev() {
        alive[i] = if children[i].is_empty() {
            graph.terminal_cost(*paths[i].last().unwrap()).is_some()
        } else {
            children[i].iter().any(|&c| alive[c])
        };
    }
    if !alive[0] {
        return Err(Error::EmptyTerminal { max_path_length });
    }

    let mut new_id = vec![usize::MAX; paths.len()];
    let mut kept = Vec::new();
    for i in 0..paths.len() {
        if alive[i] {
            new_id[i] = kept.len();
            kept.push(i);
        }
    }
    let mut out_children = Vec::with_capacity(kept.len());
    let mut out_costs = Vec::with_capacity(kept.len());
    let mut out_paths = Vec::with_capacity(kept.len());
    for &i in &kept {
        let kids: Vec<NodeId> = children[i]
            .iter()
            .filter(|&&c| alive[c])
            .map(|&c| NodeId::from(new_id[c]))
            .collect();
        out_costs.push(if kids.is_empty() {
            graph.terminal_cost(*paths[i].last().unwrap())
        } else {
            None
        });
        out_children.push(kids);
        out_paths.push(paths[i].clone());
    }
    Ok(PathTree {
        tree: SearchTree::new(out_children, out_costs)?,
        paths: out_paths,
    })
}

/// A depth-uniform space produced by [`pad_to_depth`].
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedSpace {
    pub space: SearchSpace,
    /// Original node each node stands for; padding maps to its terminal.
    pub origin: Vec<NodeId>,
}

/// Appends a chain of `h - d_v` nodes below every terminal at depth `d_v < h`,
/// where `h` is the deepest terminal depth. The chain end inherits the cost.
///
/// Original nodes keep their ids; padding nodes get fresh ids after them.
pub fn pad_to_depth(tree: &SearchTree) -> Result<PaddedSpace> {
    let h = tree.max_terminal_depth();
    let n = tree.num_nodes();
    let mut children: Vec<Vec<NodeId>> = (0..n).map(|v| tree.children(NodeId::from(v)).to_vec()).collect();
    let mut costs: Vec<Option<f64>> = (0..n).map(|v| tree.terminal_cost(NodeId::from(v))).collect();
    let mut origin: Vec<NodeId> = (0..n).map(NodeId::from).collect();

    let short: Vec<NodeId> = tree.terminals().filter(|&t| tree.node_depth(t) < h).collect();
    for t in short {
        let cost = costs[t.index()].take();
        let mut tail = t;
        for _ in tree.node_depth(t)..h {
            let fresh = NodeId::from(children.len());
            children.push(Vec::new());
            costs.push(None);
            origin.push(t);
            children[tail.index()].push(fresh);
            tail = fresh;
        }
        costs[tail.index()] = cost;
    }
    Ok(PaddedSpace {
        space: SearchSpace::new(children, costs)?,
        origin,
    })
}
