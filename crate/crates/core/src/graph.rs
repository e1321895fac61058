//! Network topology with a boundary/internal node split.
//!
//! Nodes are numbered `0..K+M`; the first `K` are boundary nodes. Graphs are
//! simple and undirected, and immutable once built.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    num_boundary: usize,
    num_internal: usize,
    adjacency: Vec<Vec<NodeId>>,
    edges: Vec<(NodeId, NodeId)>,
}

impl Graph {
    /// Build a graph from unordered edges. Rejects self-loops, duplicate
    /// edges (in either orientation) and out-of-range endpoints.
    pub fn new(
        num_boundary: usize,
        num_internal: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self> {
        if num_internal == 0 {
            return Err(Error::NoInternalNodes);
        }
        let n = num_boundary + num_internal;
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = HashSet::new();
        let mut canonical = Vec::new();
        for (a, b) in edges {
            for node in [a, b] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, count: n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge(key.0, key.1));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
            canonical.push(key);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        canonical.sort_unstable();
        Ok(Graph {
            num_boundary,
            num_internal,
            adjacency,
            edges: canonical,
        })
    }

    /// Path on `n` nodes whose two endpoints are the boundary.
    ///
    /// Node 0 is the left end and node 1 the right end; the interior
    /// positions `1..n-1` along the path are the internal nodes `2..n`, so
    /// internal index `k` sits at path position `k + 1`.
    pub fn line(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidInput(format!(
                "line graph needs at least 3 nodes, got {n}"
            )));
        }
        let position = |p: usize| match p {
            0 => 0,
            p if p == n - 1 => 1,
            p => p + 1,
        };
        Graph::new(2, n - 2, (0..n - 1).map(|p| (position(p), position(p + 1))))
    }

    /// Random connected graph: a uniformly shuffled random recursive tree
    /// over all nodes plus each remaining pair independently with
    /// probability `extra_edge_prob`. Every internal node therefore reaches
    /// a boundary node whenever `num_boundary > 0`.
    pub fn random_connected<R: Rng + ?Sized>(
        num_boundary: usize,
        num_internal: usize,
        extra_edge_prob: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&extra_edge_prob) {
            return Err(Error::InvalidInput(format!(
                "edge probability {extra_edge_prob} outside [0, 1]"
            )));
        }
        let n = num_boundary + num_internal;
        let mut order: Vec<NodeId> = (0..n).collect();
        order.shuffle(rng);
        let mut edges = HashSet::new();
        for i in 1..n {
            let parent = order[rng.random_range(0..i)];
            let child = order[i];
            edges.insert((parent.min(child), parent.max(child)));
        }
        if extra_edge_prob > 0.0 {
            for a in 0..n {
                for b in a + 1..n {
                    if !edges.contains(&(a, b)) && rng.random::<f64>() < extra_edge_prob {
                        edges.insert((a, b));
                    }
                }
            }
        }
        let mut edges: Vec<_> = edges.into_iter().collect();
        edges.sort_unstable();
        Graph::new(num_boundary, num_internal, edges)
    }

    /// Same topology with every node treated as internal.
    pub fn without_boundary(&self) -> Graph {
        Graph {
            num_boundary: 0,
            num_internal: self.num_nodes(),
            adjacency: self.adjacency.clone(),
            edges: self.edges.clone(),
        }
    }

    pub fn num_boundary(&self) -> usize {
        self.num_boundary
    }

    pub fn num_internal(&self) -> usize {
        self.num_internal
    }

    pub fn num_nodes(&self) -> usize {
        self.num_boundary + self.num_internal
    }

    pub fn is_boundary(&self, n: NodeId) -> bool {
        n < self.num_boundary
    }

    /// Edges as `(low, high)` pairs in sorted order.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn neighbors(&self, n: NodeId) -> Result<&[NodeId]> {
        self.adjacency
            .get(n)
            .map(Vec::as_slice)
            .ok_or(Error::NodeOutOfRange {
                node: n,
                count: self.num_nodes(),
            })
    }

    pub fn degree(&self, n: NodeId) -> Result<usize> {
        self.neighbors(n).map(<[NodeId]>::len)
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency
            .get(a)
            .is_some_and(|list| list.binary_search(&b).is_ok())
    }

    /// Single connected component (vacuously true for one node).
    pub fn is_connected(&self) -> bool {
        let visited = self.bfs_from(std::iter::once(0));
        visited.iter().all(|&v| v)
    }

    /// Every internal node has a path to some boundary node.
    pub fn internal_nodes_reach_boundary(&self) -> Result<bool> {
        if self.num_boundary == 0 {
            return Err(Error::NoBoundary);
        }
        let visited = self.bfs_from(0..self.num_boundary);
        Ok(visited[self.num_boundary..].iter().all(|&v| v))
    }

    /// Internal nodes that cannot reach the boundary.
    pub fn detached_internal_nodes(&self) -> Vec<NodeId> {
        let visited = self.bfs_from(0..self.num_boundary);
        (self.num_boundary..self.num_nodes())
            .filter(|&n| !visited[n])
            .collect()
    }

    fn bfs_from(&self, sources: impl IntoIterator<Item = NodeId>) -> Vec<bool> {
        let mut visited = vec![false; self.num_nodes()];
        let mut queue = VecDeque::new();
        for s in sources {
            if !visited[s] {
                visited[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(n) = queue.pop_front() {
            for &m in &self.adjacency[n] {
                if !visited[m] {
                    visited[m] = true;
                    queue.push_back(m);
                }
            }
        }
        visited
    }
}

/// Canonical index to external label mapping produced by the graph loader.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeLabels {
    labels: Vec<String>,
}

impl NodeLabels {
    /// Labels `"1".."N"`, matching the canonical order.
    pub fn numbered(n: usize) -> Self {
        NodeLabels {
            labels: (1..=n).map(|i| i.to_string()).collect(),
        }
    }

    pub fn label(&self, n: NodeId) -> Option<&str> {
        self.labels.get(n).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<NodeId> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// On-disk graph description with arbitrary string labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub boundary: Vec<String>,
    pub internal: Vec<String>,
    pub edges: Vec<[String; 2]>,
}

impl GraphFile {
    /// Resolve labels to canonical indices: boundary labels first, in file
    /// order, then internal labels.
    pub fn to_graph(&self) -> Result<(Graph, NodeLabels)> {
        let mut index = HashMap::new();
        let labels: Vec<String> = self
            .boundary
            .iter()
            .chain(&self.internal)
            .cloned()
            .collect();
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.as_str(), i).is_some() {
                return Err(Error::Label(format!("duplicate label {label:?}")));
            }
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        for [a, b] in &self.edges {
            let lookup = |l: &String| {
                index
                    .get(l.as_str())
                    .copied()
                    .ok_or_else(|| Error::Label(format!("edge endpoint {l:?} is not a node")))
            };
            edges.push((lookup(a)?, lookup(b)?));
        }
        let graph = Graph::new(self.boundary.len(), self.internal.len(), edges)?;
        Ok((graph, NodeLabels { labels }))
    }

    pub fn from_graph(graph: &Graph, labels: &NodeLabels) -> Result<Self> {
        if labels.len() != graph.num_nodes() {
            return Err(Error::DimensionMismatch {
                what: "node labels",
                expected: graph.num_nodes(),
                got: labels.len(),
            });
        }
        let all = labels.as_slice();
        Ok(GraphFile {
            boundary: all[..graph.num_boundary()].to_vec(),
            internal: all[graph.num_boundary()..].to_vec(),
            edges: graph
                .edges()
                .iter()
                .map(|&(a, b)| [all[a].clone(), all[b].clone()])
                .collect(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
