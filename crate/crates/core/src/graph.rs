//! Undirected graphs, node supports and the graph-structured sparsity model.
//!
//! A support `S` belongs to the model `M(k, g)` when it has at most `k`
//! nodes and the subgraph it induces has at most `g` connected components.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unionfind::DisjointSets;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub cost: f64,
}

/// Immutable undirected simple graph on nodes `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    /// `(neighbor, edge index)` pairs, sorted by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    /// Builds a graph from weighted edges. Edges are stored with `u < v`.
    pub fn new<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n == 0 {
            return Err(Error::Validation("empty graph".into()));
        }
        let mut stored = Vec::new();
        let mut adjacency = vec![Vec::new(); n];
        for (u, v, cost) in edges {
            if u >= n || v >= n {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::Validation(format!("self-loop on node {u}")));
            }
            if !cost.is_finite() || cost < 0.0 {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) has invalid cost {cost}"
                )));
            }
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            let idx = stored.len();
            stored.push(Edge { u: a, v: b, cost });
            adjacency[a].push((b, idx));
            adjacency[b].push((a, idx));
        }
        for (node, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0].0 == w[1].0) {
                let dup = list.windows(2).find(|w| w[0].0 == w[1].0).unwrap()[0].0;
                return Err(Error::Validation(format!(
                    "duplicate edge between {node} and {dup}"
                )));
            }
        }
        Ok(Graph {
            n,
            edges: stored,
            adjacency,
        })
    }

    /// Graph with unit edge costs.
    pub fn unit<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Graph::new(n, pairs.into_iter().map(|(u, v)| (u, v, 1.0)))
    }

    pub fn path(n: usize) -> Self {
        Graph::unit(n, (1..n).map(|i| (i - 1, i))).expect("valid path")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "a cycle needs at least three nodes");
        Graph::unit(n, (0..n).map(|i| (i, (i + 1) % n))).expect("valid cycle")
    }

    /// Star with center 0 and leaves `1..n`.
    pub fn star(n: usize) -> Self {
        Graph::unit(n, (1..n).map(|i| (0, i))).expect("valid star")
    }

    pub fn complete(n: usize) -> Self {
        let pairs = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
        Graph::unit(n, pairs).expect("valid complete graph")
    }

    /// 4-connected `rows x cols` grid; node `r * cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let mut pairs = Vec::with_capacity(2 * rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let id = r * cols + c;
                if c + 1 < cols {
                    pairs.push((id, id + 1));
                }
                if r + 1 < rows {
                    pairs.push((id, id + cols));
                }
            }
        }
        Graph::unit(rows * cols, pairs).expect("valid grid")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `node` with the index of the connecting edge.
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edge_between(u, v).is_some()
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        let list = self.adjacency.get(u)?;
        list.binary_search_by_key(&v, |&(w, _)| w)
            .ok()
            .map(|pos| list[pos].1)
    }

    /// Canonical sorted `(u, v)` pairs with `u < v`.
    pub fn canonical_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<_> = self.edges.iter().map(|e| (e.u, e.v)).collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Dense ids produced by [`load_graph`] mapped back to the ids in the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMap {
    original: Vec<i64>,
}

impl NodeMap {
    pub fn identity(n: usize) -> Self {
        NodeMap {
            original: (0..n as i64).collect(),
        }
    }

    /// Map from strictly increasing original ids.
    pub fn new(original: Vec<i64>) -> Result<Self> {
        if original.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("node ids must be strictly increasing".into()));
        }
        Ok(NodeMap { original })
    }

    pub fn len(&self) -> usize {
        self.original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.original.is_empty()
    }

    pub fn original(&self, dense: usize) -> i64 {
        self.original[dense]
    }

    pub fn dense(&self, original: i64) -> Option<usize> {
        self.original.binary_search(&original).ok()
    }

    pub fn originals(&self) -> &[i64] {
        &self.original
    }
}

/// Parses edge-list text: one `u v` or `u v cost` per line, `#` comments.
///
/// Node ids are remapped to `0..n` in sorted order of the original ids.
pub fn load_graph(text: &str) -> Result<(Graph, NodeMap)> {
    let mut raw = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 && fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected `u v` or `u v cost`, found {} fields", fields.len()),
            });
        }
        let parse_id = |s: &str| {
            s.parse::<i64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid node id `{s}`"),
            })
        };
        let u = parse_id(fields[0])?;
        let v = parse_id(fields[1])?;
        let cost = match fields.get(2) {
            Some(s) => s.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid edge cost `{s}`"),
            })?,
            None => 1.0,
        };
        if !cost.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("non-finite edge cost `{cost}`"),
            });
        }
        if cost < 0.0 {
            return Err(Error::Validation(format!(
                "negative edge cost {cost} on line {lineno}"
            )));
        }
        if u == v {
            return Err(Error::Validation(format!(
                "self-loop on node {u} at line {lineno}"
            )));
        }
        raw.push((u, v, cost));
    }
    if raw.is_empty() {
        return Err(Error::Validation("empty graph".into()));
    }
    let mut ids: Vec<i64> = raw.iter().flat_map(|&(u, v, _)| [u, v]).collect();
    ids.sort_unstable();
    ids.dedup();
    let index: HashMap<i64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let graph = Graph::new(
        ids.len(),
        raw.iter().map(|&(u, v, c)| (index[&u], index[&v], c)),
    )?;
    Ok((graph, NodeMap { original: ids }))
}

/// Writes the graph as edge-list text in canonical sorted order, using the
/// original ids from `map`.
pub fn serialize_graph(graph: &Graph, map: &NodeMap) -> String {
    let mut edges: Vec<&Edge> = graph.edges().iter().collect();
    edges.sort_by_key(|e| (e.u, e.v));
    let mut out = String::new();
    for e in edges {
        let (u, v) = (map.original(e.u), map.original(e.v));
        if e.cost == 1.0 {
            writeln!(out, "{u} {v}").unwrap();
        } else {
            writeln!(out, "{u} {v} {}", e.cost).unwrap();
        }
    }
    out
}

/// Sorted, duplicate-free set of node ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Support(Vec<usize>);

impl Support {
    pub fn empty() -> Self {
        Support(Vec::new())
    }

    /// Requires strictly increasing ids.
    pub fn new(nodes: Vec<usize>) -> Result<Self> {
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "support nodes must be strictly increasing".into(),
            ));
        }
        Ok(Support(nodes))
    }

    pub fn from_unsorted<I: IntoIterator<Item = usize>>(nodes: I) -> Self {
        let mut v: Vec<usize> = nodes.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Support(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.0.binary_search(&node).is_ok()
    }

    pub fn union(&self, other: &Support) -> Support {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    out.push(self.0[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.0[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Support(out)
    }

    pub fn intersection_len(&self, other: &Support) -> usize {
        self.iter().filter(|&v| other.contains(v)).count()
    }

    pub fn is_subset_of(&self, other: &Support) -> bool {
        self.iter().all(|v| other.contains(v))
    }

    /// Checks every id is below `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        match self.0.last() {
            Some(&max) if max >= n => Err(Error::Validation(format!(
                "support node {max} out of range for {n} nodes"
            ))),
            _ => Ok(()),
        }
    }
}

impl FromIterator<usize> for Support {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Support::from_unsorted(iter)
    }
}

/// The model `M(k, g)`: supports of at most `k` nodes inducing at most `g`
/// connected components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityModel {
    pub k: usize,
    pub g: usize,
}

impl SparsityModel {
    pub fn new(k: usize, g: usize) -> Result<Self> {
        if g == 0 || k == 0 || g > k {
            return Err(Error::Validation(format!(
                "sparsity model requires 1 <= g <= k, got k = {k}, g = {g}"
            )));
        }
        Ok(SparsityModel { k, g })
    }

    /// Also checks `k <= n` for the given graph.
    pub fn for_graph(k: usize, g: usize, graph: &Graph) -> Result<Self> {
        let m = SparsityModel::new(k, g)?;
        if k > graph.node_count() {
            return Err(Error::Validation(format!(
                "k = {k} exceeds node count {}",
                graph.node_count()
            )));
        }
        Ok(m)
    }

    /// Sparsity allowed for head approximations.
    pub fn head_k(&self) -> usize {
        2 * self.k
    }

    /// Sparsity allowed for tail approximations.
    pub fn tail_k(&self) -> usize {
        5 * self.k
    }

    /// Edge budget under unit edge weights.
    pub fn budget(&self) -> usize {
        self.k - self.g
    }
}

/// Number of connected components of the subgraph induced by `s`.
pub fn gamma(graph: &Graph, s: &Support) -> Result<usize> {
    s.validate(graph.node_count())?;
    Ok(gamma_unchecked(graph, s.as_slice()))
}

pub(crate) fn gamma_unchecked(graph: &Graph, nodes: &[usize]) -> usize {
    if nodes.is_empty() {
        return 0;
    }
    let position: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut sets = DisjointSets::new(nodes.len());
    let mut components = nodes.len();
    for (i, &v) in nodes.iter().enumerate() {
        for &(w, _) in graph.neighbors(v) {
            if w > v {
                if let Some(&j) = position.get(&w) {
                    if sets.union(i, j) {
                        components -= 1;
                    }
                }
            }
        }
    }
    components
}

/// Connected components of the induced subgraph, each sorted, ordered by
/// smallest member.
pub fn induced_components(graph: &Graph, s: &Support) -> Vec<Vec<usize>> {
    let mut seen = vec![false; graph.node_count()];
    let mut out = Vec::new();
    for start in s.iter() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &(w, _) in graph.neighbors(v) {
                if !seen[w] && s.contains(w) {
                    seen[w] = true;
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Membership in `M(k, g)` under the "at most g components" reading.
pub fn in_model(graph: &Graph, s: &Support, m: &SparsityModel) -> Result<bool> {
    if s.len() > m.k {
        s.validate(graph.node_count())?;
        return Ok(false);
    }
    Ok(gamma(graph, s)? <= m.g)
}

/// Indices with `|x_i| > tol`.
pub fn support_of(x: &[f64], tol: f64) -> Support {
    Support(
        x.iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > tol)
            .map(|(i, _)| i)
            .collect(),
    )
}
