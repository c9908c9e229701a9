//! Prize-collecting Steiner forest via Goemans–Williamson moat growing.
//!
//! Every node starts as a cluster whose moat grows at unit rate while the
//! cluster still has unspent prize. An edge becomes tight when the moats of
//! its two endpoints cover its cost, at which point the clusters merge.
//! A cluster whose accumulated moats equal its prize goes inactive. Growth
//! stops once at most `target_components` clusters are active; the trees of
//! those clusters are then strongly pruned.
//!
//! Edge events are tracked per endpoint ("edge parts") in per-cluster heaps
//! that are merged small-into-large, so a run costs `O(m log² m)`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::graph::{Graph, Support};

/// Input to [`pcsf_gw`]. Node `i` carries prize `lambda * prizes[i]`.
#[derive(Debug, Clone, Copy)]
pub struct PcsfInstance<'a> {
    pub graph: &'a Graph,
    pub prizes: &'a [f64],
    /// Per edge, indexed like [`Graph::edges`].
    pub edge_costs: &'a [f64],
    pub lambda: f64,
    pub target_components: usize,
}

impl<'a> PcsfInstance<'a> {
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.node_count();
        if self.prizes.len() != n {
            return Err(Error::Validation(format!(
                "expected {n} prizes, got {}",
                self.prizes.len()
            )));
        }
        if self.edge_costs.len() != self.graph.edge_count() {
            return Err(Error::Validation(format!(
                "expected {} edge costs, got {}",
                self.graph.edge_count(),
                self.edge_costs.len()
            )));
        }
        if self.prizes.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Validation("prizes must be finite and nonnegative".into()));
        }
        if self.edge_costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Validation(
                "edge costs must be finite and nonnegative".into(),
            ));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Validation(format!("invalid lambda {}", self.lambda)));
        }
        Ok(())
    }

    pub fn prize(&self, node: usize) -> f64 {
        self.lambda * self.prizes[node]
    }

    /// `cost(F) + Σ_{i ∉ F} λ π_i`.
    pub fn objective(&self, forest: &Forest) -> f64 {
        let covered = forest.support();
        let edge_cost: f64 = forest
            .trees
            .iter()
            .flat_map(|t| t.edges.iter())
            .map(|&e| self.edge_costs[e])
            .sum();
        let forfeited: f64 = (0..self.graph.node_count())
            .filter(|&i| !covered.contains(i))
            .map(|i| self.prize(i))
            .sum();
        edge_cost + forfeited
    }
}

/// A tree of the returned forest: sorted node ids and sorted edge indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

impl Tree {
    pub fn singleton(node: usize) -> Self {
        Tree {
            nodes: vec![node],
            edges: Vec::new(),
        }
    }

    pub fn prize(&self, prizes: &[f64]) -> f64 {
        self.nodes.iter().map(|&v| prizes[v]).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn empty() -> Self {
        Forest { trees: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }

    pub fn support(&self) -> Support {
        self.trees.iter().flat_map(|t| t.nodes.iter().copied()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Heap entry: `(stored key, edge part, version)`.
type PartEntry = Reverse<(Key, usize, u32)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Edge,
    Deactivate,
}

/// Global event: `(time, kind, cluster, stamp)`.
type Event = Reverse<(Key, EventKind, usize, u64)>;

struct Cluster {
    active: bool,
    /// Time at which `moat` and `total` were last brought up to date.
    since: f64,
    /// Own moat radius as of `since`.
    moat: f64,
    /// Sum of all moats inside the cluster as of `since`.
    total: f64,
    prize: f64,
    heap: BinaryHeap<PartEntry>,
    offset: f64,
    stamp: u64,
    /// Next cluster up the merge hierarchy (path-compressed) and the sum of
    /// frozen radii from this cluster up to, excluding, `up`.
    up: usize,
    up_sum: f64,
    /// Tree edges accumulated in this cluster.
    edges: Vec<usize>,
}

impl Cluster {
    fn radius_at(&self, t: f64) -> f64 {
        if self.active {
            self.moat + (t - self.since)
        } else {
            self.moat
        }
    }

    fn bring_to(&mut self, t: f64) {
        if self.active {
            let dt = t - self.since;
            self.moat += dt;
            self.total += dt;
        }
        self.since = t;
    }
}

struct MoatGrowth<'a> {
    inst: &'a PcsfInstance<'a>,
    clusters: Vec<Cluster>,
    events: BinaryHeap<Event>,
    part_version: Vec<u32>,
    edge_done: Vec<bool>,
    num_active: usize,
    now: f64,
}

impl<'a> MoatGrowth<'a> {
    fn new(inst: &'a PcsfInstance<'a>) -> Self {
        let n = inst.graph.node_count();
        let mut clusters = Vec::with_capacity(2 * n);
        let mut num_active = 0;
        for v in 0..n {
            let prize = inst.prize(v);
            let active = prize > 0.0;
            num_active += usize::from(active);
            clusters.push(Cluster {
                active,
                since: 0.0,
                moat: 0.0,
                total: 0.0,
                prize,
                heap: BinaryHeap::new(),
                offset: 0.0,
                stamp: 0,
                up: v,
                up_sum: 0.0,
                edges: Vec::new(),
            });
        }
        let m = inst.graph.edge_count();
        let mut growth = MoatGrowth {
            inst,
            clusters,
            events: BinaryHeap::new(),
            part_version: vec![0; m],
            edge_done: vec![false; m],
            num_active,
            now: 0.0,
        };
        for (e, edge) in inst.graph.edges().iter().enumerate() {
            let cost = inst.edge_costs[e];
            let (au, av) = (growth.clusters[edge.u].active, growth.clusters[edge.v].active);
            let (ku, kv) = match (au, av) {
                (true, true) => (cost / 2.0, cost / 2.0),
                (true, false) => (cost, 0.0),
                (false, true) => (0.0, cost),
                (false, false) => (0.0, 0.0),
            };
            growth.clusters[edge.u].heap.push(Reverse((Key(ku), 2 * e, 0)));
            growth.clusters[edge.v].heap.push(Reverse((Key(kv), 2 * e + 1, 0)));
        }
        for v in 0..n {
            if growth.clusters[v].active {
                growth.schedule(v);
            }
        }
        growth
    }

    /// Root of the merge hierarchy containing `c`, with the sum of frozen
    /// radii strictly below the root. Compresses the path.
    fn root_and_sum(&mut self, c: usize) -> (usize, f64) {
        let mut path = Vec::new();
        let mut cur = c;
        while self.clusters[cur].up != cur {
            path.push(cur);
            cur = self.clusters[cur].up;
        }
        let root = cur;
        // Walk back down accumulating sums to the root.
        let mut acc = 0.0;
        for &node in path.iter().rev() {
            acc += self.clusters[node].up_sum;
            self.clusters[node].up_sum = acc;
            self.clusters[node].up = root;
        }
        let below = path.first().map_or(0.0, |&first| self.clusters[first].up_sum);
        (root, below)
    }

    /// Moat coverage at node `v` at the current time, and its root cluster.
    fn coverage(&mut self, v: usize) -> (usize, f64, f64) {
        let (root, below) = self.root_and_sum(v);
        let radius = self.clusters[root].radius_at(self.now);
        (root, below, below + radius)
    }

    fn schedule(&mut self, c: usize) {
        let cluster = &mut self.clusters[c];
        cluster.stamp += 1;
        if !cluster.active {
            return;
        }
        let stamp = cluster.stamp;
        let versions = &self.part_version;
        while let Some(&Reverse((_, part, version))) = cluster.heap.peek() {
            if versions[part / 2] != version || self.edge_done[part / 2] {
                cluster.heap.pop();
            } else {
                break;
            }
        }
        if let Some(&Reverse((Key(stored), _, _))) = cluster.heap.peek() {
            let key = stored + cluster.offset;
            let t = (cluster.since + (key - cluster.moat)).max(self.now);
            self.events
                .push(Reverse((Key(t), EventKind::Edge, c, stamp)));
        }
        let t = (cluster.since + (cluster.prize - cluster.total)).max(self.now);
        self.events
            .push(Reverse((Key(t), EventKind::Deactivate, c, stamp)));
    }

    fn push_part(&mut self, root: usize, part: usize, key: f64) {
        let version = self.part_version[part / 2];
        let cluster = &mut self.clusters[root];
        cluster
            .heap
            .push(Reverse((Key(key - cluster.offset), part, version)));
    }

    fn run(&mut self) {
        let target = self.inst.target_components;
        while self.num_active > target {
            let Some(Reverse((Key(t), kind, c, stamp))) = self.events.pop() else {
                break;
            };
            if self.clusters[c].stamp != stamp || !self.clusters[c].active {
                continue;
            }
            self.now = self.now.max(t);
            match kind {
                EventKind::Deactivate => {
                    let now = self.now;
                    let cluster = &mut self.clusters[c];
                    cluster.bring_to(now);
                    cluster.active = false;
                    cluster.stamp += 1;
                    self.num_active -= 1;
                }
                EventKind::Edge => self.edge_event(c),
            }
        }
    }

    fn edge_event(&mut self, c: usize) {
        let Some(Reverse((_, part, version))) = self.clusters[c].heap.pop() else {
            self.schedule(c);
            return;
        };
        let e = part / 2;
        if self.part_version[e] != version || self.edge_done[e] {
            self.schedule(c);
            return;
        }
        let edge = self.inst.graph.edges()[e];
        let (here, there) = if part % 2 == 0 {
            (edge.u, edge.v)
        } else {
            (edge.v, edge.u)
        };
        let (root_here, below_here, cov_here) = self.coverage(here);
        let (root_there, below_there, cov_there) = self.coverage(there);
        if root_here == root_there {
            self.edge_done[e] = true;
            self.schedule(c);
            return;
        }
        let cost = self.inst.edge_costs[e];
        let remaining = cost - cov_here - cov_there;
        if remaining <= 1e-12 * cost.max(1.0) {
            self.merge(root_here, root_there, e);
            return;
        }
        self.part_version[e] += 1;
        let (part_here, part_there) = (part, part ^ 1);
        if self.clusters[root_there].active {
            let half = remaining / 2.0;
            self.push_part(root_here, part_here, cov_here + half - below_here);
            self.push_part(root_there, part_there, cov_there + half - below_there);
            self.schedule(root_here);
            self.schedule(root_there);
        } else {
            self.push_part(root_here, part_here, cov_here + remaining - below_here);
            // Fires as soon as the other side becomes active again.
            self.push_part(root_there, part_there, cov_there - below_there);
            self.schedule(root_here);
        }
    }

    fn merge(&mut self, a: usize, b: usize, e: usize) {
        let now = self.now;
        self.clusters[a].bring_to(now);
        self.clusters[b].bring_to(now);
        self.edge_done[e] = true;
        let id = self.clusters.len();
        let active_before =
            usize::from(self.clusters[a].active) + usize::from(self.clusters[b].active);

        let (large, small) = if self.clusters[a].heap.len() >= self.clusters[b].heap.len() {
            (a, b)
        } else {
            (b, a)
        };
        let mut heap = std::mem::take(&mut self.clusters[large].heap);
        let offset = self.clusters[large].offset - self.clusters[large].moat;
        let small_heap = std::mem::take(&mut self.clusters[small].heap);
        let small_shift = self.clusters[small].offset - self.clusters[small].moat - offset;
        heap.extend(
            small_heap
                .into_iter()
                .map(|Reverse((Key(k), p, ver))| Reverse((Key(k + small_shift), p, ver))),
        );
        let mut edges = std::mem::take(&mut self.clusters[large].edges);
        edges.append(&mut self.clusters[small].edges);
        edges.push(e);

        let prize = self.clusters[a].prize + self.clusters[b].prize;
        let total = self.clusters[a].total + self.clusters[b].total;
        for child in [a, b] {
            let cluster = &mut self.clusters[child];
            cluster.active = false;
            cluster.stamp += 1;
            cluster.up = id;
            cluster.up_sum = cluster.moat;
        }
        self.clusters.push(Cluster {
            active: true,
            since: now,
            moat: 0.0,
            total,
            prize,
            heap,
            offset,
            stamp: 0,
            up: id,
            up_sum: 0.0,
            edges,
        });
        self.num_active = self.num_active + 1 - active_before;
        self.schedule(id);
    }

    /// Trees of the clusters still active, before pruning.
    fn active_trees(mut self) -> Vec<Tree> {
        let n = self.inst.graph.node_count();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); self.clusters.len()];
        for v in 0..n {
            let (root, _) = self.root_and_sum(v);
            if self.clusters[root].active {
                members[root].push(v);
            }
        }
        let mut trees = Vec::new();
        for (root, nodes) in members.into_iter().enumerate() {
            if nodes.is_empty() {
                continue;
            }
            let mut edges = std::mem::take(&mut self.clusters[root].edges);
            edges.sort_unstable();
            trees.push(Tree { nodes, edges });
        }
        trees
    }
}

/// Strong pruning: roots the tree at its highest-prize node and drops every
/// subtree whose net worth does not exceed the cost of the edge attaching it.
pub fn strong_prune(graph: &Graph, tree: &Tree, prizes: &dyn Fn(usize) -> f64, edge_costs: &[f64]) -> Tree {
    if tree.nodes.len() <= 1 {
        return tree.clone();
    }
    let local = LocalTree::new(graph, tree);
    let root = (0..local.len())
        .max_by(|&a, &b| {
            prizes(local.nodes[a])
                .total_cmp(&prizes(local.nodes[b]))
                .then(local.nodes[b].cmp(&local.nodes[a]))
        })
        .unwrap();
    let order = local.preorder(root);
    let mut worth = vec![0.0; local.len()];
    for &(v, parent, _) in order.iter().rev() {
        worth[v] += prizes(local.nodes[v]);
        if let Some((p, e)) = parent {
            let gain = worth[v] - edge_costs[e];
            if gain > 0.0 {
                worth[p] += gain;
            }
        }
    }
    let mut keep = vec![false; local.len()];
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for &(v, parent, _) in &order {
        match parent {
            None => keep[v] = true,
            Some((p, e)) => {
                if keep[p] && worth[v] - edge_costs[e] > 0.0 {
                    keep[v] = true;
                    edges.push(e);
                }
            }
        }
        if keep[v] {
            nodes.push(local.nodes[v]);
        }
    }
    nodes.sort_unstable();
    edges.sort_unstable();
    Tree { nodes, edges }
}

/// Tree with nodes relabelled `0..len` for array-based traversals.
pub(crate) struct LocalTree {
    pub nodes: Vec<usize>,
    /// `(local neighbor, graph edge index)`.
    pub adj: Vec<Vec<(usize, usize)>>,
}

impl LocalTree {
    pub fn new(graph: &Graph, tree: &Tree) -> Self {
        let nodes = tree.nodes.clone();
        let local = |v: usize| nodes.binary_search(&v).expect("tree edge endpoint in tree");
        let mut adj = vec![Vec::new(); nodes.len()];
        for &e in &tree.edges {
            let edge = graph.edges()[e];
            let (a, b) = (local(edge.u), local(edge.v));
            adj[a].push((b, e));
            adj[b].push((a, e));
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        LocalTree { nodes, adj }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// DFS preorder from `root`: `(node, Some((parent, edge)), depth)`.
    pub fn preorder(&self, root: usize) -> Vec<(usize, Option<(usize, usize)>, usize)> {
        let mut order = Vec::with_capacity(self.len());
        let mut seen = vec![false; self.len()];
        let mut stack = vec![(root, None, 0usize)];
        seen[root] = true;
        while let Some((v, parent, depth)) = stack.pop() {
            order.push((v, parent, depth));
            for &(w, e) in self.adj[v].iter().rev() {
                if !seen[w] {
                    seen[w] = true;
                    stack.push((w, Some((v, e)), depth + 1));
                }
            }
        }
        order
    }
}

/// Runs moat growing and strong pruning. The result has at most
/// `target_components` trees unless fewer positive-prize regions exist.
pub fn pcsf_gw(inst: &PcsfInstance<'_>) -> Result<Forest> {
    inst.validate()?;
    if inst.lambda == 0.0 {
        return Ok(Forest::empty());
    }
    let mut growth = MoatGrowth::new(inst);
    growth.run();
    let trees = growth.active_trees();
    let prize = |v: usize| inst.prize(v);
    let mut pruned: Vec<Tree> = trees
        .iter()
        .map(|t| strong_prune(inst.graph, t, &prize, inst.edge_costs))
        .collect();
    pruned.sort_by_key(|t| t.nodes[0]);
    Ok(Forest { trees: pruned })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(graph: &Graph, prizes: &[f64], lambda: f64, g: usize) -> Forest {
        let costs: Vec<f64> = graph.edges().iter().map(|e| e.cost).collect();
        pcsf_gw(&PcsfInstance {
            graph,
            prizes,
            edge_costs: &costs,
            lambda,
            target_components: g,
        })
        .unwrap()
    }

    #[test]
    fn forfeits_cheap_prize() {
        let g = Graph::path(2);
        let f = run(&g, &[5.0, 0.1], 1.0, 1);
        assert_eq!(f.trees, vec![Tree::singleton(0)]);
    }

    #[test]
    fn buys_cheap_edge() {
        let g = Graph::new(2, [(0, 1, 0.1)]).unwrap();
        let f = run(&g, &[5.0, 5.0], 1.0, 1);
        assert_eq!(f.trees.len(), 1);
        assert_eq!(f.trees[0].nodes, vec![0, 1]);
        assert_eq!(f.trees[0].edges, vec![0]);
    }

    #[test]
    fn zero_prizes_or_lambda_give_empty_forest() {
        let g = Graph::grid(3, 3);
        assert!(run(&g, &[0.0; 9], 1.0, 1).is_empty());
        assert!(run(&g, &[1.0; 9], 0.0, 2).is_empty());
    }

    #[test]
    fn large_prizes_cover_all_positive_nodes() {
        let g = Graph::path(6);
        let prizes = [1.0, 0.0, 2.0, 0.0, 0.0, 3.0];
        let f = run(&g, &prizes, 1e6, 1);
        assert_eq!(f.trees.len(), 1);
        assert_eq!(f.trees[0].nodes, vec![0, 1, 2, 3, 4, 5]);
        let f2 = run(&g, &prizes, 1e6, 2);
        let covered = f2.support();
        assert!([0, 2, 5].iter().all(|&v| covered.contains(v)));
        assert!(f2.trees.len() <= 2);
    }

    #[test]
    fn steiner_node_is_bought_when_worth_it() {
        // star: leaves carry prize, the center carries none
        let g = Graph::star(4);
        let f = run(&g, &[0.0, 3.0, 3.0, 3.0], 1.0, 1);
        assert_eq!(f.trees.len(), 1);
        assert_eq!(f.trees[0].nodes, vec![0, 1, 2, 3]);
    }

    #[test]
    fn disconnected_regions() {
        let g = Graph::unit(4, [(0, 1), (2, 3)]).unwrap();
        let f = run(&g, &[4.0, 4.0, 4.0, 4.0], 1.0, 2);
        assert_eq!(f.trees.len(), 2);
        assert_eq!(f.node_count(), 4);
    }

    #[test]
    fn strong_prune_drops_unprofitable_branch() {
        let g = Graph::path(4);
        let tree = Tree {
            nodes: vec![0, 1, 2, 3],
            edges: vec![0, 1, 2],
        };
        let prizes = [5.0, 0.5, 0.2, 0.1];
        let costs = [1.0, 1.0, 1.0];
        let pruned = strong_prune(&g, &tree, &|v| prizes[v], &costs);
        assert_eq!(pruned, Tree::singleton(0));
    }

    /// Minimum of `cost(F) + forfeited prize` over forests with at most `g`
    /// trees, by enumerating the forest's node set.
    fn brute_force_optimum(graph: &Graph, prizes: &[f64], g: usize) -> f64 {
        use crate::unionfind::DisjointSets;
        let n = graph.node_count();
        let mut best = prizes.iter().sum::<f64>();
        for mask in 1u32..(1 << n) {
            let inside = |v: usize| mask & (1 << v) != 0;
            let mut edges: Vec<_> = graph
                .edges()
                .iter()
                .filter(|e| inside(e.u) && inside(e.v))
                .collect();
            edges.sort_by(|a, b| a.cost.total_cmp(&b.cost));
            let mut sets = DisjointSets::new(n);
            let mut chosen = Vec::new();
            for e in edges {
                if sets.union(e.u, e.v) {
                    chosen.push(e.cost);
                }
            }
            let size = mask.count_ones() as usize;
            let components = size - chosen.len();
            if components > g {
                continue;
            }
            // Splitting off the most expensive edges is free up to g trees.
            let drop = (g - components).min(chosen.len());
            let cost: f64 = chosen[..chosen.len() - drop].iter().sum();
            let forfeited: f64 = (0..n).filter(|&v| !inside(v)).map(|v| prizes[v]).sum();
            best = best.min(cost + forfeited);
        }
        best
    }

    #[test]
    fn within_factor_two_of_optimum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..400 {
            let n = rng.gen_range(2..=8);
            let mut pairs = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen_bool(0.4) {
                        pairs.push((u, v, rng.gen_range(0.1..3.0)));
                    }
                }
            }
            if pairs.is_empty() {
                continue;
            }
            let graph = Graph::new(n, pairs).unwrap();
            let prizes: Vec<f64> = (0..n)
                .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..4.0) })
                .collect();
            let g = rng.gen_range(1..=2);
            let costs: Vec<f64> = graph.edges().iter().map(|e| e.cost).collect();
            let inst = PcsfInstance {
                graph: &graph,
                prizes: &prizes,
                edge_costs: &costs,
                lambda: 1.0,
                target_components: g,
            };
            let forest = pcsf_gw(&inst).unwrap();
            assert!(forest.trees.len() <= g);
            let value = inst.objective(&forest);
            let opt = brute_force_optimum(&graph, &prizes, g);
            worst = worst.max(value / opt.max(1e-12));
            assert!(
                value <= 2.0 * opt + 1e-9,
                "value {value} vs optimum {opt} on {graph:?} prizes {prizes:?} g {g}"
            );
        }
        eprintln!("worst ratio {worst}");
    }
}
