//! Approximate projections onto `M(k, g)`.
//!
//! Head: find `S ∈ M(2k, g)` capturing `‖x_S‖₂ ≥ c_H · max_{S' ∈ M(k,g)} ‖x_{S'}‖₂`.
//! Tail: find `S ∈ M(5k, g)` with `‖x − x_S‖₂ ≤ c_T · min_{S' ∈ M(k,g)} ‖x − x_{S'}‖₂`.
//!
//! Both search over a prize multiplier λ for PCSF runs with node prizes
//! `x_i²`, then prune forests that overshoot the size cap.

use crate::error::{Error, Result};
use crate::graph::{Graph, SparsityModel, Support};
use crate::pcsf::{pcsf_gw, Forest, LocalTree, PcsfInstance, Tree};
use crate::vector;

/// Head factor `c_H` of the PCSF head oracle.
pub const HEAD_FACTOR: f64 = 0.267_261_241_912_424_4; // sqrt(1/14)
/// Tail factor `c_T` of the PCSF tail oracle.
pub const TAIL_FACTOR: f64 = 2.645_751_311_064_590_7; // sqrt(7)

const MAX_BISECTIONS: usize = 50;
const BRACKET_TOL: f64 = 1e-6;

/// Pluggable projection oracles used by the solver.
pub trait ModelProjection: Sync {
    fn head(&self, graph: &Graph, x: &[f64], model: &SparsityModel) -> Result<Support>;
    fn tail(&self, graph: &Graph, x: &[f64], model: &SparsityModel) -> Result<Support>;
}

/// The PCSF-based oracles, optionally boosting the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcsfProjection {
    pub boost_rounds: usize,
}

impl Default for PcsfProjection {
    fn default() -> Self {
        PcsfProjection { boost_rounds: 1 }
    }
}

impl ModelProjection for PcsfProjection {
    fn head(&self, graph: &Graph, x: &[f64], model: &SparsityModel) -> Result<Support> {
        boost_head(graph, x, model, self.boost_rounds)
    }

    fn tail(&self, graph: &Graph, x: &[f64], model: &SparsityModel) -> Result<Support> {
        tail_approx(graph, x, model)
    }
}

/// Exact-size tree knapsack: `best[v][j]` is the largest prize of a
/// connected subtree with exactly `j` nodes whose topmost node is `v`.
struct TreeDp {
    tree: LocalTree,
    budget: usize,
    children: Vec<Vec<usize>>,
    /// `best[v][j]` for `j in 0..=cap(v)`; index 0 unused.
    best: Vec<Vec<f64>>,
    /// `take[v][i][j]`: nodes taken from child `i` when `v`'s table holds
    /// size `j` after merging children `0..=i`.
    take: Vec<Vec<Vec<u32>>>,
}

impl TreeDp {
    fn new(graph: &Graph, tree: &Tree, prizes: &[f64], budget: usize) -> Self {
        let local = LocalTree::new(graph, tree);
        let size = local.len();
        let order = local.preorder(0);
        let mut children = vec![Vec::new(); size];
        for &(v, parent, _) in &order {
            if let Some((p, _)) = parent {
                children[p].push(v);
            }
        }
        let mut best: Vec<Vec<f64>> = vec![Vec::new(); size];
        let mut take: Vec<Vec<Vec<u32>>> = vec![Vec::new(); size];
        for &(v, _, _) in order.iter().rev() {
            let mut table = vec![f64::NEG_INFINITY, prizes[local.nodes[v]]];
            let mut choices = Vec::with_capacity(children[v].len());
            for &c in &children[v] {
                let child = &best[c];
                let cap = (table.len() - 1 + child.len() - 1).min(budget);
                let mut merged = vec![f64::NEG_INFINITY; cap + 1];
                let mut pick = vec![0u32; cap + 1];
                for (j, &base) in table.iter().enumerate().skip(1) {
                    if base == f64::NEG_INFINITY {
                        continue;
                    }
                    if base > merged[j] {
                        merged[j] = base;
                        pick[j] = 0;
                    }
                    for (t, &extra) in child.iter().enumerate().skip(1) {
                        if j + t > cap {
                            break;
                        }
                        let value = base + extra;
                        if value > merged[j + t] {
                            merged[j + t] = value;
                            pick[j + t] = t as u32;
                        }
                    }
                }
                table = merged;
                choices.push(pick);
            }
            best[v] = table;
            take[v] = choices;
        }
        TreeDp {
            tree: local,
            budget,
            children,
            best,
            take,
        }
    }

    /// Best `(value, top node, size)` per exact size `j` in `1..=budget`.
    fn best_by_size(&self) -> Vec<Option<(f64, usize, usize)>> {
        let mut out = vec![None; self.budget + 1];
        for v in 0..self.tree.len() {
            for (j, &value) in self.best[v].iter().enumerate().skip(1) {
                if value == f64::NEG_INFINITY {
                    continue;
                }
                let better = match out[j] {
                    None => true,
                    Some((cur, _, _)) => value > cur,
                };
                if better {
                    out[j] = Some((value, v, j));
                }
            }
        }
        out
    }

    /// Graph node ids of the subtree realizing `best[top][size]`.
    fn reconstruct(&self, top: usize, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        let mut stack = vec![(top, size)];
        while let Some((v, mut j)) = stack.pop() {
            out.push(self.tree.nodes[v]);
            for (i, &c) in self.children[v].iter().enumerate().rev() {
                let t = self.take[v][i][j] as usize;
                if t > 0 {
                    stack.push((c, t));
                    j -= t;
                }
            }
            debug_assert_eq!(j, 1);
        }
        out.sort_unstable();
        out
    }
}

/// Largest-prize connected subtree of `tree` with at most `budget` nodes.
///
/// Exact over subtrees. Ties prefer more nodes, then the subtree found first
/// in increasing order of its topmost node.
pub fn prune_tree(graph: &Graph, tree: &Tree, prizes: &[f64], budget: usize) -> Vec<usize> {
    assert!(budget >= 1, "prune budget must be positive");
    if tree.nodes.len() <= budget {
        return tree.nodes.clone();
    }
    let dp = TreeDp::new(graph, tree, prizes, budget);
    let mut pick: Option<(f64, usize, usize)> = None;
    for entry in dp.best_by_size().into_iter().flatten() {
        let better = match pick {
            None => true,
            Some((value, _, size)) => entry.0 > value || (entry.0 == value && entry.2 > size),
        };
        if better {
            pick = Some(entry);
        }
    }
    let (_, top, size) = pick.expect("nonempty tree");
    dp.reconstruct(top, size)
}

/// Best node set of total size at most `budget` made of one connected
/// subtree per tree (possibly none), maximizing total prize.
fn prune_forest(graph: &Graph, trees: &[Tree], prizes: &[f64], budget: usize) -> Support {
    let dps: Vec<TreeDp> = trees
        .iter()
        .map(|t| TreeDp::new(graph, t, prizes, budget))
        .collect();
    let per_tree: Vec<Vec<Option<(f64, usize, usize)>>> =
        dps.iter().map(|dp| dp.best_by_size()).collect();
    // value[b] = best total with exactly b nodes over the trees seen so far.
    let mut value = vec![f64::NEG_INFINITY; budget + 1];
    value[0] = 0.0;
    let mut picks: Vec<Vec<usize>> = Vec::with_capacity(trees.len());
    for options in &per_tree {
        let mut next = value.clone();
        let mut pick = vec![0usize; budget + 1];
        for b in 0..=budget {
            if value[b] == f64::NEG_INFINITY {
                continue;
            }
            for (j, opt) in options.iter().enumerate().skip(1) {
                if b + j > budget {
                    break;
                }
                if let Some((v, _, _)) = opt {
                    if value[b] + v > next[b + j] {
                        next[b + j] = value[b] + v;
                        pick[b + j] = j;
                    }
                }
            }
        }
        value = next;
        picks.push(pick);
    }
    let mut b = (0..=budget)
        .filter(|&b| value[b] > f64::NEG_INFINITY)
        .max_by(|&a, &c| value[a].total_cmp(&value[c]).then(c.cmp(&a)))
        .unwrap_or(0);
    let mut nodes = Vec::new();
    for (t, pick) in picks.iter().enumerate().rev() {
        let j = pick[b];
        if j > 0 {
            let (_, top, size) = per_tree[t][j].expect("recorded option");
            nodes.extend(dps[t].reconstruct(top, size));
            b -= j;
        }
    }
    Support::from_unsorted(nodes)
}

/// Keeps the `g` trees with largest total prize (ties: smaller, then lower
/// minimum node id).
fn select_trees(mut forest: Forest, prizes: &[f64], g: usize) -> Vec<Tree> {
    forest.trees.sort_by(|a, b| {
        b.prize(prizes)
            .total_cmp(&a.prize(prizes))
            .then(a.nodes.len().cmp(&b.nodes.len()))
            .then(a.nodes[0].cmp(&b.nodes[0]))
    });
    forest.trees.truncate(g);
    forest.trees
}

/// Outcome of one PCSF run at a given λ, reduced to at most `g` trees.
struct Sweep {
    raw_size: usize,
    support: Support,
}

struct Searcher<'a> {
    graph: &'a Graph,
    prizes: Vec<f64>,
    costs: Vec<f64>,
    g: usize,
    budget: usize,
}

impl<'a> Searcher<'a> {
    fn new(graph: &'a Graph, x: &[f64], g: usize, budget: usize) -> Self {
        Searcher {
            graph,
            prizes: x.iter().map(|v| v * v).collect(),
            costs: graph.edges().iter().map(|e| e.cost).collect(),
            g,
            budget,
        }
    }

    /// λ range from "no edge affordable" to "every prize dominates".
    fn bracket(&self) -> (f64, f64) {
        let max_prize = self.prizes.iter().cloned().fold(0.0, f64::max);
        let min_prize = self
            .prizes
            .iter()
            .cloned()
            .filter(|&p| p > 0.0)
            .fold(f64::INFINITY, f64::min);
        let min_cost = self
            .costs
            .iter()
            .cloned()
            .filter(|&c| c > 0.0)
            .fold(f64::INFINITY, f64::min);
        let min_cost = if min_cost.is_finite() { min_cost } else { 1.0 };
        let total_cost: f64 = self.costs.iter().sum();
        let lo = min_cost / (4.0 * max_prize);
        let hi = (2.0 * (total_cost + 1.0) / min_prize).max(lo * 2.0);
        (lo, hi)
    }

    fn run(&self, lambda: f64) -> Sweep {
        let inst = PcsfInstance {
            graph: self.graph,
            prizes: &self.prizes,
            edge_costs: &self.costs,
            lambda,
            target_components: self.g,
        };
        let forest = pcsf_gw(&inst).expect("validated instance");
        let trees = select_trees(forest, &self.prizes, self.g);
        let raw_size: usize = trees.iter().map(|t| t.nodes.len()).sum();
        let support = if raw_size <= self.budget {
            trees.iter().flat_map(|t| t.nodes.iter().copied()).collect()
        } else {
            prune_forest(self.graph, &trees, &self.prizes, self.budget)
        };
        Sweep { raw_size, support }
    }

    /// Single best node, always admissible.
    fn best_singleton(&self) -> Support {
        let best = (0..self.prizes.len())
            .max_by(|&a, &b| self.prizes[a].total_cmp(&self.prizes[b]).then(b.cmp(&a)))
            .unwrap();
        Support::from_unsorted([best])
    }
}

fn check_len(graph: &Graph, x: &[f64]) -> Result<()> {
    if x.len() != graph.node_count() {
        return Err(Error::Validation(format!(
            "vector length {} does not match node count {}",
            x.len(),
            graph.node_count()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in projection input".into()));
    }
    Ok(())
}

fn pick_max_captured(x: &[f64], candidates: Vec<Support>) -> Support {
    let mut best: Option<(f64, Support)> = None;
    for s in candidates {
        let captured = vector::norm2_on(x, &s);
        let better = match &best {
            None => true,
            Some((value, cur)) => {
                captured > *value
                    || (captured == *value && (s.len(), s.as_slice()) < (cur.len(), cur.as_slice()))
            }
        };
        if better {
            best = Some((captured, s));
        }
    }
    best.map(|(_, s)| s).unwrap_or_default()
}

/// Head approximation into `M(2k, g)`.
pub fn head_approx(graph: &Graph, x: &[f64], model: &SparsityModel) -> Result<Support> {
    check_len(graph, x)?;
    let searcher = Searcher::new(graph, x, model.g, model.head_k());
    if searcher.prizes.iter().all(|&p| p == 0.0) {
        return Ok(Support::empty());
    }
    let (mut lo, mut hi) = searcher.bracket();
    let mut candidates = vec![searcher.best_singleton()];
    let low = searcher.run(lo);
    let high = searcher.run(hi);
    let settled = (model.k..=model.head_k()).contains(&high.raw_size)
        || (model.k..=model.head_k()).contains(&low.raw_size)
        || high.raw_size < model.k;
    candidates.push(low.support);
    candidates.push(high.support);
    if !settled {
        for _ in 0..MAX_BISECTIONS {
            if hi / lo - 1.0 <= BRACKET_TOL {
                break;
            }
            let mid = (lo * hi).sqrt();
            let sweep = searcher.run(mid);
            let size = sweep.raw_size;
            candidates.push(sweep.support);
            if size > model.head_k() {
                hi = mid;
            } else if size < model.k {
                lo = mid;
            } else {
                break;
            }
        }
    }
    Ok(pick_max_captured(x, candidates))
}

/// Tail approximation into `M(5k, g)`.
///
/// Among the forests of at least `min(k, |supp(x)|)` nodes found during the
/// λ search, returns the smallest one whose residual is certified within
/// `c_T` of optimal against the lower bound `‖x‖² − (sum of the k largest
/// x_i²)`; otherwise the one with the smallest residual.
pub fn tail_approx(graph: &Graph, x: &[f64], model: &SparsityModel) -> Result<Support> {
    check_len(graph, x)?;
    let searcher = Searcher::new(graph, x, model.g, model.tail_k());
    if searcher.prizes.iter().all(|&p| p == 0.0) {
        return Ok(Support::empty());
    }
    let lower_sq = sparse_tail_lower_bound_sq(&searcher.prizes, model.k);
    let certified = |s: &Support| {
        let r = vector::residual_norm(x, s);
        r * r <= TAIL_FACTOR * TAIL_FACTOR * lower_sq
    };
    let min_size = model.k.min(searcher.prizes.iter().filter(|&&p| p > 0.0).count());
    let acceptable = |s: &Support| s.len() >= min_size && certified(s);
    let (mut lo, mut hi) = searcher.bracket();
    let mut candidates = vec![searcher.best_singleton(), searcher.run(lo).support];
    let high = searcher.run(hi);
    let hopeless = high.raw_size <= model.tail_k() && !acceptable(&high.support);
    candidates.push(high.support);
    if !hopeless {
        // shrink λ towards the smallest acceptable forest
        for _ in 0..MAX_BISECTIONS {
            if hi / lo - 1.0 <= BRACKET_TOL {
                break;
            }
            let mid = (lo * hi).sqrt();
            let sweep = searcher.run(mid);
            if sweep.raw_size > model.tail_k() || acceptable(&sweep.support) {
                hi = mid;
            } else {
                lo = mid;
            }
            candidates.push(sweep.support);
        }
    }
    let mut best_cert: Option<Support> = None;
    let mut best_resid: Option<(f64, Support)> = None;
    for s in candidates {
        let r = vector::residual_norm(x, &s);
        if acceptable(&s) {
            let better = match &best_cert {
                None => true,
                Some(cur) => (s.len(), s.as_slice()) < (cur.len(), cur.as_slice()),
            };
            if better {
                best_cert = Some(s.clone());
            }
        }
        let better = match &best_resid {
            None => true,
            Some((value, cur)) => {
                r < *value || (r == *value && (s.len(), s.as_slice()) < (cur.len(), cur.as_slice()))
            }
        };
        if better {
            best_resid = Some((r, s));
        }
    }
    Ok(best_cert.or(best_resid.map(|(_, s)| s)).unwrap_or_default())
}

/// `‖x‖² − Σ_{k largest} x_i²`, the optimal tail of plain k-sparsity, which
/// lower-bounds the optimal tail over `M(k, g)`.
fn sparse_tail_lower_bound_sq(squares: &[f64], k: usize) -> f64 {
    let mut sorted = squares.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.iter().skip(k).sum()
}

/// Repeated head approximation on the residual `x − x_S`; returns the union.
pub fn boost_head(graph: &Graph, x: &[f64], model: &SparsityModel, rounds: usize) -> Result<Support> {
    if rounds == 0 {
        return Err(Error::Validation("boost rounds must be at least 1".into()));
    }
    check_len(graph, x)?;
    let mut support = Support::empty();
    let mut residual = x.to_vec();
    for _ in 0..rounds {
        let found = head_approx(graph, &residual, model)?;
        if found.is_empty() {
            break;
        }
        for v in found.iter() {
            residual[v] = 0.0;
        }
        support = support.union(&found);
    }
    Ok(support)
}

/// Head factor after `rounds` of boosting, each round capturing a `c_H²`
/// fraction of the remaining energy.
pub fn boosted_head_factor(c_head: f64, rounds: usize) -> f64 {
    (1.0 - (1.0 - c_head * c_head).powi(rounds as i32)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gamma, in_model};

    fn model(k: usize, g: usize) -> SparsityModel {
        SparsityModel::new(k, g).unwrap()
    }

    #[test]
    fn constants() {
        assert!((HEAD_FACTOR - (1.0f64 / 14.0).sqrt()).abs() < 1e-16);
        assert!((TAIL_FACTOR - 7f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn prune_single_node_and_small_budget() {
        let g = Graph::path(3);
        let single = Tree::singleton(1);
        assert_eq!(prune_tree(&g, &single, &[0.0, 1.0, 0.0], 1), vec![1]);
        let path = Tree {
            nodes: vec![0, 1, 2],
            edges: vec![0, 1],
        };
        assert_eq!(prune_tree(&g, &path, &[5.0, 0.0, 4.0], 2), vec![0, 1]);
        assert_eq!(prune_tree(&g, &path, &[5.0, 0.0, 4.0], 3), vec![0, 1, 2]);
        assert_eq!(prune_tree(&g, &path, &[5.0, 0.0, 4.0], 7), vec![0, 1, 2]);
    }

    #[test]
    fn prune_branching_tree() {
        // 0 - 1 - 2, 1 - 3 - 4 ; best 3-node subtree is {1, 3, 4}
        let g = Graph::unit(5, [(0, 1), (1, 2), (1, 3), (3, 4)]).unwrap();
        let tree = Tree {
            nodes: vec![0, 1, 2, 3, 4],
            edges: vec![0, 1, 2, 3],
        };
        let prizes = [2.0, 1.0, 2.0, 0.5, 4.0];
        assert_eq!(prune_tree(&g, &tree, &prizes, 3), vec![1, 3, 4]);
        assert_eq!(prune_tree(&g, &tree, &prizes, 4), vec![0, 1, 3, 4]);
        assert_eq!(prune_tree(&g, &tree, &prizes, 1), vec![4]);
    }

    #[test]
    fn head_on_small_path() {
        let g = Graph::path(3);
        let x = [3.0, 0.0, 4.0];
        let s = head_approx(&g, &x, &model(1, 1)).unwrap();
        assert!(s.len() <= 2);
        assert!(gamma(&g, &s).unwrap() <= 1);
        assert!(vector::norm2_on(&x, &s) >= HEAD_FACTOR * 4.0);
    }

    #[test]
    fn zero_vector_projects_to_empty() {
        let g = Graph::grid(3, 3);
        let x = [0.0; 9];
        assert!(head_approx(&g, &x, &model(2, 1)).unwrap().is_empty());
        assert!(tail_approx(&g, &x, &model(2, 1)).unwrap().is_empty());
        assert!(boost_head(&g, &x, &model(2, 1), 3).unwrap().is_empty());
    }

    #[test]
    fn tail_six_path() {
        let g = Graph::path(6);
        let x = [4.0, 0.0, 0.0, 0.0, 0.0, 3.0];
        let m = model(1, 1);
        let s = tail_approx(&g, &x, &m).unwrap();
        assert!(s.len() <= 5);
        assert!(gamma(&g, &s).unwrap() <= 1);
        assert!(vector::residual_norm(&x, &s) <= TAIL_FACTOR * 3.0 + 1e-12);
    }

    #[test]
    fn tail_is_exact_for_model_vectors() {
        let g = Graph::grid(4, 4);
        let mut x = vec![0.0; 16];
        for (v, val) in [(5, 1.0), (6, -2.0), (10, 0.5)] {
            x[v] = val;
        }
        x[15] = 3.0;
        let m = model(4, 2);
        let s = tail_approx(&g, &x, &m).unwrap();
        assert_eq!(vector::residual_norm(&x, &s), 0.0);
        assert!(in_model(&g, &s, &SparsityModel::new(20, 2).unwrap()).unwrap());
    }

    #[test]
    fn head_covers_single_cluster() {
        let g = Graph::grid(3, 3);
        let mut x = vec![0.0; 9];
        x[0] = 1.0;
        x[1] = 2.0;
        x[4] = 1.5;
        let s = head_approx(&g, &x, &model(3, 1)).unwrap();
        assert!(vector::norm2_on(&x, &s) >= HEAD_FACTOR * vector::norm2(&x));
    }

    #[test]
    fn boosting_rounds() {
        let g = Graph::path(10);
        let mut x = vec![0.0; 10];
        for v in [0, 1, 2, 3, 6, 7, 8, 9] {
            x[v] = 1.0;
        }
        let m = model(2, 1);
        let one = boost_head(&g, &x, &m, 1).unwrap();
        assert_eq!(one, head_approx(&g, &x, &m).unwrap());
        let two = boost_head(&g, &x, &m, 2).unwrap();
        assert!(vector::norm2_on(&x, &two) > vector::norm2_on(&x, &one));
        assert!(two.len() <= 2 * m.head_k());
        assert!(boost_head(&g, &x, &m, 0).is_err());
    }

    #[test]
    fn boosted_factor_grows() {
        assert!((boosted_head_factor(HEAD_FACTOR, 1) - HEAD_FACTOR).abs() < 1e-15);
        assert!(boosted_head_factor(HEAD_FACTOR, 30) > 0.9);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let g = Graph::path(3);
        assert!(head_approx(&g, &[1.0, 2.0], &model(1, 1)).is_err());
        assert!(tail_approx(&g, &[1.0, f64::NAN, 0.0], &model(1, 1)).is_err());
    }
}
