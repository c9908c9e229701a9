//! Exhaustive ground truth on small graphs.
//!
//! Enumerates `M(k, g)` outright, which makes the exact projection and the
//! best connected subgraph of a scan statistic computable for `n ≤ 25`.

use crate::error::{Error, Result};
use crate::graph::{gamma_unchecked, Graph, SparsityModel, Support};
use crate::projection::ModelProjection;
use crate::vector;

/// Largest graph the exhaustive routines accept.
pub const MAX_EXACT_NODES: usize = 25;

fn check_size(graph: &Graph) -> Result<()> {
    let n = graph.node_count();
    if n > MAX_EXACT_NODES {
        return Err(Error::TooLarge {
            n,
            cap: MAX_EXACT_NODES,
        });
    }
    Ok(())
}

/// Calls `visit` on every nonempty support in `M(k, g)` exactly once.
/// Visit order is unspecified; use [`enumerate_model_supports`] for a
/// deterministic listing.
pub fn for_each_model_support<F: FnMut(&[usize])>(
    graph: &Graph,
    model: &SparsityModel,
    mut visit: F,
) -> Result<()> {
    check_size(graph)?;
    let k = model.k.min(graph.node_count());
    if model.g == 1 {
        for_each_connected_set(graph, k, &mut visit);
    } else {
        let mut current = Vec::with_capacity(k);
        combinations(graph, model.g, k, 0, &mut current, &mut visit);
    }
    Ok(())
}

fn combinations<F: FnMut(&[usize])>(
    graph: &Graph,
    g: usize,
    k: usize,
    start: usize,
    current: &mut Vec<usize>,
    visit: &mut F,
) {
    for v in start..graph.node_count() {
        current.push(v);
        if gamma_unchecked(graph, current) <= g {
            visit(current);
        }
        if current.len() < k {
            combinations(graph, g, k, v + 1, current, visit);
        }
        current.pop();
    }
}

/// Connected sets of at most `k` nodes, each produced once from its minimum
/// node by extension-set growth.
fn for_each_connected_set<F: FnMut(&[usize])>(graph: &Graph, k: usize, visit: &mut F) {
    let n = graph.node_count();
    let mut blocked = vec![0u32; n];
    for root in 0..n {
        let mut set = vec![root];
        blocked[root] += 1;
        let mut extension = Vec::new();
        for &(w, _) in graph.neighbors(root) {
            if w > root {
                extension.push(w);
                blocked[w] += 1;
            }
        }
        visit(&sorted(&set));
        extend(graph, root, k, &mut set, extension, &mut blocked, visit);
        for &(w, _) in graph.neighbors(root) {
            if w > root {
                blocked[w] -= 1;
            }
        }
        blocked[root] -= 1;
    }
}

fn sorted(set: &[usize]) -> Vec<usize> {
    let mut s = set.to_vec();
    s.sort_unstable();
    s
}

/// `blocked[u] > 0` when `u` is in the set or adjacent to it (so already
/// reachable through an earlier extension choice).
fn extend<F: FnMut(&[usize])>(
    graph: &Graph,
    root: usize,
    k: usize,
    set: &mut Vec<usize>,
    mut extension: Vec<usize>,
    blocked: &mut [u32],
    visit: &mut F,
) {
    if set.len() == k {
        return;
    }
    while let Some(w) = extension.pop() {
        let mut next_ext = extension.clone();
        let mut added = Vec::new();
        for &(u, _) in graph.neighbors(w) {
            if u > root && blocked[u] == 0 {
                next_ext.push(u);
                added.push(u);
            }
        }
        for &u in &added {
            blocked[u] += 1;
        }
        set.push(w);
        visit(&sorted(set));
        extend(graph, root, k, set, next_ext, blocked, visit);
        set.pop();
        for &u in &added {
            blocked[u] -= 1;
        }
    }
}

/// Every nonempty support of `M(k, g)`, sorted by size then
/// lexicographically.
pub fn enumerate_model_supports(graph: &Graph, model: &SparsityModel) -> Result<Vec<Support>> {
    let mut out = Vec::new();
    for_each_model_support(graph, model, |s| out.push(s.to_vec()))?;
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(out.into_iter().map(|v| Support::new(v).expect("sorted")).collect())
}

fn before(a: &[usize], b: &[usize]) -> bool {
    (a.len(), a) < (b.len(), b)
}

fn check_len(graph: &Graph, x: &[f64]) -> Result<()> {
    if x.len() != graph.node_count() {
        return Err(Error::Validation(format!(
            "vector length {} does not match node count {}",
            x.len(),
            graph.node_count()
        )));
    }
    Ok(())
}

/// Exact projection onto `M(k, g)`: the support minimizing `‖x − x_S‖₂`,
/// ties broken by smaller support then lexicographic order.
pub fn exact_projection(graph: &Graph, x: &[f64], model: &SparsityModel) -> Result<(Support, f64)> {
    check_len(graph, x)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_model_support(graph, model, |s| {
        let kept: f64 = s.iter().map(|&i| x[i] * x[i]).sum();
        let better = match &best {
            None => true,
            Some((value, cur)) => kept > *value || (kept == *value && before(s, cur)),
        };
        if better {
            best = Some((kept, s.to_vec()));
        }
    })?;
    let (_, nodes) = best.expect("model is nonempty for n >= 1");
    let support = Support::new(nodes).expect("sorted");
    let residual = vector::residual_norm(x, &support);
    Ok((support, residual))
}

/// Support attaining `max_{S ∈ M(k,g)} ‖x_S‖₂`, with that value.
pub fn exact_head(graph: &Graph, x: &[f64], model: &SparsityModel) -> Result<(Support, f64)> {
    let (support, _) = exact_projection(graph, x, model)?;
    let value = vector::norm2_on(x, &support);
    Ok((support, value))
}

/// `max_{S ∈ M(k,g)} ‖x_S‖₂`.
pub fn exact_head_opt(graph: &Graph, x: &[f64], model: &SparsityModel) -> Result<f64> {
    exact_head(graph, x, model).map(|(_, v)| v)
}

/// Best connected support of at most `k` nodes under `score`, ties broken
/// by smaller support then lexicographic order.
pub fn exact_best_subgraph<F>(score: F, graph: &Graph, k: usize) -> Result<(Support, f64)>
where
    F: Fn(&Support) -> f64,
{
    check_size(graph)?;
    let model = SparsityModel::new(k.clamp(1, graph.node_count()), 1)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_model_support(graph, &model, |s| {
        let support = Support::new(s.to_vec()).expect("sorted");
        let value = score(&support);
        let better = match &best {
            None => true,
            Some((cur_value, cur)) => value > *cur_value || (value == *cur_value && before(s, cur)),
        };
        if better {
            best = Some((value, s.to_vec()));
        }
    })?;
    let (value, nodes) = best.expect("nonempty graph");
    Ok((Support::new(nodes).expect("sorted"), value))
}

/// Exact head and tail oracles (`c_H = c_T = 1`) for small graphs.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactProjection;

impl ModelProjection for ExactProjection {
    fn head(&self, graph: &Graph, x: &[f64], model: &SparsityModel) -> Result<Support> {
        if x.iter().all(|&v| v == 0.0) {
            return Ok(Support::empty());
        }
        exact_head(graph, x, model).map(|(s, _)| s)
    }

    fn tail(&self, graph: &Graph, x: &[f64], model: &SparsityModel) -> Result<Support> {
        if x.iter().all(|&v| v == 0.0) {
            return Ok(Support::empty());
        }
        exact_projection(graph, x, model).map(|(s, _)| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::in_model;

    fn model(k: usize, g: usize) -> SparsityModel {
        SparsityModel::new(k, g).unwrap()
    }

    fn supports(list: &[&[usize]]) -> Vec<Support> {
        list.iter().map(|s| Support::new(s.to_vec()).unwrap()).collect()
    }

    /// All 2ⁿ − 1 nonempty subsets filtered by membership.
    fn bitmask_count(graph: &Graph, m: &SparsityModel) -> usize {
        let n = graph.node_count();
        (1u32..(1 << n))
            .filter(|mask| {
                let s: Support = (0..n).filter(|v| mask & (1 << v) != 0).collect();
                in_model(graph, &s, m).unwrap()
            })
            .count()
    }

    #[test]
    fn path_enumeration() {
        let got = enumerate_model_supports(&Graph::path(3), &model(2, 1)).unwrap();
        assert_eq!(got, supports(&[&[0], &[1], &[2], &[0, 1], &[1, 2]]));
    }

    #[test]
    fn singletons_and_triangle() {
        let g = Graph::grid(2, 3);
        assert_eq!(enumerate_model_supports(&g, &model(1, 1)).unwrap().len(), 6);
        assert_eq!(
            enumerate_model_supports(&Graph::complete(3), &model(3, 1)).unwrap().len(),
            7
        );
    }

    #[test]
    fn counts_match_bitmask_filter() {
        let graphs = [
            Graph::path(7),
            Graph::cycle(8),
            Graph::grid(3, 3),
            Graph::star(7),
            Graph::complete(5),
            Graph::unit(6, [(0, 1), (2, 3), (3, 4)]).unwrap(),
        ];
        for g in &graphs {
            for k in 1..=g.node_count() {
                for comps in 1..=k.min(3) {
                    let m = model(k, comps);
                    let listed = enumerate_model_supports(g, &m).unwrap();
                    assert_eq!(listed.len(), bitmask_count(g, &m), "{g:?} k={k} g={comps}");
                    let mut dedup = listed.clone();
                    dedup.dedup();
                    assert_eq!(dedup.len(), listed.len());
                }
            }
        }
    }

    #[test]
    fn projection_examples() {
        let g = Graph::path(4);
        let (s, r) = exact_projection(&g, &[5.0, 0.0, 0.0, 5.0], &model(2, 1)).unwrap();
        assert_eq!(r, 5.0);
        assert_eq!(s.as_slice(), &[0]);

        let x = [0.0, 1.0, 2.0, 0.0];
        let (s, r) = exact_projection(&g, &x, &model(2, 1)).unwrap();
        assert_eq!((s.as_slice(), r), (&[1usize, 2][..], 0.0));

        let (s, r) = exact_projection(&g, &[0.0; 4], &model(2, 1)).unwrap();
        assert_eq!((s.as_slice(), r), (&[0usize][..], 0.0));
    }

    #[test]
    fn head_opt_examples() {
        let g = Graph::path(3);
        assert_eq!(exact_head_opt(&g, &[3.0, 0.0, 4.0], &model(1, 1)).unwrap(), 4.0);
        assert_eq!(exact_head_opt(&g, &[0.0; 3], &model(1, 1)).unwrap(), 0.0);
        let x = [3.0, 1.0, 4.0];
        let full = exact_head_opt(&g, &x, &model(3, 3)).unwrap();
        assert!((full - vector::norm2(&x)).abs() < 1e-12);
    }

    #[test]
    fn projection_identity() {
        let g = Graph::grid(3, 3);
        let x: Vec<f64> = (0..9).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let (s, r) = exact_projection(&g, &x, &model(3, 2)).unwrap();
        let kept = vector::norm2_on(&x, &s);
        assert!((r * r + kept * kept - vector::dot(&x, &x)).abs() < 1e-12);
    }

    #[test]
    fn size_cap() {
        let g = Graph::path(26);
        assert_eq!(
            enumerate_model_supports(&g, &model(1, 1)).unwrap_err(),
            Error::TooLarge { n: 26, cap: 25 }
        );
        // n = 25 with g = 1 is reachable through connected-set growth.
        let g = Graph::grid(5, 5);
        assert!(exact_head_opt(&g, &[1.0; 25], &model(4, 1)).is_ok());
    }

    #[test]
    fn best_subgraph_tie_break() {
        let g = Graph::path(4);
        let (s, v) = exact_best_subgraph(|_| 0.0, &g, 3).unwrap();
        assert_eq!((s.as_slice(), v), (&[0usize][..], 0.0));
        let c = [0.0, 0.0, 0.7, 0.0];
        let (s, _) = exact_best_subgraph(|s| s.iter().map(|i| c[i]).sum::<f64>(), &g, 1).unwrap();
        assert_eq!(s.as_slice(), &[2]);
    }
}
