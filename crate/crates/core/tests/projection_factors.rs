use graphmp::exact::{exact_head_opt, exact_projection};
use graphmp::projection::{head_approx, tail_approx, HEAD_FACTOR, TAIL_FACTOR};
use graphmp::vector;
use graphmp::{gamma, Graph, SparsityModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn corpus() -> Vec<(String, Graph)> {
    let mut out = Vec::new();
    for n in [4, 7, 10] {
        out.push((format!("path{n}"), Graph::path(n)));
        out.push((format!("cycle{n}"), Graph::cycle(n)));
        out.push((format!("star{n}"), Graph::star(n)));
    }
    for (r, c) in [(2, 3), (3, 3), (2, 5)] {
        out.push((format!("grid{r}x{c}"), Graph::grid(r, c)));
    }
    out
}

fn random_x(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    match rng.gen_range(0..3) {
        0 => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        1 => (0..n)
            .map(|_| if rng.gen_bool(0.3) { rng.sample::<f64, _>(StandardNormal) * 3.0 } else { 0.0 })
            .collect(),
        _ => (0..n).map(|_| rng.gen_range(0.0..1.0f64).powi(4)).collect(),
    }
}

#[test]
fn factors_hold_against_exact_oracle() {
    let seed = std::env::var("FACTOR_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(2024);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut head_worst, mut tail_worst) = (f64::INFINITY, 0.0f64);
    for (name, graph) in corpus() {
        let n = graph.node_count();
        for _ in 0..100 {
            let x = random_x(&mut rng, n);
            let k = rng.gen_range(1..=(n / 2).max(1));
            let g = rng.gen_range(1..=k.min(3));
            let m = SparsityModel::new(k, g).unwrap();
            let head = head_approx(&graph, &x, &m).unwrap();
            assert!(head.len() <= 2 * k && gamma(&graph, &head).unwrap() <= g);
            let opt = exact_head_opt(&graph, &x, &m).unwrap();
            let got = vector::norm2_on(&x, &head);
            if opt > 0.0 {
                head_worst = head_worst.min(got / opt);
            }
            assert!(got >= HEAD_FACTOR * opt - 1e-12, "{name} head {got} opt {opt} x {x:?} k {k} g {g}");
            let tail = tail_approx(&graph, &x, &m).unwrap();
            assert!(tail.len() <= 5 * k && gamma(&graph, &tail).unwrap() <= g);
            let (_, best) = exact_projection(&graph, &x, &m).unwrap();
            let resid = vector::residual_norm(&x, &tail);
            if best > 0.0 {
                tail_worst = tail_worst.max(resid / best);
            }
            assert!(resid <= TAIL_FACTOR * best + 1e-12, "{name} tail {resid} opt {best} x {x:?} k {k} g {g}");
        }
    }
    eprintln!("head worst ratio {head_worst}, tail worst ratio {tail_worst}");
}
