use ihr::graph::Graph;
use ihr::levy::simulate_increments;
use ihr::pipeline::{fit_data, FitDataOptions, FitReport};
use ihr::rng::stream;
use ihr::study::{gen_barabasi_albert, gen_model, ModelConfig};

fn fit_simulated(d: usize, a: usize, n: usize, seed: u64) -> (Graph, FitReport) {
    let mut rng = stream(seed, 0);
    let g = gen_barabasi_albert(d, a, &mut rng).unwrap();
    let spec = gen_model(&g, &ModelConfig::default(), &mut rng).unwrap();
    let panel = simulate_increments(&spec, n, 0.01, 1e-3, &mut rng).unwrap();
    let report = fit_data(&panel, &FitDataOptions::default(), &mut stream(seed, 1)).unwrap();
    (g, report)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn spanning_tree_recovers_generating_tree() {
    let hits = (0..3).filter(|&s| {
        let (g, r) = fit_simulated(5, 1, 100_000, 100 + s);
        r.tree.graph == g
    });
    assert!(hits.count() >= 2);
}

#[test]
fn selected_graph_implies_chi_closer_than_tree() {
    let (mut graph, mut tree) = (Vec::new(), Vec::new());
    for s in 0..5 {
        let (_, r) = fit_simulated(6, 2, 20_000, 200 + s);
        let (g, t) = r.chi_mad();
        graph.push(g);
        tree.push(t);
    }
    assert!(median(graph.clone()) < median(tree.clone()), "graph {graph:?} tree {tree:?}");
}
