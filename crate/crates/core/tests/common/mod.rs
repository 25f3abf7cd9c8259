#![allow(dead_code)]

use filippov_consensus::graph::WeightedDigraph;
use filippov_consensus::nonlinear::MonotoneFn;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn weight(rng: &mut ChaCha8Rng) -> f64 {
    *[0.5, 1.0, 1.0, 2.0].choose(rng).unwrap()
}

fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn add_extra(rng: &mut ChaCha8Rng, edges: &mut Vec<(usize, usize, f64)>, n: usize, count: usize, ok: impl Fn(usize, usize) -> bool) {
    for _ in 0..count {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b && ok(a, b) && !edges.iter().any(|e| e.0 == a && e.1 == b) {
            let w = weight(rng);
            edges.push((a, b, w));
        }
    }
}

/// Hamiltonian cycle through a random order plus random chords.
pub fn strongly_connected(rng: &mut ChaCha8Rng, n: usize) -> WeightedDigraph {
    let order = shuffled(rng, n);
    let mut edges = Vec::new();
    for k in 0..n {
        let w = weight(rng);
        edges.push((order[k], order[(k + 1) % n], w));
    }
    if n == 2 {
        edges.truncate(2);
        edges.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    }
    add_extra(rng, &mut edges, n, n, |_, _| true);
    WeightedDigraph::new(n, &edges).unwrap()
}

/// Random rooted tree plus chords that never enter the root, so the root has
/// no in-edges and the graph is not strongly connected.
pub fn spanning_tree_not_sc(rng: &mut ChaCha8Rng, n: usize) -> WeightedDigraph {
    let order = shuffled(rng, n);
    let root = order[0];
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = order[rng.gen_range(0..k)];
        let w = weight(rng);
        edges.push((parent, order[k], w));
    }
    add_extra(rng, &mut edges, n, n, |_, b| b != root);
    WeightedDigraph::new(n, &edges).unwrap()
}

/// Undirected pairs of a random spanning tree plus chords.
pub fn undirected_connected_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    let order = shuffled(rng, n);
    let mut pairs = Vec::new();
    for k in 1..n {
        pairs.push((order[rng.gen_range(0..k)], order[k]));
    }
    for _ in 0..n / 2 {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b && !pairs.iter().any(|&(p, q)| (p, q) == (a, b) || (p, q) == (b, a)) {
            pairs.push((a, b));
        }
    }
    pairs
}

/// Random arborescence: every node except the root has exactly one parent.
pub fn directed_tree(rng: &mut ChaCha8Rng, n: usize) -> WeightedDigraph {
    let order = shuffled(rng, n);
    let edges: Vec<_> = (1..n)
        .map(|k| {
            let w = weight(rng);
            (order[rng.gen_range(0..k)], order[k], w)
        })
        .collect();
    WeightedDigraph::new(n, &edges).unwrap()
}

pub fn uniform_box(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Nondecreasing staircase from -6 to 6 with integer values and random
/// breakpoints in `[-6, 6]`.
pub fn staircase(rng: &mut ChaCha8Rng) -> MonotoneFn {
    let steps = rng.gen_range(2..=6);
    let mut values: Vec<f64> = vec![-6.0, 6.0];
    while values.len() < steps + 1 {
        let v = rng.gen_range(-5..=5) as f64;
        if !values.contains(&v) {
            values.push(v);
        }
    }
    values.sort_by(f64::total_cmp);
    let mut bps: Vec<f64> = Vec::new();
    while bps.len() < steps {
        let b = (rng.gen_range(-24..=24) as f64) / 4.0;
        if !bps.contains(&b) {
            bps.push(b);
        }
    }
    bps.sort_by(f64::total_cmp);
    MonotoneFn::piecewise_constant(bps, values, Default::default()).unwrap()
}

pub fn qs(delta: f64) -> MonotoneFn {
    MonotoneFn::sym_quantizer(delta).unwrap()
}
