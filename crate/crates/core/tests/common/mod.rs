#![allow(dead_code)]

use lnme_core::graph::GraphBuilder;
use lnme_core::mempool::default_band_edges;
use lnme_core::{BlockTrace, LnGraph, MempoolTimeline, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// G(n, p) with either unit capacities or capacities uniform in 1..=1000.
pub fn random_graph(seed: u64, n: usize, p: f64, unit: bool) -> LnGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new();
    let nodes: Vec<_> = (0..n).map(|i| b.node(&format!("n{i}"))).collect();
    let mut id = 0;
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                let cap = if unit { 1 } else { rng.random_range(1..=1000) };
                b.add_channel(format!("c{id}"), nodes[i], nodes[j], cap).unwrap();
                id += 1;
                // occasional parallel channel
                if rng.random_bool(0.05) {
                    b.add_channel(format!("c{id}"), nodes[i], nodes[j], cap).unwrap();
                    id += 1;
                }
            }
        }
    }
    b.build()
}

/// Best k-subset value by scanning every bitmask of popcount k.
/// Independent of the solver's combination walk and membership code.
pub fn brute_force_best(g: &LnGraph, k: usize, objective: Objective) -> u64 {
    let n = g.node_count();
    assert!(n <= 20);
    let edges: Vec<(usize, usize, u64)> = g
        .channels()
        .iter()
        .map(|c| (c.node_a.index(), c.node_b.index(), objective.weight(c.capacity)))
        .collect();
    let mut best = 0;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let v: u64 = edges
            .iter()
            .filter(|(a, b, _)| (mask >> a & 1) != (mask >> b & 1))
            .map(|e| e.2)
            .sum();
        best = best.max(v);
    }
    best
}

pub const BAND_COUNT: usize = 36;

/// All-zero timeline covering `blocks` ten-minute blocks from t = 0.
pub fn empty_world(blocks: usize, txs_per_block: u64) -> (MempoolTimeline, BlockTrace) {
    constant_world(vec![0; BAND_COUNT], blocks, txs_per_block)
}

pub fn constant_world(counts: Vec<u64>, blocks: usize, txs_per_block: u64) -> (MempoolTimeline, BlockTrace) {
    let end = blocks as i64 * 600;
    let tl = MempoolTimeline::constant(default_band_edges(), counts, 0, end, 60).unwrap();
    let bt = BlockTrace::synthetic(1, 600, blocks, txs_per_block, 600).unwrap();
    (tl, bt)
}

/// Per-minute snapshots with random walk counts in every band.
pub fn random_world(seed: u64, blocks: usize, scale: u64) -> (MempoolTimeline, BlockTrace) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let minutes = blocks * 10;
    let mut counts: Vec<u64> = (0..BAND_COUNT).map(|_| rng.random_range(0..=scale)).collect();
    let mut rows = Vec::with_capacity(minutes + 1);
    for m in 0..=minutes {
        rows.push((m as i64 * 60, counts.clone()));
        for c in counts.iter_mut() {
            let delta = rng.random_range(0..=scale / 10 + 1) as i64 - (scale / 20) as i64;
            *c = (*c as i64 + delta).max(0) as u64;
        }
    }
    let tl = MempoolTimeline::new(default_band_edges(), rows).unwrap();
    let entries = (0..blocks)
        .map(|i| lnme_core::BlockEntry {
            height: 500_000 + i as u64,
            timestamp: 600 * (i as i64 + 1),
            tx_count: rng.random_range(0..=3000),
        })
        .collect();
    (tl, BlockTrace::new(entries).unwrap())
}
