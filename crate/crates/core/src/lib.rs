//! Worst-case coalitions in payment-channel networks and replay of mass channel
//! closures against historical Bitcoin mempool congestion.
//!
//! * [`graph`]: channel graph ingestion and synthetic scale-free graphs.
//! * [`cut`]: k-lopsided max-cut solvers (greedy and exact).
//! * [`mempool`]: fee-band timelines, block traces and the replay engine.
//! * [`zombie`] and [`doublespend`]: the two attack simulators.

pub mod cut;
pub mod doublespend;
pub mod graph;
pub mod mempool;
pub mod scenario;
pub mod zombie;

pub use cut::{
    cut_value, exact_lopsided_cut, greedy_lopsided_cut, value_vs_k_curve, Cut, CutExport, CutValue,
    GreedyTrace, Objective,
};
pub use doublespend::{
    expected_profit, profit_vs_k, realized_profit, simulate_double_spend, to_self_delay,
    AttackedChannel, AttackerStrategy, DelayPolicy, DoubleSpendConfig, DoubleSpendReport, Outcome,
    PenaltyStrategy, ProfitMode,
};
pub use graph::{
    degree_histogram, generate_scale_free, parse_edge_list, parse_lnd_graph, CapacitySampler,
    Channel, LnGraph, NodeId,
};
pub use mempool::{
    BlockCapacityMode, BlockEntry, BlockTrace, FeeHistogram, FeeRate, MempoolTimeline,
    MonitoredTx, ReplayEngine, TxId, TxStatus,
};
pub use scenario::{FeeStrategy, Scenario, SimError};
pub use zombie::{simulate_zombie, sweep_zombie, ZombieConfig, ZombieReport};

/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "LNME_THREADS";

/// Thread pool sized by `LNME_THREADS` (all cores when unset or invalid).
pub fn thread_pool_from_env() -> rayon::ThreadPool {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    thread_pool(threads)
}

/// Thread pool with `threads` workers; 0 means rayon's default.
pub fn thread_pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool construction")
}
