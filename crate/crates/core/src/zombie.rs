//! Zombie attack: every channel of an unresponsive coalition must be force
//! closed at once, and the closing transactions compete with historical
//! mempool traffic.

use rayon::prelude::*;
use serde::Serialize;

use crate::cut::Cut;
use crate::mempool::{FeeRate, ReplayEngine, TxId};
use crate::scenario::{FeeStrategy, Scenario, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZombieConfig {
    pub channel_count: u64,
    pub strategy: FeeStrategy,
}

impl ZombieConfig {
    pub fn new(channel_count: u64, strategy: FeeStrategy) -> Self {
        ZombieConfig {
            channel_count,
            strategy,
        }
    }

    /// Only the number of cut channels matters; capacities do not affect
    /// closing delays.
    pub fn from_cut(cut: &Cut, strategy: FeeStrategy) -> Self {
        Self::new(cut.edge_count, strategy)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ZombieReport {
    /// `(height, channels still open)` after each replayed block.
    pub series: Vec<(u64, u64)>,
    /// Blocks from the start until the last closing transaction confirmed, or
    /// the number of blocks replayed when the horizon ran out first.
    pub blocks_to_close_all: u64,
    pub horizon_exhausted: bool,
}

impl ZombieReport {
    pub fn remaining(&self) -> u64 {
        self.series.last().map_or(0, |&(_, r)| r)
    }

    /// CSV `height,remaining`.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("height,remaining\n");
        for (h, r) in &self.series {
            out.push_str(&format!("{h},{r}\n"));
        }
        out
    }
}

/// Submits all closing transactions at the scenario start and replays blocks
/// until every one has confirmed or the horizon ends. Channel dispute delays
/// are not modeled. Under a dynamic strategy all still-pending transactions are
/// bumped together every `step` blocks.
pub fn simulate_zombie(config: &ZombieConfig, scenario: &Scenario<'_>) -> Result<ZombieReport, SimError> {
    if config.channel_count == 0 {
        return Err(SimError::Param("channel_count must be at least 1".into()));
    }
    let strategy = config.strategy.validate()?;
    let blocks = scenario.horizon()?;
    let mut engine = ReplayEngine::new(scenario.timeline);
    let mut fee = strategy.initial_fee();
    for i in 0..config.channel_count {
        engine.submit(TxId(i), fee, scenario.start)?;
    }

    let mut remaining = config.channel_count;
    let mut series = Vec::new();
    for (j, block) in blocks.iter().enumerate() {
        let confirmed = engine.replay_block(block, scenario.capacity)?;
        remaining -= confirmed.len() as u64;
        series.push((block.height, remaining));
        if remaining == 0 {
            return Ok(ZombieReport {
                series,
                blocks_to_close_all: j as u64 + 1,
                horizon_exhausted: false,
            });
        }
        if let Some((step, beta)) = strategy.bump_schedule() {
            if (j as u64 + 1).is_multiple_of(step as u64) {
                let bumped = fee.scale(beta);
                if bumped > fee {
                    engine.bump_pending(bumped, block.timestamp)?;
                }
                fee = bumped;
            }
        }
    }
    Ok(ZombieReport {
        blocks_to_close_all: series.len() as u64,
        series,
        horizon_exhausted: true,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZombieSweepRow {
    pub channel_count: u64,
    pub strategy: FeeStrategy,
    pub blocks_to_close_all: u64,
    pub horizon_exhausted: bool,
}

/// One simulation per config, run in parallel on the current rayon pool.
/// Rows come back in input order.
pub fn sweep_zombie(configs: &[ZombieConfig], scenario: &Scenario<'_>) -> Result<Vec<ZombieSweepRow>, SimError> {
    if configs.is_empty() {
        return Err(SimError::Param("empty sweep".into()));
    }
    configs
        .par_iter()
        .map(|c| {
            simulate_zombie(c, scenario).map(|r| ZombieSweepRow {
                channel_count: c.channel_count,
                strategy: c.strategy,
                blocks_to_close_all: r.blocks_to_close_all,
                horizon_exhausted: r.horizon_exhausted,
            })
        })
        .collect()
}

/// CSV `channels,strategy,fee,step,beta,blocks_to_close_all,horizon_exhausted`.
pub fn sweep_csv(rows: &[ZombieSweepRow]) -> String {
    let mut out = String::from("channels,strategy,fee,step,beta,blocks_to_close_all,horizon_exhausted\n");
    for r in rows {
        let (kind, fee, step, beta) = match r.strategy {
            FeeStrategy::Static { fee } => ("static", fee, String::new(), String::new()),
            FeeStrategy::Dynamic {
                initial_fee,
                step,
                beta,
            } => ("dynamic", initial_fee, step.to_string(), beta.to_string()),
        };
        out.push_str(&format!(
            "{},{kind},{fee},{step},{beta},{},{}\n",
            r.channel_count, r.blocks_to_close_all, r.horizon_exhausted
        ));
    }
    out
}

/// Static-fee configs for each fee in `fees`.
pub fn fee_sweep(channel_count: u64, fees: &[FeeRate]) -> Vec<ZombieConfig> {
    fees.iter()
        .map(|&fee| ZombieConfig::new(channel_count, FeeStrategy::Static { fee }))
        .collect()
}
