//! Replay windows and fee strategies shared by the attack simulators.

use serde::Serialize;
use thiserror::Error;

use crate::mempool::{BlockCapacityMode, BlockEntry, BlockTrace, FeeRate, MempoolError, MempoolTimeline};

/// 2017-12-07 08:15 CDT. First block mined after it is #498084.
pub const SCENARIO_1_START: i64 = 1_512_656_100;
/// 2022-01-01 00:00 CDT.
pub const SCENARIO_2_START: i64 = 1_641_016_800;
pub const SCENARIO_1_FIRST_BLOCK: u64 = 498_084;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Mempool(#[from] MempoolError),
    #[error("scenario start {start} is outside the timeline [{first}, {last}]")]
    StartOutsideTimeline { start: i64, first: i64, last: i64 },
    #[error("no block in the trace falls inside the timeline after {start}")]
    NoBlocks { start: i64 },
    #[error("invalid strategy: {0}")]
    Strategy(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("{0} channels are still undecided; exclude them explicitly to compute profit")]
    UndecidedChannels(usize),
    #[error(transparent)]
    Cut(#[from] crate::cut::CutError),
}

/// A replay window over immutable historical data.
#[derive(Clone, Copy, Debug)]
pub struct Scenario<'a> {
    pub timeline: &'a MempoolTimeline,
    pub blocks: &'a BlockTrace,
    pub capacity: BlockCapacityMode,
    /// Attack start (unix seconds). Blocks stamped before it are skipped.
    pub start: i64,
}

impl<'a> Scenario<'a> {
    pub fn new(
        timeline: &'a MempoolTimeline,
        blocks: &'a BlockTrace,
        capacity: BlockCapacityMode,
        start: i64,
    ) -> Self {
        Scenario {
            timeline,
            blocks,
            capacity,
            start,
        }
    }

    /// High-congestion window: historical block sizes from the Dec 2017 start.
    pub fn preset_1(timeline: &'a MempoolTimeline, blocks: &'a BlockTrace) -> Self {
        Self::new(timeline, blocks, BlockCapacityMode::Historical, SCENARIO_1_START)
    }

    /// Typical-congestion window from Jan 2022. Blocks are assumed full at the
    /// scenario-1 average, since the injected transactions would fill them.
    pub fn preset_2(
        timeline: &'a MempoolTimeline,
        blocks: &'a BlockTrace,
        scenario_1_avg_tx_per_block: u64,
    ) -> Self {
        Self::new(
            timeline,
            blocks,
            BlockCapacityMode::ConstantAverage(scenario_1_avg_tx_per_block),
            SCENARIO_2_START,
        )
    }

    /// Blocks replayed by a simulation: from `start` up to the end of the
    /// timeline or trace, whichever comes first.
    pub fn horizon(&self) -> Result<&'a [BlockEntry], SimError> {
        self.capacity.validate()?;
        let (first, last) = (self.timeline.first_timestamp(), self.timeline.last_timestamp());
        if !(first..=last).contains(&self.start) {
            return Err(SimError::StartOutsideTimeline {
                start: self.start,
                first,
                last,
            });
        }
        let from_start = self.blocks.from_time(self.start);
        let end = from_start.partition_point(|b| b.timestamp <= last);
        if end == 0 {
            return Err(SimError::NoBlocks { start: self.start });
        }
        Ok(&from_start[..end])
    }
}

/// Fee policy for one party's transactions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeeStrategy {
    Static { fee: FeeRate },
    /// Every `step` blocks the fee of each pending transaction is multiplied by
    /// `beta` (rounded half up to 0.01 sat/vByte).
    Dynamic {
        initial_fee: FeeRate,
        step: u32,
        beta: f64,
    },
}

impl FeeStrategy {
    pub fn initial_fee(&self) -> FeeRate {
        match *self {
            FeeStrategy::Static { fee } => fee,
            FeeStrategy::Dynamic { initial_fee, .. } => initial_fee,
        }
    }

    /// `(step, beta)` for dynamic strategies.
    pub fn bump_schedule(&self) -> Option<(u32, f64)> {
        match *self {
            FeeStrategy::Static { .. } => None,
            FeeStrategy::Dynamic { step, beta, .. } => Some((step, beta)),
        }
    }

    pub fn validate(self) -> Result<Self, SimError> {
        if let Some((step, beta)) = self.bump_schedule() {
            validate_bumps(step, beta)?;
        }
        Ok(self)
    }
}

pub(crate) fn validate_bumps(step: u32, beta: f64) -> Result<(), SimError> {
    if step < 1 {
        return Err(SimError::Strategy("step must be at least 1 block".into()));
    }
    if !(beta.is_finite() && beta > 1.0) {
        return Err(SimError::Strategy(format!("beta must be > 1 (got {beta})")));
    }
    Ok(())
}
