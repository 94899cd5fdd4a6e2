//! Mass double-spend attack.
//!
//! The coalition broadcasts revoked commitments for every attacked channel at
//! once. When a commitment confirms, the victim's watchtower immediately
//! broadcasts a penalty transaction. If the penalty is still pending once the
//! channel's `to_self_delay` has elapsed, the attacker broadcasts a sweep that
//! moves the funds out. Whichever of penalty and sweep confirms first decides
//! the channel.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::cut::{greedy_lopsided_cut, CutExport, Objective};
use crate::graph::{Channel, LnGraph};
use crate::mempool::{FeeRate, ReplayEngine, TxId, TxStatus};
use crate::scenario::{validate_bumps, FeeStrategy, Scenario, SimError};

/// lnd's maximum channel size for non-wumbo channels.
pub const DEFAULT_MAX_FUNDING_SAT: u64 = 16_777_215;
pub const DEFAULT_MAX_DELAY: u32 = 2016;
pub const DEFAULT_MIN_DELAY: u32 = 144;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayPolicy {
    Fixed { blocks: u32 },
    /// Delay proportional to capacity, clamped to `[min_delay, max_delay]`.
    CapacityScaled {
        max_funding: u64,
        max_delay: u32,
        min_delay: u32,
    },
}

impl DelayPolicy {
    pub fn scaled_default() -> Self {
        DelayPolicy::CapacityScaled {
            max_funding: DEFAULT_MAX_FUNDING_SAT,
            max_delay: DEFAULT_MAX_DELAY,
            min_delay: DEFAULT_MIN_DELAY,
        }
    }
}

/// `round(capacity / max_funding · max_delay)` clamped, or the fixed value.
pub fn to_self_delay(capacity: u64, policy: DelayPolicy) -> u32 {
    match policy {
        DelayPolicy::Fixed { blocks } => blocks,
        DelayPolicy::CapacityScaled {
            max_funding,
            max_delay,
            min_delay,
        } => {
            let num = capacity as u128 * max_delay as u128;
            let den = max_funding.max(1) as u128;
            let rounded = (2 * num + den) / (2 * den);
            rounded.clamp(min_delay as u128, max_delay as u128) as u32
        }
    }
}

/// Victim policy. The first fee is always the mempool's average fee at the
/// moment the penalty is broadcast.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyStrategy {
    Static,
    /// Multiply the fee by `beta` every `step` blocks after broadcast.
    Dynamic { step: u32, beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AttackerStrategy {
    pub commitment_fee: FeeRate,
    pub sweep: FeeStrategy,
}

impl AttackerStrategy {
    /// Sweeps at a fixed 100 sat/vByte.
    pub fn with_commitment_fee(commitment_fee: FeeRate) -> Self {
        AttackerStrategy {
            commitment_fee,
            sweep: FeeStrategy::Static {
                fee: FeeRate::from_sat_per_vb(100),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DoubleSpendConfig {
    pub honest: PenaltyStrategy,
    pub attacker: AttackerStrategy,
    pub delay: DelayPolicy,
    /// When set, a penalty stops being valid once the delay expires, so the
    /// sweep wins as soon as it is broadcast. Off by default: the victim can
    /// still win the race until the sweep actually confirms.
    pub strict_expiry: bool,
}

/// Channel under attack: identifier and capacity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttackedChannel {
    pub id: String,
    pub capacity: u64,
}

impl From<&Channel> for AttackedChannel {
    fn from(c: &Channel) -> Self {
        AttackedChannel {
            id: c.id.clone(),
            capacity: c.capacity,
        }
    }
}

impl AttackedChannel {
    pub fn from_cut_export(cut: &CutExport) -> Vec<AttackedChannel> {
        cut.cut_channels
            .iter()
            .map(|c| AttackedChannel {
                id: c.id.clone(),
                capacity: c.capacity_sat,
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Undecided,
    Compromised,
    Defended,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChannelRecord {
    pub id: String,
    pub capacity_sat: u64,
    pub delay: u32,
    pub commitment_height: Option<u64>,
    pub penalty_submitted: Option<u64>,
    pub penalty_height: Option<u64>,
    pub sweep_submitted: Option<u64>,
    pub sweep_height: Option<u64>,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DoubleSpendReport {
    pub attacked: u64,
    pub compromised: u64,
    pub defended: u64,
    pub undecided: u64,
    pub blocks_replayed: u64,
    pub per_channel: Vec<ChannelRecord>,
    /// `(height, cumulative compromised)` after each block.
    pub series: Vec<(u64, u64)>,
}

impl DoubleSpendReport {
    pub fn series_csv(&self) -> String {
        let mut out = String::from("height,cumulative_compromised\n");
        for (h, c) in &self.series {
            out.push_str(&format!("{h},{c}\n"));
        }
        out
    }
}

const COMMITMENT: u64 = 0;
const PENALTY: u64 = 1;
const SWEEP: u64 = 2;

fn tx_id(channel: usize, kind: u64) -> TxId {
    TxId(channel as u64 * 3 + kind)
}

fn split_id(id: TxId) -> (usize, u64) {
    ((id.0 / 3) as usize, id.0 % 3)
}

/// Replays the attack over `scenario`.
///
/// Commitments all go out at the start with one shared fee. Transactions that
/// confirm in the same block are settled in priority order, so if a penalty
/// and its sweep land together the higher-priority one wins. Channels not
/// settled when the horizon ends are reported as undecided.
pub fn simulate_double_spend(
    channels: &[AttackedChannel],
    config: &DoubleSpendConfig,
    scenario: &Scenario<'_>,
) -> Result<DoubleSpendReport, SimError> {
    if let PenaltyStrategy::Dynamic { step, beta } = config.honest {
        validate_bumps(step, beta)?;
    }
    let sweep = config.attacker.sweep.validate()?;
    let blocks = scenario.horizon()?;

    let mut records: Vec<ChannelRecord> = channels
        .iter()
        .map(|c| ChannelRecord {
            id: c.id.clone(),
            capacity_sat: c.capacity,
            delay: to_self_delay(c.capacity, config.delay),
            commitment_height: None,
            penalty_submitted: None,
            penalty_height: None,
            sweep_submitted: None,
            sweep_height: None,
            outcome: Outcome::Undecided,
        })
        .collect();

    let mut engine = ReplayEngine::new(scenario.timeline);
    for i in 0..records.len() {
        engine.submit(tx_id(i, COMMITMENT), config.attacker.commitment_fee, scenario.start)?;
    }

    let mut sweeps_due: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut bumps_due: BTreeMap<u64, Vec<TxId>> = BTreeMap::new();
    let mut undecided = records.len();
    let mut compromised = 0u64;
    let mut series = Vec::new();

    for block in blocks {
        if undecided == 0 {
            break;
        }
        let h = block.height;
        let confirmed = engine.replay_block(block, scenario.capacity)?;

        let mut new_commitments = Vec::new();
        for tx in &confirmed {
            let (ch, kind) = split_id(tx.id);
            let rec = &mut records[ch];
            match kind {
                COMMITMENT => {
                    rec.commitment_height = Some(h);
                    new_commitments.push(ch);
                }
                PENALTY if rec.outcome == Outcome::Undecided => {
                    rec.penalty_height = Some(h);
                    rec.outcome = Outcome::Defended;
                    undecided -= 1;
                    if rec.sweep_submitted.is_some() {
                        let _ = engine.withdraw(tx_id(ch, SWEEP));
                    }
                }
                SWEEP if rec.outcome == Outcome::Undecided => {
                    rec.sweep_height = Some(h);
                    rec.outcome = Outcome::Compromised;
                    undecided -= 1;
                    compromised += 1;
                    let _ = engine.withdraw(tx_id(ch, PENALTY));
                }
                // loser of a same-block race is a conflicting double-spend
                _ => {}
            }
        }

        let penalty_fee = engine.current_snapshot().average_fee();
        for ch in new_commitments {
            let id = tx_id(ch, PENALTY);
            engine.submit(id, penalty_fee, block.timestamp)?;
            records[ch].penalty_submitted = Some(h);
            if let PenaltyStrategy::Dynamic { step, .. } = config.honest {
                bumps_due.entry(h + step as u64).or_default().push(id);
            }
            sweeps_due
                .entry(h + records[ch].delay as u64)
                .or_default()
                .push(ch);
        }

        // Delays of zero fall due at `h` itself; anything earlier is stale.
        while let Some(entry) = sweeps_due.first_entry() {
            if *entry.key() > h {
                break;
            }
            for ch in entry.remove() {
                if records[ch].outcome != Outcome::Undecided {
                    continue;
                }
                if config.strict_expiry {
                    let _ = engine.withdraw(tx_id(ch, PENALTY));
                }
                let id = tx_id(ch, SWEEP);
                engine.submit(id, sweep.initial_fee(), block.timestamp)?;
                records[ch].sweep_submitted = Some(h);
                if let Some((step, _)) = sweep.bump_schedule() {
                    bumps_due.entry(h + step as u64).or_default().push(id);
                }
            }
        }

        while let Some(entry) = bumps_due.first_entry() {
            if *entry.key() > h {
                break;
            }
            for id in entry.remove() {
                let Some(tx) = engine.get(id) else { continue };
                if tx.status != TxStatus::Pending {
                    continue;
                }
                let (step, beta) = match split_id(id).1 {
                    PENALTY => match config.honest {
                        PenaltyStrategy::Dynamic { step, beta } => (step, beta),
                        PenaltyStrategy::Static => continue,
                    },
                    _ => match sweep.bump_schedule() {
                        Some(s) => s,
                        None => continue,
                    },
                };
                let bumped = tx.fee.scale(beta);
                if bumped > tx.fee {
                    engine.bump(id, bumped, block.timestamp)?;
                }
                bumps_due.entry(h + step as u64).or_default().push(id);
            }
        }

        series.push((h, compromised));
    }

    let defended = records
        .iter()
        .filter(|r| r.outcome == Outcome::Defended)
        .count() as u64;
    Ok(DoubleSpendReport {
        attacked: records.len() as u64,
        compromised,
        defended,
        undecided: undecided as u64,
        blocks_replayed: series.len() as u64,
        per_channel: records,
        series,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "capacity_sat", rename_all = "snake_case")]
pub enum ProfitMode {
    /// Every channel is assumed to hold this capacity.
    AverageCapacity(u64),
    /// Each channel's own capacity.
    PerChannel,
}

/// Attacker profit in satoshis, assuming the attacker's balance in each
/// channel is half its capacity: a compromised channel gains `c/2`, a defended
/// one loses `c/2`. Half-satoshi remainders round toward negative infinity.
///
/// Undecided channels make the result an error unless `exclude_undecided` is
/// set, in which case they are left out of both terms.
pub fn realized_profit(
    report: &DoubleSpendReport,
    mode: ProfitMode,
    exclude_undecided: bool,
) -> Result<i64, SimError> {
    if report.undecided > 0 && !exclude_undecided {
        return Err(SimError::UndecidedChannels(report.undecided as usize));
    }
    let twice: i128 = match mode {
        ProfitMode::AverageCapacity(c) => {
            let n = report.compromised as i128;
            let lost = report.defended as i128;
            c as i128 * n - c as i128 * lost
        }
        ProfitMode::PerChannel => report
            .per_channel
            .iter()
            .map(|r| match r.outcome {
                Outcome::Compromised => r.capacity_sat as i128,
                Outcome::Defended => -(r.capacity_sat as i128),
                Outcome::Undecided => 0,
            })
            .sum(),
    };
    Ok(twice.div_euclid(2) as i64)
}

/// `(p − 1/2) · cut capacity` for success probability `p`, in satoshis.
pub fn expected_profit(cut_capacity: u64, p: f64) -> Result<i64, SimError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SimError::Param(format!("probability {p} outside [0, 1]")));
    }
    Ok(((p - 0.5) * cut_capacity as f64).round() as i64)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProfitRow {
    pub k: usize,
    pub attacked: u64,
    pub compromised: u64,
    pub defended: u64,
    pub undecided: u64,
    pub cut_capacity_sat: u64,
    pub profit_per_channel_sat: i64,
    /// Profit with every channel valued at the mean attacked capacity.
    pub profit_average_sat: i64,
}

/// For each `k`, solves the capacity-weighted cut greedily, attacks its channels
/// and reports realized profit (undecided channels excluded). Runs in parallel;
/// rows follow the order of `ks`.
pub fn profit_vs_k(
    graph: &LnGraph,
    ks: &[usize],
    config: &DoubleSpendConfig,
    scenario: &Scenario<'_>,
) -> Result<Vec<ProfitRow>, SimError> {
    ks.par_iter()
        .map(|&k| {
            if k == 0 {
                return Ok(ProfitRow {
                    k,
                    attacked: 0,
                    compromised: 0,
                    defended: 0,
                    undecided: 0,
                    cut_capacity_sat: 0,
                    profit_per_channel_sat: 0,
                    profit_average_sat: 0,
                });
            }
            let (cut, _) = greedy_lopsided_cut(graph, k, Objective::Capacity)?;
            let channels: Vec<AttackedChannel> = cut
                .cut_channels
                .iter()
                .map(|&i| AttackedChannel::from(graph.channel(i)))
                .collect();
            let report = simulate_double_spend(&channels, config, scenario)?;
            let mean = mean_capacity(&channels);
            Ok(ProfitRow {
                k,
                attacked: report.attacked,
                compromised: report.compromised,
                defended: report.defended,
                undecided: report.undecided,
                cut_capacity_sat: cut.cut_capacity,
                profit_per_channel_sat: realized_profit(&report, ProfitMode::PerChannel, true)?,
                profit_average_sat: realized_profit(&report, ProfitMode::AverageCapacity(mean), true)?,
            })
        })
        .collect()
}

/// Mean capacity rounded to the nearest satoshi (0 for no channels).
pub fn mean_capacity(channels: &[AttackedChannel]) -> u64 {
    if channels.is_empty() {
        return 0;
    }
    let sum: u128 = channels.iter().map(|c| c.capacity as u128).sum();
    let n = channels.len() as u128;
    ((2 * sum + n) / (2 * n)) as u64
}
