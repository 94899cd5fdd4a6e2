//! Historical mempool congestion and the replay engine.
//!
//! Historical traffic is never simulated transaction by transaction. It is read
//! as an overlay: per-minute counts of pending transactions in fixed fee bands,
//! plus a per-block transaction count. Monitored transactions (the ones a
//! simulation cares about) confirm in a block when the number of historical
//! transactions ahead of them is smaller than the block's remaining room.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MempoolError {
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("timeline has no snapshots")]
    EmptyTimeline,
    #[error("block trace has no entries")]
    EmptyTrace,
    #[error("timestamps not increasing at {timestamp}")]
    NonMonotoneTimestamp { timestamp: i64 },
    #[error("fee band edges must be strictly ascending")]
    BandEdges,
    #[error("block height gap: {prev} followed by {next}")]
    HeightGap { prev: u64, next: u64 },
    #[error("time {t} outside timeline range [{first}, {last}]")]
    OutOfRange { t: i64, first: i64, last: i64 },
    #[error("engine is at time {now}, cannot go back to {t}")]
    TimeReversal { now: i64, t: i64 },
    #[error("duplicate transaction id {0}")]
    DuplicateTx(TxId),
    #[error("unknown transaction id {0}")]
    UnknownTx(TxId),
    #[error("transaction {0} is not pending")]
    NotPending(TxId),
    #[error("bump of {id} must raise the fee (current {current}, requested {requested})")]
    FeeNotIncreased {
        id: TxId,
        current: FeeRate,
        requested: FeeRate,
    },
    #[error("block {height} is not after block {last}")]
    OutOfOrderBlock { height: u64, last: u64 },
    #[error("invalid fee rate {0:?}")]
    InvalidFee(String),
    #[error("average transactions per block must be positive")]
    ZeroCapacity,
}

/// Fee rate in hundredths of a sat/vByte.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(into = "f64")]
pub struct FeeRate(u64);

impl FeeRate {
    pub const ZERO: FeeRate = FeeRate(0);

    pub const fn from_centi(centi: u64) -> Self {
        FeeRate(centi)
    }

    pub const fn from_sat_per_vb(sat: u64) -> Self {
        FeeRate(sat * 100)
    }

    /// Rounds half up to the nearest 0.01 sat/vByte.
    pub fn from_f64(sat_per_vb: f64) -> Option<Self> {
        if !sat_per_vb.is_finite() || sat_per_vb < 0.0 {
            return None;
        }
        Some(FeeRate((sat_per_vb * 100.0 + 0.5).floor() as u64))
    }

    pub const fn centi(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// `self · factor`, rounded half up to the fixed-point grid.
    pub fn scale(self, factor: f64) -> FeeRate {
        FeeRate((self.0 as f64 * factor + 0.5).floor() as u64)
    }
}

impl From<FeeRate> for f64 {
    fn from(f: FeeRate) -> f64 {
        f.as_f64()
    }
}

impl fmt::Display for FeeRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl FromStr for FeeRate {
    type Err = MempoolError;

    /// Exact decimal parse; more than two fractional digits are rejected.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MempoolError::InvalidFee(s.to_string());
        let s = s.trim();
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
            || frac.len() > 2
        {
            return Err(bad());
        }
        let whole: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let cents: u64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<u64>().map_err(|_| bad())? * 10,
            _ => frac.parse().map_err(|_| bad())?,
        };
        whole
            .checked_mul(100)
            .and_then(|w| w.checked_add(cents))
            .map(FeeRate)
            .ok_or_else(bad)
    }
}

/// Band lower edges of the public per-minute mempool dataset, in sat/vByte.
pub const DEFAULT_BAND_EDGES: [u64; 36] = [
    0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 12, 15, 20, 30, 40, 50, 60, 70, 80, 100, 120, 150, 200, 250,
    300, 350, 400, 500, 600, 700, 800, 1000, 1200, 1400, 1700, 2000,
];

pub fn default_band_edges() -> Vec<FeeRate> {
    DEFAULT_BAND_EDGES
        .iter()
        .map(|&e| FeeRate::from_sat_per_vb(e))
        .collect()
}

/// Pending-transaction counts per fee band. Band `i` covers
/// `[edges[i], edges[i+1])`; the last band is open-ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeeHistogram {
    edges: Arc<[FeeRate]>,
    counts: Vec<u64>,
}

impl FeeHistogram {
    pub fn new(edges: Vec<FeeRate>, counts: Vec<u64>) -> Result<Self, MempoolError> {
        if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MempoolError::BandEdges);
        }
        if counts.len() != edges.len() {
            return Err(MempoolError::Parse {
                line: 0,
                msg: format!("{} counts for {} bands", counts.len(), edges.len()),
            });
        }
        Ok(FeeHistogram {
            edges: edges.into(),
            counts,
        })
    }

    pub fn edges(&self) -> &[FeeRate] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Band containing `fee`, or `None` when the fee is below the lowest edge.
    pub fn band_of(&self, fee: FeeRate) -> Option<usize> {
        band_of(&self.edges, fee)
    }

    /// Transactions in bands strictly above `band` (all of them for `None`).
    pub fn count_above(&self, band: Option<usize>) -> u64 {
        match band {
            None => self.total(),
            Some(b) => self.counts[b + 1..].iter().sum(),
        }
    }

    /// Count-weighted mean of band representatives (midpoints, or the lower
    /// edge for the open top band), rounded half up. Falls back to the lowest
    /// edge for an empty mempool.
    pub fn average_fee(&self) -> FeeRate {
        let total = self.total();
        if total == 0 {
            return self.edges[0];
        }
        let last = self.edges.len() - 1;
        // accumulate in half-centi units so midpoints stay integral
        let mut halves: u128 = 0;
        for (i, &count) in self.counts.iter().enumerate() {
            let rep2 = if i == last {
                2 * self.edges[i].0
            } else {
                self.edges[i].0 + self.edges[i + 1].0
            };
            halves += rep2 as u128 * count as u128;
        }
        let denom = 2 * total as u128;
        FeeRate(((2 * halves + denom) / (2 * denom)) as u64)
    }

    /// Historical transactions that confirm before `tx`: everything in higher
    /// bands plus the same-band transactions it queued behind.
    pub fn higher_priority_count(&self, tx: &MonitoredTx) -> u64 {
        self.count_above(self.band_of(tx.fee)) + tx.same_band_ahead
    }
}

fn band_of(edges: &[FeeRate], fee: FeeRate) -> Option<usize> {
    edges.partition_point(|&e| e <= fee).checked_sub(1)
}

/// Time-ordered fee-band histograms sharing one set of band edges.
#[derive(Clone, Debug)]
pub struct MempoolTimeline {
    edges: Arc<[FeeRate]>,
    timestamps: Vec<i64>,
    snapshots: Vec<FeeHistogram>,
}

impl MempoolTimeline {
    pub fn new(
        edges: Vec<FeeRate>,
        rows: impl IntoIterator<Item = (i64, Vec<u64>)>,
    ) -> Result<Self, MempoolError> {
        if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MempoolError::BandEdges);
        }
        let edges: Arc<[FeeRate]> = edges.into();
        let mut timestamps = Vec::new();
        let mut snapshots = Vec::new();
        for (t, counts) in rows {
            if timestamps.last().is_some_and(|&prev| t <= prev) {
                return Err(MempoolError::NonMonotoneTimestamp { timestamp: t });
            }
            if counts.len() != edges.len() {
                return Err(MempoolError::Parse {
                    line: timestamps.len() as u64 + 2,
                    msg: format!("{} counts for {} bands", counts.len(), edges.len()),
                });
            }
            timestamps.push(t);
            snapshots.push(FeeHistogram {
                edges: edges.clone(),
                counts,
            });
        }
        if snapshots.is_empty() {
            return Err(MempoolError::EmptyTimeline);
        }
        Ok(MempoolTimeline {
            edges,
            timestamps,
            snapshots,
        })
    }

    /// Identical snapshot every `cadence` seconds over `[start, end]`.
    pub fn constant(
        edges: Vec<FeeRate>,
        counts: Vec<u64>,
        start: i64,
        end: i64,
        cadence: i64,
    ) -> Result<Self, MempoolError> {
        let cadence = cadence.max(1);
        let rows = (0..)
            .map(move |i| start + i * cadence)
            .take_while(move |&t| t <= end.max(start))
            .map(move |t| (t, counts.clone()));
        Self::new(edges, rows)
    }

    /// Parses `timestamp,<edge_0>,<edge_1>,...` followed by one row per snapshot.
    pub fn from_csv(document: &str) -> Result<Self, MempoolError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(document.as_bytes());
        let header = reader.headers()?.clone();
        if header.get(0) != Some("timestamp") || header.len() < 2 {
            return Err(MempoolError::Parse {
                line: 1,
                msg: "header must be `timestamp,<band edges...>`".into(),
            });
        }
        let edges = header
            .iter()
            .skip(1)
            .map(FeeRate::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| match e.kind() {
                csv::ErrorKind::UnequalLengths { pos, .. } => MempoolError::Parse {
                    line: pos.as_ref().map_or(0, |p| p.line()),
                    msg: "row arity does not match header".into(),
                },
                _ => MempoolError::Csv(e),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let parse_err = |msg: String| MempoolError::Parse { line, msg };
            let t: i64 = rec[0]
                .parse()
                .map_err(|_| parse_err(format!("bad timestamp {:?}", &rec[0])))?;
            let counts = rec
                .iter()
                .skip(1)
                .map(|c| {
                    c.parse::<u64>()
                        .map_err(|_| parse_err(format!("bad count {c:?} (must be a non-negative integer)")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push((t, counts));
        }
        Self::new(edges, rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp");
        for e in self.edges.iter() {
            out.push(',');
            out.push_str(&trim_fee(*e));
        }
        out.push('\n');
        for (t, h) in self.timestamps.iter().zip(&self.snapshots) {
            out.push_str(&t.to_string());
            for c in &h.counts {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn edges(&self) -> &[FeeRate] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn first_timestamp(&self) -> i64 {
        self.timestamps[0]
    }

    pub fn last_timestamp(&self) -> i64 {
        *self.timestamps.last().expect("timeline is non-empty")
    }

    pub fn contains(&self, t: i64) -> bool {
        (self.first_timestamp()..=self.last_timestamp()).contains(&t)
    }

    pub fn snapshot(&self, index: usize) -> (i64, &FeeHistogram) {
        (self.timestamps[index], &self.snapshots[index])
    }

    /// Index of the latest snapshot taken at or before `t`.
    pub fn index_at(&self, t: i64) -> Result<usize, MempoolError> {
        if !self.contains(t) {
            return Err(MempoolError::OutOfRange {
                t,
                first: self.first_timestamp(),
                last: self.last_timestamp(),
            });
        }
        Ok(self.timestamps.partition_point(|&s| s <= t) - 1)
    }

    /// Step interpolation: the latest snapshot with timestamp ≤ `t`.
    pub fn snapshot_at(&self, t: i64) -> Result<&FeeHistogram, MempoolError> {
        Ok(&self.snapshots[self.index_at(t)?])
    }
}

fn trim_fee(f: FeeRate) -> String {
    if f.centi().is_multiple_of(100) {
        (f.centi() / 100).to_string()
    } else {
        f.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BlockEntry {
    pub height: u64,
    pub timestamp: i64,
    pub tx_count: u64,
}

/// Consecutive historical blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockTrace {
    entries: Vec<BlockEntry>,
}

impl BlockTrace {
    /// Heights must be consecutive. Header timestamps may run backwards on the
    /// real chain; each timestamp is raised to the running maximum so the trace
    /// is non-decreasing in time.
    pub fn new(entries: Vec<BlockEntry>) -> Result<Self, MempoolError> {
        if entries.is_empty() {
            return Err(MempoolError::EmptyTrace);
        }
        let mut out: Vec<BlockEntry> = Vec::with_capacity(entries.len());
        for mut e in entries {
            if let Some(prev) = out.last() {
                if e.height != prev.height + 1 {
                    return Err(MempoolError::HeightGap {
                        prev: prev.height,
                        next: e.height,
                    });
                }
                e.timestamp = e.timestamp.max(prev.timestamp);
            }
            out.push(e);
        }
        Ok(BlockTrace { entries: out })
    }

    /// `count` blocks of `tx_count` transactions spaced `interval` seconds apart.
    pub fn synthetic(
        start_height: u64,
        start_timestamp: i64,
        count: usize,
        tx_count: u64,
        interval: i64,
    ) -> Result<Self, MempoolError> {
        Self::new(
            (0..count)
                .map(|i| BlockEntry {
                    height: start_height + i as u64,
                    timestamp: start_timestamp + i as i64 * interval,
                    tx_count,
                })
                .collect(),
        )
    }

    /// Parses `height,timestamp,tx_count` rows with an optional header.
    pub fn from_csv(document: &str) -> Result<Self, MempoolError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(document.as_bytes());
        let mut entries = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map_or(i as u64 + 1, |p| p.line());
            if i == 0 && rec.get(0) == Some("height") {
                continue;
            }
            if rec.len() == 1 && rec.get(0) == Some("") {
                continue;
            }
            if rec.len() != 3 {
                return Err(MempoolError::Parse {
                    line,
                    msg: format!("expected 3 fields, found {}", rec.len()),
                });
            }
            let field = |j: usize, what: &str| MempoolError::Parse {
                line,
                msg: format!("bad {what} {:?}", &rec[j]),
            };
            entries.push(BlockEntry {
                height: rec[0].parse().map_err(|_| field(0, "height"))?,
                timestamp: rec[1].parse().map_err(|_| field(1, "timestamp"))?,
                tx_count: rec[2].parse().map_err(|_| field(2, "tx_count (must be a non-negative integer)"))?,
            });
        }
        Self::new(entries)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("height,timestamp,tx_count\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.height, e.timestamp, e.tx_count));
        }
        out
    }

    pub fn entries(&self) -> &[BlockEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Blocks mined at or after `t`.
    pub fn from_time(&self, t: i64) -> &[BlockEntry] {
        let i = self.entries.partition_point(|e| e.timestamp < t);
        &self.entries[i..]
    }

    /// Mean transactions per block over `blocks`, rounded to nearest.
    pub fn average_tx_count(blocks: &[BlockEntry]) -> Option<u64> {
        if blocks.is_empty() {
            return None;
        }
        let sum: u128 = blocks.iter().map(|b| b.tx_count as u128).sum();
        let n = blocks.len() as u128;
        Some(((2 * sum + n) / (2 * n)) as u64)
    }
}

/// How many transactions a block holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "avg_tx_per_block", rename_all = "snake_case")]
pub enum BlockCapacityMode {
    /// The block's historical transaction count.
    Historical,
    /// Every block holds this many transactions.
    ConstantAverage(u64),
}

impl BlockCapacityMode {
    pub fn capacity(self, block: &BlockEntry) -> u64 {
        match self {
            BlockCapacityMode::Historical => block.tx_count,
            BlockCapacityMode::ConstantAverage(avg) => avg,
        }
    }

    pub fn validate(self) -> Result<Self, MempoolError> {
        match self {
            BlockCapacityMode::ConstantAverage(0) => Err(MempoolError::ZeroCapacity),
            m => Ok(m),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TxId(pub u64);

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tx{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "height", rename_all = "snake_case")]
pub enum TxStatus {
    Pending,
    Confirmed(u64),
    Withdrawn,
}

/// Snapshot of a monitored transaction's state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MonitoredTx {
    pub id: TxId,
    pub fee: FeeRate,
    pub submitted_at: i64,
    /// Historical same-band transactions still queued ahead of this one.
    pub same_band_ahead: u64,
    pub status: TxStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockEvent {
    pub height: u64,
    pub confirmed: Vec<TxId>,
}

#[derive(Clone, Debug)]
struct TxState {
    id: TxId,
    fee: FeeRate,
    submitted_at: i64,
    slot: usize,
    ticket: u64,
    status: TxStatus,
}

impl TxState {
    fn key(&self, handle: usize) -> QueueKey {
        (self.ticket, self.submitted_at, self.id, handle)
    }
}

type QueueKey = (u64, i64, TxId, usize);

/// Deterministic single-owner replay state.
///
/// Same-band queue positions are stored as tickets against the band's
/// cumulative outflow: a transaction that joined when the band held `c`
/// transactions and had already drained `d` gets ticket `c + d`, and its
/// current `same_band_ahead` is `ticket − drained` floored at zero. Per-band
/// outflow between consecutive snapshots is `max(0, count_i − count_{i+1})`.
/// Ordering by ticket is the same as ordering by `same_band_ahead` and then
/// submission time, so each band keeps a single sorted queue.
pub struct ReplayEngine<'a> {
    timeline: &'a MempoolTimeline,
    cursor: usize,
    now: i64,
    // slot 0 is "below the lowest band edge"; slot i + 1 is band i
    drained: Vec<u64>,
    queues: Vec<BTreeSet<QueueKey>>,
    txs: Vec<TxState>,
    by_id: HashMap<TxId, usize>,
    pending: usize,
    last_height: Option<u64>,
    log: Option<Vec<BlockEvent>>,
}

impl<'a> ReplayEngine<'a> {
    /// Engine positioned at the first snapshot of `timeline`.
    pub fn new(timeline: &'a MempoolTimeline) -> Self {
        let slots = timeline.edges().len() + 1;
        ReplayEngine {
            timeline,
            cursor: 0,
            now: timeline.first_timestamp(),
            drained: vec![0; slots],
            queues: vec![BTreeSet::new(); slots],
            txs: Vec::new(),
            by_id: HashMap::new(),
            pending: 0,
            last_height: None,
            log: None,
        }
    }

    /// Record `{height, confirmed ids}` for every replayed block.
    pub fn with_event_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn timeline(&self) -> &'a MempoolTimeline {
        self.timeline
    }

    pub fn now(&self) -> i64 {
        self.now
    }

    pub fn pending_count(&self) -> usize {
        self.pending
    }

    /// Ids of pending transactions in priority order.
    pub fn pending_ids(&self) -> Vec<TxId> {
        self.queues
            .iter()
            .rev()
            .flat_map(|q| q.iter().map(|&(_, _, id, _)| id))
            .collect()
    }

    pub fn current_snapshot(&self) -> &'a FeeHistogram {
        self.timeline.snapshot(self.cursor).1
    }

    /// Moves the clock to `t`, applying same-band outflow for every snapshot
    /// boundary crossed.
    pub fn advance_to(&mut self, t: i64) -> Result<(), MempoolError> {
        if t < self.now {
            return Err(MempoolError::TimeReversal { now: self.now, t });
        }
        let target = self.timeline.index_at(t)?;
        while self.cursor < target {
            let prev = self.timeline.snapshot(self.cursor).1;
            let next = self.timeline.snapshot(self.cursor + 1).1;
            decay_same_band_ahead(&mut self.drained[1..], prev, next);
            self.cursor += 1;
        }
        self.now = t;
        Ok(())
    }

    fn slot_of(&self, fee: FeeRate) -> usize {
        band_of(self.timeline.edges(), fee).map_or(0, |b| b + 1)
    }

    fn slot_count(&self, slot: usize) -> u64 {
        match slot {
            0 => 0,
            s => self.current_snapshot().counts()[s - 1],
        }
    }

    fn view(&self, handle: usize) -> MonitoredTx {
        let s = &self.txs[handle];
        MonitoredTx {
            id: s.id,
            fee: s.fee,
            submitted_at: s.submitted_at,
            same_band_ahead: s.ticket.saturating_sub(self.drained[s.slot]),
            status: s.status,
        }
    }

    pub fn get(&self, id: TxId) -> Option<MonitoredTx> {
        self.by_id.get(&id).map(|&h| self.view(h))
    }

    /// Registers a pending transaction queued behind the historical count of
    /// its band at `t`.
    pub fn submit(&mut self, id: TxId, fee: FeeRate, t: i64) -> Result<MonitoredTx, MempoolError> {
        if self.by_id.contains_key(&id) {
            return Err(MempoolError::DuplicateTx(id));
        }
        self.advance_to(t)?;
        let slot = self.slot_of(fee);
        let state = TxState {
            id,
            fee,
            submitted_at: t,
            slot,
            ticket: self.slot_count(slot) + self.drained[slot],
            status: TxStatus::Pending,
        };
        let handle = self.txs.len();
        self.queues[slot].insert(state.key(handle));
        self.txs.push(state);
        self.by_id.insert(id, handle);
        self.pending += 1;
        Ok(self.view(handle))
    }

    fn pending_handle(&self, id: TxId) -> Result<usize, MempoolError> {
        let h = *self.by_id.get(&id).ok_or(MempoolError::UnknownTx(id))?;
        if self.txs[h].status != TxStatus::Pending {
            return Err(MempoolError::NotPending(id));
        }
        Ok(h)
    }

    /// Replace-by-fee: the transaction re-enters the mempool at `new_fee` and
    /// queues behind the current historical count of its new band.
    pub fn bump(&mut self, id: TxId, new_fee: FeeRate, t: i64) -> Result<MonitoredTx, MempoolError> {
        let h = self.pending_handle(id)?;
        let current = self.txs[h].fee;
        if new_fee <= current {
            return Err(MempoolError::FeeNotIncreased {
                id,
                current,
                requested: new_fee,
            });
        }
        self.advance_to(t)?;
        let old_key = self.txs[h].key(h);
        self.queues[self.txs[h].slot].remove(&old_key);
        let slot = self.slot_of(new_fee);
        let ticket = self.slot_count(slot) + self.drained[slot];
        let s = &mut self.txs[h];
        s.fee = new_fee;
        s.submitted_at = t;
        s.slot = slot;
        s.ticket = ticket;
        self.queues[slot].insert(self.txs[h].key(h));
        Ok(self.view(h))
    }

    /// Bumps every pending transaction whose fee is below `new_fee`, with the
    /// same result as calling [`bump`](Self::bump) on each in turn. Queues are
    /// rebuilt in bulk. Returns the number of transactions bumped.
    pub fn bump_pending(&mut self, new_fee: FeeRate, t: i64) -> Result<usize, MempoolError> {
        self.advance_to(t)?;
        let slot = self.slot_of(new_fee);
        let ticket = self.slot_count(slot) + self.drained[slot];
        let mut moved = Vec::new();
        for q in &mut self.queues {
            let (bump, keep): (Vec<QueueKey>, Vec<QueueKey>) =
                std::mem::take(q).into_iter().partition(|&(.., h)| self.txs[h].fee < new_fee);
            *q = keep.into_iter().collect();
            moved.extend(bump.into_iter().map(|(.., h)| h));
        }
        for &h in &moved {
            let s = &mut self.txs[h];
            s.fee = new_fee;
            s.submitted_at = t;
            s.slot = slot;
            s.ticket = ticket;
        }
        let mut keys: Vec<QueueKey> = moved.iter().map(|&h| self.txs[h].key(h)).collect();
        keys.sort_unstable();
        let q = &mut self.queues[slot];
        if q.is_empty() {
            *q = keys.into_iter().collect();
        } else {
            q.extend(keys);
        }
        Ok(moved.len())
    }

    /// Drops a pending transaction (it was conflicted out).
    pub fn withdraw(&mut self, id: TxId) -> Result<MonitoredTx, MempoolError> {
        let h = self.pending_handle(id)?;
        let key = self.txs[h].key(h);
        self.queues[self.txs[h].slot].remove(&key);
        self.txs[h].status = TxStatus::Withdrawn;
        self.pending -= 1;
        Ok(self.view(h))
    }

    /// Mines one block and returns the monitored transactions it confirms, in
    /// priority order.
    ///
    /// Pending transactions are visited by band (highest first), then queue
    /// position, submission time and id. A transaction confirms iff the
    /// historical transactions ahead of it are fewer than the room left in the
    /// block; each confirmation uses one unit of room. Historical transactions
    /// pushed out by monitored ones are not re-queued.
    pub fn replay_block(
        &mut self,
        block: &BlockEntry,
        mode: BlockCapacityMode,
    ) -> Result<Vec<MonitoredTx>, MempoolError> {
        if let Some(last) = self.last_height {
            if block.height <= last {
                return Err(MempoolError::OutOfOrderBlock {
                    height: block.height,
                    last,
                });
            }
        }
        self.advance_to(block.timestamp)?;
        self.last_height = Some(block.height);

        let snapshot = self.current_snapshot();
        let mut remaining = mode.capacity(block);
        let mut above = snapshot.total();
        let mut above_by_slot = vec![0u64; self.queues.len()];
        above_by_slot[0] = above;
        for (i, &c) in snapshot.counts().iter().enumerate() {
            above -= c;
            above_by_slot[i + 1] = above;
        }

        // Once one transaction fails, every later one in priority order has at
        // least as many transactions ahead and less room, so the scan stops.
        let mut confirmed: Vec<usize> = Vec::new();
        'slots: for slot in (0..self.queues.len()).rev() {
            for &(ticket, _, _, handle) in &self.queues[slot] {
                let ahead = above_by_slot[slot] + ticket.saturating_sub(self.drained[slot]);
                if ahead < remaining {
                    confirmed.push(handle);
                    remaining -= 1;
                } else {
                    break 'slots;
                }
            }
        }

        for &h in &confirmed {
            let key = self.txs[h].key(h);
            self.queues[self.txs[h].slot].remove(&key);
            self.txs[h].status = TxStatus::Confirmed(block.height);
        }
        self.pending -= confirmed.len();
        let out: Vec<MonitoredTx> = confirmed.iter().map(|&h| self.view(h)).collect();
        if let Some(log) = self.log.as_mut() {
            log.push(BlockEvent {
                height: block.height,
                confirmed: out.iter().map(|t| t.id).collect(),
            });
        }
        Ok(out)
    }

    pub fn event_log(&self) -> Option<&[BlockEvent]> {
        self.log.as_deref()
    }

    /// Event log as JSON lines.
    pub fn event_log_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in self.log.iter().flatten() {
            out.push_str(&serde_json::to_string(ev).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}

/// Adds each band's outflow between consecutive snapshots to `drained`.
/// A pending transaction's `same_band_ahead` drops by exactly that outflow,
/// floored at zero; arrivals (count increases) queue behind it and change nothing.
pub fn decay_same_band_ahead(drained: &mut [u64], prev: &FeeHistogram, next: &FeeHistogram) {
    for ((d, &p), &n) in drained.iter_mut().zip(prev.counts()).zip(next.counts()) {
        *d += p.saturating_sub(n);
    }
}
