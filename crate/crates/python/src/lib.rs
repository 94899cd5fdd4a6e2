//! Python bindings: graphs, lopsided cuts, mempool data and the two attack
//! simulations. Reports come back as plain dicts and lists.

use lnme_core::cut::{exact_lopsided_cut, CutExport};
use lnme_core::doublespend::mean_capacity;
use lnme_core::mempool::default_band_edges;
use lnme_core::*;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn fee(sat_per_vb: f64) -> PyResult<FeeRate> {
    FeeRate::from_f64(sat_per_vb).ok_or_else(|| value_err(format!("invalid fee rate {sat_per_vb}")))
}

fn objective(name: &str) -> PyResult<Objective> {
    name.parse().map_err(value_err)
}

fn to_python<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Channel graph.
#[pyclass(name = "Graph", module = "lnme", frozen)]
pub struct PyGraph {
    inner: LnGraph,
}

#[pymethods]
impl PyGraph {
    /// Parses lnd `describegraph` JSON.
    #[staticmethod]
    fn from_lnd_json(text: &str) -> PyResult<Self> {
        Ok(PyGraph {
            inner: parse_lnd_graph(text).map_err(value_err)?,
        })
    }

    /// Parses a `node_a,node_b,capacity` edge list.
    #[staticmethod]
    fn from_edge_list(text: &str) -> PyResult<Self> {
        Ok(PyGraph {
            inner: parse_edge_list(text).map_err(value_err)?,
        })
    }

    /// Preferential-attachment graph. `capacity_range=(lo, hi)` draws
    /// capacities uniformly instead of using the constant `capacity`.
    #[staticmethod]
    #[pyo3(signature = (n, m, seed=0, capacity=graph::DEFAULT_SYNTHETIC_CAPACITY, capacity_range=None))]
    fn scale_free(n: usize, m: usize, seed: u64, capacity: u64, capacity_range: Option<(u64, u64)>) -> PyResult<Self> {
        let sampler = match capacity_range {
            Some((lo, hi)) => CapacitySampler::Uniform { lo, hi },
            None => CapacitySampler::Constant(capacity),
        };
        Ok(PyGraph {
            inner: generate_scale_free(n, m, seed, sampler).map_err(value_err)?,
        })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn channel_count(&self) -> usize {
        self.inner.channel_count()
    }

    #[getter]
    fn total_capacity(&self) -> u64 {
        self.inner.total_capacity()
    }

    fn to_edge_list(&self) -> String {
        self.inner.to_edge_list()
    }

    /// `{degree: node count}`.
    fn degree_histogram(&self) -> std::collections::BTreeMap<usize, usize> {
        degree_histogram(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(nodes={}, channels={})",
            self.inner.node_count(),
            self.inner.channel_count()
        )
    }
}

/// Coalition and the channels it cuts.
#[pyclass(name = "Cut", module = "lnme", frozen)]
pub struct PyCut {
    export: CutExport,
    value: u64,
}

impl PyCut {
    fn new(graph: &LnGraph, cut: &Cut) -> Self {
        PyCut {
            export: cut.export(graph),
            value: cut.value(),
        }
    }
}

#[pymethods]
impl PyCut {
    /// Parses the cut JSON written by `lnme solve`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let export = CutExport::from_json(text).map_err(value_err)?;
        let value = match export.objective {
            Objective::EdgeCount => export.edge_count,
            Objective::Capacity => export.cut_capacity_sat,
        };
        Ok(PyCut { export, value })
    }

    #[getter]
    fn k(&self) -> usize {
        self.export.k
    }

    #[getter]
    fn objective(&self) -> String {
        self.export.objective.to_string()
    }

    /// Objective value: edge count or capacity in satoshis.
    #[getter]
    fn value(&self) -> u64 {
        self.value
    }

    #[getter]
    fn coalition(&self) -> Vec<String> {
        self.export.coalition.clone()
    }

    /// `[(channel id, node_a, node_b, capacity)]`.
    #[getter]
    fn cut_channels(&self) -> Vec<(String, String, String, u64)> {
        self.export
            .cut_channels
            .iter()
            .map(|c| (c.id.clone(), c.node_a.clone(), c.node_b.clone(), c.capacity_sat))
            .collect()
    }

    #[getter]
    fn edge_count(&self) -> u64 {
        self.export.edge_count
    }

    #[getter]
    fn cut_capacity(&self) -> u64 {
        self.export.cut_capacity_sat
    }

    fn to_json(&self) -> String {
        self.export.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "Cut(k={}, objective={}, edge_count={}, cut_capacity={})",
            self.export.k, self.export.objective, self.export.edge_count, self.export.cut_capacity_sat
        )
    }
}

/// Greedy k-lopsided cut. `objective` is `"edge_count"` or `"capacity"`.
#[pyfunction]
#[pyo3(signature = (graph, k, objective="edge_count"))]
fn greedy_cut(py: Python<'_>, graph: &PyGraph, k: usize, objective: &str) -> PyResult<PyCut> {
    let obj = self::objective(objective)?;
    let g = &graph.inner;
    let (cut, _) = py.detach(|| greedy_lopsided_cut(g, k, obj)).map_err(value_err)?;
    Ok(PyCut::new(g, &cut))
}

/// Optimal k-lopsided cut by enumeration; raises if the search is too large.
#[pyfunction]
#[pyo3(signature = (graph, k, objective="edge_count"))]
fn exact_cut(py: Python<'_>, graph: &PyGraph, k: usize, objective: &str) -> PyResult<PyCut> {
    let obj = self::objective(objective)?;
    let g = &graph.inner;
    let cut = py.detach(|| exact_lopsided_cut(g, k, obj)).map_err(value_err)?;
    Ok(PyCut::new(g, &cut))
}

/// `[(k, edge_count, cut_capacity)]` for k = 1..=k_max along the greedy order.
#[pyfunction]
#[pyo3(signature = (graph, k_max, objective="edge_count"))]
fn value_vs_k(py: Python<'_>, graph: &PyGraph, k_max: usize, objective: &str) -> PyResult<Vec<(usize, u64, u64)>> {
    let obj = self::objective(objective)?;
    let g = &graph.inner;
    let curve = py.detach(|| value_vs_k_curve(g, k_max, obj)).map_err(value_err)?;
    Ok(curve.iter().map(|p| (p.k, p.edge_count, p.cut_capacity)).collect())
}

/// Per-minute pending-transaction counts by fee band.
#[pyclass(name = "Timeline", module = "lnme", frozen)]
pub struct PyTimeline {
    inner: MempoolTimeline,
}

#[pymethods]
impl PyTimeline {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(PyTimeline {
            inner: MempoolTimeline::from_csv(text).map_err(value_err)?,
        })
    }

    /// Same snapshot every `cadence` seconds over `[start, end]`. `counts`
    /// has one entry per band; `bands` are lower edges in sat/vByte.
    #[staticmethod]
    #[pyo3(signature = (counts, start, end, cadence=60, bands=None))]
    fn constant(counts: Vec<u64>, start: i64, end: i64, cadence: i64, bands: Option<Vec<f64>>) -> PyResult<Self> {
        let edges = match bands {
            Some(b) => b.into_iter().map(fee).collect::<PyResult<Vec<_>>>()?,
            None => default_band_edges(),
        };
        Ok(PyTimeline {
            inner: MempoolTimeline::constant(edges, counts, start, end, cadence).map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn first_timestamp(&self) -> i64 {
        self.inner.first_timestamp()
    }

    #[getter]
    fn last_timestamp(&self) -> i64 {
        self.inner.last_timestamp()
    }

    /// `(timestamp, counts)` in force at time `t`.
    fn snapshot_at(&self, t: i64) -> PyResult<(i64, Vec<u64>)> {
        let i = self.inner.index_at(t).map_err(value_err)?;
        let (ts, h) = self.inner.snapshot(i);
        Ok((ts, h.counts().to_vec()))
    }

    /// Count-weighted average fee (sat/vByte) of the snapshot at `t`.
    fn average_fee(&self, t: i64) -> PyResult<f64> {
        let i = self.inner.index_at(t).map_err(value_err)?;
        Ok(self.inner.snapshot(i).1.average_fee().as_f64())
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

/// Block heights, timestamps and transaction counts.
#[pyclass(name = "BlockTrace", module = "lnme", frozen)]
pub struct PyBlockTrace {
    inner: BlockTrace,
}

#[pymethods]
impl PyBlockTrace {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(PyBlockTrace {
            inner: BlockTrace::from_csv(text).map_err(value_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (count, tx_count, start_height=1, start_timestamp=0, interval=600))]
    fn synthetic(count: usize, tx_count: u64, start_height: u64, start_timestamp: i64, interval: i64) -> PyResult<Self> {
        Ok(PyBlockTrace {
            inner: BlockTrace::synthetic(start_height, start_timestamp, count, tx_count, interval).map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.entries().len()
    }

    /// `[(height, timestamp, tx_count)]`.
    fn entries(&self) -> Vec<(u64, i64, u64)> {
        self.inner
            .entries()
            .iter()
            .map(|b| (b.height, b.timestamp, b.tx_count))
            .collect()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

fn make_scenario<'a>(
    timeline: &'a PyTimeline,
    blocks: &'a PyBlockTrace,
    scenario: &str,
    start: Option<i64>,
    avg_block_txs: Option<u64>,
) -> PyResult<Scenario<'a>> {
    let (tl, bt) = (&timeline.inner, &blocks.inner);
    match scenario {
        "1" if start.is_none() && avg_block_txs.is_none() => Ok(Scenario::preset_1(tl, bt)),
        "2" if start.is_none() => {
            let avg = avg_block_txs.ok_or_else(|| value_err("scenario 2 needs avg_block_txs"))?;
            Ok(Scenario::preset_2(tl, bt, avg))
        }
        "custom" => {
            let mode = match avg_block_txs {
                Some(avg) => BlockCapacityMode::ConstantAverage(avg),
                None => BlockCapacityMode::Historical,
            };
            Ok(Scenario::new(tl, bt, mode, start.unwrap_or(tl.first_timestamp())))
        }
        other => Err(value_err(format!(
            "scenario {other:?}: expected \"1\", \"2\" or \"custom\" (start only with custom)"
        ))),
    }
}

fn strategy(fee_rate: f64, step: Option<u32>, beta: Option<f64>) -> PyResult<FeeStrategy> {
    let fee_rate = fee(fee_rate)?;
    match (step, beta) {
        (None, None) => Ok(FeeStrategy::Static { fee: fee_rate }),
        (Some(step), Some(beta)) => Ok(FeeStrategy::Dynamic {
            initial_fee: fee_rate,
            step,
            beta,
        }),
        _ => Err(value_err("dynamic fees need both step and beta")),
    }
}

/// Zombie-channel closure. Static when `step`/`beta` are omitted, otherwise
/// every pending closing transaction is bumped by `beta` every `step` blocks.
/// Returns `{series, blocks_to_close_all, horizon_exhausted}`.
#[pyfunction(name = "simulate_zombie")]
#[pyo3(signature = (channels, timeline, blocks, fee, step=None, beta=None, scenario="custom", start=None, avg_block_txs=None))]
#[allow(clippy::too_many_arguments)]
fn py_simulate_zombie<'py>(
    py: Python<'py>,
    channels: u64,
    timeline: &PyTimeline,
    blocks: &PyBlockTrace,
    fee: f64,
    step: Option<u32>,
    beta: Option<f64>,
    scenario: &str,
    start: Option<i64>,
    avg_block_txs: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let sc = make_scenario(timeline, blocks, scenario, start, avg_block_txs)?;
    let config = ZombieConfig::new(channels, strategy(fee, step, beta)?);
    let report = py
        .detach(|| simulate_zombie(&config, &sc))
        .map_err(value_err)?;
    to_python(py, &report)
}

fn parse_delay(delay: &str) -> PyResult<DelayPolicy> {
    if delay == "scaled" {
        return Ok(DelayPolicy::scaled_default());
    }
    delay
        .strip_prefix("fixed:")
        .and_then(|n| n.parse().ok())
        .map(|blocks| DelayPolicy::Fixed { blocks })
        .ok_or_else(|| value_err(format!("delay {delay:?}: expected \"fixed:<blocks>\" or \"scaled\"")))
}

#[derive(Serialize)]
struct DoubleSpendResult<'a> {
    #[serde(flatten)]
    report: &'a DoubleSpendReport,
    realized_profit_per_channel_sat: i64,
    realized_profit_average_sat: i64,
    average_capacity_sat: u64,
}

/// Double-spend attack on the channels of `cut`. The victim's penalty starts
/// at the mempool average fee and is bumped by `honest_beta` every
/// `honest_step` blocks when `honest_step` is given. Profits exclude
/// undecided channels.
#[pyfunction(name = "simulate_double_spend")]
#[pyo3(signature = (
    cut, timeline, blocks, attacker_fee, sweep_fee=100.0, sweep_step=None, sweep_beta=None,
    honest_step=None, honest_beta=1.1, delay="scaled", strict_expiry=false,
    scenario="custom", start=None, avg_block_txs=None, average_capacity=None
))]
#[allow(clippy::too_many_arguments)]
fn py_simulate_double_spend<'py>(
    py: Python<'py>,
    cut: &PyCut,
    timeline: &PyTimeline,
    blocks: &PyBlockTrace,
    attacker_fee: f64,
    sweep_fee: f64,
    sweep_step: Option<u32>,
    sweep_beta: Option<f64>,
    honest_step: Option<u32>,
    honest_beta: f64,
    delay: &str,
    strict_expiry: bool,
    scenario: &str,
    start: Option<i64>,
    avg_block_txs: Option<u64>,
    average_capacity: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let sc = make_scenario(timeline, blocks, scenario, start, avg_block_txs)?;
    let config = DoubleSpendConfig {
        honest: match honest_step {
            Some(step) => PenaltyStrategy::Dynamic {
                step,
                beta: honest_beta,
            },
            None => PenaltyStrategy::Static,
        },
        attacker: AttackerStrategy {
            commitment_fee: fee(attacker_fee)?,
            sweep: strategy(sweep_fee, sweep_step, sweep_beta)?,
        },
        delay: parse_delay(delay)?,
        strict_expiry,
    };
    let channels = AttackedChannel::from_cut_export(&cut.export);
    let report = py
        .detach(|| simulate_double_spend(&channels, &config, &sc))
        .map_err(value_err)?;
    let avg = average_capacity.unwrap_or(mean_capacity(&channels));
    let result = DoubleSpendResult {
        report: &report,
        realized_profit_per_channel_sat: realized_profit(&report, ProfitMode::PerChannel, true).map_err(value_err)?,
        realized_profit_average_sat: realized_profit(&report, ProfitMode::AverageCapacity(avg), true)
            .map_err(value_err)?,
        average_capacity_sat: avg,
    };
    to_python(py, &result)
}

/// Dispute delay in blocks for a channel of `capacity` satoshis.
#[pyfunction(name = "to_self_delay")]
#[pyo3(signature = (capacity, delay="scaled"))]
fn py_to_self_delay(capacity: u64, delay: &str) -> PyResult<u32> {
    Ok(to_self_delay(capacity, parse_delay(delay)?))
}

/// `(p − 1/2) · cut_capacity` in satoshis.
#[pyfunction(name = "expected_profit")]
fn py_expected_profit(cut_capacity: u64, p: f64) -> PyResult<i64> {
    expected_profit(cut_capacity, p).map_err(value_err)
}

#[pymodule]
fn lnme(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("SAT_PER_BTC", graph::SAT_PER_BTC)?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyCut>()?;
    m.add_class::<PyTimeline>()?;
    m.add_class::<PyBlockTrace>()?;
    m.add_function(wrap_pyfunction!(greedy_cut, m)?)?;
    m.add_function(wrap_pyfunction!(exact_cut, m)?)?;
    m.add_function(wrap_pyfunction!(value_vs_k, m)?)?;
    m.add_function(wrap_pyfunction!(py_simulate_zombie, m)?)?;
    m.add_function(wrap_pyfunction!(py_simulate_double_spend, m)?)?;
    m.add_function(wrap_pyfunction!(py_to_self_delay, m)?)?;
    m.add_function(wrap_pyfunction!(py_expected_profit, m)?)?;
    Ok(())
}
