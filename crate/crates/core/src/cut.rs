//! k-lopsided max-cut: choose a coalition `Z` of exactly `k` nodes maximizing either
//! the number (`EdgeCount`) or the total capacity (`Capacity`) of channels with
//! exactly one endpoint in `Z`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{LnGraph, NodeId};

/// Default cap on the number of k-subsets the exact solver will enumerate.
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 10_000_000;

#[derive(Debug, Error)]
pub enum CutError {
    #[error("coalition size k={k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("node {0} is not in the graph")]
    UnknownNode(String),
    #[error("exact enumeration of C({n}, {k}) = {subsets} subsets exceeds budget {budget}")]
    BudgetExceeded {
        n: usize,
        k: usize,
        subsets: u128,
        budget: u128,
    },
    #[error("unknown objective {0:?} (expected edge-count or capacity)")]
    UnknownObjective(String),
    #[error("malformed cut document: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Number of cut channels (k-LMC).
    EdgeCount,
    /// Total capacity of cut channels (k-LWMC).
    Capacity,
}

impl Objective {
    #[inline]
    pub fn weight(self, capacity: u64) -> u64 {
        match self {
            Objective::EdgeCount => 1,
            Objective::Capacity => capacity,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::EdgeCount => "edge_count",
            Objective::Capacity => "capacity",
        })
    }
}

impl FromStr for Objective {
    type Err = CutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "edge_count" | "edges" | "lmc" => Ok(Objective::EdgeCount),
            "capacity" | "lwmc" => Ok(Objective::Capacity),
            _ => Err(CutError::UnknownObjective(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CutValue {
    pub edge_count: u64,
    pub cut_capacity: u64,
}

impl CutValue {
    pub fn get(&self, objective: Objective) -> u64 {
        match objective {
            Objective::EdgeCount => self.edge_count,
            Objective::Capacity => self.cut_capacity,
        }
    }
}

/// A coalition together with the channels it cuts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cut {
    pub objective: Objective,
    /// Coalition members, ascending by node index.
    pub coalition: Vec<NodeId>,
    /// Indices into the graph's channel list, ascending.
    pub cut_channels: Vec<usize>,
    pub edge_count: u64,
    pub cut_capacity: u64,
}

impl Cut {
    pub fn k(&self) -> usize {
        self.coalition.len()
    }

    pub fn value(&self) -> u64 {
        self.cut_value().get(self.objective)
    }

    pub fn cut_value(&self) -> CutValue {
        CutValue {
            edge_count: self.edge_count,
            cut_capacity: self.cut_capacity,
        }
    }

    /// Materializes the cut for an explicit membership vector.
    pub fn from_membership(graph: &LnGraph, in_coalition: &[bool], objective: Objective) -> Cut {
        let coalition = graph
            .nodes()
            .filter(|v| in_coalition[v.index()])
            .collect();
        let mut cut_channels = Vec::new();
        let mut cut_capacity = 0;
        for (i, c) in graph.channels().iter().enumerate() {
            if in_coalition[c.node_a.index()] != in_coalition[c.node_b.index()] {
                cut_channels.push(i);
                cut_capacity += c.capacity;
            }
        }
        Cut {
            objective,
            coalition,
            edge_count: cut_channels.len() as u64,
            cut_channels,
            cut_capacity,
        }
    }

    /// The empty coalition, used for k = 0 sweeps.
    pub fn empty(objective: Objective) -> Cut {
        Cut {
            objective,
            coalition: Vec::new(),
            cut_channels: Vec::new(),
            edge_count: 0,
            cut_capacity: 0,
        }
    }

    pub fn export(&self, graph: &LnGraph) -> CutExport {
        CutExport {
            k: self.k(),
            objective: self.objective,
            coalition: self
                .coalition
                .iter()
                .map(|&v| graph.label(v).to_string())
                .collect(),
            cut_channels: self
                .cut_channels
                .iter()
                .map(|&i| {
                    let c = graph.channel(i);
                    ExportedChannel {
                        id: c.id.clone(),
                        node_a: graph.label(c.node_a).to_string(),
                        node_b: graph.label(c.node_b).to_string(),
                        capacity_sat: c.capacity,
                    }
                })
                .collect(),
            edge_count: self.edge_count,
            cut_capacity_sat: self.cut_capacity,
        }
    }
}

/// JSON shape of an exported cut.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutExport {
    pub k: usize,
    pub objective: Objective,
    pub coalition: Vec<String>,
    pub cut_channels: Vec<ExportedChannel>,
    pub edge_count: u64,
    pub cut_capacity_sat: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedChannel {
    pub id: String,
    pub node_a: String,
    pub node_b: String,
    pub capacity_sat: u64,
}

impl CutExport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cut export is always serializable")
    }

    pub fn from_json(doc: &str) -> Result<Self, CutError> {
        Ok(serde_json::from_str(doc)?)
    }
}

/// Edge count and capacity of the cut induced by `coalition`.
pub fn cut_value(graph: &LnGraph, coalition: &[NodeId]) -> Result<CutValue, CutError> {
    let mut member = vec![false; graph.node_count()];
    for &v in coalition {
        if v.index() >= graph.node_count() {
            return Err(CutError::UnknownNode(v.to_string()));
        }
        member[v.index()] = true;
    }
    Ok(membership_value(graph, &member))
}

/// Same as [`cut_value`] but with coalition members given by label.
pub fn cut_value_by_label<S: AsRef<str>>(
    graph: &LnGraph,
    coalition: &[S],
) -> Result<CutValue, CutError> {
    let ids = coalition
        .iter()
        .map(|l| {
            graph
                .node_by_label(l.as_ref())
                .ok_or_else(|| CutError::UnknownNode(l.as_ref().to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    cut_value(graph, &ids)
}

fn membership_value(graph: &LnGraph, member: &[bool]) -> CutValue {
    let mut v = CutValue::default();
    for c in graph.channels() {
        if member[c.node_a.index()] != member[c.node_b.index()] {
            v.edge_count += 1;
            v.cut_capacity += c.capacity;
        }
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GreedyStep {
    /// 1-based step index, equal to the coalition size after the move.
    pub step: usize,
    pub node: NodeId,
    /// Change in the objective caused by this move (may be negative).
    pub gain: i64,
    /// Objective value after the move.
    pub value: u64,
    pub edge_count: u64,
    pub cut_capacity: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GreedyTrace {
    pub steps: Vec<GreedyStep>,
}

impl GreedyTrace {
    pub fn final_value(&self) -> u64 {
        self.steps.last().map_or(0, |s| s.value)
    }
}

/// Greedy k-lopsided cut.
///
/// Starting from `(∅, V)`, moves `k` nodes one at a time. Each move takes the
/// right-side node with the largest gain, i.e. weight of its edges to the right
/// side minus weight of its edges into the coalition; ties go to the smallest
/// node index. Moves with negative gain are still made so that `|Z| = k`.
pub fn greedy_lopsided_cut(
    graph: &LnGraph,
    k: usize,
    objective: Objective,
) -> Result<(Cut, GreedyTrace), CutError> {
    let n = graph.node_count();
    if k < 1 || k > n {
        return Err(CutError::KOutOfRange { k, n });
    }

    let mut gain: Vec<i64> = graph
        .nodes()
        .map(|v| {
            graph
                .incident(v)
                .iter()
                .map(|&c| objective.weight(graph.channel(c).capacity) as i64)
                .sum()
        })
        .collect();
    let mut member = vec![false; n];
    // Max-heap on (gain, smallest index). Gains of right-side nodes only ever
    // decrease, so an entry is current iff its gain equals gain[v].
    let mut heap: BinaryHeap<(i64, Reverse<u32>)> =
        gain.iter().enumerate().map(|(i, &g)| (g, Reverse(i as u32))).collect();

    let mut steps = Vec::with_capacity(k);
    let mut value: u64 = 0;
    let mut edge_count: u64 = 0;
    let mut cut_capacity: u64 = 0;

    while steps.len() < k {
        let (g, Reverse(idx)) = heap.pop().expect("heap holds every right-side node");
        let u = idx as usize;
        if member[u] || g != gain[u] {
            continue;
        }
        member[u] = true;
        value = (value as i64 + g) as u64;
        let node = NodeId(idx);
        for &ci in graph.incident(node) {
            let c = graph.channel(ci);
            let v = c.other(node).index();
            if member[v] {
                edge_count -= 1;
                cut_capacity -= c.capacity;
            } else {
                edge_count += 1;
                cut_capacity += c.capacity;
                gain[v] -= 2 * objective.weight(c.capacity) as i64;
                heap.push((gain[v], Reverse(v as u32)));
            }
        }
        steps.push(GreedyStep {
            step: steps.len() + 1,
            node,
            gain: g,
            value,
            edge_count,
            cut_capacity,
        });
    }

    let cut = Cut::from_membership(graph, &member, objective);
    debug_assert_eq!(cut.value(), value);
    Ok((cut, GreedyTrace { steps }))
}

/// Exact enumeration over all k-subsets with the default budget.
pub fn exact_lopsided_cut(graph: &LnGraph, k: usize, objective: Objective) -> Result<Cut, CutError> {
    exact_lopsided_cut_with_budget(graph, k, objective, DEFAULT_ENUMERATION_BUDGET)
}

/// Exhaustive k-subset search. Ties resolve to the lexicographically smallest
/// sorted index set regardless of how the work is split across threads.
pub fn exact_lopsided_cut_with_budget(
    graph: &LnGraph,
    k: usize,
    objective: Objective,
    budget: u128,
) -> Result<Cut, CutError> {
    let n = graph.node_count();
    if k < 1 || k > n {
        return Err(CutError::KOutOfRange { k, n });
    }
    let subsets = binomial(n, k);
    if subsets > budget {
        return Err(CutError::BudgetExceeded {
            n,
            k,
            subsets,
            budget,
        });
    }

    // Partition by the smallest element of the subset; each partition is
    // scanned in lexicographic order and partitions are reduced in order.
    let best = (0..=n - k)
        .into_par_iter()
        .map(|first| best_with_first(graph, n, k, first, objective))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(None::<(u64, Vec<usize>)>, |acc, cand| match (acc, cand) {
            (None, c) => Some(c),
            (Some(a), c) if c.0 > a.0 => Some(c),
            (a, _) => a,
        })
        .expect("at least one subset");

    let mut member = vec![false; n];
    for &i in &best.1 {
        member[i] = true;
    }
    Ok(Cut::from_membership(graph, &member, objective))
}

fn best_with_first(
    graph: &LnGraph,
    n: usize,
    k: usize,
    first: usize,
    objective: Objective,
) -> (u64, Vec<usize>) {
    let mut combo: Vec<usize> = std::iter::once(first).chain(first + 1..first + k).collect();
    let mut member = vec![false; n];
    let mut best: Option<(u64, Vec<usize>)> = None;
    loop {
        member.iter_mut().for_each(|m| *m = false);
        for &i in &combo {
            member[i] = true;
        }
        let val = membership_value(graph, &member).get(objective);
        if best.as_ref().is_none_or(|(b, _)| val > *b) {
            best = Some((val, combo.clone()));
        }
        // advance positions 1..k in lexicographic order, keeping combo[0] fixed
        let mut i = k;
        loop {
            if i <= 1 {
                return best.expect("visited at least one subset");
            }
            i -= 1;
            if combo[i] < n - k + i {
                combo[i] += 1;
                for j in i + 1..k {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(x) => x / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CurvePoint {
    pub k: usize,
    pub edge_count: u64,
    pub cut_capacity: u64,
}

impl CurvePoint {
    pub fn value(&self, objective: Objective) -> u64 {
        match objective {
            Objective::EdgeCount => self.edge_count,
            Objective::Capacity => self.cut_capacity,
        }
    }
}

/// Greedy solution value for every `k` in `1..=k_max` from a single greedy run.
pub fn value_vs_k_curve(
    graph: &LnGraph,
    k_max: usize,
    objective: Objective,
) -> Result<Vec<CurvePoint>, CutError> {
    if k_max == 0 {
        return Ok(Vec::new());
    }
    let (_, trace) = greedy_lopsided_cut(graph, k_max, objective)?;
    Ok(trace
        .steps
        .iter()
        .map(|s| CurvePoint {
            k: s.step,
            edge_count: s.edge_count,
            cut_capacity: s.cut_capacity,
        })
        .collect())
}

/// CSV `k,edge_count,cut_capacity_sat`.
pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("k,edge_count,cut_capacity_sat\n");
    for p in curve {
        out.push_str(&format!("{},{},{}\n", p.k, p.edge_count, p.cut_capacity));
    }
    out
}
