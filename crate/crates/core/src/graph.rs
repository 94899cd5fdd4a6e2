//! Channel-graph data model.
//!
//! Nodes are canonicalized to dense indices `0..n` in first-seen order. Channels
//! keep their own identifiers so parallel channels between the same pair of
//! nodes stay distinct.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1 BTC in satoshis.
pub const SAT_PER_BTC: u64 = 100_000_000;

/// Default synthetic channel capacity, roughly the network-wide mean in 2022.
pub const DEFAULT_SYNTHETIC_CAPACITY: u64 = 4_500_000;

const EDGE_LIST_HEADER: [&str; 3] = ["node_a", "node_b", "capacity_sat"];

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("malformed graph document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed edge list: {0}")]
    Csv(#[from] csv::Error),
    #[error("channel {channel_id} references unknown node {pub_key}")]
    UnknownNode { channel_id: String, pub_key: String },
    #[error("channel {channel_id} is a self-loop on {node}")]
    SelfLoop { channel_id: String, node: String },
    #[error("channel {channel_id}: invalid capacity {value:?}")]
    InvalidCapacity { channel_id: String, value: String },
    #[error("duplicate node {0}")]
    DuplicateNode(String),
    #[error("edge list line {line}: expected 3 fields, found {found}")]
    Arity { line: u64, found: usize },
    #[error("scale-free generator needs n > m >= 1 (got n={n}, m={m})")]
    GeneratorParams { n: usize, m: usize },
    #[error("invalid capacity range {lo}..={hi}")]
    CapacityRange { lo: u64, hi: u64 },
}

/// Dense node index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Channel {
    pub id: String,
    pub node_a: NodeId,
    pub node_b: NodeId,
    /// Capacity in satoshis.
    pub capacity: u64,
}

impl Channel {
    /// The endpoint opposite `node`. `node` must be one of the endpoints.
    #[inline]
    pub fn other(&self, node: NodeId) -> NodeId {
        if self.node_a == node {
            self.node_b
        } else {
            self.node_a
        }
    }
}

/// Immutable capacity-weighted multigraph of payment channels.
#[derive(Clone, Debug, Default)]
pub struct LnGraph {
    labels: Vec<String>,
    index: HashMap<String, NodeId>,
    channels: Vec<Channel>,
    adjacency: Vec<Vec<usize>>,
}

impl LnGraph {
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, idx: usize) -> &Channel {
        &self.channels[idx]
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = NodeId> + '_ {
        (0..self.labels.len() as u32).map(NodeId)
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.labels[node.index()]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    /// Indices (into [`LnGraph::channels`]) of channels incident to `node`.
    pub fn incident(&self, node: NodeId) -> &[usize] {
        &self.adjacency[node.index()]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node.index()].len()
    }

    pub fn weighted_degree(&self, node: NodeId) -> u64 {
        self.incident(node)
            .iter()
            .map(|&c| self.channels[c].capacity)
            .sum()
    }

    pub fn total_capacity(&self) -> u64 {
        self.channels.iter().map(|c| c.capacity).sum()
    }

    /// Serialize as an edge-list CSV with header. Isolated nodes are not representable
    /// in this format and are dropped.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::from("node_a,node_b,capacity_sat\n");
        for c in &self.channels {
            out.push_str(&format!(
                "{},{},{}\n",
                csv_field(self.label(c.node_a)),
                csv_field(self.label(c.node_b)),
                c.capacity
            ));
        }
        out
    }

    /// Same graph with every capacity replaced by `capacity`.
    pub fn with_uniform_capacity(&self, capacity: u64) -> LnGraph {
        let mut g = self.clone();
        for c in &mut g.channels {
            c.capacity = capacity;
        }
        g
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Incremental constructor enforcing the graph invariants.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    graph: LnGraph,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the existing id for `label` or inserts a new node.
    pub fn node(&mut self, label: &str) -> NodeId {
        if let Some(&id) = self.graph.index.get(label) {
            return id;
        }
        let id = NodeId(self.graph.labels.len() as u32);
        self.graph.labels.push(label.to_string());
        self.graph.index.insert(label.to_string(), id);
        self.graph.adjacency.push(Vec::new());
        id
    }

    /// Inserts a node that must not already exist.
    pub fn add_unique_node(&mut self, label: &str) -> Result<NodeId, GraphError> {
        if self.graph.index.contains_key(label) {
            return Err(GraphError::DuplicateNode(label.to_string()));
        }
        Ok(self.node(label))
    }

    pub fn lookup(&self, label: &str) -> Option<NodeId> {
        self.graph.index.get(label).copied()
    }

    pub fn add_channel(
        &mut self,
        id: impl Into<String>,
        a: NodeId,
        b: NodeId,
        capacity: u64,
    ) -> Result<usize, GraphError> {
        let id = id.into();
        if a == b {
            return Err(GraphError::SelfLoop {
                channel_id: id,
                node: self.graph.labels[a.index()].clone(),
            });
        }
        let idx = self.graph.channels.len();
        self.graph.channels.push(Channel {
            id,
            node_a: a,
            node_b: b,
            capacity,
        });
        self.graph.adjacency[a.index()].push(idx);
        self.graph.adjacency[b.index()].push(idx);
        Ok(idx)
    }

    pub fn build(self) -> LnGraph {
        self.graph
    }
}

#[derive(Deserialize)]
struct LndGraphDoc {
    nodes: Vec<LndNode>,
    edges: Vec<LndEdge>,
}

#[derive(Deserialize)]
struct LndNode {
    pub_key: String,
}

#[derive(Deserialize)]
struct LndEdge {
    channel_id: serde_json::Value,
    node1_pub: String,
    node2_pub: String,
    capacity: serde_json::Value,
}

fn json_scalar_string(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses the `nodes`/`edges` subset of lnd's `describegraph` output.
///
/// Capacities are decimal strings of satoshis (lnd's JSON encoding of int64);
/// plain JSON integers are accepted as well. Unknown fields are ignored.
pub fn parse_lnd_graph(document: &str) -> Result<LnGraph, GraphError> {
    let doc: LndGraphDoc = serde_json::from_str(document)?;
    let mut b = GraphBuilder::new();
    for n in &doc.nodes {
        b.add_unique_node(&n.pub_key)?;
    }
    for e in &doc.edges {
        let channel_id = json_scalar_string(&e.channel_id);
        let endpoint = |pk: &str| {
            b.lookup(pk).ok_or_else(|| GraphError::UnknownNode {
                channel_id: channel_id.clone(),
                pub_key: pk.to_string(),
            })
        };
        let a = endpoint(&e.node1_pub)?;
        let z = endpoint(&e.node2_pub)?;
        let raw = json_scalar_string(&e.capacity);
        let capacity = raw
            .trim()
            .parse::<u64>()
            .map_err(|_| GraphError::InvalidCapacity {
                channel_id: channel_id.clone(),
                value: raw.clone(),
            })?;
        b.add_channel(channel_id, a, z, capacity)?;
    }
    Ok(b.build())
}

/// Parses `node_a,node_b,capacity_sat` rows. The header row is optional.
/// Every row becomes its own channel with id `e<row>`, so repeated rows are
/// parallel channels.
pub fn parse_edge_list(document: &str) -> Result<LnGraph, GraphError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(document.as_bytes());
    let mut b = GraphBuilder::new();
    let mut row_no = 0usize;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != 3 {
            return Err(GraphError::Arity {
                line,
                found: rec.len(),
            });
        }
        if i == 0 && rec.iter().eq(EDGE_LIST_HEADER.iter().copied()) {
            continue;
        }
        let channel_id = format!("e{row_no}");
        row_no += 1;
        let capacity = rec[2]
            .parse::<u64>()
            .map_err(|_| GraphError::InvalidCapacity {
                channel_id: channel_id.clone(),
                value: rec[2].to_string(),
            })?;
        let a = b.node(&rec[0]);
        let z = b.node(&rec[1]);
        b.add_channel(channel_id, a, z, capacity)?;
    }
    Ok(b.build())
}

/// Capacity assigned to synthetic channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CapacitySampler {
    Constant(u64),
    /// Uniform over the inclusive range.
    Uniform { lo: u64, hi: u64 },
}

impl Default for CapacitySampler {
    fn default() -> Self {
        CapacitySampler::Constant(DEFAULT_SYNTHETIC_CAPACITY)
    }
}

/// Barabási–Albert preferential attachment.
///
/// Starts from a clique on `m + 1` nodes; every further node attaches `m` edges
/// to distinct existing nodes chosen with probability proportional to degree.
/// The result has `m(m+1)/2 + m(n-m-1)` channels.
pub fn generate_scale_free(
    n: usize,
    m: usize,
    seed: u64,
    capacity: CapacitySampler,
) -> Result<LnGraph, GraphError> {
    if m < 1 || n <= m {
        return Err(GraphError::GeneratorParams { n, m });
    }
    let uniform = match capacity {
        CapacitySampler::Uniform { lo, hi } => Some(
            Uniform::new_inclusive(lo, hi).map_err(|_| GraphError::CapacityRange { lo, hi })?,
        ),
        CapacitySampler::Constant(_) => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw_capacity = |rng: &mut ChaCha8Rng| match (capacity, &uniform) {
        (CapacitySampler::Constant(c), _) => c,
        (_, Some(u)) => u.sample(rng),
        _ => unreachable!(),
    };

    let mut b = GraphBuilder::new();
    for i in 0..n {
        b.node(&i.to_string());
    }
    // Each node appears once per incident edge; uniform draws from it are degree-proportional.
    let mut endpoints: Vec<u32> = Vec::with_capacity(2 * m * n);
    let mut next_id = 0usize;
    let mut push = |b: &mut GraphBuilder, endpoints: &mut Vec<u32>, x: u32, y: u32, cap: u64| {
        b.add_channel(format!("e{next_id}"), NodeId(x), NodeId(y), cap)
            .expect("generator never emits self-loops");
        next_id += 1;
        endpoints.push(x);
        endpoints.push(y);
    };
    for x in 0..=m as u32 {
        for y in x + 1..=m as u32 {
            let cap = draw_capacity(&mut rng);
            push(&mut b, &mut endpoints, x, y, cap);
        }
    }
    let mut targets: Vec<u32> = Vec::with_capacity(m);
    for v in (m + 1) as u32..n as u32 {
        targets.clear();
        while targets.len() < m {
            let t = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            let cap = draw_capacity(&mut rng);
            push(&mut b, &mut endpoints, t, v, cap);
        }
    }
    Ok(b.build())
}

/// Map from degree to number of nodes with that degree.
pub fn degree_histogram(graph: &LnGraph) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for v in graph.nodes() {
        *hist.entry(graph.degree(v)).or_insert(0) += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_LND: &str = r#"{
        "nodes": [{"pub_key": "A", "alias": "alice"}, {"pub_key": "B"}],
        "edges": [{"channel_id": "123", "chan_point": "x:0", "node1_pub": "A",
                   "node2_pub": "B", "capacity": "4500000", "node1_policy": null}]
    }"#;

    #[test]
    fn lnd_minimal_document() {
        let g = parse_lnd_graph(MINIMAL_LND).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.channel_count(), 1);
        assert_eq!(g.channel(0).capacity, 4_500_000);
        assert_eq!(g.channel(0).id, "123");
        assert_eq!(g.label(g.channel(0).node_a), "A");
    }

    #[test]
    fn lnd_keeps_isolated_nodes() {
        let doc = r#"{"nodes":[{"pub_key":"A"},{"pub_key":"B"},{"pub_key":"C"}],
            "edges":[{"channel_id":"1","node1_pub":"A","node2_pub":"B","capacity":"10"}]}"#;
        let g = parse_lnd_graph(doc).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.degree(g.node_by_label("C").unwrap()), 0);
    }

    #[test]
    fn lnd_errors() {
        let self_loop = r#"{"nodes":[{"pub_key":"A"}],
            "edges":[{"channel_id":"7","node1_pub":"A","node2_pub":"A","capacity":"10"}]}"#;
        assert!(matches!(
            parse_lnd_graph(self_loop),
            Err(GraphError::SelfLoop { channel_id, .. }) if channel_id == "7"
        ));

        let unknown = r#"{"nodes":[{"pub_key":"A"}],
            "edges":[{"channel_id":"9","node1_pub":"A","node2_pub":"Z","capacity":"10"}]}"#;
        assert!(matches!(
            parse_lnd_graph(unknown),
            Err(GraphError::UnknownNode { channel_id, .. }) if channel_id == "9"
        ));

        for bad in ["\"-5\"", "\"abc\"", "-5", "1.5"] {
            let doc = format!(
                r#"{{"nodes":[{{"pub_key":"A"}},{{"pub_key":"B"}}],
                "edges":[{{"channel_id":"3","node1_pub":"A","node2_pub":"B","capacity":{bad}}}]}}"#
            );
            assert!(
                matches!(parse_lnd_graph(&doc), Err(GraphError::InvalidCapacity { .. })),
                "{bad}"
            );
        }

        assert!(matches!(parse_lnd_graph("{nodes:"), Err(GraphError::Json(_))));
    }

    #[test]
    fn lnd_numeric_capacity_accepted() {
        let doc = r#"{"nodes":[{"pub_key":"A"},{"pub_key":"B"}],
            "edges":[{"channel_id":5,"node1_pub":"A","node2_pub":"B","capacity":250}]}"#;
        let g = parse_lnd_graph(doc).unwrap();
        assert_eq!(g.channel(0).capacity, 250);
        assert_eq!(g.channel(0).id, "5");
    }

    #[test]
    fn edge_list_basic() {
        let g = parse_edge_list("a,b,100\nb,c,200").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.channel_count(), 2);
        assert_eq!(g.total_capacity(), 300);
    }

    #[test]
    fn edge_list_header_and_parallel() {
        let g = parse_edge_list("node_a,node_b,capacity_sat\na,b,1\na,b,1\n").unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.channel_count(), 2);
        assert_ne!(g.channel(0).id, g.channel(1).id);
    }

    #[test]
    fn edge_list_empty_and_errors() {
        let g = parse_edge_list("").unwrap();
        assert_eq!((g.node_count(), g.channel_count()), (0, 0));
        assert!(matches!(
            parse_edge_list("a,a,100"),
            Err(GraphError::SelfLoop { .. })
        ));
        assert!(matches!(
            parse_edge_list("a,b,1.5"),
            Err(GraphError::InvalidCapacity { .. })
        ));
        assert!(matches!(
            parse_edge_list("a,b,1\na,b"),
            Err(GraphError::Arity { line: 2, found: 2 })
        ));
        assert!(matches!(
            parse_edge_list("a,b,1,2"),
            Err(GraphError::Arity { found: 4, .. })
        ));
    }

    #[test]
    fn scale_free_small_tree() {
        let g = generate_scale_free(5, 1, 7, CapacitySampler::default()).unwrap();
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.channel_count(), 4);
        // connected: every node beyond the seed pair attached to an earlier node
        assert!(g.nodes().all(|v| g.degree(v) >= 1));
    }

    #[test]
    fn scale_free_edge_count_formula() {
        // clique on 4 nodes (6 edges) plus 3 edges for each of the remaining 996 nodes
        let g = generate_scale_free(1000, 3, 1, CapacitySampler::default()).unwrap();
        let mut expected = 0;
        for _clique_pair in 0..(4 * 3 / 2) {
            expected += 1;
        }
        for _new_node in 4..1000 {
            expected += 3;
        }
        assert_eq!(g.channel_count(), expected);
        assert_eq!(g.channel_count(), 2994);
    }

    #[test]
    fn scale_free_deterministic_and_params() {
        let a = generate_scale_free(300, 2, 42, CapacitySampler::Uniform { lo: 1, hi: 99 }).unwrap();
        let b = generate_scale_free(300, 2, 42, CapacitySampler::Uniform { lo: 1, hi: 99 }).unwrap();
        assert_eq!(a.channels(), b.channels());
        assert!(a.channels().iter().all(|c| (1..=99).contains(&c.capacity)));
        let c = generate_scale_free(300, 2, 43, CapacitySampler::default()).unwrap();
        assert_ne!(
            a.channels().iter().map(|c| (c.node_a, c.node_b)).collect::<Vec<_>>(),
            c.channels().iter().map(|c| (c.node_a, c.node_b)).collect::<Vec<_>>()
        );
        assert!(matches!(
            generate_scale_free(3, 3, 0, CapacitySampler::default()),
            Err(GraphError::GeneratorParams { .. })
        ));
        assert!(generate_scale_free(3, 0, 0, CapacitySampler::default()).is_err());
        assert!(matches!(
            generate_scale_free(10, 2, 0, CapacitySampler::Uniform { lo: 5, hi: 1 }),
            Err(GraphError::CapacityRange { .. })
        ));
    }

    #[test]
    fn histograms() {
        let path = parse_edge_list("a,b,1\nb,c,1").unwrap();
        assert_eq!(degree_histogram(&path), BTreeMap::from([(1, 2), (2, 1)]));
        assert!(degree_histogram(&LnGraph::default()).is_empty());
        let star = parse_edge_list("c,1,1\nc,2,1\nc,3,1\nc,4,1").unwrap();
        assert_eq!(degree_histogram(&star), BTreeMap::from([(1, 4), (4, 1)]));
    }

    #[test]
    fn edge_list_escapes_labels() {
        let mut b = GraphBuilder::new();
        let x = b.node("x,y");
        let z = b.node("q\"r");
        b.add_channel("c", x, z, 5).unwrap();
        let g = b.build();
        let back = parse_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(back.labels(), g.labels());
    }
}
