use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Range;

use super::{Minutes, StopIx, TransitNetwork};

/// What supplies the minimum duration of a relaxed edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EdgeBacking {
    Service { service_id: String, run_id: String, seq: u32 },
    Walk,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelaxedEdge {
    pub from: StopIx,
    pub to: StopIx,
    pub min_duration: Minutes,
    pub backing: EdgeBacking,
}

/// Directed stop graph with minimal travel times and no departure times.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedGraph {
    node_count: usize,
    /// Sorted by `(from, to)`; at most one edge per ordered pair.
    edges: Vec<RelaxedEdge>,
    offsets: Vec<usize>,
}

impl RelaxedGraph {
    pub fn from_edges(node_count: usize, mut edges: Vec<RelaxedEdge>) -> Self {
        edges.sort_by_key(|e| (e.from, e.to));
        edges.dedup_by_key(|e| (e.from, e.to));
        let mut offsets = vec![0; node_count + 1];
        for e in &edges {
            assert!(e.from.index() < node_count && e.to.index() < node_count, "edge endpoint out of range");
            assert!(e.min_duration > 0, "relaxed edge duration must be positive");
            offsets[e.from.index() + 1] += 1;
        }
        for i in 0..node_count {
            offsets[i + 1] += offsets[i];
        }
        Self {
            node_count,
            edges,
            offsets,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[RelaxedEdge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Indices into [`Self::edges`] of the edges leaving `node`.
    pub fn out_range(&self, node: StopIx) -> Range<usize> {
        self.offsets[node.index()]..self.offsets[node.index() + 1]
    }

    /// Outgoing edges of `node`, ordered by target.
    pub fn out_edges(&self, node: StopIx) -> &[RelaxedEdge] {
        &self.edges[self.out_range(node)]
    }

    pub fn edge(&self, from: StopIx, to: StopIx) -> Option<&RelaxedEdge> {
        if from.index() >= self.node_count {
            return None;
        }
        let out = self.out_edges(from);
        out.binary_search_by_key(&to, |e| e.to).ok().map(|i| &out[i])
    }

    pub fn contains(&self, node: StopIx) -> bool {
        node.index() < self.node_count
    }
}

/// Run index with start and end positions along it.
type RunSegment = (usize, usize, usize);

/// Pairs `(A, B)` that some run covers with at least one stop in between.
///
/// A pair stays excluded only while one of its witnessing run segments has
/// every consecutive hop present in the graph; pairs without such a witness
/// are restored until nothing changes.
fn express_exclusions(network: &TransitNetwork) -> HashSet<(StopIx, StopIx)> {
    let direct: HashSet<(StopIx, StopIx)> = network.connections().iter().map(|c| (c.from, c.to)).collect();
    let runs: Vec<Vec<StopIx>> = network
        .runs()
        .map(|run| {
            let mut stops: Vec<StopIx> = run.iter().map(|c| c.from).collect();
            stops.push(run.last().expect("runs are non-empty").to);
            stops
        })
        .collect();
    // witnesses[(a, b)] = list of (run index, start position, end position)
    let mut witnesses: HashMap<(StopIx, StopIx), Vec<RunSegment>> = HashMap::new();
    for (r, stops) in runs.iter().enumerate() {
        for i in 0..stops.len() {
            for j in i + 2..stops.len() {
                let pair = (stops[i], stops[j]);
                if pair.0 != pair.1 && direct.contains(&pair) {
                    witnesses.entry(pair).or_default().push((r, i, j));
                }
            }
        }
    }
    let mut excluded: HashSet<(StopIx, StopIx)> = witnesses.keys().copied().collect();
    let present = |pair: (StopIx, StopIx), excluded: &HashSet<(StopIx, StopIx)>| {
        network.walking_duration(pair.0, pair.1).is_some() || (direct.contains(&pair) && !excluded.contains(&pair))
    };
    loop {
        let restore: Vec<(StopIx, StopIx)> = excluded
            .iter()
            .copied()
            .filter(|pair| {
                !witnesses[pair].iter().any(|&(r, i, j)| {
                    runs[r][i..=j]
                        .windows(2)
                        .all(|hop| present((hop[0], hop[1]), &excluded))
                })
            })
            .collect();
        if restore.is_empty() {
            return excluded;
        }
        for pair in restore {
            excluded.remove(&pair);
        }
    }
}

/// Builds the relaxed graph: one edge per stop pair served by a surviving
/// connection or a walking link, costed at the smallest duration.
///
/// Ties between equally fast connections go to the smallest
/// `(service_id, run_id, seq)`; a walking link only wins if strictly faster.
pub fn build_relaxed_graph(network: &TransitNetwork) -> RelaxedGraph {
    let excluded = express_exclusions(network);
    let mut best: BTreeMap<(StopIx, StopIx), RelaxedEdge> = BTreeMap::new();
    for c in network.connections() {
        let key = (c.from, c.to);
        if excluded.contains(&key) {
            continue;
        }
        let candidate = RelaxedEdge {
            from: c.from,
            to: c.to,
            min_duration: c.duration,
            backing: EdgeBacking::Service {
                service_id: c.service_id.clone(),
                run_id: c.run_id.clone(),
                seq: c.seq,
            },
        };
        match best.get(&key) {
            Some(cur) if !better_service(&candidate, cur) => {}
            _ => {
                best.insert(key, candidate);
            }
        }
    }
    for link in network.walking_links() {
        let key = (link.from, link.to);
        let walk = RelaxedEdge {
            from: link.from,
            to: link.to,
            min_duration: link.duration,
            backing: EdgeBacking::Walk,
        };
        match best.get(&key) {
            Some(cur) if cur.min_duration <= link.duration => {}
            _ => {
                best.insert(key, walk);
            }
        }
    }
    RelaxedGraph::from_edges(network.stop_count(), best.into_values().collect())
}

fn better_service(candidate: &RelaxedEdge, current: &RelaxedEdge) -> bool {
    let key = |e: &RelaxedEdge| match &e.backing {
        EdgeBacking::Service { service_id, run_id, seq } => (e.min_duration, service_id.clone(), run_id.clone(), *seq),
        EdgeBacking::Walk => (e.min_duration, String::new(), String::new(), 0),
    };
    key(candidate) < key(current)
}
