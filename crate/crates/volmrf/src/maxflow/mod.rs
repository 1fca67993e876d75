//! s-t max-flow / min-cut on sparse capacitated graphs: the inner engine of
//! every expansion move.
//!
//! [`FlowGraph`] is an immutable problem description with collapsed
//! terminals (one source and one sink capacity per node). Two solvers
//! consume it: the production [`BkSolver`] (Boykov-Kolmogorov style tree
//! reuse) and [`reference::max_flow_bfs`], a shortest-augmenting-path
//! implementation kept for cross-checking.
//!
//! Both report the same canonical minimum cut: a node is `Source`-side
//! exactly when it is reachable from the source in the final residual
//! graph. That set is identical for every maximum flow, so the two solvers
//! agree on sides, not just on the flow value.

mod bk;
pub mod reference;

pub use bk::BkSolver;

use crate::error::{Error, Result};

/// Which side of the minimum cut a node ends up on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Sink,
}

/// Max-flow value plus the canonical minimum cut.
#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    pub flow_value: f64,
    pub sides: Vec<Side>,
}

impl CutResult {
    #[inline]
    pub fn is_source_side(&self, node: usize) -> bool {
        self.sides[node] == Side::Source
    }
}

/// One pairwise arc with capacities in both directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcSpec {
    pub from: u32,
    pub to: u32,
    pub cap_fwd: f64,
    pub cap_rev: f64,
}

/// Capacitated s-t graph. Node indices exclude the two terminals; terminal
/// capacities live in per-node arrays. Reusable as an arena: [`FlowGraph::clear`]
/// keeps the allocations for the next expansion move.
#[derive(Debug, Clone, Default)]
pub struct FlowGraph {
    source_cap: Vec<f64>,
    sink_cap: Vec<f64>,
    arcs: Vec<ArcSpec>,
}

impl FlowGraph {
    pub fn new(node_count: usize) -> Self {
        Self {
            source_cap: vec![0.0; node_count],
            sink_cap: vec![0.0; node_count],
            arcs: Vec::new(),
        }
    }

    pub fn with_capacity(nodes: usize, arcs: usize) -> Self {
        let mut g = Self::default();
        g.source_cap.reserve(nodes);
        g.sink_cap.reserve(nodes);
        g.arcs.reserve(arcs);
        g
    }

    /// Drops all nodes and arcs but keeps the allocations.
    pub fn clear(&mut self) {
        self.source_cap.clear();
        self.sink_cap.clear();
        self.arcs.clear();
    }

    pub fn add_node(&mut self) -> usize {
        self.source_cap.push(0.0);
        self.sink_cap.push(0.0);
        self.source_cap.len() - 1
    }

    /// Appends `count` nodes and returns the index of the first.
    pub fn add_nodes(&mut self, count: usize) -> usize {
        let first = self.source_cap.len();
        self.source_cap.resize(first + count, 0.0);
        self.sink_cap.resize(first + count, 0.0);
        first
    }

    /// Accumulates terminal capacities on a node.
    #[inline]
    pub fn add_terminal(&mut self, node: usize, cap_source: f64, cap_sink: f64) {
        self.source_cap[node] += cap_source;
        self.sink_cap[node] += cap_sink;
    }

    /// Adds a pairwise arc with forward capacity `cap_fwd` (i to j) and
    /// reverse capacity `cap_rev` (j to i).
    #[inline]
    pub fn add_arc(&mut self, from: usize, to: usize, cap_fwd: f64, cap_rev: f64) {
        debug_assert_ne!(from, to);
        self.arcs.push(ArcSpec {
            from: from as u32,
            to: to as u32,
            cap_fwd,
            cap_rev,
        });
    }

    pub fn node_count(&self) -> usize {
        self.source_cap.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn source_cap(&self, node: usize) -> f64 {
        self.source_cap[node]
    }

    pub fn sink_cap(&self, node: usize) -> f64 {
        self.sink_cap[node]
    }

    pub fn arcs(&self) -> &[ArcSpec] {
        &self.arcs
    }

    /// Checks every capacity is finite and non-negative and every index in
    /// range; run by the solvers before touching the graph.
    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        if n > (u32::MAX - 3) as usize || self.arcs.len() > (u32::MAX / 2 - 2) as usize {
            return Err(Error::Parameter("flow graph too large".into()));
        }
        let cap_ok = |c: f64| c.is_finite() && c >= 0.0;
        for (i, (&s, &t)) in self.source_cap.iter().zip(&self.sink_cap).enumerate() {
            if !cap_ok(s) || !cap_ok(t) {
                return Err(Error::Parameter(format!(
                    "invalid terminal capacity ({s}, {t}) on node {i}"
                )));
            }
        }
        for (k, a) in self.arcs.iter().enumerate() {
            if a.from as usize >= n || a.to as usize >= n {
                return Err(Error::Parameter(format!(
                    "arc {k} references node out of range ({}-{}, {n} nodes)",
                    a.from, a.to
                )));
            }
            if a.from == a.to {
                return Err(Error::Parameter(format!("arc {k} is a self-loop")));
            }
            if !cap_ok(a.cap_fwd) || !cap_ok(a.cap_rev) {
                return Err(Error::Parameter(format!(
                    "invalid capacity ({}, {}) on arc {k}",
                    a.cap_fwd, a.cap_rev
                )));
            }
        }
        Ok(())
    }

    /// Capacity of the cut induced by a side assignment: terminal arcs that
    /// cross plus pairwise arcs from the source side to the sink side.
    pub fn cut_capacity(&self, sides: &[Side]) -> f64 {
        let mut cap = 0.0;
        for (i, side) in sides.iter().enumerate().take(self.node_count()) {
            match side {
                Side::Sink => cap += self.source_cap[i],
                Side::Source => cap += self.sink_cap[i],
            }
        }
        for a in &self.arcs {
            match (sides[a.from as usize], sides[a.to as usize]) {
                (Side::Source, Side::Sink) => cap += a.cap_fwd,
                (Side::Sink, Side::Source) => cap += a.cap_rev,
                _ => {}
            }
        }
        cap
    }
}

/// Solves one graph with a fresh [`BkSolver`]. Hot loops should hold a
/// solver and call [`BkSolver::solve`] to reuse its arena.
pub fn max_flow(graph: &FlowGraph) -> Result<CutResult> {
    BkSolver::new().solve(graph)
}
