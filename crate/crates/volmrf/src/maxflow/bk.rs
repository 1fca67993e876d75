//! Boykov-Kolmogorov style augmenting-path solver: grows a source tree and
//! a sink tree simultaneously and reuses both across augmentations, which is
//! what makes it fast on grid-structured vision graphs.
//!
//! Terminal arcs are collapsed per node into one net residual `tr_cap`
//! (positive: residual from the source, negative: residual to the sink);
//! `min(cap_source, cap_sink)` is routed straight through at load time.

use std::collections::VecDeque;

use super::{CutResult, FlowGraph, Side};
use crate::error::Result;

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tree {
    Free,
    Source,
    Sink,
}

/// Reusable solver arena. One instance serves a whole sequence of expansion
/// moves without reallocating; see [`BkSolver::solve`].
#[derive(Debug)]
pub struct BkSolver {
    first_out: Vec<u32>,
    next_arc: Vec<u32>,
    head: Vec<u32>,
    rcap: Vec<f64>,
    tr_cap: Vec<f64>,
    parent: Vec<u32>,
    tree: Vec<Tree>,
    ts: Vec<u64>,
    dist: Vec<u64>,
    active: VecDeque<u32>,
    orphans: VecDeque<u32>,
    time: u64,
    flow: f64,
}

impl Default for BkSolver {
    fn default() -> Self {
        Self::new()
    }
}

impl BkSolver {
    pub fn new() -> Self {
        Self {
            first_out: Vec::new(),
            next_arc: Vec::new(),
            head: Vec::new(),
            rcap: Vec::new(),
            tr_cap: Vec::new(),
            parent: Vec::new(),
            tree: Vec::new(),
            ts: Vec::new(),
            dist: Vec::new(),
            active: VecDeque::new(),
            orphans: VecDeque::new(),
            time: 0,
            flow: 0.0,
        }
    }

    /// Preallocates for a graph of the given size.
    pub fn with_capacity(nodes: usize, arcs: usize) -> Self {
        let mut s = Self::new();
        s.first_out.reserve(nodes);
        s.tr_cap.reserve(nodes);
        s.parent.reserve(nodes);
        s.tree.reserve(nodes);
        s.ts.reserve(nodes);
        s.dist.reserve(nodes);
        s.next_arc.reserve(2 * arcs);
        s.head.reserve(2 * arcs);
        s.rcap.reserve(2 * arcs);
        s
    }

    /// Validates the graph, computes the maximum flow, and reports the
    /// canonical minimum cut (source side = residual-reachable set).
    pub fn solve(&mut self, graph: &FlowGraph) -> Result<CutResult> {
        graph.validate()?;
        self.load(graph);
        self.run();
        Ok(CutResult {
            flow_value: self.flow,
            sides: self.sides(),
        })
    }

    fn load(&mut self, graph: &FlowGraph) {
        let n = graph.node_count();
        self.first_out.clear();
        self.first_out.resize(n, NONE);
        self.next_arc.clear();
        self.head.clear();
        self.rcap.clear();
        self.tr_cap.clear();
        self.parent.clear();
        self.parent.resize(n, NONE);
        self.tree.clear();
        self.tree.resize(n, Tree::Free);
        self.ts.clear();
        self.ts.resize(n, 0);
        self.dist.clear();
        self.dist.resize(n, 0);
        self.active.clear();
        self.orphans.clear();
        self.time = 0;
        self.flow = 0.0;

        for i in 0..n {
            let s = graph.source_cap(i);
            let t = graph.sink_cap(i);
            self.flow += s.min(t);
            self.tr_cap.push(s - t);
        }
        for a in graph.arcs() {
            if a.cap_fwd == 0.0 && a.cap_rev == 0.0 {
                continue;
            }
            self.push_arc(a.from, a.to, a.cap_fwd);
            self.push_arc(a.to, a.from, a.cap_rev);
        }

        for i in 0..n as u32 {
            let c = self.tr_cap[i as usize];
            if c != 0.0 {
                self.tree[i as usize] = if c > 0.0 { Tree::Source } else { Tree::Sink };
                self.parent[i as usize] = TERMINAL;
                self.dist[i as usize] = 1;
                self.active.push_back(i);
            }
        }
    }

    fn push_arc(&mut self, from: u32, to: u32, cap: f64) {
        let e = self.head.len() as u32;
        self.head.push(to);
        self.next_arc.push(self.first_out[from as usize]);
        self.first_out[from as usize] = e;
        self.rcap.push(cap);
    }

    fn run(&mut self) {
        while let Some(connector) = self.grow() {
            self.time += 1;
            self.augment(connector);
            self.adopt();
        }
        // Capacity constraints on the internal flow at termination.
        debug_assert!(self.rcap.iter().all(|&r| r >= 0.0));
    }

    /// Expands both trees until they touch; returns the connecting arc
    /// oriented from the source tree into the sink tree.
    fn grow(&mut self) -> Option<u32> {
        while let Some(&i) = self.active.front() {
            let ti = self.tree[i as usize];
            if ti == Tree::Free {
                self.active.pop_front();
                continue;
            }
            let mut e = self.first_out[i as usize];
            while e != NONE {
                let residual = match ti {
                    Tree::Source => self.rcap[e as usize],
                    _ => self.rcap[(e ^ 1) as usize],
                };
                if residual > 0.0 {
                    let j = self.head[e as usize];
                    let tj = self.tree[j as usize];
                    if tj == Tree::Free {
                        self.tree[j as usize] = ti;
                        self.parent[j as usize] = e ^ 1;
                        self.dist[j as usize] = self.dist[i as usize] + 1;
                        self.ts[j as usize] = self.ts[i as usize];
                        self.active.push_back(j);
                    } else if tj != ti {
                        // Trees touched; keep `i` active, it may have more
                        // useful arcs after the augmentation.
                        return Some(if ti == Tree::Source { e } else { e ^ 1 });
                    }
                }
                e = self.next_arc[e as usize];
            }
            self.active.pop_front();
        }
        None
    }

    /// Pushes the bottleneck of the path through `connector` and queues the
    /// nodes whose parent arc saturated as orphans.
    fn augment(&mut self, connector: u32) {
        let mut bottleneck = self.rcap[connector as usize];

        let mut i = self.head[(connector ^ 1) as usize];
        loop {
            let pe = self.parent[i as usize];
            if pe == TERMINAL {
                bottleneck = bottleneck.min(self.tr_cap[i as usize]);
                break;
            }
            bottleneck = bottleneck.min(self.rcap[(pe ^ 1) as usize]);
            i = self.head[pe as usize];
        }
        let mut j = self.head[connector as usize];
        loop {
            let pe = self.parent[j as usize];
            if pe == TERMINAL {
                bottleneck = bottleneck.min(-self.tr_cap[j as usize]);
                break;
            }
            bottleneck = bottleneck.min(self.rcap[pe as usize]);
            j = self.head[pe as usize];
        }
        debug_assert!(bottleneck > 0.0);

        self.flow += bottleneck;
        self.rcap[connector as usize] -= bottleneck;
        self.rcap[(connector ^ 1) as usize] += bottleneck;

        let mut i = self.head[(connector ^ 1) as usize];
        loop {
            let pe = self.parent[i as usize];
            if pe == TERMINAL {
                self.tr_cap[i as usize] -= bottleneck;
                if self.tr_cap[i as usize] == 0.0 {
                    self.parent[i as usize] = ORPHAN;
                    self.orphans.push_back(i);
                }
                break;
            }
            self.rcap[pe as usize] += bottleneck;
            self.rcap[(pe ^ 1) as usize] -= bottleneck;
            if self.rcap[(pe ^ 1) as usize] == 0.0 {
                self.parent[i as usize] = ORPHAN;
                self.orphans.push_back(i);
            }
            i = self.head[pe as usize];
        }
        let mut j = self.head[connector as usize];
        loop {
            let pe = self.parent[j as usize];
            if pe == TERMINAL {
                self.tr_cap[j as usize] += bottleneck;
                if self.tr_cap[j as usize] == 0.0 {
                    self.parent[j as usize] = ORPHAN;
                    self.orphans.push_back(j);
                }
                break;
            }
            self.rcap[pe as usize] -= bottleneck;
            self.rcap[(pe ^ 1) as usize] += bottleneck;
            if self.rcap[pe as usize] == 0.0 {
                self.parent[j as usize] = ORPHAN;
                self.orphans.push_back(j);
            }
            j = self.head[pe as usize];
        }
    }

    fn adopt(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            self.process_orphan(i);
        }
    }

    /// Tries to re-attach an orphan to its tree through a residual arc whose
    /// other end still reaches a terminal; otherwise frees the node and
    /// cascades to its children.
    fn process_orphan(&mut self, i: u32) {
        let t = self.tree[i as usize];
        debug_assert_ne!(t, Tree::Free);

        let mut best_arc = NONE;
        let mut best_dist = u64::MAX;
        let mut e = self.first_out[i as usize];
        while e != NONE {
            let residual = match t {
                Tree::Source => self.rcap[(e ^ 1) as usize],
                _ => self.rcap[e as usize],
            };
            if residual > 0.0 {
                let j = self.head[e as usize];
                if self.tree[j as usize] == t {
                    if let Some(d) = self.origin_distance(j) {
                        if d < best_dist {
                            best_dist = d;
                            best_arc = e;
                        }
                    }
                }
            }
            e = self.next_arc[e as usize];
        }

        if best_arc != NONE {
            self.parent[i as usize] = best_arc;
            self.ts[i as usize] = self.time;
            self.dist[i as usize] = best_dist + 1;
            return;
        }

        // No parent found: neighbors that pointed at `i` become orphans,
        // neighbors that could adopt someone later become active.
        let mut e = self.first_out[i as usize];
        while e != NONE {
            let j = self.head[e as usize];
            if self.tree[j as usize] == t {
                let residual = match t {
                    Tree::Source => self.rcap[(e ^ 1) as usize],
                    _ => self.rcap[e as usize],
                };
                if residual > 0.0 {
                    self.active.push_back(j);
                }
                let pj = self.parent[j as usize];
                if pj != NONE && pj != TERMINAL && pj != ORPHAN && self.head[pj as usize] == i {
                    self.parent[j as usize] = ORPHAN;
                    self.orphans.push_back(j);
                }
            }
            e = self.next_arc[e as usize];
        }
        self.tree[i as usize] = Tree::Free;
        self.parent[i as usize] = NONE;
    }

    /// Distance from `j` to its tree's terminal, or `None` if the parent
    /// chain dead-ends in an orphan. Verified prefixes are timestamped so
    /// repeated checks in the same adoption round are O(1).
    fn origin_distance(&mut self, j: u32) -> Option<u64> {
        let mut steps = 0u64;
        let mut k = j;
        let total = loop {
            if self.ts[k as usize] == self.time && self.time > 0 {
                break steps + self.dist[k as usize];
            }
            let pe = self.parent[k as usize];
            if pe == TERMINAL {
                self.ts[k as usize] = self.time;
                self.dist[k as usize] = 1;
                break steps + 1;
            }
            if pe == NONE || pe == ORPHAN {
                return None;
            }
            steps += 1;
            k = self.head[pe as usize];
        };
        // Write the verified distances back along the walked prefix.
        let mut node = j;
        let mut d = total;
        while node != k {
            self.ts[node as usize] = self.time;
            self.dist[node as usize] = d;
            d -= 1;
            node = self.head[self.parent[node as usize] as usize];
        }
        Some(total)
    }

    /// Canonical sides: BFS from the source through positive residuals.
    fn sides(&self) -> Vec<Side> {
        let n = self.tr_cap.len();
        let mut side = vec![Side::Sink; n];
        let mut queue = VecDeque::new();
        for (i, &cap) in self.tr_cap.iter().enumerate() {
            if cap > 0.0 {
                side[i] = Side::Source;
                queue.push_back(i as u32);
            }
        }
        while let Some(i) = queue.pop_front() {
            let mut e = self.first_out[i as usize];
            while e != NONE {
                if self.rcap[e as usize] > 0.0 {
                    let j = self.head[e as usize];
                    if side[j as usize] == Side::Sink {
                        side[j as usize] = Side::Source;
                        queue.push_back(j);
                    }
                }
                e = self.next_arc[e as usize];
            }
        }
        side
    }
}
