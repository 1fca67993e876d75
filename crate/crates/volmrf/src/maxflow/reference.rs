//! Shortest-augmenting-path (Edmonds-Karp) max-flow used to cross-check the
//! production solver. Terminals are explicit nodes here, so the residual
//! bookkeeping is plainly visible and independently verifiable.

use std::collections::VecDeque;

use super::{CutResult, FlowGraph, Side};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
struct Arc {
    to: u32,
    rcap: f64,
}

struct Residual {
    adj: Vec<Vec<u32>>,
    arcs: Vec<Arc>,
    source: usize,
    sink: usize,
}

impl Residual {
    fn build(graph: &FlowGraph) -> Self {
        let n = graph.node_count();
        let mut r = Residual {
            adj: vec![Vec::new(); n + 2],
            arcs: Vec::with_capacity(2 * (2 * n + graph.arc_count())),
            source: n,
            sink: n + 1,
        };
        for i in 0..n {
            let s = graph.source_cap(i);
            if s > 0.0 {
                r.add_pair(r.source, i, s, 0.0);
            }
            let t = graph.sink_cap(i);
            if t > 0.0 {
                r.add_pair(i, r.sink, t, 0.0);
            }
        }
        for a in graph.arcs() {
            if a.cap_fwd > 0.0 || a.cap_rev > 0.0 {
                r.add_pair(a.from as usize, a.to as usize, a.cap_fwd, a.cap_rev);
            }
        }
        r
    }

    fn add_pair(&mut self, from: usize, to: usize, cap_fwd: f64, cap_rev: f64) {
        let e = self.arcs.len() as u32;
        self.arcs.push(Arc {
            to: to as u32,
            rcap: cap_fwd,
        });
        self.arcs.push(Arc {
            to: from as u32,
            rcap: cap_rev,
        });
        self.adj[from].push(e);
        self.adj[to].push(e + 1);
    }

    /// BFS for the shortest residual path; fills per-node incoming arcs.
    fn shortest_path(&self, parent: &mut [u32]) -> bool {
        parent.fill(u32::MAX);
        let mut queue = VecDeque::new();
        queue.push_back(self.source);
        while let Some(i) = queue.pop_front() {
            for &e in &self.adj[i] {
                let a = self.arcs[e as usize];
                let j = a.to as usize;
                if a.rcap > 0.0 && parent[j] == u32::MAX && j != self.source {
                    parent[j] = e;
                    if j == self.sink {
                        return true;
                    }
                    queue.push_back(j);
                }
            }
        }
        false
    }

    fn reachable_from_source(&self) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[self.source] = true;
        let mut queue = VecDeque::new();
        queue.push_back(self.source);
        while let Some(i) = queue.pop_front() {
            for &e in &self.adj[i] {
                let a = self.arcs[e as usize];
                if a.rcap > 0.0 && !seen[a.to as usize] {
                    seen[a.to as usize] = true;
                    queue.push_back(a.to as usize);
                }
            }
        }
        seen
    }
}

fn solve_residual(graph: &FlowGraph) -> Result<(Residual, f64)> {
    graph.validate()?;
    let mut r = Residual::build(graph);
    let mut parent = vec![u32::MAX; graph.node_count() + 2];
    let mut flow = 0.0;
    while r.shortest_path(&mut parent) {
        let mut bottleneck = f64::INFINITY;
        let mut i = r.sink;
        while i != r.source {
            let e = parent[i] as usize;
            bottleneck = bottleneck.min(r.arcs[e].rcap);
            i = r.arcs[e ^ 1].to as usize;
        }
        debug_assert!(bottleneck.is_finite() && bottleneck > 0.0);
        let mut i = r.sink;
        while i != r.source {
            let e = parent[i] as usize;
            r.arcs[e].rcap -= bottleneck;
            r.arcs[e ^ 1].rcap += bottleneck;
            i = r.arcs[e ^ 1].to as usize;
        }
        flow += bottleneck;
    }
    Ok((r, flow))
}

/// Reference max-flow: augments along shortest residual paths until none
/// remains and reports the same canonical cut as the production solver.
pub fn max_flow_bfs(graph: &FlowGraph) -> Result<CutResult> {
    let (r, flow) = solve_residual(graph)?;
    debug_assert!(conservation_holds(graph, &r));
    let seen = r.reachable_from_source();
    let sides = (0..graph.node_count())
        .map(|i| if seen[i] { Side::Source } else { Side::Sink })
        .collect();
    Ok(CutResult {
        flow_value: flow,
        sides,
    })
}

/// Solves with the reference algorithm and reports whether flow conservation
/// and capacity constraints hold on the terminal residual. Test hook.
pub fn check_conservation(graph: &FlowGraph) -> Result<bool> {
    let (r, _) = solve_residual(graph)?;
    Ok(conservation_holds(graph, &r))
}

/// Rebuilds the capacity list in the order [`Residual::build`] added arc
/// pairs and checks, per pair, that the residuals still partition the pair's
/// capacity and stay non-negative, and per internal node, that inflow equals
/// outflow.
fn conservation_holds(graph: &FlowGraph, r: &Residual) -> bool {
    let n = graph.node_count();
    let mut caps = Vec::with_capacity(r.arcs.len() / 2);
    for i in 0..n {
        let s = graph.source_cap(i);
        if s > 0.0 {
            caps.push((r.source, i, s, 0.0));
        }
        let t = graph.sink_cap(i);
        if t > 0.0 {
            caps.push((i, r.sink, t, 0.0));
        }
    }
    for a in graph.arcs() {
        if a.cap_fwd > 0.0 || a.cap_rev > 0.0 {
            caps.push((a.from as usize, a.to as usize, a.cap_fwd, a.cap_rev));
        }
    }
    debug_assert_eq!(2 * caps.len(), r.arcs.len());

    let mut net = vec![0.0; n + 2];
    for (pair, (from, to, cap_fwd, cap_rev)) in caps.into_iter().enumerate() {
        let fwd = &r.arcs[2 * pair];
        let rev = &r.arcs[2 * pair + 1];
        if (fwd.rcap + rev.rcap - cap_fwd - cap_rev).abs() > 1e-9 {
            return false;
        }
        if fwd.rcap < 0.0 || rev.rcap < 0.0 {
            return false;
        }
        let net_fwd = cap_fwd - fwd.rcap; // positive: flow from -> to
        net[from] -= net_fwd;
        net[to] += net_fwd;
    }
    (0..n).all(|i| net[i].abs() < 1e-9)
}
