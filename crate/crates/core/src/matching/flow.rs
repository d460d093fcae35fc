//! Min-cost flow by successive shortest augmenting paths.
//!
//! Dijkstra runs on reduced costs `c(u,v) + h(u) - h(v)` with Johnson
//! potentials `h`, which stay valid because every augmentation follows a
//! shortest path. Each search stops once the sink is settled.
//!
//! Costs are non-negative integers, so every comparison is exact. After `f`
//! unit augmentations the flow is a minimum-cost flow of value `f`, which is
//! what makes the solver usable for cardinality-constrained assignment.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

#[derive(Clone, Debug)]
struct Edge {
    to: usize,
    cap: i64,
    cost: i64,
    rev: usize,
}

#[derive(Clone, Debug)]
pub struct MinCostFlow {
    graph: Vec<Vec<Edge>>,
    potential: Vec<i64>,
}

/// Handle to a forward edge, for reading its flow back.
#[derive(Clone, Copy, Debug)]
pub struct EdgeRef {
    from: usize,
    index: usize,
    capacity: i64,
}

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        MinCostFlow {
            graph: vec![Vec::new(); nodes],
            potential: vec![0; nodes],
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: i64) -> EdgeRef {
        assert!(cost >= 0, "edge costs must be non-negative");
        let index = self.graph[from].len();
        let rev = self.graph[to].len() + usize::from(from == to);
        self.graph[from].push(Edge { to, cap, cost, rev });
        self.graph[to].push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
            rev: index,
        });
        EdgeRef {
            from,
            index,
            capacity: cap,
        }
    }

    pub fn flow_on(&self, e: EdgeRef) -> i64 {
        e.capacity - self.graph[e.from][e.index].cap
    }

    /// Pushes up to `limit` units from `s` to `t`; returns `(flow, cost)`.
    pub fn run(&mut self, s: usize, t: usize, limit: i64) -> (i64, i64) {
        const UNREACHED: i64 = i64::MAX;
        let n = self.graph.len();
        let mut flow = 0;
        let mut cost = 0;
        let mut dist = vec![UNREACHED; n];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
        while flow < limit {
            dist.iter_mut().for_each(|d| *d = UNREACHED);
            prev.iter_mut().for_each(|p| *p = None);
            dist[s] = 0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((0, s)));
            while let Some(Reverse((d, u))) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                if u == t {
                    break;
                }
                for (ei, e) in self.graph[u].iter().enumerate() {
                    if e.cap <= 0 {
                        continue;
                    }
                    let reduced = e.cost + self.potential[u] - self.potential[e.to];
                    debug_assert!(reduced >= 0, "negative reduced cost {reduced}");
                    let nd = d + reduced;
                    if nd < dist[e.to] {
                        dist[e.to] = nd;
                        prev[e.to] = Some((u, ei));
                        heap.push(Reverse((nd, e.to)));
                    }
                }
            }
            if dist[t] == UNREACHED {
                break;
            }
            // Nodes not settled before `t` are at least `dist[t]` away; capping
            // there keeps every residual reduced cost non-negative.
            let dt = dist[t];
            for v in 0..n {
                self.potential[v] += dist[v].min(dt);
            }
            let mut push = limit - flow;
            let mut v = t;
            while let Some((u, ei)) = prev[v] {
                push = push.min(self.graph[u][ei].cap);
                v = u;
            }
            let mut v = t;
            while let Some((u, ei)) = prev[v] {
                let rev = self.graph[u][ei].rev;
                self.graph[u][ei].cap -= push;
                cost += push * self.graph[u][ei].cost;
                self.graph[v][rev].cap += push;
                v = u;
            }
            flow += push;
        }
        (flow, cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_cheaper_parallel_route() {
        // s -> a -> t costs 10+10, s -> b -> t costs 5+20; capacity 1 each.
        let mut g = MinCostFlow::new(4);
        g.add_edge(0, 1, 1, 10);
        g.add_edge(1, 3, 1, 10);
        g.add_edge(0, 2, 1, 5);
        g.add_edge(2, 3, 1, 20);
        let (f, c) = g.run(0, 3, 1);
        assert_eq!(f, 1);
        assert_eq!(c, 20);
        let (f2, c2) = g.run(0, 3, 1);
        assert_eq!((f2, c2), (1, 25));
    }

    #[test]
    fn rerouting_through_residual_edge() {
        // Classic instance where the second augmentation must cancel flow.
        // a0-b0:1, a0-b1:2, a1-b0:1, a1-b1:10 ; optimum for 2 = a0-b1 + a1-b0 = 3.
        let mut g = MinCostFlow::new(6);
        g.add_edge(0, 1, 1, 0);
        g.add_edge(0, 2, 1, 0);
        let e00 = g.add_edge(1, 3, 1, 1);
        let e01 = g.add_edge(1, 4, 1, 2);
        let e10 = g.add_edge(2, 3, 1, 1);
        g.add_edge(2, 4, 1, 10);
        g.add_edge(3, 5, 1, 0);
        g.add_edge(4, 5, 1, 0);
        let (f, c) = g.run(0, 5, 2);
        assert_eq!(f, 2);
        assert_eq!(c, 3);
        assert_eq!(g.flow_on(e00), 0);
        assert_eq!(g.flow_on(e01), 1);
        assert_eq!(g.flow_on(e10), 1);
    }

    #[test]
    fn stops_when_saturated() {
        let mut g = MinCostFlow::new(2);
        g.add_edge(0, 1, 3, 1);
        assert_eq!(g.run(0, 1, 10), (3, 3));
    }
}
