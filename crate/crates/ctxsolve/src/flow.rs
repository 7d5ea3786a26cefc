//! Minimum-cost flow on integral capacities, solved by successive shortest
//! augmenting paths with an SPFA shortest-path search.
//!
//! Costs may be negative; the networks built in this crate are acyclic, so
//! no negative cycles exist and successive shortest paths stay exact. Flows
//! are integral because every capacity is.

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    cap: i64,
    cost: f64,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    arcs: Vec<Arc>,
    adjacency: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(num_nodes: usize) -> FlowNetwork {
        FlowNetwork {
            arcs: Vec::new(),
            adjacency: vec![Vec::new(); num_nodes],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    /// Add a directed arc; returns its handle for flow queries after the
    /// solve. The reverse arc lives at `handle ^ 1`.
    pub fn add_arc(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        let handle = self.arcs.len();
        self.arcs.push(Arc { to, cap, cost });
        self.adjacency[from].push(handle);
        self.arcs.push(Arc {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.adjacency[to].push(handle + 1);
        handle
    }

    /// Units pushed through the arc `handle` (residual of the reverse arc).
    pub fn flow(&self, handle: usize) -> i64 {
        self.arcs[handle ^ 1].cap
    }

    /// Push up to `want` units from `source` to `sink` along successively
    /// cheapest paths. Returns (units pushed, total cost).
    pub fn min_cost_flow(&mut self, source: usize, sink: usize, want: i64) -> (i64, f64) {
        let mut pushed = 0i64;
        let mut total_cost = 0.0;
        while pushed < want {
            let Some(parent) = self.cheapest_path(source, sink) else {
                break;
            };
            let mut bottleneck = want - pushed;
            let mut node = sink;
            while node != source {
                let handle = parent[node].expect("path exists");
                bottleneck = bottleneck.min(self.arcs[handle].cap);
                node = self.arcs[handle ^ 1].to;
            }
            let mut node = sink;
            while node != source {
                let handle = parent[node].expect("path exists");
                self.arcs[handle].cap -= bottleneck;
                self.arcs[handle ^ 1].cap += bottleneck;
                total_cost += bottleneck as f64 * self.arcs[handle].cost;
                node = self.arcs[handle ^ 1].to;
            }
            pushed += bottleneck;
        }
        (pushed, total_cost)
    }

    /// SPFA from `source`; returns the parent-arc table if `sink` is
    /// reachable in the residual graph.
    fn cheapest_path(&self, source: usize, sink: usize) -> Option<Vec<Option<usize>>> {
        let n = self.num_nodes();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut queued = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = 0.0;
        queue.push_back(source);
        queued[source] = true;
        while let Some(u) = queue.pop_front() {
            queued[u] = false;
            for &handle in &self.adjacency[u] {
                let arc = &self.arcs[handle];
                if arc.cap <= 0 {
                    continue;
                }
                let cand = dist[u] + arc.cost;
                if cand < dist[arc.to] {
                    dist[arc.to] = cand;
                    parent[arc.to] = Some(handle);
                    if !queued[arc.to] {
                        queue.push_back(arc.to);
                        queued[arc.to] = true;
                    }
                }
            }
        }
        if dist[sink].is_finite() {
            Some(parent)
        } else {
            None
        }
    }
}
