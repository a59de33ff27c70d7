//! Dinic max-flow on integer capacities.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
struct Arc {
    to: u32,
    rev: u32,
    cap: i64,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    arcs: Vec<Vec<Arc>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        Self { arcs: vec![Vec::new(); nodes], level: vec![0; nodes], iter: vec![0; nodes] }
    }

    /// Adds `u → v` with capacity `cap` and `v → u` with capacity `back`.
    /// Returns the position of the forward arc in `u`'s list.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: i64, back: i64) -> usize {
        let ru = self.arcs[v].len() as u32;
        let rv = self.arcs[u].len() as u32;
        self.arcs[u].push(Arc { to: v as u32, rev: ru, cap });
        self.arcs[v].push(Arc { to: u as u32, rev: rv, cap: back });
        rv as usize
    }

    pub fn set_capacity(&mut self, u: usize, idx: usize, cap: i64, back: i64) {
        let (to, rev) = (self.arcs[u][idx].to as usize, self.arcs[u][idx].rev as usize);
        self.arcs[u][idx].cap = cap;
        self.arcs[to][rev].cap = back;
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for a in &self.arcs[u] {
                if a.cap > 0 && self.level[a.to as usize] < 0 {
                    self.level[a.to as usize] = self.level[u] + 1;
                    q.push_back(a.to as usize);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: i64) -> i64 {
        if u == t {
            return pushed;
        }
        while self.iter[u] < self.arcs[u].len() {
            let i = self.iter[u];
            let (to, cap) = (self.arcs[u][i].to as usize, self.arcs[u][i].cap);
            if cap > 0 && self.level[to] == self.level[u] + 1 {
                let d = self.dfs(to, t, pushed.min(cap));
                if d > 0 {
                    self.arcs[u][i].cap -= d;
                    let rev = self.arcs[u][i].rev as usize;
                    self.arcs[to][rev].cap += d;
                    return d;
                }
            }
            self.iter[u] += 1;
        }
        0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut flow = 0;
        while self.bfs(s, t) {
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, i64::MAX);
                if f == 0 {
                    break;
                }
                flow += f;
            }
        }
        flow
    }

    /// Nodes reachable from `s` in the residual graph.
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.arcs.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for a in &self.arcs[u] {
                if a.cap > 0 && !seen[a.to as usize] {
                    seen[a.to as usize] = true;
                    stack.push(a.to as usize);
                }
            }
        }
        seen
    }

    /// Nodes that can still reach `t` in the residual graph.
    pub fn sink_side(&self, t: usize) -> Vec<bool> {
        let mut seen = vec![false; self.arcs.len()];
        seen[t] = true;
        let mut stack = vec![t];
        while let Some(v) = stack.pop() {
            // u reaches v through arc u→v with residual cap > 0; that arc's
            // reverse sits in v's list.
            for a in &self.arcs[v] {
                let u = a.to as usize;
                let forward = &self.arcs[u][a.rev as usize];
                if forward.cap > 0 && !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_small_network() {
        // CLRS-style example, max flow 23
        let mut f = FlowNetwork::new(6);
        for (u, v, c) in [
            (0, 1, 16),
            (0, 2, 13),
            (1, 2, 10),
            (2, 1, 4),
            (1, 3, 12),
            (3, 2, 9),
            (2, 4, 14),
            (4, 3, 7),
            (3, 5, 20),
            (4, 5, 4),
        ] {
            f.add_edge(u, v, c, 0);
        }
        assert_eq!(f.max_flow(0, 5), 23);
        let side = f.source_side(0);
        assert!(side[0] && !side[5]);
    }
}
