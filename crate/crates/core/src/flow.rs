//! Dinic max-flow, used to find minimum-expansion subsets without enumeration.

use std::collections::VecDeque;

pub const INF: i64 = i64::MAX / 4;

#[derive(Clone, Debug)]
struct Edge {
    to: usize,
    cap: i64,
}

#[derive(Clone, Debug)]
pub struct Dinic {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Dinic {
    pub fn new(n: usize) -> Self {
        Dinic { edges: Vec::new(), adj: vec![Vec::new(); n], level: vec![0; n], iter: vec![0; n] }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0 });
    }

    fn bfs(&mut self, s: usize) {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &e in &self.adj[v] {
                let Edge { to, cap } = self.edges[e];
                if cap > 0 && self.level[to] < 0 {
                    self.level[to] = self.level[v] + 1;
                    q.push_back(to);
                }
            }
        }
    }

    fn dfs(&mut self, v: usize, t: usize, f: i64) -> i64 {
        if v == t {
            return f;
        }
        while self.iter[v] < self.adj[v].len() {
            let e = self.adj[v][self.iter[v]];
            let Edge { to, cap } = self.edges[e];
            if cap > 0 && self.level[v] < self.level[to] {
                let d = self.dfs(to, t, f.min(cap));
                if d > 0 {
                    self.edges[e].cap -= d;
                    self.edges[e ^ 1].cap += d;
                    return d;
                }
            }
            self.iter[v] += 1;
        }
        0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut flow = 0;
        loop {
            self.bfs(s);
            if self.level[t] < 0 {
                return flow;
            }
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, INF);
                if f == 0 {
                    break;
                }
                flow += f;
            }
        }
    }

    /// Nodes reachable from `s` in the residual graph after [`Dinic::max_flow`].
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &e in &self.adj[v] {
                let Edge { to, cap } = self.edges[e];
                if cap > 0 && !seen[to] {
                    seen[to] = true;
                    stack.push(to);
                }
            }
        }
        seen
    }
}

/// Minimizes `|N(S)| / |S|` over nonempty `S`, where `N(S)` is the union of
/// `lists[i]` for `i in S` and list entries index a universe of size `universe`.
///
/// Dinkelbach iteration on the parametric cut
/// `min_S q|N(S)| - p|S|`; each round strictly lowers `p/q` until the cut is
/// nonnegative, at which point the last set is optimal.
/// Returns the chosen set (as membership flags), `|N(S)|` and `|S|`.
pub fn min_expansion(lists: &[Vec<u32>], universe: usize) -> (Vec<bool>, u64, u64) {
    let n = lists.len();
    assert!(n > 0, "min_expansion needs at least one element");
    let cover = |sel: &[bool]| -> u64 {
        let mut hit = vec![false; universe];
        let mut c = 0;
        for (i, l) in lists.iter().enumerate() {
            if sel[i] {
                for &u in l {
                    if !hit[u as usize] {
                        hit[u as usize] = true;
                        c += 1;
                    }
                }
            }
        }
        c
    };
    let mut best = vec![true; n];
    let mut p = cover(&best);
    let mut q = n as u64;
    loop {
        let (s, t) = (n + universe, n + universe + 1);
        let mut g = Dinic::new(n + universe + 2);
        for (i, l) in lists.iter().enumerate() {
            g.add_edge(s, i, p as i64);
            for &u in l {
                g.add_edge(i, n + u as usize, INF);
            }
        }
        for u in 0..universe {
            g.add_edge(n + u, t, q as i64);
        }
        g.max_flow(s, t);
        let side = g.source_side(s);
        let sel: Vec<bool> = side[..n].to_vec();
        let size = sel.iter().filter(|&&b| b).count() as u64;
        let cov = cover(&sel);
        if size == 0 || (q as i128) * (cov as i128) - (p as i128) * (size as i128) >= 0 {
            return (best, p, q);
        }
        best = sel;
        p = cov;
        q = size;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_max_flow() {
        let mut g = Dinic::new(4);
        g.add_edge(0, 1, 3);
        g.add_edge(0, 2, 2);
        g.add_edge(1, 2, 1);
        g.add_edge(1, 3, 2);
        g.add_edge(2, 3, 3);
        assert_eq!(g.max_flow(0, 3), 5);
    }

    #[test]
    fn expansion_matches_enumeration() {
        let lists = vec![vec![0, 1], vec![1, 2], vec![1], vec![3, 4, 5]];
        let (sel, cov, size) = min_expansion(&lists, 6);
        let mut best = (u64::MAX, 1u64);
        for mask in 1u32..16 {
            let mut hit = [false; 6];
            let mut s = 0;
            for (i, l) in lists.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    s += 1;
                    for &u in l {
                        hit[u as usize] = true;
                    }
                }
            }
            let c = hit.iter().filter(|&&h| h).count() as u64;
            if (c as u128) * (best.1 as u128) < (best.0 as u128) * (s as u128) {
                best = (c, s);
            }
        }
        assert_eq!((cov as u128) * (best.1 as u128), (best.0 as u128) * (size as u128));
        assert_eq!(sel.iter().filter(|&&b| b).count() as u64, size);
    }
}
