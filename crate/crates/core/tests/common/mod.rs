//! Independent brute-force oracles shared by the integration and acceptance tests.
//! Nothing here calls into the library's algorithms; graphs are plain
//! adjacency matrices and every answer comes from exhaustive enumeration.

#![allow(dead_code)]

use rand::{Rng, RngCore};
use sdmp::topology::{parse_topology, Topology};

/// Undirected graph over nodes `0..n`, all stations on wireless links.
#[derive(Debug, Clone)]
pub struct Graph {
    pub adj: Vec<Vec<bool>>,
    pub p: Vec<f64>,
}

impl Graph {
    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|&(a, b)| self.adj[a][b])
            .collect()
    }

    pub fn id(i: usize) -> String {
        format!("v{i:02}")
    }

    pub fn to_text(&self) -> String {
        let mut text = String::new();
        for (i, p) in self.p.iter().enumerate() {
            text.push_str(&format!("node {} STA {p}\n", Self::id(i)));
        }
        for (a, b) in self.edges() {
            text.push_str(&format!("link {} {} wireless\n", Self::id(a), Self::id(b)));
        }
        text
    }

    pub fn to_topology(&self) -> Topology {
        parse_topology(&self.to_text()).expect("generated topology parses")
    }
}

/// Connected graph: a random spanning tree plus each other edge with probability `density`.
/// Compromise probabilities are drawn from `[0, p_max)`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, density: f64, p_max: f64) -> Graph {
    let mut adj = vec![vec![false; n]; n];
    for v in 1..n {
        let u = rng.gen_range(0..v);
        adj[u][v] = true;
        adj[v][u] = true;
    }
    for a in 0..n {
        for b in a + 1..n {
            if !adj[a][b] && rng.gen::<f64>() < density {
                adj[a][b] = true;
                adj[b][a] = true;
            }
        }
    }
    let p = (0..n)
        .map(|_| {
            if p_max > 0.0 {
                rng.gen_range(0.0..p_max)
            } else {
                0.0
            }
        })
        .collect();
    Graph { adj, p }
}

/// `k` parallel branches `s - r_i - d`, every relay compromised with probability `p`.
pub fn parallel_relays(k: usize, p: f64) -> String {
    let mut text = String::from("node s STA\nnode d STA\n");
    for i in 1..=k {
        text.push_str(&format!("node r{i} STA {p}\n"));
    }
    for i in 1..=k {
        text.push_str(&format!("link s r{i} wireless\nlink r{i} d wireless\n"));
    }
    text
}

fn reachable(g: &Graph, s: usize, d: usize, removed: u32, skip_direct: bool) -> bool {
    let n = g.len();
    let mut seen = vec![false; n];
    let mut stack = vec![s];
    seen[s] = true;
    while let Some(v) = stack.pop() {
        if v == d {
            return true;
        }
        for w in 0..n {
            if !g.adj[v][w] || seen[w] || removed & (1 << w) != 0 {
                continue;
            }
            if skip_direct && ((v == s && w == d) || (v == d && w == s)) {
                continue;
            }
            seen[w] = true;
            stack.push(w);
        }
    }
    false
}

/// Maximum number of internally node-disjoint `s-d` paths by Menger's theorem:
/// the smallest relay set whose removal separates `s` from `d`, found by
/// trying every subset, plus one for a direct `s-d` link.
pub fn menger_count(g: &Graph, s: usize, d: usize) -> usize {
    let n = g.len();
    let direct = usize::from(g.adj[s][d]);
    if !reachable(g, s, d, 0, true) {
        return direct;
    }
    let relays: Vec<usize> = (0..n).filter(|&v| v != s && v != d).collect();
    let mut best = relays.len();
    for mask in 0u32..(1 << relays.len()) {
        let size = mask.count_ones() as usize;
        if size >= best {
            continue;
        }
        let removed = relays
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .fold(0u32, |acc, (_, &v)| acc | (1 << v));
        if !reachable(g, s, d, removed, true) {
            best = size;
        }
    }
    best + direct
}

/// Every simple `s-d` path, as node index sequences.
pub fn simple_paths(g: &Graph, s: usize, d: usize) -> Vec<Vec<usize>> {
    fn walk(g: &Graph, d: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let v = *path.last().unwrap();
        if v == d {
            out.push(path.clone());
            return;
        }
        for w in 0..g.len() {
            if g.adj[v][w] && !path.contains(&w) {
                path.push(w);
                walk(g, d, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(g, d, &mut vec![s], &mut out);
    out
}

pub fn relay_cost(g: &Graph, path: &[usize]) -> f64 {
    path[1..path.len() - 1]
        .iter()
        .map(|&v| -(1.0 - g.p[v]).ln())
        .sum()
}

/// Best family of pairwise node-disjoint paths, searched exhaustively:
/// largest size first, then least total cost, then fewest total hops.
/// Returns `(size, total cost, total hops)`.
pub fn best_disjoint_family(g: &Graph, s: usize, d: usize) -> (usize, f64, usize) {
    let paths = simple_paths(g, s, d);
    let costs: Vec<f64> = paths.iter().map(|p| relay_cost(g, p)).collect();
    let masks: Vec<u32> = paths
        .iter()
        .map(|p| p[1..p.len() - 1].iter().fold(0, |m, &v| m | (1 << v)))
        .collect();
    let mut best = (0usize, 0.0f64, 0usize);
    #[allow(clippy::too_many_arguments)]
    fn search(
        paths: &[Vec<usize>],
        costs: &[f64],
        masks: &[u32],
        from: usize,
        used: u32,
        direct_used: bool,
        acc: (usize, f64, usize),
        best: &mut (usize, f64, usize),
    ) {
        let better = acc.0 > best.0
            || (acc.0 == best.0 && acc.1 < best.1 - 1e-12 * best.1.max(1.0))
            || (acc.0 == best.0
                && (acc.1 - best.1).abs() <= 1e-12 * best.1.max(1.0)
                && acc.2 < best.2);
        if better {
            *best = acc;
        }
        for i in from..paths.len() {
            let direct = paths[i].len() == 2;
            if masks[i] & used != 0 || (direct && direct_used) {
                continue;
            }
            search(
                paths,
                costs,
                masks,
                i + 1,
                used | masks[i],
                direct_used || direct,
                (acc.0 + 1, acc.1 + costs[i], acc.2 + paths[i].len() - 1),
                best,
            );
        }
    }
    search(&paths, &costs, &masks, 0, 0, false, (0, 0.0, 0), &mut best);
    best
}

/// Probability that the adversary gets enough shares, summed over every
/// compromise pattern of the non-endpoint nodes. Share `i` rides `paths[i]`
/// and leaks when any relay on it is compromised; `enough(leaked)` decides
/// success from the number of leaked shares.
pub fn interception_by_patterns(
    g: &Graph,
    s: usize,
    d: usize,
    paths: &[Vec<usize>],
    enough: impl Fn(usize) -> bool,
) -> f64 {
    let relays: Vec<usize> = (0..g.len()).filter(|&v| v != s && v != d).collect();
    let mut total = 0.0;
    for mask in 0u32..(1 << relays.len()) {
        let compromised = |v: usize| {
            relays
                .iter()
                .position(|&r| r == v)
                .is_some_and(|i| mask & (1 << i) != 0)
        };
        let weight: f64 = relays
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if mask & (1 << i) != 0 {
                    g.p[v]
                } else {
                    1.0 - g.p[v]
                }
            })
            .product();
        let leaked = paths
            .iter()
            .filter(|p| p[1..p.len() - 1].iter().any(|&v| compromised(v)))
            .count();
        if enough(leaked) {
            total += weight;
        }
    }
    total
}

/// Encoding the redundancy rule should pick, from all `2^n` delivery outcomes.
/// `None` stands for the chain over all paths, `Some(t)` for threshold `t` of `n`.
pub fn redundancy_oracle(mobility: f64, hops: &[usize], delta: f64) -> Option<usize> {
    if mobility == 0.0 {
        return None;
    }
    let n = hops.len();
    let success: Vec<f64> = hops
        .iter()
        .map(|&h| (1.0 - mobility).powi(h as i32))
        .collect();
    let mut at_least = vec![0.0f64; n + 1];
    for outcome in 0u32..(1 << n) {
        let weight: f64 = (0..n)
            .map(|i| {
                if outcome & (1 << i) != 0 {
                    success[i]
                } else {
                    1.0 - success[i]
                }
            })
            .product();
        for slot in at_least.iter_mut().take(outcome.count_ones() as usize + 1) {
            *slot += weight;
        }
    }
    Some(
        (1..=n)
            .rev()
            .find(|&t| at_least[t] >= 1.0 - delta)
            .unwrap_or(1),
    )
}

/// An `RngCore` that hands out a fixed byte script, for steering share coefficients.
pub struct Replay(pub Vec<u8>, pub usize);

impl RngCore for Replay {
    fn next_u32(&mut self) -> u32 {
        let mut b = [0; 4];
        self.fill_bytes(&mut b);
        u32::from_le_bytes(b)
    }

    fn next_u64(&mut self) -> u64 {
        let mut b = [0; 8];
        self.fill_bytes(&mut b);
        u64::from_le_bytes(b)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for byte in dest {
            *byte = self.0[self.1 % self.0.len()];
            self.1 += 1;
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

/// All `k`-element subsets of `0..n`, in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(n, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(n, k, 0, &mut Vec::new(), &mut out);
    out
}
