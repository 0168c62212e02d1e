//! Undirected graphs, graph priors and the add/remove-one-edge proposal.
//!
//! Unordered pairs `(i, j)`, `i < j`, are indexed lexicographically, so pair
//! index order is also the deterministic order used when a proposal picks
//! "the r-th present edge" or "the r-th absent edge".

use std::fmt;

use rand::Rng;
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};

/// Largest node count accepted by [`enumerate_graphs`].
pub const MAX_ENUMERATION_NODES: usize = 5;

/// `p(p−1)/2`.
#[inline]
pub fn max_edges(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// Lexicographic index of the unordered pair `{i, j}` among all pairs of `p` nodes.
#[inline]
pub fn pair_index(p: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    debug_assert!(j < p && i != j);
    i * (2 * p - i - 1) / 2 + (j - i - 1)
}

/// Inverse of [`pair_index`].
pub fn pair_from_index(p: usize, mut k: usize) -> (usize, usize) {
    for i in 0..p {
        let row = p - i - 1;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
    }
    panic!("pair index out of range for p = {p}");
}

/// Undirected simple graph on nodes `0..p`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    p: usize,
    bits: Vec<u64>,
    num_edges: usize,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("p", &self.p)
            .field("edges", &self.edges().collect::<Vec<_>>())
            .finish()
    }
}

impl Graph {
    pub fn empty(p: usize) -> Self {
        Graph { p, bits: vec![0; max_edges(p).div_ceil(64)], num_edges: 0 }
    }

    pub fn full(p: usize) -> Self {
        let mut g = Self::empty(p);
        for k in 0..max_edges(p) {
            g.set_pair(k, true);
        }
        g
    }

    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(p);
        for &(i, j) in edges {
            if i >= p || j >= p {
                return Err(Error::InvalidIndex { index: i.max(j), order: p });
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop at node {i}")));
            }
            g.set_pair(pair_index(p, i, j), true);
        }
        Ok(g)
    }

    /// Graph whose edge `k` (pair index) is present iff `indicators[k]`.
    pub fn from_indicators(p: usize, indicators: &[bool]) -> Result<Self> {
        if indicators.len() != max_edges(p) {
            return Err(Error::DimensionMismatch { expected: max_edges(p), found: indicators.len() });
        }
        let mut g = Self::empty(p);
        for (k, &on) in indicators.iter().enumerate() {
            if on {
                g.set_pair(k, true);
            }
        }
        Ok(g)
    }

    fn set_pair(&mut self, k: usize, on: bool) {
        let (w, b) = (k / 64, k % 64);
        let was = self.bits[w] >> b & 1 == 1;
        match (was, on) {
            (false, true) => {
                self.bits[w] |= 1 << b;
                self.num_edges += 1;
            }
            (true, false) => {
                self.bits[w] &= !(1 << b);
                self.num_edges -= 1;
            }
            _ => {}
        }
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn max_edges(&self) -> usize {
        max_edges(self.p)
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    #[inline]
    pub fn has_pair(&self, k: usize) -> bool {
        self.bits[k / 64] >> (k % 64) & 1 == 1
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.has_pair(pair_index(self.p, i, j))
    }

    /// Membership in the extended edge set: edges plus the diagonal.
    #[inline]
    pub fn in_extended(&self, i: usize, j: usize) -> bool {
        i == j || self.has_pair(pair_index(self.p, i, j))
    }

    /// Edges as `(i, j)` with `i < j`, lexicographic.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let p = self.p;
        (0..p).flat_map(move |i| ((i + 1)..p).map(move |j| (i, j))).filter(|&(i, j)| self.has_edge(i, j))
    }

    pub fn neighbors(&self, j: usize) -> Vec<usize> {
        (0..self.p).filter(|&i| self.has_edge(i, j)).collect()
    }

    /// Edge indicators in pair-index order.
    pub fn indicators(&self) -> Vec<bool> {
        (0..self.max_edges()).map(|k| self.has_pair(k)).collect()
    }

    /// Packed indicator words (bit `k` of the stream is pair `k`).
    pub fn indicator_words(&self) -> &[u64] {
        &self.bits
    }

    pub fn with_edge_toggled(&self, i: usize, j: usize) -> Graph {
        let mut g = self.clone();
        let k = pair_index(self.p, i, j);
        g.set_pair(k, !self.has_pair(k));
        g
    }

    /// Pair indices present in exactly one of the two graphs.
    pub fn symmetric_difference(&self, other: &Graph) -> Result<Vec<usize>> {
        if self.p != other.p {
            return Err(Error::DimensionMismatch { expected: self.p, found: other.p });
        }
        let mut out = Vec::new();
        for (w, (a, b)) in self.bits.iter().zip(&other.bits).enumerate() {
            let mut x = a ^ b;
            while x != 0 {
                let t = x.trailing_zeros() as usize;
                out.push(w * 64 + t);
                x &= x - 1;
            }
        }
        Ok(out)
    }

    /// Pair index of the `r`-th present (or absent) pair, lexicographic.
    fn nth_pair(&self, r: usize, present: bool) -> usize {
        let mut seen = 0;
        for k in 0..self.max_edges() {
            if self.has_pair(k) == present {
                if seen == r {
                    return k;
                }
                seen += 1;
            }
        }
        unreachable!("rank {r} out of range");
    }

    /// Edge-list text: `p=<n>` header, then one `i j` line per edge, 1-based.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("p={}\n", self.p);
        for (i, j) in self.edges() {
            s.push_str(&format!("{} {}\n", i + 1, j + 1));
        }
        s
    }

    pub fn parse_edge_list(text: &str) -> Result<Graph> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse { row: 1, col: 1, token: String::new() })?;
        let p: usize = header
            .strip_prefix("p=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse { row: hline, col: 1, token: header.to_string() })?;
        let mut edges = Vec::new();
        for (n, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(Error::Parse { row: n, col: 1, token: line.to_string() });
            }
            let mut ends = [0usize; 2];
            for (c, t) in toks.iter().enumerate() {
                ends[c] = t
                    .parse::<usize>()
                    .ok()
                    .filter(|&v| v >= 1 && v <= p)
                    .ok_or_else(|| Error::Parse { row: n, col: c + 1, token: t.to_string() })?
                    - 1;
            }
            edges.push((ends[0], ends[1]));
        }
        Graph::from_edges(p, &edges)
    }
}

/// Prior on graphs. All four variants are exchangeable: the mass of a graph
/// depends on its edge count only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GraphPrior {
    /// Every graph equally likely.
    Uniform,
    /// Uniform on the edge count, then uniform among graphs of that size.
    DoubleUniform,
    /// `π(|E|) ∝ θ^|E|` on the count, uniform within a size.
    TruncatedGeometric { theta: f64 },
    /// Independent edges with inclusion probability `ρ`.
    Bernoulli { rho: f64 },
}

impl GraphPrior {
    pub fn truncated_geometric(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidParameter(format!("theta must lie in (0, 1), got {theta}")));
        }
        Ok(GraphPrior::TruncatedGeometric { theta })
    }

    pub fn bernoulli(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidParameter(format!("rho must lie in (0, 1), got {rho}")));
        }
        Ok(GraphPrior::Bernoulli { rho })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GraphPrior::TruncatedGeometric { theta } => Self::truncated_geometric(theta).map(|_| ()),
            GraphPrior::Bernoulli { rho } => Self::bernoulli(rho).map(|_| ()),
            _ => Ok(()),
        }
    }

    /// Normalized log mass of any single graph with `k` edges out of `e_max`.
    pub fn log_prior_count(&self, e_max: usize, k: usize) -> f64 {
        let (e, kf) = (e_max as f64, k as f64);
        match *self {
            GraphPrior::Uniform => -e * std::f64::consts::LN_2,
            GraphPrior::DoubleUniform => -(e + 1.0).ln() - ln_binomial(e_max as u64, k as u64),
            GraphPrior::TruncatedGeometric { theta } => {
                kf * theta.ln() - log_geometric_sum(theta, e_max) - ln_binomial(e_max as u64, k as u64)
            }
            GraphPrior::Bernoulli { rho } => kf * rho.ln() + (e - kf) * (-rho).ln_1p(),
        }
    }

    pub fn log_prior(&self, g: &Graph) -> f64 {
        self.log_prior_count(g.max_edges(), g.num_edges())
    }

    /// `log π(new) − log π(old)` without the normalizing constants.
    pub fn log_prior_ratio(&self, new: &Graph, old: &Graph) -> Result<f64> {
        if new.p() != old.p() {
            return Err(Error::DimensionMismatch { expected: old.p(), found: new.p() });
        }
        let e_max = new.max_edges();
        let (kn, ko) = (new.num_edges(), old.num_edges());
        if kn == ko {
            return Ok(0.0);
        }
        let dk = kn as f64 - ko as f64;
        Ok(match *self {
            GraphPrior::Uniform => 0.0,
            GraphPrior::DoubleUniform => log_binomial_ratio(e_max, ko, kn),
            GraphPrior::TruncatedGeometric { theta } => dk * theta.ln() + log_binomial_ratio(e_max, ko, kn),
            GraphPrior::Bernoulli { rho } => dk * (rho.ln() - (-rho).ln_1p()),
        })
    }

    /// Exact pmf of the edge count, `k = 0..=e_max`.
    pub fn count_pmf(&self, e_max: usize) -> Vec<f64> {
        (0..=e_max)
            .map(|k| (self.log_prior_count(e_max, k) + ln_binomial(e_max as u64, k as u64)).exp())
            .collect()
    }

    /// Prior mean of the edge count.
    pub fn expected_edges(&self, e_max: usize) -> f64 {
        let e = e_max as f64;
        match *self {
            GraphPrior::Uniform | GraphPrior::DoubleUniform => e / 2.0,
            GraphPrior::TruncatedGeometric { theta } => truncated_geometric_mean(theta, e_max),
            GraphPrior::Bernoulli { rho } => rho * e,
        }
    }

    /// Prior inclusion probability of any one edge.
    pub fn edge_marginal(&self, e_max: usize) -> f64 {
        if e_max == 0 {
            0.0
        } else {
            self.expected_edges(e_max) / e_max as f64
        }
    }
}

/// `ln C(e, old) − ln C(e, new)`, exact product form when the counts are close.
fn log_binomial_ratio(e_max: usize, old: usize, new: usize) -> f64 {
    if old.abs_diff(new) <= 8 {
        // C(e,k+1)/C(e,k) = (e−k)/(k+1)
        let mut acc = 0.0;
        if new > old {
            for k in old..new {
                acc -= ((e_max - k) as f64).ln() - ((k + 1) as f64).ln();
            }
        } else {
            for k in new..old {
                acc += ((e_max - k) as f64).ln() - ((k + 1) as f64).ln();
            }
        }
        acc
    } else {
        ln_binomial(e_max as u64, old as u64) - ln_binomial(e_max as u64, new as u64)
    }
}

/// `ln Σ_{k=0}^{e_max} θ^k`.
fn log_geometric_sum(theta: f64, e_max: usize) -> f64 {
    let lt = theta.ln();
    (-(((e_max + 1) as f64) * lt).exp_m1()).ln() - (-lt.exp_m1()).ln()
}

/// Mean of the edge count under the truncated geometric prior.
pub fn truncated_geometric_mean(theta: f64, e_max: usize) -> f64 {
    let n1 = (e_max + 1) as f64;
    let tail = (n1 * theta.ln()).exp();
    theta / (1.0 - theta) - n1 * tail / (1.0 - tail)
}

/// Solves `E[|E|](θ) = target` for the truncated geometric prior by bisection.
/// The map is increasing from 0 (θ→0) to `e_max/2` (θ→1).
pub fn theta_for_expected_edges(target: f64, e_max: usize) -> Result<f64> {
    let upper = e_max as f64 / 2.0;
    if !(target > 0.0 && target < upper) {
        return Err(Error::InvalidParameter(format!(
            "expected edge count must lie in (0, {upper}), got {target}"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if truncated_geometric_mean(mid, e_max) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A proposed single-edge change.
#[derive(Clone, Debug)]
pub struct GraphProposal {
    pub graph: Graph,
    pub edge: (usize, usize),
    pub added: bool,
    /// `log q(G*|G)`
    pub log_q_fwd: f64,
    /// `log q(G|G*)`
    pub log_q_rev: f64,
}

/// `log q` of toggling one specific edge from a graph with `k` edges.
fn log_q_move(k: usize, e_max: usize, add: bool) -> f64 {
    if add {
        let choice: f64 = if k == 0 { 1.0 } else { 0.5 };
        choice.ln() - ((e_max - k) as f64).ln()
    } else {
        let choice: f64 = if k == e_max { 1.0 } else { 0.5 };
        choice.ln() - (k as f64).ln()
    }
}

/// Adds or removes one edge: add with probability one from the empty graph,
/// remove with probability one from the full graph, otherwise a fair coin;
/// the edge is uniform among the eligible pairs.
pub fn propose_graph<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Result<GraphProposal> {
    let e_max = g.max_edges();
    if e_max == 0 {
        return Err(Error::InvalidParameter("graph proposal needs at least two nodes".into()));
    }
    let k = g.num_edges();
    let add = if k == 0 {
        true
    } else if k == e_max {
        false
    } else {
        rng.random_bool(0.5)
    };
    let pool = if add { e_max - k } else { k };
    let r = rng.random_range(0..pool);
    let pair = g.nth_pair(r, !add);
    let (i, j) = pair_from_index(g.p(), pair);
    let graph = g.with_edge_toggled(i, j);
    let k_new = graph.num_edges();
    Ok(GraphProposal {
        graph,
        edge: (i, j),
        added: add,
        log_q_fwd: log_q_move(k, e_max, add),
        log_q_rev: log_q_move(k_new, e_max, !add),
    })
}

/// `log q(to | from)` for graphs differing in exactly one edge.
pub fn proposal_log_prob(from: &Graph, to: &Graph) -> Result<f64> {
    let diff = from.symmetric_difference(to)?;
    if diff.len() != 1 {
        return Err(Error::NotNeighborGraphs);
    }
    let add = to.has_pair(diff[0]);
    Ok(log_q_move(from.num_edges(), from.max_edges(), add))
}

/// Every graph on `p ≤ 5` nodes, in order of its indicator bitmask.
pub fn enumerate_graphs(p: usize) -> Result<Vec<Graph>> {
    if p > MAX_ENUMERATION_NODES {
        return Err(Error::TooLarge { what: "node count for enumeration", value: p, limit: MAX_ENUMERATION_NODES });
    }
    let e_max = max_edges(p);
    Ok((0u64..(1u64 << e_max))
        .map(|mask| {
            let mut g = Graph::empty(p);
            for k in 0..e_max {
                if mask >> k & 1 == 1 {
                    g.set_pair(k, true);
                }
            }
            g
        })
        .collect())
}
