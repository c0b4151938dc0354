//! Brute-force ground truth: exact solution sets, exact projected and
//! conditional distributions, empirical total variation, and 2-tree
//! combinatorics on small graphs.
//!
//! Distributions keep integer weights over a common total, so every
//! probability is an exact rational `weight / total`.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::csp::{Assignment, AtomicCsp};
use crate::error::OracleError;
use crate::projection::{compute_b, ProjectionScheme};

/// Largest state space the enumerators will walk.
pub const ENUMERATION_LIMIT: u128 = 1 << 24;

/// Largest graph accepted by the exhaustive 2-tree counter.
pub const TWO_TREE_LIMIT: usize = 20;

/// Depth-first walk over `domains[0] x domains[1] x ...` in lexicographic
/// order, pruning as soon as a constraint is fully assigned and violated.
/// Calls `visit` on every satisfying point.
fn walk_satisfying(csp: &AtomicCsp, domains: &[Vec<u32>], mut visit: impl FnMut(&[u32])) {
    let n = csp.num_vars();
    if domains.iter().any(Vec::is_empty) {
        return;
    }
    // constraints checked once their largest variable is assigned
    let mut closing: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (cid, c) in csp.constraints().iter().enumerate() {
        let last = *c.vars().iter().max().expect("constraints are nonempty");
        closing[last].push(cid);
    }
    let ok_at = |x: &[u32], v: usize| closing[v].iter().all(|&cid| !csp.constraint(cid).violated_by(x));

    if n == 0 {
        visit(&[]);
        return;
    }
    let mut x = vec![0u32; n];
    let mut idx = vec![0usize; n];
    let mut depth = 0usize;
    x[0] = domains[0][0];
    loop {
        if ok_at(&x, depth) {
            if depth + 1 == n {
                visit(&x);
            } else {
                depth += 1;
                idx[depth] = 0;
                x[depth] = domains[depth][0];
                continue;
            }
        }
        // advance to the next sibling, backtracking as needed
        loop {
            idx[depth] += 1;
            if idx[depth] < domains[depth].len() {
                x[depth] = domains[depth][idx[depth]];
                break;
            }
            if depth == 0 {
                return;
            }
            depth -= 1;
        }
    }
}

fn guard(size: u128) -> Result<(), OracleError> {
    if size > ENUMERATION_LIMIT {
        Err(OracleError::TooLarge {
            size,
            limit: ENUMERATION_LIMIT,
        })
    } else {
        Ok(())
    }
}

fn full_domains(csp: &AtomicCsp) -> Vec<Vec<u32>> {
    csp.alphabets().iter().map(|&a| (0..a).collect()).collect()
}

/// All satisfying assignments in lexicographic order.
pub fn enumerate_satisfying(csp: &AtomicCsp) -> Result<Vec<Assignment>, OracleError> {
    guard(csp.state_space())?;
    let mut out = Vec::new();
    walk_satisfying(csp, &full_domains(csp), |x| out.push(x.to_vec()));
    Ok(out)
}

/// Number of satisfying assignments.
pub fn count_satisfying(csp: &AtomicCsp) -> Result<u64, OracleError> {
    guard(csp.state_space())?;
    let mut count = 0u64;
    walk_satisfying(csp, &full_domains(csp), |_| count += 1);
    Ok(count)
}

/// A finite distribution with exact rational probabilities `weight / total`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExactDistribution {
    weights: BTreeMap<Assignment, u64>,
    total: u64,
}

impl ExactDistribution {
    fn from_weights(weights: BTreeMap<Assignment, u64>) -> Result<Self, OracleError> {
        let total: u64 = weights.values().sum();
        if total == 0 {
            return Err(OracleError::ZeroProbability);
        }
        Ok(Self { weights, total })
    }

    /// Uniform distribution over the given points (duplicates add weight).
    pub fn uniform(points: impl IntoIterator<Item = Assignment>) -> Result<Self, OracleError> {
        let mut weights = BTreeMap::new();
        for p in points {
            *weights.entry(p).or_insert(0) += 1;
        }
        Self::from_weights(weights)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn weight(&self, x: &[u32]) -> u64 {
        self.weights.get(x).copied().unwrap_or(0)
    }

    pub fn prob(&self, x: &[u32]) -> f64 {
        self.weight(x) as f64 / self.total as f64
    }

    pub fn support_len(&self) -> usize {
        self.weights.len()
    }

    /// `(point, probability)` in lexicographic order.
    pub fn support(&self) -> impl Iterator<Item = (&Assignment, f64)> + '_ {
        self.weights.iter().map(|(x, &w)| (x, w as f64 / self.total as f64))
    }

    /// Distribution of coordinate `v`, as weights indexed by value.
    pub fn marginal_weights(&self, v: usize, size: u32) -> Vec<u64> {
        let mut out = vec![0u64; size as usize];
        for (x, &w) in &self.weights {
            out[x[v] as usize] += w;
        }
        out
    }
}

/// Uniform distribution over satisfying assignments.
pub fn exact_mu(csp: &AtomicCsp) -> Result<ExactDistribution, OracleError> {
    ExactDistribution::uniform(enumerate_satisfying(csp)?)
}

/// Pushforward of the uniform satisfying distribution through the projection.
pub fn exact_mu_pi(csp: &AtomicCsp, scheme: &ProjectionScheme) -> Result<ExactDistribution, OracleError> {
    check_scheme(csp, scheme)?;
    guard(csp.state_space())?;
    let mut weights = BTreeMap::new();
    walk_satisfying(csp, &full_domains(csp), |x| {
        *weights.entry(scheme.project(x)).or_insert(0u64) += 1;
    });
    ExactDistribution::from_weights(weights)
}

/// Uniform distribution over satisfying `x` with `project(x) = y`.
pub fn exact_lift(csp: &AtomicCsp, scheme: &ProjectionScheme, y: &[u32]) -> Result<ExactDistribution, OracleError> {
    check_scheme(csp, scheme)?;
    if y.len() != csp.num_vars() {
        return Err(OracleError::Input(format!("projected state has {} entries, expected {}", y.len(), csp.num_vars())));
    }
    let domains: Vec<Vec<u32>> = y
        .iter()
        .enumerate()
        .map(|(v, &j)| {
            if j >= scheme.q_size(v) {
                return Err(OracleError::Input(format!("block {j} out of range for variable {v}")));
            }
            Ok(scheme.var(v).block(j).to_vec())
        })
        .collect::<Result<_, _>>()?;
    guard(domains.iter().map(|d| d.len() as u128).product())?;
    let mut weights = BTreeMap::new();
    walk_satisfying(csp, &domains, |x| {
        weights.insert(x.to_vec(), 1u64);
    });
    ExactDistribution::from_weights(weights)
}

fn check_scheme(csp: &AtomicCsp, scheme: &ProjectionScheme) -> Result<(), OracleError> {
    scheme.check_matches(csp).map_err(|e| OracleError::Input(e.to_string()))
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectedConditional {
    /// Number of satisfying assignments behind each projected value of `v`.
    pub weights: Vec<u64>,
    pub total: u64,
    /// `(1 - 3b)^-Δ · P[value(v) = j]` per block; `None` when `3b >= 1`.
    pub bound: Option<Vec<f64>>,
    /// Whether every conditional probability sits below its bound.
    pub bound_holds: Option<bool>,
}

impl ProjectedConditional {
    pub fn probs(&self) -> Vec<f64> {
        self.weights.iter().map(|&w| w as f64 / self.total as f64).collect()
    }
}

/// Exact `μ_π[value(v) = · | Z]` where `z` fixes the projected value of every
/// variable other than `v` (the entry for `v` is ignored).
pub fn exact_projected_conditional(
    csp: &AtomicCsp,
    scheme: &ProjectionScheme,
    v: usize,
    z: &[Option<u32>],
) -> Result<ProjectedConditional, OracleError> {
    check_scheme(csp, scheme)?;
    let n = csp.num_vars();
    if z.len() != n || v >= n {
        return Err(OracleError::Input("partial state does not match the instance".into()));
    }
    let mut domains = Vec::with_capacity(n);
    for (u, zu) in z.iter().enumerate() {
        if u == v {
            domains.push((0..csp.alphabet(v)).collect());
            continue;
        }
        let j = zu.ok_or_else(|| OracleError::Input(format!("variable {u} is unassigned")))?;
        if j >= scheme.q_size(u) {
            return Err(OracleError::Input(format!("block {j} out of range for variable {u}")));
        }
        domains.push(scheme.var(u).block(j).to_vec());
    }
    guard(domains.iter().map(|d: &Vec<u32>| d.len() as u128).product())?;
    let part = scheme.var(v);
    let mut weights = vec![0u64; part.num_blocks() as usize];
    walk_satisfying(csp, &domains, |x| weights[part.project(x[v]) as usize] += 1);
    let total: u64 = weights.iter().sum();
    if total == 0 {
        return Err(OracleError::ZeroProbability);
    }

    let b = compute_b(csp, scheme).map_err(|e| OracleError::Input(e.to_string()))?.b;
    let delta = csp.degree_stats().max_degree;
    let (bound, bound_holds) = if 3.0 * b < 1.0 {
        let inflate = (1.0 - 3.0 * b).powi(-(delta as i32));
        let a = part.alphabet() as f64;
        let bound: Vec<f64> = (0..part.num_blocks()).map(|j| inflate * part.block_size(j) as f64 / a).collect();
        let holds = weights
            .iter()
            .zip(&bound)
            .all(|(&w, &bd)| w as f64 / total as f64 <= bd * (1.0 + 1e-12));
        (Some(bound), Some(holds))
    } else {
        (None, None)
    };
    Ok(ProjectedConditional {
        weights,
        total,
        bound,
        bound_holds,
    })
}

/// Total variation between empirical counts and an exact distribution.
/// `errors` counts failed draws; they form an outcome of exact probability 0.
pub fn tv_empirical(counts: &BTreeMap<Assignment, u64>, errors: u64, exact: &ExactDistribution) -> f64 {
    let n = counts.values().sum::<u64>() + errors;
    if n == 0 {
        return 1.0;
    }
    let n = n as f64;
    let mut diff = errors as f64 / n;
    for (x, p) in exact.support() {
        let freq = counts.get(x).copied().unwrap_or(0) as f64 / n;
        diff += (freq - p).abs();
    }
    for (x, &c) in counts {
        if exact.weight(x) == 0 {
            diff += c as f64 / n;
        }
    }
    0.5 * diff
}

/// Total variation between a count vector and a probability vector over the same index set.
pub fn tv_counts(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 1.0;
    }
    0.5 * counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| (c as f64 / n as f64 - p).abs())
        .sum::<f64>()
}

/// Undirected simple graph as adjacency lists.
pub type Graph = Vec<Vec<usize>>;

pub fn max_degree(graph: &Graph) -> usize {
    graph.iter().map(Vec::len).max().unwrap_or(0)
}

/// The dependency graph of a CSP: constraints adjacent when they share a variable.
pub fn dependency_graph(csp: &AtomicCsp) -> Graph {
    (0..csp.num_constraints())
        .map(|c| csp.neighbors(c).into_iter().filter(|&d| d != c).collect())
        .collect()
}

fn all_distances(graph: &Graph) -> Vec<Vec<usize>> {
    let n = graph.len();
    let mut dist = vec![vec![usize::MAX; n]; n];
    for (s, row) in dist.iter_mut().enumerate() {
        row[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &w in &graph[u] {
                if row[w] == usize::MAX {
                    row[w] = row[u] + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    dist
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

fn is_2tree_with(dist: &[Vec<usize>], set: &[usize]) -> bool {
    if set.is_empty() {
        return false;
    }
    for (i, &a) in set.iter().enumerate() {
        for &b in &set[i + 1..] {
            if dist[a][b] < 2 {
                return false;
            }
        }
    }
    let mut uf = UnionFind::new(set.len());
    let mut merges = 0;
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            if dist[set[i]][set[j]] == 2 && uf.union(i, j) {
                merges += 1;
            }
        }
    }
    merges + 1 == set.len()
}

/// Whether `set` is a 2-tree: pairwise at distance at least 2, and connected
/// once pairs at distance exactly 2 are joined.
pub fn is_2tree(graph: &Graph, set: &[usize]) -> bool {
    is_2tree_with(&all_distances(graph), set)
}

/// Number of 2-trees of size `l` containing `root`.
pub fn count_2trees(graph: &Graph, root: usize, l: usize) -> Result<u64, OracleError> {
    let n = graph.len();
    if n > TWO_TREE_LIMIT {
        return Err(OracleError::TooLarge {
            size: n as u128,
            limit: TWO_TREE_LIMIT as u128,
        });
    }
    if root >= n {
        return Err(OracleError::Input(format!("root {root} outside graph of {n} vertices")));
    }
    if l == 0 {
        return Ok(0);
    }
    let dist = all_distances(graph);
    let others: Vec<usize> = (0..n).filter(|&u| u != root).collect();
    let mut count = 0u64;
    let mut set = vec![root];
    fn rec(
        dist: &[Vec<usize>],
        others: &[usize],
        start: usize,
        need: usize,
        set: &mut Vec<usize>,
        count: &mut u64,
    ) {
        if need == 0 {
            if is_2tree_with(dist, set) {
                *count += 1;
            }
            return;
        }
        for i in start..others.len() {
            if others.len() - i < need {
                break;
            }
            set.push(others[i]);
            rec(dist, others, i + 1, need - 1, set, count);
            set.pop();
        }
    }
    rec(&dist, &others, 0, l - 1, &mut set, &mut count);
    Ok(count)
}

/// The bound `(e Δ²)^(l-1) / 2` on the number of 2-trees of size `l` through a vertex.
pub fn two_tree_bound(max_degree: usize, l: usize) -> f64 {
    (std::f64::consts::E * (max_degree as f64).powi(2)).powi(l as i32 - 1) / 2.0
}

/// Greedy 2-tree inside the connected vertex set `subgraph`, starting from `v`:
/// repeatedly add the smallest vertex of `subgraph` that is adjacent to the
/// closed neighborhood of the tree but not to the tree itself.
pub fn greedy_2tree(graph: &Graph, subgraph: &[usize], v: usize) -> Result<Vec<usize>, OracleError> {
    let n = graph.len();
    let mut in_h = vec![false; n];
    for &u in subgraph {
        if u >= n {
            return Err(OracleError::Input(format!("vertex {u} outside graph")));
        }
        in_h[u] = true;
    }
    if !in_h[v] {
        return Err(OracleError::Input(format!("start vertex {v} is not in the subgraph")));
    }
    let mut removed = vec![false; n];
    let mut tree = Vec::new();
    let add = |u: usize, removed: &mut Vec<bool>, tree: &mut Vec<usize>| {
        tree.push(u);
        removed[u] = true;
        for &w in &graph[u] {
            removed[w] = true;
        }
    };
    add(v, &mut removed, &mut tree);
    loop {
        let next = (0..n).find(|&u| in_h[u] && !removed[u] && graph[u].iter().any(|&w| removed[w]));
        match next {
            Some(u) => add(u, &mut removed, &mut tree),
            None => break,
        }
    }
    tree.sort_unstable();
    Ok(tree)
}
