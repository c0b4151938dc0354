//! Projected Glauber dynamics.
//!
//! The chain lives on projected states `y` (one block index per variable).
//! Each step picks a variable uniformly, explores the component of unsatisfied
//! projected constraints around it, and redraws its block by rejection sampling
//! inside that component. After `T` steps the final projected state is lifted
//! back to a full satisfying assignment, again by per-component rejection.


use rand::Rng;
use serde::Serialize;

use crate::csp::{Assignment, AtomicCsp};
use crate::error::ProjectionError;
use crate::projection::ProjectionScheme;

/// Schedule and budgets of one sampler run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub eps: f64,
    pub eta: f64,
    pub kappa: f64,
    pub c_t: f64,
    pub n: usize,
    /// Max constraint degree, floored at 1.
    pub max_degree: usize,
    /// Chain length `ceil(C_T κ n ln(nΔ/ε))`.
    pub steps: u64,
    /// Rejection budget `ceil(10 (κn/ε)^η ln(nκ/ε))`.
    pub rounds: u64,
    /// Component threshold `20 Δ ln(nκ/ε)`, compared strictly.
    pub theta_comp: f64,
}

fn ceil_count(x: f64) -> u64 {
    if x.is_nan() || x <= 0.0 {
        0
    } else if x >= u64::MAX as f64 {
        u64::MAX
    } else {
        x.ceil() as u64
    }
}

impl SamplerConfig {
    pub fn from_params(n: usize, max_degree: usize, kappa: f64, eps: f64, eta: f64, c_t: f64) -> Self {
        let delta = max_degree.max(1);
        let nf = n as f64;
        let log_nke = (nf * kappa / eps).ln();
        let steps = ceil_count(c_t * kappa * nf * (nf * delta as f64 / eps).ln());
        let rounds = ceil_count(10.0 * (kappa * nf / eps).powf(eta) * log_nke);
        let theta_comp = 20.0 * delta as f64 * log_nke;
        Self {
            eps,
            eta,
            kappa,
            c_t,
            n,
            max_degree: delta,
            steps,
            rounds,
            theta_comp,
        }
    }

    /// Configuration for `csp` under `scheme`, taking η and κ from the scheme.
    pub fn new(csp: &AtomicCsp, scheme: &ProjectionScheme, eps: f64, c_t: f64) -> Self {
        Self::from_params(
            csp.num_vars(),
            csp.degree_stats().max_degree,
            scheme.kappa(),
            eps,
            scheme.eta(),
            c_t,
        )
    }

    pub fn with_steps(mut self, steps: u64) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_rounds(mut self, rounds: u64) -> Self {
        self.rounds = rounds;
        self
    }

    pub fn with_theta(mut self, theta_comp: f64) -> Self {
        self.theta_comp = theta_comp;
        self
    }
}

/// The instance seen through a projection: per-constraint forbidden blocks.
pub struct ProjectedCsp<'a> {
    csp: &'a AtomicCsp,
    scheme: &'a ProjectionScheme,
    forbidden: Vec<Vec<u32>>,
}

impl<'a> ProjectedCsp<'a> {
    pub fn new(csp: &'a AtomicCsp, scheme: &'a ProjectionScheme) -> Result<Self, ProjectionError> {
        scheme.check_matches(csp)?;
        let forbidden = (0..csp.num_constraints())
            .map(|cid| scheme.projected_forbidden(csp, cid))
            .collect();
        Ok(Self { csp, scheme, forbidden })
    }

    pub fn csp(&self) -> &'a AtomicCsp {
        self.csp
    }

    pub fn scheme(&self) -> &'a ProjectionScheme {
        self.scheme
    }

    /// Projected constraints violated by a (possibly partial) projected state;
    /// a constraint counts as violated when every assigned variable sits at
    /// its forbidden block.
    pub fn violated_by_partial(&self, y: &[Option<u32>]) -> Vec<usize> {
        (0..self.forbidden.len())
            .filter(|&cid| {
                self.csp
                    .constraint(cid)
                    .vars()
                    .iter()
                    .zip(&self.forbidden[cid])
                    .all(|(&v, &f)| y[v].is_none_or(|val| val == f))
            })
            .collect()
    }

    /// Uniform projected state.
    pub fn random_state<R: Rng + ?Sized>(&self, rng: &mut R) -> ProjectedState {
        let y = (0..self.csp.num_vars())
            .map(|v| rng.random_range(0..self.scheme.q_size(v)))
            .collect();
        ProjectedState::new(self, y)
    }
}

/// Set of small integers with O(1) insert, remove, and membership.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IndexedSet {
    pos: Vec<u32>,
    items: Vec<usize>,
}

const ABSENT: u32 = u32::MAX;

impl IndexedSet {
    pub fn with_universe(n: usize) -> Self {
        Self {
            pos: vec![ABSENT; n],
            items: Vec::new(),
        }
    }

    pub fn contains(&self, x: usize) -> bool {
        self.pos[x] != ABSENT
    }

    pub fn insert(&mut self, x: usize) {
        if self.pos[x] == ABSENT {
            self.pos[x] = self.items.len() as u32;
            self.items.push(x);
        }
    }

    pub fn remove(&mut self, x: usize) {
        let p = self.pos[x];
        if p != ABSENT {
            let last = *self.items.last().expect("nonempty");
            self.items.swap_remove(p as usize);
            if last != x {
                self.pos[last] = p;
            }
            self.pos[x] = ABSENT;
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }
}

/// Projected state with incremental bookkeeping of unsatisfied constraints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProjectedState {
    y: Vec<u32>,
    /// Per constraint, the number of its variables at their forbidden block.
    matched: Vec<u32>,
    unsat: IndexedSet,
}

impl ProjectedState {
    pub fn new(pcsp: &ProjectedCsp<'_>, y: Vec<u32>) -> Self {
        assert_eq!(y.len(), pcsp.csp.num_vars(), "projected state length");
        let m = pcsp.csp.num_constraints();
        let mut matched = vec![0u32; m];
        let mut unsat = IndexedSet::with_universe(m);
        for (cid, forb) in pcsp.forbidden.iter().enumerate() {
            let vars = pcsp.csp.constraint(cid).vars();
            matched[cid] = vars.iter().zip(forb).filter(|&(&v, &f)| y[v] == f).count() as u32;
            if matched[cid] as usize == vars.len() {
                unsat.insert(cid);
            }
        }
        Self { y, matched, unsat }
    }

    pub fn y(&self) -> &[u32] {
        &self.y
    }

    pub fn into_y(self) -> Vec<u32> {
        self.y
    }

    /// Ids of projected constraints violated by `y`, in no particular order.
    pub fn unsat(&self) -> &[usize] {
        self.unsat.items()
    }

    /// Sets `y[v] = value`, updating only constraints incident to `v`.
    pub fn set(&mut self, pcsp: &ProjectedCsp<'_>, v: usize, value: u32) {
        let old = self.y[v];
        if old == value {
            return;
        }
        self.y[v] = value;
        for &(cid, pos) in pcsp.csp.incident(v) {
            let f = pcsp.forbidden[cid][pos];
            let arity = pcsp.forbidden[cid].len() as u32;
            if old == f {
                if self.matched[cid] == arity {
                    self.unsat.remove(cid);
                }
                self.matched[cid] -= 1;
            } else if value == f {
                self.matched[cid] += 1;
                if self.matched[cid] == arity {
                    self.unsat.insert(cid);
                }
            }
        }
    }

    /// Whether the bookkeeping matches a from-scratch recomputation.
    pub fn is_consistent(&self, pcsp: &ProjectedCsp<'_>) -> bool {
        let fresh = Self::new(pcsp, self.y.clone());
        let mut a = fresh.unsat.items().to_vec();
        let mut b = self.unsat.items().to_vec();
        a.sort_unstable();
        b.sort_unstable();
        let partial: Vec<Option<u32>> = self.y.iter().map(|&x| Some(x)).collect();
        fresh.matched == self.matched && a == b && a == pcsp.violated_by_partial(&partial)
    }

    /// Treats `v` as matching every constraint it is in, i.e. unassigned.
    /// Undone by [`Self::restore`].
    fn release(&mut self, pcsp: &ProjectedCsp<'_>, v: usize) {
        for &(cid, pos) in pcsp.csp.incident(v) {
            if self.y[v] != pcsp.forbidden[cid][pos] {
                self.matched[cid] += 1;
            }
        }
    }

    fn restore(&mut self, pcsp: &ProjectedCsp<'_>, v: usize) {
        for &(cid, pos) in pcsp.csp.incident(v) {
            if self.y[v] != pcsp.forbidden[cid][pos] {
                self.matched[cid] -= 1;
            }
        }
    }

    #[inline]
    fn is_unsat(&self, pcsp: &ProjectedCsp<'_>, cid: usize) -> bool {
        self.matched[cid] as usize == pcsp.forbidden[cid].len()
    }
}

/// Reusable buffers for exploration and rejection rounds.
pub struct Scratch {
    var_stamp: Vec<u64>,
    con_stamp: Vec<u64>,
    epoch: u64,
    vars: Vec<usize>,
    cons: Vec<usize>,
    x: Vec<u32>,
}

impl Scratch {
    pub fn new(csp: &AtomicCsp) -> Self {
        Self {
            var_stamp: vec![0; csp.num_vars()],
            con_stamp: vec![0; csp.num_constraints()],
            epoch: 0,
            vars: Vec::new(),
            cons: Vec::new(),
            x: vec![0; csp.num_vars()],
        }
    }
}

/// A connected component of the hypergraph of unsatisfied constraints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComponentView {
    pub vars: Vec<usize>,
    pub constraints: Vec<usize>,
    /// Exploration stopped because the constraint count passed the threshold.
    pub exceeded: bool,
}

/// BFS from `start` through constraints that are unsatisfied in `state`.
/// Fills `scratch.vars` and `scratch.cons`; returns true on early exit once
/// more than `limit` constraints were found.
fn explore_into(pcsp: &ProjectedCsp<'_>, state: &ProjectedState, start: usize, limit: f64, scratch: &mut Scratch) -> bool {
    scratch.epoch += 1;
    let epoch = scratch.epoch;
    scratch.vars.clear();
    scratch.cons.clear();
    scratch.vars.push(start);
    scratch.var_stamp[start] = epoch;
    let mut i = 0;
    while i < scratch.vars.len() {
        let u = scratch.vars[i];
        i += 1;
        for &(cid, _) in pcsp.csp.incident(u) {
            if scratch.con_stamp[cid] == epoch || !state.is_unsat(pcsp, cid) {
                continue;
            }
            scratch.con_stamp[cid] = epoch;
            scratch.cons.push(cid);
            if scratch.cons.len() as f64 > limit {
                return true;
            }
            for &w in pcsp.csp.constraint(cid).vars() {
                if scratch.var_stamp[w] != epoch {
                    scratch.var_stamp[w] = epoch;
                    scratch.vars.push(w);
                }
            }
        }
    }
    false
}

/// The component of `v` in the hypergraph of constraints unsatisfied by `y`
/// with `v` unassigned; with `v = None`, every component of the hypergraph of
/// constraints unsatisfied by `y` (variables in no unsatisfied constraint are
/// omitted).
pub fn explore_component(
    pcsp: &ProjectedCsp<'_>,
    state: &mut ProjectedState,
    v: Option<usize>,
    limit: f64,
) -> Vec<ComponentView> {
    let mut scratch = Scratch::new(pcsp.csp);
    match v {
        Some(v) => {
            state.release(pcsp, v);
            let exceeded = explore_into(pcsp, state, v, limit, &mut scratch);
            state.restore(pcsp, v);
            vec![ComponentView {
                vars: scratch.vars.clone(),
                constraints: scratch.cons.clone(),
                exceeded,
            }]
        }
        None => {
            let mut covered = vec![false; pcsp.csp.num_vars()];
            let mut out = Vec::new();
            let mut roots: Vec<usize> = state
                .unsat()
                .iter()
                .map(|&cid| pcsp.csp.constraint(cid).vars()[0])
                .collect();
            roots.sort_unstable();
            for r in roots {
                if covered[r] {
                    continue;
                }
                let exceeded = explore_into(pcsp, state, r, limit, &mut scratch);
                for &u in &scratch.vars {
                    covered[u] = true;
                }
                out.push(ComponentView {
                    vars: scratch.vars.clone(),
                    constraints: scratch.cons.clone(),
                    exceeded,
                });
            }
            out
        }
    }
}

/// Outcome flag of one single-site update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StepFlag {
    Accepted,
    /// Component too large; the value was drawn uniformly.
    S1,
    /// Rejection budget exhausted; the value was drawn uniformly.
    S2,
}

/// Redraws the block of `v` from its conditional law given the other
/// variables. Does not modify `state`. Returns the new block, the flag and
/// the number of constraints in the explored component.
pub fn sample_step<R: Rng + ?Sized>(
    pcsp: &ProjectedCsp<'_>,
    state: &mut ProjectedState,
    v: usize,
    cfg: &SamplerConfig,
    scratch: &mut Scratch,
    rng: &mut R,
) -> (u32, StepFlag, usize) {
    let scheme = pcsp.scheme;
    if scheme.q_size(v) == 1 {
        // the only block; the update is a no-op whatever the rejection loop does
        return (0, StepFlag::Accepted, 0);
    }
    state.release(pcsp, v);
    let exceeded = explore_into(pcsp, state, v, cfg.theta_comp, scratch);
    state.restore(pcsp, v);
    let comp_size = scratch.cons.len();
    let q = scheme.q_size(v);
    if exceeded {
        return (rng.random_range(0..q), StepFlag::S1, comp_size);
    }
    let alphabet = pcsp.csp.alphabet(v);
    let Scratch { vars, cons, x, .. } = scratch;
    for _ in 0..cfg.rounds {
        for &u in vars.iter() {
            x[u] = if u == v {
                rng.random_range(0..alphabet)
            } else {
                scheme.sample_preimage(u, state.y[u], rng)
            };
        }
        if cons.iter().all(|&cid| !pcsp.csp.constraint(cid).violated_by(x)) {
            return (scheme.project_value(v, x[v]), StepFlag::Accepted, comp_size);
        }
    }
    (rng.random_range(0..q), StepFlag::S2, comp_size)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunDiagnostics {
    pub steps: u64,
    pub s1: u64,
    pub s2: u64,
    /// `component_sizes[c]` is the number of steps whose explored component had `c` constraints.
    pub component_sizes: Vec<u64>,
}

impl RunDiagnostics {
    fn merge(&mut self, other: &RunDiagnostics) {
        self.steps += other.steps;
        self.s1 += other.s1;
        self.s2 += other.s2;
        if self.component_sizes.len() < other.component_sizes.len() {
            self.component_sizes.resize(other.component_sizes.len(), 0);
        }
        for (mine, &theirs) in self.component_sizes.iter_mut().zip(&other.component_sizes) {
            *mine += theirs;
        }
    }
}

const CONSISTENCY_INTERVAL: u64 = 1000;

/// Runs `cfg.steps` Glauber updates on `state`.
pub fn glauber_run<R: Rng + ?Sized>(
    pcsp: &ProjectedCsp<'_>,
    state: &mut ProjectedState,
    cfg: &SamplerConfig,
    scratch: &mut Scratch,
    rng: &mut R,
) -> RunDiagnostics {
    let n = pcsp.csp.num_vars();
    let mut diag = RunDiagnostics::default();
    if n == 0 {
        return diag;
    }
    for t in 0..cfg.steps {
        let v = rng.random_range(0..n);
        let (value, flag, size) = sample_step(pcsp, state, v, cfg, scratch, rng);
        state.set(pcsp, v, value);
        diag.steps += 1;
        match flag {
            StepFlag::Accepted => {}
            StepFlag::S1 => diag.s1 += 1,
            StepFlag::S2 => diag.s2 += 1,
        }
        if size >= diag.component_sizes.len() {
            diag.component_sizes.resize(size + 1, 0);
        }
        diag.component_sizes[size] += 1;
        if cfg!(debug_assertions) && (t + 1) % CONSISTENCY_INTERVAL == 0 {
            debug_assert!(state.is_consistent(pcsp), "bookkeeping drifted at step {}", t + 1);
        }
    }
    diag
}

/// Why lifting a projected state failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LiftError {
    /// A component had more constraints than the threshold.
    I1,
    /// A component exhausted its rejection budget.
    I2,
}

impl std::fmt::Display for LiftError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LiftError::I1 => "I1",
            LiftError::I2 => "I2",
        })
    }
}

impl std::error::Error for LiftError {}

/// Lifts a projected state to a full satisfying assignment `x` with
/// `project(x) = y`, by independent rejection sampling on each component of
/// unsatisfied constraints.
pub fn inv_sample<R: Rng + ?Sized>(
    pcsp: &ProjectedCsp<'_>,
    state: &ProjectedState,
    cfg: &SamplerConfig,
    scratch: &mut Scratch,
    rng: &mut R,
) -> Result<Assignment, LiftError> {
    let n = pcsp.csp.num_vars();
    let scheme = pcsp.scheme;
    let mut components: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut covered = vec![false; n];
    let mut roots: Vec<usize> = state
        .unsat()
        .iter()
        .map(|&cid| pcsp.csp.constraint(cid).vars()[0])
        .collect();
    roots.sort_unstable();
    for r in roots {
        if covered[r] {
            continue;
        }
        if explore_into(pcsp, state, r, cfg.theta_comp, scratch) {
            return Err(LiftError::I1);
        }
        for &u in &scratch.vars {
            covered[u] = true;
        }
        components.push((scratch.vars.clone(), scratch.cons.clone()));
    }

    let mut x = vec![0u32; n];
    for (v, xv) in x.iter_mut().enumerate() {
        if !covered[v] {
            *xv = scheme.sample_preimage(v, state.y[v], rng);
        }
    }
    for (vars, cons) in &components {
        let mut accepted = false;
        for _ in 0..cfg.rounds {
            for &u in vars {
                x[u] = scheme.sample_preimage(u, state.y[u], rng);
            }
            if cons.iter().all(|&cid| !pcsp.csp.constraint(cid).violated_by(&x)) {
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(LiftError::I2);
        }
    }
    debug_assert!(pcsp.csp.is_satisfied(&x), "lifted assignment violates a constraint");
    debug_assert_eq!(scheme.project(&x), state.y);
    Ok(x)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SampleDiagnostics {
    pub steps: u64,
    pub rounds: u64,
    pub theta_comp: f64,
    pub run: RunDiagnostics,
    pub lift_error: Option<LiftError>,
}

impl SampleDiagnostics {
    /// Subroutine calls that failed, over all subroutine calls (steps plus one lift).
    pub fn failures(&self) -> u64 {
        self.run.s1 + self.run.s2 + u64::from(self.lift_error.is_some())
    }

    pub fn merge(&mut self, other: &SampleDiagnostics) {
        self.steps = other.steps;
        self.rounds = other.rounds;
        self.theta_comp = other.theta_comp;
        self.run.merge(&other.run);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleRun {
    pub result: Result<Assignment, LiftError>,
    pub diagnostics: SampleDiagnostics,
}

/// A sampler bound to one instance and scheme, reusing its buffers across draws.
pub struct Sampler<'a> {
    pcsp: ProjectedCsp<'a>,
    cfg: SamplerConfig,
    scratch: Scratch,
}

impl<'a> Sampler<'a> {
    pub fn new(csp: &'a AtomicCsp, scheme: &'a ProjectionScheme, cfg: SamplerConfig) -> Result<Self, ProjectionError> {
        Ok(Self {
            pcsp: ProjectedCsp::new(csp, scheme)?,
            cfg,
            scratch: Scratch::new(csp),
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn projected(&self) -> &ProjectedCsp<'a> {
        &self.pcsp
    }

    /// One draw: uniform initial projected state, `T` Glauber steps, lift.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> SampleRun {
        let mut state = self.pcsp.random_state(rng);
        let run = glauber_run(&self.pcsp, &mut state, &self.cfg, &mut self.scratch, rng);
        let result = inv_sample(&self.pcsp, &state, &self.cfg, &mut self.scratch, rng);
        SampleRun {
            diagnostics: SampleDiagnostics {
                steps: self.cfg.steps,
                rounds: self.cfg.rounds,
                theta_comp: self.cfg.theta_comp,
                run,
                lift_error: result.as_ref().err().copied(),
            },
            result,
        }
    }
}

/// Draws one approximately uniform satisfying assignment.
pub fn main_sample<R: Rng + ?Sized>(
    csp: &AtomicCsp,
    scheme: &ProjectionScheme,
    cfg: SamplerConfig,
    rng: &mut R,
) -> Result<SampleRun, ProjectionError> {
    Ok(Sampler::new(csp, scheme, cfg)?.sample(rng))
}
