//! Approximate counting by self-reducibility.
//!
//! Variables are pinned one at a time. At each stage the conditional marginal
//! of the pinned value is estimated from samples of the current (partially
//! pinned) instance, and the count is the product of the reciprocals of those
//! marginals. Variables that no surviving constraint mentions contribute their
//! alphabet size exactly.

use rayon::prelude::*;
use serde::Serialize;

use crate::csp::{AtomicConstraint, AtomicCsp};
use crate::dynamics::{SamplerConfig, Sampler};
use crate::error::CountError;
use crate::numeric::NeumaierSum;
use crate::oracle::count_satisfying;
use crate::projection::{check_admissibility, ProjectionScheme};
use crate::rng::chain_rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CountConfig {
    /// Relative error target.
    pub delta: f64,
    /// Per-stage sample constant: `N = ceil(c_N n / δ²)`.
    pub c_n: f64,
    /// Constant in the stage accuracy `ε = θ δ² / (m ln(m/δ))`.
    pub theta: f64,
    /// Chain-length constant passed to the sampler.
    pub c_t: f64,
    /// Abort when more than this fraction of a stage's samples fail.
    pub max_error_rate: f64,
    /// Count inadmissible pinned instances exactly when they are this small.
    pub exact_fallback: Option<u128>,
}

impl CountConfig {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            c_n: 64.0,
            theta: 1.0 / 8.0,
            c_t: 1.0,
            max_error_rate: 0.1,
            exact_fallback: Some(1 << 20),
        }
    }

    /// Stage accuracy for an instance with `m` constraints.
    pub fn stage_eps(&self, m: usize) -> f64 {
        let m = m.max(1) as f64;
        self.theta * self.delta * self.delta / (m * (m / self.delta).ln())
    }

    /// Samples per stage for an instance with `n` variables.
    pub fn stage_samples(&self, n: usize) -> u64 {
        (self.c_n * n as f64 / (self.delta * self.delta)).ceil() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageMethod {
    /// The variable was in no surviving constraint.
    Free,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: usize,
    /// Original variable id.
    pub var: usize,
    pub value: u32,
    pub method: StageMethod,
    /// Estimated probability that `var` takes `value` given the earlier pins.
    pub marginal: f64,
    pub samples: u64,
    pub successes: u64,
    pub errors: u64,
    pub hits: u64,
}

/// Exact count of the instance that remained when sampling stopped.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactTail {
    pub stage: usize,
    pub vars: Vec<usize>,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountEstimate {
    pub estimate: f64,
    /// Natural log of the estimate.
    pub log_estimate: f64,
    pub delta: f64,
    pub eps_stage: f64,
    pub samples_per_stage: u64,
    pub stages: Vec<StageRecord>,
    pub exact_tail: Option<ExactTail>,
}

impl CountEstimate {
    /// Recomputes the log estimate from the stage records.
    pub fn reconstruct_log(&self) -> f64 {
        let mut sum: NeumaierSum = self.stages.iter().map(|s| -s.marginal.ln()).collect();
        if let Some(t) = &self.exact_tail {
            sum.add((t.count as f64).ln());
        }
        sum.total()
    }
}

/// An instance with some variables pinned, remembering original ids.
#[derive(Clone, Debug)]
pub struct Pinned {
    pub csp: AtomicCsp,
    /// Original id of each remaining variable.
    pub original: Vec<usize>,
}

impl Pinned {
    pub fn new(csp: AtomicCsp) -> Self {
        let original = (0..csp.num_vars()).collect();
        Self { csp, original }
    }
}

/// Pins variable `v` (current index) to `value`: constraints forbidding a
/// different value at `v` are dropped, the others lose `v`. Returns `None`
/// when a constraint loses its last variable, i.e. the pin violates it.
pub fn pin(p: &Pinned, v: usize, value: u32) -> Option<Pinned> {
    let n = p.csp.num_vars();
    let remap: Vec<usize> = (0..n).map(|u| if u < v { u } else { u.wrapping_sub(1) }).collect();
    let mut constraints = Vec::with_capacity(p.csp.num_constraints());
    for c in p.csp.constraints() {
        match c.forbidden_at(v) {
            None => constraints.push(
                AtomicConstraint::new(c.vars().iter().map(|&u| remap[u]).collect(), c.forbidden().to_vec())
                    .expect("relabeling keeps a constraint valid"),
            ),
            Some(f) if f != value => {}
            Some(_) => {
                let (vars, forb): (Vec<usize>, Vec<u32>) =
                    c.entries().filter(|&(u, _)| u != v).map(|(u, f)| (remap[u], f)).unzip();
                if vars.is_empty() {
                    return None;
                }
                constraints.push(AtomicConstraint::new(vars, forb).expect("shrinking keeps a constraint valid"));
            }
        }
    }
    let mut alphabets = p.csp.alphabets().to_vec();
    alphabets.remove(v);
    let mut original = p.original.clone();
    original.remove(v);
    Some(Pinned {
        csp: AtomicCsp::new(alphabets, constraints).expect("pinning keeps the instance valid"),
        original,
    })
}

/// Removes variables in no constraint; returns them (original ids and alphabet sizes).
fn drop_free(p: &Pinned) -> (Pinned, Vec<(usize, u32)>) {
    let n = p.csp.num_vars();
    let keep: Vec<usize> = (0..n).filter(|&v| !p.csp.incident(v).is_empty()).collect();
    if keep.len() == n {
        return (p.clone(), Vec::new());
    }
    let free = (0..n)
        .filter(|&v| p.csp.incident(v).is_empty())
        .map(|v| (p.original[v], p.csp.alphabet(v)))
        .collect();
    let mut remap = vec![usize::MAX; n];
    for (i, &v) in keep.iter().enumerate() {
        remap[v] = i;
    }
    let constraints = p
        .csp
        .constraints()
        .iter()
        .map(|c| {
            AtomicConstraint::new(c.vars().iter().map(|&u| remap[u]).collect(), c.forbidden().to_vec())
                .expect("relabeling keeps a constraint valid")
        })
        .collect();
    let alphabets = keep.iter().map(|&v| p.csp.alphabet(v)).collect();
    let pinned = Pinned {
        csp: AtomicCsp::new(alphabets, constraints).expect("dropping free variables keeps the instance valid"),
        original: keep.iter().map(|&v| p.original[v]).collect(),
    };
    (pinned, free)
}

/// Estimates the number of satisfying assignments within a factor `1 + δ`.
///
/// `scheme` covers the original variables; each stage uses its restriction
/// to the surviving variables.
pub fn approx_count(
    csp: &AtomicCsp,
    scheme: &ProjectionScheme,
    cfg: &CountConfig,
    seed: u64,
) -> Result<CountEstimate, CountError> {
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(CountError::Config(format!("delta must lie in (0, 1), got {}", cfg.delta)));
    }
    scheme.check_matches(csp)?;
    let eps_stage = cfg.stage_eps(csp.num_constraints());
    let samples = cfg.stage_samples(csp.num_vars());
    let mut stages = Vec::new();
    let mut exact_tail = None;
    let mut current = Pinned::new(csp.clone());

    loop {
        let (rest, free) = drop_free(&current);
        for (var, size) in free {
            stages.push(StageRecord {
                stage: stages.len(),
                var,
                value: 0,
                method: StageMethod::Free,
                marginal: 1.0 / size as f64,
                samples: 0,
                successes: 0,
                errors: 0,
                hits: 0,
            });
        }
        current = rest;
        if current.csp.num_vars() == 0 {
            break;
        }
        let stage = stages.len();
        let sub_scheme = scheme.restrict(&current.original);

        if let Some(limit) = cfg.exact_fallback {
            if current.csp.state_space() <= limit {
                let report = check_admissibility(&current.csp, &sub_scheme, scheme.eta())?;
                if !report.admissible() {
                    let count = count_satisfying(&current.csp)?;
                    if count == 0 {
                        return Err(CountError::Unsatisfiable { stage });
                    }
                    exact_tail = Some(ExactTail {
                        stage,
                        vars: current.original.clone(),
                        count,
                    });
                    break;
                }
            }
        }

        let sampler_cfg = SamplerConfig::new(&current.csp, &sub_scheme, eps_stage, cfg.c_t);
        let stage_seed = seed ^ (stage as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let v = 0;
        let alphabet = current.csp.alphabet(v);
        let tallies = (0..samples)
            .into_par_iter()
            .map_init(
                || Sampler::new(&current.csp, &sub_scheme, sampler_cfg).expect("restricted scheme matches"),
                |sampler, j| {
                    let mut rng = chain_rng(stage_seed, j);
                    sampler.sample(&mut rng).result.ok().map(|x| x[v])
                },
            )
            .fold(
                || (vec![0u64; alphabet as usize], 0u64),
                |(mut hist, errors), value| {
                    match value {
                        Some(x) => hist[x as usize] += 1,
                        None => return (hist, errors + 1),
                    }
                    (hist, errors)
                },
            )
            .reduce(
                || (vec![0u64; alphabet as usize], 0u64),
                |(mut a, ea), (b, eb)| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    (a, ea + eb)
                },
            );
        let (hist, errors) = tallies;
        if errors as f64 > cfg.max_error_rate * samples as f64 {
            return Err(CountError::ErrorRate {
                stage,
                errors,
                samples,
                limit: 100.0 * cfg.max_error_rate,
            });
        }
        let successes = samples - errors;
        let (value, hits) = hist
            .iter()
            .enumerate()
            .fold((0u32, 0u64), |best, (x, &h)| if h > best.1 { (x as u32, h) } else { best });
        if hits == 0 {
            return Err(CountError::Unsatisfiable { stage });
        }
        stages.push(StageRecord {
            stage,
            var: current.original[v],
            value,
            method: StageMethod::Sampled,
            marginal: hits as f64 / successes as f64,
            samples,
            successes,
            errors,
            hits,
        });
        current = pin(&current, v, value).ok_or(CountError::Unsatisfiable { stage })?;
    }

    let mut est = CountEstimate {
        estimate: 0.0,
        log_estimate: 0.0,
        delta: cfg.delta,
        eps_stage,
        samples_per_stage: samples,
        stages,
        exact_tail,
    };
    est.log_estimate = est.reconstruct_log();
    est.estimate = est.log_estimate.exp();
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::enumerate_satisfying;
    use proptest::prelude::*;
    use rand::Rng;

    fn c(vars: &[usize], forbidden: &[u32]) -> AtomicConstraint {
        AtomicConstraint::new(vars.to_vec(), forbidden.to_vec()).unwrap()
    }

    #[test]
    fn stage_eps_example() {
        let cfg = CountConfig::new(0.1);
        let eps = cfg.stage_eps(100);
        assert!((eps - 0.01 / (800.0 * 1000f64.ln())).abs() < 1e-15);
        assert!((eps - 1.81e-6).abs() < 0.01e-6);
        assert_eq!(CountConfig::new(0.2).stage_samples(2), 3200);
    }

    #[test]
    fn no_constraints_is_exact() {
        let csp = AtomicCsp::new(vec![2, 3, 5], vec![]).unwrap();
        let scheme = ProjectionScheme::identity(&csp, 0.25);
        let est = approx_count(&csp, &scheme, &CountConfig::new(0.2), 1).unwrap();
        assert!((est.estimate - 30.0).abs() < 1e-9);
        assert!(est.stages.iter().all(|s| s.method == StageMethod::Free));
    }

    #[test]
    fn single_clause_within_tolerance() {
        let csp = AtomicCsp::uniform(2, 2, vec![c(&[0, 1], &[0, 0])]).unwrap();
        let scheme = ProjectionScheme::identity(&csp, 0.25);
        let mut cfg = CountConfig::new(0.2);
        cfg.exact_fallback = None;
        let mut inside = 0;
        let trials = 100;
        for seed in 0..trials {
            let est = approx_count(&csp, &scheme, &cfg, seed).unwrap();
            assert!((est.reconstruct_log() - est.log_estimate).abs() < 1e-9);
            if est.estimate >= 3.0 / 1.2 && est.estimate <= 3.0 * 1.2 {
                inside += 1;
            }
        }
        assert!(inside >= 95, "{inside}/{trials}");
    }

    #[test]
    fn fallback_counts_exactly() {
        let csp = AtomicCsp::uniform(3, 2, vec![c(&[0, 1], &[0, 0]), c(&[1, 2], &[1, 1])]).unwrap();
        let scheme = ProjectionScheme::identity(&csp, 0.25);
        let est = approx_count(&csp, &scheme, &CountConfig::new(0.2), 0).unwrap();
        assert_eq!(est.exact_tail.as_ref().unwrap().count, 4);
        assert!((est.estimate - 4.0).abs() < 1e-9);
    }

    #[test]
    fn bad_delta_rejected() {
        let csp = AtomicCsp::uniform(1, 2, vec![]).unwrap();
        let scheme = ProjectionScheme::identity(&csp, 0.25);
        assert!(matches!(
            approx_count(&csp, &scheme, &CountConfig::new(1.5), 0),
            Err(CountError::Config(_))
        ));
    }

    #[test]
    fn pin_to_forbidden_unit_constraint_fails() {
        let csp = AtomicCsp::uniform(2, 2, vec![c(&[0], &[1]), c(&[0, 1], &[0, 0])]).unwrap();
        let p = Pinned::new(csp);
        assert!(pin(&p, 0, 1).is_none());
        let q = pin(&p, 0, 0).unwrap();
        assert_eq!(q.csp.num_vars(), 1);
        assert_eq!(q.csp.constraints(), &[c(&[0], &[0])]);
        assert_eq!(q.original, vec![1]);
    }

    proptest! {
        #[test]
        fn pinning_matches_enumeration(seed in 0u64..300, v in 0usize..5, value in 0u32..3) {
            let mut rng = crate::rng::chain_rng(seed, 2);
            let cons: Vec<AtomicConstraint> = (0..5).map(|_| {
                let a = rng.random_range(0..5);
                let b = (a + 1 + rng.random_range(0..4)) % 5;
                c(&[a, b], &[rng.random_range(0..3), rng.random_range(0..3)])
            }).collect();
            let csp = AtomicCsp::uniform(5, 3, cons).unwrap();
            let expected: Vec<Vec<u32>> = enumerate_satisfying(&csp)
                .unwrap()
                .into_iter()
                .filter(|x| x[v] == value)
                .map(|mut x| { x.remove(v); x })
                .collect();
            match pin(&Pinned::new(csp), v, value) {
                Some(p) => prop_assert_eq!(enumerate_satisfying(&p.csp).unwrap(), expected),
                None => prop_assert!(expected.is_empty()),
            }
        }
    }
}
