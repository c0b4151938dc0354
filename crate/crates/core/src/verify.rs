//! Statistical checks of the sampler against the enumeration oracles.
//!
//! Each check runs the real sampling code on a small instance and compares
//! its empirical output with the exact law computed by [`crate::oracle`].
//! Every draw uses its own seeded stream, so reports are reproducible and
//! independent of the thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::counting::{approx_count, CountConfig};
use crate::csp::{AtomicCsp, Assignment};
use crate::dynamics::{inv_sample, sample_step, ProjectedCsp, ProjectedState, Sampler, SamplerConfig, Scratch, StepFlag};
use crate::error::{OracleError, VerifyError};
use crate::oracle::{count_satisfying, exact_lift, exact_mu, exact_mu_pi, exact_projected_conditional, tv_counts, tv_empirical};
use crate::projection::ProjectionScheme;
use crate::rng::chain_rng;

/// Largest projected space the exhaustive checks will walk.
pub const PROJECTED_LIMIT: usize = 1 << 16;

// Stream offsets so the checks never share a stream for the same seed.
const STEP_STREAMS: u64 = 1 << 40;
const LIFT_STREAMS: u64 = 2 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerifyConfig {
    /// Sampler accuracy for the uniformity check.
    pub eps: f64,
    pub c_t: f64,
    /// Full `main_sample` draws in the uniformity check.
    pub samples: u64,
    /// Allowed excess of the empirical TV over `eps`.
    pub slack: f64,
    /// Draws per `(v, Y^{-v})` in the conditional check.
    pub step_draws: u64,
    /// Draws per projected state in the lifting check.
    pub lift_draws: u64,
    /// TV tolerance for the conditional and lifting checks.
    pub tolerance: f64,
    /// Independent `approx_count` runs; zero skips the check.
    pub count_trials: u64,
    pub count_delta: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            c_t: 1.0,
            samples: 20_000,
            slack: 0.02,
            step_draws: 100_000,
            lift_draws: 100_000,
            tolerance: 0.01,
            count_trials: 0,
            count_delta: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformityCheck {
    pub samples: u64,
    pub support: usize,
    pub tv: f64,
    pub threshold: f64,
    /// Samples whose lift failed.
    pub lift_errors: u64,
    /// S1 and S2 outcomes over all Glauber steps.
    pub step_failures: u64,
    /// Sample calls plus InvSample calls.
    pub calls: u64,
    pub failures: u64,
    /// Samples with at least one failed subroutine call.
    pub failed_samples: u64,
    pub pass: bool,
}

impl UniformityCheck {
    pub fn failure_rate(&self) -> f64 {
        if self.calls == 0 {
            0.0
        } else {
            self.failures as f64 / self.calls as f64
        }
    }
}

/// Draws `samples` outputs of the full sampler and measures their TV distance
/// to the uniform law on satisfying assignments. Failed lifts count as mass
/// outside the support.
pub fn check_uniformity(
    csp: &AtomicCsp,
    scheme: &ProjectionScheme,
    eps: f64,
    c_t: f64,
    samples: u64,
    slack: f64,
    seed: u64,
) -> Result<UniformityCheck, VerifyError> {
    let exact = exact_mu(csp)?;
    let cfg = SamplerConfig::new(csp, scheme, eps, c_t);
    // validates the scheme once up front; the workers below cannot fail
    Sampler::new(csp, scheme, cfg)?;
    let runs: Vec<(Option<Assignment>, u64, bool)> = (0..samples)
        .into_par_iter()
        .map_init(
            || Sampler::new(csp, scheme, cfg).expect("validated above"),
            |sampler, j| {
                let run = sampler.sample(&mut chain_rng(seed, j));
                let steps = run.diagnostics.run.s1 + run.diagnostics.run.s2;
                let lift_failed = run.result.is_err();
                (run.result.ok(), steps, lift_failed)
            },
        )
        .collect();

    let mut counts: BTreeMap<Assignment, u64> = BTreeMap::new();
    let (mut lift_errors, mut step_failures, mut failed_samples) = (0, 0, 0);
    for (x, steps_failed, lift_failed) in runs {
        if let Some(x) = x {
            *counts.entry(x).or_default() += 1;
        }
        lift_errors += u64::from(lift_failed);
        step_failures += steps_failed;
        failed_samples += u64::from(lift_failed || steps_failed > 0);
    }
    let tv = tv_empirical(&counts, lift_errors, &exact);
    let threshold = eps + slack;
    Ok(UniformityCheck {
        samples,
        support: exact.support_len(),
        tv,
        threshold,
        lift_errors,
        step_failures,
        calls: samples * (cfg.steps + 1),
        failures: step_failures + lift_errors,
        failed_samples,
        pass: tv <= threshold,
    })
}

/// Enumerates `∏ [0, q_u)` in lexicographic order.
fn projected_states(q: &[u32]) -> impl Iterator<Item = Vec<u32>> + '_ {
    let mut next = if q.contains(&0) { None } else { Some(vec![0u32; q.len()]) };
    std::iter::from_fn(move || {
        let cur = next.take()?;
        let mut succ = cur.clone();
        for i in (0..q.len()).rev() {
            succ[i] += 1;
            if succ[i] < q[i] {
                next = Some(succ);
                break;
            }
            succ[i] = 0;
        }
        Some(cur)
    })
}

fn q_sizes(csp: &AtomicCsp, scheme: &ProjectionScheme) -> Vec<u32> {
    (0..csp.num_vars()).map(|v| scheme.q_size(v)).collect()
}

fn guard_projected(q: &[u32]) -> Result<(), OracleError> {
    let size = q.iter().try_fold(1u128, |acc, &s| acc.checked_mul(u128::from(s)));
    match size {
        Some(s) if s <= PROJECTED_LIMIT as u128 => Ok(()),
        _ => Err(OracleError::TooLarge {
            size: size.unwrap_or(u128::MAX),
            limit: PROJECTED_LIMIT as u128,
        }),
    }
}

/// Every `(v, Y^{-v})` with `|Q_v| > 1`; the entry at `v` is set to 0.
fn conditional_sites(csp: &AtomicCsp, scheme: &ProjectionScheme) -> Result<Vec<(usize, Vec<u32>)>, OracleError> {
    let q = q_sizes(csp, scheme);
    guard_projected(&q)?;
    let mut sites = Vec::new();
    for v in (0..q.len()).filter(|&v| q[v] > 1) {
        let mut q_rest = q.clone();
        q_rest[v] = 1;
        sites.extend(projected_states(&q_rest).map(|y| (v, y)));
    }
    Ok(sites)
}

fn partial(y: &[u32], v: usize) -> Vec<Option<u32>> {
    y.iter()
        .enumerate()
        .map(|(u, &j)| if u == v { None } else { Some(j) })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionalSite {
    pub var: usize,
    /// The projected state; the entry at `var` is a placeholder.
    pub y: Vec<u32>,
    pub tv: f64,
    pub accepted: u64,
    pub s1: u64,
    pub s2: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionalCheck {
    pub sites: usize,
    /// Sites whose conditioning event has zero probability.
    pub skipped: usize,
    pub draws: u64,
    pub max_tv: f64,
    pub worst: Option<ConditionalSite>,
    pub failures: u64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares the non-failing outputs of `sample_step` with the exact projected
/// conditional at every site.
pub fn check_conditionals(
    csp: &AtomicCsp,
    scheme: &ProjectionScheme,
    eps: f64,
    draws: u64,
    tolerance: f64,
    seed: u64,
) -> Result<ConditionalCheck, VerifyError> {
    let pcsp = ProjectedCsp::new(csp, scheme)?;
    let cfg = SamplerConfig::new(csp, scheme, eps, 1.0);
    let sites = conditional_sites(csp, scheme)?;
    let results: Vec<Result<Option<ConditionalSite>, OracleError>> = sites
        .par_iter()
        .enumerate()
        .map_init(
            || Scratch::new(csp),
            |scratch, (idx, (v, y))| {
                let exact = match exact_projected_conditional(csp, scheme, *v, &partial(y, *v)) {
                    Ok(c) => c,
                    Err(OracleError::ZeroProbability) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let mut state = ProjectedState::new(&pcsp, y.clone());
                let mut rng = chain_rng(seed, STEP_STREAMS + idx as u64);
                let mut counts = vec![0u64; scheme.q_size(*v) as usize];
                let (mut s1, mut s2) = (0, 0);
                for _ in 0..draws {
                    match sample_step(&pcsp, &mut state, *v, &cfg, scratch, &mut rng) {
                        (j, StepFlag::Accepted, _) => counts[j as usize] += 1,
                        (_, StepFlag::S1, _) => s1 += 1,
                        (_, StepFlag::S2, _) => s2 += 1,
                    }
                }
                Ok(Some(ConditionalSite {
                    var: *v,
                    y: y.clone(),
                    tv: tv_counts(&counts, &exact.probs()),
                    accepted: counts.iter().sum(),
                    s1,
                    s2,
                }))
            },
        )
        .collect();

    let mut check = ConditionalCheck {
        sites: 0,
        skipped: 0,
        draws,
        max_tv: 0.0,
        worst: None,
        failures: 0,
        tolerance,
        pass: true,
    };
    for r in results {
        let Some(site) = r? else {
            check.skipped += 1;
            continue;
        };
        check.sites += 1;
        check.failures += site.s1 + site.s2;
        if check.worst.is_none() || site.tv > check.max_tv {
            check.max_tv = site.tv;
            check.worst = Some(site);
        }
    }
    check.pass = check.max_tv <= tolerance;
    Ok(check)
}

#[derive(Clone, Debug, Serialize)]
pub struct LiftState {
    pub y: Vec<u32>,
    pub support: usize,
    pub tv: f64,
    pub errors: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LiftCheck {
    pub states: usize,
    pub draws: u64,
    pub max_tv: f64,
    pub worst: Option<LiftState>,
    pub errors: u64,
    pub tolerance: f64,
    pub pass: bool,
}

/// For every feasible projected state, compares the non-failing outputs of
/// `inv_sample` with the uniform law on its satisfying preimages.
pub fn check_lifts(
    csp: &AtomicCsp,
    scheme: &ProjectionScheme,
    eps: f64,
    draws: u64,
    tolerance: f64,
    seed: u64,
) -> Result<LiftCheck, VerifyError> {
    let pcsp = ProjectedCsp::new(csp, scheme)?;
    let cfg = SamplerConfig::new(csp, scheme, eps, 1.0);
    let feasible: Vec<Assignment> = exact_mu_pi(csp, scheme)?.support().map(|(y, _)| y.clone()).collect();
    let results: Vec<Result<LiftState, OracleError>> = feasible
        .par_iter()
        .enumerate()
        .map_init(
            || Scratch::new(csp),
            |scratch, (idx, y)| {
                let exact = exact_lift(csp, scheme, y)?;
                let state = ProjectedState::new(&pcsp, y.clone());
                let mut rng = chain_rng(seed, LIFT_STREAMS + idx as u64);
                let mut counts: BTreeMap<Assignment, u64> = BTreeMap::new();
                let mut errors = 0;
                for _ in 0..draws {
                    match inv_sample(&pcsp, &state, &cfg, scratch, &mut rng) {
                        Ok(x) => *counts.entry(x).or_default() += 1,
                        Err(_) => errors += 1,
                    }
                }
                Ok(LiftState {
                    y: y.clone(),
                    support: exact.support_len(),
                    tv: tv_empirical(&counts, 0, &exact),
                    errors,
                })
            },
        )
        .collect();

    let mut check = LiftCheck {
        states: 0,
        draws,
        max_tv: 0.0,
        worst: None,
        errors: 0,
        tolerance,
        pass: true,
    };
    for r in results {
        let state = r?;
        check.states += 1;
        check.errors += state.errors;
        if check.worst.is_none() || state.tv > check.max_tv {
            check.max_tv = state.tv;
            check.worst = Some(state);
        }
    }
    check.pass = check.max_tv <= tolerance;
    Ok(check)
}

#[derive(Clone, Debug, Serialize)]
pub struct MarginalBoundCheck {
    /// `e·b·Δ <= 1` and `3b < 1`.
    pub applicable: bool,
    pub sites: usize,
    pub skipped: usize,
    pub violations: usize,
    /// Largest ratio of conditional probability to its bound.
    pub max_ratio: f64,
    pub pass: Option<bool>,
}

/// Checks the conditional marginal bound `(1-3b)^-Δ · P_π[value(v) = j]` at
/// every `(v, Y^{-v})` with positive probability.
pub fn check_marginal_bound(csp: &AtomicCsp, scheme: &ProjectionScheme) -> Result<MarginalBoundCheck, VerifyError> {
    let b = crate::projection::compute_b(csp, scheme)?.b;
    let delta = csp.degree_stats().max_degree as f64;
    let applicable = std::f64::consts::E * b * delta <= 1.0 && 3.0 * b < 1.0;
    let mut check = MarginalBoundCheck {
        applicable,
        sites: 0,
        skipped: 0,
        violations: 0,
        max_ratio: 0.0,
        pass: None,
    };
    if !applicable {
        return Ok(check);
    }
    for (v, y) in conditional_sites(csp, scheme)? {
        let cond = match exact_projected_conditional(csp, scheme, v, &partial(&y, v)) {
            Ok(c) => c,
            Err(OracleError::ZeroProbability) => {
                check.skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        check.sites += 1;
        let bound = cond.bound.as_ref().expect("3b < 1 here");
        for (p, bd) in cond.probs().iter().zip(bound) {
            check.max_ratio = check.max_ratio.max(p / bd);
        }
        if cond.bound_holds != Some(true) {
            check.violations += 1;
        }
    }
    check.pass = Some(check.violations == 0);
    Ok(check)
}

#[derive(Clone, Debug, Serialize)]
pub struct CountingCheck {
    pub exact: u64,
    pub delta: f64,
    pub trials: u64,
    pub within: u64,
    /// Trials that ended in an error instead of an estimate.
    pub errors: u64,
    pub estimates: Vec<Option<f64>>,
    pub pass: bool,
}

/// Whether `estimate` lies within a factor `1 + delta` of `exact`.
pub fn within_factor(estimate: f64, exact: f64, delta: f64) -> bool {
    estimate <= (1.0 + delta) * exact && exact <= (1.0 + delta) * estimate
}

/// Runs `approx_count` with seeds `seed, seed+1, ...` and compares with the
/// brute-force count. Passes when at least 90% of the trials are in range.
pub fn check_counting(
    csp: &AtomicCsp,
    scheme: &ProjectionScheme,
    cfg: &CountConfig,
    trials: u64,
    seed: u64,
) -> Result<CountingCheck, VerifyError> {
    let exact = count_satisfying(csp)?;
    let estimates: Vec<Option<f64>> = (0..trials)
        .map(|t| approx_count(csp, scheme, cfg, seed.wrapping_add(t)).ok().map(|e| e.estimate))
        .collect();
    let within = estimates
        .iter()
        .filter(|e| e.is_some_and(|e| within_factor(e, exact as f64, cfg.delta)))
        .count() as u64;
    Ok(CountingCheck {
        exact,
        delta: cfg.delta,
        trials,
        within,
        errors: estimates.iter().filter(|e| e.is_none()).count() as u64,
        estimates,
        pass: 10 * within >= 9 * trials,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InstanceReport {
    pub name: String,
    pub num_vars: usize,
    pub num_constraints: usize,
    pub solutions: u64,
    pub uniformity: UniformityCheck,
    pub conditionals: ConditionalCheck,
    pub lifts: LiftCheck,
    pub marginal_bound: MarginalBoundCheck,
    pub counting: Option<CountingCheck>,
    pub pass: bool,
}

/// Runs every check on one instance.
pub fn verify_instance(
    name: &str,
    csp: &AtomicCsp,
    scheme: &ProjectionScheme,
    cfg: &VerifyConfig,
) -> Result<InstanceReport, VerifyError> {
    let solutions = count_satisfying(csp)?;
    let uniformity = check_uniformity(csp, scheme, cfg.eps, cfg.c_t, cfg.samples, cfg.slack, cfg.seed)?;
    let conditionals = check_conditionals(csp, scheme, cfg.eps, cfg.step_draws, cfg.tolerance, cfg.seed)?;
    let lifts = check_lifts(csp, scheme, cfg.eps, cfg.lift_draws, cfg.tolerance, cfg.seed)?;
    let marginal_bound = check_marginal_bound(csp, scheme)?;
    let counting = if cfg.count_trials > 0 {
        let mut count_cfg = CountConfig::new(cfg.count_delta);
        count_cfg.c_t = cfg.c_t;
        count_cfg.exact_fallback = None;
        Some(check_counting(csp, scheme, &count_cfg, cfg.count_trials, cfg.seed)?)
    } else {
        None
    };
    let pass = uniformity.pass
        && conditionals.pass
        && lifts.pass
        && marginal_bound.pass != Some(false)
        && counting.as_ref().is_none_or(|c| c.pass);
    Ok(InstanceReport {
        name: name.to_string(),
        num_vars: csp.num_vars(),
        num_constraints: csp.num_constraints(),
        solutions,
        uniformity,
        conditionals,
        lifts,
        marginal_bound,
        counting,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::AtomicConstraint;
    use crate::projection::{kappa_floor, ProjectionCase, VarPartition};

    #[test]
    fn projected_states_enumerates_in_order() {
        let all: Vec<Vec<u32>> = projected_states(&[2, 1, 3]).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 0, 0]);
        assert_eq!(all[1], vec![0, 0, 1]);
        assert_eq!(all[5], vec![1, 0, 2]);
        assert_eq!(projected_states(&[]).count(), 1);
        assert_eq!(projected_states(&[2, 0]).count(), 0);
    }

    #[test]
    fn factor_window() {
        assert!(within_factor(100.0, 100.0, 0.2));
        assert!(within_factor(120.0, 100.0, 0.2));
        assert!(!within_factor(120.1, 100.0, 0.2));
        assert!(within_factor(100.0 / 1.2 + 1e-9, 100.0, 0.2));
        assert!(!within_factor(83.0, 100.0, 0.2));
    }

    #[test]
    fn small_instance_passes_every_check() {
        let csp = AtomicCsp::uniform(3, 2, vec![AtomicConstraint::new(vec![0, 1, 2], vec![0, 0, 0]).unwrap()]).unwrap();
        let parts = vec![VarPartition::identity(2), VarPartition::full(2), VarPartition::full(2)];
        let scheme = ProjectionScheme::new(parts, kappa_floor(1), 0.25, ProjectionCase::Custom);
        let cfg = VerifyConfig {
            samples: 4000,
            step_draws: 20_000,
            lift_draws: 20_000,
            tolerance: 0.02,
            count_trials: 2,
            seed: 5,
            ..VerifyConfig::default()
        };
        let report = verify_instance("clause", &csp, &scheme, &cfg).unwrap();
        assert_eq!(report.solutions, 7);
        assert_eq!(report.conditionals.sites, 1);
        assert_eq!(report.lifts.states, 2);
        assert!(report.marginal_bound.applicable);
        assert!(report.pass, "{report:#?}");
    }

    #[test]
    fn reports_are_reproducible() {
        let csp = AtomicCsp::uniform(2, 2, vec![AtomicConstraint::new(vec![0, 1], vec![1, 1]).unwrap()]).unwrap();
        let scheme = ProjectionScheme::identity(&csp, 0.25);
        let a = check_uniformity(&csp, &scheme, 0.2, 1.0, 300, 0.02, 9).unwrap();
        let b = check_uniformity(&csp, &scheme, 0.2, 1.0, 300, 0.02, 9).unwrap();
        assert_eq!(a.tv, b.tv);
        assert_eq!(a.calls, 300 * (SamplerConfig::new(&csp, &scheme, 0.2, 1.0).steps + 1));
    }
}
