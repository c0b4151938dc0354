//! Moser-Tardos resampling over arbitrary variable sets.
//!
//! The engine is generic over the value type so the same loop drives both
//! satisfying-assignment search and the randomized projection constructions.
//! Violated events are tracked incrementally: after resampling an event only
//! the events sharing one of its variables are re-evaluated.

use std::collections::BTreeSet;

use rand::{Rng, RngCore};
use serde::Serialize;

use crate::csp::AtomicCsp;
use crate::error::ProjectionError;

type Sampler<'a, T> = Box<dyn Fn(usize, &mut dyn RngCore) -> T + 'a>;
type Predicate<'a, T> = Box<dyn Fn(&[T]) -> bool + 'a>;

/// A bad event over `vars`; the predicate returns true when the event occurs.
/// It receives the whole assignment but must only read its own variables.
pub struct BadEvent<'a, T> {
    pub vars: Vec<usize>,
    pub occurs: Predicate<'a, T>,
}

pub struct ResamplingProblem<'a, T> {
    num_vars: usize,
    sampler: Sampler<'a, T>,
    events: Vec<BadEvent<'a, T>>,
    by_var: Vec<Vec<usize>>,
}

impl<'a, T: Clone> ResamplingProblem<'a, T> {
    pub fn new(
        num_vars: usize,
        sampler: impl Fn(usize, &mut dyn RngCore) -> T + 'a,
        events: Vec<BadEvent<'a, T>>,
    ) -> Self {
        let mut by_var = vec![Vec::new(); num_vars];
        for (e, ev) in events.iter().enumerate() {
            for &v in &ev.vars {
                by_var[v].push(e);
            }
        }
        Self {
            num_vars,
            sampler: Box::new(sampler),
            events,
            by_var,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_events(&self) -> usize {
        self.events.len()
    }

    pub fn occurring(&self, values: &[T]) -> Vec<usize> {
        (0..self.events.len())
            .filter(|&e| (self.events[e].occurs)(values))
            .collect()
    }
}

/// Attempt budget for failure probability `delta`: `ceil(ln(1/δ))` restarts of
/// `2n` resampling steps each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Budget {
    pub attempts: usize,
    pub steps_per_attempt: usize,
}

impl Budget {
    pub fn for_delta(num_vars: usize, delta: f64) -> Self {
        let attempts = if delta > 0.0 && delta < 1.0 {
            (1.0 / delta).ln().ceil() as usize
        } else {
            1
        };
        Self {
            attempts: attempts.max(1),
            steps_per_attempt: 2 * num_vars,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MtOutcome<T> {
    pub values: Vec<T>,
    /// Resampling steps taken across all attempts.
    pub resamples: usize,
    pub attempts_used: usize,
    /// Event resampled at each step, in order.
    pub trace: Vec<usize>,
}

/// Runs the resampling algorithm: pick the lowest-index occurring event,
/// resample its variables, repeat. Restarts from a fresh assignment when an
/// attempt exhausts its step budget.
pub fn moser_tardos<T: Clone>(
    problem: &ResamplingProblem<'_, T>,
    budget: Budget,
    rng: &mut dyn RngCore,
) -> Result<MtOutcome<T>, ProjectionError> {
    let mut trace = Vec::new();
    let mut stamp = vec![0u64; problem.events.len()];
    let mut epoch = 0u64;
    for attempt in 1..=budget.attempts {
        let mut values: Vec<T> = (0..problem.num_vars).map(|v| (problem.sampler)(v, rng)).collect();
        let mut occurring: BTreeSet<usize> = problem.occurring(&values).into_iter().collect();
        let mut steps = 0usize;
        while let Some(&e) = occurring.first() {
            if steps == budget.steps_per_attempt {
                break;
            }
            steps += 1;
            trace.push(e);
            for &v in &problem.events[e].vars {
                values[v] = (problem.sampler)(v, rng);
            }
            epoch += 1;
            for &v in &problem.events[e].vars {
                for &f in &problem.by_var[v] {
                    if stamp[f] == epoch {
                        continue;
                    }
                    stamp[f] = epoch;
                    if (problem.events[f].occurs)(&values) {
                        occurring.insert(f);
                    } else {
                        occurring.remove(&f);
                    }
                }
            }
        }
        if occurring.is_empty() {
            debug_assert!(problem.occurring(&values).is_empty());
            if problem.occurring(&values).is_empty() {
                return Ok(MtOutcome {
                    values,
                    resamples: trace.len(),
                    attempts_used: attempt,
                    trace,
                });
            }
        }
    }
    Err(ProjectionError::ConstructionFailed {
        attempts: budget.attempts,
        steps: budget.steps_per_attempt,
    })
}

/// The resampling problem whose bad events are the constraints of `csp`.
pub fn csp_problem(csp: &AtomicCsp) -> ResamplingProblem<'_, u32> {
    let events = csp
        .constraints()
        .iter()
        .map(|c| BadEvent {
            vars: c.vars().to_vec(),
            occurs: Box::new(move |x: &[u32]| c.violated_by(x)),
        })
        .collect();
    ResamplingProblem::new(csp.num_vars(), move |v, rng| rng.random_range(0..csp.alphabet(v)), events)
}

/// Finds a satisfying assignment with failure probability at most `delta`
/// when the instance satisfies the symmetric local lemma condition.
pub fn find_satisfying(
    csp: &AtomicCsp,
    delta: f64,
    rng: &mut dyn RngCore,
) -> Result<MtOutcome<u32>, ProjectionError> {
    let out = moser_tardos(&csp_problem(csp), Budget::for_delta(csp.num_vars(), delta), rng)?;
    debug_assert!(csp.is_satisfied(&out.values));
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::AtomicConstraint;
    use crate::rng::chain_rng;

    fn c(vars: &[usize], forbidden: &[u32]) -> AtomicConstraint {
        AtomicConstraint::new(vars.to_vec(), forbidden.to_vec()).unwrap()
    }

    #[test]
    fn budget_formula() {
        assert_eq!(Budget::for_delta(10, 0.01), Budget { attempts: 5, steps_per_attempt: 20 });
        assert_eq!(Budget::for_delta(3, 0.5).attempts, 1);
        assert_eq!(Budget::for_delta(3, 1.0).attempts, 1);
    }

    #[test]
    fn single_clause_is_found() {
        let csp = AtomicCsp::uniform(3, 2, vec![c(&[0, 1, 2], &[0, 0, 0])]).unwrap();
        let mut rng = chain_rng(1, 0);
        let out = find_satisfying(&csp, 0.01, &mut rng).unwrap();
        assert!(csp.is_satisfied(&out.values));
        assert_ne!(out.values, vec![0, 0, 0]);
    }

    #[test]
    fn unsatisfiable_instance_fails() {
        let cons = (0..4u32).map(|m| c(&[0, 1], &[m & 1, m >> 1])).collect();
        let csp = AtomicCsp::uniform(2, 2, cons).unwrap();
        let mut rng = chain_rng(1, 0);
        assert!(matches!(
            find_satisfying(&csp, 0.01, &mut rng),
            Err(ProjectionError::ConstructionFailed { attempts: 5, steps: 4 })
        ));
    }

    #[test]
    fn same_seed_same_trace() {
        let cons = (0..8).map(|i| c(&[i, (i + 1) % 10, (i + 3) % 10], &[0, 1, 0])).collect();
        let csp = AtomicCsp::uniform(10, 2, cons).unwrap();
        let a = find_satisfying(&csp, 0.01, &mut chain_rng(42, 3)).unwrap();
        let b = find_satisfying(&csp, 0.01, &mut chain_rng(42, 3)).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn lowest_event_is_resampled_first() {
        // Both events occur on the all-zero start; the trace must begin with event 0.
        let events = vec![
            BadEvent { vars: vec![0], occurs: Box::new(|x: &[u32]| x[0] == 0) as Predicate<u32> },
            BadEvent { vars: vec![1], occurs: Box::new(|x: &[u32]| x[1] == 0) },
        ];
        let problem = ResamplingProblem::new(
            2,
            |_, rng: &mut dyn RngCore| if rng.random_bool(0.5) { 1 } else { 0 },
            events,
        );
        for seed in 0..50 {
            let mut rng = chain_rng(seed, 0);
            let mut probe = chain_rng(seed, 0);
            let start = [probe.random_bool(0.5), probe.random_bool(0.5)];
            if let Ok(out) = moser_tardos(&problem, Budget { attempts: 1, steps_per_attempt: 100 }, &mut rng) {
                if !start[0] && !start[1] {
                    assert_eq!(out.trace[0], 0);
                }
                assert_eq!(out.values, vec![1, 1]);
            }
        }
    }
}
