//! Small bundled instances with hand-picked projection schemes.
//!
//! Every instance is small enough to enumerate, and its scheme makes every
//! projected state liftable to a satisfying assignment, so the projected
//! chain is irreducible on the whole projected space. Three of them also
//! satisfy `e·b·Δ <= 1` and `3b < 1`, the hypothesis of the conditional
//! marginal bound.

use crate::csp::{AtomicConstraint, AtomicCsp};
use crate::formats::{build_coloring_csp, Hypergraph};
use crate::projection::{compute_b, kappa_floor, ProjectionCase, ProjectionScheme, VarPartition};

/// η attached to the bundled schemes.
pub const BUNDLED_ETA: f64 = 0.25;

#[derive(Clone, Debug)]
pub struct BundledInstance {
    pub name: &'static str,
    pub csp: AtomicCsp,
    pub scheme: ProjectionScheme,
}

impl BundledInstance {
    /// `e·b·Δ <= 1` and `3b < 1`.
    pub fn in_marginal_bound_regime(&self) -> bool {
        let b = compute_b(&self.csp, &self.scheme).expect("bundled scheme matches").b;
        let delta = self.csp.degree_stats().max_degree as f64;
        std::f64::consts::E * b * delta <= 1.0 && 3.0 * b < 1.0
    }
}

fn cons(list: &[(&[usize], &[u32])]) -> Vec<AtomicConstraint> {
    list.iter()
        .map(|(v, f)| AtomicConstraint::new(v.to_vec(), f.to_vec()).expect("bundled constraint"))
        .collect()
}

/// Scheme refining exactly the variables in `refined` with `refine(alphabet)`,
/// projecting every other variable to a single block.
fn scheme_with(csp: &AtomicCsp, refined: &[usize], refine: impl Fn(u32) -> VarPartition) -> ProjectionScheme {
    let parts = (0..csp.num_vars())
        .map(|v| {
            let a = csp.alphabet(v);
            if refined.contains(&v) {
                refine(a)
            } else {
                VarPartition::full(a)
            }
        })
        .collect();
    let kappa = kappa_floor(csp.degree_stats().max_degree);
    ProjectionScheme::new(parts, kappa, BUNDLED_ETA, ProjectionCase::Custom)
}

/// `{0}` and the rest.
fn split_first(a: u32) -> VarPartition {
    VarPartition::new(a, vec![vec![0], (1..a).collect()]).expect("valid split")
}

fn instance(name: &'static str, csp: AtomicCsp, refined: &[usize], refine: impl Fn(u32) -> VarPartition) -> BundledInstance {
    let scheme = scheme_with(&csp, refined, refine);
    BundledInstance { name, csp, scheme }
}

pub fn bundled() -> Vec<BundledInstance> {
    let mut out = Vec::with_capacity(10);

    let csp = AtomicCsp::uniform(3, 2, cons(&[(&[0, 1, 2], &[0, 0, 0])])).unwrap();
    out.push(instance("clause3", csp, &[0], VarPartition::identity));

    let csp = AtomicCsp::uniform(4, 2, cons(&[(&[0, 1, 3], &[0, 0, 1]), (&[0, 2, 3], &[0, 0, 1])])).unwrap();
    out.push(instance("chain4", csp, &[0, 1], VarPartition::identity));

    let csp = AtomicCsp::uniform(4, 4, cons(&[(&[2, 3], &[3, 3]), (&[0, 1], &[1, 3]), (&[0, 2], &[0, 1])])).unwrap();
    out.push(instance("quaternary4", csp, &[0, 1, 3], |a| VarPartition::contiguous(a, 2)));

    let path = Hypergraph {
        num_vertices: 4,
        edges: vec![vec![0, 1], vec![1, 2], vec![2, 3]],
    };
    let csp = build_coloring_csp(&path, 4).unwrap();
    out.push(instance("path-coloring4", csp, &[0, 1, 2, 3], |a| VarPartition::contiguous(a, 2)));

    let csp = AtomicCsp::uniform(5, 2, cons(&[(&[0, 1, 2, 3], &[0, 0, 0, 0]), (&[0, 1, 2, 4], &[1, 0, 0, 0])])).unwrap();
    out.push(instance("overlap5", csp, &[0], VarPartition::identity));

    let csp = AtomicCsp::uniform(5, 3, cons(&[(&[0, 1, 2], &[1, 2, 1]), (&[2, 3, 4], &[1, 1, 2])])).unwrap();
    out.push(instance("ternary5", csp, &[0, 1, 2, 3, 4], split_first));

    let csp = AtomicCsp::new(
        vec![2, 3, 2, 3, 2, 3],
        cons(&[(&[0, 5], &[0, 1]), (&[1, 2], &[2, 1]), (&[2, 5], &[1, 2]), (&[3, 4], &[1, 1])]),
    )
    .unwrap();
    out.push(instance("mixed6", csp, &[1, 2, 4], |a| {
        if a == 2 {
            VarPartition::identity(2)
        } else {
            split_first(a)
        }
    }));

    let csp = AtomicCsp::uniform(
        6,
        3,
        cons(&[
            (&[0, 5], &[2, 2]),
            (&[1, 4], &[0, 2]),
            (&[0, 1], &[0, 2]),
            (&[0, 1], &[1, 2]),
            (&[1, 3], &[1, 1]),
            (&[0, 1], &[2, 0]),
            (&[0, 5], &[1, 2]),
            (&[0, 2], &[2, 1]),
        ]),
    )
    .unwrap();
    out.push(instance("ternary6", csp, &[0, 3, 4, 5], split_first));

    let csp = AtomicCsp::uniform(
        9,
        2,
        cons(&[
            (&[7, 8, 2], &[0, 1, 1]),
            (&[8, 0, 7], &[1, 0, 0]),
            (&[4, 3, 6], &[0, 0, 1]),
            (&[1, 5, 2], &[0, 0, 0]),
            (&[0, 1, 3], &[0, 1, 0]),
        ]),
    )
    .unwrap();
    out.push(instance("binary9", csp, &[1, 4, 7, 8], VarPartition::identity));

    let csp = AtomicCsp::uniform(
        12,
        2,
        cons(&[
            (&[2, 6], &[0, 1]),
            (&[0, 8, 11], &[1, 1, 0]),
            (&[2, 10], &[1, 1]),
            (&[6, 9], &[0, 0]),
            (&[4, 6, 9], &[1, 1, 1]),
            (&[0, 4, 5], &[1, 1, 0]),
            (&[1, 10, 11], &[0, 1, 0]),
            (&[2, 6, 7], &[0, 1, 1]),
            (&[4, 9, 10], &[0, 0, 0]),
            (&[1, 2, 5], &[1, 0, 0]),
            (&[1, 6], &[0, 1]),
            (&[3, 10], &[1, 0]),
        ]),
    )
    .unwrap();
    out.push(instance("binary12", csp, &[0, 1, 3, 4, 8], VarPartition::identity));

    out
}

/// Looks up a bundled instance by name.
pub fn by_name(name: &str) -> Option<BundledInstance> {
    bundled().into_iter().find(|i| i.name == name)
}
