//! Projection schemes and their admissibility quantities.
//!
//! A projection maps each value of a variable to a block index; it is stored
//! as the partition of the alphabet into blocks together with a value to
//! block lookup table, so projecting is a table read and drawing a uniform
//! preimage is one bounded integer draw.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::csp::{Assignment, AtomicCsp};
use crate::error::ProjectionError;
use crate::numeric::NeumaierSum;

/// Which construction produced a scheme; this also fixes its κ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionCase {
    Identity,
    Custom,
    /// Uniform large alphabet, contiguous blocks with `R = floor(A^(2/3))` parts.
    Case1,
    /// Boolean marking.
    Case2,
    /// Ternary random (1, 2) partitions.
    Case3,
    /// Bucketed partition at the α*-optimal part count, `A >= 4`, `A` not 5 or 7.
    Case4Bucketed,
    /// Random mixtures of partition shapes for `A` = 5 or 7.
    Case4Mixed,
    /// Mixed alphabets.
    Case5,
}

impl ProjectionCase {
    pub fn label(self) -> &'static str {
        match self {
            ProjectionCase::Identity => "identity",
            ProjectionCase::Custom => "custom",
            ProjectionCase::Case1 => "case-1",
            ProjectionCase::Case2 => "case-2",
            ProjectionCase::Case3 => "case-3",
            ProjectionCase::Case4Bucketed => "case-4-bucketed",
            ProjectionCase::Case4Mixed => "case-4-mixed",
            ProjectionCase::Case5 => "case-5",
        }
    }
}

/// Partition of one variable's alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarPartition {
    blocks: Vec<Vec<u32>>,
    block_of: Vec<u32>,
}

impl VarPartition {
    /// Validates that `blocks` partition `0..alphabet` into nonempty parts.
    pub fn new(alphabet: u32, mut blocks: Vec<Vec<u32>>) -> Result<Self, String> {
        if blocks.is_empty() {
            return Err("no blocks".into());
        }
        let mut block_of = vec![u32::MAX; alphabet as usize];
        for (j, block) in blocks.iter_mut().enumerate() {
            if block.is_empty() {
                return Err(format!("block {j} is empty"));
            }
            block.sort_unstable();
            for &x in block.iter() {
                let slot = block_of
                    .get_mut(x as usize)
                    .ok_or_else(|| format!("value {x} outside alphabet of size {alphabet}"))?;
                if *slot != u32::MAX {
                    return Err(format!("value {x} appears in two blocks"));
                }
                *slot = j as u32;
            }
        }
        if let Some(x) = block_of.iter().position(|&b| b == u32::MAX) {
            return Err(format!("value {x} is not covered"));
        }
        Ok(Self { blocks, block_of })
    }

    pub fn identity(alphabet: u32) -> Self {
        Self {
            blocks: (0..alphabet).map(|x| vec![x]).collect(),
            block_of: (0..alphabet).collect(),
        }
    }

    /// The single-block partition (the variable is fully projected away).
    pub fn full(alphabet: u32) -> Self {
        Self {
            blocks: vec![(0..alphabet).collect()],
            block_of: vec![0; alphabet as usize],
        }
    }

    /// `parts` contiguous blocks of size `floor(A/parts)` followed by blocks
    /// of size `ceil(A/parts)`.
    pub fn contiguous(alphabet: u32, parts: u32) -> Self {
        assert!(parts >= 1 && parts <= alphabet, "bad part count {parts} for alphabet {alphabet}");
        let small = alphabet / parts;
        let large_count = alphabet % parts;
        let small_count = parts - large_count;
        let mut blocks = Vec::with_capacity(parts as usize);
        let mut next = 0u32;
        for j in 0..parts {
            let size = if j < small_count { small } else { small + 1 };
            blocks.push((next..next + size).collect());
            next += size;
        }
        let block_of = (0..alphabet)
            .map(|x| {
                let boundary = small_count * small;
                if x < boundary {
                    x / small
                } else {
                    small_count + (x - boundary) / (small + 1)
                }
            })
            .collect();
        Self { blocks, block_of }
    }

    /// Partition with the given block sizes over a random permutation of the alphabet.
    pub fn random_shape<R: Rng + ?Sized>(alphabet: u32, sizes: &[u32], rng: &mut R) -> Self {
        debug_assert_eq!(sizes.iter().sum::<u32>(), alphabet);
        let mut values: Vec<u32> = (0..alphabet).collect();
        // Fisher-Yates
        for i in (1..values.len()).rev() {
            let j = rng.random_range(0..=i);
            values.swap(i, j);
        }
        let mut blocks = Vec::with_capacity(sizes.len());
        let mut start = 0usize;
        for &s in sizes {
            blocks.push(values[start..start + s as usize].to_vec());
            start += s as usize;
        }
        Self::new(alphabet, blocks).expect("shape covers the alphabet")
    }

    #[inline]
    pub fn alphabet(&self) -> u32 {
        self.block_of.len() as u32
    }

    #[inline]
    pub fn num_blocks(&self) -> u32 {
        self.blocks.len() as u32
    }

    #[inline]
    pub fn blocks(&self) -> &[Vec<u32>] {
        &self.blocks
    }

    #[inline]
    pub fn block(&self, j: u32) -> &[u32] {
        &self.blocks[j as usize]
    }

    #[inline]
    pub fn block_size(&self, j: u32) -> u32 {
        self.blocks[j as usize].len() as u32
    }

    #[inline]
    pub fn project(&self, x: u32) -> u32 {
        self.block_of[x as usize]
    }

    /// Uniform element of block `j`.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, j: u32, rng: &mut R) -> u32 {
        let block = &self.blocks[j as usize];
        if block.len() == 1 {
            block[0]
        } else {
            block[rng.random_range(0..block.len())]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme", into = "RawScheme")]
pub struct ProjectionScheme {
    vars: Vec<VarPartition>,
    kappa: f64,
    eta: f64,
    case: ProjectionCase,
}

#[derive(Serialize, Deserialize)]
struct RawScheme {
    case: ProjectionCase,
    kappa: f64,
    eta: f64,
    /// Per variable, per block, the member values; the alphabet size is the
    /// total number of members.
    blocks: Vec<Vec<Vec<u32>>>,
}

impl TryFrom<RawScheme> for ProjectionScheme {
    type Error = ProjectionError;

    fn try_from(raw: RawScheme) -> Result<Self, Self::Error> {
        let vars = raw
            .blocks
            .into_iter()
            .enumerate()
            .map(|(v, blocks)| {
                let size: usize = blocks.iter().map(Vec::len).sum();
                VarPartition::new(size as u32, blocks)
                    .map_err(|msg| ProjectionError::BadPartition { var: v, msg })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            vars,
            kappa: raw.kappa,
            eta: raw.eta,
            case: raw.case,
        })
    }
}

impl From<ProjectionScheme> for RawScheme {
    fn from(s: ProjectionScheme) -> Self {
        RawScheme {
            case: s.case,
            kappa: s.kappa,
            eta: s.eta,
            blocks: s.vars.into_iter().map(|p| p.blocks).collect(),
        }
    }
}

/// The smallest κ allowed by (A2): `4 ln(3000 Δ)`, with Δ floored at 1.
pub fn kappa_floor(max_degree: usize) -> f64 {
    4.0 * (3000.0 * max_degree.max(1) as f64).ln()
}

impl ProjectionScheme {
    pub fn new(
        vars: Vec<VarPartition>,
        kappa: f64,
        eta: f64,
        case: ProjectionCase,
    ) -> Self {
        Self { vars, kappa, eta, case }
    }

    /// Validated user scheme; κ defaults to [`kappa_floor`].
    pub fn custom(csp: &AtomicCsp, blocks: Vec<Vec<Vec<u32>>>, eta: f64) -> Result<Self, ProjectionError> {
        if blocks.len() != csp.num_vars() {
            return Err(ProjectionError::VariableMismatch {
                scheme: blocks.len(),
                csp: csp.num_vars(),
            });
        }
        let vars = blocks
            .into_iter()
            .enumerate()
            .map(|(v, b)| {
                VarPartition::new(csp.alphabet(v), b)
                    .map_err(|msg| ProjectionError::BadPartition { var: v, msg })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let kappa = kappa_floor(csp.degree_stats().max_degree);
        Ok(Self::new(vars, kappa, eta, ProjectionCase::Custom))
    }

    pub fn identity(csp: &AtomicCsp, eta: f64) -> Self {
        let vars = csp.alphabets().iter().map(|&a| VarPartition::identity(a)).collect();
        let kappa = kappa_floor(csp.degree_stats().max_degree);
        Self::new(vars, kappa, eta, ProjectionCase::Identity)
    }

    pub fn full_marking(csp: &AtomicCsp, eta: f64) -> Self {
        let vars = csp.alphabets().iter().map(|&a| VarPartition::full(a)).collect();
        let kappa = kappa_floor(csp.degree_stats().max_degree);
        Self::new(vars, kappa, eta, ProjectionCase::Custom)
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    /// Fails unless the scheme has one partition per variable over the right alphabet.
    pub fn check_matches(&self, csp: &AtomicCsp) -> Result<(), ProjectionError> {
        if self.vars.len() != csp.num_vars() {
            return Err(ProjectionError::VariableMismatch {
                scheme: self.vars.len(),
                csp: csp.num_vars(),
            });
        }
        for (v, p) in self.vars.iter().enumerate() {
            if p.alphabet() != csp.alphabet(v) {
                return Err(ProjectionError::BadPartition {
                    var: v,
                    msg: format!(
                        "partition covers {} values, alphabet has {}",
                        p.alphabet(),
                        csp.alphabet(v)
                    ),
                });
            }
        }
        Ok(())
    }

    /// The scheme restricted to the listed variables, in that order.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        Self {
            vars: keep.iter().map(|&v| self.vars[v].clone()).collect(),
            kappa: self.kappa,
            eta: self.eta,
            case: self.case,
        }
    }

    #[inline]
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    #[inline]
    pub fn var(&self, v: usize) -> &VarPartition {
        &self.vars[v]
    }

    #[inline]
    pub fn partitions(&self) -> &[VarPartition] {
        &self.vars
    }

    #[inline]
    pub fn q_size(&self, v: usize) -> u32 {
        self.vars[v].num_blocks()
    }

    #[inline]
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    #[inline]
    pub fn eta(&self) -> f64 {
        self.eta
    }

    #[inline]
    pub fn case(&self) -> ProjectionCase {
        self.case
    }

    #[inline]
    pub fn project_value(&self, v: usize, x: u32) -> u32 {
        self.vars[v].project(x)
    }

    /// Applies the projection coordinatewise.
    pub fn project(&self, x: &[u32]) -> Assignment {
        x.iter()
            .enumerate()
            .map(|(v, &val)| self.vars[v].project(val))
            .collect()
    }

    /// Uniform value of variable `v` inside block `y`.
    #[inline]
    pub fn sample_preimage<R: Rng + ?Sized>(&self, v: usize, y: u32, rng: &mut R) -> u32 {
        self.vars[v].sample(y, rng)
    }

    /// Forbidden block of constraint `cid` at each of its variables.
    pub fn projected_forbidden(&self, csp: &AtomicCsp, cid: usize) -> Vec<u32> {
        csp.constraint(cid)
            .entries()
            .map(|(v, f)| self.vars[v].project(f))
            .collect()
    }

    /// Size of the block containing the forbidden value of `cid` at `var`.
    #[inline]
    fn forbidden_block_size(&self, var: usize, forbidden: u32) -> u32 {
        let p = &self.vars[var];
        p.block_size(p.project(forbidden))
    }

    /// `P_π[value(v) = π_v(f)]`: the block of `f` as a fraction of the alphabet.
    #[inline]
    pub fn forbidden_marginal(&self, var: usize, forbidden: u32) -> f64 {
        self.forbidden_block_size(var, forbidden) as f64 / self.vars[var].alphabet() as f64
    }
}

/// `b(C)` for every constraint and their maximum `b`.
#[derive(Clone, Debug, Serialize)]
pub struct BValues {
    pub b: f64,
    pub per_constraint: Vec<f64>,
    /// Natural logs, exact up to float rounding of the summed block-size logs.
    pub log_per_constraint: Vec<f64>,
}

pub fn compute_b(csp: &AtomicCsp, scheme: &ProjectionScheme) -> Result<BValues, ProjectionError> {
    scheme.check_matches(csp)?;
    let log_per_constraint: Vec<f64> = csp
        .constraints()
        .iter()
        .map(|c| {
            let mut sum = NeumaierSum::default();
            for (v, f) in c.entries() {
                sum.add(-(scheme.forbidden_block_size(v, f) as f64).ln());
            }
            sum.total()
        })
        .collect();
    let per_constraint: Vec<f64> = log_per_constraint.iter().map(|l| l.exp()).collect();
    let b = per_constraint.iter().copied().fold(0.0, f64::max);
    Ok(BValues {
        b,
        per_constraint,
        log_per_constraint,
    })
}

/// Exact `1 / b(C)`: the product of the forbidden block sizes.
pub fn inverse_b_exact(csp: &AtomicCsp, scheme: &ProjectionScheme, cid: usize) -> BigInt {
    csp.constraint(cid)
        .entries()
        .map(|(v, f)| BigInt::from(scheme.forbidden_block_size(v, f)))
        .product()
}

/// Variables of `cid` whose projected alphabet has more than one element.
pub fn free_vars(csp: &AtomicCsp, scheme: &ProjectionScheme, cid: usize) -> Vec<usize> {
    csp.constraint(cid)
        .vars()
        .iter()
        .copied()
        .filter(|&v| scheme.q_size(v) > 1)
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ZetaKappa {
    pub zeta: Vec<f64>,
    pub kappa: f64,
}

/// `ζ(C)` for every constraint (with the TV quantity `q` replaced by its
/// upper bound 1) and the scheme's κ.
pub fn compute_zeta_kappa(csp: &AtomicCsp, scheme: &ProjectionScheme) -> Result<ZetaKappa, ProjectionError> {
    let b = compute_b(csp, scheme)?.b;
    let delta = csp.degree_stats().max_degree;
    if std::f64::consts::E * b * delta as f64 > 1.0 {
        return Err(ProjectionError::Regime(format!(
            "e*b*Delta = {:.4} exceeds 1 (b = {b:.4e}, Delta = {delta})",
            std::f64::consts::E * b * delta as f64
        )));
    }
    Ok(ZetaKappa {
        zeta: zeta_values(csp, scheme, b, delta),
        kappa: scheme.kappa(),
    })
}

fn zeta_values(csp: &AtomicCsp, scheme: &ProjectionScheme, b: f64, delta: usize) -> Vec<f64> {
    let shrink = (1.0 - 3.0 * b).powi(delta as i32);
    let cap = 2.0 * delta as f64;
    csp.constraints()
        .iter()
        .map(|c| {
            c.entries()
                .filter(|&(v, _)| scheme.q_size(v) > 1)
                .map(|(v, f)| (shrink / scheme.forbidden_marginal(v, f)).min(cap).max(1.0))
                .fold(1.0, f64::max)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct A1Report {
    pub pass: bool,
    pub b: f64,
    /// `η / (300 Δ)`.
    pub bound: f64,
    /// Whether the comparison was done in exact rational arithmetic.
    pub exact: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct A2Report {
    pub pass: bool,
    pub kappa: f64,
    pub kappa_floor: f64,
    pub kappa_ok: bool,
    /// `ln(60000 Δ)^-2`.
    pub log_rhs: f64,
    /// Natural log of the left-hand side per constraint; `None` when the
    /// left-hand side is 0 (no free variable) or undefined.
    pub log_lhs: Vec<Option<f64>>,
    pub worst_constraint: Option<usize>,
    /// Why the inequality could not be evaluated, if it could not.
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct A3Report {
    pub pass: bool,
    /// Largest ratio between forbidden-block marginals of two constraints at
    /// a shared variable (1 when no variable is shared).
    pub max_ratio: f64,
    pub worst_var: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityReport {
    pub case: ProjectionCase,
    pub eta: f64,
    pub max_degree: usize,
    pub max_arity: usize,
    pub max_q: u32,
    pub a1: A1Report,
    pub a2: A2Report,
    pub a3: A3Report,
    /// Lookup and preimage sampling are table-backed, so this always holds.
    pub a4: bool,
    pub zeta: Vec<f64>,
    /// `ln Δ + ln q + ln k`; κ must stay within an unspecified constant multiple of it.
    pub kappa_scale: f64,
    /// `e·b·Δ <= 1`, the hypothesis of the conditional marginal bound.
    pub marginal_bound_regime: bool,
}

impl AdmissibilityReport {
    pub fn admissible(&self) -> bool {
        self.a1.pass && self.a2.pass && self.a3.pass && self.a4
    }

    pub fn summary(&self) -> String {
        let mark = |p: bool| if p { "pass" } else { "FAIL" };
        format!(
            "A1 {} (b={:.3e} vs {:.3e}), A2 {}, A3 {} (max ratio {:.3}), A4 {}",
            mark(self.a1.pass),
            self.a1.b,
            self.a1.bound,
            mark(self.a2.pass),
            mark(self.a3.pass),
            self.a3.max_ratio,
            mark(self.a4)
        )
    }
}

/// Evaluates (A1)-(A4) for `scheme` with parameter `eta`. Failures are
/// reported, never raised; a variable-count mismatch is the only error.
pub fn check_admissibility(
    csp: &AtomicCsp,
    scheme: &ProjectionScheme,
    eta: f64,
) -> Result<AdmissibilityReport, ProjectionError> {
    let bvals = compute_b(csp, scheme)?;
    let stats = csp.degree_stats();
    let delta = stats.max_degree;
    let delta_f = delta.max(1) as f64;
    let b = bvals.b;

    let a1 = check_a1(csp, scheme, &bvals, eta, delta);

    let in_regime = std::f64::consts::E * b * delta as f64 <= 1.0;
    let zeta = if in_regime {
        zeta_values(csp, scheme, b, delta)
    } else {
        vec![f64::NAN; csp.num_constraints()]
    };

    let kappa = scheme.kappa();
    let floor = kappa_floor(delta);
    let kappa_ok = kappa >= floor;
    let log_rhs = -2.0 * (60000.0 * delta_f).ln();
    let mut log_lhs = Vec::with_capacity(csp.num_constraints());
    let mut note = None;
    let mut a2_pass = kappa_ok;
    let mut worst: Option<(usize, f64)> = None;
    if !in_regime {
        note = Some("e*b*Delta > 1: zeta and (1-3b)^-Delta are undefined".to_string());
        a2_pass = false;
        log_lhs.resize(csp.num_constraints(), None);
    } else if 3.0 * b >= 1.0 {
        note = Some("3b >= 1: (1-3b)^-Delta is not a valid inflation factor".to_string());
        a2_pass = false;
        log_lhs.resize(csp.num_constraints(), None);
    } else {
        let log_inflate = -(delta as f64) * (1.0 - 3.0 * b).ln();
        let tail = (-kappa / 3.0).exp();
        for (cid, c) in csp.constraints().iter().enumerate() {
            let free: Vec<(usize, u32)> = c.entries().filter(|&(v, _)| scheme.q_size(v) > 1).collect();
            if free.is_empty() {
                log_lhs.push(None);
                continue;
            }
            let mut sum = NeumaierSum::default();
            sum.add(2.0 * (free.len() as f64).ln());
            sum.add(2.0 * kappa.ln());
            sum.add(zeta[cid].ln());
            for &(v, f) in &free {
                let p = scheme.forbidden_marginal(v, f);
                sum.add((log_inflate.exp() * p + tail).ln());
            }
            let value = sum.total();
            if value > log_rhs {
                a2_pass = false;
            }
            if worst.is_none_or(|(_, w)| value > w) {
                worst = Some((cid, value));
            }
            log_lhs.push(Some(value));
        }
    }
    let a2 = A2Report {
        pass: a2_pass,
        kappa,
        kappa_floor: floor,
        kappa_ok,
        log_rhs,
        log_lhs,
        worst_constraint: worst.map(|(c, _)| c),
        note,
    };

    let a3 = check_a3(csp, scheme);
    let max_q = scheme.partitions().iter().map(|p| p.num_blocks()).max().unwrap_or(0);
    let kappa_scale = delta_f.ln() + (max_q.max(1) as f64).ln() + (stats.max_arity.max(1) as f64).ln();

    Ok(AdmissibilityReport {
        case: scheme.case(),
        eta,
        max_degree: delta,
        max_arity: stats.max_arity,
        max_q,
        a1,
        a2,
        a3,
        a4: true,
        zeta,
        kappa_scale,
        marginal_bound_regime: in_regime,
    })
}

const EXACT_MAX_ARITY: usize = 64;
const EXACT_MAX_ALPHABET: u32 = 1 << 16;

fn check_a1(csp: &AtomicCsp, scheme: &ProjectionScheme, bvals: &BValues, eta: f64, delta: usize) -> A1Report {
    let bound = if delta == 0 { f64::INFINITY } else { eta / (300.0 * delta as f64) };
    let exact_ok = csp.alphabets().iter().all(|&a| a <= EXACT_MAX_ALPHABET)
        && csp.constraints().iter().all(|c| c.arity() <= EXACT_MAX_ARITY);
    let pass = if delta == 0 {
        true
    } else if exact_ok {
        // b(C) <= η/(300Δ)  <=>  300Δ <= η · ∏ block sizes
        match BigRational::from_float(eta) {
            Some(eta_q) => {
                let lhs = BigRational::from_integer(BigInt::from(300u64 * delta as u64));
                (0..csp.num_constraints()).all(|cid| {
                    let inv_b = BigRational::from_integer(inverse_b_exact(csp, scheme, cid));
                    lhs <= &eta_q * inv_b
                })
            }
            None => false,
        }
    } else {
        let log_bound = bound.ln();
        bvals.log_per_constraint.iter().all(|&l| l <= log_bound)
    };
    A1Report {
        pass,
        b: bvals.b,
        bound,
        exact: exact_ok && delta > 0,
    }
}

fn check_a3(csp: &AtomicCsp, scheme: &ProjectionScheme) -> A3Report {
    let mut max_ratio = 1.0f64;
    let mut worst_var = None;
    let mut pass = true;
    for v in 0..csp.num_vars() {
        let sizes = csp.incident(v).iter().map(|&(cid, pos)| {
            let f = csp.constraint(cid).forbidden()[pos];
            scheme.forbidden_block_size(v, f)
        });
        let (lo, hi) = sizes.fold((u32::MAX, 0u32), |(lo, hi), s| (lo.min(s), hi.max(s)));
        if hi == 0 {
            continue;
        }
        // Same alphabet on both sides, so block sizes compare like marginals.
        if hi > 2 * lo {
            pass = false;
        }
        let ratio = hi as f64 / lo as f64;
        if ratio > max_ratio {
            max_ratio = ratio;
            worst_var = Some(v);
        }
    }
    A3Report {
        pass,
        max_ratio,
        worst_var,
    }
}
