//! Atomic constraint satisfaction problems.
//!
//! Every constraint forbids exactly one joint value of its variables, so a
//! constraint is stored as the list of its variables together with the
//! forbidden value of each. Variables are `0..n` and the values of variable
//! `v` are `0..alphabet(v)`.

use serde::{Deserialize, Serialize};

use crate::error::CspError;

/// Full assignment: one value per variable.
pub type Assignment = Vec<u32>;

/// Partial assignment: `None` marks an unassigned variable.
pub type PartialAssignment = Vec<Option<u32>>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AtomicConstraint {
    vars: Vec<usize>,
    forbidden: Vec<u32>,
}

impl AtomicConstraint {
    pub fn new(vars: Vec<usize>, forbidden: Vec<u32>) -> Result<Self, CspError> {
        if vars.is_empty() {
            return Err(CspError::Invalid("constraint has no variables".into()));
        }
        if vars.len() != forbidden.len() {
            return Err(CspError::Invalid(format!(
                "constraint lists {} variables but {} forbidden values",
                vars.len(),
                forbidden.len()
            )));
        }
        let mut sorted = vars.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(CspError::Invalid(format!(
                "constraint repeats a variable: {vars:?}"
            )));
        }
        Ok(Self { vars, forbidden })
    }

    #[inline]
    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    #[inline]
    pub fn forbidden(&self) -> &[u32] {
        &self.forbidden
    }

    #[inline]
    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    /// Iterator over `(variable, forbidden value)` pairs.
    pub fn entries(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.vars.iter().copied().zip(self.forbidden.iter().copied())
    }

    /// The forbidden value at `var`, if `var` is in the scope.
    pub fn forbidden_at(&self, var: usize) -> Option<u32> {
        self.entries().find(|&(v, _)| v == var).map(|(_, f)| f)
    }

    /// True iff `x` restricted to the scope equals the forbidden vector.
    #[inline]
    pub fn violated_by(&self, x: &[u32]) -> bool {
        self.entries().all(|(v, f)| x[v] == f)
    }
}

/// Maximum degree, maximum arity and the per-constraint degree list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DegreeStats {
    /// Max over constraints of the number of constraints sharing a variable
    /// with it, itself included.
    pub max_degree: usize,
    pub max_arity: usize,
    pub degrees: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawCsp", into = "RawCsp")]
pub struct AtomicCsp {
    alphabets: Vec<u32>,
    constraints: Vec<AtomicConstraint>,
    /// `incidence[v]` lists `(constraint id, position of v in that constraint)`.
    incidence: Vec<Vec<(usize, usize)>>,
}

#[derive(Serialize, Deserialize)]
struct RawCsp {
    alphabets: Vec<u32>,
    constraints: Vec<AtomicConstraint>,
}

impl TryFrom<RawCsp> for AtomicCsp {
    type Error = CspError;

    fn try_from(raw: RawCsp) -> Result<Self, Self::Error> {
        // Re-run the constructor so deserialized constraints are validated too.
        let constraints = raw
            .constraints
            .into_iter()
            .map(|c| AtomicConstraint::new(c.vars, c.forbidden))
            .collect::<Result<Vec<_>, _>>()?;
        AtomicCsp::new(raw.alphabets, constraints)
    }
}

impl From<AtomicCsp> for RawCsp {
    fn from(csp: AtomicCsp) -> Self {
        RawCsp {
            alphabets: csp.alphabets,
            constraints: csp.constraints,
        }
    }
}

impl PartialEq for AtomicCsp {
    fn eq(&self, other: &Self) -> bool {
        self.alphabets == other.alphabets && self.constraints == other.constraints
    }
}

impl Eq for AtomicCsp {}

impl AtomicCsp {
    pub fn new(alphabets: Vec<u32>, constraints: Vec<AtomicConstraint>) -> Result<Self, CspError> {
        if let Some(v) = alphabets.iter().position(|&a| a < 2) {
            return Err(CspError::Invalid(format!(
                "variable {v} has alphabet size {} (need at least 2)",
                alphabets[v]
            )));
        }
        let n = alphabets.len();
        let mut incidence = vec![Vec::new(); n];
        for (cid, c) in constraints.iter().enumerate() {
            for (pos, (v, f)) in c.entries().enumerate() {
                if v >= n {
                    return Err(CspError::Invalid(format!(
                        "constraint {cid} mentions variable {v} but there are only {n}"
                    )));
                }
                if f >= alphabets[v] {
                    return Err(CspError::ValueOutOfRange {
                        var: v,
                        value: f,
                        size: alphabets[v],
                    });
                }
                incidence[v].push((cid, pos));
            }
        }
        Ok(Self {
            alphabets,
            constraints,
            incidence,
        })
    }

    /// An instance with `n` variables over the same alphabet.
    pub fn uniform(n: usize, alphabet: u32, constraints: Vec<AtomicConstraint>) -> Result<Self, CspError> {
        Self::new(vec![alphabet; n], constraints)
    }

    #[inline]
    pub fn num_vars(&self) -> usize {
        self.alphabets.len()
    }

    #[inline]
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    #[inline]
    pub fn alphabet(&self, v: usize) -> u32 {
        self.alphabets[v]
    }

    #[inline]
    pub fn alphabets(&self) -> &[u32] {
        &self.alphabets
    }

    #[inline]
    pub fn constraints(&self) -> &[AtomicConstraint] {
        &self.constraints
    }

    #[inline]
    pub fn constraint(&self, id: usize) -> &AtomicConstraint {
        &self.constraints[id]
    }

    /// Constraints whose scope contains `v`, with the position of `v`.
    #[inline]
    pub fn incident(&self, v: usize) -> &[(usize, usize)] {
        &self.incidence[v]
    }

    /// Number of full assignments, saturating at `u128::MAX`.
    pub fn state_space(&self) -> u128 {
        self.alphabets
            .iter()
            .try_fold(1u128, |acc, &a| acc.checked_mul(a as u128))
            .unwrap_or(u128::MAX)
    }

    /// Constraint ids sharing at least one variable with `cid` (itself included), sorted.
    pub fn neighbors(&self, cid: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.constraints[cid]
            .vars()
            .iter()
            .flat_map(|&v| self.incidence[v].iter().map(|&(c, _)| c))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn degree_stats(&self) -> DegreeStats {
        let m = self.constraints.len();
        let mut stamp = vec![usize::MAX; m];
        let mut degrees = Vec::with_capacity(m);
        for cid in 0..m {
            let mut deg = 0;
            for &v in self.constraints[cid].vars() {
                for &(other, _) in &self.incidence[v] {
                    if stamp[other] != cid {
                        stamp[other] = cid;
                        deg += 1;
                    }
                }
            }
            degrees.push(deg);
        }
        DegreeStats {
            max_degree: degrees.iter().copied().max().unwrap_or(0),
            max_arity: self.constraints.iter().map(|c| c.arity()).max().unwrap_or(0),
            degrees,
        }
    }

    /// Ids of the constraints violated by a full assignment.
    ///
    /// Fails if `x` has the wrong length, leaves a variable unassigned, or
    /// carries an out-of-range value.
    pub fn evaluate(&self, x: &[Option<u32>]) -> Result<Vec<usize>, CspError> {
        let full = self.complete(x)?;
        Ok(self.violations(&full))
    }

    /// Converts a partial assignment into a full one, if it is full.
    pub fn complete(&self, x: &[Option<u32>]) -> Result<Assignment, CspError> {
        self.check_len(x.len())?;
        x.iter()
            .enumerate()
            .map(|(v, val)| {
                let val = val.ok_or(CspError::PartialAssignment(v))?;
                self.check_value(v, val)?;
                Ok(val)
            })
            .collect()
    }

    /// Validates a full assignment's length and value ranges.
    pub fn check_assignment(&self, x: &[u32]) -> Result<(), CspError> {
        self.check_len(x.len())?;
        x.iter()
            .enumerate()
            .try_for_each(|(v, &val)| self.check_value(v, val))
    }

    fn check_len(&self, len: usize) -> Result<(), CspError> {
        if len != self.num_vars() {
            return Err(CspError::LengthMismatch {
                expected: self.num_vars(),
                got: len,
            });
        }
        Ok(())
    }

    fn check_value(&self, v: usize, val: u32) -> Result<(), CspError> {
        if val >= self.alphabets[v] {
            return Err(CspError::ValueOutOfRange {
                var: v,
                value: val,
                size: self.alphabets[v],
            });
        }
        Ok(())
    }

    /// Violated constraint ids of a full, already validated assignment.
    pub fn violations(&self, x: &[u32]) -> Vec<usize> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| c.violated_by(x))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_satisfied(&self, x: &[u32]) -> bool {
        !self.constraints.iter().any(|c| c.violated_by(x))
    }

    /// Constraints not yet satisfied by a partial assignment: every assigned
    /// variable of the scope sits at its forbidden value. A constraint with
    /// no assigned variable is included.
    pub fn violated_by_partial(&self, y: &[Option<u32>]) -> Vec<usize> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| c.entries().all(|(v, f)| y[v].is_none_or(|val| val == f)))
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(vars: &[usize], forbidden: &[u32]) -> AtomicConstraint {
        AtomicConstraint::new(vars.to_vec(), forbidden.to_vec()).unwrap()
    }

    #[test]
    fn constraint_validation() {
        assert!(AtomicConstraint::new(vec![], vec![]).is_err());
        assert!(AtomicConstraint::new(vec![0, 1], vec![0]).is_err());
        assert!(AtomicConstraint::new(vec![2, 2], vec![0, 1]).is_err());
        assert!(AtomicCsp::new(vec![2, 1], vec![]).is_err());
        assert!(AtomicCsp::new(vec![2, 2], vec![c(&[0, 1], &[0, 2])]).is_err());
        assert!(AtomicCsp::new(vec![2, 2], vec![c(&[0, 3], &[0, 1])]).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let empty = AtomicCsp::uniform(2, 2, vec![]).unwrap();
        assert!(empty.evaluate(&[Some(1), Some(0)]).unwrap().is_empty());

        let csp = AtomicCsp::uniform(2, 2, vec![c(&[0, 1], &[0, 1])]).unwrap();
        assert_eq!(csp.evaluate(&[Some(0), Some(1)]).unwrap(), vec![0]);
        assert!(csp.evaluate(&[Some(0), Some(0)]).unwrap().is_empty());
        assert!(matches!(
            csp.evaluate(&[Some(0), None]),
            Err(CspError::PartialAssignment(1))
        ));
        assert!(csp.evaluate(&[Some(0)]).is_err());
        assert!(csp.evaluate(&[Some(0), Some(2)]).is_err());
    }

    #[test]
    fn degree_examples() {
        let one = AtomicCsp::uniform(3, 2, vec![c(&[0, 1, 2], &[0, 0, 0])]).unwrap();
        let s = one.degree_stats();
        assert_eq!((s.max_degree, s.max_arity), (1, 3));

        let disjoint = AtomicCsp::uniform(4, 2, vec![c(&[0, 1], &[0, 0]), c(&[2, 3], &[1, 1])]).unwrap();
        assert_eq!(disjoint.degree_stats().max_degree, 1);

        let hub = AtomicCsp::uniform(
            4,
            2,
            vec![c(&[0, 1], &[0, 0]), c(&[0, 2], &[1, 1]), c(&[0, 3], &[0, 1])],
        )
        .unwrap();
        let s = hub.degree_stats();
        assert_eq!(s.max_degree, 3);
        assert_eq!(s.degrees, vec![3, 3, 3]);

        let empty = AtomicCsp::uniform(3, 2, vec![]).unwrap();
        let s = empty.degree_stats();
        assert_eq!((s.max_degree, s.max_arity), (0, 0));
    }

    #[test]
    fn violated_by_partial_examples() {
        let csp = AtomicCsp::uniform(2, 2, vec![c(&[0, 1], &[1, 1])]).unwrap();
        assert!(csp.violated_by_partial(&[Some(0), Some(0)]).is_empty());
        assert_eq!(csp.violated_by_partial(&[None, None]), vec![0]);
        assert_eq!(csp.violated_by_partial(&[Some(1), None]), vec![0]);
        assert!(csp.violated_by_partial(&[Some(0), None]).is_empty());
    }

    #[test]
    fn json_roundtrip_revalidates() {
        let csp = AtomicCsp::uniform(3, 3, vec![c(&[0, 2], &[2, 1])]).unwrap();
        let text = serde_json::to_string(&csp).unwrap();
        let back: AtomicCsp = serde_json::from_str(&text).unwrap();
        assert_eq!(back, csp);
        assert_eq!(back.incident(2), &[(0, 1)]);

        let bad = r#"{"alphabets":[2,2],"constraints":[{"vars":[0,0],"forbidden":[0,0]}]}"#;
        assert!(serde_json::from_str::<AtomicCsp>(bad).is_err());
    }
}
