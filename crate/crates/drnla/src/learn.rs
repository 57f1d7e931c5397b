//! Dynamic learning of candidate linear invariants from concrete states:
//! affine equalities via null spaces, octagonal inequalities via tight
//! sample bounds. Every returned atom holds on every sample by construction.

use crate::interp::State;
use crate::polylib::{nullspace_int, sat_rat, LinAtom, LinTerm, Polyhedron, Rational, Rel};
use num_bigint::BigInt;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LearnError {
    #[error("cannot learn from an empty sample set")]
    EmptySampleSet,
}

/// Variable-ordered collection of deduplicated sample states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    vars: Vec<String>,
    rows: BTreeSet<State>,
}

impl SampleSet {
    /// Restricts every state to `vars`; all states must cover them.
    pub fn new(vars: Vec<String>, states: impl IntoIterator<Item = State>) -> SampleSet {
        let rows = states
            .into_iter()
            .map(|s| {
                vars.iter()
                    .map(|v| {
                        let x = *s.get(v).unwrap_or_else(|| panic!("sample misses '{v}'"));
                        (v.clone(), x)
                    })
                    .collect()
            })
            .collect();
        SampleSet { vars, rows }
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn rows(&self) -> impl Iterator<Item = &State> {
        self.rows.iter()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn big(v: i128) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// Affine equalities holding on every sample, as canonical integer atoms.
pub fn learn_equalities(s: &SampleSet) -> Vec<LinAtom> {
    assert!(!s.is_empty(), "need at least one sample");
    let rows: Vec<State> = s.rows().cloned().collect();
    nullspace_int(&rows, &s.vars)
        .into_iter()
        .map(|t| LinAtom::new(t, Rel::Eq))
        .collect()
}

/// Tight octagonal bounds: extremes of `±x` and `±x ± y` over the samples,
/// each attained by some sample, emitted as `<=`-atoms.
pub fn learn_octagons(s: &SampleSet) -> Vec<LinAtom> {
    assert!(!s.is_empty(), "need at least one sample");
    let mut out = Vec::new();
    // terms map each row to a value; bound both extremes of each
    let mut push_bounds = |term: LinTerm, values: Vec<i128>| {
        let max = *values.iter().max().expect("non-empty samples");
        let min = *values.iter().min().expect("non-empty samples");
        // term <= max, min <= term
        out.push(LinAtom::new(term.add_const(big(-max)), Rel::Le));
        out.push(LinAtom::new(term.neg().add_const(big(min)), Rel::Le));
    };
    let column = |v: &String| -> Vec<i128> {
        s.rows().map(|row| row[v] as i128).collect()
    };
    for (i, x) in s.vars.iter().enumerate() {
        push_bounds(LinTerm::var(x), column(x));
        for y in &s.vars[i + 1..] {
            let xs = column(x);
            let ys = column(y);
            let sums = xs.iter().zip(&ys).map(|(a, b)| a + b).collect();
            push_bounds(LinTerm::var(x).add(&LinTerm::var(y)), sums);
            let diffs = xs.iter().zip(&ys).map(|(a, b)| a - b).collect();
            push_bounds(LinTerm::var(x).sub(&LinTerm::var(y)), diffs);
        }
    }
    let mut out: Vec<LinAtom> = out.into_iter().filter(|a| !a.is_trivially_true()).collect();
    out.sort();
    out.dedup();
    out
}

/// Combined candidates: equalities plus the octagonal bounds that the
/// equalities do not already imply over the rationals.
pub fn learn(s: &SampleSet) -> Result<Vec<LinAtom>, LearnError> {
    if s.is_empty() {
        return Err(LearnError::EmptySampleSet);
    }
    let equalities = learn_equalities(s);
    let eq_poly = Polyhedron::new(equalities.clone());
    let mut out = equalities;
    for oct in learn_octagons(s) {
        let implied = oct.negations().iter().all(|neg| {
            let mut sys = eq_poly.atoms().to_vec();
            sys.push(neg.clone());
            sat_rat(&Polyhedron::new(sys)).is_none()
        });
        if !implied {
            out.push(oct);
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}
