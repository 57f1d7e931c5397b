//! Boolean combinations of linear integer constraints: the output language
//! of the synthesizer. Provides evaluation, negation-normal form with
//! integer-tight complements, conjunction views for core extraction,
//! implication-based simplification, a canonical text form, and conversion
//! to and from the imperative language's Boolean expressions.

use crate::interp::State;
use crate::lang::{BoolExpr, CmpOp, IntExpr, IntOp};
use crate::polylib::{rat, sat_rat, LinAtom, LinTerm, Polyhedron, Rational, Rel};
use num_traits::{Signed, Zero};
use std::collections::BTreeSet;
use thiserror::Error;

/// Boolean combination of linear atoms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Blia {
    True,
    False,
    Atom(LinAtom),
    Not(Box<Blia>),
    And(Vec<Blia>),
    Or(Vec<Blia>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BliaError {
    #[error("variable '{0}' has no value")]
    MissingVar(String),
    #[error("expression is not linear: {0}")]
    NonLinear(String),
    #[error("coefficient exceeds the 64-bit range")]
    CoefficientRange,
    #[error("parse error: {0}")]
    Parse(#[from] crate::lang::ParseError),
}

impl Blia {
    /// Conjunction with unit rules: empty lists collapse to `true`,
    /// singletons unwrap, nested conjunctions flatten.
    pub fn conj(items: Vec<Blia>) -> Blia {
        let mut flat = Vec::new();
        for item in items {
            match item {
                Blia::True => {}
                Blia::False => return Blia::False,
                Blia::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Blia::True,
            1 => flat.pop().expect("len checked"),
            _ => Blia::And(flat),
        }
    }

    /// Disjunction with unit rules, dual to [`Blia::conj`].
    pub fn disj(items: Vec<Blia>) -> Blia {
        let mut flat = Vec::new();
        for item in items {
            match item {
                Blia::False => {}
                Blia::True => return Blia::True,
                Blia::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Blia::False,
            1 => flat.pop().expect("len checked"),
            _ => Blia::Or(flat),
        }
    }

    pub fn atom_count(&self) -> usize {
        match self {
            Blia::True | Blia::False => 0,
            Blia::Atom(_) => 1,
            Blia::Not(inner) => inner.atom_count(),
            Blia::And(items) | Blia::Or(items) => items.iter().map(Blia::atom_count).sum(),
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_atoms(&mut |a| out.extend(a.term.vars().cloned()));
        out
    }

    fn visit_atoms(&self, f: &mut impl FnMut(&LinAtom)) {
        match self {
            Blia::True | Blia::False => {}
            Blia::Atom(a) => f(a),
            Blia::Not(inner) => inner.visit_atoms(f),
            Blia::And(items) | Blia::Or(items) => {
                for i in items {
                    i.visit_atoms(f);
                }
            }
        }
    }
}

/// Standard evaluation over a total integer state.
pub fn eval_blia(b: &Blia, state: &State) -> Result<bool, BliaError> {
    match b {
        Blia::True => Ok(true),
        Blia::False => Ok(false),
        Blia::Not(inner) => Ok(!eval_blia(inner, state)?),
        Blia::And(items) => {
            for i in items {
                if !eval_blia(i, state)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Blia::Or(items) => {
            for i in items {
                if eval_blia(i, state)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Blia::Atom(a) => {
            for v in a.term.vars() {
                if !state.contains_key(v) {
                    return Err(BliaError::MissingVar(v.clone()));
                }
            }
            Ok(a.holds_int(state))
        }
    }
}

/// Complement of an atom over the integers. Coefficients are integral by
/// canonicalization, so the strict complement tightens to a closed bound:
/// `¬(t <= 0)` becomes `t >= 1` and `¬(t = 0)` becomes `t <= -1 ∨ t >= 1`.
fn negate_atom(a: &LinAtom) -> Blia {
    let below = LinAtom::new(a.term.add_const(rat(1)), Rel::Le); // t <= -1
    let above = LinAtom::new(a.term.neg().add_const(rat(1)), Rel::Le); // t >= 1
    match a.rel {
        Rel::Eq => Blia::disj(vec![Blia::Atom(below), Blia::Atom(above)]),
        Rel::Le => Blia::Atom(above),
        // ¬(t < 0) over the integers: t >= 0
        Rel::Lt => Blia::Atom(LinAtom::new(a.term.neg(), Rel::Le)),
    }
}

/// Negation-normal form: negation is pushed to the leaves and then rewritten
/// away entirely using integer complements, so the result is negation-free.
pub fn nnf(b: &Blia) -> Blia {
    fn walk(b: &Blia, positive: bool) -> Blia {
        match (b, positive) {
            (Blia::True, true) | (Blia::False, false) => Blia::True,
            (Blia::True, false) | (Blia::False, true) => Blia::False,
            (Blia::Atom(a), true) => {
                if a.is_trivially_true() {
                    Blia::True
                } else if a.is_trivially_false() {
                    Blia::False
                } else {
                    Blia::Atom(a.clone())
                }
            }
            (Blia::Atom(a), false) => {
                if a.is_trivially_true() {
                    Blia::False
                } else if a.is_trivially_false() {
                    Blia::True
                } else {
                    negate_atom(a)
                }
            }
            (Blia::Not(inner), pos) => walk(inner, !pos),
            (Blia::And(items), true) | (Blia::Or(items), false) => {
                Blia::conj(items.iter().map(|i| walk(i, positive)).collect())
            }
            (Blia::Or(items), true) | (Blia::And(items), false) => {
                Blia::disj(items.iter().map(|i| walk(i, positive)).collect())
            }
        }
    }
    walk(b, true)
}

/// The atom list of a pure conjunction (after normalization); `None` when
/// the formula has disjunctive structure.
pub fn conj_atoms(b: &Blia) -> Option<Vec<LinAtom>> {
    match nnf(b) {
        Blia::True => Some(Vec::new()),
        Blia::Atom(a) => Some(vec![a]),
        Blia::And(items) => {
            let mut atoms = Vec::new();
            for i in items {
                match i {
                    Blia::Atom(a) => atoms.push(a),
                    _ => return None,
                }
            }
            Some(atoms)
        }
        _ => None,
    }
}

/// Removes duplicate and rationally implied atoms inside conjunctions and
/// drops unsatisfiable disjuncts. Sound over the integers (rational
/// implication of integer atoms is integer implication); never returns more
/// atoms than [`nnf`] of the input.
pub fn simplify(b: &Blia) -> Blia {
    let n = nnf(b);
    let local = simplify_local(&n);
    if let Some(cubes) = to_dnf(&n, 64) {
        let candidate = rebuild_dnf(simplify_cubes(cubes));
        if candidate.atom_count() <= local.atom_count() {
            return candidate;
        }
    }
    local
}

/// Structure-preserving cleanup: per-conjunction atom pruning, unit rules,
/// unsatisfiable-branch elimination. Never duplicates an atom.
fn simplify_local(b: &Blia) -> Blia {
    match b {
        Blia::True | Blia::False => b.clone(),
        Blia::Not(inner) => Blia::Not(Box::new(simplify_local(inner))),
        Blia::Atom(a) => {
            if a.is_trivially_true() {
                Blia::True
            } else if a.is_trivially_false() {
                Blia::False
            } else {
                b.clone()
            }
        }
        Blia::Or(items) => Blia::disj(items.iter().map(simplify_local).collect()),
        Blia::And(items) => {
            let mut atoms: Vec<LinAtom> = Vec::new();
            let mut rest: Vec<Blia> = Vec::new();
            for i in items {
                match simplify_local(i) {
                    Blia::True => {}
                    Blia::False => return Blia::False,
                    Blia::Atom(a) => {
                        if !atoms.contains(&a) {
                            atoms.push(a);
                        }
                    }
                    other => rest.push(other),
                }
            }
            let atoms = prune_conjunction(atoms);
            if atoms.iter().any(|a| a.is_trivially_false()) {
                return Blia::False;
            }
            let mut out: Vec<Blia> = atoms.into_iter().map(Blia::Atom).collect();
            out.extend(rest);
            Blia::conj(out)
        }
    }
}

/// Within a satisfiable conjunction, drops atoms implied by their siblings;
/// an unsatisfiable conjunction collapses to a single false marker.
fn prune_conjunction(atoms: Vec<LinAtom>) -> Vec<LinAtom> {
    if atoms.is_empty() {
        return atoms;
    }
    if sat_rat(&Polyhedron::new(atoms.clone())).is_none() {
        // collapse to a single false marker (1 <= 0)
        return vec![LinAtom::new(LinTerm::constant(rat(1)), Rel::Le)];
    }
    let mut kept = atoms;
    let mut i = 0;
    while i < kept.len() {
        let candidate = kept[i].clone();
        let others: Vec<LinAtom> = kept
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, a)| a.clone())
            .collect();
        let implied = candidate.negations().iter().all(|neg| {
            let mut sys = others.clone();
            sys.push(neg.clone());
            sat_rat(&Polyhedron::new(sys)).is_none()
        });
        if implied {
            kept.remove(i);
        } else {
            i += 1;
        }
    }
    kept
}

/// Disjunctive normal form as cubes of atoms, or `None` past the cube cap.
/// The input must be negation-free.
fn to_dnf(b: &Blia, cap: usize) -> Option<Vec<Vec<LinAtom>>> {
    match b {
        Blia::True => Some(vec![Vec::new()]),
        Blia::False => Some(Vec::new()),
        Blia::Atom(a) => Some(vec![vec![a.clone()]]),
        Blia::Not(_) => None,
        Blia::Or(items) => {
            let mut cubes = Vec::new();
            for i in items {
                cubes.extend(to_dnf(i, cap)?);
                if cubes.len() > cap {
                    return None;
                }
            }
            Some(cubes)
        }
        Blia::And(items) => {
            let mut cubes: Vec<Vec<LinAtom>> = vec![Vec::new()];
            for i in items {
                let sub = to_dnf(i, cap)?;
                let mut next = Vec::with_capacity(cubes.len() * sub.len().max(1));
                for c in &cubes {
                    for s in &sub {
                        let mut merged = c.clone();
                        merged.extend(s.iter().cloned());
                        next.push(merged);
                    }
                }
                if next.len() > cap {
                    return None;
                }
                cubes = next;
            }
            Some(cubes)
        }
    }
}

fn simplify_cubes(cubes: Vec<Vec<LinAtom>>) -> Vec<Vec<LinAtom>> {
    let mut out: Vec<Vec<LinAtom>> = Vec::new();
    for cube in cubes {
        let mut atoms: Vec<LinAtom> = Vec::new();
        for a in cube {
            if !atoms.contains(&a) {
                atoms.push(a);
            }
        }
        if sat_rat(&Polyhedron::new(atoms.clone())).is_none() {
            continue;
        }
        let atoms = prune_conjunction(atoms);
        if !out.contains(&atoms) {
            out.push(atoms);
        }
    }
    out
}

fn rebuild_dnf(cubes: Vec<Vec<LinAtom>>) -> Blia {
    Blia::disj(
        cubes
            .into_iter()
            .map(|cube| Blia::conj(cube.into_iter().map(Blia::Atom).collect()))
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// canonical text

/// Canonical text: atoms as `(0 >= (term))`, `(0 == (term))`, `(0 > (term))`
/// with variables alphabetical and the constant last; conjunction and
/// disjunction parenthesized infix. Parses back via [`parse_blia`].
pub fn blia_text(b: &Blia) -> String {
    match b {
        Blia::True => "true".to_string(),
        Blia::False => "false".to_string(),
        Blia::Not(inner) => format!("!{}", blia_text(inner)),
        Blia::Atom(a) => {
            let rel = match a.rel {
                Rel::Eq => "==",
                Rel::Le => ">=",
                Rel::Lt => ">",
            };
            format!("(0 {rel} ({}))", term_text(&a.term))
        }
        Blia::And(items) => {
            let parts: Vec<String> = items.iter().map(blia_text).collect();
            format!("({})", parts.join(" && "))
        }
        Blia::Or(items) => {
            let parts: Vec<String> = items.iter().map(blia_text).collect();
            format!("({})", parts.join(" || "))
        }
    }
}

fn term_text(t: &LinTerm) -> String {
    let mut out = String::new();
    let mut first = true;
    let mut piece = |coeff: &Rational, body: Option<&str>, out: &mut String| {
        if coeff.is_zero() {
            return;
        }
        let mag = coeff.abs();
        let sign = coeff.is_negative();
        if first {
            if sign {
                out.push('-');
            }
            first = false;
        } else if sign {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        match body {
            Some(v) => {
                if mag == rat(1) {
                    out.push_str(v);
                } else {
                    out.push_str(&format!("{mag}*{v}"));
                }
            }
            None => out.push_str(&mag.to_string()),
        }
    };
    let vars: Vec<String> = t.vars().cloned().collect();
    for v in &vars {
        piece(&t.coeff(v), Some(v), &mut out);
    }
    piece(t.constant_part(), None, &mut out);
    if out.is_empty() {
        out.push('0');
    }
    out
}

// ---------------------------------------------------------------------------
// conversions

fn linearize(e: &IntExpr) -> Result<LinTerm, BliaError> {
    match e {
        IntExpr::Const(c) => Ok(LinTerm::constant(rat(*c))),
        IntExpr::Var(v) => Ok(LinTerm::var(v)),
        IntExpr::Neg(inner) => Ok(linearize(inner)?.neg()),
        IntExpr::Bin(IntOp::Add, a, b) => Ok(linearize(a)?.add(&linearize(b)?)),
        IntExpr::Bin(IntOp::Sub, a, b) => Ok(linearize(a)?.sub(&linearize(b)?)),
        IntExpr::Bin(IntOp::Mul, a, b) => {
            let (ta, tb) = (linearize(a)?, linearize(b)?);
            if ta.is_constant() {
                Ok(tb.scale(ta.constant_part()))
            } else if tb.is_constant() {
                Ok(ta.scale(tb.constant_part()))
            } else {
                Err(BliaError::NonLinear(crate::lang::pretty_iexpr(e)))
            }
        }
    }
}

/// Interprets a Boolean expression of the imperative language as a linear
/// constraint formula. Fails on nonlinear comparisons.
pub fn from_bexpr(e: &BoolExpr) -> Result<Blia, BliaError> {
    Ok(match e {
        BoolExpr::True => Blia::True,
        BoolExpr::False => Blia::False,
        BoolExpr::Not(inner) => Blia::Not(Box::new(from_bexpr(inner)?)),
        BoolExpr::And(a, b) => Blia::conj(vec![from_bexpr(a)?, from_bexpr(b)?]),
        BoolExpr::Or(a, b) => Blia::disj(vec![from_bexpr(a)?, from_bexpr(b)?]),
        BoolExpr::Cmp(op, a, b) => {
            let t = linearize(a)?.sub(&linearize(b)?);
            match op {
                CmpOp::Eq => Blia::Atom(LinAtom::new(t, Rel::Eq)),
                CmpOp::Ne => Blia::Not(Box::new(Blia::Atom(LinAtom::new(t, Rel::Eq)))),
                CmpOp::Lt => Blia::Atom(LinAtom::new(t, Rel::Lt)),
                CmpOp::Le => Blia::Atom(LinAtom::new(t, Rel::Le)),
                CmpOp::Gt => Blia::Atom(LinAtom::new(t.neg(), Rel::Lt)),
                CmpOp::Ge => Blia::Atom(LinAtom::new(t.neg(), Rel::Le)),
            }
        }
    })
}

fn coeff_i64(q: &Rational) -> Result<i64, BliaError> {
    if !q.is_integer() {
        return Err(BliaError::CoefficientRange);
    }
    i64::try_from(q.to_integer()).map_err(|_| BliaError::CoefficientRange)
}

fn term_iexpr(t: &LinTerm) -> Result<IntExpr, BliaError> {
    let mut acc: Option<IntExpr> = None;
    let extend = |acc: &mut Option<IntExpr>, mag: i64, piece: IntExpr, negative: bool| {
        let scaled = if mag == 1 {
            piece
        } else {
            IntExpr::Bin(IntOp::Mul, Box::new(IntExpr::Const(mag)), Box::new(piece))
        };
        *acc = Some(match acc.take() {
            None => {
                if negative {
                    IntExpr::Neg(Box::new(scaled))
                } else {
                    scaled
                }
            }
            Some(prev) => {
                let op = if negative { IntOp::Sub } else { IntOp::Add };
                IntExpr::Bin(op, Box::new(prev), Box::new(scaled))
            }
        });
    };
    let vars: Vec<String> = t.vars().cloned().collect();
    for v in &vars {
        let c = coeff_i64(&t.coeff(v))?;
        let mag = c.checked_abs().ok_or(BliaError::CoefficientRange)?;
        extend(&mut acc, mag, IntExpr::Var(v.clone()), c < 0);
    }
    let c0 = coeff_i64(t.constant_part())?;
    let mag0 = c0.checked_abs().ok_or(BliaError::CoefficientRange)?;
    if c0 != 0 || acc.is_none() {
        extend(&mut acc, 1, IntExpr::Const(mag0), c0 < 0);
    }
    Ok(acc.expect("at least the constant piece"))
}

/// Renders the formula as a Boolean expression of the imperative language,
/// shaped like the canonical text (`0 >= term`). Fails when a coefficient
/// falls outside the signed 64-bit range.
pub fn to_bexpr(b: &Blia) -> Result<BoolExpr, BliaError> {
    Ok(match b {
        Blia::True => BoolExpr::True,
        Blia::False => BoolExpr::False,
        Blia::Not(inner) => BoolExpr::Not(Box::new(to_bexpr(inner)?)),
        Blia::And(items) => {
            let mut acc: Option<BoolExpr> = None;
            for item in items {
                let p = to_bexpr(item)?;
                acc = Some(match acc {
                    None => p,
                    Some(prev) => BoolExpr::And(Box::new(prev), Box::new(p)),
                });
            }
            acc.expect("conj() keeps lists non-empty")
        }
        Blia::Or(items) => {
            let mut acc: Option<BoolExpr> = None;
            for item in items {
                let p = to_bexpr(item)?;
                acc = Some(match acc {
                    None => p,
                    Some(prev) => BoolExpr::Or(Box::new(prev), Box::new(p)),
                });
            }
            acc.expect("disj() keeps lists non-empty")
        }
        Blia::Atom(a) => {
            let op = match a.rel {
                Rel::Eq => CmpOp::Eq,
                Rel::Le => CmpOp::Ge,
                Rel::Lt => CmpOp::Gt,
            };
            BoolExpr::Cmp(op, IntExpr::Const(0), term_iexpr(&a.term)?)
        }
    })
}

/// Parses the canonical text form (or any linear Boolean expression over the
/// given variables) into a formula.
pub fn parse_blia(src: &str, vars: &[String]) -> Result<Blia, BliaError> {
    let e = crate::lang::parse_bexpr(src, vars)?;
    from_bexpr(&e)
}
