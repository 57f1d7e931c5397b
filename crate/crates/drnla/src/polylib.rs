//! Exact rational linear arithmetic: null spaces for equality learning,
//! Fourier–Motzkin projection, simplex feasibility with witnesses,
//! deletion-based unsatisfiable cores, and convex hulls of unions of
//! polyhedra.
//!
//! Everything here is rational and exact. Rational unsatisfiability is sound
//! for integer states (no integer point can satisfy what no rational point
//! does), which is all the downstream filtering relies on; rational
//! satisfiability may admit integrally-infeasible witnesses such as `x = 1/2`
//! and callers that need integer points use [`find_int_model`].

use crate::interp::{InputBox, State};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// Arbitrary-precision rational, canonical by construction.
pub type Rational = BigRational;

pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolyError {
    #[error("integer model search exceeded its budget of {budget} candidates")]
    BudgetExceeded { budget: u64 },
}

/// Relation of a [`LinAtom`]: `term = 0`, `term <= 0`, or `term < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rel {
    Eq,
    Le,
    Lt,
}

/// Affine term: sum of variable coefficients plus a constant. Zero
/// coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LinTerm {
    coeffs: BTreeMap<String, Rational>,
    constant: Rational,
}

impl LinTerm {
    pub fn zero() -> LinTerm {
        LinTerm::default()
    }

    pub fn constant(c: Rational) -> LinTerm {
        LinTerm { coeffs: BTreeMap::new(), constant: c }
    }

    pub fn var(name: &str) -> LinTerm {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(name.to_string(), Rational::one());
        LinTerm { coeffs, constant: Rational::zero() }
    }

    pub fn coeff(&self, var: &str) -> Rational {
        self.coeffs.get(var).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn constant_part(&self) -> &Rational {
        &self.constant
    }

    pub fn vars(&self) -> impl Iterator<Item = &String> {
        self.coeffs.keys()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn set_coeff(&mut self, var: &str, c: Rational) {
        if c.is_zero() {
            self.coeffs.remove(var);
        } else {
            self.coeffs.insert(var.to_string(), c);
        }
    }

    pub fn add(&self, other: &LinTerm) -> LinTerm {
        let mut out = self.clone();
        for (v, c) in &other.coeffs {
            let sum = out.coeff(v) + c;
            out.set_coeff(v, sum);
        }
        out.constant += &other.constant;
        out
    }

    pub fn scale(&self, k: &Rational) -> LinTerm {
        if k.is_zero() {
            return LinTerm::zero();
        }
        LinTerm {
            coeffs: self.coeffs.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
            constant: &self.constant * k,
        }
    }

    pub fn sub(&self, other: &LinTerm) -> LinTerm {
        self.add(&other.scale(&-Rational::one()))
    }

    pub fn neg(&self) -> LinTerm {
        self.scale(&-Rational::one())
    }

    pub fn add_const(&self, c: Rational) -> LinTerm {
        let mut out = self.clone();
        out.constant += c;
        out
    }

    /// Substitutes `var := replacement` and drops the variable.
    pub fn substitute(&self, var: &str, replacement: &LinTerm) -> LinTerm {
        let c = self.coeff(var);
        if c.is_zero() {
            return self.clone();
        }
        let mut base = self.clone();
        base.coeffs.remove(var);
        base.add(&replacement.scale(&c))
    }

    pub fn eval_rat(&self, point: &BTreeMap<String, Rational>) -> Rational {
        let mut acc = self.constant.clone();
        for (v, c) in &self.coeffs {
            let x = point.get(v).cloned().unwrap_or_else(Rational::zero);
            acc += c * x;
        }
        acc
    }

    pub fn eval_int(&self, point: &State) -> Rational {
        let mut acc = self.constant.clone();
        for (v, c) in &self.coeffs {
            let x = point.get(v).copied().unwrap_or(0);
            acc += c * rat(x);
        }
        acc
    }

    /// Scales to coprime integer coefficients. The scale factor is positive,
    /// so inequalities keep their orientation; no sign normalization happens
    /// here.
    pub fn normalize_int(&self) -> LinTerm {
        let mut lcm = BigInt::one();
        for c in self.coeffs.values().chain(std::iter::once(&self.constant)) {
            lcm = lcm.lcm(c.denom());
        }
        let scaled = self.scale(&Rational::from_integer(lcm));
        let mut gcd = BigInt::zero();
        for c in scaled.coeffs.values().chain(std::iter::once(&scaled.constant)) {
            gcd = gcd.gcd(&c.numer().clone());
        }
        if gcd.is_zero() || gcd.is_one() {
            return scaled;
        }
        scaled.scale(&Rational::new(BigInt::one(), gcd))
    }

    /// Flips the sign so the first nonzero coefficient along `order` is
    /// positive; used to canonicalize equalities.
    pub fn orient(&self, order: &[String]) -> LinTerm {
        for v in order {
            let c = self.coeff(v);
            if !c.is_zero() {
                return if c.is_negative() { self.neg() } else { self.clone() };
            }
        }
        if self.constant.is_negative() {
            self.neg()
        } else {
            self.clone()
        }
    }
}

impl fmt::Display for LinTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if c.is_one() {
                write!(f, "{v}")?;
            } else {
                write!(f, "{c}*{v}")?;
            }
        }
        if first {
            write!(f, "{}", self.constant)?;
        } else if !self.constant.is_zero() {
            write!(f, " + {}", self.constant)?;
        }
        Ok(())
    }
}

/// Linear constraint `term REL 0`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinAtom {
    pub term: LinTerm,
    pub rel: Rel,
}

impl LinAtom {
    pub fn new(term: LinTerm, rel: Rel) -> LinAtom {
        LinAtom { term: term.normalize_int(), rel }
    }

    /// `lhs = rhs`
    pub fn eq(lhs: LinTerm, rhs: LinTerm) -> LinAtom {
        LinAtom::new(lhs.sub(&rhs), Rel::Eq)
    }

    /// `lhs <= rhs`
    pub fn le(lhs: LinTerm, rhs: LinTerm) -> LinAtom {
        LinAtom::new(lhs.sub(&rhs), Rel::Le)
    }

    /// `lhs < rhs`
    pub fn lt(lhs: LinTerm, rhs: LinTerm) -> LinAtom {
        LinAtom::new(lhs.sub(&rhs), Rel::Lt)
    }

    pub fn holds_value(&self, value: &Rational) -> bool {
        match self.rel {
            Rel::Eq => value.is_zero(),
            Rel::Le => !value.is_positive(),
            Rel::Lt => value.is_negative(),
        }
    }

    pub fn holds_rat(&self, point: &BTreeMap<String, Rational>) -> bool {
        self.holds_value(&self.term.eval_rat(point))
    }

    pub fn holds_int(&self, point: &State) -> bool {
        self.holds_value(&self.term.eval_int(point))
    }

    pub fn is_trivially_true(&self) -> bool {
        self.term.is_constant() && self.holds_value(&self.term.constant)
    }

    pub fn is_trivially_false(&self) -> bool {
        self.term.is_constant() && !self.holds_value(&self.term.constant)
    }

    /// Negation over the rationals: `¬(t = 0)` is not a single atom, so
    /// equalities return the two strict halves as a disjunction.
    pub fn negations(&self) -> Vec<LinAtom> {
        match self.rel {
            Rel::Eq => vec![
                LinAtom::new(self.term.clone(), Rel::Lt),
                LinAtom::new(self.term.neg(), Rel::Lt),
            ],
            Rel::Le => vec![LinAtom::new(self.term.neg(), Rel::Lt)],
            Rel::Lt => vec![LinAtom::new(self.term.neg(), Rel::Le)],
        }
    }
}

impl fmt::Display for LinAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = match self.rel {
            Rel::Eq => "=",
            Rel::Le => "<=",
            Rel::Lt => "<",
        };
        write!(f, "{} {} 0", self.term, rel)
    }
}

/// Conjunction of linear atoms in canonical sorted order, so equal
/// polyhedra compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Polyhedron {
    atoms: Vec<LinAtom>,
}

impl Polyhedron {
    /// Universe (empty conjunction).
    pub fn top() -> Polyhedron {
        Polyhedron::default()
    }

    pub fn new(atoms: Vec<LinAtom>) -> Polyhedron {
        let mut atoms: Vec<LinAtom> =
            atoms.into_iter().filter(|a| !a.is_trivially_true()).collect();
        atoms.sort();
        atoms.dedup();
        prune_parallel(&mut atoms);
        Polyhedron { atoms }
    }

    pub fn atoms(&self) -> &[LinAtom] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<LinAtom> {
        self.atoms
    }

    pub fn vars(&self) -> Vec<String> {
        let mut out: BTreeSet<String> = BTreeSet::new();
        for a in &self.atoms {
            out.extend(a.term.vars().cloned());
        }
        out.into_iter().collect()
    }

    pub fn has_trivially_false_atom(&self) -> bool {
        self.atoms.iter().any(|a| a.is_trivially_false())
    }

    pub fn holds_int(&self, point: &State) -> bool {
        self.atoms.iter().all(|a| a.holds_int(point))
    }

    pub fn holds_rat(&self, point: &BTreeMap<String, Rational>) -> bool {
        self.atoms.iter().all(|a| a.holds_rat(point))
    }

    pub fn and(&self, other: &Polyhedron) -> Polyhedron {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        Polyhedron::new(atoms)
    }
}

/// Collapses same-direction inequalities: among atoms sharing a coefficient
/// vector, `t + c <= 0` with the largest constant implies all the others, so
/// only the tightest survives (a strict atom wins ties). This keeps
/// Fourier–Motzkin intermediates from accumulating stacks of parallel
/// half-spaces. Equalities are left alone.
fn prune_parallel(atoms: &mut Vec<LinAtom>) {
    let mut tightest: BTreeMap<BTreeMap<String, Rational>, (Rational, Rel)> = BTreeMap::new();
    for a in atoms.iter() {
        if a.rel == Rel::Eq {
            continue;
        }
        let direction: BTreeMap<String, Rational> =
            a.term.vars().map(|v| (v.clone(), a.term.coeff(v))).collect();
        let c = a.term.constant_part().clone();
        match tightest.get_mut(&direction) {
            None => {
                tightest.insert(direction, (c, a.rel));
            }
            Some((best_c, best_rel)) => {
                if c > *best_c || (c == *best_c && a.rel == Rel::Lt) {
                    *best_c = c;
                    *best_rel = a.rel;
                }
            }
        }
    }
    atoms.retain(|a| {
        if a.rel == Rel::Eq {
            return true;
        }
        let direction: BTreeMap<String, Rational> =
            a.term.vars().map(|v| (v.clone(), a.term.coeff(v))).collect();
        let (best_c, best_rel) = &tightest[&direction];
        a.term.constant_part() == best_c && a.rel == *best_rel
    });
}

impl fmt::Display for Polyhedron {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return write!(f, "true");
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, " /\\ ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// null spaces

/// Integer-scaled basis of the linear relations `c0 + c1*x1 + … + cn*xn = 0`
/// holding on every sample, computed from the null space of the matrix with
/// rows `(1, x1, …, xn)`. Coefficients are coprime and the first nonzero
/// variable coefficient along `variables` is positive.
pub fn nullspace_int(samples: &[State], variables: &[String]) -> Vec<LinTerm> {
    assert!(!samples.is_empty(), "need at least one sample");
    let ncols = variables.len() + 1;
    let mut rows: Vec<Vec<Rational>> = samples
        .iter()
        .map(|s| {
            let mut row = Vec::with_capacity(ncols);
            row.push(Rational::one());
            for v in variables {
                row.push(rat(s.get(v).copied().unwrap_or(0)));
            }
            row
        })
        .collect();

    // Gauss-Jordan to reduced row echelon form.
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(pr) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, pr);
        let inv = rows[r][c].recip();
        for x in rows[r].iter_mut() {
            *x *= &inv;
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let factor = rows[i][c].clone();
                for c2 in 0..ncols {
                    let sub = &rows[r][c2] * &factor;
                    rows[i][c2] -= sub;
                }
            }
        }
        pivot_cols.push(c);
        r += 1;
        if r == rows.len() {
            break;
        }
    }

    let mut null_rows: Vec<Vec<Rational>> = Vec::new();
    for free in 0..ncols {
        if pivot_cols.contains(&free) {
            continue;
        }
        // null vector: free column gets 1, pivots absorb the negation
        let mut vec_coeffs = vec![Rational::zero(); ncols];
        vec_coeffs[free] = Rational::one();
        for (row_idx, &pc) in pivot_cols.iter().enumerate() {
            vec_coeffs[pc] = -rows[row_idx][free].clone();
        }
        null_rows.push(vec_coeffs);
    }

    // Canonicalize the relation space to reduced row echelon form with the
    // constant column last: each relation solves its earliest variable in
    // terms of later ones, so a relation between two non-pivot variables
    // (say c = k + 1) appears directly instead of hiding in a combination.
    let perm: Vec<usize> = (1..ncols).chain(std::iter::once(0)).collect();
    let mut r = 0;
    for &c in &perm {
        let Some(pr) = (r..null_rows.len()).find(|&i| !null_rows[i][c].is_zero()) else {
            continue;
        };
        null_rows.swap(r, pr);
        let inv = null_rows[r][c].recip();
        for x in null_rows[r].iter_mut() {
            *x *= &inv;
        }
        for i in 0..null_rows.len() {
            if i != r && !null_rows[i][c].is_zero() {
                let factor = null_rows[i][c].clone();
                for c2 in 0..ncols {
                    let sub = &null_rows[r][c2] * &factor;
                    null_rows[i][c2] -= sub;
                }
            }
        }
        r += 1;
        if r == null_rows.len() {
            break;
        }
    }

    let mut basis = Vec::new();
    for vec_coeffs in null_rows {
        let mut term = LinTerm::constant(vec_coeffs[0].clone());
        for (i, v) in variables.iter().enumerate() {
            term.set_coeff(v, vec_coeffs[i + 1].clone());
        }
        basis.push(term.normalize_int().orient(variables));
    }
    basis
}

// ---------------------------------------------------------------------------
// projection

/// Removes `var` from `p`, preserving the rational solution set of the
/// projection. An equality mentioning the variable is used for substitution
/// when available; otherwise upper and lower bounds are combined pairwise
/// (strict whenever either side is strict).
pub fn fm_project(p: &Polyhedron, var: &str) -> Polyhedron {
    fm_project_budget(p, var, usize::MAX).expect("unbudgeted projection cannot fail")
}

fn fm_project_budget(p: &Polyhedron, var: &str, budget: usize) -> Option<Polyhedron> {
    // substitution via an equality that mentions var
    if let Some(eq) = p
        .atoms
        .iter()
        .find(|a| a.rel == Rel::Eq && !a.term.coeff(var).is_zero())
    {
        // a*var + rest = 0  =>  var = -rest/a
        let a = eq.term.coeff(var);
        let mut rest = eq.term.clone();
        rest.set_coeff(var, Rational::zero());
        let replacement = rest.scale(&(-a.recip()));
        let atoms = p
            .atoms
            .iter()
            .filter(|other| *other != eq)
            .map(|other| LinAtom::new(other.term.substitute(var, &replacement), other.rel))
            .collect();
        return Some(Polyhedron::new(atoms));
    }

    let mut lower: Vec<&LinAtom> = Vec::new(); // negative coefficient on var
    let mut upper: Vec<&LinAtom> = Vec::new(); // positive coefficient on var
    let mut rest: Vec<LinAtom> = Vec::new();
    for a in &p.atoms {
        let c = a.term.coeff(var);
        if c.is_zero() {
            rest.push(a.clone());
        } else if c.is_positive() {
            upper.push(a);
        } else {
            lower.push(a);
        }
    }
    if rest.len().saturating_add(lower.len().saturating_mul(upper.len())) > budget {
        return None;
    }
    for up in &upper {
        for lo in &lower {
            // up: a*v + t1 REL 0 (a > 0), lo: -b*v + t2 REL 0 (b > 0)
            // combine: b*t1 + a*t2 REL 0, strict if either is
            let a = up.term.coeff(var);
            let b = -lo.term.coeff(var);
            let combined = up.term.scale(&b).add(&lo.term.scale(&a));
            let rel = if up.rel == Rel::Lt || lo.rel == Rel::Lt {
                Rel::Lt
            } else {
                Rel::Le
            };
            let atom = LinAtom::new(combined, rel);
            debug_assert!(atom.term.coeff(var).is_zero());
            rest.push(atom);
        }
    }
    Some(Polyhedron::new(rest))
}

// ---------------------------------------------------------------------------
// satisfiability

/// Value in the ordered field Q[δ] for a positive infinitesimal δ:
/// `c + k·δ`, ordered lexicographically. Strict bounds become closed bounds
/// shifted by δ — the standard device for deciding systems with strict
/// inequalities by simplex over closed sets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct DeltaRat {
    c: Rational,
    k: Rational,
}

impl DeltaRat {
    fn of(c: Rational) -> DeltaRat {
        DeltaRat { c, k: Rational::zero() }
    }

    fn strict(c: Rational) -> DeltaRat {
        DeltaRat { c, k: -Rational::one() }
    }

    fn zero() -> DeltaRat {
        DeltaRat::of(Rational::zero())
    }

    fn add(&self, other: &DeltaRat) -> DeltaRat {
        DeltaRat { c: &self.c + &other.c, k: &self.k + &other.k }
    }

    fn sub(&self, other: &DeltaRat) -> DeltaRat {
        DeltaRat { c: &self.c - &other.c, k: &self.k - &other.k }
    }

    fn scale(&self, f: &Rational) -> DeltaRat {
        DeltaRat { c: &self.c * f, k: &self.k * f }
    }

    /// Concretization at a specific positive rational δ.
    fn at(&self, delta: &Rational) -> Rational {
        &self.c + &self.k * delta
    }
}

fn tighten_upper(slot: &mut Option<DeltaRat>, b: DeltaRat) {
    if slot.as_ref().map_or(true, |cur| b < *cur) {
        *slot = Some(b);
    }
}

fn tighten_lower(slot: &mut Option<DeltaRat>, b: DeltaRat) {
    if slot.as_ref().map_or(true, |cur| b > *cur) {
        *slot = Some(b);
    }
}

/// Exact rational feasibility, decided by the bounded-variable simplex
/// method over Q[δ]. Returns a witness point on success, `None` when the
/// conjunction has no rational solution.
///
/// Each distinct variable part becomes a slack variable carrying the atom's
/// bounds (strict atoms shift theirs by the infinitesimal); program
/// variables stay free. Pivot selection follows Bland's rule, which cannot
/// cycle. A satisfying δ-assignment concretizes to rationals by choosing δ
/// below every bound's remaining margin.
pub fn sat_rat(p: &Polyhedron) -> Option<BTreeMap<String, Rational>> {
    if p.has_trivially_false_atom() {
        return None;
    }
    let vars = p.vars();
    let nv = vars.len();
    let index: BTreeMap<&str, usize> =
        vars.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();

    // one slack per distinct variable part, with merged bounds
    let mut form_of: BTreeMap<Vec<Rational>, usize> = BTreeMap::new();
    let mut forms: Vec<Vec<Rational>> = Vec::new();
    let mut slack_lo: Vec<Option<DeltaRat>> = Vec::new();
    let mut slack_hi: Vec<Option<DeltaRat>> = Vec::new();
    for a in &p.atoms {
        if a.term.is_constant() {
            // trivially-true atoms never reach storage, so a constant atom
            // here is false
            return None;
        }
        let mut dense = vec![Rational::zero(); nv];
        for v in a.term.vars() {
            dense[index[v.as_str()]] = a.term.coeff(v);
        }
        let s = *form_of.entry(dense.clone()).or_insert_with(|| {
            forms.push(dense);
            slack_lo.push(None);
            slack_hi.push(None);
            forms.len() - 1
        });
        let b = -a.term.constant_part().clone();
        match a.rel {
            Rel::Le => tighten_upper(&mut slack_hi[s], DeltaRat::of(b)),
            Rel::Lt => tighten_upper(&mut slack_hi[s], DeltaRat::strict(b)),
            Rel::Eq => {
                tighten_upper(&mut slack_hi[s], DeltaRat::of(b.clone()));
                tighten_lower(&mut slack_lo[s], DeltaRat::of(b));
            }
        }
    }

    // variables 0..nv are the free program variables, nv.. the slacks
    let total = nv + forms.len();
    let mut lo: Vec<Option<DeltaRat>> = vec![None; nv];
    let mut hi: Vec<Option<DeltaRat>> = vec![None; nv];
    lo.extend(slack_lo);
    hi.extend(slack_hi);
    for x in 0..total {
        if let (Some(l), Some(h)) = (&lo[x], &hi[x]) {
            if l > h {
                return None;
            }
        }
    }

    // tableau rows define the basic variables; initially slack s = its form
    let mut rows: Vec<Vec<Rational>> = forms
        .into_iter()
        .map(|mut f| {
            f.resize(total, Rational::zero());
            f
        })
        .collect();
    let mut basic_of: Vec<usize> = (nv..total).collect();
    let mut row_of: Vec<Option<usize>> = vec![None; total];
    for (r, &x) in basic_of.iter().enumerate() {
        row_of[x] = Some(r);
    }
    let mut vals: Vec<DeltaRat> = vec![DeltaRat::zero(); total];

    loop {
        // Bland's rule: smallest-index basic variable out of bounds
        let mut pick: Option<(usize, usize, bool, DeltaRat)> = None;
        for (r, &x) in basic_of.iter().enumerate() {
            let violation = if matches!(&lo[x], Some(l) if vals[x] < *l) {
                Some((true, lo[x].clone().expect("just matched")))
            } else if matches!(&hi[x], Some(h) if vals[x] > *h) {
                Some((false, hi[x].clone().expect("just matched")))
            } else {
                None
            };
            if let Some((increase, target)) = violation {
                if pick.as_ref().map_or(true, |(px, ..)| x < *px) {
                    pick = Some((x, r, increase, target));
                }
            }
        }
        let Some((leaving, r, increase, target)) = pick else { break };

        // smallest-index nonbasic variable whose move repairs the violation
        let mut entering: Option<usize> = None;
        for j in 0..total {
            if row_of[j].is_some() {
                continue;
            }
            let a = &rows[r][j];
            if a.is_zero() {
                continue;
            }
            let moves_up = a.is_positive() == increase;
            let can = if moves_up {
                hi[j].as_ref().map_or(true, |h| vals[j] < *h)
            } else {
                lo[j].as_ref().map_or(true, |l| vals[j] > *l)
            };
            if can {
                entering = Some(j);
                break;
            }
        }
        let Some(j) = entering else { return None };

        // the entering variable absorbs the change; the leaving variable
        // lands exactly on its violated bound and becomes nonbasic
        let a = rows[r][j].clone();
        let theta = target.sub(&vals[leaving]).scale(&a.recip());
        vals[leaving] = target;
        vals[j] = vals[j].add(&theta);
        for (k, &x) in basic_of.iter().enumerate() {
            if k != r && !rows[k][j].is_zero() {
                vals[x] = vals[x].add(&theta.scale(&rows[k][j]));
            }
        }
        pivot(&mut rows, &mut basic_of, &mut row_of, r, j);
    }

    // concretize: pick δ small enough that every bound keeps its margin
    let mut delta = Rational::one();
    for x in 0..total {
        if let Some(l) = &lo[x] {
            shrink_delta(&mut delta, &vals[x].sub(l));
        }
        if let Some(h) = &hi[x] {
            shrink_delta(&mut delta, &h.sub(&vals[x]));
        }
    }
    let point: BTreeMap<String, Rational> =
        vars.into_iter().enumerate().map(|(i, v)| (v, vals[i].at(&delta))).collect();
    debug_assert!(p.holds_rat(&point), "witness must satisfy the system");
    Some(point)
}

/// Shrinks `delta` so the margin `m`, known to be ≥ 0 in Q[δ], stays
/// nonnegative after concretization: `m.c + m.k·δ ≥ 0`.
fn shrink_delta(delta: &mut Rational, m: &DeltaRat) {
    if m.k.is_negative() && m.c.is_positive() {
        let cap = -(&m.c / &m.k);
        if cap < *delta {
            *delta = cap;
        }
    }
}

/// Rewrites the tableau after `x_j` enters the basis through row `r`, whose
/// current basic variable leaves.
fn pivot(
    rows: &mut [Vec<Rational>],
    basic_of: &mut [usize],
    row_of: &mut [Option<usize>],
    r: usize,
    j: usize,
) {
    let leaving = basic_of[r];
    let a = rows[r][j].clone();
    debug_assert!(!a.is_zero(), "entering coefficient must be nonzero");
    let inv = a.recip();
    let total = rows[r].len();
    // solve row r for x_j: x_j = (x_leaving − Σ_{m≠j} c_m·x_m) / a
    let mut jrow = vec![Rational::zero(); total];
    jrow[leaving] = inv.clone();
    for m in 0..total {
        if m != j && m != leaving && !rows[r][m].is_zero() {
            jrow[m] = -(&rows[r][m] * &inv);
        }
    }
    for k in 0..rows.len() {
        if k == r {
            continue;
        }
        let c = rows[k][j].clone();
        if c.is_zero() {
            continue;
        }
        rows[k][j] = Rational::zero();
        for m in 0..total {
            if !jrow[m].is_zero() {
                let inc = &jrow[m] * &c;
                rows[k][m] += inc;
            }
        }
    }
    rows[r] = jrow;
    basic_of[r] = j;
    row_of[j] = Some(r);
    row_of[leaving] = None;
}

// ---------------------------------------------------------------------------
// integer models

const INT_MODEL_BUDGET: u64 = 500_000;

/// Finds an integer point of `p` inside `input_box` by depth-first search
/// with exact rational interval pruning, or `None` when the box contains no
/// model. The box must cover every variable of `p`.
pub fn find_int_model(p: &Polyhedron, input_box: &InputBox) -> Result<Option<State>, PolyError> {
    let vars = p.vars();
    for v in &vars {
        assert!(input_box.range(v).is_some(), "input box misses '{v}'");
    }
    if p.has_trivially_false_atom() {
        return Ok(None);
    }
    let mut budget = INT_MODEL_BUDGET;
    let mut chosen = State::new();
    if search_int(p, &vars, input_box, &mut chosen, &mut budget)? {
        return Ok(Some(chosen));
    }
    Ok(None)
}

fn search_int(
    p: &Polyhedron,
    vars: &[String],
    input_box: &InputBox,
    chosen: &mut State,
    budget: &mut u64,
) -> Result<bool, PolyError> {
    let Some((var, rest_vars)) = vars.split_first() else {
        // all variables substituted: only constant atoms can remain
        return Ok(!p.has_trivially_false_atom());
    };
    // exact feasible interval for var: project every later variable out
    let mut onto = p.clone();
    for v in rest_vars {
        onto = fm_project(&onto, v);
    }
    if onto.has_trivially_false_atom() {
        return Ok(false);
    }
    let (box_lo, box_hi) = input_box.range(var).expect("checked by caller");
    let (lo, hi) = interval_of(&onto, var, box_lo, box_hi);
    let mut x = lo;
    while x <= hi {
        if *budget == 0 {
            return Err(PolyError::BudgetExceeded { budget: INT_MODEL_BUDGET });
        }
        *budget -= 1;
        let sub = substitute_value(p, var, x);
        if !sub.has_trivially_false_atom() {
            chosen.insert(var.clone(), x);
            if search_int(&sub, rest_vars, input_box, chosen, budget)? {
                return Ok(true);
            }
            chosen.remove(var);
        }
        if x == hi {
            break;
        }
        x += 1;
    }
    Ok(false)
}

fn substitute_value(p: &Polyhedron, var: &str, value: i64) -> Polyhedron {
    let replacement = LinTerm::constant(rat(value));
    Polyhedron::new(
        p.atoms
            .iter()
            .map(|a| LinAtom::new(a.term.substitute(var, &replacement), a.rel))
            .collect(),
    )
}

/// Integer candidate range for `var` in a polyhedron mentioning only `var`,
/// clamped to the box.
fn interval_of(onto: &Polyhedron, var: &str, box_lo: i64, box_hi: i64) -> (i64, i64) {
    let mut lo = rat(box_lo);
    let mut hi = rat(box_hi);
    for a in &onto.atoms {
        let c = a.term.coeff(var);
        if c.is_zero() {
            continue;
        }
        // atoms here mention only var: c*var + k REL 0, bound at -k/c
        let bound = -(a.term.constant_part().clone()) / &c;
        match (a.rel, c.is_positive()) {
            (Rel::Eq, _) => {
                if bound > lo {
                    lo = bound.clone();
                }
                if bound < hi {
                    hi = bound;
                }
            }
            (Rel::Le, true) => {
                if bound < hi {
                    hi = bound;
                }
            }
            (Rel::Lt, true) => {
                let adj = bound - Rational::new(BigInt::one(), BigInt::from(2));
                if adj < hi {
                    hi = adj;
                }
            }
            (Rel::Le, false) => {
                if bound > lo {
                    lo = bound;
                }
            }
            (Rel::Lt, false) => {
                let adj = bound + Rational::new(BigInt::one(), BigInt::from(2));
                if adj > lo {
                    lo = adj;
                }
            }
        }
    }
    (ceil_to_i64(&lo, box_lo), floor_to_i64(&hi, box_hi))
}

fn ceil_to_i64(q: &Rational, clamp_lo: i64) -> i64 {
    let c = q.ceil().to_integer();
    let big_lo = BigInt::from(clamp_lo);
    if c < big_lo {
        clamp_lo
    } else {
        // values beyond i64 collapse to an empty range via the caller's hi
        i64::try_from(c).unwrap_or(i64::MAX)
    }
}

fn floor_to_i64(q: &Rational, clamp_hi: i64) -> i64 {
    let f = q.floor().to_integer();
    let big_hi = BigInt::from(clamp_hi);
    if f > big_hi {
        clamp_hi
    } else {
        i64::try_from(f).unwrap_or(i64::MIN)
    }
}

// ---------------------------------------------------------------------------
// unsat cores

/// Subset-minimal rationally-unsatisfiable subset of `atoms`, found by
/// deletion-based minimization; `None` when the conjunction is satisfiable.
pub fn unsat_core(atoms: &[LinAtom]) -> Option<Vec<LinAtom>> {
    if sat_rat(&Polyhedron::new(atoms.to_vec())).is_some() {
        return None;
    }
    let mut core: Vec<LinAtom> = atoms.to_vec();
    let mut i = 0;
    while i < core.len() {
        let mut candidate = core.clone();
        candidate.remove(i);
        if sat_rat(&Polyhedron::new(candidate.clone())).is_none() {
            core = candidate;
        } else {
            i += 1;
        }
    }
    Some(core)
}

/// The part of `phi2` participating in a minimal unsatisfiable core of
/// `phi1 ∪ phi2`; `None` when the union is satisfiable.
pub fn unsat_core_pair(phi1: &[LinAtom], phi2: &[LinAtom]) -> Option<Vec<LinAtom>> {
    let mut union: Vec<LinAtom> = phi1.to_vec();
    union.extend(phi2.iter().cloned());
    let core = unsat_core(&union)?;
    Some(
        phi2.iter()
            .filter(|a| core.contains(a))
            .cloned()
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// convex hull of a union

const HULL_ATOM_BUDGET: usize = 512;

/// Closed convex hull of `p1 ∪ p2` restricted to `keep_vars`, or `None` when
/// the projection exceeds the atom budget. Both inputs must be rationally
/// satisfiable. The hull is computed by the standard lifted disjunction: each
/// operand gets scaled copies of its variables plus a multiplier `λi ≥ 0`
/// with `λ1 + λ2 = 1`, linked by `v = v1 + v2`; the auxiliary variables and
/// everything outside `keep_vars` are then projected out. Strict atoms are
/// relaxed to their closures (the hull is closed by construction).
pub fn hull_union(
    p1: &Polyhedron,
    p2: &Polyhedron,
    keep_vars: &BTreeSet<String>,
) -> Option<Polyhedron> {
    let mut all_vars: BTreeSet<String> = BTreeSet::new();
    all_vars.extend(p1.vars());
    all_vars.extend(p2.vars());

    let copy = |tag: u8, v: &String| format!("\u{1}{tag}\u{1}{v}");
    let lam = |tag: u8| format!("\u{1}lam{tag}");

    let mut atoms: Vec<LinAtom> = Vec::new();
    for (tag, p) in [(1u8, p1), (2u8, p2)] {
        let lamv = LinTerm::var(&lam(tag));
        for a in p.atoms() {
            // homogenize: Σ ci*vi + c0 REL 0 becomes Σ ci*vi' + c0*λ REL 0
            let mut t = LinTerm::zero();
            for v in a.term.vars() {
                t.set_coeff(&copy(tag, v), a.term.coeff(v));
            }
            let t = t.add(&lamv.scale(a.term.constant_part()));
            let rel = if a.rel == Rel::Lt { Rel::Le } else { a.rel };
            atoms.push(LinAtom::new(t, rel));
        }
        // 0 <= λ
        atoms.push(LinAtom::le(LinTerm::zero(), lamv));
    }
    // λ1 + λ2 = 1
    atoms.push(LinAtom::eq(
        LinTerm::var(&lam(1)).add(&LinTerm::var(&lam(2))),
        LinTerm::constant(Rational::one()),
    ));
    // v = v1 + v2
    for v in &all_vars {
        atoms.push(LinAtom::eq(
            LinTerm::var(v),
            LinTerm::var(&copy(1, v)).add(&LinTerm::var(&copy(2, v))),
        ));
    }

    let mut cur = Polyhedron::new(atoms);
    let mut eliminate: Vec<String> = Vec::new();
    for v in &all_vars {
        eliminate.push(copy(1, v));
        eliminate.push(copy(2, v));
    }
    eliminate.push(lam(1));
    eliminate.push(lam(2));
    for v in &all_vars {
        if !keep_vars.contains(v) {
            eliminate.push(v.clone());
        }
    }
    for v in &eliminate {
        cur = fm_project_budget(&cur, v, HULL_ATOM_BUDGET)?;
        if cur.atoms().len() > HULL_ATOM_BUDGET {
            return None;
        }
    }
    Some(prune_redundant(&cur))
}

/// Drops atoms rationally implied by the rest of the polyhedron.
fn prune_redundant(p: &Polyhedron) -> Polyhedron {
    let mut kept: Vec<LinAtom> = p.atoms().to_vec();
    let mut i = 0;
    while i < kept.len() {
        let candidate = kept[i].clone();
        let others: Vec<LinAtom> =
            kept.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, a)| a.clone()).collect();
        // implied iff others ∧ ¬candidate is unsatisfiable on every branch
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
    Polyhedron::new(kept)
}
