//! Dual refinement of condition-site candidates.
//!
//! Starting from a sampled [`initial_guess`], the [`dual_refine`] loop
//! alternates bounded validation with case-directed amendments: a side that
//! claims too much is trimmed by a generalized counterexample condition, a
//! side that claims too little grows by convex-hull disjunction. The loop
//! stops at the first validation that finds nothing ([`Status::Exact`]) or at
//! the iteration cap ([`Status::Partial`]). [`refine_program`] runs the loop
//! on every nonlinear site and jointly re-validates the combined result;
//! [`rewrite`] substitutes the synthesized positive sides back into the
//! program.

use std::collections::BTreeSet;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constraints::{conj_atoms, eval_blia, nnf, simplify, to_bexpr, Blia};
use crate::interp::{
    collect_snapshots_lenient, compile, exec_compiled, ExecOpts, InputBox, InterpError,
    RunOutcome, State, DEFAULT_SAMPLE_BOX, DEFAULT_SAMPLE_RUNS,
};
use crate::lang::{all_sites, find_nla_sites, replace_site_condition, CexCase, Loc, Program, Side};
use crate::learn::{learn, SampleSet};
use crate::polylib::{fm_project, hull_union, unsat_core, unsat_core_pair, Polyhedron};
use crate::validate::{
    instrument_check, validate, Counterexample, ReplacementMap, ValidateError, ValidationOutcome,
    ValidationScope, MAX_EXHAUSTIVE_POINTS,
};

/// Default cap on refinement iterations (validations) per site.
pub const DEFAULT_MAX_ITERS: u32 = 18;
/// Default cap on error-site states harvested per counterexample.
pub const DEFAULT_MODELS_PER_CEX: u32 = 1000;
/// Default seed for sampling and probing.
pub const DEFAULT_SEED: u64 = 7;

/// Which variables convex-hull outputs may mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeepVars {
    /// Variables of the site's original condition (default).
    VarsOfNla,
    /// Every program variable.
    AllVars,
}

#[derive(Debug, Clone)]
pub struct RefineConfig {
    /// Refinement iterations (validations) per site.
    pub max_iters: u32,
    /// Error-site states harvested per counterexample (at least 1).
    pub models_per_cex: u32,
    /// Seeded runs when sampling snapshots for the initial guess.
    pub sample_runs: u32,
    /// Uniform input range for initial-guess sampling.
    pub sample_box: (i64, i64),
    /// Scope of every validation during refinement.
    pub scope: ValidationScope,
    pub seed: u64,
    pub keep_vars: KeepVars,
    /// Also amend the dual side with each counterexample's generalization.
    /// Off by default: stage logs then match the plain algorithm.
    pub amend_dual: bool,
}

impl RefineConfig {
    /// Defaults for a program: exhaustive validation over the default box.
    pub fn for_program(p: &Program) -> RefineConfig {
        RefineConfig {
            max_iters: DEFAULT_MAX_ITERS,
            models_per_cex: DEFAULT_MODELS_PER_CEX,
            sample_runs: DEFAULT_SAMPLE_RUNS,
            sample_box: DEFAULT_SAMPLE_BOX,
            scope: ValidationScope::exhaustive(p),
            seed: DEFAULT_SEED,
            keep_vars: KeepVars::VarsOfNla,
            amend_dual: false,
        }
    }
}

/// One entry of a refinement's stage log: a validation or a case amendment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    V,
    Tp,
    Ep,
    Tn,
    En,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::V => write!(f, "v"),
            Stage::Tp => write!(f, "tp"),
            Stage::Ep => write!(f, "ep"),
            Stage::Tn => write!(f, "tn"),
            Stage::En => write!(f, "en"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// The final validation found no disagreement within scope.
    Exact,
    /// The iteration cap was reached with disagreements outstanding.
    Partial,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Exact => write!(f, "exact"),
            Status::Partial => write!(f, "partial"),
        }
    }
}

/// Outcome of refining one site.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub loc: Loc,
    pub b_pos: Blia,
    pub b_neg: Blia,
    pub status: Status,
    /// Validations performed inside the refinement loop.
    pub iterations: u32,
    pub stages: Vec<Stage>,
    /// Sides that had no snapshot samples and fell back to `false`.
    pub degenerate: Vec<Side>,
}

impl RefineResult {
    /// Stage log as a comma-separated string, e.g. `"v,en,v,v"`.
    pub fn stage_string(&self) -> String {
        self.stages.iter().map(Stage::to_string).collect::<Vec<_>>().join(",")
    }
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("sampling failed: {0}")]
    Sampling(#[from] InterpError),
    #[error("validation failed: {err}")]
    Validation {
        #[source]
        err: ValidateError,
        /// The pair refined so far, when the failure happened mid-loop.
        partial: Option<Box<RefineResult>>,
    },
    #[error("{0} is not a condition site of this program")]
    UnknownSite(Loc),
    #[error("{0} appears in more than one refinement result")]
    OverlappingSites(Loc),
    #[error("candidate for {loc} cannot be used as a program condition: {reason}")]
    Candidate { loc: Loc, reason: String },
}

/// First guesses for both sides of a site, learned from sampled snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialGuess {
    pub pos: Blia,
    pub neg: Blia,
    /// Sides that had no samples and fell back to `false`.
    pub degenerate: Vec<Side>,
}

/// Learns a candidate pair from seeded snapshot runs: each side is the
/// conjunction of its learned atoms, minus atoms the sides share, narrowed to
/// an unsatisfiable core of the union when one exists (the core isolates the
/// discriminating atoms). A side with no samples falls back to `false`, which
/// claims nothing and is flagged as degenerate.
pub fn initial_guess(p: &Program, loc: Loc, cfg: &RefineConfig) -> Result<InitialGuess, RefineError> {
    let (lo, hi) = cfg.sample_box;
    let sample_box = InputBox::uniform(&p.nondet_vars(), lo, hi);
    let (pos_states, neg_states) =
        collect_snapshots_lenient(p, loc, cfg.sample_runs, &sample_box, cfg.seed)?;
    let vars = p.var_names();
    let mut degenerate = Vec::new();
    let mut learned = |states: BTreeSet<State>, side: Side| {
        if states.is_empty() {
            degenerate.push(side);
            None
        } else {
            Some(learn(&SampleSet::new(vars.clone(), states)).expect("side is non-empty"))
        }
    };
    let pos_atoms = learned(pos_states, Side::Pos);
    let neg_atoms = learned(neg_states, Side::Neg);
    let conj = |atoms: Vec<crate::polylib::LinAtom>| {
        Blia::conj(atoms.into_iter().map(Blia::Atom).collect())
    };
    let (pos, neg) = match (pos_atoms, neg_atoms) {
        (None, None) => (Blia::False, Blia::False),
        (Some(pa), None) => (conj(pa), Blia::False),
        (None, Some(na)) => (Blia::False, conj(na)),
        (Some(mut pa), Some(mut na)) => {
            let shared: BTreeSet<_> = pa.iter().filter(|a| na.contains(a)).cloned().collect();
            pa.retain(|a| !shared.contains(a));
            na.retain(|a| !shared.contains(a));
            let mut union = pa.clone();
            union.extend(na.iter().cloned());
            if let Some(core) = unsat_core(&union) {
                pa.retain(|a| core.contains(a));
                na.retain(|a| core.contains(a));
            }
            (conj(pa), conj(na))
        }
    };
    Ok(InitialGuess { pos, neg, degenerate })
}

/// Harvests up to `cfg.models_per_cex` distinct error-site states triggering
/// the same `(case, loc)` as `cex`, always including `cex.error_state`.
/// Inputs come from the validation box: enumerated when the box fits the
/// exhaustive budget, seeded samples otherwise; deterministic either way.
pub fn get_models(
    p: &Program,
    cex: &Counterexample,
    m: &ReplacementMap,
    cfg: &RefineConfig,
) -> Result<SampleSet, RefineError> {
    let checked = instrument_check(p, m)
        .map_err(|err| RefineError::Validation { err, partial: None })?;
    let nondet = p.nondet_vars();
    for v in &nondet {
        if cfg.scope.input_box.range(v).is_none() {
            return Err(RefineError::Sampling(InterpError::MissingRange { var: v.clone() }));
        }
    }
    let compiled = compile(&checked);
    let opts =
        ExecOpts { loop_bound: cfg.scope.loop_bound, record_trace: false, record_path: false };
    let cap = cfg.models_per_cex.max(1) as usize;
    let mut states: BTreeSet<State> = BTreeSet::new();
    states.insert(cex.error_state.clone());
    if states.len() < cap {
        let mut harvest = |inputs: State| {
            let run = exec_compiled(&compiled, &inputs, opts);
            if let RunOutcome::ErrorHit { case, loc } = run.outcome {
                if case == cex.case && loc == cex.loc {
                    states.insert(run.state);
                }
            }
            states.len() >= cap
        };
        match cfg.scope.input_box.point_count(&nondet) {
            Some(n) if n <= MAX_EXHAUSTIVE_POINTS => {
                for inputs in cfg.scope.input_box.enumerate(&nondet) {
                    if harvest(inputs) {
                        break;
                    }
                }
            }
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                for _ in 0..(cap as u64 * 10) {
                    let inputs =
                        cfg.scope.input_box.sample(&nondet, &mut rng).expect("ranges checked");
                    if harvest(inputs) {
                        break;
                    }
                }
            }
        }
    }
    Ok(SampleSet::new(p.var_names(), states))
}

/// Whether a counterexample grows or shrinks the side being amended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Expand,
    Trim,
}

/// Generalizes one counterexample into a condition covering its whole error
/// family: the conjunction of invariants learned over [`get_models`]. For
/// expansions, when some disjunct of the amended side contradicts that
/// conjunction, the result narrows to the contradiction's atoms (the
/// genuinely new conditions); otherwise the learned conjunction is returned
/// verbatim, as it is for trims.
pub fn generalize_cex(
    b_cur: &Blia,
    cex: &Counterexample,
    direction: Direction,
    p: &Program,
    m: &ReplacementMap,
    cfg: &RefineConfig,
) -> Result<Blia, RefineError> {
    let samples = get_models(p, cex, m, cfg)?;
    let atoms = learn(&samples).expect("sample set includes the error state");
    let b_cex = Blia::conj(atoms.iter().cloned().map(Blia::Atom).collect());
    if direction == Direction::Trim {
        return Ok(b_cex);
    }
    for disjunct in disjuncts(b_cur) {
        let Some(d_atoms) = conj_atoms(&disjunct) else { continue };
        if let Some(core) = unsat_core_pair(&d_atoms, &atoms) {
            if !core.is_empty() {
                return Ok(Blia::conj(core.into_iter().map(Blia::Atom).collect()));
            }
        }
    }
    Ok(b_cex)
}

/// The disjuncts of a formula's negation normal form; `false` contributes
/// none.
fn disjuncts(b: &Blia) -> Vec<Blia> {
    fn go(b: Blia, out: &mut Vec<Blia>) {
        match b {
            Blia::Or(items) => {
                for i in items {
                    go(i, out);
                }
            }
            Blia::False => {}
            other => out.push(other),
        }
    }
    let mut out = Vec::new();
    go(nnf(b), &mut out);
    out
}

/// Disjunction by convex hull: when every disjunct of both operands is a
/// conjunction of atoms, the result is the hull of their union over
/// `keep_vars` — a single conjunction again, which keeps candidates flat
/// across expansions. Any non-conjunctive disjunct or a hull that exceeds its
/// budget falls back to the plain syntactic disjunction.
pub fn hull_or(b: &Blia, other: &Blia, keep_vars: &BTreeSet<String>) -> Blia {
    let plain = || Blia::disj(vec![b.clone(), other.clone()]);
    let (Some(r1), Some(r2)) = (regions(b), regions(other)) else {
        return plain();
    };
    let mut acc: Option<Polyhedron> = None;
    for region in r1.into_iter().chain(r2) {
        acc = Some(match acc {
            None => project_onto(&region, keep_vars),
            Some(prev) => match hull_union(&prev, &region, keep_vars) {
                Some(hull) => hull,
                None => return plain(),
            },
        });
    }
    match acc {
        None => Blia::False,
        Some(hull) => Blia::conj(hull.atoms().iter().cloned().map(Blia::Atom).collect()),
    }
}

/// The conjunctive regions of a formula, or `None` when some disjunct has
/// nested disjunctive structure.
fn regions(b: &Blia) -> Option<Vec<Polyhedron>> {
    let mut out = Vec::new();
    for d in disjuncts(b) {
        out.push(Polyhedron::new(conj_atoms(&d)?));
    }
    Some(out)
}

fn project_onto(p: &Polyhedron, keep_vars: &BTreeSet<String>) -> Polyhedron {
    let mut cur = p.clone();
    let eliminate: Vec<String> =
        cur.vars().into_iter().filter(|v| !keep_vars.contains(v)).collect();
    for v in &eliminate {
        cur = fm_project(&cur, v);
    }
    cur
}

/// Refines the candidate pair for one site until validation finds nothing or
/// the iteration cap is hit. Per counterexample case: an expanded side grows
/// by [`hull_or`] with the generalized condition, a trimmed side conjoins its
/// negation; both re-simplify. `iterations` counts validations; the stage log
/// records `v` per validation and the case code per amendment.
pub fn dual_refine(p: &Program, loc: Loc, cfg: &RefineConfig) -> Result<RefineResult, RefineError> {
    let site = all_sites(p)
        .into_iter()
        .find(|s| s.loc == loc)
        .ok_or(RefineError::UnknownSite(loc))?;
    let guess = initial_guess(p, loc, cfg)?;
    let keep: BTreeSet<String> = match cfg.keep_vars {
        KeepVars::VarsOfNla => site.cond.vars().into_iter().collect(),
        KeepVars::AllVars => p.var_names().into_iter().collect(),
    };
    let mut b_pos = guess.pos;
    let mut b_neg = guess.neg;
    let mut stages = Vec::new();
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        let mut m = ReplacementMap::new();
        m.insert(loc, b_pos.clone(), b_neg.clone());
        stages.push(Stage::V);
        iterations += 1;
        let cex = match validate(p, &m, &cfg.scope) {
            Ok(ValidationOutcome::Safe) => {
                return Ok(RefineResult {
                    loc,
                    b_pos,
                    b_neg,
                    status: Status::Exact,
                    iterations,
                    stages,
                    degenerate: guess.degenerate,
                })
            }
            Ok(ValidationOutcome::Counterexample(cex)) => cex,
            Err(err) => {
                return Err(RefineError::Validation {
                    err,
                    partial: Some(Box::new(RefineResult {
                        loc,
                        b_pos,
                        b_neg,
                        status: Status::Partial,
                        iterations,
                        stages,
                        degenerate: guess.degenerate,
                    })),
                })
            }
        };
        let direction = match cex.case {
            CexCase::ExpandPos | CexCase::ExpandNeg => Direction::Expand,
            CexCase::TrimPos | CexCase::TrimNeg => Direction::Trim,
        };
        let amended = match cex.case {
            CexCase::ExpandPos | CexCase::TrimPos => &b_pos,
            CexCase::ExpandNeg | CexCase::TrimNeg => &b_neg,
        };
        let g = generalize_cex(amended, &cex, direction, p, &m, cfg)?;
        match cex.case {
            CexCase::ExpandPos => {
                b_pos = expanded(&b_pos, &g, &keep, &cex.error_state);
                stages.push(Stage::Ep);
                if cfg.amend_dual {
                    b_neg = trimmed(&b_neg, &g);
                    stages.push(Stage::Tn);
                }
            }
            CexCase::TrimNeg => {
                b_neg = trimmed(&b_neg, &g);
                stages.push(Stage::Tn);
                if cfg.amend_dual {
                    b_pos = expanded(&b_pos, &g, &keep, &cex.error_state);
                    stages.push(Stage::Ep);
                }
            }
            CexCase::TrimPos => {
                b_pos = trimmed(&b_pos, &g);
                stages.push(Stage::Tp);
                if cfg.amend_dual {
                    b_neg = expanded(&b_neg, &g, &keep, &cex.error_state);
                    stages.push(Stage::En);
                }
            }
            CexCase::ExpandNeg => {
                b_neg = expanded(&b_neg, &g, &keep, &cex.error_state);
                stages.push(Stage::En);
                if cfg.amend_dual {
                    b_pos = trimmed(&b_pos, &g);
                    stages.push(Stage::Tp);
                }
            }
        }
    }
    Ok(RefineResult {
        loc,
        b_pos,
        b_neg,
        status: Status::Partial,
        iterations,
        stages,
        degenerate: guess.degenerate,
    })
}

fn expanded(side: &Blia, g: &Blia, keep: &BTreeSet<String>, witness: &State) -> Blia {
    let grown = simplify(&hull_or(side, g, keep));
    // expansion must keep the generalized witness inside the side
    debug_assert!(
        matches!(eval_blia(&grown, witness), Ok(true)),
        "expanded side lost its witness"
    );
    grown
}

fn trimmed(side: &Blia, g: &Blia) -> Blia {
    simplify(&Blia::conj(vec![side.clone(), nnf(&Blia::Not(Box::new(g.clone())))]))
}

/// Refines every nonlinear site of the program, then validates the combined
/// replacement map of the exact sites once; a passing joint validation
/// appends its `v` to each exact site's stage log. In the (unexpected) event
/// that the joint pass finds a disagreement, the offending site is downgraded
/// to partial.
pub fn refine_program(p: &Program, cfg: &RefineConfig) -> Result<Vec<RefineResult>, RefineError> {
    let mut results = Vec::new();
    for site in find_nla_sites(p) {
        results.push(dual_refine(p, site.loc, cfg)?);
    }
    let mut joint = ReplacementMap::new();
    for r in results.iter().filter(|r| r.status == Status::Exact) {
        joint.insert(r.loc, r.b_pos.clone(), r.b_neg.clone());
    }
    if !joint.is_empty() {
        match validate(p, &joint, &cfg.scope) {
            Ok(ValidationOutcome::Safe) => {
                for r in results.iter_mut().filter(|r| r.status == Status::Exact) {
                    r.stages.push(Stage::V);
                }
            }
            Ok(ValidationOutcome::Counterexample(cex)) => {
                if let Some(r) = results.iter_mut().find(|r| r.loc == cex.loc) {
                    r.status = Status::Partial;
                }
            }
            Err(err) => return Err(RefineError::Validation { err, partial: None }),
        }
    }
    Ok(results)
}

/// Substitutes each refined site's positive side for its original condition.
/// Exact results are always applied; partial ones only when `allow_partial`
/// is set, and are left untouched otherwise.
pub fn rewrite(
    p: &Program,
    results: &[RefineResult],
    allow_partial: bool,
) -> Result<Program, RefineError> {
    let mut seen = BTreeSet::new();
    let mut out = p.clone();
    for r in results {
        if !seen.insert(r.loc) {
            return Err(RefineError::OverlappingSites(r.loc));
        }
        if r.status == Status::Partial && !allow_partial {
            continue;
        }
        let cond = to_bexpr(&r.b_pos)
            .map_err(|e| RefineError::Candidate { loc: r.loc, reason: e.to_string() })?;
        out = replace_site_condition(&out, r.loc, &cond)
            .ok_or(RefineError::UnknownSite(r.loc))?;
    }
    Ok(out)
}
