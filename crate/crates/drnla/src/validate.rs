//! Bounded validation of candidate replacement pairs.
//!
//! A [`ReplacementMap`] pairs each condition site with a candidate for the
//! states where the condition holds (`pos`) and one for the states where it
//! fails (`neg`). [`instrument_check`] compiles the map into five-way checked
//! branches; [`validate`] searches an input box for disagreement witnesses and
//! reports the first one as a case-tagged [`Counterexample`]; [`export_smtlib`]
//! emits the same reachability questions as solver-ready scripts for callers
//! who want to search beyond the box.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constraints::{to_bexpr, Blia};
use crate::interp::{compile, exec_compiled, ExecOpts, InputBox, RunOutcome, State};
use crate::lang::{all_sites, BoolExpr, CexCase, CmpOp, Init, IntExpr, IntOp, Loc, Program, Stmt};

/// Default validation box: every nondeterministic input ranges over
/// `[-50, 50]` unless the caller narrows it.
pub const DEFAULT_VALIDATE_BOX: (i64, i64) = (-50, 50);
/// Default per-activation loop bound during validation runs.
pub const DEFAULT_VALIDATE_LOOP_BOUND: u64 = 200;
/// Exhaustive enumeration refuses boxes with more points than this.
pub const MAX_EXHAUSTIVE_POINTS: u128 = 2_000_000;

/// Candidate pair per condition site: (`pos`, `neg`) where `pos` should hold
/// exactly when the original condition does and `neg` exactly when it fails.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplacementMap {
    entries: BTreeMap<Loc, (Blia, Blia)>,
}

impl ReplacementMap {
    pub fn new() -> ReplacementMap {
        ReplacementMap::default()
    }

    pub fn insert(&mut self, loc: Loc, pos: Blia, neg: Blia) {
        self.entries.insert(loc, (pos, neg));
    }

    pub fn get(&self, loc: Loc) -> Option<&(Blia, Blia)> {
        self.entries.get(&loc)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Loc, &(Blia, Blia))> {
        self.entries.iter().map(|(l, p)| (*l, p))
    }

    pub fn locs(&self) -> Vec<Loc> {
        self.entries.keys().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// A state on which a candidate pair disagrees with its original condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub case: CexCase,
    pub loc: Loc,
    /// Initial nondeterministic assignment that reaches the disagreement.
    pub inputs: State,
    /// Program state at the site when the disagreement fired.
    pub error_state: State,
    /// `(site, decision)` per located branch evaluated before the error.
    pub path: Vec<(Loc, bool)>,
}

/// How `validate` searches the scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationMode {
    /// Every input valuation in the box, lexicographic in declaration order.
    ExhaustiveBox,
    /// `runs` seeded uniform samples from the box.
    RandomProbe { runs: u32, seed: u64 },
    /// No execution: callers use [`export_smtlib`] and an external solver.
    SmtExport,
}

/// Where validation looks: which inputs, how long loops may run, and how the
/// search proceeds. Verdicts are exact within this scope and silent beyond it.
#[derive(Debug, Clone)]
pub struct ValidationScope {
    pub input_box: InputBox,
    pub loop_bound: u64,
    pub mode: ValidationMode,
}

impl ValidationScope {
    /// Exhaustive search over the default box and loop bound.
    pub fn exhaustive(p: &Program) -> ValidationScope {
        let (lo, hi) = DEFAULT_VALIDATE_BOX;
        ValidationScope {
            input_box: InputBox::uniform(&p.nondet_vars(), lo, hi),
            loop_bound: DEFAULT_VALIDATE_LOOP_BOUND,
            mode: ValidationMode::ExhaustiveBox,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationOutcome {
    /// No disagreement for any input in the box within the loop bound.
    Safe,
    Counterexample(Counterexample),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidateError {
    #[error("{0} is not a condition site of this program")]
    UnknownLocation(Loc),
    #[error("validation box misses a range for input '{var}'")]
    MissingRange { var: String },
    #[error("exhaustive scope holds {points} input points, over the {budget} budget")]
    BudgetExceeded { points: u128, budget: u128 },
    #[error("SMT export mode does not execute; call export_smtlib for scripts")]
    ExportOnly,
    #[error("candidate cannot be used as a program condition: {0}")]
    Candidate(String),
}

// ---------------------------------------------------------------------------
// checked-branch instrumentation

/// Replaces every mapped site with a five-way checked branch: the four
/// disagreement cases abort the run (in the fixed order `ExpandPos`,
/// `TrimNeg`, `TrimPos`, `ExpandNeg`) and agreement falls through to the
/// original control flow. Mapped loops are rewrapped so their guard runs
/// through the same check; the rewrapped loop spends one extra iteration on
/// its exit pass, which only matters at the loop-bound boundary.
pub fn instrument_check(p: &Program, m: &ReplacementMap) -> Result<Program, ValidateError> {
    let sites: BTreeSet<Loc> = all_sites(p).iter().map(|s| s.loc).collect();
    let mut conv: BTreeMap<Loc, (BoolExpr, BoolExpr)> = BTreeMap::new();
    for (loc, (pos, neg)) in m.iter() {
        if !sites.contains(&loc) {
            return Err(ValidateError::UnknownLocation(loc));
        }
        let pos = to_bexpr(pos).map_err(|e| ValidateError::Candidate(e.to_string()))?;
        let neg = to_bexpr(neg).map_err(|e| ValidateError::Candidate(e.to_string()))?;
        conv.insert(loc, (pos, neg));
    }
    Ok(Program { decls: p.decls.clone(), body: check_block(&p.body, &conv) })
}

fn check_block(stmts: &[Stmt], conv: &BTreeMap<Loc, (BoolExpr, BoolExpr)>) -> Vec<Stmt> {
    stmts.iter().map(|s| check_stmt(s, conv)).collect()
}

fn check_stmt(s: &Stmt, conv: &BTreeMap<Loc, (BoolExpr, BoolExpr)>) -> Stmt {
    match s {
        Stmt::If { loc: Some(l), cond, then_branch, else_branch } if conv.contains_key(l) => {
            let (pos, neg) = conv[l].clone();
            Stmt::Check {
                loc: *l,
                cond: cond.clone(),
                pos,
                neg,
                then_branch: check_block(then_branch, conv),
                else_branch: check_block(else_branch, conv),
            }
        }
        Stmt::If { loc, cond, then_branch, else_branch } => Stmt::If {
            loc: *loc,
            cond: cond.clone(),
            then_branch: check_block(then_branch, conv),
            else_branch: check_block(else_branch, conv),
        },
        Stmt::Loop { loc: Some(l), guard, exit, body } if conv.contains_key(l) => {
            checked_loop(*l, guard, exit, body, conv)
        }
        Stmt::Loop { loc, guard, exit, body } => Stmt::Loop {
            loc: *loc,
            guard: guard.clone(),
            exit: check_block(exit, conv),
            body: check_block(body, conv),
        },
        Stmt::While { loc: Some(l), cond, body } if conv.contains_key(l) => {
            checked_loop(*l, cond, &[], body, conv)
        }
        Stmt::While { loc, cond, body } => Stmt::While {
            loc: *loc,
            cond: cond.clone(),
            body: check_block(body, conv),
        },
        other => other.clone(),
    }
}

/// `while (guard) … ` becomes `while (true) { check(guard) { body } else
/// { exit; break; } }` so every guard evaluation passes through the check.
fn checked_loop(
    loc: Loc,
    guard: &BoolExpr,
    exit: &[Stmt],
    body: &[Stmt],
    conv: &BTreeMap<Loc, (BoolExpr, BoolExpr)>,
) -> Stmt {
    let (pos, neg) = conv[&loc].clone();
    let mut else_branch = check_block(exit, conv);
    else_branch.push(Stmt::Break);
    Stmt::Loop {
        loc: None,
        guard: BoolExpr::True,
        exit: Vec::new(),
        body: vec![Stmt::Check {
            loc,
            cond: guard.clone(),
            pos,
            neg,
            then_branch: check_block(body, conv),
            else_branch,
        }],
    }
}

// ---------------------------------------------------------------------------
// bounded search

/// Runs the checked program over the scope and returns the first disagreement
/// found, or `Safe` if none exists within the scope. Exhaustive mode visits
/// inputs in lexicographic order (declaration order per variable), so the
/// returned witness is deterministic; an oversized box is an explicit
/// [`ValidateError::BudgetExceeded`], never a silent `Safe`.
pub fn validate(
    p: &Program,
    m: &ReplacementMap,
    scope: &ValidationScope,
) -> Result<ValidationOutcome, ValidateError> {
    let checked = instrument_check(p, m)?;
    let vars = p.nondet_vars();
    for v in &vars {
        if scope.input_box.range(v).is_none() {
            return Err(ValidateError::MissingRange { var: v.clone() });
        }
    }
    let compiled = compile(&checked);
    let opts =
        ExecOpts { loop_bound: scope.loop_bound, record_trace: false, record_path: true };
    let attempt = |inputs: State| -> Option<Counterexample> {
        let run = exec_compiled(&compiled, &inputs, opts);
        match run.outcome {
            RunOutcome::ErrorHit { case, loc } => Some(Counterexample {
                case,
                loc,
                inputs,
                error_state: run.state,
                path: run.path,
            }),
            _ => None,
        }
    };
    match &scope.mode {
        ValidationMode::ExhaustiveBox => {
            let points = scope
                .input_box
                .point_count(&vars)
                .ok_or(ValidateError::BudgetExceeded {
                    points: u128::MAX,
                    budget: MAX_EXHAUSTIVE_POINTS,
                })?;
            if points > MAX_EXHAUSTIVE_POINTS {
                return Err(ValidateError::BudgetExceeded {
                    points,
                    budget: MAX_EXHAUSTIVE_POINTS,
                });
            }
            for inputs in scope.input_box.enumerate(&vars) {
                if let Some(cex) = attempt(inputs) {
                    return Ok(ValidationOutcome::Counterexample(cex));
                }
            }
            Ok(ValidationOutcome::Safe)
        }
        ValidationMode::RandomProbe { runs, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for _ in 0..*runs {
                let inputs =
                    scope.input_box.sample(&vars, &mut rng).expect("ranges checked above");
                if let Some(cex) = attempt(inputs) {
                    return Ok(ValidationOutcome::Counterexample(cex));
                }
            }
            Ok(ValidationOutcome::Safe)
        }
        ValidationMode::SmtExport => Err(ValidateError::ExportOnly),
    }
}

/// Re-runs a counterexample's inputs through the checked program and confirms
/// it reproduces its own tag, error state, and path.
pub fn replay_counterexample(
    p: &Program,
    m: &ReplacementMap,
    loop_bound: u64,
    cex: &Counterexample,
) -> Result<bool, ValidateError> {
    let checked = instrument_check(p, m)?;
    let opts = ExecOpts { loop_bound, record_trace: false, record_path: true };
    let run = exec_compiled(&compile(&checked), &cex.inputs, opts);
    let tag_matches = matches!(
        run.outcome,
        RunOutcome::ErrorHit { case, loc } if case == cex.case && loc == cex.loc
    );
    Ok(tag_matches && run.state == cex.error_state && run.path == cex.path)
}

// ---------------------------------------------------------------------------
// SMT-LIB2 export

/// Emits one `(set-logic QF_NIA)` script per disagreement label, encoding the
/// checked program with loops unrolled `unroll` times and asserting that the
/// label is reachable: `sat` means a disagreement exists within the unrolling,
/// `unsat` covers every input but only up to the unrolling depth. Returns
/// `(file name, script)` pairs named `<prog>.<loc>.<case>.smt2`.
///
/// The encoding is single-assignment with guarded updates: each assignment
/// defines a fresh `|var@step|` symbol equal to an `ite` over the statement's
/// reachability condition, so dead branches, broken-out loops, and halted
/// (post-error) suffixes keep earlier values without explicit merging.
/// Arithmetic is over unbounded integers, so a `sat` witness can in principle
/// exceed the interpreter's checked 64-bit range.
pub fn export_smtlib(
    p: &Program,
    m: &ReplacementMap,
    prog_name: &str,
    unroll: u64,
) -> Result<Vec<(String, String)>, ValidateError> {
    let checked = instrument_check(p, m)?;
    let mut enc = SmtEncoder::new(unroll);
    for (loc, _) in m.iter() {
        for case in [CexCase::ExpandPos, CexCase::TrimNeg, CexCase::TrimPos, CexCase::ExpandNeg] {
            enc.errors.insert((loc, case), Vec::new());
        }
    }
    for d in &checked.decls {
        enc.declare_input(&d.name, d.init);
    }
    let mut alive = "true".to_string();
    let mut breaks = Vec::new();
    for s in &checked.body {
        alive = enc.stmt(s, alive, &mut breaks);
    }
    debug_assert!(breaks.is_empty(), "break outside of a loop");

    let mut files = Vec::new();
    for ((loc, case), terms) in &enc.errors {
        let mut script = String::new();
        script.push_str("; bounded reachability of a candidate-pair disagreement\n");
        script.push_str(&format!(
            "; program {prog_name}, site {loc}, case {case}, loops unrolled {unroll} times\n"
        ));
        script.push_str("; sat: a disagreement of this case is reachable within the unrolling\n");
        script.push_str("(set-logic QF_NIA)\n");
        for line in &enc.lines {
            script.push_str(line);
            script.push('\n');
        }
        let goal = match terms.len() {
            0 => "false".to_string(),
            1 => terms[0].clone(),
            _ => format!("(or {})", terms.join(" ")),
        };
        script.push_str(&format!("(assert {goal})\n(check-sat)\n"));
        files.push((format!("{prog_name}.{loc}.{case}.smt2"), script));
    }
    Ok(files)
}

struct SmtEncoder {
    unroll: u64,
    /// Declarations and definitional asserts, in definition order.
    lines: Vec<String>,
    /// Next SSA step per program variable.
    versions: BTreeMap<String, u32>,
    /// Current symbol per program variable.
    env: BTreeMap<String, String>,
    /// Reachability-condition symbols minted so far.
    alive_count: u32,
    /// Occurrence terms per disagreement label.
    errors: BTreeMap<(Loc, CexCase), Vec<String>>,
}

impl SmtEncoder {
    fn new(unroll: u64) -> SmtEncoder {
        SmtEncoder {
            unroll,
            lines: Vec::new(),
            versions: BTreeMap::new(),
            env: BTreeMap::new(),
            alive_count: 0,
            errors: BTreeMap::new(),
        }
    }

    fn fresh_var(&mut self, var: &str) -> String {
        let n = self.versions.entry(var.to_string()).or_insert(0);
        let sym = format!("|{var}@{n}|");
        *n += 1;
        self.lines.push(format!("(declare-const {sym} Int)"));
        sym
    }

    fn declare_input(&mut self, var: &str, init: Init) {
        let sym = self.fresh_var(var);
        match init {
            Init::Nondet => {}
            Init::Const(c) => self.lines.push(format!("(assert (= {sym} {}))", int_lit(c))),
            Init::Unset => self.lines.push(format!("(assert (= {sym} 0))")),
        }
        self.env.insert(var.to_string(), sym);
    }

    /// Names a Bool term so downstream guards stay small; constants pass
    /// through unchanged.
    fn name_bool(&mut self, term: String) -> String {
        if term == "true" || term == "false" {
            return term;
        }
        let sym = format!("|alive@{}|", self.alive_count);
        self.alive_count += 1;
        self.lines.push(format!("(declare-const {sym} Bool)"));
        self.lines.push(format!("(assert (= {sym} {term}))"));
        sym
    }

    /// Encodes one statement under reachability condition `alive`; returns the
    /// reachability condition of the next statement in sequence. `breaks`
    /// collects the conditions under which enclosing-loop breaks fire.
    fn stmt(&mut self, s: &Stmt, alive: String, breaks: &mut Vec<String>) -> String {
        match s {
            Stmt::Skip | Stmt::Snap { .. } => alive,
            Stmt::Break => {
                breaks.push(alive);
                "false".to_string()
            }
            Stmt::Assign(v, e) => {
                let rhs = iexpr_term(e, &self.env);
                let old = self.env[v].clone();
                let sym = self.fresh_var(v);
                self.lines.push(format!("(assert (= {sym} (ite {alive} {rhs} {old})))"));
                self.env.insert(v.clone(), sym);
                alive
            }
            Stmt::If { cond, then_branch, else_branch, .. } => {
                let c = self.name_bool(bexpr_term(cond, &self.env));
                let a_then = self.block(then_branch, and2(&alive, &c), breaks);
                let a_else = self.block(else_branch, and2(&alive, &not1(&c)), breaks);
                self.name_bool(or2(&a_then, &a_else))
            }
            Stmt::While { cond, body, .. } => self.unrolled(cond, &[], body, alive),
            Stmt::Loop { guard, exit, body, .. } => self.unrolled(guard, exit, body, alive),
            Stmt::Check { loc, cond, pos, neg, then_branch, else_branch } => {
                let b = self.name_bool(bexpr_term(cond, &self.env));
                let p = self.name_bool(bexpr_term(pos, &self.env));
                let n = self.name_bool(bexpr_term(neg, &self.env));
                let nb = not1(&b);
                for (case, term) in [
                    (CexCase::ExpandPos, and2(&b, &not1(&p))),
                    (CexCase::TrimNeg, and2(&b, &n)),
                    (CexCase::TrimPos, and2(&nb, &p)),
                    (CexCase::ExpandNeg, and2(&nb, &not1(&n))),
                ] {
                    let fired = self.name_bool(and2(&alive, &term));
                    self.errors.entry((*loc, case)).or_default().push(fired);
                }
                // a fired error halts the whole run, so only agreeing visits
                // stay alive
                let agree = or2(&and3(&b, &p, &not1(&n)), &and3(&nb, &not1(&p), &n));
                let alive = self.name_bool(and2(&alive, &agree));
                let a_then = self.block(then_branch, and2(&alive, &b), breaks);
                let a_else = self.block(else_branch, and2(&alive, &nb), breaks);
                self.name_bool(or2(&a_then, &a_else))
            }
        }
    }

    fn block(&mut self, stmts: &[Stmt], alive: String, breaks: &mut Vec<String>) -> String {
        let mut alive = alive;
        for s in stmts {
            alive = self.stmt(s, alive, breaks);
        }
        alive
    }

    /// Unrolls `while (guard) { body }` (with `exit` running once on the
    /// guard-false pass). Runs still inside the loop after the last unrolling
    /// are dropped, which makes the encoding an under-approximation.
    fn unrolled(&mut self, guard: &BoolExpr, exit: &[Stmt], body: &[Stmt], alive: String) -> String {
        let mut head = alive;
        let mut exits: Vec<String> = Vec::new();
        for _ in 0..self.unroll {
            let g = self.name_bool(bexpr_term(guard, &self.env));
            let leave = self.block(exit, and2(&head, &not1(&g)), &mut Vec::new());
            exits.push(leave);
            let mut breaks = Vec::new();
            head = self.block(body, and2(&head, &g), &mut breaks);
            exits.extend(breaks);
        }
        let exits: Vec<String> = exits.into_iter().filter(|t| t != "false").collect();
        let after = match exits.len() {
            0 => "false".to_string(),
            1 => exits[0].clone(),
            _ => format!("(or {})", exits.join(" ")),
        };
        self.name_bool(after)
    }
}

fn and2(a: &str, b: &str) -> String {
    match (a, b) {
        ("false", _) | (_, "false") => "false".to_string(),
        ("true", x) | (x, "true") => x.to_string(),
        (a, b) => format!("(and {a} {b})"),
    }
}

fn and3(a: &str, b: &str, c: &str) -> String {
    and2(&and2(a, b), c)
}

fn or2(a: &str, b: &str) -> String {
    match (a, b) {
        ("true", _) | (_, "true") => "true".to_string(),
        ("false", x) | (x, "false") => x.to_string(),
        (a, b) => format!("(or {a} {b})"),
    }
}

fn not1(a: &str) -> String {
    match a {
        "true" => "false".to_string(),
        "false" => "true".to_string(),
        a => format!("(not {a})"),
    }
}

fn int_lit(c: i64) -> String {
    if c < 0 {
        format!("(- {})", c.unsigned_abs())
    } else {
        c.to_string()
    }
}

fn iexpr_term(e: &IntExpr, env: &BTreeMap<String, String>) -> String {
    match e {
        IntExpr::Const(c) => int_lit(*c),
        IntExpr::Var(v) => env
            .get(v)
            .unwrap_or_else(|| panic!("undeclared variable '{v}'"))
            .clone(),
        IntExpr::Neg(inner) => format!("(- {})", iexpr_term(inner, env)),
        IntExpr::Bin(op, a, b) => {
            let op = match op {
                IntOp::Add => "+",
                IntOp::Sub => "-",
                IntOp::Mul => "*",
            };
            format!("({op} {} {})", iexpr_term(a, env), iexpr_term(b, env))
        }
    }
}

fn bexpr_term(e: &BoolExpr, env: &BTreeMap<String, String>) -> String {
    match e {
        BoolExpr::True => "true".to_string(),
        BoolExpr::False => "false".to_string(),
        BoolExpr::Not(inner) => not1(&bexpr_term(inner, env)),
        BoolExpr::And(a, b) => and2(&bexpr_term(a, env), &bexpr_term(b, env)),
        BoolExpr::Or(a, b) => or2(&bexpr_term(a, env), &bexpr_term(b, env)),
        BoolExpr::Cmp(op, a, b) => {
            let (a, b) = (iexpr_term(a, env), iexpr_term(b, env));
            match op {
                CmpOp::Eq => format!("(= {a} {b})"),
                CmpOp::Ne => format!("(not (= {a} {b}))"),
                CmpOp::Lt => format!("(< {a} {b})"),
                CmpOp::Le => format!("(<= {a} {b})"),
                CmpOp::Gt => format!("(> {a} {b})"),
                CmpOp::Ge => format!("(>= {a} {b})"),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::parse_blia;
    use crate::interp::exec;
    use crate::lang::{normalize, parse, pretty};

    const COHENCU5: &str = "int y = 1;
int z = 6;
int c = 0;
int p = 2;
int k = *;
while (z*z - 12*y - 6*z + 12 + c <= k) {
    y = y + z;
    z = z + 6;
    c = c + 1;
    p = 1;
}
p = 0;
";

    fn cohencu() -> Program {
        normalize(&parse(COHENCU5).unwrap())
    }

    fn cube_vars() -> Vec<String> {
        ["c", "k", "p", "y", "z"].iter().map(|s| s.to_string()).collect()
    }

    /// First guess from sampled runs: exact positive side, equality-only
    /// negative side that misses the never-entered exits.
    fn first_guess() -> ReplacementMap {
        let mut m = ReplacementMap::new();
        m.insert(
            Loc(1),
            parse_blia("c - k <= 0", &cube_vars()).unwrap(),
            parse_blia("c - k - 1 == 0", &cube_vars()).unwrap(),
        );
        m
    }

    /// Repaired guess: the negative side now covers every exit state.
    fn second_guess() -> ReplacementMap {
        let mut m = ReplacementMap::new();
        m.insert(
            Loc(1),
            parse_blia("c - k <= 0", &cube_vars()).unwrap(),
            parse_blia("k - c <= -1", &cube_vars()).unwrap(),
        );
        m
    }

    fn k_scope(lo: i64, hi: i64) -> ValidationScope {
        ValidationScope {
            input_box: InputBox::uniform(&["k".to_string()], lo, hi),
            loop_bound: DEFAULT_VALIDATE_LOOP_BOUND,
            mode: ValidationMode::ExhaustiveBox,
        }
    }

    #[test]
    fn empty_map_leaves_program_unchanged() {
        let p = cohencu();
        let out = instrument_check(&p, &ReplacementMap::new()).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn unknown_location_is_rejected() {
        let err = instrument_check(&cohencu(), &{
            let mut m = ReplacementMap::new();
            m.insert(Loc(9), Blia::True, Blia::True);
            m
        })
        .unwrap_err();
        assert_eq!(err, ValidateError::UnknownLocation(Loc(9)));
    }

    #[test]
    fn checked_loop_preserves_agreeing_runs() {
        // the second guess agrees with the guard everywhere reachable, so the
        // checked program must finish with the original final states
        let p = cohencu();
        let checked = instrument_check(&p, &second_guess()).unwrap();
        let printed = pretty(&checked);
        assert!(printed.contains("error_ExpandPos(L1);"), "expected a checked branch:\n{printed}");
        assert!(printed.contains("error_ExpandNeg(L1);"), "expected a checked branch:\n{printed}");
        for k in [-3, 0, 5] {
            let inputs = State::from([("k".to_string(), k)]);
            let a = exec(&p, &inputs, ExecOpts::default());
            let b = exec(&checked, &inputs, ExecOpts::default());
            assert_eq!(a.outcome, b.outcome, "k = {k}");
            assert_eq!(a.state, b.state, "k = {k}");
        }
    }

    #[test]
    fn first_guess_misses_never_entered_exits() {
        // on k <= -2 the loop exits at c = 0 with c != k + 1, so the negative
        // candidate misses the state; the lexicographically first witness is
        // k = -10
        let p = cohencu();
        let out = validate(&p, &first_guess(), &k_scope(-10, 10)).unwrap();
        let ValidationOutcome::Counterexample(cex) = out else {
            panic!("expected a counterexample, got {out:?}");
        };
        assert_eq!(cex.case, CexCase::ExpandNeg);
        assert_eq!(cex.loc, Loc(1));
        assert_eq!(cex.inputs, State::from([("k".to_string(), -10)]));
        let expected: State = [("y", 1), ("z", 6), ("c", 0), ("p", 2), ("k", -10)]
            .iter()
            .map(|&(v, x)| (v.to_string(), x))
            .collect();
        assert_eq!(cex.error_state, expected);
        assert!(replay_counterexample(&p, &first_guess(), 200, &cex).unwrap());
    }

    #[test]
    fn second_guess_is_safe_in_scope() {
        let out = validate(&cohencu(), &second_guess(), &k_scope(-10, 10)).unwrap();
        assert_eq!(out, ValidationOutcome::Safe);
    }

    #[test]
    fn trivial_pair_trips_trim_neg_first() {
        // (true, true): on a condition-true state the cascade reaches TrimNeg
        // before TrimPos, fixing the tag deterministically
        let p = normalize(&parse("int x = *; if (x*x >= 1) { skip; } else { skip; }").unwrap());
        let mut m = ReplacementMap::new();
        m.insert(Loc(1), Blia::True, Blia::True);
        let scope = ValidationScope {
            input_box: InputBox::uniform(&["x".to_string()], -5, 5),
            loop_bound: 10,
            mode: ValidationMode::ExhaustiveBox,
        };
        let out = validate(&p, &m, &scope).unwrap();
        let ValidationOutcome::Counterexample(cex) = out else {
            panic!("expected a counterexample, got {out:?}");
        };
        assert_eq!(cex.case, CexCase::TrimNeg);
        assert_eq!(cex.inputs["x"], -5);
    }

    #[test]
    fn case_tag_holds_at_error_state() {
        // the tag's defining conjunction must evaluate true on the error state
        let p = cohencu();
        let out = validate(&p, &first_guess(), &k_scope(-10, 10)).unwrap();
        let ValidationOutcome::Counterexample(cex) = out else { panic!("expected cex") };
        let site_cond = all_sites(&p).into_iter().find(|s| s.loc == cex.loc).unwrap().cond;
        let (pos, neg) = first_guess().get(cex.loc).unwrap().clone();
        let b = eval_bexpr(&site_cond, &cex.error_state);
        let pv = crate::constraints::eval_blia(&pos, &cex.error_state).unwrap();
        let nv = crate::constraints::eval_blia(&neg, &cex.error_state).unwrap();
        let defining = match cex.case {
            CexCase::ExpandPos => b && !pv,
            CexCase::TrimNeg => b && nv,
            CexCase::TrimPos => !b && pv,
            CexCase::ExpandNeg => !b && !nv,
        };
        assert!(defining, "case {:?} must hold at the error state", cex.case);
    }

    #[test]
    fn oversized_box_is_an_explicit_error() {
        let p = normalize(
            &parse("int a = *; int b = *; int c = *; int d = *; if (a*a == b) { skip; } else { skip; }")
                .unwrap(),
        );
        let mut m = ReplacementMap::new();
        m.insert(Loc(1), Blia::True, Blia::False);
        let scope = ValidationScope {
            input_box: InputBox::uniform(&p.nondet_vars(), -50, 50),
            loop_bound: 10,
            mode: ValidationMode::ExhaustiveBox,
        };
        match validate(&p, &m, &scope) {
            Err(ValidateError::BudgetExceeded { points, budget }) => {
                assert_eq!(points, 101u128.pow(4));
                assert_eq!(budget, MAX_EXHAUSTIVE_POINTS);
            }
            other => panic!("expected BudgetExceeded, got {other:?}"),
        }
    }

    #[test]
    fn random_probe_finds_the_same_disagreement() {
        let p = cohencu();
        let scope = ValidationScope {
            input_box: InputBox::uniform(&["k".to_string()], -10, 10),
            loop_bound: DEFAULT_VALIDATE_LOOP_BOUND,
            mode: ValidationMode::RandomProbe { runs: 64, seed: 7 },
        };
        let out = validate(&p, &first_guess(), &scope).unwrap();
        let ValidationOutcome::Counterexample(cex) = out else {
            panic!("random probe over 64 draws should hit a k <= -2 witness");
        };
        assert_eq!(cex.case, CexCase::ExpandNeg);
        assert!(replay_counterexample(&p, &first_guess(), 200, &cex).unwrap());
    }

    #[test]
    fn smt_export_mode_does_not_execute() {
        let mut scope = k_scope(-10, 10);
        scope.mode = ValidationMode::SmtExport;
        let err = validate(&cohencu(), &first_guess(), &scope).unwrap_err();
        assert_eq!(err, ValidateError::ExportOnly);
    }

    const STRAIGHT: &str = "int x = *;
int y = 0;
if (x*x <= 4) { y = 1; } else { y = 2; }
";

    #[test]
    fn export_emits_four_scripts_per_site() {
        let p = normalize(&parse(STRAIGHT).unwrap());
        let mut m = ReplacementMap::new();
        m.insert(
            Loc(1),
            parse_blia("x <= 2 && -2 <= x", &["x".to_string(), "y".to_string()]).unwrap(),
            parse_blia("x >= 3 || x <= -3", &["x".to_string(), "y".to_string()]).unwrap(),
        );
        let files = export_smtlib(&p, &m, "straight", 4).unwrap();
        let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(
            names,
            [
                "straight.L1.ExpandPos.smt2",
                "straight.L1.TrimNeg.smt2",
                "straight.L1.TrimPos.smt2",
                "straight.L1.ExpandNeg.smt2",
            ]
        );
        for (_, script) in &files {
            assert!(script.contains("(set-logic QF_NIA)"));
            assert_eq!(script.matches("(check-sat)").count(), 1);
            assert!(script.contains("|x@0|"));
        }
        // byte-identical on a second run
        assert_eq!(files, export_smtlib(&p, &m, "straight", 4).unwrap());
    }

    // -- evaluation cross-check of the export ------------------------------
    //
    // A tiny evaluator for the scripts we generate: definitional asserts bind
    // symbols in order, free Int symbols are the program inputs, and the last
    // assert is the reachability goal. Running it against the interpreter on
    // every input in a box checks the whole encoding end to end.

    #[derive(Debug, Clone, PartialEq)]
    enum Sx {
        Sym(String),
        List(Vec<Sx>),
    }

    fn tokenize(s: &str) -> Vec<String> {
        let mut toks = Vec::new();
        let mut cur = String::new();
        let mut chars = s.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '(' | ')' => {
                    if !cur.is_empty() {
                        toks.push(std::mem::take(&mut cur));
                    }
                    toks.push(c.to_string());
                }
                '|' => {
                    cur.push('|');
                    for q in chars.by_ref() {
                        cur.push(q);
                        if q == '|' {
                            break;
                        }
                    }
                }
                c if c.is_whitespace() => {
                    if !cur.is_empty() {
                        toks.push(std::mem::take(&mut cur));
                    }
                }
                c => cur.push(c),
            }
        }
        if !cur.is_empty() {
            toks.push(cur);
        }
        toks
    }

    fn parse_sx(toks: &[String], at: &mut usize) -> Sx {
        if toks[*at] == "(" {
            *at += 1;
            let mut items = Vec::new();
            while toks[*at] != ")" {
                items.push(parse_sx(toks, at));
            }
            *at += 1;
            Sx::List(items)
        } else {
            let s = toks[*at].clone();
            *at += 1;
            Sx::Sym(s)
        }
    }

    #[derive(Debug, Clone, Copy, PartialEq)]
    enum V {
        I(i128),
        B(bool),
    }

    fn as_i(v: V) -> i128 {
        match v {
            V::I(x) => x,
            V::B(_) => panic!("expected an integer"),
        }
    }

    fn as_b(v: V) -> bool {
        match v {
            V::B(x) => x,
            V::I(_) => panic!("expected a boolean"),
        }
    }

    fn eval_sx(sx: &Sx, env: &BTreeMap<String, V>) -> V {
        match sx {
            Sx::Sym(s) => match s.as_str() {
                "true" => V::B(true),
                "false" => V::B(false),
                s => {
                    if let Ok(n) = s.parse::<i128>() {
                        V::I(n)
                    } else {
                        *env.get(s).unwrap_or_else(|| panic!("unbound symbol {s}"))
                    }
                }
            },
            Sx::List(items) => {
                let Sx::Sym(head) = &items[0] else { panic!("bad application") };
                let args: Vec<V> = items[1..].iter().map(|a| eval_sx(a, env)).collect();
                match (head.as_str(), args.len()) {
                    ("-", 1) => V::I(-as_i(args[0])),
                    ("-", 2) => V::I(as_i(args[0]) - as_i(args[1])),
                    ("+", _) => V::I(args.iter().map(|&a| as_i(a)).sum()),
                    ("*", _) => V::I(args.iter().map(|&a| as_i(a)).product()),
                    ("not", 1) => V::B(!as_b(args[0])),
                    ("and", _) => V::B(args.iter().all(|&a| as_b(a))),
                    ("or", _) => V::B(args.iter().any(|&a| as_b(a))),
                    ("=", 2) => V::B(args[0] == args[1]),
                    ("<=", 2) => V::B(as_i(args[0]) <= as_i(args[1])),
                    ("<", 2) => V::B(as_i(args[0]) < as_i(args[1])),
                    (">=", 2) => V::B(as_i(args[0]) >= as_i(args[1])),
                    (">", 2) => V::B(as_i(args[0]) > as_i(args[1])),
                    ("ite", 3) => {
                        if as_b(args[0]) {
                            args[1]
                        } else {
                            args[2]
                        }
                    }
                    (op, n) => panic!("unsupported operator {op}/{n}"),
                }
            }
        }
    }

    /// Evaluates a generated script under concrete inputs: binds definitional
    /// asserts in order and returns the value of the final goal assert.
    fn eval_script(script: &str, inputs: &State) -> bool {
        let mut env: BTreeMap<String, V> = inputs
            .iter()
            .map(|(v, x)| (format!("|{v}@0|"), V::I(*x as i128)))
            .collect();
        let mut goal = None;
        for line in script.lines() {
            if !line.starts_with("(assert ") {
                continue;
            }
            let toks = tokenize(line);
            let mut at = 0;
            let Sx::List(items) = parse_sx(&toks, &mut at) else { panic!("bad assert") };
            // items = [assert, body]
            if let Sx::List(eq) = &items[1] {
                if eq.len() == 3 && eq[0] == Sx::Sym("=".to_string()) {
                    if let Sx::Sym(sym) = &eq[1] {
                        if sym.starts_with('|') && !env.contains_key(sym) {
                            let val = eval_sx(&eq[2], &env);
                            env.insert(sym.clone(), val);
                            continue;
                        }
                    }
                }
            }
            goal = Some(as_b(eval_sx(&items[1], &env)));
        }
        goal.expect("script has a goal assert")
    }

    #[test]
    fn export_agrees_with_execution_across_the_box() {
        // for every input: the goal of the (loc, case) script is true exactly
        // when the interpreter aborts with that label
        let p = cohencu();
        for m in [first_guess(), second_guess()] {
            let files = export_smtlib(&p, &m, "cohencu5", 16).unwrap();
            for k in -10..=10 {
                let inputs = State::from([("k".to_string(), k)]);
                let checked = instrument_check(&p, &m).unwrap();
                let opts = ExecOpts { loop_bound: 16, ..ExecOpts::default() };
                let run = exec(&checked, &inputs, opts);
                for (name, script) in &files {
                    let hit = eval_script(script, &inputs);
                    let expected = match run.outcome {
                        RunOutcome::ErrorHit { case, loc } => {
                            name == &format!("cohencu5.{loc}.{case}.smt2")
                        }
                        _ => false,
                    };
                    assert_eq!(hit, expected, "script {name}, k = {k}");
                }
            }
        }
    }

    #[test]
    fn export_witness_family_matches_search() {
        // the ExpandNeg goal under the first guess is satisfied by the same
        // k <= -2 family the exhaustive search reports, and by nothing the
        // second guess leaves reachable
        let p = cohencu();
        let files = export_smtlib(&p, &first_guess(), "cohencu5", 16).unwrap();
        let (_, script) = files
            .iter()
            .find(|(n, _)| n == "cohencu5.L1.ExpandNeg.smt2")
            .expect("ExpandNeg script");
        assert!(eval_script(script, &State::from([("k".to_string(), -2)])));
        assert!(!eval_script(script, &State::from([("k".to_string(), -1)])));
        assert!(!eval_script(script, &State::from([("k".to_string(), 3)])));
    }

    fn eval_iexpr(e: &IntExpr, st: &State) -> i128 {
        match e {
            IntExpr::Const(c) => *c as i128,
            IntExpr::Var(v) => st[v] as i128,
            IntExpr::Neg(x) => -eval_iexpr(x, st),
            IntExpr::Bin(op, a, b) => {
                let (a, b) = (eval_iexpr(a, st), eval_iexpr(b, st));
                match op {
                    IntOp::Add => a + b,
                    IntOp::Sub => a - b,
                    IntOp::Mul => a * b,
                }
            }
        }
    }

    fn eval_bexpr(e: &BoolExpr, st: &State) -> bool {
        match e {
            BoolExpr::True => true,
            BoolExpr::False => false,
            BoolExpr::Not(x) => !eval_bexpr(x, st),
            BoolExpr::And(a, b) => eval_bexpr(a, st) && eval_bexpr(b, st),
            BoolExpr::Or(a, b) => eval_bexpr(a, st) || eval_bexpr(b, st),
            BoolExpr::Cmp(op, a, b) => {
                let (a, b) = (eval_iexpr(a, st), eval_iexpr(b, st));
                match op {
                    CmpOp::Eq => a == b,
                    CmpOp::Ne => a != b,
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                    CmpOp::Gt => a > b,
                    CmpOp::Ge => a >= b,
                }
            }
        }
    }
}
