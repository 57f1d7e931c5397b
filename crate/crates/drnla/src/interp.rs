//! Concrete execution: checked 64-bit interpreter, snapshot instrumentation,
//! seeded input sampling and differential testing.
//!
//! Programs are compiled to an index-based form before running so that large
//! input enumerations stay cheap; all public surfaces speak in terms of
//! variable names.

use crate::lang::{
    BoolExpr, CexCase, CmpOp, Init, IntExpr, IntOp, Loc, Program, Side, Stmt,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Total assignment of declared variables.
pub type State = BTreeMap<String, i64>;

/// Snapshot store: states observed per site and side, deduplicated.
pub type SnapshotLog = BTreeMap<(Loc, Side), BTreeSet<State>>;

/// Inclusive per-variable input ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputBox {
    ranges: BTreeMap<String, (i64, i64)>,
}

impl InputBox {
    pub fn uniform(vars: &[String], lo: i64, hi: i64) -> InputBox {
        assert!(lo <= hi, "empty input range");
        InputBox { ranges: vars.iter().map(|v| (v.clone(), (lo, hi))).collect() }
    }

    pub fn set(&mut self, var: &str, lo: i64, hi: i64) {
        assert!(lo <= hi, "empty input range");
        self.ranges.insert(var.to_string(), (lo, hi));
    }

    pub fn range(&self, var: &str) -> Option<(i64, i64)> {
        self.ranges.get(var).copied()
    }

    /// Number of points over the given variables, `None` on overflow.
    pub fn point_count(&self, vars: &[String]) -> Option<u128> {
        let mut total: u128 = 1;
        for v in vars {
            let (lo, hi) = self.ranges.get(v).copied()?;
            let width = (hi as i128 - lo as i128 + 1) as u128;
            total = total.checked_mul(width)?;
        }
        Some(total)
    }

    /// One uniform draw per variable, in the given order.
    pub fn sample(&self, vars: &[String], rng: &mut ChaCha8Rng) -> Option<State> {
        let mut out = State::new();
        for v in vars {
            let (lo, hi) = self.ranges.get(v).copied()?;
            out.insert(v.clone(), rng.gen_range(lo..=hi));
        }
        Some(out)
    }

    /// Lexicographic enumeration over the given variable order.
    pub fn enumerate<'a>(&'a self, vars: &'a [String]) -> impl Iterator<Item = State> + 'a {
        BoxIter::new(self, vars)
    }
}

struct BoxIter<'a> {
    vars: &'a [String],
    ranges: Vec<(i64, i64)>,
    cur: Vec<i64>,
    done: bool,
}

impl<'a> BoxIter<'a> {
    fn new(b: &'a InputBox, vars: &'a [String]) -> Self {
        let ranges: Vec<(i64, i64)> = vars
            .iter()
            .map(|v| b.ranges.get(v).copied().expect("variable missing from input box"))
            .collect();
        let cur = ranges.iter().map(|&(lo, _)| lo).collect();
        BoxIter { vars, ranges, cur, done: false }
    }
}

impl Iterator for BoxIter<'_> {
    type Item = State;

    fn next(&mut self) -> Option<State> {
        if self.done {
            return None;
        }
        let item: State = self
            .vars
            .iter()
            .zip(&self.cur)
            .map(|(v, &x)| (v.clone(), x))
            .collect();
        // odometer increment, most significant digit first
        let mut i = self.cur.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.cur[i] < self.ranges[i].1 {
                self.cur[i] += 1;
                for j in i + 1..self.cur.len() {
                    self.cur[j] = self.ranges[j].0;
                }
                break;
            }
        }
        Some(item)
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Completed,
    LoopLimitHit,
    ArithmeticOverflow,
    /// A checked branch observed a disagreement between the original
    /// condition and the candidate pair.
    ErrorHit { case: CexCase, loc: Loc },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: RunOutcome,
    /// Final state (at the abort point for non-completed runs).
    pub state: State,
    /// Small-step count: one per executed statement or branch evaluation.
    pub steps: u64,
    /// `(site, state before evaluation)` per branch evaluation, when recorded.
    pub trace: Vec<(Loc, State)>,
    /// `(site, decision)` per located branch evaluation, when recorded.
    pub path: Vec<(Loc, bool)>,
    /// States captured by snapshot statements.
    pub snapshots: SnapshotLog,
}

#[derive(Debug, Clone, Copy)]
pub struct ExecOpts {
    pub loop_bound: u64,
    pub record_trace: bool,
    pub record_path: bool,
}

/// Loop bound used while sampling executions for learning.
pub const DEFAULT_SAMPLE_LOOP_BOUND: u64 = 500;
/// Sampling draws per call when collecting snapshots.
pub const DEFAULT_SAMPLE_RUNS: u32 = 100;
/// Sampling box half-width: inputs are drawn from `[-30, 30]` by default.
pub const DEFAULT_SAMPLE_BOX: (i64, i64) = (-30, 30);

impl Default for ExecOpts {
    fn default() -> Self {
        ExecOpts { loop_bound: DEFAULT_SAMPLE_LOOP_BOUND, record_trace: false, record_path: false }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InterpError {
    #[error("no {side} snapshots were observed at {loc} over {runs} runs")]
    EmptySide { loc: Loc, side: Side, runs: u32 },
    #[error("programs declare different nondeterministic inputs")]
    InputMismatch,
    #[error("input box misses a range for '{var}'")]
    MissingRange { var: String },
}

// ---------------------------------------------------------------------------
// compiled form

#[derive(Clone, Copy)]
enum CExpr {
    Const(i64),
    Var(u32),
    Neg(u32),
    Bin(IntOp, u32, u32),
}

#[derive(Clone, Copy)]
enum CBool {
    True,
    False,
    Not(u32),
    And(u32, u32),
    Or(u32, u32),
    Cmp(CmpOp, u32, u32),
}

enum CStmt {
    Assign(u32, u32),
    Skip,
    Break,
    If { loc: Option<Loc>, cond: u32, then_branch: Vec<CStmt>, else_branch: Vec<CStmt> },
    Loop { loc: Option<Loc>, guard: u32, exit: Vec<CStmt>, body: Vec<CStmt> },
    Snap { loc: Loc, side: Side },
    Check { loc: Loc, cond: u32, pos: u32, neg: u32, then_branch: Vec<CStmt>, else_branch: Vec<CStmt> },
}

pub(crate) struct Compiled {
    vars: Vec<String>,
    init: Vec<Init>,
    iexprs: Vec<CExpr>,
    bexprs: Vec<CBool>,
    body: Vec<CStmt>,
}

struct Compiler {
    vars: Vec<String>,
    iexprs: Vec<CExpr>,
    bexprs: Vec<CBool>,
}

impl Compiler {
    fn var(&self, name: &str) -> u32 {
        self.vars
            .iter()
            .position(|v| v == name)
            .unwrap_or_else(|| panic!("undeclared variable '{name}'")) as u32
    }

    fn iexpr(&mut self, e: &IntExpr) -> u32 {
        let node = match e {
            IntExpr::Const(c) => CExpr::Const(*c),
            IntExpr::Var(v) => CExpr::Var(self.var(v)),
            IntExpr::Neg(inner) => CExpr::Neg(self.iexpr(inner)),
            IntExpr::Bin(op, a, b) => {
                let (a, b) = (self.iexpr(a), self.iexpr(b));
                CExpr::Bin(*op, a, b)
            }
        };
        self.iexprs.push(node);
        (self.iexprs.len() - 1) as u32
    }

    fn bexpr(&mut self, e: &BoolExpr) -> u32 {
        let node = match e {
            BoolExpr::True => CBool::True,
            BoolExpr::False => CBool::False,
            BoolExpr::Not(inner) => CBool::Not(self.bexpr(inner)),
            BoolExpr::And(a, b) => {
                let (a, b) = (self.bexpr(a), self.bexpr(b));
                CBool::And(a, b)
            }
            BoolExpr::Or(a, b) => {
                let (a, b) = (self.bexpr(a), self.bexpr(b));
                CBool::Or(a, b)
            }
            BoolExpr::Cmp(op, a, b) => {
                let (a, b) = (self.iexpr(a), self.iexpr(b));
                CBool::Cmp(*op, a, b)
            }
        };
        self.bexprs.push(node);
        (self.bexprs.len() - 1) as u32
    }

    fn block(&mut self, stmts: &[Stmt]) -> Vec<CStmt> {
        stmts.iter().map(|s| self.stmt(s)).collect()
    }

    fn stmt(&mut self, s: &Stmt) -> CStmt {
        match s {
            Stmt::Assign(v, e) => CStmt::Assign(self.var(v), self.iexpr(e)),
            Stmt::Skip => CStmt::Skip,
            Stmt::Break => CStmt::Break,
            Stmt::If { loc, cond, then_branch, else_branch } => CStmt::If {
                loc: *loc,
                cond: self.bexpr(cond),
                then_branch: self.block(then_branch),
                else_branch: self.block(else_branch),
            },
            Stmt::While { loc, cond, body } => CStmt::Loop {
                loc: *loc,
                guard: self.bexpr(cond),
                exit: Vec::new(),
                body: self.block(body),
            },
            Stmt::Loop { loc, guard, exit, body } => CStmt::Loop {
                loc: *loc,
                guard: self.bexpr(guard),
                exit: self.block(exit),
                body: self.block(body),
            },
            Stmt::Snap { loc, side } => CStmt::Snap { loc: *loc, side: *side },
            Stmt::Check { loc, cond, pos, neg, then_branch, else_branch } => CStmt::Check {
                loc: *loc,
                cond: self.bexpr(cond),
                pos: self.bexpr(pos),
                neg: self.bexpr(neg),
                then_branch: self.block(then_branch),
                else_branch: self.block(else_branch),
            },
        }
    }
}

pub(crate) fn compile(p: &Program) -> Compiled {
    let mut c = Compiler {
        vars: p.var_names(),
        iexprs: Vec::new(),
        bexprs: Vec::new(),
    };
    let body = c.block(&p.body);
    Compiled {
        vars: c.vars,
        init: p.decls.iter().map(|d| d.init).collect(),
        iexprs: c.iexprs,
        bexprs: c.bexprs,
        body,
    }
}

// ---------------------------------------------------------------------------
// execution

enum Flow {
    Seq,
    Broke,
    Halt(RunOutcome),
}

struct Machine<'a> {
    prog: &'a Compiled,
    vals: Vec<i64>,
    steps: u64,
    opts: ExecOpts,
    trace: Vec<(Loc, State)>,
    path: Vec<(Loc, bool)>,
    snapshots: SnapshotLog,
}

impl Machine<'_> {
    fn state(&self) -> State {
        self.prog
            .vars
            .iter()
            .cloned()
            .zip(self.vals.iter().copied())
            .collect()
    }

    fn eval(&self, id: u32) -> Option<i64> {
        match self.prog.iexprs[id as usize] {
            CExpr::Const(c) => Some(c),
            CExpr::Var(i) => Some(self.vals[i as usize]),
            CExpr::Neg(e) => self.eval(e)?.checked_neg(),
            CExpr::Bin(op, a, b) => {
                let (a, b) = (self.eval(a)?, self.eval(b)?);
                match op {
                    IntOp::Add => a.checked_add(b),
                    IntOp::Sub => a.checked_sub(b),
                    IntOp::Mul => a.checked_mul(b),
                }
            }
        }
    }

    /// Conditions evaluate with wide intermediates: a comparison of two
    /// in-range values never halts the run, only assignments that leave the
    /// machine's integer range do.
    fn eval_wide(&self, id: u32) -> Option<i128> {
        match self.prog.iexprs[id as usize] {
            CExpr::Const(c) => Some(c as i128),
            CExpr::Var(i) => Some(self.vals[i as usize] as i128),
            CExpr::Neg(e) => self.eval_wide(e)?.checked_neg(),
            CExpr::Bin(op, a, b) => {
                let (a, b) = (self.eval_wide(a)?, self.eval_wide(b)?);
                match op {
                    IntOp::Add => a.checked_add(b),
                    IntOp::Sub => a.checked_sub(b),
                    IntOp::Mul => a.checked_mul(b),
                }
            }
        }
    }

    fn eval_bool_wide(&self, id: u32) -> Option<bool> {
        match self.prog.bexprs[id as usize] {
            CBool::True => Some(true),
            CBool::False => Some(false),
            CBool::Not(e) => Some(!self.eval_bool_wide(e)?),
            CBool::And(a, b) => Some(self.eval_bool_wide(a)? && self.eval_bool_wide(b)?),
            CBool::Or(a, b) => Some(self.eval_bool_wide(a)? || self.eval_bool_wide(b)?),
            CBool::Cmp(op, a, b) => {
                let (a, b) = (self.eval_wide(a)?, self.eval_wide(b)?);
                Some(match op {
                    CmpOp::Eq => a == b,
                    CmpOp::Ne => a != b,
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                    CmpOp::Gt => a > b,
                    CmpOp::Ge => a >= b,
                })
            }
        }
    }

    fn note_branch(&mut self, loc: Option<Loc>, decision: bool, pre: Option<State>) {
        if let Some(loc) = loc {
            if let Some(pre) = pre {
                self.trace.push((loc, pre));
            }
            if self.opts.record_path {
                self.path.push((loc, decision));
            }
        }
    }

    fn block(&mut self, stmts: &[CStmt]) -> Flow {
        for s in stmts {
            match self.stmt(s) {
                Flow::Seq => {}
                other => return other,
            }
        }
        Flow::Seq
    }

    fn stmt(&mut self, s: &CStmt) -> Flow {
        match s {
            CStmt::Assign(v, e) => {
                self.steps += 1;
                match self.eval(*e) {
                    Some(val) => {
                        self.vals[*v as usize] = val;
                        Flow::Seq
                    }
                    None => Flow::Halt(RunOutcome::ArithmeticOverflow),
                }
            }
            CStmt::Skip => {
                self.steps += 1;
                Flow::Seq
            }
            CStmt::Break => {
                self.steps += 1;
                Flow::Broke
            }
            CStmt::Snap { loc, side } => {
                self.steps += 1;
                let st = self.state();
                self.snapshots.entry((*loc, *side)).or_default().insert(st);
                Flow::Seq
            }
            CStmt::If { loc, cond, then_branch, else_branch } => {
                self.steps += 1;
                let pre = (loc.is_some() && self.opts.record_trace).then(|| self.state());
                let Some(b) = self.eval_bool_wide(*cond) else {
                    return Flow::Halt(RunOutcome::ArithmeticOverflow);
                };
                self.note_branch(*loc, b, pre);
                if b {
                    self.block(then_branch)
                } else {
                    self.block(else_branch)
                }
            }
            CStmt::Loop { loc, guard, exit, body } => {
                let mut iters: u64 = 0;
                loop {
                    self.steps += 1;
                    let pre = (loc.is_some() && self.opts.record_trace).then(|| self.state());
                    let Some(g) = self.eval_bool_wide(*guard) else {
                        return Flow::Halt(RunOutcome::ArithmeticOverflow);
                    };
                    self.note_branch(*loc, g, pre);
                    if !g {
                        return match self.block(exit) {
                            Flow::Seq => Flow::Seq,
                            other => other,
                        };
                    }
                    if iters == self.opts.loop_bound {
                        return Flow::Halt(RunOutcome::LoopLimitHit);
                    }
                    iters += 1;
                    match self.block(body) {
                        Flow::Seq => {}
                        Flow::Broke => return Flow::Seq,
                        halt => return halt,
                    }
                }
            }
            CStmt::Check { loc, cond, pos, neg, then_branch, else_branch } => {
                self.steps += 1;
                let pre = self.opts.record_trace.then(|| self.state());
                let Some(b) = self.eval_bool_wide(*cond) else {
                    return Flow::Halt(RunOutcome::ArithmeticOverflow);
                };
                let (Some(p), Some(n)) = (self.eval_bool_wide(*pos), self.eval_bool_wide(*neg))
                else {
                    return Flow::Halt(RunOutcome::ArithmeticOverflow);
                };
                let case = if b && !p {
                    Some(CexCase::ExpandPos)
                } else if b && n {
                    Some(CexCase::TrimNeg)
                } else if !b && p {
                    Some(CexCase::TrimPos)
                } else if !b && !n {
                    Some(CexCase::ExpandNeg)
                } else {
                    None
                };
                if let Some(case) = case {
                    return Flow::Halt(RunOutcome::ErrorHit { case, loc: *loc });
                }
                self.note_branch(Some(*loc), b, pre);
                if b {
                    self.block(then_branch)
                } else {
                    self.block(else_branch)
                }
            }
        }
    }
}

/// Runs a program on the given nondeterministic inputs. Missing inputs are a
/// caller bug and panic; constant and defaulted declarations initialize
/// themselves. Arithmetic is checked 64-bit; loops are cut at
/// `opts.loop_bound` iterations per activation.
pub fn exec(p: &Program, inputs: &State, opts: ExecOpts) -> RunResult {
    exec_compiled(&compile(p), inputs, opts)
}

pub(crate) fn exec_compiled(prog: &Compiled, inputs: &State, opts: ExecOpts) -> RunResult {
    let vals: Vec<i64> = prog
        .vars
        .iter()
        .zip(&prog.init)
        .map(|(name, init)| match init {
            Init::Unset => 0,
            Init::Const(c) => *c,
            Init::Nondet => *inputs
                .get(name)
                .unwrap_or_else(|| panic!("missing input for nondeterministic '{name}'")),
        })
        .collect();
    let mut m = Machine {
        prog,
        vals,
        steps: 0,
        opts,
        trace: Vec::new(),
        path: Vec::new(),
        snapshots: SnapshotLog::new(),
    };
    let outcome = match m.block(&prog.body) {
        Flow::Seq | Flow::Broke => RunOutcome::Completed,
        Flow::Halt(o) => o,
    };
    RunResult {
        outcome,
        state: m.state(),
        steps: m.steps,
        trace: m.trace,
        path: m.path,
        snapshots: m.snapshots,
    }
}

// ---------------------------------------------------------------------------
// snapshot instrumentation

fn instrument_block(stmts: &[Stmt], target: Loc) -> Vec<Stmt> {
    stmts.iter().map(|s| instrument_stmt(s, target)).collect()
}

fn instrument_stmt(s: &Stmt, target: Loc) -> Stmt {
    match s {
        Stmt::If { loc, cond, then_branch, else_branch } => {
            let mut then_branch = instrument_block(then_branch, target);
            let mut else_branch = instrument_block(else_branch, target);
            if *loc == Some(target) {
                then_branch.insert(0, Stmt::Snap { loc: target, side: Side::Pos });
                else_branch.insert(0, Stmt::Snap { loc: target, side: Side::Neg });
            }
            Stmt::If { loc: *loc, cond: cond.clone(), then_branch, else_branch }
        }
        Stmt::While { loc, cond, body } => Stmt::While {
            loc: *loc,
            cond: cond.clone(),
            body: instrument_block(body, target),
        },
        Stmt::Loop { loc, guard, exit, body } => {
            let mut body = instrument_block(body, target);
            let mut exit = instrument_block(exit, target);
            if *loc == Some(target) {
                body.insert(0, Stmt::Snap { loc: target, side: Side::Pos });
                exit.insert(0, Stmt::Snap { loc: target, side: Side::Neg });
            }
            Stmt::Loop { loc: *loc, guard: guard.clone(), exit, body }
        }
        other => other.clone(),
    }
}

/// Inserts snapshot markers around the condition at `loc`: the positive
/// marker runs first wherever the condition just held, the negative marker
/// first wherever it just failed. For normalized loops that means the head of
/// the body and the exit path before the break.
pub fn instrument_snapshots(p: &Program, loc: Loc) -> Program {
    Program { decls: p.decls.clone(), body: instrument_block(&p.body, loc) }
}

/// Runs `runs` seeded samples from `input_box` against the instrumented
/// program and returns the deduplicated positive and negative states observed
/// at `loc`. Fails with `EmptySide` when a side was never reached.
pub fn collect_snapshots(
    p: &Program,
    loc: Loc,
    runs: u32,
    input_box: &InputBox,
    seed: u64,
) -> Result<(BTreeSet<State>, BTreeSet<State>), InterpError> {
    let (pos, neg) = collect_snapshots_lenient(p, loc, runs, input_box, seed)?;
    if pos.is_empty() {
        return Err(InterpError::EmptySide { loc, side: Side::Pos, runs });
    }
    if neg.is_empty() {
        return Err(InterpError::EmptySide { loc, side: Side::Neg, runs });
    }
    Ok((pos, neg))
}

/// Like [`collect_snapshots`], but returns whatever was observed and leaves
/// empty sides to the caller.
pub fn collect_snapshots_lenient(
    p: &Program,
    loc: Loc,
    runs: u32,
    input_box: &InputBox,
    seed: u64,
) -> Result<(BTreeSet<State>, BTreeSet<State>), InterpError> {
    let instrumented = compile(&instrument_snapshots(p, loc));
    let nondet = p.nondet_vars();
    for v in &nondet {
        if input_box.range(v).is_none() {
            return Err(InterpError::MissingRange { var: v.clone() });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: BTreeSet<State> = BTreeSet::new();
    let mut neg: BTreeSet<State> = BTreeSet::new();
    let opts = ExecOpts::default();
    for _ in 0..runs {
        let inputs = input_box.sample(&nondet, &mut rng).expect("checked above");
        let result = exec_compiled(&instrumented, &inputs, opts);
        for ((l, side), states) in result.snapshots {
            if l != loc {
                continue;
            }
            match side {
                Side::Pos => pos.extend(states),
                Side::Neg => neg.extend(states),
            }
        }
    }
    Ok((pos, neg))
}

// ---------------------------------------------------------------------------
// differential testing

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMode {
    Random { runs: u32, seed: u64 },
    Exhaustive,
}

#[derive(Debug, Clone)]
pub struct DiffReport {
    pub runs: u64,
    pub mismatches: u64,
    /// First diverging input, for diagnostics.
    pub first_mismatch: Option<State>,
    /// Lower median of per-run `right / left` step ratios.
    pub median_step_ratio: f64,
}

/// Runs both programs on identical inputs and compares `(outcome, state)`
/// pairs. The programs must declare the same nondeterministic inputs.
pub fn diff_test(
    left: &Program,
    right: &Program,
    mode: DiffMode,
    input_box: &InputBox,
    loop_bound: u64,
) -> Result<DiffReport, InterpError> {
    let nondet = left.nondet_vars();
    if right.nondet_vars() != nondet {
        return Err(InterpError::InputMismatch);
    }
    for v in &nondet {
        if input_box.range(v).is_none() {
            return Err(InterpError::MissingRange { var: v.clone() });
        }
    }
    let cl = compile(left);
    let cr = compile(right);
    let opts = ExecOpts { loop_bound, record_trace: false, record_path: false };
    let mut ratios: Vec<f64> = Vec::new();
    let mut mismatches = 0u64;
    let mut first_mismatch = None;
    let mut runs = 0u64;
    let mut check = |inputs: State| {
        let a = exec_compiled(&cl, &inputs, opts);
        let b = exec_compiled(&cr, &inputs, opts);
        runs += 1;
        ratios.push(if a.steps == 0 && b.steps == 0 {
            1.0
        } else {
            b.steps as f64 / a.steps.max(1) as f64
        });
        if a.outcome != b.outcome || a.state != b.state {
            mismatches += 1;
            if first_mismatch.is_none() {
                first_mismatch = Some(inputs);
            }
        }
    };
    match mode {
        DiffMode::Random { runs, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..runs {
                let inputs = input_box.sample(&nondet, &mut rng).expect("checked above");
                check(inputs);
            }
        }
        DiffMode::Exhaustive => {
            for inputs in input_box.enumerate(&nondet) {
                check(inputs);
            }
        }
    }
    drop(check);
    ratios.sort_by(|a, b| a.partial_cmp(b).expect("step ratios are finite"));
    let median = if ratios.is_empty() { 1.0 } else { ratios[(ratios.len() - 1) / 2] };
    Ok(DiffReport { runs, mismatches, first_mismatch, median_step_ratio: median })
}
