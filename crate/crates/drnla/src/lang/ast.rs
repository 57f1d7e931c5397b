//! Abstract syntax for the mini imperative language.

use std::fmt;

/// Identifier of a branch-condition site, assigned in pre-order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Loc(pub u32);

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

impl Loc {
    /// Parses the `L<n>` form produced by `Display`.
    pub fn parse(s: &str) -> Option<Loc> {
        s.strip_prefix('L')?.parse().ok().map(Loc)
    }
}

/// Which side of a branch condition a snapshot belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Pos,
    Neg,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Pos => write!(f, "pos"),
            Side::Neg => write!(f, "neg"),
        }
    }
}

/// The four ways a candidate pair can disagree with the original condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CexCase {
    /// Condition holds but the positive candidate does not: grow it.
    ExpandPos,
    /// Condition holds yet the negative candidate also holds: shrink it.
    TrimNeg,
    /// Condition fails but the positive candidate holds: shrink it.
    TrimPos,
    /// Condition fails and the negative candidate misses the state: grow it.
    ExpandNeg,
}

impl fmt::Display for CexCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CexCase::ExpandPos => write!(f, "ExpandPos"),
            CexCase::TrimNeg => write!(f, "TrimNeg"),
            CexCase::TrimPos => write!(f, "TrimPos"),
            CexCase::ExpandNeg => write!(f, "ExpandNeg"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum IntExpr {
    Const(i64),
    Var(String),
    Neg(Box<IntExpr>),
    Bin(IntOp, Box<IntExpr>, Box<IntExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    True,
    False,
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Cmp(CmpOp, IntExpr, IntExpr),
}

/// Declaration initializer. `Unset` evaluates to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Init {
    Unset,
    Const(i64),
    Nondet,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Decl {
    pub name: String,
    pub init: Init,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Assign(String, IntExpr),
    Skip,
    Break,
    If {
        loc: Option<Loc>,
        cond: BoolExpr,
        then_branch: Vec<Stmt>,
        else_branch: Vec<Stmt>,
    },
    /// Source-level loop; eliminated by `normalize`.
    While {
        loc: Option<Loc>,
        cond: BoolExpr,
        body: Vec<Stmt>,
    },
    /// Normalized loop: `while (true) { if (!guard) { exit; break; } else { body } }`.
    /// The stored guard is the side on which the loop keeps running.
    Loop {
        loc: Option<Loc>,
        guard: BoolExpr,
        exit: Vec<Stmt>,
        body: Vec<Stmt>,
    },
    /// Snapshot marker inserted by instrumentation; records the state under
    /// the given side of the site's condition.
    Snap { loc: Loc, side: Side },
    /// Five-way checked branch: the original condition plus a candidate pair.
    /// Disagreement between them aborts the run with the matching case.
    Check {
        loc: Loc,
        cond: BoolExpr,
        pos: BoolExpr,
        neg: BoolExpr,
        then_branch: Vec<Stmt>,
        else_branch: Vec<Stmt>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub body: Vec<Stmt>,
}

impl Program {
    /// Declared variable names in declaration order.
    pub fn var_names(&self) -> Vec<String> {
        self.decls.iter().map(|d| d.name.clone()).collect()
    }

    /// Names of nondeterministic inputs in declaration order.
    pub fn nondet_vars(&self) -> Vec<String> {
        self.decls
            .iter()
            .filter(|d| d.init == Init::Nondet)
            .map(|d| d.name.clone())
            .collect()
    }
}

impl IntExpr {
    pub fn var(name: &str) -> IntExpr {
        IntExpr::Var(name.to_string())
    }

    pub fn bin(op: IntOp, lhs: IntExpr, rhs: IntExpr) -> IntExpr {
        IntExpr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    /// Syntactic degree: constants 0, variables 1, products add, sums take max.
    pub fn degree(&self) -> u32 {
        match self {
            IntExpr::Const(_) => 0,
            IntExpr::Var(_) => 1,
            IntExpr::Neg(e) => e.degree(),
            IntExpr::Bin(IntOp::Mul, a, b) => a.degree() + b.degree(),
            IntExpr::Bin(_, a, b) => a.degree().max(b.degree()),
        }
    }

    pub fn visit_vars(&self, f: &mut impl FnMut(&str)) {
        match self {
            IntExpr::Const(_) => {}
            IntExpr::Var(v) => f(v),
            IntExpr::Neg(e) => e.visit_vars(f),
            IntExpr::Bin(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }
}

impl BoolExpr {
    pub fn not(e: BoolExpr) -> BoolExpr {
        BoolExpr::Not(Box::new(e))
    }

    pub fn and(a: BoolExpr, b: BoolExpr) -> BoolExpr {
        BoolExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: BoolExpr, b: BoolExpr) -> BoolExpr {
        BoolExpr::Or(Box::new(a), Box::new(b))
    }

    /// Highest syntactic degree among the comparisons in this expression.
    pub fn degree(&self) -> u32 {
        match self {
            BoolExpr::True | BoolExpr::False => 0,
            BoolExpr::Not(e) => e.degree(),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => a.degree().max(b.degree()),
            BoolExpr::Cmp(_, a, b) => a.degree().max(b.degree()),
        }
    }

    pub fn visit_vars(&self, f: &mut impl FnMut(&str)) {
        match self {
            BoolExpr::True | BoolExpr::False => {}
            BoolExpr::Not(e) => e.visit_vars(f),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
            BoolExpr::Cmp(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    /// Variables mentioned, sorted and deduplicated.
    pub fn vars(&self) -> Vec<String> {
        let mut out = std::collections::BTreeSet::new();
        self.visit_vars(&mut |v| {
            out.insert(v.to_string());
        });
        out.into_iter().collect()
    }
}

/// Structural complement. Comparisons flip their operator, conjunctions and
/// disjunctions distribute, explicit negations unwrap. An involution on
/// negation-free expressions.
pub fn negate(e: &BoolExpr) -> BoolExpr {
    match e {
        BoolExpr::True => BoolExpr::False,
        BoolExpr::False => BoolExpr::True,
        BoolExpr::Not(inner) => (**inner).clone(),
        BoolExpr::And(a, b) => BoolExpr::or(negate(a), negate(b)),
        BoolExpr::Or(a, b) => BoolExpr::and(negate(a), negate(b)),
        BoolExpr::Cmp(op, a, b) => {
            let flipped = match op {
                CmpOp::Eq => CmpOp::Ne,
                CmpOp::Ne => CmpOp::Eq,
                CmpOp::Lt => CmpOp::Ge,
                CmpOp::Le => CmpOp::Gt,
                CmpOp::Gt => CmpOp::Le,
                CmpOp::Ge => CmpOp::Lt,
            };
            BoolExpr::Cmp(flipped, a.clone(), b.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negate_is_an_involution_without_negations() {
        let e = BoolExpr::and(
            BoolExpr::Cmp(CmpOp::Le, IntExpr::var("x"), IntExpr::Const(3)),
            BoolExpr::or(
                BoolExpr::Cmp(CmpOp::Eq, IntExpr::var("y"), IntExpr::var("z")),
                BoolExpr::Cmp(CmpOp::Lt, IntExpr::Const(0), IntExpr::var("x")),
            ),
        );
        assert_eq!(negate(&negate(&e)), e);
    }

    #[test]
    fn negate_unwraps_explicit_negation() {
        let inner = BoolExpr::Cmp(CmpOp::Lt, IntExpr::Const(0), IntExpr::var("x"));
        assert_eq!(negate(&BoolExpr::not(inner.clone())), inner);
    }

    #[test]
    fn degree_counts_products() {
        // x*x - y has degree 2, x + y has degree 1
        let sq = IntExpr::bin(
            IntOp::Sub,
            IntExpr::bin(IntOp::Mul, IntExpr::var("x"), IntExpr::var("x")),
            IntExpr::var("y"),
        );
        assert_eq!(sq.degree(), 2);
        let lin = IntExpr::bin(IntOp::Add, IntExpr::var("x"), IntExpr::var("y"));
        assert_eq!(lin.degree(), 1);
        assert_eq!(IntExpr::Const(12).degree(), 0);
    }
}
