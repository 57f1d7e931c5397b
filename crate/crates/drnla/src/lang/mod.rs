//! Mini imperative language: syntax, parsing, printing, loop normalization
//! and branch-site discovery.
//!
//! Programs declare 64-bit integer variables (constant, defaulted or
//! nondeterministic) followed by statements. The only compound statements are
//! `if`/`else` and `while`; loops normalize to the break form
//! `while (true) { if (!g) { break; } else { body } }` so that every branch
//! decision in a program happens at a located condition site.

mod ast;
mod parse;
mod print;

pub use ast::{
    negate, BoolExpr, CexCase, CmpOp, Decl, Init, IntExpr, IntOp, Loc, Program, Side, Stmt,
};
pub use parse::{parse, parse_bexpr, ParseError};
pub use print::{pretty, pretty_bexpr, pretty_iexpr};

/// A located branch condition eligible for rewriting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Site {
    pub loc: Loc,
    pub cond: BoolExpr,
}

fn norm_block(stmts: &[Stmt]) -> Vec<Stmt> {
    stmts.iter().map(norm_stmt).collect()
}

fn norm_stmt(s: &Stmt) -> Stmt {
    match s {
        Stmt::While { cond: BoolExpr::True, body, loc } => {
            if let Some((Stmt::If { cond, then_branch, else_branch, .. }, rest)) =
                body.split_first()
            {
                if then_branch.as_slice() == [Stmt::Break] {
                    let mut inner = else_branch.clone();
                    inner.extend_from_slice(rest);
                    return Stmt::Loop {
                        loc: *loc,
                        guard: negate(cond),
                        exit: Vec::new(),
                        body: norm_block(&inner),
                    };
                }
                if else_branch.as_slice() == [Stmt::Break] {
                    let mut inner = then_branch.clone();
                    inner.extend_from_slice(rest);
                    return Stmt::Loop {
                        loc: *loc,
                        guard: cond.clone(),
                        exit: Vec::new(),
                        body: norm_block(&inner),
                    };
                }
            }
            Stmt::Loop {
                loc: *loc,
                guard: BoolExpr::True,
                exit: Vec::new(),
                body: norm_block(body),
            }
        }
        Stmt::While { cond, body, loc } => Stmt::Loop {
            loc: *loc,
            guard: cond.clone(),
            exit: Vec::new(),
            body: norm_block(body),
        },
        Stmt::If { loc, cond, then_branch, else_branch } => Stmt::If {
            loc: *loc,
            cond: cond.clone(),
            then_branch: norm_block(then_branch),
            else_branch: norm_block(else_branch),
        },
        Stmt::Loop { loc, guard, exit, body } => Stmt::Loop {
            loc: *loc,
            guard: guard.clone(),
            exit: norm_block(exit),
            body: norm_block(body),
        },
        other => other.clone(),
    }
}

fn relabel_block(stmts: &mut [Stmt], next: &mut u32) {
    for s in stmts {
        match s {
            Stmt::If { loc, then_branch, else_branch, .. } => {
                *next += 1;
                *loc = Some(Loc(*next));
                relabel_block(then_branch, next);
                relabel_block(else_branch, next);
            }
            Stmt::While { loc, body, .. } => {
                *next += 1;
                *loc = Some(Loc(*next));
                relabel_block(body, next);
            }
            Stmt::Loop { loc, exit, body, .. } => {
                *next += 1;
                *loc = Some(Loc(*next));
                relabel_block(exit, next);
                relabel_block(body, next);
            }
            _ => {}
        }
    }
}

/// Rewrites every `while` into the normalized break-form loop and reassigns
/// site locations in pre-order. Idempotent: a normalized program maps to
/// itself. The pattern `while (true) { if (c) { break; } else { s } }` (or its
/// mirror) is recognized and folded back into a loop whose stored guard is the
/// continue side.
pub fn normalize(p: &Program) -> Program {
    let mut out = Program { decls: p.decls.clone(), body: norm_block(&p.body) };
    let mut next = 0;
    relabel_block(&mut out.body, &mut next);
    out
}

fn visit_sites<'a>(stmts: &'a [Stmt], out: &mut Vec<Site>) {
    for s in stmts {
        match s {
            Stmt::If { loc: Some(loc), cond, then_branch, else_branch } => {
                out.push(Site { loc: *loc, cond: cond.clone() });
                visit_sites(then_branch, out);
                visit_sites(else_branch, out);
            }
            Stmt::If { loc: None, then_branch, else_branch, .. } => {
                visit_sites(then_branch, out);
                visit_sites(else_branch, out);
            }
            Stmt::While { loc, cond, body } => {
                if let Some(loc) = loc {
                    out.push(Site { loc: *loc, cond: cond.clone() });
                }
                visit_sites(body, out);
            }
            Stmt::Loop { loc, guard, exit, body } => {
                if let Some(loc) = loc {
                    out.push(Site { loc: *loc, cond: guard.clone() });
                }
                visit_sites(exit, out);
                visit_sites(body, out);
            }
            _ => {}
        }
    }
}

/// All located branch-condition sites, in pre-order.
pub fn all_sites(p: &Program) -> Vec<Site> {
    let mut out = Vec::new();
    visit_sites(&p.body, &mut out);
    out
}

/// Sites whose condition contains a monomial of degree two or more.
pub fn find_nla_sites(p: &Program) -> Vec<Site> {
    all_sites(p).into_iter().filter(|s| s.cond.degree() >= 2).collect()
}

fn replace_in_block(stmts: &mut [Stmt], target: Loc, new_cond: &BoolExpr, hits: &mut u32) {
    for s in stmts {
        match s {
            Stmt::If { loc, cond, then_branch, else_branch } => {
                if *loc == Some(target) {
                    *cond = new_cond.clone();
                    *hits += 1;
                }
                replace_in_block(then_branch, target, new_cond, hits);
                replace_in_block(else_branch, target, new_cond, hits);
            }
            Stmt::While { loc, cond, body } => {
                if *loc == Some(target) {
                    *cond = new_cond.clone();
                    *hits += 1;
                }
                replace_in_block(body, target, new_cond, hits);
            }
            Stmt::Loop { loc, guard, exit, body } => {
                if *loc == Some(target) {
                    *guard = new_cond.clone();
                    *hits += 1;
                }
                replace_in_block(exit, target, new_cond, hits);
                replace_in_block(body, target, new_cond, hits);
            }
            _ => {}
        }
    }
}

/// Returns a copy of the program with the condition at `loc` replaced.
/// `None` when no site carries that location.
pub fn replace_site_condition(p: &Program, loc: Loc, new_cond: &BoolExpr) -> Option<Program> {
    let mut out = p.clone();
    let mut hits = 0;
    replace_in_block(&mut out.body, loc, new_cond, &mut hits);
    (hits == 1).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const COHENCU_STYLE: &str = "int y = 1;
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

    #[test]
    fn normalize_turns_while_into_break_form() {
        let p = normalize(&parse(COHENCU_STYLE).unwrap());
        let Stmt::Loop { loc, guard, exit, body } = &p.body[0] else {
            panic!("expected normalized loop, got {:?}", p.body[0]);
        };
        assert_eq!(*loc, Some(Loc(1)));
        assert_eq!(guard.degree(), 2);
        assert!(exit.is_empty());
        assert_eq!(body.len(), 4);
        // printed form exposes the negated guard with a break
        let text = pretty(&p);
        assert!(text.contains("while (true)"));
        assert!(text.contains("z*z - 12*y - 6*z + 12 + c > k"));
        assert!(text.contains("break;"));
    }

    #[test]
    fn normalize_is_idempotent_and_recognizes_break_form() {
        let p = normalize(&parse(COHENCU_STYLE).unwrap());
        assert_eq!(normalize(&p), p);
        // round trip through text, then normalize: same program
        let reparsed = normalize(&parse(&pretty(&p)).unwrap());
        assert_eq!(reparsed, p);
    }

    #[test]
    fn normalize_handles_mirrored_break_form() {
        let src = "int x = *;
while (true) {
    if (x > 0) {
        x = x - 1;
    } else {
        break;
    }
}
";
        let p = normalize(&parse(src).unwrap());
        let Stmt::Loop { guard, body, .. } = &p.body[0] else { panic!() };
        assert_eq!(pretty_bexpr(guard), "x > 0");
        assert_eq!(body.len(), 1);
    }

    #[test]
    fn nla_sites_found_only_for_degree_two_plus() {
        let p = normalize(&parse(COHENCU_STYLE).unwrap());
        let sites = find_nla_sites(&p);
        assert_eq!(sites.len(), 1);
        assert_eq!(sites[0].loc, Loc(1));
        let linear = normalize(&parse("int x = *; while (x > 0) { x = x - 1; }").unwrap());
        assert!(find_nla_sites(&linear).is_empty());
        assert_eq!(all_sites(&linear).len(), 1);
    }

    #[test]
    fn roundtrip_modulo_locations() {
        for src in [
            COHENCU_STYLE,
            "int a = *; int b = -3; if (a*a == b) { a = 0; } else { if (b < a) { skip; } }",
            "int x = *; while (x*x > 4) { if (x > 0) { x = x - 1; } else { x = x + 1; } }",
        ] {
            let p = parse(src).unwrap();
            let again = parse(&pretty(&p)).unwrap();
            assert_eq!(again, p, "round trip failed for:\n{src}");
        }
    }

    #[test]
    fn replace_site_condition_swaps_guard() {
        let p = normalize(&parse(COHENCU_STYLE).unwrap());
        let new_cond = parse_bexpr("0 >= c - k", &p.var_names()).unwrap();
        let q = replace_site_condition(&p, Loc(1), &new_cond).unwrap();
        let Stmt::Loop { guard, .. } = &q.body[0] else { panic!() };
        assert_eq!(pretty_bexpr(guard), "0 >= c - k");
        assert!(replace_site_condition(&p, Loc(9), &new_cond).is_none());
    }
}
