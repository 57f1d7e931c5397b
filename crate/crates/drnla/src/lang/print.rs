//! Pretty printer. `parse(pretty(p))` reproduces `p` up to location identifiers.

use super::ast::*;
use std::fmt::Write;

fn int_prec(e: &IntExpr) -> u8 {
    match e {
        IntExpr::Const(_) | IntExpr::Var(_) => 4,
        IntExpr::Neg(_) => 3,
        IntExpr::Bin(IntOp::Mul, ..) => 2,
        IntExpr::Bin(..) => 1,
    }
}

fn write_iexpr(out: &mut String, e: &IntExpr, min_prec: u8) {
    let prec = int_prec(e);
    let parens = prec < min_prec;
    if parens {
        out.push('(');
    }
    match e {
        IntExpr::Const(c) => {
            let _ = write!(out, "{c}");
        }
        IntExpr::Var(v) => out.push_str(v),
        IntExpr::Neg(inner) => {
            out.push('-');
            if matches!(**inner, IntExpr::Const(_)) {
                out.push('(');
                write_iexpr(out, inner, 0);
                out.push(')');
            } else {
                write_iexpr(out, inner, 4);
            }
        }
        IntExpr::Bin(op, a, b) => {
            write_iexpr(out, a, prec);
            out.push_str(match op {
                IntOp::Add => " + ",
                IntOp::Sub => " - ",
                IntOp::Mul => "*",
            });
            write_iexpr(out, b, prec + 1);
        }
    }
    if parens {
        out.push(')');
    }
}

fn bool_prec(e: &BoolExpr) -> u8 {
    match e {
        BoolExpr::Or(..) => 1,
        BoolExpr::And(..) => 2,
        _ => 3,
    }
}

fn write_bexpr(out: &mut String, e: &BoolExpr, min_prec: u8) {
    let prec = bool_prec(e);
    let parens = prec < min_prec;
    if parens {
        out.push('(');
    }
    match e {
        BoolExpr::True => out.push_str("true"),
        BoolExpr::False => out.push_str("false"),
        BoolExpr::Not(inner) => {
            out.push_str("!(");
            write_bexpr(out, inner, 0);
            out.push(')');
        }
        BoolExpr::And(a, b) => {
            write_bexpr(out, a, prec);
            out.push_str(" && ");
            write_bexpr(out, b, prec + 1);
        }
        BoolExpr::Or(a, b) => {
            write_bexpr(out, a, prec);
            out.push_str(" || ");
            write_bexpr(out, b, prec + 1);
        }
        BoolExpr::Cmp(op, a, b) => {
            write_iexpr(out, a, 0);
            out.push_str(match op {
                CmpOp::Eq => " == ",
                CmpOp::Ne => " != ",
                CmpOp::Lt => " < ",
                CmpOp::Le => " <= ",
                CmpOp::Gt => " > ",
                CmpOp::Ge => " >= ",
            });
            write_iexpr(out, b, 0);
        }
    }
    if parens {
        out.push(')');
    }
}

/// Renders an integer expression on one line.
pub fn pretty_iexpr(e: &IntExpr) -> String {
    let mut s = String::new();
    write_iexpr(&mut s, e, 0);
    s
}

/// Renders a boolean expression on one line.
pub fn pretty_bexpr(e: &BoolExpr) -> String {
    let mut s = String::new();
    write_bexpr(&mut s, e, 0);
    s
}

struct Printer {
    out: String,
    indent: usize,
}

impl Printer {
    fn line(&mut self, text: &str) {
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn open(&mut self, head: &str) {
        self.line(&format!("{head} {{"));
        self.indent += 1;
    }

    fn close(&mut self, tail: &str) {
        self.indent -= 1;
        self.line(&format!("}}{tail}"));
    }

    fn block(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Assign(v, e) => self.line(&format!("{v} = {};", pretty_iexpr(e))),
            Stmt::Skip => self.line("skip;"),
            Stmt::Break => self.line("break;"),
            Stmt::If { cond, then_branch, else_branch, .. } => {
                self.open(&format!("if ({})", pretty_bexpr(cond)));
                self.block(then_branch);
                if else_branch.is_empty() {
                    self.close("");
                } else {
                    self.close(" else {");
                    self.indent += 1;
                    self.block(else_branch);
                    self.close("");
                }
            }
            Stmt::While { cond, body, .. } => {
                self.open(&format!("while ({})", pretty_bexpr(cond)));
                self.block(body);
                self.close("");
            }
            Stmt::Loop { guard, exit, body, .. } => {
                self.open("while (true)");
                self.open(&format!("if ({})", pretty_bexpr(&negate(guard))));
                for s in exit {
                    self.stmt(s);
                }
                self.line("break;");
                self.close(" else {");
                self.indent += 1;
                self.block(body);
                self.close("");
                self.close("");
            }
            Stmt::Snap { loc, side } => self.line(&format!("snap_{side}({loc});")),
            Stmt::Check { loc, cond, pos, neg, then_branch, else_branch } => {
                let b = pretty_bexpr(cond);
                let p = pretty_bexpr(pos);
                let n = pretty_bexpr(neg);
                self.open(&format!("if (({b}) && !({p}))"));
                self.line(&format!("error_ExpandPos({loc});"));
                self.close(&format!(" else if (({b}) && ({n})) {{"));
                self.indent += 1;
                self.line(&format!("error_TrimNeg({loc});"));
                self.close(&format!(" else if (!({b}) && ({p})) {{"));
                self.indent += 1;
                self.line(&format!("error_TrimPos({loc});"));
                self.close(&format!(" else if (!({b}) && !({n})) {{"));
                self.indent += 1;
                self.line(&format!("error_ExpandNeg({loc});"));
                self.close(&format!(" else if ({b}) {{"));
                self.indent += 1;
                self.block(then_branch);
                self.close(" else {");
                self.indent += 1;
                self.block(else_branch);
                self.close("");
            }
        }
    }
}

/// Renders a program in the surface grammar. Normalized loops print in the
/// `while (true) { if (!guard) { break; } else { ... } }` form.
pub fn pretty(p: &Program) -> String {
    let mut pr = Printer { out: String::new(), indent: 0 };
    for d in &p.decls {
        match d.init {
            Init::Unset => pr.line(&format!("int {};", d.name)),
            Init::Const(c) => pr.line(&format!("int {} = {c};", d.name)),
            Init::Nondet => pr.line(&format!("int {} = *;", d.name)),
        }
    }
    for s in &p.body {
        pr.stmt(s);
    }
    pr.out
}
