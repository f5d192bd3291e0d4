//! Fully parenthesised printing; `parse(print(f))` reproduces `f`.

use std::fmt::{self, Display, Formatter, Write};

use super::{Cmp, DistInterval, Expr, Formula, Predicate, TimeInterval};

fn num(f: &mut Formatter<'_>, v: f64) -> fmt::Result {
    if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
        write!(f, "(-{:?})", -v)
    } else {
        write!(f, "{v:?}")
    }
}

fn list(f: &mut Formatter<'_>, v: &[Expr]) -> fmt::Result {
    for (i, e) in v.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{e}")?;
    }
    Ok(())
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(i) => write!(f, "s[{i}]"),
            Expr::Const(c) => num(f, *c),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Min(v) | Expr::Max(v) | Expr::Norm2(v) | Expr::NormInf(v) => {
                let name = match self {
                    Expr::Min(_) => "min",
                    Expr::Max(_) => "max",
                    Expr::Norm2(_) => "norm2",
                    _ => "norminf",
                };
                write!(f, "{name}(")?;
                list(f, v)?;
                f.write_char(')')
            }
            Expr::MinDistInf { args, points } => {
                f.write_str("mindist_inf((")?;
                list(f, args)?;
                f.write_str("), {")?;
                for (i, p) in points.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    f.write_char('(')?;
                    for (j, c) in p.iter().enumerate() {
                        if j > 0 {
                            f.write_str(", ")?;
                        }
                        if *c < 0.0 {
                            write!(f, "-{:?}", -c)?;
                        } else {
                            write!(f, "{c:?}")?;
                        }
                    }
                    f.write_char(')')?;
                }
                f.write_str("})")
            }
        }
    }
}

impl Display for Predicate {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        let op = match self.cmp {
            Cmp::Ge => ">=",
            Cmp::Le => "<=",
        };
        write!(f, "({} {op} {})", self.lhs, self.rhs)
    }
}

impl Display for TimeInterval {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

impl Display for DistInterval {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if self.hi.is_finite() {
            write!(f, "[{:?},{:?}]", self.lo, self.hi)
        } else {
            write!(f, "[{:?},inf]", self.lo)
        }
    }
}

impl Display for Formula {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Pred(p) => write!(f, "{p}"),
            Formula::Not(a) => write!(f, "(not {a})"),
            Formula::And(l, r) => write!(f, "({l} and {r})"),
            Formula::Or(l, r) => write!(f, "({l} or {r})"),
            Formula::Until(i, l, r) => write!(f, "({l} U{i} {r})"),
            Formula::Eventually(i, a) => write!(f, "(F{i} {a})"),
            Formula::Always(i, a) => write!(f, "(G{i} {a})"),
            Formula::Reach(d, l, r) => write!(f, "({l} R{d} {r})"),
            Formula::Escape(d, a) => write!(f, "(E{d} {a})"),
            Formula::Somewhere(d, a) => write!(f, "(somewhere{d} {a})"),
            Formula::Everywhere(d, a) => write!(f, "(everywhere{d} {a})"),
            Formula::Surround(d, l, r) => write!(f, "({l} surround[{d:?}] {r})"),
        }
    }
}
