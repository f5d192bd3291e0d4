//! Positive normal form: push negations down to the predicates.

use super::{surround_expansion, Formula, LogicError};

/// Rewrites `f` without `Not` nodes. Negated predicates get `h ↦ −h` and a
/// fresh id above the current maximum.
///
/// Fails with [`LogicError::NegationNotEliminable`] when a negation sits
/// directly over `U`, `R` or `E`, which have no dual in the supported syntax.
/// `surround` always fails since its expansion negates `R` and `E`.
pub fn to_pnf(f: &Formula) -> Result<Formula, LogicError> {
    let mut next = f.max_predicate_id().map_or(0, |m| m + 1);
    pos(f, &mut next)
}

fn pos(f: &Formula, next: &mut usize) -> Result<Formula, LogicError> {
    use Formula::*;
    let bx = |f: Formula| Box::new(f);
    Ok(match f {
        True | False | Pred(_) => f.clone(),
        Not(a) => neg(a, next)?,
        And(l, r) => And(bx(pos(l, next)?), bx(pos(r, next)?)),
        Or(l, r) => Or(bx(pos(l, next)?), bx(pos(r, next)?)),
        Until(i, l, r) => Until(*i, bx(pos(l, next)?), bx(pos(r, next)?)),
        Eventually(i, a) => Eventually(*i, bx(pos(a, next)?)),
        Always(i, a) => Always(*i, bx(pos(a, next)?)),
        Reach(d, l, r) => Reach(*d, bx(pos(l, next)?), bx(pos(r, next)?)),
        Escape(d, a) => Escape(*d, bx(pos(a, next)?)),
        Somewhere(d, a) => Somewhere(*d, bx(pos(a, next)?)),
        Everywhere(d, a) => Everywhere(*d, bx(pos(a, next)?)),
        Surround(d, l, r) => pos(&surround_expansion(*d, l, r), next)?,
    })
}

/// PNF of `¬f`.
fn neg(f: &Formula, next: &mut usize) -> Result<Formula, LogicError> {
    use Formula::*;
    let bx = |f: Formula| Box::new(f);
    Ok(match f {
        True => False,
        False => True,
        Pred(p) => {
            let id = *next;
            *next += 1;
            Pred(p.negated(id))
        }
        Not(a) => pos(a, next)?,
        And(l, r) => Or(bx(neg(l, next)?), bx(neg(r, next)?)),
        Or(l, r) => And(bx(neg(l, next)?), bx(neg(r, next)?)),
        Eventually(i, a) => Always(*i, bx(neg(a, next)?)),
        Always(i, a) => Eventually(*i, bx(neg(a, next)?)),
        Somewhere(d, a) => Everywhere(*d, bx(neg(a, next)?)),
        Everywhere(d, a) => Somewhere(*d, bx(neg(a, next)?)),
        Until(..) => return Err(LogicError::NegationNotEliminable("until")),
        Reach(..) => return Err(LogicError::NegationNotEliminable("reach")),
        Escape(..) => return Err(LogicError::NegationNotEliminable("escape")),
        Surround(d, l, r) => neg(&surround_expansion(*d, l, r), next)?,
    })
}
