//! Beta, head, eta and bottom reduction with explicit fuel.

use std::collections::HashSet;

use thiserror::Error;

use crate::syntax::{self, subst, NotNormal, Step, Term};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReductionOutcome {
    pub result: Term,
    pub steps_used: usize,
    /// The result is normal for the requested reduction.
    pub completed: bool,
    /// The reduction is known never to complete: it revisited a term up to
    /// renaming, or got stuck on a bottom head.
    pub diverges: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReductionError {
    #[error("no subterm at path `{0}`")]
    BadPath(String),
    #[error("subterm at path `{0}` is not a beta-redex")]
    NotRedex(String),
}

/// One leftmost-outermost beta step, if any redex exists.
pub fn beta_step(t: &Term) -> Option<Term> {
    match t {
        Term::App(f, a) => {
            if let Term::Lam(x, b) = &**f {
                return Some(subst(b, x, a));
            }
            if let Some(f2) = beta_step(f) {
                return Some(Term::App(Box::new(f2), a.clone()));
            }
            beta_step(a).map(|a2| Term::App(f.clone(), Box::new(a2)))
        }
        Term::Lam(x, b) => beta_step(b).map(|b2| Term::Lam(x.clone(), Box::new(b2))),
        Term::Var(_) | Term::Bot => None,
    }
}

pub fn beta_normalize(m: &Term, fuel: usize) -> ReductionOutcome {
    let mut t = m.clone();
    for used in 0..fuel {
        match beta_step(&t) {
            Some(next) => t = next,
            None => return ReductionOutcome { result: t, steps_used: used, completed: true, diverges: false },
        }
    }
    let completed = beta_step(&t).is_none();
    ReductionOutcome { result: t, steps_used: fuel, completed, diverges: false }
}

/// Contracts the head redex `\xs.(\y.P) Q Rs`, if there is one.
pub fn head_step(t: &Term) -> Option<Term> {
    match t {
        Term::Lam(x, b) => head_step(b).map(|b2| Term::Lam(x.clone(), Box::new(b2))),
        Term::App(f, a) => {
            if let Term::Lam(x, b) = &**f {
                Some(subst(b, x, a))
            } else {
                head_step(f).map(|f2| Term::App(Box::new(f2), a.clone()))
            }
        }
        Term::Var(_) | Term::Bot => None,
    }
}

fn is_hnf(t: &Term) -> bool {
    let (_, head, _) = t.spine();
    matches!(head, Term::Var(_))
}

/// Keys up to renaming of bound variables, for loop detection.
fn debruijn_key(t: &Term) -> String {
    fn go(t: &Term, bound: &mut Vec<String>, out: &mut String) {
        match t {
            Term::Var(x) => match bound.iter().rposition(|b| b == x) {
                Some(i) => out.push_str(&format!("#{}", bound.len() - i)),
                None => {
                    out.push('$');
                    out.push_str(x);
                }
            },
            Term::Lam(x, b) => {
                out.push('\\');
                bound.push(x.clone());
                go(b, bound, out);
                bound.pop();
            }
            Term::App(f, a) => {
                out.push('(');
                go(f, bound, out);
                out.push(' ');
                go(a, bound, out);
                out.push(')');
            }
            Term::Bot => out.push('!'),
        }
    }
    let mut out = String::new();
    go(t, &mut Vec::new(), &mut out);
    out
}

const LOOP_CHECK_LIMIT: usize = 4096;

pub fn head_reduce(m: &Term, fuel: usize) -> ReductionOutcome {
    let mut t = m.clone();
    let mut seen = HashSet::new();
    let mut used = 0;
    loop {
        if is_hnf(&t) {
            return ReductionOutcome { result: t, steps_used: used, completed: true, diverges: false };
        }
        let (_, head, _) = t.spine();
        if head.is_bot() {
            return ReductionOutcome { result: t, steps_used: used, completed: false, diverges: true };
        }
        if t.size() <= LOOP_CHECK_LIMIT && !seen.insert(debruijn_key(&t)) {
            return ReductionOutcome { result: t, steps_used: used, completed: false, diverges: true };
        }
        if used == fuel {
            return ReductionOutcome { result: t, steps_used: used, completed: false, diverges: false };
        }
        t = head_step(&t).expect("a term that is not a head normal form has a head redex");
        used += 1;
    }
}

pub fn eta_nf(t: &Term) -> Term {
    match t {
        Term::Lam(x, b) => {
            let body = eta_nf(b);
            if let Term::App(f, a) = &body {
                if matches!(&**a, Term::Var(y) if y == x) && !f.occurs_free(x) {
                    return (**f).clone();
                }
            }
            Term::Lam(x.clone(), Box::new(body))
        }
        Term::App(f, a) => Term::app(eta_nf(f), eta_nf(a)),
        Term::Var(_) | Term::Bot => t.clone(),
    }
}

/// Normal form for `\x.bot -> bot` and `bot M -> bot`.
pub fn bot_normalize(t: &Term) -> Term {
    match t {
        Term::Lam(x, b) => match bot_normalize(b) {
            Term::Bot => Term::Bot,
            body => Term::Lam(x.clone(), Box::new(body)),
        },
        Term::App(f, a) => match bot_normalize(f) {
            Term::Bot => Term::Bot,
            fun => Term::app(fun, bot_normalize(a)),
        },
        Term::Var(_) | Term::Bot => t.clone(),
    }
}

pub fn count_redexes(t: &Term) -> usize {
    redex_paths(t).len()
}

/// Positions of all redex occurrences, leftmost-outermost first.
pub fn redex_paths(t: &Term) -> Vec<Vec<Step>> {
    fn go(t: &Term, here: &mut Vec<Step>, out: &mut Vec<Vec<Step>>) {
        match t {
            Term::App(f, a) => {
                if t.is_redex() {
                    out.push(here.clone());
                }
                here.push(Step::Fun);
                go(f, here, out);
                here.pop();
                here.push(Step::Arg);
                go(a, here, out);
                here.pop();
            }
            Term::Lam(_, b) => {
                here.push(Step::Body);
                go(b, here, out);
                here.pop();
            }
            Term::Var(_) | Term::Bot => {}
        }
    }
    let mut out = Vec::new();
    go(t, &mut Vec::new(), &mut out);
    out
}

/// Contracts the redex at `path`.
pub fn contract_at(t: &Term, path: &[Step]) -> Result<Term, ReductionError> {
    let shown = || syntax::path_to_string(path);
    let redex = syntax::subterm_at(t, path).ok_or_else(|| ReductionError::BadPath(shown()))?;
    let Term::App(f, a) = redex else {
        return Err(ReductionError::NotRedex(shown()));
    };
    let Term::Lam(x, b) = &**f else {
        return Err(ReductionError::NotRedex(shown()));
    };
    // The contractum has no free variable the redex lacks, so plugging it
    // back cannot capture.
    Ok(syntax::replace_at(t, path, subst(b, x, a)).expect("path was just resolved"))
}

/// `t` is below `u` in the bottom ordering: `u` with some subterms replaced
/// by bottom, up to renaming of bound variables.
pub fn le_bot(t: &Term, u: &Term) -> Result<bool, NotNormal> {
    for s in [t, u] {
        if !s.is_beta_bot_normal() {
            return Err(NotNormal(s.to_string()));
        }
    }
    Ok(le_bot_unchecked(t, u))
}

pub(crate) fn le_bot_unchecked(t: &Term, u: &Term) -> bool {
    fn go<'a>(t: &'a Term, u: &'a Term, bt: &mut Vec<&'a str>, bu: &mut Vec<&'a str>) -> bool {
        match (t, u) {
            (Term::Bot, _) => true,
            (Term::Var(x), Term::Var(y)) => {
                let ix = bt.iter().rposition(|b| *b == x);
                let iy = bu.iter().rposition(|b| *b == y);
                match (ix, iy) {
                    (Some(i), Some(j)) => bt.len() - i == bu.len() - j,
                    (None, None) => x == y,
                    _ => false,
                }
            }
            (Term::Lam(x, b), Term::Lam(y, c)) => {
                bt.push(x);
                bu.push(y);
                let r = go(b, c, bt, bu);
                bt.pop();
                bu.pop();
                r
            }
            (Term::App(f, a), Term::App(g, b)) => go(f, g, bt, bu) && go(a, b, bt, bu),
            _ => false,
        }
    }
    go(t, u, &mut Vec::new(), &mut Vec::new())
}
