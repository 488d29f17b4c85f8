//! Interpretation queries on arbitrary terms through their Böhm tree
//! prefixes.
//!
//! Judgments transfer upwards along the bottom order: a derivation for a cut
//! `t` of a prefix `p` is also one for `p`, with untyped arguments left in
//! place. So the judgments of all cuts of a prefix are exactly those of the
//! prefix itself, and each query works on the single deepest prefix.

use std::collections::BTreeSet;
use std::fmt;

use crate::boehm::{bt_prefix, cuts, matches_eta_bot, BtPrefix, MAX_APPROXIMANTS};
use crate::model::{size, Element, Env, Model};
use crate::syntax::Term;
use crate::typing::{derive, enumerate_judgments, Derivation, DeriveOutcome, Judgment, SearchBudget, TypingError};

/// Bounds of a query: Böhm tree depth, head-reduction fuel per node and
/// element size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bounds {
    pub depth: usize,
    pub fuel: usize,
    pub size: usize,
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "depth={} fuel={} size={}", self.depth, self.fuel, self.size)
    }
}

/// Derivation search calls allowed on one prefix.
const PREFIX_SEARCH_NODES: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// A derivation was found on an approximant.
    Member,
    /// The prefix is the whole Böhm tree and refutes the judgment.
    NonMember,
    /// Not found on the computed prefix; the tree was truncated.
    NotFoundAtBound,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Member => "member",
            Verdict::NonMember => "non-member-at-bound",
            Verdict::NotFoundAtBound => "member-not-found-at-bound",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemberResult {
    pub verdict: Verdict,
    /// A derivation for `approximant` when the verdict is [`Verdict::Member`].
    pub witness: Option<Derivation>,
    pub approximant: Term,
    pub prefix_exact: bool,
    pub depth: usize,
    pub fuel: usize,
}

pub fn member(m: &Term, env: &Env, ty: &Element, model: &Model, depth: usize, fuel: usize) -> MemberResult {
    let prefix = bt_prefix(m, depth, fuel);
    let budget = SearchBudget { nodes: PREFIX_SEARCH_NODES, depth, fuel, ..SearchBudget::default() };
    let (verdict, witness) = match derive(env, &prefix.term, ty, model, budget) {
        DeriveOutcome::Found(d) => (Verdict::Member, Some(d)),
        DeriveOutcome::Refuted if prefix.is_exact() => (Verdict::NonMember, None),
        _ => (Verdict::NotFoundAtBound, None),
    };
    let prefix_exact = prefix.is_exact();
    MemberResult { verdict, witness, approximant: prefix.term, prefix_exact, depth, fuel }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundedInterp {
    pub judgments: BTreeSet<Judgment>,
    pub prefix: BtPrefix,
    pub bounds: Bounds,
}

/// All judgments within the element bound of the approximants of `m` at the
/// given depth and fuel.
pub fn interp_bounded(m: &Term, model: &Model, bounds: Bounds) -> Result<BoundedInterp, TypingError> {
    let prefix = bt_prefix(m, bounds.depth, bounds.fuel);
    let judgments = enumerate_judgments(&prefix.term, model, bounds.size)?;
    Ok(BoundedInterp { judgments, prefix, bounds })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Equal,
    /// The left interpretation is strictly included in the right one.
    LeftSubRight,
    RightSubLeft,
    Incomparable,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Equal => "equal-at-bound",
            Relation::LeftSubRight => "left-sub-right-at-bound",
            Relation::RightSubLeft => "right-sub-left-at-bound",
            Relation::Incomparable => "incomparable-at-bound",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Comparison {
    pub relation: Relation,
    /// The smallest confirmed judgment of the left side missing on the right.
    pub left_only: Option<Judgment>,
    pub right_only: Option<Judgment>,
    /// Differences that vanished when re-checked at doubled depth and fuel.
    pub unconfirmed: usize,
    pub bounds: Bounds,
}

fn judgment_key(j: &Judgment) -> (usize, Judgment) {
    let biggest = j.env.elements().map(size).chain([size(&j.ty)]).max().unwrap_or(0);
    (biggest, j.clone())
}

/// Compares bounded interpretations. A judgment present on one side only is
/// reported after checking that it is still not found on the other side at
/// doubled depth and fuel.
pub fn compare(m: &Term, n: &Term, model: &Model, bounds: Bounds) -> Result<Comparison, TypingError> {
    let left = interp_bounded(m, model, bounds)?.judgments;
    let right = interp_bounded(n, model, bounds)?.judgments;
    let mut unconfirmed = 0;
    let mut confirm = |only: Vec<&Judgment>, other: &Term| -> Option<Judgment> {
        let mut only: Vec<(usize, Judgment)> = only.into_iter().map(judgment_key).collect();
        only.sort();
        for (_, j) in only {
            let again = member(other, &j.env, &j.ty, model, bounds.depth * 2, bounds.fuel * 2);
            if again.verdict == Verdict::Member {
                unconfirmed += 1;
            } else {
                return Some(j);
            }
        }
        None
    };
    let left_only = confirm(left.difference(&right).collect(), n);
    let right_only = confirm(right.difference(&left).collect(), m);
    let relation = match (&left_only, &right_only) {
        (None, None) => Relation::Equal,
        (None, Some(_)) => Relation::LeftSubRight,
        (Some(_), None) => Relation::RightSubLeft,
        (Some(_), Some(_)) => Relation::Incomparable,
    };
    Ok(Comparison { relation, left_only, right_only, unconfirmed, bounds })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LerResult {
    pub holds_at_bound: bool,
    /// A smallest approximant of the left term that matches nothing on the
    /// right.
    pub offending: Option<Term>,
    /// The right prefix is the whole Böhm tree, so a failure is definitive.
    pub refutation_exact: bool,
    pub depth: usize,
    pub fuel: usize,
}

/// Checks that every approximant of `m` is below an eta-expansion of an
/// approximant of `n`, on prefixes of the given depth and fuel.
pub fn ler_probe(m: &Term, n: &Term, depth: usize, fuel: usize) -> LerResult {
    let left = bt_prefix(m, depth, fuel);
    let right = bt_prefix(n, depth, fuel);
    let fits = |t: &Term| matches_eta_bot(t, &right.term).expect("prefixes are normal");
    let mut result =
        LerResult { holds_at_bound: true, offending: None, refutation_exact: right.is_exact(), depth, fuel };
    if fits(&left.term) {
        return result;
    }
    result.holds_at_bound = false;
    let mut candidates = if crate::boehm::count_cuts(&left.term) <= MAX_APPROXIMANTS as u128 {
        cuts(&left.term)
    } else {
        vec![left.term.clone()]
    };
    candidates.sort_by_key(|t| t.size());
    result.offending = candidates.into_iter().find(|t| !fits(t));
    result
}
