//! Empty-multiset polarity and the normalizability oracle over `E`, and
//! finite-depth witnesses of recursive trees.

use std::fmt;

use thiserror::Error;

use crate::boehm::{bt_prefix, jt_approximant};
use crate::model::{Element, Env, Model, ModelError, MultiSet};
use crate::semantics::Verdict;
use crate::syntax::Term;
use crate::tree::{PathSpec, RecTree, TreeError};
use crate::typing::{
    check_derivation, derive, enumerate_judgments_with, Derivation, DeriveOutcome, HeadResults, Judgment, SearchBudget,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("polarity is defined for models without equations; `{0}` has some")]
    HasEquations(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PolarityReport {
    /// The empty multiset occurs positively.
    pub positive: bool,
    pub negative: bool,
}

impl fmt::Display for PolarityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "positive={} negative={}", self.positive, self.negative)
    }
}

pub fn polarity(model: &Model, a: &Element) -> Result<PolarityReport, AnalysisError> {
    if model.has_equations() {
        return Err(AnalysisError::HasEquations(model.name().to_string()));
    }
    Ok(element_polarity(a))
}

/// `a -> b` carries the empty multiset negatively when `a` is empty, keeps
/// the polarities of `b`, and flips those of the members of `a`.
pub fn element_polarity(e: &Element) -> PolarityReport {
    match e.as_arrow() {
        None => PolarityReport::default(),
        Some((a, b)) => {
            let target = element_polarity(b);
            let source = multiset_polarity(a);
            PolarityReport {
                positive: target.positive || source.negative,
                negative: a.is_empty() || target.negative || source.positive,
            }
        }
    }
}

pub fn multiset_polarity(a: &MultiSet) -> PolarityReport {
    a.iter().map(element_polarity).fold(PolarityReport::default(), |acc, p| PolarityReport {
        positive: acc.positive || p.positive,
        negative: acc.negative || p.negative,
    })
}

pub fn env_polarity(env: &Env) -> PolarityReport {
    env.iter().fold(PolarityReport::default(), |acc, (_, a)| {
        let p = multiset_polarity(a);
        PolarityReport { positive: acc.positive || p.positive, negative: acc.negative || p.negative }
    })
}

/// No positive empty multiset in the type, no negative one in the
/// environment.
pub fn is_normalizing_judgment(j: &Judgment) -> bool {
    !element_polarity(&j.ty).positive && !env_polarity(&j.env).negative
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NfVerdict {
    /// A judgment without forbidden empty multisets was derived.
    Normalizable {
        judgment: Judgment,
        derivation: Derivation,
    },
    NoEvidenceAtBound,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NfReport {
    pub verdict: NfVerdict,
    pub approximant: Term,
    pub size: usize,
    pub depth: usize,
    pub fuel: usize,
}

/// Searches the judgments in `E` of the Böhm tree prefix of `m` for one with
/// no positive empty multiset in its type and no negative one in its
/// environment.
///
/// The search is restricted to judgments whose variable-headed applications
/// all have result the first atom and singleton argument multisets. Any
/// qualifying judgment can be shrunk into this form without growing its
/// elements: the arguments it uses keep at least one copy each, and an atom
/// replaces any result.
pub fn has_nf_oracle(m: &Term, size: usize, depth: usize, fuel: usize) -> NfReport {
    let e = Model::builtin("E").expect("built-in model");
    let prefix = bt_prefix(m, depth, fuel);
    let mut verdict = NfVerdict::NoEvidenceAtBound;
    if let Ok(judgments) = enumerate_judgments_with(&prefix.term, &e, size, HeadResults::Atom0) {
        if let Some(j) = judgments.into_iter().find(is_normalizing_judgment) {
            let budget = SearchBudget { nodes: 2_000_000, ..SearchBudget::default() };
            if let DeriveOutcome::Found(d) = derive(&j.env, &prefix.term, &j.ty, &e, budget) {
                debug_assert_eq!(check_derivation(&d, &e), Ok(()));
                verdict = NfVerdict::Normalizable { judgment: j, derivation: d };
            }
        }
    }
    NfReport { verdict, approximant: prefix.term, size, depth, fuel }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WitnessStatus {
    WitnessToDepth,
    /// No element chain reaches this level (1-based).
    Refuted {
        level: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessVerdict {
    pub status: WitnessStatus,
    /// Branches followed, as far as the evidence goes.
    pub path_prefix: Vec<u64>,
    /// The element chosen at each level, starting with the probed one.
    pub evidence: Vec<Element>,
    pub depth: usize,
}

impl fmt::Display for WitnessStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WitnessStatus::WitnessToDepth => f.write_str("witness-to-depth"),
            WitnessStatus::Refuted { level } => write!(f, "refuted at depth {level}"),
        }
    }
}

/// Members of the multiset reached by taking branch `k` out of `e`.
fn branch_members(model: &Model, e: &Element, k: u64) -> Option<Vec<Element>> {
    let (sources, _) = model.unfold_n(e, k as usize + 1)?;
    let a = sources.last().expect("unfolded at least once");
    Some(a.distinct().into_iter().cloned().collect())
}

/// Follows `path` down `tree` from `a` for `depth` levels, backtracking over
/// the members of each multiset.
pub fn witness_probe(
    model: &Model,
    a: &Element,
    tree: &RecTree,
    path: &PathSpec,
    depth: usize,
) -> Result<WitnessVerdict, AnalysisError> {
    let branches = path.prefix_in(tree, depth)?;
    let mut best = (0, vec![a.clone()]);
    let mut chain = vec![a.clone()];
    let ok = follow(model, &branches, 0, &mut chain, &mut best);
    let status = if ok { WitnessStatus::WitnessToDepth } else { WitnessStatus::Refuted { level: best.0 + 1 } };
    let evidence = if ok { chain } else { best.1 };
    let reached = evidence.len() - 1;
    Ok(WitnessVerdict { status, path_prefix: branches[..reached.min(depth)].to_vec(), evidence, depth })
}

fn follow(
    model: &Model,
    branches: &[u64],
    level: usize,
    chain: &mut Vec<Element>,
    best: &mut (usize, Vec<Element>),
) -> bool {
    if level > best.0 {
        *best = (level, chain.clone());
    }
    if level == branches.len() {
        return true;
    }
    let cur = chain.last().expect("nonempty chain").clone();
    for b in branch_members(model, &cur, branches[level]).unwrap_or_default() {
        chain.push(b);
        if follow(model, branches, level + 1, chain, best) {
            return true;
        }
        chain.pop();
    }
    false
}

/// The result of searching over every path of a tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathSearch {
    /// The deepest level any chain reached, capped at the probed depth.
    pub reached: usize,
    pub path: Vec<u64>,
    pub evidence: Vec<Element>,
    /// The node budget ran out before the search finished.
    pub exhausted: bool,
}

/// Search calls allowed in one path search.
pub const PATH_SEARCH_NODES: usize = 1_000_000;

/// Searches every path of `tree` for an unfolding chain from `a` of length
/// `depth`.
pub fn search_paths(model: &Model, a: &Element, tree: &RecTree, depth: usize) -> PathSearch {
    let mut s = Searcher { model, tree, depth, calls: 0, best: None, exhausted: false };
    let mut pos = Vec::new();
    let mut chain = vec![a.clone()];
    s.go(&mut pos, &mut chain);
    let (reached, path, evidence) = s.best.unwrap_or((0, Vec::new(), vec![a.clone()]));
    PathSearch { reached, path, evidence, exhausted: s.exhausted }
}

struct Searcher<'a> {
    model: &'a Model,
    tree: &'a RecTree,
    depth: usize,
    calls: usize,
    best: Option<(usize, Vec<u64>, Vec<Element>)>,
    exhausted: bool,
}

impl Searcher<'_> {
    fn go(&mut self, pos: &mut Vec<u64>, chain: &mut Vec<Element>) -> bool {
        self.calls += 1;
        if self.calls > PATH_SEARCH_NODES {
            self.exhausted = true;
            return false;
        }
        let level = pos.len();
        if self.best.as_ref().is_none_or(|b| level > b.0) {
            self.best = Some((level, pos.clone(), chain.clone()));
        }
        if level == self.depth {
            return true;
        }
        let cur = chain.last().expect("nonempty chain").clone();
        for k in 0..self.tree.branching(pos) {
            for b in branch_members(self.model, &cur, k).unwrap_or_default() {
                pos.push(k);
                chain.push(b);
                if self.go(pos, chain) {
                    return true;
                }
                pos.pop();
                chain.pop();
                if self.exhausted {
                    return false;
                }
            }
        }
        false
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KoenigResult {
    WitnessFound { element: Element, path: Vec<u64>, evidence: Vec<Element> },
    NoneAtBound { elements_tried: usize, exhausted: bool },
}

/// Looks for an element of size at most `element_bound` with an unfolding
/// chain of length `depth` along some path of `tree`.
pub fn lambda_koenig_probe(
    model: &Model,
    tree: &RecTree,
    element_bound: usize,
    depth: usize,
) -> Result<KoenigResult, AnalysisError> {
    let elements = model.enumerate_elements(element_bound)?;
    let mut exhausted = false;
    for a in &elements {
        let s = search_paths(model, a, tree, depth);
        exhausted |= s.exhausted;
        if s.reached == depth && !s.exhausted {
            return Ok(KoenigResult::WitnessFound { element: a.clone(), path: s.path, evidence: s.evidence });
        }
    }
    Ok(KoenigResult::NoneAtBound { elements_tried: elements.len(), exhausted })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HyperReport {
    /// Each element with the level (1-based) at which every path fails.
    pub refuted: Vec<(Element, usize)>,
    /// Elements that reached the probed depth.
    pub surviving: Vec<Element>,
    pub depth: usize,
}

impl HyperReport {
    pub fn no_witness_at_bound(&self) -> bool {
        self.surviving.is_empty()
    }
}

/// Tries every element of size at most `element_bound` as a witness.
pub fn hyperimmune_probe(
    model: &Model,
    tree: &RecTree,
    element_bound: usize,
    depth: usize,
) -> Result<HyperReport, AnalysisError> {
    let mut report = HyperReport { refuted: Vec::new(), surviving: Vec::new(), depth };
    for a in model.enumerate_elements(element_bound)? {
        let s = search_paths(model, &a, tree, depth);
        if s.reached == depth || s.exhausted {
            report.surviving.push(a);
        } else {
            report.refuted.push((a, s.reached + 1));
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsistencyReport {
    /// Some path carries an unfolding chain of the probed length.
    pub witness_to_depth: bool,
    pub member: Verdict,
    /// A witness pairs with non-membership, a refutation with membership.
    pub consistent: bool,
    pub jt: Term,
    pub depth: usize,
    pub fuel: usize,
}

/// Compares the witness search for `a` with membership of `([a], a)` in the
/// depth-`depth` approximant of the eta-expansion of a variable that follows
/// `tree`.
pub fn char_wt_crosscheck(model: &Model, a: &Element, tree: &RecTree, depth: usize, fuel: usize) -> ConsistencyReport {
    let s = search_paths(model, a, tree, depth);
    let witness_to_depth = s.reached == depth;
    let jt = jt_approximant(tree, "x", depth);
    let env = Env::single("x", a.clone());
    let budget = SearchBudget { nodes: 2_000_000, depth, fuel, ..SearchBudget::default() };
    let member = match derive(&env, &jt, a, model, budget) {
        DeriveOutcome::Found(_) => Verdict::Member,
        DeriveOutcome::Refuted => Verdict::NonMember,
        DeriveOutcome::BudgetExhausted => Verdict::NotFoundAtBound,
    };
    let consistent = !s.exhausted
        && match member {
            Verdict::Member => !witness_to_depth,
            Verdict::NonMember | Verdict::NotFoundAtBound => witness_to_depth,
        };
    ConsistencyReport { witness_to_depth, member, consistent, jt, depth, fuel }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_term;
    use proptest::prelude::*;

    fn e() -> Model {
        Model::builtin("E").unwrap()
    }

    #[test]
    fn polarity_examples() {
        let m = e();
        let p = polarity(&m, &m.parse_element("[] -> <0>").unwrap()).unwrap();
        assert_eq!(p, PolarityReport { positive: false, negative: true });
        let p = polarity(&m, &m.parse_element("[[] -> <0>] -> <1>").unwrap()).unwrap();
        assert_eq!(p, PolarityReport { positive: true, negative: false });
        assert_eq!(polarity(&m, &m.parse_element("<5>").unwrap()).unwrap(), PolarityReport::default());
        let ds = Model::builtin("Dstar").unwrap();
        assert!(polarity(&ds, &ds.parse_element("*").unwrap()).is_err());
    }

    /// Walks the element tracking the sign of each position.
    fn occurrences(e: &Element, positive: bool, out: &mut Vec<bool>) {
        if let Some((a, b)) = e.as_arrow() {
            if a.is_empty() {
                out.push(!positive);
            }
            for x in a.iter() {
                occurrences(x, !positive, out);
            }
            occurrences(b, positive, out);
        }
    }

    #[test]
    fn polarity_matches_occurrence_walk() {
        let m = e();
        for a in m.enumerate_elements(3).unwrap().iter() {
            let mut signs = Vec::new();
            occurrences(a, true, &mut signs);
            let p = element_polarity(a);
            assert_eq!(p.positive, signs.contains(&true), "{}", m.show(a));
            assert_eq!(p.negative, signs.contains(&false), "{}", m.show(a));
        }
    }

    fn arb_element() -> impl Strategy<Value = Element> {
        (0u32..3).prop_map(Element::atom).prop_recursive(5, 40, 3, |inner| {
            (prop::collection::vec(inner.clone(), 0..3), inner)
                .prop_map(|(a, t)| Element::arrow_raw(MultiSet::new(a), t))
        })
    }

    #[test]
    fn normalizability_examples() {
        let t = |s: &str| parse_term(s).unwrap();
        assert!(matches!(has_nf_oracle(&t("@I"), 3, 6, 100).verdict, NfVerdict::Normalizable { .. }));
        assert!(matches!(has_nf_oracle(&t("@K"), 3, 6, 100).verdict, NfVerdict::Normalizable { .. }));
        for s in ["\\x.x @Omega", "@Omega", "@Y"] {
            for size in 2..=5 {
                assert_eq!(has_nf_oracle(&t(s), size, 6, 100).verdict, NfVerdict::NoEvidenceAtBound, "{s}");
            }
        }
    }

    #[test]
    fn witness_examples() {
        let ds = Model::builtin("Dstar").unwrap();
        let dw = Model::builtin("Domega").unwrap();
        let star = Element::atom(0);
        let unary = RecTree::parse("unary").unwrap();
        let zero = PathSpec::constant(0);
        let v = witness_probe(&ds, &star, &unary, &zero, 10).unwrap();
        assert_eq!(v.status, WitnessStatus::WitnessToDepth);
        assert_eq!(v.evidence.len(), 11);
        let v = witness_probe(&dw, &star, &unary, &zero, 5).unwrap();
        assert_eq!(v.status, WitnessStatus::Refuted { level: 1 });
        let m = e();
        let v = witness_probe(&m, &star, &unary, &zero, 1).unwrap();
        assert_eq!(v.status, WitnessStatus::Refuted { level: 1 });
        let binary = RecTree::parse("binary").unwrap();
        assert!(witness_probe(&ds, &star, &unary, &PathSpec::constant(1), 2).is_err());
        let v = witness_probe(&ds, &star, &binary, &PathSpec::parse("if n < 3 then 1 else 0").unwrap(), 6).unwrap();
        assert_eq!(v.status, WitnessStatus::WitnessToDepth);
    }

    #[test]
    fn koenig_and_hyper_examples() {
        let ds = Model::builtin("Dstar").unwrap();
        let dw = Model::builtin("Domega").unwrap();
        for tree in ["unary", "binary"] {
            let tree = RecTree::parse(tree).unwrap();
            match lambda_koenig_probe(&ds, &tree, 1, 10).unwrap() {
                KoenigResult::WitnessFound { element, .. } => assert_eq!(element, Element::atom(0)),
                other => panic!("{other:?}"),
            }
        }
        let unary = RecTree::parse("unary").unwrap();
        assert!(matches!(lambda_koenig_probe(&dw, &unary, 4, 10).unwrap(), KoenigResult::NoneAtBound { .. }));
        let h = hyperimmune_probe(&dw, &unary, 4, 10).unwrap();
        assert!(h.no_witness_at_bound());
        assert!(h.refuted.iter().any(|(a, level)| *a == Element::atom(0) && *level == 1));
    }

    #[test]
    fn crosscheck_examples() {
        let ds = Model::builtin("Dstar").unwrap();
        let dw = Model::builtin("Domega").unwrap();
        let unary = RecTree::parse("unary").unwrap();
        let star = Element::atom(0);
        let r = char_wt_crosscheck(&ds, &star, &unary, 3, 50);
        assert!(r.witness_to_depth && r.member != Verdict::Member && r.consistent);
        let r = char_wt_crosscheck(&dw, &star, &unary, 3, 50);
        assert!(!r.witness_to_depth && r.member == Verdict::Member && r.consistent);
        let a = ds.parse_element("[] -> *").unwrap();
        assert!(char_wt_crosscheck(&ds, &a, &unary, 2, 50).consistent);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn polarity_matches_occurrence_walk_on_large_elements(a in arb_element()) {
            let mut signs = Vec::new();
            occurrences(&a, true, &mut signs);
            let p = element_polarity(&a);
            prop_assert_eq!(p.positive, signs.contains(&true));
            prop_assert_eq!(p.negative, signs.contains(&false));
        }

        #[test]
        fn witness_depth_is_monotone(idx in 0usize..40, d in 1usize..6) {
            let ds = Model::builtin("Dstar").unwrap();
            let elems = ds.enumerate_elements(3).unwrap();
            let a = &elems[idx % elems.len()];
            let tree = RecTree::parse("binary").unwrap();
            let path = PathSpec::constant(1);
            if witness_probe(&ds, a, &tree, &path, d).unwrap().status == WitnessStatus::WitnessToDepth {
                for d2 in 0..d {
                    prop_assert_eq!(witness_probe(&ds, a, &tree, &path, d2).unwrap().status, WitnessStatus::WitnessToDepth);
                }
            }
        }

        #[test]
        fn crosscheck_agrees_on_small_elements(idx in 0usize..40, d in 1usize..4, which in 0usize..2) {
            let ds = Model::builtin("Dstar").unwrap();
            let elems = ds.enumerate_elements(3).unwrap();
            let a = &elems[idx % elems.len()];
            let tree = RecTree::parse(["unary", "binary"][which]).unwrap();
            prop_assert!(char_wt_crosscheck(&ds, a, &tree, d, 50).consistent);
        }
    }
}
