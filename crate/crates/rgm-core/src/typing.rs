//! The relevant, non-idempotent intersection type system read off a model:
//! derivation trees, their checker, bounded search, and the weighted
//! substitution and subject reduction constructions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::boehm::bt_prefix;
use crate::model::{count_multisets, index_multisets, size, Atom, Element, Env, Model, ModelError, MultiSet};
use crate::reduction::{contract_at, ReductionError};
use crate::syntax::{alpha_eq, fresh, path_to_string, replace_at, NotNormal, Step, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    Var,
    Lam,
    App,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Var => "var",
            Rule::Lam => "lam",
            Rule::App => "app",
        })
    }
}

/// An environment and a type, for a subject known from context.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Judgment {
    pub env: Env,
    pub ty: Element,
}

/// A derivation tree. Application nodes list the function premise first,
/// then one premise per entry of the function's source multiset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    pub rule: Rule,
    pub env: Env,
    pub subject: Term,
    pub ty: Element,
    pub premises: Vec<Derivation>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TypingError {
    #[error(transparent)]
    NotNormal(#[from] NotNormal),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("judgment search exceeded {limit} steps")]
    WorkLimit { limit: u64 },
    #[error("{0} candidate multisets: too many to enumerate")]
    TooManyCandidates(u128),
    #[error("substituted derivations type {found} but the variable needs {expected}")]
    MismatchedParts { expected: String, found: String },
    #[error("substituted derivations must have the substituted term as subject")]
    WrongPartSubject,
    #[error("invalid derivation: {0}")]
    Invalid(#[from] CheckError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
}

impl Derivation {
    pub fn var(x: &str, ty: Element) -> Derivation {
        Derivation { rule: Rule::Var, env: Env::single(x, ty.clone()), subject: Term::var(x), ty, premises: vec![] }
    }

    pub fn lam(model: &Model, x: &str, premise: Derivation) -> Derivation {
        let ty = model.arrow(premise.env.get(x), premise.ty.clone());
        Derivation {
            rule: Rule::Lam,
            env: premise.env.without(x),
            subject: Term::lam(x, premise.subject.clone()),
            ty,
            premises: vec![premise],
        }
    }

    /// `arg` is the argument term, needed when no premise types it.
    pub fn app(fun: Derivation, arg: Term, args: Vec<Derivation>, ty: Element) -> Derivation {
        let env = args.iter().fold(fun.env.clone(), |acc, d| acc.sum(&d.env));
        let subject = Term::app(fun.subject.clone(), arg);
        let mut premises = vec![fun];
        premises.extend(args);
        Derivation { rule: Rule::App, env, subject, ty, premises }
    }

    pub fn judgment(&self) -> Judgment {
        Judgment { env: self.env.clone(), ty: self.ty.clone() }
    }

    pub fn app_count(&self) -> usize {
        usize::from(self.rule == Rule::App) + self.premises.iter().map(Derivation::app_count).sum::<usize>()
    }

    pub fn node_count(&self) -> usize {
        1 + self.premises.iter().map(Derivation::node_count).sum::<usize>()
    }

    /// `(rule "env" "subject" "type" premises...)`
    pub fn to_sexp(&self, model: &Model) -> String {
        let mut out = String::new();
        self.write_sexp(model, &mut out);
        out
    }

    fn write_sexp(&self, model: &Model, out: &mut String) {
        out.push_str(&format!(
            "({} \"{}\" \"{}\" \"{}\"",
            self.rule,
            model.show_env(&self.env),
            self.subject,
            model.show(&self.ty)
        ));
        for p in &self.premises {
            out.push(' ');
            p.write_sexp(model, out);
        }
        out.push(')');
    }
}

/// Same rules, environments, types and arity at every node; subjects may
/// differ.
pub fn shape_eq(a: &Derivation, b: &Derivation) -> bool {
    a.rule == b.rule
        && a.env == b.env
        && a.ty == b.ty
        && a.premises.len() == b.premises.len()
        && a.premises.iter().zip(&b.premises).all(|(p, q)| shape_eq(p, q))
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("at premise path `{path}`: {reason}")]
pub struct CheckError {
    /// Dot-separated premise indices from the root; empty for the root.
    pub path: String,
    pub reason: String,
}

pub fn check_derivation(d: &Derivation, model: &Model) -> Result<(), CheckError> {
    check_node(d, model, &mut Vec::new())
}

fn check_node(d: &Derivation, model: &Model, path: &mut Vec<usize>) -> Result<(), CheckError> {
    let fail = |path: &Vec<usize>, reason: String| {
        let path = path.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(".");
        Err(CheckError { path, reason })
    };
    if !model.is_canonical(&d.ty) || d.env.elements().any(|e| !model.is_canonical(e)) {
        return fail(path, "non-canonical element".into());
    }
    match (&d.subject, d.rule) {
        (Term::Var(x), Rule::Var) => {
            if !d.premises.is_empty() {
                return fail(path, "var node with premises".into());
            }
            if d.env != Env::single(x, d.ty.clone()) {
                return fail(path, format!("var node needs environment {x}:[{}]", model.show(&d.ty)));
            }
        }
        (Term::Lam(x, body), Rule::Lam) => {
            let [p] = d.premises.as_slice() else {
                return fail(path, "lam node needs one premise".into());
            };
            if p.subject != **body {
                return fail(path, "premise subject is not the body".into());
            }
            if d.env != p.env.without(x) {
                return fail(path, "environment does not drop the binder".into());
            }
            if d.ty != model.arrow(p.env.get(x), p.ty.clone()) {
                return fail(path, "type is not the binder multiset arrow the body type".into());
            }
        }
        (Term::App(f, a), Rule::App) => {
            let Some((fun, args)) = d.premises.split_first() else {
                return fail(path, "app node without a function premise".into());
            };
            if fun.subject != **f || args.iter().any(|p| p.subject != **a) {
                return fail(path, "premise subjects do not match the application".into());
            }
            let arg_types: MultiSet = args.iter().map(|p| p.ty.clone()).collect();
            match model.unfold(&fun.ty) {
                Some((source, target)) if source == arg_types && target == d.ty => {}
                _ => return fail(path, "function type does not match argument types and result".into()),
            }
            let sum = args.iter().fold(fun.env.clone(), |acc, p| acc.sum(&p.env));
            if d.env != sum {
                return fail(path, "environment is not the sum of the premises".into());
            }
        }
        (Term::Bot, _) => return fail(path, "bottom has no typing rule".into()),
        _ => return fail(path, format!("rule {} does not fit the subject", d.rule)),
    }
    for (i, p) in d.premises.iter().enumerate() {
        path.push(i);
        check_node(p, model, path)?;
        path.pop();
    }
    Ok(())
}

/// Limits for derivation search on terms that still contain redexes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchBudget {
    /// Size bound on guessed function types at redexes.
    pub elem_size: usize,
    /// Maximum number of search calls.
    pub nodes: usize,
    /// Depth and per-node fuel of the Böhm tree prefix used to refute.
    pub depth: usize,
    pub fuel: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { elem_size: 4, nodes: 200_000, depth: 8, fuel: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeriveOutcome {
    Found(Derivation),
    /// No derivation exists.
    Refuted,
    /// None found within the budget.
    BudgetExhausted,
}

impl DeriveOutcome {
    pub fn derivation(self) -> Option<Derivation> {
        match self {
            DeriveOutcome::Found(d) => Some(d),
            _ => None,
        }
    }
}

/// Searches a derivation of `env ⊢ t : ty`.
///
/// On beta-bot-normal subjects the search is syntax-directed and exhaustive,
/// so failure is a refutation. At a redex the function type is guessed among
/// elements of size `budget.elem_size`; failure there is refuted only when
/// the subject's Böhm tree is finite, fully computed, and refutes.
pub fn derive(env: &Env, t: &Term, ty: &Element, model: &Model, budget: SearchBudget) -> DeriveOutcome {
    let mut d = Deriver::new(model, budget, atom_limit(env, ty, budget.elem_size));
    if let Some(found) = d.go(env, t, ty) {
        debug_assert_eq!(check_derivation(&found, model), Ok(()));
        return DeriveOutcome::Found(found);
    }
    if !d.exhausted && !d.incomplete {
        return DeriveOutcome::Refuted;
    }
    if d.incomplete && !d.exhausted {
        let prefix = bt_prefix(t, budget.depth, budget.fuel);
        if prefix.is_exact() && prefix.term != *t {
            let mut on_prefix = Deriver::new(model, budget, atom_limit(env, ty, budget.elem_size));
            if on_prefix.go(env, &prefix.term, ty).is_none() && !on_prefix.exhausted {
                return DeriveOutcome::Refuted;
            }
        }
    }
    DeriveOutcome::BudgetExhausted
}

fn atom_limit(env: &Env, ty: &Element, floor: usize) -> u32 {
    let mut atoms = BTreeSet::new();
    ty.atoms(&mut atoms);
    env.elements().for_each(|e| e.atoms(&mut atoms));
    atoms.iter().map(|a| a.0 + 1).max().unwrap_or(0).max(floor as u32)
}

struct Deriver<'m> {
    model: &'m Model,
    budget: SearchBudget,
    atom_limit: u32,
    calls: usize,
    exhausted: bool,
    incomplete: bool,
    memo: HashMap<(Env, Term, Element), Option<Derivation>>,
}

impl<'m> Deriver<'m> {
    fn new(model: &'m Model, budget: SearchBudget, atom_limit: u32) -> Self {
        Deriver { model, budget, atom_limit, calls: 0, exhausted: false, incomplete: false, memo: HashMap::new() }
    }

    fn go(&mut self, env: &Env, t: &Term, ty: &Element) -> Option<Derivation> {
        if self.exhausted {
            return None;
        }
        self.calls += 1;
        if self.calls > self.budget.nodes {
            self.exhausted = true;
            return None;
        }
        let fv = t.free_vars();
        if env.vars().any(|x| !fv.contains(x)) {
            return None;
        }
        let key = (env.clone(), t.clone(), ty.clone());
        if let Some(hit) = self.memo.get(&key) {
            return hit.clone();
        }
        let result = match t {
            Term::Bot => None,
            Term::Var(x) => (*env == Env::single(x, ty.clone())).then(|| Derivation::var(x, ty.clone())),
            Term::Lam(x, body) => self.model.unfold(ty).and_then(|(a, alpha)| {
                let mut inner = env.clone();
                inner.add(x, &a);
                self.go(&inner, body, &alpha).map(|p| Derivation::lam(self.model, x, p))
            }),
            Term::App(f, a) => match t.app_spine() {
                (Term::Var(h), args) => self.var_spine(env, h, &args, ty),
                (Term::Lam(..), _) => self.redex(env, f, a, ty),
                _ => None,
            },
        };
        if !self.exhausted {
            self.memo.insert(key, result.clone());
        }
        result
    }

    fn var_spine(&mut self, env: &Env, h: &str, args: &[&Term], ty: &Element) -> Option<Derivation> {
        let heads: Vec<Element> = env.get(h).distinct().into_iter().cloned().collect();
        for delta in heads {
            let Some((sources, rest)) = self.model.unfold_n(&delta, args.len()) else { continue };
            if rest != *ty {
                continue;
            }
            let remaining = env.minus(&Env::single(h, delta.clone())).expect("head type is in the environment");
            let slots: Vec<(usize, Element)> =
                sources.iter().enumerate().flat_map(|(j, a)| a.iter().map(move |b| (j, b.clone()))).collect();
            let arg_refs: Vec<Term> = args.iter().map(|a| (*a).clone()).collect();
            let Some(found) = self.distribute(&remaining, &slots, &arg_refs) else { continue };
            let mut d = Derivation::var(h, delta.clone());
            let mut cur = delta;
            let mut found = found.into_iter().peekable();
            for (j, arg) in args.iter().enumerate() {
                let (_, target) = self.model.unfold(&cur).expect("unfolded above");
                let mut level = Vec::new();
                while found.peek().is_some_and(|(k, _)| *k == j) {
                    level.push(found.next().unwrap().1);
                }
                d = Derivation::app(d, (*arg).clone(), level, target.clone());
                cur = target;
            }
            return Some(d);
        }
        None
    }

    /// Splits `env` over the slots `(argument index, type)`, one derivation
    /// per slot. Interchangeable slots take non-decreasing environments.
    fn distribute(&mut self, env: &Env, slots: &[(usize, Element)], args: &[Term]) -> Option<Vec<(usize, Derivation)>> {
        let mut out = Vec::with_capacity(slots.len());
        self.distribute_from(env, slots, args, 0, None, &mut out).then_some(out)
    }

    fn distribute_from(
        &mut self,
        env: &Env,
        slots: &[(usize, Element)],
        args: &[Term],
        i: usize,
        prev: Option<&Env>,
        out: &mut Vec<(usize, Derivation)>,
    ) -> bool {
        if i == slots.len() {
            return env.is_empty();
        }
        let (j, beta) = &slots[i];
        let arg = &args[*j];
        let fv = arg.free_vars();
        let same_as_prev = i > 0 && slots[i - 1] == slots[i];
        let candidates = if i + 1 == slots.len() { vec![env.clone()] } else { env.restrict(&fv).sub_envs() };
        for part in candidates {
            if self.exhausted {
                return false;
            }
            if same_as_prev && prev.is_some_and(|p| part < *p) {
                continue;
            }
            let Some(d) = self.go(&part, arg, beta) else { continue };
            let rest = env.minus(&part).expect("a sub-environment");
            out.push((*j, d));
            if self.distribute_from(&rest, slots, args, i + 1, Some(&part), out) {
                return true;
            }
            out.pop();
        }
        false
    }

    fn redex(&mut self, env: &Env, f: &Term, a: &Term, ty: &Element) -> Option<Derivation> {
        self.incomplete = true;
        let bound = self.budget.elem_size;
        let mut gen = Generator::new(self.model, self.atom_limit, HeadResults::Any);
        let caps: BTreeMap<String, Cap> = f.free_vars().into_iter().map(|x| (x, Cap::elements(bound))).collect();
        let candidates = match gen.gen(f, bound, &caps) {
            Ok(c) => c,
            Err(_) => {
                self.exhausted = true;
                return None;
            }
        };
        let args = vec![a.clone()];
        for Judgment { env: fenv, ty: tau } in candidates.iter() {
            let Some((source, target)) = self.model.unfold(tau) else { continue };
            if target != *ty {
                continue;
            }
            let Some(rest) = env.minus(fenv) else { continue };
            let slots: Vec<(usize, Element)> = source.iter().map(|b| (0, b.clone())).collect();
            let Some(arg_ds) = self.distribute(&rest, &slots, &args) else { continue };
            let Some(fun) = self.go(fenv, f, tau) else { continue };
            return Some(Derivation::app(fun, a.clone(), arg_ds.into_iter().map(|(_, d)| d).collect(), ty.clone()));
        }
        None
    }
}

/// Which results a variable-headed application may have during generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeadResults {
    /// Every element within the caps, with multisets of any cardinality.
    Any,
    /// Only the first atom, with singleton multisets.
    Atom0,
}

/// Bounds for the elements and the multiset cardinality of a variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cap {
    pub elem: usize,
    pub card: usize,
}

impl Cap {
    pub fn elements(elem: usize) -> Cap {
        Cap { elem, card: usize::MAX }
    }
}

/// Default bound on combination steps of one generation.
pub const DEFAULT_WORK_LIMIT: u64 = 40_000_000;
const MAX_CANDIDATE_MULTISETS: u128 = 2_000_000;

/// A subterm, its result cap, and the caps of its free variables.
type GenKey = (Term, usize, Vec<(String, Cap)>);

/// Bottom-up enumeration of judgments under top-down size caps.
///
/// Every element of a derivation for a beta-bot-normal term is reached by
/// unfolding an element of the conclusion, and unfolding shrinks sizes by
/// one (or stays within the size of the equation components). The caps
/// follow that shrinkage, so the enumeration is exhaustive at its bound.
pub struct Generator<'m> {
    model: &'m Model,
    atom_limit: u32,
    mode: HeadResults,
    eq_size: usize,
    /// Size of guessed function types at redexes.
    pub redex_bound: usize,
    pub work_limit: u64,
    work: u64,
    memo: HashMap<GenKey, Arc<Vec<Judgment>>>,
}

impl<'m> Generator<'m> {
    pub fn new(model: &'m Model, atom_limit: u32, mode: HeadResults) -> Self {
        let eq_size = if model.has_equations() { model.equation_size() } else { 0 };
        Generator {
            model,
            atom_limit,
            mode,
            eq_size,
            redex_bound: atom_limit as usize,
            work_limit: DEFAULT_WORK_LIMIT,
            work: 0,
            memo: HashMap::new(),
        }
    }

    fn child(&self, c: usize) -> usize {
        c.saturating_sub(1).max(self.eq_size)
    }

    fn tick(&mut self, n: u64) -> Result<(), TypingError> {
        self.work += n;
        if self.work > self.work_limit {
            return Err(TypingError::WorkLimit { limit: self.work_limit });
        }
        Ok(())
    }

    fn elements(&self, bound: usize) -> Result<Arc<Vec<Element>>, TypingError> {
        Ok(self.model.elements_with_atoms(bound, self.atom_limit)?)
    }

    /// Judgments `(env, ty)` of `t` with `size(ty) <= rc` and the free
    /// variables of `t` within `caps`.
    pub fn gen(
        &mut self,
        t: &Term,
        rc: usize,
        caps: &BTreeMap<String, Cap>,
    ) -> Result<Arc<Vec<Judgment>>, TypingError> {
        let fv = t.free_vars();
        let key_caps: Vec<(String, Cap)> =
            fv.iter().map(|x| (x.clone(), caps.get(x).copied().unwrap_or(Cap { elem: 0, card: 0 }))).collect();
        let key = (t.clone(), rc, key_caps);
        if let Some(hit) = self.memo.get(&key) {
            return Ok(hit.clone());
        }
        let out: BTreeSet<Judgment> = match t {
            Term::Bot => BTreeSet::new(),
            Term::Var(x) => self.var_spine(x, &[], rc, caps)?,
            Term::Lam(x, body) => {
                let c = self.child(rc);
                let mut inner = caps.clone();
                inner.insert(x.clone(), Cap { elem: c, card: c });
                let mut out = BTreeSet::new();
                for j in self.gen(body, c, &inner)?.iter() {
                    let ty = self.model.arrow(j.env.get(x), j.ty.clone());
                    if size(&ty) <= rc {
                        out.insert(Judgment { env: j.env.without(x), ty });
                    }
                }
                out
            }
            Term::App(f, a) => match t.app_spine() {
                (Term::Var(h), args) => self.var_spine(h, &args, rc, caps)?,
                (Term::Lam(..), _) => self.redex(f, a, rc, caps)?,
                _ => BTreeSet::new(),
            },
        };
        let out = Arc::new(out.into_iter().collect::<Vec<_>>());
        self.memo.insert(key, out.clone());
        Ok(out)
    }

    fn var_spine(
        &mut self,
        h: &str,
        args: &[&Term],
        rc: usize,
        caps: &BTreeMap<String, Cap>,
    ) -> Result<BTreeSet<Judgment>, TypingError> {
        let Some(cap_h) = caps.get(h).copied() else { return Ok(BTreeSet::new()) };
        let mut level_caps = vec![cap_h.elem];
        for _ in args {
            let next = self.child(*level_caps.last().unwrap());
            level_caps.push(next);
        }
        // Per argument: candidate (env, source multiset) pairs.
        let mut levels: Vec<Vec<(Env, MultiSet)>> = Vec::with_capacity(args.len());
        for (j, arg) in args.iter().enumerate() {
            let c = level_caps[j + 1];
            let judgments = self.gen(arg, c, caps)?;
            let (lo, hi) = match self.mode {
                HeadResults::Any => (0, c),
                HeadResults::Atom0 => (1, 1),
            };
            let count = count_multisets(judgments.len() as u128, hi);
            if count > MAX_CANDIDATE_MULTISETS {
                return Err(TypingError::TooManyCandidates(count));
            }
            self.tick(count as u64)?;
            let mut level = Vec::new();
            for idx in index_multisets(judgments.len(), hi) {
                if idx.len() < lo {
                    continue;
                }
                let env = idx.iter().fold(Env::new(), |acc, &i| acc.sum(&judgments[i].env));
                if !within_cards(&env, caps) {
                    continue;
                }
                level.push((env, idx.iter().map(|&i| judgments[i].ty.clone()).collect()));
            }
            levels.push(level);
        }
        let results: Vec<Element> = match self.mode {
            HeadResults::Any => self.elements(rc.min(*level_caps.last().unwrap()))?.as_ref().clone(),
            HeadResults::Atom0 => {
                let atom0 = Element::Atom(Atom(0));
                if rc >= 1 && *level_caps.last().unwrap() >= 1 && self.model.check_atom(Atom(0)).is_ok() {
                    vec![atom0]
                } else {
                    vec![]
                }
            }
        };
        let mut out = BTreeSet::new();
        let mut partial = vec![(Env::new(), Vec::new())];
        for level in &levels {
            let mut next = Vec::new();
            for (env, sources) in &partial {
                self.tick(level.len() as u64)?;
                for (e2, a) in level {
                    let sum = env.sum(e2);
                    if !within_cards(&sum, caps) {
                        continue;
                    }
                    let mut s: Vec<MultiSet> = sources.clone();
                    s.push(a.clone());
                    next.push((sum, s));
                }
            }
            partial = next;
        }
        for (env, sources) in &partial {
            self.tick(results.len() as u64)?;
            for gamma in &results {
                let delta = self.model.arrows(sources, gamma.clone());
                if size(&delta) > cap_h.elem {
                    continue;
                }
                let mut full = env.clone();
                full.add(h, &MultiSet::singleton(delta));
                if within_cards(&full, caps) {
                    out.insert(Judgment { env: full, ty: gamma.clone() });
                }
            }
        }
        Ok(out)
    }

    fn redex(
        &mut self,
        f: &Term,
        a: &Term,
        rc: usize,
        caps: &BTreeMap<String, Cap>,
    ) -> Result<BTreeSet<Judgment>, TypingError> {
        let rb = self.redex_bound;
        let wide: BTreeMap<String, Cap> =
            caps.iter().map(|(x, c)| (x.clone(), Cap { elem: c.elem.max(rb), card: c.card })).collect();
        let funs = self.gen(f, rb, &wide)?;
        let args = self.gen(a, rb, &wide)?;
        let mut by_type: BTreeMap<&Element, Vec<&Env>> = BTreeMap::new();
        for j in args.iter() {
            by_type.entry(&j.ty).or_default().push(&j.env);
        }
        let mut out = BTreeSet::new();
        for j in funs.iter() {
            let Some((source, target)) = self.model.unfold(&j.ty) else { continue };
            if size(&target) > rc {
                continue;
            }
            let mut envs = vec![j.env.clone()];
            for beta in source.iter() {
                let Some(choices) = by_type.get(beta) else {
                    envs.clear();
                    break;
                };
                self.tick((envs.len() * choices.len()) as u64)?;
                envs = envs
                    .iter()
                    .flat_map(|e| choices.iter().map(move |c| e.sum(c)))
                    .filter(|e| within_cards(e, caps))
                    .collect();
            }
            for env in envs {
                if env.iter().all(|(x, m)| m.iter().all(|e| caps.get(x).is_some_and(|c| size(e) <= c.elem))) {
                    out.insert(Judgment { env, ty: target.clone() });
                }
            }
        }
        Ok(out)
    }
}

fn within_cards(env: &Env, caps: &BTreeMap<String, Cap>) -> bool {
    env.iter().all(|(x, a)| caps.get(x).is_some_and(|c| a.len() <= c.card))
}

/// Every judgment of a beta-bot-normal term whose elements have size at most
/// `bound` (and, over countably many atoms, atom ids below `bound`).
pub fn enumerate_judgments(t: &Term, model: &Model, bound: usize) -> Result<BTreeSet<Judgment>, TypingError> {
    enumerate_judgments_with(t, model, bound, HeadResults::Any)
}

pub fn enumerate_judgments_with(
    t: &Term,
    model: &Model,
    bound: usize,
    mode: HeadResults,
) -> Result<BTreeSet<Judgment>, TypingError> {
    if !t.is_beta_bot_normal() {
        return Err(NotNormal(t.to_string()).into());
    }
    let mut gen = Generator::new(model, bound as u32, mode);
    let caps: BTreeMap<String, Cap> = t.free_vars().into_iter().map(|x| (x, Cap::elements(bound))).collect();
    let all = gen.gen(t, bound, &caps)?;
    Ok(all
        .iter()
        .filter(|j| model.fits(&j.ty, bound) && j.env.elements().all(|e| model.fits(e, bound)))
        .cloned()
        .collect())
}

/// From `d0 ▷ Γ, x:[β1..βn] ⊢ M : α` and `parts[i] ▷ Δi ⊢ N : βi`, builds a
/// derivation of `Γ + ΣΔi ⊢ M{N/x} : α` whose application count is the sum
/// of the inputs'. Binders are renamed exactly as [`crate::syntax::subst`]
/// renames them.
pub fn weighted_substitution(
    d0: &Derivation,
    x: &str,
    n: &Term,
    parts: Vec<Derivation>,
    model: &Model,
) -> Result<Derivation, TypingError> {
    let expected = d0.env.get(x);
    let found: MultiSet = parts.iter().map(|p| p.ty.clone()).collect();
    if expected != found {
        return Err(TypingError::MismatchedParts {
            expected: model.show_multiset(&expected),
            found: model.show_multiset(&found),
        });
    }
    if parts.iter().any(|p| p.subject != *n) {
        return Err(TypingError::WrongPartSubject);
    }
    Ok(substitute(d0, x, n, &n.free_vars(), parts, model))
}

fn substitute(
    d: &Derivation,
    x: &str,
    n: &Term,
    fv_n: &BTreeSet<String>,
    mut parts: Vec<Derivation>,
    model: &Model,
) -> Derivation {
    match &d.subject {
        Term::Var(y) if y == x => parts.pop().unwrap_or_else(|| d.clone()),
        Term::Var(_) | Term::Bot => d.clone(),
        Term::Lam(y, b) => {
            if y == x || !b.occurs_free(x) {
                return d.clone();
            }
            let premise = &d.premises[0];
            if fv_n.contains(y) {
                let mut avoid = fv_n.clone();
                avoid.extend(b.free_vars());
                avoid.insert(x.to_string());
                let y2 = fresh(y, &avoid);
                let renaming: Vec<Derivation> =
                    premise.env.get(y).iter().map(|e| Derivation::var(&y2, e.clone())).collect();
                let renamed = substitute(premise, y, &Term::var(&y2), &BTreeSet::from([y2.clone()]), renaming, model);
                Derivation::lam(model, &y2, substitute(&renamed, x, n, fv_n, parts, model))
            } else {
                Derivation::lam(model, y, substitute(premise, x, n, fv_n, parts, model))
            }
        }
        Term::App(_, a) => {
            let mut new_premises = Vec::with_capacity(d.premises.len());
            for p in &d.premises {
                let mut mine = Vec::new();
                for beta in p.env.get(x).iter() {
                    let i = parts.iter().position(|q| q.ty == *beta).expect("parts match the premises");
                    mine.push(parts.swap_remove(i));
                }
                new_premises.push(substitute(p, x, n, fv_n, mine, model));
            }
            let mut it = new_premises.into_iter();
            let fun = it.next().expect("app node has a function premise");
            Derivation::app(fun, crate::syntax::subst(a, x, n), it.collect(), d.ty.clone())
        }
    }
}

/// The two outcomes of one reduction step on a derivation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WsrCase {
    /// The reduct's derivation has fewer application nodes.
    Decreasing,
    /// Same shape; the redex sits in an untyped position, so cutting it to
    /// bottom keeps the derivation.
    Stable,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WsrReport {
    pub case: WsrCase,
    pub reduced: Derivation,
    /// For [`WsrCase::Stable`]: the derivation of the subject with the redex
    /// replaced by bottom.
    pub bot_cut: Option<Derivation>,
    pub app_before: usize,
    pub app_after: usize,
}

/// Contracts the redex at `path` inside a valid derivation.
pub fn weighted_subject_reduction_probe(
    d: &Derivation,
    path: &[Step],
    model: &Model,
) -> Result<WsrReport, TypingError> {
    check_derivation(d, model)?;
    contract_at(&d.subject, path)?;
    let (case, reduced, bot_cut) = probe(d, path, model);
    debug_assert_eq!(check_derivation(&reduced, model), Ok(()));
    let app_after = reduced.app_count();
    Ok(WsrReport { case, reduced, bot_cut, app_before: d.app_count(), app_after })
}

fn probe(d: &Derivation, path: &[Step], model: &Model) -> (WsrCase, Derivation, Option<Derivation>) {
    let Some((step, rest)) = path.split_first() else {
        let (Term::App(_, q), fun) = (&d.subject, &d.premises[0]) else { unreachable!("checked redex") };
        let Term::Lam(x, _) = &fun.subject else { unreachable!("checked redex") };
        let reduced = substitute(&fun.premises[0], x, q, &q.free_vars(), d.premises[1..].to_vec(), model);
        return (WsrCase::Decreasing, reduced, None);
    };
    match (step, &d.subject) {
        (Step::Body, Term::Lam(x, _)) => {
            let (case, r, c) = probe(&d.premises[0], rest, model);
            (case, Derivation::lam(model, x, r), c.map(|c| Derivation::lam(model, x, c)))
        }
        (Step::Fun, Term::App(_, a)) => {
            let (case, r, c) = probe(&d.premises[0], rest, model);
            let args = d.premises[1..].to_vec();
            let cut = c.map(|c| Derivation::app(c, (**a).clone(), args.clone(), d.ty.clone()));
            (case, Derivation::app(r, (**a).clone(), args, d.ty.clone()), cut)
        }
        (Step::Arg, Term::App(_, a)) => {
            let fun = d.premises[0].clone();
            let reduced_arg = contract_at(a, rest).expect("checked redex");
            let cut_arg = replace_at(a, rest, Term::Bot).expect("checked path");
            let subs: Vec<_> = d.premises[1..].iter().map(|p| probe(p, rest, model)).collect();
            let stable = subs.iter().all(|(case, _, _)| *case == WsrCase::Stable);
            let mut reduced_args = Vec::new();
            let mut cut_args = Vec::new();
            for (_, r, c) in subs {
                reduced_args.push(r);
                cut_args.extend(c);
            }
            let reduced = Derivation::app(fun.clone(), reduced_arg, reduced_args, d.ty.clone());
            if stable {
                (WsrCase::Stable, reduced, Some(Derivation::app(fun, cut_arg, cut_args, d.ty.clone())))
            } else {
                (WsrCase::Decreasing, reduced, None)
            }
        }
        _ => unreachable!("path {} checked", path_to_string(path)),
    }
}

/// Subjects of two derivations are equal up to renaming of bound variables.
pub fn same_subject(a: &Derivation, b: &Term) -> bool {
    alpha_eq(&a.subject, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::{beta_normalize, head_reduce, redex_paths};
    use crate::syntax::{parse_term, subst};
    use proptest::prelude::*;

    fn e() -> Model {
        Model::builtin("E").unwrap()
    }

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn el(m: &Model, s: &str) -> Element {
        m.parse_element(s).unwrap()
    }

    #[test]
    fn application_to_omega() {
        let m = e();
        let env = m.parse_env("x:[[] -> <0>]").unwrap();
        let subject = t("x @Omega");
        let d = Derivation::app(Derivation::var("x", el(&m, "[] -> <0>")), t("@Omega"), vec![], el(&m, "<0>"));
        assert_eq!(d.subject, subject);
        assert_eq!(d.env, env);
        assert_eq!(check_derivation(&d, &m), Ok(()));
        let closed = Derivation::lam(&m, "x", d);
        assert_eq!(check_derivation(&closed, &m), Ok(()));
        assert_eq!(closed.app_count(), 1);
        assert_eq!(closed.ty, el(&m, "[[] -> <0>] -> <0>"));
    }

    #[test]
    fn var_node_needs_singleton_env() {
        let m = e();
        let mut bad = Derivation::var("x", el(&m, "<0>"));
        bad.env = m.parse_env("x:[<0>, <1>]").unwrap();
        let err = check_derivation(&bad, &m).unwrap_err();
        assert_eq!(err.path, "");
        assert_eq!(bad.app_count(), 0);
    }

    #[test]
    fn constant_function_applied() {
        let m = e();
        let fun = Derivation::lam(&m, "y", Derivation::var("x", el(&m, "<0>")));
        let d = Derivation::app(fun, t("z"), vec![], el(&m, "<0>"));
        assert_eq!(d.subject, t("(\\y.x) z"));
        assert_eq!(check_derivation(&d, &m), Ok(()));
        let report = weighted_subject_reduction_probe(&d, &[], &m).unwrap();
        assert_eq!(report.case, WsrCase::Decreasing);
        assert_eq!((report.app_before, report.app_after), (1, 0));
        assert_eq!(report.reduced.subject, t("x"));
    }

    #[test]
    fn checker_reports_nested_paths() {
        let m = e();
        let mut d = Derivation::lam(&m, "x", Derivation::var("x", el(&m, "<0>")));
        d.premises[0].ty = el(&m, "<1>");
        let err = check_derivation(&d, &m).unwrap_err();
        assert_eq!(err.path, "");
        d.ty = el(&m, "[<0>] -> <1>");
        d.premises[0].env = Env::single("x", el(&m, "<0>"));
        let err = check_derivation(&d, &m).unwrap_err();
        assert_eq!(err.path, "0");
    }

    #[test]
    fn derive_examples() {
        let m = e();
        let b = SearchBudget::default();
        for a in ["<0>", "[] -> <1>", "[<0>, <0>] -> <2>"] {
            let ty = m.arrow(MultiSet::singleton(el(&m, a)), el(&m, a));
            assert!(matches!(derive(&Env::new(), &t("@I"), &ty, &m, b), DeriveOutcome::Found(_)));
        }
        let ty = el(&m, "[<0>, [<0>] -> <0>] -> <0>");
        assert!(matches!(derive(&Env::new(), &t("@Delta"), &ty, &m, b), DeriveOutcome::Found(_)));
        let ty = el(&m, "[<0>] -> <0>");
        assert_eq!(derive(&Env::new(), &t("@Delta"), &ty, &m, b), DeriveOutcome::Refuted);
        assert_eq!(derive(&Env::new(), &t("@Omega"), &el(&m, "<0>"), &m, b), DeriveOutcome::Refuted);
        assert_eq!(derive(&Env::new(), &Term::Bot, &el(&m, "<0>"), &m, b), DeriveOutcome::Refuted);
    }

    #[test]
    fn derive_through_redexes() {
        let m = e();
        let b = SearchBudget::default();
        let env = m.parse_env("y:[<0>]").unwrap();
        let d = derive(&env, &t("(\\x.x) y"), &el(&m, "<0>"), &m, b).derivation().unwrap();
        assert_eq!(d.app_count(), 1);
        let report = weighted_subject_reduction_probe(&d, &[], &m).unwrap();
        assert_eq!((report.case, report.app_after), (WsrCase::Decreasing, 0));
    }

    #[test]
    fn derive_in_extensional_models() {
        let ds = Model::builtin("Dstar").unwrap();
        let dw = Model::builtin("Domega").unwrap();
        let star = el(&ds, "*");
        let b = SearchBudget::default();
        assert!(matches!(derive(&Env::new(), &t("@I"), &star, &ds, b), DeriveOutcome::Found(_)));
        assert!(matches!(derive(&Env::new(), &t("@I"), &star, &dw, b), DeriveOutcome::Refuted));
        let env = ds.parse_env("x:[*]").unwrap();
        assert!(matches!(derive(&env, &t("\\z.x z"), &star, &ds, b), DeriveOutcome::Found(_)));
        let env = dw.parse_env("x:[*]").unwrap();
        assert!(matches!(derive(&env, &t("\\z.x z"), &star, &dw, b), DeriveOutcome::Found(_)));
        assert!(matches!(derive(&env, &t("\\z.x _|_"), &star, &dw, b), DeriveOutcome::Found(_)));
    }

    #[test]
    fn identity_judgments() {
        let m = e();
        let js = enumerate_judgments(&t("@I"), &m, 3).unwrap();
        let expected: BTreeSet<Judgment> = m
            .enumerate_elements(3)
            .unwrap()
            .into_iter()
            .map(|a| Judgment { env: Env::new(), ty: m.arrow(MultiSet::singleton(a.clone()), a) })
            .filter(|j| m.fits(&j.ty, 3))
            .collect();
        assert_eq!(js, expected);
        assert!(enumerate_judgments(&Term::Bot, &m, 3).unwrap().is_empty());
        let js = enumerate_judgments(&t("\\x.x _|_"), &m, 3).unwrap();
        assert!(!js.is_empty());
        for j in &js {
            let (a, _) = m.unfold(&j.ty).unwrap();
            let [f] = a.as_slice() else { panic!("one use of x") };
            assert_eq!(m.unfold(f).unwrap().0, MultiSet::empty());
        }
        assert!(enumerate_judgments(&t("@Omega"), &m, 3).is_err());
    }

    #[test]
    fn substitution_base_cases() {
        let m = e();
        let part = Derivation::var("y", el(&m, "<0>"));
        let d0 = Derivation::var("x", el(&m, "<0>"));
        let r = weighted_substitution(&d0, "x", &t("y"), vec![part.clone()], &m).unwrap();
        assert_eq!(r, part);
        let d0 = Derivation::var("z", el(&m, "<1>"));
        let r = weighted_substitution(&d0, "x", &t("y"), vec![], &m).unwrap();
        assert_eq!(r, d0);
        assert!(matches!(
            weighted_substitution(&d0, "x", &t("y"), vec![part], &m),
            Err(TypingError::MismatchedParts { .. })
        ));
    }

    #[test]
    fn substitution_adds_counts() {
        let m = e();
        let b = SearchBudget::default();
        let env = m.parse_env("x:[[<1>] -> <0>, <1>]").unwrap();
        let d0 = derive(&env, &t("x x"), &el(&m, "<0>"), &m, b).derivation().unwrap();
        let n = t("w @I");
        let p1 =
            derive(&m.parse_env("w:[[[<0>] -> <0>] -> [<1>] -> <0>]").unwrap(), &n, &el(&m, "[<1>] -> <0>"), &m, b)
                .derivation()
                .unwrap();
        let p2 =
            derive(&m.parse_env("w:[[[<2>] -> <2>] -> <1>]").unwrap(), &n, &el(&m, "<1>"), &m, b).derivation().unwrap();
        let counts = d0.app_count() + p1.app_count() + p2.app_count();
        let r = weighted_substitution(&d0, "x", &n, vec![p2, p1], &m).unwrap();
        assert_eq!(check_derivation(&r, &m), Ok(()));
        assert_eq!(r.app_count(), counts);
        assert_eq!(r.subject, subst(&t("x x"), "x", &n));
    }

    #[test]
    fn substitution_renames_binders_like_terms() {
        let m = e();
        let b = SearchBudget::default();
        let env = m.parse_env("x:[<0>]").unwrap();
        let d0 = derive(&env, &t("\\y.x"), &el(&m, "[] -> <0>"), &m, b).derivation().unwrap();
        let part = Derivation::var("y", el(&m, "<0>"));
        let r = weighted_substitution(&d0, "x", &t("y"), vec![part], &m).unwrap();
        assert_eq!(r.subject, subst(&t("\\y.x"), "x", &t("y")));
        assert_eq!(check_derivation(&r, &m), Ok(()));
    }

    #[test]
    fn untyped_argument_redex_is_stable() {
        let m = e();
        let env = m.parse_env("x:[[] -> <0>]").unwrap();
        let subject = t("x (@I y)");
        let d = derive(&env, &subject, &el(&m, "<0>"), &m, SearchBudget::default()).derivation().unwrap();
        let report = weighted_subject_reduction_probe(&d, &[Step::Arg], &m).unwrap();
        assert_eq!(report.case, WsrCase::Stable);
        assert!(shape_eq(&report.reduced, &d));
        let cut = report.bot_cut.unwrap();
        assert_eq!(cut.subject, t("x _|_"));
        assert!(shape_eq(&cut, &d));
        assert_eq!(check_derivation(&cut, &m), Ok(()));
    }

    #[test]
    fn sexp_output() {
        let m = e();
        let d = Derivation::lam(&m, "x", Derivation::var("x", el(&m, "<0>")));
        assert_eq!(d.to_sexp(&m), "(lam \"\" \"\\x.x\" \"[<0>] -> <0>\" (var \"x:[<0>]\" \"x\" \"<0>\"))");
    }

    fn arb_normal_closed() -> impl Strategy<Value = Term> {
        crate::syntax::tests::arb_term().prop_filter_map("normalizing closed term", |m| {
            let vars: Vec<String> = m.free_vars().into_iter().collect();
            let closed = Term::lams(&vars, m);
            let r = beta_normalize(&closed, 60);
            (r.completed && r.result.size() <= 9).then_some(closed)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn generated_judgments_are_derivable_and_relevant(m in arb_normal_closed()) {
            let nf = beta_normalize(&m, 60).result;
            let model = e();
            if let Ok(js) = enumerate_judgments(&nf, &model, 2) {
                let fv = nf.free_vars();
                for j in js.iter().take(6) {
                    prop_assert!(j.env.vars().all(|x| fv.contains(x)));
                    let d = derive(&j.env, &nf, &j.ty, &model, SearchBudget::default()).derivation();
                    prop_assert!(d.is_some());
                    let d = d.unwrap();
                    prop_assert_eq!(check_derivation(&d, &model), Ok(()));
                    prop_assert!(head_reduce(&nf, d.app_count()).completed);
                }
            }
        }

        #[test]
        fn probes_follow_the_two_cases(m in arb_normal_closed()) {
            let model = e();
            let nf = beta_normalize(&m, 60).result;
            let Ok(js) = enumerate_judgments(&nf, &model, 2) else { return Ok(()) };
            let budget = SearchBudget { elem_size: 3, nodes: 20_000, ..SearchBudget::default() };
            for j in js.iter().take(2) {
                let DeriveOutcome::Found(d) = derive(&j.env, &m, &j.ty, &model, budget) else { continue };
                prop_assert!(head_reduce(&m, d.app_count()).completed);
                for path in redex_paths(&m) {
                    let r = weighted_subject_reduction_probe(&d, &path, &model).unwrap();
                    prop_assert_eq!(check_derivation(&r.reduced, &model), Ok(()));
                    prop_assert!(alpha_eq(&r.reduced.subject, &contract_at(&m, &path).unwrap()));
                    match r.case {
                        WsrCase::Decreasing => prop_assert!(r.app_after < r.app_before),
                        WsrCase::Stable => {
                            prop_assert!(shape_eq(&r.reduced, &d));
                            let cut = r.bot_cut.unwrap();
                            prop_assert!(shape_eq(&cut, &d));
                            prop_assert_eq!(check_derivation(&cut, &model), Ok(()));
                        }
                    }
                    if path.is_empty() {
                        prop_assert_eq!(r.app_after + 1, r.app_before);
                    }
                }
            }
        }
    }
}
