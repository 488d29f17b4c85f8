//! Relational graph models obtained by freely completing a partial pair:
//! canonical elements, multisets, environments and the built-in models.
//!
//! Elements are measured by [`size`]: an atom has size 1 and an arrow
//! `a -> t` has size `1 + max(|a|, size(t), size(b) for b in a)`. Bounding it
//! bounds both nesting and multiset cardinality, so each bound admits finitely
//! many elements over finitely many atoms.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom(pub u32);

/// A canonical element: atoms sort before arrows, arrows compare by source
/// and then target.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    Atom(Atom),
    Arrow(Arc<(MultiSet, Element)>),
}

/// A finite multiset, kept sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiSet(Vec<Element>);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown model `{0}` (expected E, Domega or Dstar)")]
    UnknownModel(String),
    #[error("atom {0} does not belong to the model")]
    ForeignAtom(u32),
    #[error("equation components must be atoms")]
    NonAtomicEquation,
    #[error("two equations share the pair or the atom `{0}`")]
    NotInjective(String),
    #[error("element syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("model file line {line}: {msg}")]
    File { line: usize, msg: String },
    #[error("{count} elements of size at most {bound}: too many to enumerate")]
    TooMany { bound: usize, count: u128 },
}

impl Element {
    pub fn atom(id: u32) -> Element {
        Element::Atom(Atom(id))
    }

    /// An arrow node without canonicalization.
    pub fn arrow_raw(source: MultiSet, target: Element) -> Element {
        Element::Arrow(Arc::new((source, target)))
    }

    pub fn as_arrow(&self) -> Option<(&MultiSet, &Element)> {
        match self {
            Element::Arrow(p) => Some((&p.0, &p.1)),
            Element::Atom(_) => None,
        }
    }

    pub fn atoms(&self, out: &mut BTreeSet<Atom>) {
        match self {
            Element::Atom(a) => {
                out.insert(*a);
            }
            Element::Arrow(p) => {
                p.0.iter().for_each(|b| b.atoms(out));
                p.1.atoms(out);
            }
        }
    }

    /// The atom reached by peeling arrows off the target.
    pub fn range_atom(&self) -> Atom {
        match self {
            Element::Atom(a) => *a,
            Element::Arrow(p) => p.1.range_atom(),
        }
    }
}

pub fn size(e: &Element) -> usize {
    match e {
        Element::Atom(_) => 1,
        Element::Arrow(p) => 1 + multiset_size(&p.0).max(size(&p.1)),
    }
}

/// Cardinality or largest member, whichever is bigger.
pub fn multiset_size(a: &MultiSet) -> usize {
    a.iter().map(size).max().unwrap_or(0).max(a.len())
}

impl MultiSet {
    pub fn new(mut items: Vec<Element>) -> MultiSet {
        items.sort();
        MultiSet(items)
    }

    pub fn empty() -> MultiSet {
        MultiSet(Vec::new())
    }

    pub fn singleton(e: Element) -> MultiSet {
        MultiSet(vec![e])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Element> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Element] {
        &self.0
    }

    pub fn sum(&self, other: &MultiSet) -> MultiSet {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            if self.0[i] <= other.0[j] {
                out.push(self.0[i].clone());
                i += 1;
            } else {
                out.push(other.0[j].clone());
                j += 1;
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        MultiSet(out)
    }

    pub fn insert(&mut self, e: Element) {
        let at = self.0.partition_point(|x| *x <= e);
        self.0.insert(at, e);
    }

    /// `self - other`, if `other` is contained in `self`.
    pub fn minus(&self, other: &MultiSet) -> Option<MultiSet> {
        let mut out = Vec::with_capacity(self.len());
        let mut j = 0;
        for e in &self.0 {
            if j < other.0.len() && other.0[j] == *e {
                j += 1;
            } else {
                out.push(e.clone());
            }
        }
        (j == other.0.len()).then_some(MultiSet(out))
    }

    pub fn contains_all(&self, other: &MultiSet) -> bool {
        self.minus(other).is_some()
    }

    /// Distinct members, in order.
    pub fn distinct(&self) -> Vec<&Element> {
        let mut out: Vec<&Element> = Vec::new();
        for e in &self.0 {
            if out.last() != Some(&e) {
                out.push(e);
            }
        }
        out
    }

    /// Every sub-multiset, smallest multiplicities first.
    pub fn sub_multisets(&self) -> Vec<MultiSet> {
        let mut groups: Vec<(&Element, usize)> = Vec::new();
        for e in &self.0 {
            match groups.last_mut() {
                Some((g, n)) if *g == e => *n += 1,
                _ => groups.push((e, 1)),
            }
        }
        let mut out = vec![Vec::new()];
        for (e, n) in groups {
            out = out
                .into_iter()
                .flat_map(|prefix: Vec<Element>| {
                    (0..=n).map(move |k| {
                        let mut next = prefix.clone();
                        next.extend(std::iter::repeat_n(e.clone(), k));
                        next
                    })
                })
                .collect();
        }
        out.into_iter().map(MultiSet).collect()
    }
}

impl FromIterator<Element> for MultiSet {
    fn from_iter<I: IntoIterator<Item = Element>>(iter: I) -> MultiSet {
        MultiSet::new(iter.into_iter().collect())
    }
}

/// Multisets of at most `max_card` items drawn from `items` (with
/// repetition), as index lists in non-decreasing order.
pub fn index_multisets(n: usize, max_card: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_card {
        let mut next = Vec::new();
        for m in &frontier {
            let start = m.last().copied().unwrap_or(0);
            for i in start..n {
                let mut ext: Vec<usize> = m.clone();
                ext.push(i);
                next.push(ext);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Number of multisets of cardinality at most `k` over `n` items.
pub fn count_multisets(n: u128, k: usize) -> u128 {
    // C(n + k, k), computed incrementally.
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        acc = acc.saturating_mul(n + i) / i;
    }
    acc
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AtomSet {
    /// Countably many atoms, written `<n>`.
    Naturals,
    Named(Vec<String>),
}

/// Enumerated elements by (size bound, atom limit).
type ElementCache = HashMap<(usize, u32), Arc<Vec<Element>>>;

/// A partial pair together with its free completion.
#[derive(Debug)]
pub struct Model {
    name: String,
    atoms: AtomSet,
    equations: BTreeMap<(MultiSet, Element), Atom>,
    inverse: BTreeMap<Atom, (MultiSet, Element)>,
    cache: Mutex<ElementCache>,
}

/// Beyond this many elements, enumeration is refused.
pub const MAX_ENUMERATED_ELEMENTS: u128 = 2_000_000;

impl Model {
    pub fn new(name: &str, atoms: AtomSet, equations: Vec<(MultiSet, Element, Atom)>) -> Result<Model, ModelError> {
        let mut model = Model {
            name: name.to_string(),
            atoms,
            equations: BTreeMap::new(),
            inverse: BTreeMap::new(),
            cache: Mutex::new(HashMap::new()),
        };
        for (source, target, atom) in equations {
            model.check_atom(atom)?;
            let mut parts = BTreeSet::new();
            source.iter().for_each(|b| b.atoms(&mut parts));
            target.atoms(&mut parts);
            if source.iter().chain([&target]).any(|e| !matches!(e, Element::Atom(_))) {
                return Err(ModelError::NonAtomicEquation);
            }
            for a in parts {
                model.check_atom(a)?;
            }
            let pair = (source, target);
            if model.equations.contains_key(&pair) || model.inverse.contains_key(&atom) {
                return Err(ModelError::NotInjective(model.atom_name(atom)));
            }
            model.equations.insert(pair.clone(), atom);
            model.inverse.insert(atom, pair);
        }
        Ok(model)
    }

    /// `E`, `Domega` or `Dstar` (case-insensitive, `D_omega`/`D_star` too).
    pub fn builtin(name: &str) -> Result<Model, ModelError> {
        let star = Element::atom(0);
        let key: String = name.chars().filter(|c| *c != '_').collect::<String>().to_lowercase();
        match key.as_str() {
            "e" => Model::new("E", AtomSet::Naturals, vec![]),
            "domega" | "dω" => {
                Model::new("Domega", AtomSet::Named(vec!["*".into()]), vec![(MultiSet::empty(), star, Atom(0))])
            }
            "dstar" | "d⋆" | "d*" => Model::new(
                "Dstar",
                AtomSet::Named(vec!["*".into()]),
                vec![(MultiSet::singleton(star.clone()), star, Atom(0))],
            ),
            _ => Err(ModelError::UnknownModel(name.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn atom_set(&self) -> &AtomSet {
        &self.atoms
    }

    pub fn has_equations(&self) -> bool {
        !self.equations.is_empty()
    }

    /// Every atom is the image of exactly one equation.
    pub fn is_extensional(&self) -> bool {
        match &self.atoms {
            AtomSet::Naturals => false,
            AtomSet::Named(names) => (0..names.len() as u32).all(|i| self.inverse.contains_key(&Atom(i))),
        }
    }

    pub fn check_atom(&self, a: Atom) -> Result<(), ModelError> {
        match &self.atoms {
            AtomSet::Naturals => Ok(()),
            AtomSet::Named(names) if (a.0 as usize) < names.len() => Ok(()),
            AtomSet::Named(_) => Err(ModelError::ForeignAtom(a.0)),
        }
    }

    pub fn atom_name(&self, a: Atom) -> String {
        match &self.atoms {
            AtomSet::Naturals => format!("<{}>", a.0),
            AtomSet::Named(names) => names.get(a.0 as usize).cloned().unwrap_or_else(|| format!("<{}>", a.0)),
        }
    }

    /// Largest size of an equation component, or 1 when there are none.
    pub fn equation_size(&self) -> usize {
        self.equations.keys().map(|(a, t)| multiset_size(a).max(size(t))).max().unwrap_or(1)
    }

    /// Canonical arrow from canonical components.
    pub fn arrow(&self, source: MultiSet, target: Element) -> Element {
        let pair = (source, target);
        match self.equations.get(&pair) {
            Some(a) => Element::Atom(*a),
            None => Element::Arrow(Arc::new(pair)),
        }
    }

    /// `a1 -> a2 -> ... -> target`, canonical at every level.
    pub fn arrows(&self, sources: &[MultiSet], target: Element) -> Element {
        sources.iter().rev().fold(target, |acc, a| self.arrow(a.clone(), acc))
    }

    pub fn canonicalize(&self, e: &Element) -> Result<Element, ModelError> {
        match e {
            Element::Atom(a) => {
                self.check_atom(*a)?;
                Ok(e.clone())
            }
            Element::Arrow(p) => {
                let source = p.0.iter().map(|b| self.canonicalize(b)).collect::<Result<MultiSet, _>>()?;
                let target = self.canonicalize(&p.1)?;
                Ok(self.arrow(source, target))
            }
        }
    }

    pub fn is_canonical(&self, e: &Element) -> bool {
        self.canonicalize(e).as_ref() == Ok(e)
    }

    /// The unique pair an element stands for: its own components for an
    /// arrow, the defining equation for an atom.
    pub fn unfold(&self, e: &Element) -> Option<(MultiSet, Element)> {
        match e {
            Element::Arrow(p) => Some((p.0.clone(), p.1.clone())),
            Element::Atom(a) => self.inverse.get(a).cloned(),
        }
    }

    /// Unfolds `k` times: `e = a1 -> ... -> ak -> rest`.
    pub fn unfold_n(&self, e: &Element, k: usize) -> Option<(Vec<MultiSet>, Element)> {
        let mut sources = Vec::with_capacity(k);
        let mut cur = e.clone();
        for _ in 0..k {
            let (a, t) = self.unfold(&cur)?;
            sources.push(a);
            cur = t;
        }
        Some((sources, cur))
    }

    /// Within `bound` in size, and for countable atom sets every atom id is
    /// below `bound`.
    pub fn fits(&self, e: &Element, bound: usize) -> bool {
        if size(e) > bound {
            return false;
        }
        match self.atoms {
            AtomSet::Naturals => {
                let mut atoms = BTreeSet::new();
                e.atoms(&mut atoms);
                atoms.iter().all(|a| (a.0 as usize) < bound)
            }
            AtomSet::Named(_) => true,
        }
    }

    fn base_atoms(&self, atom_limit: u32) -> Vec<Element> {
        let n = match &self.atoms {
            AtomSet::Naturals => atom_limit,
            AtomSet::Named(names) => names.len() as u32,
        };
        (0..n).map(Element::atom).collect()
    }

    /// All canonical elements of size at most `bound`, sorted.
    pub fn enumerate_elements(&self, bound: usize) -> Result<Vec<Element>, ModelError> {
        Ok(self.elements_with_atoms(bound, bound as u32)?.as_ref().clone())
    }

    /// Elements of size at most `bound` whose atoms are below `atom_limit`
    /// (for countable atom sets), sorted by size and then canonical order.
    pub fn elements_with_atoms(&self, bound: usize, atom_limit: u32) -> Result<Arc<Vec<Element>>, ModelError> {
        if let Some(hit) = self.cache.lock().unwrap().get(&(bound, atom_limit)) {
            return Ok(hit.clone());
        }
        let out = if bound == 0 {
            Vec::new()
        } else if bound == 1 {
            self.base_atoms(atom_limit)
        } else {
            let smaller = self.elements_with_atoms(bound - 1, atom_limit)?;
            let n = smaller.len() as u128;
            let count = count_multisets(n, bound - 1).saturating_mul(n);
            if count > MAX_ENUMERATED_ELEMENTS {
                return Err(ModelError::TooMany { bound, count });
            }
            let mut set: BTreeSet<Element> = self.base_atoms(atom_limit).into_iter().collect();
            let sources = index_multisets(smaller.len(), bound - 1);
            for idx in &sources {
                let source = MultiSet(idx.iter().map(|&i| smaller[i].clone()).collect());
                for t in smaller.iter() {
                    set.insert(self.arrow(source.clone(), t.clone()));
                }
            }
            let mut v: Vec<Element> = set.into_iter().collect();
            v.sort_by_key(size);
            v
        };
        let out = Arc::new(out);
        self.cache.lock().unwrap().insert((bound, atom_limit), out.clone());
        Ok(out)
    }

    pub fn show(&self, e: &Element) -> String {
        let mut s = String::new();
        self.write_element(e, &mut s);
        s
    }

    fn write_element(&self, e: &Element, out: &mut String) {
        match e {
            Element::Atom(a) => out.push_str(&self.atom_name(*a)),
            Element::Arrow(p) => {
                out.push_str(&self.show_multiset(&p.0));
                out.push_str(" -> ");
                self.write_element(&p.1, out);
            }
        }
    }

    pub fn show_multiset(&self, a: &MultiSet) -> String {
        let parts: Vec<String> = a.iter().map(|b| self.show(b)).collect();
        format!("[{}]", parts.join(", "))
    }

    pub fn show_env(&self, env: &Env) -> String {
        let parts: Vec<String> = env.iter().map(|(x, a)| format!("{x}:{}", self.show_multiset(a))).collect();
        parts.join(", ")
    }

    /// Parses and canonicalizes an element.
    pub fn parse_element(&self, text: &str) -> Result<Element, ModelError> {
        let mut p = ElemParser { src: text, pos: 0, model: self };
        let e = p.element()?;
        p.skip_ws();
        if p.pos < text.len() {
            return Err(p.error("unexpected trailing input"));
        }
        self.canonicalize(&e)
    }

    pub fn parse_multiset(&self, text: &str) -> Result<MultiSet, ModelError> {
        let mut p = ElemParser { src: text, pos: 0, model: self };
        let a = p.multiset()?;
        p.skip_ws();
        if p.pos < text.len() {
            return Err(p.error("unexpected trailing input"));
        }
        a.iter().map(|b| self.canonicalize(b)).collect()
    }

    /// Parses `x:[e, ...], y:[...]`; an empty string is the empty environment.
    pub fn parse_env(&self, text: &str) -> Result<Env, ModelError> {
        let mut p = ElemParser { src: text, pos: 0, model: self };
        let mut env = Env::new();
        p.skip_ws();
        while p.pos < text.len() {
            let x = p.ident().ok_or_else(|| p.error("expected a variable"))?;
            if !p.eat(":") {
                return Err(p.error("expected `:`"));
            }
            let a = p.multiset()?;
            let a: MultiSet = a.iter().map(|b| self.canonicalize(b)).collect::<Result<_, _>>()?;
            env.add(&x, &a);
            p.skip_ws();
            if p.pos < text.len() && !p.eat(",") {
                return Err(p.error("expected `,`"));
            }
            p.skip_ws();
        }
        Ok(env)
    }

    /// Reads a model file: `atoms: N`, `atoms: {a,b}` or `atoms: nat`, then
    /// lines `eq [e1,...] -> e == atom`. `#` starts a comment.
    pub fn parse_file(name: &str, text: &str) -> Result<Model, ModelError> {
        let mut atoms = None;
        let mut raw_eqs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| ModelError::File { line: i + 1, msg: msg.to_string() };
            if let Some(rest) = line.strip_prefix("atoms:") {
                let rest = rest.trim();
                atoms = Some(if rest == "nat" {
                    AtomSet::Naturals
                } else if let Some(inner) = rest.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
                    let names: Vec<String> = inner.split(',').map(|s| s.trim().to_string()).collect();
                    if names.iter().any(|n| n.is_empty()) {
                        return Err(err("empty atom name"));
                    }
                    AtomSet::Named(names)
                } else {
                    let n: usize = rest.parse().map_err(|_| err("expected a count, `nat` or `{...}`"))?;
                    AtomSet::Named((0..n).map(|k| format!("<{k}>")).collect())
                });
            } else if let Some(rest) = line.strip_prefix("eq ") {
                let (lhs, rhs) = rest.split_once("==").ok_or_else(|| err("expected `==`"))?;
                raw_eqs.push((i + 1, lhs.trim().to_string(), rhs.trim().to_string()));
            } else {
                return Err(err("expected `atoms:` or `eq`"));
            }
        }
        let atoms = atoms.ok_or(ModelError::File { line: 0, msg: "missing `atoms:` line".into() })?;
        let scratch = Model::new(name, atoms.clone(), vec![])?;
        let mut eqs = Vec::new();
        for (line, lhs, rhs) in raw_eqs {
            let wrap = |e: ModelError| ModelError::File { line, msg: e.to_string() };
            let pair = scratch.parse_element(&lhs).map_err(wrap)?;
            let (source, target) = pair
                .as_arrow()
                .map(|(a, t)| (a.clone(), t.clone()))
                .ok_or(ModelError::File { line, msg: "left side must be an arrow".into() })?;
            let atom = match scratch.parse_element(&rhs).map_err(wrap)? {
                Element::Atom(a) => a,
                _ => return Err(ModelError::File { line, msg: "right side must be an atom".into() }),
            };
            eqs.push((source, target, atom));
        }
        Model::new(name, atoms, eqs)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

struct ElemParser<'a> {
    src: &'a str,
    pos: usize,
    model: &'a Model,
}

impl ElemParser<'_> {
    fn error(&self, msg: &str) -> ModelError {
        ModelError::Syntax { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        let rest = self.src[self.pos..].trim_start();
        self.pos = self.src.len() - rest.len();
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        if !rest.starts_with(|c: char| c.is_ascii_alphabetic()) {
            return None;
        }
        let end = rest.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '\'')).unwrap_or(rest.len());
        self.pos += end;
        Some(rest[..end].to_string())
    }

    fn multiset(&mut self) -> Result<Vec<Element>, ModelError> {
        if !self.eat("[") {
            return Err(self.error("expected `[`"));
        }
        let mut items = Vec::new();
        if self.eat("]") {
            return Ok(items);
        }
        loop {
            items.push(self.element()?);
            if self.eat("]") {
                return Ok(items);
            }
            if !self.eat(",") {
                return Err(self.error("expected `,` or `]`"));
            }
        }
    }

    fn element(&mut self) -> Result<Element, ModelError> {
        self.skip_ws();
        if self.src[self.pos..].starts_with('[') {
            let source = self.multiset()?;
            if !self.eat("->") {
                return Err(self.error("expected `->` after a multiset"));
            }
            let target = self.element()?;
            return Ok(Element::arrow_raw(MultiSet::new(source), target));
        }
        if self.eat("(") {
            let e = self.element()?;
            if !self.eat(")") {
                return Err(self.error("expected `)`"));
            }
            return Ok(e);
        }
        if self.eat("<") {
            let rest = &self.src[self.pos..];
            let end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
            let id: u32 = rest[..end].parse().map_err(|_| self.error("expected an atom number"))?;
            self.pos += end;
            if !self.eat(">") {
                return Err(self.error("expected `>`"));
            }
            return Ok(Element::atom(id));
        }
        let start = self.pos;
        let name = if self.eat("*") || self.eat("⋆") {
            "*".to_string()
        } else {
            self.ident().ok_or_else(|| self.error("expected an element"))?
        };
        match &self.model.atoms {
            AtomSet::Named(names) => names
                .iter()
                .position(|n| *n == name)
                .map(|i| Element::atom(i as u32))
                .ok_or(ModelError::Syntax { pos: start, msg: format!("unknown atom `{name}`") }),
            AtomSet::Naturals => Err(ModelError::Syntax { pos: start, msg: format!("unknown atom `{name}`") }),
        }
    }
}

/// A finite map from variables to non-empty multisets; absent means empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Env(BTreeMap<String, MultiSet>);

impl Env {
    pub fn new() -> Env {
        Env(BTreeMap::new())
    }

    pub fn single(x: &str, e: Element) -> Env {
        Env(BTreeMap::from([(x.to_string(), MultiSet::singleton(e))]))
    }

    pub fn get(&self, x: &str) -> MultiSet {
        self.0.get(x).cloned().unwrap_or_default()
    }

    pub fn get_ref(&self, x: &str) -> Option<&MultiSet> {
        self.0.get(x)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &MultiSet)> {
        self.0.iter()
    }

    pub fn vars(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }

    pub fn add(&mut self, x: &str, a: &MultiSet) {
        if a.is_empty() {
            return;
        }
        let slot = self.0.entry(x.to_string()).or_default();
        *slot = slot.sum(a);
    }

    /// Removes and returns the entry for `x`.
    pub fn take(&mut self, x: &str) -> MultiSet {
        self.0.remove(x).unwrap_or_default()
    }

    pub fn without(&self, x: &str) -> Env {
        let mut e = self.clone();
        e.0.remove(x);
        e
    }

    pub fn sum(&self, other: &Env) -> Env {
        let mut out = self.clone();
        for (x, a) in &other.0 {
            out.add(x, a);
        }
        out
    }

    /// `self - other`, if `other` is pointwise contained in `self`.
    pub fn minus(&self, other: &Env) -> Option<Env> {
        let mut out = self.clone();
        for (x, a) in &other.0 {
            let rest = out.get(x).minus(a)?;
            if rest.is_empty() {
                out.0.remove(x);
            } else {
                out.0.insert(x.clone(), rest);
            }
        }
        Some(out)
    }

    pub fn contains_all(&self, other: &Env) -> bool {
        self.minus(other).is_some()
    }

    /// Restriction to the given variables.
    pub fn restrict(&self, keep: &BTreeSet<String>) -> Env {
        Env(self.0.iter().filter(|(x, _)| keep.contains(*x)).map(|(x, a)| (x.clone(), a.clone())).collect())
    }

    /// Every sub-environment, as pointwise sub-multisets.
    pub fn sub_envs(&self) -> Vec<Env> {
        let mut out = vec![Env::new()];
        for (x, a) in &self.0 {
            let subs = a.sub_multisets();
            out = out
                .into_iter()
                .flat_map(|env| {
                    subs.iter().map(move |s| {
                        let mut e = env.clone();
                        e.add(x, s);
                        e
                    })
                })
                .collect();
        }
        out
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.0.values().flat_map(|a| a.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xi(i: u32) -> Element {
        Element::atom(i)
    }

    #[test]
    fn builtin_models() {
        let e = Model::builtin("E").unwrap();
        let dw = Model::builtin("Domega").unwrap();
        let ds = Model::builtin("Dstar").unwrap();
        assert!(!e.is_extensional());
        assert!(dw.is_extensional());
        assert!(ds.is_extensional());
        assert!(Model::builtin("D_star").is_ok());
        assert!(matches!(Model::builtin("Q"), Err(ModelError::UnknownModel(_))));
    }

    #[test]
    fn canonicalization() {
        let ds = Model::builtin("Dstar").unwrap();
        let dw = Model::builtin("Domega").unwrap();
        let e = Model::builtin("E").unwrap();
        let star = xi(0);
        let raw = Element::arrow_raw(MultiSet::singleton(star.clone()), star.clone());
        assert_eq!(ds.canonicalize(&raw).unwrap(), star);
        let raw = Element::arrow_raw(MultiSet::empty(), star.clone());
        assert_eq!(dw.canonicalize(&raw).unwrap(), star);
        let raw = Element::arrow_raw(MultiSet::singleton(xi(0)), xi(1));
        assert_eq!(e.canonicalize(&raw).unwrap(), raw);
        assert_eq!(ds.canonicalize(&xi(3)), Err(ModelError::ForeignAtom(3)));
        let nested = ds.parse_element("[[*] -> *] -> [*] -> *").unwrap();
        assert_eq!(nested, star);
    }

    #[test]
    fn element_sizes_and_enumeration() {
        let e = Model::builtin("E").unwrap();
        assert_eq!(e.enumerate_elements(1).unwrap(), vec![xi(0)]);
        assert!(e.enumerate_elements(0).unwrap().is_empty());
        let ds = Model::builtin("Dstar").unwrap();
        let three = ds.enumerate_elements(3).unwrap();
        for s in ["*", "[] -> *", "[*] -> [] -> *", "[] -> [] -> *", "[*, *] -> *"] {
            assert!(three.contains(&ds.parse_element(s).unwrap()), "{s}");
        }
        assert!(!three.contains(&ds.parse_element("[[] -> [] -> *] -> *").unwrap()));
        assert_eq!(ds.enumerate_elements(2).unwrap().len(), 2);
        // 12 pairs over {*, []->*} with cardinality at most 2, one collapsing
        // into *, plus * itself.
        assert_eq!(three.len(), 12);
        assert_eq!(size(&e.parse_element("[<0>, <0>, <0>] -> <1>").unwrap()), 4);
        assert!(matches!(e.enumerate_elements(5), Err(ModelError::TooMany { .. })));
    }

    #[test]
    fn range_atoms() {
        let e = Model::builtin("E").unwrap();
        assert_eq!(xi(3).range_atom(), Atom(3));
        assert_eq!(e.parse_element("[] -> <0>").unwrap().range_atom(), Atom(0));
        assert_eq!(e.parse_element("[<1>] -> [] -> <2>").unwrap().range_atom(), Atom(2));
    }

    #[test]
    fn multiset_operations() {
        let a = MultiSet::new(vec![xi(1)]);
        let b = MultiSet::new(vec![xi(0), xi(1)]);
        assert_eq!(a.sum(&a).len(), 2);
        assert_eq!(MultiSet::empty().sum(&b), b);
        assert_eq!(b.sum(&a), MultiSet::new(vec![xi(0), xi(1), xi(1)]));
        assert_eq!(b.minus(&a), Some(MultiSet::singleton(xi(0))));
        assert_eq!(a.minus(&b), None);
        assert_eq!(MultiSet::new(vec![xi(0), xi(0), xi(1)]).sub_multisets().len(), 6);
    }

    #[test]
    fn element_syntax_round_trip() {
        let e = Model::builtin("E").unwrap();
        for s in ["<0>", "[] -> <1>", "[<0>, [<0>] -> <0>] -> <0>", "[<2>] -> [] -> <0>"] {
            let el = e.parse_element(s).unwrap();
            assert_eq!(e.show(&el), s);
        }
        assert!(e.parse_element("[<0>]").is_err());
        assert!(e.parse_element("*").is_err());
    }

    #[test]
    fn env_parsing() {
        let e = Model::builtin("E").unwrap();
        let env = e.parse_env("x:[<0>, [] -> <0>], y:[<1>]").unwrap();
        assert_eq!(env.get("x").len(), 2);
        assert_eq!(e.show_env(&env), "x:[<0>, [] -> <0>], y:[<1>]");
        assert!(e.parse_env("").unwrap().is_empty());
        assert!(e.parse_env("x:[<0>] y").is_err());
    }

    #[test]
    fn model_files() {
        let m = Model::parse_file("two", "atoms: {a, b}\n# comment\neq [a] -> b == a\n").unwrap();
        assert!(!m.is_extensional());
        assert_eq!(m.parse_element("[a] -> b").unwrap(), xi(0));
        let m = Model::parse_file("ext", "atoms: 1\neq [] -> <0> == <0>\n").unwrap();
        assert!(m.is_extensional());
        assert!(Model::parse_file("bad", "atoms: {a}\neq [a] -> a == a\neq [] -> a == a\n").is_err());
        assert!(Model::parse_file("bad", "atoms: {a}\neq [[a] -> a] -> a == a\n").is_err());
        assert!(Model::parse_file("bad", "eq [] -> a == a\n").is_err());
    }

    #[test]
    fn enumeration_is_monotone_and_duplicate_free() {
        let ds = Model::builtin("Dstar").unwrap();
        for k in 0usize..4 {
            let small = ds.enumerate_elements(k).unwrap();
            let big = ds.enumerate_elements(k + 1).unwrap();
            let set: BTreeSet<_> = big.iter().cloned().collect();
            assert_eq!(set.len(), big.len());
            assert!(small.iter().all(|e| set.contains(e)));
            assert!(big.iter().all(|e| size(e) <= k + 1 && ds.is_canonical(e)));
        }
    }

    fn arb_element() -> impl Strategy<Value = Element> {
        (0u32..3).prop_map(Element::atom).prop_recursive(3, 16, 3, |inner| {
            (prop::collection::vec(inner.clone(), 0..3), inner)
                .prop_map(|(a, t)| Element::arrow_raw(MultiSet::new(a), t))
        })
    }

    proptest! {
        #[test]
        fn canonicalize_is_idempotent_and_shrinking(e in arb_element()) {
            let ds = Model::builtin("Dstar").unwrap();
            let dw = Model::builtin("Domega").unwrap();
            for m in [&ds, &dw] {
                let e = Element::atom(0).max(e.clone());
                let mut atoms = BTreeSet::new();
                e.atoms(&mut atoms);
                if atoms.iter().all(|a| a.0 == 0) {
                    let c = m.canonicalize(&e).unwrap();
                    prop_assert_eq!(m.canonicalize(&c).unwrap(), c.clone());
                    prop_assert!(size(&c) <= size(&e));
                }
            }
        }

        #[test]
        fn extensional_atoms_unfold(e in arb_element()) {
            let ds = Model::builtin("Dstar").unwrap();
            let mut atoms = BTreeSet::new();
            e.atoms(&mut atoms);
            if atoms.iter().all(|a| a.0 == 0) {
                let c = ds.canonicalize(&e).unwrap();
                let (a, t) = ds.unfold(&c).unwrap();
                prop_assert_eq!(ds.arrow(a, t), c);
            }
        }
    }
}
