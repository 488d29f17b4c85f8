//! Lambda terms extended with a bottom constant.
//!
//! Terms are stored with names. Equality up to renaming of bound variables is
//! [`alpha_eq`]; substitution renames binders by priming them.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Lam(String, Box<Term>),
    App(Box<Term>, Box<Term>),
    Bot,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("syntax error at offset {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CombinatorError {
    #[error("unknown combinator `{0}`")]
    Unknown(String),
    #[error("combinator `{0}` needs an index")]
    MissingIndex(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("term is not beta-bot-normal: {0}")]
pub struct NotNormal(pub String);

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_string())
    }

    pub fn lam(binder: &str, body: Term) -> Term {
        Term::Lam(binder.to_string(), Box::new(body))
    }

    pub fn app(fun: Term, arg: Term) -> Term {
        Term::App(Box::new(fun), Box::new(arg))
    }

    /// `\x1 ... xn.body`
    pub fn lams<S: AsRef<str>>(binders: &[S], body: Term) -> Term {
        binders.iter().rev().fold(body, |acc, x| Term::lam(x.as_ref(), acc))
    }

    /// `head a1 ... an`
    pub fn apps(head: Term, args: impl IntoIterator<Item = Term>) -> Term {
        args.into_iter().fold(head, Term::app)
    }

    pub fn is_bot(&self) -> bool {
        matches!(self, Term::Bot)
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut bound = Vec::new();
        collect_free(self, &mut bound, &mut out);
        out
    }

    pub fn occurs_free(&self, x: &str) -> bool {
        match self {
            Term::Var(y) => y == x,
            Term::Lam(y, b) => y != x && b.occurs_free(x),
            Term::App(f, a) => f.occurs_free(x) || a.occurs_free(x),
            Term::Bot => false,
        }
    }

    pub fn contains_bot(&self) -> bool {
        match self {
            Term::Bot => true,
            Term::Var(_) => false,
            Term::Lam(_, b) => b.contains_bot(),
            Term::App(f, a) => f.contains_bot() || a.contains_bot(),
        }
    }

    /// Number of AST nodes (variables, abstractions, applications, bottoms).
    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::Bot => 1,
            Term::Lam(_, b) => 1 + b.size(),
            Term::App(f, a) => 1 + f.size() + a.size(),
        }
    }

    /// Splits `\x1..xn. h a1 .. ak` into binders, head and arguments.
    /// The head is never an abstraction unless it is applied.
    pub fn spine(&self) -> (Vec<&str>, &Term, Vec<&Term>) {
        let mut binders = Vec::new();
        let mut t = self;
        while let Term::Lam(x, b) = t {
            binders.push(x.as_str());
            t = b;
        }
        let (head, args) = t.app_spine();
        (binders, head, args)
    }

    /// Splits `h a1 .. ak` into head and arguments.
    pub fn app_spine(&self) -> (&Term, Vec<&Term>) {
        let mut args = Vec::new();
        let mut t = self;
        while let Term::App(f, a) = t {
            args.push(&**a);
            t = f;
        }
        args.reverse();
        (t, args)
    }

    pub fn is_redex(&self) -> bool {
        matches!(self, Term::App(f, _) if matches!(**f, Term::Lam(..)))
    }

    /// No beta-redex anywhere.
    pub fn is_beta_normal(&self) -> bool {
        match self {
            Term::Var(_) | Term::Bot => true,
            Term::Lam(_, b) => b.is_beta_normal(),
            Term::App(f, a) => !self.is_redex() && f.is_beta_normal() && a.is_beta_normal(),
        }
    }

    /// Either bottom, or `\x1..xn. y t1 .. tk` with a variable head and
    /// beta-bot-normal arguments.
    pub fn is_beta_bot_normal(&self) -> bool {
        if self.is_bot() {
            return true;
        }
        let (_, head, args) = self.spine();
        matches!(head, Term::Var(_)) && args.iter().all(|a| a.is_beta_bot_normal())
    }
}

fn collect_free(t: &Term, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match t {
        Term::Var(x) => {
            if !bound.iter().any(|b| b == x) {
                out.insert(x.clone());
            }
        }
        Term::Lam(x, b) => {
            bound.push(x.clone());
            collect_free(b, bound, out);
            bound.pop();
        }
        Term::App(f, a) => {
            collect_free(f, bound, out);
            collect_free(a, bound, out);
        }
        Term::Bot => {}
    }
}

/// `base`, `base'`, `base''`, ... : the first one not in `avoid`.
pub fn fresh(base: &str, avoid: &BTreeSet<String>) -> String {
    let mut name = base.to_string();
    while avoid.contains(&name) {
        name.push('\'');
    }
    name
}

/// Capture-avoiding substitution `m{n/x}`.
pub fn subst(m: &Term, x: &str, n: &Term) -> Term {
    let fv = n.free_vars();
    subst_with(m, x, n, &fv)
}

fn subst_with(m: &Term, x: &str, n: &Term, fv_n: &BTreeSet<String>) -> Term {
    match m {
        Term::Var(y) if y == x => n.clone(),
        Term::Var(_) | Term::Bot => m.clone(),
        Term::App(f, a) => Term::app(subst_with(f, x, n, fv_n), subst_with(a, x, n, fv_n)),
        Term::Lam(y, _) if y == x => m.clone(),
        Term::Lam(y, b) => {
            if !b.occurs_free(x) {
                return m.clone();
            }
            if fv_n.contains(y) {
                let mut avoid = fv_n.clone();
                avoid.extend(b.free_vars());
                avoid.insert(x.to_string());
                let y2 = fresh(y, &avoid);
                let renamed = rename_free(b, y, &y2);
                Term::lam(&y2, subst_with(&renamed, x, n, fv_n))
            } else {
                Term::lam(y, subst_with(b, x, n, fv_n))
            }
        }
    }
}

/// Replaces free occurrences of `x` by the variable `y`, which must not be
/// captured in `t`.
pub fn rename_free(t: &Term, x: &str, y: &str) -> Term {
    subst(t, x, &Term::var(y))
}

pub fn alpha_eq(m: &Term, n: &Term) -> bool {
    fn go<'a>(m: &'a Term, n: &'a Term, bm: &mut Vec<&'a str>, bn: &mut Vec<&'a str>) -> bool {
        match (m, n) {
            (Term::Bot, Term::Bot) => true,
            (Term::Var(x), Term::Var(y)) => {
                let ix = bm.iter().rposition(|b| *b == x);
                let iy = bn.iter().rposition(|b| *b == y);
                match (ix, iy) {
                    (Some(i), Some(j)) => bm.len() - i == bn.len() - j,
                    (None, None) => x == y,
                    _ => false,
                }
            }
            (Term::Lam(x, b), Term::Lam(y, c)) => {
                bm.push(x);
                bn.push(y);
                let r = go(b, c, bm, bn);
                bm.pop();
                bn.pop();
                r
            }
            (Term::App(f, a), Term::App(g, b)) => go(f, g, bm, bn) && go(a, b, bm, bn),
            _ => false,
        }
    }
    go(m, n, &mut Vec::new(), &mut Vec::new())
}

/// Size of a beta-bot-normal form: bottom weighs nothing, every abstraction
/// and every head occurrence weighs one.
pub fn size_nf(t: &Term) -> Result<usize, NotNormal> {
    if !t.is_beta_bot_normal() {
        return Err(NotNormal(t.to_string()));
    }
    fn go(t: &Term) -> usize {
        match t {
            Term::Bot => 0,
            Term::Lam(_, b) => 1 + go(b),
            _ => {
                let (_, args) = t.app_spine();
                1 + args.iter().map(|a| go(a)).sum::<usize>()
            }
        }
    }
    Ok(go(t))
}

/// A step into a subterm: the function or argument of an application, or the
/// body of an abstraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    Fun,
    Arg,
    Body,
}

pub type Path = Vec<Step>;

pub fn path_to_string(p: &[Step]) -> String {
    if p.is_empty() {
        return ".".to_string();
    }
    p.iter()
        .map(|s| match s {
            Step::Fun => 'l',
            Step::Arg => 'r',
            Step::Body => 'b',
        })
        .collect()
}

/// Parses `l`/`r`/`b` letters; `.` or the empty string is the root.
pub fn parse_path(s: &str) -> Option<Path> {
    let s = s.trim();
    if s == "." {
        return Some(Vec::new());
    }
    s.chars()
        .map(|c| match c {
            'l' => Some(Step::Fun),
            'r' => Some(Step::Arg),
            'b' => Some(Step::Body),
            _ => None,
        })
        .collect()
}

pub fn subterm_at<'a>(t: &'a Term, path: &[Step]) -> Option<&'a Term> {
    let mut cur = t;
    for step in path {
        cur = match (cur, step) {
            (Term::App(f, _), Step::Fun) => f,
            (Term::App(_, a), Step::Arg) => a,
            (Term::Lam(_, b), Step::Body) => b,
            _ => return None,
        };
    }
    Some(cur)
}

/// Plugs `s` at `path`, without renaming: binders above the hole may capture.
pub fn replace_at(t: &Term, path: &[Step], s: Term) -> Option<Term> {
    let Some((first, rest)) = path.split_first() else {
        return Some(s);
    };
    match (t, first) {
        (Term::App(f, a), Step::Fun) => Some(Term::App(Box::new(replace_at(f, rest, s)?), a.clone())),
        (Term::App(f, a), Step::Arg) => Some(Term::App(f.clone(), Box::new(replace_at(a, rest, s)?))),
        (Term::Lam(x, b), Step::Body) => Some(Term::Lam(x.clone(), Box::new(replace_at(b, rest, s)?))),
        _ => None,
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Lam(..) => {
                let mut binders = Vec::new();
                let mut t = self;
                while let Term::Lam(x, b) = t {
                    binders.push(x.as_str());
                    t = b;
                }
                write!(f, "\\{}.{}", binders.join(" "), t)
            }
            Term::App(fun, arg) => {
                match **fun {
                    Term::Lam(..) => write!(f, "({fun})")?,
                    _ => write!(f, "{fun}")?,
                }
                match **arg {
                    Term::App(..) | Term::Lam(..) => write!(f, " ({arg})"),
                    _ => write!(f, " {arg}"),
                }
            }
            Term::Var(x) => write!(f, "{x}"),
            Term::Bot => write!(f, "_|_"),
        }
    }
}

pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    let t = p.term()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(t)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> ParseError {
        ParseError { pos: self.pos, msg: msg.to_string() }
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let rest = self.rest();
        let mut chars = rest.char_indices();
        match chars.next() {
            Some((_, c)) if c.is_ascii_alphabetic() => {}
            _ => return None,
        }
        let end =
            chars.find(|&(_, c)| !(c.is_ascii_alphanumeric() || c == '_' || c == '\'')).map_or(rest.len(), |(i, _)| i);
        let name = rest[..end].to_string();
        self.pos += end;
        Some(name)
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        if self.eat("\\") || self.eat("λ") {
            return self.abstraction();
        }
        let mut acc = self.atom()?.ok_or_else(|| self.error("expected a term"))?;
        loop {
            if self.eat("\\") || self.eat("λ") {
                let arg = self.abstraction()?;
                return Ok(Term::app(acc, arg));
            }
            match self.atom()? {
                Some(arg) => acc = Term::app(acc, arg),
                None => return Ok(acc),
            }
        }
    }

    fn abstraction(&mut self) -> Result<Term, ParseError> {
        let mut binders = Vec::new();
        while let Some(x) = self.ident() {
            binders.push(x);
        }
        if binders.is_empty() {
            return Err(self.error("expected a binder"));
        }
        if !self.eat(".") {
            return Err(self.error("expected `.` after binders"));
        }
        self.skip_ws();
        let body = self.term()?;
        Ok(Term::lams(&binders, body))
    }

    fn atom(&mut self) -> Result<Option<Term>, ParseError> {
        self.skip_ws();
        if self.eat("(") {
            let t = self.term()?;
            if !self.eat(")") {
                return Err(self.error("expected `)`"));
            }
            return Ok(Some(t));
        }
        if self.eat("_|_") || self.eat("⊥") {
            return Ok(Some(Term::Bot));
        }
        if self.rest().starts_with('@') {
            let start = self.pos;
            self.pos += 1;
            let rest = self.rest();
            let end = rest.find(|c: char| !c.is_ascii_alphanumeric()).unwrap_or(rest.len());
            let name = rest[..end].to_string();
            self.pos += end;
            return named_combinator(&name).map(Some).map_err(|e| ParseError { pos: start, msg: e.to_string() });
        }
        Ok(self.ident().map(Term::Var))
    }
}

/// Resolves `@Name` escapes: `I`, `K`, `F`, `Delta`, `Omega`, `Y`, `J`,
/// `Delta3`, `Omega3`, `c<n>`, `one<n>`, and a bare `<n>` for `one<n>`.
pub fn named_combinator(name: &str) -> Result<Term, CombinatorError> {
    let split = name.find(|c: char| c.is_ascii_digit()).unwrap_or(name.len());
    let (base, digits) = name.split_at(split);
    if name == "Delta3" || name == "Omega3" {
        return combinator(name, None);
    }
    match (base, digits) {
        ("c" | "one" | "", d) if !d.is_empty() => {
            let n = d.parse().map_err(|_| CombinatorError::Unknown(name.to_string()))?;
            combinator(if base.is_empty() { "one" } else { base }, Some(n))
        }
        (_, "") => combinator(base, None),
        _ => Err(CombinatorError::Unknown(name.to_string())),
    }
}

pub fn combinator(name: &str, index: Option<usize>) -> Result<Term, CombinatorError> {
    let v = Term::var;
    let delta = || Term::lam("x", Term::app(v("x"), v("x")));
    let delta3 = || Term::lam("x", Term::apps(v("x"), [v("x"), v("x")]));
    let y = || {
        let half = Term::lam("x", Term::app(v("f"), Term::app(v("x"), v("x"))));
        Term::lam("f", Term::app(half.clone(), half))
    };
    let need = |i: Option<usize>| i.ok_or_else(|| CombinatorError::MissingIndex(name.to_string()));
    Ok(match name {
        "I" => Term::lam("x", v("x")),
        "K" => Term::lams(&["x", "y"], v("x")),
        "F" => Term::lams(&["x", "y"], v("y")),
        "Delta" => delta(),
        "Omega" => Term::app(delta(), delta()),
        "Delta3" => delta3(),
        "Omega3" => Term::app(delta3(), delta3()),
        "Y" => y(),
        "J" => {
            let step = Term::lams(&["j", "x", "y"], Term::app(v("x"), Term::app(v("j"), v("y"))));
            Term::app(y(), step)
        }
        "c" => {
            let n = need(index)?;
            let body = (0..n).fold(v("z"), |acc, _| Term::app(v("f"), acc));
            Term::lams(&["f", "z"], body)
        }
        "one" => {
            let n = need(index)?;
            let mut t = Term::lam("x", v("x"));
            for _ in 0..n {
                t = Term::lams(&["x", "y"], Term::app(v("x"), Term::app(t, v("y"))));
            }
            t
        }
        _ => return Err(CombinatorError::Unknown(name.to_string())),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    #[test]
    fn parses_basic_forms() {
        assert_eq!(p("\\x.x"), Term::lam("x", Term::var("x")));
        assert_eq!(p("(\\x.x x)(\\x.x x)"), combinator("Omega", None).unwrap());
        assert_eq!(p("\\x y.x"), combinator("K", None).unwrap());
        assert_eq!(p("x y z"), Term::apps(Term::var("x"), [Term::var("y"), Term::var("z")]));
        assert_eq!(p("x \\y.y z"), Term::app(Term::var("x"), p("\\y.y z")));
        assert_eq!(p("x _|_"), Term::app(Term::var("x"), Term::Bot));
        assert_eq!(p("f' x_1"), Term::app(Term::var("f'"), Term::var("x_1")));
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_term("\\x.").is_err());
        assert!(parse_term("(x").is_err());
        assert!(parse_term("\\.x").is_err());
        assert!(parse_term("x )").is_err());
        assert_eq!(parse_term("").unwrap_err().pos, 0);
    }

    #[test]
    fn combinator_escapes() {
        assert!(alpha_eq(&p("@I"), &p("\\z.z")));
        assert_eq!(p("@c2"), p("\\f z.f (f z)"));
        assert_eq!(p("@Delta3"), p("\\x.x x x"));
        assert_eq!(p("@1"), combinator("one", Some(1)).unwrap());
        assert!(parse_term("@Nope").is_err());
        assert_eq!(combinator("c", None), Err(CombinatorError::MissingIndex("c".into())));
    }

    #[test]
    fn substitution_avoids_capture() {
        let t = subst(&p("\\y.x"), "x", &p("y"));
        assert_eq!(t, p("\\y'.y"));
        assert_eq!(subst(&p("x x"), "x", &p("\\x.x")), p("(\\x.x) (\\x.x)"));
        assert_eq!(subst(&p("\\x.x"), "x", &p("@Omega")), p("\\x.x"));
        let t = subst(&p("\\y y'.x y"), "x", &p("y y'"));
        assert!(alpha_eq(&t, &p("\\a b.y y' a")));
    }

    #[test]
    fn alpha_equivalence() {
        assert!(alpha_eq(&p("\\x.x"), &p("\\y.y")));
        assert!(!alpha_eq(&p("\\x.x"), &p("\\x.x x")));
        assert!(alpha_eq(&p("\\x y.x"), &p("\\y x.y")));
        assert!(!alpha_eq(&p("\\x y.x"), &p("\\x y.y")));
        assert!(!alpha_eq(&p("\\x.y"), &p("\\x.z")));
        assert!(!alpha_eq(&p("\\x.y"), &p("\\y.y")));
    }

    #[test]
    fn normal_form_size() {
        assert_eq!(size_nf(&Term::Bot), Ok(0));
        assert_eq!(size_nf(&p("\\x.x")), Ok(2));
        assert_eq!(size_nf(&p("\\x z.x _|_")), Ok(3));
        assert!(size_nf(&p("(\\x.x) y")).is_err());
    }

    #[test]
    fn one_reduces_shape() {
        assert_eq!(combinator("one", Some(0)).unwrap(), p("\\x.x"));
        assert_eq!(combinator("one", Some(1)).unwrap(), p("\\x y.x ((\\x.x) y)"));
    }

    #[test]
    fn paths() {
        let t = p("\\x.x ((\\y.y) x)");
        let path = parse_path("br").unwrap();
        assert!(subterm_at(&t, &path).unwrap().is_redex());
        assert_eq!(path_to_string(&path), "br");
        assert_eq!(replace_at(&t, &path, Term::Bot).unwrap(), p("\\x.x _|_"));
        assert_eq!(parse_path("."), Some(vec![]));
        assert!(parse_path("q").is_none());
    }

    pub(crate) fn arb_term() -> impl Strategy<Value = Term> {
        let leaf = prop_oneof![
            4 => prop::sample::select(vec!["x", "y", "z", "x'"]).prop_map(Term::var),
            1 => Just(Term::Bot),
        ];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                (prop::sample::select(vec!["x", "y", "z", "x'"]), inner.clone()).prop_map(|(x, b)| Term::lam(x, b)),
                (inner.clone(), inner).prop_map(|(f, a)| Term::app(f, a)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(t in arb_term()) {
            let back = parse_term(&t.to_string()).unwrap();
            prop_assert!(alpha_eq(&back, &t));
        }

        #[test]
        fn substitution_never_captures(m in arb_term(), n in arb_term()) {
            let r = subst(&m, "x", &n);
            let mut expected = m.free_vars();
            if m.occurs_free("x") {
                expected.remove("x");
                expected.extend(n.free_vars());
            }
            prop_assert_eq!(r.free_vars(), expected);
        }

        #[test]
        fn alpha_eq_is_reflexive_under_renaming(m in arb_term()) {
            let renamed = match &m {
                Term::Lam(x, b) => {
                    let avoid = m.free_vars().union(&b.free_vars()).cloned().collect();
                    let y = fresh("w", &avoid);
                    Term::lam(&y, rename_free(b, x, &y))
                }
                other => other.clone(),
            };
            prop_assert!(alpha_eq(&m, &renamed));
        }

        #[test]
        fn nonbottom_normal_forms_have_positive_size(m in arb_term()) {
            if m.is_beta_bot_normal() && !m.is_bot() {
                prop_assert!(size_nf(&m).unwrap() >= 1);
            }
        }
    }
}
