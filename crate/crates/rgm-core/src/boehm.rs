//! Finite approximants of Böhm trees, the eta/bottom matcher, and the
//! approximants of the infinite eta-expansions of the identity that follow a
//! recursive tree.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::reduction::{bot_normalize, head_reduce};
use crate::syntax::{fresh, rename_free, NotNormal, Term};
use crate::tree::RecTree;

/// Beyond this many cuts, [`approximants`] refuses to enumerate.
pub const MAX_APPROXIMANTS: usize = 200_000;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{count} approximants exceed the enumeration limit of {limit}")]
pub struct TooManyApproximants {
    pub count: u128,
    pub limit: usize,
}

/// Bottom for head redexes and bottom heads, otherwise keep the head
/// variable and recurse into the arguments.
pub fn direct_approximant(m: &Term) -> Term {
    let (binders, head, args) = m.spine();
    match head {
        Term::Var(_) => Term::lams(&binders, Term::apps(head.clone(), args.into_iter().map(direct_approximant))),
        _ => Term::Bot,
    }
}

/// A depth-bounded Böhm tree prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BtPrefix {
    pub term: Term,
    /// Some bottom marks a node below the depth limit.
    pub depth_cut: bool,
    /// Some bottom marks a node whose head reduction ran out of fuel.
    pub fuel_cut: bool,
}

impl BtPrefix {
    /// Every bottom in the prefix is a genuine unsolvable node, so the prefix
    /// is the whole Böhm tree.
    pub fn is_exact(&self) -> bool {
        !self.depth_cut && !self.fuel_cut
    }
}

/// Head-reduces each node with `node_fuel` steps; `depth` counts head nodes.
pub fn bt_prefix(m: &Term, depth: usize, node_fuel: usize) -> BtPrefix {
    let mut prefix = BtPrefix { term: Term::Bot, depth_cut: false, fuel_cut: false };
    prefix.term = bt_node(m, depth, node_fuel, &mut prefix);
    prefix
}

fn bt_node(m: &Term, depth: usize, fuel: usize, acc: &mut BtPrefix) -> Term {
    if depth == 0 {
        acc.depth_cut = true;
        return Term::Bot;
    }
    let r = head_reduce(m, fuel);
    if !r.completed {
        if !r.diverges {
            acc.fuel_cut = true;
        }
        return Term::Bot;
    }
    let (binders, head, args) = r.result.spine();
    let children: Vec<Term> = args.into_iter().map(|a| bt_node(a, depth - 1, fuel, acc)).collect();
    Term::lams(&binders, Term::apps(head.clone(), children))
}

pub fn bt_approximant(m: &Term, depth: usize, node_fuel: usize) -> Term {
    bt_prefix(m, depth, node_fuel).term
}

/// Number of bottom cuts of a beta-bot-normal term.
pub fn count_cuts(t: &Term) -> u128 {
    if t.is_bot() {
        return 1;
    }
    let (_, _, args) = t.spine();
    1 + args.iter().map(|a| count_cuts(a)).fold(1u128, |acc, c| acc.saturating_mul(c))
}

/// All terms obtained from a beta-bot-normal `t` by cutting subtrees to
/// bottom: bottom first, then cuts in argument order.
pub fn cuts(t: &Term) -> Vec<Term> {
    if t.is_bot() {
        return vec![Term::Bot];
    }
    let (binders, head, args) = t.spine();
    let mut combos: Vec<Vec<Term>> = vec![Vec::new()];
    for a in args {
        let options = cuts(a);
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |o| {
                    let mut next = prefix.clone();
                    next.push(o.clone());
                    next
                })
            })
            .collect();
    }
    let mut out = vec![Term::Bot];
    out.extend(combos.into_iter().map(|args| Term::lams(&binders, Term::apps(head.clone(), args))));
    out
}

/// The bottom cuts of the depth/fuel-bounded Böhm tree prefix of `m`.
pub fn approximants(m: &Term, depth: usize, node_fuel: usize) -> Result<Vec<Term>, TooManyApproximants> {
    let prefix = bt_approximant(m, depth, node_fuel);
    let count = count_cuts(&prefix);
    if count > MAX_APPROXIMANTS as u128 {
        return Err(TooManyApproximants { count, limit: MAX_APPROXIMANTS });
    }
    Ok(cuts(&prefix))
}

/// Whether some `u` with `t` below `u` (bottom order) eta-reduces to `s`.
pub fn matches_eta_bot(t: &Term, s: &Term) -> Result<bool, NotNormal> {
    for x in [t, s] {
        if !x.is_beta_bot_normal() {
            return Err(NotNormal(x.to_string()));
        }
    }
    let mut names = all_names(t);
    names.extend(all_names(s));
    let t = freshen_binders(t, &mut names);
    let s = freshen_binders(s, &mut names);
    Ok(matches(&t, &s, &mut names))
}

fn all_names(t: &Term) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fn go(t: &Term, out: &mut BTreeSet<String>) {
        match t {
            Term::Var(x) => {
                out.insert(x.clone());
            }
            Term::Lam(x, b) => {
                out.insert(x.clone());
                go(b, out);
            }
            Term::App(f, a) => {
                go(f, out);
                go(a, out);
            }
            Term::Bot => {}
        }
    }
    go(t, &mut out);
    out
}

/// Renames every binder to a name not yet in `used`.
fn freshen_binders(t: &Term, used: &mut BTreeSet<String>) -> Term {
    match t {
        Term::Lam(x, b) => {
            let y = fresh(x, used);
            used.insert(y.clone());
            let body = freshen_binders(&rename_free(b, x, &y), used);
            Term::lam(&y, body)
        }
        Term::App(f, a) => {
            let f = freshen_binders(f, used);
            Term::app(f, freshen_binders(a, used))
        }
        Term::Var(_) | Term::Bot => t.clone(),
    }
}

/// Binders of both sides are pairwise distinct and not free anywhere.
fn matches(t: &Term, s: &Term, names: &mut BTreeSet<String>) -> bool {
    if t.is_bot() {
        return true;
    }
    if s.is_bot() {
        return false;
    }
    let (ys, _, _) = t.spine();
    let (xs, s_head, s_args) = s.spine();
    if ys.len() < xs.len() {
        return false;
    }
    let extra = ys.len() - xs.len();
    let mut body = t.clone();
    let mut zs = Vec::with_capacity(extra);
    for i in 0..ys.len() {
        let Term::Lam(y, b) = body else { unreachable!("spine counted the binders") };
        let target = if i < xs.len() {
            xs[i].to_string()
        } else {
            let z = fresh("z", names);
            names.insert(z.clone());
            zs.push(z.clone());
            z
        };
        body = rename_free(&b, &y, &target);
    }
    let (t_head, t_args) = body.app_spine();
    if t_args.len() != s_args.len() + extra {
        return false;
    }
    let (Term::Var(h), Term::Var(h2)) = (t_head, s_head) else {
        return false;
    };
    if h != h2 || zs.contains(h) {
        return false;
    }
    let k = s_args.len();
    t_args[..k].iter().zip(&s_args).all(|(a, b)| matches(a, b, names))
        && t_args[k..].iter().zip(&zs).all(|(a, z)| matches(a, &Term::var(z), names))
}

/// Depth-bounded Böhm tree of the eta-expansion of `x` following `tree`:
/// the node at position `s` abstracts `tree(s)` variables and applies its
/// head to the expansions of those variables.
pub fn jt_approximant(tree: &RecTree, x: &str, depth: usize) -> Term {
    let mut pos = Vec::new();
    jt_node(tree, &Term::var(x), depth, &mut pos, &BTreeSet::from([x.to_string()]))
}

fn jt_node(tree: &RecTree, head: &Term, depth: usize, pos: &mut Vec<u64>, used: &BTreeSet<String>) -> Term {
    if depth == 0 {
        return Term::Bot;
    }
    let width = tree.branching(pos);
    let level = pos.len();
    let mut used = used.clone();
    let binders: Vec<String> = (0..width)
        .map(|i| {
            let base = if width == 1 { format!("z{level}") } else { format!("z{level}_{i}") };
            let name = fresh(&base, &used);
            used.insert(name.clone());
            name
        })
        .collect();
    let args: Vec<Term> = binders
        .iter()
        .enumerate()
        .map(|(i, z)| {
            pos.push(i as u64);
            let child = jt_node(tree, &Term::var(z), depth - 1, pos, &used);
            pos.pop();
            child
        })
        .collect();
    Term::lams(&binders, Term::apps(head.clone(), args))
}

/// Reads back the branching of a term shaped like a [`jt_approximant`]:
/// every head node with its position and its number of binders.
pub fn node_branching(t: &Term) -> Vec<(Vec<u64>, usize)> {
    fn go(t: &Term, pos: &mut Vec<u64>, out: &mut Vec<(Vec<u64>, usize)>) {
        if t.is_bot() {
            return;
        }
        let (binders, _, args) = t.spine();
        out.push((pos.clone(), binders.len()));
        for (i, a) in args.into_iter().enumerate() {
            pos.push(i as u64);
            go(a, pos, out);
            pos.pop();
        }
    }
    let mut out = Vec::new();
    go(&bot_normalize(t), &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::le_bot;
    use crate::syntax::{alpha_eq, parse_term};
    use proptest::prelude::*;

    fn p(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    #[test]
    fn direct_approximants() {
        assert_eq!(direct_approximant(&p("@I (@I x)")), Term::Bot);
        assert_eq!(direct_approximant(&p("\\x.x (@I y)")), p("\\x.x _|_"));
        assert_eq!(direct_approximant(&p("\\x y.x")), p("\\x y.x"));
        assert_eq!(direct_approximant(&p("\\x._|_ x")), Term::Bot);
    }

    #[test]
    fn bt_prefixes() {
        assert!(alpha_eq(&bt_approximant(&p("\\x.y @Omega"), 2, 50), &p("\\x.y _|_")));
        assert!(alpha_eq(&bt_approximant(&p("@Y"), 3, 50), &p("\\f.f (f (f _|_))")));
        let omega = bt_prefix(&p("@Omega"), 5, 50);
        assert_eq!(omega.term, Term::Bot);
        assert!(omega.is_exact());
        let j = bt_prefix(&p("@J"), 3, 50);
        assert!(alpha_eq(&j.term, &p("\\x z0.x (\\z1.z0 (\\z2.z1 _|_))")));
        assert!(j.depth_cut && !j.fuel_cut);
        assert!(bt_prefix(&p("@I"), 4, 10).is_exact());
    }

    #[test]
    fn approximant_sets() {
        let a = approximants(&p("@I"), 2, 10).unwrap();
        assert_eq!(a, vec![Term::Bot, p("\\x.x")]);
        assert_eq!(approximants(&p("@Omega"), 3, 10).unwrap(), vec![Term::Bot]);
        let a = approximants(&p("\\x.y @Omega"), 2, 50).unwrap();
        assert_eq!(a.len(), 2);
        assert!(alpha_eq(&a[1], &p("\\x.y _|_")));
        assert_eq!(count_cuts(&p("\\x.x (y _|_) (y z)")), 1 + 2 * 3);
        assert!(approximants(&p("@J"), 6, 100).unwrap().len() == 7);
    }

    #[test]
    fn eta_bot_matching() {
        let m = |t: &str, s: &str| matches_eta_bot(&p(t), &p(s)).unwrap();
        assert!(m("_|_", "\\x.x"));
        assert!(m("\\x z0.x (\\z1.z0 _|_)", "\\x.x"));
        assert!(!m("\\x.x x", "\\x.x"));
        assert!(!m("\\x.x", "\\x z0.x (\\z1.z0 _|_)"));
        assert!(m("\\x z.x z", "\\x.x"));
        assert!(!m("\\x z.z x", "\\x.x"));
        assert!(!m("\\x z.x z z", "\\x.x"));
        assert!(m("\\a b.a (\\c.b c)", "\\x y.x y"));
        assert!(!m("\\x.x", "_|_"));
        assert!(matches_eta_bot(&p("@I x"), &p("x")).is_err());
    }

    #[test]
    fn jt_shapes() {
        let unary = RecTree::parse("1").unwrap();
        assert!(alpha_eq(&jt_approximant(&unary, "x", 3), &p("\\z0.x (\\z1.z0 (\\z2.z1 _|_))")));
        assert_eq!(jt_approximant(&unary, "x", 0), Term::Bot);
        let binary = RecTree::parse("2").unwrap();
        assert!(alpha_eq(&jt_approximant(&binary, "x", 2), &p("\\z0 z1.x (\\w0 w1.z0 _|_ _|_) (\\w0 w1.z1 _|_ _|_)")));
        let shape = node_branching(&jt_approximant(&binary, "x", 2));
        assert_eq!(shape, vec![(vec![], 2), (vec![0], 2), (vec![1], 2)]);
    }

    #[test]
    fn jt_names_avoid_the_head() {
        let t = jt_approximant(&RecTree::parse("1").unwrap(), "z0", 2);
        assert!(alpha_eq(&t, &p("\\a.z0 (\\b.a _|_)")));
    }

    fn arb_source() -> impl Strategy<Value = Term> {
        prop::sample::select(vec![
            "@I",
            "@K",
            "@Y",
            "@J",
            "@Omega",
            "\\x.x @Omega",
            "@c2 @c2",
            "\\x.x (@I x) (\\y.y x)",
            "(\\x.x x) (\\y.y)",
            "\\f.f (@Y f)",
            "@one2",
        ])
        .prop_map(|s| parse_term(s).unwrap())
    }

    proptest! {
        #[test]
        fn prefixes_grow_with_depth(m in arb_source(), d in 0usize..5) {
            let a = bt_approximant(&m, d, 60);
            let b = bt_approximant(&m, d + 1, 60);
            prop_assert!(le_bot(&a, &b).unwrap());
        }

        #[test]
        fn matching_is_reflexive(m in arb_source(), d in 0usize..4) {
            let t = bt_approximant(&m, d, 60);
            prop_assert!(matches_eta_bot(&t, &t).unwrap());
        }

        #[test]
        fn cuts_are_below(m in arb_source(), d in 0usize..4) {
            let t = bt_approximant(&m, d, 60);
            for c in cuts(&t) {
                prop_assert!(le_bot(&c, &t).unwrap());
            }
        }
    }
}
