//! Deterministic self-checks on the worked examples and on a seeded corpus.
//!
//! The report carries no timings, so identical seeds give identical output.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rgm_core::analysis::{char_wt_crosscheck, has_nf_oracle, witness_probe, NfVerdict, WitnessStatus};
use rgm_core::boehm::{bt_approximant, jt_approximant, node_branching};
use rgm_core::model::{Element, Env, Model, MultiSet};
use rgm_core::reduction::{beta_normalize, beta_step, contract_at, head_reduce, redex_paths};
use rgm_core::semantics::{compare, interp_bounded, ler_probe, member, Bounds, Relation, Verdict};
use rgm_core::syntax::{alpha_eq, parse_term, Term};
use rgm_core::tree::{PathSpec, RecTree};
use rgm_core::typing::{
    check_derivation, derive, enumerate_judgments, shape_eq, weighted_subject_reduction_probe, DeriveOutcome, Judgment,
    SearchBudget, WsrCase,
};

use crate::report::Report;

type Check = Result<String, String>;
type NamedCheck = (&'static str, Box<dyn Fn() -> Check>);

fn t(s: &str) -> Term {
    parse_term(s).expect("built-in example term")
}

fn builtin(name: &str) -> Model {
    Model::builtin(name).expect("built-in model")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Random closed terms biased towards redexes.
pub fn random_term(rng: &mut ChaCha8Rng, scope: &mut Vec<String>, budget: usize) -> Term {
    let roll = rng.gen_range(0..10);
    if budget <= 1 || (roll < 3 && !scope.is_empty()) {
        return match scope.len() {
            0 => Term::lam("v", Term::var("v")),
            n => Term::Var(scope[rng.gen_range(0..n)].clone()),
        };
    }
    let lam = |rng: &mut ChaCha8Rng, scope: &mut Vec<String>, budget: usize| {
        let x = format!("v{}", scope.len());
        scope.push(x.clone());
        let body = random_term(rng, scope, budget);
        scope.pop();
        Term::lam(&x, body)
    };
    if roll < 6 || budget < 3 {
        return lam(rng, scope, budget - 1);
    }
    let left = rng.gen_range(1..budget - 1);
    let f = if rng.gen_bool(0.5) { lam(rng, scope, left.max(2) - 1) } else { random_term(rng, scope, left) };
    let a = random_term(rng, scope, budget - 1 - left);
    Term::app(f, a)
}

/// Distinct closed terms with a redex whose normal form is reached within
/// fuel 200 and has at most `max_nf` nodes.
fn corpus(seed: u64, count: usize, max_nf: usize) -> Vec<Term> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    while out.len() < count {
        let size = rng.gen_range(5..14);
        let m = random_term(&mut rng, &mut Vec::new(), size);
        if redex_paths(&m).is_empty() || !seen.insert(m.clone()) {
            continue;
        }
        let r = beta_normalize(&m, 200);
        if r.completed && r.result.size() <= max_nf {
            out.push(m);
        }
    }
    out
}

fn worked_interpretations() -> Check {
    let e = builtin("E");
    let bounds = Bounds { depth: 8, fuel: 200, size: 4 };
    let small = e.elements_with_atoms(3, 4).map_err(|err| err.to_string())?;
    let closed = |tys: Vec<Element>| -> BTreeSet<Judgment> {
        tys.into_iter().map(|ty| Judgment { env: Env::new(), ty }).collect()
    };
    let arrows: Vec<&Element> = small.iter().filter(|a| a.as_arrow().is_some()).collect();
    let one = |a: &Element| MultiSet::singleton(a.clone());
    let cases = [
        ("@I", closed(small.iter().map(|a| e.arrow(one(a), a.clone())).collect())),
        ("@1", closed(arrows.iter().map(|f| e.arrow(one(f), (*f).clone())).collect())),
        (
            "@Delta",
            closed(
                arrows
                    .iter()
                    .map(|f| {
                        let (a, alpha) = f.as_arrow().unwrap();
                        e.arrow(a.sum(&one(f)), alpha.clone())
                    })
                    .collect(),
            ),
        ),
        ("@Omega", BTreeSet::new()),
        (
            "\\x.x @Omega",
            closed(
                arrows
                    .iter()
                    .filter_map(|f| {
                        f.as_arrow().filter(|(a, _)| a.is_empty()).map(|(_, alpha)| e.arrow(one(f), alpha.clone()))
                    })
                    .collect(),
            ),
        ),
    ];
    let mut counts = Vec::new();
    for (name, expected) in cases {
        let got = interp_bounded(&t(name), &e, bounds).map_err(|err| format!("{name}: {err}"))?;
        ensure(got.judgments == expected, || {
            format!("{name}: {} judgments, expected {}", got.judgments.len(), expected.len())
        })?;
        counts.push(format!("{name}={}", expected.len()));
    }
    Ok(format!("E {bounds}: {}", counts.join(" ")))
}

fn separation() -> Check {
    let b = Bounds { depth: 6, fuel: 200, size: 3 };
    for name in ["Domega", "Dstar"] {
        let c = compare(&t("@I"), &t("@1"), &builtin(name), b).map_err(|e| e.to_string())?;
        ensure(c.relation == Relation::Equal, || format!("I vs 1 in {name}: {}", c.relation))?;
    }
    let ds = builtin("Dstar");
    let star = Element::atom(0);
    ensure(member(&t("@I"), &Env::new(), &star, &ds, 2, 10).verdict == Verdict::Member, || "* not in [I]".into())?;
    let j = member(&t("@J"), &Env::new(), &star, &ds, 6, 200);
    ensure(j.verdict == Verdict::NotFoundAtBound, || format!("J in Dstar: {}", j.verdict))?;
    let c = compare(&t("@I"), &t("@J"), &builtin("Domega"), b).map_err(|e| e.to_string())?;
    ensure(c.relation == Relation::Equal, || format!("I vs J in Domega: {}", c.relation))?;
    Ok(format!("I=1 in Domega and Dstar, I=J in Domega at {b}; * in [I]-[J] in Dstar (depth=6 fuel=200)"))
}

fn soundness(seed: u64) -> Check {
    let models = [builtin("E"), builtin("Domega"), builtin("Dstar")];
    let b = Bounds { depth: 10, fuel: 200, size: 3 };
    let terms = corpus(seed, 50, 12);
    for (k, m) in terms.iter().enumerate() {
        let mut n = m.clone();
        for _ in 0..1 + k % 3 {
            n = beta_step(&n).unwrap_or(n);
        }
        for d in &models {
            let left = interp_bounded(m, d, b).map_err(|e| e.to_string())?;
            let right = interp_bounded(&n, d, b).map_err(|e| e.to_string())?;
            ensure(left.judgments == right.judgments, || format!("{m} and {n} differ in {}", d.name()))?;
        }
    }
    Ok(format!("{} pairs agree in E, Domega, Dstar at {b}", terms.len()))
}

fn weighted_reduction(seed: u64) -> Check {
    let e = builtin("E");
    let budget = SearchBudget { elem_size: 3, nodes: 50_000, depth: 10, fuel: 200 };
    let mut derivations = Vec::new();
    for m in corpus(seed.wrapping_add(1), 300, 10) {
        if derivations.len() >= 100 {
            break;
        }
        let nf = beta_normalize(&m, 200).result;
        let Ok(js) = enumerate_judgments(&nf, &e, 2) else { continue };
        for j in js.iter().take(2) {
            if let DeriveOutcome::Found(d) = derive(&j.env, &m, &j.ty, &e, budget) {
                derivations.push(d);
            }
        }
    }
    let (mut decreasing, mut stable) = (0, 0);
    for d in &derivations {
        ensure(head_reduce(&d.subject, d.app_count()).completed, || format!("{}: head reduction too long", d.subject))?;
        for path in redex_paths(&d.subject) {
            let r = weighted_subject_reduction_probe(d, &path, &e).map_err(|err| err.to_string())?;
            check_derivation(&r.reduced, &e).map_err(|err| err.to_string())?;
            let reduct = contract_at(&d.subject, &path).map_err(|err| err.to_string())?;
            ensure(alpha_eq(&r.reduced.subject, &reduct), || "reduct subject mismatch".into())?;
            let ok = match r.case {
                WsrCase::Decreasing => {
                    decreasing += 1;
                    r.app_after < r.app_before && (!path.is_empty() || r.app_after + 1 == r.app_before)
                }
                WsrCase::Stable => {
                    stable += 1;
                    shape_eq(&r.reduced, d) && r.bot_cut.as_ref().is_some_and(|c| check_derivation(c, &e).is_ok())
                }
            };
            ensure(ok, || format!("{}: probe outside both cases", d.subject))?;
        }
    }
    Ok(format!("{} derivations: {decreasing} decreasing, {stable} stable", derivations.len()))
}

fn approximation(seed: u64) -> Check {
    let e = builtin("E");
    let terms = corpus(seed.wrapping_add(2), 30, 9);
    let candidates = e.enumerate_elements(2).map_err(|err| err.to_string())?;
    let mut checked = 0;
    for m in &terms {
        let nf = beta_normalize(m, 200).result;
        let by_nf = enumerate_judgments(&nf, &e, 2).map_err(|err| err.to_string())?;
        for ty in &candidates {
            let expected = by_nf.contains(&Judgment { env: Env::new(), ty: ty.clone() });
            let got = member(m, &Env::new(), ty, &e, 10, 200).verdict == Verdict::Member;
            ensure(expected == got, || format!("{m}: {} disagrees", e.show(ty)))?;
            checked += 1;
        }
    }
    Ok(format!("{} terms, {checked} judgments agree in E at size=2", terms.len()))
}

fn normalizability() -> Check {
    let mut lines = Vec::new();
    for name in ["@I", "@K", "@Delta", "@Omega", "@Y", "\\x.x @Omega", "@c2 @c2"] {
        let m = t(name);
        let truth = beta_normalize(&m, 1000).completed;
        let says = matches!(has_nf_oracle(&m, 5, 12, 1000).verdict, NfVerdict::Normalizable { .. });
        ensure(says == truth, || format!("{name}: oracle {says}, reduction {truth}"))?;
        lines.push(format!("{name}={}", if says { "nf" } else { "none" }));
    }
    Ok(format!("size=5 depth=12 fuel=1000: {}", lines.join(" ")))
}

fn minimality() -> Check {
    let e = builtin("E");
    let c = compare(&t("@J"), &t("@I"), &e, Bounds { depth: 6, fuel: 100, size: 2 }).map_err(|err| err.to_string())?;
    ensure(c.relation == Relation::LeftSubRight, || format!("J vs I in E: {}", c.relation))?;
    let w = c.right_only.ok_or("no witness")?;
    ensure(e.show(&w.ty) == "[<0>] -> <0>", || format!("witness {}", e.show(&w.ty)))?;
    ensure(ler_probe(&t("@J"), &t("@I"), 3, 50).holds_at_bound, || "J below I refuted".into())?;
    let down = ler_probe(&t("@I"), &t("@J"), 3, 50);
    let offending = down.offending.map(|o| o.to_string()).unwrap_or_default();
    ensure(offending == "\\x.x", || format!("I below J: offending `{offending}`"))?;
    Ok("J < I in E with witness [<0>] -> <0>; I below J refuted by \\x.x (depth=3 fuel=50)".into())
}

fn witnesses() -> Check {
    let ds = builtin("Dstar");
    let dw = builtin("Domega");
    let star = Element::atom(0);
    let trees = ["unary", "binary", "if len < 3 then 2 else 1"];
    let mut marks = String::new();
    for name in trees {
        let tree = RecTree::parse(name).map_err(|e| e.to_string())?;
        let zero = PathSpec::constant(0);
        let v = witness_probe(&ds, &star, &tree, &zero, 10).map_err(|e| e.to_string())?;
        ensure(v.status == WitnessStatus::WitnessToDepth, || format!("Dstar on {name}: {}", v.status))?;
        let v = witness_probe(&dw, &star, &tree, &zero, 10).map_err(|e| e.to_string())?;
        ensure(v.status == WitnessStatus::Refuted { level: 1 }, || format!("Domega on {name}: {}", v.status))?;
        for (m, a) in [(&ds, star.clone()), (&dw, star.clone()), (&ds, ds.arrow(MultiSet::empty(), star.clone()))] {
            let r = char_wt_crosscheck(m, &a, &tree, 3, 50);
            ensure(r.consistent, || format!("{} {} on {name} inconsistent", m.name(), m.show(&a)))?;
            marks.push(if r.witness_to_depth { 'W' } else { 'M' });
        }
    }
    Ok(format!("Dstar * to depth 10, Domega * refuted at 1; char_wt consistent at depth=3 fuel=50 ({marks})"))
}

fn jt_structure() -> Check {
    let unary = RecTree::parse("unary").map_err(|e| e.to_string())?;
    let jt = Term::lam("x", jt_approximant(&unary, "x", 3));
    ensure(alpha_eq(&jt, &bt_approximant(&t("@J"), 3, 200)), || format!("{jt} is not the J prefix"))?;
    let trees = ["unary", "binary", "if len < 3 then 2 else 1", "max(1, last + 1)"];
    for name in trees {
        let tree = RecTree::parse(name).map_err(|e| e.to_string())?;
        let got: BTreeSet<_> = node_branching(&jt_approximant(&tree, "x", 4)).into_iter().collect();
        let expected: BTreeSet<_> =
            tree.positions(4).into_iter().map(|p| (p.clone(), tree.branching(&p) as usize)).collect();
        ensure(got == expected, || format!("{name}: branching differs"))?;
    }
    Ok(format!("unary matches the J prefix at depth 3; {} trees match branching to depth 4", trees.len()))
}

/// Runs every check and returns the report with the number of failures.
pub fn run(seed: u64) -> (Report, usize) {
    let checks: [NamedCheck; 9] = [
        ("worked-interpretations", Box::new(worked_interpretations)),
        ("separation", Box::new(separation)),
        ("soundness", Box::new(move || soundness(seed))),
        ("weighted-reduction", Box::new(move || weighted_reduction(seed))),
        ("approximation", Box::new(move || approximation(seed))),
        ("normalizability", Box::new(normalizability)),
        ("minimality", Box::new(minimality)),
        ("witnesses", Box::new(witnesses)),
        ("jt-structure", Box::new(jt_structure)),
    ];
    let mut report = Report::new("selftest");
    report.field("seed", seed);
    let mut failures = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => report.field(name, format!("PASS {detail}")),
            Err(why) => {
                failures += 1;
                report.field(name, format!("FAIL {why}"))
            }
        };
    }
    report.field("failures", failures);
    (report, failures)
}
