use rgm_core::analysis::{has_nf_oracle, witness_probe, NfVerdict, WitnessStatus};
use rgm_core::boehm::bt_prefix;
use rgm_core::model::{Env, Model};
use rgm_core::reduction::beta_normalize;
use rgm_core::semantics::{interp_bounded, member, Bounds, Verdict};
use rgm_core::syntax::parse_term;
use rgm_core::tree::{PathSpec, RecTree};
use rgm_core::typing::{check_derivation, enumerate_judgments};

const MODEL: &str = "
# a single atom that is its own arrow from [a, a]
atoms: {a}
eq [a, a] -> a == a
";

#[test]
fn user_model_from_text_to_verdicts() {
    let m = Model::parse_file("pair", MODEL).unwrap();
    assert!(m.is_extensional());
    let a = m.parse_element("a").unwrap();

    // Self-application uses the variable once as a function and twice as
    // its argument.
    let delta = parse_term("@Delta").unwrap();
    assert_eq!(member(&delta, &Env::new(), &a, &m, 4, 50).verdict, Verdict::NonMember);
    let three = m.parse_element("[a, a, a] -> a").unwrap();
    let r = member(&delta, &Env::new(), &three, &m, 4, 50);
    assert_eq!(r.verdict, Verdict::Member);
    check_derivation(r.witness.as_ref().unwrap(), &m).unwrap();

    let omega = parse_term("@Omega").unwrap();
    assert_eq!(member(&omega, &Env::new(), &a, &m, 4, 50).verdict, Verdict::NonMember);

    let binary = RecTree::parse("binary").unwrap();
    let v = witness_probe(&m, &a, &binary, &PathSpec::parse("if n < 4 then 1 else 0").unwrap(), 8).unwrap();
    assert_eq!(v.status, WitnessStatus::WitnessToDepth);
    let unary = RecTree::parse("unary").unwrap();
    assert_eq!(witness_probe(&m, &a, &unary, &PathSpec::constant(0), 8).unwrap().status, WitnessStatus::WitnessToDepth);
}

#[test]
fn church_arithmetic_routes_agree() {
    let e = Model::builtin("E").unwrap();
    let term = parse_term("(\\m n f x. m f (n f x)) @c1 @c1").unwrap();
    let nf = beta_normalize(&term, 100);
    assert!(nf.completed);
    assert!(bt_prefix(&term, 6, 100).is_exact());
    let bounds = Bounds { depth: 6, fuel: 100, size: 3 };
    let via_bt = interp_bounded(&term, &e, bounds).unwrap().judgments;
    assert_eq!(via_bt, enumerate_judgments(&nf.result, &e, 3).unwrap());
    assert!(!via_bt.is_empty());
    assert!(matches!(has_nf_oracle(&term, 5, 8, 100).verdict, NfVerdict::Normalizable { .. }));
}
