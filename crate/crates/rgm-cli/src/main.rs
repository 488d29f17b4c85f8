//! `rgm`: queries on relational graph models of the untyped lambda calculus.

mod report;
mod selftest;

use std::path::Path;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use rgm_core::analysis::{
    char_wt_crosscheck, has_nf_oracle, hyperimmune_probe, lambda_koenig_probe, polarity, witness_probe, AnalysisError,
    KoenigResult, NfVerdict,
};
use rgm_core::boehm::{bt_prefix, jt_approximant, node_branching};
use rgm_core::model::{Element, Env, Model, ModelError};
use rgm_core::reduction::{beta_normalize, bot_normalize, count_redexes, eta_nf, head_reduce};
use rgm_core::semantics::{compare, interp_bounded, ler_probe, member, Bounds};
use rgm_core::syntax::{parse_term, ParseError, Term};
use rgm_core::tree::{PathSpec, RecTree, TreeError};
use rgm_core::typing::{
    check_derivation, derive, enumerate_judgments, DeriveOutcome, Judgment, SearchBudget, TypingError,
};

use report::{Format, Report};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("term: {0}")]
    Term(#[from] ParseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Typing(#[from] TypingError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("cannot read model file `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Parser)]
#[command(name = "rgm", version, about = "Relational graph models of the untyped lambda calculus")]
struct Cli {
    #[command(flatten)]
    config: Config,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Config {
    /// Built-in model (E, Domega, Dstar) or a model file.
    #[arg(long, global = true, default_value = "E")]
    model: String,
    /// Böhm tree depth, or tree depth for witness queries.
    #[arg(long, global = true, default_value_t = 8)]
    depth: usize,
    /// Head-reduction fuel per Böhm tree node, or total fuel for `reduce`.
    #[arg(long, global = true, default_value_t = 200)]
    fuel: usize,
    /// Element size bound.
    #[arg(long, global = true, default_value_t = 3)]
    size: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Seed for generated corpora.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Strategy {
    Beta,
    Head,
    Eta,
    Bot,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a term and show basic facts about it.
    Parse {
        #[arg(long)]
        term: String,
    },
    /// Reduce a term within the fuel bound.
    Reduce {
        #[arg(long)]
        term: String,
        #[arg(long, value_enum, default_value_t = Strategy::Beta)]
        strategy: Strategy,
    },
    /// Böhm tree prefix of a term.
    Bt {
        #[arg(long)]
        term: String,
    },
    /// Derive a judgment, or list all judgments of a normal term.
    Type {
        #[arg(long)]
        term: String,
        #[arg(long)]
        elem: Option<String>,
        #[arg(long, default_value = "")]
        env: String,
    },
    /// Bounded interpretation of a term.
    Interp {
        #[arg(long)]
        term: String,
    },
    /// Membership of a judgment in the interpretation of a term.
    Member {
        #[arg(long)]
        term: String,
        #[arg(long)]
        elem: String,
        #[arg(long, default_value = "")]
        env: String,
    },
    /// Compare two bounded interpretations.
    Compare {
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
    },
    /// Check the Böhm tree order up to eta on bounded prefixes.
    Ler {
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
    },
    /// Where the empty multiset occurs in an element.
    Polarity {
        #[arg(long)]
        elem: String,
    },
    /// Look for normalizability evidence in E.
    HasNf {
        #[arg(long)]
        term: String,
    },
    /// Follow a path of a tree from an element.
    Witness {
        #[arg(long)]
        elem: String,
        #[arg(long)]
        tree: String,
        #[arg(long)]
        path: String,
    },
    /// Look for an element with an unfolding chain along some path.
    Koenig {
        #[arg(long)]
        tree: String,
    },
    /// Try every bounded element as a witness for a tree.
    Hyper {
        #[arg(long)]
        tree: String,
    },
    /// Compare the witness search with membership in the tree's expansion.
    Charwt {
        #[arg(long)]
        elem: String,
        #[arg(long)]
        tree: String,
    },
    /// Approximant of the eta-expansion of a variable along a tree.
    Jt {
        #[arg(long)]
        tree: String,
    },
    /// Run the built-in checks.
    Selftest,
}

fn load_model(spec: &str) -> Result<Model, CliError> {
    match Model::builtin(spec) {
        Ok(m) => Ok(m),
        Err(err) if !Path::new(spec).is_file() => Err(err.into()),
        Err(_) => {
            let text =
                std::fs::read_to_string(spec).map_err(|source| CliError::Io { path: spec.to_string(), source })?;
            let name = Path::new(spec).file_stem().map_or(spec.to_string(), |s| s.to_string_lossy().into_owned());
            Ok(Model::parse_file(&name, &text)?)
        }
    }
}

fn term(text: &str) -> Result<Term, CliError> {
    Ok(parse_term(text)?)
}

fn env(model: &Model, text: &str) -> Result<Env, CliError> {
    if text.trim().is_empty() {
        return Ok(Env::new());
    }
    Ok(model.parse_env(text)?)
}

pub fn show_judgment(model: &Model, j: &Judgment) -> String {
    format!("{} |- {}", model.show_env(&j.env), model.show(&j.ty))
}

fn show_path(p: &[u64]) -> String {
    if p.is_empty() {
        return "root".into();
    }
    p.iter().map(u64::to_string).collect::<Vec<_>>().join(".")
}

fn show_elements(model: &Model, es: &[Element]) -> String {
    es.iter().map(|e| model.show(e)).collect::<Vec<_>>().join(" ; ")
}

/// Renders the report, and whether every self-check passed.
fn run(cli: Cli) -> Result<(String, bool), CliError> {
    let c = &cli.config;
    let bounds = Bounds { depth: c.depth, fuel: c.fuel, size: c.size };
    if let Command::Selftest = cli.command {
        let (report, failures) = selftest::run(c.seed);
        return Ok((report.render(c.format), failures == 0));
    }
    let model = load_model(&c.model)?;
    let mut r;
    match &cli.command {
        Command::Parse { term: text } => {
            let m = term(text)?;
            r = Report::new("parse");
            r.field("term", &m)
                .field("size", m.size())
                .field("free", m.free_vars().into_iter().collect::<Vec<_>>().join(" "))
                .field("redexes", count_redexes(&m))
                .field("beta-normal", m.is_beta_normal())
                .field("beta-bot-normal", m.is_beta_bot_normal());
        }
        Command::Reduce { term: text, strategy } => {
            let m = term(text)?;
            r = Report::new("reduce");
            match strategy {
                Strategy::Beta | Strategy::Head => {
                    let out =
                        if *strategy == Strategy::Beta { beta_normalize(&m, c.fuel) } else { head_reduce(&m, c.fuel) };
                    let verdict = if out.completed {
                        "normal"
                    } else if out.diverges {
                        "diverges"
                    } else {
                        "not-normal-at-bound"
                    };
                    r.field("verdict", verdict).field("result", &out.result).field("steps", out.steps_used);
                }
                Strategy::Eta => {
                    r.field("verdict", "normal").field("result", eta_nf(&m));
                }
                Strategy::Bot => {
                    r.field("verdict", "normal").field("result", bot_normalize(&m));
                }
            }
            r.field("fuel", c.fuel);
        }
        Command::Bt { term: text } => {
            let p = bt_prefix(&term(text)?, c.depth, c.fuel);
            r = Report::new("bt");
            r.field("verdict", if p.is_exact() { "complete" } else { "truncated-at-bound" })
                .field("prefix", &p.term)
                .field("depth-cut", p.depth_cut)
                .field("fuel-cut", p.fuel_cut)
                .field("depth", c.depth)
                .field("fuel", c.fuel);
        }
        Command::Type { term: text, elem, env: env_text } => {
            let m = term(text)?;
            r = Report::new("type");
            match elem {
                Some(elem) => {
                    let ty = model.parse_element(elem)?;
                    let gamma = env(&model, env_text)?;
                    let budget =
                        SearchBudget { elem_size: c.size, depth: c.depth, fuel: c.fuel, ..SearchBudget::default() };
                    match derive(&gamma, &m, &ty, &model, budget) {
                        DeriveOutcome::Found(d) => {
                            let checked =
                                check_derivation(&d, &model).map_or_else(|e| e.to_string(), |_| "valid".into());
                            r.field("verdict", "derivable")
                                .field("check", checked)
                                .field("derivation", d.to_sexp(&model));
                        }
                        DeriveOutcome::Refuted => {
                            r.field("verdict", "not-derivable");
                        }
                        DeriveOutcome::BudgetExhausted => {
                            r.field("verdict", "not-found-at-bound");
                        }
                    }
                    r.field("judgment", format!("{} |- {}", model.show_env(&gamma), model.show(&ty)));
                }
                None => {
                    let js = enumerate_judgments(&m, &model, c.size)?;
                    r.field("count", js.len()).list("judgment", js.iter().map(|j| show_judgment(&model, j)));
                }
            }
            r.field("model", model.name()).field("bounds", bounds);
        }
        Command::Interp { term: text } => {
            let i = interp_bounded(&term(text)?, &model, bounds)?;
            r = Report::new("interp");
            r.field("count", i.judgments.len())
                .field("prefix", &i.prefix.term)
                .field("prefix-exact", i.prefix.is_exact())
                .list("judgment", i.judgments.iter().map(|j| show_judgment(&model, j)))
                .field("model", model.name())
                .field("bounds", bounds);
        }
        Command::Member { term: text, elem, env: env_text } => {
            let m = term(text)?;
            let ty = model.parse_element(elem)?;
            let gamma = env(&model, env_text)?;
            let res = member(&m, &gamma, &ty, &model, c.depth, c.fuel);
            r = Report::new("member");
            r.field("verdict", res.verdict);
            if let Some(d) = &res.witness {
                r.field("witness", d.to_sexp(&model));
            }
            r.field("approximant", &res.approximant)
                .field("prefix-exact", res.prefix_exact)
                .field("model", model.name())
                .field("depth", res.depth)
                .field("fuel", res.fuel);
        }
        Command::Compare { left, right } => {
            let cmp = compare(&term(left)?, &term(right)?, &model, bounds)?;
            r = Report::new("compare");
            r.field("verdict", cmp.relation);
            let show = |j: &Option<Judgment>| j.as_ref().map_or("none".into(), |j| show_judgment(&model, j));
            r.field("left-only", show(&cmp.left_only))
                .field("right-only", show(&cmp.right_only))
                .field("unconfirmed", cmp.unconfirmed)
                .field("model", model.name())
                .field("bounds", bounds);
        }
        Command::Ler { left, right } => {
            let res = ler_probe(&term(left)?, &term(right)?, c.depth, c.fuel);
            r = Report::new("ler");
            let verdict = match (res.holds_at_bound, res.refutation_exact) {
                (true, _) => "holds-at-bound",
                (false, true) => "refuted",
                (false, false) => "refuted-at-bound",
            };
            r.field("verdict", verdict)
                .field("offending", res.offending.as_ref().map_or("none".into(), Term::to_string))
                .field("depth", res.depth)
                .field("fuel", res.fuel);
        }
        Command::Polarity { elem } => {
            let p = polarity(&model, &model.parse_element(elem)?)?;
            r = Report::new("polarity");
            r.field("positive", p.positive).field("negative", p.negative).field("model", model.name());
        }
        Command::HasNf { term: text } => {
            let rep = has_nf_oracle(&term(text)?, c.size, c.depth, c.fuel);
            let e = Model::builtin("E")?;
            r = Report::new("has-nf");
            match &rep.verdict {
                NfVerdict::Normalizable { judgment, derivation } => {
                    r.field("verdict", "normalizable")
                        .field("judgment", show_judgment(&e, judgment))
                        .field("derivation", derivation.to_sexp(&e));
                }
                NfVerdict::NoEvidenceAtBound => {
                    r.field("verdict", "no-evidence-at-bound");
                }
            }
            r.field("approximant", &rep.approximant)
                .field("model", "E")
                .field("size", rep.size)
                .field("depth", rep.depth)
                .field("fuel", rep.fuel);
        }
        Command::Witness { elem, tree, path } => {
            let a = model.parse_element(elem)?;
            let v = witness_probe(&model, &a, &RecTree::parse(tree)?, &PathSpec::parse(path)?, c.depth)?;
            r = Report::new("witness");
            r.field("verdict", &v.status)
                .field("path", show_path(&v.path_prefix))
                .field("evidence", show_elements(&model, &v.evidence))
                .field("model", model.name())
                .field("depth", v.depth);
        }
        Command::Koenig { tree } => {
            let res = lambda_koenig_probe(&model, &RecTree::parse(tree)?, c.size, c.depth)?;
            r = Report::new("koenig");
            match res {
                KoenigResult::WitnessFound { element, path, evidence } => {
                    r.field("verdict", "witness-found")
                        .field("element", model.show(&element))
                        .field("path", show_path(&path))
                        .field("evidence", show_elements(&model, &evidence));
                }
                KoenigResult::NoneAtBound { elements_tried, exhausted } => {
                    r.field("verdict", "none-at-bound")
                        .field("elements-tried", elements_tried)
                        .field("search-exhausted", exhausted);
                }
            }
            r.field("model", model.name()).field("size", c.size).field("depth", c.depth);
        }
        Command::Hyper { tree } => {
            let h = hyperimmune_probe(&model, &RecTree::parse(tree)?, c.size, c.depth)?;
            r = Report::new("hyper");
            r.field("verdict", if h.no_witness_at_bound() { "no-witness-at-bound" } else { "candidates-survive" })
                .list("refuted", h.refuted.iter().map(|(e, level)| format!("{} at depth {level}", model.show(e))))
                .list("surviving", h.surviving.iter().map(|e| model.show(e)))
                .field("model", model.name())
                .field("size", c.size)
                .field("depth", h.depth);
        }
        Command::Charwt { elem, tree } => {
            let a = model.parse_element(elem)?;
            let rep = char_wt_crosscheck(&model, &a, &RecTree::parse(tree)?, c.depth, c.fuel);
            r = Report::new("charwt");
            r.field("verdict", if rep.consistent { "consistent" } else { "inconsistent" })
                .field("witness-to-depth", rep.witness_to_depth)
                .field("member", rep.member)
                .field("jt", &rep.jt)
                .field("model", model.name())
                .field("depth", rep.depth)
                .field("fuel", rep.fuel);
        }
        Command::Jt { tree } => {
            let t = jt_approximant(&RecTree::parse(tree)?, "x", c.depth);
            r = Report::new("jt");
            r.field("approximant", &t)
                .list("branching", node_branching(&t).into_iter().map(|(p, k)| format!("{} {k}", show_path(&p))))
                .field("depth", c.depth);
        }
        Command::Selftest => unreachable!("handled above"),
    }
    Ok((r.render(c.format), true))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((out, passed)) => {
            print!("{out}");
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(err) => {
            eprintln!("rgm: {err}");
            ExitCode::from(2)
        }
    }
}
