//! The `ramsey-trees` command line: argument types and [`run`].
//!
//! Every subcommand prints one JSON document. Rationals are written `p/q`
//! (integers bare); real values as decimal enclosures or `log2` magnitudes.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fixedbitset::FixedBitSet;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value as Json};

use crate::averaging::{averaging_dichotomy, AvgInstance, DichotomyParams};
use crate::constants::{
    c_constant, cor_bound, default_r, evaluate, gammas_at, q_bound, sequence_report, strong_correlation_params,
    theta_n, xi, xi_chain, BoundProvider, ColorBase, MilEntry, Mode, ParamExpr, Provenance, TableProvider, UdhlEntry,
    DEFAULT_BITS,
};
use crate::error::{Error, Result};
use crate::gen;
use crate::levelsel::{
    density_increment_run, dhl_search, udhl_bruteforce, Dichotomy, ExhaustReason, IncrementOutcome, IncrementParams,
    LevelSelection, Threshold, UdhlOutcome,
};
use crate::prob::{correlation_search, sigma_bound, Event};
use crate::rational::{fmt_rat, parse_rat, Rat};
use crate::search::{SearchConfig, DEFAULT_BUDGET};
use crate::strong::{
    count_strong, count_strong2_formula, embed_finite_set, embed_finite_set_with_height, enumerate_strong,
    enumerate_strong2_at, is_vector_strong_subtree, milliken_number_bruteforce, milliken_search, Shape, StrongCheck,
    VectorStrongWitness, WitnessJson,
};
use crate::tree::{Node, TupleNode, VectorTree};
use crate::verify::run_suites;

fn rat_arg(s: &str) -> std::result::Result<Rat, String> {
    parse_rat(s).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "ramsey-trees", version, about = "Strong subtrees, constants, dichotomies and density-increment search")]
pub struct Cli {
    /// Seed of every randomized fixture and coloring.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Cap on search nodes visited.
    #[arg(long, global = true, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    /// Bits of interval arithmetic for `--mode interval`.
    #[arg(long, global = true, default_value_t = DEFAULT_BITS)]
    pub precision: u32,
    /// Provider table of UDHL/MIL values (JSON).
    #[arg(long, global = true)]
    pub provider: Option<PathBuf>,
    /// Write the JSON result here instead of standard output.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a parameter formula.
    Constants(ConstantsArgs),
    /// Enumerate or count strong subtrees of a full vector tree.
    Enumerate(EnumerateArgs),
    /// Embed a finite set of tuples into a vector strong subtree.
    Embed(EmbedArgs),
    /// Evaluate a predicate on an instance.
    Check(CheckArgs),
    /// Run a witness search.
    Search(SearchArgs),
    /// Brute-force UDHL or Milliken numbers and emit provider entries.
    Bounds(BoundsArgs),
    /// Run the density-increment recursion.
    Increment(IncrementArgs),
    /// Generate a seeded random instance.
    Gen(GenArgs),
    /// Run the property suites and report pass/fail per suite.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConstExpr {
    Q,
    Sigma,
    Gammas,
    Xi,
    XiChain,
    Cor,
    QBound,
    C,
    K,
    R,
    Lambda,
    Theta,
    ThetaN,
    KPrime,
    StrCor,
    Deltas,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Interval,
    Log2,
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    #[arg(long, value_enum)]
    pub expr: ConstExpr,
    /// Branching numbers.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub b: Vec<u32>,
    #[arg(long, default_value_t = 0)]
    pub m: u64,
    #[arg(long, default_value_t = 2)]
    pub k: u64,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, value_parser = rat_arg, default_value = "1/2")]
    pub eps: Rat,
    #[arg(long, value_parser = rat_arg)]
    pub theta: Option<Rat>,
    #[arg(long, value_parser = rat_arg)]
    pub alpha: Option<Rat>,
    #[arg(long, value_parser = rat_arg)]
    pub beta: Option<Rat>,
    #[arg(long, value_parser = rat_arg)]
    pub rho: Option<Rat>,
    /// Branching number of the extra tree.
    #[arg(long, default_value_t = 2)]
    pub b_extra: u32,
    /// `r` for `deltas`; defaults to the formula at `--iterations`.
    #[arg(long, value_parser = rat_arg)]
    pub r: Option<Rat>,
    /// Iteration count `K` for `deltas`.
    #[arg(long, default_value_t = 1)]
    pub iterations: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    /// Include the symbolic expression.
    #[arg(long)]
    pub show_expr: bool,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub b: Vec<u32>,
    #[arg(long)]
    pub height: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Only subtrees agreeing with the host up to this level.
    #[arg(long)]
    pub root: Option<usize>,
    /// Height-2 subtrees with top level `top` (overrides `--k`).
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long)]
    pub count_only: bool,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub b: Vec<u32>,
    #[arg(long)]
    pub height: usize,
    /// A tuple, coordinates separated by `/`, e.g. `01/10`.
    #[arg(long = "node", required = true)]
    pub nodes: Vec<String>,
    /// Pad the embedding to exactly this height.
    #[arg(long)]
    pub pad: Option<usize>,
}

/// A level selection read from `--input` or generated from the seed.
#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Level selection JSON; when absent one is generated.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub b: Vec<u32>,
    #[arg(long, default_value_t = 3)]
    pub height: usize,
    #[arg(long, default_value_t = 2)]
    pub b_w: u32,
    /// Relative density of each generated `D(t)`.
    #[arg(long, value_parser = rat_arg, default_value = "1")]
    pub density: Rat,
    /// Generate the pointer construction instead of uniform sets.
    #[arg(long)]
    pub pointer: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Predicate {
    Correlated,
    Negligible,
    StronglyNegligible,
    Dense,
    StronglyDense,
    Dichotomy,
    Strong,
    Averaging,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(value_enum)]
    pub predicate: Predicate,
    #[command(flatten)]
    pub fixture: FixtureArgs,
    /// Node sets of a subtree of the index tree, as JSON `[[[digits],…],…]`.
    #[arg(long)]
    pub f: Option<String>,
    /// A node of the ambient tree, e.g. `01`.
    #[arg(long)]
    pub w: Option<String>,
    #[arg(long, value_parser = rat_arg, default_value = "1/2")]
    pub theta: Rat,
    #[arg(long, value_parser = rat_arg, default_value = "1/2")]
    pub alpha: Rat,
    #[arg(long, value_parser = rat_arg)]
    pub beta: Option<Rat>,
    #[arg(long, value_parser = rat_arg)]
    pub rho: Option<Rat>,
    /// Index level `n` for negligibility.
    #[arg(long, default_value_t = 0)]
    pub level: usize,
    /// Flat tuple indices of `⊗V(n)`; all of them when absent.
    #[arg(long, value_delimiter = ',')]
    pub tuples: Vec<usize>,
    /// Include certificates and fiber densities.
    #[arg(long)]
    pub detail: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SearchKind {
    Correlated,
    Dhl,
    Milliken,
    Prob,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(value_enum)]
    pub kind: SearchKind,
    #[command(flatten)]
    pub fixture: FixtureArgs,
    #[arg(long, value_parser = rat_arg, default_value = "1/2")]
    pub theta: Rat,
    #[arg(long, value_parser = rat_arg, default_value = "1/2")]
    pub eps: Rat,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Number of colors.
    #[arg(long, default_value_t = 2)]
    pub r: u32,
    /// Allowed levels for `dhl`; all levels when absent.
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    pub atoms: usize,
    /// Number of events for `prob`; `max(Σ(θ,ε,k), k)` when absent.
    #[arg(long)]
    pub events: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundKind {
    Udhl,
    Milliken,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(value_enum)]
    pub kind: BoundKind,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub b: Vec<u32>,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, value_parser = rat_arg, default_value = "1/2")]
    pub eps: Rat,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub r: u32,
    /// Largest `N` (UDHL) or height (Milliken) tried.
    #[arg(long, default_value_t = 4)]
    pub max: usize,
    /// Provider table to update in place (created if missing).
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IncrementArgs {
    #[command(flatten)]
    pub fixture: FixtureArgs,
    /// `ε`; the density of the fixture when absent.
    #[arg(long, value_parser = rat_arg)]
    pub eps: Option<Rat>,
    #[arg(long, value_parser = rat_arg, default_value = "1/1048576")]
    pub r: Rat,
    #[arg(long, value_parser = rat_arg, default_value = "1/2")]
    pub lambda: Rat,
    #[arg(long, value_parser = rat_arg, default_value = "1/8")]
    pub theta: Rat,
    /// Iteration count `K`.
    #[arg(long, default_value_t = 2)]
    pub iterations: usize,
    /// Height `N` of the last coloring stage.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub select_slack: usize,
    #[arg(long, default_value_t = 0)]
    pub color_slack: usize,
    /// Enforce the smallness conditions on every step.
    #[arg(long)]
    pub strict: bool,
    /// Write the state trace here as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    LevelSelection,
    Pointer,
    Avg,
    Combined,
    Prob,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(value_enum)]
    pub kind: GenKind,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub b: Vec<u32>,
    #[arg(long, default_value_t = 3)]
    pub height: usize,
    #[arg(long, default_value_t = 2)]
    pub b_w: u32,
    #[arg(long, value_parser = rat_arg, default_value = "1/2")]
    pub density: Rat,
    /// Cell sizes of averaging instances.
    #[arg(long, value_delimiter = ',', default_value = "2,2")]
    pub cells: Vec<usize>,
    /// `|W|` (avg) or the number of blocks (combined).
    #[arg(long, default_value_t = 4)]
    pub width: usize,
    #[arg(long, default_value_t = 2)]
    pub block_size: usize,
    #[arg(long, default_value_t = 1)]
    pub f_count: usize,
    #[arg(long, default_value_t = 1)]
    pub g_count: usize,
    #[arg(long, default_value_t = 4)]
    pub denom: u32,
    #[arg(long, default_value_t = 8)]
    pub atoms: usize,
    #[arg(long, default_value_t = 4)]
    pub events: usize,
    /// Inclusion probability of each atom in each event.
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Suites to run; all when absent.
    #[arg(long = "suite")]
    pub suites: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
}

/// The JSON document and exit code of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub json: Json,
    pub code: i32,
}

impl Outcome {
    fn ok(json: Json) -> Self {
        Outcome { json, code: 0 }
    }

    /// Exit `1` when a reported property fails.
    fn verdict(json: Json, pass: bool) -> Self {
        Outcome { json, code: if pass { 0 } else { 1 } }
    }
}

/// Runs one invocation. Errors carry their exit code via [`Error::exit_code`].
pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = SearchConfig { budget: cli.budget, workers: cli.workers.max(1) };
    let provider = match &cli.provider {
        Some(p) => TableProvider::from_json(&fs::read_to_string(p)?)?,
        None => TableProvider::default(),
    };
    match &cli.command {
        Command::Constants(a) => constants(a, &provider, cli.precision),
        Command::Enumerate(a) => enumerate(a, &cfg),
        Command::Embed(a) => embed(a),
        Command::Check(a) => check(a, cli.seed),
        Command::Search(a) => search(a, cli.seed, &cfg),
        Command::Bounds(a) => bounds(a, &cfg),
        Command::Increment(a) => increment(a, cli.seed, &cfg),
        Command::Gen(a) => generate(a, cli.seed),
        Command::Verify(a) => {
            let reports = run_suites(&a.suites, a.samples, cli.seed, &cfg)?;
            let pass = reports.iter().all(|r| r.pass);
            Ok(Outcome::verdict(json!({ "pass": pass, "suites": reports }), pass))
        }
    }
}

/// Serializes `outcome` (or the error) and returns the process exit code.
pub fn render(result: Result<Outcome>, output: Option<&Path>) -> (String, i32) {
    let (json, code) = match result {
        Ok(o) => (o.json, o.code),
        Err(e) => (json!({ "error": e.to_string() }), e.exit_code()),
    };
    let text = serde_json::to_string_pretty(&json).expect("JSON values serialize");
    match output {
        Some(p) => match fs::write(p, format!("{text}\n")) {
            Ok(()) => (String::new(), code),
            Err(e) => (json!({ "error": e.to_string() }).to_string(), 2),
        },
        None => (text, code),
    }
}

fn to_json(x: &impl Serialize) -> Result<Json> {
    Ok(serde_json::to_value(x)?)
}

fn need(x: &Option<Rat>, name: &str) -> Result<Rat> {
    x.clone().ok_or_else(|| Error::Parse(format!("--{name} is required for this expression")))
}

fn constants(a: &ConstantsArgs, provider: &dyn BoundProvider, bits: u32) -> Result<Outcome> {
    let bundle = || strong_correlation_params(&a.b, a.b_extra, &a.eps, ColorBase::Extra);
    let expr = match a.expr {
        ConstExpr::Q => ParamExpr::QTerm { b: a.b.clone(), m: Box::new(ParamExpr::int(a.m as i64)) },
        ConstExpr::Sigma => ParamExpr::sigma(
            ParamExpr::lit(need(&a.theta, "theta")?),
            ParamExpr::lit(a.eps.clone()),
            ParamExpr::int(a.k as i64),
        ),
        ConstExpr::Xi => xi(&a.b, &a.eps)?,
        ConstExpr::XiChain => xi_chain(&a.b, &a.eps, a.k as usize)?,
        ConstExpr::Cor => cor_bound(&a.b, &a.eps)?,
        ConstExpr::QBound => q_bound(&a.b, &a.eps)?,
        ConstExpr::C => c_constant(&a.b, a.n, &a.eps)?,
        ConstExpr::K => bundle()?.k,
        ConstExpr::R => bundle()?.r,
        ConstExpr::Lambda => bundle()?.lambda,
        ConstExpr::Theta => bundle()?.theta,
        ConstExpr::ThetaN => theta_n(&bundle()?, a.n)?,
        ConstExpr::KPrime => bundle()?.k_prime,
        ConstExpr::StrCor => bundle()?.str_cor,
        ConstExpr::Gammas => {
            let (alpha, beta, rho) = (need(&a.alpha, "alpha")?, need(&a.beta, "beta")?, need(&a.rho, "rho")?);
            let g = gammas_at(&alpha, &beta, &rho, bits)?;
            return Ok(Outcome::ok(json!({
                "g0": g.g0.to_string(),
                "g1": g.g1.to_string(),
                "g2": g.g2.to_string(),
            })));
        }
        ConstExpr::Deltas => {
            let r = match &a.r {
                Some(r) => r.clone(),
                None => default_r(&a.b, a.b_extra, &a.eps, a.iterations as u64)?,
            };
            let s = sequence_report(&r, &a.eps, a.iterations, &a.b, a.b_extra)?;
            let strs = |v: &[crate::constants::IntervalValue]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
            let pass = s.all_hold();
            return Ok(Outcome::verdict(
                json!({ "deltas": strs(&s.deltas), "eps": strs(&s.epss), "properties": s.properties, "all_hold": pass }),
                pass,
            ));
        }
    };
    let mode = match a.mode {
        ModeArg::Exact => Mode::Exact,
        ModeArg::Interval => Mode::Interval(bits),
        ModeArg::Log2 => Mode::Log2,
    };
    let value = evaluate(&expr, provider, mode)?;
    let mut out = json!({ "value": value.to_string() });
    if a.show_expr {
        out["expr"] = json!(expr.to_string());
    }
    Ok(Outcome::ok(out))
}

fn enumerate(a: &EnumerateArgs, cfg: &SearchConfig) -> Result<Outcome> {
    let v = VectorTree::full(&a.b, a.height)?;
    let shape = Shape::of(&v);
    let (count, iter) = match a.top {
        Some(top) => {
            let it = enumerate_strong2_at(&shape, top)?;
            (count_strong2_formula(&a.b, top as u64 - 1), it)
        }
        None => (count_strong(&shape, a.k, a.root)?, enumerate_strong(&shape, a.k, a.root)?),
    };
    let mut out = match u64::try_from(&count) {
        Ok(c) => json!({ "count": c }),
        Err(_) => json!({ "count": count.to_string() }),
    };
    if !a.count_only {
        let mut ws = Vec::new();
        for w in iter {
            if ws.len() as u64 >= cfg.budget {
                return Err(Error::Budget {
                    what: "enumeration".into(),
                    limit: cfg.budget,
                    estimate: count.to_string(),
                });
            }
            ws.push(w.to_json(&v));
        }
        if count != ws.len().into() {
            return Err(Error::Verification(format!("stream has {} subtrees, count says {count}", ws.len())));
        }
        out["witnesses"] = to_json(&ws)?;
    }
    Ok(Outcome::ok(out))
}

fn parse_tuple(s: &str) -> Result<TupleNode> {
    Ok(TupleNode(s.split('/').map(|c| Node::parse(c.trim())).collect::<Result<_>>()?))
}

fn embed(a: &EmbedArgs) -> Result<Outcome> {
    let v = VectorTree::full(&a.b, a.height)?;
    let f: Vec<TupleNode> = a.nodes.iter().map(|s| parse_tuple(s)).collect::<Result<_>>()?;
    let w = match a.pad {
        Some(h) => embed_finite_set_with_height(&v, &f, h)?,
        None => embed_finite_set(&v, &f)?,
    };
    let strong = is_vector_strong_subtree(&v, &w.node_sets(&v))?.is_strong();
    let mut distinct = f.clone();
    distinct.sort();
    distinct.dedup();
    Ok(Outcome::verdict(
        json!({
            "witness": w.to_json(&v),
            "height": w.height(),
            "bound": a.b.len() * (2 * distinct.len() - 1),
            "strong": strong,
        }),
        strong,
    ))
}

fn fixture(a: &FixtureArgs, seed: u64) -> Result<LevelSelection> {
    match &a.input {
        Some(p) => LevelSelection::from_json(&fs::read_to_string(p)?),
        None if a.pointer => gen::pointer_selection(&a.b, a.height, a.b_w, seed),
        None => gen::level_selection(&a.b, a.height, a.b_w, &a.density, seed),
    }
}

fn parse_witness(index: &VectorTree, s: &str) -> Result<VectorStrongWitness> {
    let sets: Vec<Vec<Node>> = match serde_json::from_str::<WitnessJson>(s) {
        Ok(w) => w.nodes,
        Err(_) => serde_json::from_str(s)?,
    };
    VectorStrongWitness::from_node_sets(index, &sets)
}

/// `--f` or the first height-2 subtree in enumeration order.
fn pair_subtree(d: &LevelSelection, f: &Option<String>) -> Result<VectorStrongWitness> {
    match f {
        Some(s) => parse_witness(d.index(), s),
        None => enumerate_strong(d.shape(), 2, None)?
            .next()
            .ok_or_else(|| Error::pre("the index tree has no height-2 subtree")),
    }
}

/// `--w` or the first node of `D` at the root of `f`.
fn pair_node(d: &LevelSelection, f: &VectorStrongWitness, w: &Option<String>) -> Result<Node> {
    if let Some(s) = w {
        return Node::parse(s);
    }
    let n0 = f.levels[0];
    let root = f.level_tuples(d.shape(), 0)[0];
    let i = d.set(n0, root).ones().next().ok_or_else(|| Error::pre("D is empty at the root of F"))?;
    Ok(d.ambient().node(d.level_map()[n0], i).clone())
}

fn check(a: &CheckArgs, seed: u64) -> Result<Outcome> {
    if a.predicate == Predicate::Averaging {
        let path = a.fixture.input.as_ref().ok_or_else(|| Error::Parse("averaging needs --input".into()))?;
        let inst = AvgInstance::from_json(&fs::read_to_string(path)?)?;
        let beta = a.beta.clone().unwrap_or_else(|| a.alpha.clone());
        let rho = need(&a.rho, "rho")?;
        let w = averaging_dichotomy(&inst, &DichotomyParams::new(a.alpha.clone(), beta, rho))?;
        let mut out = json!({ "result": true });
        if a.detail {
            out["witness"] = to_json(&w)?;
        }
        return Ok(Outcome::ok(out));
    }
    let d = fixture(&a.fixture, seed)?;
    let root_w = || a.w.as_deref().map_or(Ok(Node::root()), Node::parse);
    let tuples = || {
        if a.tuples.is_empty() {
            (0..d.shape().level_product_size(a.level)).collect()
        } else {
            a.tuples.clone()
        }
    };
    if a.level >= d.height() {
        return Err(Error::Range { what: "index level", value: a.level, limit: d.height() });
    }
    let mut out = match a.predicate {
        Predicate::Correlated => {
            let f = pair_subtree(&d, &a.f)?;
            let w = pair_node(&d, &f, &a.w)?;
            let cert = d.is_strongly_correlated(&f, &w, &a.theta)?;
            let mut out = json!({ "result": cert.holds });
            if a.detail {
                out["certificate"] = to_json(&cert)?;
                out["pair"] = json!({ "F": f.to_json(d.index()), "w": w });
            }
            out
        }
        Predicate::Dichotomy => {
            let f = pair_subtree(&d, &a.f)?;
            let w = pair_node(&d, &f, &a.w)?;
            match d.dichotomy_check(&f, &w, &a.theta)? {
                Dichotomy::Correlated => json!({ "result": "correlated" }),
                Dichotomy::NegligibleAt(p) => json!({ "result": "negligible", "direction": p }),
            }
        }
        Predicate::Negligible => json!({ "result": d.is_negligible(a.level, &tuples(), &root_w()?, &a.theta)? }),
        Predicate::StronglyNegligible => {
            json!({ "result": d.is_strongly_negligible(a.level, &tuples(), &root_w()?, &a.theta)? })
        }
        Predicate::Dense | Predicate::StronglyDense => {
            let s = match &a.f {
                Some(s) => parse_witness(d.index(), s)?,
                None => VectorStrongWitness::full(d.shape()),
            };
            let alpha = Threshold::exact(a.alpha.clone());
            let w = root_w()?;
            let r = if a.predicate == Predicate::Dense {
                d.is_dense(&w, &s, &alpha)?
            } else {
                d.is_strongly_dense(&w, &s, &alpha)?
            };
            json!({ "result": r })
        }
        Predicate::Strong => {
            let s = a.f.as_deref().ok_or_else(|| Error::Parse("strong needs --f".into()))?;
            let sets: Vec<Vec<Node>> = match serde_json::from_str::<WitnessJson>(s) {
                Ok(w) => w.nodes,
                Err(_) => serde_json::from_str(s)?,
            };
            match is_vector_strong_subtree(d.index(), &sets)? {
                StrongCheck::Strong => json!({ "result": true }),
                StrongCheck::Violation(v) => json!({ "result": false, "violation": v.to_string() }),
            }
        }
        Predicate::Averaging => unreachable!("handled above"),
    };
    if a.detail {
        out["density"] = json!(fmt_rat(&d.density_of()));
    }
    Ok(Outcome::ok(out))
}

/// A uniform subset of `⌈density·|⊗V(n)|⌉` tuples on every level.
fn random_level_sets(shape: &Shape, density: &Rat, seed: u64) -> Result<Vec<FixedBitSet>> {
    if *density < Rat::from_integer(0.into()) || *density > Rat::from_integer(1.into()) {
        return Err(Error::pre("density must lie in [0,1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..shape.height)
        .map(|n| {
            let size = shape.level_product_size(n);
            let k = (density * Rat::from_integer(size.into())).ceil().to_integer();
            let k = usize::try_from(k).map_err(|_| Error::pre("level too large"))?;
            let mut s = FixedBitSet::with_capacity(size);
            for i in sample(&mut rng, size, k) {
                s.insert(i);
            }
            Ok(s)
        })
        .collect()
}

fn search(a: &SearchArgs, seed: u64, cfg: &SearchConfig) -> Result<Outcome> {
    let fx = &a.fixture;
    match a.kind {
        SearchKind::Correlated => {
            let d = fixture(fx, seed)?;
            let pair = d.find_strongly_correlated(&a.theta, cfg)?;
            Ok(Outcome::ok(json!({ "found": pair.is_some(), "pair": pair.map(|p| p.to_json(d.index())) })))
        }
        SearchKind::Dhl => {
            let v = VectorTree::full(&fx.b, fx.height)?;
            let shape = Shape::of(&v);
            let dset = random_level_sets(&shape, &fx.density, seed)?;
            let allowed: Vec<usize> = if a.levels.is_empty() { (0..fx.height).collect() } else { a.levels.clone() };
            let w = dhl_search(&shape, &dset, &allowed, a.k, cfg)?;
            let sets: Vec<Vec<usize>> = dset.iter().map(|s| s.ones().collect()).collect();
            Ok(Outcome::ok(json!({
                "found": w.is_some(),
                "witness": w.map(|w| w.to_json(&v)),
                "set": sets,
            })))
        }
        SearchKind::Milliken => {
            let v = VectorTree::full(&fx.b, fx.height)?;
            let shape = Shape::of(&v);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let colors: std::collections::HashMap<VectorStrongWitness, u32> =
                enumerate_strong(&shape, a.k, None)?.map(|w| (w, rng.random_range(0..a.r))).collect();
            let coloring = |w: &VectorStrongWitness| {
                colors.get(w).copied().ok_or_else(|| Error::pre("subtree outside the colored family"))
            };
            let w = milliken_search(&shape, &coloring, a.k, a.m, None, cfg)?;
            let color = match &w {
                Some(w) => {
                    let inner = enumerate_strong(&Shape::new(fx.b.clone(), a.m), a.k, None)?.next();
                    inner.map(|i| coloring(&w.compose(&i))).transpose()?
                }
                None => None,
            };
            Ok(Outcome::ok(json!({ "found": w.is_some(), "witness": w.map(|w| w.to_json(&v)), "color": color })))
        }
        SearchKind::Prob => {
            let sigma = sigma_bound(&a.theta, &a.eps, a.k as u64)?;
            let n = match a.events {
                Some(n) => n,
                None => usize::try_from(sigma).map_err(|_| Error::pre("Σ does not fit a machine integer"))?.max(a.k),
            };
            let space = gen::prob_space(a.atoms, 5, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            let mut events = Vec::with_capacity(n);
            let mut tries = 0u64;
            while events.len() < n {
                tries += 1;
                if tries > cfg.budget {
                    return Err(Error::Budget { what: "event sampling".into(), limit: cfg.budget, estimate: "unknown".into() });
                }
                let members: Vec<usize> = (0..a.atoms).filter(|_| rng.random_bool(0.75)).collect();
                let e = Event::from_atoms(a.atoms, &members)?;
                if space.measure(&e) >= a.eps {
                    events.push(e);
                }
            }
            let w = correlation_search(&space, &events, a.k, &a.theta, &a.eps, cfg.budget)?;
            Ok(Outcome::ok(json!({ "space": space, "events": events, "witness": w })))
        }
    }
}

fn update_table(path: &Path, f: impl FnOnce(&mut TableProvider)) -> Result<TableProvider> {
    let mut t = if path.exists() { TableProvider::from_json(&fs::read_to_string(path)?)? } else { TableProvider::default() };
    f(&mut t);
    t.validate()?;
    fs::write(path, format!("{}\n", serde_json::to_string_pretty(&t)?))?;
    Ok(t)
}

fn bounds(a: &BoundsArgs, cfg: &SearchConfig) -> Result<Outcome> {
    let mut table = TableProvider::default();
    let outcome = match a.kind {
        BoundKind::Udhl => match udhl_bruteforce(&a.b, a.k, &a.eps, a.max, cfg)? {
            UdhlOutcome::Value(v) => {
                table.udhl.push(UdhlEntry {
                    b: a.b.clone(),
                    k: a.k as u64,
                    eps: a.eps.clone(),
                    value: v as u64,
                    provenance: Provenance::BruteForced,
                });
                json!({ "value": v })
            }
            UdhlOutcome::Exceeds(m) => json!({ "exceeds": m }),
        },
        BoundKind::Milliken => match milliken_number_bruteforce(&a.b, a.m, a.k, a.r, a.max, cfg)? {
            crate::strong::MillikenNumber::Value(v) => {
                table.mil.push(MilEntry {
                    b: a.b.clone(),
                    m: a.m as u64,
                    k: a.k as u64,
                    r: a.r as u64,
                    value: v as u64,
                    provenance: Provenance::BruteForced,
                });
                json!({ "value": v })
            }
            crate::strong::MillikenNumber::ExceedsMaxHeight(m) => json!({ "exceeds": m }),
        },
    };
    table.validate()?;
    if let Some(path) = &a.table {
        update_table(path, |t| {
            for e in &table.udhl {
                t.udhl.retain(|x| !(x.b == e.b && x.k == e.k && x.eps == e.eps));
                t.udhl.push(e.clone());
            }
            for e in &table.mil {
                t.mil.retain(|x| !(x.b == e.b && x.m == e.m && x.k == e.k && x.r == e.r));
                t.mil.push(e.clone());
            }
        })?;
    }
    Ok(Outcome::ok(json!({ "outcome": outcome, "table": table })))
}

fn increment(a: &IncrementArgs, seed: u64, cfg: &SearchConfig) -> Result<Outcome> {
    let d = fixture(&a.fixture, seed)?;
    let params = IncrementParams {
        eps: a.eps.clone().unwrap_or_else(|| d.density_of()),
        r: a.r.clone(),
        lambda: a.lambda.clone(),
        theta: a.theta.clone(),
        heights: IncrementParams::relaxed_schedule(a.iterations, a.n, a.select_slack, a.color_slack),
        relaxed: !a.strict,
    };
    if d.height() < params.required_height() {
        return Err(Error::InsufficientHeight { stage: "schedule".into(), required: params.required_height() });
    }
    let run = density_increment_run(&d, &params, cfg)?;
    let index = d.index();
    if let Some(path) = &a.trace {
        fs::write(path, run.trace.to_jsonl(index)?)?;
    }
    let outcome = match &run.outcome {
        IncrementOutcome::Correlated { iteration, pair, certificate } => json!({
            "kind": "correlated",
            "iteration": iteration,
            "pair": pair.to_json(index),
            "certificate": certificate,
        }),
        IncrementOutcome::DensityIncrement { iteration, w, z, level } => json!({
            "kind": "density-increment",
            "iteration": iteration,
            "w": w,
            "Z": z.to_json(index),
            "level": fmt_rat(level),
        }),
        IncrementOutcome::Exhausted { reason, note } => json!({
            "kind": "exhausted",
            "reason": match reason { ExhaustReason::Budget => "budget", ExhaustReason::Iterations => "iterations" },
            "note": note,
        }),
    };
    Ok(Outcome::ok(json!({
        "outcome": outcome,
        "states": run.trace.states().len(),
        "heights": params.heights,
        "eps": fmt_rat(&params.eps),
    })))
}

fn generate(a: &GenArgs, seed: u64) -> Result<Outcome> {
    let json = match a.kind {
        GenKind::LevelSelection => to_json(&gen::level_selection(&a.b, a.height, a.b_w, &a.density, seed)?.to_json())?,
        GenKind::Pointer => to_json(&gen::pointer_selection(&a.b, a.height, a.b_w, seed)?.to_json())?,
        GenKind::Avg => to_json(&gen::avg_instance(&a.cells, a.width, a.denom, seed)?)?,
        GenKind::Combined => to_json(&gen::combined_instance(
            &a.cells,
            a.width,
            a.block_size,
            a.f_count,
            a.g_count,
            a.denom,
            seed,
        )?)?,
        GenKind::Prob => json!({
            "space": gen::prob_space(a.atoms, 9, seed)?,
            "events": gen::events(a.atoms, a.events, a.p, seed.wrapping_add(1))?,
        }),
    };
    Ok(Outcome::ok(json))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> Outcome {
        let cli = Cli::try_parse_from(std::iter::once("ramsey-trees").chain(args.iter().copied())).unwrap();
        run(&cli).unwrap()
    }

    #[test]
    fn q_of_binary_tree_at_one() {
        assert_eq!(run_args(&["constants", "--expr", "q", "--b", "2", "--m", "1"]).json, json!({ "value": "6" }));
    }

    #[test]
    fn strong2_count_of_height_three_binary_tree() {
        let out = run_args(&["enumerate", "--b", "2", "--height", "3", "--k", "2", "--count-only"]);
        assert_eq!(out.json, json!({ "count": 7 }));
    }

    #[test]
    fn full_fixture_is_correlated() {
        assert_eq!(run_args(&["check", "correlated"]).json, json!({ "result": true }));
    }

    #[test]
    fn stream_matches_count() {
        let out = run_args(&["enumerate", "--b", "2", "--height", "3", "--k", "2"]);
        assert_eq!(out.json["witnesses"].as_array().unwrap().len(), 7);
    }

    #[test]
    fn sigma_needs_theta() {
        let cli = Cli::try_parse_from(["ramsey-trees", "constants", "--expr", "sigma"]).unwrap();
        assert_eq!(run(&cli).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn embedding_reports_strong() {
        let out = run_args(&["embed", "--b", "2", "--height", "4", "--node", "00", "--node", "1"]);
        assert_eq!(out.json["strong"], json!(true));
        assert_eq!(out.code, 0);
    }
}
