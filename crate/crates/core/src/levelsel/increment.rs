//! The density-increment recursion: alternate [`selection_step`] and
//! [`coloring_step`] until a strongly correlated pair or a density increment
//! turns up, recording the states `(Z_n, w_n, w̃_n, Γ_n, θ_n, ε_n)`.
//!
//! Heights follow a caller-supplied schedule instead of `f^{(K−n)}(N)`, since
//! the true values are far beyond desk scale.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::constants::{evaluate, BoundProvider, Mode, ParamExpr, StrongCorrelationParams, Value};
use crate::error::{Error, Result};
use crate::rational::{fmt_rat, pow, serde_rat, Rat};
use crate::search::SearchConfig;
use crate::strong::{VectorStrongWitness, WitnessJson};
use crate::tree::{Node, TupleNode, VectorTree};

use super::dhl::dhl_search;
use super::steps::{coloring_step, rooted, selection_step, spread_level, ColoringOutcome, SelectionOutcome, SelectionParams};
use super::{CorrelationCertificate, CorrelationPair, LevelSelection, Threshold};

/// Heights `N_1` (selection) and `N_2` (coloring) of one iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageHeights {
    pub select: usize,
    pub color: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncrementParams {
    #[serde(with = "serde_rat")]
    pub eps: Rat,
    #[serde(with = "serde_rat")]
    pub r: Rat,
    #[serde(with = "serde_rat")]
    pub lambda: Rat,
    #[serde(with = "serde_rat")]
    pub theta: Rat,
    /// `heights[m]` is used by iteration `m`; its length is the iteration count `K`.
    pub heights: Vec<StageHeights>,
    #[serde(default)]
    pub relaxed: bool,
}

fn exact_value(expr: &ParamExpr, provider: &dyn BoundProvider, what: &str) -> Result<Rat> {
    match evaluate(expr, provider, Mode::Exact)? {
        Value::Exact(x) => Ok(x),
        _ => Err(Error::NotExact(what.to_string())),
    }
}

fn exact_usize(expr: &ParamExpr, provider: &dyn BoundProvider, what: &str) -> Result<usize> {
    let x = exact_value(expr, provider, what)?;
    if !x.is_integer() {
        return Err(Error::NotExact(format!("{what} = {x} is not an integer")));
    }
    usize::try_from(x.to_integer()).map_err(|_| Error::NotExact(format!("{what} does not fit a machine integer")))
}

impl IncrementParams {
    /// The schedule `N_2(K−1) = N`, `N_1(m) = N_2(m) + s_2`,
    /// `N_2(m−1) = N_1(m) + s_1 + 1`, where `s_1`, `s_2` stand in for the
    /// growth of `f_1` and `f_2`.
    pub fn relaxed_schedule(k: usize, n: usize, select_slack: usize, color_slack: usize) -> Vec<StageHeights> {
        let mut out = Vec::with_capacity(k);
        let mut color = n;
        for _ in 0..k {
            let select = color + color_slack;
            out.push(StageHeights { select, color });
            color = select + select_slack + 1;
        }
        out.reverse();
        out
    }

    /// Height of the index tree the schedule needs: `f^{(K)}(N)`.
    pub fn required_height(&self) -> usize {
        self.heights.first().map_or(0, |h| h.select + 1)
    }

    /// Parameters from the strong-correlation bundle, with heights `N_2(m) = f^{(K−m−1)}(N)`
    /// and `N_1(m) = f_2(N_2(m))`. Every leaf must resolve to an exact value.
    pub fn from_bundle(
        bundle: &StrongCorrelationParams,
        eps: &Rat,
        n: usize,
        provider: &dyn BoundProvider,
    ) -> Result<Self> {
        let k = exact_usize(&bundle.k, provider, "K")?;
        if k == 0 {
            return Err(Error::pre("K must be at least 1"));
        }
        let apply = |f: &ParamExpr, x: usize| ParamExpr::let_in("n", ParamExpr::int(x as i64), f.clone());
        let mut heights = Vec::with_capacity(k);
        let mut color = n;
        for _ in 0..k {
            let select = exact_usize(&apply(&bundle.f2, color), provider, "f_2(N_2)")?;
            heights.push(StageHeights { select, color });
            color = exact_usize(&apply(&bundle.f, color), provider, "f(N_2)")?;
        }
        heights.reverse();
        Ok(IncrementParams {
            eps: eps.clone(),
            r: exact_value(&bundle.r, provider, "r")?,
            lambda: exact_value(&bundle.lambda, provider, "λ")?,
            theta: exact_value(&bundle.theta, provider, "θ")?,
            heights,
            relaxed: false,
        })
    }

    fn validate(&self) -> Result<()> {
        let zero = Rat::from_integer(0.into());
        let one = Rat::from_integer(1.into());
        for (name, x) in [("ε", &self.eps), ("r", &self.r), ("λ", &self.lambda), ("θ", &self.theta)] {
            if *x <= zero || *x > one {
                return Err(Error::pre(format!("{name} must lie in (0,1], got {x}")));
            }
        }
        if self.heights.is_empty() {
            return Err(Error::pre("at least one iteration is needed"));
        }
        if let Some(h) = self.heights.iter().find(|h| h.color == 0 || h.color > h.select) {
            return Err(Error::pre(format!("stage heights need 1 ≤ N_2 ≤ N_1, got {h:?}")));
        }
        Ok(())
    }

    /// `θ_n = θ λ^{−3(n−1)}`; `θ_0 = θ λ^3`.
    fn theta_at(&self, n: usize) -> Rat {
        if n == 0 {
            &self.theta * pow(&self.lambda, 3)
        } else {
            &self.theta / pow(&self.lambda, 3 * (n as u64 - 1))
        }
    }
}

/// The state after iteration `n−1`, in index positions.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementState {
    pub n: usize,
    pub z: VectorStrongWitness,
    pub w: Node,
    pub w_tilde: Node,
    /// `(index level, flat)` tuples of `⊗Z_{n−1}(n−1)`, sorted.
    pub gamma: Vec<(usize, usize)>,
    pub theta: Rat,
    pub eps: Threshold,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateRecord {
    pub n: usize,
    pub z: WitnessJson,
    pub w: Node,
    pub w_tilde: Node,
    pub gamma: Vec<TupleNode>,
    #[serde(with = "serde_rat")]
    pub theta: Rat,
    /// The closed expression for `ε_n` and a decimal enclosure of it.
    pub eps: String,
    pub eps_enclosure: String,
}

impl IncrementState {
    pub fn to_record(&self, index: &VectorTree) -> StateRecord {
        StateRecord {
            n: self.n,
            z: self.z.to_json(index),
            w: self.w.clone(),
            w_tilde: self.w_tilde.clone(),
            gamma: self.gamma.iter().map(|&(l, f)| index.tuple(l, f)).collect(),
            theta: self.theta.clone(),
            eps: self.eps.expr().to_string(),
            eps_enclosure: self.eps.enclosure().to_string(),
        }
    }
}

/// The recorded states; [`IncrementTrace::push`] checks (C1)–(C6) first.
#[derive(Clone, Debug)]
pub struct IncrementTrace {
    z0: VectorStrongWitness,
    heights: Vec<usize>,
    states: Vec<IncrementState>,
}

fn condition(name: &str, holds: bool, what: impl FnOnce() -> String) -> Result<()> {
    if holds {
        Ok(())
    } else {
        Err(Error::Verification(format!("({name}) {}", what())))
    }
}

impl IncrementTrace {
    /// `color_heights[n−1]` fixes `h(Z_n) = n + color_heights[n−1]`.
    pub fn new(z0: VectorStrongWitness, color_heights: Vec<usize>) -> Self {
        IncrementTrace { z0, heights: color_heights, states: Vec::new() }
    }

    pub fn states(&self) -> &[IncrementState] {
        &self.states
    }

    fn z_prev(&self) -> &VectorStrongWitness {
        self.states.last().map_or(&self.z0, |s| &s.z)
    }

    /// Appends the next state if it satisfies (C1)–(C6).
    pub fn push(&mut self, d: &LevelSelection, s: IncrementState) -> Result<()> {
        let n = self.states.len() + 1;
        if s.n != n {
            return Err(Error::pre(format!("expected state {n}, got {}", s.n)));
        }
        let shape = d.shape();
        let prev = self.z_prev();
        let target = self
            .heights
            .get(n - 1)
            .map(|h| n + h)
            .ok_or_else(|| Error::pre(format!("no height scheduled for state {n}")))?;
        condition("C1", s.z.height() == target && prev.height() >= n && s.z.restrict(n - 1) == prev.restrict(n - 1), || {
            format!("Z_{n}↾{} differs from Z_{}↾{0} or h(Z_{n}) = {} ≠ {target}", n - 1, n - 1, s.z.height())
        })?;

        let below = prev.level_tuples(shape, n - 1);
        let vl = prev.levels[n - 1];
        let inside = s.gamma.iter().all(|&(l, f)| l == vl && below.contains(&f));
        let bw = d.b_w() as usize;
        let lower = Rat::new((s.gamma.len() * 2 * bw).into(), below.len().into());
        condition("C2", inside && s.gamma.windows(2).all(|x| x[0] < x[1]) && s.eps.le(&lower)?, || {
            format!("Γ_{n} ⊄ ⊗Z_{}({}) or |Γ_{n}| < (ε_{n}/2b_W)|⊗Z_{}({})|", n - 1, n - 1, n - 1, n - 1)
        })?;

        let wt = d.w_pos(&s.w_tilde)?;
        let own = s.z.shape(shape);
        for zf in 0..own.level_product_size(n) {
            let suc = s.z.successor(shape, n, &own.unflatten(n, zf));
            condition("C3", d.dense_at(wt, &suc, &s.eps)?, || {
                format!("D is not (w̃_{n}, suc_Z(z), ε_{n})-dense for z = {}", d.index().tuple(s.z.levels[n], s.z.level_tuples(shape, n)[zf]))
            })?;
        }

        let mut roots: Vec<(usize, usize)> = self.states.iter().flat_map(|t| t.gamma.iter().copied()).collect();
        let prev_roots = roots.clone();
        roots.extend(s.gamma.iter().copied());
        roots.sort_unstable();
        for k in n..s.z.height() {
            for (_, gv) in rooted(d, &s.z, k, &roots)? {
                let flats = gv.level_tuples(shape, 1);
                condition("C4", d.negligible_at(gv.levels[1], &flats, wt, &s.theta)?, || {
                    format!("a Γ-rooted pair of Z_{n} with top level {k} is not θ_{n}-negligible at w̃_{n}")
                })?;
            }
        }

        let wp = d.w_pos(&s.w)?;
        condition("C5", !s.gamma.is_empty() && s.gamma.iter().all(|&(l, f)| d.level_map()[l] == wp.0 && d.set(l, f).contains(wp.1)), || {
            format!("w_{n} ∉ ⋂_{{Γ_{n}}} D")
        })?;

        if n >= 2 {
            let mut prev_roots = prev_roots;
            prev_roots.sort_unstable();
            for (_, gv) in rooted(d, prev, n - 1, &prev_roots)? {
                let inter = d.common(gv.levels[1], &gv.level_tuples(shape, 1));
                let same_level = d.level_map()[gv.levels[1]] == wp.0;
                condition("C6", !(same_level && inter.contains(wp.1)), || {
                    format!("w_{n} lies in ⋂ D over a Γ-rooted pair of Z_{} at level {}", n - 1, n - 1)
                })?;
            }
        }
        self.states.push(s);
        Ok(())
    }

    /// One JSON line per state.
    pub fn to_jsonl(&self, index: &VectorTree) -> Result<String> {
        let mut out = String::new();
        for s in &self.states {
            out.push_str(&serde_json::to_string(&s.to_record(index))?);
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExhaustReason {
    Budget,
    Iterations,
}

#[derive(Clone, Debug, PartialEq)]
pub enum IncrementOutcome {
    Correlated { iteration: usize, pair: CorrelationPair, certificate: CorrelationCertificate },
    /// `D` is `(w, Z, level)`-dense with `level = ε + r²/2`.
    DensityIncrement { iteration: usize, w: Node, z: VectorStrongWitness, level: Rat },
    Exhausted { reason: ExhaustReason, note: String },
}

#[derive(Clone, Debug)]
pub struct IncrementRun {
    pub outcome: IncrementOutcome,
    pub trace: IncrementTrace,
}

/// Sorted union of the `Γ_n` recorded so far.
fn gamma_union(trace: &IncrementTrace) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = trace.states().iter().flat_map(|s| s.gamma.iter().copied()).collect();
    out.sort_unstable();
    out
}

/// Runs the recursion for `K = params.heights.len()` iterations.
pub fn density_increment_run(d: &LevelSelection, params: &IncrementParams, cfg: &SearchConfig) -> Result<IncrementRun> {
    params.validate()?;
    let density = d.density_of();
    if density < params.eps {
        return Err(Error::pre(format!("δ(D) = {} is below ε = {}", fmt_rat(&density), fmt_rat(&params.eps))));
    }
    let z0 = VectorStrongWitness::full(d.shape());
    let mut trace = IncrementTrace::new(z0.clone(), params.heights.iter().map(|h| h.color).collect());
    let k = params.heights.len();
    let mut eps_m = Threshold::exact(params.eps.clone());
    let mut z = z0;
    let mut w_tilde = Node::root();
    for m in 0..k {
        let step = run_iteration(d, params, cfg, &trace, m, &z, &w_tilde, &eps_m);
        let state = match step {
            Ok(Step::Done(outcome)) => return Ok(IncrementRun { outcome, trace }),
            Ok(Step::Next(state)) => state,
            Err(e @ Error::Budget { .. }) => {
                let note = format!("iteration {m}: {e}");
                return Ok(IncrementRun { outcome: IncrementOutcome::Exhausted { reason: ExhaustReason::Budget, note }, trace });
            }
            Err(e) => return Err(with_context(m, e)),
        };
        trace.push(d, state.clone()).map_err(|e| with_context(m, e))?;
        z = state.z;
        w_tilde = state.w_tilde;
        eps_m = state.eps;
    }
    let outcome = match endgame(d, &trace, cfg) {
        Ok(o) => o,
        Err(e @ Error::Budget { .. }) => IncrementOutcome::Exhausted { reason: ExhaustReason::Budget, note: format!("endgame: {e}") },
        Err(e) => return Err(e),
    };
    Ok(IncrementRun { outcome, trace })
}

fn with_context(m: usize, e: Error) -> Error {
    match e {
        Error::Precondition(s) => Error::Precondition(format!("iteration {m}: {s}")),
        Error::Verification(s) => Error::Verification(format!("iteration {m}: {s}")),
        Error::Stalled(s) => Error::Stalled(format!("iteration {m}: {s}")),
        Error::InsufficientHeight { stage, required } => {
            Error::InsufficientHeight { stage: format!("iteration {m}: {stage}"), required }
        }
        other => other,
    }
}

enum Step {
    Done(IncrementOutcome),
    Next(IncrementState),
}

#[allow(clippy::too_many_arguments)]
fn run_iteration(
    d: &LevelSelection,
    params: &IncrementParams,
    cfg: &SearchConfig,
    trace: &IncrementTrace,
    m: usize,
    z: &VectorStrongWitness,
    w_tilde: &Node,
    eps_m: &Threshold,
) -> Result<Step> {
    let gamma = gamma_union(trace);
    let sp = SelectionParams {
        alpha: eps_m.clone(),
        beta: params.eps.clone(),
        rho: params.r.clone(),
        theta: params.theta_at(m),
        lambda: params.lambda.clone(),
        height: params.heights[m].select,
        relaxed: params.relaxed,
    };
    let (w, z2, b) = match selection_step(d, z, m, w_tilde, &gamma, &sp, cfg)? {
        SelectionOutcome::Increment { w, z } => {
            let level = &params.eps + &params.r * &params.r / Rat::from_integer(2.into());
            return Ok(Step::Done(IncrementOutcome::DensityIncrement { iteration: m, w, z, level }));
        }
        SelectionOutcome::Split { w, z, b } => (w, z, b),
    };
    let theta_next = params.theta_at(m + 1);
    match coloring_step(d, &z2, m, &b, &w, &theta_next, params.heights[m].color, cfg)? {
        ColoringOutcome::Correlated(pair) => {
            let certificate = d.is_strongly_correlated(&pair.f, &pair.w, &theta_next)?;
            if !certificate.holds {
                return Err(Error::Verification("returned pair is not strongly correlated".into()));
            }
            Ok(Step::Done(IncrementOutcome::Correlated { iteration: m, pair, certificate }))
        }
        ColoringOutcome::Colored { z: zp, gamma, p0 } => {
            let zl = z2.levels[m];
            Ok(Step::Next(IncrementState {
                n: m + 1,
                z: zp,
                w_tilde: w.child(p0),
                w,
                gamma: gamma.into_iter().map(|f| (zl, f)).collect(),
                theta: theta_next,
                eps: Threshold::real(spread_level(eps_m.expr(), &params.eps, &params.r))?,
            }))
        }
    }
}

/// Looks for a height-2 strong subtree of `Z_K↾(K−1)` inside `Γ_1 ∪ … ∪ Γ_K`.
/// Finding one contradicts (C5) and (C6), so it is reported as a failure.
fn endgame(d: &LevelSelection, trace: &IncrementTrace, cfg: &SearchConfig) -> Result<IncrementOutcome> {
    let states = trace.states();
    let k = states.len();
    let last = &states[k - 1].z;
    let zk = last.restrict(k - 1);
    let own = zk.shape(d.shape());
    let mut sets: Vec<FixedBitSet> = (0..k).map(|j| FixedBitSet::with_capacity(own.level_product_size(j))).collect();
    for (j, set) in sets.iter_mut().enumerate() {
        let flats = zk.level_tuples(d.shape(), j);
        for (o, f) in flats.iter().enumerate() {
            if states[j].gamma.binary_search(&(zk.levels[j], *f)).is_ok() {
                set.insert(o);
            }
        }
    }
    let allowed: Vec<usize> = (0..k).collect();
    match dhl_search(&own, &sets, &allowed, 2, cfg)? {
        Some(g) => {
            let gv = zk.compose(&g);
            Err(Error::Verification(format!(
                "endgame: Γ_1 ∪ … ∪ Γ_{k} contains a height-2 strong subtree at levels {:?}, contradicting (C5) and (C6)",
                gv.levels
            )))
        }
        None => Ok(IncrementOutcome::Exhausted {
            reason: ExhaustReason::Iterations,
            note: format!("{k} iterations without a height-2 strong subtree in Γ_1 ∪ … ∪ Γ_{k}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use crate::tree::HomTree;

    fn full(height: usize) -> LevelSelection {
        let level_map = (1..=height).collect();
        LevelSelection::full(VectorTree::full(&[2], height).unwrap(), HomTree::full(2, height + 1).unwrap(), level_map).unwrap()
    }

    fn relaxed(eps: Rat, heights: Vec<StageHeights>) -> IncrementParams {
        IncrementParams { eps, r: rat(1, 8), lambda: rat(1, 2), theta: rat(1, 4), heights, relaxed: true }
    }

    #[test]
    fn schedule_is_consistent() {
        let h = IncrementParams::relaxed_schedule(3, 1, 1, 0);
        assert_eq!(
            h,
            vec![StageHeights { select: 5, color: 5 }, StageHeights { select: 3, color: 3 }, StageHeights { select: 1, color: 1 }]
        );
        // The selection at m needs h(Z_m) − (m+1) = N_2(m−1) − 1 ≥ N_1(m).
        for m in 1..3 {
            assert!(h[m - 1].color > h[m].select);
        }
        assert_eq!(relaxed(rat(1, 2), h).required_height(), 6);
    }

    #[test]
    fn full_density_correlates_at_first_iteration() {
        let d = full(4);
        let p = relaxed(rat(1, 1), IncrementParams::relaxed_schedule(1, 1, 0, 0));
        let run = density_increment_run(&d, &p, &SearchConfig::default()).unwrap();
        match run.outcome {
            IncrementOutcome::Correlated { iteration, certificate, .. } => {
                assert_eq!(iteration, 0);
                assert!(certificate.holds);
            }
            other => panic!("{other:?}"),
        }
        assert!(run.trace.states().is_empty());
    }

    #[test]
    fn density_below_eps_is_rejected() {
        let v = VectorTree::full(&[2], 3).unwrap();
        let d = LevelSelection::from_fn(v, HomTree::full(2, 4).unwrap(), vec![1, 2, 3], |n, _, i| n == 0 || i % 2 == 0).unwrap();
        let p = relaxed(rat(3, 4), IncrementParams::relaxed_schedule(1, 1, 0, 0));
        assert!(matches!(density_increment_run(&d, &p, &SearchConfig::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn states_violating_conditions_are_rejected() {
        let d = full(4);
        let z0 = VectorStrongWitness::full(d.shape());
        let mut trace = IncrementTrace::new(z0.clone(), vec![2]);
        let bad = IncrementState {
            n: 1,
            z: z0.clone(),
            w: Node::parse("0").unwrap(),
            w_tilde: Node::parse("00").unwrap(),
            gamma: vec![(0, 0)],
            theta: rat(1, 4),
            eps: Threshold::exact(rat(1, 2)),
        };
        match trace.push(&d, bad.clone()) {
            Err(Error::Verification(msg)) => assert!(msg.starts_with("(C1)"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let mut ok = bad.clone();
        ok.z = z0.restrict(2);
        // A full D makes every pair correlated, so (C4) fails.
        match trace.push(&d, ok) {
            Err(Error::Verification(msg)) => assert!(msg.starts_with("(C4)"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let mut gamma_bad = bad;
        gamma_bad.z = z0.restrict(2);
        gamma_bad.gamma = vec![(1, 0)];
        match trace.push(&d, gamma_bad) {
            Err(Error::Verification(msg)) => assert!(msg.starts_with("(C2)"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(trace.states().is_empty());
    }
}
