//! Averaging dichotomies for functions on `S × W`, with `S` split into cells
//! `S_0, …, S_{h−1}`.
//!
//! Thresholds built from `γ0, γ1, γ2` are compared through interval
//! enclosures that refine automatically; all other comparisons are exact.
//! Every witness is re-checked by recounting from the definitions before it
//! is returned.

use std::collections::BTreeSet;
use std::ops::Deref;

use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};

use crate::constants::{evaluate, with_auto_precision, Gammas, IntervalValue, Mode, ParamExpr, StubProvider, Value, DEFAULT_BITS};
use crate::error::{Error, Result};
use crate::rational::{from_usize, pow, serde_rat, Rat};
use crate::tree::{check_format, default_format};

/// Values `t[s][w]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Table(#[serde(with = "serde_rat::matrix")] pub Vec<Vec<Rat>>);

impl Deref for Table {
    type Target = Vec<Vec<Rat>>;

    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

impl Table {
    pub fn from_fn(s_count: usize, w_count: usize, mut f: impl FnMut(usize, usize) -> Rat) -> Self {
        Table((0..s_count).map(|s| (0..w_count).map(|w| f(s, w)).collect()).collect())
    }

    pub fn constant(s_count: usize, w_count: usize, v: &Rat) -> Self {
        Self::from_fn(s_count, w_count, |_, _| v.clone())
    }

    pub fn s_count(&self) -> usize {
        self.0.len()
    }

    pub fn w_count(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }

    fn validate(&self, unit: bool) -> Result<()> {
        let w = self.w_count();
        if self.0.is_empty() || w == 0 {
            return Err(Error::pre("S and W must be nonempty"));
        }
        for (s, row) in self.0.iter().enumerate() {
            if row.len() != w {
                return Err(Error::pre(format!("row {s} has {} entries, expected {w}", row.len())));
            }
            if let Some(x) = row.iter().find(|x| x.is_negative() || (unit && **x > Rat::one())) {
                let range = if unit { "[0,1]" } else { "[0,∞)" };
                return Err(Error::pre(format!("value {x} at row {s} lies outside {range}")));
            }
        }
        Ok(())
    }
}

fn validate_cells(cells: &[Vec<usize>], s_count: usize) -> Result<()> {
    if cells.is_empty() {
        return Err(Error::pre("the partition needs at least one cell"));
    }
    let mut seen = vec![false; s_count];
    for (n, cell) in cells.iter().enumerate() {
        if cell.is_empty() {
            return Err(Error::pre(format!("cell {n} is empty")));
        }
        for &s in cell {
            if s >= s_count || std::mem::replace(&mut seen[s], true) {
                return Err(Error::pre(format!("cell {n}: index {s} is out of range or repeated")));
            }
        }
    }
    match seen.iter().position(|x| !x) {
        Some(s) => Err(Error::pre(format!("index {s} lies in no cell"))),
        None => Ok(()),
    }
}

fn cell_mean(cells: &[Vec<usize>], t: &Table, n: usize, w: usize) -> Rat {
    let total: Rat = cells[n].iter().map(|&s| &t[s][w]).sum();
    total / from_usize(cells[n].len())
}

fn fiber_mean(cells: &[Vec<usize>], t: &Table, w: usize) -> Rat {
    let total: Rat = (0..cells.len()).map(|n| cell_mean(cells, t, n, w)).sum();
    total / from_usize(cells.len())
}

fn grand_mean(cells: &[Vec<usize>], t: &Table) -> Rat {
    let total: Rat = (0..t.w_count()).map(|w| fiber_mean(cells, t, w)).sum();
    total / from_usize(t.w_count())
}

fn count_in(cell: &[usize], set: &[usize]) -> usize {
    cell.iter().filter(|s| set.binary_search(s).is_ok()).count()
}

fn is_strictly_sorted(v: &[usize], limit: usize) -> bool {
    v.windows(2).all(|p| p[0] < p[1]) && v.last().is_none_or(|&x| x < limit)
}

/// `S`, `W`, a partition of `S` and one function `f: S × W → [0, ∞)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvgInstance {
    #[serde(default = "default_format")]
    pub format: String,
    pub cells: Vec<Vec<usize>>,
    pub f: Table,
}

impl AvgInstance {
    pub fn new(cells: Vec<Vec<usize>>, f: Table) -> Result<Self> {
        let inst = AvgInstance { format: default_format(), cells, f };
        inst.validate()?;
        Ok(inst)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let inst: AvgInstance = serde_json::from_str(s)?;
        check_format(&inst.format)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        self.f.validate(false)?;
        validate_cells(&self.cells, self.f.s_count())
    }

    pub fn h(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_mean(&self, n: usize, w: usize) -> Rat {
        cell_mean(&self.cells, &self.f, n, w)
    }

    /// `E_{n<h} E_{s∈S_n} f(s, w)`.
    pub fn fiber_mean(&self, w: usize) -> Rat {
        fiber_mean(&self.cells, &self.f, w)
    }

    /// `E_w E_{n<h} E_{s∈S_n} f(s, w)`.
    pub fn grand_mean(&self) -> Rat {
        grand_mean(&self.cells, &self.f)
    }
}

/// A counted bound `count ≥ bound` (or an equality with a recomputed set).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub count: usize,
    pub bound: String,
    pub holds: bool,
}

fn first_failure(checks: &[BoundCheck]) -> Option<&BoundCheck> {
    checks.iter().find(|c| !c.holds)
}

fn at_least(x: &Rat, t: &IntervalValue, what: &str) -> Result<bool> {
    let x = IntervalValue::point(x.clone(), t.bits());
    t.le(&x).ok_or_else(|| Error::Undecidable { bits: t.bits(), what: what.to_string() })
}

/// `count ≥ factor · size`.
fn count_check(name: String, count: usize, factor: &IntervalValue, size: usize) -> Result<BoundCheck> {
    let bound = factor.mul(&IntervalValue::point(from_usize(size), factor.bits()));
    let holds = at_least(&from_usize(count), &bound, &name)?;
    Ok(BoundCheck { name, count, bound: bound.to_string(), holds })
}

fn equality_check(name: String, claimed: &[usize], expected: &[usize]) -> BoundCheck {
    BoundCheck {
        name,
        count: claimed.len(),
        bound: format!("= recomputed set of size {}", expected.len()),
        holds: claimed == expected,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DichotomyParams {
    #[serde(with = "serde_rat")]
    pub alpha: Rat,
    #[serde(with = "serde_rat")]
    pub beta: Rat,
    #[serde(with = "serde_rat")]
    pub rho: Rat,
}

/// The `α` of a dichotomy: the rational in the parameters, or a real number
/// given by a closed expression (no `UDHL`/`MIL` leaves) that overrides it.
#[derive(Clone, Copy, Debug)]
pub enum Alpha<'a> {
    Exact(&'a Rat),
    Real(&'a ParamExpr),
}

impl Alpha<'_> {
    fn at(&self, bits: u32) -> Result<IntervalValue> {
        match self {
            Alpha::Exact(a) => Ok(IntervalValue::point((*a).clone(), bits)),
            Alpha::Real(e) => match evaluate(e, &StubProvider::default(), Mode::Interval(bits))? {
                Value::Interval(iv) => Ok(iv),
                Value::Exact(x) => Ok(IntervalValue::point(x, bits)),
                Value::Log2(_) => Err(Error::NotExact(format!("α = {e}"))),
            },
        }
    }
}

/// The enclosures of `α`, `γ0, γ1, γ2` at one precision, with the exact `β`, `ρ`.
struct Gauge<'a> {
    alpha: IntervalValue,
    beta: &'a Rat,
    rho: &'a Rat,
    g: Gammas,
    bits: u32,
}

impl<'a> Gauge<'a> {
    fn new(alpha: Alpha<'_>, p: &'a DichotomyParams, bits: u32) -> Result<Self> {
        let alpha = alpha.at(bits)?;
        let pt = |x: &Rat| IntervalValue::point(x.clone(), bits);
        let positive = alpha.compare(&pt(&Rat::from_integer(0.into())));
        let below_beta = alpha.le(&pt(&p.beta));
        match (positive, below_beta) {
            (Some(std::cmp::Ordering::Greater), Some(true)) if p.beta <= Rat::one() => {}
            (None, _) | (_, None) => return Err(Error::Undecidable { bits, what: "0 < α ≤ β".into() }),
            _ => return Err(Error::pre(format!("need 0 < α ≤ β ≤ 1, got α={alpha}, β={}", p.beta))),
        }
        if !(p.rho.is_positive() && p.rho <= Rat::one()) {
            return Err(Error::pre(format!("need 0 < ρ ≤ 1, got ρ={}", p.rho)));
        }
        let g0 = pt(&(&p.beta + &p.rho * &p.rho)).sub(&alpha).sqrt()?;
        let g1 = g0.add(&g0.mul(&g0)).sqrt()?;
        let g2 = g1.add(&g1.mul(&g1)).sqrt()?;
        Ok(Gauge { alpha, beta: &p.beta, rho: &p.rho, g: Gammas { g0, g1, g2 }, bits })
    }

    fn pt(&self, x: &Rat) -> IntervalValue {
        IntervalValue::point(x.clone(), self.bits)
    }

    fn rho3(&self) -> Rat {
        pow(self.rho, 3)
    }

    /// `α / c`.
    fn alpha_over(&self, c: usize) -> IntervalValue {
        self.alpha.div(&self.pt(&from_usize(c))).expect("nonzero divisor")
    }

    /// `α − γ0`.
    fn alpha0(&self) -> IntervalValue {
        self.alpha.sub(&self.g.g0)
    }

    /// `α − γ0 − γ1`.
    fn alpha1(&self) -> IntervalValue {
        self.alpha0().sub(&self.g.g1)
    }

    /// `α − γ0 − γ1 − γ2`.
    fn alpha2(&self) -> IntervalValue {
        self.alpha1().sub(&self.g.g2)
    }

    /// `β + ρ²/2`, the level defining `Δ_w`.
    fn delta_level(&self) -> Rat {
        self.beta + self.rho * self.rho / Rat::from_integer(2.into())
    }

    fn require_le(&self, lhs: &IntervalValue, rhs: &IntervalValue, name: &str) -> Result<()> {
        match lhs.le(rhs) {
            Some(true) => Ok(()),
            Some(false) => Err(Error::pre(format!("{name} fails: {lhs} > {rhs}"))),
            None => Err(Error::Undecidable { bits: self.bits, what: name.to_string() }),
        }
    }
}

impl DichotomyParams {
    pub fn new(alpha: Rat, beta: Rat, rho: Rat) -> Self {
        DichotomyParams { alpha, beta, rho }
    }
}

/// One `w` of the second alternative with its cells `N*_w` and set `Δ*_w`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fiber {
    pub w: usize,
    pub cells: Vec<usize>,
    pub delta: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "alternative", rename_all = "kebab-case")]
pub enum Alternative {
    /// A single `w0` concentrates: `Δ0 = {s : f(s,w0) ≥ β+ρ²/2}` is
    /// `ρ³`-dense on the cells `N0`. `case` is the first of the four cases
    /// (1–3) that applied.
    Concentrated {
        case: u8,
        w0: usize,
        n0: Vec<usize>,
        delta0: Vec<usize>,
    },
    /// The fibers list `W*`; each `Δ*_w = {s : f(s,w) ≥ α−γ0−γ1−γ2}`.
    Spread { fibers: Vec<Fiber> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DichotomyWitness {
    #[serde(flatten)]
    pub alternative: Alternative,
    pub bounds: Vec<BoundCheck>,
}

fn delta_set(t: &Table, w: usize, level: &Rat) -> Vec<usize> {
    (0..t.s_count()).filter(|&s| t[s][w] >= *level).collect()
}

fn delta_set_interval(t: &Table, w: usize, level: &IntervalValue) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for s in 0..t.s_count() {
        if at_least(&t[s][w], level, "f(s,w) ≥ α−γ0−γ1−γ2")? {
            out.push(s);
        }
    }
    Ok(out)
}

/// Cells where `|Δ ∩ S_n| ≥ ρ³|S_n|`.
fn dense_cells(cells: &[Vec<usize>], delta: &[usize], rho3: &Rat) -> Vec<usize> {
    (0..cells.len())
        .filter(|&n| from_usize(count_in(&cells[n], delta)) >= rho3 * from_usize(cells[n].len()))
        .collect()
}

/// The four cases in order; the first that applies wins.
fn decide(cells: &[Vec<usize>], t: &Table, gauge: &Gauge) -> Result<Alternative> {
    let h = cells.len();
    let rho2 = gauge.rho * gauge.rho;
    let rho3 = gauge.rho3();
    let rho3h = &rho3 * from_usize(h);
    let top = gauge.beta + &rho2;
    let level = gauge.delta_level();
    let w_count = t.w_count();

    let concentrated = |case, w0, n0| Alternative::Concentrated { case, w0, n0, delta0: delta_set(t, w0, &level) };

    if let Some(w0) = (0..w_count).find(|&w| fiber_mean(cells, t, w) >= top) {
        let cut = gauge.beta + &rho2 * Rat::new(3.into(), 4.into());
        let n0 = (0..h).filter(|&n| cell_mean(cells, t, n, w0) >= cut).collect();
        return Ok(concentrated(1, w0, n0));
    }
    for w in 0..w_count {
        let i_w: Vec<usize> = (0..h).filter(|&n| cell_mean(cells, t, n, w) >= top).collect();
        if from_usize(i_w.len()) >= rho3h {
            return Ok(concentrated(2, w, i_w));
        }
    }
    let k_sets: Vec<Vec<usize>> = (0..w_count)
        .map(|w| dense_cells(cells, &delta_set(t, w, &level), &rho3))
        .collect();
    if let Some(w0) = (0..w_count).find(|&w| from_usize(k_sets[w].len()) >= rho3h) {
        return Ok(concentrated(3, w0, k_sets[w0].clone()));
    }

    let (a0, a1, a2) = (gauge.alpha0(), gauge.alpha1(), gauge.alpha2());
    let mut fibers = Vec::new();
    for w in 0..w_count {
        if !at_least(&fiber_mean(cells, t, w), &a0, "mean over the fiber ≥ α−γ0")? {
            continue;
        }
        let mut n_star = Vec::new();
        for n in 0..h {
            if k_sets[w].binary_search(&n).is_err() && at_least(&cell_mean(cells, t, n, w), &a1, "cell mean ≥ α−γ0−γ1")? {
                n_star.push(n);
            }
        }
        fibers.push(Fiber { w, cells: n_star, delta: delta_set_interval(t, w, &a2)? });
    }
    Ok(Alternative::Spread { fibers })
}

fn concentrated_bounds(
    cells: &[Vec<usize>],
    t: &Table,
    gauge: &Gauge,
    w0: usize,
    n0: &[usize],
    delta0: &[usize],
    tag: &str,
) -> Result<Vec<BoundCheck>> {
    let h = cells.len();
    if w0 >= t.w_count() || !is_strictly_sorted(n0, h) || !is_strictly_sorted(delta0, t.s_count()) {
        return Err(Error::Verification(format!("{tag}: witness indices out of range or unsorted")));
    }
    let rho3 = gauge.pt(&gauge.rho3());
    let mut out = vec![
        equality_check(format!("{tag}Δ0 = {{s : f(s,w0) ≥ β+ρ²/2}}"), delta0, &delta_set(t, w0, &gauge.delta_level())),
        count_check(format!("{tag}|N0| ≥ ρ³h"), n0.len(), &rho3, h)?,
    ];
    for &n in n0 {
        out.push(count_check(format!("{tag}|Δ0 ∩ S_{n}| ≥ ρ³|S_{n}|"), count_in(&cells[n], delta0), &rho3, cells[n].len())?);
    }
    Ok(out)
}

fn spread_bounds(cells: &[Vec<usize>], t: &Table, gauge: &Gauge, fibers: &[Fiber], tag: &str) -> Result<Vec<BoundCheck>> {
    let h = cells.len();
    let ws: Vec<usize> = fibers.iter().map(|f| f.w).collect();
    if !is_strictly_sorted(&ws, t.w_count()) {
        return Err(Error::Verification(format!("{tag}: W* indices out of range or unsorted")));
    }
    let one = gauge.pt(&Rat::one());
    let g = &gauge.g;
    let cell_factor = one.sub(&g.g1).sub(&gauge.pt(&gauge.rho3()));
    let slice_factor = one.sub(&g.g2);
    let a2 = gauge.alpha2();
    let mut out = vec![count_check(format!("{tag}|W*| ≥ (1−γ0)|W|"), ws.len(), &one.sub(&g.g0), t.w_count())?];
    for fib in fibers {
        let w = fib.w;
        if !is_strictly_sorted(&fib.cells, h) || !is_strictly_sorted(&fib.delta, t.s_count()) {
            return Err(Error::Verification(format!("{tag}w={w}: indices out of range or unsorted")));
        }
        out.push(count_check(format!("{tag}|N*_{w}| ≥ (1−γ1−ρ³)h"), fib.cells.len(), &cell_factor, h)?);
        out.push(equality_check(
            format!("{tag}Δ*_{w} = {{s : f(s,{w}) ≥ α−γ0−γ1−γ2}}"),
            &fib.delta,
            &delta_set_interval(t, w, &a2)?,
        ));
        for &n in &fib.cells {
            out.push(count_check(
                format!("{tag}|Δ*_{w} ∩ S_{n}| ≥ (1−γ2)|S_{n}|"),
                count_in(&cells[n], &fib.delta),
                &slice_factor,
                cells[n].len(),
            )?);
        }
    }
    Ok(out)
}

fn alternative_bounds(cells: &[Vec<usize>], t: &Table, gauge: &Gauge, alt: &Alternative, tag: &str) -> Result<Vec<BoundCheck>> {
    match alt {
        Alternative::Concentrated { w0, n0, delta0, .. } => concentrated_bounds(cells, t, gauge, *w0, n0, delta0, tag),
        Alternative::Spread { fibers } => spread_bounds(cells, t, gauge, fibers, tag),
    }
}

fn check_params(p: &DichotomyParams) -> Result<()> {
    let one = Rat::one();
    if !(p.alpha.is_positive() && p.alpha <= p.beta && p.beta <= one) {
        return Err(Error::pre(format!("need 0 < α ≤ β ≤ 1, got α={}, β={}", p.alpha, p.beta)));
    }
    if !(p.rho.is_positive() && p.rho <= one) {
        return Err(Error::pre(format!("need 0 < ρ ≤ 1, got ρ={}", p.rho)));
    }
    Ok(())
}

fn check_mean_at_least(cells: &[Vec<usize>], t: &Table, gauge: &Gauge, name: &str) -> Result<()> {
    let m = grand_mean(cells, t);
    if !at_least(&m, &gauge.alpha, &format!("mean of {name} ≥ α"))? {
        return Err(Error::pre(format!("mean of {name} is {m}, below α = {}", gauge.alpha)));
    }
    Ok(())
}

/// Decides which alternative of the averaging dichotomy holds for `inst`
/// and returns a re-verified witness.
///
/// Requires `0 < α ≤ β ≤ 1`, `0 < ρ ≤ 1`, `γ0 ≤ (α/4)^4`, `f` valued in
/// `[0,1]` and mean of `f` at least `α`.
pub fn averaging_dichotomy(inst: &AvgInstance, p: &DichotomyParams) -> Result<DichotomyWitness> {
    inst.validate()?;
    inst.f.validate(true)?;
    check_params(p)?;
    with_auto_precision(DEFAULT_BITS, |bits| {
        let gauge = Gauge::new(Alpha::Exact(&p.alpha), p, bits)?;
        check_mean_at_least(&inst.cells, &inst.f, &gauge, "f")?;
        let cap = gauge.alpha_over(4).pow(4);
        gauge.require_le(&gauge.g.g0, &cap, "γ0 ≤ (α/4)^4")?;
        let alternative = decide(&inst.cells, &inst.f, &gauge)?;
        let bounds = alternative_bounds(&inst.cells, &inst.f, &gauge, &alternative, "")?;
        if let Some(c) = first_failure(&bounds) {
            return Err(Error::Verification(format!("{} (count {}, bound {})", c.name, c.count, c.bound)));
        }
        Ok(DichotomyWitness { alternative, bounds })
    })
}

/// Recounts every bound of a claimed alternative against `inst`.
pub fn verify_dichotomy(inst: &AvgInstance, p: &DichotomyParams, alt: &Alternative) -> Result<Vec<BoundCheck>> {
    inst.validate()?;
    check_params(p)?;
    with_auto_precision(DEFAULT_BITS, |bits| {
        alternative_bounds(&inst.cells, &inst.f, &Gauge::new(Alpha::Exact(&p.alpha), p, bits)?, alt, "")
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegligibleWitness {
    /// The fibers list `W*_λ`; each `Δ*_w = {s : g(s,w) ≤ θλ^{−3}}`.
    pub fibers: Vec<Fiber>,
    pub bounds: Vec<BoundCheck>,
}

fn check_theta_lambda(theta: &Rat, lambda: &Rat) -> Result<()> {
    if !theta.is_positive() {
        return Err(Error::pre(format!("need θ > 0, got {theta}")));
    }
    if !(lambda.is_positive() && *lambda < Rat::one()) {
        return Err(Error::pre(format!("need 0 < λ < 1, got {lambda}")));
    }
    Ok(())
}

fn below(t: &Table, w: usize, cap: &Rat) -> Vec<usize> {
    (0..t.s_count()).filter(|&s| t[s][w] <= *cap).collect()
}

/// Three rounds of Markov filtering at `θ/λ`, `θ/λ²`, `θ/λ³`.
fn negligible_sets(cells: &[Vec<usize>], g: &Table, theta: &Rat, lambda: &Rat) -> Vec<Fiber> {
    let c1 = theta / lambda;
    let c2 = &c1 / lambda;
    let c3 = &c2 / lambda;
    (0..g.w_count())
        .filter(|&w| fiber_mean(cells, g, w) <= c1)
        .map(|w| Fiber {
            w,
            cells: (0..cells.len()).filter(|&n| cell_mean(cells, g, n, w) <= c2).collect(),
            delta: below(g, w, &c3),
        })
        .collect()
}

fn negligible_bounds(cells: &[Vec<usize>], g: &Table, theta: &Rat, lambda: &Rat, fibers: &[Fiber], tag: &str) -> Result<Vec<BoundCheck>> {
    let h = cells.len();
    let ws: Vec<usize> = fibers.iter().map(|f| f.w).collect();
    if !is_strictly_sorted(&ws, g.w_count()) {
        return Err(Error::Verification(format!("{tag}: W*_λ indices out of range or unsorted")));
    }
    let factor = IntervalValue::point(Rat::one() - lambda, DEFAULT_BITS);
    let cap = theta / pow(lambda, 3);
    let mut out = vec![count_check(format!("{tag}|W*_λ| ≥ (1−λ)|W|"), ws.len(), &factor, g.w_count())?];
    for fib in fibers {
        let w = fib.w;
        if !is_strictly_sorted(&fib.cells, h) || !is_strictly_sorted(&fib.delta, g.s_count()) {
            return Err(Error::Verification(format!("{tag}w={w}: indices out of range or unsorted")));
        }
        out.push(count_check(format!("{tag}|N*_{w},λ| ≥ (1−λ)h"), fib.cells.len(), &factor, h)?);
        out.push(equality_check(format!("{tag}Δ*_{w},λ = {{s : g(s,{w}) ≤ θλ^−3}}"), &fib.delta, &below(g, w, &cap)));
        for &n in &fib.cells {
            out.push(count_check(
                format!("{tag}|Δ*_{w},λ ∩ S_{n}| ≥ (1−λ)|S_{n}|"),
                count_in(&cells[n], &fib.delta),
                &factor,
                cells[n].len(),
            )?);
        }
    }
    Ok(out)
}

fn check_mean_at_most(cells: &[Vec<usize>], t: &Table, theta: &Rat, name: &str) -> Result<()> {
    let m = grand_mean(cells, t);
    if m > *theta {
        return Err(Error::pre(format!("mean of {name} is {m}, above θ = {theta}")));
    }
    Ok(())
}

/// The negligible-threshold filtering for `g = inst.f`: needs `g ≥ 0`,
/// `θ > 0`, `0 < λ < 1` and mean of `g` at most `θ`.
pub fn negligible_threshold(inst: &AvgInstance, theta: &Rat, lambda: &Rat) -> Result<NegligibleWitness> {
    inst.validate()?;
    check_theta_lambda(theta, lambda)?;
    check_mean_at_most(&inst.cells, &inst.f, theta, "g")?;
    let fibers = negligible_sets(&inst.cells, &inst.f, theta, lambda);
    let bounds = negligible_bounds(&inst.cells, &inst.f, theta, lambda, &fibers, "")?;
    if let Some(c) = first_failure(&bounds) {
        return Err(Error::Verification(format!("{} (count {}, bound {})", c.name, c.count, c.bound)));
    }
    Ok(NegligibleWitness { fibers, bounds })
}

/// Data of the combined dichotomy: `W` split into `M` blocks of equal size
/// `b`, selected blocks `A`, functions `f_1..f_p` into `[0,1]` and
/// `g_1..g_q` into `[0,∞)`, all on `S × W`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinedInstance {
    #[serde(default = "default_format")]
    pub format: String,
    pub cells: Vec<Vec<usize>>,
    pub blocks: Vec<Vec<usize>>,
    /// Indices into `blocks`.
    pub selected: Vec<usize>,
    pub f: Vec<Table>,
    #[serde(default)]
    pub g: Vec<Table>,
}

impl CombinedInstance {
    pub fn from_json(s: &str) -> Result<Self> {
        let inst: CombinedInstance = serde_json::from_str(s)?;
        check_format(&inst.format)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.f.first().ok_or_else(|| Error::pre("need at least one function f"))?;
        let (s_count, w_count) = (first.s_count(), first.w_count());
        for t in &self.f {
            t.validate(true)?;
        }
        for t in &self.g {
            t.validate(false)?;
        }
        if self.f.iter().chain(&self.g).any(|t| t.s_count() != s_count || t.w_count() != w_count) {
            return Err(Error::pre("all functions must share S and W"));
        }
        validate_cells(&self.cells, s_count)?;
        validate_cells(&self.blocks, w_count).map_err(|e| Error::pre(format!("blocks of W: {e}")))?;
        let b = self.blocks[0].len();
        if let Some(k) = self.blocks.iter().position(|blk| blk.len() != b) {
            return Err(Error::pre(format!("block {k} has size {}, expected {b}", self.blocks[k].len())));
        }
        let mut sel = self.selected.clone();
        sel.sort_unstable();
        sel.dedup();
        if sel.len() != self.selected.len() || sel.last().is_some_and(|&k| k >= self.blocks.len()) {
            return Err(Error::pre("selected block indices must be distinct and in range"));
        }
        Ok(())
    }

    pub fn block_size(&self) -> usize {
        self.blocks[0].len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinedParams {
    #[serde(flatten)]
    pub dichotomy: DichotomyParams,
    #[serde(with = "serde_rat")]
    pub theta: Rat,
    #[serde(with = "serde_rat")]
    pub lambda: Rat,
    /// Skip the smallness conditions on `γ0`, `λ` and `|A|`; bounds that then
    /// fail are reported instead of rejected.
    #[serde(default)]
    pub relaxed: bool,
    /// Define `Δ*` with `g_r(s,w) < θλ^{−3}` instead of `≤`; Markov's
    /// inequality gives the same bounds either way.
    #[serde(default)]
    pub strict_cap: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "alternative", rename_all = "kebab-case")]
pub enum CombinedAlternative {
    /// The first alternative of the averaging dichotomy for `f_{j0}`.
    Concentrated {
        j0: usize,
        case: u8,
        w0: usize,
        n0: Vec<usize>,
        delta0: Vec<usize>,
    },
    /// Block `k0 ∈ A`, cells `N*` and the common set `Δ*` over the block.
    Spread {
        k0: usize,
        n_star: Vec<usize>,
        delta_star: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinedWitness {
    #[serde(flatten)]
    pub alternative: CombinedAlternative,
    /// The conclusion's bounds, recounted from the definitions.
    pub bounds: Vec<BoundCheck>,
    /// Intermediate inequalities of the construction.
    pub audit: Vec<BoundCheck>,
}

fn intersect_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| b.binary_search(x).is_ok()).collect()
}

/// `Δ* = {s : f_j(s,w) ≥ α' and g_r(s,w) ≤ θλ^{−3} for all w in the block, all j, r}`.
fn combined_delta(inst: &CombinedInstance, block: &[usize], a2: &IntervalValue, cap: &Rat, strict: bool) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    'outer: for s in 0..inst.f[0].s_count() {
        for &w in block {
            if inst.g.iter().any(|g| g[s][w] > *cap || (strict && g[s][w] == *cap)) {
                continue 'outer;
            }
            for f in &inst.f {
                if !at_least(&f[s][w], a2, "f_j(s,w) ≥ α−γ0−γ1−γ2")? {
                    continue 'outer;
                }
            }
        }
        out.push(s);
    }
    Ok(out)
}

fn combined_bounds(inst: &CombinedInstance, p: &CombinedParams, gauge: &Gauge, alt: &CombinedAlternative) -> Result<Vec<BoundCheck>> {
    match alt {
        CombinedAlternative::Concentrated { j0, w0, n0, delta0, .. } => {
            let f = inst.f.get(*j0).ok_or_else(|| Error::Verification(format!("j0 = {j0} out of range")))?;
            concentrated_bounds(&inst.cells, f, gauge, *w0, n0, delta0, "")
        }
        CombinedAlternative::Spread { k0, n_star, delta_star } => {
            if !inst.selected.contains(k0) {
                return Err(Error::Verification(format!("k0 = {k0} is not a selected block")));
            }
            let h = inst.cells.len();
            if !is_strictly_sorted(n_star, h) {
                return Err(Error::Verification("N* out of range or unsorted".into()));
            }
            let rho3 = gauge.pt(&gauge.rho3());
            let cap = &p.theta / pow(&p.lambda, 3);
            let expected = combined_delta(inst, &inst.blocks[*k0], &gauge.alpha2(), &cap, p.strict_cap)?;
            let mut out = vec![
                equality_check("Δ* = common set over the block".into(), delta_star, &expected),
                count_check("|N*| ≥ ρ³h".into(), n_star.len(), &rho3, h)?,
            ];
            for &n in n_star {
                let cell = &inst.cells[n];
                out.push(count_check(format!("|Δ* ∩ S_{n}| ≥ ρ³|S_{n}|"), count_in(cell, delta_star), &rho3, cell.len())?);
            }
            Ok(out)
        }
    }
}

fn combined_at(inst: &CombinedInstance, p: &CombinedParams, alpha: Alpha<'_>, bits: u32) -> Result<CombinedWitness> {
    let gauge = Gauge::new(alpha, &p.dichotomy, bits)?;
    let g = &gauge.g;
    let (b, pc, qc) = (inst.block_size(), inst.f.len(), inst.g.len());
    let m = inst.blocks.len();
    for (j, f) in inst.f.iter().enumerate() {
        check_mean_at_least(&inst.cells, f, &gauge, &format!("f_{j}"))?;
    }
    if !p.relaxed {
        gauge.require_le(&g.g0, &gauge.alpha_over(12 * b * pc).pow(4), "γ0 ≤ (α/(12bp))^4")?;
        if qc > 0 {
            gauge.require_le(&gauge.pt(&p.lambda), &gauge.alpha_over(12 * b * qc), "λ ≤ α/(12bq)")?;
        }
        let need = gauge.alpha_over(10).mul(&gauge.pt(&from_usize(m)));
        if !at_least(&from_usize(inst.selected.len()), &need, "|A| ≥ (α/10)M")? {
            return Err(Error::pre(format!("|A| ≥ (α/10)M fails: |A| = {}, M = {m}", inst.selected.len())));
        }
    }

    let mut audit = Vec::new();
    let mut spread = Vec::with_capacity(pc);
    for (j, f) in inst.f.iter().enumerate() {
        match decide(&inst.cells, f, &gauge)? {
            Alternative::Concentrated { case, w0, n0, delta0 } => {
                let alternative = CombinedAlternative::Concentrated { j0: j, case, w0, n0, delta0 };
                let bounds = combined_bounds(inst, p, &gauge, &alternative)?;
                return Ok(CombinedWitness { alternative, bounds, audit });
            }
            Alternative::Spread { fibers } => {
                audit.extend(spread_bounds(&inst.cells, f, &gauge, &fibers, &format!("f_{j}: "))?);
                spread.push(fibers);
            }
        }
    }
    let mut negligible = Vec::with_capacity(qc);
    for (r, gr) in inst.g.iter().enumerate() {
        let fibers = negligible_sets(&inst.cells, gr, &p.theta, &p.lambda);
        audit.extend(negligible_bounds(&inst.cells, gr, &p.theta, &p.lambda, &fibers, &format!("g_{r}: "))?);
        negligible.push(fibers);
    }

    let w_count = inst.f[0].w_count();
    let w_star: BTreeSet<usize> = (0..w_count)
        .filter(|w| {
            spread.iter().chain(&negligible).all(|fibers| fibers.binary_search_by_key(w, |f| f.w).is_ok())
        })
        .collect();
    let one = gauge.pt(&Rat::one());
    let (pr, qr) = (gauge.pt(&from_usize(pc)), gauge.pt(&from_usize(qc)));
    let lam = gauge.pt(&p.lambda);
    audit.push(count_check(
        "|W*| ≥ (1−pγ0−qλ)|W|".into(),
        w_star.len(),
        &one.sub(&pr.mul(&g.g0)).sub(&qr.mul(&lam)),
        w_count,
    )?);
    let inside = |k: usize| inst.blocks[k].iter().all(|w| w_star.contains(w));
    let outside = (0..m).filter(|&k| !inside(k)).count();
    audit.push(BoundCheck {
        name: "blocks not inside W* are fewer than |A|".into(),
        count: inst.selected.len(),
        bound: format!("> {outside}"),
        holds: inst.selected.len() > outside,
    });
    let mut order = inst.selected.clone();
    order.sort_unstable();
    let Some(k0) = order.into_iter().find(|&k| inside(k)) else {
        let msg = "no selected block lies inside W*".to_string();
        return Err(if p.relaxed { Error::Stalled(msg) } else { Error::Verification(msg) });
    };

    let block = &inst.blocks[k0];
    let fiber_of = |fibers: &[Fiber], w: usize| fibers[fibers.binary_search_by_key(&w, |f| f.w).expect("w lies in W*")].cells.clone();
    let mut n_star: Vec<usize> = (0..inst.cells.len()).collect();
    for &w in block {
        for fibers in spread.iter().chain(&negligible) {
            n_star = intersect_sorted(&n_star, &fiber_of(fibers, w));
        }
    }
    let cap = &p.theta / pow(&p.lambda, 3);
    let delta_star = combined_delta(inst, block, &gauge.alpha2(), &cap, p.strict_cap)?;

    let br = gauge.pt(&from_usize(b));
    let rho3 = gauge.pt(&gauge.rho3());
    let cells_factor = one.sub(&br.mul(&pr.mul(&g.g1).add(&pr.mul(&rho3)).add(&qr.mul(&lam))));
    audit.push(count_check("|N*| ≥ (1−b(pγ1+pρ³+qλ))h".into(), n_star.len(), &cells_factor, inst.cells.len())?);
    let slice_factor = one.sub(&br.mul(&pr.mul(&g.g2).add(&qr.mul(&lam))));
    for &n in &n_star {
        let cell = &inst.cells[n];
        audit.push(count_check(
            format!("|Δ* ∩ S_{n}| ≥ (1−b(pγ2+qλ))|S_{n}|"),
            count_in(cell, &delta_star),
            &slice_factor,
            cell.len(),
        )?);
    }

    let alternative = CombinedAlternative::Spread { k0, n_star, delta_star };
    let bounds = combined_bounds(inst, p, &gauge, &alternative)?;
    Ok(CombinedWitness { alternative, bounds, audit })
}

/// Runs the averaging dichotomy on each `f_j` in order and stops at the
/// first concentrated one; otherwise intersects the spread and negligible
/// sets over the least selected block inside `W*`.
pub fn combined_dichotomy(inst: &CombinedInstance, p: &CombinedParams) -> Result<CombinedWitness> {
    check_params(&p.dichotomy)?;
    combined_dichotomy_with(inst, p, Alpha::Exact(&p.dichotomy.alpha))
}

/// As [`combined_dichotomy`] with `α` taken from `alpha`.
pub fn combined_dichotomy_with(inst: &CombinedInstance, p: &CombinedParams, alpha: Alpha<'_>) -> Result<CombinedWitness> {
    inst.validate()?;
    if !inst.g.is_empty() {
        check_theta_lambda(&p.theta, &p.lambda)?;
    }
    for (r, g) in inst.g.iter().enumerate() {
        check_mean_at_most(&inst.cells, g, &p.theta, &format!("g_{r}"))?;
    }
    let out = with_auto_precision(DEFAULT_BITS, |bits| combined_at(inst, p, alpha, bits))?;
    if !p.relaxed {
        if let Some(c) = first_failure(&out.bounds).or_else(|| first_failure(&out.audit)) {
            return Err(Error::Verification(format!("{} (count {}, bound {})", c.name, c.count, c.bound)));
        }
    }
    Ok(out)
}

/// Recounts the conclusion's bounds of a claimed combined alternative.
pub fn verify_combined(inst: &CombinedInstance, p: &CombinedParams, alt: &CombinedAlternative) -> Result<Vec<BoundCheck>> {
    check_params(&p.dichotomy)?;
    verify_combined_with(inst, p, Alpha::Exact(&p.dichotomy.alpha), alt)
}

/// As [`verify_combined`] with `α` taken from `alpha`.
pub fn verify_combined_with(
    inst: &CombinedInstance,
    p: &CombinedParams,
    alpha: Alpha<'_>,
    alt: &CombinedAlternative,
) -> Result<Vec<BoundCheck>> {
    inst.validate()?;
    with_auto_precision(DEFAULT_BITS, |bits| combined_bounds(inst, p, &Gauge::new(alpha, &p.dichotomy, bits)?, alt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn cells_of(sizes: &[usize]) -> Vec<Vec<usize>> {
        let mut next = 0;
        sizes
            .iter()
            .map(|&k| {
                next += k;
                (next - k..next).collect()
            })
            .collect()
    }

    fn tiny_params() -> DichotomyParams {
        DichotomyParams::new(rat(1, 2), rat(1, 2), rat(1, 4096))
    }

    #[test]
    fn constant_one_concentrates_in_case_one() {
        let inst = AvgInstance::new(cells_of(&[2, 3]), Table::constant(5, 3, &Rat::one())).unwrap();
        let wit = averaging_dichotomy(&inst, &tiny_params()).unwrap();
        assert_eq!(
            wit.alternative,
            Alternative::Concentrated { case: 1, w0: 0, n0: vec![0, 1], delta0: (0..5).collect() }
        );
        assert!(wit.bounds.iter().all(|b| b.holds));
    }

    #[test]
    fn large_rho_violates_gamma_bound() {
        let inst = AvgInstance::new(cells_of(&[2]), Table::constant(2, 1, &Rat::one())).unwrap();
        let p = DichotomyParams::new(rat(1, 2), rat(1, 2), rat(1, 2));
        match averaging_dichotomy(&inst, &p) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("γ0 ≤ (α/4)^4"), "{msg}"),
            other => panic!("expected a precondition error, got {other:?}"),
        }
    }

    #[test]
    fn constant_alpha_spreads_fully() {
        let inst = AvgInstance::new(cells_of(&[1, 2, 3]), Table::constant(6, 4, &rat(1, 2))).unwrap();
        let wit = averaging_dichotomy(&inst, &tiny_params()).unwrap();
        let full = |w| Fiber { w, cells: vec![0, 1, 2], delta: (0..6).collect() };
        assert_eq!(wit.alternative, Alternative::Spread { fibers: (0..4).map(full).collect() });
    }

    #[test]
    fn mean_below_alpha_is_rejected() {
        let inst = AvgInstance::new(cells_of(&[2]), Table::constant(2, 1, &rat(1, 4))).unwrap();
        assert!(matches!(averaging_dichotomy(&inst, &tiny_params()), Err(Error::Precondition(_))));
    }

    #[test]
    fn tampered_witness_fails_recount() {
        let inst = AvgInstance::new(cells_of(&[2, 2]), Table::constant(4, 2, &Rat::one())).unwrap();
        let bad = Alternative::Concentrated { case: 1, w0: 0, n0: vec![0, 1], delta0: vec![0, 1, 2] };
        let checks = verify_dichotomy(&inst, &tiny_params(), &bad).unwrap();
        assert!(checks.iter().any(|c| !c.holds));
    }

    #[test]
    fn negligible_full_sets_at_zero_and_boundary() {
        let inst = AvgInstance::new(cells_of(&[2, 1]), Table::constant(3, 2, &Rat::from_integer(0.into()))).unwrap();
        let full: Vec<Fiber> = (0..2).map(|w| Fiber { w, cells: vec![0, 1], delta: vec![0, 1, 2] }).collect();
        assert_eq!(negligible_threshold(&inst, &rat(1, 10), &rat(1, 2)).unwrap().fibers, full);
        let inst = AvgInstance::new(cells_of(&[2, 1]), Table::constant(3, 2, &rat(1, 10))).unwrap();
        assert_eq!(negligible_threshold(&inst, &rat(1, 10), &rat(1, 2)).unwrap().fibers, full);
        assert!(negligible_threshold(&inst, &rat(1, 20), &rat(1, 2)).is_err());
        assert!(negligible_threshold(&inst, &rat(1, 10), &Rat::one()).is_err());
    }

    fn combined(f: Rat, g: Rat, selected: Vec<usize>) -> CombinedInstance {
        CombinedInstance {
            format: default_format(),
            cells: cells_of(&[2, 2]),
            blocks: vec![vec![0, 1], vec![2, 3]],
            selected,
            f: vec![Table::constant(4, 4, &f)],
            g: vec![Table::constant(4, 4, &g)],
        }
    }

    fn combined_params() -> CombinedParams {
        // γ0 = ρ = (α/(12bp))^4 with b = 2, p = 1.
        let rho = pow(&rat(1, 48), 4);
        CombinedParams { dichotomy: DichotomyParams::new(rat(1, 2), rat(1, 2), rho), theta: rat(1, 8), lambda: rat(1, 48), relaxed: false, strict_cap: false }
    }

    #[test]
    fn combined_spread_with_full_block() {
        let inst = combined(rat(1, 2), Rat::from_integer(0.into()), vec![0, 1]);
        let wit = combined_dichotomy(&inst, &combined_params()).unwrap();
        assert_eq!(wit.alternative, CombinedAlternative::Spread { k0: 0, n_star: vec![0, 1], delta_star: vec![0, 1, 2, 3] });
        assert!(wit.audit.iter().any(|c| c.name.starts_with("|Δ* ∩ S_0| ≥ (1−b(pγ2+qλ))")));
        assert!(wit.audit.iter().chain(&wit.bounds).all(|c| c.holds));
    }

    #[test]
    fn combined_concentrates_on_constant_one() {
        let inst = combined(Rat::one(), Rat::from_integer(0.into()), vec![1]);
        let wit = combined_dichotomy(&inst, &combined_params()).unwrap();
        assert!(matches!(wit.alternative, CombinedAlternative::Concentrated { j0: 0, case: 1, w0: 0, .. }));
    }

    #[test]
    fn combined_rejects_small_selection_and_large_lambda() {
        let inst = combined(rat(1, 2), Rat::from_integer(0.into()), vec![]);
        match combined_dichotomy(&inst, &combined_params()) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("|A|"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let inst = combined(rat(1, 2), Rat::from_integer(0.into()), vec![0]);
        let p = CombinedParams { lambda: rat(1, 4), ..combined_params() };
        assert!(matches!(combined_dichotomy(&inst, &p), Err(Error::Precondition(_))));
        let relaxed = CombinedParams { relaxed: true, ..p };
        assert!(combined_dichotomy(&inst, &relaxed).is_ok());
    }

    #[test]
    fn instance_json_round_trip() {
        let inst = AvgInstance::new(cells_of(&[1, 1]), Table::from_fn(2, 2, |s, w| rat((s + w) as i64, 3))).unwrap();
        let text = serde_json::to_string(&inst).unwrap();
        assert!(text.contains("\"1/3\""));
        assert_eq!(AvgInstance::from_json(&text).unwrap(), inst);
        assert!(AvgInstance::new(vec![vec![0], vec![0, 1]], Table::constant(2, 1, &Rat::one())).is_err());
    }
}
