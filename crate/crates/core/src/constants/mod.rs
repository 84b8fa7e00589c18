//! Parameter formulas as symbolic expressions over opaque `UDHL`/`MIL`
//! leaves, plus the gamma and delta/epsilon sequences.
//!
//! Formulas are built as [`ParamExpr`] trees and evaluated by [`evaluate`]
//! against a [`BoundProvider`]. Square-root chains are computed as
//! [`IntervalValue`] enclosures and compared with automatic precision
//! doubling.

pub mod eval;
pub mod expr;
pub mod interval;
pub mod provider;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

pub use eval::{certify_le, enclose, evaluate, evaluate_with, EvalOptions, Magnitude, Mode, Value};
pub use expr::{BranchRun, ParamExpr};
pub use interval::{with_auto_precision, IntervalValue, DEFAULT_BITS, MAX_BITS};
pub use provider::{
    BoundProvider, Layered, MilEntry, MilQuery, Natural, Provenance, StubProvider, TableProvider, UdhlEntry, UdhlQuery,
};

use crate::error::{Error, Result};
use crate::rational::{pow, Rat};

fn check_branchings(b: &[u32]) -> Result<()> {
    if b.is_empty() || b.iter().any(|&x| x < 2) {
        return Err(Error::pre("branching numbers must be at least 2"));
    }
    Ok(())
}

fn check_eps(eps: &Rat) -> Result<()> {
    if !(eps.is_positive() && *eps <= Rat::one()) {
        return Err(Error::pre(format!("need 0 < ε ≤ 1, got {eps}")));
    }
    Ok(())
}

fn lit(r: &Rat) -> ParamExpr {
    ParamExpr::lit(r.clone())
}

fn int(n: i64) -> ParamExpr {
    ParamExpr::int(n)
}

fn plain_runs(b: &[u32]) -> Vec<BranchRun> {
    b.iter().map(|&x| BranchRun::once(x)).collect()
}

fn product(b: &[u32]) -> i64 {
    b.iter().map(|&x| x as i64).product()
}

/// `Cor(b | ε) = Σ(ε/4, ε/2, UDHL(b | 2, ε/2))` for a symbolic `ε`.
fn cor_of(b: &[u32], eps: &ParamExpr) -> ParamExpr {
    let u = ParamExpr::udhl(plain_runs(b), int(2), eps.clone() / int(2));
    ParamExpr::sigma(eps.clone() / int(4), eps.clone() / int(2), u)
}

/// `ξ(b | ε) = (ε/4)^{UDHL(b | 2, ε/2)} / Q(b | ε)`.
fn xi_of(b: &[u32], eps: &ParamExpr) -> ParamExpr {
    let u = ParamExpr::udhl(plain_runs(b), int(2), eps.clone() / int(2));
    let q = ParamExpr::QSum { b: b.to_vec(), count: Box::new(cor_of(b, eps) - int(1)) };
    (eps.clone() / int(4)).pow(u) / q
}

pub fn cor_bound(b: &[u32], eps: &Rat) -> Result<ParamExpr> {
    check_branchings(b)?;
    check_eps(eps)?;
    Ok(cor_of(b, &lit(eps)))
}

/// `Q(b | ε) = Σ_{m=0}^{Cor−2} q(b, m)`.
pub fn q_bound(b: &[u32], eps: &Rat) -> Result<ParamExpr> {
    Ok(ParamExpr::QSum { b: b.to_vec(), count: Box::new(cor_bound(b, eps)? - int(1)) })
}

pub fn xi(b: &[u32], eps: &Rat) -> Result<ParamExpr> {
    check_branchings(b)?;
    check_eps(eps)?;
    Ok(xi_of(b, &lit(eps)))
}

/// `ξ_1 = ε` and `ξ_{k+1} = ξ(b | ξ_k)`.
pub fn xi_chain(b: &[u32], eps: &Rat, k: usize) -> Result<ParamExpr> {
    check_branchings(b)?;
    check_eps(eps)?;
    if k == 0 {
        return Err(Error::pre("the ξ chain starts at index 1"));
    }
    let mut e = lit(eps);
    for _ in 1..k {
        e = ParamExpr::let_in("ξ", e, xi_of(b, &ParamExpr::var("ξ")));
    }
    Ok(e)
}

/// `c(b | n, ε) = ξ_{d(2n−1)}`.
pub fn c_constant(b: &[u32], n: usize, eps: &Rat) -> Result<ParamExpr> {
    if n == 0 {
        return Err(Error::pre("n must be at least 1"));
    }
    xi_chain(b, eps, b.len() * (2 * n - 1))
}

/// The base of the color count in `f2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ColorBase {
    /// The branching number of the extra tree.
    #[default]
    Extra,
    Fixed(u32),
}

/// Parameters of the strong-correlation bound for `(b_1, …, b_d, b_extra)`.
///
/// `f1`, `f2` and `f` are expressions in the variable `"n"`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrongCorrelationParams {
    pub k: ParamExpr,
    pub r: ParamExpr,
    pub q: ParamExpr,
    pub theta: ParamExpr,
    pub lambda: ParamExpr,
    pub f1: ParamExpr,
    pub f2: ParamExpr,
    pub f: ParamExpr,
    pub k_prime: ParamExpr,
    pub str_cor: ParamExpr,
}

/// `r = (ε / (48 b_extra (∏ b_i)^K))^{2^{3K−1}}` for a known `K`.
pub fn default_r(b: &[u32], b_extra: u32, eps: &Rat, k: u64) -> Result<Rat> {
    check_branchings(b)?;
    check_eps(eps)?;
    if k == 0 {
        return Err(Error::pre("K must be at least 1"));
    }
    let base = eps / Rat::from_integer(BigInt::from(48 * b_extra as i64) * BigInt::from(product(b)).pow(k as u32));
    Ok(pow(&base, 1u64 << (3 * k - 1)))
}

pub fn strong_correlation_params(
    b: &[u32],
    b_extra: u32,
    eps: &Rat,
    color_base: ColorBase,
) -> Result<StrongCorrelationParams> {
    check_branchings(b)?;
    check_branchings(&[b_extra])?;
    check_eps(eps)?;
    let e = lit(eps);
    let be = int(b_extra as i64);
    let p = int(product(b));
    let k = ParamExpr::udhl(plain_runs(b), int(2), e.clone() / (int(4) * be.clone()));
    let r = (e.clone() / (int(48) * be.clone() * p.clone().pow(k.clone())))
        .pow(int(2).pow(int(3) * k.clone() - int(1)));
    let q = ParamExpr::QTerm { b: b.to_vec(), m: Box::new(k.clone() - int(1)) };
    let lambda = e / (int(24) * be.clone() * q.clone());
    let theta = lambda.clone().pow(int(3) * k.clone() - int(2));
    let n = ParamExpr::var("n");
    let r3 = r.clone().powi(3);
    let f1_runs = b
        .iter()
        .map(|&x| BranchRun { branching: x, times: int(x as i64).pow(k.clone()) })
        .collect();
    let f1 = ParamExpr::if_zero(
        n.clone(),
        int(0),
        (int(1) / r3.clone()).ceil() * ParamExpr::udhl(f1_runs, n.clone(), r3),
    );
    let colors = match color_base {
        ColorBase::Extra => be,
        ColorBase::Fixed(c) => int(c as i64),
    };
    let f2_runs = b
        .iter()
        .map(|&x| BranchRun { branching: x, times: int(x as i64) })
        .collect();
    let f2 = ParamExpr::if_zero(
        n.clone(),
        int(0),
        ParamExpr::mil(f2_runs, n, int(1), colors.pow(p.pow(k.clone() - int(1)))),
    );
    let f = ParamExpr::let_in("n", f2.clone(), f1.clone()) + int(1);
    let k_prime = k.clone() * (int(2) / r.clone().powi(2)).ceil();
    let str_cor = ParamExpr::iterate("n", f.clone(), k_prime.clone(), int(2));
    Ok(StrongCorrelationParams { k, r, q, theta, lambda, f1, f2, f, k_prime, str_cor })
}

/// `θ_n = θ λ^{−3(n−1)}`.
pub fn theta_n(params: &StrongCorrelationParams, n: usize) -> Result<ParamExpr> {
    if n == 0 {
        return Err(Error::pre("θ_n is indexed from 1"));
    }
    Ok(params.theta.clone() / params.lambda.clone().powi(3 * (n as i64 - 1)))
}

/// Applies a one-argument expression in `"n"` to `arg`.
pub fn apply(f: &ParamExpr, arg: ParamExpr) -> ParamExpr {
    ParamExpr::let_in("n", arg, f.clone())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gammas {
    pub g0: IntervalValue,
    pub g1: IntervalValue,
    pub g2: IntervalValue,
}

/// `γ0 = √(β + ρ² − α)`, `γ1 = √(γ0 + γ0²)`, `γ2 = √(γ1 + γ1²)` at `bits`.
pub fn gammas_at(alpha: &Rat, beta: &Rat, rho: &Rat, bits: u32) -> Result<Gammas> {
    if !(alpha.is_positive() && alpha <= beta && *beta <= Rat::one()) {
        return Err(Error::pre(format!("need 0 < α ≤ β ≤ 1, got α={alpha}, β={beta}")));
    }
    if !(rho.is_positive() && *rho <= Rat::one()) {
        return Err(Error::pre(format!("need 0 < ρ ≤ 1, got {rho}")));
    }
    let pt = |x: Rat| IntervalValue::point(x, bits);
    let g0 = pt(beta + rho * rho - alpha).sqrt()?;
    let g1 = g0.add(&g0.mul(&g0)).sqrt()?;
    let g2 = g1.add(&g1.mul(&g1)).sqrt()?;
    Ok(Gammas { g0, g1, g2 })
}

pub fn gammas(alpha: &Rat, beta: &Rat, rho: &Rat) -> Result<Gammas> {
    gammas_at(alpha, beta, rho, DEFAULT_BITS)
}

impl Gammas {
    /// `β+ρ² = α+γ0² = (α−γ0)+γ1² = (α−γ0−γ1)+γ2²`, checked by overlapping enclosures.
    pub fn identities_hold(&self, alpha: &Rat, beta: &Rat, rho: &Rat) -> bool {
        let bits = self.g0.bits();
        let a = IntervalValue::point(alpha.clone(), bits);
        let lhs = IntervalValue::point(beta + rho * rho, bits);
        let t0 = a.add(&self.g0.mul(&self.g0));
        let a1 = a.sub(&self.g0);
        let t1 = a1.add(&self.g1.mul(&self.g1));
        let t2 = a1.sub(&self.g1).add(&self.g2.mul(&self.g2));
        [t0, t1, t2].iter().all(|t| t.overlaps(&lhs))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequences {
    /// `δ_0, …, δ_{3K−1}`.
    pub deltas: Vec<IntervalValue>,
    /// `ε_0, …, ε_K`.
    pub epss: Vec<IntervalValue>,
    pub properties: Vec<PropertyCheck>,
}

impl Sequences {
    pub fn all_hold(&self) -> bool {
        self.properties.iter().all(|p| p.holds)
    }
}

fn decide(x: Option<bool>, bits: u32, what: &str) -> Result<bool> {
    x.ok_or_else(|| Error::Undecidable { bits, what: what.into() })
}

fn sequences_at(r: &Rat, eps: &Rat, k: usize, b: &[u32], b_extra: u32, bits: u32) -> Result<Sequences> {
    let pt = |x: Rat| IntervalValue::point(x, bits);
    let mut deltas = vec![pt(r.clone())];
    for n in 0..3 * k - 1 {
        let d = &deltas[n];
        deltas.push(d.add(&d.mul(d)).sqrt()?);
    }
    let mut epss = vec![pt(eps.clone())];
    for n in 0..k {
        let s = deltas[3 * n].add(&deltas[3 * n + 1]).add(&deltas[3 * n + 2]);
        epss.push(epss[n].sub(&s));
    }
    let two = pt(Rat::from_integer(2.into()));
    let r_iv = pt(r.clone());
    let mut props = Vec::new();

    let mut p1 = true;
    let mut root = r_iv.clone();
    for (n, d) in deltas.iter().enumerate() {
        if n > 0 {
            root = root.sqrt()?;
        }
        p1 &= decide(d.le(&two.mul(&root)), bits, "δ_n ≤ 2 r^(2^-n)")?;
    }
    props.push(PropertyCheck { name: "P1", holds: p1 });

    let r2 = r_iv.mul(&r_iv);
    let mut p2 = true;
    let mut partial = pt(Rat::zero());
    for n in 0..3 * k - 1 {
        partial = partial.add(&deltas[n]);
        p2 &= partial.add(&r2).overlaps(&deltas[n + 1].mul(&deltas[n + 1]));
    }
    props.push(PropertyCheck { name: "P2", holds: p2 });

    let total = deltas.iter().fold(pt(Rat::zero()), |acc, d| acc.add(d));
    let half_eps = pt(eps / Rat::from_integer(2.into()));
    props.push(PropertyCheck { name: "P3", holds: decide(total.le(&half_eps), bits, "Σ δ_n ≤ ε/2")? });

    let mut p4 = true;
    let mut p5 = true;
    let eps_iv = pt(eps.clone());
    for (n, e) in epss.iter().enumerate() {
        let direct = deltas[..3 * n].iter().fold(eps_iv.clone(), |acc, d| acc.sub(d));
        p4 &= direct.overlaps(e);
        p5 &= decide(half_eps.le(e), bits, "ε/2 ≤ ε_n")? && decide(e.le(&eps_iv), bits, "ε_n ≤ ε")?;
    }
    props.push(PropertyCheck { name: "P4", holds: p4 });
    props.push(PropertyCheck { name: "P5", holds: p5 });

    let p = Rat::from_integer(product(b).into());
    let be = Rat::from_integer((b_extra as i64).into());
    let cap = Rat::from_integer(2.into())
        * pow(&(eps / (Rat::from_integer(48.into()) * &be * pow(&p, k as u64))), 4);
    let cap_iv = pt(cap);
    let top = &deltas[3 * k - 3];
    let mut p6 = decide(top.le(&cap_iv), bits, "δ_{3K−3} ≤ cap")?;
    for n in 0..k {
        if n + 1 < k {
            p6 &= decide(deltas[3 * n].le(top), bits, "δ_{3n} ≤ δ_{3K−3}")?;
        }
        let denom = pt(Rat::from_integer(12.into()) * &be * pow(&p, n as u64 + 1));
        let bound = epss[n].div(&denom)?.pow(4);
        p6 &= decide(cap_iv.le(&bound), bits, "cap ≤ (ε_n / (12 b_extra P^{n+1}))^4")?;
    }
    props.push(PropertyCheck { name: "P6", holds: p6 });
    Ok(Sequences { deltas, epss, properties: props })
}

/// The delta and epsilon sequences with the six sequence properties evaluated.
pub fn sequence_report(r: &Rat, eps: &Rat, k: usize, b: &[u32], b_extra: u32) -> Result<Sequences> {
    check_branchings(b)?;
    check_branchings(&[b_extra])?;
    check_eps(eps)?;
    if !r.is_positive() {
        return Err(Error::pre("need r > 0"));
    }
    if k == 0 {
        return Err(Error::pre("need K ≥ 1"));
    }
    with_auto_precision(DEFAULT_BITS, |bits| sequences_at(r, eps, k, b, b_extra, bits))
}

/// As [`sequence_report`], failing when any property does not hold.
pub fn delta_eps_sequences(r: &Rat, eps: &Rat, k: usize, b: &[u32], b_extra: u32) -> Result<Sequences> {
    let s = sequence_report(r, eps, k, b, b_extra)?;
    let failed: Vec<&str> = s.properties.iter().filter(|p| !p.holds).map(|p| p.name).collect();
    if !failed.is_empty() {
        return Err(Error::pre(format!(
            "precondition of the density-increment step not met: {} fail",
            failed.join(", ")
        )));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn exact(e: &ParamExpr, p: &dyn BoundProvider) -> Rat {
        match evaluate(e, p, Mode::Exact).unwrap() {
            Value::Exact(x) => x,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cor_bound_with_a_table_entry() {
        let json = r#"{"udhl":[{"b":[2],"k":2,"eps":"1/4","value":5,"provenance":"assumed"}]}"#;
        let t = TableProvider::from_json(json).unwrap();
        assert_eq!(exact(&cor_bound(&[2], &rat(1, 2)).unwrap(), &t), rat(10571, 1));
        assert!(matches!(
            evaluate(&cor_bound(&[2], &rat(1, 4)).unwrap(), &t, Mode::Exact),
            Err(Error::Unresolved(_))
        ));
        assert!(cor_bound(&[2], &rat(3, 2)).is_err());
    }

    #[test]
    fn xi_chain_values() {
        let stub = StubProvider::new(2, 1);
        assert_eq!(exact(&xi_chain(&[2], &rat(1, 2), 1).unwrap(), &stub), rat(1, 2));
        let q: Rat = (0..=20u32).map(|m| rat((4i64.pow(m + 1) - 2i64.pow(m + 1)) / 2, 1)).sum();
        assert_eq!(exact(&xi_chain(&[2], &rat(1, 2), 2).unwrap(), &stub), rat(1, 64) / q);
        assert_eq!(c_constant(&[2, 3], 2, &rat(1, 2)).unwrap(), xi_chain(&[2, 3], &rat(1, 2), 6).unwrap());
    }

    #[test]
    fn strong_correlation_values() {
        let stub = StubProvider::new(2, 3);
        let p = strong_correlation_params(&[2], 2, &rat(1, 2), ColorBase::Extra).unwrap();
        assert_eq!(exact(&p.k, &stub), rat(2, 1));
        assert_eq!(exact(&p.q, &stub), rat(6, 1));
        assert_eq!(exact(&p.lambda, &stub), rat(1, 576));
        assert_eq!(exact(&p.theta, &stub), pow(&rat(1, 576), 4));
        assert_eq!(exact(&p.r, &stub), pow(&rat(1, 768), 32));
        assert_eq!(exact(&theta_n(&p, 1).unwrap(), &stub), exact(&p.theta, &stub));
        assert_eq!(exact(&apply(&p.f2, int(0)), &stub), rat(0, 1));
        assert_eq!(exact(&apply(&p.f2, int(5)), &stub), rat(3, 1));
        let v = evaluate(&p.str_cor, &stub, Mode::Log2).unwrap();
        let Value::Log2(m) = v else { panic!() };
        assert!(m.log2().is_finite() && m.log2() > 0.0);
    }

    #[test]
    fn gamma_values() {
        let g = gammas(&rat(1, 2), &rat(1, 2), &rat(1, 3)).unwrap();
        assert_eq!(g.g0.as_point(), Some(&rat(1, 3)));
        let g = gammas(&rat(1, 1), &rat(1, 1), &rat(1, 1)).unwrap();
        assert_eq!(g.g0.as_point(), Some(&rat(1, 1)));
        assert!(g.g1.lo() * g.g1.lo() <= rat(2, 1) && g.g1.hi() * g.g1.hi() >= rat(2, 1));
        assert!(g.g2.mul(&g.g2).overlaps(&g.g1.add(&g.g1.mul(&g.g1))));
        assert!(g.identities_hold(&rat(1, 1), &rat(1, 1), &rat(1, 1)));
        assert!(gammas(&rat(1, 2), &rat(1, 4), &rat(1, 2)).is_err());
    }

    #[test]
    fn sequences_for_the_default_r() {
        for k in 1..=2u64 {
            let r = default_r(&[2], 2, &rat(1, 2), k).unwrap();
            let s = delta_eps_sequences(&r, &rat(1, 2), k as usize, &[2], 2).unwrap();
            assert_eq!(s.deltas.len(), 3 * k as usize);
            assert_eq!(s.epss.len(), k as usize + 1);
            assert_eq!(s.deltas[0].as_point(), Some(&r));
        }
        assert!(delta_eps_sequences(&rat(1, 4), &rat(1, 2), 2, &[2], 2).is_err());
    }
}
