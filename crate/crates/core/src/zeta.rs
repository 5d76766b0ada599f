//! Zeta-regularized traces `Tr(A D^{-z})`, the Wodzicki residue and the Radul cocycle.

use serde::Serialize;

use crate::constants::EULER_GAMMA;
use crate::error::{Error, Result};
use crate::symbol::{log_commutator, ExactEval, ExactOp, PolyhomSymbol};
use crate::trigpoly::{cr, TrigPoly, C64};

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Ratio(i128, i128);

impl Ratio {
    fn new(n: i128, d: i128) -> Ratio {
        let g = gcd(n, d).max(1);
        let s = if d < 0 { -1 } else { 1 };
        Ratio(s * n / g, s * d / g)
    }
    fn add(self, o: Ratio) -> Ratio {
        Ratio::new(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
    }
    fn mul(self, o: Ratio) -> Ratio {
        Ratio::new(self.0 * o.0, self.1 * o.1)
    }
}

/// Bernoulli numbers `B_0..=B_n` (convention `B_1 = −1/2`) in exact rational arithmetic.
pub fn bernoulli_exact(n: usize) -> Vec<(i128, i128)> {
    let mut b = vec![Ratio(1, 1)];
    for m in 1..=n {
        let mut acc = Ratio(0, 1);
        let mut binom: i128 = 1;
        for (k, bk) in b.iter().enumerate().take(m) {
            acc = acc.add(bk.mul(Ratio(binom, 1)));
            binom = binom * (m as i128 + 1 - k as i128) / (k as i128 + 1);
        }
        b.push(acc.mul(Ratio::new(-1, m as i128 + 1)));
    }
    b.into_iter().map(|r| (r.0, r.1)).collect()
}

pub fn bernoulli(n: usize) -> f64 {
    let (p, q) = bernoulli_exact(n)[n];
    p as f64 / q as f64
}

/// `ζ(s)` for real `s > 1`: partial sums with the leading tail, then Richardson extrapolation.
pub fn zeta_positive(s: f64) -> f64 {
    assert!(s > 1.0);
    let levels = 8;
    let base = 16usize;
    let mut t: Vec<f64> = Vec::with_capacity(levels);
    let mut partial = 0.0;
    let mut upto = 0usize;
    for l in 0..levels {
        let n = base << l;
        for m in (upto + 1..=n).rev() {
            partial += (m as f64).powf(-s);
        }
        upto = n;
        let nn = n as f64;
        t.push(partial + nn.powf(1.0 - s) / (s - 1.0) - 0.5 * nn.powf(-s));
    }
    let powers: Vec<f64> = (0..levels).map(|i| s + 1.0 + i as f64).collect();
    let mut table = t;
    for p in powers.iter().take(levels - 1) {
        let f = 2f64.powf(*p);
        let next: Vec<f64> = table.windows(2).map(|w| (f * w[1] - w[0]) / (f - 1.0)).collect();
        table = next;
    }
    *table.last().unwrap()
}

/// Euler–Maclaurin continuation of `ζ(s)` for real `s ≠ 1`.
pub fn zeta_euler_maclaurin(s: f64) -> f64 {
    assert!(s != 1.0);
    let n = 30usize;
    let nn = n as f64;
    let mut acc: f64 = (1..n).map(|m| (m as f64).powf(-s)).sum();
    acc += nn.powf(1.0 - s) / (s - 1.0) + 0.5 * nn.powf(-s);
    let b = bernoulli_exact(24);
    let mut rising = s;
    let mut fact = 2.0;
    for k in 1..=12usize {
        let b2k = b[2 * k].0 as f64 / b[2 * k].1 as f64;
        acc += b2k / fact * rising * nn.powf(-s - 2.0 * k as f64 + 1.0);
        rising *= (s + 2.0 * k as f64 - 1.0) * (s + 2.0 * k as f64);
        fact *= (2.0 * k as f64 + 1.0) * (2.0 * k as f64 + 2.0);
    }
    acc
}

/// Finite part of `ζ` at an integer: Bernoulli values for `s ≤ 0`, `γ` at the pole, series for `s ≥ 2`.
pub fn zeta_fp(s: i32) -> f64 {
    match s {
        1 => EULER_GAMMA,
        0 => -0.5,
        s if s < 0 => {
            let m = (-s) as usize;
            -bernoulli(m + 1) / (m as f64 + 1.0)
        }
        s => zeta_positive(s as f64),
    }
}

fn harmonic(n: i64, s: i32) -> f64 {
    (1..=n).rev().map(|m| (m as f64).powi(-s)).sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeTerm {
    pub degree: i32,
    /// Branch-summed, traced `x`-average of the component, as a base polynomial.
    pub coefficient: TrigPoly,
    pub zeta_value: f64,
    pub contribution: TrigPoly,
}

#[derive(Clone, Debug, Serialize)]
pub struct ZetaResult {
    pub finite_part: TrigPoly,
    pub residue: TrigPoly,
    /// Contributions of homogeneous degrees `≤ −2` (absolutely convergent).
    pub convergent_tail: TrigPoly,
    /// Exact mode sum over `|n| ≤ cutoff`.
    pub exact_modes: TrigPoly,
    pub cutoff: i64,
    /// Bound on the omitted untracked terms (zero for complete expansions).
    pub tail_bound: f64,
    pub breakdown: Vec<DegreeTerm>,
}

impl ZetaResult {
    pub fn finite_scalar(&self) -> C64 {
        self.finite_part.mean_scalar()
    }

    pub fn residue_scalar(&self) -> C64 {
        self.residue.mean_scalar()
    }
}

fn traced_average(p: &TrigPoly) -> TrigPoly {
    p.last_average().trace()
}

/// `(1/2π)∮ tr(c⁺ + c⁻) dx` of the homogeneous degree `−1` component.
pub fn wodzicki_residue(a: &PolyhomSymbol) -> Result<TrigPoly> {
    if let Some(w) = a.watermark() {
        if w > -2 {
            return Err(Error::UntrackedPole(w));
        }
    }
    let c = a.comp_at_degree(-1).expect("tracked by the watermark check");
    Ok(traced_average(&c.plus.add(&c.minus)))
}

pub const DEFAULT_TREE_CUTOFF: i64 = 256;

/// `Pf_{z=0}` and `Res_{z=0}` of `Σ_n tr ⟨e_n, Op(a) e_n⟩ max(|n|,1)^{−z}`.
pub fn zeta_finite_part(a: &PolyhomSymbol) -> Result<ZetaResult> {
    zeta_finite_part_with(a, DEFAULT_TREE_CUTOFF)
}

pub fn zeta_finite_part_with(a: &PolyhomSymbol, tree_cutoff: i64) -> Result<ZetaResult> {
    let op = a.exact().ok_or(Error::NotExact)?;
    let (order, comps, cutoff, tail_bound) = match op.as_ref() {
        ExactOp::Leaf(l) => (l.order, l.comps.clone(), l.radius(), 0.0),
        _ => {
            let w = a.watermark_floor();
            if w > -2 {
                return Err(Error::UntrackedPole(w));
            }
            let bound = if a.is_complete() {
                0.0
            } else {
                let scale = a.max_abs().max(1.0);
                2.0 * scale * (tree_cutoff as f64).powi(w + 1) / (-(w + 1)) as f64
            };
            (a.order(), a.comps().to_vec(), tree_cutoff, bound)
        }
    };
    let base = a.rank() - 1;
    let ev = ExactEval::new();
    let mut exact_modes = TrigPoly::zero(base, 1);
    for n in -cutoff..=cutoff {
        exact_modes = exact_modes.add(&traced_average(&ev.value(op, n)));
    }
    let mut finite = exact_modes.clone();
    let mut residue = TrigPoly::zero(base, 1);
    let mut tail = TrigPoly::zero(base, 1);
    let mut breakdown = vec![];
    for (j, c) in comps.iter().enumerate() {
        let coef = traced_average(&c.plus.add(&c.minus));
        let degree = order - j as i32;
        if coef.is_zero() {
            continue;
        }
        let s = -degree;
        let z = zeta_fp(s);
        let contribution = coef.scale(cr(z - harmonic(cutoff, s)));
        if s == 1 {
            residue = residue.add(&coef);
        }
        if s >= 2 {
            tail = tail.add(&contribution);
        }
        finite = finite.add(&contribution);
        breakdown.push(DegreeTerm { degree, coefficient: coef, zeta_value: z, contribution });
    }
    Ok(ZetaResult {
        finite_part: finite,
        residue,
        convergent_tail: tail,
        exact_modes,
        cutoff,
        tail_bound,
        breakdown,
    })
}

/// `Res(p ∘ [ln D, q])`, bilinear in `(p, q)`.
pub fn radul_pairing(p: &PolyhomSymbol, q: &PolyhomSymbol, j: usize) -> Result<C64> {
    let lq = log_commutator(q, j.max(1))?;
    let r = PolyhomSymbol::compose_auto(p, &lq, j)?;
    Ok(wodzicki_residue(&r)?.mean_scalar())
}

/// Radul pairing with `ln D` replaced by `ln D + s` for a classical order-0 symbol `s`.
pub fn radul_pairing_perturbed(p: &PolyhomSymbol, q: &PolyhomSymbol, s: &PolyhomSymbol, j: usize) -> Result<C64> {
    let base = radul_pairing(p, q, j)?;
    let sq = PolyhomSymbol::commutator(s, q, j)?;
    let extra = PolyhomSymbol::compose_auto(p, &sq, j)?;
    Ok(base + wodzicki_residue(&extra)?.mean_scalar())
}

/// `(Pf Tr([a,b]D^{−z}), Res Tr(a[ln D,b]D^{−z}))`.
pub fn trace_defect_identity(a: &PolyhomSymbol, b: &PolyhomSymbol, j: usize) -> Result<(C64, C64)> {
    let comm = PolyhomSymbol::commutator(a, b, j)?;
    let lhs = zeta_finite_part(&comm)?.finite_scalar();
    let lb = log_commutator(b, j)?;
    let r = PolyhomSymbol::compose_auto(a, &lb, j)?;
    let rhs = wodzicki_residue(&r)?.mean_scalar();
    Ok((lhs, rhs))
}
