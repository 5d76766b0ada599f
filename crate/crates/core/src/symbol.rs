//! Classical two-branch symbols on the circle fiber and their calculus.
//!
//! Quantization is Kohn–Nirenberg on the Fourier side:
//! `Op(a) u(x) = Σ_n a(x, n) û(n) e^{inx}`. The last torus variable of every
//! coefficient polynomial is the fiber variable `x`; any leading variables are
//! base coordinates.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::constants::{ELLIPTIC_GRID, ELLIPTIC_SMIN, FFT_PRUNE_TOL};
use crate::error::{Error, Result};
use crate::trigpoly::{cr, TrigPoly, C64, I};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn of(n: i64) -> Branch {
        if n > 0 {
            Branch::Plus
        } else {
            Branch::Minus
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// The pair `(c⁺_j, c⁻_j)` of a homogeneous component.
#[derive(Clone, Debug, PartialEq)]
pub struct Branches {
    pub plus: TrigPoly,
    pub minus: TrigPoly,
}

impl Branches {
    pub fn zero(rank: usize, k: usize) -> Self {
        Branches { plus: TrigPoly::zero(rank, k), minus: TrigPoly::zero(rank, k) }
    }

    pub fn both(p: TrigPoly) -> Self {
        Branches { plus: p.clone(), minus: p }
    }

    pub fn get(&self, b: Branch) -> &TrigPoly {
        match b {
            Branch::Plus => &self.plus,
            Branch::Minus => &self.minus,
        }
    }

    pub fn map(&self, f: impl Fn(&TrigPoly, Branch) -> TrigPoly) -> Branches {
        Branches { plus: f(&self.plus, Branch::Plus), minus: f(&self.minus, Branch::Minus) }
    }

    pub fn add(&self, o: &Branches) -> Branches {
        Branches { plus: self.plus.add(&o.plus), minus: self.minus.add(&o.minus) }
    }

    pub fn axpy(&mut self, a: C64, o: &Branches) {
        self.plus.axpy(a, &o.plus);
        self.minus.axpy(a, &o.minus);
    }

    pub fn scale(&self, z: C64) -> Branches {
        Branches { plus: self.plus.scale(z), minus: self.minus.scale(z) }
    }

    pub fn is_zero(&self) -> bool {
        self.plus.is_zero() && self.minus.is_zero()
    }

    pub fn max_abs(&self) -> f64 {
        self.plus.max_abs().max(self.minus.max_abs())
    }
}

/// A complete symbol: the value `a(·, n)` is known for every mode `n`.
#[derive(Clone, Debug)]
pub struct Leaf {
    pub order: i32,
    pub comps: Vec<Branches>,
    pub zero_mode: TrigPoly,
    pub corrections: BTreeMap<i64, TrigPoly>,
}

impl Leaf {
    /// Largest `|n|` at which the homogeneous formula may fail.
    pub fn radius(&self) -> i64 {
        self.corrections.keys().map(|n| n.abs()).max().unwrap_or(0)
    }

    pub fn homogeneous_value(&self, n: i64) -> TrigPoly {
        let b = Branch::of(n);
        let an = (n.abs()) as f64;
        let mut acc = TrigPoly::zero(self.zero_mode.rank(), self.zero_mode.matrix_size());
        for (j, c) in self.comps.iter().enumerate() {
            let deg = self.order - j as i32;
            acc.axpy(cr(an.powi(deg)), c.get(b));
        }
        acc
    }

    pub fn value(&self, n: i64) -> TrigPoly {
        if n == 0 {
            return self.zero_mode.clone();
        }
        let mut v = self.homogeneous_value(n);
        if let Some(corr) = self.corrections.get(&n) {
            v = v.add(corr);
        }
        v
    }
}

/// The genuine operator behind an exactly specified symbol.
#[derive(Debug)]
pub enum ExactOp {
    Leaf(Leaf),
    Lin(Vec<(C64, Arc<ExactOp>)>),
    Compose(Arc<ExactOp>, Arc<ExactOp>),
    /// `[ln D, A]`.
    LogComm(Arc<ExactOp>),
    /// `∂A/∂b_var`.
    Deriv(usize, Arc<ExactOp>),
    /// Restriction to a base point (evaluates the leading variables).
    AtBase(Vec<f64>, Arc<ExactOp>),
}

pub fn ln_d(n: i64) -> f64 {
    (n.abs().max(1) as f64).ln()
}

/// Memoizing evaluator of `a(·, n)` for expression trees.
pub struct ExactEval {
    cache: RefCell<HashMap<(usize, i64), TrigPoly>>,
}

impl Default for ExactEval {
    fn default() -> Self {
        Self::new()
    }
}

impl ExactEval {
    pub fn new() -> Self {
        ExactEval { cache: RefCell::new(HashMap::new()) }
    }

    pub fn value(&self, op: &Arc<ExactOp>, n: i64) -> TrigPoly {
        let key = (Arc::as_ptr(op) as usize, n);
        if let Some(v) = self.cache.borrow().get(&key) {
            return v.clone();
        }
        let v = match op.as_ref() {
            ExactOp::Leaf(l) => l.value(n),
            ExactOp::Lin(terms) => {
                let mut it = terms.iter();
                let (c0, a0) = it.next().expect("empty linear combination");
                let mut acc = self.value(a0, n).scale(*c0);
                for (z, a) in it {
                    acc.axpy(*z, &self.value(a, n));
                }
                acc
            }
            ExactOp::Compose(a, b) => {
                let vb = self.value(b, n);
                let mut acc = TrigPoly::zero(vb.rank(), vb.matrix_size());
                for (m, coef) in vb.by_last() {
                    let va = self.value(a, n + m as i64);
                    acc = acc.add(&va.mul(&coef.append_var(m)));
                }
                acc
            }
            ExactOp::LogComm(a) => {
                let va = self.value(a, n);
                let mut acc = TrigPoly::zero(va.rank(), va.matrix_size());
                for (m, coef) in va.by_last() {
                    let w = ln_d(n + m as i64) - ln_d(n);
                    if w != 0.0 {
                        acc.axpy(cr(w), &coef.append_var(m));
                    }
                }
                acc
            }
            ExactOp::Deriv(var, a) => self.value(a, n).deriv(*var),
            ExactOp::AtBase(pt, a) => self.value(a, n).eval_prefix(pt),
        };
        self.cache.borrow_mut().insert(key, v.clone());
        v
    }
}

/// A matrix-valued classical symbol `Σ_j c^±_j(t) |ξ|^{d-j}` with an order watermark.
///
/// `watermark = None` means the expansion is complete (no untracked terms);
/// `Some(w)` means terms of order `≤ w` are untracked and `comps.len() = d - w`.
#[derive(Clone, Debug)]
pub struct PolyhomSymbol {
    order: i32,
    comps: Vec<Branches>,
    watermark: Option<i32>,
    rank: usize,
    k: usize,
    exact: Option<Arc<ExactOp>>,
}

fn falling(m: i32, k: u32) -> f64 {
    (0..k as i32).map(|i| (m - i) as f64).product()
}

impl PolyhomSymbol {
    /// Builds a symbol from components; no operator data is attached.
    pub fn new(order: i32, comps: Vec<Branches>, watermark: Option<i32>) -> Self {
        assert!(!comps.is_empty(), "at least one component is required");
        let rank = comps[0].plus.rank();
        let k = comps[0].plus.matrix_size();
        assert!(rank >= 1, "coefficients need the fiber variable");
        let mut s = PolyhomSymbol { order, comps, watermark, rank, k, exact: None };
        s.normalize_len();
        s
    }

    fn normalize_len(&mut self) {
        if let Some(w) = self.watermark {
            let len = (self.order - w).max(0) as usize;
            self.comps.resize(len, Branches::zero(self.rank, self.k));
        } else {
            while self.comps.len() > 1 && self.comps.last().is_some_and(|c| c.is_zero()) {
                self.comps.pop();
            }
        }
    }

    /// A single homogeneous term `plus` on ξ>0 and `minus` on ξ<0, complete.
    pub fn homogeneous(order: i32, plus: TrigPoly, minus: TrigPoly) -> Self {
        PolyhomSymbol::new(order, vec![Branches { plus, minus }], None)
    }

    pub fn zero(rank: usize, k: usize, order: i32) -> Self {
        let z = TrigPoly::zero(rank, k);
        PolyhomSymbol::homogeneous(order, z.clone(), z.clone()).with_zero_mode(z)
    }

    pub fn identity(rank: usize, k: usize) -> Self {
        PolyhomSymbol::multiplication(TrigPoly::identity(rank, k))
    }

    /// The multiplication operator by `f(t)`.
    pub fn multiplication(f: TrigPoly) -> Self {
        PolyhomSymbol::homogeneous(0, f.clone(), f.clone()).with_zero_mode(f)
    }

    /// The reference operator `D e_n = max(|n|,1) e_n`.
    pub fn dspec(rank: usize, k: usize) -> Self {
        let one = TrigPoly::identity(rank, k);
        PolyhomSymbol::homogeneous(1, one.clone(), one.clone()).with_zero_mode(one)
    }

    /// `D^p`.
    pub fn dspec_pow(rank: usize, k: usize, p: i32) -> Self {
        let one = TrigPoly::identity(rank, k);
        PolyhomSymbol::homogeneous(p, one.clone(), one.clone()).with_zero_mode(one)
    }

    /// The vertical vector field `f ∂_x`, with symbol `f · iξ`.
    pub fn vector_field(f: TrigPoly) -> Self {
        let z = TrigPoly::zero(f.rank(), f.matrix_size());
        PolyhomSymbol::homogeneous(1, f.scale(I), f.scale(-I)).with_zero_mode(z)
    }

    /// Attaches operator data (zero mode, empty correction table) to a complete expansion.
    pub fn with_zero_mode(mut self, z: TrigPoly) -> Self {
        assert!(self.watermark.is_none(), "operator data needs a complete expansion");
        assert_eq!(z.rank(), self.rank);
        assert_eq!(z.matrix_size(), self.k);
        let corrections = match self.exact.as_deref() {
            Some(ExactOp::Leaf(l)) => l.corrections.clone(),
            _ => BTreeMap::new(),
        };
        self.exact = Some(Arc::new(ExactOp::Leaf(Leaf {
            order: self.order,
            comps: self.comps.clone(),
            zero_mode: z,
            corrections,
        })));
        self
    }

    /// Adds an exact low-mode correction `a(·,n) - Σ_j c_j |n|^{d-j}`.
    pub fn with_correction(mut self, n: i64, corr: TrigPoly) -> Self {
        assert!(n != 0, "mode 0 is set through the zero mode");
        let mut leaf = match self.exact.as_deref() {
            Some(ExactOp::Leaf(l)) => l.clone(),
            _ => panic!("corrections need a zero mode first"),
        };
        let entry = leaf.corrections.entry(n).or_insert_with(|| TrigPoly::zero(self.rank, self.k));
        *entry = entry.add(&corr);
        self.exact = Some(Arc::new(ExactOp::Leaf(leaf)));
        self
    }

    /// Replaces operator data by an explicit leaf built from this symbol's own components.
    pub fn with_leaf_operator(mut self, zero_mode: TrigPoly) -> Self {
        self.exact = Some(Arc::new(ExactOp::Leaf(Leaf {
            order: self.order,
            comps: self.comps.clone(),
            zero_mode,
            corrections: BTreeMap::new(),
        })));
        self
    }

    pub fn without_operator(mut self) -> Self {
        self.exact = None;
        self
    }

    pub fn order(&self) -> i32 {
        self.order
    }

    pub fn watermark(&self) -> Option<i32> {
        self.watermark
    }

    /// The watermark as an integer, with complete expansions reported at `i32::MIN`.
    pub fn watermark_floor(&self) -> i32 {
        self.watermark.unwrap_or(i32::MIN)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn base_rank(&self) -> usize {
        self.rank - 1
    }

    pub fn matrix_size(&self) -> usize {
        self.k
    }

    pub fn comps(&self) -> &[Branches] {
        &self.comps
    }

    pub fn is_complete(&self) -> bool {
        self.watermark.is_none()
    }

    pub fn exact(&self) -> Option<&Arc<ExactOp>> {
        self.exact.as_ref()
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn leaf(&self) -> Option<&Leaf> {
        match self.exact.as_deref() {
            Some(ExactOp::Leaf(l)) => Some(l),
            _ => None,
        }
    }

    pub fn zero_mode(&self) -> Option<&TrigPoly> {
        self.leaf().map(|l| &l.zero_mode)
    }

    pub fn corrections(&self) -> Option<&BTreeMap<i64, TrigPoly>> {
        self.leaf().map(|l| &l.corrections)
    }

    /// Component of homogeneous degree `deg`, if tracked.
    pub fn comp_at_degree(&self, deg: i32) -> Option<Branches> {
        let j = self.order - deg;
        if j < 0 {
            return Some(Branches::zero(self.rank, self.k));
        }
        if let Some(w) = self.watermark {
            if deg <= w {
                return None;
            }
        }
        Some(self.comps.get(j as usize).cloned().unwrap_or_else(|| Branches::zero(self.rank, self.k)))
    }

    pub fn leading(&self) -> &Branches {
        &self.comps[0]
    }

    /// True when every tracked component has non-negative degree, so `∂_ξ^k` terminates.
    pub fn is_polynomial(&self) -> bool {
        self.comps.iter().enumerate().all(|(j, c)| self.order - j as i32 >= 0 || c.is_zero())
    }

    /// Largest fiber frequency appearing in the tracked components.
    pub fn max_fiber_freq(&self) -> i32 {
        let v = self.rank - 1;
        self.comps.iter().map(|c| c.plus.max_freq(v).max(c.minus.max_freq(v))).max().unwrap_or(0)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    /// True for the exact zero operator: complete, vanishing symbol and no smoothing part.
    pub fn is_null(&self) -> bool {
        self.watermark.is_none()
            && self.comps.iter().all(|c| c.is_zero())
            && match self.leaf() {
                Some(l) => l.zero_mode.is_zero() && l.corrections.values().all(|c| c.is_zero()),
                None => false,
            }
    }

    fn check(&self, o: &PolyhomSymbol) -> Result<()> {
        if self.rank != o.rank {
            return Err(Error::Rank(self.rank, o.rank));
        }
        if self.k != o.k {
            return Err(Error::MatrixSize(self.k, o.k));
        }
        Ok(())
    }

    /// Sum, aligning components by absolute order.
    pub fn add(&self, o: &PolyhomSymbol) -> Result<PolyhomSymbol> {
        self.lin_comb(&[(cr(1.0), self), (cr(1.0), o)])
    }

    pub fn sub(&self, o: &PolyhomSymbol) -> Result<PolyhomSymbol> {
        self.lin_comb(&[(cr(1.0), self), (cr(-1.0), o)])
    }

    /// `Σ z_i a_i` over symbols of a common rank and matrix size.
    pub fn lin_comb(&self, terms: &[(C64, &PolyhomSymbol)]) -> Result<PolyhomSymbol> {
        for (_, t) in terms {
            self.check(t)?;
        }
        let live: Vec<(C64, &PolyhomSymbol)> = terms.iter().filter(|(_, t)| !t.is_null()).cloned().collect();
        let terms: &[(C64, &PolyhomSymbol)] = if live.is_empty() { terms } else { &live };
        let order = terms.iter().map(|(_, t)| t.order).max().unwrap();
        let watermark = terms.iter().filter_map(|(_, t)| t.watermark).max();
        let lowest = terms
            .iter()
            .map(|(_, t)| t.order - t.comps.len() as i32 + 1)
            .min()
            .unwrap();
        let len = match watermark {
            Some(w) => (order - w).max(0) as usize,
            None => (order - lowest + 1) as usize,
        };
        let mut comps = vec![Branches::zero(self.rank, self.k); len.max(1)];
        for (z, t) in terms {
            for (j, c) in t.comps.iter().enumerate() {
                let idx = (order - t.order) as usize + j;
                if idx < comps.len() {
                    comps[idx].axpy(*z, c);
                }
            }
        }
        let mut out = PolyhomSymbol { order, comps, watermark, rank: self.rank, k: self.k, exact: None };
        out.normalize_len();
        if terms.iter().all(|(_, t)| t.exact.is_some()) {
            let leaves: Option<Vec<&Leaf>> = terms.iter().map(|(_, t)| t.leaf()).collect();
            out.exact = Some(match (leaves, out.watermark) {
                (Some(ls), None) => {
                    let mut zero_mode = TrigPoly::zero(self.rank, self.k);
                    let mut corrections: BTreeMap<i64, TrigPoly> = BTreeMap::new();
                    for ((z, _), l) in terms.iter().zip(ls) {
                        zero_mode.axpy(*z, &l.zero_mode);
                        for (n, c) in &l.corrections {
                            corrections
                                .entry(*n)
                                .or_insert_with(|| TrigPoly::zero(self.rank, self.k))
                                .axpy(*z, c);
                        }
                    }
                    Arc::new(ExactOp::Leaf(Leaf { order: out.order, comps: out.comps.clone(), zero_mode, corrections }))
                }
                _ => Arc::new(ExactOp::Lin(terms.iter().map(|(z, t)| (*z, t.exact.clone().unwrap())).collect())),
            });
        }
        Ok(out)
    }

    pub fn scale(&self, z: C64) -> PolyhomSymbol {
        self.lin_comb(&[(z, self)]).expect("self-compatible")
    }

    pub fn neg(&self) -> PolyhomSymbol {
        self.scale(cr(-1.0))
    }

    /// Left multiplication by a function `f(t)`; exact in Kohn–Nirenberg quantization.
    pub fn mul_trig(&self, f: &TrigPoly) -> Result<PolyhomSymbol> {
        if f.rank() != self.rank {
            return Err(Error::Rank(f.rank(), self.rank));
        }
        if f.matrix_size() != self.k {
            return Err(Error::MatrixSize(f.matrix_size(), self.k));
        }
        self.mult_left_exact(f)
    }

    fn mult_left_exact(&self, f: &TrigPoly) -> Result<PolyhomSymbol> {
        let mut out = self.clone();
        out.comps = self.comps.iter().map(|c| c.map(|p, _| f.mul(p))).collect();
        out.exact = self.exact.as_ref().map(|e| match e.as_ref() {
            ExactOp::Leaf(l) => Arc::new(ExactOp::Leaf(Leaf {
                order: l.order,
                comps: l.comps.iter().map(|c| c.map(|p, _| f.mul(p))).collect(),
                zero_mode: f.mul(&l.zero_mode),
                corrections: l.corrections.iter().map(|(n, c)| (*n, f.mul(c))).collect(),
            })),
            _ => Arc::new(ExactOp::Compose(PolyhomSymbol::multiplication(f.clone()).exact.unwrap(), e.clone())),
        });
        Ok(out)
    }

    /// Largest number of components `J_out + 1` that `compose(a, b, ·)` can certify.
    pub fn compose_capacity(a: &PolyhomSymbol, b: &PolyhomSymbol) -> Option<usize> {
        let d = a.order + b.order;
        let wa = a.watermark.map(|w| w + b.order);
        let wb = b.watermark.map(|w| w + a.order);
        match wa.into_iter().chain(wb).max() {
            Some(w) => Some((d - w).max(0) as usize),
            None => None,
        }
    }

    /// Kohn–Nirenberg product `c ∼ Σ_k (1/k!) ∂_ξ^k a · D_x^k b` with `J_out + 1` components.
    ///
    /// When both inputs are complete and either `a` is polynomial in `ξ` or `b`
    /// does not depend on `x`, the series terminates and the result is complete (operator data is materialized).
    pub fn compose(a: &PolyhomSymbol, b: &PolyhomSymbol, j_out: usize) -> Result<PolyhomSymbol> {
        a.check(b)?;
        let d = a.order + b.order;
        if a.is_null() || b.is_null() {
            return Ok(PolyhomSymbol::zero(a.rank, a.k, d));
        }
        let b_flat = b.max_fiber_freq() == 0;
        let terminates = a.is_complete() && b.is_complete() && (a.is_polynomial() || b_flat);
        let cap = PolyhomSymbol::compose_capacity(a, b);
        if !terminates {
            if let Some(cap) = cap {
                if j_out + 1 > cap {
                    return Err(Error::Watermark {
                        requested: j_out,
                        achievable: cap.saturating_sub(1),
                        watermark: d - cap as i32,
                    });
                }
            }
        }
        let xv = a.rank - 1;
        let limit = if terminates { usize::MAX } else { j_out + 1 };
        let mut comps: BTreeMap<usize, Branches> = BTreeMap::new();
        for (j1, ca) in a.comps.iter().enumerate() {
            if ca.is_zero() || j1 >= limit {
                continue;
            }
            let m = a.order - j1 as i32;
            for (j2, cb) in b.comps.iter().enumerate() {
                if cb.is_zero() {
                    continue;
                }
                let mut k = 0u32;
                loop {
                    let j = j1 + j2 + k as usize;
                    if j >= limit {
                        break;
                    }
                    let ff = falling(m, k);
                    if ff == 0.0 || (b_flat && k > 0) {
                        break;
                    }
                    let inv_fact: f64 = (1..=k).map(|i| i as f64).product::<f64>().recip();
                    let w = ff * inv_fact;
                    let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let plus = ca.plus.mul(&cb.plus.dx_power(xv, k));
                    let minus = ca.minus.mul(&cb.minus.dx_power(xv, k));
                    let e = comps.entry(j).or_insert_with(|| Branches::zero(a.rank, a.k));
                    e.plus.axpy(cr(w), &plus);
                    e.minus.axpy(cr(w * sgn), &minus);
                    k += 1;
                    if !terminates && k > 64 {
                        break;
                    }
                }
            }
        }
        let len = if terminates { comps.keys().max().map(|j| j + 1).unwrap_or(1) } else { j_out + 1 };
        let mut v = vec![Branches::zero(a.rank, a.k); len];
        for (j, c) in comps {
            if j < len {
                v[j] = c;
            }
        }
        let watermark = if terminates { None } else { Some(d - j_out as i32 - 1) };
        let mut out = PolyhomSymbol { order: d, comps: v, watermark, rank: a.rank, k: a.k, exact: None };
        out.normalize_len();
        if let (Some(ea), Some(eb)) = (&a.exact, &b.exact) {
            let tree = Arc::new(ExactOp::Compose(ea.clone(), eb.clone()));
            out.exact = Some(if terminates {
                let ra = a.leaf().map(|l| l.radius()).unwrap_or(0);
                let rb = b.leaf().map(|l| l.radius()).unwrap_or(0);
                let radius = rb.max(ra + b.max_fiber_freq() as i64);
                out.materialize(&tree, radius)
            } else {
                tree
            });
        }
        Ok(out)
    }

    /// Composition certifying as many components as the inputs allow (capped at `max_j + 1`).
    pub fn compose_auto(a: &PolyhomSymbol, b: &PolyhomSymbol, max_j: usize) -> Result<PolyhomSymbol> {
        let j = match PolyhomSymbol::compose_capacity(a, b) {
            Some(cap) => cap.saturating_sub(1).min(max_j),
            None => max_j,
        };
        PolyhomSymbol::compose(a, b, j)
    }

    fn materialize(&self, tree: &Arc<ExactOp>, radius: i64) -> Arc<ExactOp> {
        let ev = ExactEval::new();
        let mut leaf = Leaf {
            order: self.order,
            comps: self.comps.clone(),
            zero_mode: ev.value(tree, 0),
            corrections: BTreeMap::new(),
        };
        for n in (-radius..=radius).filter(|n| *n != 0) {
            let diff = ev.value(tree, n).sub(&leaf.homogeneous_value(n));
            let scale = 1.0 + ev.value(tree, n).max_abs();
            let diff = diff.prune(1e-14 * scale);
            if !diff.is_empty() {
                leaf.corrections.insert(n, diff);
            }
        }
        Arc::new(ExactOp::Leaf(leaf))
    }

    /// Drops `n` leading components (which must vanish) and lowers the order.
    pub fn lower_order(&self, n: usize, tol: f64) -> Result<PolyhomSymbol> {
        for c in self.comps.iter().take(n) {
            if c.max_abs() > tol {
                return Err(Error::Degree(format!("leading component of size {:.3e} does not vanish", c.max_abs())));
            }
        }
        let mut out = self.clone();
        if out.comps.len() <= n {
            out.comps = vec![Branches::zero(self.rank, self.k)];
            out.order -= n as i32;
            if let Some(w) = out.watermark {
                out.order = out.order.max(w + 1);
            }
            out.normalize_len();
            return Ok(out);
        }
        out.comps.drain(..n);
        out.order -= n as i32;
        Ok(out)
    }

    /// Commutator `a∘b − b∘a` with `j_out + 1` components (order is not reduced).
    pub fn commutator(a: &PolyhomSymbol, b: &PolyhomSymbol, j_out: usize) -> Result<PolyhomSymbol> {
        let ab = PolyhomSymbol::compose(a, b, j_out)?;
        let ba = PolyhomSymbol::compose(b, a, j_out)?;
        ab.sub(&ba)
    }

    /// Restricts base variables to a point, leaving a fiber-only symbol.
    pub fn at_base(&self, point: &[f64]) -> PolyhomSymbol {
        assert_eq!(point.len(), self.rank - 1);
        let comps = self.comps.iter().map(|c| c.map(|p, _| p.eval_prefix(point))).collect();
        let exact = self.exact.as_ref().map(|e| match e.as_ref() {
            ExactOp::Leaf(l) => Arc::new(ExactOp::Leaf(Leaf {
                order: l.order,
                comps: l.comps.iter().map(|c| c.map(|p, _| p.eval_prefix(point))).collect(),
                zero_mode: l.zero_mode.eval_prefix(point),
                corrections: l.corrections.iter().map(|(n, c)| (*n, c.eval_prefix(point))).collect(),
            })),
            _ => Arc::new(ExactOp::AtBase(point.to_vec(), e.clone())),
        });
        PolyhomSymbol { order: self.order, comps, watermark: self.watermark, rank: 1, k: self.k, exact }
    }

    /// Derivative in the base direction `var` (a leading torus variable).
    pub fn diff_base(&self, var: usize) -> PolyhomSymbol {
        assert!(var + 1 < self.rank, "only base variables can be differentiated");
        let comps = self.comps.iter().map(|c| c.map(|p, _| p.deriv(var))).collect();
        let exact = self.exact.as_ref().map(|e| match e.as_ref() {
            ExactOp::Leaf(l) => Arc::new(ExactOp::Leaf(Leaf {
                order: l.order,
                comps: l.comps.iter().map(|c| c.map(|p, _| p.deriv(var))).collect(),
                zero_mode: l.zero_mode.deriv(var),
                corrections: l.corrections.iter().map(|(n, c)| (*n, c.deriv(var))).collect(),
            })),
            _ => Arc::new(ExactOp::Deriv(var, e.clone())),
        });
        PolyhomSymbol { order: self.order, comps, watermark: self.watermark, rank: self.rank, k: self.k, exact }
    }

    /// Lifts a symbol to `n` extra leading base variables it does not depend on.
    pub fn prepend_base(&self, n: usize) -> PolyhomSymbol {
        let lift = |p: &TrigPoly| p.prepend_vars(n);
        let comps = self.comps.iter().map(|c| c.map(|p, _| lift(p))).collect();
        let exact = match self.leaf() {
            Some(l) => Some(Arc::new(ExactOp::Leaf(Leaf {
                order: l.order,
                comps: l.comps.iter().map(|c| c.map(|p, _| lift(p))).collect(),
                zero_mode: lift(&l.zero_mode),
                corrections: l.corrections.iter().map(|(n, c)| (*n, lift(c))).collect(),
            }))),
            None => {
                assert!(self.exact.is_none(), "only leaf operators can be lifted");
                None
            }
        };
        PolyhomSymbol { order: self.order, comps, watermark: self.watermark, rank: self.rank + n, k: self.k, exact }
    }

    /// Largest deviation between tracked components of equal degree.
    pub fn tracked_dist(&self, o: &PolyhomSymbol) -> f64 {
        let top = self.order.max(o.order);
        let floor = self.watermark_floor().max(o.watermark_floor());
        let bottom_a = self.order - self.comps.len() as i32;
        let bottom_b = o.order - o.comps.len() as i32;
        let bottom = floor.max(bottom_a.min(bottom_b));
        let mut m: f64 = 0.0;
        let mut deg = top;
        while deg > bottom {
            if let (Some(x), Some(y)) = (self.comp_at_degree(deg), o.comp_at_degree(deg)) {
                m = m.max(x.plus.dist(&y.plus)).max(x.minus.dist(&y.minus));
            }
            deg -= 1;
        }
        m
    }

    /// Truncates to the components above a new watermark `w`.
    pub fn truncate(&self, w: i32) -> PolyhomSymbol {
        let mut out = self.clone();
        let w = self.watermark.map_or(w, |old| old.max(w));
        out.watermark = Some(w);
        out.normalize_len();
        out
    }
}

/// Samples the leading branches on a grid and returns the smallest singular value found.
pub fn ellipticity_margin(q: &PolyhomSymbol) -> (f64, Vec<f64>) {
    let rank = q.rank();
    let m = ELLIPTIC_GRID;
    let total = m.pow(rank as u32);
    let mut worst = (f64::INFINITY, vec![]);
    let mut pt = vec![0.0; rank];
    for idx in 0..total {
        let mut rem = idx;
        for v in (0..rank).rev() {
            pt[v] = crate::constants::TWO_PI * (rem % m) as f64 / m as f64;
            rem /= m;
        }
        for br in [&q.leading().plus, &q.leading().minus] {
            let val = br.eval(&pt);
            let s = if val.nrows() == 1 {
                val[(0, 0)].norm()
            } else {
                val.clone().singular_values().iter().cloned().fold(f64::INFINITY, f64::min)
            };
            if s < worst.0 {
                worst = (s, pt.clone());
            }
        }
    }
    worst
}

/// Pointwise inverse of an invertible matrix function, exact for monomials.
pub fn trig_inverse(f: &TrigPoly) -> Result<TrigPoly> {
    if f.len() == 1 {
        let (freq, m) = f.coeffs().iter().next().unwrap();
        let inv = m.clone().try_inverse().ok_or(Error::NonElliptic { point: vec![], smin: 0.0 })?;
        return Ok(TrigPoly::monomial(f.rank(), freq.iter().map(|n| -n).collect(), inv));
    }
    let rank = f.rank();
    let (start, cap) = match rank {
        1 => (64, 4096),
        2 => (32, 256),
        _ => (16, 64),
    };
    let mut m = start;
    loop {
        let inv = TrigPoly::from_samples(rank, f.matrix_size(), m, 0.0, |t| {
            f.eval(t).try_inverse().expect("ellipticity was checked")
        });
        let scale = inv.max_abs();
        let tail = inv
            .coeffs()
            .iter()
            .filter(|(fr, _)| fr.iter().any(|n| n.unsigned_abs() as usize >= m / 4))
            .map(|(_, c)| crate::trigpoly::mat_max_abs(c))
            .fold(0.0, f64::max);
        if tail <= FFT_PRUNE_TOL * scale.max(1.0) || m >= cap {
            return Ok(inv.prune(FFT_PRUNE_TOL * scale.max(1.0)));
        }
        m *= 2;
    }
}

/// Symbolic parametrix `p` with `q∘p − 1` and `p∘q − 1` vanishing through order `−(J_out+1)`.
pub fn parametrix(q: &PolyhomSymbol, j_out: usize) -> Result<PolyhomSymbol> {
    let (smin, point) = ellipticity_margin(q);
    if smin < ELLIPTIC_SMIN {
        return Err(Error::NonElliptic { point, smin });
    }
    if let Some(w) = q.watermark() {
        let avail = (q.order() - w) as usize;
        if j_out + 1 > avail {
            return Err(Error::Watermark { requested: j_out, achievable: avail - 1, watermark: w });
        }
    }
    let rank = q.rank();
    let k = q.matrix_size();
    let d = q.order();
    let lead = q.leading();
    let p0 = PolyhomSymbol::homogeneous(-d, trig_inverse(&lead.plus)?, trig_inverse(&lead.minus)?);
    let one = PolyhomSymbol::identity(rank, k).without_operator();
    let qp0 = PolyhomSymbol::compose(&q.clone().without_operator(), &p0, j_out)?;
    let r = one.sub(&qp0)?;
    let scale = 1.0 + q.max_abs() * p0.max_abs();
    let r = r.lower_order(1, 1e-9 * scale).map_err(|_| Error::NonElliptic { point: vec![], smin })?;
    let mut acc = one.truncate(-(j_out as i32) - 1);
    let mut power = one.clone();
    for _ in 0..j_out {
        power = PolyhomSymbol::compose_auto(&power, &r, j_out)?;
        if power.watermark_floor() >= -(j_out as i32) - 1 && power.order() <= -(j_out as i32) - 1 {
            break;
        }
        acc = acc.add(&power.truncate(-(j_out as i32) - 1))?;
    }
    let p = PolyhomSymbol::compose(&p0, &acc, j_out)?;
    let p = p.truncate(-d - j_out as i32 - 1).without_operator();
    let prune = |t: &TrigPoly| t.prune(FFT_PRUNE_TOL * scale);
    let comps: Vec<Branches> = p.comps().iter().map(|c| c.map(|t, _| prune(t))).collect();
    let p = PolyhomSymbol::new(p.order(), comps, p.watermark());
    Ok(p.with_leaf_operator(TrigPoly::identity(rank, k)))
}

/// `[ln D, a]` via `Σ_k ((−1)^{k+1}/k) ad_D^k(a) D^{−k}`; order `ord(a) − 1`, watermark `ord(a) − J_out − 1`.
pub fn log_commutator(a: &PolyhomSymbol, j_out: usize) -> Result<PolyhomSymbol> {
    let d = a.order();
    let target_w = d - j_out as i32 - 1;
    if let Some(w) = a.watermark() {
        if target_w < w {
            return Err(Error::Watermark {
                requested: j_out,
                achievable: (d - 1 - w).max(0) as usize,
                watermark: w,
            });
        }
    }
    let rank = a.rank();
    let k = a.matrix_size();
    if a.is_null() {
        return Ok(PolyhomSymbol::zero(rank, k, d - 1));
    }
    let dsym = PolyhomSymbol::dspec(rank, k);
    let mut ad = a.clone();
    let mut acc: Option<PolyhomSymbol> = None;
    for kk in 1..=(j_out as i32) {
        let da = PolyhomSymbol::compose_auto(&dsym, &ad, j_out + 2)?;
        let ad_d = PolyhomSymbol::compose_auto(&ad, &dsym, j_out + 2)?;
        ad = da.sub(&ad_d)?.lower_order(1, 1e-9 * (1.0 + ad.max_abs()))?;
        let dinv = PolyhomSymbol::dspec_pow(rank, k, -kk);
        let term = PolyhomSymbol::compose_auto(&ad, &dinv, j_out + 2)?;
        let coef = if kk % 2 == 1 { 1.0 } else { -1.0 } / kk as f64;
        let term = term.truncate(target_w).scale(cr(coef)).without_operator();
        acc = Some(match acc {
            None => term,
            Some(s) => s.add(&term)?,
        });
    }
    let acc = match acc {
        None => PolyhomSymbol::zero(rank, k, d - 1).truncate(target_w).without_operator(),
        Some(s) => s,
    };
    let mut out = acc.truncate(target_w);
    if out.order() > d - 1 {
        let drop = (out.order() - (d - 1)) as usize;
        out = out.lower_order(drop, 1e-9 * (1.0 + a.max_abs()))?;
    }
    out.exact = a.exact.as_ref().map(|e| Arc::new(ExactOp::LogComm(e.clone())));
    Ok(out)
}

/// Closed form of [`log_commutator`]: `Σ_{j,k} ((−1)^{k+1}/k) (±D_x)^k c_j |ξ|^{d−j−k}`.
pub fn log_commutator_closed_form(a: &PolyhomSymbol, j_out: usize) -> PolyhomSymbol {
    let d = a.order();
    let xv = a.rank() - 1;
    let mut comps = vec![Branches::zero(a.rank(), a.matrix_size()); j_out];
    for (j, c) in a.comps().iter().enumerate() {
        for kk in 1..=j_out {
            let idx = j + kk - 1;
            if idx >= j_out {
                break;
            }
            let coef = if kk % 2 == 1 { 1.0 } else { -1.0 } / kk as f64;
            let sgn_minus = if kk % 2 == 0 { 1.0 } else { -1.0 };
            comps[idx].plus.axpy(cr(coef), &c.plus.dx_power(xv, kk as u32));
            comps[idx].minus.axpy(cr(coef * sgn_minus), &c.minus.dx_power(xv, kk as u32));
        }
    }
    if comps.is_empty() {
        comps.push(Branches::zero(a.rank(), a.matrix_size()));
        return PolyhomSymbol::new(d - 1, comps, Some(d - 2));
    }
    PolyhomSymbol::new(d - 1, comps, Some(d - j_out as i32 - 1))
}

/// `x`-average of `a(·, n)` as a polynomial in the base variables.
pub fn diag_symbol_value(a: &PolyhomSymbol, n: i64) -> Result<TrigPoly> {
    let op = a.exact().ok_or(Error::UntrackedMode(n))?;
    Ok(ExactEval::new().value(op, n).last_average())
}
