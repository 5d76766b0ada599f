//! Quantization, the Fedosov inverse, the boundary of the renormalized trace and Chern–Simons index pairings.

use std::sync::Arc;

use rayon::prelude::*;

use crate::constants::TWO_PI;
use crate::error::{Error, Result};
use crate::fedosov::{renorm_shift_delta, trace_tau_r, trace_tau_r_shifted, Ambient, Parity, RenormShift, UElement, VElement};
use crate::forms::{integrate_over_cycle, ConnectionSpec, Cycle, FormSymbol};
use crate::symbol::{log_commutator, parametrix, PolyhomSymbol};
use crate::trigpoly::{c, cr, TrigPoly, C64, I};
use crate::zeta::{radul_pairing, wodzicki_residue};

/// How the exact operator behind a quantized leading symbol treats low modes.
#[derive(Clone, Debug, Default)]
pub enum ZeroMode {
    /// Mode 0 acts by the `ξ > 0` branch.
    #[default]
    Plus,
    /// Mode 0 acts by the average of both branches.
    Average,
}

#[derive(Clone, Debug, Default)]
pub struct QuantizeStyle {
    pub zero_mode: ZeroMode,
    /// Extra finite-rank corrections `(n, c)` added at mode `n ≠ 0`.
    pub corrections: Vec<(i64, TrigPoly)>,
}

/// The splitting `σ`: order-zero operator with leading symbol `(plus, minus)` and no lower terms.
pub fn quantize(plus: &TrigPoly, minus: &TrigPoly, style: &QuantizeStyle) -> PolyhomSymbol {
    let zm = match style.zero_mode {
        ZeroMode::Plus => plus.clone(),
        ZeroMode::Average => plus.add(minus).scale(cr(0.5)),
    };
    let mut s = PolyhomSymbol::homogeneous(0, plus.clone(), minus.clone()).with_zero_mode(zm);
    for (n, corr) in &style.corrections {
        s = s.with_correction(*n, corr.clone());
    }
    s
}

pub fn quantize_element(amb: &Arc<Ambient>, plus: &TrigPoly, minus: &TrigPoly, style: &QuantizeStyle) -> VElement {
    VElement::from_symbol(amb, quantize(plus, minus, style))
}

/// `1 + (q − 1)`: the adjoined unit plus a degree-zero element of `ℳ₀`.
pub fn unit_lift(amb: &Arc<Ambient>, q: &PolyhomSymbol) -> Result<UElement> {
    let one = PolyhomSymbol::identity(amb.rank(), amb.matrix_size());
    let body = VElement::from_symbol(amb, q.sub(&one)?);
    Ok(UElement { lambda: cr(1.0), mu: cr(0.0), body })
}

/// `Q⁻¹ = Σ_n P(dQ dP)^n` from a parametrix `p`; the sum stops once the terms vanish identically.
pub fn fedosov_inverse(q: &UElement, p: &PolyhomSymbol) -> Result<UElement> {
    if q.parity() != Some(Parity::Even) {
        return Err(Error::Parity("the Fedosov inverse needs an even element".into()));
    }
    let amb = q.ambient().clone();
    let pu = unit_lift(&amb, p)?;
    let dq = q.differential()?;
    let dp = pu.differential()?;
    let step = dq.product(&dp)?;
    let mut acc = pu.clone();
    let mut term = pu;
    for _ in 0..=(amb.dim() / 2 + 1) {
        term = term.product(&step)?;
        if term.body.is_zero() && term.lambda == cr(0.0) {
            break;
        }
        acc = acc.add(&term)?;
    }
    Ok(acc)
}

/// `τ_R∂(α 𝐝β) = τ_R(α⊙β − β⊙α)`.
pub fn boundary_direct(alpha: &UElement, beta: &UElement, cycle: &Cycle) -> Result<C64> {
    trace_tau_r(&ideal_commutator(alpha, beta)?, cycle)
}

fn ideal_commutator(alpha: &UElement, beta: &UElement) -> Result<VElement> {
    let x = alpha.fedosov_product(beta)?.sub(&beta.fedosov_product(alpha)?)?;
    if x.lambda != cr(0.0) || x.mu != cr(0.0) {
        return Err(Error::Invalid("τ_R is evaluated on the ideal part only".into()));
    }
    Ok(x.body)
}

/// [`boundary_direct`] with `τ_R` replaced by a shifted extension of `τ`.
pub fn boundary_direct_shifted(alpha: &UElement, beta: &UElement, cycle: &Cycle, shift: &RenormShift) -> Result<C64> {
    trace_tau_r_shifted(&ideal_commutator(alpha, beta)?, cycle, shift)
}

/// Change of `τ_R∂(α𝐝β)` when `τ_R` is replaced by a shifted extension.
pub fn boundary_shift_delta(alpha: &UElement, beta: &UElement, cycle: &Cycle, shift: &RenormShift) -> Result<C64> {
    renorm_shift_delta(&ideal_commutator(alpha, beta)?, cycle, shift)
}

/// `(Q⁻¹, Q)` as unitalized elements.
pub fn inverse_pair(amb: &Arc<Ambient>, q: &PolyhomSymbol) -> Result<(UElement, UElement)> {
    let p = parametrix(q, amb.depth())?;
    let qu = unit_lift(amb, q)?;
    Ok((fedosov_inverse(&qu, &p)?, qu))
}

/// `♮σ₀dσ₁…dσ₂ₙ𝐝σ₂ₙ₊₁` (`head = Some(σ₀)`) or `♮dσ₁…dσ₂ₙ𝐝σ₂ₙ₊₁` (`head = None`).
#[derive(Clone, Debug)]
pub struct SigmaChain {
    pub head: Option<PolyhomSymbol>,
    /// `σ₁ … σ₂ₙ₊₁`.
    pub tail: Vec<PolyhomSymbol>,
}

impl SigmaChain {
    pub fn new(head: Option<PolyhomSymbol>, tail: Vec<PolyhomSymbol>) -> Result<Self> {
        if tail.len() % 2 == 0 {
            return Err(Error::Arity { expected: tail.len() + 1, got: tail.len() });
        }
        Ok(SigmaChain { head, tail })
    }

    pub fn n(&self) -> usize {
        self.tail.len() / 2
    }

    fn last(&self) -> &PolyhomSymbol {
        self.tail.last().expect("nonempty chain")
    }

    /// `(α, σ₂ₙ₊₁)` with `α = σ₀dσ₁…dσ₂ₙ` in `ℳ₀[v]`.
    pub fn elements(&self, amb: &Arc<Ambient>) -> Result<(UElement, UElement)> {
        let words = &self.tail[..self.tail.len() - 1];
        let alpha = word_element(amb, self.head.as_ref(), words)?;
        let beta = UElement::from_body(VElement::from_symbol(amb, self.last().clone()));
        Ok((alpha, beta))
    }
}

fn word_element(amb: &Arc<Ambient>, head: Option<&PolyhomSymbol>, words: &[PolyhomSymbol]) -> Result<UElement> {
    let mut acc = match head {
        Some(h) => UElement::from_body(VElement::from_symbol(amb, h.clone())),
        None => UElement::one(amb),
    };
    for s in words {
        let ds = VElement::from_symbol(amb, s.clone()).v_differential()?;
        acc = acc.product(&UElement::from_body(ds))?;
    }
    Ok(acc)
}

/// `(σ₀dσ₁…dσ_k)₁₁`: each `dσᵢ` contributes `δσᵢ`, or pairs with its right neighbour into `σᵢθσᵢ₊₁`.
pub fn word_11(amb: &Ambient, head: Option<&PolyhomSymbol>, words: &[PolyhomSymbol]) -> Result<FormSymbol> {
    let j = amb.depth();
    let sig: Vec<FormSymbol> = words.iter().map(|s| amb.form(0, s.clone())).collect();
    let del: Vec<FormSymbol> = sig.iter().map(|f| amb.connection().delta(f, j)).collect::<Result<_>>()?;
    fn rec(
        amb: &Ambient,
        i: usize,
        prefix: FormSymbol,
        sig: &[FormSymbol],
        del: &[FormSymbol],
        out: &mut FormSymbol,
    ) -> Result<()> {
        let j = amb.depth();
        if i == sig.len() {
            *out = out.add(&prefix)?;
            return Ok(());
        }
        rec(amb, i + 1, prefix.wedge(&del[i], j)?, sig, del, out)?;
        if i + 1 < sig.len() {
            let pair = sig[i].wedge(amb.theta(), j)?.wedge(&sig[i + 1], j)?;
            rec(amb, i + 2, prefix.wedge(&pair, j)?, sig, del, out)?;
        }
        Ok(())
    }
    let start = match head {
        Some(h) => amb.form(0, h.clone()),
        None => amb.form(0, PolyhomSymbol::identity(amb.rank(), amb.matrix_size())),
    };
    let mut out = amb.zero_form();
    rec(amb, 0, start, &sig, &del, &mut out)?;
    Ok(out)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn log_comm_form(x: &FormSymbol, j: usize) -> Result<FormSymbol> {
    x.map(|s| log_commutator(s, j))
}

/// `⨍_C x`: residue of the component of degree `dim C`, integrated over `C`.
pub fn residue_over(x: &FormSymbol, cycle: &Cycle) -> Result<C64> {
    integrate_over_cycle(x, cycle, wodzicki_residue)
}

/// The residue formulas for `τ_R∂` on a σ-word chain.
pub fn boundary_formula(chain: &SigmaChain, amb: &Arc<Ambient>, cycle: &Cycle) -> Result<C64> {
    let j = amb.depth();
    let n = chain.n();
    let words = &chain.tail[..2 * n];
    let last = chain.last();
    let lc = amb.form(0, log_commutator(last, j)?);
    let w = word_11(amb, chain.head.as_ref(), words)?;
    let mut total = residue_over(&w.wedge(&lc, j)?, cycle)? * (factorial(n) / factorial(2 * n));
    if let Some(head) = &chain.head {
        let fwd = word_11(amb, Some(head), &chain.tail)?;
        let mut rolled = vec![head.clone()];
        rolled.extend_from_slice(words);
        let back = word_11(amb, Some(last), &rolled)?;
        let dl = amb.connection().delta_log_d(amb.matrix_size(), j)?;
        let x = fwd.sub(&back)?.wedge(&dl, j)?;
        total += residue_over(&x, cycle)? * (factorial(n + 1) / factorial(2 * n + 2));
    }
    Ok(total)
}

/// Input of [`boundary_cocycle_eval`].
#[derive(Clone, Debug)]
pub enum BoundaryInput {
    Pair(UElement, UElement),
    Chain(SigmaChain),
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct BoundaryValue {
    pub direct: C64,
    pub formula: Option<C64>,
}

/// Direct `τ_R`-commutator evaluation, plus the residue formula for σ-word chains.
pub fn boundary_cocycle_eval(x: &BoundaryInput, amb: &Arc<Ambient>, cycle: &Cycle) -> Result<BoundaryValue> {
    match x {
        BoundaryInput::Pair(a, b) => Ok(BoundaryValue { direct: boundary_direct(a, b, cycle)?, formula: None }),
        BoundaryInput::Chain(ch) => {
            let (a, b) = ch.elements(amb)?;
            Ok(BoundaryValue { direct: boundary_direct(&a, &b, cycle)?, formula: Some(boundary_formula(ch, amb, cycle)?) })
        }
    }
}

/// `τ_R∂(Q⁻¹𝐝Q)` for an elliptic order-zero symbol `q` over the ambient base.
pub fn inverse_boundary(amb: &Arc<Ambient>, q: &PolyhomSymbol, cycle: &Cycle) -> Result<C64> {
    let (qi, qu) = inverse_pair(amb, q)?;
    boundary_direct(&qi, &qu, cycle)
}

/// `body + ε·soul` with `ε` odd and `ε² = 0`.
#[derive(Clone, Debug)]
pub struct EpsilonPair {
    pub body: FormSymbol,
    pub soul: FormSymbol,
}

impl EpsilonPair {
    pub fn new(body: FormSymbol, soul: FormSymbol) -> Self {
        EpsilonPair { body, soul }
    }

    pub fn add(&self, o: &EpsilonPair) -> Result<EpsilonPair> {
        Ok(EpsilonPair { body: self.body.add(&o.body)?, soul: self.soul.add(&o.soul)? })
    }

    pub fn scale(&self, z: C64) -> EpsilonPair {
        EpsilonPair { body: self.body.scale(z), soul: self.soul.scale(z) }
    }

    /// `(a + εb)(c + εd) = ac + ε((−1)^{|a|} a d + b c)`.
    pub fn mul(&self, o: &EpsilonPair, j: usize) -> Result<EpsilonPair> {
        let body = self.body.wedge(&o.body, j)?;
        let soul = self.body.parity_op().wedge(&o.soul, j)?.add(&self.soul.wedge(&o.body, j)?)?;
        Ok(EpsilonPair { body, soul })
    }

    pub fn max_abs(&self) -> f64 {
        self.body.max_abs().max(self.soul.max_abs())
    }
}

/// Polynomial in `t` with [`EpsilonPair`] coefficients.
#[derive(Clone, Debug)]
struct TPoly(Vec<EpsilonPair>);

impl TPoly {
    fn mul(&self, o: &TPoly, j: usize) -> Result<TPoly> {
        let mut out: Vec<Option<EpsilonPair>> = vec![None; self.0.len() + o.0.len() - 1];
        for (p, a) in self.0.iter().enumerate() {
            for (q, b) in o.0.iter().enumerate() {
                let x = a.mul(b, j)?;
                out[p + q] = Some(match out[p + q].take() {
                    None => x,
                    Some(y) => y.add(&x)?,
                });
            }
        }
        Ok(TPoly(out.into_iter().map(|x| x.expect("filled")).collect()))
    }

    fn add(&self, o: &TPoly) -> Result<TPoly> {
        let (long, short) = if self.0.len() >= o.0.len() { (self, o) } else { (o, self) };
        let mut v = long.0.clone();
        for (i, x) in short.0.iter().enumerate() {
            v[i] = v[i].add(x)?;
        }
        Ok(TPoly(v))
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|x| x.max_abs() == 0.0)
    }

    /// `∫₀¹ p(t) dt`.
    fn integrate(&self) -> Result<EpsilonPair> {
        let mut acc = self.0[0].clone();
        for (k, x) in self.0.iter().enumerate().skip(1) {
            acc = acc.add(&x.scale(cr(1.0 / (k as f64 + 1.0))))?;
        }
        Ok(acc)
    }
}

/// Fiberwise data entering the Chern–Simons form of `(∇ + ε ln D, P(∇ + ε ln D)Q)`.
#[derive(Clone, Debug)]
pub struct CsInputs {
    pub dim: usize,
    pub j: usize,
    pub q: PolyhomSymbol,
    pub p: PolyhomSymbol,
    /// `δQ`.
    pub dq: FormSymbol,
    /// `θ`.
    pub theta: FormSymbol,
    /// `δ ln D`.
    pub dlog: FormSymbol,
}

impl CsInputs {
    /// Inputs with base variables kept symbolic.
    pub fn symbolic(conn: &ConnectionSpec, q: &PolyhomSymbol, j: usize) -> Result<Self> {
        let k = q.matrix_size();
        let dim = conn.dim;
        let p = parametrix(q, j)?;
        let dq = conn.delta(&FormSymbol::function(dim, q.clone()), j)?;
        Ok(CsInputs { dim, j, q: q.clone(), p, dq, theta: conn.curvature(k)?, dlog: conn.delta_log_d(k, j)? })
    }

    /// Inputs restricted to the fiber over `b`.
    pub fn at_point(conn: &ConnectionSpec, q: &PolyhomSymbol, b: &[f64], j: usize) -> Result<Self> {
        let dim = conn.dim;
        let k = q.matrix_size();
        let qb = q.at_base(b);
        let p = parametrix(&qb, j)?;
        let field = |f: &TrigPoly| {
            let f = f.eval_prefix(b).lift_scalar(k);
            PolyhomSymbol::vector_field(f)
        };
        let fields: Vec<PolyhomSymbol> = conn.a.iter().map(&field).collect();
        let mut dq = FormSymbol::zero(dim, 1, k);
        let mut dlog = FormSymbol::zero(dim, 1, k);
        for i in 0..dim {
            let comm = PolyhomSymbol::commutator(&fields[i], &qb, j + 1)?;
            let comm = if comm.order() > 0 { comm.lower_order(comm.order() as usize, 1e-12)? } else { comm };
            let c = q.diff_base(i).at_base(b).add(&comm)?;
            dq = dq.add(&FormSymbol::monomial(dim, 1 << i, c))?;
            let l = log_commutator(&fields[i], j)?.neg();
            dlog = dlog.add(&FormSymbol::monomial(dim, 1 << i, l))?;
        }
        let mut theta = FormSymbol::zero(dim, 1, k);
        if dim == 2 {
            let curl = conn.a[1].deriv(0).sub(&conn.a[0].deriv(1));
            let comm = PolyhomSymbol::commutator(&fields[0], &fields[1], 2)?;
            let t = field(&curl).add(&comm)?;
            theta = FormSymbol::monomial(2, 0b11, t);
        }
        Ok(CsInputs { dim, j, q: qb, p, dq, theta, dlog })
    }

    fn f0(&self, s: PolyhomSymbol) -> FormSymbol {
        FormSymbol::function(self.dim, s)
    }

    fn w(&self, a: &FormSymbol, b: &FormSymbol) -> Result<FormSymbol> {
        a.wedge(b, self.j)
    }

    /// `cs(∇₀, ∇₁) = ∫₀¹ (∇₁ − ∇₀) e^{∇ₜ²}|_ε dt`, up to form degree `dim`.
    pub fn cs_form(&self) -> Result<FormSymbol> {
        let j = self.j;
        let pf = self.f0(self.p.clone());
        let qf = self.f0(self.q.clone());
        let lq = self.f0(log_commutator(&self.q, j)?);
        let d0 = self.w(&pf, &self.dq)?;
        let d1 = self.w(&pf, &lq)?;
        let dp = self.w(&self.w(&pf, &self.dq)?, &pf)?.scale(cr(-1.0));
        let theta_q = self.w(&self.theta, &qf)?.sub(&self.w(&qf, &self.theta)?)?;
        let dd0 = self.w(&dp, &self.dq)?.add(&self.w(&pf, &theta_q)?)?;
        let dl_q = self.w(&self.dlog, &qf)?.sub(&self.w(&qf, &self.dlog)?)?;
        let l_dq = log_comm_form(&self.dq, j)?;
        let dd1 = self.w(&dp, &lq)?.add(&self.w(&pf, &dl_q)?)?.add(&self.w(&pf, &l_dq)?)?;
        let l_d0 = log_comm_form(&d0, j)?;
        let zero = FormSymbol::zero(self.dim, self.q.rank(), self.q.matrix_size());
        let delta = EpsilonPair::new(d0, d1);
        let k0 = EpsilonPair::new(self.theta.clone(), self.dlog.scale(cr(-1.0)));
        let k1 = EpsilonPair::new(dd0, l_d0.sub(&dd1)?);
        let k2 = delta.mul(&delta, j)?;
        let curv = TPoly(vec![k0, k1, k2]);
        let one = EpsilonPair::new(self.f0(PolyhomSymbol::identity(self.q.rank(), self.q.matrix_size())), zero.clone());
        let mut exp = TPoly(vec![one.clone()]);
        let mut power = TPoly(vec![one]);
        for n in 1..=self.dim {
            power = power.mul(&curv, j)?;
            if power.is_zero() {
                break;
            }
            let scaled = TPoly(power.0.iter().map(|x| x.scale(cr(1.0 / factorial(n)))).collect());
            exp = exp.add(&scaled)?;
        }
        let integrand = TPoly(vec![delta]).mul(&exp, j)?;
        Ok(integrand.integrate()?.soul)
    }

    /// `½(PδQδP[ln D,Q] + P(δQ δln D − δln D δQ) + (θP + Pθ)[ln D,Q])`.
    pub fn dim2_formula(&self) -> Result<FormSymbol> {
        let j = self.j;
        let pf = self.f0(self.p.clone());
        let lq = self.f0(log_commutator(&self.q, j)?);
        let dp = self.w(&self.w(&pf, &self.dq)?, &pf)?.scale(cr(-1.0));
        let t1 = self.w(&self.w(&self.w(&pf, &self.dq)?, &dp)?, &lq)?;
        let comm = self.w(&self.dq, &self.dlog)?.sub(&self.w(&self.dlog, &self.dq)?)?;
        let t2 = self.w(&pf, &comm)?;
        let tp = self.w(&self.theta, &pf)?.add(&self.w(&pf, &self.theta)?)?;
        let t3 = self.w(&tp, &lq)?;
        Ok(t1.add(&t2)?.add(&t3)?.scale(cr(0.5)))
    }
}

/// Residue of the top-degree component of a pointwise form (fiber-only coefficients).
fn top_residue(x: &FormSymbol) -> Result<C64> {
    let top = x.top_mask();
    match x.comp(top) {
        None => Ok(cr(0.0)),
        Some(s) if s.is_null() => Ok(cr(0.0)),
        Some(s) => Ok(wodzicki_residue(s)?.mean_scalar()),
    }
}

/// Which Chern–Simons reduction to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsPath {
    General,
    Dim2,
}

/// `⨍_C cs(∇_D^ε, P∇_D^ε Q)` with symbolic base variables.
pub fn chern_simons_pairing(conn: &ConnectionSpec, q: &PolyhomSymbol, cycle: &Cycle, j: usize, path: CsPath) -> Result<C64> {
    match cycle {
        Cycle::Point(b) => {
            if b.len() != conn.dim {
                return Err(Error::Rank(b.len(), conn.dim));
            }
            let inputs = CsInputs::at_point(&ConnectionSpec::flat(0), &q.at_base(b), &[], j)?;
            let cs = inputs.cs_form()?;
            top_residue(&cs)
        }
        Cycle::Torus2 => {
            let inputs = CsInputs::symbolic(conn, q, j)?;
            let x = match path {
                CsPath::General => inputs.cs_form()?,
                CsPath::Dim2 => inputs.dim2_formula()?,
            };
            residue_over(&x.degree_part(2), cycle)
        }
    }
}

/// `⨍_{T²} cs` for a family given on `T² × S¹`, by trapezoid quadrature of the pointwise residue density.
pub fn chern_simons_family(conn: &ConnectionSpec, q: &PolyhomSymbol, grid: usize, j: usize, path: CsPath) -> Result<C64> {
    if conn.dim != 2 || q.rank() != 3 {
        return Err(Error::Rank(q.rank(), 3));
    }
    let pts: Vec<[f64; 2]> = (0..grid * grid)
        .map(|i| [TWO_PI * (i / grid) as f64 / grid as f64, TWO_PI * (i % grid) as f64 / grid as f64])
        .collect();
    let dens: Vec<C64> = pts
        .par_iter()
        .map(|b| {
            let inputs = CsInputs::at_point(conn, q, b, j)?;
            let x = match path {
                CsPath::General => inputs.cs_form()?,
                CsPath::Dim2 => inputs.dim2_formula()?,
            };
            top_residue(&x)
        })
        .collect::<Result<_>>()?;
    let sum: C64 = dens.iter().sum();
    Ok(sum * (TWO_PI * TWO_PI / (grid * grid) as f64))
}

/// Point-cycle pairing by the Radul cocycle `⨍ P[ln D, Q]`.
pub fn radul_index(q: &PolyhomSymbol, j: usize) -> Result<C64> {
    let p = parametrix(q, j)?;
    radul_pairing(&p, q, j)
}

/// Scalar symbol `e^{i w₊ x}` on `ξ > 0` and `e^{i w₋ x}` on `ξ < 0`.
pub fn winding_symbol(wp: i32, wm: i32) -> PolyhomSymbol {
    let plus = TrigPoly::exp_mono(1, 1, vec![wp], cr(1.0));
    let minus = TrigPoly::exp_mono(1, 1, vec![wm], cr(1.0));
    quantize(&plus, &minus, &QuantizeStyle::default())
}

/// SU(2)-suspension family on `T² × S¹`: `e^{ix} − M(b)` on `ξ > 0`, `1` on `ξ < 0`,
/// with `M = 1 + d·σ/2` and `d = (sin a b₁, sin c b₂, m + cos a b₁ + cos c b₂)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SuspensionFamily {
    pub a: i32,
    pub c: i32,
    pub mass: f64,
}

impl SuspensionFamily {
    pub fn qwz() -> Self {
        SuspensionFamily { a: 1, c: 1, mass: 1.0 }
    }

    pub fn double() -> Self {
        SuspensionFamily { a: 1, c: 2, mass: 1.0 }
    }

    fn d(&self) -> [TrigPoly; 3] {
        let t = |f: Vec<i32>, z: C64| (f, z);
        let sin = |f: Vec<i32>, g: Vec<i32>| TrigPoly::from_terms(3, &[t(f, c(0.0, -0.5)), t(g, c(0.0, 0.5))]);
        let d1 = sin(vec![self.a, 0, 0], vec![-self.a, 0, 0]);
        let d2 = sin(vec![0, self.c, 0], vec![0, -self.c, 0]);
        let d3 = TrigPoly::from_terms(
            3,
            &[
                t(vec![0, 0, 0], cr(self.mass)),
                t(vec![self.a, 0, 0], cr(0.5)),
                t(vec![-self.a, 0, 0], cr(0.5)),
                t(vec![0, self.c, 0], cr(0.5)),
                t(vec![0, -self.c, 0], cr(0.5)),
            ],
        );
        [d1, d2, d3]
    }

    /// The `ξ > 0` branch `u(b, x)`.
    pub fn plus_branch(&self) -> TrigPoly {
        let [d1, d2, d3] = self.d();
        let ex = TrigPoly::from_terms(3, &[(vec![0, 0, 1], cr(1.0)), (vec![0, 0, 0], cr(-1.0))]);
        let half = cr(0.5);
        let u11 = ex.sub(&d3.scale(half));
        let u22 = ex.add(&d3.scale(half));
        let u12 = d1.sub(&d2.scale(I)).scale(-half);
        let u21 = d1.add(&d2.scale(I)).scale(-half);
        TrigPoly::from_entries(&[vec![u11, u12], vec![u21, u22]])
    }

    pub fn symbol(&self) -> PolyhomSymbol {
        quantize(&self.plus_branch(), &TrigPoly::identity(3, 2), &QuantizeStyle::default())
    }
}

/// Frozen normalization `κ` linking `(i/2π)^m ⨍cs` to integer indices.
///
/// Fixed once from the unit shift `e^{ix}` on `ξ > 0`, whose Fredholm pairing is `1`.
pub fn calibrate_kappa(j: usize) -> Result<f64> {
    let q = winding_symbol(1, 0);
    let v = chern_simons_pairing(&ConnectionSpec::flat(0), &q, &Cycle::Point(vec![]), j, CsPath::General)?;
    if (v.im).abs() > 1e-9 || v.re.abs() < 0.5 {
        return Err(Error::Invalid(format!("calibration pairing {v} is not a nonzero real")));
    }
    Ok(1.0 / v.re)
}

/// `κ (i/2π)^m v` for a pairing over a base of dimension `2m`.
pub fn normalized_pairing(v: C64, m: usize, kappa: f64) -> C64 {
    let f = I * (1.0 / TWO_PI);
    (0..m).fold(v * kappa, |acc, _| acc * f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::index_idempotent_pairing;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn torus_conn() -> ConnectionSpec {
        let a1 = TrigPoly::from_terms(3, &[(vec![0, 0, 1], cr(0.1)), (vec![0, 0, -1], cr(0.1))]);
        let a2 = TrigPoly::from_terms(3, &[(vec![1, 0, 0], cr(0.5)), (vec![-1, 0, 0], cr(0.5)), (vec![0, 0, 1], c(0.0, -0.15)), (vec![0, 0, -1], c(0.0, 0.15))]);
        ConnectionSpec::new(2, vec![a1, a2]).unwrap()
    }

    fn rand_sigma(rng: &mut ChaCha8Rng) -> PolyhomSymbol {
        let mut pp = vec![];
        let mut mm = vec![];
        for _ in 0..2 {
            let f: Vec<i32> = (0..3).map(|_| rng.random_range(-1..=1)).collect();
            pp.push((f.clone(), c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))));
            let g: Vec<i32> = (0..3).map(|_| rng.random_range(-1..=1)).collect();
            mm.push((g, c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))));
        }
        quantize(&TrigPoly::from_terms(3, &pp), &TrigPoly::from_terms(3, &mm), &QuantizeStyle::default())
    }

    #[test]
    fn word_11_matches_product() {
        let amb = Ambient::new(torus_conn(), 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<PolyhomSymbol> = (0..3).map(|_| rand_sigma(&mut rng)).collect();
        let e = word_element(&amb, Some(&s[0]), &s[1..]).unwrap();
        let w = word_11(&amb, Some(&s[0]), &s[1..]).unwrap();
        assert!(e.body.w11.dist(&w) < 1e-12);
        let e = word_element(&amb, None, &s[1..]).unwrap();
        let w = word_11(&amb, None, &s[1..]).unwrap();
        assert!(e.body.w11.dist(&w) < 1e-12);
    }

    #[test]
    fn shift_point_pairings_agree() {
        let q = winding_symbol(1, 0);
        let amb = Ambient::point(1, 4);
        let radul = radul_index(&q, 4).unwrap();
        let direct = inverse_boundary(&amb, &q, &Cycle::Point(vec![])).unwrap();
        let cs = chern_simons_pairing(&ConnectionSpec::flat(0), &q, &Cycle::Point(vec![]), 4, CsPath::General).unwrap();
        let oracle = index_idempotent_pairing(&q, 64, 4).unwrap();
        assert!((radul - cr(1.0)).norm() < 1e-12, "{radul}");
        assert!((cs - radul).norm() < 1e-9, "{cs}");
        assert!((direct - radul).norm() < 1e-8, "{direct}");
        assert_eq!(oracle.rounded, 1);
    }

    #[test]
    fn fedosov_inverse_recomposes() {
        let amb = Ambient::new(torus_conn(), 1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = TrigPoly::from_terms(3, &[(vec![0, 0, 1], cr(1.0)), (vec![1, 0, 0], cr(0.2))]);
        let g = TrigPoly::from_terms(3, &[(vec![0, 0, 0], cr(1.0)), (vec![0, 1, 1], c(0.0, 0.3))]);
        let q = quantize(&f, &g, &QuantizeStyle::default());
        let _ = &mut rng;
        let p = parametrix(&q, 4).unwrap();
        let qu = unit_lift(&amb, &q).unwrap();
        let qi = fedosov_inverse(&qu, &p).unwrap();
        let one = UElement::one(&amb);
        let r = qu.fedosov_product(&qi).unwrap().sub(&one).unwrap();
        assert!(r.lambda.norm() < 1e-14 && r.body.max_abs() < 1e-9, "{}", r.body.max_abs());
        let r = qi.fedosov_product(&qu).unwrap().sub(&one).unwrap();
        assert!(r.body.max_abs() < 1e-9, "{}", r.body.max_abs());
    }

    #[test]
    fn chain_formula_matches_direct() {
        let amb = Ambient::new(torus_conn(), 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for shape in 0..3 {
            let s: Vec<PolyhomSymbol> = (0..4).map(|_| rand_sigma(&mut rng)).collect();
            let chain = match shape {
                0 => SigmaChain::new(Some(s[0].clone()), vec![s[1].clone()]).unwrap(),
                1 => SigmaChain::new(Some(s[0].clone()), s[1..4].to_vec()).unwrap(),
                _ => SigmaChain::new(None, s[1..4].to_vec()).unwrap(),
            };
            let v = boundary_cocycle_eval(&BoundaryInput::Chain(chain), &amb, &Cycle::Torus2).unwrap();
            let f = v.formula.unwrap();
            assert!((v.direct - f).norm() < 1e-8, "shape {shape}: direct {} formula {}", v.direct, f);
        }
    }

    fn torus_symbol(style: &QuantizeStyle) -> PolyhomSymbol {
        let f = TrigPoly::from_terms(3, &[(vec![0, 0, 1], cr(1.0)), (vec![1, 0, 0], cr(0.2))]);
        let g = TrigPoly::from_terms(3, &[(vec![0, 0, 0], cr(1.0)), (vec![0, 1, 1], c(0.0, 0.3))]);
        quantize(&f, &g, style)
    }

    #[test]
    fn renormalization_shift_leaves_boundary_fixed() {
        let shift = RenormShift { log_scale: 0.7, weights: vec![(0, c(0.3, 0.1)), (-1, cr(-2.0)), (2, cr(1.5))] };
        let amb = Ambient::new(torus_conn(), 1, 3).unwrap();
        let (qi, qu) = inverse_pair(&amb, &torus_symbol(&QuantizeStyle::default())).unwrap();
        let d = boundary_shift_delta(&qi, &qu, &Cycle::Torus2, &shift).unwrap();
        assert!(d.norm() < 1e-9, "{d}");
        let amb = Ambient::point(1, 4);
        let q = winding_symbol(2, -1);
        let (qi, qu) = inverse_pair(&amb, &q).unwrap();
        let base = boundary_direct(&qi, &qu, &Cycle::Point(vec![])).unwrap();
        let shifted = boundary_direct_shifted(&qi, &qu, &Cycle::Point(vec![]), &shift).unwrap();
        assert!((base - shifted).norm() < 1e-9 && (base - cr(3.0)).norm() < 1e-8, "{base} {shifted}");
    }

    #[test]
    fn shift_rejects_weights_below_the_pole() {
        let shift = RenormShift { log_scale: 0.0, weights: vec![(-2, cr(1.0))] };
        let amb = Ambient::point(1, 4);
        let (qi, qu) = inverse_pair(&amb, &winding_symbol(1, 0)).unwrap();
        assert!(boundary_shift_delta(&qi, &qu, &Cycle::Point(vec![]), &shift).is_err());
    }

    #[test]
    fn quantization_choices_agree_on_a_point() {
        let amb = Ambient::point(1, 4);
        let f = TrigPoly::from_terms(1, &[(vec![2], cr(1.0)), (vec![0], cr(0.3))]);
        let g = TrigPoly::from_terms(1, &[(vec![-1], cr(1.0))]);
        let styles = [
            QuantizeStyle::default(),
            QuantizeStyle { zero_mode: ZeroMode::Average, corrections: vec![] },
            QuantizeStyle { zero_mode: ZeroMode::Plus, corrections: vec![(2, TrigPoly::from_terms(1, &[(vec![1], c(0.2, -0.1))]))] },
        ];
        let vals: Vec<C64> = styles
            .iter()
            .map(|st| inverse_boundary(&amb, &quantize(&f, &g, st), &Cycle::Point(vec![])).unwrap())
            .collect();
        for v in &vals {
            assert!((v - vals[0]).norm() < 1e-9, "{vals:?}");
        }
        assert!((vals[0] - cr(3.0)).norm() < 1e-8, "{}", vals[0]);
    }

    #[test]
    fn multiplication_symbols_pair_to_zero() {
        let amb = Ambient::point(1, 4);
        let f = TrigPoly::from_terms(1, &[(vec![1], cr(1.0)), (vec![0], cr(0.1))]);
        let q = quantize(&f, &f, &QuantizeStyle::default());
        let v = inverse_boundary(&amb, &q, &Cycle::Point(vec![])).unwrap();
        let r = radul_index(&q, 4).unwrap();
        assert!(v.norm() < 1e-9 && r.norm() < 1e-9, "{v} {r}");
    }

    #[test]
    fn trivial_symbol_has_trivial_cs_pairing() {
        let q = winding_symbol(0, 0);
        let v = chern_simons_pairing(&ConnectionSpec::flat(0), &q, &Cycle::Point(vec![]), 4, CsPath::General).unwrap();
        assert!(v.norm() < 1e-12, "{v}");
    }
}
