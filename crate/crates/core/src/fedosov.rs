//! The algebra `ℳ₀[v]` with `v² = θ`, its differential, the Fedosov product and the traces `τ`, `τ_R`.
//!
//! An element `α = ω₁₁ + ω₁₂v + vω₂₁ + vω₂₂v` is stored as four form blocks. The
//! adjoined unit and the bare generator `v` are carried as scalar coefficients
//! in [`UElement`], since the identity symbol of `ℳ₀` satisfies `1·v·1 = 0`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forms::{integrate_over_cycle, mask_degree, ConnectionSpec, Cycle, FormSymbol, Mask};
use crate::symbol::PolyhomSymbol;
use crate::trigpoly::{cr, TrigPoly, C64};
use crate::zeta::{wodzicki_residue, zeta_finite_part};

/// Ambient data shared by all elements: connection, curvature, matrix size and tracking depth.
#[derive(Debug)]
pub struct Ambient {
    conn: ConnectionSpec,
    theta: FormSymbol,
    k: usize,
    j: usize,
}

impl Ambient {
    pub fn new(conn: ConnectionSpec, k: usize, j: usize) -> Result<Arc<Ambient>> {
        let theta = conn.curvature(k)?;
        Ok(Arc::new(Ambient { conn, theta, k, j }))
    }

    /// Zero-dimensional base (a single fiber).
    pub fn point(k: usize, j: usize) -> Arc<Ambient> {
        Ambient::new(ConnectionSpec::flat(0), k, j).expect("flat point connection")
    }

    pub fn dim(&self) -> usize {
        self.conn.dim
    }

    /// Number of variables of the coefficient polynomials (base plus fiber).
    pub fn rank(&self) -> usize {
        self.conn.dim + 1
    }

    pub fn matrix_size(&self) -> usize {
        self.k
    }

    pub fn depth(&self) -> usize {
        self.j
    }

    pub fn connection(&self) -> &ConnectionSpec {
        &self.conn
    }

    pub fn theta(&self) -> &FormSymbol {
        &self.theta
    }

    pub fn zero_form(&self) -> FormSymbol {
        FormSymbol::zero(self.dim(), self.rank(), self.k)
    }

    pub fn form(&self, mask: Mask, s: PolyhomSymbol) -> FormSymbol {
        FormSymbol::monomial(self.dim(), mask, s)
    }

    fn wedge(&self, a: &FormSymbol, b: &FormSymbol) -> Result<FormSymbol> {
        a.wedge(b, self.j)
    }

    fn delta(&self, x: &FormSymbol) -> Result<FormSymbol> {
        self.conn.delta(x, self.j)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// `ω₁₁ + ω₁₂v + vω₂₁ + vω₂₂v` over a fixed [`Ambient`].
#[derive(Clone, Debug)]
pub struct VElement {
    amb: Arc<Ambient>,
    pub w11: FormSymbol,
    pub w12: FormSymbol,
    pub w21: FormSymbol,
    pub w22: FormSymbol,
}

impl VElement {
    pub fn zero(amb: &Arc<Ambient>) -> Self {
        let z = amb.zero_form();
        VElement { amb: amb.clone(), w11: z.clone(), w12: z.clone(), w21: z.clone(), w22: z }
    }

    pub fn from_blocks(amb: &Arc<Ambient>, blocks: [FormSymbol; 4]) -> Self {
        let [w11, w12, w21, w22] = blocks;
        VElement { amb: amb.clone(), w11, w12, w21, w22 }
    }

    /// The element `ω` (all of it in the `ω₁₁` slot).
    pub fn from_form(amb: &Arc<Ambient>, w: FormSymbol) -> Self {
        let mut e = VElement::zero(amb);
        e.w11 = w;
        e
    }

    /// Degree-zero element carrying the operator family `s`.
    pub fn from_symbol(amb: &Arc<Ambient>, s: PolyhomSymbol) -> Self {
        VElement::from_form(amb, amb.form(0, s))
    }

    pub fn ambient(&self) -> &Arc<Ambient> {
        &self.amb
    }

    pub fn blocks(&self) -> [&FormSymbol; 4] {
        [&self.w11, &self.w12, &self.w21, &self.w22]
    }

    fn same_ambient(&self, o: &VElement) -> Result<()> {
        if Arc::ptr_eq(&self.amb, &o.amb) {
            Ok(())
        } else {
            Err(Error::ThetaMismatch)
        }
    }

    /// Total (form ⊕ v) parity, `None` when mixed; the zero element is even.
    pub fn parity(&self) -> Option<Parity> {
        let shifts = [0usize, 1, 1, 2];
        let mut seen: Option<usize> = None;
        for (w, s) in self.blocks().into_iter().zip(shifts) {
            for (m, c) in w.comps() {
                if c.max_abs() == 0.0 {
                    continue;
                }
                let p = (mask_degree(*m) + s) % 2;
                match seen {
                    None => seen = Some(p),
                    Some(q) if q != p => return None,
                    _ => {}
                }
            }
        }
        Some(if seen == Some(1) { Parity::Odd } else { Parity::Even })
    }

    pub fn add(&self, o: &VElement) -> Result<VElement> {
        self.axpy(cr(1.0), o)
    }

    pub fn sub(&self, o: &VElement) -> Result<VElement> {
        self.axpy(cr(-1.0), o)
    }

    pub fn axpy(&self, z: C64, o: &VElement) -> Result<VElement> {
        self.same_ambient(o)?;
        Ok(VElement {
            amb: self.amb.clone(),
            w11: self.w11.axpy(z, &o.w11)?,
            w12: self.w12.axpy(z, &o.w12)?,
            w21: self.w21.axpy(z, &o.w21)?,
            w22: self.w22.axpy(z, &o.w22)?,
        })
    }

    pub fn scale(&self, z: C64) -> VElement {
        VElement {
            amb: self.amb.clone(),
            w11: self.w11.scale(z),
            w12: self.w12.scale(z),
            w21: self.w21.scale(z),
            w22: self.w22.scale(z),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks().iter().map(|w| w.max_abs()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }

    /// Largest deviation over tracked components of the four blocks.
    pub fn dist(&self, o: &VElement) -> f64 {
        self.blocks().iter().zip(o.blocks()).map(|(a, b)| a.dist(b)).fold(0.0, f64::max)
    }

    /// Ordinary product with `v² = θ` and `ω v ω' = 0`.
    pub fn v_product(&self, o: &VElement) -> Result<VElement> {
        self.same_ambient(o)?;
        let amb = &self.amb;
        let th = amb.theta();
        let a12t = amb.wedge(&self.w12, th)?;
        let a22t = amb.wedge(&self.w22, th)?;
        let w11 = amb.wedge(&self.w11, &o.w11)?.add(&amb.wedge(&a12t, &o.w21)?)?;
        let w12 = amb.wedge(&self.w11, &o.w12)?.add(&amb.wedge(&a12t, &o.w22)?)?;
        let w21 = amb.wedge(&self.w21, &o.w11)?.add(&amb.wedge(&a22t, &o.w21)?)?;
        let w22 = amb.wedge(&self.w21, &o.w12)?.add(&amb.wedge(&a22t, &o.w22)?)?;
        Ok(VElement { amb: amb.clone(), w11, w12, w21, w22 })
    }

    /// `v·α`.
    pub fn v_left(&self) -> Result<VElement> {
        let amb = &self.amb;
        let th = amb.theta();
        Ok(VElement {
            amb: amb.clone(),
            w11: amb.wedge(th, &self.w21)?,
            w12: amb.wedge(th, &self.w22)?,
            w21: self.w11.clone(),
            w22: self.w12.clone(),
        })
    }

    /// `α·v`.
    pub fn v_right(&self) -> Result<VElement> {
        let amb = &self.amb;
        let th = amb.theta();
        Ok(VElement {
            amb: amb.clone(),
            w11: amb.wedge(&self.w12, th)?,
            w12: self.w11.clone(),
            w21: amb.wedge(&self.w22, th)?,
            w22: self.w21.clone(),
        })
    }

    /// The differential `dω = δω + vω + (−1)^{|ω|} ωv`, `dv = 0`, extended as a graded derivation.
    pub fn v_differential(&self) -> Result<VElement> {
        let amb = &self.amb;
        let th = amb.theta();
        let (a11, a12, a21, a22) = (&self.w11, &self.w12, &self.w21, &self.w22);
        let w11 = amb
            .delta(a11)?
            .add(&amb.wedge(&a12.parity_op(), th)?)?
            .sub(&amb.wedge(th, a21)?)?;
        let w12 = a11.parity_op().add(&amb.delta(a12)?)?.sub(&amb.wedge(th, a22)?)?;
        let w21 = a11.sub(&amb.delta(a21)?)?.sub(&amb.wedge(&a22.parity_op(), th)?)?;
        let w22 = a12.sub(&a21.parity_op())?.sub(&amb.delta(a22)?)?;
        Ok(VElement { amb: amb.clone(), w11, w12, w21, w22 })
    }

    /// `α ⊙ β = αβ − dα dβ` on even elements.
    pub fn fedosov_product(&self, o: &VElement) -> Result<VElement> {
        for x in [self, o] {
            if x.parity() != Some(Parity::Even) {
                return Err(Error::Parity("the Fedosov product needs even elements".into()));
            }
        }
        let ab = self.v_product(o)?;
        let dd = self.v_differential()?.v_product(&o.v_differential()?)?;
        ab.sub(&dd)
    }

    /// Every block lies in `ℳ₀`: degree-`n` components of order `≤ n`.
    pub fn in_m(&self) -> bool {
        self.blocks().iter().all(|w| w.in_m0())
    }

    /// Every block lies in `ℛ₀`.
    pub fn in_r(&self) -> bool {
        self.blocks().iter().all(|w| w.in_r0())
    }

    /// Even element whose `ω₁₁` has no degree-zero part.
    pub fn in_n(&self) -> bool {
        self.parity() == Some(Parity::Even) && self.w11.comp(0).is_none_or(|s| s.max_abs() == 0.0)
    }

    /// Form that the traces integrate: `ω₁₁ − ω₂₂θ`.
    pub fn trace_form(&self) -> Result<FormSymbol> {
        self.w11.sub(&self.amb.wedge(&self.w22, self.amb.theta())?)
    }
}

/// `λ + μv + α`: adjoined unit and bare generator over [`VElement`].
#[derive(Clone, Debug)]
pub struct UElement {
    pub lambda: C64,
    pub mu: C64,
    pub body: VElement,
}

impl UElement {
    pub fn one(amb: &Arc<Ambient>) -> Self {
        UElement { lambda: cr(1.0), mu: cr(0.0), body: VElement::zero(amb) }
    }

    pub fn v(amb: &Arc<Ambient>) -> Self {
        UElement { lambda: cr(0.0), mu: cr(1.0), body: VElement::zero(amb) }
    }

    pub fn from_body(body: VElement) -> Self {
        UElement { lambda: cr(0.0), mu: cr(0.0), body }
    }

    pub fn scalar(amb: &Arc<Ambient>, z: C64) -> Self {
        UElement { lambda: z, mu: cr(0.0), body: VElement::zero(amb) }
    }

    pub fn ambient(&self) -> &Arc<Ambient> {
        self.body.ambient()
    }

    pub fn add(&self, o: &UElement) -> Result<UElement> {
        Ok(UElement { lambda: self.lambda + o.lambda, mu: self.mu + o.mu, body: self.body.add(&o.body)? })
    }

    pub fn sub(&self, o: &UElement) -> Result<UElement> {
        Ok(UElement { lambda: self.lambda - o.lambda, mu: self.mu - o.mu, body: self.body.sub(&o.body)? })
    }

    pub fn scale(&self, z: C64) -> UElement {
        UElement { lambda: self.lambda * z, mu: self.mu * z, body: self.body.scale(z) }
    }

    pub fn parity(&self) -> Option<Parity> {
        let body = self.body.parity();
        match (self.lambda != cr(0.0), self.mu != cr(0.0)) {
            (true, true) => None,
            (true, false) => body.filter(|p| *p == Parity::Even || self.body.is_zero()).map(|_| Parity::Even),
            (false, true) => body.filter(|p| *p == Parity::Odd || self.body.is_zero()).map(|_| Parity::Odd),
            (false, false) => body,
        }
    }

    pub fn product(&self, o: &UElement) -> Result<UElement> {
        let amb = self.ambient().clone();
        let th = VElement::from_form(&amb, amb.theta().clone());
        let mut body = self.body.v_product(&o.body)?;
        body = body.axpy(self.lambda, &o.body)?.axpy(o.lambda, &self.body)?;
        body = body.axpy(self.mu, &o.body.v_left()?)?;
        body = body.axpy(o.mu, &self.body.v_right()?)?;
        body = body.axpy(self.mu * o.mu, &th)?;
        Ok(UElement { lambda: self.lambda * o.lambda, mu: self.lambda * o.mu + self.mu * o.lambda, body })
    }

    pub fn differential(&self) -> Result<UElement> {
        Ok(UElement::from_body(self.body.v_differential()?))
    }

    pub fn fedosov_product(&self, o: &UElement) -> Result<UElement> {
        for x in [self, o] {
            if x.parity() != Some(Parity::Even) {
                return Err(Error::Parity("the Fedosov product needs even elements".into()));
            }
        }
        self.product(o)?.sub(&self.differential()?.product(&o.differential()?)?)
    }

    pub fn dist(&self, o: &UElement) -> f64 {
        (self.lambda - o.lambda).norm().max((self.mu - o.mu).norm()).max(self.body.dist(&o.body))
    }
}

/// `m!/(2m)!` for a cycle of dimension `2m`.
pub fn cycle_factor(cycle: &Cycle) -> f64 {
    let m = cycle.dim() / 2;
    let num: f64 = (1..=m).map(|i| i as f64).product();
    let den: f64 = (1..=2 * m).map(|i| i as f64).product();
    num / den
}

fn cycle_mask(cycle: &Cycle) -> Mask {
    match cycle {
        Cycle::Point(_) => 0,
        Cycle::Torus2 => 0b11,
    }
}

fn check_cycle(amb: &Ambient, cycle: &Cycle) -> Result<()> {
    match cycle {
        Cycle::Point(b) if b.len() == amb.dim() => Ok(()),
        Cycle::Point(b) => Err(Error::Rank(b.len(), amb.dim())),
        Cycle::Torus2 if amb.dim() == 2 => Ok(()),
        Cycle::Torus2 => Err(Error::Degree(format!("[T²] in a base of dimension {}", amb.dim()))),
    }
}

/// `(m!/(2m)!) ∫_C F(ω₁₁ − ω₂₂θ)` for a fiberwise functional `F`.
pub fn integrate_trace_form(
    a: &VElement,
    cycle: &Cycle,
    functional: impl Fn(&PolyhomSymbol) -> Result<TrigPoly>,
) -> Result<C64> {
    check_cycle(&a.amb, cycle)?;
    let f = a.trace_form()?;
    Ok(integrate_over_cycle(&f, cycle, functional)? * cycle_factor(cycle))
}

/// `τ`: requires the contributing component to be trace class on the fiber (order `< −1`).
pub fn trace_tau(a: &VElement, cycle: &Cycle) -> Result<C64> {
    let f = a.trace_form()?;
    if let Some(s) = f.comp(cycle_mask(cycle)) {
        if s.max_abs() > 0.0 && s.order() >= -1 {
            return Err(Error::NotTraceClass(s.order()));
        }
    }
    integrate_trace_form(a, cycle, |s| Ok(zeta_finite_part(s)?.finite_part))
}

/// `τ_R`: zeta-renormalized extension of `τ`.
pub fn trace_tau_r(a: &VElement, cycle: &Cycle) -> Result<C64> {
    integrate_trace_form(a, cycle, |s| Ok(zeta_finite_part(s)?.finite_part))
}

/// Another extension of `τ`: `τ_R − log_scale·res + Σ w_k·(degree-k coefficient)` over degrees `k ≥ −1`.
///
/// `log_scale = ln λ` is the effect of regularizing with `(λD)^{−z}`; both shifts vanish on trace-class symbols.
#[derive(Clone, Debug, Default)]
pub struct RenormShift {
    pub log_scale: f64,
    pub weights: Vec<(i32, C64)>,
}

pub fn trace_tau_r_shifted(a: &VElement, cycle: &Cycle, shift: &RenormShift) -> Result<C64> {
    Ok(trace_tau_r(a, cycle)? + renorm_shift_delta(a, cycle, shift)?)
}

/// `τ_R' − τ_R` for the shifted extension; reads only tracked homogeneous components.
pub fn renorm_shift_delta(a: &VElement, cycle: &Cycle, shift: &RenormShift) -> Result<C64> {
    if let Some((k, _)) = shift.weights.iter().find(|(k, _)| *k < -1) {
        return Err(Error::Degree(format!("shift weight at trace-class degree {k}")));
    }
    let mut terms: Vec<(i32, C64)> = shift.weights.clone();
    terms.push((-1, cr(-shift.log_scale)));
    integrate_trace_form(a, cycle, |s| {
        let mut f = TrigPoly::zero(s.rank() - 1, 1);
        for (k, w) in &terms {
            if *k > s.order() || *w == cr(0.0) {
                continue;
            }
            let c = s.comp_at_degree(*k).ok_or(Error::UntrackedPole(*k))?;
            f = f.add(&c.plus.add(&c.minus).last_average().trace().scale(*w));
        }
        Ok(f)
    })
}

/// `∫_C` of the fiberwise residue of a form (no `m!/(2m)!` factor).
pub fn residue_integral(x: &FormSymbol, cycle: &Cycle) -> Result<C64> {
    integrate_over_cycle(x, cycle, wodzicki_residue)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trigpoly::c;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn torus_amb() -> Arc<Ambient> {
        let a1 = TrigPoly::from_terms(3, &[(vec![0, 0, 1], cr(0.1)), (vec![0, 0, -1], cr(0.1))]);
        let a2 = TrigPoly::from_terms(
            3,
            &[(vec![1, 0, 0], cr(0.5)), (vec![-1, 0, 0], cr(0.5)), (vec![0, 0, 1], c(0.0, -0.15)), (vec![0, 0, -1], c(0.0, 0.15))],
        );
        Ambient::new(ConnectionSpec::new(2, vec![a1, a2]).unwrap(), 1, 4).unwrap()
    }

    fn rand_poly(rng: &mut ChaCha8Rng, rank: usize) -> TrigPoly {
        let mut terms = vec![];
        for _ in 0..2 {
            let f: Vec<i32> = (0..rank).map(|_| rng.random_range(-1..=1)).collect();
            terms.push((f, c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))));
        }
        TrigPoly::from_terms(rank, &terms)
    }

    fn rand_sym(rng: &mut ChaCha8Rng, rank: usize) -> PolyhomSymbol {
        if rng.random_bool(0.3) {
            PolyhomSymbol::vector_field(rand_poly(rng, rank))
        } else {
            PolyhomSymbol::multiplication(rand_poly(rng, rank))
        }
    }

    fn rand_form(rng: &mut ChaCha8Rng, amb: &Arc<Ambient>, parity: usize) -> FormSymbol {
        let mut f = amb.zero_form();
        for m in 0..(1u8 << amb.dim()) {
            if mask_degree(m) % 2 == parity {
                f = f.add(&amb.form(m, rand_sym(rng, amb.rank()))).unwrap();
            }
        }
        f
    }

    fn rand_elem(rng: &mut ChaCha8Rng, amb: &Arc<Ambient>, p: usize) -> VElement {
        VElement::from_blocks(
            amb,
            [rand_form(rng, amb, p), rand_form(rng, amb, 1 - p), rand_form(rng, amb, 1 - p), rand_form(rng, amb, p)],
        )
    }

    #[derive(Clone, Debug)]
    enum Tok {
        W(FormSymbol),
        V,
    }

    /// Reduces a word by `vv → θ`, merging adjacent forms, and `ω v ω' → 0`.
    fn reduce(amb: &Arc<Ambient>, word: Vec<Tok>) -> Option<(usize, FormSymbol, usize)> {
        let mut w: Vec<Tok> = vec![];
        for t in word {
            w.push(t);
            loop {
                let n = w.len();
                if n >= 2 {
                    match (&w[n - 2], &w[n - 1]) {
                        (Tok::V, Tok::V) => {
                            w.truncate(n - 2);
                            w.push(Tok::W(amb.theta().clone()));
                            continue;
                        }
                        (Tok::W(a), Tok::W(b)) => {
                            let p = a.wedge(b, amb.depth()).unwrap();
                            w.truncate(n - 2);
                            w.push(Tok::W(p));
                            continue;
                        }
                        _ => {}
                    }
                }
                break;
            }
        }
        let lead_v = matches!(w.first(), Some(Tok::V));
        let trail_v = matches!(w.last(), Some(Tok::V));
        let forms: Vec<&FormSymbol> = w.iter().filter_map(|t| if let Tok::W(f) = t { Some(f) } else { None }).collect();
        if forms.len() != 1 {
            return None;
        }
        Some((lead_v as usize, forms[0].clone(), trail_v as usize))
    }

    fn words(a: &VElement) -> Vec<(Vec<Tok>, usize, usize)> {
        vec![
            (vec![Tok::W(a.w11.clone())], 0, 0),
            (vec![Tok::W(a.w12.clone()), Tok::V], 0, 1),
            (vec![Tok::V, Tok::W(a.w21.clone())], 1, 0),
            (vec![Tok::V, Tok::W(a.w22.clone()), Tok::V], 1, 1),
        ]
    }

    fn rewrite_product(a: &VElement, b: &VElement) -> VElement {
        let amb = a.ambient();
        let mut out = VElement::zero(amb);
        for (wa, _, _) in words(a) {
            for (wb, _, _) in words(b) {
                let word: Vec<Tok> = wa.iter().cloned().chain(wb.iter().cloned()).collect();
                if let Some((l, f, r)) = reduce(amb, word) {
                    let slot = match (l, r) {
                        (0, 0) => &mut out.w11,
                        (0, 1) => &mut out.w12,
                        (1, 0) => &mut out.w21,
                        _ => &mut out.w22,
                    };
                    *slot = slot.add(&f).unwrap();
                }
            }
        }
        out
    }

    #[test]
    fn product_rules_match_rewriting() {
        let amb = torus_amb();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..4 {
            let a = rand_elem(&mut rng, &amb, 0);
            let b = rand_elem(&mut rng, &amb, 1);
            let d = a.v_product(&b).unwrap().dist(&rewrite_product(&a, &b));
            assert!(d < 1e-12, "{d}");
        }
    }

    #[test]
    fn product_with_zero_and_v_rules() {
        let amb = torus_amb();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = rand_elem(&mut rng, &amb, 0);
        assert!(a.v_product(&VElement::zero(&amb)).unwrap().is_zero());
        let w = rand_form(&mut rng, &amb, 0);
        let w2 = rand_form(&mut rng, &amb, 0);
        let left = VElement::from_blocks(&amb, [amb.zero_form(), amb.zero_form(), w.clone(), amb.zero_form()]);
        let right = VElement::from_blocks(&amb, [amb.zero_form(), w2.clone(), amb.zero_form(), amb.zero_form()]);
        let p = left.v_product(&right).unwrap();
        assert!(p.w22.dist(&w.wedge(&w2, 4).unwrap()) < 1e-14);
        assert!(p.w11.is_zero() && p.w12.is_zero() && p.w21.is_zero());
    }

    #[test]
    fn differential_squares_to_zero_and_kills_v() {
        let amb = torus_amb();
        assert!(UElement::v(&amb).differential().unwrap().body.is_zero());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in [0, 1] {
            let a = rand_elem(&mut rng, &amb, p);
            let dd = a.v_differential().unwrap().v_differential().unwrap();
            assert!(dd.max_abs() < 1e-10, "{}", dd.max_abs());
        }
    }

    #[test]
    fn flat_differential_of_function() {
        let amb = Ambient::new(ConnectionSpec::flat(2), 1, 2).unwrap();
        let f = TrigPoly::from_terms(3, &[(vec![0, 0, 1], cr(1.0))]);
        let w = VElement::from_symbol(&amb, PolyhomSymbol::multiplication(f.clone()));
        let d = w.v_differential().unwrap();
        assert!(d.w11.is_zero() && d.w22.is_zero());
        assert!(d.w12.dist(&w.w11) < 1e-15 && d.w21.dist(&w.w11) < 1e-15);
    }

    #[test]
    fn leibniz_rule() {
        let amb = torus_amb();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = rand_elem(&mut rng, &amb, 1);
        let b = rand_elem(&mut rng, &amb, 0);
        let lhs = a.v_product(&b).unwrap().v_differential().unwrap();
        let rhs = a
            .v_differential()
            .unwrap()
            .v_product(&b)
            .unwrap()
            .sub(&a.v_product(&b.v_differential().unwrap()).unwrap())
            .unwrap();
        assert!(lhs.dist(&rhs) < 1e-10);
    }

    #[test]
    fn fedosov_associative_and_parity_checked() {
        let amb = torus_amb();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (a, b, c) = (rand_elem(&mut rng, &amb, 0), rand_elem(&mut rng, &amb, 0), rand_elem(&mut rng, &amb, 0));
        let l = a.fedosov_product(&b).unwrap().fedosov_product(&c).unwrap();
        let r = a.fedosov_product(&b.fedosov_product(&c).unwrap()).unwrap();
        assert!(l.dist(&r) < 1e-9);
        let odd = rand_elem(&mut rng, &amb, 1);
        assert!(matches!(a.fedosov_product(&odd).unwrap_err(), Error::Parity(_)));
        let other = torus_amb();
        assert_eq!(a.v_product(&VElement::zero(&other)).unwrap_err(), Error::ThetaMismatch);
    }

    #[test]
    fn nilpotent_pattern() {
        let amb = torus_amb();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut a = rand_elem(&mut rng, &amb, 0);
        a.w11 = a.w11.degree_part(2);
        assert!(a.in_n());
        let mut p = a.clone();
        for _ in 0..3 {
            p = p.fedosov_product(&a).unwrap();
        }
        assert!(p.is_zero());
    }

    #[test]
    fn renormalized_trace_point_values() {
        let amb = Ambient::point(1, 2);
        let one = VElement::from_symbol(&amb, PolyhomSymbol::identity(1, 1));
        assert!(trace_tau_r(&one, &Cycle::Point(vec![])).unwrap().norm() < 1e-14);
        let d = VElement::from_symbol(&amb, PolyhomSymbol::dspec(1, 1));
        assert!((trace_tau_r(&d, &Cycle::Point(vec![])).unwrap() - cr(5.0 / 6.0)).norm() < 1e-12);
        assert_eq!(trace_tau(&one, &Cycle::Point(vec![])).unwrap_err(), Error::NotTraceClass(0));
        let d2 = VElement::from_symbol(&amb, PolyhomSymbol::dspec_pow(1, 1, -2));
        let t = trace_tau(&d2, &Cycle::Point(vec![])).unwrap();
        let expect = 1.0 + std::f64::consts::PI.powi(2) / 3.0;
        assert!((t - cr(expect)).norm() < 1e-12);
        assert!((trace_tau_r(&d2, &Cycle::Point(vec![])).unwrap() - t).norm() < 1e-14);
    }

    #[test]
    fn unit_product_rules() {
        let amb = torus_amb();
        let v = UElement::v(&amb);
        let vv = v.product(&v).unwrap();
        assert!(vv.body.w11.dist(amb.theta()) < 1e-15 && vv.mu == cr(0.0));
        let one = UElement::one(&amb);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = UElement::from_body(rand_elem(&mut rng, &amb, 0));
        assert!(one.fedosov_product(&a).unwrap().dist(&a) < 1e-15);
        let left = v.product(&a).unwrap();
        assert!(left.body.dist(&a.body.v_left().unwrap()) < 1e-15);
    }
}
