//! Differential forms on a torus base with symbol coefficients, and the fibration connection.

use std::collections::BTreeMap;

use crate::constants::TWO_PI;
use crate::error::{Error, Result};
use crate::symbol::{log_commutator, PolyhomSymbol};
use crate::trigpoly::{cr, TrigPoly, C64};

/// Multi-index `I ⊆ {0..dim}` as a bit mask.
pub type Mask = u8;

pub fn mask_degree(m: Mask) -> usize {
    m.count_ones() as usize
}

/// Sign of `db^I ∧ db^J` relative to `db^{I∪J}` (zero when the indices overlap).
pub fn wedge_sign(i: Mask, j: Mask) -> i32 {
    if i & j != 0 {
        return 0;
    }
    let mut inversions = 0;
    for a in 0..8 {
        if i & (1 << a) != 0 {
            inversions += (j & ((1u8 << a) - 1)).count_ones();
        }
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

/// `Σ_I ω_I db^I` with symbol coefficients.
///
/// The coefficient polynomials have `rank` variables. When `rank = dim + 1` the
/// leading variables are the base coordinates and `d_B` is available; fiber-only
/// coefficients (`rank = 1`) describe forms at a single base point.
#[derive(Clone, Debug)]
pub struct FormSymbol {
    dim: usize,
    rank: usize,
    k: usize,
    comps: BTreeMap<Mask, PolyhomSymbol>,
}

impl FormSymbol {
    pub fn zero(dim: usize, rank: usize, k: usize) -> Self {
        assert!(dim <= 2, "base dimension above 2 is not supported");
        FormSymbol { dim, rank, k, comps: BTreeMap::new() }
    }

    /// Degree-zero form.
    pub fn function(dim: usize, s: PolyhomSymbol) -> Self {
        FormSymbol::monomial(dim, 0, s)
    }

    pub fn monomial(dim: usize, mask: Mask, s: PolyhomSymbol) -> Self {
        let mut f = FormSymbol::zero(dim, s.rank(), s.matrix_size());
        assert!((mask as usize) < (1 << dim));
        f.comps.insert(mask, s);
        f
    }

    /// `Σ_i s_i db^i`.
    pub fn one_form(dim: usize, coeffs: Vec<PolyhomSymbol>) -> Self {
        assert_eq!(coeffs.len(), dim);
        let mut f = FormSymbol::zero(dim, coeffs[0].rank(), coeffs[0].matrix_size());
        for (i, c) in coeffs.into_iter().enumerate() {
            f.comps.insert(1 << i, c);
        }
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix_size(&self) -> usize {
        self.k
    }

    pub fn comps(&self) -> &BTreeMap<Mask, PolyhomSymbol> {
        &self.comps
    }

    pub fn comp(&self, mask: Mask) -> Option<&PolyhomSymbol> {
        self.comps.get(&mask)
    }

    pub fn top_mask(&self) -> Mask {
        ((1u16 << self.dim) - 1) as Mask
    }

    pub fn is_zero(&self) -> bool {
        self.comps.values().all(|s| s.max_abs() == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.values().map(|s| s.max_abs()).fold(0.0, f64::max)
    }

    /// Parities of the nonzero components (`None` for the zero form).
    pub fn parity(&self) -> Option<usize> {
        let ps: Vec<usize> = self.comps.keys().map(|m| mask_degree(*m) % 2).collect();
        match ps.first() {
            Some(p) if ps.iter().all(|q| q == p) => Some(*p),
            _ => None,
        }
    }

    fn check(&self, o: &FormSymbol) -> Result<()> {
        if self.dim != o.dim || self.rank != o.rank {
            return Err(Error::Rank(self.rank, o.rank));
        }
        if self.k != o.k {
            return Err(Error::MatrixSize(self.k, o.k));
        }
        Ok(())
    }

    pub fn add(&self, o: &FormSymbol) -> Result<FormSymbol> {
        self.axpy(cr(1.0), o)
    }

    pub fn sub(&self, o: &FormSymbol) -> Result<FormSymbol> {
        self.axpy(cr(-1.0), o)
    }

    /// `self + z·o`.
    pub fn axpy(&self, z: C64, o: &FormSymbol) -> Result<FormSymbol> {
        self.check(o)?;
        let mut out = self.clone();
        for (m, s) in &o.comps {
            let v = match out.comps.get(m) {
                Some(t) => t.lin_comb(&[(cr(1.0), t), (z, s)])?,
                None => s.scale(z),
            };
            out.comps.insert(*m, v);
        }
        Ok(out)
    }

    pub fn scale(&self, z: C64) -> FormSymbol {
        let mut out = self.clone();
        for s in out.comps.values_mut() {
            *s = s.scale(z);
        }
        out
    }

    /// `Σ_I (−1)^{|I|} ω_I db^I`.
    pub fn parity_op(&self) -> FormSymbol {
        let mut out = self.clone();
        for (m, s) in out.comps.iter_mut() {
            if mask_degree(*m) % 2 == 1 {
                *s = s.neg();
            }
        }
        out
    }

    pub fn degree_part(&self, deg: usize) -> FormSymbol {
        let mut out = FormSymbol::zero(self.dim, self.rank, self.k);
        for (m, s) in &self.comps {
            if mask_degree(*m) == deg {
                out.comps.insert(*m, s.clone());
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(&PolyhomSymbol) -> Result<PolyhomSymbol>) -> Result<FormSymbol> {
        let mut out = FormSymbol::zero(self.dim, self.rank, self.k);
        for (m, s) in &self.comps {
            let v = f(s)?;
            out.rank = v.rank();
            out.comps.insert(*m, v);
        }
        Ok(out)
    }

    /// Wedge product; coefficients compose as operators (forms are central).
    pub fn wedge(&self, o: &FormSymbol, j: usize) -> Result<FormSymbol> {
        self.check(o)?;
        let mut out = FormSymbol::zero(self.dim, self.rank, self.k);
        for (mi, a) in &self.comps {
            for (mj, b) in &o.comps {
                let sgn = wedge_sign(*mi, *mj);
                if sgn == 0 {
                    continue;
                }
                let c = PolyhomSymbol::compose_auto(a, b, j)?;
                let c = if sgn < 0 { c.neg() } else { c };
                let m = mi | mj;
                let v = match out.comps.get(&m) {
                    Some(t) => t.add(&c)?,
                    None => c,
                };
                out.comps.insert(m, v);
            }
        }
        Ok(out)
    }

    /// Graded commutator `xy − (−1)^{|x||y|} yx` for forms of pure parity.
    pub fn graded_commutator(&self, o: &FormSymbol, j: usize) -> Result<FormSymbol> {
        let xy = self.wedge(o, j)?;
        let yx = o.wedge(self, j)?;
        let both_odd = self.parity() == Some(1) && o.parity() == Some(1);
        if both_odd {
            xy.add(&yx)
        } else {
            xy.sub(&yx)
        }
    }

    /// Exterior derivative in the base variables.
    pub fn d_base(&self) -> Result<FormSymbol> {
        if self.rank != self.dim + 1 {
            return Err(Error::Invalid("d_B needs base variables in the coefficients".into()));
        }
        let mut out = FormSymbol::zero(self.dim, self.rank, self.k);
        for (m, s) in &self.comps {
            for i in 0..self.dim {
                let bit = 1u8 << i;
                let sgn = wedge_sign(bit, *m);
                if sgn == 0 {
                    continue;
                }
                let ds = s.diff_base(i);
                let ds = if sgn < 0 { ds.neg() } else { ds };
                let key = m | bit;
                let v = match out.comps.get(&key) {
                    Some(t) => t.add(&ds)?,
                    None => ds,
                };
                out.comps.insert(key, v);
            }
        }
        Ok(out)
    }

    /// `ℳ₀` membership: every degree-`n` component has order `≤ n`.
    pub fn in_m0(&self) -> bool {
        self.comps.iter().all(|(m, s)| s.max_abs() == 0.0 || s.order() <= mask_degree(*m) as i32)
    }

    /// `ℛ₀` membership: every degree-`n` component has order `≤ n − 1`.
    pub fn in_r0(&self) -> bool {
        self.comps.iter().all(|(m, s)| s.max_abs() == 0.0 || s.order() < mask_degree(*m) as i32)
    }

    pub fn at_base(&self, point: &[f64]) -> FormSymbol {
        let mut out = FormSymbol::zero(self.dim, 1, self.k);
        for (m, s) in &self.comps {
            out.comps.insert(*m, s.at_base(point));
        }
        out
    }

    pub fn dist(&self, o: &FormSymbol) -> f64 {
        let mut m: f64 = 0.0;
        for key in self.comps.keys().chain(o.comps.keys()) {
            let d = match (self.comps.get(key), o.comps.get(key)) {
                (Some(a), Some(b)) => a.tracked_dist(b),
                (Some(a), None) | (None, Some(a)) => a.max_abs(),
                _ => 0.0,
            };
            m = m.max(d);
        }
        m
    }
}

/// Integration cycle in the base.
#[derive(Clone, Debug, PartialEq)]
pub enum Cycle {
    Point(Vec<f64>),
    Torus2,
}

impl Cycle {
    pub fn dim(&self) -> usize {
        match self {
            Cycle::Point(_) => 0,
            Cycle::Torus2 => 2,
        }
    }
}

/// Integrates a scalar base function over a cycle; a `T²` integral is `(2π)²` times the mean.
pub fn integrate_function(f: &TrigPoly, cycle: &Cycle) -> Result<C64> {
    match cycle {
        Cycle::Point(b) => {
            if b.len() != f.rank() {
                return Err(Error::Rank(b.len(), f.rank()));
            }
            Ok(f.eval(b)[(0, 0)])
        }
        Cycle::Torus2 => {
            if f.rank() != 2 {
                return Err(Error::Rank(f.rank(), 2));
            }
            Ok(f.mean_scalar() * TWO_PI * TWO_PI)
        }
    }
}

/// `∫_C F(ω_top)` where `F` maps a coefficient symbol to a scalar base function
/// (a fiber trace, finite part or residue).
pub fn integrate_over_cycle(
    x: &FormSymbol,
    cycle: &Cycle,
    functional: impl Fn(&PolyhomSymbol) -> Result<TrigPoly>,
) -> Result<C64> {
    if cycle.dim() > x.dim() {
        return Err(Error::Degree(format!("cycle of dimension {} in a base of dimension {}", cycle.dim(), x.dim())));
    }
    let mask: Mask = match cycle {
        Cycle::Point(_) => 0,
        Cycle::Torus2 => 0b11,
    };
    match x.comp(mask) {
        None => Ok(cr(0.0)),
        Some(s) => integrate_function(&functional(s)?, cycle),
    }
}

/// Vertical connection `∇ = d_B + Σ_i db^i A_i(b,x)∂_x` on `T^b × S¹`.
#[derive(Clone, Debug)]
pub struct ConnectionSpec {
    pub dim: usize,
    /// Scalar coefficients `A_i` with `dim + 1` variables.
    pub a: Vec<TrigPoly>,
    pub real: bool,
}

impl ConnectionSpec {
    pub fn new(dim: usize, a: Vec<TrigPoly>) -> Result<Self> {
        if a.len() != dim {
            return Err(Error::Arity { expected: dim, got: a.len() });
        }
        for f in &a {
            if f.rank() != dim + 1 {
                return Err(Error::Rank(f.rank(), dim + 1));
            }
            if f.matrix_size() != 1 {
                return Err(Error::MatrixSize(f.matrix_size(), 1));
            }
        }
        let real = a.iter().all(|f| f.dist(&f.adjoint()) < 1e-14);
        Ok(ConnectionSpec { dim, a, real })
    }

    pub fn flat(dim: usize) -> Self {
        ConnectionSpec { dim, a: (0..dim).map(|_| TrigPoly::zero(dim + 1, 1)).collect(), real: true }
    }

    fn lift(&self, f: &TrigPoly, k: usize) -> TrigPoly {
        f.lift_scalar(k)
    }

    /// Symbol `A_i(b,x)(iξ)` of the vertical field in direction `i`.
    pub fn field(&self, i: usize, k: usize) -> PolyhomSymbol {
        PolyhomSymbol::vector_field(self.lift(&self.a[i], k))
    }

    pub fn form(&self, k: usize) -> FormSymbol {
        if self.dim == 0 {
            return FormSymbol::zero(0, 1, k);
        }
        FormSymbol::one_form(self.dim, (0..self.dim).map(|i| self.field(i, k)).collect())
    }

    /// `θ = dA + A∧A`.
    pub fn curvature(&self, k: usize) -> Result<FormSymbol> {
        if self.dim == 0 {
            return Ok(FormSymbol::zero(0, 1, k));
        }
        let a = self.form(k);
        a.d_base()?.add(&a.wedge(&a, 4)?)
    }

    /// `δx = d_B x + [A, x]` (graded commutator).
    pub fn delta(&self, x: &FormSymbol, j: usize) -> Result<FormSymbol> {
        if self.dim == 0 {
            return Ok(FormSymbol::zero(0, x.rank(), x.matrix_size()));
        }
        let a = self.form(x.matrix_size());
        let mut out = x.d_base()?;
        for deg in 0..=x.dim() {
            let part = x.degree_part(deg);
            if part.comps.is_empty() {
                continue;
            }
            out = out.add(&a.graded_commutator(&part, j)?)?;
        }
        Ok(out)
    }

    /// `δ ln D = −Σ_i db^i [ln D, A_i(iξ)]`, with `j_out` tracked components.
    pub fn delta_log_d(&self, k: usize, j_out: usize) -> Result<FormSymbol> {
        if self.dim == 0 {
            return Ok(FormSymbol::zero(0, 1, k));
        }
        let coeffs = (0..self.dim)
            .map(|i| log_commutator(&self.field(i, k), j_out).map(|s| s.neg()))
            .collect::<Result<Vec<_>>>()?;
        Ok(FormSymbol::one_form(self.dim, coeffs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(rank: usize, terms: &[(Vec<i32>, f64)]) -> TrigPoly {
        let t: Vec<(Vec<i32>, C64)> = terms.iter().map(|(f, v)| (f.clone(), cr(*v))).collect();
        TrigPoly::from_terms(rank, &t)
    }

    #[test]
    fn torus_volume() {
        let one = PolyhomSymbol::identity(3, 1);
        let vol = FormSymbol::monomial(2, 0b11, one);
        let v = integrate_over_cycle(&vol, &Cycle::Torus2, |s| Ok(s.zero_mode().unwrap().last_average())).unwrap();
        assert!((v - cr(TWO_PI * TWO_PI)).norm() < 1e-12);
    }

    #[test]
    fn scalar_one_forms_anticommute() {
        let f = PolyhomSymbol::multiplication(sc(3, &[(vec![1, 0, 0], 1.0)]));
        let g = PolyhomSymbol::multiplication(sc(3, &[(vec![0, 1, 0], 2.0)]));
        let x = FormSymbol::one_form(2, vec![f.clone(), g.clone()]);
        let y = FormSymbol::one_form(2, vec![g, f]);
        let s = x.wedge(&y, 2).unwrap().add(&y.wedge(&x, 2).unwrap()).unwrap();
        assert!(s.max_abs() < 1e-15);
        assert!(x.wedge(&FormSymbol::zero(2, 3, 1), 2).unwrap().is_zero());
    }

    #[test]
    fn curvature_examples() {
        assert!(ConnectionSpec::flat(2).curvature(1).unwrap().is_zero());
        let c = ConnectionSpec::new(2, vec![sc(3, &[(vec![0, 0, 0], 0.7)]), TrigPoly::zero(3, 1)]).unwrap();
        assert!(c.curvature(1).unwrap().is_zero());
        let cosb = sc(3, &[(vec![1, 0, 0], 0.5), (vec![-1, 0, 0], 0.5)]);
        let c = ConnectionSpec::new(2, vec![TrigPoly::zero(3, 1), cosb]).unwrap();
        let th = c.curvature(1).unwrap();
        let expect = PolyhomSymbol::vector_field(TrigPoly::from_terms(
            3,
            &[(vec![1, 0, 0], crate::trigpoly::c(0.0, 0.5)), (vec![-1, 0, 0], crate::trigpoly::c(0.0, -0.5))],
        ));
        assert!(th.comp(0b11).unwrap().tracked_dist(&expect) < 1e-15);
    }

    #[test]
    fn d_squared_vanishes() {
        let f = sc(3, &[(vec![1, 2, 1], 1.0), (vec![-1, 1, 0], 0.5)]);
        let x = FormSymbol::function(2, PolyhomSymbol::multiplication(f));
        let dd = x.d_base().unwrap().d_base().unwrap();
        assert!(dd.max_abs() < 1e-14);
    }

    #[test]
    fn delta_of_constant_without_connection() {
        let one = FormSymbol::function(2, PolyhomSymbol::identity(3, 1));
        assert!(ConnectionSpec::flat(2).delta(&one, 2).unwrap().is_zero());
    }

    #[test]
    fn delta_log_d_constant_field_vanishes() {
        let c = ConnectionSpec::new(2, vec![sc(3, &[(vec![0, 0, 0], 0.7)]), TrigPoly::zero(3, 1)]).unwrap();
        assert!(c.delta_log_d(1, 4).unwrap().max_abs() < 1e-15);
    }
}
