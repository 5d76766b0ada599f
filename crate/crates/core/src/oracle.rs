//! Brute-force ground truth from Fourier-mode truncations.

use rayon::prelude::*;

use crate::constants::{TWO_PI, WINDING_GRID};
use crate::error::{Error, Result};
use crate::symbol::{parametrix, ExactEval, PolyhomSymbol};
use crate::trigpoly::{cr, CMat, TrigPoly, C64};

/// `Op(a)` compressed to the modes `|n| ≤ N`, with `k×k` blocks.
#[derive(Clone, Debug)]
pub struct TruncatedOperator {
    pub n: i64,
    pub k: usize,
    pub matrix: CMat,
}

impl TruncatedOperator {
    pub fn dim(&self) -> usize {
        (2 * self.n as usize + 1) * self.k
    }

    /// Row/column offset of the block for mode `m`.
    pub fn offset(&self, m: i64) -> usize {
        (m + self.n) as usize * self.k
    }

    pub fn block(&self, row: i64, col: i64) -> CMat {
        self.matrix.view((self.offset(row), self.offset(col)), (self.k, self.k)).into_owned()
    }

    /// Trace over the modes `|m| ≤ inner`.
    pub fn interior_trace(m: &CMat, n: i64, k: usize, inner: i64) -> C64 {
        let mut acc = cr(0.0);
        for mode in -inner..=inner {
            let o = (mode + n) as usize * k;
            for i in 0..k {
                acc += m[(o + i, o + i)];
            }
        }
        acc
    }
}

/// Exact matrix of `Op(a)` on modes `|n| ≤ N` (fiber-only symbols).
pub fn truncate_op(a: &PolyhomSymbol, n: i64) -> Result<TruncatedOperator> {
    if a.rank() != 1 {
        return Err(Error::Rank(a.rank(), 1));
    }
    let op = a.exact().ok_or(Error::NotExact)?;
    let k = a.matrix_size();
    let dim = (2 * n as usize + 1) * k;
    let ev = ExactEval::new();
    let mut m = CMat::zeros(dim, dim);
    for col in -n..=n {
        let v = ev.value(op, col);
        for (freq, coef) in v.coeffs() {
            let row = col + freq[0] as i64;
            if row.abs() > n {
                continue;
            }
            let (r0, c0) = ((row + n) as usize * k, (col + n) as usize * k);
            m.view_mut((r0, c0), (k, k)).copy_from(coef);
        }
    }
    Ok(TruncatedOperator { n, k, matrix: m })
}

#[derive(Clone, Debug)]
pub struct IndexIdempotent {
    pub e_trace: C64,
    pub rounded: i64,
    /// `e − p` as a `2×2` block matrix over modes `|n| ≤ N_big`.
    pub e_minus_p: CMat,
    pub n_big: i64,
    pub n: i64,
    pub k: usize,
}

pub fn buffer_width(j: usize) -> i64 {
    4 * (j as i64 + 2)
}

/// Largest `|i − j|` over nonzero entries.
pub fn bandwidth(m: &CMat) -> usize {
    let mut b = 0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != cr(0.0) {
                b = b.max(i.abs_diff(j));
            }
        }
    }
    b
}

/// Product that only visits the bands of both factors.
pub fn banded_mul(a: &CMat, b: &CMat) -> CMat {
    let (ba, bb) = (bandwidth(a), bandwidth(b));
    let n = a.nrows();
    if 4 * (ba + bb) >= n {
        return a * b;
    }
    let mut c = CMat::zeros(n, b.ncols());
    for j in 0..b.ncols() {
        for k in j.saturating_sub(bb)..(j + bb + 1).min(b.nrows()) {
            let bkj = b[(k, j)];
            if bkj == cr(0.0) {
                continue;
            }
            for i in k.saturating_sub(ba)..(k + ba + 1).min(n) {
                c[(i, j)] += a[(i, k)] * bkj;
            }
        }
    }
    c
}

/// `e − p` for `e = G⁻¹ p G`, `G = (0 1; −1 P)(1 0; Q 1)(1 −P; 0 1)`, from truncated `Q`, `P`.
pub fn idempotent_difference(q: &CMat, p: &CMat) -> CMat {
    let d = q.nrows();
    let one = CMat::identity(d, d);
    let s1 = &one - banded_mul(q, p);
    let ps = banded_mul(p, &(&one + &s1));
    let e11 = banded_mul(&ps, q) - &one;
    let e12 = banded_mul(&ps, &s1);
    let e21 = banded_mul(&s1, q);
    let e22 = banded_mul(&s1, &s1);
    let mut m = CMat::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(&e11);
    m.view_mut((0, d), (d, d)).copy_from(&e12);
    m.view_mut((d, 0), (d, d)).copy_from(&e21);
    m.view_mut((d, d), (d, d)).copy_from(&e22);
    m
}

/// `tr(e − p)` over the interior modes of both diagonal blocks.
pub fn interior_pairing(e_minus_p: &CMat, n_big: i64, k: usize, n: i64) -> C64 {
    let d = e_minus_p.nrows() / 2;
    let top = e_minus_p.view((0, 0), (d, d)).into_owned();
    let bottom = e_minus_p.view((d, d), (d, d)).into_owned();
    TruncatedOperator::interior_trace(&top, n_big, k, n) + TruncatedOperator::interior_trace(&bottom, n_big, k, n)
}

/// The trace `tr(e − p)` of the index idempotent of `q`, over `|n| ≤ N`.
pub fn index_idempotent_pairing(q: &PolyhomSymbol, n: i64, j: usize) -> Result<IndexIdempotent> {
    let p = parametrix(q, j)?;
    let q = if q.is_exact() { q.clone() } else { q.clone().with_zero_mode(TrigPoly::identity(1, q.matrix_size())) };
    let n_big = n + buffer_width(j);
    let qm = truncate_op(&q, n_big)?;
    let pm = truncate_op(&p, n_big)?;
    let e = idempotent_difference(&qm.matrix, &pm.matrix);
    let tr = interior_pairing(&e, n_big, q.matrix_size(), n);
    let rounded = tr.re.round();
    let dist = (tr - cr(rounded)).norm();
    if dist > 1e-2 {
        return Err(Error::Unstable { value: tr.re, distance: dist });
    }
    Ok(IndexIdempotent { e_trace: tr, rounded: rounded as i64, e_minus_p: e, n_big, n, k: q.matrix_size() })
}

/// Interior trace of `u⁻¹ e u − p` for an invertible `u` on the doubled mode space.
pub fn conjugated_pairing(ix: &IndexIdempotent, u: &CMat) -> Result<C64> {
    let d2 = ix.e_minus_p.nrows();
    let uinv = u.clone().try_inverse().ok_or(Error::NearSingular(0.0))?;
    let mut p = CMat::zeros(d2, d2);
    for i in 0..d2 / 2 {
        p[(i, i)] = cr(1.0);
    }
    let e = &ix.e_minus_p + &p;
    let conj = &uinv * e * u - p;
    Ok(interior_pairing(&conj, ix.n_big, ix.k, ix.n))
}

/// Argument-principle winding of `f` (or `det f`) on the circle.
pub fn winding_number(f: &TrigPoly) -> Result<i64> {
    if f.rank() != 1 {
        return Err(Error::Rank(f.rank(), 1));
    }
    let m = WINDING_GRID;
    let vals: Vec<C64> = (0..m)
        .map(|i| {
            let v = f.eval(&[TWO_PI * i as f64 / m as f64]);
            if v.nrows() == 1 {
                v[(0, 0)]
            } else {
                v.determinant()
            }
        })
        .collect();
    let minabs = vals.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let scale = vals.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if minabs < 1e-8 * scale.max(1.0) {
        return Err(Error::NearSingular(minabs));
    }
    let mut total = 0.0;
    for i in 0..m {
        total += (vals[(i + 1) % m] / vals[i]).arg();
    }
    let w = total / TWO_PI;
    let r = w.round();
    if (w - r).abs() > 1e-6 {
        return Err(Error::Unstable { value: w, distance: (w - r).abs() });
    }
    Ok(r as i64)
}

/// Lattice Chern number of a bundle given by orthonormal frames on a `G×G` grid of `T²`
/// (`frames[i][j]` at `b = 2π(i, j)/G`), in the convention `c₁ = (i/2π)∫ tr F`.
pub fn chern_number_frames(frames: &[Vec<CMat>]) -> Result<(f64, i64)> {
    let g = frames.len();
    let link = |a: &CMat, b: &CMat| -> Result<C64> {
        let z = (a.adjoint() * b).determinant();
        if z.norm() < 1e-12 {
            return Err(Error::GapClosing(format!("degenerate link variable {:.3e}", z.norm())));
        }
        Ok(z / z.norm())
    };
    let mut total = 0.0;
    for i in 0..g {
        for j in 0..g {
            let (i1, j1) = ((i + 1) % g, (j + 1) % g);
            let u1 = link(&frames[i][j], &frames[i1][j])?;
            let u2 = link(&frames[i1][j], &frames[i1][j1])?;
            let u3 = link(&frames[i][j1], &frames[i1][j1])?;
            let u4 = link(&frames[i][j], &frames[i][j1])?;
            total += (u1 * u2 / (u3 * u4)).arg();
        }
    }
    let c = -total / TWO_PI;
    let r = c.round();
    if (c - r).abs() > 1e-6 {
        return Err(Error::Unstable { value: c, distance: (c - r).abs() });
    }
    Ok((c, r as i64))
}

/// Orthonormal frame of the image of an idempotent.
pub fn image_frame(e: &CMat, tol: f64) -> Result<CMat> {
    let d = e.nrows();
    let dev = (e * e - e).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if dev > tol {
        return Err(Error::Invalid(format!("not idempotent (defect {dev:.3e})")));
    }
    let rank = e.trace().re.round() as usize;
    let svd = e.clone().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Invalid("svd failed".into()))?;
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|a, b| svd.singular_values[*b].partial_cmp(&svd.singular_values[*a]).unwrap());
    let cols: Vec<_> = idx.iter().take(rank).map(|i| u.column(*i).into_owned()).collect();
    Ok(CMat::from_columns(&cols))
}

/// Lattice Chern number of `im e(b)` for a grid family of idempotents.
pub fn chern_number(e_family: &[Vec<CMat>]) -> Result<(f64, i64)> {
    let ranks: Vec<i64> = e_family.iter().flatten().map(|e| e.trace().re.round() as i64).collect();
    if ranks.iter().any(|r| *r != ranks[0]) {
        return Err(Error::GapClosing(format!("ranks {:?}..{:?}", ranks.iter().min(), ranks.iter().max())));
    }
    let frames = e_family
        .iter()
        .map(|row| row.iter().map(|e| image_frame(e, 1e-8)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    chern_number_frames(&frames)
}

/// Truncated Toeplitz matrix of `f` on the modes `1..=N` (`k×k` blocks).
pub fn toeplitz(f: &TrigPoly, n: usize) -> CMat {
    let k = f.matrix_size();
    let mut m = CMat::zeros(n * k, n * k);
    for col in 1..=n as i64 {
        for (freq, coef) in f.coeffs() {
            let row = col + freq[0] as i64;
            if row < 1 || row > n as i64 {
                continue;
            }
            m.view_mut(((row - 1) as usize * k, (col - 1) as usize * k), (k, k)).copy_from(coef);
        }
    }
    m
}

/// Frame of the cokernel of the Toeplitz operator `T_u` (the kernel of `T_{u*}`), from
/// the `rank` smallest singular vectors of the truncated `T_{u*}`.
pub fn toeplitz_cokernel_frame(u: &TrigPoly, n: usize, rank: usize) -> Result<CMat> {
    let t = toeplitz(&u.adjoint(), n);
    let svd = t.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Invalid("svd failed".into()))?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|a, b| svd.singular_values[*a].partial_cmp(&svd.singular_values[*b]).unwrap());
    if rank < idx.len() && svd.singular_values[idx[rank]] < 1e-6 {
        return Err(Error::GapClosing("cokernel rank exceeds the expected value".into()));
    }
    if svd.singular_values[idx[rank - 1]] > 1e-6 {
        return Err(Error::GapClosing(format!("cokernel not resolved: σ = {:.3e}", svd.singular_values[idx[rank - 1]])));
    }
    let cols: Vec<_> = idx.iter().take(rank).map(|i| vt.row(*i).adjoint()).collect();
    Ok(CMat::from_columns(&cols))
}

/// Chern number of the cokernel bundle of the Toeplitz family `b ↦ T_{u(b)}` over a `G×G` grid.
///
/// `u` has base variables `(b₁, b₂)` followed by the fiber variable.
pub fn toeplitz_family_chern(u: &TrigPoly, grid: usize, n: usize, rank: usize) -> Result<(f64, i64)> {
    if u.rank() != 3 {
        return Err(Error::Rank(u.rank(), 3));
    }
    let frames: Vec<Vec<CMat>> = (0..grid)
        .into_par_iter()
        .map(|i| {
            (0..grid)
                .map(|j| {
                    let b = [TWO_PI * i as f64 / grid as f64, TWO_PI * j as f64 / grid as f64];
                    toeplitz_cokernel_frame(&u.eval_prefix(&b), n, rank)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    chern_number_frames(&frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::PolyhomSymbol;
    use crate::trigpoly::c;

    fn e(m: i32) -> TrigPoly {
        TrigPoly::exp_mono(1, 1, vec![m], cr(1.0))
    }

    #[test]
    fn truncation_of_identity_and_shift() {
        let t = truncate_op(&PolyhomSymbol::identity(1, 1), 4).unwrap();
        assert_eq!(t.matrix, CMat::identity(9, 9));
        let s = truncate_op(&PolyhomSymbol::multiplication(e(1)), 4).unwrap();
        for r in 0..9 {
            for col in 0..9 {
                let expect = if r == col + 1 { 1.0 } else { 0.0 };
                assert_eq!(s.matrix[(r, col)], cr(expect));
            }
        }
    }

    #[test]
    fn commutator_with_d_matches_symbol() {
        let d = truncate_op(&PolyhomSymbol::dspec(1, 1), 8).unwrap();
        let s = truncate_op(&PolyhomSymbol::multiplication(e(1)), 8).unwrap();
        let comm = &d.matrix * &s.matrix - &s.matrix * &d.matrix;
        for n in -7..7i64 {
            let v = comm[((n + 1 + 8) as usize, (n + 8) as usize)];
            let expect = ((n + 1).abs().max(1) - n.abs().max(1)) as f64;
            assert!((v - cr(expect)).norm() < 1e-14);
        }
    }

    #[test]
    fn banded_product_matches_dense() {
        let n = 40;
        let a = CMat::from_fn(n, n, |i, j| if i.abs_diff(j) <= 2 { c(i as f64 - 0.5 * j as f64, 1.0) } else { cr(0.0) });
        let b = CMat::from_fn(n, n, |i, j| if i.abs_diff(j) <= 3 { c(0.3, (i * j) as f64 / 100.0) } else { cr(0.0) });
        assert_eq!(bandwidth(&a), 2);
        let d = (banded_mul(&a, &b) - &a * &b).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn idempotent_is_exact() {
        let q = PolyhomSymbol::homogeneous(0, e(1), e(0)).with_zero_mode(e(0));
        let ix = index_idempotent_pairing(&q, 16, 2).unwrap();
        let d2 = ix.e_minus_p.nrows();
        let mut p = CMat::zeros(d2, d2);
        for i in 0..d2 / 2 {
            p[(i, i)] = cr(1.0);
        }
        let ee = &ix.e_minus_p + &p;
        let defect = (&ee * &ee - &ee).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(defect < 1e-12, "{defect}");
        assert_eq!(ix.rounded, 1);
        assert!(ix.e_trace.re.abs() > 0.5);
    }

    #[test]
    fn identity_pairing_is_zero() {
        let ix = index_idempotent_pairing(&PolyhomSymbol::identity(1, 1), 16, 2).unwrap();
        assert_eq!(ix.rounded, 0);
        assert!(ix.e_trace.norm() < 1e-12);
    }

    #[test]
    fn windings() {
        assert_eq!(winding_number(&e(1)).unwrap(), 1);
        let f = TrigPoly::from_terms(1, &[(vec![0], cr(2.0)), (vec![1], cr(0.5)), (vec![-1], cr(0.5))]);
        assert_eq!(winding_number(&f).unwrap(), 0);
        let g = e(2).mul(&TrigPoly::from_terms(1, &[(vec![0], cr(1.0)), (vec![1], cr(0.15)), (vec![-1], cr(0.15))]));
        assert_eq!(winding_number(&g).unwrap(), 2);
        let z = TrigPoly::from_terms(1, &[(vec![1], cr(0.5)), (vec![-1], cr(0.5))]);
        assert!(matches!(winding_number(&z), Err(Error::NearSingular(_))));
        let _ = c(0.0, 0.0);
    }

    #[test]
    fn constant_projector_has_no_chern_number() {
        let mut p = CMat::zeros(2, 2);
        p[(0, 0)] = cr(1.0);
        let fam = vec![vec![p; 6]; 6];
        assert_eq!(chern_number(&fam).unwrap().1, 0);
    }
}
