//! Matrix-valued trigonometric polynomials on the torus `T^r`.
//!
//! A [`TrigPoly`] is a finite map from integer frequency vectors to `k×k`
//! complex matrices, representing `f(t) = Σ_n c_n e^{i n·t}`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Largest entry modulus of a matrix.
pub fn mat_max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    rank: usize,
    k: usize,
    coeffs: BTreeMap<Vec<i32>, CMat>,
}

impl TrigPoly {
    pub fn zero(rank: usize, k: usize) -> Self {
        assert!(k >= 1, "matrix size must be positive");
        TrigPoly { rank, k, coeffs: BTreeMap::new() }
    }

    pub fn constant(rank: usize, m: CMat) -> Self {
        let k = m.nrows();
        assert_eq!(k, m.ncols(), "coefficients must be square");
        let mut p = TrigPoly::zero(rank, k);
        p.add_term(vec![0; rank], m);
        p
    }

    pub fn identity(rank: usize, k: usize) -> Self {
        TrigPoly::constant(rank, CMat::identity(k, k))
    }

    pub fn scalar(rank: usize, k: usize, z: C64) -> Self {
        TrigPoly::constant(rank, CMat::identity(k, k) * z)
    }

    pub fn monomial(rank: usize, freq: Vec<i32>, m: CMat) -> Self {
        assert_eq!(freq.len(), rank);
        let mut p = TrigPoly::zero(rank, m.nrows());
        p.add_term(freq, m);
        p
    }

    /// `z · e^{i n·t}` times the `k×k` identity.
    pub fn exp_mono(rank: usize, k: usize, freq: Vec<i32>, z: C64) -> Self {
        TrigPoly::monomial(rank, freq, CMat::identity(k, k) * z)
    }

    /// Scalar (`k = 1`) polynomial from `(frequency, coefficient)` pairs.
    pub fn from_terms(rank: usize, terms: &[(Vec<i32>, C64)]) -> Self {
        let mut p = TrigPoly::zero(rank, 1);
        for (f, z) in terms {
            p.add_term(f.clone(), CMat::from_element(1, 1, *z));
        }
        p
    }

    /// Matrix polynomial whose entries are scalar polynomials.
    pub fn from_entries(entries: &[Vec<TrigPoly>]) -> Self {
        let k = entries.len();
        let rank = entries[0][0].rank;
        let mut p = TrigPoly::zero(rank, k);
        for (r, row) in entries.iter().enumerate() {
            assert_eq!(row.len(), k);
            for (col, e) in row.iter().enumerate() {
                assert_eq!(e.k, 1);
                for (f, m) in &e.coeffs {
                    let mut unit = CMat::zeros(k, k);
                    unit[(r, col)] = m[(0, 0)];
                    p.add_term(f.clone(), unit);
                }
            }
        }
        p
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix_size(&self) -> usize {
        self.k
    }

    pub fn coeffs(&self) -> &BTreeMap<Vec<i32>, CMat> {
        &self.coeffs
    }

    pub fn coeff(&self, freq: &[i32]) -> CMat {
        self.coeffs.get(freq).cloned().unwrap_or_else(|| CMat::zeros(self.k, self.k))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|m| m.iter().all(|z| *z == C64::new(0.0, 0.0)))
    }

    pub fn add_term(&mut self, freq: Vec<i32>, m: CMat) {
        debug_assert_eq!(freq.len(), self.rank);
        debug_assert_eq!(m.nrows(), self.k);
        if m.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
            return;
        }
        match self.coeffs.get_mut(&freq) {
            Some(e) => {
                *e += m;
                if e.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                    self.coeffs.remove(&freq);
                }
            }
            None => {
                self.coeffs.insert(freq, m);
            }
        }
    }

    fn check_compatible(&self, other: &TrigPoly) {
        assert_eq!(self.rank, other.rank, "torus rank mismatch");
        assert_eq!(self.k, other.k, "matrix size mismatch");
    }

    pub fn add(&self, other: &TrigPoly) -> TrigPoly {
        self.check_compatible(other);
        let mut out = self.clone();
        for (f, m) in &other.coeffs {
            out.add_term(f.clone(), m.clone());
        }
        out
    }

    pub fn sub(&self, other: &TrigPoly) -> TrigPoly {
        self.add(&other.scale(cr(-1.0)))
    }

    pub fn axpy(&mut self, a: C64, x: &TrigPoly) {
        self.check_compatible(x);
        for (f, m) in &x.coeffs {
            self.add_term(f.clone(), m * a);
        }
    }

    pub fn scale(&self, z: C64) -> TrigPoly {
        let mut out = TrigPoly::zero(self.rank, self.k);
        if z == C64::new(0.0, 0.0) {
            return out;
        }
        for (f, m) in &self.coeffs {
            out.add_term(f.clone(), m * z);
        }
        out
    }

    /// Pointwise product (Fourier convolution); matrix order is `self · other`.
    pub fn mul(&self, other: &TrigPoly) -> TrigPoly {
        self.check_compatible(other);
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return TrigPoly::zero(self.rank, self.k);
        }
        if let Some(out) = self.mul_dense(other) {
            return out;
        }
        let mut out = TrigPoly::zero(self.rank, self.k);
        for (fa, ma) in &self.coeffs {
            for (fb, mb) in &other.coeffs {
                let f: Vec<i32> = fa.iter().zip(fb).map(|(a, b)| a + b).collect();
                out.add_term(f, ma * mb);
            }
        }
        out
    }

    fn freq_box(&self) -> (Vec<i32>, Vec<i32>) {
        let mut lo = vec![i32::MAX; self.rank];
        let mut hi = vec![i32::MIN; self.rank];
        for f in self.coeffs.keys() {
            for (v, n) in f.iter().enumerate() {
                lo[v] = lo[v].min(*n);
                hi[v] = hi[v].max(*n);
            }
        }
        (lo, hi)
    }

    /// Convolution into a dense buffer over the frequency bounding box.
    fn mul_dense(&self, other: &TrigPoly) -> Option<TrigPoly> {
        let (k, r) = (self.k, self.rank);
        let (alo, ahi) = self.freq_box();
        let (blo, bhi) = other.freq_box();
        let lo: Vec<i32> = alo.iter().zip(&blo).map(|(a, b)| a + b).collect();
        let ext: Vec<usize> = (0..r).map(|v| (ahi[v] + bhi[v] - lo[v] + 1) as usize).collect();
        let total = ext.iter().try_fold(1usize, |acc, e| acc.checked_mul(*e))?;
        let pairs = self.coeffs.len() * other.coeffs.len();
        if total > (1 << 20) || total > 8 * pairs + 64 {
            return None;
        }
        let mut strides = vec![1usize; r];
        for v in (0..r.saturating_sub(1)).rev() {
            strides[v] = strides[v + 1] * ext[v + 1];
        }
        let offsets = |p: &TrigPoly, base: &[i32]| -> Vec<(usize, Vec<C64>)> {
            p.coeffs
                .iter()
                .map(|(f, m)| {
                    let off = f.iter().zip(base).zip(&strides).map(|((n, b), s)| (n - b) as usize * s).sum();
                    (off, m.as_slice().to_vec())
                })
                .collect()
        };
        let a = offsets(self, &alo);
        let b = offsets(other, &blo);
        let kk = k * k;
        let mut buf = vec![C64::new(0.0, 0.0); total * kk];
        for (oa, ma) in &a {
            for (ob, mb) in &b {
                let cell = &mut buf[(oa + ob) * kk..(oa + ob + 1) * kk];
                for j in 0..k {
                    for l in 0..k {
                        let y = mb[l + j * k];
                        if y.re == 0.0 && y.im == 0.0 {
                            continue;
                        }
                        for i in 0..k {
                            cell[i + j * k] += ma[i + l * k] * y;
                        }
                    }
                }
            }
        }
        let mut out = TrigPoly::zero(r, k);
        for (idx, cell) in buf.chunks_exact(kk).enumerate() {
            if cell.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                continue;
            }
            let mut rem = idx;
            let f: Vec<i32> = (0..r)
                .map(|v| {
                    let q = rem / strides[v];
                    rem %= strides[v];
                    q as i32 + lo[v]
                })
                .collect();
            out.coeffs.insert(f, CMat::from_column_slice(k, k, cell));
        }
        Some(out)
    }

    /// Partial derivative `∂/∂t_var`.
    pub fn deriv(&self, var: usize) -> TrigPoly {
        assert!(var < self.rank);
        let mut out = TrigPoly::zero(self.rank, self.k);
        for (f, m) in &self.coeffs {
            if f[var] != 0 {
                out.add_term(f.clone(), m * (I * f[var] as f64));
            }
        }
        out
    }

    /// `D_x^p = (-i ∂_var)^p`, multiplying the coefficient of frequency `n` by `n_var^p`.
    pub fn dx_power(&self, var: usize, p: u32) -> TrigPoly {
        if p == 0 {
            return self.clone();
        }
        let mut out = TrigPoly::zero(self.rank, self.k);
        for (f, m) in &self.coeffs {
            let w = (f[var] as f64).powi(p as i32);
            if w != 0.0 {
                out.add_term(f.clone(), m * cr(w));
            }
        }
        out
    }

    pub fn eval(&self, point: &[f64]) -> CMat {
        assert_eq!(point.len(), self.rank);
        let mut acc = CMat::zeros(self.k, self.k);
        for (f, m) in &self.coeffs {
            let phase: f64 = f.iter().zip(point).map(|(n, t)| *n as f64 * t).sum();
            acc += m * C64::from_polar(1.0, phase);
        }
        acc
    }

    /// Evaluates the leading `values.len()` variables, keeping the rest symbolic.
    pub fn eval_prefix(&self, values: &[f64]) -> TrigPoly {
        let m = values.len();
        assert!(m <= self.rank);
        let mut out = TrigPoly::zero(self.rank - m, self.k);
        for (f, c) in &self.coeffs {
            let phase: f64 = f[..m].iter().zip(values).map(|(n, t)| *n as f64 * t).sum();
            out.add_term(f[m..].to_vec(), c * C64::from_polar(1.0, phase));
        }
        out
    }

    /// Groups terms by the frequency of the last variable.
    pub fn by_last(&self) -> BTreeMap<i32, TrigPoly> {
        assert!(self.rank >= 1);
        let mut out: BTreeMap<i32, TrigPoly> = BTreeMap::new();
        for (f, m) in &self.coeffs {
            let (head, last) = f.split_at(self.rank - 1);
            out.entry(last[0])
                .or_insert_with(|| TrigPoly::zero(self.rank - 1, self.k))
                .add_term(head.to_vec(), m.clone());
        }
        out
    }

    /// Average over the last variable.
    pub fn last_average(&self) -> TrigPoly {
        assert!(self.rank >= 1);
        let mut out = TrigPoly::zero(self.rank - 1, self.k);
        for (f, m) in &self.coeffs {
            if f[self.rank - 1] == 0 {
                out.add_term(f[..self.rank - 1].to_vec(), m.clone());
            }
        }
        out
    }

    /// Lifts a polynomial to one more variable, multiplied by `e^{i m t_last}`.
    pub fn append_var(&self, m: i32) -> TrigPoly {
        let mut out = TrigPoly::zero(self.rank + 1, self.k);
        for (f, c) in &self.coeffs {
            let mut g = f.clone();
            g.push(m);
            out.add_term(g, c.clone());
        }
        out
    }

    /// Prepends `n` variables in which the polynomial is constant.
    pub fn prepend_vars(&self, n: usize) -> TrigPoly {
        let mut out = TrigPoly::zero(self.rank + n, self.k);
        for (f, c) in &self.coeffs {
            let mut g = vec![0; n];
            g.extend_from_slice(f);
            out.add_term(g, c.clone());
        }
        out
    }

    pub fn trace(&self) -> TrigPoly {
        let mut out = TrigPoly::zero(self.rank, 1);
        for (f, m) in &self.coeffs {
            out.add_term(f.clone(), CMat::from_element(1, 1, m.trace()));
        }
        out
    }

    /// Constant Fourier coefficient of a scalar polynomial.
    pub fn mean_scalar(&self) -> C64 {
        assert_eq!(self.k, 1);
        self.coeffs.get(&vec![0; self.rank]).map(|m| m[(0, 0)]).unwrap_or_default()
    }

    /// Value of a rank-0 scalar polynomial.
    pub fn as_scalar(&self) -> C64 {
        assert_eq!(self.k, 1);
        self.coeffs.values().map(|m| m[(0, 0)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().map(mat_max_abs).fold(0.0, f64::max)
    }

    pub fn dist(&self, other: &TrigPoly) -> f64 {
        self.sub(other).max_abs()
    }

    /// Drops coefficients whose largest entry is below `tol`.
    pub fn prune(&self, tol: f64) -> TrigPoly {
        let mut out = TrigPoly::zero(self.rank, self.k);
        for (f, m) in &self.coeffs {
            if mat_max_abs(m) > tol {
                out.coeffs.insert(f.clone(), m.clone());
            }
        }
        out
    }

    pub fn max_freq(&self, var: usize) -> i32 {
        self.coeffs.keys().map(|f| f[var].abs()).max().unwrap_or(0)
    }

    pub fn min_freq(&self, var: usize) -> i32 {
        self.coeffs.keys().map(|f| f[var]).min().unwrap_or(0)
    }

    /// Pointwise conjugate transpose `t ↦ f(t)^*`.
    pub fn adjoint(&self) -> TrigPoly {
        let mut out = TrigPoly::zero(self.rank, self.k);
        for (f, m) in &self.coeffs {
            out.add_term(f.iter().map(|n| -n).collect(), m.adjoint());
        }
        out
    }

    pub fn map_coeffs(&self, g: impl Fn(&CMat) -> CMat) -> TrigPoly {
        let mut out = TrigPoly::zero(self.rank, self.k);
        for (f, m) in &self.coeffs {
            out.add_term(f.clone(), g(m));
        }
        out
    }

    /// Scalar polynomial times the `k×k` identity.
    pub fn lift_scalar(&self, k: usize) -> TrigPoly {
        assert_eq!(self.k, 1, "only scalar polynomials can be lifted");
        let mut out = TrigPoly::zero(self.rank, k);
        for (f, m) in &self.coeffs {
            out.add_term(f.clone(), CMat::identity(k, k) * m[(0, 0)]);
        }
        out
    }

    pub fn block_diag(a: &TrigPoly, b: &TrigPoly) -> TrigPoly {
        assert_eq!(a.rank, b.rank);
        let k = a.k + b.k;
        let mut out = TrigPoly::zero(a.rank, k);
        for (f, m) in &a.coeffs {
            let mut big = CMat::zeros(k, k);
            big.view_mut((0, 0), (a.k, a.k)).copy_from(m);
            out.add_term(f.clone(), big);
        }
        for (f, m) in &b.coeffs {
            let mut big = CMat::zeros(k, k);
            big.view_mut((a.k, a.k), (b.k, b.k)).copy_from(m);
            out.add_term(f.clone(), big);
        }
        out
    }

    /// Fourier coefficients of a smooth function sampled on an `m^rank` grid,
    /// keeping frequencies `|n_v| < m/2` whose coefficients exceed `tol`.
    pub fn from_samples(rank: usize, k: usize, m: usize, tol: f64, f: impl Fn(&[f64]) -> CMat) -> TrigPoly {
        let total = m.pow(rank as u32);
        let mut data: Vec<Vec<C64>> = vec![vec![C64::default(); total]; k * k];
        let mut point = vec![0.0; rank];
        for idx in 0..total {
            let mut rem = idx;
            for v in (0..rank).rev() {
                point[v] = crate::constants::TWO_PI * (rem % m) as f64 / m as f64;
                rem /= m;
            }
            let val = f(&point);
            for r in 0..k {
                for s in 0..k {
                    data[r * k + s][idx] = val[(r, s)];
                }
            }
        }
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(m);
        let mut line = vec![C64::default(); m];
        for entry in data.iter_mut() {
            for v in 0..rank {
                let stride = m.pow((rank - 1 - v) as u32);
                for start in 0..total {
                    if (start / stride) % m != 0 {
                        continue;
                    }
                    for j in 0..m {
                        line[j] = entry[start + j * stride];
                    }
                    fft.process(&mut line);
                    for j in 0..m {
                        entry[start + j * stride] = line[j];
                    }
                }
            }
        }
        let norm = 1.0 / total as f64;
        let half = (m / 2) as i32;
        let mut out = TrigPoly::zero(rank, k);
        for idx in 0..total {
            let mut rem = idx;
            let mut freq = vec![0i32; rank];
            let mut skip = false;
            for v in (0..rank).rev() {
                let j = (rem % m) as i32;
                rem /= m;
                let n = if j < half { j } else { j - m as i32 };
                if n == -half {
                    skip = true;
                }
                freq[v] = n;
            }
            if skip {
                continue;
            }
            let mut mat = CMat::zeros(k, k);
            for r in 0..k {
                for s in 0..k {
                    mat[(r, s)] = data[r * k + s][idx] * norm;
                }
            }
            if mat_max_abs(&mat) > tol {
                out.coeffs.insert(freq, mat);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos1() -> TrigPoly {
        TrigPoly::from_terms(1, &[(vec![1], cr(0.5)), (vec![-1], cr(0.5))])
    }

    #[test]
    fn product_is_convolution() {
        let p = cos1().mul(&cos1());
        assert!((p.coeff(&[0])[(0, 0)] - cr(0.5)).norm() < 1e-15);
        assert!((p.coeff(&[2])[(0, 0)] - cr(0.25)).norm() < 1e-15);
    }

    #[test]
    fn derivative_of_exponential() {
        let e = TrigPoly::exp_mono(2, 1, vec![2, -3], cr(1.0));
        let d = e.deriv(1);
        assert_eq!(d.coeff(&[2, -3])[(0, 0)], c(0.0, -3.0));
    }

    #[test]
    fn evaluation_matches_closed_form() {
        let p = cos1();
        let v = p.eval(&[0.7]);
        assert!((v[(0, 0)].re - 0.7f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn sampling_recovers_polynomial() {
        let p = TrigPoly::from_terms(2, &[(vec![1, -2], c(0.3, 0.1)), (vec![0, 0], cr(2.0)), (vec![-3, 1], cr(-1.0))]);
        let q = TrigPoly::from_samples(2, 1, 16, 1e-14, |t| p.eval(t));
        assert!(p.dist(&q) < 1e-13);
    }

    #[test]
    fn sampled_inverse_of_smooth_function() {
        let f = TrigPoly::from_terms(1, &[(vec![0], cr(1.0)), (vec![1], cr(0.25)), (vec![-1], cr(0.25))]);
        let inv = TrigPoly::from_samples(1, 1, 128, 1e-16, |t| f.eval(t).try_inverse().unwrap());
        let one = f.mul(&inv).prune(1e-13);
        assert!(one.dist(&TrigPoly::identity(1, 1)) < 1e-13);
    }

    #[test]
    fn by_last_round_trip() {
        let p = TrigPoly::from_terms(2, &[(vec![1, -2], cr(1.0)), (vec![0, 3], cr(2.0))]);
        let groups = p.by_last();
        let mut back = TrigPoly::zero(2, 1);
        for (m, g) in groups {
            back = back.add(&g.append_var(m));
        }
        assert_eq!(back, p);
    }
}
