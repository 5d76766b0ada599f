//! Finite-dimensional X-complexes, renormalized connecting cocycles and the
//! χ̂/η̂ cochains of an odd quasihomomorphism.
//!
//! Algebras are concrete subalgebras of `M_m(ℂ)`; elements are coordinate
//! vectors in a fixed basis. The odd part `Ω¹A_♮` of the X-complex is the
//! quotient of `A⁺ ⊗ A` by the commutator relations, realized by a fully
//! reduced row echelon form so that every class has a canonical coordinate
//! vector.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::constants::PIVOT_TOL;
use crate::error::{Error, Result};
use crate::trigpoly::{c, cr, CMat, C64};

pub type CVec = DVector<C64>;

fn vmax(v: &CVec) -> f64 {
    v.iter().fold(0.0, |a, z| a.max(z.norm()))
}

fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// A linear subspace of `ℂⁿ` with an orthonormal basis.
#[derive(Clone, Debug)]
pub struct Subspace {
    n: usize,
    basis: CMat,
}

impl Subspace {
    pub fn zero(n: usize) -> Self {
        Subspace { n, basis: CMat::zeros(n, 0) }
    }

    pub fn full(n: usize) -> Self {
        Subspace { n, basis: CMat::identity(n, n) }
    }

    /// Span of `vecs`; directions below `PIVOT_TOL` relative to the largest input are dropped.
    pub fn span(n: usize, vecs: &[CVec]) -> Self {
        let scale = vecs.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut cols: Vec<CVec> = Vec::new();
        for v in vecs {
            let mut w = v.clone();
            for _ in 0..2 {
                for q in &cols {
                    let p = q.dotc(&w);
                    w -= q * p;
                }
            }
            let nrm = w.norm();
            if nrm > PIVOT_TOL * scale.max(1e-300) && nrm > 1e-14 {
                cols.push(w / cr(nrm));
            }
        }
        let basis = if cols.is_empty() { CMat::zeros(n, 0) } else { CMat::from_columns(&cols) };
        Subspace { n, basis }
    }

    pub fn ambient(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn vectors(&self) -> Vec<CVec> {
        self.basis.column_iter().map(|c| c.into_owned()).collect()
    }

    /// Distance from `v` to the subspace.
    pub fn residual(&self, v: &CVec) -> f64 {
        if self.dim() == 0 {
            return v.norm();
        }
        let p = &self.basis * (self.basis.adjoint() * v);
        (v - p).norm()
    }

    pub fn contains(&self, v: &CVec, tol: f64) -> bool {
        self.residual(v) <= tol * (1.0 + v.norm())
    }

    pub fn contains_space(&self, o: &Subspace, tol: f64) -> bool {
        o.vectors().iter().all(|v| self.contains(v, tol))
    }

    pub fn sum(&self, o: &Subspace) -> Subspace {
        let mut v = self.vectors();
        v.extend(o.vectors());
        Subspace::span(self.n, &v)
    }
}

/// Structure constants in a serializable form: `constants[(i·d + j)·d + k]` is the
/// coefficient of `e_k` in `e_i e_j`, stored as `[re, im]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlgebraSpec {
    pub dim: usize,
    pub constants: Vec<[f64; 2]>,
    #[serde(default)]
    pub ideal: Vec<Vec<[f64; 2]>>,
}

/// A finite-dimensional associative algebra realized inside `M_m(ℂ)`.
#[derive(Clone, Debug)]
pub struct FiniteAlgebra {
    m: usize,
    basis: Vec<CMat>,
    pinv: CMat,
    products: Vec<CVec>,
    gens: Vec<usize>,
}

impl FiniteAlgebra {
    /// Subalgebra spanned by `basis`; `gens` indexes a generating subset (all of the basis if `None`).
    pub fn from_matrices(basis: Vec<CMat>, gens: Option<Vec<usize>>) -> Result<Self> {
        let d = basis.len();
        if d == 0 {
            return Err(Error::Invalid("empty basis".into()));
        }
        let m = basis[0].nrows();
        let v = CMat::from_fn(m * m, d, |r, col| basis[col].as_slice()[r]);
        let svd = v.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= PIVOT_TOL * smax {
            return Err(Error::Invalid("basis matrices are linearly dependent".into()));
        }
        let pinv = svd.pseudo_inverse(0.0).map_err(|e| Error::Invalid(e.into()))?;
        let mut alg = FiniteAlgebra { m, basis, pinv, products: Vec::new(), gens: gens.unwrap_or_else(|| (0..d).collect()) };
        let mut defect: f64 = 0.0;
        let mut products = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let p = &alg.basis[i] * &alg.basis[j];
                let x = alg.coords(&p);
                let back = alg.matrix(&x);
                defect = defect.max((p - back).iter().fold(0.0, |a, z| a.max(z.norm())));
                products.push(x);
            }
        }
        if defect > 1e-10 {
            return Err(Error::Invalid(format!("basis is not closed under multiplication (defect {defect:.3e})")));
        }
        alg.products = products;
        Ok(alg)
    }

    /// Algebra from structure constants, realized by its left regular representation on `A⁺`.
    pub fn from_structure_constants(d: usize, consts: &[C64]) -> Result<Self> {
        if consts.len() != d * d * d {
            return Err(Error::Arity { expected: d * d * d, got: consts.len() });
        }
        let cst = |i: usize, j: usize, k: usize| consts[(i * d + j) * d + k];
        let scale = consts.iter().fold(1.0f64, |a, z| a.max(z.norm()));
        let mut defect: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for l in 0..d {
                    for mm in 0..d {
                        let mut lhs = cr(0.0);
                        let mut rhs = cr(0.0);
                        for k in 0..d {
                            lhs += cst(i, j, k) * cst(k, l, mm);
                            rhs += cst(j, l, k) * cst(i, k, mm);
                        }
                        defect = defect.max((lhs - rhs).norm());
                    }
                }
            }
        }
        if defect > 1e-12 * scale * scale {
            return Err(Error::NonAssociative(defect));
        }
        let basis = (0..d)
            .map(|i| {
                let mut l = CMat::zeros(d + 1, d + 1);
                for j in 0..d {
                    for k in 0..d {
                        l[(k, j)] = cst(i, j, k);
                    }
                }
                l[(i, d)] = cr(1.0);
                l
            })
            .collect();
        FiniteAlgebra::from_matrices(basis, None)
    }

    pub fn from_spec(spec: &AlgebraSpec) -> Result<(Self, Subspace)> {
        let consts: Vec<C64> = spec.constants.iter().map(|[a, b]| c(*a, *b)).collect();
        let alg = FiniteAlgebra::from_structure_constants(spec.dim, &consts)?;
        if spec.ideal.iter().any(|v| v.len() != spec.dim) {
            return Err(Error::Invalid("ideal vector has the wrong length".into()));
        }
        let vecs: Vec<CVec> = spec
            .ideal
            .iter()
            .map(|v| CVec::from_iterator(spec.dim, v.iter().map(|[a, b]| c(*a, *b))))
            .collect();
        let ideal = Subspace::span(spec.dim, &vecs);
        alg.check_ideal(&ideal)?;
        Ok((alg, ideal))
    }

    pub fn to_spec(&self, ideal: &Subspace) -> AlgebraSpec {
        let d = self.dim();
        let mut constants = Vec::with_capacity(d * d * d);
        for p in &self.products {
            constants.extend(p.iter().map(|z| [z.re, z.im]));
        }
        let ideal = ideal.vectors().iter().map(|v| v.iter().map(|z| [z.re, z.im]).collect()).collect();
        AlgebraSpec { dim: d, constants, ideal }
    }

    /// `M_m(ℂ)` with basis `E_pq` at index `p·m + q`.
    pub fn full_matrix(m: usize) -> Self {
        let basis = (0..m * m)
            .map(|i| {
                let mut e = CMat::zeros(m, m);
                e[(i / m, i % m)] = cr(1.0);
                e
            })
            .collect();
        FiniteAlgebra::from_matrices(basis, None).expect("matrix units form an algebra")
    }

    /// Upper triangular `m×m` matrices.
    pub fn upper_triangular(m: usize) -> Self {
        let basis = (0..m)
            .flat_map(|p| (p..m).map(move |q| (p, q)))
            .map(|(p, q)| {
                let mut e = CMat::zeros(m, m);
                e[(p, q)] = cr(1.0);
                e
            })
            .collect();
        FiniteAlgebra::from_matrices(basis, None).expect("triangular matrices form an algebra")
    }

    /// `M_m(ℂ[y]/(y^deg))` with basis `y^k E_pq` at index `k·m² + p·m + q`.
    pub fn truncated_polynomial(m: usize, deg: usize) -> Self {
        let shift = CMat::from_fn(deg, deg, |r, col| if r + 1 == col { cr(1.0) } else { cr(0.0) });
        let mut powers = vec![CMat::identity(deg, deg)];
        for k in 1..deg {
            powers.push(&powers[k - 1] * &shift);
        }
        let mut basis = Vec::with_capacity(deg * m * m);
        for yk in &powers {
            for i in 0..m * m {
                let mut e = CMat::zeros(m, m);
                e[(i / m, i % m)] = cr(1.0);
                basis.push(yk.kronecker(&e));
            }
        }
        let mut gens: Vec<usize> = (0..m * m).collect();
        if deg > 1 {
            gens.extend((0..m).map(|p| m * m + p * m + p));
        }
        FiniteAlgebra::from_matrices(basis, Some(gens)).expect("truncated polynomial matrices form an algebra")
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn matrix_size(&self) -> usize {
        self.m
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }

    pub fn generators(&self) -> &[usize] {
        &self.gens
    }

    pub fn coords(&self, x: &CMat) -> CVec {
        &self.pinv * CVec::from_column_slice(x.as_slice())
    }

    pub fn matrix(&self, x: &CVec) -> CMat {
        let mut out = CMat::zeros(self.m, self.m);
        for (b, z) in self.basis.iter().zip(x.iter()) {
            if *z != cr(0.0) {
                out += b * *z;
            }
        }
        out
    }

    /// Residual of `x` against the algebra (zero iff `x` lies in it).
    pub fn membership_defect(&self, x: &CMat) -> f64 {
        let back = self.matrix(&self.coords(x));
        (x - back).iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> C64 {
        self.products[i * self.dim() + j][k]
    }

    pub fn mul(&self, x: &CVec, y: &CVec) -> CVec {
        let d = self.dim();
        let mut out = CVec::zeros(d);
        for (i, xi) in x.iter().enumerate() {
            if *xi == cr(0.0) {
                continue;
            }
            for (j, yj) in y.iter().enumerate() {
                if *yj == cr(0.0) {
                    continue;
                }
                out.axpy(*xi * *yj, &self.products[i * d + j], cr(1.0));
            }
        }
        out
    }

    pub fn commutator(&self, x: &CVec, y: &CVec) -> CVec {
        self.mul(x, y) - self.mul(y, x)
    }

    pub fn unit(&self) -> Option<CVec> {
        let one = CMat::identity(self.m, self.m);
        (self.membership_defect(&one) < 1e-10).then(|| self.coords(&one))
    }

    pub fn basis_vector(&self, i: usize) -> CVec {
        let mut v = CVec::zeros(self.dim());
        v[i] = cr(1.0);
        v
    }

    pub fn random_element(&self, rng: &mut ChaCha8Rng) -> CVec {
        CVec::from_fn(self.dim(), |_, _| rand_c(rng))
    }

    pub fn check_ideal(&self, ideal: &Subspace) -> Result<()> {
        let mut defect: f64 = 0.0;
        for v in ideal.vectors() {
            for i in 0..self.dim() {
                let e = self.basis_vector(i);
                defect = defect.max(ideal.residual(&self.mul(&e, &v))).max(ideal.residual(&self.mul(&v, &e)));
            }
        }
        if defect > 1e-10 {
            return Err(Error::NotIdeal(defect));
        }
        Ok(())
    }

    /// Span of all products `s·t`.
    pub fn product_space(&self, s: &Subspace, t: &Subspace) -> Subspace {
        let mut v = Vec::new();
        for a in s.vectors() {
            for b in t.vectors() {
                v.push(self.mul(&a, &b));
            }
        }
        Subspace::span(self.dim(), &v)
    }

    /// Span of all commutators `[s, t]`.
    pub fn commutator_space(&self, s: &Subspace, t: &Subspace) -> Subspace {
        let mut v = Vec::new();
        for a in s.vectors() {
            for b in t.vectors() {
                v.push(self.commutator(&a, &b));
            }
        }
        Subspace::span(self.dim(), &v)
    }

    /// `I^k`, with `I^0 = A`.
    pub fn power(&self, ideal: &Subspace, k: usize) -> Subspace {
        let mut p = Subspace::full(self.dim());
        for _ in 0..k {
            p = self.product_space(&p, ideal);
        }
        p
    }

    /// Smallest `k` with `I^k = 0`, if it is at most `dim + 1`.
    pub fn nilpotency_degree(&self, ideal: &Subspace) -> Option<usize> {
        let mut p = ideal.clone();
        for k in 1..=self.dim() + 1 {
            if p.dim() == 0 {
                return Some(k);
            }
            p = self.product_space(&p, ideal);
        }
        None
    }

    /// Ideal generated (two-sided) by `vecs`.
    pub fn ideal_generated(&self, vecs: &[CVec]) -> Subspace {
        let d = self.dim();
        let mut s = Subspace::span(d, vecs);
        loop {
            let mut v = s.vectors();
            for x in s.vectors() {
                for i in 0..d {
                    let e = self.basis_vector(i);
                    v.push(self.mul(&e, &x));
                    v.push(self.mul(&x, &e));
                }
            }
            let next = Subspace::span(d, &v);
            if next.dim() == s.dim() {
                return next;
            }
            s = next;
        }
    }
}

/// The X-complex `A ⇄ Ω¹A_♮` of a finite algebra.
///
/// Tensor coordinates of `A⁺ ⊗ A` use index `a·d + b`, where `a = d` denotes the
/// adjoined unit.
#[derive(Clone, Debug)]
pub struct XComplex {
    alg: FiniteAlgebra,
    rows: Vec<(usize, CVec)>,
    free: Vec<usize>,
    natural_d: CMat,
    b_bar: CMat,
}

impl XComplex {
    pub fn build(alg: FiniteAlgebra) -> Self {
        let d = alg.dim();
        let nt = (d + 1) * d;
        let mut rows: Vec<(usize, CVec)> = Vec::new();
        let plus = |x: &CVec| {
            let mut v = CVec::zeros(d + 1);
            v.rows_mut(0, d).copy_from(x);
            v
        };
        for &g in alg.generators() {
            let x = alg.basis_vector(g);
            for y_idx in 0..=d {
                for z_idx in 0..d {
                    let z = alg.basis_vector(z_idx);
                    let zx = alg.mul(&z, &x);
                    let rel = if y_idx == d {
                        tensor(&plus(&x), &z) - tensor(&unit_plus(d), &zx) + tensor(&plus(&z), &x)
                    } else {
                        let y = alg.basis_vector(y_idx);
                        tensor(&plus(&alg.mul(&x, &y)), &z) - tensor(&plus(&y), &zx) + tensor(&plus(&alg.mul(&y, &z)), &x)
                    };
                    insert_row(&mut rows, rel);
                }
            }
        }
        let mut is_pivot = vec![false; nt];
        for (p, _) in &rows {
            is_pivot[*p] = true;
        }
        let free: Vec<usize> = (0..nt).filter(|i| !is_pivot[*i]).collect();
        let mut xc = XComplex { alg, rows, free, natural_d: CMat::zeros(0, 0), b_bar: CMat::zeros(0, 0) };
        let q = xc.free.len();
        let mut nd = CMat::zeros(q, d);
        for i in 0..d {
            let col = xc.natural(&tensor(&unit_plus(d), &xc.alg.basis_vector(i)));
            nd.set_column(i, &col);
        }
        let mut bb = CMat::zeros(d, q);
        for (j, &t) in xc.free.iter().enumerate() {
            let (a, b) = (t / d, t % d);
            if a < d {
                let col = xc.alg.commutator(&xc.alg.basis_vector(a), &xc.alg.basis_vector(b));
                bb.set_column(j, &col);
            }
        }
        xc.natural_d = nd;
        xc.b_bar = bb;
        xc
    }

    pub fn algebra(&self) -> &FiniteAlgebra {
        &self.alg
    }

    pub fn dim(&self) -> usize {
        self.alg.dim()
    }

    /// Dimension of `Ω¹A_♮`.
    pub fn quotient_dim(&self) -> usize {
        self.free.len()
    }

    /// Coordinates of the class of a tensor in `A⁺ ⊗ A`.
    pub fn natural(&self, t: &CVec) -> CVec {
        let mut v = t.clone();
        for (p, row) in &self.rows {
            let z = v[*p];
            if z != cr(0.0) {
                v.axpy(-z, row, cr(1.0));
            }
        }
        CVec::from_iterator(self.free.len(), self.free.iter().map(|i| v[*i]))
    }

    /// Class of `x₀ 𝐝x₁` with `x₀ ∈ A⁺` (length `d+1`) and `x₁ ∈ A`.
    pub fn natural_form(&self, x0: &CVec, x1: &CVec) -> CVec {
        self.natural(&tensor(x0, x1))
    }

    pub fn plus(&self, x: &CVec) -> CVec {
        let d = self.dim();
        let mut v = CVec::zeros(d + 1);
        v.rows_mut(0, d).copy_from(x);
        v
    }

    /// `♮𝐝 : A → Ω¹A_♮`.
    pub fn natural_d(&self) -> &CMat {
        &self.natural_d
    }

    /// `b̄ : Ω¹A_♮ → A`, `♮x𝐝y ↦ [x, y]`.
    pub fn b_bar(&self) -> &CMat {
        &self.b_bar
    }

    /// Subspace `♮(P 𝐝Q)` of `Ω¹A_♮` for `P ⊆ A⁺` and `Q ⊆ A`.
    pub fn natural_span(&self, p: &Subspace, q: &Subspace) -> Subspace {
        let mut v = Vec::new();
        for a in p.vectors() {
            for b in q.vectors() {
                v.push(self.natural(&tensor(&a, &b)));
            }
        }
        Subspace::span(self.quotient_dim(), &v)
    }

    fn power_plus(&self, ideal: &Subspace, k: i32) -> Subspace {
        let d = self.dim();
        if k <= 0 {
            return Subspace::full(d + 1);
        }
        let p = self.alg.power(ideal, k as usize);
        Subspace::span(d + 1, &p.vectors().iter().map(|v| self.plus(v)).collect::<Vec<_>>())
    }

    fn power_plain(&self, ideal: &Subspace, k: i32) -> Subspace {
        self.alg.power(ideal, k.max(0) as usize)
    }

    /// The filtration level `F^k_J X(A)` as (even subspace of `A`, odd subspace of `Ω¹A_♮`).
    pub fn filtration(&self, ideal: &Subspace, k: i32) -> (Subspace, Subspace) {
        let n = k.div_euclid(2);
        let full = Subspace::full(self.dim());
        if k.rem_euclid(2) == 0 {
            let jn = self.power_plain(ideal, n);
            let even = self.power_plain(ideal, n + 1).sum(&self.alg.commutator_space(&jn, &full));
            let odd = self.natural_span(&self.power_plus(ideal, n), &full);
            (even, odd)
        } else {
            let even = self.power_plain(ideal, n + 1);
            let odd = self
                .natural_span(&self.power_plus(ideal, n + 1), &full)
                .sum(&self.natural_span(&self.power_plus(ideal, n), ideal));
            (even, odd)
        }
    }
}

fn unit_plus(d: usize) -> CVec {
    let mut v = CVec::zeros(d + 1);
    v[d] = cr(1.0);
    v
}

/// `u ⊗ v` for `u ∈ A⁺`, `v ∈ A`.
pub fn tensor(u: &CVec, v: &CVec) -> CVec {
    let d = v.len();
    let mut t = CVec::zeros(u.len() * d);
    for (a, ua) in u.iter().enumerate() {
        if *ua == cr(0.0) {
            continue;
        }
        for (b, vb) in v.iter().enumerate() {
            t[a * d + b] = *ua * *vb;
        }
    }
    t
}

fn insert_row(rows: &mut Vec<(usize, CVec)>, mut r: CVec) {
    let scale = vmax(&r).max(1.0);
    for (p, row) in rows.iter() {
        let z = r[*p];
        if z != cr(0.0) {
            r.axpy(-z, row, cr(1.0));
        }
    }
    let (piv, big) = r.iter().enumerate().fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
    if big <= PIVOT_TOL * scale {
        return;
    }
    let inv = cr(1.0) / r[piv];
    r *= inv;
    r[piv] = cr(1.0);
    for (_, row) in rows.iter_mut() {
        let z = row[piv];
        if z != cr(0.0) {
            row.axpy(-z, &r, cr(1.0));
            row[piv] = cr(0.0);
        }
    }
    rows.push((piv, r));
}

/// How to complete a subspace to a basis of the whole algebra.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Complement {
    Orthogonal,
    Random(u64),
}

fn complement_basis(s: &Subspace, how: Complement) -> Vec<CVec> {
    let n = s.ambient();
    let mut acc = s.vectors();
    let start = acc.len();
    let candidates: Vec<CVec> = match how {
        Complement::Orthogonal => (0..n)
            .map(|i| {
                let mut e = CVec::zeros(n);
                e[i] = cr(1.0);
                e
            })
            .collect(),
        Complement::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..4 * n + 8).map(|_| CVec::from_fn(n, |_, _| rand_c(&mut rng))).collect()
        }
    };
    for v in candidates {
        if acc.len() == n {
            break;
        }
        let trial = Subspace::span(n, &acc);
        if trial.residual(&v) > 1e-6 * v.norm() {
            acc.push(match how {
                Complement::Orthogonal => {
                    let p = trial.basis() * (trial.basis().adjoint() * &v);
                    let w = &v - p;
                    let nrm = w.norm();
                    w / cr(nrm)
                }
                Complement::Random(_) => v,
            });
        }
    }
    acc.split_off(start)
}

/// A renormalization `τ_R` of a trace `τ` on `J^{n+1}` and its coboundary `τ_R∂`.
///
/// Functionals act by the bilinear pairing `φ(x) = Σ φ_i x_i`.
#[derive(Clone, Debug)]
pub struct Renormalization {
    pub level: usize,
    pub tau_r: CVec,
    pub boundary: CVec,
}

impl Renormalization {
    pub fn eval(&self, x: &CVec) -> C64 {
        self.tau_r.dot(x)
    }

    /// `τ_R∂` on a class in `Ω¹A_♮`.
    pub fn eval_boundary(&self, w: &CVec) -> C64 {
        self.boundary.dot(w)
    }
}

/// Extends `τ` (a functional on `A`, only its values on `J^{n+1}` matter) by zero on a
/// complement of `J^{n+1}`, after checking that `τ` is a cocycle on `F^{2n+1}_J X(A)`.
pub fn renormalize_extend(xc: &XComplex, ideal: &Subspace, n: usize, tau: &CVec, how: Complement) -> Result<Renormalization> {
    let d = xc.dim();
    if tau.len() != d {
        return Err(Error::Arity { expected: d, got: tau.len() });
    }
    let (even, odd) = xc.filtration(ideal, 2 * n as i32 + 1);
    let scale = 1.0 + vmax(tau);
    let defect = odd.vectors().iter().map(|w| tau.dot(&(xc.b_bar() * w)).norm()).fold(0.0, f64::max);
    if defect > 1e-10 * scale {
        return Err(Error::NotTrace(defect));
    }
    let s = even.vectors();
    let comp = complement_basis(&even, how);
    let mut cols = s.clone();
    cols.extend(comp);
    let p = CMat::from_columns(&cols);
    let mut w = CVec::zeros(d);
    for (i, v) in s.iter().enumerate() {
        w[i] = tau.dot(v);
    }
    let pinv_t = p.transpose().try_inverse().ok_or_else(|| Error::Invalid("degenerate complement".into()))?;
    let tau_r = pinv_t * w;
    let boundary = xc.b_bar().transpose() * &tau_r;
    Ok(Renormalization { level: n, tau_r, boundary })
}

/// A linear splitting `σ : M/K → M`, stored as the projection onto its image along `K`.
#[derive(Clone, Debug)]
pub struct Splitting {
    proj: CMat,
}

impl Splitting {
    pub fn apply(&self, a: &CVec) -> CVec {
        &self.proj * a
    }
}

/// A finite nilpotent extension `0 → R + N → M → A → 0` with distinguished ideals `R`, `N`.
#[derive(Clone, Debug)]
pub struct FiniteExtension {
    pub xc: XComplex,
    pub r: Subspace,
    pub n: Subspace,
    k: Subspace,
    unit: CVec,
}

impl FiniteExtension {
    pub fn new(alg: FiniteAlgebra, r: Subspace, n: Subspace) -> Result<Self> {
        alg.check_ideal(&r)?;
        alg.check_ideal(&n)?;
        if alg.nilpotency_degree(&n).is_none() {
            return Err(Error::Invalid("N is not nilpotent".into()));
        }
        let unit = alg.unit().ok_or_else(|| Error::Invalid("M must be unital".into()))?;
        let k = r.sum(&n);
        Ok(FiniteExtension { xc: XComplex::build(alg), r, n, k, unit })
    }

    /// `M = M_m(ℂ[y]/(y^deg))`, `R = (y^p)`, `N = 0`; the quotient `M_m(ℂ[x]/(x^p))` does not split for `p ≥ 2`.
    pub fn truncated(m: usize, deg: usize, p: usize) -> Result<Self> {
        let alg = FiniteAlgebra::truncated_polynomial(m, deg);
        let mm = m * m;
        let r = Subspace::span(alg.dim(), &(p * mm..deg * mm).map(|i| alg.basis_vector(i)).collect::<Vec<_>>());
        let n = Subspace::zero(alg.dim());
        FiniteExtension::new(alg, r, n)
    }

    pub fn algebra(&self) -> &FiniteAlgebra {
        self.xc.algebra()
    }

    pub fn kernel(&self) -> &Subspace {
        &self.k
    }

    /// Splitting whose image is the chosen complement of `K = R + N`.
    pub fn splitting(&self, how: Complement) -> Splitting {
        let d = self.xc.dim();
        let w = complement_basis(&self.k, how);
        let mut cols = self.k.vectors();
        let kd = cols.len();
        cols.extend(w);
        let p = CMat::from_columns(&cols);
        let pinv = p.clone().try_inverse().expect("complement completes a basis");
        let mut sel = CMat::zeros(d, d);
        for i in kd..d {
            sel[(i, i)] = cr(1.0);
        }
        Splitting { proj: p * sel * pinv }
    }

    /// Splitting with image spanned by the given vectors (which must complement `K`).
    pub fn splitting_onto(&self, image: &[CVec]) -> Result<Splitting> {
        let d = self.xc.dim();
        let mut cols = self.k.vectors();
        let kd = cols.len();
        cols.extend(image.iter().cloned());
        if cols.len() != d {
            return Err(Error::Arity { expected: d - kd, got: image.len() });
        }
        let p = CMat::from_columns(&cols);
        let pinv = p.clone().try_inverse().ok_or_else(|| Error::Invalid("image does not complement K".into()))?;
        let mut sel = CMat::zeros(d, d);
        for i in kd..d {
            sel[(i, i)] = cr(1.0);
        }
        Ok(Splitting { proj: p * sel * pinv })
    }

    /// `σ' = σ + φ∘σ` for a random `K`-valued `φ`.
    pub fn perturb(&self, s: &Splitting, seed: u64) -> Splitting {
        let d = self.xc.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kb = self.k.basis();
        let phi = kb * CMat::from_fn(kb.ncols(), d, |_, _| rand_c(&mut rng));
        Splitting { proj: (CMat::identity(d, d) + phi) * &s.proj }
    }

    /// The image under `σ_*` of the relative cycle `♮ ĝ⁻¹_L 𝐝ĝ` attached to an invertible `g`
    /// (given by any representative together with a representative `h` of its inverse),
    /// where `ĝ⁻¹_L = σ(h) Σ_{k<L} (1 − σ(g)σ(h))^k`; returns `τ_R∂` of it.
    pub fn probe(&self, ren: &Renormalization, s: &Splitting, g: &CVec, h: &CVec, l: usize) -> C64 {
        let alg = self.algebra();
        let sg = s.apply(g);
        let sh = s.apply(h);
        let t = &self.unit - alg.mul(&sg, &sh);
        let mut term = sh.clone();
        let mut u = CVec::zeros(alg.dim());
        for _ in 0..l {
            u += &term;
            term = alg.mul(&term, &t);
        }
        let w = self.xc.natural_form(&self.xc.plus(&u), &sg);
        ren.eval_boundary(&w)
    }

    /// [`probe`](Self::probe) at `L` and `L + 1`; fails if the value still depends on `L`.
    pub fn probe_stable(&self, ren: &Renormalization, s: &Splitting, g: &CVec, h: &CVec, l: usize) -> Result<C64> {
        let a = self.probe(ren, s, g, h, l);
        let b = self.probe(ren, s, g, h, l + 1);
        if (a - b).norm() > 1e-10 * (1.0 + a.norm()) {
            return Err(Error::Truncation { length: l, moved: (a - b).norm() });
        }
        Ok(a)
    }

    /// A random invertible element and its inverse in `M`.
    pub fn random_invertible(&self, rng: &mut ChaCha8Rng) -> (CVec, CVec) {
        let alg = self.algebra();
        loop {
            let g = alg.random_element(rng) + &self.unit * cr(2.0);
            if let Some(inv) = alg.matrix(&g).try_inverse() {
                if alg.membership_defect(&inv) < 1e-9 {
                    return (g.clone(), alg.coords(&inv));
                }
            }
        }
    }
}

/// `τ(Σ_k y^k X_k) = Σ w_k tr X_k` on `M_m(ℂ[y]/(y^deg))`.
pub fn polynomial_trace(m: usize, deg: usize, weights: &[(usize, C64)]) -> CVec {
    let mm = m * m;
    let mut tau = CVec::zeros(deg * mm);
    for &(k, w) in weights {
        if k < deg {
            for p in 0..m {
                tau[k * mm + p * m + p] += w;
            }
        }
    }
    tau
}

/// An element of `C₁ ⊗ M₂(M⁺)`: Clifford grade, the `M`-valued `2m×2m` block matrix,
/// and the `2×2` scalar matrix multiplying the adjoined unit.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperElement {
    pub odd: bool,
    pub x: CMat,
    pub l: CMat,
}

impl SuperElement {
    pub fn even(x: CMat) -> Self {
        SuperElement { odd: false, l: CMat::zeros(2, 2), x }
    }

    pub fn unit(m: usize) -> Self {
        SuperElement { odd: false, x: CMat::zeros(2 * m, 2 * m), l: CMat::identity(2, 2) }
    }

    /// `F = ε ⊗ diag(1, −1)`.
    pub fn f(m: usize) -> Self {
        let mut l = CMat::zeros(2, 2);
        l[(0, 0)] = cr(1.0);
        l[(1, 1)] = cr(-1.0);
        SuperElement { odd: true, x: CMat::zeros(2 * m, 2 * m), l }
    }

    fn half(&self) -> usize {
        self.x.nrows() / 2
    }

    fn lift(&self, l: &CMat) -> CMat {
        l.kronecker(&CMat::identity(self.half(), self.half()))
    }

    pub fn mul(&self, o: &SuperElement) -> SuperElement {
        let x = &self.x * &o.x + &self.x * self.lift(&o.l) + self.lift(&self.l) * &o.x;
        SuperElement { odd: self.odd ^ o.odd, x, l: &self.l * &o.l }
    }

    pub fn add(&self, o: &SuperElement) -> SuperElement {
        assert_eq!(self.odd, o.odd, "mixed Clifford grades");
        SuperElement { odd: self.odd, x: &self.x + &o.x, l: &self.l + &o.l }
    }

    pub fn sub(&self, o: &SuperElement) -> SuperElement {
        self.add(&o.scale(cr(-1.0)))
    }

    pub fn scale(&self, z: C64) -> SuperElement {
        SuperElement { odd: self.odd, x: &self.x * z, l: &self.l * z }
    }

    /// `[F, x]` for an even `x`.
    pub fn f_commutator(&self) -> SuperElement {
        let f = SuperElement::f(self.half());
        f.mul(self).sub(&self.mul(&f))
    }

    pub fn is_unit_only(&self) -> bool {
        self.x.iter().all(|z| *z == cr(0.0))
    }

    fn block(&self, i: usize, j: usize) -> CMat {
        let m = self.half();
        self.x.view((i * m, j * m), (m, m)).into_owned()
    }
}

fn prod(xs: &[SuperElement]) -> SuperElement {
    let mut it = xs.iter();
    let first = it.next().expect("nonempty product").clone();
    it.fold(first, |acc, x| acc.mul(x))
}

/// A pair (even part in `M⁺`, odd part in `Ω¹M_♮` coordinates).
#[derive(Clone, Debug, PartialEq)]
pub struct XElement {
    pub even: CVec,
    pub odd: CVec,
}

impl XElement {
    pub fn zero(d: usize, q: usize) -> Self {
        XElement { even: CVec::zeros(d + 1), odd: CVec::zeros(q) }
    }

    pub fn max_abs(&self) -> f64 {
        vmax(&self.even).max(vmax(&self.odd))
    }

    pub fn dist(&self, o: &XElement) -> f64 {
        vmax(&(&self.even - &o.even)).max(vmax(&(&self.odd - &o.odd)))
    }
}

/// An elementary form `coef · x₀ 𝐝x₁ … 𝐝x_k` over `M^s_+`, with `x₀` possibly the unit.
#[derive(Clone, Debug)]
pub struct Chain {
    pub terms: Vec<(C64, Vec<SuperElement>)>,
}

impl Chain {
    pub fn single(xs: Vec<SuperElement>) -> Self {
        Chain { terms: vec![(cr(1.0), xs)] }
    }

    /// Hochschild boundary `b`.
    pub fn b(&self) -> Chain {
        let mut out = Vec::new();
        for (z, xs) in &self.terms {
            let n = xs.len() - 1;
            if n == 0 {
                continue;
            }
            let mut head = vec![xs[0].mul(&xs[1])];
            head.extend(xs[2..].iter().cloned());
            out.push((*z, head));
            for i in 1..n {
                let mut v: Vec<SuperElement> = xs[..i].to_vec();
                v.push(xs[i].mul(&xs[i + 1]));
                v.extend(xs[i + 2..].iter().cloned());
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                out.push((*z * s, v));
            }
            let mut last = vec![xs[n].mul(&xs[0])];
            last.extend(xs[1..n].iter().cloned());
            let s = if n % 2 == 0 { 1.0 } else { -1.0 };
            out.push((*z * s, last));
        }
        Chain { terms: out }
    }

    /// Connes boundary `B`.
    pub fn big_b(&self) -> Chain {
        let mut out = Vec::new();
        for (z, xs) in &self.terms {
            let n = xs.len() - 1;
            let x0 = SuperElement { l: CMat::zeros(2, 2), ..xs[0].clone() };
            if x0.is_unit_only() {
                continue;
            }
            let m = x0.half();
            let mut forms = vec![x0];
            forms.extend(xs[1..].iter().cloned());
            for i in 0..=n {
                let mut v = vec![SuperElement::unit(m)];
                v.extend(forms[i..].iter().cloned());
                v.extend(forms[..i].iter().cloned());
                let s = if (n * i) % 2 == 0 { 1.0 } else { -1.0 };
                out.push((*z * s, v));
            }
        }
        Chain { terms: out }
    }

    pub fn degree_part(&self, k: usize) -> Chain {
        Chain { terms: self.terms.iter().filter(|(_, xs)| xs.len() == k + 1).cloned().collect() }
    }
}

/// Finite model for the odd quasihomomorphism cochains: `M^s_+ = (M R; R M)` with `M ⊆ M_m(ℂ)`.
#[derive(Clone, Debug)]
pub struct SuperModel {
    pub xc: XComplex,
    pub r: Subspace,
    m: usize,
    /// Global sign applied to both η̂ components.
    pub eta_sign: f64,
}

/// Sign convention fixing the transgression identity (see [`SuperModel::eta_sign`]).
pub const ETA_SIGN: f64 = 1.0;

impl SuperModel {
    pub fn new(alg: FiniteAlgebra, r: Subspace) -> Result<Self> {
        alg.check_ideal(&r)?;
        let m = alg.matrix_size();
        Ok(SuperModel { xc: XComplex::build(alg), r, m, eta_sign: ETA_SIGN })
    }

    /// `M = M_m(ℂ)`, `R = M`: the `2m × 2m` matrix model.
    pub fn full(m: usize) -> Self {
        let alg = FiniteAlgebra::full_matrix(m);
        let r = Subspace::full(alg.dim());
        SuperModel::new(alg, r).expect("full algebra is an ideal")
    }

    pub fn matrix_size(&self) -> usize {
        self.m
    }

    fn alg(&self) -> &FiniteAlgebra {
        self.xc.algebra()
    }

    /// Checks that `x` lies in `M^s_+` (diagonal blocks in `M`, off-diagonal blocks in `R`).
    pub fn element(&self, x: CMat) -> Result<SuperElement> {
        let s = SuperElement::even(x);
        let alg = self.alg();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let b = s.block(i, j);
            let def = alg.membership_defect(&b);
            let off = if i != j { self.r.residual(&alg.coords(&b)) } else { 0.0 };
            if def.max(off) > 1e-10 * (1.0 + b.norm()) {
                return Err(Error::Invalid(format!("block ({i},{j}) leaves the superalgebra")));
            }
        }
        Ok(s)
    }

    pub fn random_element(&self, rng: &mut ChaCha8Rng) -> SuperElement {
        let alg = self.alg();
        let m = self.m;
        let mut x = CMat::zeros(2 * m, 2 * m);
        let rb = self.r.basis();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let v = if i == j {
                alg.random_element(rng)
            } else {
                rb * CVec::from_fn(rb.ncols(), |_, _| rand_c(rng))
            };
            x.view_mut((i * m, j * m), (m, m)).copy_from(&alg.matrix(&v));
        }
        SuperElement::even(x)
    }

    /// Random diagonal element (commutes with `F`).
    pub fn random_diagonal(&self, rng: &mut ChaCha8Rng) -> SuperElement {
        let mut s = self.random_element(rng);
        let m = self.m;
        s.x.view_mut((0, m), (m, m)).fill(cr(0.0));
        s.x.view_mut((m, 0), (m, m)).fill(cr(0.0));
        s
    }

    fn plus_coords(&self, x: &CMat, l: C64) -> CVec {
        let mut v = self.xc.plus(&self.alg().coords(x));
        v[self.xc.dim()] = l;
        v
    }

    /// Odd supertrace `ε ⊗ (a b; c d) ↦ −√(2i)(a + d)`, valued in `M⁺`.
    pub fn supertrace(&self, s: &SuperElement) -> CVec {
        let d = self.xc.dim();
        if !s.odd {
            return CVec::zeros(d + 1);
        }
        let a = s.block(0, 0) + s.block(1, 1);
        self.plus_coords(&a, s.l[(0, 0)] + s.l[(1, 1)]) * (-sqrt_2i())
    }

    /// `tr_s ♮(a · 𝐝x · c)` for an even `x ∈ M^s_+`.
    pub fn supertrace_natural(&self, a: &SuperElement, x: &SuperElement, c: &SuperElement) -> CVec {
        let q = self.xc.quotient_dim();
        let ca = c.mul(a);
        if !ca.odd {
            return CVec::zeros(q);
        }
        let d = self.xc.dim();
        let alg = self.alg();
        let mut t = CVec::zeros((d + 1) * d);
        for j in 0..2 {
            for k in 0..2 {
                let left = self.plus_coords(&ca.block(j, k), ca.l[(j, k)]);
                let right = alg.coords(&x.block(k, j));
                t += tensor(&left, &right);
            }
        }
        let sign = if c.odd { sqrt_2i() } else { -sqrt_2i() };
        self.xc.natural(&t) * sign
    }

    fn comms(&self, xs: &[SuperElement]) -> Vec<SuperElement> {
        xs.iter().map(|x| x.f_commutator()).collect()
    }

    fn unit(&self) -> SuperElement {
        SuperElement::unit(self.m)
    }

    /// `x₀[F,x₁]…𝐝x_i…[F,x_k]` summed over `i` with weights `w(i)`, traced into `Ω¹M_♮`.
    fn natural_sum(&self, left0: &SuperElement, xs: &[SuperElement], weight: impl Fn(usize) -> SuperElement) -> CVec {
        let k = xs.len() - 1;
        let fc = self.comms(xs);
        let mut acc = CVec::zeros(self.xc.quotient_dim());
        for i in 1..=k {
            let mut a = weight(i).mul(left0);
            for f in &fc[1..i] {
                a = a.mul(f);
            }
            let c = if i < k { prod(&fc[i + 1..]) } else { self.unit() };
            acc += self.supertrace_natural(&a, &xs[i], &c);
        }
        acc
    }

    /// `χ̂ⁿ₀(x₀𝐝x₁…𝐝xₙ)`.
    pub fn chi0(&self, n: usize, xs: &[SuperElement]) -> Result<CVec> {
        check_odd(n)?;
        if xs.len() != n + 1 {
            return Err(Error::Arity { expected: n + 1, got: xs.len() });
        }
        check_even(xs)?;
        let coef = -gamma(1.0 + n as f64 / 2.0) / factorial(n + 1);
        let mut acc = CVec::zeros(self.xc.dim() + 1);
        for k in 0..=n {
            let rot: Vec<SuperElement> = (0..=n).map(|i| xs[(i + k) % (n + 1)].clone()).collect();
            let mut p = rot[0].clone();
            for x in &rot[1..] {
                p = p.mul(&x.f_commutator());
            }
            let s = if (k * n) % 2 == 0 { 1.0 } else { -1.0 };
            acc += self.supertrace(&p) * cr(s);
        }
        Ok(acc * cr(coef))
    }

    /// `χ̂ⁿ₁(x₀𝐝x₁…𝐝x_{n+1})`.
    pub fn chi1(&self, n: usize, xs: &[SuperElement]) -> Result<CVec> {
        check_odd(n)?;
        if xs.len() != n + 2 {
            return Err(Error::Arity { expected: n + 2, got: xs.len() });
        }
        check_even(xs)?;
        let coef = -gamma(1.0 + n as f64 / 2.0) / factorial(n + 1);
        let one = self.unit();
        Ok(self.natural_sum(&xs[0], xs, |_| one.clone()) * cr(coef))
    }

    /// `η̂ⁿ⁺¹₀(x₀𝐝x₁…𝐝x_{n+1})`.
    pub fn eta0(&self, n: usize, xs: &[SuperElement]) -> Result<CVec> {
        check_odd(n)?;
        if xs.len() != n + 2 {
            return Err(Error::Arity { expected: n + 2, got: xs.len() });
        }
        check_even(xs)?;
        let coef = self.eta_sign * gamma(n as f64 / 2.0 + 1.0) / factorial(n + 2) * 0.5;
        let f = SuperElement::f(self.m);
        let fc = self.comms(xs);
        let fx0 = f.mul(&xs[0]);
        let mut total = fx0.clone();
        for c in &fc[1..] {
            total = total.mul(c);
        }
        let mut acc = self.supertrace(&total);
        for i in 1..=n + 1 {
            let mut p = fc[i].clone();
            for c in &fc[i + 1..] {
                p = p.mul(c);
            }
            p = p.mul(&fx0);
            for c in &fc[1..i] {
                p = p.mul(c);
            }
            let s = if ((n + 1) * i) % 2 == 0 { 1.0 } else { -1.0 };
            acc += self.supertrace(&p) * cr(s);
        }
        Ok(acc * cr(coef))
    }

    /// `η̂ⁿ⁺¹₁(x₀𝐝x₁…𝐝x_{n+2})`.
    pub fn eta1(&self, n: usize, xs: &[SuperElement]) -> Result<CVec> {
        check_odd(n)?;
        if xs.len() != n + 3 {
            return Err(Error::Arity { expected: n + 3, got: xs.len() });
        }
        check_even(xs)?;
        let coef = self.eta_sign * gamma(n as f64 / 2.0 + 1.0) / factorial(n + 3) * 0.5;
        let f = SuperElement::f(self.m);
        let one = self.unit();
        let nn = n as f64;
        let v = self.natural_sum(&one, xs, |i| {
            xs[0].mul(&f).scale(cr(i as f64)).add(&f.mul(&xs[0]).scale(cr(nn + 3.0 - i as f64)))
        });
        Ok(v * cr(coef))
    }

    /// `χ̂ⁿ` on a chain, as an [`XElement`].
    pub fn chi(&self, n: usize, ch: &Chain) -> Result<XElement> {
        let mut out = XElement::zero(self.xc.dim(), self.xc.quotient_dim());
        for (z, xs) in &ch.terms {
            if xs.len() == n + 1 {
                out.even += self.chi0(n, xs)? * *z;
            } else if xs.len() == n + 2 {
                out.odd += self.chi1(n, xs)? * *z;
            }
        }
        Ok(out)
    }

    /// `η̂ⁿ⁺¹` on a chain.
    pub fn eta(&self, n: usize, ch: &Chain) -> Result<XElement> {
        let mut out = XElement::zero(self.xc.dim(), self.xc.quotient_dim());
        for (z, xs) in &ch.terms {
            if xs.len() == n + 2 {
                out.even += self.eta0(n, xs)? * *z;
            } else if xs.len() == n + 3 {
                out.odd += self.eta1(n, xs)? * *z;
            }
        }
        Ok(out)
    }

    /// The X-complex boundary `∂ = ♮𝐝 ⊕ b̄`.
    pub fn boundary(&self, x: &XElement) -> XElement {
        let d = self.xc.dim();
        let even_m = x.even.rows(0, d).into_owned();
        XElement { even: self.xc.plus(&(self.xc.b_bar() * &x.odd)), odd: self.xc.natural_d() * even_m }
    }

    /// `max ‖(χ̂ⁿ − χ̂ⁿ⁺²)(ω) − (∂η̂ⁿ⁺¹ − η̂ⁿ⁺¹(b+B))(ω)‖` over the given chains.
    pub fn transgression_defect(&self, n: usize, chains: &[Chain]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for ch in chains {
            let lhs = {
                let a = self.chi(n, ch)?;
                let b = self.chi(n + 2, ch)?;
                XElement { even: a.even - b.even, odd: a.odd - b.odd }
            };
            let eta = self.eta(n, ch)?;
            let d_eta = self.boundary(&eta);
            let mut bb = ch.b();
            bb.terms.extend(ch.big_b().terms);
            let eta_b = self.eta(n, &bb)?;
            let rhs = XElement { even: d_eta.even - eta_b.even, odd: d_eta.odd - eta_b.odd };
            worst = worst.max(lhs.dist(&rhs));
        }
        Ok(worst)
    }

    /// `max ‖∂χ̂ⁿ(ω) + χ̂ⁿ((b+B)ω)‖`; `χ̂ⁿ` is an odd chain map.
    pub fn chain_map_defect(&self, n: usize, chains: &[Chain]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for ch in chains {
            let lhs = self.boundary(&self.chi(n, ch)?);
            let mut bb = ch.b();
            bb.terms.extend(ch.big_b().terms);
            let rhs = self.chi(n, &bb)?;
            let rhs = XElement { even: -rhs.even, odd: -rhs.odd };
            worst = worst.max(lhs.dist(&rhs));
        }
        Ok(worst)
    }

    /// Random combination of elementary chains of every degree `n..=n+3`, half of them unit-headed.
    pub fn random_window_chain(&self, n: usize, rng: &mut ChaCha8Rng) -> Chain {
        let mut terms = Vec::new();
        for k in n..=n + 3 {
            for unit_head in [false, true] {
                let z = rand_c(rng);
                terms.extend(self.random_chain(k, unit_head, rng).terms.into_iter().map(|(w, xs)| (w * z, xs)));
            }
        }
        Chain { terms }
    }

    /// Worst transgression defect over `trials` random window chains.
    pub fn transgression_trials(&self, n: usize, trials: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chains: Vec<Chain> = (0..trials).map(|_| self.random_window_chain(n, &mut rng)).collect();
        self.transgression_defect(n, &chains)
    }

    /// Random elementary chain of form degree `k` (with `x₀ = 1` when `unit_head`).
    pub fn random_chain(&self, k: usize, unit_head: bool, rng: &mut ChaCha8Rng) -> Chain {
        let mut xs = vec![if unit_head { self.unit() } else { self.random_element(rng) }];
        xs.extend((0..k).map(|_| self.random_element(rng)));
        Chain::single(xs)
    }
}

fn sqrt_2i() -> C64 {
    c(1.0, 1.0)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn check_even(xs: &[SuperElement]) -> Result<()> {
    match xs.iter().position(|x| x.odd) {
        Some(i) => Err(Error::Parity(format!("entry {i} is odd-graded"))),
        None => Ok(()),
    }
}

fn check_odd(n: usize) -> Result<()> {
    if n % 2 == 0 {
        return Err(Error::Degree(format!("cochain degree {n} must be odd")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn mat_max(m: &CMat) -> f64 {
        m.iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    fn strict_upper(alg: &FiniteAlgebra) -> Subspace {
        let m = alg.matrix_size();
        let v: Vec<CVec> = (0..alg.dim())
            .filter(|&i| {
                let b = &alg.basis()[i];
                (0..m).all(|p| (0..=p).all(|q| b[(p, q)] == cr(0.0)))
            })
            .map(|i| alg.basis_vector(i))
            .collect();
        Subspace::span(alg.dim(), &v)
    }

    fn poly_ideal(m: usize, deg: usize, p: usize) -> (FiniteAlgebra, Subspace) {
        let alg = FiniteAlgebra::truncated_polynomial(m, deg);
        let mm = m * m;
        let r = Subspace::span(alg.dim(), &(p * mm..deg * mm).map(|i| alg.basis_vector(i)).collect::<Vec<_>>());
        (alg, r)
    }

    #[test]
    fn b_bar_of_natural_form_is_commutator() {
        let xc = XComplex::build(FiniteAlgebra::full_matrix(2));
        let alg = xc.algebra();
        let mut r = rng(1);
        for _ in 0..10 {
            let x = alg.random_element(&mut r);
            let y = alg.random_element(&mut r);
            let lhs = xc.b_bar() * xc.natural_form(&xc.plus(&x), &y);
            assert!(vmax(&(lhs - alg.commutator(&x, &y))) < 1e-12);
            let z = alg.random_element(&mut r);
            let zz = alg.mul(&z, &z);
            assert!(vmax(&(xc.b_bar() * xc.natural_form(&xc.plus(&z), &zz))) < 1e-12);
        }
    }

    #[test]
    fn boundary_squares_to_zero() {
        for alg in [FiniteAlgebra::full_matrix(2), FiniteAlgebra::upper_triangular(3), FiniteAlgebra::truncated_polynomial(2, 3)] {
            let xc = XComplex::build(alg);
            assert!(mat_max(&(xc.b_bar() * xc.natural_d())) < 1e-12);
            assert!(mat_max(&(xc.natural_d() * xc.b_bar())) < 1e-12);
        }
    }

    #[test]
    fn natural_quotient_dimension_is_basis_independent() {
        let xc = XComplex::build(FiniteAlgebra::full_matrix(2));
        assert_eq!(xc.quotient_dim(), 3);
        let mut basis = FiniteAlgebra::full_matrix(2).basis().to_vec();
        basis.reverse();
        basis.swap(0, 2);
        let other = XComplex::build(FiniteAlgebra::from_matrices(basis, None).unwrap());
        assert_eq!(other.quotient_dim(), 3);

        let alg = FiniteAlgebra::full_matrix(2);
        let d = alg.dim();
        let mut rows = Vec::new();
        for x in 0..d {
            for y in 0..=d {
                for z in 0..d {
                    let xv = alg.basis_vector(x);
                    let zv = alg.basis_vector(z);
                    let yv = if y == d { unit_plus(d) } else { xc.plus(&alg.basis_vector(y)) };
                    let xy = if y == d { xc.plus(&xv) } else { xc.plus(&alg.mul(&xv, &alg.basis_vector(y))) };
                    let yz = if y == d { xc.plus(&zv) } else { xc.plus(&alg.mul(&alg.basis_vector(y), &zv)) };
                    rows.push(tensor(&xy, &zv) - tensor(&yv, &alg.mul(&zv, &xv)) + tensor(&yz, &xv));
                }
            }
        }
        let m = CMat::from_columns(&rows);
        let rank = m.svd(false, false).singular_values.iter().filter(|s| **s > 1e-9).count();
        assert_eq!((d + 1) * d - rank, 3);
    }

    #[test]
    fn filtration_is_decreasing() {
        let alg = FiniteAlgebra::upper_triangular(3);
        let j = strict_upper(&alg);
        let xc = XComplex::build(alg);
        for k in -1..6 {
            let (e0, o0) = xc.filtration(&j, k);
            let (e1, o1) = xc.filtration(&j, k + 1);
            assert!(e0.contains_space(&e1, 1e-10), "even F^{} ⊄ F^{k}", k + 1);
            assert!(o0.contains_space(&o1, 1e-10), "odd F^{} ⊄ F^{k}", k + 1);
        }
        assert_eq!(xc.filtration(&j, -1).0.dim(), xc.dim());
        assert_eq!(xc.filtration(&j, 6).0.dim(), 0);
    }

    #[test]
    fn filtration_is_a_subcomplex() {
        let (alg, r) = poly_ideal(2, 4, 1);
        let xc = XComplex::build(alg);
        for k in 0..5 {
            let (even, odd) = xc.filtration(&r, k);
            for v in even.vectors() {
                assert!(odd.contains(&(xc.natural_d() * v), 1e-9));
            }
            for w in odd.vectors() {
                assert!(even.contains(&(xc.b_bar() * w), 1e-9));
            }
        }
    }

    #[test]
    fn structure_constants_round_trip() {
        let alg = FiniteAlgebra::upper_triangular(2);
        let j = strict_upper(&alg);
        let spec = alg.to_spec(&j);
        let text = serde_json::to_string(&spec).unwrap();
        let back: AlgebraSpec = serde_json::from_str(&text).unwrap();
        let (alg2, j2) = FiniteAlgebra::from_spec(&back).unwrap();
        assert_eq!(alg2.dim(), 3);
        assert_eq!(j2.dim(), 1);
        for i in 0..3 {
            for jx in 0..3 {
                for k in 0..3 {
                    assert!((alg.structure_constant(i, jx, k) - alg2.structure_constant(i, jx, k)).norm() < 1e-12);
                }
            }
        }
        assert_eq!(XComplex::build(alg2).quotient_dim(), XComplex::build(alg).quotient_dim());
    }

    #[test]
    fn non_associative_constants_are_rejected() {
        let mut k = vec![cr(0.0); 8];
        k[0] = cr(1.0);
        k[(1 * 2 + 1) * 2] = cr(1.0);
        k[(0 * 2 + 1) * 2 + 1] = cr(1.0);
        assert!(matches!(FiniteAlgebra::from_structure_constants(2, &k), Err(Error::NonAssociative(_))));
    }

    #[test]
    fn non_ideal_is_rejected() {
        let alg = FiniteAlgebra::full_matrix(2);
        let s = Subspace::span(4, &[alg.basis_vector(1)]);
        assert!(matches!(alg.check_ideal(&s), Err(Error::NotIdeal(_))));
    }

    #[test]
    fn renormalization_of_zero_is_zero() {
        let (alg, r) = poly_ideal(2, 4, 1);
        let xc = XComplex::build(alg);
        let ren = renormalize_extend(&xc, &r, 1, &CVec::zeros(xc.dim()), Complement::Random(3)).unwrap();
        assert_eq!(vmax(&ren.boundary), 0.0);
    }

    #[test]
    fn renormalizations_agree_on_the_filtration() {
        let (alg, r) = poly_ideal(2, 5, 1);
        let xc = XComplex::build(alg);
        let tau = polynomial_trace(2, 5, &[(3, c(1.0, 0.2)), (4, cr(-0.7))]);
        let a = renormalize_extend(&xc, &r, 2, &tau, Complement::Orthogonal).unwrap();
        let b = renormalize_extend(&xc, &r, 2, &tau, Complement::Random(11)).unwrap();
        let (even, odd) = xc.filtration(&r, 5);
        for v in even.vectors() {
            assert!((a.eval(&v) - b.eval(&v)).norm() < 1e-10);
            assert!((a.eval(&v) - tau.dot(&v)).norm() < 1e-10);
        }
        for w in odd.vectors() {
            assert!((a.eval_boundary(&w) - b.eval_boundary(&w)).norm() < 1e-10);
        }
        let g = xc.algebra().basis_vector(0);
        let w = xc.natural_form(&xc.plus(&g), &xc.algebra().basis_vector(1));
        assert!((a.eval_boundary(&w) - b.eval_boundary(&w)).norm() > 1e-6 || vmax(&(xc.b_bar() * &w)) < 1e-12);
    }

    #[test]
    fn non_trace_is_rejected() {
        let (alg, r) = poly_ideal(2, 3, 1);
        let xc = XComplex::build(alg);
        let mut tau = CVec::zeros(xc.dim());
        tau[2 * 4 + 1] = cr(1.0);
        assert!(matches!(renormalize_extend(&xc, &r, 1, &tau, Complement::Orthogonal), Err(Error::NotTrace(_))));
    }

    fn probes(ext: &FiniteExtension, n: usize, tau: &CVec, l: usize, seed: u64) -> Vec<[C64; 3]> {
        let a = renormalize_extend(&ext.xc, &ext.r, n, tau, Complement::Orthogonal).unwrap();
        let b = renormalize_extend(&ext.xc, &ext.r, n, tau, Complement::Random(seed)).unwrap();
        let s = ext.splitting(Complement::Random(seed + 1));
        let s2 = ext.perturb(&s, seed + 2);
        let mut r = rng(seed);
        (0..4)
            .map(|_| {
                let (g, h) = ext.random_invertible(&mut r);
                [ext.probe_stable(&a, &s, &g, &h, l).unwrap(), ext.probe_stable(&b, &s, &g, &h, l).unwrap(), ext.probe_stable(&a, &s2, &g, &h, l).unwrap()]
            })
            .collect()
    }

    #[test]
    fn connecting_probes_are_choice_independent() {
        let ext = FiniteExtension::truncated(2, 6, 2).unwrap();
        let tau = polynomial_trace(2, 6, &[(4, c(0.5, 1.0)), (5, cr(2.0))]);
        for v in probes(&ext, 1, &tau, 4, 21) {
            assert!((v[0] - v[1]).norm() < 1e-10);
            assert!((v[0] - v[2]).norm() < 1e-10);
        }
    }

    #[test]
    fn split_extension_probes_vanish() {
        let ext = FiniteExtension::truncated(2, 4, 1).unwrap();
        let tau = polynomial_trace(2, 4, &[(2, cr(1.0)), (3, c(0.0, 1.0))]);
        let ren = renormalize_extend(&ext.xc, &ext.r, 1, &tau, Complement::Random(4)).unwrap();
        let image: Vec<CVec> = (0..4).map(|i| ext.algebra().basis_vector(i)).collect();
        let s = ext.splitting_onto(&image).unwrap();
        let mut r = rng(5);
        for _ in 0..5 {
            let (g, h) = ext.random_invertible(&mut r);
            assert!(ext.probe_stable(&ren, &s, &g, &h, 3).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn short_truncation_is_detected() {
        let ext = FiniteExtension::truncated(2, 6, 2).unwrap();
        let tau = polynomial_trace(2, 6, &[(4, cr(1.0)), (5, cr(1.0))]);
        let ren = renormalize_extend(&ext.xc, &ext.r, 1, &tau, Complement::Random(8)).unwrap();
        let s = ext.splitting(Complement::Random(9));
        let (g, h) = ext.random_invertible(&mut rng(10));
        assert!(matches!(ext.probe_stable(&ren, &s, &g, &h, 1), Err(Error::Truncation { length: 1, .. })));
        assert!(ext.probe_stable(&ren, &s, &g, &h, 2).is_ok());
    }

    #[test]
    fn f_squares_to_one_and_commutes_with_diagonals() {
        let sm = SuperModel::full(2);
        let f = SuperElement::f(2);
        let one = SuperElement::unit(2);
        assert_eq!(f.mul(&f), one);
        let x = sm.random_diagonal(&mut rng(2));
        assert!(mat_max(&x.f_commutator().x) < 1e-14);
    }

    #[test]
    fn supertrace_of_odd_identity() {
        let sm = SuperModel::full(1);
        let mut x = CMat::zeros(2, 2);
        x[(0, 0)] = cr(1.0);
        x[(1, 1)] = cr(2.0);
        let s = SuperElement { odd: true, x, l: CMat::zeros(2, 2) };
        let t = sm.supertrace(&s);
        assert!((t[0] - c(-3.0, -3.0)).norm() < 1e-14);
        assert_eq!(sm.supertrace(&SuperElement::unit(1)), CVec::zeros(2));
    }

    #[test]
    fn chi_vanishes_on_diagonal_inputs() {
        let sm = SuperModel::full(2);
        let mut r = rng(3);
        for n in [1, 3] {
            let xs: Vec<SuperElement> = (0..n + 2).map(|_| sm.random_diagonal(&mut r)).collect();
            assert!(vmax(&sm.chi0(n, &xs[..n + 1]).unwrap()) < 1e-13);
            assert!(vmax(&sm.chi1(n, &xs).unwrap()) < 1e-13);
            let ys: Vec<SuperElement> = (0..n + 3).map(|_| sm.random_diagonal(&mut r)).collect();
            assert!(vmax(&sm.eta0(n, &ys[..n + 2]).unwrap()) < 1e-13);
            assert!(vmax(&sm.eta1(n, &ys).unwrap()) < 1e-13);
        }
    }

    fn cyclic_sign(perm: &[usize]) -> f64 {
        let mut inv = 0;
        for i in 0..perm.len() {
            for j in i + 1..perm.len() {
                if perm[i] > perm[j] {
                    inv += 1;
                }
            }
        }
        if inv % 2 == 0 { 1.0 } else { -1.0 }
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn chi0_matches_explicit_permutation_sum() {
        let sm = SuperModel::full(2);
        let mut r = rng(4);
        for (n, coef) in [(1usize, -std::f64::consts::PI.sqrt() / 4.0), (3, -0.75 * std::f64::consts::PI.sqrt() / 24.0)] {
            let xs: Vec<SuperElement> = (0..=n).map(|_| sm.random_element(&mut r)).collect();
            let mut acc = CVec::zeros(sm.xc.dim() + 1);
            for perm in permutations(n + 1) {
                let shift = perm[0];
                if (0..=n).any(|i| perm[i] != (i + shift) % (n + 1)) {
                    continue;
                }
                let mut p = xs[perm[0]].clone();
                for &i in &perm[1..] {
                    p = p.mul(&xs[i].f_commutator());
                }
                acc += sm.supertrace(&p) * cr(cyclic_sign(&perm));
            }
            let expected = acc * cr(coef);
            assert!(vmax(&(sm.chi0(n, &xs).unwrap() - &expected)) < 1e-12 * (1.0 + vmax(&expected)));
        }
    }

    #[test]
    fn eta0_matches_written_expansion_at_n1() {
        let sm = SuperModel::full(2);
        let mut r = rng(6);
        let xs: Vec<SuperElement> = (0..3).map(|_| sm.random_element(&mut r)).collect();
        let f = SuperElement::f(2);
        let fx0 = f.mul(&xs[0]);
        let (c1, c2) = (xs[1].f_commutator(), xs[2].f_commutator());
        let sum = fx0.mul(&c1).mul(&c2).add(&c1.mul(&c2).mul(&fx0)).add(&c2.mul(&fx0).mul(&c1));
        let expected = sm.supertrace(&sum) * cr(std::f64::consts::PI.sqrt() / 12.0 * 0.5);
        assert!(vmax(&(sm.eta0(1, &xs).unwrap() - &expected)) < 1e-12 * (1.0 + vmax(&expected)));
    }

    #[test]
    fn chi1_matches_written_expansion_at_n1() {
        let sm = SuperModel::full(2);
        let mut r = rng(7);
        let xs: Vec<SuperElement> = (0..3).map(|_| sm.random_element(&mut r)).collect();
        let one = SuperElement::unit(2);
        let t1 = sm.supertrace_natural(&xs[0], &xs[1], &xs[2].f_commutator());
        let t2 = sm.supertrace_natural(&xs[0].mul(&xs[1].f_commutator()), &xs[2], &one);
        let expected = (t1 + t2) * cr(-std::f64::consts::PI.sqrt() / 4.0);
        assert!(vmax(&(sm.chi1(1, &xs).unwrap() - &expected)) < 1e-12 * (1.0 + vmax(&expected)));
    }

    #[test]
    fn cochain_arity_and_parity_errors() {
        let sm = SuperModel::full(1);
        let x = sm.random_element(&mut rng(1));
        assert!(matches!(sm.chi0(1, &[x.clone()]), Err(Error::Arity { expected: 2, got: 1 })));
        assert!(matches!(sm.chi0(2, &[x.clone(), x.clone(), x.clone()]), Err(Error::Degree(_))));
        assert!(matches!(sm.chi0(1, &[x.clone(), SuperElement::f(1)]), Err(Error::Parity(_))));
        assert!(matches!(sm.eta1(1, &[x.clone(), x.clone()]), Err(Error::Arity { .. })));
    }

    #[test]
    fn chi_lands_in_the_filtration() {
        let (alg, r) = poly_ideal(1, 5, 1);
        let sm = SuperModel::new(alg, r.clone()).unwrap();
        let mut g = rng(12);
        for n in [1usize, 3] {
            let (even, odd) = sm.xc.filtration(&r, 2 * n as i32 - 1);
            for _ in 0..4 {
                let xs: Vec<SuperElement> = (0..n + 2).map(|_| sm.random_element(&mut g)).collect();
                let e = sm.chi0(n, &xs[..n + 1]).unwrap();
                assert!(even.contains(&e.rows(0, sm.xc.dim()).into_owned(), 1e-9) && e[sm.xc.dim()] == cr(0.0));
                assert!(odd.contains(&sm.chi1(n, &xs).unwrap(), 1e-9));
            }
        }
    }

    #[test]
    fn chi_vanishes_above_degree_n_plus_one() {
        let sm = SuperModel::full(2);
        let mut g = rng(13);
        for n in [1usize, 3] {
            let ch = sm.random_chain(n + 2, false, &mut g);
            assert_eq!(sm.chi(n, &ch).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn chi_is_an_odd_chain_map() {
        let sm = SuperModel::full(2);
        let mut g = rng(14);
        for n in [1usize, 3] {
            let chains: Vec<Chain> = (0..4).map(|_| sm.random_window_chain(n - 1, &mut g)).collect();
            assert!(sm.chain_map_defect(n, &chains).unwrap() < 1e-10);
        }
    }

    #[test]
    fn transgression_holds_and_pins_the_eta_sign() {
        let mut sm = SuperModel::full(2);
        for n in [1usize, 3] {
            assert!(sm.transgression_trials(n, 10, 15).unwrap() < 1e-10);
        }
        sm.eta_sign = -ETA_SIGN;
        assert!(sm.transgression_trials(1, 3, 15).unwrap() > 1e-3);
    }

    #[test]
    fn transgression_with_diagonal_data_is_trivial() {
        let sm = SuperModel::full(2);
        let mut g = rng(16);
        let xs: Vec<SuperElement> = (0..3).map(|_| sm.random_diagonal(&mut g)).collect();
        let ch = Chain::single(xs);
        assert!(sm.chi(1, &ch).unwrap().max_abs() < 1e-13);
        assert!(sm.transgression_defect(1, &[ch]).unwrap() < 1e-13);
    }
}
