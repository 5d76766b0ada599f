//! Numerical checks of the whole pipeline against independent oracles, as rows of a report.
//!
//! Every row compares a value produced by the formula side with an oracle value and carries
//! the tolerance it was judged with. Failures are reported, never hidden: a computation
//! that errors produces a failing row whose note holds the error.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connecting::{
    boundary_cocycle_eval, calibrate_kappa, chern_simons_family, chern_simons_pairing, normalized_pairing, quantize,
    radul_index, winding_symbol, BoundaryInput, CsPath, QuantizeStyle, SigmaChain, SuspensionFamily,
};
use crate::error::Result;
use crate::fedosov::{trace_tau, Ambient};
use crate::forms::{ConnectionSpec, Cycle};
use crate::oracle::{conjugated_pairing, index_idempotent_pairing, toeplitz_family_chern, IndexIdempotent};
use crate::sample;
use crate::symbol::PolyhomSymbol;
use crate::trigpoly::{c, cr, CMat, TrigPoly, C64};
use crate::xcomplex::{polynomial_trace, renormalize_extend, Complement, CVec, FiniteExtension, SuperModel};
use crate::zeta::{trace_defect_identity, wodzicki_residue, zeta_euler_maclaurin, zeta_finite_part};

/// Where the oracle value of a row comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OracleTag {
    /// Computed by an independent numerical method.
    Derived,
    /// A closed-form value known in advance.
    Paper,
    /// Zero by an algebraic identity.
    Trivial,
}

impl OracleTag {
    pub fn label(self) -> &'static str {
        match self {
            OracleTag::Derived => "DERIVED",
            OracleTag::Paper => "PAPER",
            OracleTag::Trivial => "TRIVIAL",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckRow {
    pub criterion: u8,
    pub name: String,
    pub formula: f64,
    pub oracle: f64,
    pub delta: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub tag: OracleTag,
    /// Row instantiates the index theorem in a concrete model.
    pub theorem_check: bool,
    pub note: Option<String>,
}

impl CheckRow {
    fn new(criterion: u8, name: impl Into<String>, formula: f64, oracle: f64, delta: f64, tolerance: f64, tag: OracleTag) -> Self {
        CheckRow {
            criterion,
            name: name.into(),
            formula,
            oracle,
            delta,
            tolerance,
            pass: delta.is_finite() && delta <= tolerance,
            tag,
            theorem_check: false,
            note: None,
        }
    }

    /// `max |deviation|` against an oracle of zero.
    fn zero(criterion: u8, name: impl Into<String>, deviation: f64, tolerance: f64, tag: OracleTag) -> Self {
        CheckRow::new(criterion, name, deviation, 0.0, deviation, tolerance, tag)
    }

    fn failed(criterion: u8, name: impl Into<String>, tolerance: f64, tag: OracleTag, err: impl std::fmt::Display) -> Self {
        let mut r = CheckRow::new(criterion, name, f64::NAN, f64::NAN, f64::INFINITY, tolerance, tag);
        r.note = Some(err.to_string());
        r
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    fn theorem(mut self) -> Self {
        self.theorem_check = true;
        self
    }
}

/// Tolerances of every check, before scaling.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub corpus: f64,
    pub trace_defect: f64,
    pub residue: f64,
    pub zeta: f64,
    pub euler_maclaurin: f64,
    pub fedosov: f64,
    pub boundary: f64,
    pub transgression: f64,
    pub finite_models: f64,
    pub oracle: f64,
    /// Distance of a normalized family pairing from its oracle integer.
    pub family: f64,
    /// Distance between family pairings on two grids.
    pub family_grid: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            corpus: 1e-3,
            trace_defect: 1e-8,
            residue: 1e-10,
            zeta: 1e-12,
            euler_maclaurin: 1e-9,
            fedosov: 1e-9,
            boundary: 1e-8,
            transgression: 1e-10,
            finite_models: 1e-10,
            oracle: 1e-6,
            family: 1e-2,
            family_grid: 1e-2,
        }
    }
}

impl Tolerances {
    pub fn scaled(&self, s: f64) -> Tolerances {
        Tolerances {
            corpus: self.corpus * s,
            trace_defect: self.trace_defect * s,
            residue: self.residue * s,
            zeta: self.zeta * s,
            euler_maclaurin: self.euler_maclaurin * s,
            fedosov: self.fedosov * s,
            boundary: self.boundary * s,
            transgression: self.transgression * s,
            finite_models: self.finite_models * s,
            oracle: self.oracle * s,
            family: self.family * s,
            family_grid: self.family_grid * s,
        }
    }

    /// `(name, value)` pairs in a fixed order.
    pub fn ledger(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("corpus", self.corpus),
            ("trace_defect", self.trace_defect),
            ("residue", self.residue),
            ("zeta", self.zeta),
            ("euler_maclaurin", self.euler_maclaurin),
            ("fedosov", self.fedosov),
            ("boundary", self.boundary),
            ("transgression", self.transgression),
            ("finite_models", self.finite_models),
            ("oracle", self.oracle),
            ("family", self.family),
            ("family_grid", self.family_grid),
        ]
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    /// Windings range over `−max_winding..=max_winding` on each branch.
    pub max_winding: i32,
    pub cutoff: i64,
    pub check_cutoff: i64,
    pub depth: usize,
    pub budget_seconds: f64,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        CorpusSettings { max_winding: 2, cutoff: 128, check_cutoff: 256, depth: 4, budget_seconds: 10.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FamilySettings {
    pub families: Vec<SuspensionFamily>,
    pub grids: Vec<usize>,
    pub fiber_cutoff: usize,
    pub depth: usize,
    /// Depth used to freeze `κ` on the unit shift.
    pub calibration_depth: usize,
    /// Also evaluate the general Chern–Simons path on the first grid.
    pub general_path: bool,
    pub budget_seconds: f64,
}

impl Default for FamilySettings {
    fn default() -> Self {
        FamilySettings {
            families: vec![SuspensionFamily::qwz(), SuspensionFamily::double()],
            grids: vec![24, 48],
            fiber_cutoff: 64,
            depth: 1,
            calibration_depth: 4,
            general_path: true,
            budget_seconds: 600.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrialCounts {
    pub trace_defect: usize,
    pub residue: usize,
    pub fedosov: usize,
    pub chains: usize,
    pub transgression: usize,
    pub finite_models: usize,
    pub conjugations: usize,
}

impl Default for TrialCounts {
    fn default() -> Self {
        TrialCounts { trace_defect: 50, residue: 100, fedosov: 100, chains: 50, transgression: 100, finite_models: 8, conjugations: 20 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSettings {
    pub seed: u64,
    pub tol_scale: f64,
    pub tolerances: Tolerances,
    pub trials: TrialCounts,
    pub corpus: CorpusSettings,
    pub family: FamilySettings,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            seed: 20240917,
            tol_scale: 1.0,
            tolerances: Tolerances::default(),
            trials: TrialCounts::default(),
            corpus: CorpusSettings::default(),
            family: FamilySettings::default(),
        }
    }
}

impl CheckSettings {
    pub fn tol(&self) -> Tolerances {
        self.tolerances.scaled(self.tol_scale)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }
}

/// Wall-clock cost of one criterion, kept out of the deterministic rows.
#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub criterion: u8,
    pub seconds: f64,
    pub budget: Option<f64>,
}

impl Timing {
    pub fn within_budget(&self) -> bool {
        self.budget.is_none_or(|b| self.seconds <= b)
    }
}

fn max_or_fail(
    criterion: u8,
    name: &str,
    tol: f64,
    tag: OracleTag,
    it: impl IntoIterator<Item = Result<f64>>,
) -> CheckRow {
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    for v in it {
        match v {
            Ok(v) => {
                worst = worst.max(v);
                count += 1;
            }
            Err(e) => return CheckRow::failed(criterion, name, tol, tag, e),
        }
    }
    CheckRow::zero(criterion, name, worst, tol, tag).with_note(format!("max over {count} trials"))
}

/// Branch windings `(w₊, w₋)`: Radul and Chern–Simons pairings against the idempotent trace.
pub fn radul_corpus(s: &CheckSettings) -> Vec<CheckRow> {
    let tol = s.tol().corpus;
    let cs = &s.corpus;
    let mut rows = vec![];
    let flat = ConnectionSpec::flat(0);
    for wp in -cs.max_winding..=cs.max_winding {
        for wm in -cs.max_winding..=cs.max_winding {
            let label = format!("w+={wp},w-={wm}");
            let q = winding_symbol(wp, wm);
            let oracle = match index_idempotent_pairing(&q, cs.cutoff, cs.depth) {
                Ok(o) => o,
                Err(e) => {
                    rows.push(CheckRow::failed(1, format!("corpus/oracle[{label}]"), tol, OracleTag::Derived, e));
                    continue;
                }
            };
            let o = oracle.e_trace.re;
            let paths: [(&str, Result<C64>); 2] = [
                ("radul", radul_index(&q, cs.depth)),
                ("chern-simons", chern_simons_pairing(&flat, &q, &Cycle::Point(vec![]), cs.depth, CsPath::General)),
            ];
            for (path, v) in paths {
                let name = format!("corpus/{path}[{label}]");
                rows.push(match v {
                    Ok(v) => CheckRow::new(1, name, v.re, o, (v - oracle.e_trace).norm(), tol, OracleTag::Derived).theorem(),
                    Err(e) => CheckRow::failed(1, name, tol, OracleTag::Derived, e).theorem(),
                });
            }
            let name = format!("corpus/rounding[{label}]");
            rows.push(match index_idempotent_pairing(&q, cs.check_cutoff, cs.depth) {
                Ok(fine) => {
                    let d = (fine.rounded - oracle.rounded).abs() as f64;
                    CheckRow::new(1, name, fine.rounded as f64, oracle.rounded as f64, d, 0.0, OracleTag::Derived)
                        .with_note(format!("N={} vs N={}", cs.check_cutoff, cs.cutoff))
                }
                Err(e) => CheckRow::failed(1, name, 0.0, OracleTag::Derived, e),
            });
        }
    }
    rows
}

/// `Pf Tr([a,b]D^{−z}) = Res Tr(a[ln D,b]D^{−z})` on random `2×2` symbol pairs.
pub fn trace_defect(s: &CheckSettings) -> Vec<CheckRow> {
    let tol = s.tol().trace_defect;
    let mut rng = s.rng(2);
    let trials = (0..s.trials.trace_defect).map(|i| {
        let a = sample::symbol(&mut rng, 1, 2, (i % 2) as i32);
        let b = sample::symbol(&mut rng, 1, 2, -((i % 3) as i32));
        trace_defect_identity(&a, &b, 4).map(|(l, r)| (l - r).norm())
    });
    let trials: Vec<_> = trials.collect();
    vec![max_or_fail(2, "trace-defect", tol, OracleTag::Derived, trials)]
}

/// Residue of commutators, and of symbols that only carry low-mode corrections.
pub fn residue_traciality(s: &CheckSettings) -> Vec<CheckRow> {
    let tol = s.tol().residue;
    let mut rng = s.rng(3);
    let trials: Vec<_> = (0..s.trials.residue)
        .map(|i| {
            let a = sample::symbol(&mut rng, 1, 2, 1 - (i % 2) as i32);
            let b = sample::symbol(&mut rng, 1, 2, -1 - (i % 2) as i32);
            PolyhomSymbol::commutator(&a, &b, 3).and_then(|c| wodzicki_residue(&c)).map(|r| r.mean_scalar().norm())
        })
        .collect();
    let mut rows = vec![max_or_fail(3, "residue/commutator", tol, OracleTag::Trivial, trials)];
    let mut worst: f64 = 0.0;
    let mut err = None;
    for _ in 0..s.trials.residue {
        let z = sample::matrix_poly(&mut rng, 1, 2, 2, true);
        let mut a = PolyhomSymbol::zero(1, 2, 0).with_zero_mode(z);
        for _ in 0..3 {
            let n = rng.random_range(1..=6) * if rng.random_bool(0.5) { 1 } else { -1 };
            a = a.with_correction(n, sample::matrix_poly(&mut rng, 1, 2, 2, true));
        }
        match wodzicki_residue(&a) {
            Ok(r) => worst = worst.max(r.max_abs()),
            Err(e) => err = Some(e),
        }
    }
    rows.push(match err {
        Some(e) => CheckRow::failed(3, "residue/corrections-only", 0.0, OracleTag::Trivial, e),
        None => CheckRow::zero(3, "residue/corrections-only", worst, 0.0, OracleTag::Trivial).with_note("exact zero required"),
    });
    rows
}

/// Zeta finite parts of `1` and `D`, with an Euler–Maclaurin continuation as cross-check.
pub fn zeta_regressions(s: &CheckSettings) -> Vec<CheckRow> {
    let t = s.tol();
    let fp = |a: PolyhomSymbol| zeta_finite_part(&a).map(|r| r.finite_scalar());
    let mut rows = vec![];
    for (name, sym, expect) in [
        ("zeta/Pf Tr(1)", PolyhomSymbol::identity(1, 1), 0.0),
        ("zeta/Pf Tr(D)", PolyhomSymbol::dspec(1, 1), 5.0 / 6.0),
    ] {
        rows.push(match fp(sym) {
            Ok(v) => CheckRow::new(4, name, v.re, expect, (v - cr(expect)).norm(), t.zeta, OracleTag::Paper),
            Err(e) => CheckRow::failed(4, name, t.zeta, OracleTag::Paper, e),
        });
    }
    for (name, sarg, expect) in [("zeta/euler-maclaurin 1+2ζ(0)", 0.0, 0.0), ("zeta/euler-maclaurin 1+2ζ(−1)", -1.0, 5.0 / 6.0)] {
        let v = 1.0 + 2.0 * zeta_euler_maclaurin(sarg);
        rows.push(CheckRow::new(4, name, v, expect, (v - expect).abs(), t.euler_maclaurin, OracleTag::Derived));
    }
    rows
}

/// Vertical connection over `T²` with fiber-dependent coefficients and nonzero curvature.
pub fn reference_torus_connection() -> ConnectionSpec {
    let a1 = TrigPoly::from_terms(3, &[(vec![0, 0, 1], cr(0.1)), (vec![0, 0, -1], cr(0.1))]);
    let a2 = TrigPoly::from_terms(
        3,
        &[(vec![1, 0, 0], cr(0.5)), (vec![-1, 0, 0], cr(0.5)), (vec![0, 0, 1], c(0.0, -0.15)), (vec![0, 0, -1], c(0.0, 0.15))],
    );
    ConnectionSpec::new(2, vec![a1, a2]).expect("valid connection")
}

/// Associativity of `⊙`, `d² = 0`, and `τ` on Fedosov commutators and on `d`-exact elements.
pub fn fedosov_laws(s: &CheckSettings) -> Vec<CheckRow> {
    let tol = s.tol().fedosov;
    let n = s.trials.fedosov;
    let mut rows = vec![];
    let amb = match Ambient::new(reference_torus_connection(), 1, 4) {
        Ok(a) => a,
        Err(e) => return vec![CheckRow::failed(5, "fedosov/ambient", tol, OracleTag::Trivial, e)],
    };
    let mut rng = s.rng(5);
    let assoc: Vec<_> = (0..n)
        .map(|_| {
            let (a, b, c) = (sample::element(&mut rng, &amb, 0), sample::element(&mut rng, &amb, 0), sample::element(&mut rng, &amb, 0));
            let l = a.fedosov_product(&b)?.fedosov_product(&c)?;
            let r = a.fedosov_product(&b.fedosov_product(&c)?)?;
            Ok(l.dist(&r))
        })
        .collect();
    rows.push(max_or_fail(5, "fedosov/associativity", tol, OracleTag::Trivial, assoc));
    let dd: Vec<_> = (0..n)
        .map(|i| {
            let a = sample::element(&mut rng, &amb, i % 2);
            Ok(a.v_differential()?.v_differential()?.max_abs())
        })
        .collect();
    rows.push(max_or_fail(5, "fedosov/d-squared", tol, OracleTag::Trivial, dd));

    // τ needs trace-class inputs: fiber-constant symbols of order −3 against order 0,
    // over a fiber-constant connection with nonzero curvature.
    let scalar_conn = {
        let mut r = s.rng(50);
        ConnectionSpec::new(2, vec![sample::matrix_poly(&mut r, 3, 1, 2, false), sample::matrix_poly(&mut r, 3, 1, 2, false)])
    };
    let amb2 = match scalar_conn.and_then(|c| Ambient::new(c, 2, 2)) {
        Ok(a) => a,
        Err(e) => {
            rows.push(CheckRow::failed(5, "fedosov/trace-ambient", tol, OracleTag::Trivial, e));
            return rows;
        }
    };
    let mut scale: f64 = 0.0;
    let comm: Vec<_> = (0..n)
        .map(|_| {
            let a = sample::fiber_constant_element(&mut rng, &amb2, 0, -3);
            let b = sample::fiber_constant_element(&mut rng, &amb2, 0, 0);
            let ab = a.fedosov_product(&b)?;
            scale = scale.max(trace_tau(&ab, &Cycle::Torus2)?.norm());
            Ok(trace_tau(&ab.sub(&b.fedosov_product(&a)?)?, &Cycle::Torus2)?.norm())
        })
        .collect();
    rows.push(
        max_or_fail(5, "fedosov/tau-commutator", tol, OracleTag::Trivial, comm)
            .with_note(format!("max over {n} trials; largest |τ(a⊙b)| = {scale:.3e}")),
    );
    let exact: Vec<_> = (0..n)
        .map(|_| {
            let o = sample::fiber_constant_element(&mut rng, &amb2, 1, -3);
            Ok(trace_tau(&o.v_differential()?, &Cycle::Torus2)?.norm())
        })
        .collect();
    rows.push(max_or_fail(5, "fedosov/tau-exact", tol, OracleTag::Trivial, exact));
    rows
}

/// Residue formulas for `τ_R ∂` on `σ`-word chains over `T²` against the direct evaluation.
pub fn boundary_formulas(s: &CheckSettings) -> Vec<CheckRow> {
    let tol = s.tol().boundary;
    let amb = match Ambient::new(reference_torus_connection(), 1, 3) {
        Ok(a) => a,
        Err(e) => return vec![CheckRow::failed(6, "boundary/ambient", tol, OracleTag::Derived, e)],
    };
    let mut rng = s.rng(6);
    let sigma = |rng: &mut ChaCha8Rng| {
        let p = sample::poly(rng, 3, 2, 1);
        let m = sample::poly(rng, 3, 2, 1);
        quantize(&p, &m, &QuantizeStyle::default())
    };
    let trials: Vec<_> = (0..s.trials.chains)
        .map(|i| {
            let head = if i % 3 == 2 { None } else { Some(sigma(&mut rng)) };
            let len = if i % 3 == 0 { 1 } else { 3 };
            let tail: Vec<_> = (0..len).map(|_| sigma(&mut rng)).collect();
            let chain = SigmaChain::new(head, tail)?;
            let v = boundary_cocycle_eval(&BoundaryInput::Chain(chain), &amb, &Cycle::Torus2)?;
            let f = v.formula.ok_or_else(|| crate::Error::Invalid("no residue formula for this chain".into()))?;
            Ok((v.direct - f).norm())
        })
        .collect();
    vec![max_or_fail(6, "boundary/residue-formula", tol, OracleTag::Derived, trials)]
}

/// `χ̂ⁿ − χ̂ⁿ⁺² = ∂η̂ⁿ − η̂ⁿ(b+B)` on `M₂(ℂ)` superalgebra data (`4×4` matrices).
pub fn transgression(s: &CheckSettings) -> Vec<CheckRow> {
    let tol = s.tol().transgression;
    let sm = SuperModel::full(2);
    [1usize, 3]
        .iter()
        .map(|&n| {
            let name = format!("transgression/n={n}");
            match sm.transgression_trials(n, s.trials.transgression, s.seed.wrapping_add(70 + n as u64)) {
                Ok(d) => CheckRow::zero(7, name, d, tol, OracleTag::Trivial)
                    .with_note(format!("max over {} trials; η̂ sign +1", s.trials.transgression)),
                Err(e) => CheckRow::failed(7, name, tol, OracleTag::Trivial, e),
            }
        })
        .collect()
}

/// Connecting-map probes on nilpotent extensions of truncated polynomial algebras.
pub fn finite_models(s: &CheckSettings) -> Vec<CheckRow> {
    let tol = s.tol().finite_models;
    let mut rows = vec![];
    let run = || -> Result<(f64, f64, f64, f64)> {
        let ext = FiniteExtension::truncated(2, 6, 2)?;
        let tau = polynomial_trace(2, 6, &[(4, c(0.5, 1.0)), (5, cr(2.0))]);
        let seed = s.seed;
        let a = renormalize_extend(&ext.xc, &ext.r, 1, &tau, Complement::Orthogonal)?;
        let b = renormalize_extend(&ext.xc, &ext.r, 1, &tau, Complement::Random(seed))?;
        let sp = ext.splitting(Complement::Random(seed.wrapping_add(1)));
        let sp2 = ext.perturb(&sp, seed.wrapping_add(2));
        let mut rng = s.rng(8);
        let (mut complement, mut splitting, mut size): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for _ in 0..s.trials.finite_models {
            let (g, h) = ext.random_invertible(&mut rng);
            let v0 = ext.probe_stable(&a, &sp, &g, &h, 4)?;
            complement = complement.max((v0 - ext.probe_stable(&b, &sp, &g, &h, 4)?).norm());
            splitting = splitting.max((v0 - ext.probe_stable(&a, &sp2, &g, &h, 4)?).norm());
            size = size.max(v0.norm());
        }
        let split = FiniteExtension::truncated(2, 4, 1)?;
        let tau = polynomial_trace(2, 4, &[(2, cr(1.0)), (3, c(0.0, 1.0))]);
        let ren = renormalize_extend(&split.xc, &split.r, 1, &tau, Complement::Random(seed.wrapping_add(3)))?;
        let image: Vec<CVec> = (0..4).map(|i| split.algebra().basis_vector(i)).collect();
        let ss = split.splitting_onto(&image)?;
        let mut vanish: f64 = 0.0;
        for _ in 0..s.trials.finite_models {
            let (g, h) = split.random_invertible(&mut rng);
            vanish = vanish.max(split.probe_stable(&ren, &ss, &g, &h, 3)?.norm());
        }
        Ok((complement, splitting, vanish, size))
    };
    match run() {
        Ok((complement, splitting, vanish, size)) => {
            let note = format!("largest probe value {size:.3e}");
            rows.push(CheckRow::zero(8, "finite/complement-independence", complement, tol, OracleTag::Trivial).with_note(note.clone()));
            rows.push(CheckRow::zero(8, "finite/splitting-independence", splitting, tol, OracleTag::Trivial).with_note(note));
            rows.push(CheckRow::zero(8, "finite/split-vanishing", vanish, tol, OracleTag::Trivial));
        }
        Err(e) => rows.push(CheckRow::failed(8, "finite/probes", tol, OracleTag::Trivial, e)),
    }
    rows
}

/// Random invertible matrix acting on the interior modes of both blocks, identity elsewhere.
fn interior_similarity(ix: &IndexIdempotent, rng: &mut ChaCha8Rng) -> CMat {
    let d2 = ix.e_minus_p.nrows();
    let d = d2 / 2;
    let k = ix.k;
    let idx: Vec<usize> = [0, d]
        .iter()
        .flat_map(|&off| ((ix.n_big - ix.n) as usize * k..(ix.n_big + ix.n + 1) as usize * k).map(move |i| off + i))
        .collect();
    let m = idx.len();
    let g = CMat::from_fn(m, m, |_, _| sample::coefficient(rng)) * cr(0.5 / (m as f64).sqrt());
    let mut u = CMat::identity(d2, d2);
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            u[(i, j)] += g[(a, b)];
        }
    }
    u
}

fn diag_symbol(blocks: &[(i32, i32)]) -> PolyhomSymbol {
    let k = blocks.len();
    let entry = |i: usize, j: usize, w: i32| {
        if i == j {
            TrigPoly::exp_mono(1, 1, vec![w], cr(1.0))
        } else {
            TrigPoly::zero(1, 1)
        }
    };
    let plus: Vec<Vec<TrigPoly>> = (0..k).map(|i| (0..k).map(|j| entry(i, j, blocks[i].0)).collect()).collect();
    let minus: Vec<Vec<TrigPoly>> = (0..k).map(|i| (0..k).map(|j| entry(i, j, blocks[i].1)).collect()).collect();
    quantize(&TrigPoly::from_entries(&plus), &TrigPoly::from_entries(&minus), &QuantizeStyle::default())
}

/// The idempotent trace under interior similarities and under block sums.
pub fn oracle_well_defined(s: &CheckSettings) -> Vec<CheckRow> {
    let tol = s.tol().oracle;
    let mut rng = s.rng(9);
    let (n, j) = (32, 4);
    let mut rows = vec![];
    let q = diag_symbol(&[(2, -1)]);
    let conj = index_idempotent_pairing(&q, n, j).map(|ix| {
        (0..s.trials.conjugations)
            .map(|_| {
                let u = interior_similarity(&ix, &mut rng);
                conjugated_pairing(&ix, &u).map(|v| (v - ix.e_trace).norm())
            })
            .collect::<Vec<_>>()
    });
    rows.push(match conj {
        Ok(t) => max_or_fail(9, "oracle/similarity", tol, OracleTag::Trivial, t),
        Err(e) => CheckRow::failed(9, "oracle/similarity", tol, OracleTag::Trivial, e),
    });
    for pair in [[(1, 0), (2, -1)], [(-2, 1), (0, 2)], [(1, 1), (-1, 0)]] {
        let name = format!("oracle/block-sum[{:?}+{:?}]", pair[0], pair[1]);
        let run = || -> Result<(f64, f64)> {
            let whole = index_idempotent_pairing(&diag_symbol(&pair), n, j)?.e_trace;
            let parts = index_idempotent_pairing(&diag_symbol(&pair[..1]), n, j)?.e_trace
                + index_idempotent_pairing(&diag_symbol(&pair[1..]), n, j)?.e_trace;
            Ok((whole.re, parts.re))
        };
        rows.push(match run() {
            Ok((w, p)) => CheckRow::new(9, name, w, p, (w - p).abs(), tol, OracleTag::Derived),
            Err(e) => CheckRow::failed(9, name, tol, OracleTag::Derived, e),
        });
    }
    rows
}

/// Family pairings over `T²` against lattice Chern numbers, all with one frozen `κ`.
pub fn family_index(s: &CheckSettings, kappa: f64) -> Vec<CheckRow> {
    let t = s.tol();
    let fs = &s.family;
    let flat = ConnectionSpec::flat(2);
    let mut rows = vec![];
    for fam in &fs.families {
        let label = format!("a={},c={},m={}", fam.a, fam.c, fam.mass);
        let base = fs.grids.first().copied().unwrap_or(24);
        let oracle = match toeplitz_family_chern(&fam.plus_branch(), base, fs.fiber_cutoff, 1) {
            Ok((_, n)) => n as f64,
            Err(e) => {
                rows.push(CheckRow::failed(10, format!("family/oracle[{label}]"), t.family, OracleTag::Derived, e).theorem());
                continue;
            }
        };
        let q = fam.symbol();
        let mut values = vec![];
        let mut paths: Vec<(usize, CsPath)> = fs.grids.iter().map(|&g| (g, CsPath::Dim2)).collect();
        if fs.general_path {
            paths.push((base, CsPath::General));
        }
        for (g, path) in paths {
            let name = format!("family/{}[{label}] grid {g}", if path == CsPath::Dim2 { "cs" } else { "cs-general" });
            let row = match chern_simons_family(&flat, &q, g, fs.depth, path) {
                Ok(v) => {
                    let x = normalized_pairing(v, 1, kappa);
                    if path == CsPath::Dim2 {
                        values.push((g, x.re));
                    }
                    let d = (x - cr(oracle)).norm();
                    CheckRow::new(10, name, x.re, oracle, d, t.family, OracleTag::Derived)
                        .with_note(format!("oracle: lattice Chern number, fiber cutoff {}, base grid {base}", fs.fiber_cutoff))
                }
                Err(e) => CheckRow::failed(10, name, t.family, OracleTag::Derived, e),
            };
            rows.push(row.theorem());
        }
        if oracle == 0.0 {
            rows.push(CheckRow::new(10, format!("family/nonzero[{label}]"), 0.0, 1.0, 1.0, 0.0, OracleTag::Derived));
        }
        for w in values.windows(2) {
            let (g0, x0) = w[0];
            let (g1, x1) = w[1];
            rows.push(CheckRow::new(10, format!("family/grid[{label}] {g0} vs {g1}"), x1, x0, (x1 - x0).abs(), t.family_grid, OracleTag::Derived));
        }
    }
    rows
}

/// Criterion-level verdict for the index-theorem rows.
pub fn theorem_rows(rows: &[CheckRow]) -> Vec<CheckRow> {
    let tagged: Vec<&CheckRow> = rows.iter().filter(|r| r.theorem_check).collect();
    let has = |c: u8| tagged.iter().any(|r| r.criterion == c);
    let failing = tagged.iter().filter(|r| !r.pass).count();
    let ok = has(1) && has(10) && failing == 0;
    let mut r = CheckRow::new(11, "theorem/point-and-torus", failing as f64, 0.0, if ok { 0.0 } else { 1.0 }, 0.0, OracleTag::Derived);
    r.note = Some(format!("{} tagged rows from the point corpus and the T² families, {failing} failing", tagged.len()));
    vec![r]
}

/// Which check groups to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Zeta,
    Fedosov,
    Xcomplex,
    Oracle,
    Corpus,
    Family,
}

impl Group {
    pub fn all() -> Vec<Group> {
        vec![Group::Corpus, Group::Zeta, Group::Fedosov, Group::Xcomplex, Group::Oracle, Group::Family]
    }

    fn criteria(self) -> &'static [u8] {
        match self {
            Group::Corpus => &[1],
            Group::Zeta => &[2, 3, 4],
            Group::Fedosov => &[5, 6],
            Group::Xcomplex => &[7, 8],
            Group::Oracle => &[9],
            Group::Family => &[10],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub settings: CheckSettings,
    pub kappa: Option<f64>,
    pub tolerances: Vec<(String, f64)>,
    pub rows: Vec<CheckRow>,
    #[serde(skip)]
    pub timings: Vec<Timing>,
}

impl Report {
    pub fn criterion_pass(&self, c: u8) -> Option<bool> {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.criterion == c).collect();
        if rows.is_empty() {
            return None;
        }
        let timed = self.timings.iter().filter(|t| t.criterion == c).all(Timing::within_budget);
        Some(timed && rows.iter().all(|r| r.pass))
    }
}

/// Runs one criterion, timing it.
pub fn run_criterion(s: &CheckSettings, c: u8, kappa: Option<f64>) -> (Vec<CheckRow>, Timing) {
    let t = Instant::now();
    let rows = match c {
        1 => radul_corpus(s),
        2 => trace_defect(s),
        3 => residue_traciality(s),
        4 => zeta_regressions(s),
        5 => fedosov_laws(s),
        6 => boundary_formulas(s),
        7 => transgression(s),
        8 => finite_models(s),
        9 => oracle_well_defined(s),
        10 => match kappa {
            Some(k) => family_index(s, k),
            None => vec![CheckRow::failed(10, "family/calibration", 0.0, OracleTag::Derived, "κ is not calibrated")],
        },
        _ => vec![],
    };
    let budget = match c {
        1 => Some(s.corpus.budget_seconds),
        10 => Some(s.family.budget_seconds),
        _ => None,
    };
    (rows, Timing { criterion: c, seconds: t.elapsed().as_secs_f64(), budget })
}

/// Runs the selected groups; criterion 11 is added whenever both 1 and 10 ran.
pub fn run(s: &CheckSettings, groups: &[Group]) -> Report {
    let mut criteria: Vec<u8> = groups.iter().flat_map(|g| g.criteria().iter().copied()).collect();
    criteria.sort_unstable();
    criteria.dedup();
    let kappa = if criteria.contains(&10) { calibrate_kappa(s.family.calibration_depth).ok() } else { None };
    let mut rows = vec![];
    let mut timings = vec![];
    for c in &criteria {
        let (r, t) = run_criterion(s, *c, kappa);
        log::info!("criterion {c}: {} rows in {:.2}s", r.len(), t.seconds);
        rows.extend(r);
        timings.push(t);
    }
    if criteria.contains(&1) && criteria.contains(&10) {
        rows.extend(theorem_rows(&rows));
    }
    let tolerances = s.tol().ledger().into_iter().map(|(n, v)| (n.to_string(), v)).collect();
    Report { settings: s.clone(), kappa, tolerances, rows, timings }
}
