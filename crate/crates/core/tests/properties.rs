use fibidx_core::checks::{reference_torus_connection, Tolerances};
use fibidx_core::connecting::{normalized_pairing, radul_index, winding_symbol};
use fibidx_core::fedosov::Ambient;
use fibidx_core::oracle::{banded_mul, index_idempotent_pairing};
use fibidx_core::sample;
use fibidx_core::symbol::PolyhomSymbol;
use fibidx_core::trigpoly::{c, CMat, TrigPoly};
use fibidx_core::xcomplex::SuperModel;
use fibidx_core::zeta::{trace_defect_identity, wodzicki_residue, zeta_finite_part};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn poly_strategy(rank: usize) -> impl Strategy<Value = TrigPoly> {
    prop::collection::vec((prop::collection::vec(-3i32..=3, rank), -1.0f64..1.0, -1.0f64..1.0), 1..5).prop_map(move |terms| {
        let t: Vec<(Vec<i32>, _)> = terms.into_iter().map(|(f, re, im)| (f, c(re, im))).collect();
        TrigPoly::from_terms(rank, &t)
    })
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trig_product_is_commutative_and_associative(f in poly_strategy(2), g in poly_strategy(2), h in poly_strategy(2)) {
        prop_assert!(f.mul(&g).dist(&g.mul(&f)) < 1e-12);
        prop_assert!(f.mul(&g).mul(&h).dist(&f.mul(&g.mul(&h))) < 1e-12);
    }

    #[test]
    fn derivative_obeys_leibniz(f in poly_strategy(2), g in poly_strategy(2), var in 0usize..2) {
        let lhs = f.mul(&g).deriv(var);
        let rhs = f.deriv(var).mul(&g).add(&f.mul(&g.deriv(var)));
        prop_assert!(lhs.dist(&rhs) < 1e-10);
    }

    #[test]
    fn evaluation_is_multiplicative(f in poly_strategy(2), g in poly_strategy(2), x in 0.0f64..6.3, y in 0.0f64..6.3) {
        let d = max_abs(&(f.mul(&g).eval(&[x, y]) - f.eval(&[x, y]) * g.eval(&[x, y])));
        prop_assert!(d < 1e-12);
    }

    #[test]
    fn multiplication_symbols_compose_pointwise(f in poly_strategy(1), g in poly_strategy(1)) {
        let a = PolyhomSymbol::multiplication(f.clone());
        let b = PolyhomSymbol::multiplication(g.clone());
        let ab = PolyhomSymbol::compose(&a, &b, 2).unwrap();
        prop_assert!(ab.tracked_dist(&PolyhomSymbol::multiplication(f.mul(&g))) < 1e-12);
    }

    #[test]
    fn zeta_finite_part_is_linear(f in poly_strategy(1), g in poly_strategy(1), re in -2.0f64..2.0) {
        let a = PolyhomSymbol::homogeneous(0, f.clone(), g.clone()).with_zero_mode(f.clone());
        let b = PolyhomSymbol::dspec(1, 1);
        let z = c(re, 0.5);
        let sum = a.lin_comb(&[(c(1.0, 0.0), &a), (z, &b)]).unwrap();
        let lhs = zeta_finite_part(&sum).unwrap().finite_scalar();
        let rhs = zeta_finite_part(&a).unwrap().finite_scalar() + z * zeta_finite_part(&b).unwrap().finite_scalar();
        prop_assert!((lhs - rhs).norm() < 1e-9, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn banded_product_agrees_with_dense(n in 8usize..40, ba in 0usize..4, bb in 0usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut band = |w: usize| {
            let m = CMat::from_fn(n, n, |_, _| sample::coefficient(&mut rng));
            CMat::from_fn(n, n, |i, j| if i.abs_diff(j) <= w { m[(i, j)] } else { c(0.0, 0.0) })
        };
        let (a, b) = (band(ba), band(bb));
        prop_assert!(max_abs(&(banded_mul(&a, &b) - &a * &b)) < 1e-12);
    }

    #[test]
    fn normalization_is_linear_in_kappa(re in -5.0f64..5.0, im in -5.0f64..5.0, k in 0.1f64..3.0, m in 0usize..3) {
        let v = c(re, im);
        let one = normalized_pairing(v, m, 1.0);
        prop_assert!((normalized_pairing(v, m, k) - one * k).norm() < 1e-12);
        prop_assert!((one.norm() - v.norm() / std::f64::consts::TAU.powi(m as i32)).abs() < 1e-12);
    }

    #[test]
    fn tolerance_scaling_is_uniform(s in 1e-3f64..1e3) {
        let base = Tolerances::default();
        for ((n0, t0), (n1, t1)) in base.ledger().into_iter().zip(base.scaled(s).ledger()) {
            prop_assert_eq!(n0, n1);
            prop_assert!((t1 - s * t0).abs() <= 1e-15 * t1.abs());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn residue_kills_commutators(seed in any::<u64>(), oa in 0i32..2, ob in 1i32..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = sample::symbol(&mut rng, 1, 2, oa);
        let b = sample::symbol(&mut rng, 1, 2, -ob);
        let r = wodzicki_residue(&PolyhomSymbol::commutator(&a, &b, 3).unwrap()).unwrap();
        prop_assert!(r.mean_scalar().norm() < 1e-10);
    }

    #[test]
    fn trace_defect_holds(seed in any::<u64>(), oa in 0i32..2, ob in 0i32..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = sample::symbol(&mut rng, 1, 2, oa);
        let b = sample::symbol(&mut rng, 1, 2, -ob);
        let (l, r) = trace_defect_identity(&a, &b, 4).unwrap();
        prop_assert!((l - r).norm() < 1e-8, "{} vs {}", l, r);
    }

    #[test]
    fn point_pairing_is_the_winding_difference(wp in -3i32..=3, wm in -3i32..=3) {
        let q = winding_symbol(wp, wm);
        let v = radul_index(&q, 4).unwrap();
        prop_assert!((v.re - (wp - wm) as f64).abs() < 1e-9 && v.im.abs() < 1e-9);
        prop_assert_eq!(index_idempotent_pairing(&q, 48, 4).unwrap().rounded, (wp - wm) as i64);
    }

    #[test]
    fn fedosov_product_is_associative(seed in any::<u64>()) {
        let amb = Ambient::new(reference_torus_connection(), 1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, x) = (sample::element(&mut rng, &amb, 0), sample::element(&mut rng, &amb, 0), sample::element(&mut rng, &amb, 0));
        let l = a.fedosov_product(&b).unwrap().fedosov_product(&x).unwrap();
        let r = a.fedosov_product(&b.fedosov_product(&x).unwrap()).unwrap();
        prop_assert!(l.dist(&r) < 1e-9);
    }

    #[test]
    fn transgression_holds_for_random_data(seed in any::<u64>(), n in prop::sample::select(vec![1usize, 3])) {
        let d = SuperModel::full(2).transgression_trials(n, 2, seed).unwrap();
        prop_assert!(d < 1e-10, "{}", d);
    }
}
