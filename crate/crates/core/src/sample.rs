//! Seeded random generators for trigonometric polynomials, symbols and Fedosov elements.

use std::sync::Arc;

use rand::Rng;

use crate::fedosov::{Ambient, VElement};
use crate::forms::{mask_degree, FormSymbol};
use crate::symbol::PolyhomSymbol;
use crate::trigpoly::{c, CMat, TrigPoly, C64};

pub fn coefficient<R: Rng>(rng: &mut R) -> C64 {
    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Scalar polynomial with `terms` monomials of frequencies in `−reach..=reach`.
pub fn poly<R: Rng>(rng: &mut R, rank: usize, terms: usize, reach: i32) -> TrigPoly {
    let t: Vec<(Vec<i32>, C64)> = (0..terms)
        .map(|_| ((0..rank).map(|_| rng.random_range(-reach..=reach)).collect(), coefficient(rng)))
        .collect();
    TrigPoly::from_terms(rank, &t)
}

/// Homogeneous `k×k` symbol of the given order with independent branches and a random zero mode.
pub fn symbol<R: Rng>(rng: &mut R, rank: usize, k: usize, order: i32) -> PolyhomSymbol {
    let (p, m, z) = (matrix_poly(rng, rank, k, 2, true), matrix_poly(rng, rank, k, 2, true), matrix_poly(rng, rank, k, 1, true));
    PolyhomSymbol::homogeneous(order, p, m).with_zero_mode(z)
}

/// Multiplication operator or first-order vector field.
pub fn differential<R: Rng>(rng: &mut R, rank: usize) -> PolyhomSymbol {
    if rng.random_bool(0.3) {
        PolyhomSymbol::vector_field(poly(rng, rank, 2, 1))
    } else {
        PolyhomSymbol::multiplication(poly(rng, rank, 2, 1))
    }
}

pub fn form<R: Rng>(rng: &mut R, amb: &Arc<Ambient>, parity: usize) -> FormSymbol {
    let mut f = amb.zero_form();
    for m in 0..(1u8 << amb.dim()) {
        if mask_degree(m) % 2 == parity {
            f = f.add(&amb.form(m, differential(rng, amb.rank()))).expect("same ambient");
        }
    }
    f
}

/// Element of parity `p` with all four blocks populated by differential symbols.
pub fn element<R: Rng>(rng: &mut R, amb: &Arc<Ambient>, p: usize) -> VElement {
    VElement::from_blocks(amb, [form(rng, amb, p), form(rng, amb, 1 - p), form(rng, amb, 1 - p), form(rng, amb, p)])
}

/// `k×k` matrix polynomial; with `fiber == false` the last variable is absent.
pub fn matrix_poly<R: Rng>(rng: &mut R, rank: usize, k: usize, terms: usize, fiber: bool) -> TrigPoly {
    let mut p = TrigPoly::zero(rank, k);
    for _ in 0..terms {
        let mut f: Vec<i32> = (0..rank).map(|_| rng.random_range(-1..=1)).collect();
        if !fiber {
            f[rank - 1] = 0;
        }
        let m = CMat::from_fn(k, k, |_, _| coefficient(rng));
        p = p.add(&TrigPoly::monomial(rank, f, m));
    }
    p
}

/// `M(b)·D^order` with a fiber-constant matrix coefficient.
pub fn fiber_constant<R: Rng>(rng: &mut R, rank: usize, k: usize, order: i32) -> PolyhomSymbol {
    let m = PolyhomSymbol::multiplication(matrix_poly(rng, rank, k, 2, false));
    PolyhomSymbol::compose(&m, &PolyhomSymbol::dspec_pow(rank, k, order), 0).expect("terminating composition")
}

/// Element whose blocks carry fiber-constant symbols of the given order.
pub fn fiber_constant_element<R: Rng>(rng: &mut R, amb: &Arc<Ambient>, p: usize, order: i32) -> VElement {
    let mut blocks = vec![];
    for parity in [p, 1 - p, 1 - p, p] {
        let mut f = amb.zero_form();
        for m in 0..(1u8 << amb.dim()) {
            if mask_degree(m) % 2 == parity {
                f = f.add(&amb.form(m, fiber_constant(rng, amb.rank(), amb.matrix_size(), order))).expect("same ambient");
            }
        }
        blocks.push(f);
    }
    let blocks: [FormSymbol; 4] = blocks.try_into().expect("four blocks");
    VElement::from_blocks(amb, blocks)
}
