//! Fixed inputs shared by the kernel benchmarks.

use std::sync::Arc;

use fibidx_core::checks::reference_torus_connection;
use fibidx_core::fedosov::{Ambient, VElement};
use fibidx_core::sample;
use fibidx_core::{PolyhomSymbol, TrigPoly};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two dense scalar polynomials in three variables with `terms` monomials each.
pub fn poly_pair(terms: usize) -> (TrigPoly, TrigPoly) {
    let mut r = rng(1);
    (sample::poly(&mut r, 3, terms, 3), sample::poly(&mut r, 3, terms, 3))
}

/// A pair of `2×2` circle symbols of orders `1` and `−1`.
pub fn symbol_pair() -> (PolyhomSymbol, PolyhomSymbol) {
    let mut r = rng(2);
    (sample::symbol(&mut r, 1, 2, 1), sample::symbol(&mut r, 1, 2, -1))
}

/// Even elements over the reference torus ambient.
pub fn fedosov_pair() -> (VElement, VElement) {
    let amb: Arc<Ambient> = Ambient::new(reference_torus_connection(), 1, 3).expect("reference ambient");
    let mut r = rng(3);
    (sample::element(&mut r, &amb, 0), sample::element(&mut r, &amb, 0))
}
