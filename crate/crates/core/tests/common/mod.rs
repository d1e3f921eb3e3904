//! Shared helpers for the integration tests: conversions into `nalgebra`
//! (the independent dense solver the library's own routines are checked
//! against) and seeded generators for games and stacks.
#![allow(dead_code)]

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use nashseek::games::{BoxBounds, QuadraticGame};
use nashseek::linalg::symmetric_eigenvalue_min;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        a.nrows(),
        a.ncols(),
        a.as_slice().expect("standard-layout matrix"),
    )
}

/// Singular values of `a`, largest first.
pub fn singular_values_desc(a: &Array2<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = to_dmatrix(a)
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv
}

/// Eigenvalue moduli of `a`, largest first.
pub fn eigenvalue_moduli_desc(a: &Array2<f64>) -> Vec<f64> {
    let mut moduli: Vec<f64> = to_dmatrix(a)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    moduli.sort_by(|x, y| y.partial_cmp(x).unwrap());
    moduli
}

/// Eigenvalues of symmetric `a`, ascending, via the dense solver.
pub fn symmetric_eigenvalues_asc(a: &Array2<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = to_dmatrix(a)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

pub fn random_vector(rng: &mut impl Rng, len: usize, scale: f64) -> Array1<f64> {
    let dist = Uniform::new(-scale, scale);
    Array1::from_iter((0..len).map(|_| dist.sample(rng)))
}

/// Random strongly monotone quadratic game on the given blocks: a dense
/// Jacobian with uniform entries, shifted along the diagonal until the
/// symmetric part clears `mu_floor`.
pub fn random_quadratic_game(
    rng: &mut impl Rng,
    dims: &[usize],
    mu_floor: f64,
    bounds: BoxBounds<f64>,
) -> QuadraticGame<f64> {
    let n: usize = dims.iter().sum();
    let dist = Uniform::new(-1.0_f64, 1.0);
    let mut jacobian = Array2::from_shape_fn((n, n), |_| dist.sample(rng));
    let sym = (&jacobian + &jacobian.t()) / 2.0;
    let shift = mu_floor - symmetric_eigenvalue_min(&sym).min(0.0);
    for k in 0..n {
        jacobian[(k, k)] += shift;
    }
    let offset = random_vector(rng, n, 1.0);
    QuadraticGame::new(dims, jacobian, offset, bounds).unwrap()
}
