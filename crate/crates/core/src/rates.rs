//! Step-size certificates for the fixed-step dynamics.
//!
//! The distributed update contracts toward the equilibrium-consensus point
//! whenever a 2×2 matrix built from four scalars — the eigenvector-scaled
//! monotonicity and Lipschitz moduli, the graph contraction factor, and
//! the smallest eigenvector entry — has spectral radius below one. That
//! matrix bounds the joint evolution of the two error components (distance
//! to the equilibrium consensus, disagreement between agents), and its
//! largest eigenvalue `rho` gives the per-step contraction factor
//! `sqrt(rho)` in the eigenvector-weighted norm.
//!
//! [`max_step_size`] inverts the certificate: it brackets and bisects the
//! largest step with `rho ≤ 1 − tol`, relying on the (empirically
//! verified) fact that the admissible set is an interval anchored at zero.

use std::error::Error;
use std::fmt;

use ndarray::{array, Array1, Array2};

use crate::games::GameConstants;
use crate::scalar::{cast, Scalar};

/// Smallest step size tried while bracketing; below this the problem data
/// are declared inconsistent.
pub const MIN_BRACKET_STEP: f64 = 1e-16;
/// Default margin demanded below one for the certified spectral radius.
pub const DEFAULT_CERTIFICATE_TOL: f64 = 1e-6;
const BISECTION_ITERS: usize = 60;

/// Certificate search failures.
#[derive(Debug, Clone, PartialEq)]
pub enum RateError {
    /// No positive step size satisfies the contraction condition — the
    /// graph mixes too weakly (`sigma_bar` near one) or the constants are
    /// inconsistent (e.g. zero monotonicity).
    NoAdmissibleStep { rho_at_floor: f64 },
}

impl fmt::Display for RateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateError::NoAdmissibleStep { rho_at_floor } => write!(
                f,
                "no admissible step size: spectral radius is still {rho_at_floor} at the smallest bracketed step"
            ),
        }
    }
}

impl Error for RateError {}

/// An admissible step size together with everything that certifies it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCertificate<T: Scalar> {
    /// Monotonicity modulus scaled by the largest eigenvector entry.
    pub mu_bar: T,
    /// Extended Lipschitz constant scaled by the smallest eigenvector
    /// entry.
    pub ell_bar: T,
    /// Graph contraction factor.
    pub sigma_bar: T,
    /// Smallest eigenvector entry.
    pub lambda_min_q: T,
    /// Certified step size.
    pub alpha: T,
    /// Largest eigenvalue of the certificate matrix at `alpha`; below one.
    pub rho: T,
    /// Per-step contraction factor `sqrt(rho)` in the weighted norm.
    pub contraction_factor: T,
}

/// Rescales the game constants into the eigenvector-weighted geometry the
/// dynamics live in: the monotonicity modulus shrinks by the largest
/// eigenvector entry, the extended Lipschitz constant grows by the
/// smallest.
pub fn scaled_constants<T: Scalar>(c: &GameConstants<T>, q: &Array1<T>) -> (T, T) {
    let qmin = q.iter().copied().fold(T::infinity(), T::min);
    let qmax = q.iter().copied().fold(T::neg_infinity(), T::max);
    (c.mu / qmax, c.ell / qmin)
}

/// The 2×2 certificate matrix at step size `alpha`.
///
/// Row/column one tracks the weighted distance to the equilibrium
/// consensus, row/column two the disagreement component:
///
/// ```text
/// [ 1 − 2α·mu_bar·lambda_min_q + α²·ell_bar²      2α·ell_bar·sigma_bar            ]
/// [ 2α·ell_bar·sigma_bar                          (1 + 2α·ell_bar + α²·ell_bar²)·sigma_bar² ]
/// ```
pub fn m_alpha<T: Scalar>(
    alpha: T,
    mu_bar: T,
    ell_bar: T,
    sigma_bar: T,
    lambda_min_q: T,
) -> Array2<T> {
    let two = cast::<T>(2.0);
    let a2l2 = alpha * alpha * ell_bar * ell_bar;
    let e11 = T::one() - two * alpha * mu_bar * lambda_min_q + a2l2;
    let e12 = two * alpha * ell_bar * sigma_bar;
    let e22 = (T::one() + two * alpha * ell_bar + a2l2) * sigma_bar * sigma_bar;
    array![[e11, e12], [e12, e22]]
}

/// Largest eigenvalue of a symmetric 2×2 matrix by the closed form
/// `mean of diagonal + sqrt((half diagonal gap)² + offdiag²)` (the stable
/// rearrangement of `tr/2 + sqrt((tr/2)² − det)`).
pub fn rho_alpha<T: Scalar>(m: &Array2<T>) -> T {
    assert_eq!(m.dim(), (2, 2), "certificate matrix is 2×2");
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = m[(0, 1)];
    let half = cast::<T>(0.5);
    let mid = (a + d) * half;
    let gap = (a - d) * half;
    mid + (gap * gap + b * b).sqrt()
}

/// Largest step size whose certificate matrix has spectral radius at most
/// `1 − tol`.
///
/// The upper bracket `2·mu_bar·lambda_min_q/ell_bar²` makes the first
/// diagonal entry exactly one, so it is never admissible; the lower
/// bracket is found by halving. Bisection then pins the boundary to
/// machine resolution. The feasible set being an interval from zero is a
/// property of the certificate verified by test sweep, not assumed here
/// beyond the bracketing itself.
pub fn max_step_size<T: Scalar>(
    c: &GameConstants<T>,
    q: &Array1<T>,
    sigma_bar: T,
    tol: f64,
) -> Result<StepCertificate<T>, RateError> {
    assert!(tol > 0.0, "certificate tolerance must be positive");
    let (mu_bar, ell_bar) = scaled_constants(c, q);
    let lambda_min_q = q.iter().copied().fold(T::infinity(), T::min);
    assert!(
        ell_bar > T::zero() && ell_bar.is_finite(),
        "Lipschitz constant must be positive and finite"
    );
    assert!(
        sigma_bar >= T::zero() && sigma_bar < T::one(),
        "contraction factor must lie in [0, 1)"
    );

    let target = T::one() - cast::<T>(tol);
    let rho_at = |alpha: T| rho_alpha(&m_alpha(alpha, mu_bar, ell_bar, sigma_bar, lambda_min_q));
    let admissible = |alpha: T| rho_at(alpha) <= target;

    let floor = cast::<T>(MIN_BRACKET_STEP);
    if mu_bar <= T::zero() {
        return Err(RateError::NoAdmissibleStep {
            rho_at_floor: rho_at(floor).to_f64().unwrap_or(f64::NAN),
        });
    }

    let two = cast::<T>(2.0);
    let mut hi = two * mu_bar * lambda_min_q / (ell_bar * ell_bar);
    let mut lo = hi * cast::<T>(0.5);
    while !admissible(lo) {
        lo *= cast::<T>(0.5);
        if lo < floor {
            return Err(RateError::NoAdmissibleStep {
                rho_at_floor: rho_at(floor).to_f64().unwrap_or(f64::NAN),
            });
        }
    }

    for _ in 0..BISECTION_ITERS {
        let mid = (lo + hi) * cast::<T>(0.5);
        if admissible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let rho = rho_at(lo);
    Ok(StepCertificate {
        mu_bar,
        ell_bar,
        sigma_bar,
        lambda_min_q,
        alpha: lo,
        rho,
        contraction_factor: rho.sqrt(),
    })
}
