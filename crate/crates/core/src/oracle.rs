//! Centralized equilibrium solver.
//!
//! The distributed dynamics need something to converge *to*; this module
//! computes that reference point with full information. For a strongly
//! monotone game the equilibrium is the unique fixed point of the
//! projected pseudo-gradient map `x ↦ proj_Ω(x − γF(x))`, which is a
//! contraction for `γ = μ/ℓ₀²`, so plain fixed-point iteration converges
//! from any start. Quadratic games additionally get a direct path: solve
//! the stationarity system and accept the solution when no box constraint
//! is active.
//!
//! [`verify_ne`] exposes the fixed-point residual itself, which is the
//! natural equilibrium certificate: it is zero exactly at the equilibrium
//! for *every* positive `γ`, so checking it at several scales guards
//! against a lucky cancellation at one.

use std::error::Error;
use std::fmt;

use ndarray::Array1;

use crate::games::{game_constants, pseudo_gradient, Game, GameConstants, GameError, QuadraticGame};
use crate::linalg::solve_linear;
use crate::scalar::Scalar;

/// Hard cap on fixed-point iterations; generous because the certified
/// contraction factor can be close to one for ill-conditioned games.
pub const MAX_ORACLE_ITERS: usize = 10_000_000;

/// Failures of the centralized solver.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    /// The fixed-point iteration hit the cap before meeting the requested
    /// residual.
    ConvergenceFailure { iterations: usize, residual: f64 },
    /// The game rejected an evaluation or is not strongly monotone.
    Game(GameError),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::ConvergenceFailure {
                iterations,
                residual,
            } => write!(
                f,
                "equilibrium iteration did not converge after {iterations} steps \
                 (residual {residual:e})"
            ),
            OracleError::Game(e) => write!(f, "game rejected the solve: {e}"),
        }
    }
}

impl Error for OracleError {}

impl From<GameError> for OracleError {
    fn from(e: GameError) -> Self {
        OracleError::Game(e)
    }
}

/// A solved equilibrium together with its quality certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct NESolution<T: Scalar> {
    pub x_star: Array1<T>,
    /// Fixed-point residual `‖x − proj_Ω(x − γF(x))‖_∞` at the certified
    /// step `γ = μ/ℓ₀²`.
    pub residual: T,
    /// Fixed-point iterations spent; zero when the direct path succeeded.
    pub iterations: usize,
}

/// One application of the projected pseudo-gradient map.
fn projected_step<T: Scalar, G: Game<T> + ?Sized>(
    game: &G,
    x: &Array1<T>,
    gamma: T,
) -> Result<Array1<T>, GameError> {
    let f = pseudo_gradient(game, x)?;
    let mut next = x - &(f * gamma);
    game.bounds().clamp_range(0..x.len(), &mut next);
    Ok(next)
}

/// Fixed-point residual `‖x − proj_Ω(x − γF(x))‖_∞`. Zero exactly at the
/// equilibrium for any `γ > 0`.
pub fn verify_ne<T: Scalar, G: Game<T> + ?Sized>(
    game: &G,
    x: &Array1<T>,
    gamma: T,
) -> Result<T, GameError> {
    let next = projected_step(game, x, gamma)?;
    let mut worst = T::zero();
    for (a, b) in x.iter().zip(next.iter()) {
        worst = worst.max((*a - *b).abs());
    }
    Ok(worst)
}

fn solve_fixed_point<T: Scalar, G: Game<T> + ?Sized>(
    game: &G,
    constants: GameConstants<T>,
    tol: T,
    max_iters: usize,
    start: Array1<T>,
) -> Result<NESolution<T>, OracleError> {
    assert!(tol > T::zero(), "residual tolerance must be positive");
    let gamma = constants.mu / (constants.ell0 * constants.ell0);
    let n = game.layout().total_dim();
    assert_eq!(start.len(), n, "start must match the joint dimension");
    let mut x = start;
    game.bounds().clamp_range(0..n, &mut x);

    let mut residual = T::infinity();
    for it in 1..=max_iters {
        let next = projected_step(game, &x, gamma)?;
        residual = T::zero();
        for (a, b) in x.iter().zip(next.iter()) {
            residual = residual.max((*a - *b).abs());
        }
        x = next;
        if residual <= tol {
            // Re-measure at the accepted point so the reported number is
            // its own certificate, not the previous iterate's.
            let residual = verify_ne(game, &x, gamma)?;
            return Ok(NESolution {
                x_star: x,
                residual,
                iterations: it,
            });
        }
    }
    Err(OracleError::ConvergenceFailure {
        iterations: max_iters,
        residual: residual.to_f64().unwrap_or(f64::NAN),
    })
}

/// Solves for the equilibrium of any strongly monotone game by projected
/// fixed-point iteration with the certified step `γ = μ/ℓ₀²`, stopping at
/// fixed-point residual `tol`. Starts from the projection of zero.
pub fn solve_ne<T: Scalar, G: Game<T> + ?Sized>(
    game: &G,
    constants: GameConstants<T>,
    tol: T,
) -> Result<NESolution<T>, OracleError> {
    let start = Array1::zeros(game.layout().total_dim());
    solve_fixed_point(game, constants, tol, MAX_ORACLE_ITERS, start)
}

/// [`solve_ne`] from an explicit starting point (projected into the boxes
/// first). The contraction makes the limit independent of the start; this
/// entry exists so that independence can be exercised.
pub fn solve_ne_from<T: Scalar, G: Game<T> + ?Sized>(
    game: &G,
    constants: GameConstants<T>,
    tol: T,
    start: Array1<T>,
) -> Result<NESolution<T>, OracleError> {
    solve_fixed_point(game, constants, tol, MAX_ORACLE_ITERS, start)
}

/// Solves a quadratic game, preferring the direct stationarity solve.
///
/// The unconstrained equilibrium solves the linear system with the
/// gradient Jacobian; when that solution respects every box it is the
/// constrained equilibrium too and is returned with zero iterations.
/// Otherwise (an active box, or a failed residual check) the projected
/// fixed-point iteration takes over.
pub fn solve_ne_quadratic<T: Scalar>(
    game: &QuadraticGame<T>,
    tol: T,
) -> Result<NESolution<T>, OracleError> {
    assert!(tol > T::zero(), "residual tolerance must be positive");
    let constants = game_constants(game)?;
    let gamma = constants.mu / (constants.ell0 * constants.ell0);

    let neg_offset = game.offset().mapv(|v| -v);
    if let Some(x) = solve_linear(game.jacobian(), &neg_offset) {
        let inside = x
            .iter()
            .zip(game.bounds().lower().iter().zip(game.bounds().upper().iter()))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);
        if inside {
            let residual = verify_ne(game, &x, gamma)?;
            if residual <= tol {
                return Ok(NESolution {
                    x_star: x,
                    residual,
                    iterations: 0,
                });
            }
        }
    }
    solve_ne(game, constants, tol)
}
