//! Game definitions: costs, gradients, feasible sets, and the constants
//! that drive step-size certificates.
//!
//! A game here is a collection of agents, each minimizing its own cost in
//! its own decision block subject to box constraints, with costs coupled
//! through everyone's decisions. Two gradient mappings matter:
//!
//! * the *pseudo-gradient* stacks each agent's partial gradient evaluated
//!   at the true joint strategy — its zeros (after projection) are the
//!   Nash equilibria;
//! * the *extended pseudo-gradient* evaluates agent `i`'s block at agent
//!   `i`'s local estimate of the joint strategy — this is the mapping the
//!   distributed dynamics actually query, since no agent sees the truth.
//!
//! The two coincide exactly on consensus stacks. Quadratic games (affine
//! pseudo-gradient `F(x) = Gx + g`) additionally expose exact
//! monotonicity/Lipschitz constants via eigenvalue computations; arbitrary
//! smooth games can participate in the dynamics through a gradient
//! callback but bring no certificate of their own.

use std::error::Error;
use std::fmt;
use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::linalg::{spectral_norm, symmetric_eigenvalue_min};
use crate::scalar::{cast, Scalar};

/// Failures in game construction and gradient evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum GameError {
    /// A vector length does not match the game's dimensions.
    DimensionMismatch { expected: usize, found: usize },
    /// The symmetric part of the gradient Jacobian has a nonpositive
    /// smallest eigenvalue, so no equilibrium/rate guarantees apply.
    NotStronglyMonotone { lambda_min: f64 },
    /// A Cournot participation list is empty, repeats a market, or refers
    /// to a market index out of range.
    InvalidParticipation { agent: usize, detail: String },
    /// A box constraint has a lower bound exceeding its upper bound.
    EmptyBox { coordinate: usize },
    /// A scalar parameter violates its sign or range requirement.
    InvalidParameter { what: String },
}

impl fmt::Display for GameError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GameError::DimensionMismatch { expected, found } => {
                write!(f, "expected a vector of length {expected}, found {found}")
            }
            GameError::NotStronglyMonotone { lambda_min } => write!(
                f,
                "gradient mapping is not strongly monotone (symmetric part has minimum eigenvalue {lambda_min})"
            ),
            GameError::InvalidParticipation { agent, detail } => {
                write!(f, "agent {agent} has an invalid market list: {detail}")
            }
            GameError::EmptyBox { coordinate } => {
                write!(f, "box constraint at coordinate {coordinate} is empty (lower > upper)")
            }
            GameError::InvalidParameter { what } => write!(f, "invalid parameter: {what}"),
        }
    }
}

impl Error for GameError {}

/// Block layout of a stacked decision vector: which coordinate range
/// belongs to which agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl AgentLayout {
    /// Builds the layout from per-agent block sizes (all positive).
    pub fn new(dims: &[usize]) -> Self {
        assert!(!dims.is_empty(), "need at least one agent");
        assert!(dims.iter().all(|d| *d > 0), "block sizes must be positive");
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for d in dims {
            offsets.push(total);
            total += d;
        }
        AgentLayout {
            dims: dims.to_vec(),
            offsets,
            total,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.dims.len()
    }

    /// Joint dimension: the sum of all block sizes.
    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Coordinate range of agent `i`'s block inside a joint vector.
    pub fn block(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.dims[i]
    }
}

/// Per-coordinate box constraints on the joint decision vector; entries
/// may be infinite on either side.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds<T: Scalar> {
    lower: Array1<T>,
    upper: Array1<T>,
}

impl<T: Scalar> BoxBounds<T> {
    /// Builds bounds, rejecting coordinates where `lower > upper` or a
    /// bound is NaN.
    pub fn new(lower: Array1<T>, upper: Array1<T>) -> Result<Self, GameError> {
        if lower.len() != upper.len() {
            return Err(GameError::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (k, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(GameError::EmptyBox { coordinate: k });
            }
        }
        Ok(BoxBounds { lower, upper })
    }

    /// The whole space: every coordinate unconstrained.
    pub fn unbounded(n: usize) -> Self {
        BoxBounds {
            lower: Array1::from_elem(n, T::neg_infinity()),
            upper: Array1::from_elem(n, T::infinity()),
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &Array1<T> {
        &self.lower
    }

    pub fn upper(&self) -> &Array1<T> {
        &self.upper
    }

    /// Clamps `v` into the box restricted to `range`.
    pub fn clamp_range(&self, range: Range<usize>, v: &mut Array1<T>) {
        for (slot, k) in v.iter_mut().zip(range) {
            *slot = slot.max(self.lower[k]).min(self.upper[k]);
        }
    }
}

/// A multi-agent game: block layout, box constraints, and per-agent
/// partial gradients evaluated at an arbitrary local view of the joint
/// strategy.
pub trait Game<T: Scalar> {
    fn layout(&self) -> &AgentLayout;

    fn bounds(&self) -> &BoxBounds<T>;

    /// Partial gradient of agent `i`'s cost with respect to its own block,
    /// evaluated at `local` — agent `i`'s (possibly wrong) view of the
    /// full joint strategy. `local` must have the joint dimension.
    fn gradient_block(&self, i: usize, local: ArrayView1<'_, T>) -> Array1<T>;

    /// Agent `i`'s cost at a joint strategy, when the game can evaluate
    /// it; used only for diagnostics and finite-difference checks.
    fn cost(&self, _i: usize, _x: ArrayView1<'_, T>) -> Option<T> {
        None
    }
}

/// Game with an affine pseudo-gradient `F(x) = jacobian · x + offset`.
///
/// Quadratic costs produce exactly this form, and all certificate
/// constants reduce to eigenvalue/singular-value computations on the
/// Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame<T: Scalar> {
    layout: AgentLayout,
    jacobian: Array2<T>,
    offset: Array1<T>,
    bounds: BoxBounds<T>,
}

impl<T: Scalar> QuadraticGame<T> {
    /// Builds the game; `jacobian` is `n×n` and `offset` length `n` with
    /// `n` the joint dimension of `dims`.
    pub fn new(
        dims: &[usize],
        jacobian: Array2<T>,
        offset: Array1<T>,
        bounds: BoxBounds<T>,
    ) -> Result<Self, GameError> {
        let layout = AgentLayout::new(dims);
        let n = layout.total_dim();
        if jacobian.nrows() != n || jacobian.ncols() != n {
            return Err(GameError::DimensionMismatch {
                expected: n,
                found: jacobian.nrows().max(jacobian.ncols()),
            });
        }
        if offset.len() != n {
            return Err(GameError::DimensionMismatch {
                expected: n,
                found: offset.len(),
            });
        }
        if bounds.len() != n {
            return Err(GameError::DimensionMismatch {
                expected: n,
                found: bounds.len(),
            });
        }
        Ok(QuadraticGame {
            layout,
            jacobian,
            offset,
            bounds,
        })
    }

    pub fn jacobian(&self) -> &Array2<T> {
        &self.jacobian
    }

    pub fn offset(&self) -> &Array1<T> {
        &self.offset
    }
}

impl<T: Scalar> Game<T> for QuadraticGame<T> {
    fn layout(&self) -> &AgentLayout {
        &self.layout
    }

    fn bounds(&self) -> &BoxBounds<T> {
        &self.bounds
    }

    fn gradient_block(&self, i: usize, local: ArrayView1<'_, T>) -> Array1<T> {
        let block = self.layout.block(i);
        let rows = self.jacobian.slice(s![block.clone(), ..]);
        rows.dot(&local) + self.offset.slice(s![block])
    }
}

/// Game defined by an arbitrary gradient callback.
///
/// Accepted by the dynamics like any other game, but carries no analytic
/// constants, so certified step sizes must come from elsewhere.
pub struct CallbackGame<T: Scalar> {
    layout: AgentLayout,
    bounds: BoxBounds<T>,
    #[allow(clippy::type_complexity)]
    gradient: Box<dyn Fn(usize, ArrayView1<'_, T>) -> Array1<T> + Send + Sync>,
}

impl<T: Scalar> CallbackGame<T> {
    pub fn new(
        dims: &[usize],
        bounds: BoxBounds<T>,
        gradient: impl Fn(usize, ArrayView1<'_, T>) -> Array1<T> + Send + Sync + 'static,
    ) -> Result<Self, GameError> {
        let layout = AgentLayout::new(dims);
        if bounds.len() != layout.total_dim() {
            return Err(GameError::DimensionMismatch {
                expected: layout.total_dim(),
                found: bounds.len(),
            });
        }
        Ok(CallbackGame {
            layout,
            bounds,
            gradient: Box::new(gradient),
        })
    }
}

impl<T: Scalar> fmt::Debug for CallbackGame<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CallbackGame")
            .field("dims", &self.layout.dims())
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> Game<T> for CallbackGame<T> {
    fn layout(&self) -> &AgentLayout {
        &self.layout
    }

    fn bounds(&self) -> &BoxBounds<T> {
        &self.bounds
    }

    fn gradient_block(&self, i: usize, local: ArrayView1<'_, T>) -> Array1<T> {
        (self.gradient)(i, local)
    }
}

/// Monotonicity and Lipschitz constants of an affine pseudo-gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameConstants<T: Scalar> {
    /// Strong-monotonicity modulus of the pseudo-gradient.
    pub mu: T,
    /// Lipschitz constant of the pseudo-gradient.
    pub ell0: T,
    /// Lipschitz constant of the extended pseudo-gradient, as a mapping
    /// from full estimate stacks.
    pub ell: T,
}

/// Stacks every agent's partial gradient evaluated at the true joint
/// strategy `x`.
pub fn pseudo_gradient<T: Scalar, G: Game<T> + ?Sized>(
    game: &G,
    x: &Array1<T>,
) -> Result<Array1<T>, GameError> {
    let layout = game.layout();
    let n = layout.total_dim();
    if x.len() != n {
        return Err(GameError::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    let mut out = Array1::zeros(n);
    for i in 0..layout.n_agents() {
        let block = game.gradient_block(i, x.view());
        out.slice_mut(s![layout.block(i)]).assign(&block);
    }
    Ok(out)
}

/// Stacks every agent's partial gradient, agent `i` evaluating at its own
/// estimate block of `x_stack` (length `N·n`). On consensus stacks this
/// equals [`pseudo_gradient`] at the shared point.
pub fn extended_pseudo_gradient<T: Scalar, G: Game<T> + ?Sized>(
    game: &G,
    x_stack: &Array1<T>,
) -> Result<Array1<T>, GameError> {
    let layout = game.layout();
    let n = layout.total_dim();
    let n_agents = layout.n_agents();
    if x_stack.len() != n_agents * n {
        return Err(GameError::DimensionMismatch {
            expected: n_agents * n,
            found: x_stack.len(),
        });
    }
    let mut out = Array1::zeros(n);
    for i in 0..n_agents {
        let local = x_stack.slice(s![i * n..(i + 1) * n]);
        let block = game.gradient_block(i, local);
        out.slice_mut(s![layout.block(i)]).assign(&block);
    }
    Ok(out)
}

/// Clamps a candidate block for agent `i` into its feasible box.
///
/// Boxes make the eigenvector-weighted and unweighted projections
/// coincide, which is what lets the distributed updates use a plain clamp.
pub fn project_box<T: Scalar, G: Game<T> + ?Sized>(
    game: &G,
    i: usize,
    v: &Array1<T>,
) -> Result<Array1<T>, GameError> {
    let block = game.layout().block(i);
    if v.len() != block.len() {
        return Err(GameError::DimensionMismatch {
            expected: block.len(),
            found: v.len(),
        });
    }
    let mut out = v.clone();
    game.bounds().clamp_range(block, &mut out);
    Ok(out)
}

/// Exact constants of an affine pseudo-gradient.
///
/// `mu` is the smallest eigenvalue of the symmetric part of the Jacobian,
/// `ell0` its largest singular value. For the extended mapping, agent
/// `i`'s block reads only stack block `i`, so the stacked Jacobian has
/// block rows with disjoint column supports and its largest singular value
/// is the maximum over agents of the spectral norm of the agent's row
/// block — no `n·N` matrix is ever formed.
pub fn game_constants<T: Scalar>(game: &QuadraticGame<T>) -> Result<GameConstants<T>, GameError> {
    let jac = game.jacobian();
    let sym = (jac + &jac.t()) * cast::<T>(0.5);
    let mu = symmetric_eigenvalue_min(&sym);
    if mu <= T::zero() {
        return Err(GameError::NotStronglyMonotone {
            lambda_min: mu.to_f64().unwrap_or(f64::NAN),
        });
    }
    let ell0 = spectral_norm(jac);
    let layout = game.layout();
    let mut ell = T::zero();
    for i in 0..layout.n_agents() {
        let rows = jac.slice(s![layout.block(i), ..]).to_owned();
        ell = ell.max(spectral_norm(&rows));
    }
    Ok(GameConstants { mu, ell0, ell })
}
