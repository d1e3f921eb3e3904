//! Directed communication network with row-stochastic weights.
//!
//! Agents exchange data over a directed graph; `weights[(i, j)]` is the
//! weight agent `i` assigns to the message received from agent `j`. Every
//! algorithm in this crate assumes the graph is strongly connected, has
//! self-loops, and has rows summing to one, so [`validate_graph`] is the
//! only way to obtain a [`Graph`].
//!
//! On top of the validated graph sit the spectral quantities that drive
//! step-size certificates: the positive left eigenvector `q` of the weight
//! matrix at eigenvalue one (normalized to sum one) and the contraction
//! factor `sigma_bar` of the weight matrix restricted to the complement of
//! the consensus subspace, measured in the q-weighted norm.

use std::collections::VecDeque;
use std::error::Error;
use std::fmt;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::linalg::symmetric_eigenvalues;
use crate::scalar::{cast, cast_usize, Scalar};

/// Default tolerance on each row sum's deviation from one.
pub const DEFAULT_ROW_SUM_TOL: f64 = 1e-12;
/// `sigma_bar` values at or above `1 - SIGMA_GUARD` are rejected: the
/// contraction argument degenerates and downstream certificates would be
/// meaningless.
pub const SIGMA_GUARD: f64 = 1e-12;
/// Default residual tolerance for the left-eigenvector iteration.
pub const DEFAULT_PF_TOL: f64 = 1e-12;

/// Validation and spectral-computation failures.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphError {
    /// A row sum deviates from one beyond the allowed tolerance.
    RowSumError { row: usize, sum: f64 },
    /// A weight is negative; rows must be convex combinations.
    NegativeWeight { row: usize, col: usize, value: f64 },
    /// An agent does not listen to itself (`w[i][i] = 0`).
    ZeroDiagonal { agent: usize },
    /// The positive-weight edge set has more than one strongly connected
    /// component.
    NotStronglyConnected,
    /// The left-eigenvector iteration did not reach the requested residual
    /// within its iteration cap.
    ConvergenceFailure { iterations: usize, residual: f64 },
    /// The computed contraction factor is numerically indistinguishable
    /// from one.
    SpectralError { value: f64 },
    /// A vector length is inconsistent with the graph and block sizes.
    DimensionMismatch { expected: usize, found: usize },
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::RowSumError { row, sum } => {
                write!(f, "row {row} sums to {sum}, expected 1 within tolerance")
            }
            GraphError::NegativeWeight { row, col, value } => {
                write!(f, "weight ({row}, {col}) is negative: {value}")
            }
            GraphError::ZeroDiagonal { agent } => {
                write!(f, "agent {agent} has no self-loop (zero diagonal weight)")
            }
            GraphError::NotStronglyConnected => {
                write!(f, "the positive-weight digraph is not strongly connected")
            }
            GraphError::ConvergenceFailure {
                iterations,
                residual,
            } => write!(
                f,
                "eigenvector iteration stalled at residual {residual:e} after {iterations} iterations"
            ),
            GraphError::SpectralError { value } => write!(
                f,
                "contraction factor {value} is not safely below 1; the graph is numerically degenerate"
            ),
            GraphError::DimensionMismatch { expected, found } => {
                write!(f, "expected a vector of length {expected}, found {found}")
            }
        }
    }
}

impl Error for GraphError {}

/// A validated directed communication network.
///
/// Construction goes through [`validate_graph`], so every instance
/// satisfies row stochasticity, positive diagonal, and strong connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T: Scalar> {
    weights: Array2<T>,
}

impl<T: Scalar> Graph<T> {
    /// Number of agents.
    pub fn n_agents(&self) -> usize {
        self.weights.nrows()
    }

    /// The full row-stochastic weight matrix.
    pub fn weights(&self) -> &Array2<T> {
        &self.weights
    }

    /// Weight agent `i` assigns to agent `j`'s messages.
    pub fn weight(&self, i: usize, j: usize) -> T {
        self.weights[(i, j)]
    }

    /// In-neighbors of agent `i`: the agents it receives data from,
    /// including itself.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.weights
            .row(i)
            .into_iter()
            .enumerate()
            .filter(|(_, w)| **w > T::zero())
            .map(|(j, _)| j)
            .collect::<Vec<_>>()
            .into_iter()
    }
}

/// Spectral quantities of a validated graph: the positive left eigenvector
/// `q` at eigenvalue one (sum one) and the consensus contraction factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData<T: Scalar> {
    /// Left eigenvector of the weight matrix at eigenvalue one, positive,
    /// normalized to sum one.
    pub q: Array1<T>,
    /// Contraction factor of the weight matrix on the q-orthogonal
    /// complement of the consensus subspace; lies in `[0, 1)`.
    pub sigma_bar: T,
    /// Smallest entry of `q`.
    pub qmin: T,
    /// Largest entry of `q`.
    pub qmax: T,
}

/// Checks the standing assumptions on a weight matrix and wraps it.
///
/// Rows must sum to one within [`DEFAULT_ROW_SUM_TOL`], all weights must be
/// nonnegative, every diagonal entry must be strictly positive, and the
/// positive-weight digraph must be strongly connected.
pub fn validate_graph<T: Scalar>(weights: Array2<T>) -> Result<Graph<T>, GraphError> {
    validate_graph_with_tol(weights, DEFAULT_ROW_SUM_TOL)
}

/// [`validate_graph`] with an explicit row-sum tolerance.
pub fn validate_graph_with_tol<T: Scalar>(
    weights: Array2<T>,
    row_sum_tol: f64,
) -> Result<Graph<T>, GraphError> {
    let n = weights.nrows();
    assert_eq!(n, weights.ncols(), "weight matrix must be square");
    assert!(n >= 1, "need at least one agent");

    let tol = cast::<T>(row_sum_tol);
    for i in 0..n {
        let mut sum = T::zero();
        for j in 0..n {
            let w = weights[(i, j)];
            if w < T::zero() {
                return Err(GraphError::NegativeWeight {
                    row: i,
                    col: j,
                    value: w.to_f64().unwrap_or(f64::NAN),
                });
            }
            sum += w;
        }
        if (sum - T::one()).abs() > tol || !sum.is_finite() {
            return Err(GraphError::RowSumError {
                row: i,
                sum: sum.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    for i in 0..n {
        if weights[(i, i)] <= T::zero() {
            return Err(GraphError::ZeroDiagonal { agent: i });
        }
    }
    if !strongly_connected(&weights) {
        return Err(GraphError::NotStronglyConnected);
    }
    Ok(Graph { weights })
}

/// Strong connectivity of the positive-weight digraph.
///
/// A digraph is strongly connected iff every node is reachable from node 0
/// and node 0 is reachable from every node; the latter is reachability in
/// the reversed digraph, so two searches suffice.
fn strongly_connected<T: Scalar>(weights: &Array2<T>) -> bool {
    let n = weights.nrows();
    let forward = |i: usize, j: usize| weights[(i, j)] > T::zero();
    let backward = |i: usize, j: usize| weights[(j, i)] > T::zero();
    reaches_all(n, forward) && reaches_all(n, backward)
}

fn reaches_all(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for (j, seen_j) in seen.iter_mut().enumerate() {
            if !*seen_j && edge(i, j) {
                *seen_j = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == n
}

/// Iteration cap for the left-eigenvector computation, scaled with the
/// agent count so large graphs get proportionally more budget.
fn eigenvector_iteration_cap(n: usize) -> usize {
    (100.0 * n as f64 * (n as f64).ln()).ceil() as usize + 10_000
}

/// Computes the positive left eigenvector of the weight matrix at
/// eigenvalue one, together with the contraction factor.
///
/// Uses the fixed-point iteration `q ← Wᵀq` (which preserves the sum of
/// `q` because rows of `W` sum to one) from the uniform start, stopping
/// when the residual `‖Wᵀq − q‖_∞` falls to `tol`. The same dynamics run
/// online inside the adaptive algorithm, so the offline and online routes
/// agree by construction.
pub fn pf_eigenvector<T: Scalar>(g: &Graph<T>, tol: f64) -> Result<SpectralData<T>, GraphError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = g.n_agents();
    let tol_t = cast::<T>(tol);
    let mut q = Array1::from_elem(n, T::one() / cast_usize::<T>(n));
    let cap = eigenvector_iteration_cap(n);
    let mut residual = T::infinity();

    for iter in 0..=cap {
        let next = g.weights.t().dot(&q);
        residual = q
            .iter()
            .zip(next.iter())
            .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()));
        // Renormalize to kill accumulated rounding drift in the sum.
        let sum: T = next.iter().copied().sum();
        q = next / sum;
        if residual <= tol_t {
            break;
        }
        if iter == cap {
            return Err(GraphError::ConvergenceFailure {
                iterations: cap,
                residual: residual.to_f64().unwrap_or(f64::NAN),
            });
        }
    }

    if q.iter().any(|v| *v <= T::zero() || !v.is_finite()) {
        return Err(GraphError::ConvergenceFailure {
            iterations: cap,
            residual: residual.to_f64().unwrap_or(f64::NAN),
        });
    }

    let sigma = sigma_bar(g, &q)?;
    let qmin = q.iter().copied().fold(T::infinity(), T::min);
    let qmax = q.iter().copied().fold(T::zero(), T::max);
    Ok(SpectralData {
        q,
        sigma_bar: sigma,
        qmin,
        qmax,
    })
}

/// Contraction factor of the weight matrix off the consensus subspace in
/// the q-weighted norm.
///
/// With `Q = diag(q)` the factor equals the square root of the
/// second-largest eigenvalue of the symmetric positive-semidefinite matrix
/// `M = Q^{-1/2} Wᵀ Q W Q^{-1/2}` (whose top eigenvalue is one, attained
/// along the consensus direction). Building `M` as `SᵀS` with
/// `S = Q^{1/2} W Q^{-1/2}` keeps it exactly symmetric.
pub fn sigma_bar<T: Scalar>(g: &Graph<T>, q: &Array1<T>) -> Result<T, GraphError> {
    let n = g.n_agents();
    if q.len() != n {
        return Err(GraphError::DimensionMismatch {
            expected: n,
            found: q.len(),
        });
    }
    if n == 1 {
        // A single agent is always at consensus; nothing to contract.
        return Ok(T::zero());
    }

    let sqrt_q: Vec<T> = q.iter().map(|v| v.sqrt()).collect();
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = sqrt_q[i] * g.weights[(i, j)] / sqrt_q[j];
        }
    }
    let m = s.t().dot(&s);
    let eigs = symmetric_eigenvalues(&m);
    let second = eigs[n - 2].max(T::zero());
    let sigma = second.sqrt();
    if sigma >= cast::<T>(1.0 - SIGMA_GUARD) || !sigma.is_finite() {
        return Err(GraphError::SpectralError {
            value: sigma.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(sigma)
}

/// Splits a stacked vector into its consensus component and the remainder.
///
/// The stack holds one length-`n` block per agent (`n = Σ dims`). The
/// consensus component repeats the q-weighted average of the blocks; the
/// remainder is q-orthogonal to every consensus stack.
pub fn consensus_decompose<T: Scalar>(
    x_stack: &Array1<T>,
    q: &Array1<T>,
    dims: &[usize],
) -> Result<(Array1<T>, Array1<T>), GraphError> {
    let n: usize = dims.iter().sum();
    let n_agents = q.len();
    let expected = n_agents * n;
    if x_stack.len() != expected {
        return Err(GraphError::DimensionMismatch {
            expected,
            found: x_stack.len(),
        });
    }

    let mut mean = Array1::zeros(n);
    for i in 0..n_agents {
        let block = x_stack.slice(ndarray::s![i * n..(i + 1) * n]);
        for (m, b) in mean.iter_mut().zip(block.iter()) {
            *m += q[i] * *b;
        }
    }
    let mut parallel = Array1::zeros(expected);
    for i in 0..n_agents {
        parallel
            .slice_mut(ndarray::s![i * n..(i + 1) * n])
            .assign(&mean);
    }
    let perp = x_stack - &parallel;
    Ok((parallel, perp))
}

/// Inner product of two stacked vectors, with agent `i`'s block weighted
/// by `q[i]`. Block size is inferred from the lengths.
pub fn weighted_inner<T: Scalar>(x: &Array1<T>, y: &Array1<T>, q: &Array1<T>) -> T {
    let n_agents = q.len();
    assert_eq!(x.len(), y.len(), "stacks must have equal length");
    assert_eq!(
        x.len() % n_agents,
        0,
        "stack length must be a multiple of the agent count"
    );
    let n = x.len() / n_agents;
    let mut acc = T::zero();
    for i in 0..n_agents {
        let mut block = T::zero();
        for k in i * n..(i + 1) * n {
            block += x[k] * y[k];
        }
        acc += q[i] * block;
    }
    acc
}

/// Norm induced by [`weighted_inner`].
pub fn weighted_norm<T: Scalar>(x: &Array1<T>, q: &Array1<T>) -> T {
    weighted_inner(x, x, q).sqrt()
}

/// Directed ring with self-loops: each agent splits its attention evenly
/// between itself and its successor.
pub fn ring_graph<T: Scalar>(n: usize) -> Graph<T> {
    assert!(n >= 1, "need at least one agent");
    let mut w = Array2::zeros((n, n));
    let half = cast::<T>(0.5);
    for i in 0..n {
        if n == 1 {
            w[(0, 0)] = T::one();
        } else {
            w[(i, i)] = half;
            w[(i, (i + 1) % n)] = half;
        }
    }
    validate_graph(w).expect("ring construction satisfies all assumptions")
}

/// Seeded random strongly connected graph.
///
/// A directed ring backbone guarantees strong connectivity; every other
/// ordered pair gets an edge with probability 0.35. Raw weights are drawn
/// uniformly from [0.5, 1.5), rows are normalized, and the result is
/// blended with the identity (factor 0.1) so every self-loop weight is at
/// least 0.1. The draw order is row-major over the full matrix, so the
/// output is a pure function of `(n, seed)`.
pub fn random_strongly_connected<T: Scalar>(n: usize, seed: u64) -> Graph<T> {
    assert!(n >= 1, "need at least one agent");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut raw = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j || j == (i + 1) % n || rng.gen::<f64>() < 0.35 {
                raw[(i, j)] = rng.gen_range(0.5..1.5);
            }
        }
    }
    let mut w = Array2::<T>::zeros((n, n));
    for i in 0..n {
        let row_sum: f64 = (0..n).map(|j| raw[(i, j)]).sum();
        for j in 0..n {
            let normalized = raw[(i, j)] / row_sum;
            let self_loop = if i == j { 0.1 } else { 0.0 };
            w[(i, j)] = cast::<T>(self_loop + 0.9 * normalized);
        }
    }
    validate_graph(w).expect("generator output satisfies all assumptions")
}
