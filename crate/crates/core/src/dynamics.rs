//! Synchronous distributed dynamics.
//!
//! Each agent keeps a working copy of the *entire* joint strategy: its own
//! decision block plus estimates of everyone else's. One round has every
//! agent (1) average the full estimate vectors received from its
//! in-neighbors, (2) take a projected gradient step on its own block —
//! scaled by the inverse of its eigenvector weight, so that unevenly
//! weighted graphs don't bias the equilibrium — and (3) adopt the averaged
//! estimates for all other blocks. All agents read round-`k` data and
//! write round-`k+1` data, i.e. the state is double-buffered.
//!
//! Two weighting modes exist. With *exact* weighting the eigenvector of
//! the communication matrix is computed offline and handed to every agent.
//! With *online* weighting each agent starts from its own canonical basis
//! vector and runs the same averaging on those estimates; the diagonal
//! entry converges to the true weight at the speed of the graph's second
//! eigenvalue, and the strategy update divides by the current estimate
//! instead.
//!
//! The same round can be written as one stacked affine map followed by a
//! partial projection ([`compact_iteration`]); the agent-level and stacked
//! routes are kept separate on purpose and tested for equality, since the
//! stacked form is what the step-size certificates reason about.

use std::error::Error;
use std::fmt;
use std::io::{self, Write};

use ndarray::{s, Array1, Array2};

use crate::games::{extended_pseudo_gradient, Game};
use crate::graph::{consensus_decompose, weighted_norm, Graph};
use crate::scalar::{cast, cast_usize, Scalar};

/// Failures of individual update rounds or of their inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum DynError {
    /// A stack, eigenvector, or estimate matrix has the wrong size.
    DimensionMismatch { expected: usize, found: usize },
    /// The updated state left the finite floating-point range — the usual
    /// cause is a step size far beyond the certified one.
    NonFiniteState { iteration: usize },
    /// A custom step sequence violates positivity or monotonicity.
    InvalidSchedule { reason: String },
    /// An eigenvector-estimate matrix is not row-stochastic with positive
    /// diagonal.
    InvalidEstimates { reason: String },
}

impl fmt::Display for DynError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DynError::DimensionMismatch { expected, found } => {
                write!(f, "expected a vector of length {expected}, found {found}")
            }
            DynError::NonFiniteState { iteration } => {
                write!(f, "state became non-finite at iteration {iteration}")
            }
            DynError::InvalidSchedule { reason } => write!(f, "invalid step schedule: {reason}"),
            DynError::InvalidEstimates { reason } => {
                write!(f, "invalid eigenvector estimates: {reason}")
            }
        }
    }
}

impl Error for DynError {}

/// The full estimate stack at one round: agent `i` owns the contiguous
/// slice `i·n..(i+1)·n`, whose block `i` is its actual decision.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateState<T: Scalar> {
    stack: Array1<T>,
    round: usize,
}

impl<T: Scalar> EstimateState<T> {
    /// Default start: all estimates zero, own decisions at the projection
    /// of zero into their boxes.
    pub fn initial<G: Game<T> + ?Sized>(game: &G) -> Self {
        let layout = game.layout();
        let n = layout.total_dim();
        let n_agents = layout.n_agents();
        let mut stack = Array1::zeros(n_agents * n);
        for i in 0..n_agents {
            let block = layout.block(i);
            let mut own = Array1::zeros(block.len());
            game.bounds().clamp_range(block.clone(), &mut own);
            stack
                .slice_mut(s![i * n + block.start..i * n + block.end])
                .assign(&own);
        }
        EstimateState { stack, round: 0 }
    }

    /// Wraps an explicit stack; `round` is the iteration it belongs to.
    pub fn from_stack<G: Game<T> + ?Sized>(
        game: &G,
        stack: Array1<T>,
        round: usize,
    ) -> Result<Self, DynError> {
        let layout = game.layout();
        let expected = layout.n_agents() * layout.total_dim();
        if stack.len() != expected {
            return Err(DynError::DimensionMismatch {
                expected,
                found: stack.len(),
            });
        }
        Ok(EstimateState { stack, round })
    }

    pub fn stack(&self) -> &Array1<T> {
        &self.stack
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Agent `i`'s view of the joint strategy (its own block plus its
    /// estimates of the others), given the game's block count.
    pub fn agent_view(&self, joint_dim: usize, i: usize) -> ndarray::ArrayView1<'_, T> {
        self.stack.slice(s![i * joint_dim..(i + 1) * joint_dim])
    }

    /// The true joint strategy: every agent's own block, concatenated.
    pub fn joint_strategy(&self, layout: &crate::games::AgentLayout) -> Array1<T> {
        let n = layout.total_dim();
        let mut x = Array1::zeros(n);
        for i in 0..layout.n_agents() {
            let block = layout.block(i);
            x.slice_mut(s![block.clone()])
                .assign(&self.stack.slice(s![i * n + block.start..i * n + block.end]));
        }
        x
    }
}

/// Repeats a joint strategy once per agent, producing the stack on which
/// all agents agree with it.
pub fn consensus_stack<T: Scalar>(x: &Array1<T>, n_agents: usize) -> Array1<T> {
    let n = x.len();
    let mut stack = Array1::zeros(n_agents * n);
    for i in 0..n_agents {
        stack.slice_mut(s![i * n..(i + 1) * n]).assign(x);
    }
    stack
}

/// Per-agent estimates of the graph's eigenvector weights, refined by the
/// same averaging as the strategies. Row `i` is agent `i`'s estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenvectorEstimates<T: Scalar> {
    qhat: Array2<T>,
}

impl<T: Scalar> EigenvectorEstimates<T> {
    /// The prescribed start: agent `i` knows only its own coordinate, so
    /// row `i` is the `i`-th canonical basis vector.
    pub fn initial(n_agents: usize) -> Self {
        EigenvectorEstimates {
            qhat: Array2::eye(n_agents),
        }
    }

    /// Wraps an explicit estimate matrix, enforcing the invariants every
    /// reachable state satisfies: rows nonnegative and summing to one,
    /// strictly positive diagonal.
    pub fn from_matrix(qhat: Array2<T>) -> Result<Self, DynError> {
        let n = qhat.nrows();
        if qhat.ncols() != n {
            return Err(DynError::DimensionMismatch {
                expected: n,
                found: qhat.ncols(),
            });
        }
        for i in 0..n {
            let row = qhat.row(i);
            if row.iter().any(|v| *v < T::zero() || !v.is_finite()) {
                return Err(DynError::InvalidEstimates {
                    reason: format!("row {i} has a negative or non-finite entry"),
                });
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > cast::<T>(1e-10) {
                return Err(DynError::InvalidEstimates {
                    reason: format!("row {i} sums to {sum}, expected 1"),
                });
            }
            if qhat[(i, i)] <= T::zero() {
                return Err(DynError::InvalidEstimates {
                    reason: format!("diagonal entry {i} is not positive"),
                });
            }
        }
        Ok(EigenvectorEstimates { qhat })
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.qhat
    }

    /// Agent `i`'s current estimate of its own weight — the divisor in its
    /// strategy update. Positive at every reachable state because self-loop
    /// weights are positive.
    pub fn own_weight(&self, i: usize) -> T {
        self.qhat[(i, i)]
    }

    /// One consensus round on the estimates: row `i` becomes the weighted
    /// average of its in-neighbors' rows.
    pub fn mix(&self, g: &Graph<T>) -> Self {
        EigenvectorEstimates {
            qhat: g.weights().dot(&self.qhat),
        }
    }

    /// Worst-agent estimate error `max_i ‖row_i − q‖_∞`.
    pub fn max_error(&self, q: &Array1<T>) -> T {
        let mut worst = T::zero();
        for i in 0..self.qhat.nrows() {
            for j in 0..self.qhat.ncols() {
                worst = worst.max((self.qhat[(i, j)] - q[j]).abs());
            }
        }
        worst
    }
}

/// Step-size sequence fed to the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule<T: Scalar> {
    /// Constant step. Zero is allowed — it degenerates the dynamics into
    /// pure consensus averaging, a useful diagnostic.
    Fixed(T),
    /// `1/(k+1)`: vanishing but not summable, the parameter-free choice.
    Harmonic,
    /// Explicit positive nonincreasing sequence; the last value repeats
    /// forever. Build through [`StepSchedule::custom`].
    Custom(Vec<T>),
}

impl<T: Scalar> StepSchedule<T> {
    /// Validates and wraps an explicit sequence.
    pub fn custom(seq: Vec<T>) -> Result<Self, DynError> {
        if seq.is_empty() {
            return Err(DynError::InvalidSchedule {
                reason: "sequence is empty".to_string(),
            });
        }
        if seq.iter().any(|a| *a <= T::zero() || !a.is_finite()) {
            return Err(DynError::InvalidSchedule {
                reason: "all steps must be positive and finite".to_string(),
            });
        }
        if seq.windows(2).any(|w| w[1] > w[0]) {
            return Err(DynError::InvalidSchedule {
                reason: "sequence must be nonincreasing".to_string(),
            });
        }
        Ok(StepSchedule::Custom(seq))
    }

    /// Step used when advancing from round `k` to `k+1`.
    pub fn at(&self, k: usize) -> T {
        match self {
            StepSchedule::Fixed(a) => *a,
            StepSchedule::Harmonic => T::one() / cast_usize::<T>(k + 1),
            StepSchedule::Custom(seq) => seq[k.min(seq.len() - 1)],
        }
    }
}

fn check_round_inputs<T: Scalar, G: Game<T> + ?Sized>(
    state: &EstimateState<T>,
    g: &Graph<T>,
    game: &G,
) -> Result<(usize, usize), DynError> {
    let layout = game.layout();
    let n_agents = layout.n_agents();
    if g.n_agents() != n_agents {
        return Err(DynError::DimensionMismatch {
            expected: n_agents,
            found: g.n_agents(),
        });
    }
    let n = layout.total_dim();
    if state.stack.len() != n_agents * n {
        return Err(DynError::DimensionMismatch {
            expected: n_agents * n,
            found: state.stack.len(),
        });
    }
    Ok((n_agents, n))
}

/// Shared body of the two distributed rounds: mix all estimate vectors,
/// then per agent take the scaled projected gradient step on the own block
/// while the mixed estimates pass through. `scale(i)` is the multiplier of
/// the gradient (step size over weight).
fn distributed_round<T: Scalar, G: Game<T> + ?Sized>(
    state: &EstimateState<T>,
    g: &Graph<T>,
    game: &G,
    scale: impl Fn(usize) -> T,
) -> Result<EstimateState<T>, DynError> {
    let (n_agents, n) = check_round_inputs(state, g, game)?;
    let layout = game.layout();

    let as_rows = state
        .stack
        .view()
        .into_shape_with_order((n_agents, n))
        .expect("stack length was validated");
    let mut mixed = g.weights().dot(&as_rows);

    for i in 0..n_agents {
        let gradient = game.gradient_block(i, mixed.row(i));
        let block = layout.block(i);
        let s_i = scale(i);
        let mut own = Array1::zeros(block.len());
        for (j, slot) in own.iter_mut().enumerate() {
            *slot = mixed[(i, block.start + j)] - s_i * gradient[j];
        }
        game.bounds().clamp_range(block.clone(), &mut own);
        for (j, v) in own.iter().enumerate() {
            mixed[(i, block.start + j)] = *v;
        }
    }

    if mixed.iter().any(|v| !v.is_finite()) {
        return Err(DynError::NonFiniteState {
            iteration: state.round + 1,
        });
    }
    let stack = mixed
        .into_shape_with_order(n_agents * n)
        .expect("row-major reshape of a standard-layout matrix");
    Ok(EstimateState {
        stack,
        round: state.round + 1,
    })
}

/// One round with exact eigenvector weighting: agent `i` divides its
/// gradient by the true weight `q[i]`.
pub fn alg1_step<T: Scalar, G: Game<T> + ?Sized>(
    state: &EstimateState<T>,
    g: &Graph<T>,
    game: &G,
    q: &Array1<T>,
    alpha: T,
) -> Result<EstimateState<T>, DynError> {
    assert!(alpha >= T::zero() && alpha.is_finite(), "step must be a finite nonnegative value");
    if q.len() != game.layout().n_agents() {
        return Err(DynError::DimensionMismatch {
            expected: game.layout().n_agents(),
            found: q.len(),
        });
    }
    distributed_round(state, g, game, |i| alpha / q[i])
}

/// One round with online weighting: the gradient is divided by the
/// pre-round estimate `q̂ᵏ_{i,i}`, and the estimates themselves take one
/// averaging round in the same sweep.
pub fn alg2_step<T: Scalar, G: Game<T> + ?Sized>(
    state: &EstimateState<T>,
    eig: &EigenvectorEstimates<T>,
    g: &Graph<T>,
    game: &G,
    alpha: T,
) -> Result<(EstimateState<T>, EigenvectorEstimates<T>), DynError> {
    assert!(alpha >= T::zero() && alpha.is_finite(), "step must be a finite nonnegative value");
    let n_agents = game.layout().n_agents();
    if eig.qhat.nrows() != n_agents {
        return Err(DynError::DimensionMismatch {
            expected: n_agents,
            found: eig.qhat.nrows(),
        });
    }
    let next_state = distributed_round(state, g, game, |i| alpha / eig.own_weight(i))?;
    let next_eig = eig.mix(g);
    debug_assert!(
        (0..n_agents).all(|i| next_eig.own_weight(i) > T::zero()),
        "self-loops keep the diagonal estimates positive"
    );
    Ok((next_state, next_eig))
}

/// The stacked pre-projection operator: mix the whole stack, evaluate the
/// extended pseudo-gradient at the mixed stack, scale each block by the
/// owner's inverse weight, and subtract it from the owner's slot. This is
/// the map whose restricted contraction the step certificate asserts.
pub fn compact_operator<T: Scalar, G: Game<T> + ?Sized>(
    x_stack: &Array1<T>,
    g: &Graph<T>,
    game: &G,
    q: &Array1<T>,
    alpha: T,
) -> Result<Array1<T>, DynError> {
    let state = EstimateState {
        stack: x_stack.clone(),
        round: 0,
    };
    let (n_agents, n) = check_round_inputs(&state, g, game)?;
    if q.len() != n_agents {
        return Err(DynError::DimensionMismatch {
            expected: n_agents,
            found: q.len(),
        });
    }
    let layout = game.layout();

    let as_rows = state
        .stack
        .view()
        .into_shape_with_order((n_agents, n))
        .expect("stack length was validated");
    let mixed = g.weights().dot(&as_rows);
    let mixed_stack = mixed
        .into_shape_with_order(n_agents * n)
        .expect("row-major reshape of a standard-layout matrix");

    let f_ext = extended_pseudo_gradient(game, &mixed_stack).map_err(|_| {
        DynError::DimensionMismatch {
            expected: n_agents * n,
            found: mixed_stack.len(),
        }
    })?;

    let mut out = mixed_stack;
    for i in 0..n_agents {
        let block = layout.block(i);
        let s_i = alpha / q[i];
        for j in block.clone() {
            let delta = s_i * f_ext[j];
            out[i * n + j] -= delta;
        }
    }
    Ok(out)
}

/// Full stacked round: [`compact_operator`] followed by projection of the
/// own-strategy slots (the estimate slots are unconstrained and pass
/// through). Trajectories coincide with the agent-level rounds.
pub fn compact_iteration<T: Scalar, G: Game<T> + ?Sized>(
    x_stack: &Array1<T>,
    g: &Graph<T>,
    game: &G,
    q: &Array1<T>,
    alpha: T,
) -> Result<Array1<T>, DynError> {
    let mut out = compact_operator(x_stack, g, game, q, alpha)?;
    let layout = game.layout();
    let n = layout.total_dim();
    for i in 0..layout.n_agents() {
        let block = layout.block(i);
        let mut own = out.slice(s![i * n + block.start..i * n + block.end]).to_owned();
        game.bounds().clamp_range(block.clone(), &mut own);
        out.slice_mut(s![i * n + block.start..i * n + block.end])
            .assign(&own);
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(DynError::NonFiniteState { iteration: 0 });
    }
    Ok(out)
}

/// One recorded iteration of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow<T: Scalar> {
    pub k: usize,
    /// Step size used to advance from `k` to `k+1`.
    pub alpha: T,
    /// Weighted distance to the target consensus stack, when a target was
    /// supplied.
    pub dist_q: Option<T>,
    /// Weighted norm of the disagreement component of the stack.
    pub consensus_residual: T,
    /// Worst-agent eigenvector estimate error; online weighting only.
    pub qhat_error: Option<T>,
}

impl<T: Scalar> TraceRow<T> {
    /// The row as CSV fields, in header order, without a trailing newline.
    /// Floats use scientific notation with the shortest round-trip
    /// mantissa; absent quantities become empty fields.
    pub fn csv_fields(&self) -> String {
        use std::fmt::Write as _;
        let mut line = format!("{},{:e},", self.k, self.alpha);
        if let Some(d) = self.dist_q {
            write!(line, "{d:e}").expect("string formatting cannot fail");
        }
        write!(line, ",{:e},", self.consensus_residual).expect("string formatting cannot fail");
        if let Some(e) = self.qhat_error {
            write!(line, "{e:e}").expect("string formatting cannot fail");
        }
        line
    }
}

/// Recorded trajectory of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T: Scalar> {
    pub rows: Vec<TraceRow<T>>,
}

impl<T: Scalar> Default for Trace<T> {
    fn default() -> Self {
        Trace { rows: Vec::new() }
    }
}

impl<T: Scalar> Trace<T> {
    pub const CSV_HEADER: &'static str = "k,alpha,dist_q,consensus_residual,qhat_error";

    /// Serializes the trace as CSV. Floats are printed in scientific
    /// notation with the shortest round-trip mantissa, so equal runs
    /// produce byte-equal files; absent quantities become empty fields.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for row in &self.rows {
            writeln!(out, "{}", row.csv_fields())?;
        }
        Ok(())
    }
}

/// Which iterations get a trace row. The final iteration is always
/// recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordRule {
    /// Every iteration.
    All,
    /// Iteration 0 and every power of two — keeps long traces small while
    /// preserving the convergence shape on a log axis.
    Log2,
}

impl RecordRule {
    fn records(&self, k: usize) -> bool {
        match self {
            RecordRule::All => true,
            RecordRule::Log2 => k == 0 || k.is_power_of_two(),
        }
    }
}

/// Eigenvector weighting used by [`run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingMode {
    /// The true eigenvector is supplied to every agent.
    Exact,
    /// Agents estimate their weights online from canonical-basis starts.
    Online,
}

/// Knobs of a [`run`]; see field docs for defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T: Scalar> {
    pub schedule: StepSchedule<T>,
    pub mode: WeightingMode,
    /// Hard iteration cap (default one million).
    pub max_iters: usize,
    /// The run stops once the consensus residual — and the distance to the
    /// target, when one is given — fall below this (default `1e-8`).
    pub tol: T,
    /// Optional reference consensus stack (length `N·n`) the distance
    /// column is measured against.
    pub target: Option<Array1<T>>,
    pub record: RecordRule,
}

impl<T: Scalar> RunConfig<T> {
    pub fn new(schedule: StepSchedule<T>, mode: WeightingMode) -> Self {
        RunConfig {
            schedule,
            mode,
            max_iters: 1_000_000,
            tol: cast::<T>(1e-8),
            target: None,
            record: RecordRule::All,
        }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// All stop tolerances were met at the given iteration.
    Converged { at: usize },
    /// The iteration cap was reached first.
    MaxIters,
}

/// A completed run: the recorded trajectory, the last state, and why it
/// stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport<T: Scalar> {
    pub trace: Trace<T>,
    pub final_state: EstimateState<T>,
    pub termination: Termination,
}

/// Diagnostics attached to a run that left the finite range: everything
/// recorded up to and including the last finite iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct NonFiniteReport<T: Scalar> {
    /// Iteration at which a non-finite entry first appeared.
    pub iteration: usize,
    pub trace: Trace<T>,
    pub last_finite: Array1<T>,
}

/// Failures of a full run.
#[derive(Debug, Clone, PartialEq)]
pub enum RunError<T: Scalar> {
    /// Bad inputs, surfaced before any iteration.
    Dynamics(DynError),
    /// The state diverged; the payload holds the truncated trace and the
    /// last finite iterate for inspection.
    NonFiniteState(Box<NonFiniteReport<T>>),
}

impl<T: Scalar> fmt::Display for RunError<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Dynamics(e) => e.fmt(f),
            RunError::NonFiniteState(r) => {
                write!(f, "state became non-finite at iteration {}", r.iteration)
            }
        }
    }
}

impl<T: Scalar> Error for RunError<T> {}

impl<T: Scalar> From<DynError> for RunError<T> {
    fn from(e: DynError) -> Self {
        RunError::Dynamics(e)
    }
}

/// Drives a full trajectory and records it.
///
/// `q` is the true eigenvector of `g`; with [`WeightingMode::Exact`] it
/// also feeds the updates, with [`WeightingMode::Online`] it is used only
/// to measure the estimate error. Iterates until the stop tolerances hold
/// or `max_iters` rounds have run; a non-finite iterate aborts with the
/// truncated trace attached.
pub fn run<T: Scalar, G: Game<T> + ?Sized>(
    g: &Graph<T>,
    game: &G,
    q: &Array1<T>,
    init: EstimateState<T>,
    cfg: &RunConfig<T>,
) -> Result<RunReport<T>, RunError<T>> {
    let (n_agents, _n) = check_round_inputs(&init, g, game)?;
    if q.len() != n_agents {
        return Err(DynError::DimensionMismatch {
            expected: n_agents,
            found: q.len(),
        }
        .into());
    }
    if let Some(target) = &cfg.target {
        if target.len() != init.stack.len() {
            return Err(DynError::DimensionMismatch {
                expected: init.stack.len(),
                found: target.len(),
            }
            .into());
        }
    }
    let dims = game.layout().dims().to_vec();

    let mut state = init;
    let mut eig = match cfg.mode {
        WeightingMode::Online => Some(EigenvectorEstimates::initial(n_agents)),
        WeightingMode::Exact => None,
    };

    let mut trace = Trace::default();
    let mut last_recorded = None;

    let measure = |state: &EstimateState<T>, eig: &Option<EigenvectorEstimates<T>>, k: usize| {
        let (_, perp) = consensus_decompose(&state.stack, q, &dims)
            .expect("dimensions were validated up front");
        let consensus_residual = weighted_norm(&perp, q);
        let dist_q = cfg
            .target
            .as_ref()
            .map(|t| weighted_norm(&(&state.stack - t), q));
        let qhat_error = eig.as_ref().map(|e| e.max_error(q));
        TraceRow {
            k,
            alpha: cfg.schedule.at(k),
            dist_q,
            consensus_residual,
            qhat_error,
        }
    };

    for k in 0.. {
        let row = measure(&state, &eig, k);
        let stop =
            row.consensus_residual <= cfg.tol && row.dist_q.is_none_or(|d| d <= cfg.tol);
        let capped = k >= cfg.max_iters;
        if cfg.record.records(k) || stop || capped {
            last_recorded = Some(k);
            trace.rows.push(row);
        }
        if stop {
            return Ok(RunReport {
                trace,
                final_state: state,
                termination: Termination::Converged { at: k },
            });
        }
        if capped {
            return Ok(RunReport {
                trace,
                final_state: state,
                termination: Termination::MaxIters,
            });
        }

        let alpha = cfg.schedule.at(k);
        let stepped = match &eig {
            None => alg1_step(&state, g, game, q, alpha),
            Some(e) => match alg2_step(&state, e, g, game, alpha) {
                Ok((s, e2)) => {
                    eig = Some(e2);
                    Ok(s)
                }
                Err(err) => Err(err),
            },
        };
        match stepped {
            Ok(next) => state = next,
            Err(DynError::NonFiniteState { iteration }) => {
                if last_recorded != Some(k) {
                    trace.rows.push(measure(&state, &eig, k));
                }
                return Err(RunError::NonFiniteState(Box::new(NonFiniteReport {
                    iteration,
                    trace,
                    last_finite: state.stack,
                })));
            }
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!("the loop returns at the iteration cap");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{BoxBounds, QuadraticGame};
    use crate::graph::{pf_eigenvector, validate_graph};
    use ndarray::array;

    /// Two players with one decision each, gradient Jacobian
    /// [[2,1],[1,2]], offsets (−1, 0), boxes [0,5]².
    fn boxed_reference_game() -> QuadraticGame<f64> {
        QuadraticGame::new(
            &[1, 1],
            array![[2.0, 1.0], [1.0, 2.0]],
            array![-1.0, 0.0],
            BoxBounds::new(array![0.0, 0.0], array![5.0, 5.0]).unwrap(),
        )
        .unwrap()
    }

    fn two_agent_graph() -> Graph<f64> {
        validate_graph(array![[0.5, 0.5], [0.25, 0.75]]).unwrap()
    }

    #[test]
    fn single_agent_round_is_projected_gradient_descent() {
        // One agent, cost (x − 1)² on [0, 5]: gradient 2x − 2.
        let game = QuadraticGame::new(
            &[1],
            array![[2.0_f64]],
            array![-2.0],
            BoxBounds::new(array![0.0], array![5.0]).unwrap(),
        )
        .unwrap();
        let g = validate_graph(array![[1.0]]).unwrap();
        let q = array![1.0];
        let state = EstimateState::initial(&game);
        let next = alg1_step(&state, &g, &game, &q, 0.1).unwrap();
        assert!((next.stack()[0] - 0.2).abs() < 1e-15);
        assert_eq!(next.round(), 1);
    }

    #[test]
    fn first_round_of_the_reference_game_matches_hand_values() {
        let game = boxed_reference_game();
        let g = two_agent_graph();
        let q = array![1.0 / 3.0, 2.0 / 3.0];
        let state = EstimateState::initial(&game);
        let next = alg1_step(&state, &g, &game, &q, 0.1).unwrap();
        // Agent 1: proj(0 − 0.3·(−1)) = 0.3; agent 2: proj(0 − 0.15·0) = 0;
        // all cross-estimates stay 0.
        assert!((next.stack()[0] - 0.3).abs() < 1e-15);
        assert_eq!(next.stack()[1], 0.0);
        assert_eq!(next.stack()[2], 0.0);
        assert_eq!(next.stack()[3], 0.0);
    }

    #[test]
    fn equilibrium_consensus_is_a_fixed_point() {
        let game = boxed_reference_game();
        let g = two_agent_graph();
        let q = array![1.0 / 3.0, 2.0 / 3.0];
        // Boxed equilibrium of the reference game, derived by hand from
        // the fixed-point characterization: (0.5, 0).
        let target = consensus_stack(&array![0.5, 0.0], 2);
        let state = EstimateState::from_stack(&game, target.clone(), 0).unwrap();
        let next = alg1_step(&state, &g, &game, &q, 0.1).unwrap();
        for (a, b) in next.stack().iter().zip(target.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn estimate_rows_mix_like_the_weight_matrix() {
        let g = two_agent_graph();
        let eig = EigenvectorEstimates::initial(2).mix(&g);
        assert_eq!(eig.matrix(), &array![[0.5, 0.5], [0.25, 0.75]]);
        assert_eq!(eig.own_weight(0), 0.5);
        assert_eq!(eig.own_weight(1), 0.75);
    }

    #[test]
    fn estimates_converge_to_the_true_eigenvector() {
        let g = two_agent_graph();
        let spectral = pf_eigenvector(&g, 1e-13).unwrap();
        let mut eig = EigenvectorEstimates::initial(2);
        for _ in 0..200 {
            eig = eig.mix(&g);
        }
        assert!(eig.max_error(&spectral.q) < 1e-10);
    }

    #[test]
    fn online_round_with_converged_estimates_equals_exact_round() {
        let game = boxed_reference_game();
        let g = two_agent_graph();
        let q = array![1.0 / 3.0, 2.0 / 3.0];
        let frozen = EigenvectorEstimates::from_matrix(array![
            [1.0 / 3.0, 2.0 / 3.0],
            [1.0 / 3.0, 2.0 / 3.0]
        ])
        .unwrap();
        let state = EstimateState::from_stack(
            &game,
            array![0.4, -1.0, 2.0, 0.3],
            0,
        )
        .unwrap();
        let exact = alg1_step(&state, &g, &game, &q, 0.05).unwrap();
        let (online, _) = alg2_step(&state, &frozen, &g, &game, 0.05).unwrap();
        assert_eq!(exact.stack(), online.stack());
    }

    #[test]
    fn compact_round_equals_agent_level_round() {
        let game = boxed_reference_game();
        let g = two_agent_graph();
        let q = array![1.0 / 3.0, 2.0 / 3.0];
        let mut state =
            EstimateState::from_stack(&game, array![1.0, -0.5, 0.25, 2.0], 0).unwrap();
        for _ in 0..20 {
            let agent = alg1_step(&state, &g, &game, &q, 0.08).unwrap();
            let stacked = compact_iteration(state.stack(), &g, &game, &q, 0.08).unwrap();
            for (a, b) in agent.stack().iter().zip(stacked.iter()) {
                assert!((a - b).abs() <= 1e-12);
            }
            state = agent;
        }
    }

    #[test]
    fn zero_step_compact_round_is_pure_mixing() {
        let game = QuadraticGame::new(
            &[1, 1],
            array![[2.0, 1.0], [1.0, 2.0]],
            array![-1.0, 0.0],
            BoxBounds::unbounded(2),
        )
        .unwrap();
        let g = two_agent_graph();
        let q = array![1.0 / 3.0, 2.0 / 3.0];
        let x = array![1.0, 2.0, 3.0, 4.0];
        let mixed = compact_iteration(&x, &g, &game, &q, 0.0).unwrap();
        // Rows of W times the two estimate vectors (1,2) and (3,4).
        assert_eq!(mixed, array![2.0, 3.0, 2.5, 3.5]);
    }

    #[test]
    fn harmonic_schedule_values() {
        let s = StepSchedule::<f64>::Harmonic;
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(4), 0.2);
    }

    #[test]
    fn custom_schedule_repeats_its_tail() {
        let s = StepSchedule::custom(vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(s.at(1), 0.25);
        assert_eq!(s.at(100), 0.25);
    }

    #[test]
    fn custom_schedule_rejects_bad_sequences() {
        assert!(matches!(
            StepSchedule::<f64>::custom(vec![]),
            Err(DynError::InvalidSchedule { .. })
        ));
        assert!(matches!(
            StepSchedule::custom(vec![0.1, 0.2]),
            Err(DynError::InvalidSchedule { .. })
        ));
        assert!(matches!(
            StepSchedule::custom(vec![0.1, 0.0]),
            Err(DynError::InvalidSchedule { .. })
        ));
    }

    #[test]
    fn run_converges_on_the_reference_game() {
        let game = boxed_reference_game();
        let g = two_agent_graph();
        let spectral = pf_eigenvector(&g, 1e-13).unwrap();
        let mut cfg = RunConfig::new(StepSchedule::Fixed(0.05), WeightingMode::Exact);
        cfg.target = Some(consensus_stack(&array![0.5, 0.0], 2));
        cfg.tol = 1e-10;
        let report = run(&g, &game, &spectral.q, EstimateState::initial(&game), &cfg).unwrap();
        assert!(matches!(report.termination, Termination::Converged { .. }));
        let last = report.trace.rows.last().unwrap();
        assert!(last.dist_q.unwrap() <= 1e-10);
        assert!(last.consensus_residual <= 1e-10);
        // Iterations are recorded in order, once each.
        for w in report.trace.rows.windows(2) {
            assert!(w[1].k == w[0].k + 1);
        }
    }

    #[test]
    fn zero_step_run_reaches_consensus_but_not_equilibrium() {
        let game = boxed_reference_game();
        let g = two_agent_graph();
        let spectral = pf_eigenvector(&g, 1e-13).unwrap();
        let mut cfg = RunConfig::new(StepSchedule::Fixed(0.0), WeightingMode::Exact);
        cfg.tol = 1e-12;
        let start = EstimateState::from_stack(&game, array![4.0, 1.0, 2.0, 3.0], 0).unwrap();
        let report = run(&g, &game, &spectral.q, start, &cfg).unwrap();
        assert!(matches!(report.termination, Termination::Converged { .. }));
        // Agents agree, but on the average of their starts, not on the
        // equilibrium (0.5, 0).
        let joint = report.final_state.joint_strategy(game.layout());
        assert!((joint[0] - joint[1]).abs() > 0.1 || joint[0] > 1.0);
    }

    #[test]
    fn online_run_drives_estimate_error_to_zero() {
        let game = boxed_reference_game();
        let g = two_agent_graph();
        let spectral = pf_eigenvector(&g, 1e-13).unwrap();
        let mut cfg = RunConfig::new(StepSchedule::Fixed(0.05), WeightingMode::Online);
        cfg.target = Some(consensus_stack(&array![0.5, 0.0], 2));
        cfg.tol = 1e-10;
        let report = run(&g, &game, &spectral.q, EstimateState::initial(&game), &cfg).unwrap();
        assert!(matches!(report.termination, Termination::Converged { .. }));
        let last = report.trace.rows.last().unwrap();
        assert!(last.qhat_error.unwrap() <= 1e-10);
        assert!(last.dist_q.unwrap() <= 1e-10);
    }

    #[test]
    fn oversized_step_reports_divergence_with_diagnostics() {
        let game = QuadraticGame::new(
            &[1, 1],
            array![[2.0, 1.0], [1.0, 2.0]],
            array![-1.0, 0.0],
            BoxBounds::unbounded(2),
        )
        .unwrap();
        let g = two_agent_graph();
        let spectral = pf_eigenvector(&g, 1e-13).unwrap();
        let cfg = RunConfig::new(StepSchedule::Fixed(1e12), WeightingMode::Exact);
        let start = EstimateState::from_stack(&game, array![1.0, 2.0, 3.0, 4.0], 0).unwrap();
        let err = run(&g, &game, &spectral.q, start, &cfg).unwrap_err();
        match err {
            RunError::NonFiniteState(report) => {
                assert!(report.iteration > 0);
                assert!(report.last_finite.iter().all(|v| v.is_finite()));
                assert!(!report.trace.rows.is_empty());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn own_blocks_stay_inside_their_boxes() {
        let game = boxed_reference_game();
        let g = two_agent_graph();
        let q = array![1.0 / 3.0, 2.0 / 3.0];
        let mut state =
            EstimateState::from_stack(&game, array![9.0, -7.0, -3.0, 11.0], 0).unwrap();
        for _ in 0..30 {
            state = alg1_step(&state, &g, &game, &q, 0.5).unwrap();
            let joint = state.joint_strategy(game.layout());
            assert!((0.0..=5.0).contains(&joint[0]));
            assert!((0.0..=5.0).contains(&joint[1]));
        }
    }

    #[test]
    fn csv_serialization_is_stable_and_handles_missing_columns() {
        let trace = Trace {
            rows: vec![
                TraceRow {
                    k: 0,
                    alpha: 0.5,
                    dist_q: None,
                    consensus_residual: 1.25,
                    qhat_error: None,
                },
                TraceRow {
                    k: 1,
                    alpha: 0.5,
                    dist_q: Some(0.03125),
                    consensus_residual: 0.625,
                    qhat_error: Some(0.0078125),
                },
            ],
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "k,alpha,dist_q,consensus_residual,qhat_error\n\
             0,5e-1,,1.25e0,\n\
             1,5e-1,3.125e-2,6.25e-1,7.8125e-3\n"
        );
        let mut again = Vec::new();
        trace.write_csv(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn log2_thinning_keeps_initial_final_and_powers() {
        let game = boxed_reference_game();
        let g = two_agent_graph();
        let spectral = pf_eigenvector(&g, 1e-13).unwrap();
        let mut cfg = RunConfig::new(StepSchedule::Fixed(0.05), WeightingMode::Exact);
        cfg.record = RecordRule::Log2;
        cfg.max_iters = 100;
        cfg.tol = 0.0;
        let start = EstimateState::from_stack(&game, array![4.0, 1.0, 2.0, 3.0], 0).unwrap();
        let report = run(&g, &game, &spectral.q, start, &cfg).unwrap();
        let ks: Vec<usize> = report.trace.rows.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![0, 1, 2, 4, 8, 16, 32, 64, 100]);
    }

    #[test]
    fn run_rejects_mismatched_target() {
        let game = boxed_reference_game();
        let g = two_agent_graph();
        let q = array![1.0 / 3.0, 2.0 / 3.0];
        let mut cfg = RunConfig::new(StepSchedule::Fixed(0.05), WeightingMode::Exact);
        cfg.target = Some(array![0.5, 0.0]);
        let err = run(&g, &game, &q, EstimateState::initial(&game), &cfg).unwrap_err();
        assert!(matches!(err, RunError::Dynamics(DynError::DimensionMismatch { .. })));
    }
}
