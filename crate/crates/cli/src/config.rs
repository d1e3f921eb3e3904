//! Config schema and its resolution into a runnable experiment.
//!
//! Configs are TOML documents with three mandatory tables — `[graph]`,
//! `[game]`, `[algorithm]` — and an optional `[output]`. Parsing is
//! strict (unknown keys are rejected) and every validation failure names
//! the dotted key it concerns. Anything randomized (generated graphs,
//! sampled market games) must carry an explicit seed, so a config document
//! fully determines every byte of the traces it produces.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::Deserialize;

use nashseek::cournot::{build_cournot, sample_cournot, CournotRanges};
use nashseek::dynamics::{RecordRule, StepSchedule, WeightingMode};
use nashseek::games::{game_constants, BoxBounds, Game, GameConstants, QuadraticGame};
use nashseek::graph::{pf_eigenvector, random_strongly_connected, ring_graph, validate_graph};
use nashseek::rates::{max_step_size, RateError, DEFAULT_CERTIFICATE_TOL};
use nashseek::{Graph64, QuadraticGame64, SpectralData64, StepCertificate64};

use crate::error::CliError;

/// Residual demanded of the eigenvector solve; tighter than the library
/// default because every reported distance is weighted by `q`.
const PF_TOL: f64 = 1e-13;

/// Top-level config document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    pub game: GameSpec,
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// `[graph]`: either an explicit row-stochastic matrix or a generator.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    /// Explicit weights, row-major; mutually exclusive with `topology`.
    pub matrix: Option<Vec<Vec<f64>>>,
    /// `"ring"` or `"random"`.
    pub topology: Option<String>,
    /// Agent count for generated topologies.
    pub agents: Option<usize>,
    /// Required for `topology = "random"`, meaningless otherwise.
    pub seed: Option<u64>,
}

/// `[game]`: an explicit quadratic game or a sampled market game.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    /// `"quadratic"` or `"cournot"`.
    #[serde(rename = "type")]
    pub kind: String,
    /// Per-agent decision dimensions; defaults to one each.
    pub dims: Option<Vec<usize>>,
    /// Gradient Jacobian, row-major.
    pub jacobian: Option<Vec<Vec<f64>>>,
    /// Constant gradient term.
    pub offset: Option<Vec<f64>>,
    /// Box bounds; both or neither of `lower`/`upper`.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    /// Market-game shape.
    pub firms: Option<usize>,
    pub markets: Option<usize>,
    /// Required for `type = "cournot"`.
    pub seed: Option<u64>,
    /// Overrides the default number of extra firm-market participations.
    pub extra_participations: Option<usize>,
}

/// `[algorithm]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    /// `"alg1"` (exact eigenvector weighting) or `"alg2"` (online).
    pub variant: String,
    pub step: StepSpec,
    /// Default one million.
    pub max_iters: Option<usize>,
    /// Stop tolerance on the consensus residual and target distance;
    /// default `1e-8`.
    pub tol: Option<f64>,
    /// `"all"` (default) or `"log2"` trace thinning.
    pub record: Option<String>,
}

/// Step-size selection: `"auto"`, `"harmonic"`, `{ fixed = 1e-4 }`, or
/// `{ multiple = 400.0 }` (a multiple of the certified maximum).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Named(String),
    Fixed { fixed: f64 },
    Multiple { multiple: f64 },
}

/// `[output]`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Artifact directory; overridable on the command line.
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads and parses a config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| CliError::ConfigParse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    /// Validates everything and builds the runnable pieces.
    pub fn resolve(&self) -> Result<Experiment, CliError> {
        let graph = build_graph(&self.graph)?;
        let game = build_game(&self.game)?;
        if graph.n_agents() != game.layout().n_agents() {
            return Err(CliError::ConfigInvalid {
                key: "graph".to_string(),
                reason: format!(
                    "graph has {} agents but the game defines {}",
                    graph.n_agents(),
                    game.layout().n_agents()
                ),
            });
        }
        let spectral = pf_eigenvector(&graph, PF_TOL)?;
        let constants = game_constants(&game)?;

        let mode = match self.algorithm.variant.as_str() {
            "alg1" => WeightingMode::Exact,
            "alg2" => WeightingMode::Online,
            other => {
                return Err(CliError::ConfigInvalid {
                    key: "algorithm.variant".to_string(),
                    reason: format!("unknown variant {other:?}, expected \"alg1\" or \"alg2\""),
                })
            }
        };
        let record = match self.algorithm.record.as_deref() {
            None | Some("all") => RecordRule::All,
            Some("log2") => RecordRule::Log2,
            Some(other) => {
                return Err(CliError::ConfigInvalid {
                    key: "algorithm.record".to_string(),
                    reason: format!("unknown rule {other:?}, expected \"all\" or \"log2\""),
                })
            }
        };
        let max_iters = self.algorithm.max_iters.unwrap_or(1_000_000);
        let tol = self.algorithm.tol.unwrap_or(1e-8);
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(CliError::ConfigInvalid {
                key: "algorithm.tol".to_string(),
                reason: "must be positive and finite".to_string(),
            });
        }

        Ok(Experiment {
            graph,
            spectral,
            game,
            constants,
            mode,
            step: self.algorithm.step.clone(),
            max_iters,
            tol,
            record,
            graph_seed: self.graph.seed,
            game_seed: self.game.seed,
        })
    }

    /// Artifact directory: command-line override, else `[output] dir`,
    /// else `out` next to the working directory.
    pub fn output_dir(&self, cli_override: Option<&Path>) -> PathBuf {
        cli_override
            .map(Path::to_path_buf)
            .or_else(|| self.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Everything needed to certify, solve, and run one experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub graph: Graph64,
    pub spectral: SpectralData64,
    pub game: QuadraticGame64,
    pub constants: GameConstants<f64>,
    pub mode: WeightingMode,
    pub step: StepSpec,
    pub max_iters: usize,
    pub tol: f64,
    pub record: RecordRule,
    pub graph_seed: Option<u64>,
    pub game_seed: Option<u64>,
}

impl Experiment {
    /// The bisection certificate for this graph/game pair.
    pub fn certificate(&self) -> Result<StepCertificate64, RateError> {
        max_step_size(
            &self.constants,
            &self.spectral.q,
            self.spectral.sigma_bar,
            DEFAULT_CERTIFICATE_TOL,
        )
    }

    /// Resolves the configured step into a schedule, certifying first when
    /// the mode calls for it.
    pub fn schedule(&self) -> Result<StepSchedule<f64>, CliError> {
        match &self.step {
            StepSpec::Named(name) => match name.as_str() {
                "auto" => Ok(StepSchedule::Fixed(self.certificate()?.alpha)),
                "harmonic" => Ok(StepSchedule::Harmonic),
                other => Err(CliError::ConfigInvalid {
                    key: "algorithm.step".to_string(),
                    reason: format!(
                        "unknown step {other:?}, expected \"auto\", \"harmonic\", \
                         {{ fixed = <alpha> }}, or {{ multiple = <factor> }}"
                    ),
                }),
            },
            StepSpec::Fixed { fixed } => {
                if !(*fixed > 0.0 && fixed.is_finite()) {
                    return Err(CliError::ConfigInvalid {
                        key: "algorithm.step.fixed".to_string(),
                        reason: "must be positive and finite".to_string(),
                    });
                }
                Ok(StepSchedule::Fixed(*fixed))
            }
            StepSpec::Multiple { multiple } => {
                if !(*multiple > 0.0 && multiple.is_finite()) {
                    return Err(CliError::ConfigInvalid {
                        key: "algorithm.step.multiple".to_string(),
                        reason: "must be positive and finite".to_string(),
                    });
                }
                Ok(StepSchedule::Fixed(multiple * self.certificate()?.alpha))
            }
        }
    }

    /// Human-readable step description for reports.
    pub fn step_label(&self) -> String {
        match &self.step {
            StepSpec::Named(name) => name.clone(),
            StepSpec::Fixed { fixed } => format!("fixed {fixed:e}"),
            StepSpec::Multiple { multiple } => format!("{multiple} x certified"),
        }
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> CliError {
    CliError::ConfigInvalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], key: &str) -> Result<Array2<f64>, CliError> {
    let n = rows.len();
    if n == 0 {
        return Err(invalid(key, "must not be empty"));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(invalid(key, "all rows must have the same length"));
    }
    Ok(Array2::from_shape_fn((n, m), |(i, j)| rows[i][j]))
}

fn build_graph(spec: &GraphSpec) -> Result<Graph64, CliError> {
    match (&spec.matrix, &spec.topology) {
        (Some(_), Some(_)) => Err(invalid(
            "graph.topology",
            "mutually exclusive with graph.matrix",
        )),
        (None, None) => Err(invalid(
            "graph",
            "needs either matrix or topology",
        )),
        (Some(rows), None) => {
            if spec.agents.is_some() {
                return Err(invalid(
                    "graph.agents",
                    "not allowed with an explicit matrix",
                ));
            }
            if spec.seed.is_some() {
                return Err(invalid("graph.seed", "not allowed with an explicit matrix"));
            }
            let w = rows_to_matrix(rows, "graph.matrix")?;
            if w.nrows() != w.ncols() {
                return Err(invalid("graph.matrix", "must be square"));
            }
            Ok(validate_graph(w)?)
        }
        (None, Some(topology)) => {
            let agents = spec
                .agents
                .ok_or_else(|| invalid("graph.agents", "required for generated topologies"))?;
            if agents == 0 {
                return Err(invalid("graph.agents", "must be at least 1"));
            }
            match topology.as_str() {
                "ring" => {
                    if spec.seed.is_some() {
                        return Err(invalid(
                            "graph.seed",
                            "the ring topology is deterministic and takes no seed",
                        ));
                    }
                    Ok(ring_graph(agents))
                }
                "random" => {
                    let seed = spec.seed.ok_or_else(|| {
                        invalid("graph.seed", "required for topology = \"random\"")
                    })?;
                    Ok(random_strongly_connected(agents, seed))
                }
                other => Err(invalid(
                    "graph.topology",
                    format!("unknown topology {other:?}, expected \"ring\" or \"random\""),
                )),
            }
        }
    }
}

fn forbid<T>(value: &Option<T>, key: &str, context: &str) -> Result<(), CliError> {
    if value.is_some() {
        Err(invalid(key, format!("not allowed for {context}")))
    } else {
        Ok(())
    }
}

fn build_game(spec: &GameSpec) -> Result<QuadraticGame64, CliError> {
    match spec.kind.as_str() {
        "quadratic" => {
            forbid(&spec.firms, "game.firms", "type = \"quadratic\"")?;
            forbid(&spec.markets, "game.markets", "type = \"quadratic\"")?;
            forbid(&spec.seed, "game.seed", "type = \"quadratic\"")?;
            forbid(
                &spec.extra_participations,
                "game.extra_participations",
                "type = \"quadratic\"",
            )?;
            let jacobian_rows = spec
                .jacobian
                .as_ref()
                .ok_or_else(|| invalid("game.jacobian", "required for type = \"quadratic\""))?;
            let offset = spec
                .offset
                .as_ref()
                .ok_or_else(|| invalid("game.offset", "required for type = \"quadratic\""))?;
            let jacobian = rows_to_matrix(jacobian_rows, "game.jacobian")?;
            let n = offset.len();
            if jacobian.dim() != (n, n) {
                return Err(invalid(
                    "game.jacobian",
                    format!("must be {n}x{n} to match game.offset"),
                ));
            }
            let dims = match &spec.dims {
                Some(d) => {
                    if d.iter().sum::<usize>() != n || d.contains(&0) {
                        return Err(invalid(
                            "game.dims",
                            format!("must be positive and sum to {n}"),
                        ));
                    }
                    d.clone()
                }
                None => vec![1; n],
            };
            let bounds = match (&spec.lower, &spec.upper) {
                (None, None) => BoxBounds::unbounded(n),
                (Some(lo), Some(hi)) => {
                    if lo.len() != n || hi.len() != n {
                        return Err(invalid(
                            "game.lower",
                            format!("bounds must have length {n}"),
                        ));
                    }
                    BoxBounds::new(Array1::from(lo.clone()), Array1::from(hi.clone()))
                        .map_err(CliError::Game)?
                }
                _ => {
                    return Err(invalid(
                        "game.lower",
                        "lower and upper must be given together",
                    ))
                }
            };
            Ok(QuadraticGame::new(&dims, jacobian, Array1::from(offset.clone()), bounds)?)
        }
        "cournot" => {
            forbid(&spec.dims, "game.dims", "type = \"cournot\"")?;
            forbid(&spec.jacobian, "game.jacobian", "type = \"cournot\"")?;
            forbid(&spec.offset, "game.offset", "type = \"cournot\"")?;
            forbid(&spec.lower, "game.lower", "type = \"cournot\"")?;
            forbid(&spec.upper, "game.upper", "type = \"cournot\"")?;
            let firms = spec
                .firms
                .ok_or_else(|| invalid("game.firms", "required for type = \"cournot\""))?;
            let markets = spec
                .markets
                .ok_or_else(|| invalid("game.markets", "required for type = \"cournot\""))?;
            let seed = spec.seed.ok_or_else(|| {
                invalid("game.seed", "required: sampled games must be reproducible")
            })?;
            if firms == 0 {
                return Err(invalid("game.firms", "must be at least 1"));
            }
            if markets == 0 {
                return Err(invalid("game.markets", "must be at least 1"));
            }
            let mut ranges = CournotRanges::default();
            if let Some(extra) = spec.extra_participations {
                ranges.extra_participations = Some(extra);
            }
            let cournot = sample_cournot(firms, markets, seed, &ranges)?;
            Ok(build_cournot(&cournot)?)
        }
        other => Err(invalid(
            "game.type",
            format!("unknown game type {other:?}, expected \"quadratic\" or \"cournot\""),
        )),
    }
}
