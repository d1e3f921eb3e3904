//! Networked Cournot competition benchmark.
//!
//! `N` firms sell into `m` markets; firm `i` serves the markets listed in
//! its participation list and decides how much to ship to each, so its
//! decision block has one coordinate per served market. Production costs
//! are quadratic (`x_iᵀQ_ix_i + cᵀx_i` with `Q_i` diagonal positive), and
//! each market's unit price falls linearly in the total quantity brought
//! to it: `price_k = intercept_k − slope_k · supply_k`. Firm `i` pays its
//! production cost minus its sales revenue, which makes the game quadratic
//! with an affine pseudo-gradient, so [`build_cournot`] lowers a
//! [`CournotSpec`] to a [`QuadraticGame`] with capacity boxes `[0, X_i]`.
//!
//! [`sample_cournot`] draws a reproducible random instance from parameter
//! ranges; the draw order is fixed and documented, so a `(shape, seed)`
//! pair pins the instance bit-for-bit.

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::games::{BoxBounds, GameError, QuadraticGame};
use crate::scalar::{cast, Scalar};

/// Fully explicit Cournot instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CournotSpec<T: Scalar> {
    /// Markets (by index, no repeats) each firm ships to; coordinate `j`
    /// of firm `i`'s decision block is the quantity sent to
    /// `participation[i][j]`.
    pub participation: Vec<Vec<usize>>,
    /// Number of markets.
    pub n_markets: usize,
    /// Diagonal of each firm's quadratic production-cost matrix, aligned
    /// with its participation list.
    pub quadratic_cost: Vec<Array1<T>>,
    /// Each firm's linear production-cost coefficients.
    pub linear_cost: Vec<Array1<T>>,
    /// Per-market price intercepts (price at zero supply).
    pub price_intercept: Array1<T>,
    /// Per-market price slopes (price drop per unit of supply).
    pub price_slope: Array1<T>,
    /// Per-firm shipment capacities; the feasible box is `[0, capacity]`.
    pub capacity: Vec<Array1<T>>,
    /// Seed used when the instance was sampled; `None` for hand-built
    /// instances. Provenance only — never read by the builder.
    pub seed: Option<u64>,
}

impl<T: Scalar> CournotSpec<T> {
    pub fn n_firms(&self) -> usize {
        self.participation.len()
    }

    /// Per-firm block sizes (markets served).
    pub fn dims(&self) -> Vec<usize> {
        self.participation.iter().map(Vec::len).collect()
    }

    /// Joint decision dimension.
    pub fn total_dim(&self) -> usize {
        self.participation.iter().map(Vec::len).sum()
    }
}

/// Sampling ranges for [`sample_cournot`]; all intervals are closed below
/// and open above. Defaults match the benchmark study this model is drawn
/// from.
#[derive(Debug, Clone, PartialEq)]
pub struct CournotRanges {
    pub quadratic_cost: (f64, f64),
    pub linear_cost: (f64, f64),
    pub price_intercept: (f64, f64),
    pub price_slope: (f64, f64),
    pub capacity: (f64, f64),
    /// Participations beyond the one mandatory market per firm. `None`
    /// picks 12 for the reference 20-firm, 7-market shape (total decision
    /// dimension 32) and `min(N(m−1), ⌈0.6N⌉)` otherwise.
    pub extra_participations: Option<usize>,
}

impl Default for CournotRanges {
    fn default() -> Self {
        CournotRanges {
            quadratic_cost: (14.0, 16.0),
            linear_cost: (1.0, 2.0),
            price_intercept: (10.0, 20.0),
            price_slope: (1.0, 3.0),
            capacity: (5.0, 10.0),
            extra_participations: None,
        }
    }
}

impl CournotRanges {
    fn validate(&self) -> Result<(), GameError> {
        let check = |name: &str, (lo, hi): (f64, f64), min_lo: f64| {
            if !lo.is_finite() || !hi.is_finite() || lo > hi || lo < min_lo {
                return Err(GameError::InvalidParameter {
                    what: format!("{name} range [{lo}, {hi}) is invalid"),
                });
            }
            Ok(())
        };
        check("quadratic_cost", self.quadratic_cost, f64::MIN_POSITIVE)?;
        check("linear_cost", self.linear_cost, 0.0)?;
        check("price_intercept", self.price_intercept, f64::MIN_POSITIVE)?;
        check("price_slope", self.price_slope, 0.0)?;
        check("capacity", self.capacity, 0.0)?;
        Ok(())
    }

    fn default_extras(n_firms: usize, n_markets: usize) -> usize {
        if (n_firms, n_markets) == (20, 7) {
            12
        } else {
            (n_firms * (n_markets - 1)).min((0.6 * n_firms as f64).ceil() as usize)
        }
    }
}

/// Draws a random Cournot instance, reproducibly.
///
/// The RNG stream is consumed in a fixed order so the instance is a pure
/// function of `(n_firms, n_markets, seed, ranges)`:
///
/// 1. one mandatory market index per firm, firm-major;
/// 2. a partial Fisher–Yates shuffle over the remaining (firm, market)
///    pairs — enumerated firm-major, market-minor — selecting the extra
///    participations;
/// 3. per firm: quadratic-cost diagonal, then linear cost, then capacity
///    (one draw per served market each);
/// 4. price intercepts, then price slopes, market-major.
///
/// Market lists are sorted ascending. All draws happen in `f64` and are
/// converted afterwards, so `f32` instances mirror `f64` ones.
pub fn sample_cournot<T: Scalar>(
    n_firms: usize,
    n_markets: usize,
    seed: u64,
    ranges: &CournotRanges,
) -> Result<CournotSpec<T>, GameError> {
    if n_firms == 0 || n_markets == 0 {
        return Err(GameError::InvalidParameter {
            what: format!("need at least one firm and one market, got {n_firms} firms, {n_markets} markets"),
        });
    }
    ranges.validate()?;
    let extras = ranges
        .extra_participations
        .unwrap_or_else(|| CournotRanges::default_extras(n_firms, n_markets));
    let free_pairs = n_firms * (n_markets - 1);
    if extras > free_pairs {
        return Err(GameError::InvalidParameter {
            what: format!(
                "{extras} extra participations requested but only {free_pairs} (firm, market) pairs are free"
            ),
        });
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let mandatory: Vec<usize> = (0..n_firms).map(|_| rng.gen_range(0..n_markets)).collect();

    let mut pool: Vec<(usize, usize)> = Vec::with_capacity(free_pairs);
    for (i, skip) in mandatory.iter().enumerate() {
        for k in 0..n_markets {
            if k != *skip {
                pool.push((i, k));
            }
        }
    }
    for t in 0..extras {
        let j = rng.gen_range(t..pool.len());
        pool.swap(t, j);
    }

    let mut participation: Vec<Vec<usize>> = mandatory.iter().map(|k| vec![*k]).collect();
    for &(i, k) in &pool[..extras] {
        participation[i].push(k);
    }
    for list in &mut participation {
        list.sort_unstable();
    }

    let mut draw = |range: (f64, f64)| -> T {
        if range.0 == range.1 {
            // gen_range panics on empty ranges; a degenerate interval
            // means the parameter is deterministic.
            cast::<T>(range.0)
        } else {
            cast::<T>(rng.gen_range(range.0..range.1))
        }
    };

    let mut quadratic_cost = Vec::with_capacity(n_firms);
    let mut linear_cost = Vec::with_capacity(n_firms);
    let mut capacity = Vec::with_capacity(n_firms);
    for list in &participation {
        let ni = list.len();
        quadratic_cost.push(Array1::from_iter((0..ni).map(|_| draw(ranges.quadratic_cost))));
        linear_cost.push(Array1::from_iter((0..ni).map(|_| draw(ranges.linear_cost))));
        capacity.push(Array1::from_iter((0..ni).map(|_| draw(ranges.capacity))));
    }
    let price_intercept = Array1::from_iter((0..n_markets).map(|_| draw(ranges.price_intercept)));
    let price_slope = Array1::from_iter((0..n_markets).map(|_| draw(ranges.price_slope)));

    Ok(CournotSpec {
        participation,
        n_markets,
        quadratic_cost,
        linear_cost,
        price_intercept,
        price_slope,
        capacity,
        seed: Some(seed),
    })
}

fn validate_spec<T: Scalar>(spec: &CournotSpec<T>) -> Result<(), GameError> {
    let n_firms = spec.n_firms();
    if n_firms == 0 {
        return Err(GameError::InvalidParameter {
            what: "need at least one firm".to_string(),
        });
    }
    for (i, list) in spec.participation.iter().enumerate() {
        if list.is_empty() {
            return Err(GameError::InvalidParticipation {
                agent: i,
                detail: "empty market list".to_string(),
            });
        }
        let mut seen = vec![false; spec.n_markets];
        for &k in list {
            if k >= spec.n_markets {
                return Err(GameError::InvalidParticipation {
                    agent: i,
                    detail: format!("market index {k} out of range (m = {})", spec.n_markets),
                });
            }
            if seen[k] {
                return Err(GameError::InvalidParticipation {
                    agent: i,
                    detail: format!("market index {k} repeated"),
                });
            }
            seen[k] = true;
        }
    }
    let per_firm_len = |name: &str, arrays: &[Array1<T>]| -> Result<(), GameError> {
        if arrays.len() != n_firms {
            return Err(GameError::InvalidParameter {
                what: format!("{name} must have one entry per firm"),
            });
        }
        for (i, a) in arrays.iter().enumerate() {
            if a.len() != spec.participation[i].len() {
                return Err(GameError::DimensionMismatch {
                    expected: spec.participation[i].len(),
                    found: a.len(),
                });
            }
        }
        Ok(())
    };
    per_firm_len("quadratic_cost", &spec.quadratic_cost)?;
    per_firm_len("linear_cost", &spec.linear_cost)?;
    per_firm_len("capacity", &spec.capacity)?;
    if spec.price_intercept.len() != spec.n_markets || spec.price_slope.len() != spec.n_markets {
        return Err(GameError::DimensionMismatch {
            expected: spec.n_markets,
            found: spec.price_intercept.len().min(spec.price_slope.len()),
        });
    }
    for (i, q) in spec.quadratic_cost.iter().enumerate() {
        if q.iter().any(|v| *v <= T::zero() || !v.is_finite()) {
            return Err(GameError::InvalidParameter {
                what: format!("firm {i} quadratic cost must be strictly positive"),
            });
        }
    }
    if spec.price_intercept.iter().any(|v| *v <= T::zero() || !v.is_finite()) {
        return Err(GameError::InvalidParameter {
            what: "price intercepts must be strictly positive".to_string(),
        });
    }
    // Zero slopes are allowed: they decouple the firms, which is a useful
    // degenerate case, and strong monotonicity still holds through the
    // production costs.
    if spec.price_slope.iter().any(|v| *v < T::zero() || !v.is_finite()) {
        return Err(GameError::InvalidParameter {
            what: "price slopes must be nonnegative".to_string(),
        });
    }
    for (i, c) in spec.capacity.iter().enumerate() {
        if c.iter().any(|v| *v < T::zero() || v.is_nan()) {
            return Err(GameError::InvalidParameter {
                what: format!("firm {i} capacities must be nonnegative"),
            });
        }
    }
    Ok(())
}

/// Shipment matrix of firm `i`: `m × n_i` binary, column `j` is the unit
/// vector of the market receiving coordinate `j`.
fn shipment_matrix<T: Scalar>(spec: &CournotSpec<T>, i: usize) -> Array2<T> {
    let list = &spec.participation[i];
    let mut a = Array2::zeros((spec.n_markets, list.len()));
    for (j, &k) in list.iter().enumerate() {
        a[(k, j)] = T::one();
    }
    a
}

/// Lowers a Cournot instance to its affine pseudo-gradient form.
///
/// With `A_i` the firm's shipment matrix, `A = [A_1 … A_N]`, and
/// `S = diag(price_slope)`, firm `i`'s partial gradient is
/// `2Q_ix_i + c_i − A_iᵀ(intercept − S·Ax) + A_iᵀS A_ix_i`, so the joint
/// Jacobian is `2·blockdiag(Q_i) + AᵀSA + blockdiag(A_iᵀSA_i)` and the
/// constant term per firm is `c_i − A_iᵀ·intercept`. The feasible boxes
/// are `[0, capacity_i]`.
pub fn build_cournot<T: Scalar>(spec: &CournotSpec<T>) -> Result<QuadraticGame<T>, GameError> {
    validate_spec(spec)?;
    let dims = spec.dims();
    let n = spec.total_dim();
    let n_firms = spec.n_firms();

    let mut a = Array2::<T>::zeros((spec.n_markets, n));
    let mut offset_col = 0;
    for i in 0..n_firms {
        let ai = shipment_matrix(spec, i);
        a.slice_mut(s![.., offset_col..offset_col + ai.ncols()])
            .assign(&ai);
        offset_col += ai.ncols();
    }

    let slope = Array2::from_diag(&spec.price_slope);
    let mut jacobian = a.t().dot(&slope).dot(&a);
    let mut offset = Array1::<T>::zeros(n);
    let mut lower = Array1::<T>::zeros(n);
    let mut upper = Array1::<T>::zeros(n);

    let mut at = 0;
    for (i, &ni) in dims.iter().enumerate() {
        let ai = shipment_matrix(spec, i);
        let own_coupling = ai.t().dot(&slope).dot(&ai);
        for j in 0..ni {
            for jj in 0..ni {
                jacobian[(at + j, at + jj)] += own_coupling[(j, jj)];
            }
            jacobian[(at + j, at + j)] += cast::<T>(2.0) * spec.quadratic_cost[i][j];
        }
        let constant = &spec.linear_cost[i] - &ai.t().dot(&spec.price_intercept);
        offset.slice_mut(s![at..at + ni]).assign(&constant);
        upper.slice_mut(s![at..at + ni]).assign(&spec.capacity[i]);
        lower.slice_mut(s![at..at + ni]).fill(T::zero());
        at += ni;
    }

    QuadraticGame::new(&dims, jacobian, offset, BoxBounds::new(lower, upper)?)
}

/// Firm `i`'s cost at the joint strategy `x`: production cost minus sales
/// revenue at the market-clearing prices. Used by finite-difference
/// cross-checks of the assembled gradient.
pub fn cournot_cost<T: Scalar>(
    spec: &CournotSpec<T>,
    i: usize,
    x: ArrayView1<'_, T>,
) -> Result<T, GameError> {
    validate_spec(spec)?;
    let n = spec.total_dim();
    if x.len() != n {
        return Err(GameError::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    let dims = spec.dims();
    let start: usize = dims[..i].iter().sum();
    let xi = x.slice(s![start..start + dims[i]]);

    // Total supply per market, then prices.
    let mut supply = Array1::<T>::zeros(spec.n_markets);
    let mut at = 0;
    for (firm, list) in spec.participation.iter().enumerate() {
        for (j, &k) in list.iter().enumerate() {
            supply[k] += x[at + j];
        }
        at += spec.participation[firm].len();
    }
    let mut revenue = T::zero();
    for (j, &k) in spec.participation[i].iter().enumerate() {
        let price = spec.price_intercept[k] - spec.price_slope[k] * supply[k];
        revenue += price * xi[j];
    }

    let mut production = T::zero();
    for j in 0..dims[i] {
        production += spec.quadratic_cost[i][j] * xi[j] * xi[j] + spec.linear_cost[i][j] * xi[j];
    }
    Ok(production - revenue)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{game_constants, Game};
    use ndarray::array;
    use rand::Rng;

    fn two_firm_single_market(slope: f64) -> CournotSpec<f64> {
        CournotSpec {
            participation: vec![vec![0], vec![0]],
            n_markets: 1,
            quadratic_cost: vec![array![3.0], array![4.0]],
            linear_cost: vec![array![1.0], array![2.0]],
            price_intercept: array![12.0],
            price_slope: array![slope],
            capacity: vec![array![5.0], array![6.0]],
            seed: None,
        }
    }

    #[test]
    fn two_firm_game_matches_hand_derivation() {
        let spec = two_firm_single_market(1.5);
        let game = build_cournot(&spec).unwrap();
        // Diagonal 2Q_i + 2·slope, off-diagonal slope.
        assert_eq!(game.jacobian(), &array![[9.0, 1.5], [1.5, 11.0]]);
        // Linear cost minus intercept.
        assert_eq!(game.offset(), &array![-11.0, -10.0]);
        assert_eq!(game.bounds().lower(), &array![0.0, 0.0]);
        assert_eq!(game.bounds().upper(), &array![5.0, 6.0]);
    }

    #[test]
    fn zero_slope_decouples_the_firms() {
        let spec = two_firm_single_market(0.0);
        let game = build_cournot(&spec).unwrap();
        assert_eq!(game.jacobian(), &array![[6.0, 0.0], [0.0, 8.0]]);
    }

    #[test]
    fn rejects_empty_market_list() {
        let mut spec = two_firm_single_market(1.0);
        spec.participation[1].clear();
        spec.quadratic_cost[1] = Array1::zeros(0);
        spec.linear_cost[1] = Array1::zeros(0);
        spec.capacity[1] = Array1::zeros(0);
        let err = build_cournot(&spec).unwrap_err();
        assert!(matches!(err, GameError::InvalidParticipation { agent: 1, .. }));
    }

    #[test]
    fn rejects_market_index_out_of_range() {
        let mut spec = two_firm_single_market(1.0);
        spec.participation[0] = vec![1];
        let err = build_cournot(&spec).unwrap_err();
        assert!(matches!(err, GameError::InvalidParticipation { agent: 0, .. }));
    }

    #[test]
    fn rejects_repeated_market() {
        let spec = CournotSpec {
            participation: vec![vec![0, 0]],
            n_markets: 2,
            quadratic_cost: vec![array![1.0, 1.0]],
            linear_cost: vec![array![0.0, 0.0]],
            price_intercept: array![1.0, 1.0],
            price_slope: array![1.0, 1.0],
            capacity: vec![array![1.0, 1.0]],
            seed: None,
        };
        let err = build_cournot(&spec).unwrap_err();
        assert!(matches!(err, GameError::InvalidParticipation { agent: 0, .. }));
    }

    #[test]
    fn reference_shape_has_32_decision_variables() {
        let spec = sample_cournot::<f64>(20, 7, 0, &CournotRanges::default()).unwrap();
        assert_eq!(spec.total_dim(), 32);
        assert_eq!(spec.n_firms(), 20);
        for list in &spec.participation {
            assert!(!list.is_empty());
            assert!(list.windows(2).all(|w| w[0] < w[1]));
            assert!(list.iter().all(|&k| k < 7));
        }
        let game = build_cournot(&spec).unwrap();
        let constants = game_constants(&game).unwrap();
        assert!(constants.mu > 0.0);
        assert!(constants.ell0 >= constants.ell);
    }

    #[test]
    fn sampled_parameters_stay_in_their_ranges() {
        let ranges = CournotRanges::default();
        let spec = sample_cournot::<f64>(20, 7, 42, &ranges).unwrap();
        for i in 0..20 {
            assert!(spec.quadratic_cost[i].iter().all(|v| (14.0..16.0).contains(v)));
            assert!(spec.linear_cost[i].iter().all(|v| (1.0..2.0).contains(v)));
            assert!(spec.capacity[i].iter().all(|v| (5.0..10.0).contains(v)));
        }
        assert!(spec.price_intercept.iter().all(|v| (10.0..20.0).contains(v)));
        assert!(spec.price_slope.iter().all(|v| (1.0..3.0).contains(v)));
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let ranges = CournotRanges::default();
        let a = sample_cournot::<f64>(20, 7, 9, &ranges).unwrap();
        let b = sample_cournot::<f64>(20, 7, 9, &ranges).unwrap();
        assert_eq!(a, b);
        let c = sample_cournot::<f64>(20, 7, 10, &ranges).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gradient_matches_finite_differences_of_the_cost() {
        let spec = sample_cournot::<f64>(3, 2, 5, &CournotRanges::default()).unwrap();
        let game = build_cournot(&spec).unwrap();
        let n = spec.total_dim();
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let h = 1e-5;
        for _ in 0..20 {
            let x = Array1::from_iter((0..n).map(|_| rng.gen_range(0.0..5.0)));
            let grad = crate::games::pseudo_gradient(&game, &x).unwrap();
            let mut at = 0;
            for i in 0..spec.n_firms() {
                let ni = spec.participation[i].len();
                for j in 0..ni {
                    let mut plus = x.clone();
                    plus[at + j] += h;
                    let mut minus = x.clone();
                    minus[at + j] -= h;
                    let fd = (cournot_cost(&spec, i, plus.view()).unwrap()
                        - cournot_cost(&spec, i, minus.view()).unwrap())
                        / (2.0 * h);
                    let denom = grad[at + j].abs().max(1.0);
                    assert!(
                        ((fd - grad[at + j]) / denom).abs() < 1e-6,
                        "finite difference mismatch at firm {i} coordinate {j}"
                    );
                }
                at += ni;
            }
        }
    }

    #[test]
    fn cost_is_zero_at_zero_production() {
        let spec = two_firm_single_market(2.0);
        let x = Array1::zeros(2);
        assert_eq!(cournot_cost(&spec, 0, x.view()).unwrap(), 0.0);
        assert_eq!(cournot_cost(&spec, 1, x.view()).unwrap(), 0.0);
    }

    #[test]
    fn layout_follows_participation() {
        let spec = sample_cournot::<f64>(5, 3, 1, &CournotRanges::default()).unwrap();
        let game = build_cournot(&spec).unwrap();
        assert_eq!(game.layout().dims(), spec.dims().as_slice());
        assert_eq!(game.layout().total_dim(), spec.total_dim());
    }
}
