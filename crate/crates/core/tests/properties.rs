//! Randomized invariant checks over generated inputs: things that must
//! hold for *every* graph, box, schedule, or trace row, not just the
//! hand-picked fixtures in the other suites.

use approx::{assert_abs_diff_eq, assert_relative_eq};
use ndarray::Array1;
use proptest::prelude::*;

use nashseek::dynamics::{StepSchedule, TraceRow};
use nashseek::games::BoxBounds;
use nashseek::graph::{
    consensus_decompose, pf_eigenvector, random_strongly_connected, weighted_inner, weighted_norm,
};

/// A strategy for box bounds together with a point to clamp: per
/// coordinate, two finite endpoints (sorted into lower/upper) and a raw
/// value that may fall on either side of them.
fn box_and_point() -> impl Strategy<Value = (BoxBounds<f64>, Array1<f64>)> {
    prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -200.0f64..200.0), 1..16).prop_map(
        |coords| {
            let lower: Array1<f64> = coords.iter().map(|(a, b, _)| a.min(*b)).collect();
            let upper: Array1<f64> = coords.iter().map(|(a, b, _)| a.max(*b)).collect();
            let point: Array1<f64> = coords.iter().map(|(_, _, v)| *v).collect();
            (
                BoxBounds::new(lower, upper).expect("sorted endpoints form a valid box"),
                point,
            )
        },
    )
}

proptest! {
    /// Every generated graph is row-stochastic with a strictly positive
    /// diagonal, and its advertised weighting satisfies the defining
    /// relations of a normalized left eigenvector at eigenvalue one.
    #[test]
    fn generated_graphs_and_weightings_are_well_formed(n in 1usize..12, seed in 0u64..300) {
        let g = random_strongly_connected::<f64>(n, seed);
        for i in 0..n {
            prop_assert!(g.weight(i, i) > 0.0, "self-loop missing at agent {i}");
            let row_sum: f64 = (0..n).map(|j| g.weight(i, j)).sum();
            assert_abs_diff_eq!(row_sum, 1.0, epsilon = 1e-12);
            for j in 0..n {
                prop_assert!(g.weight(i, j) >= 0.0);
            }
        }
        let data = pf_eigenvector(&g, 1e-13).expect("generated graphs always admit a weighting");
        prop_assert!(data.q.iter().all(|v| *v > 0.0));
        assert_abs_diff_eq!(data.q.sum(), 1.0, epsilon = 1e-12);
        let image = g.weights().t().dot(&data.q);
        for (a, b) in image.iter().zip(data.q.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-11);
        }
        prop_assert!(data.sigma_bar >= 0.0 && data.sigma_bar < 1.0 + 1e-12);
    }

    /// Splitting a stacked vector into its agreement and disagreement
    /// parts reconstructs the input, the parts are orthogonal under the
    /// weighted inner product, and the squared norms add up.
    #[test]
    fn consensus_split_is_an_orthogonal_decomposition(
        n_agents in 1usize..8,
        dim in 1usize..5,
        seed in 0u64..200,
        values in prop::collection::vec(-10.0f64..10.0, 1..64),
    ) {
        let g = random_strongly_connected::<f64>(n_agents, seed);
        let q = pf_eigenvector(&g, 1e-13).unwrap().q;
        let stack: Array1<f64> = (0..n_agents * dim)
            .map(|k| values[k % values.len()])
            .collect();
        let dims = vec![1usize; dim];

        let (parallel, perp) = consensus_decompose(&stack, &q, &dims).unwrap();
        let rebuilt = &parallel + &perp;
        for (a, b) in rebuilt.iter().zip(stack.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        // The agreement part repeats one block, so orthogonality against
        // it covers orthogonality against every consensus stack.
        let cross = weighted_inner(&parallel, &perp, &q);
        assert_abs_diff_eq!(cross, 0.0, epsilon = 1e-10);
        let total = weighted_norm(&stack, &q).powi(2);
        let split = weighted_norm(&parallel, &q).powi(2) + weighted_norm(&perp, &q).powi(2);
        assert_relative_eq!(total, split, max_relative = 1e-9, epsilon = 1e-12);
    }

    /// Clamping lands inside the box, does nothing to points already
    /// inside, and is idempotent.
    #[test]
    fn box_clamp_projects_and_is_idempotent((bounds, point) in box_and_point()) {
        let n = bounds.len();
        let mut clamped = point.clone();
        bounds.clamp_range(0..n, &mut clamped);
        for k in 0..n {
            prop_assert!(clamped[k] >= bounds.lower()[k] && clamped[k] <= bounds.upper()[k]);
            if point[k] >= bounds.lower()[k] && point[k] <= bounds.upper()[k] {
                prop_assert_eq!(clamped[k], point[k], "interior point moved at {}", k);
            }
        }
        let mut twice = clamped.clone();
        bounds.clamp_range(0..n, &mut twice);
        prop_assert_eq!(twice, clamped);
    }

    /// A sorted positive sequence is always accepted, plays back verbatim,
    /// and holds its last value forever; the vanishing schedule is exactly
    /// `1/(k+1)`.
    #[test]
    fn schedules_play_back_their_sequences(
        raw in prop::collection::vec(1e-6f64..10.0, 1..12),
        extra in 0usize..20,
    ) {
        let mut seq = raw;
        seq.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let schedule = StepSchedule::custom(seq.clone()).expect("sorted positive sequence");
        for (k, want) in seq.iter().enumerate() {
            prop_assert_eq!(schedule.at(k), *want);
        }
        prop_assert_eq!(schedule.at(seq.len() - 1 + extra), *seq.last().unwrap());

        let harmonic = StepSchedule::<f64>::Harmonic;
        prop_assert_eq!(harmonic.at(extra), 1.0 / (extra as f64 + 1.0));
    }

    /// Sequences with an increase, a nonpositive entry, or no entries at
    /// all are rejected up front rather than failing mid-run.
    #[test]
    fn bad_schedules_are_rejected(head in 1e-3f64..1.0, bump in 1e-3f64..1.0) {
        prop_assert!(StepSchedule::custom(vec![head, head + bump]).is_err());
        prop_assert!(StepSchedule::custom(vec![head, -bump]).is_err());
        prop_assert!(StepSchedule::<f64>::custom(vec![]).is_err());
    }

    /// A trace row prints five comma-separated fields that parse back to
    /// the exact values, with absent measurements as empty fields.
    #[test]
    fn csv_fields_round_trip(
        k in 0usize..1_000_000,
        alpha in 0.0f64..1.0,
        dist in prop::option::of(0.0f64..1e6),
        residual in 0.0f64..1e6,
        qhat in prop::option::of(0.0f64..2.0),
    ) {
        let row = TraceRow { k, alpha, dist_q: dist, consensus_residual: residual, qhat_error: qhat };
        let line = row.csv_fields();
        let fields: Vec<&str> = line.split(',').collect();
        prop_assert_eq!(fields.len(), 5, "line was {}", line);
        prop_assert_eq!(fields[0].parse::<usize>().unwrap(), k);
        prop_assert_eq!(fields[1].parse::<f64>().unwrap(), alpha);
        match dist {
            Some(d) => prop_assert_eq!(fields[2].parse::<f64>().unwrap(), d),
            None => prop_assert_eq!(fields[2], ""),
        }
        prop_assert_eq!(fields[3].parse::<f64>().unwrap(), residual);
        match qhat {
            Some(e) => prop_assert_eq!(fields[4].parse::<f64>().unwrap(), e),
            None => prop_assert_eq!(fields[4], ""),
        }
    }
}
