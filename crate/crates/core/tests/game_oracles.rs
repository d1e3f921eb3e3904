//! Cross-checks of the game-constant extraction against a dense solver,
//! and sampled verification that the pseudo-gradients actually satisfy the
//! monotonicity and Lipschitz bounds those constants promise.

mod common;

use ndarray::s;
use rand::Rng;

use nashseek::cournot::{build_cournot, sample_cournot, CournotRanges};
use nashseek::games::{
    extended_pseudo_gradient, game_constants, pseudo_gradient, BoxBounds, Game,
};
use nashseek::oracle::{solve_ne_quadratic, verify_ne};

use common::{
    random_quadratic_game, random_vector, rng, singular_values_desc, symmetric_eigenvalues_asc,
};

fn random_dims(r: &mut impl Rng) -> Vec<usize> {
    let n_agents = r.gen_range(2..=6);
    (0..n_agents).map(|_| r.gen_range(1..=3)).collect()
}

#[test]
fn constants_match_dense_decompositions() {
    let mut r = rng(7);
    for _ in 0..20 {
        let dims = random_dims(&mut r);
        let n: usize = dims.iter().sum();
        let game = random_quadratic_game(&mut r, &dims, 0.2, BoxBounds::unbounded(n));
        let c = game_constants(&game).unwrap();

        let sym = (game.jacobian() + &game.jacobian().t()) / 2.0;
        let mu_dense = symmetric_eigenvalues_asc(&sym)[0];
        assert!((c.mu - mu_dense).abs() <= 1e-9);

        let ell0_dense = singular_values_desc(game.jacobian())[0];
        assert!((c.ell0 - ell0_dense).abs() <= 1e-9);

        let mut ell_dense = 0.0_f64;
        for i in 0..game.layout().n_agents() {
            let block = game.layout().block(i);
            let rows = game.jacobian().slice(s![block, ..]).to_owned();
            ell_dense = ell_dense.max(singular_values_desc(&rows)[0]);
        }
        assert!((c.ell - ell_dense).abs() <= 1e-9);
    }
}

#[test]
fn pseudo_gradient_obeys_the_extracted_bounds() {
    let mut r = rng(11);
    for _ in 0..10 {
        let dims = random_dims(&mut r);
        let n: usize = dims.iter().sum();
        let game = random_quadratic_game(&mut r, &dims, 0.3, BoxBounds::unbounded(n));
        let c = game_constants(&game).unwrap();
        for _ in 0..100 {
            let x = random_vector(&mut r, n, 4.0);
            let y = random_vector(&mut r, n, 4.0);
            let d = &x - &y;
            let df = pseudo_gradient(&game, &x).unwrap() - pseudo_gradient(&game, &y).unwrap();
            let dd: f64 = d.dot(&d);
            // Strong monotonicity with the extracted modulus...
            assert!(df.dot(&d) >= c.mu * dd - 1e-9);
            // ...and Lipschitz continuity with the extracted constant.
            assert!(df.dot(&df).sqrt() <= c.ell0 * dd.sqrt() + 1e-9);
        }
    }
}

#[test]
fn extended_gradient_blocks_are_lipschitz_in_the_estimates() {
    let mut r = rng(13);
    for _ in 0..10 {
        let dims = random_dims(&mut r);
        let n: usize = dims.iter().sum();
        let n_agents = dims.len();
        let game = random_quadratic_game(&mut r, &dims, 0.3, BoxBounds::unbounded(n));
        let c = game_constants(&game).unwrap();
        for _ in 0..100 {
            let x = random_vector(&mut r, n_agents * n, 4.0);
            let y = random_vector(&mut r, n_agents * n, 4.0);
            let fx = extended_pseudo_gradient(&game, &x).unwrap();
            let fy = extended_pseudo_gradient(&game, &y).unwrap();
            for i in 0..n_agents {
                let block = game.layout().block(i);
                let df = &fx.slice(s![block.clone()]) - &fy.slice(s![block]);
                let du = &x.slice(s![i * n..(i + 1) * n]) - &y.slice(s![i * n..(i + 1) * n]);
                // Each agent's block depends only on that agent's own
                // estimate vector, with the worst-row constant.
                assert!(df.dot(&df).sqrt() <= c.ell * du.dot(&du).sqrt() + 1e-9);
            }
        }
    }
}

#[test]
fn sampled_market_games_are_strongly_monotone_and_solvable() {
    for seed in 0..10 {
        let spec = sample_cournot(5, 3, 500 + seed, &CournotRanges::default()).unwrap();
        let game = build_cournot(&spec).unwrap();
        let c = game_constants(&game).unwrap();
        assert!(c.mu > 0.0);
        let sol = solve_ne_quadratic(&game, 1e-11).unwrap();
        assert!(sol.residual <= 1e-10);
        for gamma in [0.01, 0.1, 1.0] {
            assert!(verify_ne(&game, &sol.x_star, gamma).unwrap() <= 1e-8);
        }
    }
}
