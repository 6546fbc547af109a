//! Large instances whose optimum leaves cash and many bets at weights far
//! below 1e-10. Solvers that stop on a small logit gradient fall short here.

use kelly_core::bounds::{bounds_profile, n_grid, upper_bound, upper_bound_sequence, BoundsOptions};
use kelly_core::datagen::gen_instance;
use kelly_core::transform::{build_grid, eval_f_itm, solve_itm, GridOptions, TransformOptions};
use kelly_core::{Bet, Regime, VarianceLevel};

fn instance(regime: Regime, level: VarianceLevel, index: u64) -> Vec<Bet> {
    gen_instance(regime, level, 100, 11, index, Some(230.0)).unwrap().bets
}

#[test]
fn default_solve_matches_a_much_tighter_one() {
    let bets = instance(Regime::Laplace, VarianceLevel::High, 326);
    let loose = solve_itm(&bets, &TransformOptions::default()).unwrap().result;
    let mut tight_opts = TransformOptions::default();
    tight_opts.newton.decrement_tol = 1e-16;
    tight_opts.newton.lambda_min = 1e-18;
    tight_opts.newton.max_iter = 1000;
    let tight = solve_itm(&bets, &tight_opts).unwrap().result;
    assert!(loose.converged && tight.converged);
    assert!(loose.portfolio.w0 < 1e-12);

    // Compare both portfolios on one fine grid so quadrature drops out.
    let fine = GridOptions { h: 0.0025, u_min: -5.0, u_ceiling: 7.0, ..Default::default() };
    let grid = build_grid(0.1 * loose.portfolio.w0.min(tight.portfolio.w0), 0.0, &fine);
    let fl = eval_f_itm(&loose.portfolio, &bets, &grid).unwrap();
    let ft = eval_f_itm(&tight.portfolio, &bets, &grid).unwrap();
    assert!(ft - fl < 3e-13, "short by {:e}", ft - fl);
}

#[test]
fn warm_upper_bounds_match_cold_ones() {
    let bets = instance(Regime::Laplace, VarianceLevel::High, 326);
    let sizes: Vec<usize> = (10..=19).map(|k| 5 * k).collect();
    let warm = upper_bound_sequence(&bets, &sizes, &BoundsOptions::default()).unwrap();
    for (&n, w) in sizes.iter().zip(&warm) {
        let cold = upper_bound(&bets, n, &BoundsOptions::default()).unwrap();
        assert!((w - cold).abs() < 3e-13, "n={n}: warm {w} cold {cold}");
    }
}

#[test]
fn profiles_sandwich_the_optimum() {
    let cases = [
        (Regime::Laplace, VarianceLevel::Low, 338),
        (Regime::Normal, VarianceLevel::Medium, 389),
        (Regime::Laplace, VarianceLevel::High, 398),
    ];
    for (regime, level, index) in cases {
        let bets = instance(regime, level, index);
        let full = solve_itm(&bets, &TransformOptions::default()).unwrap().result.f_star;
        let prof = bounds_profile(&bets, &n_grid(100, 20), &BoundsOptions::default()).unwrap();
        for e in &prof.entries {
            assert!(e.f_lower <= full + 1e-12, "{index} n={}: lower {} full {full}", e.n, e.f_lower);
            assert!(e.f_upper >= full - 1e-12, "{index} n={}: upper {} full {full}", e.n, e.f_upper);
        }
    }
}
