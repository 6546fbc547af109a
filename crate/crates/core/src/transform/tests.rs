use super::*;
use crate::exhaustive::{enumerate_scenarios, eval_f_exhaustive, grad_hess_exhaustive, solve_exhaustive, ExhaustiveOptions};
use crate::kelly::single_bet_log_wealth;
use crate::math::{dot, softmax};
use crate::testutil::random_bets;
use crate::types::{Bet, Logits, Portfolio};

fn grid_for(p: &Portfolio, bets: &[Bet]) -> QuadratureGrid {
    build_grid(p.w0, super::eval::min_positive_c(p, bets), &GridOptions::default())
}

fn portfolio_with_cash(n: usize, w0: f64, seed: u64) -> Portfolio {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    Portfolio { w0, w: raw.iter().map(|x| x / s * (1.0 - w0)).collect() }
}

#[test]
fn laplace_transform_factorizes() {
    let bets = random_bets(9, 4);
    let table = enumerate_scenarios(&bets, 24).unwrap();
    let p = portfolio_with_cash(9, 0.3, 1);
    let c = p.c(&bets);
    let probs: Vec<f64> = bets.iter().map(|b| b.p).collect();
    for &t in &[1e-6, 0.01, 0.5, 3.0, 40.0] {
        let direct = table.laplace(&p, t);
        let fact = laplace_q(t, p.w0, &c, &probs);
        assert!((direct - fact).abs() <= 1e-13 * direct.max(1e-300), "t={t}: {direct} vs {fact}");
    }
}

#[test]
fn single_bet_matches_closed_form() {
    let bet = [Bet { p: 0.6, b: 1.0 }];
    for &f in &[0.01, 0.2, 0.5, 0.9, 0.999] {
        let p = Portfolio::from_bet_weights(vec![f]).unwrap();
        let itm = eval_f_itm(&p, &bet, &grid_for(&p, &bet)).unwrap();
        let exact = single_bet_log_wealth(f, 0.6, 1.0).unwrap();
        assert!((itm - exact).abs() < 1e-12, "f={f}: {itm} vs {exact}");
    }
}

#[test]
fn cash_only_is_zero() {
    let bets = random_bets(3, 0);
    let p = Portfolio::cash(3);
    assert!(eval_f_itm(&p, &bets, &grid_for(&p, &bets)).unwrap().abs() < 1e-13);
}

#[test]
fn matches_exhaustive_across_cash_levels() {
    for seed in 0..4 {
        let bets = random_bets(10, 50 + seed);
        let table = enumerate_scenarios(&bets, 24).unwrap();
        for &w0 in &[0.9, 0.5, 0.1, 1e-3, 1e-6] {
            let p = portfolio_with_cash(10, w0, seed);
            let exact = eval_f_exhaustive(&table, &p).unwrap();
            let itm = eval_f_itm(&p, &bets, &grid_for(&p, &bets)).unwrap();
            assert!((itm - exact).abs() < 1e-10, "seed {seed} w0 {w0}: {itm} vs {exact}");
        }
    }
}

#[test]
fn gradient_and_hessian_match_exhaustive() {
    let bets = random_bets(8, 7);
    let table = enumerate_scenarios(&bets, 24).unwrap();
    for &w0 in &[0.6, 0.05, 1e-4] {
        let p = portfolio_with_cash(8, w0, 3);
        let (g, h) = grad_hess_exhaustive(&table, &p).unwrap();
        let state = TransformState::new(&p, &bets, &grid_for(&p, &bets)).unwrap();
        let gi = state.gradient();
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..8 {
            assert!((gi[i] - g[i]).abs() <= 1e-10 * scale.max(1.0), "w0 {w0} g{i}: {} vs {}", gi[i], g[i]);
        }
        let v = [0.3, -0.1, 0.7, 0.2, -0.5, 0.05, 0.4, -0.25];
        let hv = state.hvp(&v);
        let hs = h.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..8 {
            let r = dot(&h[i], &v);
            assert!((hv[i] - r).abs() <= 1e-10 * hs.max(1.0), "w0 {w0} hv{i}: {} vs {r}", hv[i]);
        }
    }
}

#[test]
fn logit_derivatives_match_finite_differences() {
    let bets = random_bets(12, 21);
    let theta = vec![0.4, -0.3, 0.1, 0.2, -1.0, 0.5, 0.0, -0.2, 0.3, -0.6, 0.8, 0.1, -0.4];
    let logits = Logits { theta: theta.clone() };
    let p = logits.portfolio();
    let grid = grid_for(&p, &bets);
    let g = grad_theta(&logits, &bets, &grid).unwrap();
    assert!(g.iter().sum::<f64>().abs() < 1e-14, "gauge");
    let f_at = |th: &[f64]| {
        let pt = Portfolio::from_simplex(&softmax(th));
        eval_f_itm(&pt, &bets, &grid).unwrap()
    };
    let g_at = |th: &[f64]| grad_theta(&Logits { theta: th.to_vec() }, &bets, &grid).unwrap();
    let eps = 1e-5;
    let v: Vec<f64> = (0..13).map(|k| ((k * 7 % 5) as f64 - 2.0) / 3.0).collect();
    let hv = hvp_theta(&logits, &v, &bets, &grid).unwrap();
    for k in 0..13 {
        let mut a = theta.clone();
        let mut b = theta.clone();
        a[k] += eps;
        b[k] -= eps;
        let fd = (f_at(&a) - f_at(&b)) / (2.0 * eps);
        assert!((fd - g[k]).abs() < 1e-8, "grad {k}: {fd} vs {}", g[k]);
    }
    let plus: Vec<f64> = theta.iter().zip(&v).map(|(t, d)| t + eps * d).collect();
    let minus: Vec<f64> = theta.iter().zip(&v).map(|(t, d)| t - eps * d).collect();
    let (gp, gm) = (g_at(&plus), g_at(&minus));
    for k in 0..13 {
        let fd = (gp[k] - gm[k]) / (2.0 * eps);
        assert!((fd - hv[k]).abs() < 1e-7, "hvp {k}: {fd} vs {}", hv[k]);
    }
    let ones = vec![1.0; 13];
    let h1 = hvp_theta(&logits, &ones, &bets, &grid).unwrap();
    assert!(h1.iter().all(|x| x.abs() < 1e-13), "gauge direction is null");
}

#[test]
fn remainder_gradient_adds_tail() {
    let bets = random_bets(5, 2);
    let p = portfolio_with_cash(5, 0.01, 9);
    let grid = grid_for(&p, &bets);
    let state = TransformState::new(&p, &bets, &grid).unwrap();
    let q0 = all_loss_probability(&bets);
    let rem = grad_rem(&p, &bets, &grid).unwrap();
    for (a, b) in rem.iter().zip(state.gradient()) {
        assert!((a - q0 / p.w0 - b).abs() < 1e-9);
    }
}

#[test]
fn refinement_estimate_is_tiny_on_default_grid() {
    let bets = random_bets(30, 5);
    let p = portfolio_with_cash(30, 0.2, 4);
    let (f, diag) = eval_f_itm_adaptive(&p, &bets, &TransformOptions::default()).unwrap();
    assert!(f.is_finite());
    assert!(diag.est_error < 1e-12);
    assert_eq!(diag.refinements, 0);
}

#[test]
fn solve_agrees_with_exhaustive() {
    for seed in 0..3 {
        let bets = random_bets(10, 300 + seed);
        let ex = solve_exhaustive(&bets, &ExhaustiveOptions::default()).unwrap();
        let itm = solve_itm(&bets, &TransformOptions::default()).unwrap();
        let r = &itm.result;
        assert!(r.converged && r.grad_norm < 1e-9);
        assert!((r.f_star - ex.f_star).abs() < 1e-10, "{} vs {}", r.f_star, ex.f_star);
        for i in 0..10 {
            assert!((r.portfolio.w[i] - ex.portfolio.w[i]).abs() < 1e-6);
        }
    }
}

#[test]
fn warm_start_reaches_same_optimum() {
    let bets = random_bets(15, 77);
    let cold = solve_itm(&bets, &TransformOptions::default()).unwrap().result;
    let start = portfolio_with_cash(15, 0.5, 1);
    let warm = solve_itm_from(&bets, &TransformOptions::default(), Some(&start)).unwrap().result;
    assert!((cold.f_star - warm.f_star).abs() < 1e-11);
}

#[test]
fn no_edge_is_rejected() {
    let bets = [Bet { p: 0.5, b: 1.0 }];
    assert!(solve_itm(&bets, &TransformOptions::default()).is_err());
}

#[test]
fn log_a_limits() {
    let bets = random_bets(8, 13);
    let p = portfolio_with_cash(8, 0.25, 2);
    let c = p.c(&bets);
    let probs: Vec<f64> = bets.iter().map(|b| b.p).collect();
    assert_eq!(log_a(0.0, &c, &probs), 0.0);
    let q0 = all_loss_probability(&bets);
    assert!((log_a(1e12, &c, &probs) - q0.ln()).abs() < 1e-12);

    let table = enumerate_scenarios(&bets, 24).unwrap();
    let t = 3.7;
    let brute: f64 = table
        .prob()
        .iter()
        .zip(table.wealth(&p))
        .map(|(pk, x)| pk * (-t * (x - p.w0)).exp())
        .sum();
    assert!((log_a(t, &c, &probs) - brute.ln()).abs() < 1e-12);

    let mut prev = 0.0;
    for k in 0..60 {
        let la = log_a(0.01 * 1.5f64.powi(k), &c, &probs);
        assert!(la <= prev && la >= q0.ln() - 1e-15);
        prev = la;
    }
}

#[test]
fn laplace_transform_edge_cases() {
    let bets = random_bets(10, 3);
    let p = portfolio_with_cash(10, 0.4, 5);
    let c = p.c(&bets);
    let probs: Vec<f64> = bets.iter().map(|b| b.p).collect();
    assert_eq!(laplace_q(0.0, p.w0, &c, &probs), 1.0);
    for t in [0.1, 1.0, 10.0, 100.0] {
        assert!((laplace_q(t, 1.0, &[], &[]) - (-t).exp()).abs() < 1e-16);
    }
    let table = enumerate_scenarios(&bets, 24).unwrap();
    for t in [0.1, 1.0, 10.0, 100.0] {
        let direct = table.laplace(&p, t);
        assert!((laplace_q(t, p.w0, &c, &probs) / direct - 1.0).abs() < 1e-13);
    }
}

#[test]
fn single_bet_gradient_is_closed_form() {
    let bet = [Bet { p: 0.6, b: 1.0 }];
    for &w in &[0.05, 0.2, 0.6, 0.95] {
        let p = Portfolio::from_bet_weights(vec![w]).unwrap();
        let state = TransformState::new(&p, &bet, &grid_for(&p, &bet)).unwrap();
        let exact = 0.6 * 1.0 / (1.0 + w) - 0.4 / (1.0 - w);
        assert!((state.gradient()[0] - exact).abs() < 1e-9, "w={w}");
    }
}

#[test]
fn gradient_matches_exhaustive_relative() {
    let bets = random_bets(10, 88);
    let table = enumerate_scenarios(&bets, 24).unwrap();
    let p = portfolio_with_cash(10, 0.3, 8);
    let (g, _) = grad_hess_exhaustive(&table, &p).unwrap();
    let gi = TransformState::new(&p, &bets, &grid_for(&p, &bets)).unwrap().gradient();
    for i in 0..10 {
        assert!((gi[i] - g[i]).abs() <= 1e-8 * g[i].abs(), "{i}: {} vs {}", gi[i], g[i]);
    }
}

#[test]
fn marginal_ratios_are_nonnegative() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(404);
    for k in 0..100 {
        let n = rng.random_range(1..25);
        let bets = random_bets(n, 1000 + k);
        let w0 = 10f64.powf(rng.random_range(-8.0..-0.05));
        let p = portfolio_with_cash(n, w0, k);
        let state = TransformState::new(&p, &bets, &grid_for(&p, &bets)).unwrap();
        assert!(state.u.iter().all(|&u| u >= 0.0));
    }
}

#[test]
fn symmetric_pair_has_equal_gradient() {
    let bets = [Bet { p: 0.55, b: 1.0 }, Bet { p: 0.55, b: 1.0 }];
    let logits = Logits::uniform(2);
    let grid = grid_for(&logits.portfolio(), &bets);
    let g = grad_theta(&logits, &bets, &grid).unwrap();
    assert!((g[1] - g[2]).abs() < 1e-12);
    assert!(g.iter().sum::<f64>().abs() < 1e-10);
}

#[test]
fn concave_in_weights_everywhere() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for k in 0..20 {
        let bets = random_bets(10, 600 + k);
        let logits = Logits { theta: (0..11).map(|_| rng.random_range(-2.0..2.0)).collect() };
        let p = logits.portfolio();
        let state = TransformState::new(&p, &bets, &grid_for(&p, &bets)).unwrap();
        for _ in 0..5 {
            let v: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(dot(&v, &state.hvp(&v)) <= 1e-10);
        }
        let hv = hvp_theta(&logits, &[1.0; 11], &bets, &grid_for(&p, &bets)).unwrap();
        assert!(hv.iter().all(|x| x.abs() < 1e-9));
    }
}

#[test]
fn concave_in_logits_at_the_optimum() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    for k in 0..10 {
        let bets = random_bets(10, 700 + k);
        let r = solve_itm(&bets, &TransformOptions::default()).unwrap();
        let logits = Logits::from_portfolio(&r.result.portfolio).unwrap();
        let grid = grid_for(&r.result.portfolio, &bets);
        for _ in 0..20 {
            let mut v: Vec<f64> = (0..11).map(|_| rng.random_range(-1.0..1.0)).collect();
            crate::math::center(&mut v);
            let hv = hvp_theta(&logits, &v, &bets, &grid).unwrap();
            assert!(dot(&v, &hv) <= 1e-10);
        }
    }
}

#[test]
fn logit_curvature_matches_second_difference() {
    let bets = random_bets(10, 600);
    let logits = Logits::uniform(10);
    let grid = grid_for(&logits.portfolio(), &bets);
    let v: Vec<f64> = (0..11).map(|k| if k == 0 { 1.0 } else { -0.1 }).collect();
    let curv = dot(&v, &hvp_theta(&logits, &v, &bets, &grid).unwrap());
    let f_at = |s: f64| {
        let th: Vec<f64> = v.iter().map(|d| s * d).collect();
        eval_f_itm(&Portfolio::from_simplex(&softmax(&th)), &bets, &grid).unwrap()
    };
    let h = 1e-3;
    let fd = (f_at(h) - 2.0 * f_at(0.0) + f_at(-h)) / (h * h);
    assert!((fd - curv).abs() < 1e-5 * (1.0 + curv.abs()));
}

#[test]
fn two_hundred_bets_beat_half_greedy() {
    use crate::bounds::{greedy_lower, BoundsOptions};
    let bets = random_bets(200, 2024);
    let r = solve_itm(&bets, &TransformOptions::default()).unwrap().result;
    assert!(r.converged);
    assert!(r.leverage() < 1.0);
    let half = greedy_lower(&bets, 100, &BoundsOptions::default()).unwrap();
    assert!(r.f_star >= half.f_lower);
}
