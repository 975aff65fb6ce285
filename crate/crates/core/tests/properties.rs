use bilevel_contracts::autodiff::{grad_a, hvp_aa, value, SampleFn, Scalar};
use bilevel_contracts::cg::{conjugate_gradient, damped, DenseOperator};
use bilevel_contracts::environments::closed_form;
use bilevel_contracts::metrics::relative_distance;
use bilevel_contracts::oracle::{grid_evaluations, grid_search, GridSpec};
use bilevel_contracts::problem::{Agent, Principal};
use bilevel_contracts::qmc::{held_out_batch, make_payload, transform, Draws, NoiseFamily, NoiseKind};
use bilevel_contracts::solver::random_init;
use bilevel_contracts::{Bilevel, EnvId, EnvSpec, Environment, Evaluator, SolverConfig};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Laplace, Normal};

fn linear_envs() -> Vec<Environment> {
    EnvId::ALL.into_iter().filter(|id| id.is_linear()).map(|id| EnvSpec::new(id).build().unwrap()).collect()
}

fn spd(n: usize, entries: &[f64]) -> Vec<f64> {
    // B B^T / n + I, row-major
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let s: f64 = (0..n).map(|k| entries[i * n + k] * entries[j * n + k]).sum();
            a[i * n + j] = s / n as f64 + if i == j { 1.0 } else { 0.0 };
        }
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantiles_invert_the_cdf(u in 1e-9f64..1.0 - 1e-9) {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let laplace = Laplace::new(0.0, 1.0).unwrap();
        let z = transform(u, NoiseKind::standard(NoiseFamily::Normal)).unwrap();
        prop_assert!((normal.cdf(z) - u).abs() <= 1e-8);
        let l = transform(u, NoiseKind::standard(NoiseFamily::Laplace)).unwrap();
        prop_assert!((laplace.cdf(l) - u).abs() <= 1e-7);
        let g = transform(u, NoiseKind::standard(NoiseFamily::Logistic)).unwrap();
        prop_assert!((1.0 / (1.0 + (-g).exp()) - u).abs() <= 1e-7);
    }

    #[test]
    fn cg_terminates_within_n_iterations(n in 1usize..=8, entries in prop::collection::vec(-1.0f64..1.0, 64), rhs in prop::collection::vec(-1.0f64..1.0, 8)) {
        let op = DenseOperator::new(n, spd(n, &entries)).unwrap();
        let report = conjugate_gradient(&op, &rhs[..n], n, 1e-12).unwrap();
        prop_assert!(report.iterations <= n);
        prop_assert!(report.final_residual_norm <= 1e-10, "residual {}", report.final_residual_norm);
    }

    #[test]
    fn metric_homogeneity(a_star in prop::collection::vec(-5.0f64..5.0, 3), d in prop::collection::vec(-1.0f64..1.0, 3), k in 0.0f64..100.0) {
        let at = |s: f64| a_star.iter().zip(&d).map(|(x, y)| x + s * y).collect::<Vec<_>>();
        let base = relative_distance(&at(1.0), &a_star);
        let scaled = relative_distance(&at(k), &a_star);
        prop_assert!((scaled - k * base).abs() <= 1e-12 * (1.0 + k * base));
    }

    #[test]
    fn hvp_is_symmetric_on_multitask(a in prop::collection::vec(-2.0f64..2.0, 3), t in prop::collection::vec(-2.0f64..2.0, 3), u in prop::collection::vec(-1.0f64..1.0, 3), w in prop::collection::vec(-1.0f64..1.0, 3)) {
        let env = EnvSpec::new(EnvId::Multitask).sampled(true).build().unwrap();
        let draws = env.draws(&make_payload(0, 3, 32, true).unwrap()).unwrap();
        let agent = Agent(&env);
        let hu = hvp_aa(&agent, &a, &t, &draws, &u).unwrap();
        let hw = hvp_aa(&agent, &a, &t, &draws, &w).unwrap();
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        prop_assert!((dot(&w, &hu) - dot(&u, &hw)).abs() <= 1e-10);
    }

    #[test]
    fn outer_loop_stays_in_the_box(seed in 0u64..1000) {
        let env = EnvSpec::new(EnvId::Poisson).build().unwrap();
        let cfg = SolverConfig { t_out: 30, batch_n: 32, eval_size: 64, log_every: 10, eta_out: 0.5, ..SolverConfig::desk_nonlinear() };
        let ev = Evaluator::from_config(&env, &cfg, None).unwrap();
        let (a0, t0) = random_init(&env, seed).unwrap();
        let out = bilevel_contracts::outer_loop(&env, t0, a0, &cfg, &ev, &mut |_| Ok(())).unwrap();
        prop_assert_eq!(out.infeasible_steps, 0);
        prop_assert!(out.t.is_feasible() && out.a.is_feasible());
    }
}

/// `exp(a0 a1 t0) - a0^2 + t0 tanh(a1 z)`: two actions with a full Hessian.
struct Coupled;

impl SampleFn for Coupled {
    fn eval<S: Scalar>(&self, a: &[S], t: &[S], z: &[f64]) -> S {
        (a[0] * a[1] * t[0]).exp() - a[0].square() + (a[1] * z[0]).tanh() * t[0]
    }
}

#[test]
fn stacked_hvp_matches_finite_difference_hessian() {
    let draws = Draws::from_matrix(bilevel_contracts::qmc::SampleMatrix::new(3, 1, vec![-0.5, 0.2, 1.1]).unwrap());
    let (a, t) = ([0.4, -0.7], [0.9]);
    let h = 1e-5;
    for i in 0..2 {
        let mut e = [0.0; 2];
        e[i] = 1.0;
        let column = hvp_aa(&Coupled, &a, &t, &draws, &e).unwrap();
        let shift = |s: f64| [a[0] + s * e[0], a[1] + s * e[1]];
        let up = grad_a(&Coupled, &shift(h), &t, &draws).unwrap();
        let down = grad_a(&Coupled, &shift(-h), &t, &draws).unwrap();
        for j in 0..2 {
            let fd = (up[j] - down[j]) / (2.0 * h);
            assert!((column[j] - fd).abs() <= 1e-4 * fd.abs().max(1.0), "H[{j}][{i}] {} vs {fd}", column[j]);
        }
    }
}

#[test]
fn damping_bias_vanishes() {
    let n = 4;
    let entries: Vec<f64> = (0..n * n).map(|k| ((k * 7 % 11) as f64 - 5.0) / 5.0).collect();
    let a = spd(n, &entries);
    let neg: Vec<f64> = a.iter().map(|x| -x).collect();
    let b = [1.0, -0.5, 0.25, 2.0];
    let solve = |lambda: f64| {
        let op = damped(DenseOperator::new(n, neg.clone()).unwrap(), lambda);
        conjugate_gradient(&op, &b, 50, 1e-14).unwrap().solution
    };
    let v0 = solve(0.0);
    let mut prev = f64::INFINITY;
    for lambda in [1e-2, 1e-4, 1e-6] {
        let gap = relative_distance(&solve(lambda), &v0);
        // ‖A^{-1}‖ ≤ 1 since A ⪰ I
        assert!(gap <= lambda * 1.01, "lambda {lambda}: {gap}");
        assert!(gap < prev);
        prev = gap;
    }
}

#[test]
fn closed_forms_are_stationary_for_the_agent() {
    for env in linear_envs() {
        let g = closed_form(&env).unwrap();
        let grad = grad_a(&Agent(&env), &g.a_star, &g.t_star, &Draws::analytic()).unwrap();
        assert!(grad.iter().all(|x| x.abs() <= 1e-12), "{}: {grad:?}", env.id());
    }
}

fn u1_at(env: &Environment, t: &[f64]) -> f64 {
    let a = env.best_response_hint(t).unwrap();
    value(&Principal(env), &a, t, &Draws::analytic()).unwrap()
}

#[test]
fn perturbing_optimal_slopes_lowers_u1() {
    for env in linear_envs() {
        let g = closed_form(&env).unwrap();
        let best = u1_at(&env, &g.t_star);
        for i in 0..g.t_star.len() {
            for s in [-1e-2, 1e-2] {
                let mut t = g.t_star.clone();
                t[i] += s;
                assert!(u1_at(&env, &t) < best, "{} coordinate {i} shift {s}", env.id());
            }
        }
    }
}

/// Maximizes `f` over a box by repeatedly refining a 21-point grid per axis
/// around the incumbent.
fn zoom_search(f: impl Fn(&[f64]) -> f64, mut lo: Vec<f64>, mut hi: Vec<f64>) -> Vec<f64> {
    const N: usize = 21;
    let dim = lo.len();
    let mut best = lo.clone();
    for _ in 0..40 {
        let mut best_val = f64::NEG_INFINITY;
        for idx in 0..N.pow(dim as u32) {
            let mut rest = idx;
            let x: Vec<f64> = (0..dim)
                .map(|d| {
                    let k = rest % N;
                    rest /= N;
                    lo[d] + (hi[d] - lo[d]) * k as f64 / (N - 1) as f64
                })
                .collect();
            let v = f(&x);
            if v > best_val {
                best_val = v;
                best = x;
            }
        }
        for d in 0..dim {
            let w = (hi[d] - lo[d]) / 4.0;
            lo[d] = best[d] - w;
            hi[d] = best[d] + w;
        }
    }
    best
}

#[test]
fn derived_utilities_reproduce_closed_forms_by_search() {
    for id in [EnvId::TwoSignals, EnvId::Relative] {
        let env = EnvSpec::new(id).build().unwrap();
        let g = closed_form(&env).unwrap();
        let draws = Draws::analytic();
        // inner problem by search, at the closed-form contract
        let a = zoom_search(|a| value(&Agent(&env), a, &g.t_star, &draws).unwrap(), vec![-5.0], vec![5.0]);
        assert!(relative_distance(&a, &g.a_star) <= 1e-4, "{id}: a {a:?} vs {:?}", g.a_star);
        // outer problem by search, inner problem by search as well
        let u1 = |t: &[f64]| {
            let a = zoom_search(|a| value(&Agent(&env), a, t, &draws).unwrap(), vec![-5.0], vec![5.0]);
            value(&Principal(&env), &a, t, &draws).unwrap()
        };
        let t = zoom_search(u1, vec![-2.0, -2.0], vec![2.0, 2.0]);
        assert!(relative_distance(&t, &g.t_star) <= 1e-4, "{id}: t {t:?} vs {:?}", g.t_star);
    }
}

#[test]
fn sampled_hm_matches_analytic_on_the_held_out_batch() {
    let analytic = EnvSpec::new(EnvId::Hm).build().unwrap();
    let sampled = EnvSpec::new(EnvId::Hm).sampled(true).build().unwrap();
    let draws = sampled.draws(&held_out_batch(1, 1, 8192).unwrap()).unwrap();
    let points = [(-1.0, 0.2), (0.0, 0.5), (0.3, 1.0), (0.8, -0.4), (1.5, 1.5), (2.0, 0.1), (-0.5, -1.0), (0.99, 0.99), (0.1, 2.0), (1.2, 0.7)];
    for (a, b) in points {
        for (fa, fs) in [
            (value(&Principal(&analytic), &[a], &[b], &Draws::analytic()).unwrap(), value(&Principal(&sampled), &[a], &[b], &draws).unwrap()),
            (value(&Agent(&analytic), &[a], &[b], &Draws::analytic()).unwrap(), value(&Agent(&sampled), &[a], &[b], &draws).unwrap()),
        ] {
            assert!((fa - fs).abs() <= 3e-3, "a={a} b={b}: {fa} vs {fs}");
        }
    }
}

#[test]
fn antithetic_payload_makes_linear_principal_exact() {
    let analytic = EnvSpec::new(EnvId::Hm).build().unwrap();
    let sampled = EnvSpec::new(EnvId::Hm).sampled(true).build().unwrap();
    let draws = sampled.draws(&make_payload(4, 1, 1024, true).unwrap()).unwrap();
    for (a, b) in [(0.5, 0.9), (-1.0, 2.0), (3.0, -0.3)] {
        let exact = value(&Principal(&analytic), &[a], &[b], &Draws::analytic()).unwrap();
        let sample = value(&Principal(&sampled), &[a], &[b], &draws).unwrap();
        assert!((exact - sample).abs() <= 1e-12, "{exact} vs {sample}");
    }
}

fn small_logistic_grid(env: &Environment) -> GridSpec {
    GridSpec { contract_resolution: 10, action_resolution: 40, eval_batch_size: 256, ..GridSpec::for_env(env).unwrap() }
}

#[test]
fn grid_optimum_dominates_every_grid_point() {
    let env = EnvSpec::new(EnvId::Logistic).build().unwrap();
    let grid = small_logistic_grid(&env);
    let truth = grid_search(&env, &grid, 2).unwrap();
    let points = grid_evaluations(&env, &grid, 2).unwrap();
    assert_eq!(points.len(), 100);
    assert!(points.iter().all(|p| truth.u1_star >= p.u1));
}

#[test]
fn repeated_grid_search_is_bitwise_identical() {
    let env = EnvSpec::new(EnvId::SqrtLogistic).build().unwrap();
    let grid = small_logistic_grid(&env);
    let a = grid_search(&env, &grid, 7).unwrap();
    let b = grid_search(&env, &grid, 7).unwrap();
    assert_eq!(a.u1_star.to_bits(), b.u1_star.to_bits());
    assert_eq!(a, b);
}

#[test]
fn linear_slope_grids_agree_with_closed_forms() {
    for id in [EnvId::Hm, EnvId::Insurance, EnvId::Imperfect] {
        let env = EnvSpec::new(id).build().unwrap();
        let g = closed_form(&env).unwrap();
        let grid = GridSpec::slope_line((0.0, 2.0), 201, (-1.0, 2.0), 3001);
        let found = grid_search(&env, &grid, 2).unwrap();
        assert!((found.t_star[0] - g.t_star[0]).abs() <= 0.01, "{id}: {:?} vs {:?}", found.t_star, g.t_star);
    }
}

#[test]
fn hm_desk_run_improves_held_out_u1() {
    let env = EnvSpec::new(EnvId::Hm).build().unwrap();
    let cfg = SolverConfig::desk_linear();
    let ev = Evaluator::from_config(&env, &cfg, None).unwrap();
    let (a0, t0) = random_init(&env, 0).unwrap();
    let start = ev.u1(&a0.values, &t0.values).unwrap();
    let out = bilevel_contracts::outer_loop(&env, t0, a0, &cfg, &ev, &mut |_| Ok(())).unwrap();
    assert!(out.summary.u1 > start, "{} vs {start}", out.summary.u1);
}

#[test]
fn full_runs_are_bitwise_reproducible() {
    let env = EnvSpec::new(EnvId::Relative).sampled(true).build().unwrap();
    let cfg = SolverConfig { t_out: 200, batch_n: 64, eval_size: 128, log_every: 20, ..SolverConfig::desk_linear() };
    let run = || {
        let ev = Evaluator::from_config(&env, &cfg, Some(closed_form(&env).unwrap())).unwrap();
        let (a0, t0) = random_init(&env, 5).unwrap();
        bilevel_contracts::outer_loop(&env, t0, a0, &cfg, &ev, &mut |_| Ok(())).unwrap()
    };
    assert_eq!(run(), run());
}
