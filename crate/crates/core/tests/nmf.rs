use latentfire::nmf::{mu_step_frobenius, mu_step_kl, nmf_solve, Loss, NmfConfig, NmfModel};
use latentfire::seed;
use latentfire::tensor::{kl_divergence, relative_error, squared_distance, DenseMatrix};
use proptest::prelude::*;
use rand::Rng;

fn planted(m: usize, n: usize, k: usize, seed_value: u64) -> DenseMatrix {
    let mut rng = seed::rng(seed_value);
    let w = DenseMatrix::from_fn(m, k, |_, _| rng.gen_range(0.5..1.5));
    let h = DenseMatrix::from_fn(k, n, |_, _| rng.gen_range(0.5..1.5));
    w.matmul(&h).unwrap()
}

#[test]
fn rank_one_kl_steps_never_increase_objective() {
    let x = DenseMatrix::from_rows(&[vec![3.0, 4.0], vec![6.0, 8.0]]).unwrap();
    let mut model = NmfModel::from_factors(DenseMatrix::filled(2, 1, 0.7), DenseMatrix::filled(1, 2, 1.3)).unwrap();
    let mut prev = kl_divergence(&x, &model.reconstruct()).unwrap();
    for _ in 0..50 {
        model = mu_step_kl(&x, &model).unwrap();
        let obj = kl_divergence(&x, &model.reconstruct()).unwrap();
        assert!(obj <= prev + 1e-12);
        prev = obj;
    }
}

#[test]
fn frobenius_steps_decrease_on_random_problem() {
    let mut rng = seed::rng(11);
    let x = DenseMatrix::from_fn(10, 8, |_, _| rng.gen::<f64>());
    let mut model = NmfModel::from_factors(
        DenseMatrix::from_fn(10, 3, |_, _| rng.gen::<f64>() + 0.1),
        DenseMatrix::from_fn(3, 8, |_, _| rng.gen::<f64>() + 0.1),
    )
    .unwrap();
    let mut prev = squared_distance(&x, &model.reconstruct()).unwrap();
    for _ in 0..50 {
        model = mu_step_frobenius(&x, &model).unwrap();
        assert!(model.w.is_non_negative() && model.h.is_non_negative());
        let obj = squared_distance(&x, &model.reconstruct()).unwrap();
        assert!(obj <= prev + 1e-9);
        prev = obj;
    }
}

fn planted_sparse(m: usize, n: usize, k: usize, seed_value: u64) -> DenseMatrix {
    let mut rng = seed::rng(seed_value);
    let mut draw = |r, c| DenseMatrix::from_fn(r, c, |_, _| if rng.gen::<f64>() < 0.4 { 0.0 } else { rng.gen_range(0.5..1.5) });
    let w = draw(m, k);
    let h = draw(k, n);
    w.matmul(&h).unwrap()
}

#[test]
fn exact_planted_factorizations_are_reached() {
    let mut reached = 0;
    for s in 0..100 {
        let x = planted_sparse(12, 10, 2, s);
        if x.mean() == 0.0 {
            continue;
        }
        let model = nmf_solve(&x, &NmfConfig::new(2).with_seed(s).with_tol(1e-12)).unwrap();
        if relative_error(&x, &model.reconstruct()).unwrap() < 1e-4 {
            reached += 1;
        }
    }
    assert!(reached >= 95, "{reached}/100");
}

#[test]
fn zero_matrix_is_rejected() {
    assert!(nmf_solve(&DenseMatrix::zeros(3, 3), &NmfConfig::new(1)).is_err());
}

#[test]
fn restarts_keep_the_lowest_objective() {
    let x = planted(20, 15, 3, 5);
    let single = nmf_solve(&x, &NmfConfig::new(3).with_seed(9).with_max_iters(50)).unwrap();
    let multi = nmf_solve(&x, &NmfConfig::new(3).with_seed(9).with_max_iters(50).with_restarts(4)).unwrap();
    assert!(multi.final_objective() <= single.final_objective());
    let again = nmf_solve(&x, &NmfConfig::new(3).with_seed(9).with_max_iters(50).with_restarts(4)).unwrap();
    assert_eq!(multi, again);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn traces_are_monotone_and_factors_non_negative(
        data in prop::collection::vec(0.0f64..4.0, 48),
        k in 1usize..4,
        frob in any::<bool>(),
        seed_value in any::<u64>(),
    ) {
        let x = DenseMatrix::new(6, 8, data).unwrap();
        prop_assume!(x.mean() > 0.0);
        let loss = if frob { Loss::Frobenius } else { Loss::Kl };
        let cfg = NmfConfig::new(k).with_loss(loss).with_seed(seed_value).with_max_iters(60);
        let model = nmf_solve(&x, &cfg).unwrap();
        prop_assert!(model.w.is_non_negative() && model.h.is_non_negative());
        for pair in model.objective_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-9);
        }
    }
}
