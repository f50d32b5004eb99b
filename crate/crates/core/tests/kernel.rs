use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rough_contact::dataset::Normalization;
use rough_contact::kernel::{
    gram, grid_search, kfold_indices, self_gram, GaussianProcess, KernelRidge, KernelSpec, KrrTrainer, ModelKind,
    ParamValue, Surrogate, TuningGrid,
};

fn matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut s = seed;
    DMatrix::from_fn(rows, cols, |_, _| {
        s = rough_contact::rng::splitmix64(s);
        (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    })
}

fn vector(n: usize, seed: u64) -> DVector<f64> {
    matrix(n, 1, seed).column(0).into_owned()
}

fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![Just(KernelSpec::Linear), (0.01f64..10.0).prop_map(|gamma| KernelSpec::Rbf { gamma })]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gp_mean_equals_kernel_ridge(
        n in 2usize..60, d in 1usize..24, seed in any::<u64>(), lambda in 1e-3f64..10.0, kernel in kernel_strategy()
    ) {
        let x = matrix(n, d, seed);
        let y = vector(n, seed ^ 1);
        let xq = matrix(7, d, seed ^ 2);
        let krr = KernelRidge::fit(&x, &y, lambda, kernel).unwrap().predict(&xq).unwrap();
        let gp = GaussianProcess::fit(&x, &y, lambda, kernel).unwrap().predict_mean(&xq).unwrap();
        for (a, b) in krr.iter().zip(gp.iter()) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn predictions_are_linear_in_targets(n in 2usize..50, seed in any::<u64>(), lambda in 1e-2f64..5.0, kernel in kernel_strategy()) {
        let x = matrix(n, 5, seed);
        let (y1, y2) = (vector(n, seed ^ 3), vector(n, seed ^ 4));
        let xq = matrix(5, 5, seed ^ 5);
        let fit = |y: &DVector<f64>| KernelRidge::fit(&x, y, lambda, kernel).unwrap().predict(&xq).unwrap();
        let sum = fit(&(&y1 + &y2));
        let parts = fit(&y1) + fit(&y2);
        for (a, b) in sum.iter().zip(parts.iter()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn gram_is_symmetric_bounded_and_psd(n in 1usize..200, seed in any::<u64>(), gamma in 0.01f64..20.0) {
        let x = matrix(n, 4, seed);
        let k = self_gram(&x, KernelSpec::Rbf { gamma }).unwrap();
        prop_assert_eq!(&k, &k.transpose());
        prop_assert!(k.iter().all(|&v| v > 0.0 && v <= 1.0));
        let trace = k.trace();
        prop_assert!(SymmetricEigen::new(k).eigenvalues.min() >= -1e-9 * trace);
        let lin = self_gram(&x, KernelSpec::Linear).unwrap();
        let lt = lin.trace();
        prop_assert!(SymmetricEigen::new(lin).eigenvalues.min() >= -1e-9 * lt.max(1.0));
    }

    #[test]
    fn folds_partition_the_indices(n in 2usize..300, k in 2usize..11, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold_indices(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = vec![0u8; n];
        for f in &folds {
            for &i in f {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

#[test]
fn grid_search_is_deterministic() {
    let x = matrix(60, 3, 8);
    let y = DVector::from_iterator(60, x.row_iter().map(|r| (2.0 * r[0]).sin() + r[1] * r[1] + 2.0));
    let grid =
        TuningGrid::parse("param.lambda = log:1e-4:1:4\nparam.gamma = 0.5,2\nparam.kernel = rbf,linear\nfolds = 4\n")
            .unwrap();
    let a = grid_search(&x, &y, &grid, &KrrTrainer, 11).unwrap();
    let b = grid_search(&x, &y, &grid, &KrrTrainer, 11).unwrap();
    assert_eq!(a.rows.len(), 16);
    assert_eq!(a.best, b.best);
    let scores = |r: &rough_contact::kernel::SearchResult| {
        r.rows.iter().map(|c| (c.fold_scores.clone(), c.mean_score)).collect::<Vec<_>>()
    };
    assert_eq!(scores(&a), scores(&b));
    assert!(a.rows.iter().all(|r| a.best_row().mean_score <= r.mean_score));
    assert_eq!(a.best_row().combination.iter().find(|(k, _)| k == "kernel").unwrap().1, ParamValue::Text("rbf".into()));
}

#[test]
fn saved_model_reproduces_predictions_bit_for_bit() {
    let x = matrix(40, 23, 2).map(|v| v + 2.0);
    let y = vector(40, 3);
    let ids: Vec<u64> = (0..40).collect();
    let names: Vec<String> = (0..23).map(|k| format!("f{k}")).collect();
    let xq = matrix(9, 23, 4).map(|v| v + 2.0);
    let qids: Vec<u64> = (100..109).collect();
    for (kind, norm) in [
        (ModelKind::Krr, Normalization::RowL2),
        (ModelKind::Gp, Normalization::fit_standardize(&x)),
        (ModelKind::Krr, Normalization::None),
    ] {
        let m = Surrogate::fit(kind, KernelSpec::Rbf { gamma: 5.0 }, 1e-5, norm, names.clone(), &x, &y, &ids).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        std::fs::write(&path, buf).unwrap();
        let back = Surrogate::read_from(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
        assert_eq!(back.predict(&xq, &qids).unwrap(), m.predict(&xq, &qids).unwrap());
    }
}

#[test]
fn gram_between_sets() {
    let a = matrix(3, 2, 1);
    let b = matrix(4, 2, 2);
    let k = gram(&a, &b, KernelSpec::Linear).unwrap();
    assert_eq!(k.shape(), (3, 4));
    assert_eq!(k, &a * b.transpose());
}
