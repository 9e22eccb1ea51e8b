use drosc::lcp::{brute_force_lcp, lemke, natural_residual, regularization_path, regularize, solve_pd_lcp, LcpInstance};
use drosc::pcd::{block_lcp, solve_block_regularized};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn pd_instance(m: usize, entries: &[f64], q: &[f64]) -> LcpInstance {
    // AᵀA + 0.1 I plus a skew part keeps the symmetric part positive definite.
    let a = DMatrix::from_row_slice(m, m, &entries[..m * m]);
    let skew = DMatrix::from_fn(m, m, |i, j| entries[(i * 7 + j * 3) % (m * m)] * if i < j { 1.0 } else if i > j { -1.0 } else { 0.0 });
    let mut skew_sym = skew.clone() - skew.transpose();
    skew_sym *= 0.5;
    let mat = a.transpose() * &a + DMatrix::identity(m, m) * 0.1 + skew_sym;
    LcpInstance::new(mat, DVector::from_column_slice(&q[..m])).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn newton_lemke_and_enumeration_agree(
        m in 1usize..=6,
        entries in prop::collection::vec(-1.0f64..1.0, 36),
        q in prop::collection::vec(-2.0f64..2.0, 6),
    ) {
        let inst = pd_instance(m, &entries, &q);
        let sol = solve_pd_lcp(&inst).unwrap();
        prop_assert!(sol.residual <= 1e-10);
        let all = brute_force_lcp(&inst).unwrap();
        prop_assert_eq!(all.len(), 1);
        prop_assert!((&sol.y - &all[0].y).amax() <= 1e-8);
        let piv = lemke(&inst).expect("pivoting fails on a positive-definite instance");
        prop_assert!(natural_residual(&inst, &piv).unwrap() <= 1e-9);
        prop_assert!((&sol.y - piv).amax() <= 1e-8);
    }

    #[test]
    fn block_closed_form_is_the_regularized_solution(
        u in prop::collection::vec(-2.0f64..2.0, 2..=5),
        eps in prop::sample::select(vec![0.5, 0.1, 0.01]),
    ) {
        let inst = regularize(&block_lcp(&DVector::from_column_slice(&u)), eps).unwrap();
        let closed = solve_block_regularized(&u, eps).unwrap();
        let y = closed.y();
        prop_assert!(natural_residual(&inst, &y).unwrap() <= 1e-10);
        prop_assert!((solve_pd_lcp(&inst).unwrap().y - &y).amax() <= 1e-8);
        // Shares are nonnegative and the budget row holds with slack εγ.
        prop_assert!(closed.s.iter().all(|v| *v >= 0.0));
        prop_assert!(closed.s.iter().sum::<f64>() <= 1.0 + eps * closed.gamma + 1e-12);
    }
}

#[test]
fn path_norm_stays_below_least_norm_solution() {
    // u = (1, 1): least-norm solution (s, γ) = (0.5, 0.5, 1).
    let inst = block_lcp(&DVector::from_vec(vec![1.0, 1.0]));
    let path = regularization_path(&inst, &[1.0, 0.5, 0.1, 0.01, 0.001]).unwrap();
    let bound = (0.25f64 + 0.25 + 1.0).sqrt();
    let mut last = 0.0;
    for pt in &path {
        assert!(pt.norm <= bound + 1e-12, "eps {}: norm {}", pt.eps, pt.norm);
        assert!(pt.norm >= last - 1e-12, "norm should grow as eps shrinks");
        last = pt.norm;
    }
    let y = &path.last().unwrap().solution.y;
    assert!((y[0] - 0.5).abs() < 1e-3 && (y[1] - 0.5).abs() < 1e-3 && (y[2] - 1.0).abs() < 1e-2);
}
