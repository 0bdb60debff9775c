mod common;

use ccfmap::cca::{center, compute_cca, one_hot, Ridge};
use ccfmap::synth::brute_force_cca;
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn svd_route_matches_eigen_oracle() {
    let mut worst = 0.0f64;
    for case in 0..100 {
        let (x, y) = common::cca_instance(case);
        let fast = compute_cca(&x, &y, Ridge::default()).unwrap();
        let slow = brute_force_cca(&x, &y, Ridge::default()).unwrap();
        assert_eq!(fast.n_components(), 1);
        assert_eq!(slow.n_components(), 1);
        for (a, b) in fast.correlations.iter().zip(&slow.correlations) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-8, "largest gap {worst:e}");
}

#[test]
fn directions_agree_with_oracle() {
    for case in 0..100 {
        let (x, y) = common::cca_instance(case);
        let fast = compute_cca(&x, &y, Ridge::default()).unwrap();
        let slow = brute_force_cca(&x, &y, Ridge::default()).unwrap();
        let a = fast.proj_x.column(0);
        let b = slow.proj_x.column(0);
        let cos = a.dot(&b) / (a.norm() * b.norm());
        assert!(cos > 1.0 - 1e-6, "case {case}: cos {cos}");
    }
}

#[test]
fn correlations_survive_affine_columns() {
    for case in 0..20 {
        let (x, y) = common::cca_instance(case);
        let xt = common::affine(&x, case);
        let r = compute_cca(&x, &y, Ridge::default()).unwrap();
        let rt = compute_cca(&xt, &y, Ridge::default()).unwrap();
        for (a, b) in r.correlations.iter().zip(&rt.correlations) {
            assert!((a - b).abs() <= 1e-8, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn diagonal_labels_give_diagonal_direction() {
    // class = sign(x1 + x2), separable
    let data = ccfmap::synth::diagonal_dataset(40, 5);
    let x = common::dataset_matrix(&data);
    let labels: Vec<usize> = data.labels().iter().map(|c| c.index()).collect();
    let y = one_hot(&labels, 2).unwrap();
    let r = compute_cca(&x, &y, Ridge::default()).unwrap();
    let oracle = brute_force_cca(&x, &y, Ridge::default()).unwrap();
    assert!(r.correlations[0] > 0.9);
    assert!((r.correlations[0] - oracle.correlations[0]).abs() < 1e-8);
    let w = r.proj_x.column(0).normalize();
    let diag = (1.0f64 / 2.0).sqrt();
    assert!((w[0].abs() - diag).abs() < 0.05 && (w[1].abs() - diag).abs() < 0.05, "{w}");
    assert!(w[0] * w[1] > 0.0);
}

#[test]
fn multiclass_components_match_oracle() {
    // three classes: two components, both compared
    let (x, _) = common::cca_instance(7);
    let labels: Vec<usize> = (0..x.nrows()).map(|i| i % 3).collect();
    let y = one_hot(&labels, 3).unwrap();
    let fast = compute_cca(&x, &y, Ridge::default()).unwrap();
    let slow = brute_force_cca(&x, &y, Ridge::default()).unwrap();
    assert_eq!(fast.n_components(), x.ncols().min(2));
    for (a, b) in fast.correlations.iter().zip(&slow.correlations) {
        assert!((a - b).abs() < 1e-8);
    }
}

fn instance() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
    (3usize..30, 1usize..5).prop_flat_map(|(n, d)| {
        (
            proptest::collection::vec(-10.0f64..10.0, n * d),
            proptest::collection::vec(0usize..2, n),
        )
            .prop_map(move |(xs, mut ls)| {
                ls[0] = 0;
                ls[1] = 1;
                (
                    DMatrix::from_row_slice(n, d, &xs),
                    one_hot(&ls, 2).unwrap(),
                )
            })
    })
}

proptest! {
    #[test]
    fn correlations_bounded_and_sorted((x, y) in instance()) {
        let r = compute_cca(&x, &y, Ridge::default()).unwrap();
        prop_assert!(r.n_components() <= 1);
        for w in r.correlations.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        for &c in &r.correlations {
            prop_assert!((-1e-8..=1.0 + 1e-8).contains(&c));
        }
    }

    #[test]
    fn largest_entry_is_positive((x, y) in instance()) {
        let r = compute_cca(&x, &y, Ridge::default()).unwrap();
        for col in r.proj_x.column_iter() {
            let i = col.iamax();
            prop_assert!(col[i] >= 0.0);
        }
    }

    #[test]
    fn variates_have_unit_variance((x, y) in instance()) {
        let r = compute_cca(&x, &y, Ridge::default()).unwrap();
        let u = center(&x) * &r.proj_x;
        for col in u.column_iter() {
            let var = col.norm_squared() / (x.nrows() - 1) as f64;
            // ridge shrinks the variance of directions along near-null columns
            prop_assert!(var <= 1.0 + 1e-6);
            if r.correlations[0] > 1e-3 && x.nrows() > x.ncols() + 2 {
                prop_assert!((var - 1.0).abs() < 1e-6, "variance {}", var);
            }
        }
    }
}
