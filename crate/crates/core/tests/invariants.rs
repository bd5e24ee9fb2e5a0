use dapcnn::benchmarks::compute_metrics;
use dapcnn::network::{node_statistics, sobol_indices};
use dapcnn::sampling::sobol_points;
use dapcnn::{enumerate_total_degree, term_count, Activation, BasisMode, LayerSpec, NetworkState, OrthonormalBasis1D};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn gram_deviation(basis: &OrthonormalBasis1D, samples: &[f64]) -> f64 {
    let k = basis.degree() + 1;
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut v = vec![0.0; k];
    for &x in samples {
        basis.eval_all(x, &mut v);
        gram += DMatrix::from_fn(k, k, |a, b| v[a] * v[b]);
    }
    gram /= samples.len() as f64;
    (gram - DMatrix::identity(k, k)).amax()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bases_are_orthonormal_on_their_sample(
        samples in prop::collection::vec(-50.0f64..50.0, 30..200),
        degree in 0usize..5,
    ) {
        if let Ok(basis) = OrthonormalBasis1D::from_samples(&samples, degree) {
            prop_assert!(gram_deviation(&basis, &samples) < 1e-6);
        }
    }

    #[test]
    fn term_count_is_symmetric(n in 0usize..12, d in 0usize..12) {
        prop_assert_eq!(term_count(n, d), term_count(d, n));
    }

    #[test]
    fn sobol_shares_are_a_partition(
        weights in prop::collection::vec(-3.0f64..3.0, 20),
        bump in 0.1f64..2.0,
    ) {
        let idx = enumerate_total_degree(3, 3).unwrap();
        let mut w = weights;
        w[1] += bump;
        let s = sobol_indices(&w, &idx).unwrap();
        let sum: f64 = s.terms.iter().map(|(_, v)| v).sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        for j in 0..3 {
            prop_assert!(s.first_order[j] >= 0.0);
            prop_assert!(s.first_order[j] <= s.total[j] + 1e-15);
            prop_assert!(s.total[j] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn single_input_node_moments_match_weights(
        xs in prop::collection::vec(-2.0f64..2.0, 40..120),
        seed in 0u64..1000,
    ) {
        let x = DMatrix::from_column_slice(xs.len(), 1, &xs);
        let net = NetworkState::build(1, &[LayerSpec::new(1, 3, Activation::Identity)], BasisMode::Adaptive, seed).unwrap();
        if let Ok(net) = net.refresh_bases(&x) {
            let r = net.predict_batch(&x).unwrap();
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let (w0, sw) = node_statistics(&net.layers()[0].weights()[0]);
            prop_assert!((mean - w0).abs() < 1e-8);
            prop_assert!((var - sw).abs() < 1e-8 * sw.max(1.0));
        }
    }

    #[test]
    fn sobol_points_stay_in_the_unit_cube(dims in 1usize..20, count in 1usize..300, skip in 0usize..5) {
        let p = sobol_points(dims, count, skip).unwrap();
        prop_assert_eq!(p.shape(), (count, dims));
        prop_assert!(p.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn metrics_vanish_on_exact_predictions(values in prop::collection::vec(-10.0f64..10.0, 2..50)) {
        let m = compute_metrics(&values, &values).unwrap();
        prop_assert_eq!(m.mse, 0.0);
        if let Some(e) = m.rel_mean_err {
            prop_assert_eq!(e, 0.0);
        }
    }
}
