use proptest::prelude::*;
use svreg::data::{standardize, Dataset, DEFAULT_REL_TOL};
use svreg::harness::trimmed_mean;
use svreg::index::{self, local_projector_average, svr_local, EstimatorOptions, Method};
use svreg::linalg::norm;
use svreg::slicing::{admissible_bins, build_partition, slice_stats, LocalMatrix};
use svreg::synthetic::{DistributionSpec, FunctionKind, FunctionSpec, Problem};

fn sample(d: usize, n: usize, noise: f64, seed: u64) -> Dataset {
    let p = Problem::new(
        DistributionSpec::gaussian(d),
        FunctionSpec::new(FunctionKind::F2),
        None,
        noise,
    )
    .unwrap();
    p.sample(n, seed).unwrap().data
}

fn method() -> impl Strategy<Value = Method> {
    prop_oneof![Just(Method::Sir), Just(Method::Save), Just(Method::Svr)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trimmed_mean_stays_in_range(
        values in prop::collection::vec(-1e6f64..1e6, 1..60),
        trim in 0.0f64..0.45,
    ) {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if let Ok(m) = trimmed_mean(&values, trim) {
            prop_assert!(m >= lo - 1e-9 * lo.abs().max(1.0));
            prop_assert!(m <= hi + 1e-9 * hi.abs().max(1.0));
        }
    }

    #[test]
    fn estimates_are_unit_and_sign_canonical(
        d in 2usize..6,
        seed in any::<u64>(),
        level in 1u32..5,
        m in method(),
    ) {
        let sd = standardize(&sample(d, 400, 0.01, seed), DEFAULT_REL_TOL).unwrap();
        let est = index::estimate(&sd, m, level, &EstimatorOptions::default()).unwrap();
        prop_assert!((norm(&est.v_hat) - 1.0).abs() < 1e-12);
        let first = est.v_hat.iter().find(|v| v.abs() > 1e-12).unwrap();
        prop_assert!(*first > 0.0);
    }

    #[test]
    fn row_order_does_not_matter(seed in any::<u64>(), shift in 1usize..399, m in method()) {
        let ds = sample(3, 400, 0.02, seed);
        let order: Vec<usize> = (0..ds.n()).map(|i| (i * 7 + shift) % ds.n()).collect();
        let shuffled = ds.select(&order).unwrap();
        let opts = EstimatorOptions::default();
        let a = index::estimate(&standardize(&ds, DEFAULT_REL_TOL).unwrap(), m, 3, &opts).unwrap();
        let b = index::estimate(&standardize(&shuffled, DEFAULT_REL_TOL).unwrap(), m, 3, &opts)
            .unwrap();
        prop_assert_eq!(a.v_hat, b.v_hat);
    }

    #[test]
    fn response_scale_does_not_matter(seed in any::<u64>(), power in -3i32..4, m in method()) {
        // Power-of-two scaling is exact, so every sample lands in the same slice.
        let ds = sample(4, 500, 0.01, seed);
        let c = 2f64.powi(power);
        let scaled_y: Vec<f64> = ds.y().iter().map(|y| c * y).collect();
        let scaled = Dataset::new(ds.dim(), ds.x().to_vec(), scaled_y).unwrap();
        let opts = EstimatorOptions::default();
        let a = index::estimate(&standardize(&ds, DEFAULT_REL_TOL).unwrap(), m, 3, &opts).unwrap();
        let b = index::estimate(&standardize(&scaled, DEFAULT_REL_TOL).unwrap(), m, 3, &opts)
            .unwrap();
        prop_assert_eq!(a.v_hat, b.v_hat);
    }

    #[test]
    fn projector_average_has_unit_trace(d in 2usize..7, seed in any::<u64>(), level in 1u32..5) {
        let sd = standardize(&sample(d, 600, 0.01, seed), DEFAULT_REL_TOL).unwrap();
        let partition = build_partition(sd.data.y(), level, None).unwrap();
        let stats = slice_stats(&sd, &partition);
        let adm = admissible_bins(&stats, sd.n()).unwrap();
        let locals: Vec<_> = adm
            .indices
            .iter()
            .map(|&h| svr_local(&stats, h, LocalMatrix::Centered).unwrap())
            .collect();
        let v = local_projector_average(&locals, d);
        prop_assert!((v.trace() - 1.0).abs() < 1e-12);
        for l in &locals {
            prop_assert!((norm(&l.v_local) - 1.0).abs() < 1e-12);
        }
    }
}
