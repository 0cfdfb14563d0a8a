use covbreak::cptest::{CritvalSettings, Projection, TestSpec};
use covbreak::harness::{self, Case};
use covbreak::limits::{self, PathCache, StatisticKind};
use covbreak::lrv::{self, LrvMode};
use covbreak::simgen::{self, PanelConfig};
use covbreak::sumproc::{self, ProjectedSample, ProjectionPair};
use covbreak::{ingest, run_test};
use proptest::prelude::*;

fn panel(d: usize, tau: Option<Vec<usize>>, sigma1: Option<Vec<f64>>, seed: u64) -> Vec<ndarray::Array2<f64>> {
    let config = PanelConfig {
        d,
        n: Case::II.sizes().to_vec(),
        rho0: harness::rho_pre(d),
        rho1: None,
        sigma0: harness::SIGMA_PRE.to_vec(),
        sigma1,
        tau,
        burn_in: simgen::DEFAULT_BURN_IN,
        seed,
    };
    simgen::gen_ar1_panel(&config).unwrap().samples
}

fn spec(kind: StatisticKind, d: usize) -> TestSpec {
    let w = simgen::gen_dirichlet_projection(d, 1).unwrap();
    let mut s = TestSpec::new(kind, Projection::Shared(ProjectionPair::quadratic(w).unwrap()), 0);
    s.critval = CritvalSettings {
        n_grid: 500,
        n_rep: 5000,
        seed: 0,
    };
    s
}

#[test]
fn large_scale_change_is_detected() {
    let d = 20;
    let tau = harness::change_time_mapping(600, &Case::II.sizes(), harness::HORIZON);
    let samples = panel(d, Some(tau), Some(vec![3.0; 4]), 10);
    let cache = PathCache::new();
    for kind in [StatisticKind::QBreve, StatisticKind::VBreve] {
        let r = run_test(&samples, &spec(kind, d), &cache).unwrap();
        assert!(r.reject, "{kind}: {} <= {}", r.statistic, r.critical_value);
        // the argmax of each sample sits near its change index
        if kind == StatisticKind::QBreve {
            let worst = r.per_sample.iter().max_by(|a, b| a.alpha_sq.total_cmp(&b.alpha_sq)).unwrap();
            assert!(worst.argmax_k > 0 && worst.argmax_k < worst.n);
        }
    }
}

#[test]
fn reports_serialize_and_cache_is_shared() {
    let d = 10;
    let samples = panel(d, None, None, 11);
    let cache = PathCache::new();
    let a = run_test(&samples, &spec(StatisticKind::QBreve, d), &cache).unwrap();
    let b = run_test(&samples, &spec(StatisticKind::QBreve, d), &cache).unwrap();
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
    assert_eq!(v["per_sample"].as_array().unwrap().len(), 4);
}

#[test]
fn learning_sample_and_files_round_trip() {
    let d = 5;
    let samples = panel(d, None, None, 12);
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = samples
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let p = dir.path().join(format!("s{j}.csv"));
            ingest::write_matrix_csv(&p, s).unwrap();
            p
        })
        .collect();
    let bundle = ingest::load_bundle(&paths, &Default::default()).unwrap();
    assert_eq!(bundle.samples, samples);

    let mut s = spec(StatisticKind::VBreve, d);
    s.lrv_mode = LrvMode::LearningSample { length: 100 };
    let r = run_test(&bundle.samples, &s, &PathCache::new()).unwrap();
    for (p, sample) in r.per_sample.iter().zip(&samples) {
        assert_eq!(p.n, sample.nrows() - 100);
    }
}

#[test]
fn critical_values_increase_with_level() {
    let table = limits::simulate_brownian_paths(3, 300, 4000, 2);
    let mut prev = 0.0;
    for level in [0.5, 0.9, 0.95, 0.99] {
        let c = limits::critical_value_from(&table, StatisticKind::QBreve, level, None).unwrap();
        assert!(c > prev);
        prev = c;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lrv_scales_quadratically(p in prop::collection::vec(-5.0f64..5.0, 8..60), c in 0.1f64..20.0) {
        prop_assume!(p.iter().any(|x| (x - p[0]).abs() > 1e-3));
        let base = lrv::lrv_estimate(&ProjectedSample::from_products(p.clone()), LrvMode::InSample, None).unwrap();
        let scaled = ProjectedSample::from_products(p.iter().map(|x| c * x).collect());
        let scaled = lrv::lrv_estimate(&scaled, LrvMode::InSample, None).unwrap();
        prop_assert!((scaled.alpha_sq - c * c * base.alpha_sq).abs() <= 1e-9 * scaled.alpha_sq.abs().max(1e-300));
        prop_assert!((scaled.bandwidth - base.bandwidth).abs() <= 1e-9 * base.bandwidth.max(1.0));
    }

    #[test]
    fn bridge_vanishes_at_both_ends(p in prop::collection::vec(-1e6f64..1e6, 1..80)) {
        let b = sumproc::bridge_process(&ProjectedSample::from_products(p.clone())).unwrap();
        prop_assert_eq!(b[0].to_bits(), 0);
        prop_assert_eq!(b[p.len()].to_bits(), 0);
    }

    #[test]
    fn panels_depend_only_on_the_seed(seed in any::<u64>()) {
        let a = panel(3, None, None, seed);
        let b = panel(3, None, None, seed);
        prop_assert_eq!(a, b);
    }
}
