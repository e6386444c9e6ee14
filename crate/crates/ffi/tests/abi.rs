use std::ffi::{CStr, CString};
use std::ptr;

use ccgc_ffi::*;

fn last_error() -> String {
    let p = ccgc_last_error_message();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn sbm(seed: u64) -> *mut CcgcDataset {
    let mut ds = ptr::null_mut();
    let status = unsafe { ccgc_dataset_make_sbm(seed, 2, 30, 0.9, 0.05, 16, 1.0, &mut ds) };
    assert_eq!(status, CcgcStatus::Ok);
    ds
}

fn short_config(seeds: &[u64]) -> *mut CcgcConfig {
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(ccgc_config_new(&mut cfg), CcgcStatus::Ok);
        assert_eq!(ccgc_config_set_epochs(cfg, 40), CcgcStatus::Ok);
        assert_eq!(ccgc_config_set_seeds(cfg, seeds.as_ptr(), seeds.len()), CcgcStatus::Ok);
    }
    cfg
}

#[test]
fn train_roundtrip() {
    let ds = sbm(3);
    let cfg = short_config(&[0, 1]);
    unsafe {
        assert_eq!(ccgc_dataset_num_nodes(ds), 60);
        assert_eq!(ccgc_dataset_feature_dim(ds), 16);
        assert_eq!(ccgc_dataset_num_classes(ds), 2);

        let mut report = ptr::null_mut();
        assert_eq!(ccgc_train(ds, cfg, &mut report), CcgcStatus::Ok);
        assert!(ccgc_last_error_message().is_null());
        assert_eq!(ccgc_report_num_runs(report), 2);
        assert_eq!(ccgc_report_num_failures(report), 0);

        let (mut mean, mut std) = (f64::NAN, f64::NAN);
        assert_eq!(ccgc_report_metric(report, CcgcMetric::Acc, &mut mean, &mut std), CcgcStatus::Ok);
        assert!((0.5..=1.0).contains(&mean) && std >= 0.0);

        let mut seed = 99;
        assert_eq!(ccgc_report_run_seed(report, 1, &mut seed), CcgcStatus::Ok);
        assert_eq!(seed, 1);

        // per-run metrics agree with scoring the copied-out assignments
        let mut assign = vec![usize::MAX; 60];
        let mut labels = vec![usize::MAX; 60];
        assert_eq!(ccgc_report_assignments(report, 0, assign.as_mut_ptr(), 60), CcgcStatus::Ok);
        assert_eq!(ccgc_dataset_labels(ds, labels.as_mut_ptr(), 60), CcgcStatus::Ok);
        assert!(assign.iter().all(|&a| a < 2));
        let mut from_run = CcgcMetrics::default();
        let mut rescored = CcgcMetrics::default();
        assert_eq!(ccgc_report_run_metrics(report, 0, &mut from_run), CcgcStatus::Ok);
        assert_eq!(
            ccgc_evaluate(assign.as_ptr(), labels.as_ptr(), 60, &mut rescored),
            CcgcStatus::Ok
        );
        assert_eq!(from_run, rescored);

        let mut json = ptr::null_mut();
        assert_eq!(ccgc_report_to_json(report, &mut json), CcgcStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        ccgc_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["runs"].as_array().unwrap().len(), 2);
        assert_eq!(v["config"]["epochs"], 40);

        ccgc_report_free(report);
        ccgc_config_free(cfg);
        ccgc_dataset_free(ds);
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(ccgc_dataset_load(ptr::null(), ptr::null_mut()), CcgcStatus::NullPointer);
        assert!(last_error().contains("path"));
        assert_eq!(ccgc_config_new(ptr::null_mut()), CcgcStatus::NullPointer);
        assert_eq!(ccgc_config_set_tau(ptr::null_mut(), 0.5), CcgcStatus::NullPointer);
        let mut r = ptr::null_mut();
        assert_eq!(ccgc_train(ptr::null(), ptr::null(), &mut r), CcgcStatus::NullPointer);
        assert!(r.is_null());
        assert_eq!(ccgc_dataset_num_nodes(ptr::null()), 0);
        assert_eq!(ccgc_report_num_runs(ptr::null()), 0);
        let mut m = CcgcMetrics::default();
        assert_eq!(ccgc_evaluate(ptr::null(), ptr::null(), 3, &mut m), CcgcStatus::NullPointer);
        // freeing null is a no-op
        ccgc_dataset_free(ptr::null_mut());
        ccgc_config_free(ptr::null_mut());
        ccgc_report_free(ptr::null_mut());
        ccgc_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_arguments_leave_config_unchanged() {
    let cfg = short_config(&[0]);
    unsafe {
        assert_eq!(ccgc_config_set_tau(cfg, 1.5), CcgcStatus::InvalidArgument);
        assert!(last_error().contains("tau"));
        let name = CString::new("no_such_variant").unwrap();
        assert_eq!(ccgc_config_set_variant(cfg, name.as_ptr()), CcgcStatus::InvalidArgument);
        let good = CString::new("wo_dps").unwrap();
        assert_eq!(ccgc_config_set_variant(cfg, good.as_ptr()), CcgcStatus::Ok);
        assert_eq!(ccgc_config_set_tau(cfg, 0.4), CcgcStatus::Ok);
        assert_eq!(ccgc_config_set_alpha(cfg, 0.5), CcgcStatus::Ok);
        assert_eq!(ccgc_config_set_clusters(cfg, 0), CcgcStatus::Ok);
        ccgc_config_free(cfg);
    }
}

#[test]
fn config_from_json() {
    unsafe {
        let mut cfg = ptr::null_mut();
        let ok = CString::new(r#"{"epochs": 12, "tau": 0.5}"#).unwrap();
        assert_eq!(ccgc_config_from_json(ok.as_ptr(), &mut cfg), CcgcStatus::Ok);
        ccgc_config_free(cfg);

        let mut cfg = ptr::null_mut();
        let unknown = CString::new(r#"{"epochz": 12}"#).unwrap();
        assert_eq!(ccgc_config_from_json(unknown.as_ptr(), &mut cfg), CcgcStatus::Json);
        assert!(last_error().contains("epochz"));
        assert!(cfg.is_null());

        let bad_tau = CString::new(r#"{"tau": 0}"#).unwrap();
        assert_eq!(ccgc_config_from_json(bad_tau.as_ptr(), &mut cfg), CcgcStatus::InvalidArgument);

        let not_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(
            ccgc_config_from_json(not_utf8.as_ptr().cast(), &mut cfg),
            CcgcStatus::InvalidUtf8
        );
    }
}

#[test]
fn load_errors_map_to_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    let mut ds = ptr::null_mut();
    unsafe {
        assert_eq!(ccgc_dataset_load(missing.as_ptr(), &mut ds), CcgcStatus::Io);
        assert!(ds.is_null());
        assert_eq!(
            ccgc_dataset_make_sbm(0, 2, 10, 1.5, 0.1, 4, 1.0, &mut ds),
            CcgcStatus::InvalidArgument
        );
        assert!(last_error().contains("p_in"));
    }
}

#[test]
fn buffer_and_index_checks() {
    let ds = sbm(1);
    let cfg = short_config(&[4]);
    unsafe {
        let mut report = ptr::null_mut();
        assert_eq!(ccgc_train(ds, cfg, &mut report), CcgcStatus::Ok);
        let mut small = vec![0usize; 10];
        assert_eq!(
            ccgc_report_assignments(report, 0, small.as_mut_ptr(), small.len()),
            CcgcStatus::InvalidArgument
        );
        let mut m = CcgcMetrics::default();
        assert_eq!(ccgc_report_run_metrics(report, 5, &mut m), CcgcStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));
        ccgc_report_free(report);
        ccgc_config_free(cfg);
        ccgc_dataset_free(ds);
    }
}

#[test]
fn evaluate_matches_core() {
    let pred = [0usize, 0, 1, 1, 2, 2];
    let truth = [1usize, 1, 0, 0, 0, 2];
    let expected = ccgc::metrics::evaluate(&pred, &truth).unwrap();
    let mut m = CcgcMetrics::default();
    unsafe {
        assert_eq!(ccgc_evaluate(pred.as_ptr(), truth.as_ptr(), 6, &mut m), CcgcStatus::Ok);
    }
    assert_eq!((m.acc, m.nmi, m.ari, m.f1), (expected.acc, expected.nmi, expected.ari, expected.f1));
    assert!((m.acc - 5.0 / 6.0).abs() < 1e-12);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ccgc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
