use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use alphaforge_ffi::*;

fn last_error() -> String {
    let p = af_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn synthetic(n: usize, t: usize) -> *mut AfPanel {
    let mut p = ptr::null_mut();
    assert_eq!(af_panel_synthetic(n, t, 0.0, 3, &mut p), AfStatus::Ok);
    p
}

#[test]
fn pipeline_through_handles() {
    unsafe {
        let p = synthetic(12, 300);
        let (mut days, mut stocks) = (0, 0);
        assert_eq!(af_panel_dims(p, &mut days, &mut stocks), AfStatus::Ok);
        assert_eq!((days, stocks), (300, 12));

        let f = CString::new("ts_mean(volume,5)").unwrap();
        let mut m = AfMetrics::default();
        assert_eq!(af_factor_metrics(p, f.as_ptr(), 0, 300, &mut m), AfStatus::Ok);
        assert!(m.ic > 0.99, "{m:?}");

        let mut values = vec![0.0; days * stocks];
        assert_eq!(af_eval_expr(p, f.as_ptr(), values.as_mut_ptr(), values.len()), AfStatus::Ok);
        assert!(values[..4 * stocks].iter().all(|v| v.is_nan()));
        assert!(values[4 * stocks..].iter().all(|v| v.is_finite()));

        let g = CString::new("ts_std(close,10)").unwrap();
        let formulas = [f.as_ptr(), g.as_ptr()];
        let mut zoo = ptr::null_mut();
        assert_eq!(af_zoo_from_formulas(p, formulas.as_ptr(), 2, 0, 150, &mut zoo), AfStatus::Ok);
        let mut n = 0;
        assert_eq!(af_zoo_len(zoo, &mut n), AfStatus::Ok);
        assert_eq!(n, 2);

        let mut cfg = af_combiner_config_default();
        cfg.window = 60;
        cfg.horizon = 5;
        let mut comb = ptr::null_mut();
        assert_eq!(af_combine(zoo, p, &cfg, 150, 300, &mut comb), AfStatus::Ok);
        let mut ic = 0.0;
        assert_eq!(af_combination_ic(comb, &mut ic), AfStatus::Ok);
        assert!(ic > 0.9, "{ic}");
        let mut pred = vec![0.0; days * stocks];
        assert_eq!(af_combination_predictions(comb, pred.as_mut_ptr(), pred.len()), AfStatus::Ok);

        let mut bcfg = af_backtest_config_default();
        bcfg.top_k = 3;
        let mut bt = ptr::null_mut();
        assert_eq!(af_backtest(p, pred.as_ptr(), pred.len(), &bcfg, 150, 300, &mut bt), AfStatus::Ok);
        let mut len = 0;
        assert_eq!(af_backtest_len(bt, &mut len), AfStatus::Ok);
        assert_eq!(len, 148);
        let mut rets = vec![0.0; len];
        assert_eq!(af_backtest_returns(bt, rets.as_mut_ptr(), len), AfStatus::Ok);
        let mut s = AfBacktestSummary::default();
        assert_eq!(af_backtest_summary(bt, &mut s), AfStatus::Ok);
        let total = rets.iter().fold(1.0, |a, r| a * (1.0 + r)) - 1.0;
        assert!((s.total_return - total).abs() < 1e-12);

        af_backtest_free(bt);
        af_combination_free(comb);
        af_zoo_free(zoo);
        af_panel_free(p);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(af_panel_load_csv(ptr::null(), &mut p), AfStatus::NullPointer);
        assert!(last_error().contains("path"));

        let missing = CString::new("/nonexistent/panel.csv").unwrap();
        assert_eq!(af_panel_load_csv(missing.as_ptr(), &mut p), AfStatus::Io);
        assert!(p.is_null());

        let p = synthetic(5, 40);
        let bad = CString::new("ts_mean(volume").unwrap();
        let mut m = AfMetrics::default();
        assert_eq!(af_factor_metrics(p, bad.as_ptr(), 0, 40, &mut m), AfStatus::ParseError);
        assert!(!last_error().is_empty());

        let ok = CString::new("close").unwrap();
        assert_eq!(af_factor_metrics(p, ok.as_ptr(), 10, 10, &mut m), AfStatus::InvalidArgument);
        let mut small = vec![0.0; 3];
        assert_eq!(af_eval_expr(p, ok.as_ptr(), small.as_mut_ptr(), 3), AfStatus::InvalidArgument);

        // success clears the previous message
        assert_eq!(af_factor_metrics(p, ok.as_ptr(), 0, 40, &mut m), AfStatus::Ok);
        assert!(af_last_error().is_null());
        af_panel_free(p);
        af_panel_free(ptr::null_mut());
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/alphaforge.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["af_panel_load_csv", "af_combine", "af_backtest_free", "AF_STATUS_PANIC", "typedef struct AfZoo AfZoo"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    match Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header).status() {
        Ok(s) => assert!(s.success(), "header does not compile"),
        Err(_) => eprintln!("no C compiler; syntax check skipped"),
    }
}
