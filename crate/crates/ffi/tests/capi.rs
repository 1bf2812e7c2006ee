//! Exercise the C ABI end to end through the exported symbols.

use delaybs_ffi::*;
use std::ffi::{CStr, CString};

const SCENARIO: &str = r#"{
    "c": {"family": "ramp", "params": [20.0]},
    "f": {"family": "harmonic", "params": [5.0, 0.0, 5.0, 0.0]},
    "delay": {"family": "exponential", "params": [0.5, -1.6]},
    "grid": 41
}"#;

#[test]
fn version_and_error_strings_are_valid() {
    unsafe {
        let v = CStr::from_ptr(delaybs_version());
        assert!(!v.to_str().unwrap().is_empty());
        let e = CStr::from_ptr(delaybs_last_error());
        assert!(e.to_str().is_ok());
    }
}

#[test]
fn scenario_to_law_to_control_round_trip() {
    unsafe {
        let json = CString::new(SCENARIO).unwrap();
        let mut scenario = std::ptr::null_mut();
        assert_eq!(
            delaybs_scenario_from_json(json.as_ptr(), &mut scenario),
            DelaybsStatus::Ok
        );

        let mut law = std::ptr::null_mut();
        assert_eq!(
            delaybs_law_solve(scenario, 0.025, 1e-8, &mut law),
            DelaybsStatus::Ok
        );

        let mut residual = f64::NAN;
        let mut sup = f64::NAN;
        let (mut i1, mut i2) = (0u32, 0u32);
        assert_eq!(
            delaybs_kernel_info(law, &mut residual, &mut i1, &mut i2, &mut sup),
            DelaybsStatus::Ok
        );
        assert!(residual <= 1e-8);
        assert!(i1 > 0 && i2 > 0);
        assert!(sup > 1.0);

        let mut k = f64::NAN;
        assert_eq!(delaybs_kernel_value(law, 0.0, 0.5, &mut k), DelaybsStatus::Ok);
        assert!(k.is_finite());

        // Feedback on the reference initial state with an empty delay line:
        // the gain-weighted state integral alone.
        let n = 41usize;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let s = i as f64 / 40.0;
                5.0 * (4.0 * (s - 0.2).acos()).cos()
            })
            .collect();
        let u = vec![0.0; n * n];
        let mut control = f64::NAN;
        assert_eq!(
            delaybs_control(law, x.as_ptr(), n, u.as_ptr(), n, n, &mut control),
            DelaybsStatus::Ok
        );
        assert!((control - 22.0).abs() < 0.5, "control {control}");

        delaybs_law_free(law);
        delaybs_scenario_free(scenario);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut scenario = std::ptr::null_mut();
        let bad = CString::new("{\"delay\": 3}").unwrap();
        assert_eq!(
            delaybs_scenario_from_json(bad.as_ptr(), &mut scenario),
            DelaybsStatus::InvalidArgument
        );
        let msg = CStr::from_ptr(delaybs_last_error()).to_str().unwrap();
        assert!(!msg.is_empty());

        assert_eq!(
            delaybs_scenario_from_json(std::ptr::null(), &mut scenario),
            DelaybsStatus::NullPointer
        );

        let mut model = std::ptr::null_mut();
        let missing = CString::new("/nonexistent/model.json").unwrap();
        assert_eq!(
            delaybs_model_load(missing.as_ptr(), &mut model),
            DelaybsStatus::IoError
        );
    }
}

#[test]
fn model_predict_through_the_abi() {
    // Save a fresh (untrained) model from the core API, load it through the
    // ABI and run inference.
    let dir = std::env::temp_dir().join("delaybs-ffi-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.json");
    let model = delaybs::operator::DeepONetModel::new(delaybs::operator::ModelConfig::default());
    delaybs::operator::save_model(&model, &path).unwrap();

    unsafe {
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        let mut handle = std::ptr::null_mut();
        assert_eq!(delaybs_model_load(cpath.as_ptr(), &mut handle), DelaybsStatus::Ok);
        let tau = vec![0.5; 41];
        let x = vec![1.0; 41];
        let u = vec![0.0; 41 * 41];
        let mut out = f64::NAN;
        assert_eq!(
            delaybs_model_predict(handle, tau.as_ptr(), 41, x.as_ptr(), 41, u.as_ptr(), 41, 41, &mut out),
            DelaybsStatus::Ok
        );
        assert!(out.is_finite());
        delaybs_model_free(handle);
    }
}
