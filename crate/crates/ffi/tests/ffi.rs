use std::ffi::{c_void, CStr, CString};
use std::ptr;

use latent_shap_ffi::*;

unsafe extern "C" fn additive(user_data: *mut c_void, coalition: u64, out: *mut f64) -> i32 {
    let weights = &*(user_data as *const Vec<f64>);
    *out = (0..weights.len())
        .filter(|i| coalition >> i & 1 == 1)
        .map(|i| weights[i])
        .sum();
    0
}

unsafe extern "C" fn failing(_: *mut c_void, coalition: u64, out: *mut f64) -> i32 {
    *out = 0.0;
    if coalition == 0b11 {
        7
    } else {
        0
    }
}

unsafe extern "C" fn nan_game(_: *mut c_void, _: u64, out: *mut f64) -> i32 {
    *out = f64::NAN;
    0
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ls_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn values(a: *const LsAttribution) -> (Vec<f64>, Vec<f64>) {
    unsafe {
        let n = ls_attribution_len(a);
        let mut v = vec![0.0; n];
        let mut se = vec![0.0; n];
        assert_eq!(
            ls_attribution_values(a, v.as_mut_ptr(), se.as_mut_ptr(), n),
            LsStatus::Ok
        );
        (v, se)
    }
}

#[test]
fn exact_shapley_through_callback() {
    let weights = vec![1.0, 2.0, 3.0];
    let mut a = ptr::null_mut();
    let status = unsafe { ls_exact_shapley(3, Some(additive), &weights as *const Vec<f64> as *mut c_void, &mut a) };
    assert_eq!(status, LsStatus::Ok);
    let (v, se) = values(a);
    for (got, want) in v.iter().zip(&weights) {
        assert!((got - want).abs() < 1e-12);
    }
    assert_eq!(se, vec![0.0; 3]);
    let (mut full, mut empty) = (0.0, 1.0);
    assert_eq!(
        unsafe { ls_attribution_endpoints(a, &mut full, &mut empty) },
        LsStatus::Ok
    );
    assert_eq!((full, empty), (6.0, 0.0));
    unsafe { ls_attribution_free(a) };
}

#[test]
fn mc_shapley_is_seeded() {
    let weights = vec![0.5, -1.0, 2.0, 0.25];
    let data = &weights as *const Vec<f64> as *mut c_void;
    let run = |seed| {
        let mut a = ptr::null_mut();
        assert_eq!(
            unsafe { ls_mc_shapley(4, Some(additive), data, 200, seed, &mut a) },
            LsStatus::Ok
        );
        let out = values(a);
        unsafe { ls_attribution_free(a) };
        out
    };
    assert_eq!(run(3), run(3));
    // additive games have zero-variance marginals
    let (v, _) = run(3);
    for (got, want) in v.iter().zip(&weights) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut a = ptr::null_mut();
    unsafe {
        assert_eq!(
            ls_exact_shapley(2, Some(failing), ptr::null_mut(), &mut a),
            LsStatus::CallbackFailed
        );
        assert!(last_error().contains("returned 7"));
        assert_eq!(
            ls_exact_shapley(2, Some(nan_game), ptr::null_mut(), &mut a),
            LsStatus::InvalidValue
        );
        assert_eq!(
            ls_exact_shapley(21, Some(nan_game), ptr::null_mut(), &mut a),
            LsStatus::PlayerCountExceeded
        );
        assert_eq!(
            ls_mc_shapley(2, Some(nan_game), ptr::null_mut(), 1, 0, &mut a),
            LsStatus::InsufficientSamples
        );
        assert_eq!(
            ls_exact_shapley(2, None, ptr::null_mut(), &mut a),
            LsStatus::NullPointer
        );
        assert_eq!(ls_attribution_len(ptr::null()), 0);
    }
    assert!(a.is_null());
}

#[test]
fn explain_local_with_builtin_handles() {
    let spec = CString::new("builtin:hole").unwrap();
    let codec_spec = CString::new("fourier").unwrap();
    let (h, w) = (8u32, 8u32);
    let mut model = ptr::null_mut();
    let mut codec = ptr::null_mut();
    unsafe {
        assert_eq!(ls_model_new(spec.as_ptr(), h, w, 1, &mut model), LsStatus::Ok);
        assert_eq!(ls_model_num_classes(model), 2);
        assert_eq!(ls_codec_new(codec_spec.as_ptr(), h, w, 1, 3, &mut codec), LsStatus::Ok);
        assert_eq!(ls_codec_num_features(codec), 3);
    }
    // white ring on black: a hole
    let mut ring = vec![0.0; 64];
    for r in 2..6 {
        for c in 2..6 {
            if !(r == 3 || r == 4) || !(c == 3 || c == 4) {
                ring[r * 8 + c] = 1.0;
            }
        }
    }
    let mut probs = [0.0; 2];
    unsafe {
        assert_eq!(
            ls_model_predict(model, ring.as_ptr(), 64, h, w, 1, probs.as_mut_ptr(), 2),
            LsStatus::Ok
        );
    }
    assert_eq!(probs, [0.0, 1.0]);

    let background = vec![0.0; 64 * 2];
    let mut a = ptr::null_mut();
    unsafe {
        let status = ls_explain_local(
            model,
            codec,
            ring.as_ptr(),
            background.as_ptr(),
            2,
            h,
            w,
            1,
            -1,
            100,
            1,
            &mut a,
        );
        assert_eq!(status, LsStatus::Ok, "{}", last_error());
        assert_eq!(ls_attribution_len(a), 3);
        let mut json = ptr::null_mut();
        assert_eq!(ls_attribution_to_json(a, &mut json), LsStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        assert!(text.contains("\"schema\": \"latent-shap/1\""));
        ls_string_free(json);
        ls_attribution_free(a);
        ls_model_free(model);
        ls_codec_free(codec);
    }
}

#[test]
fn bad_specs_are_config_errors() {
    let spec = CString::new("builtin:nope").unwrap();
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(ls_model_new(spec.as_ptr(), 8, 8, 1, &mut model), LsStatus::Config);
        assert!(last_error().contains("bad model"));
        assert_eq!(ls_model_new(ptr::null(), 8, 8, 1, &mut model), LsStatus::NullPointer);
    }
}

#[test]
fn header_declares_the_api() {
    let header = include_str!("../include/latent_shap.h");
    for name in [
        "ls_exact_shapley",
        "ls_mc_shapley",
        "ls_explain_local",
        "ls_last_error",
        "ls_attribution_free",
        "typedef struct LsModel LsModel",
        "LS_STATUS_CALLBACK_FAILED = 6",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
