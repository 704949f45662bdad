use std::ffi::{c_char, CString};
use std::ptr;

use mps_capacity_ffi::*;

fn last_error() -> String {
    unsafe {
        let len = mpscap_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0u8; len + 1];
        mpscap_last_error_message(buf.as_mut_ptr() as *mut c_char, buf.len());
        buf.truncate(len);
        String::from_utf8(buf).unwrap()
    }
}

fn aklt(theta: f64) -> *mut MpscapModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { mpscap_model_aklt(theta, &mut m) }, MpscapStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn closed_forms() {
    let t = mpscap_aklt_ground_theta();
    assert!((mpscap_aklt_capacity(t) - 2.0 / 3.0).abs() < 1e-12);
    let mut c = 0.0;
    assert_eq!(unsafe { mpscap_mg_capacity(0.5, &mut c) }, MpscapStatus::Ok);
    assert!((c - 0.5).abs() < 1e-12);
    assert_eq!(unsafe { mpscap_mg_capacity(1.5, &mut c) }, MpscapStatus::Domain);
    assert!(last_error().contains("domain"));
    assert_eq!(unsafe { mpscap_mg_capacity(0.5, ptr::null_mut()) }, MpscapStatus::NullPointer);
}

#[test]
fn model_lifecycle() {
    let m = aklt(0.7);
    unsafe {
        assert_eq!(mpscap_model_local_dim(m), 3);
        assert_eq!(mpscap_model_bond_dim(m), 2);
        let mut worst = 1.0;
        assert_eq!(mpscap_model_validate(m, &mut worst), MpscapStatus::Ok);
        assert!(worst < 1e-12);
        mpscap_model_free(m);
        mpscap_model_free(ptr::null_mut());
        assert_eq!(mpscap_model_local_dim(ptr::null()), 0);
    }
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mpscap_model_mg(1.0, &mut out) }, MpscapStatus::Domain);
    assert!(out.is_null());
}

#[test]
fn json_models() {
    let ok = CString::new(
        r#"{"d":2,"D":1,"kraus":[[[0.6,0.0]],[[0.8,0.0]]],"label":"coin"}"#,
    )
    .unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(mpscap_model_from_json(ok.as_ptr(), &mut m), MpscapStatus::Ok);
        let mut p = 0.0;
        assert_eq!(mpscap_string_probability(m, [1u8, 2].as_ptr(), 2, &mut p), MpscapStatus::Ok);
        assert!((p - 0.36 * 0.64).abs() < 1e-15);
        assert_eq!(mpscap_string_probability(m, [3u8].as_ptr(), 1, &mut p), MpscapStatus::Domain);
        mpscap_model_free(m);

        let bad = CString::new("{not json").unwrap();
        let mut m2 = ptr::null_mut();
        assert_eq!(mpscap_model_from_json(bad.as_ptr(), &mut m2), MpscapStatus::Parse);
        assert!(m2.is_null());
        assert_eq!(mpscap_model_from_json(ptr::null(), &mut m2), MpscapStatus::NullPointer);
    }
}

#[test]
fn distribution_access() {
    let m = aklt(mpscap_aklt_ground_theta());
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(mpscap_distribution_enumerate(m, 3, 0.0, &mut d), MpscapStatus::Ok);
        assert_eq!(mpscap_distribution_n(d), 3);
        let len = mpscap_distribution_len(d);
        assert_eq!(len, 15);
        let mut sum = 0.0;
        let mut sym = [0u8; 3];
        for i in 0..len {
            let mut p = 0.0;
            assert_eq!(mpscap_distribution_get(d, i, sym.as_mut_ptr(), 3, &mut p), MpscapStatus::Ok);
            assert!(sym.iter().all(|&s| (1..=3).contains(&s)));
            sum += p;
        }
        assert!((sum - 1.0).abs() < 1e-12);
        let mut p = 0.0;
        assert_eq!(
            mpscap_distribution_get(d, len, sym.as_mut_ptr(), 3, &mut p),
            MpscapStatus::IndexOutOfRange
        );
        assert_eq!(mpscap_distribution_get(d, 0, sym.as_mut_ptr(), 2, &mut p), MpscapStatus::BufferTooSmall);
        let (mut h, mut total) = (0.0, 0.0);
        assert_eq!(mpscap_distribution_summary(d, &mut h, &mut total, ptr::null_mut()), MpscapStatus::Ok);
        assert!((total - 1.0).abs() < 1e-12);
        assert!(h > 0.0);
        mpscap_distribution_free(d);

        let mut d0 = ptr::null_mut();
        assert_eq!(mpscap_distribution_enumerate(m, 0, 0.0, &mut d0), MpscapStatus::Domain);
        mpscap_model_free(m);
    }
}

#[test]
fn capacity_struct() {
    let m = aklt(mpscap_aklt_ground_theta());
    unsafe {
        let mut c = std::mem::zeroed::<MpscapCapacity>();
        assert_eq!(mpscap_capacity_estimate(m, 3, 1e-14, &mut c), MpscapStatus::Ok);
        assert_eq!(c.n, 3);
        assert!((c.closed_form - 2.0 / 3.0).abs() < 1e-12);
        assert!(c.channel_path_difference < 1e-9);
        assert!(c.estimate_cond <= c.closed_form + 1e-12);
        assert_eq!(mpscap_capacity_estimate(m, 8, 1e-14, &mut c), MpscapStatus::Ok);
        assert!(c.channel_path_difference.is_nan());
        mpscap_model_free(m);
    }
}

#[test]
fn errors_are_thread_local() {
    let mut c = 0.0;
    assert_eq!(unsafe { mpscap_mg_capacity(-1.0, &mut c) }, MpscapStatus::Domain);
    let here = last_error();
    let other = std::thread::spawn(last_error).join().unwrap();
    assert!(!here.is_empty());
    assert!(other.is_empty());
    // a success clears the message
    assert_eq!(unsafe { mpscap_mg_capacity(0.2, &mut c) }, MpscapStatus::Ok);
    assert!(last_error().is_empty());
}
