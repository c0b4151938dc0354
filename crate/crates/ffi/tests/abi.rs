use std::ffi::{CStr, CString};
use std::ptr;

use lll_sampler_ffi::*;

const CNF: &str = "p cnf 4 2\n1 2 3 0\n-1 2 4 0\n";

fn last_error() -> String {
    let p = lll_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(text: &str) -> *mut LllCsp {
    let text = CString::new(text).unwrap();
    let mut csp = ptr::null_mut();
    assert_eq!(unsafe { lll_csp_from_dimacs(text.as_ptr(), &mut csp) }, LllStatus::Ok);
    csp
}

fn satisfies(x: &[u32]) -> bool {
    // clauses (x1 | x2 | x3) and (!x1 | x2 | x4), value 1 = true
    (x[0] == 1 || x[1] == 1 || x[2] == 1) && (x[0] == 0 || x[1] == 1 || x[3] == 1)
}

#[test]
fn dimacs_round_trip_and_find() {
    let csp = load(CNF);
    unsafe {
        assert_eq!(lll_csp_num_vars(csp), 4);
        assert_eq!(lll_csp_num_constraints(csp), 2);
        let mut x = [9u32; 4];
        assert_eq!(lll_find(csp, 0.01, 7, x.as_mut_ptr(), x.len()), LllStatus::Ok);
        assert!(satisfies(&x), "{x:?}");
        lll_csp_free(csp);
    }
}

#[test]
fn parse_errors_are_reported() {
    let bad = CString::new("p cnf 2 1\n1 5 0\n").unwrap();
    let mut csp = ptr::null_mut();
    let status = unsafe { lll_csp_from_dimacs(bad.as_ptr(), &mut csp) };
    assert_eq!(status, LllStatus::Parse);
    assert!(csp.is_null());
    assert!(!last_error().is_empty());

    let status = unsafe { lll_csp_from_dimacs(ptr::null(), &mut csp) };
    assert_eq!(status, LllStatus::NullPointer);
}

#[test]
fn identity_sampling_is_deterministic() {
    let csp = load(CNF);
    unsafe {
        let mut scheme = ptr::null_mut();
        assert_eq!(lll_scheme_identity(csp, 0.25, &mut scheme), LllStatus::Ok);
        let mut a = [0u32; 4];
        let mut b = [0u32; 4];
        assert_eq!(lll_sample(csp, scheme, 0.1, 1.0, 42, 3, a.as_mut_ptr(), 4), LllStatus::Ok);
        assert_eq!(lll_sample(csp, scheme, 0.1, 1.0, 42, 3, b.as_mut_ptr(), 4), LllStatus::Ok);
        assert_eq!(a, b);
        assert!(satisfies(&a));

        let mut short = [0u32; 2];
        assert_eq!(
            lll_sample(csp, scheme, 0.1, 1.0, 42, 3, short.as_mut_ptr(), 2),
            LllStatus::BufferTooSmall
        );
        assert_eq!(lll_sample(csp, scheme, 1.5, 1.0, 42, 3, a.as_mut_ptr(), 4), LllStatus::InvalidArgument);
        lll_scheme_free(scheme);
        lll_csp_free(csp);
    }
}

#[test]
fn count_small_instance() {
    let csp = load(CNF);
    unsafe {
        let mut scheme = ptr::null_mut();
        assert_eq!(lll_scheme_identity(csp, 0.25, &mut scheme), LllStatus::Ok);
        let mut est = 0.0;
        assert_eq!(lll_count(csp, scheme, 0.2, 1, &mut est), LllStatus::Ok);
        // 16 assignments, 2 falsify each clause, none falsifies both
        assert!((est - 12.0).abs() < 1e-9, "{est}");
        assert_eq!(lll_count(csp, scheme, 1.5, 1, &mut est), LllStatus::InvalidArgument);
        lll_scheme_free(scheme);
        lll_csp_free(csp);
    }
}

#[test]
fn small_instance_has_no_admissible_construction() {
    let csp = load(CNF);
    unsafe {
        let mut scheme = ptr::null_mut();
        let status = lll_scheme_construct(csp, 0.25, 0.01, 1, &mut scheme);
        assert!(matches!(status, LllStatus::Regime | LllStatus::NotFound), "{status:?}");
        assert!(scheme.is_null());
        lll_csp_free(csp);
    }
}

#[test]
fn check_projection_json_and_scheme_files() {
    let csp = load(CNF);
    unsafe {
        let json = CString::new(r#"{"case":"custom","kappa":40.0,"eta":0.25,"blocks":[[[0],[1]],[[0,1]],[[0,1]],[[0],[1]]]}"#).unwrap();
        let mut scheme = ptr::null_mut();
        assert_eq!(lll_scheme_from_json(csp, json.as_ptr(), &mut scheme), LllStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(lll_check_projection_json(csp, scheme, 0.25, &mut out), LllStatus::Ok);
        let text = CStr::from_ptr(out).to_str().unwrap().to_owned();
        lll_string_free(out);
        let report: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(report["admissible"], false);
        assert_eq!(report["a1"]["pass"], false);
        lll_scheme_free(scheme);

        let wrong = CString::new(r#"{"case":"custom","kappa":40.0,"eta":0.25,"blocks":[[[0],[1]]]}"#).unwrap();
        assert_eq!(lll_scheme_from_json(csp, wrong.as_ptr(), &mut scheme), LllStatus::InvalidArgument);
        lll_csp_free(csp);
    }
}

#[test]
fn hypergraph_coloring() {
    let text = CString::new("0 1\n1 2\n").unwrap();
    let mut csp = ptr::null_mut();
    unsafe {
        assert_eq!(lll_csp_from_hypergraph(text.as_ptr(), 3, &mut csp), LllStatus::Ok);
        assert_eq!(lll_csp_num_vars(csp), 3);
        assert_eq!(lll_csp_num_constraints(csp), 6);
        let mut x = [0u32; 3];
        assert_eq!(lll_find(csp, 0.01, 2, x.as_mut_ptr(), 3), LllStatus::Ok);
        assert!(x[0] != x[1] && x[1] != x[2]);
        lll_csp_free(csp);
        assert_eq!(lll_csp_from_hypergraph(text.as_ptr(), 1, &mut csp), LllStatus::InvalidArgument);
    }
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        lll_csp_free(ptr::null_mut());
        lll_scheme_free(ptr::null_mut());
        lll_string_free(ptr::null_mut());
        assert_eq!(lll_csp_num_vars(ptr::null()), 0);
        let mut x = [0u32; 1];
        assert_eq!(lll_find(ptr::null(), 0.01, 1, x.as_mut_ptr(), 1), LllStatus::NullPointer);
    }
}
