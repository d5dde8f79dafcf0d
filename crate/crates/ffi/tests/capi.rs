use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use num_complex::Complex64;
use passive_admittance::control::{admittance_tf_passive, admittance_tf_standard, LinearParams};
use passive_admittance_ffi::*;

const SCENARIO: &str = r#"
name = "capi"
[plant]
kind = "point-mass"
mass_kg = 6.0
[controller]
kind = "passive"
nominal_inertia = 1.5
nominal_damping = 2.0
eps = 0.1
kp_per_s = 10.0
[[human.segments]]
kind = "sinusoid"
start_s = 0.0
end_s = 2.0
amplitude = 5.0
frequency_hz = 0.5
[sim]
duration_s = 2.0
"#;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(padm_last_error()) }.to_str().unwrap().to_owned()
}

fn load(text: &str) -> *mut PadmScenario {
    let mut s = ptr::null_mut();
    let status = unsafe { padm_scenario_from_str(c(text).as_ptr(), &mut s) };
    assert_eq!(status, PadmStatus::Ok, "{}", last_error());
    s
}

fn run(s: *const PadmScenario) -> (PadmStatus, *mut PadmTrace) {
    let mut t = ptr::null_mut();
    let status = unsafe { padm_run(s, &mut t) };
    (status, t)
}

fn column(t: *const PadmTrace, name: &str) -> Vec<f64> {
    let name = c(name);
    let mut n = 0;
    unsafe {
        assert_eq!(padm_trace_column(t, name.as_ptr(), ptr::null_mut(), 0, &mut n), PadmStatus::Ok);
        let mut buf = vec![0.0; n];
        assert_eq!(padm_trace_column(t, name.as_ptr(), buf.as_mut_ptr(), n, &mut n), PadmStatus::Ok);
        buf
    }
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(padm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn parse_error_sets_message_and_clears_on_success() {
    let mut s = ptr::null_mut();
    let status = unsafe { padm_scenario_from_str(c("name = \n[plant").as_ptr(), &mut s) };
    assert_eq!(status, PadmStatus::Validation);
    assert!(s.is_null());
    assert!(!last_error().is_empty());
    let s = load(SCENARIO);
    assert!(last_error().is_empty());
    unsafe { padm_scenario_free(s) };
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        assert_eq!(padm_scenario_from_str(ptr::null(), &mut ptr::null_mut()), PadmStatus::InvalidArgument);
        assert_eq!(padm_scenario_from_str(c(SCENARIO).as_ptr(), ptr::null_mut()), PadmStatus::InvalidArgument);
        assert_eq!(padm_run(ptr::null(), &mut ptr::null_mut()), PadmStatus::InvalidArgument);
        assert_eq!(padm_trace_len(ptr::null()), 0);
        assert_eq!(padm_trace_dim(ptr::null()), 0);
        let mut x = 0.0;
        assert_eq!(padm_trace_l2_gain(ptr::null(), &mut x), PadmStatus::InvalidArgument);
        assert_eq!(
            padm_admittance_tf_passive(1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, ptr::null_mut(), &mut x),
            PadmStatus::InvalidArgument
        );
        padm_scenario_free(ptr::null_mut());
        padm_trace_free(ptr::null_mut());
    }
}

#[test]
fn set_param_validates_and_keeps_scenario_on_failure() {
    let s = load(SCENARIO);
    unsafe {
        assert_eq!(padm_scenario_set_param(s, c("bogus").as_ptr(), 1.0), PadmStatus::Validation);
        assert_eq!(padm_scenario_set_param(s, c("eps").as_ptr(), -1.0), PadmStatus::Validation);
        let (_, base) = run(s);
        assert_eq!(padm_scenario_set_param(s, c("eps").as_ptr(), 0.05), PadmStatus::Ok);
        let (_, tight) = run(s);
        let (mut a, mut b) = (0.0, 0.0);
        assert_eq!(padm_trace_inf_norm_error(base, 0, &mut a), PadmStatus::Ok);
        assert_eq!(padm_trace_inf_norm_error(tight, 0, &mut b), PadmStatus::Ok);
        // error scales with eps, so halving eps roughly halves it
        assert!((1.6..2.4).contains(&(a / b)), "{a} vs {b}");
        padm_trace_free(base);
        padm_trace_free(tight);
        padm_scenario_free(s);
    }
}

#[test]
fn trace_columns_and_metrics() {
    let s = load(SCENARIO);
    let (status, t) = run(s);
    assert_eq!(status, PadmStatus::Ok);
    unsafe {
        assert_eq!(padm_trace_len(t), 1001);
        assert_eq!(padm_trace_dim(t), 1);
        let (q, qn, time) = (column(t, "q[0]"), column(t, "qn[0]"), column(t, "t"));
        assert_eq!(q.len(), 1001);
        assert!((time[1000] - 2.0).abs() < 1e-9);
        let worst = q.iter().zip(&qn).map(|(a, b)| (b - a).abs()).fold(0.0, f64::max);
        let mut e = 0.0;
        assert_eq!(padm_trace_inf_norm_error(t, 0, &mut e), PadmStatus::Ok);
        assert_eq!(e, worst);
        assert_eq!(padm_trace_inf_norm_error(t, 1, &mut e), PadmStatus::InvalidArgument);

        let mut short = vec![0.0; 10];
        let mut n = 0;
        let st = padm_trace_column(t, c("q[0]").as_ptr(), short.as_mut_ptr(), 10, &mut n);
        assert_eq!(st, PadmStatus::InvalidArgument);
        assert_eq!(n, 1001);
        let st = padm_trace_column(t, c("nope").as_ptr(), ptr::null_mut(), 0, &mut n);
        assert_eq!(st, PadmStatus::InvalidArgument);

        let mut gain = 0.0;
        assert_eq!(padm_trace_l2_gain(t, &mut gain), PadmStatus::Ok);
        assert!(gain.is_finite() && gain > 0.0);
        padm_trace_free(t);
        padm_scenario_free(s);
    }
}

#[test]
fn csv_round_trips_through_core_reader() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("capi.csv");
    let s = load(SCENARIO);
    let (_, t) = run(s);
    unsafe {
        assert_eq!(padm_trace_write_csv(t, c(path.to_str().unwrap()).as_ptr()), PadmStatus::Ok);
        let back = passive_admittance::trace_csv::read_trace(std::fs::File::open(&path).unwrap()).unwrap();
        assert_eq!(back.len(), padm_trace_len(t));
        let missing = dir.path().join("no/such/dir.csv");
        assert_eq!(padm_trace_write_csv(t, c(missing.to_str().unwrap()).as_ptr()), PadmStatus::Io);
        padm_trace_free(t);
        padm_scenario_free(s);
    }
}

#[test]
fn divergence_returns_partial_trace() {
    let text = SCENARIO.replace("mass_kg = 6.0", "mass_kg = 0.01").replace("eps = 0.1", "gain_k = 10000.0");
    let s = load(&text);
    let (status, t) = run(s);
    assert_eq!(status, PadmStatus::Diverged);
    assert!(last_error().contains("diverged"));
    unsafe {
        let n = padm_trace_len(t);
        assert!(n > 0 && n < 1001);
        padm_trace_free(t);
        padm_scenario_free(s);
    }
}

#[test]
fn scaling_fit_on_halving_sequence() {
    let eps = [0.133, 0.067, 0.033];
    let err = [0.0532, 0.0268, 0.0132];
    let (mut ratios, mut slope) = ([0.0; 2], 0.0);
    let st = unsafe { padm_scaling_fit(eps.as_ptr(), err.as_ptr(), 3, ratios.as_mut_ptr(), &mut slope) };
    assert_eq!(st, PadmStatus::Ok);
    assert!((ratios[0] - 0.0532 / 0.0268).abs() < 1e-12);
    assert!((slope - 1.0).abs() < 0.02);
    let st = unsafe { padm_scaling_fit(eps.as_ptr(), err.as_ptr(), 1, ratios.as_mut_ptr(), &mut slope) };
    assert_eq!(st, PadmStatus::Analysis);
}

#[test]
fn transfer_functions_match_core() {
    let p = LinearParams { plant_mass: 5.0, nominal_mass: 1.0, nominal_damping: 1.0, k: 30.0, kp: 10.0 };
    for s in [Complex64::new(0.0, 0.3), Complex64::new(0.0, 4.0), Complex64::new(-0.2, 1.0)] {
        let (mut re, mut im) = (0.0, 0.0);
        unsafe {
            let st = padm_admittance_tf_standard(5.0, 1.0, 1.0, 30.0, 10.0, s.re, s.im, &mut re, &mut im);
            assert_eq!(st, PadmStatus::Ok);
            assert_eq!(Complex64::new(re, im), admittance_tf_standard(&p, s).unwrap());
            let st = padm_admittance_tf_passive(5.0, 1.0, 1.0, 30.0, 10.0, s.re, s.im, &mut re, &mut im);
            assert_eq!(st, PadmStatus::Ok);
            assert_eq!(Complex64::new(re, im), admittance_tf_passive(&p, s).unwrap());
        }
    }
}

// Builds the C smoke program against the generated header and the static library.
#[test]
fn c_program_links_against_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = lib_dir.join("libpassive_admittance_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library at {} or no C compiler", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
