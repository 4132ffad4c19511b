use std::ffi::{c_char, CStr};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use geoint_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe {
        gi_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn rigid_body_handle_keeps_casimir() {
    let inertia = [1.0, 2.0, 3.0];
    let mu0 = [1.0, 0.5, 0.25];
    let mut h: *mut GiRigidBody = ptr::null_mut();
    unsafe {
        assert_eq!(
            gi_rigid_body_new(inertia.as_ptr(), mu0.as_ptr(), GiRetraction::Cayley, GiMethod::Strang, &mut h),
            GiStatus::Ok
        );
        assert_eq!(gi_rigid_body_step(h, 0.01, 1000), GiStatus::Ok);
        let (mut e, mut c, mut t) = (0.0, 0.0, 0.0);
        assert_eq!(gi_rigid_body_invariants(h, &mut e, &mut c, &mut t), GiStatus::Ok);
        assert!((c - 1.3125).abs() <= 1e-13);
        assert!((t - 10.0).abs() <= 1e-9);
        let mut r = [0.0; 9];
        assert_eq!(gi_rigid_body_rotation(h, r.as_mut_ptr()), GiStatus::Ok);
        let det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) + r[2] * (r[3] * r[7] - r[4] * r[6]);
        assert!((det - 1.0).abs() <= 1e-10);
        gi_rigid_body_free(h);
    }
}

#[test]
fn heavy_top_equilibrium_and_casimirs() {
    let inertia = [1.0, 2.0, 3.0];
    let axis = [0.0, 0.0, 1.0];
    let mut h: *mut GiHeavyTop = ptr::null_mut();
    unsafe {
        assert_eq!(
            gi_heavy_top_new(inertia.as_ptr(), 1.0, 9.81, 0.1, axis.as_ptr(), axis.as_ptr(), [0.0; 3].as_ptr(), GiRetraction::Cayley, GiMethod::Base, &mut h),
            GiStatus::Ok
        );
        assert_eq!(gi_heavy_top_step(h, 0.1, 10), GiStatus::Ok);
        let (mut q, mut mu) = ([0.0; 3], [0.0; 3]);
        assert_eq!(gi_heavy_top_state(h, q.as_mut_ptr(), mu.as_mut_ptr()), GiStatus::Ok);
        assert_eq!(q, [0.0, 0.0, 1.0]);
        assert_eq!(mu, [0.0; 3]);
        let mut cas = [0.0; 2];
        assert_eq!(gi_heavy_top_invariants(h, ptr::null_mut(), cas.as_mut_ptr(), ptr::null_mut()), GiStatus::Ok);
        assert_eq!(cas, [1.0, 0.0]);
        gi_heavy_top_free(h);
    }
}

#[test]
fn errors_are_reported() {
    let mut h: *mut GiHeavyTop = ptr::null_mut();
    let bad_axis = [0.0, 0.0, 2.0];
    unsafe {
        let s = gi_heavy_top_new([1.0; 3].as_ptr(), 1.0, 1.0, 1.0, bad_axis.as_ptr(), [0.0, 0.0, 1.0].as_ptr(), [0.0; 3].as_ptr(), GiRetraction::Exp, GiMethod::Base, &mut h);
        assert_eq!(s, GiStatus::InvalidArgument);
        assert!(h.is_null());
        assert!(last_error().contains("unit vector"));
        let mut rb: *mut GiRigidBody = ptr::null_mut();
        assert_eq!(gi_rigid_body_new(ptr::null(), [0.0; 3].as_ptr(), GiRetraction::Exp, GiMethod::Base, &mut rb), GiStatus::NullPointer);
        assert!(last_error().contains("null pointer"));
        assert_eq!(gi_rigid_body_step(ptr::null_mut(), 0.1, 1), GiStatus::NullPointer);
        let needed = gi_last_error_message(ptr::null_mut(), 0);
        assert!(needed > 0);
        gi_rigid_body_free(ptr::null_mut());
        let v = CStr::from_ptr(gi_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/geoint.h")).unwrap();
    for name in [
        "gi_rigid_body_new", "gi_rigid_body_step", "gi_rigid_body_momentum", "gi_rigid_body_rotation",
        "gi_rigid_body_invariants", "gi_rigid_body_free", "gi_heavy_top_new", "gi_heavy_top_step",
        "gi_heavy_top_state", "gi_heavy_top_invariants", "gi_heavy_top_free", "gi_last_error_message",
        "gi_version", "GI_STATUS_OK", "typedef struct GiRigidBody GiRigidBody",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libgeoint_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile_dir();
    let bin = dir.join("smoke");
    let status = Command::new(cc)
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

fn which_cc() -> Result<String, ()> {
    for c in ["cc", "gcc", "clang"] {
        if Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(c.to_string());
        }
    }
    Err(())
}

fn tempfile_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("geoint-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
