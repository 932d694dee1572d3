use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use coulombflow_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0u8; 512];
    let n = unsafe { cf_last_error_message(buf.as_mut_ptr().cast::<c_char>(), buf.len()) };
    buf.truncate(n.min(511));
    String::from_utf8(buf).unwrap()
}

fn potential(spec: &str) -> *mut CfPotential {
    let spec = CString::new(spec).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { cf_potential_new(spec.as_ptr(), &mut p) }, CfStatus::Ok, "{}", last_error());
    p
}

fn semicircle(l: f64, n: usize) -> (*mut CfPotential, *mut CfDensity) {
    let v = potential("quadratic:theta=0.5");
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { cf_density_equilibrium(v, -l, l, n, &mut d) }, CfStatus::Ok);
    (v, d)
}

fn values(d: *const CfDensity) -> Vec<f64> {
    let mut n = 0;
    assert_eq!(unsafe { cf_density_len(d, &mut n) }, CfStatus::Ok);
    let mut out = vec![0.0; n];
    let mut written = 0;
    assert_eq!(unsafe { cf_density_values(d, out.as_mut_ptr(), n, &mut written) }, CfStatus::Ok);
    assert_eq!(written, n);
    out
}

#[test]
fn potential_evaluation() {
    let v = potential("quartic:c=1");
    let (mut val, mut dv) = (0.0, 0.0);
    assert_eq!(unsafe { cf_potential_eval(v, 2.0, &mut val, &mut dv) }, CfStatus::Ok);
    // V = x⁴/4 + c x²/2
    assert!((val - (4.0 + 2.0)).abs() < 1e-12);
    assert!((dv - (8.0 + 2.0)).abs() < 1e-12);
    unsafe { cf_potential_free(v) };
}

#[test]
fn hilbert_of_semicircle_is_half_identity() {
    let (v, d) = semicircle(2.5, 1024);
    let mut h = vec![0.0; 1024];
    assert_eq!(unsafe { cf_hilbert(d, h.as_mut_ptr(), h.len(), ptr::null_mut()) }, CfStatus::Ok);
    let (l, n) = (2.5, 1024);
    let step = 2.0 * l / n as f64;
    let mut worst: f64 = 0.0;
    for (i, hv) in h.iter().enumerate() {
        let x = -l + (i as f64 + 0.5) * step;
        if x.abs() < 1.8 {
            worst = worst.max((hv - x / 2.0).abs());
        }
    }
    assert!(worst < 5e-3, "sup error {worst}");
    unsafe {
        cf_density_free(d);
        cf_potential_free(v);
    }
}

#[test]
fn stieltjes_matches_semicircle_closed_form() {
    let (v, d) = semicircle(2.5, 2048);
    for (re, im) in [(0.3, 1.0), (-1.0, 0.5), (3.0, 0.2)] {
        let z = num_complex::Complex64::new(re, im);
        let exact = (z - (z - 2.0).sqrt() * (z + 2.0).sqrt()) / 2.0;
        let (mut gr, mut gi) = (0.0, 0.0);
        assert_eq!(unsafe { cf_stieltjes(d, re, im, &mut gr, &mut gi) }, CfStatus::Ok);
        assert!((gr - exact.re).abs() < 2e-3 && (gi - exact.im).abs() < 2e-3, "z={z}: {gr}+{gi}i vs {exact}");
    }
    unsafe {
        cf_density_free(d);
        cf_potential_free(v);
    }
}

#[test]
fn equilibrium_is_stationary_and_minimizes_entropy() {
    let (v, d) = semicircle(3.0, 1024);
    let mut fisher = 1.0;
    assert_eq!(unsafe { cf_free_fisher(d, v, &mut fisher) }, CfStatus::Ok);
    assert!(fisher < 1e-6, "fisher {fisher}");
    let mut sigma = 0.0;
    assert_eq!(unsafe { cf_free_entropy(d, v, &mut sigma) }, CfStatus::Ok);
    // Σ_V(μ_V) = 3/4 for V = x²/2
    assert!((sigma - 0.75).abs() < 2e-3, "entropy {sigma}");

    let mut next = ptr::null_mut();
    assert_eq!(unsafe { cf_pde_step(d, v, 1e-3, &mut next) }, CfStatus::Ok);
    let mut w = 1.0;
    assert_eq!(unsafe { cf_wasserstein(d, next, 2.0, &mut w) }, CfStatus::Ok);
    assert!(w < 1e-5, "W2 after one step {w}");
    let mass: f64 = values(next).iter().sum::<f64>() * 6.0 / 1024.0;
    assert!((mass - 1.0).abs() < 1e-12);
    unsafe {
        cf_density_free(next);
        cf_density_free(d);
        cf_potential_free(v);
    }
}

#[test]
fn density_from_values_is_normalized_and_translation_costs_its_shift() {
    let n = 400;
    let bump = |c: f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let x = -4.0 + (i as f64 + 0.5) * 8.0 / n as f64;
                (-(x - c) * (x - c) / 0.18).exp()
            })
            .collect()
    };
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    let (va, vb) = (bump(-0.5), bump(0.5));
    assert_eq!(unsafe { cf_density_new(-4.0, 4.0, n, va.as_ptr(), &mut a) }, CfStatus::Ok);
    assert_eq!(unsafe { cf_density_new(-4.0, 4.0, n, vb.as_ptr(), &mut b) }, CfStatus::Ok);
    let mass: f64 = values(a).iter().sum::<f64>() * 8.0 / n as f64;
    assert!((mass - 1.0).abs() < 1e-12);
    for p in [1.0, 2.0] {
        let mut w = 0.0;
        assert_eq!(unsafe { cf_wasserstein(a, b, p, &mut w) }, CfStatus::Ok);
        assert!((w - 1.0).abs() < 1e-3, "W{p} = {w}");
    }
    let mut w = 0.0;
    assert_eq!(unsafe { cf_wasserstein(a, b, 3.0, &mut w) }, CfStatus::InvalidArgument);
    unsafe {
        cf_density_free(a);
        cf_density_free(b);
    }
}

#[test]
fn sde_ensemble_is_seeded_and_tracks_moment_law() {
    let v = potential("quadratic:theta=0.5");
    let init = CString::new("semicircle:radius=2").unwrap();
    let run = |seed| {
        let mut e = ptr::null_mut();
        let s = unsafe { cf_sde_run(v, init.as_ptr(), 16, 2.0, 20, 0.5, 0.0, seed, &mut e) };
        assert_eq!(s, CfStatus::Ok, "{}", last_error());
        e
    };
    let (e1, e2) = (run(7), run(7));
    let mut k = 0;
    assert_eq!(unsafe { cf_ensemble_snapshots(e1, &mut k) }, CfStatus::Ok);
    assert_eq!(k, 2);

    let mut needed = 0;
    let s = unsafe { cf_ensemble_atoms(e1, 1, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(s, CfStatus::BufferTooSmall);
    assert_eq!(needed, 16 * 20);
    let mut a1 = vec![0.0; needed];
    let mut a2 = vec![0.0; needed];
    unsafe {
        assert_eq!(cf_ensemble_atoms(e1, 1, a1.as_mut_ptr(), needed, ptr::null_mut()), CfStatus::Ok);
        assert_eq!(cf_ensemble_atoms(e2, 1, a2.as_mut_ptr(), needed, ptr::null_mut()), CfStatus::Ok);
    }
    assert_eq!(a1, a2);
    assert!(a1.windows(2).all(|w| w[0] <= w[1]));

    // m2 starts at 1 and stays at 1 + (2/β − 1)/N = 1 on the semicircle for β = 2
    let mut m2 = 0.0;
    assert_eq!(unsafe { cf_ensemble_m2(e1, 1, &mut m2) }, CfStatus::Ok);
    assert!((m2 - 1.0).abs() < 0.1, "m2 {m2}");
    assert_eq!(unsafe { cf_ensemble_m2(e1, 5, &mut m2) }, CfStatus::InvalidArgument);
    unsafe {
        cf_ensemble_free(e1);
        cf_ensemble_free(e2);
        cf_potential_free(v);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { cf_potential_new(ptr::null(), &mut p) }, CfStatus::NullPointer);
    assert!(last_error().contains("spec"));
    let bad = CString::new("quadratic:theta=oops").unwrap();
    assert_ne!(unsafe { cf_potential_new(bad.as_ptr(), &mut p) }, CfStatus::Ok);
    assert!(p.is_null());
    assert!(last_error().contains("numeric"), "{}", last_error());

    let mut d = ptr::null_mut();
    let zeros = [0.0; 8];
    assert_eq!(unsafe { cf_density_new(-1.0, 1.0, 8, zeros.as_ptr(), &mut d) }, CfStatus::InvalidArgument);
    assert_eq!(unsafe { cf_density_new(1.0, -1.0, 8, zeros.as_ptr(), &mut d) }, CfStatus::InvalidArgument);
    let mut w = 0.0;
    assert_eq!(unsafe { cf_wasserstein(ptr::null(), ptr::null(), 2.0, &mut w) }, CfStatus::NullPointer);

    // truncated copy keeps the NUL terminator and reports the full length
    let mut small = [1 as c_char; 4];
    let full = unsafe { cf_last_error_message(small.as_mut_ptr(), small.len()) };
    assert!(full > 3);
    assert_eq!(small[3], 0);

    unsafe {
        cf_potential_free(ptr::null_mut());
        cf_density_free(ptr::null_mut());
        cf_ensemble_free(ptr::null_mut());
    }
}

#[test]
fn c_program_links_against_static_library() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().unwrap().join("libcoulombflow_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let out_dir = tempfile::tempdir().unwrap();
    let bin = out_dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
