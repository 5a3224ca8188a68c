//! The exported C functions, called directly, checked against the Rust API.

use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use nalgebra::DVector;
use newfluence::experiment::fit_replicate;
use newfluence::influence::loo_betas;
use newfluence::{kendall_tau, ExperimentConfig, Loss};
use newfluence_ffi::*;

struct Instance {
    n: usize,
    p: usize,
    features: Vec<f64>,
    responses: Vec<f64>,
    x0: Vec<f64>,
    y0: f64,
}

/// A synthetic instance for `loss` and one of its test points.
fn instance(n: usize, p: usize, loss: Loss) -> Instance {
    let mut cfg = ExperimentConfig::new(n, p, 0.1, 1, 5);
    cfg.loss = loss;
    let fitted = fit_replicate(&cfg, 0).unwrap();
    let x = fitted.instance.train.features();
    let features = (0..n).flat_map(|i| (0..p).map(move |j| x[(i, j)])).collect();
    Instance {
        n,
        p,
        features,
        responses: fitted.instance.train.responses().as_slice().to_vec(),
        x0: fitted.instance.test.row(0).as_slice().to_vec(),
        y0: fitted.instance.test.responses()[0],
    }
}

fn fit(inst: &Instance, loss: u32) -> *mut NfModel {
    let mut model = ptr::null_mut();
    let status = unsafe {
        nf_model_fit(
            inst.features.as_ptr(),
            inst.n,
            inst.p,
            inst.responses.as_ptr(),
            loss,
            0.1,
            NF_RIDGE_HALF_SQUARED_NORM,
            &mut model,
        )
    };
    assert_eq!(status, NfStatus::Ok, "{}", last_error());
    assert!(!model.is_null());
    model
}

fn last_error() -> String {
    let p = nf_last_error();
    if p.is_null() {
        String::new()
    } else {
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }
}

#[test]
fn fit_matches_the_rust_api() {
    let inst = instance(30, 12, Loss::Logistic);
    let model = fit(&inst, NF_LOSS_LOGISTIC);
    let expected = fit_replicate(&ExperimentConfig::new(30, 12, 0.1, 1, 5), 0).unwrap();

    let (mut n, mut p) = (0, 0);
    assert_eq!(unsafe { nf_model_dims(model, &mut n, &mut p) }, NfStatus::Ok);
    assert_eq!((n, p), (30, 12));

    let mut beta = vec![0.0; 12];
    assert_eq!(
        unsafe { nf_model_beta(model, beta.as_mut_ptr(), 12) },
        NfStatus::Ok
    );
    assert_eq!(DVector::from_vec(beta), expected.beta_hat);

    let mut h = vec![0.0; 30];
    let mut df = 0.0;
    assert_eq!(
        unsafe { nf_model_leverage(model, h.as_mut_ptr(), 30, &mut df) },
        NfStatus::Ok
    );
    assert_eq!(h.as_slice(), expected.engine.hat().h.as_slice());
    assert_eq!(df, expected.engine.hat().df);
    assert!(nf_last_error().is_null());
    unsafe { nf_model_free(model) };
}

#[test]
fn influence_matches_engine_records() {
    let inst = instance(25, 40, Loss::Logistic);
    let model = fit(&inst, NF_LOSS_LOGISTIC);
    let n = inst.n;
    let (mut i_if, mut i_cor, mut i_new, mut i_true) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let status = unsafe {
        nf_model_influence(
            model,
            inst.x0.as_ptr(),
            inst.p,
            inst.y0,
            i_if.as_mut_ptr(),
            i_cor.as_mut_ptr(),
            i_new.as_mut_ptr(),
            n,
        )
    };
    assert_eq!(status, NfStatus::Ok, "{}", last_error());
    for _ in 0..2 {
        // The second call reuses the cached refits.
        let status = unsafe {
            nf_model_true_influence(model, inst.x0.as_ptr(), inst.p, inst.y0, i_true.as_mut_ptr(), n)
        };
        assert_eq!(status, NfStatus::Ok, "{}", last_error());
    }

    let fitted = fit_replicate(&ExperimentConfig::new(25, 40, 0.1, 1, 5), 0).unwrap();
    let loo = loo_betas(&fitted.spec, &fitted.beta_hat, &Default::default()).unwrap();
    let test = newfluence::Dataset::from_row_major(1, inst.p, &inst.x0, &[inst.y0]).unwrap();
    let records = fitted.engine.evaluate(&test, Some(&loo)).unwrap();
    for (i, r) in records.iter().enumerate() {
        assert_eq!(i_if[i], r.i_if);
        assert_eq!(i_cor[i], r.i_if_corrected);
        assert_eq!(i_new[i], r.i_new);
        assert_eq!(i_true[i], r.i_true.unwrap());
    }
    unsafe { nf_model_free(model) };
}

#[test]
fn null_outputs_are_skipped() {
    let inst = instance(15, 5, Loss::Logistic);
    let model = fit(&inst, NF_LOSS_LOGISTIC);
    let mut i_new = vec![0.0; 15];
    let status = unsafe {
        nf_model_influence(
            model,
            inst.x0.as_ptr(),
            5,
            inst.y0,
            ptr::null_mut(),
            ptr::null_mut(),
            i_new.as_mut_ptr(),
            15,
        )
    };
    assert_eq!(status, NfStatus::Ok);
    assert!(i_new.iter().any(|&v| v != 0.0));
    let mut df = 0.0;
    assert_eq!(
        unsafe { nf_model_leverage(model, ptr::null_mut(), 0, &mut df) },
        NfStatus::Ok
    );
    assert!(df > 0.0 && df < 5.0);
    unsafe { nf_model_free(model) };
}

#[test]
fn squared_loss_newton_influence_is_exact() {
    let inst = instance(20, 30, Loss::Squared);
    let model = fit(&inst, NF_LOSS_SQUARED);
    let (mut i_new, mut i_true) = (vec![0.0; 20], vec![0.0; 20]);
    unsafe {
        let x0 = inst.x0.as_ptr();
        let null = ptr::null_mut();
        assert_eq!(
            nf_model_influence(model, x0, 30, inst.y0, null, null, i_new.as_mut_ptr(), 20),
            NfStatus::Ok
        );
        assert_eq!(
            nf_model_true_influence(model, x0, 30, inst.y0, i_true.as_mut_ptr(), 20),
            NfStatus::Ok
        );
        nf_model_free(model);
    }
    for (a, b) in i_new.iter().zip(&i_true) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn errors_report_status_and_message() {
    let inst = instance(10, 4, Loss::Logistic);
    let mut model = ptr::null_mut();
    let fit_with = |loss: u32, lambda: f64, responses: &[f64], model: &mut *mut NfModel| unsafe {
        nf_model_fit(
            inst.features.as_ptr(),
            10,
            4,
            responses.as_ptr(),
            loss,
            lambda,
            NF_RIDGE_SQUARED_NORM,
            model,
        )
    };

    assert_eq!(
        fit_with(NF_LOSS_LOGISTIC, -1.0, &inst.responses, &mut model),
        NfStatus::InvalidArgument
    );
    assert!(model.is_null());
    assert!(last_error().contains("lambda"), "{}", last_error());

    assert_eq!(
        fit_with(9, 0.1, &inst.responses, &mut model),
        NfStatus::InvalidArgument
    );
    assert!(last_error().contains("loss"));

    let mut bad = inst.responses.clone();
    bad[3] = 0.5;
    assert_eq!(
        fit_with(NF_LOSS_LOGISTIC, 0.1, &bad, &mut model),
        NfStatus::Domain
    );
    assert!(model.is_null());

    let status = unsafe {
        nf_model_fit(
            ptr::null(),
            10,
            4,
            inst.responses.as_ptr(),
            NF_LOSS_LOGISTIC,
            0.1,
            0,
            &mut model,
        )
    };
    assert_eq!(status, NfStatus::NullPointer);
    let status = unsafe {
        nf_model_fit(
            inst.features.as_ptr(),
            10,
            4,
            inst.responses.as_ptr(),
            1,
            0.1,
            0,
            ptr::null_mut(),
        )
    };
    assert_eq!(status, NfStatus::NullPointer);

    let (mut n, mut p) = (0, 0);
    assert_eq!(
        unsafe { nf_model_dims(ptr::null(), &mut n, &mut p) },
        NfStatus::NullPointer
    );

    let model = fit(&inst, NF_LOSS_LOGISTIC);
    let mut beta = vec![0.0; 3];
    assert_eq!(
        unsafe { nf_model_beta(model, beta.as_mut_ptr(), 3) },
        NfStatus::InvalidArgument
    );
    let mut out = vec![0.0; 10];
    let status =
        unsafe { nf_model_true_influence(model, inst.x0.as_ptr(), 3, inst.y0, out.as_mut_ptr(), 10) };
    assert_eq!(status, NfStatus::InvalidArgument);
    let status = unsafe { nf_model_true_influence(model, inst.x0.as_ptr(), 4, 2.0, out.as_mut_ptr(), 10) };
    assert_eq!(status, NfStatus::Domain);
    unsafe { nf_model_free(model) };
    unsafe { nf_model_free(ptr::null_mut()) };
}

#[test]
fn kendall_tau_matches_rust() {
    let a = [0.3, -1.0, 2.5, 2.5, 0.0, 7.0];
    let b = [1.0, 0.0, 3.0, 2.0, 2.0, 5.0];
    let mut tau = 0.0;
    assert_eq!(
        unsafe { nf_kendall_tau(a.as_ptr(), b.as_ptr(), 6, &mut tau) },
        NfStatus::Ok
    );
    assert_eq!(tau, kendall_tau(&a, &b).unwrap());
    let status = unsafe { nf_kendall_tau(a.as_ptr(), b.as_ptr(), 1, &mut tau) };
    assert_eq!(status, NfStatus::InvalidArgument);
    assert!(!last_error().is_empty());
}

#[test]
fn status_strings_are_static_and_total() {
    let name = |s: i32| unsafe { CStr::from_ptr(nf_status_string(s)) }.to_str().unwrap();
    assert_eq!(name(NfStatus::Ok as i32), "ok");
    assert_eq!(name(NfStatus::DegenerateLeverage as i32), "degenerate leverage");
    assert_eq!(name(NfStatus::Panic as i32), "internal panic");
    assert_eq!(name(-4), "unknown status");
}

#[test]
fn generated_header_compiles_as_c99() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("newfluence.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in [
        "nf_model_fit",
        "nf_model_free",
        "nf_model_dims",
        "nf_model_beta",
        "nf_model_leverage",
        "nf_model_influence",
        "nf_model_true_influence",
        "nf_kendall_tau",
        "nf_last_error",
        "nf_status_string",
        "typedef struct NfModel NfModel",
        "NF_STATUS_OK = 0",
    ] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
    let compiler = std::env::var("CC").unwrap_or_else(|_| "cc".to_owned());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use_header.c");
    std::fs::write(
        &src,
        "#include \"newfluence.h\"\nint main(void) { NfModel *m = 0; nf_model_free(m); return NF_STATUS_OK; }\n",
    )
    .unwrap();
    let out = match Command::new(&compiler)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    {
        Ok(out) => out,
        Err(e) => {
            eprintln!("skipping C compile check: cannot run {compiler}: {e}");
            return;
        }
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

/// Directory holding the library artifacts: the parent of this test binary's `deps/`.
fn artifact_dir() -> std::path::PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "newfluence.h"

int main(void) {
    /* y = x1 - x2 + noise, 8 points, 2 features */
    const double x[16] = {1, 0, 0, 1, 1, 1, 2, 0, 0, 2, -1, 1, 1, -1, 0.5, 0.5};
    const double y[8] = {1.1, -0.9, 0.1, 2.0, -2.1, -1.9, 2.1, 0.05};
    NfModel *model = NULL;
    NfStatus s = nf_model_fit(x, 8, 2, y, NF_LOSS_SQUARED, 0.5, NF_RIDGE_HALF_SQUARED_NORM, &model);
    if (s != NF_STATUS_OK) { fprintf(stderr, "%s\n", nf_last_error()); return 1; }
    double beta[2], h[8], df, i_new[8], i_true[8];
    const double x0[2] = {1.0, 0.5};
    if (nf_model_beta(model, beta, 2) || nf_model_leverage(model, h, 8, &df)) return 2;
    if (nf_model_influence(model, x0, 2, 0.4, NULL, NULL, i_new, 8)) return 3;
    if (nf_model_true_influence(model, x0, 2, 0.4, i_true, 8)) return 4;
    double worst = 0;
    for (int i = 0; i < 8; i++) {
        double d = i_new[i] - i_true[i];
        if (d < 0) d = -d;
        if (d > worst) worst = d;
    }
    if (nf_model_beta(model, beta, 3) != NF_STATUS_INVALID_ARGUMENT || nf_last_error() == NULL) return 5;
    nf_model_free(model);
    printf("%.6f %.6f %.6f %.3e %s\n", beta[0], beta[1], df, worst, nf_status_string(NF_STATUS_OK));
    return 0;
}
"#;

#[test]
fn c_program_links_against_the_static_library() {
    let lib = artifact_dir().join("libnewfluence_ffi.a");
    if !lib.exists() {
        panic!("static library not found at {}", lib.display());
    }
    let compiler = std::env::var("CC").unwrap_or_else(|_| "cc".to_owned());
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("demo.c");
    let exe = dir.path().join("demo");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let build = match Command::new(&compiler)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
    {
        Ok(out) => out,
        Err(e) => {
            eprintln!("skipping C link check: cannot run {compiler}: {e}");
            return;
        }
    };
    assert!(
        build.status.success(),
        "{}",
        String::from_utf8_lossy(&build.stderr)
    );
    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "exit {:?}: {}",
        run.status,
        String::from_utf8_lossy(&run.stderr)
    );
    let stdout = String::from_utf8(run.stdout).unwrap();
    let fields: Vec<&str> = stdout.split_whitespace().collect();
    assert_eq!(fields.len(), 5, "{stdout}");
    let worst: f64 = fields[3].parse().unwrap();
    assert!(worst < 1e-10, "{stdout}");
    assert_eq!(fields[4], "ok");
}
