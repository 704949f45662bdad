//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "mps_capacity.h"

int main(void) {
    MpscapModel *m = NULL;
    if (mpscap_model_mg(0.5, &m) != MPSCAP_STATUS_OK) return 10;
    MpscapCapacity c;
    if (mpscap_capacity_estimate(m, 4, 1e-14, &c) != MPSCAP_STATUS_OK) return 11;
    if (fabs(c.closed_form - 0.5) > 1e-12) return 12;
    if (!(c.channel_path_difference < 1e-9)) return 13;
    MpscapDistribution *d = NULL;
    if (mpscap_distribution_enumerate(m, 2, 0.0, &d) != MPSCAP_STATUS_OK) return 14;
    if (mpscap_distribution_len(d) != 4) return 15;
    double h = 0.0;
    if (mpscap_distribution_summary(d, &h, NULL, NULL) != MPSCAP_STATUS_OK) return 16;
    if (fabs(h - 1.811278124459133) > 1e-12) return 17;
    mpscap_distribution_free(d);
    MpscapModel *bad = NULL;
    if (mpscap_model_mg(2.0, &bad) != MPSCAP_STATUS_DOMAIN) return 18;
    char msg[256];
    if (mpscap_last_error_message(msg, sizeof msg) == 0) return 19;
    mpscap_model_free(m);
    printf("ok %.6f\n", c.estimate_cond);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests/<name> binaries live in <target>/<profile>/deps
    let exe = std::env::current_exe().expect("test binary path");
    exe.parent().and_then(|p| p.parent()).expect("profile dir").to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    assert!(include.join("mps_capacity.h").exists(), "header not generated");
    let lib = target_dir().join("libmps_capacity_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
