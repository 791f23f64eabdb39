//! Compiles a C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "pvgadf.h"

int main(void) {
    PvgArray *a = pvg_array_new(true);
    double v[100], i[100];
    if (pvg_array_iv_curve(a, 3, 7, 800.0, 310.0, 100, v, i) != PVG_STATUS_OK) return 1;
    float f[PVG_FEATURE_LEN];
    if (pvg_feature(a, v, i, 100, 800.0, 310.0, PVG_STRATEGY_ISC_VOC, 0, 0, f, PVG_FEATURE_LEN) != PVG_STATUS_OK) return 2;
    if (pvg_array_iv_curve(NULL, 0, 0, 800.0, 310.0, 100, v, i) != PVG_STATUS_NULL_POINTER) return 3;
    if (strstr(pvg_last_error_message(), "null") == NULL) return 4;
    if (strcmp(pvg_class_name(3), "OC") != 0) return 5;
    pvg_array_free(a);
    printf("isc=%.3f\n", i[0]);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let target = exe.parent().and_then(|p| p.parent()).unwrap();
    let lib = target.join("libpvgadf_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .expect("C compiler available");
    assert!(status.success(), "C build failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    // Open string: half the healthy 2 x 4.7 A at 800 W/m2 and 310 K.
    let isc: f64 = text.trim().strip_prefix("isc=").unwrap().parse().unwrap();
    assert!((isc - 3.78).abs() < 0.05, "{text}");
}
