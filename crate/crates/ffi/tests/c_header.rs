//! Compiles and runs a C program against the generated header and the
//! static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "zcp_har.h"

int main(void) {
    char *cnn = NULL, *lstm = NULL;
    if (zcp_count_search_space(NULL, &cnn, &lstm) != ZCP_STATUS_OK) return 1;
    if (strcmp(lstm, "1975391145") != 0) return 2;
    zcp_string_free(cnn);
    zcp_string_free(lstm);

    ZcpArchList *list = NULL;
    if (zcp_sample_architectures(NULL, 7, &list) != ZCP_STATUS_OK) return 3;
    if (zcp_arch_list_len(list) != 1500) return 4;
    ZcpArchSpec *spec = NULL;
    if (zcp_arch_list_get(list, 1499, &spec) != ZCP_STATUS_OK) return 5;
    char *hash = NULL;
    if (zcp_arch_hash(spec, &hash) != ZCP_STATUS_OK || strlen(hash) != 64) return 6;
    zcp_string_free(hash);

    ZcpArchSpec *bad = NULL;
    if (zcp_arch_from_text("not json", &bad) != ZCP_STATUS_PARSE_ERROR) return 7;
    if (zcp_last_error_message() == NULL) return 8;

    double x[3] = {1, 2, 3}, y[3] = {1, 3, 2}, rho = 0;
    if (zcp_spearman(x, y, 3, &rho) != ZCP_STATUS_OK || rho < 0.4999999 || rho > 0.5000001) return 9;

    zcp_arch_free(spec);
    zcp_arch_list_free(list);
    printf("ok\n");
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps/
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

fn cc() -> Option<&'static str> {
    ["cc", "clang", "gcc"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
}

#[test]
fn c_program_links_and_runs() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("zcp_har.h").is_file(), "header not generated");
    let lib = target_dir().join("libzcp_har_ffi.a");
    assert!(lib.is_file(), "static library missing at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap();
    assert!(out.status.success(), "compile failed:\n{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "C program exited with {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
