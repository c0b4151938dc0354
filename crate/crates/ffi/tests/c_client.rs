//! Compiles a C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "lll_sampler.h"

int main(void) {
    const char *cnf = "p cnf 3 1\n1 2 3 0\n";
    LllCsp *csp = NULL;
    if (lll_csp_from_dimacs(cnf, &csp) != LLL_STATUS_OK) return 10;
    LllScheme *scheme = NULL;
    if (lll_scheme_identity(csp, 0.25, &scheme) != LLL_STATUS_OK) return 11;
    uint32_t x[3];
    if (lll_sample(csp, scheme, 0.1, 1.0, 5, 0, x, 3) != LLL_STATUS_OK) return 12;
    if (x[0] == 0 && x[1] == 0 && x[2] == 0) return 13;
    char *json = NULL;
    if (lll_check_projection_json(csp, scheme, 0.25, &json) != LLL_STATUS_OK) return 14;
    if (strstr(json, "\"admissible\"") == NULL) return 15;
    lll_string_free(json);
    if (lll_csp_from_dimacs("p cnf x", &csp) != LLL_STATUS_PARSE) return 16;
    if (lll_last_error_message() == NULL) return 17;
    lll_scheme_free(scheme);
    lll_csp_free(csp);
    printf("%u %u %u\n", x[0], x[1], x[2]);
    return 0;
}
"#;

fn find_compiler() -> Option<String> {
    ["cc", "clang", "gcc"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .map(String::from)
}

#[test]
fn c_program_links_and_runs() {
    let Some(cc) = find_compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("liblll_sampler_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    let bin = dir.path().join("client");
    std::fs::write(&src, PROGRAM).unwrap();

    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "compiling the C client failed");

    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "client exited with {:?}", out.status.code());
    let values: Vec<u32> = String::from_utf8(out.stdout)
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    assert_eq!(values.len(), 3);
    assert!(values.contains(&1));
}
