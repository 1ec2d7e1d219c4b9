//! End-to-end check of the C surface: compile a small C program against the
//! generated header and the static library, run it, and check its output.

use std::path::PathBuf;
use std::process::Command;

const C_PROGRAM: &str = r#"
#include "rsnsim.h"
#include <stdio.h>
#include <string.h>

static const char *NETWORK =
    "[network]\n"
    "incidence = [[1, 0, 1], [0, 1, 1]]\n"
    "capacity = [2.0, 2.0]\n"
    "alpha = [1.0, 1.0, 1.0]\n"
    "beta = [1.0, 1.0, 1.0]\n"
    "alpha_bar = [0.0, 0.0, 0.0]\n"
    "beta_bar = [1.0, 1.0, 1.0]\n"
    "sigma_u = [1.0, 1.0, 1.0]\n"
    "sigma_v = [1.0, 1.0, 1.0]\n"
    "holding_cost = [1.0, 1.0, 1.0]\n";

int main(void) {
    RsnNetwork *net = NULL;
    if (rsn_network_from_toml(NETWORK, &net) != RsnStatus_Ok) {
        char *msg = rsn_last_error_message();
        fprintf(stderr, "parse failed: %s\n", msg ? msg : "?");
        rsn_string_free(msg);
        return 1;
    }
    if (rsn_network_validate(net, NULL) != RsnStatus_Ok) {
        fprintf(stderr, "validation failed\n");
        return 1;
    }
    RsnPolicy *policy = NULL;
    if (rsn_policy_synthesize(net, &policy) != RsnStatus_Ok) {
        fprintf(stderr, "synthesis failed\n");
        return 1;
    }
    double w[2] = {2.0, 1.0};
    double hhat = 0.0;
    if (rsn_hhat(net, policy, w, 2, &hhat) != RsnStatus_Ok) {
        fprintf(stderr, "hhat failed\n");
        return 1;
    }
    printf("lambda=%.9f hhat=%.9f m=%zu version=%s\n",
           rsn_policy_lambda(policy), hhat, rsn_policy_m_set_len(policy),
           rsn_version());
    rsn_policy_free(policy);
    rsn_network_free(net);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // integration tests run from the crate root; artifacts live in the
    // workspace target directory
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    if let Ok(dir) = std::env::var("CARGO_TARGET_DIR") {
        return PathBuf::from(dir);
    }
    manifest.parent().unwrap().parent().unwrap().join("target")
}

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("rsnsim.h").exists(), "header not generated");

    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    let lib = target_dir().join(profile).join("librsnsim_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let work = tempfile::tempdir().unwrap();
    let c_path = work.path().join("smoke.c");
    std::fs::write(&c_path, C_PROGRAM).unwrap();
    let exe = work.path().join("smoke");

    let compile = Command::new("cc")
        .arg(&c_path)
        .arg(&lib)
        .arg(format!("-I{}", header_dir.display()))
        .arg("-o")
        .arg(&exe)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .expect("cc not available");
    assert!(
        compile.status.success(),
        "compile failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&exe).output().expect("program failed to start");
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("lambda=-0.577350269"), "{stdout}");
    assert!(stdout.contains("hhat=2.000000000"), "{stdout}");
    assert!(stdout.contains("m=2"), "{stdout}");
}
