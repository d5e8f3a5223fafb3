use std::path::{Path, PathBuf};
use std::process::Command;

use ldp_numeric::{Mechanism, MechanismKind, PrivacyBudget, RandomStream};

const HEADER: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/include/ldp_numeric.h");

const EXPORTS: &[&str] = &[
    "ldp_last_error_message",
    "ldp_stream_new",
    "ldp_stream_free",
    "ldp_stream_position",
    "ldp_mechanism_new",
    "ldp_mechanism_free",
    "ldp_mechanism_perturb",
    "ldp_mechanism_perturb_discrete",
    "ldp_mechanism_variance",
    "ldp_worst_case_variance",
    "ldp_params",
    "ldp_choose_k",
    "ldp_perturb_tuple",
];

fn compiler() -> Option<&'static str> {
    ["cc", "clang", "gcc"].into_iter().find(|c| {
        Command::new(c)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
    })
}

/// `target/<profile>`, where cargo places the static library.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(HEADER).unwrap();
    for name in EXPORTS {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    for ty in [
        "typedef struct LdpStream LdpStream;",
        "typedef struct LdpMechanism LdpMechanism;",
    ] {
        assert!(header.contains(ty), "{ty}");
    }
    assert!(header.contains("LDP_STATUS_OK = 0"));
    assert!(header.contains("LDP_MECHANISM_KIND_HM_TP = 7"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; header compile check skipped");
        return;
    };
    for lang in ["c", "c++"] {
        let out = Command::new(cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, HEADER])
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{lang}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

const PROGRAM: &str = r#"
#include <stdio.h>
#include "ldp_numeric.h"

int main(void) {
    LdpMechanism *m = NULL;
    if (ldp_mechanism_new(LDP_MECHANISM_KIND_PM_SUB, 2.0, &m) != LDP_STATUS_OK) return 10;
    LdpStream *s = ldp_stream_new(7);
    for (int i = 0; i < 5; i++) {
        double y;
        if (ldp_mechanism_perturb(m, 0.5, s, &y) != LDP_STATUS_OK) return 11;
        printf("%.17g\n", y);
    }
    double y;
    if (ldp_mechanism_perturb(m, 2.0, s, &y) != LDP_STATUS_INPUT_OUT_OF_RANGE) return 12;
    if (ldp_last_error_message()[0] == '\0') return 13;
    LdpParams p;
    if (ldp_params(0.5, &p) != LDP_STATUS_OK || p.three_outputs_a != 0.0) return 14;
    ldp_mechanism_free(m);
    ldp_stream_free(s);
    return 0;
}
"#;

#[test]
fn c_program_reproduces_rust_draws() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; link check skipped");
        return;
    };
    // Test builds only refresh the rlib; the archive needs its own build.
    let dir = artifact_dir();
    let mut build = Command::new(env!("CARGO"));
    build.args([
        "build",
        "--quiet",
        "--offline",
        "--lib",
        "-p",
        "ldp-numeric-ffi",
    ]);
    if dir.ends_with("release") {
        build.arg("--release");
    }
    assert!(build.status().unwrap().success());
    let lib = dir.join("libldp_numeric_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; link check skipped", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = Path::new(HEADER).parent().unwrap();
    let build = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(
        build.status.success(),
        "{}",
        String::from_utf8_lossy(&build.stderr)
    );
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());

    let m = Mechanism::new(MechanismKind::PmSub, PrivacyBudget::new(2.0).unwrap()).unwrap();
    let mut stream = RandomStream::new(7);
    let from_c: Vec<f64> = String::from_utf8(run.stdout)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    let from_rust: Vec<f64> = (0..5)
        .map(|_| m.perturb(0.5, &mut stream).unwrap())
        .collect();
    assert_eq!(from_c, from_rust);
}
