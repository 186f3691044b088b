//! Compile tests/smoke.c against include/ctxrep.h, link the static library,
//! and run it. Skips when no C compiler is on PATH.

use std::path::PathBuf;
use std::process::Command;

fn find_staticlib(manifest: &std::path::Path) -> Option<PathBuf> {
    let target_root = std::env::var_os("CARGO_TARGET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| manifest.parent().unwrap().parent().unwrap().join("target"));
    for profile in ["debug", "release"] {
        let candidate = target_root.join(profile).join("libctxrep_ffi.a");
        if candidate.exists() {
            return Some(candidate);
        }
    }
    None
}

/// `cargo test` alone does not emit the staticlib artifact; build it.
fn build_staticlib(manifest: &std::path::Path) -> Option<PathBuf> {
    if let Some(found) = find_staticlib(manifest) {
        return Some(found);
    }
    let cargo = std::env::var_os("CARGO").unwrap_or_else(|| "cargo".into());
    let status = Command::new(cargo)
        .args(["build", "-p", "ctxrep-ffi", "--lib"])
        .current_dir(manifest)
        .status()
        .ok()?;
    if !status.success() {
        return None;
    }
    find_staticlib(manifest)
}

#[test]
fn c_program_compiles_links_and_runs() {
    let Ok(probe) = Command::new("cc").arg("--version").output() else {
        eprintln!("skipping: no C compiler on PATH");
        return;
    };
    if !probe.status.success() {
        eprintln!("skipping: cc probe failed");
        return;
    }

    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let staticlib = build_staticlib(&manifest).expect("libctxrep_ffi.a could not be built");
    let dir = tempfile::tempdir().unwrap();
    let binary = dir.path().join("smoke");

    let compile = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg(format!("-I{}", manifest.join("include").display()))
        .arg(manifest.join("tests/smoke.c"))
        .arg(&staticlib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&binary)
        .output()
        .expect("compiler runs");
    assert!(
        compile.status.success(),
        "compilation failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&binary).output().expect("smoke binary runs");
    assert!(
        run.status.success(),
        "smoke binary exited with {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stdout)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "c smoke ok");
}
