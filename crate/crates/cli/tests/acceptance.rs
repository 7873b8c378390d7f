//! Acceptance criterion 10: identical CLI configs produce byte-identical
//! CSVs across runs, including across different worker-pool widths.

use std::path::{Path, PathBuf};
use std::process::Command;

fn models_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

/// Runs the CLI with `args`, writing the artifact to a fresh temp file,
/// and returns the artifact bytes. Panics on nonzero exit.
fn run_to_file(args: &[&str], threads: &str, dir: &Path, tag: &str) -> Vec<u8> {
    let out = dir.join(format!("{tag}.csv"));
    let status = Command::new(env!("CARGO_BIN_EXE_semioverlap"))
        .args(args)
        .arg("--output")
        .arg(&out)
        .env("SEMIOVERLAP_THREADS", threads)
        .status()
        .expect("spawn CLI");
    assert!(status.success(), "CLI failed for {args:?}");
    std::fs::read(&out).expect("read artifact")
}

#[test]
fn acceptance_10_byte_identical_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let models = models_dir();
    let osc = models.join("oscillator.json");
    let osc2 = models.join("oscillator_shift2.json");
    let osc_s = osc.to_str().unwrap();
    let osc2_s = osc2.to_str().unwrap();

    let spectrum: Vec<String> = ["spectrum", "--model", osc_s, "--hbar", "0.1", "--levels", "6"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let wkb: Vec<String> = [
        "wkb-eval", "--model", osc_s, "--hbar", "0.1", "--level", "4", "--grid", "128",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let overlap: Vec<String> = [
        "overlap", "--model1", osc_s, "--model2", osc2_s, "--hbar", "0.1", "--n1", "8", "--n2",
        "8", "--grid", "128",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let sixj: Vec<String> =
        ["sixj", "--converge", "--base", "4,4,4,4,4,4", "--scales", "1,2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    let cases: [(&str, &[String]); 4] =
        [("spectrum", &spectrum), ("wkb", &wkb), ("overlap", &overlap), ("sixj", &sixj)];

    let mut all_equal = true;
    for (tag, args) in cases {
        let args: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
        let a = run_to_file(&args, "1", dir.path(), &format!("{tag}-a"));
        let b = run_to_file(&args, "4", dir.path(), &format!("{tag}-b"));
        assert!(!a.is_empty(), "{tag}: empty artifact");
        all_equal &= a == b;
        assert_eq!(a, b, "{tag}: artifacts differ between runs");
    }
    let verdict = if all_equal { "PASS" } else { "FAIL" };
    println!(
        "ACCEPTANCE 10 {verdict}: spectrum/wkb-eval/overlap/sixj artifacts byte-identical \
         across repeated runs and worker-pool widths 1 vs 4"
    );
    assert!(all_equal);
}
