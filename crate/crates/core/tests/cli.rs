//! CLI contract tests: determinism of data outputs, provenance chain,
//! exit codes, and report schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_careerplane")
}

fn run_all(out: &Path) {
    let status = Command::new(bin())
        .args([
            "all",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "7",
            "--realizations",
            "200",
            "--shuffles",
            "1000",
            "--chains",
            "2",
            "--iters",
            "400",
            "--burn-in",
            "200",
        ])
        .status()
        .expect("spawn careerplane");
    assert!(status.success(), "pipeline failed in {}", out.display());
}

/// Every data file (manifests and SVG plots exempt) hashed relative to
/// the root.
fn hash_tree(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let name = path.file_name().unwrap().to_string_lossy().to_string();
            if name == "manifest.json" || name.ends_with(".svg") {
                continue;
            }
            let rel = path.strip_prefix(root).unwrap().display().to_string();
            out.insert(rel, careerplane::manifest::sha256_file(&path).unwrap());
        }
    }
    out
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let run1 = std::env::temp_dir().join("careerplane-cli-determinism");
    if run1.exists() {
        std::fs::remove_dir_all(&run1).unwrap();
    }
    // Identical configuration run twice into the same output directory.
    run_all(&run1);
    let h1 = hash_tree(&run1);
    run_all(&run1);
    let h2 = hash_tree(&run1);
    assert_eq!(h1.len(), h2.len());
    for (path, hash) in &h1 {
        assert_eq!(
            Some(hash),
            h2.get(path),
            "file {path} differs between identical runs"
        );
    }
    assert!(h1.len() > 25, "expected a full artifact tree, found {}", h1.len());

    // The provenance chain verifies end to end.
    let verified = careerplane::manifest::verify_chain(
        &run1,
        &["corpus", "ingest", "normalize", "classify", "transitions", "entropy", "logistic", "career", "bayes", "report"],
    )
    .unwrap();
    assert!(verified.len() >= 9, "verified stages: {verified:?}");

    // Report directory contains the figures and tables.
    for figure in [
        "fig_plane.svg",
        "fig_logistic.svg",
        "fig_entropy.svg",
        "fig_transitions_non_outlier.svg",
        "fig_trends.svg",
        "fig_occupancy.svg",
        "fig_posterior_mu_p.svg",
        "fig_posterior_mu_a.svg",
    ] {
        let path = run1.join("report").join(figure);
        assert!(path.exists(), "missing figure {figure}");
        let content = std::fs::read_to_string(&path).unwrap();
        assert!(content.starts_with("<svg"), "{figure} is not an SVG");
        assert!(content.ends_with("</svg>\n"), "{figure} is truncated");
    }
    for table in [
        "tables/classify_sectors.csv",
        "tables/career_trends.csv",
        "tables/career_occupancy.csv",
        "tables/bayes_density.csv",
    ] {
        assert!(run1.join("report").join(table).exists(), "missing table {table}");
    }

    // Scatter export carries the documented schema.
    let sectors = std::fs::read_to_string(run1.join("classify/sectors.csv")).unwrap();
    assert!(sectors.starts_with("researcher_id,discipline,year,prestige_z,productivity_z,sector"));
}

#[test]
fn missing_upstream_artifact_names_producer_and_exits_2() {
    let out = std::env::temp_dir().join("careerplane-cli-missing");
    if out.exists() {
        std::fs::remove_dir_all(&out).unwrap();
    }
    let output = Command::new(bin())
        .args(["normalize", "--out", out.to_str().unwrap()])
        .output()
        .expect("spawn");
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("ingest"), "stderr should name the producer: {stderr}");
}

#[test]
fn usage_error_exits_1() {
    let output = Command::new(bin())
        .args(["definitely-not-a-subcommand"])
        .output()
        .expect("spawn");
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn config_file_plus_flag_override() {
    let dir = std::env::temp_dir().join("careerplane-cli-config");
    std::fs::create_dir_all(&dir).unwrap();
    let config_path: PathBuf = dir.join("config.json");
    std::fs::write(
        &config_path,
        serde_json::to_string(&serde_json::json!({
            "out": dir.join("from-config"),
            "seed": 5,
        }))
        .unwrap(),
    )
    .unwrap();
    // Command line wins over the config file.
    let override_out = dir.join("from-flag");
    let status = Command::new(bin())
        .args([
            "synth",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            override_out.to_str().unwrap(),
        ])
        .status()
        .expect("spawn");
    assert!(status.success());
    assert!(override_out.join("corpus/publications.csv").exists());
    assert!(!dir.join("from-config").exists());
}
