use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ccsl::metrics::extract_graph;
use ccsl::{ClusterState, FitResult};
use ccsl_cli::commands::{EvalFile, FitFile, SweepRow, TruthFile};
use ccsl_cli::io::PanelManifest;
use ccsl_cli::manifest::{RunManifest, SeedSource};
use tempfile::TempDir;

const FAST: &str = "mc_samples_fit = 2\nmc_samples_score = 8\ninner_iterations = 5\n\
warm_start_iterations = 3\nholdout_iterations = 3\nmax_sweeps = 2\n";

fn ccsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccsl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ccsl(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

/// Re-serializing a parsed document reproduces its bytes.
fn assert_round_trip<T: serde::Serialize + serde::de::DeserializeOwned>(path: &Path) {
    let bytes = fs::read(path).unwrap();
    let value: T = serde_json::from_slice(&bytes).unwrap();
    let mut again = serde_json::to_vec_pretty(&value).unwrap();
    again.push(b'\n');
    assert_eq!(bytes, again, "{}", path.display());
}

fn small_panel(dir: &Path, subjects: usize) -> std::path::PathBuf {
    let cfg = write_config(
        dir,
        &format!(
            "subjects = {subjects}\nvariables = 3\nlength = 30\ngroups = {}\n{FAST}",
            subjects.min(2)
        ),
    );
    let panel = dir.join("panel");
    ok(&[
        "generate",
        "--config",
        &cfg,
        "--seed",
        "1",
        "--out",
        s(&panel),
    ]);
    panel
}

#[test]
fn generate_writes_default_panel() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("panel");
    ok(&["generate", "--seed", "7", "--out", s(&out)]);
    let manifest: PanelManifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest.subjects.len(), 30);
    assert_eq!(manifest.m, 6);
    assert_eq!(manifest.run.seed, 7);
    assert_eq!(manifest.run.seed_source, SeedSource::Flag);
    for entry in &manifest.subjects {
        let text = fs::read_to_string(out.join(&entry.file)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 61);
        assert_eq!(lines[0], "x0,x1,x2,x3,x4,x5");
        assert_eq!(entry.length, 60);
        assert_eq!(
            ccsl_cli::io::sha256_hex(text.as_bytes()),
            manifest.run.output_digests[&entry.file]
        );
    }
    let truth: TruthFile = read_json(&out.join("ground_truth.json"));
    assert_eq!(truth.truth.labels.len(), 30);
    assert_eq!(truth.truth.groups.len(), 2);
    assert_round_trip::<PanelManifest>(&out.join("manifest.json"));
    assert_round_trip::<TruthFile>(&out.join("ground_truth.json"));
}

#[test]
fn zero_subjects_fails_before_writing() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "subjects = 0\n");
    let out = tmp.path().join("panel");
    let res = ccsl(&[
        "generate",
        "--config",
        &cfg,
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("subjects"));
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "variabels = 4\n");
    let res = ccsl(&[
        "generate",
        "--config",
        &cfg,
        "--out",
        s(&tmp.path().join("p")),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("variabels"));
}

#[test]
fn missing_seed_is_drawn_and_recorded() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "subjects = 2\nvariables = 2\nlength = 10\n");
    let a = tmp.path().join("a");
    ok(&["generate", "--config", &cfg, "--out", s(&a)]);
    let manifest: PanelManifest = read_json(&a.join("manifest.json"));
    assert_eq!(manifest.run.seed_source, SeedSource::Entropy);
    assert!(manifest.run.started_at.is_some() && manifest.run.finished_at.is_some());
    let b = tmp.path().join("b");
    ok(&[
        "generate",
        "--config",
        &cfg,
        "--seed",
        &manifest.run.seed.to_string(),
        "--out",
        s(&b),
    ]);
    for entry in &manifest.subjects {
        assert_eq!(
            fs::read(a.join(&entry.file)).unwrap(),
            fs::read(b.join(&entry.file)).unwrap()
        );
    }
}

#[test]
fn fit_assigns_every_subject() {
    let tmp = TempDir::new().unwrap();
    let panel = small_panel(tmp.path(), 6);
    let cfg = write_config(tmp.path(), FAST);
    let out = tmp.path().join("fit");
    ok(&[
        "fit",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--panel",
        s(&panel),
        "--out",
        s(&out),
    ]);
    let fit: FitFile = read_json(&out.join("fit_result.json"));
    assert_eq!(fit.assignments.len(), 6);
    assert_eq!(fit.q_estimated, fit.clusters.len());
    let members: usize = fit.clusters.values().map(|c| c.members.len()).sum();
    assert_eq!(members, 6);
    assert_eq!(fit.elbo_trace.len(), fit.sweeps_run);
    assert_eq!(fit.manifest.inputs.len(), 7);
    assert_round_trip::<FitFile>(&out.join("fit_result.json"));
}

#[test]
fn single_subject_panel_gives_one_cluster() {
    let tmp = TempDir::new().unwrap();
    let panel = small_panel(tmp.path(), 1);
    let cfg = write_config(tmp.path(), FAST);
    let out = tmp.path().join("fit");
    ok(&[
        "fit",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--panel",
        s(&panel),
        "--out",
        s(&out),
    ]);
    let fit: FitFile = read_json(&out.join("fit_result.json"));
    assert_eq!(fit.q_estimated, 1);
}

#[test]
fn panel_without_manifest_is_ingested() {
    let tmp = TempDir::new().unwrap();
    let panel = tmp.path().join("raw");
    fs::create_dir(&panel).unwrap();
    for (id, rows) in [
        ("b", "1.5,2\n0,1\n3,-1\n-2,0.5\n"),
        ("a", "0.1,0.2\n1,1\n-1,0\n2,2\n"),
    ] {
        fs::write(
            panel.join(format!("subject_{id}.csv")),
            format!("x0,x1\n{rows}"),
        )
        .unwrap();
    }
    fs::write(panel.join("notes.txt"), "ignored").unwrap();
    let (p, digests) = ccsl_cli::io::read_panel(&panel).unwrap();
    let ids: Vec<&str> = p.subjects.iter().map(|x| x.id.as_str()).collect();
    assert_eq!(ids, ["a", "b"]);
    assert_eq!(p.subjects[1].data[(0, 0)], 1.5);
    assert_eq!(digests.len(), 2);
}

#[test]
fn corrupted_csv_names_file_line_and_column() {
    let tmp = TempDir::new().unwrap();
    let panel = small_panel(tmp.path(), 2);
    let file = panel.join("subject_s001.csv");
    let mut text = fs::read_to_string(&file).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[4].split(',').map(String::from).collect();
    cells[2] = "abc".into();
    lines[4] = cells.join(",");
    text = lines.join("\n") + "\n";
    fs::write(&file, text).unwrap();
    let res = ccsl(&[
        "fit",
        "--seed",
        "1",
        "--panel",
        s(&panel),
        "--out",
        s(&tmp.path().join("f")),
    ]);
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(
        err.contains("subject_s001.csv") && err.contains("line 5") && err.contains("column 3"),
        "{err}"
    );
}

fn oracle_fit_file(truth: &TruthFile) -> FitFile {
    let mut state = ClusterState::empty(truth.subject_ids.len(), 1.0);
    let ids: Vec<usize> = truth
        .truth
        .groups
        .iter()
        .map(|g| state.open(g.model.clone()))
        .collect();
    for (s, &l) in truth.truth.labels.iter().enumerate() {
        state.attach(s, ids[l]);
    }
    let graphs = state
        .clusters
        .iter()
        .map(|(&k, g)| (k, extract_graph(g, 0.1, 0.1)))
        .collect();
    let result = FitResult {
        state,
        graphs,
        elbo_trace: vec![],
        sweeps_run: 0,
        converged: true,
    };
    let run = RunManifest::new("fit", 0, SeedSource::Flag, true);
    FitFile::new(truth.subject_ids.clone(), &result, run).unwrap()
}

#[test]
fn evaluate_oracle_fit_scores_one() {
    let tmp = TempDir::new().unwrap();
    let panel = tmp.path().join("panel");
    ok(&["generate", "--seed", "11", "--out", s(&panel)]);
    let truth_path = panel.join("ground_truth.json");
    let truth: TruthFile = read_json(&truth_path);
    let fit_path = tmp.path().join("oracle.json");
    fs::write(
        &fit_path,
        serde_json::to_vec(&oracle_fit_file(&truth)).unwrap(),
    )
    .unwrap();
    let out = tmp.path().join("eval");
    ok(&[
        "evaluate",
        "--seed",
        "0",
        "--fit",
        s(&fit_path),
        "--truth",
        s(&truth_path),
        "--out",
        s(&out),
    ]);
    let eval: EvalFile = read_json(&out.join("eval.json"));
    assert_eq!(eval.report.ari, 1.0);
    assert_eq!(eval.mean_auc_combined, Some(1.0));
    assert_round_trip::<EvalFile>(&out.join("eval.json"));
}

#[test]
fn evaluate_fitted_panel_has_finite_scores() {
    let tmp = TempDir::new().unwrap();
    let panel = small_panel(tmp.path(), 6);
    let cfg = write_config(tmp.path(), FAST);
    let fit_dir = tmp.path().join("fit");
    ok(&[
        "fit",
        "--config",
        &cfg,
        "--seed",
        "2",
        "--panel",
        s(&panel),
        "--out",
        s(&fit_dir),
    ]);
    let out = tmp.path().join("eval");
    ok(&[
        "evaluate",
        "--seed",
        "0",
        "--fit",
        s(&fit_dir.join("fit_result.json")),
        "--truth",
        s(&panel.join("ground_truth.json")),
        "--out",
        s(&out),
    ]);
    let eval: EvalFile = read_json(&out.join("eval.json"));
    assert!(eval.report.ari.is_finite());
    assert!(eval.report.auc_combined.values().all(|v| v.is_finite()));
}

#[test]
fn evaluate_rejects_mismatched_subjects() {
    let tmp = TempDir::new().unwrap();
    let panel = tmp.path().join("panel");
    ok(&["generate", "--seed", "11", "--out", s(&panel)]);
    let truth: TruthFile = read_json(&panel.join("ground_truth.json"));
    let mut fit = oracle_fit_file(&truth);
    let dropped = fit.subject_ids.pop().unwrap();
    fit.assignments.remove(&dropped);
    let fit_path = tmp.path().join("fit.json");
    fs::write(&fit_path, serde_json::to_vec(&fit).unwrap()).unwrap();
    let res = ccsl(&[
        "evaluate",
        "--fit",
        s(&fit_path),
        "--truth",
        s(&panel.join("ground_truth.json")),
        "--out",
        s(&tmp.path().join("e")),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("mismatch"));
}

#[test]
fn sweep_writes_one_row_per_job() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("grid_variables = [2, 3]\nrealizations = 2\nsubjects = 4\nlength = 20\n{FAST}"),
    );
    let out = tmp.path().join("sweep");
    ok(&["sweep", "--config", &cfg, "--seed", "5", "--out", s(&out)]);
    let mut reader = csv::Reader::from_path(out.join("sweep_results.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    for col in [
        "variables",
        "realization",
        "ari",
        "auc_instantaneous",
        "auc_lagged",
        "sweeps_run",
        "wall_seconds",
        "error",
    ] {
        assert!(header.iter().any(|h| h == col), "{col}");
    }
    let rows: Vec<SweepRow> = reader.deserialize().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    let keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.variables, r.realization)).collect();
    assert_eq!(keys, [(2, 0), (2, 1), (3, 0), (3, 1)]);
    assert!(rows.iter().all(|r| r.error.is_empty() && r.ari.is_some()));
    let manifest: RunManifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest.config.grid.unwrap().len(), 2);
}

#[test]
fn failed_sweep_cells_are_recorded() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("grid_subjects = [1, 3]\ngroups = 2\nvariables = 2\nlength = 20\n{FAST}"),
    );
    let out = tmp.path().join("sweep");
    ok(&["sweep", "--config", &cfg, "--seed", "5", "--out", s(&out)]);
    let rows: Vec<SweepRow> = csv::Reader::from_path(out.join("sweep_results.csv"))
        .unwrap()
        .deserialize()
        .map(Result::unwrap)
        .collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].error.contains("groups") && rows[0].ari.is_none());
    assert!(rows[1].error.is_empty());
}

#[test]
fn empty_grid_fails_without_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "grid_variables = []\n");
    let out = tmp.path().join("sweep");
    let res = ccsl(&["sweep", "--config", &cfg, "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("empty"));
    assert!(!out.exists());
}

#[test]
fn job_seeds_differ_between_jobs() {
    let seeds: BTreeMap<(u64, u64), usize> = (0..50)
        .map(|j| (ccsl_cli::commands::job_seeds(9, j), j))
        .collect();
    assert_eq!(seeds.len(), 50);
    assert_eq!(
        ccsl_cli::commands::job_seeds(9, 3),
        ccsl_cli::commands::job_seeds(9, 3)
    );
}
