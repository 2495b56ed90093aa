//! The four subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use ccsl::inference::fit as fit_panel;
use ccsl::metrics::{evaluate as evaluate_fit, EvalReport};
use ccsl::synthgen::{gen_dataset, GroundTruth};
use ccsl::{ClusterGraph, ClusterState, FitConfig, FitResult, GroupModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{GridCell, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{
    create_dir, parse_json, read_bytes, read_panel, series_to_csv, sha256_hex, subject_file,
    to_json, write_file, PanelManifest, SubjectEntry, EVAL_REPORT, FIT_RESULT, GROUND_TRUTH,
    PANEL_MANIFEST, SWEEP_RESULTS,
};
use crate::manifest::{RunManifest, SeedSource, FORMAT_VERSION};

/// Flags shared by every command.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Omit wall-clock timestamps and timings so that outputs are
    /// byte-identical across runs.
    pub reproducible: bool,
}

impl Options {
    fn load(&self) -> Result<(RunConfig, u64, SeedSource)> {
        let config = RunConfig::load_or_default(self.config.as_deref())?;
        let (seed, source) = match (self.seed, config.seed) {
            (Some(s), _) => (s, SeedSource::Flag),
            (None, Some(s)) => (s, SeedSource::Config),
            (None, None) => (rand::rng().random(), SeedSource::Entropy),
        };
        Ok((config, seed, source))
    }
}

/// `ground_truth.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub format_version: u32,
    /// Subject ids in the order of `truth.labels`.
    pub subject_ids: Vec<String>,
    pub truth: GroundTruth,
}

/// One learned cluster in `fit_result.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutput {
    pub members: Vec<String>,
    pub model: GroupModel,
    pub graph: ClusterGraph,
}

/// `fit_result.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub format_version: u32,
    pub subject_ids: Vec<String>,
    /// Subject id to cluster id.
    pub assignments: BTreeMap<String, usize>,
    pub q_estimated: usize,
    pub alpha: f64,
    pub clusters: BTreeMap<usize, ClusterOutput>,
    pub elbo_trace: Vec<f64>,
    pub sweeps_run: usize,
    pub converged: bool,
    pub manifest: RunManifest,
}

impl FitFile {
    pub fn new(ids: Vec<String>, result: &FitResult, manifest: RunManifest) -> Result<Self> {
        let labels = result
            .state
            .labels()
            .ok_or_else(|| ccsl::CcslError::InvalidState("fit left subjects unassigned".into()))?;
        let assignments = ids.iter().cloned().zip(labels.iter().copied()).collect();
        let clusters = result
            .state
            .clusters
            .iter()
            .map(|(&k, model)| {
                let members = result
                    .state
                    .members(k)
                    .into_iter()
                    .map(|s| ids[s].clone())
                    .collect();
                let graph = result.graphs.get(&k).cloned().expect("graph per cluster");
                (
                    k,
                    ClusterOutput {
                        members,
                        model: model.clone(),
                        graph,
                    },
                )
            })
            .collect();
        Ok(Self {
            format_version: FORMAT_VERSION,
            subject_ids: ids,
            assignments,
            q_estimated: result.n_clusters(),
            alpha: result.state.alpha,
            clusters,
            elbo_trace: result.elbo_trace.clone(),
            sweeps_run: result.sweeps_run,
            converged: result.converged,
            manifest,
        })
    }

    /// Rebuilds the library result with subjects in the order of `ids`.
    pub fn to_fit_result(&self, ids: &[String]) -> Result<FitResult> {
        let mut state = ClusterState::empty(ids.len(), self.alpha);
        for (&k, c) in &self.clusters {
            state.clusters.insert(k, c.model.clone());
            state.sizes.insert(k, 0);
        }
        for (s, id) in ids.iter().enumerate() {
            let k = *self
                .assignments
                .get(id)
                .ok_or_else(|| CliError::IdMismatch(format!("subject {id} has no assignment")))?;
            if !state.clusters.contains_key(&k) {
                return Err(CliError::IdMismatch(format!(
                    "subject {id} assigned to unknown cluster {k}"
                )));
            }
            state.attach(s, k);
        }
        state.check_invariants(true)?;
        Ok(FitResult {
            state,
            graphs: self
                .clusters
                .iter()
                .map(|(&k, c)| (k, c.graph.clone()))
                .collect(),
            elbo_trace: self.elbo_trace.clone(),
            sweeps_run: self.sweeps_run,
            converged: self.converged,
        })
    }
}

/// `eval.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub format_version: u32,
    pub report: EvalReport,
    pub mean_auc_instantaneous: Option<f64>,
    pub mean_auc_lagged: Option<f64>,
    pub mean_auc_combined: Option<f64>,
    pub manifest: RunManifest,
}

/// Simulates a panel and writes it with its ground truth to `out`.
pub fn generate(opts: &Options, out: &Path) -> Result<PathBuf> {
    let (config, seed, source) = opts.load()?;
    let settings = config.gen_settings()?;
    let (panel, truth) = gen_dataset(&settings, &mut ChaCha8Rng::seed_from_u64(seed))?;
    create_dir(out)?;

    let mut run = RunManifest::new("generate", seed, source, opts.reproducible);
    run.config.generation = Some(settings);
    let mut entries = Vec::with_capacity(panel.len());
    for x in &panel.subjects {
        let file = subject_file(&x.id);
        let digest = write_file(&out.join(&file), &series_to_csv(x))?;
        run.outputs.push(file.clone());
        run.output_digests.insert(file.clone(), digest);
        entries.push(SubjectEntry {
            id: x.id.clone(),
            file,
            length: x.len(),
        });
    }
    let truth_file = TruthFile {
        format_version: FORMAT_VERSION,
        subject_ids: panel.subjects.iter().map(|x| x.id.clone()).collect(),
        truth,
    };
    let digest = write_file(&out.join(GROUND_TRUTH), &to_json(&truth_file))?;
    run.outputs.push(GROUND_TRUTH.to_string());
    run.output_digests.insert(GROUND_TRUTH.to_string(), digest);
    run.outputs.push(PANEL_MANIFEST.to_string());
    run.finish();

    let manifest = PanelManifest {
        format_version: FORMAT_VERSION,
        m: panel.m,
        subjects: entries,
        run,
    };
    let path = out.join(PANEL_MANIFEST);
    write_file(&path, &to_json(&manifest))?;
    Ok(path)
}

/// Fits the panel in `panel_dir` and writes `fit_result.json` to `out`.
pub fn fit(opts: &Options, panel_dir: &Path, out: &Path) -> Result<FitFile> {
    let (config, seed, source) = opts.load()?;
    let fit_config = config.fit_config(seed)?;
    let (panel, digests) = read_panel(panel_dir)?;
    let result = fit_panel(&panel, &fit_config, &mut ChaCha8Rng::seed_from_u64(seed))?;

    let mut run = RunManifest::new("fit", seed, source, opts.reproducible);
    run.config.fit = Some(fit_config);
    run.inputs = digests.into_iter().collect();
    run.outputs.push(FIT_RESULT.to_string());
    run.finish();
    let ids = panel.subjects.iter().map(|x| x.id.clone()).collect();
    let file = FitFile::new(ids, &result, run)?;
    create_dir(out)?;
    write_file(&out.join(FIT_RESULT), &to_json(&file))?;
    Ok(file)
}

/// Scores a fit against ground truth and writes `eval.json` to `out`.
pub fn evaluate(
    opts: &Options,
    fit_path: &Path,
    truth_path: &Path,
    out: &Path,
) -> Result<EvalFile> {
    let (config, seed, source) = opts.load()?;
    let fit_config = config.fit_config(seed)?;
    let fit_bytes = read_bytes(fit_path)?;
    let truth_bytes = read_bytes(truth_path)?;
    let fit_file: FitFile = parse_json(fit_path, &fit_bytes)?;
    let truth_file: TruthFile = parse_json(truth_path, &truth_bytes)?;

    let fit_ids: BTreeSet<&String> = fit_file.subject_ids.iter().collect();
    let truth_ids: BTreeSet<&String> = truth_file.subject_ids.iter().collect();
    if fit_ids != truth_ids || fit_file.subject_ids.len() != truth_file.subject_ids.len() {
        return Err(CliError::IdMismatch(format!(
            "fit has {} subjects, ground truth has {}; {} ids differ",
            fit_file.subject_ids.len(),
            truth_file.subject_ids.len(),
            fit_ids.symmetric_difference(&truth_ids).count()
        )));
    }
    let result = fit_file.to_fit_result(&truth_file.subject_ids)?;
    let report = evaluate_fit(&result, &truth_file.truth, &fit_config)?;

    let mut run = RunManifest::new("evaluate", seed, source, opts.reproducible);
    run.config.fit = Some(fit_config);
    for (path, bytes) in [(fit_path, &fit_bytes), (truth_path, &truth_bytes)] {
        run.inputs.insert(file_name(path), sha256_hex(bytes));
    }
    run.outputs.push(EVAL_REPORT.to_string());
    run.finish();
    let file = EvalFile {
        format_version: FORMAT_VERSION,
        mean_auc_instantaneous: report.mean_auc_instantaneous(),
        mean_auc_lagged: report.mean_auc_lagged(),
        mean_auc_combined: report.mean_auc_combined(),
        report,
        manifest: run,
    };
    create_dir(out)?;
    write_file(&out.join(EVAL_REPORT), &to_json(&file))?;
    Ok(file)
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

/// One row of `sweep_results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub groups: usize,
    pub subjects: usize,
    pub variables: usize,
    pub length: usize,
    pub realization: usize,
    pub ari: Option<f64>,
    pub auc_instantaneous: Option<f64>,
    pub auc_lagged: Option<f64>,
    pub auc_combined: Option<f64>,
    pub q_estimated: Option<usize>,
    pub sweeps_run: Option<usize>,
    pub converged: Option<bool>,
    pub wall_seconds: f64,
    pub error: String,
}

/// Generation and fitting seeds of job `index`: the master seed selects a
/// ChaCha8 stream, the job index the stream number.
pub fn job_seeds(master: u64, index: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    (rng.random(), rng.random())
}

fn run_job(config: &RunConfig, cell: GridCell, realization: usize, seeds: (u64, u64)) -> SweepRow {
    let start = Instant::now();
    let outcome = (|| -> Result<(EvalReport, FitResult)> {
        let settings = cell.apply(config)?;
        let fit_config: FitConfig = config.fit_config(seeds.1)?;
        let (panel, truth) = gen_dataset(&settings, &mut ChaCha8Rng::seed_from_u64(seeds.0))?;
        let result = fit_panel(&panel, &fit_config, &mut ChaCha8Rng::seed_from_u64(seeds.1))?;
        Ok((evaluate_fit(&result, &truth, &fit_config)?, result))
    })();
    let mut row = SweepRow {
        groups: cell.groups,
        subjects: cell.subjects,
        variables: cell.variables,
        length: cell.length,
        realization,
        ari: None,
        auc_instantaneous: None,
        auc_lagged: None,
        auc_combined: None,
        q_estimated: None,
        sweeps_run: None,
        converged: None,
        wall_seconds: start.elapsed().as_secs_f64(),
        error: String::new(),
    };
    match outcome {
        Ok((report, result)) => {
            row.ari = Some(report.ari);
            row.auc_instantaneous = report.mean_auc_instantaneous();
            row.auc_lagged = report.mean_auc_lagged();
            row.auc_combined = report.mean_auc_combined();
            row.q_estimated = Some(report.q_estimated);
            row.sweeps_run = Some(result.sweeps_run);
            row.converged = Some(result.converged);
        }
        Err(e) => row.error = e.to_string(),
    }
    row
}

/// Runs generate, fit and evaluate for every grid cell and realization,
/// then writes `sweep_results.csv` (rows in cell-major order) and
/// `manifest.json` to `out`. Failed jobs become rows with an error.
pub fn sweep(opts: &Options, out: &Path) -> Result<Vec<SweepRow>> {
    let (config, seed, source) = opts.load()?;
    let cells = config.grid()?;
    let realizations = config.realizations();
    config.fit_config(seed)?;

    let jobs: Vec<(GridCell, usize)> = cells
        .iter()
        .flat_map(|&c| (0..realizations).map(move |r| (c, r)))
        .collect();
    let workers = config
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, jobs.len());
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(cell, r)) = jobs.get(j) else { break };
                let mut row = run_job(&config, cell, r, job_seeds(seed, j));
                if opts.reproducible {
                    row.wall_seconds = 0.0;
                }
                rows.lock().expect("row lock")[j] = Some(row);
            });
        }
    });
    let rows: Vec<SweepRow> = rows
        .into_inner()
        .expect("row lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect();

    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        writer.serialize(row).expect("in-memory write");
    }
    let bytes = writer.into_inner().expect("in-memory flush");
    create_dir(out)?;
    let digest = write_file(&out.join(SWEEP_RESULTS), &bytes)?;

    let mut run = RunManifest::new("sweep", seed, source, opts.reproducible);
    run.config.generation = Some(config.gen_settings()?);
    run.config.fit = Some(config.fit_config(seed)?);
    run.config.grid = Some(cells);
    run.config.realizations = Some(realizations);
    run.outputs = vec![SWEEP_RESULTS.to_string(), PANEL_MANIFEST.to_string()];
    run.output_digests.insert(SWEEP_RESULTS.to_string(), digest);
    run.finish();
    write_file(&out.join(PANEL_MANIFEST), &to_json(&run))?;
    Ok(rows)
}
