//! Experiment protocol: train on the first passes, test on the last one,
//! across cases and seeds, and render the result tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::features::{
    attitude_labels, build_frames, build_windows, fit_gyro_scale, CaseCatalog, CaseSpec, FeatureConfig, GyroScale,
    Group, PassFeatures,
};
use crate::net::{predict_pass, save_model, train, Model, ModelMeta, NetConfig, TrainConfig, TrainOutcome};
use crate::passlog::PassLog;
use crate::rotation::{mrp_to_quat, quat_angle_rad, quat_rotate, rms_rotation_angle, vector_angle_deg, Mrp};
use crate::triad::{triad_pass_eval, Priority, TriadConfig, TriadEval};

/// Settings shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Window length.
    pub n: usize,
    pub features: FeatureConfig,
    /// Template; the per-run seed replaces `seed`.
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::new(5)
    }
}

impl RunConfig {
    pub fn new(n: usize) -> Self {
        RunConfig { n, features: FeatureConfig::default(), train: TrainConfig::new(0) }
    }
}

/// One (case, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub train_rms_deg: f64,
    pub test_rms_deg: f64,
    /// Stopped at the epoch limit; excluded from the minimum.
    pub max_epoch: bool,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub divergences: usize,
    pub model_digest: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub channels: usize,
    /// In seed order R1, R2, ...
    pub runs: Vec<SeedResult>,
    /// (I): minimum train RMS over runs that stopped early.
    pub min_train: Option<f64>,
    /// (II): minimum test RMS over the same runs.
    pub min_test: Option<f64>,
    /// (I)+(II).
    pub combined: Option<f64>,
}

fn min_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
}

impl CaseResult {
    pub fn from_runs(case_id: &str, channels: usize, runs: Vec<SeedResult>) -> Self {
        let included = || runs.iter().filter(|r| !r.max_epoch);
        let min_train = min_of(included().map(|r| r.train_rms_deg));
        let min_test = min_of(included().map(|r| r.test_rms_deg));
        let combined = min_train.zip(min_test).map(|(a, b)| a + b);
        CaseResult { case_id: case_id.to_string(), channels, runs, min_train, min_test, combined }
    }
}

/// Pass frames, labels and gyro scale for one train/test split.
pub struct PreparedPasses {
    pub frames: Vec<PassFeatures>,
    pub labels: Vec<Vec<Mrp>>,
    pub gyro_scale: GyroScale,
    pub pass_ids: Vec<String>,
}

impl PreparedPasses {
    /// The last pass is held out; the gyro scale comes from the others only.
    pub fn new(passes: &[PassLog], features: &FeatureConfig) -> Result<Self> {
        if passes.len() < 2 {
            return Err(invalid("need at least one training pass and one test pass"));
        }
        let train: Vec<&PassLog> = passes[..passes.len() - 1].iter().collect();
        let gyro_scale = fit_gyro_scale(&train)?;
        Ok(PreparedPasses {
            frames: passes.iter().map(|p| build_frames(p, features, gyro_scale)).collect(),
            labels: passes.iter().map(attitude_labels).collect::<Result<_>>()?,
            gyro_scale,
            pass_ids: passes.iter().map(|p| p.id.clone()).collect(),
        })
    }

    pub fn train_count(&self) -> usize {
        self.frames.len() - 1
    }
}

pub fn config_hash(case: &CaseSpec, seed: u64, cfg: &RunConfig, pass_ids: &[String]) -> String {
    let mut tc = cfg.train.clone();
    tc.seed = seed;
    let v = serde_json::json!({
        "case": case,
        "seed": seed,
        "n": cfg.n,
        "features": cfg.features,
        "train": tc,
        "passes": pass_ids,
    });
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

pub struct CaseRun {
    pub result: SeedResult,
    pub outcome: TrainOutcome,
    pub model: Model,
}

/// Train one model for `case` with `seed` (used for initialisation and for
/// shuffling/dropout) and evaluate it.
pub fn run_case(case: &CaseSpec, seed: u64, data: &PreparedPasses, cfg: &RunConfig) -> Result<CaseRun> {
    let k = data.train_count();
    let ds = build_windows(&data.frames[..k], &data.labels[..k], cfg.n, case)?;
    crate::features::check_case_feasible(&data.frames[k], case)?;
    if ds.channels != case.channels() {
        return Err(Error::DataIntegrity(format!(
            "case {}: dataset has {} channels, case defines {}",
            case.id,
            ds.channels,
            case.channels()
        )));
    }
    let nc = NetConfig::new(cfg.n, case.channels(), seed);
    let mut tc = cfg.train.clone();
    tc.seed = seed;
    let outcome = train(&ds, &nc, &tc)?;

    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for (f, l) in data.frames[..k].iter().zip(&data.labels[..k]) {
        pred.extend(predict_pass(&outcome.params, f, case, cfg.n)?);
        truth.extend_from_slice(&l[cfg.n - 1..]);
    }
    let train_rms = rms_rotation_angle(&pred, &truth)?;
    let test_pred = predict_pass(&outcome.params, &data.frames[k], case, cfg.n)?;
    let test_rms = rms_rotation_angle(&test_pred, &data.labels[k][cfg.n - 1..])?;

    let model = Model {
        config: nc,
        params: outcome.params.clone(),
        meta: ModelMeta {
            case_id: case.id.clone(),
            init_seed: seed,
            train_seed: seed,
            gyro_scale: data.gyro_scale,
            training_passes: data.pass_ids[..k].to_vec(),
            features: cfg.features.clone(),
        },
    };
    let h = &outcome.history;
    let result = SeedResult {
        seed,
        train_rms_deg: train_rms,
        test_rms_deg: test_rms,
        max_epoch: h.stopped_at_max_epoch(),
        best_epoch: h.best_epoch,
        epochs_run: h.epochs.len(),
        divergences: h.divergences.len(),
        model_digest: outcome.params.digest(),
        config_hash: config_hash(case, seed, cfg, &data.pass_ids),
        model_path: None,
    };
    Ok(CaseRun { result, outcome, model })
}

/// Location of one cell relative to the matrix root.
pub fn cell_rel(case_id: &str, seed_index: usize) -> PathBuf {
    Path::new(case_id).join(format!("R{}", seed_index + 1))
}

/// Directory holding the artefacts of one cell.
pub fn cell_dir(root: &Path, case_id: &str, seed_index: usize) -> PathBuf {
    root.join(cell_rel(case_id, seed_index))
}

/// Write `model.bin`, `history.csv` and `result.json` into `root/rel`. The
/// recorded model path is relative to `root`, so output trees can be moved
/// and compared byte for byte.
pub fn persist_run(root: &Path, rel: &Path, run: &mut CaseRun) -> Result<()> {
    let dir = root.join(rel);
    std::fs::create_dir_all(&dir)?;
    save_model(&dir.join("model.bin"), &run.model)?;
    std::fs::write(dir.join("history.csv"), run.outcome.history.to_csv())?;
    run.result.model_path = Some(rel.join("model.bin").to_string_lossy().into_owned());
    std::fs::write(dir.join("result.json"), serde_json::to_string_pretty(&run.result)?)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MatrixOptions {
    /// Seeds in column order R1, R2, ...
    pub seeds: Vec<u64>,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
    /// Where per-cell artefacts go; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Reuse cells whose `result.json` matches the current configuration.
    pub resume: bool,
}

impl MatrixOptions {
    pub fn new(seeds: Vec<u64>) -> Self {
        MatrixOptions { seeds, jobs: 0, out_dir: None, resume: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub seeds: Vec<u64>,
    pub pass_ids: Vec<String>,
    pub run_config: RunConfig,
    pub cases: Vec<CaseResult>,
}

fn load_cell(dir: &Path, hash: &str) -> Option<SeedResult> {
    let text = std::fs::read_to_string(dir.join("result.json")).ok()?;
    let r: SeedResult = serde_json::from_str(&text).ok()?;
    (r.config_hash == hash && dir.join("model.bin").exists()).then_some(r)
}

/// Run every case with every seed. Runs are independent and executed in
/// parallel; the report is assembled in case and seed order.
pub fn run_matrix(
    catalog: &CaseCatalog,
    passes: &[PassLog],
    cfg: &RunConfig,
    opts: &MatrixOptions,
) -> Result<MatrixReport> {
    if catalog.cases.is_empty() {
        return Err(invalid("empty case catalog"));
    }
    if opts.seeds.is_empty() {
        return Err(invalid("no seeds given"));
    }
    let data = PreparedPasses::new(passes, &cfg.features)?;
    // fail fast on infeasible cases before any training starts
    for case in &catalog.cases {
        for f in &data.frames {
            crate::features::check_case_feasible(f, case)?;
        }
    }
    let cells: Vec<(usize, usize)> =
        (0..catalog.cases.len()).flat_map(|c| (0..opts.seeds.len()).map(move |s| (c, s))).collect();
    let work = |&(c, s): &(usize, usize)| -> Result<SeedResult> {
        let case = &catalog.cases[c];
        let seed = opts.seeds[s];
        let rel = cell_rel(&case.id, s);
        if let (true, Some(root)) = (opts.resume, &opts.out_dir) {
            if let Some(r) = load_cell(&root.join(&rel), &config_hash(case, seed, cfg, &data.pass_ids)) {
                return Ok(r);
            }
        }
        let mut run = run_case(case, seed, &data, cfg)?;
        if let Some(root) = &opts.out_dir {
            persist_run(root, &rel, &mut run)?;
        }
        Ok(run.result)
    };
    let results: Vec<Result<SeedResult>> = if opts.jobs == 1 {
        cells.iter().map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::Configuration(e.to_string()))?;
        pool.install(|| cells.par_iter().map(work).collect())
    };
    let mut results = results.into_iter();
    let mut cases = Vec::with_capacity(catalog.cases.len());
    for case in &catalog.cases {
        let runs = (0..opts.seeds.len()).map(|_| results.next().expect("one result per cell")).collect::<Result<Vec<_>>>()?;
        cases.push(CaseResult::from_runs(&case.id, case.channels(), runs));
    }
    Ok(MatrixReport { seeds: opts.seeds.clone(), pass_ids: data.pass_ids, run_config: cfg.clone(), cases })
}

fn fmt_run(v: f64, flagged: bool) -> String {
    format!("{v:.2}{}", if flagged { "*" } else { "" })
}

fn fmt_opt(v: Option<f64>, missing: &str) -> String {
    v.map_or_else(|| missing.to_string(), |x| format!("{x:.2}"))
}

impl MatrixReport {
    pub fn seed_labels(&self) -> Vec<String> {
        (1..=self.seeds.len()).map(|k| format!("R{k}")).collect()
    }

    /// Two header rows: the column groups, then the seed/MIN labels.
    pub fn to_markdown(&self) -> String {
        let k = self.seeds.len();
        let labels = self.seed_labels();
        let mut out = String::new();
        let blanks = |m: usize| " |".repeat(m);
        let _ = writeln!(out, "| Case | Train RMS [deg] |{} Test RMS [deg] |{} Combined [deg] |", blanks(k), blanks(k));
        let _ = writeln!(out, "|{}", "---|".repeat(2 * k + 4));
        let _ = writeln!(out, "| | {} | MIN (I) | {} | MIN (II) | (I)+(II) |", labels.join(" | "), labels.join(" | "));
        for c in &self.cases {
            let train: Vec<String> = c.runs.iter().map(|r| fmt_run(r.train_rms_deg, r.max_epoch)).collect();
            let test: Vec<String> = c.runs.iter().map(|r| fmt_run(r.test_rms_deg, r.max_epoch)).collect();
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                c.case_id,
                train.join(" | "),
                fmt_opt(c.min_train, "n/a"),
                test.join(" | "),
                fmt_opt(c.min_test, "n/a"),
                fmt_opt(c.combined, ""),
            );
        }
        out.push_str("\n\\* = stopped at max epoch (excluded from MIN)\n");
        out
    }

    pub fn csv_header(&self) -> String {
        let labels = self.seed_labels();
        let mut cols = vec!["case".to_string()];
        cols.extend(labels.iter().map(|l| format!("train_{l}")));
        cols.push("train_min_I".into());
        cols.extend(labels.iter().map(|l| format!("test_{l}")));
        cols.push("test_min_II".into());
        cols.push("combined_I_II".into());
        cols.join(",")
    }

    /// Full-precision values; flagged runs carry a trailing `*`.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        let num = |v: f64, flagged: bool| format!("{v}{}", if flagged { "*" } else { "" });
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for c in &self.cases {
            let mut row = vec![c.case_id.clone()];
            row.extend(c.runs.iter().map(|r| num(r.train_rms_deg, r.max_epoch)));
            row.push(opt(c.min_train));
            row.extend(c.runs.iter().map(|r| num(r.test_rms_deg, r.max_epoch)));
            row.push(opt(c.min_test));
            row.push(opt(c.combined));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn case(&self, id: &str) -> Option<&CaseResult> {
        self.cases.iter().find(|c| c.case_id == id)
    }

    /// Write `report.md`, `report.csv` and `report.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let files = [
            (dir.join("report.md"), self.to_markdown()),
            (dir.join("report.csv"), self.to_csv()),
            (dir.join("report.json"), self.to_json()?),
        ];
        let mut paths = Vec::new();
        for (p, text) in files {
            std::fs::write(&p, text)?;
            paths.push(p);
        }
        Ok(paths)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriadRow {
    pub priority: Priority,
    pub rms_att_deg: f64,
    pub rms_sun_deg: f64,
    pub rms_mag_deg: f64,
    pub evaluated_steps: usize,
    pub failed_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriadReport {
    pub pass_ids: Vec<String>,
    pub rows: Vec<TriadRow>,
}

/// TRIAD over all passes pooled, once with each primary vector.
pub fn triad_baseline_report(passes: &[PassLog], features: &FeatureConfig) -> Result<(TriadReport, Vec<Vec<TriadEval>>)> {
    if passes.is_empty() {
        return Err(invalid("no passes given"));
    }
    // the gyro does not enter TRIAD
    let frames: Vec<PassFeatures> = passes.iter().map(|p| build_frames(p, features, GyroScale(1.0))).collect();
    let mut rows = Vec::new();
    let mut per_pass = Vec::new();
    for primary in [Priority::Sun, Priority::Mag] {
        let cfg = TriadConfig { primary };
        let evals =
            passes.iter().zip(&frames).map(|(p, f)| triad_pass_eval(p, f, &cfg)).collect::<Result<Vec<_>>>()?;
        let pooled = TriadEval::pooled(&evals)?;
        rows.push(TriadRow {
            priority: primary,
            rms_att_deg: pooled.rms_att_deg,
            rms_sun_deg: pooled.rms_sun_deg,
            rms_mag_deg: pooled.rms_mag_deg,
            evaluated_steps: pooled.evaluated_steps,
            failed_steps: pooled.failed_steps,
        });
        per_pass.push(evals);
    }
    Ok((TriadReport { pass_ids: passes.iter().map(|p| p.id.clone()).collect(), rows }, per_pass))
}

impl TriadReport {
    pub fn row(&self, p: Priority) -> &TriadRow {
        self.rows.iter().find(|r| r.priority == p).expect("both priorities are evaluated")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Priority | Attitude RMS [deg] | Sun RMS [deg] | Mag RMS [deg] | Evaluated steps | Failed steps |\n|---|---|---|---|---|---|\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {:.2} | {:.2} | {:.2} | {} | {} |",
                r.priority, r.rms_att_deg, r.rms_sun_deg, r.rms_mag_deg, r.evaluated_steps, r.failed_steps
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("priority,att_rms_deg,sun_rms_deg,mag_rms_deg,evaluated_steps,failed_steps\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.priority, r.rms_att_deg, r.rms_sun_deg, r.rms_mag_deg, r.evaluated_steps, r.failed_steps
            );
        }
        out
    }
}

/// Per-step errors of an attitude estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub att_err_deg: f64,
    pub sun_err_deg: Option<f64>,
    pub mag_err_deg: Option<f64>,
    pub earth_err_deg: Option<f64>,
}

/// Errors of `predictions`, which start at step `first_step` of the pass.
/// Sensor errors compare the measured body vectors with the model vectors
/// rotated by the predicted attitude.
pub fn error_series(pass: &PassLog, frames: &PassFeatures, first_step: usize, predictions: &[Mrp]) -> Result<Vec<SeriesRow>> {
    if first_step + predictions.len() > pass.records.len() || frames.frames.len() != pass.records.len() {
        return Err(invalid("predictions do not fit the pass"));
    }
    predictions
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let k = first_step + i;
            let rec = &pass.records[k];
            let fr = &frames.frames[k];
            let q = mrp_to_quat(m)?;
            let sensor = |meas: Group, model: Group| {
                fr.get(meas)
                    .zip(fr.get(model))
                    .map(|(b, r)| vector_angle_deg(&b, &quat_rotate(&q, &r)))
            };
            Ok(SeriesRow {
                t: rec.t,
                att_err_deg: quat_angle_rad(&q, &rec.q_true.normalize()?).to_degrees(),
                sun_err_deg: sensor(Group::SunSensor, Group::SunModel),
                mag_err_deg: sensor(Group::MagSensor, Group::MagModel),
                earth_err_deg: sensor(Group::EarthSensor, Group::EarthModel),
            })
        })
        .collect()
}

pub fn series_to_csv(rows: &[SeriesRow]) -> String {
    let mut out = String::from("t,att_err_deg,sun_err_deg,mag_err_deg,earth_err_deg\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.t,
            r.att_err_deg,
            opt(r.sun_err_deg),
            opt(r.mag_err_deg),
            opt(r.earth_err_deg)
        );
    }
    out
}

/// Error time series of a trained model on one pass, using the model's own
/// feature settings and gyro scale.
pub fn timeseries_export(model: &Model, case: &CaseSpec, pass: &PassLog) -> Result<Vec<SeriesRow>> {
    if case.channels() != model.config.channels {
        return Err(Error::IncompatibleModel(format!(
            "case {} has {} channels, model expects {}",
            case.id,
            case.channels(),
            model.config.channels
        )));
    }
    let frames = build_frames(pass, &model.meta.features, model.meta.gyro_scale);
    let n = model.config.n;
    let pred = predict_pass(&model.params, &frames, case, n)?;
    error_series(pass, &frames, n - 1, &pred)
}

/// Raw sensor counts: `t, css0..css5, mag0..mag2`.
pub fn raw_profile_csv(pass: &PassLog) -> String {
    let mut out = String::from("t,css0,css1,css2,css3,css4,css5,mag0,mag1,mag2\n");
    for r in &pass.records {
        let css: Vec<String> = r.css.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "{},{},{},{},{}", r.t, css.join(","), r.mag[0], r.mag[1], r.mag[2]);
    }
    out
}

/// Index of the largest attitude error.
pub fn argmax_error(rows: &[SeriesRow]) -> Option<usize> {
    rows.iter()
        .enumerate()
        .max_by(|a, b| a.1.att_err_deg.total_cmp(&b.1.att_err_deg))
        .map(|(i, _)| i)
}
