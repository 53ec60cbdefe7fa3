//! The pipeline commands. Each reads its inputs from and writes its outputs
//! to the run directory, plus a manifest tracing outputs to exact inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use aoitraj_core::aoi::{
    detect_aoi_onset, detect_steer_onset, leading_time_distribution, scatter_sigma_base, AoiOnsetParams, OnsetReport,
    SteerOnsetParams,
};
use aoitraj_core::evaluation::HORIZON_STEPS;
use aoitraj_core::nn::Parameters;
use aoitraj_core::predictor::{DiModel, FfLstm, ModelBundle, MtModel, MtpLstm, Normalizer};
use aoitraj_core::rng::stream;
use aoitraj_core::scenegen::raster::RASTER_LEN;
use aoitraj_core::scenegen::{Episode, EpisodeRecord, Maneuver, Split, SuiteKind, Window};
use aoitraj_core::{GAZE_PER_FRAME, NUM_MODES, OBS_DT, PRED_DT};

use crate::checkpoint::Checkpoint;
use crate::config::{features, RunConfig};
use crate::formats::{f, file_hash, opt, read_json, read_jsonl, sha256_hex, write_json, write_jsonl, Table};
use crate::pipeline::{self, tags, Corpus, ErrorModels, IntentEval};

/// Artifact paths relative to the run directory.
pub mod paths {
    pub const EPISODES: &str = "data/episodes.jsonl";
    pub const RECORDS: &str = "data/records.jsonl";
    pub const SPLIT: &str = "data/split.json";
    pub const DATA_SUMMARY: &str = "tables/data_summary.csv";
    pub const TAU_HISTOGRAM: &str = "tables/tau_histogram.csv";
    pub const DI: &str = "models/di.ckpt";
    pub const MT: &str = "models/mt.ckpt";
    pub const FF: &str = "models/ff.ckpt";
    pub const MTP: &str = "models/mtp.ckpt";
    pub const ERRORS: &str = "models/errors.json";
    pub const TRAIN_DI: &str = "tables/train_di.csv";
    pub const TRAIN_MT: &str = "tables/train_mt.csv";
    pub const INTENT: &str = "tables/intent.csv";
    pub const CONFUSION: &str = "tables/confusion.csv";
    pub const T2M_EVENTS: &str = "tables/t2m_events.csv";
    pub const INTENT_SERIES: &str = "tables/intent_series.csv";
    pub const TRAJ: &str = "tables/traj.csv";
    pub const EXCEEDANCE: &str = "tables/exceedance.csv";
    pub const PREDICTIONS: &str = "tables/predictions.csv";
    pub const ERROR_MODELS: &str = "tables/error_models.csv";
    pub const RISK_AUDIT: &str = "tables/risk_audit.csv";
    pub const RISK_TRACE: &str = "tables/risk_trace.csv";
    pub const RISK_ALARMS: &str = "tables/risk_alarms.csv";
    pub const SUITE: &str = "tables/risk_suite.csv";
    pub const ABLATION: &str = "tables/ablation.csv";
}

pub const COMMANDS: [&str; 8] =
    ["gen-data", "train-di", "train-mt", "eval-intent", "eval-traj", "fit-errors", "risk-sim", "ablate"];

#[derive(Debug, thiserror::Error)]
#[error("missing {path}; run `aoitraj {producer}` first")]
pub struct MissingArtifact {
    pub path: String,
    pub producer: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the effective configuration as TOML.
    pub config_hash: String,
    pub config: String,
    /// Git-style SHA-256 blob hashes.
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn manifest_path(command: &str) -> String {
    format!("manifests/{command}.json")
}

/// One command invocation: configuration and run directory.
pub struct Run {
    pub out: PathBuf,
    pub cfg: RunConfig,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(cfg: RunConfig, out: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        Ok(Run { out: out.into(), cfg, inputs: Vec::new(), outputs: Vec::new() })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Records an input, failing with the producing command if absent.
    fn input(&mut self, rel: &str, producer: &'static str) -> Result<PathBuf> {
        let p = self.path(rel);
        if !p.is_file() {
            return Err(MissingArtifact { path: p.display().to_string(), producer }.into());
        }
        if !self.inputs.iter().any(|i| i == rel) {
            self.inputs.push(rel.into());
        }
        Ok(p)
    }

    fn output(&mut self, rel: &str) -> PathBuf {
        self.outputs.push(rel.into());
        self.path(rel)
    }

    fn finish(self, command: &str) -> Result<Manifest> {
        let hash = |rels: &[String]| -> Result<Vec<FileHash>> {
            rels.iter().map(|r| Ok(FileHash { path: r.clone(), hash: file_hash(&self.path(r))? })).collect()
        };
        let config = self.cfg.to_toml();
        let m = Manifest {
            command: command.into(),
            seed: self.cfg.seed,
            config_hash: sha256_hex(config.as_bytes()),
            config,
            inputs: hash(&self.inputs)?,
            outputs: hash(&self.outputs)?,
        };
        write_json(&self.path(&manifest_path(command)), &m)?;
        Ok(m)
    }
}

pub fn run_command(command: &str, cfg: RunConfig, out: &Path) -> Result<Manifest> {
    let mut run = Run::new(cfg, out)?;
    match command {
        "gen-data" => gen_data(&mut run)?,
        "train-di" => train_di(&mut run)?,
        "train-mt" => train_mt(&mut run)?,
        "eval-intent" => eval_intent(&mut run)?,
        "eval-traj" => eval_traj(&mut run)?,
        "fit-errors" => fit_errors(&mut run)?,
        "risk-sim" => risk_sim(&mut run)?,
        "ablate" => ablate(&mut run)?,
        other => anyhow::bail!("unknown command {other:?}"),
    }
    run.finish(command)
}

/// One line of the record file. The raster is stored with the window so
/// the file is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredRecord {
    id: String,
    episode_id: String,
    t0: f64,
    frame: usize,
    obs: Vec<[f64; 9]>,
    steer: Vec<f64>,
    raster: Vec<f32>,
    label: u8,
    future: Vec<[f64; 2]>,
}

impl StoredRecord {
    fn new(r: &EpisodeRecord) -> Self {
        StoredRecord {
            id: record_id(r),
            episode_id: r.episode_id.clone(),
            t0: r.t0,
            frame: frame_of(r.t0),
            obs: r.window.obs.clone(),
            steer: r.window.steer.clone(),
            raster: r.window.raster.clone(),
            label: r.label,
            future: r.future.clone(),
        }
    }

    fn into_record(self) -> EpisodeRecord {
        EpisodeRecord {
            episode_id: self.episode_id,
            t0: self.t0,
            window: Window { obs: self.obs, steer: self.steer, raster: self.raster },
            label: self.label,
            future: self.future,
        }
    }
}

fn record_id(r: &EpisodeRecord) -> String {
    format!("{}:{:04}", r.episode_id, frame_of(r.t0))
}

fn frame_of(t: f64) -> usize {
    (t / OBS_DT).round() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplitFile {
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

fn class_counts(records: &[EpisodeRecord]) -> [usize; NUM_MODES] {
    let mut c = [0; NUM_MODES];
    for r in records {
        c[r.label as usize] += 1;
    }
    c
}

fn gen_data(run: &mut Run) -> Result<()> {
    let corpus = pipeline::generate(&run.cfg)?;
    let s = &corpus.split;
    let ep_path = run.output(paths::EPISODES);
    write_jsonl(&ep_path, &corpus.episodes)?;
    let mut all: Vec<&EpisodeRecord> = s.train.iter().chain(&s.val).chain(&s.test).collect();
    all.sort_by(|a, b| (&a.episode_id, frame_of(a.t0)).cmp(&(&b.episode_id, frame_of(b.t0))));
    let rec_path = run.output(paths::RECORDS);
    write_jsonl(&rec_path, all.iter().map(|r| StoredRecord::new(r)))?;
    let split_path = run.output(paths::SPLIT);
    write_json(
        &split_path,
        &SplitFile { train: s.train_ids.clone(), val: s.val_ids.clone(), test: s.test_ids.clone() },
    )?;

    let mut t = Table::new(&["split", "episodes", "straight", "right", "left"]);
    for (name, ids, recs) in
        [("train", &s.train_ids, &s.train), ("val", &s.val_ids, &s.val), ("test", &s.test_ids, &s.test)]
    {
        let c = class_counts(recs);
        t.push(vec![name.into(), ids.len().to_string(), c[0].to_string(), c[1].to_string(), c[2].to_string()]);
    }
    let mut eps = [0usize; NUM_MODES];
    for e in &corpus.episodes {
        eps[e.maneuver.label() as usize] += 1;
    }
    t.push(vec![
        "episodes".into(),
        corpus.episodes.len().to_string(),
        eps[0].to_string(),
        eps[1].to_string(),
        eps[2].to_string(),
    ]);
    t.write(&run.output(paths::DATA_SUMMARY))?;

    let turns: Vec<&Episode> = corpus.episodes.iter().filter(|e| e.maneuver != Maneuver::Straight).collect();
    let scripted: Vec<OnsetReport> = turns
        .iter()
        .map(|e| OnsetReport { aoi_onset: e.meta.gaze_shift, steer_onset: e.meta.steer_crossing })
        .collect();
    let measured: Vec<OnsetReport> = turns.iter().map(|e| measured_onsets(e)).collect::<Result<_>>()?;
    let mut h = Table::new(&["source", "lo", "hi", "count"]);
    let mut summary = Vec::new();
    for (name, reps) in [("scripted", &scripted), ("measured", &measured)] {
        let d = leading_time_distribution(reps);
        for b in &d.histogram {
            h.push(vec![name.into(), f(b.lo), f(b.hi), b.count.to_string()]);
        }
        summary.push(format!(
            "{name} lead mean {:.2} s over {} turns ({} excluded)",
            d.mean,
            d.leads.len(),
            d.excluded
        ));
    }
    h.write(&run.output(paths::TAU_HISTOGRAM))?;

    println!("episodes {} (straight {}, right {}, left {})", corpus.episodes.len(), eps[0], eps[1], eps[2]);
    println!("split episodes {}/{}/{}", s.train_ids.len(), s.val_ids.len(), s.test_ids.len());
    for (name, recs) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
        let c = class_counts(recs);
        println!("{name:5} records {:5} (straight {}, right {}, left {})", recs.len(), c[0], c[1], c[2]);
    }
    for l in summary {
        println!("{l}");
    }
    Ok(())
}

/// Leading time from the AOI and steering streams alone. The AOI baseline
/// deviation comes from the within-frame gaze scatter of the first second.
pub fn measured_onsets(e: &Episode) -> Result<OnsetReport> {
    let aoi = e.aoi();
    let mu: Vec<f64> = aoi.iter().map(|a| a.mu_x).collect();
    let mut params = AoiOnsetParams::default();
    params.sigma_base = scatter_sigma_base(&aoi, params.baseline, GAZE_PER_FRAME);
    Ok(OnsetReport {
        aoi_onset: detect_aoi_onset(&mu, &params)?,
        steer_onset: detect_steer_onset(&e.steer, &SteerOnsetParams::default()),
    })
}

pub fn load_corpus(run: &mut Run) -> Result<Corpus> {
    let ep_path = run.input(paths::EPISODES, "gen-data")?;
    let rec_path = run.input(paths::RECORDS, "gen-data")?;
    let split_path = run.input(paths::SPLIT, "gen-data")?;
    let episodes: Vec<Episode> = read_jsonl(&ep_path)?;
    let stored: Vec<StoredRecord> = read_jsonl(&rec_path)?;
    let split: SplitFile = read_json(&split_path)?;
    let by_id: BTreeMap<&str, &Episode> = episodes.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut which: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, ids) in [&split.train, &split.val, &split.test].into_iter().enumerate() {
        for id in ids {
            which.insert(id, i);
        }
    }
    let mut parts: [Vec<EpisodeRecord>; 3] = Default::default();
    for s in stored {
        let ep = by_id.get(s.episode_id.as_str()).with_context(|| format!("record {} has no episode", s.id))?;
        if s.frame >= ep.frames() || s.raster.len() != RASTER_LEN {
            anyhow::bail!("record {} is malformed", s.id);
        }
        let part =
            *which.get(s.episode_id.as_str()).with_context(|| format!("episode of record {} is in no split", s.id))?;
        parts[part].push(s.into_record());
    }
    let [train, val, test] = parts;
    let split = Split { train, val, test, train_ids: split.train, val_ids: split.val, test_ids: split.test };
    Ok(Corpus { episodes, split })
}

fn save_model<M: Parameters>(
    run: &mut Run,
    rel: &str,
    kind: &str,
    features: &str,
    hidden: usize,
    norm: &Normalizer,
    m: &M,
) -> Result<()> {
    let p = run.output(rel);
    if let Some(d) = p.parent() {
        std::fs::create_dir_all(d)?;
    }
    Checkpoint::from_model(kind, crate::config::features(features)?, hidden, norm, m).save(&p)?;
    Ok(())
}

fn history_rows(t: &mut Table, model: &str, rep: &aoitraj_core::predictor::TrainReport) {
    for e in &rep.history {
        t.push(vec![
            model.into(),
            e.epoch.to_string(),
            f(e.train_loss),
            f(e.val_loss),
            (e.epoch == rep.best_epoch).to_string(),
        ]);
    }
}

fn train_di(run: &mut Run) -> Result<()> {
    let corpus = load_corpus(run)?;
    let norm = pipeline::fit_normalizer(&corpus.split)?;
    let fs = features(&run.cfg.model.di_features)?;
    let (m, rep) = pipeline::train_di(&run.cfg, &corpus.split, &norm, fs, tags::DI)?;
    let (name, hidden) = (run.cfg.model.di_features.clone(), run.cfg.model.hidden);
    save_model(run, paths::DI, "di", &name, hidden, &norm, &m)?;
    let mut t = Table::new(&["model", "epoch", "train_loss", "val_loss", "best"]);
    history_rows(&mut t, fs.name(), &rep);
    t.write(&run.output(paths::TRAIN_DI))?;
    println!(
        "{}: best epoch {} of {}, validation loss {:.4}",
        fs.name(),
        rep.best_epoch,
        rep.history.len(),
        rep.best_val_loss
    );
    Ok(())
}

fn train_mt(run: &mut Run) -> Result<()> {
    let corpus = load_corpus(run)?;
    let norm = pipeline::fit_normalizer(&corpus.split)?;
    let tm = pipeline::train_trajectory_models(&run.cfg, &corpus.split, &norm)?;
    let h = run.cfg.model.hidden;
    let (mf, pf) = (run.cfg.model.mt_features.clone(), run.cfg.model.mtp_features.clone());
    save_model(run, paths::MT, "mt", &mf, h, &norm, &tm.mt)?;
    save_model(run, paths::FF, "ff", &mf, h, &norm, &tm.ff)?;
    save_model(run, paths::MTP, "mtp", &pf, h, &norm, &tm.mtp)?;
    let mut t = Table::new(&["model", "epoch", "train_loss", "val_loss", "best"]);
    for (name, rep) in ["MT", "FF-LSTM", "MTP-LSTM"].iter().zip(&tm.reports) {
        history_rows(&mut t, name, rep);
        println!(
            "{name}: best epoch {} of {}, validation loss {:.4}",
            rep.best_epoch,
            rep.history.len(),
            rep.best_val_loss
        );
    }
    t.write(&run.output(paths::TRAIN_MT))?;
    Ok(())
}

fn load_ckpt(run: &mut Run, rel: &str, producer: &'static str) -> Result<Checkpoint> {
    let p = run.input(rel, producer)?;
    Checkpoint::load(&p).with_context(|| format!("loading {}", p.display()))
}

fn load_di(run: &mut Run) -> Result<(DiModel, Normalizer)> {
    let c = load_ckpt(run, paths::DI, "train-di")?;
    let mut m = DiModel::new(c.features, c.hidden, &mut stream(0, 0));
    c.load_into("di", &mut m)?;
    Ok((m, c.normalizer()?))
}

fn load_mt(run: &mut Run) -> Result<(MtModel, FfLstm, MtpLstm)> {
    let c = load_ckpt(run, paths::MT, "train-mt")?;
    let mut mt = MtModel::new(c.features, c.hidden, &mut stream(0, 0));
    c.load_into("mt", &mut mt)?;
    let c = load_ckpt(run, paths::FF, "train-mt")?;
    let mut ff = FfLstm::new(c.features, c.hidden, &mut stream(0, 0));
    c.load_into("ff", &mut ff)?;
    let c = load_ckpt(run, paths::MTP, "train-mt")?;
    let mut mtp = MtpLstm::new(c.features, c.hidden, &mut stream(0, 0));
    c.load_into("mtp", &mut mtp)?;
    Ok((mt, ff, mtp))
}

fn load_bundle(run: &mut Run) -> Result<(ModelBundle, FfLstm, MtpLstm)> {
    let (di, norm) = load_di(run)?;
    let (mt, ff, mtp) = load_mt(run)?;
    Ok((ModelBundle { norm, di, mt }, ff, mtp))
}

const CLASSES: [&str; NUM_MODES] = ["straight", "right", "left"];

fn intent_header() -> Vec<String> {
    let mut h = vec!["model".to_string()];
    for c in CLASSES {
        for m in ["precision", "recall", "f1"] {
            h.push(format!("{c}_{m}"));
        }
    }
    h.extend(["accuracy", "t2m_mean", "t2m_events", "t2m_missed"].map(String::from));
    h
}

fn intent_row(e: &IntentEval) -> Vec<String> {
    let m = &e.metrics;
    let mut r = vec![e.model.clone()];
    for c in 0..NUM_MODES {
        r.extend([f(m.precision[c]), f(m.recall[c]), f(m.f1[c])]);
    }
    r.extend([f(m.accuracy()), opt(e.t2m.mean), e.t2m.events.to_string(), e.t2m.missed.to_string()]);
    r
}

fn print_intent(e: &IntentEval) {
    let m = &e.metrics;
    println!(
        "{:14} F1 straight {:.3} right {:.3} left {:.3}  T2M {} s ({} turns, {} missed)",
        e.model,
        m.f1[0],
        m.f1[1],
        m.f1[2],
        e.t2m.mean.map(|t| format!("{t:.3}")).unwrap_or_else(|| "-".into()),
        e.t2m.events,
        e.t2m.missed
    );
}

fn eval_intent(run: &mut Run) -> Result<()> {
    let corpus = load_corpus(run)?;
    let (di, norm) = load_di(run)?;
    let eps = corpus.episodes_in(&corpus.split.test_ids);
    let e = pipeline::eval_intent(&di, &norm, &corpus.split.test, &eps, run.cfg.eval.rule()?)?;
    let mut t = Table::new(&intent_header());
    t.push(intent_row(&e));
    t.write(&run.output(paths::INTENT))?;
    let mut c = Table::new(&["true", "pred_straight", "pred_right", "pred_left"]);
    for (i, row) in e.metrics.confusion.iter().enumerate() {
        c.push(vec![CLASSES[i].into(), row[0].to_string(), row[1].to_string(), row[2].to_string()]);
    }
    c.write(&run.output(paths::CONFUSION))?;
    let mut ev = Table::new(&["episode_id", "class", "steer_onset", "t2m"]);
    for x in &e.events {
        ev.push(vec![x.episode_id.clone(), CLASSES[x.class as usize].into(), f(x.steer_onset), opt(x.t2m)]);
    }
    ev.write(&run.output(paths::T2M_EVENTS))?;
    let mut s = Table::new(&["episode_id", "t", "p_straight", "p_right", "p_left", "label"]);
    for x in &e.series {
        s.push(vec![x.episode_id.clone(), f(x.t), f(x.probs[0]), f(x.probs[1]), f(x.probs[2]), x.label.to_string()]);
    }
    s.write(&run.output(paths::INTENT_SERIES))?;
    print_intent(&e);
    Ok(())
}

fn horizon_label(steps: usize) -> String {
    format!("{:.1}", steps as f64 * PRED_DT)
}

fn eval_traj(run: &mut Run) -> Result<()> {
    let corpus = load_corpus(run)?;
    let (bundle, ff, mtp) = load_bundle(run)?;
    let test = &corpus.split.test;
    let preds = pipeline::predict_all(&bundle, &ff, &mtp, test)?;
    let rows = pipeline::traj_table(&preds, test)?;

    let mut h = vec!["subset".to_string(), "model".into(), "records".into()];
    for s in HORIZON_STEPS {
        for m in ["ade", "fde", "sde"] {
            h.push(format!("{m}_{}s", horizon_label(s)));
        }
    }
    let mut t = Table::new(&h);
    let mut x = Table::new(&["subset", "model", "fde_gt_1m", "fde_gt_2m", "fde_gt_3m", "fde_gt_4m"]);
    for r in &rows {
        let mut row = vec![r.subset.to_string(), r.model.to_string(), r.metrics[0].records.to_string()];
        for m in &r.metrics {
            row.extend([f(m.ade), f(m.fde), f(m.sde)]);
        }
        t.push(row);
        let mut e = vec![r.subset.to_string(), r.model.to_string()];
        e.extend(r.exceedance.iter().map(|v| f(*v)));
        x.push(e);
        let last = r.metrics.last().expect("three horizons");
        println!("{:5} {:10} 3 s ADE {:.3} FDE {:.3} SDE {:.3}", r.subset, r.model, last.ade, last.fde, last.sde);
    }
    t.write(&run.output(paths::TRAJ))?;
    x.write(&run.output(paths::EXCEEDANCE))?;

    let mut h = vec![
        "record_id".to_string(),
        "model".into(),
        "p_straight".into(),
        "p_right".into(),
        "p_left".into(),
        "selected".into(),
    ];
    for k in 1..=aoitraj_core::PRED_LEN {
        h.extend([format!("x{k}"), format!("y{k}")]);
    }
    for k in 1..=aoitraj_core::PRED_LEN {
        h.extend([format!("gt_x{k}"), format!("gt_y{k}")]);
    }
    let mut p = Table::new(&h);
    for (i, r) in test.iter().enumerate() {
        for m in &preds {
            let mut row = vec![record_id(r), m.model.into()];
            match &m.modes {
                Some(ms) => {
                    let (probs, sel) = ms[i];
                    row.extend([f(probs[0]), f(probs[1]), f(probs[2]), sel.to_string()]);
                }
                None => row.extend([String::new(), String::new(), String::new(), String::new()]),
            }
            for w in &m.trajectories[i].waypoints {
                row.extend([f(w.x), f(w.y)]);
            }
            for g in &r.future {
                row.extend([f(g[0]), f(g[1])]);
            }
            p.push(row);
        }
    }
    p.write(&run.output(paths::PREDICTIONS))?;
    Ok(())
}

fn fit_errors(run: &mut Run) -> Result<()> {
    let corpus = load_corpus(run)?;
    let (bundle, _, mtp) = load_bundle(run)?;
    let errs = pipeline::fit_all_errors(&bundle, &mtp, &corpus.split.val, &run.cfg)?;
    write_json(&run.output(paths::ERRORS), &errs)?;
    let mut t = Table::new(&["model", "step", "mean_x", "mean_y", "s_xx", "s_xy", "s_yy", "n"]);
    for (name, ms) in [("M-EC-LSTM", &errs.full), ("MTP-LSTM", &errs.mtp)] {
        for m in ms {
            t.push(vec![
                name.into(),
                m.step.to_string(),
                f(m.mean.x),
                f(m.mean.y),
                f(m.s_xx),
                f(m.s_xy),
                f(m.s_yy),
                m.n.to_string(),
            ]);
        }
        let last = ms.last().expect("ten steps");
        let (sx, sy) = last.std();
        println!("{name}: 3 s error std along {sx:.3} m, across {sy:.3} m ({} samples per step)", last.n);
    }
    t.write(&run.output(paths::ERROR_MODELS))?;
    Ok(())
}

fn kind_name(k: SuiteKind) -> &'static str {
    match k {
        SuiteKind::Clear => "clear",
        SuiteKind::Conflict => "conflict",
        SuiteKind::EarlyTurn => "early_turn",
    }
}

fn risk_sim(run: &mut Run) -> Result<()> {
    let (bundle, _, mtp) = load_bundle(run)?;
    let p = run.input(paths::ERRORS, "fit-errors")?;
    let errs: ErrorModels = read_json(&p)?;
    let suite = pipeline::suite(&run.cfg)?;
    let sim = pipeline::risk_sim(&run.cfg, &bundle, &mtp, &errs, &suite)?;

    let mut s = Table::new(&["episode_id", "kind", "maneuver", "obstacle_id", "collision_time"]);
    for e in &suite {
        let m = e.episode.maneuver.name();
        if e.conflicts.is_empty() {
            s.push(vec![e.episode.id.clone(), kind_name(e.kind).into(), m.into(), String::new(), String::new()]);
        }
        for c in &e.conflicts {
            s.push(vec![e.episode.id.clone(), kind_name(e.kind).into(), m.into(), c.obstacle.to_string(), f(c.time)]);
        }
    }
    s.write(&run.output(paths::SUITE))?;

    let mut a = Table::new(&[
        "variant",
        "alarms",
        "true_alarms",
        "false_alarms",
        "missed",
        "false_clear",
        "false_conflict",
        "false_early_turn",
        "mean_lead",
        "min_lead",
    ]);
    for v in &sim.variants {
        let au = &v.audit;
        let mean = (!au.leads.is_empty()).then(|| au.leads.iter().sum::<f64>() / au.leads.len() as f64);
        let min = au.leads.iter().copied().reduce(f64::min);
        a.push(vec![
            v.variant.into(),
            (au.true_alarms + au.false_alarms).to_string(),
            au.true_alarms.to_string(),
            au.false_alarms.to_string(),
            au.missed.to_string(),
            v.false_by_kind[0].to_string(),
            v.false_by_kind[1].to_string(),
            v.false_by_kind[2].to_string(),
            opt(mean),
            opt(min),
        ]);
        println!(
            "{:8} alarms {:2}: true {:2}, false {:2}, missed {}; lead min {} s",
            v.variant,
            au.true_alarms + au.false_alarms,
            au.true_alarms,
            au.false_alarms,
            au.missed,
            min.map(|m| format!("{m:.1}")).unwrap_or_else(|| "-".into())
        );
    }
    a.write(&run.output(paths::RISK_AUDIT))?;

    let mut al = Table::new(&["variant", "episode_id", "t", "obstacle_id"]);
    for v in &sim.variants {
        for (id, e) in &v.alarms {
            al.push(vec![v.variant.into(), id.clone(), f(e.t), e.obstacle.map(|o| o.to_string()).unwrap_or_default()]);
        }
    }
    al.write(&run.output(paths::RISK_ALARMS))?;

    let mut t = Table::new(&["variant", "episode_id", "t", "p_c", "argmax_step", "obstacle_id", "alarm"]);
    for r in &sim.trace {
        let row = &r.row;
        t.push(vec![
            r.variant.into(),
            r.episode_id.clone(),
            f(row.t),
            f(row.p_c),
            row.step.to_string(),
            row.obstacle.map(|o| o.to_string()).unwrap_or_default(),
            u8::from(row.alarm).to_string(),
        ]);
    }
    t.write(&run.output(paths::RISK_TRACE))?;
    Ok(())
}

fn ablate(run: &mut Run) -> Result<()> {
    let corpus = load_corpus(run)?;
    let norm = pipeline::fit_normalizer(&corpus.split)?;
    let rows = pipeline::ablate(&run.cfg, &corpus, &norm)?;
    let mut t = Table::new(&intent_header());
    for (e, _) in &rows {
        t.push(intent_row(e));
        print_intent(e);
    }
    t.write(&run.output(paths::ABLATION))?;
    Ok(())
}
