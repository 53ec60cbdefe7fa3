//! The experiment pipeline on in-memory data. Commands in [`crate::commands`]
//! wrap these steps with file handoff.

use anyhow::{anyhow, Context, Result};

use aoitraj_core::evaluation::{
    alarm_audit, exceedance_table, final_errors, intent_metrics, summarize_t2m, time_to_maneuver, traj_metrics_all,
    AlarmAudit, IntentMetrics, T2mRule, T2mSummary, TrajMetrics, EXCEEDANCE_THRESHOLDS,
};
use aoitraj_core::geometry::{Trajectory, Vec2};
use aoitraj_core::predictor::{
    argmax, ctra_forecast, encode_records, filter_trajectory, predict_intentions, predict_mtp, train, DiModel,
    FeatureSet, FfLstm, ModeSet, ModelBundle, MtModel, MtpLstm, Normalizer, TrainReport, Trainable,
};
use aoitraj_core::risk::{
    alarm_events, build_trace, ctra_ra, horizon_risk, mtp_ra, AlarmEvent, HorizonRisk, Obstacle, TraceRow,
};
use aoitraj_core::riskstats::{fit_step_models, trajectory_errors, StepErrorModel};
use aoitraj_core::rng::{derive_seed, stream};
use aoitraj_core::scenegen::{
    generate_corpus, risk_suite, split_dataset, window_at, window_dataset, Episode, EpisodeRecord, Split, SuiteEpisode,
    Window,
};
use aoitraj_core::{NUM_MODES, OBS_DT, OBS_LEN, PRED_LEN};

use crate::config::{features, RunConfig};

/// Stream tags under the master seed.
pub mod tags {
    pub const CORPUS: u64 = 0x10;
    pub const SPLIT: u64 = 0x11;
    pub const DI: u64 = 0x20;
    pub const MT: u64 = 0x21;
    pub const FF: u64 = 0x22;
    pub const MTP: u64 = 0x23;
    pub const ABLATION: u64 = 0x28;
    pub const SUITE: u64 = 0x30;
    pub const RISK: u64 = 0x31;
}

pub fn stage_seed(cfg: &RunConfig, tag: u64) -> u64 {
    derive_seed(cfg.seed, tag)
}

/// Generated episodes and their record split.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub episodes: Vec<Episode>,
    pub split: Split,
}

impl Corpus {
    pub fn episodes_in(&self, ids: &[String]) -> Vec<&Episode> {
        self.episodes.iter().filter(|e| ids.contains(&e.id)).collect()
    }
}

pub fn generate(cfg: &RunConfig) -> Result<Corpus> {
    let episodes = generate_corpus(&cfg.data.corpus, stage_seed(cfg, tags::CORPUS))?;
    let records = window_dataset(&episodes, cfg.data.stride);
    let split = split_dataset(records, stage_seed(cfg, tags::SPLIT))?;
    Ok(Corpus { episodes, split })
}

pub fn fit_normalizer(split: &Split) -> Result<Normalizer> {
    Ok(Normalizer::fit(&split.train)?)
}

/// Trains `model` on the split's train records with early stopping on its
/// validation records.
pub fn fit<M: Trainable>(
    model: &mut M,
    split: &Split,
    norm: &Normalizer,
    cfg: &RunConfig,
    tag: u64,
) -> Result<TrainReport> {
    let f = model.features();
    let tr = encode_records(&split.train, norm, f)?;
    let va = encode_records(&split.val, norm, f)?;
    Ok(train(model, &tr, &va, &cfg.model.train_config(stage_seed(cfg, tag ^ 0x7400)))?)
}

pub fn new_di(cfg: &RunConfig, f: FeatureSet, tag: u64) -> DiModel {
    DiModel::new(f, cfg.model.hidden, &mut stream(stage_seed(cfg, tag), 0))
}

pub fn train_di(
    cfg: &RunConfig,
    split: &Split,
    norm: &Normalizer,
    f: FeatureSet,
    tag: u64,
) -> Result<(DiModel, TrainReport)> {
    let mut m = new_di(cfg, f, tag);
    let rep = fit(&mut m, split, norm, cfg, tag)?;
    Ok((m, rep))
}

/// Multimodal model plus the two learned baselines.
pub struct TrajectoryModels {
    pub mt: MtModel,
    pub ff: FfLstm,
    pub mtp: MtpLstm,
    pub reports: [TrainReport; 3],
}

pub fn train_trajectory_models(cfg: &RunConfig, split: &Split, norm: &Normalizer) -> Result<TrajectoryModels> {
    let mf = features(&cfg.model.mt_features)?;
    let h = cfg.model.hidden;
    let mut mt = MtModel::new(mf, h, &mut stream(stage_seed(cfg, tags::MT), 0));
    let r_mt = fit(&mut mt, split, norm, cfg, tags::MT)?;
    let mut ff = FfLstm::new(mf, h, &mut stream(stage_seed(cfg, tags::FF), 0));
    let r_ff = fit(&mut ff, split, norm, cfg, tags::FF)?;
    let mut mtp = MtpLstm::new(features(&cfg.model.mtp_features)?, h, &mut stream(stage_seed(cfg, tags::MTP), 0));
    let r_mtp = fit(&mut mtp, split, norm, cfg, tags::MTP)?;
    Ok(TrajectoryModels { mt, ff, mtp, reports: [r_mt, r_ff, r_mtp] })
}

/// One intention prediction per 0.1 s frame of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentTick {
    pub episode_id: String,
    pub t: f64,
    pub probs: [f64; NUM_MODES],
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct T2mEvent {
    pub episode_id: String,
    pub class: u8,
    pub steer_onset: f64,
    pub t2m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntentEval {
    pub model: String,
    pub metrics: IntentMetrics,
    pub t2m: T2mSummary,
    pub events: Vec<T2mEvent>,
    pub series: Vec<IntentTick>,
}

/// Every full window of an episode with its reference frame.
pub fn episode_windows(ep: &Episode) -> Vec<(usize, Window)> {
    let aoi = ep.aoi();
    (OBS_LEN - 1..ep.frames()).filter_map(|k| window_at(ep, &aoi, k).map(|w| (k, w))).collect()
}

pub fn intent_series(di: &DiModel, norm: &Normalizer, ep: &Episode) -> Result<Vec<IntentTick>> {
    let ws = episode_windows(ep);
    let refs: Vec<&Window> = ws.iter().map(|(_, w)| w).collect();
    let probs = predict_intentions(di, norm, &refs)?;
    Ok(ws
        .iter()
        .zip(probs)
        .map(|((k, _), p)| IntentTick { episode_id: ep.id.clone(), t: ep.time(*k), probs: p, label: ep.labels[*k] })
        .collect())
}

/// Record-level classification metrics on `records` and per-turn T2M on
/// the turn episodes among `episodes`.
pub fn eval_intent(
    di: &DiModel,
    norm: &Normalizer,
    records: &[EpisodeRecord],
    episodes: &[&Episode],
    rule: T2mRule,
) -> Result<IntentEval> {
    let ws: Vec<&Window> = records.iter().map(|r| &r.window).collect();
    let pred: Vec<usize> = predict_intentions(di, norm, &ws)?.iter().map(|p| argmax(p)).collect();
    let truth: Vec<usize> = records.iter().map(|r| r.label as usize).collect();
    let metrics = intent_metrics(&pred, &truth)?;
    let mut events = Vec::new();
    let mut series = Vec::new();
    for ep in episodes {
        let ticks = intent_series(di, norm, ep)?;
        if let (true, Some(onset)) = (ep.maneuver.label() != 0, ep.meta.steer_crossing) {
            let class = ep.maneuver.label();
            let pairs: Vec<(f64, usize)> = ticks.iter().map(|t| (t.t, argmax(&t.probs))).collect();
            let t2m = time_to_maneuver(&pairs, class as usize, onset, rule);
            events.push(T2mEvent { episode_id: ep.id.clone(), class, steer_onset: onset, t2m });
        }
        series.extend(ticks);
    }
    let t2m = summarize_t2m(&events.iter().map(|e| e.t2m).collect::<Vec<_>>());
    Ok(IntentEval { model: di.features.name().into(), metrics, t2m, events, series })
}

/// Trajectories of every evaluated model on the same records.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajPredictions {
    pub model: &'static str,
    pub trajectories: Vec<Trajectory>,
    /// Mode probabilities and the selected mode, for multimodal models.
    pub modes: Option<Vec<([f64; NUM_MODES], usize)>>,
}

pub const FULL_MODEL: &str = "M-EC-LSTM";

pub fn predict_all(
    bundle: &ModelBundle,
    ff: &FfLstm,
    mtp: &MtpLstm,
    records: &[EpisodeRecord],
) -> Result<Vec<TrajPredictions>> {
    let ws: Vec<&Window> = records.iter().map(|r| &r.window).collect();
    let ctra =
        TrajPredictions { model: "CTRA", trajectories: ws.iter().map(|w| ctra_forecast(w)).collect(), modes: None };
    let ffp = TrajPredictions {
        model: "FF-LSTM",
        trajectories: aoitraj_core::predictor::predict_ff(ff, &bundle.norm, &ws)?,
        modes: None,
    };
    let selected = |sets: Vec<ModeSet>, model| {
        let modes = sets.iter().map(|m| (m.probs, filter_trajectory(m).0)).collect();
        let trajectories = sets.iter().map(|m| filter_trajectory(m).1.clone()).collect();
        TrajPredictions { model, trajectories, modes: Some(modes) }
    };
    let mtpp = selected(predict_mtp(mtp, &bundle.norm, &ws)?, "MTP-LSTM");
    let full = selected(bundle.predict_windows(&ws)?, FULL_MODEL);
    Ok(vec![ctra, ffp, mtpp, full])
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajRow {
    pub model: &'static str,
    pub subset: &'static str,
    pub metrics: Vec<TrajMetrics>,
    pub exceedance: Vec<f64>,
}

/// Metrics per model on all records and on the turn-labelled ones.
pub fn traj_table(preds: &[TrajPredictions], records: &[EpisodeRecord]) -> Result<Vec<TrajRow>> {
    let truths: Vec<Vec<Vec2>> = records.iter().map(|r| r.future_points()).collect();
    let mut rows = Vec::new();
    for subset in ["all", "turns"] {
        let keep: Vec<usize> = (0..records.len()).filter(|&i| subset == "all" || records[i].label != 0).collect();
        if keep.is_empty() {
            continue;
        }
        for p in preds {
            let pairs: Vec<(&Trajectory, &[Vec2])> =
                keep.iter().map(|&i| (&p.trajectories[i], truths[i].as_slice())).collect();
            let metrics = traj_metrics_all(&pairs)?;
            let exceedance = exceedance_table(&final_errors(&pairs, PRED_LEN), &EXCEEDANCE_THRESHOLDS);
            rows.push(TrajRow { model: p.model, subset, metrics, exceedance });
        }
    }
    Ok(rows)
}

/// Per-step error Gaussians of `preds` against `records`.
pub fn fit_errors(preds: &[Trajectory], records: &[EpisodeRecord], cfg: &RunConfig) -> Result<Vec<StepErrorModel>> {
    let mut samples = Vec::new();
    for (p, r) in preds.iter().zip(records) {
        samples.extend(trajectory_errors(&p.waypoints, &r.future_points(), cfg.errors.min_displacement)?);
    }
    Ok(fit_step_models(&samples, PRED_LEN, cfg.errors.min_samples)?)
}

/// Error models for the full pipeline and for the MTP baseline, fitted on
/// the validation records.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorModels {
    pub full: Vec<StepErrorModel>,
    pub mtp: Vec<StepErrorModel>,
}

pub fn fit_all_errors(
    bundle: &ModelBundle,
    mtp: &MtpLstm,
    val: &[EpisodeRecord],
    cfg: &RunConfig,
) -> Result<ErrorModels> {
    let ws: Vec<&Window> = val.iter().map(|r| &r.window).collect();
    let full: Vec<Trajectory> = bundle.predict_windows(&ws)?.iter().map(|m| filter_trajectory(m).1.clone()).collect();
    let m: Vec<Trajectory> =
        predict_mtp(mtp, &bundle.norm, &ws)?.iter().map(|m| filter_trajectory(m).1.clone()).collect();
    Ok(ErrorModels {
        full: fit_errors(&full, val, cfg).context("full pipeline errors")?,
        mtp: fit_errors(&m, val, cfg).context("MTP errors")?,
    })
}

/// The three risk assessment variants, in report order.
pub const RA_VARIANTS: [&str; 3] = ["M-EC-RA", "CTRA-RA", "MTP-RA"];

#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub variant: &'static str,
    pub episode_id: String,
    pub row: TraceRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub variant: &'static str,
    pub audit: AlarmAudit,
    /// False alarms per suite kind (clear, conflict, early turn).
    pub false_by_kind: [usize; 3],
    pub alarms: Vec<(String, AlarmEvent)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskSim {
    pub variants: Vec<VariantResult>,
    pub trace: Vec<RiskRow>,
}

/// Obstacles in the frame of the observed ego pose at frame `k`, velocities from
/// frames `k − 1` and `k`.
pub fn obstacles_at(ep: &Episode, k: usize, cfg: &RunConfig) -> Vec<Obstacle> {
    let anchor = ep.observed[k].pose;
    ep.pedestrians
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let last = anchor.to_local(p.positions[k]);
            let prev = if k > 0 { anchor.to_local(p.positions[k - 1]) } else { last };
            Obstacle::from_track(j, prev, last, OBS_DT, cfg.risk.ped_length, cfg.risk.ped_width)
        })
        .collect()
}

fn kind_index(s: &SuiteEpisode) -> usize {
    use aoitraj_core::scenegen::SuiteKind::*;
    match s.kind {
        Clear => 0,
        Conflict => 1,
        EarlyTurn => 2,
    }
}

pub fn suite(cfg: &RunConfig) -> Result<Vec<SuiteEpisode>> {
    Ok(risk_suite(&cfg.suite, stage_seed(cfg, tags::SUITE))?)
}

/// Runs the three variants over the scripted suite. Each episode is assessed
/// at 10 Hz from its first full window until its first scripted collision.
pub fn risk_sim(
    cfg: &RunConfig,
    bundle: &ModelBundle,
    mtp: &MtpLstm,
    errors: &ErrorModels,
    suite: &[SuiteEpisode],
) -> Result<RiskSim> {
    let rc = &cfg.risk;
    let base = stage_seed(cfg, tags::RISK);
    let mut trace = Vec::new();
    let mut variants: Vec<VariantResult> = RA_VARIANTS
        .iter()
        .map(|&v| VariantResult {
            variant: v,
            audit: AlarmAudit { true_alarms: 0, false_alarms: 0, missed: 0, leads: Vec::new() },
            false_by_kind: [0; 3],
            alarms: Vec::new(),
        })
        .collect();
    for (i, s) in suite.iter().enumerate() {
        let ep = &s.episode;
        let stop = s.conflicts.iter().map(|c| c.time).fold(f64::INFINITY, f64::min);
        let ws: Vec<(usize, Window)> =
            episode_windows(ep).into_iter().filter(|(k, _)| ep.time(*k) < stop - 1e-9).collect();
        let refs: Vec<&Window> = ws.iter().map(|(_, w)| w).collect();
        let times: Vec<f64> = ws.iter().map(|(k, _)| ep.time(*k)).collect();
        let full_modes = bundle.predict_windows(&refs)?;
        let mtp_modes = predict_mtp(mtp, &bundle.norm, &refs)?;
        let mut risks: [Vec<HorizonRisk>; 3] = Default::default();
        for (j, (k, w)) in ws.iter().enumerate() {
            let obs = obstacles_at(ep, *k, cfg);
            let seed = derive_seed(base, ((i as u64) << 32) | *k as u64);
            let full = filter_trajectory(&full_modes[j]).1;
            risks[0].push(horizon_risk(full, &errors.full, &obs, rc, seed).map_err(|e| anyhow!("{}: {e}", ep.id))?);
            risks[1].push(ctra_ra(&ctra_forecast(w), &obs, rc));
            risks[2].push(mtp_ra(&mtp_modes[j], &errors.mtp, &obs, rc, seed).map_err(|e| anyhow!("{}: {e}", ep.id))?);
        }
        for (v, rs) in variants.iter_mut().zip(&risks) {
            let rows = build_trace(&times, rs, rc);
            let alarms = alarm_events(&rows);
            let a = alarm_audit(&alarms, &s.conflicts);
            v.audit.true_alarms += a.true_alarms;
            v.audit.false_alarms += a.false_alarms;
            v.audit.missed += a.missed;
            v.audit.leads.extend(a.leads);
            v.false_by_kind[kind_index(s)] += a.false_alarms;
            v.alarms.extend(alarms.into_iter().map(|e| (ep.id.clone(), e)));
            trace.extend(rows.into_iter().map(|row| RiskRow { variant: v.variant, episode_id: ep.id.clone(), row }));
        }
    }
    Ok(RiskSim { variants, trace })
}

/// Table I rows: one intention model per ablation feature set.
pub fn ablate(cfg: &RunConfig, corpus: &Corpus, norm: &Normalizer) -> Result<Vec<(IntentEval, TrainReport)>> {
    let rule = cfg.eval.rule()?;
    let test_eps = corpus.episodes_in(&corpus.split.test_ids);
    FeatureSet::ABLATION
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let (m, rep) = train_di(cfg, &corpus.split, norm, f, tags::ABLATION + i as u64)?;
            Ok((eval_intent(&m, norm, &corpus.split.test, &test_eps, rule)?, rep))
        })
        .collect()
}
