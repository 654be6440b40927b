//! Experiment pipelines shared by the command line and the acceptance suite.

use std::time::Instant;

use anyhow::{bail, Context, Result};
use camel_core::domain::{Detection, TrackRecord};
use camel_core::eval::{association_benchmark, gt_states, EvalFrame, LabelScorer, SingleCueScorer, SummaryCamelScorer};
use camel_core::metrics::{idf1, mota, Tally};
use camel_core::model::{Camel, ModelConfig};
use camel_core::oracles::{association_oracle_sequence, FusionOracleScorer};
use camel_core::synth::{generate, SynthSequence};
use camel_core::tracker::{run_sequence, CamelScorer, Scorer};
use camel_core::train::{
    preprocess, pretrain, train_joint, InputMode, SummaryInputs, TrainConfig, TrainReport, TrainingStore,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataio::RunConfig;

/// Training and held-out sequences drawn from one generator run.
pub struct Suite {
    pub train: Vec<SynthSequence>,
    pub test: Vec<SynthSequence>,
}

pub fn synth_suite(cfg: &RunConfig) -> Result<Suite> {
    let mut synth = cfg.synth.clone();
    synth.n_sequences += cfg.eval.test_sequences;
    let mut all = generate(&synth)?;
    let test = all.split_off(cfg.synth.n_sequences);
    Ok(Suite { train: all, test })
}

pub fn labelled_store(seqs: &[SynthSequence]) -> Result<TrainingStore> {
    let videos = seqs
        .iter()
        .map(|s| preprocess(s.name.clone(), &s.gt, s.detections.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrainingStore { videos })
}

/// Checks that every model cue exists in the data with the same width.
pub fn check_model_cues(model: &ModelConfig, dets: &[Detection]) -> Result<()> {
    for spec in &model.cues {
        if let Some(c) = dets.iter().find_map(|d| d.cue(spec.id)) {
            if c.width() != spec.width {
                bail!(
                    "cue {} has width {} in the data but {} in the model config",
                    spec.id,
                    c.width(),
                    spec.width
                );
            }
        }
    }
    Ok(())
}

pub fn eval_frames(store: &TrainingStore, train: &TrainConfig) -> Vec<EvalFrame> {
    store
        .videos
        .iter()
        .flat_map(|v| gt_states(v, train.bank_capacity, train.max_age))
        .collect()
}

pub fn summary_inputs(cfg: &RunConfig) -> SummaryInputs {
    SummaryInputs {
        alpha: cfg.heuristics.alpha,
        kalman: cfg.heuristics.kalman(),
        image_w: cfg.synth.image_w,
        image_h: cfg.synth.image_h,
    }
}

/// Model after each phase of training.
pub struct Trained {
    pub pretrained: Option<Camel>,
    pub model: Camel,
    pub report: TrainReport,
}

/// Fresh model from `model_cfg`, then both training phases as in `camel_core::train::train`.
pub fn train_model(
    cfg: &RunConfig,
    model_cfg: ModelConfig,
    store: &TrainingStore,
    train: &TrainConfig,
    mode: &InputMode,
) -> Result<Trained> {
    train.validate()?;
    let mut model = Camel::new(model_cfg, cfg.seed)?;
    let mut report = TrainReport::default();
    let pretrained = match mode {
        InputMode::Full => {
            let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
            report.pretrain_losses = pretrain(&mut model, store, train, &mut rng)?;
            Some(model.clone())
        }
        InputMode::Summary(_) => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    rng.set_stream(1);
    report.losses = train_joint(&mut model, store, train, mode, &mut rng)?;
    Ok(Trained {
        pretrained,
        model,
        report,
    })
}

/// Pooled tracker metrics over several sequences.
#[derive(Debug, Clone, Copy, Serialize, Default)]
pub struct TrackingScores {
    pub idf1: f64,
    pub mota: f64,
}

fn pooled(results: &[(Vec<TrackRecord>, &[TrackRecord])], iou: f64) -> TrackingScores {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let (mut errors, mut num_gt) = (0usize, 0usize);
    for (pred, gt) in results {
        let i = idf1(gt, pred, iou);
        tp += i.idtp;
        fp += i.idfp;
        fn_ += i.idfn;
        let m = mota(gt, pred, iou);
        errors += m.false_negatives + m.false_positives + m.id_switches;
        num_gt += m.num_gt;
    }
    let denom = 2 * tp + fp + fn_;
    TrackingScores {
        idf1: if denom == 0 {
            1.0
        } else {
            2.0 * tp as f64 / denom as f64
        },
        mota: if num_gt == 0 {
            1.0
        } else {
            1.0 - errors as f64 / num_gt as f64
        },
    }
}

pub fn track_suite<S: Scorer + ?Sized>(scorer: &S, seqs: &[SynthSequence], cfg: &RunConfig) -> Result<TrackingScores> {
    let mut results = Vec::new();
    for s in seqs {
        let out =
            run_sequence(&s.frames(), scorer, &cfg.tracker, false).with_context(|| format!("tracking {}", s.name))?;
        results.push((out.records, s.gt.as_slice()));
    }
    Ok(pooled(&results, cfg.eval.iou_threshold))
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub id: u8,
    pub name: &'static str,
    pub correct: usize,
    pub total: usize,
    pub assacc: f64,
    pub idf1: Option<f64>,
    pub mota: Option<f64>,
    #[serde(skip)]
    pub seconds: f64,
}

pub const ABLATION_NAMES: [&str; 12] = [
    "EMA appearance",
    "TE appearance",
    "Kalman motion",
    "TE box",
    "TE keypoints",
    "fixed fusion (lambda 0.5)",
    "summary-input CAMEL (box + appearance)",
    "CAMEL (box + appearance)",
    "CAMEL without augmentation",
    "CAMEL",
    "fusion oracle",
    "association oracle",
];

fn subset_config(model: &ModelConfig, ids: &[usize]) -> ModelConfig {
    ModelConfig {
        cues: model.cues.iter().copied().filter(|c| ids.contains(&c.id)).collect(),
        ..model.clone()
    }
}

/// Runs the requested experiment rows (1 to 12) on the synthetic suite. Tracker
/// metrics are skipped when `tracking` is false.
pub fn ablate(cfg: &RunConfig, rows: &[u8], tracking: bool, mut log: impl FnMut(&str)) -> Result<Vec<AblationRow>> {
    if let Some(bad) = rows.iter().find(|r| !(1..=12).contains(*r)) {
        bail!("no experiment {bad}");
    }
    let suite = synth_suite(cfg)?;
    let store = labelled_store(&suite.train)?;
    let test_store = labelled_store(&suite.test)?;
    let frames = eval_frames(&test_store, &cfg.train);
    check_model_cues(
        &cfg.model,
        &suite
            .train
            .iter()
            .flat_map(|s| s.detections.first().cloned())
            .collect::<Vec<_>>(),
    )?;
    log(&format!(
        "suite: {} training and {} test sequences, {} evaluation frames",
        suite.train.len(),
        suite.test.len(),
        frames.len()
    ));

    let wants = |ids: &[u8]| ids.iter().any(|i| rows.contains(i));
    let mut timed = |what: &str, f: &mut dyn FnMut() -> Result<Trained>| -> Result<Trained> {
        let t = Instant::now();
        let out = f()?;
        log(&format!("trained {what} in {:.1}s", t.elapsed().as_secs_f64()));
        Ok(out)
    };
    let full = if wants(&[2, 4, 5, 10]) {
        Some(timed("CAMEL", &mut || {
            train_model(cfg, cfg.model.clone(), &store, &cfg.train, &InputMode::Full)
        })?)
    } else {
        None
    };
    let no_aug = if wants(&[9]) {
        let mut t = cfg.train.clone();
        t.augment.enabled = false;
        Some(timed("CAMEL without augmentation", &mut || {
            train_model(cfg, cfg.model.clone(), &store, &t, &InputMode::Full)
        })?)
    } else {
        None
    };
    let pair = subset_config(&cfg.model, &[0, 1]);
    let two_cue = if wants(&[8]) {
        Some(timed("two-cue CAMEL", &mut || {
            train_model(cfg, pair.clone(), &store, &cfg.train, &InputMode::Full)
        })?)
    } else {
        None
    };
    let summary_mode = InputMode::Summary(summary_inputs(cfg));
    let summary = if wants(&[7]) {
        Some(timed("summary-input CAMEL", &mut || {
            train_model(cfg, pair.clone(), &store, &cfg.train, &summary_mode)
        })?)
    } else {
        None
    };

    let mut out = Vec::new();
    for &id in rows {
        let t = Instant::now();
        let fusion = FusionOracleScorer {
            alpha: cfg.heuristics.alpha,
            kalman: cfg.heuristics.kalman(),
            max_cost: cfg.heuristics.max_cost,
            ..FusionOracleScorer::default()
        };
        let pretrained = || {
            full.as_ref()
                .and_then(|f| f.pretrained.as_ref())
                .expect("trained above")
        };
        let scorer: Box<dyn Scorer + '_> = match id {
            1 => Box::new(cfg.heuristics.ema()),
            2 => Box::new(SingleCueScorer {
                model: pretrained(),
                cue: 1,
            }),
            3 => Box::new(cfg.heuristics.kf()),
            4 => Box::new(SingleCueScorer {
                model: pretrained(),
                cue: 0,
            }),
            5 => Box::new(SingleCueScorer {
                model: pretrained(),
                cue: 2,
            }),
            6 => Box::new(cfg.heuristics.fused()),
            7 => Box::new(SummaryCamelScorer {
                model: &summary.as_ref().expect("trained above").model,
                inputs: summary_inputs(cfg),
            }),
            8 => Box::new(CamelScorer {
                model: &two_cue.as_ref().expect("trained above").model,
            }),
            9 => Box::new(CamelScorer {
                model: &no_aug.as_ref().expect("trained above").model,
            }),
            10 => Box::new(CamelScorer {
                model: &full.as_ref().expect("trained above").model,
            }),
            11 => Box::new(fusion),
            _ => Box::new(LabelScorer),
        };
        let tally: Tally = association_benchmark(scorer.as_ref(), &frames)?;
        let scores = if !tracking {
            None
        } else if id == 12 {
            let results: Vec<_> = suite
                .test
                .iter()
                .map(|s| (association_oracle_sequence(&s.frames(), &s.gt), s.gt.as_slice()))
                .collect();
            Some(pooled(&results, cfg.eval.iou_threshold))
        } else {
            Some(track_suite(scorer.as_ref(), &suite.test, cfg)?)
        };
        let row = AblationRow {
            id,
            name: ABLATION_NAMES[id as usize - 1],
            correct: tally.correct,
            total: tally.total,
            assacc: tally.fraction().unwrap_or(0.0),
            idf1: scores.map(|s| s.idf1),
            mota: scores.map(|s| s.mota),
            seconds: t.elapsed().as_secs_f64(),
        };
        log(&format!("exp {:>2} {:<40} assacc {:.4}", row.id, row.name, row.assacc));
        out.push(row);
    }
    Ok(out)
}

pub fn format_table(rows: &[AblationRow]) -> String {
    let mut s = format!(
        "{:>3}  {:<40} {:>8} {:>8} {:>8}\n",
        "exp", "method", "assacc", "idf1", "mota"
    );
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    for r in rows {
        s.push_str(&format!(
            "{:>3}  {:<40} {:>8.4} {:>8} {:>8}\n",
            r.id,
            r.name,
            r.assacc,
            opt(r.idf1),
            opt(r.mota)
        ));
    }
    s
}
