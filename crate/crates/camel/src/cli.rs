//! Command line: argument parsing, seed resolution and the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use camel_core::metrics::{idf1, mota, sequence_association_accuracy};
use camel_core::model::Camel;
use camel_core::oracles::{association_oracle_sequence, FusionOracleScorer};
use camel_core::tracker::{run_sequence, CamelScorer, Scorer};
use camel_core::train::{preprocess, InputMode, SummaryInputs, TrainConfig, TrainingStore, Video};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataio::sequence::{
    read_sequence, read_tracks, sequence_dirs, write_detections, write_file, write_synth_sequence, DETECTIONS_FILE,
    GT_FILE, LABELS_FILE,
};
use crate::dataio::{config_hash, emit_tracks, RunConfig, WeightsFile};
use crate::manifest::{manifest_path_for, Manifest};
use crate::pipeline::{ablate, check_model_cues, eval_frames, format_table, synth_suite, train_model};

pub const SEED_ENV: &str = "CAMEL_SEED";

/// Bad invocation detected after argument parsing; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(
    name = "camel",
    version,
    about = "Learned multi-cue association for tracking-by-detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Camel,
    Ema,
    Kf,
    Fused,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    Association,
    Fusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainMode {
    Full,
    Summary,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic training and test sequences.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Label detections with ground-truth identities for training.
    Preprocess {
        /// Directory of sequence directories holding det.txt and gt.txt.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a model on preprocessed sequences.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_augment: bool,
        #[arg(long, value_enum, default_value_t = TrainMode::Full)]
        mode: TrainMode,
    },
    /// Train over a parameter grid and score each point on the last sequence.
    Gridsearch {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// `name=v1,v2;name2=v3`, names from the augmentation section or
        /// learning_rate, temperature, epochs.
        #[arg(long)]
        param_grid: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Track one sequence and write MOT results.
    Track {
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Sequence directory holding det.txt and cue files.
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Motion weight for the fused baseline.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Score a result file against ground truth.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "idf1,mota,assacc")]
        metrics: Vec<String>,
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Run an oracle with ground-truth access.
    Oracle {
        #[arg(long, value_enum)]
        kind: OracleKind,
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Rerun the twelve-row ablation on the synthetic suite.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        rows: Option<Vec<u8>>,
        /// Skip the full tracker runs (IDF1, MOTA).
        #[arg(long)]
        no_tracking: bool,
    },
}

/// Flag, then `CAMEL_SEED`, then the config file.
pub fn resolve_seed(flag: Option<u64>, config_seed: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(config_seed),
    }
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RunConfig::from_toml(&text).with_context(|| format!("{}", path.display()))
}

fn seeded_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let cfg = load_config(path)?;
    let seed = resolve_seed(seed, cfg.seed)?;
    Ok(cfg.with_seed(seed))
}

fn manifest_for(command: &str, args: &[String], cfg: Option<&RunConfig>) -> Manifest {
    let mut m = Manifest::new(command, args.to_vec());
    if let Some(cfg) = cfg {
        m.seed = Some(cfg.seed);
        m.config_hash = Some(hex::encode(cfg.hash()));
        m.model_config_hash = Some(hex::encode(config_hash(&cfg.model)));
    }
    m
}

fn finish_dir(mut m: Manifest, dir: &Path, outputs: &[PathBuf]) -> Result<()> {
    m.add_outputs(dir, outputs)?;
    m.write(&dir.join("manifest.json"))
}

fn finish_file(mut m: Manifest, out: &Path, extra: &[PathBuf]) -> Result<()> {
    let base = out.parent().unwrap_or(Path::new("."));
    let mut all = vec![out.to_path_buf()];
    all.extend_from_slice(extra);
    m.add_outputs(base, &all)?;
    m.write(&manifest_path_for(out))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

fn load_store(root: &Path) -> Result<(TrainingStore, Vec<crate::dataio::sequence::SeqInfo>)> {
    let mut videos = Vec::new();
    let mut infos = Vec::new();
    for dir in sequence_dirs(root, LABELS_FILE)? {
        let seq = read_sequence(&dir, LABELS_FILE)?;
        let frames = seq
            .frames()
            .into_iter()
            .filter(|(_, d)| !d.is_empty())
            .map(|(f, d)| camel_core::train::LabeledFrame::new(f, d))
            .collect();
        videos.push(Video::new(seq.info.name.clone(), frames));
        infos.push(seq.info);
    }
    Ok((TrainingStore { videos }, infos))
}

fn summary_from(cfg: &RunConfig, info: &crate::dataio::sequence::SeqInfo) -> SummaryInputs {
    SummaryInputs {
        alpha: cfg.heuristics.alpha,
        kalman: cfg.heuristics.kalman(),
        image_w: info.image_w,
        image_h: info.image_h,
    }
}

fn set_train_param(t: &mut TrainConfig, name: &str, value: f64) -> Result<()> {
    match name {
        "learning_rate" => t.learning_rate = value,
        "temperature" => t.temperature = value,
        "epochs" if value >= 0.0 && value.fract() == 0.0 => t.epochs = value as usize,
        "epochs" => return Err(usage("epochs must be a whole number")),
        other => t
            .augment
            .set(other, value)
            .map_err(|e| usage(format!("{other}: {e}")))?,
    }
    Ok(())
}

/// Parses `a=1,2;b=3` into named value lists.
pub fn parse_grid(spec: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, values) = part
            .split_once('=')
            .ok_or_else(|| usage(format!("grid entry {part:?} lacks '='")))?;
        let values = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| usage(format!("bad grid value {v:?} for {name}")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((name.trim().to_string(), values));
    }
    if out.is_empty() {
        return Err(usage("empty parameter grid"));
    }
    Ok(out)
}

fn grid_points(grid: &[(String, Vec<f64>)]) -> Vec<Vec<(String, f64)>> {
    let mut points = vec![Vec::new()];
    for (name, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push((name.clone(), v));
                    q
                })
            })
            .collect();
    }
    points
}

fn load_camel(weights: &Path, cfg: &RunConfig) -> Result<Camel> {
    let bytes = fs::read(weights).with_context(|| format!("reading {}", weights.display()))?;
    let file = WeightsFile::from_bytes(&bytes).with_context(|| format!("{}", weights.display()))?;
    if file.config_hash != config_hash(&cfg.model) {
        bail!(
            "{}: weights were trained with a different model config",
            weights.display()
        );
    }
    let mut model = Camel::new(cfg.model.clone(), cfg.seed)?;
    file.load_into(&mut model)
        .with_context(|| format!("{}", weights.display()))?;
    Ok(model)
}

#[derive(Serialize, Default)]
struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    idf1: Option<camel_core::metrics::Idf1Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mota: Option<camel_core::metrics::MotaReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    assacc: Option<AssaccReport>,
}

#[derive(Serialize)]
struct AssaccReport {
    value: f64,
    correct: usize,
    total: usize,
}

pub fn run(cli: Cli, args: &[String]) -> Result<()> {
    match cli.command {
        Command::Synth { config, out_dir, seed } => {
            let cfg = seeded_config(config.as_deref(), seed)?;
            let suite = synth_suite(&cfg)?;
            let mut outputs = Vec::new();
            for (split, seqs) in [("train", &suite.train), ("test", &suite.test)] {
                for s in seqs.iter() {
                    outputs.extend(write_synth_sequence(&out_dir.join(split).join(&s.name), s)?);
                }
            }
            let cfg_path = out_dir.join("config.toml");
            write_file(&cfg_path, toml::to_string(&cfg)?)?;
            outputs.push(cfg_path);
            eprintln!(
                "wrote {} training and {} test sequences to {}",
                suite.train.len(),
                suite.test.len(),
                out_dir.display()
            );
            finish_dir(manifest_for("synth", args, Some(&cfg)), &out_dir, &outputs)
        }
        Command::Preprocess { data, out_dir } => {
            let mut outputs = Vec::new();
            for dir in sequence_dirs(&data, DETECTIONS_FILE)? {
                let seq = read_sequence(&dir, DETECTIONS_FILE)?;
                let gt = seq
                    .gt
                    .clone()
                    .ok_or_else(|| anyhow!("{}: missing {GT_FILE}", dir.display()))?;
                let video = preprocess(seq.info.name.clone(), &gt, seq.detections.clone())
                    .with_context(|| format!("{}", dir.display()))?;
                let labelled: Vec<_> = video.frames.iter().flat_map(|f| f.detections.iter().cloned()).collect();
                let labels = labelled.iter().filter(|d| d.gt_identity.is_some()).count();
                eprintln!("{}: {labels} of {} detections labelled", seq.info.name, labelled.len());
                outputs.extend(write_detections(
                    &out_dir.join(&seq.info.name),
                    &seq.info,
                    &labelled,
                    true,
                )?);
            }
            finish_dir(manifest_for("preprocess", args, None), &out_dir, &outputs)
        }
        Command::Train {
            config,
            data,
            out,
            seed,
            no_augment,
            mode,
        } => {
            let mut cfg = seeded_config(config.as_deref(), seed)?;
            if no_augment {
                cfg.train.augment.enabled = false;
            }
            let (store, infos) = load_store(&data)?;
            let firsts: Vec<_> = store
                .videos
                .iter()
                .filter_map(|v| v.frames.first()?.detections.first().cloned())
                .collect();
            check_model_cues(&cfg.model, &firsts)?;
            let mode = match mode {
                TrainMode::Full => InputMode::Full,
                TrainMode::Summary => InputMode::Summary(summary_from(&cfg, &infos[0])),
            };
            let trained = train_model(&cfg, cfg.model.clone(), &store, &cfg.train, &mode)?;
            create_parent(&out)?;
            write_file(
                &out,
                WeightsFile::from_model(&trained.model, config_hash(&cfg.model)).to_bytes(),
            )?;
            let mut report_path = out.clone().into_os_string();
            report_path.push(".report.json");
            let report_path = PathBuf::from(report_path);
            write_file(&report_path, serde_json::to_string_pretty(&trained.report)? + "\n")?;
            if let Some(last) = trained.report.losses.last() {
                eprintln!("final epoch loss {last:.5}");
            }
            finish_file(manifest_for("train", args, Some(&cfg)), &out, &[report_path])
        }
        Command::Gridsearch {
            config,
            data,
            param_grid,
            out_dir,
            seed,
        } => {
            let cfg = seeded_config(config.as_deref(), seed)?;
            let grid = parse_grid(&param_grid)?;
            let (mut store, _) = load_store(&data)?;
            if store.videos.len() < 2 {
                bail!("{}: grid search needs at least two sequences", data.display());
            }
            let val = TrainingStore {
                videos: vec![store.videos.pop().unwrap()],
            };
            let frames = eval_frames(&val, &cfg.train);
            #[derive(Serialize)]
            struct Point {
                params: Vec<(String, f64)>,
                assacc: f64,
                final_loss: Option<f64>,
            }
            let mut results = Vec::new();
            for point in grid_points(&grid) {
                let mut t = cfg.train.clone();
                for (name, v) in &point {
                    set_train_param(&mut t, name, *v)?;
                }
                let trained = train_model(&cfg, cfg.model.clone(), &store, &t, &InputMode::Full)?;
                let acc = camel_core::eval::association_benchmark(&CamelScorer { model: &trained.model }, &frames)?;
                let assacc = acc.fraction().unwrap_or(0.0);
                eprintln!("{point:?}: assacc {assacc:.4}");
                results.push(Point {
                    params: point,
                    assacc,
                    final_loss: trained.report.losses.last().copied(),
                });
            }
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let path = out_dir.join("gridsearch.json");
            write_file(&path, serde_json::to_string_pretty(&results)? + "\n")?;
            finish_dir(manifest_for("gridsearch", args, Some(&cfg)), &out_dir, &[path])
        }
        Command::Track {
            model,
            dets,
            out,
            weights,
            config,
            lambda,
        } => {
            let mut cfg = seeded_config(config.as_deref(), None)?;
            if let Some(l) = lambda {
                if !(0.0..=1.0).contains(&l) {
                    return Err(usage("--lambda must lie in [0, 1]"));
                }
                cfg.heuristics.lambda = l;
            }
            let seq = read_sequence(&dets, DETECTIONS_FILE)?;
            let loaded;
            let (ema, kf, fused);
            let scorer: &dyn Scorer = match model {
                ModelKind::Camel => {
                    let w = weights
                        .as_deref()
                        .ok_or_else(|| usage("--model camel needs --weights"))?;
                    if config.is_none() {
                        return Err(usage("--model camel needs --config"));
                    }
                    check_model_cues(&cfg.model, &seq.detections)?;
                    loaded = load_camel(w, &cfg)?;
                    &CamelScorer { model: &loaded }
                }
                ModelKind::Ema => {
                    ema = cfg.heuristics.ema();
                    &ema
                }
                ModelKind::Kf => {
                    kf = cfg.heuristics.kf();
                    &kf
                }
                ModelKind::Fused => {
                    fused = cfg.heuristics.fused();
                    &fused
                }
            };
            let output = run_sequence(&seq.frames(), scorer, &cfg.tracker, false)
                .with_context(|| format!("{}", dets.display()))?;
            create_parent(&out)?;
            write_file(&out, emit_tracks(&output.records))?;
            eprintln!("{} records written to {}", output.records.len(), out.display());
            finish_file(manifest_for("track", args, Some(&cfg)), &out, &[])
        }
        Command::Evaluate {
            gt,
            pred,
            metrics,
            json_out,
        } => {
            for m in &metrics {
                if !["idf1", "mota", "assacc"].contains(&m.as_str()) {
                    return Err(usage(format!("unknown metric {m:?}; expected idf1, mota or assacc")));
                }
            }
            let gt_recs = read_tracks(&gt)?;
            let pred_recs = read_tracks(&pred)?;
            let thr = camel_core::metrics::DEFAULT_IOU_THRESHOLD;
            let mut report = EvalReport::default();
            for m in &metrics {
                match m.as_str() {
                    "idf1" => {
                        let r = idf1(&gt_recs, &pred_recs, thr);
                        println!("idf1 {:.6}", r.idf1);
                        report.idf1 = Some(r);
                    }
                    "mota" => {
                        let r = mota(&gt_recs, &pred_recs, thr);
                        println!("mota {:.6}", r.mota);
                        report.mota = Some(r);
                    }
                    _ => {
                        let t = sequence_association_accuracy(&gt_recs, &pred_recs, thr);
                        let value = t.fraction().unwrap_or(0.0);
                        println!("assacc {value:.6}");
                        report.assacc = Some(AssaccReport {
                            value,
                            correct: t.correct,
                            total: t.total,
                        });
                    }
                }
            }
            if let Some(path) = json_out {
                create_parent(&path)?;
                write_file(&path, serde_json::to_string_pretty(&report)? + "\n")?;
                finish_file(manifest_for("evaluate", args, None), &path, &[])?;
            }
            Ok(())
        }
        Command::Oracle {
            kind,
            dets,
            gt,
            out,
            config,
        } => {
            let cfg = seeded_config(config.as_deref(), None)?;
            let seq = read_sequence(&dets, DETECTIONS_FILE)?;
            let gt_recs = read_tracks(&gt)?;
            let records = match kind {
                OracleKind::Association => association_oracle_sequence(&seq.frames(), &gt_recs),
                OracleKind::Fusion => {
                    let video = preprocess(seq.info.name.clone(), &gt_recs, seq.detections.clone())
                        .with_context(|| format!("{}", dets.display()))?;
                    let labelled: Vec<_> = video.frames.iter().flat_map(|f| f.detections.iter().cloned()).collect();
                    let frames = camel_core::synth::group_by_frame(&labelled, seq.info.n_frames);
                    let scorer = FusionOracleScorer {
                        alpha: cfg.heuristics.alpha,
                        kalman: cfg.heuristics.kalman(),
                        max_cost: cfg.heuristics.max_cost,
                        ..FusionOracleScorer::default()
                    };
                    run_sequence(&frames, &scorer, &cfg.tracker, false)?.records
                }
            };
            create_parent(&out)?;
            write_file(&out, emit_tracks(&records))?;
            finish_file(manifest_for("oracle", args, Some(&cfg)), &out, &[])
        }
        Command::Ablate {
            config,
            out_dir,
            seed,
            rows,
            no_tracking,
        } => {
            let cfg = seeded_config(config.as_deref(), seed)?;
            let rows = rows.unwrap_or_else(|| (1..=12).collect());
            if let Some(bad) = rows.iter().find(|r| !(1..=12).contains(*r)) {
                return Err(usage(format!("no experiment {bad}; rows run from 1 to 12")));
            }
            let table = ablate(&cfg, &rows, !no_tracking, |m| eprintln!("{m}"))?;
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let text = format_table(&table);
            print!("{text}");
            let table_path = out_dir.join("ablation.txt");
            let json_path = out_dir.join("ablation.json");
            write_file(&table_path, &text)?;
            write_file(&json_path, serde_json::to_string_pretty(&table)? + "\n")?;
            finish_dir(
                manifest_for("ablate", args, Some(&cfg)),
                &out_dir,
                &[table_path, json_path],
            )
        }
    }
}

/// Parses `argv`, runs the command and maps failures to exit codes: 2 for usage
/// errors, 1 for data errors.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli, &argv[1..]) {
        Ok(()) => 0,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            eprintln!("run with --help for usage");
            2
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn main() -> i32 {
    main_with_args(std::env::args().collect())
}
