//! Subcommand bodies. Every command resolves its configuration in the
//! same order (defaults, config file, environment, flags), echoes the
//! resolved form into its run directory, and streams progress to stderr
//! as JSON lines.

use crate::config::{env_var, parse_layouts, parse_views, RunConfig};
use crate::{AppError, Common};
use scene2act::evalmetrics::{caption_metrics, episode_success_rate, execution_rate, Corpus, CorpusItem};
use scene2act::langtext::Vocab;
use scene2act::models::{ApmModel, SumModel};
use scene2act::pipeline::{
    self, episode_task, generate_dataset, load_split, load_vocab, GenerateSpec, Split,
};
use scene2act::training::{
    finetune_apm_il, finetune_apm_rl, finetune_sum, rollout_tasks, CaptionSource, EpochLog, RlTask,
};
use scene2act::worldsim::{layout_tasks, mix_seed};
use std::path::{Path, PathBuf};

pub const METRICS_HEADER: &str = "scene2act-metrics v1";

type CmdResult = Result<(), AppError>;

fn usage(message: impl Into<String>) -> AppError {
    AppError::Usage(message.into())
}

fn data_err(message: impl std::fmt::Display) -> AppError {
    AppError::Data(message.to_string())
}

fn ckpt_err(message: impl std::fmt::Display) -> AppError {
    AppError::Checkpoint(message.to_string())
}

fn progress(event: &str, fields: serde_json::Value) {
    let mut object = serde_json::json!({ "event": event });
    if let (Some(map), Some(extra)) = (object.as_object_mut(), fields.as_object()) {
        for (k, v) in extra {
            map.insert(k.clone(), v.clone());
        }
    }
    eprintln!("{object}");
}

/// defaults <- config file <- environment <- common flags
fn resolve_config(common: &Common) -> Result<RunConfig, AppError> {
    let file = common
        .config
        .clone()
        .or_else(|| env_var("CONFIG").map(PathBuf::from));
    let mut cfg = match file {
        Some(path) => RunConfig::from_file(&path).map_err(|e| usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    cfg.apply_env();
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn resolve_path(flag: Option<PathBuf>, env_name: &str, what: &str) -> Result<PathBuf, AppError> {
    flag.or_else(|| env_var(env_name).map(PathBuf::from))
        .ok_or_else(|| usage(format!("missing --{what}")))
}

fn write_metrics_log(dir: &Path, logs: &[EpochLog]) -> Result<(), AppError> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for log in logs {
        out.push_str(&serde_json::to_string(log).expect("log serializes"));
        out.push('\n');
    }
    std::fs::write(dir.join("metrics.ndjson"), out).map_err(data_err)
}

pub fn gen_data(
    common: Common,
    out: Option<PathBuf>,
    layouts: Option<String>,
    episodes: Option<u32>,
    views: Option<String>,
) -> CmdResult {
    let mut cfg = resolve_config(&common)?;
    let out = resolve_path(out, "OUT", "out")?;
    if let Some(text) = layouts {
        cfg.layouts = parse_layouts(&text).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(n) = episodes {
        cfg.episodes_per_layout = n;
    }
    if let Some(text) = views {
        cfg.views = parse_views(&text).map_err(|e| usage(e.to_string()))?;
    }
    if cfg.episodes_per_layout == 0 {
        return Err(usage("--episodes must be at least 1"));
    }

    cfg.echo_into(&out).map_err(data_err)?;
    let spec = GenerateSpec {
        layouts: cfg.layouts.clone(),
        episodes_per_layout: cfg.episodes_per_layout,
        views: cfg.views.clone(),
        seed: cfg.seed,
        split_fractions: cfg.split_fractions,
    };
    let manifest = generate_dataset(&out, &spec, cfg.threads).map_err(data_err)?;
    progress(
        "gen-data",
        serde_json::json!({
            "records_per_view": manifest.records_per_view,
            "skipped_episodes": manifest.skipped_episodes.len(),
            "content_hash": manifest.content_hash,
        }),
    );
    println!("{}", manifest.content_hash);
    Ok(())
}

pub fn train_sum(
    common: Common,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    epochs: Option<usize>,
    view: Option<String>,
) -> CmdResult {
    let mut cfg = resolve_config(&common)?;
    let data = resolve_path(data, "DATA", "data")?;
    let out = resolve_path(out, "OUT", "out")?;
    if let Some(epochs) = epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(view) = view {
        cfg.view = view.parse().map_err(|e: String| usage(e))?;
    }
    cfg.echo_into(&out).map_err(data_err)?;

    let vocab = load_vocab(&data).map_err(data_err)?;
    let records = load_split(&data, Split::Train).map_err(data_err)?;
    let records: Vec<_> = records.into_iter().filter(|r| r.view == cfg.view).collect();
    let examples = pipeline::to_sum_examples(&records, &vocab);
    progress("train-sum", serde_json::json!({ "examples": examples.len() }));

    let mut model = SumModel::new(cfg.model, cfg.view, vocab, cfg.seed)
        .map_err(|e| usage(e.to_string()))?;
    let logs = finetune_sum(&mut model, &examples, &cfg.train).map_err(data_err)?;
    for log in &logs {
        progress("epoch", serde_json::to_value(log).expect("log serializes"));
    }
    write_metrics_log(&out, &logs)?;
    let ckpt = out.join("sum.ckpt");
    model.save(&ckpt).map_err(ckpt_err)?;
    println!("{}", ckpt.display());
    Ok(())
}

fn load_sum(path: &Path, vocab: Vocab) -> Result<SumModel, AppError> {
    SumModel::load(path, vocab).map_err(ckpt_err)
}

pub fn train_apm_il(
    common: Common,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    sum_checkpoint: PathBuf,
    epochs: Option<usize>,
    oracle_captions: bool,
) -> CmdResult {
    let mut cfg = resolve_config(&common)?;
    let data = resolve_path(data, "DATA", "data")?;
    let out = resolve_path(out, "OUT", "out")?;
    if let Some(epochs) = epochs {
        cfg.train.epochs = epochs;
    }
    if oracle_captions {
        cfg.train.caption_source = CaptionSource::Oracle;
    }
    cfg.echo_into(&out).map_err(data_err)?;

    let vocab = load_vocab(&data).map_err(data_err)?;
    let sum = load_sum(&sum_checkpoint, vocab.clone())?;
    let records = load_split(&data, Split::Train).map_err(data_err)?;
    let records: Vec<_> = records.into_iter().filter(|r| r.view == sum.view).collect();
    let examples = pipeline::to_apm_examples(&records, &vocab);
    progress("train-apm-il", serde_json::json!({ "examples": examples.len() }));

    let mut apm = ApmModel::new(
        cfg.model,
        &vocab,
        cfg.max_id,
        cfg.use_task_tokens,
        cfg.coupling,
        cfg.seed.wrapping_add(1),
    )
    .map_err(|e| usage(e.to_string()))?;
    let sum_hash_before = sum.store.content_hash();
    let logs = finetune_apm_il(&mut apm, &sum, &examples, &cfg.train).map_err(data_err)?;
    assert_eq!(sum.store.content_hash(), sum_hash_before, "captioner stayed frozen");
    for log in &logs {
        progress("epoch", serde_json::to_value(log).expect("log serializes"));
    }
    write_metrics_log(&out, &logs)?;
    let ckpt = out.join("apm.ckpt");
    apm.save(&ckpt).map_err(ckpt_err)?;
    println!("{}", ckpt.display());
    Ok(())
}

/// Task instances for RL and rollouts: layouts x per-layout tasks with
/// world seeds derived from the base seed.
pub fn build_task_set(layouts: &[u8], instances: usize, seed: u64) -> Result<Vec<RlTask>, AppError> {
    let mut out = Vec::new();
    let mut i = 0usize;
    while out.len() < instances {
        let layout_id = layouts[i % layouts.len()];
        let tasks = layout_tasks(layout_id).map_err(data_err)?;
        let task = tasks[(i / layouts.len()) % tasks.len()].clone();
        let world_seed = mix_seed(seed ^ 0x5eed ^ i as u64);
        out.push(RlTask { layout_id, world_seed, task });
        i += 1;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn train_apm_rl(
    common: Common,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    sum_checkpoint: PathBuf,
    apm_checkpoint: PathBuf,
    epochs: Option<usize>,
    max_updates: Option<usize>,
    task_instances: Option<usize>,
) -> CmdResult {
    let mut cfg = resolve_config(&common)?;
    let data = resolve_path(data, "DATA", "data")?;
    let out = resolve_path(out, "OUT", "out")?;
    if let Some(epochs) = epochs {
        cfg.train.epochs = epochs;
    }
    if max_updates.is_some() {
        cfg.train.max_updates = max_updates;
    }
    cfg.train.max_steps = cfg.max_steps;
    cfg.echo_into(&out).map_err(data_err)?;

    let vocab = load_vocab(&data).map_err(data_err)?;
    let sum = load_sum(&sum_checkpoint, vocab.clone())?;
    let mut apm = ApmModel::load(&apm_checkpoint, &vocab).map_err(ckpt_err)?;

    let instances = task_instances.unwrap_or(50);
    let tasks = build_task_set(&cfg.layouts, instances, cfg.seed)?;
    progress("train-apm-rl", serde_json::json!({ "task_instances": tasks.len() }));

    let sum_hash_before = sum.store.content_hash();
    let logs = finetune_apm_rl(&mut apm, &sum, &tasks, &cfg.train).map_err(data_err)?;
    assert_eq!(sum.store.content_hash(), sum_hash_before, "captioner stayed frozen");
    for log in &logs {
        progress("epoch", serde_json::to_value(log).expect("log serializes"));
    }
    write_metrics_log(&out, &logs)?;
    let ckpt = out.join("apm-rl.ckpt");
    apm.save(&ckpt).map_err(ckpt_err)?;
    println!("{}", ckpt.display());
    Ok(())
}

fn read_caption_lines(path: &Path) -> Result<Vec<String>, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

pub fn eval(
    common: Common,
    preds: PathBuf,
    refs: PathBuf,
    trajectories: Option<PathBuf>,
    out: Option<PathBuf>,
) -> CmdResult {
    let _cfg = resolve_config(&common)?;
    let pred_lines = read_caption_lines(&preds)?;
    let ref_lines = read_caption_lines(&refs)?;
    if pred_lines.len() != ref_lines.len() {
        return Err(data_err(format!(
            "{} predictions vs {} references",
            pred_lines.len(),
            ref_lines.len()
        )));
    }
    let corpus = Corpus {
        items: pred_lines
            .iter()
            .zip(&ref_lines)
            .map(|(c, r)| CorpusItem {
                candidate: scene2act::evalmetrics::tokenize(c),
                references: vec![scene2act::evalmetrics::tokenize(r)],
            })
            .collect(),
    };
    let metrics = caption_metrics(&corpus).map_err(data_err)?;

    let (exec, success) = match &trajectories {
        Some(path) => {
            let trajs = pipeline::read_trajectories(path).map_err(data_err)?;
            (
                Some(execution_rate(&trajs).map_err(data_err)?),
                Some(episode_success_rate(&trajs).map_err(data_err)?),
            )
        }
        None => (None, None),
    };

    let mut report = serde_json::to_value(&metrics).expect("metrics serialize");
    if let Some(map) = report.as_object_mut() {
        map.insert("execution_rate".to_string(), serde_json::json!(exec));
        map.insert("episode_success_rate".to_string(), serde_json::json!(success));
    }

    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".to_string());
    println!("bleu_1\t{:.3}", metrics.bleu_1);
    println!("bleu_2\t{:.3}", metrics.bleu_2);
    println!("bleu_3\t{:.3}", metrics.bleu_3);
    println!("bleu_4\t{:.3}", metrics.bleu_4);
    println!("rouge_l\t{:.3}", metrics.rouge_l);
    println!("meteor\t{:.3}", metrics.meteor);
    println!("cider\t{:.3}", metrics.cider);
    println!("spice\t{:.3}", metrics.spice);
    println!("execution_rate\t{}", fmt(exec));
    println!("episode_success_rate\t{}", fmt(success));

    if let Some(out) = out {
        std::fs::write(&out, serde_json::to_string_pretty(&report).expect("report serializes"))
            .map_err(data_err)?;
        progress("eval", serde_json::json!({ "report": out.display().to_string() }));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn rollout(
    common: Common,
    data: Option<PathBuf>,
    sum_checkpoint: PathBuf,
    apm_checkpoint: PathBuf,
    layouts: Option<String>,
    episodes: Option<u32>,
    max_steps: Option<usize>,
    out: Option<PathBuf>,
) -> CmdResult {
    let mut cfg = resolve_config(&common)?;
    let data = resolve_path(data, "DATA", "data")?;
    if let Some(text) = layouts {
        cfg.layouts = parse_layouts(&text).map_err(|e| usage(e.to_string()))?;
    }
    let episodes = episodes.unwrap_or(cfg.episodes_per_layout).max(1) as usize;
    let max_steps = max_steps.unwrap_or(cfg.max_steps);

    let vocab = load_vocab(&data).map_err(data_err)?;
    let sum = load_sum(&sum_checkpoint, vocab.clone())?;
    let apm = ApmModel::load(&apm_checkpoint, &vocab).map_err(ckpt_err)?;

    // one seeded task instance per episode slot, cycling layouts
    let tasks: Vec<RlTask> = (0..episodes)
        .map(|i| {
            let layout_id = cfg.layouts[i % cfg.layouts.len()];
            let world_seed = mix_seed(cfg.seed ^ 0x9011 ^ i as u64);
            let task = episode_task(layout_id, world_seed).map_err(data_err)?;
            Ok(RlTask { layout_id, world_seed, task })
        })
        .collect::<Result<_, AppError>>()?;

    let trajs = rollout_tasks(&apm, &sum, &tasks, &cfg.decode, max_steps, &cfg.train.reward)
        .map_err(data_err)?;
    for (t, traj) in trajs.iter().enumerate() {
        progress(
            "trajectory",
            serde_json::json!({
                "index": t,
                "task": traj.task.name,
                "steps": traj.predicted_steps(),
                "executed": traj.executed_steps(),
                "goal": traj.goal_reached,
            }),
        );
        for (i, step) in traj.steps.iter().enumerate() {
            progress(
                "step",
                serde_json::json!({
                    "trajectory": t,
                    "t": i,
                    "caption": step.caption_text,
                    "decoded": format!("{:?}", step.decoded),
                    "executed": step.executed,
                    "reward": step.reward,
                }),
            );
        }
    }
    let exec = execution_rate(&trajs).map_err(data_err)?;
    let success = episode_success_rate(&trajs).map_err(data_err)?;
    println!("execution_rate\t{exec:.3}");
    println!("episode_success_rate\t{success:.3}");

    if let Some(out) = out {
        pipeline::write_trajectories(&out, &trajs).map_err(data_err)?;
        progress("rollout", serde_json::json!({ "trajectories": out.display().to_string() }));
    }
    Ok(())
}
