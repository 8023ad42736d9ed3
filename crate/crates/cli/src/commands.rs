use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Once};
use std::time::Duration;

use badx_core::association::{normalize_score, MetricKind};
use badx_core::audit::{
    default_task1_prompts, load_run, persist_run, run_task1, run_task2, AuditRun, ModelAudit, RunOptions, Task,
    Task1Model,
};
use badx_core::config::{api_key_for, parse_config, AuditConfig};
use badx_core::corpus::{compute_iibs, label_counts, load_classes, load_corpus, parse_corpus, validate_corpus, ClassesFile, IdentityClass};
use badx_core::explain::{aggregate_terms, lime_attribute, Attribution, TermWeight};
use badx_core::http::RetryPolicy;
use badx_core::llmclient::{
    load_replay, ChatClient, GenerationRecord, HttpChatClient, PromptSpec, ReplayClient, ResumingClient, Transcript,
};
use badx_core::report::{compare_golden, format_rounded, write_report, DensityPopulation, ReportOptions, TableFormat};
use badx_core::scoring::Scorer;
use badx_core::{Error, Result};
use chrono::Utc;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{CompareArgs, ExplainArgs, Outcome, ReportArgs, TaskArgs};

static CANCEL: AtomicBool = AtomicBool::new(false);
static HANDLER: Once = Once::new();

fn install_interrupt() {
    HANDLER.call_once(|| {
        if let Err(e) = ctrlc::set_handler(|| CANCEL.store(true, Ordering::SeqCst)) {
            tracing::warn!("cannot install Ctrl-C handler: {e}");
        }
    });
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn corpus_validate(path: &Path) -> Result<Outcome> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let corpus = parse_corpus(&text)?;
    let findings = validate_corpus(&corpus);
    let mut out = String::new();
    for f in &findings {
        writeln!(out, "{}\t{}\t{}", f.record_id, f.rule.id(), f.message).unwrap();
    }
    if findings.is_empty() {
        writeln!(out, "{}: {} records, {} classes, no findings", path.display(), corpus.records.len(), corpus.classes.len())
            .unwrap();
    }
    Ok(Outcome {
        result: json!({
            "path": path,
            "records": corpus.records.len(),
            "classes": corpus.classes.len(),
            "findings": findings,
        }),
        text: out,
        findings: !findings.is_empty(),
    })
}

pub fn corpus_iibs(path: &Path) -> Result<Outcome> {
    let corpus = load_corpus(path)?;
    let iibs = compute_iibs(&corpus)?;
    let (biased, neutral) = label_counts(&corpus);
    Ok(Outcome {
        result: json!({"path": path, "iibs": iibs, "biased": biased, "neutral": neutral}),
        text: format!("IIBS {iibs:.4} ({biased} of {} records)\n", biased + neutral),
        findings: false,
    })
}

fn file_slug(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// The run's configuration with every path rewritten relative to the run
/// directory, so later commands can rebuild providers from the run alone.
fn run_config(cfg: &AuditConfig, run_dir: &Path) -> Result<AuditConfig> {
    let base = std::path::absolute(run_dir).map_err(io_err(run_dir))?;
    let rel = |p: &Path| -> Result<PathBuf> {
        let full = cfg.resolve(p);
        let abs = std::path::absolute(&full).map_err(io_err(&full))?;
        Ok(pathdiff::diff_paths(&abs, &base).unwrap_or(abs))
    };
    let mut c = cfg.clone();
    c.classes_path = rel(&cfg.classes_path)?;
    c.corpus_path = rel(&cfg.corpus_path)?;
    c.output_dir = PathBuf::from(".");
    if let Some(p) = &cfg.embedding_cache {
        c.embedding_cache = Some(rel(p)?);
    }
    let fix = |b: &mut badx_core::config::ProviderBindings| -> Result<()> {
        for p in [&mut b.word, &mut b.contextual, &mut b.sentence] {
            if let Some(f) = &p.file_path {
                p.file_path = Some(rel(f)?);
            }
        }
        Ok(())
    };
    fix(&mut c.providers)?;
    for m in &mut c.models {
        if let Some(b) = &mut m.providers {
            fix(b)?;
        }
    }
    Ok(c)
}

/// The config as recorded in scores.json: machine-specific paths removed so
/// runs from different checkouts compare equal.
fn config_snapshot(cfg: &AuditConfig) -> Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Value::Object(map) = &mut v {
        for key in ["classes_path", "corpus_path", "output_dir", "embedding_cache"] {
            map.remove(key);
        }
    }
    v
}

struct Prepared {
    cfg: AuditConfig,
    classes: Vec<IdentityClass>,
    out: PathBuf,
    replay: Option<ReplayClient>,
}

fn prepare(args: &TaskArgs) -> Result<Prepared> {
    let cfg = parse_config(&args.config)?;
    let classes = load_classes(cfg.resolve(&cfg.classes_path))?;
    let out = match &args.out {
        Some(p) => p.clone(),
        None => cfg.resolve(&cfg.output_dir),
    };
    let replay = match &args.replay {
        Some(dir) => Some(load_replay(dir, "")?),
        None => None,
    };
    std::fs::create_dir_all(out.join("transcript")).map_err(io_err(&out))?;
    write_json(&out.join("config.json"), &run_config(&cfg, &out)?)?;
    write_json(&out.join("classes.json"), &ClassesFile { classes: classes.clone() })?;
    Ok(Prepared {
        cfg,
        classes,
        out,
        replay,
    })
}

fn client_for(p: &Prepared, index: usize) -> Result<Box<dyn ChatClient>> {
    let model = &p.cfg.models[index];
    let path = p.out.join("transcript").join(format!("{}.jsonl", file_slug(&model.model_id)));
    let transcript = Arc::new(Transcript::open(&path)?);
    if let Some(r) = &p.replay {
        return Ok(Box::new(r.for_model(&model.model_id).with_transcript(transcript)));
    }
    let endpoint = model.endpoint.as_deref().ok_or_else(|| {
        Error::config(format!("models[{index}].endpoint"), "required for live runs; pass --replay to run offline")
    })?;
    let live = HttpChatClient::new(endpoint, &model.model_id, api_key_for(&model.model_id))
        .with_transport(RetryPolicy::default(), Duration::from_millis(p.cfg.request_interval_ms))
        .with_transcript(transcript);
    // cells completed by an earlier, interrupted run are served from its transcript
    let done = load_replay(&p.out, &model.model_id)?;
    Ok(Box::new(ResumingClient::new(done, live)))
}

fn run_options(cfg: &AuditConfig, keep_going: bool) -> RunOptions {
    RunOptions {
        params: cfg.sampling.clone(),
        normalization: cfg.normalization,
        keep_going,
        concurrency: cfg.concurrency,
    }
}

/// Task-1 prompts per class: configured texts, or templated prompts.
pub fn task1_prompts(cfg: &AuditConfig, classes: &[IdentityClass]) -> BTreeMap<String, Vec<PromptSpec>> {
    classes
        .iter()
        .map(|c| {
            let list = match cfg.task1_prompts.get(&c.id) {
                Some(texts) => texts
                    .iter()
                    .enumerate()
                    .map(|(i, t)| PromptSpec {
                        id: format!("{}-{:02}", c.id, i + 1),
                        text: t.clone(),
                        theme: None,
                        class_id: Some(c.id.clone()),
                    })
                    .collect(),
                None => default_task1_prompts(c, cfg.task1_prompts_per_class),
            };
            (c.id.clone(), list)
        })
        .collect()
}

fn interrupted<T>(r: Result<T>) -> Result<T> {
    match r {
        Err(e) if CANCEL.load(Ordering::SeqCst) => {
            tracing::warn!("interrupted: {e}");
            Err(Error::Interrupted)
        }
        other => other,
    }
}

pub fn task1(args: &TaskArgs) -> Result<Outcome> {
    install_interrupt();
    let p = prepare(args)?;
    let prompts = task1_prompts(&p.cfg, &p.classes);
    let options = run_options(&p.cfg, args.keep_going);
    let started_at = Utc::now();
    let mut models: Vec<Task1Model> = Vec::new();
    for (i, m) in p.cfg.models.iter().enumerate() {
        tracing::info!(model = %m.model_id, "task1");
        let client = client_for(&p, i)?;
        let scorer = Scorer::new(p.cfg.build_providers(&m.model_id)?, p.cfg.scoring.clone());
        let result = run_task1(&p.classes, &prompts, client.as_ref(), &scorer, &options, Some(&CANCEL));
        models.push(interrupted(result)?);
    }
    let run = AuditRun {
        task: Task::Task1,
        config: config_snapshot(&p.cfg),
        started_at,
        finished_at: Utc::now(),
        task1: models,
        task2: Vec::new(),
    };
    persist_run(&p.out, &run)?;

    let mut text = String::new();
    for m in &run.task1 {
        writeln!(text, "{}", m.model_id).unwrap();
        for r in &m.rows {
            let scores: Vec<String> = r
                .scores
                .iter()
                .map(|(k, v)| format!("{k} {}", format_rounded(*v, 3)))
                .collect();
            writeln!(text, "  {:<40} {}", r.class_name, scores.join("  ")).unwrap();
        }
    }
    writeln!(text, "run written to {}", p.out.display()).unwrap();
    let failures: usize = run.task1.iter().map(|m| m.failures.len()).sum();
    Ok(Outcome {
        result: json!({
            "run_dir": p.out,
            "models": run.task1.iter().map(|m| json!({"model_id": m.model_id, "rows": m.rows, "failures": m.failures})).collect::<Vec<_>>(),
            "failures": failures,
        }),
        text,
        findings: false,
    })
}

pub fn task2(args: &TaskArgs) -> Result<Outcome> {
    install_interrupt();
    let p = prepare(args)?;
    p.cfg.check_task2()?;
    let options = run_options(&p.cfg, args.keep_going);
    let started_at = Utc::now();
    let mut models: Vec<ModelAudit> = Vec::new();
    for (i, m) in p.cfg.models.iter().enumerate() {
        tracing::info!(model = %m.model_id, "task2");
        let client = client_for(&p, i)?;
        let scorer = Scorer::new(p.cfg.build_providers(&m.model_id)?, p.cfg.scoring.clone());
        let result = run_task2(
            &p.classes,
            &p.cfg.personas,
            &p.cfg.prompts,
            client.as_ref(),
            &scorer,
            &options,
            Some(&CANCEL),
        );
        models.push(interrupted(result)?);
    }
    let run = AuditRun {
        task: Task::Task2,
        config: config_snapshot(&p.cfg),
        started_at,
        finished_at: Utc::now(),
        task1: Vec::new(),
        task2: models,
    };
    persist_run(&p.out, &run)?;

    let mut text = String::new();
    for m in &run.task2 {
        writeln!(text, "{}", m.model_id).unwrap();
        for psi in &m.psi {
            let vol = m
                .persona_volatility
                .iter()
                .find(|v| v.persona_id == psi.persona_id)
                .map_or(String::from("-"), |v| format_rounded(v.aggregated, 3));
            writeln!(text, "  persona {:<4} PSI {:>7}  volatility {vol}", psi.persona_id, format_rounded(psi.psi, 3)).unwrap();
        }
        if !m.failures.is_empty() {
            writeln!(text, "  {} failed cells", m.failures.len()).unwrap();
        }
    }
    writeln!(text, "run written to {}", p.out.display()).unwrap();
    let failures: usize = run.task2.iter().map(|m| m.failures.len()).sum();
    Ok(Outcome {
        result: json!({
            "run_dir": p.out,
            "models": run.task2.iter().map(|m| json!({
                "model_id": m.model_id,
                "psi": m.psi,
                "persona_volatility": m.persona_volatility,
                "failures": m.failures,
            })).collect::<Vec<_>>(),
            "failures": failures,
        }),
        text,
        findings: false,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Explanation {
    pub model_id: String,
    pub prompt_id: String,
    pub persona_id: Option<String>,
    pub generation_index: usize,
    pub attribution: Attribution,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainFailure {
    pub model_id: String,
    pub prompt_id: String,
    pub persona_id: Option<String>,
    pub generation_index: usize,
    pub kind: String,
    pub message: String,
}

fn selected<'a>(gens: &'a [GenerationRecord], personas_only: bool, all: bool) -> Vec<&'a GenerationRecord> {
    gens.iter()
        .filter(|g| !personas_only || g.persona_id.is_some())
        .filter(|g| all || g.generation_index == 0)
        .collect()
}

pub fn explain(args: &ExplainArgs) -> Result<Outcome> {
    let cfg = parse_config(args.run.join("config.json"))?;
    let classes = load_classes(args.run.join("classes.json"))?;
    let run = load_run(&args.run)?;
    let metric = match &args.metric {
        Some(s) => Some(MetricKind::parse(s).ok_or_else(|| Error::config("--metric", format!("unknown metric `{s}`")))?),
        None => None,
    };
    let top_k = args.top_k.unwrap_or(cfg.lime.top_k);

    let mut prompt_classes: BTreeMap<String, Vec<&IdentityClass>> = BTreeMap::new();
    let mut bind = |p: &PromptSpec| -> Result<()> {
        let bound = match &p.class_id {
            Some(id) => vec![classes
                .iter()
                .find(|c| &c.id == id)
                .ok_or_else(|| Error::config(format!("prompts.{}", p.id), format!("unknown class `{id}`")))?],
            None => classes.iter().collect(),
        };
        prompt_classes.insert(p.id.clone(), bound);
        Ok(())
    };
    for p in &cfg.prompts {
        bind(p)?;
    }
    for list in task1_prompts(&cfg, &classes).values() {
        for p in list {
            bind(p)?;
        }
    }

    let mut per_model: Vec<(String, Vec<&GenerationRecord>)> = Vec::new();
    for m in &run.task2 {
        per_model.push((m.model_id.clone(), selected(&m.generations, true, args.all_generations)));
    }
    for m in &run.task1 {
        per_model.push((m.model_id.clone(), selected(&m.generations, false, args.all_generations)));
    }

    let mut explanations = Vec::new();
    let mut failures = Vec::new();
    let mut top_terms: Vec<(String, Vec<TermWeight>)> = Vec::new();
    for (model_id, gens) in per_model {
        tracing::info!(model = %model_id, responses = gens.len(), "explain");
        let scorer = Scorer::new(cfg.build_providers(&model_id)?, cfg.scoring.clone());
        let score = |text: &str, bound: &[&IdentityClass]| -> Result<f64> {
            let one = |k: MetricKind| scorer.score_against(text, bound, k).map(|s| normalize_score(s, cfg.normalization));
            match metric {
                Some(k) => one(k),
                None => {
                    let mut sum = 0.0;
                    for k in MetricKind::ALL {
                        sum += one(k)?;
                    }
                    Ok(sum / MetricKind::ALL.len() as f64)
                }
            }
        };
        let results: Vec<(&GenerationRecord, Result<Attribution>)> = gens
            .par_iter()
            .map(|g| {
                let bound = prompt_classes
                    .get(&g.prompt_id)
                    .map(Vec::as_slice)
                    .unwrap_or_default();
                let r = if bound.is_empty() {
                    Err(Error::config("prompts", format!("prompt `{}` is not in the run config", g.prompt_id)))
                } else {
                    lime_attribute(&g.text, |t| score(t, bound), &cfg.lime)
                };
                (*g, r)
            })
            .collect();
        let mut model_attr = Vec::new();
        for (g, r) in results {
            match r {
                Ok(a) => {
                    model_attr.push(a.clone());
                    explanations.push(Explanation {
                        model_id: model_id.clone(),
                        prompt_id: g.prompt_id.clone(),
                        persona_id: g.persona_id.clone(),
                        generation_index: g.generation_index,
                        attribution: a,
                    });
                }
                Err(e @ Error::Config { .. }) => return Err(e),
                Err(e) => failures.push(ExplainFailure {
                    model_id: model_id.clone(),
                    prompt_id: g.prompt_id.clone(),
                    persona_id: g.persona_id.clone(),
                    generation_index: g.generation_index,
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                }),
            }
        }
        top_terms.push((model_id, aggregate_terms(&model_attr, top_k)));
    }

    let target = metric.map_or_else(|| "mean".to_string(), |k| k.to_string());
    write_json(
        &args.run.join("attributions.json"),
        &json!({
            "target": target,
            "lime": cfg.lime,
            "explanations": explanations,
            "failures": failures,
        }),
    )?;
    write_json(&args.run.join("top_terms.json"), &top_terms)?;
    let csv_path = args.run.join("top_terms.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::io(&csv_path, e.into()))?;
    w.write_record(["model_id", "rank", "term", "total_weight"]).map_err(|e| Error::io(&csv_path, e.into()))?;
    for (model, terms) in &top_terms {
        for (i, t) in terms.iter().enumerate() {
            w.write_record([model.as_str(), &(i + 1).to_string(), &t.term, &t.total.to_string()])
                .map_err(|e| Error::io(&csv_path, e.into()))?;
        }
    }
    w.flush().map_err(io_err(&csv_path))?;

    let mut text = String::new();
    for (model, terms) in &top_terms {
        let list: Vec<String> = terms.iter().map(|t| format!("{} ({})", t.term, format_rounded(t.total, 3))).collect();
        writeln!(text, "{model}: {}", list.join(", ")).unwrap();
    }
    writeln!(text, "{} explanations, {} failed", explanations.len(), failures.len()).unwrap();
    Ok(Outcome {
        result: json!({
            "run_dir": args.run,
            "target": target,
            "explained": explanations.len(),
            "failures": failures,
            "top_terms": top_terms.iter().map(|(m, t)| json!({"model_id": m, "terms": t})).collect::<Vec<_>>(),
        }),
        text,
        findings: false,
    })
}

pub fn report(args: &ReportArgs) -> Result<Outcome> {
    let format = TableFormat::parse(&args.format)
        .ok_or_else(|| Error::config("--format", format!("unknown format `{}`; use csv, json or md", args.format)))?;
    let population: DensityPopulation = serde_json::from_value(Value::String(args.population.clone()))
        .map_err(|_| Error::config("--population", format!("unknown population `{}`", args.population)))?;
    if args.grid_n < 2 {
        return Err(Error::config("--grid-n", "at least 2 grid points"));
    }
    let options = ReportOptions {
        format,
        grid_n: args.grid_n,
        population,
        min_bandwidth: args.min_bandwidth,
    };
    let written = write_report(&args.run, &options)?;
    let mut text = String::new();
    for f in &written {
        writeln!(text, "{}", args.run.join(f).display()).unwrap();
    }
    Ok(Outcome {
        result: json!({"run_dir": args.run, "files": written}),
        text,
        findings: false,
    })
}

pub fn compare(args: &CompareArgs) -> Result<Outcome> {
    let diffs = compare_golden(&args.run, &args.golden)?;
    let mut text = String::new();
    for d in &diffs {
        writeln!(text, "{}: expected {} got {}", d.path, d.expected, d.actual).unwrap();
    }
    if diffs.is_empty() {
        writeln!(text, "no differences").unwrap();
    }
    Ok(Outcome {
        result: json!({"run_dir": args.run, "golden": args.golden, "diffs": diffs}),
        text,
        findings: !diffs.is_empty(),
    })
}
