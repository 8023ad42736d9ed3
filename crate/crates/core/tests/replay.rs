use std::path::{Path, PathBuf};
use std::sync::Arc;

use badx_core::audit::{run_task2, RunOptions};
use badx_core::config::{parse_config, AuditConfig};
use badx_core::corpus::{load_classes, IdentityClass};
use badx_core::llmclient::{load_replay, read_transcript, ChatClient, GenerationRequest, Transcript};
use badx_core::scoring::Scorer;
use badx_core::Error;

const MODEL: &str = "fixture-model";

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn setup() -> (AuditConfig, Vec<IdentityClass>, RunOptions) {
    let cfg = parse_config(fixtures().join("audit.json")).unwrap();
    let classes = load_classes(cfg.resolve(&cfg.classes_path)).unwrap();
    let options = RunOptions {
        params: cfg.sampling.clone(),
        normalization: cfg.normalization,
        keep_going: false,
        concurrency: cfg.concurrency,
    };
    (cfg, classes, options)
}

#[test]
fn replay_returns_recorded_choices_verbatim() {
    let (cfg, _, _) = setup();
    let client = load_replay(fixtures().join("replay"), MODEL).unwrap();
    let recorded = read_transcript(&fixtures().join("replay").join(format!("{MODEL}.jsonl"))).unwrap();
    let request = GenerationRequest {
        prompt: &cfg.prompts[0],
        persona: Some(&cfg.personas[2]),
        params: &cfg.sampling,
    };
    let records = client.generate(&request).unwrap();
    let fp = &records[0].request_fingerprint;
    let entry = recorded.iter().find(|e| &e.fp == fp).unwrap();
    assert_eq!(records.len(), cfg.sampling.n);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r.generation_index, i);
        assert_eq!(entry.response["choices"][i]["message"]["content"], r.text.as_str());
        assert_eq!(r.created_at, entry.t);
    }
    assert_eq!(client.generate(&request).unwrap(), records);
}

#[test]
fn missing_fixture_names_the_cell() {
    let (cfg, _, _) = setup();
    let client = load_replay(fixtures().join("replay"), MODEL).unwrap();
    let mut prompt = cfg.prompts[1].clone();
    prompt.text.push_str(" Be brief.");
    let err = client
        .generate(&GenerationRequest {
            prompt: &prompt,
            persona: Some(&cfg.personas[4]),
            params: &cfg.sampling,
        })
        .unwrap_err();
    match err {
        Error::FixtureMissing { prompt_id, persona, .. } => {
            assert_eq!(prompt_id, prompt.id);
            assert_eq!(persona, cfg.personas[4].id);
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn replayed_exchanges_are_copied_once() {
    let (cfg, _, _) = setup();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.jsonl");
    let transcript = Arc::new(Transcript::open(&path).unwrap());
    let client = load_replay(fixtures().join("replay"), MODEL)
        .unwrap()
        .with_transcript(transcript);
    let request = GenerationRequest {
        prompt: &cfg.prompts[0],
        persona: None,
        params: &cfg.sampling,
    };
    client.generate(&request).unwrap();
    client.generate(&request).unwrap();
    assert_eq!(read_transcript(&path).unwrap().len(), 1);
}

#[test]
fn grid_has_one_cell_per_prompt_and_persona_in_any_persona_order() {
    let (cfg, classes, options) = setup();
    let client = load_replay(fixtures().join("replay"), MODEL).unwrap();
    let scorer = Scorer::new(cfg.build_providers(MODEL).unwrap(), cfg.scoring.clone());
    let audit = run_task2(&classes, &cfg.personas, &cfg.prompts, &client, &scorer, &options, None).unwrap();
    assert_eq!(audit.grid.len(), cfg.prompts.len() * cfg.personas.len());
    assert_eq!(audit.psi.len(), cfg.personas.len());
    assert_eq!(audit.generations.len(), cfg.prompts.len() * (cfg.personas.len() + 1) * cfg.sampling.n);

    let mut reversed = cfg.personas.clone();
    reversed.reverse();
    let again = run_task2(&classes, &reversed, &cfg.prompts, &client, &scorer, &options, None).unwrap();
    for cell in &audit.grid {
        let other = again.cell(&cell.prompt_id, &cell.persona_id).unwrap();
        assert_eq!(other.bad_by_metric, cell.bad_by_metric);
        assert_eq!(other.bad_avg, cell.bad_avg);
    }
    for p in &audit.psi {
        let q = again.psi.iter().find(|q| q.persona_id == p.persona_id).unwrap();
        assert_eq!(q.psi, p.psi);
    }
}

#[test]
fn duplicate_persona_ids_are_a_config_error() {
    let (cfg, classes, options) = setup();
    let client = load_replay(fixtures().join("replay"), MODEL).unwrap();
    let scorer = Scorer::new(cfg.build_providers(MODEL).unwrap(), cfg.scoring.clone());
    let mut personas = cfg.personas.clone();
    personas.push(personas[0].clone());
    let err = run_task2(&classes, &personas, &cfg.prompts, &client, &scorer, &options, None).unwrap_err();
    assert!(matches!(err, Error::Config { .. }), "{err}");
}
