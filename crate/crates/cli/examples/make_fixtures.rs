//! Writes synthetic replay transcripts for an audit config.
//!
//! ```text
//! cargo run -p badx-cli --example make_fixtures -- fixtures/audit.json fixtures/replay
//! ```
//!
//! Responses are assembled from each prompt's class lexicons. Marginalized
//! personas pair the first target set with stereotypical attributes more
//! often than the neutral cell; advantaged personas less often.

use std::path::PathBuf;

use badx_core::audit::default_task1_prompts;
use badx_core::config::parse_config;
use badx_core::corpus::{load_classes, IdentityClass};
use badx_core::hash::fnv1a64;
use badx_core::llmclient::{GenerationRequest, Persona, PersonaGroup, PromptSpec, Transcript, TranscriptEntry};
use badx_core::llmclient::request_fingerprint;
use chrono::{DateTime, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const FILLER: &[&str] = &[
    "professional", "elite", "accessibility", "representation", "merit", "support", "opportunity",
    "equity", "networks", "mentorship", "culture fit", "systemic barriers", "resilience",
];

fn stereotype_rate(persona: Option<&Persona>) -> f64 {
    match persona.map(|p| p.group) {
        None => 0.5,
        Some(PersonaGroup::Marginalized) => 0.75,
        Some(PersonaGroup::Advantaged) => 0.25,
    }
}

fn response_text(class: &IdentityClass, persona: Option<&Persona>, rng: &mut ChaCha8Rng) -> String {
    let rate = stereotype_rate(persona);
    let n_sentences = rng.random_range(3..=5);
    let mut sentences = Vec::with_capacity(n_sentences + 1);
    if let Some(p) = persona {
        sentences.push(format!("Speaking as {}, I see this question through my own experience.", p.description));
    }
    for _ in 0..n_sentences {
        let stereo = rng.random_bool(rate);
        let (target, attribute) = if rng.random_bool(0.5) {
            let a = if stereo { &class.attributes_1 } else { &class.attributes_2 };
            (class.targets_1.choose(rng).unwrap(), a.choose(rng).unwrap())
        } else {
            let a = if stereo { &class.attributes_2 } else { &class.attributes_1 };
            (class.targets_2.choose(rng).unwrap(), a.choose(rng).unwrap())
        };
        let filler = FILLER.choose(rng).unwrap();
        let s = match rng.random_range(0..4) {
            0 => format!("People who are {target} are often described as {attribute}, and {filler} shapes how that plays out."),
            1 => format!("In practice {target} colleagues tend to be seen as {attribute} when {filler} is discussed."),
            2 => format!("Much depends on {filler}; {target} people are frequently called {attribute}."),
            _ => format!("A {attribute} reputation follows {target} workers, whatever their {filler}."),
        };
        sentences.push(s);
    }
    sentences.join(" ")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = PathBuf::from(args.next().ok_or("usage: make_fixtures <config> <out-dir>")?);
    let out = PathBuf::from(args.next().ok_or("usage: make_fixtures <config> <out-dir>")?);
    let cfg = parse_config(&config)?;
    let classes = load_classes(cfg.resolve(&cfg.classes_path))?;
    let t: DateTime<Utc> = "2025-06-01T00:00:00Z".parse()?;
    std::fs::create_dir_all(&out)?;

    let mut task1: Vec<PromptSpec> = Vec::new();
    for c in &classes {
        task1.extend(default_task1_prompts(c, cfg.task1_prompts_per_class));
    }

    for model in &cfg.models {
        let path = out.join(format!("{}.jsonl", model.model_id));
        if path.exists() {
            std::fs::remove_file(&path)?;
        }
        let transcript = Transcript::open(&path)?;
        let mut cells: Vec<(&PromptSpec, Option<&Persona>)> = Vec::new();
        for p in &cfg.prompts {
            cells.push((p, None));
            cells.extend(cfg.personas.iter().map(|c| (p, Some(c))));
        }
        cells.extend(task1.iter().map(|p| (p, None)));

        for (prompt, persona) in cells {
            let class_id = prompt.class_id.as_deref().ok_or("fixture prompts must name a class_id")?;
            let class = classes.iter().find(|c| c.id == class_id).ok_or("unknown class_id")?;
            let request = GenerationRequest {
                prompt,
                persona,
                params: &cfg.sampling,
            };
            let payload = request.payload(&model.model_id)?;
            let fp = request_fingerprint(&payload);
            let key = format!("{}|{}|{}", model.model_id, prompt.id, request.persona_label());
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(key.as_bytes()));
            let choices: Vec<_> = (0..cfg.sampling.n)
                .map(|i| {
                    json!({
                        "index": i,
                        "message": {"role": "assistant", "content": response_text(class, persona, &mut rng)},
                        "finish_reason": "stop",
                    })
                })
                .collect();
            transcript.append(&TranscriptEntry {
                fp,
                request: payload,
                response: json!({"id": format!("fixture-{key}"), "object": "chat.completion", "choices": choices}),
                t,
                status: Some(200),
                attempt: 1,
            })?;
        }
        println!("{}", path.display());
    }
    Ok(())
}
