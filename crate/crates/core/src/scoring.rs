//! Per-response bias scores for CEAT, I-WEAT and I-SEAT.
//!
//! Every score is `-d` so that positive values read as anti-stereotypical.
//! Template and static-lexicon material does not depend on the response and
//! is computed once per (class, metric) and cached.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::association::{
    ceat_combine, effect_size, effect_size_from_s, sample_contexts, EffectSize, MetricKind,
    StimulusSets,
};
use crate::corpus::{find_lexicon_mentions, IdentityClass, LexiconSide, TERM_PLACEHOLDER};
use crate::embeddings::{cosine, Providers, TextEmbedder, Vector};
use crate::error::{Error, Result};
use crate::text::{self, CharSpan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringOptions {
    /// Most context windows sampled per response for CEAT.
    #[serde(default = "default_max_contexts")]
    pub ceat_max_contexts: usize,
    /// Seed for context sampling.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_max_contexts() -> usize {
    100
}

fn default_seed() -> u64 {
    42
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            ceat_max_contexts: default_max_contexts(),
            seed: default_seed(),
        }
    }
}

/// Response-independent material for one (class, metric).
enum Baseline {
    Word(WordBaseline),
    Templates(TemplateSets),
}

/// Static vectors of every in-vocabulary lexicon term, with the target ×
/// attribute cosine matrices precomputed.
struct WordBaseline {
    /// lowercase term per side, in lexicon order (OOV dropped)
    terms: BTreeMap<LexiconSide, Vec<String>>,
    /// cos[target][attr] for X against A and B, Y against A and B
    x_a: Vec<Vec<f64>>,
    x_b: Vec<Vec<f64>>,
    y_a: Vec<Vec<f64>>,
    y_b: Vec<Vec<f64>>,
}

/// Template-sentence embeddings per lexicon side.
struct TemplateSets {
    x: Vec<Vector>,
    y: Vec<Vector>,
    a: Vec<Vector>,
    b: Vec<Vector>,
}

impl TemplateSets {
    fn side(&self, side: LexiconSide) -> &[Vector] {
        match side {
            LexiconSide::Targets1 => &self.x,
            LexiconSide::Targets2 => &self.y,
            LexiconSide::Attributes1 => &self.a,
            LexiconSide::Attributes2 => &self.b,
        }
    }
}

pub struct Scorer {
    providers: Providers,
    options: ScoringOptions,
    baselines: Mutex<HashMap<(String, MetricKind), Arc<Baseline>>>,
}

impl Scorer {
    pub fn new(providers: Providers, options: ScoringOptions) -> Self {
        Self {
            providers,
            options,
            baselines: Mutex::new(HashMap::new()),
        }
    }

    pub fn options(&self) -> &ScoringOptions {
        &self.options
    }

    fn baseline(&self, class: &IdentityClass, metric: MetricKind) -> Result<Arc<Baseline>> {
        let key = (class.id.clone(), metric);
        if let Some(b) = self.baselines.lock().expect("baseline lock").get(&key) {
            return Ok(b.clone());
        }
        let built = Arc::new(match metric {
            MetricKind::IWeat => Baseline::Word(self.word_baseline(class)?),
            MetricKind::Ceat => Baseline::Templates(template_sets(class, &*self.providers.contextual)?),
            MetricKind::ISeat => Baseline::Templates(template_sets(class, &*self.providers.sentence)?),
        });
        self.baselines
            .lock()
            .expect("baseline lock")
            .insert(key, built.clone());
        Ok(built)
    }

    fn word_baseline(&self, class: &IdentityClass) -> Result<WordBaseline> {
        let mut terms = BTreeMap::new();
        let mut vectors: BTreeMap<LexiconSide, Vec<Vector>> = BTreeMap::new();
        for side in LexiconSide::ALL {
            let mut names = Vec::new();
            let mut vecs = Vec::new();
            for term in class.lexicon(side) {
                let key = term.trim().to_lowercase();
                if key.is_empty() || names.contains(&key) {
                    continue;
                }
                if let Some(v) = self.providers.word.word_vector(term)? {
                    names.push(key);
                    vecs.push(v);
                }
            }
            if vecs.is_empty() {
                return Err(Error::UnresolvableLexicon(class.id.clone()));
            }
            terms.insert(side, names);
            vectors.insert(side, vecs);
        }
        let matrix = |t: LexiconSide, a: LexiconSide| -> Result<Vec<Vec<f64>>> {
            vectors[&t]
                .iter()
                .map(|tv| vectors[&a].iter().map(|av| cosine(tv, av)).collect())
                .collect()
        };
        Ok(WordBaseline {
            x_a: matrix(LexiconSide::Targets1, LexiconSide::Attributes1)?,
            x_b: matrix(LexiconSide::Targets1, LexiconSide::Attributes2)?,
            y_a: matrix(LexiconSide::Targets2, LexiconSide::Attributes1)?,
            y_b: matrix(LexiconSide::Targets2, LexiconSide::Attributes2)?,
            terms,
        })
    }

    /// Oriented score (positive = anti-stereotypical) of one response.
    pub fn score_response(&self, response: &str, class: &IdentityClass, metric: MetricKind) -> Result<f64> {
        let baseline = self.baseline(class, metric)?;
        let d = match (metric, &*baseline) {
            (MetricKind::IWeat, Baseline::Word(w)) => iweat_d(response, class, w)?,
            (MetricKind::Ceat, Baseline::Templates(t)) => self.ceat_d(response, class, t)?,
            (MetricKind::ISeat, Baseline::Templates(t)) => self.iseat_d(response, class, t)?,
            _ => unreachable!("baseline kind matches metric"),
        };
        Ok(-d)
    }

    /// Mean score across several classes.
    pub fn score_against(&self, response: &str, classes: &[&IdentityClass], metric: MetricKind) -> Result<f64> {
        if classes.is_empty() {
            return Err(Error::EmptyInput("identity classes"));
        }
        let mut sum = 0.0;
        for c in classes {
            sum += self.score_response(response, c, metric)?;
        }
        Ok(sum / classes.len() as f64)
    }

    fn ceat_d(&self, response: &str, class: &IdentityClass, templates: &TemplateSets) -> Result<f64> {
        let mentions = sample_contexts(response, class, self.options.ceat_max_contexts, self.options.seed);
        let mut windows: Vec<(CharSpan, Vec<LexiconSide>)> = Vec::new();
        for m in &mentions {
            let w = text::sentence_window(response, m.span)?;
            match windows.iter_mut().find(|(span, _)| *span == w) {
                Some((_, sides)) => sides.push(m.side),
                None => windows.push((w, vec![m.side])),
            }
        }
        let texts = windows
            .iter()
            .map(|(w, _)| text::slice(response, *w).map(str::to_string))
            .collect::<Result<Vec<_>>>()?;
        let vectors = if texts.is_empty() {
            Vec::new()
        } else {
            self.providers.contextual.embed_texts(&texts)?
        };

        let mut effects: Vec<EffectSize> = Vec::new();
        for ((_, sides), v) in windows.iter().zip(&vectors) {
            let build = |side: LexiconSide| -> Vec<Vector> {
                let n = sides.iter().filter(|s| **s == side).count();
                if n == 0 {
                    templates.side(side).to_vec()
                } else {
                    vec![v.clone(); n]
                }
            };
            let sets = StimulusSets::new(
                build(LexiconSide::Targets1),
                build(LexiconSide::Targets2),
                build(LexiconSide::Attributes1),
                build(LexiconSide::Attributes2),
            )?;
            match effect_size(&sets) {
                Ok(e) => effects.push(e),
                // a window that carries both targets has no spread at sentence granularity
                Err(Error::DegenerateSpread { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if effects.is_empty() {
            effects.push(effect_size(&StimulusSets::new(
                templates.x.clone(),
                templates.y.clone(),
                templates.a.clone(),
                templates.b.clone(),
            )?)?);
        }
        Ok(ceat_combine(&effects)?.d_combined)
    }

    fn iseat_d(&self, response: &str, class: &IdentityClass, templates: &TemplateSets) -> Result<f64> {
        let mentions = find_lexicon_mentions(response, class);
        let mut x_texts = Vec::new();
        let mut y_texts = Vec::new();
        for s in text::sentences(response) {
            let inside = |side: LexiconSide| {
                mentions
                    .iter()
                    .any(|m| m.side == side && s.contains(&m.span))
            };
            let (t1, t2) = (inside(LexiconSide::Targets1), inside(LexiconSide::Targets2));
            // sentences naming both target groups are ambiguous and left out
            if t1 && !t2 {
                x_texts.push(text::slice(response, s)?.to_string());
            } else if t2 && !t1 {
                y_texts.push(text::slice(response, s)?.to_string());
            }
        }
        let embedder: &dyn TextEmbedder = &*self.providers.sentence;
        let all: Vec<String> = x_texts.iter().chain(&y_texts).cloned().collect();
        let vecs = if all.is_empty() {
            Vec::new()
        } else {
            embedder.embed_texts(&all)?
        };
        let (xv, yv) = vecs.split_at(x_texts.len());
        let x = if xv.is_empty() { templates.x.clone() } else { xv.to_vec() };
        let y = if yv.is_empty() { templates.y.clone() } else { yv.to_vec() };
        let sets = StimulusSets::new(x, y, templates.a.clone(), templates.b.clone())?;
        Ok(effect_size(&sets)?.d)
    }
}

/// Embeddings of every template instantiated with every term, per side. Each
/// instance is embedded through its mention window (the sentence holding the
/// term).
fn template_sets(class: &IdentityClass, embedder: &dyn TextEmbedder) -> Result<TemplateSets> {
    let mut per_side: Vec<Vec<Vector>> = Vec::new();
    for side in LexiconSide::ALL {
        let mut windows = Vec::new();
        for term in class.lexicon(side) {
            if term.trim().is_empty() {
                continue;
            }
            for template in &class.attribute_templates {
                let Some(byte_pos) = template.find(TERM_PLACEHOLDER) else {
                    continue;
                };
                let instance = template.replacen(TERM_PLACEHOLDER, term, 1);
                let start = template[..byte_pos].chars().count();
                let span = CharSpan::new(start, start + term.chars().count());
                let w = text::sentence_window(&instance, span)?;
                windows.push(text::slice(&instance, w)?.to_string());
            }
        }
        if windows.is_empty() {
            return Err(Error::UnresolvableLexicon(class.id.clone()));
        }
        per_side.push(embedder.embed_texts(&windows)?);
    }
    let b = per_side.pop().expect("four sides");
    let a = per_side.pop().expect("four sides");
    let y = per_side.pop().expect("four sides");
    let x = per_side.pop().expect("four sides");
    Ok(TemplateSets { x, y, a, b })
}

fn iweat_d(response: &str, class: &IdentityClass, w: &WordBaseline) -> Result<f64> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for m in find_lexicon_mentions(response, class) {
        *counts.entry(m.term.trim().to_lowercase()).or_default() += 1;
    }
    let weights = |side: LexiconSide| -> Vec<usize> {
        w.terms[&side]
            .iter()
            .map(|t| 1 + counts.get(t).copied().unwrap_or(0))
            .collect()
    };
    let (wa, wb) = (weights(LexiconSide::Attributes1), weights(LexiconSide::Attributes2));
    let (wx, wy) = (weights(LexiconSide::Targets1), weights(LexiconSide::Targets2));
    let weighted_mean = |row: &[f64], weights: &[usize]| -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (c, k) in row.iter().zip(weights) {
            for _ in 0..*k {
                sum += c;
            }
            n += k;
        }
        sum / n as f64
    };
    let expand = |cos_a: &[Vec<f64>], cos_b: &[Vec<f64>], reps: &[usize]| -> Vec<f64> {
        let mut out = Vec::new();
        for ((ra, rb), k) in cos_a.iter().zip(cos_b).zip(reps) {
            let s = weighted_mean(ra, &wa) - weighted_mean(rb, &wb);
            out.extend(std::iter::repeat_n(s, *k));
        }
        out
    };
    let sx = expand(&w.x_a, &w.x_b, &wx);
    let sy = expand(&w.y_a, &w.y_b, &wy);
    Ok(effect_size_from_s(&sx, &sy)?.d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{StaticVectors, TextAsWord, WordEmbedder, DeterministicEmbedder};

    fn class() -> IdentityClass {
        IdentityClass {
            id: "toy".into(),
            name: "Toy".into(),
            targets_1: vec!["alpha".into()],
            targets_2: vec!["beta".into()],
            attributes_1: vec!["gamma".into()],
            attributes_2: vec!["delta".into()],
            attribute_templates: vec!["The {term} arrived.".into(), "A {term} spoke".into()],
        }
    }

    fn static_providers(map: &[(&str, [f64; 2])]) -> Providers {
        let vectors = map
            .iter()
            .map(|(t, c)| (t.to_string(), Vector::new(c.to_vec()).unwrap()))
            .collect();
        let det: Arc<dyn TextEmbedder> = Arc::new(DeterministicEmbedder::new(8));
        Providers {
            word: Arc::new(StaticVectors::new(2, vectors)) as Arc<dyn WordEmbedder>,
            contextual: det.clone(),
            sentence: det,
        }
    }

    #[test]
    fn iweat_aligned_axes_matches_direct_effect() {
        let p = static_providers(&[
            ("alpha", [1.0, 0.0]),
            ("gamma", [1.0, 0.0]),
            ("beta", [0.0, 1.0]),
            ("delta", [0.0, 1.0]),
        ]);
        let scorer = Scorer::new(p, ScoringOptions::default());
        let s = scorer.score_response("nothing to see", &class(), MetricKind::IWeat).unwrap();
        assert!((s + 2.0).abs() < 1e-12);
    }

    #[test]
    fn iweat_counts_reweight() {
        let p = static_providers(&[
            ("alpha", [1.0, 0.0]),
            ("gamma", [0.8, 0.6]),
            ("beta", [0.0, 1.0]),
            ("delta", [0.6, 0.8]),
        ]);
        let scorer = Scorer::new(p, ScoringOptions::default());
        let base = scorer.score_response("no terms", &class(), MetricKind::IWeat).unwrap();
        let shifted = scorer
            .score_response("alpha alpha gamma", &class(), MetricKind::IWeat)
            .unwrap();
        // the direct oracle: expand the vectors by 1 + count and run effect_size
        let v = |c: [f64; 2]| Vector::new(c.to_vec()).unwrap();
        let sets = StimulusSets::new(
            vec![v([1.0, 0.0]); 3],
            vec![v([0.0, 1.0])],
            vec![v([0.8, 0.6]); 2],
            vec![v([0.6, 0.8])],
        )
        .unwrap();
        let oracle = -effect_size(&sets).unwrap().d;
        assert!((shifted - oracle).abs() < 1e-12);
        assert!((base - shifted).abs() > 1e-6);
    }

    #[test]
    fn iweat_oov_side_is_unresolvable() {
        let p = static_providers(&[("alpha", [1.0, 0.0]), ("gamma", [1.0, 0.0]), ("delta", [0.0, 1.0])]);
        let scorer = Scorer::new(p, ScoringOptions::default());
        assert!(matches!(
            scorer.score_response("x", &class(), MetricKind::IWeat),
            Err(Error::UnresolvableLexicon(_))
        ));
    }

    #[test]
    fn all_metrics_deterministic() {
        let scorer = Scorer::new(Providers::deterministic(16), ScoringOptions::default());
        let text = "The alpha team met. A beta group met the gamma lead! Delta rules.";
        for m in MetricKind::ALL {
            let a = scorer.score_response(text, &class(), m).unwrap();
            let b = scorer.score_response(text, &class(), m).unwrap();
            assert_eq!(a.to_bits(), b.to_bits(), "{m}");
            assert!(a.is_finite());
        }
    }

    #[test]
    fn mention_free_response_scores_template_baseline() {
        let scorer = Scorer::new(Providers::deterministic(16), ScoringOptions::default());
        let c = class();
        for m in MetricKind::ALL {
            let a = scorer.score_response("Nothing relevant.", &c, m).unwrap();
            let b = scorer.score_response("Something else entirely?", &c, m).unwrap();
            assert_eq!(a, b, "{m}");
        }
    }

    #[test]
    fn ceat_single_window_uses_templates_for_missing_sides() {
        let det = Arc::new(DeterministicEmbedder::new(16));
        let scorer = Scorer::new(Providers::deterministic(16), ScoringOptions::default());
        let c = class();
        let response = "The alpha arrived late.";
        let got = scorer.score_response(response, &c, MetricKind::Ceat).unwrap();
        let t = template_sets(&c, &*det).unwrap();
        let sets = StimulusSets::new(
            vec![det.embed_text(response).unwrap()],
            t.y.clone(),
            t.a.clone(),
            t.b.clone(),
        )
        .unwrap();
        let oracle = -effect_size(&sets).unwrap().d;
        assert_eq!(got, oracle);
    }

    #[test]
    fn text_as_word_embeds_bare_term() {
        let det: Arc<dyn TextEmbedder> = Arc::new(DeterministicEmbedder::new(8));
        let w = TextAsWord(det.clone());
        assert_eq!(w.word_vector("alpha").unwrap().unwrap(), det.embed_text("alpha").unwrap());
    }
}
