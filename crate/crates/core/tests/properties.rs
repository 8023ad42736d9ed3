use std::collections::BTreeSet;

use badx_core::association::{
    ceat_combine, effect_size, effect_size_from_s, permutation_pvalue_from_s, EffectSize, PermutationMode,
    StimulusSets,
};
use badx_core::audit::{bad_avg, psi, volatility};
use badx_core::corpus::{compute_iibs, find_lexicon_mentions, parse_corpus, to_json, Corpus, IdentityClass, Label, SentenceRecord};
use badx_core::embeddings::{cosine, parse_word_vectors, serialize_word_vectors, StaticVectors, Vector};
use badx_core::explain::{aggregate_terms, weighted_ridge, Attribution};
use badx_core::report::kde;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::sample::subsequence;

fn vector(dim: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-1.0f64..1.0, dim)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        .prop_map(|v| Vector::new(v).unwrap())
}

fn vectors(dim: usize, len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Vector>> {
    prop::collection::vec(vector(dim), len)
}

fn spread(values: &[f64]) -> bool {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo > 1e-3
}

fn s_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-1.0f64..1.0, 1..8), prop::collection::vec(-1.0f64..1.0, 1..8))
        .prop_filter("spread", |(x, y)| spread(&[x.as_slice(), y.as_slice()].concat()))
}

proptest! {
    #[test]
    fn cosine_is_symmetric_bounded_and_scale_free(u in vector(6), v in vector(6), a in 0.1f64..10.0) {
        let c = cosine(&u, &v).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        prop_assert!((c - cosine(&v, &u).unwrap()).abs() < 1e-12);
        prop_assert!((c - cosine(&u.scaled(a).unwrap(), &v).unwrap()).abs() < 1e-12);
        prop_assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn swapping_targets_negates_d((sx, sy) in s_pair()) {
        let d = effect_size_from_s(&sx, &sy).unwrap().d;
        prop_assert_eq!(effect_size_from_s(&sy, &sx).unwrap().d, -d);
    }

    #[test]
    fn d_is_affine_invariant((sx, sy) in s_pair(), c in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let d = effect_size_from_s(&sx, &sy).unwrap().d;
        let f = |s: &[f64]| s.iter().map(|v| c * v + shift).collect::<Vec<_>>();
        let d2 = effect_size_from_s(&f(&sx), &f(&sy)).unwrap().d;
        prop_assert!((d - d2).abs() < 1e-8, "{} vs {}", d, d2);
    }

    #[test]
    fn d_is_bounded_for_equal_set_sizes(pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..10)) {
        let (sx, sy): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(spread(&[sx.as_slice(), sy.as_slice()].concat()));
        let d = effect_size_from_s(&sx, &sy).unwrap().d;
        prop_assert!(d.abs() <= 2.0 + 1e-9);
    }

    #[test]
    fn stimulus_effect_is_unchanged_by_vector_scaling(
        x in vectors(4, 2..=4), y in vectors(4, 2..=4), a in vectors(4, 2..=3), b in vectors(4, 2..=3),
        k in 0.1f64..5.0,
    ) {
        let sets = StimulusSets::new(x.clone(), y.clone(), a.clone(), b.clone()).unwrap();
        let Ok(e) = effect_size(&sets) else { return Ok(()) };
        let scale = |vs: &[Vector]| vs.iter().map(|v| v.scaled(k).unwrap()).collect::<Vec<_>>();
        let scaled = StimulusSets::new(scale(&x), scale(&y), scale(&a), scale(&b)).unwrap();
        prop_assert!((effect_size(&scaled).unwrap().d - e.d).abs() < 1e-9);
        prop_assert!((effect_size(&sets.swapped_attributes()).unwrap().d + e.d).abs() < 1e-9);
    }

    #[test]
    fn identical_effects_combine_to_themselves(d in -2.0f64..2.0, n in 2usize..10, k in 1usize..12) {
        let effects = vec![EffectSize::with_d(d, n, n); k];
        let c = ceat_combine(&effects).unwrap();
        prop_assert_eq!(c.d_combined, d);
        prop_assert_eq!(c.tau2, 0.0);
        prop_assert!(c.ci_low <= d && d <= c.ci_high);
    }

    #[test]
    fn combined_effect_lies_within_inputs(ds in prop::collection::vec(-2.0f64..2.0, 1..12)) {
        let effects: Vec<EffectSize> = ds.iter().map(|&d| EffectSize::with_d(d, 5, 5)).collect();
        let c = ceat_combine(&effects).unwrap();
        let lo = ds.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(c.tau2 >= 0.0);
        prop_assert!(lo - 1e-12 <= c.d_combined && c.d_combined <= hi + 1e-12);
    }

    #[test]
    fn exact_pvalue_matches_brute_force(
        xs in prop::collection::vec(-8i64..8, 1..6),
        ys in prop::collection::vec(-8i64..8, 1..6),
    ) {
        // eighths are exact in binary, so the oracle can compare integers
        let sx: Vec<f64> = xs.iter().map(|&v| v as f64 / 8.0).collect();
        let sy: Vec<f64> = ys.iter().map(|&v| v as f64 / 8.0).collect();
        let p = permutation_pvalue_from_s(&sx, &sy, PermutationMode::Exact).unwrap();

        let pool: Vec<i64> = xs.iter().chain(&ys).copied().collect();
        let (nx, ny) = (xs.len() as i64, ys.len() as i64);
        let total: i64 = pool.iter().sum();
        let stat = |sum_x: i64| sum_x * ny - (total - sum_x) * nx;
        let observed = stat(xs.iter().sum());
        let (mut hits, mut count) = (0u64, 0u64);
        for mask in 0u32..(1 << pool.len()) {
            if mask.count_ones() as i64 != nx {
                continue;
            }
            let sum_x: i64 = (0..pool.len()).filter(|i| mask >> i & 1 == 1).map(|i| pool[i]).sum();
            count += 1;
            hits += u64::from(stat(sum_x) >= observed);
        }
        prop_assert_eq!(p, hits as f64 / count as f64);
    }

    #[test]
    fn volatility_ignores_translation_and_scales(
        xs in prop::collection::vec(-3.0f64..3.0, 2..20), shift in -10.0f64..10.0, c in -4.0f64..4.0,
    ) {
        let v = volatility(&xs).unwrap();
        let moved: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
        prop_assert!(v >= 0.0);
        prop_assert!((volatility(&moved).unwrap() - v).abs() < 1e-9);
        prop_assert!((volatility(&scaled).unwrap() - c.abs() * v).abs() < 1e-9);
    }

    #[test]
    fn psi_is_linear(
        pairs in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..12), a in -3.0f64..3.0, b in -3.0f64..3.0,
    ) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mixed: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
        let expect = a * psi(&xs).unwrap() + b * psi(&ys).unwrap();
        prop_assert!((psi(&mixed).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn bad_avg_lies_between_its_metrics(s in prop::array::uniform3(-2.0f64..2.0)) {
        let v = bad_avg(&s).unwrap();
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-12 <= v && v <= hi + 1e-12);
    }

    #[test]
    fn kde_is_positive_and_integrates_to_one(xs in prop::collection::vec(-2.0f64..2.0, 2..40)) {
        prop_assume!(spread(&xs));
        let curve = kde(&xs, 512).unwrap();
        prop_assert!(curve.density.iter().all(|d| *d >= 0.0));
        prop_assert!((curve.trapezoid_integral() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn term_ranking_ignores_attribution_order(
        atts in prop::collection::vec(prop::collection::vec((0usize..6, -1.0f64..1.0), 1..6), 1..6),
        seed in any::<u64>(),
    ) {
        const WORDS: [&str; 6] = ["alpha", "Beta", "gamma", "ALPHA", "delta", "beta"];
        let attributions: Vec<Attribution> = atts
            .iter()
            .map(|toks| Attribution {
                tokens: toks.iter().map(|(i, _)| WORDS[*i].to_string()).collect(),
                weights: toks.iter().map(|(_, w)| *w).collect(),
                intercept: 0.0,
                fit_r2: 1.0,
            })
            .collect();
        let mut shuffled = attributions.clone();
        let n = shuffled.len();
        for i in 0..n {
            shuffled.swap(i, (seed as usize).wrapping_add(i * 7) % n);
        }
        prop_assert_eq!(aggregate_terms(&attributions, 10), aggregate_terms(&shuffled, 10));
    }

    #[test]
    fn ridge_shrinks_as_lambda_grows(
        rows in prop::collection::vec((prop::collection::vec(0u8..2, 4), -1.0f64..1.0, 0.05f64..1.0), 6..20),
        l1 in 0.0f64..5.0, dl in 0.01f64..5.0,
    ) {
        let n = rows.len();
        let x = DMatrix::from_fn(n, 4, |i, j| rows[i].0[j] as f64);
        let y = DVector::from_fn(n, |i, _| rows[i].1);
        let w = DVector::from_fn(n, |i, _| rows[i].2);
        let (b1, _, _) = weighted_ridge(&x, &y, &w, l1 + 1e-3);
        let (b2, _, _) = weighted_ridge(&x, &y, &w, l1 + 1e-3 + dl);
        prop_assert!(b2.norm() <= b1.norm() + 1e-9);
    }
}

fn record(i: usize, biased: bool) -> SentenceRecord {
    SentenceRecord {
        id: format!("r{i}"),
        text: format!("sentence {i}"),
        label: if biased { Label::IntersectionalBiased } else { Label::Neutral },
        dimensions: BTreeSet::from(["gender".to_string(), "race".to_string()]),
        class_id: None,
    }
}

fn corpus(labels: &[bool]) -> Corpus {
    Corpus {
        records: labels.iter().enumerate().map(|(i, b)| record(i, *b)).collect(),
        ..Corpus::default()
    }
}

proptest! {
    #[test]
    fn corpus_round_trips(labels in prop::collection::vec(any::<bool>(), 0..20)) {
        let c = corpus(&labels);
        prop_assert_eq!(parse_corpus(&to_json(&c)).unwrap(), c);
    }

    #[test]
    fn iibs_flips_and_ignores_order(labels in prop::collection::vec(any::<bool>(), 1..30)) {
        let c = corpus(&labels);
        let v = compute_iibs(&c).unwrap();
        let mut flipped = c.clone();
        flipped.records.iter_mut().for_each(|r| r.label = r.label.flipped());
        prop_assert!((compute_iibs(&flipped).unwrap() - (1.0 - v)).abs() < 1e-12);
        let mut reversed = c;
        reversed.records.reverse();
        prop_assert_eq!(compute_iibs(&reversed).unwrap(), v);
    }

    #[test]
    fn mentions_never_overlap(words in prop::collection::vec(
        prop::sample::select(vec!["black", "women", "black women", "men", "white", "white men", "lazy", "smart", "and", "the"]),
        0..30,
    )) {
        let class = IdentityClass {
            id: "c".into(),
            name: "c".into(),
            targets_1: vec!["black women".into(), "women".into()],
            targets_2: vec!["white men".into(), "men".into()],
            attributes_1: vec!["lazy".into()],
            attributes_2: vec!["smart".into()],
            attribute_templates: vec!["They are {term}.".into()],
        };
        let text = words.join(" ");
        let mentions = find_lexicon_mentions(&text, &class);
        for pair in mentions.windows(2) {
            prop_assert!(pair[0].span.end <= pair[1].span.start);
        }
        let chars: Vec<char> = text.chars().collect();
        for m in &mentions {
            let found: String = chars[m.span.start..m.span.end].iter().collect();
            prop_assert_eq!(found.to_lowercase(), m.term.to_lowercase());
        }
    }

    #[test]
    fn word_vectors_round_trip(
        terms in subsequence(vec!["a", "b", "black women", "c", "d", "e", "f"], 1..7),
        seed in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let vectors = terms
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.contains(' '))
            .map(|(i, t)| {
                let v: Vec<f64> = seed.iter().map(|s| s + i as f64 + 0.1).collect();
                (t.to_string(), Vector::new(v).unwrap())
            })
            .collect();
        let sv = StaticVectors::new(3, vectors);
        let text = serialize_word_vectors(&sv);
        let back = parse_word_vectors(text.as_bytes(), Some(3)).unwrap();
        prop_assert_eq!(back.len(), sv.len());
        for t in &terms {
            prop_assert_eq!(back.get(t), sv.get(t));
        }
    }
}
