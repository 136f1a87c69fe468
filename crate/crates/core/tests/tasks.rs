use std::collections::HashSet;
use std::sync::LazyLock;

use phonolearn_core::phoneme::{Phoneme, PhonemeInventory, PhonemeSequence};
use phonolearn_core::pwld::{sequence_pwld, CostConfig};
use phonolearn_core::task::{
    classify_task, distractor_space, generate_distractors, generate_tasks, score_answer,
    strip_short_vowels, task_complexity, validate_completion, Answer, AudioSpan, ComplexityClass,
    DistractorError, GenerationPlan, Task, TaskClass, TaskSpec, WordItem, WordRef,
};
use proptest::prelude::*;

static INV: LazyLock<PhonemeInventory> = LazyLock::new(PhonemeInventory::persian);

fn ipa(s: &str) -> PhonemeSequence {
    INV.tokenize(s).unwrap()
}

fn seq_strategy(min: usize, max: usize) -> impl Strategy<Value = PhonemeSequence> {
    let n = INV.phonemes().len();
    prop::collection::vec(0..n, min..=max).prop_map(|ix| {
        PhonemeSequence::from_phones(ix.into_iter().map(|i| INV.phonemes()[i].clone()).collect())
    })
}

fn spec(class: TaskClass, displayed: &str, options: &[&str], truth: Option<&str>) -> TaskSpec {
    TaskSpec {
        id: "l1-w000".into(),
        word_ref: WordRef {
            line_id: "l1".into(),
            word_index: 0,
        },
        audio_span: AudioSpan {
            start_ms: 0,
            end_ms: 400,
        },
        displayed: ipa(displayed),
        options: options.iter().map(|o| ipa(o)).collect(),
        task_class: class,
        truth: truth.map(ipa),
    }
}

fn hamming(a: &Phoneme, b: &Phoneme) -> usize {
    a.features()
        .iter()
        .zip(b.features())
        .filter(|(x, y)| **x != *y)
        .count()
}

/// Enumerates every length-preserving sequence over the inventory and keeps
/// the ones that are either a pure short-vowel alternation or a single swap
/// to a minimally distant consonant.
fn variant_space_by_enumeration(truth: &[&str]) -> (usize, usize) {
    let truth: Vec<&Phoneme> = truth.iter().map(|s| INV.get(s).unwrap()).collect();
    let all = INV.phonemes();
    let n = truth.len();
    let (mut vowel, mut consonant) = (0, 0);
    for code in 0..all.len().pow(n as u32) {
        let mut rest = code;
        let cand: Vec<&Phoneme> = (0..n)
            .map(|_| {
                let p = &all[rest % all.len()];
                rest /= all.len();
                p
            })
            .collect();
        let diff: Vec<usize> = (0..n).filter(|&i| cand[i] != truth[i]).collect();
        if diff.is_empty() {
            continue;
        }
        if diff
            .iter()
            .all(|&i| truth[i].is_short_vowel() && cand[i].is_short_vowel())
        {
            vowel += 1;
        } else if let [i] = diff[..] {
            let t = truth[i];
            if t.is_consonant() && cand[i].is_consonant() {
                let best = all
                    .iter()
                    .filter(|c| c.is_consonant())
                    .map(|c| hamming(t, c))
                    .filter(|&d| d > 0)
                    .min()
                    .unwrap();
                if hamming(t, cand[i]) == best {
                    consonant += 1;
                }
            }
        }
    }
    (vowel, consonant)
}

#[test]
fn dael_variant_space_matches_enumeration() {
    let (vowels, consonants) = distractor_space(&ipa("dæl"), &INV);
    assert_eq!(
        variant_space_by_enumeration(&["d", "æ", "l"]),
        (vowels.len(), consonants.len())
    );
    let available = vowels.len() + consonants.len();
    assert!(available < 9);
    assert_eq!(
        generate_distractors(&ipa("dæl"), &INV, available, 3)
            .unwrap()
            .len(),
        available
    );
    assert!(matches!(
        generate_distractors(&ipa("dæl"), &INV, 9, 3),
        Err(DistractorError::Exhausted { requested: 9, .. })
    ));
}

#[test]
fn other_words_match_enumeration() {
    for word in [
        &["s", "æ", "r"][..],
        &["k", "e", "tʃ"],
        &["dʒ", "ɒː"],
        &["o"],
    ] {
        let seq = PhonemeSequence::from_phones(
            word.iter().map(|s| INV.get(s).unwrap().clone()).collect(),
        );
        let (v, c) = distractor_space(&seq, &INV);
        assert_eq!(
            variant_space_by_enumeration(word),
            (v.len(), c.len()),
            "{word:?}"
        );
    }
}

#[test]
fn classification_table() {
    let cfg = CostConfig::default();
    let a = Task::new(
        spec(
            TaskClass::Disambiguation,
            "dæl",
            &["del", "dæl"],
            Some("dæl"),
        ),
        &cfg,
    )
    .unwrap();
    let b = Task::new(spec(TaskClass::Completion, "dl", &[], Some("dæl")), &cfg).unwrap();
    let c = Task::new(spec(TaskClass::Correction, "del", &[], Some("dæl")), &cfg).unwrap();
    let c2 = Task::new(spec(TaskClass::Completion, "dl", &[], None), &cfg).unwrap();
    assert_eq!(classify_task(&a), ComplexityClass::A);
    assert_eq!(classify_task(&b), ComplexityClass::B);
    assert_eq!(classify_task(&c), ComplexityClass::C);
    assert_eq!(classify_task(&c2), ComplexityClass::C);
    assert_eq!(a.complexity(), Some(0.0));
    assert_eq!(c.complexity(), Some(task_complexity(&c, &cfg).unwrap()));
    assert_eq!(c2.complexity(), None);
}

proptest! {
    #[test]
    fn strip_is_idempotent(seq in seq_strategy(0, 10)) {
        let once = strip_short_vowels(&seq);
        prop_assert_eq!(strip_short_vowels(&once), once.clone());
        prop_assert!(once.iter().all(|p| !p.is_short_vowel()));
        prop_assert!(validate_completion(&once, &seq).valid);
    }

    #[test]
    fn classification_ignores_option_order(truth in seq_strategy(2, 5), seed in any::<u64>(), rot in 0usize..3) {
        let cfg = CostConfig::default();
        let Ok(distractors) = generate_distractors(&truth, &INV, 2, seed) else {
            return Ok(());
        };
        let mut options = distractors.clone();
        options.push(truth.clone());
        let mut rotated = options.clone();
        rotated.rotate_left(rot);
        let build = |options: Vec<PhonemeSequence>| {
            Task::new(TaskSpec {
                id: "x-w000".into(),
                word_ref: WordRef { line_id: "x".into(), word_index: 0 },
                audio_span: AudioSpan { start_ms: 1, end_ms: 2 },
                displayed: distractors[0].clone(),
                options,
                task_class: TaskClass::Disambiguation,
                truth: Some(truth.clone()),
            }, &cfg).unwrap()
        };
        let (a, b) = (build(options), build(rotated));
        prop_assert_eq!(classify_task(&a), classify_task(&b));
        prop_assert_eq!(a.complexity(), b.complexity());
        prop_assert!(a.complexity().unwrap() > 0.0);
        for (i, option) in b.options().iter().enumerate() {
            let scored = score_answer(&b, &Answer::Option(i), &cfg).unwrap();
            prop_assert_eq!(scored.distance_to_truth, Some(sequence_pwld(&truth, option, &cfg).total_cost));
            prop_assert_eq!(scored.is_exact, option == &truth);
        }
    }

    #[test]
    fn distractors_are_distinct_and_wrong(truth in seq_strategy(1, 6), k in 1usize..6, seed in any::<u64>()) {
        let cfg = CostConfig::default();
        let (v, c) = distractor_space(&truth, &INV);
        match generate_distractors(&truth, &INV, k, seed) {
            Ok(ds) => {
                prop_assert_eq!(ds.len(), k);
                let unique: HashSet<_> = ds.iter().collect();
                prop_assert_eq!(unique.len(), k);
                for d in &ds {
                    prop_assert!(sequence_pwld(&truth, d, &cfg).total_cost > 0.0);
                    prop_assert_eq!(d.len(), truth.len());
                }
                prop_assert_eq!(generate_distractors(&truth, &INV, k, seed).unwrap(), ds);
            }
            Err(DistractorError::Exhausted { available, .. }) => {
                prop_assert!(k > available);
                prop_assert_eq!(available, v.len() + c.len());
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn generated_tasks_respect_invariants(seed in any::<u64>(), rate in 0.0..=1.0f64) {
        let words = corpus();
        let plan = GenerationPlan { rate, seed, disambiguation: 6, correction: 2, completion: 2, options: 3 };
        let cfg = CostConfig::default();
        let tasks = generate_tasks(&words, &INV, &cfg, &plan).unwrap();
        prop_assert_eq!(tasks.len(), 10);
        let ids: HashSet<_> = tasks.iter().map(Task::id).collect();
        prop_assert_eq!(ids.len(), 10);
        for t in &tasks {
            let truth = t.truth().unwrap();
            match t.task_class() {
                TaskClass::Disambiguation => {
                    prop_assert_eq!(t.options().len(), 3);
                    prop_assert!(t.truth_listed());
                    prop_assert!(t.options().contains(t.displayed()));
                }
                TaskClass::Correction => {
                    prop_assert!(t.options().is_empty());
                    prop_assert!(t.complexity().unwrap() > 0.0);
                }
                TaskClass::Completion => {
                    prop_assert_eq!(t.displayed(), &strip_short_vowels(truth));
                    prop_assert_eq!(classify_task(t), ComplexityClass::B);
                }
            }
            prop_assert_eq!(t.complexity().unwrap() == 0.0, t.displayed() == truth);
        }
        prop_assert_eq!(generate_tasks(&words, &INV, &cfg, &plan).unwrap(), tasks);
    }
}

fn corpus() -> Vec<WordItem> {
    "del be dæst ɒːmæd ke xuːn mæn tʃe ʃæb dʒɒːn ɡoft tæn sær bærɡ"
        .split(' ')
        .enumerate()
        .map(|(i, w)| WordItem {
            word_ref: WordRef {
                line_id: "c-01".into(),
                word_index: i,
            },
            audio_span: AudioSpan {
                start_ms: i as u64 * 500,
                end_ms: i as u64 * 500 + 400,
            },
            truth: ipa(w),
        })
        .collect()
}

#[test]
fn rate_extremes_control_displayed_form() {
    let cfg = CostConfig::default();
    for (rate, wrong) in [(0.0, false), (1.0, true)] {
        let plan = GenerationPlan {
            rate,
            seed: 11,
            disambiguation: 8,
            correction: 0,
            completion: 0,
            options: 3,
        };
        for t in generate_tasks(&corpus(), &INV, &cfg, &plan).unwrap() {
            assert_eq!(t.displayed() != t.truth().unwrap(), wrong, "{}", t.id());
        }
    }
}
