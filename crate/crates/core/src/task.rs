//! Annotation tasks: construction, classification, distractor generation and
//! response scoring.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phoneme::{Phoneme, PhonemeInventory, PhonemeSequence, TokenizeError};
use crate::pwld::{phone_distance, sequence_pwld, CostConfig};

/// Short-vowel slots beyond this are left untouched by the distractor
/// enumerator to keep the variant space bounded.
const MAX_VOWEL_SLOTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskClass {
    Disambiguation,
    Completion,
    Correction,
}

/// How much is known about the right answer.
///
/// A: expert truth is among the options. B: expert truth exists for a
/// short-vowel completion. C: truth unknown or absent from the options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComplexityClass {
    A,
    B,
    C,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WordRef {
    pub line_id: String,
    pub word_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AudioSpan {
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("task {id}: {class:?} tasks need a ground truth")]
    MissingTruth { id: String, class: TaskClass },
    #[error("task {id}: the ground truth must be one of the options")]
    TruthNotInOptions { id: String },
    #[error("task {id}: disambiguation needs at least 2 options, got {found}")]
    TooFewOptions { id: String, found: usize },
    #[error("task {id}: the ground truth must not be among the options of a correction task")]
    TruthAmongOptions { id: String },
    #[error("task {id}: option {index} duplicates an earlier option")]
    DuplicateOption { id: String, index: usize },
    #[error("task {id}: displayed skeleton contains a short vowel at position {position}")]
    ShortVowelInSkeleton { id: String, position: usize },
    #[error(
        "task {id}: truth is not the displayed skeleton plus short vowels (position {position})"
    )]
    NotACompletion { id: String, position: usize },
    #[error("task {id}: audio span {start_ms}..{end_ms} is empty or reversed")]
    EmptySpan {
        id: String,
        start_ms: u64,
        end_ms: u64,
    },
    #[error("task {0} has no ground truth")]
    NoTruth(String),
    #[error("task {id}: option index {index} out of range ({len} options)")]
    OptionOutOfRange {
        id: String,
        index: usize,
        len: usize,
    },
    #[error("task {id}: {field}: {source}")]
    Ipa {
        id: String,
        field: String,
        source: TokenizeError,
    },
}

/// One annotation item.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    id: String,
    word_ref: WordRef,
    audio_span: AudioSpan,
    displayed: PhonemeSequence,
    options: Vec<PhonemeSequence>,
    task_class: TaskClass,
    truth: Option<PhonemeSequence>,
    complexity: Option<f64>,
}

/// Everything needed to build a [`Task`]; complexity is derived.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub id: String,
    pub word_ref: WordRef,
    pub audio_span: AudioSpan,
    pub displayed: PhonemeSequence,
    pub options: Vec<PhonemeSequence>,
    pub task_class: TaskClass,
    pub truth: Option<PhonemeSequence>,
}

impl Task {
    /// Validates the class invariants and computes the complexity score.
    pub fn new(spec: TaskSpec, cfg: &CostConfig) -> Result<Self, TaskError> {
        let TaskSpec {
            id,
            word_ref,
            audio_span,
            displayed,
            options,
            task_class,
            truth,
        } = spec;

        if audio_span.start_ms >= audio_span.end_ms {
            return Err(TaskError::EmptySpan {
                id,
                start_ms: audio_span.start_ms,
                end_ms: audio_span.end_ms,
            });
        }
        let mut seen = HashSet::new();
        for (index, option) in options.iter().enumerate() {
            if !seen.insert(option) {
                return Err(TaskError::DuplicateOption { id, index });
            }
        }
        let truth_listed = truth.as_ref().is_some_and(|t| options.contains(t));

        match task_class {
            TaskClass::Disambiguation => {
                if truth.is_none() {
                    return Err(TaskError::MissingTruth {
                        id,
                        class: task_class,
                    });
                }
                if !truth_listed {
                    return Err(TaskError::TruthNotInOptions { id });
                }
                if options.len() < 2 {
                    return Err(TaskError::TooFewOptions {
                        id,
                        found: options.len(),
                    });
                }
            }
            TaskClass::Completion => {
                if let Some(position) = displayed.iter().position(Phoneme::is_short_vowel) {
                    return Err(TaskError::ShortVowelInSkeleton { id, position });
                }
                if let Some(truth) = &truth {
                    let check = validate_completion(&displayed, truth);
                    if let Some(position) = check.first_violation {
                        return Err(TaskError::NotACompletion { id, position });
                    }
                }
            }
            TaskClass::Correction => {
                if truth_listed {
                    return Err(TaskError::TruthAmongOptions { id });
                }
            }
        }

        let complexity = truth
            .as_ref()
            .map(|t| sequence_pwld(&displayed, t, cfg).total_cost);
        Ok(Task {
            id,
            word_ref,
            audio_span,
            displayed,
            options,
            task_class,
            truth,
            complexity,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn word_ref(&self) -> &WordRef {
        &self.word_ref
    }

    pub fn audio_span(&self) -> AudioSpan {
        self.audio_span
    }

    pub fn displayed(&self) -> &PhonemeSequence {
        &self.displayed
    }

    pub fn options(&self) -> &[PhonemeSequence] {
        &self.options
    }

    pub fn task_class(&self) -> TaskClass {
        self.task_class
    }

    pub fn truth(&self) -> Option<&PhonemeSequence> {
        self.truth.as_ref()
    }

    /// Displayed-to-truth PWLD, absent when there is no truth.
    pub fn complexity(&self) -> Option<f64> {
        self.complexity
    }

    /// Whether the truth is among the options.
    pub fn truth_listed(&self) -> bool {
        self.truth
            .as_ref()
            .is_some_and(|t| self.options.contains(t))
    }

    /// Word length predictor: code points of the displayed transcription.
    pub fn word_length(&self) -> usize {
        self.displayed.as_ipa().chars().count()
    }

    pub fn to_doc(&self) -> TaskDoc {
        TaskDoc {
            id: self.id.clone(),
            word_ref: self.word_ref.clone(),
            audio_span: self.audio_span,
            displayed: self.displayed.as_ipa().to_owned(),
            options: self.options.iter().map(|o| o.as_ipa().to_owned()).collect(),
            task_class: self.task_class,
            truth: self.truth.as_ref().map(|t| t.as_ipa().to_owned()),
            complexity: self.complexity,
        }
    }

    /// Rebuilds a task from its document form. The stored complexity is
    /// ignored and recomputed.
    pub fn from_doc(
        doc: &TaskDoc,
        inv: &PhonemeInventory,
        cfg: &CostConfig,
    ) -> Result<Self, TaskError> {
        let parse = |field: String, ipa: &str| {
            inv.tokenize(ipa).map_err(|source| TaskError::Ipa {
                id: doc.id.clone(),
                field,
                source,
            })
        };
        let displayed = parse("displayed".into(), &doc.displayed)?;
        let options = doc
            .options
            .iter()
            .enumerate()
            .map(|(i, o)| parse(format!("options[{i}]"), o))
            .collect::<Result<Vec<_>, _>>()?;
        let truth = doc
            .truth
            .as_deref()
            .map(|t| parse("truth".into(), t))
            .transpose()?;
        Task::new(
            TaskSpec {
                id: doc.id.clone(),
                word_ref: doc.word_ref.clone(),
                audio_span: doc.audio_span,
                displayed,
                options,
                task_class: doc.task_class,
                truth,
            },
            cfg,
        )
    }
}

/// Serialized task, phoneme sequences as IPA strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDoc {
    pub id: String,
    pub word_ref: WordRef,
    pub audio_span: AudioSpan,
    pub displayed: String,
    pub options: Vec<String>,
    pub task_class: TaskClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity: Option<f64>,
}

pub fn classify_task(task: &Task) -> ComplexityClass {
    if task.truth_listed() {
        ComplexityClass::A
    } else if task.truth.is_some() && task.task_class == TaskClass::Completion {
        ComplexityClass::B
    } else {
        ComplexityClass::C
    }
}

/// Displayed-to-truth PWLD of a task with ground truth.
pub fn task_complexity(task: &Task, cfg: &CostConfig) -> Result<f64, TaskError> {
    let truth = task
        .truth()
        .ok_or_else(|| TaskError::NoTruth(task.id.clone()))?;
    Ok(sequence_pwld(task.displayed(), truth, cfg).total_cost)
}

/// Drops every short vowel, keeping the remaining order.
pub fn strip_short_vowels(seq: &PhonemeSequence) -> PhonemeSequence {
    PhonemeSequence::from_phones(
        seq.iter()
            .filter(|p| !p.is_short_vowel())
            .cloned()
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompletionCheck {
    pub valid: bool,
    /// Position in the answer of the first phone that breaks the skeleton,
    /// or the answer length when skeleton phones are missing at the end.
    pub first_violation: Option<usize>,
    pub diagnostic: Option<String>,
}

/// Checks that `answer` only adds short vowels to `skeleton`.
pub fn validate_completion(
    skeleton: &PhonemeSequence,
    answer: &PhonemeSequence,
) -> CompletionCheck {
    let expected = skeleton.phones();
    let mut next = 0;
    for (i, phone) in answer.iter().enumerate() {
        if phone.is_short_vowel() {
            continue;
        }
        if expected.get(next) == Some(phone) {
            next += 1;
            continue;
        }
        let diagnostic = match expected.get(next) {
            Some(want) => {
                format!("position {i}: expected /{want}/ or a short vowel, found /{phone}/")
            }
            None => format!("position {i}: unexpected /{phone}/ after the end of the skeleton"),
        };
        return CompletionCheck {
            valid: false,
            first_violation: Some(i),
            diagnostic: Some(diagnostic),
        };
    }
    if next < expected.len() {
        return CompletionCheck {
            valid: false,
            first_violation: Some(answer.len()),
            diagnostic: Some(format!(
                "position {}: skeleton phone /{}/ is missing",
                answer.len(),
                expected[next]
            )),
        };
    }
    CompletionCheck {
        valid: true,
        first_violation: None,
        diagnostic: None,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DistractorError {
    #[error("at least one distractor must be requested")]
    ZeroRequested,
    #[error(
        "cannot produce {requested} distinct distractors for /{truth}/: at most {available} exist"
    )]
    Exhausted {
        truth: String,
        requested: usize,
        available: usize,
    },
}

/// All plausible wrong variants of `truth`.
///
/// The first list holds short-vowel alternations (every assignment of short
/// vowels to the short-vowel slots other than the true one); the second holds
/// single-consonant swaps to a nearest consonant by feature distance.
pub fn distractor_space(
    truth: &PhonemeSequence,
    inv: &PhonemeInventory,
) -> (Vec<PhonemeSequence>, Vec<PhonemeSequence>) {
    let shorts: Vec<&Phoneme> = inv.short_vowels().collect();
    let slots: Vec<usize> = truth
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_short_vowel())
        .map(|(i, _)| i)
        .take(MAX_VOWEL_SLOTS)
        .collect();

    let mut vowel_variants = Vec::new();
    if !slots.is_empty() {
        let total = shorts.len().pow(slots.len() as u32);
        for code in 0..total {
            let mut phones = truth.phones().to_vec();
            let mut rest = code;
            for &slot in &slots {
                phones[slot] = shorts[rest % shorts.len()].clone();
                rest /= shorts.len();
            }
            let variant = PhonemeSequence::from_phones(phones);
            if &variant != truth {
                vowel_variants.push(variant);
            }
        }
    }

    let mut consonant_variants = Vec::new();
    for (slot, phone) in truth.iter().enumerate() {
        if !phone.is_consonant() {
            continue;
        }
        for near in nearest_consonants(phone, inv) {
            let mut phones = truth.phones().to_vec();
            phones[slot] = near.clone();
            consonant_variants.push(PhonemeSequence::from_phones(phones));
        }
    }
    (vowel_variants, consonant_variants)
}

/// Consonants at the smallest non-zero feature distance from `phone`.
pub fn nearest_consonants<'a>(phone: &Phoneme, inv: &'a PhonemeInventory) -> Vec<&'a Phoneme> {
    let scored: Vec<(f64, &Phoneme)> = inv
        .consonants()
        .filter_map(|c| phone_distance(phone, c).ok().map(|d| (d, c)))
        .filter(|&(d, _)| d > 0.0)
        .collect();
    let Some(best) = scored.iter().map(|&(d, _)| d).min_by(f64::total_cmp) else {
        return Vec::new();
    };
    scored
        .into_iter()
        .filter(|&(d, _)| d == best)
        .map(|(_, c)| c)
        .collect()
}

/// `k` distinct wrong transcriptions of `truth`, short-vowel alternations
/// first. Deterministic for a fixed seed.
pub fn generate_distractors(
    truth: &PhonemeSequence,
    inv: &PhonemeInventory,
    k: usize,
    seed: u64,
) -> Result<Vec<PhonemeSequence>, DistractorError> {
    if k == 0 {
        return Err(DistractorError::ZeroRequested);
    }
    let (mut vowels, mut consonants) = distractor_space(truth, inv);
    let available = vowels.len() + consonants.len();
    if k > available {
        return Err(DistractorError::Exhausted {
            truth: truth.as_ipa().to_owned(),
            requested: k,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vowels.shuffle(&mut rng);
    consonants.shuffle(&mut rng);
    Ok(vowels.into_iter().chain(consonants).take(k).collect())
}

/// A participant's answer to a task.
#[derive(Debug, Clone, PartialEq)]
pub enum Answer {
    Option(usize),
    Typed(PhonemeSequence),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredResponse {
    pub task_id: String,
    #[serde(serialize_with = "as_ipa")]
    pub given: PhonemeSequence,
    pub is_exact: bool,
    pub distance_to_truth: Option<f64>,
    pub selected_option_index: Option<usize>,
}

impl ScoredResponse {
    pub fn is_scored(&self) -> bool {
        self.distance_to_truth.is_some()
    }
}

fn as_ipa<S: serde::Serializer>(seq: &PhonemeSequence, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(seq.as_ipa())
}

/// Scores `given` against the task's truth. Without a truth the response is
/// returned unscored.
pub fn score_response(
    task: &Task,
    given: &PhonemeSequence,
    selected_option_index: Option<usize>,
    cfg: &CostConfig,
) -> ScoredResponse {
    let distance = task
        .truth()
        .map(|truth| sequence_pwld(truth, given, cfg).total_cost);
    ScoredResponse {
        task_id: task.id.clone(),
        given: given.clone(),
        is_exact: distance == Some(0.0),
        distance_to_truth: distance,
        selected_option_index,
    }
}

pub fn score_answer(
    task: &Task,
    answer: &Answer,
    cfg: &CostConfig,
) -> Result<ScoredResponse, TaskError> {
    match answer {
        Answer::Option(index) => {
            let option = task
                .options
                .get(*index)
                .ok_or_else(|| TaskError::OptionOutOfRange {
                    id: task.id.clone(),
                    index: *index,
                    len: task.options.len(),
                })?;
            Ok(score_response(task, option, Some(*index), cfg))
        }
        Answer::Typed(seq) => Ok(score_response(task, seq, None, cfg)),
    }
}

/// A corpus word eligible to become a task.
#[derive(Debug, Clone)]
pub struct WordItem {
    pub word_ref: WordRef,
    pub audio_span: AudioSpan,
    pub truth: PhonemeSequence,
}

/// Parameters of a task-generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPlan {
    /// Probability that a disambiguation item displays a wrong variant.
    pub rate: f64,
    pub seed: u64,
    pub disambiguation: usize,
    pub correction: usize,
    pub completion: usize,
    /// Options per disambiguation item, truth included.
    pub options: usize,
}

impl Default for GenerationPlan {
    fn default() -> Self {
        GenerationPlan {
            rate: 0.5,
            seed: 0,
            disambiguation: 20,
            correction: 2,
            completion: 0,
            options: 3,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("rate must lie in [0, 1], got {0}")]
    Rate(f64),
    #[error("disambiguation items need at least 2 options, got {0}")]
    Options(usize),
    #[error("{kind} tasks: need {needed} eligible words, only {available} available")]
    NotEnoughWords {
        kind: &'static str,
        needed: usize,
        available: usize,
    },
    #[error(transparent)]
    Distractor(#[from] DistractorError),
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// Stable task id for a corpus word.
pub fn task_id_for(word: &WordRef) -> String {
    format!("{}-w{:03}", word.line_id, word.word_index)
}

/// Builds a task set from corpus words.
///
/// Words are shuffled with the plan's seed. Disambiguation items take the
/// first eligible words, correction items the next, completion items come
/// from the remaining words that contain a short vowel. Returned tasks are
/// sorted by id.
pub fn generate_tasks(
    words: &[WordItem],
    inv: &PhonemeInventory,
    cfg: &CostConfig,
    plan: &GenerationPlan,
) -> Result<Vec<Task>, GenerationError> {
    if !(0.0..=1.0).contains(&plan.rate) {
        return Err(GenerationError::Rate(plan.rate));
    }
    if plan.disambiguation > 0 && plan.options < 2 {
        return Err(GenerationError::Options(plan.options));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut pool: Vec<&WordItem> = words.iter().collect();
    pool.shuffle(&mut rng);

    let variants = |w: &WordItem| {
        let (v, c) = distractor_space(&w.truth, inv);
        v.len() + c.len()
    };
    let needed = plan.options.saturating_sub(1).max(1);
    let mut tasks = Vec::new();
    let mut used = vec![false; pool.len()];

    let mut take = |kind: &'static str,
                    count: usize,
                    eligible: &dyn Fn(&WordItem) -> bool|
     -> Result<Vec<&WordItem>, GenerationError> {
        let picked: Vec<usize> = (0..pool.len())
            .filter(|&i| !used[i] && eligible(pool[i]))
            .take(count)
            .collect();
        if picked.len() < count {
            return Err(GenerationError::NotEnoughWords {
                kind,
                needed: count,
                available: picked.len(),
            });
        }
        for &i in &picked {
            used[i] = true;
        }
        Ok(picked.into_iter().map(|i| pool[i]).collect())
    };

    let disambiguation = take("disambiguation", plan.disambiguation, &|w| {
        variants(w) >= needed
    })?;
    let correction = take("correction", plan.correction, &|w| variants(w) >= 1)?;
    // single phonemes and vowel-less words make no sense as completions
    let completion = take("completion", plan.completion, &|w| {
        w.truth.len() >= 2 && w.truth.iter().any(Phoneme::is_short_vowel)
    })?;

    for word in disambiguation {
        let distractors = generate_distractors(&word.truth, inv, needed, rng.next_u64())?;
        let displayed = if rng.random_bool(plan.rate) {
            distractors[0].clone()
        } else {
            word.truth.clone()
        };
        let mut options = distractors;
        options.push(word.truth.clone());
        options.shuffle(&mut rng);
        tasks.push(Task::new(
            TaskSpec {
                id: task_id_for(&word.word_ref),
                word_ref: word.word_ref.clone(),
                audio_span: word.audio_span,
                displayed,
                options,
                task_class: TaskClass::Disambiguation,
                truth: Some(word.truth.clone()),
            },
            cfg,
        )?);
    }
    for word in correction {
        let wrong = generate_distractors(&word.truth, inv, 1, rng.next_u64())?;
        tasks.push(Task::new(
            TaskSpec {
                id: task_id_for(&word.word_ref),
                word_ref: word.word_ref.clone(),
                audio_span: word.audio_span,
                displayed: wrong.into_iter().next().expect("one distractor"),
                options: Vec::new(),
                task_class: TaskClass::Correction,
                truth: Some(word.truth.clone()),
            },
            cfg,
        )?);
    }
    for word in completion {
        tasks.push(Task::new(
            TaskSpec {
                id: task_id_for(&word.word_ref),
                word_ref: word.word_ref.clone(),
                audio_span: word.audio_span,
                displayed: strip_short_vowels(&word.truth),
                options: Vec::new(),
                task_class: TaskClass::Completion,
                truth: Some(word.truth.clone()),
            },
            cfg,
        )?);
    }
    tasks.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(tasks)
}
