//! Automatic evaluation: coherence, F1, perplexity, ROUGE, BLEU, repetition,
//! and output length, aggregated per method into a report.
//!
//! Metric tokenization (lowercased alphanumeric word split) is independent of
//! model tokenization, so scores are comparable across built-in and remote
//! models.

use crate::corpus::{extract_sections, Recipe, Section, TaskKind};
use crate::lexicon::{find_constituents, ConstituentLexicon};
use crate::lm::LanguageModel;
use crate::rewards::{
    constituent_repetition_count, ingredients_instructions_coherence, name_ingredient_coherence,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("method {method}: {got} samples but {want} ground-truth recipes")]
    Misaligned {
        method: String,
        got: usize,
        want: usize,
    },
    #[error("method {0}: no samples")]
    Empty(String),
    #[error(transparent)]
    Lm(#[from] crate::lm::LmError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// One generated sample as stored in a generations file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenSample {
    pub name: String,
    pub prompt: String,
    pub output: String,
    pub method: String,
    pub seed: u64,
}

impl GenSample {
    pub fn full_text(&self) -> String {
        format!("{} {}", self.prompt, self.output)
    }
}

/// Per-method metric aggregates. Fields that do not apply (F1 and repetition
/// outside the ingredients task, overlap metrics for ground truth) are null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub coherence: f64,
    #[serde(rename = "f1-score")]
    pub f1: Option<f64>,
    pub perplexity: f64,
    #[serde(rename = "rouge-1")]
    pub rouge1: Option<f64>,
    #[serde(rename = "rouge-2")]
    pub rouge2: Option<f64>,
    pub bleu: Option<f64>,
    pub repetition: Option<f64>,
    pub avg_length: f64,
    pub n_samples: usize,
}

/// Lowercased alphanumeric word runs.
pub fn metric_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N F1 with clipped n-gram overlap. Both texts empty is scored 1,
/// exactly one empty is scored 0.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> f64 {
    let cand = metric_tokens(candidate);
    let refr = metric_tokens(reference);
    let cand_counts = ngram_counts(&cand, n);
    let ref_counts = ngram_counts(&refr, n);
    let cand_total: usize = cand_counts.values().sum();
    let ref_total: usize = ref_counts.values().sum();
    if cand_total == 0 && ref_total == 0 {
        return 1.0;
    }
    if cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let overlap: usize = cand_counts
        .iter()
        .map(|(gram, &c)| c.min(*ref_counts.get(gram).unwrap_or(&0)))
        .sum();
    let precision = overlap as f64 / cand_total as f64;
    let recall = overlap as f64 / ref_total as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

const BLEU_SMOOTHING_EPS: f64 = 1e-9;

/// Sentence-level BLEU: geometric mean of clipped n-gram precisions for
/// n = 1..4 with add-epsilon smoothing of zero counts, times the brevity
/// penalty.
pub fn bleu(candidate: &str, reference: &str) -> f64 {
    let cand = metric_tokens(candidate);
    let refr = metric_tokens(reference);
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand_counts = ngram_counts(&cand, n);
        let ref_counts = ngram_counts(&refr, n);
        let total: usize = cand_counts.values().sum();
        let overlap: usize = cand_counts
            .iter()
            .map(|(gram, &c)| c.min(*ref_counts.get(gram).unwrap_or(&0)))
            .sum();
        let p = if total == 0 || overlap == 0 {
            BLEU_SMOOTHING_EPS
        } else {
            overlap as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let geo = (log_sum / 4.0).exp();
    let c = cand.len() as f64;
    let r = refr.len() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    geo * bp
}

/// Per-sample precision/recall of generated constituents against truth
/// constituents. Empty sets score 1 on their own side.
pub fn constituent_precision_recall(
    generated: &str,
    truth: &str,
    lexicon: &ConstituentLexicon,
) -> (f64, f64) {
    let g: BTreeSet<String> = find_constituents(generated, lexicon).into_keys().collect();
    let t: BTreeSet<String> = find_constituents(truth, lexicon).into_keys().collect();
    let hit = g.intersection(&t).count() as f64;
    let precision = if g.is_empty() { 1.0 } else { hit / g.len() as f64 };
    let recall = if t.is_empty() { 1.0 } else { hit / t.len() as f64 };
    (precision, recall)
}

/// Macro-averaged F1: harmonic mean of the averaged precision and recall.
pub fn f1_from_samples(precisions: &[f64], recalls: &[f64]) -> f64 {
    let p = mean(precisions);
    let r = mean(recalls);
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Task-appropriate coherence of one sample; identical computation to the
/// corresponding reward function.
pub fn coherence_metric(
    prompt_and_output: &str,
    task: TaskKind,
    lexicon: &ConstituentLexicon,
) -> f64 {
    let sections = extract_sections(prompt_and_output);
    match task {
        TaskKind::IngredientsFromName => {
            name_ingredient_coherence(&sections.name, &sections.ingredients, lexicon)
        }
        TaskKind::InstructionsFromNameAndIngredients => ingredients_instructions_coherence(
            &sections.ingredients,
            &sections.instructions,
            lexicon,
        ),
    }
}

/// Pooled perplexity: exp of negative mean per-token log-probability over
/// all generated positions across samples.
pub fn perplexity(
    model: &dyn LanguageModel,
    samples: &[(Vec<crate::lm::TokenId>, usize)],
) -> Result<f64, EvalError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (tokens, prompt_len) in samples {
        let lps = model.sequence_log_probs(tokens, *prompt_len)?;
        total += lps.iter().sum::<f64>();
        count += lps.len();
    }
    if count == 0 {
        return Ok(f64::NAN);
    }
    Ok((-total / count as f64).exp())
}

fn generated_section<'a>(task: TaskKind, sections: &'a crate::corpus::LenientSections) -> &'a str {
    match task {
        TaskKind::IngredientsFromName => &sections.ingredients,
        TaskKind::InstructionsFromNameAndIngredients => &sections.instructions,
    }
}

fn truth_section_text(task: TaskKind, recipe: &Recipe) -> String {
    match task {
        TaskKind::IngredientsFromName => recipe.ingredients_text(),
        TaskKind::InstructionsFromNameAndIngredients => recipe.instructions_text(),
    }
}

/// Computes every metric for each method's samples against aligned ground
/// truth, plus the ground-truth reference row ("ground_truth").
pub fn evaluate_all(
    task: TaskKind,
    methods: &BTreeMap<String, Vec<GenSample>>,
    truth: &[Recipe],
    model: &dyn LanguageModel,
    lexicon: &ConstituentLexicon,
) -> Result<BTreeMap<String, EvaluationReport>, EvalError> {
    let mut reports = BTreeMap::new();
    for (method, samples) in methods {
        if samples.is_empty() {
            return Err(EvalError::Empty(method.clone()));
        }
        if samples.len() != truth.len() {
            return Err(EvalError::Misaligned {
                method: method.clone(),
                got: samples.len(),
                want: truth.len(),
            });
        }
        let mut coherences = Vec::new();
        let mut precisions = Vec::new();
        let mut recalls = Vec::new();
        let mut rouge1s = Vec::new();
        let mut rouge2s = Vec::new();
        let mut bleus = Vec::new();
        let mut repetitions = Vec::new();
        let mut lengths = Vec::new();
        let mut ppl_inputs = Vec::new();
        for (sample, truth_recipe) in samples.iter().zip(truth) {
            let full = sample.full_text();
            let sections = extract_sections(&full);
            let generated = generated_section(task, &sections);
            let reference = truth_section_text(task, truth_recipe);

            coherences.push(coherence_metric(&full, task, lexicon));
            rouge1s.push(rouge_n(generated, &reference, 1));
            rouge2s.push(rouge_n(generated, &reference, 2));
            bleus.push(bleu(generated, &reference));
            lengths.push(generated.chars().count() as f64);
            if task == TaskKind::IngredientsFromName {
                let (p, r) = constituent_precision_recall(generated, &reference, lexicon);
                precisions.push(p);
                recalls.push(r);
                repetitions.push(constituent_repetition_count(generated, lexicon) as f64);
            }
            let prompt_tokens = model.tokenize(&sample.prompt);
            let full_tokens = model.tokenize(&full);
            ppl_inputs.push((full_tokens, prompt_tokens.len()));
        }
        let is_ingredients = task == TaskKind::IngredientsFromName;
        reports.insert(
            method.clone(),
            EvaluationReport {
                coherence: mean(&coherences),
                f1: is_ingredients.then(|| f1_from_samples(&precisions, &recalls)),
                perplexity: perplexity(model, &ppl_inputs)?,
                rouge1: Some(mean(&rouge1s)),
                rouge2: Some(mean(&rouge2s)),
                bleu: Some(mean(&bleus)),
                repetition: is_ingredients.then(|| mean(&repetitions)),
                avg_length: mean(&lengths),
                n_samples: samples.len(),
            },
        );
    }

    if !truth.is_empty() {
        reports.insert("ground_truth".to_string(), ground_truth_report(task, truth, model, lexicon)?);
    }
    Ok(reports)
}

fn ground_truth_report(
    task: TaskKind,
    truth: &[Recipe],
    model: &dyn LanguageModel,
    lexicon: &ConstituentLexicon,
) -> Result<EvaluationReport, EvalError> {
    let mut coherences = Vec::new();
    let mut repetitions = Vec::new();
    let mut lengths = Vec::new();
    let mut ppl_inputs = Vec::new();
    let upto = match task {
        TaskKind::IngredientsFromName => Section::Ingredients,
        TaskKind::InstructionsFromNameAndIngredients => Section::Instructions,
    };
    for recipe in truth {
        let full = crate::corpus::serialize_recipe(recipe, upto)?;
        coherences.push(coherence_metric(&full, task, lexicon));
        let section = truth_section_text(task, recipe);
        lengths.push(section.chars().count() as f64);
        if task == TaskKind::IngredientsFromName {
            repetitions.push(constituent_repetition_count(&section, lexicon) as f64);
        }
        let prompt = recipe.prompt(task)?;
        ppl_inputs.push((model.tokenize(&full), model.tokenize(&prompt).len()));
    }
    Ok(EvaluationReport {
        coherence: mean(&coherences),
        f1: None,
        perplexity: perplexity(model, &ppl_inputs)?,
        rouge1: None,
        rouge2: None,
        bleu: None,
        repetition: (task == TaskKind::IngredientsFromName).then(|| mean(&repetitions)),
        avg_length: mean(&lengths),
        n_samples: truth.len(),
    })
}

/// CSV export mirroring the report table: one row per method.
pub fn report_csv(reports: &BTreeMap<String, EvaluationReport>) -> String {
    let mut out = String::from(
        "method,coherence,f1-score,perplexity,rouge-1,rouge-2,bleu,repetition,avg_length,n_samples\n",
    );
    let fmt = |v: &Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
    for (method, r) in reports {
        out.push_str(&format!(
            "{},{:.6},{},{:.6},{},{},{},{},{:.3},{}\n",
            method,
            r.coherence,
            fmt(&r.f1),
            r.perplexity,
            fmt(&r.rouge1),
            fmt(&r.rouge2),
            fmt(&r.bleu),
            fmt(&r.repetition),
            r.avg_length,
            r.n_samples
        ));
    }
    out
}
