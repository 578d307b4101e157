//! Soft-constraint reward functions and their weighted combination.
//!
//! Each component maps decoded text to `[0, 1]`; a [`RewardSpec`] mixes the
//! task-appropriate components with weights that sum to one, so the combined
//! score stays in `[0, 1]`. All functions are total: they score arbitrary
//! partial rollouts without ever failing.

use crate::corpus::{extract_sections, split_phrases, TaskKind, END_INGR, END_INST};
use crate::lexicon::{find_constituents, ConstituentLexicon};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("component weights must lie in (0,1) and sum to 1, got sum {0}")]
    BadWeights(f64),
    #[error("no components")]
    Empty,
    #[error("unknown reward component {0:?}")]
    UnknownComponent(String),
}

/// Fraction of the name's constituents that reappear in the generated
/// ingredients list (`z_f / z`), or 1 when the name has no constituents.
pub fn name_ingredient_coherence(
    name: &str,
    generated_ingredients: &str,
    lexicon: &ConstituentLexicon,
) -> f64 {
    section_coherence(name, generated_ingredients, lexicon)
}

/// Fraction of the ingredient list's constituents that reappear in the
/// generated instructions, or 1 when the list has no constituents.
pub fn ingredients_instructions_coherence(
    ingredients: &str,
    generated_instructions: &str,
    lexicon: &ConstituentLexicon,
) -> f64 {
    section_coherence(ingredients, generated_instructions, lexicon)
}

fn section_coherence(source: &str, target: &str, lexicon: &ConstituentLexicon) -> f64 {
    let wanted = find_constituents(source, lexicon);
    let z = wanted.len();
    if z == 0 {
        return 1.0;
    }
    let found = find_constituents(target, lexicon);
    let z_f = wanted.keys().filter(|c| found.contains_key(*c)).count();
    z_f as f64 / z as f64
}

/// `e^{-p-q}` where `p` counts constituent occurrences beyond the first and
/// `q` counts exact duplicate `;`-separated phrases beyond the first.
pub fn constituent_repetition_penalty(
    generated_ingredients: &str,
    lexicon: &ConstituentLexicon,
) -> f64 {
    let p = constituent_repetition_count(generated_ingredients, lexicon);
    let mut phrase_counts: BTreeMap<String, usize> = BTreeMap::new();
    for phrase in split_phrases(generated_ingredients) {
        *phrase_counts.entry(phrase.to_lowercase()).or_insert(0) += 1;
    }
    let q: usize = phrase_counts.values().map(|&c| c - 1).sum();
    (-((p + q) as f64)).exp()
}

/// The `p` term above, shared with the repetition metric: total occurrences
/// of constituents past each one's first.
pub fn constituent_repetition_count(text: &str, lexicon: &ConstituentLexicon) -> usize {
    find_constituents(text, lexicon)
        .values()
        .map(|&c| c.saturating_sub(1))
        .sum()
}

/// 1 iff the tag occurs anywhere in the text.
pub fn closing_tag_reward(text: &str, tag: &str) -> f64 {
    if text.contains(tag) {
        1.0
    } else {
        0.0
    }
}

/// `e^{-s/S}` where `s` counts the penalized characters in the instructions.
pub fn special_char_penalty(generated_instructions: &str, chars: &[char], s_scale: f64) -> f64 {
    let s = generated_instructions
        .chars()
        .filter(|c| chars.contains(c))
        .count();
    (-(s as f64) / s_scale).exp()
}

pub const DEFAULT_SPECIAL_CHARS: [char; 2] = ['!', '-'];
pub const DEFAULT_SPECIAL_CHAR_SCALE: f64 = 3.0;

/// One reward component, named for configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RewardComponent {
    NameIngredientCoherence,
    ConstituentRepetitionPenalty,
    ClosingIngredientsTag,
    IngredientsInstructionsCoherence,
    SpecialCharPenalty { chars: Vec<char>, scale: f64 },
    ClosingInstructionsTag,
}

impl RewardComponent {
    pub fn name(&self) -> &'static str {
        match self {
            RewardComponent::NameIngredientCoherence => "name_ingredient_coherence",
            RewardComponent::ConstituentRepetitionPenalty => "constituent_repetition_penalty",
            RewardComponent::ClosingIngredientsTag => "closing_ingredients_tag",
            RewardComponent::IngredientsInstructionsCoherence => {
                "ingredients_instructions_coherence"
            }
            RewardComponent::SpecialCharPenalty { .. } => "special_char_penalty",
            RewardComponent::ClosingInstructionsTag => "closing_instructions_tag",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, RewardError> {
        Ok(match name {
            "name_ingredient_coherence" => RewardComponent::NameIngredientCoherence,
            "constituent_repetition_penalty" => RewardComponent::ConstituentRepetitionPenalty,
            "closing_ingredients_tag" => RewardComponent::ClosingIngredientsTag,
            "ingredients_instructions_coherence" => {
                RewardComponent::IngredientsInstructionsCoherence
            }
            "special_char_penalty" => RewardComponent::SpecialCharPenalty {
                chars: DEFAULT_SPECIAL_CHARS.to_vec(),
                scale: DEFAULT_SPECIAL_CHAR_SCALE,
            },
            "closing_instructions_tag" => RewardComponent::ClosingInstructionsTag,
            other => return Err(RewardError::UnknownComponent(other.to_string())),
        })
    }

    /// Scores the full decoded text (prompt plus generation) in `[0, 1]`.
    pub fn evaluate(&self, decoded_text: &str, lexicon: &ConstituentLexicon) -> f64 {
        let sections = extract_sections(decoded_text);
        match self {
            RewardComponent::NameIngredientCoherence => {
                name_ingredient_coherence(&sections.name, &sections.ingredients, lexicon)
            }
            RewardComponent::ConstituentRepetitionPenalty => {
                constituent_repetition_penalty(&sections.ingredients, lexicon)
            }
            RewardComponent::ClosingIngredientsTag => closing_tag_reward(decoded_text, END_INGR),
            RewardComponent::IngredientsInstructionsCoherence => {
                ingredients_instructions_coherence(
                    &sections.ingredients,
                    &sections.instructions,
                    lexicon,
                )
            }
            RewardComponent::SpecialCharPenalty { chars, scale } => {
                special_char_penalty(&sections.instructions, chars, *scale)
            }
            RewardComponent::ClosingInstructionsTag => closing_tag_reward(decoded_text, END_INST),
        }
    }
}

/// Ordered weighted components for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub task: TaskKind,
    pub components: Vec<(RewardComponent, f64)>,
}

impl RewardSpec {
    pub fn new(
        task: TaskKind,
        components: Vec<(RewardComponent, f64)>,
    ) -> Result<Self, RewardError> {
        if components.is_empty() {
            return Err(RewardError::Empty);
        }
        let sum: f64 = components.iter().map(|&(_, w)| w).sum();
        if components.iter().any(|&(_, w)| w <= 0.0 || w >= 1.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(RewardError::BadWeights(sum));
        }
        Ok(RewardSpec { task, components })
    }

    /// Ingredients-task defaults: coherence 0.30, repetition penalty 0.45,
    /// closing tag 0.25.
    pub fn ingredients_default() -> Self {
        RewardSpec::new(
            TaskKind::IngredientsFromName,
            vec![
                (RewardComponent::NameIngredientCoherence, 0.30),
                (RewardComponent::ConstituentRepetitionPenalty, 0.45),
                (RewardComponent::ClosingIngredientsTag, 0.25),
            ],
        )
        .expect("default weights sum to 1")
    }

    /// Instructions-task defaults: coherence 0.50, special-character penalty
    /// 0.20, closing tag 0.30.
    pub fn instructions_default() -> Self {
        RewardSpec::new(
            TaskKind::InstructionsFromNameAndIngredients,
            vec![
                (RewardComponent::IngredientsInstructionsCoherence, 0.50),
                (
                    RewardComponent::SpecialCharPenalty {
                        chars: DEFAULT_SPECIAL_CHARS.to_vec(),
                        scale: DEFAULT_SPECIAL_CHAR_SCALE,
                    },
                    0.20,
                ),
                (RewardComponent::ClosingInstructionsTag, 0.30),
            ],
        )
        .expect("default weights sum to 1")
    }

    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::IngredientsFromName => Self::ingredients_default(),
            TaskKind::InstructionsFromNameAndIngredients => Self::instructions_default(),
        }
    }

    /// Builds from `(name, weight)` pairs as read from a config file.
    pub fn from_config(task: TaskKind, named: &[(String, f64)]) -> Result<Self, RewardError> {
        let components = named
            .iter()
            .map(|(name, w)| Ok((RewardComponent::from_name(name)?, *w)))
            .collect::<Result<Vec<_>, RewardError>>()?;
        RewardSpec::new(task, components)
    }

    /// Weighted sum of the component scores; total over any text.
    pub fn combine(&self, decoded_text: &str, lexicon: &ConstituentLexicon) -> f64 {
        self.components
            .iter()
            .map(|(c, w)| w * c.evaluate(decoded_text, lexicon))
            .sum()
    }
}
