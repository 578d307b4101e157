//! Recipe text format: serialization, parsing, and dataset cleaning.
//!
//! A recipe is serialized into a single line of text with special tokens
//! delimiting the name, ingredients, and instructions sections:
//!
//! ```text
//! <|startofname|>NAME<|endofname|><|startofingr|>I1; I2; ...<|endofingr|><|startofinst|>S1. S2.<|endofinst|>
//! ```
//!
//! Ingredient phrases are joined by `"; "` and instruction sentences by a
//! single space. Prompts for the two generation tasks are prefixes of this
//! form: the ingredients task prompts with the name section only, the
//! instructions task with name plus ingredients.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use thiserror::Error;

pub const START_NAME: &str = "<|startofname|>";
pub const END_NAME: &str = "<|endofname|>";
pub const START_INGR: &str = "<|startofingr|>";
pub const END_INGR: &str = "<|endofingr|>";
pub const START_INST: &str = "<|startofinst|>";
pub const END_INST: &str = "<|endofinst|>";

/// The six structural tags in document order.
pub const TAGS: [&str; 6] = [
    START_NAME, END_NAME, START_INGR, END_INGR, START_INST, END_INST,
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("recipe name is empty")]
    EmptyName,
    #[error("ingredient phrase {0:?} contains the structural separator ';'")]
    SeparatorInPhrase(String),
    #[error("recipe field {0:?} contains a structural tag")]
    TagInField(String),
    #[error("section {0:?} is empty")]
    EmptySection(String),
    #[error("malformed tag {tag} at byte {position}: {reason}")]
    MalformedTag {
        tag: String,
        position: usize,
        reason: String,
    },
    #[error("dataset line {line}: expected 3 tab-separated fields, found {found}")]
    MissingColumns { line: usize, found: usize },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which generation task a prompt or reward configuration belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Given a recipe name, generate the ingredients list.
    IngredientsFromName,
    /// Given a name and ingredients list, generate the instructions.
    InstructionsFromNameAndIngredients,
}

impl TaskKind {
    /// The tag that terminates this task's generated section.
    pub fn stop_tag(self) -> &'static str {
        match self {
            TaskKind::IngredientsFromName => END_INGR,
            TaskKind::InstructionsFromNameAndIngredients => END_INST,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::IngredientsFromName => write!(f, "ingredients"),
            TaskKind::InstructionsFromNameAndIngredients => write!(f, "instructions"),
        }
    }
}

/// How far serialization should go.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Name,
    Ingredients,
    Instructions,
}

/// How many sections a parsed text carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Completeness {
    NameOnly,
    WithIngredients,
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub name: String,
    pub ingredients: Vec<String>,
    pub instructions: Vec<String>,
}

/// Result of parsing serialized recipe text, possibly partial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRecipe {
    pub recipe: Recipe,
    pub completeness: Completeness,
}

impl Recipe {
    pub fn new(name: &str, ingredients: &[&str], instructions: &[&str]) -> Self {
        Recipe {
            name: name.to_string(),
            ingredients: ingredients.iter().map(|s| s.to_string()).collect(),
            instructions: instructions.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Checks the structural invariants: non-empty trimmed name, no `;`
    /// inside ingredient phrases, no structural tag inside any field.
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.name.trim().is_empty() {
            return Err(CorpusError::EmptyName);
        }
        for field in std::iter::once(&self.name)
            .chain(self.ingredients.iter())
            .chain(self.instructions.iter())
        {
            if TAGS.iter().any(|t| field.contains(t)) {
                return Err(CorpusError::TagInField(field.clone()));
            }
        }
        for phrase in &self.ingredients {
            if phrase.contains(';') {
                return Err(CorpusError::SeparatorInPhrase(phrase.clone()));
            }
        }
        Ok(())
    }

    /// The ingredients list as it appears in serialized form.
    pub fn ingredients_text(&self) -> String {
        self.ingredients.join("; ")
    }

    /// The instructions as one text, sentences rejoined with a space.
    pub fn instructions_text(&self) -> String {
        self.instructions.join(" ")
    }

    /// The prompt text for a task, i.e. the serialized prefix the model is
    /// conditioned on before generating the task's section.
    pub fn prompt(&self, task: TaskKind) -> Result<String, CorpusError> {
        match task {
            TaskKind::IngredientsFromName => serialize_recipe(self, Section::Name),
            TaskKind::InstructionsFromNameAndIngredients => {
                serialize_recipe(self, Section::Ingredients)
            }
        }
    }
}

/// Serializes a recipe up to the requested section marker.
pub fn serialize_recipe(recipe: &Recipe, upto: Section) -> Result<String, CorpusError> {
    recipe.validate()?;
    let mut out = String::new();
    out.push_str(START_NAME);
    out.push_str(recipe.name.trim());
    out.push_str(END_NAME);
    if upto == Section::Name {
        return Ok(out);
    }
    if recipe.ingredients.is_empty() {
        return Err(CorpusError::EmptySection("ingredients".into()));
    }
    out.push_str(START_INGR);
    out.push_str(&recipe.ingredients_text());
    out.push_str(END_INGR);
    if upto == Section::Ingredients {
        return Ok(out);
    }
    if recipe.instructions.is_empty() {
        return Err(CorpusError::EmptySection("instructions".into()));
    }
    out.push_str(START_INST);
    out.push_str(&recipe.instructions_text());
    out.push_str(END_INST);
    Ok(out)
}

/// Splits an ingredients section on `;` with trimming, dropping empties.
pub fn split_phrases(text: &str) -> Vec<String> {
    text.split(';')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| p.to_string())
        .collect()
}

/// Splits instructions into sentences on sentence-final periods followed by
/// whitespace. The period stays with its sentence, so rejoining with a single
/// space is lossless for well-formed inputs.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_whitespace() {
            let sentence = text[start..=i].trim();
            if !sentence.is_empty() {
                out.push(sentence.to_string());
            }
            start = i + 1;
        }
        i += 1;
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
    out
}

struct TagScanner<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> TagScanner<'a> {
    /// Next structural tag at or after the cursor, with its byte position.
    fn peek(&self) -> Option<(&'static str, usize)> {
        TAGS.iter()
            .filter_map(|t| self.text[self.pos..].find(t).map(|off| (*t, self.pos + off)))
            .min_by_key(|&(_, at)| at)
    }
}

/// Parses serialized recipe text back into a [`Recipe`].
///
/// Sections may be missing from the tail (a prompt, or an unterminated
/// generation); their fields come back empty and the completeness flag says
/// how far the text went. An open section without its end tag is read to the
/// end of the text. Tags out of order or repeated are errors.
pub fn parse_recipe(text: &str) -> Result<ParsedRecipe, CorpusError> {
    let mut scanner = TagScanner { text, pos: 0 };

    let expect_open = |scanner: &mut TagScanner, tag: &'static str| -> Result<Option<usize>, CorpusError> {
        match scanner.peek() {
            None => Ok(None),
            Some((found, at)) if found == tag => {
                scanner.pos = at + tag.len();
                Ok(Some(scanner.pos))
            }
            Some((found, at)) => Err(CorpusError::MalformedTag {
                tag: found.to_string(),
                position: at,
                reason: format!("expected {tag}"),
            }),
        }
    };

    // Name section is mandatory.
    let name_start = expect_open(&mut scanner, START_NAME)?.ok_or_else(|| {
        CorpusError::MalformedTag {
            tag: START_NAME.to_string(),
            position: 0,
            reason: "missing".to_string(),
        }
    })?;
    let name_end = match scanner.peek() {
        Some((END_NAME, at)) => {
            scanner.pos = at + END_NAME.len();
            at
        }
        Some((found, at)) => {
            return Err(CorpusError::MalformedTag {
                tag: found.to_string(),
                position: at,
                reason: format!("expected {END_NAME}"),
            })
        }
        None => text.len(),
    };
    let name = text[name_start..name_end].trim().to_string();
    if name.is_empty() {
        return Err(CorpusError::EmptyName);
    }

    let mut read_section = |open: &'static str,
                            close: &'static str|
     -> Result<Option<String>, CorpusError> {
        let start = match expect_open(&mut scanner, open)? {
            Some(p) => p,
            None => return Ok(None),
        };
        let end = match scanner.peek() {
            Some((found, at)) if found == close => {
                scanner.pos = at + close.len();
                at
            }
            Some((found, at)) => {
                return Err(CorpusError::MalformedTag {
                    tag: found.to_string(),
                    position: at,
                    reason: format!("expected {close}"),
                })
            }
            None => text.len(),
        };
        Ok(Some(text[start..end].to_string()))
    };

    let ingredients = read_section(START_INGR, END_INGR)?;
    let instructions = if ingredients.is_some() {
        read_section(START_INST, END_INST)?
    } else {
        None
    };

    if let Some((found, at)) = scanner.peek() {
        return Err(CorpusError::MalformedTag {
            tag: found.to_string(),
            position: at,
            reason: "trailing tag after instructions".to_string(),
        });
    }

    let completeness = match (&ingredients, &instructions) {
        (None, _) => Completeness::NameOnly,
        (Some(_), None) => Completeness::WithIngredients,
        (Some(_), Some(_)) => Completeness::Full,
    };
    Ok(ParsedRecipe {
        recipe: Recipe {
            name,
            ingredients: ingredients.map(|t| split_phrases(&t)).unwrap_or_default(),
            instructions: instructions.map(|t| split_sentences(&t)).unwrap_or_default(),
        },
        completeness,
    })
}

/// Best-effort section extraction that never fails.
///
/// Reward functions score arbitrary in-flight generations, including text
/// with missing or out-of-order tags, so they use this instead of
/// [`parse_recipe`]. Each section is the raw text between its start tag and
/// the first structural tag (or end of text) after it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LenientSections {
    pub name: String,
    pub ingredients: String,
    pub instructions: String,
}

pub fn extract_sections(text: &str) -> LenientSections {
    let grab = |open: &str| -> String {
        match text.find(open) {
            None => String::new(),
            Some(at) => {
                let start = at + open.len();
                let rest = &text[start..];
                let end = TAGS
                    .iter()
                    .filter_map(|t| rest.find(t))
                    .min()
                    .unwrap_or(rest.len());
                rest[..end].trim().to_string()
            }
        }
    };
    LenientSections {
        name: grab(START_NAME),
        ingredients: grab(START_INGR),
        instructions: grab(START_INST),
    }
}

/// Filtering thresholds and keyword list applied while loading a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleaningRules {
    /// Minimum character count of the joined ingredients text.
    pub min_ingredients_chars: usize,
    /// Minimum character count of the instructions text.
    pub min_instructions_chars: usize,
    /// Case-insensitive keywords marking advertisement text.
    pub ad_keywords: Vec<String>,
}

impl Default for CleaningRules {
    fn default() -> Self {
        CleaningRules {
            min_ingredients_chars: 10,
            min_instructions_chars: 20,
            ad_keywords: Vec::new(),
        }
    }
}

/// Per-rule drop counts from a dataset load.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CleaningReport {
    pub retained: usize,
    pub dropped_empty_or_short: usize,
    pub dropped_advertisement: usize,
}

/// Loads a tab-separated dataset (name, ingredients joined by `;`,
/// instructions) and applies the cleaning rules. Interior semicolons in the
/// name and instructions fields are replaced with commas so `;` stays
/// structural. A file where every record is dropped yields an empty list,
/// not an error.
pub fn load_dataset(
    path: &Path,
    rules: &CleaningRules,
) -> Result<(Vec<Recipe>, CleaningReport), CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut recipes = Vec::new();
    let mut report = CleaningReport::default();
    let keywords: Vec<String> = rules.ad_keywords.iter().map(|k| k.to_lowercase()).collect();

    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(CorpusError::MissingColumns {
                line: idx + 1,
                found: fields.len(),
            });
        }
        let name = fields[0].trim().replace(';', ",");
        let ingredients_text = fields[1].trim();
        let instructions_text = fields[2].trim().replace(';', ",");

        let ingredients = split_phrases(ingredients_text);
        let joined_ingredients = ingredients.join("; ");
        if name.is_empty()
            || ingredients.is_empty()
            || instructions_text.is_empty()
            || joined_ingredients.len() < rules.min_ingredients_chars
            || instructions_text.len() < rules.min_instructions_chars
        {
            report.dropped_empty_or_short += 1;
            continue;
        }
        let lower = line.to_lowercase();
        if keywords.iter().any(|k| lower.contains(k)) {
            report.dropped_advertisement += 1;
            continue;
        }
        let recipe = Recipe {
            name,
            ingredients,
            instructions: split_sentences(&instructions_text),
        };
        if recipe.validate().is_err() {
            report.dropped_empty_or_short += 1;
            continue;
        }
        report.retained += 1;
        recipes.push(recipe);
    }
    Ok((recipes, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn fig_recipe() -> Recipe {
        Recipe::new(
            "Chocalate Chip Cookies",
            &[
                "1/2 cup butter",
                "1/2 cup sugar",
                "1 large egg",
                "2 cups all-purpose flour",
                "1 cup semi-sweet chocolate chips",
            ],
            &[
                "Preheat oven to 350F.",
                "Combine all ingredients in mixing bowl.",
                "Mix in chocolate chips.",
                "Place on baking sheet and bake for 10 minutes.",
            ],
        )
    }

    #[test]
    fn serialize_name_prompt() {
        let text = serialize_recipe(&fig_recipe(), Section::Name).unwrap();
        assert_eq!(text, "<|startofname|>Chocalate Chip Cookies<|endofname|>");
    }

    #[test]
    fn serialize_rejects_empty_ingredients() {
        let r = Recipe::new("X", &[], &[]);
        assert!(matches!(
            serialize_recipe(&r, Section::Ingredients),
            Err(CorpusError::EmptySection(_))
        ));
    }

    #[test]
    fn serialize_rejects_empty_name() {
        let r = Recipe::new("   ", &["1 cup flour"], &[]);
        assert!(matches!(
            serialize_recipe(&r, Section::Name),
            Err(CorpusError::EmptyName)
        ));
    }

    #[test]
    fn serialize_rejects_separator_in_phrase() {
        let r = Recipe::new("X", &["butter; salt"], &[]);
        assert!(matches!(
            serialize_recipe(&r, Section::Ingredients),
            Err(CorpusError::SeparatorInPhrase(_))
        ));
    }

    #[test]
    fn round_trip_full() {
        let r = fig_recipe();
        let text = serialize_recipe(&r, Section::Instructions).unwrap();
        let parsed = parse_recipe(&text).unwrap();
        assert_eq!(parsed.recipe, r);
        assert_eq!(parsed.completeness, Completeness::Full);
    }

    #[test]
    fn parse_fig_response() {
        let text = "<|startofname|>Chocalate Chip Cookies<|endofname|><|startofingr|>\
            1/2 cup butter; 1/2 cup sugar; 1 large egg; 2 cups all-purpose flour; \
            1 cup semi-sweet chocolate chips;<|endofingr|>";
        let parsed = parse_recipe(text).unwrap();
        assert_eq!(parsed.recipe.ingredients.len(), 5);
        assert_eq!(parsed.recipe.ingredients[0], "1/2 cup butter");
        assert_eq!(parsed.completeness, Completeness::WithIngredients);
    }

    #[test]
    fn parse_out_of_order_tag_is_error() {
        let text = "<|startofname|>X<|endofname|><|endofingr|>oops<|startofingr|>";
        let err = parse_recipe(text).unwrap_err();
        match err {
            CorpusError::MalformedTag { tag, position, .. } => {
                assert_eq!(tag, END_INGR);
                assert_eq!(position, "<|startofname|>X<|endofname|>".len());
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_prompt_only() {
        let parsed = parse_recipe("<|startofname|>Beef Stew<|endofname|>").unwrap();
        assert_eq!(parsed.completeness, Completeness::NameOnly);
        assert!(parsed.recipe.ingredients.is_empty());
        assert!(parsed.recipe.instructions.is_empty());
    }

    #[test]
    fn parse_unterminated_section_reads_to_end() {
        let parsed =
            parse_recipe("<|startofname|>X<|endofname|><|startofingr|>1 cup rice; 2 eggs").unwrap();
        assert_eq!(parsed.recipe.ingredients, vec!["1 cup rice", "2 eggs"]);
        assert_eq!(parsed.completeness, Completeness::WithIngredients);
    }

    #[test]
    fn extract_sections_is_total() {
        let s = extract_sections("garbage <|startofingr|>salt; pepper");
        assert_eq!(s.ingredients, "salt; pepper");
        assert_eq!(s.name, "");
        assert_eq!(extract_sections(""), LenientSections::default());
    }

    #[test]
    fn sentence_split_round_trips() {
        let text = "Preheat oven. Mix well. Serve";
        let sentences = split_sentences(text);
        assert_eq!(sentences, vec!["Preheat oven.", "Mix well.", "Serve"]);
        assert_eq!(sentences.join(" "), text);
    }

    #[test]
    fn load_dataset_applies_rules() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "Good Soup\t1 cup water; 2 carrots, diced\tBoil the water. Add carrots and simmer.").unwrap();
        writeln!(f, "No Instructions\t1 cup water; 2 carrots\t").unwrap();
        writeln!(f, "Tiny\tsalt\tMix.").unwrap();
        writeln!(f, "Ad Recipe\t1 cup water; 2 cups broth\tVisit www.example.com to buy now and subscribe today.").unwrap();
        f.flush().unwrap();

        let rules = CleaningRules {
            ad_keywords: vec!["buy now".into()],
            ..CleaningRules::default()
        };
        let (recipes, report) = load_dataset(f.path(), &rules).unwrap();
        assert_eq!(recipes.len(), 1);
        assert_eq!(recipes[0].name, "Good Soup");
        assert_eq!(report.retained, 1);
        assert_eq!(report.dropped_empty_or_short, 2);
        assert_eq!(report.dropped_advertisement, 1);
        for r in &recipes {
            r.validate().unwrap();
        }
    }

    #[test]
    fn load_dataset_missing_columns() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "only one field").unwrap();
        f.flush().unwrap();
        assert!(matches!(
            load_dataset(f.path(), &CleaningRules::default()),
            Err(CorpusError::MissingColumns { line: 1, found: 1 })
        ));
    }

    #[test]
    fn load_dataset_zero_retained_is_not_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "X\t\t").unwrap();
        f.flush().unwrap();
        let (recipes, report) = load_dataset(f.path(), &CleaningRules::default()).unwrap();
        assert!(recipes.is_empty());
        assert_eq!(report.retained, 0);
    }
}
