//! Deterministic toy recipe corpus for desk-scale runs and tests.
//!
//! Names, ingredient lists, and instructions are generated from a small
//! closed vocabulary with deliberate correlation: the dish name mentions the
//! headline ingredients and the instructions mention every listed ingredient.
//! That gives the coherence rewards and metrics real signal at a corpus size
//! an order-3 model can learn in seconds.

use crate::corpus::Recipe;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (base name, quantity phrase) pairs; the base name is what the name and
/// instructions reference and what the lexicon should learn. The pool is
/// kept small on purpose: an order-3 model spreads its prior across every
/// base it ever saw after "Add the", and a wide pool starves tree search of
/// exploration at realistic iteration budgets.
const INGREDIENTS: &[(&str, &str)] = &[
    ("chicken", "1 lb chicken, diced"),
    ("beef", "1 lb beef, cubed"),
    ("shrimp", "1/2 lb shrimp, peeled"),
    ("rice", "2 cups rice"),
    ("noodles", "8 oz noodles"),
    ("beans", "1 can beans, drained"),
    ("tomatoes", "2 tomatoes, chopped"),
    ("onions", "2 onions, sliced"),
    ("garlic", "3 cloves garlic, minced"),
    ("carrots", "2 carrots, peeled"),
    ("mushrooms", "8 oz mushrooms"),
    ("cheese", "1 cup cheese, grated"),
];

const DISH_KINDS: &[&str] = &[
    "soup", "stew", "casserole", "curry", "stir fry", "salad", "bake", "skillet", "chowder",
    "pilaf",
];

const STYLE_WORDS: &[&str] = &[
    "hearty", "creamy", "spicy", "rustic", "quick", "classic", "savory", "smoky",
];

const COOK_VERBS: &[&str] = &["simmer", "saute", "roast", "stir", "brown", "toss"];

const VESSELS: &[&str] = &["a large pot", "a skillet", "a baking dish", "a dutch oven"];

/// Generates `count` recipes deterministically from `seed`.
pub fn generate_corpus(count: usize, seed: u64) -> Vec<Recipe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| generate_recipe(&mut rng)).collect()
}

fn generate_recipe(rng: &mut ChaCha8Rng) -> Recipe {
    let n_headline = rng.gen_range(1..=2);
    let n_filler = rng.gen_range(2..=4);
    let picked: Vec<&(&str, &str)> = INGREDIENTS
        .choose_multiple(rng, n_headline + n_filler)
        .collect();
    let (headline, filler) = picked.split_at(n_headline);

    let kind = DISH_KINDS.choose(rng).unwrap();
    let mut name = headline
        .iter()
        .map(|(base, _)| *base)
        .collect::<Vec<_>>()
        .join(" and ");
    name.push(' ');
    name.push_str(kind);
    if rng.gen_bool(0.4) {
        name = format!("{} {}", STYLE_WORDS.choose(rng).unwrap(), name);
    }

    let ingredients: Vec<String> = picked.iter().map(|(_, phrase)| phrase.to_string()).collect();

    let vessel = VESSELS.choose(rng).unwrap();
    let verb = COOK_VERBS.choose(rng).unwrap();
    let minutes = rng.gen_range(3..=9) * 5;
    let mut instructions = vec![format!(
        "Combine the {} in {}.",
        headline
            .iter()
            .map(|(base, _)| *base)
            .collect::<Vec<_>>()
            .join(" and "),
        vessel
    )];
    for (base, _) in filler {
        instructions.push(format!("Add the {} and {} briefly.", base, verb));
    }
    instructions.push(format!("Cook for {} minutes and serve warm.", minutes));

    Recipe {
        name,
        ingredients,
        instructions,
    }
}

/// Writes a corpus as the tab-separated dataset format the trainer reads.
pub fn corpus_tsv(recipes: &[Recipe]) -> String {
    let mut out = String::new();
    for r in recipes {
        out.push_str(&r.name);
        out.push('\t');
        out.push_str(&r.ingredients_text());
        out.push('\t');
        out.push_str(&r.instructions_text());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = generate_corpus(50, 9);
        let b = generate_corpus(50, 9);
        assert_eq!(a, b);
        let c = generate_corpus(50, 10);
        assert_ne!(a, c);
    }

    #[test]
    fn recipes_validate_and_correlate() {
        let recipes = generate_corpus(200, 1);
        for r in &recipes {
            r.validate().unwrap();
            // every headline ingredient in the name appears in the list
            let joined = r.ingredients_text().to_lowercase();
            let mentioned = INGREDIENTS
                .iter()
                .filter(|(base, _)| r.name.split(' ').any(|w| w == *base))
                .count();
            assert!(mentioned >= 1, "name has no ingredient word: {}", r.name);
            for (base, _) in INGREDIENTS {
                if r.name.split(' ').any(|w| w == *base) {
                    assert!(joined.contains(base), "{} missing {}", r.name, base);
                }
            }
        }
    }

    #[test]
    fn tsv_round_trips_through_loader() {
        let recipes = generate_corpus(30, 4);
        let tsv = corpus_tsv(&recipes);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.tsv");
        std::fs::write(&path, tsv).unwrap();
        let rules = crate::corpus::CleaningRules::default();
        let (loaded, report) = crate::corpus::load_dataset(&path, &rules).unwrap();
        assert_eq!(report.retained, loaded.len());
        assert!(!loaded.is_empty());
        // loader splits phrases the same way the writer joined them
        assert_eq!(loaded[0].ingredients, recipes[0].ingredients);
    }
}
