//! Command-line interface: corpus synthesis, model training, lexicon
//! building, generation, evaluation, and manifest replay.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use recipegen::corpus::{load_dataset, serialize_recipe, CleaningRules, Recipe, Section, TaskKind};
use recipegen::decoding::{mcts_generate, sample_sequence, SpecReward};
use recipegen::eval::{evaluate_all, report_csv, GenSample};
use recipegen::lexicon::{build_lexicon, default_stop_words};
use recipegen::manifest::{manifest_path_for, RunManifest};
use recipegen::{
    ConstituentLexicon, GenerationConfig, LanguageModel, NGramModel, RemoteModel, RewardSpec,
    SamplingMethod,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

const ENDPOINT_ENV: &str = "RECIPEGEN_ENDPOINT";

#[derive(Parser)]
#[command(name = "recipegen", version, about = "Search-guided recipe text generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a deterministic synthetic recipe dataset (TSV).
    SynthCorpus(SynthArgs),
    /// Train the built-in backoff-interpolated n-gram model on a dataset.
    TrainLm(TrainArgs),
    /// Extract a base-ingredient lexicon from a dataset's ingredient phrases.
    BuildLexicon(LexiconArgs),
    /// Generate samples for dataset prompts with one decoding method.
    Generate(GenerateArgs),
    /// Score generations from all four methods against ground truth.
    Evaluate(EvaluateArgs),
    /// Re-execute a recorded run from its manifest.
    Replay(ReplayArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, Debug, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TaskArg {
    /// Ingredient list from the recipe name.
    Ingredients,
    /// Instructions from the name and ingredient list.
    Instructions,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> TaskKind {
        match t {
            TaskArg::Ingredients => TaskKind::IngredientsFromName,
            TaskArg::Instructions => TaskKind::InstructionsFromNameAndIngredients,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Debug, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MethodArg {
    TopP,
    NoNgram,
    RepPenalty,
    Mcts,
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::TopP => "top_p",
            MethodArg::NoNgram => "no_ngram",
            MethodArg::RepPenalty => "rep_penalty",
            MethodArg::Mcts => "mcts",
        }
    }
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct SynthArgs {
    /// Number of recipes to generate.
    #[arg(long, default_value_t = 5000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct TrainArgs {
    /// Tab-separated dataset: name, ingredients joined by ';', instructions.
    #[arg(long)]
    corpus: PathBuf,
    /// Highest n-gram order.
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Comma-separated interpolation weights, lowest order first; uniform
    /// when omitted.
    #[arg(long)]
    weights: Option<String>,
    /// Keyword marking a row as advertisement text; repeatable.
    #[arg(long = "ad-keyword")]
    #[serde(default)]
    ad_keywords: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct LexiconArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Keyword marking a row as advertisement text; repeatable.
    #[arg(long = "ad-keyword")]
    #[serde(default)]
    ad_keywords: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct GenerateArgs {
    /// Dataset providing prompts (and names for the output records).
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Built-in model file; mutually exclusive with --endpoint.
    #[arg(long, conflicts_with = "endpoint")]
    model: Option<PathBuf>,
    /// Remote model base URL; defaults to $RECIPEGEN_ENDPOINT when neither
    /// --model nor --endpoint is given.
    #[arg(long)]
    endpoint: Option<String>,
    /// Lexicon file, required for --method mcts.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Rows to skip before the first prompt.
    #[arg(long, default_value_t = 0)]
    skip: usize,
    /// Number of prompts; all remaining rows when omitted.
    #[arg(long)]
    limit: Option<usize>,
    /// Master seed; sample i runs with a seed derived from (seed, i).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// MCTS iterations per emitted token.
    #[arg(long, default_value_t = 20)]
    iterations: usize,
    #[arg(long, default_value_t = 1.0)]
    exploration_c: f64,
    #[arg(long, default_value_t = 50)]
    expansion_k: usize,
    #[arg(long, default_value_t = 0.9)]
    nucleus_p: f64,
    #[arg(long, default_value_t = 30)]
    rollout_t: usize,
    #[arg(long, default_value_t = 200)]
    max_tokens: usize,
    /// Banned n-gram size for --method no-ngram.
    #[arg(long, default_value_t = 4)]
    ngram_n: usize,
    /// Penalty exponent for --method rep-penalty.
    #[arg(long, default_value_t = 1.2)]
    theta: f64,
    /// Reward components as name=weight; task defaults when omitted.
    #[arg(long)]
    reward: Vec<String>,
    /// Keyword marking a row as advertisement text; repeatable.
    #[arg(long = "ad-keyword")]
    #[serde(default)]
    ad_keywords: Vec<String>,
    /// Worker threads; output order stays the input order.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output NDJSON file, one record per prompt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Model used for perplexity.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long, default_value_t = 0)]
    skip: usize,
    #[arg(long)]
    limit: Option<usize>,
    /// Generations files, one per method.
    #[arg(long)]
    top_p: Option<PathBuf>,
    #[arg(long)]
    no_ngram: Option<PathBuf>,
    #[arg(long)]
    rep_penalty: Option<PathBuf>,
    #[arg(long)]
    mcts: Option<PathBuf>,
    /// Keyword marking a row as advertisement text; repeatable.
    #[arg(long = "ad-keyword")]
    #[serde(default)]
    ad_keywords: Vec<String>,
    /// JSON report path.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV copy of the report table.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::SynthCorpus(args) => run_synth(&args),
        Command::TrainLm(args) => run_train(&args),
        Command::BuildLexicon(args) => run_build_lexicon(&args),
        Command::Generate(args) => run_generate(args),
        Command::Evaluate(args) => run_evaluate(&args),
        Command::Replay(args) => run_replay(&args),
    }
}

fn write_manifest<P: Serialize>(
    command: &str,
    params: &P,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    out: &Path,
) -> Result<()> {
    let manifest = RunManifest::new(command, params, seed, inputs, vec![out.to_path_buf()])?;
    manifest.save(&manifest_path_for(out))?;
    Ok(())
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    write_manifest("synth-corpus", args, Some(args.seed), vec![], &args.out)?;
    let recipes = recipegen::synth::generate_corpus(args.count, args.seed);
    std::fs::write(&args.out, recipegen::synth::corpus_tsv(&recipes))
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {} recipes to {}", recipes.len(), args.out.display());
    Ok(())
}

fn load_corpus(path: &Path, ad_keywords: &[String]) -> Result<Vec<Recipe>> {
    let rules = CleaningRules {
        ad_keywords: ad_keywords.to_vec(),
        ..CleaningRules::default()
    };
    let (recipes, report) = load_dataset(path, &rules)?;
    if recipes.is_empty() {
        eprintln!("warning: no recipes retained from {}", path.display());
    }
    eprintln!(
        "loaded {}: retained {}, dropped {} short/empty, {} advertisement",
        path.display(),
        report.retained,
        report.dropped_empty_or_short,
        report.dropped_advertisement
    );
    Ok(recipes)
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let recipes = load_corpus(&args.corpus, &args.ad_keywords)?;
    let weights = match &args.weights {
        Some(spec) => spec
            .split(',')
            .map(|w| w.trim().parse::<f64>().context("bad weight"))
            .collect::<Result<Vec<f64>>>()?,
        None => NGramModel::uniform_weights(args.order),
    };
    let texts = recipes
        .iter()
        .map(|r| serialize_recipe(r, Section::Instructions))
        .collect::<Result<Vec<_>, _>>()?;
    write_manifest("train-lm", args, None, vec![args.corpus.clone()], &args.out)?;
    let model = NGramModel::train(&texts, args.order, &weights)?;
    model.save(&args.out)?;
    eprintln!(
        "trained order-{} model, vocab {} tokens, saved to {}",
        args.order,
        model.vocab().len(),
        args.out.display()
    );
    Ok(())
}

fn run_build_lexicon(args: &LexiconArgs) -> Result<()> {
    let recipes = load_corpus(&args.corpus, &args.ad_keywords)?;
    write_manifest("build-lexicon", args, None, vec![args.corpus.clone()], &args.out)?;
    let phrases: Vec<&str> = recipes
        .iter()
        .flat_map(|r| r.ingredients.iter().map(|s| s.as_str()))
        .collect();
    let lexicon = build_lexicon(phrases, &default_stop_words());
    lexicon.save(&args.out)?;
    eprintln!("{} lexicon entries saved to {}", lexicon.len(), args.out.display());
    Ok(())
}

/// splitmix64 over the master seed and sample index, so per-sample streams
/// are decorrelated and stable under --skip/--limit changes.
fn derive_seed(master: u64, index: usize) -> u64 {
    let mut z = master
        .wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn select_rows(recipes: Vec<Recipe>, skip: usize, limit: Option<usize>) -> Result<Vec<Recipe>> {
    let rows: Vec<Recipe> = match limit {
        Some(n) => recipes.into_iter().skip(skip).take(n).collect(),
        None => recipes.into_iter().skip(skip).collect(),
    };
    if rows.is_empty() {
        bail!("no dataset rows selected (skip/limit out of range)");
    }
    Ok(rows)
}

fn open_model(
    model: &Option<PathBuf>,
    endpoint: &Option<String>,
    top_k: usize,
) -> Result<Box<dyn LanguageModel>> {
    match (model, endpoint) {
        (Some(path), None) => Ok(Box::new(NGramModel::load(path)?)),
        (None, Some(url)) => Ok(Box::new(RemoteModel::new(url, top_k)?)),
        (None, None) => bail!("either --model or --endpoint (or ${ENDPOINT_ENV}) is required"),
        (Some(_), Some(_)) => bail!("--model conflicts with --endpoint"),
    }
}

fn parse_reward(task: TaskKind, pairs: &[String]) -> Result<RewardSpec> {
    if pairs.is_empty() {
        return Ok(RewardSpec::for_task(task));
    }
    let named = pairs
        .iter()
        .map(|p| {
            let (name, weight) = p
                .split_once('=')
                .ok_or_else(|| anyhow!("--reward expects name=weight, got {p:?}"))?;
            Ok((name.trim().to_string(), weight.trim().parse::<f64>()?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RewardSpec::from_config(task, &named)?)
}

fn run_generate(mut args: GenerateArgs) -> Result<()> {
    if args.model.is_none() && args.endpoint.is_none() {
        args.endpoint = std::env::var(ENDPOINT_ENV).ok().filter(|e| !e.is_empty());
    }
    let task: TaskKind = args.task.into();
    let rows = select_rows(
        load_corpus(&args.dataset, &args.ad_keywords)?,
        args.skip,
        args.limit,
    )?;
    let model = open_model(&args.model, &args.endpoint, args.expansion_k)?;
    let lexicon = match &args.lexicon {
        Some(path) => Some(ConstituentLexicon::load(path)?),
        None => None,
    };
    if args.method == MethodArg::Mcts && lexicon.is_none() {
        bail!("--method mcts requires --lexicon");
    }
    let reward_spec = parse_reward(task, &args.reward)?;

    let mut inputs = vec![args.dataset.clone()];
    inputs.extend(args.model.clone());
    inputs.extend(args.lexicon.clone());
    write_manifest("generate", &args, Some(args.seed), inputs, &args.out)?;

    let base_config = GenerationConfig {
        iterations: args.iterations,
        exploration_c: args.exploration_c,
        expansion_k: args.expansion_k,
        nucleus_p: args.nucleus_p,
        rollout_t: args.rollout_t,
        max_tokens: args.max_tokens,
        rng_seed: 0,
        stop_tag: task.stop_tag().to_string(),
    };
    base_config.validate()?;

    let jobs = args.jobs.max(1).min(rows.len());
    let results = run_samples(&args, task, &rows, model.as_ref(), lexicon.as_ref(), &reward_spec, &base_config, jobs);

    let mut file = std::fs::File::create(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut failures = 0usize;
    for (recipe, result) in rows.iter().zip(&results) {
        match result {
            Ok(sample) => writeln!(file, "{}", serde_json::to_string(sample)?)?,
            Err(message) => {
                failures += 1;
                let record = serde_json::json!({
                    "name": recipe.name,
                    "method": args.method.name(),
                    "error": message,
                });
                writeln!(file, "{}", serde_json::to_string(&record)?)?;
            }
        }
    }
    eprintln!(
        "wrote {} samples ({} failed) to {}",
        results.len(),
        failures,
        args.out.display()
    );
    if failures > 0 {
        bail!("{failures} of {} samples failed", results.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_samples(
    args: &GenerateArgs,
    task: TaskKind,
    rows: &[Recipe],
    model: &dyn LanguageModel,
    lexicon: Option<&ConstituentLexicon>,
    reward_spec: &RewardSpec,
    base_config: &GenerationConfig,
    jobs: usize,
) -> Vec<Result<GenSample, String>> {
    let run_one = |index: usize, recipe: &Recipe| -> Result<GenSample, String> {
        let seed = derive_seed(args.seed, args.skip + index);
        let prompt = recipe.prompt(task).map_err(|e| e.to_string())?;
        let tokens = model.tokenize(&prompt);
        let mut config = base_config.clone();
        config.rng_seed = seed;
        let output = match args.method {
            MethodArg::Mcts => {
                let reward = SpecReward {
                    spec: reward_spec,
                    lexicon: lexicon.expect("checked before dispatch"),
                };
                mcts_generate(model, &tokens, &reward, &config, None)
            }
            baseline => {
                let method = match baseline {
                    MethodArg::TopP => SamplingMethod::TopP,
                    MethodArg::NoNgram => SamplingMethod::NoNgram { n: args.ngram_n },
                    MethodArg::RepPenalty => SamplingMethod::RepPenalty { theta: args.theta },
                    MethodArg::Mcts => unreachable!(),
                };
                sample_sequence(model, &tokens, method, &config)
            }
        }
        .map_err(|e| e.to_string())?;
        Ok(GenSample {
            name: recipe.name.clone(),
            prompt,
            output: model.detokenize(&output.tokens),
            method: args.method.name().to_string(),
            seed,
        })
    };

    if jobs <= 1 {
        return rows.iter().enumerate().map(|(i, r)| run_one(i, r)).collect();
    }
    let mut results: Vec<Option<Result<GenSample, String>>> = (0..rows.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for worker in 0..jobs {
            let run_one = &run_one;
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                let mut index = worker;
                while index < rows.len() {
                    out.push((index, run_one(index, &rows[index])));
                    index += jobs;
                }
                out
            }));
        }
        for handle in handles {
            for (index, result) in handle.join().expect("worker thread panicked") {
                results[index] = Some(result);
            }
        }
    });
    results.into_iter().map(|r| r.expect("every index filled")).collect()
}

fn read_generations(method: &str, path: &Path, truth: &[Recipe]) -> Result<Vec<GenSample>> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading {} generations from {}", method, path.display()))?;
    let mut samples = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample: GenSample = serde_json::from_str(line).with_context(|| {
            format!("{}:{}: not a generation record", path.display(), lineno + 1)
        })?;
        samples.push(sample);
    }
    if samples.len() != truth.len() {
        bail!(
            "{}: {} records but {} selected dataset rows",
            path.display(),
            samples.len(),
            truth.len()
        );
    }
    for (sample, recipe) in samples.iter().zip(truth) {
        if sample.name != recipe.name {
            bail!(
                "{}: record for {:?} does not match dataset row {:?}; check --skip/--limit",
                path.display(),
                sample.name,
                recipe.name
            );
        }
    }
    Ok(samples)
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let task: TaskKind = args.task.into();
    let truth = select_rows(
        load_corpus(&args.dataset, &args.ad_keywords)?,
        args.skip,
        args.limit,
    )?;

    let sources = [
        ("top_p", &args.top_p),
        ("no_ngram", &args.no_ngram),
        ("rep_penalty", &args.rep_penalty),
        ("mcts", &args.mcts),
    ];
    let missing: Vec<&str> = sources
        .iter()
        .filter(|(_, p)| p.is_none())
        .map(|&(m, _)| m)
        .collect();
    if !missing.is_empty() {
        bail!("missing generations for methods: {}", missing.join(", "));
    }

    let model = NGramModel::load(&args.model)?;
    let lexicon = ConstituentLexicon::load(&args.lexicon)?;
    let mut methods = BTreeMap::new();
    for (method, path) in &sources {
        let path = path.as_ref().expect("checked above");
        methods.insert(method.to_string(), read_generations(method, path, &truth)?);
    }

    let mut inputs = vec![
        args.dataset.clone(),
        args.model.clone(),
        args.lexicon.clone(),
    ];
    inputs.extend(sources.iter().filter_map(|(_, p)| (*p).clone()));
    write_manifest("evaluate", args, None, inputs, &args.out)?;

    let reports = evaluate_all(task, &methods, &truth, &model, &lexicon)?;
    std::fs::write(&args.out, serde_json::to_string_pretty(&reports)? + "\n")
        .with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(csv_path) = &args.csv {
        std::fs::write(csv_path, report_csv(&reports))
            .with_context(|| format!("writing {}", csv_path.display()))?;
    }
    eprintln!("report for {} methods written to {}", methods.len(), args.out.display());
    Ok(())
}

fn run_replay(args: &ReplayArgs) -> Result<()> {
    let manifest = RunManifest::load(&args.manifest)?;
    eprintln!("replaying {} run from {}", manifest.command, args.manifest.display());
    match manifest.command.as_str() {
        "synth-corpus" => run_synth(&manifest.params_as()?),
        "train-lm" => run_train(&manifest.params_as()?),
        "build-lexicon" => run_build_lexicon(&manifest.params_as()?),
        "generate" => run_generate(manifest.params_as()?),
        "evaluate" => run_evaluate(&manifest.params_as()?),
        other => bail!("manifest records unknown command {other:?}"),
    }
}
