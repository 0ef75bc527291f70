//! Batch pipeline: run configuration, the command implementations behind
//! the CLI (`kbgen`, `supervise`, `train`, `decompose`, `answer`, `eval`,
//! `gradcheck`), and the named random sub-streams that make every command
//! deterministic for a fixed seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::align::{
    make_supervision, AlignError, AlignableRecord, CompType, EmbeddingStore, MgSplits,
    SupervisionExample, SupervisionStats, DEFAULT_THRESHOLD,
};
use crate::backend::{
    BackendError, FixtureBackend, QaBackend, SnippetBackend, SnippetServiceConfig,
};
use crate::comptree::{evaluate, Answer, EvalError};
use crate::decomp::{
    compile, rule_based_split, select_strategy, tokenize, DecompError, DecompositionProgram,
    Strategy,
};
use crate::eval::{report, EvalRecord, Report};
use crate::kbgen::{
    dataset_from_jsonl, dataset_to_jsonl, generate_dataset, seeds_from_jsonl, GenConfig, GenStats,
    Kb, KbError, NoiseConfig, SynonymTable, TemplateTable,
};
use crate::ptrnet::{grad_check, predict, train, GruParams, ModelConfig, PtrNetError};

/// Environment variable holding the snippet-service API key.
pub const SNIPPET_KEY_ENV: &str = "QDECOMP_SNIPPET_KEY";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config key {key}: {message}")]
    Config { key: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error(transparent)]
    Tree(#[from] EvalError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    PtrNet(#[from] PtrNetError),
    #[error("{0}")]
    Contract(String),
    #[error("quota exhausted; progress saved, rerun to resume from question {cursor}")]
    Suspended { cursor: usize },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub kb: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub fixture: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub supervision: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Fixture,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecomposerKind {
    Rule,
    Model,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_count() -> usize {
    100
}

fn default_mix() -> (usize, usize, usize, usize) {
    (45, 45, 5, 5)
}

fn default_seed() -> u64 {
    13
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub model: ModelConfig,
    /// Cosine threshold for the alignment similarity matrix.
    pub threshold: f64,
    /// Number of dataset records `kbgen` emits.
    pub count: usize,
    /// Type mix (comp, conj, super, compar) percentages.
    pub mix: (usize, usize, usize, usize),
    pub synonym_prob: f64,
    pub swap_prob: f64,
    pub seed: u64,
    pub backend: BackendKind,
    pub decomposer: DecomposerKind,
    pub endpoint: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: PathsConfig::default(),
            model: ModelConfig::default(),
            threshold: default_threshold(),
            count: default_count(),
            mix: default_mix(),
            synonym_prob: 0.0,
            swap_prob: 0.0,
            seed: default_seed(),
            backend: BackendKind::Fixture,
            decomposer: DecomposerKind::Rule,
            endpoint: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config {
            key: "config".to_string(),
            message: format!("{}: {e}", path.display()),
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config {
            key: "config".to_string(),
            message: e.to_string(),
        })
    }

    fn require<'a>(&self, field: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, PipelineError> {
        let path = field.as_deref().ok_or_else(|| PipelineError::Config {
            key: format!("paths.{key}"),
            message: "missing required path".to_string(),
        })?;
        if !path.exists() {
            return Err(PipelineError::Config {
                key: format!("paths.{key}"),
                message: format!("{} does not exist", path.display()),
            });
        }
        Ok(path)
    }

    fn require_out<'a>(
        &self,
        flag: Option<&'a Path>,
        field: &'a Option<PathBuf>,
        key: &str,
    ) -> Result<&'a Path, PipelineError> {
        flag.or(field.as_deref()).ok_or_else(|| PipelineError::Config {
            key: format!("paths.{key}"),
            message: "no output path (set it in the config or pass --out)".to_string(),
        })
    }
}

/// A named deterministic random sub-stream of the run seed.
pub fn stage_rng(seed: u64, stage: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    let mut stream_seed = [0u8; 32];
    stream_seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(stream_seed)
}

/// Generate the synthetic dataset; errors if zero records were emitted.
pub fn cmd_kbgen(config: &RunConfig, out: Option<&Path>) -> Result<GenStats, PipelineError> {
    let kb = Kb::load(config.require(&config.paths.kb, "kb")?)?;
    let seeds = seeds_from_jsonl(&fs::read_to_string(
        config.require(&config.paths.seeds, "seeds")?,
    )?)?;
    let templates = TemplateTable::load(config.require(&config.paths.templates, "templates")?)?;
    let synonyms = match &config.paths.synonyms {
        Some(path) => SynonymTable::load(path)?,
        None => SynonymTable::default(),
    };
    let gen_config = GenConfig {
        count: config.count,
        mix: config.mix,
        noise: NoiseConfig {
            synonym_prob: config.synonym_prob,
            swap_prob: config.swap_prob,
        },
    };
    let mut rng = stage_rng(config.seed, "kbgen");
    let (records, stats) =
        generate_dataset(&kb, &seeds, &templates, &synonyms, &gen_config, &mut rng)?;
    if records.is_empty() {
        return Err(PipelineError::Contract(
            "generator emitted zero records".to_string(),
        ));
    }
    let out = config.require_out(out, &config.paths.dataset, "dataset")?;
    fs::write(out, dataset_to_jsonl(&records))?;
    Ok(stats)
}

/// Align each NL question against its MG question and write noisy labels.
pub fn cmd_supervise(
    config: &RunConfig,
    out: Option<&Path>,
) -> Result<SupervisionStats, PipelineError> {
    let dataset = dataset_from_jsonl(&fs::read_to_string(
        config.require(&config.paths.dataset, "dataset")?,
    )?)?;
    let store = EmbeddingStore::load(config.require(&config.paths.embeddings, "embeddings")?)?;
    let mut records = Vec::new();
    for r in &dataset {
        let (Ok(nl), Ok(mg)) = (tokenize(&r.question), tokenize(&r.mg_question)) else {
            continue;
        };
        records.push(AlignableRecord {
            nl,
            mg,
            comp_type: r.comp_type,
            mg_splits: r.mg_splits,
        });
    }
    let (examples, stats) = make_supervision(&records, &store, config.threshold);
    let mut text = String::new();
    for ex in &examples {
        let _ = writeln!(text, "{}", serde_json::to_string(ex).expect("serializable"));
    }
    let out = config.require_out(out, &config.paths.supervision, "supervision")?;
    fs::write(out, text)?;
    Ok(stats)
}

pub fn supervision_from_jsonl(text: &str) -> Result<Vec<SupervisionExample>, PipelineError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Config {
                key: format!("supervision line {}", i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Train the pointer network on a supervision file and save the model.
pub fn cmd_train(config: &RunConfig, out: Option<&Path>) -> Result<f64, PipelineError> {
    let data = supervision_from_jsonl(&fs::read_to_string(
        config.require(&config.paths.supervision, "supervision")?,
    )?)?;
    if data.is_empty() {
        return Err(PipelineError::Contract(
            "supervision file has no examples".to_string(),
        ));
    }
    let store = EmbeddingStore::load(config.require(&config.paths.embeddings, "embeddings")?)?;
    let mut model_config = config.model.clone();
    model_config.seed = config.seed;
    let (params, log) = train(&data, model_config, &store)?;
    let out = config.require_out(out, &config.paths.model, "model")?;
    params.save(out)?;
    Ok(*log.epoch_losses.last().expect("at least one epoch"))
}

fn decompose_one(
    question: &str,
    decomposer: DecomposerKind,
    model: Option<&GruParams>,
) -> Result<DecompositionProgram, PipelineError> {
    let q = tokenize(question)?;
    Ok(match decomposer {
        DecomposerKind::Rule => rule_based_split(&q),
        DecomposerKind::Model => {
            let params = model.ok_or_else(|| PipelineError::Config {
                key: "paths.model".to_string(),
                message: "model decomposer selected but no model loaded".to_string(),
            })?;
            predict(&q, params)?
        }
    })
}

fn load_model_if_needed(config: &RunConfig) -> Result<Option<GruParams>, PipelineError> {
    match config.decomposer {
        DecomposerKind::Rule => Ok(None),
        DecomposerKind::Model => Ok(Some(GruParams::load(
            config.require(&config.paths.model, "model")?,
        )?)),
    }
}

fn read_questions(config: &RunConfig) -> Result<Vec<String>, PipelineError> {
    let path = config.require(&config.paths.questions, "questions")?;
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecomposeOutput {
    pub question: String,
    pub program: String,
}

/// Decompose each question in the questions file; writes JSON Lines.
pub fn cmd_decompose(
    config: &RunConfig,
    out: Option<&Path>,
) -> Result<Vec<DecomposeOutput>, PipelineError> {
    let model = load_model_if_needed(config)?;
    let mut outputs = Vec::new();
    for question in read_questions(config)? {
        let program = decompose_one(&question, config.decomposer, model.as_ref())?;
        outputs.push(DecomposeOutput {
            question,
            program: program.to_string(),
        });
    }
    let mut text = String::new();
    for o in &outputs {
        let _ = writeln!(text, "{}", serde_json::to_string(o).expect("serializable"));
    }
    if let Some(path) = out.or(config.paths.predictions.as_deref()) {
        fs::write(path, text)?;
    }
    Ok(outputs)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerOutput {
    pub question: String,
    pub program: String,
    pub answer: Option<Answer>,
    pub score: Option<f64>,
    pub strategy: Option<Strategy>,
}

fn build_backend(config: &RunConfig) -> Result<Box<dyn QaBackend>, PipelineError> {
    match config.backend {
        BackendKind::Fixture => Ok(Box::new(FixtureBackend::load(
            config.require(&config.paths.fixture, "fixture")?,
        )?)),
        BackendKind::Http => {
            let endpoint = config.endpoint.clone().ok_or_else(|| PipelineError::Config {
                key: "endpoint".to_string(),
                message: "http backend requires an endpoint".to_string(),
            })?;
            let cache_dir = config
                .paths
                .cache_dir
                .clone()
                .ok_or_else(|| PipelineError::Config {
                    key: "paths.cache_dir".to_string(),
                    message: "http backend requires a cache directory".to_string(),
                })?;
            Ok(Box::new(SnippetBackend::new(SnippetServiceConfig {
                endpoint,
                api_key: std::env::var(SNIPPET_KEY_ENV).ok(),
                cache_dir,
            })))
        }
    }
}

fn cursor_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".cursor");
    PathBuf::from(name)
}

/// Answer every question: decompose, compile, evaluate, and in parallel
/// ask the backend the whole question, then keep the higher-confidence
/// answer. On a backend quota error progress is saved to a cursor file
/// next to the output and the run can resume.
pub fn cmd_answer(
    config: &RunConfig,
    out: Option<&Path>,
) -> Result<Vec<AnswerOutput>, PipelineError> {
    let backend = build_backend(config)?;
    let model = load_model_if_needed(config)?;
    let questions = read_questions(config)?;
    let out = config.require_out(out, &config.paths.predictions, "predictions")?;
    let cursor_file = cursor_path(out);
    let start: usize = if cursor_file.exists() {
        fs::read_to_string(&cursor_file)?
            .trim()
            .parse()
            .unwrap_or(0)
    } else {
        0
    };
    let mut outputs: Vec<AnswerOutput> = if start > 0 && out.exists() {
        fs::read_to_string(out)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|e| PipelineError::Config {
                    key: "predictions".to_string(),
                    message: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    outputs.truncate(start);
    let flush = |outputs: &[AnswerOutput]| -> Result<(), PipelineError> {
        let mut text = String::new();
        for o in outputs {
            let _ = writeln!(text, "{}", serde_json::to_string(o).expect("serializable"));
        }
        fs::write(out, text)?;
        Ok(())
    };
    for (idx, question) in questions.iter().enumerate().skip(start) {
        let program = decompose_one(question, config.decomposer, model.as_ref())?;
        let q = tokenize(question)?;
        let tree = compile(&program, &q)?;
        let decomposed = match evaluate(&tree, backend.as_ref()) {
            Ok(set) => set,
            Err(EvalError::Backend { source, .. }) if matches!(source, BackendError::Quota(_)) => {
                flush(&outputs)?;
                fs::write(&cursor_file, idx.to_string())?;
                return Err(PipelineError::Suspended { cursor: idx });
            }
            Err(e) => return Err(e.into()),
        };
        let plain = match backend.answer(question) {
            Ok(set) => set,
            Err(BackendError::Quota(_)) => {
                flush(&outputs)?;
                fs::write(&cursor_file, idx.to_string())?;
                return Err(PipelineError::Suspended { cursor: idx });
            }
            Err(e) => return Err(e.into()),
        };
        let output = match select_strategy(&decomposed, &plain) {
            Ok((best, strategy)) => AnswerOutput {
                question: question.clone(),
                program: program.to_string(),
                answer: Some(best.answer),
                score: Some(best.score),
                strategy: Some(strategy),
            },
            Err(DecompError::BothEmpty) => AnswerOutput {
                question: question.clone(),
                program: program.to_string(),
                answer: None,
                score: None,
                strategy: None,
            },
            Err(e) => return Err(e.into()),
        };
        outputs.push(output);
    }
    flush(&outputs)?;
    if cursor_file.exists() {
        fs::remove_file(&cursor_file)?;
    }
    Ok(outputs)
}

/// Score a predictions file against the gold dataset and write a report.
pub fn cmd_eval(config: &RunConfig, out: Option<&Path>) -> Result<Report, PipelineError> {
    let dataset = dataset_from_jsonl(&fs::read_to_string(
        config.require(&config.paths.dataset, "dataset")?,
    )?)?;
    let predictions: Vec<AnswerOutput> = fs::read_to_string(
        config.require(&config.paths.predictions, "predictions")?,
    )?
    .lines()
    .enumerate()
    .filter(|(_, l)| !l.trim().is_empty())
    .map(|(i, l)| {
        serde_json::from_str(l).map_err(|e| PipelineError::Config {
            key: format!("predictions line {}", i + 1),
            message: e.to_string(),
        })
    })
    .collect::<Result<_, _>>()?;
    let by_question: BTreeMap<&str, &crate::kbgen::DatasetRecord> = dataset
        .iter()
        .map(|r| (r.question.as_str(), r))
        .collect();
    // gold programs, where the supervision file is available
    let gold_programs: BTreeMap<String, DecompositionProgram> = match &config.paths.supervision {
        Some(path) if path.exists() => supervision_from_jsonl(&fs::read_to_string(path)?)?
            .into_iter()
            .map(|ex| (ex.nl.text.clone(), ex.label))
            .collect(),
        _ => BTreeMap::new(),
    };
    let mut records = Vec::new();
    for p in &predictions {
        let Some(gold) = by_question.get(p.question.as_str()) else {
            continue;
        };
        let predicted = p.answer.clone().map(|answer| {
            crate::comptree::ScoredAnswer::new(answer, p.score.unwrap_or(0.0))
        });
        records.push(EvalRecord {
            question: p.question.clone(),
            gold: gold.answers.clone(),
            predicted,
            predicted_set: None,
            gold_program: gold_programs.get(&p.question).cloned(),
            predicted_program: DecompositionProgram::parse_wire(&p.program).ok(),
            comp_type: Some(gold.comp_type.as_str().to_string()),
            strategy: p.strategy,
        });
    }
    let rep = report(&records);
    if let Some(path) = out {
        fs::write(path, serde_json::to_string_pretty(&rep).expect("serializable"))?;
    }
    Ok(rep)
}

/// Tokens used by the self-contained gradient check.
const GRADCHECK_WORDS: [&str; 12] = [
    "who", "was", "the", "president", "when", "city", "won", "prize", "in", "year", "first",
    "wrote",
];

/// Build deterministic synthetic supervision examples for gradcheck.
pub fn synthetic_examples(count: usize, rng: &mut ChaCha8Rng) -> Vec<SupervisionExample> {
    let mut out = Vec::new();
    while out.len() < count {
        let len = rng.gen_range(4..=9);
        let words: Vec<&str> = (0..len)
            .map(|_| *GRADCHECK_WORDS.choose(rng).expect("non-empty"))
            .collect();
        let q = tokenize(&words.join(" ")).expect("non-empty question");
        let label = if rng.gen_bool(0.5) {
            let i = rng.gen_range(0..len);
            let j = rng.gen_range(i..len);
            DecompositionProgram::Comp { i, j }
        } else {
            let i = rng.gen_range(1..len);
            let copy = if rng.gen_bool(0.5) {
                Some(rng.gen_range(0..i))
            } else {
                None
            };
            DecompositionProgram::Conj { i, copy }
        };
        out.push(SupervisionExample {
            nl: q,
            label,
            comp_type: CompType::Comp,
            mg_splits: MgSplits::Conj { r: 1 },
            reordered: false,
        });
    }
    out
}

/// Compare analytic gradients against central differences on a small
/// randomly-initialized model; returns the max relative error.
pub fn cmd_gradcheck(config: &RunConfig) -> Result<f64, PipelineError> {
    let mut rng = stage_rng(config.seed, "gradcheck");
    let examples = synthetic_examples(10, &mut rng);
    let model_config = ModelConfig {
        hidden_dim: 8,
        embed_dim: 16,
        dropout: 0.0,
        seed: config.seed,
        ..ModelConfig::default()
    };
    let store = EmbeddingStore::new(model_config.embed_dim);
    let vocab = crate::ptrnet::Vocab::build(
        examples
            .iter()
            .flat_map(|ex| ex.nl.tokens.iter().map(String::as_str)),
        &store,
    );
    let params = GruParams::init(model_config, vocab);
    Ok(grad_check(&params, &examples, 1e-4, 100, config.seed)?)
}
