//! The five audit subcommands. Each reads VEMB inputs, never modifies them,
//! and writes its artifacts into the output directory.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use valence_core::context_gen::{
    generate_combinations, generate_permutations, shipped_pleasant_words, shipped_unpleasant_words,
    write_contexts, PERMUTATION_BIASES,
};
use valence_core::{
    projection_scweat, rank_contexts, read_embeddings_file, train_valence_direction, valnorm,
    write_embeddings_file, BiasTaxonomy, EmbeddingSet, GenOptions, Scorer, SentenceContext,
    StimulusSet, SubspaceError, ValenceDirection,
};

use crate::config::{layer_path, AuditConfig, ContextMode};
use crate::error::AuditError;
use crate::report::{self, EffectRow, Stamp, ValNormRow};

/// Files written and warnings raised by one command.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl CommandOutput {
    fn wrote(&mut self, path: PathBuf) {
        self.files.push(path);
    }
}

fn load_set(path: &Path) -> Result<EmbeddingSet, AuditError> {
    if !path.exists() {
        return Err(AuditError::input(format!("embedding file not found: {}", path.display())));
    }
    read_embeddings_file(path).map_err(|e| AuditError::input(format!("{}: {e}", path.display())))
}

fn load_direction(path: &Path) -> Result<ValenceDirection, AuditError> {
    if !path.exists() {
        return Err(AuditError::input(format!(
            "direction file not found: {} (run learn-direction first)",
            path.display()
        )));
    }
    ValenceDirection::load(path).map_err(|e| AuditError::from(e).context(path.display()))
}

fn read_word_list(path: &Path) -> Result<Vec<String>, AuditError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AuditError::input(format!("cannot read word list {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn load_taxonomy(config: &AuditConfig) -> Result<BiasTaxonomy, AuditError> {
    match &config.taxonomy {
        Some(path) => {
            let file = fs::File::open(path)
                .map_err(|e| AuditError::input(format!("cannot open taxonomy {}: {e}", path.display())))?;
            BiasTaxonomy::from_csv(file).map_err(|e| AuditError::from(e).context(path.display()))
        }
        None => Ok(BiasTaxonomy::shipped()),
    }
}

fn gen_options(config: &AuditConfig) -> GenOptions {
    let d = GenOptions::default();
    GenOptions {
        article: config.article.clone().unwrap_or(d.article),
        capitalize: config
            .capitalize
            .iter()
            .flatten()
            .cloned()
            .collect(),
    }
}

fn direction_template(config: &AuditConfig) -> Result<String, AuditError> {
    match &config.direction {
        Some(t) => Ok(t.clone()),
        None => Ok(config
            .out_dir()?
            .join("direction.L{layer}.vemb")
            .to_string_lossy()
            .into_owned()),
    }
}

struct WordLists {
    pleasant: Vec<String>,
    unpleasant: Vec<String>,
}

impl WordLists {
    fn from_config(config: &AuditConfig) -> Result<Self, AuditError> {
        Ok(WordLists {
            pleasant: match &config.pleasant_words {
                Some(p) => read_word_list(p)?,
                None => shipped_pleasant_words(),
            },
            unpleasant: match &config.unpleasant_words {
                Some(p) => read_word_list(p)?,
                None => shipped_unpleasant_words(),
            },
        })
    }

    fn all(&self) -> BTreeSet<String> {
        self.pleasant.iter().chain(&self.unpleasant).cloned().collect()
    }
}

/// Keeps the records of `set` named in `words`; every listed word must exist.
fn restrict(set: &EmbeddingSet, words: &[String], path: &Path) -> Result<EmbeddingSet, AuditError> {
    let present: HashSet<&str> = set.records().iter().map(|r| r.id.as_str()).collect();
    let missing: Vec<&str> = words
        .iter()
        .map(String::as_str)
        .filter(|w| !present.contains(w))
        .collect();
    if !missing.is_empty() {
        return Err(AuditError::input(format!(
            "{} lacks stimulus words: {}",
            path.display(),
            missing.join(", ")
        )));
    }
    let keep: HashSet<&str> = words.iter().map(String::as_str).collect();
    Ok(set.filtered(|id| keep.contains(id)))
}

fn load_stimuli(config: &AuditConfig, lists: &WordLists, layer: u32) -> Result<StimulusSet, AuditError> {
    let p_path = layer_path(AuditConfig::require(&config.pleasant, "--pleasant")?, layer);
    let u_path = layer_path(AuditConfig::require(&config.unpleasant, "--unpleasant")?, layer);
    let pleasant = restrict(&load_set(&p_path)?, &lists.pleasant, &p_path)?;
    let unpleasant = restrict(&load_set(&u_path)?, &lists.unpleasant, &u_path)?;
    Ok(StimulusSet::new(pleasant, unpleasant)?)
}

fn stamp(config: &AuditConfig, command: &str, taxonomy: &BiasTaxonomy, model: String) -> Stamp {
    Stamp {
        command: command.to_string(),
        config_digest: config.digest(command),
        seed: config.seed,
        taxonomy_version: taxonomy.version(),
        model,
        layer: None,
    }
}

fn ensure_out_dir(config: &AuditConfig) -> Result<PathBuf, AuditError> {
    let out = config.out_dir()?.to_path_buf();
    fs::create_dir_all(&out)
        .map_err(|e| AuditError::input(format!("cannot create {}: {e}", out.display())))?;
    Ok(out)
}

/// Trains one valence direction per selected layer.
///
/// Writes `direction.L<layer>.vemb` and `direction.L<layer>.report.txt`.
pub fn cmd_learn_direction(config: &AuditConfig) -> Result<CommandOutput, AuditError> {
    let out_dir = ensure_out_dir(config)?;
    let lists = WordLists::from_config(config)?;
    let taxonomy = load_taxonomy(config)?;
    let p_template = AuditConfig::require(&config.pleasant, "--pleasant")?;
    let layers = config.layer_list(|| {
        read_embeddings_file(&layer_path(p_template, 0))
            .ok()
            .and_then(|s| s.layer_count())
    })?;
    let svc = config.svc();
    let mut output = CommandOutput::default();

    for layer in layers {
        let stimuli = load_stimuli(config, &lists, layer)?;
        let model = config
            .model
            .clone()
            .unwrap_or_else(|| stimuli.pleasant.model_name().to_string());
        let st = stamp(config, "learn-direction", &taxonomy, model.clone()).for_layer(layer);

        let direction = match train_valence_direction(&stimuli, &svc) {
            Ok(d) => d,
            Err(SubspaceError::NotConverged { iterations, gap, .. }) => {
                return Err(AuditError::numerical(format!(
                    "layer {layer}: solver did not converge within {iterations} iterations (KKT gap {gap:.3e}); \
                     raise --svc-max-iterations or --svc-tolerance"
                )));
            }
            Err(e) => return Err(AuditError::from(e).context(format!("layer {layer}"))),
        };
        let meta = direction.training().expect("trained directions carry metadata").clone();
        let gap = direction.orientation_gap(&stimuli)?;

        let mut set = direction.to_embedding_set(&model, layer);
        if let Some(count) = stimuli.pleasant.layer_count() {
            set = set.with_layer_count(count)?;
        }
        let set = set
            .with_attribute("config_digest", json!(st.config_digest))
            .with_attribute("seed", json!(st.seed))
            .with_attribute("taxonomy_version", json!(st.taxonomy_version));
        let vemb = out_dir.join(format!("direction.L{layer}.vemb"));
        write_embeddings_file(&set, &vemb)?;
        output.wrote(vemb);

        let separable = meta.training_accuracy == 1.0;
        if !separable {
            output.warnings.push(format!(
                "layer {layer}: stimuli are not linearly separable (training accuracy {:.4})",
                meta.training_accuracy
            ));
        }
        let mut text = st.comment_line();
        let _ = writeln!(text, "valence direction training report");
        let _ = writeln!(text, "model: {model}");
        let _ = writeln!(text, "layer: {layer}");
        let _ = writeln!(
            text,
            "stimuli: {} pleasant, {} unpleasant, dimension {}",
            stimuli.pleasant.len(),
            stimuli.unpleasant.len(),
            stimuli.pleasant.dimension()
        );
        let _ = writeln!(text, "C: {}", meta.c);
        let _ = writeln!(text, "iterations: {}", meta.iterations);
        let _ = writeln!(text, "converged: {}", meta.converged);
        let _ = writeln!(text, "margin: {}", meta.margin);
        let _ = writeln!(text, "intercept: {}", direction.intercept());
        let _ = writeln!(text, "training_accuracy: {}", meta.training_accuracy);
        let _ = writeln!(text, "separable: {separable}");
        let _ = writeln!(text, "orientation_gap: {gap}");
        let _ = writeln!(text, "orientation_check: {}", if gap > 0.0 { "pass" } else { "FAIL" });
        let report_path = out_dir.join(format!("direction.L{layer}.report.txt"));
        report::write_file(&report_path, &text)?;
        output.wrote(report_path);
    }
    Ok(output)
}

fn read_lexicon(path: &Path) -> Result<Vec<(String, f64)>, AuditError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| AuditError::input(format!("cannot read lexicon {}: {e}", path.display())))?;
    let rows: Vec<(String, f64)> = rdr
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| AuditError::input(format!("lexicon {}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(AuditError::input(format!("lexicon {} is empty", path.display())));
    }
    Ok(rows)
}

/// Layer-wise ValNorm with both the projection and the cosine scorer.
///
/// Writes `valnorm.csv`, `valnorm.plot.dat` and `valnorm.report.txt`.
pub fn cmd_valnorm(config: &AuditConfig) -> Result<CommandOutput, AuditError> {
    let out_dir = ensure_out_dir(config)?;
    let lists = WordLists::from_config(config)?;
    let taxonomy = load_taxonomy(config)?;
    let lexicon_path = AuditConfig::require(&config.lexicon, "--lexicon")?;
    let lexicon = read_lexicon(lexicon_path)?;
    let emb_template = AuditConfig::require(&config.embeddings, "--embeddings")?;
    let dir_template = direction_template(config)?;
    let layers = config.layer_list(|| {
        read_embeddings_file(&layer_path(emb_template, 0))
            .ok()
            .and_then(|s| s.layer_count())
    })?;
    let exclude = if config.exclude_training_overlap.unwrap_or(false) {
        lists.all()
    } else {
        BTreeSet::new()
    };

    let mut output = CommandOutput::default();
    let mut rows = Vec::new();
    let mut notes = String::new();
    let mut model_name = config.model.clone();

    for layer in &layers {
        let layer = *layer;
        let emb_path = layer_path(emb_template, layer);
        let embeddings = load_set(&emb_path)?;
        let model = model_name
            .get_or_insert_with(|| embeddings.model_name().to_string())
            .clone();
        let direction = load_direction(&layer_path(&dir_template, layer))?;
        let stimuli = load_stimuli(config, &lists, layer)?;

        let scorers = [
            Scorer::Projection(&direction),
            Scorer::Cosine {
                pleasant: &stimuli.pleasant,
                unpleasant: &stimuli.unpleasant,
            },
        ];
        for scorer in &scorers {
            let result = valnorm(&lexicon, &embeddings, scorer, &exclude)
                .map_err(|e| AuditError::from(e).context(format!("layer {layer} {}", scorer.method())))?;
            let considered = lexicon.len() - result.excluded.len();
            let coverage = result.score.n_words as f64 / considered.max(1) as f64;
            if scorer.method() == valence_core::Method::Projection {
                if coverage < config.coverage_threshold() {
                    let w = format!(
                        "layer {layer}: lexicon coverage {:.1}% is below {:.1}% ({} of {} words)",
                        100.0 * coverage,
                        100.0 * config.coverage_threshold(),
                        result.score.n_words,
                        considered
                    );
                    let _ = writeln!(notes, "warning: {w}");
                    output.warnings.push(w);
                }
                if !result.missing.is_empty() {
                    let _ = writeln!(notes, "layer {layer} missing words: {}", result.missing.join(", "));
                }
                if !result.excluded.is_empty() {
                    let _ = writeln!(
                        notes,
                        "layer {layer} excluded training-overlap words: {}",
                        result.excluded.join(", ")
                    );
                }
            }
            rows.push(ValNormRow::new(&model, &result.score, lexicon.len()));
        }
    }

    let model = model_name.unwrap_or_default();
    let st = stamp(config, "valnorm", &taxonomy, model);
    let csv_path = out_dir.join("valnorm.csv");
    report::write_csv(&csv_path, &st, &rows)?;
    output.wrote(csv_path);

    let plot_path = out_dir.join("valnorm.plot.dat");
    report::write_file(&plot_path, &report::valnorm_plot_data(&st, &rows))?;
    output.wrote(plot_path);

    let mut text = st.comment_line();
    let _ = writeln!(text, "ValNorm (Pearson rho of human rating vs. embedding association)");
    let _ = writeln!(text, "{:>5}  {:>10}  {:>10}  {:>7}", "layer", "projection", "cosine", "words");
    for layer in &layers {
        let find = |m: &str| rows.iter().find(|r| r.layer == *layer && r.method == m);
        if let (Some(p), Some(c)) = (find("projection"), find("cosine")) {
            let _ = writeln!(text, "{:>5}  {:>10.4}  {:>10.4}  {:>7}", layer, p.rho, c.rho, p.n_words);
        }
    }
    text.push_str(&notes);
    let report_path = out_dir.join("valnorm.report.txt");
    report::write_file(&report_path, &text)?;
    output.wrote(report_path);
    Ok(output)
}

fn generate(config: &AuditConfig, taxonomy: &BiasTaxonomy, mode: ContextMode) -> Result<Vec<SentenceContext>, AuditError> {
    let opts = gen_options(config);
    match mode {
        ContextMode::Combinations => Ok(generate_combinations(taxonomy, &opts)?),
        ContextMode::Permutations => {
            let names: Vec<&str> = match &config.biases {
                Some(b) => b.iter().map(String::as_str).collect(),
                None => PERMUTATION_BIASES.to_vec(),
            };
            let pairs = taxonomy.select(&names)?;
            Ok(generate_permutations(&pairs, &opts, config.allow_general.unwrap_or(false))?)
        }
    }
}

/// Exports generated contexts as `contexts.tsv` plus `contexts.meta.json`.
pub fn cmd_gen_contexts(config: &AuditConfig) -> Result<CommandOutput, AuditError> {
    let out_dir = ensure_out_dir(config)?;
    let taxonomy = load_taxonomy(config)?;
    let mode = config.mode.unwrap_or(ContextMode::Combinations);
    let contexts = generate(config, &taxonomy, mode)?;
    let mut output = CommandOutput::default();

    let tsv = out_dir.join("contexts.tsv");
    let file = fs::File::create(&tsv)
        .map_err(|e| AuditError::input(format!("cannot write {}: {e}", tsv.display())))?;
    write_contexts(&contexts, std::io::BufWriter::new(file))?;
    output.wrote(tsv);

    let opts = gen_options(config);
    let meta = json!({
        "config_digest": config.digest("gen-contexts"),
        "seed": config.seed,
        "taxonomy_version": taxonomy.version(),
        "mode": mode,
        "biases": match mode {
            ContextMode::Combinations => taxonomy.pairs().iter().map(|p| p.bias_name.clone()).collect::<Vec<_>>(),
            ContextMode::Permutations => config.biases.clone()
                .unwrap_or_else(|| PERMUTATION_BIASES.iter().map(|s| s.to_string()).collect()),
        },
        "article": opts.article,
        "capitalize": opts.capitalize,
        "target_word": valence_core::context_gen::TARGET_WORD,
        "count": contexts.len(),
    });
    let meta_path = out_dir.join("contexts.meta.json");
    report::write_file(
        &meta_path,
        &(serde_json::to_string_pretty(&meta).expect("json") + "\n"),
    )?;
    output.wrote(meta_path);
    Ok(output)
}

/// Collects the target vectors of `contexts`; every id must be present.
fn context_vectors<'a>(
    contexts: &'a [SentenceContext],
    set: &'a EmbeddingSet,
    path: &Path,
) -> Result<Vec<(&'a SentenceContext, &'a [f32])>, AuditError> {
    let index = set.index();
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(contexts.len());
    for c in contexts {
        match index.get(c.target_id().as_str()) {
            Some(v) => out.push((c, *v)),
            None => missing.push(c.target_id()),
        }
    }
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(20).map(String::as_str).collect();
        return Err(AuditError::input(format!(
            "{} is missing {} context embeddings: {}{}",
            path.display(),
            missing.len(),
            shown.join(", "),
            if missing.len() > shown.len() { ", ..." } else { "" }
        )));
    }
    Ok(out)
}

/// Differential SC-WEAT for every bias pair over the combination contexts.
///
/// Writes `bias_tests.L<layer>.csv` and `bias_tests.L<layer>.txt`.
pub fn cmd_bias_tests(config: &AuditConfig) -> Result<CommandOutput, AuditError> {
    let out_dir = ensure_out_dir(config)?;
    let taxonomy = load_taxonomy(config)?;
    let contexts = generate(config, &taxonomy, ContextMode::Combinations)?;
    let emb_template = AuditConfig::require(&config.embeddings, "--embeddings")?;
    let dir_template = direction_template(config)?;
    let layers = config.layer_list(|| None)?;
    let swap = config.swap.unwrap_or(false);
    let mut output = CommandOutput::default();

    for layer in layers {
        let emb_path = layer_path(emb_template, layer);
        let set = load_set(&emb_path)?;
        let direction = load_direction(&layer_path(&dir_template, layer))?;
        let vectors = context_vectors(&contexts, &set, &emb_path)?;
        let model = config.model.clone().unwrap_or_else(|| set.model_name().to_string());
        let st = stamp(config, "bias-tests", &taxonomy, model.clone()).for_layer(layer);

        let mut results = Vec::new();
        for pair in taxonomy.pairs() {
            let (a_cat, b_cat) = if swap {
                (&pair.category_b, &pair.category_a)
            } else {
                (&pair.category_a, &pair.category_b)
            };
            let group = |cat: &str| -> Vec<&[f32]> {
                vectors
                    .iter()
                    .filter(|(c, _)| c.contains(cat))
                    .map(|(_, v)| *v)
                    .collect()
            };
            let (a, b) = (group(a_cat), group(b_cat));
            let perm = config.permutation(a.len(), b.len())?;
            let name = format!("{a_cat} vs. {b_cat}");
            let r = projection_scweat(&a, &b, &direction, &perm)
                .map_err(|e| AuditError::from(e).context(&name))?;
            results.push((name, r));
        }

        let rows: Vec<EffectRow> = results
            .iter()
            .map(|(n, r)| EffectRow::new(n.clone(), &model, layer, r, config.seed))
            .collect();
        let csv_path = out_dir.join(format!("bias_tests.L{layer}.csv"));
        report::write_csv(&csv_path, &st, &rows)?;
        output.wrote(csv_path);
        let txt_path = out_dir.join(format!("bias_tests.L{layer}.txt"));
        report::write_file(&txt_path, &report::bias_table(&st, &results))?;
        output.wrote(txt_path);
    }
    Ok(output)
}

/// Ranks the permutation contexts by valence and reports category shares in
/// the top and bottom `q` fraction.
///
/// Writes `rank.L<layer>.csv`, `rank.L<layer>.txt` and
/// `rank.L<layer>.ranked.tsv`.
pub fn cmd_rank(config: &AuditConfig) -> Result<CommandOutput, AuditError> {
    let out_dir = ensure_out_dir(config)?;
    let taxonomy = load_taxonomy(config)?;
    let contexts = generate(config, &taxonomy, ContextMode::Permutations)?;
    let emb_template = AuditConfig::require(&config.embeddings, "--embeddings")?;
    let dir_template = direction_template(config)?;
    let layers = config.layer_list(|| None)?;
    let q = config.q()?;
    let mut output = CommandOutput::default();

    for layer in layers {
        let emb_path = layer_path(emb_template, layer);
        let set = load_set(&emb_path)?;
        let prefix = format!("{}|", valence_core::context_gen::TARGET_WORD);
        let targets = set.records().iter().filter(|r| r.id.starts_with(&prefix)).count();
        if targets != contexts.len() {
            return Err(AuditError::input(format!(
                "{} holds {targets} context embeddings but the generator yields {} contexts",
                emb_path.display(),
                contexts.len()
            )));
        }
        let direction = load_direction(&layer_path(&dir_template, layer))?;
        let pairs: Vec<(SentenceContext, &[f32])> = context_vectors(&contexts, &set, &emb_path)?
            .into_iter()
            .map(|(c, v)| (c.clone(), v))
            .collect();
        let decile = rank_contexts(&pairs, &direction, q)?;
        let model = config.model.clone().unwrap_or_else(|| set.model_name().to_string());
        let st = stamp(config, "rank", &taxonomy, model).for_layer(layer);

        let csv_path = out_dir.join(format!("rank.L{layer}.csv"));
        report::write_csv(&csv_path, &st, &report::decile_rows(&decile))?;
        output.wrote(csv_path);
        let txt_path = out_dir.join(format!("rank.L{layer}.txt"));
        report::write_file(&txt_path, &report::decile_table(&st, &decile))?;
        output.wrote(txt_path);
        let list_path = out_dir.join(format!("rank.L{layer}.ranked.tsv"));
        report::write_file(&list_path, &report::ranked_list(&st, &decile))?;
        output.wrote(list_path);
    }
    Ok(output)
}
