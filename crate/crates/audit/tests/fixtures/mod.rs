//! Synthetic VEMB inputs with known structure along the first coordinate.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use valence_core::context_gen::{shipped_pleasant_words, shipped_unpleasant_words, PERMUTATION_BIASES};
use valence_core::{
    generate_combinations, generate_permutations, write_embeddings_file, BiasTaxonomy,
    EmbeddingRecord, EmbeddingSet, GenOptions,
};

pub const DIM: usize = 8;
pub const MODEL: &str = "synthetic-lm";

/// Category words whose permutation contexts are pushed to the pleasant end.
pub const DOMINANT: &str = "christian";

fn noisy(rng: &mut ChaCha8Rng, lead: f32) -> Vec<f32> {
    let mut v: Vec<f32> = (0..DIM).map(|_| rng.gen_range(-0.25f32..0.25)).collect();
    v[0] = lead;
    v
}

fn write_set(path: &Path, layer: u32, layer_count: u32, records: Vec<EmbeddingRecord>) {
    let set = EmbeddingSet::new(MODEL, layer, DIM, records)
        .unwrap()
        .with_layer_count(layer_count)
        .unwrap();
    write_embeddings_file(&set, path).unwrap();
}

/// Stimulus files: the pleasant words lie at `x0 >= 1`, unpleasant at `x0 <= -1`.
pub fn write_stimuli(dir: &Path, layer: u32, layer_count: u32) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + layer as u64);
    let mut make = |words: Vec<String>, sign: f32| -> Vec<EmbeddingRecord> {
        words
            .into_iter()
            .map(|w| {
                let lead = sign * (1.0 + rng.gen_range(0.0f32..1.0));
                EmbeddingRecord::new(w, noisy(&mut rng, lead))
            })
            .collect()
    };
    let pleasant = make(shipped_pleasant_words(), 1.0);
    let unpleasant = make(shipped_unpleasant_words(), -1.0);
    let p = dir.join(format!("pleasant.L{layer}.vemb"));
    let u = dir.join(format!("unpleasant.L{layer}.vemb"));
    write_set(&p, layer, layer_count, pleasant);
    write_set(&u, layer, layer_count, unpleasant);
    (p, u)
}

/// Lexicon of 40 rated words plus the CSV naming them and one absent word.
pub fn write_lexicon(dir: &Path, layer: u32, layer_count: u32) -> (PathBuf, PathBuf, Vec<(String, f64)>) {
    let ratings: Vec<(String, f64)> = (0..40)
        .map(|i| (format!("word{i:02}"), 1.0 + ((i * 37) % 41) as f64 * 0.2))
        .collect();
    // A vector along the first axis only, scaled by the rating, projects
    // linearly in the rating onto any direction.
    let records = ratings
        .iter()
        .map(|(w, r)| {
            let mut v = vec![0.0f32; DIM];
            v[0] = *r as f32;
            EmbeddingRecord::new(w.clone(), v)
        })
        .collect();
    let emb = dir.join(format!("lexicon.L{layer}.vemb"));
    write_set(&emb, layer, layer_count, records);
    let csv = dir.join("lexicon.csv");
    let mut text = String::from("word,rating\n");
    for (w, r) in &ratings {
        text.push_str(&format!("{w},{r}\n"));
    }
    text.push_str("unseenword,4.5\n");
    fs::write(&csv, text).unwrap();
    (csv, emb, ratings)
}

/// Combination-context embeddings where every `category_a` raises `x0`.
pub fn write_combination_contexts(dir: &Path, layer: u32, drop: usize) -> PathBuf {
    let taxonomy = BiasTaxonomy::shipped();
    let contexts = generate_combinations(&taxonomy, &GenOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(200 + layer as u64);
    let records = contexts
        .iter()
        .skip(drop)
        .map(|c| {
            let lead = taxonomy
                .pairs()
                .iter()
                .filter(|p| c.contains(&p.category_a))
                .count() as f32;
            EmbeddingRecord::new(c.target_id(), noisy(&mut rng, lead))
        })
        .collect();
    let path = dir.join(format!("combos.L{layer}.vemb"));
    write_set(&path, layer, 12, records);
    path
}

/// Permutation-context embeddings where sentences holding [`DOMINANT`] lie
/// far on the pleasant side.
pub fn write_permutation_contexts(dir: &Path, layer: u32, drop: usize) -> PathBuf {
    let pairs = BiasTaxonomy::shipped().select(&PERMUTATION_BIASES).unwrap();
    let contexts = generate_permutations(&pairs, &GenOptions::default(), false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(300 + layer as u64);
    let records = contexts
        .iter()
        .skip(drop)
        .map(|c| {
            let lead = if c.contains(DOMINANT) { 50.0 } else { 0.0 } + rng.gen_range(-1.0f32..1.0);
            EmbeddingRecord::new(c.target_id(), noisy(&mut rng, lead))
        })
        .collect();
    let path = dir.join(format!("perms.L{layer}.vemb"));
    write_set(&path, layer, 12, records);
    path
}

pub fn sha256_file(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

pub fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Path template with the layer number replaced by `{layer}`.
pub fn template(dir: &Path, stem: &str) -> String {
    s(&dir.join(format!("{stem}.L{{layer}}.vemb")))
}

/// Runs the CLI in-process.
pub fn audit(args: &[&str]) -> Result<valence_audit::CommandOutput, valence_audit::AuditError> {
    valence_audit::run(std::iter::once("valence-audit").chain(args.iter().copied()))
}

/// Sorted `(file name, contents)` of every file in `dir`.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

/// Full pipeline over layer 12 into `out`, using inputs in `input`.
pub fn run_pipeline(input: &Path, out: &Path) {
    let out_s = s(out);
    let p = template(input, "pleasant");
    let u = template(input, "unpleasant");
    let common = ["--layers", "12", "--out", &out_s];
    let with = |extra: &[&str]| -> Vec<String> { common.iter().chain(extra).map(|x| x.to_string()).collect() };
    let run = |cmd: &str, args: Vec<String>| {
        let mut full = vec![cmd.to_string()];
        full.extend(args);
        let refs: Vec<&str> = full.iter().map(String::as_str).collect();
        audit(&refs).unwrap_or_else(|e| panic!("{cmd}: {e}"));
    };
    run("learn-direction", with(&["--pleasant", &p, "--unpleasant", &u]));
    let lexicon = s(&input.join("lexicon.csv"));
    let lex_emb = template(input, "lexicon");
    run(
        "valnorm",
        with(&["--pleasant", &p, "--unpleasant", &u, "--lexicon", &lexicon, "--embeddings", &lex_emb]),
    );
    run("gen-contexts", with(&["--mode", "permutations"]));
    run("bias-tests", with(&["--embeddings", &template(input, "combos"), "--seed", "42", "--samples", "2000"]));
    run("rank", with(&["--embeddings", &template(input, "perms")]));
}

/// Writes every layer-12 input the pipeline reads.
pub fn write_pipeline_inputs(input: &Path) {
    write_stimuli(input, 12, 12);
    write_lexicon(input, 12, 12);
    write_combination_contexts(input, 12, 0);
    write_permutation_contexts(input, 12, 0);
}
