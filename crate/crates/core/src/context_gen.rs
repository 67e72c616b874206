//! Social-bias taxonomy and intersectional sentence generation.
//!
//! Every generated sentence is `<article> <category> ... <category> person`
//! and takes exactly one category from each participating bias pair.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TARGET_WORD: &str = "person";

const SHIPPED_TAXONOMY: &str = include_str!("../data/taxonomy.csv");
const SHIPPED_PLEASANT: &str = include_str!("../data/pleasant.txt");
const SHIPPED_UNPLEASANT: &str = include_str!("../data/unpleasant.txt");

/// The five biases permuted in the intersectional ranking experiment.
pub const PERMUTATION_BIASES: [&str; 5] = ["race", "sex", "religion", "gender", "sexual orientation"];

/// Largest pair count accepted by the generalized permutation generator.
pub const MAX_PERMUTATION_PAIRS: usize = 8;
/// Largest pair count accepted by the combination generator.
pub const MAX_COMBINATION_PAIRS: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum ContextError {
    #[error("taxonomy: {0}")]
    Taxonomy(String),
    #[error("taxonomy csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown bias {0:?}")]
    UnknownBias(String),
    #[error("expected {expected} pairs, got {actual}")]
    PairCount { expected: usize, actual: usize },
    #[error("{0} pairs exceed the supported maximum of {1}")]
    TooManyPairs(usize, usize),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("context file line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasPair {
    #[serde(rename = "name")]
    pub bias_name: String,
    pub category_a: String,
    pub category_b: String,
    /// Corpus frequency ratio of `category_a` to `category_b`.
    #[serde(rename = "r")]
    pub freq_ratio: f64,
}

impl BiasPair {
    pub fn categories(&self) -> [&str; 2] {
        [&self.category_a, &self.category_b]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasTaxonomy {
    pairs: Vec<BiasPair>,
}

impl BiasTaxonomy {
    pub fn new(pairs: Vec<BiasPair>) -> Result<Self, ContextError> {
        if pairs.is_empty() {
            return Err(ContextError::Taxonomy("no bias pairs".into()));
        }
        let mut names = HashSet::new();
        let mut categories = HashSet::new();
        for p in &pairs {
            if p.category_a == p.category_b {
                return Err(ContextError::Taxonomy(format!(
                    "bias {:?} uses {:?} for both categories",
                    p.bias_name, p.category_a
                )));
            }
            if !(p.freq_ratio > 0.0) || !p.freq_ratio.is_finite() {
                return Err(ContextError::Taxonomy(format!(
                    "bias {:?} has non-positive frequency ratio {}",
                    p.bias_name, p.freq_ratio
                )));
            }
            if !names.insert(p.bias_name.as_str()) {
                return Err(ContextError::Taxonomy(format!("duplicate bias {:?}", p.bias_name)));
            }
            for c in p.categories() {
                if c.is_empty() || c.contains(char::is_whitespace) {
                    return Err(ContextError::Taxonomy(format!("category {c:?} must be one word")));
                }
                if !categories.insert(c) {
                    return Err(ContextError::Taxonomy(format!(
                        "category {c:?} appears in more than one pair"
                    )));
                }
            }
        }
        Ok(Self { pairs })
    }

    /// The twelve pairs in template order, age through sex.
    pub fn shipped() -> Self {
        Self::from_csv(SHIPPED_TAXONOMY.as_bytes()).expect("shipped taxonomy is valid")
    }

    /// Reads `name,category_a,category_b,r` rows with a header line.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self, ContextError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let pairs = rdr.deserialize().collect::<Result<Vec<BiasPair>, _>>()?;
        Self::new(pairs)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.pairs {
            w.serialize(p).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
    }

    /// Short content digest identifying this taxonomy in run artifacts.
    pub fn version(&self) -> String {
        let digest = Sha256::digest(self.to_csv().as_bytes());
        format!("sha256:{}", &hex::encode(digest)[..16])
    }

    pub fn pairs(&self) -> &[BiasPair] {
        &self.pairs
    }

    pub fn pair(&self, bias_name: &str) -> Option<&BiasPair> {
        self.pairs.iter().find(|p| p.bias_name == bias_name)
    }

    /// Pairs for the given bias names, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Vec<BiasPair>, ContextError> {
        names
            .iter()
            .map(|n| {
                self.pair(n)
                    .cloned()
                    .ok_or_else(|| ContextError::UnknownBias(n.to_string()))
            })
            .collect()
    }
}

pub fn shipped_pleasant_words() -> Vec<String> {
    word_list(SHIPPED_PLEASANT)
}

pub fn shipped_unpleasant_words() -> Vec<String> {
    word_list(SHIPPED_UNPLEASANT)
}

fn word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

/// A generated sentence and the category it takes from each bias.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceContext {
    pub context_id: String,
    pub text: String,
    /// bias name -> chosen category (as in the taxonomy, before casing).
    pub assignment: BTreeMap<String, String>,
    /// Categories in rendered order.
    pub order: Vec<String>,
}

impl SentenceContext {
    /// Record id of the target-word embedding for this context.
    pub fn target_id(&self) -> String {
        format!("{TARGET_WORD}|{}", self.context_id)
    }

    pub fn contains(&self, category: &str) -> bool {
        self.assignment.values().any(|c| c == category)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenOptions {
    pub article: String,
    /// Categories rendered with an initial capital, e.g. `christian`.
    pub capitalize: BTreeSet<String>,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            article: "a".into(),
            capitalize: BTreeSet::new(),
        }
    }
}

impl GenOptions {
    fn render(&self, categories: &[&str]) -> String {
        let mut text = self.article.clone();
        for c in categories {
            text.push(' ');
            if self.capitalize.contains(*c) {
                let mut chars = c.chars();
                if let Some(first) = chars.next() {
                    text.extend(first.to_uppercase());
                    text.push_str(chars.as_str());
                }
            } else {
                text.push_str(c);
            }
        }
        text.push(' ');
        text.push_str(TARGET_WORD);
        text
    }
}

/// All `2^k` one-category-per-pair sentences in taxonomy order.
///
/// Bit `k-1-j` of the context index selects `category_b` of pair `j`, so
/// index 0 takes every `category_a`.
pub fn generate_combinations(
    taxonomy: &BiasTaxonomy,
    options: &GenOptions,
) -> Result<Vec<SentenceContext>, ContextError> {
    let pairs = taxonomy.pairs();
    let k = pairs.len();
    if k > MAX_COMBINATION_PAIRS {
        return Err(ContextError::TooManyPairs(k, MAX_COMBINATION_PAIRS));
    }
    let count = 1usize << k;
    let width = digits(count - 1).max(4);
    Ok((0..count)
        .map(|index| {
            let chosen: Vec<&str> = pairs
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    if index >> (k - 1 - j) & 1 == 1 {
                        p.category_b.as_str()
                    } else {
                        p.category_a.as_str()
                    }
                })
                .collect();
            build(format!("ctx{index:0width$}"), pairs, &chosen, &chosen, options)
        })
        .collect())
}

/// Every ordering of every one-category-per-pair selection: `2^k * k!`
/// sentences. Exactly five pairs are required unless `allow_general` is set,
/// in which case any `1..=8` pairs are accepted.
///
/// Ids are `perm-<selection bits>-<permutation index>`; permutations are
/// enumerated in lexicographic order of pair positions.
pub fn generate_permutations(
    pairs: &[BiasPair],
    options: &GenOptions,
    allow_general: bool,
) -> Result<Vec<SentenceContext>, ContextError> {
    let k = pairs.len();
    if !allow_general && k != PERMUTATION_BIASES.len() {
        return Err(ContextError::PairCount {
            expected: PERMUTATION_BIASES.len(),
            actual: k,
        });
    }
    if k == 0 {
        return Err(ContextError::PairCount { expected: 1, actual: 0 });
    }
    if k > MAX_PERMUTATION_PAIRS {
        return Err(ContextError::TooManyPairs(k, MAX_PERMUTATION_PAIRS));
    }
    let orderings: Vec<Vec<usize>> = (0..k).permutations(k).collect();
    let perm_width = digits(orderings.len() - 1).max(3);
    let mut out = Vec::with_capacity((1 << k) * orderings.len());
    for selection in 0..(1usize << k) {
        let chosen: Vec<&str> = pairs
            .iter()
            .enumerate()
            .map(|(j, p)| {
                if selection >> (k - 1 - j) & 1 == 1 {
                    p.category_b.as_str()
                } else {
                    p.category_a.as_str()
                }
            })
            .collect();
        let bits: String = (0..k)
            .map(|j| if selection >> (k - 1 - j) & 1 == 1 { '1' } else { '0' })
            .collect();
        for (perm_index, ordering) in orderings.iter().enumerate() {
            let rendered: Vec<&str> = ordering.iter().map(|&j| chosen[j]).collect();
            out.push(build(
                format!("perm-{bits}-{perm_index:0perm_width$}"),
                pairs,
                &chosen,
                &rendered,
                options,
            ));
        }
    }
    Ok(out)
}

fn build(
    context_id: String,
    pairs: &[BiasPair],
    chosen: &[&str],
    rendered: &[&str],
    options: &GenOptions,
) -> SentenceContext {
    SentenceContext {
        context_id,
        text: options.render(rendered),
        assignment: pairs
            .iter()
            .zip(chosen)
            .map(|(p, c)| (p.bias_name.clone(), c.to_string()))
            .collect(),
        order: rendered.iter().map(|c| c.to_string()).collect(),
    }
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

/// Writes the tab-separated `context_id<TAB>sentence` file, with a header.
pub fn write_contexts<W: Write>(contexts: &[SentenceContext], mut sink: W) -> std::io::Result<()> {
    writeln!(sink, "context_id\tsentence")?;
    for c in contexts {
        writeln!(sink, "{}\t{}", c.context_id, c.text)?;
    }
    sink.flush()
}

/// Reads `(context_id, sentence)` rows from a file written by
/// [`write_contexts`].
pub fn read_contexts<R: BufRead>(source: R) -> Result<Vec<(String, String)>, ContextError> {
    let mut rows = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        if n == 0 && line == "context_id\tsentence" {
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (id, text) = line.split_once('\t').ok_or_else(|| ContextError::Parse {
            line: n + 1,
            message: "missing tab separator".into(),
        })?;
        rows.push((id.to_string(), text.to_string()));
    }
    Ok(rows)
}
