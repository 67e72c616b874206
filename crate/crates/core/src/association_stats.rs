//! Effect sizes, permutation tests and correlation scores over embedding
//! associations.
//!
//! Two association measures are supported: scalar projection onto a learned
//! [`ValenceDirection`] and the cosine-similarity single-category WEAT.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context_gen::SentenceContext;
use crate::embedding_store::EmbeddingSet;
use crate::valence_subspace::{SubspaceError, ValenceDirection};

/// Number of permutation draws handled by one seeded RNG stream.
const SAMPLE_BLOCK: usize = 1024;

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("group {group} has {count} members, at least {min} required")]
    TooFewSamples {
        group: &'static str,
        count: usize,
        min: usize,
    },
    #[error("joint standard deviation is zero; the effect size is undefined")]
    ZeroDeviation,
    #[error("zero variance in {0}; correlation is undefined")]
    ZeroVariance(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero-magnitude vector")]
    ZeroVector,
    #[error("only {found} scoreable words, at least 3 required")]
    TooFewWords { found: usize },
    #[error("fraction q must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("{available} contexts cannot fill a fraction {q} (need at least {needed})")]
    TooFewContexts { available: usize, q: f64, needed: usize },
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Projection,
    Cosine,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Projection => "projection",
            Method::Cosine => "cosine",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    /// Largest number of relabelings that is enumerated exhaustively.
    pub max_exact: u64,
    /// Draws used when enumeration would exceed `max_exact`.
    pub samples: usize,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            max_exact: 1_000_000,
            samples: 10_000,
            seed: 0,
        }
    }
}

impl PermutationConfig {
    /// Whether groups of these sizes fall back to sampling.
    pub fn needs_sampling(&self, n_a: usize, n_b: usize) -> bool {
        binomial(n_a + n_b, n_a) > self.max_exact as u128
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    pub p_value: f64,
    pub exact: bool,
    /// Set when the p-value fell below sampling resolution and was replaced
    /// by the normal approximation of the permutation null.
    pub approximated: bool,
    pub permutations_used: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeResult {
    pub d: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub permutations_used: u64,
    pub exact: bool,
    pub approximated: bool,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValNormScore {
    pub layer_index: u32,
    pub rho: f64,
    pub n_words: usize,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValNormReport {
    pub score: ValNormScore,
    /// Lexicon words absent from the embedding set, in lexicon order.
    pub missing: Vec<String>,
    /// Lexicon words skipped because they were excluded by the caller.
    pub excluded: Vec<String>,
}

/// Per-category occurrence percentages in the most and least pleasant
/// contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileReport {
    pub q: f64,
    pub total: usize,
    pub subset_size: usize,
    pub top: BTreeMap<String, f64>,
    pub bottom: BTreeMap<String, f64>,
    /// All contexts sorted most pleasant first.
    pub ranked: Vec<RankedContext>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedContext {
    pub context_id: String,
    pub text: String,
    pub projection: f64,
}

/// `(mean(a) - mean(b)) / sample_std(a ∪ b)`.
///
/// The joint deviation is computed over the sorted union so that swapping
/// the groups reproduces the denominator bit for bit.
pub fn effect_size(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check_group("A", a.len(), 1)?;
    check_group("B", b.len(), 1)?;
    let mut joint: Vec<f64> = a.iter().chain(b).copied().collect();
    joint.sort_by(f64::total_cmp);
    let sd = sample_std(&joint);
    if !(sd > 0.0) {
        return Err(StatsError::ZeroDeviation);
    }
    Ok((mean(a) - mean(b)) / sd)
}

/// Projection SC-WEAT: effect size of group A over group B on `S(., U)`,
/// with a one-sided permutation p-value on the projected scalars.
pub fn projection_scweat<V: AsRef<[f32]>>(
    a: &[V],
    b: &[V],
    direction: &ValenceDirection,
    config: &PermutationConfig,
) -> Result<EffectSizeResult, StatsError> {
    check_group("A", a.len(), 2)?;
    check_group("B", b.len(), 2)?;
    let a_scores = direction.project_many(a)?;
    let b_scores = direction.project_many(b)?;
    scweat_from_scores(&a_scores, &b_scores, Method::Projection, config)
}

pub fn scweat_from_scores(
    a_scores: &[f64],
    b_scores: &[f64],
    method: Method,
    config: &PermutationConfig,
) -> Result<EffectSizeResult, StatsError> {
    let d = effect_size(a_scores, b_scores)?;
    let outcome = permutation_test(a_scores, b_scores, config)?;
    Ok(EffectSizeResult {
        d,
        p_value: outcome.p_value,
        n_a: a_scores.len(),
        n_b: b_scores.len(),
        permutations_used: outcome.permutations_used,
        exact: outcome.exact,
        approximated: outcome.approximated,
        method,
    })
}

pub fn cosine<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y): (f64, f64) = (x.into(), y.into());
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(StatsError::ZeroVector);
    }
    Ok(ab / (aa.sqrt() * bb.sqrt()))
}

fn cosine_scores<V: AsRef<[f32]>>(target: &[f32], attrs: &[V]) -> Result<Vec<f64>, StatsError> {
    attrs.iter().map(|x| cosine(target, x.as_ref())).collect()
}

/// Cosine SC-WEAT association of one target with pleasant vs. unpleasant
/// attribute vectors.
pub fn cosine_association<V: AsRef<[f32]>>(
    target: &[f32],
    pleasant: &[V],
    unpleasant: &[V],
) -> Result<f64, StatsError> {
    check_group("pleasant", pleasant.len(), 1)?;
    check_group("unpleasant", unpleasant.len(), 1)?;
    effect_size(
        &cosine_scores(target, pleasant)?,
        &cosine_scores(target, unpleasant)?,
    )
}

/// Cosine SC-WEAT for every target; `d` is the association and the p-value
/// permutes the attribute-group labels of the cosine scores.
pub fn cosine_scweat<V: AsRef<[f32]>, W: AsRef<[f32]>>(
    targets: &[W],
    pleasant: &[V],
    unpleasant: &[V],
    config: &PermutationConfig,
) -> Result<Vec<EffectSizeResult>, StatsError> {
    check_group("pleasant", pleasant.len(), 1)?;
    check_group("unpleasant", unpleasant.len(), 1)?;
    targets
        .iter()
        .map(|w| {
            let p = cosine_scores(w.as_ref(), pleasant)?;
            let u = cosine_scores(w.as_ref(), unpleasant)?;
            scweat_from_scores(&p, &u, Method::Cosine, config)
        })
        .collect()
}

/// One-sided permutation test: the share of equal-sized relabelings of
/// `a ∪ b` whose mean difference is at least the observed one.
///
/// Enumerates every relabeling when their count fits in `max_exact`,
/// otherwise draws `samples` random relabelings from a seeded generator.
/// The result does not depend on the rayon worker count.
pub fn permutation_test(
    a: &[f64],
    b: &[f64],
    config: &PermutationConfig,
) -> Result<PermutationOutcome, StatsError> {
    check_group("A", a.len(), 1)?;
    check_group("B", b.len(), 1)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let k = a.len();
    let n = pooled.len();
    // At fixed group sizes, mean(A*) - mean(B*) is increasing in sum(A*).
    let observed: f64 = a.iter().sum();
    let slack = 1e-12 * pooled.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
    let threshold = observed - slack;

    let total = binomial(n, k);
    if total <= config.max_exact as u128 {
        let hits = count_subsets_at_least(&pooled, k, threshold);
        return Ok(PermutationOutcome {
            p_value: hits as f64 / total as f64,
            exact: true,
            approximated: false,
            permutations_used: total as u64,
        });
    }

    let samples = config.samples.max(1);
    let blocks = samples.div_ceil(SAMPLE_BLOCK);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(block as u64);
            let draws = SAMPLE_BLOCK.min(samples - block * SAMPLE_BLOCK);
            let mut buf = pooled.clone();
            let mut hits = 0u64;
            for _ in 0..draws {
                // Partial Fisher-Yates: the first k slots are a uniform k-subset.
                for i in 0..k {
                    let j = rng.gen_range(i..n);
                    buf.swap(i, j);
                }
                if buf[..k].iter().sum::<f64>() >= threshold {
                    hits += 1;
                }
            }
            hits
        })
        .sum();

    if hits == 0 {
        return Ok(PermutationOutcome {
            p_value: normal_tail(&pooled, k, observed),
            exact: false,
            approximated: true,
            permutations_used: samples as u64,
        });
    }
    Ok(PermutationOutcome {
        p_value: (hits as f64 + 1.0) / (samples as f64 + 1.0),
        exact: false,
        approximated: false,
        permutations_used: samples as u64,
    })
}

/// Upper-tail probability of `sum(A*) >= observed` under the normal
/// approximation of sampling `k` of the pooled values without replacement.
fn normal_tail(pooled: &[f64], k: usize, observed: f64) -> f64 {
    let n = pooled.len() as f64;
    let k = k as f64;
    let mu = mean(pooled);
    let pop_var = pooled.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    let var = k * (n - k) / (n - 1.0) * pop_var;
    if !(var > 0.0) {
        return 1.0;
    }
    let z = (observed - k * mu) / var.sqrt();
    (0.5 * libm::erfc(z / std::f64::consts::SQRT_2)).clamp(0.0, 1.0)
}

/// Counts k-subsets of `values` whose sum reaches `threshold`.
fn count_subsets_at_least(values: &[f64], k: usize, threshold: f64) -> u64 {
    fn go(values: &[f64], start: usize, left: usize, acc: f64, threshold: f64) -> u64 {
        if left == 0 {
            return u64::from(acc >= threshold);
        }
        let mut hits = 0;
        for i in start..=values.len() - left {
            hits += go(values, i + 1, left - 1, acc + values[i], threshold);
        }
        hits
    }
    go(values, 0, k, 0.0, threshold)
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) after the multiplication.
        match acc.checked_mul(n - i) {
            Some(v) => acc = v / (i + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// Pearson product-moment correlation, clamped to [-1, 1].
pub fn pearson_rho(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewSamples {
            group: "x",
            count: x.len(),
            min: 3,
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(StatsError::ZeroVariance("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// How a lexicon word's valence association is measured.
pub enum Scorer<'a> {
    Projection(&'a ValenceDirection),
    Cosine {
        pleasant: &'a EmbeddingSet,
        unpleasant: &'a EmbeddingSet,
    },
}

impl Scorer<'_> {
    pub fn method(&self) -> Method {
        match self {
            Scorer::Projection(_) => Method::Projection,
            Scorer::Cosine { .. } => Method::Cosine,
        }
    }

    pub fn score(&self, v: &[f32]) -> Result<f64, StatsError> {
        match self {
            Scorer::Projection(u) => Ok(u.project(v)?),
            Scorer::Cosine {
                pleasant,
                unpleasant,
            } => {
                let p: Vec<&[f32]> = pleasant.records().iter().map(|r| r.vector.as_slice()).collect();
                let u: Vec<&[f32]> = unpleasant.records().iter().map(|r| r.vector.as_slice()).collect();
                cosine_association(v, &p, &u)
            }
        }
    }
}

/// Correlates human valence ratings with embedding associations.
///
/// Words missing from `embeddings` or listed in `exclude` are skipped and
/// reported.
pub fn valnorm(
    lexicon: &[(String, f64)],
    embeddings: &EmbeddingSet,
    scorer: &Scorer<'_>,
    exclude: &BTreeSet<String>,
) -> Result<ValNormReport, StatsError> {
    let index = embeddings.index();
    let mut ratings = Vec::with_capacity(lexicon.len());
    let mut assoc = Vec::with_capacity(lexicon.len());
    let mut missing = Vec::new();
    let mut excluded = Vec::new();
    for (word, rating) in lexicon {
        if exclude.contains(word) {
            excluded.push(word.clone());
            continue;
        }
        match index.get(word.as_str()) {
            Some(v) => {
                ratings.push(*rating);
                assoc.push(scorer.score(v)?);
            }
            None => missing.push(word.clone()),
        }
    }
    if ratings.len() < 3 {
        return Err(StatsError::TooFewWords {
            found: ratings.len(),
        });
    }
    Ok(ValNormReport {
        score: ValNormScore {
            layer_index: embeddings.layer_index(),
            rho: pearson_rho(&ratings, &assoc)?,
            n_words: ratings.len(),
            method: scorer.method(),
        },
        missing,
        excluded,
    })
}

/// Ranks contexts by the projection of their target embedding and reports
/// category occurrence in the top and bottom `q` fraction.
///
/// Ties are broken by ascending context id.
pub fn rank_contexts<V: AsRef<[f32]>>(
    contexts: &[(SentenceContext, V)],
    direction: &ValenceDirection,
    q: f64,
) -> Result<DecileReport, StatsError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(StatsError::InvalidFraction(q));
    }
    if contexts.is_empty() {
        return Err(StatsError::TooFewContexts {
            available: 0,
            q,
            needed: 1,
        });
    }
    let total = contexts.len();
    let subset_size = ((q * total as f64) + 1e-9).floor() as usize;
    if subset_size == 0 {
        return Err(StatsError::TooFewContexts {
            available: total,
            q,
            needed: ((1.0 / q) - 1e-9).ceil() as usize,
        });
    }

    let mut scored = contexts
        .iter()
        .map(|(ctx, v)| Ok((ctx, direction.project(v.as_ref())?)))
        .collect::<Result<Vec<_>, StatsError>>()?;
    scored.sort_by(|(ca, pa), (cb, pb)| {
        pb.total_cmp(pa).then_with(|| ca.context_id.cmp(&cb.context_id))
    });

    let categories: BTreeSet<&str> = contexts
        .iter()
        .flat_map(|(c, _)| c.assignment.values().map(String::as_str))
        .collect();
    let share = |subset: &[(&SentenceContext, f64)]| {
        let mut counts: BTreeMap<String, f64> =
            categories.iter().map(|c| (c.to_string(), 0.0)).collect();
        for (ctx, _) in subset {
            for cat in ctx.assignment.values() {
                *counts.get_mut(cat.as_str()).expect("category collected above") += 1.0;
            }
        }
        counts
            .values_mut()
            .for_each(|c| *c = 100.0 * *c / subset.len() as f64);
        counts
    };

    Ok(DecileReport {
        q,
        total,
        subset_size,
        top: share(&scored[..subset_size]),
        bottom: share(&scored[total - subset_size..]),
        ranked: scored
            .iter()
            .map(|(ctx, p)| RankedContext {
                context_id: ctx.context_id.clone(),
                text: ctx.text.clone(),
                projection: *p,
            })
            .collect(),
    })
}

fn check_group(group: &'static str, count: usize, min: usize) -> Result<(), StatsError> {
    if count < min {
        return Err(StatsError::TooFewSamples { group, count, min });
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}
