//! Valence direction learning and scalar projection.
//!
//! The direction is the weight vector of a soft-margin linear SVC trained to
//! separate pleasant from unpleasant stimulus embeddings. Projection of a
//! vector `v` onto a subspace spanned by orthogonal `u_1..u_n` is
//! `sum_i (v . u_i) / (u_i . u_i)`; the intercept plays no part in it.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::embedding_store::{
    read_embeddings_file, write_embeddings_file, EmbeddingRecord, EmbeddingSet, StoreError,
};

/// Record id of the first direction in a serialized direction file.
pub const DIRECTION_ID: &str = "valence-direction";

const ORTHOGONALITY_TOLERANCE: f64 = 1e-6;
const TAU: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum SubspaceError {
    #[error("vector has dimension {actual}, subspace has {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("a subspace needs at least one direction")]
    Empty,
    #[error("direction {0} is the zero vector")]
    ZeroDirection(usize),
    #[error("directions {0} and {1} are not orthogonal")]
    NotOrthogonal(usize, usize),
    #[error("{class} stimuli have {count} records, at least 2 are required")]
    TooFewStimuli { class: &'static str, count: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("solver did not converge within {iterations} iterations (KKT gap {gap:.3e})")]
    NotConverged {
        iterations: usize,
        gap: f64,
        /// Best iterate at exhaustion, when it is a usable direction.
        partial: Option<Box<ValenceDirection>>,
    },
    #[error("learned direction does not separate the class means")]
    Degenerate,
    #[error("direction file: {0}")]
    Store(#[from] StoreError),
    #[error("direction file is malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvcConfig {
    /// Soft-margin penalty `C`.
    pub c: f64,
    /// Stopping threshold on the maximal KKT violation.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvcConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-4,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub c: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Geometric margin `1 / ||w||`.
    pub margin: f64,
    /// Fraction of training stimuli on the correct side of `w.x + b = 0`.
    pub training_accuracy: f64,
}

/// Learned separating-subspace coefficients plus training diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ValenceDirection {
    directions: Vec<Vec<f64>>,
    norms_sq: Vec<f64>,
    intercept: f64,
    training: Option<TrainingMeta>,
}

impl ValenceDirection {
    pub fn new(directions: Vec<Vec<f64>>, intercept: f64) -> Result<Self, SubspaceError> {
        let Some(first) = directions.first() else {
            return Err(SubspaceError::Empty);
        };
        let dim = first.len();
        let mut norms_sq = Vec::with_capacity(directions.len());
        for (i, u) in directions.iter().enumerate() {
            if u.len() != dim {
                return Err(SubspaceError::DimensionMismatch {
                    expected: dim,
                    actual: u.len(),
                });
            }
            let n = dot(u, u);
            if !(n > 0.0) {
                return Err(SubspaceError::ZeroDirection(i));
            }
            norms_sq.push(n);
        }
        for i in 0..directions.len() {
            for j in i + 1..directions.len() {
                let cos = dot(&directions[i], &directions[j]) / (norms_sq[i] * norms_sq[j]).sqrt();
                if cos.abs() > ORTHOGONALITY_TOLERANCE {
                    return Err(SubspaceError::NotOrthogonal(i, j));
                }
            }
        }
        Ok(Self {
            directions,
            norms_sq,
            intercept,
            training: None,
        })
    }

    pub fn single(direction: Vec<f64>) -> Result<Self, SubspaceError> {
        Self::new(vec![direction], 0.0)
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn dimension(&self) -> usize {
        self.directions[0].len()
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn training(&self) -> Option<&TrainingMeta> {
        self.training.as_ref()
    }

    /// Scalar projection `S(v, U)`; positive values lean pleasant.
    pub fn project<T: Copy + Into<f64>>(&self, v: &[T]) -> Result<f64, SubspaceError> {
        if v.len() != self.dimension() {
            return Err(SubspaceError::DimensionMismatch {
                expected: self.dimension(),
                actual: v.len(),
            });
        }
        Ok(self
            .directions
            .iter()
            .zip(&self.norms_sq)
            .map(|(u, n)| {
                let d: f64 = u.iter().zip(v).map(|(a, &b)| a * b.into()).sum();
                d / n
            })
            .sum())
    }

    pub fn project_many<T: Copy + Into<f64>, V: AsRef<[T]>>(
        &self,
        vectors: &[V],
    ) -> Result<Vec<f64>, SubspaceError> {
        vectors.iter().map(|v| self.project(v.as_ref())).collect()
    }

    /// Returns a copy with every direction multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, SubspaceError> {
        let directions = self
            .directions
            .iter()
            .map(|u| u.iter().map(|x| x * factor).collect())
            .collect();
        Self::new(directions, self.intercept * factor)
    }

    /// `mean S(pleasant) - mean S(unpleasant)`; positive when the
    /// orientation invariant holds.
    pub fn orientation_gap(&self, stimuli: &StimulusSet) -> Result<f64, SubspaceError> {
        let p = mean(&self.project_set(&stimuli.pleasant)?);
        let n = mean(&self.project_set(&stimuli.unpleasant)?);
        Ok(p - n)
    }

    fn project_set(&self, set: &EmbeddingSet) -> Result<Vec<f64>, SubspaceError> {
        set.records().iter().map(|r| self.project(&r.vector)).collect()
    }

    /// Single- or multi-record VEMB representation. Coefficients are stored
    /// as 32-bit floats; the intercept and training metadata go in the
    /// metadata attributes.
    pub fn to_embedding_set(&self, model_name: &str, layer_index: u32) -> EmbeddingSet {
        let records = self
            .directions
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let id = if i == 0 {
                    DIRECTION_ID.to_string()
                } else {
                    format!("{DIRECTION_ID}.{i}")
                };
                EmbeddingRecord::new(id, u.iter().map(|&x| x as f32).collect())
            })
            .collect();
        let set = EmbeddingSet::new(model_name, layer_index, self.dimension(), records)
            .expect("direction components are finite and share one dimension")
            .with_attribute("kind", json!("valence-direction"))
            .with_attribute("intercept", json!(self.intercept));
        match &self.training {
            Some(meta) => set.with_attribute(
                "training_meta",
                serde_json::to_value(meta).expect("training metadata serializes"),
            ),
            None => set,
        }
    }

    pub fn from_embedding_set(set: &EmbeddingSet) -> Result<Self, SubspaceError> {
        if set.is_empty() {
            return Err(SubspaceError::Malformed("no direction records".into()));
        }
        if set.records()[0].id != DIRECTION_ID {
            return Err(SubspaceError::Malformed(format!(
                "first record is {:?}, expected {DIRECTION_ID:?}",
                set.records()[0].id
            )));
        }
        let directions = set
            .records()
            .iter()
            .map(|r| r.vector.iter().map(|&x| x as f64).collect())
            .collect();
        let intercept = set
            .attribute("intercept")
            .and_then(|v| v.as_f64())
            .unwrap_or(0.0);
        let mut out = Self::new(directions, intercept)?;
        if let Some(meta) = set.attribute("training_meta") {
            out.training = Some(
                serde_json::from_value(meta.clone())
                    .map_err(|e| SubspaceError::Malformed(e.to_string()))?,
            );
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path, model_name: &str, layer_index: u32) -> Result<u64, SubspaceError> {
        Ok(write_embeddings_file(
            &self.to_embedding_set(model_name, layer_index),
            path,
        )?)
    }

    pub fn load(path: &Path) -> Result<Self, SubspaceError> {
        Self::from_embedding_set(&read_embeddings_file(path)?)
    }
}

/// Pleasant and unpleasant stimulus embeddings sharing one dimension.
#[derive(Debug, Clone)]
pub struct StimulusSet {
    pub pleasant: EmbeddingSet,
    pub unpleasant: EmbeddingSet,
}

impl StimulusSet {
    pub fn new(pleasant: EmbeddingSet, unpleasant: EmbeddingSet) -> Result<Self, SubspaceError> {
        if pleasant.dimension() != unpleasant.dimension() {
            return Err(SubspaceError::DimensionMismatch {
                expected: pleasant.dimension(),
                actual: unpleasant.dimension(),
            });
        }
        Ok(Self {
            pleasant,
            unpleasant,
        })
    }

    pub fn swapped(&self) -> Self {
        Self {
            pleasant: self.unpleasant.clone(),
            unpleasant: self.pleasant.clone(),
        }
    }
}

/// Trains the max-margin valence direction.
///
/// The problem is always solved with the two classes in a canonical order
/// (by bitwise content), so swapping the class roles yields the exact
/// negation of the direction. Orientation is then fixed so pleasant stimuli
/// project higher on average.
pub fn train_valence_direction(
    stimuli: &StimulusSet,
    config: &SvcConfig,
) -> Result<ValenceDirection, SubspaceError> {
    if !(config.c > 0.0) || !config.c.is_finite() {
        return Err(SubspaceError::InvalidConfig(format!("C must be positive, got {}", config.c)));
    }
    if !(config.tolerance > 0.0) {
        return Err(SubspaceError::InvalidConfig("tolerance must be positive".into()));
    }
    for (class, set) in [("pleasant", &stimuli.pleasant), ("unpleasant", &stimuli.unpleasant)] {
        if set.len() < 2 {
            return Err(SubspaceError::TooFewStimuli {
                class,
                count: set.len(),
            });
        }
    }
    if stimuli.pleasant.dimension() != stimuli.unpleasant.dimension() {
        return Err(SubspaceError::DimensionMismatch {
            expected: stimuli.pleasant.dimension(),
            actual: stimuli.unpleasant.dimension(),
        });
    }

    let pleasant_first =
        canonical_cmp(&stimuli.pleasant, &stimuli.unpleasant) != Ordering::Greater;
    let (first, second) = if pleasant_first {
        (&stimuli.pleasant, &stimuli.unpleasant)
    } else {
        (&stimuli.unpleasant, &stimuli.pleasant)
    };

    let rows: Vec<Vec<f64>> = first
        .records()
        .iter()
        .chain(second.records())
        .map(|r| r.vector.iter().map(|&x| x as f64).collect())
        .collect();
    let labels: Vec<f64> = std::iter::repeat_n(1.0, first.len())
        .chain(std::iter::repeat_n(-1.0, second.len()))
        .collect();

    let solution = smo(&rows, &labels, config);
    if !solution.converged {
        let partial = finish(stimuli, config, &solution, pleasant_first).ok().map(Box::new);
        return Err(SubspaceError::NotConverged {
            iterations: solution.iterations,
            gap: solution.gap,
            partial,
        });
    }
    finish(stimuli, config, &solution, pleasant_first)
}

fn finish(
    stimuli: &StimulusSet,
    config: &SvcConfig,
    solution: &SmoSolution,
    pleasant_first: bool,
) -> Result<ValenceDirection, SubspaceError> {
    let sign = if pleasant_first { 1.0 } else { -1.0 };
    let mut w: Vec<f64> = solution.w.iter().map(|x| x * sign).collect();
    let mut b = solution.b * sign;

    let norm = dot(&w, &w).sqrt();
    if !(norm > 0.0) {
        return Err(SubspaceError::Degenerate);
    }
    let mut direction = ValenceDirection::new(vec![w.clone()], b)?;
    let gap = direction.orientation_gap(stimuli)?;
    if gap == 0.0 || !gap.is_finite() {
        return Err(SubspaceError::Degenerate);
    }
    if gap < 0.0 {
        w.iter_mut().for_each(|x| *x = -*x);
        b = -b;
        direction = ValenceDirection::new(vec![w.clone()], b)?;
    }

    let correct = stimuli
        .pleasant
        .records()
        .iter()
        .filter(|r| decision(&w, b, &r.vector) > 0.0)
        .count()
        + stimuli
            .unpleasant
            .records()
            .iter()
            .filter(|r| decision(&w, b, &r.vector) < 0.0)
            .count();
    direction.training = Some(TrainingMeta {
        c: config.c,
        iterations: solution.iterations,
        converged: solution.converged,
        margin: 1.0 / norm,
        training_accuracy: correct as f64 / (stimuli.pleasant.len() + stimuli.unpleasant.len()) as f64,
    });
    Ok(direction)
}

fn decision(w: &[f64], b: f64, x: &[f32]) -> f64 {
    w.iter().zip(x).map(|(a, &c)| a * c as f64).sum::<f64>() + b
}

fn canonical_cmp(a: &EmbeddingSet, b: &EmbeddingSet) -> Ordering {
    let bits = |s: &EmbeddingSet| {
        s.records()
            .iter()
            .flat_map(|r| r.vector.iter().map(|x| x.to_bits()))
            .collect::<Vec<u32>>()
    };
    bits(a).cmp(&bits(b)).then(a.len().cmp(&b.len()))
}

struct SmoSolution {
    w: Vec<f64>,
    b: f64,
    iterations: usize,
    converged: bool,
    gap: f64,
}

/// Sequential minimal optimization for the C-SVC dual with a linear kernel
/// and second-order working-set selection:
///
/// min 1/2 a'Qa - e'a  s.t.  y'a = 0, 0 <= a_i <= C,  Q_ij = y_i y_j x_i.x_j
fn smo(rows: &[Vec<f64>], y: &[f64], config: &SvcConfig) -> SmoSolution {
    let n = rows.len();
    let c = config.c;
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = dot(&rows[i], &rows[j]);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }
    let k = |i: usize, j: usize| kernel[i * n + j];
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[i * n + j];

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let mut gap = f64::INFINITY;

    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    while iterations < config.max_iterations {
        // i: maximal violator in I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut sel_i = None;
        for t in 0..n {
            let yg = -y[t] * grad[t];
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && yg >= gmax {
                gmax = yg;
                sel_i = Some(t);
            }
        }
        // j: second-order choice in I_low.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut sel_j = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = sel_i {
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !in_low {
                    continue;
                }
                let yg = y[t] * grad[t];
                if yg >= gmax2 {
                    gmax2 = yg;
                }
                let grad_diff = gmax + yg;
                if grad_diff > 0.0 {
                    let mut quad = k(i, i) + k(t, t) - 2.0 * k(i, t);
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj <= obj_min {
                        obj_min = obj;
                        sel_j = Some(t);
                    }
                }
            }
        }
        gap = gmax + gmax2;
        let (Some(i), Some(j)) = (sel_i, sel_j) else {
            converged = true;
            break;
        };
        if gap < config.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = k(i, i) + k(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = k(i, i) + k(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }

    // Offset from free support vectors, else midpoint of the feasible range.
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut free_sum = 0.0;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    };

    let dim = rows.first().map_or(0, Vec::len);
    let mut w = vec![0.0; dim];
    for t in 0..n {
        if alpha[t] != 0.0 {
            let coef = alpha[t] * y[t];
            w.iter_mut().zip(&rows[t]).for_each(|(wk, xk)| *wk += coef * xk);
        }
    }
    SmoSolution {
        w,
        b: -rho,
        iterations,
        converged,
        gap,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
