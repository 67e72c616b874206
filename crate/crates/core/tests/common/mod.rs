//! Independent reference computations for the numerical tests. Nothing here
//! calls into the solver or statistics code it is checking.

#![allow(dead_code)]

/// Half the distance between the convex hulls of two separable 2-D point
/// sets: the hard-margin SVM's geometric margin.
///
/// The closest pair of points of two disjoint convex polygons is realized
/// between a vertex of one and an edge (or vertex) of the other; every such
/// edge is a segment between two input points, so brute force over all
/// point/segment pairs is exact.
pub fn hull_margin_2d(pos: &[[f64; 2]], neg: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    for (a, b) in [(pos, neg), (neg, pos)] {
        for p in a {
            for i in 0..b.len() {
                for j in i..b.len() {
                    best = best.min(point_segment_distance(*p, b[i], b[j]));
                }
            }
        }
    }
    best / 2.0
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

/// One-sided permutation p-value by enumerating every bitmask of the pooled
/// scores with `a.len()` bits set and comparing mean differences directly.
pub fn brute_force_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    assert!(n <= 20, "brute force oracle is for small n");
    let k = a.len();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let observed = mean(a) - mean(b);
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let (mut xa, mut xb) = (Vec::new(), Vec::new());
        for (i, x) in pooled.iter().enumerate() {
            if mask >> i & 1 == 1 {
                xa.push(*x);
            } else {
                xb.push(*x);
            }
        }
        total += 1;
        if mean(&xa) - mean(&xb) >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

/// Straight-line reimplementation of the cosine SC-WEAT association.
pub fn brute_cosine_association(w: &[f64], pleasant: &[Vec<f64>], unpleasant: &[Vec<f64>]) -> f64 {
    fn cos(a: &[f64], b: &[f64]) -> f64 {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for i in 0..a.len() {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        dot / (na.sqrt() * nb.sqrt())
    }
    let p: Vec<f64> = pleasant.iter().map(|x| cos(w, x)).collect();
    let u: Vec<f64> = unpleasant.iter().map(|x| cos(w, x)).collect();
    let all: Vec<f64> = p.iter().chain(&u).copied().collect();
    let m = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mu = m(&all);
    let var = all.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (all.len() - 1) as f64;
    (m(&p) - m(&u)) / var.sqrt()
}

/// Simple deterministic generator for fixtures (64-bit LCG, top bits).
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// A separable 2-D instance: each class in its own half-plane with a gap of
/// at least `2 * half_gap` along a random direction. Points are exactly
/// representable as f32.
pub fn separable_instance(rng: &mut Lcg, per_class: usize, half_gap: f64) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let angle = rng.range(0.0, std::f64::consts::TAU);
    let (c, s) = (angle.cos(), angle.sin());
    let mut make = |sign: f64| -> Vec<[f64; 2]> {
        (0..per_class)
            .map(|_| {
                let along = sign * (half_gap + rng.range(0.0, 4.0));
                let across = rng.range(-4.0, 4.0);
                let x = (along * c - across * s) as f32 as f64;
                let y = (along * s + across * c) as f32 as f64;
                [x, y]
            })
            .collect()
    };
    let pos = make(1.0);
    let neg = make(-1.0);
    (pos, neg)
}

pub fn brute_cosine_assoc_vec(w: &[f64], pleasant: &[Vec<f64>], unpleasant: &[Vec<f64>]) -> f64 {
    brute_cosine_association(w, pleasant, unpleasant)
}
