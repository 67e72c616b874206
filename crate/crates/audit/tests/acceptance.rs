//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits non-zero on failure only when `ACCEPTANCE_STRICT=1` is set.

#[path = "../../core/tests/common/mod.rs"]
mod common;
mod fixtures;

use std::collections::BTreeSet;
use std::fs;
use std::time::Instant;

use common::{brute_force_p, hull_margin_2d, separable_instance, Lcg};
use valence_core::association_stats::effect_size;
use valence_core::context_gen::PERMUTATION_BIASES;
use valence_core::{
    generate_combinations, generate_permutations, pearson_rho, permutation_test, projection_scweat,
    train_valence_direction, valnorm, BiasTaxonomy, EmbeddingRecord, EmbeddingSet, GenOptions,
    PermutationConfig, Scorer, StimulusSet, SvcConfig, ValenceDirection,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok { Ok(detail) } else { Err(detail) }
}

fn combinatorics() -> Outcome {
    let start = Instant::now();
    let taxonomy = BiasTaxonomy::shipped();
    let combos = generate_combinations(&taxonomy, &GenOptions::default()).map_err(|e| e.to_string())?;
    let pairs = taxonomy.select(&PERMUTATION_BIASES).map_err(|e| e.to_string())?;
    let perms = generate_permutations(&pairs, &GenOptions::default(), false).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut bad = Vec::new();
    for p in taxonomy.pairs() {
        for cat in p.categories() {
            let n = combos.iter().filter(|c| c.contains(cat)).count();
            if n != 2048 {
                bad.push(format!("{cat}: {n} combinations"));
            }
        }
    }
    for p in &pairs {
        for cat in p.categories() {
            let n = perms.iter().filter(|c| c.contains(cat)).count();
            if n != 1920 {
                bad.push(format!("{cat}: {n} permutations"));
            }
            for pos in 0..5 {
                let m = perms.iter().filter(|c| c.order[pos] == cat).count();
                if m != 384 {
                    bad.push(format!("{cat}@{pos}: {m}"));
                }
            }
        }
    }
    let categories = taxonomy.pairs().len() * 2;
    check(
        combos.len() == 4096 && perms.len() == 3840 && categories == 24 && bad.is_empty() && elapsed < 1.0,
        format!(
            "{} combinations over {categories} categories, {} permutations, {} count mismatches, {elapsed:.3}s",
            combos.len(),
            perms.len(),
            bad.len()
        ),
    )
}

fn projection() -> Outcome {
    let u = ValenceDirection::single(vec![2.0, 0.0]).unwrap();
    let hand = u.project(&[3.0f64, 4.0]).unwrap();
    let mut rng = Lcg(5);
    let dim = 16;
    let dirs: Vec<f64> = (0..dim).map(|_| rng.range(-2.0, 2.0)).collect();
    let u16 = ValenceDirection::single(dirs.clone()).unwrap();
    let uu: f64 = dirs.iter().map(|x| x * x).sum();
    let (mut lin_err, mut orth_err) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let v: Vec<f64> = (0..dim).map(|_| rng.range(-5.0, 5.0)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.range(-5.0, 5.0)).collect();
        let (a, b) = (rng.range(-3.0, 3.0), rng.range(-3.0, 3.0));
        let mix: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let lhs = u16.project(&mix).unwrap();
        let rhs = a * u16.project(&v).unwrap() + b * u16.project(&w).unwrap();
        lin_err = lin_err.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        let vu: f64 = v.iter().zip(&dirs).map(|(x, y)| x * y).sum();
        let orth: Vec<f64> = v.iter().zip(&dirs).map(|(x, y)| x - vu / uu * y).collect();
        orth_err = orth_err.max(u16.project(&orth).unwrap().abs());
    }
    check(
        (hand - 1.5).abs() <= 1e-12 && lin_err <= 1e-9 && orth_err <= 1e-9,
        format!("(3,4) onto (2,0) = {hand}; max linearity error {lin_err:.2e}; max orthogonal projection {orth_err:.2e}"),
    )
}

fn scweat() -> Outcome {
    let u = ValenceDirection::single(vec![1.0, 0.0]).unwrap();
    let a = [[1.0f32, 0.3], [2.0, -0.7]];
    let b = [[-1.0f32, 0.1], [-2.0, 0.4]];
    let d = projection_scweat(&a, &b, &u, &PermutationConfig::default()).map_err(|e| e.to_string())?.d;

    let mut rng = Lcg(23);
    let (mut antisym_bad, mut scale_err, mut shift_err) = (0, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let dim = 4;
        let group = |rng: &mut Lcg, n: usize, off: f64| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..dim).map(|_| rng.range(-1.0, 1.0) + off).collect()).collect()
        };
        let na = 2 + (rng.next_f64() * 10.0) as usize;
        let nb = 2 + (rng.next_f64() * 10.0) as usize;
        let off = rng.range(-0.5, 0.5);
        let ga = group(&mut rng, na, off);
        let gb = group(&mut rng, nb, 0.0);
        let dirs: Vec<f64> = (0..dim).map(|_| rng.range(-2.0, 2.0)).collect();
        let dir = ValenceDirection::single(dirs).unwrap();
        let sa = dir.project_many(&ga).unwrap();
        let sb = dir.project_many(&gb).unwrap();
        let base = effect_size(&sa, &sb).unwrap();
        if effect_size(&sb, &sa).unwrap() != -base {
            antisym_bad += 1;
        }
        let c = rng.range(0.01, 100.0);
        for factor in [c, -c] {
            let scaled = dir.scaled(factor).unwrap();
            let ds = effect_size(&scaled.project_many(&ga).unwrap(), &scaled.project_many(&gb).unwrap()).unwrap();
            scale_err = scale_err.max((ds - factor.signum() * base).abs() / base.abs());
        }
        let t: Vec<f64> = (0..dim).map(|_| rng.range(-4.0, 4.0)).collect();
        let shift = |g: &[Vec<f64>]| -> Vec<Vec<f64>> {
            g.iter().map(|v| v.iter().zip(&t).map(|(x, y)| x + y).collect()).collect()
        };
        let dt = effect_size(&dir.project_many(&shift(&ga)).unwrap(), &dir.project_many(&shift(&gb)).unwrap()).unwrap();
        shift_err = shift_err.max((dt - base).abs() / base.abs());
    }
    check(
        (d - 1.6432).abs() <= 1e-4 && antisym_bad == 0 && scale_err <= 1e-6 && shift_err <= 1e-6,
        format!(
            "d = {d:.6}; antisymmetry violations {antisym_bad}/200; max scaling error {scale_err:.2e}; max translation error {shift_err:.2e}"
        ),
    )
}

fn permutation() -> Outcome {
    let exact_cfg = PermutationConfig { max_exact: u64::MAX, samples: 0, seed: 0 };
    let mut rng = Lcg(3);
    let (mut cases, mut mismatches) = (0, 0);
    for n in 2..=12usize {
        for k in 1..n {
            for integer in [true, false] {
                let scores: Vec<f64> = (0..n)
                    .map(|_| {
                        let x = rng.range(-3.0, 3.0);
                        if integer { x.round() } else { x }
                    })
                    .collect();
                let (a, b) = scores.split_at(k);
                let got = permutation_test(a, b, &exact_cfg).unwrap();
                cases += 1;
                if !got.exact || (got.p_value - brute_force_p(a, b)).abs() > 1e-12 {
                    mismatches += 1;
                }
            }
        }
    }
    let sixth = permutation_test(&[2.0, 3.0], &[0.0, 1.0], &exact_cfg).unwrap().p_value;

    // The same 100 fixtures and seeds as the library's calibration test.
    let mut rng = Lcg(11);
    let samples = 20_000;
    let mut within = 0;
    let mut worst = (0u64, 0.0f64);
    for fixture in 0..100u64 {
        let n = 6 + (fixture % 7) as usize;
        let k = n / 2;
        let shift = rng.range(0.0, 1.5);
        let scores: Vec<f64> = (0..n)
            .map(|i| rng.range(0.0, 2.0) + if i < k { shift } else { 0.0 })
            .collect();
        let (a, b) = scores.split_at(k);
        let exact = brute_force_p(a, b);
        let got = permutation_test(a, b, &PermutationConfig { max_exact: 0, samples, seed: fixture }).unwrap();
        let se = (exact * (1.0 - exact) / samples as f64).sqrt().max(1.0 / samples as f64);
        let z = (got.p_value - exact).abs() / se;
        if z <= 3.0 {
            within += 1;
        }
        if z > worst.1 {
            worst = (fixture, z);
        }
    }
    let big = permutation_test(&[2.0, 3.0], &[0.0, 1.0], &PermutationConfig { max_exact: 0, samples: 100_000, seed: 2024 }).unwrap();
    let big_se = (5.0f64 / 36.0 / 1e5).sqrt();
    let big_ok = (big.p_value - 1.0 / 6.0).abs() <= 3.0 * big_se;
    check(
        mismatches == 0 && sixth == 1.0 / 6.0 && within == 100 && big_ok,
        format!(
            "exact matches brute force on {}/{cases} fixtures; p({{2,3}},{{0,1}}) = {sixth}; \
             sampled within 3 SE on {within}/100 fixtures (largest {:.2} SE, fixture {}); \
             1e5-draw estimate {:.5}",
            cases - mismatches,
            worst.1,
            worst.0,
            big.p_value
        ),
    )
}

fn to_set(points: &[[f64; 2]], prefix: &str) -> EmbeddingSet {
    EmbeddingSet::new(
        "fixture",
        0,
        2,
        points
            .iter()
            .enumerate()
            .map(|(i, p)| EmbeddingRecord::new(format!("{prefix}{i}"), vec![p[0] as f32, p[1] as f32]))
            .collect(),
    )
    .unwrap()
}

fn max_margin() -> Outcome {
    let mut rng = Lcg(17);
    let (mut worst, mut orient_bad, mut swap_bad) = (0.0f64, 0, 0);
    for case in 0..20 {
        let per_class = 3 + case % 6;
        let half_gap = rng.range(1.0, 3.0);
        let (pos, neg) = separable_instance(&mut rng, per_class, half_gap);
        let stimuli = StimulusSet::new(to_set(&pos, "p"), to_set(&neg, "n")).unwrap();
        let dir = train_valence_direction(&stimuli, &SvcConfig::default()).map_err(|e| e.to_string())?;
        let oracle = hull_margin_2d(&pos, &neg);
        worst = worst.max((dir.training().unwrap().margin - oracle).abs() / oracle);
        if !(dir.orientation_gap(&stimuli).unwrap() > 0.0) {
            orient_bad += 1;
        }
        let swapped = train_valence_direction(&stimuli.swapped(), &SvcConfig::default()).map_err(|e| e.to_string())?;
        if !(swapped.orientation_gap(&stimuli.swapped()).unwrap() > 0.0) {
            orient_bad += 1;
        }
        let neg_dir: Vec<f64> = dir.directions()[0].iter().map(|x| -x).collect();
        if swapped.directions()[0] != neg_dir {
            swap_bad += 1;
        }
    }
    check(
        worst < 0.01 && orient_bad == 0 && swap_bad == 0,
        format!("max relative margin error {worst:.2e}; orientation failures {orient_bad}/40; inexact label swaps {swap_bad}/20"),
    )
}

fn valnorm_plumbing() -> Outcome {
    let u = ValenceDirection::single(vec![2.0, 0.0, 0.0]).unwrap();
    let mut rng = Lcg(41);
    let lexicon: Vec<(String, f64)> = (0..50).map(|i| (format!("w{i}"), rng.range(1.0, 9.0))).collect();
    // S(v) = 2 v0 / 4, so v0 = 2 * rating projects to the rating.
    let records = lexicon
        .iter()
        .map(|(w, r)| EmbeddingRecord::new(w.clone(), vec![(2.0 * r) as f32, 0.5, -0.5]))
        .collect();
    let set = EmbeddingSet::new("m", 0, 3, records).unwrap();
    let rho = valnorm(&lexicon, &set, &Scorer::Projection(&u), &BTreeSet::new())
        .map_err(|e| e.to_string())?
        .score
        .rho;
    let hand = pearson_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 5.0]).unwrap();
    check(
        (rho - 1.0).abs() <= 1e-9 && (hand - 0.8528).abs() <= 1e-4,
        format!("synthetic rho = {rho}; Pearson on the 4-point fixture = {hand:.5} (expected 0.8528)"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("in");
    fs::create_dir_all(&input).map_err(|e| e.to_string())?;
    fixtures::write_pipeline_inputs(&input);
    fixtures::run_pipeline(&input, &dir.path().join("run1"));
    fixtures::run_pipeline(&input, &dir.path().join("run2"));
    let a = fixtures::snapshot(&dir.path().join("run1"));
    let b = fixtures::snapshot(&dir.path().join("run2"));
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        a.len() == b.len() && !a.is_empty() && differing.is_empty(),
        format!("{} artifacts per run, {} differ {:?}", a.len(), differing.len(), differing),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("combinatorics", combinatorics),
        ("projection correctness", projection),
        ("SC-WEAT oracle equivalence", scweat),
        ("permutation test", permutation),
        ("max-margin learner", max_margin),
        ("ValNorm plumbing", valnorm_plumbing),
        ("end-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
