//! Rank statistics against brute-force references that share no code with the
//! library: O(n^2) counting ranks and O(n^2) pair enumeration.

use gvl_core::metrics::{fractional_ranks, kendall, spearman, voc, RankMethod};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let cov = n * sxy - sx * sy;
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx <= 1e-9 || vy <= 1e-9 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

fn brute_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    brute_pearson(&brute_ranks(x), &brute_ranks(y))
}

fn brute_kendall_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut conc, mut disc, mut tie_x_only, mut tie_y_only) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).signum() * if x[i] == x[j] { 0.0 } else { 1.0 };
            let dy = (y[i] - y[j]).signum() * if y[i] == y[j] { 0.0 } else { 1.0 };
            match (dx == 0.0, dy == 0.0) {
                (true, true) => {}
                (true, false) => tie_x_only += 1,
                (false, true) => tie_y_only += 1,
                (false, false) if dx == dy => conc += 1,
                (false, false) => disc += 1,
            }
        }
    }
    let a = (conc + disc + tie_y_only) as f64;
    let b = (conc + disc + tie_x_only) as f64;
    if a == 0.0 || b == 0.0 {
        return None;
    }
    Some((conc - disc) as f64 / (a * b).sqrt())
}

fn random_vector(rng: &mut ChaCha8Rng, len: usize, ties: bool) -> Vec<f64> {
    (0..len)
        .map(|_| {
            if ties {
                f64::from(rng.random_range(0..4u8)) * 25.0
            } else {
                rng.random_range(0.0..100.0)
            }
        })
        .collect()
}

#[test]
fn ranks_match_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..200 {
        let x = random_vector(&mut rng, 50, trial % 2 == 0);
        assert_eq!(fractional_ranks(&x).unwrap(), brute_ranks(&x));
    }
}

#[test]
fn correlations_match_oracles_on_1000_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..1000 {
        let len = rng.random_range(2..=20);
        let ties = trial % 2 == 1;
        let x = random_vector(&mut rng, len, ties);
        let y = random_vector(&mut rng, len, ties && trial % 4 == 1);
        let s = spearman(&x, &y).unwrap();
        match brute_spearman(&x, &y) {
            Some(expected) => assert!((s.value - expected).abs() <= 1e-12, "{x:?} {y:?}"),
            None => assert!(s.degenerate && s.value == 0.0),
        }
        let k = kendall(&x, &y).unwrap();
        match brute_kendall_b(&x, &y) {
            Some(expected) => assert!((k.value - expected).abs() <= 1e-12, "{x:?} {y:?}"),
            None => assert!(k.degenerate && k.value == 0.0),
        }
    }
}

#[test]
fn kendall_hand_example() {
    // pairs (1,2) concordant, (1,3) concordant, (2,3) discordant
    let k = kendall(&[10.0, 30.0, 20.0], &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(Some(k.value), brute_kendall_b(&[10.0, 30.0, 20.0], &[1.0, 2.0, 3.0]));
}

#[test]
fn voc_boundaries_for_all_lengths() {
    for n in 2..=50 {
        let inc: Vec<f64> = (0..n).map(|i| i as f64 * 1.5 + 2.0).collect();
        let dec: Vec<f64> = inc.iter().rev().copied().collect();
        for m in [RankMethod::Spearman, RankMethod::Kendall] {
            assert_eq!(voc(&inc, m).unwrap().value, 1.0);
            assert_eq!(voc(&dec, m).unwrap().value, -1.0);
        }
    }
}
