use noisecal::psd::NoisePsdModel;
use noisecal::synth::{fixtures, synthesize};
use noisecal::wss::{
    acf_compare, acf_threshold, block_scan, brown_forsythe, wilcoxon_rank_sum, wss_verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

fn normals(g: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| g.sample(StandardNormal)).collect()
}

/// Two-sided rank-sum p-value by listing every split of the pooled ranks.
fn brute_force_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let rank = |x: f64| 1 + pooled.iter().filter(|v| **v < x).count();
    let w: usize = a.iter().map(|x| rank(*x)).sum();
    let (mut total, mut le, mut ge) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let s: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
        total += 1;
        le += (s <= w) as u64;
        ge += (s >= w) as u64;
    }
    (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
}

#[test]
fn rank_sum_examples() {
    let p = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0])
        .unwrap()
        .p_value;
    assert!((p - 0.1).abs() < 1e-12);
    let p = wilcoxon_rank_sum(&[1.0, 3.0, 5.0], &[2.0, 4.0, 6.0])
        .unwrap()
        .p_value;
    assert!(p >= 0.6);
}

#[test]
fn exact_rank_sum_matches_enumeration() {
    let mut g = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..40 {
        let na = g.random_range(3..=8);
        let nb = g.random_range(3..=8);
        let a = normals(&mut g, na);
        let b: Vec<f64> = normals(&mut g, nb).into_iter().map(|x| x + 0.7).collect();
        let got = wilcoxon_rank_sum(&a, &b).unwrap().p_value;
        let want = brute_force_p(&a, &b);
        assert!((got - want).abs() < 1e-12, "{na}+{nb}: {got} vs {want}");
    }
}

#[test]
fn large_sample_rank_sum_is_calibrated() {
    let hits = (0..1000u64)
        .into_par_iter()
        .filter(|s| {
            let mut g = ChaCha8Rng::seed_from_u64(10_000 + s);
            let a = normals(&mut g, 500);
            let b = normals(&mut g, 500);
            wilcoxon_rank_sum(&a, &b).unwrap().p_value <= 0.05
        })
        .count();
    let rate = hits as f64 / 1000.0;
    assert!((rate - 0.05).abs() <= 0.02, "{rate}");
}

#[test]
fn brown_forsythe_examples() {
    let r = brown_forsythe(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(r.statistic, 0.0);
    assert_eq!(r.p_value, 1.0);
}

#[test]
fn brown_forsythe_power_and_calibration() {
    let powered = (0..200u64)
        .into_par_iter()
        .filter(|s| {
            let mut g = ChaCha8Rng::seed_from_u64(20_000 + s);
            let a = normals(&mut g, 500);
            let b: Vec<f64> = normals(&mut g, 500).into_iter().map(|x| 3.0 * x).collect();
            brown_forsythe(&a, &b).unwrap().p_value < 0.001
        })
        .count();
    assert!(powered as f64 >= 0.99 * 200.0, "{powered}");

    let false_hits = (0..1000u64)
        .into_par_iter()
        .filter(|s| {
            let mut g = ChaCha8Rng::seed_from_u64(30_000 + s);
            let a = normals(&mut g, 500);
            let b = normals(&mut g, 500);
            brown_forsythe(&a, &b).unwrap().p_value <= 0.05
        })
        .count();
    let rate = false_hits as f64 / 1000.0;
    assert!((rate - 0.05).abs() <= 0.02, "{rate}");
}

#[test]
fn acf_distance_of_identical_halves_is_zero() {
    let t = fixtures::white(4000, 1.0, 1.0, 3);
    assert_eq!(
        acf_compare(&t.samples, &t.samples, 64).unwrap().statistic,
        0.0
    );
}

#[test]
fn acf_detects_ar1_against_white() {
    let n = 5000;
    let lag = 512;
    let thr = acf_threshold(n, n, lag, 0.05).unwrap();
    let hits = (0..100u64)
        .into_par_iter()
        .filter(|s| {
            let a = fixtures::white(n, 1.0, 1.0, 40_000 + s);
            let b = fixtures::ar1(n, 0.9, 1.0, 1.0, 50_000 + s);
            acf_compare(&a.samples, &b.samples, lag).unwrap().statistic > thr
        })
        .count();
    assert!(hits >= 99, "{hits}");
}

#[test]
fn acf_threshold_needs_room_for_the_lags() {
    let t = fixtures::white(100, 1.0, 1.0, 1);
    assert!(acf_compare(&t.samples[..50], &t.samples[50..], 20).is_err());
}

#[test]
fn battery_on_white_noise_passes_at_the_intersection_rate() {
    // three roughly independent tests each at level α pass together with
    // probability about (1 − α)³
    let m = NoisePsdModel::white("w", 1e-12);
    let seeds = 200u64;
    let passed = (0..seeds)
        .into_par_iter()
        .filter(|s| {
            let t = synthesize(&m, 1e6, 10_000, 60_000 + s).unwrap();
            wss_verdict(&t, 0.05).unwrap().passed
        })
        .count() as f64;
    let p: f64 = 0.95f64.powi(3);
    let se = (p * (1.0 - p) / seeds as f64).sqrt();
    assert!(
        (passed / seeds as f64 - p).abs() <= 3.0 * se,
        "{}",
        passed / seeds as f64
    );
}

#[test]
fn battery_rejects_drift_and_variance_steps() {
    let count = |f: &(dyn Fn(u64) -> noisecal::Trace + Sync)| {
        (0..200u64)
            .into_par_iter()
            .filter(|s| !wss_verdict(&f(*s), 0.05).unwrap().passed)
            .count()
    };
    let drift = count(&|s| {
        fixtures::with_linear_drift(&fixtures::white(10_000, 1.0, 1.0, 70_000 + s), 3.0)
    });
    let step = count(&|s| {
        fixtures::with_variance_step(&fixtures::white(10_000, 1.0, 1.0, 80_000 + s), 2.0)
    });
    assert!(drift >= 190, "{drift}");
    assert!(step >= 190, "{step}");
}

#[test]
fn block_scan_fractions() {
    let blocks: Vec<_> = (0..100)
        .map(|s| fixtures::white(4096, 1.0, 1.0, 90_000 + s))
        .collect();
    let r = block_scan(&blocks, &[0.1, 0.01]).unwrap();
    assert_eq!(r.block_count, 100);
    assert_eq!(r.cumulative[0].len(), 100);
    // (1 − 0.1)³ ≈ 0.73 expected
    let p: f64 = 0.9f64.powi(3);
    let se = (p * (1.0 - p) / 100.0).sqrt();
    assert!(
        (r.pass_fraction[0] - p).abs() <= 3.0 * se,
        "{}",
        r.pass_fraction[0]
    );
    assert!(r.pass_fraction[1] >= r.pass_fraction[0]);
    assert!(r.cumulative[0].windows(2).all(|w| w[1] >= w[0]));

    let drifting: Vec<_> = blocks
        .iter()
        .map(|b| fixtures::with_linear_drift(b, 3.0))
        .collect();
    let d = block_scan(&drifting, &[0.1]).unwrap();
    assert_eq!(d.pass_fraction[0], 0.0);

    let csv = r.cumulative_csv();
    assert!(csv.starts_with("block_index,cum_pass_alpha_0.1,cum_pass_alpha_0.01\n"));
    assert!(r
        .blocks_csv(0)
        .starts_with("block_index,wilcoxon_p,bf_p,acf_stat,passed\n"));
}

#[test]
fn block_scan_names_the_short_block() {
    let blocks = vec![
        fixtures::white(1000, 1.0, 1.0, 1),
        fixtures::white(10, 1.0, 1.0, 2),
    ];
    let e = block_scan(&blocks, &[0.05]).unwrap_err();
    assert!(e.to_string().contains("block 1"), "{e}");
}
