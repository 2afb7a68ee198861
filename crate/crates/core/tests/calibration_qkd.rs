use noisecal::calibration::{
    optimal_tau, ratio_curve, shot_characterized, shot_fully_white, shot_uncharacterized,
    worst_case_bounds, Scheme, ShotNoiseTruth, WhiteSource,
};
use noisecal::psd::{bundled, NoisePsdModel};
use noisecal::qkd::{
    duty_factor, estimate_parameters, key_fraction, rin_sensitivity, simulate_measurement,
    skr_point, skr_vs_tau, with_scaled_flicker, QkdScenario,
};
use noisecal::stats;
use noisecal::synth::{fixtures, synthesize, windowed_variance};
use noisecal::tgv::{log_grid, tgv, GateConfig};
use noisecal::white::WhiteMethod;
use rayon::prelude::*;

const FS: f64 = 625e6;

fn pair() -> (NoisePsdModel, NoisePsdModel) {
    (bundled::electronic(), bundled::receiver())
}

#[test]
fn uncharacterized_examples() {
    assert!((shot_uncharacterized(1.2, 0.2).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(shot_uncharacterized(0.4, 0.4).unwrap(), 0.0);
    assert!(shot_uncharacterized(0.1, 0.4).is_err());
}

#[test]
fn uncharacterized_from_traces_matches_tgv_difference() {
    let (e, r) = pair();
    let n = 1 << 22;
    let tr = synthesize(&r, FS, n, 101).unwrap();
    let te = synthesize(&e, FS, n, 102).unwrap();
    let tau = 1e-3;
    let wr = windowed_variance(&tr, tau / 100.0).unwrap();
    let we = windowed_variance(&te, tau / 100.0).unwrap();
    let real = wr.window_len as f64 / FS;
    let n0 = shot_uncharacterized(wr.mean, we.mean).unwrap();
    let g = GateConfig::new(real, FS).unwrap();
    let want = tgv(&r, &g).unwrap() - tgv(&e, &g).unwrap();
    let se = (wr.se.unwrap().powi(2) + we.se.unwrap().powi(2)).sqrt();
    assert!(
        (n0 - want).abs() <= 3.0 * se,
        "{n0:e} vs {want:e} (se {se:e})"
    );
}

#[test]
fn characterized_white_excess_is_exact() {
    let e = bundled::electronic();
    let n0_density = 2.5e-14;
    let mut r = e.clone();
    r.power_law.h0 += n0_density;
    for tau in log_grid(1e-6, 1.0, 13) {
        let c = shot_characterized(&e, &r, tau, FS).unwrap();
        let want = 2.0 * n0_density * (FS / 2.0 - 1.0 / tau);
        assert!(((c.n0_hat - want) / want).abs() < 1e-9, "tau {tau}");
        assert!(c.delta_rec.unwrap().abs() < 1e-9 * want);
        assert!(c.n0_min < c.n0_hat && c.n0_hat < c.n0_max);
    }
}

#[test]
fn characterized_estimate_grows_past_the_rin_time() {
    let (e, r) = pair();
    let f0 = r.lorentzians[0].f_center;
    let taus = log_grid(2.0 / f0, 10.0, 60);
    let v: Vec<f64> = taus
        .iter()
        .map(|t| shot_characterized(&e, &r, *t, FS).unwrap().n0_hat)
        .collect();
    assert!(v.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn worst_case_examples() {
    assert_eq!(worst_case_bounds(2.0, 1e4, 0.5).unwrap(), (2.0, 2.0));
    let (lo, hi) = worst_case_bounds(1.0, 1e4, 0.01).unwrap();
    assert!(
        (lo - 0.976737).abs() < 5e-7 && (hi - 1.023263).abs() < 5e-7,
        "{lo} {hi}"
    );
    let (lo, hi) = worst_case_bounds(1.0, 1e14, 0.01).unwrap();
    assert!((lo - 1.0).abs() < 1e-6 && (hi - 1.0).abs() < 1e-6);
    assert!(worst_case_bounds(1.0, 4.0, 1e-3).is_err());
}

#[test]
fn fully_white_on_identical_traces_is_zero() {
    let t = synthesize(&bundled::receiver(), FS, 1 << 16, 5).unwrap();
    let c = shot_fully_white(
        WhiteSource::Trace(&t),
        WhiteSource::Trace(&t),
        WhiteMethod::PsdFloor,
    )
    .unwrap();
    assert_eq!(c.n0_hat, 0.0);
    assert_eq!(c.scheme, Scheme::FullyWhite);
}

#[test]
fn fully_white_recovers_the_shot_level() {
    let (e, r) = pair();
    let truth = ShotNoiseTruth::from_models(&e, &r, FS).unwrap().n0;
    let tr = synthesize(&r, FS, 1 << 22, 201).unwrap();
    let te = synthesize(&e, FS, 1 << 22, 202).unwrap();
    for m in [WhiteMethod::PsdFloor, WhiteMethod::Wiener] {
        let c = shot_fully_white(WhiteSource::Trace(&tr), WhiteSource::Trace(&te), m).unwrap();
        assert!(
            (c.n0_hat / truth - 1.0).abs() < 0.05,
            "{m:?}: {:e} vs {truth:e}",
            c.n0_hat
        );
        assert!(c.n0_min < c.n0_hat && c.n0_hat < c.n0_max);
    }
}

#[test]
fn fully_white_rejects_mixed_rates_and_inverted_inputs() {
    let a = fixtures::white(4096, 1.0, 1.0, 1);
    let b = fixtures::white(4096, 1.0, 2.0, 2);
    assert!(shot_fully_white(
        WhiteSource::Trace(&a),
        WhiteSource::Trace(&b),
        WhiteMethod::PsdFloor
    )
    .is_err());
    let (e, r) = pair();
    let err = shot_fully_white(
        WhiteSource::Model(&e, FS),
        WhiteSource::Model(&r, FS),
        WhiteMethod::PsdFloor,
    )
    .unwrap_err();
    assert!(matches!(err, noisecal::Error::Assumption(_)));
}

#[test]
fn optimal_tau_without_excess_takes_the_longest_duration() {
    let e = NoisePsdModel::white("e", 3e-15);
    let r = NoisePsdModel::white("r", 3e-15 + 2.5e-14);
    let grid = log_grid(1e-5, 1.0, 40);
    let o = optimal_tau(&e, &r, FS, 0.01, &grid).unwrap();
    assert!(o
        .curve
        .windows(2)
        .all(|w| w[1].n0_widened_up < w[0].n0_widened_up));
    assert_eq!(o.tau_opt, 1.0);
    let one = optimal_tau(&e, &r, FS, 0.01, &[1e-3]).unwrap();
    assert_eq!(one.tau_opt, 1e-3);
    assert!(optimal_tau(&e, &r, FS, 0.01, &[1e-3, 1e-4]).is_err());
}

#[test]
fn optimal_tau_curve_has_an_interior_minimum() {
    let (e, r) = pair();
    let grid = log_grid(1e-6, 10.0, 141);
    let o = optimal_tau(&e, &r, FS, 0.01, &grid).unwrap();
    assert!(o.tau_opt > grid[0] && o.tau_opt < grid[grid.len() - 1]);
    assert!(o
        .to_csv()
        .starts_with("tau_s,n0_hat,n0_widened_up,n0_widened_down,delta_rec\n"));
}

#[test]
fn ratio_of_identical_traces_is_one() {
    let t = fixtures::white(1 << 16, 1.0, 1e3, 3);
    let c = ratio_curve(&t, &t, &[1.0, 2.0, 4.0], 512, None).unwrap();
    assert_eq!(c.points.len(), 3);
    assert!(c.points.iter().all(|p| (p.ratio - 1.0).abs() < 1e-12));
}

#[test]
fn ratio_of_white_pair_is_flat() {
    let fs = 1e5;
    let e = NoisePsdModel::white("e", 1e-13);
    let r = NoisePsdModel::white("r", 1e-12);
    let te = synthesize(&e, fs, 1 << 20, 7).unwrap();
    let tr = synthesize(&r, fs, 1 << 20, 8).unwrap();
    let durations: Vec<f64> = [1, 2, 4, 8]
        .iter()
        .map(|k| (1024 * k) as f64 / fs)
        .collect();
    let c = ratio_curve(&te, &tr, &durations, 1024, Some((&e, &r))).unwrap();
    for p in &c.points {
        assert!((p.ratio - 0.1).abs() <= 3.0 * p.se, "{p:?}");
        assert!((p.model_ratio.unwrap() - 0.1).abs() < 1e-12);
    }
    let skipped = ratio_curve(&te, &tr, &[1e-6], 1024, None).unwrap();
    assert!(skipped.points.is_empty() && skipped.warnings.len() == 1);
}

#[test]
fn measurement_moments_follow_the_scenario() {
    let sc = QkdScenario::table4();
    let (e, r) = pair();
    let n0 = ShotNoiseTruth::from_models(&e, &r, FS).unwrap().n0;
    let n = 1_000_000;
    let sim = simulate_measurement(&sc, &r, n0, n, FS, 3).unwrap();
    let sigma_rec = stats::var_pop(&sim.n_rec);
    let want = sc.eta * sc.t_true / 2.0 * (sc.v_a + sc.xi_alice) * n0 + sigma_rec;
    let vb = stats::var_pop(&sim.x_b);
    // variance of a sample variance of Gaussian data
    let se = vb * (2.0 / n as f64).sqrt();
    assert!((vb - want).abs() <= 3.0 * se, "{vb:e} vs {want:e}");
}

#[test]
fn doubling_channel_noise_adds_its_share_to_the_conditional_variance() {
    let sc = QkdScenario::table4();
    let mut sc2 = sc.clone();
    sc2.xi_alice *= 2.0;
    let (e, r) = pair();
    let n0 = ShotNoiseTruth::from_models(&e, &r, FS).unwrap().n0;
    let sigma = stats::var_pop(&synthesize(&r, FS, 200_000, 1).unwrap().samples);
    let est = |s: &QkdScenario| {
        let sim = simulate_measurement(s, &r, n0, 200_000, FS, 11).unwrap();
        estimate_parameters(&sim, n0, sigma, s.eta, s.v_a).unwrap()
    };
    let (a, b) = (est(&sc), est(&sc2));
    let want = sc.eta * sc.t_true / 2.0 * sc.xi_alice;
    let got = b.v_b_given_a_snu - a.v_b_given_a_snu;
    assert!((got / want - 1.0).abs() < 0.05, "{got} vs {want}");
}

#[test]
fn zero_channel_noise_is_estimated_without_excess() {
    // With ξ = 0 the regression residual is σ_rec − cov(a, n)²/var(a), so ξ̂
    // carries a known negative bias of −2(σ_rec/N₀)/(ηT·n).
    let mut sc = QkdScenario::table4();
    sc.xi_alice = 0.0;
    let (e, r) = pair();
    let n0 = ShotNoiseTruth::from_models(&e, &r, FS).unwrap().n0;
    let n = 200_000;
    let runs: Vec<(f64, f64)> = (0..40u64)
        .into_par_iter()
        .map(|s| {
            let sim = simulate_measurement(&sc, &r, n0, n, FS, 500 + s).unwrap();
            let sigma = stats::var_pop(&sim.n_rec);
            let xi = estimate_parameters(&sim, n0, sigma, sc.eta, sc.v_a)
                .unwrap()
                .xi_hat_snu;
            (xi, sigma)
        })
        .collect();
    let xs: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let sig = stats::mean(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
    let bias = -2.0 * (sig / n0) / (sc.eta * sc.t_true * n as f64);
    let m = stats::mean(&xs);
    let se = (stats::var_sample(&xs) / xs.len() as f64).sqrt();
    assert!((m - bias).abs() <= 3.0 * se, "{m} vs {bias} (se {se})");
    assert!(bias.abs() < 1e-4);
}

#[test]
fn snu_quantities_are_scale_free() {
    let sc = QkdScenario::table4();
    let (e, r) = pair();
    let n0 = ShotNoiseTruth::from_models(&e, &r, FS).unwrap().n0;
    let sim = simulate_measurement(&sc, &r, n0, 50_000, FS, 9).unwrap();
    let sigma = stats::var_pop(&sim.n_rec);
    let a = estimate_parameters(&sim, n0, sigma, sc.eta, sc.v_a).unwrap();
    let c: f64 = 3.7;
    let mut scaled = sim.clone();
    for v in scaled.x_a.iter_mut().chain(scaled.x_b.iter_mut()) {
        *v *= c;
    }
    let b = estimate_parameters(&scaled, n0 * c * c, sigma * c * c, sc.eta, sc.v_a).unwrap();
    assert!((a.t_hat - b.t_hat).abs() < 1e-9 * a.t_hat);
    assert!((a.xi_hat_snu - b.xi_hat_snu).abs() < 1e-9);
    let ka = key_fraction(
        sc.v_a,
        a.t_hat,
        a.xi_hat_snu,
        sc.eta,
        sc.v_elec_snu,
        sc.beta,
    )
    .unwrap();
    let kb = key_fraction(
        sc.v_a,
        b.t_hat,
        b.xi_hat_snu,
        sc.eta,
        sc.v_elec_snu,
        sc.beta,
    )
    .unwrap();
    assert!((ka.key_fraction - kb.key_fraction).abs() < 1e-9);
}

#[test]
fn overestimated_shot_noise_lowers_the_key() {
    // T̂ scales as 1/N̂₀ while ξ̂ does not depend on N̂₀ at all, so an
    // inflated N̂₀ only shrinks the estimated transmittance.
    let sc = QkdScenario::table4();
    let (e, r) = pair();
    let n0 = ShotNoiseTruth::from_models(&e, &r, FS).unwrap().n0;
    let sim = simulate_measurement(&sc, &r, n0, 200_000, FS, 21).unwrap();
    let sigma = stats::var_pop(&sim.n_rec);
    let key = |scale: f64| {
        let est = estimate_parameters(&sim, n0 * scale, sigma, sc.eta, sc.v_a).unwrap();
        let v_el = sc.v_elec_snu / scale;
        (
            est,
            key_fraction(sc.v_a, est.t_hat, est.xi_hat_snu, sc.eta, v_el, sc.beta)
                .unwrap()
                .key_fraction,
        )
    };
    let (exact, k0) = key(1.0);
    let (over, k_over) = key(1.05);
    let (_, k_under) = key(0.95);
    assert!((over.xi_hat_snu - exact.xi_hat_snu).abs() < 1e-12);
    assert!((over.t_hat * 1.05 / exact.t_hat - 1.0).abs() < 1e-12);
    assert!(k_over < k0 && k0 < k_under, "{k_over} {k0} {k_under}");
}

#[test]
fn table4_key_fraction_is_pinned() {
    let sc = QkdScenario::table4();
    assert!((sc.xi_bob() - 0.025).abs() < 1e-15);
    let k = key_fraction(
        sc.v_a,
        sc.t_true,
        sc.xi_alice,
        sc.eta,
        sc.v_elec_snu,
        sc.beta,
    )
    .unwrap();
    assert!((k.key_fraction - 0.05247654196572926).abs() < 1e-12);
    assert!((k.components.mutual_information - 0.6479070548).abs() < 1e-9);
    assert!((k.components.holevo_bound - 0.5954305129).abs() < 1e-9);
    assert_eq!(
        key_fraction(5.0, 0.25, 0.1, 1.0, 0.09, 0.0)
            .unwrap()
            .key_fraction,
        0.0
    );
}

#[test]
fn duty_factor_is_the_documented_line() {
    assert_eq!(duty_factor(0.0, 1.6e-3, 2), 1.0);
    assert_eq!(duty_factor(0.4e-3, 1.6e-3, 2), 0.5);
    assert_eq!(duty_factor(1e-3, 1.6e-3, 2), 0.0);
}

#[test]
fn skr_curves_order_and_vanish() {
    let sc = QkdScenario::table4();
    let (e, r) = pair();
    let limit = sc.tau_max / sc.calib_steps as f64;
    let mut grid = log_grid(1e-6, 0.99 * limit, 60);
    grid.push(0.9999 * limit);
    grid.push(2.0 * limit);
    let ch = skr_vs_tau(&sc, &e, &r, FS, &grid, Scheme::Characterized).unwrap();
    let fw = skr_vs_tau(&sc, &e, &r, FS, &grid, Scheme::FullyWhite).unwrap();
    // the infeasible point is dropped
    assert_eq!(ch.points.len(), grid.len() - 1);
    for (c, f) in ch.points.iter().zip(&fw.points) {
        assert!(f.effective_rate >= c.effective_rate, "tau {}", c.tau);
    }
    assert!(ch.points.last().unwrap().effective_rate < 1e-3 * ch.max_effective_rate);
    assert!(ch
        .to_csv()
        .starts_with("tau_s,key_fraction,duty_factor,effective_rate\n"));
    assert!(skr_vs_tau(&sc, &e, &r, FS, &[1.0], Scheme::Characterized).is_err());
}

#[test]
fn uncharacterized_scheme_is_never_better_than_characterized_bound() {
    let sc = QkdScenario::table4();
    let (e, r) = pair();
    let u = skr_point(&sc, &e, &r, FS, 1e-4, Scheme::Uncharacterized).unwrap();
    let c = skr_point(&sc, &e, &r, FS, 1e-4, Scheme::Characterized).unwrap();
    assert!(c.n0_hat > u.n0_hat);
}

#[test]
fn rin_sensitivity_examples() {
    let sc = QkdScenario::table4();
    let (e, r) = pair();
    let grid = log_grid(1e-6, 7.9e-4, 40);
    let high = with_scaled_flicker(&r, 40.0);
    let s = rin_sensitivity(&sc, &e, &r, &high, FS, &grid).unwrap();
    for (a, b) in s
        .fully_white_low
        .points
        .iter()
        .zip(&s.fully_white_high.points)
    {
        assert!((a.effective_rate - b.effective_rate).abs() <= 0.01 * a.effective_rate.max(1e-300));
    }
    let t_low = s.characterized_low.tau_opt;
    let at = |c: &noisecal::qkd::SkrCurve| {
        c.points
            .iter()
            .find(|p| p.tau == t_low)
            .unwrap()
            .effective_rate
    };
    assert!(at(&s.characterized_high) < at(&s.characterized_low));

    let same = rin_sensitivity(&sc, &e, &r, &with_scaled_flicker(&r, 1.0), FS, &grid).unwrap();
    assert_eq!(same.characterized_low, same.characterized_high);
    assert_eq!(same.fully_white_low, same.fully_white_high);
}

#[test]
fn scenario_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    std::fs::write(&p, noisecal::qkd::TABLE4_JSON).unwrap();
    assert_eq!(QkdScenario::load(&p).unwrap(), QkdScenario::table4());
    std::fs::write(&p, r#"{"v_a": 5, "t_true": 0.25, "xi_alice": 0.1, "v_elec_snu": 0.09, "tau_max": 1e-3, "bogus": 1}"#)
        .unwrap();
    assert!(QkdScenario::load(&p).is_err());
}
