use noisecal::psd::{bundled, load_model, save_model, DiracTone, NoisePsdModel, PowerLawSet};
use noisecal::tgv::{
    gated_psd_analytic, gated_psd_numeric, log_grid, tgv, tgv_components, tgv_curve, tgv_tone,
    GateConfig,
};

const FS: f64 = 625e6;

/// Composite Simpson over [a, b] with n (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn receiver_density_at_rin_center() {
    let r = bundled::receiver();
    let f = 4e5;
    let p = &r.power_law;
    let l = &r.lorentzians[0];
    let want = p.h_m2 / (f * f)
        + p.h_m1 / f
        + p.h0
        + p.h1 * f
        + p.h2 * f * f
        + l.amplitude / (std::f64::consts::PI * l.gamma);
    let got = r.eval_psd(f).unwrap();
    assert!((got / want - 1.0).abs() < 1e-12);
    assert!((got / 3.76e-14 - 1.0).abs() < 0.005, "{got:e}");
}

#[test]
fn bundled_models_carry_table_values() {
    let e = bundled::electronic();
    assert_eq!(e.power_law.h_m2, 2e-5);
    assert_eq!(e.tones, vec![DiracTone::new(1e7, 5e-7).unwrap()]);
    assert!(e.lorentzians.is_empty());
    let r = bundled::receiver();
    let l = r.lorentzians[0];
    assert_eq!((l.f_center, l.amplitude, l.gamma), (4e5, 5e-12, 1e5));
}

#[test]
fn model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let r = bundled::receiver();
    save_model(&r, &path).unwrap();
    assert_eq!(load_model(&path).unwrap(), r);
}

#[test]
fn band_powers() {
    let tone = NoisePsdModel::new(
        "t",
        PowerLawSet::default(),
        vec![DiracTone::new(1e7, 5e-7).unwrap()],
        vec![],
    )
    .unwrap();
    assert!((tone.band_power(1.0, FS / 2.0).unwrap() - 1e-6).abs() < 1e-18);

    let w = NoisePsdModel::white("w", 3e-14);
    assert!((w.band_power(1e-9, FS / 2.0).unwrap() / (3e-14 * FS) - 1.0).abs() < 1e-12);

    // Lorentzian line against Simpson quadrature of its density
    let r = bundled::receiver();
    let l = r.lorentzians[0];
    let lor = NoisePsdModel::new("l", PowerLawSet::default(), vec![], vec![l]).unwrap();
    let near = simpson(|f| l.density(f), 1.0, 5e6, 1_000_000);
    let far = simpson(
        |u| l.density(u.exp()) * u.exp(),
        (5e6f64).ln(),
        (FS / 2.0).ln(),
        20_000,
    );
    let oracle = 2.0 * (near + far);
    let got = lor.band_power(1.0, FS / 2.0).unwrap();
    assert!((got / oracle - 1.0).abs() < 1e-6, "{got:e} vs {oracle:e}");
    assert!((got / (0.92 * 2.0 * l.amplitude) - 1.0).abs() < 0.01);
}

#[test]
fn gated_closed_forms_at_inverse_tau() {
    let tau = 1e-3;
    let m2 = PowerLawSet::new(1e-5, 0.0, 0.0, 0.0, 0.0).unwrap();
    let m1 = PowerLawSet::new(0.0, 1e-9, 0.0, 0.0, 0.0).unwrap();
    let v2 = gated_psd_analytic(&m2, 1.0 / tau, tau).unwrap();
    let v1 = gated_psd_analytic(&m1, 1.0 / tau, tau).unwrap();
    assert!((v2 / (2.0 * 1e-5 * tau * tau) - 1.0).abs() < 1e-12);
    assert!((v1 / (2.0 * 1e-9 * tau) - 1.0).abs() < 1e-12);

    let upper = PowerLawSet::new(0.0, 0.0, 3e-14, 6e-24, 4e-32).unwrap();
    for f in [1e3, 1e6, 3e8] {
        let a = gated_psd_analytic(&upper, f, 1e-4).unwrap();
        assert!((a / upper.eval(f) - 1.0).abs() < 1e-14);
    }
}

#[test]
fn numeric_spectrum_of_power_law_matches_closed_forms() {
    let r = bundled::receiver();
    let m = NoisePsdModel::new("pl", r.power_law, vec![], vec![]).unwrap();
    for tau in [1e-6, 1e-3, 0.3] {
        let s = gated_psd_numeric(&m, &GateConfig::new(tau, FS).unwrap()).unwrap();
        for (f, d) in s.frequencies.iter().zip(&s.densities) {
            let a = gated_psd_analytic(&r.power_law, *f, tau).unwrap();
            // the 1/f² term oscillates through zero, so errors are scaled
            // by the size of its envelope
            let p = &r.power_law;
            let x = std::f64::consts::PI * f * tau;
            let scale =
                p.h_m2 * (x + 2.0) / (f * f) + 2.0 * p.h_m1 / f + p.h0 + p.h1 * f + p.h2 * f * f;
            assert!(
                ((d - a) / scale).abs() < 1e-6,
                "tau {tau} f {f}: {d:e} vs {a:e}"
            );
        }
    }
}

#[test]
fn gated_tone_keeps_its_power() {
    let m = NoisePsdModel::new(
        "t",
        PowerLawSet::default(),
        vec![DiracTone::new(1e7, 5e-7).unwrap()],
        vec![],
    )
    .unwrap();
    let s = gated_psd_numeric(&m, &GateConfig::new(1e-3, FS).unwrap()).unwrap();
    assert!(
        (s.band_power() / 1e-6 - 1.0).abs() < 0.01,
        "{:e}",
        s.band_power()
    );
}

#[test]
fn tone_tgv_against_quadrature() {
    let tone = DiracTone::new(1e7, 5e-7).unwrap();
    let tau = 1e-6;
    let sinc = |x: f64| {
        if x == 0.0 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        }
    };
    let dens = |f: f64| {
        tone.amplitude * tau * (sinc(tau * (f - tone.f_peak)) + sinc(tau * (f + tone.f_peak)))
    };
    let oracle = 2.0 * simpson(dens, 1.0 / tau, FS / 2.0, 4_000_000);
    let got = tgv_tone(&tone, &GateConfig::new(tau, FS).unwrap());
    assert!(
        ((got - oracle) / 1e-6).abs() < 1e-8,
        "{got:e} vs {oracle:e}"
    );
}

#[test]
fn zero_model_has_zero_spectrum() {
    let z = NoisePsdModel::default();
    let s = gated_psd_numeric(&z, &GateConfig::new(1e-3, FS).unwrap()).unwrap();
    assert!(s.densities.iter().all(|d| *d == 0.0));
    assert_eq!(tgv(&z, &GateConfig::new(1e-3, FS).unwrap()).unwrap(), 0.0);
}

#[test]
fn receiver_tgv_is_non_decreasing() {
    // twenty points per decade; finer grids resolve the sub-1e-9 V² ripple
    // of the gated 10 MHz tone below τ ≈ 3 µs
    let taus = log_grid(1e-6, 10.0, 141);
    let c = tgv_curve(&bundled::receiver(), &taus, FS, false).unwrap();
    for (i, w) in c.variances.windows(2).enumerate() {
        assert!(w[1] >= w[0], "decrease after tau {:e}", taus[i]);
    }
}

#[test]
fn breakdown_sums_to_total() {
    let taus = log_grid(1e-6, 1.0, 13);
    let c = tgv_curve(&bundled::receiver(), &taus, FS, true).unwrap();
    let parts = c.per_component.as_ref().unwrap();
    for (i, total) in c.variances.iter().enumerate() {
        let s: f64 = parts.iter().map(|(_, v)| v[i]).sum();
        assert!(((s - total) / total).abs() < 1e-9);
    }
    let one = tgv_curve(&bundled::receiver(), &[1e-3], FS, false).unwrap();
    let direct = tgv(&bundled::receiver(), &GateConfig::new(1e-3, FS).unwrap()).unwrap();
    assert_eq!(one.variances, vec![direct]);
}

#[test]
fn receiver_exceeds_electronic() {
    let g = GateConfig::new(1e-3, FS).unwrap();
    assert!(tgv(&bundled::receiver(), &g).unwrap() > tgv(&bundled::electronic(), &g).unwrap());
}

#[test]
fn components_are_named() {
    let g = GateConfig::new(1e-3, FS).unwrap();
    let names: Vec<String> = tgv_components(&bundled::receiver(), &g)
        .unwrap()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    assert_eq!(names, ["power_law", "tone0", "lorentzian0"]);
}

#[test]
fn gate_validation() {
    assert!(GateConfig::new(1e-9, FS).is_err());
    assert!(GateConfig::new(1e-3, -1.0).is_err());
    assert!(GateConfig::new(f64::NAN, FS).is_err());
}
