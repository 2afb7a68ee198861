//! Measurement simulation, T and ξ estimation in shot-noise units, the
//! asymptotic Gaussian-modulation key fraction with trusted heterodyne
//! noise, and key-rate versus calibration-time sweeps.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{Scheme, DEFAULT_EPSILON_SECU};
use crate::error::{Error, Result};
use crate::psd::NoisePsdModel;
use crate::stats;
use crate::synth::{rng, synthesize};
use crate::tgv::{tgv, GateConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QkdScenario {
    /// Alice modulation variance, SNU.
    pub v_a: f64,
    #[serde(default = "one")]
    pub eta: f64,
    pub t_true: f64,
    /// Channel excess noise referred to Alice's output, SNU.
    pub xi_alice: f64,
    pub v_elec_snu: f64,
    #[serde(default = "one")]
    pub beta: f64,
    /// Span over which the noise is taken as stationary, s.
    pub tau_max: f64,
    #[serde(default = "two")]
    pub calib_steps: u32,
}

fn one() -> f64 {
    1.0
}

fn two() -> u32 {
    2
}

pub const TABLE4_JSON: &str = include_str!("../../../scenarios/table4.json");

impl QkdScenario {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(field, reason))
            }
        };
        check(self.v_a > 0.0 && self.v_a.is_finite(), "v_a", "must be > 0")?;
        check(
            self.eta > 0.0 && self.eta <= 1.0,
            "eta",
            "must lie in (0, 1]",
        )?;
        check(
            self.t_true > 0.0 && self.t_true <= 1.0,
            "t_true",
            "must lie in (0, 1]",
        )?;
        check(
            self.xi_alice >= 0.0 && self.xi_alice.is_finite(),
            "xi_alice",
            "must be >= 0",
        )?;
        check(
            self.v_elec_snu >= 0.0 && self.v_elec_snu.is_finite(),
            "v_elec_snu",
            "must be >= 0",
        )?;
        check(
            self.beta > 0.0 && self.beta <= 1.0,
            "beta",
            "must lie in (0, 1]",
        )?;
        check(
            self.tau_max > 0.0 && self.tau_max.is_finite(),
            "tau_max",
            "must be > 0",
        )?;
        check(self.calib_steps >= 1, "calib_steps", "must be >= 1")?;
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let sc: QkdScenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// The bundled reference scenario, scenarios/table4.json.
    pub fn table4() -> Self {
        Self::from_json_str(TABLE4_JSON).expect("bundled scenario is valid")
    }

    /// Excess noise seen at Bob's side, η·T·ξ_Alice.
    pub fn xi_bob(&self) -> f64 {
        self.eta * self.t_true * self.xi_alice
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSim {
    /// Alice symbols, variance V_A·N₀ in V².
    pub x_a: Vec<f64>,
    /// Channel noise per symbol, variance ξ_Alice·N₀.
    pub epsilon_channel: Vec<f64>,
    /// √(ηT/2)(x_a + ε) + n_rec.
    pub x_b: Vec<f64>,
    pub n_rec: Vec<f64>,
    /// Shot-noise variance used to scale the symbols, V².
    pub n0: f64,
}

/// Draws one measurement run with one receiver-noise sample per symbol.
/// Symbol and channel variances are in shot-noise units scaled by `n0`.
pub fn simulate_measurement(
    scenario: &QkdScenario,
    rec_model: &NoisePsdModel,
    n0: f64,
    n_symbols: usize,
    fs: f64,
    seed: u64,
) -> Result<MeasurementSim> {
    scenario.validate()?;
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(Error::invalid("n0", "must be > 0"));
    }
    let noise = synthesize(rec_model, fs, n_symbols, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let mut g = rng(seed);
    let sa = (scenario.v_a * n0).sqrt();
    let se = (scenario.xi_alice * n0).sqrt();
    let gain = (scenario.eta * scenario.t_true / 2.0).sqrt();
    let mut x_a = Vec::with_capacity(n_symbols);
    let mut eps = Vec::with_capacity(n_symbols);
    for _ in 0..n_symbols {
        let a: f64 = g.sample(StandardNormal);
        let e: f64 = g.sample(StandardNormal);
        x_a.push(sa * a);
        eps.push(se * e);
    }
    let x_b = x_a
        .iter()
        .zip(&eps)
        .zip(&noise.samples)
        .map(|((a, e), n)| gain * (a + e) + n)
        .collect();
    Ok(MeasurementSim {
        x_a,
        epsilon_channel: eps,
        x_b,
        n_rec: noise.samples,
        n0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimationReport {
    pub t_hat: f64,
    pub xi_hat_snu: f64,
    /// η·T̂·ξ̂, the excess noise referred to Bob's side.
    pub xi_bob_snu: f64,
    pub v_b_snu: f64,
    pub v_b_given_a_snu: f64,
    pub n0_used: f64,
}

/// T̂ and ξ̂ from sample moments normalised by `n0_hat`.
///
/// V_{B|A} is the residual variance of x_b after regression on x_a.
/// `sigma_rec` is the calibrated receiver-noise variance in V².
pub fn estimate_parameters(
    sim: &MeasurementSim,
    n0_hat: f64,
    sigma_rec: f64,
    eta: f64,
    v_a: f64,
) -> Result<EstimationReport> {
    if !(n0_hat > 0.0 && n0_hat.is_finite()) {
        return Err(Error::invalid("n0_hat", "must be > 0"));
    }
    if sim.x_a.len() < 2 {
        return Err(Error::invalid("sim", "needs at least 2 symbols"));
    }
    let vb = stats::var_pop(&sim.x_b);
    let va = stats::var_pop(&sim.x_a);
    let c = stats::covariance_pop(&sim.x_a, &sim.x_b);
    let vba = vb - c * c / va;
    let v_b_snu = vb / n0_hat;
    let v_b_given_a_snu = vba / n0_hat;
    let t_hat = 2.0 / (eta * v_a) * (v_b_snu - v_b_given_a_snu);
    if !(t_hat > 0.0) {
        return Err(Error::Numeric(format!(
            "transmittance estimate collapsed to {t_hat:e}"
        )));
    }
    let xi_hat_snu = 2.0 / (eta * t_hat) * (v_b_given_a_snu - sigma_rec / n0_hat);
    Ok(EstimationReport {
        t_hat,
        xi_hat_snu,
        xi_bob_snu: eta * t_hat * xi_hat_snu,
        v_b_snu,
        v_b_given_a_snu,
        n0_used: n0_hat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyComponents {
    pub mutual_information: f64,
    pub holevo_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRateReport {
    pub key_fraction: f64,
    pub duty_factor: f64,
    pub effective_rate: f64,
    pub components: KeyComponents,
}

/// Von Neumann entropy contribution of a thermal mode with mean photon x.
fn g_entropy(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (x + 1.0) * (x + 1.0).log2() - x * x.log2()
    }
}

/// Roots λ₁ ≥ λ₂ of λ⁴ − aλ² + b.
fn symplectic_pair(a: f64, b: f64, what: &str) -> Result<(f64, f64)> {
    let disc = a * a - 4.0 * b;
    if !(disc >= -1e-12 * a * a) || !(b >= 0.0) {
        return Err(Error::Numeric(format!(
            "unphysical covariance: {what} eigenvalue discriminant {disc:e}"
        )));
    }
    let s = disc.max(0.0).sqrt();
    let l1 = ((a + s) / 2.0).sqrt();
    let l2 = ((a - s) / 2.0).max(0.0).sqrt();
    if l2 < 1.0 - 1e-9 {
        return Err(Error::Numeric(format!(
            "unphysical covariance: {what} symplectic eigenvalue {l2:e} < 1"
        )));
    }
    Ok((l1, l2))
}

/// Asymptotic key fraction β·I_AB − χ_BE for Gaussian modulation with
/// heterodyne detection and trusted detector noise, clipped at zero.
pub fn key_fraction(
    v_a: f64,
    t: f64,
    xi: f64,
    eta: f64,
    v_elec_snu: f64,
    beta: f64,
) -> Result<KeyRateReport> {
    if !(t > 0.0) {
        return Err(Error::invalid("t", "must be > 0"));
    }
    if !(v_a > 0.0 && eta > 0.0 && eta <= 1.0 && v_elec_snu >= 0.0 && (0.0..=1.0).contains(&beta)) {
        return Err(Error::invalid(
            "key parameters",
            "v_a > 0, eta in (0,1], v_elec >= 0, beta in [0,1]",
        ));
    }
    let v = v_a + 1.0;
    let chi_line = (1.0 - t) / t + xi;
    let chi_het = (2.0 - eta + 2.0 * v_elec_snu) / eta;
    let chi_tot = chi_line + chi_het / t;
    let i_ab = ((v + chi_tot) / (1.0 + chi_tot)).log2();

    let a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line).powi(2);
    let b = t * t * (v * chi_line + 1.0).powi(2);
    let (l1, l2) = symplectic_pair(a, b, "AB")?;
    let sb = b.sqrt();
    let den = (t * (v + chi_tot)).powi(2);
    let c = (a * chi_het * chi_het
        + b
        + 1.0
        + 2.0 * chi_het * (v * sb + t * (v + chi_line))
        + 2.0 * t * (v * v - 1.0))
        / den;
    let d = (v + sb * chi_het).powi(2) / den;
    let (l3, l4) = symplectic_pair(c, d, "conditional")?;
    let holevo = g_entropy((l1 - 1.0) / 2.0) + g_entropy((l2 - 1.0) / 2.0)
        - g_entropy((l3 - 1.0) / 2.0)
        - g_entropy((l4 - 1.0) / 2.0);
    let kf = (beta * i_ab - holevo).max(0.0);
    Ok(KeyRateReport {
        key_fraction: kf,
        duty_factor: 1.0,
        effective_rate: kf,
        components: KeyComponents {
            mutual_information: i_ab,
            holevo_bound: holevo,
        },
    })
}

/// Fraction of a stationary window left for key exchange after
/// `calib_steps` calibrations of duration τ.
pub fn duty_factor(tau: f64, tau_max: f64, calib_steps: u32) -> f64 {
    (1.0 - calib_steps as f64 * tau / tau_max).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkrPoint {
    pub tau: f64,
    pub n0_hat: f64,
    pub t_hat: f64,
    pub xi_hat: f64,
    pub key_fraction: f64,
    pub duty_factor: f64,
    pub effective_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkrCurve {
    pub scheme: Scheme,
    pub points: Vec<SkrPoint>,
    /// argmax of the effective rate.
    pub tau_opt: f64,
    pub max_effective_rate: f64,
    pub n0_true: f64,
}

impl SkrCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau_s,key_fraction,duty_factor,effective_rate\n");
        for p in &self.points {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e}\n",
                p.tau, p.key_fraction, p.duty_factor, p.effective_rate
            ));
        }
        s
    }
}

/// One point of the key-rate trade-off at calibration duration τ.
///
/// Expected moments are used rather than a simulation: with
/// N₀ = (h0_rec − h0_elec)·fs, V_B = (ηT/2)(V_A + ξ)N₀ + σ²_rec(τ) and
/// V_{B|A} = (ηT/2)ξN₀ + σ²_rec(τ). The scheme fixes N̂₀; the calibrated
/// noise subtracted in ξ̂ is widened downward by Q/√(τ·fs), and the
/// trusted electronic noise is re-expressed in the resulting SNU.
pub fn skr_point(
    scenario: &QkdScenario,
    elec: &NoisePsdModel,
    rec: &NoisePsdModel,
    fs: f64,
    tau: f64,
    scheme: Scheme,
) -> Result<SkrPoint> {
    let gate = GateConfig::new(tau, fs)?;
    let n0 = (rec.power_law.h0 - elec.power_law.h0) * fs;
    if !(n0 > 0.0) {
        return Err(Error::Assumption(
            "receiver white level does not exceed the electronic one".into(),
        ));
    }
    let s_elec = tgv(elec, &gate)?;
    let s_rec = tgv(rec, &gate)?;
    let q = stats::normal_quantile(1.0 - DEFAULT_EPSILON_SECU) / (tau * fs).sqrt();
    // the characterized schemes estimate σ²_rec(τ) itself, the fully
    // white one only its white part
    let (n0_hat, widened) = match scheme {
        Scheme::Uncharacterized => (s_rec - s_elec, s_rec),
        Scheme::Characterized => (s_rec * (1.0 + q) - s_elec * (1.0 - q), s_rec),
        Scheme::FullyWhite => (n0, rec.power_law.h0 * fs),
    };
    if !(n0_hat > 0.0) {
        return Err(Error::Numeric(format!(
            "N0 estimate {n0_hat:e} at tau {tau:e} is not positive"
        )));
    }
    let (eta, t) = (scenario.eta, scenario.t_true);
    let v_b = eta * t / 2.0 * (scenario.v_a + scenario.xi_alice) * n0 + s_rec;
    let v_ba = eta * t / 2.0 * scenario.xi_alice * n0 + s_rec;
    let t_hat = 2.0 / (eta * scenario.v_a) * (v_b - v_ba) / n0_hat;
    let subtracted = s_rec - q * widened;
    let xi_hat = (2.0 / (eta * t_hat) * (v_ba - subtracted) / n0_hat).max(0.0);
    let v_el = scenario.v_elec_snu * n0 / n0_hat;
    let t_eff = t_hat.min(1.0);
    let k = key_fraction(scenario.v_a, t_eff, xi_hat, eta, v_el, scenario.beta)?;
    let duty = duty_factor(tau, scenario.tau_max, scenario.calib_steps);
    Ok(SkrPoint {
        tau,
        n0_hat,
        t_hat,
        xi_hat,
        key_fraction: k.key_fraction,
        duty_factor: duty,
        effective_rate: duty * k.key_fraction,
    })
}

/// Key-rate trade-off over the feasible part of the grid,
/// τ < τ_max / calib_steps.
pub fn skr_vs_tau(
    scenario: &QkdScenario,
    elec: &NoisePsdModel,
    rec: &NoisePsdModel,
    fs: f64,
    tau_grid: &[f64],
    scheme: Scheme,
) -> Result<SkrCurve> {
    scenario.validate()?;
    let limit = scenario.tau_max / scenario.calib_steps as f64;
    let feasible: Vec<f64> = tau_grid
        .iter()
        .copied()
        .filter(|t| *t > 0.0 && *t < limit)
        .collect();
    if feasible.is_empty() {
        return Err(Error::invalid(
            "tau_grid",
            format!("no point below tau_max / calib_steps = {limit:e} s"),
        ));
    }
    let points: Vec<SkrPoint> = feasible
        .par_iter()
        .map(|&tau| skr_point(scenario, elec, rec, fs, tau, scheme))
        .collect::<Result<_>>()?;
    let best = points
        .iter()
        .max_by(|a, b| a.effective_rate.total_cmp(&b.effective_rate))
        .unwrap();
    Ok(SkrCurve {
        scheme,
        tau_opt: best.tau,
        max_effective_rate: best.effective_rate,
        n0_true: (rec.power_law.h0 - elec.power_law.h0) * fs,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RinSensitivity {
    pub characterized_low: SkrCurve,
    pub characterized_high: SkrCurve,
    pub fully_white_low: SkrCurve,
    pub fully_white_high: SkrCurve,
}

/// Paired key-rate curves for a low and a high 1/f receiver model.
pub fn rin_sensitivity(
    scenario: &QkdScenario,
    elec: &NoisePsdModel,
    rec_low: &NoisePsdModel,
    rec_high: &NoisePsdModel,
    fs: f64,
    tau_grid: &[f64],
) -> Result<RinSensitivity> {
    let run = |rec, scheme| skr_vs_tau(scenario, elec, rec, fs, tau_grid, scheme);
    Ok(RinSensitivity {
        characterized_low: run(rec_low, Scheme::Characterized)?,
        characterized_high: run(rec_high, Scheme::Characterized)?,
        fully_white_low: run(rec_low, Scheme::FullyWhite)?,
        fully_white_high: run(rec_high, Scheme::FullyWhite)?,
    })
}

/// Copy of `model` with its 1/f coefficient multiplied by `factor`.
pub fn with_scaled_flicker(model: &NoisePsdModel, factor: f64) -> NoisePsdModel {
    let mut m = model.clone();
    m.power_law.h_m1 *= factor;
    m
}
