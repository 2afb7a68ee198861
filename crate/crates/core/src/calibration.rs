//! Shot-noise calibration schemes, worst-case variance bounds, the
//! calibration-duration optimum and the elec/receiver ratio experiment.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::psd::NoisePsdModel;
use crate::stats;
use crate::synth::{decimate, windowed_variance, PsdEstimate};
use crate::tgv::{tgv, GateConfig};
use crate::trace::Trace;
use crate::white::{self, WhiteEstimate, WhiteMethod};

pub const DEFAULT_EPSILON_SECU: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Uncharacterized,
    Characterized,
    FullyWhite,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uncharacterized" => Ok(Scheme::Uncharacterized),
            "characterized" => Ok(Scheme::Characterized),
            "fully-white" | "fully_white" => Ok(Scheme::FullyWhite),
            _ => Err(Error::invalid("scheme", format!("unknown scheme {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShotNoiseTruth {
    pub n0: f64,
}

impl ShotNoiseTruth {
    pub fn new(n0: f64) -> Result<Self> {
        if !(n0 > 0.0 && n0.is_finite()) {
            return Err(Error::invalid("n0", "must be > 0"));
        }
        Ok(ShotNoiseTruth { n0 })
    }

    /// White shot component implied by a model pair: (h0_rec − h0_elec)·fs.
    pub fn from_models(elec: &NoisePsdModel, rec: &NoisePsdModel, fs: f64) -> Result<Self> {
        Self::new((rec.power_law.h0 - elec.power_law.h0) * fs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub scheme: Scheme,
    pub tau: Option<f64>,
    pub n0_hat: f64,
    pub n0_min: f64,
    pub n0_max: f64,
    pub delta_rec: Option<f64>,
    pub sigma_elec: f64,
    pub sigma_rec: f64,
    pub sample_count: Option<f64>,
    pub epsilon_secu: f64,
}

/// N̂₀ = σ²_rec − σ²_elec with no duration bookkeeping.
pub fn shot_uncharacterized(sigma_rec: f64, sigma_elec: f64) -> Result<f64> {
    if !(sigma_elec >= 0.0) || !sigma_rec.is_finite() {
        return Err(Error::invalid("sigma_elec", "must be finite and >= 0"));
    }
    if sigma_rec < sigma_elec {
        return Err(Error::Assumption(format!(
            "receiver variance {sigma_rec:e} is below electronic variance {sigma_elec:e}; calibration drift?"
        )));
    }
    Ok(sigma_rec - sigma_elec)
}

/// Uncharacterized N̂₀ from a pair of traces, each variance the mean over
/// consecutive windows of duration τ. No bounds are attached.
pub fn shot_uncharacterized_traces(
    rec: &Trace,
    elec: &Trace,
    tau: f64,
) -> Result<CalibrationResult> {
    if ((elec.fs - rec.fs) / rec.fs).abs() > 1e-12 {
        return Err(Error::invalid("fs", "traces must share a sampling rate"));
    }
    let vr = windowed_variance(rec, tau)?;
    let ve = windowed_variance(elec, tau)?;
    let n0_hat = shot_uncharacterized(vr.mean, ve.mean)?;
    Ok(CalibrationResult {
        scheme: Scheme::Uncharacterized,
        tau: Some(vr.window_len as f64 / rec.fs),
        n0_hat,
        n0_min: n0_hat,
        n0_max: n0_hat,
        delta_rec: None,
        sigma_elec: ve.mean,
        sigma_rec: vr.mean,
        sample_count: Some(vr.window_len as f64),
        epsilon_secu: DEFAULT_EPSILON_SECU,
    })
}

/// Q_{1−ε}/√N, the relative half-width of the worst-case interval.
fn relative_halfwidth(n_samples: f64, epsilon: f64) -> Result<f64> {
    if !(n_samples >= 2.0) {
        return Err(Error::invalid("n_samples", "must be >= 2"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon_secu", "must lie in (0, 1)"));
    }
    let r = stats::normal_quantile(1.0 - epsilon) / n_samples.sqrt();
    if r >= 1.0 {
        return Err(Error::Assumption(format!(
            "Q/sqrt(N) = {r:.3} >= 1, the bounds straddle zero"
        )));
    }
    Ok(r)
}

/// (V̂(1 − Q/√N), V̂(1 + Q/√N)) with Q the (1 − ε) normal quantile.
pub fn worst_case_bounds(v_hat: f64, n_samples: f64, epsilon_secu: f64) -> Result<(f64, f64)> {
    let r = relative_halfwidth(n_samples, epsilon_secu)?;
    Ok((v_hat * (1.0 - r), v_hat * (1.0 + r)))
}

/// White part of N̂₀ over the gated band, 2(h0_rec − h0_elec)(fs/2 − 1/τ).
fn white_over_band(elec: &NoisePsdModel, rec: &NoisePsdModel, gate: &GateConfig) -> f64 {
    2.0 * (rec.power_law.h0 - elec.power_law.h0) * (gate.f_max() - gate.f_min())
}

pub fn shot_characterized(
    elec: &NoisePsdModel,
    rec: &NoisePsdModel,
    tau: f64,
    fs: f64,
) -> Result<CalibrationResult> {
    shot_characterized_eps(elec, rec, tau, fs, DEFAULT_EPSILON_SECU)
}

/// N̂₀(τ) = σ²_rec(τ) − σ²_elec(τ) from the two models.
///
/// δ_rec is measured against the white difference over the same gated
/// band, so it is exactly the TGV of whatever the receiver adds beyond
/// electronic noise and white shot noise.
pub fn shot_characterized_eps(
    elec: &NoisePsdModel,
    rec: &NoisePsdModel,
    tau: f64,
    fs: f64,
    epsilon_secu: f64,
) -> Result<CalibrationResult> {
    let gate = GateConfig::new(tau, fs)?;
    let sigma_elec = tgv(elec, &gate)?;
    let sigma_rec = tgv(rec, &gate)?;
    let n0_hat = sigma_rec - sigma_elec;
    let n = tau * fs;
    let r = relative_halfwidth(n, epsilon_secu)?;
    Ok(CalibrationResult {
        scheme: Scheme::Characterized,
        tau: Some(tau),
        n0_hat,
        n0_min: sigma_rec * (1.0 - r) - sigma_elec * (1.0 + r),
        n0_max: sigma_rec * (1.0 + r) - sigma_elec * (1.0 - r),
        delta_rec: Some(n0_hat - white_over_band(elec, rec, &gate)),
        sigma_elec,
        sigma_rec,
        sample_count: Some(n),
        epsilon_secu,
    })
}

/// Input to the fully-white scheme.
#[derive(Debug, Clone, Copy)]
pub enum WhiteSource<'a> {
    Trace(&'a Trace),
    Spectrum(&'a PsdEstimate),
    /// A parametric model's white part is its h0 term.
    Model(&'a NoisePsdModel, f64),
}

impl WhiteSource<'_> {
    fn fs(&self) -> f64 {
        match self {
            WhiteSource::Trace(t) => t.fs,
            WhiteSource::Spectrum(s) => s.fs,
            WhiteSource::Model(_, fs) => *fs,
        }
    }

    fn samples(&self) -> Option<f64> {
        match self {
            WhiteSource::Trace(t) => Some(t.len() as f64),
            _ => None,
        }
    }

    pub fn estimate(&self, method: WhiteMethod) -> Result<WhiteEstimate> {
        match self {
            WhiteSource::Trace(t) => white::white_estimate(t, method),
            WhiteSource::Spectrum(s) => {
                if method != WhiteMethod::PsdFloor {
                    return Err(Error::invalid(
                        "method",
                        "a spectrum input supports only the psd floor method",
                    ));
                }
                white::white_floor_psd(s, white::default_smooth_bins(s.densities.len()))
            }
            WhiteSource::Model(m, fs) => {
                m.validate()?;
                Ok(WhiteEstimate {
                    floor_density: m.power_law.h0,
                    white_variance: m.power_law.h0 * fs,
                    method,
                    diagnostics: Default::default(),
                })
            }
        }
    }
}

/// N̂₀ as the difference of the white variances of the two inputs.
pub fn shot_fully_white(
    rec: WhiteSource<'_>,
    elec: WhiteSource<'_>,
    method: WhiteMethod,
) -> Result<CalibrationResult> {
    let fs = rec.fs();
    if ((elec.fs() - fs) / fs).abs() > 1e-12 {
        return Err(Error::invalid(
            "fs",
            format!(
                "inputs disagree on sampling rate: {fs:e} vs {:e}",
                elec.fs()
            ),
        ));
    }
    let r = rec.estimate(method)?;
    let e = elec.estimate(method)?;
    let n0_hat = r.white_variance - e.white_variance;
    if n0_hat < 0.0 {
        return Err(Error::Assumption(format!(
            "white variance of the receiver ({:e}) is below the electronic one ({:e}); \
             the white-only assumption does not hold",
            r.white_variance, e.white_variance
        )));
    }
    // Each white variance is widened as a plain variance estimate from N samples.
    let n = match (rec.samples(), elec.samples()) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (Some(a), None) | (None, Some(a)) => Some(a),
        (None, None) => None,
    };
    let (n0_min, n0_max) = match n {
        Some(n) => {
            let q = relative_halfwidth(n, DEFAULT_EPSILON_SECU)?;
            (
                r.white_variance * (1.0 - q) - e.white_variance * (1.0 + q),
                r.white_variance * (1.0 + q) - e.white_variance * (1.0 - q),
            )
        }
        None => (n0_hat, n0_hat),
    };
    Ok(CalibrationResult {
        scheme: Scheme::FullyWhite,
        tau: None,
        n0_hat,
        n0_min,
        n0_max,
        delta_rec: None,
        sigma_elec: e.white_variance,
        sigma_rec: r.white_variance,
        sample_count: n,
        epsilon_secu: DEFAULT_EPSILON_SECU,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptTauPoint {
    pub tau: f64,
    pub n0_hat: f64,
    /// σ²_rec widened up, σ²_elec widened down.
    pub n0_widened_up: f64,
    /// σ²_rec widened down, σ²_elec widened up.
    pub n0_widened_down: f64,
    pub delta_rec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalTau {
    /// argmin over τ of the upward-widened N̂₀.
    pub tau_opt: f64,
    /// τ at which the downward-widened N̂₀ comes closest to the white N₀.
    pub tau_opt_pessimistic: f64,
    pub n0_white: f64,
    pub epsilon_secu: f64,
    pub curve: Vec<OptTauPoint>,
}

impl OptimalTau {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau_s,n0_hat,n0_widened_up,n0_widened_down,delta_rec\n");
        for p in &self.curve {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e}\n",
                p.tau, p.n0_hat, p.n0_widened_up, p.n0_widened_down, p.delta_rec
            ));
        }
        s
    }
}

/// Scans the τ grid for the duration minimising the worst-case N̂₀, with
/// N = τ·fs samples behind each calibration step.
pub fn optimal_tau(
    elec: &NoisePsdModel,
    rec: &NoisePsdModel,
    fs: f64,
    epsilon_secu: f64,
    tau_grid: &[f64],
) -> Result<OptimalTau> {
    if tau_grid.is_empty() {
        return Err(Error::invalid("tau_grid", "empty"));
    }
    if tau_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("tau_grid", "must be strictly increasing"));
    }
    let curve: Vec<OptTauPoint> = tau_grid
        .par_iter()
        .map(|&tau| {
            let c = shot_characterized_eps(elec, rec, tau, fs, epsilon_secu)?;
            Ok(OptTauPoint {
                tau,
                n0_hat: c.n0_hat,
                n0_widened_up: c.n0_max,
                n0_widened_down: c.n0_min,
                delta_rec: c.delta_rec.unwrap_or(0.0),
            })
        })
        .collect::<Result<_>>()?;
    let n0_white = (rec.power_law.h0 - elec.power_law.h0) * fs;
    let tau_opt = curve
        .iter()
        .min_by(|a, b| a.n0_widened_up.total_cmp(&b.n0_widened_up))
        .unwrap()
        .tau;
    let tau_opt_pessimistic = curve
        .iter()
        .min_by(|a, b| {
            (a.n0_widened_down - n0_white)
                .abs()
                .total_cmp(&(b.n0_widened_down - n0_white).abs())
        })
        .unwrap()
        .tau;
    Ok(OptimalTau {
        tau_opt,
        tau_opt_pessimistic,
        n0_white,
        epsilon_secu,
        curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioPoint {
    /// Realised window duration, s.
    pub tau: f64,
    pub decimation: usize,
    pub ratio: f64,
    pub se: f64,
    pub windows: usize,
    pub model_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioCurve {
    pub points: Vec<RatioPoint>,
    pub warnings: Vec<String>,
}

impl RatioCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau_s,decimation,ratio,se,windows,model_ratio\n");
        for p in &self.points {
            let m = p.model_ratio.map(|v| format!("{v:e}")).unwrap_or_default();
            s.push_str(&format!(
                "{:e},{},{:e},{:e},{},{}\n",
                p.tau, p.decimation, p.ratio, p.se, p.windows, m
            ));
        }
        s
    }
}

/// σ²_elec/σ²_rec against window duration, holding the samples per window
/// fixed by decimating both traces.
///
/// A target τ maps to decimation k = round(τ·fs/window_len) and the
/// realised duration window_len·k/fs. The overlay, when models are given,
/// is tgv(elec)/tgv(rec) at the decimated rate.
pub fn ratio_curve(
    elec: &Trace,
    rec: &Trace,
    durations: &[f64],
    window_len: usize,
    models: Option<(&NoisePsdModel, &NoisePsdModel)>,
) -> Result<RatioCurve> {
    if ((elec.fs - rec.fs) / rec.fs).abs() > 1e-12 {
        return Err(Error::invalid("fs", "traces must share a sampling rate"));
    }
    if window_len < 2 {
        return Err(Error::invalid("window_len", "must be >= 2"));
    }
    let fs = rec.fs;
    let results: Vec<std::result::Result<RatioPoint, String>> = durations
        .par_iter()
        .map(|&target| {
            let k = (target * fs / window_len as f64).round() as usize;
            if k == 0 {
                return Err(format!(
                    "tau {target:e} s is shorter than {window_len} samples at fs, skipped"
                ));
            }
            let de = decimate(elec, k).map_err(|e| format!("tau {target:e} s skipped: {e}"))?;
            let dr = decimate(rec, k).map_err(|e| format!("tau {target:e} s skipped: {e}"))?;
            let fs_k = fs / k as f64;
            let tau = window_len as f64 / fs_k;
            let ve = windowed_variance(&de, tau)
                .map_err(|e| format!("tau {target:e} s skipped: {e}"))?;
            let vr = windowed_variance(&dr, tau)
                .map_err(|e| format!("tau {target:e} s skipped: {e}"))?;
            let (Some(se_e), Some(se_r)) = (ve.se, vr.se) else {
                return Err(format!("tau {target:e} s skipped: fewer than 2 windows"));
            };
            if vr.mean == 0.0 {
                return Err(format!(
                    "tau {target:e} s skipped: receiver variance is zero"
                ));
            }
            let ratio = ve.mean / vr.mean;
            let se = if ve.mean == 0.0 {
                se_e / vr.mean
            } else {
                ratio.abs() * ((se_e / ve.mean).powi(2) + (se_r / vr.mean).powi(2)).sqrt()
            };
            let model_ratio = match models {
                Some((me, mr)) => {
                    let gate = GateConfig::new(tau, fs_k)
                        .map_err(|e| format!("tau {target:e} s: no overlay: {e}"))?;
                    let a = tgv(me, &gate).map_err(|e| e.to_string())?;
                    let b = tgv(mr, &gate).map_err(|e| e.to_string())?;
                    Some(a / b)
                }
                None => None,
            };
            Ok(RatioPoint {
                tau,
                decimation: k,
                ratio,
                se,
                windows: ve.windows.min(vr.windows),
                model_ratio,
            })
        })
        .collect();
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    for r in results {
        match r {
            Ok(p) => points.push(p),
            Err(w) => warnings.push(w),
        }
    }
    Ok(RatioCurve { points, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psd::bundled;

    #[test]
    fn uncharacterized_arithmetic() {
        assert!((shot_uncharacterized(1.2, 0.2).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(shot_uncharacterized(0.7, 0.7).unwrap(), 0.0);
        assert!(shot_uncharacterized(0.1, 0.2).is_err());
    }

    #[test]
    fn bounds_known_value() {
        let (lo, hi) = worst_case_bounds(1.0, 1e4, 0.01).unwrap();
        assert!((lo - 0.976737).abs() < 1e-6, "{lo}");
        assert!((hi - 1.023263).abs() < 1e-6, "{hi}");
        let (lo, hi) = worst_case_bounds(3.0, 100.0, 0.5).unwrap();
        assert_eq!((lo, hi), (3.0, 3.0));
        assert!(worst_case_bounds(1.0, 4.0, 0.01).is_err());
    }

    #[test]
    fn white_only_receiver_has_no_excess() {
        let elec = bundled::electronic();
        let mut rec = elec.clone();
        rec.power_law.h0 += 3e-14;
        for tau in [1e-5, 1e-3, 1.0] {
            let c = shot_characterized(&elec, &rec, tau, 625e6).unwrap();
            let expect = 2.0 * 3e-14 * (625e6 / 2.0 - 1.0 / tau);
            assert!((c.n0_hat / expect - 1.0).abs() < 1e-9);
            assert!(c.delta_rec.unwrap().abs() < 1e-9 * expect);
            assert!(c.n0_min <= c.n0_hat && c.n0_hat <= c.n0_max);
        }
    }

    #[test]
    fn fully_white_from_models() {
        let e = bundled::electronic();
        let r = bundled::receiver();
        let c = shot_fully_white(
            WhiteSource::Model(&r, 625e6),
            WhiteSource::Model(&e, 625e6),
            WhiteMethod::PsdFloor,
        )
        .unwrap();
        assert!((c.n0_hat - (3e-14 - 7e-16) * 625e6).abs() < 1e-18);
        assert!(c.tau.is_none());
    }

    #[test]
    fn optimal_tau_single_point() {
        let e = bundled::electronic();
        let r = bundled::receiver();
        let o = optimal_tau(&e, &r, 625e6, 0.01, &[1e-3]).unwrap();
        assert_eq!(o.tau_opt, 1e-3);
        assert!(optimal_tau(&e, &r, 625e6, 0.01, &[]).is_err());
    }
}
