//! Isolating the white component of a trace: smoothed-PSD floor, ARMA
//! residuals and Wiener filtering.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::stats;
use crate::synth::{welch_psd, PsdEstimate};
use crate::trace::Trace;

/// Correlation-length factor between adjacent Hann-windowed bins: a run of
/// w bins carries about w / 1.94 independent periodogram values.
const HANN_BIN_SPREAD: f64 = 1.94;
const LJUNG_BOX_LAGS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WhiteMethod {
    PsdFloor,
    Arma,
    Wiener,
}

impl WhiteMethod {
    pub fn name(&self) -> &'static str {
        match self {
            WhiteMethod::PsdFloor => "psd_floor",
            WhiteMethod::Arma => "arma",
            WhiteMethod::Wiener => "wiener",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhiteEstimate {
    /// Two-sided white density, V²/Hz.
    pub floor_density: f64,
    /// floor_density · fs, the white variance over [0⁺, fs/2].
    pub white_variance: f64,
    pub method: WhiteMethod,
    pub diagnostics: BTreeMap<String, f64>,
}

impl WhiteEstimate {
    fn new(floor_density: f64, fs: f64, method: WhiteMethod) -> Self {
        WhiteEstimate {
            floor_density,
            white_variance: floor_density * fs,
            method,
            diagnostics: BTreeMap::new(),
        }
    }
}

/// Welch segment used when the caller does not pick one: about 128
/// segments for short traces, capped at 4096 samples.
pub fn default_segment(n: usize) -> usize {
    (n / 128).next_power_of_two().clamp(64, 4096).min(n)
}

/// Welch segment behind the Wiener gain: finer averaging than the floor
/// estimate, since noise in P_signal pulls the gain below one.
pub fn wiener_segment(n: usize) -> usize {
    (n / 1024).next_power_of_two().clamp(256, 4096).min(n)
}

pub fn default_smooth_bins(bins: usize) -> usize {
    (bins / 8).max(1)
}

/// Centred moving median over `w` bins; entry i covers x[i..i + w].
fn moving_median(x: &[f64], w: usize) -> Vec<f64> {
    let mut buf = vec![0.0; w];
    (0..=x.len() - w)
        .map(|i| {
            buf.copy_from_slice(&x[i..i + w]);
            stats::median(&buf)
        })
        .collect()
}

/// Expected maximum of m standard normals (Blom's approximation).
fn expected_max_normal(m: f64) -> f64 {
    if m <= 1.0 {
        return 0.0;
    }
    stats::normal_quantile((m - 0.375) / (m + 0.25))
}

/// White floor as the minimum of a moving-median-smoothed spectrum over
/// [10/T, fs/2).
///
/// Two corrections are applied to the raw minimum. The median of a
/// chi-square(ν)/ν bin sits below its mean, so it is divided by that
/// median. Taking the minimum of noisy window medians also biases low;
/// the expected shortfall is modelled as the largest of m Gaussian
/// deviates, m being the number of windows that could have held the
/// minimum.
pub fn white_floor_psd(spectrum: &PsdEstimate, smooth_bins: usize) -> Result<WhiteEstimate> {
    let nb = spectrum.densities.len();
    if smooth_bins == 0 {
        return Err(Error::invalid("smooth_bins", "must be >= 1"));
    }
    if nb < 8 * smooth_bins {
        return Err(Error::invalid(
            "smooth_bins",
            format!("spectrum has {nb} bins, need at least 8 x {smooth_bins}"),
        ));
    }
    let f_guard = 10.0 / spectrum.duration;
    let nyq = spectrum.fs / 2.0;
    let usable: Vec<f64> = spectrum
        .frequencies
        .iter()
        .zip(&spectrum.densities)
        .filter(|(f, _)| **f > 0.0 && **f >= f_guard && **f < nyq)
        .map(|(_, d)| *d)
        .collect();
    if usable.len() < smooth_bins {
        return Err(Error::invalid(
            "spectrum",
            format!(
                "only {} bins above the guard band {f_guard:e} Hz, smoothing needs {smooth_bins}",
                usable.len()
            ),
        ));
    }
    let smooth = moving_median(&usable, smooth_bins);
    let raw = smooth.iter().copied().fold(f64::INFINITY, f64::min);

    let nu = spectrum.dof;
    let med_chi = ChiSquared::new(nu)
        .map_err(|e| Error::Numeric(e.to_string()))?
        .inverse_cdf(0.5)
        / nu;
    let n_eff = (smooth_bins as f64 / HANN_BIN_SPREAD).max(1.0);
    // sd of a sample median of n_eff values with relative sd sqrt(2/ν)
    let sd_med = (std::f64::consts::PI / (2.0 * n_eff)).sqrt() * (2.0 / nu).sqrt();
    let near = smooth
        .iter()
        .filter(|v| **v <= raw * (1.0 + 3.0 * sd_med))
        .count() as f64;
    let competing = (2.0 * near / smooth_bins as f64).max(1.0);
    let shortfall = (expected_max_normal(competing) * sd_med).min(0.5);
    let floor = raw / med_chi / (1.0 - shortfall);

    let mut est = WhiteEstimate::new(floor, spectrum.fs, WhiteMethod::PsdFloor);
    let d = &mut est.diagnostics;
    d.insert("raw_minimum".into(), raw);
    d.insert("median_correction".into(), 1.0 / med_chi);
    d.insert("min_correction".into(), 1.0 / (1.0 - shortfall));
    d.insert("competing_windows".into(), competing);
    d.insert("smooth_bins".into(), smooth_bins as f64);
    d.insert("dof".into(), nu);
    d.insert("guard_hz".into(), f_guard);
    Ok(est)
}

/// Floor estimate straight from a trace with default Welch settings.
pub fn white_floor_trace(trace: &Trace) -> Result<WhiteEstimate> {
    let spec = welch_psd(trace, default_segment(trace.len()), 0.5)?;
    white_floor_psd(&spec, default_smooth_bins(spec.densities.len()))
}

/// Least squares via the normal equations.
fn solve_ls(xtx: DMatrix<f64>, xty: DVector<f64>) -> Result<DVector<f64>> {
    match xtx.clone().cholesky() {
        Some(c) => Ok(c.solve(&xty)),
        None => xtx
            .lu()
            .solve(&xty)
            .ok_or_else(|| Error::Numeric("singular regression in ARMA fit".into())),
    }
}

/// AR(m) by ordinary least squares; residuals are indexed like x, zero
/// before index m.
fn fit_ar_ols(x: &[f64], m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xtx = DMatrix::zeros(m, m);
    let mut xty = DVector::zeros(m);
    for t in m..x.len() {
        for i in 0..m {
            let a = x[t - 1 - i];
            xty[i] += a * x[t];
            for j in 0..=i {
                xtx[(i, j)] += a * x[t - 1 - j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            xtx[(j, i)] = xtx[(i, j)];
        }
    }
    let phi = solve_ls(xtx, xty)?;
    let mut e = vec![0.0; x.len()];
    for t in m..x.len() {
        e[t] = x[t] - (0..m).map(|i| phi[i] * x[t - 1 - i]).sum::<f64>();
    }
    Ok((phi.iter().copied().collect(), e))
}

/// Conditional residuals e_t = x_t − Σφ x − Σθ e for t ≥ p, zero before.
fn css_residuals(x: &[f64], phi: &[f64], theta: &[f64]) -> Vec<f64> {
    let p = phi.len();
    let mut e = vec![0.0; x.len()];
    for t in p..x.len() {
        let mut v = x[t];
        for (i, f) in phi.iter().enumerate() {
            v -= f * x[t - 1 - i];
        }
        for (j, th) in theta.iter().enumerate() {
            if t > j {
                v -= th * e[t - 1 - j];
            }
        }
        e[t] = v;
    }
    e
}

fn sse(e: &[f64], start: usize) -> f64 {
    e[start..].iter().map(|v| v * v).sum()
}

/// Inverse roots of 1 − Σ c_i z^i, i.e. eigenvalues of the companion matrix.
fn inverse_roots(c: &[f64]) -> Vec<nalgebra::Complex<f64>> {
    let k = c.len();
    if k == 0 {
        return Vec::new();
    }
    let mut m = DMatrix::zeros(k, k);
    for (i, v) in c.iter().enumerate() {
        m[(0, i)] = *v;
    }
    for i in 1..k {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

fn max_modulus(r: &[nalgebra::Complex<f64>]) -> f64 {
    r.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn fmt_roots(r: &[nalgebra::Complex<f64>]) -> String {
    r.iter()
        .map(|z| {
            let root = 1.0 / z;
            format!("{:.6}{:+.6}i", root.re, root.im)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Ljung–Box portmanteau statistic and its chi-square p-value.
pub fn ljung_box(resid: &[f64], lags: usize, fitted: usize) -> Result<(f64, f64)> {
    let n = resid.len() as f64;
    let r = crate::wss::autocorrelation(resid, lags)?;
    let q = n
        * (n + 2.0)
        * (1..=lags)
            .map(|k| r[k] * r[k] / (n - k as f64))
            .sum::<f64>();
    let dof = (lags.saturating_sub(fitted)).max(1) as f64;
    let p = ChiSquared::new(dof)
        .map_err(|e| Error::Numeric(e.to_string()))?
        .sf(q);
    Ok((q, p))
}

/// Fits ARMA(p, q) by conditional least squares and returns the residual
/// trace together with the innovation variance as the white estimate.
///
/// Starts from a Hannan–Rissanen regression and refines with damped
/// Gauss–Newton steps when q > 0.
pub fn arma_whiten(trace: &Trace, p: usize, q: usize) -> Result<(Trace, WhiteEstimate)> {
    if p + q == 0 {
        return Err(Error::invalid("order", "p + q must be at least 1"));
    }
    let n = trace.len();
    if n < 50 * (p + q) {
        return Err(Error::invalid(
            "trace",
            format!(
                "{n} samples is too short for ARMA({p},{q}), need {}",
                50 * (p + q)
            ),
        ));
    }
    let mu = stats::mean(&trace.samples);
    let x: Vec<f64> = trace.samples.iter().map(|v| v - mu).collect();
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::Assumption(
            "constant trace has no innovation to fit".into(),
        ));
    }

    let (mut phi, mut theta) = if q == 0 {
        (fit_ar_ols(&x, p)?.0, Vec::new())
    } else {
        let m = (2 * (p + q)).max(20).min(n / 10);
        let (_, ehat) = fit_ar_ols(&x, m)?;
        let k = p + q;
        let start = m + q;
        let mut xtx = DMatrix::zeros(k, k);
        let mut xty = DVector::zeros(k);
        let mut row = vec![0.0; k];
        for t in start.max(p)..n {
            for i in 0..p {
                row[i] = x[t - 1 - i];
            }
            for j in 0..q {
                row[p + j] = ehat[t - 1 - j];
            }
            for a in 0..k {
                xty[a] += row[a] * x[t];
                for b in 0..k {
                    xtx[(a, b)] += row[a] * row[b];
                }
            }
        }
        let beta = solve_ls(xtx, xty)?;
        (beta.as_slice()[..p].to_vec(), beta.as_slice()[p..].to_vec())
    };

    let mut iterations = 0;
    if q > 0 {
        // keep the start inside the invertible region
        let ma: Vec<f64> = theta.iter().map(|t| -t).collect();
        if max_modulus(&inverse_roots(&ma)) >= 1.0 {
            theta.iter_mut().for_each(|t| *t *= 0.5);
        }
        let k = p + q;
        let mut e = css_residuals(&x, &phi, &theta);
        let mut s = sse(&e, p);
        for _ in 0..50 {
            iterations += 1;
            // derivatives of e_t with respect to (φ, θ)
            let mut d = vec![0.0; n * k];
            let mut jtj = DMatrix::zeros(k, k);
            let mut jte = DVector::zeros(k);
            for t in p..n {
                let mut g = vec![0.0; k];
                for i in 0..p {
                    g[i] = -x[t - 1 - i];
                }
                for j in 0..q {
                    if t > j {
                        g[p + j] = -e[t - 1 - j];
                    }
                }
                for (j, th) in theta.iter().enumerate() {
                    if t > j {
                        for a in 0..k {
                            g[a] -= th * d[(t - 1 - j) * k + a];
                        }
                    }
                }
                for a in 0..k {
                    jte[a] += g[a] * e[t];
                    for b in 0..k {
                        jtj[(a, b)] += g[a] * g[b];
                    }
                }
                d[t * k..(t + 1) * k].copy_from_slice(&g);
            }
            let step = solve_ls(jtj, -jte)?;
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let cand_phi: Vec<f64> = (0..p).map(|i| phi[i] + lambda * step[i]).collect();
                let cand_theta: Vec<f64> =
                    (0..q).map(|j| theta[j] + lambda * step[p + j]).collect();
                let ma: Vec<f64> = cand_theta.iter().map(|t| -t).collect();
                if max_modulus(&inverse_roots(&ma)) < 1.0 {
                    let ce = css_residuals(&x, &cand_phi, &cand_theta);
                    let cs = sse(&ce, p);
                    if cs <= s {
                        let rel = (s - cs) / s;
                        phi = cand_phi;
                        theta = cand_theta;
                        e = ce;
                        s = cs;
                        accepted = true;
                        if rel < 1e-10 {
                            lambda = 0.0;
                        }
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted || lambda == 0.0 {
                break;
            }
        }
    }

    let ar_inv = inverse_roots(&phi);
    if max_modulus(&ar_inv) >= 1.0 {
        return Err(Error::Numeric(format!(
            "fitted AR part is not stationary, roots: {}",
            fmt_roots(&ar_inv)
        )));
    }
    let ma: Vec<f64> = theta.iter().map(|t| -t).collect();
    let ma_inv = inverse_roots(&ma);
    if max_modulus(&ma_inv) >= 1.0 {
        return Err(Error::Numeric(format!(
            "fitted MA part is not invertible, roots: {}",
            fmt_roots(&ma_inv)
        )));
    }

    let e = css_residuals(&x, &phi, &theta);
    let resid = e[p..].to_vec();
    let var = stats::var_pop(&resid);
    let lags = LJUNG_BOX_LAGS.min(resid.len() / 4);
    let (lb, lb_p) = ljung_box(&resid, lags, p + q)?;

    let mut est = WhiteEstimate::new(var / trace.fs, trace.fs, WhiteMethod::Arma);
    let d = &mut est.diagnostics;
    for (i, v) in phi.iter().enumerate() {
        d.insert(format!("phi{}", i + 1), *v);
    }
    for (j, v) in theta.iter().enumerate() {
        d.insert(format!("theta{}", j + 1), *v);
    }
    d.insert("ljung_box_q".into(), lb);
    d.insert("ljung_box_p".into(), lb_p);
    d.insert("ljung_box_lags".into(), lags as f64);
    d.insert("iterations".into(), iterations as f64);
    let mut out = trace.with_samples(resid);
    out.label = format!("{} arma residual", trace.label).trim().to_string();
    Ok((out, est))
}

/// Applies H(f) = min(1, P_white / P_signal(f)) to the trace spectrum.
///
/// P_signal is a Welch estimate interpolated onto the FFT bins and held
/// at or above floor/100 so empty bins cannot blow up the gain.
pub fn wiener_extract(trace: &Trace, floor: &WhiteEstimate) -> Result<Trace> {
    let n = trace.len();
    let pw = floor.floor_density;
    if !(pw >= 0.0 && pw.is_finite()) {
        return Err(Error::invalid(
            "floor",
            "floor density must be finite and >= 0",
        ));
    }
    if pw == 0.0 {
        return Ok(trace.with_samples(vec![0.0; n]));
    }
    let spec = welch_psd(trace, wiener_segment(n), 0.5)?;
    let eps = pw / 100.0;
    let df_w = spec.frequencies[1];
    let last = spec.densities.len() - 1;
    let p_at = |f: f64| {
        let pos = f / df_w;
        let i = (pos.floor() as usize).min(last);
        let v = if i >= last {
            spec.densities[last]
        } else {
            let w = pos - i as f64;
            spec.densities[i] * (1.0 - w) + spec.densities[i + 1] * w
        };
        v.max(eps)
    };

    let mut buf: Vec<Complex64> = trace
        .samples
        .iter()
        .map(|v| Complex64::new(*v, 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = trace.fs / n as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = k.min(n - k);
        let h = (pw / p_at(kk as f64 * df)).min(1.0);
        *c *= h;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let samples = buf.iter().map(|c| c.re / n as f64).collect();
    Ok(trace.with_samples(samples))
}

/// Wiener-filters the trace with its own floor and reports the variance
/// of the output as the white estimate.
pub fn white_wiener(trace: &Trace) -> Result<(Trace, WhiteEstimate)> {
    let floor = white_floor_trace(trace)?;
    let out = wiener_extract(trace, &floor)?;
    let var = stats::var_pop(&out.samples);
    let mut est = WhiteEstimate::new(var / trace.fs, trace.fs, WhiteMethod::Wiener);
    est.diagnostics
        .insert("input_floor_density".into(), floor.floor_density);
    est.diagnostics
        .insert("input_variance".into(), stats::var_pop(&trace.samples));
    Ok((out, est))
}

pub const DEFAULT_ARMA_ORDER: (usize, usize) = (2, 2);

/// White estimate of a trace by the chosen method with default settings.
pub fn white_estimate(trace: &Trace, method: WhiteMethod) -> Result<WhiteEstimate> {
    match method {
        WhiteMethod::PsdFloor => white_floor_trace(trace),
        WhiteMethod::Arma => {
            let (p, q) = DEFAULT_ARMA_ORDER;
            Ok(arma_whiten(trace, p, q)?.1)
        }
        WhiteMethod::Wiener => Ok(white_wiener(trace)?.1),
    }
}
