//! Gaussian trace synthesis from a PSD model, Welch spectra, decimation
//! and windowed variances.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::psd::NoisePsdModel;
use crate::stats;
use crate::trace::{Switches, Trace};

/// Taps per unit of decimation factor in the anti-alias filter.
pub const DECIMATION_TAPS_PER_FACTOR: usize = 32;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws a trace whose expected periodogram follows `model`.
///
/// Each positive-frequency bin gets an independent complex Gaussian with
/// E|X_k|² = S(f_k)·fs/n, mirrored to negative frequencies; the DC bin is
/// zero. Tones are added as cosines of variance 2A with a random phase.
pub fn synthesize(model: &NoisePsdModel, fs: f64, n: usize, seed: u64) -> Result<Trace> {
    model.validate()?;
    if n < 2 {
        return Err(Error::invalid("n", "need at least 2 samples"));
    }
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::invalid("fs", "must be > 0"));
    }
    let mut rng = rng(seed);
    let df = fs / n as f64;
    let mut warnings = Vec::new();
    let mut samples = vec![0.0; n];

    let has_density = !model.power_law.is_zero() || !model.lorentzians.is_empty();
    if has_density {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let half = n / 2;
        for k in 1..=half {
            let s = model.density(k as f64 * df) * df;
            if n.is_multiple_of(2) && k == half {
                let g: f64 = rng.sample(StandardNormal);
                buf[k] = Complex64::new(s.sqrt() * g, 0.0);
            } else {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                let c = Complex64::new(a, b) * (s / 2.0).sqrt();
                buf[k] = c;
                buf[n - k] = c.conj();
            }
        }
        FftPlanner::<f64>::new()
            .plan_fft_inverse(n)
            .process(&mut buf);
        for (x, c) in samples.iter_mut().zip(&buf) {
            *x = c.re;
        }
        if model.power_law.h_m2 > 0.0 || model.power_law.h_m1 > 0.0 {
            warnings.push(format!(
                "1/f and 1/f^2 terms are truncated below the lowest bin fs/n = {df:e} Hz"
            ));
        }
    }

    for t in &model.tones {
        let phase = rng.random::<f64>() * 2.0 * PI;
        if t.f_peak >= fs / 2.0 {
            warnings.push(format!(
                "tone at {:e} Hz is at or above Nyquist and was omitted",
                t.f_peak
            ));
            continue;
        }
        let amp = (4.0 * t.amplitude).sqrt();
        let w = 2.0 * PI * t.f_peak / fs;
        for (i, x) in samples.iter_mut().enumerate() {
            *x += amp * (w * i as f64 + phase).cos();
        }
    }

    Ok(Trace {
        samples,
        fs,
        switches: Switches::default(),
        seed: Some(seed),
        label: model.label.clone(),
        warnings,
    })
}

/// Averaged periodogram with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub frequencies: Vec<f64>,
    /// Two-sided density, V²/Hz, same convention as the PSD models.
    pub densities: Vec<f64>,
    pub fs: f64,
    /// Length of the trace the estimate came from, s.
    pub duration: f64,
    pub segments: usize,
    /// Equivalent chi-square degrees of freedom per bin.
    pub dof: f64,
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate with a periodic Hann window and per-segment mean removal.
pub fn welch_psd(trace: &Trace, segment: usize, overlap: f64) -> Result<PsdEstimate> {
    if segment < 16 {
        return Err(Error::invalid("segment", "must be at least 16 samples"));
    }
    if segment > trace.len() {
        return Err(Error::invalid("segment", "longer than the trace"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid("overlap", "must lie in [0, 1)"));
    }
    let step = ((segment as f64 * (1.0 - overlap)).round() as usize).max(1);
    let win = hann(segment);
    let u: f64 = win.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment);
    let nb = segment / 2 + 1;
    let mut acc = vec![0.0; nb];
    let mut count = 0;
    let mut buf = vec![Complex64::new(0.0, 0.0); segment];
    let mut start = 0;
    while start + segment <= trace.len() {
        let seg = &trace.samples[start..start + segment];
        let m = stats::mean(seg);
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&win) {
            *b = Complex64::new((x - m) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += step;
    }
    let scale = 1.0 / (trace.fs * u * count as f64);
    let densities = acc.iter().map(|a| a * scale).collect();
    let frequencies = (0..nb)
        .map(|k| k as f64 * trace.fs / segment as f64)
        .collect();

    // Overlap-corrected equivalent degrees of freedom.
    let mut denom = 1.0;
    let mut j = 1;
    while j < count && j * step < segment {
        let shift = j * step;
        let rho: f64 = (0..segment - shift)
            .map(|i| win[i] * win[i + shift])
            .sum::<f64>()
            / u;
        denom += 2.0 * (1.0 - j as f64 / count as f64) * rho * rho;
        j += 1;
    }
    Ok(PsdEstimate {
        frequencies,
        densities,
        fs: trace.fs,
        duration: trace.duration(),
        segments: count,
        dof: 2.0 * count as f64 / denom,
    })
}

/// Anti-alias filter: Blackman-windowed sinc cut at the new Nyquist.
pub fn decimation_filter(k: usize) -> Vec<f64> {
    let len = DECIMATION_TAPS_PER_FACTOR * k + 1;
    let c = (len - 1) as f64 / 2.0;
    let fc = 0.5 / k as f64;
    let mut h: Vec<f64> = (0..len)
        .map(|i| {
            let x = i as f64 - c;
            let a = 2.0 * PI * i as f64 / (len - 1) as f64;
            let w = 0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos();
            2.0 * fc * crate::special::sinc(2.0 * fc * x) * w
        })
        .collect();
    let s: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= s);
    h
}

/// Low-pass filters and keeps every k-th sample. Only outputs whose
/// filter support lies fully inside the input are produced.
pub fn decimate(trace: &Trace, k: usize) -> Result<Trace> {
    if k == 0 {
        return Err(Error::invalid("k", "must be >= 1"));
    }
    if k == 1 {
        return Ok(trace.clone());
    }
    let h = decimation_filter(k);
    let n = trace.len();
    if h.len() + k > n {
        return Err(Error::invalid(
            "k",
            format!(
                "factor {k} needs a {}-tap filter, trace has {n} samples",
                h.len()
            ),
        ));
    }
    let m = (n - h.len()) / k + 1;
    let x = &trace.samples;
    let samples: Vec<f64> = (0..m)
        .map(|j| {
            let s = &x[j * k..j * k + h.len()];
            s.iter().zip(&h).map(|(a, b)| a * b).sum()
        })
        .collect();
    let mut out = trace.with_samples(samples);
    out.fs = trace.fs / k as f64;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowedVariance {
    pub mean: f64,
    /// Standard error across windows; None with a single window.
    pub se: Option<f64>,
    pub windows: usize,
    pub window_len: usize,
}

/// Mean of per-window variances over disjoint windows of duration τ.
/// Each window has its own mean removed and uses divisor M.
pub fn windowed_variance(trace: &Trace, tau: f64) -> Result<WindowedVariance> {
    let m = (tau * trace.fs).round();
    if !(m >= 2.0) {
        return Err(Error::invalid("tau", "window must hold at least 2 samples"));
    }
    let m = m as usize;
    let k = trace.len() / m;
    if k == 0 {
        return Err(Error::invalid(
            "tau",
            format!("window of {m} samples exceeds the trace ({})", trace.len()),
        ));
    }
    let vars: Vec<f64> = trace.samples[..k * m]
        .chunks_exact(m)
        .map(stats::var_pop)
        .collect();
    let mean = stats::mean(&vars);
    let se = (k >= 2).then(|| (stats::var_sample(&vars) / k as f64).sqrt());
    Ok(WindowedVariance {
        mean,
        se,
        windows: k,
        window_len: m,
    })
}

/// Non-stationary fixtures for exercising the stationarity tests.
pub mod fixtures {
    use super::*;

    /// White Gaussian trace of variance `var`.
    pub fn white(n: usize, var: f64, fs: f64, seed: u64) -> Trace {
        let mut r = rng(seed);
        let s = var.sqrt();
        let samples = (0..n)
            .map(|_| s * r.sample::<f64, _>(StandardNormal))
            .collect();
        let mut t = Trace::new(samples, fs).expect("valid white trace");
        t.seed = Some(seed);
        t
    }

    /// AR(1) trace x_t = φ x_{t-1} + e_t, started from the stationary law.
    pub fn ar1(n: usize, phi: f64, innovation_var: f64, fs: f64, seed: u64) -> Trace {
        let mut r = rng(seed);
        let s = innovation_var.sqrt();
        let mut x = s / (1.0 - phi * phi).sqrt() * r.sample::<f64, _>(StandardNormal);
        let samples = (0..n)
            .map(|_| {
                x = phi * x + s * r.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let mut t = Trace::new(samples, fs).expect("valid AR(1) trace");
        t.seed = Some(seed);
        t
    }

    /// Adds a linear ramp rising by `total` over the trace.
    pub fn with_linear_drift(t: &Trace, total: f64) -> Trace {
        let n = t.len() as f64;
        t.with_samples(
            t.samples
                .iter()
                .enumerate()
                .map(|(i, x)| x + total * i as f64 / (n - 1.0))
                .collect(),
        )
    }

    /// Multiplies the variance of the second half by `factor`.
    pub fn with_variance_step(t: &Trace, factor: f64) -> Trace {
        let half = t.len() / 2;
        let g = factor.sqrt();
        t.with_samples(
            t.samples
                .iter()
                .enumerate()
                .map(|(i, x)| if i >= half { x * g } else { *x })
                .collect(),
        )
    }
}
