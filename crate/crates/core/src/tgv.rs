//! Time-gated variance (TGV) of a model PSD.
//!
//! The autocorrelation is multiplied by a rectangular gate of width τ and
//! transformed back; the variance is the two-sided integral of the gated
//! density over [1/τ, fs/2]. Power-law and tone terms have closed forms.
//! Lorentzian lines go through a sampled FFT pipeline while the gate is
//! short compared to their coherence time.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::psd::{DiracTone, LorentzianLine, NoisePsdModel, PowerLawSet};
use crate::special::{ci, gauss_legendre, si, sinc};

/// Above this gate length (in units of 1/γ) a Lorentzian is treated as ungated.
pub const LORENTZ_UNGATED_GAMMA_TAU: f64 = 10.0;
/// Largest FFT the Lorentzian pipeline may use.
pub const MAX_FFT_LEN: usize = 1 << 23;
pub const DEFAULT_GRID_POINTS: usize = 2000;
/// Half-width, in units of 1/τ, of the finely gridded band around a tone.
const TONE_WINDOW: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    pub tau: f64,
    pub fs: f64,
    pub grid_points: usize,
}

impl GateConfig {
    pub fn new(tau: f64, fs: f64) -> Result<Self> {
        let g = GateConfig {
            tau,
            fs,
            grid_points: DEFAULT_GRID_POINTS,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::invalid(
                "fs",
                format!("must be > 0, got {}", self.fs),
            ));
        }
        if !(self.tau.is_finite() && self.tau > 2.0 / self.fs) {
            return Err(Error::invalid(
                "tau",
                format!("must exceed two sample periods (2/fs), got {}", self.tau),
            ));
        }
        if 1.0 / self.tau >= self.fs / 2.0 {
            return Err(Error::invalid("tau", "1/tau must be below fs/2"));
        }
        Ok(())
    }

    pub fn f_min(&self) -> f64 {
        1.0 / self.tau
    }

    pub fn f_max(&self) -> f64 {
        self.fs / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedSpectrum {
    pub frequencies: Vec<f64>,
    pub densities: Vec<f64>,
    pub tau: f64,
}

impl GatedSpectrum {
    /// Two-sided trapezoid integral over the stored grid.
    pub fn band_power(&self) -> f64 {
        2.0 * trapezoid(&self.frequencies, &self.densities)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TgvCurve {
    pub taus: Vec<f64>,
    pub variances: Vec<f64>,
    /// (component name, per-τ variance) when a breakdown was requested.
    pub per_component: Option<Vec<(String, Vec<f64>)>>,
}

impl TgvCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau_s,variance_V2");
        if let Some(pc) = &self.per_component {
            for (name, _) in pc {
                s.push(',');
                s.push_str(name);
            }
        }
        s.push('\n');
        for (i, (t, v)) in self.taus.iter().zip(&self.variances).enumerate() {
            s.push_str(&format!("{t:e},{v:e}"));
            if let Some(pc) = &self.per_component {
                for (_, c) in pc {
                    s.push_str(&format!(",{:e}", c[i]));
                }
            }
            s.push('\n');
        }
        s
    }
}

// x sin x + cos x - 1, with a series near 0 where the terms cancel.
fn ramp_bracket(x: f64) -> f64 {
    if x.abs() < 0.5 {
        let x2 = x * x;
        let mut term = 1.0;
        let mut sum = 0.0;
        let mut xp = 1.0;
        for m in 1..12 {
            xp *= x2;
            term /= ((2 * m - 1) * (2 * m)) as f64;
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * (2 * m - 1) as f64 * term * xp;
        }
        sum
    } else {
        x * x.sin() + x.cos() - 1.0
    }
}

/// Gated density of the power-law terms from the closed forms.
pub fn gated_psd_analytic(pl: &PowerLawSet, f: f64, tau: f64) -> Result<f64> {
    if f == 0.0 || !f.is_finite() {
        return Err(Error::Domain(format!("gated density at f = {f}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", "must be > 0"));
    }
    let f = f.abs();
    Ok(gated_m2(pl.h_m2, f, tau) + gated_m1(pl.h_m1, f, tau) + pl.h0 + pl.h1 * f + pl.h2 * f * f)
}

fn gated_m2(h: f64, f: f64, tau: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    -h * ramp_bracket(PI * f * tau) / (f * f)
}

fn gated_m1(h: f64, f: f64, tau: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    let s = (PI * f * tau / 2.0).sin();
    2.0 * h * s * s / f
}

fn gl32() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(32))
}

/// Gated power-law density by quadrature of the gated autocorrelation
/// transforms, ∫ -2π²h|t| e^{-2πift} dt and ∫ iπh sign(t) e^{-2πift} dt
/// over |t| ≤ τ/2. Whole periods of the kernel integrate to zero, so only
/// the trailing partial period is integrated.
pub fn gated_psd_quadrature(pl: &PowerLawSet, f: f64, tau: f64) -> f64 {
    let f = f.abs();
    let (x, w) = gl32();
    let periods = f * tau / 2.0;
    let k = periods.floor();
    let a = k / f;
    let r = (periods - k) / f;
    let omega = 2.0 * PI * f;
    let mut jc = 0.0;
    let mut js = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        let s = 0.5 * r * (xi + 1.0);
        let wt = 0.5 * r * wi;
        let (sn, cs) = (omega * s).sin_cos();
        jc += wt * (a + s) * cs;
        js += wt * sn;
    }
    -4.0 * PI * PI * pl.h_m2 * jc + 2.0 * PI * pl.h_m1 * js + pl.h0 + pl.h1 * f + pl.h2 * f * f
}

/// Density of a tone gated by rect(t/τ): A·τ[sinc(τ(f-fp)) + sinc(τ(f+fp))].
pub fn gated_tone_density(tone: &DiracTone, f: f64, tau: f64) -> f64 {
    let f = f.abs();
    tone.amplitude * tau * (sinc(tau * (f - tone.f_peak)) + sinc(tau * (f + tone.f_peak)))
}

/// One-period (2/τ) boxcar average of `gated_tone_density`, for grid
/// points too far from the tone to follow its oscillation.
fn gated_tone_density_averaged(tone: &DiracTone, f: f64, tau: f64) -> f64 {
    let avg = |u: f64| (si(PI * (u + 1.0)) - si(PI * (u - 1.0))) / (2.0 * PI);
    let f = f.abs();
    tone.amplitude * tau * (avg(tau * (f - tone.f_peak)) + avg(tau * (f + tone.f_peak)))
}

/// Two-sided gated power of the power-law terms over [1/τ, fs/2].
pub fn tgv_power_law_terms(pl: &PowerLawSet, gate: &GateConfig) -> [f64; 5] {
    let tau = gate.tau;
    let big_f = gate.f_max();
    let a = gate.f_min();
    let x = PI * tau * big_f;
    let m2 = if pl.h_m2 == 0.0 {
        0.0
    } else {
        let s = (x / 2.0).sin();
        4.0 * pl.h_m2 * tau - 2.0 * pl.h_m2 * PI * tau * (2.0 * s * s) / x
    };
    let m1 = if pl.h_m1 == 0.0 {
        0.0
    } else {
        2.0 * pl.h_m1 * ((x / PI).ln() - ci(x) + ci(PI))
    };
    [
        m2,
        m1,
        2.0 * pl.h0 * (big_f - a),
        pl.h1 * (big_f * big_f - a * a),
        2.0 * pl.h2 * (big_f.powi(3) - a.powi(3)) / 3.0,
    ]
}

pub fn tgv_tone(tone: &DiracTone, gate: &GateConfig) -> f64 {
    let tau = gate.tau;
    let big_f = gate.f_max();
    let k = |fp: f64| (si(PI * tau * (big_f - fp)) - si(PI * (1.0 - tau * fp))) / PI;
    2.0 * tone.amplitude * (k(tone.f_peak) + k(-tone.f_peak))
}

/// Gated Lorentzian density on a uniform grid f_k = k·df, k = 0..len.
struct UniformSpectrum {
    df: f64,
    dens: Vec<f64>,
}

impl UniformSpectrum {
    fn at(&self, f: f64) -> f64 {
        let u = f.abs() / self.df;
        let i = u.floor() as usize;
        if i + 1 >= self.dens.len() {
            return *self.dens.last().unwrap_or(&0.0);
        }
        let t = u - i as f64;
        self.dens[i] * (1.0 - t) + self.dens[i + 1] * t
    }

    fn integrate(&self, a: f64, b: f64) -> f64 {
        let ia = (a / self.df).ceil() as usize;
        let ib = ((b / self.df).floor() as usize).min(self.dens.len() - 1);
        if ia > ib {
            return 0.5 * (self.at(a) + self.at(b)) * (b - a);
        }
        let mut s = 0.5 * (self.at(a) + self.dens[ia]) * (ia as f64 * self.df - a);
        for i in ia..ib {
            s += 0.5 * (self.dens[i] + self.dens[i + 1]) * self.df;
        }
        s + 0.5 * (self.dens[ib] + self.at(b)) * (b - ib as f64 * self.df)
    }
}

fn lorentzian_is_gated(l: &LorentzianLine, tau: f64) -> bool {
    tau * l.gamma < LORENTZ_UNGATED_GAMMA_TAU
}

/// Inverse FFT of the sampled line, rect gate in time, forward FFT back.
fn lorentzian_gated(l: &LorentzianLine, tau: f64, fs: f64) -> Result<UniformSpectrum> {
    let df = (l.gamma / 50.0).min(1.0 / (20.0 * tau));
    let span = fs.max(64.0 / tau);
    let n = ((span / df).ceil() as usize).next_power_of_two();
    if n > MAX_FFT_LEN {
        return Err(Error::Resolution(format!(
            "gated Lorentzian at tau = {tau} s needs an FFT of {n} points (limit {MAX_FFT_LEN})"
        )));
    }
    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| {
            let kk = if k < n / 2 {
                k as f64
            } else {
                k as f64 - n as f64
            };
            Complex64::new(l.density(kk * df) * df, 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_inverse(n).process(&mut buf);

    // Samples of R(t) at t_j = j·dt; trapezoid weights with a linear end
    // piece so the gate edge need not fall on a sample.
    let dt = 1.0 / (n as f64 * df);
    let half = tau / 2.0 / dt;
    let m = half.floor() as usize;
    let e = half - m as f64;
    if m + 1 >= n / 2 {
        return Err(Error::Resolution(
            "gate wider than the sampled window".into(),
        ));
    }
    // Indexed by |j|; the weight at j = 0 collects both half-gates.
    let mut w = vec![0.0; n / 2 + 1];
    w[..m].fill(1.0);
    if m == 0 {
        w[0] = 2.0 * e * (1.0 - e / 2.0);
    } else {
        w[m] = 0.5 + e * (1.0 - e / 2.0);
    }
    w[m + 1] += e * e / 2.0;
    for (j, b) in buf.iter_mut().enumerate() {
        *b *= w[j.min(n - j)] * dt;
    }
    planner.plan_fft_forward(n).process(&mut buf);
    let dens = buf[..=n / 2].iter().map(|c| c.re).collect();
    Ok(UniformSpectrum { df, dens })
}

pub fn tgv_lorentzian(l: &LorentzianLine, gate: &GateConfig) -> Result<f64> {
    let (a, b) = (gate.f_min(), gate.f_max());
    if !lorentzian_is_gated(l, gate.tau) {
        return Ok(l.band_power(a, b));
    }
    let g = lorentzian_gated(l, gate.tau, gate.fs)?;
    Ok(2.0 * g.integrate(a, b))
}

/// Named per-component TGV values; their sum is `tgv`.
pub fn tgv_components(model: &NoisePsdModel, gate: &GateConfig) -> Result<Vec<(String, f64)>> {
    gate.validate()?;
    let mut out = Vec::with_capacity(1 + model.tones.len() + model.lorentzians.len());
    out.push((
        "power_law".to_string(),
        tgv_power_law_terms(&model.power_law, gate).iter().sum(),
    ));
    for (i, t) in model.tones.iter().enumerate() {
        out.push((format!("tone{i}"), tgv_tone(t, gate)));
    }
    for (i, l) in model.lorentzians.iter().enumerate() {
        out.push((format!("lorentzian{i}"), tgv_lorentzian(l, gate)?));
    }
    Ok(out)
}

pub fn tgv(model: &NoisePsdModel, gate: &GateConfig) -> Result<f64> {
    Ok(tgv_components(model, gate)?.iter().map(|(_, v)| v).sum())
}

pub fn tgv_curve(
    model: &NoisePsdModel,
    taus: &[f64],
    fs: f64,
    breakdown: bool,
) -> Result<TgvCurve> {
    for w in taus.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::invalid("taus", "must be strictly increasing"));
        }
    }
    let rows: Vec<Vec<(String, f64)>> = taus
        .par_iter()
        .map(|&tau| {
            let gate = GateConfig::new(tau, fs)
                .map_err(|e| Error::invalid("taus", format!("tau = {tau}: {e}")))?;
            tgv_components(model, &gate)
        })
        .collect::<Result<_>>()?;
    let variances = rows
        .iter()
        .map(|r| r.iter().map(|(_, v)| v).sum())
        .collect();
    let per_component = breakdown.then(|| {
        let names: Vec<String> = rows
            .first()
            .map(|r| r.iter().map(|(n, _)| n.clone()).collect())
            .unwrap_or_default();
        names
            .iter()
            .enumerate()
            .map(|(j, n)| (n.clone(), rows.iter().map(|r| r[j].1).collect()))
            .collect()
    });
    Ok(TgvCurve {
        taus: taus.to_vec(),
        variances,
        per_component,
    })
}

/// Log-spaced grid over [1/τ, fs/2], refined around every line.
pub fn spectrum_grid(model: &NoisePsdModel, gate: &GateConfig) -> Result<Vec<f64>> {
    if gate.grid_points < 16 {
        return Err(Error::Resolution(format!(
            "grid_points = {} is too coarse (need >= 16)",
            gate.grid_points
        )));
    }
    let (a, b) = (gate.f_min(), gate.f_max());
    let n = gate.grid_points;
    let ratio = (b / a).ln();
    let mut g: Vec<f64> = (0..n)
        .map(|i| a * (ratio * i as f64 / (n - 1) as f64).exp())
        .collect();
    g[n - 1] = b;
    let mut push_window = |c: f64, half: f64, step: f64| {
        let k = (half / step).round() as i64;
        for i in -k..=k {
            let f = c + i as f64 * step;
            if f > a && f < b {
                g.push(f);
            }
        }
    };
    for l in &model.lorentzians {
        push_window(l.f_center, 5.0 * l.gamma, l.gamma / 20.0);
    }
    for t in &model.tones {
        push_window(t.f_peak, TONE_WINDOW / gate.tau, 1.0 / (20.0 * gate.tau));
    }
    g.sort_by(|x, y| x.partial_cmp(y).unwrap());
    g.dedup();
    Ok(g)
}

/// Gated spectrum of the whole model on the grid from `spectrum_grid`.
///
/// Power-law terms come from quadrature of the gated autocorrelation
/// transforms (independent of the closed forms), tones from their exact
/// sinc lines and Lorentzians from the sampled FFT pipeline. Beyond 50/τ
/// from a tone its density is averaged over one 2/τ period, since the
/// log grid there is far coarser than the oscillation.
pub fn gated_psd_numeric(model: &NoisePsdModel, gate: &GateConfig) -> Result<GatedSpectrum> {
    gate.validate()?;
    let freqs = spectrum_grid(model, gate)?;
    let tau = gate.tau;
    let lines = model
        .lorentzians
        .iter()
        .map(|l| {
            if lorentzian_is_gated(l, tau) {
                lorentzian_gated(l, tau, gate.fs).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let densities = freqs
        .iter()
        .map(|&f| {
            let mut s = gated_psd_quadrature(&model.power_law, f, tau);
            for t in &model.tones {
                s += if (f - t.f_peak).abs() * tau <= TONE_WINDOW {
                    gated_tone_density(t, f, tau)
                } else {
                    gated_tone_density_averaged(t, f, tau)
                };
            }
            for (l, g) in model.lorentzians.iter().zip(&lines) {
                s += match g {
                    Some(g) => g.at(f),
                    None => l.density(f),
                };
            }
            s
        })
        .collect();
    Ok(GatedSpectrum {
        frequencies: freqs,
        densities,
        tau,
    })
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum()
}

/// `n` log-spaced points from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let r = (b / a).ln();
    let mut v: Vec<f64> = (0..n)
        .map(|i| a * (r * i as f64 / (n - 1) as f64).exp())
        .collect();
    v[n - 1] = b;
    v
}
