//! Parametric receiver-noise PSD models.
//!
//! Densities are two-sided, in V²/Hz, and evaluated at |f|. Every variance
//! derived from them therefore carries a factor 2 over positive frequencies.

use std::f64::consts::PI;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// Power-law coefficients h_α for α = -2..=2.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerLawSet {
    pub h_m2: f64,
    pub h_m1: f64,
    pub h0: f64,
    pub h1: f64,
    pub h2: f64,
}

impl PowerLawSet {
    pub fn new(h_m2: f64, h_m1: f64, h0: f64, h1: f64, h2: f64) -> Result<Self> {
        let s = PowerLawSet {
            h_m2,
            h_m1,
            h0,
            h1,
            h2,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn white(h0: f64) -> Self {
        PowerLawSet {
            h0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(
                    format!("power_law.{name}"),
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        Ok(())
    }

    /// (name, value) pairs in order of increasing exponent.
    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("h_m2", self.h_m2),
            ("h_m1", self.h_m1),
            ("h0", self.h0),
            ("h1", self.h1),
            ("h2", self.h2),
        ]
    }

    pub fn is_zero(&self) -> bool {
        self.named().iter().all(|(_, v)| *v == 0.0)
    }

    pub fn eval(&self, f: f64) -> f64 {
        let f = f.abs();
        self.h_m2 / (f * f) + self.h_m1 / f + self.h0 + self.h1 * f + self.h2 * f * f
    }

    pub fn add(&self, o: &PowerLawSet) -> PowerLawSet {
        PowerLawSet {
            h_m2: self.h_m2 + o.h_m2,
            h_m1: self.h_m1 + o.h_m1,
            h0: self.h0 + o.h0,
            h1: self.h1 + o.h1,
            h2: self.h2 + o.h2,
        }
    }

    pub fn scale(&self, c: f64) -> PowerLawSet {
        PowerLawSet {
            h_m2: self.h_m2 * c,
            h_m1: self.h_m1 * c,
            h0: self.h0 * c,
            h1: self.h1 * c,
            h2: self.h2 * c,
        }
    }

    /// Two-sided variance 2∫_a^b S(f) df.
    pub fn band_power(&self, a: f64, b: f64) -> f64 {
        2.0 * (self.h_m2 * (1.0 / a - 1.0 / b)
            + self.h_m1 * (b / a).ln()
            + self.h0 * (b - a)
            + self.h1 * (b * b - a * a) / 2.0
            + self.h2 * (b * b * b - a * a * a) / 3.0)
    }
}

/// A spectral line carrying weight `amplitude` (V²) at ±`f_peak`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiracTone {
    pub f_peak: f64,
    pub amplitude: f64,
}

impl DiracTone {
    pub fn new(f_peak: f64, amplitude: f64) -> Result<Self> {
        let t = DiracTone { f_peak, amplitude };
        t.validate("tone")?;
        Ok(t)
    }

    fn validate(&self, at: &str) -> Result<()> {
        if !(self.f_peak.is_finite() && self.f_peak > 0.0) {
            return Err(Error::invalid(format!("{at}.f"), "must be > 0"));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::invalid(format!("{at}.A"), "must be >= 0"));
        }
        Ok(())
    }

    pub fn band_power(&self, a: f64, b: f64) -> f64 {
        if a < self.f_peak && self.f_peak < b {
            2.0 * self.amplitude
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianLine {
    pub f_center: f64,
    pub amplitude: f64,
    pub gamma: f64,
}

impl LorentzianLine {
    pub fn new(f_center: f64, amplitude: f64, gamma: f64) -> Result<Self> {
        let l = LorentzianLine {
            f_center,
            amplitude,
            gamma,
        };
        l.validate("lorentzian")?;
        Ok(l)
    }

    fn validate(&self, at: &str) -> Result<()> {
        if !(self.f_center.is_finite() && self.f_center > 0.0) {
            return Err(Error::invalid(format!("{at}.f0"), "must be > 0"));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::invalid(format!("{at}.A"), "must be >= 0"));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(format!("{at}.gamma"), "must be > 0"));
        }
        Ok(())
    }

    pub fn density(&self, f: f64) -> f64 {
        let d = f.abs() - self.f_center;
        self.amplitude * self.gamma / (PI * (d * d + self.gamma * self.gamma))
    }

    /// Two-sided variance 2∫_a^b of the line density, 0 <= a < b.
    pub fn band_power(&self, a: f64, b: f64) -> f64 {
        let g = self.gamma;
        let f0 = self.f_center;
        2.0 * self.amplitude / PI * (((b - f0) / g).atan() - ((a - f0) / g).atan())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoisePsdModel {
    pub label: String,
    pub power_law: PowerLawSet,
    pub tones: Vec<DiracTone>,
    pub lorentzians: Vec<LorentzianLine>,
}

/// One additive piece of a model, for band powers and breakdowns.
#[derive(Debug, Clone, Copy)]
pub enum Component<'a> {
    PowerLaw(&'a PowerLawSet),
    Tone(&'a DiracTone),
    Lorentzian(&'a LorentzianLine),
}

impl NoisePsdModel {
    pub fn new(
        label: impl Into<String>,
        power_law: PowerLawSet,
        tones: Vec<DiracTone>,
        lorentzians: Vec<LorentzianLine>,
    ) -> Result<Self> {
        let m = NoisePsdModel {
            label: label.into(),
            power_law,
            tones,
            lorentzians,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn white(label: impl Into<String>, h0: f64) -> Self {
        NoisePsdModel {
            label: label.into(),
            power_law: PowerLawSet::white(h0),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.power_law.validate()?;
        for (i, t) in self.tones.iter().enumerate() {
            t.validate(&format!("tones[{i}]"))?;
        }
        for (i, l) in self.lorentzians.iter().enumerate() {
            l.validate(&format!("lorentzians[{i}]"))?;
        }
        Ok(())
    }

    /// Continuous density at |f|; tones carry weight, not density.
    pub fn eval_psd(&self, f: f64) -> Result<f64> {
        if f == 0.0 || !f.is_finite() {
            return Err(Error::Domain(format!("PSD evaluated at f = {f}")));
        }
        Ok(self.density(f))
    }

    pub(crate) fn density(&self, f: f64) -> f64 {
        let mut s = self.power_law.eval(f);
        for l in &self.lorentzians {
            s += l.density(f);
        }
        s
    }

    pub fn components(&self) -> Vec<Component<'_>> {
        let mut v = vec![Component::PowerLaw(&self.power_law)];
        v.extend(self.tones.iter().map(Component::Tone));
        v.extend(self.lorentzians.iter().map(Component::Lorentzian));
        v
    }

    /// Sum of two models: coefficients add, lines are concatenated.
    pub fn add(&self, other: &NoisePsdModel) -> NoisePsdModel {
        let mut tones = self.tones.clone();
        tones.extend_from_slice(&other.tones);
        let mut lorentzians = self.lorentzians.clone();
        lorentzians.extend_from_slice(&other.lorentzians);
        NoisePsdModel {
            label: self.label.clone(),
            power_law: self.power_law.add(&other.power_law),
            tones,
            lorentzians,
        }
    }

    /// Multiplies every weight and density by `c`.
    pub fn scaled(&self, c: f64) -> NoisePsdModel {
        NoisePsdModel {
            label: self.label.clone(),
            power_law: self.power_law.scale(c),
            tones: self
                .tones
                .iter()
                .map(|t| DiracTone {
                    amplitude: t.amplitude * c,
                    ..*t
                })
                .collect(),
            lorentzians: self
                .lorentzians
                .iter()
                .map(|l| LorentzianLine {
                    amplitude: l.amplitude * c,
                    ..*l
                })
                .collect(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn band_power(&self, f_lo: f64, f_hi: f64) -> Result<f64> {
        self.components()
            .into_iter()
            .map(|c| component_power(c, f_lo, f_hi))
            .sum()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s)?;
        model_from_value(&v)
    }

    pub fn to_json_value(&self) -> Value {
        let pl = &self.power_law;
        json!({
            "label": self.label,
            "power_law": {
                "h_m2": pl.h_m2, "h_m1": pl.h_m1, "h0": pl.h0, "h1": pl.h1, "h2": pl.h2
            },
            "tones": self.tones.iter()
                .map(|t| json!({"f": t.f_peak, "A": t.amplitude}))
                .collect::<Vec<_>>(),
            "lorentzians": self.lorentzians.iter()
                .map(|l| json!({"f0": l.f_center, "A": l.amplitude, "gamma": l.gamma}))
                .collect::<Vec<_>>(),
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json_value()).expect("plain JSON");
        s.push('\n');
        s
    }
}

/// Two-sided variance contributed by `part` inside (f_lo, f_hi).
pub fn component_power(part: Component<'_>, f_lo: f64, f_hi: f64) -> Result<f64> {
    if !(f_lo > 0.0 && f_hi > f_lo && f_hi.is_finite()) {
        return Err(Error::invalid(
            "band",
            format!("need 0 < f_lo < f_hi, got [{f_lo}, {f_hi}]"),
        ));
    }
    Ok(match part {
        Component::PowerLaw(p) => p.band_power(f_lo, f_hi),
        Component::Tone(t) => t.band_power(f_lo, f_hi),
        Component::Lorentzian(l) => l.band_power(f_lo, f_hi),
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NoisePsdModel> {
    let s = std::fs::read_to_string(path)?;
    NoisePsdModel::from_json_str(&s)
}

pub fn save_model(model: &NoisePsdModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model.to_json_string())?;
    Ok(())
}

fn num(obj: &Map<String, Value>, key: &str, at: &str) -> Result<f64> {
    match obj.get(key) {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::invalid(format!("{at}.{key}"), "not a number")),
        None => Err(Error::invalid(format!("{at}.{key}"), "missing")),
    }
}

fn opt_num(obj: &Map<String, Value>, key: &str, at: &str) -> Result<f64> {
    if obj.contains_key(key) {
        num(obj, key, at)
    } else {
        Ok(0.0)
    }
}

fn model_from_value(v: &Value) -> Result<NoisePsdModel> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::invalid("model", "top level must be an object"))?;
    let label = match obj.get("label") {
        None => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(Error::invalid("label", "must be a string")),
    };
    let power_law = match obj.get("power_law") {
        None => PowerLawSet::default(),
        Some(Value::Object(p)) => PowerLawSet {
            h_m2: opt_num(p, "h_m2", "power_law")?,
            h_m1: opt_num(p, "h_m1", "power_law")?,
            h0: opt_num(p, "h0", "power_law")?,
            h1: opt_num(p, "h1", "power_law")?,
            h2: opt_num(p, "h2", "power_law")?,
        },
        Some(_) => return Err(Error::invalid("power_law", "must be an object")),
    };
    let tones = list(obj, "tones")?
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let at = format!("tones[{i}]");
            let o = t
                .as_object()
                .ok_or_else(|| Error::invalid(at.clone(), "must be an object"))?;
            Ok(DiracTone {
                f_peak: num(o, "f", &at)?,
                amplitude: num(o, "A", &at)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lorentzians = list(obj, "lorentzians")?
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let at = format!("lorentzians[{i}]");
            let o = l
                .as_object()
                .ok_or_else(|| Error::invalid(at.clone(), "must be an object"))?;
            Ok(LorentzianLine {
                f_center: num(o, "f0", &at)?,
                amplitude: num(o, "A", &at)?,
                gamma: num(o, "gamma", &at)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = NoisePsdModel {
        label,
        power_law,
        tones,
        lorentzians,
    };
    m.validate()?;
    Ok(m)
}

fn list<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a [Value]> {
    match obj.get(key) {
        None => Ok(&[]),
        Some(Value::Array(a)) => Ok(a.as_slice()),
        Some(_) => Err(Error::invalid(key, "must be a list")),
    }
}

/// Bundled model files, embedded at build time.
pub mod bundled {
    use super::NoisePsdModel;

    pub const ELECTRONIC_JSON: &str = include_str!("../../../models/electronic.json");
    pub const RECEIVER_JSON: &str = include_str!("../../../models/receiver.json");

    pub fn electronic() -> NoisePsdModel {
        NoisePsdModel::from_json_str(ELECTRONIC_JSON).expect("bundled electronic model")
    }

    pub fn receiver() -> NoisePsdModel {
        NoisePsdModel::from_json_str(RECEIVER_JSON).expect("bundled receiver model")
    }
}
