//! Sampled detector records and the `.nct` container.
//!
//! Layout: the 8 magic bytes `NCTRACE1`, a little-endian u32 header length,
//! a JSON header, then `n` little-endian f64 samples.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NCT_MAGIC: &[u8; 8] = b"NCTRACE1";

/// Which calibration switches were closed while the trace was recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Switches {
    pub lo: bool,
    pub signal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub switches: Switches,
    pub seed: Option<u64>,
    pub label: String,
    /// Non-fatal notes from synthesis or processing.
    pub warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    fs: f64,
    n: u64,
    dtype: String,
    switches: Switches,
    seed: Option<u64>,
    label: String,
}

impl Trace {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        let t = Trace {
            samples,
            fs,
            switches: Switches::default(),
            seed: None,
            label: String::new(),
            warnings: Vec::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::invalid("trace", "needs at least 2 samples"));
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::invalid("fs", "must be > 0"));
        }
        if let Some(i) = self.samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(
                "samples",
                format!("non-finite value at index {i}"),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    pub fn with_samples(&self, samples: Vec<f64>) -> Trace {
        Trace {
            samples,
            fs: self.fs,
            switches: self.switches,
            seed: self.seed,
            label: self.label.clone(),
            warnings: self.warnings.clone(),
        }
    }

    /// First `n` samples as a new trace.
    pub fn prefix(&self, n: usize) -> Trace {
        self.with_samples(self.samples[..n.min(self.len())].to_vec())
    }

    pub fn scaled(&self, c: f64) -> Trace {
        self.with_samples(self.samples.iter().map(|x| x * c).collect())
    }

    pub fn write_nct<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            fs: self.fs,
            n: self.samples.len() as u64,
            dtype: "f64le".into(),
            switches: self.switches,
            seed: self.seed,
            label: self.label.clone(),
        })?;
        w.write_all(NCT_MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.samples.len() * 8);
        for x in &self.samples {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_nct<R: Read>(mut r: R) -> Result<Trace> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("file too short for an .nct header".into()))?;
        if &magic != NCT_MAGIC {
            return Err(Error::Format("bad magic, not an .nct file".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let h: Header = serde_json::from_slice(&header)?;
        if h.dtype != "f64le" {
            return Err(Error::Format(format!("unsupported dtype {}", h.dtype)));
        }
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() as u64 != h.n * 8 {
            return Err(Error::Format(format!(
                "header says {} samples, body holds {} bytes",
                h.n,
                body.len()
            )));
        }
        let samples = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Trace {
            samples,
            fs: h.fs,
            switches: h.switches,
            seed: h.seed,
            label: h.label,
            warnings: Vec::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_nct(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Trace> {
        let f = std::fs::File::open(path)?;
        Trace::read_nct(std::io::BufReader::new(f))
    }

    /// One sample per line; blank lines and `#` comments are skipped.
    pub fn from_csv(text: &str, fs: f64) -> Result<Trace> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let s = line.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Format(format!("line {}: not a number: {s}", i + 1)))?;
            samples.push(v);
        }
        Trace::new(samples, fs)
    }
}
