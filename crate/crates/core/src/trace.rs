//! Uniformly sampled real time series and their file formats.
//!
//! Two on-disk forms exist: a `time_s,value` CSV and a compact binary
//! container. The binary layout is a 24-byte little-endian header followed by
//! the samples as little-endian f64:
//!
//! | offset | size | field                   |
//! |--------|------|-------------------------|
//! | 0      | 4    | magic `b"OCAT"`         |
//! | 4      | 4    | version (u32, = 1)      |
//! | 8      | 8    | sample rate (f64, Hz)   |
//! | 16     | 8    | sample count (u64)      |
//!
//! The container does not store `t0`; traces read back from it start at 0.

use std::io::{self, BufRead, Read, Write};

use thiserror::Error;

pub const BINARY_MAGIC: [u8; 4] = *b"OCAT";
pub const BINARY_VERSION: u32 = 1;
pub const BINARY_HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("trace needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("traces are on different sample grids")]
    GridMismatch,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad binary container: {0}")]
    BadContainer(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrace {
    samples: Vec<f64>,
    sample_rate: f64,
    t0: f64,
}

impl SampledTrace {
    pub fn new(samples: Vec<f64>, sample_rate: f64, t0: f64) -> Result<Self, TraceError> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(TraceError::InvalidRate(sample_rate));
        }
        if samples.len() < 2 {
            return Err(TraceError::TooShort(samples.len()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(TraceError::NonFinite(i));
        }
        if !t0.is_finite() {
            return Err(TraceError::NonFinite(0));
        }
        Ok(SampledTrace {
            samples,
            sample_rate,
            t0,
        })
    }

    /// Samples `f` at `t0 + i/rate` for `i in 0..n`.
    pub fn from_fn<F: Fn(f64) -> f64>(
        n: usize,
        sample_rate: f64,
        t0: f64,
        f: F,
    ) -> Result<Self, TraceError> {
        let samples = (0..n).map(|i| f(t0 + i as f64 / sample_rate)).collect();
        Self::new(samples, sample_rate, t0)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }

    /// Population variance about the sample mean.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / self.len() as f64
    }

    pub fn same_grid(&self, other: &SampledTrace) -> bool {
        self.len() == other.len() && self.sample_rate == other.sample_rate && self.t0 == other.t0
    }

    /// Pointwise combination of two traces on the same grid.
    pub fn zip_with<F: Fn(f64, f64) -> f64>(
        &self,
        other: &SampledTrace,
        f: F,
    ) -> Result<SampledTrace, TraceError> {
        if !self.same_grid(other) {
            return Err(TraceError::GridMismatch);
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| f(*a, *b))
            .collect();
        SampledTrace::new(samples, self.sample_rate, self.t0)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<SampledTrace, TraceError> {
        SampledTrace::new(
            self.samples.iter().map(|x| f(*x)).collect(),
            self.sample_rate,
            self.t0,
        )
    }

    /// Keeps every `factor`-th sample.
    pub fn decimate(&self, factor: usize) -> Result<SampledTrace, TraceError> {
        let factor = factor.max(1);
        SampledTrace::new(
            self.samples.iter().step_by(factor).copied().collect(),
            self.sample_rate / factor as f64,
            self.t0,
        )
    }

    pub fn truncate(&self, n: usize) -> Result<SampledTrace, TraceError> {
        SampledTrace::new(
            self.samples[..n.min(self.len())].to_vec(),
            self.sample_rate,
            self.t0,
        )
    }

    /// Drops the first `n` samples, advancing `t0`.
    pub fn skip(&self, n: usize) -> Result<SampledTrace, TraceError> {
        let n = n.min(self.len());
        SampledTrace::new(self.samples[n..].to_vec(), self.sample_rate, self.time(n))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time_s,value")?;
        for (i, x) in self.samples.iter().enumerate() {
            writeln!(w, "{},{}", self.time(i), x)?;
        }
        Ok(())
    }

    /// Reads a `time_s,value` CSV. The sample rate is taken from the first
    /// two timestamps.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, TraceError> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if idx == 0 && line.starts_with("time_s") {
                continue;
            }
            let mut fields = line.split(',');
            let mut next = |name: &str| -> Result<f64, TraceError> {
                fields
                    .next()
                    .ok_or_else(|| TraceError::Parse {
                        line: lineno,
                        msg: format!("missing {name}"),
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| TraceError::Parse {
                        line: lineno,
                        msg: format!("{name}: {e}"),
                    })
            };
            times.push(next("time_s")?);
            values.push(next("value")?);
        }
        if times.len() < 2 {
            return Err(TraceError::TooShort(times.len()));
        }
        let dt = times[1] - times[0];
        SampledTrace::new(values, 1.0 / dt, times[0])
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&BINARY_MAGIC)?;
        w.write_all(&BINARY_VERSION.to_le_bytes())?;
        w.write_all(&self.sample_rate.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for x in &self.samples {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, TraceError> {
        let mut header = [0u8; BINARY_HEADER_LEN];
        r.read_exact(&mut header)?;
        if header[0..4] != BINARY_MAGIC {
            return Err(TraceError::BadContainer("magic mismatch".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != BINARY_VERSION {
            return Err(TraceError::BadContainer(format!(
                "unsupported version {version}"
            )));
        }
        let rate = f64::from_le_bytes(header[8..16].try_into().unwrap());
        let n = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != n * 8 {
            return Err(TraceError::BadContainer(format!(
                "expected {} payload bytes, found {}",
                n * 8,
                body.len()
            )));
        }
        let samples = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        SampledTrace::new(samples, rate, 0.0)
    }
}
