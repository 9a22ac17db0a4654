//! Measurement records grouped by state: the only view of a state the network gets.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cv::{CvStateSpec, PhaseEncoding};
use crate::error::{Error, Result};
use crate::spin::MeasurementMode;

pub const DATASET_MAGIC: &str = "GQNQDATA";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    /// Opaque measurement parametrization.
    pub m: Vec<f64>,
    /// Outcome probabilities (or empirical frequencies).
    pub p: Vec<f64>,
}

impl MeasurementRecord {
    pub fn new(m: Vec<f64>, p: Vec<f64>) -> Self {
        Self { m, p }
    }
}

/// Generator-side description of a state. Never fed to the network.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateMeta {
    /// Family name, e.g. `ising_ferro` or `cat`.
    pub family: String,
    /// Sweep value (mean J or Δ) or 0 when the family has none.
    #[serde(default)]
    pub group: f64,
    /// Parameters needed to regenerate a continuous-variable state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvStateSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateExample {
    pub records: Vec<MeasurementRecord>,
    pub meta: StateMeta,
}

impl StateExample {
    /// `(len(m), k)` shared by every record.
    pub fn dims(&self) -> Result<(usize, usize)> {
        let first = self
            .records
            .first()
            .ok_or_else(|| Error::Contract("state has no measurement records".into()))?;
        let dims = (first.m.len(), first.p.len());
        if self.records.iter().any(|r| (r.m.len(), r.p.len()) != dims) {
            return Err(Error::Dimension("records of one state disagree in shape".into()));
        }
        Ok(dims)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Spin,
    Cv,
}

/// Description shared by every state of a dataset. Record `j` of every state
/// belongs to measurement `j` of the header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub kind: DatasetKind,
    pub families: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_qubits: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<MeasurementMode>,
    pub m_dim: usize,
    pub k: usize,
    pub n_measurements: usize,
    pub seed: u64,
    /// `train`, `test` or free text.
    pub split: String,
    /// Pauli labels of each measurement, e.g. `XZYXXZ` or `3:XY` for a pair.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub settings: Vec<String>,
    /// Quadrature phase of each measurement.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phases: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding: Option<PhaseEncoding>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub states: Vec<StateExample>,
}

impl Dataset {
    /// Every record matches the header dimensions and carries a distribution.
    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        for (i, s) in self.states.iter().enumerate() {
            if s.records.len() != h.n_measurements {
                return Err(Error::Dimension(format!(
                    "state {i} has {} records, header says {}",
                    s.records.len(),
                    h.n_measurements
                )));
            }
            for r in &s.records {
                if r.m.len() != h.m_dim || r.p.len() != h.k {
                    return Err(Error::Dimension(format!(
                        "state {i}: record of shape ({}, {}) in a ({}, {}) dataset",
                        r.m.len(),
                        r.p.len(),
                        h.m_dim,
                        h.k
                    )));
                }
                let total: f64 = r.p.iter().sum();
                if r.p.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > 1e-6 {
                    return Err(Error::Format(format!("state {i}: outcome vector is not a distribution")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    header: DatasetHeader,
    metas: Vec<StateMeta>,
}

impl Dataset {
    /// Text magic line, one JSON line with the header and per-state
    /// metadata, then every record's `m` and `p` as little-endian `f64`,
    /// state by state.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        self.validate()?;
        writeln!(out, "{DATASET_MAGIC} {DATASET_VERSION}")?;
        let fh = FileHeader { header: self.header.clone(), metas: self.states.iter().map(|s| s.meta.clone()).collect() };
        serde_json::to_writer(&mut *out, &fh)?;
        writeln!(out)?;
        for s in &self.states {
            for r in &s.records {
                for v in r.m.iter().chain(&r.p) {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: &mut R) -> Result<Self> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(DATASET_MAGIC) {
            return Err(Error::Format("not a dataset file".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format("dataset version missing".into()))?;
        if version != DATASET_VERSION {
            return Err(Error::Version { expected: DATASET_VERSION, found: version.to_string() });
        }
        line.clear();
        input.read_line(&mut line)?;
        let fh: FileHeader = serde_json::from_str(line.trim_end())?;
        let h = &fh.header;
        let mut buf = vec![0u8; 8 * (h.m_dim + h.k)];
        let mut states = Vec::with_capacity(fh.metas.len());
        for meta in fh.metas {
            let mut records = Vec::with_capacity(h.n_measurements);
            for _ in 0..h.n_measurements {
                input.read_exact(&mut buf).map_err(|_| Error::Format("dataset body is truncated".into()))?;
                let vals: Vec<f64> = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                records.push(MeasurementRecord::new(vals[..h.m_dim].to_vec(), vals[h.m_dim..].to_vec()));
            }
            states.push(StateExample { records, meta });
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after dataset body".into()));
        }
        let data = Dataset { header: fh.header, states };
        data.validate()?;
        Ok(data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(std::fs::File::open(path)?))
    }

    /// Header line followed by one JSON object per state.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = serde_json::to_string(&self.header)?;
        s.push('\n');
        for st in &self.states {
            s.push_str(&serde_json::to_string(st)?);
            s.push('\n');
        }
        Ok(s)
    }
}
