//! Functional datasets in long format (`id,t,y`).

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AopError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Curve {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FunctionalDataset {
    pub curves: Vec<Curve>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    id: String,
    t: f64,
    y: f64,
}

impl FunctionalDataset {
    pub fn new(curves: Vec<Curve>) -> Self {
        FunctionalDataset { curves }
    }

    pub fn n(&self) -> usize {
        self.curves.len()
    }

    pub fn total_points(&self) -> usize {
        self.curves.iter().map(Curve::len).sum()
    }

    /// Smallest and largest observation time.
    pub fn time_range(&self) -> Option<(f64, f64)> {
        let mut it = self.curves.iter().flat_map(|c| c.times.iter().copied());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
    }

    /// Checks `m_i >= 1`, matching lengths, finite values and times inside `[lo, hi]`.
    pub fn validate(&self, lo: f64, hi: f64) -> Result<()> {
        for c in &self.curves {
            if c.is_empty() {
                return Err(AopError::Data(format!(
                    "curve {} has no observations",
                    c.id
                )));
            }
            if c.times.len() != c.values.len() {
                return Err(AopError::Data(format!(
                    "curve {} has mismatched times and values",
                    c.id
                )));
            }
            if let Some(t) = c.times.iter().find(|t| !(**t >= lo && **t <= hi)) {
                return Err(AopError::Data(format!(
                    "curve {} has time {t} outside [{lo}, {hi}]",
                    c.id
                )));
            }
            if c.values.iter().any(|v| !v.is_finite()) {
                return Err(AopError::Data(format!(
                    "curve {} has a non-finite value",
                    c.id
                )));
            }
        }
        Ok(())
    }

    /// Parses long-format CSV with header `id,t,y`. Curves keep first-seen order.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| AopError::Data(format!("cannot read CSV header: {e}")))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["id", "t", "y"] {
            return Err(AopError::Data(format!(
                "expected header id,t,y, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut curves: Vec<Curve> = Vec::new();
        for (i, rec) in rdr.deserialize::<Row>().enumerate() {
            // Line 1 is the header.
            let line = i + 2;
            let row = rec.map_err(|e| AopError::Data(format!("line {line}: {e}")))?;
            if !row.t.is_finite() || !row.y.is_finite() {
                return Err(AopError::Data(format!("line {line}: non-finite value")));
            }
            let slot = *index.entry(row.id.clone()).or_insert_with(|| {
                curves.push(Curve {
                    id: row.id.clone(),
                    times: Vec::new(),
                    values: Vec::new(),
                });
                curves.len() - 1
            });
            curves[slot].times.push(row.t);
            curves[slot].values.push(row.y);
        }
        Ok(FunctionalDataset { curves })
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| AopError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| AopError::Data(format!("CSV write failed: {e}"));
        w.write_record(["id", "t", "y"]).map_err(io)?;
        for c in &self.curves {
            for (t, y) in c.times.iter().zip(&c.values) {
                // `{}` on f64 prints the shortest representation that round-trips.
                w.write_record([c.id.as_str(), &format!("{t}"), &format!("{y}")])
                    .map_err(io)?;
            }
        }
        w.flush()
            .map_err(|e| AopError::Data(format!("CSV write failed: {e}")))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| AopError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Divides every curve by its root mean square `sqrt(m^-1 sum y_j^2)`.
    /// All-zero curves are reported together.
    pub fn scaled(&self) -> Result<Self> {
        let zero: Vec<&str> = self
            .curves
            .iter()
            .filter(|c| c.values.iter().all(|v| *v == 0.0))
            .map(|c| c.id.as_str())
            .collect();
        if !zero.is_empty() {
            return Err(AopError::Data(format!(
                "cannot scale all-zero curves: {}",
                zero.join(", ")
            )));
        }
        let curves = self
            .curves
            .iter()
            .map(|c| {
                let ms = c.values.iter().map(|v| v * v).sum::<f64>() / c.len() as f64;
                let rms = ms.sqrt();
                Curve {
                    id: c.id.clone(),
                    times: c.times.clone(),
                    values: c.values.iter().map(|v| v / rms).collect(),
                }
            })
            .collect();
        Ok(FunctionalDataset { curves })
    }
}
