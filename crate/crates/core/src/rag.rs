//! Experience store with exact nearest-neighbour retrieval over traffic
//! arrival-rate vectors.
//!
//! Retrieval is two-stage: shortlist the `multiplier * k` records nearest to
//! the query rates (Euclidean, ties by record id), then keep the `k` with the
//! highest compliance index. Results are ordered by descending sigma, then
//! ascending distance, then ascending record id.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AllocationRatio;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpmSummary {
    pub latency_ms: f64,
    pub throughput_mbps: f64,
    pub drop_ratio: f64,
}

/// One historical decision. Serialized as a JSON-lines row with the keys
/// `id`, `rates`, `shares`, `sigma`, `kpm`, `interval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    #[serde(rename = "id")]
    pub record_id: u64,
    #[serde(rename = "rates")]
    pub arrival_rates_mbps: Vec<f64>,
    #[serde(rename = "shares")]
    pub allocation: AllocationRatio,
    #[serde(rename = "sigma")]
    pub resulting_sigma: f64,
    #[serde(rename = "kpm")]
    pub kpm_summary: Vec<KpmSummary>,
    #[serde(rename = "interval")]
    pub created_at_interval: u64,
}

impl ExperienceRecord {
    pub fn validate(&self, slice_count: usize) -> Result<()> {
        if self.arrival_rates_mbps.len() != slice_count || self.allocation.len() != slice_count {
            return Err(Error::Argument(format!(
                "record dimensions do not match {slice_count} slices"
            )));
        }
        if self.resulting_sigma.is_nan() || self.resulting_sigma > 0.0 {
            return Err(Error::Argument(format!(
                "record sigma {} must be nonpositive",
                self.resulting_sigma
            )));
        }
        Ok(())
    }
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug)]
pub struct RagStore {
    slice_count: usize,
    shortlist_multiplier: usize,
    records: Vec<ExperienceRecord>,
    sink: Option<(PathBuf, BufWriter<File>)>,
}

impl RagStore {
    pub fn in_memory(slice_count: usize) -> Self {
        Self {
            slice_count,
            shortlist_multiplier: 3,
            records: Vec::new(),
            sink: None,
        }
    }

    /// Opens (or creates) a JSON-lines store; existing rows are loaded.
    pub fn open(path: impl AsRef<Path>, slice_count: usize) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut store = Self::in_memory(slice_count);
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(storage)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(storage)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: ExperienceRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::Storage(format!("{}:{}: {e}", path.display(), n + 1)))?;
                rec.validate(slice_count)?;
                store.records.push(rec);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(storage)?;
        store.sink = Some((path, BufWriter::new(file)));
        Ok(store)
    }

    pub fn with_shortlist_multiplier(mut self, m: usize) -> Self {
        self.shortlist_multiplier = m.max(1);
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ExperienceRecord] {
        &self.records
    }

    pub fn next_id(&self) -> u64 {
        self.records.last().map_or(0, |r| r.record_id + 1)
    }

    /// Appends a record, assigning the next sequential id. The in-memory copy
    /// is kept even if the file write fails; the error is still reported.
    pub fn record(&mut self, mut rec: ExperienceRecord) -> Result<u64> {
        rec.validate(self.slice_count)?;
        rec.record_id = self.next_id();
        let id = rec.record_id;
        let line = serde_json::to_string(&rec)?;
        self.records.push(rec);
        if let Some((path, w)) = self.sink.as_mut() {
            writeln!(w, "{line}")
                .and_then(|_| w.flush())
                .map_err(|e| Error::Storage(format!("{}: {e}", path.display())))?;
        }
        Ok(id)
    }

    pub fn retrieve(&self, query_rates: &[f64], k: usize) -> Result<Vec<ExperienceRecord>> {
        if query_rates.len() != self.slice_count {
            return Err(Error::Argument(format!(
                "query has {} rates, store holds {} slices",
                query_rates.len(),
                self.slice_count
            )));
        }
        if k == 0 {
            return Err(Error::Argument("k must be at least 1".into()));
        }
        let mut scored: Vec<(f64, &ExperienceRecord)> = self
            .records
            .iter()
            .map(|r| (euclidean_distance(&r.arrival_rates_mbps, query_rates), r))
            .collect();
        let shortlist = k.saturating_mul(self.shortlist_multiplier);
        let by_distance = |a: &(f64, &ExperienceRecord), b: &(f64, &ExperienceRecord)| {
            a.0.total_cmp(&b.0).then(a.1.record_id.cmp(&b.1.record_id))
        };
        if scored.len() > shortlist {
            scored.select_nth_unstable_by(shortlist - 1, by_distance);
            scored.truncate(shortlist);
        }
        scored.sort_by(|a, b| {
            b.1.resulting_sigma
                .total_cmp(&a.1.resulting_sigma)
                .then_with(|| by_distance(a, b))
        });
        Ok(scored.into_iter().take(k).map(|(_, r)| r.clone()).collect())
    }
}

fn storage(e: std::io::Error) -> Error {
    Error::Storage(e.to_string())
}
