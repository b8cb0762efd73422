//! Metrics tables on disk: CSV rows and JSON-lines run summaries.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithms::RoundMetrics;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 11] = [
    "seed",
    "k",
    "f_gap",
    "grad_sq",
    "c",
    "n_good_sampled",
    "n_byz_sampled",
    "clip_activations",
    "coords_sent",
    "epochs",
    "wall_ns",
];

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub metrics: RoundMetrics,
}

/// 17 significant digits, enough to read back the same `f64`.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.seed.to_string(),
            m.k.to_string(),
            float(m.f_gap),
            float(m.grad_sq),
            m.c.to_string(),
            m.n_good_sampled.to_string(),
            m.n_byz_sampled.to_string(),
            m.clip_activations.to_string(),
            m.coords_sent.to_string(),
            float(m.epochs),
            m.wall_ns.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    write_csv(rows, BufWriter::new(File::create(path)?))
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |j: usize| -> &str { record.get(j).unwrap_or("") };
        macro_rules! num {
            ($j:expr) => {
                field($j).parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad {} `{}`", CSV_HEADER[$j], field($j)),
                })?
            };
        }
        rows.push(MetricsRow {
            seed: num!(0),
            metrics: RoundMetrics {
                k: num!(1),
                f_gap: num!(2),
                grad_sq: num!(3),
                c: num!(4),
                n_good_sampled: num!(5),
                n_byz_sampled: num!(6),
                clip_activations: num!(7),
                coords_sent: num!(8),
                epochs: num!(9),
                wall_ns: num!(10),
            },
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    parse_csv(File::open(path)?)
}

/// Mean, standard error and median of the final gap across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: usize,
    pub mean_final_gap: f64,
    /// Sample standard deviation over `sqrt(seeds)`; 0 for a single seed.
    pub stderr_final_gap: f64,
    pub median_final_gap: f64,
}

/// Summary of the last row of every seed present in `rows`.
pub fn summarize(rows: &[MetricsRow]) -> Option<Summary> {
    let mut last: BTreeMap<u64, &RoundMetrics> = BTreeMap::new();
    for r in rows {
        let e = last.entry(r.seed).or_insert(&r.metrics);
        if r.metrics.k >= e.k {
            *e = &r.metrics;
        }
    }
    let gaps: Vec<f64> = last.values().map(|m| m.f_gap).collect();
    summarize_gaps(&gaps)
}

pub fn summarize_gaps(gaps: &[f64]) -> Option<Summary> {
    if gaps.is_empty() {
        return None;
    }
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let stderr = if gaps.len() > 1 {
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Some(Summary {
        seeds: gaps.len(),
        mean_final_gap: mean,
        stderr_final_gap: stderr,
        median_final_gap: median(gaps),
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// One line of `summary.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub method: String,
    pub seed: u64,
    pub initial_gap: f64,
    pub final_gap: f64,
    pub rounds: usize,
    pub epochs: f64,
    pub f_star: Option<f64>,
}

pub fn write_jsonl<W: Write>(records: &[RunRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
