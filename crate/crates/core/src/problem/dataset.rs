//! Labelled datasets, LIBSVM ingestion and a seeded synthetic generator.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{Lane, Purpose, RngStream};

/// Dense binary-labelled dataset, one row per sample. Labels are 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::NoSamples);
        }
        if features.len() != labels.len() {
            return Err(Error::InvalidConfig(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::InvalidConfig("zero-dimensional features".into()));
        }
        let mut flat = Vec::with_capacity(features.len() * dim);
        for (i, row) in features.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "non-finite feature".into(),
                });
            }
            flat.extend_from_slice(row);
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(Error::InvalidConfig(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self {
            features: flat,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.features[j * self.dim..(j + 1) * self.dim]
    }

    pub fn label(&self, j: usize) -> f64 {
        self.labels[j]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Zero-pads feature rows up to `dim` (e.g. to align a test split with its training split).
    pub fn padded_to(&self, dim: usize) -> Result<Self> {
        if dim < self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: dim,
            });
        }
        let mut features = Vec::with_capacity(self.len() * dim);
        for j in 0..self.len() {
            features.extend_from_slice(self.row(j));
            features.extend(std::iter::repeat_n(0.0, dim - self.dim));
        }
        Ok(Self {
            features,
            labels: self.labels.clone(),
            dim,
        })
    }

    /// Copy with every label replaced by `1 - y`.
    pub fn with_flipped_labels(&self) -> Self {
        Self {
            features: self.features.clone(),
            labels: self.labels.iter().map(|y| 1.0 - y).collect(),
            dim: self.dim,
        }
    }

    /// Rows `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::NoSamples);
        }
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &j in indices {
            if j >= self.len() {
                return Err(Error::InvalidIndex {
                    index: j,
                    len: self.len(),
                });
            }
            features.extend_from_slice(self.row(j));
            labels.push(self.labels[j]);
        }
        Ok(Self {
            features,
            labels,
            dim: self.dim,
        })
    }

    /// Writes the dataset in LIBSVM format with `{-1, +1}` labels, omitting zeros.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for j in 0..self.len() {
            out.push_str(if self.labels[j] == 1.0 { "+1" } else { "-1" });
            for (i, v) in self.row(j).iter().enumerate() {
                if *v != 0.0 {
                    out.push_str(&format!(" {}:{}", i + 1, v));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Parses LIBSVM text (`<label> <idx>:<val> ...`, 1-based increasing indices)
/// into a dense dataset whose dimension is the largest index seen.
///
/// Labels `-1`/`0` map to 0 and `+1`/`1` map to 1. Text after `#` is ignored.
pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().ok_or_else(|| err("missing label".into()))?;
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("non-numeric label {label_tok:?}")))?;
        let label = match label {
            l if l == -1.0 || l == 0.0 => 0.0,
            l if l == 1.0 => 1.0,
            other => return Err(err(format!("unsupported label {other}"))),
        };

        let mut row = Vec::new();
        let mut last_index = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("malformed feature {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("non-numeric index {idx:?}")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("non-numeric value {val:?}")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            if idx == last_index {
                return Err(err(format!("duplicate feature index {idx}")));
            }
            if idx < last_index {
                return Err(err(format!(
                    "feature index {idx} follows {last_index}; indices must increase"
                )));
            }
            if !val.is_finite() {
                return Err(err(format!("non-finite value for feature {idx}")));
            }
            last_index = idx;
            dim = dim.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
        labels.push(label);
    }

    if rows.is_empty() {
        return Err(Error::NoSamples);
    }
    if dim == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "no features in any sample".into(),
        });
    }
    let mut features = vec![0.0; rows.len() * dim];
    for (j, row) in rows.iter().enumerate() {
        for &(i, v) in row {
            features[j * dim + i] = v;
        }
    }
    Ok(Dataset {
        features,
        labels,
        dim,
    })
}

/// Parameters of the bundled synthetic logistic dataset.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub dim: usize,
    pub seed: u64,
    /// Labels are drawn as `Bernoulli(sigmoid(sharpness * <a, w>))` for a planted unit `w`.
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
}

fn default_sharpness() -> f64 {
    2.0
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            samples: 1000,
            dim: 20,
            seed: 2024,
            sharpness: default_sharpness(),
        }
    }
}

/// Standard-normal features with labels from a planted logistic model.
pub fn synthetic_logistic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.samples == 0 || spec.dim == 0 {
        return Err(Error::InvalidConfig(
            "synthetic dataset needs samples >= 1 and dim >= 1".into(),
        ));
    }
    let mut rng = RngStream::new(spec.seed, Lane::server(0, Purpose::Data));
    let mut w: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.iter_mut().for_each(|v| *v /= norm);

    let mut features = Vec::with_capacity(spec.samples * spec.dim);
    let mut labels = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let row: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
        let margin: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
        let prob = 1.0 / (1.0 + (-spec.sharpness * margin).exp());
        labels.push(if rng.random::<f64>() < prob { 1.0 } else { 0.0 });
        features.extend(row);
    }
    Ok(Dataset {
        features,
        labels,
        dim: spec.dim,
    })
}
