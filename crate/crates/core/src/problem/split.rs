//! Distributing a dataset over clients.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{sample_without_replacement, Lane, Purpose, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Every client holds the whole dataset.
    Homogeneous,
    /// Samples sorted by label and cut into contiguous shards.
    LabelSorted,
}

/// Per-client data and the identity of the Byzantine clients.
#[derive(Debug, Clone)]
pub struct ClientAssignment {
    pub shards: Vec<Arc<Dataset>>,
    pub byzantine: Vec<bool>,
    pub mode: SplitMode,
}

impl ClientAssignment {
    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }

    pub fn good_ids(&self) -> Vec<usize> {
        (0..self.shards.len()).filter(|&i| !self.byzantine[i]).collect()
    }

    pub fn num_byzantine(&self) -> usize {
        self.byzantine.iter().filter(|&&b| b).count()
    }

    /// `B / n`.
    pub fn delta_real(&self) -> f64 {
        self.num_byzantine() as f64 / self.num_clients() as f64
    }
}

/// Splits `data` over `n` clients, `byzantine` of which are chosen uniformly at
/// random (setup lane of `seed`) to be adversarial.
pub fn split_clients(
    data: Arc<Dataset>,
    n: usize,
    byzantine: usize,
    mode: SplitMode,
    seed: u64,
) -> Result<ClientAssignment> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one client".into()));
    }
    if 2 * byzantine >= n {
        return Err(Error::InvalidConfig(format!(
            "{byzantine} Byzantine clients out of {n} violates B < n/2"
        )));
    }
    let shards = match mode {
        SplitMode::Homogeneous => vec![data; n],
        SplitMode::LabelSorted => {
            let m = data.len();
            if m < n {
                return Err(Error::InvalidConfig(format!(
                    "{m} samples cannot be sharded over {n} clients"
                )));
            }
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| data.label(a).total_cmp(&data.label(b)));
            let base = m / n;
            let extra = m % n;
            let mut shards = Vec::with_capacity(n);
            let mut start = 0;
            for i in 0..n {
                let len = base + usize::from(i < extra);
                shards.push(Arc::new(data.subset(&order[start..start + len])?));
                start += len;
            }
            shards
        }
    };
    let mut rng = RngStream::new(seed, Lane::server(0, Purpose::Setup));
    let mut flags = vec![false; n];
    for i in sample_without_replacement(&mut rng, n, byzantine) {
        flags[i] = true;
    }
    Ok(ClientAssignment {
        shards,
        byzantine: flags,
        mode,
    })
}
