//! The simulated federation.

use std::sync::Arc;

use crate::attacks::AttackKind;
use crate::error::{check_dim, Error, Result};
use crate::numerics::RealVector;
use crate::problem::{
    AveragedObjective, ClientAssignment, Dataset, FiniteSumObjective, LogisticObjective, SmoothObjective,
};

/// Clients, their local objectives, who is Byzantine, and the global objective over good clients.
#[derive(Debug, Clone)]
pub struct World {
    /// Objective each client optimises when following the protocol. For
    /// label-flipping Byzantines this is built on the poisoned data.
    clients: Vec<Arc<dyn FiniteSumObjective>>,
    byzantine: Vec<bool>,
    attack: Option<AttackKind>,
    delta: f64,
    objective: Arc<AveragedObjective>,
    f_star: Option<f64>,
    x0: RealVector,
    total_samples: usize,
}

impl World {
    /// `clients[i]` is the honest-view objective of client `i`.
    pub fn new(
        clients: Vec<Arc<dyn FiniteSumObjective>>,
        byzantine: Vec<bool>,
        attack: Option<AttackKind>,
        delta: f64,
    ) -> Result<Self> {
        if clients.is_empty() {
            return Err(Error::InvalidConfig("need at least one client".into()));
        }
        if clients.len() != byzantine.len() {
            return Err(Error::InvalidConfig("one Byzantine flag per client required".into()));
        }
        let dim = clients[0].dim();
        for c in &clients {
            check_dim(dim, c.dim())?;
        }
        let n = clients.len();
        let b = byzantine.iter().filter(|&&f| f).count();
        if 2 * b >= n {
            return Err(Error::InvalidConfig(format!("{b} Byzantine clients out of {n} violates B < n/2")));
        }
        if !(0.0..0.5).contains(&delta) || (b as f64) > delta * n as f64 + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "delta = {delta} must lie in [B/n, 1/2) = [{}, 0.5)",
                b as f64 / n as f64
            )));
        }
        if let Some(kind) = &attack {
            kind.validate()?;
        }
        let goods: Vec<Arc<dyn FiniteSumObjective>> = clients
            .iter()
            .zip(&byzantine)
            .filter(|(_, &bad)| !bad)
            .map(|(c, _)| c.clone())
            .collect();
        let objective = Arc::new(AveragedObjective::new(&goods)?);
        let total_samples = clients.iter().map(|c| c.num_components()).sum();
        Ok(Self {
            clients,
            byzantine,
            attack,
            delta,
            objective,
            f_star: None,
            x0: RealVector::zeros(dim),
            total_samples,
        })
    }

    /// Logistic clients on `assignment`. Clients sharing a dataset share one objective.
    pub fn logistic(assignment: &ClientAssignment, eta: f64, attack: Option<AttackKind>, delta: f64) -> Result<Self> {
        let flip = attack.is_some_and(|a| a.flips_labels());
        let mut honest_cache: Vec<(Arc<Dataset>, Arc<dyn FiniteSumObjective>)> = Vec::new();
        let mut flipped_cache: Vec<(Arc<Dataset>, Arc<dyn FiniteSumObjective>)> = Vec::new();
        let mut clients = Vec::with_capacity(assignment.num_clients());
        for (shard, &bad) in assignment.shards.iter().zip(&assignment.byzantine) {
            let poisoned = bad && flip;
            let cache = if poisoned { &mut flipped_cache } else { &mut honest_cache };
            let obj = match cache.iter().find(|(d, _)| Arc::ptr_eq(d, shard)) {
                Some((_, o)) => o.clone(),
                None => {
                    let data = if poisoned {
                        Arc::new(shard.with_flipped_labels())
                    } else {
                        shard.clone()
                    };
                    let o: Arc<dyn FiniteSumObjective> = Arc::new(LogisticObjective::new(data, eta)?);
                    cache.push((shard.clone(), o.clone()));
                    o
                }
            };
            clients.push(obj);
        }
        Self::new(clients, assignment.byzantine.clone(), attack, delta)
    }

    pub fn with_f_star(mut self, f_star: f64) -> Self {
        self.f_star = Some(f_star);
        self
    }

    pub fn with_start(mut self, x0: RealVector) -> Result<Self> {
        check_dim(self.dim(), x0.dim())?;
        self.x0 = x0;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.clients[0].dim()
    }

    pub fn n(&self) -> usize {
        self.clients.len()
    }

    pub fn num_good(&self) -> usize {
        self.byzantine.iter().filter(|&&b| !b).count()
    }

    pub fn is_byzantine(&self, i: usize) -> bool {
        self.byzantine[i]
    }

    pub fn byzantine_flags(&self) -> &[bool] {
        &self.byzantine
    }

    pub fn good_flags(&self) -> Vec<bool> {
        self.byzantine.iter().map(|&b| !b).collect()
    }

    pub fn client(&self, i: usize) -> &Arc<dyn FiniteSumObjective> {
        &self.clients[i]
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.clients.iter().map(|c| c.num_components()).collect()
    }

    pub fn attack(&self) -> Option<&AttackKind> {
        self.attack.as_ref()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `f = (1/G) sum_{i good} f_i`.
    pub fn objective(&self) -> &Arc<AveragedObjective> {
        &self.objective
    }

    pub fn f_star(&self) -> Option<f64> {
        self.f_star
    }

    pub fn x0(&self) -> &RealVector {
        &self.x0
    }

    /// Component-gradient evaluations that make up one epoch: `sum_i m_i` over all clients.
    pub fn epoch_size(&self) -> usize {
        self.total_samples
    }

    /// `f(x) - f*` (or `f(x)` when `f*` is unknown) and `|grad f(x)|^2`.
    pub fn diagnostics(&self, x: &RealVector) -> Result<(f64, f64)> {
        let value = self.objective.value(x)?;
        let grad = self.objective.full_gradient(x)?;
        Ok((value - self.f_star.unwrap_or(0.0), grad.norm_sq()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{split_clients, synthetic_logistic, QuadraticObjective, SplitMode, SyntheticSpec};

    #[test]
    fn logistic_world_shares_objectives() {
        let data = Arc::new(synthetic_logistic(&SyntheticSpec { samples: 30, dim: 3, seed: 1, sharpness: 2.0 }).unwrap());
        let split = split_clients(data, 8, 2, SplitMode::Homogeneous, 4).unwrap();
        let world = World::logistic(&split, 0.01, Some(AttackKind::LabelFlipping), 0.25).unwrap();
        assert_eq!(world.objective().distinct_parts(), 1);
        assert_eq!(world.epoch_size(), 8 * 30);
        let good = (0..8).find(|&i| !world.is_byzantine(i)).unwrap();
        let bad = (0..8).find(|&i| world.is_byzantine(i)).unwrap();
        let x = RealVector::from([0.5, -0.5, 1.0]);
        let g_good = world.client(good).full_gradient(&x).unwrap();
        let g_bad = world.client(bad).full_gradient(&x).unwrap();
        assert!(g_good.distance(&g_bad) > 1e-3);
    }

    #[test]
    fn rejects_inconsistent_delta() {
        let q: Arc<dyn FiniteSumObjective> =
            Arc::new(QuadraticObjective::diagonal(&[1.0], RealVector::from([0.0])).unwrap());
        let flags = vec![true, false, false, false];
        assert!(World::new(vec![q.clone(); 4], flags.clone(), None, 0.2).is_err());
        assert!(World::new(vec![q.clone(); 4], flags, None, 0.25).is_ok());
        assert!(World::new(vec![q; 2], vec![true, false], None, 0.49).is_err());
    }
}
