//! Base aggregation rules.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::numerics::{mean, RealVector};

pub(crate) fn coordinate_median(inputs: &[RealVector]) -> RealVector {
    let d = inputs[0].dim();
    let m = inputs.len();
    let mut column = vec![0.0; m];
    let mut out = RealVector::zeros(d);
    for i in 0..d {
        for (c, v) in column.iter_mut().zip(inputs) {
            *c = v[i];
        }
        column.sort_by(f64::total_cmp);
        out[i] = if m % 2 == 1 {
            column[m / 2]
        } else {
            0.5 * (column[m / 2 - 1] + column[m / 2])
        };
    }
    out
}

pub(crate) fn trimmed_mean(inputs: &[RealVector], trim: f64) -> RealVector {
    let d = inputs[0].dim();
    let m = inputs.len();
    let cut = (trim * m as f64).floor() as usize;
    let kept = m - 2 * cut;
    let mut column = vec![0.0; m];
    let mut out = RealVector::zeros(d);
    for i in 0..d {
        for (c, v) in column.iter_mut().zip(inputs) {
            *c = v[i];
        }
        column.sort_by(f64::total_cmp);
        out[i] = column[cut..m - cut].iter().sum::<f64>() / kept as f64;
    }
    out
}

/// Smoothed Weiszfeld iteration for `argmin_z sum_i |z - x_i|`, started at the mean.
///
/// Each iterate is a convex combination of the inputs.
pub(crate) fn geometric_median(
    inputs: &[RealVector],
    max_iters: usize,
    tol: f64,
    smoothing: f64,
) -> Result<RealVector> {
    let mut z = mean(inputs)?;
    let d = z.dim();
    for _ in 0..max_iters {
        let mut num = RealVector::zeros(d);
        let mut den = 0.0;
        for x in inputs {
            let w = 1.0 / (z.distance(x) + smoothing);
            num.axpy(w, x);
            den += w;
        }
        num.scale(1.0 / den);
        let moved = num.distance(&z);
        z = num;
        if moved <= tol {
            break;
        }
    }
    Ok(z)
}

/// Input minimising the summed squared distance to its `m - B - 2` nearest peers.
/// Ties go to the lowest index.
pub(crate) fn krum(inputs: &[RealVector], assumed_byzantine: usize) -> Result<RealVector> {
    let m = inputs.len();
    let neighbours = m
        .checked_sub(assumed_byzantine + 2)
        .filter(|&k| k >= 1)
        .ok_or(Error::KrumInfeasible {
            n: m,
            assumed_byzantine,
        })?;
    let mut best: Option<(usize, f64)> = None;
    let mut dists = Vec::with_capacity(m - 1);
    for i in 0..m {
        dists.clear();
        dists.extend((0..m).filter(|&j| j != i).map(|j| inputs[i].distance_sq(&inputs[j])));
        dists.sort_by(f64::total_cmp);
        let score: f64 = dists[..neighbours].iter().sum();
        match best {
            Some((_, s)) if score.partial_cmp(&s) != Some(Ordering::Less) => {}
            _ => best = Some((i, score)),
        }
    }
    Ok(inputs[best.expect("m >= 3").0].clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> RealVector {
        RealVector::from(x.to_vec())
    }

    #[test]
    fn median_odd_and_even() {
        let cm = coordinate_median(&[v(&[1.0, 5.0]), v(&[2.0, 4.0]), v(&[3.0, 3.0])]);
        assert_eq!(cm.as_slice(), &[2.0, 4.0]);
        let cm = coordinate_median(&[v(&[1.0]), v(&[2.0]), v(&[10.0]), v(&[4.0])]);
        assert_eq!(cm.as_slice(), &[3.0]);
    }

    #[test]
    fn trimmed_mean_drops_extremes() {
        let inputs: Vec<RealVector> = [1.0, 2.0, 3.0, 4.0, 100.0].iter().map(|&x| v(&[x])).collect();
        assert_eq!(trimmed_mean(&inputs, 0.2).as_slice(), &[3.0]);
        assert_eq!(trimmed_mean(&inputs, 0.0).as_slice(), &[22.0]);
    }

    #[test]
    fn krum_prefers_the_cluster_and_lowest_index() {
        let inputs = vec![v(&[0.0]), v(&[0.1]), v(&[0.2]), v(&[50.0])];
        assert_eq!(krum(&inputs, 0).unwrap().as_slice(), &[0.1]);
        // one neighbour each: 0, 0.1 and 0.2 tie
        assert_eq!(krum(&inputs, 1).unwrap().as_slice(), &[0.0]);
        let same = vec![v(&[1.0]), v(&[1.0]), v(&[1.0])];
        assert_eq!(krum(&same, 0).unwrap().as_slice(), &[1.0]);
        // every point has a nearest peer at distance 1
        let line = vec![v(&[-1.0]), v(&[0.0]), v(&[1.0])];
        assert_eq!(krum(&line, 0).unwrap().as_slice(), &[-1.0]);
        let pair_tie = vec![v(&[0.0]), v(&[1.0]), v(&[5.0]), v(&[6.0])];
        assert_eq!(krum(&pair_tie, 1).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn krum_infeasible() {
        let inputs = vec![v(&[0.0]), v(&[1.0])];
        assert!(matches!(krum(&inputs, 0), Err(Error::KrumInfeasible { .. })));
        let inputs = vec![v(&[0.0]), v(&[1.0]), v(&[2.0]), v(&[3.0])];
        assert!(matches!(krum(&inputs, 2), Err(Error::KrumInfeasible { n: 4, assumed_byzantine: 2 })));
    }

    #[test]
    fn geometric_median_of_collinear_points() {
        let inputs = vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[5.0, 0.0])];
        let gm = geometric_median(&inputs, 1000, 1e-14, 1e-12).unwrap();
        assert!(gm.distance(&v(&[1.0, 0.0])) < 1e-5);
    }
}
