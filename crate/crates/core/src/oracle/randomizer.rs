use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FiniteDist;
use crate::error::{Error, Result};

/// A finite local randomizer: one output distribution over `b` symbols per
/// input value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Randomizer {
    eps0: f64,
    b: usize,
    dists: Vec<FiniteDist>,
}

impl Randomizer {
    /// Checks that every pair of rows satisfies the `eps0` likelihood-ratio
    /// constraint.
    pub fn new(eps0: f64, dists: Vec<FiniteDist>) -> Result<Self> {
        let b = dists.first().map(FiniteDist::len).unwrap_or(0);
        if b == 0 || dists.iter().any(|d| d.len() != b) {
            return Err(Error::domain("randomizer rows must share a nonempty support"));
        }
        let worst = max_log_ratio(&dists);
        if worst > eps0 + 1e-12 {
            return Err(Error::domain(format!(
                "randomizer is only {worst}-LDP, not {eps0}-LDP"
            )));
        }
        Ok(Randomizer { eps0, b, dists })
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn inputs(&self) -> usize {
        self.dists.len()
    }

    pub fn dists(&self) -> &[FiniteDist] {
        &self.dists
    }
}

fn max_log_ratio(dists: &[FiniteDist]) -> f64 {
    let mut worst = 0.0f64;
    for a in dists {
        for b in dists {
            for (x, y) in a.probs().iter().zip(b.probs()) {
                let r = if *x == 0.0 && *y == 0.0 {
                    0.0
                } else {
                    (x / y).ln()
                };
                worst = worst.max(r);
            }
        }
    }
    worst
}

fn dirichlet<R: Rng + ?Sized>(rng: &mut R, b: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..b).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn mix(base: &[f64], target: &[f64], t: f64) -> Vec<f64> {
    base.iter().zip(target).map(|(u, v)| (1.0 - t) * u + t * v).collect()
}

/// Draws a random `eps0`-LDP randomizer with `inputs` rows over `b`
/// symbols.
///
/// A base row is drawn uniformly from the simplex and each input gets its own
/// target row (uniform on the simplex, or a vertex about half the time so
/// that randomized-response-like extremes are covered). All rows are then
/// pulled toward the base by the largest common weight that keeps every
/// pairwise likelihood ratio within `e^eps0`.
pub fn random_randomizer<R: Rng + ?Sized>(
    rng: &mut R,
    inputs: usize,
    b: usize,
    eps0: f64,
) -> Result<Randomizer> {
    if inputs == 0 || b == 0 {
        return Err(Error::domain("randomizer needs at least one input and one symbol"));
    }
    if !eps0.is_finite() || eps0 < 0.0 {
        return Err(Error::domain(format!("eps0 must be finite and >= 0, got {eps0}")));
    }
    let base = dirichlet(rng, b);
    let vertices = rng.gen::<bool>();
    let targets: Vec<Vec<f64>> = (0..inputs)
        .map(|i| {
            if vertices {
                let mut v = vec![0.0; b];
                v[(i + rng.gen_range(0..b as u32) as usize) % b] = 1.0;
                v
            } else {
                dirichlet(rng, b)
            }
        })
        .collect();
    let rows_at = |t: f64| -> Vec<Vec<f64>> { targets.iter().map(|v| mix(&base, v, t)).collect() };
    let ratio_at = |t: f64| -> f64 {
        let rows = rows_at(t);
        let mut worst = 0.0f64;
        for a in &rows {
            for c in &rows {
                for (x, y) in a.iter().zip(c) {
                    worst = worst.max((x / y).ln());
                }
            }
        }
        worst
    };
    // the ratio of two affine functions of t is monotone, so bisection on the
    // largest pairwise log-ratio is exact up to the bracket width
    let t = if ratio_at(1.0) <= eps0 {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if ratio_at(mid) <= eps0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let dists = rows_at(t)
        .into_iter()
        .map(|r| FiniteDist::from_weights(&r))
        .collect::<Result<Vec<_>>>()?;
    Randomizer::new(eps0, dists)
}
