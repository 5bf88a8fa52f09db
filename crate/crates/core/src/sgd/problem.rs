use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `(x . theta - y)^2 / 2`
    LeastSquares,
    /// `ln(1 + exp(-y x . theta))` with `y` in `{-1, +1}`
    Logistic,
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub loss: Loss,
    pub n: usize,
    pub d: usize,
    /// Radius of the `l2` ball the iterates live in.
    pub radius: f64,
    /// Half-width of the uniform label noise (least squares only).
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    0.1
}

impl ProblemSpec {
    pub fn least_squares(n: usize, d: usize, radius: f64, seed: u64) -> Self {
        ProblemSpec {
            loss: Loss::LeastSquares,
            n,
            d,
            radius,
            noise: default_noise(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Config("problem needs n >= 1 and d >= 1".into()));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Config(format!("radius must be positive, got {}", self.radius)));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Config(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }
}

/// Empirical risk `F(theta) = (1/n) sum_i f(theta, d_i)` over an `l2` ball,
/// with its optimum precomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexProblem {
    spec: ProblemSpec,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    lipschitz: f64,
    optimum: Vec<f64>,
    opt_value: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Euclidean projection onto the `l2` ball of the given radius.
pub fn project(theta: &[f64], radius: f64) -> Vec<f64> {
    let s = (norm2(theta) / radius).max(1.0);
    theta.iter().map(|v| v / s).collect()
}

impl ConvexProblem {
    /// Features uniform on `[-1, 1]^d`; least-squares labels come from a
    /// planted model of norm `radius / 2` plus uniform noise, logistic labels
    /// from the sign of the planted score with 10% flips.
    pub fn synthetic(spec: ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = seeded(spec.seed);
        let planted = {
            let v: Vec<f64> = (0..spec.d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = norm2(&v).max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x * spec.radius / (2.0 * s)).collect::<Vec<_>>()
        };
        let mut xs = Vec::with_capacity(spec.n);
        let mut ys = Vec::with_capacity(spec.n);
        for _ in 0..spec.n {
            let x: Vec<f64> = (0..spec.d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let score = dot(&x, &planted);
            let y = match spec.loss {
                Loss::LeastSquares => score + spec.noise * rng.gen_range(-1.0..=1.0),
                Loss::Logistic => {
                    let s = if score >= 0.0 { 1.0 } else { -1.0 };
                    if rng.gen::<f64>() < 0.1 {
                        -s
                    } else {
                        s
                    }
                }
            };
            xs.push(x);
            ys.push(y);
        }
        Self::from_data(spec, xs, ys)
    }

    pub fn from_data(spec: ProblemSpec, xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if xs.len() != spec.n || ys.len() != spec.n || xs.iter().any(|x| x.len() != spec.d) {
            return Err(Error::Config("data shape does not match the problem spec".into()));
        }
        if xs.iter().flatten().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Config("data must be finite".into()));
        }
        let linf = |x: &[f64]| x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lipschitz = xs
            .iter()
            .zip(&ys)
            .map(|(x, &y)| match spec.loss {
                Loss::LeastSquares => (norm2(x) * spec.radius + y.abs()) * linf(x),
                Loss::Logistic => linf(x),
            })
            .fold(0.0f64, f64::max);
        let mut p = ConvexProblem {
            spec,
            xs,
            ys,
            lipschitz,
            optimum: vec![0.0; spec.d],
            opt_value: 0.0,
        };
        p.optimum = p.solve();
        p.opt_value = p.objective(&p.optimum);
        Ok(p)
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn dim(&self) -> usize {
        self.spec.d
    }

    pub fn radius(&self) -> f64 {
        self.spec.radius
    }

    /// `l2` diameter of the domain.
    pub fn diameter(&self) -> f64 {
        2.0 * self.spec.radius
    }

    /// Bound on `||grad f(theta, d_i)||_inf` over the domain and all samples.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    pub fn opt_value(&self) -> f64 {
        self.opt_value
    }

    pub fn sample_loss(&self, i: usize, theta: &[f64]) -> f64 {
        let z = dot(&self.xs[i], theta);
        match self.spec.loss {
            Loss::LeastSquares => 0.5 * (z - self.ys[i]).powi(2),
            Loss::Logistic => {
                let m = -self.ys[i] * z;
                // ln(1 + e^m)
                if m > 0.0 {
                    m + (-m).exp().ln_1p()
                } else {
                    m.exp().ln_1p()
                }
            }
        }
    }

    pub fn sample_gradient(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        let x = &self.xs[i];
        let z = dot(x, theta);
        let w = match self.spec.loss {
            Loss::LeastSquares => z - self.ys[i],
            Loss::Logistic => -self.ys[i] * sigmoid(-self.ys[i] * z),
        };
        x.iter().map(|v| w * v).collect()
    }

    pub fn objective(&self, theta: &[f64]) -> f64 {
        (0..self.spec.n).map(|i| self.sample_loss(i, theta)).sum::<f64>() / self.spec.n as f64
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.spec.d];
        for i in 0..self.spec.n {
            for (a, b) in g.iter_mut().zip(self.sample_gradient(i, theta)) {
                *a += b;
            }
        }
        let n = self.spec.n as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }

    /// Smoothness constant of `F`: the top eigenvalue of `X^T X / n`, scaled
    /// by 1/4 for the logistic loss.
    fn smoothness(&self) -> f64 {
        let d = self.spec.d;
        let mut a = vec![vec![0.0; d]; d];
        for x in &self.xs {
            for r in 0..d {
                for c in 0..d {
                    a[r][c] += x[r] * x[c];
                }
            }
        }
        let n = self.spec.n as f64;
        // power iteration, padded by 1% and capped by the trace
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        let mut ev = 0.0;
        for _ in 0..500 {
            let w: Vec<f64> = a.iter().map(|row| dot(row, &v) / n).collect();
            let s = norm2(&w);
            if s == 0.0 {
                break;
            }
            ev = s;
            v = w.into_iter().map(|x| x / s).collect();
        }
        let trace_bound = (0..d).map(|i| a[i][i] / n).sum::<f64>();
        let top = (ev * 1.01).min(trace_bound).max(f64::MIN_POSITIVE);
        match self.spec.loss {
            Loss::LeastSquares => top,
            Loss::Logistic => top / 4.0,
        }
    }

    /// Deterministic projected full-gradient descent with step `1/beta`.
    fn solve(&self) -> Vec<f64> {
        let step = 1.0 / self.smoothness();
        let mut theta = vec![0.0; self.spec.d];
        for _ in 0..200_000 {
            let g = self.gradient(&theta);
            let next = project(
                &theta.iter().zip(&g).map(|(t, gi)| t - step * gi).collect::<Vec<_>>(),
                self.spec.radius,
            );
            let moved = norm2(&next.iter().zip(&theta).map(|(a, b)| a - b).collect::<Vec<_>>());
            theta = next;
            if moved <= 1e-15 * (1.0 + norm2(&theta)) {
                break;
            }
        }
        theta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        assert_eq!(project(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
        let p = project(&[6.0, 8.0], 5.0);
        assert!((p[0] - 3.0).abs() < 1e-15 && (p[1] - 4.0).abs() < 1e-15);
        let mut rng = seeded(1);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let (px, py) = (project(&x, 1.5), project(&y, 1.5));
            for (a, b) in project(&px, 1.5).iter().zip(&px) {
                assert!((a - b).abs() <= 1e-15);
            }
            let dp = norm2(&px.iter().zip(&py).map(|(a, b)| a - b).collect::<Vec<_>>());
            let d = norm2(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!(dp <= d + 1e-12);
        }
    }

    #[test]
    fn optimum_is_stationary() {
        for loss in [Loss::LeastSquares, Loss::Logistic] {
            let spec = ProblemSpec {
                loss,
                n: 300,
                d: 5,
                radius: 1.0,
                noise: 0.1,
                seed: 4,
            };
            let p = ConvexProblem::synthetic(spec).unwrap();
            let opt = p.optimum().to_vec();
            // no feasible point nearby does better
            let mut rng = seeded(9);
            for _ in 0..200 {
                let dir: Vec<f64> = (0..5).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
                let q = project(&opt.iter().zip(&dir).map(|(a, b)| a + b).collect::<Vec<_>>(), 1.0);
                assert!(p.objective(&q) >= p.opt_value() - 1e-13, "{loss:?}");
            }
        }
    }

    #[test]
    fn gradients_within_lipschitz_bound() {
        let p = ConvexProblem::synthetic(ProblemSpec::least_squares(200, 10, 1.0, 2)).unwrap();
        let mut rng = seeded(3);
        for _ in 0..200 {
            let theta = project(&(0..10).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>(), 1.0);
            let i = rng.gen_range(0..200);
            let g = p.sample_gradient(i, &theta);
            assert!(g.iter().all(|v| v.abs() <= p.lipschitz() + 1e-12));
        }
        // finite-difference check of the full gradient
        let theta = vec![0.1; 10];
        let g = p.gradient(&theta);
        for j in 0..10 {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[j] += 1e-6;
            b[j] -= 1e-6;
            let fd = (p.objective(&a) - p.objective(&b)) / 2e-6;
            assert!((fd - g[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ConvexProblem::synthetic(ProblemSpec::least_squares(0, 3, 1.0, 0)).is_err());
        assert!(ConvexProblem::synthetic(ProblemSpec::least_squares(10, 3, -1.0, 0)).is_err());
    }
}
