//! Local randomizers with a finite output alphabet.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary randomized response: keeps the input bit with probability
/// `e^eps0 / (e^eps0 + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rr2Mech {
    eps0: f64,
    flip_prob: f64,
}

impl Rr2Mech {
    pub fn new(eps0: f64) -> Result<Self> {
        if !eps0.is_finite() || eps0 < 0.0 {
            return Err(Error::domain(format!("eps0 must be finite and >= 0, got {eps0}")));
        }
        Ok(Rr2Mech {
            eps0,
            flip_prob: 1.0 / (eps0.exp() + 1.0),
        })
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn flip_prob(&self) -> f64 {
        self.flip_prob
    }

    pub fn randomize<R: Rng + ?Sized>(&self, bit: bool, rng: &mut R) -> bool {
        bit ^ (rng.gen::<f64>() < self.flip_prob)
    }

    /// `kernel[input][output]`.
    pub fn kernel(&self) -> [[f64; 2]; 2] {
        let p = self.flip_prob;
        [[1.0 - p, p], [p, 1.0 - p]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    Linf,
    L2,
}

pub fn norm(x: &[f64], which: Norm) -> f64 {
    match which {
        Norm::Linf => x.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
        Norm::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

/// Scales `x` into the ball of radius `c`; points already inside are
/// returned unchanged.
pub fn clip(x: &[f64], c: f64, which: Norm) -> Result<Vec<f64>> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::domain(format!("clipping radius must be positive, got {c}")));
    }
    let scale = (norm(x, which) / c).max(1.0);
    Ok(x.iter().map(|v| v / scale).collect())
}

/// One message of [`VecMech`]: a coordinate and a sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VecMessage {
    pub coord: u32,
    pub positive: bool,
}

/// Unbiased `eps0`-LDP randomizer for the `l_inf` ball of radius `c` in
/// `d` dimensions.
///
/// A uniformly chosen coordinate is rounded to `+-c` at random, the sign is
/// passed through [`Rr2Mech`], and the server rescales by
/// `d c (e^eps0 + 1) / (e^eps0 - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VecMech {
    eps0: f64,
    d: usize,
    c: f64,
    sign: Rr2Mech,
}

impl VecMech {
    pub fn new(eps0: f64, d: usize, c: f64) -> Result<Self> {
        if !eps0.is_finite() || eps0 <= 0.0 {
            return Err(Error::domain(format!(
                "vector mechanism needs finite eps0 > 0, got {eps0}"
            )));
        }
        if d == 0 || d > u32::MAX as usize {
            return Err(Error::domain(format!("dimension must lie in [1, 2^32), got {d}")));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::domain(format!("clipping radius must be positive, got {c}")));
        }
        Ok(VecMech {
            eps0,
            d,
            c,
            sign: Rr2Mech::new(eps0)?,
        })
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> f64 {
        self.c
    }

    /// Magnitude of every decoded message.
    pub fn scale(&self) -> f64 {
        self.d as f64 * self.c / (self.eps0 / 2.0).tanh()
    }

    /// `G_inf^2(c) = c^2 d^2 ((e^eps0 + 1) / (e^eps0 - 1))^2`, the second
    /// moment of a decoded message and so a bound on its variance.
    pub fn variance_bound(&self) -> f64 {
        self.scale().powi(2)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::domain(format!(
                "input has dimension {}, mechanism expects {}",
                x.len(),
                self.d
            )));
        }
        let m = norm(x, Norm::Linf);
        if !(m <= self.c * (1.0 + 1e-12)) {
            return Err(Error::domain(format!(
                "input l_inf norm {m} exceeds the radius {}; clip first",
                self.c
            )));
        }
        Ok(())
    }

    fn plus_prob(&self, xj: f64) -> f64 {
        (0.5 + xj / (2.0 * self.c)).clamp(0.0, 1.0)
    }

    pub fn randomize<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<VecMessage> {
        self.check_input(x)?;
        // u32 draws keep streams identical on 32- and 64-bit targets
        let coord = rng.gen_range(0..self.d as u32);
        let bit = rng.gen::<f64>() < self.plus_prob(x[coord as usize]);
        Ok(VecMessage {
            coord,
            positive: self.sign.randomize(bit, rng),
        })
    }

    pub fn decode(&self, msg: VecMessage) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.decode_into(msg, &mut out);
        out
    }

    /// Adds the decoded message to `acc`.
    pub fn decode_into(&self, msg: VecMessage, acc: &mut [f64]) {
        let s = self.scale();
        acc[msg.coord as usize] += if msg.positive { s } else { -s };
    }

    /// Probability of emitting `msg` on input `x`.
    pub fn output_prob(&self, x: &[f64], msg: VecMessage) -> Result<f64> {
        self.check_input(x)?;
        let keep = 1.0 - self.sign.flip_prob();
        let plus = self.plus_prob(x[msg.coord as usize]);
        let q = if msg.positive { plus } else { 1.0 - plus };
        Ok((keep * q + (1.0 - keep) * (1.0 - q)) / self.d as f64)
    }

    /// The whole output alphabet, in a fixed order.
    pub fn alphabet(&self) -> impl Iterator<Item = VecMessage> {
        (0..self.d as u32).flat_map(|coord| {
            [false, true].into_iter().map(move |positive| VecMessage { coord, positive })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn rr2_keep_rates() {
        let mut rng = seeded(1);
        let n = 100_000;
        for (eps0, want) in [(0.0, 0.5), (2.0, 2f64.exp() / (2f64.exp() + 1.0))] {
            let m = Rr2Mech::new(eps0).unwrap();
            let kept = (0..n).filter(|_| m.randomize(true, &mut rng)).count() as f64 / n as f64;
            let sigma = (want * (1.0 - want) / n as f64).sqrt();
            assert!((kept - want).abs() < 3.0 * sigma, "eps0={eps0} kept={kept}");
        }
        assert!((Rr2Mech::new(2.0).unwrap().kernel()[1][1] - 0.880_797_077_977_882_4).abs() < 1e-15);
    }

    #[test]
    fn rr2_kernel_ratio() {
        for i in 0..=40 {
            let eps0 = 0.1 * f64::from(i);
            let k = Rr2Mech::new(eps0).unwrap().kernel();
            for out in 0..2 {
                let r = (k[0][out] / k[1][out]).ln().abs();
                assert!(r <= eps0 + 1e-12);
            }
        }
        assert!(Rr2Mech::new(-1.0).is_err());
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip(&[0.3, -0.4], 1.0, Norm::L2).unwrap(), vec![0.3, -0.4]);
        assert_eq!(clip(&[4.0, 0.0, 0.0], 2.0, Norm::L2).unwrap(), vec![2.0, 0.0, 0.0]);
        assert_eq!(clip(&[3.0, -1.5], 1.5, Norm::Linf).unwrap(), vec![1.5, -0.75]);
        assert!(clip(&[1.0], 0.0, Norm::L2).is_err());
        let mut rng = seeded(2);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let c = rng.gen_range(0.1..5.0);
            for w in [Norm::L2, Norm::Linf] {
                assert!(norm(&clip(&x, c, w).unwrap(), w) <= c + 1e-12);
            }
        }
    }

    #[test]
    fn vec_mech_validation() {
        assert!(VecMech::new(0.0, 4, 1.0).is_err());
        assert!(VecMech::new(1.0, 0, 1.0).is_err());
        let m = VecMech::new(1.0, 2, 1.0).unwrap();
        let mut rng = seeded(3);
        assert!(m.randomize(&[1.5, 0.0], &mut rng).is_err());
        assert!(m.randomize(&[0.5], &mut rng).is_err());
        let g = VecMech::new(2.0, 1, 1.0).unwrap().variance_bound();
        assert!((g - 1.724_061_660_966_310_9).abs() < 1e-12, "{g}");
    }

    #[test]
    fn vec_mech_kernel_is_ldp_and_unbiased() {
        for &eps0 in &[0.5, 1.0, 2.0] {
            let m = VecMech::new(eps0, 3, 1.5).unwrap();
            let inputs = [
                vec![1.5, -1.5, 0.0],
                vec![-1.5, 1.5, 0.7],
                vec![0.0, 0.0, 0.0],
                vec![0.2, -0.9, -1.5],
            ];
            for a in &inputs {
                let mut total = 0.0;
                let mut mean = vec![0.0; 3];
                for msg in m.alphabet() {
                    let pa = m.output_prob(a, msg).unwrap();
                    total += pa;
                    let dec = m.decode(msg);
                    for (mu, v) in mean.iter_mut().zip(dec) {
                        *mu += pa * v;
                    }
                    for b in &inputs {
                        let pb = m.output_prob(b, msg).unwrap();
                        assert!((pa / pb).ln() <= eps0 + 1e-12);
                    }
                }
                assert!((total - 1.0).abs() < 1e-12);
                for (mu, x) in mean.iter().zip(a) {
                    assert!((mu - x).abs() < 1e-12);
                }
            }
        }
    }

    fn monte_carlo(m: &VecMech, x: &[f64], n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, f64) {
        let mut rng = seeded(seed);
        let d = m.dim();
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut err2 = 0.0;
        for _ in 0..n {
            let out = m.decode(m.randomize(x, &mut rng).unwrap());
            for j in 0..d {
                sum[j] += out[j];
                sq[j] += out[j] * out[j];
                err2 += (out[j] - x[j]).powi(2);
            }
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let se: Vec<f64> = (0..d)
            .map(|j| ((sq[j] / nf - mean[j] * mean[j]) / nf).sqrt())
            .collect();
        (mean, se, err2 / nf)
    }

    #[test]
    fn vec_mech_zero_input() {
        let m = VecMech::new(1.0, 8, 1.0).unwrap();
        let (mean, se, _) = monte_carlo(&m, &[0.0; 8], 100_000, 4);
        for (mu, s) in mean.iter().zip(&se) {
            assert!(mu.abs() <= 4.0 * s);
        }
    }

    #[test]
    fn vec_mech_scalar_example() {
        let m = VecMech::new(2.0, 1, 1.0).unwrap();
        let (mean, se, err2) = monte_carlo(&m, &[0.5], 100_000, 5);
        assert!((mean[0] - 0.5).abs() < 3.0 * se[0]);
        assert!(err2 <= m.variance_bound());
    }

    #[test]
    fn vec_mech_contracts_on_grid() {
        let mut rng = seeded(6);
        for &d in &[1usize, 8, 64] {
            for &eps0 in &[1.0, 2.0] {
                let c = 0.8;
                let m = VecMech::new(eps0, d, c).unwrap();
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-c..=c)).collect();
                let (mean, se, err2) = monte_carlo(&m, &x, 40_000, 7 + d as u64);
                for j in 0..d {
                    assert!((mean[j] - x[j]).abs() <= 4.0 * se[j], "d={d} eps0={eps0} j={j}");
                }
                assert!(err2 <= 1.1 * m.variance_bound());
            }
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let m = VecMech::new(1.0, 16, 1.0).unwrap();
        let x = vec![0.25; 16];
        let run = |seed| {
            let mut rng = seeded(seed);
            (0..100).map(|_| m.randomize(&x, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }
}
