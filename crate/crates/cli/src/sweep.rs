use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Axis {
    #[serde(rename = "T")]
    #[value(name = "T")]
    T,
    #[serde(rename = "n")]
    #[value(name = "n")]
    N,
    #[serde(rename = "lambda")]
    #[value(name = "lambda")]
    Lambda,
    #[serde(rename = "eps0")]
    #[value(name = "eps0")]
    Eps0,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::T => "T",
            Axis::N => "n",
            Axis::Lambda => "lambda",
            Axis::Eps0 => "eps0",
        }
    }

    fn integral(self) -> bool {
        !matches!(self, Axis::Eps0)
    }
}

/// `points` values spaced evenly in log scale from `start` to `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl std::str::FromStr for LogRange {
    type Err = String;

    /// `start:stop:points`
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:stop:points, got `{s}`"));
        }
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
        Ok(LogRange {
            start: num(parts[0])?,
            stop: num(parts[1])?,
            points: parts[2].trim().parse().map_err(|e| format!("`{}`: {e}", parts[2]))?,
        })
    }
}

impl LogRange {
    fn expand(&self) -> Result<Vec<f64>> {
        if !(self.start > 0.0 && self.stop >= self.start && self.stop.is_finite()) {
            bail!("log range needs 0 < start <= stop, got {}..{}", self.start, self.stop);
        }
        if self.points == 0 {
            bail!("log range needs at least one point");
        }
        if self.points == 1 {
            return Ok(vec![self.start]);
        }
        let (a, b) = (self.start.ln(), self.stop.ln());
        let m = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                if i == self.points - 1 {
                    self.stop
                } else {
                    (a + (b - a) * i as f64 / m).exp()
                }
            })
            .collect())
    }
}

/// Axis plus the validated list of values along it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
}

impl SweepSpec {
    /// Exactly one of `values` and `range` must be given. Integer axes round
    /// log-range points to the nearest integer and drop repeats.
    pub fn new(axis: Axis, values: Option<Vec<f64>>, range: Option<LogRange>) -> Result<Self> {
        let mut vals = match (values, range) {
            (Some(v), None) => v,
            (None, Some(r)) => {
                let raw = r.expand()?;
                if axis.integral() {
                    let mut v: Vec<f64> = raw.into_iter().map(f64::round).collect();
                    v.dedup();
                    v
                } else {
                    raw
                }
            }
            (Some(_), Some(_)) => bail!("give either --values or --range, not both"),
            (None, None) => bail!("a sweep needs --values or --range"),
        };
        if vals.is_empty() {
            bail!("sweep values must be nonempty");
        }
        for &v in &vals {
            if !(v > 0.0 && v.is_finite()) {
                bail!("sweep values must be positive and finite, got {v}");
            }
            if axis.integral() && v.fract() != 0.0 {
                bail!("axis {} takes integers, got {v}", axis.name());
            }
        }
        if vals.windows(2).any(|w| w[1] <= w[0]) {
            bail!("sweep values must be strictly increasing");
        }
        if axis == Axis::Lambda && vals[0] < 2.0 {
            bail!("RDP orders start at 2");
        }
        if axis.integral() && vals.iter().any(|&v| v > u32::MAX as f64 && axis == Axis::Lambda) {
            bail!("RDP order too large");
        }
        vals.shrink_to_fit();
        Ok(SweepSpec { axis, values: vals })
    }
}
