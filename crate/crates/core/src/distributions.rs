//! Increment laws.
//!
//! Only families with a moment generating function that is finite on the
//! whole real line are offered (bounded support or Gaussian), so the
//! two-sided exponential moment condition needed by the large-deviation
//! results never has to be checked at runtime.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::extended::ExtendedReal;

/// Which side of a level a tail probability refers to.
///
/// `Ge` includes the level itself, matching the half-open regime intervals
/// `[r_i, r_{i+1})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Ge,
    Lt,
}

/// Direction of a deviation or of a regime exit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    mu: f64,
    sigma2: f64,
    sigma: f64,
}

/// Two atoms, `+1` with probability `p` and `-1` with probability `1 - p`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rademacher {
    p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDiscrete {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    cdf: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionConfig", into = "DistributionConfig")]
pub enum IncrementDistribution {
    Gaussian(Gaussian),
    Rademacher(Rademacher),
    FiniteDiscrete(FiniteDiscrete),
}

/// Wire form of [`IncrementDistribution`], e.g. `{"kind":"gaussian","mu":0.0,"sigma2":1.0}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionConfig {
    Gaussian { mu: f64, sigma2: f64 },
    Rademacher { p: f64 },
    FiniteDiscrete { atoms: Vec<f64>, weights: Vec<f64> },
}

impl TryFrom<DistributionConfig> for IncrementDistribution {
    type Error = Error;

    fn try_from(c: DistributionConfig) -> Result<Self> {
        match c {
            DistributionConfig::Gaussian { mu, sigma2 } => Self::gaussian(mu, sigma2),
            DistributionConfig::Rademacher { p } => Self::rademacher(p),
            DistributionConfig::FiniteDiscrete { atoms, weights } => {
                Self::finite_discrete(atoms, weights)
            }
        }
    }
}

impl From<IncrementDistribution> for DistributionConfig {
    fn from(d: IncrementDistribution) -> Self {
        match d {
            IncrementDistribution::Gaussian(g) => DistributionConfig::Gaussian {
                mu: g.mu,
                sigma2: g.sigma2,
            },
            IncrementDistribution::Rademacher(r) => DistributionConfig::Rademacher { p: r.p },
            IncrementDistribution::FiniteDiscrete(f) => DistributionConfig::FiniteDiscrete {
                atoms: f.atoms,
                weights: f.weights,
            },
        }
    }
}

impl IncrementDistribution {
    pub fn gaussian(mu: f64, sigma2: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "gaussian mean must be finite, got {mu}"
            )));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "gaussian variance must be positive and finite, got {sigma2}"
            )));
        }
        Ok(Self::Gaussian(Gaussian {
            mu,
            sigma2,
            sigma: sigma2.sqrt(),
        }))
    }

    pub fn rademacher(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "rademacher p must lie in (0, 1), got {p}"
            )));
        }
        Ok(Self::Rademacher(Rademacher { p }))
    }

    /// Atoms must be strictly increasing and finite; weights positive and summing to
    /// one within `1e-12`. Weights are renormalized to sum exactly to one.
    pub fn finite_discrete(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidDistribution(format!(
                "finite discrete law needs matching non-empty atoms and weights ({} vs {})",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidDistribution("atoms must be finite".into()));
        }
        if atoms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDistribution(
                "atoms must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidDistribution(
                "weights must be positive and finite".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "weights must sum to 1 within 1e-12, got {total}"
            )));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self::FiniteDiscrete(FiniteDiscrete {
            atoms,
            weights,
            cdf,
        }))
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Gaussian(g) => g.mu,
            Self::Rademacher(r) => 2.0 * r.p - 1.0,
            Self::FiniteDiscrete(f) => f.atoms.iter().zip(&f.weights).map(|(a, w)| a * w).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Gaussian(g) => g.sigma2,
            Self::Rademacher(r) => 4.0 * r.p * (1.0 - r.p),
            Self::FiniteDiscrete(f) => {
                let m = self.mean();
                f.atoms
                    .iter()
                    .zip(&f.weights)
                    .map(|(a, w)| w * (a - m) * (a - m))
                    .sum()
            }
        }
    }

    /// Cumulant generating function `K(t) = log E[e^{tX}]`.
    pub fn cgf(&self, t: f64) -> f64 {
        match self {
            Self::Gaussian(g) => g.mu * t + 0.5 * g.sigma2 * t * t,
            Self::Rademacher(r) => {
                // log(p e^t + q e^-t) shifted by |t|
                let a = t.abs();
                a + (r.p * (t - a).exp() + (1.0 - r.p) * (-t - a).exp()).ln()
            }
            Self::FiniteDiscrete(f) => {
                let m = f.max_exponent(t);
                let s: f64 = f
                    .atoms
                    .iter()
                    .zip(&f.weights)
                    .map(|(x, w)| w.ln() + t * x - m)
                    .map(f64::exp)
                    .sum();
                m + s.ln()
            }
        }
    }

    /// `(K'(t), K''(t))`: mean and variance of the exponentially tilted law.
    pub fn cgf_derivatives(&self, t: f64) -> (f64, f64) {
        match self {
            Self::Gaussian(g) => (g.mu + g.sigma2 * t, g.sigma2),
            Self::Rademacher(r) => {
                // tilted weight of +1, written as a logistic to stay finite
                let logit = (r.p / (1.0 - r.p)).ln() + 2.0 * t;
                let w = 1.0 / (1.0 + (-logit).exp());
                (2.0 * w - 1.0, 4.0 * w * (1.0 - w))
            }
            Self::FiniteDiscrete(f) => {
                let m = f.max_exponent(t);
                let mut z = 0.0;
                let mut s1 = 0.0;
                for (x, w) in f.atoms.iter().zip(&f.weights) {
                    let e = (w.ln() + t * x - m).exp();
                    z += e;
                    s1 += e * x;
                }
                let mean = s1 / z;
                let var: f64 = f
                    .atoms
                    .iter()
                    .zip(&f.weights)
                    .map(|(x, w)| (w.ln() + t * x - m).exp() * (x - mean) * (x - mean))
                    .sum::<f64>()
                    / z;
                (mean, var.max(0.0))
            }
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian(g) => {
                let z: f64 = rng.sample(StandardNormal);
                g.mu + g.sigma * z
            }
            Self::Rademacher(r) => {
                if rng.random::<f64>() < r.p {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::FiniteDiscrete(f) => {
                if f.atoms.len() == 1 {
                    return f.atoms[0];
                }
                let u: f64 = rng.random();
                let k = f.cdf.partition_point(|c| *c <= u);
                f.atoms[k.min(f.atoms.len() - 1)]
            }
        }
    }

    /// Exact `P(X >= r)` or `P(X < r)`.
    pub fn tail_prob(&self, r: f64, side: Side) -> f64 {
        match self {
            Self::Gaussian(g) => {
                let z = (r - g.mu) / (g.sigma * std::f64::consts::SQRT_2);
                match side {
                    Side::Ge => 0.5 * erfc(z),
                    Side::Lt => 0.5 * erfc(-z),
                }
            }
            Self::Rademacher(rd) => {
                let ge = if r <= -1.0 {
                    1.0
                } else if r <= 1.0 {
                    rd.p
                } else {
                    0.0
                };
                match side {
                    Side::Ge => ge,
                    Side::Lt => {
                        if r <= -1.0 {
                            0.0
                        } else if r <= 1.0 {
                            1.0 - rd.p
                        } else {
                            1.0
                        }
                    }
                }
            }
            Self::FiniteDiscrete(f) => {
                let k = f.atoms.partition_point(|a| *a < r);
                match side {
                    Side::Lt => f.weights[..k].iter().sum(),
                    Side::Ge => f.weights[k..].iter().sum(),
                }
            }
        }
    }

    /// `P(X = x)`; zero for the Gaussian.
    pub fn atom_mass(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian(_) => 0.0,
            Self::Rademacher(r) => {
                if x == 1.0 {
                    r.p
                } else if x == -1.0 {
                    1.0 - r.p
                } else {
                    0.0
                }
            }
            Self::FiniteDiscrete(f) => f
                .atoms
                .iter()
                .position(|a| *a == x)
                .map_or(0.0, |k| f.weights[k]),
        }
    }

    /// Essential infimum and supremum of the support.
    pub fn support(&self) -> (ExtendedReal, ExtendedReal) {
        match self {
            Self::Gaussian(_) => (ExtendedReal::NegInf, ExtendedReal::PosInf),
            Self::Rademacher(_) => (ExtendedReal::Finite(-1.0), ExtendedReal::Finite(1.0)),
            Self::FiniteDiscrete(f) => (
                ExtendedReal::Finite(f.atoms[0]),
                ExtendedReal::Finite(*f.atoms.last().unwrap()),
            ),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Self::Gaussian(_))
    }
}

impl FiniteDiscrete {
    fn max_exponent(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w.ln() + t * x)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}
