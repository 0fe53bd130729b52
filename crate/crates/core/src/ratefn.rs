//! Legendre-Fenchel rate functions `I(r) = sup_λ (λ r - K(λ))`.
//!
//! Gaussian laws use the closed form `(r - μ)² / (2σ²)`. Laws with bounded
//! support solve the stationarity equation `K'(λ) = r` by a bracketed Newton
//! iteration, with exact values `-log P(X = x±)` at the support endpoints
//! and `+inf` beyond them.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{Direction, IncrementDistribution};
use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::rng::RandomStream;
use crate::stats::{proportion, GridPoint, LogScale, SlopeFit};

pub const MAX_ITERATIONS: usize = 200;
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct RateFunction {
    dist: IncrementDistribution,
    x_minus: ExtendedReal,
    x_plus: ExtendedReal,
}

/// Value of the rate function together with the maximizing `λ`.
///
/// `lambda_star` is `±inf` when the supremum is only approached, i.e. at or
/// beyond a support endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub r: f64,
    pub value: ExtendedReal,
    pub lambda_star: ExtendedReal,
}

impl RateFunction {
    pub fn new(dist: IncrementDistribution) -> Self {
        let (x_minus, x_plus) = dist.support();
        Self {
            dist,
            x_minus,
            x_plus,
        }
    }

    pub fn distribution(&self) -> &IncrementDistribution {
        &self.dist
    }

    pub fn domain_endpoints(&self) -> (ExtendedReal, ExtendedReal) {
        (self.x_minus, self.x_plus)
    }

    pub fn evaluate(&self, r: f64) -> Result<ExtendedReal> {
        Ok(self.solve(r)?.value)
    }

    pub fn solve(&self, r: f64) -> Result<RatePoint> {
        if !r.is_finite() {
            return Err(Error::InvalidInput(format!(
                "rate function argument must be finite, got {r}"
            )));
        }
        let point = |value: ExtendedReal, lambda_star: ExtendedReal| RatePoint {
            r,
            value,
            lambda_star,
        };
        if let IncrementDistribution::Gaussian(_) = self.dist {
            let mu = self.dist.mean();
            let s2 = self.dist.variance();
            let d = r - mu;
            return Ok(point(
                ExtendedReal::Finite(d * d / (2.0 * s2)),
                ExtendedReal::Finite(d / s2),
            ));
        }
        if self.x_plus.gt_f64(r) && self.x_minus < ExtendedReal::Finite(r) {
            let (lambda, value) = solve_conjugate(&self.dist, r)?;
            return Ok(point(
                ExtendedReal::Finite(value),
                ExtendedReal::Finite(lambda),
            ));
        }
        let at_plus = self.x_plus == ExtendedReal::Finite(r);
        let at_minus = self.x_minus == ExtendedReal::Finite(r);
        if at_plus && at_minus {
            // point mass
            return Ok(point(ExtendedReal::ZERO, ExtendedReal::ZERO));
        }
        if at_plus || at_minus {
            let mass = self.dist.atom_mass(r);
            let lambda = if at_plus {
                ExtendedReal::PosInf
            } else {
                ExtendedReal::NegInf
            };
            return Ok(point(ExtendedReal::Finite(-mass.ln()), lambda));
        }
        let lambda = if self.x_plus.gt_f64(r) {
            ExtendedReal::NegInf
        } else {
            ExtendedReal::PosInf
        };
        Ok(point(ExtendedReal::PosInf, lambda))
    }
}

/// Solves `K'(λ) = r` and returns `(λ*, λ* r - K(λ*))`.
///
/// Works for any law; `r` must lie strictly inside the convex hull of the
/// support. `K'` is increasing, so a bracket is grown from `λ = 0` until it
/// contains the root, and Newton steps that leave the bracket are replaced
/// by bisection.
pub fn solve_conjugate(dist: &IncrementDistribution, r: f64) -> Result<(f64, f64)> {
    let tol = RESIDUAL_TOLERANCE * r.abs().max(1.0);
    let residual = |lambda: f64| {
        let (k1, k2) = dist.cgf_derivatives(lambda);
        (k1 - r, k2)
    };
    let finish = |lambda: f64| Ok((lambda, (lambda * r - dist.cgf(lambda)).max(0.0)));

    let (res0, _) = residual(0.0);
    if res0.abs() <= tol {
        return finish(0.0);
    }
    let mut iterations = 0;
    let (mut lo, mut hi) = if res0 < 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
    loop {
        let edge = if res0 < 0.0 { hi } else { lo };
        let (res, _) = residual(edge);
        if res.abs() <= tol {
            return finish(edge);
        }
        if (res0 < 0.0 && res > 0.0) || (res0 > 0.0 && res < 0.0) {
            break;
        }
        iterations += 1;
        if iterations >= MAX_ITERATIONS {
            return Err(Error::NonConvergence { r, iterations });
        }
        if res0 < 0.0 {
            lo = hi;
            hi *= 2.0;
        } else {
            hi = lo;
            lo *= 2.0;
        }
    }

    let mut lambda = if res0 < 0.0 { lo } else { hi };
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (res, k2) = residual(lambda);
        if res.abs() <= tol {
            return finish(lambda);
        }
        if res < 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let newton = lambda - res / k2;
        lambda = if k2 > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NonConvergence { r, iterations })
}

/// Monte Carlo `P(S_n / n >= r)` (direction `Up`) or `P(S_n / n <= r)` (`Down`).
/// Returns `(hits, trials)`.
pub fn tail_hits<R: Rng + ?Sized>(
    dist: &IncrementDistribution,
    n: usize,
    r: f64,
    direction: Direction,
    samples: u64,
    rng: &mut R,
) -> u64 {
    let mut hits = 0;
    for _ in 0..samples {
        let s: f64 = (0..n).map(|_| dist.sample(rng)).sum();
        let mean = s / n as f64;
        let hit = match direction {
            Direction::Up => mean >= r,
            Direction::Down => mean <= r,
        };
        hits += hit as u64;
    }
    hits
}

/// Estimates the large-deviation slope of `-(1/n) log P(S_n/n >= r)` (or `<= r`)
/// by least squares over `n_grid`.
///
/// Each grid entry uses its own stream derived from `seed`. Entries with no
/// hits are dropped; fewer than three survivors is an error.
pub fn verify_cramer_slope(
    dist: &IncrementDistribution,
    r: f64,
    direction: Direction,
    n_grid: &[usize],
    seed: u64,
    samples_per_n: u64,
) -> Result<SlopeFit> {
    if n_grid.len() < 3 || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(Error::InvalidInput(
            "n_grid must be strictly increasing, positive, with at least 3 entries".into(),
        ));
    }
    if samples_per_n == 0 {
        return Err(Error::InvalidInput("samples_per_n must be positive".into()));
    }
    let (x_minus, x_plus) = dist.support();
    let mean = dist.mean();
    let inside = match direction {
        Direction::Up => r >= mean && x_plus.gt_f64(r),
        Direction::Down => r <= mean && x_minus < ExtendedReal::Finite(r),
    };
    if !inside {
        return Err(Error::InvalidInput(format!(
            "r = {r} must lie between the mean {mean} and the {direction:?} support endpoint"
        )));
    }

    let points: Vec<GridPoint> = n_grid
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut rng = RandomStream::derive(seed, k as u64);
            let hits = tail_hits(dist, n, r, direction, samples_per_n, &mut rng);
            let (p, se) = proportion(hits, samples_per_n);
            GridPoint {
                n,
                estimate: p,
                stderr: se,
            }
        })
        .collect();
    SlopeFit::fit(points, LogScale::NegLog)
}
