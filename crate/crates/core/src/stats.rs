//! Small statistics helpers shared by the estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Running mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then_some(self.mean)
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> Option<f64> {
        (self.count > 1).then(|| self.m2 / (self.count - 1) as f64)
    }

    pub fn stderr(&self) -> Option<f64> {
        self.variance().map(|v| (v / self.count as f64).sqrt())
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// One point of an exponent fit: grid value `n`, the raw estimate and its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub estimate: f64,
    pub stderr: f64,
}

/// Least-squares slope of a log-scale quantity against the grid variable.
///
/// `grid` keeps the points that entered the fit; `dropped` lists grid
/// values whose estimate was zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub grid: Vec<GridPoint>,
    pub dropped: Vec<usize>,
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
}

/// Which log transform turns the raw estimate into the fitted ordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogScale {
    /// `-log(estimate)`; decay rates of probabilities.
    NegLog,
    /// `log(estimate)`; growth rates of expectations.
    Log,
}

impl SlopeFit {
    pub fn fit(points: Vec<GridPoint>, scale: LogScale) -> Result<Self> {
        let (grid, dropped): (Vec<_>, Vec<_>) = points.into_iter().partition(|p| p.estimate > 0.0);
        let dropped: Vec<usize> = dropped.into_iter().map(|p| p.n).collect();
        if grid.len() < 3 {
            return Err(Error::DegenerateEstimate(format!(
                "only {} grid points with a positive estimate (dropped N = {:?}); need 3",
                grid.len(),
                dropped
            )));
        }
        let xs: Vec<f64> = grid.iter().map(|p| p.n as f64).collect();
        let ys: Vec<f64> = grid
            .iter()
            .map(|p| match scale {
                LogScale::NegLog => -p.estimate.ln(),
                LogScale::Log => p.estimate.ln(),
            })
            .collect();
        let (slope, intercept, slope_stderr) = least_squares(&xs, &ys)?;
        Ok(SlopeFit {
            grid,
            dropped,
            slope,
            slope_stderr,
            intercept,
        })
    }

    pub fn relative_error(&self, target: f64) -> f64 {
        ((self.slope - target) / target).abs()
    }
}

/// Unweighted least squares `y = a + b x`; returns `(b, a, stderr(b))`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let m = xs.len();
    if m < 2 || m != ys.len() {
        return Err(Error::InvalidInput(
            "least squares needs at least two paired points".into(),
        ));
    }
    let mx = xs.iter().sum::<f64>() / m as f64;
    let my = ys.iter().sum::<f64>() / m as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("grid values are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if m > 2 {
        let ssr: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let r = y - intercept - slope * x;
                r * r
            })
            .sum();
        (ssr / (m - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, intercept, stderr))
}

/// Binomial proportion with its standard error.
pub fn proportion(hits: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 0.0);
    }
    let p = hits as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}
