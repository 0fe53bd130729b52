//! Monte Carlo estimators and their comparison with the closed-form
//! predictions: long-run speed, switch frequencies, window sweeps, block and
//! exit exponents, and the persistence constant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{Direction, IncrementDistribution, Side};
use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::ratefn::RateFunction;
use crate::rng::RandomStream;
use crate::simulator::{sample_block_z, BlockOutcome, ExitSampler, Version, Walker};
use crate::stats::{proportion, GridPoint, LogScale, Moments, SlopeFit};
use crate::theory::{self, ModelSpec, DEFAULT_TIE_TOL};

/// Batches per replica for the batch-means standard error of the speed.
pub const BATCHES: usize = 32;

/// Largest tolerated fraction of censored exit samples.
pub const CENSORING_LIMIT: f64 = 0.05;

/// Default per-sample step cap for exit sampling.
pub const DEFAULT_EXIT_CAP: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: usize,
    pub mean: f64,
    pub occupancy: f64,
    pub completed_sojourns: u64,
    pub mean_sojourn: Option<f64>,
    pub mean_sojourn_stderr: Option<f64>,
    pub mean_displacement: Option<f64>,
    pub mean_displacement_stderr: Option<f64>,
    pub exit_up_fraction: Option<f64>,
    /// Empirical `p_{i,i+1}`; exactly 1 at regime 0.
    pub p_up: Option<f64>,
    pub p_up_stderr: Option<f64>,
    /// Empirical `p_{i,i-1}`; exactly 1 at regime `l`.
    pub p_down: Option<f64>,
    pub p_down_stderr: Option<f64>,
    /// `mean_displacement - mean * mean_sojourn`.
    pub wald_residual: Option<f64>,
    pub wald_stderr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub replica: u64,
    pub speed: f64,
    pub position: f64,
    pub completed_sojourns: u64,
    pub final_regime: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub version: Version,
    #[serde(rename = "N")]
    pub window: usize,
    pub steps: u64,
    pub replicas: u64,
    pub master_seed: u64,
    /// Stream `(grid_index, replica)` of the master seed; `grid_index` is 0 outside sweeps.
    pub grid_index: u64,
    /// Mean over replicas of `X_n / n`.
    pub est_speed: f64,
    /// Batch-means standard error.
    pub stderr: f64,
    /// Standard error of the replica speeds.
    pub replica_stderr: f64,
    pub regime_occupancy: Vec<f64>,
    /// Fraction of completed sojourns spent in each regime.
    pub switch_frequencies: Vec<f64>,
    pub switch_frequency_stderr: Vec<f64>,
    pub per_regime: Vec<RegimeSummary>,
    /// Renewal-reward speed from the empirical sojourn statistics.
    pub reconstructed_speed: Option<f64>,
    pub reconstructed_stderr: Option<f64>,
    /// Regimes with no completed sojourn.
    pub insufficient_regimes: Vec<usize>,
    pub replica_summaries: Vec<ReplicaSummary>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default)]
struct RegimeAccum {
    steps_in_regime: u64,
    sojourn: Moments,
    displacement: Moments,
    wald: Moments,
    up: u64,
    down: u64,
}

impl RegimeAccum {
    fn merge(&mut self, other: &RegimeAccum) {
        self.steps_in_regime += other.steps_in_regime;
        self.sojourn.merge(&other.sojourn);
        self.displacement.merge(&other.displacement);
        self.wald.merge(&other.wald);
        self.up += other.up;
        self.down += other.down;
    }
}

struct ReplicaRun {
    summary: ReplicaSummary,
    batch_means: Vec<f64>,
    regimes: Vec<RegimeAccum>,
    /// `(steps, displacement)` of every completed sojourn, in order.
    pairs: Vec<(f64, f64)>,
}

fn run_replica(
    spec: &ModelSpec,
    version: Version,
    steps: u64,
    replica: u64,
    mut rng: RandomStream,
) -> ReplicaRun {
    let means = spec.means();
    let mut regimes = vec![RegimeAccum::default(); spec.regimes()];
    let mut pairs = Vec::new();
    let mut batch_means = Vec::with_capacity(BATCHES);
    let boundary = |k: usize| (k as u64 * steps) / BATCHES as u64;

    let mut walker = Walker::new(spec, version, &mut rng);
    let mut next = 1;
    let mut last_pos = 0.0;
    let mut last_time = 0u64;
    loop {
        let t = walker.state().time;
        while next <= BATCHES && boundary(next) == t {
            let x = walker.state().position;
            batch_means.push((x - last_pos) / (t - last_time) as f64);
            last_pos = x;
            last_time = t;
            next += 1;
        }
        if t >= steps {
            break;
        }
        if let Some(rec) = walker.step(&mut rng) {
            let acc = &mut regimes[rec.regime];
            let len = rec.steps as f64;
            acc.steps_in_regime += rec.steps;
            acc.sojourn.push(len);
            acc.displacement.push(rec.displacement);
            acc.wald.push(rec.displacement - means[rec.regime] * len);
            match rec.exit_direction {
                Some(Direction::Up) => acc.up += 1,
                Some(Direction::Down) => acc.down += 1,
                None => {}
            }
            pairs.push((len, rec.displacement));
        }
    }
    let open = walker.open_sojourn();
    regimes[open.regime].steps_in_regime += open.steps;
    let state = walker.state();
    ReplicaRun {
        summary: ReplicaSummary {
            replica,
            speed: state.position / state.time as f64,
            position: state.position,
            completed_sojourns: pairs.len() as u64,
            final_regime: state.regime,
        },
        batch_means,
        regimes,
        pairs,
    }
}

fn check_budget(spec: &ModelSpec, steps: u64, replicas: u64) -> Result<()> {
    spec.check_structure()?;
    let min_steps = 50 * spec.window as u64;
    if steps < min_steps {
        return Err(Error::InvalidInput(format!(
            "steps = {steps} must be at least 50 N = {min_steps}"
        )));
    }
    if replicas < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 replicas, got {replicas}"
        )));
    }
    Ok(())
}

/// Runs `replicas` independent walks of `steps` steps each and aggregates
/// speed, occupancy and sojourn statistics.
///
/// Replica `k` uses stream `k` of `master_seed`. Regimes that never complete
/// a sojourn are listed in `insufficient_regimes` and reported as warnings.
pub fn estimate_speed(
    spec: &ModelSpec,
    version: Version,
    steps: u64,
    replicas: u64,
    master_seed: u64,
) -> Result<SimReport> {
    estimate_speed_in_grid(spec, version, steps, replicas, master_seed, 0)
}

fn estimate_speed_in_grid(
    spec: &ModelSpec,
    version: Version,
    steps: u64,
    replicas: u64,
    master_seed: u64,
    grid_index: u64,
) -> Result<SimReport> {
    check_budget(spec, steps, replicas)?;
    let runs: Vec<ReplicaRun> = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let rng = RandomStream::derive2(master_seed, grid_index, k);
            run_replica(spec, version, steps, k, rng)
        })
        .collect();
    Ok(aggregate(
        spec,
        version,
        steps,
        replicas,
        master_seed,
        grid_index,
        runs,
    ))
}

fn aggregate(
    spec: &ModelSpec,
    version: Version,
    steps: u64,
    replicas: u64,
    master_seed: u64,
    grid_index: u64,
    runs: Vec<ReplicaRun>,
) -> SimReport {
    let nreg = spec.regimes();
    let mut regimes = vec![RegimeAccum::default(); nreg];
    let mut batches = Moments::default();
    let mut speeds = Moments::default();
    for run in &runs {
        for (acc, r) in regimes.iter_mut().zip(&run.regimes) {
            acc.merge(r);
        }
        for b in &run.batch_means {
            batches.push(*b);
        }
        speeds.push(run.summary.speed);
    }
    let total_steps = steps * replicas;
    let completed: u64 = regimes.iter().map(|r| r.sojourn.count).sum();
    let mut warnings = Vec::new();
    let mut insufficient = Vec::new();
    let l = spec.l();

    let per_regime: Vec<RegimeSummary> = regimes
        .iter()
        .enumerate()
        .map(|(i, acc)| {
            let n = acc.sojourn.count;
            if n == 0 {
                insufficient.push(i);
            }
            let frac = |hits: u64| (n > 0).then(|| proportion(hits, n));
            let (p_up, p_down) = if i == 0 {
                (Some((1.0, 0.0)), None)
            } else if i == l {
                (None, Some((1.0, 0.0)))
            } else {
                (frac(acc.up), frac(acc.down))
            };
            RegimeSummary {
                regime: i,
                mean: spec.dists[i].mean(),
                occupancy: acc.steps_in_regime as f64 / total_steps as f64,
                completed_sojourns: n,
                mean_sojourn: acc.sojourn.mean(),
                mean_sojourn_stderr: acc.sojourn.stderr(),
                mean_displacement: acc.displacement.mean(),
                mean_displacement_stderr: acc.displacement.stderr(),
                exit_up_fraction: frac(acc.up).map(|p| p.0),
                p_up: p_up.map(|p| p.0),
                p_up_stderr: p_up.map(|p| p.1),
                p_down: p_down.map(|p| p.0),
                p_down_stderr: p_down.map(|p| p.1),
                wald_residual: acc.wald.mean(),
                wald_stderr: acc.wald.stderr(),
            }
        })
        .collect();
    for i in &insufficient {
        warnings.push(format!("regime {i} has no completed sojourn"));
    }

    let (switch_frequencies, switch_frequency_stderr): (Vec<f64>, Vec<f64>) = regimes
        .iter()
        .map(|acc| proportion(acc.sojourn.count, completed))
        .unzip();

    let (reconstructed_speed, reconstructed_stderr) = if insufficient.is_empty() {
        let mean_sojourn: Vec<f64> = per_regime.iter().map(|r| r.mean_sojourn.unwrap()).collect();
        let mean_disp: Vec<f64> = per_regime
            .iter()
            .map(|r| r.mean_displacement.unwrap())
            .collect();
        match theory::speed_formula(&switch_frequencies, &mean_sojourn, &mean_disp) {
            Ok(s) => (Some(s), Some(ratio_stderr(&runs, s))),
            Err(e) => {
                warnings.push(format!("speed reconstruction failed: {e}"));
                (None, None)
            }
        }
    } else {
        (None, None)
    };

    let mut replica_summaries: Vec<ReplicaSummary> = Vec::with_capacity(runs.len());
    for run in runs {
        replica_summaries.push(run.summary);
    }

    SimReport {
        version,
        window: spec.window,
        steps,
        replicas,
        master_seed,
        grid_index,
        est_speed: speeds.mean().unwrap_or(f64::NAN),
        stderr: batches.stderr().unwrap_or(0.0),
        replica_stderr: speeds.stderr().unwrap_or(0.0),
        regime_occupancy: per_regime.iter().map(|r| r.occupancy).collect(),
        switch_frequencies,
        switch_frequency_stderr,
        per_regime,
        reconstructed_speed,
        reconstructed_stderr,
        insufficient_regimes: insufficient,
        replica_summaries,
        warnings,
    }
}

/// Delta-method standard error of the ratio `Σ S / Σ T` over completed sojourns.
fn ratio_stderr(runs: &[ReplicaRun], ratio: f64) -> f64 {
    let mut total_t = 0.0;
    let mut resid = 0.0;
    let mut count = 0usize;
    for run in runs {
        for (t, s) in &run.pairs {
            total_t += t;
            let d = s - ratio * t;
            resid += d * d;
            count += 1;
        }
    }
    if count < 2 || total_t == 0.0 {
        return f64::NAN;
    }
    (resid * count as f64 / (count - 1) as f64).sqrt() / total_t
}

/// Empirical switch frequencies against the detailed-balance distribution
/// built from the empirical transition probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantMeasureCheck {
    pub empirical: Vec<f64>,
    pub empirical_stderr: Vec<f64>,
    pub detailed_balance: Vec<f64>,
    pub detailed_balance_stderr: Vec<f64>,
    pub z_scores: Vec<f64>,
    /// Every `|z| <= 3`.
    pub passed: bool,
}

pub fn check_invariant_measure(report: &SimReport) -> Result<InvariantMeasureCheck> {
    if !report.insufficient_regimes.is_empty() {
        return Err(Error::InsufficientData(format!(
            "regimes {:?} have no completed sojourn",
            report.insufficient_regimes
        )));
    }
    let l = report.per_regime.len() - 1;
    let up: Vec<f64> = (0..l).map(|i| report.per_regime[i].p_up.unwrap()).collect();
    let down: Vec<f64> = (0..l)
        .map(|i| report.per_regime[i + 1].p_down.unwrap())
        .collect();
    let up_se: Vec<f64> = (0..l)
        .map(|i| report.per_regime[i].p_up_stderr.unwrap())
        .collect();
    let down_se: Vec<f64> = (0..l)
        .map(|i| report.per_regime[i + 1].p_down_stderr.unwrap())
        .collect();
    let nu = theory::invariant_distribution(&up, &down)?;

    // first-order error propagation by central differences
    let mut var = vec![0.0; l + 1];
    let mut propagate = |probs: &[f64], ses: &[f64], is_up: bool| -> Result<()> {
        for j in 0..l {
            if ses[j] == 0.0 {
                continue;
            }
            let h = 1e-6 * probs[j].max(1e-3);
            let shifted = |delta: f64| {
                let mut p = probs.to_vec();
                p[j] += delta;
                if is_up {
                    theory::invariant_distribution(&p, &down)
                } else {
                    theory::invariant_distribution(&up, &p)
                }
            };
            let hi = shifted(h)?;
            let lo = shifted(-h.min(probs[j] * 0.5))?;
            let width = h + h.min(probs[j] * 0.5);
            for i in 0..=l {
                let g = (hi[i] - lo[i]) / width;
                var[i] += g * g * ses[j] * ses[j];
            }
        }
        Ok(())
    };
    propagate(&up, &up_se, true)?;
    propagate(&down, &down_se, false)?;

    let db_se: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let z_scores: Vec<f64> = (0..=l)
        .map(|i| {
            let se = (report.switch_frequency_stderr[i].powi(2) + db_se[i].powi(2)).sqrt();
            let d = report.switch_frequencies[i] - nu[i];
            if se > 0.0 {
                d / se
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    Ok(InvariantMeasureCheck {
        empirical: report.switch_frequencies.clone(),
        empirical_stderr: report.switch_frequency_stderr.clone(),
        detailed_balance: nu,
        detailed_balance_stderr: db_se,
        passed: z_scores.iter().all(|z| z.abs() <= 3.0),
        z_scores,
    })
}

/// How many steps to run at each window size in a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepsRule {
    Fixed {
        steps: u64,
    },
    /// `max(floor, factor * round(e^{N * max sojourn exponent}))`, at most `cap`.
    Exponential {
        floor: u64,
        factor: f64,
        cap: u64,
    },
}

impl Default for StepsRule {
    fn default() -> Self {
        StepsRule::Exponential {
            floor: 1_000_000,
            factor: 200.0,
            cap: 100_000_000,
        }
    }
}

impl StepsRule {
    /// Steps for `spec` (at its own window) and whether the cap was binding.
    pub fn steps(&self, spec: &ModelSpec) -> Result<(u64, bool)> {
        match *self {
            StepsRule::Fixed { steps } => Ok((steps, false)),
            StepsRule::Exponential { floor, factor, cap } => {
                let exps = theory::sojourn_exponents(spec)?;
                let max = exps
                    .iter()
                    .filter_map(|e| e.finite())
                    .fold(0.0f64, f64::max);
                let wanted = factor * (spec.window as f64 * max).exp().round();
                let wanted = if wanted.is_finite() && wanted < u64::MAX as f64 {
                    wanted as u64
                } else {
                    u64::MAX
                };
                let steps = wanted.max(floor);
                Ok((steps.min(cap), steps > cap))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub window: usize,
    pub steps: u64,
    pub steps_capped: bool,
    pub est_speed: f64,
    pub stderr: f64,
    pub predicted_speed: f64,
    pub gap: f64,
    pub report: SimReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepVerdict {
    pub final_gap: f64,
    pub final_stderr: f64,
    /// `gap(k+1) <= gap(k) + 3 * sqrt(se(k)^2 + se(k+1)^2)` at every consecutive pair.
    pub non_increasing_within_noise: bool,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub version: Version,
    pub predicted_regime: usize,
    pub predicted_speed: f64,
    pub lambdas: Vec<ExtendedReal>,
    pub rows: Vec<SweepRow>,
    pub verdict: SweepVerdict,
    pub warnings: Vec<String>,
}

/// Estimates the speed at each window size in `n_grid` and compares the gap
/// to the predicted limit.
///
/// Grid point `k`, replica `j` uses stream `(k, j)` of `master_seed`. Regimes
/// without completed sojourns do not abort the sweep; they appear in each
/// row's report and in the sweep warnings.
pub fn sweep_window(
    template: &ModelSpec,
    version: Version,
    n_grid: &[usize],
    steps_rule: StepsRule,
    replicas: u64,
    master_seed: u64,
) -> Result<SweepReport> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(Error::InvalidInput(
            "N grid must be non-empty, positive and strictly increasing".into(),
        ));
    }
    let prediction = theory::predict_limiting_speed(template, DEFAULT_TIE_TOL)?;
    let (Some(regime), Some(predicted)) = (prediction.regime, prediction.speed) else {
        return Err(Error::InvalidModel(format!(
            "exponent maximum is tied between regimes {:?}; no limit to compare against",
            prediction.argmax
        )));
    };
    let lambdas = theory::lambda_exponents(template)?;
    let mut warnings = prediction.warnings;
    let mut rows = Vec::with_capacity(n_grid.len());
    for (k, &n) in n_grid.iter().enumerate() {
        let spec = template.with_window(n);
        let (steps, capped) = steps_rule.steps(&spec)?;
        let steps = steps.max(50 * n as u64);
        if capped {
            warnings.push(format!(
                "N = {n}: steps rule capped at {steps}; few regime switches expected"
            ));
        }
        let report =
            estimate_speed_in_grid(&spec, version, steps, replicas, master_seed, k as u64)?;
        for w in &report.warnings {
            warnings.push(format!("N = {n}: {w}"));
        }
        rows.push(SweepRow {
            window: n,
            steps,
            steps_capped: capped,
            est_speed: report.est_speed,
            stderr: report.stderr,
            predicted_speed: predicted,
            gap: (report.est_speed - predicted).abs(),
            report,
        });
    }
    let non_increasing = rows.windows(2).all(|w| {
        let slack = 3.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        w[1].gap <= w[0].gap + slack
    });
    let last = rows.last().unwrap();
    let verdict = SweepVerdict {
        final_gap: last.gap,
        final_stderr: last.stderr,
        non_increasing_within_noise: non_increasing,
        note: "monotone-trend check over a finite grid; not a convergence guarantee".into(),
    };
    Ok(SweepReport {
        version,
        predicted_regime: regime,
        predicted_speed: predicted,
        lambdas,
        rows,
        verdict,
        warnings,
    })
}

fn check_grid(n_grid: &[usize], samples: u64) -> Result<()> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(Error::InvalidInput(
            "N grid must be non-empty, positive and strictly increasing".into(),
        ));
    }
    if samples == 0 {
        return Err(Error::InvalidInput("samples per N must be positive".into()));
    }
    Ok(())
}

fn check_thresholds(r_lo: ExtendedReal, r_hi: ExtendedReal) -> Result<()> {
    if r_lo >= r_hi || r_lo == ExtendedReal::PosInf || r_hi == ExtendedReal::NegInf {
        return Err(Error::InvalidInput(format!(
            "need r_lo < r_hi, got {r_lo} and {r_hi}"
        )));
    }
    Ok(())
}

fn rate_at(rf: &RateFunction, r: ExtendedReal) -> Result<ExtendedReal> {
    match r {
        ExtendedReal::Finite(x) => rf.evaluate(x),
        _ => Ok(ExtendedReal::PosInf),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCounts {
    #[serde(rename = "N")]
    pub window: usize,
    pub samples: u64,
    pub plus1: u64,
    pub minus1: u64,
    pub minus11: u64,
    pub zero: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockExponentReport {
    /// `I(r_hi)`.
    pub plus1_target: ExtendedReal,
    /// `I(r_lo)`.
    pub minus1_target: ExtendedReal,
    /// `I(r_lo) + I(r_hi)`, an upper bound for the minus11 slope.
    pub minus11_bound: ExtendedReal,
    pub counts: Vec<BlockCounts>,
    pub plus1: SlopeFit,
    pub minus1: SlopeFit,
    /// Fit of the minus11 probabilities; grid points without hits use
    /// `1 / samples` instead, which can only lower the fitted decay.
    pub minus11: Option<SlopeFit>,
    pub minus11_zero_hits: Vec<usize>,
}

/// Samples the block variable at each `N` and fits the exponential decay
/// of each outcome probability.
pub fn fit_block_exponents(
    dist: &IncrementDistribution,
    r_lo: ExtendedReal,
    r_hi: ExtendedReal,
    n_grid: &[usize],
    samples_per_n: u64,
    master_seed: u64,
) -> Result<BlockExponentReport> {
    check_grid(n_grid, samples_per_n)?;
    check_thresholds(r_lo, r_hi)?;
    let rf = RateFunction::new(dist.clone());
    let plus1_target = rate_at(&rf, r_hi)?;
    let minus1_target = rate_at(&rf, r_lo)?;
    let counts: Vec<BlockCounts> = n_grid
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut rng = RandomStream::derive(master_seed, k as u64);
            let mut c = BlockCounts {
                window: n,
                samples: samples_per_n,
                plus1: 0,
                minus1: 0,
                minus11: 0,
                zero: 0,
            };
            for _ in 0..samples_per_n {
                match sample_block_z(dist, r_lo, r_hi, n, &mut rng) {
                    BlockOutcome::Plus1 => c.plus1 += 1,
                    BlockOutcome::Minus1 => c.minus1 += 1,
                    BlockOutcome::Minus11 => c.minus11 += 1,
                    BlockOutcome::Zero => c.zero += 1,
                }
            }
            c
        })
        .collect();
    let points = |hits: fn(&BlockCounts) -> u64| -> Vec<GridPoint> {
        counts
            .iter()
            .map(|c| {
                let (p, se) = proportion(hits(c), c.samples);
                GridPoint {
                    n: c.window,
                    estimate: p,
                    stderr: se,
                }
            })
            .collect()
    };
    let plus1 = SlopeFit::fit(points(|c| c.plus1), LogScale::NegLog)?;
    let minus1 = SlopeFit::fit(points(|c| c.minus1), LogScale::NegLog)?;
    let mut minus11_zero_hits = Vec::new();
    let bounded: Vec<GridPoint> = points(|c| c.minus11)
        .into_iter()
        .map(|mut p| {
            if p.estimate == 0.0 {
                minus11_zero_hits.push(p.n);
                p.estimate = 1.0 / samples_per_n as f64;
            }
            p
        })
        .collect();
    let minus11 = if minus11_zero_hits.len() == counts.len() {
        None
    } else {
        SlopeFit::fit(bounded, LogScale::NegLog).ok()
    };
    Ok(BlockExponentReport {
        plus1_target,
        minus1_target,
        minus11_bound: plus1_target + minus1_target,
        counts,
        plus1,
        minus1,
        minus11,
        minus11_zero_hits,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitRow {
    #[serde(rename = "N")]
    pub window: usize,
    pub samples: u64,
    pub exit_up: u64,
    pub exit_down: u64,
    pub censored: u64,
    pub censored_fraction: f64,
    pub p_down: f64,
    pub p_down_stderr: f64,
    /// Mean of `τ` over uncensored samples.
    pub mean_tau: f64,
    pub mean_tau_stderr: f64,
    /// Mean of `S_{τ+N} - mean * (τ + N)` over uncensored samples.
    pub wald_residual: f64,
    pub wald_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitReport {
    /// `(I(r_lo) - I(r_hi))^+`.
    pub down_target: ExtendedReal,
    /// `min(I(r_lo), I(r_hi))`.
    pub tau_target: ExtendedReal,
    pub cap: u64,
    pub rows: Vec<ExitRow>,
    /// Decay of `P(exit down)`; absent when `r_lo = -inf`.
    pub down_fit: Option<SlopeFit>,
    /// Growth of the mean of `τ`.
    pub tau_fit: SlopeFit,
}

/// Samples exit times and sides at each `N` and fits their exponents.
///
/// Fails with [`Error::ExcessCensoring`] if more than 5% of the samples at
/// any `N` hit `cap`.
pub fn fit_exit_statistics(
    dist: &IncrementDistribution,
    r_lo: ExtendedReal,
    r_hi: ExtendedReal,
    n_grid: &[usize],
    samples_per_n: u64,
    cap: u64,
    master_seed: u64,
) -> Result<ExitReport> {
    check_grid(n_grid, samples_per_n)?;
    check_thresholds(r_lo, r_hi)?;
    if let Some(&n) = n_grid.iter().find(|&&n| cap < n as u64) {
        return Err(Error::InvalidInput(format!("cap {cap} is below N = {n}")));
    }
    let rf = RateFunction::new(dist.clone());
    let at_lo = rate_at(&rf, r_lo)?;
    let at_hi = rate_at(&rf, r_hi)?;
    let down_target = at_lo
        .checked_sub(at_hi)
        .map(ExtendedReal::positive_part)
        .unwrap_or(ExtendedReal::ZERO);
    let tau_target = at_lo.min(at_hi);
    let mean = dist.mean();

    let rows: Vec<ExitRow> = n_grid
        .par_iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut rng = RandomStream::derive(master_seed, k as u64);
            let mut sampler = ExitSampler::new(n);
            let (mut up, mut down, mut censored) = (0u64, 0u64, 0u64);
            let mut tau = Moments::default();
            let mut wald = Moments::default();
            for _ in 0..samples_per_n {
                let e = sampler.sample(dist, r_lo, r_hi, &mut rng, cap);
                match e.exit_direction {
                    Some(Direction::Up) => up += 1,
                    Some(Direction::Down) => down += 1,
                    None => {
                        censored += 1;
                        continue;
                    }
                }
                tau.push(e.tau(n) as f64);
                wald.push(e.displacement - mean * e.steps as f64);
            }
            let (p_down, p_down_stderr) = proportion(down, up + down);
            ExitRow {
                window: n,
                samples: samples_per_n,
                exit_up: up,
                exit_down: down,
                censored,
                censored_fraction: censored as f64 / samples_per_n as f64,
                p_down,
                p_down_stderr,
                mean_tau: tau.mean().unwrap_or(f64::NAN),
                mean_tau_stderr: tau.stderr().unwrap_or(f64::NAN),
                wald_residual: wald.mean().unwrap_or(f64::NAN),
                wald_stderr: wald.stderr().unwrap_or(f64::NAN),
            }
        })
        .collect();
    if let Some(row) = rows.iter().find(|r| r.censored_fraction > CENSORING_LIMIT) {
        return Err(Error::ExcessCensoring {
            window: row.window,
            fraction: row.censored_fraction,
            limit: CENSORING_LIMIT,
        });
    }
    let down_fit = if r_lo == ExtendedReal::NegInf {
        None
    } else {
        let pts = rows
            .iter()
            .map(|r| GridPoint {
                n: r.window,
                estimate: r.p_down,
                stderr: r.p_down_stderr,
            })
            .collect();
        Some(SlopeFit::fit(pts, LogScale::NegLog)?)
    };
    let tau_pts = rows
        .iter()
        .map(|r| GridPoint {
            n: r.window,
            estimate: r.mean_tau,
            stderr: r.mean_tau_stderr,
        })
        .collect();
    let tau_fit = SlopeFit::fit(tau_pts, LogScale::Log)?;
    Ok(ExitReport {
        down_target,
        tau_target,
        cap,
        rows,
        down_fit,
        tau_fit,
    })
}

/// Chunks for parallel persistence sampling; fixed so results do not depend
/// on the thread count.
const PERSISTENCE_CHUNKS: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersistencePoint {
    pub horizon: usize,
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte Carlo `P(S_n / n >= r for all n <= h)` at every `h` in `horizons`,
/// from a single set of paths, so the curve is non-increasing.
pub fn persistence_curve(
    dist: &IncrementDistribution,
    r: f64,
    horizons: &[usize],
    samples: u64,
    master_seed: u64,
) -> Result<Vec<PersistencePoint>> {
    if r.is_nan() || r >= dist.mean() {
        return Err(Error::InvalidInput(format!(
            "r = {r} must lie below the mean {}",
            dist.mean()
        )));
    }
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] == 0 {
        return Err(Error::InvalidInput(
            "horizons must be non-empty, positive and strictly increasing".into(),
        ));
    }
    if samples == 0 {
        return Err(Error::InvalidInput("samples must be positive".into()));
    }
    let max_h = *horizons.last().unwrap();
    let survivors: Vec<Vec<u64>> = (0..PERSISTENCE_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let share = samples / PERSISTENCE_CHUNKS + u64::from(c < samples % PERSISTENCE_CHUNKS);
            let mut rng = RandomStream::derive(master_seed, c);
            let mut alive = vec![0u64; horizons.len()];
            for _ in 0..share {
                let mut s = 0.0;
                let mut survived = max_h;
                for n in 1..=max_h {
                    s += dist.sample(&mut rng);
                    if s < r * n as f64 {
                        survived = n - 1;
                        break;
                    }
                }
                for (a, &h) in alive.iter_mut().zip(horizons) {
                    *a += u64::from(survived >= h);
                }
            }
            alive
        })
        .collect();
    Ok(horizons
        .iter()
        .enumerate()
        .map(|(j, &h)| {
            let hits = survivors.iter().map(|a| a[j]).sum();
            let (estimate, stderr) = proportion(hits, samples);
            PersistencePoint {
                horizon: h,
                estimate,
                stderr,
            }
        })
        .collect())
}

/// Upper-bound estimate of `P(S_n / n >= r for all n)` truncated at `horizon`.
pub fn estimate_persistence_constant(
    dist: &IncrementDistribution,
    r: f64,
    horizon: usize,
    samples: u64,
    master_seed: u64,
) -> Result<f64> {
    Ok(persistence_curve(dist, r, &[horizon], samples, master_seed)?[0].estimate)
}

/// `P(X >= r)` for one increment; the exact value of the horizon-1 persistence event.
pub fn single_step_persistence(dist: &IncrementDistribution, r: f64) -> f64 {
    dist.tail_prob(r, Side::Ge)
}
