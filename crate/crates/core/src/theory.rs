//! Model definition, assumption checks and every closed-form prediction:
//! the `Λ_i` exponents and limiting speed, the exponential orders of the
//! regime-chain transition probabilities and expected sojourn lengths, the
//! birth-death invariant distribution and the renewal speed formula.

use serde::{Deserialize, Serialize};

use crate::distributions::{IncrementDistribution, Side};
use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::ratefn::RateFunction;

pub const DEFAULT_TIE_TOL: f64 = 1e-9;

/// Increment laws `P_0..P_l`, thresholds `r_1..r_l`, history window `N` and
/// initial regime `i_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub dists: Vec<IncrementDistribution>,
    pub thresholds: Vec<f64>,
    pub window: usize,
    pub initial_regime: usize,
}

impl ModelSpec {
    pub fn new(
        dists: Vec<IncrementDistribution>,
        thresholds: Vec<f64>,
        window: usize,
        initial_regime: usize,
    ) -> Result<Self> {
        let spec = Self {
            dists,
            thresholds,
            window,
            initial_regime,
        };
        spec.check_structure()?;
        Ok(spec)
    }

    /// Shape checks that every computation relies on; assumption checks are
    /// separate (see [`validate`]).
    pub fn check_structure(&self) -> Result<()> {
        let l = self.thresholds.len();
        if l == 0 {
            return Err(Error::InvalidModel("need at least one threshold".into()));
        }
        if self.dists.len() != l + 1 {
            return Err(Error::InvalidModel(format!(
                "{} thresholds need {} distributions, got {}",
                l,
                l + 1,
                self.dists.len()
            )));
        }
        if self.window == 0 {
            return Err(Error::InvalidModel(
                "history window must be at least 1".into(),
            ));
        }
        if self.initial_regime > l {
            return Err(Error::InvalidModel(format!(
                "initial regime {} outside 0..={l}",
                self.initial_regime
            )));
        }
        if let Some(r) = self.thresholds.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidModel(format!("threshold {r} is not finite")));
        }
        Ok(())
    }

    /// Number of thresholds `l`; regimes are `0..=l`.
    pub fn l(&self) -> usize {
        self.thresholds.len()
    }

    pub fn regimes(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn with_window(&self, window: usize) -> Self {
        Self {
            window,
            ..self.clone()
        }
    }

    /// Lower threshold `r_i` of regime `i`; `-inf` for regime 0.
    #[inline]
    pub fn lower(&self, i: usize) -> ExtendedReal {
        if i == 0 {
            ExtendedReal::NegInf
        } else {
            ExtendedReal::Finite(self.thresholds[i - 1])
        }
    }

    /// Upper threshold `r_{i+1}` of regime `i`; `+inf` for regime `l`.
    #[inline]
    pub fn upper(&self, i: usize) -> ExtendedReal {
        if i == self.l() {
            ExtendedReal::PosInf
        } else {
            ExtendedReal::Finite(self.thresholds[i])
        }
    }

    pub fn means(&self) -> Vec<f64> {
        self.dists.iter().map(IncrementDistribution::mean).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub passed: bool,
    pub violations: Vec<Violation>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl AssumptionCheck {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            passed: violations.is_empty(),
            violations,
            note: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    /// Ordering of means and thresholds.
    pub assumption_a: AssumptionCheck,
    /// Positive mass beyond each threshold a regime must be able to cross.
    pub assumption_b: AssumptionCheck,
    /// Two-sided exponential moments.
    pub assumption_c: AssumptionCheck,
}

pub fn validate(spec: &ModelSpec) -> ValidationReport {
    let l = spec.l();
    let mu = spec.means();
    let r = &spec.thresholds;

    let mut a = Vec::new();
    for i in 0..l {
        if mu[i] >= mu[i + 1] {
            a.push(Violation {
                index: i,
                message: format!(
                    "means not strictly increasing: mu_{i} = {} >= mu_{} = {}",
                    mu[i],
                    i + 1,
                    mu[i + 1]
                ),
            });
        }
    }
    if mu[0] >= r[0] {
        a.push(Violation {
            index: 0,
            message: format!("need mu_0 < r_1, got mu_0 = {} and r_1 = {}", mu[0], r[0]),
        });
    }
    for i in 1..l {
        if !(r[i - 1] < mu[i] && mu[i] < r[i]) {
            a.push(Violation {
                index: i,
                message: format!(
                    "need r_{i} < mu_{i} < r_{}, got {} < {} < {}",
                    i + 1,
                    r[i - 1],
                    mu[i],
                    r[i]
                ),
            });
        }
    }
    if r[l - 1] >= mu[l] {
        a.push(Violation {
            index: l,
            message: format!(
                "need r_{l} < mu_{l}, got r_{l} = {} and mu_{l} = {}",
                r[l - 1],
                mu[l]
            ),
        });
    }

    let mut b = Vec::new();
    for i in 0..=l {
        if i > 0 {
            let p = spec.dists[i].tail_prob(r[i - 1], Side::Lt);
            if p <= 0.0 {
                b.push(Violation {
                    index: i,
                    message: format!("P_{i}((-inf, r_{i})) = 0"),
                });
            }
        }
        if i < l {
            let p = spec.dists[i].tail_prob(r[i], Side::Ge);
            if p <= 0.0 {
                b.push(Violation {
                    index: i,
                    message: format!("P_{i}([r_{}, inf)) = 0", i + 1),
                });
            }
        }
    }

    let assumption_a = AssumptionCheck::from_violations(a);
    let assumption_b = AssumptionCheck::from_violations(b);
    let assumption_c = AssumptionCheck {
        passed: true,
        violations: Vec::new(),
        note: Some(
            "satisfied by construction: every built-in law has a finite moment generating function"
                .into(),
        ),
    };
    ValidationReport {
        passed: assumption_a.passed && assumption_b.passed,
        assumption_a,
        assumption_b,
        assumption_c,
    }
}

fn require_valid(spec: &ModelSpec) -> Result<()> {
    spec.check_structure()?;
    let report = validate(spec);
    if report.passed {
        Ok(())
    } else {
        let msgs: Vec<String> = report
            .assumption_a
            .violations
            .iter()
            .chain(&report.assumption_b.violations)
            .map(|v| v.message.clone())
            .collect();
        Err(Error::InvalidModel(msgs.join("; ")))
    }
}

/// Rate function of regime `i` at its own lower and upper thresholds,
/// `(I_i(r_i), I_i(r_{i+1}))`; `None` at the `±inf` sentinels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdRates {
    pub at_lower: Option<ExtendedReal>,
    pub at_upper: Option<ExtendedReal>,
}

pub fn threshold_rates(spec: &ModelSpec) -> Result<Vec<ThresholdRates>> {
    spec.check_structure()?;
    (0..spec.regimes())
        .map(|i| {
            let rf = RateFunction::new(spec.dists[i].clone());
            let eval = |r: ExtendedReal| r.finite().map(|x| rf.evaluate(x)).transpose();
            Ok(ThresholdRates {
                at_lower: eval(spec.lower(i))?,
                at_upper: eval(spec.upper(i))?,
            })
        })
        .collect()
}

fn undefined(what: &str) -> Error {
    Error::InvalidModel(format!("{what} is undefined (inf - inf)"))
}

/// `Λ_0 = I_0(r_1)`, `Λ_i = I_i(r_{i+1}) + Σ_{k=1}^{i} (I_k(r_k) - I_k(r_{k+1}))`
/// for interior `i`, and `Λ_l = I_l(r_l) + Σ_{k=1}^{l-1} (I_k(r_k) - I_k(r_{k+1}))`.
pub fn lambda_exponents(spec: &ModelSpec) -> Result<Vec<ExtendedReal>> {
    require_valid(spec)?;
    lambdas_from_rates(&threshold_rates(spec)?)
}

fn lambdas_from_rates(rates: &[ThresholdRates]) -> Result<Vec<ExtendedReal>> {
    let l = rates.len() - 1;
    let mut out = Vec::with_capacity(l + 1);
    out.push(rates[0].at_upper.expect("regime 0 has an upper threshold"));
    let mut acc = ExtendedReal::ZERO;
    for (k, rk) in rates.iter().enumerate().take(l).skip(1) {
        let d = rk
            .at_lower
            .unwrap()
            .checked_sub(rk.at_upper.unwrap())
            .ok_or_else(|| undefined(&format!("I_{k}(r_{k}) - I_{k}(r_{})", k + 1)))?;
        acc = acc
            .checked_add(d)
            .ok_or_else(|| undefined("Λ partial sum"))?;
        out.push(
            rk.at_upper
                .unwrap()
                .checked_add(acc)
                .ok_or_else(|| undefined(&format!("Λ_{k}")))?,
        );
    }
    out.push(
        rates[l]
            .at_lower
            .unwrap()
            .checked_add(acc)
            .ok_or_else(|| undefined(&format!("Λ_{l}")))?,
    );
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedPrediction {
    /// Regimes whose `Λ` is within the tie tolerance of the maximum.
    pub argmax: Vec<usize>,
    /// `i_0`, present only when the maximum is unique.
    pub regime: Option<usize>,
    /// `μ_{i_0}`, present only when the maximum is unique.
    pub speed: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn argmax_set(lambdas: &[ExtendedReal], tie_tol: f64) -> Vec<usize> {
    let max = lambdas
        .iter()
        .copied()
        .fold(ExtendedReal::NegInf, ExtendedReal::max);
    lambdas
        .iter()
        .enumerate()
        .filter(|(_, v)| match (max, **v) {
            (ExtendedReal::Finite(m), ExtendedReal::Finite(x)) => m - x <= tie_tol,
            (m, x) => m == x,
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn predict_limiting_speed(spec: &ModelSpec, tie_tol: f64) -> Result<SpeedPrediction> {
    let lambdas = lambda_exponents(spec)?;
    Ok(prediction_from_lambdas(spec, &lambdas, tie_tol))
}

fn prediction_from_lambdas(
    spec: &ModelSpec,
    lambdas: &[ExtendedReal],
    tie_tol: f64,
) -> SpeedPrediction {
    let argmax = argmax_set(lambdas, tie_tol);
    let mut warnings = Vec::new();
    if lambdas.iter().any(|v| !v.is_finite()) {
        warnings.push("an exponent is infinite; asymptotic estimates are unreliable".into());
    }
    if argmax.len() > 1 {
        warnings.push(format!(
            "maximum of the exponents is attained by regimes {argmax:?}; no limiting speed is predicted"
        ));
        return SpeedPrediction {
            argmax,
            regime: None,
            speed: None,
            warnings,
        };
    }
    let i0 = argmax[0];
    SpeedPrediction {
        argmax,
        regime: Some(i0),
        speed: Some(spec.dists[i0].mean()),
        warnings,
    }
}

/// Exponential orders of `p_{i,i+1}` and `p_{i,i-1}`; `None` where the move is impossible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionExponents {
    pub up: Option<ExtendedReal>,
    pub down: Option<ExtendedReal>,
}

pub fn transition_exponents(spec: &ModelSpec) -> Result<Vec<TransitionExponents>> {
    require_valid(spec)?;
    transitions_from_rates(&threshold_rates(spec)?)
}

fn transitions_from_rates(rates: &[ThresholdRates]) -> Result<Vec<TransitionExponents>> {
    let l = rates.len() - 1;
    rates
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if i == 0 {
                return Ok(TransitionExponents {
                    up: Some(ExtendedReal::ZERO),
                    down: None,
                });
            }
            if i == l {
                return Ok(TransitionExponents {
                    up: None,
                    down: Some(ExtendedReal::ZERO),
                });
            }
            let lo = t.at_lower.unwrap();
            let hi = t.at_upper.unwrap();
            let up = hi
                .checked_sub(lo)
                .ok_or_else(|| undefined(&format!("up exponent of regime {i}")))?
                .positive_part();
            let down = lo
                .checked_sub(hi)
                .ok_or_else(|| undefined(&format!("down exponent of regime {i}")))?
                .positive_part();
            Ok(TransitionExponents {
                up: Some(up),
                down: Some(down),
            })
        })
        .collect()
}

/// Exponential order of the expected exit time from each regime:
/// `min(I_i(r_i), I_i(r_{i+1}))` inside, one-sided at the ends.
pub fn sojourn_exponents(spec: &ModelSpec) -> Result<Vec<ExtendedReal>> {
    require_valid(spec)?;
    Ok(sojourns_from_rates(&threshold_rates(spec)?))
}

fn sojourns_from_rates(rates: &[ThresholdRates]) -> Vec<ExtendedReal> {
    rates
        .iter()
        .map(|t| match (t.at_lower, t.at_upper) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("every regime has at least one finite threshold"),
        })
        .collect()
}

/// Exponential order of the invariant distribution of the regime chain,
/// relative to regime 0: `Σ_{k=1}^{i} (down(k) - up(k-1))`.
pub fn nu_exponents(transitions: &[TransitionExponents]) -> Result<Vec<ExtendedReal>> {
    let mut out = vec![ExtendedReal::ZERO];
    let mut acc = ExtendedReal::ZERO;
    for k in 1..transitions.len() {
        let step = transitions[k]
            .down
            .unwrap_or(ExtendedReal::ZERO)
            .checked_sub(transitions[k - 1].up.unwrap_or(ExtendedReal::ZERO))
            .ok_or_else(|| undefined("invariant-measure exponent"))?;
        acc = acc
            .checked_add(step)
            .ok_or_else(|| undefined("invariant-measure exponent"))?;
        out.push(acc);
    }
    Ok(out)
}

/// Stationary distribution of a birth-death chain on `0..=l` from its
/// detailed-balance equations `ν(i) up[i] = ν(i+1) down[i]`.
///
/// `up[i]` is `p_{i,i+1}` for `i = 0..l` and `down[i]` is `p_{i+1,i}`. Products
/// are accumulated in log space.
pub fn invariant_distribution(up: &[f64], down: &[f64]) -> Result<Vec<f64>> {
    if up.len() != down.len() || up.is_empty() {
        return Err(Error::InvalidChain(format!(
            "need equally many up and down probabilities (got {} and {})",
            up.len(),
            down.len()
        )));
    }
    for (name, probs) in [("up", up), ("down", down)] {
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(**p > 0.0 && p.is_finite()))
        {
            return Err(Error::InvalidChain(format!(
                "{name} probability #{i} must be positive, got {p}"
            )));
        }
    }
    let mut logs = Vec::with_capacity(up.len() + 1);
    logs.push(0.0);
    let mut acc = 0.0;
    for (u, d) in up.iter().zip(down) {
        acc += u.ln() - d.ln();
        logs.push(acc);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Renewal-reward speed `Σ ν(i) E S^{(i)} / Σ ν(i) E T^{(i)}`, where `E T^{(i)}` is the
/// mean number of steps of a sojourn in regime `i` and `E S^{(i)}` its mean displacement.
pub fn speed_formula(nu: &[f64], mean_sojourn: &[f64], mean_displacement: &[f64]) -> Result<f64> {
    if nu.len() != mean_sojourn.len() || nu.len() != mean_displacement.len() {
        return Err(Error::InvalidInput(
            "speed formula inputs must have the same length".into(),
        ));
    }
    let den: f64 = nu.iter().zip(mean_sojourn).map(|(v, t)| v * t).sum();
    if den.is_nan() || den <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "total weighted sojourn must be positive, got {den}"
        )));
    }
    let num: f64 = nu.iter().zip(mean_displacement).map(|(v, s)| v * s).sum();
    Ok(num / den)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerRegime {
    pub up_exp: Vec<Option<ExtendedReal>>,
    pub down_exp: Vec<Option<ExtendedReal>>,
    pub sojourn_exp: Vec<ExtendedReal>,
    pub nu_exp: Vec<ExtendedReal>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub lambdas: Vec<ExtendedReal>,
    pub argmax: Vec<usize>,
    pub predicted_regime: Option<usize>,
    pub predicted_speed: Option<f64>,
    pub means: Vec<f64>,
    pub per_regime: PerRegime,
    pub warnings: Vec<String>,
}

pub fn theory_report(spec: &ModelSpec, tie_tol: f64) -> Result<TheoryReport> {
    require_valid(spec)?;
    let rates = threshold_rates(spec)?;
    let lambdas = lambdas_from_rates(&rates)?;
    let prediction = prediction_from_lambdas(spec, &lambdas, tie_tol);
    let transitions = transitions_from_rates(&rates)?;
    let nu = nu_exponents(&transitions)?;
    Ok(TheoryReport {
        lambdas,
        argmax: prediction.argmax,
        predicted_regime: prediction.regime,
        predicted_speed: prediction.speed,
        means: spec.means(),
        per_regime: PerRegime {
            up_exp: transitions.iter().map(|t| t.up).collect(),
            down_exp: transitions.iter().map(|t| t.down).collect(),
            sojourn_exp: sojourns_from_rates(&rates),
            nu_exp: nu,
        },
        warnings: prediction.warnings,
    })
}
