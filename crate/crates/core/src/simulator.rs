//! Exact engines for the delayed and instantaneous walks, and samplers for
//! the single-regime building blocks (block variables and exit times).
//!
//! At every step from `N + 1` on, the regime decision is made first from the
//! average of the last `N` increments, and the increment is then drawn from
//! the law of the (possibly new) regime. The delayed walk only applies the
//! rule once the current regime has been used `N` consecutive times.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{Direction, IncrementDistribution};
use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::theory::ModelSpec;

/// Rolling window sums are recomputed from scratch this often.
const RESUM_INTERVAL: u64 = 1 << 20;

/// Ratio between consecutive trace checkpoints.
const CHECKPOINT_RATIO: f64 = 1.189_207_115; // 2^(1/4)

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Version {
    Delayed,
    Instantaneous,
}

/// Fixed-capacity ring of the last `N` increments with a rolling sum.
#[derive(Clone, Debug, PartialEq)]
struct Window {
    buf: Vec<f64>,
    head: usize,
    sum: f64,
    since_resum: u64,
}

impl Window {
    fn with_capacity(n: usize) -> Self {
        Self {
            buf: Vec::with_capacity(n),
            head: 0,
            sum: 0.0,
            since_resum: 0,
        }
    }

    #[inline]
    fn push(&mut self, x: f64) {
        let cap = self.buf.capacity();
        if self.buf.len() < cap {
            self.buf.push(x);
            self.sum += x;
        } else {
            let old = std::mem::replace(&mut self.buf[self.head], x);
            self.head += 1;
            if self.head == cap {
                self.head = 0;
            }
            self.sum += x - old;
        }
        self.since_resum += 1;
        if self.since_resum >= RESUM_INTERVAL {
            self.resum();
        }
    }

    fn resum(&mut self) {
        self.sum = self.buf.iter().sum();
        self.since_resum = 0;
    }

    fn exact_sum(&self) -> f64 {
        self.buf.iter().sum()
    }

    fn clear(&mut self) {
        self.buf.clear();
        self.head = 0;
        self.sum = 0.0;
        self.since_resum = 0;
    }
}

/// Live state of a walk: `X_n`, `n`, the current regime, how many times in a
/// row that regime has been used, and the last `N` increments.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkState {
    pub position: f64,
    pub time: u64,
    pub regime: usize,
    pub consecutive_uses: u64,
    window: Window,
}

impl WalkState {
    /// Draws the first `N` increments from the initial regime's law.
    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Self {
        Self::init_with(spec, |i| spec.dists[i].sample(rng))
    }

    /// As [`WalkState::init`] with increments supplied by `draw(regime)`.
    pub fn init_with(spec: &ModelSpec, mut draw: impl FnMut(usize) -> f64) -> Self {
        let n = spec.window;
        let i0 = spec.initial_regime;
        let mut window = Window::with_capacity(n);
        let mut position = 0.0;
        for _ in 0..n {
            let x = draw(i0);
            position += x;
            window.push(x);
        }
        Self {
            position,
            time: n as u64,
            regime: i0,
            consecutive_uses: n as u64,
            window,
        }
    }

    pub fn window_sum(&self) -> f64 {
        self.window.sum
    }

    pub fn window_avg(&self) -> f64 {
        self.window.sum / self.window.buf.len() as f64
    }

    /// Sum of the ring buffer computed from scratch.
    pub fn recomputed_window_sum(&self) -> f64 {
        self.window.exact_sum()
    }

    /// Applies the switching rule (unless the delay forbids it) and returns the
    /// direction of a switch, if any. Does not draw.
    #[inline]
    fn decide(&mut self, spec: &ModelSpec, version: Version) -> Option<Direction> {
        if version == Version::Delayed && self.consecutive_uses < spec.window as u64 {
            return None;
        }
        let avg = self.window_avg();
        let i = self.regime;
        let moved = if spec.lower(i).gt_f64(avg) {
            self.regime = i - 1;
            Some(Direction::Down)
        } else if spec.upper(i).le_f64(avg) {
            self.regime = i + 1;
            Some(Direction::Up)
        } else {
            None
        };
        if moved.is_some() {
            self.consecutive_uses = 0;
        }
        moved
    }

    #[inline]
    fn apply(&mut self, x: f64) {
        self.position += x;
        self.time += 1;
        self.consecutive_uses += 1;
        self.window.push(x);
    }

    /// One step with the increment supplied by `draw(regime)`; returns the
    /// direction of the regime switch made before the draw, if any.
    #[inline]
    pub fn step_with(
        &mut self,
        spec: &ModelSpec,
        version: Version,
        draw: impl FnOnce(usize) -> f64,
    ) -> Option<Direction> {
        let moved = self.decide(spec, version);
        let x = draw(self.regime);
        self.apply(x);
        moved
    }

    pub fn step_delayed<R: Rng + ?Sized>(
        &mut self,
        spec: &ModelSpec,
        rng: &mut R,
    ) -> Option<Direction> {
        self.step_with(spec, Version::Delayed, |i| spec.dists[i].sample(rng))
    }

    pub fn step_instantaneous<R: Rng + ?Sized>(
        &mut self,
        spec: &ModelSpec,
        rng: &mut R,
    ) -> Option<Direction> {
        self.step_with(spec, Version::Instantaneous, |i| spec.dists[i].sample(rng))
    }
}

/// One maximal run of steps in a single regime.
///
/// `exit_direction` is `None` only for the final, censored sojourn of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SojournRecord {
    pub regime: usize,
    pub steps: u64,
    pub displacement: f64,
    pub exit_direction: Option<Direction>,
    pub censored: bool,
}

/// Regimes visited in order, each with its sojourn.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegimePath {
    pub regimes: Vec<usize>,
    pub sojourns: Vec<SojournRecord>,
}

impl RegimePath {
    pub fn completed(&self) -> impl Iterator<Item = &SojournRecord> {
        self.sojourns.iter().filter(|s| !s.censored)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    pub position: f64,
    pub regime: usize,
    pub window_avg: f64,
}

impl Checkpoint {
    pub fn speed(&self) -> f64 {
        self.position / self.n as f64
    }
}

/// A walk that also tracks where the current sojourn started.
#[derive(Clone, Debug)]
pub struct Walker<'a> {
    spec: &'a ModelSpec,
    version: Version,
    state: WalkState,
    entry_time: u64,
    entry_position: f64,
}

impl<'a> Walker<'a> {
    pub fn new<R: Rng + ?Sized>(spec: &'a ModelSpec, version: Version, rng: &mut R) -> Self {
        Self::from_state(spec, version, WalkState::init(spec, rng))
    }

    pub fn from_state(spec: &'a ModelSpec, version: Version, state: WalkState) -> Self {
        Self {
            spec,
            version,
            state,
            entry_time: 0,
            entry_position: 0.0,
        }
    }

    pub fn state(&self) -> &WalkState {
        &self.state
    }

    pub fn version(&self) -> Version {
        self.version
    }

    /// One step; returns the sojourn that the step's regime decision closed.
    #[inline]
    pub fn step_with(&mut self, draw: impl FnOnce(usize) -> f64) -> Option<SojournRecord> {
        let before = self.state.regime;
        let t = self.state.time;
        let x_before = self.state.position;
        let moved = self.state.step_with(self.spec, self.version, draw);
        moved.map(|dir| {
            let rec = SojournRecord {
                regime: before,
                steps: t - self.entry_time,
                displacement: x_before - self.entry_position,
                exit_direction: Some(dir),
                censored: false,
            };
            self.entry_time = t;
            self.entry_position = x_before;
            rec
        })
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<SojournRecord> {
        let spec = self.spec;
        self.step_with(|i| spec.dists[i].sample(rng))
    }

    /// The sojourn in progress, marked censored.
    pub fn open_sojourn(&self) -> SojournRecord {
        SojournRecord {
            regime: self.state.regime,
            steps: self.state.time - self.entry_time,
            displacement: self.state.position - self.entry_position,
            exit_direction: None,
            censored: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub state: WalkState,
    pub path: RegimePath,
    /// `X_n / n` trace at geometrically spaced `n`, ending at the final step.
    pub checkpoints: Vec<Checkpoint>,
}

/// Runs a walk until `steps` increments have been drawn in total (the first
/// `N` of them during initialization).
pub fn run<R: Rng + ?Sized>(
    spec: &ModelSpec,
    version: Version,
    steps: u64,
    rng: &mut R,
) -> Result<RunOutput> {
    if steps == 0 {
        return Err(Error::InvalidInput("steps must be at least 1".into()));
    }
    spec.check_structure()?;
    let mut walker = Walker::new(spec, version, rng);
    let mut path = RegimePath {
        regimes: vec![spec.initial_regime],
        sojourns: Vec::new(),
    };
    let checkpoint = |s: &WalkState| Checkpoint {
        n: s.time,
        position: s.position,
        regime: s.regime,
        window_avg: s.window_avg(),
    };
    let mut checkpoints = vec![checkpoint(walker.state())];
    let mut next_cp = walker.state().time as f64 * CHECKPOINT_RATIO;
    while walker.state().time < steps {
        if let Some(rec) = walker.step(rng) {
            path.sojourns.push(rec);
            path.regimes.push(walker.state().regime);
        }
        if walker.state().time as f64 >= next_cp {
            checkpoints.push(checkpoint(walker.state()));
            next_cp = (next_cp * CHECKPOINT_RATIO).max(walker.state().time as f64 + 1.0);
        }
    }
    if checkpoints.last().map(|c| c.n) != Some(walker.state().time) {
        checkpoints.push(checkpoint(walker.state()));
    }
    path.sojourns.push(walker.open_sojourn());
    Ok(RunOutput {
        state: walker.state,
        path,
        checkpoints,
    })
}

/// Classification of one block of `N` consecutive length-`N` windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockOutcome {
    /// Some window reached the upper threshold, none fell below the lower.
    Plus1,
    /// Some window fell below the lower threshold, none reached the upper.
    Minus1,
    /// Both happened.
    Minus11,
    /// Every window stayed in `[r_lo, r_hi)`.
    Zero,
}

/// Simulates `2N - 1` increments and classifies the `N` window means
/// `S_{j,j+N} / N`, `j = 0..N-1`.
pub fn sample_block_z<R: Rng + ?Sized>(
    dist: &IncrementDistribution,
    r_lo: ExtendedReal,
    r_hi: ExtendedReal,
    n: usize,
    rng: &mut R,
) -> BlockOutcome {
    debug_assert!(n >= 1 && r_lo < r_hi);
    let mut xs = Vec::with_capacity(2 * n - 1);
    let mut sum = 0.0;
    for _ in 0..n {
        let x = dist.sample(rng);
        sum += x;
        xs.push(x);
    }
    let nf = n as f64;
    let mut hit_hi = r_hi.le_f64(sum / nf);
    let mut hit_lo = r_lo.gt_f64(sum / nf);
    for j in 1..n {
        let x = dist.sample(rng);
        sum += x - xs[j - 1];
        xs.push(x);
        let m = sum / nf;
        hit_hi |= r_hi.le_f64(m);
        hit_lo |= r_lo.gt_f64(m);
    }
    match (hit_hi, hit_lo) {
        (true, false) => BlockOutcome::Plus1,
        (false, true) => BlockOutcome::Minus1,
        (true, true) => BlockOutcome::Minus11,
        (false, false) => BlockOutcome::Zero,
    }
}

/// Outcome of a fresh single-regime walk run until its window mean leaves
/// `[r_lo, r_hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    /// `τ + N`.
    pub steps: u64,
    /// `S_{τ+N}`.
    pub displacement: f64,
    /// `None` when the cap was reached first.
    pub exit_direction: Option<Direction>,
    pub censored: bool,
}

impl ExitSample {
    /// `τ`, the first window start index whose mean left the interval.
    pub fn tau(&self, n: usize) -> u64 {
        self.steps - n as u64
    }
}

/// Samples `τ = inf{n >= 0 : S_{n,n+N} / N ∉ [r_lo, r_hi)}` for a walk with law `dist`.
///
/// If `τ + N` would exceed `cap`, the sample is returned censored with `cap` steps.
pub fn sample_exit<R: Rng + ?Sized>(
    dist: &IncrementDistribution,
    r_lo: ExtendedReal,
    r_hi: ExtendedReal,
    n: usize,
    rng: &mut R,
    cap: u64,
) -> ExitSample {
    let mut window = Window::with_capacity(n);
    sample_exit_in(dist, r_lo, r_hi, n, rng, cap, &mut window)
}

fn sample_exit_in<R: Rng + ?Sized>(
    dist: &IncrementDistribution,
    r_lo: ExtendedReal,
    r_hi: ExtendedReal,
    n: usize,
    rng: &mut R,
    cap: u64,
    window: &mut Window,
) -> ExitSample {
    debug_assert!(cap >= n as u64);
    window.clear();
    let mut position = 0.0;
    for _ in 0..n {
        let x = dist.sample(rng);
        position += x;
        window.push(x);
    }
    let nf = n as f64;
    let mut steps = n as u64;
    loop {
        let m = window.sum / nf;
        let exit = if r_lo.gt_f64(m) {
            Some(Direction::Down)
        } else if r_hi.le_f64(m) {
            Some(Direction::Up)
        } else {
            None
        };
        if exit.is_some() {
            return ExitSample {
                steps,
                displacement: position,
                exit_direction: exit,
                censored: false,
            };
        }
        if steps >= cap {
            return ExitSample {
                steps,
                displacement: position,
                exit_direction: None,
                censored: true,
            };
        }
        let x = dist.sample(rng);
        position += x;
        window.push(x);
        steps += 1;
    }
}

/// Reusable scratch space for repeated exit sampling.
#[derive(Clone, Debug)]
pub struct ExitSampler {
    window: Window,
}

impl ExitSampler {
    pub fn new(n: usize) -> Self {
        Self {
            window: Window::with_capacity(n),
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        dist: &IncrementDistribution,
        r_lo: ExtendedReal,
        r_hi: ExtendedReal,
        rng: &mut R,
        cap: u64,
    ) -> ExitSample {
        let n = self.window.buf.capacity();
        sample_exit_in(dist, r_lo, r_hi, n, rng, cap, &mut self.window)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use approx::assert_relative_eq;

    fn gaussian_l1(n: usize) -> ModelSpec {
        ModelSpec::new(
            vec![
                IncrementDistribution::gaussian(0.0, 1.0).unwrap(),
                IncrementDistribution::gaussian(1.0, 1.0).unwrap(),
            ],
            vec![0.4],
            n,
            0,
        )
        .unwrap()
    }

    fn point_masses(n: usize) -> ModelSpec {
        // means 0.5 and 1.0 lie on the same side of the threshold, so the walk
        // never leaves regime 0; weights keep Assumption B satisfiable elsewhere
        ModelSpec::new(
            vec![
                IncrementDistribution::finite_discrete(vec![1.0], vec![1.0]).unwrap(),
                IncrementDistribution::finite_discrete(vec![2.0], vec![1.0]).unwrap(),
            ],
            vec![5.0],
            n,
            0,
        )
        .unwrap()
    }

    /// Literal definition: regime at step n depends on the regimes at n-1 and
    /// n-N and on the mean of increments n-N..n-1 (1-based).
    fn oracle_regimes(spec: &ModelSpec, version: Version, xs: &[f64]) -> Vec<usize> {
        let n = spec.window;
        let mut prefix = vec![0.0];
        for x in xs {
            prefix.push(prefix.last().unwrap() + x);
        }
        let mut reg = vec![usize::MAX; xs.len() + 1];
        reg[1..=n.min(xs.len())].fill(spec.initial_regime);
        for t in n + 1..=xs.len() {
            let prev = reg[t - 1];
            if version == Version::Delayed && reg[t - n] != prev {
                reg[t] = prev;
                continue;
            }
            let avg = (prefix[t - 1] - prefix[t - 1 - n]) / n as f64;
            reg[t] = if prev > 0 && avg < spec.thresholds[prev - 1] {
                prev - 1
            } else if prev < spec.l() && avg >= spec.thresholds[prev] {
                prev + 1
            } else {
                prev
            };
        }
        reg[1..].to_vec()
    }

    fn simulated_regimes(spec: &ModelSpec, version: Version, xs: &[f64]) -> Vec<usize> {
        let mut used = Vec::with_capacity(xs.len());
        let mut it = xs.iter();
        let mut state = WalkState::init_with(spec, |i| {
            used.push(i);
            *it.next().unwrap()
        });
        while (state.time as usize) < xs.len() {
            state.step_with(spec, version, |i| {
                used.push(i);
                *it.next().unwrap()
            });
        }
        used
    }

    #[test]
    fn brute_force_equivalence_small_rademacher() {
        let horizon = 12;
        for (p0, p1, r) in [(0.3, 0.7, 0.0), (0.3, 0.7, 0.5), (0.2, 0.9, 0.25)] {
            for n in 2..=4 {
                for i0 in 0..=1 {
                    let spec = ModelSpec::new(
                        vec![
                            IncrementDistribution::rademacher(p0).unwrap(),
                            IncrementDistribution::rademacher(p1).unwrap(),
                        ],
                        vec![r],
                        n,
                        i0,
                    )
                    .unwrap();
                    for version in [Version::Delayed, Version::Instantaneous] {
                        for bits in 0u32..(1 << horizon) {
                            let xs: Vec<f64> = (0..horizon)
                                .map(|k| if bits >> k & 1 == 1 { 1.0 } else { -1.0 })
                                .collect();
                            assert_eq!(
                                simulated_regimes(&spec, version, &xs),
                                oracle_regimes(&spec, version, &xs),
                                "{version:?} N={n} r={r} i0={i0} bits={bits:b}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn init_point_mass() {
        let spec = point_masses(5);
        let mut rng = RandomStream::new(0);
        let s = WalkState::init(&spec, &mut rng);
        assert_eq!(s.position, 5.0);
        assert_eq!(s.window_sum(), 5.0);
        assert_eq!(s.time, 5);
        assert_eq!(s.consecutive_uses, 5);
    }

    #[test]
    fn delayed_switches_only_after_n_uses() {
        let spec = gaussian_l1(3);
        // window average 1.0 >= r_1 forces an upward move at step 4
        let mut s = WalkState::init_with(&spec, |_| 1.0);
        let moved = s.step_with(&spec, Version::Delayed, |i| {
            assert_eq!(i, 1);
            1.0
        });
        assert_eq!(moved, Some(Direction::Up));
        assert_eq!(s.regime, 1);
        assert_eq!(s.consecutive_uses, 1);
        // now the window is low, but regime 1 has been used only once
        for _ in 0..2 {
            assert_eq!(s.step_with(&spec, Version::Delayed, |_| -5.0), None);
            assert_eq!(s.regime, 1);
        }
        // third use completes the delay; the window (1, -5, -5) is below r_1
        assert_eq!(s.consecutive_uses, 3);
        assert_eq!(
            s.step_with(&spec, Version::Delayed, |_| 0.0),
            Some(Direction::Down)
        );
        assert_eq!(s.regime, 0);
    }

    #[test]
    fn instantaneous_may_oscillate() {
        let spec = gaussian_l1(2);
        let mut s = WalkState::init_with(&spec, |_| 0.4);
        assert_eq!(
            s.step_with(&spec, Version::Instantaneous, |_| -2.0),
            Some(Direction::Up)
        );
        assert_eq!(
            s.step_with(&spec, Version::Instantaneous, |_| 0.0),
            Some(Direction::Down)
        );
        assert_eq!(s.step_with(&spec, Version::Instantaneous, |_| 0.0), None);
    }

    #[test]
    fn bottom_regime_cannot_go_lower() {
        let spec = gaussian_l1(2);
        let mut s = WalkState::init_with(&spec, |_| -10.0);
        assert_eq!(s.step_with(&spec, Version::Instantaneous, |_| -10.0), None);
        assert_eq!(s.regime, 0);
    }

    #[test]
    fn run_structure_and_determinism() {
        let spec = gaussian_l1(10);
        let a = run(&spec, Version::Delayed, 200_000, &mut RandomStream::new(5)).unwrap();
        let b = run(&spec, Version::Delayed, 200_000, &mut RandomStream::new(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.path.sojourns.len() > 10);
        assert_eq!(a.path.regimes.len(), a.path.sojourns.len());
        assert!(a.path.sojourns.last().unwrap().censored);
        for s in a.path.completed() {
            assert!(s.steps >= 10);
        }
        for w in a.path.regimes.windows(2) {
            assert_eq!((w[0] as i64 - w[1] as i64).abs(), 1);
        }
        let total: u64 = a.path.sojourns.iter().map(|s| s.steps).sum();
        assert_eq!(total, 200_000);
        let disp: f64 = a.path.sojourns.iter().map(|s| s.displacement).sum();
        assert_relative_eq!(disp, a.state.position, epsilon = 1e-6);
        assert_eq!(a.checkpoints.last().unwrap().n, 200_000);
        for w in a.checkpoints.windows(2) {
            assert!(w[1].n > w[0].n);
        }
    }

    #[test]
    fn point_mass_speed() {
        let spec = point_masses(4);
        let out = run(&spec, Version::Delayed, 1000, &mut RandomStream::new(1)).unwrap();
        for c in &out.checkpoints {
            assert_eq!(c.speed(), 1.0);
        }
    }

    #[test]
    fn window_sum_drift_is_bounded() {
        let spec = gaussian_l1(20);
        let mut rng = RandomStream::new(77);
        let mut s = WalkState::init(&spec, &mut rng);
        for _ in 0..10_000_000 {
            s.step_delayed(&spec, &mut rng);
        }
        assert!((s.window_sum() - s.recomputed_window_sum()).abs() < 1e-6);
    }

    #[test]
    fn block_z_point_masses() {
        let mut rng = RandomStream::new(2);
        let d = IncrementDistribution::finite_discrete(vec![1.0], vec![1.0]).unwrap();
        let lo = ExtendedReal::Finite(0.5);
        for n in [1, 3, 8] {
            assert_eq!(
                sample_block_z(&d, lo, ExtendedReal::Finite(1.5), n, &mut rng),
                BlockOutcome::Zero
            );
            assert_eq!(
                sample_block_z(&d, lo, ExtendedReal::Finite(1.0), n, &mut rng),
                BlockOutcome::Plus1
            );
        }
    }

    #[test]
    fn block_z_single_rademacher_step() {
        let mut rng = RandomStream::new(3);
        let d = IncrementDistribution::rademacher(0.5).unwrap();
        let mut plus = 0;
        let trials = 100_000;
        for _ in 0..trials {
            match sample_block_z(
                &d,
                ExtendedReal::Finite(-0.5),
                ExtendedReal::Finite(0.5),
                1,
                &mut rng,
            ) {
                BlockOutcome::Plus1 => plus += 1,
                BlockOutcome::Minus1 => {}
                other => panic!("unexpected {other:?}"),
            }
        }
        let p = plus as f64 / trials as f64;
        assert!((p - 0.5).abs() < 5.0 * (0.25 / trials as f64).sqrt());
    }

    /// Exact P(S_n / n >= r) for Rademacher(p), by binomial summation.
    fn rademacher_window_tail(p: f64, n: usize, r: f64) -> f64 {
        let mut total = 0.0;
        let mut coeff = 1.0f64;
        for k in 0..=n {
            if k > 0 {
                coeff *= (n - k + 1) as f64 / k as f64;
            }
            if (2.0 * k as f64 - n as f64) / n as f64 >= r {
                total += coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
            }
        }
        total
    }

    #[test]
    fn block_z_union_bound() {
        let d = IncrementDistribution::rademacher(0.5).unwrap();
        let trials = 200_000u64;
        for (k, n) in [6usize, 10, 14].into_iter().enumerate() {
            let mut rng = RandomStream::derive(4, k as u64);
            let hits = (0..trials)
                .filter(|_| {
                    sample_block_z(
                        &d,
                        ExtendedReal::Finite(-0.5),
                        ExtendedReal::Finite(0.5),
                        n,
                        &mut rng,
                    ) == BlockOutcome::Plus1
                })
                .count() as f64;
            let p = hits / trials as f64;
            let bound = n as f64 * rademacher_window_tail(0.5, n, 0.5);
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            assert!(p <= bound + 3.0 * se, "N={n}: {p} > {bound}");
            // and at least one window's worth
            assert!(p + 3.0 * se >= rademacher_window_tail(0.5, n, 0.5));
        }
    }

    #[test]
    fn exit_one_sided_always_up() {
        let d = IncrementDistribution::gaussian(0.0, 1.0).unwrap();
        let mut rng = RandomStream::new(8);
        for _ in 0..2000 {
            let e = sample_exit(
                &d,
                ExtendedReal::NegInf,
                ExtendedReal::Finite(0.4),
                5,
                &mut rng,
                10_000_000,
            );
            assert_eq!(e.exit_direction, Some(Direction::Up));
        }
    }

    #[test]
    fn exit_immediate_for_point_mass() {
        let d = IncrementDistribution::finite_discrete(vec![2.0], vec![1.0]).unwrap();
        let mut rng = RandomStream::new(8);
        let e = sample_exit(
            &d,
            ExtendedReal::Finite(0.0),
            ExtendedReal::Finite(1.5),
            7,
            &mut rng,
            100,
        );
        assert_eq!(e.tau(7), 0);
        assert_eq!(e.steps, 7);
        assert_eq!(e.displacement, 14.0);
        assert_eq!(e.exit_direction, Some(Direction::Up));
    }

    #[test]
    fn exit_censoring() {
        let d = IncrementDistribution::finite_discrete(vec![1.0], vec![1.0]).unwrap();
        let mut rng = RandomStream::new(8);
        let e = sample_exit(
            &d,
            ExtendedReal::Finite(0.0),
            ExtendedReal::Finite(1.5),
            7,
            &mut rng,
            50,
        );
        assert!(e.censored);
        assert_eq!(e.steps, 50);
        assert_eq!(e.exit_direction, None);
    }

    #[test]
    fn exit_wald_identity() {
        let d = IncrementDistribution::gaussian(1.0, 1.0).unwrap();
        let mut rng = RandomStream::new(10);
        let mut sampler = ExitSampler::new(10);
        let mut resid = crate::stats::Moments::default();
        let mut outcomes = [0u64; 3];
        for _ in 0..10_000 {
            let e = sampler.sample(
                &d,
                ExtendedReal::Finite(0.4),
                ExtendedReal::Finite(1.6),
                &mut rng,
                10_000_000,
            );
            match e.exit_direction {
                Some(Direction::Up) => outcomes[0] += 1,
                Some(Direction::Down) => outcomes[1] += 1,
                None => outcomes[2] += 1,
            }
            resid.push(e.displacement - d.mean() * e.steps as f64);
        }
        assert_eq!(outcomes.iter().sum::<u64>(), 10_000);
        assert_eq!(outcomes[2], 0);
        let m = resid.mean().unwrap();
        assert!(m.abs() < 3.0 * resid.stderr().unwrap(), "{m}");
    }
}
