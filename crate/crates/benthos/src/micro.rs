//! The microscopic stochastic system: M reversible spin processes with
//! growth jump intensities r X g+(X) (up) and r (1-X) g-(X) (down)
//! superposed with per-site decay rates R_i, discretized with the
//! fixed-step forward Euler scheme.
//!
//! `MicroState::step` is the literal per-site-per-step update. Path and
//! ensemble runs sample the identical per-step Bernoulli law through a
//! geometric step-skipping engine (a fixed per-site proposal probability
//! bounds the time-varying hazard; a thinning acceptance restores the exact
//! probability), which costs O(flip proposals) instead of O(M * steps).

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Result};
use crate::growth::GrowthSpec;
use crate::numeric::derive_seed;
use crate::par;
use crate::rate_measure::QuantileLift;
use crate::series::PathSeries;

/// Unit in which a config's dt/horizon were supplied. The core always works
/// in hours internally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeUnit {
    #[default]
    Hours,
    Days,
}

impl TimeUnit {
    pub fn hours_factor(self) -> f64 {
        match self {
            TimeUnit::Hours => 1.0,
            TimeUnit::Days => 24.0,
        }
    }
}

/// Per-step flip probability form. `Exponential` (the default) uses
/// 1 - exp(-lambda dt), well defined for any rate; `Linear` uses the raw
/// clamped lambda*dt for sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HazardForm {
    #[default]
    Exponential,
    Linear,
}

/// Time discretization, horizon, and master seed shared by micro and macro
/// runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    dt: f64,
    horizon: f64,
    pub seed: u64,
    pub time_unit: TimeUnit,
    pub hazard: HazardForm,
}

impl SimConfig {
    /// dt and horizon in hours.
    pub fn new(dt: f64, horizon: f64, seed: u64) -> Result<Self> {
        Self::with_unit(dt, horizon, seed, TimeUnit::Hours)
    }

    /// dt and horizon in days.
    pub fn in_days(dt: f64, horizon: f64, seed: u64) -> Result<Self> {
        Self::with_unit(dt, horizon, seed, TimeUnit::Days)
    }

    pub fn with_unit(dt: f64, horizon: f64, seed: u64, unit: TimeUnit) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(domain(format!("dt must be positive, got {dt}")));
        }
        if !(horizon >= dt) || !horizon.is_finite() {
            return Err(domain(format!(
                "horizon must be at least one step, got horizon={horizon}, dt={dt}"
            )));
        }
        Ok(Self {
            dt,
            horizon,
            seed,
            time_unit: unit,
            hazard: HazardForm::Exponential,
        })
    }

    pub fn with_hazard(mut self, hazard: HazardForm) -> Self {
        self.hazard = hazard;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dt_hours(&self) -> f64 {
        self.dt * self.time_unit.hours_factor()
    }

    pub fn horizon_hours(&self) -> f64 {
        self.horizon * self.time_unit.hours_factor()
    }

    /// Number of Euler steps; the horizon is rounded to a whole number of
    /// steps.
    pub fn n_steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }
}

/// Bit-vector spin configuration with its lift, clock, and generator state.
#[derive(Debug, Clone)]
pub struct MicroState {
    t: f64,
    bits: Vec<u8>,
    lift: QuantileLift,
    rng: ChaCha8Rng,
}

impl MicroState {
    pub fn new(bits: Vec<u8>, lift: QuantileLift, seed: u64) -> Result<Self> {
        if bits.len() != lift.m() {
            return Err(domain(format!(
                "bit vector length {} does not match lift size {}",
                bits.len(),
                lift.m()
            )));
        }
        if !bits.iter().all(|b| *b <= 1) {
            return Err(domain("bits must be 0 or 1"));
        }
        Ok(Self {
            t: 0.0,
            bits,
            lift,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// The default initial condition: every site occupied.
    pub fn fully_occupied(lift: QuantileLift, seed: u64) -> Self {
        let bits = vec![1u8; lift.m()];
        Self::new(bits, lift, seed).expect("all-ones state is always valid")
    }

    /// Aggregate population X = mean of the bits.
    pub fn aggregate(&self) -> f64 {
        let ones: u64 = self.bits.iter().map(|&b| b as u64).sum();
        ones as f64 / self.bits.len() as f64
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn lift(&self) -> &QuantileLift {
        &self.lift
    }

    /// One forward Euler step with the default exponential hazard form.
    pub fn step(&mut self, spec: &GrowthSpec, dt: f64) -> Result<()> {
        self.step_with(spec, dt, HazardForm::Exponential)
    }

    /// One forward Euler step: every site draws one uniform; the aggregate
    /// X is frozen at the step start; a 0-site flips up with probability
    /// p+ = 1 - exp(-r X g+(X) dt) and a 1-site flips down with the
    /// growth-down and decay hazards superposed,
    /// 1 - exp(-r (1-X) g-(t, X) dt) * exp(-R_i dt).
    pub fn step_with(&mut self, spec: &GrowthSpec, dt: f64, hazard: HazardForm) -> Result<()> {
        if !(dt > 0.0) {
            return Err(domain(format!("dt must be positive, got {dt}")));
        }
        let x = self.aggregate();
        let r = spec.r();
        let up_rate = r * x * spec.g_plus(x);
        let gdown_rate = r * (1.0 - x) * spec.g_minus(self.t, x);
        // down_common: survival factor (exponential form) or probability
        // contribution (linear form) of the growth-down channel
        let (p_up, down_common) = match hazard {
            HazardForm::Exponential => (1.0 - (-up_rate * dt).exp(), (-gdown_rate * dt).exp()),
            HazardForm::Linear => ((up_rate * dt).min(1.0), gdown_rate * dt),
        };
        let rates = self.lift.rates();
        for (i, bit) in self.bits.iter_mut().enumerate() {
            let u: f64 = self.rng.gen();
            let p = if *bit == 0 {
                p_up
            } else {
                match hazard {
                    HazardForm::Exponential => 1.0 - down_common * (-rates[i] * dt).exp(),
                    HazardForm::Linear => (down_common + rates[i] * dt).min(1.0),
                }
            };
            if u < p {
                *bit ^= 1;
            }
        }
        self.t += dt;
        Ok(())
    }
}

/// Analytic mean and variance of the decay-only aggregate at time t:
/// mean = (1/M) sum e^{-R_i t}, variance = (1/M^2) sum e^{-R_i t}(1 - e^{-R_i t}).
pub fn decay_mean_variance(lift: &QuantileLift, t: f64) -> (f64, f64) {
    debug_assert!(t >= 0.0);
    let m = lift.m() as f64;
    let mut mean = 0.0;
    let mut var = 0.0;
    for &r in lift.rates() {
        let e = (-r * t).exp();
        mean += e;
        var += e * (1.0 - e);
    }
    (mean / m, var / (m * m))
}

// ---------------------------------------------------------------------------
// step-skipping path engine
// ---------------------------------------------------------------------------

/// Per-run quantities shared by every path: proposal probabilities, their
/// log-complements for geometric sampling, and the per-site decay survival
/// factors.
struct EngineParams<'a> {
    spec: &'a GrowthSpec,
    rates: &'a [f64],
    dt: f64,
    n_steps: u64,
    hazard: HazardForm,
    p_bar_up: f64,
    ln1m_up: f64,
    p_bar_down: Vec<f64>,
    ln1m_down: Vec<f64>,
    decay_survival: Vec<f64>,
}

impl<'a> EngineParams<'a> {
    fn new(lift: &'a QuantileLift, spec: &'a GrowthSpec, config: &SimConfig) -> Self {
        let dt = config.dt_hours();
        let hazard = config.hazard;
        let r = spec.r();
        let prob = |lambda: f64| match hazard {
            HazardForm::Exponential => -(-lambda * dt).exp_m1(),
            HazardForm::Linear => (lambda * dt).min(1.0),
        };
        let p_bar_up = prob(r * spec.g_plus_flux_sup());
        let down_sup = r * spec.g_minus_flux_sup();
        let rates = lift.rates();
        let p_bar_down: Vec<f64> = rates.iter().map(|&ri| prob(down_sup + ri)).collect();
        let ln1m_down = p_bar_down.iter().map(|&p| (-p).ln_1p()).collect();
        let decay_survival = rates.iter().map(|&ri| (-ri * dt).exp()).collect();
        EngineParams {
            spec,
            rates,
            dt,
            n_steps: config.n_steps() as u64,
            hazard,
            p_bar_up,
            ln1m_up: (-p_bar_up).ln_1p(),
            p_bar_down,
            ln1m_down,
            decay_survival,
        }
    }

    /// Geometric skip (>= 1 trials) for proposal probability `p_bar`;
    /// `None` when the hazard is exactly zero.
    fn draw_skip(&self, rng: &mut ChaCha8Rng, p_bar: f64, ln1m: f64) -> Option<u64> {
        if p_bar <= 0.0 {
            return None;
        }
        if p_bar >= 1.0 {
            return Some(1);
        }
        let u: f64 = rng.gen();
        let ratio = (-u).ln_1p() / ln1m;
        if !ratio.is_finite() || ratio >= (self.n_steps + 1) as f64 {
            // beyond the horizon; keep the site scheduled there so the trial
            // count stays finite
            return Some(self.n_steps + 1);
        }
        Some(1 + ratio as u64)
    }

    fn schedule(
        &self,
        rng: &mut ChaCha8Rng,
        heap: &mut BinaryHeap<Reverse<(u64, u32)>>,
        site: u32,
        bit: u8,
        after: u64,
    ) {
        let (p_bar, ln1m) = if bit == 0 {
            (self.p_bar_up, self.ln1m_up)
        } else {
            (
                self.p_bar_down[site as usize],
                self.ln1m_down[site as usize],
            )
        };
        if let Some(skip) = self.draw_skip(rng, p_bar, ln1m) {
            let trial = after.saturating_add(skip);
            if trial <= self.n_steps {
                heap.push(Reverse((trial, site)));
            }
        }
    }

    /// Run one path. `sink` receives contiguous constant segments covering
    /// sample indices [0, n_steps]; returns the terminal aggregate.
    fn run_path(&self, initial: &[u8], seed: u64, sink: &mut impl SegmentSink) -> f64 {
        let m = initial.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bits = initial.to_vec();
        let mut ones: u64 = bits.iter().map(|&b| b as u64).sum();
        let n = self.n_steps;

        // trial k decides the transition from sample k to sample k+1; the
        // first proposal for a site therefore lands on trial >= 1 relative
        // to "after" = 0 meaning it can affect sample 1
        let mut heap: BinaryHeap<Reverse<(u64, u32)>> = BinaryHeap::with_capacity(m + 1);
        for site in 0..m as u32 {
            self.schedule(&mut rng, &mut heap, site, bits[site as usize], 0);
        }

        let mut filled: u64 = 0; // samples [0, filled) already emitted
        let mut flips: Vec<u32> = Vec::with_capacity(8);
        while let Some(&Reverse((trial, _))) = heap.peek() {
            // trial in [1, n]: the flip changes sample `trial`
            let x = ones as f64 / m as f64;
            let t = (trial - 1) as f64 * self.dt;
            // accept probabilities share the step-start aggregate
            let r = self.spec.r();
            let up_rate = r * x * self.spec.g_plus(x);
            let gdown = r * (1.0 - x) * self.spec.g_minus(t, x);
            let (p_up, down_common) = match self.hazard {
                HazardForm::Exponential => {
                    (-(-up_rate * self.dt).exp_m1(), (-gdown * self.dt).exp())
                }
                HazardForm::Linear => ((up_rate * self.dt).min(1.0), gdown * self.dt),
            };

            flips.clear();
            while let Some(&Reverse((k, site))) = heap.peek() {
                if k != trial {
                    break;
                }
                heap.pop();
                let bit = bits[site as usize];
                let (p_actual, p_bar) = if bit == 0 {
                    (p_up, self.p_bar_up)
                } else {
                    let p = match self.hazard {
                        HazardForm::Exponential => {
                            1.0 - down_common * self.decay_survival[site as usize]
                        }
                        HazardForm::Linear => {
                            (down_common + self.rates[site as usize] * self.dt).min(1.0)
                        }
                    };
                    (p, self.p_bar_down[site as usize])
                };
                let u: f64 = rng.gen();
                let flipped = u * p_bar < p_actual;
                if flipped {
                    flips.push(site);
                }
                self.schedule(&mut rng, &mut heap, site, bit ^ (flipped as u8), trial);
            }

            if flips.is_empty() {
                continue;
            }
            // samples [filled, trial) still carry the old aggregate
            sink.segment(filled, trial, x);
            filled = trial;
            for &site in &flips {
                let b = &mut bits[site as usize];
                ones = if *b == 1 { ones - 1 } else { ones + 1 };
                *b ^= 1;
            }
            if ones == 0 {
                // extinction is absorbing: the up intensity X g+(X)
                // vanishes at X = 0, so no further transition is possible
                break;
            }
        }
        let x = ones as f64 / m as f64;
        sink.segment(filled, n + 1, x);
        x
    }
}

/// Receives the piecewise-constant aggregate: `segment(lo, hi, x)` states
/// that samples lo..hi (exclusive) all equal x.
trait SegmentSink {
    fn segment(&mut self, lo: u64, hi: u64, x: f64);
}

struct SeriesSink {
    values: Vec<f64>,
}

impl SegmentSink for SeriesSink {
    fn segment(&mut self, lo: u64, hi: u64, x: f64) {
        for v in &mut self.values[lo as usize..hi as usize] {
            *v = x;
        }
    }
}

/// Range-add via difference arrays; `finish` turns them into per-sample
/// sums by prefix summation.
struct MomentSink {
    sum_diff: Vec<f64>,
    sumsq_diff: Vec<f64>,
}

impl MomentSink {
    fn new(n_samples: usize) -> Self {
        Self {
            sum_diff: vec![0.0; n_samples + 1],
            sumsq_diff: vec![0.0; n_samples + 1],
        }
    }

    fn merge(&mut self, other: &MomentSink) {
        for (a, b) in self.sum_diff.iter_mut().zip(&other.sum_diff) {
            *a += b;
        }
        for (a, b) in self.sumsq_diff.iter_mut().zip(&other.sumsq_diff) {
            *a += b;
        }
    }
}

impl SegmentSink for MomentSink {
    fn segment(&mut self, lo: u64, hi: u64, x: f64) {
        self.sum_diff[lo as usize] += x;
        self.sum_diff[hi as usize] -= x;
        self.sumsq_diff[lo as usize] += x * x;
        self.sumsq_diff[hi as usize] -= x * x;
    }
}

fn validate_initial(initial: &[u8], lift: &QuantileLift) -> Result<()> {
    if initial.len() != lift.m() {
        return Err(domain(format!(
            "initial bit vector length {} does not match lift size {}",
            initial.len(),
            lift.m()
        )));
    }
    if !initial.iter().all(|b| *b <= 1) {
        return Err(domain("bits must be 0 or 1"));
    }
    Ok(())
}

fn time_grid(config: &SimConfig) -> Vec<f64> {
    let dt = config.dt_hours();
    (0..=config.n_steps()).map(|k| k as f64 * dt).collect()
}

/// Simulate a single path, recording the aggregate at every step. The
/// result is a deterministic function of (config.seed, inputs).
pub fn simulate_path(
    initial: &[u8],
    lift: &QuantileLift,
    spec: &GrowthSpec,
    config: &SimConfig,
) -> Result<PathSeries> {
    validate_initial(initial, lift)?;
    let params = EngineParams::new(lift, spec, config);
    let mut sink = SeriesSink {
        values: vec![0.0; config.n_steps() + 1],
    };
    params.run_path(initial, config.seed, &mut sink);
    Ok(PathSeries {
        times: time_grid(config),
        values: sink.values,
    })
}

/// Ensemble statistics: terminal values plus per-step mean/variance across
/// paths.
#[derive(Debug, Clone)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Unbiased (n-1) variance across paths at each step; zero when
    /// n_paths = 1.
    pub variance: Vec<f64>,
    pub terminal: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
}

fn ensemble_impl(
    initial: &[u8],
    lift: &QuantileLift,
    spec: &GrowthSpec,
    config: &SimConfig,
    n_paths: usize,
    serial: bool,
) -> Result<EnsembleSummary> {
    validate_initial(initial, lift)?;
    if n_paths == 0 {
        return Err(domain("ensemble requires n_paths >= 1"));
    }
    let params = EngineParams::new(lift, spec, config);
    let n_samples = config.n_steps() + 1;
    let master = config.seed;

    let work = |range: std::ops::Range<usize>| {
        let mut moments = MomentSink::new(n_samples);
        let mut terminals = Vec::with_capacity(range.len());
        for k in range {
            let seed = derive_seed(master, k as u64);
            terminals.push(params.run_path(initial, seed, &mut moments));
        }
        (moments, terminals)
    };
    let partials = if serial {
        par::batched_serial(n_paths, par::BATCH, work)
    } else {
        par::batched(n_paths, par::BATCH, work)
    };

    let mut moments = MomentSink::new(n_samples);
    let mut terminal = Vec::with_capacity(n_paths);
    for (part, terms) in partials {
        moments.merge(&part);
        terminal.extend(terms);
    }

    let n = n_paths as f64;
    let mut mean = Vec::with_capacity(n_samples);
    let mut variance = Vec::with_capacity(n_samples);
    let (mut sum, mut sumsq) = (0.0, 0.0);
    for k in 0..n_samples {
        sum += moments.sum_diff[k];
        sumsq += moments.sumsq_diff[k];
        mean.push(sum / n);
        let var = if n_paths > 1 {
            ((sumsq - sum * sum / n) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        variance.push(var);
    }

    Ok(EnsembleSummary {
        times: time_grid(config),
        mean,
        variance,
        terminal,
        n_paths,
        seed: master,
    })
}

/// Run `n_paths` independent paths; path k is seeded with
/// `derive_seed(config.seed, k)`, so results are independent of execution
/// order and worker count.
pub fn ensemble(
    initial: &[u8],
    lift: &QuantileLift,
    spec: &GrowthSpec,
    config: &SimConfig,
    n_paths: usize,
) -> Result<EnsembleSummary> {
    ensemble_impl(initial, lift, spec, config, n_paths, false)
}

/// Sequential reference for `ensemble`; identical output, used by the bench
/// suite and available regardless of the `parallel` feature.
pub fn ensemble_serial(
    initial: &[u8],
    lift: &QuantileLift,
    spec: &GrowthSpec,
    config: &SimConfig,
    n_paths: usize,
) -> Result<EnsembleSummary> {
    ensemble_impl(initial, lift, spec, config, n_paths, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::logistic_closed_form;
    use crate::rate_measure::RateMeasure;
    use approx::assert_abs_diff_eq;

    fn case1() -> RateMeasure {
        RateMeasure::new(0.2946, 1.431).unwrap()
    }

    fn tiny_rates(m: usize) -> QuantileLift {
        let rates = (1..=m).map(|i| i as f64 * 1e-15).collect();
        QuantileLift::from_rates(rates).unwrap()
    }

    #[test]
    fn aggregate_examples() {
        let lift = tiny_rates(4);
        let s = MicroState::new(vec![1, 1, 1, 1], lift.clone(), 0).unwrap();
        assert_eq!(s.aggregate(), 1.0);
        let s = MicroState::new(vec![0, 0, 0, 0], lift.clone(), 0).unwrap();
        assert_eq!(s.aggregate(), 0.0);
        let s = MicroState::new(vec![1, 0, 1, 0], lift, 0).unwrap();
        assert_eq!(s.aggregate(), 0.5);
    }

    #[test]
    fn state_validation() {
        let lift = tiny_rates(3);
        assert!(MicroState::new(vec![1, 0], lift.clone(), 0).is_err());
        assert!(MicroState::new(vec![1, 0, 2], lift, 0).is_err());
    }

    #[test]
    fn zero_hazards_leave_state_unchanged() {
        let lift = tiny_rates(16);
        let spec = GrowthSpec::allee_constant(0.0, 0.25).unwrap();
        let mut s = MicroState::new([1, 0].repeat(8), lift, 7).unwrap();
        let before = s.bits().to_vec();
        for _ in 0..200 {
            s.step(&spec, 0.1).unwrap();
        }
        // rates ~1e-15 over 20 time units: flip probability ~2e-14
        assert_eq!(s.bits(), &before[..]);
    }

    #[test]
    fn extinction_is_absorbing() {
        let lift = QuantileLift::build(&case1(), 8).unwrap();
        let spec = GrowthSpec::allee_constant(0.0125, 0.25).unwrap();
        let mut s = MicroState::new(vec![0; 8], lift.clone(), 3).unwrap();
        for _ in 0..500 {
            s.step(&spec, 0.1).unwrap();
            assert_eq!(s.aggregate(), 0.0);
        }
        let config = SimConfig::new(0.024, 24.0, 11).unwrap();
        let series = simulate_path(&[0; 8], &lift, &spec, &config).unwrap();
        assert!(series.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_site_survival_matches_exponential_law() {
        // decay-only, rate R: empirical survival at t vs e^{-Rt} within
        // 4 Monte Carlo standard errors
        let r = 0.7;
        let lift = QuantileLift::from_rates(vec![r]).unwrap();
        let spec = GrowthSpec::allee_constant(0.0, 0.25).unwrap();
        let (t, dt) = (1.0, 0.05);
        let n = 100_000;
        let mut alive = 0u64;
        for k in 0..n {
            let mut s = MicroState::new(vec![1], lift.clone(), derive_seed(5, k)).unwrap();
            for _ in 0..20 {
                s.step(&spec, dt).unwrap();
            }
            alive += s.bits()[0] as u64;
        }
        let p = (-r * t).exp();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let p_hat = alive as f64 / n as f64;
        assert!(
            (p_hat - p).abs() < 4.0 * se,
            "survival {p_hat} vs {p} (4se = {})",
            4.0 * se
        );
    }

    #[test]
    fn decay_mean_variance_closed_forms() {
        let lift = QuantileLift::from_rates(vec![0.9]).unwrap();
        let (m0, v0) = decay_mean_variance(&lift, 0.0);
        assert_eq!((m0, v0), (1.0, 0.0));
        let (m, v) = decay_mean_variance(&lift, 2.0);
        let e = (-1.8_f64).exp();
        assert_abs_diff_eq!(m, e, epsilon = 1e-15);
        assert_abs_diff_eq!(v, e * (1.0 - e), epsilon = 1e-15);
    }

    #[test]
    fn decay_mean_tracks_laplace_transform() {
        let measure = case1();
        let lift = QuantileLift::build(&measure, 1024).unwrap();
        let (mean, _) = decay_mean_variance(&lift, 6.0);
        let lt = measure.laplace_transform(6.0).unwrap();
        assert!((mean - lt).abs() <= 2.0 / 1024.0);
    }

    #[test]
    fn paths_are_deterministic() {
        let lift = QuantileLift::build(&case1(), 32).unwrap();
        let spec = GrowthSpec::allee_constant(0.0125, 0.25).unwrap();
        let config = SimConfig::new(0.024, 48.0, 99).unwrap();
        let a = simulate_path(&[1; 32], &lift, &spec, &config).unwrap();
        let b = simulate_path(&[1; 32], &lift, &spec, &config).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&[1; 32], &lift, &spec, &config.with_seed(100)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn decay_only_paths_are_nonincreasing() {
        let lift = QuantileLift::build(&case1(), 64).unwrap();
        let spec = GrowthSpec::allee_constant(0.0, 0.25).unwrap();
        let config = SimConfig::new(0.024, 96.0, 4).unwrap();
        let series = simulate_path(&[1; 64], &lift, &spec, &config).unwrap();
        assert!(series.values.windows(2).all(|w| w[1] <= w[0]));
        assert!(series.values.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn single_decay_path_lands_near_the_analytic_mean() {
        // one path at M = 2^10 sits within 4 standard deviations of the
        // per-site survival average at t = 1 h
        let lift = QuantileLift::build(&case1(), 1024).unwrap();
        let spec = GrowthSpec::allee_constant(0.0, 0.25).unwrap();
        let config = SimConfig::new(0.024, 1.008, 12).unwrap();
        let series = simulate_path(&[1; 1024], &lift, &spec, &config).unwrap();
        let t = *series.times.last().unwrap();
        let (mean, var) = decay_mean_variance(&lift, t);
        assert!(
            (series.terminal() - mean).abs() <= 4.0 * var.sqrt(),
            "terminal {} vs analytic mean {mean} (4 sigma = {})",
            series.terminal(),
            4.0 * var.sqrt()
        );
    }

    #[test]
    fn singleton_ensemble_equals_derived_path() {
        let lift = QuantileLift::build(&case1(), 16).unwrap();
        let spec = GrowthSpec::allee_constant(0.0125, 0.25).unwrap();
        let config = SimConfig::new(0.024, 24.0, 2024).unwrap();
        let ens = ensemble(&[1; 16], &lift, &spec, &config, 1).unwrap();
        let path = simulate_path(
            &[1; 16],
            &lift,
            &spec,
            &config.with_seed(derive_seed(2024, 0)),
        )
        .unwrap();
        assert_eq!(ens.mean, path.values);
        assert_eq!(ens.terminal[0], path.terminal());
    }

    #[test]
    fn parallel_and_serial_ensembles_agree_exactly() {
        let lift = QuantileLift::build(&case1(), 32).unwrap();
        let spec = GrowthSpec::allee_constant(0.0125, 0.25).unwrap();
        let config = SimConfig::new(0.024, 24.0, 5).unwrap();
        let a = ensemble(&[1; 32], &lift, &spec, &config, 97).unwrap();
        let b = ensemble_serial(&[1; 32], &lift, &spec, &config, 97).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.variance, b.variance);
        assert_eq!(a.terminal, b.terminal);
    }

    #[test]
    fn decay_ensemble_matches_analytic_moments() {
        let measure = case1();
        let lift = QuantileLift::build(&measure, 64).unwrap();
        let spec = GrowthSpec::allee_constant(0.0, 0.25).unwrap();
        let config = SimConfig::new(0.024, 1.008, 31).unwrap(); // 42 steps to ~1 h
        let n_paths = 4000;
        let ens = ensemble(&[1; 64], &lift, &spec, &config, n_paths).unwrap();
        let t = *ens.times.last().unwrap();
        let (mean, var) = decay_mean_variance(&lift, t);
        let se = (var / n_paths as f64).sqrt();
        let got_mean = ens.mean.last().unwrap();
        let got_var = ens.variance.last().unwrap();
        assert!((got_mean - mean).abs() < 4.0 * se);
        assert!((got_var - var).abs() < 0.2 * var);
    }

    #[test]
    fn skip_engine_agrees_with_explicit_stepping() {
        // the step-skipping engine and the literal per-site stepper sample
        // the same law; compare ensemble means at matched times
        let lift = QuantileLift::from_rates(vec![0.05, 0.2, 0.5, 0.8, 1.1, 1.7, 2.5, 4.0]).unwrap();
        let spec = GrowthSpec::allee_constant(0.6, 0.25).unwrap();
        let config = SimConfig::new(0.05, 2.0, 17).unwrap();
        let n = 4000;
        let ens = ensemble(&[1; 8], &lift, &spec, &config, n).unwrap();

        let mut naive_sum = 0.0;
        let mut naive_sumsq = 0.0;
        for k in 0..n {
            let mut s =
                MicroState::new(vec![1; 8], lift.clone(), derive_seed(7777, k as u64)).unwrap();
            for _ in 0..config.n_steps() {
                s.step(&spec, 0.05).unwrap();
            }
            let x = s.aggregate();
            naive_sum += x;
            naive_sumsq += x * x;
        }
        let naive_mean = naive_sum / n as f64;
        let naive_var = (naive_sumsq - naive_sum * naive_sum / n as f64) / (n - 1) as f64;
        let skip_mean = *ens.mean.last().unwrap();
        let se = (2.0 * naive_var / n as f64).sqrt();
        assert!(
            (skip_mean - naive_mean).abs() < 4.0 * se,
            "skip {skip_mean} vs naive {naive_mean} (4se = {})",
            4.0 * se
        );
    }

    #[test]
    fn growth_only_micro_approaches_logistic() {
        let lift = tiny_rates(4096);
        let spec = GrowthSpec::logistic(1.0).unwrap();
        let config = SimConfig::new(0.001, 3.0_f64.ln(), 8).unwrap();
        let initial: Vec<u8> = (0..4096).map(|i| (i % 2) as u8).collect(); // X0 = 0.5
        let ens = ensemble(&initial, &lift, &spec, &config, 8).unwrap();
        let expect = logistic_closed_form(0.5, 1.0, 3.0_f64.ln());
        assert!(
            (ens.mean.last().unwrap() - expect).abs() < 0.05,
            "got {}, want {}",
            ens.mean.last().unwrap(),
            expect
        );
    }

    #[test]
    fn linear_hazard_form_is_close_to_exponential_for_small_dt() {
        let lift = QuantileLift::build(&case1(), 32).unwrap();
        let spec = GrowthSpec::allee_constant(0.0125, 0.25).unwrap();
        let base = SimConfig::new(0.024, 24.0, 3).unwrap();
        let lin = base.with_hazard(HazardForm::Linear);
        let a = ensemble(&[1; 32], &lift, &spec, &base, 2000).unwrap();
        let b = ensemble(&[1; 32], &lift, &spec, &lin, 2000).unwrap();
        let (va, vb) = (
            a.variance.last().unwrap() / 2000.0,
            b.variance.last().unwrap() / 2000.0,
        );
        let se = (va + vb).sqrt();
        assert!((a.mean.last().unwrap() - b.mean.last().unwrap()).abs() < 5.0 * se + 1e-3);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0.0, 1.0, 0).is_err());
        assert!(SimConfig::new(0.1, 0.05, 0).is_err());
        let days = SimConfig::in_days(0.001, 7.0, 0).unwrap();
        assert_abs_diff_eq!(days.dt_hours(), 0.024, epsilon = 1e-15);
        assert_abs_diff_eq!(days.horizon_hours(), 168.0, epsilon = 1e-12);
        assert_eq!(days.n_steps(), 7000);
    }
}
