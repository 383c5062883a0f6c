//! The macroscopic population model: a continuum of ODEs coupled through
//! the aggregate, discretized at the lift's quantile nodes and stepped with
//! forward Euler. Also the decay-only closed form and the stationary
//! equilibria via the consistency function H.

use crate::error::{domain, Result};
use crate::growth::GrowthSpec;
use crate::micro::SimConfig;
use crate::rate_measure::{QuantileLift, RateMeasure};
use crate::series::PathSeries;

/// Node update rule. Forward Euler (with a post-step clamp to `[0,1]`, which
/// Euler overshoot at high-rate nodes can otherwise leave) is the production
/// stepper; the exponential integrator treats the frozen-coefficient step
/// exactly and needs no clamp, kept for cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MacroStepper {
    #[default]
    ForwardEuler,
    ExponentialEuler,
}

/// Continuum-node occupancy vector at the lift's rate nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    t: f64,
    occupancy: Vec<f64>,
    lift: QuantileLift,
}

impl MacroState {
    pub fn new(occupancy: Vec<f64>, lift: QuantileLift) -> Result<Self> {
        if occupancy.len() != lift.m() {
            return Err(domain(format!(
                "occupancy length {} does not match lift size {}",
                occupancy.len(),
                lift.m()
            )));
        }
        if !occupancy.iter().all(|x| (0.0..=1.0).contains(x)) {
            return Err(domain("occupancy values must lie in [0,1]"));
        }
        Ok(Self {
            t: 0.0,
            occupancy,
            lift,
        })
    }

    /// Every node at the same occupancy x0.
    pub fn uniform(x0: f64, lift: QuantileLift) -> Result<Self> {
        Self::new(vec![x0; lift.m()], lift)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn occupancy(&self) -> &[f64] {
        &self.occupancy
    }

    pub fn lift(&self) -> &QuantileLift {
        &self.lift
    }

    /// Aggregate population: the uniform average over nodes (the lift
    /// carries mass 1/M per node).
    pub fn aggregate(&self) -> f64 {
        self.occupancy.iter().sum::<f64>() / self.occupancy.len() as f64
    }

    /// One explicit Euler step with the aggregate frozen at the step start:
    /// `x_i += dt [ r X g+(X) - (R_i + r X g+(X) + r (1-X) g-(t, X)) x_i ]`,
    /// clamped to `[0,1]`.
    pub fn step(&mut self, spec: &GrowthSpec, dt: f64) -> Result<()> {
        self.step_with(spec, dt, MacroStepper::ForwardEuler)
    }

    pub fn step_with(&mut self, spec: &GrowthSpec, dt: f64, stepper: MacroStepper) -> Result<()> {
        if !(dt > 0.0) {
            return Err(domain(format!("dt must be positive, got {dt}")));
        }
        let x = self.aggregate();
        let r = spec.r();
        let up = r * x * spec.g_plus(x);
        let down_common = r * (1.0 - x) * spec.g_minus(self.t, x);
        let rates = self.lift.rates();
        match stepper {
            MacroStepper::ForwardEuler => {
                for (xi, &ri) in self.occupancy.iter_mut().zip(rates) {
                    *xi = (*xi + dt * (up - (ri + up + down_common) * *xi)).clamp(0.0, 1.0);
                }
            }
            MacroStepper::ExponentialEuler => {
                for (xi, &ri) in self.occupancy.iter_mut().zip(rates) {
                    let b = ri + up + down_common;
                    if b > 0.0 {
                        let target = up / b;
                        *xi = target + (*xi - target) * (-b * dt).exp();
                    }
                    // b = 0 implies up = 0 as well: the node is frozen
                }
            }
        }
        self.t += dt;
        Ok(())
    }
}

/// Solve the macroscopic model from `initial` occupancy, recording the
/// aggregate at every step. Deterministic; `config.seed` is unused here.
pub fn simulate_macro(
    initial: &[f64],
    lift: &QuantileLift,
    spec: &GrowthSpec,
    config: &SimConfig,
) -> Result<PathSeries> {
    simulate_macro_with(initial, lift, spec, config, MacroStepper::ForwardEuler)
}

pub fn simulate_macro_with(
    initial: &[f64],
    lift: &QuantileLift,
    spec: &GrowthSpec,
    config: &SimConfig,
    stepper: MacroStepper,
) -> Result<PathSeries> {
    let mut state = MacroState::new(initial.to_vec(), lift.clone())?;
    let dt = config.dt_hours();
    let n = config.n_steps();
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    times.push(0.0);
    values.push(state.aggregate());
    for k in 1..=n {
        state.step_with(spec, dt, stepper)?;
        times.push(k as f64 * dt);
        values.push(state.aggregate());
    }
    Ok(PathSeries { times, values })
}

/// The decay-only limit of the aggregate: the measure's Laplace transform.
pub fn decay_only_solution(measure: &RateMeasure, t: f64) -> Result<f64> {
    measure.laplace_transform(t)
}

/// The consistency function whose unit level set holds the positive
/// stationary aggregates:
/// H(x) = \int r g+(x) / (R + r x g+(x) + r (1-x) g-(x)) F(dR),
/// evaluated by adaptive quadrature (tolerance 1e-10, tail at the 1 - 1e-9
/// quantile). Requires a time-independent spec.
pub fn h_function(x: f64, measure: &RateMeasure, spec: &GrowthSpec) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(domain(format!("h_function requires x in (0,1], got {x}")));
    }
    let r = require_constant(spec)?;
    if r == 0.0 {
        return Ok(0.0);
    }
    let gp = spec.g_plus(x);
    let gm = spec.g_minus(0.0, x);
    let denom_const = r * (x * gp + (1.0 - x) * gm);
    let num = r * gp;
    measure.expectation(|rate| num / (rate + denom_const), 1e-10)
}

fn require_constant(spec: &GrowthSpec) -> Result<f64> {
    if let Some(schedule) = spec.threshold_schedule() {
        if schedule.as_constant().is_none() {
            return Err(domain(
                "stationary analysis requires a time-independent threshold",
            ));
        }
    }
    Ok(spec.r())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Saddle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumRoot {
    pub x: f64,
    pub classification: Stability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    /// Interior roots of H = 1, ordered increasing. Either empty or a
    /// (saddle, stable) pair given H's one-maximum shape.
    pub roots: Vec<EquilibriumRoot>,
    /// True when the extinction state is the only stationary equilibrium.
    pub extinction_only: bool,
    /// Occupancy profile of the stable root at `profile_m` lift nodes.
    pub profile: Option<Vec<f64>>,
}

const EQUILIBRIUM_SCAN: usize = 10_000;

/// Scan H - 1 on a grid over (0, 1), bisect each sign change to 1e-10, and
/// classify the larger root stable, the smaller a saddle. The profile at
/// the stable root is evaluated on a `profile_m`-node lift.
pub fn solve_equilibrium(
    measure: &RateMeasure,
    spec: &GrowthSpec,
    profile_m: usize,
) -> Result<EquilibriumResult> {
    require_constant(spec)?;
    let h = |x: f64| h_function(x, measure, spec);

    let grid = |j: usize| j as f64 / EQUILIBRIUM_SCAN as f64;
    let mut roots = Vec::new();
    let mut prev_x = grid(1);
    let mut prev_v = h(prev_x)? - 1.0;
    for j in 2..=EQUILIBRIUM_SCAN {
        let x = grid(j);
        let v = h(x)? - 1.0;
        if prev_v == 0.0 {
            roots.push(prev_x);
        } else if prev_v * v < 0.0 {
            let (mut lo, mut hi, mut f_lo) = (prev_x, x, prev_v);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                let f_mid = h(mid)? - 1.0;
                if f_lo * f_mid <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    f_lo = f_mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_x = x;
        prev_v = v;
    }

    let n = roots.len();
    let classified: Vec<EquilibriumRoot> = roots
        .iter()
        .enumerate()
        .map(|(i, &x)| EquilibriumRoot {
            x,
            classification: if i + 1 == n {
                Stability::Stable
            } else {
                Stability::Saddle
            },
        })
        .collect();

    let profile = match classified.last() {
        Some(stable) if stable.classification == Stability::Stable => {
            let lift = QuantileLift::build(measure, profile_m)?;
            Some(equilibrium_profile(stable.x, &lift, spec)?)
        }
        _ => None,
    };

    Ok(EquilibriumResult {
        extinction_only: classified.is_empty(),
        roots: classified,
        profile,
    })
}

/// Stationary occupancy profile at the lift nodes for a given aggregate:
/// x_inf(R) = r X g+(X) / (R + r X g+(X) + r (1-X) g-(X)).
pub fn equilibrium_profile(x_inf: f64, lift: &QuantileLift, spec: &GrowthSpec) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&x_inf) {
        return Err(domain(format!(
            "equilibrium aggregate must lie in [0,1], got {x_inf}"
        )));
    }
    let r = require_constant(spec)?;
    let up = r * x_inf * spec.g_plus(x_inf);
    let down_common = r * (1.0 - x_inf) * spec.g_minus(0.0, x_inf);
    Ok(lift
        .rates()
        .iter()
        .map(|&ri| {
            let b = ri + up + down_common;
            if b > 0.0 {
                up / b
            } else {
                0.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const R_PER_HOUR: f64 = 0.3 / 24.0;

    fn case1() -> RateMeasure {
        RateMeasure::new(0.2946, 1.431).unwrap()
    }

    fn sec32_spec() -> GrowthSpec {
        GrowthSpec::allee_constant(R_PER_HOUR, 0.25).unwrap()
    }

    #[test]
    fn zero_occupancy_is_a_fixed_point() {
        let lift = QuantileLift::build(&case1(), 16).unwrap();
        let mut state = MacroState::uniform(0.0, lift).unwrap();
        for _ in 0..100 {
            state.step(&sec32_spec(), 0.024).unwrap();
        }
        assert!(state.occupancy().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn decay_only_single_step_is_linear() {
        let lift = QuantileLift::from_rates(vec![2.0]).unwrap();
        let spec = GrowthSpec::allee_constant(0.0, 0.25).unwrap();
        let mut state = MacroState::uniform(1.0, lift).unwrap();
        state.step(&spec, 0.01).unwrap();
        assert_relative_eq!(state.occupancy()[0], 1.0 - 2.0 * 0.01, epsilon = 1e-15);
    }

    #[test]
    fn clamp_keeps_high_rate_nodes_in_range() {
        // R dt > 1 overshoots below zero without the clamp
        let lift = QuantileLift::from_rates(vec![0.5, 200.0]).unwrap();
        let spec = GrowthSpec::allee_constant(0.0, 0.25).unwrap();
        let mut state = MacroState::uniform(1.0, lift).unwrap();
        for _ in 0..50 {
            state.step(&spec, 0.01).unwrap();
            assert!(state.occupancy().iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        assert_eq!(state.occupancy()[1], 0.0);
    }

    #[test]
    fn decay_only_macro_tracks_closed_form() {
        let measure = case1();
        let lift = QuantileLift::build(&measure, 512).unwrap();
        let spec = GrowthSpec::allee_constant(0.0, 0.25).unwrap();
        let config = SimConfig::new(0.002, 6.0, 0).unwrap();
        let series = simulate_macro(&vec![1.0; 512], &lift, &spec, &config).unwrap();
        for (t, x) in series.times.iter().zip(&series.values) {
            let exact = measure.laplace_transform(*t).unwrap();
            assert!(
                (x - exact).abs() < 5e-3,
                "t={t}: macro {x} vs closed form {exact}"
            );
        }
        assert!(series.values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn growth_only_macro_reproduces_logistic() {
        let lift = QuantileLift::from_rates(vec![1e-14, 2e-14, 3e-14]).unwrap();
        let spec = GrowthSpec::logistic(1.0).unwrap();
        let config = SimConfig::new(1e-4, 3.0_f64.ln(), 0).unwrap();
        let series = simulate_macro(&[0.5, 0.5, 0.5], &lift, &spec, &config).unwrap();
        assert_abs_diff_eq!(series.terminal(), 0.75, epsilon = 1e-3);
    }

    #[test]
    fn exponential_stepper_cross_validates_euler() {
        let measure = case1();
        let lift = QuantileLift::build(&measure, 64).unwrap();
        let spec = sec32_spec();
        let config = SimConfig::new(0.024, 168.0, 0).unwrap();
        let euler = simulate_macro(&vec![1.0; 64], &lift, &spec, &config).unwrap();
        let expo = simulate_macro_with(
            &vec![1.0; 64],
            &lift,
            &spec,
            &config,
            MacroStepper::ExponentialEuler,
        )
        .unwrap();
        // both are first-order accurate in dt; they agree to O(dt)
        assert!(euler.sup_distance(&expo) < 5e-3);
    }

    #[test]
    fn full_model_sec32_is_decreasing() {
        let measure = case1();
        let lift = QuantileLift::build(&measure, 256).unwrap();
        let config = SimConfig::in_days(0.001, 7.0, 0).unwrap();
        let series = simulate_macro(&vec![1.0; 256], &lift, &sec32_spec(), &config).unwrap();
        assert!(series.values.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(series.terminal() < 0.6);
    }

    #[test]
    fn decay_only_solution_examples() {
        let measure = case1();
        assert_eq!(decay_only_solution(&measure, 0.0).unwrap(), 1.0);
        let exp1 = RateMeasure::new(1.0, 1.0).unwrap();
        assert_relative_eq!(decay_only_solution(&exp1, 1.0).unwrap(), 0.5);
        assert_relative_eq!(
            decay_only_solution(&measure, 6.0).unwrap(),
            0.513_818_355_354_567_8,
            epsilon = 1e-12
        );
    }

    #[test]
    fn h_function_frozen_oracles() {
        let measure = case1();
        let spec = sec32_spec();
        // 50-digit quadrature oracles
        assert_abs_diff_eq!(
            h_function(1.0, &measure, &spec).unwrap(),
            0.309_468_522_807_860_9,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            h_function(0.5, &measure, &spec).unwrap(),
            0.313_552_758_626_086,
            epsilon = 1e-9
        );
        let post = measure.with_abrasion(0.008).unwrap();
        let spec_post = GrowthSpec::allee_constant(R_PER_HOUR, 0.1).unwrap();
        assert_abs_diff_eq!(
            h_function(0.5, &post, &spec_post).unwrap(),
            1.204_360_633_084_317,
            epsilon = 1e-9
        );
        assert!(h_function(0.0, &measure, &spec).is_err());
        assert!(h_function(1.5, &measure, &spec).is_err());
    }

    #[test]
    fn h_function_spike_proxy_matches_scalar_formula() {
        // a nearly degenerate measure concentrated at mu behaves like the
        // scalar formula g+ r / (mu + r(x g+ + (1-x) g-))
        let mu = 0.02;
        let alpha = 4e6;
        let measure = RateMeasure::new(alpha, mu / alpha).unwrap();
        let spec = sec32_spec();
        let x = 0.6;
        let scalar = R_PER_HOUR * x / (mu + R_PER_HOUR * (x * x - 0.25 * x + 0.25));
        assert_relative_eq!(
            h_function(x, &measure, &spec).unwrap(),
            scalar,
            max_relative = 1e-3
        );
    }

    #[test]
    fn equilibrium_post_tipping_regime() {
        let measure = case1().with_abrasion(0.008).unwrap();
        let spec = GrowthSpec::allee_constant(R_PER_HOUR, 0.1).unwrap();
        let result = solve_equilibrium(&measure, &spec, 64).unwrap();
        assert!(!result.extinction_only);
        assert_eq!(result.roots.len(), 2);
        assert_eq!(result.roots[0].classification, Stability::Saddle);
        assert_eq!(result.roots[1].classification, Stability::Stable);
        assert_abs_diff_eq!(result.roots[0].x, 0.1961862977838355, epsilon = 1e-8);
        assert_abs_diff_eq!(result.roots[1].x, 0.7792727986880356, epsilon = 1e-8);
        assert!((0.70..=0.85).contains(&result.roots[1].x));
        // |H(root) - 1| <= 1e-8 at both roots
        for root in &result.roots {
            let h = h_function(root.x, &measure, &spec).unwrap();
            assert!((h - 1.0).abs() <= 1e-8, "H({}) = {h}", root.x);
        }
        // profile averages back to the aggregate within the quantile-rule gap
        let profile = result.profile.as_ref().unwrap();
        let mean = profile.iter().sum::<f64>() / profile.len() as f64;
        assert!((mean - result.roots[1].x).abs() <= 2.0 / 64.0);
    }

    #[test]
    fn equilibrium_large_threshold_is_extinction_only() {
        let measure = case1();
        let spec = GrowthSpec::allee_constant(R_PER_HOUR, 0.9).unwrap();
        let result = solve_equilibrium(&measure, &spec, 16).unwrap();
        assert!(result.extinction_only);
        assert!(result.roots.is_empty());
        assert!(result.profile.is_none());
    }

    #[test]
    fn equilibrium_spike_proxy_recovers_classical_allee_roots() {
        // eta -> 0 removes decay; the equilibria collapse to the classical
        // pair {a, 1}
        let measure = case1().with_abrasion(1e-9).unwrap();
        let spec = sec32_spec();
        let result = solve_equilibrium(&measure, &spec, 8).unwrap();
        assert_eq!(result.roots.len(), 2);
        assert_abs_diff_eq!(result.roots[0].x, 0.25, epsilon = 1e-3);
        assert_abs_diff_eq!(result.roots[1].x, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn equilibrium_profile_limits() {
        let spec = GrowthSpec::allee_constant(R_PER_HOUR, 0.1).unwrap();
        let x = 0.7792727986880356;
        let lift = QuantileLift::from_rates(vec![1e-13, 1.0, 1e6]).unwrap();
        let profile = equilibrium_profile(x, &lift, &spec).unwrap();
        // R -> 0: x^2 / (x^2 - a x + a); R -> infinity: 0
        assert_relative_eq!(profile[0], 0.9649271273145873, epsilon = 1e-9);
        assert!(profile[2] < 1e-7);
    }

    #[test]
    fn equilibrium_profile_is_a_fixed_point_of_the_stepper() {
        let measure = case1().with_abrasion(0.008).unwrap();
        let spec = GrowthSpec::allee_constant(R_PER_HOUR, 0.1).unwrap();
        let result = solve_equilibrium(&measure, &spec, 1024).unwrap();
        let profile = result.profile.clone().unwrap();
        let lift = QuantileLift::build(&measure, 1024).unwrap();
        let mut state = MacroState::new(profile.clone(), lift).unwrap();
        for _ in 0..100 {
            let before = state.occupancy().to_vec();
            state.step(&spec, 0.024).unwrap();
            let drift = state
                .occupancy()
                .iter()
                .zip(&before)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            assert!(drift <= 1e-8, "per-step drift {drift}");
        }
    }

    #[test]
    fn time_dependent_threshold_requires_constant_for_equilibrium() {
        let schedule = crate::growth::TimeSchedule::sigmoid(
            0.1,
            0.5,
            720.0,
            48.0,
            crate::growth::ScheduleDirection::Decreasing,
        )
        .unwrap();
        let spec = GrowthSpec::allee(R_PER_HOUR, schedule).unwrap();
        assert!(h_function(0.5, &case1(), &spec).is_err());
        assert!(solve_equilibrium(&case1(), &spec, 8).is_err());
    }
}
