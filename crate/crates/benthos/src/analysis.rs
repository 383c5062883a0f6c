//! Computational studies on top of the simulators: micro-to-macro
//! convergence-rate estimation with power-law fitting, rate-induced-tipping
//! classification with threshold bisection, and terminal-value histograms
//! with mode detection.

use crate::error::{domain, Error, Result};
use crate::growth::GrowthSpec;
use crate::macro_ide::simulate_macro;
use crate::micro;
use crate::micro::{ensemble, SimConfig};
use crate::numeric::derive_seed;
use crate::par;
use crate::rate_measure::{QuantileLift, RateMeasure};

/// One resolution level of the convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePoint {
    /// Level l with M = 2^l sites.
    pub level: u32,
    pub m: usize,
    /// Time-averaged squared micro-macro gap, averaged over seeds.
    pub er: f64,
}

/// Least-squares fit Er = c * 2^{-p l}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub c: f64,
    pub p: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub points: Vec<ConvergencePoint>,
    pub fit: PowerLawFit,
    /// Er per seed at each level, for spread reporting.
    pub per_seed: Vec<Vec<f64>>,
}

/// For each level l, run the stochastic system at M = 2^l against the
/// macroscopic model on the same lift and time grid; Er(M) is the mean over
/// steps k = 1..K of (X_micro - X_macro)^2, averaged over `n_seeds`
/// independent micro paths. Fits log2 Er against l.
pub fn convergence_study(
    measure: &RateMeasure,
    spec: &GrowthSpec,
    config: &SimConfig,
    levels: &[u32],
    n_seeds: usize,
) -> Result<ConvergenceReport> {
    if levels.is_empty() {
        return Err(domain("convergence study requires at least one level"));
    }
    if n_seeds == 0 {
        return Err(domain("convergence study requires n_seeds >= 1"));
    }

    let mut points = Vec::with_capacity(levels.len());
    let mut per_seed = Vec::with_capacity(levels.len());
    for &level in levels {
        let m = 1usize << level;
        let lift = QuantileLift::build(measure, m)?;
        let macro_series = simulate_macro(&vec![1.0; m], &lift, spec, config)?;
        let initial = vec![1u8; m];

        // one batch per seed; gaps are merged in seed order
        let gaps: Vec<Result<Vec<f64>>> = par::batched(n_seeds, 1, |range| {
            range
                .map(|s| {
                    let path_config = config
                        .with_seed(derive_seed(config.seed, ((level as u64) << 32) | s as u64));
                    micro::simulate_path(&initial, &lift, spec, &path_config)
                        .map(|path| path.mean_squared_gap(&macro_series))
                })
                .collect()
        });
        let mut seeds_er = Vec::with_capacity(n_seeds);
        for g in gaps {
            seeds_er.extend(g?);
        }
        let er = seeds_er.iter().sum::<f64>() / n_seeds as f64;
        points.push(ConvergencePoint { level, m, er });
        per_seed.push(seeds_er);
    }

    let fit = fit_power_law(&points.iter().map(|p| (p.level, p.er)).collect::<Vec<_>>())?;
    Ok(ConvergenceReport {
        points,
        fit,
        per_seed,
    })
}

/// Ordinary linear regression of log2 Er on l; p = -slope, c = 2^intercept.
/// Errors on fewer than two points or any nonpositive Er.
pub fn fit_power_law(points: &[(u32, f64)]) -> Result<PowerLawFit> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    if let Some((l, er)) = points.iter().find(|(_, er)| !(*er > 0.0)) {
        return Err(Error::DegenerateFit(format!(
            "Er must be positive for the log fit; Er({l}) = {er}"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(l, _)| *l as f64).collect();
    let ys: Vec<f64> = points.iter().map(|(_, er)| er.log2()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit(
            "all points share the same level".into(),
        ));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(PowerLawFit {
        c: intercept.exp2(),
        p: -slope,
        r_squared,
    })
}

/// Long-term fate of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Persistent,
    Extinct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TippingPoint {
    pub eta: f64,
    pub fate: Fate,
    pub terminal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TippingResult {
    /// Scanned abrasion multipliers, ordered as supplied.
    pub points: Vec<TippingPoint>,
    /// (largest persistent eta, smallest extinct eta) when the scan is
    /// monotone and contains both fates.
    pub bracket: Option<(f64, f64)>,
}

/// Classification level: a trajectory is persistent when its terminal
/// aggregate exceeds the asymptotic Allee floor (0.1 in the tipping
/// experiments); the positive stable equilibrium always sits above it and
/// extinction trajectories below.
pub fn persistence_threshold(spec: &GrowthSpec) -> f64 {
    spec.threshold_schedule()
        .map(|s| s.lower_value())
        .unwrap_or(0.1)
}

/// Run the macroscopic model under `measure.with_abrasion(eta)` and
/// classify the terminal aggregate.
pub fn macro_fate(
    eta: f64,
    measure: &RateMeasure,
    spec: &GrowthSpec,
    config: &SimConfig,
    m: usize,
) -> Result<(Fate, f64)> {
    let scaled = measure.with_abrasion(eta)?;
    let lift = QuantileLift::build(&scaled, m)?;
    let series = simulate_macro(&vec![1.0; m], &lift, spec, config)?;
    let terminal = series.terminal();
    let fate = if terminal > persistence_threshold(spec) {
        Fate::Persistent
    } else {
        Fate::Extinct
    };
    Ok((fate, terminal))
}

/// Classify each eta on the macroscopic model. The horizon should saturate
/// the threshold schedule (200 days in the tipping experiments).
pub fn tipping_sweep(
    etas: &[f64],
    measure: &RateMeasure,
    spec: &GrowthSpec,
    config: &SimConfig,
    m: usize,
) -> Result<TippingResult> {
    if etas.is_empty() {
        return Err(domain("tipping sweep requires at least one eta"));
    }
    let outcomes: Vec<Result<Vec<TippingPoint>>> = par::batched(etas.len(), 1, |range| {
        range
            .map(|i| {
                macro_fate(etas[i], measure, spec, config, m).map(|(fate, terminal)| TippingPoint {
                    eta: etas[i],
                    fate,
                    terminal,
                })
            })
            .collect()
    });
    let mut points = Vec::with_capacity(etas.len());
    for o in outcomes {
        points.extend(o?);
    }

    let mut sorted = points.clone();
    sorted.sort_by(|a, b| a.eta.total_cmp(&b.eta));
    let lo = sorted
        .iter()
        .filter(|p| p.fate == Fate::Persistent)
        .map(|p| p.eta)
        .fold(f64::NAN, f64::max);
    let hi = sorted
        .iter()
        .filter(|p| p.fate == Fate::Extinct)
        .map(|p| p.eta)
        .fold(f64::NAN, f64::min);
    let monotone = sorted
        .windows(2)
        .all(|w| !(w[0].fate == Fate::Extinct && w[1].fate == Fate::Persistent));
    let bracket = (monotone && lo.is_finite() && hi.is_finite() && lo < hi).then_some((lo, hi));
    Ok(TippingResult { points, bracket })
}

/// Shrink a classification-flip bracket to width `tol` by bisection. The
/// classifier must disagree at the endpoints; monotonicity in between is
/// assumed (abrasion only ever harms the population).
pub fn bisect_tipping<F>(lo: f64, hi: f64, tol: f64, mut classify: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<Fate>,
{
    if !(lo < hi) {
        return Err(domain(format!(
            "bisection requires lo < hi, got [{lo}, {hi}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {tol}")));
    }
    let fate_lo = classify(lo)?;
    let fate_hi = classify(hi)?;
    if fate_lo == fate_hi {
        return Err(domain(format!(
            "classification must differ at the endpoints; both {fate_lo:?}"
        )));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if classify(mid)? == fate_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// `bisect_tipping` with the macroscopic-model classifier.
pub fn bisect_tipping_macro(
    lo: f64,
    hi: f64,
    tol: f64,
    measure: &RateMeasure,
    spec: &GrowthSpec,
    config: &SimConfig,
    m: usize,
) -> Result<(f64, f64)> {
    bisect_tipping(lo, hi, tol, |eta| {
        macro_fate(eta, measure, spec, config, m).map(|(fate, _)| fate)
    })
}

/// Terminal-value histogram with detected modes.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// n_bins + 1 edges covering [0, 1].
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// One mode per occupied-bin cluster carrying at least 2% of the mass:
    /// the center of the cluster's highest bin (boundary bins eligible).
    ///
    /// The micro aggregate lives on the lattice k/M, so with M = 128 and
    /// 50 bins the raw counts alternate systematically between bins holding
    /// two and three lattice points; a literal strict-local-maximum rule on
    /// raw counts reports every comb tooth. Grouping by contiguous occupied
    /// runs and discarding sub-2% clusters (a handful of paths still in
    /// transit at the horizon) recovers the distribution's actual modes.
    pub modes: Vec<f64>,
}

/// Minimum share of the total mass a bin cluster needs to count as a mode.
const MODE_MASS_FLOOR: f64 = 0.02;

impl Histogram {
    /// Bin values from [0, 1] into `n_bins` uniform bins; values at 1.0
    /// land in the last bin.
    pub fn from_values(values: &[f64], n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(domain("histogram requires at least 2 bins"));
        }
        let mut counts = vec![0u64; n_bins];
        for &x in values {
            if !(0.0..=1.0).contains(&x) {
                return Err(domain(format!("histogram value {x} outside [0,1]")));
            }
            let j = ((x * n_bins as f64) as usize).min(n_bins - 1);
            counts[j] += 1;
        }
        let bin_edges = (0..=n_bins).map(|j| j as f64 / n_bins as f64).collect();
        let modes = detect_modes(&counts, n_bins);
        Ok(Self {
            bin_edges,
            counts,
            modes,
        })
    }

    /// Share of mass in the lowest bin.
    pub fn zero_bin_share(&self) -> f64 {
        let total: u64 = self.counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        self.counts[0] as f64 / total as f64
    }
}

fn detect_modes(counts: &[u64], n_bins: usize) -> Vec<f64> {
    let center = |j: usize| (j as f64 + 0.5) / n_bins as f64;
    let total: u64 = counts.iter().sum();
    let floor = (total as f64 * MODE_MASS_FLOOR).ceil() as u64;
    let mut modes = Vec::new();
    let mut j = 0;
    while j < counts.len() {
        if counts[j] == 0 {
            j += 1;
            continue;
        }
        // maximal run of occupied bins
        let start = j;
        while j < counts.len() && counts[j] > 0 {
            j += 1;
        }
        let cluster = &counts[start..j];
        let mass: u64 = cluster.iter().sum();
        if mass >= floor.max(1) {
            let peak = cluster
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            modes.push(center(start + peak));
        }
    }
    modes
}

/// Terminal micro aggregates at the horizon under abrasion `eta`, binned
/// uniformly on [0, 1].
pub fn histogram_ensemble(
    eta: f64,
    m: usize,
    n_paths: usize,
    n_bins: usize,
    measure: &RateMeasure,
    spec: &GrowthSpec,
    config: &SimConfig,
) -> Result<Histogram> {
    if n_paths == 0 {
        return Err(domain("histogram requires n_paths >= 1"));
    }
    let scaled = measure.with_abrasion(eta)?;
    let lift = QuantileLift::build(&scaled, m)?;
    let summary = ensemble(&vec![1u8; m], &lift, spec, config, n_paths)?;
    Histogram::from_values(&summary.terminal, n_bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::{ScheduleDirection, TimeSchedule};
    use crate::series::PathSeries;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const R_PER_HOUR: f64 = 0.3 / 24.0;

    fn case1() -> RateMeasure {
        RateMeasure::new(0.2946, 1.431).unwrap()
    }

    fn sec33_spec() -> GrowthSpec {
        let schedule =
            TimeSchedule::sigmoid(0.1, 0.5, 720.0, 48.0, ScheduleDirection::Decreasing).unwrap();
        GrowthSpec::allee(R_PER_HOUR, schedule).unwrap()
    }

    #[test]
    fn fit_power_law_exact() {
        let points: Vec<(u32, f64)> = (1..=8).map(|l| (l, 4.0 * 2f64.powi(-(l as i32)))).collect();
        let fit = fit_power_law(&points).unwrap();
        assert_relative_eq!(fit.c, 4.0, epsilon = 1e-12);
        assert_relative_eq!(fit.p, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_power_law_two_points() {
        let fit = fit_power_law(&[(1, 1.0), (2, 0.25)]).unwrap();
        assert_relative_eq!(fit.p, 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.c, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_power_law_rejects_degenerate_input() {
        assert!(fit_power_law(&[(1, 1.0)]).is_err());
        assert!(fit_power_law(&[(1, 1.0), (2, 0.0)]).is_err());
        assert!(fit_power_law(&[(1, 1.0), (2, -0.5)]).is_err());
        assert!(fit_power_law(&[(3, 1.0), (3, 0.5)]).is_err());
    }

    #[test]
    fn fit_power_law_recovers_noisy_reference_curve() {
        // c = 0.092, p = 1.06 with 1% multiplicative perturbations
        let noise = [
            1.01, 0.99, 1.008, 0.992, 1.01, 0.99, 1.005, 0.995, 1.01, 0.99, 1.0, 1.0,
        ];
        let points: Vec<(u32, f64)> = (1..=12)
            .map(|l| {
                (
                    l,
                    0.092 * 2f64.powf(-1.06 * l as f64) * noise[(l - 1) as usize],
                )
            })
            .collect();
        let fit = fit_power_law(&points).unwrap();
        assert!((fit.c - 0.092).abs() / 0.092 < 0.05);
        assert!((fit.p - 1.06).abs() / 1.06 < 0.05);
        assert!(fit.r_squared > 0.99);
    }

    #[test]
    fn fit_power_law_scale_equivariance() {
        let points: Vec<(u32, f64)> = (1..=6)
            .map(|l| {
                (
                    l,
                    0.3 * 2f64.powf(-0.9 * l as f64) * (1.0 + 0.01 * (l as f64).sin()),
                )
            })
            .collect();
        let scaled: Vec<(u32, f64)> = points.iter().map(|(l, er)| (*l, 7.0 * er)).collect();
        let f1 = fit_power_law(&points).unwrap();
        let f2 = fit_power_law(&scaled).unwrap();
        assert_relative_eq!(f2.c, 7.0 * f1.c, epsilon = 1e-9);
        assert_relative_eq!(f2.p, f1.p, epsilon = 1e-12);
    }

    #[test]
    fn convergence_study_small_scale() {
        let config = SimConfig::in_days(0.001, 1.0, 42).unwrap();
        let spec = GrowthSpec::allee_constant(0.0, 0.25).unwrap();
        let report = convergence_study(&case1(), &spec, &config, &[2, 4, 6, 8], 4).unwrap();
        assert_eq!(report.points.len(), 4);
        assert!(report.points.iter().all(|p| p.er > 0.0));
        // errors shrink with M
        assert!(report.points[3].er < report.points[0].er);
        assert!(report.fit.p > 0.3);
        assert_eq!(report.per_seed.len(), 4);
        assert_eq!(report.per_seed[0].len(), 4);
    }

    #[test]
    fn identical_series_yield_degenerate_fit() {
        // a self-test stand-in: micro replaced by a copy of the macro series
        let a = PathSeries {
            times: vec![0.0, 1.0, 2.0],
            values: vec![1.0, 0.8, 0.7],
        };
        let er = a.mean_squared_gap(&a.clone());
        assert_eq!(er, 0.0);
        assert!(fit_power_law(&[(1, er), (2, er)]).is_err());
    }

    #[test]
    fn bisect_tipping_synthetic_classifier() {
        let classify = |x: f64| -> Result<Fate> {
            Ok(if x < 0.5 {
                Fate::Persistent
            } else {
                Fate::Extinct
            })
        };
        let (lo, hi) = bisect_tipping(0.0, 1.0, 1e-6, classify).unwrap();
        assert!(lo <= 0.5 && 0.5 <= hi);
        assert!(hi - lo <= 1e-6);
    }

    #[test]
    fn bisect_tipping_preconditions() {
        let classify = |_| Ok(Fate::Extinct);
        assert!(bisect_tipping(0.5, 0.5, 1e-3, classify).is_err());
        assert!(bisect_tipping(0.1, 0.9, 1e-3, |_| Ok(Fate::Extinct)).is_err());
    }

    #[test]
    fn histogram_counts_and_modes() {
        let values = [0.01, 0.02, 0.03, 0.55, 0.56, 0.57, 0.58, 0.90];
        let h = Histogram::from_values(&values, 10).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 8);
        assert_eq!(h.counts[0], 3);
        assert_eq!(h.counts[5], 4);
        assert_eq!(h.modes.len(), 3); // bins 0, 5, 9
        assert!(Histogram::from_values(&values, 1).is_err());
        assert!(Histogram::from_values(&[1.2], 10).is_err());
        // value exactly 1.0 lands in the last bin
        let h = Histogram::from_values(&[1.0], 4).unwrap();
        assert_eq!(h.counts[3], 1);
    }

    #[test]
    fn tipping_sweep_brackets_the_flip() {
        // desk-scale: coarse grid, small M, still straddles the threshold
        let config = SimConfig::in_days(0.004, 200.0, 0).unwrap();
        let result = tipping_sweep(
            &[0.005, 0.009, 0.0098, 0.02],
            &case1(),
            &sec33_spec(),
            &config,
            128,
        )
        .unwrap();
        assert_eq!(result.points[0].fate, Fate::Persistent);
        assert_eq!(result.points[3].fate, Fate::Extinct);
        let (lo, hi) = result.bracket.unwrap();
        assert!(lo < hi);
        assert!((0.005..=0.02).contains(&lo));
    }

    #[test]
    fn small_histogram_ensemble_is_bimodal() {
        let config = SimConfig::in_days(0.004, 200.0, 7).unwrap();
        let h = histogram_ensemble(0.008, 64, 200, 50, &case1(), &sec33_spec(), &config).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 200);
        // extinction mass sits in the lowest bin, the survivors high
        assert!(h.counts[0] > 0);
        assert!(h.zero_bin_share() < 1.0);
        let upper_mass: u64 = h.counts[30..].iter().sum();
        assert!(upper_mass > 0);
    }

    #[test]
    fn upper_mode_mass_diminishes_with_stronger_abrasion() {
        let config = SimConfig::in_days(0.004, 200.0, 11).unwrap();
        let upper_mass = |eta: f64| {
            let h = histogram_ensemble(eta, 64, 400, 50, &case1(), &sec33_spec(), &config).unwrap();
            h.counts[25..].iter().sum::<u64>()
        };
        let weak = upper_mass(0.008);
        let strong = upper_mass(0.020);
        assert!(
            strong * 2 < weak,
            "upper-mode mass {strong} at eta=0.020 vs {weak} at eta=0.008"
        );
    }

    #[test]
    fn persistence_threshold_follows_the_schedule_floor() {
        assert_abs_diff_eq!(persistence_threshold(&sec33_spec()), 0.1);
        let const_spec = GrowthSpec::allee_constant(R_PER_HOUR, 0.25).unwrap();
        assert_abs_diff_eq!(persistence_threshold(&const_spec), 0.25);
    }
}
