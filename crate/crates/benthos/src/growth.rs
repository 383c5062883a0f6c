//! Growth-rate decomposition G(x) = r x (1-x) (g+(x) - g-(x)), its logistic
//! and Allee instances, and the time-dependent sigmoid Allee threshold used
//! in the tipping experiments.

use crate::error::{domain, Result};

/// Orientation of the sigmoid threshold schedule. The decreasing variant is
/// the default (improving conditions over time); the increasing one is kept
/// for sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScheduleDirection {
    #[default]
    Decreasing,
    Increasing,
}

/// Allee threshold over time: either a constant a in (0,1) or a tanh ramp
/// between `a_lower` and `a_upper` with shift `h` and scale `theta` (both in
/// hours).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeSchedule {
    Constant(f64),
    Sigmoid {
        a_lower: f64,
        a_upper: f64,
        shift: f64,
        scale: f64,
        direction: ScheduleDirection,
    },
}

impl TimeSchedule {
    pub fn constant(a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(domain(format!(
                "constant threshold must be in (0,1), got {a}"
            )));
        }
        Ok(Self::Constant(a))
    }

    pub fn sigmoid(
        a_lower: f64,
        a_upper: f64,
        shift: f64,
        scale: f64,
        direction: ScheduleDirection,
    ) -> Result<Self> {
        if !(a_lower > 0.0 && a_lower < a_upper && a_upper < 1.0) {
            return Err(domain(format!(
                "sigmoid bounds must satisfy 0 < a_lower < a_upper < 1, got ({a_lower}, {a_upper})"
            )));
        }
        if !(shift > 0.0) || !(scale > 0.0) {
            return Err(domain(format!(
                "sigmoid shift and scale must be positive, got ({shift}, {scale})"
            )));
        }
        Ok(Self::Sigmoid {
            a_lower,
            a_upper,
            shift,
            scale,
            direction,
        })
    }

    /// Threshold value at time t (hours). The decreasing variant is
    /// a_upper - (a_upper - a_lower)/2 * (1 + tanh((t-h)/theta)): close to
    /// a_upper well before the shift, (a_lower + a_upper)/2 at t = h, and
    /// close to a_lower well after.
    pub fn a_at(&self, t: f64) -> f64 {
        match *self {
            Self::Constant(a) => a,
            Self::Sigmoid {
                a_lower,
                a_upper,
                shift,
                scale,
                direction,
            } => {
                let ramp = 0.5 * (a_upper - a_lower) * (1.0 + ((t - shift) / scale).tanh());
                let a = match direction {
                    ScheduleDirection::Decreasing => a_upper - ramp,
                    ScheduleDirection::Increasing => a_lower + ramp,
                };
                // rounding at saturation can leave [a_lower, a_upper] by 1 ulp
                a.clamp(a_lower, a_upper)
            }
        }
    }

    /// Supremum of the threshold over t >= 0.
    pub fn upper_value(&self) -> f64 {
        match *self {
            Self::Constant(a) => a,
            Self::Sigmoid { a_upper, .. } => a_upper,
        }
    }

    /// Infimum of the threshold over t >= 0 (the asymptotic floor for the
    /// decreasing variant); used as the persistence classification level.
    pub fn lower_value(&self) -> f64 {
        match *self {
            Self::Constant(a) => a,
            Self::Sigmoid { a_lower, .. } => a_lower,
        }
    }

    /// Constant threshold value, when time-independent.
    pub fn as_constant(&self) -> Option<f64> {
        match *self {
            Self::Constant(a) => Some(a),
            Self::Sigmoid { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthKind {
    /// g+ = 1, g- = 0.
    Logistic,
    /// g+(x) = clamp(x), g-(x) = a_t.
    Allee(TimeSchedule),
}

/// Intrinsic growth rate r (1/hour) together with the g+/g- decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthSpec {
    r: f64,
    kind: GrowthKind,
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

impl GrowthSpec {
    pub fn logistic(r: f64) -> Result<Self> {
        Self::new(r, GrowthKind::Logistic)
    }

    pub fn allee(r: f64, threshold: TimeSchedule) -> Result<Self> {
        Self::new(r, GrowthKind::Allee(threshold))
    }

    pub fn allee_constant(r: f64, a: f64) -> Result<Self> {
        Self::new(r, GrowthKind::Allee(TimeSchedule::constant(a)?))
    }

    fn new(r: f64, kind: GrowthKind) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(domain(format!("growth rate must be nonnegative, got {r}")));
        }
        Ok(Self { r, kind })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn kind(&self) -> &GrowthKind {
        &self.kind
    }

    /// Positive part of g; arguments are clamped to `[0,1]`.
    pub fn g_plus(&self, x: f64) -> f64 {
        match self.kind {
            GrowthKind::Logistic => 1.0,
            GrowthKind::Allee(_) => clamp_unit(x),
        }
    }

    /// Negative part of g at time t; arguments are clamped to `[0,1]`.
    pub fn g_minus(&self, t: f64, _x: f64) -> f64 {
        match self.kind {
            GrowthKind::Logistic => 0.0,
            GrowthKind::Allee(schedule) => schedule.a_at(t),
        }
    }

    /// G(x) = r x (1-x) (g+(x) - g-(t, x)); zero at both ends of `[0,1]`.
    pub fn growth_rate(&self, t: f64, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(domain(format!("growth_rate requires x in [0,1], got {x}")));
        }
        Ok(self.r * x * (1.0 - x) * (self.g_plus(x) - self.g_minus(t, x)))
    }

    /// Supremum over x in [0,1] of x * g+(x); bounds the up-spin intensity.
    pub(crate) fn g_plus_flux_sup(&self) -> f64 {
        1.0
    }

    /// Supremum over t, x of (1-x) * g-(t, x); bounds the growth-down
    /// intensity.
    pub(crate) fn g_minus_flux_sup(&self) -> f64 {
        match self.kind {
            GrowthKind::Logistic => 0.0,
            GrowthKind::Allee(schedule) => schedule.upper_value(),
        }
    }

    /// The Allee schedule, when this is an Allee spec.
    pub fn threshold_schedule(&self) -> Option<&TimeSchedule> {
        match &self.kind {
            GrowthKind::Logistic => None,
            GrowthKind::Allee(schedule) => Some(schedule),
        }
    }
}

/// Closed-form logistic solution x0 e^{rt} / (1 - x0 + x0 e^{rt}); the test
/// oracle for growth-only runs.
pub fn logistic_closed_form(x0: f64, r: f64, t: f64) -> f64 {
    if x0 <= 0.0 {
        return 0.0;
    }
    if x0 >= 1.0 {
        return 1.0;
    }
    let e = (r * t).exp();
    x0 * e / (1.0 - x0 + x0 * e)
}
