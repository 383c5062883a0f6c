//! Experiment presets: the two fitted measures and the two simulation
//! setups used throughout the computational studies. Values are recorded in
//! their source units and converted to hours when the preset is applied.

use anyhow::{bail, Result};
use serde::Serialize;

use benthos::{GrowthSpec, RateMeasure, ScheduleDirection, TimeSchedule};

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct MeasureParams {
    pub alpha: f64,
    /// 1/hour.
    pub beta: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthParams {
    AlleeConstant {
        r_per_hour: f64,
        a: f64,
    },
    AlleeSigmoid {
        r_per_hour: f64,
        a_lower: f64,
        a_upper: f64,
        shift_days: f64,
        theta_days: f64,
        direction: String,
    },
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Preset {
    pub name: String,
    pub measure: MeasureParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_days: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon_days: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

const CASE1: MeasureParams = MeasureParams {
    alpha: 0.2946,
    beta: 1.431,
    eta: 1.0,
};

const CASE2: MeasureParams = MeasureParams {
    alpha: 0.2103,
    beta: 0.8881,
    eta: 1.0,
};

/// r = 0.3/24 per hour.
const R_PER_HOUR: f64 = 0.3 / 24.0;

pub fn lookup(name: &str) -> Result<Preset> {
    let preset = match name {
        "case1" => Preset {
            name: "case1".into(),
            measure: CASE1,
            growth: None,
            dt_days: None,
            horizon_days: None,
            m: None,
        },
        "case2" => Preset {
            name: "case2".into(),
            measure: CASE2,
            growth: None,
            dt_days: None,
            horizon_days: None,
            m: None,
        },
        "sec3.2" => Preset {
            name: "sec3.2".into(),
            measure: CASE1,
            growth: Some(GrowthParams::AlleeConstant {
                r_per_hour: R_PER_HOUR,
                a: 0.25,
            }),
            dt_days: Some(0.001),
            horizon_days: Some(7.0),
            m: Some(1024),
        },
        "sec3.3" => Preset {
            name: "sec3.3".into(),
            measure: CASE1,
            growth: Some(GrowthParams::AlleeSigmoid {
                r_per_hour: R_PER_HOUR,
                a_lower: 0.1,
                a_upper: 0.5,
                shift_days: 30.0,
                theta_days: 2.0,
                direction: "decreasing".into(),
            }),
            dt_days: Some(0.001),
            horizon_days: Some(200.0),
            m: Some(128),
        },
        other => bail!("unknown preset {other:?}; expected case1, case2, sec3.2, or sec3.3"),
    };
    Ok(preset)
}

impl Preset {
    pub fn rate_measure(&self) -> Result<RateMeasure> {
        Ok(RateMeasure::with_eta(
            self.measure.alpha,
            self.measure.beta,
            self.measure.eta,
        )?)
    }

    pub fn growth_spec(&self) -> Result<GrowthSpec> {
        let Some(growth) = &self.growth else {
            bail!(
                "preset {:?} is a measure-only preset; pass --r/--a or pick sec3.2 / sec3.3",
                self.name
            );
        };
        let spec = match growth {
            GrowthParams::AlleeConstant { r_per_hour, a } => {
                GrowthSpec::allee_constant(*r_per_hour, *a)?
            }
            GrowthParams::AlleeSigmoid {
                r_per_hour,
                a_lower,
                a_upper,
                shift_days,
                theta_days,
                direction,
            } => {
                let dir = match direction.as_str() {
                    "decreasing" => ScheduleDirection::Decreasing,
                    "increasing" => ScheduleDirection::Increasing,
                    other => bail!("unknown schedule direction {other:?}"),
                };
                GrowthSpec::allee(
                    *r_per_hour,
                    TimeSchedule::sigmoid(
                        *a_lower,
                        *a_upper,
                        shift_days * 24.0,
                        theta_days * 24.0,
                        dir,
                    )?,
                )?
            }
        };
        Ok(spec)
    }
}
