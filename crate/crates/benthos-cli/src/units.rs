//! Unit-suffixed flag values. The toolkit's canonical unit is hours; every
//! duration flag takes an `h` or `d` suffix ("6h", "0.001d") and every rate
//! flag a `/h` or `/d` suffix ("0.3/d"), converted at parse time.

use std::str::FromStr;

/// A duration given as `<number>h` or `<number>d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Duration {
    pub hours: f64,
}

impl FromStr for Duration {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (value, factor) = if let Some(v) = s.strip_suffix('h') {
            (v, 1.0)
        } else if let Some(v) = s.strip_suffix('d') {
            (v, 24.0)
        } else {
            return Err(format!(
                "duration {s:?} needs an explicit unit suffix: 'h' (hours) or 'd' (days)"
            ));
        };
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| format!("invalid duration {s:?}: {e}"))?;
        if !(value >= 0.0) || !value.is_finite() {
            return Err(format!("duration {s:?} must be nonnegative and finite"));
        }
        Ok(Duration {
            hours: value * factor,
        })
    }
}

/// A rate given as `<number>/h` or `<number>/d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub per_hour: f64,
}

impl FromStr for Rate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (value, divisor) = if let Some(v) = s.strip_suffix("/h") {
            (v, 1.0)
        } else if let Some(v) = s.strip_suffix("/d") {
            (v, 24.0)
        } else {
            return Err(format!(
                "rate {s:?} needs an explicit unit suffix: '/h' (per hour) or '/d' (per day)"
            ));
        };
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| format!("invalid rate {s:?}: {e}"))?;
        if !(value >= 0.0) || !value.is_finite() {
            return Err(format!("rate {s:?} must be nonnegative and finite"));
        }
        Ok(Rate {
            per_hour: value / divisor,
        })
    }
}
