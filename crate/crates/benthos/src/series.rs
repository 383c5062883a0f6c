//! Time series of the aggregate population.

/// A recorded trajectory of (t, X) with one sample per Euler step, t in
/// hours.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl PathSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("series is never empty")
    }

    /// Supremum over the common index range of |self - other|.
    pub fn sup_distance(&self, other: &PathSeries) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max)
    }

    /// Mean over k = 1..len of the squared gap to another series sampled on
    /// the same grid; the k = 0 sample (shared initial condition) is
    /// excluded.
    pub fn mean_squared_gap(&self, other: &PathSeries) -> f64 {
        let n = self.values.len().min(other.values.len());
        if n <= 1 {
            return 0.0;
        }
        self.values[1..n]
            .iter()
            .zip(&other.values[1..n])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / (n - 1) as f64
    }
}
