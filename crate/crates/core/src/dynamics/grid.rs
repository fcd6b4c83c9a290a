use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_POINTS: usize = 2000;
/// Horizons beyond this get log-spaced default grids.
pub const LOG_GRID_THRESHOLD: f64 = 1e3;
pub const DEFAULT_LOG_START: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

/// Strictly increasing sample times starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                times.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "grid must start at 0, starts at {}",
                times[0]
            )));
        }
        for (k, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "not strictly increasing at index {}: {} -> {}",
                    k + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Self { times })
    }

    pub fn linear(horizon: f64, points: usize) -> Result<Self> {
        check_horizon(horizon, points)?;
        let step = horizon / (points - 1) as f64;
        let mut times: Vec<f64> = (0..points).map(|k| k as f64 * step).collect();
        times[points - 1] = horizon;
        Self::new(times)
    }

    /// `0` followed by `points - 1` geometrically spaced times from `start`
    /// to `horizon`.
    pub fn log(start: f64, horizon: f64, points: usize) -> Result<Self> {
        check_horizon(horizon, points)?;
        if !(start > 0.0 && start < horizon) {
            return Err(Error::InvalidGrid(format!(
                "log start {start} must lie in (0, {horizon})"
            )));
        }
        let mut times = Vec::with_capacity(points);
        times.push(0.0);
        if points == 2 {
            times.push(horizon);
        } else {
            let (a, b) = (start.ln(), horizon.ln());
            let m = points - 2;
            times.extend((0..=m).map(|k| (a + (b - a) * k as f64 / m as f64).exp()));
            times[1] = start;
            times[points - 1] = horizon;
        }
        Self::new(times)
    }

    pub fn with_spacing(spacing: Spacing, horizon: f64, points: usize) -> Result<Self> {
        match spacing {
            Spacing::Linear => Self::linear(horizon, points),
            Spacing::Log => Self::log(DEFAULT_LOG_START.min(horizon / 10.0), horizon, points),
        }
    }

    /// 2000 log-spaced points beyond `t = 1e3`, 2000 linear points otherwise.
    pub fn default_for(horizon: f64) -> Result<Self> {
        Self::with_spacing(Self::default_spacing(horizon), horizon, DEFAULT_POINTS)
    }

    pub fn default_spacing(horizon: f64) -> Spacing {
        if horizon > LOG_GRID_THRESHOLD {
            Spacing::Log
        } else {
            Spacing::Linear
        }
    }

    /// Copy with extra sample times merged in.
    pub fn including(&self, extra: &[f64]) -> Result<Self> {
        let mut times = self.times.clone();
        times.extend_from_slice(extra);
        times.sort_by(f64::total_cmp);
        times.dedup();
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| s == t)
    }
}

fn check_horizon(horizon: f64, points: usize) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "horizon must be finite and > 0, got {horizon}"
        )));
    }
    if points < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 points, got {points}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids() {
        let g = TimeGrid::default_for(500.0).unwrap();
        assert_eq!(g.len(), 2000);
        assert_eq!(g.horizon(), 500.0);
        assert!((g.times()[1] - 500.0 / 1999.0).abs() < 1e-12);

        let g = TimeGrid::default_for(2e4).unwrap();
        assert_eq!(g.len(), 2000);
        assert_eq!(g.times()[0], 0.0);
        assert_eq!(g.times()[1], 0.1);
        assert_eq!(g.horizon(), 2e4);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.5, 1.0]).is_err());
        assert!(TimeGrid::linear(0.0, 10).is_err());
        assert!(TimeGrid::linear(1.0, 1).is_err());
    }

    #[test]
    fn including_merges_spot_times() {
        let g = TimeGrid::linear(10.0, 3)
            .unwrap()
            .including(&[7.0, 5.0])
            .unwrap();
        assert_eq!(g.times(), &[0.0, 5.0, 7.0, 10.0]);
        assert_eq!(g.index_of(7.0), Some(2));
    }
}
