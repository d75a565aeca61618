//! Heat warning levels from three consecutive daily-mean temperatures.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Warning level 1 (no dangerous heat) through 4 (most severe).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct HeatLevel(u8);

impl HeatLevel {
    pub const ALL: [HeatLevel; 4] = [HeatLevel(1), HeatLevel(2), HeatLevel(3), HeatLevel(4)];

    pub fn new(level: u8) -> Result<Self> {
        if (1..=4).contains(&level) {
            Ok(HeatLevel(level))
        } else {
            Err(Error::contract(format!("heat level must be in 1..=4, got {level}")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for HeatLevel {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        HeatLevel::new(v)
    }
}

impl From<HeatLevel> for u8 {
    fn from(l: HeatLevel) -> u8 {
        l.0
    }
}

impl fmt::Display for HeatLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Daily-mean temperature thresholds (°C) defining the levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatThresholds {
    pub warm: f64,
    pub hot: f64,
}

impl Default for HeatThresholds {
    fn default() -> Self {
        Self { warm: 25.0, hot: 27.0 }
    }
}

impl HeatThresholds {
    /// Level 1: all days below `warm`. Level 2: one or two days at or above
    /// `warm`. Level 3: all days at or above `warm`, at least one below `hot`.
    /// Level 4: all days at or above `hot`.
    pub fn classify(&self, temps: &[f64]) -> Result<HeatLevel> {
        if temps.len() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, got: temps.len() });
        }
        if temps.iter().any(|t| !t.is_finite()) {
            return Err(Error::contract("heat level needs finite temperatures"));
        }
        Ok(self.classify_unchecked(temps))
    }

    pub(crate) fn classify_unchecked(&self, temps: &[f64]) -> HeatLevel {
        let warm_days = temps.iter().filter(|&&t| t >= self.warm).count();
        let hot_days = temps.iter().filter(|&&t| t >= self.hot).count();
        HeatLevel(match (warm_days, hot_days) {
            (0, _) => 1,
            (1 | 2, _) => 2,
            (_, 3) => 4,
            _ => 3,
        })
    }
}

/// Classifies with the default 25 °C / 27 °C thresholds.
pub fn classify_heat_level(temps: &[f64]) -> Result<HeatLevel> {
    HeatThresholds::default().classify(temps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(t: [f64; 3]) -> u8 {
        classify_heat_level(&t).unwrap().get()
    }

    #[test]
    fn table_rows() {
        assert_eq!(level([24.0, 24.0, 24.0]), 1);
        assert_eq!(level([26.0, 24.0, 26.0]), 2);
        assert_eq!(level([26.0, 26.0, 25.0]), 3);
        assert_eq!(level([27.5, 28.0, 27.0]), 4);
    }

    #[test]
    fn boundaries_use_greater_or_equal() {
        assert_eq!(level([25.0, 25.0, 25.0]), 3);
        assert_eq!(level([27.0, 27.0, 27.0]), 4);
        assert_eq!(level([24.999, 27.0, 27.0]), 2);
        assert_eq!(level([27.0, 26.999, 30.0]), 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(classify_heat_level(&[25.0, 25.0]).is_err());
        assert!(classify_heat_level(&[25.0, f64::NAN, 25.0]).is_err());
        assert!(HeatLevel::new(0).is_err());
        assert!(HeatLevel::new(5).is_err());
    }

    #[test]
    fn overridden_thresholds() {
        let th = HeatThresholds { warm: 20.0, hot: 22.0 };
        assert_eq!(th.classify(&[21.0, 21.0, 23.0]).unwrap().get(), 3);
    }
}
