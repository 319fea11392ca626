//! Sensor-to-decision pipelines for campus resources.
//!
//! The crate turns raw campus sensor records into demand models and
//! allocation decisions:
//!
//! * [`lpr_cleanse`]: license-plate reads to stays, hourly rates and user clusters.
//! * [`forecast`]: seasonal/lagged linear forecasters with symmetric and quantile losses.
//! * [`markov_carpark`]: transient analysis of a finite-capacity birth-death chain
//!   driving expected rejection counts per parking partition.
//! * [`carpark_opt`]: exact choice of one partition scheme per day under a revenue floor.
//! * [`classroom`]: doorway-counter occupancy and exact course-to-room allocation.
//! * [`bus_queue`]: queue length inference from an array of distance sensors.
//! * [`bus_sched`]: passenger wait-time model and genetic search over bus headways.

pub mod bus_queue;
pub mod bus_sched;
pub mod carpark_opt;
pub mod classroom;
mod error;
pub mod forecast;
mod linalg;
pub mod lpr_cleanse;
pub mod markov_carpark;

pub use error::{Error, Result};

/// Seconds in one hour.
pub const SECS_PER_HOUR: i64 = 3_600;
/// Seconds in one day.
pub const SECS_PER_DAY: i64 = 86_400;

/// Piecewise-constant rates, one value per slot of `slot_duration` hours.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateProfile {
    pub slot_duration: f64,
    pub values: Vec<f64>,
}

impl RateProfile {
    /// Hourly profile. Fails if any value is negative or non-finite.
    pub fn hourly(values: Vec<f64>) -> Result<Self> {
        Self::new(1.0, values)
    }

    pub fn new(slot_duration: f64, values: Vec<f64>) -> Result<Self> {
        if !(slot_duration > 0.0 && slot_duration.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "slot duration must be positive, got {slot_duration}"
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidArgument(format!(
                "rate at slot {i} must be finite and non-negative, got {v}"
            )));
        }
        Ok(Self {
            slot_duration,
            values,
        })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            slot_duration: 1.0,
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Splits an hourly profile into consecutive 24-slot days.
    pub fn days(&self) -> Result<Vec<&[f64]>> {
        if self.values.len() % 24 != 0 {
            return Err(Error::InvalidArgument(format!(
                "profile of {} slots is not a whole number of days",
                self.values.len()
            )));
        }
        Ok(self.values.chunks(24).collect())
    }
}
