//! Queue length from a line of distance sensors along the queueing fence.
//!
//! Readings are grouped into fixed time bins, each sensor is marked as seeing
//! the queue when enough of its readings fall in the positive band, and the
//! resulting bit vector is snapped to the nearest contiguous-from-the-head code.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, SECS_PER_DAY};

const MS_PER_DAY: i64 = SECS_PER_DAY * 1000;
/// Upper end of the sensor's range in cm.
pub const MAX_RANGE_CM: f64 = 510.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PduRecord {
    /// Milliseconds since the Unix epoch (UTC).
    pub timestamp_ms: i64,
    /// 1-based, 1 is the head of the queue.
    pub sensor_position: usize,
    /// `None` when no echo came back.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    FewerOnes,
    MoreOnes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueueConfig {
    pub bin_minutes: u32,
    pub detect_threshold: f64,
    /// Closed interval of distances (cm) read as a queued person.
    pub positive_band: (f64, f64),
    pub persons_per_segment: u32,
    pub sensor_count: usize,
    pub tie_break: TieBreak,
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self {
            bin_minutes: 2,
            detect_threshold: 0.2,
            positive_band: (200.0, 300.0),
            persons_per_segment: 10,
            sensor_count: 10,
            tie_break: TieBreak::FewerOnes,
        }
    }
}

impl QueueConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bin_minutes == 0 || self.bin_minutes > 1440 {
            return Err(Error::invalid(format!("bin width must lie in 1..=1440 minutes, got {}", self.bin_minutes)));
        }
        if !(self.detect_threshold > 0.0 && self.detect_threshold <= 1.0) {
            return Err(Error::invalid(format!("detection threshold must lie in (0, 1], got {}", self.detect_threshold)));
        }
        let (lo, hi) = self.positive_band;
        if !(0.0..=MAX_RANGE_CM).contains(&lo) || !(0.0..=MAX_RANGE_CM).contains(&hi) || lo > hi {
            return Err(Error::invalid(format!("positive band [{lo}, {hi}] must lie within [0, {MAX_RANGE_CM}]")));
        }
        if self.sensor_count == 0 {
            return Err(Error::invalid("sensor count must be positive"));
        }
        Ok(())
    }

    fn bin_ms(&self) -> i64 {
        i64::from(self.bin_minutes) * 60_000
    }

    /// Start of the bin holding `ts`, bins restarting at each midnight.
    pub fn bin_start(&self, ts: i64) -> i64 {
        let day = ts.div_euclid(MS_PER_DAY) * MS_PER_DAY;
        day + (ts - day).div_euclid(self.bin_ms()) * self.bin_ms()
    }

    fn next_bin(&self, start: i64) -> i64 {
        let next = start + self.bin_ms();
        let next_day = (start.div_euclid(MS_PER_DAY) + 1) * MS_PER_DAY;
        next.min(next_day)
    }

    pub fn max_length(&self) -> u32 {
        self.sensor_count as u32 * self.persons_per_segment
    }
}

/// Per-sensor readings of one bin; index 0 is sensor position 1.
pub type BinReadings = Vec<Vec<Option<f64>>>;

/// Groups readings by bin start (ms). Positions outside `1..=sensor_count` are rejected.
pub fn bin_measurements(records: &[PduRecord], cfg: &QueueConfig) -> Result<BTreeMap<i64, BinReadings>> {
    cfg.validate()?;
    let mut bins: BTreeMap<i64, BinReadings> = BTreeMap::new();
    for r in records {
        if r.sensor_position == 0 || r.sensor_position > cfg.sensor_count {
            return Err(Error::OutOfRange {
                value: r.sensor_position as i64,
                lo: 1,
                hi: cfg.sensor_count as i64,
            });
        }
        bins.entry(cfg.bin_start(r.timestamp_ms))
            .or_insert_with(|| vec![Vec::new(); cfg.sensor_count])[r.sensor_position - 1]
            .push(r.distance);
    }
    Ok(bins)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectionVector {
    pub bits: Vec<bool>,
}

impl DetectionVector {
    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![false; n] }
    }

    /// Ones prefix of length `ones` in a vector of length `n`.
    pub fn prefix(ones: usize, n: usize) -> Self {
        Self {
            bits: (0..n).map(|i| i < ones).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_valid(&self) -> bool {
        self.bits.windows(2).all(|w| w[0] || !w[1])
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }
}

impl fmt::Display for DetectionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for DetectionVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::invalid(format!("bit string may only hold 0 and 1, got {c:?}"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { bits })
    }
}

/// Bit i is set when more than `detect_threshold` of sensor i's readings lie in
/// the positive band. Missing echoes count only toward the denominator.
pub fn detect_vector(readings: &[Vec<Option<f64>>], cfg: &QueueConfig) -> DetectionVector {
    let (lo, hi) = cfg.positive_band;
    let bits = (0..cfg.sensor_count)
        .map(|i| {
            let Some(rs) = readings.get(i).filter(|rs| !rs.is_empty()) else {
                return false;
            };
            let hits = rs.iter().flatten().filter(|&&d| d >= lo && d <= hi).count();
            hits as f64 / rs.len() as f64 > cfg.detect_threshold
        })
        .collect();
    DetectionVector { bits }
}

/// Nearest valid code in Hamming distance.
pub fn correct_code(v: &DetectionVector, tie: TieBreak) -> DetectionVector {
    let n = v.len();
    // distance to prefix k, updated incrementally as k grows
    let mut dist = v.ones();
    let mut best = (dist, 0);
    for k in 1..=n {
        dist = if v.bits[k - 1] { dist - 1 } else { dist + 1 };
        let better = match tie {
            TieBreak::FewerOnes => dist < best.0,
            TieBreak::MoreOnes => dist <= best.0,
        };
        if better {
            best = (dist, k);
        }
    }
    DetectionVector::prefix(best.1, n)
}

pub fn queue_length(code: &DetectionVector, cfg: &QueueConfig) -> Result<u32> {
    if !code.is_valid() {
        return Err(Error::invalid(format!("code {code} is not a contiguous prefix; correct it first")));
    }
    Ok((code.ones() as u32 * cfg.persons_per_segment).min(cfg.max_length()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEstimate {
    pub bin_start_ms: i64,
    pub length: u32,
    pub raw: DetectionVector,
    pub code: DetectionVector,
    /// Sensors that reported anything in this bin.
    pub sensors_reporting: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueSeries {
    pub estimates: Vec<QueueEstimate>,
    /// Bins inside the span with no data at all.
    pub empty_bins: usize,
    /// Fraction of (bin, sensor) cells with at least one reading.
    pub coverage: f64,
}

/// Contiguous series from the first to the last bin with data.
pub fn infer_queue(records: &[PduRecord], cfg: &QueueConfig) -> Result<QueueSeries> {
    let bins = bin_measurements(records, cfg)?;
    let (Some(&first), Some(&last)) = (bins.keys().next(), bins.keys().next_back()) else {
        return Ok(QueueSeries {
            estimates: Vec::new(),
            empty_bins: 0,
            coverage: 0.0,
        });
    };
    let n = cfg.sensor_count;
    let mut estimates = Vec::new();
    let mut empty_bins = 0;
    let mut covered = 0usize;
    let mut start = first;
    while start <= last {
        let est = match bins.get(&start) {
            Some(readings) => {
                let raw = detect_vector(readings, cfg);
                let code = correct_code(&raw, cfg.tie_break);
                let reporting = readings.iter().filter(|r| !r.is_empty()).count();
                covered += reporting;
                QueueEstimate {
                    bin_start_ms: start,
                    length: queue_length(&code, cfg)?,
                    raw,
                    code,
                    sensors_reporting: reporting,
                }
            }
            None => {
                empty_bins += 1;
                QueueEstimate {
                    bin_start_ms: start,
                    length: 0,
                    raw: DetectionVector::zeros(n),
                    code: DetectionVector::zeros(n),
                    sensors_reporting: 0,
                }
            }
        };
        estimates.push(est);
        start = cfg.next_bin(start);
    }
    let coverage = covered as f64 / (estimates.len() * n) as f64;
    Ok(QueueSeries {
        estimates,
        empty_bins,
        coverage,
    })
}
