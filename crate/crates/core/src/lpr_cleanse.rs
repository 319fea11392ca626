//! License-plate-recognition record cleansing.
//!
//! Raw camera reads go through three removal stages (repeated recognitions,
//! low OCR confidence, unread plates) before entries and exits are paired into
//! stays. The cleansed reads also drive hourly arrival/departure profiles and
//! a k-means segmentation of users.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, RateProfile, Result, SECS_PER_DAY, SECS_PER_HOUR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReadFlag {
    Read,
    NotRead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Entry,
    Exit,
}

/// One camera read. Timestamps are naive local seconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlateRecord {
    pub timestamp: i64,
    pub plate: String,
    pub ocr_score: u8,
    pub read_flag: ReadFlag,
    pub direction: Direction,
}

impl PlateRecord {
    pub fn new(
        timestamp: i64,
        plate: impl Into<String>,
        ocr_score: u8,
        read_flag: ReadFlag,
        direction: Direction,
    ) -> Result<Self> {
        if ocr_score > 100 {
            return Err(Error::invalid(format!("OCR score {ocr_score} exceeds 100")));
        }
        Ok(Self {
            timestamp,
            plate: plate.into().to_ascii_uppercase(),
            ocr_score,
            read_flag,
            direction,
        })
    }

    /// Whether the plate string can take part in distance comparisons.
    pub fn is_usable(&self) -> bool {
        self.read_flag == ReadFlag::Read && !self.plate.is_empty()
    }

    pub fn day(&self) -> i64 {
        self.timestamp.div_euclid(SECS_PER_DAY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanseConfig {
    pub dedup_lookahead: usize,
    pub dedup_distance: usize,
    pub ocr_threshold_entry: u8,
    pub ocr_threshold_exit: u8,
    pub match_distance: usize,
}

impl Default for CleanseConfig {
    fn default() -> Self {
        Self {
            dedup_lookahead: 5,
            dedup_distance: 2,
            ocr_threshold_entry: 75,
            ocr_threshold_exit: 65,
            match_distance: 2,
        }
    }
}

impl CleanseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ocr_threshold_entry > 100 || self.ocr_threshold_exit > 100 {
            return Err(Error::invalid("OCR thresholds must lie in [0, 100]"));
        }
        Ok(())
    }

    pub fn ocr_threshold(&self, direction: Direction) -> u8 {
        match direction {
            Direction::Entry => self.ocr_threshold_entry,
            Direction::Exit => self.ocr_threshold_exit,
        }
    }
}

/// A matched entry/exit pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayRecord {
    pub entry_time: i64,
    pub exit_time: i64,
    pub stay_duration: f64,
    pub entry_score: u8,
    pub exit_score: u8,
    pub entry_plate: String,
    pub exit_plate: String,
}

impl StayRecord {
    fn from_pair(entry: &PlateRecord, exit: &PlateRecord) -> Self {
        debug_assert!(exit.timestamp >= entry.timestamp);
        Self {
            entry_time: entry.timestamp,
            exit_time: exit.timestamp,
            stay_duration: (exit.timestamp - entry.timestamp) as f64 / SECS_PER_HOUR as f64,
            entry_score: entry.ocr_score,
            exit_score: exit.ocr_score,
            entry_plate: entry.plate.clone(),
            exit_plate: exit.plate.clone(),
        }
    }

    /// Clustering features: arrival hour of day, departure hour of day, stay hours.
    pub fn features(&self) -> [f64; 3] {
        let hour_of_day = |t: i64| t.rem_euclid(SECS_PER_DAY) as f64 / SECS_PER_HOUR as f64;
        [
            hour_of_day(self.entry_time),
            hour_of_day(self.exit_time),
            self.stay_duration,
        ]
    }
}

/// Edit distance counting single-character insertions, deletions and substitutions.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn dedup_pass(records: &[PlateRecord], cfg: &CleanseConfig, removed: &mut [bool]) -> bool {
    let mut changed = false;
    for anchor in 0..records.len() {
        if removed[anchor] || !records[anchor].is_usable() {
            continue;
        }
        let end = (anchor + cfg.dedup_lookahead + 1).min(records.len());
        let group: Vec<usize> = std::iter::once(anchor)
            .chain(((anchor + 1)..end).filter(|&j| {
                !removed[j]
                    && records[j].is_usable()
                    && levenshtein(&records[anchor].plate, &records[j].plate) <= cfg.dedup_distance
            }))
            .collect();
        if group.len() < 2 {
            continue;
        }
        // highest score wins; earliest read on ties
        let keep = group
            .iter()
            .copied()
            .max_by(|&i, &j| records[i].ocr_score.cmp(&records[j].ocr_score).then(j.cmp(&i)))
            .unwrap_or(anchor);
        for &i in &group {
            if i != keep {
                removed[i] = true;
                changed = true;
            }
        }
    }
    changed
}

/// Removes repeated recognitions of the same vehicle, returning survivors and
/// the removed reads (both time ordered).
///
/// A usable read suppresses the following `dedup_lookahead` reads whose plate
/// lies within `dedup_distance`; the best-scoring read of each group is kept.
/// Passes repeat until nothing changes, so the output is a fixed point.
pub fn dedup_with_removed(
    records: &[PlateRecord],
    cfg: &CleanseConfig,
) -> (Vec<PlateRecord>, Vec<PlateRecord>) {
    let mut current: Vec<PlateRecord> = records.to_vec();
    let mut dropped = Vec::new();
    loop {
        let mut removed = vec![false; current.len()];
        if !dedup_pass(&current, cfg, &mut removed) {
            break;
        }
        let mut kept = Vec::with_capacity(current.len());
        for (r, gone) in current.into_iter().zip(removed) {
            if gone {
                dropped.push(r);
            } else {
                kept.push(r);
            }
        }
        current = kept;
    }
    dropped.sort_by_key(|r| r.timestamp);
    (current, dropped)
}

pub fn dedup_multiple_recognitions(records: &[PlateRecord], cfg: &CleanseConfig) -> Vec<PlateRecord> {
    dedup_with_removed(records, cfg).0
}

/// Keeps reads with `ocr_score >= threshold` and a readable plate.
pub fn filter_low_ocr(records: &[PlateRecord], threshold: u8) -> Vec<PlateRecord> {
    records
        .iter()
        .filter(|r| r.read_flag == ReadFlag::Read && r.ocr_score >= threshold)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchOutcome {
    pub stays: Vec<StayRecord>,
    pub unmatched_entries: Vec<PlateRecord>,
    pub unmatched_exits: Vec<PlateRecord>,
}

/// Pairs exits with earlier same-day entries.
///
/// Exits are processed in time order. Each takes the unmatched entry with the
/// lowest plate distance, then the highest OCR score, then the earliest time.
pub fn match_entries_exits(
    entries: &[PlateRecord],
    exits: &[PlateRecord],
    cfg: &CleanseConfig,
) -> MatchOutcome {
    let mut entry_order: Vec<usize> = (0..entries.len()).collect();
    entry_order.sort_by_key(|&i| entries[i].timestamp);
    let mut exit_order: Vec<usize> = (0..exits.len()).collect();
    exit_order.sort_by_key(|&i| exits[i].timestamp);

    let mut used = vec![false; entries.len()];
    let mut out = MatchOutcome::default();
    for &xi in &exit_order {
        let exit = &exits[xi];
        let best = entry_order
            .iter()
            .copied()
            .filter(|&ei| {
                let e = &entries[ei];
                !used[ei]
                    && e.day() == exit.day()
                    && e.timestamp <= exit.timestamp
                    && e.is_usable()
                    && exit.is_usable()
            })
            .map(|ei| (levenshtein(&entries[ei].plate, &exit.plate), ei))
            .filter(|&(d, _)| d <= cfg.match_distance)
            .min_by(|&(da, a), &(db, b)| {
                da.cmp(&db)
                    .then(entries[b].ocr_score.cmp(&entries[a].ocr_score))
                    .then(entries[a].timestamp.cmp(&entries[b].timestamp))
            });
        match best {
            Some((_, ei)) => {
                used[ei] = true;
                out.stays.push(StayRecord::from_pair(&entries[ei], exit));
            }
            None => out.unmatched_exits.push(exit.clone()),
        }
    }
    out.unmatched_entries = entry_order
        .into_iter()
        .filter(|&i| !used[i])
        .map(|i| entries[i].clone())
        .collect();
    out
}

/// Counts timestamps per hour slot of `[horizon_start, horizon_start + hours)`.
pub fn hourly_rates(timestamps: &[i64], horizon_start: i64, horizon_hours: usize) -> Result<RateProfile> {
    let end = horizon_start + horizon_hours as i64 * SECS_PER_HOUR;
    let mut values = vec![0.0; horizon_hours];
    for &t in timestamps {
        if t < horizon_start || t >= end {
            return Err(Error::OutOfRange {
                value: t,
                lo: horizon_start,
                hi: end,
            });
        }
        values[((t - horizon_start) / SECS_PER_HOUR) as usize] += 1.0;
    }
    Ok(RateProfile {
        slot_duration: 1.0,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserCluster {
    /// Mean (arrival hour, departure hour, stay hours) of the members.
    pub center: [f64; 3],
    pub members: Vec<usize>,
    /// Sum of squared standardized distances of members to the cluster centroid.
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub history: Vec<f64>,
    pub iterations: usize,
}

const KMEANS_MAX_ITER: usize = 300;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, ctr)| (c, sq_dist(point, ctr)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[idx].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Empty clusters are re-seeded at the point farthest from its centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if k > points.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_init(points, k, &mut rng);
    let dim = points[0].len();
    let mut assignment: Vec<usize> = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;

    loop {
        iterations += 1;
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            inertia += d;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed || iterations >= KMEANS_MAX_ITER {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, &centroids[assignment[i]])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
                    .0;
                centroids[c] = points[far].clone();
            }
        }
    }

    let inertia = *history.last().unwrap_or(&0.0);
    Ok(KMeansFit {
        assignment,
        centroids,
        inertia,
        history,
        iterations,
    })
}

/// Standardizes each column to zero mean and unit variance. Constant columns
/// are only centred.
pub fn standardize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if points.is_empty() {
        return Vec::new();
    }
    let n = points.len() as f64;
    let dim = points[0].len();
    let mut out = points.to_vec();
    for j in 0..dim {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for p in &mut out {
            p[j] = (p[j] - mean) / sd;
        }
    }
    out
}

/// Clusters stays on standardized (arrival, departure, stay) features.
pub fn kmeans_users(stays: &[StayRecord], k: usize, seed: u64) -> Result<Vec<UserCluster>> {
    let raw: Vec<Vec<f64>> = stays.iter().map(|s| s.features().to_vec()).collect();
    let z = standardize(&raw);
    let fit = kmeans(&z, k, seed)?;
    let mut clusters: Vec<UserCluster> = (0..k)
        .map(|_| UserCluster {
            center: [0.0; 3],
            members: Vec::new(),
            inertia: 0.0,
        })
        .collect();
    for (i, &c) in fit.assignment.iter().enumerate() {
        clusters[c].members.push(i);
        clusters[c].inertia += sq_dist(&z[i], &fit.centroids[c]);
    }
    for cl in &mut clusters {
        if cl.members.is_empty() {
            continue;
        }
        let m = cl.members.len() as f64;
        for j in 0..3 {
            cl.center[j] = cl.members.iter().map(|&i| raw[i][j]).sum::<f64>() / m;
        }
    }
    Ok(clusters)
}

/// Per-stage removal counts for one camera.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub input: usize,
    pub duplicates: usize,
    pub low_ocr: usize,
    pub not_read: usize,
    pub output: usize,
}

impl StageCounts {
    /// Percentage of the input removed at each stage: (duplicates, low OCR, not read).
    pub fn percentages(&self) -> (f64, f64, f64) {
        if self.input == 0 {
            return (0.0, 0.0, 0.0);
        }
        let pct = |x: usize| 100.0 * x as f64 / self.input as f64;
        (pct(self.duplicates), pct(self.low_ocr), pct(self.not_read))
    }
}

/// Runs the three removal stages on one direction's reads.
pub fn cleanse_direction(
    records: &[PlateRecord],
    direction: Direction,
    cfg: &CleanseConfig,
) -> (Vec<PlateRecord>, StageCounts) {
    let mut reads: Vec<PlateRecord> = records
        .iter()
        .filter(|r| r.direction == direction)
        .cloned()
        .collect();
    reads.sort_by_key(|r| r.timestamp);
    let input = reads.len();
    let deduped = dedup_multiple_recognitions(&reads, cfg);
    let threshold = cfg.ocr_threshold(direction);
    let scored: Vec<PlateRecord> = deduped
        .iter()
        .filter(|r| r.ocr_score >= threshold)
        .cloned()
        .collect();
    let kept = filter_low_ocr(&scored, threshold);
    let counts = StageCounts {
        input,
        duplicates: input - deduped.len(),
        low_ocr: deduped.len() - scored.len(),
        not_read: scored.len() - kept.len(),
        output: kept.len(),
    };
    (kept, counts)
}
