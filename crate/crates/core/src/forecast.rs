//! Direct multi-horizon forecasting with seasonal and lagged features.
//!
//! Hourly histories are laid out as consecutive operating days (24 slots per
//! day). The seasonal clock counts hours along that layout, so days left out
//! of the history (weekends, closures) are also left out of the weekly
//! period. One linear model is fitted per horizon; each instance sees the
//! same hour slot on the `lag_days` days ending at its forecast origin.

use serde::{Deserialize, Serialize};

use crate::linalg::{lstsq_qr, ridge, solve_square, LstSq, Matrix};
use crate::{Error, RateProfile, Result};

/// Ridge penalty, relative to the mean Gram diagonal, used when the design
/// matrix is rank deficient.
pub const RIDGE_FALLBACK_PENALTY: f64 = 1e-8;

/// Per-day attribute shared by all hour slots of that day (teaching week,
/// exam period, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayFlag {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    pub fourier_pairs: usize,
    pub periods: Vec<f64>,
    pub lag_days: usize,
    pub extra_flags: Vec<DayFlag>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            fourier_pairs: 2,
            periods: vec![24.0, 120.0],
            lag_days: 10,
            extra_flags: Vec::new(),
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fourier_pairs == 0 {
            return Err(Error::invalid("at least one Fourier pair is required"));
        }
        if let Some(p) = self.periods.iter().find(|p| !(**p > 0.0)) {
            return Err(Error::invalid(format!("period must be positive, got {p}")));
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        for p in &self.periods {
            for k in 1..=self.fourier_pairs {
                names.push(format!("sin_{k}_p{p}"));
                names.push(format!("cos_{k}_p{p}"));
            }
        }
        for l in 0..self.lag_days {
            names.push(format!("lag_{l}"));
        }
        for f in &self.extra_flags {
            names.push(f.name.clone());
        }
        names
    }
}

/// `[sin(2πkt/p), cos(2πkt/p)]` for `k = 1..=pairs`.
pub fn fourier_features(t: f64, period: f64, pairs: usize) -> Result<Vec<f64>> {
    if !(period > 0.0) {
        return Err(Error::invalid(format!("period must be positive, got {period}")));
    }
    // reduce the phase first so that t and t + period give identical terms
    let phase = t.rem_euclid(period) / period;
    let mut out = Vec::with_capacity(2 * pairs);
    for k in 1..=pairs {
        let angle = std::f64::consts::TAU * k as f64 * phase;
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedSet {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub horizon_days: usize,
    /// (day, hour) of each row's target.
    pub index: Vec<(usize, usize)>,
}

impl SupervisedSet {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: targets.len(),
            });
        }
        if let Some(r) = rows.iter().find(|r| r.len() != feature_names.len()) {
            return Err(Error::DimensionMismatch {
                expected: feature_names.len(),
                found: r.len(),
            });
        }
        let index = (0..rows.len()).map(|i| (i, 0)).collect();
        Ok(Self {
            feature_names,
            rows,
            targets,
            horizon_days: 0,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> SupervisedSet {
        SupervisedSet {
            feature_names: self.feature_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            horizon_days: self.horizon_days,
            index: idx.iter().map(|&i| self.index[i]).collect(),
        }
    }

    fn matrix(&self) -> Result<Matrix> {
        Matrix::from_rows(&self.rows)
    }
}

fn feature_row(days: &[&[f64]], spec: &FeatureSpec, target_day: usize, hour: usize, horizon: usize) -> Result<Vec<f64>> {
    let t = (target_day * 24 + hour) as f64;
    let mut row = vec![1.0];
    for &p in &spec.periods {
        row.extend(fourier_features(t, p, spec.fourier_pairs)?);
    }
    let origin = target_day - horizon;
    for l in 0..spec.lag_days {
        row.push(days[origin - l][hour]);
    }
    for f in &spec.extra_flags {
        let v = f.values.get(target_day).ok_or(Error::InsufficientHistory {
            required: target_day + 1,
            available: f.values.len(),
            unit: "days of flag values",
        })?;
        row.push(*v);
    }
    Ok(row)
}

/// Minimum number of history days that yields at least one training day.
pub fn required_history_days(spec: &FeatureSpec, horizon_days: usize) -> usize {
    horizon_days + spec.lag_days.max(1)
}

/// Builds the training set for one forecast horizon (in days).
pub fn build_direct_set(history: &RateProfile, spec: &FeatureSpec, horizon_days: usize) -> Result<SupervisedSet> {
    spec.validate()?;
    if horizon_days == 0 {
        return Err(Error::invalid("horizon must be at least one day"));
    }
    let days = history.days()?;
    let required = required_history_days(spec, horizon_days);
    if days.len() < required {
        return Err(Error::InsufficientHistory {
            required,
            available: days.len(),
            unit: "days",
        });
    }
    let first = horizon_days + spec.lag_days.saturating_sub(1);
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut index = Vec::new();
    for d in first..days.len() {
        for h in 0..24 {
            rows.push(feature_row(&days, spec, d, h, horizon_days)?);
            targets.push(days[d][h]);
            index.push((d, h));
        }
    }
    Ok(SupervisedSet {
        feature_names: spec.feature_names(),
        rows,
        targets,
        horizon_days,
        index,
    })
}

/// Feature rows for the day `horizon_days` after the last history day.
pub fn build_forecast_rows(history: &RateProfile, spec: &FeatureSpec, horizon_days: usize) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let days = history.days()?;
    if horizon_days == 0 || days.len() < spec.lag_days.max(1) {
        return Err(Error::InsufficientHistory {
            required: spec.lag_days.max(1),
            available: days.len(),
            unit: "days",
        });
    }
    let target = days.len() - 1 + horizon_days;
    (0..24)
        .map(|h| feature_row(&days, spec, target, h, horizon_days))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    SquaredError,
    Quantile { tau: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub loss: LossKind,
    /// Set when the ridge fallback was used.
    #[serde(default)]
    pub regularized: bool,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OlsOptions {
    pub ridge_fallback: bool,
}

impl Default for OlsOptions {
    fn default() -> Self {
        Self { ridge_fallback: true }
    }
}

pub fn fit_ols(set: &SupervisedSet) -> Result<LinearModel> {
    fit_ols_with(set, OlsOptions::default())
}

/// Ordinary least squares via Householder QR.
pub fn fit_ols_with(set: &SupervisedSet, opts: OlsOptions) -> Result<LinearModel> {
    if set.is_empty() {
        return Err(Error::invalid("cannot fit a model on an empty set"));
    }
    let x = set.matrix()?;
    let (coefficients, regularized) = match lstsq_qr(&x, &set.targets, None) {
        LstSq::Solved(b) => (b, false),
        LstSq::RankDeficient(column) if opts.ridge_fallback => {
            log::warn!(
                "design matrix rank deficient at column {column} ({}); using relative ridge penalty {RIDGE_FALLBACK_PENALTY:e}",
                set.feature_names.get(column).map_or("?", String::as_str)
            );
            (ridge(&x, &set.targets, RIDGE_FALLBACK_PENALTY)?, true)
        }
        LstSq::RankDeficient(column) => return Err(Error::Singular { column }),
    };
    Ok(LinearModel {
        feature_names: set.feature_names.clone(),
        coefficients,
        loss: LossKind::SquaredError,
        regularized,
    })
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("quantile must lie in (0, 1), got {tau}")));
    }
    Ok(())
}

fn check_ul(r: f64, tau: f64) -> f64 {
    if r >= 0.0 {
        tau * r
    } else {
        (tau - 1.0) * r
    }
}

fn residuals(x: &Matrix, y: &[f64], beta: &[f64]) -> Vec<f64> {
    (0..x.rows)
        .map(|i| y[i] - x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

fn total_check_loss(res: &[f64], tau: f64) -> f64 {
    res.iter().map(|&r| check_ul(r, tau)).sum()
}

fn weighted_fit(x: &Matrix, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    match lstsq_qr(x, y, Some(w)) {
        LstSq::Solved(b) => Ok(b),
        LstSq::RankDeficient(_) => {
            let mut scaled = x.clone();
            let mut ys = y.to_vec();
            for i in 0..x.rows {
                let s = w[i].sqrt();
                for j in 0..x.cols {
                    scaled.data[i * x.cols + j] *= s;
                }
                ys[i] *= s;
            }
            ridge(&scaled, &ys, RIDGE_FALLBACK_PENALTY)
        }
    }
}

/// Iteratively reweighted least squares on the check loss, with the residual
/// floor shrinking by a factor of ten per stage down to 1e-6.
fn quantile_irls(x: &Matrix, y: &[f64], tau: f64, start: Vec<f64>) -> Result<Vec<f64>> {
    let mut beta = start;
    let res = residuals(x, y, &beta);
    let scale = res.iter().map(|r| r.abs()).sum::<f64>() / res.len() as f64;
    let mut eps = (scale * 0.1).max(1e-6);
    loop {
        for _ in 0..100 {
            let res = residuals(x, y, &beta);
            let w: Vec<f64> = res
                .iter()
                .map(|&r| if r >= 0.0 { tau } else { 1.0 - tau } / r.abs().max(eps))
                .collect();
            let next = weighted_fit(x, y, &w)?;
            let step = next
                .iter()
                .zip(&beta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let size = next.iter().map(|b| b.abs()).fold(1.0, f64::max);
            beta = next;
            if step <= 1e-10 * size {
                break;
            }
        }
        if eps <= 1e-6 {
            break;
        }
        eps = (eps * 0.1).max(1e-6);
    }
    Ok(beta)
}

/// Picks `p` linearly independent rows, preferring small absolute residuals.
fn initial_basis(x: &Matrix, res: &[f64]) -> Option<Vec<usize>> {
    let p = x.cols;
    let mut order: Vec<usize> = (0..x.rows).collect();
    order.sort_by(|&a, &b| res[a].abs().total_cmp(&res[b].abs()).then(a.cmp(&b)));
    let mut basis = Vec::with_capacity(p);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(p);
    for i in order {
        let mut v = x.row(i).to_vec();
        let norm0 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for q in &ortho {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (a, b) in v.iter_mut().zip(q) {
                *a -= dot * b;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-9 * norm0 {
            ortho.push(v.into_iter().map(|a| a / norm).collect());
            basis.push(i);
            if basis.len() == p {
                return Some(basis);
            }
        }
    }
    None
}

fn solve_basis(x: &Matrix, y: &[f64], basis: &[usize]) -> Option<Vec<f64>> {
    let a: Vec<Vec<f64>> = basis.iter().map(|&i| x.row(i).to_vec()).collect();
    let b: Vec<f64> = basis.iter().map(|&i| y[i]).collect();
    solve_square(&a, &b)
}

/// Exact descent over interpolating solutions (simplex edges of the linear
/// programme). Each move frees one basis row and slides along the edge to the
/// minimiser of the piecewise-linear loss.
fn quantile_vertex_descent(x: &Matrix, y: &[f64], tau: f64, warm: &[f64]) -> Option<Vec<f64>> {
    let p = x.cols;
    let n = x.rows;
    let mut basis = initial_basis(x, &residuals(x, y, warm))?;
    let mut beta = solve_basis(x, y, &basis)?;
    let mut res = residuals(x, y, &beta);
    let mut loss = total_check_loss(&res, tau);

    for _ in 0..(50 * n).max(100) {
        let a: Vec<Vec<f64>> = basis.iter().map(|&i| x.row(i).to_vec()).collect();
        let mut best: Option<(f64, usize, usize)> = None; // (loss, basis slot, entering row)
        for j in 0..p {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            let d = solve_square(&a, &e)?;
            let mut kinks: Vec<(f64, f64, usize)> = Vec::with_capacity(n);
            let mut slope = 0.0;
            for i in 0..n {
                let b: f64 = x.row(i).iter().zip(&d).map(|(u, v)| u * v).sum();
                let b = if i == basis[j] { 1.0 } else { b };
                if b.abs() < 1e-12 || (basis.contains(&i) && i != basis[j]) {
                    continue;
                }
                let a_i = if i == basis[j] { 0.0 } else { res[i] };
                slope += if b > 0.0 { -b * tau } else { b * (1.0 - tau) };
                kinks.push((a_i / b, b.abs(), i));
            }
            kinks.sort_by(|u, v| u.0.total_cmp(&v.0));
            let Some(&(t_star, _, entering)) = kinks.iter().find(|k| {
                slope += k.1;
                slope >= 0.0
            }) else {
                continue;
            };
            if entering == basis[j] || t_star == 0.0 {
                continue;
            }
            let cand: Vec<f64> = beta.iter().zip(&d).map(|(b, dv)| b + t_star * dv).collect();
            let l = total_check_loss(&residuals(x, y, &cand), tau);
            if l < loss - 1e-12 * loss.max(1.0) && best.is_none_or(|b| l < b.0) {
                best = Some((l, j, entering));
            }
        }
        let Some((_, slot, entering)) = best else {
            break;
        };
        let mut next_basis = basis.clone();
        next_basis[slot] = entering;
        let Some(next_beta) = solve_basis(x, y, &next_basis) else {
            break;
        };
        let next_res = residuals(x, y, &next_beta);
        let next_loss = total_check_loss(&next_res, tau);
        if next_loss >= loss {
            break;
        }
        basis = next_basis;
        beta = next_beta;
        res = next_res;
        loss = next_loss;
    }
    Some(beta)
}

/// Linear quantile regression minimising the pinball loss at level `tau`.
///
/// IRLS provides a warm start; an exact vertex descent then lands on an
/// optimal interpolating solution. For an intercept-only design the result is
/// an empirical `tau`-quantile of the targets.
pub fn fit_quantile(set: &SupervisedSet, tau: f64) -> Result<LinearModel> {
    check_tau(tau)?;
    let ols = fit_ols(set)?;
    let x = set.matrix()?;
    let y = &set.targets;
    let warm = quantile_irls(&x, y, tau, ols.coefficients.clone())?;
    let warm_loss = total_check_loss(&residuals(&x, y, &warm), tau);
    let coefficients = match quantile_vertex_descent(&x, y, tau, &warm) {
        Some(b) if total_check_loss(&residuals(&x, y, &b), tau) <= warm_loss + 1e-12 * warm_loss.max(1.0) => b,
        _ => warm,
    };
    Ok(LinearModel {
        feature_names: set.feature_names.clone(),
        coefficients,
        loss: LossKind::Quantile { tau },
        regularized: ols.regularized,
    })
}

fn check_lengths(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: y_hat.len(),
        });
    }
    Ok(())
}

/// Summed pinball loss; `tau` may equal 1 (only under-prediction penalised).
pub fn pinball_loss(y: &[f64], y_hat: &[f64], tau: f64) -> Result<f64> {
    check_lengths(y, y_hat)?;
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("quantile must lie in (0, 1], got {tau}")));
    }
    Ok(y.iter().zip(y_hat).map(|(a, p)| check_ul(a - p, tau)).sum())
}

/// Mean pinball loss.
pub fn wmae(y: &[f64], y_hat: &[f64], tau: f64) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::invalid("wmae of empty input"));
    }
    Ok(pinball_loss(y, y_hat, tau)? / y.len() as f64)
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    if y.is_empty() {
        return Err(Error::invalid("mae of empty input"));
    }
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    if y.is_empty() {
        return Err(Error::invalid("rmse of empty input"));
    }
    Ok((y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt())
}

/// Mean of each hour slot across all history days.
pub fn baseline_profile(history: &RateProfile) -> Result<RateProfile> {
    let days = history.days()?;
    if days.is_empty() {
        return Err(Error::InsufficientHistory {
            required: 1,
            available: 0,
            unit: "days",
        });
    }
    let n = days.len() as f64;
    let values = (0..24).map(|h| days.iter().map(|d| d[h]).sum::<f64>() / n).collect();
    Ok(RateProfile {
        slot_duration: history.slot_duration,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Expanding-window folds: the test blocks tile the tail of the series and each
/// fold trains on everything before its block.
pub fn rolling_splits(n_instances: usize, n_folds: usize, test_len: usize) -> Result<Vec<Fold>> {
    if test_len == 0 || n_folds == 0 {
        return Err(Error::invalid("folds and test length must be positive"));
    }
    let tail = n_folds
        .checked_mul(test_len)
        .filter(|&t| t < n_instances)
        .ok_or_else(|| {
            Error::invalid(format!(
                "{n_folds} folds of {test_len} test instances leave no training data out of {n_instances}"
            ))
        })?;
    let first_test = n_instances - tail;
    Ok((0..n_folds)
        .map(|f| {
            let start = first_test + f * test_len;
            Fold {
                train: (0..start).collect(),
                test: (start..start + test_len).collect(),
            }
        })
        .collect())
}

/// One-hot encodes a categorical column, dropping the first level (levels are
/// sorted). Returns the level names kept and the indicator columns.
pub fn one_hot(prefix: &str, values: &[String]) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut levels: Vec<&String> = values.iter().collect();
    levels.sort();
    levels.dedup();
    let kept: Vec<&String> = levels.into_iter().skip(1).collect();
    let names = kept.iter().map(|l| format!("{prefix}={l}")).collect();
    let cols = kept
        .iter()
        .map(|l| values.iter().map(|v| f64::from(u8::from(v == *l))).collect())
        .collect();
    (names, cols)
}

/// One row of the released attendance dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttendanceRecord {
    pub week: u32,
    pub room: String,
    pub seats: u32,
    pub course_id: String,
    /// Start and end hour of day.
    pub start: f64,
    pub end: f64,
    pub enrolment: u32,
    pub attendance: f64,
}

/// Normalized attendance target, or `None` when the record is dropped
/// (zero attendance or more than 150% of enrolment).
pub fn attendance_target(rec: &AttendanceRecord) -> Option<f64> {
    if rec.enrolment == 0 {
        return None;
    }
    let ratio = rec.attendance / rec.enrolment as f64;
    if ratio <= 0.0 || ratio > 1.5 {
        None
    } else {
        Some(ratio.min(1.0))
    }
}

/// Design matrix for attendance prediction: week, start hour, duration,
/// log enrolment and one-hot room and course indicators. Dropped records
/// are excluded; the returned indices point into `records`.
pub fn attendance_design(records: &[AttendanceRecord]) -> Result<(SupervisedSet, Vec<usize>)> {
    let keep: Vec<usize> = (0..records.len())
        .filter(|&i| attendance_target(&records[i]).is_some())
        .collect();
    let kept: Vec<&AttendanceRecord> = keep.iter().map(|&i| &records[i]).collect();
    let rooms: Vec<String> = kept.iter().map(|r| r.room.clone()).collect();
    let courses: Vec<String> = kept.iter().map(|r| r.course_id.clone()).collect();
    let (room_names, room_cols) = one_hot("room", &rooms);
    let (course_names, course_cols) = one_hot("course", &courses);

    let mut names: Vec<String> = ["intercept", "week", "start_hour", "duration", "log_enrolment"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend(room_names);
    names.extend(course_names);

    let rows = kept
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let mut row = vec![
                1.0,
                f64::from(r.week),
                r.start,
                r.end - r.start,
                (f64::from(r.enrolment)).ln(),
            ];
            row.extend(room_cols.iter().map(|c| c[k]));
            row.extend(course_cols.iter().map(|c| c[k]));
            row
        })
        .collect();
    let targets = kept.iter().filter_map(|r| attendance_target(r)).collect();
    Ok((SupervisedSet::new(names, rows, targets)?, keep))
}
