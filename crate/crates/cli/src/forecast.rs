use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use campus_core::forecast::{self, AttendanceRecord, FeatureSpec, LinearModel};
use campus_core::{RateProfile, SECS_PER_DAY, SECS_PER_HOUR};
use chrono::{DateTime, Datelike, Weekday};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::io::{self, input_error, Run, Table};
use crate::Common;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Linear model fitted to a quantile of the target.
    Quantile,
    /// Ordinary least squares.
    Ols,
    /// Mean of each hour slot over the history.
    Baseline,
}

#[derive(Args)]
pub struct ForecastArgs {
    /// Hourly history: slot_start,arrivals,departures (whole days).
    #[arg(long)]
    history: PathBuf,
    /// Days to forecast, one direct model per day ahead.
    #[arg(long)]
    days: Option<usize>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lag_days: Option<usize>,
    #[arg(long)]
    fourier_pairs: Option<usize>,
    /// Label forecast days with the following weekdays only.
    #[arg(long)]
    weekdays_only: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct Settings {
    days: usize,
    model: ModelKind,
    tau: f64,
    features: FeatureSpec,
    weekdays_only: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            days: 5,
            model: ModelKind::Quantile,
            tau: 0.75,
            features: FeatureSpec::default(),
            weekdays_only: false,
        }
    }
}

pub struct RatesFile {
    pub day_starts: Vec<i64>,
    pub arrivals: RateProfile,
    pub departures: RateProfile,
}

/// Reads a rates file laid out as whole days of 24 consecutive hour slots.
pub fn read_rates(path: &Path) -> Result<RatesFile> {
    let t = Table::read(path, &["slot_start", "arrivals", "departures"])?;
    if t.len() % 24 != 0 {
        return Err(input_error(format!(
            "{}: {} rows is not a whole number of days (24 rows each)",
            path.display(),
            t.len()
        )));
    }
    let mut day_starts = Vec::new();
    let mut arr = Vec::with_capacity(t.len());
    let mut dep = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let ts = t.field(i, "slot_start", io::parse_secs)?;
        if ts.rem_euclid(SECS_PER_DAY) != (i % 24) as i64 * SECS_PER_HOUR {
            return Err(input_error(format!(
                "{}: line {}: expected the slot starting at hour {} of a day",
                path.display(),
                t.line(i),
                i % 24
            )));
        }
        if i % 24 == 0 {
            day_starts.push(ts);
        }
        let nonneg = |s: &str| {
            let v = io::parse_f64(s)?;
            if v < 0.0 {
                bail!("rate {v} is negative");
            }
            Ok(v)
        };
        arr.push(t.field(i, "arrivals", nonneg)?);
        dep.push(t.field(i, "departures", nonneg)?);
    }
    Ok(RatesFile {
        day_starts,
        arrivals: RateProfile::hourly(arr)?,
        departures: RateProfile::hourly(dep)?,
    })
}

fn next_day(t: i64, weekdays_only: bool) -> i64 {
    let weekend = |s: i64| {
        let wd = DateTime::from_timestamp(s, 0).map(|d| d.weekday());
        matches!(wd, Some(Weekday::Sat | Weekday::Sun))
    };
    let mut next = t + SECS_PER_DAY;
    while weekdays_only && weekend(next) {
        next += SECS_PER_DAY;
    }
    next
}

#[derive(Serialize)]
struct FittedModel {
    horizon_days: usize,
    column: &'static str,
    model: Option<LinearModel>,
    train_wmae: Option<f64>,
    train_mae: Option<f64>,
}

fn forecast_column(
    history: &RateProfile,
    column: &'static str,
    s: &Settings,
    out: &mut Vec<FittedModel>,
) -> Result<Vec<f64>> {
    if s.model == ModelKind::Baseline {
        let base = forecast::baseline_profile(history)?;
        out.push(FittedModel {
            horizon_days: 0,
            column,
            model: None,
            train_wmae: None,
            train_mae: None,
        });
        return Ok((0..s.days).flat_map(|_| base.values.clone()).collect());
    }
    let mut preds = Vec::with_capacity(24 * s.days);
    for h in 1..=s.days {
        let set = forecast::build_direct_set(history, &s.features, h)?;
        let model = match s.model {
            ModelKind::Quantile => forecast::fit_quantile(&set, s.tau)?,
            _ => forecast::fit_ols(&set)?,
        };
        let fitted = model.predict(&set.rows);
        let rows = forecast::build_forecast_rows(history, &s.features, h)?;
        preds.extend(model.predict(&rows).into_iter().map(|v| v.max(0.0)));
        out.push(FittedModel {
            horizon_days: h,
            column,
            train_wmae: Some(forecast::wmae(&set.targets, &fitted, s.tau)?),
            train_mae: Some(forecast::mae(&set.targets, &fitted)?),
            model: Some(model),
        });
    }
    Ok(preds)
}

pub fn run(args: ForecastArgs) -> Result<()> {
    let mut s: Settings = io::load_config(args.common.config.as_deref())?;
    if let Some(v) = args.days {
        s.days = v;
    }
    if let Some(v) = args.model {
        s.model = v;
    }
    if let Some(v) = args.tau {
        s.tau = v;
    }
    if let Some(v) = args.lag_days {
        s.features.lag_days = v;
    }
    if let Some(v) = args.fourier_pairs {
        s.features.fourier_pairs = v;
    }
    s.weekdays_only |= args.weekdays_only;
    if s.days == 0 {
        return Err(input_error("--days must be at least 1"));
    }

    let mut run = Run::start("forecast", &args.common.out_dir, args.common.seed)?;
    run.input(&args.history);
    let rates = read_rates(&args.history)?;
    let last_day = *rates
        .day_starts
        .last()
        .ok_or_else(|| input_error(format!("{}: no history rows", args.history.display())))?;

    let mut models = Vec::new();
    let arr = forecast_column(&rates.arrivals, "arrivals", &s, &mut models)?;
    let dep = forecast_column(&rates.departures, "departures", &s, &mut models)?;

    let mut w = run.csv_writer("forecast.csv")?;
    w.write_record(["slot_start", "arrivals", "departures"])?;
    let mut day = last_day;
    for d in 0..s.days {
        day = next_day(day, s.weekdays_only);
        for h in 0..24 {
            let k = d * 24 + h;
            w.write_record([
                io::format_secs(day + h as i64 * SECS_PER_HOUR),
                format!("{:.4}", arr[k]),
                format!("{:.4}", dep[k]),
            ])?;
        }
    }
    w.flush()?;
    run.write_json("models.json", &models)?;
    run.finish(&s)
}

#[derive(Args)]
pub struct AttendanceArgs {
    /// week,room,seats,course_id,start,end,enrolment,attendance
    #[arg(long)]
    input: PathBuf,
    /// Weeks up to and including this one train the model; later weeks are predicted.
    #[arg(long)]
    train_weeks: u32,
    #[arg(long)]
    tau: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct AttendanceSettings {
    tau: f64,
    train_weeks: u32,
}

impl Default for AttendanceSettings {
    fn default() -> Self {
        Self {
            tau: 0.75,
            train_weeks: 0,
        }
    }
}

/// Hour of day from `HH:MM` or a plain number of hours.
fn parse_hour(raw: &str) -> Result<f64> {
    if let Some((h, m)) = raw.split_once(':') {
        let h: f64 = io::parse_num(h)?;
        let m: f64 = io::parse_num(m)?;
        return Ok(h + m / 60.0);
    }
    io::parse_f64(raw)
}

fn read_attendance(path: &Path) -> Result<Vec<AttendanceRecord>> {
    let t = Table::read(
        path,
        &["week", "room", "seats", "course_id", "start", "end", "enrolment", "attendance"],
    )?;
    (0..t.len())
        .map(|i| {
            let rec = AttendanceRecord {
                week: t.field(i, "week", io::parse_num)?,
                room: t.field(i, "room", |s| Ok(s.to_string()))?,
                seats: t.field(i, "seats", io::parse_num)?,
                course_id: t.field(i, "course_id", |s| Ok(s.to_string()))?,
                start: t.field(i, "start", parse_hour)?,
                end: t.field(i, "end", parse_hour)?,
                enrolment: t.field(i, "enrolment", io::parse_num)?,
                attendance: t.field(i, "attendance", io::parse_f64)?,
            };
            if rec.end <= rec.start {
                return Err(input_error(format!("{}: line {}: class ends before it starts", path.display(), t.line(i))));
            }
            Ok(rec)
        })
        .collect()
}

#[derive(Serialize)]
struct AttendanceSummary {
    train_rows: usize,
    test_rows: usize,
    dropped_rows: usize,
    test_wmae: Option<f64>,
    test_mae: Option<f64>,
    model: LinearModel,
}

pub fn run_attendance(args: AttendanceArgs) -> Result<()> {
    let mut s: AttendanceSettings = io::load_config(args.common.config.as_deref())?;
    s.train_weeks = args.train_weeks;
    if let Some(v) = args.tau {
        s.tau = v;
    }
    let mut run = Run::start("forecast-attendance", &args.common.out_dir, args.common.seed)?;
    run.input(&args.input);
    let records = read_attendance(&args.input)?;
    let (set, kept) = forecast::attendance_design(&records)?;
    let train: Vec<usize> = (0..kept.len()).filter(|&k| records[kept[k]].week <= s.train_weeks).collect();
    let test: Vec<usize> = (0..kept.len()).filter(|&k| records[kept[k]].week > s.train_weeks).collect();
    if train.is_empty() {
        return Err(anyhow!(input_error(format!("no usable records in weeks up to {}", s.train_weeks))));
    }
    let model = forecast::fit_quantile(&set.subset(&train), s.tau)?;

    let mut w = run.csv_writer("attendance_forecast.csv")?;
    w.write_record([
        "week",
        "course_id",
        "room",
        "enrolment",
        "attendance",
        "predicted_ratio",
        "predicted_attendance",
        "split",
    ])?;
    let (mut y, mut yh) = (Vec::new(), Vec::new());
    for (k, &i) in kept.iter().enumerate() {
        let r = &records[i];
        let ratio = model.predict_row(&set.rows[k]).clamp(0.0, 1.0);
        let is_test = r.week > s.train_weeks;
        if is_test {
            y.push(set.targets[k]);
            yh.push(ratio);
        }
        w.write_record([
            r.week.to_string(),
            r.course_id.clone(),
            r.room.clone(),
            r.enrolment.to_string(),
            r.attendance.to_string(),
            format!("{ratio:.4}"),
            format!("{:.1}", ratio * f64::from(r.enrolment)),
            if is_test { "test" } else { "train" }.to_string(),
        ])?;
    }
    w.flush()?;
    let summary = AttendanceSummary {
        train_rows: train.len(),
        test_rows: test.len(),
        dropped_rows: records.len() - kept.len(),
        test_wmae: if y.is_empty() { None } else { Some(forecast::wmae(&y, &yh, s.tau)?) },
        test_mae: if y.is_empty() { None } else { Some(forecast::mae(&y, &yh)?) },
        model,
    };
    run.write_json("attendance_model.json", &summary)?;
    run.finish(&s)
}
