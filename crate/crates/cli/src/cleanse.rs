use std::path::PathBuf;

use anyhow::{anyhow, Result};
use campus_core::lpr_cleanse::{self, CleanseConfig, Direction, PlateRecord, ReadFlag, StageCounts};
use campus_core::{SECS_PER_DAY, SECS_PER_HOUR};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::io::{self, Run, Table};
use crate::Common;

#[derive(Args)]
pub struct CleanseArgs {
    /// Plate reads: timestamp,plate_string,ocr_score,read_flag,direction
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    dedup_lookahead: Option<usize>,
    #[arg(long)]
    dedup_distance: Option<usize>,
    #[arg(long)]
    ocr_threshold_entry: Option<u8>,
    #[arg(long)]
    ocr_threshold_exit: Option<u8>,
    #[arg(long)]
    match_distance: Option<usize>,
    /// Number of user clusters.
    #[arg(long)]
    clusters: Option<usize>,
    /// Leave days without any cleaned read out of rates.csv.
    #[arg(long)]
    skip_empty_days: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct Settings {
    #[serde(flatten)]
    cleanse: CleanseConfig,
    clusters: usize,
    skip_empty_days: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            cleanse: CleanseConfig::default(),
            clusters: 3,
            skip_empty_days: false,
        }
    }
}

fn parse_flag(raw: &str) -> Result<ReadFlag> {
    match raw.to_ascii_uppercase().as_str() {
        "READ" => Ok(ReadFlag::Read),
        "NOTREAD" | "NOT_READ" => Ok(ReadFlag::NotRead),
        _ => Err(anyhow!("unknown read_flag {raw:?} (expected READ or NOTREAD)")),
    }
}

fn parse_direction(raw: &str) -> Result<Direction> {
    match raw.to_ascii_uppercase().as_str() {
        "ENTRY" => Ok(Direction::Entry),
        "EXIT" => Ok(Direction::Exit),
        _ => Err(anyhow!("unknown direction {raw:?} (expected ENTRY or EXIT)")),
    }
}

pub fn read_plates(path: &std::path::Path) -> Result<Vec<PlateRecord>> {
    let t = Table::read(path, &["timestamp", "plate_string", "ocr_score", "read_flag", "direction"])?;
    (0..t.len())
        .map(|i| {
            let ts = t.field(i, "timestamp", io::parse_secs)?;
            let plate = t.field(i, "plate_string", |s| Ok(s.to_string()))?;
            let score = t.field(i, "ocr_score", |s| {
                let v: u8 = io::parse_num(s)?;
                if v > 100 {
                    return Err(anyhow!("OCR score {v} exceeds 100"));
                }
                Ok(v)
            })?;
            let flag = t.field(i, "read_flag", parse_flag)?;
            let dir = t.field(i, "direction", parse_direction)?;
            Ok(PlateRecord::new(ts, plate, score, flag, dir)?)
        })
        .collect()
}

#[derive(Serialize)]
struct StageReport {
    #[serde(flatten)]
    counts: StageCounts,
    pct_duplicates: f64,
    pct_low_ocr: f64,
    pct_not_read: f64,
}

impl From<StageCounts> for StageReport {
    fn from(counts: StageCounts) -> Self {
        let (d, o, n) = counts.percentages();
        Self {
            counts,
            pct_duplicates: d,
            pct_low_ocr: o,
            pct_not_read: n,
        }
    }
}

#[derive(Serialize)]
struct Report {
    entry: StageReport,
    exit: StageReport,
    stays: usize,
    unmatched_entries: usize,
    unmatched_exits: usize,
    rate_days: usize,
}

pub fn run(args: CleanseArgs) -> Result<()> {
    let mut s: Settings = io::load_config(args.common.config.as_deref())?;
    let c = &mut s.cleanse;
    macro_rules! set {
        ($field:ident, $target:expr) => {
            if let Some(v) = args.$field {
                $target = v;
            }
        };
    }
    set!(dedup_lookahead, c.dedup_lookahead);
    set!(dedup_distance, c.dedup_distance);
    set!(ocr_threshold_entry, c.ocr_threshold_entry);
    set!(ocr_threshold_exit, c.ocr_threshold_exit);
    set!(match_distance, c.match_distance);
    set!(clusters, s.clusters);
    s.skip_empty_days |= args.skip_empty_days;
    s.cleanse.validate()?;

    let mut run = Run::start("cleanse", &args.common.out_dir, args.common.seed)?;
    run.input(&args.input);
    let records = read_plates(&args.input)?;

    let (entries, entry_counts) = lpr_cleanse::cleanse_direction(&records, Direction::Entry, &s.cleanse);
    let (exits, exit_counts) = lpr_cleanse::cleanse_direction(&records, Direction::Exit, &s.cleanse);
    let matched = lpr_cleanse::match_entries_exits(&entries, &exits, &s.cleanse);

    let mut w = run.csv_writer("stays.csv")?;
    w.write_record(["entry_time", "exit_time", "stay_hours"])?;
    for st in &matched.stays {
        w.write_record([
            io::format_secs(st.entry_time),
            io::format_secs(st.exit_time),
            format!("{:.4}", st.stay_duration),
        ])?;
    }
    w.flush()?;

    // one row per hour over whole days spanning the cleaned reads
    let times: Vec<i64> = entries.iter().chain(&exits).map(|r| r.timestamp).collect();
    let mut w = run.csv_writer("rates.csv")?;
    w.write_record(["slot_start", "arrivals", "departures"])?;
    let mut rate_days = 0;
    if let (Some(&lo), Some(&hi)) = (times.iter().min(), times.iter().max()) {
        let start = lo.div_euclid(SECS_PER_DAY) * SECS_PER_DAY;
        let days = (hi.div_euclid(SECS_PER_DAY) * SECS_PER_DAY - start) / SECS_PER_DAY + 1;
        let hours = (days * 24) as usize;
        let ts = |v: &[PlateRecord]| v.iter().map(|r| r.timestamp).collect::<Vec<_>>();
        let arr = lpr_cleanse::hourly_rates(&ts(&entries), start, hours)?;
        let dep = lpr_cleanse::hourly_rates(&ts(&exits), start, hours)?;
        for d in 0..days as usize {
            let slots = d * 24..(d + 1) * 24;
            let empty = slots.clone().all(|h| arr.values[h] == 0.0 && dep.values[h] == 0.0);
            if s.skip_empty_days && empty {
                continue;
            }
            rate_days += 1;
            for h in slots {
                w.write_record([
                    io::format_secs(start + h as i64 * SECS_PER_HOUR),
                    arr.values[h].to_string(),
                    dep.values[h].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;

    let mut w = run.csv_writer("clusters.csv")?;
    w.write_record(["cluster", "arrival_hour", "departure_hour", "stay_hours", "members", "inertia"])?;
    if s.clusters > 0 && matched.stays.len() >= s.clusters {
        let clusters = lpr_cleanse::kmeans_users(&matched.stays, s.clusters, args.common.seed)?;
        for (k, cl) in clusters.iter().enumerate() {
            w.write_record([
                (k + 1).to_string(),
                format!("{:.4}", cl.center[0]),
                format!("{:.4}", cl.center[1]),
                format!("{:.4}", cl.center[2]),
                cl.members.len().to_string(),
                format!("{:.6}", cl.inertia),
            ])?;
        }
    } else if s.clusters > 0 {
        log::warn!("only {} stays; skipping clustering into {} groups", matched.stays.len(), s.clusters);
    }
    w.flush()?;

    run.write_json(
        "cleanse_report.json",
        &Report {
            entry: entry_counts.into(),
            exit: exit_counts.into(),
            stays: matched.stays.len(),
            unmatched_entries: matched.unmatched_entries.len(),
            unmatched_exits: matched.unmatched_exits.len(),
            rate_days,
        },
    )?;
    run.finish(&s)
}
