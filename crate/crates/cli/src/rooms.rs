use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use campus_core::classroom::{self, AllocationConfig, AllocationPlan, CourseMeeting, Room};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::{self, input_error, Run, Table};
use crate::Common;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum DemandSource {
    /// The `predicted_attendance` column.
    #[default]
    Predicted,
    /// Full enrolment.
    Enrolment,
}

#[derive(Args)]
pub struct AllocateArgs {
    /// course_id,day,start_slot,duration_slots,enrolment[,predicted_attendance]
    #[arg(long)]
    timetable: PathBuf,
    /// room_id,capacity
    #[arg(long)]
    rooms: PathBuf,
    /// Safety margin added to each meeting's demand, as a fraction.
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long, value_enum)]
    demand: Option<DemandSource>,
    /// Capacities of spare rooms added to the pool, e.g. `100,100`.
    #[arg(long, value_delimiter = ',', conflicts_with = "no_spare_rooms")]
    spare_rooms: Option<Vec<u32>>,
    #[arg(long)]
    no_spare_rooms: bool,
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    node_limit: Option<u64>,
    /// course_id,day,start_slot,attendance: observed counts for overflow checks.
    #[arg(long)]
    actuals: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
struct Settings {
    #[serde(flatten)]
    allocation: AllocationConfig,
    demand: DemandSource,
}

fn read_timetable(path: &Path, source: DemandSource) -> Result<Vec<CourseMeeting>> {
    let mut cols = vec!["course_id", "day", "start_slot", "duration_slots", "enrolment"];
    if source == DemandSource::Predicted {
        cols.push("predicted_attendance");
    }
    let t = Table::read(path, &cols)?;
    (0..t.len())
        .map(|i| {
            let enrolment: u32 = t.field(i, "enrolment", io::parse_num)?;
            let attendance = match source {
                DemandSource::Predicted => t.field(i, "predicted_attendance", |s| {
                    let v = io::parse_f64(s)?;
                    if v < 0.0 {
                        return Err(anyhow!("attendance {v} is negative"));
                    }
                    Ok(v)
                })?,
                DemandSource::Enrolment => f64::from(enrolment),
            };
            let positive = |s: &str| {
                let v: usize = io::parse_num(s)?;
                if v == 0 {
                    return Err(anyhow!("must be at least 1"));
                }
                Ok(v)
            };
            Ok(CourseMeeting {
                course_id: t.field(i, "course_id", |s| Ok(s.to_string()))?,
                day: t.field(i, "day", io::parse_num)?,
                start_slot: t.field(i, "start_slot", positive)?,
                duration: t.field(i, "duration_slots", positive)?,
                attendance,
                enrolment,
            })
        })
        .collect()
}

fn read_rooms(path: &Path) -> Result<Vec<Room>> {
    let t = Table::read(path, &["room_id", "capacity"])?;
    let rooms = (0..t.len())
        .map(|i| {
            let id = t.field(i, "room_id", |s| Ok(s.to_string()))?;
            let cap = t.field(i, "capacity", |s| {
                let v: u32 = io::parse_num(s)?;
                if v == 0 {
                    return Err(anyhow!("capacity must be positive"));
                }
                Ok(v)
            })?;
            Ok(Room::new(id, cap)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut seen = std::collections::HashSet::new();
    if let Some(r) = rooms.iter().find(|r| !seen.insert(r.id.as_str())) {
        return Err(input_error(format!("{}: room {} is listed twice", path.display(), r.id)));
    }
    Ok(rooms)
}

type MeetingKey = (String, u32, usize);

fn read_actuals(path: &Path) -> Result<HashMap<MeetingKey, f64>> {
    let t = Table::read(path, &["course_id", "day", "start_slot", "attendance"])?;
    let mut out = HashMap::new();
    for i in 0..t.len() {
        let key = (
            t.field(i, "course_id", |s| Ok(s.to_string()))?,
            t.field(i, "day", io::parse_num)?,
            t.field(i, "start_slot", io::parse_num)?,
        );
        out.insert(key, t.field(i, "attendance", io::parse_f64)?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct MeetingPlacement {
    course_id: String,
    start_slot: usize,
    duration_slots: usize,
    demand: u32,
    room_id: String,
    capacity: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    actual: Option<f64>,
}

#[derive(Serialize)]
struct DayPlan {
    day: u32,
    total_cost: u64,
    optimal: bool,
    meetings: Vec<MeetingPlacement>,
    /// Course occupying each slot of each room in use.
    grid: BTreeMap<String, Vec<Option<String>>>,
}

#[derive(Serialize)]
struct Overflow {
    fraction: f64,
    overflowing: usize,
    known: usize,
}

#[derive(Serialize)]
struct PlanReport {
    total_cost: u64,
    optimal: bool,
    days: Vec<DayPlan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    overflow: Option<Overflow>,
}

fn day_plan(day: u32, meetings: &[CourseMeeting], plan: &AllocationPlan, actuals: &[Option<f64>]) -> DayPlan {
    let placements = meetings
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let r = &plan.rooms[plan.assignment[i]];
            MeetingPlacement {
                course_id: m.course_id.clone(),
                start_slot: m.start_slot,
                duration_slots: m.duration,
                demand: plan.demands[i],
                room_id: r.id.clone(),
                capacity: r.capacity,
                actual: actuals[i],
            }
        })
        .collect();
    let grid = plan
        .grid
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().any(Option::is_some))
        .map(|(j, row)| {
            let cells = row.iter().map(|c| c.map(|i| meetings[i].course_id.clone())).collect();
            (plan.rooms[j].id.clone(), cells)
        })
        .collect();
    DayPlan {
        day,
        total_cost: plan.total_cost,
        optimal: plan.optimal,
        meetings: placements,
        grid,
    }
}

pub fn run(args: AllocateArgs) -> Result<()> {
    let mut s: Settings = io::load_config(args.common.config.as_deref())?;
    let a = &mut s.allocation;
    if let Some(v) = args.margin {
        a.margin = v;
    }
    if let Some(v) = args.spare_rooms {
        a.spare_rooms = v;
    }
    if args.no_spare_rooms {
        a.spare_rooms.clear();
    }
    if let Some(v) = args.slots {
        a.slots = v;
    }
    if let Some(v) = args.node_limit {
        a.node_limit = v;
    }
    if let Some(v) = args.demand {
        s.demand = v;
    }

    let mut run = Run::start("allocate-rooms", &args.common.out_dir, args.common.seed)?;
    run.input(&args.timetable);
    run.input(&args.rooms);
    let meetings = read_timetable(&args.timetable, s.demand)?;
    let rooms = read_rooms(&args.rooms)?;
    let actuals = match &args.actuals {
        Some(p) => {
            run.input(p);
            Some(read_actuals(p)?)
        }
        None => None,
    };

    let mut by_day: BTreeMap<u32, Vec<CourseMeeting>> = BTreeMap::new();
    for m in meetings {
        by_day.entry(m.day).or_default().push(m);
    }
    let cfg = &s.allocation;
    let plans = by_day
        .par_iter()
        .map(|(&day, ms)| {
            classroom::allocate(ms, &rooms, cfg).map_err(|e| anyhow!(e).context(format!("day {day}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut w = run.csv_writer("assignments.csv")?;
    w.write_record(["day", "course_id", "start_slot", "duration_slots", "demand", "room_id", "capacity"])?;
    let mut days = Vec::new();
    let (mut overflowing, mut known) = (0, 0);
    for ((&day, ms), plan) in by_day.iter().zip(&plans) {
        debug_assert!(classroom::check_plan(ms, plan).is_ok());
        let acts: Vec<Option<f64>> = ms
            .iter()
            .map(|m| {
                actuals
                    .as_ref()
                    .and_then(|a| a.get(&(m.course_id.clone(), m.day, m.start_slot)).copied())
            })
            .collect();
        if actuals.is_some() {
            let rep = classroom::overflow_report(plan, &acts)?;
            overflowing += rep.overflowing.len();
            known += ms.len() - rep.missing.len();
        }
        for (i, m) in ms.iter().enumerate() {
            let r = &plan.rooms[plan.assignment[i]];
            w.write_record([
                day.to_string(),
                m.course_id.clone(),
                m.start_slot.to_string(),
                m.duration.to_string(),
                plan.demands[i].to_string(),
                r.id.clone(),
                r.capacity.to_string(),
            ])?;
        }
        days.push(day_plan(day, ms, plan, &acts));
    }
    w.flush()?;
    let report = PlanReport {
        total_cost: plans.iter().map(|p| p.total_cost).sum(),
        optimal: plans.iter().all(|p| p.optimal),
        days,
        overflow: actuals.as_ref().map(|_| Overflow {
            fraction: if known == 0 { 0.0 } else { overflowing as f64 / known as f64 },
            overflowing,
            known,
        }),
    };
    if !report.optimal {
        log::warn!("node limit reached; the plan is feasible but may not be optimal");
    }
    run.write_json("plan.json", &report)?;
    run.finish(&s)
}
