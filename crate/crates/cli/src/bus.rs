use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use campus_core::bus_queue::{self, PduRecord, QueueConfig, TieBreak};
use campus_core::bus_sched::{self, BusFleet, BusSchedule, DemandProfile, GaConfig};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::io::{self, input_error, Run, Table};
use crate::Common;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TieArg {
    FewerOnes,
    MoreOnes,
}

#[derive(Args)]
pub struct QueueArgs {
    /// timestamp,sensor_position,distance_cm (empty distance = no echo)
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    bin_minutes: Option<u32>,
    /// Fraction of in-band readings that marks a sensor as covered.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    band_low: Option<f64>,
    #[arg(long)]
    band_high: Option<f64>,
    #[arg(long)]
    persons_per_segment: Option<u32>,
    #[arg(long)]
    sensors: Option<usize>,
    /// How to resolve a vector equally far from two valid codes.
    #[arg(long, value_enum)]
    tie_break: Option<TieArg>,
    #[command(flatten)]
    common: Common,
}

fn read_pdu(path: &Path, sensors: usize) -> Result<Vec<PduRecord>> {
    let t = Table::read(path, &["timestamp", "sensor_position", "distance_cm"])?;
    (0..t.len())
        .map(|i| {
            let position = t.field(i, "sensor_position", |s| {
                let v: usize = io::parse_num(s)?;
                if v == 0 || v > sensors {
                    return Err(anyhow!("sensor position {v} outside 1..={sensors}"));
                }
                Ok(v)
            })?;
            let distance = t.field(i, "distance_cm", |s| {
                if s.is_empty() {
                    return Ok(None);
                }
                let v = io::parse_f64(s)?;
                if v < 0.0 {
                    return Err(anyhow!("distance {v} is negative"));
                }
                Ok(Some(v))
            })?;
            Ok(PduRecord {
                timestamp_ms: t.field(i, "timestamp", io::parse_millis)?,
                sensor_position: position,
                distance,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct QueueReport {
    bins: usize,
    empty_bins: usize,
    corrected_bins: usize,
    coverage: f64,
    mean_length: f64,
    max_length: u32,
}

pub fn infer_queue(args: QueueArgs) -> Result<()> {
    let mut cfg: QueueConfig = io::load_config(args.common.config.as_deref())?;
    macro_rules! set {
        ($field:ident, $target:expr) => {
            if let Some(v) = args.$field {
                $target = v;
            }
        };
    }
    set!(bin_minutes, cfg.bin_minutes);
    set!(threshold, cfg.detect_threshold);
    set!(band_low, cfg.positive_band.0);
    set!(band_high, cfg.positive_band.1);
    set!(persons_per_segment, cfg.persons_per_segment);
    set!(sensors, cfg.sensor_count);
    if let Some(t) = args.tie_break {
        cfg.tie_break = match t {
            TieArg::FewerOnes => TieBreak::FewerOnes,
            TieArg::MoreOnes => TieBreak::MoreOnes,
        };
    }
    cfg.validate()?;

    let mut run = Run::start("infer-queue", &args.common.out_dir, args.common.seed)?;
    run.input(&args.input);
    let records = read_pdu(&args.input, cfg.sensor_count)?;
    let series = bus_queue::infer_queue(&records, &cfg)?;

    let mut w = run.csv_writer("queue.csv")?;
    w.write_record(["bin_start", "queue_length", "raw_bits", "code_bits", "sensors_reporting"])?;
    for e in &series.estimates {
        w.write_record([
            io::format_millis(e.bin_start_ms),
            e.length.to_string(),
            e.raw.to_string(),
            e.code.to_string(),
            e.sensors_reporting.to_string(),
        ])?;
    }
    w.flush()?;
    let n = series.estimates.len();
    run.write_json(
        "queue_report.json",
        &QueueReport {
            bins: n,
            empty_bins: series.empty_bins,
            corrected_bins: series.estimates.iter().filter(|e| e.raw != e.code).count(),
            coverage: series.coverage,
            mean_length: if n == 0 {
                0.0
            } else {
                series.estimates.iter().map(|e| f64::from(e.length)).sum::<f64>() / n as f64
            },
            max_length: series.estimates.iter().map(|e| e.length).max().unwrap_or(0),
        },
    )?;
    run.finish(&cfg)
}

/// Minutes from `HH:MM` (since midnight) or a plain number.
fn parse_minute(raw: &str) -> Result<f64> {
    if let Some((h, m)) = raw.split_once(':') {
        let h: u32 = io::parse_num(h)?;
        let m: u32 = io::parse_num(m)?;
        return Ok(f64::from(h * 60 + m));
    }
    io::parse_f64(raw)
}

fn format_minute(m: f64) -> String {
    let secs = (m * 60.0).round() as i64;
    format!("{:02}:{:02}:{:02}", secs / 3600, secs / 60 % 60, secs % 60)
}

/// Arrivals per minute, one row per consecutive minute of the window.
fn read_demand(path: &Path) -> Result<(f64, Vec<f64>)> {
    let t = Table::read(path, &["minute", "arrivals"])?;
    if t.len() == 0 {
        return Err(input_error(format!("{}: no demand rows", path.display())));
    }
    let mut start = 0.0;
    let mut counts = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let m = t.field(i, "minute", parse_minute)?;
        if i == 0 {
            start = m;
        } else if m != start + i as f64 {
            return Err(input_error(format!(
                "{}: line {}: minutes must be consecutive (expected {})",
                path.display(),
                t.line(i),
                start + i as f64
            )));
        }
        counts.push(t.field(i, "arrivals", |s| {
            let v = io::parse_f64(s)?;
            if v < 0.0 {
                return Err(anyhow!("arrivals {v} is negative"));
            }
            Ok(v)
        })?);
    }
    Ok((start, counts))
}

fn read_fleet(path: &Path) -> Result<Vec<f64>> {
    let t = Table::read(path, &["capacity"])?;
    (0..t.len())
        .map(|i| {
            t.field(i, "capacity", |s| {
                let v = io::parse_f64(s)?;
                if v <= 0.0 {
                    return Err(anyhow!("capacity must be positive"));
                }
                Ok(v)
            })
        })
        .collect()
}

#[derive(Args)]
pub struct OptimizeArgs {
    /// minute,arrivals: per-minute arrival counts over the service window.
    #[arg(long)]
    demand: PathBuf,
    /// One row per bus in dispatch order with a `capacity` column.
    #[arg(long, conflicts_with_all = ["buses", "capacity"])]
    fleet: Option<PathBuf>,
    #[arg(long, requires = "capacity")]
    buses: Option<usize>,
    #[arg(long)]
    capacity: Option<f64>,
    /// Centred moving-average window (minutes) applied to the counts.
    #[arg(long)]
    smooth_window: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    max_generations: Option<usize>,
    #[arg(long)]
    stall_halt: Option<usize>,
    #[arg(long)]
    crossover_prob: Option<f64>,
    #[arg(long)]
    mutation_prob: Option<f64>,
    #[arg(long)]
    h_min: Option<f64>,
    #[arg(long)]
    h_max: Option<f64>,
    #[arg(long)]
    elite: Option<usize>,
    #[arg(long)]
    penalty_weight: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct BusSettings {
    smooth_window: usize,
    ga: GaConfig,
    buses: Option<usize>,
    capacity: Option<f64>,
}

impl Default for BusSettings {
    fn default() -> Self {
        Self {
            smooth_window: 15,
            ga: GaConfig::default(),
            buses: None,
            capacity: None,
        }
    }
}

#[derive(Serialize)]
struct WaitSummary {
    passengers_raw: f64,
    passengers_smoothed: f64,
    w_first: f64,
    w_left: f64,
    total_wait: f64,
    avg_wait: f64,
    /// Passengers left behind, summed over buses.
    n_left: f64,
    headway_violation: f64,
}

fn wait_summary(
    schedule: &BusSchedule,
    demand: &DemandProfile,
    fleet: &BusFleet,
    raw_total: f64,
    ga: &GaConfig,
) -> Result<WaitSummary> {
    let w_first = bus_sched::w_first(schedule, demand)?;
    let w_left = bus_sched::w_left(schedule, demand, fleet)?;
    Ok(WaitSummary {
        passengers_raw: raw_total,
        passengers_smoothed: demand.total(),
        w_first,
        w_left,
        total_wait: w_first + w_left,
        avg_wait: bus_sched::avg_wait_per_passenger(schedule, demand, fleet)?,
        n_left: bus_sched::leftover_counts(schedule, demand, fleet)?.iter().sum(),
        headway_violation: schedule.headway_violation(demand.start, ga.h_min, ga.h_max),
    })
}

fn write_schedule(
    run: &mut Run,
    schedule: &BusSchedule,
    demand: &DemandProfile,
    fleet: &BusFleet,
) -> Result<()> {
    let left = bus_sched::leftover_counts(schedule, demand, fleet)?;
    let heads = schedule.headways(demand.start);
    let mut w = run.csv_writer("schedule.csv")?;
    w.write_record(["bus", "dispatch_minute", "dispatch_time", "headway", "capacity", "carried_over"])?;
    for (i, &d) in schedule.dispatch.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            format!("{d:.4}"),
            format_minute(d),
            format!("{:.4}", heads[i]),
            fleet.capacities[i].to_string(),
            format!("{:.4}", left[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TracePoint {
    generation: usize,
    best_fitness: f64,
}

#[derive(Serialize)]
struct OptimizeReport {
    #[serde(flatten)]
    wait: WaitSummary,
    fitness: f64,
    penalized: bool,
    generations: usize,
    evaluations: usize,
}

pub fn optimize(args: OptimizeArgs) -> Result<()> {
    let mut s: BusSettings = io::load_config(args.common.config.as_deref())?;
    macro_rules! set {
        ($field:ident, $target:expr) => {
            if let Some(v) = args.$field {
                $target = v;
            }
        };
    }
    set!(smooth_window, s.smooth_window);
    set!(population, s.ga.population);
    set!(max_generations, s.ga.max_generations);
    set!(stall_halt, s.ga.stall_halt);
    set!(crossover_prob, s.ga.crossover_prob);
    set!(mutation_prob, s.ga.mutation_prob);
    set!(h_min, s.ga.h_min);
    set!(h_max, s.ga.h_max);
    set!(elite, s.ga.elite);
    set!(penalty_weight, s.ga.penalty_weight);
    if args.buses.is_some() {
        s.buses = args.buses;
    }
    if args.capacity.is_some() {
        s.capacity = args.capacity;
    }
    s.ga.seed = args.common.seed;
    s.ga.validate()?;

    let mut run = Run::start("optimize-bus", &args.common.out_dir, args.common.seed)?;
    run.input(&args.demand);
    let (start, counts) = read_demand(&args.demand)?;
    let fleet = match (&args.fleet, s.buses, s.capacity) {
        (Some(p), _, _) => {
            run.input(p);
            BusFleet::new(read_fleet(p)?)?
        }
        (None, Some(b), Some(c)) => BusFleet::uniform(b, c)?,
        _ => return Err(input_error("give --fleet, or --buses with --capacity")),
    };
    let smoothed = bus_sched::smooth_arrivals(&counts, s.smooth_window, start)?;
    let demand = &smoothed.profile;
    let result = bus_sched::ga_optimize(demand, &fleet, &s.ga)?;
    if result.penalized {
        log::warn!("best schedule still breaks the headway bounds");
    }

    write_schedule(&mut run, &result.schedule, demand, &fleet)?;
    let trace: Vec<TracePoint> = result
        .trace
        .iter()
        .enumerate()
        .map(|(generation, &best_fitness)| TracePoint { generation, best_fitness })
        .collect();
    run.write_json("ga_trace.json", &trace)?;
    run.write_json(
        "bus_summary.json",
        &OptimizeReport {
            wait: wait_summary(&result.schedule, demand, &fleet, smoothed.raw_total, &s.ga)?,
            fitness: result.fitness,
            penalized: result.penalized,
            generations: result.trace.len().saturating_sub(1),
            evaluations: result.evaluations,
        },
    )?;
    run.finish(&s)
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    demand: PathBuf,
    /// dispatch_minute[,capacity]: one row per bus; `HH:MM` also accepted.
    #[arg(long)]
    schedule: PathBuf,
    /// Capacity for every bus when the schedule has no capacity column.
    #[arg(long)]
    capacity: Option<f64>,
    #[arg(long)]
    smooth_window: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EvaluateSettings {
    smooth_window: usize,
    capacity: Option<f64>,
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let base: BusSettings = io::load_config(args.common.config.as_deref())?;
    let s = EvaluateSettings {
        smooth_window: args.smooth_window.unwrap_or(base.smooth_window),
        capacity: args.capacity.or(base.capacity),
    };
    let mut run = Run::start("evaluate-bus", &args.common.out_dir, args.common.seed)?;
    run.input(&args.demand);
    run.input(&args.schedule);
    let (start, counts) = read_demand(&args.demand)?;
    let t = Table::read(&args.schedule, &["dispatch_minute"])?;
    let has_cap = t.column("capacity").is_some();
    let mut dispatch = Vec::with_capacity(t.len());
    let mut caps = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        dispatch.push(t.field(i, "dispatch_minute", parse_minute)?);
        caps.push(match (has_cap, s.capacity) {
            (_, Some(c)) => c,
            (true, None) => t.field(i, "capacity", io::parse_f64)?,
            (false, None) => return Err(input_error("schedule has no capacity column; pass --capacity")),
        });
    }
    let schedule = BusSchedule::new(dispatch)?;
    let fleet = BusFleet::new(caps)?;
    let smoothed = bus_sched::smooth_arrivals(&counts, s.smooth_window, start)?;
    let summary = wait_summary(&schedule, &smoothed.profile, &fleet, smoothed.raw_total, &base.ga)?;
    run.write_json("bus_evaluation.json", &summary)?;
    run.finish(&s)
}
