use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, Result};
use campus_core::carpark_opt::{self, PartitionOptConfig, SchemeCostTable};
use campus_core::markov_carpark::{
    self, BirthDeathSpec, DayDemand, InitialState, PartitionScheme, SharedDemandConfig, StateDistribution,
};
use campus_core::RateProfile;
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::forecast::read_rates;
use crate::io::{self, input_error, Run, Table};
use crate::Common;

#[derive(Args)]
pub struct SimulateArgs {
    /// JSON with capacity, epoch_minutes, hourly arrivals and departures,
    /// and optionally the initial number of parked vehicles.
    #[arg(long, conflicts_with = "rates")]
    spec: Option<PathBuf>,
    /// Hourly rates file as written by `cleanse` or `forecast`.
    #[arg(long, requires = "capacity")]
    rates: Option<PathBuf>,
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    epoch_minutes: Option<u32>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChainFile {
    capacity: usize,
    #[serde(default = "default_epoch")]
    epoch_minutes: u32,
    arrivals: Vec<f64>,
    departures: Vec<f64>,
    #[serde(default)]
    initial_state: usize,
}

fn default_epoch() -> u32 {
    5
}

#[derive(Serialize)]
struct SimulationSummary {
    total_rejections: f64,
    epochs: usize,
    final_mean_occupancy: f64,
    final_p_full: f64,
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let mut run = Run::start("simulate-carpark", &args.common.out_dir, args.common.seed)?;
    let mut chain = match (&args.spec, &args.rates) {
        (Some(p), _) => {
            run.input(p);
            io::read_json::<ChainFile>(p)?
        }
        (None, Some(p)) => {
            run.input(p);
            let r = read_rates(p)?;
            ChainFile {
                capacity: args.capacity.unwrap_or_default(),
                epoch_minutes: default_epoch(),
                arrivals: r.arrivals.values,
                departures: r.departures.values,
                initial_state: 0,
            }
        }
        (None, None) => return Err(input_error("give either --spec or --rates")),
    };
    if let Some(c) = args.capacity {
        chain.capacity = c;
    }
    if let Some(e) = args.epoch_minutes {
        chain.epoch_minutes = e;
    }
    if chain.initial_state > chain.capacity {
        return Err(input_error(format!(
            "initial state {} exceeds capacity {}",
            chain.initial_state, chain.capacity
        )));
    }
    let spec = BirthDeathSpec {
        capacity: chain.capacity,
        arrivals: RateProfile::hourly(chain.arrivals.clone())?,
        departures: RateProfile::hourly(chain.departures.clone())?,
        epoch_minutes: chain.epoch_minutes,
    };
    spec.validate()?;
    let pi0 = StateDistribution::point(chain.capacity + 1, chain.initial_state);
    let day = markov_carpark::simulate_day(&spec, &pi0)?;

    let mut w = run.csv_writer("trace.csv")?;
    w.write_record(["epoch_start", "p_full", "expected_rejections"])?;
    for e in &day.rejections.epochs {
        w.write_record([
            format!("{:.4}", e.epoch_start),
            format!("{:.9}", e.p_full),
            format!("{:.9}", e.expected_rejections),
        ])?;
    }
    w.flush()?;
    let last = day.final_state().unwrap_or(&pi0);
    run.write_json(
        "carpark_summary.json",
        &SimulationSummary {
            total_rejections: day.rejections.daily_total,
            epochs: day.rejections.epochs.len(),
            final_mean_occupancy: last.mean(),
            final_p_full: last.p_full(),
        },
    )?;
    run.finish(&chain)
}

#[derive(Args)]
pub struct SchemeTableArgs {
    /// Hourly rates (whole days); the last `--days` days are used.
    #[arg(long)]
    rates: PathBuf,
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    epoch_minutes: Option<u32>,
    #[arg(long)]
    subscribers: Option<u32>,
    #[arg(long)]
    p_in: Option<f64>,
    #[arg(long)]
    p_out: Option<f64>,
    #[arg(long)]
    diversion: Option<f64>,
    /// Private-vehicle shares to evaluate, e.g. `0.5,0.75,1`.
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct SchemeSettings {
    capacity: usize,
    days: usize,
    epoch_minutes: u32,
    shared: SharedDemandConfig,
    rho: Vec<f64>,
}

impl Default for SchemeSettings {
    fn default() -> Self {
        Self {
            capacity: 895,
            days: 5,
            epoch_minutes: 5,
            shared: SharedDemandConfig::default(),
            rho: markov_carpark::default_rho_grid(),
        }
    }
}

fn day_slice(p: &RateProfile, d: usize) -> Result<RateProfile> {
    Ok(RateProfile::hourly(p.values[d * 24..(d + 1) * 24].to_vec())?)
}

pub fn scheme_table(args: SchemeTableArgs) -> Result<()> {
    let mut s: SchemeSettings = io::load_config(args.common.config.as_deref())?;
    macro_rules! set {
        ($field:ident, $target:expr) => {
            if let Some(v) = args.$field {
                $target = v;
            }
        };
    }
    set!(capacity, s.capacity);
    set!(days, s.days);
    set!(epoch_minutes, s.epoch_minutes);
    set!(subscribers, s.shared.subscribers);
    set!(p_in, s.shared.p_in);
    set!(p_out, s.shared.p_out);
    set!(diversion, s.shared.diversion);
    set!(rho, s.rho);
    if s.rho.is_empty() {
        return Err(input_error("the scheme grid is empty"));
    }

    let mut run = Run::start("scheme-table", &args.common.out_dir, args.common.seed)?;
    run.input(&args.rates);
    let rates = read_rates(&args.rates)?;
    let have = rates.day_starts.len();
    if s.days == 0 || s.days > have {
        return Err(input_error(format!("need {} days of rates, file has {have}", s.days)));
    }
    let (mut pv, mut sv) = (Vec::new(), Vec::new());
    for d in have - s.days..have {
        let observed = DayDemand {
            arrivals: day_slice(&rates.arrivals, d)?,
            departures: day_slice(&rates.departures, d)?,
        };
        let split = markov_carpark::sv_demand_profile(&observed, &s.shared)?;
        pv.push(split.pv);
        sv.push(split.sv);
    }
    let schemes = s
        .rho
        .iter()
        .map(|&r| PartitionScheme::new(r, s.capacity))
        .collect::<campus_core::Result<Vec<_>>>()?;
    let results = schemes
        .par_iter()
        .map(|sc| markov_carpark::scheme_rejections(sc, &pv, &sv, InitialState::Empty, s.epoch_minutes))
        .collect::<campus_core::Result<Vec<_>>>()?;

    let mut w = run.csv_writer("scheme_table.csv")?;
    w.write_record(["day", "scheme", "rho", "spaces_sv", "r_pv", "r_sv"])?;
    for d in 0..s.days {
        for (j, (sc, r)) in schemes.iter().zip(&results).enumerate() {
            w.write_record([
                (d + 1).to_string(),
                (j + 1).to_string(),
                format!("{:.4}", sc.rho),
                sc.sv_capacity.to_string(),
                format!("{:.9}", r.r_pv[d]),
                format!("{:.9}", r.r_sv[d]),
            ])?;
        }
    }
    w.flush()?;
    run.finish(&s)
}

#[derive(Args)]
pub struct PartitionArgs {
    /// day,scheme,rho,spaces_sv,r_pv,r_sv (1-based day and scheme).
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    w_sv: Option<f64>,
    #[arg(long)]
    w_pv: Option<f64>,
    /// Daily lease price per space.
    #[arg(long)]
    m: Option<f64>,
    /// Revenue the window must strictly exceed.
    #[arg(long)]
    r: Option<f64>,
    #[command(flatten)]
    common: Common,
}

struct LoadedTable {
    table: SchemeCostTable,
    rho: Vec<f64>,
}

fn read_scheme_table(path: &std::path::Path) -> Result<LoadedTable> {
    let t = Table::read(path, &["day", "scheme", "spaces_sv", "r_pv", "r_sv"])?;
    let has_rho = t.column("rho").is_some();
    let mut cells: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    let mut spaces: BTreeMap<usize, (u32, f64)> = BTreeMap::new();
    let one_based = |s: &str| {
        let v: usize = io::parse_num(s)?;
        if v == 0 {
            return Err(anyhow!("indices start at 1"));
        }
        Ok(v - 1)
    };
    for i in 0..t.len() {
        let day = t.field(i, "day", one_based)?;
        let scheme = t.field(i, "scheme", one_based)?;
        let sp: u32 = t.field(i, "spaces_sv", io::parse_num)?;
        let rho = if has_rho { t.field(i, "rho", io::parse_f64)? } else { f64::NAN };
        let r_pv = t.field(i, "r_pv", io::parse_f64)?;
        let r_sv = t.field(i, "r_sv", io::parse_f64)?;
        if let Some(&(prev, _)) = spaces.get(&scheme) {
            if prev != sp {
                return Err(input_error(format!(
                    "{}: line {}: scheme {} leases {sp} spaces here but {prev} elsewhere",
                    path.display(),
                    t.line(i),
                    scheme + 1
                )));
            }
        }
        spaces.insert(scheme, (sp, rho));
        if cells.insert((day, scheme), (r_pv, r_sv)).is_some() {
            return Err(input_error(format!(
                "{}: line {}: duplicate row for day {} scheme {}",
                path.display(),
                t.line(i),
                day + 1,
                scheme + 1
            )));
        }
    }
    let days = cells.keys().map(|k| k.0 + 1).max().unwrap_or(0);
    let n = spaces.len();
    if spaces.keys().last().is_some_and(|&k| k + 1 != n) {
        return Err(input_error(format!("{}: scheme numbers are not contiguous from 1", path.display())));
    }
    let (mut r_pv, mut r_sv) = (vec![vec![0.0; n]; days], vec![vec![0.0; n]; days]);
    for d in 0..days {
        for j in 0..n {
            let &(p, s) = cells
                .get(&(d, j))
                .ok_or_else(|| input_error(format!("{}: no row for day {} scheme {}", path.display(), d + 1, j + 1)))?;
            r_pv[d][j] = p;
            r_sv[d][j] = s;
        }
    }
    Ok(LoadedTable {
        table: SchemeCostTable::new(r_sv, r_pv, spaces.values().map(|v| v.0).collect())?,
        rho: spaces.values().map(|v| v.1).collect(),
    })
}

#[derive(Serialize)]
struct DayChoice {
    day: usize,
    scheme: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    spaces_sv: u32,
    cost: f64,
}

#[derive(Serialize)]
struct DecisionReport {
    days: Vec<DayChoice>,
    total_cost: f64,
    revenue: f64,
    static_scheme: Option<usize>,
    static_cost: Option<f64>,
    normalized_ratio: Option<f64>,
}

pub fn optimize(args: PartitionArgs) -> Result<()> {
    let mut cfg: PartitionOptConfig = io::load_config(args.common.config.as_deref())?;
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = args.$field {
                cfg.$field = v;
            }
        };
    }
    set!(w_sv);
    set!(w_pv);
    set!(m);
    set!(r);
    cfg.validate()?;

    let mut run = Run::start("optimize-partition", &args.common.out_dir, args.common.seed)?;
    run.input(&args.table);
    let loaded = read_scheme_table(&args.table)?;
    let t = &loaded.table;
    cfg.days = t.days();
    let report = carpark_opt::compare_static_dynamic(t, &cfg)?;
    let days = report
        .dynamic
        .schemes
        .iter()
        .enumerate()
        .map(|(d, &j)| DayChoice {
            day: d + 1,
            scheme: j + 1,
            rho: Some(loaded.rho[j]).filter(|r| r.is_finite()),
            spaces_sv: t.spaces[j],
            cost: cfg.w_sv * t.r_sv[d][j] + cfg.w_pv * t.r_pv[d][j],
        })
        .collect();
    run.write_json(
        "decision.json",
        &DecisionReport {
            days,
            total_cost: report.dynamic.total_cost,
            revenue: report.dynamic.revenue,
            static_scheme: report.static_scheme.map(|j| j + 1),
            static_cost: report.static_cost,
            normalized_ratio: report.normalized_ratio,
        },
    )?;
    run.finish(&cfg)
}
