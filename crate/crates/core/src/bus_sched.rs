//! Passenger wait under a bus timetable with finite capacities, and a genetic
//! search over headways.
//!
//! Time is in minutes. Demand is a per-minute arrival rate, constant within
//! each minute, over the window `[t_s, t_e]`. Bus `i` leaves at `d_i` and takes
//! up to `C_i` passengers; whoever does not fit waits for the next bus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const TIME_EPS: f64 = 1e-9;

/// Centred moving average. The window covers `(w-1)/2` minutes before and
/// `w/2` after each point and shrinks at the series edges.
pub fn moving_average(counts: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::invalid("smoothing window must be positive"));
    }
    let before = (window - 1) / 2;
    let after = window / 2;
    let mut prefix = Vec::with_capacity(counts.len() + 1);
    prefix.push(0.0);
    for &c in counts {
        prefix.push(prefix.last().unwrap() + c);
    }
    Ok((0..counts.len())
        .map(|t| {
            let lo = t.saturating_sub(before);
            let hi = (t + after + 1).min(counts.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    /// Window start `t_s` in minutes.
    pub start: f64,
    /// Arrival rate per minute; minute `k` covers `[start + k, start + k + 1)`.
    pub lambda: Vec<f64>,
    #[serde(skip)]
    mass: Vec<f64>,
    #[serde(skip)]
    moment: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedDemand {
    pub profile: DemandProfile,
    pub raw_total: f64,
    /// Differs from `raw_total` only through edge effects.
    pub smoothed_total: f64,
}

pub fn smooth_arrivals(counts: &[f64], window: usize, start: f64) -> Result<SmoothedDemand> {
    let smoothed = moving_average(counts, window)?;
    let profile = DemandProfile::new(start, smoothed)?;
    Ok(SmoothedDemand {
        raw_total: counts.iter().sum(),
        smoothed_total: profile.total(),
        profile,
    })
}

impl DemandProfile {
    pub fn new(start: f64, lambda: Vec<f64>) -> Result<Self> {
        if !start.is_finite() {
            return Err(Error::invalid("window start must be finite"));
        }
        if let Some(k) = lambda.iter().position(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::invalid(format!("arrival rate at minute {k} must be finite and non-negative")));
        }
        let mut mass = vec![0.0; lambda.len() + 1];
        let mut moment = vec![0.0; lambda.len() + 1];
        for (k, &l) in lambda.iter().enumerate() {
            mass[k + 1] = mass[k] + l;
            moment[k + 1] = moment[k] + l * (start + k as f64 + 0.5);
        }
        Ok(Self {
            start,
            lambda,
            mass,
            moment,
        })
    }

    pub fn end(&self) -> f64 {
        self.start + self.lambda.len() as f64
    }

    pub fn total(&self) -> f64 {
        *self.mass.last().unwrap_or(&0.0)
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let u = (x - self.start).clamp(0.0, self.lambda.len() as f64);
        let k = (u.floor() as usize).min(self.lambda.len().saturating_sub(1));
        (k, self.start + u)
    }

    /// Passengers arriving in `[start, x]`.
    pub fn cumulative(&self, x: f64) -> f64 {
        if self.lambda.is_empty() {
            return 0.0;
        }
        let (k, x) = self.locate(x);
        self.mass[k] + self.lambda[k] * (x - self.start - k as f64)
    }

    /// `∫ t λ(t) dt` over `[start, x]`.
    fn first_moment(&self, x: f64) -> f64 {
        if self.lambda.is_empty() {
            return 0.0;
        }
        let (k, x) = self.locate(x);
        let lo = self.start + k as f64;
        self.moment[k] + self.lambda[k] * (x * x - lo * lo) / 2.0
    }

    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        self.cumulative(b) - self.cumulative(a)
    }

    /// Person-minutes spent by arrivals in `[a, b]` waiting until `b`.
    fn wait_until(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let w = b * self.mass_between(a, b) - (self.first_moment(b) - self.first_moment(a));
        w.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusFleet {
    pub capacities: Vec<f64>,
}

impl BusFleet {
    pub fn new(capacities: Vec<f64>) -> Result<Self> {
        if capacities.is_empty() {
            return Err(Error::invalid("fleet needs at least one bus"));
        }
        if let Some(i) = capacities.iter().position(|c| !(*c > 0.0)) {
            return Err(Error::invalid(format!("bus {} must have positive capacity", i + 1)));
        }
        Ok(Self { capacities })
    }

    pub fn uniform(buses: usize, capacity: f64) -> Result<Self> {
        Self::new(vec![capacity; buses])
    }

    pub fn len(&self) -> usize {
        self.capacities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacities.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusSchedule {
    pub dispatch: Vec<f64>,
}

impl BusSchedule {
    pub fn new(dispatch: Vec<f64>) -> Result<Self> {
        if dispatch.is_empty() {
            return Err(Error::invalid("schedule needs at least one dispatch"));
        }
        if dispatch.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("dispatch times must be finite"));
        }
        if let Some(i) = dispatch.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::invalid(format!("dispatch {} precedes dispatch {}", i + 2, i + 1)));
        }
        Ok(Self { dispatch })
    }

    /// Forward construction `d_i = d_{i-1} + H_i` from `t_s`, last bus pinned at `t_e`.
    pub fn from_headways(t_s: f64, headways: &[f64], t_e: f64) -> Self {
        let mut dispatch = Vec::with_capacity(headways.len() + 1);
        let mut t = t_s;
        for h in headways {
            t += h;
            dispatch.push(t);
        }
        dispatch.push(t_e);
        Self { dispatch }
    }

    pub fn headways(&self, t_s: f64) -> Vec<f64> {
        let mut prev = t_s;
        self.dispatch
            .iter()
            .map(|&d| {
                let h = d - prev;
                prev = d;
                h
            })
            .collect()
    }

    /// Total minutes by which headways fall outside `[h_min, h_max]`.
    pub fn headway_violation(&self, t_s: f64, h_min: f64, h_max: f64) -> f64 {
        self.headways(t_s)
            .iter()
            .map(|&h| (h_min - h).max(0.0) + (h - h_max).max(0.0))
            .sum()
    }
}

fn check_inputs(schedule: &BusSchedule, demand: &DemandProfile) -> Result<()> {
    let first = schedule.dispatch[0];
    let last = *schedule.dispatch.last().unwrap();
    if first < demand.start - TIME_EPS {
        return Err(Error::invalid(format!("dispatch {first} precedes the window start {}", demand.start)));
    }
    if (last - demand.end()).abs() > TIME_EPS {
        return Err(Error::invalid(format!("last dispatch {last} must equal the window end {}", demand.end())));
    }
    Ok(())
}

fn check_fleet(schedule: &BusSchedule, fleet: &BusFleet) -> Result<()> {
    if fleet.len() != schedule.dispatch.len() {
        return Err(Error::DimensionMismatch {
            expected: schedule.dispatch.len(),
            found: fleet.len(),
        });
    }
    Ok(())
}

fn w_first_unchecked(dispatch: &[f64], demand: &DemandProfile) -> f64 {
    let mut prev = demand.start;
    let mut total = 0.0;
    for &d in dispatch {
        total += demand.wait_until(prev, d);
        prev = d;
    }
    total
}

fn leftover_unchecked(dispatch: &[f64], demand: &DemandProfile, capacities: &[f64]) -> Vec<f64> {
    let mut n = vec![0.0; dispatch.len()];
    let mut prev = demand.start;
    for i in 1..dispatch.len() {
        let boarded_interval = demand.mass_between(prev, dispatch[i - 1]);
        n[i] = (n[i - 1] + boarded_interval - capacities[i - 1]).max(0.0);
        prev = dispatch[i - 1];
    }
    n
}

fn w_left_unchecked(dispatch: &[f64], demand: &DemandProfile, capacities: &[f64]) -> f64 {
    let n = leftover_unchecked(dispatch, demand, capacities);
    (1..dispatch.len()).map(|i| n[i] * (dispatch[i] - dispatch[i - 1])).sum()
}

/// Person-minutes from each arrival to the first bus after it.
pub fn w_first(schedule: &BusSchedule, demand: &DemandProfile) -> Result<f64> {
    check_inputs(schedule, demand)?;
    Ok(w_first_unchecked(&schedule.dispatch, demand))
}

/// Passengers still waiting when each bus arrives, having missed earlier buses.
pub fn leftover_counts(schedule: &BusSchedule, demand: &DemandProfile, fleet: &BusFleet) -> Result<Vec<f64>> {
    check_inputs(schedule, demand)?;
    check_fleet(schedule, fleet)?;
    Ok(leftover_unchecked(&schedule.dispatch, demand, &fleet.capacities))
}

/// Extra person-minutes of passengers who missed a full bus.
pub fn w_left(schedule: &BusSchedule, demand: &DemandProfile, fleet: &BusFleet) -> Result<f64> {
    check_inputs(schedule, demand)?;
    check_fleet(schedule, fleet)?;
    Ok(w_left_unchecked(&schedule.dispatch, demand, &fleet.capacities))
}

pub fn total_wait(schedule: &BusSchedule, demand: &DemandProfile, fleet: &BusFleet) -> Result<f64> {
    check_inputs(schedule, demand)?;
    check_fleet(schedule, fleet)?;
    Ok(w_first_unchecked(&schedule.dispatch, demand) + w_left_unchecked(&schedule.dispatch, demand, &fleet.capacities))
}

pub fn avg_wait_per_passenger(schedule: &BusSchedule, demand: &DemandProfile, fleet: &BusFleet) -> Result<f64> {
    let total = total_wait(schedule, demand, fleet)?;
    let passengers = demand.total();
    Ok(if passengers > 0.0 { total / passengers } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub max_generations: usize,
    /// Stop after this many generations without improvement.
    pub stall_halt: usize,
    pub crossover_prob: f64,
    /// Per-gene probability of uniform replacement.
    pub mutation_prob: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Best individuals copied unchanged into the next generation.
    pub elite: usize,
    /// Penalty per minute of headway violation, per passenger.
    pub penalty_weight: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            max_generations: 1000,
            stall_halt: 100,
            crossover_prob: 0.8,
            mutation_prob: 0.2,
            h_min: 1.0,
            h_max: 60.0,
            elite: 2,
            penalty_weight: 10.0,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::invalid("population must hold at least 2 individuals"));
        }
        if self.elite >= self.population {
            return Err(Error::invalid("elite count must be below the population size"));
        }
        for (name, p) in [("crossover", self.crossover_prob), ("mutation", self.mutation_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} probability must lie in [0, 1], got {p}")));
            }
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_max && self.h_max.is_finite()) {
            return Err(Error::invalid(format!(
                "headway bounds must satisfy 0 < h_min <= h_max, got [{}, {}]",
                self.h_min, self.h_max
            )));
        }
        if !(self.penalty_weight >= 0.0) {
            return Err(Error::invalid("penalty weight must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub schedule: BusSchedule,
    /// Total wait plus any penalty.
    pub fitness: f64,
    pub total_wait: f64,
    /// True when the returned schedule breaks a headway bound.
    pub penalized: bool,
    /// Best fitness after each generation, starting with the initial population.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

struct Evaluator<'a> {
    demand: &'a DemandProfile,
    capacities: &'a [f64],
    cfg: &'a GaConfig,
    dispatch: Vec<f64>,
    evaluations: usize,
}

impl Evaluator<'_> {
    /// Returns (fitness, wait, violation).
    fn eval(&mut self, genes: &[f64]) -> (f64, f64, f64) {
        self.evaluations += 1;
        let t_e = self.demand.end();
        self.dispatch.clear();
        let mut t = self.demand.start;
        for h in genes {
            t += h;
            self.dispatch.push(t.min(t_e));
        }
        self.dispatch.push(t_e);
        let last = t_e - t;
        let violation = (self.cfg.h_min - last).max(0.0) + (last - self.cfg.h_max).max(0.0);
        let wait = w_first_unchecked(&self.dispatch, self.demand)
            + w_left_unchecked(&self.dispatch, self.demand, self.capacities);
        let penalty = self.cfg.penalty_weight * violation * self.demand.total();
        (wait + penalty, wait, violation)
    }
}

/// Genetic search over the first `B-1` headways; the last bus leaves at `t_e`.
pub fn ga_optimize(demand: &DemandProfile, fleet: &BusFleet, cfg: &GaConfig) -> Result<GaResult> {
    cfg.validate()?;
    let buses = fleet.len();
    let (t_s, t_e) = (demand.start, demand.end());
    let span = t_e - t_s;
    if buses == 1 {
        let schedule = BusSchedule::from_headways(t_s, &[], t_e);
        let wait = total_wait(&schedule, demand, fleet)?;
        return Ok(GaResult {
            penalized: schedule.headway_violation(t_s, cfg.h_min, cfg.h_max) > 0.0,
            schedule,
            fitness: wait,
            total_wait: wait,
            trace: Vec::new(),
            evaluations: 1,
        });
    }
    let b = buses as f64;
    if b * cfg.h_min > span + TIME_EPS || b * cfg.h_max < span - TIME_EPS {
        return Err(Error::Infeasible(format!(
            "{buses} buses cannot cover a {span}-minute window with headways in [{}, {}]",
            cfg.h_min, cfg.h_max
        )));
    }

    let genes = buses - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ev = Evaluator {
        demand,
        capacities: &fleet.capacities,
        cfg,
        dispatch: Vec::with_capacity(buses),
        evaluations: 0,
    };
    let draw = |rng: &mut ChaCha8Rng| {
        if cfg.h_max > cfg.h_min {
            rng.random_range(cfg.h_min..=cfg.h_max)
        } else {
            cfg.h_min
        }
    };

    let mut pop: Vec<Vec<f64>> = (0..cfg.population)
        .map(|_| (0..genes).map(|_| draw(&mut rng)).collect())
        .collect();
    let mut fit: Vec<f64> = pop.iter().map(|g| ev.eval(g).0).collect();

    let best_of = |fit: &[f64]| {
        fit.iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &f)| (i, f))
            .unwrap()
    };
    let (bi, bf) = best_of(&fit);
    let mut best = (pop[bi].clone(), bf);
    let mut trace = vec![bf];
    let mut stall = 0;

    for _ in 0..cfg.max_generations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]));
        let mut next: Vec<Vec<f64>> = order[..cfg.elite].iter().map(|&i| pop[i].clone()).collect();
        let tournament = |rng: &mut ChaCha8Rng| {
            let a = rng.random_range(0..pop.len());
            let b = rng.random_range(0..pop.len());
            if fit[a] <= fit[b] { a } else { b }
        };
        while next.len() < cfg.population {
            let pa = &pop[tournament(&mut rng)];
            let pb = &pop[tournament(&mut rng)];
            let (mut c1, mut c2) = (pa.clone(), pb.clone());
            if rng.random_bool(cfg.crossover_prob) {
                for g in 0..genes {
                    let alpha: f64 = rng.random();
                    c1[g] = alpha * pa[g] + (1.0 - alpha) * pb[g];
                    c2[g] = (1.0 - alpha) * pa[g] + alpha * pb[g];
                }
            }
            for child in [&mut c1, &mut c2] {
                for gene in child.iter_mut() {
                    if rng.random_bool(cfg.mutation_prob) {
                        *gene = draw(&mut rng);
                    }
                }
            }
            next.push(c1);
            if next.len() < cfg.population {
                next.push(c2);
            }
        }
        // elites keep their known fitness
        let mut next_fit: Vec<f64> = order[..cfg.elite].iter().map(|&i| fit[i]).collect();
        next_fit.extend(next[cfg.elite..].iter().map(|g| ev.eval(g).0));
        pop = next;
        fit = next_fit;

        let (bi, bf) = best_of(&fit);
        if bf < best.1 - 1e-9 * best.1.abs().max(1.0) {
            stall = 0;
        } else {
            stall += 1;
        }
        if bf < best.1 {
            best = (pop[bi].clone(), bf);
        }
        trace.push(best.1);
        if stall >= cfg.stall_halt {
            break;
        }
    }

    let (fitness, wait, violation) = ev.eval(&best.0);
    let schedule = BusSchedule {
        dispatch: ev.dispatch.clone(),
    };
    Ok(GaResult {
        schedule,
        fitness,
        total_wait: wait,
        penalized: violation > 0.0,
        trace,
        evaluations: ev.evaluations,
    })
}
