//! Car park occupancy as a finite-capacity birth-death chain.
//!
//! Arrivals (rate λ) move the chain up one state, departures (rate μ) move it
//! down one; arrivals at state `C` are rejected. Rates are piecewise constant
//! per hour slot and the state distribution is advanced in fixed epochs with
//! `π ← π·exp(Q_k δt)`, evaluated by uniformization.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::{Error, RateProfile, Result};

/// Default neglected Poisson tail mass per transient step.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Largest uniformized rate × time handled in one Poisson sum; longer steps are split.
const MAX_POISSON_MEAN: f64 = 30.0;

/// Tridiagonal generator of the birth-death chain on states `0..=capacity`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub capacity: usize,
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Generator {
    pub fn states(&self) -> usize {
        self.capacity + 1
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.states();
        let mut q = vec![vec![0.0; n]; n];
        for i in 0..n {
            q[i][i] = self.diag[i];
            if i + 1 < n {
                q[i][i + 1] = self.upper[i];
                q[i + 1][i] = self.lower[i];
            }
        }
        q
    }

    /// Largest exit rate, the uniformization constant.
    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, d| m.max(-d))
    }

    /// `out = π·Q`.
    pub fn left_mul(&self, pi: &[f64], out: &mut [f64]) {
        let n = self.states();
        for j in 0..n {
            let mut s = pi[j] * self.diag[j];
            if j > 0 {
                s += pi[j - 1] * self.upper[j - 1];
            }
            if j + 1 < n {
                s += pi[j + 1] * self.lower[j];
            }
            out[j] = s;
        }
    }
}

/// Transition rate matrix with arrivals `lambda` and departures `mu` (per hour).
pub fn build_q_matrix(lambda: f64, mu: f64, capacity: usize) -> Result<Generator> {
    if !(lambda >= 0.0 && mu >= 0.0 && lambda.is_finite() && mu.is_finite()) {
        return Err(Error::invalid(format!(
            "rates must be finite and non-negative, got λ={lambda}, μ={mu}"
        )));
    }
    let n = capacity + 1;
    let upper = vec![lambda; capacity];
    let lower = vec![mu; capacity];
    let diag = (0..n)
        .map(|i| {
            let up = if i < capacity { lambda } else { 0.0 };
            let down = if i > 0 { mu } else { 0.0 };
            -(up + down)
        })
        .collect();
    Ok(Generator {
        capacity,
        lower,
        diag,
        upper,
    })
}

/// Probability vector over occupancy states `0..=C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution(pub Vec<f64>);

impl StateDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid("distribution must have at least one state"));
        }
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities sum to {s}, not 1")));
        }
        Ok(Self(p))
    }

    /// Point mass on `state`.
    pub fn point(states: usize, state: usize) -> Self {
        let mut p = vec![0.0; states];
        p[state] = 1.0;
        Self(p)
    }

    pub fn states(&self) -> usize {
        self.0.len()
    }

    /// Probability of the last (full) state.
    pub fn p_full(&self) -> f64 {
        *self.0.last().expect("non-empty distribution")
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().enumerate().map(|(i, p)| i as f64 * p).sum()
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        0.5 * self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// `π·exp(Q·dt)` by uniformization, neglecting at most `tail_tol` Poisson mass.
pub fn transient_step_with_tol(pi: &StateDistribution, q: &Generator, dt: f64, tail_tol: f64) -> Result<StateDistribution> {
    if pi.states() != q.states() {
        return Err(Error::DimensionMismatch {
            expected: q.states(),
            found: pi.states(),
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::invalid(format!("tail tolerance must lie in (0, 1), got {tail_tol}")));
    }
    let rate = q.max_exit_rate();
    if rate == 0.0 {
        return Ok(pi.clone());
    }
    let pieces = (rate * dt / MAX_POISSON_MEAN).ceil().max(1.0) as usize;
    let h = dt / pieces as f64;
    let tol = tail_tol / pieces as f64;
    let mean = rate * h;

    let n = q.states();
    let mut v = pi.0.clone();
    let mut term = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut acc = vec![0.0; n];
    for _ in 0..pieces {
        term.copy_from_slice(&v);
        acc.iter_mut().for_each(|a| *a = 0.0);
        let mut weight = (-mean).exp();
        let mut mass = 0.0;
        let mut k = 0usize;
        loop {
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += weight * t;
            }
            mass += weight;
            // Poisson tail beyond k, bounded by a geometric series once k+2 > mean
            let next = k as f64 + 1.0;
            if next + 1.0 > mean {
                let tail = weight * (mean / next) / (1.0 - mean / (next + 1.0));
                if tail < tol {
                    break;
                }
            }
            k += 1;
            if k > 100_000 {
                return Err(Error::Numerical("uniformization series did not converge".into()));
            }
            // term ← term·P with P = I + Q/rate
            q.left_mul(&term, &mut scratch);
            for (t, s) in term.iter_mut().zip(&scratch) {
                *t += s / rate;
                if *t < 0.0 {
                    *t = 0.0;
                }
            }
            weight *= mean / k as f64;
        }
        for (vi, a) in v.iter_mut().zip(&acc) {
            *vi = a / mass;
        }
    }
    Ok(StateDistribution(v))
}

pub fn transient_step(pi: &StateDistribution, q: &Generator, dt: f64) -> Result<StateDistribution> {
    transient_step_with_tol(pi, q, dt, DEFAULT_TAIL_TOL)
}

/// Stationary distribution `π_n ∝ (λ/μ)^n` of the constant-rate chain.
pub fn analytic_steady_state(lambda: f64, mu: f64, capacity: usize) -> Result<StateDistribution> {
    if !(mu > 0.0) {
        return Err(Error::invalid("steady state requires a positive departure rate"));
    }
    if lambda < 0.0 {
        return Err(Error::invalid("arrival rate must be non-negative"));
    }
    let n = capacity + 1;
    if lambda == 0.0 {
        return Ok(StateDistribution::point(n, 0));
    }
    let rho = lambda / mu;
    // weights relative to the largest term keep ρ^n finite
    let ln_rho = rho.ln();
    let top = if rho > 1.0 { capacity as f64 } else { 0.0 };
    let w: Vec<f64> = (0..n).map(|i| ((i as f64 - top) * ln_rho).exp()).collect();
    let s: f64 = w.iter().sum();
    Ok(StateDistribution(w.into_iter().map(|x| x / s).collect()))
}

/// Chain parameters for one day (or any horizon of whole hour slots).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthDeathSpec {
    pub capacity: usize,
    pub arrivals: RateProfile,
    pub departures: RateProfile,
    /// Epoch length in minutes; must divide the hour.
    pub epoch_minutes: u32,
}

impl BirthDeathSpec {
    pub fn new(capacity: usize, arrivals: RateProfile, departures: RateProfile) -> Result<Self> {
        let s = Self {
            capacity,
            arrivals,
            departures,
            epoch_minutes: 5,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.arrivals.len() != self.departures.len() {
            return Err(Error::DimensionMismatch {
                expected: self.arrivals.len(),
                found: self.departures.len(),
            });
        }
        if self.arrivals.slot_duration != 1.0 || self.departures.slot_duration != 1.0 {
            return Err(Error::invalid("rate profiles must use hourly slots"));
        }
        if self.epoch_minutes == 0 || 60 % self.epoch_minutes != 0 {
            return Err(Error::invalid(format!(
                "epoch of {} minutes does not divide the hour",
                self.epoch_minutes
            )));
        }
        for v in self.arrivals.values.iter().chain(&self.departures.values) {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::invalid("rates must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Epoch length in hours.
    pub fn epoch_hours(&self) -> f64 {
        f64::from(self.epoch_minutes) / 60.0
    }

    pub fn epochs_per_slot(&self) -> usize {
        (60 / self.epoch_minutes) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Hours since the start of the horizon.
    pub epoch_start: f64,
    /// Probability of being full at the start of the epoch.
    pub p_full: f64,
    pub expected_rejections: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionTrace {
    pub epochs: Vec<EpochRecord>,
    pub daily_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayRun {
    /// Distribution at the end of every epoch.
    pub trace: Vec<StateDistribution>,
    pub rejections: RejectionTrace,
}

impl DayRun {
    pub fn final_state(&self) -> Option<&StateDistribution> {
        self.trace.last()
    }
}

/// Advances the chain epoch by epoch through every hour slot.
///
/// Each epoch's expected rejections are `π_C(start of epoch) · λ(k) · δt`.
pub fn simulate_day(spec: &BirthDeathSpec, pi0: &StateDistribution) -> Result<DayRun> {
    spec.validate()?;
    if pi0.states() != spec.capacity + 1 {
        return Err(Error::DimensionMismatch {
            expected: spec.capacity + 1,
            found: pi0.states(),
        });
    }
    let dt = spec.epoch_hours();
    let per_slot = spec.epochs_per_slot();
    let mut pi = pi0.clone();
    let mut trace = Vec::with_capacity(spec.arrivals.len() * per_slot);
    let mut epochs = Vec::with_capacity(trace.capacity());
    let mut total = 0.0;
    for (k, (&lambda, &mu)) in spec.arrivals.values.iter().zip(&spec.departures.values).enumerate() {
        let q = build_q_matrix(lambda, mu, spec.capacity)?;
        for n in 0..per_slot {
            let p_full = pi.p_full();
            let r = p_full * lambda * dt;
            total += r;
            epochs.push(EpochRecord {
                epoch_start: k as f64 + n as f64 * dt,
                p_full,
                expected_rejections: r,
            });
            pi = transient_step(&pi, &q, dt)?;
            trace.push(pi.clone());
        }
    }
    Ok(DayRun {
        trace,
        rejections: RejectionTrace {
            epochs,
            daily_total: total,
        },
    })
}

/// Daily expected rejections only; skips storing the trace.
pub fn daily_rejections(spec: &BirthDeathSpec, pi0: &StateDistribution) -> Result<f64> {
    spec.validate()?;
    if pi0.states() != spec.capacity + 1 {
        return Err(Error::DimensionMismatch {
            expected: spec.capacity + 1,
            found: pi0.states(),
        });
    }
    let dt = spec.epoch_hours();
    let mut pi = pi0.clone();
    let mut total = 0.0;
    for (&lambda, &mu) in spec.arrivals.values.iter().zip(&spec.departures.values) {
        let q = build_q_matrix(lambda, mu, spec.capacity)?;
        for _ in 0..spec.epochs_per_slot() {
            total += pi.p_full() * lambda * dt;
            pi = transient_step(&pi, &q, dt)?;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionScheme {
    /// Fraction of spaces reserved for private vehicles.
    pub rho: f64,
    pub pv_capacity: usize,
    pub sv_capacity: usize,
}

impl PartitionScheme {
    /// `pv_capacity = round(ρ·total)`, the remainder goes to shared vehicles.
    pub fn new(rho: f64, total_capacity: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid(format!("ρ must lie in [0, 1], got {rho}")));
        }
        let pv = ((rho * total_capacity as f64).round() as usize).min(total_capacity);
        Ok(Self {
            rho,
            pv_capacity: pv,
            sv_capacity: total_capacity - pv,
        })
    }
}

/// Default scheme grid ρ ∈ {0.05, 0.10, …, 1.00}.
pub fn default_rho_grid() -> Vec<f64> {
    (1..=20).map(|i| f64::from(i) * 0.05).collect()
}

/// Arrival and departure profile of one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayDemand {
    pub arrivals: RateProfile,
    pub departures: RateProfile,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Point mass on the empty state at the start of each day.
    #[default]
    Empty,
}

impl InitialState {
    pub fn distribution(&self, capacity: usize) -> StateDistribution {
        match self {
            InitialState::Empty => StateDistribution::point(capacity + 1, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeRejections {
    pub r_pv: Vec<f64>,
    pub r_sv: Vec<f64>,
}

/// Runs the private and shared partitions as isolated chains for every day.
pub fn scheme_rejections(
    scheme: &PartitionScheme,
    pv_demand: &[DayDemand],
    sv_demand: &[DayDemand],
    initial: InitialState,
    epoch_minutes: u32,
) -> Result<SchemeRejections> {
    if pv_demand.len() != sv_demand.len() {
        return Err(Error::DimensionMismatch {
            expected: pv_demand.len(),
            found: sv_demand.len(),
        });
    }
    let run = |cap: usize, d: &DayDemand| -> Result<f64> {
        let spec = BirthDeathSpec {
            capacity: cap,
            arrivals: d.arrivals.clone(),
            departures: d.departures.clone(),
            epoch_minutes,
        };
        daily_rejections(&spec, &initial.distribution(cap))
    };
    let r_pv = pv_demand
        .iter()
        .map(|d| run(scheme.pv_capacity, d))
        .collect::<Result<Vec<_>>>()?;
    let r_sv = sv_demand
        .iter()
        .map(|d| run(scheme.sv_capacity, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(SchemeRejections { r_pv, r_sv })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SharedDemandConfig {
    pub subscribers: u32,
    pub p_in: f64,
    pub p_out: f64,
    /// Share of current users that switch to shared vehicles.
    pub diversion: f64,
}

impl Default for SharedDemandConfig {
    fn default() -> Self {
        Self {
            subscribers: 200,
            p_in: 0.5,
            p_out: 0.4,
            diversion: 0.2,
        }
    }
}

impl SharedDemandConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.diversion) {
            return Err(Error::invalid(format!("diversion must lie in [0, 1], got {}", self.diversion)));
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return Err(Error::invalid("subscriber probabilities must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDemand {
    pub sv: DayDemand,
    pub pv: DayDemand,
}

fn scale(p: &RateProfile, f: f64, add: f64) -> RateProfile {
    RateProfile {
        slot_duration: p.slot_duration,
        values: p.values.iter().map(|v| v * f + add).collect(),
    }
}

/// Splits observed demand into shared and private classes using the expected
/// subscriber rates (`subscribers · p` per hour).
pub fn sv_demand_profile(observed: &DayDemand, cfg: &SharedDemandConfig) -> Result<SplitDemand> {
    cfg.validate()?;
    let d = cfg.diversion;
    let extra_in = f64::from(cfg.subscribers) * cfg.p_in;
    let extra_out = f64::from(cfg.subscribers) * cfg.p_out;
    Ok(SplitDemand {
        sv: DayDemand {
            arrivals: scale(&observed.arrivals, d, extra_in),
            departures: scale(&observed.departures, d, extra_out),
        },
        pv: DayDemand {
            arrivals: scale(&observed.arrivals, 1.0 - d, 0.0),
            departures: scale(&observed.departures, 1.0 - d, 0.0),
        },
    })
}

/// As [`sv_demand_profile`] but with each hour's subscriber counts drawn from
/// `B(subscribers, p)`.
pub fn sample_sv_demand_profile<R: Rng + ?Sized>(
    observed: &DayDemand,
    cfg: &SharedDemandConfig,
    rng: &mut R,
) -> Result<SplitDemand> {
    cfg.validate()?;
    let n = u64::from(cfg.subscribers);
    let b_in = Binomial::new(n, cfg.p_in).map_err(|e| Error::invalid(e.to_string()))?;
    let b_out = Binomial::new(n, cfg.p_out).map_err(|e| Error::invalid(e.to_string()))?;
    let mut split = sv_demand_profile(observed, &SharedDemandConfig { subscribers: 0, ..*cfg })?;
    for v in &mut split.sv.arrivals.values {
        *v += b_in.sample(rng) as f64;
    }
    for v in &mut split.sv.departures.values {
        *v += b_out.sample(rng) as f64;
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Classic fixed-step RK4 on π' = πQ with many small steps.
    pub(crate) fn rk4_oracle(pi: &[f64], q: &[Vec<f64>], t: f64, steps: usize) -> Vec<f64> {
        let n = pi.len();
        let deriv = |p: &[f64]| -> Vec<f64> { (0..n).map(|j| (0..n).map(|i| p[i] * q[i][j]).sum()).collect() };
        let h = t / steps as f64;
        let mut p = pi.to_vec();
        for _ in 0..steps {
            let k1 = deriv(&p);
            let a: Vec<f64> = p.iter().zip(&k1).map(|(x, k)| x + 0.5 * h * k).collect();
            let k2 = deriv(&a);
            let b: Vec<f64> = p.iter().zip(&k2).map(|(x, k)| x + 0.5 * h * k).collect();
            let k3 = deriv(&b);
            let c: Vec<f64> = p.iter().zip(&k3).map(|(x, k)| x + h * k).collect();
            let k4 = deriv(&c);
            for i in 0..n {
                p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        p
    }

    #[test]
    fn q_matrix_examples() {
        let q = build_q_matrix(3.0, 2.0, 1).unwrap().to_dense();
        assert_eq!(q, vec![vec![-3.0, 3.0], vec![2.0, -2.0]]);
        let q = build_q_matrix(0.0, 2.0, 4).unwrap().to_dense();
        assert!(q[0].iter().all(|&v| v == 0.0));
        for row in build_q_matrix(7.5, 1.25, 6).unwrap().to_dense() {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
        assert!(build_q_matrix(-1.0, 1.0, 3).is_err());
        assert_eq!(build_q_matrix(1.0, 1.0, 0).unwrap().to_dense(), vec![vec![0.0]]);
    }

    #[test]
    fn transient_step_examples() {
        let pi = StateDistribution(vec![0.2, 0.3, 0.5]);
        let q = build_q_matrix(0.0, 0.0, 2).unwrap();
        assert_eq!(transient_step(&pi, &q, 3.0).unwrap(), pi);

        let q = build_q_matrix(1.0, 1.0, 1).unwrap();
        let out = transient_step(&StateDistribution::point(2, 0), &q, 50.0).unwrap();
        assert!((out.0[0] - 0.5).abs() < 1e-12 && (out.0[1] - 0.5).abs() < 1e-12);

        let q = build_q_matrix(4.0, 2.0, 3).unwrap();
        let out = transient_step(&StateDistribution::point(4, 0), &q, 5.0 / 60.0).unwrap();
        let oracle = rk4_oracle(&[1.0, 0.0, 0.0, 0.0], &q.to_dense(), 5.0 / 60.0, 2000);
        for (a, b) in out.0.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn two_state_closed_form() {
        // p_1(t) = λ/(λ+μ) (1 - e^{-(λ+μ)t}) from the empty state
        let (l, m, t) = (3.0, 1.5, 0.4);
        let out = transient_step(&StateDistribution::point(2, 0), &build_q_matrix(l, m, 1).unwrap(), t).unwrap();
        let exact = l / (l + m) * (1.0 - (-(l + m) * t).exp());
        assert!((out.0[1] - exact).abs() < 1e-13);
    }

    #[test]
    fn steady_state_examples() {
        let s = analytic_steady_state(2.0, 2.0, 4).unwrap();
        assert!(s.0.iter().all(|p| (p - 0.2).abs() < 1e-15));
        let s = analytic_steady_state(2.0, 1.0, 2).unwrap();
        for (a, b) in s.0.iter().zip([1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(analytic_steady_state(0.0, 1.0, 3).unwrap().0, vec![1.0, 0.0, 0.0, 0.0]);
        assert!(analytic_steady_state(1.0, 0.0, 3).is_err());
        // large ratios stay finite
        let s = analytic_steady_state(500.0, 1.0, 900).unwrap();
        assert!((s.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn flat(v: f64, hours: usize) -> RateProfile {
        RateProfile::hourly(vec![v; hours]).unwrap()
    }

    #[test]
    fn no_rejections_when_never_full() {
        let spec = BirthDeathSpec::new(5, flat(0.0, 24), flat(3.0, 24)).unwrap();
        let run = simulate_day(&spec, &StateDistribution::point(6, 0)).unwrap();
        assert_eq!(run.rejections.daily_total, 0.0);
        assert_eq!(run.trace.len(), 24 * 12);
    }

    #[test]
    fn rejection_formula_full_state() {
        // one full-capacity epoch at 12 cars/hour rejects exactly one car
        let spec = BirthDeathSpec {
            capacity: 0,
            arrivals: flat(12.0, 1),
            departures: flat(0.0, 1),
            epoch_minutes: 5,
        };
        let run = simulate_day(&spec, &StateDistribution::point(1, 0)).unwrap();
        assert!((run.rejections.epochs[0].expected_rejections - 1.0).abs() < 1e-12);
        assert!((run.rejections.daily_total - 12.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_and_epoch_checks() {
        let spec = BirthDeathSpec::new(3, flat(1.0, 2), flat(1.0, 2)).unwrap();
        assert!(matches!(simulate_day(&spec, &StateDistribution::point(3, 0)), Err(Error::DimensionMismatch { .. })));
        assert!(BirthDeathSpec::new(3, flat(1.0, 2), flat(1.0, 3)).is_err());
        let bad = BirthDeathSpec { epoch_minutes: 7, ..spec };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejections_bounded_by_arrivals() {
        let arr = RateProfile::hourly((0..24).map(|h| if (7..10).contains(&h) { 30.0 } else { 2.0 }).collect()).unwrap();
        let spec = BirthDeathSpec::new(10, arr.clone(), flat(5.0, 24)).unwrap();
        let run = simulate_day(&spec, &StateDistribution::point(11, 0)).unwrap();
        for e in &run.rejections.epochs {
            let k = e.epoch_start.floor() as usize;
            assert!(e.expected_rejections >= 0.0 && e.expected_rejections <= arr.values[k] / 12.0 + 1e-12);
        }
        assert!((daily_rejections(&spec, &StateDistribution::point(11, 0)).unwrap() - run.rejections.daily_total).abs() < 1e-12);
    }

    #[test]
    fn scheme_examples() {
        let s = PartitionScheme::new(1.0, 895).unwrap();
        assert_eq!((s.pv_capacity, s.sv_capacity), (895, 0));
        let s = PartitionScheme::new(0.05, 895).unwrap();
        assert_eq!(s.pv_capacity + s.sv_capacity, 895);
        assert_eq!(s.pv_capacity, 45);
        assert!(PartitionScheme::new(1.2, 10).is_err());

        let demand = DayDemand { arrivals: flat(4.0, 24), departures: flat(4.0, 24) };
        let scheme = PartitionScheme::new(1.0, 20).unwrap();
        let r = scheme_rejections(&scheme, &[demand.clone()], &[demand.clone()], InitialState::Empty, 5).unwrap();
        assert!((r.r_sv[0] - demand.arrivals.total()).abs() < 1e-9);

        let scheme = PartitionScheme::new(0.5, 20).unwrap();
        let r = scheme_rejections(&scheme, &[demand.clone()], &[demand], InitialState::Empty, 5).unwrap();
        assert_eq!(r.r_pv, r.r_sv);
    }

    #[test]
    fn roomy_partition_rejects_nothing() {
        let demand = DayDemand { arrivals: flat(2.0, 24), departures: flat(2.0, 24) };
        let scheme = PartitionScheme::new(0.9, 200).unwrap();
        let r = scheme_rejections(&scheme, &[demand.clone()], &[demand], InitialState::Empty, 5).unwrap();
        assert!(r.r_pv[0] < 1e-6);
    }

    #[test]
    fn shared_demand_examples() {
        let obs = DayDemand {
            arrivals: RateProfile::hourly((0..24).map(f64::from).collect()).unwrap(),
            departures: flat(3.0, 24),
        };
        let none = SharedDemandConfig { subscribers: 0, diversion: 0.0, ..Default::default() };
        let s = sv_demand_profile(&obs, &none).unwrap();
        assert!(s.sv.arrivals.values.iter().all(|&v| v == 0.0));
        assert_eq!(s.pv, obs);

        let s = sv_demand_profile(&obs, &SharedDemandConfig { diversion: 0.0, ..Default::default() }).unwrap();
        assert!(s.sv.arrivals.values.iter().all(|&v| v == 100.0));
        assert!(s.sv.departures.values.iter().all(|&v| v == 80.0));

        let s = sv_demand_profile(&obs, &SharedDemandConfig { subscribers: 0, ..Default::default() }).unwrap();
        for h in 0..24 {
            assert!((s.pv.arrivals.values[h] + s.sv.arrivals.values[h] - obs.arrivals.values[h]).abs() < 1e-12);
        }
        assert!(sv_demand_profile(&obs, &SharedDemandConfig { diversion: 1.5, ..Default::default() }).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sampled = sample_sv_demand_profile(&obs, &SharedDemandConfig::default(), &mut rng).unwrap();
        let mean_in = sampled.sv.arrivals.total() / 24.0 - 0.2 * obs.arrivals.total() / 24.0;
        assert!((mean_in - 100.0).abs() < 10.0);
    }

    #[test]
    fn long_step_reaches_steady_state() {
        let q = build_q_matrix(3.0, 2.5, 20).unwrap();
        let p = transient_step(&StateDistribution::point(21, 0), &q, 3000.0).unwrap();
        let ss = analytic_steady_state(3.0, 2.5, 20).unwrap();
        assert!(p.total_variation(&ss) < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn distributions_stay_valid(cap in 0usize..15, l in 0.0f64..50.0, m in 0.0f64..50.0, steps in 1usize..40, seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p: Vec<f64> = (0..=cap).map(|_| rng.random::<f64>()).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
            let mut pi = StateDistribution(p);
            let q = build_q_matrix(l, m, cap).unwrap();
            for _ in 0..steps {
                pi = transient_step(&pi, &q, 1.0 / 12.0).unwrap();
                prop_assert!(pi.0.iter().all(|&v| v >= 0.0));
                prop_assert!((pi.0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn rejections_non_increasing_in_capacity(cap in 0usize..12, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let arr = RateProfile::hourly((0..24).map(|_| rng.random_range(0.0..20.0)).collect()).unwrap();
            let dep = RateProfile::hourly((0..24).map(|_| rng.random_range(0.0..20.0)).collect()).unwrap();
            let r = |c: usize| {
                let spec = BirthDeathSpec::new(c, arr.clone(), dep.clone()).unwrap();
                daily_rejections(&spec, &StateDistribution::point(c + 1, 0)).unwrap()
            };
            prop_assert!(r(cap + 1) <= r(cap) + 1e-9);
        }

        #[test]
        fn tail_tolerance_is_honoured(cap in 1usize..20, l in 0.1f64..100.0, m in 0.1f64..100.0) {
            let q = build_q_matrix(l, m, cap).unwrap();
            let pi = StateDistribution::point(cap + 1, 0);
            let a = transient_step_with_tol(&pi, &q, 1.0 / 12.0, 1e-12).unwrap();
            let b = transient_step_with_tol(&pi, &q, 1.0 / 12.0, 1e-11).unwrap();
            for (x, y) in a.0.iter().zip(&b.0) {
                prop_assert!((x - y).abs() < 1e-11);
            }
        }
    }
}
