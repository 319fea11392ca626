//! Day-by-day choice of parking partition schemes.
//!
//! Every day takes exactly one scheme. The objective sums the weighted
//! expected rejections of both user classes; the only coupling between days
//! is the requirement that leasing revenue over the window strictly exceeds
//! the floor `R`. The search is an exact branch and bound over days.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Expected rejections per (day, scheme) and spaces leased per scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeCostTable {
    /// `r_sv[day][scheme]`
    pub r_sv: Vec<Vec<f64>>,
    /// `r_pv[day][scheme]`
    pub r_pv: Vec<Vec<f64>>,
    /// Spaces leased to car sharing under each scheme.
    pub spaces: Vec<u32>,
}

impl SchemeCostTable {
    pub fn new(r_sv: Vec<Vec<f64>>, r_pv: Vec<Vec<f64>>, spaces: Vec<u32>) -> Result<Self> {
        let t = Self { r_sv, r_pv, spaces };
        t.validate()?;
        Ok(t)
    }

    pub fn days(&self) -> usize {
        self.r_sv.len()
    }

    pub fn schemes(&self) -> usize {
        self.spaces.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_sv.len() != self.r_pv.len() {
            return Err(Error::DimensionMismatch {
                expected: self.r_sv.len(),
                found: self.r_pv.len(),
            });
        }
        for row in self.r_sv.iter().chain(&self.r_pv) {
            if row.len() != self.spaces.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.spaces.len(),
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid("rejection counts must be finite and non-negative"));
            }
        }
        Ok(())
    }

    fn day_cost(&self, day: usize, scheme: usize, cfg: &PartitionOptConfig) -> f64 {
        cfg.w_sv * self.r_sv[day][scheme] + cfg.w_pv * self.r_pv[day][scheme]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionOptConfig {
    /// Cost per rejected shared-vehicle user.
    pub w_sv: f64,
    /// Cost per rejected private-vehicle user.
    pub w_pv: f64,
    /// Daily lease price per space.
    pub m: f64,
    /// Minimum revenue over the window (strict).
    pub r: f64,
    pub days: usize,
}

impl Default for PartitionOptConfig {
    fn default() -> Self {
        Self {
            w_sv: 15.8,
            w_pv: 26.0,
            m: 15.8,
            r: 36468.75,
            days: 5,
        }
    }
}

impl PartitionOptConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w_sv", self.w_sv), ("w_pv", self.w_pv), ("m", self.m), ("r", self.r)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionDecision {
    /// Zero-based scheme index chosen for each day.
    pub schemes: Vec<usize>,
    pub total_cost: f64,
    pub revenue: f64,
}

fn check_decision(x: &[usize], table: &SchemeCostTable) -> Result<()> {
    if x.len() != table.days() {
        return Err(Error::DimensionMismatch {
            expected: table.days(),
            found: x.len(),
        });
    }
    if let Some(&j) = x.iter().find(|&&j| j >= table.schemes()) {
        return Err(Error::OutOfRange {
            value: j as i64,
            lo: 0,
            hi: table.schemes() as i64,
        });
    }
    Ok(())
}

/// `Σ_i W_SV·r_SV[i][x_i] + W_PV·r_PV[i][x_i]`
pub fn decision_cost(x: &[usize], table: &SchemeCostTable, cfg: &PartitionOptConfig) -> Result<f64> {
    check_decision(x, table)?;
    Ok(x.iter().enumerate().map(|(i, &j)| table.day_cost(i, j, cfg)).sum())
}

/// `Σ_i M·s[x_i]`
pub fn decision_revenue(x: &[usize], table: &SchemeCostTable, cfg: &PartitionOptConfig) -> Result<f64> {
    check_decision(x, table)?;
    Ok(cfg.m * x.iter().map(|&j| f64::from(table.spaces[j])).sum::<f64>())
}

struct Search<'a> {
    table: &'a SchemeCostTable,
    cfg: &'a PartitionOptConfig,
    /// Per-day (cost, scheme) sorted by cost.
    options: Vec<Vec<(f64, usize)>>,
    /// Lower bound on the cost of days `i..`.
    cost_suffix: Vec<f64>,
    /// Largest achievable space total of days `i..`.
    space_suffix: Vec<u64>,
    /// Per depth: (spaces so far, cost so far) of explored partial decisions.
    seen: Vec<Vec<(u64, f64)>>,
    current: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn feasible(&self, spaces: u64) -> bool {
        self.cfg.m * spaces as f64 > self.cfg.r
    }

    fn dominated(&mut self, depth: usize, spaces: u64, cost: f64) -> bool {
        let seen = &mut self.seen[depth];
        if seen.iter().any(|&(s, c)| s >= spaces && c <= cost) {
            return true;
        }
        seen.retain(|&(s, c)| !(spaces >= s && cost <= c));
        seen.push((spaces, cost));
        false
    }

    fn descend(&mut self, day: usize, cost: f64, spaces: u64) {
        if day == self.table.days() {
            if self.feasible(spaces) && self.best.as_ref().is_none_or(|b| cost < b.0) {
                self.best = Some((cost, self.current.clone()));
            }
            return;
        }
        if let Some((b, _)) = &self.best {
            if cost + self.cost_suffix[day] >= *b {
                return;
            }
        }
        if !self.feasible(spaces + self.space_suffix[day]) {
            return;
        }
        if day > 0 && self.dominated(day, spaces, cost) {
            return;
        }
        for k in 0..self.options[day].len() {
            let (c, j) = self.options[day][k];
            self.current.push(j);
            self.descend(day + 1, cost + c, spaces + u64::from(self.table.spaces[j]));
            self.current.pop();
        }
    }
}

/// Cost-minimal scheme per day subject to revenue strictly above `cfg.r`.
pub fn optimize_partition(table: &SchemeCostTable, cfg: &PartitionOptConfig) -> Result<PartitionDecision> {
    table.validate()?;
    cfg.validate()?;
    if table.schemes() == 0 || table.days() == 0 {
        return Err(Error::invalid("need at least one scheme and one day"));
    }
    let d = table.days();
    let max_space = u64::from(*table.spaces.iter().max().unwrap_or(&0));
    let best_revenue = cfg.m * (max_space * d as u64) as f64;
    if best_revenue <= cfg.r {
        return Err(Error::Infeasible(format!(
            "maximum revenue {best_revenue:.2} does not exceed the floor {:.2} (gap {:.2})",
            cfg.r,
            cfg.r - best_revenue
        )));
    }

    let options: Vec<Vec<(f64, usize)>> = (0..d)
        .map(|i| {
            let mut o: Vec<(f64, usize)> = (0..table.schemes()).map(|j| (table.day_cost(i, j, cfg), j)).collect();
            o.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
            o
        })
        .collect();
    let mut cost_suffix = vec![0.0; d + 1];
    let mut space_suffix = vec![0u64; d + 1];
    for i in (0..d).rev() {
        cost_suffix[i] = cost_suffix[i + 1] + options[i][0].0;
        space_suffix[i] = space_suffix[i + 1] + max_space;
    }

    let mut search = Search {
        table,
        cfg,
        options,
        cost_suffix,
        space_suffix,
        seen: vec![Vec::new(); d + 1],
        current: Vec::with_capacity(d),
        best: None,
    };
    search.descend(0, 0.0, 0);
    let (_, schemes) = search
        .best
        .ok_or_else(|| Error::Infeasible("no decision meets the revenue floor".into()))?;
    Ok(PartitionDecision {
        total_cost: decision_cost(&schemes, table, cfg)?,
        revenue: decision_revenue(&schemes, table, cfg)?,
        schemes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticDynamicReport {
    pub dynamic: PartitionDecision,
    /// Best single scheme applied every day, when one meets the revenue floor.
    pub static_scheme: Option<usize>,
    pub static_cost: Option<f64>,
    /// `dynamic_cost / static_cost`.
    pub normalized_ratio: Option<f64>,
}

/// Optimal day-varying decision against the best feasible fixed scheme.
pub fn compare_static_dynamic(table: &SchemeCostTable, cfg: &PartitionOptConfig) -> Result<StaticDynamicReport> {
    let dynamic = optimize_partition(table, cfg)?;
    let d = table.days();
    let best_static = (0..table.schemes())
        .filter_map(|j| {
            let x = vec![j; d];
            let rev = decision_revenue(&x, table, cfg).ok()?;
            (rev > cfg.r).then(|| (decision_cost(&x, table, cfg).ok().unwrap_or(f64::INFINITY), j))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let normalized_ratio = best_static.map(|(c, _)| if c > 0.0 { dynamic.total_cost / c } else { 1.0 });
    Ok(StaticDynamicReport {
        dynamic,
        static_scheme: best_static.map(|s| s.1),
        static_cost: best_static.map(|s| s.0),
        normalized_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(r_sv: Vec<Vec<f64>>, r_pv: Vec<Vec<f64>>, spaces: Vec<u32>) -> SchemeCostTable {
        SchemeCostTable::new(r_sv, r_pv, spaces).unwrap()
    }

    #[test]
    fn defaults_match_constants() {
        let c = PartitionOptConfig::default();
        assert_eq!((c.w_sv, c.w_pv, c.m, c.r, c.days), (15.8, 26.0, 15.8, 36468.75, 5));
    }

    #[test]
    fn cost_examples() {
        let cfg = PartitionOptConfig::default();
        let t = table(vec![vec![0.0]], vec![vec![0.0]], vec![10]);
        assert_eq!(decision_cost(&[0], &t, &cfg).unwrap(), 0.0);
        let t = table(vec![vec![2.0]], vec![vec![1.0]], vec![10]);
        assert!((decision_cost(&[0], &t, &cfg).unwrap() - 57.6).abs() < 1e-12);
        let t2 = table(vec![vec![4.0]], vec![vec![2.0]], vec![10]);
        assert!((decision_cost(&[0], &t2, &cfg).unwrap() - 2.0 * 57.6).abs() < 1e-12);
        assert!(matches!(decision_cost(&[1], &t, &cfg), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn revenue_examples() {
        let cfg = PartitionOptConfig::default();
        let zero = table(vec![vec![0.0]; 5], vec![vec![0.0]; 5], vec![0]);
        assert_eq!(decision_revenue(&[0; 5], &zero, &cfg).unwrap(), 0.0);
        let week = table(vec![vec![0.0]; 5], vec![vec![0.0]; 5], vec![500]);
        let rev = decision_revenue(&[0; 5], &week, &cfg).unwrap();
        assert!((rev - 39500.0).abs() < 1e-9 && rev > cfg.r);
        let one = table(vec![vec![0.0]], vec![vec![0.0]], vec![100]);
        assert!((decision_revenue(&[0], &one, &cfg).unwrap() - 1580.0).abs() < 1e-9);
    }

    #[test]
    fn single_scheme_selected_every_day() {
        let t = table(vec![vec![1.0]; 5], vec![vec![2.0]; 5], vec![500]);
        let d = optimize_partition(&t, &PartitionOptConfig::default()).unwrap();
        assert_eq!(d.schemes, vec![0; 5]);
    }

    #[test]
    fn revenue_forces_mixed_choice() {
        // scheme 0 is cheap but leases nothing; scheme 1 leases 100 spaces.
        // with R just below one day's lease of scheme 1, exactly one day must use it.
        let cfg = PartitionOptConfig { r: 1000.0, ..Default::default() };
        let t = table(vec![vec![0.0, 5.0], vec![0.0, 3.0]], vec![vec![1.0, 2.0], vec![1.0, 2.0]], vec![0, 100]);
        let enumerated = [[0, 0], [0, 1], [1, 0], [1, 1]]
            .iter()
            .filter(|x| decision_revenue(&x[..], &t, &cfg).unwrap() > cfg.r)
            .map(|x| (decision_cost(&x[..], &t, &cfg).unwrap(), x.to_vec()))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        let d = optimize_partition(&t, &cfg).unwrap();
        assert_eq!(d.schemes, vec![0, 1]);
        assert_eq!(d.schemes, enumerated.1);
        assert!((d.total_cost - enumerated.0).abs() < 1e-12);
    }

    #[test]
    fn zero_floor_is_per_day_argmin() {
        let cfg = PartitionOptConfig { r: 0.0, ..Default::default() };
        let t = table(
            vec![vec![3.0, 1.0, 2.0], vec![0.5, 4.0, 1.0]],
            vec![vec![0.0; 3], vec![0.0; 3]],
            vec![1, 2, 3],
        );
        assert_eq!(optimize_partition(&t, &cfg).unwrap().schemes, vec![1, 0]);
    }

    #[test]
    fn strict_revenue_floor() {
        // revenue exactly R is infeasible
        let cfg = PartitionOptConfig { m: 1.0, r: 10.0, ..Default::default() };
        let t = table(vec![vec![0.0]], vec![vec![0.0]], vec![10]);
        match optimize_partition(&t, &cfg) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("gap 0.00")),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn static_dynamic_examples() {
        let cfg = PartitionOptConfig { r: 0.0, ..Default::default() };
        let same = table(vec![vec![1.0, 2.0]; 3], vec![vec![0.0, 0.0]; 3], vec![1, 1]);
        let rep = compare_static_dynamic(&same, &cfg).unwrap();
        assert_eq!(rep.static_cost, Some(rep.dynamic.total_cost));

        let varying = table(vec![vec![1.0, 5.0], vec![5.0, 1.0]], vec![vec![0.0; 2]; 2], vec![1, 1]);
        let rep = compare_static_dynamic(&varying, &cfg).unwrap();
        // enumeration: dynamic picks (0, 1) for 2·15.8, best static costs 6·15.8
        assert!((rep.dynamic.total_cost - 2.0 * 15.8).abs() < 1e-9);
        assert!((rep.static_cost.unwrap() - 6.0 * 15.8).abs() < 1e-9);
        assert!((rep.normalized_ratio.unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }
}
