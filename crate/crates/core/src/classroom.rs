//! Classroom occupancy from doorway counters and exact course-to-room allocation.
//!
//! A day is split into hourly slots (12 by default, slot 1 starting at 9am).
//! Each meeting occupies a fixed run of consecutive slots and must stay in a
//! single room whose capacity covers its demand; a room hosts at most one
//! meeting per slot. The cost of a plan is the capacity of every room summed
//! over the slots in which it is used.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, SECS_PER_DAY};

/// Default number of hourly slots per day.
pub const DEFAULT_SLOTS: usize = 12;
/// Capacity of the spare room appended by default.
pub const SPARE_ROOM_SEATS: u32 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub timestamp: i64,
    pub room: String,
    pub count_in: u32,
    pub count_out: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancySeries {
    pub points: Vec<(i64, u32)>,
    /// Number of records where the running count would have gone negative.
    pub clamped: usize,
}

/// Cumulative entries minus exits over one day, starting from zero at midnight
/// and floored at zero. Records of other days are ignored.
pub fn room_occupancy(records: &[CountRecord], day: i64) -> OccupancySeries {
    let mut occ: i64 = 0;
    let mut clamped = 0;
    let mut points = Vec::new();
    for r in records.iter().filter(|r| r.timestamp.div_euclid(SECS_PER_DAY) == day) {
        occ += i64::from(r.count_in) - i64::from(r.count_out);
        if occ < 0 {
            occ = 0;
            clamped += 1;
        }
        points.push((r.timestamp, occ as u32));
    }
    OccupancySeries { points, clamped }
}

/// Time window of a meeting in one room (seconds).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeetingWindow {
    pub room: String,
    pub start: i64,
    pub end: i64,
}

/// Peak running occupancy from counts inside `[start - slack, end]`, starting
/// from zero so that earlier drift is not inherited.
pub fn course_attendance(records: &[CountRecord], window: &MeetingWindow, slack_secs: i64) -> u32 {
    let lo = window.start - slack_secs;
    let mut occ: i64 = 0;
    let mut peak: i64 = 0;
    for r in records
        .iter()
        .filter(|r| r.room == window.room && r.timestamp >= lo && r.timestamp <= window.end)
    {
        occ = (occ + i64::from(r.count_in) - i64::from(r.count_out)).max(0);
        peak = peak.max(occ);
    }
    peak as u32
}

/// Attendance of every meeting; fails if two meetings share a room at the same time.
pub fn attendance_by_meeting(records: &[CountRecord], meetings: &[MeetingWindow], slack_secs: i64) -> Result<Vec<u32>> {
    for (i, a) in meetings.iter().enumerate() {
        for b in &meetings[i + 1..] {
            if a.room == b.room && a.start < b.end && b.start < a.end {
                return Err(Error::invalid(format!(
                    "timetable conflict in room {}: [{}, {}) overlaps [{}, {})",
                    a.room, a.start, a.end, b.start, b.end
                )));
            }
        }
    }
    let mut sorted: Vec<&CountRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.timestamp);
    let sorted: Vec<CountRecord> = sorted.into_iter().cloned().collect();
    Ok(meetings
        .iter()
        .map(|m| course_attendance(&sorted, m, slack_secs))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormalizedAttendance {
    Ratio(f64),
    Dropped,
}

/// `attendance / enrolment`, dropped at zero or above 1.5, capped at 1.
pub fn normalize_attendance(attendance: f64, enrolment: f64) -> Result<NormalizedAttendance> {
    if !(enrolment > 0.0) {
        return Err(Error::invalid(format!("enrolment must be positive, got {enrolment}")));
    }
    let ratio = attendance / enrolment;
    Ok(if ratio <= 0.0 || ratio > 1.5 {
        NormalizedAttendance::Dropped
    } else {
        NormalizedAttendance::Ratio(ratio.min(1.0))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseMeeting {
    pub course_id: String,
    pub day: u32,
    /// First slot, 1-based.
    pub start_slot: usize,
    pub duration: usize,
    /// Expected attendance used for sizing.
    pub attendance: f64,
    pub enrolment: u32,
}

impl CourseMeeting {
    fn slot_mask(&self) -> u64 {
        let ones = if self.duration >= 64 { u64::MAX } else { (1u64 << self.duration) - 1 };
        ones << (self.start_slot - 1)
    }

    /// Seats required after adding `margin` (a fraction) to the attendance.
    pub fn demand(&self, margin: f64) -> u32 {
        // guard against 30·1.1 = 33.000000000000004
        (self.attendance * (1.0 + margin) - 1e-9).ceil().max(0.0) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub id: String,
    pub capacity: u32,
}

impl Room {
    pub fn new(id: impl Into<String>, capacity: u32) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("room capacity must be positive"));
        }
        Ok(Self { id: id.into(), capacity })
    }

    pub fn cost(&self) -> u64 {
        u64::from(self.capacity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AllocationConfig {
    pub margin: f64,
    pub slots: usize,
    /// Capacities of spare rooms appended to the supplied rooms.
    pub spare_rooms: Vec<u32>,
    /// Search nodes explored before settling for the best plan found.
    pub node_limit: u64,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        Self {
            margin: 0.0,
            slots: DEFAULT_SLOTS,
            spare_rooms: vec![SPARE_ROOM_SEATS],
            node_limit: 50_000_000,
        }
    }
}

impl AllocationConfig {
    pub fn with_margin(margin: f64) -> Self {
        Self { margin, ..Self::default() }
    }

    /// No spare rooms; only the rooms passed in.
    pub fn exact_rooms(margin: f64) -> Self {
        Self {
            margin,
            spare_rooms: Vec::new(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    /// Rooms considered, including appended spare rooms.
    pub rooms: Vec<Room>,
    /// Room index per meeting.
    pub assignment: Vec<usize>,
    /// Seats required per meeting.
    pub demands: Vec<u32>,
    /// `grid[room][slot]` holds the meeting index using that room.
    pub grid: Vec<Vec<Option<usize>>>,
    pub total_cost: u64,
    /// False when the node limit stopped the search early.
    pub optimal: bool,
}

struct RoomSearch<'a> {
    meetings: &'a [CourseMeeting],
    rooms: &'a [Room],
    demands: Vec<u32>,
    masks: Vec<u64>,
    busy: Vec<u64>,
    current: Vec<usize>,
    best_cost: u64,
    best: Option<Vec<usize>>,
    nodes: u64,
    node_limit: u64,
    deepest_failure: Option<usize>,
}

impl RoomSearch<'_> {
    fn fits(&self, i: usize, j: usize) -> bool {
        self.rooms[j].capacity >= self.demands[i] && self.busy[j] & self.masks[i] == 0
    }

    fn cheapest_free(&self, i: usize) -> Option<u64> {
        (0..self.rooms.len())
            .filter(|&j| self.fits(i, j))
            .map(|j| self.rooms[j].cost())
            .min()
    }

    /// Remaining-cost bound: each unplaced meeting in its cheapest currently free room.
    fn bound(&mut self, from: usize) -> Option<u64> {
        let mut lb = 0;
        for i in from..self.meetings.len() {
            match self.cheapest_free(i) {
                Some(c) => lb += c * self.meetings[i].duration as u64,
                None => {
                    self.deepest_failure = Some(self.deepest_failure.map_or(i, |d| d.max(i)));
                    return None;
                }
            }
        }
        Some(lb)
    }

    fn descend(&mut self, i: usize, cost: u64) {
        if self.nodes >= self.node_limit {
            return;
        }
        self.nodes += 1;
        if i == self.meetings.len() {
            if cost < self.best_cost {
                self.best_cost = cost;
                self.best = Some(self.current.clone());
            }
            return;
        }
        let Some(lb) = self.bound(i) else { return };
        if cost + lb >= self.best_cost {
            return;
        }
        for j in 0..self.rooms.len() {
            if !self.fits(i, j) {
                continue;
            }
            let c = cost + self.rooms[j].cost() * self.meetings[i].duration as u64;
            if c >= self.best_cost {
                continue;
            }
            self.busy[j] |= self.masks[i];
            self.current.push(j);
            self.descend(i + 1, c);
            self.current.pop();
            self.busy[j] &= !self.masks[i];
        }
    }
}

fn greedy_plan(meetings: &[CourseMeeting], rooms: &[Room], demands: &[u32], masks: &[u64]) -> Option<(u64, Vec<usize>)> {
    let mut order: Vec<usize> = (0..meetings.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(demands[i]));
    let mut busy = vec![0u64; rooms.len()];
    let mut assignment = vec![0; meetings.len()];
    let mut cost = 0;
    for i in order {
        let j = (0..rooms.len())
            .filter(|&j| rooms[j].capacity >= demands[i] && busy[j] & masks[i] == 0)
            .min_by_key(|&j| (rooms[j].capacity, j))?;
        busy[j] |= masks[i];
        assignment[i] = j;
        cost += rooms[j].cost() * meetings[i].duration as u64;
    }
    Some((cost, assignment))
}

fn validate_meetings(meetings: &[CourseMeeting], slots: usize) -> Result<()> {
    if slots == 0 || slots > 64 {
        return Err(Error::invalid(format!("slot count must lie in 1..=64, got {slots}")));
    }
    for m in meetings {
        if m.start_slot == 0 || m.duration == 0 || m.start_slot + m.duration - 1 > slots {
            return Err(Error::invalid(format!(
                "meeting {} (slots {}..{}) does not fit the {slots}-slot day",
                m.course_id,
                m.start_slot,
                m.start_slot + m.duration
            )));
        }
        if !(m.attendance.is_finite() && m.attendance >= 0.0) {
            return Err(Error::invalid(format!("meeting {} has invalid attendance", m.course_id)));
        }
    }
    Ok(())
}

/// Minimum-cost allocation of one day's meetings to rooms.
///
/// Among equal-cost optima the lexicographically smallest assignment vector
/// (room indices in meeting order) is returned.
pub fn allocate(meetings: &[CourseMeeting], rooms: &[Room], cfg: &AllocationConfig) -> Result<AllocationPlan> {
    validate_meetings(meetings, cfg.slots)?;
    if !(cfg.margin.is_finite() && cfg.margin >= 0.0) {
        return Err(Error::invalid(format!("margin must be non-negative, got {}", cfg.margin)));
    }
    let mut all_rooms = rooms.to_vec();
    for (k, &cap) in cfg.spare_rooms.iter().enumerate() {
        all_rooms.push(Room::new(format!("spare-{}", k + 1), cap)?);
    }
    if all_rooms.iter().any(|r| r.capacity == 0) {
        return Err(Error::invalid("room capacity must be positive"));
    }
    let demands: Vec<u32> = meetings.iter().map(|m| m.demand(cfg.margin)).collect();
    let largest = all_rooms.iter().map(|r| r.capacity).max().unwrap_or(0);
    if let Some(i) = (0..meetings.len()).find(|&i| demands[i] > largest) {
        return Err(Error::Infeasible(format!(
            "meeting {} needs {} seats but the largest room holds {largest}",
            meetings[i].course_id, demands[i]
        )));
    }
    let masks: Vec<u64> = meetings.iter().map(CourseMeeting::slot_mask).collect();

    let greedy = greedy_plan(meetings, &all_rooms, &demands, &masks);
    let mut search = RoomSearch {
        meetings,
        rooms: &all_rooms,
        demands: demands.clone(),
        masks,
        busy: vec![0; all_rooms.len()],
        current: Vec::with_capacity(meetings.len()),
        // accept any plan no worse than greedy so ties resolve lexicographically
        best_cost: greedy.as_ref().map_or(u64::MAX, |g| g.0 + 1),
        best: None,
        nodes: 0,
        node_limit: cfg.node_limit,
        deepest_failure: None,
    };
    search.descend(0, 0);
    let optimal = search.nodes < cfg.node_limit;
    let assignment = match (search.best, greedy) {
        (Some(a), _) => a,
        (None, Some((_, g))) => g,
        (None, None) => {
            let i = search.deepest_failure.unwrap_or(0);
            return Err(Error::Infeasible(format!(
                "no room is free for meeting {} (slots {}..{}, {} seats)",
                meetings[i].course_id,
                meetings[i].start_slot,
                meetings[i].start_slot + meetings[i].duration,
                demands[i]
            )));
        }
    };

    let mut grid = vec![vec![None; cfg.slots]; all_rooms.len()];
    let mut total_cost = 0;
    for (i, (&j, m)) in assignment.iter().zip(meetings).enumerate() {
        for s in m.start_slot - 1..m.start_slot - 1 + m.duration {
            grid[j][s] = Some(i);
        }
        total_cost += all_rooms[j].cost() * m.duration as u64;
    }
    Ok(AllocationPlan {
        rooms: all_rooms,
        assignment,
        demands,
        grid,
        total_cost,
        optimal,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanViolation {
    WrongLength,
    UnknownRoom { meeting: usize },
    Capacity { meeting: usize, demand: u32, capacity: u32 },
    DoubleBooked { room: usize, slot: usize },
    Schedule { meeting: usize },
    CostMismatch { reported: u64, actual: u64 },
}

/// Re-derives every constraint and the cost from scratch, using the
/// room/slot variable layout rather than the solver's bitmasks.
pub fn check_plan(meetings: &[CourseMeeting], plan: &AllocationPlan) -> std::result::Result<(), PlanViolation> {
    if plan.assignment.len() != meetings.len() || plan.demands.len() != meetings.len() {
        return Err(PlanViolation::WrongLength);
    }
    let slots = plan.grid.first().map_or(0, Vec::len);
    // x[i][s] = room + 1 when meeting i holds a room in slot s
    let mut x = vec![vec![0usize; slots]; meetings.len()];
    for (i, m) in meetings.iter().enumerate() {
        let j = plan.assignment[i];
        let room = plan.rooms.get(j).ok_or(PlanViolation::UnknownRoom { meeting: i })?;
        if room.capacity < plan.demands[i] {
            return Err(PlanViolation::Capacity {
                meeting: i,
                demand: plan.demands[i],
                capacity: room.capacity,
            });
        }
        for s in 0..slots {
            if s + 1 >= m.start_slot && s + 1 < m.start_slot + m.duration {
                x[i][s] = j + 1;
            }
        }
    }
    let mut z: HashMap<(usize, usize), usize> = HashMap::new();
    for row in &x {
        for (s, &r) in row.iter().enumerate() {
            if r > 0 {
                *z.entry((r - 1, s)).or_default() += 1;
            }
        }
    }
    if let Some((&(room, slot), _)) = z.iter().find(|(_, &n)| n > 1) {
        return Err(PlanViolation::DoubleBooked { room, slot });
    }
    for (i, row) in x.iter().enumerate() {
        let used: Vec<usize> = row.iter().copied().filter(|&r| r > 0).collect();
        if used.len() != meetings[i].duration || used.windows(2).any(|w| w[0] != w[1]) {
            return Err(PlanViolation::Schedule { meeting: i });
        }
    }
    let actual: u64 = z.keys().map(|&(room, _)| u64::from(plan.rooms[room].capacity)).sum();
    if actual != plan.total_cost {
        return Err(PlanViolation::CostMismatch {
            reported: plan.total_cost,
            actual,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverflowReport {
    /// Overflowing meetings over meetings with known actuals.
    pub fraction: f64,
    pub overflowing: Vec<usize>,
    /// Meetings without an actual attendance.
    pub missing: Vec<usize>,
}

/// A meeting overflows when its actual attendance exceeds its room's capacity.
pub fn overflow_report(plan: &AllocationPlan, actuals: &[Option<f64>]) -> Result<OverflowReport> {
    if actuals.len() != plan.assignment.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.assignment.len(),
            found: actuals.len(),
        });
    }
    let mut overflowing = Vec::new();
    let mut missing = Vec::new();
    let mut known = 0usize;
    for (i, a) in actuals.iter().enumerate() {
        match a {
            None => missing.push(i),
            Some(a) => {
                known += 1;
                if *a > f64::from(plan.rooms[plan.assignment[i]].capacity) {
                    overflowing.push(i);
                }
            }
        }
    }
    let fraction = if known == 0 { 0.0 } else { overflowing.len() as f64 / known as f64 };
    Ok(OverflowReport {
        fraction,
        overflowing,
        missing,
    })
}
