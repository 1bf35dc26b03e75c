//! Public transport: skim lookups, system-wide crowding, operating cost and emissions.
//!
//! Frequency scaling by `s` multiplies capacity, cost and emissions by `s` and
//! divides crowding and the transfer penalty by `s`.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::network::Node;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkimRow {
    pub o_stop: u32,
    pub d_stop: u32,
    /// Transfer walking, meters.
    pub walk_m: f64,
    pub in_vehicle_s: f64,
    pub transfers: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitLine {
    pub line: String,
    pub trips_per_hour: f64,
    pub length_km: f64,
    pub cost_per_km: f64,
    /// Tonnes per vehicle-km; `None` falls back to the scenario default.
    pub emission_per_km: Option<f64>,
    /// Passengers per vehicle.
    pub capacity: f64,
}

/// What PT offers for one trip. Travelers arrive just in time, so there is no wait.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtOffer {
    pub fare: f64,
    pub in_vehicle_s: f64,
    /// Access, egress and transfer walking, meters.
    pub walk_m: f64,
    pub transfers: u32,
    pub wait_s: f64,
}

#[derive(Debug, Clone)]
pub struct Transit {
    skim: BTreeMap<(u32, u32), SkimRow>,
    lines: Vec<TransitLine>,
    fare: f64,
    capacity_reduction: f64,
    default_emission_per_km: f64,
}

impl Transit {
    /// `default_emission_per_km` is in tonnes per km.
    pub fn new(
        skim: &[SkimRow],
        lines: Vec<TransitLine>,
        fare: f64,
        capacity_reduction: f64,
        default_emission_per_km: f64,
    ) -> Self {
        let skim = skim.iter().map(|r| ((r.o_stop, r.d_stop), r.clone())).collect();
        Self { skim, lines, fare, capacity_reduction, default_emission_per_km }
    }

    pub fn lines(&self) -> &[TransitLine] {
        &self.lines
    }

    /// Skim row for the stops matched to `origin` and `destination`, plus access and
    /// egress walks. A trip within one stop costs only the walks.
    pub fn query(&self, origin: &Node, destination: &Node) -> Option<PtOffer> {
        let (o, d) = (origin.pt_stop?, destination.pt_stop?);
        let walk_ends = origin.pt_access_m + destination.pt_access_m;
        if o == d {
            return Some(PtOffer { fare: self.fare, in_vehicle_s: 0.0, walk_m: walk_ends, transfers: 0, wait_s: 0.0 });
        }
        let row = self.skim.get(&(o, d))?;
        Some(PtOffer {
            fare: self.fare,
            in_vehicle_s: row.in_vehicle_s,
            walk_m: row.walk_m + walk_ends,
            transfers: row.transfers,
            wait_s: 0.0,
        })
    }

    /// Hourly passenger capacity `Σ ν_l Ω_l`, scaled by frequency and divided by the
    /// capacity reduction.
    pub fn capacity(&self, frequency_scale: f64) -> f64 {
        let base: f64 = self.lines.iter().map(|l| l.trips_per_hour * l.capacity).sum();
        frequency_scale * base / self.capacity_reduction
    }

    /// `η = n / Ω`; an empty network (no capacity) counts as uncrowded.
    pub fn crowding(&self, onboard: f64, frequency_scale: f64) -> f64 {
        let cap = self.capacity(frequency_scale);
        if cap > 0.0 {
            onboard / cap
        } else {
            0.0
        }
    }

    /// Operating cost over `hours`: `s · T Σ ν_l d_l c_l`.
    pub fn cost(&self, hours: f64, frequency_scale: f64) -> f64 {
        frequency_scale * hours * self.lines.iter().map(|l| l.trips_per_hour * l.length_km * l.cost_per_km).sum::<f64>()
    }

    /// Emissions (tonnes) over `hours`: `s · T Σ ν_l d_l e_l`.
    pub fn emissions(&self, hours: f64, frequency_scale: f64) -> f64 {
        let per_hour: f64 = self
            .lines
            .iter()
            .map(|l| l.trips_per_hour * l.length_km * l.emission_per_km.unwrap_or(self.default_emission_per_km))
            .sum();
        frequency_scale * hours * per_hour
    }
}

/// Effective transfer penalty `c^T_0 / s`.
pub fn transfer_penalty(base: f64, frequency_scale: f64) -> f64 {
    base / frequency_scale
}

/// Riders currently in transit vehicles, released when their trip ends.
#[derive(Debug, Clone, Default)]
pub struct TransitState {
    simulated: usize,
    /// (release step, riders) in ascending step order.
    releases: VecDeque<(u64, usize)>,
    background: BTreeMap<u32, f64>,
    pub onboard: f64,
    pub crowding: f64,
}

impl TransitState {
    pub fn new(background: BTreeMap<u32, f64>) -> Self {
        Self { background, ..Self::default() }
    }

    pub fn simulated_riders(&self) -> usize {
        self.simulated
    }

    pub fn background_at(&self, time: f64) -> f64 {
        let hour = (time / 3600.0).floor().max(0.0) as u32;
        self.background.get(&hour).copied().unwrap_or(0.0)
    }

    /// A traveler boards at `step` and rides for `steps` whole steps.
    pub fn board(&mut self, step: u64, steps: u64) {
        if steps == 0 {
            return;
        }
        self.simulated += 1;
        let due = step + steps;
        let pos = self.releases.partition_point(|(s, _)| *s <= due);
        if pos > 0 && self.releases[pos - 1].0 == due {
            self.releases[pos - 1].1 += 1;
        } else {
            self.releases.insert(pos, (due, 1));
        }
    }

    /// Releases riders whose trips end by `step`, then sets onboard count and crowding.
    pub fn update(&mut self, transit: &Transit, step: u64, time: f64, frequency_scale: f64) -> f64 {
        while let Some(&(due, n)) = self.releases.front() {
            if due > step {
                break;
            }
            self.simulated -= n;
            self.releases.pop_front();
        }
        self.onboard = self.simulated as f64 + self.background_at(time);
        self.crowding = transit.crowding(self.onboard, frequency_scale);
        self.crowding
    }
}

/// Whole steps a transit ride occupies.
pub fn ride_steps(in_vehicle_s: f64, time_step: f64) -> u64 {
    (in_vehicle_s / time_step).ceil().max(0.0) as u64
}
