//! Scenario parameters, decision vectors and their box bounds.
//!
//! Files use the units people quote (euro per hour, km/h, tonnes per km). The
//! in-memory [`ScenarioParams`] converts once to seconds, meters and euros.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-component multipliers of the welfare sum. Costs enter with a negative sign
/// regardless of weight; a weight only rescales the magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WelfareWeights {
    pub utility: f64,
    pub pt_revenue: f64,
    pub pt_cost: f64,
    pub parking: f64,
    pub pv_toll: f64,
    pub amod_toll: f64,
    pub pv_emission: f64,
    pub amod_emission: f64,
    pub pt_emission: f64,
}

impl Default for WelfareWeights {
    fn default() -> Self {
        Self::identity()
    }
}

impl WelfareWeights {
    pub fn identity() -> Self {
        Self {
            utility: 1.0,
            pt_revenue: 1.0,
            pt_cost: 1.0,
            parking: 1.0,
            pv_toll: 1.0,
            amod_toll: 1.0,
            pv_emission: 1.0,
            amod_emission: 1.0,
            pt_emission: 1.0,
        }
    }

    /// Emission-heavy welfare: CO2 price ×25, parking and toll revenue ÷4,
    /// PT operating cost ÷10, PT emissions ÷10 and AMOD emissions ×3 (on top of
    /// the CO2 price change).
    pub fn pro_pt() -> Self {
        let co2 = 25.0;
        Self {
            utility: 1.0,
            pt_revenue: 1.0,
            pt_cost: 1.0 / 10.0,
            parking: 1.0 / 4.0,
            pv_toll: 1.0 / 4.0,
            amod_toll: 1.0 / 4.0,
            pv_emission: co2,
            amod_emission: co2 * 3.0,
            pt_emission: co2 / 10.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" | "identity" => Some(Self::identity()),
            "pro-pt" | "pro_pt" => Some(Self::pro_pt()),
            _ => None,
        }
    }

    fn all(&self) -> [f64; 9] {
        [
            self.utility,
            self.pt_revenue,
            self.pt_cost,
            self.parking,
            self.pv_toll,
            self.amod_toll,
            self.pv_emission,
            self.amod_emission,
            self.pt_emission,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterParams {
    pub id: u32,
    /// Speed-like scale of the travel-time factor, km/h. Defaults to the NFD's
    /// free-flow speed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v1_kmh: Option<f64>,
    /// Additive speed term, km/h. Absent means `1/v2 = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v2_kmh: Option<f64>,
}

/// Background vehicle density added to a cluster during one hour of the day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundDensity {
    pub hour: u32,
    pub cluster: u32,
    /// veh/lane-km
    pub density: f64,
}

/// Transit riders not represented as travelers, per hour of the day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PtBackground {
    pub hour: u32,
    pub riders: f64,
}

/// `params.toml` as written by people.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsFile {
    pub time_step_s: f64,
    pub start_hour: f64,
    pub end_hour: f64,
    /// Cluster that forms the toll and parking zone.
    pub inner_cluster: u32,
    pub value_of_time_eur_per_h: f64,
    pub pv_distance_cost_eur_per_km: f64,
    pub pv_intercept_eur: f64,
    pub walk_speed_m_per_s: f64,
    pub transfer_penalty_eur: f64,
    pub pt_fare_eur: f64,
    pub boarding_time_s: f64,
    pub vehicle_capacity: u32,
    pub max_wait_s: f64,
    pub max_relative_detour: f64,
    /// Per vehicle and simulated horizon.
    pub amod_fixed_cost_eur: f64,
    pub amod_distance_cost_eur_per_km: f64,
    pub min_fare_eur: f64,
    pub surge_utilization_threshold: f64,
    /// veh/lane-km
    pub toll_density_threshold: f64,
    pub co2_cost_eur_per_t: f64,
    pub emission_pv_t_per_km: f64,
    pub emission_amod_t_per_km: f64,
    /// Used for transit lines that do not state their own factor.
    pub emission_pt_t_per_km: f64,
    pub crowding_max_factor: f64,
    pub pt_capacity_reduction: f64,
    pub moving_average_window: usize,
    /// Upper clamp of the raw travel-time factor (reached at jam density).
    pub max_travel_time_factor: f64,
    pub logit_scale: f64,
    pub welfare_weights: WelfareWeights,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cluster: Vec<ClusterParams>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub background: Vec<BackgroundDensity>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub pt_background: Vec<PtBackground>,
}

impl Default for ParamsFile {
    fn default() -> Self {
        Self {
            time_step_s: 60.0,
            start_hour: 6.0,
            end_hour: 9.0,
            inner_cluster: 0,
            value_of_time_eur_per_h: 12.0,
            pv_distance_cost_eur_per_km: 0.60,
            pv_intercept_eur: -4.70,
            walk_speed_m_per_s: 1.2,
            transfer_penalty_eur: 1.0,
            pt_fare_eur: 1.70,
            boarding_time_s: 30.0,
            vehicle_capacity: 4,
            max_wait_s: 480.0,
            max_relative_detour: 0.4,
            amod_fixed_cost_eur: 25.0,
            amod_distance_cost_eur_per_km: 0.25,
            min_fare_eur: 2.0,
            surge_utilization_threshold: 0.75,
            toll_density_threshold: 20.0,
            co2_cost_eur_per_t: 100.0,
            emission_pv_t_per_km: 1.8e-4,
            emission_amod_t_per_km: 1.8e-4,
            emission_pt_t_per_km: 1.0e-3,
            crowding_max_factor: 2.0,
            pt_capacity_reduction: 3.0,
            moving_average_window: 5,
            max_travel_time_factor: 10.0,
            logit_scale: 1.0,
            welfare_weights: WelfareWeights::identity(),
            cluster: Vec::new(),
            background: Vec::new(),
            pt_background: Vec::new(),
        }
    }
}

/// Parameters in internal units: seconds, meters, euros, tonnes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioParams {
    pub time_step: f64,
    /// Simulation start and end, seconds since midnight.
    pub start: f64,
    pub end: f64,
    pub inner_cluster: u32,
    /// euro per second
    pub value_of_time: f64,
    /// euro per meter
    pub pv_distance_cost: f64,
    pub pv_intercept: f64,
    pub walk_speed: f64,
    pub transfer_penalty: f64,
    pub pt_fare: f64,
    pub boarding_time: f64,
    pub vehicle_capacity: usize,
    pub max_wait: f64,
    pub max_relative_detour: f64,
    pub amod_fixed_cost: f64,
    /// euro per meter
    pub amod_distance_cost: f64,
    pub min_fare: f64,
    pub surge_utilization_threshold: f64,
    /// veh/lane-km (traffic quantities keep traffic units)
    pub toll_density_threshold: f64,
    /// euro per tonne
    pub co2_cost: f64,
    /// tonnes per meter
    pub emission_pv: f64,
    pub emission_amod: f64,
    pub emission_pt: f64,
    pub crowding_max_factor: f64,
    pub pt_capacity_reduction: f64,
    pub moving_average_window: usize,
    pub max_travel_time_factor: f64,
    pub logit_scale: f64,
    pub welfare_weights: WelfareWeights,
}

impl ScenarioParams {
    /// Horizon length in hours.
    pub fn horizon_hours(&self) -> f64 {
        (self.end - self.start) / 3600.0
    }
}

impl ParamsFile {
    /// Checks every invariant and converts to internal units. All violations are
    /// reported together.
    pub fn resolve(&self) -> Result<ScenarioParams> {
        let mut errs = Vec::new();
        let positive = [
            ("time_step_s", self.time_step_s),
            ("value_of_time_eur_per_h", self.value_of_time_eur_per_h),
            ("pv_distance_cost_eur_per_km", self.pv_distance_cost_eur_per_km),
            ("walk_speed_m_per_s", self.walk_speed_m_per_s),
            ("transfer_penalty_eur", self.transfer_penalty_eur),
            ("pt_fare_eur", self.pt_fare_eur),
            ("boarding_time_s", self.boarding_time_s),
            ("max_wait_s", self.max_wait_s),
            ("max_relative_detour", self.max_relative_detour),
            ("amod_fixed_cost_eur", self.amod_fixed_cost_eur),
            ("amod_distance_cost_eur_per_km", self.amod_distance_cost_eur_per_km),
            ("min_fare_eur", self.min_fare_eur),
            ("toll_density_threshold", self.toll_density_threshold),
            ("co2_cost_eur_per_t", self.co2_cost_eur_per_t),
            ("crowding_max_factor", self.crowding_max_factor),
            ("pt_capacity_reduction", self.pt_capacity_reduction),
            ("logit_scale", self.logit_scale),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{name} must be strictly positive (got {v})"));
            }
        }
        for (name, v) in [
            ("emission_pv_t_per_km", self.emission_pv_t_per_km),
            ("emission_amod_t_per_km", self.emission_amod_t_per_km),
            ("emission_pt_t_per_km", self.emission_pt_t_per_km),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                errs.push(format!("{name} must be nonnegative (got {v})"));
            }
        }
        if !self.pv_intercept_eur.is_finite() {
            errs.push("pv_intercept_eur must be finite".into());
        }
        if !(self.surge_utilization_threshold > 0.0 && self.surge_utilization_threshold <= 1.0) {
            errs.push(format!(
                "surge_utilization_threshold must lie in (0, 1] (got {})",
                self.surge_utilization_threshold
            ));
        }
        if self.vehicle_capacity < 1 {
            errs.push("vehicle_capacity must be at least 1".into());
        }
        if self.moving_average_window < 1 {
            errs.push("moving_average_window must be at least 1".into());
        }
        if !(self.max_travel_time_factor >= 1.0) {
            errs.push(format!("max_travel_time_factor must be at least 1 (got {})", self.max_travel_time_factor));
        }
        if !(self.start_hour >= 0.0 && self.end_hour > self.start_hour && self.end_hour <= 48.0) {
            errs.push(format!("simulation window {}h..{}h is empty or out of range", self.start_hour, self.end_hour));
        }
        if self.crowding_max_factor < 1.0 {
            errs.push(format!("crowding_max_factor must be at least 1 (got {})", self.crowding_max_factor));
        }
        if self.welfare_weights.all().iter().any(|w| !w.is_finite()) {
            errs.push("welfare_weights must be finite".into());
        }
        for c in &self.cluster {
            for (name, v) in [("v1_kmh", c.v1_kmh), ("v2_kmh", c.v2_kmh)] {
                if let Some(v) = v {
                    if !(v.is_finite() && v > 0.0) {
                        errs.push(format!("cluster {}: {name} must be strictly positive (got {v})", c.id));
                    }
                }
            }
        }
        for b in &self.background {
            if !(b.density.is_finite() && b.density >= 0.0) || b.hour > 47 {
                errs.push(format!("background density for hour {} cluster {} is invalid", b.hour, b.cluster));
            }
        }
        for b in &self.pt_background {
            if !(b.riders.is_finite() && b.riders >= 0.0) || b.hour > 47 {
                errs.push(format!("pt background riders for hour {} are invalid", b.hour));
            }
        }
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        Ok(ScenarioParams {
            time_step: self.time_step_s,
            start: self.start_hour * 3600.0,
            end: self.end_hour * 3600.0,
            inner_cluster: self.inner_cluster,
            value_of_time: self.value_of_time_eur_per_h / 3600.0,
            pv_distance_cost: self.pv_distance_cost_eur_per_km / 1000.0,
            pv_intercept: self.pv_intercept_eur,
            walk_speed: self.walk_speed_m_per_s,
            transfer_penalty: self.transfer_penalty_eur,
            pt_fare: self.pt_fare_eur,
            boarding_time: self.boarding_time_s,
            vehicle_capacity: self.vehicle_capacity as usize,
            max_wait: self.max_wait_s,
            max_relative_detour: self.max_relative_detour,
            amod_fixed_cost: self.amod_fixed_cost_eur,
            amod_distance_cost: self.amod_distance_cost_eur_per_km / 1000.0,
            min_fare: self.min_fare_eur,
            surge_utilization_threshold: self.surge_utilization_threshold,
            toll_density_threshold: self.toll_density_threshold,
            co2_cost: self.co2_cost_eur_per_t,
            emission_pv: self.emission_pv_t_per_km / 1000.0,
            emission_amod: self.emission_amod_t_per_km / 1000.0,
            emission_pt: self.emission_pt_t_per_km / 1000.0,
            crowding_max_factor: self.crowding_max_factor,
            pt_capacity_reduction: self.pt_capacity_reduction,
            moving_average_window: self.moving_average_window,
            max_travel_time_factor: self.max_travel_time_factor,
            logit_scale: self.logit_scale,
            welfare_weights: self.welfare_weights,
        })
    }
}

/// Regulator variables followed by operator variables, in quoted units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    /// euro per parking event
    pub parking_fee: f64,
    /// euro per km inside the toll zone at twice the threshold density
    pub toll_rate: f64,
    pub pt_frequency_scale: f64,
    /// Vehicle licenses.
    pub fleet_cap: f64,
    pub fleet_size: f64,
    /// euro per km of direct route
    pub distance_fare: f64,
    pub surge_factor: f64,
}

pub const REGULATOR_DIM: usize = 4;
pub const OPERATOR_DIM: usize = 3;
pub const DECISION_NAMES: [&str; 7] =
    ["parking_fee", "toll_rate", "pt_frequency_scale", "fleet_cap", "fleet_size", "distance_fare", "surge_factor"];

impl DecisionVector {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.parking_fee,
            self.toll_rate,
            self.pt_frequency_scale,
            self.fleet_cap,
            self.fleet_size,
            self.distance_fare,
            self.surge_factor,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            parking_fee: a[0],
            toll_rate: a[1],
            pt_frequency_scale: a[2],
            fleet_cap: a[3],
            fleet_size: a[4],
            distance_fare: a[5],
            surge_factor: a[6],
        }
    }

    /// Sets a component by name (`KEY=VALUE` overrides).
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let i = DECISION_NAMES
            .iter()
            .position(|n| *n == key)
            .ok_or_else(|| Error::invalid(format!("unknown decision variable '{key}' (expected one of {})", DECISION_NAMES.join(", "))))?;
        let mut a = self.to_array();
        a[i] = value;
        *self = Self::from_array(a);
        Ok(())
    }

    /// Vehicles actually deployed: the operator's fleet limited by the license cap.
    pub fn effective_fleet(&self) -> usize {
        crate::policy::apply_fleet_cap(self.fleet_size, self.fleet_cap)
    }
}

/// `[lower, upper]` per decision variable, plus the unregulated reference setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionBounds {
    pub parking_fee: [f64; 2],
    pub toll_rate: [f64; 2],
    pub pt_frequency_scale: [f64; 2],
    pub fleet_cap: [f64; 2],
    /// The upper end is further limited by the fleet cap of the regulator.
    pub fleet_size: [f64; 2],
    pub distance_fare: [f64; 2],
    pub surge_factor: [f64; 2],
    /// Regulator setting without regulation; defaults to the lowest parking fee,
    /// no toll, unchanged transit and the largest fleet cap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status_quo: Option<[f64; 4]>,
}

impl Default for DecisionBounds {
    fn default() -> Self {
        Self {
            parking_fee: [2.50, 5.00],
            toll_rate: [0.0, 1.00],
            pt_frequency_scale: [0.25, 2.0],
            fleet_cap: [1.0, 50_000.0],
            fleet_size: [0.0, 50_000.0],
            distance_fare: [0.25, 2.00],
            surge_factor: [1.0, 10.0],
            status_quo: None,
        }
    }
}

impl DecisionBounds {
    pub fn ranges(&self) -> [[f64; 2]; 7] {
        [
            self.parking_fee,
            self.toll_rate,
            self.pt_frequency_scale,
            self.fleet_cap,
            self.fleet_size,
            self.distance_fare,
            self.surge_factor,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, [lo, hi]) in DECISION_NAMES.iter().zip(self.ranges()) {
            if !(lo.is_finite() && hi.is_finite()) {
                errs.push(format!("bounds.{name} must be finite"));
            } else if lo > hi {
                errs.push(format!("bounds.{name}: lower {lo} exceeds upper {hi}"));
            }
        }
        if self.pt_frequency_scale[0] <= 0.0 {
            errs.push("bounds.pt_frequency_scale must stay strictly positive".into());
        }
        for (name, [lo, _]) in [
            ("parking_fee", self.parking_fee),
            ("toll_rate", self.toll_rate),
            ("fleet_cap", self.fleet_cap),
            ("fleet_size", self.fleet_size),
        ] {
            if lo < 0.0 {
                errs.push(format!("bounds.{name} must be nonnegative"));
            }
        }
        if self.distance_fare[0] < 0.0 || self.surge_factor[0] < 1.0 {
            errs.push("bounds: distance_fare must be nonnegative and surge_factor at least 1".into());
        }
        if errs.is_empty() {
            let sq = self.status_quo();
            for i in 0..REGULATOR_DIM {
                let [lo, hi] = self.ranges()[i];
                if !(sq[i] >= lo && sq[i] <= hi) {
                    errs.push(format!("bounds.status_quo: {} = {} lies outside [{lo}, {hi}]", DECISION_NAMES[i], sq[i]));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn status_quo(&self) -> [f64; 4] {
        self.status_quo.unwrap_or([self.parking_fee[0], 0.0_f64.max(self.toll_rate[0]), 1.0, self.fleet_cap[1]])
    }

    /// Status-quo regulation combined with the given operator variables.
    pub fn status_quo_decision(&self, fleet_size: f64, distance_fare: f64, surge_factor: f64) -> DecisionVector {
        let [p, t, pt, cap] = self.status_quo();
        DecisionVector {
            parking_fee: p,
            toll_rate: t,
            pt_frequency_scale: pt,
            fleet_cap: cap,
            fleet_size,
            distance_fare,
            surge_factor,
        }
    }

    /// Linear map into `[0, 1]`; a degenerate range maps to 0.
    pub fn normalize(&self, d: &DecisionVector) -> [f64; 7] {
        let mut u = [0.0; 7];
        for (i, (x, [lo, hi])) in d.to_array().into_iter().zip(self.ranges()).enumerate() {
            u[i] = if hi > lo { (x - lo) / (hi - lo) } else { 0.0 };
        }
        u
    }

    /// Inverse of [`normalize`](Self::normalize); exact at both ends of every range.
    pub fn denormalize(&self, u: &[f64; 7]) -> DecisionVector {
        let mut x = [0.0; 7];
        for (i, [lo, hi]) in self.ranges().into_iter().enumerate() {
            x[i] = lo * (1.0 - u[i]) + hi * u[i];
        }
        DecisionVector::from_array(x)
    }

    pub fn contains(&self, d: &DecisionVector) -> bool {
        d.to_array().into_iter().zip(self.ranges()).all(|(x, [lo, hi])| x >= lo && x <= hi)
            && d.fleet_size <= d.fleet_cap.max(self.fleet_size[0])
    }

    /// Upper end of the normalized fleet-size coordinate once the cap `fleet_cap` binds.
    pub fn fleet_size_upper_unit(&self, fleet_cap: f64) -> f64 {
        let [lo, hi] = self.fleet_size;
        if hi <= lo {
            return 0.0;
        }
        ((fleet_cap - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}
