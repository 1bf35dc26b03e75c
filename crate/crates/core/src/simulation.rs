//! The day simulation: per-step state update, sequential request processing and
//! accounting of profit and welfare components.
//!
//! Each step first moves fleet vehicles and private trips, releases transit riders,
//! refreshes cluster congestion and charges the fleet toll, then serves the requests
//! issued during the step in ascending time order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{generate_requests, Request};
use crate::error::{Error, Result};
use crate::fleet::{Fleet, FleetConfig, Roads};
use crate::mode_choice::{amod_cost, choose, pt_cost, pv_cost, Mode, ModeCosts};
use crate::params::{DecisionVector, WelfareWeights};
use crate::policy;
use crate::scenario_io::Scenario;
use crate::transit::{ride_steps, TransitState};

/// Mixed into the seed of the mode-choice streams so they differ from demand streams.
const CHOICE_SALT: u64 = 0x6d6f_6465_5f63_686f;

macro_rules! components {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $($(#[$fmeta])* pub $field: f64,)*
        }

        impl $name {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn values(&self) -> Vec<f64> {
                vec![$(self.$field),*]
            }

            pub fn from_values(v: &[f64]) -> Self {
                let mut it = v.iter().copied();
                Self { $($field: it.next().expect("one value per field"),)* }
            }

            /// Component-wise arithmetic mean.
            pub fn mean<'a>(items: impl IntoIterator<Item = &'a Self>) -> Self {
                let mut sum = vec![0.0; Self::NAMES.len()];
                let mut n = 0usize;
                for item in items {
                    for (s, x) in sum.iter_mut().zip(item.values()) {
                        *s += x;
                    }
                    n += 1;
                }
                Self::from_values(&sum.iter().map(|s| s / n.max(1) as f64).collect::<Vec<_>>())
            }
        }
    };
}

components!(
    /// Unweighted welfare terms in euros, all nonnegative magnitudes except utility.
    WelfareBreakdown {
        total_traveler_utility,
        pt_revenue,
        pt_cost,
        parking_revenue,
        pv_toll_revenue,
        amod_toll_revenue,
        pv_emission_cost,
        amod_emission_cost,
        pt_emission_cost,
    }
);

components!(
    /// Operator profit terms in euros.
    ProfitBreakdown { fare_revenue, fixed_costs, variable_costs, toll_costs }
);

components!(
    /// Service indicators. Shares are fractions of all requests; AMOD times are the
    /// planned values quoted in accepted offers.
    ServiceKpis {
        requests,
        pv_share,
        pt_share,
        amod_share,
        /// Requests that received an AMOD offer.
        offer_share,
        mean_wait_s,
        /// Mean of planned ride time over direct time, minus one.
        mean_relative_detour,
        /// Passenger-km over vehicle-km.
        occupancy,
        empty_vkt_share,
        /// Mean over steps of the share of vehicles with a non-empty plan.
        utilization,
        fleet_size,
        amod_vkt_km,
        pv_vkt_km,
        /// Mean over steps, veh/lane-km.
        mean_inner_density,
        mean_crowding,
    }
);

impl WelfareBreakdown {
    /// Weighted welfare. Revenues and utility add, costs subtract.
    pub fn welfare(&self, w: &WelfareWeights) -> f64 {
        w.utility * self.total_traveler_utility + w.pt_revenue * self.pt_revenue - w.pt_cost * self.pt_cost
            + w.parking * self.parking_revenue
            + w.pv_toll * self.pv_toll_revenue
            + w.amod_toll * self.amod_toll_revenue
            - (w.pv_emission * self.pv_emission_cost
                + w.amod_emission * self.amod_emission_cost
                + w.pt_emission * self.pt_emission_cost)
    }
}

impl ProfitBreakdown {
    pub fn profit(&self) -> f64 {
        self.fare_revenue - self.fixed_costs - self.variable_costs - self.toll_costs
    }
}

/// Outcome of one simulated day for one decision and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub decision: DecisionVector,
    pub seed: u64,
    pub welfare_components: WelfareBreakdown,
    pub profit_components: ProfitBreakdown,
    pub service_kpis: ServiceKpis,
    /// Welfare under the scenario's weights.
    pub welfare: f64,
    pub profit: f64,
}

impl ResultRecord {
    /// Checks the profit identity and the stored welfare against its components.
    pub fn validate(&self, weights: &WelfareWeights) -> Result<()> {
        let p = self.profit_components.profit();
        if (p - self.profit).abs() > 1e-6 * p.abs().max(1.0) {
            return Err(Error::Contract(format!("profit {} disagrees with its components ({p})", self.profit)));
        }
        let w = self.welfare_components.welfare(weights);
        if (w - self.welfare).abs() > 1e-6 * w.abs().max(1.0) {
            return Err(Error::Contract(format!("welfare {} disagrees with its components ({w})", self.welfare)));
        }
        Ok(())
    }

    pub fn reweighted(&self, weights: &WelfareWeights) -> f64 {
        self.welfare_components.welfare(weights)
    }
}

/// Seed-averaged outcome for one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub decision: DecisionVector,
    pub seeds: Vec<u64>,
    pub welfare_components: WelfareBreakdown,
    pub profit_components: ProfitBreakdown,
    pub service_kpis: ServiceKpis,
    /// Mean of the per-seed totals.
    pub welfare: f64,
    pub profit: f64,
}

/// Means over runs sharing one decision.
pub fn aggregate_runs(records: &[ResultRecord]) -> Result<AggregateRecord> {
    let first = records.first().ok_or_else(|| Error::Contract("no records to aggregate".into()))?;
    if let Some(r) = records.iter().find(|r| r.decision != first.decision) {
        return Err(Error::Contract(format!(
            "records mix decisions {:?} and {:?}",
            first.decision.to_array(),
            r.decision.to_array()
        )));
    }
    let n = records.len() as f64;
    Ok(AggregateRecord {
        decision: first.decision,
        seeds: records.iter().map(|r| r.seed).collect(),
        welfare_components: WelfareBreakdown::mean(records.iter().map(|r| &r.welfare_components)),
        profit_components: ProfitBreakdown::mean(records.iter().map(|r| &r.profit_components)),
        service_kpis: ServiceKpis::mean(records.iter().map(|r| &r.service_kpis)),
        welfare: records.iter().map(|r| r.welfare).sum::<f64>() / n,
        profit: records.iter().map(|r| r.profit).sum::<f64>() / n,
    })
}

/// State of the system at the start of one step, after the update phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub time: f64,
    /// veh/lane-km per cluster, in cluster id order.
    pub density: Vec<f64>,
    pub travel_time_factor: Vec<f64>,
    pub pt_onboard: f64,
    pub crowding: f64,
    pub idle_vehicles: usize,
    /// Active vehicles per onboard count `0..=capacity`.
    pub active_by_occupancy: Vec<usize>,
    pub amod_toll: f64,
}

/// What one traveler was quoted and charged for the chosen mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TravelerLog {
    pub request: usize,
    pub time: f64,
    pub mode: Mode,
    pub cost: f64,
    pub had_offer: bool,
    /// AMOD fare or PT fare paid.
    pub fare: f64,
    pub pv_toll: f64,
    pub parking: f64,
    pub pv_distance_m: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: ResultRecord,
    pub trace: Vec<TraceRow>,
    pub travelers: Vec<TravelerLog>,
    /// Fares of accepted passengers as booked by the operator.
    pub operator_fares: f64,
    /// Highest onboard count of any vehicle at any step.
    pub max_onboard: usize,
}

/// A private trip counted in cluster densities until its free-flow time runs out.
struct PvTrip {
    /// Free-flow seconds left.
    remaining: f64,
    /// Share of the trip's free-flow time in each cluster.
    shares: Vec<f64>,
}

/// Simulates one day and returns its record.
pub fn run(scenario: &Scenario, decision: &DecisionVector, seed: u64) -> Result<ResultRecord> {
    Ok(run_detailed(scenario, decision, seed)?.record)
}

/// Simulates one day, keeping the per-step trace and per-traveler log.
pub fn run_detailed(scenario: &Scenario, decision: &DecisionVector, seed: u64) -> Result<RunOutput> {
    let p = &scenario.params;
    if !(decision.pt_frequency_scale > 0.0) {
        return Err(Error::Contract("pt frequency scale must be positive".into()));
    }
    let graph = &scenario.graph;
    let paths = &scenario.paths;
    let transit = &scenario.transit;
    let n_clusters = graph.clusters().len();
    let inner = scenario.inner_cluster_index();
    let dt = p.time_step;
    let steps = ((p.end - p.start) / dt).ceil().max(0.0) as u64;
    let scale = decision.pt_frequency_scale;

    let requests = generate_requests(&scenario.od, &scenario.access, p.start, p.end, seed);
    let fleet_size = decision.effective_fleet();
    let mut fleet = Fleet::new(
        FleetConfig {
            capacity: p.vehicle_capacity,
            boarding_time: p.boarding_time,
            max_wait: p.max_wait,
            max_relative_detour: p.max_relative_detour,
            distance_cost: p.amod_distance_cost,
            value_of_time: p.value_of_time,
            min_fare: p.min_fare,
            distance_fare: decision.distance_fare,
            surge_factor: decision.surge_factor,
            surge_threshold: p.surge_utilization_threshold,
        },
        &scenario.vehicle_start_nodes(fleet_size),
    );
    let mut clusters = scenario.cluster_states();
    let mut factors = vec![1.0; n_clusters];
    let mut pt = TransitState::new(scenario.pt_background.clone());
    let mut pv_trips: Vec<PvTrip> = Vec::new();

    let mut w = WelfareBreakdown::default();
    let mut profit = ProfitBreakdown::default();
    let mut trace = Vec::with_capacity(steps as usize);
    let mut travelers = Vec::with_capacity(requests.len());
    let (mut n_pv, mut n_pt, mut n_amod, mut n_offers) = (0usize, 0usize, 0usize, 0usize);
    let (mut wait_sum, mut detour_sum, mut detour_n) = (0.0, 0.0, 0usize);
    let (mut pv_distance, mut util_sum, mut density_sum, mut crowding_sum) = (0.0, 0.0, 0.0, 0.0);
    let mut max_onboard = 0usize;
    let mut next = 0usize;

    for step in 0..steps {
        let t = p.start + step as f64 * dt;

        // state update
        if step > 0 {
            let roads = Roads { graph, paths, factors: &factors };
            fleet.advance(t - dt, dt, &roads);
            pv_trips.retain_mut(|trip| {
                let slowdown: f64 = trip.shares.iter().zip(&factors).map(|(s, f)| s * f).sum();
                trip.remaining -= dt / slowdown.max(1.0);
                trip.remaining > 0.0
            });
        }
        max_onboard = max_onboard.max(fleet.vehicles().iter().map(|v| v.onboard.len()).max().unwrap_or(0));
        let eta = pt.update(transit, step, t, scale);
        let mut counts: Vec<f64> = fleet.driving_per_cluster(graph).into_iter().map(|c| c as f64).collect();
        for trip in &pv_trips {
            for (c, s) in counts.iter_mut().zip(&trip.shares) {
                *c += s;
            }
        }
        for (c, state) in clusters.iter_mut().enumerate() {
            state.update(counts[c], t);
            factors[c] = state.factor;
        }
        let k_inner = clusters[inner].density;
        let in_zone = fleet.driving_per_cluster(graph)[inner];
        let tick = policy::amod_toll_tick(k_inner, p.toll_density_threshold, decision.toll_rate, in_zone);
        profit.toll_costs += tick;
        w.amod_toll_revenue += tick;
        util_sum += fleet.utilization();
        density_sum += k_inner;
        crowding_sum += eta;
        let (idle, active) = fleet.occupancy_classes();
        trace.push(TraceRow {
            time: t,
            density: clusters.iter().map(|c| c.density).collect(),
            travel_time_factor: factors.clone(),
            pt_onboard: pt.onboard,
            crowding: eta,
            idle_vehicles: idle,
            active_by_occupancy: active,
            amod_toll: tick,
        });

        // requests issued during this step, already in time order
        let roads = Roads { graph, paths, factors: &factors };
        while next < requests.len() && requests[next].time < t + dt {
            let r = &requests[next];
            next += 1;
            let (o, d) = (graph.node(r.origin), graph.node(r.destination));
            let pv_time = roads.time(r.origin, r.destination);
            let pv_dist = roads.distance(r.origin, r.destination);
            let inner_dist = if r.origin == r.destination { 0.0 } else { paths.distance_split(r.origin, r.destination)[inner] };
            let toll = policy::pv_toll(k_inner, p.toll_density_threshold, decision.toll_rate, inner_dist);
            let parking = policy::parking_fee(
                decision.parking_fee,
                r.time,
                o.cluster == p.inner_cluster,
                d.cluster == p.inner_cluster,
            );
            let pt_offer = transit.query(o, d);
            // the fleet sees requests at the start of their step
            let quantized = Request { time: t, ..r.clone() };
            let offer = fleet.make_offer(&quantized, t, &roads);
            let costs = ModeCosts {
                pv: pv_time.is_finite().then(|| pv_cost(p, pv_time, pv_dist, toll, parking)),
                pt: pt_offer.map(|o| pt_cost(p, &o, eta, scale)),
                amod: offer.as_ref().map(|o| amod_cost(p, o.fare, o.ride, o.wait)),
            };
            if costs.available().next().is_none() {
                return Err(Error::Contract(format!("request {} has no available mode", r.id)));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ CHOICE_SALT);
            rng.set_stream(r.id as u64);
            let mode = choose(&costs, p.logit_scale, &mut rng);
            if offer.is_some() {
                n_offers += 1;
                fleet.commit(r.id, mode == Mode::Amod)?;
            }
            let cost = costs.get(mode).expect("chosen mode is available");
            w.total_traveler_utility -= cost;
            let mut log = TravelerLog {
                request: r.id,
                time: r.time,
                mode,
                cost,
                had_offer: offer.is_some(),
                fare: 0.0,
                pv_toll: 0.0,
                parking: 0.0,
                pv_distance_m: 0.0,
            };
            match mode {
                Mode::Pv => {
                    n_pv += 1;
                    w.parking_revenue += parking;
                    w.pv_toll_revenue += toll;
                    pv_distance += pv_dist;
                    log.pv_toll = toll;
                    log.parking = parking;
                    log.pv_distance_m = pv_dist;
                    let ff = paths.free_flow_time(r.origin, r.destination);
                    if r.origin != r.destination && ff > 0.0 {
                        let shares = paths.time_split(r.origin, r.destination).iter().map(|x| x / ff).collect();
                        pv_trips.push(PvTrip { remaining: ff, shares });
                    }
                }
                Mode::Pt => {
                    n_pt += 1;
                    let o = pt_offer.expect("chosen mode is available");
                    w.pt_revenue += o.fare;
                    log.fare = o.fare;
                    pt.board(step + 1, ride_steps(o.in_vehicle_s, dt));
                }
                Mode::Amod => {
                    n_amod += 1;
                    let o = offer.as_ref().expect("chosen mode is available");
                    profit.fare_revenue += o.fare;
                    log.fare = o.fare;
                    wait_sum += o.wait;
                    let direct = fleet.passenger(r.id).expect("accepted passenger").direct_time;
                    if direct > 0.0 {
                        detour_sum += o.ride / direct - 1.0;
                        detour_n += 1;
                    }
                }
            }
            travelers.push(log);
        }
    }

    let hours = p.horizon_hours();
    let amod_distance: f64 = fleet.vehicles().iter().map(|v| v.distance).sum();
    let passenger_distance: f64 = fleet.vehicles().iter().map(|v| v.passenger_distance).sum();
    let empty_distance: f64 = fleet.vehicles().iter().map(|v| v.empty_distance).sum();
    profit.fixed_costs = fleet_size as f64 * p.amod_fixed_cost;
    profit.variable_costs = p.amod_distance_cost * amod_distance;
    w.pt_cost = transit.cost(hours, scale);
    w.pv_emission_cost = p.co2_cost * p.emission_pv * pv_distance;
    w.amod_emission_cost = p.co2_cost * p.emission_amod * amod_distance;
    w.pt_emission_cost = p.co2_cost * transit.emissions(hours, scale);

    let n = requests.len();
    let share = |k: usize| if n > 0 { k as f64 / n as f64 } else { 0.0 };
    let per_step = |x: f64| if steps > 0 { x / steps as f64 } else { 0.0 };
    let kpis = ServiceKpis {
        requests: n as f64,
        pv_share: share(n_pv),
        pt_share: share(n_pt),
        amod_share: share(n_amod),
        offer_share: share(n_offers),
        mean_wait_s: if n_amod > 0 { wait_sum / n_amod as f64 } else { 0.0 },
        mean_relative_detour: if detour_n > 0 { detour_sum / detour_n as f64 } else { 0.0 },
        occupancy: if amod_distance > 0.0 { passenger_distance / amod_distance } else { 0.0 },
        empty_vkt_share: if amod_distance > 0.0 { empty_distance / amod_distance } else { 0.0 },
        utilization: per_step(util_sum),
        fleet_size: fleet_size as f64,
        amod_vkt_km: amod_distance / 1000.0,
        pv_vkt_km: pv_distance / 1000.0,
        mean_inner_density: per_step(density_sum),
        mean_crowding: per_step(crowding_sum),
    };
    let record = ResultRecord {
        decision: *decision,
        seed,
        welfare: w.welfare(&p.welfare_weights),
        profit: profit.profit(),
        welfare_components: w,
        profit_components: profit,
        service_kpis: kpis,
    };
    let operator_fares = fleet.passengers().values().map(|p| p.fare).sum();
    Ok(RunOutput { record, trace, travelers, operator_fares, max_onboard })
}
