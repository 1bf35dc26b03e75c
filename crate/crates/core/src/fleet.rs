//! The on-demand operator: vehicle plans, sequential insertion, offers and movement.
//!
//! Plans are ordered stop lists. Timing is always recomputed from the vehicle's next
//! free position with travel times frozen at the moment of the computation. Each
//! boarding or alighting passenger adds `B` seconds of dwell at the stop.

use std::collections::BTreeMap;

use crate::demand::Request;
use crate::network::{Graph, PathTable};
use crate::policy;

/// Read-only view of the road network with the current travel-time factors.
#[derive(Clone, Copy)]
pub struct Roads<'a> {
    pub graph: &'a Graph,
    pub paths: &'a PathTable,
    pub factors: &'a [f64],
}

impl Roads<'_> {
    /// Current travel time; infinite when unreachable.
    pub fn time(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        if !self.paths.reachable(a, b) {
            return f64::INFINITY;
        }
        crate::network::scaled_time(self.paths.time_split(a, b), self.factors)
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.paths.distance(a, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetConfig {
    pub capacity: usize,
    pub boarding_time: f64,
    pub max_wait: f64,
    pub max_relative_detour: f64,
    /// euro per meter driven
    pub distance_cost: f64,
    /// euro per second of passenger time
    pub value_of_time: f64,
    pub min_fare: f64,
    /// euro per km of direct distance
    pub distance_fare: f64,
    pub surge_factor: f64,
    pub surge_threshold: f64,
}

/// Candidates ranked by time until idle.
pub const IDLE_CANDIDATES: usize = 5;
/// Candidates ranked by heading.
pub const HEADING_CANDIDATES: usize = 5;
pub const MAX_CANDIDATES: usize = IDLE_CANDIDATES + HEADING_CANDIDATES;

/// Relative slack on hard time constraints.
const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub node: usize,
    pub board: Vec<usize>,
    pub alight: Vec<usize>,
}

impl Stop {
    pub fn events(&self) -> usize {
        self.board.len() + self.alight.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Position {
    Node(usize),
    /// On edge `edge` with `remaining` free-flow seconds to its end.
    Edge { edge: usize, remaining: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: usize,
    pub position: Position,
    /// Seconds of boarding/alighting left at the current node.
    pub dwell: f64,
    pub plan: Vec<Stop>,
    pub onboard: Vec<usize>,
    /// Meters driven.
    pub distance: f64,
    /// Passenger-meters (distance weighted by onboard count).
    pub passenger_distance: f64,
    /// Meters driven without passengers.
    pub empty_distance: f64,
}

impl Vehicle {
    pub fn new(id: usize, node: usize) -> Self {
        Self {
            id,
            position: Position::Node(node),
            dwell: 0.0,
            plan: Vec::new(),
            onboard: Vec::new(),
            distance: 0.0,
            passenger_distance: 0.0,
            empty_distance: 0.0,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.plan.is_empty()
    }

    /// Node and time at which the vehicle is next free to follow a new plan: the end
    /// of its current edge, or its node once dwelling is over.
    pub fn start(&self, now: f64, roads: &Roads) -> (usize, f64) {
        match self.position {
            Position::Node(n) => (n, now + self.dwell),
            Position::Edge { edge, remaining } => {
                let c = roads.graph.edge_cluster(edge);
                (roads.graph.edge_target(edge), now + remaining * roads.factors[c])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Passenger {
    pub id: usize,
    pub origin: usize,
    pub destination: usize,
    pub request_time: f64,
    /// Direct travel time when the offer was made; bounds the ride time.
    pub direct_time: f64,
    pub direct_distance: f64,
    pub fare: f64,
    pub offered_wait: f64,
    pub offered_ride: f64,
    pub vehicle: usize,
    pub pickup_arrival: Option<f64>,
    pub pickup_departure: Option<f64>,
    pub dropoff: Option<f64>,
}

/// Timing of a plan evaluated from a start position.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanTiming {
    pub arrivals: Vec<f64>,
    pub departures: Vec<f64>,
    /// Meters from the start node through the last stop.
    pub distance: f64,
    /// `c_D · distance + VOT · Σ (drop-off arrival − request time)` over every
    /// passenger dropped off in the plan.
    pub cost: f64,
    /// All capacity, wait and detour constraints hold.
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Insertion {
    pub vehicle: usize,
    pub plan: Vec<Stop>,
    /// Objective increase over the vehicle's current plan.
    pub delta_cost: f64,
    pub wait: f64,
    pub ride: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Offer {
    pub request: usize,
    pub vehicle: usize,
    pub fare: f64,
    pub wait: f64,
    pub ride: f64,
    pub delta_cost: f64,
    pub plan: Vec<Stop>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FleetEvent {
    Pickup { passenger: usize, vehicle: usize, time: f64 },
    Dropoff { passenger: usize, vehicle: usize, time: f64 },
}

#[derive(Debug, Clone)]
struct Pending {
    offer: Offer,
    passenger: Passenger,
}

#[derive(Debug, Clone)]
pub struct Fleet {
    config: FleetConfig,
    vehicles: Vec<Vehicle>,
    passengers: BTreeMap<usize, Passenger>,
    pending: Option<Pending>,
}

impl Fleet {
    /// Vehicles start idle at the given nodes, numbered in order.
    pub fn new(config: FleetConfig, start_nodes: &[usize]) -> Self {
        let vehicles = start_nodes.iter().enumerate().map(|(i, &n)| Vehicle::new(i, n)).collect();
        Self { config, vehicles, passengers: BTreeMap::new(), pending: None }
    }

    pub fn config(&self) -> &FleetConfig {
        &self.config
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn passengers(&self) -> &BTreeMap<usize, Passenger> {
        &self.passengers
    }

    pub fn passenger(&self, id: usize) -> Option<&Passenger> {
        self.passengers.get(&id)
    }

    /// Share of vehicles with a non-empty plan (carrying or heading to passengers).
    pub fn utilization(&self) -> f64 {
        if self.vehicles.is_empty() {
            return 0.0;
        }
        self.vehicles.iter().filter(|v| !v.is_idle()).count() as f64 / self.vehicles.len() as f64
    }

    /// Evaluates `plan` for vehicle `v` starting at `(node, time)`. `extra` supplies a
    /// passenger not yet registered (the one being inserted).
    pub fn evaluate_plan(
        &self,
        v: &Vehicle,
        start: (usize, f64),
        plan: &[Stop],
        extra: Option<&Passenger>,
        roads: &Roads,
    ) -> PlanTiming {
        let cfg = &self.config;
        let lookup = |id: usize| -> &Passenger {
            match extra {
                Some(p) if p.id == id => p,
                _ => &self.passengers[&id],
            }
        };
        let mut picked: BTreeMap<usize, f64> = BTreeMap::new();
        let mut load = v.onboard.len();
        let (mut at, mut clock) = start;
        let mut distance = 0.0;
        let mut delay = 0.0;
        let mut feasible = load <= cfg.capacity;
        let mut arrivals = Vec::with_capacity(plan.len());
        let mut departures = Vec::with_capacity(plan.len());
        for stop in plan {
            let arrive = clock + roads.time(at, stop.node);
            distance += if at == stop.node { 0.0 } else { roads.distance(at, stop.node) };
            let depart = arrive + cfg.boarding_time * stop.events() as f64;
            for &id in &stop.alight {
                let p = lookup(id);
                let boarded = picked.get(&id).copied().or(p.pickup_departure).unwrap_or(arrive);
                let limit = (1.0 + cfg.max_relative_detour) * p.direct_time;
                if arrive - boarded > limit + SLACK * (1.0 + limit) {
                    feasible = false;
                }
                delay += arrive - p.request_time;
            }
            load = load + stop.board.len() - stop.alight.len().min(load + stop.board.len());
            if load > cfg.capacity {
                feasible = false;
            }
            for &id in &stop.board {
                let p = lookup(id);
                if arrive - p.request_time > cfg.max_wait + SLACK * (1.0 + cfg.max_wait) {
                    feasible = false;
                }
                picked.insert(id, depart);
            }
            arrivals.push(arrive);
            departures.push(depart);
            at = stop.node;
            clock = depart;
        }
        if !arrivals.iter().all(|t| t.is_finite()) {
            feasible = false;
        }
        PlanTiming { arrivals, departures, distance, cost: cfg.distance_cost * distance + cfg.value_of_time * delay, feasible }
    }

    /// Cheapest feasible insertion of `passenger` into vehicle `vi`'s plan, keeping the
    /// order of existing stops. Ties keep the earliest (pickup, drop-off) positions.
    pub fn best_insertion(&self, vi: usize, passenger: &Passenger, now: f64, roads: &Roads) -> Option<Insertion> {
        let v = &self.vehicles[vi];
        let start = v.start(now, roads);
        let base = self.evaluate_plan(v, start, &v.plan, None, roads).cost;
        let m = v.plan.len();
        let mut best: Option<Insertion> = None;
        for i in 0..=m {
            for j in i..=m {
                let mut plan = Vec::with_capacity(m + 2);
                plan.extend_from_slice(&v.plan[..i]);
                plan.push(Stop { node: passenger.origin, board: vec![passenger.id], alight: vec![] });
                plan.extend_from_slice(&v.plan[i..j]);
                plan.push(Stop { node: passenger.destination, board: vec![], alight: vec![passenger.id] });
                plan.extend_from_slice(&v.plan[j..]);
                let t = self.evaluate_plan(v, start, &plan, Some(passenger), roads);
                if !t.feasible {
                    continue;
                }
                let delta = t.cost - base;
                if best.as_ref().is_none_or(|b| delta < b.delta_cost) {
                    let (pu, dropoff) = (i, j + 1);
                    best = Some(Insertion {
                        vehicle: vi,
                        wait: t.arrivals[pu] - passenger.request_time,
                        ride: t.arrivals[dropoff] - t.departures[pu],
                        plan,
                        delta_cost: delta,
                    });
                }
            }
        }
        best
    }

    /// Up to ten vehicles able to reach the origin within the wait limit: five ranked
    /// by time until idle, then up to five busy vehicles whose heading is closest to
    /// the trip's, topped up from the idle ranking. Ties go to the lower id.
    pub fn candidates(&self, request: &Request, now: f64, roads: &Roads) -> Vec<usize> {
        let reach: Vec<(usize, f64)> = self
            .vehicles
            .iter()
            .filter_map(|v| {
                let (node, t) = v.start(now, roads);
                let arrive = t + roads.time(node, request.origin);
                (arrive - now <= self.config.max_wait * (1.0 + SLACK)).then_some((v.id, t))
            })
            .collect();
        let mut by_idle: Vec<(f64, usize)> = reach
            .iter()
            .map(|&(id, t)| {
                let v = &self.vehicles[id];
                let until = if v.is_idle() { 0.0 } else { self.completion_time(v, (v.start(now, roads).0, t), roads) - now };
                (until, id)
            })
            .collect();
        by_idle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = by_idle.iter().take(IDLE_CANDIDATES).map(|x| x.1).collect();

        let g = roads.graph;
        let trip = heading(g, request.origin, request.destination);
        let mut by_heading: Vec<(f64, usize)> = reach
            .iter()
            .filter_map(|&(id, _)| {
                let v = &self.vehicles[id];
                if v.is_idle() || chosen.contains(&id) {
                    return None;
                }
                let here = v.start(now, roads).0;
                let last = v.plan.last().expect("busy").node;
                let h = heading(g, here, last)?;
                let d = match trip {
                    Some(t) => angle_between(h, t),
                    None => 0.0,
                };
                Some((d, id))
            })
            .collect();
        by_heading.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        chosen.extend(by_heading.iter().take(HEADING_CANDIDATES).map(|x| x.1));
        for &(_, id) in by_idle.iter().skip(IDLE_CANDIDATES) {
            if chosen.len() >= MAX_CANDIDATES {
                break;
            }
            if !chosen.contains(&id) {
                chosen.push(id);
            }
        }
        chosen
    }

    fn completion_time(&self, v: &Vehicle, start: (usize, f64), roads: &Roads) -> f64 {
        let t = self.evaluate_plan(v, start, &v.plan, None, roads);
        t.departures.last().copied().unwrap_or(start.1)
    }

    /// Best offer across candidate vehicles, or `None` when no insertion is feasible.
    /// The tentative plan is held until [`commit`](Self::commit).
    pub fn make_offer(&mut self, request: &Request, now: f64, roads: &Roads) -> Option<Offer> {
        self.pending = None;
        let direct_distance = roads.distance(request.origin, request.destination);
        let direct_time = roads.time(request.origin, request.destination);
        if !direct_time.is_finite() {
            return None;
        }
        let utilization = self.utilization();
        let cfg = &self.config;
        let fare = policy::amod_fare(
            direct_distance,
            cfg.distance_fare,
            cfg.min_fare,
            cfg.surge_factor,
            utilization,
            cfg.surge_threshold,
        );
        let mut passenger = Passenger {
            id: request.id,
            origin: request.origin,
            destination: request.destination,
            request_time: request.time,
            direct_time,
            direct_distance,
            fare,
            offered_wait: 0.0,
            offered_ride: 0.0,
            vehicle: usize::MAX,
            pickup_arrival: None,
            pickup_departure: None,
            dropoff: None,
        };
        let mut best: Option<Insertion> = None;
        let mut cands = self.candidates(request, now, roads);
        cands.sort_unstable();
        for vi in cands {
            if let Some(ins) = self.best_insertion(vi, &passenger, now, roads) {
                if best.as_ref().is_none_or(|b| ins.delta_cost < b.delta_cost) {
                    best = Some(ins);
                }
            }
        }
        let ins = best?;
        passenger.vehicle = ins.vehicle;
        passenger.offered_wait = ins.wait;
        passenger.offered_ride = ins.ride;
        let offer = Offer {
            request: request.id,
            vehicle: ins.vehicle,
            fare,
            wait: ins.wait,
            ride: ins.ride,
            delta_cost: ins.delta_cost,
            plan: ins.plan,
        };
        self.pending = Some(Pending { offer: offer.clone(), passenger });
        Some(offer)
    }

    /// Accepting installs the tentative plan; rejecting leaves every plan untouched.
    pub fn commit(&mut self, request: usize, accepted: bool) -> crate::error::Result<()> {
        let pending = match self.pending.take() {
            Some(p) if p.offer.request == request => p,
            other => {
                self.pending = other;
                return Err(crate::error::Error::Contract(format!("no pending offer for request {request}")));
            }
        };
        if accepted {
            self.vehicles[pending.offer.vehicle].plan = pending.offer.plan;
            self.passengers.insert(request, pending.passenger);
        }
        Ok(())
    }

    /// Moves every vehicle for `dt` seconds starting at `now`, executing stops on the
    /// way. Plans are followed even if drifting travel times broke their constraints.
    pub fn advance(&mut self, now: f64, dt: f64, roads: &Roads) -> Vec<FleetEvent> {
        let mut events = Vec::new();
        let boarding = self.config.boarding_time;
        for v in &mut self.vehicles {
            let mut budget = dt;
            loop {
                if v.dwell > 0.0 {
                    let used = v.dwell.min(budget);
                    v.dwell -= used;
                    budget -= used;
                    if v.dwell > 0.0 {
                        break;
                    }
                    continue;
                }
                match v.position {
                    Position::Edge { edge, remaining } => {
                        let e = roads.graph.edge(edge);
                        let factor = roads.factors[roads.graph.edge_cluster(edge)];
                        let needed = remaining * factor;
                        let progressed = if budget >= needed { remaining } else { budget / factor };
                        let meters = e.length_m * progressed / e.free_flow_time();
                        v.distance += meters;
                        v.passenger_distance += meters * v.onboard.len() as f64;
                        if v.onboard.is_empty() {
                            v.empty_distance += meters;
                        }
                        if budget >= needed {
                            budget -= needed;
                            v.position = Position::Node(roads.graph.edge_target(edge));
                        } else {
                            v.position = Position::Edge { edge, remaining: remaining - progressed };
                            break;
                        }
                    }
                    Position::Node(node) => {
                        let Some(stop) = v.plan.first() else { break };
                        if stop.node == node {
                            let stop = v.plan.remove(0);
                            let t = now + dt - budget;
                            for id in &stop.alight {
                                v.onboard.retain(|p| p != id);
                                let p = self.passengers.get_mut(id).expect("assigned passenger");
                                p.dropoff = Some(t);
                                events.push(FleetEvent::Dropoff { passenger: *id, vehicle: v.id, time: t });
                            }
                            v.dwell = boarding * stop.events() as f64;
                            for id in &stop.board {
                                v.onboard.push(*id);
                                let p = self.passengers.get_mut(id).expect("assigned passenger");
                                p.pickup_arrival = Some(t);
                                p.pickup_departure = Some(t + v.dwell);
                                events.push(FleetEvent::Pickup { passenger: *id, vehicle: v.id, time: t });
                            }
                            debug_assert!(v.onboard.len() <= self.config.capacity);
                        } else {
                            let edge = roads.paths.next_edge(node, stop.node).expect("plans only use reachable stops");
                            v.position = Position::Edge { edge, remaining: roads.graph.edge(edge).free_flow_time() };
                        }
                    }
                }
            }
        }
        events
    }

    /// Vehicles currently driving on an edge, per cluster index.
    pub fn driving_per_cluster(&self, graph: &Graph) -> Vec<usize> {
        let mut counts = vec![0; graph.clusters().len()];
        for v in &self.vehicles {
            if let (Position::Edge { edge, .. }, true) = (v.position, v.dwell == 0.0) {
                counts[graph.edge_cluster(edge)] += 1;
            }
        }
        counts
    }

    /// Vehicles per onboard count `0..=capacity`, split into idle (index 0 of the
    /// returned pair) and active ones.
    pub fn occupancy_classes(&self) -> (usize, Vec<usize>) {
        let mut active = vec![0; self.config.capacity + 1];
        let mut idle = 0;
        for v in &self.vehicles {
            if v.is_idle() && v.onboard.is_empty() {
                idle += 1;
            } else {
                active[v.onboard.len().min(self.config.capacity)] += 1;
            }
        }
        (idle, active)
    }
}

fn heading(g: &Graph, from: usize, to: usize) -> Option<f64> {
    let (a, b) = (g.node(from), g.node(to));
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    (dx != 0.0 || dy != 0.0).then(|| dy.atan2(dx))
}

/// Absolute angle difference folded into `[0, π]`.
fn angle_between(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}
