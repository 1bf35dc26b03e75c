//! Regulator instruments as pure functions.

pub const NOON: f64 = 12.0 * 3600.0;

/// Parking fee charged to a private-vehicle trip starting at `time` (seconds since
/// midnight). Morning trips pay at an inner destination, afternoon trips at an
/// inner origin.
pub fn parking_fee(fee: f64, time: f64, origin_inner: bool, destination_inner: bool) -> f64 {
    let parked_inner = if time < NOON { destination_inner } else { origin_inner };
    if parked_inner {
        fee
    } else {
        0.0
    }
}

/// Private-vehicle toll: relative density excess `(k − k0)/k0` times the rate
/// (euro/km) times kilometers driven in the toll zone.
pub fn pv_toll(density: f64, threshold: f64, rate_per_km: f64, zone_distance_m: f64) -> f64 {
    ((density - threshold) / threshold).max(0.0) * rate_per_km * zone_distance_m / 1000.0
}

/// Fleet toll for one time step: absolute density excess `k − k0` times the rate
/// times the number of fleet vehicles driving in the toll zone.
pub fn amod_toll_tick(density: f64, threshold: f64, rate: f64, vehicles_in_zone: usize) -> f64 {
    (density - threshold).max(0.0) * rate * vehicles_in_zone as f64
}

/// Deployed vehicles: the operator's fleet limited by the license cap, rounded to
/// whole vehicles.
pub fn apply_fleet_cap(fleet_size: f64, fleet_cap: f64) -> usize {
    fleet_size.min(fleet_cap).max(0.0).round() as usize
}

/// Offered fare: distance fare with a floor, scaled by the surge factor when the
/// fleet is busy.
pub fn amod_fare(
    distance_m: f64,
    fare_per_km: f64,
    min_fare: f64,
    surge_factor: f64,
    utilization: f64,
    surge_threshold: f64,
) -> f64 {
    let base = (fare_per_km * distance_m / 1000.0).max(min_fare);
    if utilization >= surge_threshold {
        base * surge_factor
    } else {
        base
    }
}
