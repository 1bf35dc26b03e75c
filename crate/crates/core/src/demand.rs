//! Traveler requests drawn from hourly OD matrices by Poisson processes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdEntry {
    pub hour: u32,
    pub o_zone: u32,
    pub d_zone: u32,
    pub trips_per_hour: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: usize,
    /// Node indices of the access points.
    pub origin: usize,
    pub destination: usize,
    /// Seconds since midnight.
    pub time: f64,
    pub o_zone: u32,
    pub d_zone: u32,
}

/// Arrival times of a homogeneous Poisson process on `[t0, t1)`.
pub fn poisson_arrivals(rng: &mut impl Rng, rate_per_hour: f64, t0: f64, t1: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if !(rate_per_hour > 0.0) || t1 <= t0 {
        return out;
    }
    let gap = Exp::new(rate_per_hour / 3600.0).expect("positive rate");
    let mut t = t0;
    loop {
        t += gap.sample(rng);
        if t >= t1 {
            return out;
        }
        out.push(t);
    }
}

/// All requests with times in `[start, end)`, sorted by time and numbered in that
/// order. Each OD row draws from its own random stream, so adding a row does not
/// perturb the others.
///
/// Access points are drawn uniformly within the zone; a trip inside one zone with
/// several access points never starts and ends at the same node.
pub fn generate_requests(
    od: &[OdEntry],
    access: &BTreeMap<u32, Vec<usize>>,
    start: f64,
    end: f64,
    seed: u64,
) -> Vec<Request> {
    let mut drawn: Vec<(f64, usize, usize, usize, usize)> = Vec::new();
    for (row, e) in od.iter().enumerate() {
        let t0 = (e.hour as f64 * 3600.0).max(start);
        let t1 = ((e.hour + 1) as f64 * 3600.0).min(end);
        let (Some(os), Some(ds)) = (access.get(&e.o_zone), access.get(&e.d_zone)) else { continue };
        if os.is_empty() || ds.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(row as u64);
        for (k, t) in poisson_arrivals(&mut rng, e.trips_per_hour, t0, t1).into_iter().enumerate() {
            let o = os[rng.random_range(0..os.len())];
            let mut d = ds[rng.random_range(0..ds.len())];
            if e.o_zone == e.d_zone && ds.len() > 1 {
                while d == o {
                    d = ds[rng.random_range(0..ds.len())];
                }
            }
            drawn.push((t, row, k, o, d));
        }
    }
    drawn.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    drawn
        .into_iter()
        .enumerate()
        .map(|(id, (time, row, _, origin, destination))| Request {
            id,
            origin,
            destination,
            time,
            o_zone: od[row].o_zone,
            d_zone: od[row].d_zone,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn access() -> BTreeMap<u32, Vec<usize>> {
        BTreeMap::from([(1, vec![0, 1, 2]), (2, vec![3])])
    }

    fn od(rate: f64) -> Vec<OdEntry> {
        vec![
            OdEntry { hour: 6, o_zone: 1, d_zone: 2, trips_per_hour: rate },
            OdEntry { hour: 6, o_zone: 1, d_zone: 1, trips_per_hour: rate },
        ]
    }

    #[test]
    fn zero_rate_is_empty() {
        assert!(generate_requests(&od(0.0), &access(), 6.0 * 3600.0, 7.0 * 3600.0, 1).is_empty());
    }

    #[test]
    fn deterministic_and_sorted() {
        let a = generate_requests(&od(120.0), &access(), 6.0 * 3600.0, 7.0 * 3600.0, 9);
        let b = generate_requests(&od(120.0), &access(), 6.0 * 3600.0, 7.0 * 3600.0, 9);
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].time <= w[1].time));
        assert!(a.iter().enumerate().all(|(i, r)| r.id == i));
        let c = generate_requests(&od(120.0), &access(), 6.0 * 3600.0, 7.0 * 3600.0, 10);
        assert_ne!(a, c);
    }

    #[test]
    fn intra_zone_trips_move() {
        let r = generate_requests(&od(500.0), &access(), 6.0 * 3600.0, 7.0 * 3600.0, 4);
        assert!(r.iter().all(|r| r.origin != r.destination));
        assert!(r.iter().all(|r| r.time >= 6.0 * 3600.0 && r.time < 7.0 * 3600.0));
    }

    #[test]
    fn window_clips_the_hour() {
        let r = generate_requests(&od(3600.0), &access(), 6.5 * 3600.0, 7.0 * 3600.0, 4);
        assert!(r.iter().all(|r| r.time >= 6.5 * 3600.0));
        assert!(!r.is_empty());
    }
}
