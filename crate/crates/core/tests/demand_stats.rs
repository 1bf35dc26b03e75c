//! Statistical checks of the request generator.

use std::collections::BTreeMap;

use amodreg_core::demand::{generate_requests, poisson_arrivals, OdEntry};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn poisson_count_mean_and_variance() {
    let rate = 30.0;
    let reps = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let counts: Vec<f64> = (0..reps).map(|_| poisson_arrivals(&mut rng, rate, 0.0, 3600.0).len() as f64).collect();
    let mean = counts.iter().sum::<f64>() / reps as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    // standard error of the mean is sqrt(rate / reps)
    assert!((mean - rate).abs() < 4.0 * (rate / reps as f64).sqrt(), "mean {mean}");
    assert!((var / rate - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn od_counts_follow_rates() {
    let od = vec![
        OdEntry { hour: 7, o_zone: 0, d_zone: 1, trips_per_hour: 5.0 },
        OdEntry { hour: 7, o_zone: 1, d_zone: 0, trips_per_hour: 10.0 },
        OdEntry { hour: 7, o_zone: 1, d_zone: 1, trips_per_hour: 15.0 },
    ];
    let access = BTreeMap::from([(0, vec![0]), (1, vec![1, 2])]);
    let reps = 1000;
    let mut counts = [0.0f64; 3];
    for seed in 0..reps {
        for r in generate_requests(&od, &access, 7.0 * 3600.0, 8.0 * 3600.0, seed) {
            let row = od.iter().position(|e| e.o_zone == r.o_zone && e.d_zone == r.d_zone).unwrap();
            counts[row] += 1.0;
            assert!((7.0 * 3600.0..8.0 * 3600.0).contains(&r.time));
        }
    }
    let stat: f64 = counts
        .iter()
        .zip(&od)
        .map(|(c, e)| {
            let expected = e.trips_per_hour * reps as f64;
            (c - expected).powi(2) / expected
        })
        .sum();
    let p = 1.0 - ChiSquared::new(3.0).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi-square {stat}, p {p}");
}

#[test]
fn requests_are_sorted_and_numbered() {
    let od = vec![OdEntry { hour: 6, o_zone: 0, d_zone: 0, trips_per_hour: 200.0 }];
    let access = BTreeMap::from([(0, vec![3, 4, 5])]);
    let reqs = generate_requests(&od, &access, 6.0 * 3600.0, 7.0 * 3600.0, 1);
    assert!(reqs.windows(2).all(|w| w[0].time <= w[1].time));
    assert!(reqs.iter().enumerate().all(|(i, r)| r.id == i && r.origin != r.destination));
}
