//! A small synthetic city for tests, examples and desk-scale experiments: a square
//! grid whose central nodes form the inner (tolled, parking-fee) cluster.

use std::collections::BTreeMap;

use crate::demand::OdEntry;
use crate::error::Result;
use crate::network::{Edge, Node};
use crate::params::{BackgroundDensity, DecisionBounds, ParamsFile, PtBackground};
use crate::scenario_io::{Scenario, ScenarioFiles};
use crate::transit::{SkimRow, TransitLine};

pub const INNER: u32 = 1;
pub const OUTER: u32 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct GridCity {
    /// Nodes per side.
    pub side: u32,
    pub spacing_m: f64,
    pub speed_mps: f64,
    pub lanes: f64,
    pub requests_per_hour: f64,
    pub start_hour: u32,
    pub end_hour: u32,
    pub inner_background: f64,
    pub outer_background: f64,
    pub pt_background: f64,
    pub max_fleet: f64,
}

impl Default for GridCity {
    /// 4×4 grid, 500 m blocks, about 500 requests in one morning hour.
    fn default() -> Self {
        Self {
            side: 4,
            spacing_m: 500.0,
            speed_mps: 10.0,
            lanes: 1.0,
            requests_per_hour: 500.0,
            start_hour: 6,
            end_hour: 7,
            inner_background: 22.0,
            outer_background: 10.0,
            pt_background: 100.0,
            max_fleet: 60.0,
        }
    }
}

impl GridCity {
    fn is_inner(&self, r: u32, c: u32) -> bool {
        let lo = self.side / 4;
        let hi = self.side - 1 - self.side / 4;
        (lo.max(1)..=hi.min(self.side - 2)).contains(&r) && (lo.max(1)..=hi.min(self.side - 2)).contains(&c)
    }

    /// Quadrant zone of a grid position.
    fn zone(&self, r: u32, c: u32) -> u32 {
        let half = self.side.div_ceil(2);
        (r / half) * 2 + c / half
    }

    pub fn files(&self) -> ScenarioFiles {
        let n = self.side;
        let id = |r: u32, c: u32| r * n + c;
        let mut nodes = Vec::new();
        for r in 0..n {
            for c in 0..n {
                nodes.push(Node {
                    id: id(r, c),
                    x: c as f64 * self.spacing_m,
                    y: r as f64 * self.spacing_m,
                    cluster: if self.is_inner(r, c) { INNER } else { OUTER },
                    zone: Some(self.zone(r, c)),
                    pt_stop: Some(id(r, c)),
                    pt_access_m: 100.0,
                });
            }
        }
        let mut edges = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let mut link = |to_r: u32, to_c: u32| {
                    edges.push(Edge {
                        id: edges.len() as u32,
                        from: id(r, c),
                        to: id(to_r, to_c),
                        length_m: self.spacing_m,
                        speed_mps: self.speed_mps,
                        cluster: if self.is_inner(to_r, to_c) { INNER } else { OUTER },
                        lanes: self.lanes,
                    });
                };
                if c + 1 < n {
                    link(r, c + 1);
                }
                if c > 0 {
                    link(r, c - 1);
                }
                if r + 1 < n {
                    link(r + 1, c);
                }
                if r > 0 {
                    link(r - 1, c);
                }
            }
        }
        let nfd: Vec<(f64, f64)> = vec![(0.0, 0.0), (25.0, 900.0), (50.0, 1100.0), (100.0, 700.0), (150.0, 0.0)];

        // stops at every node, buses at 6 m/s along grid lines, one transfer when
        // both row and column change
        let mut skim = Vec::new();
        for a in 0..n * n {
            for b in 0..n * n {
                if a == b {
                    continue;
                }
                let (ra, ca, rb, cb) = (a / n, a % n, b / n, b % n);
                let blocks = ra.abs_diff(rb) + ca.abs_diff(cb);
                let transfers = u32::from(ra != rb && ca != cb);
                skim.push(SkimRow {
                    o_stop: a,
                    d_stop: b,
                    walk_m: 50.0 * transfers as f64,
                    in_vehicle_s: blocks as f64 * self.spacing_m / 6.0,
                    transfers,
                });
            }
        }
        let line_km = (n - 1) as f64 * self.spacing_m / 1000.0;
        let lines = (0..2 * n)
            .map(|i| TransitLine {
                line: format!("{}{}", if i < n { "H" } else { "V" }, i % n),
                trips_per_hour: 6.0,
                length_km: line_km,
                cost_per_km: 4.0,
                emission_per_km: None,
                capacity: 60.0,
            })
            .collect();

        let zones: Vec<u32> = {
            let mut z: Vec<u32> = nodes.iter().filter_map(|n| n.zone).collect();
            z.sort_unstable();
            z.dedup();
            z
        };
        let pairs = (zones.len() * zones.len()) as f64;
        let mut od = Vec::new();
        for hour in self.start_hour..self.end_hour {
            for &o in &zones {
                for &d in &zones {
                    od.push(OdEntry { hour, o_zone: o, d_zone: d, trips_per_hour: self.requests_per_hour / pairs });
                }
            }
        }

        let hours = self.start_hour..self.end_hour;
        let params = ParamsFile {
            start_hour: self.start_hour as f64,
            end_hour: self.end_hour as f64,
            inner_cluster: INNER,
            pv_intercept_eur: 1.5,
            amod_fixed_cost_eur: 10.0,
            toll_density_threshold: 10.0,
            background: hours
                .clone()
                .flat_map(|h| {
                    [
                        BackgroundDensity { hour: h, cluster: INNER, density: self.inner_background },
                        BackgroundDensity { hour: h, cluster: OUTER, density: self.outer_background },
                    ]
                })
                .collect(),
            pt_background: hours.map(|h| PtBackground { hour: h, riders: self.pt_background }).collect(),
            ..ParamsFile::default()
        };
        let bounds = DecisionBounds {
            fleet_cap: [1.0, self.max_fleet],
            fleet_size: [0.0, self.max_fleet],
            status_quo: Some([2.5, 0.0, 1.0, self.max_fleet]),
            ..DecisionBounds::default()
        };
        ScenarioFiles {
            nodes,
            edges,
            nfd: BTreeMap::from([(OUTER, nfd.clone()), (INNER, nfd)]),
            skim,
            lines,
            od,
            params,
            bounds: Some(bounds),
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::new(self.files())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let s = GridCity::default().scenario().unwrap();
        assert_eq!(s.graph.node_count(), 16);
        assert_eq!(s.graph.edges().len(), 48);
        assert_eq!(s.clusters(), &[OUTER, INNER]);
        let inner: Vec<u32> = s.graph.nodes().iter().filter(|n| n.cluster == INNER).map(|n| n.id).collect();
        assert_eq!(inner, vec![5, 6, 9, 10]);
        assert_eq!(s.access.len(), 4);
        assert!(s.access.values().all(|v| v.len() == 4));
    }
}
