//! Scenario directories: loading, validation and writing back.
//!
//! A scenario directory holds
//!
//! | file | columns |
//! |------|---------|
//! | `network_nodes.csv` | `id,x,y,cluster,zone,pt_stop,pt_access_m` (zone and stop may be empty) |
//! | `network_edges.csv` | `id,from,to,length_m,speed_mps,cluster,lanes` |
//! | `nfd_<cluster>.csv` | `density,flow` (veh/lane-km, veh/h/lane), one file per cluster |
//! | `pt_skim.csv` | `o_stop,d_stop,walk_m,in_vehicle_s,transfers` |
//! | `pt_lines.csv` | `line,trips_per_hour,length_km,cost_per_km,emission_per_km,capacity` |
//! | `od_matrix.csv` | `hour,o_zone,d_zone,trips_per_hour` |
//! | `params.toml` | scenario parameters, see [`ParamsFile`] |
//! | `bounds.toml` | optional decision bounds, see [`DecisionBounds`] |
//!
//! Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::demand::OdEntry;
use crate::error::{Error, Result};
use crate::network::{ClusterState, Edge, Graph, Nfd, Node, PathTable};
use crate::params::{DecisionBounds, ParamsFile, ScenarioParams};
use crate::transit::{SkimRow, Transit, TransitLine};

pub const NODES_FILE: &str = "network_nodes.csv";
pub const EDGES_FILE: &str = "network_edges.csv";
pub const SKIM_FILE: &str = "pt_skim.csv";
pub const LINES_FILE: &str = "pt_lines.csv";
pub const OD_FILE: &str = "od_matrix.csv";
pub const PARAMS_FILE: &str = "params.toml";
pub const BOUNDS_FILE: &str = "bounds.toml";

pub fn nfd_file(cluster: u32) -> String {
    format!("nfd_{cluster}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NfdRow {
    density: f64,
    flow: f64,
}

/// Scenario inputs exactly as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFiles {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// (density, flow) rows per cluster id.
    pub nfd: BTreeMap<u32, Vec<(f64, f64)>>,
    pub skim: Vec<SkimRow>,
    pub lines: Vec<TransitLine>,
    pub od: Vec<OdEntry>,
    pub params: ParamsFile,
    pub bounds: Option<DecisionBounds>,
}

/// A validated scenario, immutable and shared by all runs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub files: ScenarioFiles,
    pub params: ScenarioParams,
    pub bounds: DecisionBounds,
    pub graph: Graph,
    pub paths: PathTable,
    pub nfd: BTreeMap<u32, Nfd>,
    pub transit: Transit,
    pub od: Vec<OdEntry>,
    /// Access-point node indices per zone, ascending.
    pub access: BTreeMap<u32, Vec<usize>>,
    /// Transit riders not simulated, per hour of the day.
    pub pt_background: BTreeMap<u32, f64>,
}

fn read_csv<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row.map_err(|e: csv::Error| Error::Parse {
            file: name.to_string(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?);
    }
    Ok(rows)
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T], header: &[&str]) -> Result<()> {
    let path = dir.join(name);
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Store(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Store(format!("{name}: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Store(e.to_string()))?;
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

fn read_toml<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| {
        let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
        Error::Parse { file: name.to_string(), line, message: e.message().to_string() }
    })
}

impl ScenarioFiles {
    /// Reads every file of a scenario directory without cross-checking them.
    pub fn read(dir: &Path) -> Result<Self> {
        let nodes: Vec<Node> = read_csv(dir, NODES_FILE)?;
        let edges: Vec<Edge> = read_csv(dir, EDGES_FILE)?;
        let mut clusters: Vec<u32> = nodes.iter().map(|n| n.cluster).chain(edges.iter().map(|e| e.cluster)).collect();
        clusters.sort_unstable();
        clusters.dedup();
        let mut nfd = BTreeMap::new();
        for c in clusters {
            let name = nfd_file(c);
            if !dir.join(&name).exists() {
                continue;
            }
            let rows: Vec<NfdRow> = read_csv(dir, &name)?;
            nfd.insert(c, rows.into_iter().map(|r| (r.density, r.flow)).collect());
        }
        let bounds = if dir.join(BOUNDS_FILE).exists() { Some(read_toml(dir, BOUNDS_FILE)?) } else { None };
        Ok(Self {
            nodes,
            edges,
            nfd,
            skim: read_csv(dir, SKIM_FILE)?,
            lines: read_csv(dir, LINES_FILE)?,
            od: read_csv(dir, OD_FILE)?,
            params: read_toml(dir, PARAMS_FILE)?,
            bounds,
        })
    }

    /// Writes the files so that [`ScenarioFiles::read`] returns an equal value.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv(dir, NODES_FILE, &self.nodes, &["id", "x", "y", "cluster", "zone", "pt_stop", "pt_access_m"])?;
        write_csv(dir, EDGES_FILE, &self.edges, &["id", "from", "to", "length_m", "speed_mps", "cluster", "lanes"])?;
        for (c, rows) in &self.nfd {
            let rows: Vec<NfdRow> = rows.iter().map(|&(density, flow)| NfdRow { density, flow }).collect();
            write_csv(dir, &nfd_file(*c), &rows, &["density", "flow"])?;
        }
        write_csv(dir, SKIM_FILE, &self.skim, &["o_stop", "d_stop", "walk_m", "in_vehicle_s", "transfers"])?;
        write_csv(
            dir,
            LINES_FILE,
            &self.lines,
            &["line", "trips_per_hour", "length_km", "cost_per_km", "emission_per_km", "capacity"],
        )?;
        write_csv(dir, OD_FILE, &self.od, &["hour", "o_zone", "d_zone", "trips_per_hour"])?;
        let params = toml::to_string(&self.params).map_err(|e| Error::Store(e.to_string()))?;
        let path = dir.join(PARAMS_FILE);
        fs::write(&path, params).map_err(|e| Error::io(&path, e))?;
        if let Some(b) = &self.bounds {
            let text = toml::to_string(b).map_err(|e| Error::Store(e.to_string()))?;
            let path = dir.join(BOUNDS_FILE);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Reads and validates a scenario directory.
pub fn load_scenario(dir: &Path) -> Result<Scenario> {
    Scenario::new(ScenarioFiles::read(dir)?)
}

impl Scenario {
    /// Validates the inputs and builds the derived structures. Every violation found
    /// is reported in one error.
    pub fn new(files: ScenarioFiles) -> Result<Self> {
        let mut errs = Vec::new();
        let params = match files.params.resolve() {
            Ok(p) => Some(p),
            Err(Error::Validation(v)) => {
                errs.extend(v);
                None
            }
            Err(e) => return Err(e),
        };
        let bounds = files.bounds.clone().unwrap_or_default();
        if let Err(Error::Validation(v)) = bounds.validate() {
            errs.extend(v.into_iter().map(|m| format!("bounds: {m}")));
        }
        let graph = match Graph::new(files.nodes.clone(), files.edges.clone()) {
            Ok(g) => Some(g),
            Err(Error::Validation(v)) => {
                errs.extend(v);
                None
            }
            Err(e) => return Err(e),
        };

        let mut nfd = BTreeMap::new();
        for (c, rows) in &files.nfd {
            let (k, q) = rows.iter().copied().unzip();
            match Nfd::new(k, q) {
                Ok(n) => {
                    nfd.insert(*c, n);
                }
                Err(m) => errs.push(format!("{}: {m}", nfd_file(*c))),
            }
        }

        for l in &files.lines {
            let fields = [l.trips_per_hour, l.length_km, l.cost_per_km, l.capacity];
            if fields.iter().any(|v| !(v.is_finite() && *v > 0.0)) || l.emission_per_km.is_some_and(|e| !(e >= 0.0)) {
                errs.push(format!("pt line {} must have positive frequency, length, cost and capacity", l.line));
            }
        }
        for r in &files.skim {
            if !(r.walk_m >= 0.0 && r.in_vehicle_s >= 0.0 && r.walk_m.is_finite() && r.in_vehicle_s.is_finite()) {
                errs.push(format!("pt skim row {} -> {} has negative walk or time", r.o_stop, r.d_stop));
            }
        }

        let mut access: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        if let Some(g) = &graph {
            for (i, n) in g.nodes().iter().enumerate() {
                if let Some(z) = n.zone {
                    access.entry(z).or_default().push(i);
                }
                if !(n.pt_access_m >= 0.0 && n.pt_access_m.is_finite()) {
                    errs.push(format!("node {} has a negative transit access walk", n.id));
                }
            }
            for c in g.clusters() {
                if !files.nfd.contains_key(c) {
                    errs.push(format!("cluster {c} has no {}", nfd_file(*c)));
                }
            }
            let inner = files.params.inner_cluster;
            if g.cluster_index(inner).is_none() {
                errs.push(format!("inner cluster {inner} does not appear in the network"));
            }
            for cp in &files.params.cluster {
                if g.cluster_index(cp.id).is_none() {
                    errs.push(format!("cluster parameters name unknown cluster {}", cp.id));
                }
            }
            for b in &files.params.background {
                if g.cluster_index(b.cluster).is_none() {
                    errs.push(format!("background density names unknown cluster {}", b.cluster));
                }
            }
        }
        for (row, e) in files.od.iter().enumerate() {
            if !(e.trips_per_hour >= 0.0 && e.trips_per_hour.is_finite()) {
                errs.push(format!("od row {} has a negative rate", row + 1));
            }
            if graph.is_some() {
                for z in [e.o_zone, e.d_zone] {
                    if !access.contains_key(&z) {
                        errs.push(format!("od row {} references zone {z} without access points", row + 1));
                    }
                }
            }
        }
        if !errs.is_empty() {
            errs.dedup();
            return Err(Error::Validation(errs));
        }
        let graph = graph.expect("validated");
        let params = params.expect("validated");
        let paths = PathTable::build(&graph);

        let points: Vec<usize> = access.values().flatten().copied().collect();
        let mut unreachable = Vec::new();
        for &a in &points {
            for &b in &points {
                if !paths.reachable(a, b) {
                    unreachable.push(format!("access node {} cannot reach access node {}", graph.node(a).id, graph.node(b).id));
                }
            }
        }
        if !unreachable.is_empty() {
            let n = unreachable.len();
            unreachable.truncate(10);
            if n > 10 {
                unreachable.push(format!("... {} more unreachable access pairs", n - 10));
            }
            return Err(Error::Validation(unreachable));
        }

        let transit = Transit::new(
            &files.skim,
            files.lines.clone(),
            params.pt_fare,
            params.pt_capacity_reduction,
            params.emission_pt * 1000.0,
        );
        let pt_background = files.params.pt_background.iter().map(|b| (b.hour, b.riders)).collect();
        Ok(Self {
            od: files.od.clone(),
            params,
            bounds,
            graph,
            paths,
            nfd,
            transit,
            access,
            pt_background,
            files,
        })
    }

    pub fn inner_cluster_index(&self) -> usize {
        self.graph.cluster_index(self.params.inner_cluster).expect("validated inner cluster")
    }

    /// Fresh congestion state per cluster, in cluster id order.
    pub fn cluster_states(&self) -> Vec<ClusterState> {
        let lane_km = self.graph.lane_km();
        self.graph
            .clusters()
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let cp = self.files.params.cluster.iter().find(|p| p.id == c);
                let background = self
                    .files
                    .params
                    .background
                    .iter()
                    .filter(|b| b.cluster == c)
                    .map(|b| (b.hour, b.density))
                    .collect();
                ClusterState::new(
                    c,
                    lane_km[i],
                    self.nfd[&c].clone(),
                    cp.and_then(|p| p.v1_kmh),
                    cp.and_then(|p| p.v2_kmh),
                    self.params.max_travel_time_factor,
                    self.params.moving_average_window,
                    background,
                )
            })
            .collect()
    }

    /// Start nodes for `n` vehicles: access points in node order, cycled.
    pub fn vehicle_start_nodes(&self, n: usize) -> Vec<usize> {
        let mut points: Vec<usize> = self.access.values().flatten().copied().collect();
        points.sort_unstable();
        points.dedup();
        if points.is_empty() {
            return Vec::new();
        }
        (0..n).map(|i| points[i % points.len()]).collect()
    }

    /// Distinct clusters in id order.
    pub fn clusters(&self) -> &[u32] {
        self.graph.clusters()
    }
}
