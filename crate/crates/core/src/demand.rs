//! Travel demand from trajectories: hourly O-D matrices, link loading along
//! free-flow routes, and per-link scaling of phone-derived flows to vehicle
//! counts.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Timestamp, Trajectory};
use crate::network::{NetworkError, RoadNetwork, RouteTable};

pub const HOURS_PER_DAY: u8 = 24;

#[derive(Debug, Error)]
pub enum DemandError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("no usable traffic counts: every counted link has zero phone-derived flow")]
    NoCounts,
    #[error("traffic count for unknown link `{0}`")]
    UnknownCountLink(String),
    #[error("invalid traffic count on `{link_id}` hour {time_bin}: {message}")]
    InvalidCount {
        link_id: String,
        time_bin: u8,
        message: String,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Hour-of-day binning with an optional fixed offset from UTC.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeBinning {
    pub utc_offset_seconds: i64,
}

impl TimeBinning {
    pub fn bin(&self, ts: Timestamp) -> u8 {
        ((ts + self.utc_offset_seconds).rem_euclid(86_400) / 3_600) as u8
    }
}

/// Trips between node pairs departing within one hour-of-day bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdMatrix {
    pub time_bin: u8,
    /// `(origin node, destination node)` indices to trip count.
    pub entries: BTreeMap<(usize, usize), f64>,
}

impl OdMatrix {
    pub fn new(time_bin: u8) -> Self {
        Self {
            time_bin,
            entries: BTreeMap::new(),
        }
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn add(&mut self, origin: usize, destination: usize, trips: f64) {
        *self.entries.entry((origin, destination)).or_insert(0.0) += trips;
    }
}

/// One O-D matrix per hour bin that has at least one trip, ascending by bin.
///
/// Consecutive visit events at distinct nodes make one trip, binned by the
/// departure (earlier) event's timestamp. Tower changes inside a node are
/// not trips.
pub fn extract_od(
    trajectories: &[Trajectory],
    network: &RoadNetwork,
    binning: TimeBinning,
) -> Result<Vec<OdMatrix>, DemandError> {
    let mut bins: BTreeMap<u8, OdMatrix> = BTreeMap::new();
    for t in trajectories {
        let nodes = t
            .visits
            .iter()
            .map(|v| network.tower_node(&v.tower_id).map(|n| (n, v.timestamp)))
            .collect::<Result<Vec<_>, _>>()?;
        for w in nodes.windows(2) {
            let ((from, depart), (to, _)) = (w[0], w[1]);
            if from != to {
                let bin = binning.bin(depart);
                bins.entry(bin).or_insert_with(|| OdMatrix::new(bin)).add(from, to, 1.0);
            }
        }
    }
    Ok(bins.into_values().collect())
}

/// An O-D pair that could not be loaded onto the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnroutablePair {
    pub time_bin: u8,
    pub origin: String,
    pub destination: String,
    pub trips: f64,
}

/// Phone-derived trips per `(link index, hour)`.
pub type LinkLoads = BTreeMap<(usize, u8), f64>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkAssignment {
    pub flows: LinkLoads,
    pub unroutable: Vec<UnroutablePair>,
}

/// Loads every O-D pair onto each link of its free-flow route.
pub fn assign_od_to_links(od: &[OdMatrix], network: &RoadNetwork, routes: &RouteTable) -> LinkAssignment {
    let mut out = LinkAssignment::default();
    for m in od {
        for (&(o, d), &trips) in &m.entries {
            match routes.get(o, d) {
                Some(path) => {
                    for &l in path {
                        *out.flows.entry((l, m.time_bin)).or_insert(0.0) += trips;
                    }
                }
                None => out.unroutable.push(UnroutablePair {
                    time_bin: m.time_bin,
                    origin: network.nodes()[o].node_id.clone(),
                    destination: network.nodes()[d].node_id.clone(),
                    trips,
                }),
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficCount {
    pub link_id: String,
    pub time_bin: u8,
    #[serde(rename = "vehicles_per_hour")]
    pub counted_vehicles: f64,
}

/// A counted link whose factor could not be derived from its own count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationIssue {
    pub link_id: String,
    pub time_bin: u8,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Scale factor per `(link index, hour)` for every key seen in the flows
    /// or the counts.
    pub factors: BTreeMap<(usize, u8), f64>,
    /// Flow-weighted mean factor over all usable counts.
    pub global_factor: f64,
    pub issues: Vec<CalibrationIssue>,
}

impl Calibration {
    pub fn factor(&self, link: usize, time_bin: u8) -> f64 {
        self.factors.get(&(link, time_bin)).copied().unwrap_or(self.global_factor)
    }
}

/// Derives `vehicles / phone trips` per counted link and hour. Links without
/// a usable count get the flow-weighted mean factor of the counted links in
/// the same hour, or the global one when that hour has no counts.
pub fn calibrate_scale(
    cdr_flows: &LinkLoads,
    counts: &[TrafficCount],
    network: &RoadNetwork,
) -> Result<Calibration, DemandError> {
    let mut own: BTreeMap<(usize, u8), f64> = BTreeMap::new();
    let mut issues = Vec::new();
    let mut counted_keys = Vec::new();
    // (sum of counts, sum of phone flow) per hour and overall
    let mut per_bin: BTreeMap<u8, (f64, f64)> = BTreeMap::new();
    let mut total = (0.0, 0.0);

    for c in counts {
        let link = network
            .link_idx(&c.link_id)
            .map_err(|_| DemandError::UnknownCountLink(c.link_id.clone()))?;
        if c.time_bin >= HOURS_PER_DAY {
            return Err(DemandError::InvalidCount {
                link_id: c.link_id.clone(),
                time_bin: c.time_bin,
                message: "time bin outside [0, 24)".into(),
            });
        }
        if !(c.counted_vehicles >= 0.0 && c.counted_vehicles.is_finite()) {
            return Err(DemandError::InvalidCount {
                link_id: c.link_id.clone(),
                time_bin: c.time_bin,
                message: "count must be a non-negative number".into(),
            });
        }
        counted_keys.push((link, c.time_bin));
        let r = cdr_flows.get(&(link, c.time_bin)).copied().unwrap_or(0.0);
        if r > 0.0 {
            own.insert((link, c.time_bin), c.counted_vehicles / r);
            let b = per_bin.entry(c.time_bin).or_insert((0.0, 0.0));
            b.0 += c.counted_vehicles;
            b.1 += r;
            total.0 += c.counted_vehicles;
            total.1 += r;
        } else if c.counted_vehicles > 0.0 {
            issues.push(CalibrationIssue {
                link_id: c.link_id.clone(),
                time_bin: c.time_bin,
                message: format!(
                    "{} vehicles counted but no phone-derived flow; fallback factor applied",
                    c.counted_vehicles
                ),
            });
        }
    }
    if total.1 <= 0.0 {
        return Err(DemandError::NoCounts);
    }
    let global_factor = total.0 / total.1;
    let fallback = |bin: u8| match per_bin.get(&bin) {
        Some(&(tc, r)) if r > 0.0 => tc / r,
        _ => global_factor,
    };

    let mut factors = BTreeMap::new();
    for &key in cdr_flows.keys().chain(counted_keys.iter()) {
        let f = own.get(&key).copied().unwrap_or_else(|| fallback(key.1));
        factors.insert(key, f);
    }
    Ok(Calibration {
        factors,
        global_factor,
        issues,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkFlow {
    pub link_id: String,
    pub time_bin: u8,
    pub cdr_flow: f64,
    pub scale_factor: f64,
    pub vehicle_flow: f64,
}

/// Scaled flows for every calibrated `(link, hour)`, ordered by
/// `(link_id, time_bin)`.
pub fn scale_flows(cdr_flows: &LinkLoads, calibration: &Calibration, network: &RoadNetwork) -> Vec<LinkFlow> {
    let mut out: Vec<LinkFlow> = calibration
        .factors
        .iter()
        .map(|(&(link, bin), &beta)| {
            let r = cdr_flows.get(&(link, bin)).copied().unwrap_or(0.0);
            LinkFlow {
                link_id: network.link(link).link_id.clone(),
                time_bin: bin,
                cdr_flow: r,
                scale_factor: beta,
                vehicle_flow: r * beta,
            }
        })
        .collect();
    out.sort_by(|a, b| (&a.link_id, a.time_bin).cmp(&(&b.link_id, b.time_bin)));
    out
}

pub fn parse_counts<R: Read>(input: R) -> Result<Vec<TrafficCount>, DemandError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    Ok(reader.deserialize().collect::<Result<Vec<_>, _>>()?)
}

pub fn write_counts<W: Write>(output: W, counts: &[TrafficCount]) -> Result<(), DemandError> {
    write_csv(output, counts)
}

pub fn parse_flows<R: Read>(input: R) -> Result<Vec<LinkFlow>, DemandError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    Ok(reader.deserialize().collect::<Result<Vec<_>, _>>()?)
}

pub fn write_flows<W: Write>(output: W, flows: &[LinkFlow]) -> Result<(), DemandError> {
    write_csv(output, flows)
}

fn write_csv<W: Write, T: Serialize>(output: W, rows: &[T]) -> Result<(), DemandError> {
    let mut w = csv::Writer::from_writer(output);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
