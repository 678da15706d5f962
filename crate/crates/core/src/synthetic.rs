//! Synthetic city with known ground truth.
//!
//! A hub node surrounded by a ring of towns, two-way roads along the ring
//! and on spokes to the hub. Visitors (FR/ES) leave their lodging at 10h
//! for their favorite place, see a few places drawn from their true
//! preferences, return to the favorite and head back at 18h. Residents (AD) commute at
//! 10h and head home between 17h and 21h. Road capacities are set so that
//! the 10h visitor rush overloads the links it uses.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::TrafficCount;
use crate::ingest::{CdrRecord, Timestamp, Tower};
use crate::network::{Node, NodeTower, RoadLink, RoadNetwork};
use crate::rng::substream;

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {field}: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    /// Hub plus ring towns; at least 4.
    pub nodes: usize,
    pub travelers: usize,
    pub residents: usize,
    /// Rank of the true preference factors.
    pub rank: usize,
    pub towers_per_node: usize,
    /// Std-dev of noise on preferences when drawing itinerary stops.
    pub preference_noise: f64,
    /// Vehicles per phone-observed trip.
    pub vehicles_per_trip: f64,
    /// Relative std-dev of traffic-count noise.
    pub count_noise: f64,
    /// Share of links carrying a counter.
    pub counted_fraction: f64,
    /// Midnight UTC of the simulated day.
    pub day_start: Timestamp,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            nodes: 7,
            travelers: 1200,
            residents: 400,
            rank: 3,
            towers_per_node: 2,
            preference_noise: 0.05,
            vehicles_per_trip: 3.0,
            count_noise: 0.0,
            counted_fraction: 0.7,
            day_start: 1_782_864_000,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |field, message: &str| {
            Err(SyntheticError::Invalid {
                field,
                message: message.to_string(),
            })
        };
        if self.nodes < 4 {
            return bad("nodes", "need a hub and at least three ring towns");
        }
        if self.travelers == 0 {
            return bad("travelers", "must be positive");
        }
        if self.rank == 0 {
            return bad("rank", "must be positive");
        }
        if self.towers_per_node == 0 {
            return bad("towers_per_node", "must be positive");
        }
        if !(self.preference_noise >= 0.0 && self.count_noise >= 0.0) {
            return bad("noise", "noise levels must be non-negative");
        }
        if !(self.vehicles_per_trip > 0.0) {
            return bad("vehicles_per_trip", "must be positive");
        }
        if !(self.counted_fraction > 0.0 && self.counted_fraction <= 1.0) {
            return bad("counted_fraction", "must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruePreference {
    pub user_id: String,
    pub location: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdRow {
    pub time_bin: u8,
    pub origin: String,
    pub destination: String,
    pub trips: f64,
}

/// Settings that suit the generated city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestedConfig {
    pub home_country: String,
    pub slots: Vec<u8>,
    pub k: usize,
    pub theta: f64,
    pub thetas: Vec<f64>,
    pub compliance_rates: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCity {
    pub nodes: Vec<Node>,
    pub links: Vec<RoadLink>,
    pub towers: Vec<Tower>,
    pub node_towers: Vec<NodeTower>,
    pub records: Vec<CdrRecord>,
    pub counts: Vec<TrafficCount>,
    pub preferences: Vec<TruePreference>,
    pub od: Vec<OdRow>,
    pub suggested: SuggestedConfig,
}

struct Person {
    user_id: String,
    nationality: String,
    device: Option<String>,
    visitor: bool,
    /// `(node, first-record hour)` per visit.
    stops: Vec<(usize, u8)>,
}

fn node_id(i: usize) -> String {
    format!("N{i:02}")
}

fn build_roads(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> (Vec<Node>, Vec<RoadLink>) {
    let n = spec.nodes;
    let nodes = (0..n)
        .map(|i| Node {
            node_id: node_id(i),
            name: if i == 0 { "Hub".to_string() } else { format!("Town {i}") },
        })
        .collect();
    let mut links = Vec::new();
    let mut road = |a: usize, b: usize, minutes: f64, lanes: u32| {
        for (f, t) in [(a, b), (b, a)] {
            links.push(RoadLink {
                link_id: format!("{}-{}", node_id(f), node_id(t)),
                from_node: node_id(f),
                to_node: node_id(t),
                lanes,
                capacity: 1.0,
                free_flow_time: minutes,
                length_km: Some((minutes * 0.8 * 10.0).round() / 10.0),
            });
        }
    };
    for i in 1..n {
        let minutes = rng.gen_range(10.0_f64..15.0).round();
        road(i, 0, minutes, 2);
    }
    for i in 1..n {
        let j = if i + 1 < n { i + 1 } else { 1 };
        let minutes = rng.gen_range(8.0_f64..18.0).round();
        road(i, j, minutes, 1);
    }
    links.sort_by(|a, b| a.link_id.cmp(&b.link_id));
    (nodes, links)
}

fn build_towers(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> (Vec<Tower>, Vec<NodeTower>) {
    let ring = (spec.nodes - 1) as f64;
    let mut towers = Vec::new();
    let mut node_towers = Vec::new();
    for i in 0..spec.nodes {
        let (lat, lon) = if i == 0 {
            (42.507, 1.521)
        } else {
            let a = TAU * (i - 1) as f64 / ring;
            (42.507 + 0.06 * a.sin(), 1.521 + 0.08 * a.cos())
        };
        for k in 0..spec.towers_per_node {
            let tower_id = format!("T{i:02}{k:02}");
            towers.push(Tower {
                tower_id: tower_id.clone(),
                latitude: lat + rng.gen_range(-0.004..0.004),
                longitude: lon + rng.gen_range(-0.004..0.004),
                city: if i == 0 { "Hub".to_string() } else { format!("Town {i}") },
                merged_group_id: node_id(i),
            });
            node_towers.push(NodeTower {
                node_id: node_id(i),
                tower_id,
            });
        }
    }
    (towers, node_towers)
}

/// Non-negative factors; the hub gets a strong popularity component.
fn true_scores(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let r = spec.rank;
    let users: Vec<Vec<f64>> = (0..spec.travelers)
        .map(|_| (0..r).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let locations: Vec<Vec<f64>> = (0..spec.nodes)
        .map(|j| {
            (0..r)
                .map(|d| {
                    let x: f64 = rng.gen_range(0.0..1.0);
                    if j == 0 && d == 0 {
                        2.0 + x
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();
    users
        .iter()
        .map(|u| locations.iter().map(|l| u.iter().zip(l).map(|(a, b)| a * b).sum()).collect())
        .collect()
}

fn argmax_except(scores: &[f64], skip: usize) -> usize {
    (0..scores.len())
        .filter(|&j| j != skip)
        .fold(None::<usize>, |best, j| match best {
            Some(b) if scores[b] >= scores[j] => Some(b),
            _ => Some(j),
        })
        .unwrap_or(0)
}

const DEVICES: [&str; 4] = ["A52", "iPhone 13", "Pixel 7", ""];

fn device(rng: &mut ChaCha8Rng) -> Option<String> {
    let d = DEVICES[rng.gen_range(0..DEVICES.len())];
    (!d.is_empty()).then(|| d.to_string())
}

fn visitors(spec: &SyntheticSpec, scores: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<Person> {
    let noise = Normal::new(0.0, spec.preference_noise.max(1e-12)).expect("valid std-dev");
    let ring = spec.nodes - 1;
    scores
        .iter()
        .enumerate()
        .map(|(u, s)| {
            let home = 1 + rng.gen_range(0..ring);
            let favorite = argmax_except(s, home);
            let mut stops = vec![(home, 10), (favorite, 12)];
            let extra = rng.gen_range(1..=2);
            for e in 0..extra {
                let here = stops.last().map(|x| x.0).unwrap_or(home);
                let weights: Vec<f64> = (0..spec.nodes)
                    .map(|j| {
                        if j == here || j == home || j == favorite {
                            0.0
                        } else {
                            (s[j] + noise.sample(rng)).max(1e-3).powi(2)
                        }
                    })
                    .collect();
                let next = WeightedIndex::new(&weights).expect("positive weights").sample(rng);
                stops.push((next, 13 + e as u8));
            }
            stops.push((favorite, 16));
            stops.push((home, 18));
            let nationality = if rng.gen_bool(0.6) { "FR" } else { "ES" };
            Person {
                user_id: format!("v{:05}", u + 1),
                nationality: nationality.to_string(),
                device: device(rng),
                visitor: true,
                stops,
            }
        })
        .collect()
}

fn residents(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Person> {
    let ring = spec.nodes - 1;
    (0..spec.residents)
        .map(|i| {
            let home = 1 + rng.gen_range(0..ring);
            let work = if rng.gen_bool(0.6) {
                0
            } else {
                // a neighboring town
                if rng.gen_bool(0.5) {
                    home % ring + 1
                } else {
                    (home + ring - 2) % ring + 1
                }
            };
            // evening departures are spread out so the morning commute stays
            // the busiest background hour
            let leave = rng.gen_range(17..=20u8);
            let mut stops = vec![(home, 10)];
            if rng.gen_bool(0.3) {
                let errand = (0..spec.nodes)
                    .filter(|&j| j != work && j != home)
                    .choose(rng)
                    .unwrap_or(0);
                stops.push((work, 13));
                stops.push((errand, leave));
            } else {
                stops.push((work, leave));
            }
            stops.push((home, leave + 1));
            Person {
                user_id: format!("r{:05}", i + 1),
                nationality: "AD".to_string(),
                device: device(rng),
                visitor: false,
                stops,
            }
        })
        .collect()
}

fn records_for(p: &Person, spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<CdrRecord> {
    let mut out = Vec::new();
    for &(node, hour) in &p.stops {
        let tower = format!("T{node:02}{:02}", rng.gen_range(0..spec.towers_per_node));
        let base = spec.day_start + hour as i64 * 3600;
        let n = rng.gen_range(1..=3);
        let mut offsets: Vec<i64> = (0..n).map(|_| rng.gen_range(0..3000)).collect();
        offsets.sort_unstable();
        for off in offsets {
            let start = base + off;
            out.push(CdrRecord {
                user_id: p.user_id.clone(),
                start_time: start,
                end_time: start + rng.gen_range(0..240),
                tower_id: tower.clone(),
                nationality: p.nationality.clone(),
                device_model: p.device.clone(),
            });
        }
    }
    out
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCity, SyntheticError> {
    spec.validate()?;
    let mut road_rng = substream(spec.seed, "synthetic/roads");
    let mut tower_rng = substream(spec.seed, "synthetic/towers");
    let mut pref_rng = substream(spec.seed, "synthetic/preferences");
    let mut trip_rng = substream(spec.seed, "synthetic/itineraries");
    let mut cdr_rng = substream(spec.seed, "synthetic/cdr");
    let mut count_rng = substream(spec.seed, "synthetic/counts");

    let (nodes, mut links) = build_roads(spec, &mut road_rng);
    let (towers, node_towers) = build_towers(spec, &mut tower_rng);
    let scores = true_scores(spec, &mut pref_rng);
    let mut people = visitors(spec, &scores, &mut trip_rng);
    people.extend(residents(spec, &mut trip_rng));

    let network = RoadNetwork::new(nodes.clone(), links.clone(), node_towers.clone()).expect("generated network is valid");
    let routes = network.route_table();

    // phone trips per (link, hour), split by visitor/resident
    let mut od: BTreeMap<(u8, usize, usize), f64> = BTreeMap::new();
    let mut visitor_flow: BTreeMap<(usize, u8), f64> = BTreeMap::new();
    let mut resident_flow: BTreeMap<(usize, u8), f64> = BTreeMap::new();
    for p in &people {
        for w in p.stops.windows(2) {
            let ((a, hour), (b, _)) = (w[0], w[1]);
            *od.entry((hour, a, b)).or_insert(0.0) += 1.0;
            let flows = if p.visitor { &mut visitor_flow } else { &mut resident_flow };
            for &l in routes.get(a, b).expect("ring network is connected") {
                *flows.entry((l, hour)).or_insert(0.0) += 1.0;
            }
        }
    }

    // capacities: links hit by the 10h visitor rush get V/C between 1.05 and 2,
    // so they saturate one after another as theta grows
    let k = spec.vehicles_per_trip;
    let rush = |l: usize| k * visitor_flow.get(&(l, 10)).copied().unwrap_or(0.0);
    let resident_peak = |l: usize| {
        resident_flow
            .range((l, 0)..=(l, 23))
            .map(|(_, v)| k * v)
            .fold(0.0, f64::max)
    };
    let max_rush = (0..links.len()).map(rush).fold(0.0, f64::max);
    let hot: Vec<usize> = (0..links.len()).filter(|&l| rush(l) > 0.25 * max_rush).collect();
    for (l, link) in links.iter_mut().enumerate() {
        let v10 = rush(l) + k * resident_flow.get(&(l, 10)).copied().unwrap_or(0.0);
        let floor = resident_peak(l) / 0.6;
        let cap = match hot.iter().position(|&h| h == l) {
            Some(rank) => {
                let target = 1.05 + 0.95 * rank as f64 / (hot.len().max(2) - 1) as f64;
                (v10 / target).max(floor)
            }
            None => (v10 / 0.6).max(floor),
        };
        link.capacity = cap.max(50.0).ceil();
    }

    let n_counted = ((links.len() as f64 * spec.counted_fraction).round() as usize).clamp(1, links.len());
    let mut counted: Vec<usize> = (0..links.len()).collect();
    counted.shuffle(&mut count_rng);
    counted.truncate(n_counted);
    counted.sort_unstable();
    let jitter = Normal::new(0.0, spec.count_noise.max(1e-12)).expect("valid std-dev");
    let mut counts = Vec::new();
    for &l in &counted {
        for hour in 0..24u8 {
            let phone = visitor_flow.get(&(l, hour)).copied().unwrap_or(0.0)
                + resident_flow.get(&(l, hour)).copied().unwrap_or(0.0);
            if phone > 0.0 {
                let factor = if spec.count_noise > 0.0 {
                    (1.0 + jitter.sample(&mut count_rng)).max(0.1)
                } else {
                    1.0
                };
                counts.push(TrafficCount {
                    link_id: links[l].link_id.clone(),
                    time_bin: hour,
                    counted_vehicles: (k * phone * factor * 10.0).round() / 10.0,
                });
            }
        }
    }

    let mut records: Vec<CdrRecord> = people.iter().flat_map(|p| records_for(p, spec, &mut cdr_rng)).collect();
    records.sort_by(|a, b| (a.start_time, &a.user_id).cmp(&(b.start_time, &b.user_id)));

    let preferences = people
        .iter()
        .filter(|p| p.visitor)
        .zip(&scores)
        .flat_map(|(p, s)| {
            s.iter().enumerate().map(move |(j, &score)| TruePreference {
                user_id: p.user_id.clone(),
                location: node_id(j),
                score,
            })
        })
        .collect();
    let od = od
        .into_iter()
        .map(|((time_bin, a, b), trips)| OdRow {
            time_bin,
            origin: node_id(a),
            destination: node_id(b),
            trips,
        })
        .collect();

    Ok(SyntheticCity {
        nodes,
        links,
        towers,
        node_towers,
        records,
        counts,
        preferences,
        od,
        suggested: SuggestedConfig {
            home_country: "AD".to_string(),
            slots: vec![10, 13],
            k: spec.rank,
            theta: 0.0,
            thetas: (0..=10).map(|i| i as f64 / 10.0).collect(),
            compliance_rates: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            seeds: (1..=20).collect(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_trajectories, TowerRegistry};

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            travelers: 60,
            residents: 20,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn same_seed_same_city() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SyntheticSpec { seed: 8, ..small() };
        assert_ne!(generate(&small()).unwrap().records, generate(&other).unwrap().records);
    }

    #[test]
    fn rejects_degenerate_specs() {
        let zero = SyntheticSpec { travelers: 0, ..small() };
        assert!(matches!(generate(&zero), Err(SyntheticError::Invalid { field: "travelers", .. })));
        let tiny = SyntheticSpec { nodes: 2, ..small() };
        assert!(generate(&tiny).is_err());
    }

    #[test]
    fn od_matches_trajectories() {
        let city = generate(&small()).unwrap();
        let reg = TowerRegistry::new(city.towers.clone()).unwrap();
        let (trajs, errs) = build_trajectories(&city.records, &reg);
        assert!(errs.is_empty());
        let transitions: usize = trajs
            .iter()
            .map(|t| {
                t.visits
                    .windows(2)
                    .filter(|w| reg.merged_group(&w[0].tower_id) != reg.merged_group(&w[1].tower_id))
                    .count()
            })
            .sum();
        let total: f64 = city.od.iter().map(|r| r.trips).sum();
        assert_eq!(total, transitions as f64);
        assert_eq!(trajs.len(), 80);
    }

    #[test]
    fn records_are_valid() {
        let city = generate(&small()).unwrap();
        let reg = TowerRegistry::new(city.towers.clone()).unwrap();
        assert!(city.records.iter().all(|r| r.end_time >= r.start_time && reg.contains(&r.tower_id)));
        assert!(city.links.iter().all(|l| l.capacity > 0.0));
        assert!(!city.counts.is_empty());
    }
}
