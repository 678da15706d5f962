//! Road graph, free-flow routing and the BPR volume-delay function.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("tower `{0}` is not mapped to any node")]
    UnknownTower(String),
    #[error("no path from `{from}` to `{to}`")]
    NoPath { from: String, to: String },
    #[error("invalid link `{link_id}`: {message}")]
    InvalidLink { link_id: String, message: String },
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("volume must be non-negative, got {0}")]
    NegativeVolume(f64),
    #[error("invalid BPR parameters: alpha={alpha}, beta={beta} (need alpha >= 0, beta >= 1)")]
    InvalidParams { alpha: f64, beta: f64 },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadLink {
    pub link_id: String,
    pub from_node: String,
    pub to_node: String,
    pub lanes: u32,
    /// Vehicles per hour.
    #[serde(rename = "capacity_vph")]
    pub capacity: f64,
    /// Minutes.
    #[serde(rename = "free_flow_min")]
    pub free_flow_time: f64,
    #[serde(default)]
    pub length_km: Option<f64>,
}

impl RoadLink {
    fn validate(&self) -> Result<(), NetworkError> {
        let bad = |message: &str| NetworkError::InvalidLink {
            link_id: self.link_id.clone(),
            message: message.to_string(),
        };
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return Err(bad("capacity must be positive"));
        }
        if !(self.free_flow_time > 0.0 && self.free_flow_time.is_finite()) {
            return Err(bad("free-flow time must be positive"));
        }
        if self.lanes < 1 {
            return Err(bad("at least one lane required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub node_id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTower {
    pub node_id: String,
    pub tower_id: String,
}

/// Parameters of the BPR curve `t = t_ff * (1 + alpha * (V/C)^beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BprParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BprParams {
    fn default() -> Self {
        Self { alpha: 0.15, beta: 4.0 }
    }
}

impl BprParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, NetworkError> {
        let p = Self { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.alpha >= 0.0 && self.beta >= 1.0 && self.alpha.is_finite() && self.beta.is_finite() {
            Ok(())
        } else {
            Err(NetworkError::InvalidParams {
                alpha: self.alpha,
                beta: self.beta,
            })
        }
    }
}

/// Congested travel time in minutes for `volume` vehicles per hour.
pub fn bpr_time(link: &RoadLink, volume: f64, params: &BprParams) -> Result<f64, NetworkError> {
    bpr_travel_time(link.free_flow_time, volume, link.capacity, params)
}

/// [`bpr_time`] on raw quantities.
pub fn bpr_travel_time(free_flow_time: f64, volume: f64, capacity: f64, params: &BprParams) -> Result<f64, NetworkError> {
    if volume.is_nan() || volume < 0.0 {
        return Err(NetworkError::NegativeVolume(volume));
    }
    params.validate()?;
    if volume == 0.0 {
        return Ok(free_flow_time);
    }
    Ok(free_flow_time * (1.0 + params.alpha * (volume / capacity).powf(params.beta)))
}

/// Congestion delay in minutes: BPR time minus free-flow time.
pub fn delay(link: &RoadLink, volume: f64, params: &BprParams) -> Result<f64, NetworkError> {
    Ok(bpr_time(link, volume, params)? - link.free_flow_time)
}

/// Raw-quantity form of [`delay`].
pub fn bpr_delay(free_flow_time: f64, volume: f64, capacity: f64, params: &BprParams) -> Result<f64, NetworkError> {
    Ok(bpr_travel_time(free_flow_time, volume, capacity, params)? - free_flow_time)
}

/// A directed road graph. Nodes and links keep input order; ids are unique.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    links: Vec<RoadLink>,
    node_index: BTreeMap<String, usize>,
    link_index: BTreeMap<String, usize>,
    out_links: Vec<Vec<usize>>,
    tower_node: BTreeMap<String, usize>,
}

/// Link indices of a path plus its free-flow cost in minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub links: Vec<usize>,
    pub cost: f64,
}

impl RoadNetwork {
    pub fn new(nodes: Vec<Node>, links: Vec<RoadLink>, node_towers: Vec<NodeTower>) -> Result<Self, NetworkError> {
        let mut node_index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.node_id.clone(), i).is_some() {
                return Err(NetworkError::Invalid(format!("duplicate node `{}`", n.node_id)));
            }
        }
        let mut link_index = BTreeMap::new();
        let mut out_links = vec![Vec::new(); nodes.len()];
        for (i, l) in links.iter().enumerate() {
            l.validate()?;
            if link_index.insert(l.link_id.clone(), i).is_some() {
                return Err(NetworkError::Invalid(format!("duplicate link `{}`", l.link_id)));
            }
            let from = *node_index
                .get(&l.from_node)
                .ok_or_else(|| NetworkError::UnknownNode(l.from_node.clone()))?;
            if !node_index.contains_key(&l.to_node) {
                return Err(NetworkError::UnknownNode(l.to_node.clone()));
            }
            out_links[from].push(i);
        }
        let mut tower_node = BTreeMap::new();
        for nt in node_towers {
            let node = *node_index
                .get(&nt.node_id)
                .ok_or_else(|| NetworkError::UnknownNode(nt.node_id.clone()))?;
            if let Some(prev) = tower_node.insert(nt.tower_id.clone(), node) {
                if prev != node {
                    return Err(NetworkError::Invalid(format!(
                        "tower `{}` mapped to more than one node",
                        nt.tower_id
                    )));
                }
            }
        }
        Ok(Self {
            nodes,
            links,
            node_index,
            link_index,
            out_links,
            tower_node,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[RoadLink] {
        &self.links
    }

    pub fn link(&self, index: usize) -> &RoadLink {
        &self.links[index]
    }

    pub fn node_idx(&self, node_id: &str) -> Result<usize, NetworkError> {
        self.node_index
            .get(node_id)
            .copied()
            .ok_or_else(|| NetworkError::UnknownNode(node_id.to_string()))
    }

    pub fn link_idx(&self, link_id: &str) -> Result<usize, NetworkError> {
        self.link_index
            .get(link_id)
            .copied()
            .ok_or_else(|| NetworkError::UnknownLink(link_id.to_string()))
    }

    /// Node index serving a tower.
    pub fn tower_node(&self, tower_id: &str) -> Result<usize, NetworkError> {
        self.tower_node
            .get(tower_id)
            .copied()
            .ok_or_else(|| NetworkError::UnknownTower(tower_id.to_string()))
    }

    pub fn node_towers(&self) -> impl Iterator<Item = (&str, &str)> {
        self.tower_node
            .iter()
            .map(|(t, &n)| (self.nodes[n].node_id.as_str(), t.as_str()))
    }

    fn path_cmp(&self, a: &Path, b: &Path) -> Ordering {
        a.cost.total_cmp(&b.cost).then_with(|| {
            a.links
                .iter()
                .map(|&l| self.links[l].link_id.as_str())
                .cmp(b.links.iter().map(|&l| self.links[l].link_id.as_str()))
        })
    }

    /// Minimum free-flow-time paths from `origin` (node index) to every node.
    /// Equal-cost paths resolve to the lexicographically smallest sequence of
    /// link ids.
    pub fn shortest_paths_from(&self, origin: usize) -> Vec<Option<Path>> {
        let n = self.nodes.len();
        let mut best: Vec<Option<Path>> = vec![None; n];
        let mut settled = vec![false; n];
        best[origin] = Some(Path {
            links: Vec::new(),
            cost: 0.0,
        });
        loop {
            let next = (0..n)
                .filter(|&v| !settled[v] && best[v].is_some())
                .min_by(|&a, &b| self.path_cmp(best[a].as_ref().unwrap(), best[b].as_ref().unwrap()));
            let Some(u) = next else { break };
            settled[u] = true;
            let base = best[u].clone().unwrap();
            for &li in &self.out_links[u] {
                let link = &self.links[li];
                let v = self.node_index[&link.to_node];
                if settled[v] {
                    continue;
                }
                let mut links = base.links.clone();
                links.push(li);
                let cand = Path {
                    links,
                    cost: base.cost + link.free_flow_time,
                };
                let better = match &best[v] {
                    None => true,
                    Some(cur) => self.path_cmp(&cand, cur) == Ordering::Less,
                };
                if better {
                    best[v] = Some(cand);
                }
            }
        }
        best
    }

    /// Shortest free-flow path between two node indices.
    pub fn route_idx(&self, origin: usize, destination: usize) -> Result<Path, NetworkError> {
        self.shortest_paths_from(origin)
            .swap_remove(destination)
            .ok_or_else(|| NetworkError::NoPath {
                from: self.nodes[origin].node_id.clone(),
                to: self.nodes[destination].node_id.clone(),
            })
    }

    /// Link ids of the shortest free-flow path from `origin` to `destination`.
    pub fn route(&self, origin: &str, destination: &str) -> Result<Vec<String>, NetworkError> {
        let path = self.route_idx(self.node_idx(origin)?, self.node_idx(destination)?)?;
        Ok(path
            .links
            .iter()
            .map(|&l| self.links[l].link_id.clone())
            .collect())
    }

    /// All-pairs shortest paths.
    pub fn route_table(&self) -> RouteTable {
        let n = self.nodes.len();
        let mut routes = Vec::with_capacity(n * n);
        for o in 0..n {
            routes.extend(self.shortest_paths_from(o).into_iter().map(|p| p.map(|p| p.links)));
        }
        RouteTable { n, routes }
    }
}

/// Precomputed link sequences for every ordered node pair.
#[derive(Debug, Clone)]
pub struct RouteTable {
    n: usize,
    routes: Vec<Option<Vec<usize>>>,
}

impl RouteTable {
    pub fn get(&self, origin: usize, destination: usize) -> Option<&[usize]> {
        self.routes[origin * self.n + destination].as_deref()
    }
}

pub fn parse_nodes<R: Read>(input: R) -> Result<Vec<Node>, NetworkError> {
    read_rows(input)
}

pub fn parse_links<R: Read>(input: R) -> Result<Vec<RoadLink>, NetworkError> {
    read_rows(input)
}

pub fn parse_node_towers<R: Read>(input: R) -> Result<Vec<NodeTower>, NetworkError> {
    read_rows(input)
}

fn read_rows<R: Read, T: serde::de::DeserializeOwned>(input: R) -> Result<Vec<T>, NetworkError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let rows = reader.deserialize().collect::<Result<Vec<T>, _>>()?;
    Ok(rows)
}

pub fn write_rows<W: Write, T: Serialize>(output: W, rows: &[T]) -> Result<(), NetworkError> {
    let mut w = csv::Writer::from_writer(output);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn link(id: &str, from: &str, to: &str, fft: f64) -> RoadLink {
        RoadLink {
            link_id: id.into(),
            from_node: from.into(),
            to_node: to.into(),
            lanes: 1,
            capacity: 1000.0,
            free_flow_time: fft,
            length_km: None,
        }
    }

    fn nodes(ids: &[&str]) -> Vec<Node> {
        ids.iter()
            .map(|id| Node {
                node_id: id.to_string(),
                name: id.to_string(),
            })
            .collect()
    }

    #[test]
    fn same_node_route_is_empty() {
        let net = RoadNetwork::new(nodes(&["A", "B"]), vec![link("L1", "A", "B", 5.0)], vec![]).unwrap();
        assert!(net.route("A", "A").unwrap().is_empty());
        assert_eq!(net.route("A", "B").unwrap(), vec!["L1"]);
    }

    #[test]
    fn triangle_prefers_two_hop_path() {
        let net = RoadNetwork::new(
            nodes(&["A", "B", "C"]),
            vec![
                link("AB", "A", "B", 10.0),
                link("BC", "B", "C", 10.0),
                link("AC", "A", "C", 25.0),
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(net.route("A", "C").unwrap(), vec!["AB", "BC"]);
        let p = net.route_idx(0, 2).unwrap();
        assert_eq!(p.cost, 20.0);
    }

    #[test]
    fn ties_break_lexicographically() {
        let net = RoadNetwork::new(
            nodes(&["A", "B", "C", "D"]),
            vec![
                link("z1", "A", "B", 5.0),
                link("z2", "B", "D", 5.0),
                link("a1", "A", "C", 5.0),
                link("a2", "C", "D", 5.0),
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(net.route("A", "D").unwrap(), vec!["a1", "a2"]);
    }

    #[test]
    fn unreachable_is_no_path() {
        let net = RoadNetwork::new(nodes(&["A", "B"]), vec![link("L1", "A", "B", 5.0)], vec![]).unwrap();
        assert!(matches!(net.route("B", "A"), Err(NetworkError::NoPath { .. })));
        assert!(matches!(net.route("A", "Q"), Err(NetworkError::UnknownNode(_))));
    }

    #[test]
    fn invalid_links_are_rejected() {
        let mut l = link("L1", "A", "B", 5.0);
        l.capacity = 0.0;
        assert!(RoadNetwork::new(nodes(&["A", "B"]), vec![l], vec![]).is_err());
        let mut l = link("L1", "A", "B", 5.0);
        l.lanes = 0;
        assert!(RoadNetwork::new(nodes(&["A", "B"]), vec![l], vec![]).is_err());
    }

    #[test]
    fn tower_mapped_twice_is_rejected() {
        let nt = vec![
            NodeTower {
                node_id: "A".into(),
                tower_id: "T".into(),
            },
            NodeTower {
                node_id: "B".into(),
                tower_id: "T".into(),
            },
        ];
        assert!(RoadNetwork::new(nodes(&["A", "B"]), vec![], nt).is_err());
    }

    #[test]
    fn bpr_reference_points() {
        let p = BprParams::default();
        let mut l = link("L", "A", "B", 10.0);
        l.capacity = 100.0;
        assert_eq!(bpr_time(&l, 0.0, &p).unwrap(), 10.0);
        assert!((bpr_time(&l, 100.0, &p).unwrap() - 11.5).abs() < 1e-12);
        assert!((bpr_time(&l, 200.0, &p).unwrap() - 34.0).abs() < 1e-12);
        assert_eq!(delay(&l, 0.0, &p).unwrap(), 0.0);
        assert!((delay(&l, 200.0, &p).unwrap() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn more_capacity_less_delay() {
        let p = BprParams::default();
        let mut l = link("L", "A", "B", 10.0);
        l.capacity = 100.0;
        let d1 = delay(&l, 150.0, &p).unwrap();
        l.capacity = 200.0;
        let d2 = delay(&l, 150.0, &p).unwrap();
        assert!(d2 < d1);
    }

    #[test]
    fn bpr_domain_errors() {
        let l = link("L", "A", "B", 10.0);
        assert!(matches!(
            bpr_time(&l, -1.0, &BprParams::default()),
            Err(NetworkError::NegativeVolume(_))
        ));
        assert!(BprParams::new(0.15, 0.5).is_err());
        assert!(BprParams::new(-0.1, 4.0).is_err());
    }

    #[test]
    fn parse_links_csv() {
        let csv = "link_id,from_node,to_node,lanes,capacity_vph,free_flow_min,length_km\nL1,A,B,2,1800,6.5,4.2\nL2,B,A,2,1800,6.5,\n";
        let links = parse_links(csv.as_bytes()).unwrap();
        assert_eq!(links.len(), 2);
        assert_eq!(links[0].capacity, 1800.0);
        assert_eq!(links[0].length_km, Some(4.2));
        assert_eq!(links[1].length_km, None);
    }
}
