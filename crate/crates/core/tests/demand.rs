use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdm_core::demand::{assign_od_to_links, calibrate_scale, extract_od, scale_flows, OdMatrix, TimeBinning};
use tdm_core::ingest::{build_trajectories, TowerRegistry};
use tdm_core::network::RoadNetwork;
use tdm_core::synthetic::{generate, SyntheticSpec};

struct City {
    network: RoadNetwork,
    trajectories: Vec<tdm_core::ingest::Trajectory>,
    counts: Vec<tdm_core::demand::TrafficCount>,
}

fn city() -> City {
    let c = generate(&SyntheticSpec {
        travelers: 300,
        residents: 100,
        count_noise: 0.1,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let network = RoadNetwork::new(c.nodes, c.links, c.node_towers).unwrap();
    let towers = TowerRegistry::new(c.towers).unwrap();
    let (trajectories, errors) = build_trajectories(&c.records, &towers);
    assert!(errors.is_empty());
    City {
        network,
        trajectories,
        counts: c.counts,
    }
}

#[test]
fn od_total_counts_distinct_node_moves() {
    let c = city();
    let od = extract_od(&c.trajectories, &c.network, TimeBinning::default()).unwrap();
    let total: f64 = od.iter().map(OdMatrix::total).sum();
    let mut moves = 0usize;
    for t in &c.trajectories {
        let nodes: Vec<usize> = t.visits.iter().map(|v| c.network.tower_node(&v.tower_id).unwrap()).collect();
        moves += nodes.windows(2).filter(|w| w[0] != w[1]).count();
    }
    assert_eq!(total, moves as f64);
    assert!(od.windows(2).all(|w| w[0].time_bin < w[1].time_bin));
}

#[test]
fn scaled_counted_links_reproduce_counts() {
    let c = city();
    let od = extract_od(&c.trajectories, &c.network, TimeBinning::default()).unwrap();
    let assigned = assign_od_to_links(&od, &c.network, &c.network.route_table());
    assert!(assigned.unroutable.is_empty());
    let cal = calibrate_scale(&assigned.flows, &c.counts, &c.network).unwrap();
    let flows = scale_flows(&assigned.flows, &cal, &c.network);
    let mut checked = 0;
    for count in &c.counts {
        let l = c.network.link_idx(&count.link_id).unwrap();
        let r = assigned.flows.get(&(l, count.time_bin)).copied().unwrap_or(0.0);
        if r == 0.0 {
            continue;
        }
        let beta = cal.factor(l, count.time_bin);
        let rel = (r * beta - count.counted_vehicles).abs() / count.counted_vehicles.abs().max(f64::MIN_POSITIVE);
        assert!(rel <= 1e-12, "{} @{}: {rel:e}", count.link_id, count.time_bin);
        checked += 1;
    }
    assert!(checked > 10);
    for f in &flows {
        assert_eq!(f.vehicle_flow, f.cdr_flow * f.scale_factor);
        assert!(f.vehicle_flow >= 0.0);
    }
}

#[test]
fn assignment_is_additive_over_od_splits() {
    let c = city();
    let od = extract_od(&c.trajectories, &c.network, TimeBinning::default()).unwrap();
    let routes = c.network.route_table();
    let whole = assign_od_to_links(&od, &c.network, &routes).flows;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for m in &od {
            let (mut ma, mut mb) = (OdMatrix::new(m.time_bin), OdMatrix::new(m.time_bin));
            for (&(o, d), &trips) in &m.entries {
                let part = trips * rng.gen_range(0.0..=1.0);
                ma.add(o, d, part);
                mb.add(o, d, trips - part);
            }
            a.push(ma);
            b.push(mb);
        }
        let fa = assign_od_to_links(&a, &c.network, &routes).flows;
        let fb = assign_od_to_links(&b, &c.network, &routes).flows;
        for (key, &v) in &whole {
            let sum = fa.get(key).copied().unwrap_or(0.0) + fb.get(key).copied().unwrap_or(0.0);
            assert!((sum - v).abs() <= 1e-9 * v.max(1.0), "{key:?}: {sum} vs {v}");
        }
        assert!(fa.keys().chain(fb.keys()).all(|k| whole.contains_key(k)));
    }
}
