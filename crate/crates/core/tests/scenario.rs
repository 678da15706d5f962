use tdm_core::demand::{assign_od_to_links, calibrate_scale, extract_od, LinkLoads, TimeBinning};
use tdm_core::ingest::{build_profiles, build_trajectories, filter_tourists, TowerRegistry, Trajectory};
use tdm_core::network::{RoadNetwork, RouteTable};
use tdm_core::optimizer::{
    home_node, optimize, preference_only, preferred_slot, PlanOptions, PlanningContext, RecommendationPlan, Traveler,
};
use tdm_core::preference::{build_matrix, fit, FitParams, LocationIndex, PreferenceModel};
use tdm_core::scenario::{complies, recompute_avg_delay, simulate, sweep_compliance, ScenarioConfig};
use tdm_core::synthetic::{generate, SyntheticSpec};

/// A small synthetic city run through ingest, demand and preference fitting.
struct World {
    network: RoadNetwork,
    routes: RouteTable,
    model: PreferenceModel,
    background: LinkLoads,
    travelers: Vec<Traveler>,
    trips_per_traveler: f64,
}

const SLOTS: [u8; 2] = [10, 13];

fn world() -> World {
    let city = generate(&SyntheticSpec {
        travelers: 300,
        residents: 100,
        seed: 3,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let network = RoadNetwork::new(city.nodes, city.links, city.node_towers).unwrap();
    let towers = TowerRegistry::new(city.towers).unwrap();
    let (trajectories, _) = build_trajectories(&city.records, &towers);
    let profiles = build_profiles(&trajectories);
    let tourists = filter_tourists(&profiles, "AD", true);
    let is_tourist = |t: &Trajectory| tourists.iter().any(|p| p.user_id == t.user_id);
    let (trav, bg): (Vec<Trajectory>, Vec<Trajectory>) = trajectories.iter().cloned().partition(is_tourist);

    let binning = TimeBinning::default();
    let routes = network.route_table();
    let mut all = extract_od(&trav, &network, binning).unwrap();
    let bg_od = extract_od(&bg, &network, binning).unwrap();
    all.extend(bg_od.iter().cloned());
    let all_flows = assign_od_to_links(&all, &network, &routes).flows;
    let cal = calibrate_scale(&all_flows, &city.counts, &network).unwrap();
    let background = assign_od_to_links(&bg_od, &network, &routes)
        .flows
        .into_iter()
        .map(|(k, v)| (k, v * cal.factor(k.0, k.1)))
        .collect();

    let matrix = build_matrix(&tourists, &LocationIndex::from_network(&network)).unwrap();
    let model = fit(
        &matrix,
        &FitParams {
            k: 3,
            ..FitParams::default()
        },
        1,
    )
    .unwrap();
    let travelers = model
        .users
        .iter()
        .enumerate()
        .map(|(row, user)| {
            let t = trav.iter().find(|t| &t.user_id == user).unwrap();
            Traveler {
                user_id: user.clone(),
                model_row: row,
                home_node: home_node(t, &network).unwrap(),
                preferred_slot: preferred_slot(t, &network, binning, &SLOTS).unwrap(),
            }
        })
        .collect();
    World {
        network,
        routes,
        model,
        background,
        travelers,
        trips_per_traveler: cal.global_factor,
    }
}

impl World {
    fn ctx(&self) -> PlanningContext<'_> {
        PlanningContext::new(
            &self.network,
            &self.routes,
            &self.model,
            SLOTS.to_vec(),
            &self.background,
            self.trips_per_traveler,
        )
        .unwrap()
    }

    fn plans(&self, theta: f64) -> (RecommendationPlan, RecommendationPlan) {
        let ctx = self.ctx();
        (
            optimize(&self.travelers, &ctx, theta, &PlanOptions::default()).unwrap(),
            preference_only(&self.travelers, &ctx).unwrap(),
        )
    }
}

const RATES: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[test]
fn endpoints_and_delay_consistency() {
    let w = world();
    let (opt, base) = w.plans(0.0);
    assert!(opt.objective < base.objective, "capacities should bind");
    let ctx = w.ctx();
    for seed in [1, 2, 3] {
        let at = |rho| {
            let cfg = ScenarioConfig {
                compliance_rate: rho,
                seed,
                ..ScenarioConfig::default()
            };
            simulate(&cfg, &opt, &base, &w.travelers, &ctx).unwrap()
        };
        let (none, all) = (at(0.0), at(1.0));
        assert_eq!(none.idealized_score, base.objective);
        assert_eq!(none.idealized_count, base.idealized_count);
        assert_eq!(all.idealized_score, opt.objective);
        assert_eq!(all.idealized_count, opt.idealized_count);
        for r in [none, at(0.5), all] {
            let again = recompute_avg_delay(&r.links, r.peak_hour, &ScenarioConfig::default().bpr).unwrap();
            assert!((again - r.avg_delay).abs() <= 1e-9 * r.avg_delay.abs().max(1e-300));
        }
    }
}

#[test]
fn satisfaction_falls_with_compliance_for_every_seed() {
    let w = world();
    let (opt, base) = w.plans(0.0);
    let results = sweep_compliance(&ScenarioConfig::default(), &RATES, &[4, 5, 6], &opt, &base, &w.travelers, &w.ctx())
        .unwrap();
    for per_seed in results.chunks(RATES.len()) {
        assert!(per_seed.windows(2).all(|p| p[1].idealized_score <= p[0].idealized_score));
        assert!(per_seed.windows(2).all(|p| p[1].compliers >= p[0].compliers));
    }
}

#[test]
fn unconstrained_plan_has_no_effect() {
    let w = world();
    let (free, base) = w.plans(f64::INFINITY);
    let results = sweep_compliance(&ScenarioConfig::default(), &RATES, &[1], &free, &base, &w.travelers, &w.ctx()).unwrap();
    assert!(results.iter().all(|r| r.avg_delay == results[0].avg_delay));
    assert!(results.iter().all(|r| r.idealized_score == base.objective));
}

#[test]
fn compliers_nest_across_rates() {
    let w = world();
    for seed in 0..5 {
        for t in &w.travelers {
            let flags: Vec<bool> = RATES.iter().map(|&r| complies(seed, &t.user_id, r)).collect();
            assert!(flags.windows(2).all(|f| !f[0] || f[1]));
        }
    }
}

#[test]
fn sweeps_do_not_depend_on_thread_count() {
    let w = world();
    let (opt, base) = w.plans(0.0);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                sweep_compliance(&ScenarioConfig::default(), &RATES, &[1, 2, 3, 4], &opt, &base, &w.travelers, &w.ctx())
                    .unwrap()
            })
    };
    assert_eq!(run(1), run(4));
}
