//! Capacity-constrained location recommendation.
//!
//! Each traveler picks one `(location, slot)` bundle scored by the
//! preference model; bundles load every link on the free-flow route from
//! the traveler's home node during their slot. The recommender maximizes the
//! total score subject to `background + recommended <= C * (1 + theta)` on
//! every link and slot. The unconstrained choice (best location in the
//! preferred slot) is the preference-only baseline.

pub mod instance;
pub mod lp;
pub mod oracle;
pub mod refine;


use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use instance::{
    branch_and_bound, greedy, local_search, lp_round, solve, solve_from, Bundle, Choices, Instance, Solution,
};
pub use lp::{lp_bound, lp_relaxation, LpError, LpRelaxation};
pub use oracle::{oracle, OracleError, OracleResult};
pub use refine::fix_and_branch;

use crate::demand::{LinkLoads, TimeBinning};
use crate::ingest::Trajectory;
use crate::network::{NetworkError, RoadNetwork, RouteTable};
use crate::preference::{PreferenceError, PreferenceModel};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Preference(#[from] PreferenceError),
    #[error("no route from `{from}` to `{to}` for traveler `{user_id}`")]
    NoRoute { user_id: String, from: String, to: String },
    #[error("no feasible plan: travelers {0:?} cannot be placed within capacity (enable stay to leave them out)")]
    Infeasible(Vec<String>),
    #[error("tolerable excess throughput must be >= -1, got {0}")]
    InvalidTheta(f64),
    #[error("invalid planning input: {0}")]
    Invalid(String),
}

/// A traveler to plan for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traveler {
    pub user_id: String,
    /// Row in the preference model.
    pub model_row: usize,
    /// Network node index the trip starts from.
    pub home_node: usize,
    /// Index into the planning slots.
    pub preferred_slot: usize,
}

/// Node of the first visit: the lodging the planned trip departs from.
pub fn home_node(trajectory: &Trajectory, network: &RoadNetwork) -> Result<usize, NetworkError> {
    let first = trajectory
        .visits
        .first()
        .ok_or_else(|| NetworkError::Invalid(format!("empty trajectory for `{}`", trajectory.user_id)))?;
    network.tower_node(&first.tower_id)
}

/// The planning slot in which the traveler departed most often; slot 0 when
/// none of their trips fall in a planning slot.
pub fn preferred_slot(
    trajectory: &Trajectory,
    network: &RoadNetwork,
    binning: TimeBinning,
    slots: &[u8],
) -> Result<usize, NetworkError> {
    let mut counts = vec![0usize; slots.len()];
    let nodes = trajectory
        .visits
        .iter()
        .map(|v| network.tower_node(&v.tower_id).map(|n| (n, v.timestamp)))
        .collect::<Result<Vec<_>, _>>()?;
    for w in nodes.windows(2) {
        if w[0].0 != w[1].0 {
            let hour = binning.bin(w[0].1);
            if let Some(s) = slots.iter().position(|&h| h == hour) {
                counts[s] += 1;
            }
        }
    }
    Ok(counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .filter(|(_, &c)| c > 0)
        .map_or(0, |(s, _)| s))
}

/// Everything the planners read: network, routes, preference model and
/// background traffic.
#[derive(Debug, Clone)]
pub struct PlanningContext<'a> {
    pub network: &'a RoadNetwork,
    pub routes: &'a RouteTable,
    pub model: &'a PreferenceModel,
    /// Network node of each model location.
    pub location_nodes: Vec<usize>,
    /// Hour bin of each slot.
    pub slots: Vec<u8>,
    /// Vehicles per hour per `(link, hour)` not under recommendation.
    pub background: &'a LinkLoads,
    /// Vehicles each recommended traveler adds to a link.
    pub trips_per_traveler: f64,
}

impl<'a> PlanningContext<'a> {
    pub fn new(
        network: &'a RoadNetwork,
        routes: &'a RouteTable,
        model: &'a PreferenceModel,
        slots: Vec<u8>,
        background: &'a LinkLoads,
        trips_per_traveler: f64,
    ) -> Result<Self, OptimizeError> {
        if slots.is_empty() {
            return Err(OptimizeError::Invalid("at least one slot is required".into()));
        }
        if !(trips_per_traveler > 0.0 && trips_per_traveler.is_finite()) {
            return Err(OptimizeError::Invalid(format!(
                "trips_per_traveler must be positive, got {trips_per_traveler}"
            )));
        }
        let location_nodes = model
            .locations
            .iter()
            .map(|l| network.node_idx(l))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            network,
            routes,
            model,
            location_nodes,
            slots,
            background,
            trips_per_traveler,
        })
    }

    fn background_at(&self, link: usize, slot: usize) -> f64 {
        self.background.get(&(link, self.slots[slot])).copied().unwrap_or(0.0)
    }

    fn resource(&self, link: usize, slot: usize) -> usize {
        link * self.slots.len() + slot
    }

    fn n_resources(&self) -> usize {
        self.network.links().len() * self.slots.len()
    }

    fn route(&self, traveler: &Traveler, location: usize) -> Result<&[usize], OptimizeError> {
        let dest = self.location_nodes[location];
        self.routes.get(traveler.home_node, dest).ok_or_else(|| OptimizeError::NoRoute {
            user_id: traveler.user_id.clone(),
            from: self.network.nodes()[traveler.home_node].node_id.clone(),
            to: self.network.nodes()[dest].node_id.clone(),
        })
    }

    /// Best `n` destinations by raw score, skipping the traveler's home node.
    fn candidates(&self, traveler: &Traveler, n: usize) -> Result<Vec<(usize, f64)>, OptimizeError> {
        let mut top = self.model.top_candidates(traveler.model_row, n + 1, None)?;
        top.retain(|&(loc, _)| self.location_nodes[loc] != traveler.home_node);
        top.truncate(n);
        Ok(top)
    }

    /// Unconstrained best destination (ties to the lower index).
    fn top_location(&self, traveler: &Traveler) -> Result<(usize, f64), OptimizeError> {
        self.candidates(traveler, 1)?.first().copied().ok_or_else(|| {
            OptimizeError::Invalid(format!("no destination other than home for `{}`", traveler.user_id))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanOptions {
    /// Best-scoring locations offered per traveler.
    pub candidates: usize,
    /// Relative score loss for travelling outside the preferred slot.
    pub slot_shift_penalty: f64,
    /// Allow the null bundle (no trip, score 0) instead of failing.
    pub allow_stay: bool,
    /// Branch-and-bound node limit; the plan is exact when the search ends
    /// within it.
    pub node_budget: u64,
    pub compute_lp_bound: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            candidates: 3,
            slot_shift_penalty: 0.25,
            allow_stay: true,
            node_budget: 2_000_000,
            compute_lp_bound: true,
        }
    }
}

/// A bundle in model/slot indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleKey {
    pub location: usize,
    pub slot: usize,
}

/// Instance plus the bundle keys behind every option.
#[derive(Debug, Clone)]
pub struct PlanningInstance {
    pub instance: Instance,
    pub keys: Vec<Vec<BundleKey>>,
}

/// Per-resource limit `C * (1 + theta) - background`.
fn residual_capacity(ctx: &PlanningContext, theta: f64) -> Vec<f64> {
    let mut cap = vec![0.0; ctx.n_resources()];
    for (l, link) in ctx.network.links().iter().enumerate() {
        for s in 0..ctx.slots.len() {
            cap[ctx.resource(l, s)] = if theta.is_infinite() {
                f64::INFINITY
            } else {
                link.capacity * (1.0 + theta) - ctx.background_at(l, s)
            };
        }
    }
    cap
}

/// Builds the assignment instance. Options per traveler are the top
/// `candidates` locations other than home, each in the preferred slot first
/// and then the other slots; unreachable locations are left out.
pub fn build_instance(
    travelers: &[Traveler],
    ctx: &PlanningContext,
    theta: f64,
    opts: &PlanOptions,
) -> Result<PlanningInstance, OptimizeError> {
    if theta.is_nan() || theta < -1.0 {
        return Err(OptimizeError::InvalidTheta(theta));
    }
    let mut bundles = Vec::with_capacity(travelers.len());
    let mut keys = Vec::with_capacity(travelers.len());
    for t in travelers {
        let mut tb = Vec::new();
        let mut tk = Vec::new();
        let slot_order =
            std::iter::once(t.preferred_slot).chain((0..ctx.slots.len()).filter(|&s| s != t.preferred_slot));
        let slot_order: Vec<usize> = slot_order.collect();
        for (loc, raw) in ctx.candidates(t, opts.candidates.max(1))? {
            let Some(route) = ctx.routes.get(t.home_node, ctx.location_nodes[loc]) else {
                continue;
            };
            let base = raw.max(0.0);
            for &s in &slot_order {
                let score = if s == t.preferred_slot {
                    base
                } else {
                    base * (1.0 - opts.slot_shift_penalty)
                };
                tb.push(Bundle {
                    score,
                    resources: route.iter().map(|&l| ctx.resource(l, s)).collect(),
                });
                tk.push(BundleKey { location: loc, slot: s });
            }
        }
        bundles.push(tb);
        keys.push(tk);
    }
    Ok(PlanningInstance {
        instance: Instance {
            bundles,
            capacity: residual_capacity(ctx, theta),
            load: ctx.trips_per_traveler,
            allow_stay: opts.allow_stay,
        },
        keys,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceBundle {
    pub location: String,
    pub slot_hour: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrip {
    pub user_id: String,
    pub home_node: String,
    /// `None` is the null bundle: no trip.
    pub choice: Option<ChoiceBundle>,
    pub score: f64,
    /// Whether this is the traveler's unconstrained best bundle.
    pub top_choice: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkUtilization {
    pub link_id: String,
    pub hour: u8,
    pub background: f64,
    pub recommended: f64,
    pub capacity: f64,
    /// `C * (1 + theta)`; absent when unconstrained.
    pub limit: Option<f64>,
    pub voc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMethod {
    PreferenceOnly,
    Optimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationPlan {
    pub method: PlanMethod,
    /// Absent for the baseline and for an unconstrained optimization.
    pub theta: Option<f64>,
    pub feasible: bool,
    /// The optimizer proved optimality within its search budget.
    pub exact: bool,
    /// Sum of assigned preference scores.
    pub objective: f64,
    /// Travelers assigned their unconstrained best bundle.
    pub idealized_count: usize,
    pub greedy_objective: Option<f64>,
    pub lp_bound: Option<f64>,
    pub trips: Vec<PlannedTrip>,
    pub utilization: Vec<LinkUtilization>,
}

fn utilization(
    ctx: &PlanningContext,
    travelers: &[Traveler],
    trips: &[PlannedTrip],
    theta: Option<f64>,
) -> Result<Vec<LinkUtilization>, OptimizeError> {
    let mut load = vec![0.0; ctx.n_resources()];
    for (t, trip) in travelers.iter().zip(trips) {
        if let Some(c) = &trip.choice {
            let loc = ctx
                .model
                .locations
                .iter()
                .position(|l| *l == c.location)
                .ok_or_else(|| OptimizeError::Invalid(format!("unknown location `{}`", c.location)))?;
            let slot = ctx.slots.iter().position(|&h| h == c.slot_hour).unwrap_or(0);
            for &l in ctx.route(t, loc)? {
                load[ctx.resource(l, slot)] += ctx.trips_per_traveler;
            }
        }
    }
    let mut rows = Vec::new();
    for (l, link) in ctx.network.links().iter().enumerate() {
        for (s, &hour) in ctx.slots.iter().enumerate() {
            let background = ctx.background_at(l, s);
            let recommended = load[ctx.resource(l, s)];
            rows.push(LinkUtilization {
                link_id: link.link_id.clone(),
                hour,
                background,
                recommended,
                capacity: link.capacity,
                limit: theta.filter(|t| t.is_finite()).map(|t| link.capacity * (1.0 + t)),
                voc: (background + recommended) / link.capacity,
            });
        }
    }
    rows.sort_by(|a, b| (&a.link_id, a.hour).cmp(&(&b.link_id, b.hour)));
    Ok(rows)
}

/// Everyone takes their best predicted location in their preferred slot;
/// capacity is ignored.
pub fn preference_only(travelers: &[Traveler], ctx: &PlanningContext) -> Result<RecommendationPlan, OptimizeError> {
    let mut trips = Vec::with_capacity(travelers.len());
    let mut objective = 0.0;
    for t in travelers {
        let (loc, raw) = ctx.top_location(t)?;
        ctx.route(t, loc)?;
        let score = raw.max(0.0);
        objective += score;
        trips.push(PlannedTrip {
            user_id: t.user_id.clone(),
            home_node: ctx.network.nodes()[t.home_node].node_id.clone(),
            choice: Some(ChoiceBundle {
                location: ctx.model.locations[loc].clone(),
                slot_hour: ctx.slots[t.preferred_slot],
            }),
            score,
            top_choice: true,
        });
    }
    let utilization = utilization(ctx, travelers, &trips, None)?;
    Ok(RecommendationPlan {
        method: PlanMethod::PreferenceOnly,
        theta: None,
        feasible: true,
        exact: true,
        objective,
        idealized_count: trips.len(),
        greedy_objective: None,
        lp_bound: None,
        trips,
        utilization,
    })
}

/// Capacity-constrained plan at tolerable excess throughput `theta`
/// (`f64::INFINITY` for no limit).
pub fn optimize(
    travelers: &[Traveler],
    ctx: &PlanningContext,
    theta: f64,
    opts: &PlanOptions,
) -> Result<RecommendationPlan, OptimizeError> {
    optimize_from(travelers, ctx, theta, opts, None).map(|(plan, _)| plan)
}

/// As [`optimize`], starting from a previous solution over the same
/// travelers and options (bundle choices are independent of `theta`).
/// Also returns the chosen bundle indices.
pub fn optimize_from(
    travelers: &[Traveler],
    ctx: &PlanningContext,
    theta: f64,
    opts: &PlanOptions,
    warm: Option<&[Option<usize>]>,
) -> Result<(RecommendationPlan, Choices), OptimizeError> {
    let pi = build_instance(travelers, ctx, theta, opts)?;
    let inst = &pi.instance;
    let relaxation = if opts.compute_lp_bound {
        lp_relaxation(inst).ok()
    } else {
        None
    };
    let outcome = solve_from(inst, warm, relaxation.as_ref().map(|r| r.x.as_slice()), opts.node_budget);
    let Some(solution) = outcome.solution else {
        let stranded = greedy(inst).unassigned;
        return Err(OptimizeError::Infeasible(
            stranded.iter().map(|&u| travelers[u].user_id.clone()).collect(),
        ));
    };
    let lp = relaxation.map(|r| r.bound);

    let mut trips = Vec::with_capacity(travelers.len());
    let mut idealized_count = 0;
    for (u, t) in travelers.iter().enumerate() {
        let (top_loc, _) = ctx.top_location(t)?;
        let (choice, score, top_choice) = match solution.choices[u] {
            Some(b) => {
                let key = pi.keys[u][b];
                let top = key.location == top_loc && key.slot == t.preferred_slot;
                (
                    Some(ChoiceBundle {
                        location: ctx.model.locations[key.location].clone(),
                        slot_hour: ctx.slots[key.slot],
                    }),
                    inst.bundles[u][b].score,
                    top,
                )
            }
            None => (None, 0.0, false),
        };
        idealized_count += top_choice as usize;
        trips.push(PlannedTrip {
            user_id: t.user_id.clone(),
            home_node: ctx.network.nodes()[t.home_node].node_id.clone(),
            choice,
            score,
            top_choice,
        });
    }
    let theta_out = theta.is_finite().then_some(theta);
    let utilization = utilization(ctx, travelers, &trips, theta_out)?;
    let plan = RecommendationPlan {
        method: PlanMethod::Optimized,
        theta: theta_out,
        feasible: inst.is_feasible(&solution.choices),
        // an integer plan that meets the relaxation is optimal too
        exact: outcome.exact || lp.is_some_and(|b| solution.objective >= b - 1e-9 * (1.0 + b.abs())),
        objective: solution.objective,
        idealized_count,
        greedy_objective: outcome.greedy_objective,
        lp_bound: lp,
        trips,
        utilization,
    };
    Ok((plan, solution.choices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Node, NodeTower, RoadLink};
    use crate::preference::FitParams;

    /// Home H with one link to each of two locations, each link holding one
    /// traveler (`trips_per_traveler` = 1, capacity 1, no background).
    fn fixture() -> (RoadNetwork, PreferenceModel) {
        let nodes = ["H", "L1", "L2"]
            .iter()
            .map(|id| Node {
                node_id: id.to_string(),
                name: id.to_string(),
            })
            .collect();
        let link = |id: &str, to: &str| RoadLink {
            link_id: id.into(),
            from_node: "H".into(),
            to_node: to.into(),
            lanes: 1,
            capacity: 1.0,
            free_flow_time: 10.0,
            length_km: None,
        };
        let net = RoadNetwork::new(nodes, vec![link("a1", "L1"), link("a2", "L2")], Vec::<NodeTower>::new()).unwrap();
        // preferences [[5,1],[4,2]] as rank-2 factors with identity locations
        let model = PreferenceModel {
            k: 2,
            seed: 0,
            params: FitParams::default(),
            users: vec!["t1".into(), "t2".into()],
            locations: vec!["L1".into(), "L2".into()],
            user_factors: vec![5.0, 1.0, 4.0, 2.0],
            location_factors: vec![1.0, 0.0, 0.0, 1.0],
            loss_history: vec![],
        };
        (net, model)
    }

    fn travelers() -> Vec<Traveler> {
        (0..2)
            .map(|i| Traveler {
                user_id: format!("t{}", i + 1),
                model_row: i,
                home_node: 0,
                preferred_slot: 0,
            })
            .collect()
    }

    fn opts() -> PlanOptions {
        PlanOptions {
            candidates: 2,
            allow_stay: false,
            ..PlanOptions::default()
        }
    }

    #[test]
    fn two_travelers_split_across_locations() {
        let (net, model) = fixture();
        let routes = net.route_table();
        let bg = LinkLoads::new();
        let ctx = PlanningContext::new(&net, &routes, &model, vec![10], &bg, 1.0).unwrap();
        let plan = optimize(&travelers(), &ctx, 0.0, &opts()).unwrap();
        let locs: Vec<_> = plan.trips.iter().map(|t| t.choice.as_ref().unwrap().location.as_str()).collect();
        assert_eq!(locs, vec!["L1", "L2"]);
        assert_eq!(plan.objective, 7.0);
        assert!(plan.feasible && plan.exact);
        assert_eq!(plan.idealized_count, 1);
        assert!(plan.lp_bound.unwrap() >= 7.0 - 1e-9);
        assert!(plan.utilization.iter().all(|u| u.background + u.recommended <= u.limit.unwrap()));
    }

    #[test]
    fn unconstrained_plan_matches_baseline() {
        let (net, model) = fixture();
        let routes = net.route_table();
        let bg = LinkLoads::new();
        let ctx = PlanningContext::new(&net, &routes, &model, vec![10], &bg, 1.0).unwrap();
        let base = preference_only(&travelers(), &ctx).unwrap();
        let free = optimize(&travelers(), &ctx, f64::INFINITY, &opts()).unwrap();
        assert_eq!(free.trips, base.trips);
        assert_eq!(free.objective, base.objective);
        assert_eq!(base.objective, 9.0);
        // both travelers on a1 doubles its flow
        let a1 = base.utilization.iter().find(|u| u.link_id == "a1").unwrap();
        assert_eq!(a1.recommended, 2.0);
    }

    #[test]
    fn zero_caps_with_stay_assigns_nobody() {
        let (net, model) = fixture();
        let routes = net.route_table();
        let bg = LinkLoads::new();
        let ctx = PlanningContext::new(&net, &routes, &model, vec![10], &bg, 1.0).unwrap();
        let o = PlanOptions {
            allow_stay: true,
            ..opts()
        };
        let plan = optimize(&travelers(), &ctx, -1.0, &o).unwrap();
        assert!(plan.trips.iter().all(|t| t.choice.is_none()));
        assert_eq!(plan.objective, 0.0);
        assert!(matches!(
            optimize(&travelers(), &ctx, -1.0, &opts()),
            Err(OptimizeError::Infeasible(u)) if u.len() == 2
        ));
        assert!(matches!(optimize(&travelers(), &ctx, -2.0, &o), Err(OptimizeError::InvalidTheta(_))));
    }

    #[test]
    fn scaling_scores_keeps_argmax() {
        let (net, mut model) = fixture();
        let routes = net.route_table();
        let bg = LinkLoads::new();
        let before = {
            let ctx = PlanningContext::new(&net, &routes, &model, vec![10], &bg, 1.0).unwrap();
            preference_only(&travelers(), &ctx).unwrap()
        };
        for x in &mut model.user_factors[0..2] {
            *x *= 3.5;
        }
        let ctx = PlanningContext::new(&net, &routes, &model, vec![10], &bg, 1.0).unwrap();
        let after = preference_only(&travelers(), &ctx).unwrap();
        assert_eq!(before.trips[0].choice, after.trips[0].choice);
    }

    #[test]
    fn second_slot_absorbs_overflow() {
        let (net, model) = fixture();
        let routes = net.route_table();
        let bg = LinkLoads::new();
        let ctx = PlanningContext::new(&net, &routes, &model, vec![10, 14], &bg, 1.0).unwrap();
        let plan = optimize(&travelers(), &ctx, 0.0, &opts()).unwrap();
        // t1 keeps L1 at 10h; t2 prefers L1 at 14h (4 * 0.75 = 3) over L2 at 10h (2)
        let c2 = plan.trips[1].choice.as_ref().unwrap();
        assert_eq!((c2.location.as_str(), c2.slot_hour), ("L1", 14));
        assert_eq!(plan.objective, 8.0);
    }

    #[test]
    fn background_consumes_capacity() {
        let (net, model) = fixture();
        let routes = net.route_table();
        let bg: LinkLoads = [((0, 10), 1.0)].into_iter().collect();
        let ctx = PlanningContext::new(&net, &routes, &model, vec![10], &bg, 1.0).unwrap();
        let o = PlanOptions {
            allow_stay: true,
            ..opts()
        };
        let plan = optimize(&travelers(), &ctx, 0.0, &o).unwrap();
        assert!(plan
            .trips
            .iter()
            .all(|t| t.choice.as_ref().is_none_or(|c| c.location == "L2")));
    }

    #[test]
    fn home_and_slot_from_trajectory() {
        use crate::ingest::{UserGroup, Visit};
        let nodes = ["A", "B"]
            .iter()
            .map(|id| Node {
                node_id: id.to_string(),
                name: id.to_string(),
            })
            .collect();
        let towers = vec![
            NodeTower {
                node_id: "A".into(),
                tower_id: "ta".into(),
            },
            NodeTower {
                node_id: "B".into(),
                tower_id: "tb".into(),
            },
        ];
        let net = RoadNetwork::new(nodes, vec![], towers).unwrap();
        let v = |t: &str, h: i64| Visit {
            tower_id: t.into(),
            timestamp: h * 3600,
        };
        let traj = Trajectory {
            user_id: "u".into(),
            nationality: "FR".into(),
            group: UserGroup::France,
            visits: vec![v("tb", 8), v("ta", 10), v("tb", 14), v("ta", 18), v("tb", 20)],
        };
        assert_eq!(home_node(&traj, &net).unwrap(), 1);
        let revisits = Trajectory {
            visits: vec![v("ta", 8), v("tb", 10), v("ta", 12), v("tb", 14), v("tb", 16)],
            ..traj.clone()
        };
        assert_eq!(home_node(&revisits, &net).unwrap(), 0);
        assert_eq!(preferred_slot(&traj, &net, TimeBinning::default(), &[10, 14]).unwrap(), 0);
        assert_eq!(preferred_slot(&traj, &net, TimeBinning::default(), &[3]).unwrap(), 0);
    }
}
