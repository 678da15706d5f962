//! Compliance simulation and trade-off sweeps.
//!
//! Each traveler follows the optimized plan with probability `rho` and
//! otherwise makes their preference-only trip. Realized trips are loaded onto
//! the network on top of background traffic and turned into delays with the
//! BPR curve.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{bpr_delay, BprParams, NetworkError};
use crate::optimizer::{optimize_from, OptimizeError, PlanOptions, PlannedTrip, PlanningContext, RecommendationPlan, Traveler};
use crate::rng::keyed_uniform;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error("traveler `{user_id}` is missing from the {plan} plan")]
    MissingTraveler { user_id: String, plan: &'static str },
    #[error("unknown location `{0}` in plan")]
    UnknownLocation(String),
    #[error("compliance rate must be in [0, 1], got {0}")]
    InvalidRate(f64),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub compliance_rate: f64,
    pub bpr: BprParams,
    pub seed: u64,
    /// Hour whose delay is reported; defaults to the busiest background hour.
    pub peak_hour: Option<u8>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            compliance_rate: 1.0,
            bpr: BprParams::default(),
            seed: 0,
            peak_hour: None,
        }
    }
}

/// Flow and delay on one link in one hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub link_id: String,
    pub hour: u8,
    pub volume: f64,
    pub capacity: f64,
    pub voc: f64,
    pub free_flow_min: f64,
    pub delay_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub compliance_rate: f64,
    pub theta: Option<f64>,
    pub seed: u64,
    pub compliers: usize,
    pub peak_hour: u8,
    /// Flow-weighted mean delay per link traversal in the peak hour, minutes.
    pub avg_delay: f64,
    /// Travelers on their unconstrained best bundle.
    pub idealized_count: usize,
    /// Sum of preference scores of realized trips.
    pub idealized_score: f64,
    /// Every link at every slot hour and the peak hour.
    pub links: Vec<LinkState>,
}

/// Hour with the largest total background flow; ties go to the earlier hour.
pub fn peak_hour(ctx: &PlanningContext) -> u8 {
    let mut totals: BTreeMap<u8, f64> = BTreeMap::new();
    for (&(_, h), &v) in ctx.background {
        *totals.entry(h).or_insert(0.0) += v;
    }
    totals
        .into_iter()
        .fold(None::<(u8, f64)>, |best, (h, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((h, v)),
        })
        .map_or(ctx.slots[0], |(h, _)| h)
}

/// Whether `user_id` complies at rate `rho`. Draws are keyed by user, so the
/// compliers at a lower rate are a subset of those at a higher one.
pub fn complies(seed: u64, user_id: &str, rho: f64) -> bool {
    keyed_uniform(seed, "scenario/compliance", user_id) < rho
}

fn trip_index(plan: &RecommendationPlan) -> BTreeMap<&str, &PlannedTrip> {
    plan.trips.iter().map(|t| (t.user_id.as_str(), t)).collect()
}

/// Link states and metrics for a set of realized trips, one per traveler.
fn evaluate_trips(
    trips: &[&PlannedTrip],
    travelers: &[Traveler],
    ctx: &PlanningContext,
    bpr: &BprParams,
    peak: u8,
) -> Result<(Vec<LinkState>, f64, usize, f64), ScenarioError> {
    let location_pos: BTreeMap<&str, usize> =
        ctx.model.locations.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut added: BTreeMap<(usize, u8), f64> = BTreeMap::new();
    let mut idealized_count = 0;
    let mut idealized_score = 0.0;
    for (t, trip) in travelers.iter().zip(trips) {
        idealized_count += trip.top_choice as usize;
        idealized_score += trip.score;
        let Some(choice) = &trip.choice else {
            continue;
        };
        let loc = *location_pos
            .get(choice.location.as_str())
            .ok_or_else(|| ScenarioError::UnknownLocation(choice.location.clone()))?;
        let dest = ctx.location_nodes[loc];
        let route = ctx.routes.get(t.home_node, dest).ok_or_else(|| {
            ScenarioError::Optimize(OptimizeError::NoRoute {
                user_id: t.user_id.clone(),
                from: ctx.network.nodes()[t.home_node].node_id.clone(),
                to: ctx.network.nodes()[dest].node_id.clone(),
            })
        })?;
        for &l in route {
            *added.entry((l, choice.slot_hour)).or_insert(0.0) += ctx.trips_per_traveler;
        }
    }

    let hours: BTreeSet<u8> = ctx.slots.iter().copied().chain(std::iter::once(peak)).collect();
    let mut links = Vec::with_capacity(ctx.network.links().len() * hours.len());
    let mut weighted = 0.0;
    let mut total = 0.0;
    for (l, link) in ctx.network.links().iter().enumerate() {
        for &hour in &hours {
            let volume = ctx.background.get(&(l, hour)).copied().unwrap_or(0.0)
                + added.get(&(l, hour)).copied().unwrap_or(0.0);
            let delay_min = bpr_delay(link.free_flow_time, volume, link.capacity, bpr)?;
            if hour == peak {
                weighted += volume * delay_min;
                total += volume;
            }
            links.push(LinkState {
                link_id: link.link_id.clone(),
                hour,
                volume,
                capacity: link.capacity,
                voc: volume / link.capacity,
                free_flow_min: link.free_flow_time,
                delay_min,
            });
        }
    }
    links.sort_by(|a, b| (&a.link_id, a.hour).cmp(&(&b.link_id, b.hour)));
    let avg_delay = if total > 0.0 { weighted / total } else { 0.0 };
    Ok((links, avg_delay, idealized_count, idealized_score))
}

/// Compliers take their `optimized` trip, everyone else their `baseline` trip.
pub fn simulate(
    config: &ScenarioConfig,
    optimized: &RecommendationPlan,
    baseline: &RecommendationPlan,
    travelers: &[Traveler],
    ctx: &PlanningContext,
) -> Result<ScenarioResult, ScenarioError> {
    let rho = config.compliance_rate;
    if !(0.0..=1.0).contains(&rho) {
        return Err(ScenarioError::InvalidRate(rho));
    }
    config.bpr.validate()?;
    let opt = trip_index(optimized);
    let base = trip_index(baseline);
    let mut trips = Vec::with_capacity(travelers.len());
    let mut compliers = 0;
    for t in travelers {
        let complier = complies(config.seed, &t.user_id, rho);
        let (index, plan) = if complier {
            (&opt, "optimized")
        } else {
            (&base, "preference-only")
        };
        let trip = index.get(t.user_id.as_str()).ok_or_else(|| ScenarioError::MissingTraveler {
            user_id: t.user_id.clone(),
            plan,
        })?;
        compliers += complier as usize;
        trips.push(*trip);
    }
    let peak = config.peak_hour.unwrap_or_else(|| peak_hour(ctx));
    let (links, avg_delay, idealized_count, idealized_score) = evaluate_trips(&trips, travelers, ctx, &config.bpr, peak)?;
    Ok(ScenarioResult {
        compliance_rate: rho,
        theta: optimized.theta,
        seed: config.seed,
        compliers,
        peak_hour: peak,
        avg_delay,
        idealized_count,
        idealized_score,
        links,
    })
}

/// Flow-weighted mean delay recomputed from emitted link states.
pub fn recompute_avg_delay(links: &[LinkState], peak: u8, bpr: &BprParams) -> Result<f64, NetworkError> {
    let mut weighted = 0.0;
    let mut total = 0.0;
    for s in links.iter().filter(|s| s.hour == peak) {
        weighted += s.volume * bpr_delay(s.free_flow_min, s.volume, s.capacity, bpr)?;
        total += s.volume;
    }
    Ok(if total > 0.0 { weighted / total } else { 0.0 })
}

/// One simulation per `(seed, rho)`, seeds outermost. Runs in parallel; the
/// output order and values do not depend on the thread count.
pub fn sweep_compliance(
    base: &ScenarioConfig,
    rates: &[f64],
    seeds: &[u64],
    optimized: &RecommendationPlan,
    baseline: &RecommendationPlan,
    travelers: &[Traveler],
    ctx: &PlanningContext,
) -> Result<Vec<ScenarioResult>, ScenarioError> {
    if rates.is_empty() || seeds.is_empty() {
        return Err(ScenarioError::Invalid("compliance grid and seed list must be non-empty".into()));
    }
    let points: Vec<(u64, f64)> = seeds.iter().flat_map(|&s| rates.iter().map(move |&r| (s, r))).collect();
    points
        .par_iter()
        .map(|&(seed, rho)| {
            let cfg = ScenarioConfig {
                compliance_rate: rho,
                seed,
                ..*base
            };
            simulate(&cfg, optimized, baseline, travelers, ctx)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub theta: f64,
    pub objective: f64,
    pub idealized_count: usize,
    pub exact: bool,
    pub lp_bound: Option<f64>,
}

/// Re-optimizes at every `theta` in an ascending grid with full compliance.
/// Each point starts from the previous point's plan, which stays feasible as
/// capacities grow.
pub fn sweep_theta(
    travelers: &[Traveler],
    ctx: &PlanningContext,
    thetas: &[f64],
    opts: &PlanOptions,
) -> Result<Vec<(ThetaPoint, RecommendationPlan)>, ScenarioError> {
    if thetas.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(ScenarioError::Invalid("theta grid must be sorted ascending".into()));
    }
    let mut out = Vec::with_capacity(thetas.len());
    let mut warm = None;
    for &theta in thetas {
        let (plan, choices) = optimize_from(travelers, ctx, theta, opts, warm.as_deref())?;
        warm = Some(choices);
        out.push((
            ThetaPoint {
                theta,
                objective: plan.objective,
                idealized_count: plan.idealized_count,
                exact: plan.exact,
                lp_bound: plan.lp_bound,
            },
            plan,
        ));
    }
    Ok(out)
}

/// One row of `results.csv`: metrics at one compliance rate, averaged over
/// seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub rho: f64,
    pub theta: Option<f64>,
    pub avg_delay_min: f64,
    pub idealized_count: f64,
    pub idealized_score: f64,
}

/// Seed-averaged `(delay, satisfaction)` per compliance rate, ascending in
/// rate.
pub fn tradeoff_curve(results: &[ScenarioResult]) -> Result<Vec<TradeoffRow>, ScenarioError> {
    if results.len() < 2 {
        return Err(ScenarioError::Invalid("a trade-off curve needs at least two results".into()));
    }
    let mut rates: Vec<f64> = results.iter().map(|r| r.compliance_rate).collect();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    Ok(rates
        .into_iter()
        .map(|rho| {
            let group: Vec<&ScenarioResult> = results.iter().filter(|r| r.compliance_rate == rho).collect();
            let n = group.len() as f64;
            TradeoffRow {
                rho,
                theta: group[0].theta,
                avg_delay_min: group.iter().map(|r| r.avg_delay).sum::<f64>() / n,
                idealized_count: group.iter().map(|r| r.idealized_count as f64).sum::<f64>() / n,
                idealized_score: group.iter().map(|r| r.idealized_score).sum::<f64>() / n,
            }
        })
        .collect())
}

pub fn write_results<W: Write>(output: W, rows: &[TradeoffRow]) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(output);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct LinkRow<'a> {
    link: &'a str,
    slot: u8,
    #[serde(rename = "V")]
    volume: f64,
    #[serde(rename = "C")]
    capacity: f64,
    voc: f64,
    delay: f64,
}

pub fn write_links<W: Write>(output: W, links: &[LinkState]) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(output);
    for s in links {
        w.serialize(LinkRow {
            link: &s.link_id,
            slot: s.hour,
            volume: s.volume,
            capacity: s.capacity,
            voc: s.voc,
            delay: s.delay_min,
        })?;
    }
    w.flush()?;
    Ok(())
}
