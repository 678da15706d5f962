//! One function per subcommand. Stages talk to each other only through the
//! artifact store.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use tdm_core::demand::{
    assign_od_to_links, calibrate_scale, extract_od, parse_counts, parse_flows, scale_flows, write_flows,
    CalibrationIssue, LinkLoads, OdMatrix, TimeBinning, UnroutablePair,
};
use tdm_core::ingest::{
    build_profiles, build_trajectories, filter_tourists, parse_cdr, parse_towers, write_cdr, write_towers,
    ParseOptions, RecordError, RowError, TowerRegistry, Trajectory, UserProfile,
};
use tdm_core::network::{parse_links, parse_node_towers, parse_nodes, write_rows, RoadNetwork, RouteTable};
use tdm_core::nextloc::{evaluate, sequences, should_send, EvalOptions, ModelKind, Resolution};
use tdm_core::optimizer::{home_node, optimize, preference_only, preferred_slot, PlanningContext, RecommendationPlan, Traveler};
use tdm_core::preference::{build_matrix, fit, LocationIndex, PreferenceModel};
use tdm_core::rng::derive_seed;
use tdm_core::scenario::{simulate, sweep_compliance, sweep_theta, tradeoff_curve, write_links, write_results, ScenarioConfig};
use tdm_core::synthetic::{generate, SyntheticSpec};

use crate::artifacts::{Stage, StageRun, Store};
use crate::config::{InputPaths, LoadedConfig, PipelineConfig, ScenarioSection};
use crate::error::CliError;

pub const TRAJECTORIES: &str = "trajectories.json";
pub const PROFILES: &str = "profiles.json";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const OD: &str = "od.csv";
pub const FLOWS: &str = "flows.csv";
pub const BACKGROUND: &str = "background.csv";
pub const CALIBRATION: &str = "calibration.json";
pub const MODEL: &str = "model.json";
pub const TRAVELERS: &str = "travelers.json";
pub const BASELINE: &str = "baseline.json";
pub const PLAN: &str = "plan.json";
pub const SIMULATION: &str = "simulation.json";
pub const LINKS: &str = "links.csv";
pub const RESULTS: &str = "results.csv";
pub const RESULTS_BY_SEED: &str = "results_by_seed.csv";
pub const THETA_SWEEP: &str = "theta_sweep.csv";
pub const ACCURACY: &str = "accuracy.csv";
pub const PREDICTIONS: &str = "predictions.csv";

/// A loaded config bound to an output directory.
pub struct Session {
    pub loaded: LoadedConfig,
    pub store: Store,
}

impl Session {
    pub fn new(loaded: LoadedConfig, out: &Path) -> Result<Self, CliError> {
        let store = Store::new(out, &loaded.base_dir)?;
        Ok(Self { loaded, store })
    }

    fn cfg(&self) -> &PipelineConfig {
        &self.loaded.config
    }

    fn start(&self, stage: Stage) -> Result<StageRun<'_>, CliError> {
        let mut config = self.loaded.config.clone();
        config.seed = Some(self.loaded.seed);
        let value = serde_json::to_value(&config).map_err(CliError::runtime)?;
        Ok(StageRun::new(&self.store, stage, self.loaded.seed, value))
    }

    fn binning(&self) -> TimeBinning {
        TimeBinning {
            utc_offset_seconds: self.cfg().ingest.utc_offset_seconds,
        }
    }

    fn inputs(&self) -> &InputPaths {
        &self.cfg().inputs
    }
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(CliError::runtime)?;
    }
    w.into_inner().map_err(CliError::runtime)
}

fn csv_rows<T: serde::de::DeserializeOwned>(name: &str, bytes: &[u8]) -> Result<Vec<T>, CliError> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Runtime(format!("{name}: {e}")))
}

fn load_network(run: &mut StageRun, inputs: &InputPaths) -> Result<RoadNetwork, CliError> {
    let nodes = parse_nodes(&run.read_input("nodes", &inputs.nodes)?[..]).map_err(CliError::runtime)?;
    let links = parse_links(&run.read_input("links", &inputs.links)?[..]).map_err(CliError::runtime)?;
    let node_towers =
        parse_node_towers(&run.read_input("node_towers", &inputs.node_towers)?[..]).map_err(CliError::runtime)?;
    RoadNetwork::new(nodes, links, node_towers).map_err(CliError::runtime)
}

fn load_towers(run: &mut StageRun, inputs: &InputPaths) -> Result<TowerRegistry, CliError> {
    parse_towers(&run.read_input("towers", &inputs.towers)?[..]).map_err(CliError::runtime)
}

fn tourist_ids(session: &Session, profiles: &[UserProfile]) -> BTreeSet<String> {
    let ing = &session.cfg().ingest;
    filter_tourists(profiles, &ing.home_country, ing.require_multiple_towers)
        .into_iter()
        .map(|p| p.user_id)
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: usize,
    pub users: usize,
    pub travelers: usize,
    pub row_errors: Vec<RowError>,
    pub record_errors: Vec<RecordError>,
}

pub fn ingest(s: &Session) -> Result<(), CliError> {
    let mut run = s.start(Stage::Ingest)?;
    let towers = load_towers(&mut run, s.inputs())?;
    let cdr = run.read_input("cdr", &s.inputs().cdr)?;
    let opts = ParseOptions {
        max_error_fraction: s.cfg().ingest.max_error_fraction,
    };
    let parsed = parse_cdr(&cdr[..], &opts).map_err(CliError::runtime)?;
    let (trajectories, record_errors) = build_trajectories(&parsed.records, &towers);
    let profiles = build_profiles(&trajectories);
    let report = IngestReport {
        records: parsed.records.len(),
        users: profiles.len(),
        travelers: tourist_ids(s, &profiles).len(),
        row_errors: parsed.errors,
        record_errors,
    };
    eprintln!(
        "ingest: {} records, {} users, {} travelers, {} rejected rows",
        report.records,
        report.users,
        report.travelers,
        report.row_errors.len() + report.record_errors.len()
    );
    run.write_json(TRAJECTORIES, &trajectories)?;
    run.write_json(PROFILES, &profiles)?;
    run.write_json(INGEST_REPORT, &report)?;
    run.finish()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    /// Trips by the travelers who receive recommendations.
    Traveler,
    /// Everyone else.
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdRecord {
    pub segment: Segment,
    pub time_bin: u8,
    pub origin: String,
    pub destination: String,
    pub trips: f64,
}

pub fn od(s: &Session) -> Result<(), CliError> {
    let mut run = s.start(Stage::Od)?;
    let network = load_network(&mut run, s.inputs())?;
    let trajectories: Vec<Trajectory> = run.read_json(TRAJECTORIES, Stage::Ingest)?;
    let profiles: Vec<UserProfile> = run.read_json(PROFILES, Stage::Ingest)?;
    let tourists = tourist_ids(s, &profiles);
    let (trav, bg): (Vec<Trajectory>, Vec<Trajectory>) =
        trajectories.into_iter().partition(|t| tourists.contains(&t.user_id));

    let mut rows = Vec::new();
    for (segment, trajs) in [(Segment::Traveler, &trav), (Segment::Background, &bg)] {
        for m in extract_od(trajs, &network, s.binning()).map_err(CliError::runtime)? {
            for (&(o, d), &trips) in &m.entries {
                rows.push(OdRecord {
                    segment,
                    time_bin: m.time_bin,
                    origin: network.nodes()[o].node_id.clone(),
                    destination: network.nodes()[d].node_id.clone(),
                    trips,
                });
            }
        }
    }
    let total: f64 = rows.iter().map(|r| r.trips).sum();
    eprintln!("od: {} O-D cells, {total} trips", rows.len());
    run.write(OD, &csv_bytes(&rows)?)?;
    run.finish()?;
    Ok(())
}

fn od_matrices(rows: &[OdRecord], network: &RoadNetwork, keep: impl Fn(Segment) -> bool) -> Result<Vec<OdMatrix>, CliError> {
    let mut bins: BTreeMap<u8, OdMatrix> = BTreeMap::new();
    for r in rows.iter().filter(|r| keep(r.segment)) {
        let o = network.node_idx(&r.origin).map_err(CliError::runtime)?;
        let d = network.node_idx(&r.destination).map_err(CliError::runtime)?;
        bins.entry(r.time_bin).or_insert_with(|| OdMatrix::new(r.time_bin)).add(o, d, r.trips);
    }
    Ok(bins.into_values().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub link_id: String,
    pub time_bin: u8,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub global_factor: f64,
    pub factors: Vec<FactorRow>,
    pub issues: Vec<CalibrationIssue>,
    pub unroutable: Vec<UnroutablePair>,
}

pub fn assign(s: &Session) -> Result<(), CliError> {
    let mut run = s.start(Stage::Assign)?;
    let network = load_network(&mut run, s.inputs())?;
    let counts = parse_counts(&run.read_input("counts", &s.inputs().counts)?[..]).map_err(CliError::runtime)?;
    let od_rows: Vec<OdRecord> = csv_rows(OD, &run.read_artifact(OD, Stage::Od)?)?;
    let routes = network.route_table();

    let all = assign_od_to_links(&od_matrices(&od_rows, &network, |_| true)?, &network, &routes);
    let bg = assign_od_to_links(
        &od_matrices(&od_rows, &network, |seg| seg == Segment::Background)?,
        &network,
        &routes,
    );
    let calibration = calibrate_scale(&all.flows, &counts, &network).map_err(CliError::runtime)?;
    let flows = scale_flows(&all.flows, &calibration, &network);
    let background = scale_flows(&bg.flows, &calibration, &network);
    let file = CalibrationFile {
        global_factor: calibration.global_factor,
        factors: calibration
            .factors
            .iter()
            .map(|(&(l, h), &f)| FactorRow {
                link_id: network.link(l).link_id.clone(),
                time_bin: h,
                factor: f,
            })
            .collect(),
        issues: calibration.issues,
        unroutable: all.unroutable,
    };
    eprintln!(
        "assign: {} link-hours, global factor {:.4}, {} unroutable O-D cells",
        flows.len(),
        file.global_factor,
        file.unroutable.len()
    );
    let mut buf = Vec::new();
    write_flows(&mut buf, &flows).map_err(CliError::runtime)?;
    run.write(FLOWS, &buf)?;
    let mut buf = Vec::new();
    write_flows(&mut buf, &background).map_err(CliError::runtime)?;
    run.write(BACKGROUND, &buf)?;
    run.write_json(CALIBRATION, &file)?;
    run.finish()?;
    Ok(())
}

pub fn fit_pref(s: &Session) -> Result<(), CliError> {
    let mut run = s.start(Stage::FitPref)?;
    let network = load_network(&mut run, s.inputs())?;
    let profiles: Vec<UserProfile> = run.read_json(PROFILES, Stage::Ingest)?;
    let ing = &s.cfg().ingest;
    let travelers = filter_tourists(&profiles, &ing.home_country, ing.require_multiple_towers);
    if travelers.is_empty() {
        return Err(CliError::Runtime("no travelers left after filtering; check ingest.home_country".into()));
    }
    let index = LocationIndex::from_network(&network);
    let matrix = build_matrix(&travelers, &index).map_err(CliError::runtime)?;
    let mut params = s.cfg().preference;
    let max_k = matrix.n_users().min(matrix.n_locations());
    if params.k > max_k {
        eprintln!("fit-pref: k={} exceeds min(users, locations); using k={max_k}", params.k);
        params.k = max_k;
    }
    let model = fit(&matrix, &params, derive_seed(s.loaded.seed, "preference")).map_err(CliError::runtime)?;
    eprintln!(
        "fit-pref: {} travelers x {} locations, k={}, final loss {:.6}",
        model.n_users(),
        model.n_locations(),
        model.k,
        model.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    run.write_json(MODEL, &model)?;
    run.finish()?;
    Ok(())
}

/// Everything a planning context borrows.
struct Planning {
    network: RoadNetwork,
    routes: RouteTable,
    model: PreferenceModel,
    background: LinkLoads,
    trips_per_traveler: f64,
}

impl Planning {
    fn load(s: &Session, run: &mut StageRun) -> Result<Self, CliError> {
        let network = load_network(run, s.inputs())?;
        let model: PreferenceModel = run.read_json(MODEL, Stage::FitPref)?;
        let calibration: CalibrationFile = run.read_json(CALIBRATION, Stage::Assign)?;
        let mut background = LinkLoads::new();
        for f in parse_flows(&run.read_artifact(BACKGROUND, Stage::Assign)?[..]).map_err(CliError::runtime)? {
            let l = network.link_idx(&f.link_id).map_err(CliError::runtime)?;
            background.insert((l, f.time_bin), f.vehicle_flow);
        }
        let routes = network.route_table();
        Ok(Self {
            network,
            routes,
            model,
            background,
            trips_per_traveler: s.cfg().plan.trips_per_traveler.unwrap_or(calibration.global_factor),
        })
    }

    fn context(&self, s: &Session) -> Result<PlanningContext<'_>, CliError> {
        PlanningContext::new(
            &self.network,
            &self.routes,
            &self.model,
            s.cfg().plan.slots.clone(),
            &self.background,
            self.trips_per_traveler,
        )
        .map_err(CliError::runtime)
    }
}

pub fn recommend(s: &Session) -> Result<(), CliError> {
    let mut run = s.start(Stage::Recommend)?;
    let planning = Planning::load(s, &mut run)?;
    let trajectories: Vec<Trajectory> = run.read_json(TRAJECTORIES, Stage::Ingest)?;
    let by_user: BTreeMap<&str, &Trajectory> = trajectories.iter().map(|t| (t.user_id.as_str(), t)).collect();
    let ctx = planning.context(s)?;

    let mut travelers = Vec::with_capacity(planning.model.users.len());
    for (row, user) in planning.model.users.iter().enumerate() {
        let t = by_user
            .get(user.as_str())
            .ok_or_else(|| CliError::Stale(format!("{MODEL} lists `{user}` who is not in {TRAJECTORIES}; rerun `tdm fit-pref`")))?;
        travelers.push(Traveler {
            user_id: user.clone(),
            model_row: row,
            home_node: home_node(t, &planning.network).map_err(CliError::runtime)?,
            preferred_slot: preferred_slot(t, &planning.network, s.binning(), &ctx.slots).map_err(CliError::runtime)?,
        });
    }
    let baseline = preference_only(&travelers, &ctx).map_err(CliError::runtime)?;
    let plan = optimize(&travelers, &ctx, s.cfg().plan.theta, &s.cfg().plan.options()).map_err(CliError::runtime)?;
    eprintln!(
        "recommend: {} travelers, objective {:.3} (preference-only {:.3}), {} top choices, exact={}",
        travelers.len(),
        plan.objective,
        baseline.objective,
        plan.idealized_count,
        plan.exact
    );
    run.write_json(TRAVELERS, &travelers)?;
    run.write_json(BASELINE, &baseline)?;
    run.write_json(PLAN, &plan)?;
    run.finish()?;
    Ok(())
}

fn compliance_seed(root: u64, label: u64) -> u64 {
    derive_seed(root, &format!("compliance/{label}"))
}

fn scenario_config(s: &Session, rho: f64, label: u64) -> ScenarioConfig {
    ScenarioConfig {
        compliance_rate: rho,
        bpr: s.cfg().bpr,
        seed: compliance_seed(s.loaded.seed, label),
        peak_hour: s.cfg().scenario.peak_hour,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SimulationSummary {
    compliance_rate: f64,
    theta: Option<f64>,
    seed_label: u64,
    compliers: usize,
    peak_hour: u8,
    avg_delay_min: f64,
    idealized_count: usize,
    idealized_score: f64,
}

pub fn simulate_cmd(s: &Session, rho: Option<f64>) -> Result<(), CliError> {
    let mut run = s.start(Stage::Simulate)?;
    let planning = Planning::load(s, &mut run)?;
    let travelers: Vec<Traveler> = run.read_json(TRAVELERS, Stage::Recommend)?;
    let baseline: RecommendationPlan = run.read_json(BASELINE, Stage::Recommend)?;
    let plan: RecommendationPlan = run.read_json(PLAN, Stage::Recommend)?;
    let ctx = planning.context(s)?;
    let sc: &ScenarioSection = &s.cfg().scenario;
    let rho = rho.unwrap_or(sc.compliance_rate);
    let label = sc.seeds[0];
    let result = simulate(&scenario_config(s, rho, label), &plan, &baseline, &travelers, &ctx).map_err(CliError::runtime)?;
    eprintln!(
        "simulate: rho={rho}, {} compliers, avg delay {:.4} min at hour {}",
        result.compliers, result.avg_delay, result.peak_hour
    );
    let summary = SimulationSummary {
        compliance_rate: result.compliance_rate,
        theta: result.theta,
        seed_label: label,
        compliers: result.compliers,
        peak_hour: result.peak_hour,
        avg_delay_min: result.avg_delay,
        idealized_count: result.idealized_count,
        idealized_score: result.idealized_score,
    };
    run.write_json(SIMULATION, &summary)?;
    let mut buf = Vec::new();
    write_links(&mut buf, &result.links).map_err(CliError::runtime)?;
    run.write(LINKS, &buf)?;
    run.finish()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub rho: f64,
    pub theta: Option<f64>,
    pub compliers: usize,
    pub peak_hour: u8,
    pub avg_delay_min: f64,
    pub idealized_count: usize,
    pub idealized_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaRow {
    pub theta: f64,
    pub objective: f64,
    pub idealized_count: usize,
    /// Average peak-hour delay when every traveler complies.
    pub avg_delay_min: f64,
    pub exact: bool,
    pub lp_bound: Option<f64>,
}

pub fn sweep(s: &Session) -> Result<(), CliError> {
    let mut run = s.start(Stage::Sweep)?;
    let planning = Planning::load(s, &mut run)?;
    let travelers: Vec<Traveler> = run.read_json(TRAVELERS, Stage::Recommend)?;
    let baseline: RecommendationPlan = run.read_json(BASELINE, Stage::Recommend)?;
    let plan: RecommendationPlan = run.read_json(PLAN, Stage::Recommend)?;
    let ctx = planning.context(s)?;
    let sc = &s.cfg().scenario;

    let base = scenario_config(s, 1.0, 0);
    let seeds: Vec<u64> = sc.seeds.iter().map(|&l| compliance_seed(s.loaded.seed, l)).collect();
    let results = sweep_compliance(&base, &sc.compliance_rates, &seeds, &plan, &baseline, &travelers, &ctx)
        .map_err(CliError::runtime)?;
    let label_of: BTreeMap<u64, u64> = seeds.iter().copied().zip(sc.seeds.iter().copied()).collect();
    let by_seed: Vec<SeedRow> = results
        .iter()
        .map(|r| SeedRow {
            seed: label_of[&r.seed],
            rho: r.compliance_rate,
            theta: r.theta,
            compliers: r.compliers,
            peak_hour: r.peak_hour,
            avg_delay_min: r.avg_delay,
            idealized_count: r.idealized_count,
            idealized_score: r.idealized_score,
        })
        .collect();
    let curve = if results.len() >= 2 {
        tradeoff_curve(&results).map_err(CliError::runtime)?
    } else {
        Vec::new()
    };

    let mut theta_rows = Vec::with_capacity(sc.thetas.len());
    for (point, p) in sweep_theta(&travelers, &ctx, &sc.thetas, &s.cfg().plan.options()).map_err(CliError::runtime)? {
        let full = simulate(&base, &p, &baseline, &travelers, &ctx).map_err(CliError::runtime)?;
        theta_rows.push(ThetaRow {
            theta: point.theta,
            objective: point.objective,
            idealized_count: point.idealized_count,
            avg_delay_min: full.avg_delay,
            exact: point.exact,
            lp_bound: point.lp_bound,
        });
    }
    for r in &curve {
        eprintln!(
            "sweep: rho={:.2} avg delay {:.4} min, {:.1} top choices, score {:.3}",
            r.rho, r.avg_delay_min, r.idealized_count, r.idealized_score
        );
    }

    let mut buf = Vec::new();
    write_results(&mut buf, &curve).map_err(CliError::runtime)?;
    run.write(RESULTS, &buf)?;
    run.write(RESULTS_BY_SEED, &csv_bytes(&by_seed)?)?;
    run.write(THETA_SWEEP, &csv_bytes(&theta_rows)?)?;
    run.finish()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub resolution: Resolution,
    pub model: ModelKind,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub user_id: String,
    pub model: ModelKind,
    pub target: String,
    pub prediction: String,
    pub correct: bool,
    /// Whether the recommended location differs from the prediction; empty
    /// when no plan exists yet.
    pub send: Option<bool>,
}

pub fn predict(s: &Session, resolution: Option<Resolution>, models: &[ModelKind]) -> Result<(), CliError> {
    let mut run = s.start(Stage::Predict)?;
    let towers = load_towers(&mut run, s.inputs())?;
    let trajectories: Vec<Trajectory> = run.read_json(TRAJECTORIES, Stage::Ingest)?;
    let profiles: Vec<UserProfile> = run.read_json(PROFILES, Stage::Ingest)?;
    let plan: Option<RecommendationPlan> = if s.store.path(PLAN).is_file() {
        Some(run.read_json(PLAN, Stage::Recommend)?)
    } else {
        None
    };
    let nl = &s.cfg().nextloc;
    let resolution = resolution.unwrap_or(nl.resolution);
    let tourists = tourist_ids(s, &profiles);
    let trajs: Vec<Trajectory> = trajectories.into_iter().filter(|t| tourists.contains(&t.user_id)).collect();
    let corpus = sequences(&trajs, &towers, resolution).map_err(CliError::runtime)?;
    let opts = EvalOptions {
        models: if models.is_empty() { nl.models.clone() } else { models.to_vec() },
        smoothing: nl.smoothing,
        rnn: nl.rnn,
        seed: derive_seed(s.loaded.seed, "nextloc"),
    };
    let eval = evaluate(&corpus, &opts).map_err(CliError::runtime)?;

    let recommended: BTreeMap<&str, &str> = plan
        .iter()
        .flat_map(|p| p.trips.iter())
        .filter_map(|t| t.choice.as_ref().map(|c| (t.user_id.as_str(), c.location.as_str())))
        .collect();
    let accuracy: Vec<AccuracyRecord> = eval
        .table
        .rows
        .iter()
        .map(|r| AccuracyRecord {
            resolution,
            model: r.model,
            correct: r.correct,
            total: r.total,
            accuracy: r.accuracy,
            improvement: r.improvement,
        })
        .collect();
    let mut predictions = Vec::new();
    for h in &eval.predictions {
        for (&model, pred) in &h.predictions {
            // Recommended locations are node ids, which match merged tower groups.
            let send = plan.as_ref().map(|_| {
                recommended
                    .get(h.user_id.as_str())
                    .is_some_and(|rec| should_send(pred, rec, Resolution::Merged, &towers))
            });
            predictions.push(PredictionRecord {
                user_id: h.user_id.clone(),
                model,
                target: h.target.clone(),
                prediction: pred.clone(),
                correct: pred == &h.target,
                send,
            });
        }
    }
    for r in &accuracy {
        eprintln!(
            "predict: {} {}/{} = {:.4}",
            r.model.name(),
            r.correct,
            r.total,
            r.accuracy
        );
    }
    run.write(ACCURACY, &csv_bytes(&accuracy)?)?;
    run.write(PREDICTIONS, &csv_bytes(&predictions)?)?;
    if let Some(m) = &eval.markov {
        run.write_json("markov.json", m)?;
    }
    if let Some(m) = &eval.rnn {
        run.write_json("rnn.json", m)?;
    }
    run.finish()?;
    Ok(())
}

pub fn run_all(s: &Session) -> Result<(), CliError> {
    ingest(s)?;
    od(s)?;
    assign(s)?;
    fit_pref(s)?;
    recommend(s)?;
    simulate_cmd(s, None)?;
    sweep(s)?;
    predict(s, None, &[])
}

/// Writes a synthetic city plus a ready-to-run `config.json` into `out`.
pub fn gen_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<(), CliError> {
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let city = generate(spec).map_err(CliError::runtime)?;
    let store = Store::new(out, out)?;
    let mut run = StageRun::new(
        &store,
        Stage::GenSynthetic,
        spec.seed,
        serde_json::to_value(spec).map_err(CliError::runtime)?,
    );
    let rows = |f: &dyn Fn(&mut Vec<u8>) -> Result<(), String>| -> Result<Vec<u8>, CliError> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(CliError::Runtime)?;
        Ok(buf)
    };
    let registry = TowerRegistry::new(city.towers.clone()).map_err(CliError::runtime)?;
    run.write("cdr.csv", &rows(&|b| write_cdr(b, &city.records).map_err(|e| e.to_string()))?)?;
    run.write("towers.csv", &rows(&|b| write_towers(b, &registry).map_err(|e| e.to_string()))?)?;
    run.write("nodes.csv", &rows(&|b| write_rows(b, &city.nodes).map_err(|e| e.to_string()))?)?;
    run.write("links.csv", &rows(&|b| write_rows(b, &city.links).map_err(|e| e.to_string()))?)?;
    run.write("node_towers.csv", &rows(&|b| write_rows(b, &city.node_towers).map_err(|e| e.to_string()))?)?;
    run.write("counts.csv", &csv_bytes(&city.counts)?)?;
    run.write("truth_preferences.csv", &csv_bytes(&city.preferences)?)?;
    run.write("truth_od.csv", &csv_bytes(&city.od)?)?;

    let sg = &city.suggested;
    let mut config = PipelineConfig {
        seed: Some(spec.seed),
        inputs: InputPaths {
            cdr: "cdr.csv".into(),
            towers: "towers.csv".into(),
            nodes: "nodes.csv".into(),
            links: "links.csv".into(),
            node_towers: "node_towers.csv".into(),
            counts: "counts.csv".into(),
        },
        ingest: Default::default(),
        preference: Default::default(),
        bpr: Default::default(),
        plan: Default::default(),
        scenario: Default::default(),
        nextloc: Default::default(),
    };
    config.ingest.home_country = sg.home_country.clone();
    config.preference.k = sg.k;
    config.plan.slots = sg.slots.clone();
    config.plan.theta = sg.theta;
    config.scenario.thetas = sg.thetas.clone();
    config.scenario.compliance_rates = sg.compliance_rates.clone();
    config.scenario.seeds = sg.seeds.clone();
    run.write_json("config.json", &config)?;
    run.finish()?;
    eprintln!(
        "gen-synthetic: {} nodes, {} links, {} towers, {} records",
        city.nodes.len(),
        city.links.len(),
        city.towers.len(),
        city.records.len()
    );
    Ok(())
}
