//! Pipeline configuration file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tdm_core::network::BprParams;
use tdm_core::nextloc::{ModelKind, Resolution, RnnParams, DEFAULT_SMOOTHING};
use tdm_core::optimizer::PlanOptions;
use tdm_core::preference::FitParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; `--seed` overrides it. One of the two is required.
    #[serde(default)]
    pub seed: Option<u64>,
    pub inputs: InputPaths,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub preference: FitParams,
    #[serde(default)]
    pub bpr: BprParams,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub nextloc: NextLocConfig,
}

/// Input files, relative to the config file's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub cdr: PathBuf,
    pub towers: PathBuf,
    pub nodes: PathBuf,
    pub links: PathBuf,
    pub node_towers: PathBuf,
    pub counts: PathBuf,
}

impl InputPaths {
    pub fn named(&self) -> [(&'static str, &Path); 6] {
        [
            ("cdr", &self.cdr),
            ("towers", &self.towers),
            ("nodes", &self.nodes),
            ("links", &self.links),
            ("node_towers", &self.node_towers),
            ("counts", &self.counts),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Users from this country are residents, everyone else a traveler.
    pub home_country: String,
    pub require_multiple_towers: bool,
    pub max_error_fraction: f64,
    pub utc_offset_seconds: i64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            home_country: "AD".to_string(),
            require_multiple_towers: true,
            max_error_fraction: 0.01,
            utc_offset_seconds: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    /// Hour bins a trip can be recommended in.
    pub slots: Vec<u8>,
    pub theta: f64,
    /// Vehicles per recommended trip; defaults to the global count factor.
    pub trips_per_traveler: Option<f64>,
    pub candidates: usize,
    pub slot_shift_penalty: f64,
    pub allow_stay: bool,
    pub node_budget: u64,
    pub compute_lp_bound: bool,
}

impl Default for PlanConfig {
    fn default() -> Self {
        let o = PlanOptions::default();
        Self {
            slots: vec![10, 13],
            theta: 0.0,
            trips_per_traveler: None,
            candidates: o.candidates,
            slot_shift_penalty: o.slot_shift_penalty,
            allow_stay: o.allow_stay,
            node_budget: o.node_budget,
            compute_lp_bound: o.compute_lp_bound,
        }
    }
}

impl PlanConfig {
    pub fn options(&self) -> PlanOptions {
        PlanOptions {
            candidates: self.candidates,
            slot_shift_penalty: self.slot_shift_penalty,
            allow_stay: self.allow_stay,
            node_budget: self.node_budget,
            compute_lp_bound: self.compute_lp_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    /// Rate used by `simulate`.
    pub compliance_rate: f64,
    /// Grid used by `sweep`.
    pub compliance_rates: Vec<f64>,
    /// Compliance draws per grid point.
    pub seeds: Vec<u64>,
    /// Ascending grid of tolerable excess throughput for `sweep`.
    pub thetas: Vec<f64>,
    pub peak_hour: Option<u8>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            compliance_rate: 1.0,
            compliance_rates: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            seeds: (1..=20).collect(),
            thetas: (0..=10).map(|i| i as f64 / 10.0).collect(),
            peak_hour: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NextLocConfig {
    pub resolution: Resolution,
    pub models: Vec<ModelKind>,
    pub smoothing: f64,
    pub rnn: RnnParams,
}

impl Default for NextLocConfig {
    fn default() -> Self {
        Self {
            resolution: Resolution::Tower,
            models: vec![ModelKind::Naive, ModelKind::Markov, ModelKind::Rnn],
            smoothing: DEFAULT_SMOOTHING,
            rnn: RnnParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

/// Every problem found in a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub source: String,
    pub errors: Vec<FieldError>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid config {}:", self.source)?;
        for e in &self.errors {
            writeln!(f, "  {}: {}", e.path, e.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

/// A parsed and validated config with paths resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub seed: u64,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn input(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }
}

pub fn parse(text: &str, source: &str) -> Result<PipelineConfig, ValidationReport> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ValidationReport {
        source: source.to_string(),
        errors: vec![FieldError {
            path: match e.path().to_string() {
                p if p == "." => "(root)".to_string(),
                p => p,
            },
            message: e.inner().to_string(),
        }],
    })
}

pub fn load(path: &Path, seed_override: Option<u64>) -> Result<LoadedConfig, ValidationReport> {
    let source = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ValidationReport {
        source: source.clone(),
        errors: vec![FieldError {
            path: "(file)".into(),
            message: e.to_string(),
        }],
    })?;
    let config = parse(&text, &source)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut errors = validate(&config);
    for (name, p) in config.inputs.named() {
        if !base_dir.join(p).is_file() {
            errors.push(FieldError {
                path: format!("inputs.{name}"),
                message: format!("file not found: {}", base_dir.join(p).display()),
            });
        }
    }
    let seed = seed_override.or(config.seed);
    if seed.is_none() {
        errors.push(FieldError {
            path: "seed".into(),
            message: "a seed is required (set it in the config or pass --seed)".into(),
        });
    }
    if !errors.is_empty() {
        return Err(ValidationReport { source, errors });
    }
    Ok(LoadedConfig {
        config,
        seed: seed.unwrap_or_default(),
        base_dir,
    })
}

/// Range and consistency checks that do not touch the filesystem.
pub fn validate(c: &PipelineConfig) -> Vec<FieldError> {
    let mut errors = Vec::new();
    let mut check = |ok: bool, path: &str, message: &str| {
        if !ok {
            errors.push(FieldError {
                path: path.to_string(),
                message: message.to_string(),
            });
        }
    };
    check(!c.ingest.home_country.trim().is_empty(), "ingest.home_country", "must not be empty");
    check(
        (0.0..=1.0).contains(&c.ingest.max_error_fraction),
        "ingest.max_error_fraction",
        "must be in [0, 1]",
    );
    check(c.preference.k >= 1, "preference.k", "must be at least 1");
    check(c.preference.lambda >= 0.0, "preference.lambda", "must be >= 0");
    check(c.preference.learning_rate > 0.0, "preference.learning_rate", "must be > 0");
    check(c.preference.epochs >= 1, "preference.epochs", "must be at least 1");
    check(c.preference.confidence_weight >= 0.0, "preference.confidence_weight", "must be >= 0");
    check(c.bpr.alpha >= 0.0, "bpr.alpha", "must be >= 0");
    check(c.bpr.beta >= 1.0, "bpr.beta", "must be >= 1");
    check(!c.plan.slots.is_empty(), "plan.slots", "at least one slot is required");
    check(c.plan.slots.iter().all(|&h| h < 24), "plan.slots", "hours must be in [0, 24)");
    let mut slots = c.plan.slots.clone();
    slots.sort_unstable();
    slots.dedup();
    check(slots.len() == c.plan.slots.len(), "plan.slots", "slots must be distinct");
    check(c.plan.theta >= -1.0, "plan.theta", "must be >= -1");
    check(
        c.plan.trips_per_traveler.is_none_or(|t| t > 0.0 && t.is_finite()),
        "plan.trips_per_traveler",
        "must be positive",
    );
    check(c.plan.candidates >= 1, "plan.candidates", "must be at least 1");
    check(
        (0.0..=1.0).contains(&c.plan.slot_shift_penalty),
        "plan.slot_shift_penalty",
        "must be in [0, 1]",
    );
    check(
        (0.0..=1.0).contains(&c.scenario.compliance_rate),
        "scenario.compliance_rate",
        "must be in [0, 1]",
    );
    check(!c.scenario.compliance_rates.is_empty(), "scenario.compliance_rates", "must not be empty");
    check(
        c.scenario.compliance_rates.iter().all(|r| (0.0..=1.0).contains(r)),
        "scenario.compliance_rates",
        "rates must be in [0, 1]",
    );
    check(!c.scenario.seeds.is_empty(), "scenario.seeds", "must not be empty");
    check(!c.scenario.thetas.is_empty(), "scenario.thetas", "must not be empty");
    check(
        c.scenario.thetas.windows(2).all(|w| w[0] <= w[1]),
        "scenario.thetas",
        "must be sorted ascending",
    );
    check(c.scenario.thetas.iter().all(|&t| t >= -1.0), "scenario.thetas", "values must be >= -1");
    check(c.scenario.peak_hour.is_none_or(|h| h < 24), "scenario.peak_hour", "must be in [0, 24)");
    check(!c.nextloc.models.is_empty(), "nextloc.models", "must not be empty");
    check(c.nextloc.smoothing >= 0.0, "nextloc.smoothing", "must be >= 0");
    let r = &c.nextloc.rnn;
    check(r.embed >= 1 && r.hidden >= 1, "nextloc.rnn", "embed and hidden must be at least 1");
    check(r.bptt >= 1, "nextloc.rnn.bptt", "must be at least 1");
    check(r.learning_rate > 0.0, "nextloc.rnn.learning_rate", "must be > 0");
    check(r.clip_norm > 0.0, "nextloc.rnn.clip_norm", "must be > 0");
    errors
}
