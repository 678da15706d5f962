//! Call-detail-record ingestion: parsing, tower registry, trajectories and
//! user profiles.
//!
//! A *visit event* is a maximal run of consecutive records (in time order) at
//! the same tower. Visit counts in a [`UserProfile`] are counts of such
//! events, not of raw records, so heavy phone users do not dominate.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

const CDR_COLUMNS: [&str; 5] = ["user_id", "start_time", "end_time", "tower_id", "nationality"];
const TOWER_COLUMNS: [&str; 5] = ["tower_id", "lat", "lon", "city", "merged_group_id"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("schema error: missing required column `{0}`")]
    MissingColumn(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{bad} of {total} rows are malformed, above the tolerated fraction {threshold}; first: {first}")]
    TooManyErrors {
        bad: usize,
        total: usize,
        threshold: f64,
        first: RowError,
    },
    #[error("tower `{tower_id}` (line {line}): {message}")]
    InvalidTower {
        tower_id: String,
        line: u64,
        message: String,
    },
}

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdrRecord {
    pub user_id: String,
    pub start_time: Timestamp,
    pub end_time: Timestamp,
    pub tower_id: String,
    pub nationality: String,
    pub device_model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub tower_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub city: String,
    pub merged_group_id: String,
}

/// All known towers keyed by id.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TowerRegistry {
    towers: BTreeMap<String, Tower>,
}

impl TowerRegistry {
    pub fn new(towers: impl IntoIterator<Item = Tower>) -> Result<Self, IngestError> {
        let mut map = BTreeMap::new();
        for (i, tower) in towers.into_iter().enumerate() {
            validate_tower(&tower, i as u64 + 1)?;
            if map.contains_key(&tower.tower_id) {
                return Err(IngestError::InvalidTower {
                    tower_id: tower.tower_id,
                    line: i as u64 + 1,
                    message: "duplicate tower id".into(),
                });
            }
            map.insert(tower.tower_id.clone(), tower);
        }
        Ok(Self { towers: map })
    }

    pub fn get(&self, tower_id: &str) -> Option<&Tower> {
        self.towers.get(tower_id)
    }

    pub fn contains(&self, tower_id: &str) -> bool {
        self.towers.contains_key(tower_id)
    }

    pub fn merged_group(&self, tower_id: &str) -> Option<&str> {
        self.towers.get(tower_id).map(|t| t.merged_group_id.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tower> {
        self.towers.values()
    }

    pub fn len(&self) -> usize {
        self.towers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.towers.is_empty()
    }
}

fn validate_tower(tower: &Tower, line: u64) -> Result<(), IngestError> {
    let bad = |message: &str| IngestError::InvalidTower {
        tower_id: tower.tower_id.clone(),
        line,
        message: message.to_string(),
    };
    if !(-90.0..=90.0).contains(&tower.latitude) {
        return Err(bad("latitude outside [-90, 90]"));
    }
    if !(-180.0..=180.0).contains(&tower.longitude) {
        return Err(bad("longitude outside [-180, 180]"));
    }
    if tower.merged_group_id.is_empty() {
        return Err(bad("empty merged_group_id"));
    }
    Ok(())
}

/// Coarse user grouping derived from the CDR nationality code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UserGroup {
    France,
    Spain,
    Other,
}

impl UserGroup {
    pub fn from_nationality(code: &str) -> Self {
        match code.trim().to_ascii_uppercase().as_str() {
            "FR" | "FRA" => UserGroup::France,
            "ES" | "ESP" => UserGroup::Spain,
            _ => UserGroup::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub tower_id: String,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: String,
    pub nationality: String,
    pub group: UserGroup,
    pub visits: Vec<Visit>,
}

impl Trajectory {
    pub fn distinct_towers(&self) -> usize {
        self.visits
            .iter()
            .map(|v| v.tower_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub nationality: String,
    pub group: UserGroup,
    /// Visit events per tower.
    pub visit_counts: BTreeMap<String, u32>,
}

impl UserProfile {
    pub fn total_visits(&self) -> u64 {
        self.visit_counts.values().map(|&c| c as u64).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    /// Fraction of malformed rows tolerated before the whole file is rejected.
    pub max_error_fraction: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            max_error_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedCdr {
    pub records: Vec<CdrRecord>,
    pub errors: Vec<RowError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimeFormat {
    Epoch,
    Iso,
}

fn detect_format(value: &str) -> TimeFormat {
    let v = value.trim();
    let digits = v.strip_prefix('-').unwrap_or(v);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        TimeFormat::Epoch
    } else {
        TimeFormat::Iso
    }
}

/// Parses an ISO-8601 timestamp; values without an offset are taken as UTC.
pub fn parse_iso_timestamp(value: &str) -> Option<Timestamp> {
    let v = value.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(v) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(ndt) = NaiveDateTime::parse_from_str(v, fmt) {
            return Some(ndt.and_utc().timestamp());
        }
    }
    None
}

fn parse_time(value: &str, format: TimeFormat) -> Result<Timestamp, String> {
    match format {
        TimeFormat::Epoch => value
            .trim()
            .parse::<i64>()
            .map_err(|_| format!("expected epoch seconds, got `{value}`")),
        TimeFormat::Iso => {
            parse_iso_timestamp(value).ok_or_else(|| format!("expected ISO-8601 timestamp, got `{value}`"))
        }
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

/// Parses `cdr.csv`. Malformed rows are collected in [`ParsedCdr::errors`]
/// with their line numbers; the call only fails on a schema problem or when
/// the malformed fraction exceeds `opts.max_error_fraction`.
pub fn parse_cdr<R: Read>(input: R, opts: &ParseOptions) -> Result<ParsedCdr, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(CDR_COLUMNS) {
        *slot = column_index(&headers, name).ok_or_else(|| IngestError::MissingColumn(name.into()))?;
    }
    let [user_i, start_i, end_i, tower_i, nat_i] = idx;
    let device_i = column_index(&headers, "device_model");

    let mut formats: [Option<TimeFormat>; 2] = [None, None];
    let mut out = ParsedCdr::default();
    let mut total = 0usize;
    for row in reader.records() {
        total += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_cdr_row(&row, [user_i, start_i, end_i, tower_i, nat_i], device_i, &mut formats) {
            Ok(rec) => out.records.push(rec),
            Err(message) => out.errors.push(RowError { line, message }),
        }
    }
    if total > 0 && out.errors.len() as f64 / total as f64 > opts.max_error_fraction {
        return Err(IngestError::TooManyErrors {
            bad: out.errors.len(),
            total,
            threshold: opts.max_error_fraction,
            first: out.errors[0].clone(),
        });
    }
    Ok(out)
}

fn parse_cdr_row(
    row: &csv::StringRecord,
    idx: [usize; 5],
    device_i: Option<usize>,
    formats: &mut [Option<TimeFormat>; 2],
) -> Result<CdrRecord, String> {
    let field = |i: usize, name: &str| -> Result<&str, String> {
        row.get(i)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| format!("missing value for `{name}`"))
    };
    let user_id = field(idx[0], "user_id")?;
    let start_raw = field(idx[1], "start_time")?;
    let end_raw = field(idx[2], "end_time")?;
    let tower_id = field(idx[3], "tower_id")?;
    let nationality = field(idx[4], "nationality")?;

    let start_fmt = *formats[0].get_or_insert_with(|| detect_format(start_raw));
    let end_fmt = *formats[1].get_or_insert_with(|| detect_format(end_raw));
    let start_time = parse_time(start_raw, start_fmt)?;
    let end_time = parse_time(end_raw, end_fmt)?;
    if end_time < start_time {
        return Err(format!("end_time {end_time} precedes start_time {start_time}"));
    }
    let device_model = device_i
        .and_then(|i| row.get(i))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    Ok(CdrRecord {
        user_id: user_id.to_string(),
        start_time,
        end_time,
        tower_id: tower_id.to_string(),
        nationality: nationality.to_string(),
        device_model,
    })
}

/// Writes records in the normalized `cdr.csv` layout (epoch-second times).
pub fn write_cdr<W: Write>(output: W, records: &[CdrRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(["user_id", "start_time", "end_time", "tower_id", "nationality", "device_model"])?;
    for r in records {
        w.write_record([
            r.user_id.as_str(),
            &r.start_time.to_string(),
            &r.end_time.to_string(),
            r.tower_id.as_str(),
            r.nationality.as_str(),
            r.device_model.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `towers.csv`. Any invalid tower rejects the file.
pub fn parse_towers<R: Read>(input: R) -> Result<TowerRegistry, IngestError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(TOWER_COLUMNS) {
        *slot = column_index(&headers, name).ok_or_else(|| IngestError::MissingColumn(name.into()))?;
    }
    let mut towers = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| row.get(i).unwrap_or("").trim().to_string();
        let tower_id = get(idx[0]);
        let coord = |i: usize, name: &str| {
            get(i).parse::<f64>().map_err(|_| IngestError::InvalidTower {
                tower_id: tower_id.clone(),
                line,
                message: format!("unparseable {name}"),
            })
        };
        let tower = Tower {
            latitude: coord(idx[1], "lat")?,
            longitude: coord(idx[2], "lon")?,
            city: get(idx[3]),
            merged_group_id: get(idx[4]),
            tower_id: tower_id.clone(),
        };
        validate_tower(&tower, line)?;
        towers.push(tower);
    }
    TowerRegistry::new(towers)
}

pub fn write_towers<W: Write>(output: W, registry: &TowerRegistry) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(TOWER_COLUMNS)?;
    for t in registry.iter() {
        w.write_record([
            t.tower_id.as_str(),
            &t.latitude.to_string(),
            &t.longitude.to_string(),
            t.city.as_str(),
            t.merged_group_id.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A record that could not be placed on a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    /// Position of the record in the input slice.
    pub index: usize,
    pub user_id: String,
    pub message: String,
}

/// Groups records by user, sorts each group by time and collapses runs of
/// the same tower into one visit event. Output is ordered by `user_id`.
///
/// Records with equal start times are ordered by `(end_time, tower_id)` so
/// the result does not depend on input order.
pub fn build_trajectories(records: &[CdrRecord], towers: &TowerRegistry) -> (Vec<Trajectory>, Vec<RecordError>) {
    let mut by_user: BTreeMap<&str, Vec<&CdrRecord>> = BTreeMap::new();
    let mut errors = Vec::new();
    for (index, r) in records.iter().enumerate() {
        if !towers.contains(&r.tower_id) {
            errors.push(RecordError {
                index,
                user_id: r.user_id.clone(),
                message: format!("unknown tower `{}`", r.tower_id),
            });
            continue;
        }
        by_user.entry(r.user_id.as_str()).or_default().push(r);
    }

    let trajectories = by_user
        .into_iter()
        .map(|(user_id, mut recs)| {
            recs.sort_by(|a, b| {
                (a.start_time, a.end_time, &a.tower_id).cmp(&(b.start_time, b.end_time, &b.tower_id))
            });
            let mut visits: Vec<Visit> = Vec::with_capacity(recs.len());
            for r in &recs {
                if visits.last().is_some_and(|v| v.tower_id == r.tower_id) {
                    continue;
                }
                visits.push(Visit {
                    tower_id: r.tower_id.clone(),
                    timestamp: r.start_time,
                });
            }
            // Nationality of the earliest record; CDR repeats it on every row.
            let nationality = recs[0].nationality.clone();
            Trajectory {
                user_id: user_id.to_string(),
                group: UserGroup::from_nationality(&nationality),
                nationality,
                visits,
            }
        })
        .collect();
    (trajectories, errors)
}

pub fn build_profiles(trajectories: &[Trajectory]) -> Vec<UserProfile> {
    trajectories
        .iter()
        .map(|t| {
            let mut visit_counts = BTreeMap::new();
            for v in &t.visits {
                *visit_counts.entry(v.tower_id.clone()).or_insert(0u32) += 1;
            }
            UserProfile {
                user_id: t.user_id.clone(),
                nationality: t.nationality.clone(),
                group: t.group,
                visit_counts,
            }
        })
        .collect()
}

/// Keeps visitors: users whose nationality differs from `home_country`.
/// With `require_multiple_towers`, users seen at a single tower are dropped.
pub fn filter_tourists(profiles: &[UserProfile], home_country: &str, require_multiple_towers: bool) -> Vec<UserProfile> {
    let home = home_country.trim().to_ascii_uppercase();
    profiles
        .iter()
        .filter(|p| p.nationality.trim().to_ascii_uppercase() != home)
        .filter(|p| !require_multiple_towers || p.visit_counts.len() > 1)
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "user_id,start_time,end_time,tower_id,nationality,device_model\n";

    fn rec(user: &str, t: i64, tower: &str) -> CdrRecord {
        CdrRecord {
            user_id: user.into(),
            start_time: t,
            end_time: t,
            tower_id: tower.into(),
            nationality: "FR".into(),
            device_model: None,
        }
    }

    fn registry(ids: &[&str]) -> TowerRegistry {
        TowerRegistry::new(ids.iter().map(|id| Tower {
            tower_id: id.to_string(),
            latitude: 42.5,
            longitude: 1.5,
            city: "c".into(),
            merged_group_id: format!("g{id}"),
        }))
        .unwrap()
    }

    #[test]
    fn empty_file_with_header() {
        let parsed = parse_cdr(HEADER.as_bytes(), &ParseOptions::default()).unwrap();
        assert!(parsed.records.is_empty());
        assert!(parsed.errors.is_empty());
    }

    #[test]
    fn single_row_round_trip() {
        let csv = format!("{HEADER}u1,100,160,T1,FR,Pixel\n");
        let parsed = parse_cdr(csv.as_bytes(), &ParseOptions::default()).unwrap();
        assert_eq!(
            parsed.records,
            vec![CdrRecord {
                user_id: "u1".into(),
                start_time: 100,
                end_time: 160,
                tower_id: "T1".into(),
                nationality: "FR".into(),
                device_model: Some("Pixel".into()),
            }]
        );
    }

    #[test]
    fn iso_timestamps_are_detected() {
        let csv = format!("{HEADER}u1,2015-05-04T08:10:00Z,2015-05-04 08:12:00,T1,ES,\n");
        let parsed = parse_cdr(csv.as_bytes(), &ParseOptions::default()).unwrap();
        let r = &parsed.records[0];
        assert_eq!(r.start_time, 1_430_727_000);
        assert_eq!(r.end_time, 1_430_727_120);
        assert_eq!(r.device_model, None);
    }

    #[test]
    fn reversed_interval_is_dropped_with_line_number() {
        let csv = format!("{HEADER}u1,100,160,T1,FR,\nu1,300,200,T2,FR,\n");
        let opts = ParseOptions {
            max_error_fraction: 0.5,
        };
        let parsed = parse_cdr(csv.as_bytes(), &opts).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.errors.len(), 1);
        assert_eq!(parsed.errors[0].line, 3);
    }

    #[test]
    fn error_fraction_above_threshold_is_fatal() {
        let csv = format!("{HEADER}u1,100,160,T1,FR,\nu1,abc,200,T2,FR,\n");
        let err = parse_cdr(csv.as_bytes(), &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::TooManyErrors { bad: 1, total: 2, .. }));
    }

    #[test]
    fn mixed_formats_within_column_are_row_errors() {
        let csv = format!("{HEADER}u1,100,160,T1,FR,\nu1,2015-05-04T08:10:00Z,1430727000,T2,FR,\n");
        let opts = ParseOptions {
            max_error_fraction: 1.0,
        };
        let parsed = parse_cdr(csv.as_bytes(), &opts).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.errors[0].line, 3);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let csv = "user_id,start_time,tower_id,nationality\n";
        let err = parse_cdr(csv.as_bytes(), &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(c) if c == "end_time"));
    }

    #[test]
    fn towers_validate_coordinates() {
        let csv = "tower_id,lat,lon,city,merged_group_id\nT1,42.5,1.5,AV,G1\nT2,95.0,1.5,AV,G1\n";
        assert!(matches!(parse_towers(csv.as_bytes()), Err(IngestError::InvalidTower { line: 3, .. })));
        let ok = "tower_id,lat,lon,city,merged_group_id\nT1,42.5,1.5,AV,G1\n";
        let reg = parse_towers(ok.as_bytes()).unwrap();
        assert_eq!(reg.merged_group("T1"), Some("G1"));
    }

    #[test]
    fn duplicates_collapse_into_one_visit() {
        let records = vec![rec("u1", 1, "A"), rec("u1", 2, "A"), rec("u1", 3, "B")];
        let (trajs, errs) = build_trajectories(&records, &registry(&["A", "B"]));
        assert!(errs.is_empty());
        let visits: Vec<_> = trajs[0].visits.iter().map(|v| (v.tower_id.as_str(), v.timestamp)).collect();
        assert_eq!(visits, vec![("A", 1), ("B", 3)]);
    }

    #[test]
    fn single_record_gives_length_one() {
        let (trajs, _) = build_trajectories(&[rec("u1", 5, "A")], &registry(&["A"]));
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].visits.len(), 1);
    }

    #[test]
    fn interleaved_users_are_separated_and_sorted() {
        let records = vec![rec("u2", 4, "B"), rec("u1", 3, "B"), rec("u2", 1, "A"), rec("u1", 2, "A")];
        let (trajs, _) = build_trajectories(&records, &registry(&["A", "B"]));
        assert_eq!(trajs.len(), 2);
        for t in &trajs {
            let ts: Vec<_> = t.visits.iter().map(|v| v.timestamp).collect();
            assert!(ts.windows(2).all(|w| w[0] <= w[1]));
        }
        assert_eq!(trajs[0].user_id, "u1");
        assert_eq!(trajs[0].visits[0].timestamp, 2);
        assert_eq!(trajs[1].visits[0].timestamp, 1);
    }

    #[test]
    fn unknown_tower_is_record_error() {
        let records = vec![rec("u1", 1, "A"), rec("u1", 2, "Z")];
        let (trajs, errs) = build_trajectories(&records, &registry(&["A"]));
        assert_eq!(trajs[0].visits.len(), 1);
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].index, 1);
    }

    #[test]
    fn profile_counts_visit_events() {
        let records = vec![rec("u1", 1, "A"), rec("u1", 3, "B"), rec("u1", 5, "A")];
        let (trajs, _) = build_trajectories(&records, &registry(&["A", "B"]));
        let profiles = build_profiles(&trajs);
        assert_eq!(profiles[0].visit_counts["A"], 2);
        assert_eq!(profiles[0].visit_counts["B"], 1);
        assert_eq!(profiles[0].total_visits(), trajs[0].visits.len() as u64);
    }

    #[test]
    fn identical_traces_give_identical_counts() {
        let records = vec![rec("u1", 1, "A"), rec("u1", 3, "B"), rec("u2", 1, "A"), rec("u2", 3, "B")];
        let (trajs, _) = build_trajectories(&records, &registry(&["A", "B"]));
        let p = build_profiles(&trajs);
        assert_eq!(p[0].visit_counts, p[1].visit_counts);
        assert_ne!(p[0].user_id, p[1].user_id);
    }

    fn profile(user: &str, nat: &str, towers: &[&str]) -> UserProfile {
        UserProfile {
            user_id: user.into(),
            nationality: nat.into(),
            group: UserGroup::from_nationality(nat),
            visit_counts: towers.iter().map(|t| (t.to_string(), 1)).collect(),
        }
    }

    #[test]
    fn tourist_filter() {
        let ps = vec![
            profile("a", "FR", &["A", "B"]),
            profile("b", "ES", &["A", "B"]),
            profile("c", "AD", &["A", "B"]),
        ];
        let kept: Vec<_> = filter_tourists(&ps, "AD", false).into_iter().map(|p| p.user_id).collect();
        assert_eq!(kept, vec!["a", "b"]);
        assert!(filter_tourists(&ps[2..], "AD", false).is_empty());
        let single = vec![profile("d", "FR", &["A"])];
        assert!(filter_tourists(&single, "AD", true).is_empty());
        assert_eq!(filter_tourists(&single, "AD", false).len(), 1);
    }

    #[test]
    fn group_tag_from_nationality() {
        assert_eq!(UserGroup::from_nationality("fr"), UserGroup::France);
        assert_eq!(UserGroup::from_nationality("ES"), UserGroup::Spain);
        assert_eq!(UserGroup::from_nationality("DE"), UserGroup::Other);
    }
}
