//! Parsing and validation of the four external data sources: hourly step
//! counts, participant demographics, monthly surveys, and the OxCGRT
//! stringency index.
//!
//! All parsers are header-mapped: a column map adapts arbitrary export
//! layouts to the internal schema. Bad rows are never silently dropped;
//! every input row ends up either in `accepted` or in `rejected` with its
//! line number and reason.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::YearMonth;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepRecord {
    pub participant_id: String,
    pub date: NaiveDate,
    pub hour: u8,
    pub steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    NonBinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Academic,
    Service,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeGroup {
    #[serde(rename = "25-35")]
    Young,
    #[serde(rename = "36-50")]
    Middle,
    #[serde(rename = "51-66")]
    Senior,
}

impl AgeGroup {
    /// Ordinal code used when age enters a model as a numeric covariate.
    pub fn ordinal(&self) -> f64 {
        match self {
            AgeGroup::Young => 0.0,
            AgeGroup::Middle => 1.0,
            AgeGroup::Senior => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Finland,
    EuropeOther,
    OutsideEurope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub participant_id: String,
    pub gender: Gender,
    pub role: Role,
    pub age_group: AgeGroup,
    pub origin: Origin,
    pub live_alone: bool,
    pub has_children: bool,
}

impl ParticipantProfile {
    /// Derived covariate: anyone whose origin is not Finland.
    pub fn migrant(&self) -> bool {
        self.origin != Origin::Finland
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pre,
    Early,
    Late,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Pre => write!(f, "pre"),
            Stage::Early => write!(f, "early"),
            Stage::Late => write!(f, "late"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub participant_id: String,
    pub year_month: YearMonth,
    pub onsite_pct: f64,
    pub leave_days: u32,
    pub walking_hours: Option<f64>,
    pub nonwalking_hours: Option<f64>,
    pub stage: Option<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringencyPoint {
    pub date: NaiveDate,
    pub index: f64,
}

/// A rejected input row, with its 1-based line number.
#[derive(Debug, Clone, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

/// Outcome of parsing one source: every input row ends up in exactly one
/// of the two buckets.
#[derive(Debug)]
pub struct ParseReport<T> {
    pub accepted: Vec<T>,
    pub rejected: Vec<RowError>,
    pub warnings: Vec<String>,
}

impl<T> ParseReport<T> {
    fn new() -> Self {
        ParseReport {
            accepted: Vec::new(),
            rejected: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn total_rows(&self) -> usize {
        self.accepted.len() + self.rejected.len()
    }

    /// Fails when anything was rejected; for callers that need clean input.
    pub fn into_strict(self) -> Result<Vec<T>> {
        if let Some(first) = self.rejected.first() {
            return Err(Error::invalid(format!(
                "{} rejected row(s); first at line {}: {}",
                self.rejected.len(),
                first.line,
                first.message
            )));
        }
        Ok(self.accepted)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StepColumns {
    pub participant_id: String,
    pub date: String,
    pub hour: String,
    pub steps: String,
}

impl Default for StepColumns {
    fn default() -> Self {
        StepColumns {
            participant_id: "participant_id".into(),
            date: "date".into(),
            hour: "hour".into(),
            steps: "steps".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StringencyColumns {
    pub date: String,
    pub region: String,
    pub index: String,
}

impl Default for StringencyColumns {
    fn default() -> Self {
        // OxCGRT export column names.
        StringencyColumns {
            date: "Date".into(),
            region: "CountryCode".into(),
            index: "StringencyIndex".into(),
        }
    }
}

struct HeaderIndex {
    positions: HashMap<String, usize>,
}

impl HeaderIndex {
    fn new(headers: &csv::StringRecord) -> Self {
        let positions = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        HeaderIndex { positions }
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.positions.get(name).copied().ok_or_else(|| {
            Error::invalid(format!(
                "missing column {name:?}; available: {:?}",
                self.positions.keys().collect::<Vec<_>>()
            ))
        })
    }
}

fn field(record: &csv::StringRecord, idx: usize) -> &str {
    record.get(idx).unwrap_or("").trim()
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// OxCGRT exports write dates as YYYYMMDD; also accept ISO-8601.
fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::from_str(s)
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y%m%d"))
        .map_err(|_| format!("bad date {s:?}"))
}

pub fn parse_step_records<R: Read>(
    source: R,
    columns: &StepColumns,
) -> Result<ParseReport<StepRecord>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let header = HeaderIndex::new(reader.headers()?);
    let (i_pid, i_date, i_hour, i_steps) = (
        header.require(&columns.participant_id)?,
        header.require(&columns.date)?,
        header.require(&columns.hour)?,
        header.require(&columns.steps)?,
    );

    let mut report = ParseReport::new();
    let mut seen: HashMap<(String, NaiveDate, u8), u64> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = line_of(&record);
        let parsed = (|| -> std::result::Result<StepRecord, String> {
            let participant_id = field(&record, i_pid).to_string();
            if participant_id.is_empty() {
                return Err("empty participant id".into());
            }
            let date = parse_date(field(&record, i_date))?;
            let hour: u8 = field(&record, i_hour)
                .parse()
                .map_err(|_| format!("bad hour {:?}", field(&record, i_hour)))?;
            if hour > 23 {
                return Err(format!("hour {hour} out of range [0, 23]"));
            }
            let steps: u64 = field(&record, i_steps)
                .parse()
                .map_err(|_| format!("bad steps {:?}", field(&record, i_steps)))?;
            Ok(StepRecord {
                participant_id,
                date,
                hour,
                steps,
            })
        })();
        match parsed {
            Ok(rec) => {
                let key = (rec.participant_id.clone(), rec.date, rec.hour);
                if let Some(&first_line) = seen.get(&key) {
                    report.rejected.push(RowError {
                        line,
                        message: format!(
                            "duplicate ({}, {}, {}): first seen at line {first_line}",
                            key.0, key.1, key.2
                        ),
                    });
                } else {
                    seen.insert(key, line);
                    report.accepted.push(rec);
                }
            }
            Err(message) => report.rejected.push(RowError { line, message }),
        }
    }
    Ok(report)
}

pub fn parse_stringency<R: Read>(
    source: R,
    columns: &StringencyColumns,
    region_filter: &str,
) -> Result<ParseReport<StringencyPoint>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let header = HeaderIndex::new(reader.headers()?);
    let (i_date, i_region, i_index) = (
        header.require(&columns.date)?,
        header.require(&columns.region)?,
        header.require(&columns.index)?,
    );

    let mut report = ParseReport::new();
    let mut seen_dates: HashMap<NaiveDate, u64> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        if !field(&record, i_region).eq_ignore_ascii_case(region_filter) {
            continue;
        }
        let line = line_of(&record);
        let parsed = (|| -> std::result::Result<StringencyPoint, String> {
            let date = parse_date(field(&record, i_date))?;
            let raw = field(&record, i_index);
            if raw.is_empty() {
                return Err("empty stringency index".into());
            }
            let index: f64 = raw.parse().map_err(|_| format!("bad index {raw:?}"))?;
            if !(0.0..=100.0).contains(&index) {
                return Err(format!("index {index} out of range [0, 100]"));
            }
            Ok(StringencyPoint { date, index })
        })();
        match parsed {
            Ok(point) => {
                if let Some(&first_line) = seen_dates.get(&point.date) {
                    report.rejected.push(RowError {
                        line,
                        message: format!(
                            "duplicate date {} for region {region_filter}: first seen at line {first_line}",
                            point.date
                        ),
                    });
                } else {
                    seen_dates.insert(point.date, line);
                    report.accepted.push(point);
                }
            }
            Err(message) => report.rejected.push(RowError { line, message }),
        }
    }
    report.accepted.sort_by_key(|p| p.date);
    if report.accepted.is_empty() && report.rejected.is_empty() {
        report
            .warnings
            .push(format!("no rows matched region {region_filter:?}"));
    }
    Ok(report)
}

fn parse_enum_label<T: Copy>(
    raw: &str,
    labels: &[(&str, T)],
    what: &str,
) -> std::result::Result<T, String> {
    let canon = raw.trim().to_ascii_lowercase().replace([' ', '-', '–'], "_");
    labels
        .iter()
        .find(|(label, _)| *label == canon)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            format!(
                "unknown {what} {raw:?}; accepted: {}",
                labels
                    .iter()
                    .map(|(l, _)| *l)
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
}

fn parse_bool(raw: &str, what: &str) -> std::result::Result<bool, String> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("bad {what} {raw:?}; accepted: true, false")),
    }
}

pub fn parse_demographics<R: Read>(source: R) -> Result<ParseReport<ParticipantProfile>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let header = HeaderIndex::new(reader.headers()?);
    let idx = [
        header.require("participant_id")?,
        header.require("gender")?,
        header.require("role")?,
        header.require("age_group")?,
        header.require("origin")?,
        header.require("live_alone")?,
        header.require("has_children")?,
    ];

    let mut report = ParseReport::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = line_of(&record);
        let parsed = (|| -> std::result::Result<ParticipantProfile, String> {
            let participant_id = field(&record, idx[0]).to_string();
            if participant_id.is_empty() {
                return Err("empty participant id".into());
            }
            Ok(ParticipantProfile {
                participant_id,
                gender: parse_enum_label(
                    field(&record, idx[1]),
                    &[
                        ("female", Gender::Female),
                        ("male", Gender::Male),
                        ("non_binary", Gender::NonBinary),
                        ("nonbinary", Gender::NonBinary),
                    ],
                    "gender",
                )?,
                role: parse_enum_label(
                    field(&record, idx[2]),
                    &[("academic", Role::Academic), ("service", Role::Service)],
                    "role",
                )?,
                age_group: parse_enum_label(
                    field(&record, idx[3]),
                    &[
                        ("25_35", AgeGroup::Young),
                        ("36_50", AgeGroup::Middle),
                        ("51_66", AgeGroup::Senior),
                    ],
                    "age_group",
                )?,
                origin: parse_enum_label(
                    field(&record, idx[4]),
                    &[
                        ("finland", Origin::Finland),
                        ("europe_other", Origin::EuropeOther),
                        ("outside_europe", Origin::OutsideEurope),
                    ],
                    "origin",
                )?,
                live_alone: parse_bool(field(&record, idx[5]), "live_alone")?,
                has_children: parse_bool(field(&record, idx[6]), "has_children")?,
            })
        })();
        match parsed {
            Ok(profile) => {
                if let Some(&first_line) = seen.get(&profile.participant_id) {
                    report.rejected.push(RowError {
                        line,
                        message: format!(
                            "duplicate participant {}: first seen at line {first_line}",
                            profile.participant_id
                        ),
                    });
                } else {
                    seen.insert(profile.participant_id.clone(), line);
                    report.accepted.push(profile);
                }
            }
            Err(message) => report.rejected.push(RowError { line, message }),
        }
    }
    Ok(report)
}

pub fn parse_survey<R: Read>(source: R) -> Result<ParseReport<SurveyResponse>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let header = HeaderIndex::new(reader.headers()?);
    let i_pid = header.require("participant_id")?;
    let i_ym = header.require("year_month")?;
    let i_onsite = header.require("onsite_pct")?;
    let i_leave = header.require("leave_days")?;
    let i_walk = header.positions.get("walking_hours").copied();
    let i_nonwalk = header.positions.get("nonwalking_hours").copied();
    let i_stage = header.positions.get("stage").copied();

    let opt_f64 = |record: &csv::StringRecord, idx: Option<usize>| -> std::result::Result<Option<f64>, String> {
        match idx {
            Some(i) if !field(record, i).is_empty() => field(record, i)
                .parse()
                .map(Some)
                .map_err(|_| format!("bad number {:?}", field(record, i))),
            _ => Ok(None),
        }
    };

    let mut report = ParseReport::new();
    for record in reader.records() {
        let record = record?;
        let line = line_of(&record);
        let parsed = (|| -> std::result::Result<SurveyResponse, String> {
            let participant_id = field(&record, i_pid).to_string();
            if participant_id.is_empty() {
                return Err("empty participant id".into());
            }
            let year_month: YearMonth = field(&record, i_ym)
                .parse()
                .map_err(|e: Error| e.to_string())?;
            let onsite_pct: f64 = field(&record, i_onsite)
                .parse()
                .map_err(|_| format!("bad onsite_pct {:?}", field(&record, i_onsite)))?;
            if !(0.0..=100.0).contains(&onsite_pct) {
                return Err(format!("onsite_pct {onsite_pct} out of range [0, 100]"));
            }
            let leave_days: u32 = field(&record, i_leave)
                .parse()
                .map_err(|_| format!("bad leave_days {:?}", field(&record, i_leave)))?;
            if leave_days > year_month.days_in_month() {
                return Err(format!(
                    "leave_days {leave_days} exceeds days in {year_month}"
                ));
            }
            let stage = match i_stage.map(|i| field(&record, i)).filter(|s| !s.is_empty()) {
                Some(raw) => Some(parse_enum_label(
                    raw,
                    &[
                        ("pre", Stage::Pre),
                        ("early", Stage::Early),
                        ("late", Stage::Late),
                    ],
                    "stage",
                )?),
                None => None,
            };
            Ok(SurveyResponse {
                participant_id,
                year_month,
                onsite_pct,
                leave_days,
                walking_hours: opt_f64(&record, i_walk)?,
                nonwalking_hours: opt_f64(&record, i_nonwalk)?,
                stage,
            })
        })();
        match parsed {
            Ok(resp) => report.accepted.push(resp),
            Err(message) => report.rejected.push(RowError { line, message }),
        }
    }
    Ok(report)
}

pub fn write_step_csv<W: Write>(mut w: W, records: &[StepRecord]) -> Result<()> {
    writeln!(w, "participant_id,date,hour,steps")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.participant_id, r.date, r.hour, r.steps)?;
    }
    Ok(())
}

pub fn write_demographics_csv<W: Write>(mut w: W, profiles: &[ParticipantProfile]) -> Result<()> {
    writeln!(
        w,
        "participant_id,gender,role,age_group,origin,live_alone,has_children"
    )?;
    for p in profiles {
        let gender = match p.gender {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::NonBinary => "non_binary",
        };
        let role = match p.role {
            Role::Academic => "academic",
            Role::Service => "service",
        };
        let age = match p.age_group {
            AgeGroup::Young => "25-35",
            AgeGroup::Middle => "36-50",
            AgeGroup::Senior => "51-66",
        };
        let origin = match p.origin {
            Origin::Finland => "finland",
            Origin::EuropeOther => "europe_other",
            Origin::OutsideEurope => "outside_europe",
        };
        writeln!(
            w,
            "{},{gender},{role},{age},{origin},{},{}",
            p.participant_id, p.live_alone, p.has_children
        )?;
    }
    Ok(())
}

pub fn write_survey_csv<W: Write>(mut w: W, responses: &[SurveyResponse]) -> Result<()> {
    writeln!(
        w,
        "participant_id,year_month,onsite_pct,leave_days,walking_hours,nonwalking_hours,stage"
    )?;
    for r in responses {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let stage = match r.stage {
            Some(Stage::Pre) => "pre",
            Some(Stage::Early) => "early",
            Some(Stage::Late) => "late",
            None => "",
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{stage}",
            r.participant_id,
            r.year_month,
            r.onsite_pct,
            r.leave_days,
            opt(r.walking_hours),
            opt(r.nonwalking_hours),
        )?;
    }
    Ok(())
}

pub fn write_stringency_csv<W: Write>(mut w: W, points: &[StringencyPoint], region: &str) -> Result<()> {
    writeln!(w, "Date,CountryCode,StringencyIndex")?;
    for p in points {
        writeln!(w, "{},{region},{}", p.date, p.index)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_well_formed_step_rows() {
        let csv = "participant_id,date,hour,steps\np1,2021-07-01,9,1200\n";
        let report = parse_step_records(csv.as_bytes(), &StepColumns::default()).unwrap();
        assert_eq!(report.rejected.len(), 0);
        assert_eq!(
            report.accepted,
            vec![StepRecord {
                participant_id: "p1".into(),
                date: NaiveDate::from_ymd_opt(2021, 7, 1).unwrap(),
                hour: 9,
                steps: 1200,
            }]
        );
    }

    #[test]
    fn hour_24_is_a_row_error_with_line_number() {
        let csv = "participant_id,date,hour,steps\np1,2021-07-01,24,100\n";
        let report = parse_step_records(csv.as_bytes(), &StepColumns::default()).unwrap();
        assert_eq!(report.accepted.len(), 0);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].line, 2);
        assert!(report.rejected[0].message.contains("out of range"));
    }

    #[test]
    fn duplicate_key_names_both_rows() {
        let csv = "participant_id,date,hour,steps\n\
                   p1,2021-07-01,9,1200\n\
                   p1,2021-07-01,9,900\n";
        let report = parse_step_records(csv.as_bytes(), &StepColumns::default()).unwrap();
        assert_eq!(report.accepted.len(), 1);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].line, 3);
        assert!(report.rejected[0].message.contains("line 2"));
    }

    #[test]
    fn accepted_plus_rejected_covers_all_rows() {
        let csv = "participant_id,date,hour,steps\n\
                   p1,2021-07-01,9,1200\n\
                   p1,not-a-date,9,1200\n\
                   p1,2021-07-01,25,0\n\
                   p2,2021-07-01,9,xyz\n";
        let report = parse_step_records(csv.as_bytes(), &StepColumns::default()).unwrap();
        assert_eq!(report.total_rows(), 4);
        assert_eq!(report.accepted.len(), 1);
    }

    #[test]
    fn stringency_filters_region_and_sorts() {
        let csv = "Date,CountryCode,StringencyIndex\n\
                   20210802,SWE,50\n\
                   20210802,FIN,40.28\n\
                   20210801,FIN,37.96\n";
        let report =
            parse_stringency(csv.as_bytes(), &StringencyColumns::default(), "FIN").unwrap();
        assert_eq!(report.accepted.len(), 2);
        assert_eq!(
            report.accepted[0].date,
            NaiveDate::from_ymd_opt(2021, 8, 1).unwrap()
        );
        assert!((report.accepted[0].index - 37.96).abs() < 1e-12);
    }

    #[test]
    fn stringency_above_100_is_a_range_error() {
        let csv = "Date,CountryCode,StringencyIndex\n20210801,FIN,101\n";
        let report =
            parse_stringency(csv.as_bytes(), &StringencyColumns::default(), "FIN").unwrap();
        assert_eq!(report.rejected.len(), 1);
        assert!(report.rejected[0].message.contains("out of range"));
    }

    #[test]
    fn unknown_region_yields_empty_series_and_warning() {
        let csv = "Date,CountryCode,StringencyIndex\n20210801,FIN,37.96\n";
        let report =
            parse_stringency(csv.as_bytes(), &StringencyColumns::default(), "XXX").unwrap();
        assert!(report.accepted.is_empty());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn region_filter_is_idempotent() {
        let csv = "Date,CountryCode,StringencyIndex\n\
                   20210801,FIN,37.96\n20210802,FIN,40.28\n20210801,SWE,55\n";
        let first =
            parse_stringency(csv.as_bytes(), &StringencyColumns::default(), "FIN").unwrap();
        let mut buf = Vec::new();
        write_stringency_csv(&mut buf, &first.accepted, "FIN").unwrap();
        let second =
            parse_stringency(buf.as_slice(), &StringencyColumns::default(), "FIN").unwrap();
        assert_eq!(first.accepted, second.accepted);
    }

    #[test]
    fn demographics_canonicalizes_case_and_derives_migrant() {
        let csv = "participant_id,gender,role,age_group,origin,live_alone,has_children\n\
                   p1,Female,Academic,25-35,Finland,false,true\n\
                   p2,male,service,51-66,outside_europe,TRUE,no\n";
        let report = parse_demographics(csv.as_bytes()).unwrap();
        assert_eq!(report.rejected.len(), 0);
        assert_eq!(report.accepted[0].gender, Gender::Female);
        assert!(!report.accepted[0].migrant());
        assert!(report.accepted[1].migrant());
        assert!(report.accepted[1].live_alone);
        assert!(!report.accepted[1].has_children);
    }

    #[test]
    fn unknown_enum_label_lists_accepted_values() {
        let csv = "participant_id,gender,role,age_group,origin,live_alone,has_children\n\
                   p1,other,academic,25-35,finland,false,true\n";
        let report = parse_demographics(csv.as_bytes()).unwrap();
        assert_eq!(report.rejected.len(), 1);
        assert!(report.rejected[0].message.contains("female"));
        assert!(report.rejected[0].message.contains("non_binary"));
    }

    #[test]
    fn survey_range_checks() {
        let csv = "participant_id,year_month,onsite_pct,leave_days\n\
                   p1,2021-07,120,0\n\
                   p1,2021-02,50,29\n\
                   p1,2021-07,50,3\n";
        let report = parse_survey(csv.as_bytes()).unwrap();
        assert_eq!(report.accepted.len(), 1);
        assert_eq!(report.rejected.len(), 2);
        assert!(report.rejected[0].message.contains("out of range"));
        assert!(report.rejected[1].message.contains("exceeds days"));
    }

    #[test]
    fn survey_optional_fields_roundtrip() {
        let rows = vec![SurveyResponse {
            participant_id: "p9".into(),
            year_month: "2021-09".parse().unwrap(),
            onsite_pct: 42.5,
            leave_days: 2,
            walking_hours: Some(3.5),
            nonwalking_hours: None,
            stage: Some(Stage::Early),
        }];
        let mut buf = Vec::new();
        write_survey_csv(&mut buf, &rows).unwrap();
        let back = parse_survey(buf.as_slice()).unwrap().into_strict().unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn step_csv_roundtrip() {
        let records = vec![
            StepRecord {
                participant_id: "p1".into(),
                date: NaiveDate::from_ymd_opt(2021, 7, 1).unwrap(),
                hour: 0,
                steps: 0,
            },
            StepRecord {
                participant_id: "p1".into(),
                date: NaiveDate::from_ymd_opt(2021, 7, 1).unwrap(),
                hour: 23,
                steps: 9999,
            },
        ];
        let mut buf = Vec::new();
        write_step_csv(&mut buf, &records).unwrap();
        let back = parse_step_records(buf.as_slice(), &StepColumns::default())
            .unwrap()
            .into_strict()
            .unwrap();
        assert_eq!(back, records);
    }
}
